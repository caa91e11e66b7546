use std::collections::BTreeMap;
use std::fs;
use std::time::Instant;

use serde::Serialize;
use shipstab::continuation::{
    circling_equilibria, continue_orbits, continue_periodic, pitchfork_diagram, rotation_orbit,
    track_hopf_locus, Branch, BranchPoint, ContinuationOptions, FreeParam,
};
use shipstab::criticality::{pitchfork_coefficients, sigma_on_boundary, sigma_sweep};
use shipstab::dynamics::{
    classify_motion, integrate_tracked, integrate_with, EarthTrack, IntegratorOptions, Trajectory,
};
use shipstab::equilibrium::{solve_u0, u0_vs_dp};
use shipstab::params::parse_config_onto;
use shipstab::stability::{boundary_coeffs, classify_x_t, linearize, stability_map};
use shipstab::{ControlGains, ControlLaw, Ship, ShipParams, State4};

use crate::output::{OutDir, Plot, RunManifest, MANIFEST_SCHEMA};
use crate::{Cli, CliError, Command, ContinueArgs, Global, Grid, SimArgs, Start};

/// Everything a command needs besides its own flags.
struct Ctx {
    global: Global,
    params: ShipParams,
    ship: Ship,
    u0: f64,
    out: OutDir,
    tolerances: BTreeMap<String, f64>,
}

impl Ctx {
    fn tol(&mut self, name: &str, value: f64) {
        self.tolerances.insert(name.to_string(), value);
    }

    fn integrator(&mut self, tol: f64) -> Result<IntegratorOptions, CliError> {
        if self.global.fixed_step {
            let h = self.global.step;
            if !(h > 0.0 && h.is_finite()) {
                return Err(CliError::Usage(format!("--step must be positive, got {h}")));
            }
            self.tol("fixed_step", h);
            Ok(IntegratorOptions::fixed(h))
        } else {
            self.tol("integration_tol", tol);
            Ok(IntegratorOptions::with_tol(tol)?)
        }
    }
}

fn resolve_params(global: &Global) -> Result<ShipParams, CliError> {
    let mut params = ShipParams::htc();
    if let Some(path) = &global.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        params = parse_config_onto(params, &text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    if let Some(dp) = global.dp {
        params.propeller.dp = dp;
    }
    if let Some(x) = global.x_t {
        params.geometry.x_t = x;
    }
    params.validate()?;
    Ok(params)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest, &cli.global);
    }
    let params = resolve_params(&cli.global)?;
    execute(cli, params, args)
}

/// Re-run a manifest's command with its resolved parameters.
fn replay(path: &std::path::Path, global: &Global) -> Result<(), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let m: RunManifest = serde_json::from_str(&text)?;
    if m.schema_version != MANIFEST_SCHEMA {
        return Err(CliError::Usage(format!(
            "manifest schema {} is not supported (expected {MANIFEST_SCHEMA})",
            m.schema_version
        )));
    }
    let argv = std::iter::once("shipstab".to_string()).chain(m.args.iter().cloned());
    let mut cli = <Cli as clap::Parser>::try_parse_from(argv)
        .map_err(|e| CliError::Usage(format!("manifest arguments: {e}")))?;
    if matches!(cli.command, Command::Replay { .. }) {
        return Err(CliError::Usage("manifest records a replay".into()));
    }
    // parameters come from the manifest, the output directory from this call
    cli.global.config = None;
    cli.global.dp = None;
    cli.global.x_t = None;
    cli.global.out = global.out.clone();
    m.params.validate()?;
    execute(cli, m.params, m.args)
}

fn execute(cli: Cli, params: ShipParams, args: Vec<String>) -> Result<(), CliError> {
    if let Some(n) = cli.global.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // a pool may already exist when replaying inside one process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let start = Instant::now();
    let ship = Ship::new(params)?;
    let eq = solve_u0(&ship)?;
    let out = OutDir::create(&cli.global.out, cli.global.plot)?;
    let mut ctx = Ctx {
        global: cli.global.clone(),
        params,
        ship,
        u0: eq.u0,
        out,
        tolerances: BTreeMap::new(),
    };
    let name = match cli.command {
        Command::Equilibrium { dp_sweep } => equilibrium(&mut ctx, dp_sweep)?,
        Command::Boundary { eps_r, range } => boundary(&mut ctx, eps_r, range)?,
        Command::Map { eps_r, eps_psi } => map(&mut ctx, eps_r, eps_psi)?,
        Command::ClassifyXt { sweep } => classify(&mut ctx, sweep)?,
        Command::Sigma { range } => sigma(&mut ctx, range)?,
        Command::Pitchfork {
            interval,
            ds,
            ds_max,
        } => pitchfork(&mut ctx, interval.map(|i| (i.from, i.to)), ds, ds_max)?,
        Command::Simulate(sim) => simulate(&mut ctx, &sim)?,
        Command::Track { sim, constant } => track(&mut ctx, &sim, constant)?,
        Command::Continue(c) => continuation(&mut ctx, &c)?,
        Command::Replay { .. } => unreachable!("handled before execution"),
    };
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA,
        tool: env!("CARGO_PKG_NAME").to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: name.to_string(),
        args,
        params: ctx.params,
        tolerances: ctx.tolerances,
        outputs: Vec::new(),
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    let path = ctx.out.finish(manifest)?;
    println!("manifest: {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------

#[derive(Serialize)]
struct EquilibriumRow {
    dp: f64,
    u0: f64,
    tau_at_u0: f64,
    dtau_du: f64,
    residual: f64,
    uniqueness_holds: bool,
}

fn equilibrium(ctx: &mut Ctx, sweep: Option<Grid>) -> Result<&'static str, CliError> {
    let eq = solve_u0(&ctx.ship)?;
    ctx.tol("residual", 1e-12);
    println!("u0 = {:.6} m/s (D_p = {})", eq.u0, ctx.params.propeller.dp);
    let row = EquilibriumRow {
        dp: ctx.params.propeller.dp,
        u0: eq.u0,
        tau_at_u0: eq.tau_at_u0,
        dtau_du: eq.dtau_du,
        residual: eq.residual,
        uniqueness_holds: eq.uniqueness_holds,
    };
    ctx.out.csv("equilibrium.csv", &[row], None)?;
    if let Some(g) = sweep {
        let rows = u0_vs_dp(&ctx.params, &g.values())?;
        let plot = Plot {
            x: "dp",
            y: &["u0"],
            points: false,
        };
        ctx.out.csv("u0_vs_dp.csv", &rows, Some(plot))?;
    }
    Ok("equilibrium")
}

#[derive(Serialize)]
struct BoundaryRow {
    eps_r: f64,
    eps_psi: f64,
    /// Independent check: bisection on the sign of the leading eigenvalue.
    bisection: Option<f64>,
}

/// `eps_psi` where the linear spectrum changes stability at fixed `eps_r`,
/// from eigenvalues only.
fn bisect_boundary(ship: &Ship, u0: f64, eps_r: f64) -> Option<f64> {
    let re = |ep: f64| linearize(ship, &ControlGains::linear(eps_r, ep), u0).max_real_part();
    let lo0 = 1e-9;
    if re(lo0) <= 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (lo0, 1.0);
    while re(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return None;
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if re(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn eps_r1(ctx: &Ctx) -> Result<f64, CliError> {
    classify_x_t(&ctx.ship, ctx.u0, ctx.ship.x_t())
        .eps_r1
        .ok_or_else(|| {
            CliError::Solver(shipstab::Error::DegeneratePitchfork(
                "boundary has no eps_psi = 0 crossing".into(),
            ))
        })
}

fn boundary(ctx: &mut Ctx, eps_r: Vec<f64>, range: Option<Grid>) -> Result<&'static str, CliError> {
    let grid = if !eps_r.is_empty() {
        eps_r
    } else if let Some(g) = range {
        g.values()
    } else {
        Grid {
            from: 0.0,
            to: eps_r1(ctx)?,
            n: 201,
        }
        .values()
    };
    let k = boundary_coeffs(&ctx.ship, ctx.u0);
    let mut rows = Vec::with_capacity(grid.len());
    for er in grid {
        let eps_psi = k.eps_psi(er)?;
        let bisection = bisect_boundary(&ctx.ship, ctx.u0, er);
        rows.push(BoundaryRow {
            eps_r: er,
            eps_psi,
            bisection,
        });
    }
    if let [only] = rows.as_slice() {
        let check = only
            .bisection
            .map_or("n/a".to_string(), |b| format!("{b:.6}"));
        println!(
            "eps_psi({}) = {:.6} (bisection {check})",
            only.eps_r, only.eps_psi
        );
    } else {
        println!("{} boundary points", rows.len());
    }
    let plot = Plot {
        x: "eps_r",
        y: &["eps_psi"],
        points: false,
    };
    ctx.out.csv("boundary.csv", &rows, Some(plot))?;
    Ok("boundary")
}

#[derive(Serialize)]
struct BoundaryPoint {
    eps_r: f64,
    eps_psi: f64,
}

fn map(ctx: &mut Ctx, eps_r: Grid, eps_psi: Grid) -> Result<&'static str, CliError> {
    let m = stability_map(&ctx.ship, ctx.u0, &eps_r.values(), &eps_psi.values());
    let stable = m
        .cells
        .iter()
        .filter(|c| c.verdict == shipstab::stability::Verdict::Stable)
        .count();
    println!("{} cells, {stable} stable", m.cells.len());
    let plot = Plot {
        x: "eps_r",
        y: &["eps_psi"],
        points: true,
    };
    ctx.out.csv("map.csv", &m.cells, Some(plot))?;
    let pts: Vec<BoundaryPoint> = m
        .boundary
        .iter()
        .map(|&(eps_r, eps_psi)| BoundaryPoint { eps_r, eps_psi })
        .collect();
    let plot = Plot {
        x: "eps_r",
        y: &["eps_psi"],
        points: false,
    };
    ctx.out.csv("map_boundary.csv", &pts, Some(plot))?;
    Ok("map")
}

#[derive(Serialize)]
struct XtRow {
    x_t: f64,
    case: String,
    eps_r1: Option<f64>,
    eps_r2: Option<f64>,
    eps_r_star: Option<f64>,
    window_lo: Option<f64>,
    window_hi: Option<f64>,
}

fn classify(ctx: &mut Ctx, sweep: Option<Grid>) -> Result<&'static str, CliError> {
    let c = classify_x_t(&ctx.ship, ctx.u0, ctx.ship.x_t());
    println!("x_T = {}: {}", c.x_t, c.case);
    if let Some((lo, hi)) = c.stable_window() {
        println!("stable eps_r window at small eps_psi: ({lo:.4}, {hi:.4})");
    }
    ctx.out.json("classification.json", &c)?;
    if let Some(g) = sweep {
        let rows: Vec<XtRow> = g
            .values()
            .into_iter()
            .map(|x| {
                let k = classify_x_t(&ctx.ship, ctx.u0, x);
                let w = k.stable_window();
                XtRow {
                    x_t: x,
                    case: k.case.to_string(),
                    eps_r1: k.eps_r1,
                    eps_r2: k.eps_r2,
                    eps_r_star: k.eps_r_star,
                    window_lo: w.map(|w| w.0),
                    window_hi: w.map(|w| w.1),
                }
            })
            .collect();
        let plot = Plot {
            x: "x_t",
            y: &["eps_r1", "eps_r2", "eps_r_star"],
            points: false,
        };
        ctx.out.csv("xt_sweep.csv", &rows, Some(plot))?;
    }
    Ok("classify-xT")
}

fn sigma(ctx: &mut Ctx, range: Option<Grid>) -> Result<&'static str, CliError> {
    let grid = match range {
        Some(g) => g.values(),
        None => (1..=eps_r1(ctx)?.floor() as u32).map(f64::from).collect(),
    };
    let mut rows = Vec::with_capacity(grid.len());
    for (er, r) in grid.iter().zip(sigma_sweep(&ctx.ship, ctx.u0, &grid)) {
        rows.push(r.map_err(|e| {
            CliError::Solver(shipstab::Error::Convergence(format!("eps_r {er}: {e}")))
        })?);
    }
    let negative = rows.iter().filter(|p| p.sigma < 0.0).count();
    println!(
        "{negative} of {} boundary points supercritical (Sigma < 0)",
        rows.len()
    );
    let plot = Plot {
        x: "eps_r",
        y: &["sigma"],
        points: false,
    };
    ctx.out.csv("sigma.csv", &rows, Some(plot))?;
    Ok("sigma")
}

#[derive(Serialize)]
struct EquilibriumPointRow {
    branch: &'static str,
    eps_r: f64,
    u: f64,
    v: f64,
    r_deg_s: f64,
    stable: bool,
    event: String,
}

fn pitchfork(
    ctx: &mut Ctx,
    interval: Option<(f64, f64)>,
    ds: f64,
    ds_max: f64,
) -> Result<&'static str, CliError> {
    let p = pitchfork_coefficients(&ctx.ship, ctx.u0)?;
    println!(
        "eps_r1 = {:.6}, coef_lin = {:.6e}, coef_quad = {:.6e}: {}",
        p.eps_r1, p.coef_lin, p.coef_quad, p.criticality
    );
    ctx.out.json("pitchfork.json", &p)?;
    let (lo, hi) = interval.unwrap_or((0.75 * p.eps_r1, 1.05 * p.eps_r1));
    let opts = ContinuationOptions {
        ds,
        ds_max,
        ..Default::default()
    };
    ctx.tol("newton_tol", opts.newton_tol);
    let d = pitchfork_diagram(&ctx.ship, ctx.global.law, ctx.u0, lo, hi, &opts)?;
    let lpp = ctx.ship.lpp();
    let mut rows = Vec::new();
    for (name, b) in [
        ("trivial", &d.trivial),
        ("plus", &d.plus),
        ("minus", &d.minus),
    ] {
        for pt in &b.points {
            let s = pt.state().unwrap_or_default();
            rows.push(EquilibriumPointRow {
                branch: name,
                eps_r: pt.param,
                u: s.u,
                v: s.v,
                r_deg_s: (s.r / lpp).to_degrees(),
                stable: pt.stable,
                event: pt.event.to_string(),
            });
        }
    }
    let plot = Plot {
        x: "eps_r",
        y: &["v"],
        points: true,
    };
    ctx.out.csv("pitchfork_branches.csv", &rows, Some(plot))?;
    Ok("pitchfork")
}

#[derive(Serialize)]
struct TrajectoryRow {
    t: f64,
    u: f64,
    v: f64,
    r_deg_s: f64,
    psi_deg: f64,
    eta_deg: f64,
}

fn start_state(ctx: &Ctx, sim: &SimArgs) -> Result<State4, CliError> {
    let lpp = ctx.ship.lpp();
    match sim.state.as_deref() {
        Some(&[u, v, r, psi]) => Ok(State4::new(
            u,
            v,
            lpp * r.to_radians(),
            lpp * psi.to_radians(),
        )),
        Some(other) => Err(CliError::Usage(format!(
            "--state needs 4 values, got {}",
            other.len()
        ))),
        None => {
            let d = sim.perturb;
            Ok(State4::new(ctx.u0, d, d, d))
        }
    }
}

fn simulate_run(
    ctx: &mut Ctx,
    sim: &SimArgs,
) -> Result<(ControlGains, State4, IntegratorOptions), CliError> {
    if !(sim.t_end > 0.0 && sim.t_end.is_finite()) {
        return Err(CliError::Usage(format!(
            "--t-end must be positive, got {}",
            sim.t_end
        )));
    }
    let gains = ControlGains::new(sim.eps_r, sim.eps_psi, ctx.global.law);
    let s0 = start_state(ctx, sim)?;
    let opts = ctx.integrator(sim.tol)?;
    Ok((gains, s0, opts))
}

fn trajectory_rows(traj: &Trajectory) -> Vec<TrajectoryRow> {
    let lpp = traj.lpp;
    traj.times()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let s = traj.state(i);
            TrajectoryRow {
                t,
                u: s.u,
                v: s.v,
                r_deg_s: (s.r / lpp).to_degrees(),
                psi_deg: (s.psi / lpp).to_degrees(),
                eta_deg: traj.eta_deg(&s),
            }
        })
        .collect()
}

fn simulate(ctx: &mut Ctx, sim: &SimArgs) -> Result<&'static str, CliError> {
    let (gains, s0, opts) = simulate_run(ctx, sim)?;
    let traj = integrate_with(&ctx.ship, &gains, &s0, sim.t_end, &opts)?;
    let report = classify_motion(&traj);
    println!(
        "{} (final distance {:.3e}, envelope ratio {:.3}, turns {:.3})",
        report.motion, report.final_distance, report.envelope_ratio, report.turns
    );
    let plot = Plot {
        x: "t",
        y: &["v", "r_deg_s", "eta_deg"],
        points: false,
    };
    ctx.out
        .csv("trajectory.csv", &trajectory_rows(&traj), Some(plot))?;
    ctx.out.json("motion.json", &report)?;
    Ok("simulate")
}

#[derive(Serialize)]
struct TrackRow {
    t: f64,
    x: f64,
    y: f64,
    heading_deg: f64,
    eta_deg: f64,
}

#[derive(Serialize)]
struct TrackReport {
    self_intersections: usize,
    /// Radius from the body velocities, `sqrt(u^2 + v^2) / |r|`.
    radius_formula: Option<f64>,
    /// Least-squares circle through the (tail of the) track.
    radius_fit: Option<f64>,
}

fn track_rows(t: &EarthTrack) -> Vec<TrackRow> {
    (0..t.times.len())
        .map(|i| TrackRow {
            t: t.times[i],
            x: t.x[i],
            y: t.y[i],
            heading_deg: t.heading[i].to_degrees(),
            eta_deg: t.eta_deg[i],
        })
        .collect()
}

/// Track of constant body velocities `(u, v)` turning at `omega` rad/s.
fn constant_track(u: f64, v: f64, omega: f64, t_end: f64, n: usize) -> EarthTrack {
    let mut tr = EarthTrack {
        times: Vec::with_capacity(n + 1),
        x: Vec::with_capacity(n + 1),
        y: Vec::with_capacity(n + 1),
        heading: Vec::with_capacity(n + 1),
        eta_deg: vec![0.0; n + 1],
    };
    for i in 0..=n {
        let t = t_end * i as f64 / n as f64;
        let th = omega * t;
        // integral of (u + i v) e^{i omega s} over [0, t]
        let (x, y) = if omega == 0.0 {
            (u * t, v * t)
        } else {
            let (s, c) = th.sin_cos();
            (
                (u * s + v * (c - 1.0)) / omega,
                (u * (1.0 - c) + v * s) / omega,
            )
        };
        tr.times.push(t);
        tr.x.push(x);
        tr.y.push(y);
        tr.heading.push(th);
    }
    tr
}

fn tail(t: &EarthTrack, from: f64) -> EarthTrack {
    let k = t.times.partition_point(|&s| s < from);
    EarthTrack {
        times: t.times[k..].to_vec(),
        x: t.x[k..].to_vec(),
        y: t.y[k..].to_vec(),
        heading: t.heading[k..].to_vec(),
        eta_deg: t.eta_deg[k..].to_vec(),
    }
}

fn track(
    ctx: &mut Ctx,
    sim: &SimArgs,
    constant: Option<Vec<f64>>,
) -> Result<&'static str, CliError> {
    let (tr, report) = if let Some(c) = constant {
        let &[u, v, r] = c.as_slice() else {
            return Err(CliError::Usage(format!(
                "--constant needs 3 values, got {}",
                c.len()
            )));
        };
        let omega = r.to_radians();
        let t_end = if omega == 0.0 {
            sim.t_end
        } else {
            2.0 * std::f64::consts::PI / omega.abs()
        };
        let tr = constant_track(u, v, omega, t_end, 720);
        let report = TrackReport {
            self_intersections: tr.self_intersections(0.0, t_end),
            radius_formula: (omega != 0.0).then(|| u.hypot(v) / omega.abs()),
            radius_fit: (omega != 0.0)
                .then(|| tr.fit_circle())
                .flatten()
                .map(|c| c.2),
        };
        (tr, report)
    } else {
        let (gains, s0, opts) = simulate_run(ctx, sim)?;
        let (traj, tr) = integrate_tracked(&ctx.ship, &gains, &s0, [0.0, 0.0], sim.t_end, &opts)?;
        let last = traj.last();
        let motion = classify_motion(&traj);
        println!("{}", motion.motion);
        let circling = motion.motion == shipstab::dynamics::Motion::Circling;
        let lpp = ctx.ship.lpp();
        let rate = ctx.ship.rhs(&gains, &last);
        let steady = rate.u.hypot(rate.v).hypot(rate.r) < 1e-6;
        let report = TrackReport {
            self_intersections: tr.self_intersections(0.0, sim.t_end),
            // the formula needs steady (u, v, r), i.e. a circling equilibrium
            radius_formula: (circling && steady && last.r != 0.0)
                .then(|| lpp * last.u.hypot(last.v) / last.r.abs()),
            radius_fit: circling
                .then(|| tail(&tr, 0.75 * sim.t_end).fit_circle())
                .flatten()
                .map(|c| c.2),
        };
        (tr, report)
    };
    match (report.radius_formula, report.radius_fit) {
        (Some(r), fit) => {
            let fit = fit.map_or("n/a".into(), |f| format!("{f:.6}"));
            println!("circle radius {r:.6} m (fit {fit})");
        }
        (None, Some(f)) => println!("fitted circle radius {f:.6} m (motion not steady)"),
        (None, None) => {}
    }
    println!("{} self-intersections", report.self_intersections);
    let plot = Plot {
        x: "x",
        y: &["y"],
        points: false,
    };
    ctx.out.csv("track.csv", &track_rows(&tr), Some(plot))?;
    ctx.out.json("track_report.json", &report)?;
    Ok("track")
}

#[derive(Serialize)]
struct BranchRow {
    index: usize,
    param: f64,
    eps_r: f64,
    eps_psi: f64,
    period: f64,
    winding: i64,
    amplitude_v: f64,
    u_min: f64,
    u_max: f64,
    v_min: f64,
    v_max: f64,
    r_max_deg_s: f64,
    psi_max_deg: f64,
    stable: bool,
    event: String,
    residual: f64,
    closure: f64,
    trivial_multiplier_error: f64,
    max_nontrivial_multiplier: f64,
}

fn branch_rows(b: &Branch, lpp: f64) -> Vec<BranchRow> {
    b.points
        .iter()
        .enumerate()
        .filter_map(|(i, p): (usize, &BranchPoint)| {
            let o = p.orbit()?;
            let mut moduli: Vec<f64> = o.multipliers.iter().map(|m| m[0].hypot(m[1])).collect();
            // drop the multiplier nearest 1
            if let Some(k) = o
                .multipliers
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    let d = |m: &[f64; 2]| (m[0] - 1.0).hypot(m[1]);
                    d(a.1).total_cmp(&d(b.1))
                })
                .map(|x| x.0)
            {
                moduli.remove(k);
            }
            Some(BranchRow {
                index: i,
                param: p.param,
                eps_r: p.gains.eps_r,
                eps_psi: p.gains.eps_psi,
                period: o.period,
                winding: o.winding,
                amplitude_v: o.amplitude_v(),
                u_min: o.min.u,
                u_max: o.max.u,
                v_min: o.min.v,
                v_max: o.max.v,
                r_max_deg_s: (o.max.r / lpp).to_degrees(),
                psi_max_deg: (o.max.psi / lpp).to_degrees(),
                stable: p.stable,
                event: p.event.to_string(),
                residual: p.residual,
                closure: o.closure_residual,
                trivial_multiplier_error: o.trivial_multiplier_error,
                max_nontrivial_multiplier: moduli.into_iter().fold(0.0, f64::max),
            })
        })
        .collect()
}

/// `eps_r` on the boundary where `eps_psi` takes the given value.
fn boundary_eps_r(ctx: &Ctx, eps_psi: f64) -> Result<f64, CliError> {
    let k = boundary_coeffs(&ctx.ship, ctx.u0);
    let er1 = eps_r1(ctx)?;
    let f = |er: f64| k.eps_psi(er).map(|e| e - eps_psi);
    let (mut lo, mut hi) = (0.0, er1);
    let flo = f(lo)?;
    if (flo > 0.0) == (f(hi)? > 0.0) {
        return Err(CliError::Usage(format!(
            "eps_psi = {eps_psi} is not on the boundary for 0 <= eps_r <= {er1:.4}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid)? > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Serialize)]
struct LocusRow {
    eps_r: f64,
    eps_psi: f64,
    omega: f64,
    event: String,
}

fn continuation(ctx: &mut Ctx, c: &ContinueArgs) -> Result<&'static str, CliError> {
    let opts = ContinuationOptions {
        ds: c.ds,
        ds_max: c.ds_max,
        max_points: c.max_points,
        integration_tol: c.tol,
        ..Default::default()
    };
    ctx.tol("integration_tol", opts.integration_tol);
    ctx.tol("newton_tol", opts.newton_tol);
    ctx.tol("t_max", opts.t_max);
    let (ship, u0, law) = (&ctx.ship, ctx.u0, ctx.global.law);
    let branch = match c.start {
        Start::Locus => {
            let pts = track_hopf_locus(ship, u0, c.ds_max)?;
            let rows: Vec<LocusRow> = pts
                .iter()
                .map(|p| LocusRow {
                    eps_r: p.eps_r,
                    eps_psi: p.eps_psi,
                    omega: p.omega,
                    event: p.event.to_string(),
                })
                .collect();
            println!("{} locus points", rows.len());
            let plot = Plot {
                x: "eps_r",
                y: &["eps_psi"],
                points: false,
            };
            ctx.out.csv("locus.csv", &rows, Some(plot))?;
            return Ok("continue");
        }
        Start::Hopf => {
            let eps_r = match (c.free, c.eps_psi) {
                (FreeParam::EpsR, Some(ep)) => boundary_eps_r(ctx, ep)?,
                (FreeParam::EpsR, None) => {
                    return Err(CliError::Usage("--free eps_r needs --eps-psi".into()));
                }
                (FreeParam::EpsPsi, _) => c.eps_r,
            };
            let (frame, sig) = sigma_on_boundary(ship, u0, eps_r)?;
            let target = c.target.unwrap_or(0.0);
            println!(
                "Hopf point at eps_r = {eps_r:.6}, eps_psi = {:.6}",
                frame.gains.eps_psi
            );
            continue_periodic(ship, law, c.free, &frame, &sig, target, &opts)?
        }
        Start::NuPlus | Start::NuMinus => {
            if c.free != FreeParam::EpsPsi || law != ControlLaw::Sinusoidal {
                return Err(CliError::Usage(
                    "circling families start at eps_psi = 0 and need --free eps_psi with --law sin"
                        .into(),
                ));
            }
            let eq_opts = ContinuationOptions {
                ds: 0.5,
                ds_max: 2.0,
                ..opts
            };
            let eqs = circling_equilibria(ship, law, u0, c.eps_r, &eq_opts)?;
            let eq = eqs[usize::from(c.start == Start::NuMinus)];
            let guess = rotation_orbit(
                ship,
                &ControlGains::new(c.eps_r, 0.0, law),
                &eq,
                opts.min_segments,
            )?;
            let target = match c.target {
                Some(t) => t,
                None => boundary_coeffs(ship, u0).eps_psi(0.0)?,
            };
            continue_orbits(ship, FreeParam::EpsPsi, &guess, target, &opts)?
        }
    };
    let rows = branch_rows(&branch, ctx.ship.lpp());
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        println!(
            "{} orbits from {} = {:.6} (period {:.4})",
            rows.len(),
            c.free,
            first.param,
            first.period
        );
        println!(
            "last {} = {:.6}, period {:.1}, event {}: {}",
            c.free, last.param, last.period, last.event, branch.termination
        );
    }
    let plot = Plot {
        x: "param",
        y: &["amplitude_v"],
        points: true,
    };
    ctx.out.csv("branch.csv", &rows, Some(plot))?;
    Ok("continue")
}
