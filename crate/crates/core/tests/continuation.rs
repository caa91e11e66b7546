use std::sync::OnceLock;

use shipstab::continuation::{
    circling_equilibria, continue_orbits, continue_periodic, hopf_seed, orbit_at, orbit_distance,
    pitchfork_diagram, rotation_orbit, track_hopf_locus, Branch, ContinuationOptions, Event,
    FreeParam, PitchforkDiagram,
};
use shipstab::criticality::{pitchfork_coefficients, sigma_on_boundary};
use shipstab::dynamics::{integrate, integrate_tracked, IntegratorOptions};
use shipstab::equilibrium::solve_u0;
use shipstab::stability::{boundary_coeffs, boundary_eps_psi, classify_x_t};
use shipstab::{ControlGains, ControlLaw, Ship, ShipParams, State4};

fn htc() -> (Ship, f64) {
    let ship = Ship::htc();
    let u0 = solve_u0(&ship).unwrap().u0;
    (ship, u0)
}

fn hopf_branch() -> &'static Branch {
    static BRANCH: OnceLock<Branch> = OnceLock::new();
    BRANCH.get_or_init(|| {
        let (ship, u0) = htc();
        let (frame, sig) = sigma_on_boundary(&ship, u0, 10.6).unwrap();
        let opts = ContinuationOptions {
            ds: 0.05,
            ds_max: 1.0,
            ..Default::default()
        };
        continue_periodic(
            &ship,
            ControlLaw::Sinusoidal,
            FreeParam::EpsPsi,
            &frame,
            &sig,
            0.0,
            &opts,
        )
        .unwrap()
    })
}

fn pitchfork() -> &'static PitchforkDiagram {
    static DIAGRAM: OnceLock<PitchforkDiagram> = OnceLock::new();
    DIAGRAM.get_or_init(|| {
        let (ship, u0) = htc();
        let opts = ContinuationOptions {
            ds: 0.05,
            ds_max: 0.5,
            ..Default::default()
        };
        pitchfork_diagram(&ship, ControlLaw::Linear, u0, 100.0, 140.0, &opts).unwrap()
    })
}

#[test]
fn pitchfork_on_trivial_branch() {
    let d = pitchfork();
    let (ship, u0) = htc();
    let er1 = classify_x_t(&ship, u0, ship.x_t()).eps_r1.unwrap();
    assert!((d.eps_r1 - er1).abs() < 1e-8 * er1);
    assert_eq!(
        d.trivial
            .events()
            .filter(|p| p.event == Event::Pitchfork)
            .count(),
        1
    );
    for p in &d.trivial.points {
        assert!(p.residual < 1e-9);
        let s = p.state().unwrap();
        assert!(s.v.abs() < 1e-12 && s.r.abs() < 1e-12);
        // straight motion is stable above the pitchfork
        assert_eq!(p.stable, p.param > d.eps_r1, "{}", p.param);
    }
}

#[test]
fn pitchfork_branches_are_mirror_images() {
    let d = pitchfork();
    assert!(d.plus.points.len() > 10);
    assert_eq!(d.plus.points.len(), d.minus.points.len());
    for (p, m) in d.plus.points.iter().zip(&d.minus.points) {
        assert!((p.param - m.param).abs() < 1e-8);
        let (a, b) = (p.state().unwrap(), m.state().unwrap());
        assert!((a.v + b.v).abs() < 1e-8 && (a.r + b.r).abs() < 1e-8);
        assert!((a.u - b.u).abs() < 1e-8);
        assert!(p.residual < 1e-9 && m.residual < 1e-9);
    }
    // the bifurcating equilibria exist below eps_r1 and are stable there
    for p in d.plus.points.iter().skip(1) {
        assert!(p.param < d.eps_r1);
        assert!(p.stable);
        assert!(p.state().unwrap().v > 0.0);
    }
}

#[test]
fn pitchfork_slopes() {
    let d = pitchfork();
    let (ship, u0) = htc();
    let coef = pitchfork_coefficients(&ship, u0).unwrap();
    let near: Vec<(f64, State4)> = d
        .plus
        .points
        .iter()
        .filter_map(|p| {
            let de = d.eps_r1 - p.param;
            (de > 1e-6 && de < 0.01 * d.eps_r1).then(|| (de, p.state().unwrap()))
        })
        .collect();
    assert!(near.len() >= 5);
    let (de, s) = near[0];
    let v_slope = s.v / de;
    // one-sided slope of v is finite and nonzero: the diagram has a corner
    assert!(
        (v_slope - coef.v_slope(ship.lpp())).abs() < 0.02 * v_slope,
        "{v_slope}"
    );
    // u bends away quadratically: its slope vanishes at onset
    let u_slope = |(de, s): (f64, State4)| (s.u - u0).abs() / de;
    assert!(u_slope(near[0]) < 0.02 * v_slope);
    assert!(u_slope(near[0]) < u_slope(*near.last().unwrap()));
}

#[test]
fn circling_equilibria_turn() {
    let (ship, u0) = htc();
    let opts = ContinuationOptions {
        ds: 0.5,
        ds_max: 2.0,
        ..Default::default()
    };
    let [plus, minus] =
        circling_equilibria(&ship, ControlLaw::Sinusoidal, u0, 10.6, &opts).unwrap();
    assert!((plus.u - 6.050012226).abs() < 1e-6);
    assert!((plus.v - 1.151265514).abs() < 1e-6);
    assert!((plus.r + 3.143167552).abs() < 1e-6);
    assert_eq!(minus, plus.reflect());
}

#[test]
fn locus_matches_boundary() {
    let (ship, u0) = htc();
    let locus = track_hopf_locus(&ship, u0, 0.5).unwrap();
    let k = boundary_coeffs(&ship, u0);
    for p in &locus {
        let want = k.eps_psi(p.eps_r).unwrap();
        assert!(
            (p.eps_psi - want).abs() < 1e-6 * want.abs().max(1.0),
            "{p:?} {want}"
        );
    }
    let first = locus.first().unwrap();
    assert_eq!(first.eps_r, 0.0);
    assert_eq!(first.event, Event::Hopf);
    let last = locus.last().unwrap();
    assert!(last.eps_psi.abs() < 1e-6);
    assert!((last.eps_r - 130.13).abs() < 0.01, "{}", last.eps_r);
    assert!(locus.windows(2).all(|w| w[1].eps_r > w[0].eps_r));
}

#[test]
fn locus_is_diameter_invariant_in_scaled_gains() {
    let u_tilde = 8.71 / 6.105;
    let big = Ship::new(ShipParams::htc().with_dp(12.21)).unwrap();
    let small = Ship::new(ShipParams::htc().with_dp(6.105)).unwrap();
    let scale = |ship: &Ship, dp: f64| {
        let tt = ship.thrust(dp * u_tilde) / dp.powi(4);
        (tt * dp.powi(3), tt * dp * dp)
    };
    let (e_big, y_big) = scale(&big, 12.21);
    let (e_small, y_small) = scale(&small, 6.105);
    let k_small = boundary_coeffs(&small, 6.105 * u_tilde);
    for p in track_hopf_locus(&big, 12.21 * u_tilde, 0.5).unwrap() {
        let e = p.eps_r * e_big;
        let want = k_small.eps_psi(e / e_small).unwrap() * y_small;
        let got = p.eps_psi * y_big;
        assert!(
            (got - want).abs() < 1e-6 * want.abs().max(1e-3),
            "{e}: {got} {want}"
        );
    }
}

#[test]
fn hopf_branch_anatomy() {
    let b = hopf_branch();
    let (ship, u0) = htc();
    let onset = b.points[0].param;
    assert_eq!(b.points[0].event, Event::Hopf);
    assert!((onset - 25.9).abs() < 0.5, "{onset}");
    // the first point sits hopf_offset inside the oscillating side
    let offset = ContinuationOptions::default().hopf_offset;
    assert!(
        (onset + offset - boundary_eps_psi(&ship, u0, 10.6).unwrap()).abs() < 1e-6,
        "{onset}"
    );
    let last = b.last().unwrap();
    assert_eq!(last.event, Event::PeriodBlowup);
    let t_end = last.orbit().unwrap().period;
    // the branch ends where the period blows up, not at the parameter target
    assert!(last.param > 0.3 && last.param < 0.6, "{}", last.param);
    assert!(t_end > 9285.0 / 2.0 && t_end < 2.0 * 9285.0, "{t_end}");
    assert!(b.points.windows(2).all(|w| w[1].param <= w[0].param + 1e-9));
}

#[test]
fn hopf_branch_orbit_quality() {
    let b = hopf_branch();
    for p in &b.points {
        let o = p.orbit().unwrap();
        assert!(p.residual < 1e-9, "{}", p.param);
        assert!(o.closure_residual < 1e-8);
        assert!(
            o.trivial_multiplier_error < 1e-4,
            "{}: {}",
            p.param,
            o.trivial_multiplier_error
        );
        assert_eq!(o.winding, 0);
        if p.param > 0.5 {
            assert!(p.stable, "{}", p.param);
        }
    }
}

#[test]
fn winding_constant_on_circling_branch() {
    let (ship, u0) = htc();
    let [plus, _] = circling_equilibria(
        &ship,
        ControlLaw::Sinusoidal,
        u0,
        10.6,
        &ContinuationOptions {
            ds: 0.5,
            ds_max: 2.0,
            ..Default::default()
        },
    )
    .unwrap();
    let guess = rotation_orbit(&ship, &ControlGains::sinusoidal(10.6, 0.0), &plus, 8).unwrap();
    let opts = ContinuationOptions {
        ds: 0.01,
        ds_max: 0.5,
        ..Default::default()
    };
    let b = continue_orbits(&ship, FreeParam::EpsPsi, &guess, 2.0, &opts).unwrap();
    let w = b.points[0].orbit().unwrap().winding;
    assert_eq!(w.abs(), 1);
    for p in &b.points {
        let o = p.orbit().unwrap();
        assert_eq!(o.winding, w);
        assert!(o.trivial_multiplier_error < 1e-4);
        assert!((o.winding_turns - w as f64).abs() < 1e-9);
    }
    let last = b.last().unwrap();
    assert_eq!(last.event, Event::PeriodBlowup);
    // both families end at the same heteroclinic parameter
    let hopf_end = hopf_branch().last().unwrap().param;
    assert!(
        (last.param - hopf_end).abs() < 1e-3,
        "{} {}",
        last.param,
        hopf_end
    );
}

#[test]
fn reflected_seed_gives_reflected_branch() {
    let (ship, u0) = htc();
    let (frame, sig) = sigma_on_boundary(&ship, u0, 10.6).unwrap();
    let opts = ContinuationOptions {
        ds: 0.05,
        ds_max: 0.5,
        max_points: 12,
        ..Default::default()
    };
    let seed = hopf_seed(
        &ship,
        ControlLaw::Sinusoidal,
        FreeParam::EpsPsi,
        &frame,
        &sig,
        0.05,
        8,
    )
    .unwrap();
    let mut mirrored = seed.clone();
    mirrored.nodes = seed.nodes.iter().map(|s| s.reflect()).collect();
    let a = continue_orbits(&ship, FreeParam::EpsPsi, &seed, 20.0, &opts).unwrap();
    let b = continue_orbits(&ship, FreeParam::EpsPsi, &mirrored, 20.0, &opts).unwrap();
    assert_eq!(a.points.len(), b.points.len());
    for (p, q) in a.points.iter().zip(&b.points) {
        assert!((p.param - q.param).abs() < 1e-8);
        let (x, y) = (p.orbit().unwrap(), q.orbit().unwrap());
        assert!((x.period - y.period).abs() < 1e-8 * x.period);
        for (n, m) in x.nodes.iter().zip(&y.nodes) {
            let r = n.reflect();
            assert!(
                (r.v - m.v).abs() < 1e-7
                    && (r.r - m.r).abs() < 1e-7
                    && (r.psi - m.psi).abs() < 1e-7
            );
        }
    }
}

#[test]
fn floquet_stability_matches_simulation() {
    let b = hopf_branch();
    let (ship, _) = htc();
    let opts = ContinuationOptions::default();
    for value in [24.0, 20.0, 12.0, 5.0, 1.5] {
        let p = orbit_at(&ship, b, value, &opts).unwrap();
        let o = p.orbit().unwrap();
        assert!(p.stable);
        // slowest nontrivial contraction sets the observation window
        let mut moduli: Vec<f64> = o.multipliers.iter().map(|m| m[0].hypot(m[1])).collect();
        let trivial = o
            .multipliers
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (a.1[0] - 1.0).hypot(a.1[1]);
                let db = (b.1[0] - 1.0).hypot(b.1[1]);
                da.total_cmp(&db)
            })
            .unwrap()
            .0;
        moduli.remove(trivial);
        let rho = moduli.iter().cloned().fold(0.0, f64::max);
        assert!(rho < 1.0);
        let periods = (0.05_f64.ln() / rho.ln()).ceil().max(2.0);
        let start = o.nodes[0];
        let kicked = State4::new(start.u + 1e-3, start.v - 1e-3, start.r + 1e-3, start.psi);
        let d0 = orbit_distance(&ship, &p.gains, o, &kicked).unwrap();
        let tr = integrate(&ship, &p.gains, &kicked, periods * o.period, 1e-11).unwrap();
        let d1 = orbit_distance(&ship, &p.gains, o, &tr.last()).unwrap();
        assert!(d1 < 0.5 * d0, "eps_psi {value} rho {rho}: {d0:e} -> {d1:e}");
    }
}

#[test]
fn orbit_tracks_near_onset() {
    let b = hopf_branch();
    let (ship, _) = htc();
    let opts = ContinuationOptions::default();
    let io = IntegratorOptions::with_tol(1e-10).unwrap();

    let p = orbit_at(&ship, b, 25.6, &opts).unwrap();
    let o = p.orbit().unwrap();
    assert!((o.period - 50.5).abs() < 1.0, "{}", o.period);
    let (_, tr) = integrate_tracked(
        &ship,
        &p.gains,
        &o.nodes[0],
        [0.0, 0.0],
        5.0 * o.period,
        &io,
    )
    .unwrap();
    let n = tr.x.len();
    let drift = tr.x[n - 1].hypot(tr.y[n - 1]) / 5.0;
    // lateral excursion from the mean drift line
    let (dx, dy) = (tr.x[n - 1] / drift, tr.y[n - 1] / drift);
    let lateral = (0..n)
        .map(|i| (tr.y[i] * dx - tr.x[i] * dy).abs() / dx.hypot(dy))
        .fold(0.0, f64::max);
    assert!(drift > 100.0 * lateral, "drift {drift} lateral {lateral}");
    assert_eq!(tr.self_intersections(0.0, 5.0 * o.period), 0);

    let p = orbit_at(&ship, b, 23.0, &opts).unwrap();
    assert!((p.orbit().unwrap().period - 54.0).abs() < 2.0);
}
