//! Pseudo-arclength continuation of equilibria, periodic orbits and the
//! Hopf locus.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criticality::{HopfFrame, SigmaResult};
use crate::dynamics::{integrate_system, IntegratorOptions, OdeSystem};
use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, C64};
use crate::model::{ControlGains, ControlLaw, Ship, State4};
use crate::stability::{classify_x_t, linearize};

/// Residual and its Jacobian.
type Linearized = (DVector<f64>, DMatrix<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParam {
    EpsR,
    EpsPsi,
}

impl FreeParam {
    pub fn get(self, g: &ControlGains) -> f64 {
        match self {
            FreeParam::EpsR => g.eps_r,
            FreeParam::EpsPsi => g.eps_psi,
        }
    }

    pub fn set(self, g: &ControlGains, value: f64) -> ControlGains {
        match self {
            FreeParam::EpsR => g.with_eps_r(value),
            FreeParam::EpsPsi => g.with_eps_psi(value),
        }
    }

    fn derivative(self, ship: &Ship, g: &ControlGains, s: &State4) -> [f64; 4] {
        let (dr, dpsi) = ship.gain_derivatives(g, s);
        match self {
            FreeParam::EpsR => dr,
            FreeParam::EpsPsi => dpsi,
        }
    }
}

impl FromStr for FreeParam {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "eps_r" | "eps-r" => Ok(FreeParam::EpsR),
            "eps_psi" | "eps-psi" => Ok(FreeParam::EpsPsi),
            _ => Err(format!("unknown continuation parameter `{s}`")),
        }
    }
}

impl fmt::Display for FreeParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FreeParam::EpsR => "eps_r",
            FreeParam::EpsPsi => "eps_psi",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    None,
    Hopf,
    Pitchfork,
    Fold,
    PeriodBlowup,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Event::None => "none",
            Event::Hopf => "hopf",
            Event::Pitchfork => "pitchfork",
            Event::Fold => "fold",
            Event::PeriodBlowup => "period_blowup",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub period: f64,
    /// Shooting nodes at `t = i T / m`; the first is the phase anchor.
    pub nodes: Vec<State4>,
    /// Floquet multipliers as `[re, im]`, largest modulus first.
    pub multipliers: Vec<[f64; 2]>,
    pub winding: i64,
    /// Accumulated heading change over one period in turns.
    pub winding_turns: f64,
    pub max: State4,
    pub min: State4,
    pub closure_residual: f64,
    /// Multiplier along the flow direction, from carrying the vector field
    /// across each segment.
    pub trivial_multiplier: f64,
    pub trivial_multiplier_error: f64,
}

impl PeriodicOrbit {
    pub fn segments(&self) -> usize {
        self.nodes.len()
    }

    pub fn anchor(&self) -> State4 {
        self.nodes[0]
    }

    /// All multipliers except the trivial one strictly inside the unit
    /// circle.
    pub fn is_stable(&self) -> bool {
        let trivial = self.trivial_index();
        self.multipliers
            .iter()
            .enumerate()
            .all(|(i, z)| i == trivial || z[0].hypot(z[1]) < 1.0)
    }

    fn trivial_index(&self) -> usize {
        let d = |z: &[f64; 2]| (z[0] - 1.0).hypot(z[1]);
        (0..self.multipliers.len())
            .min_by(|&i, &j| {
                d(&self.multipliers[i])
                    .partial_cmp(&d(&self.multipliers[j]))
                    .unwrap()
            })
            .unwrap_or(0)
    }

    pub fn amplitude_v(&self) -> f64 {
        0.5 * (self.max.v - self.min.v)
    }

    /// States sampled uniformly in time over one period, each segment
    /// integrated from its own node.
    pub fn profile(
        &self,
        ship: &Ship,
        gains: &ControlGains,
        per_segment: usize,
        tol: f64,
    ) -> Result<Vec<(f64, State4)>> {
        let m = self.nodes.len();
        let dt = self.period / m as f64;
        let opts = IntegratorOptions::with_tol(tol)?;
        let sys = crate::dynamics::ShipSystem {
            ship,
            gains: *gains,
        };
        let segs: Vec<Result<Vec<(f64, State4)>>> = (0..m)
            .into_par_iter()
            .map(|i| {
                let sol = crate::dynamics::Solution::solve(
                    &sys,
                    0.0,
                    &self.nodes[i].to_array(),
                    dt,
                    &opts,
                )?;
                Ok((0..per_segment)
                    .map(|k| {
                        let t = dt * k as f64 / per_segment as f64;
                        (i as f64 * dt + t, State4::from_slice(&sol.at(t)))
                    })
                    .collect())
            })
            .collect();
        let mut out = Vec::with_capacity(m * per_segment + 1);
        for s in segs {
            out.extend(s?);
        }
        let mut last = self.nodes[0];
        last.psi += 2.0 * PI * ship.lpp() * self.winding as f64;
        out.push((self.period, last));
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Equilibrium(State4),
    Orbit(PeriodicOrbit),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub param: f64,
    pub gains: ControlGains,
    pub payload: Payload,
    /// Eigenvalues (equilibria) or Floquet multipliers (orbits) as
    /// `[re, im]`.
    pub spectrum: Vec<[f64; 2]>,
    pub stable: bool,
    pub event: Event,
    pub residual: f64,
    /// Weighted arclength step from the previous point.
    pub step: f64,
}

impl BranchPoint {
    pub fn state(&self) -> Option<State4> {
        match &self.payload {
            Payload::Equilibrium(s) => Some(*s),
            Payload::Orbit(_) => None,
        }
    }

    pub fn orbit(&self) -> Option<&PeriodicOrbit> {
        match &self.payload {
            Payload::Orbit(o) => Some(o),
            Payload::Equilibrium(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub free: FreeParam,
    pub points: Vec<BranchPoint>,
    pub termination: String,
}

impl Branch {
    pub fn last(&self) -> Option<&BranchPoint> {
        self.points.last()
    }

    pub fn events(&self) -> impl Iterator<Item = &BranchPoint> {
        self.points.iter().filter(|p| p.event != Event::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_points: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Orbits with a longer period end the branch with `PeriodBlowup`.
    pub t_max: f64,
    pub integration_tol: f64,
    /// Target segment duration for multiple shooting.
    pub segment_time: f64,
    pub min_segments: usize,
    /// Parameter offset from a Hopf point for the first orbit.
    pub hopf_offset: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            ds: 0.05,
            ds_min: 1e-9,
            ds_max: 2.0,
            max_points: 2000,
            newton_tol: 1e-9,
            max_newton: 12,
            t_max: 2e4,
            integration_tol: 1e-11,
            segment_time: 50.0,
            min_segments: 8,
            hopf_offset: 0.05,
        }
    }
}

/// Period change counted as one unit of arclength.
const PERIOD_SCALE: f64 = 200.0;
/// Points over which a frozen parameter with growing period ends a branch.
const STAGNATION_WINDOW: usize = 10;

fn to_pairs(z: &[C64]) -> Vec<[f64; 2]> {
    z.iter().map(|z| [z.re, z.im]).collect()
}

fn wnorm(w: &[f64], x: &DVector<f64>) -> f64 {
    x.iter().zip(w).map(|(x, w)| w * x * x).sum::<f64>().sqrt()
}

/// Unit tangent of `G(z) = 0` from the bordered system, oriented along
/// `guess`.
fn tangent(jac: &DMatrix<f64>, guess: &DVector<f64>, w: &[f64]) -> Result<DVector<f64>> {
    let n = jac.ncols();
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (n - 1, n)).copy_from(jac);
    for j in 0..n {
        a[(n - 1, j)] = w[j] * guess[j];
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let t = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Convergence("singular bordered system for tangent".into()))?;
    let nrm = wnorm(w, &t);
    if !(nrm > 0.0) || !nrm.is_finite() {
        return Err(Error::Convergence("degenerate tangent".into()));
    }
    Ok(t / nrm)
}

struct Corrected {
    z: DVector<f64>,
    jac: DMatrix<f64>,
    residual: f64,
    iterations: usize,
}

/// Newton on `[G(z) = 0, <w t, z - z_pred> = 0]`.
fn correct(
    f: &dyn Fn(&DVector<f64>) -> Result<Linearized>,
    z_pred: &DVector<f64>,
    t: &DVector<f64>,
    w: &[f64],
    opts: &ContinuationOptions,
) -> Result<Corrected> {
    let n = z_pred.len();
    let mut z = z_pred.clone();
    for it in 0..opts.max_newton {
        let (g, jac) = f(&z)?;
        let res = g.amax();
        if !res.is_finite() {
            return Err(Error::Convergence("non-finite residual".into()));
        }
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n - 1, n)).copy_from(&jac);
        let mut rhs = DVector::zeros(n);
        rhs.rows_mut(0, n - 1).copy_from(&(-&g));
        let mut arc = 0.0;
        for j in 0..n {
            a[(n - 1, j)] = w[j] * t[j];
            arc += w[j] * t[j] * (z[j] - z_pred[j]);
        }
        rhs[n - 1] = -arc;
        let dz = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Convergence("singular Newton matrix".into()))?;
        z += &dz;
        let step = dz.amax() / (1.0 + z.amax());
        if res < opts.newton_tol && step < 1e-6 {
            // one more evaluation for the returned residual and Jacobian
            let (g, jac) = f(&z)?;
            let res = g.amax();
            if res < opts.newton_tol {
                return Ok(Corrected {
                    z,
                    jac,
                    residual: res,
                    iterations: it + 1,
                });
            }
        }
    }
    Err(Error::Convergence(format!(
        "corrector did not converge in {} iterations",
        opts.max_newton
    )))
}

// ---------------------------------------------------------------------
// Equilibria

/// Equilibrium equations in `n` = 3 (reduced, `eps_psi = 0`) or 4
/// dimensions: residual, state Jacobian and parameter derivative.
fn equilibrium_system(
    ship: &Ship,
    gains: &ControlGains,
    free: FreeParam,
    n: usize,
    z: &DVector<f64>,
) -> Result<Linearized> {
    let p = z[n];
    let g = free.set(gains, p);
    let s = if n == 3 {
        State4::new(z[0], z[1], z[2], 0.0)
    } else {
        State4::new(z[0], z[1], z[2], z[3])
    };
    if !s.is_finite() {
        return Err(Error::InvalidState);
    }
    let f = ship.rhs(&g, &s).to_array();
    let j = ship.jacobian(&g, &s);
    let dp = free.derivative(ship, &g, &s);
    let res = DVector::from_fn(n, |i, _| f[i]);
    let jac = DMatrix::from_fn(n, n + 1, |i, k| if k < n { j[i][k] } else { dp[i] });
    Ok((res, jac))
}

fn equilibrium_point(
    gains: &ControlGains,
    free: FreeParam,
    n: usize,
    z: &DVector<f64>,
    jac: &DMatrix<f64>,
    residual: f64,
    step: f64,
) -> BranchPoint {
    let jx = jac.columns(0, n).into_owned();
    let ev = eigenvalues(&jx);
    let s = if n == 3 {
        State4::new(z[0], z[1], z[2], 0.0)
    } else {
        State4::new(z[0], z[1], z[2], z[3])
    };
    BranchPoint {
        param: z[n],
        gains: free.set(gains, z[n]),
        payload: Payload::Equilibrium(s),
        stable: ev.iter().all(|z| z.re < 0.0),
        spectrum: to_pairs(&ev),
        event: Event::None,
        residual,
        step,
    }
}

fn unstable_counts(spec: &[[f64; 2]]) -> (usize, usize) {
    let real = spec.iter().filter(|z| z[1] == 0.0 && z[0] > 0.0).count();
    let complex = spec.iter().filter(|z| z[1] != 0.0 && z[0] > 0.0).count();
    (real, complex)
}

/// Continue equilibria in `free` from `start` (an equilibrium at the
/// current value of `free` in `gains`) towards `target`. With
/// `eps_psi = 0` the heading decouples and the reduced 3D system in
/// `(u, v, r)` is continued.
pub fn continue_equilibria(
    ship: &Ship,
    gains: &ControlGains,
    free: FreeParam,
    start: &State4,
    target: f64,
    opts: &ContinuationOptions,
) -> Result<Branch> {
    let reduced = gains.eps_psi == 0.0 && free == FreeParam::EpsR;
    let n = if reduced { 3 } else { 4 };
    let p0 = free.get(gains);
    let mut z = DVector::from_fn(n + 1, |i, _| if i < n { start.to_array()[i] } else { p0 });
    let w = vec![1.0; n + 1];
    let f = |z: &DVector<f64>| equilibrium_system(ship, gains, free, n, z);
    // polish the start at fixed parameter
    let mut e = DVector::zeros(n + 1);
    e[n] = 1.0;
    let c = correct(&f, &z, &e, &w, opts)?;
    z = c.z;
    let dir = if target >= p0 { 1.0 } else { -1.0 };
    let guess = e.clone() * dir;
    let t = tangent(&c.jac, &guess, &w)?;
    run_equilibrium_branch(ship, gains, free, n, z, c.jac, c.residual, t, target, opts)
}

#[allow(clippy::too_many_arguments)]
fn run_equilibrium_branch(
    ship: &Ship,
    gains: &ControlGains,
    free: FreeParam,
    n: usize,
    mut z: DVector<f64>,
    jac: DMatrix<f64>,
    residual: f64,
    mut t: DVector<f64>,
    target: f64,
    opts: &ContinuationOptions,
) -> Result<Branch> {
    let w = vec![1.0; n + 1];
    let f = |z: &DVector<f64>| equilibrium_system(ship, gains, free, n, z);
    let p_start = z[n];
    let (lo, hi) = if target >= p_start {
        (f64::NEG_INFINITY, target)
    } else {
        (target, f64::INFINITY)
    };
    let mut points = vec![equilibrium_point(gains, free, n, &z, &jac, residual, 0.0)];
    let mut ds = opts.ds;
    let termination;
    loop {
        if points.len() >= opts.max_points {
            termination = "maximum number of points".to_string();
            break;
        }
        let pred = &z + &t * ds;
        let c = match correct(&f, &pred, &t, &w, opts) {
            Ok(c) => c,
            Err(err) => {
                ds *= 0.5;
                if ds < opts.ds_min {
                    termination = format!("step size underflow: {err}");
                    break;
                }
                continue;
            }
        };
        let t_new = tangent(&c.jac, &t, &w)?;
        let mut pt = equilibrium_point(gains, free, n, &c.z, &c.jac, c.residual, ds);
        let prev = points.last().unwrap();
        let (r0, c0) = unstable_counts(&prev.spectrum);
        let (r1, c1) = unstable_counts(&pt.spectrum);
        if t_new[n] * t[n] < 0.0 {
            pt.event = Event::Fold;
        } else if r0 != r1 {
            pt.event = Event::Pitchfork;
        } else if c0 != c1 {
            pt.event = Event::Hopf;
        }
        let p = c.z[n];
        let done = p > hi || p < lo;
        points.push(pt);
        z = c.z;
        t = t_new;
        if done {
            termination = "reached parameter bound".to_string();
            break;
        }
        if c.iterations <= 3 {
            ds = (ds * 1.5).min(opts.ds_max);
        } else if c.iterations > 6 {
            ds = (ds * 0.5).max(opts.ds_min);
        }
    }
    Ok(Branch {
        free,
        points,
        termination,
    })
}

/// Smallest-singular-value direction of the state Jacobian.
fn kernel_vector(jx: &DMatrix<f64>) -> DVector<f64> {
    let svd = jx.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let k = (0..svd.singular_values.len())
        .min_by(|&i, &j| {
            svd.singular_values[i]
                .partial_cmp(&svd.singular_values[j])
                .unwrap()
        })
        .unwrap();
    v_t.row(k).transpose()
}

/// Branch from a bifurcation point by stepping `amplitude` along the
/// kernel (sign fixes the side) and correcting with the parameter free.
pub fn switch_branch(
    ship: &Ship,
    gains: &ControlGains,
    free: FreeParam,
    at: &BranchPoint,
    amplitude: f64,
    target_span: f64,
    opts: &ContinuationOptions,
) -> Result<Branch> {
    let s = at.state().ok_or(Error::InvalidState)?;
    let reduced = at.gains.eps_psi == 0.0 && free == FreeParam::EpsR;
    let n = if reduced { 3 } else { 4 };
    let mut z0 = DVector::from_fn(n + 1, |i, _| if i < n { s.to_array()[i] } else { at.param });
    let (_, jac) = equilibrium_system(ship, gains, free, n, &z0)?;
    let mut kern = kernel_vector(&jac.columns(0, n).into_owned());
    // orient the kernel so that v > 0 before applying the sign
    if kern[1] < 0.0 {
        kern = -kern;
    }
    let mut dir = DVector::zeros(n + 1);
    dir.rows_mut(0, n).copy_from(&kern);
    let w = vec![1.0; n + 1];
    let pred = &z0 + &dir * amplitude;
    // arclength row along the kernel pins the amplitude
    let f = |z: &DVector<f64>| equilibrium_system(ship, gains, free, n, z);
    let c = correct(&f, &pred, &dir, &w, opts)?;
    let secant = &c.z - &z0;
    let t = tangent(&c.jac, &secant, &w)?;
    let side = c.z[n] - at.param;
    let target = at.param + side.signum() * target_span.abs();
    z0 = c.z.clone();
    let mut b =
        run_equilibrium_branch(ship, gains, free, n, z0, c.jac, c.residual, t, target, opts)?;
    let mut first = at.clone();
    first.event = Event::Pitchfork;
    b.points.insert(0, first);
    Ok(b)
}

/// Trivial branch at `eps_psi = 0` across `[eps_r_lo, eps_r_hi]` and the
/// two symmetric branches born at the pitchfork.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchforkDiagram {
    pub trivial: Branch,
    pub plus: Branch,
    pub minus: Branch,
    pub eps_r1: f64,
}

pub fn pitchfork_diagram(
    ship: &Ship,
    law: ControlLaw,
    u0: f64,
    eps_r_lo: f64,
    eps_r_hi: f64,
    opts: &ContinuationOptions,
) -> Result<PitchforkDiagram> {
    let gains = ControlGains::new(eps_r_lo, 0.0, law);
    let trivial = continue_equilibria(
        ship,
        &gains,
        FreeParam::EpsR,
        &State4::straight(u0),
        eps_r_hi,
        opts,
    )?;
    let idx = trivial
        .points
        .iter()
        .position(|p| p.event == Event::Pitchfork)
        .ok_or_else(|| Error::DegeneratePitchfork("no pitchfork on the trivial branch".into()))?;
    let (a, b) = (&trivial.points[idx - 1], &trivial.points[idx]);
    // locate the zero eigenvalue by bisection on the real eigenvalue sign
    let count = |er: f64| {
        let g = gains.with_eps_r(er);
        let j = ship.jacobian(&g, &State4::straight(u0));
        let m = DMatrix::from_fn(3, 3, |i, k| j[i][k]);
        m.determinant()
    };
    let (mut lo, mut hi) = (a.param, b.param);
    let dlo = count(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (count(mid) > 0.0) == (dlo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    let er1 = 0.5 * (lo + hi);
    let mut bp = a.clone();
    bp.param = er1;
    bp.gains = gains.with_eps_r(er1);
    bp.payload = Payload::Equilibrium(State4::straight(u0));
    let span = (eps_r_hi - eps_r_lo).abs();
    let plus = switch_branch(ship, &gains, FreeParam::EpsR, &bp, 1e-4, span, opts)?;
    let minus = switch_branch(ship, &gains, FreeParam::EpsR, &bp, -1e-4, span, opts)?;
    Ok(PitchforkDiagram {
        trivial,
        plus,
        minus,
        eps_r1: er1,
    })
}

/// The circling equilibria `nu+` (v > 0) and `nu-` at `eps_psi = 0` and
/// `eps_r < eps_r1`, found on the pitchfork branches and polished at
/// `eps_r`.
pub fn circling_equilibria(
    ship: &Ship,
    law: ControlLaw,
    u0: f64,
    eps_r: f64,
    opts: &ContinuationOptions,
) -> Result<[State4; 2]> {
    let er1 = classify_x_t(ship, u0, ship.x_t())
        .eps_r1
        .ok_or_else(|| Error::DegeneratePitchfork("no pitchfork at eps_psi = 0".into()))?;
    let hi = er1 * 1.05 + 1.0;
    let diagram = pitchfork_diagram(ship, law, u0, eps_r.min(hi), hi, opts)?;
    let near = diagram
        .plus
        .points
        .iter()
        .min_by(|a, b| (a.param - eps_r).abs().total_cmp(&(b.param - eps_r).abs()))
        .ok_or_else(|| Error::Convergence("empty pitchfork branch".into()))?;
    if (near.param - eps_r).abs() > 0.5 * opts.ds_max.max(opts.ds) + 1e-9 {
        return Err(Error::Convergence(format!(
            "no circling equilibrium near eps_r = {eps_r}"
        )));
    }
    let s = near.state().ok_or(Error::InvalidState)?;
    let gains = ControlGains::new(eps_r, 0.0, law);
    let n = 3;
    let z = DVector::from_vec(vec![s.u, s.v, s.r, eps_r]);
    let mut e = DVector::zeros(n + 1);
    e[n] = 1.0;
    let f = |z: &DVector<f64>| equilibrium_system(ship, &gains, FreeParam::EpsR, n, z);
    let c = correct(&f, &z, &e, &[1.0; 4], opts)?;
    let plus = State4::new(c.z[0], c.z[1], c.z[2], 0.0);
    Ok([plus, plus.reflect()])
}

// ---------------------------------------------------------------------
// Periodic orbits

/// State, monodromy rows and parameter sensitivity of one segment.
struct Variational<'a> {
    ship: &'a Ship,
    gains: ControlGains,
    free: FreeParam,
}

impl OdeSystem for Variational<'_> {
    fn dim(&self) -> usize {
        24
    }

    fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let s = State4::from_slice(&y[..4]);
        let f = self.ship.rhs(&self.gains, &s).to_array();
        let j = self.ship.jacobian(&self.gains, &s);
        let dp = self.free.derivative(self.ship, &self.gains, &s);
        dy[..4].copy_from_slice(&f);
        for i in 0..4 {
            for c in 0..4 {
                dy[4 + 4 * i + c] = (0..4).map(|k| j[i][k] * y[4 + 4 * k + c]).sum();
            }
            dy[20 + i] = (0..4).map(|k| j[i][k] * y[20 + k]).sum::<f64>() + dp[i];
        }
    }
}

struct SegmentFlow {
    end: [f64; 4],
    phi: [[f64; 4]; 4],
    dp: [f64; 4],
    f_end: [f64; 4],
}

fn flow_segment(
    ship: &Ship,
    gains: &ControlGains,
    free: FreeParam,
    x: &[f64],
    dt: f64,
    opts: &IntegratorOptions,
) -> Result<SegmentFlow> {
    let sys = Variational {
        ship,
        gains: *gains,
        free,
    };
    let mut y0 = vec![0.0; 24];
    y0[..4].copy_from_slice(x);
    for i in 0..4 {
        y0[4 + 5 * i] = 1.0;
    }
    let (y, _) = integrate_system(&sys, 0.0, &y0, dt, opts, |_| {})?;
    let mut phi = [[0.0; 4]; 4];
    for i in 0..4 {
        for c in 0..4 {
            phi[i][c] = y[4 + 4 * i + c];
        }
    }
    let end = [y[0], y[1], y[2], y[3]];
    let f_end = ship.rhs(gains, &State4::from_array(end)).to_array();
    Ok(SegmentFlow {
        end,
        phi,
        dp: [y[20], y[21], y[22], y[23]],
        f_end,
    })
}

/// Multiple-shooting problem with unknowns `(x_0 .. x_{m-1}, T, p)`.
struct Shooting<'a> {
    ship: &'a Ship,
    gains: ControlGains,
    free: FreeParam,
    m: usize,
    winding: i64,
    anchor: [f64; 4],
    anchor_field: [f64; 4],
    integ: IntegratorOptions,
}

impl Shooting<'_> {
    fn size(&self) -> usize {
        4 * self.m + 2
    }

    fn shift(&self) -> f64 {
        2.0 * PI * self.ship.lpp() * self.winding as f64
    }

    fn flows(&self, z: &DVector<f64>) -> Result<Vec<SegmentFlow>> {
        let m = self.m;
        let period = z[4 * m];
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::Convergence("non-positive period".into()));
        }
        let g = self.free.set(&self.gains, z[4 * m + 1]);
        let dt = period / m as f64;
        (0..m)
            .into_par_iter()
            .map(|i| {
                let x: Vec<f64> = (0..4).map(|k| z[4 * i + k]).collect();
                flow_segment(self.ship, &g, self.free, &x, dt, &self.integ)
            })
            .collect()
    }

    fn system(&self, z: &DVector<f64>) -> Result<Linearized> {
        let m = self.m;
        let n = self.size();
        let flows = self.flows(z)?;
        let mut g = DVector::zeros(n - 1);
        let mut jac = DMatrix::zeros(n - 1, n);
        let shift = self.shift();
        for (i, fl) in flows.iter().enumerate() {
            let next = (i + 1) % m;
            for r in 0..4 {
                let mut target = z[4 * next + r];
                if i == m - 1 && r == 3 {
                    target += shift;
                }
                g[4 * i + r] = fl.end[r] - target;
                for c in 0..4 {
                    jac[(4 * i + r, 4 * i + c)] = fl.phi[r][c];
                }
                jac[(4 * i + r, 4 * next + r)] -= 1.0;
                jac[(4 * i + r, 4 * m)] = fl.f_end[r] / m as f64;
                jac[(4 * i + r, 4 * m + 1)] = fl.dp[r];
            }
        }
        let row = 4 * m;
        for k in 0..4 {
            g[row] += (z[k] - self.anchor[k]) * self.anchor_field[k];
            jac[(row, k)] = self.anchor_field[k];
        }
        Ok((g, jac))
    }

    fn weights(&self) -> Vec<f64> {
        let l = self.ship.lpp();
        let mut w = Vec::with_capacity(self.size());
        for _ in 0..self.m {
            w.extend_from_slice(&[1.0, 1.0, 1.0, 1.0 / (l * l)]);
        }
        for x in w.iter_mut() {
            *x /= self.m as f64;
        }
        w.push(1.0 / (PERIOD_SCALE * PERIOD_SCALE));
        w.push(1.0);
        w
    }

    fn set_anchor(&mut self, z: &DVector<f64>) {
        let g = self.free.set(&self.gains, z[4 * self.m + 1]);
        let x = State4::new(z[0], z[1], z[2], z[3]);
        self.anchor = x.to_array();
        let f = self.ship.rhs(&g, &x).to_array();
        let n = f.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        self.anchor_field = f.map(|v| v / n);
    }

    fn orbit(&self, z: &DVector<f64>, flows: &[SegmentFlow], residual: f64) -> PeriodicOrbit {
        let m = self.m;
        let nodes: Vec<State4> = (0..m)
            .map(|i| State4::new(z[4 * i], z[4 * i + 1], z[4 * i + 2], z[4 * i + 3]))
            .collect();
        // compose with rescaling; multipliers grow like exp(lambda T)
        let mut mono = DMatrix::<f64>::identity(4, 4);
        let mut log_scale = 0.0;
        for fl in flows {
            let phi = DMatrix::from_fn(4, 4, |r, c| fl.phi[r][c]);
            mono = phi * mono;
            let s = mono.amax();
            if s > 1e8 {
                mono /= s;
                log_scale += s.ln();
            }
        }
        let scale = log_scale.exp().min(f64::MAX);
        let mut mult: Vec<C64> = eigenvalues(&mono).into_iter().map(|z| z * scale).collect();
        mult.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        // the vector field is an exact eigenvector chain for the trivial
        // multiplier: f(x_i) is carried onto f(x_{i+1}) by each segment
        let g = self.free.set(&self.gains, z[4 * m + 1]);
        let fields: Vec<[f64; 4]> = nodes
            .iter()
            .map(|x| self.ship.rhs(&g, x).to_array())
            .collect();
        let mut trivial = 1.0;
        for (i, fl) in flows.iter().enumerate() {
            let fi = &fields[i];
            let fj = &fields[(i + 1) % m];
            let carried: Vec<f64> = (0..4)
                .map(|r| (0..4).map(|c| fl.phi[r][c] * fi[c]).sum())
                .collect();
            let num: f64 = carried.iter().zip(fj).map(|(a, b)| a * b).sum();
            let den: f64 = fj.iter().map(|b| b * b).sum();
            trivial *= num / den;
        }
        let triv = (trivial - 1.0).abs();
        let dpsi: f64 = flows
            .iter()
            .zip(&nodes)
            .map(|(fl, x)| fl.end[3] - x.psi)
            .sum();
        let turns = dpsi / (2.0 * PI * self.ship.lpp());
        let mut max = nodes[0];
        let mut min = nodes[0];
        for s in nodes.iter().chain(flows.iter().map(|_| &nodes[0])) {
            max = State4::new(
                max.u.max(s.u),
                max.v.max(s.v),
                max.r.max(s.r),
                max.psi.max(s.psi),
            );
            min = State4::new(
                min.u.min(s.u),
                min.v.min(s.v),
                min.r.min(s.r),
                min.psi.min(s.psi),
            );
        }
        PeriodicOrbit {
            period: z[4 * m],
            nodes,
            multipliers: to_pairs(&mult),
            winding: turns.round() as i64,
            winding_turns: turns,
            max,
            min,
            closure_residual: residual,
            trivial_multiplier: trivial,
            trivial_multiplier_error: triv,
        }
    }
}

/// Refine component extrema of an orbit from its dense profile.
fn refine_extrema(
    ship: &Ship,
    gains: &ControlGains,
    orbit: &mut PeriodicOrbit,
    tol: f64,
) -> Result<()> {
    let prof = orbit.profile(ship, gains, 24, tol.max(1e-12))?;
    let mut max = orbit.nodes[0];
    let mut min = orbit.nodes[0];
    for (_, s) in &prof {
        max = State4::new(
            max.u.max(s.u),
            max.v.max(s.v),
            max.r.max(s.r),
            max.psi.max(s.psi),
        );
        min = State4::new(
            min.u.min(s.u),
            min.v.min(s.v),
            min.r.min(s.r),
            min.psi.min(s.psi),
        );
    }
    orbit.max = max;
    orbit.min = min;
    Ok(())
}

impl PeriodicOrbit {
    /// This orbit as a starting guess at `gains`.
    pub fn as_guess(&self, gains: &ControlGains) -> OrbitGuess {
        OrbitGuess {
            gains: *gains,
            period: self.period,
            nodes: self.nodes.clone(),
            winding: self.winding,
        }
    }
}

/// Phase-aligned distance from `s` to the orbit: the smallest
/// `(u, v, r, psi)` distance over the orbit, with `psi` taken modulo a
/// full turn when the law is sinusoidal.
pub fn orbit_distance(
    ship: &Ship,
    gains: &ControlGains,
    orbit: &PeriodicOrbit,
    s: &State4,
) -> Result<f64> {
    let turn = 2.0 * PI * ship.lpp();
    let dist = |x: &State4| {
        let mut dpsi = x.psi - s.psi;
        if gains.law == ControlLaw::Sinusoidal {
            dpsi -= turn * (dpsi / turn).round();
        }
        ((x.u - s.u).powi(2) + (x.v - s.v).powi(2) + (x.r - s.r).powi(2) + dpsi * dpsi).sqrt()
    };
    let m = orbit.nodes.len();
    let dt = orbit.period / m as f64;
    let opts = IntegratorOptions::with_tol(1e-11)?;
    let sys = crate::dynamics::ShipSystem {
        ship,
        gains: *gains,
    };
    let sols: Vec<crate::dynamics::Solution> = (0..m)
        .into_par_iter()
        .map(|i| crate::dynamics::Solution::solve(&sys, 0.0, &orbit.nodes[i].to_array(), dt, &opts))
        .collect::<Result<_>>()?;
    let at = |i: usize, t: f64| State4::from_slice(&sols[i].at(t));
    let samples = 200;
    let mut best = (f64::INFINITY, 0, 0.0);
    for i in 0..m {
        for k in 0..=samples {
            let t = dt * k as f64 / samples as f64;
            let d = dist(&at(i, t));
            if d < best.0 {
                best = (d, i, t);
            }
        }
    }
    // golden-section refinement around the best sample; a sample on a node
    // is shared by two segments, so search both sides
    let (_, i, t) = best;
    let h = dt / samples as f64;
    let mut brackets = vec![(i, (t - h).max(0.0), (t + h).min(dt))];
    if t <= 0.0 {
        brackets.push(((i + m - 1) % m, dt - h, dt));
    }
    if t >= dt {
        brackets.push(((i + 1) % m, 0.0, h));
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut out = best.0;
    for (i, mut a, mut b) in brackets {
        for _ in 0..80 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if dist(&at(i, c)) < dist(&at(i, d)) {
                b = d;
            } else {
                a = c;
            }
        }
        out = out.min(dist(&at(i, 0.5 * (a + b))));
    }
    Ok(out)
}

/// Newton correction of `guess` at its own parameter value.
pub fn correct_orbit(
    ship: &Ship,
    free: FreeParam,
    guess: &OrbitGuess,
    opts: &ContinuationOptions,
) -> Result<BranchPoint> {
    let integ = IntegratorOptions::with_tol(opts.integration_tol)?;
    let m = guess.nodes.len();
    let mut prob = Shooting {
        ship,
        gains: guess.gains,
        free,
        m,
        winding: guess.winding,
        anchor: guess.nodes[0].to_array(),
        anchor_field: [0.0; 4],
        integ,
    };
    let mut z = DVector::zeros(prob.size());
    for (i, s) in guess.nodes.iter().enumerate() {
        for (c, v) in s.to_array().iter().enumerate() {
            z[4 * i + c] = *v;
        }
    }
    z[4 * m] = guess.period;
    z[4 * m + 1] = free.get(&guess.gains);
    prob.set_anchor(&z);
    let w = prob.weights();
    let mut e = DVector::zeros(prob.size());
    e[4 * m + 1] = 1.0;
    let c = correct(&|z| prob.system(z), &z, &e, &w, opts)?;
    orbit_point(&prob, &c.z, c.residual, 0.0, opts)
}

/// Orbit of `branch` corrected at `value` of the free parameter, seeded
/// from the nearest branch point.
pub fn orbit_at(
    ship: &Ship,
    branch: &Branch,
    value: f64,
    opts: &ContinuationOptions,
) -> Result<BranchPoint> {
    let near = branch
        .points
        .iter()
        .filter(|p| p.orbit().is_some())
        .min_by(|a, b| (a.param - value).abs().total_cmp(&(b.param - value).abs()))
        .ok_or(Error::InvalidState)?;
    let orbit = near.orbit().unwrap();
    let gains = branch.free.set(&near.gains, value);
    correct_orbit(ship, branch.free, &orbit.as_guess(&gains), opts)
}

/// Initial data for periodic-orbit continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitGuess {
    pub gains: ControlGains,
    pub period: f64,
    /// States at `t = i T / m`.
    pub nodes: Vec<State4>,
    pub winding: i64,
}

fn segments_for(period: f64, opts: &ContinuationOptions) -> usize {
    opts.min_segments
        .max((period / opts.segment_time).ceil() as usize)
}

/// Resample the nodes of `z` (m segments) onto `m_new` segments.
fn regrid(
    ship: &Ship,
    gains: &ControlGains,
    z: &DVector<f64>,
    m: usize,
    m_new: usize,
    integ: &IntegratorOptions,
) -> Result<DVector<f64>> {
    let period = z[4 * m];
    let dt = period / m as f64;
    let dt_new = period / m_new as f64;
    let sys = crate::dynamics::ShipSystem {
        ship,
        gains: *gains,
    };
    let nodes: Vec<Result<[f64; 4]>> = (0..m_new)
        .into_par_iter()
        .map(|j| {
            let t = j as f64 * dt_new;
            let k = ((t / dt).floor() as usize).min(m - 1);
            let x: Vec<f64> = (0..4).map(|c| z[4 * k + c]).collect();
            let local = t - k as f64 * dt;
            let (y, _) = integrate_system(&sys, 0.0, &x, local, integ, |_| {})?;
            Ok([y[0], y[1], y[2], y[3]])
        })
        .collect();
    let mut out = DVector::zeros(4 * m_new + 2);
    for (j, x) in nodes.into_iter().enumerate() {
        let x = x?;
        for c in 0..4 {
            out[4 * j + c] = x[c];
        }
    }
    out[4 * m_new] = period;
    out[4 * m_new + 1] = z[4 * m + 1];
    Ok(out)
}

/// Continue periodic orbits from `guess` in `free` towards `target`.
///
/// The first point is corrected at the guess parameter; orbits longer
/// than `opts.t_max` end the branch with `PeriodBlowup`.
pub fn continue_orbits(
    ship: &Ship,
    free: FreeParam,
    guess: &OrbitGuess,
    target: f64,
    opts: &ContinuationOptions,
) -> Result<Branch> {
    if guess.winding != 0 && guess.gains.law == ControlLaw::Linear {
        return Err(Error::InvalidParameter {
            key: "winding".into(),
            reason: "nonzero winding needs the sinusoidal law".into(),
        });
    }
    let integ = IntegratorOptions::with_tol(opts.integration_tol)?;
    let m = guess.nodes.len();
    let p0 = free.get(&guess.gains);
    let mut prob = Shooting {
        ship,
        gains: guess.gains,
        free,
        m,
        winding: guess.winding,
        anchor: guess.nodes[0].to_array(),
        anchor_field: [0.0; 4],
        integ,
    };
    let mut z = DVector::zeros(prob.size());
    for (i, s) in guess.nodes.iter().enumerate() {
        for (c, v) in s.to_array().iter().enumerate() {
            z[4 * i + c] = *v;
        }
    }
    z[4 * m] = guess.period;
    z[4 * m + 1] = p0;
    prob.set_anchor(&z);
    let mut w = prob.weights();
    let mut e = DVector::zeros(prob.size());
    e[4 * m + 1] = 1.0;
    let c = correct(&|z| prob.system(z), &z, &e, &w, opts)?;
    let dir = if target >= p0 { 1.0 } else { -1.0 };
    let mut t = tangent(&c.jac, &(e * dir), &w)?;
    z = c.z;
    let mut points = vec![orbit_point(&prob, &z, c.residual, 0.0, opts)?];
    let mut ds = opts.ds;
    let termination;
    let (lo, hi) = if target >= p0 {
        (f64::NEG_INFINITY, target)
    } else {
        (target, f64::INFINITY)
    };
    loop {
        if points.len() >= opts.max_points {
            termination = "maximum number of points".to_string();
            break;
        }
        prob.set_anchor(&z);
        let pred = &z + &t * ds;
        let c = match correct(&|z| prob.system(z), &pred, &t, &w, opts) {
            Ok(c) if c.z[4 * prob.m] > 0.0 => c,
            Ok(_) | Err(_) => {
                ds *= 0.5;
                if ds < opts.ds_min {
                    termination = "step size underflow".to_string();
                    break;
                }
                continue;
            }
        };
        let t_new = tangent(&c.jac, &t, &w)?;
        let mut pt = orbit_point(&prob, &c.z, c.residual, ds, opts)?;
        let period = c.z[4 * prob.m];
        if t_new[4 * prob.m + 1] * t[4 * prob.m + 1] < 0.0 {
            pt.event = Event::Fold;
        }
        let p = c.z[4 * prob.m + 1];
        z = c.z;
        t = t_new;
        if period > opts.t_max {
            pt.event = Event::PeriodBlowup;
            points.push(pt);
            termination = format!("period {period:.1} exceeds {:.0}", opts.t_max);
            break;
        }
        points.push(pt);
        if p > hi || p < lo {
            termination = "reached parameter bound".to_string();
            break;
        }
        if stagnated(&points) {
            points.last_mut().unwrap().event = Event::PeriodBlowup;
            termination =
                format!("parameter stagnated at {p:.6} while the period grew to {period:.1}");
            break;
        }
        if c.iterations <= 3 {
            ds = (ds * 1.3).min(opts.ds_max);
        } else if c.iterations > 5 {
            ds *= 0.6;
        }
        let m_need = segments_for(period, opts);
        if m_need > prob.m + prob.m / 4 {
            let g = free.set(&guess.gains, p);
            let z_new = regrid(ship, &g, &z, prob.m, m_need, &integ)?;
            // carry the period/parameter part of the tangent over
            let mut guess_t = DVector::zeros(4 * m_need + 2);
            guess_t[4 * m_need] = t[4 * prob.m];
            guess_t[4 * m_need + 1] = t[4 * prob.m + 1];
            prob.m = m_need;
            w = prob.weights();
            prob.set_anchor(&z_new);
            let mut e = DVector::zeros(prob.size());
            e[4 * m_need + 1] = 1.0;
            let c = correct(&|z| prob.system(z), &z_new, &e, &w, opts)?;
            z = c.z;
            t = tangent(&c.jac, &guess_t, &w)?;
        }
    }
    if let Some(last) = points.last_mut() {
        if last.event == Event::None && termination.starts_with("step size") {
            let first_t = points_period(&points, 0);
            let last_t = points_period(&points, points.len() - 1);
            if last_t > 20.0 * first_t {
                points.last_mut().unwrap().event = Event::PeriodBlowup;
            }
        }
    }
    Ok(Branch {
        free,
        points,
        termination,
    })
}

/// Heteroclinic approach: the parameter no longer moves (to round-off)
/// while the period keeps growing.
fn stagnated(points: &[BranchPoint]) -> bool {
    let n = points.len();
    if n <= STAGNATION_WINDOW {
        return false;
    }
    let a = &points[n - 1 - STAGNATION_WINDOW];
    let b = &points[n - 1];
    let (ta, tb) = (
        points_period(points, n - 1 - STAGNATION_WINDOW),
        points_period(points, n - 1),
    );
    let t0 = points_period(points, 0);
    (b.param - a.param).abs() < 1e-9 * (1.0 + b.param.abs()) && tb > ta && tb > 20.0 * t0
}

fn points_period(points: &[BranchPoint], i: usize) -> f64 {
    points[i].orbit().map(|o| o.period).unwrap_or(0.0)
}

fn orbit_point(
    prob: &Shooting<'_>,
    z: &DVector<f64>,
    residual: f64,
    step: f64,
    opts: &ContinuationOptions,
) -> Result<BranchPoint> {
    let flows = prob.flows(z)?;
    let p = z[4 * prob.m + 1];
    let gains = prob.free.set(&prob.gains, p);
    let mut orbit = prob.orbit(z, &flows, residual);
    refine_extrema(prob.ship, &gains, &mut orbit, opts.integration_tol)?;
    Ok(BranchPoint {
        param: p,
        gains,
        stable: orbit.is_stable(),
        spectrum: orbit.multipliers.clone(),
        payload: Payload::Orbit(orbit),
        event: Event::None,
        residual,
        step,
    })
}

/// Linear-normal-form orbit near a Hopf point: radius `-2 pi mu / Sigma`
/// in the `(a, b)` plane at a parameter offset into the unstable side.
pub fn hopf_seed(
    ship: &Ship,
    law: ControlLaw,
    free: FreeParam,
    frame: &HopfFrame,
    sigma: &SigmaResult,
    offset: f64,
    segments: usize,
) -> Result<OrbitGuess> {
    let gc = ControlGains::new(frame.gains.eps_r, frame.gains.eps_psi, law);
    let pc = free.get(&gc);
    let mu_at = |p: f64| linearize(ship, &free.set(&gc, p), frame.u0).max_real_part();
    let h = offset.abs().max(1e-8);
    let side = if mu_at(pc + h) > mu_at(pc - h) {
        1.0
    } else {
        -1.0
    };
    let gains = free.set(&gc, pc + side * h);
    let lin = linearize(ship, &gains, frame.u0);
    let pair = lin
        .eigenvalues
        .iter()
        .find(|z| z.im > 0.0)
        .copied()
        .ok_or(Error::NotOscillatory(0.0))?;
    let (mu, omega) = (pair.re, pair.im);
    let radius = -2.0 * PI * mu / sigma.sigma;
    if !(radius > 0.0) {
        return Err(Error::DegenerateCriticality(sigma.sigma));
    }
    let period = 2.0 * PI / omega;
    let m = segments.max(1);
    let nodes = (0..m)
        .map(|i| {
            let th = 2.0 * PI * i as f64 / m as f64;
            let (s, c) = th.sin_cos();
            let y: Vec<f64> = (0..3)
                .map(|k| radius * (c * frame.a[k] + s * frame.b[k]))
                .collect();
            State4::new(frame.u0, y[0], y[1], y[2])
        })
        .collect();
    Ok(OrbitGuess {
        gains,
        period,
        nodes,
        winding: 0,
    })
}

/// Periodic orbits born at the Hopf point `frame`, continued in `free`
/// towards `target`.
pub fn continue_periodic(
    ship: &Ship,
    law: ControlLaw,
    free: FreeParam,
    frame: &HopfFrame,
    sigma: &SigmaResult,
    target: f64,
    opts: &ContinuationOptions,
) -> Result<Branch> {
    let seed = hopf_seed(
        ship,
        law,
        free,
        frame,
        sigma,
        opts.hopf_offset,
        opts.min_segments,
    )?;
    let mut b = continue_orbits(ship, free, &seed, target, opts)?;
    if let Some(p) = b.points.first_mut() {
        if p.event == Event::None {
            p.event = Event::Hopf;
        }
    }
    Ok(b)
}

/// Rigid rotation at an equilibrium of the reduced system with `r != 0`,
/// viewed as a periodic orbit of winding `sign(r)` in the full model.
pub fn rotation_orbit(
    ship: &Ship,
    gains: &ControlGains,
    eq: &State4,
    segments: usize,
) -> Result<OrbitGuess> {
    if eq.r == 0.0 {
        return Err(Error::InvalidState);
    }
    let period = 2.0 * PI * ship.lpp() / eq.r.abs();
    let m = segments.max(1);
    let nodes = (0..m)
        .map(|i| State4::new(eq.u, eq.v, eq.r, eq.r * period * i as f64 / m as f64))
        .collect();
    Ok(OrbitGuess {
        gains: *gains,
        period,
        nodes,
        winding: eq.r.signum() as i64,
    })
}

/// Mean radius of an orbit in the coordinates `T^{-1} (v, r, psi)` of
/// the Hopf frame, projected on the critical plane.
pub fn frame_radius(
    ship: &Ship,
    gains: &ControlGains,
    frame: &HopfFrame,
    orbit: &PeriodicOrbit,
) -> Result<f64> {
    let prof = orbit.profile(ship, gains, 32, 1e-11)?;
    let n = prof.len() - 1;
    let mut acc = 0.0;
    for (_, s) in &prof[..n] {
        let x = [s.v, s.r, s.psi];
        let y1: f64 = (0..3).map(|k| frame.t_inv[0][k] * x[k]).sum();
        let y2: f64 = (0..3).map(|k| frame.t_inv[1][k] * x[k]).sum();
        acc += y1.hypot(y2);
    }
    Ok(acc / n as f64)
}

// ---------------------------------------------------------------------
// Hopf locus

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocusPoint {
    pub eps_r: f64,
    pub eps_psi: f64,
    /// Frequency of the critical pair, `sqrt(c1)`.
    pub omega: f64,
    pub c0: f64,
    pub c2: f64,
    pub event: Event,
}

fn marginality(ship: &Ship, u0: f64, er: f64, ep: f64) -> (f64, f64, f64, f64) {
    let lin = linearize(ship, &ControlGains::linear(er, ep), u0);
    (lin.c2 * lin.c1 - lin.c0, lin.c0, lin.c1, lin.c2)
}

/// Two-parameter continuation of `c2 c1 - c0 = 0` in `(eps_r, eps_psi)`
/// from the `eps_psi` axis down to `eps_psi = 0`.
pub fn track_hopf_locus(ship: &Ship, u0: f64, ds: f64) -> Result<Vec<LocusPoint>> {
    let g = |er: f64, ep: f64| marginality(ship, u0, er, ep).0;
    let grad = |er: f64, ep: f64| {
        let h = 1e-6;
        [
            (g(er + h, ep) - g(er - h, ep)) / (2.0 * h),
            (g(er, ep + h) - g(er, ep - h)) / (2.0 * h),
        ]
    };
    // bracket the axis crossing
    let mut lo = 0.0;
    let mut hi = 1.0;
    let g0 = g(0.0, 0.0);
    while (g(0.0, hi) > 0.0) == (g0 > 0.0) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e7 {
            return Err(Error::Convergence(
                "no boundary crossing on the eps_psi axis".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (g(0.0, mid) > 0.0) == (g0 > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = [0.0, 0.5 * (lo + hi)];
    let point = |x: [f64; 2]| {
        let (_, c0, c1, c2) = marginality(ship, u0, x[0], x[1]);
        LocusPoint {
            eps_r: x[0],
            eps_psi: x[1],
            omega: c1.max(0.0).sqrt(),
            c0,
            c2,
            event: if c0 > 0.0 && c2 > 0.0 && c1 > 0.0 {
                Event::Hopf
            } else {
                Event::None
            },
        }
    };
    let mut out = vec![point(x)];
    let gr = grad(x[0], x[1]);
    let mut t = [gr[1], -gr[0]];
    if t[0] < 0.0 {
        t = [-t[0], -t[1]];
    }
    let nt = t[0].hypot(t[1]);
    t = [t[0] / nt, t[1] / nt];
    for _ in 0..1_000_000 {
        let pred = [x[0] + ds * t[0], x[1] + ds * t[1]];
        let mut y = pred;
        for _ in 0..50 {
            let r = g(y[0], y[1]);
            let gr = grad(y[0], y[1]);
            // Newton on [g = 0, t . (y - pred) = 0]
            let det = gr[0] * t[1] - gr[1] * t[0];
            let arc = t[0] * (y[0] - pred[0]) + t[1] * (y[1] - pred[1]);
            let d0 = (-r * t[1] + arc * gr[1]) / det;
            let d1 = (-gr[0] * arc + r * t[0]) / det;
            y = [y[0] + d0, y[1] + d1];
            if d0.abs().max(d1.abs()) < 1e-13 * (1.0 + y[0].abs() + y[1].abs()) {
                break;
            }
        }
        if y[1] <= 0.0 {
            // land exactly on eps_psi = 0
            let mut er = x[0];
            for _ in 0..100 {
                let d = (g(er + 1e-6, 0.0) - g(er - 1e-6, 0.0)) / 2e-6;
                let step = g(er, 0.0) / d;
                er -= step;
                if step.abs() < 1e-13 * er.abs().max(1.0) {
                    break;
                }
            }
            out.push(point([er, 0.0]));
            return Ok(out);
        }
        let gr = grad(y[0], y[1]);
        let mut tn = [gr[1], -gr[0]];
        if tn[0] * t[0] + tn[1] * t[1] < 0.0 {
            tn = [-tn[0], -tn[1]];
        }
        let nt = tn[0].hypot(tn[1]);
        t = [tn[0] / nt, tn[1] / nt];
        x = y;
        out.push(point(x));
    }
    Err(Error::Convergence(
        "Hopf locus did not reach eps_psi = 0".into(),
    ))
}
