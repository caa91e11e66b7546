//! Time integration, Earth-fixed tracks and thruster-angle traces.

use std::f64::consts::PI;
use std::fmt;

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ControlGains, ControlLaw, Ship, State4};

/// Autonomous or non-autonomous first-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
    /// Classical RK4 with this constant step instead of the adaptive pair.
    pub fixed_step: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rtol: 1e-9,
            atol: 1e-9,
            h0: None,
            h_max: f64::INFINITY,
            h_min: 1e-13,
            max_steps: 50_000_000,
            fixed_step: None,
        }
    }
}

impl IntegratorOptions {
    pub fn with_tol(tol: f64) -> Result<Self> {
        if !(1e-12..=1e-3).contains(&tol) {
            return Err(Error::InvalidTolerance(tol));
        }
        Ok(IntegratorOptions {
            rtol: tol,
            atol: tol,
            ..Default::default()
        })
    }

    pub fn fixed(h: f64) -> Self {
        IntegratorOptions {
            fixed_step: Some(h),
            ..Default::default()
        }
    }
}

/// One accepted step: `y(t0 + theta h)` is
/// `r1 + theta (r2 + (1-theta) (r3 + theta (r4 + (1-theta) r5)))`.
#[derive(Debug, Clone, Copy)]
pub struct Step<'a> {
    pub t0: f64,
    pub h: f64,
    pub y1: &'a [f64],
    pub dense: &'a [f64],
}

fn dense_eval(dense: &[f64], n: usize, theta: f64, out: &mut [f64]) {
    let t1 = 1.0 - theta;
    for i in 0..n {
        let r = |k: usize| dense[k * n + i];
        out[i] = r(0) + theta * (r(1) + t1 * (r(2) + theta * (r(3) + t1 * r(4))));
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Integrate from `t0` to `t1` (`t1 > t0`), calling `observer` after
/// every accepted step. Returns the final state.
pub fn integrate_system<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t1: f64,
    opts: &IntegratorOptions,
    mut observer: impl FnMut(Step<'_>),
) -> Result<(Vec<f64>, IntegrationStats)> {
    let n = sys.dim();
    assert_eq!(y0.len(), n, "state dimension");
    if y0.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidState);
    }
    if !(t1 >= t0) {
        return Err(Error::InvalidState);
    }
    if let Some(h) = opts.fixed_step {
        return rk4(sys, t0, y0, t1, h, observer);
    }
    let mut stats = IntegrationStats::default();
    let mut y = y0.to_vec();
    let mut t = t0;
    if t1 == t0 {
        return Ok((y, stats));
    }
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut dense = vec![0.0; 5 * n];
    sys.eval(t, &y, &mut k[0]);
    stats.evaluations += 1;
    let span = t1 - t0;
    let mut h = match opts.h0 {
        Some(h) => h,
        None => initial_step(sys, t, &y, &k[0], opts, span, &mut stats),
    }
    .min(opts.h_max)
    .min(span);
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    loop {
        if stats.accepted + stats.rejected > opts.max_steps {
            return Err(Error::Convergence(format!(
                "integrator exceeded {} steps at t = {t}",
                opts.max_steps
            )));
        }
        let remaining = t1 - t;
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h < opts.h_min && !last {
            return Err(Error::StepUnderflow {
                t,
                h_min: opts.h_min,
                state: y.clone(),
            });
        }
        let (k1, rest) = k.split_first_mut().unwrap();
        let [k2, k3, k4, k5, k6, k7] = rest else {
            unreachable!()
        };
        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.eval(t + C2 * h, &ytmp, k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.eval(t + C3 * h, &ytmp, k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.eval(t + C4 * h, &ytmp, k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.eval(t + C5 * h, &ytmp, k5);
        for i in 0..n {
            ytmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.eval(t + h, &ytmp, k6);
        for i in 0..n {
            ynew[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        sys.eval(t + h, &ynew, k7);
        stats.evaluations += 6;
        let mut e2 = 0.0;
        for i in 0..n {
            err[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            e2 += (err[i] / sc).powi(2);
        }
        let e = (e2 / n as f64).sqrt();
        if !e.is_finite() {
            stats.rejected += 1;
            h *= 0.2;
            last_rejected = true;
            continue;
        }
        // PI step-size control (Hairer & Wanner, beta = 0.04)
        let fac11 = e.powf(0.2 - 0.04 * 0.75);
        let mut fac = fac11 / facold.powf(0.04);
        fac = (fac / 0.9).clamp(0.1, 5.0);
        let hnew = h / fac;
        if e <= 1.0 {
            facold = e.max(1e-4);
            for i in 0..n {
                let ydiff = ynew[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                dense[i] = y[i];
                dense[n + i] = ydiff;
                dense[2 * n + i] = bspl;
                dense[3 * n + i] = ydiff - h * k7[i] - bspl;
                dense[4 * n + i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            stats.accepted += 1;
            observer(Step {
                t0: t,
                h,
                y1: &ynew,
                dense: &dense,
            });
            t = if last { t1 } else { t + h };
            std::mem::swap(&mut y, &mut ynew);
            let (k1, rest) = k.split_first_mut().unwrap();
            k1.copy_from_slice(&rest[5]);
            if last {
                return Ok((y, stats));
            }
            let mut hn = hnew.min(opts.h_max);
            if last_rejected {
                hn = hn.min(h);
            }
            last_rejected = false;
            h = hn;
        } else {
            stats.rejected += 1;
            h /= (fac11 / 0.9).clamp(1.0, 10.0);
            last_rejected = true;
        }
    }
}

fn initial_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    f0: &[f64],
    opts: &IntegratorOptions,
    span: f64,
    stats: &mut IntegrationStats,
) -> f64 {
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let d0 = (y.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (f0
        .iter()
        .zip(&sc)
        .map(|(v, s)| (v / s).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(v, f)| v + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    sys.eval(t + h0, &y1, &mut f1);
    stats.evaluations += 1;
    let d2 = (f1
        .iter()
        .zip(f0)
        .zip(&sc)
        .map(|((a, b), s)| ((a - b) / s).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

fn rk4<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t1: f64,
    h_nominal: f64,
    mut observer: impl FnMut(Step<'_>),
) -> Result<(Vec<f64>, IntegrationStats)> {
    if !(h_nominal > 0.0) {
        return Err(Error::InvalidTolerance(h_nominal));
    }
    let n = sys.dim();
    let steps = ((t1 - t0) / h_nominal).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let mut stats = IntegrationStats::default();
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut f1 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut dense = vec![0.0; 5 * n];
    sys.eval(t0, &y, &mut k1);
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        sys.eval(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        sys.eval(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        sys.eval(t + h, &tmp, &mut k4);
        for i in 0..n {
            ynew[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if ynew.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidState);
        }
        sys.eval(t + h, &ynew, &mut f1);
        stats.evaluations += 4;
        stats.accepted += 1;
        // cubic Hermite interpolant in the same layout as the adaptive pair
        for i in 0..n {
            let ydiff = ynew[i] - y[i];
            let bspl = h * k1[i] - ydiff;
            dense[i] = y[i];
            dense[n + i] = ydiff;
            dense[2 * n + i] = bspl;
            dense[3 * n + i] = ydiff - h * f1[i] - bspl;
            dense[4 * n + i] = 0.0;
        }
        observer(Step {
            t0: t,
            h,
            y1: &ynew,
            dense: &dense,
        });
        std::mem::swap(&mut y, &mut ynew);
        std::mem::swap(&mut k1, &mut f1);
    }
    Ok((y, stats))
}

/// Stored solution with dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    dense: Vec<f64>,
    pub stats: IntegrationStats,
}

impl Solution {
    pub fn solve<S: OdeSystem + ?Sized>(
        sys: &S,
        t0: f64,
        y0: &[f64],
        t1: f64,
        opts: &IntegratorOptions,
    ) -> Result<Solution> {
        let n = sys.dim();
        let mut times = vec![t0];
        let mut states = y0.to_vec();
        let mut dense = Vec::new();
        let (_, stats) = integrate_system(sys, t0, y0, t1, opts, |step| {
            times.push(if !times.is_empty() && step.t0 + step.h > t1 {
                t1
            } else {
                step.t0 + step.h
            });
            states.extend_from_slice(step.y1);
            dense.extend_from_slice(step.dense);
        })?;
        if let Some(last) = times.last_mut() {
            if (*last - t1).abs() < 1e-9 * t1.abs().max(1.0) {
                *last = t1;
            }
        }
        Ok(Solution {
            dim: n,
            times,
            states,
            dense,
            stats,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Step index `i` such that `times[i] <= t <= times[i + 1]`.
    fn locate(&self, t: f64) -> usize {
        let n = self.times.len();
        if n < 2 {
            return 0;
        }
        match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Dense-output value at `t` (clamped to the integration interval).
    pub fn at(&self, t: f64) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n];
        if self.times.len() < 2 {
            out.copy_from_slice(self.state(0));
            return out;
        }
        let t = t.clamp(self.times[0], *self.times.last().unwrap());
        let i = self.locate(t);
        let (a, b) = (self.times[i], self.times[i + 1]);
        if t == a {
            out.copy_from_slice(self.state(i));
            return out;
        }
        if t == b {
            out.copy_from_slice(self.state(i + 1));
            return out;
        }
        let theta = (t - a) / (b - a);
        dense_eval(&self.dense[i * 5 * n..(i + 1) * 5 * n], n, theta, &mut out);
        out
    }

    /// Values at `count` equally spaced times spanning the solution.
    pub fn resample(&self, count: usize) -> Vec<(f64, Vec<f64>)> {
        let (a, b) = (self.times[0], *self.times.last().unwrap());
        (0..count)
            .map(|i| {
                let t = if count == 1 {
                    a
                } else {
                    a + (b - a) * i as f64 / (count - 1) as f64
                };
                (t, self.at(t))
            })
            .collect()
    }

    /// Integral of `g(t, y(t))` over the solution, by 5-point Gauss-Legendre
    /// per step on the dense output.
    pub fn quadrature(&self, mut g: impl FnMut(f64, &[f64]) -> [f64; 2]) -> Vec<[f64; 2]> {
        let rule = GaussLegendre::new(5).expect("order 5");
        let nodes: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
        let n = self.dim;
        let mut acc = [0.0; 2];
        let mut out = vec![acc];
        let mut y = vec![0.0; n];
        for i in 0..self.len().saturating_sub(1) {
            let (a, b) = (self.times[i], self.times[i + 1]);
            let h = b - a;
            let dense = &self.dense[i * 5 * n..(i + 1) * 5 * n];
            for &(x, w) in &nodes {
                let theta = 0.5 * (x + 1.0);
                dense_eval(dense, n, theta, &mut y);
                let v = g(a + theta * h, &y);
                acc[0] += 0.5 * h * w * v[0];
                acc[1] += 0.5 * h * w * v[1];
            }
            out.push(acc);
        }
        out
    }
}

/// The ship vector field as an [`OdeSystem`].
pub struct ShipSystem<'a> {
    pub ship: &'a Ship,
    pub gains: ControlGains,
}

impl OdeSystem for ShipSystem<'_> {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let f = self.ship.rhs(&self.gains, &State4::from_slice(y));
        dy.copy_from_slice(&f.to_array());
    }
}

/// Ship vector field extended by the Earth-fixed position `(x, y)`.
pub struct TrackedShipSystem<'a> {
    pub ship: &'a Ship,
    pub gains: ControlGains,
}

impl OdeSystem for TrackedShipSystem<'_> {
    fn dim(&self) -> usize {
        6
    }

    fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let s = State4::from_slice(y);
        let f = self.ship.rhs(&self.gains, &s);
        dy[..4].copy_from_slice(&f.to_array());
        let [dx, dyy] = track_velocity(self.ship.lpp(), &s);
        dy[4] = dx;
        dy[5] = dyy;
    }
}

/// `z' = (u + i v) exp(i psi_phys)` as `(x', y')`.
pub fn track_velocity(lpp: f64, s: &State4) -> [f64; 2] {
    let (sn, cs) = (s.psi / lpp).sin_cos();
    [s.u * cs - s.v * sn, s.u * sn + s.v * cs]
}

/// A simulated trajectory of the 4D model.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub gains: ControlGains,
    pub lpp: f64,
    pub solution: Solution,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        self.solution.times()
    }

    pub fn len(&self) -> usize {
        self.solution.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solution.is_empty()
    }

    pub fn state(&self, i: usize) -> State4 {
        State4::from_slice(self.solution.state(i))
    }

    pub fn states(&self) -> Vec<State4> {
        (0..self.len()).map(|i| self.state(i)).collect()
    }

    pub fn last(&self) -> State4 {
        State4::from_slice(self.solution.last())
    }

    pub fn at(&self, t: f64) -> State4 {
        State4::from_slice(&self.solution.at(t))
    }

    pub fn t_end(&self) -> f64 {
        *self.times().last().unwrap()
    }

    /// Steering angle along the trajectory, in degrees.
    pub fn eta_deg(&self, s: &State4) -> f64 {
        self.gains.eta(self.lpp, s).to_degrees()
    }
}

/// Adaptive simulation with mixed tolerance `tol` in `[1e-12, 1e-3]`.
pub fn integrate(
    ship: &Ship,
    gains: &ControlGains,
    s0: &State4,
    t_end: f64,
    tol: f64,
) -> Result<Trajectory> {
    let opts = IntegratorOptions::with_tol(tol)?;
    integrate_with(ship, gains, s0, t_end, &opts)
}

pub fn integrate_with(
    ship: &Ship,
    gains: &ControlGains,
    s0: &State4,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    let sys = ShipSystem {
        ship,
        gains: *gains,
    };
    let solution = Solution::solve(&sys, 0.0, &s0.to_array(), t_end, opts)?;
    Ok(Trajectory {
        gains: *gains,
        lpp: ship.lpp(),
        solution,
    })
}

/// Fixed-step RK4 simulation, bit-reproducible across runs.
pub fn integrate_fixed(
    ship: &Ship,
    gains: &ControlGains,
    s0: &State4,
    t_end: f64,
    h: f64,
) -> Result<Trajectory> {
    integrate_with(ship, gains, s0, t_end, &IntegratorOptions::fixed(h))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarthTrack {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Heading in radians.
    pub heading: Vec<f64>,
    pub eta_deg: Vec<f64>,
}

/// Earth-fixed track `z(t) = z0 + int (u + i v) exp(i psi) dt`.
pub fn earth_track(traj: &Trajectory, z0: [f64; 2]) -> EarthTrack {
    let lpp = traj.lpp;
    let integrals = traj
        .solution
        .quadrature(|_, y| track_velocity(lpp, &State4::from_slice(y)));
    let states = traj.states();
    EarthTrack {
        times: traj.times().to_vec(),
        x: integrals.iter().map(|p| z0[0] + p[0]).collect(),
        y: integrals.iter().map(|p| z0[1] + p[1]).collect(),
        heading: states.iter().map(|s| s.psi / lpp).collect(),
        eta_deg: states.iter().map(|s| traj.eta_deg(s)).collect(),
    }
}

/// Simulation with the track integrated as two extra states.
pub fn integrate_tracked(
    ship: &Ship,
    gains: &ControlGains,
    s0: &State4,
    z0: [f64; 2],
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<(Trajectory, EarthTrack)> {
    let sys = TrackedShipSystem {
        ship,
        gains: *gains,
    };
    let mut y0 = s0.to_array().to_vec();
    y0.extend_from_slice(&z0);
    let full = Solution::solve(&sys, 0.0, &y0, t_end, opts)?;
    let n = full.len();
    let mut times = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(4 * n);
    let mut dense = Vec::with_capacity(20 * n);
    let mut track = EarthTrack {
        times: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        heading: Vec::with_capacity(n),
        eta_deg: Vec::with_capacity(n),
    };
    for i in 0..n {
        let y = full.state(i);
        let s = State4::from_slice(y);
        times.push(full.times[i]);
        states.extend_from_slice(&y[..4]);
        track.times.push(full.times[i]);
        track.x.push(y[4]);
        track.y.push(y[5]);
        track.heading.push(s.psi / ship.lpp());
        track.eta_deg.push(gains.eta(ship.lpp(), &s).to_degrees());
        if i + 1 < n {
            let d = &full.dense[i * 30..(i + 1) * 30];
            for k in 0..5 {
                dense.extend_from_slice(&d[k * 6..k * 6 + 4]);
            }
        }
    }
    let traj = Trajectory {
        gains: *gains,
        lpp: ship.lpp(),
        solution: Solution {
            dim: 4,
            times,
            states,
            dense,
            stats: full.stats,
        },
    };
    Ok((traj, track))
}

impl EarthTrack {
    /// Rigid rotation of the track about the origin by `angle`.
    pub fn rotated(&self, angle: f64) -> EarthTrack {
        let (s, c) = angle.sin_cos();
        EarthTrack {
            times: self.times.clone(),
            x: self
                .x
                .iter()
                .zip(&self.y)
                .map(|(x, y)| c * x - s * y)
                .collect(),
            y: self
                .x
                .iter()
                .zip(&self.y)
                .map(|(x, y)| s * x + c * y)
                .collect(),
            heading: self.heading.iter().map(|h| h + angle).collect(),
            eta_deg: self.eta_deg.clone(),
        }
    }

    /// Algebraic least-squares circle `(cx, cy, radius)`.
    pub fn fit_circle(&self) -> Option<(f64, f64, f64)> {
        let n = self.x.len();
        if n < 3 {
            return None;
        }
        let mx = self.x.iter().sum::<f64>() / n as f64;
        let my = self.y.iter().sum::<f64>() / n as f64;
        let (mut suu, mut svv, mut suv, mut suuu, mut svvv, mut suvv, mut svuu) =
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (x, y) in self.x.iter().zip(&self.y) {
            let (u, v) = (x - mx, y - my);
            suu += u * u;
            svv += v * v;
            suv += u * v;
            suuu += u * u * u;
            svvv += v * v * v;
            suvv += u * v * v;
            svuu += v * u * u;
        }
        let det = suu * svv - suv * suv;
        if det.abs() < 1e-300 {
            return None;
        }
        let b1 = 0.5 * (suuu + suvv);
        let b2 = 0.5 * (svvv + svuu);
        let uc = (b1 * svv - b2 * suv) / det;
        let vc = (suu * b2 - suv * b1) / det;
        let r = (uc * uc + vc * vc + (suu + svv) / n as f64).sqrt();
        Some((uc + mx, vc + my, r))
    }

    /// Number of proper crossings between non-adjacent segments of the
    /// polyline restricted to `t0 <= t <= t1`.
    pub fn self_intersections(&self, t0: f64, t1: f64) -> usize {
        let idx: Vec<usize> = (0..self.times.len())
            .filter(|&i| self.times[i] >= t0 && self.times[i] <= t1)
            .collect();
        let pts: Vec<[f64; 2]> = idx.iter().map(|&i| [self.x[i], self.y[i]]).collect();
        count_crossings(&pts)
    }

    /// Track resampled at `count` equally spaced times (linear in `z`).
    pub fn resample(&self, count: usize) -> Vec<[f64; 3]> {
        let (a, b) = (self.times[0], *self.times.last().unwrap());
        let mut j = 0;
        (0..count)
            .map(|i| {
                let t = a + (b - a) * i as f64 / (count.max(2) - 1) as f64;
                while j + 2 < self.times.len() && self.times[j + 1] < t {
                    j += 1;
                }
                let (ta, tb) = (self.times[j], self.times[(j + 1).min(self.times.len() - 1)]);
                let w = if tb > ta { (t - ta) / (tb - ta) } else { 0.0 };
                let k = (j + 1).min(self.times.len() - 1);
                [
                    t,
                    self.x[j] + w * (self.x[k] - self.x[j]),
                    self.y[j] + w * (self.y[k] - self.y[j]),
                ]
            })
            .collect()
    }
}

/// Proper segment crossings of a polyline (non-adjacent segments only).
pub fn count_crossings(pts: &[[f64; 2]]) -> usize {
    let segs = pts.len().saturating_sub(1);
    if segs < 3 {
        return 0;
    }
    // sweep on x with sorted segment boxes
    let mut order: Vec<usize> = (0..segs).collect();
    let xmin = |i: usize| pts[i][0].min(pts[i + 1][0]);
    let xmax = |i: usize| pts[i][0].max(pts[i + 1][0]);
    order.sort_by(|&a, &b| xmin(a).partial_cmp(&xmin(b)).unwrap());
    let mut count = 0;
    for (k, &i) in order.iter().enumerate() {
        let hi = xmax(i);
        for &j in &order[k + 1..] {
            if xmin(j) > hi {
                break;
            }
            if i.abs_diff(j) <= 1 {
                continue;
            }
            if segments_cross(pts[i], pts[i + 1], pts[j], pts[j + 1]) {
                count += 1;
            }
        }
    }
    count
}

fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    (d1 > 0.0) != (d2 > 0.0)
        && (d3 > 0.0) != (d4 > 0.0)
        && d1 != 0.0
        && d2 != 0.0
        && d3 != 0.0
        && d4 != 0.0
}

/// Distance of `s` from straight motion, measuring `psi` modulo a full
/// turn under the sinusoidal law.
pub fn distance_from_straight(s: &State4, gains: &ControlGains, lpp: f64) -> f64 {
    let psi = match gains.law {
        ControlLaw::Linear => s.psi,
        ControlLaw::Sinusoidal => {
            let turn = 2.0 * PI * lpp;
            s.psi - turn * (s.psi / turn).round()
        }
    };
    (s.v * s.v + s.r * s.r + psi * psi).sqrt()
}

/// Long-time behaviour read off the tail of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Motion {
    /// Decaying towards the straight-motion equilibrium.
    Straight,
    /// Net turning: a circle or a periodic orbit with nonzero winding.
    Circling,
    /// Bounded oscillation without net turning.
    Oscillating,
    /// Still far from straight motion while the envelope shrinks.
    Transient,
}

impl fmt::Display for Motion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Motion::Straight => "straight motion",
            Motion::Circling => "circling",
            Motion::Oscillating => "oscillating",
            Motion::Transient => "transient",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionReport {
    pub motion: Motion,
    /// Distance from straight motion at the final time.
    pub final_distance: f64,
    /// Ratio of the distance envelope over the last quarter to the one
    /// over the quarter before.
    pub envelope_ratio: f64,
    /// Net heading turns over the last half.
    pub turns: f64,
}

const STRAIGHT_ENVELOPE: f64 = 0.9;
const STRAIGHT_FLOOR: f64 = 1e-8;
const STRAIGHT_NEAR: f64 = 1.0;

/// Classifies the long-time motion of `traj` from its second half.
pub fn classify_motion(traj: &Trajectory) -> MotionReport {
    let (t0, t1) = (traj.times()[0], traj.t_end());
    let n = 400;
    let dist: Vec<f64> = (0..=n)
        .map(|i| {
            let t = t0 + (t1 - t0) * i as f64 / n as f64;
            distance_from_straight(&traj.at(t), &traj.gains, traj.lpp)
        })
        .collect();
    let env = |a: usize, b: usize| dist[a..=b].iter().cloned().fold(0.0, f64::max);
    let late = env(3 * n / 4, n);
    let before = env(n / 2, 3 * n / 4);
    let envelope_ratio = if before > 0.0 { late / before } else { 0.0 };
    let mid = traj.at(t0 + 0.5 * (t1 - t0));
    let turns = (traj.last().psi - mid.psi) / (2.0 * PI * traj.lpp);
    let final_distance = dist[n];
    let motion = if final_distance < STRAIGHT_FLOOR {
        Motion::Straight
    } else if envelope_ratio < STRAIGHT_ENVELOPE {
        if final_distance < STRAIGHT_NEAR {
            Motion::Straight
        } else {
            Motion::Transient
        }
    } else if turns.abs() >= 1.0 {
        Motion::Circling
    } else {
        Motion::Oscillating
    };
    MotionReport {
        motion,
        final_distance,
        envelope_ratio,
        turns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Harmonic;

    impl OdeSystem for Harmonic {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
    }

    #[test]
    fn harmonic_oscillator_adaptive() {
        let opts = IntegratorOptions::with_tol(1e-10).unwrap();
        let sol = Solution::solve(&Harmonic, 0.0, &[1.0, 0.0], 10.0, &opts).unwrap();
        let y = sol.last();
        assert!((y[0] - 10f64.cos()).abs() < 1e-8);
        assert!((y[1] + 10f64.sin()).abs() < 1e-8);
        assert_eq!(*sol.times().last().unwrap(), 10.0);
        for t in [0.3, 2.71, 7.77] {
            let y = sol.at(t);
            assert!((y[0] - t.cos()).abs() < 1e-7, "{t}");
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |h: f64| {
            let sol = Solution::solve(
                &Harmonic,
                0.0,
                &[1.0, 0.0],
                5.0,
                &IntegratorOptions::fixed(h),
            )
            .unwrap();
            (sol.last()[0] - 5f64.cos()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!(ratio > 14.0 && ratio < 18.0, "{ratio}");
    }

    #[test]
    fn tolerance_range_is_enforced() {
        assert!(IntegratorOptions::with_tol(1e-2).is_err());
        assert!(IntegratorOptions::with_tol(1e-13).is_err());
        assert!(IntegratorOptions::with_tol(1e-6).is_ok());
    }

    #[test]
    fn crossing_counter() {
        // a figure of eight traced once
        let pts: Vec<[f64; 2]> = (0..200)
            .map(|i| {
                let t = 0.5 + 6.0 * i as f64 / 200.0;
                [t.sin(), (2.0 * t).sin()]
            })
            .collect();
        assert_eq!(count_crossings(&pts), 1);
        let circle: Vec<[f64; 2]> = (0..100)
            .map(|i| {
                let t = 6.0 * i as f64 / 100.0;
                [t.cos(), t.sin()]
            })
            .collect();
        assert_eq!(count_crossings(&circle), 0);
    }
}
