//! Linear stability of straight motion, the Routh-Hurwitz boundary in the
//! gain plane and its dependence on the thruster position.
//!
//! Internally the gains enter as `eps / Lpp` (they multiply the scaled
//! `r` and `psi`); every public gain value here is in the physical
//! convention of [`ControlGains`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cubic_roots, sort_by_real, C64};
use crate::model::{ControlGains, ControlLaw, Ship};

/// Half-width of the band reported as [`Verdict::Marginal`].
pub const MARGINAL_BAND: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Marginal => "marginal",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationData {
    pub u0: f64,
    pub gains: ControlGains,
    pub tau0: f64,
    /// Jacobian at `(u0, 0, 0, 0)`.
    pub a: [[f64; 4]; 4],
    pub p22u: f64,
    pub p23u: f64,
    pub p32u: f64,
    pub p33u: f64,
    pub q23: f64,
    pub q33: f64,
    /// Magnitude of the two contributions to `p11`, for normalising its sign.
    pub p11_scale: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// `p11` followed by the three roots of the cubic, sorted by real part.
    pub eigenvalues: [C64; 4],
}

impl LinearizationData {
    pub fn p11(&self) -> f64 {
        self.a[0][0]
    }

    /// Lower-right 3x3 block acting on `(v, r, psi)`.
    pub fn p(&self) -> [[f64; 3]; 3] {
        let a = &self.a;
        [
            [a[1][1], a[1][2], a[1][3]],
            [a[2][1], a[2][2], a[2][3]],
            [a[3][1], a[3][2], a[3][3]],
        ]
    }

    pub fn cubic_roots(&self) -> [C64; 3] {
        cubic_roots(self.c2, self.c1, self.c0)
    }

    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Linearisation about straight motion, filled from closed forms.
pub fn linearize(ship: &Ship, gains: &ControlGains, u0: f64) -> LinearizationData {
    let ex = ship.expand_at_equilibrium(gains, u0);
    let b = ship.inv_block();
    let x_t = ship.x_t();
    let a = [
        [ex.p11, 0.0, 0.0, 0.0],
        [0.0, ex.p22, ex.p23, ex.p24],
        [0.0, ex.p32, ex.p33, ex.p34],
        [0.0, 0.0, 1.0, 0.0],
    ];
    let c2 = -(ex.p22 + ex.p33);
    let c1 = ex.p22 * ex.p33 - ex.p23 * ex.p32 - ex.p34;
    let c0 = ex.p22 * ex.p34 - ex.p24 * ex.p32;
    let roots = cubic_roots(c2, c1, c0);
    let mut eigenvalues = [C64::new(ex.p11, 0.0), roots[0], roots[1], roots[2]];
    sort_by_real(&mut eigenvalues);
    LinearizationData {
        u0,
        gains: *gains,
        tau0: ex.tau[0][0] / ship.inv_surge_mass(),
        a,
        p22u: ex.k6,
        p23u: ex.k7,
        p32u: ex.k10,
        p33u: ex.k11,
        q23: b[0][0] + b[0][1] * x_t,
        q33: b[1][0] + b[1][1] * x_t,
        p11_scale: ex.k1.abs() + ex.tau[0][1].abs(),
        c0,
        c1,
        c2,
        eigenvalues,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouthHurwitz {
    pub verdict: Verdict,
    /// Smallest normalised Routh-Hurwitz quantity; positive means stable.
    pub margin: f64,
    /// Set at `eps_psi = 0`, where `c0 = 0` and one eigenvalue is exactly
    /// zero; the verdict then refers to the remaining eigenvalues.
    pub structural_zero: bool,
}

pub fn routh_hurwitz(lin: &LinearizationData) -> RouthHurwitz {
    let [_, p22, p23, p24] = lin.a[1];
    let [_, p32, p33, p34] = lin.a[2];
    let (c0, c1, c2) = (lin.c0, lin.c1, lin.c2);
    let ratio = |x: f64, scale: f64| if scale > 0.0 { x / scale } else { x.signum() };
    let surge = ratio(-lin.p11(), lin.p11_scale);
    let h2 = ratio(c2, p22.abs() + p33.abs());
    let structural_zero = lin.gains.eps_psi == 0.0;
    let margin = if structural_zero {
        let h1 = ratio(c1, (p22 * p33).abs() + (p23 * p32).abs() + p34.abs());
        surge.min(h2).min(h1)
    } else {
        let h0 = ratio(c0, (p22 * p34).abs() + (p24 * p32).abs());
        let h21 = ratio(c2 * c1 - c0, (c2 * c1).abs() + c0.abs());
        surge.min(h2).min(h0).min(h21)
    };
    let verdict = if margin > MARGINAL_BAND {
        Verdict::Stable
    } else if margin < -MARGINAL_BAND {
        Verdict::Unstable
    } else {
        Verdict::Marginal
    };
    RouthHurwitz {
        verdict,
        margin,
        structural_zero,
    }
}

/// Coefficients of `c2 c1 - c0` as a polynomial in the scaled gains
/// `e_r = eps_r / Lpp`, `e_psi = eps_psi / Lpp`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCoeffs {
    pub k11: f64,
    pub k02: f64,
    pub k01: f64,
    pub k10: f64,
    pub k00: f64,
    pub lpp: f64,
}

impl BoundaryCoeffs {
    /// `c2 c1 - c0` at the given (physical) gains.
    pub fn residual(&self, eps_r: f64, eps_psi: f64) -> f64 {
        let (er, ep) = (eps_r / self.lpp, eps_psi / self.lpp);
        self.k11 * ep * er + self.k02 * er * er + self.k01 * er + self.k10 * ep + self.k00
    }

    /// Boundary value of `eps_psi` at `eps_r`. Negative results mean the
    /// boundary does not reach the positive quadrant at this `eps_r`.
    pub fn eps_psi(&self, eps_r: f64) -> Result<f64> {
        let er = eps_r / self.lpp;
        let den = self.k11 * er + self.k10;
        if den.abs() < 1e-14 * (self.k11 * er).abs().max(self.k10.abs()).max(1e-300) {
            return Err(Error::AtAsymptote);
        }
        Ok(-self.lpp * (self.k02 * er * er + self.k01 * er + self.k00) / den)
    }
}

pub fn boundary_coeffs(ship: &Ship, u0: f64) -> BoundaryCoeffs {
    let lin = linearize(ship, &ControlGains::linear(0.0, 0.0), u0);
    let (p22u, p23u, p32u, p33u) = (lin.p22u, lin.p23u, lin.p32u, lin.p33u);
    let (q23, q33, tau) = (lin.q23, lin.q33, lin.tau0);
    let s = p22u + p33u;
    let cross = p32u * q23 - p22u * q33;
    let minor = p23u * p32u - p22u * p33u;
    BoundaryCoeffs {
        k11: q33 * q33 * tau * tau,
        k02: q33 * cross * u0 * tau * tau,
        k01: (s * cross + q33 * minor) * u0 * u0 * tau,
        k10: (s * q33 + p32u * q23 - p22u * q33) * u0 * tau,
        k00: s * minor * u0 * u0 * u0,
        lpp: ship.lpp(),
    }
}

/// `eps_psi` on the stability boundary at `eps_r`.
pub fn boundary_eps_psi(ship: &Ship, u0: f64, eps_r: f64) -> Result<f64> {
    boundary_coeffs(ship, u0).eps_psi(eps_r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum XtCase {
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
    Case6,
    Uncontrollable,
    DegenerateBoundaryLine,
    /// Ordering not covered by the case analysis (only possible when the
    /// coefficient sign pattern differs from the HTC one).
    Unclassified,
}

impl XtCase {
    /// Whether some positive gains stabilise straight motion. Cases 5 and 6
    /// have a boundary curve that is not a stability boundary (`c2 < 0`
    /// wherever it is positive).
    pub fn is_controllable(&self) -> bool {
        matches!(
            self,
            XtCase::Case1
                | XtCase::Case2
                | XtCase::Case3
                | XtCase::Case4
                | XtCase::DegenerateBoundaryLine
        )
    }
}

impl std::fmt::Display for XtCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            XtCase::Case1 => "Case1",
            XtCase::Case2 => "Case2",
            XtCase::Case3 => "Case3",
            XtCase::Case4 => "Case4",
            XtCase::Case5 => "Case5",
            XtCase::Case6 => "Case6",
            XtCase::Uncontrollable => "Uncontrollable",
            XtCase::DegenerateBoundaryLine => "DegenerateBoundaryLine",
            XtCase::Unclassified => "Unclassified",
        };
        f.write_str(s)
    }
}

/// Thruster-position analysis. Gain-valued fields are physical; `None`
/// marks a value at infinity or thresholds that do not exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XtClassification {
    pub x_t: f64,
    pub alpha: f64,
    pub beta: f64,
    pub alpha_t: f64,
    pub beta_t: f64,
    pub gamma: f64,
    pub delta: f64,
    pub x_t0: Option<f64>,
    pub x_t_minus: Option<f64>,
    pub x_t_plus: Option<f64>,
    pub x_ts: Option<f64>,
    /// `-alpha / beta`, where `c2` stops depending on the sign of `eps_r`.
    pub x_t_c2: f64,
    /// `-alpha_t / beta_t`, beyond which `c0 <= 0`.
    pub x_t_c0: f64,
    pub eps_r1: Option<f64>,
    pub eps_r2: Option<f64>,
    pub eps_r_star: Option<f64>,
    /// Verdict of the thruster-position analysis: `Uncontrollable` for
    /// `x_t >= x_ts` under the sign hypotheses, else `ordering`.
    pub case: XtCase,
    /// Case from the ordering of `0, eps_r1, eps_r2, eps_r*` alone.
    pub ordering: XtCase,
    /// False when the coefficient signs differ from the HTC pattern
    /// `alpha > 0, beta < 0, alpha_t > 0, beta_t < 0, gamma > 0, delta < 0`.
    pub hypotheses_hold: bool,
}

impl XtClassification {
    /// Controllable window `(eps_r1, eps_r2)` at `eps_psi = 0+` in case 4.
    pub fn stable_window(&self) -> Option<(f64, f64)> {
        match (self.case, self.eps_r1, self.eps_r2) {
            (XtCase::Case4, Some(a), Some(b)) => Some((a, b)),
            _ => None,
        }
    }
}

pub fn classify_x_t(ship: &Ship, u0: f64, x_t: f64) -> XtClassification {
    let lin = linearize(ship, &ControlGains::linear(0.0, 0.0), u0);
    let k = &ship.params().mass;
    let d = ship.det();
    let h = ship.hull();
    let lpp = ship.lpp();
    let tau = lin.tau0;
    let (p22u, p32u) = (lin.p22u, lin.p32u);
    let iz = k.i_z + k.m_rr;
    let mv = k.m + k.m_vv;
    let yr = h.y_g - ship.m_l();
    let alpha = k.m_rv * tau / d;
    let beta = -mv * tau / d;
    let alpha_t = -(k.m_rv * p22u + iz * p32u) * u0 * tau / d;
    let beta_t = (mv * p22u + k.m_vr * p32u) * u0 * tau / d;
    let gamma = (k.m_vr * h.n_b - iz * h.y_b - mv * h.n_g + k.m_rv * yr) * u0 / d;
    let delta =
        ((mv * h.n_g - k.m_rv * yr) * p22u + (k.m_vr * h.n_g - iz * yr) * p32u) * u0 * u0 / d;

    let a = alpha + beta * x_t;
    let at = alpha_t + beta_t * x_t;
    let finite = |x: f64| if x.is_finite() { Some(x) } else { None };
    let eps_r1 = finite(-delta / at * lpp);
    let eps_r2 = finite(-gamma / a * lpp);
    let eps_r_star = finite((at - gamma * a) / (a * a) * lpp);

    let x_t0 = finite((gamma * alpha - alpha_t) / (beta_t - gamma * beta));
    let x_ts = finite((delta * alpha - gamma * alpha_t) / (gamma * beta_t - delta * beta));
    let q2 = (beta_t - gamma * beta) * beta_t + delta * beta * beta;
    let q1 = (alpha_t - gamma * alpha) * beta_t
        + (beta_t - gamma * beta) * alpha_t
        + 2.0 * delta * alpha * beta;
    let q0 = (alpha_t - gamma * alpha) * alpha_t + delta * alpha * alpha;
    let (x_t_minus, x_t_plus) = match real_quadratic_roots(q2, q1, q0) {
        Some((lo, hi)) => (Some(lo), Some(hi)),
        None => (None, None),
    };

    let hypotheses_hold =
        alpha > 0.0 && beta < 0.0 && alpha_t > 0.0 && beta_t < 0.0 && gamma > 0.0 && delta < 0.0;

    let ordering = if a.abs() <= 1e-14 * (alpha.abs() + (beta * x_t).abs()) {
        XtCase::DegenerateBoundaryLine
    } else if at <= 0.0 {
        XtCase::Uncontrollable
    } else {
        let (r1, r2, rs) = (
            eps_r1.unwrap_or(f64::NAN),
            eps_r2.unwrap_or(f64::NAN),
            eps_r_star.unwrap_or(f64::NAN),
        );
        if r2 < rs && rs < 0.0 && 0.0 < r1 {
            XtCase::Case1
        } else if r2 < 0.0 && 0.0 <= rs && rs < r1 {
            XtCase::Case2
        } else if r2 < 0.0 && 0.0 < r1 && r1 < rs {
            XtCase::Case3
        } else if 0.0 < r1 && r1 < r2 && r2 < rs {
            XtCase::Case4
        } else if 0.0 < r2 && r2 < r1 && r1 < rs {
            XtCase::Case5
        } else if 0.0 < r2 && r2 < rs && rs < r1 {
            XtCase::Case6
        } else {
            XtCase::Unclassified
        }
    };
    let beyond_ts = hypotheses_hold && x_ts.is_some_and(|ts| x_t >= ts);
    let case = if beyond_ts && ordering != XtCase::DegenerateBoundaryLine {
        XtCase::Uncontrollable
    } else {
        ordering
    };

    XtClassification {
        x_t,
        alpha,
        beta,
        alpha_t,
        beta_t,
        gamma,
        delta,
        x_t0,
        x_t_minus,
        x_t_plus,
        x_ts,
        x_t_c2: -alpha / beta,
        x_t_c0: -alpha_t / beta_t,
        eps_r1,
        eps_r2,
        eps_r_star,
        case,
        ordering,
        hypotheses_hold,
    }
}

fn real_quadratic_roots(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    if a == 0.0 {
        return None;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (x1, x2) = (q / a, c / q);
    Some((x1.min(x2), x1.max(x2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    pub eps_r: f64,
    pub eps_psi: f64,
    pub verdict: Verdict,
    pub max_re_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityMap {
    pub cells: Vec<MapCell>,
    /// `(eps_r, eps_psi)` boundary samples with `eps_psi >= 0`.
    pub boundary: Vec<(f64, f64)>,
}

/// Verdict raster over `eps_r_grid x eps_psi_grid` plus the analytic
/// boundary sampled on `eps_r_grid`.
pub fn stability_map(
    ship: &Ship,
    u0: f64,
    eps_r_grid: &[f64],
    eps_psi_grid: &[f64],
) -> StabilityMap {
    let cells = eps_r_grid
        .par_iter()
        .flat_map_iter(|&er| {
            eps_psi_grid.iter().map(move |&ep| {
                let lin = linearize(ship, &ControlGains::new(er, ep, ControlLaw::Linear), u0);
                MapCell {
                    eps_r: er,
                    eps_psi: ep,
                    verdict: routh_hurwitz(&lin).verdict,
                    max_re_lambda: lin.max_real_part(),
                }
            })
        })
        .collect();
    let coeffs = boundary_coeffs(ship, u0);
    let boundary = eps_r_grid
        .iter()
        .filter_map(|&er| match coeffs.eps_psi(er) {
            Ok(ep) if ep >= 0.0 && ep.is_finite() => Some((er, ep)),
            _ => None,
        })
        .collect();
    StabilityMap { cells, boundary }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve_u0;
    use crate::model::State4;

    #[test]
    fn closed_form_matrix_equals_analytic_jacobian() {
        let ship = Ship::htc();
        let u0 = solve_u0(&ship).unwrap().u0;
        for law in [ControlLaw::Linear, ControlLaw::Sinusoidal] {
            let g = ControlGains::new(17.0, 33.0, law);
            let lin = linearize(&ship, &g, u0);
            let j = ship.jacobian(&g, &State4::straight(u0));
            for i in 0..4 {
                for k in 0..4 {
                    assert!((lin.a[i][k] - j[i][k]).abs() < 1e-14, "{i}{k}");
                }
            }
        }
    }

    #[test]
    fn c_coefficients_match_alpha_delta_form() {
        let ship = Ship::htc();
        let u0 = solve_u0(&ship).unwrap().u0;
        let cls = classify_x_t(&ship, u0, ship.x_t());
        let (er, ep) = (40.0, 12.0);
        let lin = linearize(&ship, &ControlGains::linear(er, ep), u0);
        let (e1, e2) = (er / ship.lpp(), ep / ship.lpp());
        let a = cls.alpha + cls.beta * ship.x_t();
        let at = cls.alpha_t + cls.beta_t * ship.x_t();
        assert!((lin.c2 - (cls.gamma + a * e1)).abs() < 1e-15);
        assert!((lin.c1 - (cls.delta + at * e1 + a * e2)).abs() < 1e-15);
        assert!((lin.c0 - at * e2).abs() < 1e-15);
    }

    #[test]
    fn structural_zero_at_vanishing_yaw_gain() {
        let ship = Ship::htc();
        let u0 = solve_u0(&ship).unwrap().u0;
        let lin = linearize(&ship, &ControlGains::linear(150.0, 0.0), u0);
        assert_eq!(lin.c0, 0.0);
        assert!(lin.eigenvalues.iter().any(|z| z.norm() < 1e-15));
        let rh = routh_hurwitz(&lin);
        assert!(rh.structural_zero);
        assert_eq!(rh.verdict, Verdict::Stable);
    }
}
