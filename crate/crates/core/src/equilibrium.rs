//! Straight-motion equilibrium `X_uu u0^2 + tau(u0) = 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Ship;
use crate::params::ShipParams;

const RESIDUAL_TOL: f64 = 1e-12;
const BISECT_WIDTH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub u0: f64,
    pub tau_at_u0: f64,
    pub dtau_du: f64,
    pub residual: f64,
    /// False when `d tau/du >= 0` at the root, so uniqueness is not
    /// guaranteed.
    pub uniqueness_holds: bool,
}

fn residual(ship: &Ship, u: f64) -> f64 {
    ship.hull().x_uu * u * u + ship.thrust(u)
}

/// Unique positive surge speed of straight motion.
pub fn solve_u0(ship: &Ship) -> Result<EquilibriumResult> {
    let x_uu = ship.hull().x_uu;
    let tau0 = ship.thrust(0.0);
    if x_uu >= 0.0 {
        return Err(Error::InvalidParameter {
            key: "hull.x_uu".into(),
            reason: "must be negative".into(),
        });
    }
    if tau0 <= 0.0 {
        return Err(Error::InvalidParameter {
            key: "propeller.kt0".into(),
            reason: "bollard thrust must be positive".into(),
        });
    }
    let p = &ship.params().propeller;
    let mut hi = 5.0 * p.np * p.dp;
    let mut grown = 0;
    while residual(ship, hi) > 0.0 {
        hi *= 2.0;
        grown += 1;
        if grown > 60 || !hi.is_finite() {
            return Err(Error::NoEquilibrium { u_max: hi });
        }
    }
    let mut lo = 0.0;
    while hi - lo > BISECT_WIDTH {
        let mid = 0.5 * (lo + hi);
        if residual(ship, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut u = 0.5 * (lo + hi);
    for _ in 0..100 {
        let g = residual(ship, u);
        if g == 0.0 {
            break;
        }
        if g > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let dg = 2.0 * x_uu * u + ship.thrust_derivatives(u)[1];
        let newton = u - g / dg;
        let next = if dg < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - u).abs();
        u = next;
        if step <= 1e-15 * u || hi - lo <= 4.0 * f64::EPSILON * u {
            break;
        }
    }
    // absolute below unit thrust, relative above (tau grows like D_p^4)
    let tol = RESIDUAL_TOL * tau0.max(1.0);
    if residual(ship, u).abs() >= tol {
        return Err(Error::Convergence(format!(
            "u0 residual {:e} after refinement",
            residual(ship, u).abs()
        )));
    }
    let [tau, dtau, _, _] = ship.thrust_derivatives(u);
    Ok(EquilibriumResult {
        u0: u,
        tau_at_u0: tau,
        dtau_du: dtau,
        residual: (x_uu * u * u + tau).abs(),
        uniqueness_holds: dtau < 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpSample {
    pub dp: f64,
    pub u0: f64,
    pub dtau_du: f64,
}

/// `u0` over a grid of propeller diameters.
pub fn u0_vs_dp(params: &ShipParams, dp_grid: &[f64]) -> Result<Vec<DpSample>> {
    dp_grid
        .par_iter()
        .map(|&dp| {
            let ship = Ship::new(params.with_dp(dp))?;
            let eq = solve_u0(&ship)?;
            Ok(DpSample {
                dp,
                u0: eq.u0,
                dtau_du: eq.dtau_du,
            })
        })
        .collect()
}

/// Limit of `u0 / D_p` as `D_p -> infinity`: the first positive zero of the
/// thrust polynomial, converted from advance ratio to `u / D_p`.
pub fn large_dp_slope(params: &ShipParams) -> Option<f64> {
    let p = &params.propeller;
    let kt = |j: f64| p.kt.iter().rev().fold(0.0, |acc, c| acc * j + c);
    let mut lo = 0.0;
    if kt(lo) <= 0.0 {
        return None;
    }
    let mut hi = 0.05;
    while kt(hi) > 0.0 {
        lo = hi;
        hi += 0.05;
        if hi > 100.0 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kt(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi) * p.np / (1.0 - p.wake_fraction))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn htc_root_is_accurate() {
        let eq = solve_u0(&Ship::htc()).unwrap();
        assert!(eq.residual < 1e-12);
        assert!(eq.uniqueness_holds);
        assert!((eq.u0 - 8.70891).abs() < 1e-4);
    }

    #[test]
    fn negative_bollard_thrust_is_rejected() {
        let mut p = ShipParams::htc();
        p.propeller.kt[0] = -0.1;
        assert!(solve_u0(&Ship::new(p).unwrap()).is_err());
    }
}
