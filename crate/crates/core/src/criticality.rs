//! Non-smooth pitchfork and Hopf criticality coefficients.

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{det3, C64};
use crate::model::{ControlGains, ExpansionData, Ship};
use crate::stability::{classify_x_t, linearize};

/// Gauss-Legendre order used on each kink-free panel.
pub const QUADRATURE_ORDER: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criticality {
    Supercritical,
    Subcritical,
}

impl std::fmt::Display for Criticality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Criticality::Supercritical => "supercritical",
            Criticality::Subcritical => "subcritical",
        })
    }
}

/// Reduction of the `eps_psi = 0` system onto the kernel of the `(v, r)`
/// block at `eps_r1`.
///
/// `coef_lin` is per unit of the scaled gain `eps_r / Lpp`; `e0` has unit
/// norm with a positive `v` component and `e0s` is scaled so that
/// `<e0, e0s> = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchforkData {
    pub u0: f64,
    pub eps_r1: f64,
    pub b0: [[f64; 2]; 2],
    pub b1: [[f64; 2]; 2],
    /// Nonzero eigenvalue of `b0`.
    pub lambda: f64,
    pub e0: [f64; 2],
    pub e1: [f64; 2],
    pub e0s: [f64; 2],
    pub e1s: [f64; 2],
    pub coef_lin: f64,
    pub coef_quad: f64,
    pub criticality: Criticality,
}

impl PitchforkData {
    /// `|x| / |eps_r - eps_r1|` along the emerging branches, with `eps_r`
    /// scaled by `1/Lpp`.
    pub fn branch_slope(&self) -> f64 {
        (self.coef_lin / self.coef_quad).abs()
    }

    /// Leading-order sway amplitude per unit of (physical) `eps_r`.
    pub fn v_slope(&self, lpp: f64) -> f64 {
        self.e0[0].abs() * self.branch_slope() / lpp
    }

    /// Side of `eps_r1` on which the nonzero equilibria exist: `-1` below,
    /// `+1` above.
    pub fn branch_side(&self) -> f64 {
        -(self.coef_lin * self.coef_quad).signum()
    }

    pub fn biorthogonality_residual(&self) -> f64 {
        let d = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
        (d(self.e0, self.e0s) - 1.0)
            .abs()
            .max((d(self.e1, self.e1s) - 1.0).abs())
            .max(d(self.e0, self.e1s).abs())
            .max(d(self.e1, self.e0s).abs())
    }
}

fn kernel2(m: [[f64; 2]; 2]) -> [f64; 2] {
    let c1 = [m[0][1], -m[0][0]];
    let c2 = [m[1][1], -m[1][0]];
    let n1 = c1[0].hypot(c1[1]);
    let n2 = c2[0].hypot(c2[1]);
    let (c, n) = if n1 >= n2 { (c1, n1) } else { (c2, n2) };
    let mut e = [c[0] / n, c[1] / n];
    if e[0] < 0.0 || (e[0] == 0.0 && e[1] < 0.0) {
        e = [-e[0], -e[1]];
    }
    e
}

fn shift2(m: [[f64; 2]; 2], lambda: f64) -> [[f64; 2]; 2] {
    [[m[0][0] - lambda, m[0][1]], [m[1][0], m[1][1] - lambda]]
}

fn transpose2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

pub fn pitchfork_coefficients(ship: &Ship, u0: f64) -> Result<PitchforkData> {
    let cls = classify_x_t(ship, u0, ship.x_t());
    let eps_r1 = match cls.eps_r1 {
        Some(e) if e > 0.0 => e,
        _ => {
            return Err(Error::DegeneratePitchfork(
                "no positive root of c1 at eps_psi = 0".into(),
            ))
        }
    };
    let lin = linearize(ship, &ControlGains::linear(eps_r1, 0.0), u0);
    let b0 = [[lin.a[1][1], lin.a[1][2]], [lin.a[2][1], lin.a[2][2]]];
    let b1 = [[0.0, lin.q23 * lin.tau0], [0.0, lin.q33 * lin.tau0]];
    let trace = b0[0][0] + b0[1][1];
    let det = b0[0][0] * b0[1][1] - b0[0][1] * b0[1][0];
    let scale = b0.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
    if trace.abs() < 1e-10 * scale {
        return Err(Error::DegeneratePitchfork(
            "zero eigenvalue is not simple".into(),
        ));
    }
    // det b0 = lambda0 * lambda with lambda0 ~ 0 from rounding
    let lambda = trace;
    let lambda0 = det / lambda;
    let e0 = kernel2(shift2(b0, lambda0));
    let e1 = kernel2(shift2(b0, lambda));
    let w0 = kernel2(shift2(transpose2(b0), lambda0));
    let w1 = kernel2(shift2(transpose2(b0), lambda));
    let d0 = e0[0] * w0[0] + e0[1] * w0[1];
    let d1 = e1[0] * w1[0] + e1[1] * w1[1];
    let e0s = [w0[0] / d0, w0[1] / d0];
    let e1s = [w1[0] / d1, w1[1] / d1];

    let b1e0 = [b1[0][1] * e0[1], b1[1][1] * e0[1]];
    let coef_lin = b1e0[0] * e0s[0] + b1e0[1] * e0s[1];
    let ex = ship.expand_at_equilibrium(&ControlGains::linear(eps_r1, 0.0), u0);
    let f = ex.modulus_terms(e0[0], e0[1]);
    let coef_quad = f[0] * e0s[0] + f[1] * e0s[1];
    if coef_quad == 0.0 || coef_lin == 0.0 {
        return Err(Error::DegeneratePitchfork(
            "vanishing reduced coefficient".into(),
        ));
    }
    // On the branch x|x| coef_quad = -eps coef_lin x, the branch is stable
    // exactly when coef_quad < 0.
    let criticality = if coef_quad < 0.0 {
        Criticality::Supercritical
    } else {
        Criticality::Subcritical
    };
    Ok(PitchforkData {
        u0,
        eps_r1,
        b0,
        b1,
        lambda,
        e0,
        e1,
        e0s,
        e1s,
        coef_lin,
        coef_quad,
        criticality,
    })
}

/// Real normal-form frame of the `(v, r, psi)` block.
///
/// `T = (a | b | s)` with `T^{-1} P T = [[mu, -omega, 0], [omega, mu, 0],
/// [0, 0, lambda4]]`, so `a + i b` is the eigenvector of `mu - i omega`.
/// It is scaled so that its largest-modulus component equals 1; `s` has
/// unit norm and a positive first nonzero component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfFrame {
    pub gains: ControlGains,
    pub u0: f64,
    pub mu: f64,
    pub omega: f64,
    pub lambda1: f64,
    pub lambda4: f64,
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub s: [f64; 3],
    pub t: [[f64; 3]; 3],
    pub t_inv: [[f64; 3]; 3],
    /// `[[Z11, Z12], [Z21, Z22]]`.
    pub z: [[f64; 2]; 2],
    pub p: [[f64; 3]; 3],
}

impl HopfFrame {
    /// Period of the linear oscillation.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Max abs entry of `T^{-1} P T` minus its block-diagonal normal form.
    pub fn block_residual(&self) -> f64 {
        let tp = mul3(&self.t_inv, &mul3(&self.p, &self.t));
        let want = [
            [self.mu, -self.omega, 0.0],
            [self.omega, self.mu, 0.0],
            [0.0, 0.0, self.lambda4],
        ];
        let mut r: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                r = r.max((tp[i][j] - want[i][j]).abs());
            }
        }
        r
    }

    /// `Z` from the explicit cofactor formulas.
    pub fn z_cofactors(&self) -> [[f64; 2]; 2] {
        let (a, b, s) = (&self.a, &self.b, &self.s);
        let det = det3(&self.t);
        [
            [
                (b[1] * s[2] - b[2] * s[1]) / det,
                (-b[0] * s[2] + b[2] * s[0]) / det,
            ],
            [
                (-a[1] * s[2] + a[2] * s[1]) / det,
                (a[0] * s[2] - a[2] * s[0]) / det,
            ],
        ]
    }

    /// Same frame with `(a, b)` multiplied by `kappa` (and `Z` by
    /// `1/kappa`).
    pub fn rescaled(&self, kappa: f64) -> HopfFrame {
        let mut f = *self;
        for i in 0..3 {
            f.a[i] *= kappa;
            f.b[i] *= kappa;
            f.t[i][0] *= kappa;
            f.t[i][1] *= kappa;
            f.t_inv[0][i] /= kappa;
            f.t_inv[1][i] /= kappa;
        }
        for row in f.z.iter_mut() {
            for x in row.iter_mut() {
                *x /= kappa;
            }
        }
        f
    }
}

fn mul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn inverse3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = det3(m);
    let c =
        |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    [
        [
            c(1, 2, 1, 2) / det,
            -c(0, 2, 1, 2) / det,
            c(0, 1, 1, 2) / det,
        ],
        [
            -c(1, 2, 0, 2) / det,
            c(0, 2, 0, 2) / det,
            -c(0, 1, 0, 2) / det,
        ],
        [
            c(1, 2, 0, 1) / det,
            -c(0, 2, 0, 1) / det,
            c(0, 1, 0, 1) / det,
        ],
    ]
}

fn cross<T>(x: [T; 3], y: [T; 3]) -> [T; 3]
where
    T: Copy + std::ops::Mul<Output = T> + std::ops::Sub<Output = T>,
{
    [
        x[1] * y[2] - x[2] * y[1],
        x[2] * y[0] - x[0] * y[2],
        x[0] * y[1] - x[1] * y[0],
    ]
}

/// Null vector of `P - lambda I` from the best-conditioned pair of rows.
fn null_vector(p: &[[f64; 3]; 3], lambda: C64) -> [C64; 3] {
    let rows: Vec<[C64; 3]> = (0..3)
        .map(|i| {
            let mut r = [
                C64::new(p[i][0], 0.0),
                C64::new(p[i][1], 0.0),
                C64::new(p[i][2], 0.0),
            ];
            r[i] -= lambda;
            r
        })
        .collect();
    let mut best = [C64::new(0.0, 0.0); 3];
    let mut best_norm = -1.0;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let c = cross(rows[i], rows[j]);
        let n: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        if n > best_norm {
            best_norm = n;
            best = c;
        }
    }
    best
}

pub fn hopf_frame(ship: &Ship, gains: &ControlGains, u0: f64) -> Result<HopfFrame> {
    let lin = linearize(ship, gains, u0);
    let roots = lin.cubic_roots();
    let (pair, real) = match roots.iter().position(|z| z.im > 0.0) {
        Some(i) => {
            let real = roots
                .iter()
                .find(|z| z.im == 0.0)
                .copied()
                .unwrap_or(C64::new(f64::NAN, 0.0));
            (roots[i], real.re)
        }
        None => return Err(Error::NotOscillatory(0.0)),
    };
    let (mu, omega) = (pair.re, pair.im);
    if omega < 1e-10 {
        return Err(Error::NotOscillatory(omega));
    }
    let p = lin.p();
    let mut zeta = null_vector(&p, C64::new(mu, -omega));
    let k = (0..3)
        .max_by(|&i, &j| zeta[i].norm().partial_cmp(&zeta[j].norm()).unwrap())
        .unwrap();
    let pivot = zeta[k];
    for z in zeta.iter_mut() {
        *z /= pivot;
    }
    let a = [zeta[0].re, zeta[1].re, zeta[2].re];
    let b = [zeta[0].im, zeta[1].im, zeta[2].im];
    let sv = null_vector(&p, C64::new(real, 0.0));
    let mut s = [sv[0].re, sv[1].re, sv[2].re];
    let n = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
    let first = s
        .iter()
        .copied()
        .find(|x| x.abs() > 1e-14 * n)
        .unwrap_or(1.0);
    let sign = if first < 0.0 { -1.0 } else { 1.0 };
    for x in s.iter_mut() {
        *x *= sign / n;
    }
    let t = [[a[0], b[0], s[0]], [a[1], b[1], s[1]], [a[2], b[2], s[2]]];
    let t_inv = inverse3(&t);
    Ok(HopfFrame {
        gains: *gains,
        u0,
        mu,
        omega,
        lambda1: lin.p11(),
        lambda4: real,
        a,
        b,
        s,
        t,
        t_inv,
        z: [[t_inv[0][0], t_inv[0][1]], [t_inv[1][0], t_inv[1][1]]],
        p,
    })
}

/// One of the eight groups of `chi`: a coefficient pair `(p, q)` on
/// `(cos, sin)` times `(a1 c + b1 s) |a2 c + b2 s|`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Group {
    weight: f64,
    pq: [f64; 2],
    lin: [f64; 2],
    modulus: [f64; 2],
}

impl Group {
    fn eval(&self, c: f64, s: f64) -> f64 {
        let l = self.lin[0] * c + self.lin[1] * s;
        let m = self.modulus[0] * c + self.modulus[1] * s;
        self.weight * (self.pq[0] * c + self.pq[1] * s) * l * m.abs()
    }

    /// Exact integral over a full period.
    fn closed_form(&self) -> f64 {
        let [p, q] = self.pq;
        let [a1, b1] = self.lin;
        let [a2, b2] = self.modulus;
        let r2 = a2.hypot(b2);
        if r2 == 0.0 {
            return 0.0;
        }
        self.weight * 4.0 / (3.0 * r2)
            * (2.0 * (p * a2 + q * b2) * (a1 * a2 + b1 * b2)
                + (q * a2 - p * b2) * (b1 * a2 - a1 * b2))
    }
}

fn groups(frame: &HopfFrame, ex: &ExpansionData) -> [Group; 8] {
    let x1 = [frame.a[0], frame.b[0]];
    let x2 = [frame.a[1], frame.b[1]];
    let z = &frame.z;
    let lam = [z[0][0], z[1][0]];
    let gam = [z[0][1], z[1][1]];
    // (i, j): the term x_i |x_j| pattern of a_ij, b_ij
    let pattern = [(x1, x1), (x1, x2), (x2, x1), (x2, x2)];
    let mut out = [Group {
        weight: 0.0,
        pq: [0.0; 2],
        lin: [0.0; 2],
        modulus: [0.0; 2],
    }; 8];
    for (k, (lin, modulus)) in pattern.iter().enumerate() {
        let (i, j) = (k / 2, k % 2);
        out[2 * k] = Group {
            weight: ex.a[i][j],
            pq: lam,
            lin: *lin,
            modulus: *modulus,
        };
        out[2 * k + 1] = Group {
            weight: ex.b[i][j],
            pq: gam,
            lin: *lin,
            modulus: *modulus,
        };
    }
    out
}

/// Radial coefficient `chi(phi)` of the polar normal form.
pub fn chi(frame: &HopfFrame, ex: &ExpansionData, phi: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    groups(frame, ex).iter().map(|g| g.eval(c, s)).sum()
}

/// Angular coefficient `Omega(phi)` of the polar normal form.
pub fn omega_coefficient(frame: &HopfFrame, ex: &ExpansionData, phi: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    let v = frame.a[0] * c + frame.b[0] * s;
    let r = frame.a[1] * c + frame.b[1] * s;
    let [g1, g2] = ex.modulus_terms(v, r);
    let z = &frame.z;
    -s * (z[0][0] * g1 + z[0][1] * g2) + c * (z[1][0] * g1 + z[1][1] * g2)
}

/// Kink angles of `chi` in `[0, 2 pi)`, sorted, with both ends added.
pub fn kink_breakpoints(frame: &HopfFrame) -> Vec<f64> {
    let mut pts = vec![0.0, 2.0 * PI];
    for i in 0..2 {
        let (a, b) = (frame.a[i], frame.b[i]);
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let base = (-a).atan2(b).rem_euclid(PI);
        pts.push(base);
        pts.push(base + PI);
    }
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
    pts
}

/// Panel-wise Gauss-Legendre integral of `f` over one period.
pub fn integrate_periodic(breaks: &[f64], order: usize, f: impl Fn(f64) -> f64) -> f64 {
    let rule = GaussLegendre::new(order).expect("valid quadrature order");
    breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| rule.integrate(w[0], w[1], &f))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaResult {
    pub sigma: f64,
    pub criticality: Criticality,
    /// `-2 pi / sigma`: leading-order amplitude per unit of `mu`.
    pub amplitude_slope: f64,
    pub chi_samples: Vec<(f64, f64)>,
    pub omega_samples: Vec<(f64, f64)>,
    /// Per-group integrals by quadrature and by closed form.
    pub group_quadrature: [f64; 8],
    pub group_closed_form: [f64; 8],
}

impl SigmaResult {
    /// Largest quadrature/closed-form disagreement over the eight groups.
    pub fn closed_form_mismatch(&self) -> f64 {
        self.group_quadrature
            .iter()
            .zip(&self.group_closed_form)
            .map(|(q, c)| (q - c).abs())
            .fold(0.0, f64::max)
    }
}

/// Number of `chi` / `Omega` samples stored per result.
pub const CHI_SAMPLES: usize = 129;

pub fn sigma(frame: &HopfFrame, ex: &ExpansionData) -> Result<SigmaResult> {
    sigma_with_order(frame, ex, QUADRATURE_ORDER)
}

pub fn sigma_with_order(
    frame: &HopfFrame,
    ex: &ExpansionData,
    order: usize,
) -> Result<SigmaResult> {
    let gs = groups(frame, ex);
    let breaks = kink_breakpoints(frame);
    let mut group_quadrature = [0.0; 8];
    let mut group_closed_form = [0.0; 8];
    for (k, g) in gs.iter().enumerate() {
        group_quadrature[k] = integrate_periodic(&breaks, order, |phi| {
            let (s, c) = phi.sin_cos();
            g.eval(c, s)
        });
        group_closed_form[k] = g.closed_form();
    }
    let sigma: f64 = group_quadrature.iter().sum();
    let samples = |f: &dyn Fn(f64) -> f64| {
        (0..CHI_SAMPLES)
            .map(|i| {
                let phi = 2.0 * PI * i as f64 / (CHI_SAMPLES - 1) as f64;
                (phi, f(phi))
            })
            .collect::<Vec<_>>()
    };
    let chi_samples = samples(&|phi| chi(frame, ex, phi));
    let omega_samples = samples(&|phi| omega_coefficient(frame, ex, phi));
    let scale: f64 = group_closed_form.iter().map(|x| x.abs()).sum();
    if sigma.abs() < 1e-12 * scale.max(1e-300) || sigma == 0.0 {
        return Err(Error::DegenerateCriticality(sigma));
    }
    let criticality = if sigma < 0.0 {
        Criticality::Supercritical
    } else {
        Criticality::Subcritical
    };
    Ok(SigmaResult {
        sigma,
        criticality,
        amplitude_slope: -2.0 * PI / sigma,
        chi_samples,
        omega_samples,
        group_quadrature,
        group_closed_form,
    })
}

/// One row of a sweep along the stability boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaPoint {
    pub eps_r: f64,
    pub eps_psi: f64,
    pub mu: f64,
    pub omega: f64,
    pub sigma: f64,
    pub criticality: Criticality,
    pub amplitude_slope: f64,
    pub closed_form_mismatch: f64,
}

/// Frame and `Sigma` at the boundary point above `eps_r`.
pub fn sigma_on_boundary(ship: &Ship, u0: f64, eps_r: f64) -> Result<(HopfFrame, SigmaResult)> {
    let eps_psi = crate::stability::boundary_eps_psi(ship, u0, eps_r)?;
    if eps_psi <= 0.0 {
        return Err(Error::NotOscillatory(0.0));
    }
    let gains = ControlGains::linear(eps_r, eps_psi);
    let frame = hopf_frame(ship, &gains, u0)?;
    let ex = ship.expand_at_equilibrium(&gains, u0);
    let s = sigma(&frame, &ex)?;
    Ok((frame, s))
}

/// `Sigma` along the boundary, one point per `eps_r` (parallel).
pub fn sigma_sweep(ship: &Ship, u0: f64, eps_r: &[f64]) -> Vec<Result<SigmaPoint>> {
    use rayon::prelude::*;
    eps_r
        .par_iter()
        .map(|&er| {
            let (frame, s) = sigma_on_boundary(ship, u0, er)?;
            Ok(SigmaPoint {
                eps_r: er,
                eps_psi: frame.gains.eps_psi,
                mu: frame.mu,
                omega: frame.omega,
                sigma: s.sigma,
                criticality: s.criticality,
                amplitude_slope: s.amplitude_slope,
                closed_form_mismatch: s.closed_form_mismatch(),
            })
        })
        .collect()
}
