//! Forces, steering law and vector field of the rescaled 4D thruster model.
//!
//! The state is `(u, v, r, psi)` where `r` and `psi` carry the factor `Lpp`
//! (`r = Lpp * r_phys`, `psi = Lpp * psi_phys`). Gains are given in the
//! physical convention, `eta = eps_r * r_phys + eps_psi * psi_phys`, so the
//! HTC boundary crosses `eps_psi = 0` near `eps_r = 130`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{HullParams, ShipParams};

/// Guard for hull terms carrying a negative power of `V`.
pub const V_GUARD: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlLaw {
    Linear,
    #[serde(alias = "sin")]
    Sinusoidal,
}

impl std::str::FromStr for ControlLaw {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "linear" => Ok(ControlLaw::Linear),
            "sin" | "sinusoidal" => Ok(ControlLaw::Sinusoidal),
            _ => Err(format!("unknown control law `{s}` (expected linear|sin)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    pub eps_r: f64,
    pub eps_psi: f64,
    pub law: ControlLaw,
}

impl ControlGains {
    pub fn new(eps_r: f64, eps_psi: f64, law: ControlLaw) -> Self {
        ControlGains {
            eps_r,
            eps_psi,
            law,
        }
    }

    pub fn linear(eps_r: f64, eps_psi: f64) -> Self {
        Self::new(eps_r, eps_psi, ControlLaw::Linear)
    }

    pub fn sinusoidal(eps_r: f64, eps_psi: f64) -> Self {
        Self::new(eps_r, eps_psi, ControlLaw::Sinusoidal)
    }

    pub fn with_eps_r(self, eps_r: f64) -> Self {
        ControlGains { eps_r, ..self }
    }

    pub fn with_eps_psi(self, eps_psi: f64) -> Self {
        ControlGains { eps_psi, ..self }
    }

    /// Thruster angle in radians for the rescaled state `s`.
    pub fn eta(&self, lpp: f64, s: &State4) -> f64 {
        self.eps_r * s.r / lpp + self.yaw_feedback(lpp, s.psi)
    }

    fn yaw_feedback(&self, lpp: f64, psi: f64) -> f64 {
        match self.law {
            ControlLaw::Linear => self.eps_psi * psi / lpp,
            ControlLaw::Sinusoidal => self.eps_psi * (psi / lpp).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State4 {
    pub u: f64,
    pub v: f64,
    pub r: f64,
    pub psi: f64,
}

impl State4 {
    pub fn new(u: f64, v: f64, r: f64, psi: f64) -> Self {
        State4 { u, v, r, psi }
    }

    pub fn straight(u: f64) -> Self {
        State4::new(u, 0.0, 0.0, 0.0)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.u, self.v, self.r, self.psi]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        State4::new(a[0], a[1], a[2], a[3])
    }

    pub fn from_slice(a: &[f64]) -> Self {
        State4::new(a[0], a[1], a[2], a[3])
    }

    /// `(u, v, r, psi) -> (u, -v, -r, -psi)`.
    pub fn reflect(self) -> Self {
        State4::new(self.u, -self.v, -self.r, -self.psi)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Coefficients of the quadratic expansion of the vector field about the
/// straight-motion equilibrium `(u0, 0, 0, 0)`.
///
/// `tau_1j` multiplies `cos(eta)` in the surge row, `tau_2j` and `tau_3j`
/// multiply `sin(eta)` in the sway and yaw rows, for powers `u^(j-1)` of the
/// surge perturbation. The `p_*` entries depend on the gains used to build
/// the expansion; everything else does not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionData {
    pub u0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k5: f64,
    pub k6: f64,
    pub k7: f64,
    pub k9: f64,
    pub k10: f64,
    pub k11: f64,
    pub tau: [[f64; 3]; 3],
    pub p11: f64,
    pub p22: f64,
    pub p23: f64,
    pub p24: f64,
    pub p32: f64,
    pub p33: f64,
    pub p34: f64,
    pub a: [[f64; 2]; 2],
    pub b: [[f64; 2]; 2],
}

impl ExpansionData {
    /// `(f1, f2)`, the second-order modulus part of the sway and yaw rows.
    pub fn modulus_terms(&self, v: f64, r: f64) -> [f64; 2] {
        let basis = [[v * v.abs(), v * r.abs()], [r * v.abs(), r * r.abs()]];
        let mut f = [0.0; 2];
        for i in 0..2 {
            for j in 0..2 {
                f[0] += self.a[i][j] * basis[i][j];
                f[1] += self.b[i][j] * basis[i][j];
            }
        }
        f
    }
}

/// Quadratic modulus coefficients from rescaled hull values and the mass
/// matrix.
pub fn modulus_coefficients(
    mass: &crate::params::MassParams,
    hull: &HullParams,
) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let d = (mass.m + mass.m_vv) * (mass.i_z + mass.m_rr) - mass.m_rv * mass.m_vr;
    let iz = mass.i_z + mass.m_rr;
    let mv = mass.m + mass.m_vv;
    let a = [
        [
            (iz * hull.y_bb - mass.m_vr * hull.n_bb) / d,
            iz * hull.y_bg / d,
        ],
        [
            iz * hull.y_abs_bg / d,
            (iz * hull.y_gg - mass.m_vr * hull.n_gg) / d,
        ],
    ];
    let b = [
        [
            (mv * hull.n_bb - mass.m_rv * hull.y_bb) / d,
            -mass.m_rv * hull.y_bg / d,
        ],
        [
            -mass.m_rv * hull.y_abs_bg / d,
            (mv * hull.n_gg - mass.m_rv * hull.y_gg) / d,
        ],
    ];
    (a, b)
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `x^a`, exact for integer exponents and sign-preserving otherwise.
fn spow(x: f64, a: f64) -> f64 {
    if a == a.trunc() && a.abs() < 64.0 {
        x.powi(a as i32)
    } else {
        sgn(x) * x.abs().powf(a)
    }
}

/// `d/dx spow(x, a)`.
fn dspow(x: f64, a: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else if a == a.trunc() && a.abs() < 64.0 {
        a * x.powi(a as i32 - 1)
    } else if x == 0.0 {
        if a > 1.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        a * x.abs().powf(a - 1.0)
    }
}

/// `d/dx |x|^b sgn(x)`; zero at the origin for `b > 1`, one for `b == 1`.
fn dsigned_abs_pow(x: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else if x == 0.0 {
        if b > 1.0 {
            0.0
        } else if b == 1.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        b * x.abs().powf(b - 1.0)
    }
}

/// A ship model built from validated parameters. Cheap to clone and
/// immutable; every analysis routine takes one by reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Ship {
    params: ShipParams,
    lpp: f64,
    m_l: f64,
    /// Hull coefficients divided by `Lpp`; exponents unchanged.
    hull: HullParams,
    x_t: f64,
    kt: [f64; 6],
    thrust_scale: f64,
    advance_scale: f64,
    inv_surge: f64,
    det: f64,
    inv_block: [[f64; 2]; 2],
}

impl Ship {
    pub fn new(params: ShipParams) -> Result<Ship> {
        params.validate()?;
        let lpp = params.geometry.lpp;
        let raw = params.hull;
        let hull = HullParams {
            x_uu: raw.x_uu / lpp,
            x_bg: raw.x_bg / lpp,
            y_b: raw.y_b / lpp,
            y_g: raw.y_g / lpp,
            y_bb: raw.y_bb / lpp,
            y_gg: raw.y_gg / lpp,
            y_bg: raw.y_bg / lpp,
            y_abs_bg: raw.y_abs_bg / lpp,
            y_ab: raw.y_ab / lpp,
            n_b: raw.n_b / lpp,
            n_g: raw.n_g / lpp,
            n_bb: raw.n_bb / lpp,
            n_gg: raw.n_gg / lpp,
            n_bbg: raw.n_bbg / lpp,
            n_bgg: raw.n_bgg / lpp,
            n_ugc: raw.n_ugc / lpp,
            n_ab: raw.n_ab / lpp,
            ..raw
        };
        let p = &params.propeller;
        let thrust_scale =
            (1.0 - p.thrust_deduction) * params.geometry.rho * p.np * p.np * p.dp.powi(4)
                / params.b2();
        let advance_scale = (1.0 - p.wake_fraction) / (p.np * p.dp);
        let mass = &params.mass;
        let det = params.mass_determinant();
        let inv_block = [
            [(mass.i_z + mass.m_rr) / det, -mass.m_vr / det],
            [-mass.m_rv / det, (mass.m + mass.m_vv) / det],
        ];
        Ok(Ship {
            lpp,
            m_l: mass.m / lpp,
            hull,
            x_t: params.geometry.x_t,
            kt: p.kt,
            thrust_scale,
            advance_scale,
            inv_surge: 1.0 / (mass.m + mass.m_uu),
            det,
            inv_block,
            params,
        })
    }

    pub fn htc() -> Ship {
        Ship::new(ShipParams::htc()).expect("HTC parameters are valid")
    }

    pub fn params(&self) -> &ShipParams {
        &self.params
    }

    pub fn lpp(&self) -> f64 {
        self.lpp
    }

    pub fn m_l(&self) -> f64 {
        self.m_l
    }

    pub fn x_t(&self) -> f64 {
        self.x_t
    }

    /// Rescaled hull coefficients.
    pub fn hull(&self) -> &HullParams {
        &self.hull
    }

    /// Mass determinant `D`.
    pub fn det(&self) -> f64 {
        self.det
    }

    /// Inverse of the sway/yaw mass block.
    pub fn inv_block(&self) -> [[f64; 2]; 2] {
        self.inv_block
    }

    pub fn inv_surge_mass(&self) -> f64 {
        self.inv_surge
    }

    /// Same ship with another thruster position.
    pub fn with_x_t(&self, x_t: f64) -> Result<Ship> {
        Ship::new(self.params.with_x_t(x_t))
    }

    /// The 4x4 mass matrix.
    pub fn mass_matrix(&self) -> [[f64; 4]; 4] {
        let k = &self.params.mass;
        [
            [k.m + k.m_uu, 0.0, 0.0, 0.0],
            [0.0, k.m + k.m_vv, k.m_vr, 0.0],
            [0.0, k.m_rv, k.i_z + k.m_rr, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    /// Rescaled thrust amplitude `tau(u)`.
    pub fn thrust(&self, u: f64) -> f64 {
        let j = self.advance_scale * u;
        let k = &self.kt;
        let kt = k[0] + j * (k[1] + j * (k[2] + j * (k[3] + j * (k[4] + j * k[5]))));
        self.thrust_scale * kt
    }

    pub fn thrust_checked(&self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::InvalidState);
        }
        Ok(self.thrust(u))
    }

    /// `[tau, tau', tau'', tau''']` at `u`, from the differentiated quintic.
    pub fn thrust_derivatives(&self, u: f64) -> [f64; 4] {
        let j = self.advance_scale * u;
        let mut coeffs = self.kt;
        let mut out = [0.0; 4];
        let mut scale = self.thrust_scale;
        for (order, slot) in out.iter_mut().enumerate() {
            let n = 6 - order;
            let mut acc = 0.0;
            for c in coeffs[..n].iter().rev() {
                acc = acc * j + c;
            }
            *slot = scale * acc;
            for i in 0..n - 1 {
                coeffs[i] = coeffs[i + 1] * (i + 1) as f64;
            }
            scale *= self.advance_scale;
        }
        out
    }

    /// Rescaled hull forces `(X, Y, N)`.
    pub fn hull_forces(&self, s: &State4) -> [f64; 3] {
        let h = &self.hull;
        let (u, v, r) = (s.u, s.v, s.r);
        let vv = u.hypot(v);
        let x = h.x_uu * u * u + h.x_bg * v * r;
        let y = h.y_b * u * v
            + h.y_g * u * r
            + h.y_bb * v * v.abs()
            + h.y_gg * r * r.abs()
            + h.y_bg * v * r.abs()
            + h.y_abs_bg * v.abs() * r
            + self.generic_term(h.y_ab, h.a_y, h.b_y, u, v, vv).0;
        let n = h.n_b * u * v
            + h.n_g * u * r
            + self.yaw_rate_term(u, v, r, vv).0
            + h.n_gg * r * r.abs()
            + h.n_bb * v * v.abs()
            + guarded(vv, -1.0, || h.n_bbg * r * v * v / vv)
            + guarded(vv, -1.0, || h.n_bgg * v * r * r / vv)
            + self.generic_term(h.n_ab, h.a_n, h.b_n, u, v, vv).0;
        [x, y, n]
    }

    /// Partials of the hull forces with respect to `(u, v, r)`.
    pub fn hull_partials(&self, s: &State4) -> [[f64; 3]; 3] {
        let h = &self.hull;
        let (u, v, r) = (s.u, s.v, s.r);
        let vv = u.hypot(v);
        let (av, ar) = (v.abs(), r.abs());
        let x = [2.0 * h.x_uu * u, h.x_bg * r, h.x_bg * v];

        let (_, yg_u, yg_v) = self.generic_term(h.y_ab, h.a_y, h.b_y, u, v, vv);
        let y = [
            h.y_b * v + h.y_g * r + yg_u,
            h.y_b * u + 2.0 * h.y_bb * av + h.y_bg * ar + h.y_abs_bg * sgn(v) * r + yg_v,
            h.y_g * u + 2.0 * h.y_gg * ar + h.y_bg * v * sgn(r) + h.y_abs_bg * av,
        ];

        let (_, ng_u, ng_v) = self.generic_term(h.n_ab, h.a_n, h.b_n, u, v, vv);
        let (_, nc_u, nc_v, nc_r) = self.yaw_rate_term(u, v, r, vv);
        let mut n = [
            h.n_b * v + h.n_g * r + ng_u + nc_u,
            h.n_b * u + 2.0 * h.n_bb * av + ng_v + nc_v,
            h.n_g * u + 2.0 * h.n_gg * ar + nc_r,
        ];
        if vv >= V_GUARD {
            let v3 = vv * vv * vv;
            n[0] += -h.n_bbg * r * v * v * u / v3 - h.n_bgg * v * r * r * u / v3;
            n[1] += h.n_bbg * r * (2.0 * v / vv - v * v * v / v3)
                + h.n_bgg * r * r * (1.0 / vv - v * v / v3);
            n[2] += h.n_bbg * v * v / vv + 2.0 * h.n_bgg * v * r / vv;
        }
        [x, y, n]
    }

    /// `c u^a |v|^b sgn(v) V^(2-a-b)` and its `u`, `v` partials.
    fn generic_term(&self, c: f64, a: f64, b: f64, u: f64, v: f64, vv: f64) -> (f64, f64, f64) {
        let k = 2.0 - a - b;
        if c == 0.0 || v == 0.0 || (k < 0.0 && vv < V_GUARD) {
            let dv = if v == 0.0 && c != 0.0 && vv >= V_GUARD {
                c * spow(u, a) * dsigned_abs_pow(0.0, b) * vv.powf(k)
            } else {
                0.0
            };
            return (0.0, 0.0, dv);
        }
        let vb = v.abs().powf(b) * sgn(v);
        let vk = vv.powf(k);
        let vk2 = vv.powf(k - 2.0);
        let ua = spow(u, a);
        let value = c * ua * vb * vk;
        let du = c * vb * (dspow(u, a) * vk + ua * k * vk2 * u);
        let dv = c * ua * (dsigned_abs_pow(v, b) * vk + vb * k * vk2 * v);
        (value, du, dv)
    }

    /// `N_{u'gamma c} u |r|^c sgn(r) V^(1-c)` and its partials.
    fn yaw_rate_term(&self, u: f64, v: f64, r: f64, vv: f64) -> (f64, f64, f64, f64) {
        let h = &self.hull;
        let (c, e) = (h.n_ugc, h.c_n);
        let k = 1.0 - e;
        if c == 0.0 || (k < 0.0 && vv < V_GUARD) {
            return (0.0, 0.0, 0.0, 0.0);
        }
        let vk = vv.powf(k);
        let dr = c * u * dsigned_abs_pow(r, e) * vk;
        if r == 0.0 {
            return (0.0, 0.0, 0.0, dr);
        }
        let re = r.abs().powf(e) * sgn(r);
        let vk2 = vv.powf(k - 2.0);
        let value = c * u * re * vk;
        let du = c * re * (vk + u * k * vk2 * u);
        let dv = c * u * re * k * vk2 * v;
        (value, du, dv, dr)
    }

    /// Steering angle `eta` in radians.
    pub fn steering_angle(&self, gains: &ControlGains, s: &State4) -> f64 {
        gains.eta(self.lpp, s)
    }

    /// `[d eta/d r, d eta/d psi]`.
    fn steering_partials(&self, gains: &ControlGains, psi: f64) -> [f64; 2] {
        let dpsi = match gains.law {
            ControlLaw::Linear => gains.eps_psi / self.lpp,
            ControlLaw::Sinusoidal => gains.eps_psi * (psi / self.lpp).cos() / self.lpp,
        };
        [gains.eps_r / self.lpp, dpsi]
    }

    /// Unreduced force vector `F` with `M f = F`.
    pub fn forces(&self, gains: &ControlGains, s: &State4) -> [f64; 4] {
        let [x, y, n] = self.hull_forces(s);
        let tau = self.thrust(s.u);
        let (sin_eta, cos_eta) = self.steering_angle(gains, s).sin_cos();
        [
            self.m_l * s.v * s.r + x + tau * cos_eta,
            -self.m_l * s.u * s.r + y + tau * sin_eta,
            n + self.x_t * tau * sin_eta,
            s.r,
        ]
    }

    pub fn apply_mass_inverse(&self, f: [f64; 4]) -> [f64; 4] {
        let b = &self.inv_block;
        [
            self.inv_surge * f[0],
            b[0][0] * f[1] + b[0][1] * f[2],
            b[1][0] * f[1] + b[1][1] * f[2],
            f[3],
        ]
    }

    /// The vector field `M^{-1} F`.
    pub fn rhs(&self, gains: &ControlGains, s: &State4) -> State4 {
        State4::from_array(self.apply_mass_inverse(self.forces(gains, s)))
    }

    pub fn rhs_checked(&self, gains: &ControlGains, s: &State4) -> Result<State4> {
        if !s.is_finite() || !gains.eps_r.is_finite() || !gains.eps_psi.is_finite() {
            return Err(Error::InvalidState);
        }
        let f = self.rhs(gains, s);
        if !f.is_finite() {
            return Err(Error::InvalidState);
        }
        Ok(f)
    }

    /// Analytic Jacobian of the vector field, `J[i][j] = d f_i / d x_j`.
    /// Modulus terms use the one-sided convention `sgn(0) = 0`.
    pub fn jacobian(&self, gains: &ControlGains, s: &State4) -> [[f64; 4]; 4] {
        let hp = self.hull_partials(s);
        let [tau, dtau, _, _] = self.thrust_derivatives(s.u);
        let (sin_eta, cos_eta) = self.steering_angle(gains, s).sin_cos();
        let [eta_r, eta_psi] = self.steering_partials(gains, s.psi);
        let ml = self.m_l;
        let f = [
            [
                hp[0][0] + dtau * cos_eta,
                ml * s.r + hp[0][1],
                ml * s.v + hp[0][2] - tau * sin_eta * eta_r,
                -tau * sin_eta * eta_psi,
            ],
            [
                -ml * s.r + hp[1][0] + dtau * sin_eta,
                hp[1][1],
                -ml * s.u + hp[1][2] + tau * cos_eta * eta_r,
                tau * cos_eta * eta_psi,
            ],
            [
                hp[2][0] + self.x_t * dtau * sin_eta,
                hp[2][1],
                hp[2][2] + self.x_t * tau * cos_eta * eta_r,
                self.x_t * tau * cos_eta * eta_psi,
            ],
            [0.0, 0.0, 1.0, 0.0],
        ];
        let mut j = [[0.0; 4]; 4];
        for col in 0..4 {
            let c = self.apply_mass_inverse([f[0][col], f[1][col], f[2][col], f[3][col]]);
            for row in 0..4 {
                j[row][col] = c[row];
            }
        }
        j
    }

    /// `(d f / d eps_r, d f / d eps_psi)` at fixed state.
    pub fn gain_derivatives(&self, gains: &ControlGains, s: &State4) -> ([f64; 4], [f64; 4]) {
        let tau = self.thrust(s.u);
        let (sin_eta, cos_eta) = self.steering_angle(gains, s).sin_cos();
        let d_eta = [-tau * sin_eta, tau * cos_eta, self.x_t * tau * cos_eta, 0.0];
        let eta_eps_r = s.r / self.lpp;
        let eta_eps_psi = match gains.law {
            ControlLaw::Linear => s.psi / self.lpp,
            ControlLaw::Sinusoidal => (s.psi / self.lpp).sin(),
        };
        let dr = self.apply_mass_inverse(d_eta.map(|x| x * eta_eps_r));
        let dp = self.apply_mass_inverse(d_eta.map(|x| x * eta_eps_psi));
        (dr, dp)
    }

    /// Quadratic expansion about `(u0, 0, 0, 0)`.
    pub fn expand_at_equilibrium(&self, gains: &ControlGains, u0: f64) -> ExpansionData {
        let h = &self.hull;
        let k = &self.params.mass;
        let inv_u = self.inv_surge;
        let b = &self.inv_block;
        let [t0, t1, t2, _] = self.thrust_derivatives(u0);
        let q23 = b[0][0] + b[0][1] * self.x_t;
        let q33 = b[1][0] + b[1][1] * self.x_t;
        // sway/yaw coefficients of u*v and u*r
        let yv = h.y_b;
        let yr = h.y_g - self.m_l;
        let p22u = b[0][0] * yv + b[0][1] * h.n_b;
        let p23u = b[0][0] * yr + b[0][1] * h.n_g;
        let p32u = b[1][0] * yv + b[1][1] * h.n_b;
        let p33u = b[1][0] * yr + b[1][1] * h.n_g;
        let tau = [
            [t0 * inv_u, t1 * inv_u, 0.5 * t2 * inv_u],
            [q23 * t0, q23 * t1, 0.5 * q23 * t2],
            [q33 * t0, q33 * t1, 0.5 * q33 * t2],
        ];
        let er = gains.eps_r / self.lpp;
        let ep = gains.eps_psi / self.lpp;
        let k1 = 2.0 * h.x_uu * u0 * inv_u;
        let (a, bb) = modulus_coefficients(k, h);
        ExpansionData {
            u0,
            k1,
            k2: h.x_uu * inv_u,
            k3: (self.m_l + h.x_bg) * inv_u,
            k5: p23u * u0,
            k6: p22u,
            k7: p23u,
            k9: p33u * u0,
            k10: p32u,
            k11: p33u,
            tau,
            p11: k1 + tau[0][1],
            p22: p22u * u0,
            p23: p23u * u0 + tau[1][0] * er,
            p24: tau[1][0] * ep,
            p32: p32u * u0,
            p33: p33u * u0 + tau[2][0] * er,
            p34: tau[2][0] * ep,
            a,
            b: bb,
        }
    }
}

fn guarded(vv: f64, power: f64, term: impl FnOnce() -> f64) -> f64 {
    if power < 0.0 && vv < V_GUARD {
        0.0
    } else {
        term()
    }
}

/// Rescaled thrust `tau(u)` for a parameter set.
pub fn propeller_thrust(params: &ShipParams, u: f64) -> Result<f64> {
    Ship::new(*params)?.thrust_checked(u)
}

pub fn hull_forces(params: &ShipParams, s: &State4) -> Result<[f64; 3]> {
    if !s.is_finite() {
        return Err(Error::InvalidState);
    }
    Ok(Ship::new(*params)?.hull_forces(s))
}

pub fn rhs(params: &ShipParams, gains: &ControlGains, s: &State4) -> Result<State4> {
    Ship::new(*params)?.rhs_checked(gains, s)
}

pub fn expand_at_equilibrium(
    params: &ShipParams,
    gains: &ControlGains,
    u0: f64,
) -> Result<ExpansionData> {
    Ok(Ship::new(*params)?.expand_at_equilibrium(gains, u0))
}
