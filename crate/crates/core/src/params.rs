//! Ship parameters with the Hamburg Test Case (HTC) defaults.
//!
//! Mass values are stored already rescaled by `B_i = rho/2 * Lpp^i * T`.
//! Hull coefficients are stored as tabulated (dimensionless) and divided by
//! `Lpp` when a [`crate::Ship`] is built.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassParams {
    pub m: f64,
    pub m_uu: f64,
    pub m_vv: f64,
    pub m_rr: f64,
    pub m_vr: f64,
    pub m_rv: f64,
    pub i_z: f64,
}

impl Default for MassParams {
    fn default() -> Self {
        MassParams {
            m: 0.2328,
            m_uu: 0.0247,
            m_vv: 0.2286,
            m_rr: 0.0150,
            m_vr: 0.0074,
            m_rv: 0.0074,
            i_z: 0.0134,
        }
    }
}

/// Bare hull coefficients. `beta`/`gamma` subscripts follow the usual
/// naming: `y_bb` is `Y_{beta|beta|}`, `y_bg` is `Y_{beta|gamma|}`,
/// `y_abs_bg` is `Y_{|beta|gamma}`, `x_bg` is `X_{beta gamma}` and so on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullParams {
    pub x_uu: f64,
    pub x_bg: f64,
    pub y_b: f64,
    pub y_g: f64,
    pub y_bb: f64,
    pub y_gg: f64,
    pub y_bg: f64,
    pub y_abs_bg: f64,
    pub y_ab: f64,
    pub n_b: f64,
    pub n_g: f64,
    pub n_bb: f64,
    pub n_gg: f64,
    pub n_bbg: f64,
    pub n_bgg: f64,
    pub n_ugc: f64,
    pub n_ab: f64,
    pub a_y: f64,
    pub b_y: f64,
    pub a_n: f64,
    pub b_n: f64,
    pub c_n: f64,
}

impl Default for HullParams {
    fn default() -> Self {
        HullParams {
            x_uu: -0.0141,
            x_bg: 0.0,
            y_b: -0.1735,
            y_g: 0.0338,
            y_bb: -1.1378,
            y_gg: 0.0123,
            y_bg: -0.0537,
            y_abs_bg: 0.1251,
            y_ab: 0.0,
            n_b: -0.1442,
            n_g: -0.0276,
            n_bb: -0.0375,
            n_gg: -0.0386,
            n_bbg: 0.0,
            n_bgg: 0.0,
            n_ugc: 0.0,
            n_ab: 0.0,
            a_y: 3.0,
            b_y: 2.0,
            a_n: 1.0,
            b_n: 3.0,
            c_n: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropellerParams {
    /// Diameter in metres.
    pub dp: f64,
    /// Revolutions per second.
    pub np: f64,
    /// Open-water thrust polynomial `K_T(J) = sum kt[i] J^i`.
    pub kt: [f64; 6],
    pub thrust_deduction: f64,
    pub wake_fraction: f64,
}

impl Default for PropellerParams {
    fn default() -> Self {
        PropellerParams {
            dp: 6.105,
            np: 2.0,
            kt: [
                0.366897, -0.345036, 0.068841, -0.710991, 0.948559, -0.428915,
            ],
            thrust_deduction: 0.22,
            wake_fraction: 0.38,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    pub lpp: f64,
    pub draft: f64,
    pub rho: f64,
    /// Thruster position as a fraction of `lpp`.
    pub x_t: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams {
            lpp: 153.70,
            draft: 10.30,
            rho: 1025.0,
            x_t: -0.49429,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ShipParams {
    pub mass: MassParams,
    pub hull: HullParams,
    pub propeller: PropellerParams,
    pub geometry: GeometryParams,
}

impl ShipParams {
    /// The Hamburg Test Case.
    pub fn htc() -> Self {
        Self::default()
    }

    pub fn with_dp(mut self, dp: f64) -> Self {
        self.propeller.dp = dp;
        self
    }

    pub fn with_np(mut self, np: f64) -> Self {
        self.propeller.np = np;
        self
    }

    pub fn with_x_t(mut self, x_t: f64) -> Self {
        self.geometry.x_t = x_t;
        self
    }

    /// `(m + m_vv)(I_z + m_rr) - m_rv m_vr`.
    pub fn mass_determinant(&self) -> f64 {
        let k = &self.mass;
        (k.m + k.m_vv) * (k.i_z + k.m_rr) - k.m_rv * k.m_vr
    }

    /// `B_2 = rho/2 * Lpp^2 * T`.
    pub fn b2(&self) -> f64 {
        let g = &self.geometry;
        0.5 * g.rho * g.lpp * g.lpp * g.draft
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| {
            Err(Error::InvalidParameter {
                key: key.to_string(),
                reason: reason.to_string(),
            })
        };
        for (key, value) in self.entries() {
            if !value.is_finite() {
                return bad(&key, "not finite");
            }
        }
        let positive = [
            ("propeller.dp", self.propeller.dp),
            ("propeller.np", self.propeller.np),
            ("geometry.lpp", self.geometry.lpp),
            ("geometry.draft", self.geometry.draft),
            ("geometry.rho", self.geometry.rho),
            ("mass.m", self.mass.m),
        ];
        for (key, value) in positive {
            if value <= 0.0 {
                return bad(key, "must be positive");
            }
        }
        if !(-0.5..=0.5).contains(&self.geometry.x_t) {
            return bad("geometry.x_t", "must lie in [-0.5, 0.5]");
        }
        if self.mass.m + self.mass.m_uu <= 0.0 {
            return bad("mass.m_uu", "m + m_uu must be positive");
        }
        let d = self.mass_determinant();
        if d <= 0.0 {
            return Err(Error::SingularMassMatrix(d));
        }
        Ok(())
    }

    /// Flat `section.key` view of every field, in a fixed order.
    pub fn entries(&self) -> Vec<(String, f64)> {
        KEYS.iter()
            .map(|k| (k.to_string(), self.get(k).expect("known key")))
            .collect()
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        let mut copy = *self;
        copy.field_mut(key).map(|f| *f)
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match self.field_mut(key) {
            Some(f) => {
                *f = value;
                Ok(())
            }
            None => Err(Error::InvalidParameter {
                key: key.to_string(),
                reason: "unknown key".to_string(),
            }),
        }
    }

    fn field_mut(&mut self, key: &str) -> Option<&mut f64> {
        let (m, h, p, g) = (
            &mut self.mass,
            &mut self.hull,
            &mut self.propeller,
            &mut self.geometry,
        );
        let f = match key {
            "mass.m" => &mut m.m,
            "mass.m_uu" => &mut m.m_uu,
            "mass.m_vv" => &mut m.m_vv,
            "mass.m_rr" => &mut m.m_rr,
            "mass.m_vr" => &mut m.m_vr,
            "mass.m_rv" => &mut m.m_rv,
            "mass.i_z" => &mut m.i_z,
            "hull.x_uu" => &mut h.x_uu,
            "hull.x_bg" => &mut h.x_bg,
            "hull.y_b" => &mut h.y_b,
            "hull.y_g" => &mut h.y_g,
            "hull.y_bb" => &mut h.y_bb,
            "hull.y_gg" => &mut h.y_gg,
            "hull.y_bg" => &mut h.y_bg,
            "hull.y_abs_bg" => &mut h.y_abs_bg,
            "hull.y_ab" => &mut h.y_ab,
            "hull.n_b" => &mut h.n_b,
            "hull.n_g" => &mut h.n_g,
            "hull.n_bb" => &mut h.n_bb,
            "hull.n_gg" => &mut h.n_gg,
            "hull.n_bbg" => &mut h.n_bbg,
            "hull.n_bgg" => &mut h.n_bgg,
            "hull.n_ugc" => &mut h.n_ugc,
            "hull.n_ab" => &mut h.n_ab,
            "hull.a_y" => &mut h.a_y,
            "hull.b_y" => &mut h.b_y,
            "hull.a_n" => &mut h.a_n,
            "hull.b_n" => &mut h.b_n,
            "hull.c_n" => &mut h.c_n,
            "propeller.dp" => &mut p.dp,
            "propeller.np" => &mut p.np,
            "propeller.kt0" => &mut p.kt[0],
            "propeller.kt1" => &mut p.kt[1],
            "propeller.kt2" => &mut p.kt[2],
            "propeller.kt3" => &mut p.kt[3],
            "propeller.kt4" => &mut p.kt[4],
            "propeller.kt5" => &mut p.kt[5],
            "propeller.thrust_deduction" => &mut p.thrust_deduction,
            "propeller.wake_fraction" => &mut p.wake_fraction,
            "geometry.lpp" => &mut g.lpp,
            "geometry.draft" => &mut g.draft,
            "geometry.rho" => &mut g.rho,
            "geometry.x_t" => &mut g.x_t,
            _ => return None,
        };
        Some(f)
    }
}

/// Every accepted configuration key.
pub const KEYS: [&str; 43] = [
    "mass.m",
    "mass.m_uu",
    "mass.m_vv",
    "mass.m_rr",
    "mass.m_vr",
    "mass.m_rv",
    "mass.i_z",
    "hull.x_uu",
    "hull.x_bg",
    "hull.y_b",
    "hull.y_g",
    "hull.y_bb",
    "hull.y_gg",
    "hull.y_bg",
    "hull.y_abs_bg",
    "hull.y_ab",
    "hull.n_b",
    "hull.n_g",
    "hull.n_bb",
    "hull.n_gg",
    "hull.n_bbg",
    "hull.n_bgg",
    "hull.n_ugc",
    "hull.n_ab",
    "hull.a_y",
    "hull.b_y",
    "hull.a_n",
    "hull.b_n",
    "hull.c_n",
    "propeller.dp",
    "propeller.np",
    "propeller.kt0",
    "propeller.kt1",
    "propeller.kt2",
    "propeller.kt3",
    "propeller.kt4",
    "propeller.kt5",
    "propeller.thrust_deduction",
    "propeller.wake_fraction",
    "geometry.lpp",
    "geometry.draft",
    "geometry.rho",
    "geometry.x_t",
];

/// Parse a flat configuration text on top of the HTC defaults.
///
/// Grammar: one `section.key = value` per line; `#` starts a comment;
/// blank lines are ignored. Unknown keys and repeated keys are errors.
pub fn parse_config(text: &str) -> Result<ShipParams> {
    parse_config_onto(ShipParams::default(), text)
}

pub fn parse_config_onto(mut params: ShipParams, text: &str) -> Result<ShipParams> {
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Config {
            line: line_no,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `section.key = value`, got `{line}`")))?;
        let key = key.trim();
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| err(format!("`{}` is not a number", value.trim())))?;
        if !seen.insert(key.to_string()) {
            return Err(err(format!("duplicate key `{key}`")));
        }
        params
            .set(key, value)
            .map_err(|_| err(format!("unknown key `{key}`")))?;
    }
    params.validate()?;
    Ok(params)
}
