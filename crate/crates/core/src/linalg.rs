//! Small dense helpers: cubic roots and fixed-size solves.

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;

fn cubic(c2: f64, c1: f64, c0: f64, x: f64) -> (f64, f64) {
    let f = ((x + c2) * x + c1) * x + c0;
    let df = (3.0 * x + 2.0 * c2) * x + c1;
    (f, df)
}

fn polish(c2: f64, c1: f64, c0: f64, mut x: f64) -> f64 {
    for _ in 0..3 {
        let (f, df) = cubic(c2, c1, c0, x);
        if df == 0.0 || f == 0.0 {
            break;
        }
        let next = x - f / df;
        if (cubic(c2, c1, c0, next).0).abs() >= f.abs() {
            break;
        }
        x = next;
    }
    x
}

/// Roots of `x^2 + b x + c`.
pub fn quadratic_roots(b: f64, c: f64) -> [C64; 2] {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            return [C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
        }
        let (x1, x2) = (q, c / q);
        let (hi, lo) = if x1 >= x2 { (x1, x2) } else { (x2, x1) };
        [C64::new(hi, 0.0), C64::new(lo, 0.0)]
    } else {
        let re = -0.5 * b;
        let im = 0.5 * (-disc).sqrt();
        [C64::new(re, im), C64::new(re, -im)]
    }
}

/// Roots of the monic cubic `x^3 + c2 x^2 + c1 x + c0`, sorted by
/// decreasing real part (then decreasing imaginary part).
///
/// Closed form (trigonometric for three real roots, Cardano otherwise),
/// one Newton polish of the real root, then deflation.
pub fn cubic_roots(c2: f64, c1: f64, c0: f64) -> [C64; 3] {
    let shift = c2 / 3.0;
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    let disc = -(4.0 * p * p * p + 27.0 * q * q);
    let mut roots = if disc > 0.0 && p < 0.0 {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        let mut t: Vec<f64> = (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift)
            .collect();
        for x in t.iter_mut() {
            *x = polish(c2, c1, c0, *x);
        }
        [
            C64::new(t[0], 0.0),
            C64::new(t[1], 0.0),
            C64::new(t[2], 0.0),
        ]
    } else {
        let s = (q * q / 4.0 + p * p * p / 27.0).max(0.0).sqrt();
        let real = (-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt() - shift;
        let real = polish(c2, c1, c0, real);
        let b1 = c2 + real;
        let b0 = c1 + real * b1;
        let [z1, z2] = quadratic_roots(b1, b0);
        [C64::new(real, 0.0), z1, z2]
    };
    sort_by_real(&mut roots);
    roots
}

pub fn sort_by_real(z: &mut [C64]) {
    z.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
    });
}

/// Eigenvalues of a dense square matrix (balanced first).
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<C64> {
    let n = m.nrows();
    let (_, t) = balance(m).schur().unpack();
    let mut ev = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            ev.extend(quadratic_roots(-(a + d), a * d - b * c));
            i += 2;
        } else {
            ev.push(C64::new(t[(i, i)], 0.0));
            i += 1;
        }
    }
    sort_by_real(&mut ev);
    ev
}

/// Diagonal similarity equalizing row and column norms (powers of two,
/// so exact).
pub fn balance(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let (mut c2, mut r2) = (c, r);
            while c2 < r2 / 2.0 {
                c2 *= 2.0;
                r2 /= 2.0;
                f *= 2.0;
            }
            while c2 >= r2 * 2.0 {
                c2 /= 2.0;
                r2 *= 2.0;
                f /= 2.0;
            }
            if (c2 + r2) < 0.95 * s {
                converged = false;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
    }
    a
}

/// `A x = b` via LU with partial pivoting.
pub fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Option<DVector<f64>> {
    a.lu().solve(&b)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}
