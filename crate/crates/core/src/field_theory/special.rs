//! Spherical Bessel functions of the first kind and complex orthonormal
//! spherical harmonics.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

use super::sinc;

/// Highest spherical Bessel order supported.
pub const MAX_BESSEL_ORDER: usize = 150;

const RESCALE_ABOVE: f64 = 1e250;

/// `j_n(x)` for `x >= 0`.
pub fn spherical_bessel_j(n: usize, x: f64) -> Result<f64> {
    Ok(spherical_bessel_all(n, x)?[n])
}

/// `[j_0(x), ..., j_{n_max}(x)]`.
///
/// Uses upward recurrence when `x > n_max` and Miller's downward recurrence
/// otherwise, normalized against whichever of `j_0`, `j_1` is larger.
pub fn spherical_bessel_all(n_max: usize, x: f64) -> Result<Vec<f64>> {
    if n_max > MAX_BESSEL_ORDER {
        return Err(Error::OrderTooLarge {
            order: n_max,
            max: MAX_BESSEL_ORDER,
        });
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::SingularInput(format!(
            "spherical Bessel argument {x}"
        )));
    }
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return Ok(out);
    }
    let j0 = sinc(x);
    if n_max == 0 {
        out[0] = j0;
        return Ok(out);
    }
    if x > n_max as f64 {
        let (s, c) = x.sin_cos();
        out[0] = j0;
        out[1] = s / (x * x) - c / x;
        for k in 1..n_max {
            out[k + 1] = (2 * k + 1) as f64 / x * out[k] - out[k - 1];
        }
        return Ok(out);
    }

    let top = n_max.max(x.ceil() as usize);
    let start = top + 20 + (50.0 * top as f64).sqrt().ceil() as usize;
    let mut next = 0.0;
    let mut cur = 1e-30;
    for k in (1..=start).rev() {
        if k <= n_max {
            out[k] = cur;
        }
        let prev = (2 * k + 1) as f64 / x * cur - next;
        next = cur;
        cur = prev;
        if cur.abs() > RESCALE_ABOVE {
            let s = 1.0 / RESCALE_ABOVE;
            cur *= s;
            next *= s;
            for v in out.iter_mut().skip(k.saturating_sub(1)) {
                *v *= s;
            }
        }
    }
    out[0] = cur;
    let j1 = j1_direct(x);
    let scale = if j0.abs() >= j1.abs() {
        j0 / out[0]
    } else {
        j1 / out[1]
    };
    for v in &mut out {
        *v *= scale;
    }
    Ok(out)
}

fn j1_direct(x: f64) -> f64 {
    if x < 1e-2 {
        let x2 = x * x;
        x / 3.0 * (1.0 - x2 / 10.0 * (1.0 - x2 / 28.0))
    } else {
        let (s, c) = x.sin_cos();
        s / (x * x) - c / x
    }
}

/// Index of `Y_nm` in the flat layout used by [`spherical_harmonics_all`].
pub fn sh_index(n: usize, m: i64) -> usize {
    ((n * n + n) as i64 + m) as usize
}

/// Complex orthonormal `Y_nm(dir)` with the Condon-Shortley phase.
pub fn spherical_harmonic(n: usize, m: i64, dir: Vec3) -> Result<Complex64> {
    if m.unsigned_abs() as usize > n {
        return Err(Error::InvalidHarmonic { n, m });
    }
    Ok(spherical_harmonics_all(n, dir)?[sh_index(n, m)])
}

/// All `Y_nm(dir)` for `n <= n_max`, stored at index `n^2 + n + m`.
pub fn spherical_harmonics_all(n_max: usize, dir: Vec3) -> Result<Vec<Complex64>> {
    let u = dir
        .normalized()
        .ok_or_else(|| Error::SingularInput("spherical harmonic of the zero vector".into()))?;
    let ct = u.z.clamp(-1.0, 1.0);
    let st = (u.x * u.x + u.y * u.y).sqrt();
    let phi = u.y.atan2(u.x);
    let plm = normalized_legendre(n_max, ct, st);

    let mut out = vec![Complex64::new(0.0, 0.0); (n_max + 1) * (n_max + 1)];
    for m in 0..=n_max {
        let e = Complex64::from_polar(1.0, m as f64 * phi);
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        for n in m..=n_max {
            let y = e * plm[n * (n_max + 1) + m];
            let base = n * n + n;
            out[base + m] = y;
            if m > 0 {
                out[base - m] = y.conj() * sign;
            }
        }
    }
    Ok(out)
}

/// Fully normalized associated Legendre values `P̄_n^m`, row-major `[n][m]`,
/// including the Condon-Shortley phase, such that `Y_nm = P̄_n^m e^{i m phi}`.
fn normalized_legendre(n_max: usize, ct: f64, st: f64) -> Vec<f64> {
    let w = n_max + 1;
    let mut p = vec![0.0; w * w];
    p[0] = (1.0 / (4.0 * PI)).sqrt();
    for m in 1..=n_max {
        let mf = m as f64;
        p[m * w + m] = -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * st * p[(m - 1) * w + m - 1];
    }
    for m in 0..n_max {
        p[(m + 1) * w + m] = (2.0 * m as f64 + 3.0).sqrt() * ct * p[m * w + m];
    }
    for m in 0..=n_max {
        for n in m + 2..=n_max {
            let (nf, mf) = (n as f64, m as f64);
            let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
            let b = (((nf - 1.0) * (nf - 1.0) - mf * mf) / (4.0 * (nf - 1.0) * (nf - 1.0) - 1.0))
                .sqrt();
            p[n * w + m] = a * (ct * p[(n - 1) * w + m] - b * p[(n - 2) * w + m]);
        }
    }
    p
}
