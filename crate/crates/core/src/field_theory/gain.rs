use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use super::quadrature::{adaptive_simpson, SphereQuadrature};
use super::special::{sh_index, spherical_bessel_all, spherical_harmonics_all};
use super::{sinc, BandSpec, PhysicalConstants};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

const NORMALIZATION_TOL: f64 = 1e-6;

/// Shape of a directional power gain, before normalization.
#[derive(Clone)]
pub enum GainPattern {
    Isotropic,
    /// `exp(kappa * (y . axis))`.
    VonMisesFisher {
        axis: Vec3,
        kappa: f64,
    },
    /// Constant inside the cone of half-angle `half_angle` about `axis`.
    Cap {
        axis: Vec3,
        half_angle: f64,
    },
    Custom(Arc<dyn Fn(Vec3) -> f64 + Send + Sync>),
}

impl fmt::Debug for GainPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainPattern::Isotropic => write!(f, "Isotropic"),
            GainPattern::VonMisesFisher { axis, kappa } => {
                write!(f, "VonMisesFisher {{ axis: {axis:?}, kappa: {kappa} }}")
            }
            GainPattern::Cap { axis, half_angle } => {
                write!(f, "Cap {{ axis: {axis:?}, half_angle: {half_angle} }}")
            }
            GainPattern::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Average power gain `G(y)` over unit directions, frequency independent.
///
/// `scale` multiplies the raw pattern. A gain built by [`DirectionalGain::normalized`]
/// integrates to 1 over the sphere and is flagged as such.
#[derive(Debug, Clone)]
pub struct DirectionalGain {
    pattern: GainPattern,
    scale: f64,
    normalized: bool,
}

impl DirectionalGain {
    /// `G = 1 / 4 pi`.
    pub fn isotropic() -> Self {
        Self {
            pattern: GainPattern::Isotropic,
            scale: 1.0 / (4.0 * PI),
            normalized: true,
        }
    }

    /// Unnormalized gain with unit scale.
    pub fn raw(pattern: GainPattern) -> Result<Self> {
        match &pattern {
            GainPattern::VonMisesFisher { axis, kappa } => {
                if axis.normalized().is_none() || !(*kappa >= 0.0 && kappa.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "von Mises-Fisher gain needs a nonzero axis and kappa >= 0, got {kappa}"
                    )));
                }
            }
            GainPattern::Cap { axis, half_angle }
                if (axis.normalized().is_none() || !(*half_angle > 0.0 && *half_angle <= PI)) =>
            {
                return Err(Error::InvalidConfig(format!(
                    "cap gain needs a nonzero axis and half angle in (0, pi], got {half_angle}"
                )));
            }
            _ => {}
        }
        Ok(Self {
            pattern,
            scale: 1.0,
            normalized: false,
        })
    }

    /// Scales `pattern` so that it integrates to 1 under `quad`.
    pub fn normalized(pattern: GainPattern, quad: &SphereQuadrature) -> Result<Self> {
        let raw = Self::raw(pattern)?;
        let integral = raw.integral(quad);
        if !(integral > 0.0 && integral.is_finite()) {
            return Err(Error::UnnormalizedGain { integral });
        }
        Ok(Self {
            scale: 1.0 / integral,
            normalized: true,
            ..raw
        })
    }

    pub fn pattern(&self) -> &GainPattern {
        &self.pattern
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `G(y)`; `y` need not be unit length.
    pub fn eval(&self, y: Vec3) -> f64 {
        let u = y.normalized().unwrap_or(Vec3::Z);
        let raw = match &self.pattern {
            GainPattern::Isotropic => 1.0,
            GainPattern::VonMisesFisher { axis, kappa } => {
                let a = axis.normalized().unwrap_or(Vec3::Z);
                // Shifted so the peak is 1 and large kappa cannot overflow.
                (kappa * (u.dot(a) - 1.0)).exp()
            }
            GainPattern::Cap { axis, half_angle } => {
                let a = axis.normalized().unwrap_or(Vec3::Z);
                if u.dot(a) >= half_angle.cos() {
                    1.0
                } else {
                    0.0
                }
            }
            GainPattern::Custom(f) => f(u),
        };
        (self.scale * raw).max(0.0)
    }

    /// `xi(y, omega) = G(y) / delta_omega`.
    pub fn xi(&self, y: Vec3, band: &BandSpec) -> f64 {
        self.eval(y) / band.delta_omega()
    }

    pub fn integral(&self, quad: &SphereQuadrature) -> f64 {
        quad.integrate(|y| self.eval(y))
    }
}

/// `beta_nm` for `0 <= n <= order`, stored at `n^2 + n + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShCoefficients {
    order: usize,
    coeffs: Vec<Complex64>,
}

impl ShCoefficients {
    pub fn new(order: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        let expected = (order + 1) * (order + 1);
        if coeffs.len() != expected {
            return Err(Error::InvalidConfig(format!(
                "order {order} needs {expected} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(Self { order, coeffs })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn get(&self, n: usize, m: i64) -> Result<Complex64> {
        if n > self.order || m.unsigned_abs() as usize > n {
            return Err(Error::InvalidHarmonic { n, m });
        }
        Ok(self.coeffs[sh_index(n, m)])
    }

    /// `sum_nm beta_nm Y_nm(y)`.
    pub fn synthesize(&self, y: Vec3) -> Result<Complex64> {
        let ys = spherical_harmonics_all(self.order, y)?;
        Ok(ys.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum())
    }
}

/// `beta_nm = integral of G(y) conj(Y_nm(y))` up to order `order`.
pub fn beta_coefficients(
    g: &DirectionalGain,
    order: usize,
    quad: &SphereQuadrature,
) -> Result<ShCoefficients> {
    let integral = g.integral(quad);
    if !g.is_normalized() || (integral - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::UnnormalizedGain { integral });
    }
    let mut coeffs = vec![Complex64::new(0.0, 0.0); (order + 1) * (order + 1)];
    for (&y, &w) in quad.directions().iter().zip(quad.weights()) {
        let gw = g.eval(y) * w;
        if gw == 0.0 {
            continue;
        }
        let ys = spherical_harmonics_all(order, y)?;
        for (c, yv) in coeffs.iter_mut().zip(&ys) {
            *c += yv.conj() * gw;
        }
    }
    ShCoefficients::new(order, coeffs)
}

/// Smallest series order accepted by [`rho_anisotropic`] for this separation.
pub fn required_series_order(distance: f64, band: &BandSpec, k: &PhysicalConstants) -> usize {
    (band.omega_max() * distance / k.c).ceil() as usize + 10
}

/// Band-averaged plane-wave series for an anisotropic field, truncated at the
/// order of `beta`.
pub fn rho_anisotropic(
    separation: Vec3,
    band: &BandSpec,
    beta: &ShCoefficients,
    k: &PhysicalConstants,
    tol: f64,
) -> Result<Complex64> {
    if !separation.is_finite() {
        return Err(Error::SingularInput("non-finite separation".into()));
    }
    let d = separation.norm();
    let dir = match separation.normalized() {
        Some(u) if d > 0.0 => u,
        _ => return Ok(beta.get(0, 0)? * (4.0 * PI).sqrt()),
    };
    let order = beta.order();
    let required = required_series_order(d, band, k);
    if order < required {
        return Err(Error::TruncationTooSmall { order, required });
    }

    // c_n = i^n sum_m Y_nm(dir) beta_nm
    let ys = spherical_harmonics_all(order, dir)?;
    let mut cn = Vec::with_capacity(order + 1);
    let mut i_pow = Complex64::new(1.0, 0.0);
    for n in 0..=order {
        let base = n * n + n;
        let s: Complex64 = (0..=2 * n)
            .map(|j| ys[base - n + j] * beta.as_slice()[base - n + j])
            .sum();
        cn.push(i_pow * s * (4.0 * PI));
        i_pow *= Complex64::new(0.0, 1.0);
    }

    // The last retained term must already be negligible over the whole band.
    let x_max = band.omega_max() * d / k.c;
    let j_last = spherical_bessel_all(order, x_max)?[order];
    let last = cn[order].norm() * j_last.abs();
    if last > tol {
        return Err(Error::TruncationTooSmall {
            order,
            required: order + 1,
        });
    }

    let scale = d / k.c;
    let dw = band.delta_omega();
    let integrand = |w: f64| -> Complex64 {
        let j = spherical_bessel_all(order, w * scale).expect("order already validated");
        j.iter().zip(&cn).map(|(jn, c)| c * jn).sum()
    };
    let integral = adaptive_simpson(integrand, band.omega_min(), band.omega_max(), tol * dw)?;
    Ok(integral / dw)
}

/// Direct evaluation of the band-averaged correlation as a sphere integral of
/// `G(y) exp(i omega s . y / c)`; the band average is done analytically.
pub fn rho_from_gain(
    separation: Vec3,
    band: &BandSpec,
    g: &DirectionalGain,
    k: &PhysicalConstants,
    quad: &SphereQuadrature,
) -> Complex64 {
    let half = 0.5 * band.delta_omega();
    quad.integrate(|y| {
        let tau = separation.dot(y) / k.c;
        Complex64::from_polar(g.eval(y) * sinc(half * tau), band.omega_c() * tau)
    })
}
