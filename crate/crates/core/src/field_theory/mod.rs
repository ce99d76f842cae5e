//! Spatial correlation of band-limited signals in diffuse and anisotropic
//! fields.
//!
//! Correlation between two points separated by `d` meters is the band
//! average, over `omega in [omega_min, omega_max]`, of the direction average
//! of `exp(i omega (x_q - x_p) . y / c)` weighted by the directional power
//! gain. For an isotropic gain this reduces to the band average of
//! `sinc(omega d / c)`, which [`rho_wideband_quadrature`] integrates
//! numerically and [`rho_wideband_closed`] approximates by a product of two
//! sinc factors.

mod gain;
pub mod quadrature;
pub mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gain::{
    beta_coefficients, required_series_order, rho_anisotropic, rho_from_gain, DirectionalGain,
    GainPattern, ShCoefficients,
};
pub use quadrature::{adaptive_simpson, SphereQuadrature};
pub use special::{
    spherical_bessel_all, spherical_bessel_j, spherical_harmonic, spherical_harmonics_all,
};

/// Frequency band in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    omega_min: f64,
    omega_max: f64,
}

impl BandSpec {
    pub fn new(omega_min: f64, omega_max: f64) -> Result<Self> {
        if !(omega_min >= 0.0 && omega_min < omega_max && omega_max.is_finite()) {
            return Err(Error::InvalidBand(format!(
                "need 0 <= omega_min < omega_max, got [{omega_min}, {omega_max}] rad/s"
            )));
        }
        Ok(Self {
            omega_min,
            omega_max,
        })
    }

    pub fn from_hz(f_min: f64, f_max: f64) -> Result<Self> {
        Self::new(
            2.0 * std::f64::consts::PI * f_min,
            2.0 * std::f64::consts::PI * f_max,
        )
    }

    /// Band of width `delta_omega` centered on `omega_c`.
    pub fn centered(omega_c: f64, delta_omega: f64) -> Result<Self> {
        Self::new(omega_c - 0.5 * delta_omega, omega_c + 0.5 * delta_omega)
    }

    pub fn omega_min(&self) -> f64 {
        self.omega_min
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    pub fn delta_omega(&self) -> f64 {
        self.omega_max - self.omega_min
    }

    pub fn omega_c(&self) -> f64 {
        0.5 * (self.omega_min + self.omega_max)
    }

    pub fn f_min_hz(&self) -> f64 {
        self.omega_min / (2.0 * std::f64::consts::PI)
    }

    pub fn f_max_hz(&self) -> f64 {
        self.omega_max / (2.0 * std::f64::consts::PI)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Speed of sound, m/s.
    pub c: f64,
}

impl PhysicalConstants {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "speed of sound must be positive, got {c}"
            )));
        }
        Ok(Self { c })
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { c: 343.0 }
    }
}

/// Unnormalized `sin(x) / x`, equal to 1 at 0.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 * (1.0 - x2 / 20.0)
    } else {
        x.sin() / x
    }
}

/// Diffuse-field correlation of a single frequency: `sinc(omega d / c)`.
pub fn rho_narrowband(d: f64, omega: f64, k: &PhysicalConstants) -> f64 {
    sinc(omega * d / k.c)
}

/// Closed-form wideband approximation `sinc(dw d / 2c) * sinc(wc d / c)`.
pub fn rho_wideband_closed(d: f64, band: &BandSpec, k: &PhysicalConstants) -> f64 {
    sinc(band.delta_omega() * d / (2.0 * k.c)) * sinc(band.omega_c() * d / k.c)
}

/// Band average of `sinc(omega d / c)` by adaptive Simpson, to absolute
/// tolerance `tol` on the averaged value.
pub fn rho_wideband_quadrature(
    d: f64,
    band: &BandSpec,
    k: &PhysicalConstants,
    tol: f64,
) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::SingularInput(format!(
            "distance must be non-negative, got {d}"
        )));
    }
    if d == 0.0 {
        return Ok(1.0);
    }
    let scale = d / k.c;
    let dw = band.delta_omega();
    let integral = adaptive_simpson(
        |w: f64| sinc(w * scale),
        band.omega_min(),
        band.omega_max(),
        tol * dw,
    )?;
    Ok(integral / dw)
}

/// The correction the closed form drops:
/// `-2 sinc(dw d / 2c) cos(a) / a^2 * sin^2(dw d / 4c)` with `a = wc d / c`.
pub fn second_order_term(d: f64, band: &BandSpec, k: &PhysicalConstants) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::SingularInput(format!(
            "second-order term needs d > 0 (got {d}); use the closed form at d = 0"
        )));
    }
    let a = band.omega_c() * d / k.c;
    let half_band = band.delta_omega() * d / (2.0 * k.c);
    let s = (band.delta_omega() * d / (4.0 * k.c)).sin();
    Ok(-2.0 * sinc(half_band) * a.cos() / (a * a) * s * s)
}

/// Closed form plus [`second_order_term`].
pub fn rho_second_order(d: f64, band: &BandSpec, k: &PhysicalConstants) -> Result<f64> {
    Ok(rho_wideband_closed(d, band, k) + second_order_term(d, band, k)?)
}
