//! Adaptive Simpson integration on intervals and product Gauss rules on the
//! unit sphere.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Maximum bisection depth of [`adaptive_simpson`].
pub const MAX_SIMPSON_DEPTH: u32 = 20;

/// Number of equal panels the interval is split into before adapting, so an
/// oscillatory integrand cannot fool the first five-point estimate.
const INITIAL_PANELS: usize = 8;

/// Values that can be integrated: closed under addition and real scaling.
pub trait Integrand:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn magnitude(self) -> f64;
    fn zero() -> Self;
}

impl Integrand for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
    fn zero() -> Self {
        0.0
    }
}

impl Integrand for Complex64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Fails with [`Error::Quadrature`] if some subinterval still misses its share
/// of the tolerance after [`MAX_SIMPSON_DEPTH`] bisections.
pub fn adaptive_simpson<T, F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<T>
where
    T: Integrand,
    F: FnMut(f64) -> T,
{
    if !(tol > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Quadrature {
            a,
            b,
            tol,
            max_depth: MAX_SIMPSON_DEPTH,
        });
    }
    if a == b {
        return Ok(T::zero());
    }
    let h = (b - a) / INITIAL_PANELS as f64;
    let panel_tol = tol / INITIAL_PANELS as f64;
    let mut total = T::zero();
    let mut converged = true;
    let mut fa = f(a);
    for i in 0..INITIAL_PANELS {
        let lo = a + h * i as f64;
        let hi = if i + 1 == INITIAL_PANELS { b } else { lo + h };
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        let fb = f(hi);
        let whole = (fa + fm * 4.0 + fb) * ((hi - lo) / 6.0);
        total = total
            + simpson_step(
                &mut f,
                lo,
                hi,
                fa,
                fm,
                fb,
                whole,
                panel_tol,
                MAX_SIMPSON_DEPTH,
                &mut converged,
            );
        fa = fb;
    }
    if converged {
        Ok(total)
    } else {
        Err(Error::Quadrature {
            a,
            b,
            tol,
            max_depth: MAX_SIMPSON_DEPTH,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<T, F>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: f64,
    depth: u32,
    converged: &mut bool,
) -> T
where
    T: Integrand,
    F: FnMut(f64) -> T,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (fa + flm * 4.0 + fm) * ((m - a) / 6.0);
    let right = (fm + frm * 4.0 + fb) * ((b - m) / 6.0);
    let delta = left + right - whole;
    if delta.magnitude() <= 15.0 * tol {
        return left + right + delta * (1.0 / 15.0);
    }
    if depth == 0 {
        *converged = false;
        return left + right + delta * (1.0 / 15.0);
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, converged)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, converged)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, exact for polynomials of
/// degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Product rule on the unit sphere: Gauss-Legendre in `cos(theta)` times a
/// uniform azimuth grid. Weights sum to `4 pi`.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    directions: Vec<Vec3>,
    weights: Vec<f64>,
}

impl SphereQuadrature {
    /// Exact for spherical harmonics of degree below `2 n_theta` and `|m| < n_phi`.
    pub fn gauss_product(n_theta: usize, n_phi: usize) -> Self {
        let (nodes, gw) = gauss_legendre(n_theta.max(1));
        let n_phi = n_phi.max(1);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut directions = Vec::with_capacity(nodes.len() * n_phi);
        let mut weights = Vec::with_capacity(nodes.len() * n_phi);
        for (&z, &w) in nodes.iter().zip(&gw) {
            let s = (1.0 - z * z).max(0.0).sqrt();
            for j in 0..n_phi {
                let (sp, cp) = (dphi * j as f64).sin_cos();
                directions.push(Vec3::new(s * cp, s * sp, z));
                weights.push(w * dphi);
            }
        }
        Self {
            directions,
            weights,
        }
    }

    /// Smallest product rule integrating every band-limited function of
    /// total degree `degree` exactly.
    pub fn exact_for_degree(degree: usize) -> Self {
        Self::gauss_product(degree / 2 + 1, degree + 1)
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate<T: Integrand>(&self, mut f: impl FnMut(Vec3) -> T) -> T {
        self.directions
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&d, &w)| acc + f(d) * w)
    }
}
