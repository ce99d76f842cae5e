use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use realfft::RealFftPlanner;

use super::ramp::{Ramp, SplitSpectrum};
use super::{
    band_bins, check_aliasing, inverse_real, noise_spectrum, NoiseColor, Recording, RecordingMeta,
};
use crate::error::{Error, Result};
use crate::field_theory::{BandSpec, PhysicalConstants};
use crate::geometry::{ArrayGeometry, Rotation, Vec3};

/// Directions whose noise spectra are held in memory at once.
const DIRECTION_BLOCK: usize = 64;
/// Bins accumulated per pass, sized to keep accumulators cache resident.
const BIN_TILE: usize = 256;

/// `n` quasi-uniform unit vectors on a golden-angle spiral.
pub fn fibonacci_directions(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Superposition of `num_directions` independent band-limited plane waves
/// from a randomly rotated spiral of directions, each carrying
/// `1 / num_directions` of the unit total power.
pub fn render_diffuse_oracle(
    geom: &ArrayGeometry,
    band: &BandSpec,
    num_directions: usize,
    duration: f64,
    fs: f64,
    seed: u64,
) -> Result<Recording> {
    check_aliasing(band, fs)?;
    if num_directions == 0 {
        return Err(Error::InvalidConfig(
            "oracle needs at least one direction".into(),
        ));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "duration must be positive, got {duration}"
        )));
    }
    let n = (duration * fs).round() as usize;
    if n < 2 {
        return Err(Error::InvalidConfig(
            "capture shorter than two samples".into(),
        ));
    }
    let c = PhysicalConstants::default().c;
    let (lo, hi) = band_bins(band, n, fs);
    let width = if hi >= lo { hi - lo + 1 } else { 0 };

    let mut rot_rng = ChaCha8Rng::seed_from_u64(seed);
    rot_rng.set_stream(u64::MAX);
    let rotation = Rotation::random(&mut rot_rng);
    let dirs: Vec<Vec3> = fibonacci_directions(num_directions)
        .into_iter()
        .map(|d| rotation.apply(d))
        .collect();

    let mics = geom.mic_positions();
    let w1 = 2.0 * std::f64::consts::PI * fs / n as f64;
    let power = 1.0 / num_directions as f64;
    let mut acc = vec![SplitSpectrum::zeros(width); mics.len()];
    for (b, block) in dirs.chunks(DIRECTION_BLOCK).enumerate() {
        let noise: Vec<SplitSpectrum> = (0..block.len())
            .into_par_iter()
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((b * DIRECTION_BLOCK + j) as u64);
                let s = noise_spectrum(&mut rng, band, n, fs, NoiseColor::White, power);
                SplitSpectrum::from_complex(&s[lo..lo + width])
            })
            .collect();
        let ramps: Vec<Vec<Ramp>> = mics
            .iter()
            .map(|x| {
                block
                    .iter()
                    .map(|y| Ramp::new(w1 * x.dot(*y) / c))
                    .collect()
            })
            .collect();
        for t0 in (0..width).step_by(BIN_TILE) {
            let t1 = (t0 + BIN_TILE).min(width);
            acc.par_iter_mut().zip(&ramps).for_each(|(a, ramps)| {
                for (spec, ramp) in noise.iter().zip(ramps) {
                    ramp.accumulate_range(a, spec, lo, t0, t1);
                }
            });
        }
    }

    let mut planner = RealFftPlanner::<f64>::new();
    let channels = acc
        .into_iter()
        .map(|a| {
            let mut spec = vec![Complex64::new(0.0, 0.0); n / 2 + 1];
            spec[lo..lo + width].copy_from_slice(&a.to_complex());
            inverse_real(&mut planner, &mut spec, n)
        })
        .collect();
    let meta = RecordingMeta {
        source: "render_diffuse_oracle".into(),
        band_hz: Some([band.f_min_hz(), band.f_max_hz()]),
        seed: Some(seed),
        extra: [("num_directions".to_string(), num_directions.to_string())].into(),
        ..Default::default()
    };
    Recording::new(fs, channels, meta)
}
