//! Synthetic multichannel captures of finite loudspeaker arrays and of an
//! ideal diffuse field.
//!
//! Every speaker emits independent band-limited Gaussian noise. A speaker at
//! position `s` contributes a plane wave propagating along `y = -s / |s|`,
//! so a mic at `x` receives the drive delayed by `x . y / c`. Delays are
//! applied as phase ramps on the FFT of each trajectory segment, which makes
//! them exact for any fractional value. Segment boundaries are hard cuts.

mod oracle;
mod ramp;
pub mod wav;

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use realfft::{RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field_theory::{BandSpec, PhysicalConstants};
use crate::geometry::{ArrayGeometry, LoudspeakerLayout, Pose, Trajectory, Vec3};

use ramp::{Ramp, SplitSpectrum};

pub use oracle::{fibonacci_directions, render_diffuse_oracle};

pub const DEFAULT_SAMPLE_RATE: f64 = 16_000.0;
pub const DEFAULT_DURATION: f64 = 30.0;

/// Spectral shape of the speaker drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseColor {
    #[default]
    White,
    /// Power density proportional to `1 / f`.
    Pink,
}

impl std::str::FromStr for NoiseColor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseColor::White),
            "pink" => Ok(NoiseColor::Pink),
            other => Err(Error::InvalidConfig(format!(
                "unknown noise color `{other}`"
            ))),
        }
    }
}

/// Descriptive metadata carried alongside rendered or loaded audio.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_hz: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    sample_rate: f64,
    channels: Vec<Vec<f64>>,
    pub meta: RecordingMeta,
}

impl Recording {
    pub fn new(sample_rate: f64, channels: Vec<Vec<f64>>, meta: RecordingMeta) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if channels.is_empty() {
            return Err(Error::InvalidConfig("recording has no channels".into()));
        }
        let len = channels[0].len();
        if let Some(c) = channels.iter().find(|c| c.len() != len) {
            return Err(Error::InvalidConfig(format!(
                "channel lengths differ: {} vs {len}",
                c.len()
            )));
        }
        Ok(Self {
            sample_rate,
            channels,
            meta,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Hex SHA-256 over the sample rate and little-endian samples.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.sample_rate.to_le_bytes());
        h.update((self.channels.len() as u64).to_le_bytes());
        for c in &self.channels {
            for v in c {
                h.update(v.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Magnitude response in dB, linearly interpolated in frequency and held
/// constant beyond its end points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCurve {
    freqs_hz: Vec<f64>,
    gains_db: Vec<f64>,
}

impl GainCurve {
    pub fn new(freqs_hz: Vec<f64>, gains_db: Vec<f64>) -> Result<Self> {
        if freqs_hz.is_empty() || freqs_hz.len() != gains_db.len() {
            return Err(Error::InvalidConfig(format!(
                "gain curve needs matching non-empty grids, got {} and {}",
                freqs_hz.len(),
                gains_db.len()
            )));
        }
        if freqs_hz.windows(2).any(|w| !(w[1] > w[0]))
            || freqs_hz.iter().chain(&gains_db).any(|v| !v.is_finite())
        {
            return Err(Error::InvalidConfig(
                "gain curve grid must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self { freqs_hz, gains_db })
    }

    pub fn flat(gain_db: f64) -> Self {
        Self {
            freqs_hz: vec![0.0],
            gains_db: vec![gain_db],
        }
    }

    pub fn freqs_hz(&self) -> &[f64] {
        &self.freqs_hz
    }

    pub fn gains_db(&self) -> &[f64] {
        &self.gains_db
    }

    pub fn gain_db(&self, f: f64) -> f64 {
        interp_clamped(&self.freqs_hz, &self.gains_db, f)
    }
}

pub(crate) fn interp_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&v| v <= x);
    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptureConfig {
    pub band: BandSpec,
    pub duration: f64,
    pub sample_rate: f64,
    pub speaker_count: usize,
    /// `None` renders the array at the origin for the whole capture.
    pub trajectory: Option<Trajectory>,
    /// One curve per mic, applied after propagation.
    pub gain_curves: Option<Vec<GainCurve>>,
    pub color: NoiseColor,
    pub constants: PhysicalConstants,
    pub seed: u64,
}

impl CaptureConfig {
    pub fn new(band: BandSpec, speaker_count: usize, seed: u64) -> Self {
        Self {
            band,
            duration: DEFAULT_DURATION,
            sample_rate: DEFAULT_SAMPLE_RATE,
            speaker_count,
            trajectory: None,
            gain_curves: None,
            color: NoiseColor::White,
            constants: PhysicalConstants::default(),
            seed,
        }
    }

    pub fn num_samples(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if self.speaker_count == 0 {
            return Err(Error::InvalidConfig(
                "speaker count must be at least 1".into(),
            ));
        }
        check_aliasing(&self.band, self.sample_rate)?;
        if self.num_samples() < 2 {
            return Err(Error::InvalidConfig(
                "capture shorter than two samples".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn check_aliasing(band: &BandSpec, fs: f64) -> Result<()> {
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "sample rate must be positive, got {fs}"
        )));
    }
    if !(fs > 2.0 * band.f_max_hz()) {
        return Err(Error::Aliasing {
            fs,
            f_max: band.f_max_hz(),
        });
    }
    Ok(())
}

/// Hex SHA-256 of the trajectory's JSON form.
pub fn trajectory_digest(t: &Trajectory) -> String {
    let json = serde_json::to_vec(t).expect("trajectory serializes");
    hex(&Sha256::digest(json))
}

/// Half-spectrum bin range `[lo, hi]` covering `[f_min, f_max]` for an
/// `n`-point transform.
pub(crate) fn band_bins(band: &BandSpec, n: usize, fs: f64) -> (usize, usize) {
    let df = fs / n as f64;
    let lo = (band.f_min_hz() / df).ceil().max(0.0) as usize;
    let hi = ((band.f_max_hz() / df).floor() as usize).min(n / 2);
    (lo, hi)
}

/// Independent complex Gaussian half spectrum for an `n`-point real signal,
/// nonzero only in band and scaled so the time signal has expected mean
/// power `power`.
pub(crate) fn noise_spectrum(
    rng: &mut ChaCha8Rng,
    band: &BandSpec,
    n: usize,
    fs: f64,
    color: NoiseColor,
    power: f64,
) -> Vec<Complex64> {
    let (lo, hi) = band_bins(band, n, fs);
    let mut spec = vec![Complex64::new(0.0, 0.0); n / 2 + 1];
    if lo > hi {
        return spec;
    }
    let df = fs / n as f64;
    let shape = |k: usize| -> f64 {
        match color {
            NoiseColor::White => 1.0,
            NoiseColor::Pink => 1.0 / (k as f64 * df).max(df),
        }
    };
    // DC and Nyquist hold one real Gaussian; other bins hold two and appear
    // twice in the full spectrum.
    let real_only = |k: usize| k == 0 || (n.is_multiple_of(2) && k == n / 2);
    let total: f64 = (lo..=hi)
        .map(|k| {
            if real_only(k) {
                shape(k)
            } else {
                4.0 * shape(k)
            }
        })
        .sum();
    // Mean power of the time signal is sum_k E|X_k|^2 / n^2 over all bins.
    let base = n as f64 * (power / total).sqrt();
    for (k, out) in spec.iter_mut().enumerate().take(hi + 1).skip(lo) {
        let a = base * shape(k).sqrt();
        let re: f64 = StandardNormal.sample(rng);
        *out = if real_only(k) {
            Complex64::new(a * re, 0.0)
        } else {
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(a * re, a * im)
        };
    }
    spec
}

fn drive_rng(seed: u64, speaker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(speaker as u64);
    rng
}

pub(crate) fn inverse_real(
    planner: &mut RealFftPlanner<f64>,
    spec: &mut [Complex64],
    n: usize,
) -> Vec<f64> {
    let ifft = planner.plan_fft_inverse(n);
    let mut out = vec![0.0; n];
    spec[0].im = 0.0;
    if n.is_multiple_of(2) {
        spec[n / 2].im = 0.0;
    }
    ifft.process(spec, &mut out)
        .expect("buffer sizes match plan");
    let s = 1.0 / n as f64;
    for v in &mut out {
        *v *= s;
    }
    out
}

pub(crate) fn forward_real(fft: &Arc<dyn RealToComplex<f64>>, x: &[f64]) -> Vec<Complex64> {
    let mut input = x.to_vec();
    let mut spec = fft.make_output_vec();
    fft.process(&mut input, &mut spec)
        .expect("buffer sizes match plan");
    spec
}

/// Independent band-limited white noise drives with unit expected power.
pub fn synth_speaker_drives(
    count: usize,
    band: &BandSpec,
    duration: f64,
    fs: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    synth_colored_drives(count, band, duration, fs, seed, NoiseColor::White)
}

/// Like [`synth_speaker_drives`] with a selectable spectral shape.
pub fn synth_colored_drives(
    count: usize,
    band: &BandSpec,
    duration: f64,
    fs: f64,
    seed: u64,
    color: NoiseColor,
) -> Result<Vec<Vec<f64>>> {
    check_aliasing(band, fs)?;
    if count == 0 {
        return Err(Error::InvalidConfig(
            "speaker count must be at least 1".into(),
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
            "drive shorter than two samples".into(),
        ));
    }
    let mut planner = RealFftPlanner::new();
    Ok((0..count)
        .map(|s| {
            let mut rng = drive_rng(seed, s);
            let mut spec = noise_spectrum(&mut rng, band, n, fs, color, 1.0);
            inverse_real(&mut planner, &mut spec, n)
        })
        .collect())
}

fn apply_gain_curves(channels: &mut [Vec<f64>], curves: &[GainCurve], fs: f64) -> Result<()> {
    if curves.len() != channels.len() {
        return Err(Error::ChannelMismatch {
            expected: channels.len(),
            actual: curves.len(),
        });
    }
    let n = channels[0].len();
    let mut planner = RealFftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let df = fs / n as f64;
    for (ch, curve) in channels.iter_mut().zip(curves) {
        let mut spec = forward_real(&fft, ch);
        for (k, v) in spec.iter_mut().enumerate() {
            *v *= 10f64.powf(curve.gain_db(k as f64 * df) / 20.0);
        }
        *ch = inverse_real(&mut planner, &mut spec, n);
    }
    Ok(())
}

/// Renders `cfg.speaker_count` speakers of `layout` onto `geom`.
///
/// With a trajectory the array is re-posed for each segment and the shell
/// containment is checked first.
pub fn render_capture(
    layout: &LoudspeakerLayout,
    geom: &ArrayGeometry,
    cfg: &CaptureConfig,
) -> Result<Recording> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    if geom.extent() > layout.radius() / 4.0 {
        warnings.push(format!(
            "array extent {:.3} m exceeds a quarter of the shell radius {:.3} m; far-field model is approximate",
            geom.extent(),
            layout.radius()
        ));
    }
    let trajectory = match &cfg.trajectory {
        Some(t) => {
            t.check_containment(geom, layout.radius())?;
            t.clone()
        }
        None => Trajectory::fixed(Pose::IDENTITY, cfg.duration)?,
    };
    let mut rec = render_positions(layout, geom.mic_positions(), &trajectory, cfg)?;
    rec.meta.warnings = warnings;
    if cfg.trajectory.is_some() {
        rec.meta.trajectory_digest = Some(trajectory_digest(&trajectory));
    }
    Ok(rec)
}

/// Renderer behind [`render_capture`] taking raw array-local mic positions,
/// which may coincide.
pub fn render_positions(
    layout: &LoudspeakerLayout,
    mics: &[Vec3],
    trajectory: &Trajectory,
    cfg: &CaptureConfig,
) -> Result<Recording> {
    cfg.validate()?;
    if mics.is_empty() {
        return Err(Error::InvalidGeometry("no microphones".into()));
    }
    let speakers = layout.subset(cfg.speaker_count)?;
    let dirs = speakers.propagation_directions();
    let fs = cfg.sample_rate;
    let n = cfg.num_samples();
    let bounds = segment_bounds(trajectory, n, fs)?;
    let drives =
        synth_colored_drives(dirs.len(), &cfg.band, cfg.duration, fs, cfg.seed, cfg.color)?;

    let mut out = vec![vec![0.0; n]; mics.len()];
    let mut planner = RealFftPlanner::<f64>::new();
    for &(a, b, pose) in &bounds {
        let len = b - a;
        if len == 0 {
            continue;
        }
        let fft = planner.plan_fft_forward(len);
        let spectra: Vec<SplitSpectrum> = drives
            .iter()
            .map(|d| SplitSpectrum::from_complex(&forward_real(&fft, &d[a..b])))
            .collect();
        // Phase advance per bin is omega_1 * tau with omega_1 = 2 pi fs / len.
        let w1 = 2.0 * std::f64::consts::PI * fs / len as f64;
        for (m, x) in mics.iter().enumerate() {
            let pos = pose.transform(*x);
            let mut acc = SplitSpectrum::zeros(len / 2 + 1);
            for (spec, y) in spectra.iter().zip(&dirs) {
                let tau = pos.dot(*y) / cfg.constants.c;
                Ramp::new(w1 * tau).accumulate(&mut acc, spec, 0);
            }
            let time = inverse_real(&mut planner, &mut acc.to_complex(), len);
            out[m][a..b].copy_from_slice(&time);
        }
    }
    if let Some(curves) = &cfg.gain_curves {
        apply_gain_curves(&mut out, curves, fs)?;
    }
    let meta = RecordingMeta {
        source: "render_capture".into(),
        band_hz: Some([cfg.band.f_min_hz(), cfg.band.f_max_hz()]),
        seed: Some(cfg.seed),
        speaker_count: Some(dirs.len()),
        ..Default::default()
    };
    Recording::new(fs, out, meta)
}

/// Sample ranges and poses to render, from rounded cumulative durations.
/// Consecutive segments with the same pose are merged into one range.
fn segment_bounds(t: &Trajectory, n: usize, fs: f64) -> Result<Vec<(usize, usize, Pose)>> {
    let total = t.total_duration();
    if ((total * fs).round() as i64 - n as i64).abs() > 1 {
        return Err(Error::InvalidConfig(format!(
            "trajectory lasts {total} s but the capture is {} s",
            n as f64 / fs
        )));
    }
    let mut cum = 0.0;
    let mut out: Vec<(usize, usize, Pose)> = Vec::new();
    let last = t.segments().len() - 1;
    for (i, s) in t.segments().iter().enumerate() {
        cum += s.duration;
        let start = out.last().map_or(0, |r| r.1);
        let end = if i == last {
            n
        } else {
            ((cum * fs).round() as usize).clamp(start, n)
        };
        match out.last_mut() {
            Some(r) if r.2 == s.pose => r.1 = end,
            _ => out.push((start, end, s.pose)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
