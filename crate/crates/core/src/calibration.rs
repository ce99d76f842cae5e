//! Diffuse-field magnitude calibration.
//!
//! Levels are power spectral densities in dB (`10 log10 PSD`), so a channel
//! whose amplitude gain is `g` dB reads `g` dB higher. Offsets are each
//! channel's level minus the across-channel mean level. Filters are
//! linear-phase FIRs of odd length whose group delay is removed on
//! application.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use realfft::{RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{interp_clamped, GainCurve, Recording, RecordingMeta};

pub const MIN_DURATION: f64 = 10.0;
pub const DEFAULT_SEGMENT_LEN: usize = 4096;
pub const DEFAULT_OVERLAP: f64 = 0.5;
pub const DEFAULT_BAND_HZ: [f64; 2] = [200.0, 6000.0];
/// Octave fraction of the offset smoothing.
pub const DEFAULT_SMOOTHING: f64 = 1.0 / 6.0;
pub const DEFAULT_FILTER_LEN: usize = 1025;
/// Largest in-band deviation of a designed filter from its target.
pub const DESIGN_TOLERANCE_DB: f64 = 0.1;
/// Largest out-of-band deviation of a designed filter from unity.
pub const OUT_OF_BAND_LIMIT_DB: f64 = 3.0;
/// Frequency ratio (a quarter octave) past each band edge over which filters
/// keep the edge correction before returning to unity.
const HOLD_RATIO: f64 = 1.189_207_115_002_721;
/// Bins dropped at each band edge, the half-width of the Hann main lobe.
const EDGE_GUARD_BINS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsdConfig {
    pub segment_len: usize,
    pub overlap: f64,
    pub band_hz: [f64; 2],
}

impl Default for PsdConfig {
    fn default() -> Self {
        Self {
            segment_len: DEFAULT_SEGMENT_LEN,
            overlap: DEFAULT_OVERLAP,
            band_hz: DEFAULT_BAND_HZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeSpectra {
    pub freq_hz: Vec<f64>,
    /// `db[channel][bin]`.
    pub db: Vec<Vec<f64>>,
    pub sample_rate: f64,
    pub segment_len: usize,
    pub overlap: f64,
    pub window: String,
    pub averages: usize,
}

impl MagnitudeSpectra {
    pub fn num_channels(&self) -> usize {
        self.db.len()
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

fn welch(
    x: &[f64],
    fft: &Arc<dyn RealToComplex<f64>>,
    window: &[f64],
    hop: usize,
) -> (Vec<f64>, usize) {
    let len = window.len();
    let mut psd = vec![0.0; len / 2 + 1];
    let mut buf = fft.make_input_vec();
    let mut spec = fft.make_output_vec();
    let mut count = 0;
    let mut start = 0;
    while start + len <= x.len() {
        for ((b, &v), &w) in buf.iter_mut().zip(&x[start..start + len]).zip(window) {
            *b = v * w;
        }
        fft.process(&mut buf, &mut spec)
            .expect("buffer sizes match plan");
        for (p, s) in psd.iter_mut().zip(&spec) {
            *p += s.norm_sqr();
        }
        count += 1;
        start += hop;
    }
    (psd, count)
}

/// Averaged-periodogram level of every channel on the in-band bin grid.
pub fn estimate_magnitude_response(rec: &Recording, cfg: &PsdConfig) -> Result<MagnitudeSpectra> {
    let fs = rec.sample_rate();
    if rec.duration() < MIN_DURATION {
        return Err(Error::TooShort {
            actual: rec.duration(),
            required: MIN_DURATION,
        });
    }
    let [lo, hi] = cfg.band_hz;
    if !(lo >= 0.0 && lo < hi) {
        return Err(Error::InvalidBand(format!(
            "need 0 <= lo < hi, got [{lo}, {hi}] Hz"
        )));
    }
    if hi >= fs / 2.0 {
        return Err(Error::Aliasing { fs, f_max: hi });
    }
    if cfg.segment_len < 16 || !(0.0..1.0).contains(&cfg.overlap) {
        return Err(Error::InvalidConfig(format!(
            "segment length {} and overlap {} are not usable",
            cfg.segment_len, cfg.overlap
        )));
    }
    let len = cfg.segment_len;
    let df = fs / len as f64;
    let first = (lo / df).ceil() as usize + EDGE_GUARD_BINS;
    let last = ((hi / df).floor() as usize).saturating_sub(EDGE_GUARD_BINS);
    if first > last {
        return Err(Error::InvalidBand(format!(
            "band [{lo}, {hi}] Hz holds no analysis bins"
        )));
    }
    let window = hann(len);
    let hop = ((len as f64 * (1.0 - cfg.overlap)).round() as usize).max(1);
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(len);
    // One-sided density: doubled energy over sample rate times window power.
    let scale = 2.0 / (fs * window.iter().map(|w| w * w).sum::<f64>());
    let results: Vec<(Vec<f64>, usize)> = rec
        .channels()
        .par_iter()
        .enumerate()
        .map(|(c, x)| {
            let (psd, count) = welch(x, &fft, &window, hop);
            let band = &psd[first..=last];
            if band
                .iter()
                .any(|&p| !(p * scale / count as f64 > crate::estimator::SILENCE_THRESHOLD))
            {
                return Err(Error::DegenerateInput(format!(
                    "channel {c} is silent in the analysis band"
                )));
            }
            Ok((
                band.iter()
                    .map(|p| 10.0 * (p * scale / count as f64).log10())
                    .collect(),
                count,
            ))
        })
        .collect::<Result<_>>()?;
    let averages = results.first().map_or(0, |r| r.1);
    Ok(MagnitudeSpectra {
        freq_hz: (first..=last).map(|k| k as f64 * df).collect(),
        db: results.into_iter().map(|r| r.0).collect(),
        sample_rate: fs,
        segment_len: len,
        overlap: cfg.overlap,
        window: "hann".into(),
        averages,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCalibration {
    pub offset_db: Vec<f64>,
    /// Empty until filters are designed.
    #[serde(default)]
    pub filter_taps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub freq_hz: Vec<f64>,
    pub channels: Vec<ChannelCalibration>,
    /// Spread of the smoothed offsets at 1 kHz, when inside the band.
    pub trim_stat_1khz_db: Option<f64>,
    pub sample_rate: f64,
    pub smoothing_octaves: Option<f64>,
    pub filter_delay_samples: Option<usize>,
}

impl CalibrationProfile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Offsets after fractional-octave smoothing, per channel.
    pub fn smoothed_offsets(&self, fraction: f64) -> Vec<Vec<f64>> {
        self.channels
            .iter()
            .map(|c| smooth_fractional_octave(&self.freq_hz, &c.offset_db, fraction))
            .collect()
    }

    /// `freq_hz` followed by one offset column per channel.
    pub fn offsets_csv(&self) -> String {
        let mut s = String::from("freq_hz");
        for i in 0..self.channels.len() {
            s.push_str(&format!(",ch{i}_offset_db"));
        }
        s.push('\n');
        for (k, f) in self.freq_hz.iter().enumerate() {
            s.push_str(&format!("{f}"));
            for c in &self.channels {
                s.push_str(&format!(",{}", c.offset_db[k]));
            }
            s.push('\n');
        }
        s
    }
}

/// Each channel's level minus the across-channel mean, bin by bin.
pub fn relative_offsets(spec: &MagnitudeSpectra) -> Result<CalibrationProfile> {
    let m = spec.num_channels();
    if m < 2 {
        return Err(Error::InvalidConfig(format!(
            "offsets need at least 2 channels, got {m}"
        )));
    }
    let mean: Vec<f64> = (0..spec.freq_hz.len())
        .map(|k| spec.db.iter().map(|c| c[k]).sum::<f64>() / m as f64)
        .collect();
    let channels = spec
        .db
        .iter()
        .map(|c| ChannelCalibration {
            offset_db: c.iter().zip(&mean).map(|(v, mu)| v - mu).collect(),
            filter_taps: Vec::new(),
        })
        .collect();
    let mut profile = CalibrationProfile {
        freq_hz: spec.freq_hz.clone(),
        channels,
        trim_stat_1khz_db: None,
        sample_rate: spec.sample_rate,
        smoothing_octaves: None,
        filter_delay_samples: None,
    };
    profile.trim_stat_1khz_db = trim_from_profile(&profile, 1000.0)
        .ok()
        .map(|t| t.spread_db);
    Ok(profile)
}

/// Local linear fit in log-frequency over a window `fraction` octaves wide.
/// Near the ends of the grid the window keeps its width and slides inward.
pub fn smooth_fractional_octave(freq_hz: &[f64], values: &[f64], fraction: f64) -> Vec<f64> {
    smooth_log_linear(freq_hz, values, fraction, 0.0)
}

/// As [`smooth_fractional_octave`], with the window never narrower than
/// `min_width_hz`.
fn smooth_log_linear(
    freq_hz: &[f64],
    values: &[f64],
    fraction: f64,
    min_width_hz: f64,
) -> Vec<f64> {
    let n = freq_hz.len();
    if n == 0 || fraction <= 0.0 {
        return values.to_vec();
    }
    let x: Vec<f64> = freq_hz.iter().map(|f| (f / freq_hz[0]).log2()).collect();
    // Prefix sums of 1, x, x^2, y, xy.
    let mut pre = vec![[0.0; 5]; n + 1];
    for i in 0..n {
        let (xi, yi) = (x[i], values[i]);
        let t = [1.0, xi, xi * xi, yi, xi * yi];
        for j in 0..5 {
            pre[i + 1][j] = pre[i][j] + t[j];
        }
    }
    let span = x[n - 1];
    (0..n)
        .map(|i| {
            let f = freq_hz[i];
            let width = if min_width_hz > 0.0 && min_width_hz < 2.0 * f {
                fraction.max(((f + 0.5 * min_width_hz) / (f - 0.5 * min_width_hz)).log2())
            } else if min_width_hz > 0.0 {
                span
            } else {
                fraction
            };
            let lo = (x[i] - 0.5 * width).clamp(0.0, (span - width).max(0.0));
            let hi = lo + width;
            let a = x.partition_point(|&v| v < lo);
            let b = x.partition_point(|&v| v <= hi);
            let s: Vec<f64> = (0..5).map(|j| pre[b][j] - pre[a][j]).collect();
            let (cnt, sx, sxx, sy, sxy) = (s[0], s[1], s[2], s[3], s[4]);
            let det = cnt * sxx - sx * sx;
            if cnt < 3.0 || det <= 1e-12 * cnt * sxx {
                return sy / cnt;
            }
            let slope = (cnt * sxy - sx * sy) / det;
            let icept = (sy - slope * sx) / cnt;
            icept + slope * x[i]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrimDrift {
    pub f0: f64,
    /// Max minus min of the channel deviations.
    pub spread_db: f64,
    pub deviations_db: Vec<f64>,
}

/// Across-channel spread of the smoothed offsets at `f0`.
pub fn trim_drift_at(spec: &MagnitudeSpectra, f0: f64) -> Result<TrimDrift> {
    trim_from_profile(&relative_offsets(spec)?, f0)
}

pub fn trim_from_profile(profile: &CalibrationProfile, f0: f64) -> Result<TrimDrift> {
    let f = &profile.freq_hz;
    if f.is_empty() || !(f0 >= f[0] && f0 <= f[f.len() - 1]) {
        return Err(Error::OutOfBand(f0));
    }
    let deviations_db: Vec<f64> = profile
        .smoothed_offsets(DEFAULT_SMOOTHING)
        .iter()
        .map(|o| interp_clamped(f, o, f0))
        .collect();
    let max = deviations_db
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let min = deviations_db.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(TrimDrift {
        f0,
        spread_db: max - min,
        deviations_db,
    })
}

fn raised_cosine(t: f64) -> f64 {
    0.5 - 0.5 * (std::f64::consts::PI * t.clamp(0.0, 1.0)).cos()
}

/// Target filter gain in dB at `f`: the negated smoothed offset in band and
/// for a quarter octave beyond it, then blended to 0 dB by one octave out.
fn target_db(freq_hz: &[f64], neg_offset: &[f64], f: f64) -> f64 {
    let (lo, hi) = (freq_hz[0], freq_hz[freq_hz.len() - 1]);
    let v = interp_clamped(freq_hz, neg_offset, f);
    let hold = HOLD_RATIO;
    if f < lo / hold {
        let edge = 0.5 * lo;
        v * raised_cosine((f - edge) / (lo / hold - edge))
    } else if f > hi * hold {
        let edge = 2.0 * hi;
        v * raised_cosine((edge - f) / (edge - hi * hold))
    } else {
        v
    }
}

/// Magnitude response in dB of real `taps` at frequency `f`.
pub fn fir_response_db(taps: &[f64], f: f64, fs: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * f / fs;
    let h: Complex64 = taps
        .iter()
        .enumerate()
        .map(|(k, &t)| Complex64::from_polar(t, -w * k as f64))
        .sum();
    20.0 * h.norm().log10()
}

/// Linear-phase inverse filters by frequency sampling of the smoothed,
/// negated offsets, Hann windowed to `filter_len` taps.
pub fn design_calibration_filters(
    profile: &CalibrationProfile,
    smoothing: f64,
    filter_len: usize,
) -> Result<CalibrationProfile> {
    if filter_len.is_multiple_of(2) || filter_len < 3 {
        return Err(Error::FilterDesign(format!(
            "filter length must be odd and at least 3, got {filter_len}"
        )));
    }
    let freqs = &profile.freq_hz;
    if freqs.len() < 2 {
        return Err(Error::FilterDesign(
            "offset grid has fewer than 2 points".into(),
        ));
    }
    if profile
        .channels
        .iter()
        .any(|c| c.offset_db.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::FilterDesign("offsets are not finite".into()));
    }
    let fs = profile.sample_rate;
    let delay = filter_len / 2;
    let nfft = (8 * filter_len).next_power_of_two().max(16_384);
    let df = fs / nfft as f64;
    let window: Vec<f64> = (0..filter_len)
        .map(|i| {
            0.5 - 0.5
                * (2.0 * std::f64::consts::PI * (i + 1) as f64 / (filter_len + 1) as f64).cos()
        })
        .collect();
    // Detail finer than the windowed filter's main lobe cannot be realised.
    let min_width_hz = 4.0 * fs / filter_len as f64;
    let smoothed: Vec<Vec<f64>> = profile
        .channels
        .iter()
        .map(|c| smooth_log_linear(freqs, &c.offset_db, smoothing, min_width_hz))
        .collect();
    let channels = smoothed
        .par_iter()
        .zip(&profile.channels)
        .enumerate()
        .map(|(c, (off, orig))| {
            let neg: Vec<f64> = off.iter().map(|v| -v).collect();
            let mut spec: Vec<Complex64> = (0..=nfft / 2)
                .map(|k| Complex64::new(10f64.powf(target_db(freqs, &neg, k as f64 * df) / 20.0), 0.0))
                .collect();
            let mut planner = RealFftPlanner::<f64>::new();
            let impulse = crate::simulator::inverse_real(&mut planner, &mut spec, nfft);
            let taps: Vec<f64> = (0..filter_len)
                .map(|j| impulse[(j + nfft - delay) % nfft] * window[j])
                .collect();
            for (f, want) in freqs.iter().zip(&neg) {
                let err = fir_response_db(&taps, *f, fs) - want;
                if err.abs() > DESIGN_TOLERANCE_DB {
                    return Err(Error::FilterDesign(format!(
                        "channel {c} misses its target by {err:.3} dB at {f:.1} Hz with {filter_len} taps"
                    )));
                }
            }
            let step = fs / 2.0 / 512.0;
            for i in 0..=512 {
                let f = i as f64 * step;
                if (f < freqs[0] / HOLD_RATIO || f > freqs[freqs.len() - 1] * HOLD_RATIO)
                    && fir_response_db(&taps, f, fs).abs() > OUT_OF_BAND_LIMIT_DB
                {
                    return Err(Error::FilterDesign(format!(
                        "channel {c} leaves unity by more than {OUT_OF_BAND_LIMIT_DB} dB at {f:.1} Hz"
                    )));
                }
            }
            Ok(ChannelCalibration {
                offset_db: orig.offset_db.clone(),
                filter_taps: taps,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CalibrationProfile {
        channels,
        smoothing_octaves: Some(smoothing),
        filter_delay_samples: Some(delay),
        ..profile.clone()
    })
}

/// Filters every channel with its calibration FIR, delay compensated so the
/// output is time aligned with the input.
pub fn apply_calibration(rec: &Recording, profile: &CalibrationProfile) -> Result<Recording> {
    if rec.num_channels() != profile.num_channels() {
        return Err(Error::ChannelMismatch {
            expected: profile.num_channels(),
            actual: rec.num_channels(),
        });
    }
    let delay = profile
        .filter_delay_samples
        .ok_or_else(|| Error::InvalidConfig("profile has no filters".into()))?;
    if profile
        .channels
        .iter()
        .any(|c| c.filter_taps.len() != 2 * delay + 1)
    {
        return Err(Error::InvalidConfig(
            "filter lengths disagree with the stated delay".into(),
        ));
    }
    let n = rec.len();
    let nfft = (n + 2 * delay).next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nfft);
    let channels: Vec<Vec<f64>> = rec
        .channels()
        .par_iter()
        .zip(&profile.channels)
        .map(|(x, cal)| {
            let mut xp = vec![0.0; nfft];
            xp[..n].copy_from_slice(x);
            let mut hp = vec![0.0; nfft];
            hp[..cal.filter_taps.len()].copy_from_slice(&cal.filter_taps);
            let hs = crate::simulator::forward_real(&fwd, &hp);
            let mut xs = crate::simulator::forward_real(&fwd, &xp);
            for (a, b) in xs.iter_mut().zip(&hs) {
                *a *= b;
            }
            let y = crate::simulator::inverse_real(&mut RealFftPlanner::new(), &mut xs, nfft);
            y[delay..delay + n].to_vec()
        })
        .collect();
    let meta = RecordingMeta {
        source: format!("calibrated {}", rec.meta.source),
        ..rec.meta.clone()
    };
    Recording::new(rec.sample_rate(), channels, meta)
}

/// Smooth random per-channel gain curves bounded by `max_abs_db`: a constant
/// plus a sinusoid in log-frequency with a period of 2 to 4 octaves.
pub fn synthetic_gain_curves(channels: usize, max_abs_db: f64, seed: u64) -> Vec<GainCurve> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let freqs: Vec<f64> = (0..=480)
        .map(|i| 20.0 * 2f64.powf(i as f64 / 48.0))
        .collect();
    (0..channels)
        .map(|_| {
            let level = rng.random_range(-0.5..0.5) * max_abs_db;
            let amp = rng.random_range(0.0..0.5) * max_abs_db;
            let period = rng.random_range(2.0..4.0);
            let phase = rng.random_range(0.0..2.0 * std::f64::consts::PI);
            let gains = freqs
                .iter()
                .map(|f| {
                    level
                        + amp
                            * (2.0 * std::f64::consts::PI * (f / 1000.0).log2() / period + phase)
                                .sin()
                })
                .collect();
            GainCurve::new(freqs.clone(), gains).expect("grid is increasing")
        })
        .collect()
}

#[cfg(test)]
mod tests;
