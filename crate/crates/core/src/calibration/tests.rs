use super::*;
use crate::field_theory::BandSpec;
use crate::geometry::{
    sample_trajectory, ArrayGeometry, LoudspeakerLayout, Pose, SceneConfig, Trajectory, Vec3,
};
use crate::simulator::{
    render_capture, render_positions, synth_colored_drives, CaptureConfig, NoiseColor,
};
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

fn cal_band() -> BandSpec {
    BandSpec::from_hz(DEFAULT_BAND_HZ[0], DEFAULT_BAND_HZ[1]).unwrap()
}

fn spectra(freq_hz: Vec<f64>, db: Vec<Vec<f64>>) -> MagnitudeSpectra {
    MagnitudeSpectra {
        freq_hz,
        db,
        sample_rate: 16_000.0,
        segment_len: 4096,
        overlap: 0.5,
        window: "hann".into(),
        averages: 1,
    }
}

fn spread(col: impl Iterator<Item = f64> + Clone) -> f64 {
    col.clone().fold(f64::NEG_INFINITY, f64::max) - col.fold(f64::INFINITY, f64::min)
}

/// Perturbed 32-capsule capture with optional per-channel gains.
fn sphere_capture(
    duration: f64,
    seed: u64,
    gains: Option<Vec<GainCurve>>,
    color: NoiseColor,
) -> Recording {
    let geom = ArrayGeometry::spherical_32(0.042).unwrap();
    let layout = SceneConfig::default().layout().unwrap();
    let segments = (8.0 * duration) as usize;
    let cfg = CaptureConfig {
        duration,
        color,
        gain_curves: gains,
        trajectory: Some(
            sample_trajectory(1.8, geom.extent(), segments, duration, seed ^ 0xA5A5).unwrap(),
        ),
        ..CaptureConfig::new(cal_band(), 26, seed)
    };
    render_capture(&layout, &geom, &cfg).unwrap()
}

#[test]
fn white_noise_spectrum_is_flat() {
    let d = synth_colored_drives(1, &cal_band(), 60.0, 16_000.0, 4, NoiseColor::White).unwrap();
    let rec = Recording::new(16_000.0, d, RecordingMeta::default()).unwrap();
    let s = estimate_magnitude_response(&rec, &PsdConfig::default()).unwrap();
    assert!(s.averages >= 100);
    assert_eq!(s.freq_hz.first().copied(), Some(210.9375));
    let mean = s.db[0].iter().sum::<f64>() / s.db[0].len() as f64;
    assert!(s.db[0].iter().all(|v| (v - mean).abs() <= 1.0));
    // Unit power spread over 5800 Hz of one-sided band.
    assert_abs_diff_eq!(mean, 10.0 * (1.0f64 / 5800.0).log10(), epsilon = 0.1);
}

#[test]
fn gained_channel_reads_three_db_higher() {
    let layout = LoudspeakerLayout::explicit(vec![Vec3::new(0.0, 1.8, 0.0)]).unwrap();
    let cfg = CaptureConfig {
        duration: 12.0,
        gain_curves: Some(vec![GainCurve::flat(0.0), GainCurve::flat(3.0)]),
        ..CaptureConfig::new(cal_band(), 1, 8)
    };
    let t = Trajectory::fixed(Pose::IDENTITY, 12.0).unwrap();
    let rec = render_positions(&layout, &[Vec3::ZERO, Vec3::ZERO], &t, &cfg).unwrap();
    let s = estimate_magnitude_response(&rec, &PsdConfig::default()).unwrap();
    for (a, b) in s.db[0].iter().zip(&s.db[1]) {
        assert_abs_diff_eq!(b - a, 3.0, epsilon = 0.2);
    }
}

#[test]
fn pink_noise_slope_recovered() {
    let d = synth_colored_drives(1, &cal_band(), 30.0, 16_000.0, 2, NoiseColor::Pink).unwrap();
    let rec = Recording::new(16_000.0, d, RecordingMeta::default()).unwrap();
    let s = estimate_magnitude_response(&rec, &PsdConfig::default()).unwrap();
    let x: Vec<f64> = s.freq_hz.iter().map(|f| f.log2()).collect();
    let (mx, my) = (
        x.iter().sum::<f64>() / x.len() as f64,
        s.db[0].iter().sum::<f64>() / x.len() as f64,
    );
    let num: f64 = x
        .iter()
        .zip(&s.db[0])
        .map(|(a, b)| (a - mx) * (b - my))
        .sum();
    let den: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    assert_abs_diff_eq!(num / den, -3.01, epsilon = 0.1);
}

#[test]
fn magnitude_response_errors() {
    let short = Recording::new(
        16_000.0,
        vec![vec![0.1; 16_000]; 2],
        RecordingMeta::default(),
    )
    .unwrap();
    assert!(matches!(
        estimate_magnitude_response(&short, &PsdConfig::default()),
        Err(Error::TooShort { .. })
    ));
    let mut d = synth_colored_drives(1, &cal_band(), 10.0, 16_000.0, 1, NoiseColor::White).unwrap();
    d.push(vec![0.0; d[0].len()]);
    let rec = Recording::new(16_000.0, d, RecordingMeta::default()).unwrap();
    assert!(matches!(
        estimate_magnitude_response(&rec, &PsdConfig::default()),
        Err(Error::DegenerateInput(_))
    ));
    let high = PsdConfig {
        band_hz: [200.0, 9000.0],
        ..Default::default()
    };
    assert!(matches!(
        estimate_magnitude_response(&rec, &high),
        Err(Error::Aliasing { .. })
    ));
}

#[test]
fn offsets_of_identical_channels_are_zero() {
    let p = relative_offsets(&spectra(
        vec![500.0, 1000.0, 1500.0],
        vec![vec![-40.0, -41.0, -42.5]; 5],
    ))
    .unwrap();
    for c in &p.channels {
        assert!(c.offset_db.iter().all(|v| *v == 0.0));
    }
    assert_eq!(p.trim_stat_1khz_db, Some(0.0));
    assert!(relative_offsets(&spectra(vec![1000.0], vec![vec![0.0]])).is_err());
}

#[test]
fn one_hot_channel_offsets() {
    let mut db = vec![vec![-30.0; 4]; 32];
    db[7] = vec![-27.0; 4];
    let p = relative_offsets(&spectra(vec![900.0, 1000.0, 1100.0, 1200.0], db)).unwrap();
    for (i, c) in p.channels.iter().enumerate() {
        let want = if i == 7 { 2.90625 } else { -0.09375 };
        for v in &c.offset_db {
            assert_abs_diff_eq!(*v, want, epsilon = 1e-12);
        }
    }
}

#[test]
fn trim_drift_errors_and_identity() {
    let s = spectra(vec![500.0, 1000.0, 2000.0], vec![vec![1.0, 2.0, 3.0]; 3]);
    let t = trim_drift_at(&s, 1000.0).unwrap();
    assert_eq!(t.spread_db, 0.0);
    assert_eq!(t.deviations_db.len(), 3);
    assert!(matches!(trim_drift_at(&s, 100.0), Err(Error::OutOfBand(_))));
    assert!(matches!(
        trim_drift_at(&s, 2500.0),
        Err(Error::OutOfBand(_))
    ));
}

#[test]
fn trim_drift_recovers_known_spread() {
    let gains: Vec<GainCurve> = (0..32)
        .map(|i| GainCurve::flat(-0.85 + 1.7 * ((i * 13) % 32) as f64 / 31.0))
        .collect();
    let rec = sphere_capture(30.0, 17, Some(gains), NoiseColor::Pink);
    let t = trim_drift_at(
        &estimate_magnitude_response(&rec, &PsdConfig::default()).unwrap(),
        1000.0,
    )
    .unwrap();
    assert_abs_diff_eq!(t.spread_db, 1.7, epsilon = 0.2);
}

#[test]
fn smoothing_preserves_log_linear_curves() {
    let f: Vec<f64> = (50..1500).map(|k| k as f64 * 3.90625).collect();
    let v: Vec<f64> = f.iter().map(|f| 0.7 - 1.3 * f.log2()).collect();
    for (a, b) in smooth_fractional_octave(&f, &v, 1.0 / 6.0).iter().zip(&v) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-9);
    }
    assert_eq!(smooth_fractional_octave(&f, &v, 0.0), v);
}

fn flat_profile(offsets: &[f64]) -> CalibrationProfile {
    let freqs: Vec<f64> = (54..1535).map(|k| k as f64 * 3.90625).collect();
    CalibrationProfile {
        channels: offsets
            .iter()
            .map(|&o| ChannelCalibration {
                offset_db: vec![o; freqs.len()],
                filter_taps: Vec::new(),
            })
            .collect(),
        freq_hz: freqs,
        trim_stat_1khz_db: None,
        sample_rate: 16_000.0,
        smoothing_octaves: None,
        filter_delay_samples: None,
    }
}

#[test]
fn zero_offsets_give_unity_filters() {
    let p = design_calibration_filters(
        &flat_profile(&[0.0, 0.0]),
        DEFAULT_SMOOTHING,
        DEFAULT_FILTER_LEN,
    )
    .unwrap();
    assert_eq!(p.filter_delay_samples, Some(512));
    for c in &p.channels {
        assert_eq!(c.filter_taps.len(), 1025);
        for f in [0.0, 100.0, 1000.0, 5000.0, 7999.0] {
            assert!(fir_response_db(&c.filter_taps, f, 16_000.0).abs() <= 0.01);
        }
    }
}

#[test]
fn flat_offset_gives_flat_inverse() {
    let p = design_calibration_filters(
        &flat_profile(&[3.0, -3.0]),
        DEFAULT_SMOOTHING,
        DEFAULT_FILTER_LEN,
    )
    .unwrap();
    for f in p.freq_hz.iter().step_by(37) {
        assert_abs_diff_eq!(
            fir_response_db(&p.channels[0].filter_taps, *f, 16_000.0),
            -3.0,
            epsilon = 0.1
        );
        assert_abs_diff_eq!(
            fir_response_db(&p.channels[1].filter_taps, *f, 16_000.0),
            3.0,
            epsilon = 0.1
        );
    }
    for f in [20.0, 7900.0] {
        assert!(
            fir_response_db(&p.channels[0].filter_taps, f, 16_000.0).abs() <= OUT_OF_BAND_LIMIT_DB
        );
    }
}

#[test]
fn smooth_random_offsets_are_equalized() {
    let curves = synthetic_gain_curves(4, 2.0, 9);
    let mut p = flat_profile(&[0.0; 4]);
    for (c, g) in p.channels.iter_mut().zip(&curves) {
        c.offset_db = p.freq_hz.iter().map(|f| g.gain_db(*f)).collect();
    }
    let d = design_calibration_filters(&p, DEFAULT_SMOOTHING, DEFAULT_FILTER_LEN).unwrap();
    for (c, g) in d.channels.iter().zip(&curves) {
        for f in d.freq_hz.iter().step_by(11) {
            let eq = g.gain_db(*f) + fir_response_db(&c.filter_taps, *f, 16_000.0);
            assert!(eq.abs() <= 0.1, "{eq} at {f}");
        }
    }
}

#[test]
fn filter_design_rejects_bad_requests() {
    let p = flat_profile(&[0.0, 0.0]);
    assert!(matches!(
        design_calibration_filters(&p, DEFAULT_SMOOTHING, 1024),
        Err(Error::FilterDesign(_))
    ));
    let mut wiggly = flat_profile(&[0.0, 0.0]);
    wiggly.channels[0].offset_db = wiggly
        .freq_hz
        .iter()
        .map(|f| 2.0 * (f / 40.0).sin())
        .collect();
    assert!(matches!(
        design_calibration_filters(&wiggly, 0.0, 15),
        Err(Error::FilterDesign(_))
    ));
    let mut nan = flat_profile(&[0.0, 0.0]);
    nan.channels[1].offset_db[3] = f64::NAN;
    assert!(design_calibration_filters(&nan, DEFAULT_SMOOTHING, 1025).is_err());
}

#[test]
fn unity_profile_passes_signal_through() {
    let d = synth_colored_drives(3, &cal_band(), 1.0, 16_000.0, 6, NoiseColor::White).unwrap();
    let rec = Recording::new(16_000.0, d, RecordingMeta::default()).unwrap();
    let p = design_calibration_filters(&flat_profile(&[0.0; 3]), DEFAULT_SMOOTHING, 1025).unwrap();
    let out = apply_calibration(&rec, &p).unwrap();
    assert_eq!(out.len(), rec.len());
    for (a, b) in out.channels().iter().zip(rec.channels()) {
        for (x, y) in a.iter().zip(b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }
    let two = flat_profile(&[0.0; 2]);
    assert!(matches!(
        apply_calibration(&rec, &two),
        Err(Error::ChannelMismatch { .. })
    ));
    assert!(apply_calibration(&rec, &flat_profile(&[0.0; 3])).is_err());
}

#[test]
fn calibration_contracts_spread() {
    let rec = sphere_capture(
        30.0,
        23,
        Some(synthetic_gain_curves(32, 2.0, 23)),
        NoiseColor::Pink,
    );
    let cfg = PsdConfig::default();
    let pre = relative_offsets(&estimate_magnitude_response(&rec, &cfg).unwrap()).unwrap();
    let designed = design_calibration_filters(&pre, DEFAULT_SMOOTHING, DEFAULT_FILTER_LEN).unwrap();
    let post = relative_offsets(
        &estimate_magnitude_response(&apply_calibration(&rec, &designed).unwrap(), &cfg).unwrap(),
    )
    .unwrap();
    let (a, b) = (
        pre.smoothed_offsets(DEFAULT_SMOOTHING),
        post.smoothed_offsets(DEFAULT_SMOOTHING),
    );
    for k in (0..pre.freq_hz.len()).step_by(7) {
        let sa = spread(a.iter().map(|c| c[k]));
        let sb = spread(b.iter().map(|c| c[k]));
        if sa > 0.1 {
            assert!(sb < sa, "bin {k}: {sb} >= {sa}");
        }
    }
    assert!(post.trim_stat_1khz_db.unwrap() < pre.trim_stat_1khz_db.unwrap());
}

#[test]
fn white_and_pink_drives_agree() {
    let gains = synthetic_gain_curves(32, 2.0, 4);
    let cfg = PsdConfig::default();
    let off = |color| {
        let rec = sphere_capture(30.0, 4, Some(gains.clone()), color);
        relative_offsets(&estimate_magnitude_response(&rec, &cfg).unwrap())
            .unwrap()
            .smoothed_offsets(DEFAULT_SMOOTHING)
    };
    let (w, p) = (off(NoiseColor::White), off(NoiseColor::Pink));
    for (a, b) in w.iter().zip(&p) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 0.2);
        }
    }
}

#[test]
fn profile_json_layout() {
    let p = design_calibration_filters(
        &flat_profile(&[0.5, -0.5]),
        DEFAULT_SMOOTHING,
        DEFAULT_FILTER_LEN,
    )
    .unwrap();
    let v: serde_json::Value = serde_json::from_str(&p.to_json().unwrap()).unwrap();
    assert!(v["freq_hz"].is_array());
    assert_eq!(v["channels"][1]["offset_db"][0], -0.5);
    assert_eq!(
        v["channels"][0]["filter_taps"].as_array().unwrap().len(),
        1025
    );
    assert!(v.get("trim_stat_1khz_db").is_some());
    assert_eq!(
        CalibrationProfile::from_json(&p.to_json().unwrap()).unwrap(),
        p
    );
    let csv = p.offsets_csv();
    assert!(csv.starts_with("freq_hz,ch0_offset_db,ch1_offset_db\n"));
    assert_eq!(csv.lines().count(), p.freq_hz.len() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn offsets_sum_to_zero(
        db in prop::collection::vec(prop::collection::vec(-120.0f64..20.0, 6), 2..40),
    ) {
        let p = relative_offsets(&spectra((1..=6).map(|k| 100.0 * k as f64).collect(), db)).unwrap();
        for k in 0..6 {
            let sum: f64 = p.channels.iter().map(|c| c.offset_db[k]).sum();
            prop_assert!(sum.abs() <= 1e-9);
        }
    }
}
