use super::*;
use crate::estimator::{correlation_curve, estimate_correlation};
use crate::field_theory::{rho_wideband_quadrature, sinc};
use crate::geometry::{
    make_polyhedral_layout, sample_trajectory, Polyhedron, Rotation, SceneConfig, TrajectorySegment,
};
use approx::assert_abs_diff_eq;
use realfft::RealFftPlanner;

fn correlation_band() -> BandSpec {
    BandSpec::from_hz(500.0, 4500.0).unwrap()
}

fn one_speaker_at(pos: Vec3) -> LoudspeakerLayout {
    LoudspeakerLayout::explicit(vec![pos]).unwrap()
}

fn short_cfg(speakers: usize, duration: f64, seed: u64) -> CaptureConfig {
    CaptureConfig {
        duration,
        ..CaptureConfig::new(correlation_band(), speakers, seed)
    }
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

fn spectrum(x: &[f64]) -> Vec<Complex64> {
    let mut planner = RealFftPlanner::<f64>::new();
    forward_real(&planner.plan_fft_forward(x.len()), x)
}

#[test]
fn drive_spectrum_is_flat_in_band_and_empty_outside() {
    let fs = 16_000.0;
    let band = correlation_band();
    let d = synth_speaker_drives(1, &band, 30.0, fs, 11).unwrap();
    assert_eq!(d.len(), 1);
    let x = &d[0];
    assert_abs_diff_eq!(power(x), 1.0, epsilon = 0.01);
    let spec = spectrum(x);
    let df = fs / x.len() as f64;
    // Average |X|^2 over 50 Hz groups (1500 bins each).
    let group = (50.0 / df) as usize;
    let in_band: Vec<f64> = spec
        .chunks(group)
        .enumerate()
        .filter(|(i, c)| {
            let f0 = *i as f64 * group as f64 * df;
            f0 >= 500.0 && f0 + c.len() as f64 * df <= 4500.0
        })
        .map(|(_, c)| c.iter().map(|v| v.norm_sqr()).sum::<f64>() / c.len() as f64)
        .collect();
    let mean = in_band.iter().sum::<f64>() / in_band.len() as f64;
    for p in &in_band {
        assert!((10.0 * (p / mean).log10()).abs() < 1.0);
    }
    // One octave outside the band on either side.
    let outside: f64 = spec
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = *k as f64 * df;
            f <= 250.0 || (f >= 9000.0 && f < fs / 2.0)
        })
        .map(|(_, v)| v.norm_sqr())
        .sum::<f64>();
    assert!(outside <= mean * 1e-6);
}

#[test]
fn drives_independent_and_deterministic() {
    let band = correlation_band();
    let d = synth_speaker_drives(2, &band, 30.0, 16_000.0, 5).unwrap();
    let rec = Recording::new(16_000.0, d.clone(), RecordingMeta::default()).unwrap();
    assert!(estimate_correlation(&rec, 0, 1).unwrap().abs() < 0.02);
    let again = synth_speaker_drives(2, &band, 30.0, 16_000.0, 5).unwrap();
    assert_eq!(d, again);
    let other = synth_speaker_drives(2, &band, 30.0, 16_000.0, 6).unwrap();
    assert_ne!(d, other);
}

#[test]
fn pink_drive_falls_three_db_per_octave() {
    let fs = 16_000.0;
    let band = BandSpec::from_hz(250.0, 4000.0).unwrap();
    let d = synth_colored_drives(1, &band, 20.0, fs, 3, NoiseColor::Pink).unwrap();
    let spec = spectrum(&d[0]);
    let df = fs / d[0].len() as f64;
    let band_power = |lo: f64, hi: f64| {
        let (a, b) = ((lo / df) as usize, (hi / df) as usize);
        spec[a..b].iter().map(|v| v.norm_sqr()).sum::<f64>() / (b - a) as f64
    };
    let low = band_power(450.0, 550.0);
    let high = band_power(1800.0, 2200.0);
    assert_abs_diff_eq!(10.0 * (low / high).log10(), 6.02, epsilon = 0.5);
    assert_abs_diff_eq!(power(&d[0]), 1.0, epsilon = 0.02);
}

#[test]
fn aliasing_and_config_errors() {
    let band = correlation_band();
    assert!(matches!(
        synth_speaker_drives(1, &band, 1.0, 8_000.0, 0),
        Err(Error::Aliasing { .. })
    ));
    assert!(synth_speaker_drives(0, &band, 1.0, 16_000.0, 0).is_err());
    let layout = SceneConfig::default().layout().unwrap();
    let g = ArrayGeometry::default_linear();
    let mut cfg = short_cfg(2, 1.0, 0);
    cfg.sample_rate = 9_000.0;
    assert!(matches!(
        render_capture(&layout, &g, &cfg),
        Err(Error::Aliasing { .. })
    ));
    cfg.sample_rate = 16_000.0;
    cfg.duration = 2.0;
    cfg.trajectory = Some(Trajectory::fixed(Pose::IDENTITY, 1.0).unwrap());
    assert!(matches!(
        render_capture(&layout, &g, &cfg),
        Err(Error::InvalidConfig(_))
    ));
    cfg.trajectory = Some(
        Trajectory::fixed(
            Pose::new(Vec3::new(1.75, 0.0, 0.0), Rotation::IDENTITY).unwrap(),
            2.0,
        )
        .unwrap(),
    );
    assert!(matches!(
        render_capture(&layout, &g, &cfg),
        Err(Error::TrajectoryEscapes { .. })
    ));
}

#[test]
fn coincident_mics_receive_identical_signals() {
    let layout = one_speaker_at(Vec3::new(0.3, -1.2, 0.9));
    let cfg = short_cfg(1, 2.0, 1);
    let t = Trajectory::fixed(Pose::IDENTITY, 2.0).unwrap();
    let rec = render_positions(&layout, &[Vec3::ZERO, Vec3::ZERO], &t, &cfg).unwrap();
    assert_eq!(rec.channel(0), rec.channel(1));
    assert_eq!(estimate_correlation(&rec, 0, 1).unwrap(), 1.0);
}

#[test]
fn broadside_pair_is_fully_correlated() {
    let layout = one_speaker_at(Vec3::new(1.8, 0.0, 0.0));
    let g = ArrayGeometry::from_positions(vec![Vec3::ZERO, Vec3::new(0.0, 0.2, 0.0)]).unwrap();
    let rec = render_capture(&layout, &g, &short_cfg(1, 2.0, 2)).unwrap();
    assert!(estimate_correlation(&rec, 0, 1).unwrap() > 0.999_999);
}

#[test]
fn cross_spectrum_phase_matches_plane_wave_delay() {
    let y_speaker = Vec3::new(-1.0, 0.5, 0.8);
    let layout = one_speaker_at(y_speaker * 1.5);
    let y = -y_speaker.normalized().unwrap();
    let dx = Vec3::new(0.025, 0.01, -0.012);
    let g = ArrayGeometry::from_positions(vec![Vec3::ZERO, dx]).unwrap();
    let cfg = short_cfg(1, 2.0, 3);
    let rec = render_capture(&layout, &g, &cfg).unwrap();
    let (sp, sq) = (spectrum(rec.channel(0)), spectrum(rec.channel(1)));
    let df = cfg.sample_rate / rec.len() as f64;
    let tau = dx.dot(y) / cfg.constants.c;
    for f in [600.0, 1000.0, 2000.0, 3000.0, 4400.0] {
        let k = (f / df).round() as usize;
        let cross = sp[k] * sq[k].conj();
        let expected = 2.0 * std::f64::consts::PI * k as f64 * df * tau;
        assert!(
            (cross.arg() - expected).abs() <= 0.01 * expected.abs(),
            "f {f}"
        );
    }
}

#[test]
fn identity_trajectory_matches_fixed_bit_for_bit() {
    let layout = SceneConfig::default().layout().unwrap();
    let g = ArrayGeometry::default_linear();
    let fixed = render_capture(&layout, &g, &short_cfg(4, 2.0, 9)).unwrap();
    let segs = (0..8)
        .map(|_| TrajectorySegment {
            duration: 0.25,
            pose: Pose::IDENTITY,
        })
        .collect();
    let mut cfg = short_cfg(4, 2.0, 9);
    cfg.trajectory = Some(Trajectory::new(segs).unwrap());
    let moving = render_capture(&layout, &g, &cfg).unwrap();
    assert_eq!(fixed.channels(), moving.channels());
    assert!(moving.meta.trajectory_digest.is_some());
}

#[test]
fn render_is_seed_deterministic() {
    let layout = SceneConfig::default().layout().unwrap();
    let g = ArrayGeometry::default_linear();
    let mut cfg = short_cfg(3, 2.0, 4);
    cfg.trajectory = Some(sample_trajectory(1.8, g.extent(), 16, 2.0, 77).unwrap());
    let a = render_capture(&layout, &g, &cfg).unwrap();
    let b = render_capture(&layout, &g, &cfg).unwrap();
    assert_eq!(a.digest(), b.digest());
}

#[test]
fn power_grows_linearly_with_speaker_count() {
    let layout = make_polyhedral_layout(Polyhedron::RhombicTriacontahedron, 1.8, 32).unwrap();
    let g = ArrayGeometry::default_linear();
    let mean_power = |n: usize| {
        let rec = render_capture(&layout, &g, &short_cfg(n, 30.0, 21)).unwrap();
        rec.channels().iter().map(|c| power(c)).sum::<f64>() / rec.num_channels() as f64
    };
    for n in [1, 4, 16] {
        assert!(
            (mean_power(n) / n as f64 - 1.0).abs() < 0.05,
            "{n} speakers"
        );
    }
}

#[test]
fn gain_curves_scale_channels() {
    let layout = one_speaker_at(Vec3::new(0.0, 0.0, 1.8));
    let g = ArrayGeometry::from_positions(vec![Vec3::ZERO, Vec3::new(0.1, 0.0, 0.0)]).unwrap();
    let mut cfg = short_cfg(1, 2.0, 8);
    let plain = render_capture(&layout, &g, &cfg).unwrap();
    cfg.gain_curves = Some(vec![GainCurve::flat(0.0), GainCurve::flat(6.0)]);
    let gained = render_capture(&layout, &g, &cfg).unwrap();
    let ratio = power(gained.channel(1)) / power(plain.channel(1));
    assert_abs_diff_eq!(10.0 * ratio.log10(), 6.0, epsilon = 1e-9);
    for (a, b) in gained.channel(0).iter().zip(plain.channel(0)) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
    cfg.gain_curves = Some(vec![GainCurve::flat(0.0)]);
    assert!(matches!(
        render_capture(&layout, &g, &cfg),
        Err(Error::ChannelMismatch { .. })
    ));
}

#[test]
fn gain_curve_interpolation() {
    let c = GainCurve::new(vec![100.0, 200.0, 400.0], vec![0.0, 2.0, -2.0]).unwrap();
    assert_eq!(c.gain_db(50.0), 0.0);
    assert_eq!(c.gain_db(150.0), 1.0);
    assert_eq!(c.gain_db(300.0), 0.0);
    assert_eq!(c.gain_db(1e4), -2.0);
    assert!(GainCurve::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
}

#[test]
fn fibonacci_directions_are_unit_and_balanced() {
    let d = fibonacci_directions(1000);
    let mean = d.iter().fold(Vec3::ZERO, |a, &b| a + b) * (1.0 / 1000.0);
    assert!(mean.norm() < 1e-3);
    for v in &d {
        assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn single_direction_oracle_is_one_plane_wave() {
    // A lone wave gives cos(wc tau) sinc(dw tau / 2) for a real flat-band signal.
    let band = correlation_band();
    let g = ArrayGeometry::default_linear();
    let rec = render_diffuse_oracle(&g, &band, 1, 10.0, 16_000.0, 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    rng.set_stream(u64::MAX);
    let y = Rotation::random(&mut rng).apply(fibonacci_directions(1)[0]);
    let c = PhysicalConstants::default().c;
    for e in correlation_curve(&rec, &g).unwrap().entries {
        let dx = g.mic_positions()[e.q] - g.mic_positions()[e.p];
        let tau = dx.dot(y) / c;
        let model = (band.omega_c() * tau).cos() * sinc(0.5 * band.delta_omega() * tau);
        assert_abs_diff_eq!(e.rho, model, epsilon = 0.02);
    }
}

#[test]
fn oracle_seeds_agree_within_monte_carlo_error() {
    let band = correlation_band();
    let g = ArrayGeometry::default_linear();
    let fs = 16_000.0;
    let blocks = 10;
    // Per-pair estimates and block standard errors from ten 1 s blocks.
    let run = |seed: u64| -> (Vec<f64>, Vec<f64>) {
        let rec = render_diffuse_oracle(&g, &band, 2000, 10.0, fs, seed).unwrap();
        let whole = correlation_curve(&rec, &g).unwrap();
        let per_block: Vec<Vec<f64>> = (0..blocks)
            .map(|b| {
                let len = rec.len() / blocks;
                let chans = rec
                    .channels()
                    .iter()
                    .map(|c| c[b * len..(b + 1) * len].to_vec())
                    .collect();
                let sub = Recording::new(fs, chans, RecordingMeta::default()).unwrap();
                correlation_curve(&sub, &g)
                    .unwrap()
                    .entries
                    .iter()
                    .map(|e| e.rho)
                    .collect()
            })
            .collect();
        let se = (0..whole.entries.len())
            .map(|i| {
                let m = per_block.iter().map(|b| b[i]).sum::<f64>() / blocks as f64;
                let v =
                    per_block.iter().map(|b| (b[i] - m).powi(2)).sum::<f64>() / (blocks - 1) as f64;
                (v / blocks as f64).sqrt()
            })
            .collect();
        (whole.entries.iter().map(|e| e.rho).collect(), se)
    };
    let (a, se_a) = run(100);
    let (b, se_b) = run(200);
    let diff_rms =
        (a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
    let se_rms = (se_a
        .iter()
        .zip(&se_b)
        .map(|(x, y)| x * x + y * y)
        .sum::<f64>()
        / a.len() as f64)
        .sqrt();
    assert!(diff_rms <= 2.0 * se_rms, "diff {diff_rms} vs se {se_rms}");
}

#[test]
fn oracle_converges_to_band_integral() {
    let band = correlation_band();
    let g = ArrayGeometry::default_linear();
    let k = PhysicalConstants::default();
    let rec = render_diffuse_oracle(&g, &band, 1000, 5.0, 16_000.0, 31).unwrap();
    let curve = correlation_curve(&rec, &g).unwrap();
    let rms = curve.rms_deviation(|d| rho_wideband_quadrature(d, &band, &k, 1e-10).unwrap());
    assert!(rms < 0.03, "rms {rms}");
}

#[test]
fn wav_round_trip() {
    let layout = SceneConfig::default().layout().unwrap();
    let g = ArrayGeometry::default_linear();
    let rec = render_capture(&layout, &g, &short_cfg(2, 1.0, 1)).unwrap();
    let mut buf = std::io::Cursor::new(Vec::new());
    wav::write_wav_to(&mut buf, &rec).unwrap();
    buf.set_position(0);
    let back = wav::read_wav_from(buf).unwrap();
    assert_eq!(back.num_channels(), 16);
    assert_eq!(back.len(), 16_000);
    assert_eq!(back.sample_rate(), 16_000.0);
    for (a, b) in back.channels().iter().zip(rec.channels()) {
        for (x, y) in a.iter().zip(b) {
            assert_eq!(*x, *y as f32 as f64);
        }
    }
}
