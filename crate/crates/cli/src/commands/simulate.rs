use diffcal::calibration::synthetic_gain_curves;
use diffcal::estimator::CaptureMode;
use diffcal::geometry::{sample_trajectory, Trajectory, Vec3};
use diffcal::simulator::{render_capture, CaptureConfig, NoiseColor, RecordingMeta};
use serde::{Deserialize, Serialize};

use super::Context;
use crate::config::CORRELATION_BAND_HZ;
use crate::output::{sidecar_path, write_json, write_wav_atomic, Provenance};
use crate::Failure;

/// Description of a simulated WAV, stored next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub provenance: Provenance,
    pub recording_sha256: String,
    pub mode: CaptureMode,
    pub speakers: usize,
    pub band_hz: [f64; 2],
    pub duration: f64,
    pub sample_rate: f64,
    pub color: NoiseColor,
    pub mics: Vec<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains_max_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_seed: Option<u64>,
    pub meta: RecordingMeta,
}

impl Sidecar {
    pub fn load(path: &std::path::Path) -> diffcal::Result<Option<Self>> {
        match std::fs::read_to_string(path) {
            Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let s = &cfg.simulate;
    let geom = cfg.geometry()?;
    let layout = cfg.scene.layout()?;
    let band = cfg.band(CORRELATION_BAND_HZ)?;
    let (seed, segments) = cfg
        .scene
        .trajectory
        .map_or((cfg.seed, s.segments), |t| (t.seed, t.segments));
    let moving = sample_trajectory(layout.radius(), geom.extent(), segments, cfg.duration, seed)?;
    // A fixed capture holds the first pose, as in a campaign trial.
    let trajectory = match s.mode {
        CaptureMode::Fixed => Trajectory::fixed(moving.segments()[0].pose, cfg.duration)?,
        CaptureMode::Proposed => moving,
    };
    let capture = CaptureConfig {
        duration: cfg.duration,
        sample_rate: cfg.sample_rate,
        trajectory: Some(trajectory),
        gain_curves: s
            .gains_max_db
            .map(|g| synthetic_gain_curves(geom.len(), g, cfg.seed)),
        color: s.color,
        constants: cfg.constants()?,
        ..CaptureConfig::new(band, s.speakers, cfg.seed)
    };
    let rec = render_capture(&layout, &geom, &capture)?;
    for w in &rec.meta.warnings {
        eprintln!("warning: {w}");
    }
    let stem = format!("sim_{}_{}spk", s.mode, s.speakers);
    let wav = ctx.path(&format!("{stem}.wav"));
    write_wav_atomic(&wav, &rec)?;
    let sidecar = Sidecar {
        provenance: ctx.prov.clone(),
        recording_sha256: rec.digest(),
        mode: s.mode,
        speakers: s.speakers,
        band_hz: [band.f_min_hz(), band.f_max_hz()],
        duration: cfg.duration,
        sample_rate: cfg.sample_rate,
        color: s.color,
        mics: geom.mic_positions().to_vec(),
        gains_max_db: s.gains_max_db,
        gain_seed: s.gains_max_db.map(|_| cfg.seed),
        meta: rec.meta.clone(),
    };
    write_json(&sidecar_path(&wav), &sidecar)?;
    ctx.report("capture", &wav);
    println!(
        "{} channels, {:.1} s at {} Hz, {} speaker(s), mode {}",
        rec.num_channels(),
        rec.duration(),
        rec.sample_rate(),
        s.speakers,
        s.mode
    );
    Ok(())
}
