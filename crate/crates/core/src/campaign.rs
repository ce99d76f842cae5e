//! Matched-seed simulation campaigns comparing fixed and perturbed capture.
//!
//! Trial `t` uses the same speaker drives and the same sampled trajectory for
//! both modes. The fixed capture holds the trajectory's first pose for the
//! whole duration, so the two modes differ only in whether the array moves.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    correlation_curve, sum_of_variances, variance_by_distance, CaptureMode, CorrelationCurve,
    DistanceVariance, VarianceTable, DEFAULT_BIN_TOLERANCE,
};
use crate::field_theory::{BandSpec, PhysicalConstants};
use crate::geometry::{sample_trajectory, ArrayGeometry, LoudspeakerLayout, Trajectory};
use crate::simulator::{render_capture, CaptureConfig, DEFAULT_DURATION, DEFAULT_SAMPLE_RATE};

pub const DEFAULT_SPEAKER_COUNTS: [usize; 6] = [1, 2, 4, 8, 16, 26];
pub const DEFAULT_TRIALS: usize = 20;
/// Poses per perturbed capture.
pub const DEFAULT_SEGMENTS: usize = 240;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub band_hz: [f64; 2],
    pub duration: f64,
    pub sample_rate: f64,
    pub speaker_counts: Vec<usize>,
    pub trials: usize,
    pub segments: usize,
    pub seed: u64,
    pub bin_tolerance: f64,
    pub speed_of_sound: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            band_hz: [500.0, 4500.0],
            duration: DEFAULT_DURATION,
            sample_rate: DEFAULT_SAMPLE_RATE,
            speaker_counts: DEFAULT_SPEAKER_COUNTS.to_vec(),
            trials: DEFAULT_TRIALS,
            segments: DEFAULT_SEGMENTS,
            seed: 0,
            bin_tolerance: DEFAULT_BIN_TOLERANCE,
            speed_of_sound: PhysicalConstants::default().c,
        }
    }
}

impl CampaignConfig {
    pub fn band(&self) -> Result<BandSpec> {
        BandSpec::from_hz(self.band_hz[0], self.band_hz[1])
    }

    fn validate(&self) -> Result<()> {
        self.band()?;
        PhysicalConstants::new(self.speed_of_sound)?;
        if self.trials < 2 {
            return Err(Error::InvalidConfig(
                "a campaign needs at least 2 trials".into(),
            ));
        }
        if self.speaker_counts.is_empty() || self.speaker_counts.contains(&0) {
            return Err(Error::InvalidConfig(
                "speaker counts must be non-empty and positive".into(),
            ));
        }
        if self.segments == 0 {
            return Err(Error::InvalidConfig(
                "trajectory needs at least one segment".into(),
            ));
        }
        Ok(())
    }

    /// Seed shared by both modes of trial `t`.
    pub fn trial_seed(&self, t: usize) -> u64 {
        // SplitMix64 finalizer, so neighbouring trials get unrelated streams.
        let mut z = self
            .seed
            .wrapping_add((t as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub speakers: usize,
    pub mode: CaptureMode,
    pub curves: Vec<CorrelationCurve>,
    pub per_distance: Vec<DistanceVariance>,
    pub sum_of_variances: f64,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub table: VarianceTable,
    pub cells: BTreeMap<(usize, CaptureMode), CellResult>,
}

impl CampaignResult {
    pub fn cell(&self, speakers: usize, mode: CaptureMode) -> Option<&CellResult> {
        self.cells.get(&(speakers, mode))
    }
}

/// The two trajectories of trial `t`: perturbed, then fixed at its first pose.
pub fn trial_trajectories(
    cfg: &CampaignConfig,
    layout: &LoudspeakerLayout,
    geom: &ArrayGeometry,
    t: usize,
) -> Result<(Trajectory, Trajectory)> {
    let moving = sample_trajectory(
        layout.radius(),
        geom.extent(),
        cfg.segments,
        cfg.duration,
        cfg.trial_seed(t),
    )?;
    let fixed = Trajectory::fixed(moving.segments()[0].pose, cfg.duration)?;
    Ok((moving, fixed))
}

/// Renders and analyses every (speaker count, mode, trial) combination.
pub fn run_campaign(
    cfg: &CampaignConfig,
    layout: &LoudspeakerLayout,
    geom: &ArrayGeometry,
) -> Result<CampaignResult> {
    cfg.validate()?;
    let band = cfg.band()?;
    let jobs: Vec<(usize, CaptureMode, usize)> = cfg
        .speaker_counts
        .iter()
        .flat_map(|&n| {
            [CaptureMode::Fixed, CaptureMode::Proposed]
                .into_iter()
                .flat_map(move |m| (0..cfg.trials).map(move |t| (n, m, t)))
        })
        .collect();
    let curves: Vec<CorrelationCurve> = jobs
        .par_iter()
        .map(|&(n, mode, t)| {
            let (moving, fixed) = trial_trajectories(cfg, layout, geom, t)?;
            let capture = CaptureConfig {
                duration: cfg.duration,
                sample_rate: cfg.sample_rate,
                constants: PhysicalConstants::new(cfg.speed_of_sound)?,
                trajectory: Some(match mode {
                    CaptureMode::Fixed => fixed,
                    CaptureMode::Proposed => moving,
                }),
                ..CaptureConfig::new(band, n, cfg.trial_seed(t))
            };
            correlation_curve(&render_capture(layout, geom, &capture)?, geom)
        })
        .collect::<Result<_>>()?;

    let mut table = VarianceTable::default();
    let mut cells = BTreeMap::new();
    for (chunk, job) in curves.chunks(cfg.trials).zip(jobs.chunks(cfg.trials)) {
        let (speakers, mode, _) = job[0];
        let per_distance = variance_by_distance(chunk, cfg.bin_tolerance)?;
        let total = sum_of_variances(&per_distance)?;
        table.push(speakers, mode, total)?;
        cells.insert(
            (speakers, mode),
            CellResult {
                speakers,
                mode,
                curves: chunk.to_vec(),
                per_distance,
                sum_of_variances: total,
            },
        );
    }
    Ok(CampaignResult { table, cells })
}

/// Variance at the distance bin nearest `d`.
pub fn variance_near(per_distance: &[DistanceVariance], d: f64) -> Option<&DistanceVariance> {
    per_distance
        .iter()
        .min_by(|a, b| (a.distance - d).abs().total_cmp(&(b.distance - d).abs()))
}
