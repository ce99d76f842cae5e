//! Run configuration: one TOML document per run, overridden by flags.
//!
//! ```toml
//! seed = 7
//! band_hz = [500.0, 4500.0]
//! duration = 30.0
//! sample_rate = 16000.0
//! array = "linear16"
//!
//! [scene.layout]
//! kind = "rhombic-triacontahedron"
//! radius_m = 1.8
//! count = 26
//!
//! [simulate]
//! mode = "proposed"
//! speakers = 2
//!
//! [analyze]
//! speaker_counts = [1, 2, 4, 8, 16, 26]
//! trials = 20
//! ```

use std::path::{Path, PathBuf};

use diffcal::calibration;
use diffcal::estimator::{CaptureMode, DEFAULT_BIN_TOLERANCE};
use diffcal::field_theory::{BandSpec, PhysicalConstants};
use diffcal::geometry::{ArrayGeometry, SceneConfig};
use diffcal::simulator::{NoiseColor, DEFAULT_DURATION, DEFAULT_SAMPLE_RATE};
use diffcal::{campaign, Error};
use serde::{Deserialize, Serialize};

/// Default band for correlation experiments.
pub const CORRELATION_BAND_HZ: [f64; 2] = [500.0, 4500.0];
/// Capsule radius of the 32-channel spherical array.
pub const SPHERE_RADIUS_M: f64 = 0.042;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Unset means the subcommand's own default band.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band_hz: Option<[f64; 2]>,
    pub duration: f64,
    pub sample_rate: f64,
    pub speed_of_sound: f64,
    /// `linear16` or `sphere32`; ignored when `scene.mics` is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub array: Option<String>,
    pub scene: SceneConfig,
    pub theory: TheoryConfig,
    pub simulate: SimulateConfig,
    pub analyze: AnalyzeConfig,
    pub calibrate: CalibrateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoryConfig {
    pub d_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub mode: CaptureMode,
    pub speakers: usize,
    pub color: NoiseColor,
    /// Poses of the perturbed trajectory when `scene.trajectory` is unset.
    pub segments: usize,
    /// Random smooth per-channel gains bounded by this many dB.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gains_max_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub recordings: Vec<PathBuf>,
    pub campaign: bool,
    pub speaker_counts: Vec<usize>,
    pub trials: usize,
    pub bin_tolerance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recording: Option<PathBuf>,
    pub segment_len: usize,
    pub overlap: f64,
    pub smoothing_octaves: f64,
    pub filter_len: usize,
    pub write_filtered: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: None,
            band_hz: None,
            duration: DEFAULT_DURATION,
            sample_rate: DEFAULT_SAMPLE_RATE,
            speed_of_sound: PhysicalConstants::default().c,
            array: None,
            scene: SceneConfig::default(),
            theory: TheoryConfig::default(),
            simulate: SimulateConfig::default(),
            analyze: AnalyzeConfig::default(),
            calibrate: CalibrateConfig::default(),
        }
    }
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            d_max: 0.32,
            n_points: 200,
        }
    }
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            mode: CaptureMode::Proposed,
            speakers: 26,
            color: NoiseColor::White,
            segments: campaign::DEFAULT_SEGMENTS,
            gains_max_db: None,
        }
    }
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            recordings: Vec::new(),
            campaign: false,
            speaker_counts: campaign::DEFAULT_SPEAKER_COUNTS.to_vec(),
            trials: campaign::DEFAULT_TRIALS,
            bin_tolerance_m: DEFAULT_BIN_TOLERANCE,
        }
    }
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            recording: None,
            segment_len: calibration::DEFAULT_SEGMENT_LEN,
            overlap: calibration::DEFAULT_OVERLAP,
            smoothing_octaves: calibration::DEFAULT_SMOOTHING,
            filter_len: calibration::DEFAULT_FILTER_LEN,
            write_filtered: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> diffcal::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn band(&self, default_hz: [f64; 2]) -> diffcal::Result<BandSpec> {
        let [lo, hi] = self.band_hz.unwrap_or(default_hz);
        BandSpec::from_hz(lo, hi)
    }

    pub fn constants(&self) -> diffcal::Result<PhysicalConstants> {
        PhysicalConstants::new(self.speed_of_sound)
    }

    pub fn geometry(&self) -> diffcal::Result<ArrayGeometry> {
        if self.scene.mics.is_some() {
            return self.scene.geometry();
        }
        match self.array.as_deref() {
            None | Some("linear16") => Ok(ArrayGeometry::default_linear()),
            Some("sphere32") => ArrayGeometry::spherical_32(SPHERE_RADIUS_M),
            Some(other) => Err(Error::InvalidConfig(format!(
                "unknown array `{other}`, expected linear16 or sphere32"
            ))),
        }
    }

    /// Checks shared fields and that every referenced input exists.
    pub fn validate(&self) -> diffcal::Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sample rate must be positive, got {}",
                self.sample_rate
            )));
        }
        self.constants()?;
        if let Some([lo, hi]) = self.band_hz {
            BandSpec::from_hz(lo, hi)?;
        }
        self.geometry()?;
        self.scene.layout()?;
        let inputs = self
            .analyze
            .recordings
            .iter()
            .chain(self.calibrate.recording.as_ref());
        for p in inputs {
            if !p.is_file() {
                return Err(Error::InvalidConfig(format!(
                    "input file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

/// Parses `LO,HI` in Hz.
pub fn parse_band(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [lo, hi] => {
            let lo: f64 = lo.parse().map_err(|_| format!("bad band edge `{lo}`"))?;
            let hi: f64 = hi.parse().map_err(|_| format!("bad band edge `{hi}`"))?;
            Ok([lo, hi])
        }
        _ => Err(format!("expected LO,HI, got `{s}`")),
    }
}

/// Parses a comma-separated list of speaker counts.
pub fn parse_counts(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad speaker count `{v}`"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = RunConfig::default();
        assert_eq!(toml::from_str::<RunConfig>(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn documented_example_parses() {
        let doc = "seed = 7\nband_hz = [500.0, 4500.0]\narray = \"sphere32\"\n\n[scene.layout]\nkind = \"rhombic-triacontahedron\"\nradius_m = 1.8\ncount = 26\n\n[simulate]\nmode = \"fixed\"\nspeakers = 2\n";
        let c: RunConfig = toml::from_str(doc).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.simulate.mode, CaptureMode::Fixed);
        assert_eq!(c.geometry().unwrap().len(), 32);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("sede = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[simulate]\nspeakerz = 1").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let bad = [
            RunConfig {
                duration: 0.0,
                ..Default::default()
            },
            RunConfig {
                band_hz: Some([4500.0, 500.0]),
                ..Default::default()
            },
            RunConfig {
                array: Some("cube".into()),
                ..Default::default()
            },
            RunConfig {
                calibrate: CalibrateConfig {
                    recording: Some("/no/such/file.wav".into()),
                    ..Default::default()
                },
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().unwrap_err().is_config_error());
        }
    }

    #[test]
    fn flag_parsers() {
        assert_eq!(parse_band("500, 4500").unwrap(), [500.0, 4500.0]);
        assert!(parse_band("500").is_err());
        assert_eq!(parse_counts("1,2,26").unwrap(), vec![1, 2, 26]);
        assert!(parse_counts("1,x").is_err());
    }
}
