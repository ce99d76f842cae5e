use diffcal::calibration::{
    apply_calibration, design_calibration_filters, estimate_magnitude_response, relative_offsets,
    synthetic_gain_curves, trim_from_profile, CalibrationProfile, PsdConfig, DEFAULT_BAND_HZ,
};
use diffcal::simulator::wav::read_wav;
use serde::Serialize;

use super::simulate::Sidecar;
use super::Context;
use crate::output::{sidecar_path, write_csv, write_json, write_wav_atomic, Provenance};
use crate::Failure;

#[derive(Serialize)]
struct ProfileFile<'a> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    profile: &'a CalibrationProfile,
}

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let c = &ctx.cfg.calibrate;
    let Some(input) = &c.recording else {
        return Err(Failure::Usage("calibrate needs a recording".into()));
    };
    let rec = read_wav(input)?;
    let sidecar = Sidecar::load(&sidecar_path(input))?;
    // A simulated capture only carries energy inside its rendered band.
    let band_hz = ctx
        .cfg
        .band_hz
        .or(sidecar.as_ref().map(|s| s.band_hz))
        .unwrap_or(DEFAULT_BAND_HZ);
    let psd = PsdConfig {
        segment_len: c.segment_len,
        overlap: c.overlap,
        band_hz,
    };
    let offsets = relative_offsets(&estimate_magnitude_response(&rec, &psd)?)?;
    let profile = design_calibration_filters(&offsets, c.smoothing_octaves, c.filter_len)?;
    let calibrated = apply_calibration(&rec, &profile)?;
    let after = relative_offsets(&estimate_magnitude_response(&calibrated, &psd)?)?;

    let path = ctx.path("calibration_profile.json");
    write_json(
        &path,
        &ProfileFile {
            provenance: &ctx.prov,
            profile: &profile,
        },
    )?;
    ctx.report("calibration profile", &path);
    let path = ctx.path("offsets.csv");
    write_csv(&path, &ctx.prov, &profile.offsets_csv())?;
    ctx.report("offsets", &path);
    if c.write_filtered {
        let path = ctx.path("calibrated.wav");
        write_wav_atomic(&path, &calibrated)?;
        ctx.report("calibrated recording", &path);
    }

    match (
        trim_from_profile(&profile, 1000.0),
        trim_from_profile(&after, 1000.0),
    ) {
        (Ok(pre), Ok(post)) => println!(
            "trim spread at 1 kHz: {:.3} dB before, {:.3} dB after calibration",
            pre.spread_db, post.spread_db
        ),
        _ => println!("1 kHz lies outside the analysis band; no trim statistic"),
    }
    let residual = after
        .smoothed_offsets(c.smoothing_octaves)
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    println!("largest residual smoothed offset after calibration: {residual:.3} dB");

    // Simulated captures with known gains can report recovery error directly.
    if let Some(Sidecar {
        gains_max_db: Some(g),
        gain_seed: Some(seed),
        ..
    }) = sidecar
    {
        let truth = synthetic_gain_curves(rec.num_channels(), g, seed);
        let smoothed = profile.smoothed_offsets(c.smoothing_octaves);
        let mut worst = 0.0f64;
        for (k, f) in profile.freq_hz.iter().enumerate() {
            let mean = truth.iter().map(|t| t.gain_db(*f)).sum::<f64>() / truth.len() as f64;
            for (t, s) in truth.iter().zip(&smoothed) {
                worst = worst.max((s[k] - (t.gain_db(*f) - mean)).abs());
            }
        }
        println!("largest offset recovery error against the simulated gains: {worst:.3} dB");
    }
    Ok(())
}
