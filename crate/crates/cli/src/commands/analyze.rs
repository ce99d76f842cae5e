use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use diffcal::campaign::{run_campaign, CampaignConfig};
use diffcal::estimator::{
    correlation_curve, sum_of_variances, variance_by_distance, CaptureMode, CorrelationCurve,
    DistanceVariance, VarianceTable,
};
use diffcal::geometry::ArrayGeometry;
use diffcal::simulator::wav::read_wav;

use super::simulate::Sidecar;
use super::Context;
use crate::config::CORRELATION_BAND_HZ;
use crate::output::{sidecar_path, write_csv};
use crate::Failure;

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let a = &ctx.cfg.analyze;
    if a.campaign {
        return campaign(ctx);
    }
    if a.recordings.is_empty() {
        return Err(Failure::Usage(
            "analyze needs at least one recording, or --campaign".into(),
        ));
    }
    let mut cells: BTreeMap<(usize, CaptureMode), Vec<CorrelationCurve>> = BTreeMap::new();
    for path in &a.recordings {
        let sidecar = Sidecar::load(&sidecar_path(path))?;
        let geom = match &sidecar {
            Some(s) => ArrayGeometry::from_positions(s.mics.clone())?,
            None => ctx.cfg.geometry()?,
        };
        let curve = correlation_curve(&read_wav(path)?, &geom)?;
        let stem = path.file_stem().unwrap_or_default().to_string_lossy();
        let out = ctx.path(&format!("{stem}_curve.csv"));
        write_csv(&out, &ctx.prov, &curve.to_csv())?;
        ctx.report("correlation curve", &out);
        if let Some(s) = sidecar {
            cells.entry((s.speakers, s.mode)).or_default().push(curve);
        }
    }
    let mut table = VarianceTable::default();
    let mut per_distance = BTreeMap::new();
    for ((n, mode), curves) in &cells {
        if curves.len() < 2 {
            eprintln!("note: {n} speaker(s) {mode} has one recording; no variance");
            continue;
        }
        let v = variance_by_distance(curves, a.bin_tolerance_m)?;
        table.push(*n, *mode, sum_of_variances(&v)?)?;
        per_distance.insert((*n, *mode), v);
    }
    if table.rows.is_empty() {
        println!("no (speakers, mode) group has two or more recordings with sidecars; variance table skipped");
        return Ok(());
    }
    write_tables(ctx, &table, &per_distance)
}

fn campaign(ctx: &Context) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let a = &cfg.analyze;
    let band = cfg.band(CORRELATION_BAND_HZ)?;
    let segments = cfg
        .scene
        .trajectory
        .map_or(cfg.simulate.segments, |t| t.segments);
    let cc = CampaignConfig {
        band_hz: [band.f_min_hz(), band.f_max_hz()],
        duration: cfg.duration,
        sample_rate: cfg.sample_rate,
        speaker_counts: a.speaker_counts.clone(),
        trials: a.trials,
        segments,
        seed: cfg.seed,
        bin_tolerance: a.bin_tolerance_m,
        speed_of_sound: cfg.speed_of_sound,
    };
    let result = run_campaign(&cc, &cfg.scene.layout()?, &cfg.geometry()?)?;
    let mut curves = String::from("speakers,mode,trial,distance_m,rho_hat,pair_p,pair_q\n");
    let mut per_distance = BTreeMap::new();
    for (key, cell) in &result.cells {
        for (t, c) in cell.curves.iter().enumerate() {
            for e in c.sorted() {
                writeln!(
                    curves,
                    "{},{},{t},{:.6},{:.9},{},{}",
                    key.0, key.1, e.distance, e.rho, e.p, e.q
                )
                .expect("write to string");
            }
        }
        per_distance.insert(*key, cell.per_distance.clone());
    }
    let path = ctx.path("campaign_curves.csv");
    write_csv(&path, &ctx.prov, &curves)?;
    ctx.report("campaign curves", &path);
    write_tables(ctx, &result.table, &per_distance)
}

fn write_tables(
    ctx: &Context,
    table: &VarianceTable,
    per_distance: &BTreeMap<(usize, CaptureMode), Vec<DistanceVariance>>,
) -> Result<(), Failure> {
    let mut csv = String::from("speakers,mode,distance_m,variance,count\n");
    for ((n, mode), rows) in per_distance {
        for r in rows {
            writeln!(
                csv,
                "{n},{mode},{:.6},{:.9},{}",
                r.distance, r.variance, r.count
            )
            .expect("write to string");
        }
    }
    let path: &Path = &ctx.path("variance_by_distance.csv");
    write_csv(path, &ctx.prov, &csv)?;
    ctx.report("per-distance variances", path);
    let path = ctx.path("variance_table.csv");
    let body = table.to_csv();
    write_csv(&path, &ctx.prov, &body)?;
    ctx.report("variance table", &path);
    print!("{body}");
    Ok(())
}
