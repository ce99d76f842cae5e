//! Sample estimates of pairwise spatial correlation, distance-binned
//! variances and the sum-of-variances statistic.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pair_distances, ArrayGeometry};
use crate::simulator::Recording;

/// Shortest recording accepted, in seconds.
pub const MIN_DURATION: f64 = 1.0;
/// Default distance-bin tolerance, meters.
pub const DEFAULT_BIN_TOLERANCE: f64 = 0.0005;
/// Mean power below which a channel counts as silent.
pub const SILENCE_THRESHOLD: f64 = 1e-20;

/// How the cross term is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// `E{s_p s_q} / sqrt(E{s_p^2} E{s_q^2})`.
    #[default]
    Symmetric,
    /// `E{s_p s_q} / E{s_p^2}`, the literal single-channel normalization.
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptureMode {
    /// Array held in one pose.
    Fixed,
    /// Array perturbed and rotated along a random trajectory.
    Proposed,
}

impl std::fmt::Display for CaptureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CaptureMode::Fixed => "fixed",
            CaptureMode::Proposed => "proposed",
        })
    }
}

impl std::str::FromStr for CaptureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(CaptureMode::Fixed),
            "proposed" => Ok(CaptureMode::Proposed),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode `{other}` (expected fixed or proposed)"
            ))),
        }
    }
}

fn check_recording(rec: &Recording) -> Result<()> {
    if rec.duration() < MIN_DURATION {
        return Err(Error::TooShort {
            actual: rec.duration(),
            required: MIN_DURATION,
        });
    }
    Ok(())
}

fn mean_product(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    (acc[0] + acc[1] + acc[2] + acc[3] + tail) / a.len() as f64
}

fn channel_power(rec: &Recording, i: usize) -> Result<f64> {
    let p = mean_product(rec.channel(i), rec.channel(i));
    if !(p > SILENCE_THRESHOLD) {
        return Err(Error::DegenerateInput(format!(
            "channel {i} is silent (mean power {p:e})"
        )));
    }
    Ok(p)
}

fn check_index(rec: &Recording, i: usize) -> Result<()> {
    if i >= rec.num_channels() {
        return Err(Error::InvalidConfig(format!(
            "channel {i} out of range for {} channels",
            rec.num_channels()
        )));
    }
    Ok(())
}

/// Symmetric estimate of the correlation between channels `p` and `q`.
pub fn estimate_correlation(rec: &Recording, p: usize, q: usize) -> Result<f64> {
    estimate_correlation_with(rec, p, q, Normalization::Symmetric)
}

pub fn estimate_correlation_with(
    rec: &Recording,
    p: usize,
    q: usize,
    norm: Normalization,
) -> Result<f64> {
    check_index(rec, p)?;
    check_index(rec, q)?;
    check_recording(rec)?;
    let pp = channel_power(rec, p)?;
    if p == q {
        return Ok(1.0);
    }
    let qq = channel_power(rec, q)?;
    let pq = mean_product(rec.channel(p), rec.channel(q));
    Ok(match norm {
        Normalization::Symmetric => pq / (pp * qq).sqrt(),
        Normalization::Reference => pq / pp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub p: usize,
    pub q: usize,
    pub distance: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub entries: Vec<CorrelationEntry>,
    /// Digest of the recording the curve was estimated from.
    pub provenance: String,
}

impl CorrelationCurve {
    /// Entries ordered by distance, ties by pair.
    pub fn sorted(&self) -> Vec<CorrelationEntry> {
        let mut e = self.entries.clone();
        e.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then((a.p, a.q).cmp(&(b.p, b.q)))
        });
        e
    }

    /// CSV with header `distance_m,rho_hat,pair_p,pair_q`, sorted by distance.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("distance_m,rho_hat,pair_p,pair_q\n");
        for e in self.sorted() {
            writeln!(s, "{:.6},{:.9},{},{}", e.distance, e.rho, e.p, e.q).expect("write to string");
        }
        s
    }

    /// Root-mean-square of `rho - model(distance)` over all entries.
    pub fn rms_deviation(&self, model: impl Fn(f64) -> f64) -> f64 {
        let n = self.entries.len().max(1) as f64;
        (self
            .entries
            .iter()
            .map(|e| (e.rho - model(e.distance)).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    }
}

/// Correlation of every mic pair, tagged with the pair distance.
pub fn correlation_curve(rec: &Recording, geom: &ArrayGeometry) -> Result<CorrelationCurve> {
    correlation_curve_with(rec, geom, Normalization::Symmetric)
}

pub fn correlation_curve_with(
    rec: &Recording,
    geom: &ArrayGeometry,
    norm: Normalization,
) -> Result<CorrelationCurve> {
    if rec.num_channels() != geom.len() {
        return Err(Error::ChannelMismatch {
            expected: geom.len(),
            actual: rec.num_channels(),
        });
    }
    check_recording(rec)?;
    let powers: Vec<f64> = (0..rec.num_channels())
        .into_par_iter()
        .map(|i| channel_power(rec, i))
        .collect::<Result<_>>()?;
    let entries = pair_distances(geom)
        .into_par_iter()
        .map(|pd| {
            let pq = mean_product(rec.channel(pd.p), rec.channel(pd.q));
            let rho = match norm {
                Normalization::Symmetric => pq / (powers[pd.p] * powers[pd.q]).sqrt(),
                Normalization::Reference => pq / powers[pd.p],
            };
            CorrelationEntry {
                p: pd.p,
                q: pd.q,
                distance: pd.distance,
                rho,
            }
        })
        .collect();
    Ok(CorrelationCurve {
        entries,
        provenance: rec.digest(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceVariance {
    /// Mean distance of the bin's samples.
    pub distance: f64,
    pub variance: f64,
    pub count: usize,
}

/// Pools all entries of `curves`, groups them by distance and returns the
/// unbiased variance of each group.
///
/// A group starts at the smallest unassigned distance and takes every entry
/// within `tolerance` of it.
pub fn variance_by_distance(
    curves: &[CorrelationCurve],
    tolerance: f64,
) -> Result<Vec<DistanceVariance>> {
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "bin tolerance must be non-negative, got {tolerance}"
        )));
    }
    let mut all: Vec<(f64, f64)> = curves
        .iter()
        .flat_map(|c| c.entries.iter().map(|e| (e.distance, e.rho)))
        .collect();
    if all.is_empty() {
        return Err(Error::DegenerateInput("no correlation entries".into()));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    let mut i = 0;
    while i < all.len() {
        let start = all[i].0;
        let mut j = i;
        while j < all.len() && all[j].0 - start <= tolerance {
            j += 1;
        }
        let group = &all[i..j];
        let n = group.len();
        let distance = group.iter().map(|g| g.0).sum::<f64>() / n as f64;
        if n < 2 {
            return Err(Error::EmptyBin { distance, count: n });
        }
        // Shifted by the first value so identical samples give exactly 0.
        let shift = group[0].1;
        let mean = group.iter().map(|g| g.1 - shift).sum::<f64>() / n as f64;
        let variance = group
            .iter()
            .map(|g| (g.1 - shift - mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        out.push(DistanceVariance {
            distance,
            variance,
            count: n,
        });
        i = j;
    }
    Ok(out)
}

pub fn sum_of_variances(per_distance: &[DistanceVariance]) -> Result<f64> {
    if per_distance.is_empty() {
        return Err(Error::DegenerateInput("no distance bins".into()));
    }
    Ok(per_distance.iter().map(|d| d.variance).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub speakers: usize,
    pub mode: CaptureMode,
    pub sum_of_variances: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VarianceTable {
    pub rows: Vec<VarianceRow>,
}

impl VarianceTable {
    pub fn push(
        &mut self,
        speakers: usize,
        mode: CaptureMode,
        sum_of_variances: f64,
    ) -> Result<()> {
        if !(sum_of_variances >= 0.0) {
            return Err(Error::DegenerateInput(format!(
                "negative sum of variances {sum_of_variances}"
            )));
        }
        self.rows.push(VarianceRow {
            speakers,
            mode,
            sum_of_variances,
        });
        Ok(())
    }

    pub fn get(&self, speakers: usize, mode: CaptureMode) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.speakers == speakers && r.mode == mode)
            .map(|r| r.sum_of_variances)
    }

    /// Speaker counts in ascending order, without repeats.
    pub fn speaker_counts(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.rows.iter().map(|r| r.speakers).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// CSV `speakers,fixed,proposed`; missing cells are left empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("speakers,fixed,proposed\n");
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
        for n in self.speaker_counts() {
            writeln!(
                s,
                "{n},{},{}",
                cell(self.get(n, CaptureMode::Fixed)),
                cell(self.get(n, CaptureMode::Proposed))
            )
            .expect("write to string");
        }
        s
    }
}
