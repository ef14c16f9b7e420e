//! PCK evaluation with keypoint groups and per-acquisition statistics.
//!
//! A keypoint is correct iff its distance to ground truth is `<= τ` (mm).
//! Ground-truth-invisible keypoints are not evaluated; a missing prediction
//! for a visible ground truth is evaluated and counts as incorrect. PCK is
//! computed per acquisition first, then summarized across acquisitions.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::{KeypointSet, KEYPOINT_NAMES, NUM_KEYPOINTS};
use crate::inpaint::median;

/// Left/right-merged reporting names, in first-appearance order.
pub const MERGED_NAMES: [&str; 8] = [
    "bladder", "eyes", "shoulders", "elbows", "wrists", "hips", "knees", "ankles",
];

/// Merged name for a keypoint index.
pub fn merged_name(index: usize) -> &'static str {
    match KEYPOINT_NAMES[index] {
        "bladder" => "bladder",
        n if n.starts_with("eye") => "eyes",
        n if n.starts_with("shoulder") => "shoulders",
        n if n.starts_with("elbow") => "elbows",
        n if n.starts_with("wrist") => "wrists",
        n if n.starts_with("hip") => "hips",
        n if n.starts_with("knee") => "knees",
        _ => "ankles",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    /// Bladder, eyes, shoulders, hips.
    G1,
    /// Elbows, knees.
    G2,
    /// Wrists, ankles.
    G3,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::G1, Group::G2, Group::G3];

    pub fn of(index: usize) -> Group {
        match merged_name(index) {
            "elbows" | "knees" => Group::G2,
            "wrists" | "ankles" => Group::G3,
            _ => Group::G1,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        (0..NUM_KEYPOINTS).filter(move |&i| Group::of(i) == self)
    }
}

/// One time point of an acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub prediction: KeypointSet,
    pub ground_truth: KeypointSet,
    pub spacing: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionSeries {
    pub acquisition_id: String,
    pub frames: Vec<Frame>,
    pub ga_weeks: Option<f64>,
}

impl AcquisitionSeries {
    pub fn new(acquisition_id: impl Into<String>, frames: Vec<Frame>, ga_weeks: Option<f64>) -> Result<Self> {
        let acquisition_id = acquisition_id.into();
        let first = frames
            .first()
            .ok_or_else(|| Error::Data(format!("{acquisition_id}: series has no frames")))?;
        if first.spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Parameter(format!("{acquisition_id}: invalid spacing {:?}", first.spacing)));
        }
        if frames.iter().any(|f| f.spacing != first.spacing) {
            return Err(Error::Data(format!("{acquisition_id}: spacing changes within series")));
        }
        Ok(AcquisitionSeries {
            acquisition_id,
            frames,
            ga_weeks,
        })
    }
}

/// Result for one keypoint in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Ground truth invisible: not evaluated.
    Absent,
    /// Ground truth visible, prediction missing.
    Missed,
    /// Distance in mm.
    Measured(f64),
}

impl Outcome {
    pub fn is_evaluated(self) -> bool {
        !matches!(self, Outcome::Absent)
    }

    pub fn is_correct(self, tau_mm: f64) -> bool {
        matches!(self, Outcome::Measured(d) if d <= tau_mm)
    }
}

/// Euclidean distance of `(Δvoxel · spacing)` per keypoint.
pub fn keypoint_distance_mm(
    pred: &KeypointSet,
    gt: &KeypointSet,
    spacing: [f64; 3],
) -> [Outcome; NUM_KEYPOINTS] {
    std::array::from_fn(|i| {
        let (p, g) = (pred.get(i), gt.get(i));
        if !g.visible {
            Outcome::Absent
        } else if !p.visible {
            Outcome::Missed
        } else {
            let d2: f64 = (0..3)
                .map(|a| ((p.position[a] - g.position[a]) * spacing[a]).powi(2))
                .sum();
            Outcome::Measured(d2.sqrt())
        }
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub evaluated: u64,
    pub correct: u64,
}

impl Counts {
    /// Percentage correct; `None` when nothing was evaluated.
    pub fn pck(&self) -> Option<f64> {
        (self.evaluated > 0).then(|| 100.0 * self.correct as f64 / self.evaluated as f64)
    }

    fn add(&mut self, other: Counts) {
        self.evaluated += other.evaluated;
        self.correct += other.correct;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionReport {
    pub acquisition_id: String,
    pub ga_weeks: Option<f64>,
    /// Per frame, per keypoint.
    pub outcomes: Vec<[Outcome; NUM_KEYPOINTS]>,
    pub counts: [Counts; NUM_KEYPOINTS],
}

impl AcquisitionReport {
    pub fn merged(&self, name: &str) -> Counts {
        let mut c = Counts::default();
        for i in (0..NUM_KEYPOINTS).filter(|&i| merged_name(i) == name) {
            c.add(self.counts[i]);
        }
        c
    }

    pub fn group(&self, g: Group) -> Counts {
        let mut c = Counts::default();
        g.members().for_each(|i| c.add(self.counts[i]));
        c
    }

    pub fn total(&self) -> Counts {
        let mut c = Counts::default();
        self.counts.iter().for_each(|&k| c.add(k));
        c
    }
}

/// Median, mean and sample standard deviation across acquisitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    /// `None` for fewer than two values.
    pub std: Option<f64>,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        let mut sorted = values.to_vec();
        Some(Stats {
            n,
            median: median(&mut sorted).expect("nonempty"),
            mean,
            std,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tau_mm: f64,
    pub acquisitions: Vec<AcquisitionReport>,
}

/// Statistics of per-acquisition PCK for one reporting unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub stats: Option<Stats>,
}

impl EvalReport {
    /// Pooled counts over all acquisitions per keypoint.
    pub fn pooled(&self) -> [Counts; NUM_KEYPOINTS] {
        let mut c = [Counts::default(); NUM_KEYPOINTS];
        for a in &self.acquisitions {
            for (t, s) in c.iter_mut().zip(&a.counts) {
                t.add(*s);
            }
        }
        c
    }

    pub fn total(&self) -> Counts {
        let mut c = Counts::default();
        self.acquisitions.iter().for_each(|a| c.add(a.total()));
        c
    }

    /// Across-acquisition statistics for each merged keypoint, each group and
    /// all keypoints. Acquisitions with nothing evaluated for a unit are skipped.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let row = |name: String, f: &dyn Fn(&AcquisitionReport) -> Counts| {
            let values: Vec<f64> = self.acquisitions.iter().filter_map(|a| f(a).pck()).collect();
            SummaryRow {
                name,
                stats: Stats::of(&values),
            }
        };
        let mut rows: Vec<SummaryRow> = MERGED_NAMES
            .iter()
            .map(|&n| row(n.to_string(), &|a| a.merged(n)))
            .collect();
        for g in Group::ALL {
            rows.push(row(format!("{g:?}"), &|a| a.group(g)));
        }
        rows.push(row("all".into(), &|a| a.total()));
        rows
    }

    /// CSV with columns `acquisition_id,keypoint,evaluated,correct,pck`; one row
    /// per acquisition and keypoint, `pck` empty when nothing was evaluated.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Format(format!("csv: {e}"));
        w.write_record(["acquisition_id", "keypoint", "evaluated", "correct", "pck"])
            .map_err(csv_err)?;
        for a in &self.acquisitions {
            for (i, c) in a.counts.iter().enumerate() {
                let pck = c.pck().map(|p| format!("{p}")).unwrap_or_default();
                w.write_record([
                    a.acquisition_id.as_str(),
                    KEYPOINT_NAMES[i],
                    &c.evaluated.to_string(),
                    &c.correct.to_string(),
                    &pck,
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::Format(format!("csv: {e}")))?;
        Ok(())
    }
}

fn evaluate(series: &[AcquisitionSeries], tau_mm: f64) -> EvalReport {
    let acquisitions = series
        .iter()
        .map(|s| {
            let outcomes: Vec<_> = s
                .frames
                .iter()
                .map(|f| keypoint_distance_mm(&f.prediction, &f.ground_truth, f.spacing))
                .collect();
            let mut counts = [Counts::default(); NUM_KEYPOINTS];
            for frame in &outcomes {
                for (c, o) in counts.iter_mut().zip(frame) {
                    c.evaluated += o.is_evaluated() as u64;
                    c.correct += o.is_correct(tau_mm) as u64;
                }
            }
            AcquisitionReport {
                acquisition_id: s.acquisition_id.clone(),
                ga_weeks: s.ga_weeks,
                outcomes,
                counts,
            }
        })
        .collect();
    EvalReport {
        tau_mm,
        acquisitions,
    }
}

/// PCK at threshold `tau_mm` (> 0) over a set of acquisitions.
pub fn pck(series: &[AcquisitionSeries], tau_mm: f64) -> Result<EvalReport> {
    if !(tau_mm > 0.0) {
        return Err(Error::Parameter(format!("tau must be > 0 mm, got {tau_mm}")));
    }
    let report = evaluate(series, tau_mm);
    if report.total().evaluated == 0 {
        return Err(Error::EmptyReport);
    }
    Ok(report)
}

/// PCK over flat (prediction, ground truth, spacing) pairs, reported as a
/// single acquisition named `all`.
pub fn pck_pairs(pairs: &[(KeypointSet, KeypointSet, [f64; 3])], tau_mm: f64) -> Result<EvalReport> {
    let frames = pairs
        .iter()
        .map(|(p, g, s)| Frame {
            prediction: p.clone(),
            ground_truth: g.clone(),
            spacing: *s,
        })
        .collect();
    pck(&[AcquisitionSeries {
        acquisition_id: "all".into(),
        frames,
        ga_weeks: None,
    }], tau_mm)
}

/// Pooled correct/evaluated per group across the whole report.
pub fn group_stats(report: &EvalReport) -> [Counts; 3] {
    let pooled = report.pooled();
    Group::ALL.map(|g| {
        let mut c = Counts::default();
        g.members().for_each(|i| c.add(pooled[i]));
        c
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PckCurve {
    pub taus_mm: Vec<f64>,
    /// Pooled PCK per τ, per keypoint.
    pub keypoints: Vec<[Option<f64>; NUM_KEYPOINTS]>,
    /// Pooled PCK per τ, per group.
    pub groups: Vec<[Option<f64>; 3]>,
}

/// Pooled PCK as a function of threshold; `taus_mm` must be ascending and >= 0.
pub fn pck_curve(series: &[AcquisitionSeries], taus_mm: &[f64]) -> Result<PckCurve> {
    if taus_mm.iter().any(|t| !(*t >= 0.0)) || taus_mm.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Parameter("thresholds must be >= 0 and ascending".into()));
    }
    let mut keypoints = Vec::new();
    let mut groups = Vec::new();
    for &tau in taus_mm {
        let r = evaluate(series, tau);
        keypoints.push(r.pooled().map(|c| c.pck()));
        groups.push(group_stats(&r).map(|c| c.pck()));
    }
    Ok(PckCurve {
        taus_mm: taus_mm.to_vec(),
        keypoints,
        groups,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaBin {
    pub lo: f64,
    pub hi: f64,
    pub acquisitions: usize,
    /// `None` marks an empty bin.
    pub stats: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaTable {
    pub bins: Vec<GaBin>,
    /// Acquisitions excluded for lacking a GA.
    pub missing_ga: usize,
    /// Acquisitions whose GA falls outside every bin.
    pub out_of_range: usize,
}

/// Per-bin statistics of per-acquisition overall PCK. Bins are `[e_i, e_{i+1})`
/// except the last, which includes its upper edge.
pub fn ga_binned_stats(report: &EvalReport, edges: &[f64]) -> Result<GaTable> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parameter("GA bin edges must be strictly ascending, at least two".into()));
    }
    let nb = edges.len() - 1;
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); nb];
    let mut missing_ga = 0;
    let mut out_of_range = 0;
    for a in &report.acquisitions {
        let Some(ga) = a.ga_weeks else {
            missing_ga += 1;
            continue;
        };
        let bin = (0..nb).find(|&b| ga >= edges[b] && (ga < edges[b + 1] || (b == nb - 1 && ga == edges[nb])));
        match (bin, a.total().pck()) {
            (Some(b), Some(p)) => members[b].push(p),
            (None, _) => out_of_range += 1,
            (Some(_), None) => {}
        }
    }
    let bins = members
        .iter()
        .enumerate()
        .map(|(b, v)| GaBin {
            lo: edges[b],
            hi: edges[b + 1],
            acquisitions: v.len(),
            stats: Stats::of(v),
        })
        .collect();
    Ok(GaTable {
        bins,
        missing_ga,
        out_of_range,
    })
}
