//! Skeleton and edgemark metrics against ground truth, and bootstrap
//! summaries across trials.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedMixedGraph, EdgeMark};

/// Iterations used for all summaries unless configured otherwise.
pub const BOOTSTRAP_ITERATIONS: usize = 200;

/// Token written for missing values.
pub const MISSING: &str = "NA";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    #[default]
    IncludeR,
    /// Pairs involving `R` are ignored.
    SystemOnly,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::IncludeR => "include-r",
            Scope::SystemOnly => "system-only",
        }
    }
}

impl std::str::FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "include-r" => Ok(Scope::IncludeR),
            "system-only" => Ok(Scope::SystemOnly),
            other => Err(Error::Parse(format!("unknown scope {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonMetrics {
    /// `None` when the truth has no adjacencies.
    pub tpr: Option<f64>,
    /// `None` when the truth has no non-adjacent pairs.
    pub fpr: Option<f64>,
    pub true_edges: usize,
    pub found_edges: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgemarkMetrics {
    /// `None` when the prediction asserts no marks.
    pub precision: Option<f64>,
    /// `None` when the truth has no marks.
    pub recall: Option<f64>,
}

fn check_pair(pred: &DirectedMixedGraph, truth: &DirectedMixedGraph) -> Result<()> {
    if pred.same_nodes(truth) {
        Ok(())
    } else {
        Err(Error::NodeSetMismatch)
    }
}

fn in_scope(g: &DirectedMixedGraph, scope: Scope) -> impl Fn(usize, usize) -> bool {
    let r = g.context_node();
    move |a, b| scope == Scope::IncludeR || (Some(a) != r && Some(b) != r)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// TPR over the true adjacencies and FPR over the truly non-adjacent
/// unordered pairs.
pub fn skeleton_metrics(
    pred: &DirectedMixedGraph,
    truth: &DirectedMixedGraph,
    scope: Scope,
) -> Result<SkeletonMetrics> {
    check_pair(pred, truth)?;
    let keep = in_scope(truth, scope);
    let n = truth.n_nodes();
    let (mut tp, mut fp, mut t, mut f, mut non) = (0, 0, 0, 0, 0);
    for a in 0..n {
        for b in (a + 1)..n {
            if !keep(a, b) {
                continue;
            }
            let (p, q) = (pred.adjacent(a, b), truth.adjacent(a, b));
            t += q as usize;
            f += p as usize;
            non += !q as usize;
            tp += (p && q) as usize;
            fp += (p && !q) as usize;
        }
    }
    Ok(SkeletonMetrics {
        tpr: ratio(tp, t),
        fpr: ratio(fp, non),
        true_edges: t,
        found_edges: f,
    })
}

/// Mark at `v` on the pair `(v, w)`: an arrowhead if any record has one
/// there, else a tail if any record has one, else no assertion.
fn mark(g: &DirectedMixedGraph, v: usize, w: usize) -> Option<EdgeMark> {
    let marks: Vec<EdgeMark> = g.edges_between(v, w).iter().filter_map(|e| e.mark_at(v)).collect();
    if marks.contains(&EdgeMark::Arrow) {
        Some(EdgeMark::Arrow)
    } else if marks.contains(&EdgeMark::Tail) {
        Some(EdgeMark::Tail)
    } else {
        None
    }
}

/// Per-endpoint edgemark accuracy over pairs adjacent in either graph.
pub fn edgemark_metrics(
    pred: &DirectedMixedGraph,
    truth: &DirectedMixedGraph,
    scope: Scope,
) -> Result<EdgemarkMetrics> {
    check_pair(pred, truth)?;
    let keep = in_scope(truth, scope);
    let pairs: BTreeSet<(usize, usize)> = pred.skeleton().union(&truth.skeleton()).copied().collect();
    let (mut correct, mut asserted, mut real) = (0, 0, 0);
    for (a, b) in pairs {
        if !keep(a, b) {
            continue;
        }
        for (v, w) in [(a, b), (b, a)] {
            let p = mark(pred, v, w);
            let t = mark(truth, v, w);
            asserted += p.is_some() as usize;
            real += t.is_some() as usize;
            correct += (p.is_some() && p == t) as usize;
        }
    }
    Ok(EdgemarkMetrics {
        precision: ratio(correct, asserted),
        recall: ratio(correct, real),
    })
}

/// Arithmetic mean of the defined values; `None` when none is defined.
pub fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.into_iter().flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap of the mean with a 95% interval.
pub fn bootstrap<R: Rng + ?Sized>(values: &[f64], iterations: usize, rng: &mut R) -> Result<BootstrapSummary> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("bootstrap needs at least one value".into()));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one iteration".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut means: Vec<f64> = (0..iterations)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Ok(BootstrapSummary {
        mean,
        lo: percentile(&means, 0.025).min(mean),
        hi: percentile(&means, 0.975).max(mean),
        iterations,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| MISSING.into())
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s == MISSING || s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Parse(format!("bad metric value {s:?}")))
}

/// One row of the per-trial metrics table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub trial_id: usize,
    pub method: String,
    pub link_assumptions: String,
    pub n_samples: usize,
    pub scope: Scope,
    /// Context value or `union`.
    pub context: String,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub em_precision: Option<f64>,
    pub em_recall: Option<f64>,
    pub test_count: Option<usize>,
    pub failed: bool,
}

pub const METRICS_HEADER: [&str; 12] = [
    "trial_id",
    "method",
    "link_assumptions",
    "n_samples",
    "scope",
    "context",
    "tpr",
    "fpr",
    "em_precision",
    "em_recall",
    "test_count",
    "failed",
];

impl MetricsRow {
    fn record(&self) -> [String; 12] {
        [
            self.trial_id.to_string(),
            self.method.clone(),
            self.link_assumptions.clone(),
            self.n_samples.to_string(),
            self.scope.as_str().to_string(),
            self.context.clone(),
            fmt_opt(self.tpr),
            fmt_opt(self.fpr),
            fmt_opt(self.em_precision),
            fmt_opt(self.em_recall),
            self.test_count.map(|c| c.to_string()).unwrap_or_else(|| MISSING.into()),
            self.failed.to_string(),
        ]
    }

    fn parse(rec: &csv::StringRecord) -> Result<Self> {
        if rec.len() != METRICS_HEADER.len() {
            return Err(Error::Parse(format!("metrics row has {} fields", rec.len())));
        }
        let int = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::Parse(format!("bad integer {s:?}"))) };
        Ok(MetricsRow {
            trial_id: int(&rec[0])?,
            method: rec[1].to_string(),
            link_assumptions: rec[2].to_string(),
            n_samples: int(&rec[3])?,
            scope: rec[4].parse()?,
            context: rec[5].to_string(),
            tpr: parse_opt(&rec[6])?,
            fpr: parse_opt(&rec[7])?,
            em_precision: parse_opt(&rec[8])?,
            em_recall: parse_opt(&rec[9])?,
            test_count: if &rec[10] == MISSING {
                None
            } else {
                Some(int(&rec[10])?)
            },
            failed: rec[11]
                .parse()
                .map_err(|_| Error::Parse(format!("bad boolean {:?}", &rec[11])))?,
        })
    }
}

pub fn write_metrics<W: Write>(w: W, rows: &[MetricsRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(METRICS_HEADER)?;
    for row in rows {
        out.write_record(row.record())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(r: R) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(METRICS_HEADER.iter().copied()) {
        return Err(Error::Parse("unexpected metrics header".into()));
    }
    rdr.records().map(|rec| MetricsRow::parse(&rec?)).collect()
}
