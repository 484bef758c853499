//! Conditional-independence tests behind one interface.
//!
//! Column ids follow the graph layout: `0..D` are the system variables and
//! `D` is the context indicator `R`.

mod mixed;
mod moments;
mod parcorr;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{DirectedMixedGraph, SeparationOracle, SeparationQuery};
use moments::Moments;

pub use mixed::mixed_context_test;
pub use parcorr::partial_correlation_test;

/// Minimum rows beyond the conditioning-set size for a conclusive test.
pub const MIN_SAMPLE_MARGIN: usize = 10;

/// `X ⊥ Y | Z`, optionally restricted to rows with `R = context`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CiQuery {
    pub x: usize,
    pub y: usize,
    pub z: BTreeSet<usize>,
    pub context: Option<u32>,
}

impl CiQuery {
    pub fn pooled(x: usize, y: usize, z: impl IntoIterator<Item = usize>) -> Self {
        CiQuery {
            x,
            y,
            z: z.into_iter().collect(),
            context: None,
        }
    }

    pub fn in_context(x: usize, y: usize, z: impl IntoIterator<Item = usize>, r: u32) -> Self {
        CiQuery {
            x,
            y,
            z: z.into_iter().collect(),
            context: Some(r),
        }
    }

    /// Checks the structural invariants against `n_columns` columns whose
    /// last one is `R`.
    pub fn validate(&self, n_columns: usize) -> Result<()> {
        let r = n_columns - 1;
        if self.x >= n_columns || self.y >= n_columns || self.z.iter().any(|&v| v >= n_columns) {
            return Err(Error::InvalidQuery(format!("column out of range in {self:?}")));
        }
        if self.x == self.y {
            return Err(Error::InvalidQuery("x and y must differ".into()));
        }
        if self.z.contains(&self.x) || self.z.contains(&self.y) {
            return Err(Error::InvalidQuery("conditioning set contains x or y".into()));
        }
        if self.context.is_some() && (self.x == r || self.y == r || self.z.contains(&r)) {
            return Err(Error::InvalidQuery(
                "a context-restricted query must not involve R".into(),
            ));
        }
        Ok(())
    }

    /// Same query with `x` and `y` in ascending order.
    pub fn normalized(&self) -> Self {
        let mut q = self.clone();
        if q.x > q.y {
            std::mem::swap(&mut q.x, &mut q.y);
        }
        q
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    Oracle,
    PartialCorrelation,
    Mixed,
}

impl EngineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineKind::Oracle => "oracle",
            EngineKind::PartialCorrelation => "parcorr",
            EngineKind::Mixed => "mixed",
        }
    }
}

/// Outcome of one test. Oracle verdicts carry p = 1 (separated) or p = 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiVerdict {
    pub p_value: f64,
    pub effective_n: usize,
    pub inconclusive: bool,
    pub engine: EngineKind,
}

impl CiVerdict {
    pub fn oracle(independent: bool) -> Self {
        CiVerdict {
            p_value: if independent { 1.0 } else { 0.0 },
            effective_n: 0,
            inconclusive: false,
            engine: EngineKind::Oracle,
        }
    }

    pub fn inconclusive(effective_n: usize, engine: EngineKind) -> Self {
        CiVerdict {
            p_value: f64::NAN,
            effective_n,
            inconclusive: true,
            engine,
        }
    }

    /// Affirmative independence at level `alpha`. Inconclusive verdicts are
    /// never independent.
    pub fn independent(&self, alpha: f64) -> bool {
        !self.inconclusive && self.p_value > alpha
    }
}

/// A source of CI verdicts over `n_system` variables plus `R`.
pub trait CiTest: Sync {
    fn test(&self, q: &CiQuery) -> Result<CiVerdict>;
    fn n_system(&self) -> usize;
    fn contexts(&self) -> Vec<u32>;
}

/// Ground-truth graphs answering queries by separation.
#[derive(Debug)]
pub struct OracleContext {
    descriptive: BTreeMap<u32, DirectedMixedGraph>,
    union: DirectedMixedGraph,
    descriptive_oracles: BTreeMap<u32, SeparationOracle>,
    union_oracle: SeparationOracle,
}

impl OracleContext {
    pub fn new(descriptive: BTreeMap<u32, DirectedMixedGraph>, union: DirectedMixedGraph) -> Result<Self> {
        if union.context_node() != Some(union.n_nodes() - 1) {
            return Err(Error::InvalidArgument(
                "oracle graphs need the context indicator as last node".into(),
            ));
        }
        if descriptive.values().any(|g| !g.same_nodes(&union)) {
            return Err(Error::NodeSetMismatch);
        }
        let descriptive_oracles = descriptive
            .iter()
            .map(|(&r, g)| (r, SeparationOracle::new(g)))
            .collect();
        Ok(OracleContext {
            union_oracle: SeparationOracle::new(&union),
            descriptive_oracles,
            descriptive,
            union,
        })
    }

    pub fn descriptive(&self) -> &BTreeMap<u32, DirectedMixedGraph> {
        &self.descriptive
    }

    pub fn union(&self) -> &DirectedMixedGraph {
        &self.union
    }
}

/// Pooled queries use σ-separation on the union graph; a query in context
/// `r` uses d-separation in the descriptive graph of `r` given `Z ∪ {R}`.
pub fn oracle_test(ctx: &OracleContext, q: &CiQuery) -> Result<CiVerdict> {
    q.validate(ctx.union.n_nodes())?;
    let r_node = ctx.union.n_nodes() - 1;
    match q.context {
        None => {
            SeparationQuery::new(q.x, q.y, q.z.iter().copied()).validate(&ctx.union)?;
            Ok(CiVerdict::oracle(ctx.union_oracle.separated(q.x, q.y, &q.z, true)))
        }
        Some(r) => {
            let oracle = ctx
                .descriptive_oracles
                .get(&r)
                .ok_or_else(|| Error::InvalidQuery(format!("unknown context {r}")))?;
            if !oracle.is_acyclic() {
                return Err(Error::CyclicGraph);
            }
            let mut z = q.z.clone();
            z.insert(r_node);
            Ok(CiVerdict::oracle(oracle.separated(q.x, q.y, &z, false)))
        }
    }
}

impl CiTest for OracleContext {
    fn test(&self, q: &CiQuery) -> Result<CiVerdict> {
        oracle_test(self, q)
    }

    fn n_system(&self) -> usize {
        self.union.n_nodes() - 1
    }

    fn contexts(&self) -> Vec<u32> {
        self.descriptive.keys().copied().collect()
    }
}

/// Finite-sample engine over a dataset. Sample moments for the pooled rows
/// and for each context are computed once on first use.
pub struct DataEngine<'a> {
    data: &'a Dataset,
    pooled: OnceLock<Moments>,
    per_context: BTreeMap<u32, OnceLock<Moments>>,
}

impl<'a> DataEngine<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        DataEngine {
            data,
            pooled: OnceLock::new(),
            per_context: data.contexts().into_iter().map(|r| (r, OnceLock::new())).collect(),
        }
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub(crate) fn moments(&self, context: Option<u32>) -> Result<&Moments> {
        match context {
            None => Ok(self.pooled.get_or_init(|| Moments::pooled(self.data))),
            Some(r) => {
                let cell = self
                    .per_context
                    .get(&r)
                    .ok_or_else(|| Error::InvalidQuery(format!("no rows in context {r}")))?;
                Ok(cell.get_or_init(|| Moments::restricted(self.data, r)))
            }
        }
    }
}

/// Routing rule for data queries: the mixed test when `R` is an endpoint,
/// partial correlation otherwise.
pub fn dispatch(engine: &DataEngine<'_>, q: &CiQuery) -> Result<CiVerdict> {
    let r = engine.data.context_column();
    if q.x == r || q.y == r {
        mixed::mixed_with_engine(engine, q)
    } else {
        parcorr::parcorr_with_engine(engine, q)
    }
}

impl CiTest for DataEngine<'_> {
    fn test(&self, q: &CiQuery) -> Result<CiVerdict> {
        dispatch(self, q)
    }

    fn n_system(&self) -> usize {
        self.data.n_system()
    }

    fn contexts(&self) -> Vec<u32> {
        self.data.contexts()
    }
}

/// CLI-level engine selector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CitKind {
    Oracle,
    #[default]
    ParcorrMixed,
}

impl std::str::FromStr for CitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(CitKind::Oracle),
            "parcorr-mixed" => Ok(CitKind::ParcorrMixed),
            other => Err(Error::Parse(format!("unknown CI engine {other:?}"))),
        }
    }
}

impl std::fmt::Display for CitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CitKind::Oracle => "oracle",
            CitKind::ParcorrMixed => "parcorr-mixed",
        })
    }
}

/// One executed test, as written to the optional test log.
#[derive(Clone, Debug, PartialEq)]
pub struct TestRecord {
    pub query: CiQuery,
    pub verdict: CiVerdict,
}

/// Writes `x,y,z,context,engine,p,effective_n` rows; `z` is `;`-separated
/// column names and a missing context or p-value is an empty field.
pub fn write_test_log<W: Write>(w: W, names: &[String], records: &[TestRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "y", "z", "context", "engine", "p", "effective_n"])?;
    for rec in records {
        let q = &rec.query;
        let z: Vec<&str> = q.z.iter().map(|&v| names[v].as_str()).collect();
        let p = if rec.verdict.p_value.is_nan() {
            String::new()
        } else {
            rec.verdict.p_value.to_string()
        };
        out.write_record([
            names[q.x].clone(),
            names[q.y].clone(),
            z.join(";"),
            q.context.map(|r| r.to_string()).unwrap_or_default(),
            rec.verdict.engine.as_str().to_string(),
            p,
            rec.verdict.effective_n.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// X=0 -> R=3 <- T=1, T -> Y=2 only in context 1, R -> Y.
    fn fig2_left() -> OracleContext {
        use crate::graph::Node;
        let mut c0 = DirectedMixedGraph::new(vec![
            Node::new(0, "X"),
            Node::new(1, "T"),
            Node::new(2, "Y"),
            Node::context(3, "R"),
        ])
        .unwrap();
        c0.add_directed(0, 3).unwrap();
        c0.add_directed(1, 3).unwrap();
        c0.add_directed(3, 2).unwrap();
        let mut c1 = c0.clone();
        c1.add_directed(1, 2).unwrap();
        let union = c1.clone();
        OracleContext::new([(0, c0), (1, c1)].into_iter().collect(), union).unwrap()
    }

    #[test]
    fn oracle_context_queries() {
        let ctx = fig2_left();
        assert!(!oracle_test(&ctx, &CiQuery::in_context(0, 1, [], 0))
            .unwrap()
            .independent(0.05));
        assert!(oracle_test(&ctx, &CiQuery::in_context(1, 2, [], 0))
            .unwrap()
            .independent(0.05));
        assert!(!oracle_test(&ctx, &CiQuery::in_context(1, 2, [], 1))
            .unwrap()
            .independent(0.05));
        assert!(oracle_test(&ctx, &CiQuery::pooled(0, 1, [])).unwrap().independent(0.05));
        assert!(!oracle_test(&ctx, &CiQuery::pooled(0, 1, [3]))
            .unwrap()
            .independent(0.05));
    }

    #[test]
    fn query_validation() {
        assert!(CiQuery::pooled(0, 0, []).validate(4).is_err());
        assert!(CiQuery::pooled(0, 1, [0]).validate(4).is_err());
        assert!(CiQuery::in_context(0, 3, [], 1).validate(4).is_err());
        assert!(CiQuery::in_context(0, 1, [3], 1).validate(4).is_err());
        assert!(CiQuery::pooled(0, 7, []).validate(4).is_err());
        assert!(CiQuery::pooled(0, 3, [1]).validate(4).is_ok());
    }

    #[test]
    fn inconclusive_is_never_independent() {
        let v = CiVerdict::inconclusive(3, EngineKind::PartialCorrelation);
        assert!(!v.independent(0.0));
    }

    #[test]
    fn routing() {
        let data = Dataset::new(
            vec![
                vec![0.1, 0.4, -0.3, 0.9, 1.2, -1.0],
                vec![1.0, 0.2, 0.3, -0.5, 0.1, 0.7],
            ],
            vec![1, 2, 1, 2, 1, 2],
        )
        .unwrap();
        let engine = DataEngine::new(&data);
        assert_eq!(
            dispatch(&engine, &CiQuery::pooled(2, 0, [])).unwrap().engine,
            EngineKind::Mixed
        );
        assert_eq!(
            dispatch(&engine, &CiQuery::pooled(0, 1, [])).unwrap().engine,
            EngineKind::PartialCorrelation
        );
    }

    #[test]
    fn test_log_format() {
        let names: Vec<String> = ["X1", "X2", "X3", "R"].iter().map(|s| s.to_string()).collect();
        let records = vec![TestRecord {
            query: CiQuery::in_context(0, 1, [2], 2),
            verdict: CiVerdict {
                p_value: 0.5,
                effective_n: 40,
                inconclusive: false,
                engine: EngineKind::PartialCorrelation,
            },
        }];
        let mut buf = Vec::new();
        write_test_log(&mut buf, &names, &records).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "x,y,z,context,engine,p,effective_n\nX1,X2,X3,2,parcorr,0.5,40\n"
        );
    }
}
