//! PC-stable based discovery: the adaptive context search and the masked,
//! pooled and intersection baselines.

mod orient;
mod skeleton;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::citest::{CiTest, CitKind, TestRecord};
use crate::error::{Error, Result};
use crate::graph::{labeled_union, strongly_connected_components, union_of_graphs, DirectedMixedGraph};

pub use orient::orient;
pub use skeleton::{pc_stable_skeleton, Sepset, SepsetOrigin, SkeletonResult, SkeletonSpec, TestCache, TestScope};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkMode {
    #[default]
    None,
    RChildren,
    RAll,
}

impl LinkMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkMode::None => "none",
            LinkMode::RChildren => "r-children",
            LinkMode::RAll => "r-all",
        }
    }
}

impl std::str::FromStr for LinkMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(LinkMode::None),
            "r-children" => Ok(LinkMode::RChildren),
            "r-all" => Ok(LinkMode::RAll),
            other => Err(Error::Parse(format!("unknown link assumption {other:?}"))),
        }
    }
}

impl std::fmt::Display for LinkMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Known directed links involving `R`. With `RAll` every other pair with
/// `R` is known to be non-adjacent.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkAssumptions {
    pub mode: LinkMode,
    pub fixed_edges: BTreeSet<(usize, usize)>,
}

impl LinkAssumptions {
    pub fn none() -> Self {
        Self::default()
    }

    /// Selects the known links from the true edges touching `indicator`:
    /// its out-edges for `RChildren`, all of them for `RAll`.
    pub fn from_truth(mode: LinkMode, indicator: usize, r_edges: &BTreeSet<(usize, usize)>) -> Result<Self> {
        if r_edges.iter().any(|&(a, b)| (a == indicator) == (b == indicator)) {
            return Err(Error::InvalidArgument(
                "known links must involve R on exactly one end".into(),
            ));
        }
        let fixed_edges = match mode {
            LinkMode::None => BTreeSet::new(),
            LinkMode::RChildren => r_edges.iter().copied().filter(|&(a, _)| a == indicator).collect(),
            LinkMode::RAll => r_edges.clone(),
        };
        Ok(LinkAssumptions { mode, fixed_edges })
    }

    fn fixed_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.fixed_edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect()
    }

    fn forbidden_pairs(&self, indicator: usize) -> BTreeSet<(usize, usize)> {
        if self.mode != LinkMode::RAll {
            return BTreeSet::new();
        }
        let fixed = self.fixed_pairs();
        (0..indicator)
            .map(|v| (v, indicator))
            .filter(|p| !fixed.contains(p))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Ac,
    Masked,
    Pooled,
    Baseline,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ac, Method::Masked, Method::Pooled, Method::Baseline];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ac => "ac",
            Method::Masked => "masked",
            Method::Pooled => "pooled",
            Method::Baseline => "baseline",
        }
    }

    /// Display label, e.g. `PC-AC`.
    pub fn label(self) -> &'static str {
        match self {
            Method::Ac => "PC-AC",
            Method::Masked => "PC-M",
            Method::Pooled => "PC-P",
            Method::Baseline => "PC-B",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ac" => Ok(Method::Ac),
            "masked" => Ok(Method::Masked),
            "pooled" => Ok(Method::Pooled),
            "baseline" => Ok(Method::Baseline),
            other => Err(Error::Parse(format!("unknown method {other:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    pub alpha: f64,
    pub max_sepset_size: Option<usize>,
    pub method: Method,
    pub link_assumptions: LinkAssumptions,
    pub cit: CitKind,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            alpha: 0.05,
            max_sepset_size: None,
            method: Method::Ac,
            link_assumptions: LinkAssumptions::none(),
            cit: CitKind::ParcorrMixed,
        }
    }
}

impl DiscoveryConfig {
    pub fn new(method: Method, alpha: f64) -> Self {
        DiscoveryConfig {
            method,
            alpha,
            ..Self::default()
        }
    }

    pub fn with_links(mut self, links: LinkAssumptions) -> Self {
        self.link_assumptions = links;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} not in (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// Per-search separating sets: `None` for the pooled search, `Some(r)` for
/// the search of context `r`.
pub type SepsetMap = BTreeMap<Option<u32>, BTreeMap<(usize, usize), Sepset>>;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscoveryResult {
    pub method: Method,
    /// Empty for the pooled method.
    pub context_graphs: BTreeMap<u32, DirectedMixedGraph>,
    pub union_graph: DirectedMixedGraph,
    pub labeled_union: DirectedMixedGraph,
    pub sepsets: SepsetMap,
    /// Distinct CI tests executed.
    pub test_count: usize,
    pub tests: Vec<TestRecord>,
    pub warnings: Vec<String>,
}

impl DiscoveryResult {
    /// Writes `search,x,y,z,origin,level` rows; `search` is a context value
    /// or `pooled`, `z` is `;`-separated node names.
    pub fn write_sepsets_csv<W: Write>(&self, w: W) -> Result<()> {
        let names: Vec<&str> = self.union_graph.nodes().iter().map(|n| n.name.as_str()).collect();
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["search", "x", "y", "z", "origin", "level"])?;
        for (search, map) in &self.sepsets {
            for (&(a, b), s) in map {
                let z: Vec<&str> = s.set.iter().map(|&v| names[v]).collect();
                let origin = match s.origin {
                    SepsetOrigin::Pooled => "pooled".to_string(),
                    SepsetOrigin::Context(r) => format!("context-{r}"),
                    SepsetOrigin::Assumption => "assumption".to_string(),
                };
                out.write_record([
                    search.map(|r| r.to_string()).unwrap_or_else(|| "pooled".into()),
                    names[a].to_string(),
                    names[b].to_string(),
                    z.join(";"),
                    origin,
                    s.level.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn map_contexts<T: Send>(contexts: &[u32], f: impl Fn(u32) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        contexts.par_iter().map(|&r| f(r)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        contexts.iter().map(|&r| f(r)).collect()
    }
}

struct Setup {
    template: DirectedMixedGraph,
    indicator: usize,
    contexts: Vec<u32>,
    fixed_pairs: BTreeSet<(usize, usize)>,
    forbidden: BTreeSet<(usize, usize)>,
}

fn setup(tester: &dyn CiTest, cfg: &DiscoveryConfig, need_contexts: bool) -> Result<Setup> {
    cfg.validate()?;
    let d = tester.n_system();
    let indicator = d;
    let contexts = tester.contexts();
    if need_contexts && contexts.len() < 2 {
        return Err(Error::DegenerateIndicator(format!(
            "{} needs at least two observed contexts",
            cfg.method.label()
        )));
    }
    let links = &cfg.link_assumptions;
    if links
        .fixed_edges
        .iter()
        .any(|&(a, b)| a > d || b > d || (a == indicator) == (b == indicator))
    {
        return Err(Error::InvalidArgument(
            "known links must join R to a system variable".into(),
        ));
    }
    Ok(Setup {
        template: DirectedMixedGraph::with_context(d),
        indicator,
        contexts,
        fixed_pairs: links.fixed_pairs(),
        forbidden: links.forbidden_pairs(indicator),
    })
}

fn unions(context_graphs: &BTreeMap<u32, DirectedMixedGraph>) -> Result<(DirectedMixedGraph, DirectedMixedGraph)> {
    let graphs: Vec<DirectedMixedGraph> = context_graphs.values().cloned().collect();
    let union = union_of_graphs(&graphs)?;
    let labeled = if context_graphs.len() >= 2 {
        labeled_union(context_graphs)?
    } else {
        union.clone()
    };
    Ok((union, labeled))
}

/// Flags union cycles of three or more nodes whose members are all adjacent
/// to `R`: a large cycle can produce spurious `R` adjacencies around it.
fn large_cycle_warnings(union: &DirectedMixedGraph, indicator: usize) -> Vec<String> {
    let mut out = Vec::new();
    for comp in strongly_connected_components(union) {
        if comp.len() >= 3 && comp.iter().all(|&v| v == indicator || union.adjacent(v, indicator)) {
            let names: Vec<&str> = comp.iter().map(|&v| union.node_name(v)).collect();
            let msg = format!(
                "union cycle {{{}}} is fully adjacent to R; its R-edges may be spurious",
                names.join(", ")
            );
            log::warn!("{msg}");
            out.push(msg);
        }
    }
    out
}

/// Adaptive search: one skeleton search per context over `X1..XD, R`, where
/// a candidate set containing `R` is tested on that context's rows and any
/// other set on pooled rows. Pooled verdicts are shared across contexts.
pub fn pc_ac(tester: &dyn CiTest, cfg: &DiscoveryConfig) -> Result<DiscoveryResult> {
    let s = setup(tester, cfg, true)?;
    let nodes: Vec<usize> = (0..=s.indicator).collect();
    let cache = TestCache::new();
    let runs = map_contexts(&s.contexts, |r| {
        let spec = SkeletonSpec {
            nodes: &nodes,
            scope: TestScope::Adaptive {
                context: r,
                indicator: s.indicator,
            },
            alpha: cfg.alpha,
            max_sepset_size: cfg.max_sepset_size,
            fixed: &s.fixed_pairs,
            forbidden: &s.forbidden,
        };
        let sk = pc_stable_skeleton(tester, &spec, &cache)?;
        let g = orient(
            &s.template,
            &sk.adjacencies,
            &sk.sepsets,
            &cfg.link_assumptions.fixed_edges,
        );
        Ok((r, g, sk.sepsets))
    })?;
    let mut context_graphs = BTreeMap::new();
    let mut sepsets = SepsetMap::new();
    for (r, g, sep) in runs {
        context_graphs.insert(r, g);
        sepsets.insert(Some(r), sep);
    }
    let (union_graph, labeled) = unions(&context_graphs)?;
    Ok(DiscoveryResult {
        method: Method::Ac,
        warnings: large_cycle_warnings(&union_graph, s.indicator),
        context_graphs,
        union_graph,
        labeled_union: labeled,
        sepsets,
        test_count: cache.len(),
        tests: cache.records(),
    })
}

fn masked_runs(
    tester: &dyn CiTest,
    cfg: &DiscoveryConfig,
    s: &Setup,
    cache: &TestCache,
) -> Result<Vec<(u32, SkeletonResult)>> {
    let nodes: Vec<usize> = (0..s.indicator).collect();
    let none = BTreeSet::new();
    map_contexts(&s.contexts, |r| {
        let spec = SkeletonSpec {
            nodes: &nodes,
            scope: TestScope::Masked(r),
            alpha: cfg.alpha,
            max_sepset_size: cfg.max_sepset_size,
            fixed: &none,
            forbidden: &none,
        };
        Ok((r, pc_stable_skeleton(tester, &spec, cache)?))
    })
}

/// Masking baseline: an independent search on each context's rows over the
/// system variables only.
pub fn pc_masked(tester: &dyn CiTest, cfg: &DiscoveryConfig) -> Result<DiscoveryResult> {
    let s = setup(tester, cfg, true)?;
    let cache = TestCache::new();
    let mut context_graphs = BTreeMap::new();
    let mut sepsets = SepsetMap::new();
    for (r, sk) in masked_runs(tester, cfg, &s, &cache)? {
        context_graphs.insert(r, orient(&s.template, &sk.adjacencies, &sk.sepsets, &BTreeSet::new()));
        sepsets.insert(Some(r), sk.sepsets);
    }
    let (union_graph, labeled) = unions(&context_graphs)?;
    Ok(DiscoveryResult {
        method: Method::Masked,
        warnings: Vec::new(),
        context_graphs,
        union_graph,
        labeled_union: labeled,
        sepsets,
        test_count: cache.len(),
        tests: cache.records(),
    })
}

fn pooled_run(tester: &dyn CiTest, cfg: &DiscoveryConfig, s: &Setup, cache: &TestCache) -> Result<SkeletonResult> {
    let nodes: Vec<usize> = (0..=s.indicator).collect();
    let spec = SkeletonSpec {
        nodes: &nodes,
        scope: TestScope::Pooled,
        alpha: cfg.alpha,
        max_sepset_size: cfg.max_sepset_size,
        fixed: &s.fixed_pairs,
        forbidden: &s.forbidden,
    };
    pc_stable_skeleton(tester, &spec, cache)
}

/// Pooled baseline: one search over `X1..XD, R` on all rows.
pub fn pc_pooled(tester: &dyn CiTest, cfg: &DiscoveryConfig) -> Result<DiscoveryResult> {
    let s = setup(tester, cfg, false)?;
    let cache = TestCache::new();
    let sk = pooled_run(tester, cfg, &s, &cache)?;
    let g = orient(
        &s.template,
        &sk.adjacencies,
        &sk.sepsets,
        &cfg.link_assumptions.fixed_edges,
    );
    let mut sepsets = SepsetMap::new();
    sepsets.insert(None, sk.sepsets);
    Ok(DiscoveryResult {
        method: Method::Pooled,
        warnings: large_cycle_warnings(&g, s.indicator),
        context_graphs: BTreeMap::new(),
        labeled_union: g.clone(),
        union_graph: g,
        sepsets,
        test_count: cache.len(),
        tests: cache.records(),
    })
}

/// Intersection baseline: per context, the system edges found both by the
/// masked search of that context and by the pooled search, plus the pooled
/// search's `R` edges. Removed pairs take the pooled separating set when
/// the pooled search removed them, otherwise the masked one with `R` added.
pub fn pc_baseline(tester: &dyn CiTest, cfg: &DiscoveryConfig) -> Result<DiscoveryResult> {
    let s = setup(tester, cfg, true)?;
    let masked_cache = TestCache::new();
    let pooled_cache = TestCache::new();
    let masked = masked_runs(tester, cfg, &s, &masked_cache)?;
    let pooled = pooled_run(tester, cfg, &s, &pooled_cache)?;

    let mut context_graphs = BTreeMap::new();
    let mut sepsets = SepsetMap::new();
    for (r, sk) in masked {
        let adjacencies: BTreeSet<(usize, usize)> = pooled
            .adjacencies
            .iter()
            .copied()
            .filter(|&(a, b)| b == s.indicator || sk.adjacencies.contains(&(a, b)))
            .collect();
        let mut seps = BTreeMap::new();
        for a in 0..=s.indicator {
            for b in (a + 1)..=s.indicator {
                if adjacencies.contains(&(a, b)) {
                    continue;
                }
                if let Some(p) = pooled.sepsets.get(&(a, b)) {
                    seps.insert((a, b), p.clone());
                } else if let Some(m) = sk.sepsets.get(&(a, b)) {
                    let mut m = m.clone();
                    m.set.insert(s.indicator);
                    seps.insert((a, b), m);
                }
            }
        }
        context_graphs.insert(
            r,
            orient(&s.template, &adjacencies, &seps, &cfg.link_assumptions.fixed_edges),
        );
        sepsets.insert(Some(r), seps);
    }
    sepsets.insert(None, pooled.sepsets);
    let (union_graph, labeled) = unions(&context_graphs)?;
    Ok(DiscoveryResult {
        method: Method::Baseline,
        warnings: large_cycle_warnings(&union_graph, s.indicator),
        context_graphs,
        union_graph,
        labeled_union: labeled,
        sepsets,
        test_count: masked_cache.len() + pooled_cache.len(),
        tests: {
            let mut t = masked_cache.records();
            t.extend(pooled_cache.records());
            t
        },
    })
}

/// Runs the configured method.
pub fn discover(tester: &dyn CiTest, cfg: &DiscoveryConfig) -> Result<DiscoveryResult> {
    match cfg.method {
        Method::Ac => pc_ac(tester, cfg),
        Method::Masked => pc_masked(tester, cfg),
        Method::Pooled => pc_pooled(tester, cfg),
        Method::Baseline => pc_baseline(tester, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citest::OracleContext;

    fn oracle(edges: &[(usize, usize)], d: usize) -> OracleContext {
        let mut g = DirectedMixedGraph::with_context(d);
        for &(a, b) in edges {
            g.add_directed(a, b).unwrap();
        }
        let ctx = [(1, g.clone()), (2, g.clone())].into_iter().collect();
        OracleContext::new(ctx, g).unwrap()
    }

    #[test]
    fn chain_and_collider_skeletons() {
        // X1 -> X2 -> X3, R isolated
        let o = oracle(&[(0, 1), (1, 2)], 3);
        let res = pc_pooled(&o, &DiscoveryConfig::new(Method::Pooled, 0.05)).unwrap();
        assert_eq!(res.union_graph.skeleton(), [(0, 1), (1, 2)].into_iter().collect());
        assert_eq!(res.sepsets[&None][&(0, 2)].set, [1].into_iter().collect());

        let o = oracle(&[(0, 1), (2, 1)], 3);
        let res = pc_pooled(&o, &DiscoveryConfig::new(Method::Pooled, 0.05)).unwrap();
        assert!(res.sepsets[&None][&(0, 2)].set.is_empty());
        assert!(res.union_graph.has_directed(0, 1) && res.union_graph.has_directed(2, 1));
    }

    #[test]
    fn empty_truth_gives_empty_skeleton() {
        let o = oracle(&[], 3);
        for m in Method::ALL {
            let res = discover(&o, &DiscoveryConfig::new(m, 0.05)).unwrap();
            assert_eq!(res.union_graph.n_edges(), 0, "{m}");
        }
    }

    #[test]
    fn r_all_never_tests_r_pairs() {
        let o = oracle(&[(0, 3), (3, 1), (1, 2)], 3);
        let links = LinkAssumptions::from_truth(LinkMode::RAll, 3, &[(0, 3), (3, 1)].into_iter().collect()).unwrap();
        let cfg = DiscoveryConfig::new(Method::Ac, 0.05).with_links(links);
        let res = pc_ac(&o, &cfg).unwrap();
        assert!(res.tests.iter().all(|t| t.query.x != 3 && t.query.y != 3));
        assert!(res.union_graph.has_directed(0, 3) && res.union_graph.has_directed(3, 1));
    }

    #[test]
    fn invalid_alpha_and_single_context_rejected() {
        let o = oracle(&[], 2);
        assert!(pc_ac(&o, &DiscoveryConfig::new(Method::Ac, 1.5)).is_err());
        let g = DirectedMixedGraph::with_context(2);
        let single = OracleContext::new([(1, g.clone())].into_iter().collect(), g).unwrap();
        assert!(pc_ac(&single, &DiscoveryConfig::new(Method::Ac, 0.05)).is_err());
        assert!(pc_pooled(&single, &DiscoveryConfig::new(Method::Pooled, 0.05)).is_ok());
    }

    #[test]
    fn sepsets_csv_lists_every_removed_pair() {
        let o = oracle(&[(0, 1), (1, 2)], 3);
        let res = pc_pooled(&o, &DiscoveryConfig::new(Method::Pooled, 0.05)).unwrap();
        let mut buf = Vec::new();
        res.write_sepsets_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("search,x,y,z,origin,level\n"));
        assert!(text.contains("pooled,X1,X3,X2,pooled,1\n"));
        assert_eq!(text.lines().count(), 1 + 4);
    }
}
