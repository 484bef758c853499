//! Ground-truth multi-context linear SCMs.
//!
//! A random linear acyclic base model is drawn, one variable is promoted to
//! context indicator `R` (thresholded into categories when sampling), and
//! each non-base context receives a sequence of edge edits. Every node whose
//! mechanism is edited becomes a child of `R` in the union graph.

mod sample;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    ancestors, is_acyclic, labeled_union, strongly_connected_components, union_of_graphs, DirectedMixedGraph,
};

pub use sample::{sample, sample_with_noise, threshold_indicator, NoiseKind};

/// Coefficients used throughout the simulation study.
pub const DEFAULT_COEFF_POOL: [f64; 6] = [1.8, 1.5, 1.2, -1.2, -1.5, -1.8];
pub const DEFAULT_INDICATOR_NOISE: f64 = 0.2;
pub const DEFAULT_EDIT_ATTEMPTS: usize = 10;
pub const DEFAULT_BASE_ATTEMPTS: usize = 10;

/// Square coefficient matrix; `get(i, j)` is the weight of `X_j` in the
/// mechanism of `X_i`. Serialized dense row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoeffMatrix(Vec<Vec<f64>>);

impl CoeffMatrix {
    pub fn zeros(n: usize) -> Self {
        CoeffMatrix(vec![vec![0.0; n]; n])
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("coefficient matrix must be square".into()));
        }
        Ok(CoeffMatrix(rows))
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.0[i][j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.0[i]
    }

    pub fn parents(&self, i: usize) -> Vec<usize> {
        (0..self.n()).filter(|&j| self.0[i][j] != 0.0).collect()
    }

    pub fn children(&self, j: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.0[i][j] != 0.0).collect()
    }

    pub fn nonzeros(&self) -> usize {
        self.0.iter().flatten().filter(|v| **v != 0.0).count()
    }

    fn permuted(&self, new_of_old: &[usize]) -> Self {
        let n = self.n();
        let mut out = CoeffMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.0[new_of_old[i]][new_of_old[j]] = self.0[i][j];
            }
        }
        out
    }

    /// Mechanism graph: `j -> i` for every nonzero `get(i, j)`.
    pub fn mechanism_graph(&self, template: &DirectedMixedGraph) -> DirectedMixedGraph {
        let mut g = template.empty_like();
        for i in 0..self.n() {
            for j in self.parents(i) {
                g.add_directed(j, i).expect("indices within template");
            }
        }
        g
    }
}

/// Linear acyclic base model `X_i = sum_j a_ij X_j + c_i eta_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseScm {
    pub coeff: CoeffMatrix,
    pub noise_scale: Vec<f64>,
    /// Position of `R` once assigned; always the last index.
    pub indicator_index: Option<usize>,
    /// Index the indicator had in the originally generated ordering.
    pub source_index: Option<usize>,
    pub density: f64,
}

impl BaseScm {
    pub fn n_vars(&self) -> usize {
        self.coeff.n()
    }

    fn indicator(&self) -> Result<usize> {
        self.indicator_index
            .ok_or_else(|| Error::InvalidArgument("no context indicator assigned".into()))
    }
}

/// Number of nonzero coefficients for `system_vars` = D and density `s`.
pub fn target_link_count(system_vars: usize, density: f64) -> usize {
    (density * (system_vars * (system_vars + 1)) as f64).round() as usize
}

/// Random linear acyclic model over `D + 1` variables with exactly
/// `round(s * D * (D + 1))` coefficients drawn from `pool`, placed under a
/// random topological order.
pub fn generate_base<R: Rng + ?Sized>(system_vars: usize, density: f64, pool: &[f64], rng: &mut R) -> Result<BaseScm> {
    if system_vars < 2 {
        return Err(Error::InvalidArgument("need at least two system variables".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidArgument(format!("density {density} not in (0, 1]")));
    }
    if pool.is_empty() || pool.iter().any(|&a| a == 0.0 || !a.is_finite()) {
        return Err(Error::InvalidArgument(
            "coefficient pool must be nonempty, finite and nonzero".into(),
        ));
    }
    let n = system_vars + 1;
    let links = target_link_count(system_vars, density);
    let max_links = n * (n - 1) / 2;
    if links > max_links {
        return Err(Error::InvalidArgument(format!(
            "density {density} asks for {links} links but an acyclic graph on {n} nodes holds at most {max_links}"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut candidates: Vec<(usize, usize)> = Vec::with_capacity(max_links);
    for a in 0..n {
        for b in (a + 1)..n {
            candidates.push((order[a], order[b]));
        }
    }
    candidates.shuffle(rng);

    let mut coeff = CoeffMatrix::zeros(n);
    for &(parent, child) in &candidates[..links] {
        let a = *pool.choose(rng).expect("pool nonempty");
        coeff.set(child, parent, a);
    }
    Ok(BaseScm {
        coeff,
        noise_scale: vec![1.0; n],
        indicator_index: None,
        source_index: None,
        density,
    })
}

/// Picks the indicator uniformly and relabels variables so that it is the
/// last one; its noise scale becomes `indicator_noise`.
pub fn assign_indicator<R: Rng + ?Sized>(base: &BaseScm, indicator_noise: f64, rng: &mut R) -> Result<BaseScm> {
    let n = base.n_vars();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "a context indicator needs at least one other variable".into(),
        ));
    }
    let k = rng.random_range(0..n);
    let new_of_old: Vec<usize> = (0..n)
        .map(|i| match i.cmp(&k) {
            std::cmp::Ordering::Less => i,
            std::cmp::Ordering::Equal => n - 1,
            std::cmp::Ordering::Greater => i - 1,
        })
        .collect();
    let mut noise_scale = vec![0.0; n];
    for i in 0..n {
        noise_scale[new_of_old[i]] = base.noise_scale[i];
    }
    noise_scale[n - 1] = indicator_noise;
    Ok(BaseScm {
        coeff: base.coeff.permuted(&new_of_old),
        noise_scale,
        indicator_index: Some(n - 1),
        source_index: Some(k),
        density: base.density,
    })
}

/// Context count, balance factor and the adjusted quantile levels
/// `(i / n_contexts)^balance` used as thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorConfig {
    pub n_contexts: usize,
    pub balance: f64,
    pub quantile_levels: Vec<f64>,
}

impl IndicatorConfig {
    pub fn new(n_contexts: usize, balance: f64) -> Result<Self> {
        if n_contexts < 2 {
            return Err(Error::InvalidArgument("need at least two contexts".into()));
        }
        if !(balance > 0.0 && balance.is_finite()) {
            return Err(Error::InvalidArgument(format!("balance {balance} must be positive")));
        }
        let quantile_levels = (1..n_contexts)
            .map(|i| (i as f64 / n_contexts as f64).powf(balance))
            .collect();
        Ok(IndicatorConfig {
            n_contexts,
            balance,
            quantile_levels,
        })
    }

    /// Context values, `1..=n_contexts`.
    pub fn contexts(&self) -> Vec<u32> {
        (1..=self.n_contexts as u32).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditOp {
    Add,
    Remove,
    Flip,
}

impl std::str::FromStr for EditOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "add" => Ok(EditOp::Add),
            "remove" => Ok(EditOp::Remove),
            "flip" => Ok(EditOp::Flip),
            other => Err(Error::Parse(format!("unknown edit op {other:?}"))),
        }
    }
}

/// One edit: `target` is the randomly chosen variable, `partner` the other
/// end of the edited edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextEdit {
    pub op: EditOp,
    pub target: usize,
    pub partner: usize,
}

impl ContextEdit {
    /// Nodes whose mechanism changes, which become children of `R`.
    pub fn changed_nodes(&self) -> Vec<usize> {
        match self.op {
            EditOp::Add | EditOp::Remove => vec![self.partner],
            EditOp::Flip => vec![self.target, self.partner],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CycleMode {
    /// The union graph stays acyclic.
    Forbid,
    /// Every accepted edit leaves at least one union cycle.
    Require,
    /// As `Require`, with every union cycle an edge flip (strongly connected
    /// components of size at most two) and no union cycle through an
    /// ancestor of `R`.
    RequireLen2,
}

impl std::str::FromStr for CycleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "forbid" => Ok(CycleMode::Forbid),
            "require" => Ok(CycleMode::Require),
            "require-len2" | "require_len2" => Ok(CycleMode::RequireLen2),
            other => Err(Error::Parse(format!("unknown cycle mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditConfig {
    pub n_change: usize,
    pub ops: Vec<EditOp>,
    pub cycles: CycleMode,
    pub coeff_pool: Vec<f64>,
    pub max_attempts: usize,
}

impl EditConfig {
    pub fn new(n_change: usize, ops: &[EditOp], cycles: CycleMode) -> Self {
        let mut ops = ops.to_vec();
        ops.sort();
        ops.dedup();
        EditConfig {
            n_change,
            ops,
            cycles,
            coeff_pool: DEFAULT_COEFF_POOL.to_vec(),
            max_attempts: DEFAULT_EDIT_ATTEMPTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_change == 0 {
            return Err(Error::InvalidArgument("n_change must be at least 1".into()));
        }
        if self.ops.is_empty() {
            return Err(Error::InvalidArgument("no edit operations allowed".into()));
        }
        if self.cycles != CycleMode::Forbid && self.ops == [EditOp::Remove] {
            return Err(Error::Config("remove-only edits cannot create union cycles".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidArgument("max_attempts must be positive".into()));
        }
        Ok(())
    }
}

/// Base model plus per-context coefficient matrices. Context 1 keeps the base
/// mechanisms; contexts `2..=n` are edited copies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiContextScm {
    pub base: BaseScm,
    pub indicator: IndicatorConfig,
    pub per_context_coeff: BTreeMap<u32, CoeffMatrix>,
    /// `R -> node` edges introduced by each context's edits.
    pub r_child_edges: BTreeMap<u32, BTreeSet<usize>>,
    pub edits: BTreeMap<u32, Vec<ContextEdit>>,
}

impl MultiContextScm {
    /// Unedited model: every context shares the base mechanisms.
    pub fn unedited(base: BaseScm, indicator: IndicatorConfig) -> Result<Self> {
        base.indicator()?;
        let per_context_coeff = indicator
            .contexts()
            .into_iter()
            .map(|r| (r, base.coeff.clone()))
            .collect();
        let r_child_edges = indicator.contexts().into_iter().map(|r| (r, BTreeSet::new())).collect();
        let edits = indicator.contexts().into_iter().map(|r| (r, Vec::new())).collect();
        Ok(MultiContextScm {
            base,
            indicator,
            per_context_coeff,
            r_child_edges,
            edits,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.base.n_vars()
    }

    pub fn system_vars(&self) -> usize {
        self.n_vars() - 1
    }

    pub fn indicator_index(&self) -> usize {
        self.n_vars() - 1
    }

    pub fn contexts(&self) -> Vec<u32> {
        self.per_context_coeff.keys().copied().collect()
    }

    pub fn template(&self) -> DirectedMixedGraph {
        DirectedMixedGraph::with_context(self.system_vars())
    }

    /// Edges incident to `R` in the union graph: its parents, its base
    /// children and every child added by an edit.
    pub fn union_r_edges(&self) -> BTreeSet<(usize, usize)> {
        let r = self.indicator_index();
        let mut edges = BTreeSet::new();
        for coeff in self.per_context_coeff.values() {
            for p in coeff.parents(r) {
                edges.insert((p, r));
            }
            for c in coeff.children(r) {
                edges.insert((r, c));
            }
        }
        for children in self.r_child_edges.values() {
            for &c in children {
                edges.insert((r, c));
            }
        }
        edges
    }

    /// Per-context graph: the context's coefficient pattern among system
    /// variables plus all union edges involving `R`.
    pub fn context_graph(&self, ctx: u32) -> Result<DirectedMixedGraph> {
        let coeff = self
            .per_context_coeff
            .get(&ctx)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown context {ctx}")))?;
        let r = self.indicator_index();
        let mut g = self.template();
        for i in 0..self.n_vars() {
            if i == r {
                continue;
            }
            for j in coeff.parents(i) {
                if j != r {
                    g.add_directed(j, i)?;
                }
            }
        }
        for (a, b) in self.union_r_edges() {
            g.add_directed(a, b)?;
        }
        Ok(g)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ScmFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ScmFile = serde_json::from_str(s)?;
        file.try_into()
    }
}

/// On-disk SCM document with `coeff`, `noise_scale`, `indicator_index` and
/// `per_context_coeff` at the top level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScmFile {
    pub coeff: CoeffMatrix,
    pub noise_scale: Vec<f64>,
    pub indicator_index: usize,
    pub per_context_coeff: BTreeMap<u32, CoeffMatrix>,
    pub source_index: Option<usize>,
    pub density: f64,
    pub indicator: IndicatorConfig,
    pub r_child_edges: BTreeMap<u32, BTreeSet<usize>>,
    pub edits: BTreeMap<u32, Vec<ContextEdit>>,
}

impl From<&MultiContextScm> for ScmFile {
    fn from(m: &MultiContextScm) -> Self {
        ScmFile {
            coeff: m.base.coeff.clone(),
            noise_scale: m.base.noise_scale.clone(),
            indicator_index: m.indicator_index(),
            per_context_coeff: m.per_context_coeff.clone(),
            source_index: m.base.source_index,
            density: m.base.density,
            indicator: m.indicator.clone(),
            r_child_edges: m.r_child_edges.clone(),
            edits: m.edits.clone(),
        }
    }
}

impl TryFrom<ScmFile> for MultiContextScm {
    type Error = Error;

    fn try_from(f: ScmFile) -> Result<Self> {
        let n = f.coeff.n();
        if f.indicator_index + 1 != n || f.noise_scale.len() != n {
            return Err(Error::Parse(
                "indicator must be the last variable and noise_scale must match".into(),
            ));
        }
        if f.per_context_coeff.values().any(|c| c.n() != n) {
            return Err(Error::Parse("per-context matrices must match the base size".into()));
        }
        Ok(MultiContextScm {
            base: BaseScm {
                coeff: f.coeff,
                noise_scale: f.noise_scale,
                indicator_index: Some(f.indicator_index),
                source_index: f.source_index,
                density: f.density,
            },
            indicator: f.indicator,
            per_context_coeff: f.per_context_coeff,
            r_child_edges: f.r_child_edges,
            edits: f.edits,
        })
    }
}

/// Result of the executable assumption checks on a generated model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Every per-context graph is a DAG.
    pub weak_context_acyclic: bool,
    /// Additionally, no union cycle passes through an ancestor of `R`.
    pub strong_context_acyclic: bool,
    /// Nodes that are not union children of `R` keep their union parents in
    /// every context.
    pub weak_context_sufficient: bool,
    /// Linear per-context mechanisms switched only by `R` hold by
    /// construction, as does the absence of hidden confounders.
    pub strong_context_sufficient: bool,
    pub causally_sufficient: bool,
    pub union_acyclic: bool,
    pub max_union_cycle_component: usize,
}

impl AssumptionReport {
    /// Hypotheses under which the adaptive search is sound.
    pub fn supports_soundness(&self) -> bool {
        self.weak_context_acyclic
            && self.strong_context_acyclic
            && self.weak_context_sufficient
            && self.max_union_cycle_component <= 2
    }
}

pub fn check_assumptions(scm: &MultiContextScm) -> Result<AssumptionReport> {
    let truth = ground_truth(scm)?;
    let r = scm.indicator_index();
    let weak_acyclic = truth.descriptive.values().all(is_acyclic);
    let comps = strongly_connected_components(&truth.union);
    let max_comp = comps.iter().map(Vec::len).max().unwrap_or(0);
    let cyclic_nodes: BTreeSet<usize> = comps.iter().filter(|c| c.len() > 1).flatten().copied().collect();
    let anc_r = ancestors(&truth.union, r)?;
    let strong_acyclic = weak_acyclic && cyclic_nodes.is_disjoint(&anc_r);

    let mut weak_sufficient = true;
    for y in 0..scm.n_vars() {
        if y == r || truth.union.has_directed(r, y) {
            continue;
        }
        let union_pa = truth.union.parents(y);
        if truth.descriptive.values().any(|g| g.parents(y) != union_pa) {
            weak_sufficient = false;
        }
    }
    let changed_are_children = (0..scm.n_vars()).filter(|&y| y != r).all(|y| {
        let rows: Vec<&[f64]> = scm.per_context_coeff.values().map(|c| c.row(y)).collect();
        rows.windows(2).all(|w| w[0] == w[1]) || truth.union.has_directed(r, y)
    });

    Ok(AssumptionReport {
        weak_context_acyclic: weak_acyclic,
        strong_context_acyclic: strong_acyclic,
        weak_context_sufficient: weak_sufficient && changed_are_children,
        strong_context_sufficient: changed_are_children,
        causally_sufficient: true,
        union_acyclic: max_comp <= 1,
        max_union_cycle_component: max_comp,
    })
}

/// Ground-truth graphs of a generated model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub descriptive: BTreeMap<u32, DirectedMixedGraph>,
    pub physical: BTreeMap<u32, DirectedMixedGraph>,
    pub union: DirectedMixedGraph,
    pub labeled_union: DirectedMixedGraph,
}

impl GroundTruth {
    /// Directed edges involving the indicator, as known links.
    pub fn r_edges(&self) -> BTreeSet<(usize, usize)> {
        let r = match self.union.context_node() {
            Some(r) => r,
            None => return BTreeSet::new(),
        };
        self.union
            .edges()
            .filter(|e| e.is_directed() && (e.src == r || e.dst == r))
            .map(|e| (e.src, e.dst))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Descriptive graphs coincide with physical graphs because every mechanism
/// change is an explicit switch on `R` with injective linear mechanisms.
pub fn ground_truth(scm: &MultiContextScm) -> Result<GroundTruth> {
    let mut descriptive = BTreeMap::new();
    for r in scm.contexts() {
        descriptive.insert(r, scm.context_graph(r)?);
    }
    let graphs: Vec<DirectedMixedGraph> = descriptive.values().cloned().collect();
    let union = union_of_graphs(&graphs)?;
    let labeled = if descriptive.len() >= 2 {
        labeled_union(&descriptive)?
    } else {
        union.clone()
    };
    Ok(GroundTruth {
        physical: descriptive.clone(),
        descriptive,
        union,
        labeled_union: labeled,
    })
}

fn propose_edit<R: Rng + ?Sized>(
    coeff: &CoeffMatrix,
    indicator: usize,
    cfg: &EditConfig,
    rng: &mut R,
) -> Option<(ContextEdit, CoeffMatrix)> {
    let n = coeff.n();
    let system: Vec<usize> = (0..n).filter(|&v| v != indicator).collect();
    let target = *system.choose(rng)?;
    let op = *cfg.ops.choose(rng)?;
    let mut next = coeff.clone();
    let edit = match op {
        EditOp::Add => {
            let partners: Vec<usize> = system
                .iter()
                .copied()
                .filter(|&p| p != target && coeff.get(p, target) == 0.0 && coeff.get(target, p) == 0.0)
                .collect();
            let partner = *partners.choose(rng)?;
            let a = *cfg.coeff_pool.choose(rng)?;
            next.set(partner, target, a);
            ContextEdit { op, target, partner }
        }
        EditOp::Remove | EditOp::Flip => {
            let partners: Vec<usize> = coeff.children(target).into_iter().filter(|&p| p != indicator).collect();
            let partner = *partners.choose(rng)?;
            let a = coeff.get(partner, target);
            next.set(partner, target, 0.0);
            if op == EditOp::Flip {
                next.set(target, partner, a);
            }
            ContextEdit { op, target, partner }
        }
    };
    Some((edit, next))
}

fn acceptable(candidate: &MultiContextScm, cycles: CycleMode) -> Result<bool> {
    for r in candidate.contexts() {
        if !is_acyclic(&candidate.context_graph(r)?) {
            return Ok(false);
        }
    }
    let report = check_assumptions(candidate)?;
    Ok(match cycles {
        CycleMode::Forbid => report.union_acyclic,
        CycleMode::Require => !report.union_acyclic,
        CycleMode::RequireLen2 => {
            !report.union_acyclic && report.max_union_cycle_component <= 2 && report.strong_context_acyclic
        }
    })
}

/// Applies `n_change` sequential edits to every non-base context. Each edit
/// gets `max_attempts` proposals; exhausting them yields
/// [`Error::GenerationFailed`].
pub fn edit_contexts<R: Rng + ?Sized>(
    base: &BaseScm,
    indicator: &IndicatorConfig,
    cfg: &EditConfig,
    rng: &mut R,
) -> Result<MultiContextScm> {
    cfg.validate()?;
    let ind = base.indicator()?;
    let mut scm = MultiContextScm::unedited(base.clone(), indicator.clone())?;

    for ctx in indicator.contexts().into_iter().skip(1) {
        for _ in 0..cfg.n_change {
            let mut accepted = false;
            for _ in 0..cfg.max_attempts {
                let current = &scm.per_context_coeff[&ctx];
                let Some((edit, coeff)) = propose_edit(current, ind, cfg, rng) else {
                    continue;
                };
                let mut candidate = scm.clone();
                candidate.per_context_coeff.insert(ctx, coeff);
                let children = candidate.r_child_edges.entry(ctx).or_default();
                children.extend(edit.changed_nodes());
                candidate.edits.entry(ctx).or_default().push(edit);
                if acceptable(&candidate, cfg.cycles)? {
                    scm = candidate;
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                return Err(Error::GenerationFailed {
                    attempts: cfg.max_attempts,
                });
            }
        }
    }
    Ok(scm)
}

/// Everything needed to draw one ground-truth model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub system_vars: usize,
    pub density: f64,
    pub coeff_pool: Vec<f64>,
    pub indicator_noise: f64,
    pub n_contexts: usize,
    pub balance: f64,
    pub n_change: usize,
    pub ops: Vec<EditOp>,
    pub cycles: CycleMode,
    pub edit_attempts: usize,
    pub base_attempts: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            system_vars: 7,
            density: 0.4,
            coeff_pool: DEFAULT_COEFF_POOL.to_vec(),
            indicator_noise: DEFAULT_INDICATOR_NOISE,
            n_contexts: 2,
            balance: 1.0,
            n_change: 1,
            ops: vec![EditOp::Remove],
            cycles: CycleMode::Forbid,
            edit_attempts: DEFAULT_EDIT_ATTEMPTS,
            base_attempts: DEFAULT_BASE_ATTEMPTS,
        }
    }
}

impl GeneratorConfig {
    pub fn edit_config(&self) -> EditConfig {
        let mut cfg = EditConfig::new(self.n_change, &self.ops, self.cycles);
        cfg.coeff_pool = self.coeff_pool.clone();
        cfg.max_attempts = self.edit_attempts;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.edit_config().validate()?;
        IndicatorConfig::new(self.n_contexts, self.balance)?;
        if self.base_attempts == 0 {
            return Err(Error::Config("base_attempts must be positive".into()));
        }
        if target_link_count(self.system_vars, self.density) > (self.system_vars + 1) * self.system_vars / 2 {
            return Err(Error::Config(format!(
                "density {} is infeasible for an acyclic graph on {} nodes",
                self.density,
                self.system_vars + 1
            )));
        }
        Ok(())
    }
}

/// Draws fresh base graphs until one admits the requested edits, up to
/// `base_attempts` times.
pub fn generate_scm<R: Rng + ?Sized>(cfg: &GeneratorConfig, rng: &mut R) -> Result<MultiContextScm> {
    cfg.validate()?;
    let indicator = IndicatorConfig::new(cfg.n_contexts, cfg.balance)?;
    let edit_cfg = cfg.edit_config();
    for _ in 0..cfg.base_attempts {
        let base = generate_base(cfg.system_vars, cfg.density, &cfg.coeff_pool, rng)?;
        let base = assign_indicator(&base, cfg.indicator_noise, rng)?;
        match edit_contexts(&base, &indicator, &edit_cfg, rng) {
            Ok(scm) => return Ok(scm),
            Err(Error::GenerationFailed { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::GenerationFailed {
        attempts: cfg.base_attempts,
    })
}
