//! WebAssembly bindings for the browser demo.
//!
//! Every entry point takes a JSON parameter object and returns a JSON
//! document; the plain `*_json` functions carry the logic so they can be
//! tested natively.

use std::collections::BTreeMap;

use context_cd::citest::{CiTest, DataEngine, OracleContext};
use context_cd::discovery::{discover, pc_ac, pc_masked, DiscoveryConfig, LinkAssumptions, LinkMode, Method};
use context_cd::eval::{edgemark_metrics, skeleton_metrics, Scope};
use context_cd::graph::{DirectedMixedGraph, GraphDoc};
use context_cd::scm::{generate_scm, ground_truth, sample, EditOp, GeneratorConfig};
use context_cd::{Dataset, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

fn parse<T: for<'de> Deserialize<'de>>(params: &str) -> Result<T> {
    serde_json::from_str(params).map_err(|e| Error::InvalidArgument(format!("bad parameters: {e}")))
}

fn render<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn docs(graphs: &BTreeMap<u32, DirectedMixedGraph>) -> BTreeMap<u32, GraphDoc> {
    graphs.iter().map(|(r, g)| (*r, GraphDoc::from(g))).collect()
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryParams {
    pub nodes: usize,
    pub density: f64,
    pub n_contexts: usize,
    pub balance: f64,
    pub n_change: usize,
    pub ops: Vec<EditOp>,
    pub n_samples: usize,
    pub method: Method,
    pub links: LinkMode,
    pub alpha: f64,
    pub oracle: bool,
    pub seed: u64,
}

impl Default for DiscoveryParams {
    fn default() -> Self {
        DiscoveryParams {
            nodes: 6,
            density: 0.4,
            n_contexts: 2,
            balance: 1.0,
            n_change: 1,
            ops: vec![EditOp::Remove],
            n_samples: 1000,
            method: Method::Ac,
            links: LinkMode::None,
            alpha: 0.05,
            oracle: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ScoreRow {
    pub graph: String,
    pub scope: &'static str,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub em_precision: Option<f64>,
    pub em_recall: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct DiscoveryReport {
    pub method: &'static str,
    pub context_counts: BTreeMap<u32, usize>,
    pub truth: BTreeMap<u32, GraphDoc>,
    pub truth_union: GraphDoc,
    pub found: BTreeMap<u32, GraphDoc>,
    pub found_union: GraphDoc,
    pub test_count: usize,
    pub scores: Vec<ScoreRow>,
    pub warnings: Vec<String>,
}

fn score(graph: String, scope: Scope, pred: &DirectedMixedGraph, truth: &DirectedMixedGraph) -> Result<ScoreRow> {
    let sk = skeleton_metrics(pred, truth, scope)?;
    let em = edgemark_metrics(pred, truth, scope)?;
    Ok(ScoreRow {
        graph,
        scope: scope.as_str(),
        tpr: sk.tpr,
        fpr: sk.fpr,
        em_precision: em.precision,
        em_recall: em.recall,
    })
}

/// Draws a model, samples it and compares one method's output with the truth.
pub fn run_discovery_json(params: &str) -> Result<String> {
    let p: DiscoveryParams = parse(params)?;
    let gen = GeneratorConfig {
        system_vars: p.nodes.saturating_sub(1),
        density: p.density,
        n_contexts: p.n_contexts,
        balance: p.balance,
        n_change: p.n_change,
        ops: p.ops.clone(),
        ..GeneratorConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let scm = generate_scm(&gen, &mut rng)?;
    let truth = ground_truth(&scm)?;
    let links = LinkAssumptions::from_truth(p.links, scm.indicator_index(), &truth.r_edges())?;
    let cfg = DiscoveryConfig::new(p.method, p.alpha).with_links(links);

    let (data, oracle, engine);
    let (tester, context_counts): (&dyn CiTest, _) = if p.oracle {
        oracle = OracleContext::new(truth.descriptive.clone(), truth.union.clone())?;
        (&oracle, BTreeMap::new())
    } else {
        data = sample(&scm, p.n_samples, &mut rng)?;
        engine = DataEngine::new(&data);
        (&engine, data.context_counts())
    };
    let res = discover(tester, &cfg)?;

    let system = if p.method == Method::Masked {
        Scope::SystemOnly
    } else {
        Scope::IncludeR
    };
    let mut scores = Vec::new();
    for (r, g) in &res.context_graphs {
        scores.push(score(format!("context {r}"), system, g, &truth.descriptive[r])?);
    }
    scores.push(score("union".into(), Scope::IncludeR, &res.union_graph, &truth.union)?);
    render(&DiscoveryReport {
        method: p.method.label(),
        context_counts,
        truth: docs(&truth.descriptive),
        truth_union: GraphDoc::from(&truth.union),
        found: docs(&res.context_graphs),
        found_union: GraphDoc::from(&res.union_graph),
        test_count: res.test_count,
        scores,
        warnings: res.warnings,
    })
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionParams {
    pub n_samples: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams {
            n_samples: 3000,
            alpha: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SelectionReport {
    pub context_counts: BTreeMap<u32, usize>,
    pub masked: BTreeMap<u32, GraphDoc>,
    pub adaptive: BTreeMap<u32, GraphDoc>,
    pub masked_spurious: bool,
    pub adaptive_spurious: bool,
}

/// X and T independent, R = [X + T + noise > 0], Y depends on T only when
/// R = 1. Conditioning on R couples X and T inside each context. Columns
/// are named X1, X2, X3 for X, T, Y.
pub fn selection_data(n: usize, rng: &mut impl Rng) -> Result<Dataset> {
    let mut cols: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(n)).collect();
    let mut ctx = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.sample(StandardNormal);
        let t: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let r = u32::from(x + t + e > 0.0);
        cols[0].push(x);
        cols[1].push(t);
        cols[2].push(f64::from(r) * t + rng.sample::<f64, _>(StandardNormal));
        ctx.push(r);
    }
    Dataset::new(cols, ctx)
}

/// Runs PC-M and PC-AC on selection-biased data.
pub fn selection_bias_json(params: &str) -> Result<String> {
    let p: SelectionParams = parse(params)?;
    let data = selection_data(p.n_samples, &mut ChaCha8Rng::seed_from_u64(p.seed))?;
    let engine = DataEngine::new(&data);
    let m = pc_masked(&engine, &DiscoveryConfig::new(Method::Masked, p.alpha))?;
    let a = pc_ac(&engine, &DiscoveryConfig::new(Method::Ac, p.alpha))?;
    let spurious = |gs: &BTreeMap<u32, DirectedMixedGraph>| gs.values().any(|g| g.adjacent(0, 1));
    render(&SelectionReport {
        context_counts: data.context_counts(),
        masked_spurious: spurious(&m.context_graphs),
        adaptive_spurious: spurious(&a.context_graphs),
        masked: docs(&m.context_graphs),
        adaptive: docs(&a.context_graphs),
    })
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceParams {
    pub balances: Vec<f64>,
    pub nodes: usize,
    pub n_samples: usize,
    pub trials: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BalanceParams {
    fn default() -> Self {
        BalanceParams {
            balances: vec![1.0, 0.5, 0.25, 0.1],
            nodes: 6,
            n_samples: 1000,
            trials: 5,
            alpha: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct BalanceRow {
    pub balance: f64,
    pub trials: usize,
    pub small_share: f64,
    pub small_tpr: Option<f64>,
    pub large_tpr: Option<f64>,
    pub small_fpr: Option<f64>,
    pub large_fpr: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// PC-AC accuracy in the smaller and the larger of two contexts as the
/// context sizes become unequal.
pub fn balance_sweep_json(params: &str) -> Result<String> {
    let p: BalanceParams = parse(params)?;
    if p.trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let mut rows = Vec::new();
    for (i, &balance) in p.balances.iter().enumerate() {
        let gen = GeneratorConfig {
            system_vars: p.nodes.saturating_sub(1),
            balance,
            ..GeneratorConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        rng.set_stream(i as u64);
        let (mut share, mut tpr, mut fpr) = (Vec::new(), [Vec::new(), Vec::new()], [Vec::new(), Vec::new()]);
        for _ in 0..p.trials {
            let scm = generate_scm(&gen, &mut rng)?;
            let truth = ground_truth(&scm)?;
            let data = sample(&scm, p.n_samples, &mut rng)?;
            let res = pc_ac(&DataEngine::new(&data), &DiscoveryConfig::new(Method::Ac, p.alpha))?;
            let mut by_size: Vec<(usize, u32)> = data.context_counts().into_iter().map(|(r, c)| (c, r)).collect();
            by_size.sort();
            share.push(by_size[0].0 as f64 / data.n_rows() as f64);
            for (k, (_, r)) in [by_size[0], by_size[by_size.len() - 1]].into_iter().enumerate() {
                let m = skeleton_metrics(&res.context_graphs[&r], &truth.descriptive[&r], Scope::IncludeR)?;
                tpr[k].extend(m.tpr);
                fpr[k].extend(m.fpr);
            }
        }
        rows.push(BalanceRow {
            balance,
            trials: p.trials,
            small_share: mean(&share).unwrap_or(0.0),
            small_tpr: mean(&tpr[0]),
            large_tpr: mean(&tpr[1]),
            small_fpr: mean(&fpr[0]),
            large_fpr: mean(&fpr[1]),
        });
    }
    render(&rows)
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn run_discovery(params: &str) -> std::result::Result<String, JsError> {
    js(run_discovery_json(params))
}

#[wasm_bindgen]
pub fn selection_bias(params: &str) -> std::result::Result<String, JsError> {
    js(selection_bias_json(params))
}

#[wasm_bindgen]
pub fn balance_sweep(params: &str) -> std::result::Result<String, JsError> {
    js(balance_sweep_json(params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn oracle_discovery_is_exact() {
        let out: Value = serde_json::from_str(&run_discovery_json(r#"{"oracle": true, "seed": 2}"#).unwrap()).unwrap();
        for row in out["scores"].as_array().unwrap() {
            if row["graph"] != "union" {
                assert_eq!(row["tpr"].as_f64().unwrap_or(1.0), 1.0, "{row}");
                assert_eq!(row["fpr"].as_f64().unwrap_or(0.0), 0.0, "{row}");
            }
        }
        assert_eq!(out["found"].as_object().unwrap().len(), 2);
    }

    #[test]
    fn pooled_reports_only_a_union() {
        let out: Value =
            serde_json::from_str(&run_discovery_json(r#"{"method": "pooled", "n_samples": 400}"#).unwrap()).unwrap();
        assert!(out["found"].as_object().unwrap().is_empty());
        assert_eq!(out["scores"].as_array().unwrap().len(), 1);
        assert!(out["test_count"].as_u64().unwrap() > 0);
    }

    #[test]
    fn selection_bias_separates_the_methods() {
        let out: Value = serde_json::from_str(&selection_bias_json(r#"{"seed": 1}"#).unwrap()).unwrap();
        assert_eq!(out["masked_spurious"], true);
        assert_eq!(out["adaptive_spurious"], false);
        assert_eq!(out["adaptive"]["0"]["nodes"][0]["name"], "X1");
    }

    #[test]
    fn balance_sweep_reports_each_setting() {
        let out: Value = serde_json::from_str(
            &balance_sweep_json(r#"{"balances": [1.0, 0.2], "trials": 2, "n_samples": 600}"#).unwrap(),
        )
        .unwrap();
        let rows = out.as_array().unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[1]["small_share"].as_f64().unwrap() < rows[0]["small_share"].as_f64().unwrap());
    }

    #[test]
    fn bad_parameters_are_rejected() {
        assert!(run_discovery_json(r#"{"nodez": 3}"#).is_err());
        assert!(balance_sweep_json(r#"{"trials": 0}"#).is_err());
        assert!(run_discovery_json(r#"{"alpha": 2.0}"#).is_err());
    }
}
