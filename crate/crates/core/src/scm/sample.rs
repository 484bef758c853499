use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::{IndicatorConfig, MultiContextScm};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{ancestors, DirectedMixedGraph};

/// Exogenous noise family. Both options have zero mean and unit variance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    StandardNormal,
    Uniform,
}

impl NoiseKind {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            NoiseKind::StandardNormal => StandardNormal.sample(rng),
            NoiseKind::Uniform => {
                let half = 3f64.sqrt();
                Uniform::new(-half, half).expect("valid bounds").sample(rng)
            }
        }
    }
}

/// Empirical quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], level: f64) -> f64 {
    let pos = level * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Maps continuous values to contexts `1..=n_contexts`: context `i + 1`
/// holds the values in `[t_i, t_{i+1})`, where `t_i` is the empirical
/// quantile at the adjusted level `q_i^b`.
pub fn threshold_indicator(values: &[f64], cfg: &IndicatorConfig) -> Result<Vec<u32>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("no values to threshold".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("indicator values must be finite".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::DegenerateIndicator(
            "constant indicator values leave quantiles undefined".into(),
        ));
    }
    let thresholds: Vec<f64> = cfg.quantile_levels.iter().map(|&q| quantile(&sorted, q)).collect();
    let labels: Vec<u32> = values
        .iter()
        .map(|&x| 1 + thresholds.iter().filter(|&&t| x >= t).count() as u32)
        .collect();
    let mut seen = vec![false; cfg.n_contexts];
    for &r in &labels {
        seen[r as usize - 1] = true;
    }
    if let Some(empty) = seen.iter().position(|s| !s) {
        return Err(Error::DegenerateIndicator(format!(
            "context {} received no samples",
            empty + 1
        )));
    }
    Ok(labels)
}

fn topological_order(g: &DirectedMixedGraph) -> Result<Vec<usize>> {
    let n = g.n_nodes();
    let mut indegree: Vec<usize> = (0..n).map(|v| g.parents(v).len()).collect();
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for c in g.children(v) {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() != n {
        return Err(Error::CyclicGraph);
    }
    Ok(order)
}

/// Draws `n` rows with standard normal noise.
pub fn sample<R: Rng + ?Sized>(scm: &MultiContextScm, n: usize, rng: &mut R) -> Result<Dataset> {
    sample_with_noise(scm, n, NoiseKind::StandardNormal, rng)
}

/// Two-pass sampler. The base model is solved first and the indicator
/// thresholded; every variable that is not an ancestor of `R` is then
/// recomputed row by row from its context's mechanisms, with children of
/// `R` reading the context value itself.
pub fn sample_with_noise<R: Rng + ?Sized>(
    scm: &MultiContextScm,
    n: usize,
    noise: NoiseKind,
    rng: &mut R,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    let p = scm.n_vars();
    let r_idx = scm.indicator_index();
    let template = scm.template();

    let base_order = topological_order(&scm.base.coeff.mechanism_graph(&template))?;
    let mut eta = vec![vec![0.0; n]; p];
    for row in 0..n {
        for col in eta.iter_mut() {
            col[row] = noise.draw(rng);
        }
    }

    let mut x = vec![vec![0.0; n]; p];
    for &i in &base_order {
        let parents = scm.base.coeff.parents(i);
        for row in 0..n {
            let mut v = scm.base.noise_scale[i] * eta[i][row];
            for &j in &parents {
                v += scm.base.coeff.get(i, j) * x[j][row];
            }
            x[i][row] = v;
        }
    }
    let context = threshold_indicator(&x[r_idx], &scm.indicator)?;

    let mut orders = std::collections::BTreeMap::new();
    for r in scm.contexts() {
        let g = scm.context_graph(r)?;
        let upstream = ancestors(&g, r_idx)?;
        let order: Vec<usize> = topological_order(&g)?
            .into_iter()
            .filter(|v| !upstream.contains(v))
            .collect();
        orders.insert(r, order);
    }

    for row in 0..n {
        let r = context[row];
        let coeff = &scm.per_context_coeff[&r];
        x[r_idx][row] = r as f64;
        for &i in &orders[&r] {
            let mut v = scm.base.noise_scale[i] * eta[i][row];
            for j in coeff.parents(i) {
                v += coeff.get(i, j) * x[j][row];
            }
            x[i][row] = v;
        }
    }

    x.truncate(r_idx);
    Dataset::new(x, context)
}
