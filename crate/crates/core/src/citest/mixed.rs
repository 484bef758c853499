use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::moments::residualize_cross;
use super::{CiQuery, CiVerdict, DataEngine, EngineKind, MIN_SAMPLE_MARGIN};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Tests a continuous variable against `R` given continuous `z` with two
/// nested-regression F-tests: one for group mean shifts, one for group
/// differences in the squared residuals. The p-values are combined by
/// Bonferroni.
pub fn mixed_context_test(data: &Dataset, q: &CiQuery) -> Result<CiVerdict> {
    mixed_with_engine(&DataEngine::new(data), q)
}

fn f_test_p(rss_restricted: f64, rss_full: f64, df1: usize, df2: usize) -> f64 {
    let stat = ((rss_restricted - rss_full).max(0.0) / df1 as f64) / (rss_full / df2 as f64);
    let dist = FisherSnedecor::new(df1 as f64, df2 as f64).expect("positive degrees of freedom");
    dist.sf(stat).clamp(0.0, 1.0)
}

pub(crate) fn mixed_with_engine(engine: &DataEngine<'_>, q: &CiQuery) -> Result<CiVerdict> {
    let data = engine.data();
    q.validate(data.n_columns())?;
    let r = data.context_column();
    let target = match (q.x == r, q.y == r) {
        (true, false) => q.y,
        (false, true) => q.x,
        _ => return Err(Error::InvalidQuery("mixed test needs R as exactly one endpoint".into())),
    };
    if q.z.contains(&r) {
        return Err(Error::InvalidQuery("R cannot be both endpoint and conditioner".into()));
    }
    let m = engine.moments(None)?;
    if m.n_groups() < 2 {
        return Err(Error::DegenerateIndicator("R takes a single value in the data".into()));
    }
    let z: Vec<usize> = q.z.iter().copied().collect();
    let dummies: Vec<usize> = m.dummy_columns().collect();
    let inconclusive = CiVerdict::inconclusive(m.n, EngineKind::Mixed);
    let n_full = 1 + z.len() + dummies.len();
    if m.n < z.len() + dummies.len() + MIN_SAMPLE_MARGIN || m.group_counts.values().any(|&c| c < z.len() + 3) {
        return Ok(inconclusive);
    }
    let df1 = dummies.len();
    let df2 = m.n - n_full;

    let w: Vec<usize> = z.iter().chain(&dummies).copied().collect();
    let (Some((rss_r, _)), Some((rss_f, beta))) = (m.residualize(&[target], &z), m.residualize(&[target], &w)) else {
        return Ok(inconclusive);
    };
    let (rss_r, rss_f) = (rss_r[(0, 0)], rss_f[(0, 0)]);
    if !(rss_f > 1e-12 * m.sum_sq(target)) {
        return Ok(inconclusive);
    }
    let p_mean = f_test_p(rss_r, rss_f, df1, df2);

    // squared residuals of the full model, regressed on z with and without
    // the R dummies
    let dummy_contexts = m.dummy_contexts();
    let value = |col: usize, row: usize| -> f64 {
        if col < data.n_system() {
            data.column(col)[row]
        } else {
            (data.context()[row] == dummy_contexts[col - data.n_system()]) as u8 as f64
        }
    };
    let sq: Vec<f64> = (0..m.n)
        .map(|row| {
            let mut e = value(target, row) - m.mean(target);
            for (k, &c) in w.iter().enumerate() {
                e -= beta[(k, 0)] * (value(c, row) - m.mean(c));
            }
            e * e
        })
        .collect();
    let sq_mean = sq.iter().sum::<f64>() / m.n as f64;
    let kw = w.len();
    let mut cross = DMatrix::zeros(kw + 1, kw + 1);
    for a in 0..kw {
        for b in 0..kw {
            cross[(a, b)] = m.cross()[(w[a], w[b])];
        }
        let s: f64 = (0..m.n)
            .map(|row| (sq[row] - sq_mean) * (value(w[a], row) - m.mean(w[a])))
            .sum();
        cross[(a, kw)] = s;
        cross[(kw, a)] = s;
    }
    cross[(kw, kw)] = sq.iter().map(|s| (s - sq_mean).powi(2)).sum();
    let local_z: Vec<usize> = (0..z.len()).collect();
    let local_w: Vec<usize> = (0..kw).collect();
    let (Some((rss_r2, _)), Some((rss_f2, _))) = (
        residualize_cross(&cross, &[kw], &local_z),
        residualize_cross(&cross, &[kw], &local_w),
    ) else {
        return Ok(inconclusive);
    };
    let (rss_r2, rss_f2) = (rss_r2[(0, 0)], rss_f2[(0, 0)]);
    let p_disp = if rss_f2 > 0.0 {
        f_test_p(rss_r2, rss_f2, df1, df2)
    } else {
        1.0
    };

    Ok(CiVerdict {
        p_value: (2.0 * p_mean.min(p_disp)).min(1.0),
        effective_n: m.n,
        inconclusive: false,
        engine: EngineKind::Mixed,
    })
}
