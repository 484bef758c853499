use statrs::function::erf::erfc;

use super::{CiQuery, CiVerdict, DataEngine, EngineKind, MIN_SAMPLE_MARGIN};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Residual variance fraction below which a variable is treated as a
/// deterministic function of the conditioning set.
const DEGENERATE_TOL: f64 = 1e-12;

/// Fisher-z test of the sample partial correlation. `R` may appear in the
/// conditioning set of a pooled query, where it enters as dummy columns.
pub fn partial_correlation_test(data: &Dataset, q: &CiQuery) -> Result<CiVerdict> {
    parcorr_with_engine(&DataEngine::new(data), q)
}

pub(crate) fn parcorr_with_engine(engine: &DataEngine<'_>, q: &CiQuery) -> Result<CiVerdict> {
    let data = engine.data();
    q.validate(data.n_columns())?;
    let r = data.context_column();
    if q.x == r || q.y == r {
        return Err(Error::InvalidQuery(
            "partial correlation needs continuous x and y".into(),
        ));
    }
    let m = engine.moments(q.context)?;
    let z = m.expand(&q.z);
    let inconclusive = CiVerdict::inconclusive(m.n, EngineKind::PartialCorrelation);
    if m.n < z.len() + MIN_SAMPLE_MARGIN {
        return Ok(inconclusive);
    }
    let Some((res, _)) = m.residualize(&[q.x, q.y], &z) else {
        return Ok(inconclusive);
    };
    let (sxx, syy, sxy) = (res[(0, 0)], res[(1, 1)], res[(0, 1)]);
    if !(sxx > DEGENERATE_TOL * m.sum_sq(q.x)) || !(syy > DEGENERATE_TOL * m.sum_sq(q.y)) {
        return Ok(inconclusive);
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
    let stat = rho.atanh() * ((m.n - z.len() - 3) as f64).sqrt();
    let p = erfc(stat.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    Ok(CiVerdict {
        p_value: p,
        effective_n: m.n,
        inconclusive: false,
        engine: EngineKind::PartialCorrelation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    #[test]
    fn strong_dependence_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = normal(&mut rng, 500);
        let eta = normal(&mut rng, 500);
        let y: Vec<f64> = x.iter().zip(&eta).map(|(a, e)| 1.5 * a + e).collect();
        let data = Dataset::new(vec![x, y], vec![1; 500]).unwrap();
        let v = partial_correlation_test(&data, &CiQuery::pooled(0, 1, [])).unwrap();
        assert!(v.p_value < 1e-6);
        assert_eq!(v.effective_n, 500);
    }

    #[test]
    fn chain_is_screened_off() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 3000;
        let x = normal(&mut rng, n);
        let z: Vec<f64> = x.iter().zip(normal(&mut rng, n)).map(|(a, e)| a + e).collect();
        let y: Vec<f64> = z.iter().zip(normal(&mut rng, n)).map(|(a, e)| -1.2 * a + e).collect();
        let data = Dataset::new(vec![x, y, z], vec![1; n]).unwrap();
        let marginal = partial_correlation_test(&data, &CiQuery::pooled(0, 1, [])).unwrap();
        assert!(marginal.p_value < 1e-10);
        let given = partial_correlation_test(&data, &CiQuery::pooled(0, 1, [2])).unwrap();
        assert!(given.p_value > 0.01);
    }

    #[test]
    fn conditioning_on_x_is_rejected() {
        let data = Dataset::new(vec![vec![1.0, 2.0], vec![0.0, 1.0]], vec![1, 2]).unwrap();
        assert!(partial_correlation_test(&data, &CiQuery::pooled(0, 1, [0])).is_err());
    }

    #[test]
    fn small_or_singular_samples_are_inconclusive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = normal(&mut rng, 8);
        let y = normal(&mut rng, 8);
        let data = Dataset::new(vec![x.clone(), y], vec![1; 8]).unwrap();
        assert!(
            partial_correlation_test(&data, &CiQuery::pooled(0, 1, []))
                .unwrap()
                .inconclusive
        );

        let x = normal(&mut rng, 100);
        let y = normal(&mut rng, 100);
        let dup = x.iter().map(|v| 2.0 * v).collect();
        let w = normal(&mut rng, 100);
        let data = Dataset::new(vec![x, y, dup, w], vec![1; 100]).unwrap();
        let v = partial_correlation_test(&data, &CiQuery::pooled(1, 3, [0, 2])).unwrap();
        assert!(v.inconclusive);
        let v = partial_correlation_test(&data, &CiQuery::pooled(0, 1, [2])).unwrap();
        assert!(v.inconclusive);
    }

    #[test]
    fn context_restriction_matches_materialized_subset() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 400;
        let cols = vec![normal(&mut rng, n), normal(&mut rng, n), normal(&mut rng, n)];
        let ctx: Vec<u32> = (0..n).map(|i| 1 + (i % 3 == 0) as u32).collect();
        let data = Dataset::new(cols, ctx).unwrap();
        let masked = data.restrict(2).unwrap();
        let a = partial_correlation_test(&data, &CiQuery::in_context(0, 1, [2], 2)).unwrap();
        let b = partial_correlation_test(&masked, &CiQuery::pooled(0, 1, [2])).unwrap();
        assert_eq!(a.p_value.to_bits(), b.p_value.to_bits());
        assert_eq!(a.effective_n, b.effective_n);
    }
}
