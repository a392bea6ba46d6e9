use nalgebra::DMatrix;

use super::{cca_wilks_test, centered_scatter, conditional_wilks_from_scatter, descendant_matrix, ols_residualize, DescendantMatrix, EnvironmentData, StatsError, TestConfig};
use crate::engine::{EdgeOracle, EdgeQuery, EngineError, SignatureRefineOracle};
use crate::graph::NodeSet;

fn edge_pvalue(query: &EdgeQuery, x: &DMatrix<f64>, config: &TestConfig) -> Result<f64, StatsError> {
    let d = x.ncols();
    let z = query.conditioning_nodes();
    for s in [&query.from, &query.to, &z] {
        if let Some(v) = s.iter().find(|&v| v >= d) {
            return Err(StatsError::NodeOutOfRange { node: v, d });
        }
    }
    // a node never conditions on itself
    let z: NodeSet = z.difference(&query.from.union(&query.to));
    let zm = x.select_columns(z.as_slice());
    // both blocks share one regression on the conditioners
    let cols: Vec<usize> = query.from.iter().chain(query.to.iter()).collect();
    let r = ols_residualize(&x.select_columns(&cols), &zm, config.ridge_epsilon)?;
    let a = query.from.len();
    let u = r.columns(0, a).into_owned();
    let w = r.columns(a, r.ncols() - a).into_owned();
    Ok(cca_wilks_test(&u, &w, z.len(), config.ridge_epsilon)?.p_value)
}

/// Conditional-independence edge test on the observational sample: the
/// two parts are residualized on the conditioning parts and an edge is
/// reported when Wilks' test rejects at `alpha_edge`.
pub fn is_edge_test(query: &EdgeQuery, data: &EnvironmentData, config: &TestConfig) -> Result<bool, StatsError> {
    Ok(edge_pvalue(query, data.observational(), config)? < config.alpha_edge)
}

/// [`EdgeOracle`] over an observational sample, reduced once to its
/// scatter matrix. Queries for which the sample is too small to run the
/// test are answered "no edge".
pub struct CiEdgeOracle {
    scatter: DMatrix<f64>,
    n: usize,
    config: TestConfig,
}

impl CiEdgeOracle {
    pub fn new(data: &EnvironmentData, config: TestConfig) -> Self {
        let x = data.observational();
        CiEdgeOracle {
            scatter: centered_scatter(x),
            n: x.nrows(),
            config,
        }
    }

    pub fn p_value(&self, query: &EdgeQuery) -> Result<f64, StatsError> {
        let z = query.conditioning_nodes().difference(&query.from.union(&query.to));
        let outcome = conditional_wilks_from_scatter(
            &self.scatter,
            self.n,
            query.from.as_slice(),
            query.to.as_slice(),
            z.as_slice(),
            self.config.ridge_epsilon,
        )?;
        Ok(outcome.p_value)
    }
}

impl EdgeOracle for CiEdgeOracle {
    fn is_edge(&self, query: &EdgeQuery) -> Result<bool, EngineError> {
        match self.p_value(query) {
            Ok(p) => Ok(p < self.config.alpha_edge),
            Err(StatsError::SampleTooSmall(msg)) => {
                log::warn!("edge {} -> {} not testable ({msg}); answering no edge", query.from, query.to);
                Ok(false)
            }
            Err(e) => Err(EngineError::Oracle(Box::new(e))),
        }
    }
}

/// The full pair of statistical oracles for a data set, plus the descendant
/// matrix the refine oracle was built from. Data should be standardized.
pub fn statistical_oracles(
    data: &EnvironmentData,
    config: &TestConfig,
) -> Result<(SignatureRefineOracle, CiEdgeOracle, DescendantMatrix), StatsError> {
    config.validate()?;
    let m = descendant_matrix(data, config.alpha_ref)?;
    Ok((SignatureRefineOracle::new(&m), CiEdgeOracle::new(data, *config), m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::QueryKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn chain(n: usize, seed: u64) -> EnvironmentData {
        // 0 -> 1 -> 2, and 3 independent
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::zeros(n, 4);
        for i in 0..n {
            let e: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            x[(i, 0)] = e[0];
            x[(i, 1)] = 1.5 * x[(i, 0)] + e[1];
            x[(i, 2)] = -x[(i, 1)] + e[2];
            x[(i, 3)] = e[3];
        }
        EnvironmentData::new(x, vec![]).unwrap()
    }

    fn q(from: &[usize], to: &[usize], cond: &[&[usize]]) -> EdgeQuery {
        EdgeQuery {
            kind: QueryKind::BetweenSplit,
            from: NodeSet::new(from.iter().copied()),
            to: NodeSet::new(to.iter().copied()),
            conditioning: cond.iter().map(|c| NodeSet::new(c.iter().copied())).collect(),
        }
    }

    #[test]
    fn chain_dependences() {
        let data = chain(5_000, 1);
        let cfg = TestConfig::default();
        assert!(is_edge_test(&q(&[0], &[1], &[]), &data, &cfg).unwrap());
        assert!(is_edge_test(&q(&[0], &[2], &[]), &data, &cfg).unwrap());
        assert!(is_edge_test(&q(&[0], &[1, 2], &[]), &data, &cfg).unwrap());
        assert!(!is_edge_test(&q(&[0, 1, 2], &[3], &[]), &data, &cfg).unwrap());
    }

    #[test]
    fn screened_off_rejection_rate() {
        let cfg = TestConfig::default();
        let reps = 100;
        let hits = (0..reps)
            .filter(|&s| is_edge_test(&q(&[0], &[2], &[&[1]]), &chain(1_000, 100 + s), &cfg).unwrap())
            .count();
        // Binomial(100, 0.05) exceeds 12 with probability below 0.1%
        assert!(hits <= 12, "{hits}");
    }

    #[test]
    fn tiny_sample_answers_no_edge() {
        let data = chain(5, 2);
        let oracle = CiEdgeOracle::new(&data, TestConfig::default());
        assert!(!oracle.is_edge(&q(&[0], &[1, 2], &[&[3]])).unwrap());
        assert!(matches!(
            is_edge_test(&q(&[0], &[1, 2], &[&[3]]), &data, &TestConfig::default()),
            Err(StatsError::SampleTooSmall(_))
        ));
        assert!(is_edge_test(&q(&[0], &[7], &[]), &data, &TestConfig::default()).is_err());
    }

    #[test]
    fn oracle_agrees_with_row_based_test() {
        let data = chain(800, 9);
        let cfg = TestConfig::default();
        let oracle = CiEdgeOracle::new(&data, cfg);
        for query in [q(&[0], &[2], &[&[1]]), q(&[0, 1], &[2, 3], &[]), q(&[3], &[2], &[&[0], &[1, 2]])] {
            let rows = edge_pvalue(&query, data.observational(), &cfg).unwrap();
            assert!((oracle.p_value(&query).unwrap() - rows).abs() < 1e-8, "{query:?}");
        }
    }
}
