use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::StatsError;

fn centered(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    out
}

/// Pseudo-inverse of a symmetric positive semi-definite matrix, treating
/// eigenvalues below `rel_tol · λ_max` as zero.
fn psd_pinv(m: DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m);
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let cut = rel_tol * max;
    let inv = eig.eigenvalues.map(|l| if l > cut && l > 0.0 { 1.0 / l } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// Symmetric inverse square root after adding `ridge · I`.
fn inv_sqrt(m: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let k = m.nrows();
    let eig = SymmetricEigen::new(m + DMatrix::identity(k, k) * ridge);
    let floor = ridge.max(f64::EPSILON);
    let s = eig.eigenvalues.map(|l| 1.0 / l.max(floor).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&s) * eig.eigenvectors.transpose()
}

/// Least-squares residuals of every column of `block` on `conditioners`
/// plus an intercept. Collinear conditioners are handled by a pseudo-inverse
/// that drops directions with relative eigenvalue below `ridge_epsilon`.
pub fn ols_residualize(
    block: &DMatrix<f64>,
    conditioners: &DMatrix<f64>,
    ridge_epsilon: f64,
) -> Result<DMatrix<f64>, StatsError> {
    if conditioners.ncols() > 0 && conditioners.nrows() != block.nrows() {
        return Err(StatsError::RowMismatch(block.nrows(), conditioners.nrows()));
    }
    let y = centered(block);
    if conditioners.ncols() == 0 {
        return Ok(y);
    }
    let mut z = centered(conditioners);
    // unit-norm columns make the eigenvalue cut independent of column scale
    for mut col in z.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let zt = z.transpose();
    let gram = &zt * &z;
    let k = gram.nrows();
    let tol = ridge_epsilon.max(f64::EPSILON * k as f64);
    let beta = psd_pinv(gram, tol) * (&zt * &y);
    Ok(y - z * beta)
}

/// Result of a Wilks' Λ test of independence between two blocks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WilksOutcome {
    pub correlations: Vec<f64>,
    pub lambda: f64,
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

impl WilksOutcome {
    fn independent() -> Self {
        WilksOutcome {
            correlations: vec![],
            lambda: 1.0,
            statistic: 0.0,
            df: 0.0,
            p_value: 1.0,
        }
    }
}

/// Canonical correlations between `u` and `w` and the Bartlett
/// chi-squared p-value of Wilks' Λ. `conditioners` is the number of columns
/// the blocks were residualized on; it is subtracted from the effective
/// sample size.
///
/// Columns whose variance is negligible next to the largest one carry no
/// information and are dropped; if a block loses every column the blocks
/// are reported independent.
pub fn cca_wilks_test(
    u: &DMatrix<f64>,
    w: &DMatrix<f64>,
    conditioners: usize,
    ridge_epsilon: f64,
) -> Result<WilksOutcome, StatsError> {
    let n = u.nrows();
    if w.nrows() != n {
        return Err(StatsError::RowMismatch(n, w.nrows()));
    }
    let (p0, q0) = (u.ncols(), w.ncols());
    if p0 == 0 || q0 == 0 {
        return Ok(WilksOutcome::independent());
    }
    if n <= p0 + q0 + conditioners + 2 {
        return Err(StatsError::SampleTooSmall(format!(
            "n = {n} must exceed {p0} + {q0} + {conditioners} + 2 for the Wilks test"
        )));
    }
    let uw = centered(&DMatrix::from_fn(n, p0 + q0, |i, j| if j < p0 { u[(i, j)] } else { w[(i, j - p0)] }));
    let scatter = uw.transpose() * &uw;
    wilks_from_scatter(&scatter, p0, n, conditioners, ridge_epsilon)
}

/// Wilks' test from the centered cross-product matrix of `[u | w]`, where
/// the first `p0` rows and columns belong to `u`.
fn wilks_from_scatter(
    scatter: &DMatrix<f64>,
    p0: usize,
    n: usize,
    conditioners: usize,
    ridge_epsilon: f64,
) -> Result<WilksOutcome, StatsError> {
    let m = scatter.nrows();
    let var: Vec<f64> = (0..m).map(|j| scatter[(j, j)].max(0.0) / (n - 1) as f64).collect();
    let max_var = var.iter().copied().fold(0.0, f64::max);
    if !max_var.is_finite() {
        return Err(StatsError::NonFinite("Wilks test input".into()));
    }
    let keep = |range: std::ops::Range<usize>| -> Vec<usize> {
        range.filter(|&j| var[j] > 0.0 && var[j] > 1e-14 * max_var).collect()
    };
    let (ku, kw) = (keep(0..p0), keep(p0..m));
    if ku.is_empty() || kw.is_empty() {
        return Ok(WilksOutcome::independent());
    }
    let (p, q) = (ku.len(), kw.len());
    let cols: Vec<usize> = ku.iter().chain(&kw).copied().collect();
    // correlation matrix of the kept columns
    let r = DMatrix::from_fn(p + q, p + q, |i, j| {
        let (a, b) = (cols[i], cols[j]);
        scatter[(a, b)] / (scatter[(a, a)] * scatter[(b, b)]).sqrt()
    });
    let ruu = r.view((0, 0), (p, p)).into_owned();
    let rww = r.view((p, p), (q, q)).into_owned();
    let ruw = r.view((0, p), (p, q)).into_owned();
    let k = inv_sqrt(&ruu, ridge_epsilon) * ruw * inv_sqrt(&rww, ridge_epsilon);
    let correlations: Vec<f64> = k.singular_values().iter().map(|s| s.clamp(0.0, 1.0)).collect();
    let ln_lambda: f64 = correlations
        .iter()
        .map(|rho| (-(rho * rho)).ln_1p().max(f64::MIN_POSITIVE.ln()))
        .sum();
    let factor = n as f64 - 1.0 - conditioners as f64 - (p + q + 1) as f64 / 2.0;
    if factor <= 0.0 {
        return Err(StatsError::SampleTooSmall(format!(
            "Bartlett factor {factor} is not positive"
        )));
    }
    let statistic = (-factor * ln_lambda).max(0.0);
    let df = (p * q) as f64;
    let chi = ChiSquared::new(df).expect("positive degrees of freedom");
    let p_value = chi.sf(statistic).clamp(0.0, 1.0);
    Ok(WilksOutcome {
        correlations,
        lambda: ln_lambda.exp(),
        statistic,
        df,
        p_value,
    })
}



/// Centered cross-product matrix `XcᵀXc` of the columns of `x`.
pub fn centered_scatter(x: &DMatrix<f64>) -> DMatrix<f64> {
    let c = centered(x);
    c.transpose() * &c
}

/// Conditional Wilks' test of columns `a` against columns `b` given `z`,
/// computed from the centered scatter matrix of `n` rows alone. Gives the
/// same answer as residualizing the rows with [`ols_residualize`] and
/// calling [`cca_wilks_test`], at a cost independent of `n`.
pub fn conditional_wilks_from_scatter(
    scatter: &DMatrix<f64>,
    n: usize,
    a: &[usize],
    b: &[usize],
    z: &[usize],
    ridge_epsilon: f64,
) -> Result<WilksOutcome, StatsError> {
    let d = scatter.nrows();
    if scatter.ncols() != d {
        return Err(StatsError::DimensionMismatch { expected: d, found: scatter.ncols() });
    }
    if let Some(&v) = a.iter().chain(b).chain(z).find(|&&v| v >= d) {
        return Err(StatsError::NodeOutOfRange { node: v, d });
    }
    let (p0, q0, k) = (a.len(), b.len(), z.len());
    if p0 == 0 || q0 == 0 {
        return Ok(WilksOutcome::independent());
    }
    if n <= p0 + q0 + k + 2 {
        return Err(StatsError::SampleTooSmall(format!(
            "n = {n} must exceed {p0} + {q0} + {k} + 2 for the Wilks test"
        )));
    }
    let y: Vec<usize> = a.iter().chain(b).copied().collect();
    let mut syy = DMatrix::from_fn(y.len(), y.len(), |i, j| scatter[(y[i], y[j])]);
    if k > 0 {
        // unit-norm conditioners, as in the row-based regression
        let scale: Vec<f64> = z
            .iter()
            .map(|&v| {
                let s = scatter[(v, v)];
                if s > 0.0 { 1.0 / s.sqrt() } else { 0.0 }
            })
            .collect();
        let gram = DMatrix::from_fn(k, k, |i, j| scatter[(z[i], z[j])] * scale[i] * scale[j]);
        let syz = DMatrix::from_fn(y.len(), k, |i, j| scatter[(y[i], z[j])] * scale[j]);
        let tol = ridge_epsilon.max(f64::EPSILON * k as f64);
        syy -= &syz * psd_pinv(gram, tol) * syz.transpose();
    }
    wilks_from_scatter(&syy, p0, n, k, ridge_epsilon)
}
