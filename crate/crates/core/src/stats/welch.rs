use statrs::function::beta::beta_reg;

use super::StatsError;

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Two-sided Welch test for equal means, with Satterthwaite degrees of
/// freedom. Two constant samples give 1 when their values agree and 0
/// otherwise.
pub fn welch_t_test(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() < 2 || y.len() < 2 {
        return Err(StatsError::SampleTooSmall(format!(
            "welch test needs two observations per sample, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|a| !a.is_finite()) {
        return Err(StatsError::NonFinite("welch test input".into()));
    }
    let (mx, vx) = mean_var(x);
    let (my, vy) = mean_var(y);
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (sx, sy) = (vx / nx, vy / ny);
    let se2 = sx + sy;
    if se2 == 0.0 {
        return Ok(if mx == my { 1.0 } else { 0.0 });
    }
    let diff = mx - my;
    if diff == 0.0 {
        return Ok(1.0);
    }
    let t2 = diff * diff / se2;
    let df = se2 * se2 / (sx * sx / (nx - 1.0) + sy * sy / (ny - 1.0));
    // P(|T| > t) = I_{df / (df + t²)}(df / 2, 1 / 2)
    let p = beta_reg(df / 2.0, 0.5, df / (df + t2));
    Ok(p.clamp(0.0, 1.0))
}
