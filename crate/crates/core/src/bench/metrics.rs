use crate::error::{Error, Result};

fn check(truth: &[f64], est: &[f64]) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::Data("no elements to score".into()));
    }
    if truth.len() != est.len() {
        return Err(Error::Mismatch(format!("{} true values but {} estimates", truth.len(), est.len())));
    }
    Ok(())
}

/// Mean absolute error per element.
pub fn avg_abs_error(truth: &[f64], est: &[f64]) -> Result<f64> {
    check(truth, est)?;
    Ok(truth.iter().zip(est).map(|(f, e)| (f - e).abs()).sum::<f64>() / truth.len() as f64)
}

/// Absolute error weighted by true frequency.
pub fn expected_magnitude_error(truth: &[f64], est: &[f64]) -> Result<f64> {
    check(truth, est)?;
    let total: f64 = truth.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Data("true frequencies sum to zero".into()));
    }
    Ok(truth.iter().zip(est).map(|(f, e)| f * (f - e).abs()).sum::<f64>() / total)
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
