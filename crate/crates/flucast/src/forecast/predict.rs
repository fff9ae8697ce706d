//! Merging K sampled predictions into one Gaussian.

use crate::error::{Error, Result};

/// Total-variance combination of K sampled forecasts: the mean is the
/// average of the sampled means; the variance adds the population variance
/// of the means to the average of the sampled variances.
pub fn combine_uncertainty(sample_means: &[f64], sample_stds: &[f64]) -> Result<(f64, f64)> {
    if sample_means.is_empty() {
        return Err(Error::InvalidInput(
            "combining uncertainty needs at least one sample".into(),
        ));
    }
    if sample_means.len() != sample_stds.len() {
        return Err(Error::Shape {
            context: "combine_uncertainty",
            expected: format!("{} stds", sample_means.len()),
            got: format!("{}", sample_stds.len()),
        });
    }
    let k = sample_means.len() as f64;
    let mean = sample_means.iter().sum::<f64>() / k;
    let var_of_means = sample_means
        .iter()
        .map(|&m| (m - mean) * (m - mean))
        .sum::<f64>()
        / k;
    let mean_of_vars = sample_stds.iter().map(|&s| s * s).sum::<f64>() / k;
    Ok((mean, (var_of_means + mean_of_vars).sqrt()))
}
