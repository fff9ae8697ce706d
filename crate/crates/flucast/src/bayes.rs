//! Variational Bayesian output layer.
//!
//! The final layer's weights and bias get a Gaussian prior and posterior
//! whose parameters are produced by small dense maps conditioned on the
//! network's penultimate representation. The prior fixes its standard
//! deviation and learns only its mean; the posterior learns both, with the
//! standard deviation squeezed through a sharpened softplus so it stays
//! positive. Sampling uses the reparameterization `sample = mean + std·noise`
//! so gradients flow through drawn weights.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Activation, Dense};
use crate::tape::{Tape, Var};

/// Independent Gaussian over the flattened final-layer weights.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianWeightDistribution {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GaussianWeightDistribution {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::Shape {
                context: "weight distribution",
                expected: format!("{} std entries", mean.len()),
                got: format!("{}", std.len()),
            });
        }
        if std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter(
                "weight distribution std entries must be positive".into(),
            ));
        }
        Ok(GaussianWeightDistribution { mean, std })
    }

    /// Uniform-std distribution, used for the fixed-σ prior.
    pub fn with_shared_std(mean: Vec<f64>, std: f64) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, vec![std; n])
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// A concrete draw of final-layer weights and the noise that produced it,
/// so `weights = mean + std ⊙ noise` holds exactly.
#[derive(Clone, Debug)]
pub struct WeightSample {
    pub weights: Vec<f64>,
    pub noise: Vec<f64>,
}

/// Dense maps from the conditioning representation to the prior and
/// posterior parameters of the stochastic output layer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmortizationNet {
    /// representation -> prior mean (one output per weight)
    pub prior_map: Dense,
    /// representation -> posterior mean ++ raw std (two outputs per weight)
    pub posterior_map: Dense,
    /// Fixed prior standard deviation.
    pub prior_std: f64,
    /// Sharpening factor for the posterior std softplus.
    pub posterior_sharpness: f64,
    weight_count: usize,
}

impl AmortizationNet {
    pub fn new(
        cond_dim: usize,
        weight_count: usize,
        prior_std: f64,
        posterior_sharpness: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !(prior_std > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "prior std must be positive, got {prior_std}"
            )));
        }
        if !(posterior_sharpness > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "posterior sharpening factor must be positive, got {posterior_sharpness}"
            )));
        }
        Ok(AmortizationNet {
            prior_map: Dense::new(cond_dim, weight_count, Activation::Linear, rng),
            posterior_map: Dense::new(cond_dim, 2 * weight_count, Activation::Linear, rng),
            prior_std,
            posterior_sharpness,
            weight_count,
        })
    }

    pub fn weight_count(&self) -> usize {
        self.weight_count
    }

    pub fn cond_dim(&self) -> usize {
        self.prior_map.in_dim()
    }

    /// Prior over weights for one conditioning vector: `N(f(cond), σ_p)`.
    pub fn prior_params(&self, cond: &[f64]) -> Result<GaussianWeightDistribution> {
        let mean = self
            .prior_map
            .forward(&Matrix::row_vector(cond.to_vec()))?
            .into_vec();
        GaussianWeightDistribution::with_shared_std(mean, self.prior_std)
    }

    /// Posterior over weights for one conditioning vector: the map's first
    /// half is the mean, the second half passes through the sharpened
    /// softplus to give the std.
    pub fn posterior_params(&self, cond: &[f64]) -> Result<GaussianWeightDistribution> {
        let raw = self
            .posterior_map
            .forward(&Matrix::row_vector(cond.to_vec()))?
            .into_vec();
        let w = self.weight_count;
        let mean = raw[..w].to_vec();
        let std = raw[w..]
            .iter()
            .map(|&a| crate::tape::softplus_sharpened_scalar(a, self.posterior_sharpness))
            .collect();
        GaussianWeightDistribution::new(mean, std)
    }

    /// Taped batched prior mean (n x w). `vars` holds `[weights, bias]`
    /// leaves of the prior map.
    pub fn prior_mean_tape(&self, tape: &Tape, cond: Var, vars: &[Var]) -> Var {
        self.prior_map.forward_tape(tape, cond, vars)
    }

    /// Taped batched posterior (mean, std), each (n x w). `vars` holds
    /// `[weights, bias]` leaves of the posterior map.
    pub fn posterior_tape(&self, tape: &Tape, cond: Var, vars: &[Var]) -> (Var, Var) {
        let raw = self.posterior_map.forward_tape(tape, cond, vars);
        let w = self.weight_count;
        let mean = tape.slice_cols(raw, 0, w);
        let raw_std = tape.slice_cols(raw, w, 2 * w);
        let std = tape.softplus_sharpened(raw_std, self.posterior_sharpness);
        (mean, std)
    }
}

/// Draws `weights = mean + std ⊙ ε` with ε standard normal.
pub fn sample_weights(
    dist: &GaussianWeightDistribution,
    rng: &mut impl Rng,
) -> WeightSample {
    let noise: Vec<f64> = (0..dist.len()).map(|_| rng.sample(StandardNormal)).collect();
    let weights = dist
        .mean
        .iter()
        .zip(&dist.std)
        .zip(&noise)
        .map(|((&m, &s), &e)| m + s * e)
        .collect();
    WeightSample { weights, noise }
}

/// Closed-form KL divergence between independent Gaussians,
/// `Σ ln(σ_p/σ_q) + (σ_q² + (μ_q-μ_p)²)/(2σ_p²) - 1/2`.
pub fn kl_gaussian(
    q: &GaussianWeightDistribution,
    p: &GaussianWeightDistribution,
) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::Shape {
            context: "kl divergence",
            expected: format!("{} coordinates", q.len()),
            got: format!("{}", p.len()),
        });
    }
    if q.std.iter().chain(p.std.iter()).any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidParameter(
            "KL divergence requires positive standard deviations".into(),
        ));
    }
    let mut total = 0.0;
    for i in 0..q.len() {
        let (mq, sq) = (q.mean[i], q.std[i]);
        let (mp, sp) = (p.mean[i], p.std[i]);
        total += (sp / sq).ln() + (sq * sq + (mq - mp) * (mq - mp)) / (2.0 * sp * sp) - 0.5;
    }
    Ok(total)
}

/// Taped per-sample KL between amortized posterior and prior, (n x 1).
/// `sigma_p` is the shared prior std.
pub fn kl_gaussian_tape(
    tape: &Tape,
    mu_q: Var,
    sigma_q: Var,
    mu_p: Var,
    sigma_p: f64,
) -> Var {
    let ln_sq = tape.ln(sigma_q);
    let neg_ln = tape.add_scalar(tape.neg(ln_sq), sigma_p.ln());
    let diff = tape.sub(mu_q, mu_p);
    let numerator = tape.add(tape.square(sigma_q), tape.square(diff));
    let ratio = tape.scale(numerator, 1.0 / (2.0 * sigma_p * sigma_p));
    let per_coord = tape.add_scalar(tape.add(neg_ln, ratio), -0.5);
    tape.row_sum(per_coord)
}
