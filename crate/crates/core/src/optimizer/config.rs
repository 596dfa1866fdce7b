use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::SmoothnessProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Hessian momentum with explicit inverses for the sampled blocks.
    V1,
    /// Projected SGD on the quadratic whose minimizer is `[∇²_yy g]⁻¹ ∇_y f`.
    V2,
}

fn default_true() -> bool {
    true
}

/// Step sizes, momenta, batch sizes and horizon of one run. Missing fields
/// take the values of [`RunConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Primal step on `x`.
    pub eta0: f64,
    /// Dual ascent step on `α`.
    pub eta1: f64,
    /// Lower-level descent step on `y`.
    pub eta2: f64,
    /// Step of the v-iterates (v2 only).
    #[serde(default = "RunConfig::default_eta3")]
    pub eta3: f64,
    /// Moving-average weight of the primal gradient estimate.
    pub beta0: f64,
    /// Hessian momentum weight (v1 only).
    #[serde(default = "RunConfig::default_beta1")]
    pub beta1: f64,
    /// Blocks sampled per iteration, `|I_t|`.
    pub block_batch: usize,
    /// Samples per selected block, `|B_i^t|`.
    pub data_batch: usize,
    /// Number of iterations `T`.
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    /// Radius `Γ` of the v-ball; `None` means `C_f / μ_g` from the profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_radius: Option<f64>,
    /// Draw the Jacobian factor of the v1 estimator on its own minibatch.
    #[serde(default = "default_true")]
    pub independent_product_batches: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            eta0: 0.001,
            eta1: 0.5,
            eta2: 0.25,
            eta3: Self::default_eta3(),
            beta0: 0.1,
            beta1: Self::default_beta1(),
            block_batch: 4,
            data_batch: 4,
            horizon: 20_000,
            seed: 0,
            gamma_radius: None,
            independent_product_batches: true,
        }
    }
}

impl RunConfig {
    fn default_eta3() -> f64 {
        0.25
    }

    fn default_beta1() -> f64 {
        0.5
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        for (name, v) in [
            ("eta0", self.eta0),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("eta3", self.eta3),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta0", self.beta0), ("beta1", self.beta1)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if self.block_batch == 0 || self.block_batch > m {
            return Err(Error::config(format!(
                "block_batch must lie in 1..={m}, got {}",
                self.block_batch
            )));
        }
        if self.data_batch == 0 {
            return Err(Error::config("data_batch must be at least 1"));
        }
        if let Some(g) = self.gamma_radius {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::config(format!("gamma_radius must be nonnegative, got {g}")));
            }
        }
        Ok(())
    }

    pub fn gamma(&self, profile: &SmoothnessProfile) -> f64 {
        self.gamma_radius.unwrap_or_else(|| profile.gamma_radius())
    }
}

/// Worst-case step sizes as functions of accuracy and batch sizes, with the
/// constants `C₁..C₄` (and `L_gyy`) set to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryStepSizes {
    pub eta0: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub beta0: f64,
    pub beta1: f64,
}

/// Step sizes for target accuracy `eps` (on `‖∇F‖`) under `profile`.
///
/// `l_big_f` is a smoothness estimate of `F`. The result is conservative and
/// mostly useful for checking how the settings scale with the batch sizes.
pub fn theory_step_sizes(
    profile: &SmoothnessProfile,
    m: usize,
    block_batch: usize,
    data_batch: usize,
    eps: f64,
    l_big_f: f64,
) -> TheoryStepSizes {
    let (mu_f, mu_g, l_f, l_g) = (profile.mu_f, profile.mu_g, profile.l_f, profile.l_g);
    let sigma2 = profile.sigma * profile.sigma;
    let m = m as f64;
    let it = block_batch as f64;
    let bs = data_batch as f64;
    let e2 = eps * eps;
    // σ = 0 leaves only the deterministic caps.
    let noise_cap = |num: f64| if sigma2 > 0.0 { num / sigma2 } else { f64::INFINITY };

    let eta1 = (mu_f / (l_f * l_f))
        .min(1.0 / mu_f)
        .min(4.0 * m / (mu_f * it))
        .min(noise_cap(bs * e2 / (96.0 * mu_f)));
    let eta2 = (mu_g / (l_g * l_g))
        .min(2.0 * m / (it * mu_g))
        .min(noise_cap(mu_g * bs * e2 / 48.0));
    let eta3 = (mu_g / (l_g * l_g))
        .min(1.0 / mu_g)
        .min(4.0 * m / (mu_g * it))
        .min(noise_cap(bs * e2 / (96.0 * mu_g)));
    let beta1 = 1f64.min(noise_cap(bs * e2 / 96.0));
    let beta0 = (it.min(bs) * e2 / 12.0).min(1.0);
    let c_y = l_g / mu_g;
    let c_alpha = l_f / mu_f;
    let eta0 = (1.0 / (2.0 * l_big_f))
        .min(beta0 / (80f64.sqrt() * l_big_f))
        .min(eta1 * mu_f * it / (640f64.sqrt() * m * c_alpha))
        .min(it * beta1 / (640f64.sqrt() * m * (1.0 + c_y * c_y).sqrt()))
        .min(it * eta2 * mu_g / (160f64.sqrt() * m * c_y));
    TheoryStepSizes {
        eta0,
        eta1,
        eta2,
        eta3,
        beta0,
        beta1,
    }
}
