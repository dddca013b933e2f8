//! Gaussian actor pi_lambda(s) = N(mu(s), kappa(s)) built from two networks
//! with smooth activations: sampling, log-density, the score function
//! grad_lambda log pi, empirical estimators for the score-bound/Fisher
//! constants, and the exact tabular projection of the policy onto an action
//! grid (the bridge between the continuous actor and the tabular oracles).

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::mdp::{visitation_distribution, GridWorld, TabularPolicy};
use crate::net::{init_params_with, Activation, NetConfig, NetParams};
use crate::util::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
    /// Bypass the output activation so the mean can range over the whole
    /// action box and the variance head is unconstrained before softplus.
    #[serde(default)]
    pub linear_output: bool,
    /// Variance floor sigma^2_min added after softplus.
    pub sigma2_min: f64,
    /// Constant added to the raw variance-head output before softplus;
    /// sets the initial exploration scale (log-std-init analogue).
    #[serde(default)]
    pub var_raw_offset: f64,
    pub action_bounds: (f64, f64),
    pub seed: u64,
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.activation.is_smooth() {
            return Err(Error::Validation(format!(
                "actor activation must be smooth (tanh or sigmoid), got {:?}",
                self.activation
            )));
        }
        if self.sigma2_min <= 0.0 {
            return Err(Error::Validation("sigma2_min must be positive".into()));
        }
        if self.action_dim == 0 || self.state_dim == 0 {
            return Err(Error::Validation("state_dim and action_dim must be >= 1".into()));
        }
        if self.action_bounds.0 >= self.action_bounds.1 {
            return Err(Error::Validation("empty action box".into()));
        }
        self.head_net_config().validate()
    }

    fn head_net_config(&self) -> NetConfig {
        NetConfig {
            depth: self.depth,
            width: self.width,
            input_dim: self.state_dim,
            activation: self.activation,
            seed: self.seed,
            linear_output: self.linear_output,
        }
    }
}

/// Actor parameters lambda = {lambda_1 (mean heads), lambda_2 (variance
/// heads)}, one head per action dimension (diagonal covariance).
#[derive(Debug, Clone)]
pub struct PolicyParams {
    pub cfg: PolicyConfig,
    pub mean_heads: Vec<NetParams>,
    pub var_heads: Vec<NetParams>,
}

pub fn init_policy(cfg: &PolicyConfig) -> Result<PolicyParams> {
    cfg.validate()?;
    let net_cfg = cfg.head_net_config();
    let mut mean_heads = Vec::with_capacity(cfg.action_dim);
    let mut var_heads = Vec::with_capacity(cfg.action_dim);
    for i in 0..cfg.action_dim {
        let mut rng = seeded_rng(cfg.seed, 2 * i as u64);
        mean_heads.push(init_params_with(&net_cfg, &mut rng)?);
        let mut rng = seeded_rng(cfg.seed, 2 * i as u64 + 1);
        var_heads.push(init_params_with(&net_cfg, &mut rng)?);
    }
    Ok(PolicyParams { cfg: *cfg, mean_heads, var_heads })
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (1.0 + (-x.abs()).exp()).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// log N(a; mu, kappa) for a single dimension.
pub fn gaussian_log_density(a: f64, mu: f64, kappa: f64) -> f64 {
    -(a - mu) * (a - mu) / (2.0 * kappa) - 0.5 * (2.0 * PI * kappa).ln()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    if z.is_infinite() {
        return if z > 0.0 { 1.0 } else { 0.0 };
    }
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    if z.is_infinite() {
        return 0.0;
    }
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

impl PolicyParams {
    pub fn action_dim(&self) -> usize {
        self.cfg.action_dim
    }

    pub fn param_count(&self) -> usize {
        self.mean_heads.iter().map(|h| h.param_count()).sum::<usize>()
            + self.var_heads.iter().map(|h| h.param_count()).sum::<usize>()
    }

    /// Per-dimension mean and variance at a state: mu_i(s) and
    /// kappa_i(s) = softplus(raw_i(s)) + sigma2_min.
    pub fn mean_kappa(&self, s: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut mu = Vec::with_capacity(self.cfg.action_dim);
        let mut kappa = Vec::with_capacity(self.cfg.action_dim);
        for i in 0..self.cfg.action_dim {
            mu.push(self.mean_heads[i].forward(s)?);
            let raw = self.var_heads[i].forward(s)? + self.cfg.var_raw_offset;
            kappa.push(softplus(raw) + self.cfg.sigma2_min);
        }
        Ok((mu, kappa))
    }

    /// Deterministic action for a given standard-normal noise vector:
    /// a_i = mu_i + sqrt(kappa_i) z_i, clamped to the action box.
    /// Returns the action and whether any coordinate was clamped.
    pub fn action_from_noise(&self, s: &[f64], z: &[f64]) -> Result<(Vec<f64>, bool)> {
        let (mu, kappa) = self.mean_kappa(s)?;
        let (lo, hi) = self.cfg.action_bounds;
        let mut clamped = false;
        let a = mu
            .iter()
            .zip(&kappa)
            .zip(z)
            .map(|((&m, &k), &zi)| {
                let raw = m + k.sqrt() * zi;
                let c = raw.clamp(lo, hi);
                if c != raw {
                    clamped = true;
                }
                c
            })
            .collect();
        Ok((a, clamped))
    }

    /// Draw a ~ pi(.|s). The density used elsewhere is the unclamped
    /// Gaussian; the clamp is reported so callers can log it.
    pub fn sample_action(&self, s: &[f64], rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, bool)> {
        let z: Vec<f64> = (0..self.cfg.action_dim)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        self.action_from_noise(s, &z)
    }

    /// log pi(a|s), summed over action dimensions.
    pub fn log_density(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        let (mu, kappa) = self.mean_kappa(s)?;
        if a.len() != mu.len() {
            return Err(Error::Shape("action dimension mismatch".into()));
        }
        Ok(a.iter()
            .zip(&mu)
            .zip(&kappa)
            .map(|((&ai, &mi), &ki)| gaussian_log_density(ai, mi, ki))
            .sum())
    }

    /// Score function grad_lambda log pi(a|s), flattened over all heads:
    /// mean heads first, then variance heads, each in checkpoint order.
    pub fn score(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.cfg.action_dim {
            return Err(Error::Shape("action dimension mismatch".into()));
        }
        let mut out = Vec::with_capacity(self.param_count());
        let mut var_parts = Vec::with_capacity(self.cfg.action_dim);
        for i in 0..self.cfg.action_dim {
            let mu = self.mean_heads[i].forward(s)?;
            let raw = self.var_heads[i].forward(s)? + self.cfg.var_raw_offset;
            let kappa = softplus(raw) + self.cfg.sigma2_min;
            // d logp / d mu = (a - mu) / kappa
            let coef_mu = (a[i] - mu) / kappa;
            let g_mu = self.mean_heads[i].grad(s)?;
            out.extend(g_mu.to_flat_vec().iter().map(|v| coef_mu * v));
            // d logp / d kappa = (a - mu)^2 / (2 kappa^2) - 1 / (2 kappa),
            // then kappa = softplus(raw) + floor gives d kappa / d raw = sigmoid(raw)
            let d = a[i] - mu;
            let coef_kappa = d * d / (2.0 * kappa * kappa) - 1.0 / (2.0 * kappa);
            var_parts.push((coef_kappa * sigmoid(raw), self.var_heads[i].grad(s)?));
        }
        for (coef, g) in var_parts {
            out.extend(g.to_flat_vec().iter().map(|v| coef * v));
        }
        Ok(out)
    }

    /// lambda += scale * delta with delta in [`Self::score`] order.
    pub fn add_from_flat(&mut self, delta: &[f64], scale: f64) -> Result<()> {
        if delta.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "flat delta has {} entries, policy has {}",
                delta.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for head in self.mean_heads.iter_mut().chain(self.var_heads.iter_mut()) {
            let n = head.param_count();
            head.add_from_flat(&delta[offset..offset + n], scale)?;
            offset += n;
        }
        Ok(())
    }

    /// Exact tabular projection onto a 1-D action grid: the probability of
    /// cell j is the Gaussian mass of its midpoint cell, with the boundary
    /// cells absorbing the clamped tails. This matches the distribution of
    /// sample -> clamp -> snap exactly.
    pub fn tabularize(&self, world: &GridWorld) -> Result<TabularPolicy> {
        Ok(self.tabularize_with_grads(world, false)?.0)
    }

    /// Tabular projection plus, when requested, the exact gradient of each
    /// cell probability with respect to the flat policy parameters.
    pub fn tabularize_with_grads(
        &self,
        world: &GridWorld,
        with_grads: bool,
    ) -> Result<(TabularPolicy, Vec<Vec<Vec<f64>>>)> {
        if self.cfg.action_dim != 1 {
            return Err(Error::Validation(
                "tabular projection requires a 1-D action space".into(),
            ));
        }
        let edges = world.action_cell_edges();
        let n_actions = world.mdp.n_actions();
        let mut probs = Vec::with_capacity(world.mdp.n_states());
        let mut grads = Vec::new();
        for s in 0..world.mdp.n_states() {
            let coords = &world.state_coords[s];
            let mu = self.mean_heads[0].forward(coords)?;
            let raw = self.var_heads[0].forward(coords)? + self.cfg.var_raw_offset;
            let kappa = softplus(raw) + self.cfg.sigma2_min;
            let sigma = kappa.sqrt();
            let z: Vec<f64> = edges.iter().map(|e| (e - mu) / sigma).collect();
            let mut row: Vec<f64> = (0..n_actions)
                .map(|j| std_normal_cdf(z[j + 1]) - std_normal_cdf(z[j]))
                .collect();
            let sum: f64 = row.iter().sum();
            for p in &mut row {
                *p /= sum;
            }
            if with_grads {
                let g_mu_flat = self.mean_heads[0].grad(coords)?.to_flat_vec();
                let g_raw_flat = self.var_heads[0].grad(coords)?.to_flat_vec();
                // d sigma / d raw = sigmoid(raw) / (2 sigma)
                let dsig = sigmoid(raw) / (2.0 * sigma);
                let mut row_grads = Vec::with_capacity(n_actions);
                for j in 0..n_actions {
                    let (alpha, beta) = (z[j], z[j + 1]);
                    let (pa, pb) = (std_normal_pdf(alpha), std_normal_pdf(beta));
                    let dp_dmu = (pa - pb) / sigma;
                    let a_term = if alpha.is_infinite() { 0.0 } else { alpha * pa };
                    let b_term = if beta.is_infinite() { 0.0 } else { beta * pb };
                    let dp_dsigma = (a_term - b_term) / sigma;
                    let mut g = Vec::with_capacity(self.param_count());
                    g.extend(g_mu_flat.iter().map(|v| dp_dmu * v));
                    g.extend(g_raw_flat.iter().map(|v| dp_dsigma * dsig * v));
                    row_grads.push(g);
                }
                grads.push(row_grads);
            }
            probs.push(row);
        }
        Ok((TabularPolicy::new(probs)?, grads))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (i, head) in self.mean_heads.iter().enumerate() {
            let mut buf = Vec::new();
            head.write_checkpoint(&mut buf)?;
            fs::write(dir.join(format!("mean_{i}.net")), buf)?;
        }
        for (i, head) in self.var_heads.iter().enumerate() {
            let mut buf = Vec::new();
            head.write_checkpoint(&mut buf)?;
            fs::write(dir.join(format!("var_{i}.net")), buf)?;
        }
        let manifest = serde_json::to_string_pretty(&self.cfg)?;
        fs::write(dir.join("policy.json"), manifest)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<PolicyParams> {
        let cfg: PolicyConfig = serde_json::from_str(&fs::read_to_string(dir.join("policy.json"))?)?;
        cfg.validate()?;
        let mut mean_heads = Vec::with_capacity(cfg.action_dim);
        let mut var_heads = Vec::with_capacity(cfg.action_dim);
        for i in 0..cfg.action_dim {
            let bytes = fs::read(dir.join(format!("mean_{i}.net")))?;
            mean_heads.push(NetParams::read_checkpoint(bytes.as_slice())?);
            let bytes = fs::read(dir.join(format!("var_{i}.net")))?;
            var_heads.push(NetParams::read_checkpoint(bytes.as_slice())?);
        }
        Ok(PolicyParams { cfg, mean_heads, var_heads })
    }
}

/// Empirical estimates for the score bound M_g, the score Lipschitz constant
/// beta, and the Fisher lower bound mu_f, sampled under the exact discounted
/// visitation of the tabularized policy. These are reported diagnostics, not
/// enforced constraints.
#[derive(Debug, Clone, Serialize)]
pub struct Assumption1Estimate {
    pub m_g_hat: f64,
    pub beta_hat: f64,
    pub mu_f_hat: f64,
    pub n_samples: usize,
}

pub fn estimate_assumption1(
    pp: &PolicyParams,
    world: &GridWorld,
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Assumption1Estimate> {
    if n_samples < 1000 {
        return Err(Error::Validation(format!(
            "need at least 1000 samples for the constants, got {n_samples}"
        )));
    }
    let pi_tab = pp.tabularize(world)?;
    let d = visitation_distribution(&pi_tab, &world.mdp, &world.nu)?;
    let dim = pp.param_count();
    let mut fisher = DMatrix::<f64>::zeros(dim, dim);
    let mut m_g_hat: f64 = 0.0;
    let n_actions = world.mdp.n_actions();

    // perturbed copy for the Lipschitz ratio
    let mut beta_hat: f64 = 0.0;
    let mut perturbed = pp.clone();
    let eps = 1e-3;
    let dir: Vec<f64> = {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x *= eps / norm;
        }
        v
    };
    perturbed.add_from_flat(&dir, 1.0)?;

    for k in 0..n_samples {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut idx = d.len() - 1;
        for (i, &p) in d.iter().enumerate() {
            acc += p;
            if u < acc {
                idx = i;
                break;
            }
        }
        let (s, a) = (idx / n_actions, idx % n_actions);
        let coords = &world.state_coords[s];
        let action = vec![world.action_coords[a]];
        let sc = pp.score(coords, &action)?;
        if sc.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite score sample".into()));
        }
        let norm = sc.iter().map(|v| v * v).sum::<f64>().sqrt();
        m_g_hat = m_g_hat.max(norm);
        let v = DVector::from_column_slice(&sc);
        fisher.ger(1.0 / n_samples as f64, &v, &v, 1.0);
        // a thinned subset is enough for the Lipschitz ratio
        if k % 16 == 0 {
            let sc2 = perturbed.score(coords, &action)?;
            let diff = sc
                .iter()
                .zip(&sc2)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            beta_hat = beta_hat.max(diff / eps);
        }
    }
    if fisher.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("Fisher matrix is not finite".into()));
    }
    let eig = fisher.symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(Assumption1Estimate {
        m_g_hat,
        beta_hat,
        // Gram matrices are PSD; tiny negative eigenvalues are rounding
        mu_f_hat: min_eig.max(0.0),
        n_samples,
    })
}
