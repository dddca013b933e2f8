//! Versioned JSON configuration schemas for the CLI surfaces, plus the
//! built-in benchmark fixtures. Unknown keys are rejected everywhere so a
//! typo in one of the many loop counts cannot silently misconfigure a run.

use serde::{Deserialize, Serialize};

use crate::critic::CriticConfig;
use crate::error::{Error, Result};
use crate::mdp::{DiscretizedMdp, GridWorld};
use crate::net::{Activation, NetConfig};
use crate::policy::PolicyConfig;

pub const SCHEMA_VERSION: u32 = 1;

fn check_schema(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unsupported schema_version {v}, expected {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

/// Where the MDP comes from: a built-in benchmark or a fixture file with
/// default grid geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_path: Option<String>,
    /// Discretization knobs for builtins that support them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_cells: Option<usize>,
}

impl MdpSpec {
    pub fn builtin(name: &str) -> Self {
        Self { builtin: Some(name.into()), fixture_path: None, state_cells: None, action_cells: None }
    }

    pub fn build(&self) -> Result<GridWorld> {
        match (&self.builtin, &self.fixture_path) {
            (Some(name), None) => build_builtin(name, self.state_cells, self.action_cells),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::Config(format!("cannot read fixture {path}: {e}"))
                })?;
                let mdp = DiscretizedMdp::from_json(&text)?;
                GridWorld::with_default_geometry(mdp)
            }
            _ => Err(Error::Config(
                "mdp needs exactly one of `builtin` or `fixture_path`".into(),
            )),
        }
    }
}

fn build_builtin(name: &str, state_cells: Option<usize>, action_cells: Option<usize>) -> Result<GridWorld> {
    match name {
        "two_state" => two_state_bench(action_cells.unwrap_or(21)),
        "line_world" => line_world(state_cells.unwrap_or(21), action_cells.unwrap_or(21)),
        "two_state_lab" => two_state_lab(action_cells.unwrap_or(9)),
        other => Err(Error::Config(format!(
            "unknown builtin mdp `{other}` (expected two_state, line_world, or two_state_lab)"
        ))),
    }
}

/// 2-state benchmark: a shared best action a* = +1 with per-state reward
/// amplitudes and mildly action-coupled switching. gamma = 0.5.
pub fn two_state_bench(n_actions: usize) -> Result<GridWorld> {
    let grid: Vec<f64> = (0..n_actions)
        .map(|a| -2.0 + 4.0 * a as f64 / (n_actions - 1) as f64)
        .collect();
    let target = 1.0;
    let amp = [0.7, 1.0];
    let mut rewards = vec![vec![0.0; n_actions]; 2];
    let mut transitions = vec![vec![vec![0.0; 2]; n_actions]; 2];
    for s in 0..2 {
        for (ai, &a) in grid.iter().enumerate() {
            let d = a - target;
            rewards[s][ai] = (amp[s] * (1.0 - d * d / 9.0)).clamp(0.0, 1.0);
            let p_switch = 0.45 + 0.1 / (1.0 + (-a).exp());
            transitions[s][ai][1 - s] = p_switch;
            transitions[s][ai][s] = 1.0 - p_switch;
        }
    }
    let mdp = DiscretizedMdp::new(0.5, rewards, transitions)?;
    GridWorld::new(mdp, vec![vec![-1.0], vec![1.0]], grid, (-2.0, 2.0), vec![0.5, 0.5])
}

/// Discretized 1-D benchmark: 21 states on [-1,1], best action
/// a*(s) = 0.6 + 0.3 s, action-steered Gaussian drift. gamma = 0.5.
pub fn line_world(n_states: usize, n_actions: usize) -> Result<GridWorld> {
    let s_grid: Vec<f64> = (0..n_states)
        .map(|i| -1.0 + 2.0 * i as f64 / (n_states - 1) as f64)
        .collect();
    let a_grid: Vec<f64> = (0..n_actions)
        .map(|i| -2.0 + 4.0 * i as f64 / (n_actions - 1) as f64)
        .collect();
    let mut rewards = vec![vec![0.0; n_actions]; n_states];
    let mut transitions = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    let dyn_sigma = 0.35f64;
    for (si, &s) in s_grid.iter().enumerate() {
        for (ai, &a) in a_grid.iter().enumerate() {
            let a_star = 0.6 + 0.3 * s;
            let d = a - a_star;
            let amp = 0.7 + 0.3 * (s + 1.0) / 2.0;
            rewards[si][ai] = (amp * (1.0 - d * d / 16.0)).clamp(0.0, 1.0);
            let mean_next = (s + 0.25 * (a / 2.0).tanh()).clamp(-1.0, 1.0);
            let mut row: Vec<f64> = s_grid
                .iter()
                .map(|&s2| {
                    (-(s2 - mean_next) * (s2 - mean_next) / (2.0 * dyn_sigma * dyn_sigma)).exp()
                })
                .collect();
            let sum: f64 = row.iter().sum();
            for p in row.iter_mut() {
                *p /= sum;
            }
            let s2: f64 = row.iter().sum();
            row[0] += 1.0 - s2;
            transitions[si][ai] = row;
        }
    }
    let mdp = DiscretizedMdp::new(0.5, rewards, transitions)?;
    let nu = vec![1.0 / n_states as f64; n_states];
    GridWorld::new(
        mdp,
        s_grid.iter().map(|&s| vec![s]).collect(),
        a_grid,
        (-2.0, 2.0),
        nu,
    )
}

/// Small 2-state fixture for the error-decomposition sweeps: smooth
/// action-dependent rewards, fast mixing, gamma = 0.5.
pub fn two_state_lab(n_actions: usize) -> Result<GridWorld> {
    let mut rewards = vec![vec![0.0; n_actions]; 2];
    for (s, row) in rewards.iter_mut().enumerate() {
        for (a, r) in row.iter_mut().enumerate() {
            let x = a as f64 / (n_actions - 1) as f64;
            *r = 0.1 + 0.8 * ((x - 0.3 - 0.3 * s as f64).powi(2)).min(1.0);
        }
    }
    let trans = |p: f64| vec![vec![p, 1.0 - p]; n_actions];
    let mdp = DiscretizedMdp::new(0.5, rewards, vec![trans(0.7), trans(0.35)])?;
    GridWorld::with_default_geometry(mdp)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub width: usize,
    pub depth: usize,
    pub activation: Activation,
    #[serde(default = "default_true")]
    pub linear_output: bool,
    pub sigma2_min: f64,
    #[serde(default)]
    pub var_raw_offset: f64,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticSpec {
    pub width: usize,
    pub depth: usize,
    pub activation: Activation,
    #[serde(default = "default_true")]
    pub linear_output: bool,
    pub target_stages: usize,
    pub inner_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_prime: Option<f64>,
    #[serde(default)]
    pub warm_start_stages: bool,
    #[serde(default = "default_true")]
    pub project_output_layer: bool,
    #[serde(default)]
    pub trace_every: usize,
}

/// Full training-run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub schema_version: u32,
    pub mdp: MdpSpec,
    pub seed: u64,
    pub k_iters: usize,
    pub rollout_n: usize,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_from_mu_samples: Option<usize>,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    pub actor: ActorSpec,
    pub critic: CriticSpec,
}

fn default_eval_every() -> usize {
    1
}

impl TrainFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: TrainFile = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("train config: {e}")))?;
        check_schema(file.schema_version)?;
        Ok(file)
    }

    pub fn policy_config(&self, world: &GridWorld) -> PolicyConfig {
        PolicyConfig {
            state_dim: world.state_dim(),
            action_dim: world.action_dim(),
            depth: self.actor.depth,
            width: self.actor.width,
            activation: self.actor.activation,
            linear_output: self.actor.linear_output,
            sigma2_min: self.actor.sigma2_min,
            var_raw_offset: self.actor.var_raw_offset,
            action_bounds: world.action_bounds,
            seed: self.seed.wrapping_mul(13).wrapping_add(1000),
        }
    }

    pub fn critic_config(&self, world: &GridWorld) -> CriticConfig {
        CriticConfig {
            net: NetConfig {
                depth: self.critic.depth,
                width: self.critic.width,
                input_dim: world.state_dim() + world.action_dim(),
                activation: self.critic.activation,
                seed: self.seed.wrapping_mul(17).wrapping_add(2000),
                linear_output: self.critic.linear_output,
            },
            gamma: world.gamma(),
            target_stages: self.critic.target_stages,
            inner_steps: self.critic.inner_steps,
            beta_prime: self.critic.beta_prime,
            warm_start_stages: self.critic.warm_start_stages,
            project_output_layer: self.critic.project_output_layer,
            trace_every: self.critic.trace_every,
        }
    }
}

/// The frozen benchmark configuration for a builtin, as used by the
/// acceptance suite.
pub fn benchmark_train_file(builtin: &str, seed: u64) -> Result<TrainFile> {
    let (rollout_n, alpha) = match builtin {
        "two_state" => (512, 1.5),
        "line_world" => (2048, 1.0),
        other => return Err(Error::Config(format!("no benchmark defaults for `{other}`"))),
    };
    Ok(TrainFile {
        schema_version: SCHEMA_VERSION,
        mdp: MdpSpec::builtin(builtin),
        seed,
        k_iters: 200,
        rollout_n,
        alpha,
        alpha_from_mu_samples: None,
        eval_every: 1,
        actor: ActorSpec {
            width: 16,
            depth: 2,
            activation: Activation::Sigmoid,
            linear_output: true,
            sigma2_min: 1e-3,
            var_raw_offset: -1.0,
        },
        critic: CriticSpec {
            width: 64,
            depth: 2,
            activation: Activation::Sigmoid,
            linear_output: true,
            target_stages: 5,
            inner_steps: 512,
            beta_prime: Some(1.0),
            warm_start_stages: true,
            project_output_layer: false,
            trace_every: 0,
        },
    })
}

/// Error-decomposition sweep configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeFile {
    pub schema_version: u32,
    /// "sweep_n" (sampling error vs n), "sweep_l" (optimization error vs L),
    /// or "synthetic" (fit of generated power-law data).
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<u64>,
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

fn default_base_seed() -> u64 {
    7000
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub exponent: f64,
    pub coefficient: f64,
}

impl DecomposeFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: DecomposeFile = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("decompose config: {e}")))?;
        check_schema(file.schema_version)?;
        match file.mode.as_str() {
            "sweep_n" | "sweep_l" | "synthetic" => {}
            other => {
                return Err(Error::Config(format!(
                    "unknown decompose mode `{other}` (expected sweep_n, sweep_l, or synthetic)"
                )))
            }
        }
        if file.mode == "synthetic" && file.synthetic.is_none() {
            return Err(Error::Config("synthetic mode needs a `synthetic` block".into()));
        }
        Ok(file)
    }
}

/// Mixing-diagnostic configuration: uniform tabular policy over the fixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingFile {
    pub schema_version: u32,
    pub mdp: MdpSpec,
    pub max_lag: usize,
}

impl MixingFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: MixingFile = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("mixing config: {e}")))?;
        check_schema(file.schema_version)?;
        if file.max_lag == 0 {
            return Err(Error::Config("max_lag must be >= 1".into()));
        }
        Ok(file)
    }
}
