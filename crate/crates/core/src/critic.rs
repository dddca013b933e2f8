//! Critic estimation: J target-network stages, each running L projected
//! semi-gradient steps over uniformly replayed tuples with step size
//! beta' (default 1/sqrt(L)), followed by averaging of the L post-projection
//! iterates. The projection set is the per-layer ball of radius 1/(1-gamma)
//! around the stage initialization.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{init_params_with, project_in_place, NetConfig, NetParams, ParamBall};
use crate::policy::PolicyParams;
use crate::sampling::{resample_next_action, ReplayBuffer, Transition};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticConfig {
    pub net: NetConfig,
    pub gamma: f64,
    /// Target-update count J.
    pub target_stages: usize,
    /// Inner projected-SGD step count L.
    pub inner_steps: usize,
    /// Step size beta'; when absent, 1/sqrt(L).
    #[serde(default)]
    pub beta_prime: Option<f64>,
    /// Carry parameters across target stages instead of re-initializing
    /// (ablation; the literal algorithm re-initializes every stage).
    #[serde(default)]
    pub warm_start_stages: bool,
    /// Constrain b_D with the same radius as the weight matrices.
    #[serde(default = "default_true")]
    pub project_output_layer: bool,
    /// Record every k-th inner step in the loss trace; 0 disables tracing.
    #[serde(default)]
    pub trace_every: usize,
}

fn default_true() -> bool {
    true
}

impl CriticConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Validation(format!("critic gamma {} outside [0,1)", self.gamma)));
        }
        if self.target_stages == 0 || self.inner_steps == 0 {
            return Err(Error::Validation("target_stages and inner_steps must be >= 1".into()));
        }
        if let Some(b) = self.beta_prime {
            if b <= 0.0 {
                return Err(Error::Validation("beta_prime must be positive".into()));
            }
        }
        Ok(())
    }

    /// Projection radius 1/(1-gamma).
    pub fn radius(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }

    pub fn step_size(&self) -> f64 {
        self.beta_prime
            .unwrap_or_else(|| 1.0 / (self.inner_steps as f64).sqrt())
    }
}

/// Concatenated critic input (s, a).
pub fn sa_input(s: &[f64], a: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(s.len() + a.len());
    x.extend_from_slice(s);
    x.extend_from_slice(a);
    x
}

/// Evaluate a target network, with `None` standing for the zero function
/// Q_{k,0}.
pub fn eval_target(q: Option<&NetParams>, x: &[f64]) -> Result<f64> {
    match q {
        Some(p) => p.forward(x),
        None => Ok(0.0),
    }
}

/// y = r + gamma * Q_prev(s', a').
pub fn td_target(
    q_prev: Option<&NetParams>,
    t: &Transition,
    a_next: &[f64],
    gamma: f64,
) -> Result<f64> {
    Ok(t.r + gamma * eval_target(q_prev, &sa_input(&t.s_next, a_next))?)
}

/// One projected semi-gradient step: theta' = theta + beta' (y - Q_theta(s,a))
/// grad Q_theta(s,a), then projection onto the ball. The target y is held
/// constant; no gradient flows through it.
pub fn sgd_step(
    theta: &NetParams,
    t: &Transition,
    y: f64,
    beta_prime: f64,
    ball: &ParamBall,
) -> Result<NetParams> {
    let mut out = theta.clone();
    sgd_step_in_place(&mut out, t, y, beta_prime, ball)?;
    Ok(out)
}

pub fn sgd_step_in_place(
    theta: &mut NetParams,
    t: &Transition,
    y: f64,
    beta_prime: f64,
    ball: &ParamBall,
) -> Result<f64> {
    let x = sa_input(&t.s, &t.a);
    let prediction = theta.forward(&x)?;
    let td_error = y - prediction;
    let grad = theta.grad(&x)?;
    theta.add_scaled(&grad, beta_prime * td_error);
    project_in_place(theta, ball);
    Ok(td_error)
}

/// One averaged stage Q_{k,j} together with its initialization (the
/// projection center for that stage).
#[derive(Debug, Clone)]
pub struct CriticStage {
    pub params: NetParams,
    pub init: NetParams,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRow {
    pub stage: usize,
    pub step: usize,
    pub td_error: f64,
    pub param_dist_from_center: f64,
}

/// Output of one critic fit: the averaged parameters of every target stage
/// (the last one is the estimate Q_{k,J}) plus optional loss traces.
#[derive(Debug, Clone)]
pub struct CriticEstimate {
    pub stages: Vec<CriticStage>,
    pub traces: Vec<TraceRow>,
}

impl CriticEstimate {
    pub fn final_params(&self) -> &NetParams {
        &self.stages.last().expect("at least one stage").params
    }

    /// Largest ball violation over all stored stages (averages of ball
    /// points stay inside by convexity; this checks it numerically).
    pub fn max_ball_violation(&self, radius: f64, include_output: bool) -> f64 {
        self.stages
            .iter()
            .map(|s| {
                let mut ball = ParamBall::new(s.init.clone(), radius);
                ball.include_output = include_output;
                ball.violation(&s.params)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Lines 3-12: for each target stage j, re-initialize theta_0, run L
/// replayed semi-gradient steps toward y = r + gamma Q_{k,j-1}(s', a') with
/// the target network frozen, project every iterate, then average the L
/// post-projection iterates into Q_{k,j}. Q_{k,0} is the zero function.
pub fn fit_critic(
    pp: &PolicyParams,
    buf: &ReplayBuffer,
    cfg: &CriticConfig,
    rng: &mut ChaCha8Rng,
) -> Result<CriticEstimate> {
    cfg.validate()?;
    if buf.is_empty() {
        return Err(Error::Validation("critic fit requires a non-empty replay buffer".into()));
    }
    let beta = cfg.step_size();
    let mut stages: Vec<CriticStage> = Vec::with_capacity(cfg.target_stages);
    let mut traces = Vec::new();
    let mut q_prev: Option<NetParams> = None;

    for j in 1..=cfg.target_stages {
        let theta0 = if cfg.warm_start_stages && !stages.is_empty() {
            stages.last().unwrap().params.clone()
        } else {
            init_params_with(&cfg.net, rng)?
        };
        let mut ball = ParamBall::new(theta0.clone(), cfg.radius());
        ball.include_output = cfg.project_output_layer;

        let mut theta = theta0.clone();
        let mut sum = NetParams::zeros_like(&cfg.net)?;
        for i in 1..=cfg.inner_steps {
            let t = buf.sample(rng)?.clone();
            let a_next = resample_next_action(pp, &t, rng)?;
            let y = td_target(q_prev.as_ref(), &t, &a_next, cfg.gamma)?;
            let td_error = sgd_step_in_place(&mut theta, &t, y, beta, &ball)?;
            sum.add_scaled(&theta, 1.0);
            if cfg.trace_every > 0 && i % cfg.trace_every == 0 {
                traces.push(TraceRow {
                    stage: j,
                    step: i,
                    td_error,
                    param_dist_from_center: theta.param_dist(&theta0),
                });
            }
        }
        let mut avg = sum;
        let c = 1.0 / cfg.inner_steps as f64;
        for w in &mut avg.weights {
            *w *= c;
        }
        avg.output *= c;
        q_prev = Some(avg.clone());
        stages.push(CriticStage { params: avg, init: theta0 });
    }
    Ok(CriticEstimate { stages, traces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{exact_q_policy, DiscretizedMdp, GridWorld};
    use crate::net::Activation;
    use crate::policy::{init_policy, PolicyConfig};
    use crate::sampling::collect_rollout;
    use crate::util::seeded_rng;

    fn policy_for(world: &GridWorld, seed: u64) -> PolicyParams {
        init_policy(&PolicyConfig {
            state_dim: world.state_dim(),
            action_dim: 1,
            depth: 2,
            width: 4,
            activation: Activation::Tanh,
            linear_output: true,
            sigma2_min: 0.05,
            var_raw_offset: 0.0,
            action_bounds: world.action_bounds,
            seed,
        })
        .unwrap()
    }

    fn critic_cfg(gamma: f64, width: usize, stages: usize, steps: usize, seed: u64) -> CriticConfig {
        CriticConfig {
            net: NetConfig {
                depth: 2,
                width,
                input_dim: 2,
                activation: Activation::Tanh,
                seed,
                linear_output: true,
            },
            gamma,
            target_stages: stages,
            inner_steps: steps,
            beta_prime: None,
            warm_start_stages: false,
            project_output_layer: true,
            trace_every: 0,
        }
    }

    fn two_state_world(gamma: f64, n_actions: usize) -> GridWorld {
        let mut rewards = vec![vec![0.0; n_actions]; 2];
        for (s, row) in rewards.iter_mut().enumerate() {
            for (a, r) in row.iter_mut().enumerate() {
                *r = ((s + 1) * (a + 1)) as f64 / (2 * n_actions) as f64;
            }
        }
        let trans = |p: f64| vec![vec![p, 1.0 - p]; n_actions];
        let mdp = DiscretizedMdp::new(gamma, rewards, vec![trans(0.7), trans(0.3)]).unwrap();
        GridWorld::with_default_geometry(mdp).unwrap()
    }

    #[test]
    fn td_target_degenerate_cases() {
        let t = Transition { s: vec![0.1], a: vec![0.2], r: 0.8, s_next: vec![0.5] };
        // zero target network
        assert_eq!(td_target(None, &t, &[0.3], 0.9).unwrap(), 0.8);
        // gamma = 0 kills the lookahead for any network
        let net = init_params_with(
            &NetConfig {
                depth: 2,
                width: 3,
                input_dim: 2,
                activation: Activation::Tanh,
                seed: 1,
                linear_output: true,
            },
            &mut seeded_rng(1, 0),
        )
        .unwrap();
        assert_eq!(td_target(Some(&net), &t, &[0.3], 0.0).unwrap(), 0.8);
        // generic case equals an independent two-step evaluation
        let y = td_target(Some(&net), &t, &[0.3], 0.9).unwrap();
        let q = net.forward(&[0.5, 0.3]).unwrap();
        assert!((y - (0.8 + 0.9 * q)).abs() < 1e-15);
    }

    #[test]
    fn sgd_step_fixed_points() {
        let cfg = critic_cfg(0.9, 3, 1, 1, 2);
        let theta = init_params_with(&cfg.net, &mut seeded_rng(2, 0)).unwrap();
        let ball = ParamBall::new(theta.clone(), cfg.radius());
        let t = Transition { s: vec![0.1], a: vec![-0.3], r: 0.5, s_next: vec![0.7] };
        // zero TD error: y equals the current prediction
        let y = theta.forward(&[0.1, -0.3]).unwrap();
        let stepped = sgd_step(&theta, &t, y, 0.5, &ball).unwrap();
        assert_eq!(stepped.to_flat_vec(), theta.to_flat_vec());
        // zero step size
        let stepped = sgd_step(&theta, &t, 10.0, 0.0, &ball).unwrap();
        assert_eq!(stepped.to_flat_vec(), theta.to_flat_vec());
    }

    #[test]
    fn sgd_step_matches_pencil_and_paper_on_m1_net() {
        // D=2, m=1, relu, all pre-activations positive:
        //   hidden = w x, y_hat = b w x
        //   dy/db = w x, dy/dw = b x
        let net_cfg = NetConfig {
            depth: 2,
            width: 1,
            input_dim: 1,
            activation: Activation::Relu,
            seed: 0,
            linear_output: false,
        };
        let mut theta = NetParams::zeros_like(&net_cfg).unwrap();
        let (w, b, x) = (0.8, 1.2, 2.0);
        theta.weights[0][(0, 0)] = w;
        theta.output[0] = b;
        let ball = ParamBall::new(theta.clone(), 1e9);
        let t = Transition { s: vec![], a: vec![x], r: 0.0, s_next: vec![] };
        let (y, beta) = (3.0, 0.25);

        let stepped = sgd_step(&theta, &t, y, beta, &ball).unwrap();
        let y_hat = b * w * x;
        let delta = y - y_hat;
        let w_expect = w + beta * delta * b * x;
        let b_expect = b + beta * delta * w * x;
        assert!((stepped.weights[0][(0, 0)] - w_expect).abs() < 1e-15);
        assert!((stepped.output[0] - b_expect).abs() < 1e-15);
    }

    #[test]
    fn fit_critic_degenerate_single_step_equals_sgd_step() {
        let world = two_state_world(0.5, 3);
        let pp = policy_for(&world, 3);
        let mut rng = seeded_rng(4, 0);
        let rollout = collect_rollout(&pp, &world, 8, &mut rng).unwrap();
        let buf = ReplayBuffer::from_rollout(rollout);
        let cfg = critic_cfg(0.5, 4, 1, 1, 5);

        let mut rng_fit = seeded_rng(6, 1);
        let est = fit_critic(&pp, &buf, &cfg, &mut rng_fit).unwrap();

        // replay the same draws by hand
        let mut rng_manual = seeded_rng(6, 1);
        let theta0 = init_params_with(&cfg.net, &mut rng_manual).unwrap();
        let ball = ParamBall::new(theta0.clone(), cfg.radius());
        let t = buf.sample(&mut rng_manual).unwrap().clone();
        let a_next = resample_next_action(&pp, &t, &mut rng_manual).unwrap();
        let y = td_target(None, &t, &a_next, cfg.gamma).unwrap();
        let manual = sgd_step(&theta0, &t, y, cfg.step_size(), &ball).unwrap();

        assert_eq!(est.stages.len(), 1);
        for (a, b) in est.final_params().to_flat_vec().iter().zip(manual.to_flat_vec().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn fit_critic_zero_rewards_regresses_toward_zero() {
        let n_actions = 3;
        let trans = |p: f64| vec![vec![p, 1.0 - p]; n_actions];
        let mdp = DiscretizedMdp::new(
            0.5,
            vec![vec![0.0; n_actions]; 2],
            vec![trans(0.6), trans(0.4)],
        )
        .unwrap();
        let world = GridWorld::with_default_geometry(mdp).unwrap();
        let pp = policy_for(&world, 7);
        let mut rng = seeded_rng(8, 0);
        let buf = ReplayBuffer::from_rollout(collect_rollout(&pp, &world, 128, &mut rng).unwrap());
        let cfg = critic_cfg(0.5, 16, 1, 2048, 9);
        let est = fit_critic(&pp, &buf, &cfg, &mut rng).unwrap();

        let mean_abs = |p: &NetParams| -> f64 {
            let mut acc = 0.0;
            for t in buf.transitions() {
                acc += p.forward(&sa_input(&t.s, &t.a)).unwrap().abs();
            }
            acc / buf.len() as f64
        };
        let trained = mean_abs(est.final_params());
        let fresh = mean_abs(&est.stages[0].init);
        assert!(trained < fresh, "trained {trained} vs init {fresh}");
        assert!(trained < 0.05, "should be close to the zero function: {trained}");
    }

    #[test]
    fn fit_critic_more_target_stages_tightens_sup_error() {
        let gamma = 0.8;
        // Small rewards keep Q^pi inside the range reachable by the
        // 1/sqrt(m)-scaled class within the radius-1/(1-gamma) ball, and a
        // sigmoid hidden layer (not odd, unlike tanh) lets the class carry
        // the constant component of Q, so the per-stage fits are good and
        // the gamma^J trend is visible.
        let mut world = two_state_world(gamma, 5);
        for row in &mut world.mdp.rewards {
            for r in row.iter_mut() {
                *r *= 0.05;
            }
        }
        let pp = policy_for(&world, 10);
        let mut rng = seeded_rng(11, 0);
        let buf = ReplayBuffer::from_rollout(collect_rollout(&pp, &world, 512, &mut rng).unwrap());

        let pi_tab = pp.tabularize(&world).unwrap();
        let q_star = exact_q_policy(&pi_tab, &world.mdp).unwrap();
        let sup_err = |est: &CriticEstimate| -> f64 {
            let mut worst: f64 = 0.0;
            for s in 0..world.mdp.n_states() {
                for a in 0..world.mdp.n_actions() {
                    let v = est.final_params().forward(&world.sa_input(s, a)).unwrap();
                    worst = worst.max((v - q_star.values[s][a]).abs());
                }
            }
            worst
        };

        let mut cfg = critic_cfg(gamma, 256, 1, 16384, 12);
        cfg.net.activation = Activation::Sigmoid;
        cfg.beta_prime = Some(2.0);
        let mut rng1 = seeded_rng(13, 0);
        let e1 = sup_err(&fit_critic(&pp, &buf, &cfg, &mut rng1).unwrap());
        cfg.target_stages = 10;
        let mut rng10 = seeded_rng(13, 0);
        let e10 = sup_err(&fit_critic(&pp, &buf, &cfg, &mut rng10).unwrap());
        assert!(
            e10 < 0.6 * e1,
            "sup error should shrink as stages grow: J=1 {e1}, J=10 {e10}"
        );
    }

    #[test]
    fn fit_critic_is_deterministic_and_stays_in_ball() {
        let world = two_state_world(0.8, 3);
        let pp = policy_for(&world, 14);
        let mut rng = seeded_rng(15, 0);
        let buf = ReplayBuffer::from_rollout(collect_rollout(&pp, &world, 64, &mut rng).unwrap());
        let mut cfg = critic_cfg(0.8, 8, 3, 128, 16);
        cfg.trace_every = 32;

        let a = fit_critic(&pp, &buf, &cfg, &mut seeded_rng(17, 0)).unwrap();
        let b = fit_critic(&pp, &buf, &cfg, &mut seeded_rng(17, 0)).unwrap();
        for (sa, sb) in a.stages.iter().zip(&b.stages) {
            for (x, y) in sa.params.to_flat_vec().iter().zip(sb.params.to_flat_vec().iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert!(a.max_ball_violation(cfg.radius(), true) <= 1e-12);
        assert!(!a.traces.is_empty());
        // traces recorded at the requested cadence for every stage
        assert_eq!(a.traces.len(), 3 * (128 / 32));
    }

    #[test]
    fn fit_critic_rejects_empty_buffer() {
        let world = two_state_world(0.8, 3);
        let pp = policy_for(&world, 18);
        let buf = ReplayBuffer::from_transitions(vec![]);
        let cfg = critic_cfg(0.8, 8, 1, 8, 19);
        assert!(fit_critic(&pp, &buf, &cfg, &mut seeded_rng(20, 0)).is_err());
    }
}
