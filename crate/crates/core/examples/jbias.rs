// scratch: per-iteration tilt and movement audit for a diverging seed
use neural_ac::actor::*;
use neural_ac::critic::*;
use neural_ac::mdp::*;
use neural_ac::net::*;
use neural_ac::policy::*;
use neural_ac::sampling::*;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

fn two_state_bench(gamma: f64, n_actions: usize, rscale: f64) -> GridWorld {
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
            rewards[s][ai] = (rscale * amp[s] * (1.0 - d * d / 9.0)).clamp(0.0, 1.0);
            let p_switch = 0.45 + 0.1 / (1.0 + (-a).exp());
            transitions[s][ai][1 - s] = p_switch;
            transitions[s][ai][s] = 1.0 - p_switch;
        }
    }
    let mdp = DiscretizedMdp::new(gamma, rewards, transitions).unwrap();
    GridWorld::new(mdp, vec![vec![-1.0], vec![1.0]], grid, (-2.0, 2.0), vec![0.5, 0.5]).unwrap()
}

fn main() {
    let world = two_state_bench(0.5, 21, 1.0);
    let pcfg = PolicyConfig {
        state_dim: 1, action_dim: 1, depth: 2, width: 16,
        activation: Activation::Sigmoid, linear_output: true,
        sigma2_min: 1e-3, var_raw_offset: -2.0, action_bounds: (-2.0, 2.0), seed: 1026,
    };
    let ccfg = CriticConfig {
        net: NetConfig { depth: 2, width: 64, input_dim: 2, activation: Activation::Sigmoid, seed: 0, linear_output: true },
        gamma: 0.5, target_stages: 5, inner_steps: 512, beta_prime: Some(1.0),
        warm_start_stages: true, project_output_layer: false, trace_every: 0,
    };
    let mut pp = init_policy(&pcfg).unwrap();
    let mut rollout_rng = ChaCha8Rng::seed_from_u64(9001);
    let mut critic_rng = ChaCha8Rng::seed_from_u64(9002);
    for k in 1..=60usize {
        let rollout = collect_rollout(&pp, &world, 512, &mut rollout_rng).unwrap();
        let buf = ReplayBuffer::from_rollout(rollout);
        let est = fit_critic(&pp, &buf, &ccfg, &mut critic_rng).unwrap();
        let critic = est.final_params();
        let d = gradient_estimate(&pp, critic, buf.transitions()).unwrap();
        let (m_before, _) = pp.mean_kappa(&world.state_coords[1]).unwrap();
        let tilt0 = critic.forward(&world.sa_input(0, 20)).unwrap()
            - critic.forward(&world.sa_input(0, 0)).unwrap();
        let tilt1 = critic.forward(&world.sa_input(1, 20)).unwrap()
            - critic.forward(&world.sa_input(1, 0)).unwrap();
        let (next, _) = actor_update(&pp, &d, 2.0, k).unwrap();
        pp = next;
        let (m_after, kap) = pp.mean_kappa(&world.state_coords[1]).unwrap();
        if k % 5 == 0 || k <= 6 {
            println!(
                "k={k}: tilt=({tilt0:+.3},{tilt1:+.3}) mu1 {:+.3} -> {:+.3} (d mu {:+.4}) sigma1={:.3}",
                m_before[0], m_after[0], m_after[0] - m_before[0], kap[0].sqrt()
            );
        }
    }
}
