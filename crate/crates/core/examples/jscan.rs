// scratch: isolate the critic inversion - pure reward regression vs stages
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
    let stages: usize = std::env::args().nth(1).unwrap().parse().unwrap();
    let warm: bool = std::env::args().nth(2).unwrap().parse().unwrap();
    let beta: f64 = std::env::args().nth(3).unwrap().parse().unwrap();
    let mu_shift: f64 = std::env::args().nth(4).unwrap().parse().unwrap();
    let world = two_state_bench(0.5, 21, 1.0);
    let mut pp = init_policy(&PolicyConfig {
        state_dim: 1, action_dim: 1, depth: 2, width: 16,
        activation: Activation::Sigmoid, linear_output: true,
        sigma2_min: 1e-3, var_raw_offset: -2.0, action_bounds: (-2.0, 2.0), seed: 1026,
    }).unwrap();
    // shift both means to mu_shift by adjusting output (sigmoid features ~const)
    for head in &mut pp.mean_heads {
        let (m, _) = (head.forward(&[1.0]).unwrap(), ());
        let x_norm: f64 = 0.0; let _ = x_norm;
        // crude: scale output toward desired value via bisection on a scalar multiplier + offset direction
        let cur = m;
        let target_shift = mu_shift - cur;
        // adding c to every output coordinate shifts mu by c * sum(x)/sqrt(m); x ~ sigmoid features of s
        let probe = {
            let mut h2 = head.clone();
            for v in h2.output.iter_mut() { *v += 1.0; }
            h2.forward(&[1.0]).unwrap() - cur
        };
        for v in head.output.iter_mut() { *v += target_shift / probe; }
    }
    let (m0, k0) = pp.mean_kappa(&world.state_coords[0]).unwrap();
    let (m1, k1) = pp.mean_kappa(&world.state_coords[1]).unwrap();
    println!("policy mu=({:.2},{:.2}) sigma=({:.2},{:.2})", m0[0], m1[0], k0[0].sqrt(), k1[0].sqrt());

    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let buf = ReplayBuffer::from_rollout(collect_rollout(&pp, &world, 512, &mut rng).unwrap());
    let cfg = CriticConfig {
        net: NetConfig { depth: 2, width: 64, input_dim: 2, activation: Activation::Sigmoid, seed: 7, linear_output: true },
        gamma: 0.5, target_stages: stages, inner_steps: 512, beta_prime: Some(beta),
        warm_start_stages: warm, project_output_layer: false, trace_every: 0,
    };
    let est = fit_critic(&pp, &buf, &cfg, &mut rng).unwrap();
    let critic = est.final_params();
    let pi_tab = pp.tabularize(&world).unwrap();
    let q_pi = exact_q_policy(&pi_tab, &world.mdp).unwrap();
    for ai in (0..21).step_by(4) {
        let a = world.action_coords[ai];
        println!("  a={a:+.1} Q0={:.3} Qh0={:.3} | Q1={:.3} Qh1={:.3}",
            q_pi.values[0][ai], critic.forward(&world.sa_input(0, ai)).unwrap(),
            q_pi.values[1][ai], critic.forward(&world.sa_input(1, ai)).unwrap());
    }
}
