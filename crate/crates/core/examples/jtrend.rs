// scratch: benchmark training gap-halving exploration (shared-target fixture)
use neural_ac::actor::*;
use neural_ac::critic::CriticConfig;
use neural_ac::mdp::*;
use neural_ac::net::*;
use neural_ac::policy::PolicyConfig;

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

fn line_world(gamma: f64, n_states: usize, n_actions: usize) -> GridWorld {
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
            let flat_amp = std::env::var("FLAT_AMP").is_ok();
            let const_target = std::env::var("CONST_TARGET").is_ok();
            let no_drift = std::env::var("NO_DRIFT").is_ok();
            let a_star = if const_target { 0.6 } else { 0.6 + 0.3 * s };
            let d = a - a_star;
            let amp = if flat_amp { 0.85 } else { 0.7 + 0.3 * (s + 1.0) / 2.0 };
            rewards[si][ai] = (amp * (1.0 - d * d / 16.0)).clamp(0.0, 1.0);
            // drift toward higher s for higher a
            let drift = if no_drift { 0.0 } else { 0.25 };
            let mean_next = (s + drift * (a / 2.0).tanh()).clamp(-1.0, 1.0);
            let mut row: Vec<f64> = s_grid
                .iter()
                .map(|&s2| (-(s2 - mean_next) * (s2 - mean_next) / (2.0 * dyn_sigma * dyn_sigma)).exp())
                .collect();
            let sum: f64 = row.iter().sum();
            for p in row.iter_mut() { *p /= sum; }
            let s2: f64 = row.iter().sum();
            row[0] += 1.0 - s2;
            transitions[si][ai] = row;
        }
    }
    let mdp = DiscretizedMdp::new(gamma, rewards, transitions).unwrap();
    let nu = vec![1.0 / n_states as f64; n_states];
    GridWorld::new(mdp, s_grid.iter().map(|&s| vec![s]).collect(), a_grid, (-2.0, 2.0), nu).unwrap()
}

fn main() {
    let alpha: f64 = std::env::args().nth(1).unwrap().parse().unwrap();
    let beta: f64 = std::env::args().nth(2).unwrap().parse().unwrap();
    let rscale: f64 = std::env::args().nth(3).unwrap().parse().unwrap();
    let k_iters: usize = std::env::args().nth(4).unwrap().parse().unwrap();
    let l: usize = std::env::args().nth(5).map(|v| v.parse().unwrap()).unwrap_or(512);
    let offset: f64 = std::env::args().nth(6).map(|v| v.parse().unwrap()).unwrap_or(-2.0);
    let oracle: bool = beta == 0.0;
    let world = if std::env::var("LINE").is_ok() {
        line_world(0.5, 21, 21)
    } else {
        two_state_bench(0.5, 21, rscale)
    };
    let pcfg = PolicyConfig {
        state_dim: 1, action_dim: 1, depth: 2, width: 16,
        activation: Activation::Sigmoid, linear_output: true,
        sigma2_min: 1e-3, var_raw_offset: offset, action_bounds: (-2.0, 2.0), seed: 1000,
    };
    let ccfg = CriticConfig {
        net: NetConfig { depth: 2, width: 64, input_dim: 2, activation: Activation::Sigmoid, seed: 0, linear_output: true },
        gamma: 0.5, target_stages: 5, inner_steps: l, beta_prime: Some(beta),
        warm_start_stages: true, project_output_layer: false, trace_every: 0,
    };
    for seed in 0..10u64 {
        let mut pcfg_s = pcfg;
        pcfg_s.seed = 1000 + seed * 13;
        if oracle {
            oracle_train(&world, &pcfg_s, alpha, k_iters, 2000 + seed);
            continue;
        }
        let tp = TrainParams {
            k_iters, rollout_n: std::env::var("ROLLOUT_N").map(|v| v.parse().unwrap()).unwrap_or(512), alpha, alpha_from_mu_samples: None,
            eval_every: 1, seed: 2000 + seed, deterministic_timing: true,
            keep_checkpoints: std::env::var("TRACE_MU").is_ok(),
        };
        let res = train(&world, &pcfg_s, &ccfg, &tp).unwrap();
        if std::env::var("TRACE_MU").is_ok() && seed == 2 {
            for r in res.records.iter().step_by(20) {
                println!("    k={} gap={:.4} dnorm={:.4} gradnorm={:.4} clamped={}", r.k, r.gap, r.d_norm, r.grad_norm, r.clamped);
            }
            let pf = &res.final_policy;
            for si in [0usize, 10, 20] {
                let (m, kap) = pf.mean_kappa(&world.state_coords[si]).unwrap();
                println!("    final s={:+.1}: mu={:+.3} sigma={:.3} (a*={:+.2})", world.state_coords[si][0], m[0], kap[0].sqrt(), 0.6 + 0.3 * world.state_coords[si][0]);
            }
        }
        if false {
            use neural_ac::policy::init_policy;
            let pp0 = init_policy(&pcfg_s).unwrap();
            let (m0, k0) = pp0.mean_kappa(&world.state_coords[0]).unwrap();
            let (m1, k1) = pp0.mean_kappa(&world.state_coords[1]).unwrap();
            println!("  seed {seed} init: mu=({:.2},{:.2}) sigma=({:.2},{:.2})", m0[0], m1[0], k0[0].sqrt(), k1[0].sqrt());
            let pf = &res.final_policy;
            let (m0, k0) = pf.mean_kappa(&world.state_coords[0]).unwrap();
            let (m1, k1) = pf.mean_kappa(&world.state_coords[1]).unwrap();
            println!("  seed {seed} final: mu=({:.2},{:.2}) sigma=({:.2},{:.2})", m0[0], m1[0], k0[0].sqrt(), k1[0].sqrt());
            for r in res.records.iter().step_by(8) {
                println!("    k={} gap={:.4} dnorm={:.4} gradnorm={:.4}", r.k, r.gap, r.d_norm, r.grad_norm);
            }
            // critic curve at the checkpoint closest to k=40
            if let Some((k, pol, critic)) = res.checkpoints.iter().find(|(k, _, _)| *k >= 40) {
                let (m0, _) = pol.mean_kappa(&world.state_coords[0]).unwrap();
                let (m1, _) = pol.mean_kappa(&world.state_coords[1]).unwrap();
                println!("    critic curve at k={k} (mu {:.2},{:.2}):", m0[0], m1[0]);
                let pi_tab = pol.tabularize(&world).unwrap();
                let q_pi = exact_q_policy(&pi_tab, &world.mdp).unwrap();
                for ai in (0..world.mdp.n_actions()).step_by(4) {
                    let a = world.action_coords[ai];
                    let qh0 = critic.forward(&world.sa_input(0, ai)).unwrap();
                    let qh1 = critic.forward(&world.sa_input(1, ai)).unwrap();
                    println!("      a={a:+.1} Q0={:.3} Qh0={:.3} | Q1={:.3} Qh1={:.3}",
                        q_pi.values[0][ai], qh0, q_pi.values[1][ai], qh1);
                }
            }
        }
        let first_gap = res.records.first().unwrap().gap;
        let last_gap = res.records.last().unwrap().gap;
        let gaps: Vec<f64> = res.records.iter().map(|r| r.gap).collect();
        let wm = windowed_median(&gaps, 20);
        let increases = wm.windows(2).filter(|w| w[1] > w[0] + 1e-12).count();
        let max_inc = wm.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
        println!(
            "seed {seed}: gap {first_gap:.4} -> {last_gap:.4} (ratio {:.3}), wm increases {increases}/{} (max +{max_inc:.5}), critic_err {:.3}",
            last_gap / first_gap, wm.len() - 1, res.records.last().unwrap().critic_sup_err
        );
    }
}

fn oracle_train(world: &GridWorld, pcfg: &PolicyConfig, alpha: f64, k_iters: usize, seed: u64) {
    use neural_ac::sampling::collect_rollout;
    use neural_ac::policy::init_policy;
    use rand_chacha::ChaCha8Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut pp = init_policy(pcfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j_star = optimal_return(&world.mdp, &world.nu).unwrap();
    let g0 = j_star - exact_return(&pp, world).unwrap();
    let mut last = g0;
    for k in 1..=k_iters {
        let pi_tab = pp.tabularize(world).unwrap();
        let q = exact_q_policy(&pi_tab, &world.mdp).unwrap();
        let rollout = collect_rollout(&pp, world, 512, &mut rng).unwrap();
        let d = gradient_estimate_with(&pp, |s, a| {
            Ok(q.values[world.snap_state(s)][world.snap_action(a[0])])
        }, &rollout.transitions).unwrap();
        let (next, _) = actor_update(&pp, &d, alpha, k).unwrap();
        pp = next;
        last = j_star - exact_return(&pp, world).unwrap();
    }
    println!("  oracle-Q seed {seed}: gap {g0:.4} -> {last:.4} (ratio {:.3})", last / g0);
}
