//! Markovian trajectory collection, the per-iteration replay buffer with
//! uniform resampling, and the geometric-mixing diagnostic that fits
//! d_TV(tau) <= p * rho^tau against exact matrix powers.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{stationary_distribution, DiscretizedMdp, GridWorld, TabularPolicy};
use crate::policy::PolicyParams;
use crate::util::linear_fit;

/// One sampled tuple (s, a, r, s'). The next action a' is not stored: it is
/// drawn fresh from the current policy every time the tuple is replayed.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
}

/// A rollout plus bookkeeping about post-sampling clamps.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub transitions: Vec<Transition>,
    pub clamped: usize,
}

/// One unbroken Markovian trajectory of n tuples: s0 ~ nu, a_t ~ pi(.|s_t),
/// s_{t+1} ~ P(.|s_t, a_t). No resets inside a rollout.
pub fn collect_rollout(
    pp: &PolicyParams,
    world: &GridWorld,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout> {
    if n == 0 {
        return Err(Error::Validation("rollout length must be >= 1".into()));
    }
    let mut transitions = Vec::with_capacity(n);
    let mut clamped = 0;
    let mut s_idx = world.sample_initial_state(rng);
    for _ in 0..n {
        let s_coords = world.state_coords[s_idx].clone();
        let (a, was_clamped) = pp.sample_action(&s_coords, rng)?;
        if was_clamped {
            clamped += 1;
        }
        let a_idx = world.snap_action(a[0]);
        let r = world.reward(s_idx, a_idx);
        let next_idx = world.step(s_idx, a_idx, rng);
        transitions.push(Transition {
            s: s_coords,
            a,
            r,
            s_next: world.state_coords[next_idx].clone(),
        });
        s_idx = next_idx;
    }
    Ok(Rollout { transitions, clamped })
}

/// Stored dataset for one outer iteration; rebuilt from scratch every time
/// new tuples are collected.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    transitions: Vec<Transition>,
}

impl ReplayBuffer {
    pub fn from_rollout(rollout: Rollout) -> Self {
        Self { transitions: rollout.transitions }
    }

    pub fn from_transitions(transitions: Vec<Transition>) -> Self {
        Self { transitions }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Uniform draw with replacement.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<&Transition> {
        if self.transitions.is_empty() {
            return Err(Error::Validation("cannot sample from an empty replay buffer".into()));
        }
        let i = rng.random_range(0..self.transitions.len());
        Ok(&self.transitions[i])
    }
}

/// a' ~ pi(.|s') for a replayed tuple; a fresh draw on every call.
pub fn resample_next_action(
    pp: &PolicyParams,
    t: &Transition,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    Ok(pp.sample_action(&t.s_next, rng)?.0)
}

/// Rollout dump: one row per tuple, full-precision floats (17 significant
/// digits), header row named by dimension.
pub fn write_rollout_csv<W: Write>(mut w: W, transitions: &[Transition]) -> Result<()> {
    let first = transitions
        .first()
        .ok_or_else(|| Error::Validation("empty rollout".into()))?;
    let (sd, ad) = (first.s.len(), first.a.len());
    let mut header = Vec::new();
    header.extend((0..sd).map(|i| format!("s{i}")));
    header.extend((0..ad).map(|i| format!("a{i}")));
    header.push("r".into());
    header.extend((0..sd).map(|i| format!("s_next{i}")));
    writeln!(w, "{}", header.join(","))?;
    for t in transitions {
        let mut fields = Vec::with_capacity(2 * sd + ad + 1);
        fields.extend(t.s.iter().map(|v| format!("{v:.16e}")));
        fields.extend(t.a.iter().map(|v| format!("{v:.16e}")));
        fields.push(format!("{:.16e}", t.r));
        fields.extend(t.s_next.iter().map(|v| format!("{v:.16e}")));
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Total-variation decay to stationarity and the fitted geometric law.
#[derive(Debug, Clone, Serialize)]
pub struct MixingReport {
    /// (lag, exact TV distance maximized over starting states)
    pub tv_by_lag: Vec<(usize, f64)>,
    /// fitted prefactor p in d_TV <= p rho^tau
    pub p: f64,
    /// fitted decay rate rho
    pub rho: f64,
    pub r_squared: f64,
    /// whether the TV sequence was nonincreasing (reported, not required)
    pub tv_monotone: bool,
}

/// Exact TV distance between the lag-tau state-action distribution started
/// from each state (first action from pi) and the stationary distribution,
/// followed by a log-linear fit over lags with TV above 1e-12.
///
/// The chain lives on S x A; conditioning is on the starting state only,
/// with the first action marginalized from pi.
pub fn mixing_diagnostic(
    pi: &TabularPolicy,
    mdp: &DiscretizedMdp,
    max_lag: usize,
) -> Result<MixingReport> {
    let zeta = DVector::from_column_slice(&stationary_distribution(pi, mdp)?);
    let m_t = mdp.sa_chain_matrix(pi)?.transpose();
    let n_states = mdp.n_states();

    // one distribution per starting state, evolved a lag at a time
    let mut dists: Vec<DVector<f64>> = (0..n_states)
        .map(|s| {
            let mut v = DVector::zeros(mdp.n_sa());
            for a in 0..mdp.n_actions() {
                v[mdp.sa_index(s, a)] = pi.probs[s][a];
            }
            v
        })
        .collect();

    let mut tv_by_lag = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let worst = dists
            .iter()
            .map(|d| 0.5 * (d - &zeta).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        tv_by_lag.push((lag, worst));
        if lag < max_lag {
            for d in &mut dists {
                *d = &m_t * &*d;
            }
        }
    }

    let tv_monotone = tv_by_lag.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-15);

    let pts: Vec<(f64, f64)> = tv_by_lag
        .iter()
        .filter(|(_, tv)| *tv > 1e-12)
        .map(|(lag, tv)| (*lag as f64, tv.ln()))
        .collect();
    if pts.len() < 2 {
        // already at stationarity: nothing to fit
        return Ok(MixingReport { tv_by_lag, p: 0.0, rho: 0.0, r_squared: 1.0, tv_monotone });
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    Ok(MixingReport {
        tv_by_lag,
        p: intercept.exp(),
        rho: slope.exp(),
        r_squared: r2,
        tv_monotone,
    })
}
