//! Empirical realization of the critic-error analysis: the best-in-class
//! reference solutions Q1 (population Bellman target), Q2 (population
//! stochastic target), Q3 (empirical target), the four-way error
//! decomposition per target stage, the stage recursion bound checked with
//! exact transition operators, Rademacher complexity estimation, the
//! conditional-expectation minimizer identity, and log-log scaling fits for
//! the sweep experiments.
//!
//! All population expectations use the exact stationary state-action
//! distribution of the tabularized policy on the grid. For everything in
//! this module, sampled tuples are canonicalized to grid coordinates first:
//! the grid is the ground-truth MDP; continuous actions are an actor-side
//! detail, and canonicalizing removes a within-cell bias that has nothing to
//! do with the quantities being measured.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::critic::{fit_critic, sa_input, CriticConfig};
use crate::error::{Error, Result};
use crate::mdp::{
    bellman_policy_op, exact_q_policy, stationary_distribution, transition_op, GridWorld,
    TabularPolicy, TabularQ,
};
use crate::net::{NetConfig, NetParams, ParamBall};
use crate::policy::PolicyParams;
use crate::sampling::{collect_rollout, ReplayBuffer, Transition};
use crate::util::{linear_fit, median, seeded_rng};

/// Shared context for one (fixture, policy) pair: the tabular projection,
/// its stationary weights, and the exact Q^pi.
pub struct Lab<'a> {
    pub world: &'a GridWorld,
    pub pi_tab: TabularPolicy,
    /// stationary state-action weights, flat s-major
    pub zeta: Vec<f64>,
    pub q_pi: TabularQ,
}

impl<'a> Lab<'a> {
    pub fn new(world: &'a GridWorld, pp: &PolicyParams) -> Result<Self> {
        let pi_tab = pp.tabularize(world)?;
        let zeta = stationary_distribution(&pi_tab, &world.mdp)?;
        let q_pi = exact_q_policy(&pi_tab, &world.mdp)?;
        Ok(Self { world, pi_tab, zeta, q_pi })
    }

    /// E_zeta |a - b| over grid functions.
    pub fn weighted_abs_diff(&self, a: &[f64], b: &[f64]) -> f64 {
        self.zeta
            .iter()
            .zip(a.iter().zip(b))
            .map(|(&w, (&x, &y))| w * (x - y).abs())
            .sum()
    }

    /// Evaluate a network (or the zero function) on every grid point.
    pub fn grid_eval(&self, net: Option<&NetParams>) -> Result<Vec<f64>> {
        let mdp = &self.world.mdp;
        let mut out = Vec::with_capacity(mdp.n_sa());
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                out.push(match net {
                    Some(p) => p.forward(&self.world.sa_input(s, a))?,
                    None => 0.0,
                });
            }
        }
        Ok(out)
    }

    /// T^pi applied to a grid function.
    pub fn bellman_image(&self, q_grid: &[f64]) -> Result<Vec<f64>> {
        let mdp = &self.world.mdp;
        let q = TabularQ::from_flat(q_grid, mdp.n_states(), mdp.n_actions());
        Ok(bellman_policy_op(&q, &self.pi_tab, mdp)?.to_flat())
    }
}

/// Snap sampled tuples onto grid coordinates so empirical objectives share
/// the population's support.
pub fn canonicalize_transitions(world: &GridWorld, transitions: &[Transition]) -> Vec<Transition> {
    transitions
        .iter()
        .map(|t| Transition {
            s: t.s.clone(),
            a: vec![world.action_coords[world.snap_action(t.a[0])]],
            r: t.r,
            s_next: t.s_next.clone(),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// critic surrogate classes
// ---------------------------------------------------------------------------

/// Exhaustively enumerable class: every member a full parameter assignment
/// of a tiny network.
#[derive(Debug, Clone)]
pub struct EnumeratedClass {
    pub cfg: NetConfig,
    pub members: Vec<NetParams>,
}

impl EnumeratedClass {
    /// All combinations of `levels` over every parameter of a tiny net.
    /// Guarded so the enumeration stays desk-sized.
    pub fn tiny_grid(cfg: &NetConfig, levels: &[f64]) -> Result<Self> {
        cfg.validate()?;
        let proto = NetParams::zeros_like(cfg)?;
        let p = proto.param_count();
        if p > 8 {
            return Err(Error::Validation(format!(
                "enumerated class needs a tiny net, got {p} parameters"
            )));
        }
        let total = levels.len().pow(p as u32);
        if total > 2_000_000 {
            return Err(Error::Validation(format!("enumeration of {total} members is too large")));
        }
        let mut members = Vec::with_capacity(total);
        let mut assignment = vec![0usize; p];
        loop {
            let flat: Vec<f64> = assignment.iter().map(|&i| levels[i]).collect();
            let mut m = proto.clone();
            m.add_from_flat(&flat, 1.0)?;
            members.push(m);
            // odometer increment
            let mut pos = 0;
            loop {
                if pos == p {
                    return Ok(Self { cfg: *cfg, members });
                }
                assignment[pos] += 1;
                if assignment[pos] < levels.len() {
                    break;
                }
                assignment[pos] = 0;
                pos += 1;
            }
        }
    }

    /// Smallest function-space distance (E_zeta |.|) from member `idx` to
    /// any other member: the local resolution of the class.
    pub fn resolution_at(&self, lab: &Lab, idx: usize) -> Result<f64> {
        let base = lab.grid_eval(Some(&self.members[idx]))?;
        let mut best = f64::INFINITY;
        for (i, m) in self.members.iter().enumerate() {
            if i == idx {
                continue;
            }
            let v = lab.grid_eval(Some(m))?;
            let d = lab.weighted_abs_diff(&base, &v);
            if d > 1e-15 && d < best {
                best = d;
            }
        }
        Ok(best)
    }
}

/// Linear-in-features class, solved in closed form by weighted least
/// squares. `NetLinearization` is the tangent class of a reference network
/// around its initialization; coefficients live in the same projection ball
/// as the network's parameters.
#[derive(Debug, Clone)]
pub enum FeatureMap {
    Polynomial { degree: usize },
    NetLinearization { base: NetParams },
}

#[derive(Debug, Clone)]
pub struct FeatureClass {
    pub map: FeatureMap,
    pub ridge: f64,
    /// Project fitted coefficient deltas onto the ball of this radius
    /// (NetLinearization only).
    pub ball_radius: Option<f64>,
}

impl FeatureClass {
    pub fn polynomial(degree: usize, ridge: f64) -> Self {
        Self { map: FeatureMap::Polynomial { degree }, ridge, ball_radius: None }
    }

    pub fn linearization(base: NetParams, ridge: f64, ball_radius: Option<f64>) -> Self {
        Self { map: FeatureMap::NetLinearization { base }, ridge, ball_radius }
    }

    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.map {
            FeatureMap::Polynomial { degree } => Ok(monomials(x, *degree)),
            FeatureMap::NetLinearization { base } => Ok(base.grad(x)?.to_flat_vec()),
        }
    }

    pub fn offset(&self, x: &[f64]) -> Result<f64> {
        match &self.map {
            FeatureMap::Polynomial { .. } => Ok(0.0),
            FeatureMap::NetLinearization { base } => base.forward(x),
        }
    }

    fn project_coeffs(&self, coeffs: &mut [f64]) -> Result<()> {
        if let (Some(radius), FeatureMap::NetLinearization { base }) = (self.ball_radius, &self.map)
        {
            let mut delta = NetParams::zeros_like(&base.cfg)?;
            delta.add_from_flat(coeffs, 1.0)?;
            let zero = NetParams::zeros_like(&base.cfg)?;
            let ball = ParamBall::new(zero, radius);
            crate::net::project_in_place(&mut delta, &ball);
            coeffs.copy_from_slice(&delta.to_flat_vec());
        }
        Ok(())
    }
}

/// All monomials of the input coordinates up to the given total degree,
/// constant first.
fn monomials(x: &[f64], degree: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    let mut frontier = vec![(1.0, 0usize)];
    for _ in 0..degree {
        let mut next = Vec::new();
        for &(val, start) in &frontier {
            for (i, &xi) in x.iter().enumerate().skip(start) {
                let v = val * xi;
                out.push(v);
                next.push((v, i));
            }
        }
        frontier = next;
    }
    out
}

/// A fitted reference solution: its values on the grid, the achieved
/// objective, and where it came from.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub values: Vec<f64>,
    pub objective: f64,
    /// Index of the winning member (enumerated classes).
    pub argmin: Option<usize>,
    /// Fitted coefficients (linear classes).
    pub coeffs: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub enum CriticClass {
    Enumerated(EnumeratedClass),
    Linear(FeatureClass),
}

fn solve_weighted_ls(
    class: &FeatureClass,
    points: &[Vec<f64>],
    weights: &[f64],
    targets: &[f64],
) -> Result<Vec<f64>> {
    let dim = class.features(&points[0])?.len();
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DVector::<f64>::zeros(dim);
    for ((x, &w), &t) in points.iter().zip(weights).zip(targets) {
        if w == 0.0 {
            continue;
        }
        let phi = DVector::from_vec(class.features(x)?);
        let resid_target = t - class.offset(x)?;
        a.ger(w, &phi, &phi, 1.0);
        b.axpy(w * resid_target, &phi, 1.0);
    }
    for i in 0..dim {
        a[(i, i)] += class.ridge;
    }
    let solved = a
        .clone()
        .cholesky()
        .map(|c| c.solve(&b))
        .or_else(|| a.lu().solve(&b))
        .ok_or_else(|| Error::Internal("singular least-squares system".into()))?;
    let mut coeffs: Vec<f64> = solved.iter().copied().collect();
    class.project_coeffs(&mut coeffs)?;
    Ok(coeffs)
}

fn linear_values_on_grid(class: &FeatureClass, lab: &Lab, coeffs: &[f64]) -> Result<Vec<f64>> {
    let mdp = &lab.world.mdp;
    let mut out = Vec::with_capacity(mdp.n_sa());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let x = lab.world.sa_input(s, a);
            let phi = class.features(&x)?;
            let v = class.offset(&x)?
                + phi.iter().zip(coeffs).map(|(p, c)| p * c).sum::<f64>();
            out.push(v);
        }
    }
    Ok(out)
}

/// Q1: best in-class fit to the exact Bellman image T^pi Q_prev under the
/// stationary weights. The achieved weighted MSE is the empirical
/// approximation-floor proxy.
pub fn q1_reference(lab: &Lab, class: &CriticClass, q_prev: Option<&NetParams>) -> Result<FitResult> {
    let target = lab.bellman_image(&lab.grid_eval(q_prev)?)?;
    fit_to_grid_target(lab, class, &target)
}

fn fit_to_grid_target(lab: &Lab, class: &CriticClass, target: &[f64]) -> Result<FitResult> {
    match class {
        CriticClass::Enumerated(e) => {
            let mut best = (f64::INFINITY, 0usize, Vec::new());
            for (i, m) in e.members.iter().enumerate() {
                let v = lab.grid_eval(Some(m))?;
                let obj: f64 = lab
                    .zeta
                    .iter()
                    .zip(v.iter().zip(target))
                    .map(|(&w, (&x, &t))| w * (x - t) * (x - t))
                    .sum();
                if obj < best.0 {
                    best = (obj, i, v);
                }
            }
            Ok(FitResult { values: best.2, objective: best.0, argmin: Some(best.1), coeffs: None })
        }
        CriticClass::Linear(f) => {
            let points = grid_points(lab.world);
            let coeffs = solve_weighted_ls(f, &points, &lab.zeta, target)?;
            let values = linear_values_on_grid(f, lab, &coeffs)?;
            let obj: f64 = lab
                .zeta
                .iter()
                .zip(values.iter().zip(target))
                .map(|(&w, (&x, &t))| w * (x - t) * (x - t))
                .sum();
            Ok(FitResult { values, objective: obj, argmin: None, coeffs: Some(coeffs) })
        }
    }
}

fn grid_points(world: &GridWorld) -> Vec<Vec<f64>> {
    let mdp = &world.mdp;
    let mut out = Vec::with_capacity(mdp.n_sa());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            out.push(world.sa_input(s, a));
        }
    }
    out
}

/// Q2: best in-class fit to the stochastic-target objective
/// E (Q(s,a) - (r + gamma Q_prev(s',a')))^2, computed with exact transition
/// expectations (explicit double sums, no Bellman shortcut for the
/// enumerated route).
pub fn q2_reference(lab: &Lab, class: &CriticClass, q_prev: Option<&NetParams>) -> Result<FitResult> {
    let mdp = &lab.world.mdp;
    let q_prev_grid = lab.grid_eval(q_prev)?;
    match class {
        CriticClass::Enumerated(e) => {
            let mut best = (f64::INFINITY, 0usize, Vec::new());
            for (i, m) in e.members.iter().enumerate() {
                let v = lab.grid_eval(Some(m))?;
                let mut obj = 0.0;
                for s in 0..mdp.n_states() {
                    for a in 0..mdp.n_actions() {
                        let w = lab.zeta[mdp.sa_index(s, a)];
                        if w == 0.0 {
                            continue;
                        }
                        let pred = v[mdp.sa_index(s, a)];
                        let mut expect_sq = 0.0;
                        for s2 in 0..mdp.n_states() {
                            let p = mdp.transitions[s][a][s2];
                            if p == 0.0 {
                                continue;
                            }
                            for a2 in 0..mdp.n_actions() {
                                let pa = lab.pi_tab.probs[s2][a2];
                                if pa == 0.0 {
                                    continue;
                                }
                                let y = mdp.rewards[s][a]
                                    + mdp.gamma * q_prev_grid[mdp.sa_index(s2, a2)];
                                expect_sq += p * pa * (pred - y) * (pred - y);
                            }
                        }
                        obj += w * expect_sq;
                    }
                }
                if obj < best.0 {
                    best = (obj, i, v);
                }
            }
            Ok(FitResult { values: best.2, objective: best.0, argmin: Some(best.1), coeffs: None })
        }
        CriticClass::Linear(_) => {
            // For a linear class the normal equations of the stochastic
            // objective share the solution of Q1's (the target variance does
            // not depend on the coefficients); only the reported objective
            // differs by that variance.
            let mut fit = fit_to_grid_target(lab, class, &lab.bellman_image(&q_prev_grid)?)?;
            fit.objective += target_variance(lab, &q_prev_grid);
            Ok(fit)
        }
    }
}

fn target_variance(lab: &Lab, q_prev_grid: &[f64]) -> f64 {
    let mdp = &lab.world.mdp;
    let mut acc = 0.0;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let w = lab.zeta[mdp.sa_index(s, a)];
            if w == 0.0 {
                continue;
            }
            let mut mean = 0.0;
            let mut mean_sq = 0.0;
            for s2 in 0..mdp.n_states() {
                let p = mdp.transitions[s][a][s2];
                for a2 in 0..mdp.n_actions() {
                    let pr = p * lab.pi_tab.probs[s2][a2];
                    let y = mdp.rewards[s][a] + mdp.gamma * q_prev_grid[mdp.sa_index(s2, a2)];
                    mean += pr * y;
                    mean_sq += pr * y * y;
                }
            }
            acc += w * (mean_sq - mean * mean);
        }
    }
    acc
}

/// One empirical sample for Q3: a canonicalized tuple plus its resampled
/// next action.
#[derive(Debug, Clone)]
pub struct LabSample {
    pub t: Transition,
    pub a_next: Vec<f64>,
}

/// Draw lab samples: a Markovian rollout, canonicalized, with one snapped
/// next-action resample per tuple.
pub fn draw_lab_samples(
    world: &GridWorld,
    pp: &PolicyParams,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<LabSample>> {
    let rollout = collect_rollout(pp, world, n, rng)?;
    let transitions = canonicalize_transitions(world, &rollout.transitions);
    transitions
        .into_iter()
        .map(|t| {
            let (a, _) = pp.sample_action(&t.s_next, rng)?;
            let a_next = vec![world.action_coords[world.snap_action(a[0])]];
            Ok(LabSample { t, a_next })
        })
        .collect()
}

/// Q3: best in-class fit to the empirical square loss over the n sampled
/// tuples, with targets y_i = r_i + gamma Q_prev(s'_i, a'_i).
pub fn q3_reference(
    lab: &Lab,
    class: &CriticClass,
    samples: &[LabSample],
    q_prev: Option<&NetParams>,
    gamma: f64,
) -> Result<FitResult> {
    if samples.is_empty() {
        return Err(Error::Validation("Q3 needs a non-empty sample set".into()));
    }
    let targets: Vec<f64> = samples
        .iter()
        .map(|ls| {
            Ok(ls.t.r
                + gamma
                    * match q_prev {
                        Some(p) => p.forward(&sa_input(&ls.t.s_next, &ls.a_next))?,
                        None => 0.0,
                    })
        })
        .collect::<Result<_>>()?;
    let points: Vec<Vec<f64>> = samples.iter().map(|ls| sa_input(&ls.t.s, &ls.t.a)).collect();
    let w = 1.0 / samples.len() as f64;
    match class {
        CriticClass::Enumerated(e) => {
            let mut best = (f64::INFINITY, 0usize);
            for (i, m) in e.members.iter().enumerate() {
                let mut obj = 0.0;
                for (x, &t) in points.iter().zip(&targets) {
                    let v = m.forward(x)?;
                    obj += w * (v - t) * (v - t);
                }
                if obj < best.0 {
                    best = (obj, i);
                }
            }
            Ok(FitResult {
                values: lab.grid_eval(Some(&e.members[best.1]))?,
                objective: best.0,
                argmin: Some(best.1),
                coeffs: None,
            })
        }
        CriticClass::Linear(f) => {
            let weights = vec![w; points.len()];
            let coeffs = solve_weighted_ls(f, &points, &weights, &targets)?;
            let mut obj = 0.0;
            for (x, &t) in points.iter().zip(&targets) {
                let phi = f.features(x)?;
                let v = f.offset(x)? + phi.iter().zip(&coeffs).map(|(p, c)| p * c).sum::<f64>();
                obj += w * (v - t) * (v - t);
            }
            Ok(FitResult {
                values: linear_values_on_grid(f, lab, &coeffs)?,
                objective: obj,
                argmin: None,
                coeffs: Some(coeffs),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// decomposition and recursion
// ---------------------------------------------------------------------------

/// Measured error split for one critic stage (k, j): all expectations are
/// mean absolute differences under the exact stationary weights.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorDecomposition {
    pub k: usize,
    pub j: usize,
    /// E|T^pi Q_prev - Q1|: approximation error
    pub eps1: f64,
    /// E|Q1 - Q2|: estimation error (zero in theory)
    pub eps2: f64,
    /// E|Q3 - Q2|: sampling error
    pub eps3: f64,
    /// E|Q3 - Q_stage|: optimization error
    pub eps4: f64,
    /// E|T^pi Q_prev - Q_stage|
    pub total: f64,
    /// eps1 + eps2 + eps3 + eps4
    pub sum_parts: f64,
    /// sum_parts - total; nonnegative up to rounding by the triangle
    /// inequality
    pub residual: f64,
}

/// The three references plus the exact stage target.
pub struct StageReferences {
    pub target: Vec<f64>,
    pub q1: FitResult,
    pub q2: FitResult,
    pub q3: FitResult,
}

pub fn stage_references(
    lab: &Lab,
    class: &CriticClass,
    samples: &[LabSample],
    q_prev: Option<&NetParams>,
    gamma: f64,
) -> Result<StageReferences> {
    let target = lab.bellman_image(&lab.grid_eval(q_prev)?)?;
    Ok(StageReferences {
        target,
        q1: q1_reference(lab, class, q_prev)?,
        q2: q2_reference(lab, class, q_prev)?,
        q3: q3_reference(lab, class, samples, q_prev, gamma)?,
    })
}

pub fn decompose(
    lab: &Lab,
    refs: &StageReferences,
    stage_grid: &[f64],
    k: usize,
    j: usize,
) -> ErrorDecomposition {
    let eps1 = lab.weighted_abs_diff(&refs.target, &refs.q1.values);
    let eps2 = lab.weighted_abs_diff(&refs.q1.values, &refs.q2.values);
    let eps3 = lab.weighted_abs_diff(&refs.q3.values, &refs.q2.values);
    let eps4 = lab.weighted_abs_diff(&refs.q3.values, stage_grid);
    let total = lab.weighted_abs_diff(&refs.target, stage_grid);
    let sum_parts = eps1 + eps2 + eps3 + eps4;
    ErrorDecomposition { k, j, eps1, eps2, eps3, eps4, total, sum_parts, residual: sum_parts - total }
}

/// The unrolled target-stage recursion evaluated with exact operators:
///   |Q^pi - Q_{k,J}| <= sum_{j=1..J} (gamma P^pi)^{J-j} |eps_j| + gamma^J Q_max
/// pointwise on the grid, with eps_j = T^pi Q_{k,j-1} - Q_{k,j} measured
/// exactly and Q_{k,0} = 0. Given exact operators this is a theorem; a
/// violation indicates an implementation bug.
#[derive(Debug, Clone, Serialize)]
pub struct RecursionReport {
    pub lhs_mean: f64,
    pub rhs_mean: f64,
    pub holds_pointwise: bool,
    /// max over grid points of lhs - rhs (negative when the bound holds)
    pub max_violation: f64,
}

pub fn recursion_check(lab: &Lab, stage_grids: &[Vec<f64>]) -> Result<RecursionReport> {
    if stage_grids.is_empty() {
        return Err(Error::Validation("recursion check needs at least one stage".into()));
    }
    let mdp = &lab.world.mdp;
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let j_total = stage_grids.len();

    // per-stage absolute errors |T^pi g_{j-1} - g_j|
    let mut eps = Vec::with_capacity(j_total);
    let mut prev = vec![0.0; mdp.n_sa()];
    for g in stage_grids {
        let target = lab.bellman_image(&prev)?;
        eps.push(
            target
                .iter()
                .zip(g)
                .map(|(t, v)| (t - v).abs())
                .collect::<Vec<f64>>(),
        );
        prev = g.clone();
    }

    // Horner accumulation of sum_j (gamma P)^(J-j) |eps_j|
    let mut acc = TabularQ::from_flat(&eps[0], n_s, n_a);
    for e in eps.iter().skip(1) {
        let pushed = transition_op(&acc, &lab.pi_tab, mdp)?;
        let mut next = TabularQ::from_flat(e, n_s, n_a);
        for s in 0..n_s {
            for a in 0..n_a {
                next.values[s][a] += mdp.gamma * pushed.values[s][a];
            }
        }
        acc = next;
    }
    let tail = mdp.gamma.powi(j_total as i32) * mdp.q_max();

    let lhs: Vec<f64> = lab
        .q_pi
        .to_flat()
        .iter()
        .zip(stage_grids.last().unwrap())
        .map(|(q, v)| (q - v).abs())
        .collect();
    let rhs: Vec<f64> = acc.to_flat().iter().map(|v| v + tail).collect();

    let max_violation = lhs
        .iter()
        .zip(&rhs)
        .map(|(l, r)| l - r)
        .fold(f64::NEG_INFINITY, f64::max);
    let lhs_mean = lab.weighted_abs_diff(&lhs, &vec![0.0; lhs.len()]);
    let rhs_mean = lab.weighted_abs_diff(&rhs, &vec![0.0; rhs.len()]);
    Ok(RecursionReport {
        lhs_mean,
        rhs_mean,
        holds_pointwise: max_violation <= 1e-9,
        max_violation,
    })
}

/// Full decomposition run: fit a J-stage critic on one buffer and measure
/// the four-way split and the recursion bound for every stage.
pub struct DecompositionRun {
    pub stages: Vec<ErrorDecomposition>,
    pub recursion: RecursionReport,
    pub eps_approx_proxy: Vec<f64>,
}

pub fn decomposition_run(
    world: &GridWorld,
    pp: &PolicyParams,
    class: &CriticClass,
    critic_cfg: &CriticConfig,
    n: usize,
    seed: u64,
    k: usize,
) -> Result<DecompositionRun> {
    let lab = Lab::new(world, pp)?;
    let mut rng = seeded_rng(seed, 101);
    let samples = draw_lab_samples(world, pp, n, &mut rng)?;
    let buf = ReplayBuffer::from_transitions(samples.iter().map(|ls| ls.t.clone()).collect());
    let mut critic_rng = seeded_rng(seed, 102);
    let est = fit_critic(pp, &buf, critic_cfg, &mut critic_rng)?;

    let mut stages = Vec::new();
    let mut stage_grids = Vec::new();
    let mut eps_approx = Vec::new();
    let mut q_prev: Option<NetParams> = None;
    for (idx, stage) in est.stages.iter().enumerate() {
        let refs = stage_references(&lab, class, &samples, q_prev.as_ref(), critic_cfg.gamma)?;
        let grid = lab.grid_eval(Some(&stage.params))?;
        stages.push(decompose(&lab, &refs, &grid, k, idx + 1));
        eps_approx.push(refs.q1.objective);
        stage_grids.push(grid);
        q_prev = Some(stage.params.clone());
    }
    let recursion = recursion_check(&lab, &stage_grids)?;
    Ok(DecompositionRun { stages, recursion, eps_approx_proxy: eps_approx })
}

// ---------------------------------------------------------------------------
// Rademacher complexity
// ---------------------------------------------------------------------------

fn sup_signed_mean(z: &[Vec<f64>], signs: &[f64]) -> f64 {
    let n = signs.len() as f64;
    z.iter()
        .map(|v| v.iter().zip(signs).map(|(a, s)| a * s).sum::<f64>() / n)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn check_rademacher_input(z: &[Vec<f64>]) -> Result<usize> {
    let first = z
        .first()
        .ok_or_else(|| Error::Validation("Rademacher complexity of an empty set".into()))?;
    let n = first.len();
    if n == 0 {
        return Err(Error::Validation("vectors must have at least one coordinate".into()));
    }
    if z.iter().any(|v| v.len() != n) {
        return Err(Error::Shape("ragged vector set".into()));
    }
    Ok(n)
}

/// Exact Rademacher complexity by enumerating all 2^n sign vectors
/// (coordinate count capped at 20).
pub fn rademacher_exact(z: &[Vec<f64>]) -> Result<f64> {
    let n = check_rademacher_input(z)?;
    if n > 20 {
        return Err(Error::Validation(format!("exact mode enumerates 2^n signs; n = {n} > 20")));
    }
    let mut acc = 0.0;
    let mut signs = vec![0.0; n];
    for mask in 0u64..(1u64 << n) {
        for (i, s) in signs.iter_mut().enumerate() {
            *s = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
        }
        acc += sup_signed_mean(z, &signs);
    }
    Ok(acc / (1u64 << n) as f64)
}

/// Monte-Carlo Rademacher complexity over n_mc sign draws; the sup over Z is
/// exact per draw.
pub fn rademacher_estimate(z: &[Vec<f64>], n_mc: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = check_rademacher_input(z)?;
    if n_mc == 0 {
        return Err(Error::Validation("n_mc must be >= 1".into()));
    }
    let mut acc = 0.0;
    let mut signs = vec![0.0; n];
    for _ in 0..n_mc {
        for s in signs.iter_mut() {
            *s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        acc += sup_signed_mean(z, &signs);
    }
    Ok(acc / n_mc as f64)
}

// ---------------------------------------------------------------------------
// conditional-expectation minimizer identity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CondMinReport {
    pub coincide: bool,
    pub argmin_joint: Vec<usize>,
    pub argmin_conditional: Vec<usize>,
}

/// Brute-force check that argmin_f E_{x,y}(f(x) - g(x,y))^2 equals
/// argmin_f E_x (f(x) - E[g|x])^2 over a finite class of f tables.
pub fn conditional_minimizer_check(
    joint: &[Vec<f64>],
    g: &[Vec<f64>],
    class: &[Vec<f64>],
) -> Result<CondMinReport> {
    let nx = joint.len();
    if nx == 0 || joint[0].is_empty() {
        return Err(Error::Validation("empty joint table".into()));
    }
    let ny = joint[0].len();
    let total: f64 = joint.iter().flatten().sum();
    if (total - 1.0).abs() > 1e-9 || joint.iter().flatten().any(|p| *p < 0.0) {
        return Err(Error::Validation("joint table is not a distribution".into()));
    }
    if g.len() != nx || g.iter().any(|row| row.len() != ny) {
        return Err(Error::Shape("g table shape mismatch".into()));
    }
    if class.is_empty() || class.iter().any(|f| f.len() != nx) {
        return Err(Error::Shape("class tables must map every x".into()));
    }

    // marginal and conditional mean of g given x
    let px: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
    let g_cond: Vec<f64> = (0..nx)
        .map(|x| {
            if px[x] > 0.0 {
                (0..ny).map(|y| joint[x][y] * g[x][y]).sum::<f64>() / px[x]
            } else {
                0.0
            }
        })
        .collect();

    let joint_obj: Vec<f64> = class
        .iter()
        .map(|f| {
            let mut acc = 0.0;
            for x in 0..nx {
                for y in 0..ny {
                    let d = f[x] - g[x][y];
                    acc += joint[x][y] * d * d;
                }
            }
            acc
        })
        .collect();
    let cond_obj: Vec<f64> = class
        .iter()
        .map(|f| {
            (0..nx)
                .map(|x| {
                    let d = f[x] - g_cond[x];
                    px[x] * d * d
                })
                .sum()
        })
        .collect();

    let argmin_set = |objs: &[f64]| -> Vec<usize> {
        let min = objs.iter().cloned().fold(f64::INFINITY, f64::min);
        let tol = 1e-12 * (1.0 + min.abs());
        objs.iter()
            .enumerate()
            .filter(|(_, &o)| o <= min + tol)
            .map(|(i, _)| i)
            .collect()
    };
    let argmin_joint = argmin_set(&joint_obj);
    let argmin_conditional = argmin_set(&cond_obj);
    Ok(CondMinReport {
        coincide: argmin_joint == argmin_conditional,
        argmin_joint,
        argmin_conditional,
    })
}

// ---------------------------------------------------------------------------
// scaling fits and sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ScalingFit {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// log-log least-squares slope
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Log-log least squares over (x, y) pairs; requires >= 4 strictly
/// increasing points spanning at least a factor of 16 and positive y.
pub fn scaling_fit(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::Validation(format!(
            "insufficient points: scaling fit needs >= 4, got {}",
            points.len()
        )));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Validation("sweep x values must be strictly increasing".into()));
    }
    let span = points.last().unwrap().0 / points[0].0;
    if span < 16.0 {
        return Err(Error::Validation(format!("sweep must span >= 16x in x, got {span:.2}x")));
    }
    if points.iter().any(|(x, y)| *x <= 0.0 || *y <= 0.0) {
        return Err(Error::Validation("scaling fit needs positive x and y".into()));
    }
    let lx: Vec<f64> = points.iter().map(|(x, _)| x.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|(_, y)| y.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&lx, &ly);
    Ok(ScalingFit {
        xs: points.iter().map(|(x, _)| *x).collect(),
        ys: points.iter().map(|(_, y)| *y).collect(),
        slope,
        intercept,
        r_squared: r2,
    })
}

/// One sweep measurement.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub x: f64,
    pub seed: u64,
    pub value: f64,
}

/// Median of `value` per distinct x, as (x, median) points ready for
/// [`scaling_fit`].
pub fn median_per_x(rows: &[SweepRow]) -> Vec<(f64, f64)> {
    let mut xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    xs.into_iter()
        .map(|x| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.x == x)
                .map(|r| r.value)
                .collect();
            (x, median(&vals))
        })
        .collect()
}

/// Sampling-error sweep: for each (n, seed), draw n Markovian tuples under
/// the fixed policy and measure eps3 = E_zeta |Q3_n - Q2| for the stage with
/// target network `q_prev`.
pub fn eps3_sweep(
    world: &GridWorld,
    pp: &PolicyParams,
    class: &CriticClass,
    q_prev: Option<&NetParams>,
    n_values: &[usize],
    n_seeds: u64,
    base_seed: u64,
    gamma: f64,
) -> Result<Vec<SweepRow>> {
    let lab = Lab::new(world, pp)?;
    let q2 = q2_reference(&lab, class, q_prev)?;
    let jobs: Vec<(usize, u64)> = n_values
        .iter()
        .flat_map(|&n| (0..n_seeds).map(move |s| (n, s)))
        .collect();
    jobs.par_iter()
        .map(|&(n, seed)| {
            let mut rng = seeded_rng(base_seed, (n as u64) << 20 | seed);
            let samples = draw_lab_samples(world, pp, n, &mut rng)?;
            let q3 = q3_reference(&lab, class, &samples, q_prev, gamma)?;
            Ok(SweepRow {
                x: n as f64,
                seed,
                value: lab.weighted_abs_diff(&q3.values, &q2.values),
            })
        })
        .collect()
}

/// Optimization-error sweep: fixed buffer size, growing inner step count L.
/// For each (L, seed) the critic runs one target stage from a seed-fixed
/// initialization and eps4 = E_zeta |Q3 - Q_{k,1}| is measured against the
/// empirical minimizer of the same objective over the tangent class of that
/// initialization. Every run's recursion bound is checked as well.
pub fn eps4_sweep(
    world: &GridWorld,
    pp: &PolicyParams,
    base_cfg: &CriticConfig,
    l_values: &[usize],
    n_fixed: usize,
    n_seeds: u64,
    base_seed: u64,
    ridge: f64,
    beta_scale: f64,
) -> Result<(Vec<SweepRow>, Vec<RecursionReport>)> {
    let lab = Lab::new(world, pp)?;
    let jobs: Vec<(usize, u64)> = l_values
        .iter()
        .flat_map(|&l| (0..n_seeds).map(move |s| (l, s)))
        .collect();
    let results: Vec<(SweepRow, RecursionReport)> = jobs
        .par_iter()
        .map(|&(l, seed)| {
            let mut sample_rng = seeded_rng(base_seed, 1 << 30 | seed);
            let samples = draw_lab_samples(world, pp, n_fixed, &mut sample_rng)?;
            let buf =
                ReplayBuffer::from_transitions(samples.iter().map(|ls| ls.t.clone()).collect());

            let mut cfg = *base_cfg;
            cfg.target_stages = 1;
            cfg.inner_steps = l;
            // the 1/sqrt(L) coupling, with a constant absorbed into the
            // soft-O: tiny-gradient parametrizations need it to leave the
            // transient inside the swept range
            cfg.beta_prime = Some(beta_scale / (l as f64).sqrt());
            let mut critic_rng = seeded_rng(base_seed, 2 << 30 | seed);
            let est = fit_critic(pp, &buf, &cfg, &mut critic_rng)?;
            let stage = &est.stages[0];

            // Q3 over the tangent class at this run's own initialization
            let class = CriticClass::Linear(FeatureClass::linearization(
                stage.init.clone(),
                ridge,
                Some(cfg.radius()),
            ));
            let q3 = q3_reference(&lab, &class, &samples, None, cfg.gamma)?;
            let stage_grid = lab.grid_eval(Some(&stage.params))?;
            let row = SweepRow {
                x: l as f64,
                seed,
                value: lab.weighted_abs_diff(&q3.values, &stage_grid),
            };
            let recursion = recursion_check(&lab, &[stage_grid])?;
            Ok((row, recursion))
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().unzip())
}
