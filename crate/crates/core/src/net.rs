//! The D-layer, width-m scalar network used for the critic and for both
//! policy heads: x_h = (1/sqrt(m)) * sigma(W_h^T x_{h-1}) for the D-1 hidden
//! layers and y = (1/sqrt(m)) * sigma(b_D^T x_{D-1}) at the output, with
//! manual forward and backward passes, Gaussian/uniform initialization, and
//! projection onto the per-layer Frobenius ball around the initialization.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    /// Diagnostic mode used by scaling/linearity tests; not a training choice.
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative at the pre-activation; the relu subgradient at exactly 0
    /// is taken as 0.
    #[inline]
    pub fn deriv(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn is_smooth(self) -> bool {
        matches!(self, Activation::Tanh | Activation::Sigmoid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    /// Number of layers D; D-1 weight matrices plus the output vector b_D.
    pub depth: usize,
    /// Neurons per layer m.
    pub width: usize,
    pub input_dim: usize,
    pub activation: Activation,
    pub seed: u64,
    /// Bypass the output activation so the critic can take both signs.
    #[serde(default)]
    pub linear_output: bool,
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::Validation(format!("depth must be >= 2, got {}", self.depth)));
        }
        if self.width == 0 || self.input_dim == 0 {
            return Err(Error::Validation("width and input_dim must be >= 1".into()));
        }
        Ok(())
    }
}

/// Network parameters theta = {W_1, ..., W_{D-1}, b_D}. W_1 maps input_dim
/// to m; deeper W_h map m to m.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub cfg: NetConfig,
    /// weights[h-1] is W_h with shape (previous width) x m
    pub weights: Vec<DMatrix<f64>>,
    /// b_D
    pub output: DVector<f64>,
}

/// Draw fresh parameters: weight entries i.i.d. N(0,1), output entries
/// Unif(-1,1). Deterministic in `cfg.seed`; [`init_params_with`] threads an
/// external generator instead (the critic re-initializes every target stage).
pub fn init_params(cfg: &NetConfig) -> Result<NetParams> {
    let mut rng = seeded_rng(cfg.seed, 0);
    init_params_with(cfg, &mut rng)
}

pub fn init_params_with(cfg: &NetConfig, rng: &mut ChaCha8Rng) -> Result<NetParams> {
    cfg.validate()?;
    let mut weights = Vec::with_capacity(cfg.depth - 1);
    let mut prev = cfg.input_dim;
    for _ in 1..cfg.depth {
        // row-major fill so the draw order is part of the format
        let data: Vec<f64> = (0..prev * cfg.width)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        weights.push(DMatrix::from_row_iterator(prev, cfg.width, data));
        prev = cfg.width;
    }
    let output = DVector::from_iterator(cfg.width, (0..cfg.width).map(|_| rng.random_range(-1.0..1.0)));
    Ok(NetParams { cfg: *cfg, weights, output })
}

struct ForwardTrace {
    /// x_0 .. x_{D-1}
    activations: Vec<DVector<f64>>,
    /// z_1 .. z_{D-1}
    pre_activations: Vec<DVector<f64>>,
    z_out: f64,
}

impl NetParams {
    pub fn zeros_like(cfg: &NetConfig) -> Result<NetParams> {
        cfg.validate()?;
        let mut weights = Vec::with_capacity(cfg.depth - 1);
        let mut prev = cfg.input_dim;
        for _ in 1..cfg.depth {
            weights.push(DMatrix::zeros(prev, cfg.width));
            prev = cfg.width;
        }
        Ok(NetParams { cfg: *cfg, weights, output: DVector::zeros(cfg.width) })
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.output.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.cfg.input_dim {
            return Err(Error::Shape(format!(
                "input has {} entries, net expects {}",
                x.len(),
                self.cfg.input_dim
            )));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64], scaled: bool) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let scale = if scaled { 1.0 / (self.cfg.width as f64).sqrt() } else { 1.0 };
        let act = self.cfg.activation;
        let mut activations = Vec::with_capacity(self.cfg.depth);
        let mut pre_activations = Vec::with_capacity(self.cfg.depth - 1);
        activations.push(DVector::from_column_slice(x));
        for w in &self.weights {
            let z = w.tr_mul(activations.last().unwrap());
            let a = z.map(|v| scale * act.apply(v));
            pre_activations.push(z);
            activations.push(a);
        }
        let z_out = self.output.dot(activations.last().unwrap());
        Ok(ForwardTrace { activations, pre_activations, z_out })
    }

    /// Scalar network output y for input x.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.forward_scaled(x, true)
    }

    /// Forward pass with the 1/sqrt(m) factors optionally removed; the
    /// unscaled path exists so tests can observe the normalization.
    pub(crate) fn forward_scaled(&self, x: &[f64], scaled: bool) -> Result<f64> {
        let t = self.trace(x, scaled)?;
        let scale = if scaled { 1.0 / (self.cfg.width as f64).sqrt() } else { 1.0 };
        Ok(if self.cfg.linear_output {
            scale * t.z_out
        } else {
            scale * self.cfg.activation.apply(t.z_out)
        })
    }

    /// Gradient of the scalar output with respect to every parameter,
    /// by backpropagation.
    pub fn grad(&self, x: &[f64]) -> Result<NetParams> {
        let t = self.trace(x, true)?;
        let scale = 1.0 / (self.cfg.width as f64).sqrt();
        let act = self.cfg.activation;

        let g_out = if self.cfg.linear_output {
            scale
        } else {
            scale * act.deriv(t.z_out)
        };
        let grad_output = t.activations.last().unwrap() * g_out;

        // dy/dx_{D-1}
        let mut delta = &self.output * g_out;
        let mut grad_weights = vec![DMatrix::zeros(0, 0); self.weights.len()];
        for h in (0..self.weights.len()).rev() {
            let z = &t.pre_activations[h];
            let u = DVector::from_iterator(
                z.len(),
                z.iter().zip(delta.iter()).map(|(&zv, &dv)| dv * scale * act.deriv(zv)),
            );
            grad_weights[h] = &t.activations[h] * u.transpose();
            if h > 0 {
                delta = &self.weights[h] * u;
            }
        }
        Ok(NetParams { cfg: self.cfg, weights: grad_weights, output: grad_output })
    }

    /// self += c * other, elementwise over all parameters.
    pub fn add_scaled(&mut self, other: &NetParams, c: f64) {
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            w.zip_apply(o, |a, b| *a += c * b);
        }
        self.output.axpy(c, &other.output, 1.0);
    }

    /// Flat view in checkpoint order: W_1 row-major, ..., W_{D-1}, then b_D.
    pub fn to_flat_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for w in &self.weights {
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    out.push(w[(r, c)]);
                }
            }
        }
        out.extend(self.output.iter());
        out
    }

    /// self += scale * delta, with delta in [`Self::to_flat_vec`] order.
    pub fn add_from_flat(&mut self, delta: &[f64], scale: f64) -> Result<()> {
        if delta.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "flat delta has {} entries, net has {} parameters",
                delta.len(),
                self.param_count()
            )));
        }
        let mut i = 0;
        for w in &mut self.weights {
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    w[(r, c)] += scale * delta[i];
                    i += 1;
                }
            }
        }
        for v in self.output.iter_mut() {
            *v += scale * delta[i];
            i += 1;
        }
        Ok(())
    }

    /// Euclidean distance over all parameters.
    pub fn param_dist(&self, other: &NetParams) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.weights.iter().zip(&other.weights) {
            acc += (a - b).norm_squared();
        }
        acc += (&self.output - &other.output).norm_squared();
        acc.sqrt()
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let header = CheckpointHeader {
            depth: self.cfg.depth,
            width: self.cfg.width,
            input_dim: self.cfg.input_dim,
            activation: self.cfg.activation,
            seed: self.cfg.seed,
            linear_output: self.cfg.linear_output,
        };
        let mut line = serde_json::to_string(&header)?;
        line.push('\n');
        w.write_all(line.as_bytes())?;
        for v in self.to_flat_vec() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<NetParams> {
        let mut header_bytes = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            r.read_exact(&mut byte)?;
            if byte[0] == b'\n' {
                break;
            }
            header_bytes.push(byte[0]);
        }
        let header: CheckpointHeader = serde_json::from_slice(&header_bytes)?;
        let cfg = NetConfig {
            depth: header.depth,
            width: header.width,
            input_dim: header.input_dim,
            activation: header.activation,
            seed: header.seed,
            linear_output: header.linear_output,
        };
        let mut params = NetParams::zeros_like(&cfg)?;
        let n = params.param_count();
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw)?;
        let flat: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.add_from_flat(&flat, 1.0)?;
        Ok(params)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    depth: usize,
    width: usize,
    input_dim: usize,
    activation: Activation,
    seed: u64,
    #[serde(default)]
    linear_output: bool,
}

/// The projection set Theta': a per-layer Frobenius ball of the given radius
/// around the initialization.
#[derive(Debug, Clone)]
pub struct ParamBall {
    pub center: NetParams,
    pub radius: f64,
    /// Whether b_D is constrained with the same radius.
    pub include_output: bool,
}

impl ParamBall {
    pub fn new(center: NetParams, radius: f64) -> Self {
        Self { center, radius, include_output: true }
    }

    /// Largest per-layer norm excess over the radius; <= 0 means membership.
    pub fn violation(&self, params: &NetParams) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (w, c) in params.weights.iter().zip(&self.center.weights) {
            worst = worst.max((w - c).norm() - self.radius);
        }
        if self.include_output {
            worst = worst.max((&params.output - &self.center.output).norm() - self.radius);
        }
        worst
    }

    pub fn contains(&self, params: &NetParams, slack: f64) -> bool {
        self.violation(params) <= slack
    }
}

/// Radial projection onto the ball, layer by layer. Layers already inside
/// are returned untouched so the projection is the identity on the ball.
pub fn project(params: &NetParams, ball: &ParamBall) -> NetParams {
    let mut out = params.clone();
    project_in_place(&mut out, ball);
    out
}

pub fn project_in_place(params: &mut NetParams, ball: &ParamBall) {
    for (w, c) in params.weights.iter_mut().zip(&ball.center.weights) {
        let diff_norm = (&*w - c).norm();
        if diff_norm > ball.radius {
            let t = ball.radius / diff_norm;
            *w = c + (&*w - c) * t;
        }
    }
    if ball.include_output {
        let diff_norm = (&params.output - &ball.center.output).norm();
        if diff_norm > ball.radius {
            let t = ball.radius / diff_norm;
            params.output = &ball.center.output + (&params.output - &ball.center.output) * t;
        }
    }
}

/// Elementwise arithmetic mean of a non-empty list of identically shaped
/// parameter sets.
pub fn average_params(list: &[NetParams]) -> Result<NetParams> {
    let first = list
        .first()
        .ok_or_else(|| Error::Validation("cannot average an empty parameter list".into()))?;
    let mut acc = first.clone();
    for p in &list[1..] {
        if p.param_count() != first.param_count() {
            return Err(Error::Shape("parameter shapes differ in average".into()));
        }
        acc.add_scaled(p, 1.0);
    }
    let c = 1.0 / list.len() as f64;
    for w in &mut acc.weights {
        *w *= c;
    }
    acc.output *= c;
    Ok(acc)
}
