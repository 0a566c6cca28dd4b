//! SGD and Adam update rules and the step-decay learning-rate schedule.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::crf::CrfParams;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};

/// A set of parameter tensors, exposed as flat slices in a fixed order.
///
/// Gradients are any other `Parameters` with the same slice layout, so the
/// optimizers only need to zip slices.
pub trait Parameters {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;
}

impl Parameters for Vec<f64> {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

impl Parameters for Array2<f64> {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.as_slice().expect("contiguous")]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_slice_mut().expect("contiguous")]
    }
}

impl Parameters for EncoderParams {
    fn slices(&self) -> Vec<&[f64]> {
        self.tensors().into_iter().map(|(_, t)| t).collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.tensors_mut().into_iter().collect()
    }
}

impl Parameters for CrfParams {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.transitions().as_slice().expect("contiguous")]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.transitions_slice_mut()]
    }
}

fn check_shapes(params: &[&mut [f64]], grads: &[&[f64]]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Dimension(format!(
            "{} parameter tensors but {} gradient tensors",
            params.len(),
            grads.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() {
            return Err(Error::Dimension(format!(
                "tensor {i}: {} parameters but {} gradient entries",
                p.len(),
                g.len()
            )));
        }
    }
    Ok(())
}

fn check_lr(lr: f64) -> Result<()> {
    if lr > 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("learning rate must be positive, got {lr}")))
    }
}

/// `p <- p - lr * g` on every tensor.
pub fn sgd_step<P: Parameters, G: Parameters>(params: &mut P, grads: &G, lr: f64) -> Result<()> {
    check_lr(lr)?;
    let grads = grads.slices();
    let mut params = params.slices_mut();
    check_shapes(&params, &grads)?;
    for (p, g) in params.iter_mut().zip(&grads) {
        for (p, g) in p.iter_mut().zip(g.iter()) {
            *p -= lr * g;
        }
    }
    Ok(())
}

/// Adam with bias correction. Moments live in `state`.
pub fn adam_step<P: Parameters, G: Parameters>(
    params: &mut P,
    grads: &G,
    state: &mut OptimState,
    lr: f64,
) -> Result<()> {
    check_lr(lr)?;
    let OptimState { kind, step_count, first_moment, second_moment, beta1, beta2, eps } = state;
    if *kind != OptimizerKind::Adam {
        return Err(Error::Config("adam_step needs an Adam optimizer state".into()));
    }
    let grads = grads.slices();
    let mut params = params.slices_mut();
    check_shapes(&params, &grads)?;
    if first_moment.len() != params.len() || first_moment.iter().zip(&params).any(|(m, p)| m.len() != p.len()) {
        return Err(Error::Dimension("Adam moments do not match the parameter shapes".into()));
    }

    *step_count += 1;
    let t = *step_count as i32;
    let correct1 = 1.0 - beta1.powi(t);
    let correct2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(&grads).zip(first_moment.iter_mut()).zip(second_moment.iter_mut()) {
        for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = *beta1 * *m + (1.0 - *beta1) * g;
            *v = *beta2 * *v + (1.0 - *beta2) * g * g;
            let m_hat = *m / correct1;
            let v_hat = *v / correct2;
            *p -= lr * m_hat / (v_hat.sqrt() + *eps);
        }
    }
    Ok(())
}

/// Rescales `grads` so that their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.slices().iter().flat_map(|s| s.iter()).map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for s in grads.slices_mut() {
            s.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    /// Base learning rate used when none is configured.
    pub fn default_lr(self) -> f64 {
        match self {
            OptimizerKind::Sgd => 1e-2,
            OptimizerKind::Adam => 1e-3,
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Optimizer state. Moment buffers are empty for SGD.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    kind: OptimizerKind,
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl OptimState {
    pub fn sgd() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Fresh Adam state with zero moments shaped like `params`.
    pub fn adam<P: Parameters>(params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params.slices().iter().map(|s| vec![0.0; s.len()]).collect();
        Self { kind: OptimizerKind::Adam, first_moment: zeros.clone(), second_moment: zeros, ..Self::sgd() }
    }

    pub fn new<P: Parameters>(kind: OptimizerKind, params: &P) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::sgd(),
            OptimizerKind::Adam => Self::adam(params),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    /// Applies one update of whichever rule this state belongs to.
    pub fn step<P: Parameters, G: Parameters>(&mut self, params: &mut P, grads: &G, lr: f64) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => {
                sgd_step(params, grads, lr)?;
                self.step_count += 1;
                Ok(())
            }
            OptimizerKind::Adam => adam_step(params, grads, self, lr),
        }
    }
}

/// `lr(epoch) = base_lr * decay_factor ^ floor(epoch / decay_every)`, epochs 0-indexed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay_factor: f64,
    pub decay_every: u32,
}

impl LrSchedule {
    /// Decays by 0.1 every 10 epochs.
    pub fn step_decay(base_lr: f64) -> Result<Self> {
        check_lr(base_lr)?;
        Ok(Self { base_lr, decay_factor: 0.1, decay_every: 10 })
    }

    pub fn lr_at(&self, epoch: i64) -> Result<f64> {
        if epoch < 0 {
            return Err(Error::Config(format!("epoch must be non-negative, got {epoch}")));
        }
        let drops = epoch / i64::from(self.decay_every.max(1));
        Ok(self.base_lr * self.decay_factor.powi(drops as i32))
    }
}
