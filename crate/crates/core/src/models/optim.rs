//! Adaptive-moment optimizer and learning-rate schedules.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    /// Adam with decoupled weight decay.
    AdamW,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::AdamW => "adamw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Constant,
    /// `lr_t = base · (1 + cos(π t / T)) / 2`.
    Cosine,
}

impl Schedule {
    pub fn lr(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            Schedule::Constant => base,
            Schedule::Cosine => base * (1.0 + (std::f64::consts::PI * step as f64 / total.max(1) as f64).cos()) / 2.0,
        }
    }
}

impl std::str::FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Schedule::Constant),
            "cosine" => Ok(Schedule::Cosine),
            other => Err(Error::InvalidParameter(format!("unknown schedule `{other}`"))),
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "adamw" => Ok(OptimizerKind::AdamW),
            other => Err(Error::InvalidParameter(format!("unknown optimizer `{other}`"))),
        }
    }
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Moment estimates for a fixed list of parameter blocks.
#[derive(Debug, Clone)]
pub struct Adam {
    kind: OptimizerKind,
    weight_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(kind: OptimizerKind, weight_decay: f64, block_sizes: &[usize]) -> Self {
        Adam {
            kind,
            weight_decay,
            m: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    /// One update with learning rate `lr`. In AdamW mode every parameter is
    /// first shrunk by `lr · λ · param`.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, lr: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter block count changed");
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let decay = if self.kind == OptimizerKind::AdamW && self.weight_decay != 0.0 { lr * self.weight_decay } else { 0.0 };
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                if decay != 0.0 {
                    p[i] -= decay * p[i];
                }
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + EPS);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(Schedule::Cosine.lr(1e-3, 0, 100), 1e-3);
        assert!((Schedule::Cosine.lr(1e-3, 50, 100) - 5e-4).abs() < 1e-18);
        assert!(Schedule::Cosine.lr(1e-3, 100, 100).abs() < 1e-18);
        assert_eq!(Schedule::Constant.lr(0.1, 7, 10), 0.1);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        // Bias correction makes the first step exactly lr·sign(g) (up to eps).
        let mut p = vec![1.0, -2.0];
        let mut opt = Adam::new(OptimizerKind::Adam, 0.0, &[2]);
        opt.step(vec![&mut p], vec![&[0.5, -3.0]], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] + 1.9).abs() < 1e-7);
    }

    #[test]
    fn decoupled_decay_applies_before_moment_step() {
        let mut p = vec![2.0];
        let mut opt = Adam::new(OptimizerKind::AdamW, 4.0, &[1]);
        opt.step(vec![&mut p], vec![&[0.0]], 0.01);
        assert!((p[0] - 2.0 * (1.0 - 0.04)).abs() < 1e-15);
    }

    #[test]
    fn adamw_without_decay_is_adam() {
        let grads = [[0.3, -0.1], [0.05, 0.7], [-1.0, 0.2]];
        let (mut a, mut b) = (vec![0.4, -0.6], vec![0.4, -0.6]);
        let mut oa = Adam::new(OptimizerKind::Adam, 0.0, &[2]);
        let mut ob = Adam::new(OptimizerKind::AdamW, 0.0, &[2]);
        for g in &grads {
            oa.step(vec![&mut a], vec![g], 0.01);
            ob.step(vec![&mut b], vec![g], 0.01);
        }
        assert_eq!(a, b);
    }
}
