use std::f64::consts::PI;

use super::tensor::{Gradient, ParamSet};
use crate::error::{Error, Result};

/// SGD with heavy-ball momentum under a cosine-annealed learning rate.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdState {
    pub base_lr: f64,
    pub min_lr: f64,
    pub t: usize,
    pub t_max: usize,
    pub momentum: f64,
    velocity: Option<Gradient>,
}

impl SgdState {
    pub fn new(base_lr: f64, min_lr: f64, t_max: usize, momentum: f64) -> Result<Self> {
        // Written positively so NaN rates are rejected too.
        let ordered = base_lr > 0.0 && min_lr >= 0.0 && min_lr <= base_lr;
        if !ordered {
            return Err(Error::Config(format!(
                "learning rates must satisfy 0 <= min_lr ({}) <= base_lr ({}), base_lr > 0",
                min_lr, base_lr
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", momentum)));
        }
        Ok(SgdState {
            base_lr,
            min_lr,
            t: 0,
            t_max,
            momentum,
            velocity: None,
        })
    }

    /// Learning rate at step `t`.
    pub fn lr_at(&self, t: usize) -> f64 {
        if self.t_max == 0 {
            return self.base_lr;
        }
        let t = t.min(self.t_max) as f64;
        self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + (PI * t / self.t_max as f64).cos())
    }

    /// Learning rate the next [`sgd_step`] will apply.
    pub fn current_lr(&self) -> f64 {
        self.lr_at(self.t)
    }

    pub fn velocity(&self) -> Option<&Gradient> {
        self.velocity.as_ref()
    }
}

/// One momentum-SGD update: `v ← μ·v + g`, `θ ← θ − lr(t)·v`, `t ← t + 1`.
pub fn sgd_step(params: &mut ParamSet, grad: &Gradient, state: &mut SgdState) -> Result<()> {
    if !grad.mirrors(params) {
        return Err(Error::StructureMismatch(
            "gradient does not mirror the parameter set".into(),
        ));
    }
    if state.t >= state.t_max {
        return Err(Error::Config(format!(
            "optimizer already ran its {} scheduled steps",
            state.t_max
        )));
    }
    let lr = state.current_lr();
    let velocity = match state.velocity.take() {
        Some(mut v) => {
            for ((_, vt), (_, gt)) in v.iter_mut().zip(grad.iter()) {
                for (x, g) in vt.data_mut().iter_mut().zip(gt.data()) {
                    *x = state.momentum * *x + g;
                }
            }
            v
        }
        None => grad.clone(),
    };
    for ((_, p), (_, v)) in params.iter_mut().zip(velocity.iter()) {
        for (x, d) in p.data_mut().iter_mut().zip(v.data()) {
            *x -= lr * d;
        }
    }
    state.velocity = Some(velocity);
    state.t += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn one(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::vector(vec![v]));
        p
    }

    #[test]
    fn schedule_boundaries() {
        let s = SgdState::new(0.1, 0.01, 100, 0.9).unwrap();
        assert_eq!(s.lr_at(0), 0.1);
        assert!((s.lr_at(100) - 0.01).abs() < 1e-15);
        assert!((s.lr_at(50) - 0.055).abs() < 1e-15);
    }

    #[test]
    fn schedule_non_increasing() {
        let s = SgdState::new(1e-2, 0.0, 1000, 0.0).unwrap();
        for t in 0..1000 {
            assert!(s.lr_at(t + 1) <= s.lr_at(t));
        }
    }

    #[test]
    fn plain_step_hand_case() {
        let mut p = one(1.0);
        let mut g = p.zero_gradient();
        g.insert("w", Tensor::vector(vec![2.0]));
        let mut s = SgdState::new(0.1, 0.0, 10, 0.0).unwrap();
        sgd_step(&mut p, &g, &mut s).unwrap();
        assert!((p.get("w").unwrap().data()[0] - 0.8).abs() < 1e-15);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn momentum_accumulates() {
        let mut p = one(0.0);
        let mut g = p.zero_gradient();
        g.insert("w", Tensor::vector(vec![1.0]));
        // t_max large so the lr is effectively constant over two steps
        let mut s = SgdState::new(1.0, 1.0, 10, 0.5).unwrap();
        sgd_step(&mut p, &g, &mut s).unwrap();
        sgd_step(&mut p, &g, &mut s).unwrap();
        assert_eq!(p.get("w").unwrap().data()[0], -(1.0 + 1.5));
    }

    #[test]
    fn rejects_exhausted_schedule_and_bad_config() {
        let mut p = one(0.0);
        let g = p.zero_gradient();
        let mut s = SgdState::new(0.1, 0.0, 0, 0.0).unwrap();
        assert!(sgd_step(&mut p, &g, &mut s).is_err());
        assert!(SgdState::new(0.1, 0.2, 1, 0.0).is_err());
        assert!(SgdState::new(0.1, 0.0, 1, 1.0).is_err());
    }
}
