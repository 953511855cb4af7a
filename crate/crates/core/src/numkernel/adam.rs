use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid(format!(
                "Adam betas must lie in [0, 1), got ({}, {})",
                self.beta1, self.beta2
            )));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) || !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::invalid("Adam lr must be non-negative and eps positive"));
        }
        Ok(())
    }
}

/// First/second moment estimates and step counter. Owned by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    cfg.validate()?;
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "params {}, grads {}, moments {}/{}",
                params.len(),
                grads.len(),
                state.m.len(),
                state.v.len()
            ),
        ));
    }
    if !grads.iter().all(|g| g.is_finite()) {
        return Err(Error::non_finite("adam_step gradients"));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_from_fresh_state_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, &cfg).unwrap();
        let (m0, v0) = (s.m[0], s.v[0]);
        adam_step(&mut p, &[0.0], &mut s, &cfg).unwrap();
        assert_eq!(s.m[0], cfg.beta1 * m0);
        assert_eq!(s.v[0], cfg.beta2 * v0);
    }

    #[test]
    fn first_step_without_momentum_is_sign_step() {
        // β1 = β2 = 0: m̂ = g, v̂ = g², update = lr·g/(|g| + eps).
        let cfg = AdamConfig {
            lr: 0.01,
            beta1: 0.0,
            beta2: 0.0,
            eps: 1e-8,
        };
        let mut p = vec![1.0, 1.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[4.0, -0.5], &mut s, &cfg).unwrap();
        let expect0 = 1.0 - 0.01 * 4.0 / (4.0 + 1e-8);
        let expect1 = 1.0 + 0.01 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - expect0).abs() < 1e-15);
        assert!((p[1] - expect1).abs() < 1e-15);
        assert!((p[0] - 0.99).abs() < 1e-9 && (p[1] - 1.01).abs() < 1e-9);
    }

    #[test]
    fn repeated_runs_are_bitwise_identical() {
        let run = || {
            let mut p = vec![0.3, -0.1, 2.0];
            let mut s = AdamState::new(3);
            for k in 0..5 {
                let g: Vec<f64> = p.iter().map(|x| x * 0.7 + k as f64).collect();
                adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn rejects_non_finite_and_bad_config() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        assert!(adam_step(&mut p, &[f64::INFINITY], &mut s, &AdamConfig::default()).is_err());
        let bad = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(adam_step(&mut p, &[0.0], &mut s, &bad).is_err());
        assert!(adam_step(&mut p, &[0.0, 1.0], &mut s, &AdamConfig::default()).is_err());
    }
}
