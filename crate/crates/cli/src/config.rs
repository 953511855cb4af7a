use std::path::Path;

use flowdub::conditioning::StackConfig;
use flowdub::flowmatch::{LrSchedule, DEFAULT_EULER_STEPS, DEFAULT_SIGMA_MIN};
use flowdub::metrics::{duration_coefficient, DEFAULT_NUM_CEPSTRA};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    Cosine,
}

impl Schedule {
    pub fn to_lr_schedule(self) -> LrSchedule {
        match self {
            Schedule::Constant => LrSchedule::Constant,
            Schedule::Cosine => LrSchedule::Cosine { floor: 0.0 },
        }
    }
}

/// Every tunable of a run. Loaded from `--config`, then overridden by
/// explicit flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub sigma_min: f64,
    pub euler_steps: usize,
    pub alpha: f64,
    pub alpha_sweep: Option<Vec<f64>>,
    pub tau: f64,
    pub sample_rate: u64,
    pub hop: u64,
    pub fps: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub schedule: Schedule,
    pub hidden: Vec<usize>,
    pub cond_drop_prob: f64,
    pub phonemes: usize,
    pub noise: f64,
    pub mixture_count: usize,
    pub sample_count: usize,
    pub k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            d: 16,
            layers: 2,
            heads: 1,
            ffn_dim: 32,
            sigma_min: DEFAULT_SIGMA_MIN,
            euler_steps: DEFAULT_EULER_STEPS,
            alpha: 0.0,
            alpha_sweep: None,
            tau: 0.1,
            sample_rate: 16_000,
            hop: 160,
            fps: 25,
            steps: 2000,
            batch_size: 64,
            lr: 1e-3,
            schedule: Schedule::Cosine,
            hidden: vec![128, 128],
            cond_drop_prob: 0.1,
            phonemes: 8,
            noise: 0.1,
            mixture_count: 8192,
            sample_count: 4096,
            k: DEFAULT_NUM_CEPSTRA,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::input(p, e))?;
                serde_json::from_str(&text).map_err(|e| CliError::input(p, e))
            }
        }
    }

    pub fn stack(&self) -> StackConfig {
        StackConfig {
            d: self.d,
            layers: self.layers,
            heads: self.heads,
            ffn_dim: self.ffn_dim,
        }
    }

    pub fn duration_coefficient(&self) -> CliResult<usize> {
        Ok(duration_coefficient(self.sample_rate, self.hop, self.fps)?)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.stack().validate()?;
        self.duration_coefficient()?;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.tau) {
            return Err(CliError::usage(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.sigma_min >= 0.0 && self.sigma_min < 1.0) {
            return Err(CliError::usage(format!(
                "sigma_min must lie in [0, 1), got {}",
                self.sigma_min
            )));
        }
        if self.euler_steps == 0 || self.steps == 0 || self.batch_size == 0 {
            return Err(CliError::usage("euler_steps, steps and batch_size must be >= 1"));
        }
        if !positive(self.lr) {
            return Err(CliError::usage(format!("lr must be > 0, got {}", self.lr)));
        }
        for &a in std::iter::once(&self.alpha).chain(self.alpha_sweep.iter().flatten()) {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(CliError::usage(format!("guidance scale must be >= 0, got {a}")));
            }
        }
        if self.alpha_sweep.as_ref().is_some_and(|s| s.is_empty()) {
            return Err(CliError::usage("alpha sweep is empty"));
        }
        if !(0.0..=1.0).contains(&self.cond_drop_prob) {
            return Err(CliError::usage("cond_drop_prob must lie in [0, 1]"));
        }
        if self.hidden.contains(&0) {
            return Err(CliError::usage("hidden layer widths must be >= 1"));
        }
        if self.phonemes == 0 || self.mixture_count == 0 || self.sample_count == 0 || self.k == 0 {
            return Err(CliError::usage(
                "phonemes, mixture_count, sample_count and k must be >= 1",
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(CliError::usage("noise must be >= 0"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        assert_eq!(RunConfig::default().duration_coefficient().unwrap(), 4);
    }

    #[test]
    fn rejects_bad_values() {
        for cfg in [
            RunConfig {
                tau: 0.0,
                ..Default::default()
            },
            RunConfig {
                heads: 3,
                ..Default::default()
            },
            RunConfig {
                hop: 256,
                sample_rate: 22_050,
                ..Default::default()
            },
            RunConfig {
                alpha_sweep: Some(vec![0.0, -0.2]),
                ..Default::default()
            },
            RunConfig {
                steps: 0,
                ..Default::default()
            },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 3, "schedule": "constant"}"#).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.schedule, Schedule::Constant);
        assert_eq!(cfg.d, 16);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 3}"#).is_err());
    }
}
