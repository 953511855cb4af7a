use std::path::Path;

use flowdub::conditioning::StackConfig;
use flowdub::datagen::load_instance;
use flowdub::flowmatch::{train_flow, FlowExample, TrainConfig, VectorFieldNet};
use flowdub::numkernel::tensor_io::save_tensor;
use flowdub::numkernel::{AdamConfig, Dtype, Mlp, Rng, Tensor};
use flowdub::Matrix;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Schedule};
use crate::error::{CliError, CliResult};
use crate::output::{ensure_exists, read_matrix, OutDir};
use crate::pipeline::{condition, stack_for};
use crate::TrainArgs;

pub const PARAMS_FILE: &str = "model.fdt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Unconditional field over mixture samples.
    Mixture,
    /// Per-frame mel field conditioned on a dubbing instance.
    Dub,
}

/// Sidecar describing `model.fdt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: ModelKind,
    pub sizes: Vec<usize>,
    pub x_dim: usize,
    pub cond_dim: usize,
    pub sigma_min: f64,
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub schedule: Schedule,
    pub cond_drop_prob: f64,
    /// Cross-modal stack used to build the condition, for `dub` models.
    pub stack: Option<StackConfig>,
    pub stack_seed: Option<u64>,
    pub params_file: String,
}

impl ModelMeta {
    pub fn load_net(&self, dir: &Path) -> CliResult<VectorFieldNet> {
        let path = dir.join(&self.params_file);
        ensure_exists(&path)?;
        let flat = read_matrix(&path)?;
        let mut mlp = Mlp::zeros(&self.sizes)?;
        flowdub::numkernel::Parameterized::load_flat(&mut mlp, flat.as_slice())
            .map_err(|e| CliError::input(&path, e))?;
        Ok(VectorFieldNet::from_mlp(mlp, self.x_dim, self.cond_dim)?)
    }
}

pub struct Seeds {
    pub net: u64,
    pub train: u64,
    pub stack: u64,
}

impl Seeds {
    pub fn derive(seed: u64) -> Self {
        let mut root = Rng::new(seed);
        Self {
            net: root.next_u64(),
            train: root.next_u64(),
            stack: root.next_u64(),
        }
    }
}

fn row(m: &Matrix, i: usize) -> Vec<f64> {
    m.row(i).to_vec()
}

pub fn run(args: TrainArgs, mut cfg: RunConfig, out: &OutDir) -> CliResult<()> {
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.schedule {
        cfg.schedule = v;
    }
    if let Some(v) = args.hidden {
        cfg.hidden = v;
    }
    if let Some(v) = args.sigma_min {
        cfg.sigma_min = v;
    }
    cfg.validate()?;
    ensure_exists(&args.data)?;

    let seeds = Seeds::derive(cfg.seed);
    let train_cfg = TrainConfig {
        steps: cfg.steps,
        batch_size: cfg.batch_size,
        adam: AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        sigma_min: cfg.sigma_min,
        cond_drop_prob: cfg.cond_drop_prob,
        schedule: cfg.schedule.to_lr_schedule(),
    };
    let is_instance = args.data.extension().is_some_and(|e| e == "json");

    let (kind, outcome, stack) = if is_instance {
        let inst = load_instance(&args.data).map_err(|e| CliError::input(&args.data, e))?;
        let stack = stack_for(&inst, cfg.stack())?;
        let cond = condition(&inst, &stack, seeds.stack, 0.0)?;
        let mel = inst.target_mel.clone();
        let (mu, mu_prime) = (cond.mu_satl, cond.mu_prime);
        let net = VectorFieldNet::new(mel.cols(), mu.cols(), &cfg.hidden, &mut Rng::new(seeds.net))?;
        let last = mel.rows() as u64 - 1;
        let source = move |r: &mut Rng| {
            let i = r.int_inclusive(0, last) as usize;
            FlowExample {
                target: row(&mel, i),
                cond: row(&mu, i),
                uncond: Some(row(&mu_prime, i)),
            }
        };
        (
            ModelKind::Dub,
            train_flow(net, &source, &train_cfg, seeds.train)?,
            Some(stack),
        )
    } else {
        let data = read_matrix(&args.data)?;
        let net = VectorFieldNet::new(data.cols(), 0, &cfg.hidden, &mut Rng::new(seeds.net))?;
        let last = data.rows() as u64 - 1;
        let source = move |r: &mut Rng| FlowExample {
            target: row(&data, r.int_inclusive(0, last) as usize),
            cond: Vec::new(),
            uncond: None,
        };
        (
            ModelKind::Mixture,
            train_flow(net, &source, &train_cfg, seeds.train)?,
            None,
        )
    };

    let net = outcome.net;
    let flat = flowdub::numkernel::Parameterized::to_flat(net.mlp());
    save_tensor(out.path(PARAMS_FILE), &Tensor::new(vec![flat.len()], flat)?, Dtype::F64)?;
    let meta = ModelMeta {
        kind,
        sizes: net.mlp().sizes(),
        x_dim: net.x_dim(),
        cond_dim: net.cond_dim(),
        sigma_min: cfg.sigma_min,
        seed: cfg.seed,
        steps: cfg.steps,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        schedule: cfg.schedule,
        cond_drop_prob: cfg.cond_drop_prob,
        stack,
        stack_seed: stack.map(|_| seeds.stack),
        params_file: PARAMS_FILE.to_string(),
    };
    out.json("model.json", &meta)?;
    out.csv(
        "loss.csv",
        "step,loss",
        outcome.losses.iter().enumerate().map(|(i, l)| format!("{i},{l}")),
    )
}
