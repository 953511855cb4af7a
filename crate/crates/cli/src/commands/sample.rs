use flowdub::datagen::load_instance;
use flowdub::flowmatch::euler_sample;
use flowdub::guidance::{guided_euler_sample, ConditionBundle};
use flowdub::numkernel::Rng;
use flowdub::Matrix;

use crate::commands::train::{ModelKind, ModelMeta};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{ensure_exists, OutDir};
use crate::pipeline::condition;
use crate::SampleArgs;

const SAMPLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

fn alpha_tag(alpha: f64) -> String {
    format!("{alpha}")
}

pub fn run(args: SampleArgs, mut cfg: RunConfig, out: &OutDir) -> CliResult<()> {
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.alpha_sweep {
        cfg.alpha_sweep = Some(v);
    }
    if let Some(v) = args.euler_steps {
        cfg.euler_steps = v;
    }
    if let Some(v) = args.count {
        cfg.sample_count = v;
    }
    cfg.validate()?;
    ensure_exists(&args.model)?;
    let text = std::fs::read_to_string(&args.model)?;
    let meta: ModelMeta = serde_json::from_str(&text).map_err(|e| CliError::input(&args.model, e))?;
    let dir = args.model.parent().unwrap_or(std::path::Path::new("."));
    let net = meta.load_net(dir)?;
    let mut rng = Rng::new(cfg.seed ^ SAMPLE_STREAM);

    let (bundle, x0, is_mel) = match meta.kind {
        ModelKind::Mixture => {
            if args.instance.is_some() {
                return Err(CliError::usage("unconditional models take no --instance"));
            }
            let x0 = Matrix::from_fn(cfg.sample_count, meta.x_dim, |_, _| rng.normal());
            let empty = Matrix::zeros(cfg.sample_count, 0);
            (ConditionBundle::new(empty.clone(), empty, cfg.alpha)?, x0, false)
        }
        ModelKind::Dub => {
            let path = args
                .instance
                .as_ref()
                .ok_or_else(|| CliError::usage("this model is conditional; pass --instance"))?;
            ensure_exists(path)?;
            let inst = load_instance(path).map_err(|e| CliError::input(path, e))?;
            let (Some(stack), Some(stack_seed)) = (meta.stack, meta.stack_seed) else {
                return Err(CliError::input(
                    &args.model,
                    "conditional model without stack description",
                ));
            };
            if inst.z_p.cols() != stack.d || inst.target_mel.cols() != meta.x_dim {
                return Err(CliError::usage("instance dimensions do not match the model"));
            }
            let cond = condition(&inst, &stack, stack_seed, cfg.alpha)?;
            let x0 = Matrix::from_fn(inst.target_mel.rows(), meta.x_dim, |_, _| rng.normal());
            (cond, x0, true)
        }
    };

    let draw = |alpha: f64| -> CliResult<Matrix> {
        Ok(guided_euler_sample(&net, &bundle.with_alpha(alpha)?, &x0, cfg.euler_steps)?.0)
    };
    let write = |stem: &str, m: &Matrix| -> CliResult<()> {
        out.matrix(&format!("{stem}.fdt"), m)?;
        if is_mel {
            out.pgm(&format!("{stem}.pgm"), m)?;
        }
        Ok(())
    };

    match &cfg.alpha_sweep {
        None => write("sample", &draw(cfg.alpha)?),
        Some(alphas) => {
            let reference = draw(0.0)?;
            let mut rows = Vec::with_capacity(alphas.len());
            for &alpha in alphas {
                let m = if alpha == 0.0 { reference.clone() } else { draw(alpha)? };
                write(&format!("sample_alpha_{}", alpha_tag(alpha)), &m)?;
                rows.push(format!("{alpha},{}", m.sub(&reference)?.frobenius()));
            }
            out.csv("alpha_sweep.csv", "alpha,deviation_norm", rows)
        }
    }?;

    if args.unguided {
        let (plain, _) = euler_sample(&net, &bundle.mu_satl, &x0, cfg.euler_steps)?;
        write("sample_unguided", &plain)?;
    }
    Ok(())
}
