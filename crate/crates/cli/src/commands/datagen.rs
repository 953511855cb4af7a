use flowdub::datagen::{make_dub_instance_with, sample_mixture, save_instance, DubConfig, MixtureSpec};

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::OutDir;
use crate::{DatagenArgs, Preset};

pub fn run(args: DatagenArgs, mut cfg: RunConfig, out: &OutDir) -> CliResult<()> {
    if let Some(c) = args.count {
        cfg.mixture_count = c;
    }
    if let Some(n) = args.noise {
        cfg.noise = n;
    }
    if let Some(p) = args.phonemes {
        cfg.phonemes = p;
    }
    cfg.validate()?;
    match args.preset {
        Preset::Mixture2d => {
            let spec = MixtureSpec::preset_2d();
            let samples = sample_mixture(&spec, cfg.mixture_count, cfg.seed)?;
            out.json("mixture.json", &spec)?;
            out.matrix("samples.fdt", &samples)?;
        }
        Preset::DubSmall | Preset::DubFullDims => {
            let base = if args.preset == Preset::DubSmall {
                DubConfig {
                    d: cfg.d,
                    ..DubConfig::default()
                }
            } else {
                DubConfig::full_dims()
            };
            let dub = DubConfig {
                phonemes: cfg.phonemes,
                n: cfg.duration_coefficient()?,
                noise: cfg.noise,
                ..base
            };
            let inst = make_dub_instance_with(&dub, cfg.seed)?;
            save_instance(&inst, out.root(), "instance")?;
        }
    }
    Ok(())
}
