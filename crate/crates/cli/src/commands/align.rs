use flowdub::alignment::{dual_loss, infonce_mp, infonce_pm, mas, positives_from_durations, similarity, PositivePairs};
use flowdub::datagen::load_instance;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{ensure_exists, read_matrix, OutDir};
use crate::AlignArgs;

#[derive(Debug, Serialize)]
struct Losses {
    l_mp: f64,
    l_pm: f64,
    l_dua: f64,
    tau: f64,
    /// `durations` when positives come from given timings, `mas` when they
    /// come from the alignment itself.
    positives: &'static str,
    mas_score: f64,
}

pub fn run(args: AlignArgs, mut cfg: RunConfig, out: &OutDir) -> CliResult<()> {
    if let Some(t) = args.tau {
        cfg.tau = t;
    }
    cfg.validate()?;
    let (z_m, z_p, durations) = match (&args.instance, &args.z_m, &args.z_p) {
        (Some(path), _, _) => {
            ensure_exists(path)?;
            let inst = load_instance(path).map_err(|e| CliError::input(path, e))?;
            (inst.z_m, inst.z_p, Some(inst.durations))
        }
        (None, Some(m), Some(p)) => {
            ensure_exists(m)?;
            ensure_exists(p)?;
            (read_matrix(m)?, read_matrix(p)?, args.durations.clone())
        }
        _ => return Err(CliError::usage("pass --instance, or --z-m with --z-p")),
    };

    let sim = similarity(&z_m, &z_p)?;
    let found = mas(&sim)?;
    let (positives, source) = match durations {
        Some(d) => (positives_from_durations(&d)?, "durations"),
        None => (PositivePairs::from_labels(found.path.clone(), z_p.rows())?, "mas"),
    };
    let l_mp = infonce_mp(&sim, &positives, cfg.tau)?;
    let l_pm = infonce_pm(&sim, &positives, cfg.tau)?;
    let losses = Losses {
        l_mp,
        l_pm,
        l_dua: dual_loss(l_mp, l_pm)?,
        tau: cfg.tau,
        positives: source,
        mas_score: found.score,
    };

    out.csv(
        "tab.csv",
        "phoneme,frames",
        found.tab.counts().iter().enumerate().map(|(j, c)| format!("{j},{c}")),
    )?;
    out.csv(
        "path.csv",
        "frame,phoneme",
        found.path.iter().enumerate().map(|(i, j)| format!("{i},{j}")),
    )?;
    out.json("losses.json", &losses)
}
