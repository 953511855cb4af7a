use flowdub::metrics::{mcd_report, mfcc, mfcc_from_log_mel, CepstralSeq};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::{ensure_exists, read_matrix, OutDir};
use crate::MetricsArgs;

const PATH_FILE: &str = "dtw_path.csv";

#[derive(Debug, Serialize)]
struct Report {
    mcd_dtw: f64,
    mcd_dtw_sl: f64,
    eta: f64,
    gamma: f64,
    r: usize,
    path_file: &'static str,
}

pub fn run(args: MetricsArgs, mut cfg: RunConfig, out: &OutDir) -> CliResult<()> {
    if let Some(k) = args.k {
        cfg.k = k;
    }
    cfg.validate()?;
    let load = |path: &std::path::Path| -> CliResult<CepstralSeq> {
        ensure_exists(path)?;
        let m = read_matrix(path)?;
        Ok(match (args.from_mel, args.power) {
            (false, _) => CepstralSeq::new(m)?,
            (true, false) => mfcc_from_log_mel(&m, cfg.k)?,
            (true, true) => mfcc(&m, cfg.k)?,
        })
    };
    let a = load(&args.reference)?;
    let b = load(&args.other)?;
    let rep = mcd_report(&a, &b)?;
    out.csv(PATH_FILE, "i,j", rep.path.iter().map(|(i, j)| format!("{i},{j}")))?;
    out.json(
        "metrics.json",
        &Report {
            mcd_dtw: rep.mcd_dtw,
            mcd_dtw_sl: rep.mcd_dtw_sl,
            eta: rep.eta,
            gamma: rep.gamma,
            r: rep.r,
            path_file: PATH_FILE,
        },
    )
}
