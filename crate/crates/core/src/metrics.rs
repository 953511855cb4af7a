//! Mel-cepstral distortion under dynamic time warping, its speech-length
//! weighted variant, and the mel/video frame-rate coefficient.

use std::f64::consts::{LN_10, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::Matrix;

pub const DEFAULT_NUM_CEPSTRA: usize = 12;
const POWER_FLOOR: f64 = 1e-10;

/// `10√2 / ln 10`.
pub fn mcd_constant() -> f64 {
    10.0 * SQRT_2 / LN_10
}

/// Frames × K cepstral coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CepstralSeq(Matrix);

impl CepstralSeq {
    pub fn new(frames: Matrix) -> Result<Self> {
        if frames.rows() == 0 || frames.cols() == 0 {
            return Err(Error::invalid(
                "cepstral sequence must have at least one frame and one coefficient",
            ));
        }
        frames.ensure_finite("cepstral sequence")?;
        Ok(Self(frames))
    }

    pub fn frames(&self) -> &Matrix {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn order(&self) -> usize {
        self.0.cols()
    }
}

/// Orthonormal DCT-II coefficients `1..=k` of `x`.
fn dct_tail(x: &[f64], k: usize) -> Vec<f64> {
    let n = x.len() as f64;
    let scale = (2.0 / n).sqrt();
    (1..=k)
        .map(|q| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * q as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                .sum();
            scale * s
        })
        .collect()
}

fn cepstra(mel: &Matrix, k: usize, pre: impl Fn(f64) -> f64) -> Result<CepstralSeq> {
    if k == 0 {
        return Err(Error::invalid("number of cepstral coefficients must be >= 1"));
    }
    if mel.cols() < k + 1 {
        return Err(Error::invalid(format!(
            "{k} cepstral coefficients need at least {} mel bins, got {}",
            k + 1,
            mel.cols()
        )));
    }
    mel.ensure_finite("mel input")?;
    let mut out = Matrix::zeros(mel.rows(), k);
    for i in 0..mel.rows() {
        let logs: Vec<f64> = mel.row(i).iter().map(|&v| pre(v)).collect();
        out.row_mut(i).copy_from_slice(&dct_tail(&logs, k));
    }
    CepstralSeq::new(out)
}

/// MFCCs from a power mel spectrogram: `log(max(p, 1e-10))`, then
/// orthonormal DCT-II, keeping coefficients `1..=k`.
pub fn mfcc(mel: &Matrix, k: usize) -> Result<CepstralSeq> {
    cepstra(mel, k, |p| p.max(POWER_FLOOR).ln())
}

/// As [`mfcc`] for a mel spectrogram that is already log-compressed.
pub fn mfcc_from_log_mel(log_mel: &Matrix, k: usize) -> Result<CepstralSeq> {
    cepstra(log_mel, k, |v| v)
}

/// Per-frame distortion `(10√2 / ln 10) ‖c − c′‖₂`.
pub fn mcd_frame(c: &[f64], c_other: &[f64]) -> Result<f64> {
    if c.len() != c_other.len() {
        return Err(Error::shape(
            "mcd_frame",
            format!("orders {} and {}", c.len(), c_other.len()),
        ));
    }
    let sq: f64 = c.iter().zip(c_other).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(mcd_constant() * sq.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwResult {
    /// Accumulated cost along the optimal path.
    pub gamma: f64,
    /// Path length.
    pub r: usize,
    /// Zero-based `(i, j)` pairs from `(0, 0)` to `(M-1, N-1)`.
    pub path: Vec<(usize, usize)>,
}

/// DTW over a precomputed `M × N` cost matrix with steps (1,0), (0,1),
/// (1,1). On ties the backtrack prefers the diagonal, then (1,0).
pub fn dtw_cost(cost: &Matrix) -> Result<DtwResult> {
    let (m, n) = cost.shape();
    if m == 0 || n == 0 {
        return Err(Error::invalid("dtw needs two nonempty sequences"));
    }
    cost.ensure_finite("dtw cost")?;
    let mut acc = Matrix::filled(m, n, f64::INFINITY);
    for i in 0..m {
        for j in 0..n {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 {
                    acc.get(i - 1, j - 1)
                } else {
                    f64::INFINITY
                };
                let up = if i > 0 { acc.get(i - 1, j) } else { f64::INFINITY };
                let left = if j > 0 { acc.get(i, j - 1) } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc.set(i, j, best + cost.get(i, j));
        }
    }
    let mut path = vec![(m - 1, n - 1)];
    let (mut i, mut j) = (m - 1, n - 1);
    while (i, j) != (0, 0) {
        let diag = if i > 0 && j > 0 {
            acc.get(i - 1, j - 1)
        } else {
            f64::INFINITY
        };
        let up = if i > 0 { acc.get(i - 1, j) } else { f64::INFINITY };
        let left = if j > 0 { acc.get(i, j - 1) } else { f64::INFINITY };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i, j));
    }
    path.reverse();
    Ok(DtwResult {
        gamma: acc.get(m - 1, n - 1),
        r: path.len(),
        path,
    })
}

/// DTW between two cepstral sequences with [`mcd_frame`] as cell cost.
pub fn dtw(c: &CepstralSeq, c_other: &CepstralSeq) -> Result<DtwResult> {
    if c.order() != c_other.order() {
        return Err(Error::shape(
            "dtw",
            format!("cepstral orders {} and {}", c.order(), c_other.order()),
        ));
    }
    let (a, b) = (c.frames(), c_other.frames());
    let mut cost = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            cost.set(i, j, mcd_frame(a.row(i), b.row(j))?);
        }
    }
    dtw_cost(&cost)
}

/// `max(M, N) / min(M, N)`.
pub fn eta(m: usize, n: usize) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("sequence lengths must be positive"));
    }
    Ok(m.max(n) as f64 / m.min(n) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McdReport {
    pub mcd_dtw: f64,
    pub mcd_dtw_sl: f64,
    pub eta: f64,
    pub gamma: f64,
    pub r: usize,
    pub path: Vec<(usize, usize)>,
}

/// All metric outputs for one pair from a single DTW pass.
pub fn mcd_report(c: &CepstralSeq, c_other: &CepstralSeq) -> Result<McdReport> {
    let res = dtw(c, c_other)?;
    let eta = eta(c.len(), c_other.len())?;
    let mcd_dtw = res.gamma / res.r as f64;
    Ok(McdReport {
        mcd_dtw,
        mcd_dtw_sl: eta * mcd_dtw,
        eta,
        gamma: res.gamma,
        r: res.r,
        path: res.path,
    })
}

/// `γ / R`.
pub fn mcd_dtw(c: &CepstralSeq, c_other: &CepstralSeq) -> Result<f64> {
    Ok(mcd_report(c, c_other)?.mcd_dtw)
}

/// `η · γ / R`.
pub fn mcd_dtw_sl(c: &CepstralSeq, c_other: &CepstralSeq) -> Result<f64> {
    Ok(mcd_report(c, c_other)?.mcd_dtw_sl)
}

/// Mel frames per video frame, `(sr / hop) / fps`. Fails unless this is a
/// positive integer.
pub fn duration_coefficient(sr: u64, hop: u64, fps: u64) -> Result<usize> {
    if sr == 0 || hop == 0 || fps == 0 {
        return Err(Error::invalid("sample rate, hop and fps must be positive"));
    }
    let denom = hop * fps;
    if !sr.is_multiple_of(denom) {
        return Err(Error::invalid(format!(
            "sr/hop/fps = {sr}/{hop}/{fps} = {} is not an integer",
            sr as f64 / denom as f64
        )));
    }
    Ok((sr / denom) as usize)
}

pub fn expected_mel_length(video_frames: usize, n: usize) -> usize {
    n * video_frames
}
