//! Dual contrastive lip/phoneme alignment.
//!
//! Lip frames `z_m` (L_v × d) and phoneme embeddings `z_p` (L_t × d) are
//! scored by dot product into an L_v × L_t similarity matrix. Two InfoNCE
//! terms pull each frame toward its ground-truth phoneme and each phoneme
//! toward its frames; their mean is the dual loss. Monotonic alignment search
//! turns the similarity matrix into per-phoneme frame counts (`tab`), which
//! drive the upsampling of phoneme-level features to frame level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::Matrix;

/// Default InfoNCE temperature.
pub const DEFAULT_TAU: f64 = 0.1;

/// Lip-frame × phoneme similarity scores.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix(Matrix);

impl SimilarityMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        values.ensure_finite("SimilarityMatrix")?;
        Ok(Self(values))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn lip_frames(&self) -> usize {
        self.0.rows()
    }

    pub fn phonemes(&self) -> usize {
        self.0.cols()
    }
}

/// Frames assigned to each phoneme. Every count is at least one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MappingTable(Vec<usize>);

impl MappingTable {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::invalid("mapping table needs at least one phoneme"));
        }
        if let Some(j) = counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!("phoneme {j} has zero frames")));
        }
        Ok(Self(counts))
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total frames, `L_v`.
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Phoneme index of every frame.
    pub fn frame_labels(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(j, &c)| std::iter::repeat_n(j, c))
            .collect()
    }
}

/// Ground-truth frame → phoneme assignment; one positive phoneme per frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositivePairs {
    labels: Vec<usize>,
    phonemes: usize,
}

impl PositivePairs {
    pub fn from_labels(labels: Vec<usize>, phonemes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&j| j >= phonemes) {
            return Err(Error::invalid(format!(
                "phoneme index {bad} out of range for {phonemes} phonemes"
            )));
        }
        Ok(Self { labels, phonemes })
    }

    /// Phoneme index per lip frame.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn lip_frames(&self) -> usize {
        self.labels.len()
    }

    pub fn phonemes(&self) -> usize {
        self.phonemes
    }

    /// All `(frame, phoneme)` pairs in frame order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.labels.iter().copied().enumerate().collect()
    }

    fn check_against(&self, sim: &SimilarityMatrix) -> Result<()> {
        if sim.lip_frames() != self.labels.len() || sim.phonemes() != self.phonemes {
            return Err(Error::shape(
                "positive pairs",
                format!(
                    "similarity is {}x{}, positives cover {} frames × {} phonemes",
                    sim.lip_frames(),
                    sim.phonemes(),
                    self.labels.len(),
                    self.phonemes
                ),
            ));
        }
        Ok(())
    }
}

/// Expands per-phoneme durations into contiguous frame blocks.
pub fn positives_from_durations(durations: &[usize]) -> Result<PositivePairs> {
    let tab = MappingTable::new(durations.to_vec())?;
    PositivePairs::from_labels(tab.frame_labels(), tab.len())
}

/// `Sim[i][j] = z_m[i] · z_p[j]`.
pub fn similarity(z_m: &Matrix, z_p: &Matrix) -> Result<SimilarityMatrix> {
    if z_m.cols() != z_p.cols() {
        return Err(Error::shape(
            "similarity",
            format!("lip feature dim {} vs phoneme feature dim {}", z_m.cols(), z_p.cols()),
        ));
    }
    SimilarityMatrix::new(z_m.matmul_t(z_p)?)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("temperature must be > 0, got {tau}")))
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Contrastive loss over one query axis, with the gradient w.r.t. the scores.
///
/// `scores(q, k)` reads the similarity between query `q` and key `k`;
/// `positive(q, k)` marks positive keys. Returns the summed loss and
/// `dL/dscore` laid out as `[query][key]`.
fn info_nce(
    queries: usize,
    keys: usize,
    tau: f64,
    scores: impl Fn(usize, usize) -> f64,
    positive: impl Fn(usize, usize) -> bool,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(queries);
    for q in 0..queries {
        let logits: Vec<f64> = (0..keys).map(|k| scores(q, k) / tau).collect();
        let pos: Vec<bool> = (0..keys).map(|k| positive(q, k)).collect();
        if !pos.iter().any(|&p| p) {
            return Err(Error::invalid(format!("query {q} has no positive key")));
        }
        let all = log_sum_exp(logits.iter().copied());
        let pos_lse = log_sum_exp(logits.iter().zip(&pos).filter(|(_, &p)| p).map(|(&l, _)| l));
        loss += all - pos_lse;
        // d/dlogit = softmax_all - softmax_pos; chain through 1/τ.
        grad.push(
            logits
                .iter()
                .zip(&pos)
                .map(|(&l, &p)| {
                    let all_w = (l - all).exp();
                    let pos_w = if p { (l - pos_lse).exp() } else { 0.0 };
                    (all_w - pos_w) / tau
                })
                .collect(),
        );
    }
    Ok((loss, grad))
}

/// Lip frames as queries, phonemes as keys; summed over frames.
pub fn infonce_mp(sim: &SimilarityMatrix, positives: &PositivePairs, tau: f64) -> Result<f64> {
    Ok(infonce_mp_grad(sim, positives, tau)?.0)
}

/// Phonemes as queries, lip frames as keys; a phoneme's positives are all of
/// its frames.
pub fn infonce_pm(sim: &SimilarityMatrix, positives: &PositivePairs, tau: f64) -> Result<f64> {
    Ok(infonce_pm_grad(sim, positives, tau)?.0)
}

/// `L_mp` and `dL_mp/dSim`.
pub fn infonce_mp_grad(sim: &SimilarityMatrix, positives: &PositivePairs, tau: f64) -> Result<(f64, Matrix)> {
    check_tau(tau)?;
    positives.check_against(sim)?;
    let s = sim.matrix();
    let labels = positives.labels();
    let (loss, g) = info_nce(s.rows(), s.cols(), tau, |i, j| s.get(i, j), |i, j| labels[i] == j)?;
    let grad = Matrix::from_fn(s.rows(), s.cols(), |i, j| g[i][j]);
    Ok((loss, grad))
}

/// `L_pm` and `dL_pm/dSim`.
pub fn infonce_pm_grad(sim: &SimilarityMatrix, positives: &PositivePairs, tau: f64) -> Result<(f64, Matrix)> {
    check_tau(tau)?;
    positives.check_against(sim)?;
    let s = sim.matrix();
    let labels = positives.labels();
    let (loss, g) = info_nce(s.cols(), s.rows(), tau, |j, i| s.get(i, j), |j, i| labels[i] == j)?;
    let grad = Matrix::from_fn(s.rows(), s.cols(), |i, j| g[j][i]);
    Ok((loss, grad))
}

/// `L_dua = (L_mp + L_pm) / 2`.
pub fn dual_loss(l_mp: f64, l_pm: f64) -> Result<f64> {
    if !(l_mp.is_finite() && l_pm.is_finite()) {
        return Err(Error::non_finite("dual_loss"));
    }
    Ok(0.5 * l_mp + 0.5 * l_pm)
}

#[derive(Debug, Clone)]
pub struct DualLossGrad {
    pub l_mp: f64,
    pub l_pm: f64,
    pub l_dua: f64,
    pub grad_z_m: Matrix,
    pub grad_z_p: Matrix,
}

/// Dual contrastive loss evaluated from the embeddings, with gradients
/// w.r.t. both embedding sequences.
pub fn dual_loss_grad(z_m: &Matrix, z_p: &Matrix, positives: &PositivePairs, tau: f64) -> Result<DualLossGrad> {
    let sim = similarity(z_m, z_p)?;
    let (l_mp, g_mp) = infonce_mp_grad(&sim, positives, tau)?;
    let (l_pm, g_pm) = infonce_pm_grad(&sim, positives, tau)?;
    let l_dua = dual_loss(l_mp, l_pm)?;
    let d_sim = g_mp.add(&g_pm)?.scale(0.5);
    Ok(DualLossGrad {
        l_mp,
        l_pm,
        l_dua,
        grad_z_m: d_sim.matmul(z_p)?,
        grad_z_p: d_sim.t_matmul(z_m)?,
    })
}

/// Result of monotonic alignment search.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub tab: MappingTable,
    /// Phoneme index per lip frame.
    pub path: Vec<usize>,
    /// Total similarity collected along the path.
    pub score: f64,
}

/// Monotonic alignment search.
///
/// Finds the assignment of frames to phonemes that maximizes the summed raw
/// similarity, subject to: frame 0 takes phoneme 0, the last frame takes the
/// last phoneme, and each next frame either stays on the current phoneme or
/// advances by one. Every phoneme therefore gets a contiguous run of at least
/// one frame. Among equal-score paths the trace-back keeps each run's start
/// as early as possible, working from the last phoneme backward.
pub fn mas(sim: &SimilarityMatrix) -> Result<Alignment> {
    let s = sim.matrix();
    let (lv, lt) = s.shape();
    if lt == 0 {
        return Err(Error::invalid("alignment needs at least one phoneme"));
    }
    if lv < lt {
        return Err(Error::Infeasible(format!(
            "{lv} lip frames cannot cover {lt} phonemes with at least one frame each"
        )));
    }
    // best[i][j]: max score of frames 0..=i with frame i on phoneme j.
    let mut best = Matrix::filled(lv, lt, f64::NEG_INFINITY);
    best.set(0, 0, s.get(0, 0));
    for i in 1..lv {
        // phoneme j is reachable at frame i only if j <= i and the remaining
        // frames can still cover the remaining phonemes.
        let lo = (lt + i).saturating_sub(lv);
        let hi = i.min(lt - 1);
        for j in lo..=hi {
            let stay = best.get(i - 1, j);
            let advance = if j > 0 {
                best.get(i - 1, j - 1)
            } else {
                f64::NEG_INFINITY
            };
            best.set(i, j, s.get(i, j) + stay.max(advance));
        }
    }
    let score = best.get(lv - 1, lt - 1);
    let mut path = vec![0; lv];
    let mut j = lt - 1;
    for i in (1..lv).rev() {
        path[i] = j;
        if j == 0 {
            continue;
        }
        let stay = best.get(i - 1, j);
        let advance = best.get(i - 1, j - 1);
        // Must advance when i equals j (earlier frames are all needed).
        if i == j || advance > stay {
            j -= 1;
        }
    }
    path[0] = j;
    debug_assert_eq!(j, 0);
    let mut counts = vec![0; lt];
    for &p in &path {
        counts[p] += 1;
    }
    Ok(Alignment {
        tab: MappingTable::new(counts)?,
        path,
        score,
    })
}

/// Repeats row `j` of `features` `tab[j]` times.
pub fn upsample(features: &Matrix, tab: &MappingTable) -> Result<Matrix> {
    if features.rows() != tab.len() {
        return Err(Error::shape(
            "upsample",
            format!(
                "{} feature rows vs mapping table of length {}",
                features.rows(),
                tab.len()
            ),
        ));
    }
    let mut out = Matrix::zeros(tab.total(), features.cols());
    let mut r = 0;
    for (j, &count) in tab.counts().iter().enumerate() {
        for _ in 0..count {
            out.row_mut(r).copy_from_slice(features.row(j));
            r += 1;
        }
    }
    Ok(out)
}

/// Gradient of [`upsample`]: sums the frame-level rows back into their
/// phoneme rows.
pub fn upsample_backward(grad_frames: &Matrix, tab: &MappingTable) -> Result<Matrix> {
    if grad_frames.rows() != tab.total() {
        return Err(Error::shape(
            "upsample_backward",
            format!("{} frame rows vs table total {}", grad_frames.rows(), tab.total()),
        ));
    }
    let mut out = Matrix::zeros(tab.len(), grad_frames.cols());
    for (i, j) in tab.frame_labels().into_iter().enumerate() {
        for (o, g) in out.row_mut(j).iter_mut().zip(grad_frames.row(i)) {
            *o += g;
        }
    }
    Ok(out)
}

/// Numerically stable softmax of each row.
pub fn row_softmax(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Lip-side context `C_lip = softmax(Sim / √d) · z_p`: the similarity matrix
/// serves as the attention logits with lip frames as queries and phonemes as
/// keys and values.
pub fn lip_attention(z_m: &Matrix, z_p: &Matrix, sim: &SimilarityMatrix) -> Result<Matrix> {
    if z_m.cols() != z_p.cols() {
        return Err(Error::shape(
            "lip_attention",
            format!("lip feature dim {} vs phoneme feature dim {}", z_m.cols(), z_p.cols()),
        ));
    }
    if sim.lip_frames() != z_m.rows() || sim.phonemes() != z_p.rows() {
        return Err(Error::shape(
            "lip_attention",
            format!(
                "similarity {}x{} vs {} frames × {} phonemes",
                sim.lip_frames(),
                sim.phonemes(),
                z_m.rows(),
                z_p.rows()
            ),
        ));
    }
    let scale = 1.0 / (z_p.cols() as f64).sqrt();
    row_softmax(&sim.matrix().scale(scale)).matmul(z_p)
}

/// Multi-head variant: features are split into `heads` equal slices, each
/// head attends with its own slice similarity scaled by `1/√(d/heads)`, and
/// head outputs are concatenated. One head equals [`lip_attention`] with
/// `similarity(z_m, z_p)`.
pub fn lip_attention_heads(z_m: &Matrix, z_p: &Matrix, heads: usize) -> Result<Matrix> {
    let d = z_m.cols();
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::invalid(format!("{heads} heads do not divide feature dim {d}")));
    }
    if z_p.cols() != d {
        return Err(Error::shape(
            "lip_attention_heads",
            format!("lip feature dim {d} vs phoneme feature dim {}", z_p.cols()),
        ));
    }
    let dh = d / heads;
    let mut out = Matrix::zeros(z_m.rows(), d);
    for h in 0..heads {
        let qm = z_m.col_slice(h * dh, dh);
        let kp = z_p.col_slice(h * dh, dh);
        let sim = similarity(&qm, &kp)?;
        out.set_col_slice(h * dh, &lip_attention(&qm, &kp, &sim)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{finite_diff_flat, Rng};

    fn sim(rows: &[&[f64]]) -> SimilarityMatrix {
        SimilarityMatrix::new(Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()).unwrap()
    }

    #[test]
    fn positives_expand_durations() {
        let p = positives_from_durations(&[2, 3]).unwrap();
        assert_eq!(p.pairs(), vec![(0, 0), (1, 0), (2, 1), (3, 1), (4, 1)]);
        assert_eq!(positives_from_durations(&[1]).unwrap().pairs(), vec![(0, 0)]);
        // Boundaries at cumulative sums 3 and 4: frame 4 belongs to phoneme 2.
        assert_eq!(positives_from_durations(&[3, 1, 2]).unwrap().labels()[4], 2);
        assert!(positives_from_durations(&[2, 0]).is_err());
        assert!(positives_from_durations(&[]).is_err());
    }

    #[test]
    fn similarity_examples() {
        let e = Matrix::identity(3);
        assert_eq!(similarity(&e, &e).unwrap().matrix(), &e);
        let z = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 0.0]]).unwrap();
        let s = similarity(&z, &z).unwrap();
        assert_eq!(s.matrix(), &s.matrix().transpose());
        let zp = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, -1.0]]).unwrap();
        // Hand dot products.
        let expected = [[3.0, 0.0], [-0.5, 2.0], [3.0, 6.0]];
        let s = similarity(&z, &zp).unwrap();
        for (i, row) in expected.iter().enumerate() {
            assert_eq!(s.matrix().row(i), row);
        }
        assert!(similarity(&z, &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn infonce_uniform_and_saturated() {
        let s = sim(&[&[0.7, 0.7, 0.7]]);
        let p = PositivePairs::from_labels(vec![1], 3).unwrap();
        assert!((infonce_mp(&s, &p, 0.1).unwrap() - 3f64.ln()).abs() < 1e-12);
        let s = sim(&[&[50.0, 0.0, 0.0]]);
        let p = PositivePairs::from_labels(vec![0], 3).unwrap();
        assert!(infonce_mp(&s, &p, 1.0).unwrap() < 1e-6);
    }

    #[test]
    fn infonce_two_by_two_closed_form() {
        let s = sim(&[&[2.0, 0.0], &[0.0, 2.0]]);
        let p = positives_from_durations(&[1, 1]).unwrap();
        let expected = 2.0 * (1.0 + (-2.0f64).exp()).ln();
        let mp = infonce_mp(&s, &p, 1.0).unwrap();
        let pm = infonce_pm(&s, &p, 1.0).unwrap();
        assert!((mp - expected).abs() < 1e-9);
        assert!((pm - expected).abs() < 1e-9);
        assert_eq!(dual_loss(mp, pm).unwrap(), mp);
    }

    #[test]
    fn infonce_pm_multi_positive_single_phoneme_is_zero() {
        let s = sim(&[&[0.3], &[-4.0]]);
        let p = positives_from_durations(&[2]).unwrap();
        assert!(infonce_pm(&s, &p, 0.1).unwrap().abs() < 1e-15);
    }

    #[test]
    fn infonce_errors() {
        let s = sim(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let p = positives_from_durations(&[1, 1]).unwrap();
        assert!(infonce_mp(&s, &p, 0.0).is_err());
        assert!(infonce_pm(&s, &p, -1.0).is_err());
        // Phoneme 1 has no frame, so L_pm has a query without positives.
        let lonely = PositivePairs::from_labels(vec![0, 0], 2).unwrap();
        assert!(infonce_pm(&s, &lonely, 1.0).is_err());
        let wrong_shape = positives_from_durations(&[3]).unwrap();
        assert!(infonce_mp(&s, &wrong_shape, 1.0).is_err());
    }

    #[test]
    fn dual_loss_mean() {
        assert_eq!(dual_loss(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(dual_loss(2.0, 4.0).unwrap(), 3.0);
        assert!(dual_loss(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn dual_loss_gradient_matches_finite_differences() {
        let mut rng = Rng::new(21);
        let (lv, lt, d) = (6, 3, 4);
        let z_m = Matrix::from_fn(lv, d, |_, _| rng.normal() * 0.5);
        let z_p = Matrix::from_fn(lt, d, |_, _| rng.normal() * 0.5);
        let pos = positives_from_durations(&[2, 1, 3]).unwrap();
        let g = dual_loss_grad(&z_m, &z_p, &pos, 0.5).unwrap();
        let n_m = lv * d;
        let flat: Vec<f64> = z_m.as_slice().iter().chain(z_p.as_slice()).copied().collect();
        let fd = finite_diff_flat(
            |x| {
                let m = Matrix::from_vec(lv, d, x[..n_m].to_vec()).unwrap();
                let p = Matrix::from_vec(lt, d, x[n_m..].to_vec()).unwrap();
                dual_loss_grad(&m, &p, &pos, 0.5).unwrap().l_dua
            },
            &flat,
            1e-6,
        )
        .unwrap();
        let analytic: Vec<f64> = g
            .grad_z_m
            .as_slice()
            .iter()
            .chain(g.grad_z_p.as_slice())
            .copied()
            .collect();
        for (a, n) in analytic.iter().zip(&fd) {
            assert!((a - n).abs() <= 1e-8 + 1e-5 * a.abs().max(n.abs()), "{a} vs {n}");
        }
    }

    #[test]
    fn mas_simple_cases() {
        let a = mas(&sim(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(a.tab.counts(), &[1, 1]);
        assert_eq!(a.path, vec![0, 1]);
        let a = mas(&sim(&[&[0.1], &[-3.0], &[2.0]])).unwrap();
        assert_eq!(a.tab.counts(), &[3]);
        assert!(mas(&sim(&[&[1.0, 2.0]])).is_err());
    }

    #[test]
    fn mas_tie_prefers_early_starts() {
        // All-equal scores: every split ties, so runs start as early as possible
        // from the back: the last phoneme absorbs the slack.
        let s = SimilarityMatrix::new(Matrix::filled(5, 3, 1.0)).unwrap();
        let a = mas(&s).unwrap();
        assert_eq!(a.tab.counts(), &[1, 1, 3]);
        assert_eq!(a.path, vec![0, 1, 2, 2, 2]);
    }

    #[test]
    fn upsample_repeats_rows() {
        let f = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let up = upsample(&f, &MappingTable::new(vec![2, 3]).unwrap()).unwrap();
        assert_eq!(up.rows(), 5);
        assert_eq!(up.row(1), &[1.0, 2.0]);
        assert_eq!(up.row(2), &[3.0, 4.0]);
        assert_eq!(up.row(4), &[3.0, 4.0]);
        assert_eq!(upsample(&f, &MappingTable::new(vec![1, 1]).unwrap()).unwrap(), f);
        assert!(upsample(&f, &MappingTable::new(vec![1, 1, 1]).unwrap()).is_err());
        let back = upsample_backward(&up, &MappingTable::new(vec![2, 3]).unwrap()).unwrap();
        assert_eq!(back.row(0), &[2.0, 4.0]);
        assert_eq!(back.row(1), &[9.0, 12.0]);
    }

    #[test]
    fn lip_attention_examples() {
        let z_m = Matrix::from_rows(&[vec![0.2, 0.1], vec![-1.0, 0.4]]).unwrap();
        let one = Matrix::from_rows(&[vec![0.5, -0.25]]).unwrap();
        let c = lip_attention(&z_m, &one, &similarity(&z_m, &one).unwrap()).unwrap();
        assert_eq!(c.row(0), one.row(0));
        assert_eq!(c.row(1), one.row(0));

        let z_p = Matrix::from_rows(&[vec![1.0, 3.0], vec![5.0, -1.0], vec![0.0, 1.0]]).unwrap();
        let flat = sim(&[&[0.4, 0.4, 0.4]]);
        let c = lip_attention(&Matrix::zeros(1, 2), &z_p, &flat).unwrap();
        assert!((c.get(0, 0) - 2.0).abs() < 1e-15 && (c.get(0, 1) - 1.0).abs() < 1e-15);

        // Logits √2·ln2 become ln2 after the 1/√d scaling with d = 2, so the
        // weights are (2/3, 1/3).
        let e = Matrix::identity(2);
        let k = 2f64.sqrt() * 2f64.ln();
        let c = lip_attention(&e, &e, &sim(&[&[k, 0.0], &[0.0, k]])).unwrap();
        assert!((c.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_head_equals_plain_attention() {
        let mut rng = Rng::new(4);
        let z_m = Matrix::from_fn(5, 4, |_, _| rng.normal());
        let z_p = Matrix::from_fn(3, 4, |_, _| rng.normal());
        let plain = lip_attention(&z_m, &z_p, &similarity(&z_m, &z_p).unwrap()).unwrap();
        assert!(lip_attention_heads(&z_m, &z_p, 1).unwrap().bit_eq(&plain));
        assert_eq!(lip_attention_heads(&z_m, &z_p, 2).unwrap().shape(), (5, 4));
        assert!(lip_attention_heads(&z_m, &z_p, 3).is_err());
    }
}
