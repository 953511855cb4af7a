//! Phoneme-level cross-modal transformer and the fusion of lip, phoneme and
//! LLM streams into the mel-level prior `μ`.

pub mod ops;

use serde::{Deserialize, Serialize};

use crate::alignment::{upsample, upsample_backward, MappingTable};
use crate::error::{Error, Result};
use crate::numkernel::{Matrix, Parameterized, Rng};
use ops::{AttentionCache, FeedForwardCache, LayerNormCache};
pub use ops::{FeedForward, LayerNorm, Linear, MultiHeadAttention, LAYER_NORM_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackConfig {
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self {
            d: 16,
            layers: 2,
            heads: 1,
            ffn_dim: 32,
        }
    }
}

impl StackConfig {
    /// Width of the full-size model: d=256, 8 layers, 2 heads.
    pub fn full_dims() -> Self {
        Self {
            d: 256,
            layers: 8,
            heads: 2,
            ffn_dim: 1024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.layers == 0 || self.ffn_dim == 0 {
            return Err(Error::invalid(format!("degenerate stack config {self:?}")));
        }
        if self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return Err(Error::invalid(format!(
                "{} heads do not divide d={}",
                self.heads, self.d
            )));
        }
        Ok(())
    }
}

/// Phoneme ID → embedding lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeEmbedding {
    pub table: Matrix,
}

impl PhonemeEmbedding {
    pub fn init(vocab: usize, d: usize, rng: &mut Rng) -> Self {
        Self {
            table: Matrix::from_fn(vocab, d, |_, _| rng.normal()),
        }
    }

    pub fn vocab(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn embed(&self, ids: &[usize]) -> Result<Matrix> {
        if ids.is_empty() {
            return Err(Error::invalid("phoneme sequence is empty"));
        }
        let mut out = Matrix::zeros(ids.len(), self.dim());
        for (i, &id) in ids.iter().enumerate() {
            if id >= self.vocab() {
                return Err(Error::invalid(format!(
                    "phoneme id {id} outside vocabulary of {}",
                    self.vocab()
                )));
            }
            out.row_mut(i).copy_from_slice(self.table.row(id));
        }
        Ok(out)
    }

    fn backward(&self, ids: &[usize], d_out: &Matrix, grad: &mut PhonemeEmbedding) {
        for (i, &id) in ids.iter().enumerate() {
            for (g, v) in grad.table.row_mut(id).iter_mut().zip(d_out.row(i)) {
                *g += v;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossModalLayer {
    /// Shared by the query stream and the LLM memory.
    pub ln_in: LayerNorm,
    /// Applied to the attention residual `ẑ`.
    pub ln_mid: LayerNorm,
    pub attention: MultiHeadAttention,
    pub ffn: FeedForward,
}

struct LayerCache {
    qn: Matrix,
    qn_cache: LayerNormCache,
    mn: Matrix,
    mn_cache: LayerNormCache,
    attn: AttentionCache,
    hn: Matrix,
    hn_cache: LayerNormCache,
    ffn: FeedForwardCache,
}

impl CrossModalLayer {
    pub fn init(cfg: &StackConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            ln_in: LayerNorm::new(cfg.d),
            ln_mid: LayerNorm::new(cfg.d),
            attention: MultiHeadAttention::init(cfg.d, cfg.heads, rng)?,
            ffn: FeedForward::init(cfg.d, cfg.ffn_dim, rng),
        })
    }

    pub fn dim(&self) -> usize {
        self.ln_in.gamma.len()
    }

    pub fn forward(&self, z_prev: &Matrix, s_llm: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(z_prev, s_llm)?.0)
    }

    /// Attention weights per head for the normalized inputs.
    pub fn attention_weights(&self, z_prev: &Matrix, s_llm: &Matrix) -> Result<Vec<Matrix>> {
        Ok(self.forward_cached(z_prev, s_llm)?.1.attn.weights().to_vec())
    }

    fn forward_cached(&self, z_prev: &Matrix, s_llm: &Matrix) -> Result<(Matrix, LayerCache)> {
        let d = self.dim();
        if z_prev.cols() != d || s_llm.cols() != d {
            return Err(Error::shape(
                "cross_modal_layer",
                format!(
                    "query {:?} and memory {:?} must both have width {d}",
                    z_prev.shape(),
                    s_llm.shape()
                ),
            ));
        }
        if z_prev.rows() == 0 || s_llm.rows() == 0 {
            return Err(Error::shape("cross_modal_layer", "empty query or memory"));
        }
        let (qn, qn_cache) = self.ln_in.forward(z_prev)?;
        let (mn, mn_cache) = self.ln_in.forward(s_llm)?;
        let (a, attn) = self.attention.forward(&qn, &mn)?;
        let z_hat = a.add(&qn)?;
        let (hn, hn_cache) = self.ln_mid.forward(&z_hat)?;
        let (f, ffn) = self.ffn.forward(&hn)?;
        let z = f.add(&hn)?;
        Ok((
            z,
            LayerCache {
                qn,
                qn_cache,
                mn,
                mn_cache,
                attn,
                hn,
                hn_cache,
                ffn,
            },
        ))
    }

    /// Returns `(dz_prev, ds_llm)`.
    fn backward(&self, cache: &LayerCache, dz: &Matrix, grad: &mut CrossModalLayer) -> Result<(Matrix, Matrix)> {
        let mut d_hn = self.ffn.backward(&cache.hn, &cache.ffn, dz, &mut grad.ffn)?;
        d_hn.add_assign(dz)?;
        let d_zhat = self.ln_mid.backward(&cache.hn_cache, &d_hn, &mut grad.ln_mid);
        let (mut d_qn, d_mn) =
            self.attention
                .backward(&cache.qn, &cache.mn, &cache.attn, &d_zhat, &mut grad.attention)?;
        d_qn.add_assign(&d_zhat)?;
        let dz_prev = self.ln_in.backward(&cache.qn_cache, &d_qn, &mut grad.ln_in);
        let ds = self.ln_in.backward(&cache.mn_cache, &d_mn, &mut grad.ln_in);
        Ok((dz_prev, ds))
    }

    fn blocks(&self) -> Vec<&[f64]> {
        let a = &self.attention;
        let mut v: Vec<&[f64]> = vec![
            &self.ln_in.gamma,
            &self.ln_in.beta,
            &self.ln_mid.gamma,
            &self.ln_mid.beta,
        ];
        for lin in [&a.query, &a.key, &a.value, &a.output, &self.ffn.inner, &self.ffn.outer] {
            v.extend(lin.params());
        }
        v
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let a = &mut self.attention;
        let mut v: Vec<&mut [f64]> = vec![
            &mut self.ln_in.gamma,
            &mut self.ln_in.beta,
            &mut self.ln_mid.gamma,
            &mut self.ln_mid.beta,
        ];
        for lin in [
            &mut a.query,
            &mut a.key,
            &mut a.value,
            &mut a.output,
            &mut self.ffn.inner,
            &mut self.ffn.outer,
        ] {
            v.extend(lin.params_mut());
        }
        v
    }
}

/// `D` cross-modal layers applied in sequence, all attending to the same
/// LLM memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossModalStack {
    layers: Vec<CrossModalLayer>,
}

impl CrossModalStack {
    pub fn init(cfg: &StackConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let layers = (0..cfg.layers)
            .map(|_| CrossModalLayer::init(cfg, rng))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<CrossModalLayer>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::invalid("cross-modal stack needs at least one layer"));
        };
        let d = first.dim();
        if layers.iter().any(|l| l.dim() != d) {
            return Err(Error::shape("cross_modal_stack", "layer widths differ"));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[CrossModalLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [CrossModalLayer] {
        &mut self.layers
    }

    pub fn dim(&self) -> usize {
        self.layers[0].dim()
    }

    fn zeroed_like(&self) -> Self {
        let mut g = self.clone();
        for layer in &mut g.layers {
            for b in layer.blocks_mut() {
                b.fill(0.0);
            }
        }
        g
    }

    fn forward_cached(&self, z_p: &Matrix, s_llm: &Matrix) -> Result<(Matrix, Vec<LayerCache>)> {
        let mut z = z_p.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = layer.forward_cached(&z, s_llm)?;
            caches.push(cache);
            z = next;
        }
        Ok((z, caches))
    }

    /// Returns `(grads, dz_p, ds_llm)`.
    pub fn backward(&self, z_p: &Matrix, s_llm: &Matrix, d_out: &Matrix) -> Result<(CrossModalStack, Matrix, Matrix)> {
        let (_, caches) = self.forward_cached(z_p, s_llm)?;
        let mut grads = self.zeroed_like();
        let mut dz = d_out.clone();
        let mut ds = Matrix::zeros(s_llm.rows(), s_llm.cols());
        for ((layer, cache), g) in self.layers.iter().zip(&caches).zip(grads.layers.iter_mut()).rev() {
            let (dz_prev, ds_l) = layer.backward(cache, &dz, g)?;
            ds.add_assign(&ds_l)?;
            dz = dz_prev;
        }
        Ok((grads, dz, ds))
    }
}

impl Parameterized for CrossModalStack {
    fn param_count(&self) -> usize {
        self.layers.iter().flat_map(|l| l.blocks()).map(|b| b.len()).sum()
    }

    fn to_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.blocks()).flatten().copied().collect()
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(
                "cross_modal_stack",
                format!("expected {} parameters, got {}", self.param_count(), flat.len()),
            ));
        }
        let mut rest = flat;
        for layer in &mut self.layers {
            for b in layer.blocks_mut() {
                let (head, tail) = rest.split_at(b.len());
                b.copy_from_slice(head);
                rest = tail;
            }
        }
        Ok(())
    }
}

/// `LLM_p`: the last layer output of the stack with phoneme embeddings as
/// queries and LLM features as memory.
pub fn phoneme_semantic(z_p: &Matrix, s_llm: &Matrix, stack: &CrossModalStack) -> Result<Matrix> {
    Ok(stack.forward_cached(z_p, s_llm)?.0)
}

/// Per-frame linear map from the concatenated `[C_lip ; Up(LLM_p) ; Up(z_p)]`
/// (3d wide) down to `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fusion {
    pub linear: Linear,
}

impl Fusion {
    /// `W = [I; I; I]`, zero bias: the fused frame is the sum of the three
    /// streams.
    pub fn identity(d: usize) -> Self {
        let mut linear = Linear::zeros(3 * d, d);
        for s in 0..3 {
            for k in 0..d {
                linear.weight.set(s * d + k, k, 1.0);
            }
        }
        Self { linear }
    }

    pub fn init(d: usize, rng: &mut Rng) -> Self {
        Self {
            linear: Linear::init(3 * d, d, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.weight.cols()
    }
}

impl Parameterized for Fusion {
    fn param_count(&self) -> usize {
        self.linear.weight.as_slice().len() + self.linear.bias.len()
    }

    fn to_flat(&self) -> Vec<f64> {
        self.linear.params().concat()
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(
                "fusion",
                format!("expected {} parameters, got {}", self.param_count(), flat.len()),
            ));
        }
        let (w, b) = flat.split_at(self.linear.weight.as_slice().len());
        self.linear.weight.as_mut_slice().copy_from_slice(w);
        self.linear.bias.copy_from_slice(b);
        Ok(())
    }
}

/// Repeats every row `n` times.
pub fn repeat_rows(x: &Matrix, n: usize) -> Matrix {
    let mut out = Matrix::zeros(x.rows() * n, x.cols());
    for i in 0..out.rows() {
        out.row_mut(i).copy_from_slice(x.row(i / n));
    }
    out
}

fn repeat_rows_backward(d_out: &Matrix, n: usize) -> Matrix {
    let mut out = Matrix::zeros(d_out.rows() / n, d_out.cols());
    for i in 0..d_out.rows() {
        for (o, v) in out.row_mut(i / n).iter_mut().zip(d_out.row(i)) {
            *o += v;
        }
    }
    out
}

fn fusion_input(c_lip: &Matrix, llm_p: &Matrix, z_p: &Matrix, tab: &MappingTable, n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::invalid("upsampling factor n must be >= 1"));
    }
    let d = c_lip.cols();
    if llm_p.cols() != d || z_p.cols() != d {
        return Err(Error::shape(
            "fuse_condition",
            format!("stream widths {} / {} / {} differ", d, llm_p.cols(), z_p.cols()),
        ));
    }
    if llm_p.rows() != z_p.rows() {
        return Err(Error::shape(
            "fuse_condition",
            format!("LLM_p has {} rows, z_p has {}", llm_p.rows(), z_p.rows()),
        ));
    }
    if tab.total() != c_lip.rows() {
        return Err(Error::shape(
            "fuse_condition",
            format!(
                "mapping table sums to {}, lip stream has {} frames",
                tab.total(),
                c_lip.rows()
            ),
        ));
    }
    Matrix::hcat(&[c_lip, &upsample(llm_p, tab)?, &upsample(z_p, tab)?])
}

/// The mel-level prior `μ`, `n·L_v × d`.
pub fn fuse_condition(
    fusion: &Fusion,
    c_lip: &Matrix,
    llm_p: &Matrix,
    z_p: &Matrix,
    tab: &MappingTable,
    n: usize,
) -> Result<Matrix> {
    let x = fusion_input(c_lip, llm_p, z_p, tab, n)?;
    if x.cols() != fusion.linear.weight.rows() {
        return Err(Error::shape(
            "fuse_condition",
            format!(
                "fusion expects width {}, streams give {}",
                fusion.linear.weight.rows(),
                x.cols()
            ),
        ));
    }
    Ok(repeat_rows(&fusion.linear.forward(&x)?, n))
}

/// Everything between phoneme IDs and `μ` that carries parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningModel {
    pub embedding: PhonemeEmbedding,
    pub stack: CrossModalStack,
    pub fusion: Fusion,
}

/// Inputs to [`ConditioningModel::forward`] that are not parameters.
#[derive(Debug, Clone, Copy)]
pub struct ConditionInputs<'a> {
    pub phoneme_ids: &'a [usize],
    pub s_llm: &'a Matrix,
    pub c_lip: &'a Matrix,
    pub tab: &'a MappingTable,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionOutputs {
    pub z_p: Matrix,
    pub llm_p: Matrix,
    pub mu: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningGrads {
    pub model: ConditioningModel,
    pub s_llm: Matrix,
    pub c_lip: Matrix,
}

impl ConditioningModel {
    pub fn init(vocab: usize, cfg: &StackConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            embedding: PhonemeEmbedding::init(vocab, cfg.d, rng),
            stack: CrossModalStack::init(cfg, rng)?,
            fusion: Fusion::identity(cfg.d),
        })
    }

    pub fn forward(&self, inp: &ConditionInputs<'_>) -> Result<ConditionOutputs> {
        let z_p = self.embedding.embed(inp.phoneme_ids)?;
        let llm_p = phoneme_semantic(&z_p, inp.s_llm, &self.stack)?;
        let mu = fuse_condition(&self.fusion, inp.c_lip, &llm_p, &z_p, inp.tab, inp.n)?;
        Ok(ConditionOutputs { z_p, llm_p, mu })
    }

    /// Backpropagates `dμ` to every parameter and to the non-parameter
    /// inputs `s_llm` and `c_lip`.
    pub fn backward(&self, inp: &ConditionInputs<'_>, d_mu: &Matrix) -> Result<ConditioningGrads> {
        let out = self.forward(inp)?;
        if d_mu.shape() != out.mu.shape() {
            return Err(Error::shape(
                "conditioning_backward",
                format!("dμ {:?} vs μ {:?}", d_mu.shape(), out.mu.shape()),
            ));
        }
        let d = self.fusion.dim();
        let x = fusion_input(inp.c_lip, &out.llm_p, &out.z_p, inp.tab, inp.n)?;
        let d_fused = repeat_rows_backward(d_mu, inp.n);
        let mut fusion_grad = Fusion {
            linear: Linear::zeros(3 * d, d),
        };
        let dx = self.fusion.linear.backward(&x, &d_fused, &mut fusion_grad.linear)?;
        let d_clip = dx.col_slice(0, d);
        let d_llm_p = upsample_backward(&dx.col_slice(d, d), inp.tab)?;
        let mut d_z_p = upsample_backward(&dx.col_slice(2 * d, d), inp.tab)?;
        let (stack_grad, dz_stack, ds_llm) = self.stack.backward(&out.z_p, inp.s_llm, &d_llm_p)?;
        d_z_p.add_assign(&dz_stack)?;
        let mut emb_grad = PhonemeEmbedding {
            table: Matrix::zeros(self.embedding.vocab(), d),
        };
        self.embedding.backward(inp.phoneme_ids, &d_z_p, &mut emb_grad);
        Ok(ConditioningGrads {
            model: ConditioningModel {
                embedding: emb_grad,
                stack: stack_grad,
                fusion: fusion_grad,
            },
            s_llm: ds_llm,
            c_lip: d_clip,
        })
    }
}

impl Parameterized for ConditioningModel {
    fn param_count(&self) -> usize {
        self.embedding.table.as_slice().len() + self.stack.param_count() + self.fusion.param_count()
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut v = self.embedding.table.as_slice().to_vec();
        v.extend(self.stack.to_flat());
        v.extend(self.fusion.to_flat());
        v
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(
                "conditioning_model",
                format!("expected {} parameters, got {}", self.param_count(), flat.len()),
            ));
        }
        let (emb, rest) = flat.split_at(self.embedding.table.as_slice().len());
        let (stack, fusion) = rest.split_at(self.stack.param_count());
        self.embedding.table.as_mut_slice().copy_from_slice(emb);
        self.stack.load_flat(stack)?;
        self.fusion.load_flat(fusion)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> StackConfig {
        StackConfig {
            d: 4,
            layers: 2,
            heads: 2,
            ffn_dim: 6,
        }
    }

    #[test]
    fn shape_contract() {
        let mut rng = Rng::new(1);
        let layer = CrossModalLayer::init(&StackConfig::default(), &mut rng).unwrap();
        let q = Matrix::from_fn(5, 16, |_, _| rng.normal());
        let m = Matrix::from_fn(8, 16, |_, _| rng.normal());
        assert_eq!(layer.forward(&q, &m).unwrap().shape(), (5, 16));
        assert!(layer.forward(&q, &Matrix::zeros(8, 15)).is_err());
    }

    #[test]
    fn single_layer_stack_is_one_layer_call() {
        let mut rng = Rng::new(2);
        let cfg = StackConfig { layers: 1, ..small() };
        let stack = CrossModalStack::init(&cfg, &mut rng).unwrap();
        let q = Matrix::from_fn(3, 4, |_, _| rng.normal());
        let m = Matrix::from_fn(7, 4, |_, _| rng.normal());
        let a = phoneme_semantic(&q, &m, &stack).unwrap();
        let b = stack.layers()[0].forward(&q, &m).unwrap();
        assert!(a.bit_eq(&b));
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = Rng::new(3);
        let model = ConditioningModel::init(5, &small(), &mut rng).unwrap();
        let flat = model.to_flat();
        assert_eq!(flat.len(), model.param_count());
        let mut other = ConditioningModel::init(5, &small(), &mut Rng::new(99)).unwrap();
        other.load_flat(&flat).unwrap();
        assert_eq!(other, model);
        assert!(other.load_flat(&flat[1..]).is_err());
    }

    #[test]
    fn identity_fusion_sums_streams() {
        let c = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let llm = Matrix::from_rows(&[vec![10.0, 10.0], vec![20.0, 20.0]]).unwrap();
        let z = Matrix::from_rows(&[vec![100.0, 0.0], vec![0.0, 100.0]]).unwrap();
        let tab = MappingTable::new(vec![2, 1]).unwrap();
        let mu = fuse_condition(&Fusion::identity(2), &c, &llm, &z, &tab, 2).unwrap();
        assert_eq!(mu.shape(), (6, 2));
        assert_eq!(mu.row(0), &[111.0, 10.0]);
        assert_eq!(mu.row(1), &[111.0, 10.0]);
        assert_eq!(mu.row(2), &[110.0, 11.0]);
        assert_eq!(mu.row(5), &[22.0, 122.0]);
    }

    #[test]
    fn fuse_rejects_mismatched_table() {
        let c = Matrix::zeros(3, 2);
        let s = Matrix::zeros(2, 2);
        let tab = MappingTable::new(vec![2, 2]).unwrap();
        assert!(fuse_condition(&Fusion::identity(2), &c, &s, &s, &tab, 1).is_err());
        let tab = MappingTable::new(vec![2, 1]).unwrap();
        assert!(fuse_condition(&Fusion::identity(2), &c, &s, &s, &tab, 0).is_err());
    }

    #[test]
    fn embedding_rejects_unknown_ids() {
        let emb = PhonemeEmbedding::init(3, 2, &mut Rng::new(0));
        assert!(emb.embed(&[0, 3]).is_err());
        assert!(emb.embed(&[]).is_err());
        assert_eq!(emb.embed(&[2, 2]).unwrap().row(1), emb.table.row(2));
    }
}
