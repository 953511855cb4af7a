//! Synthetic data with known ground truth: Gaussian mixtures for the flow
//! model and dubbing instances with a planted lip/phoneme alignment.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alignment::{upsample, MappingTable};
use crate::conditioning::repeat_rows;
use crate::error::{Error, Result};
use crate::numkernel::tensor_io::{load_matrix, save_matrix};
use crate::numkernel::{Dtype, Matrix, Rng};

pub const MIN_DURATION: usize = 1;
pub const MAX_DURATION: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: Vec<f64>,
    /// Diagonal of the covariance.
    pub variance: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<MixtureComponent>,
}

impl MixtureSpec {
    /// Two well-separated 2-D components with unequal weights.
    pub fn preset_2d() -> Self {
        Self {
            components: vec![
                MixtureComponent {
                    mean: vec![-2.0, 0.0],
                    variance: vec![0.16, 0.16],
                    weight: 0.4,
                },
                MixtureComponent {
                    mean: vec![2.0, 0.0],
                    variance: vec![0.16, 0.16],
                    weight: 0.6,
                },
            ],
        }
    }

    /// A single zero-variance component at `at`.
    pub fn point_mass(at: Vec<f64>) -> Self {
        let d = at.len();
        Self {
            components: vec![MixtureComponent {
                mean: at,
                variance: vec![0.0; d],
                weight: 1.0,
            }],
        }
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// Zero weights and zero variances are allowed; they describe unused
    /// components and point masses.
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::invalid("mixture has no components"));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::invalid("mixture components must have dimension >= 1"));
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.mean.len() != d || c.variance.len() != d {
                return Err(Error::invalid(format!("component {i} does not have dimension {d}")));
            }
            if !c.mean.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(format!("component {i} has a non-finite mean")));
            }
            if !c.variance.iter().all(|v| v.is_finite() && *v >= 0.0) {
                return Err(Error::invalid(format!(
                    "component {i} has a negative or non-finite variance"
                )));
            }
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(Error::invalid(format!(
                    "component {i} has an invalid weight {}",
                    c.weight
                )));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    /// One draw and its component index.
    pub fn draw(&self, rng: &mut Rng) -> (Vec<f64>, usize) {
        let k = rng.categorical(&self.weights());
        let c = &self.components[k];
        let x = c
            .mean
            .iter()
            .zip(&c.variance)
            .map(|(m, v)| m + v.sqrt() * rng.normal())
            .collect();
        (x, k)
    }
}

/// `count` i.i.d. draws, one per row.
pub fn sample_mixture(spec: &MixtureSpec, count: usize, seed: u64) -> Result<Matrix> {
    Ok(sample_mixture_labeled(spec, count, seed)?.0)
}

/// As [`sample_mixture`], also returning the component of each row.
pub fn sample_mixture_labeled(spec: &MixtureSpec, count: usize, seed: u64) -> Result<(Matrix, Vec<usize>)> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    let mut rng = Rng::new(seed);
    let mut data = Vec::with_capacity(count * spec.dim());
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let (x, k) = spec.draw(&mut rng);
        data.extend(x);
        labels.push(k);
    }
    Ok((Matrix::from_vec(count, spec.dim(), data)?, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DubConfig {
    pub phonemes: usize,
    pub d: usize,
    /// Mel frames per lip frame.
    pub n: usize,
    /// Standard deviation of the noise added to lip frames.
    pub noise: f64,
    pub vocab: usize,
    pub mel_bins: usize,
    pub style_dim: usize,
    /// LLM feature rows per phoneme.
    pub llm_per_phoneme: usize,
    pub mel_noise: f64,
}

impl Default for DubConfig {
    fn default() -> Self {
        Self {
            phonemes: 8,
            d: 16,
            n: 4,
            noise: 0.1,
            vocab: 40,
            mel_bins: 20,
            style_dim: 4,
            llm_per_phoneme: 2,
            mel_noise: 0.1,
        }
    }
}

impl DubConfig {
    pub fn full_dims() -> Self {
        Self {
            phonemes: 24,
            d: 256,
            mel_bins: 80,
            vocab: 80,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phonemes == 0 || self.d == 0 || self.n == 0 || self.mel_bins == 0 || self.llm_per_phoneme == 0 {
            return Err(Error::invalid(format!("degenerate instance config {self:?}")));
        }
        if self.vocab < 2 {
            return Err(Error::invalid("vocabulary needs at least 2 phonemes"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite() && self.mel_noise >= 0.0 && self.mel_noise.is_finite()) {
            return Err(Error::invalid("noise levels must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DubInstance {
    pub phoneme_ids: Vec<usize>,
    pub durations: Vec<usize>,
    pub n: usize,
    /// Unit-norm phoneme prototypes, `L_t × d`.
    pub z_p: Matrix,
    /// Lip frames, `L_v × d`.
    pub z_m: Matrix,
    pub s_llm: Matrix,
    pub style: Vec<f64>,
    /// `n·L_v × bins`, log-compressed.
    pub target_mel: Matrix,
}

impl DubInstance {
    pub fn lip_frames(&self) -> usize {
        self.z_m.rows()
    }

    pub fn tab(&self) -> Result<MappingTable> {
        MappingTable::new(self.durations.clone())
    }

    /// Phoneme index of every lip frame under the planted alignment.
    pub fn frame_labels(&self) -> Vec<usize> {
        self.durations
            .iter()
            .enumerate()
            .flat_map(|(p, &c)| std::iter::repeat_n(p, c))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let l_t = self.phoneme_ids.len();
        if l_t == 0 {
            return Err(Error::invalid("instance has no phonemes"));
        }
        if self.durations.len() != l_t {
            return Err(Error::invalid(format!(
                "{} durations for {l_t} phonemes",
                self.durations.len()
            )));
        }
        if self.durations.iter().any(|&c| c < MIN_DURATION) {
            return Err(Error::invalid("every phoneme needs at least one frame"));
        }
        let l_v: usize = self.durations.iter().sum();
        if self.z_m.rows() != l_v {
            return Err(Error::invalid(format!(
                "durations sum to {l_v}, lip stream has {} frames",
                self.z_m.rows()
            )));
        }
        if self.z_p.rows() != l_t {
            return Err(Error::invalid(format!(
                "{} prototypes for {l_t} phonemes",
                self.z_p.rows()
            )));
        }
        let d = self.z_p.cols();
        if self.z_m.cols() != d || self.s_llm.cols() != d {
            return Err(Error::invalid("z_p, z_m and s_llm must share their width"));
        }
        if self.s_llm.rows() == 0 {
            return Err(Error::invalid("LLM stream is empty"));
        }
        if self.n == 0 || self.target_mel.rows() != self.n * l_v {
            return Err(Error::invalid(format!(
                "target mel has {} frames, expected n·L_v = {}·{l_v}",
                self.target_mel.rows(),
                self.n
            )));
        }
        for (name, m) in [
            ("z_p", &self.z_p),
            ("z_m", &self.z_m),
            ("s_llm", &self.s_llm),
            ("target_mel", &self.target_mel),
        ] {
            if !m.is_finite() {
                return Err(Error::invalid(format!("{name} has non-finite entries")));
            }
        }
        if !self.style.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("style vector has non-finite entries"));
        }
        Ok(())
    }
}

fn unit_rows(m: &mut Matrix) {
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Phoneme ID sequence with no immediate repeats, so every phoneme boundary
/// is visible in the lip stream.
fn draw_ids(len: usize, vocab: usize, rng: &mut Rng) -> Vec<usize> {
    let mut ids: Vec<usize> = Vec::with_capacity(len);
    for _ in 0..len {
        let id = match ids.last() {
            None => rng.int_inclusive(0, vocab as u64 - 1) as usize,
            Some(&prev) => {
                let v = rng.int_inclusive(0, vocab as u64 - 2) as usize;
                if v >= prev {
                    v + 1
                } else {
                    v
                }
            }
        };
        ids.push(id);
    }
    ids
}

pub fn make_dub_instance(phonemes: usize, d: usize, n: usize, noise: f64, seed: u64) -> Result<DubInstance> {
    make_dub_instance_with(
        &DubConfig {
            phonemes,
            d,
            n,
            noise,
            ..DubConfig::default()
        },
        seed,
    )
}

pub fn make_dub_instance_with(cfg: &DubConfig, seed: u64) -> Result<DubInstance> {
    cfg.validate()?;
    let mut rng = Rng::new(seed);
    let mut table = Matrix::from_fn(cfg.vocab, cfg.d, |_, _| rng.normal());
    unit_rows(&mut table);

    let phoneme_ids = draw_ids(cfg.phonemes, cfg.vocab, &mut rng);
    let durations: Vec<usize> = (0..cfg.phonemes)
        .map(|_| rng.int_inclusive(MIN_DURATION as u64, MAX_DURATION as u64) as usize)
        .collect();
    let mut z_p = Matrix::zeros(cfg.phonemes, cfg.d);
    for (i, &id) in phoneme_ids.iter().enumerate() {
        z_p.row_mut(i).copy_from_slice(table.row(id));
    }
    let tab = MappingTable::new(durations.clone())?;
    let frames = upsample(&z_p, &tab)?;
    let z_m = frames.zip_map(&Matrix::from_fn(frames.rows(), cfg.d, |_, _| rng.normal()), |p, e| {
        p + cfg.noise * e
    })?;

    let l_s = cfg.phonemes * cfg.llm_per_phoneme;
    let s_llm = Matrix::from_fn(l_s, cfg.d, |r, k| {
        z_p.get(r / cfg.llm_per_phoneme, k) + 0.5 * rng.normal()
    });
    let style = rng.normal_vec(cfg.style_dim);

    let scale = 1.0 / (cfg.d as f64).sqrt();
    let projection = Matrix::from_fn(cfg.d, cfg.mel_bins, |_, _| rng.normal() * scale);
    let mut target_mel = repeat_rows(&frames.matmul(&projection)?, cfg.n);
    // AR(1) along time keeps the noise smooth across neighbouring frames.
    let rho: f64 = 0.8;
    let innovation = (1.0 - rho * rho).sqrt();
    let mut state = vec![0.0; cfg.mel_bins];
    for i in 0..target_mel.rows() {
        for (k, v) in target_mel.row_mut(i).iter_mut().enumerate() {
            state[k] = if i == 0 {
                rng.normal()
            } else {
                rho * state[k] + innovation * rng.normal()
            };
            *v += cfg.mel_noise * state[k];
        }
    }

    let inst = DubInstance {
        phoneme_ids,
        durations,
        n: cfg.n,
        z_p,
        z_m,
        s_llm,
        style,
        target_mel,
    };
    inst.validate()?;
    Ok(inst)
}

/// On-disk form: this JSON plus one FDT1 file per tensor, named relative to
/// the JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub phoneme_ids: Vec<usize>,
    pub durations: Vec<usize>,
    pub n: usize,
    pub style: Vec<f64>,
    pub z_p: String,
    pub z_m: String,
    pub s_llm: String,
    pub target_mel: String,
}

/// Writes `<stem>.json` and `<stem>.<tensor>.fdt` files into `dir`, returning
/// every path written, JSON first.
pub fn save_instance(inst: &DubInstance, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    inst.validate()?;
    let name = |t: &str| format!("{stem}.{t}.fdt");
    let file = InstanceFile {
        phoneme_ids: inst.phoneme_ids.clone(),
        durations: inst.durations.clone(),
        n: inst.n,
        style: inst.style.clone(),
        z_p: name("z_p"),
        z_m: name("z_m"),
        s_llm: name("s_llm"),
        target_mel: name("target_mel"),
    };
    let json_path = dir.join(format!("{stem}.json"));
    let mut written = vec![json_path.clone()];
    for (rel, m) in [
        (&file.z_p, &inst.z_p),
        (&file.z_m, &inst.z_m),
        (&file.s_llm, &inst.s_llm),
        (&file.target_mel, &inst.target_mel),
    ] {
        let p = dir.join(rel);
        save_matrix(&p, m, Dtype::F64)?;
        written.push(p);
    }
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    fs::write(&json_path, text)?;
    Ok(written)
}

pub fn load_instance(json_path: &Path) -> Result<DubInstance> {
    let file: InstanceFile = serde_json::from_str(&fs::read_to_string(json_path)?)?;
    let dir = json_path.parent().unwrap_or(Path::new("."));
    let inst = DubInstance {
        phoneme_ids: file.phoneme_ids,
        durations: file.durations,
        n: file.n,
        style: file.style,
        z_p: load_matrix(dir.join(&file.z_p))?,
        z_m: load_matrix(dir.join(&file.z_m))?,
        s_llm: load_matrix(dir.join(&file.s_llm))?,
        target_mel: load_matrix(dir.join(&file.target_mel))?,
    };
    inst.validate()?;
    Ok(inst)
}
