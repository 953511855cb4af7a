//! Style-affine conditioning and classifier-free guidance over a
//! conditional stream `μ` and an unconditional stream `μ′` whose LLM part
//! is zeroed.

use serde::{Deserialize, Serialize};

use crate::alignment::MappingTable;
use crate::conditioning::{fuse_condition, Fusion, Linear};
use crate::error::{Error, Result};
use crate::flowmatch::{euler_integrate, FlowSamplePath, VectorField};
use crate::numkernel::Matrix;

/// The alpha values swept by default: 0.0 to 0.8 in steps of 0.2.
pub const DEFAULT_ALPHA_SWEEP: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];

/// Per-feature `γ2 ⊙ (γ1 ⊙ μ + β1) + β2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleAffine {
    pub gamma1: Vec<f64>,
    pub beta1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub beta2: Vec<f64>,
}

// Adding +0.0 would turn -0.0 into +0.0, so zero shifts are skipped to keep
// the neutral transform a bitwise fixed point.
fn shift(v: f64, b: f64) -> f64 {
    if b == 0.0 {
        v
    } else {
        v + b
    }
}

impl StyleAffine {
    pub fn identity(d: usize) -> Self {
        Self {
            gamma1: vec![1.0; d],
            beta1: vec![0.0; d],
            gamma2: vec![1.0; d],
            beta2: vec![0.0; d],
        }
    }

    pub fn new(gamma1: Vec<f64>, beta1: Vec<f64>, gamma2: Vec<f64>, beta2: Vec<f64>) -> Result<Self> {
        let d = gamma1.len();
        if beta1.len() != d || gamma2.len() != d || beta2.len() != d {
            return Err(Error::shape(
                "style_affine",
                format!(
                    "coefficient lengths {d}/{}/{}/{}",
                    beta1.len(),
                    gamma2.len(),
                    beta2.len()
                ),
            ));
        }
        let s = Self {
            gamma1,
            beta1,
            gamma2,
            beta2,
        };
        if !s.coefficients().all(f64::is_finite) {
            return Err(Error::invalid("style coefficients must be finite"));
        }
        Ok(s)
    }

    fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        self.gamma1
            .iter()
            .chain(&self.beta1)
            .chain(&self.gamma2)
            .chain(&self.beta2)
            .copied()
    }

    pub fn dim(&self) -> usize {
        self.gamma1.len()
    }

    pub fn apply(&self, mu: &Matrix) -> Result<Matrix> {
        if mu.cols() != self.dim() {
            return Err(Error::shape(
                "satl_transform",
                format!("style width {} vs feature width {}", self.dim(), mu.cols()),
            ));
        }
        let mut out = mu.clone();
        for i in 0..out.rows() {
            for (k, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = shift(
                    self.gamma2[k] * shift(self.gamma1[k] * *v, self.beta1[k]),
                    self.beta2[k],
                );
            }
        }
        Ok(out)
    }

    /// The single-stage map `x ↦ a ⊙ x + b` equal to this transform.
    pub fn fused(&self) -> (Vec<f64>, Vec<f64>) {
        let a = self.gamma2.iter().zip(&self.gamma1).map(|(g2, g1)| g2 * g1).collect();
        let b = (0..self.dim())
            .map(|k| self.gamma2[k] * self.beta1[k] + self.beta2[k])
            .collect();
        (a, b)
    }

    /// `self` applied after `inner`, as one transform.
    pub fn compose(&self, inner: &StyleAffine) -> Result<StyleAffine> {
        if inner.dim() != self.dim() {
            return Err(Error::shape(
                "style_compose",
                format!("widths {} and {}", self.dim(), inner.dim()),
            ));
        }
        let (ai, bi) = inner.fused();
        let (ao, bo) = self.fused();
        let d = self.dim();
        StyleAffine::new(
            (0..d).map(|k| ao[k] * ai[k]).collect(),
            (0..d).map(|k| ao[k] * bi[k] + bo[k]).collect(),
            vec![1.0; d],
            vec![0.0; d],
        )
    }
}

/// `satl_transform`: applies `style` to every frame of `mu`.
pub fn satl_transform(mu: &Matrix, style: &StyleAffine) -> Result<Matrix> {
    style.apply(mu)
}

/// Linear map from a per-instance style vector to the four coefficient
/// vectors, laid out `[γ1 | β1 | γ2 | β2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleHead {
    pub linear: Linear,
}

impl StyleHead {
    /// Zero weights, bias encoding the neutral transform.
    pub fn identity(style_dim: usize, d: usize) -> Self {
        let mut linear = Linear::zeros(style_dim, 4 * d);
        for k in 0..d {
            linear.bias[k] = 1.0;
            linear.bias[2 * d + k] = 1.0;
        }
        Self { linear }
    }

    pub fn dim(&self) -> usize {
        self.linear.bias.len() / 4
    }

    pub fn style_dim(&self) -> usize {
        self.linear.weight.rows()
    }

    pub fn affine(&self, style: &[f64]) -> Result<StyleAffine> {
        if style.len() != self.style_dim() {
            return Err(Error::shape(
                "style_head",
                format!(
                    "style vector of length {} vs head input {}",
                    style.len(),
                    self.style_dim()
                ),
            ));
        }
        let out = self.linear.forward(&Matrix::row_vector(style)?)?;
        let d = self.dim();
        let c = out.row(0);
        StyleAffine::new(
            c[..d].to_vec(),
            c[d..2 * d].to_vec(),
            c[2 * d..3 * d].to_vec(),
            c[3 * d..].to_vec(),
        )
    }
}

/// `μ′`: the fused condition with the LLM stream replaced by zeros.
pub fn build_unconditional(
    fusion: &Fusion,
    c_lip: &Matrix,
    z_p: &Matrix,
    tab: &MappingTable,
    n: usize,
) -> Result<Matrix> {
    let phi = Matrix::zeros(z_p.rows(), z_p.cols());
    fuse_condition(fusion, c_lip, &phi, z_p, tab, n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionBundle {
    pub mu_satl: Matrix,
    pub mu_prime: Matrix,
    pub alpha: f64,
}

impl ConditionBundle {
    pub fn new(mu_satl: Matrix, mu_prime: Matrix, alpha: f64) -> Result<Self> {
        mu_satl.ensure_same_shape(&mu_prime, "condition bundle")?;
        check_alpha(alpha)?;
        Ok(Self {
            mu_satl,
            mu_prime,
            alpha,
        })
    }

    /// Fuses both streams and applies `style` to each.
    #[allow(clippy::too_many_arguments)]
    pub fn from_streams(
        fusion: &Fusion,
        style: &StyleAffine,
        c_lip: &Matrix,
        llm_p: &Matrix,
        z_p: &Matrix,
        tab: &MappingTable,
        n: usize,
        alpha: f64,
    ) -> Result<Self> {
        let mu = fuse_condition(fusion, c_lip, llm_p, z_p, tab, n)?;
        let mu_prime = build_unconditional(fusion, c_lip, z_p, tab, n)?;
        Self::new(style.apply(&mu)?, style.apply(&mu_prime)?, alpha)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha, ..self.clone() })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!(
            "guidance scale must be finite and >= 0, got {alpha}"
        )));
    }
    Ok(())
}

/// `v_cond + α (v_cond − v_uncond)`. At `α = 0` this is `v_cond` itself.
pub fn cfg_field(v_cond: &Matrix, v_uncond: &Matrix, alpha: f64) -> Result<Matrix> {
    v_cond.ensure_same_shape(v_uncond, "cfg_field")?;
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Ok(v_cond.clone());
    }
    v_cond.zip_map(v_uncond, |c, u| c + alpha * (c - u))
}

/// Euler sampling with guidance applied at every step. The unconditional
/// stream is only evaluated when `α > 0`.
pub fn guided_euler_sample(
    field: &dyn VectorField,
    bundle: &ConditionBundle,
    x0: &Matrix,
    n_steps: usize,
) -> Result<(Matrix, FlowSamplePath)> {
    check_alpha(bundle.alpha)?;
    euler_integrate(x0, n_steps, |x, t| {
        let v_cond = field.eval(x, t, &bundle.mu_satl)?;
        if bundle.alpha == 0.0 {
            return Ok(v_cond);
        }
        let v_uncond = field.eval(x, t, &bundle.mu_prime)?;
        cfg_field(&v_cond, &v_uncond, bundle.alpha)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluated_affine() {
        let s = StyleAffine::new(vec![2.0, 2.0], vec![1.0, 1.0], vec![3.0, 3.0], vec![-1.0, -1.0]).unwrap();
        let out = s.apply(&Matrix::row_vector(&[1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(out.as_slice(), &[8.0, 14.0]);
    }

    #[test]
    fn identity_is_bitwise_fixed_point() {
        let mu = Matrix::from_rows(&[vec![-0.0, 1e-310, f64::MAX], vec![-3.5, 0.1, 7.0]]).unwrap();
        let out = StyleAffine::identity(3).apply(&mu).unwrap();
        assert!(out.bit_eq(&mu));
    }

    #[test]
    fn rejects_bad_coefficients() {
        assert!(StyleAffine::new(vec![1.0], vec![], vec![1.0], vec![0.0]).is_err());
        assert!(StyleAffine::new(vec![f64::NAN], vec![0.0], vec![1.0], vec![0.0]).is_err());
        let s = StyleAffine::identity(2);
        assert!(s.apply(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn untrained_head_is_neutral() {
        let head = StyleHead::identity(3, 4);
        assert_eq!(head.affine(&[0.3, -2.0, 9.0]).unwrap(), StyleAffine::identity(4));
        assert!(head.affine(&[1.0]).is_err());
    }

    #[test]
    fn cfg_hand_arithmetic() {
        let c = Matrix::row_vector(&[2.0]).unwrap();
        let u = Matrix::row_vector(&[1.0]).unwrap();
        assert_eq!(cfg_field(&c, &u, 0.5).unwrap().as_slice(), &[2.5]);
        assert!(cfg_field(&c, &u, 0.0).unwrap().bit_eq(&c));
        assert!(cfg_field(&c, &c, 0.8).unwrap().bit_eq(&c));
        assert!(cfg_field(&c, &u, -0.1).is_err());
        assert!(cfg_field(&c, &Matrix::zeros(1, 2), 0.1).is_err());
    }
}
