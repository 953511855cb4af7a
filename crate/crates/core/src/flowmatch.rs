//! Optimal-transport conditional flow matching.
//!
//! The probability path is the straight line
//! `φ_t = (1 - (1 - σ_min) t) x0 + t M` from Gaussian noise `x0` to a data
//! point `M`, whose time derivative is the constant field
//! `u = M - (1 - σ_min) x0`. A network `v(x_t, t, μ)` is regressed onto `u`
//! and sampling integrates `v` from `t = 0` to `t = 1` with forward Euler.
//!
//! States are matrices whose rows are independent samples (mel frames, or
//! points of a toy distribution); the condition matrix supplies one row per
//! state row and may have zero columns for unconditional fields.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{adam_step, AdamConfig, AdamState, Matrix, Mlp, Parameterized, Rng};

pub const DEFAULT_SIGMA_MIN: f64 = 1e-4;
pub const DEFAULT_EULER_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtCfmConfig {
    pub sigma_min: f64,
    pub n_euler_steps: usize,
}

impl Default for OtCfmConfig {
    fn default() -> Self {
        Self {
            sigma_min: DEFAULT_SIGMA_MIN,
            n_euler_steps: DEFAULT_EULER_STEPS,
        }
    }
}

impl OtCfmConfig {
    pub fn validate(&self) -> Result<()> {
        check_sigma(self.sigma_min)?;
        if self.n_euler_steps == 0 {
            return Err(Error::invalid("n_euler_steps must be at least 1"));
        }
        Ok(())
    }
}

fn check_sigma(sigma_min: f64) -> Result<()> {
    if (0.0..1.0).contains(&sigma_min) {
        Ok(())
    } else {
        Err(Error::invalid(format!("sigma_min must lie in [0, 1), got {sigma_min}")))
    }
}

/// Point on the conditional path at time `t`.
pub fn ot_flow_point(x0: &Matrix, target: &Matrix, t: f64, sigma_min: f64) -> Result<Matrix> {
    x0.ensure_same_shape(target, "ot_flow_point")?;
    check_sigma(sigma_min)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("t must lie in [0, 1], got {t}")));
    }
    let a = 1.0 - (1.0 - sigma_min) * t;
    x0.zip_map(target, |x, m| a * x + t * m)
}

/// Target field `M - (1 - σ_min) x0`; constant along the path.
pub fn ot_target_field(x0: &Matrix, target: &Matrix, sigma_min: f64) -> Result<Matrix> {
    x0.ensure_same_shape(target, "ot_target_field")?;
    check_sigma(sigma_min)?;
    x0.zip_map(target, |x, m| m - (1.0 - sigma_min) * x)
}

/// A time-dependent, row-wise conditioned vector field.
pub trait VectorField {
    fn eval(&self, x: &Matrix, t: f64, cond: &Matrix) -> Result<Matrix>;
}

impl<F> VectorField for F
where
    F: Fn(&Matrix, f64, &Matrix) -> Matrix,
{
    fn eval(&self, x: &Matrix, t: f64, cond: &Matrix) -> Result<Matrix> {
        Ok(self(x, t, cond))
    }
}

/// `v(x, t, μ)` as an MLP over the concatenation `[x ; t ; μ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldNet {
    mlp: Mlp,
    x_dim: usize,
    cond_dim: usize,
}

impl VectorFieldNet {
    /// `hidden` lists the tanh layer widths between input and output.
    pub fn new(x_dim: usize, cond_dim: usize, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        let sizes: Vec<usize> = std::iter::once(x_dim + 1 + cond_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(x_dim))
            .collect();
        Self::from_mlp(Mlp::init(&sizes, rng)?, x_dim, cond_dim)
    }

    pub fn from_mlp(mlp: Mlp, x_dim: usize, cond_dim: usize) -> Result<Self> {
        if x_dim == 0 {
            return Err(Error::invalid("state dimension must be positive"));
        }
        if mlp.input_dim() != x_dim + 1 + cond_dim || mlp.output_dim() != x_dim {
            return Err(Error::shape(
                "VectorFieldNet",
                format!(
                    "MLP maps {} -> {}, field needs {} -> {x_dim}",
                    mlp.input_dim(),
                    mlp.output_dim(),
                    x_dim + 1 + cond_dim
                ),
            ));
        }
        Ok(Self { mlp, x_dim, cond_dim })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    fn input(&self, x: &[f64], t: f64, cond: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.x_dim + 1 + self.cond_dim);
        v.extend_from_slice(x);
        v.push(t);
        v.extend_from_slice(cond);
        v
    }

    fn check_row(&self, x: &[f64], cond: &[f64]) -> Result<()> {
        if x.len() != self.x_dim || cond.len() != self.cond_dim {
            return Err(Error::shape(
                "VectorFieldNet",
                format!(
                    "state {} / cond {} vs expected {} / {}",
                    x.len(),
                    cond.len(),
                    self.x_dim,
                    self.cond_dim
                ),
            ));
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64], t: f64, cond: &[f64]) -> Result<Vec<f64>> {
        self.check_row(x, cond)?;
        self.mlp.forward(&self.input(x, t, cond))
    }
}

impl VectorField for VectorFieldNet {
    fn eval(&self, x: &Matrix, t: f64, cond: &Matrix) -> Result<Matrix> {
        let cond_rows_ok = cond.rows() == x.rows() || (self.cond_dim == 0 && cond.cols() == 0);
        if !cond_rows_ok || x.cols() != self.x_dim || cond.cols() != self.cond_dim {
            return Err(Error::shape(
                "VectorFieldNet::eval",
                format!(
                    "state {}x{}, cond {}x{}, net expects state width {} and cond width {}",
                    x.rows(),
                    x.cols(),
                    cond.rows(),
                    cond.cols(),
                    self.x_dim,
                    self.cond_dim
                ),
            ));
        }
        let mut out = Matrix::zeros(x.rows(), self.x_dim);
        for i in 0..x.rows() {
            let c: &[f64] = if self.cond_dim == 0 { &[] } else { cond.row(i) };
            let v = self.mlp.forward(&self.input(x.row(i), t, c))?;
            out.row_mut(i).copy_from_slice(&v);
        }
        Ok(out)
    }
}

/// One regression example: noise, data point, time and condition row.
#[derive(Debug, Clone, PartialEq)]
pub struct CfmSample {
    pub x0: Vec<f64>,
    pub target: Vec<f64>,
    pub t: f64,
    pub cond: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CfmLoss {
    pub loss: f64,
    pub grads: Mlp,
}

/// Mean over the batch of `‖v(φ_t, t, μ) - u‖²` and its parameter gradient.
///
/// Per-sample work runs in parallel; the reduction is a fixed pairwise tree,
/// so the result does not depend on the thread count.
pub fn cfm_loss(net: &VectorFieldNet, batch: &[CfmSample], sigma_min: f64) -> Result<CfmLoss> {
    if batch.is_empty() {
        return Err(Error::invalid("cfm_loss needs a non-empty batch"));
    }
    check_sigma(sigma_min)?;
    let scale = 1.0 / batch.len() as f64;
    let per_sample: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|s| sample_loss(net, s, sigma_min, scale))
        .collect::<Result<_>>()?;
    let losses: Vec<f64> = per_sample.iter().map(|(l, _)| *l).collect();
    let loss = crate::numkernel::pairwise_sum(&losses) * scale;
    let flat = pairwise_sum_vecs(per_sample.into_iter().map(|(_, g)| g).collect());
    let mut grads = net.mlp.zeroed_like();
    grads.load_flat(&flat)?;
    Ok(CfmLoss { loss, grads })
}

fn sample_loss(net: &VectorFieldNet, s: &CfmSample, sigma_min: f64, scale: f64) -> Result<(f64, Vec<f64>)> {
    if s.x0.len() != net.x_dim || s.target.len() != net.x_dim {
        return Err(Error::shape(
            "cfm_loss",
            format!(
                "x0 {} / target {} vs state width {}",
                s.x0.len(),
                s.target.len(),
                net.x_dim
            ),
        ));
    }
    net.check_row(&s.x0, &s.cond)?;
    if !(0.0..=1.0).contains(&s.t) {
        return Err(Error::invalid(format!("t must lie in [0, 1], got {}", s.t)));
    }
    let a = 1.0 - (1.0 - sigma_min) * s.t;
    let xt: Vec<f64> = s.x0.iter().zip(&s.target).map(|(x, m)| a * x + s.t * m).collect();
    let u: Vec<f64> =
        s.x0.iter()
            .zip(&s.target)
            .map(|(x, m)| m - (1.0 - sigma_min) * x)
            .collect();
    let input = net.input(&xt, s.t, &s.cond);
    let pred = net.mlp.forward(&input)?;
    let resid: Vec<f64> = pred.iter().zip(&u).map(|(p, u)| p - u).collect();
    let loss: f64 = resid.iter().map(|r| r * r).sum();
    let upstream: Vec<f64> = resid.iter().map(|r| 2.0 * r * scale).collect();
    let (g, _) = net.mlp.backward(&input, &upstream)?;
    Ok((loss, g.to_flat()))
}

fn pairwise_sum_vecs(mut vs: Vec<Vec<f64>>) -> Vec<f64> {
    while vs.len() > 1 {
        let mut next = Vec::with_capacity(vs.len().div_ceil(2));
        let mut it = vs.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        vs = next;
    }
    vs.pop().unwrap_or_default()
}

/// A training pair: data point `M` with its condition row. When `uncond` is
/// present the trainer may swap it in for `cond` (condition dropout).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowExample {
    pub target: Vec<f64>,
    pub cond: Vec<f64>,
    pub uncond: Option<Vec<f64>>,
}

/// Source of training pairs; draws must be a deterministic function of `rng`.
pub trait ExampleSource {
    fn draw(&self, rng: &mut Rng) -> FlowExample;
}

impl<F> ExampleSource for F
where
    F: Fn(&mut Rng) -> FlowExample,
{
    fn draw(&self, rng: &mut Rng) -> FlowExample {
        self(rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub sigma_min: f64,
    /// Probability of replacing a sample's condition with its unconditional
    /// counterpart.
    pub cond_drop_prob: f64,
    pub schedule: LrSchedule,
}

/// Learning-rate schedule over the training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from the base rate down to `base * floor` at the last step.
    Cosine { floor: f64 },
}

impl LrSchedule {
    pub fn factor(&self, step: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine { floor } => {
                let progress = if total <= 1 {
                    0.0
                } else {
                    step as f64 / (total - 1) as f64
                };
                floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 64,
            adam: AdamConfig::default(),
            sigma_min: DEFAULT_SIGMA_MIN,
            cond_drop_prob: 0.1,
            schedule: LrSchedule::Constant,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("training needs at least one step"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.cond_drop_prob) {
            return Err(Error::invalid("cond_drop_prob must lie in [0, 1]"));
        }
        check_sigma(self.sigma_min)?;
        self.adam.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: VectorFieldNet,
    /// Batch loss at each step, measured before that step's update.
    pub losses: Vec<f64>,
}

/// Minimizes the CFM objective with `t ~ U[0, 1]` and `x0 ~ N(0, I)`.
pub fn train_flow(
    mut net: VectorFieldNet,
    source: &dyn ExampleSource,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = Rng::new(seed);
    let mut state = AdamState::new(net.mlp.param_count());
    let mut params = net.mlp.to_flat();
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch: Vec<CfmSample> = (0..cfg.batch_size)
            .map(|_| {
                let ex = source.draw(&mut rng);
                let drop = rng.uniform() < cfg.cond_drop_prob;
                let cond = match (drop, ex.uncond) {
                    (true, Some(u)) => u,
                    _ => ex.cond,
                };
                let x0 = rng.normal_vec(ex.target.len());
                let t = rng.uniform();
                CfmSample {
                    x0,
                    target: ex.target,
                    t,
                    cond,
                }
            })
            .collect();
        let CfmLoss { loss, grads } = cfm_loss(&net, &batch, cfg.sigma_min).map_err(|e| at_step(e, step))?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: "train_flow loss",
                step: Some(step),
            });
        }
        losses.push(loss);
        let adam = AdamConfig {
            lr: cfg.adam.lr * cfg.schedule.factor(step, cfg.steps),
            ..cfg.adam
        };
        adam_step(&mut params, &grads.to_flat(), &mut state, &adam).map_err(|e| at_step(e, step))?;
        net.mlp.load_flat(&params)?;
    }
    Ok(TrainOutcome { net, losses })
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::NonFinite { context, .. } => Error::NonFinite {
            context,
            step: Some(step),
        },
        other => other,
    }
}

/// Ordered `(t, x_t)` states visited by the sampler, from `t = 0` to `t = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSamplePath {
    pub points: Vec<(f64, Matrix)>,
}

impl FlowSamplePath {
    pub fn final_state(&self) -> &Matrix {
        &self.points.last().expect("path always holds x0").1
    }
}

/// Fixed-step forward Euler from `t = 0` to `t = 1`:
/// `x_{k+1} = x_k + v(x_k, k/n, μ) / n`.
pub fn euler_sample(
    field: &dyn VectorField,
    cond: &Matrix,
    x0: &Matrix,
    n_steps: usize,
) -> Result<(Matrix, FlowSamplePath)> {
    euler_integrate(x0, n_steps, |x, t| field.eval(x, t, cond))
}

pub(crate) fn euler_integrate(
    x0: &Matrix,
    n_steps: usize,
    mut velocity: impl FnMut(&Matrix, f64) -> Result<Matrix>,
) -> Result<(Matrix, FlowSamplePath)> {
    if n_steps == 0 {
        return Err(Error::invalid("n_steps must be at least 1"));
    }
    x0.ensure_finite("euler_sample x0")?;
    let dt = 1.0 / n_steps as f64;
    let mut x = x0.clone();
    let mut points = Vec::with_capacity(n_steps + 1);
    points.push((0.0, x.clone()));
    for k in 0..n_steps {
        let t = k as f64 / n_steps as f64;
        let v = velocity(&x, t).map_err(|e| at_step(e, k))?;
        x.ensure_same_shape(&v, "euler_sample field output")?;
        for (xi, vi) in x.as_mut_slice().iter_mut().zip(v.as_slice()) {
            *xi += dt * vi;
        }
        if !x.is_finite() {
            return Err(Error::NonFinite {
                context: "euler_sample state",
                step: Some(k),
            });
        }
        points.push(((k + 1) as f64 / n_steps as f64, x.clone()));
    }
    Ok((x, FlowSamplePath { points }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{finite_diff_grad, Dense};

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn flow_point_endpoints_and_midpoint() {
        let x0 = m(&[&[1.0, 0.0]]);
        let target = m(&[&[0.0, 1.0]]);
        assert!(ot_flow_point(&x0, &target, 0.0, 0.3).unwrap().bit_eq(&x0));
        assert!(ot_flow_point(&x0, &target, 1.0, 0.0).unwrap().bit_eq(&target));
        let sig = ot_flow_point(&x0, &target, 1.0, 0.25).unwrap();
        assert_eq!(sig.as_slice(), &[0.25, 1.0]);
        assert_eq!(ot_flow_point(&x0, &target, 0.5, 0.0).unwrap().as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn flow_point_rejects_bad_inputs() {
        let a = m(&[&[1.0]]);
        let b = m(&[&[1.0, 2.0]]);
        assert!(ot_flow_point(&a, &b, 0.5, 0.0).is_err());
        assert!(ot_flow_point(&a, &a, 1.5, 0.0).is_err());
        assert!(ot_flow_point(&a, &a, 0.5, 1.0).is_err());
        assert!(ot_target_field(&a, &b, 0.0).is_err());
    }

    #[test]
    fn target_field_examples() {
        let x0 = m(&[&[1.0, 0.0]]);
        let target = m(&[&[0.0, 1.0]]);
        assert_eq!(ot_target_field(&x0, &target, 0.0).unwrap().as_slice(), &[-1.0, 1.0]);
        assert_eq!(ot_target_field(&target, &target, 0.0).unwrap().as_slice(), &[0.0, 0.0]);
        let u = ot_target_field(&m(&[&[2.0]]), &m(&[&[1.0]]), 0.1).unwrap();
        assert!((u.get(0, 0) + 0.8).abs() < 1e-15);
    }

    fn zero_net(x_dim: usize, cond_dim: usize) -> VectorFieldNet {
        VectorFieldNet::from_mlp(Mlp::zeros(&[x_dim + 1 + cond_dim, 4, x_dim]).unwrap(), x_dim, cond_dim).unwrap()
    }

    #[test]
    fn zero_net_loss_is_squared_norm_of_field() {
        // x0 = 0 and σ_min = 0 make u = M = [1, 1].
        let s = CfmSample {
            x0: vec![0.0, 0.0],
            target: vec![1.0, 1.0],
            t: 0.3,
            cond: vec![],
        };
        let l = cfm_loss(&zero_net(2, 0), &[s], 0.0).unwrap();
        assert_eq!(l.loss, 2.0);
    }

    #[test]
    fn perfect_net_has_zero_loss() {
        // With σ_min = 0 and a cond row carrying u, v = cond reproduces u exactly.
        // Single linear layer: v = [0 0 | 0 | I] [x; t; μ].
        let weight = Matrix::from_fn(2, 5, |i, j| if j == 3 + i { 1.0 } else { 0.0 });
        let net = VectorFieldNet::from_mlp(
            Mlp::new(vec![Dense {
                weight,
                bias: vec![0.0; 2],
            }])
            .unwrap(),
            2,
            2,
        )
        .unwrap();
        let mut rng = Rng::new(5);
        let batch: Vec<CfmSample> = (0..8)
            .map(|_| {
                let x0 = rng.normal_vec(2);
                let target = rng.normal_vec(2);
                let cond = x0.iter().zip(&target).map(|(x, m)| m - x).collect();
                CfmSample {
                    x0,
                    target,
                    t: rng.uniform(),
                    cond,
                }
            })
            .collect();
        let l = cfm_loss(&net, &batch, 0.0).unwrap();
        assert!(l.loss < 1e-28, "{}", l.loss);
        assert!(cfm_loss(&net, &[], 0.0).is_err());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = Rng::new(9);
        let net = VectorFieldNet::new(2, 1, &[5], &mut rng).unwrap();
        let batch: Vec<CfmSample> = (0..4)
            .map(|_| CfmSample {
                x0: rng.normal_vec(2),
                target: rng.normal_vec(2),
                t: rng.uniform(),
                cond: rng.normal_vec(1),
            })
            .collect();
        let analytic = cfm_loss(&net, &batch, 1e-4).unwrap().grads;
        let fd = finite_diff_grad(
            |p: &Mlp| {
                let n = VectorFieldNet::from_mlp(p.clone(), 2, 1).unwrap();
                cfm_loss(&n, &batch, 1e-4).unwrap().loss
            },
            net.mlp(),
            1e-6,
        )
        .unwrap();
        for (a, n) in analytic.to_flat().iter().zip(fd.to_flat()) {
            assert!((a - n).abs() <= 1e-8 + 1e-5 * a.abs().max(n.abs()), "{a} vs {n}");
        }
    }

    #[test]
    fn training_rejects_zero_steps_and_is_deterministic() {
        let net = VectorFieldNet::new(1, 0, &[8], &mut Rng::new(1)).unwrap();
        let source = |_: &mut Rng| FlowExample {
            target: vec![2.0],
            cond: vec![],
            uncond: None,
        };
        let cfg = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        assert!(train_flow(net.clone(), &source, &cfg, 3).is_err());
        let cfg = TrainConfig {
            steps: 20,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let a = train_flow(net.clone(), &source, &cfg, 3).unwrap();
        let b = train_flow(net, &source, &cfg, 3).unwrap();
        assert_eq!(a.losses.len(), 20);
        assert!(a.losses.iter().zip(&b.losses).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.net, b.net);
    }

    #[test]
    fn euler_is_exact_on_constant_field() {
        let x0 = m(&[&[0.3, -1.2], &[2.0, 0.5]]);
        let target = m(&[&[1.0, 2.0], &[-1.0, 0.25]]);
        let u = ot_target_field(&x0, &target, 0.0).unwrap();
        let field = move |_: &Matrix, _: f64, _: &Matrix| u.clone();
        let empty = Matrix::zeros(2, 0);
        for n in [1, 2, 3, 7, 10, 64] {
            let (out, path) = euler_sample(&field, &empty, &x0, n).unwrap();
            assert!(out.max_abs_diff(&target).unwrap() < 1e-14, "n = {n}");
            assert_eq!(path.points.len(), n + 1);
            assert_eq!(path.points[0].0, 0.0);
            assert_eq!(path.points[n].0, 1.0);
            assert!(path.points.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }

    #[test]
    fn euler_zero_field_and_decay_field() {
        let x0 = m(&[&[1.0]]);
        let empty = Matrix::zeros(1, 0);
        let zero = |x: &Matrix, _: f64, _: &Matrix| Matrix::zeros(x.rows(), x.cols());
        assert!(euler_sample(&zero, &empty, &x0, 5).unwrap().0.bit_eq(&x0));
        let decay = |x: &Matrix, _: f64, _: &Matrix| x.scale(-1.0);
        let (out, _) = euler_sample(&decay, &empty, &x0, 2).unwrap();
        assert_eq!(out.get(0, 0), 0.25);
        assert!(euler_sample(&decay, &empty, &x0, 0).is_err());
    }

    #[test]
    fn euler_reports_blow_up_step() {
        let x0 = m(&[&[1.0]]);
        let empty = Matrix::zeros(1, 0);
        let explode = |x: &Matrix, _: f64, _: &Matrix| x.scale(1e300);
        match euler_sample(&explode, &empty, &x0, 4) {
            Err(Error::NonFinite { step: Some(s), .. }) => assert_eq!(s, 1),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn net_field_checks_condition_shape() {
        let net = zero_net(2, 3);
        let x = Matrix::zeros(4, 2);
        assert!(net.eval(&x, 0.5, &Matrix::zeros(4, 3)).is_ok());
        assert!(net.eval(&x, 0.5, &Matrix::zeros(3, 3)).is_err());
        assert!(net.eval(&x, 0.5, &Matrix::zeros(4, 2)).is_err());
    }
}
