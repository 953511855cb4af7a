use crate::error::{Error, Result};

/// A parameter container that can be viewed as one flat vector.
///
/// The flat order is fixed per type and is what the optimizer, the
/// finite-difference oracle and the FDT1 serializer all operate on.
pub trait Parameterized: Clone {
    fn param_count(&self) -> usize;
    fn to_flat(&self) -> Vec<f64>;
    fn load_flat(&mut self, flat: &[f64]) -> Result<()>;
}

/// Central differences `(f(x + eps·e_k) - f(x - eps·e_k)) / (2 eps)` over a
/// flat vector.
pub fn finite_diff_flat(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("finite-difference eps must be > 0, got {eps}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let orig = probe[k];
        probe[k] = orig + eps;
        let plus = f(&probe);
        probe[k] = orig - eps;
        let minus = f(&probe);
        probe[k] = orig;
        let g = (plus - minus) / (2.0 * eps);
        if !g.is_finite() {
            return Err(Error::NonFinite {
                context: "finite_diff_grad",
                step: Some(k),
            });
        }
        grad.push(g);
    }
    Ok(grad)
}

/// Finite-difference gradient of `loss` with respect to every parameter of
/// `params`, returned in the same layout.
pub fn finite_diff_grad<P: Parameterized>(loss: impl Fn(&P) -> f64, params: &P, eps: f64) -> Result<P> {
    let grad = finite_diff_flat(
        |x| {
            let mut probe = params.clone();
            probe.load_flat(x).expect("probe has the caller's layout");
            loss(&probe)
        },
        &params.to_flat(),
        eps,
    )?;
    let mut out = params.clone();
    out.load_flat(&grad)?;
    Ok(out)
}
