//! Minimal reverse-mode differentiation over dense 64-bit matrices.

mod adam;
mod checkpoint;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use tape::{
    log_sum_exp, sigmoid, softplus, softplus_inverse, Gradients, ParamId, ParamStore, Tape, Var, LAYERNORM_EPS,
};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Denominator floor for relative errors, so that coordinates whose true
/// gradient is (numerically) zero are judged on absolute error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Largest relative error between tape gradients and central finite
/// differences over every coordinate of every parameter.
pub fn grad_check(f: impl Fn(&mut Tape) -> Var, params: &ParamStore, eps: f64) -> f64 {
    let analytic = {
        let mut tape = Tape::new(params);
        let loss = f(&mut tape);
        tape.backward(loss)
    };
    let eval = |p: &ParamStore| {
        let mut tape = Tape::new(p);
        let loss = f(&mut tape);
        tape.value(loss).item()
    };
    let mut work = params.clone();
    let mut worst = 0.0f64;
    for p in params.ids() {
        for k in 0..params.get(p).len() {
            let orig = work.get(p).data[k];
            work.get_mut(p).data[k] = orig + eps;
            let up = eval(&work);
            work.get_mut(p).data[k] = orig - eps;
            let down = eval(&work);
            work.get_mut(p).data[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.get(p).map_or(0.0, |g| g.data[k]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}

#[cfg(test)]
mod tests;
