//! Central-difference gradient verification.

use super::{ParamSet, Tape, Tensor, TensorError, Var};

/// Compares tape gradients of `f` against central differences at `theta`.
///
/// `f` receives the tape and one bound variable per tensor of `theta` and must
/// return a 1x1 loss. The result is the maximum over all coordinates of
/// `|analytic - numeric| / max(1, |analytic|)`.
pub fn finite_diff_check<F>(f: F, theta: &[Tensor], eps: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let mut params: Vec<Tensor> = theta.iter().cloned().map(Tensor::param).collect();

    let mut tape = Tape::new();
    let bound = ParamSet::bind_tensors(&params, &mut tape)?;
    let loss = f(&mut tape, bound.vars())?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .zip(bound.vars())
        .map(|(t, v)| grads.get(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let eval = |params: &[Tensor]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let bound = ParamSet::bind_tensors(params, &mut tape)?;
        let loss = f(&mut tape, bound.vars())?;
        Ok(tape.scalar(loss))
    };

    let mut worst: f64 = 0.0;
    for k in 0..params.len() {
        for i in 0..params[k].len() {
            let orig = params[k].values()[i];
            params[k].values_mut()[i] = orig + eps;
            let plus = eval(&params)?;
            params[k].values_mut()[i] = orig - eps;
            let minus = eval(&params)?;
            params[k].values_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[k][i];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}
