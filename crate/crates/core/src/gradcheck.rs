//! Central finite-difference gradient oracle.
//!
//! The oracle re-evaluates the forward function at perturbed inputs and never
//! touches the reverse pass, so it stays independent of the gradients it
//! checks.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tape::{Tape, TensorId};

/// Relative disagreement between an analytic and a numeric derivative.
/// Near-zero pairs compare absolutely so roundoff noise does not divide by
/// itself.
pub fn rel_err<S: Scalar>(analytic: S, numeric: S) -> f64 {
    let a = analytic.as_f64();
    let n = numeric.as_f64();
    let scale = a.abs().max(n.abs());
    if scale < 1e-6 {
        (a - n).abs()
    } else {
        (a - n).abs() / scale
    }
}

/// Checks the tape gradient of `build` against central differences.
///
/// `build` constructs a scalar loss from freshly recorded constants-turned-
/// leaves holding `inputs`. Returns the worst relative error across every
/// input element.
pub fn check<S, F>(inputs: &[(Vec<usize>, Vec<S>)], step: S, mut build: F) -> Result<f64>
where
    S: Scalar,
    F: FnMut(&mut Tape<S>, &[TensorId]) -> Result<TensorId>,
{
    // Analytic gradients.
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs
        .iter()
        .map(|(shape, data)| {
            let p = crate::params::Param::new(shape.clone(), data.clone());
            tape.leaf(&format!("__in{}", tape.num_nodes()), &p)
        })
        .collect();
    let root = build(&mut tape, &ids)?;
    tape.backward(root)?;
    let analytic: Vec<Vec<S>> = ids
        .iter()
        .map(|&id| tape.grad(id).map(|g| g.to_vec()).unwrap_or_else(|| vec![S::zero(); tape.value(id).len()]))
        .collect();

    // Central differences, one element at a time.
    let eval = |pert: &[(Vec<usize>, Vec<S>)], build: &mut F| -> Result<S> {
        let mut t = Tape::new();
        let ids: Vec<TensorId> =
            pert.iter().map(|(s, d)| t.constant(s, d.clone())).collect::<Result<_>>()?;
        let root = build(&mut t, &ids)?;
        Ok(t.value(root)[0])
    };

    let mut worst = 0f64;
    for (ti, (shape, data)) in inputs.iter().enumerate() {
        for j in 0..data.len() {
            let mut plus = inputs.to_vec();
            plus[ti].1[j] = plus[ti].1[j] + step;
            let mut minus = inputs.to_vec();
            minus[ti].1[j] = minus[ti].1[j] - step;
            let _ = shape;
            let fp = eval(&plus, &mut build)?;
            let fm = eval(&minus, &mut build)?;
            let numeric = (fp - fm) / (S::cast(2.0) * step);
            worst = worst.max(rel_err(analytic[ti][j], numeric));
        }
    }
    Ok(worst)
}
