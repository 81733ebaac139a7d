//! Central finite-difference verification of tape gradients.

use super::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Largest `|numeric - analytic| / max(1, |analytic|)` over checked coordinates.
    pub max_rel_error: f64,
    /// Coordinate that produced `max_rel_error`.
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares `backward` against central differences on every coordinate of `x`.
///
/// `f` rebuilds the graph on a fresh tape from a tracked leaf holding `x` and
/// returns the scalar output node.
pub fn finite_difference_check<F>(f: F, x: &Tensor<f64>, epsilon: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let all: Vec<usize> = (0..x.len()).collect();
    finite_difference_check_at(f, x, epsilon, &all)
}

/// As [`finite_difference_check`], restricted to the listed coordinates.
pub fn finite_difference_check_at<F>(f: F, x: &Tensor<f64>, epsilon: f64, coords: &[usize]) -> Result<GradCheck>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    let mut tape = Tape::new();
    let leaf = tape.param("x", x.clone());
    let out = f(&mut tape, leaf)?;
    let analytic = tape
        .backward(out)?
        .wrt(leaf)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));

    let eval = |point: Tensor<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let leaf = tape.param("x", point);
        let out = f(&mut tape, leaf)?;
        let v = tape.value(out)?.item()?;
        if !v.is_finite() {
            return Err(Error::NonFinite("finite-difference evaluation".into()));
        }
        Ok(v)
    };

    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: 0,
    };
    for &i in coords {
        if i >= x.len() {
            return Err(Error::InvalidArgument(format!("coordinate {i} out of range")));
        }
        let base = x.data()[i];
        let plus = eval(x.with_value(i, base + epsilon))?;
        let minus = eval(x.with_value(i, base - epsilon))?;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic.data()[i];
        let rel = (numeric - a).abs() / a.abs().max(1.0);
        if rel > worst.max_rel_error || worst.checked == 0 {
            worst.max_rel_error = rel;
            worst.worst_index = i;
        }
        worst.checked += 1;
    }
    Ok(worst)
}
