use super::layers::PROB_EPS;
use crate::error::{Error, Result};

/// Binary cross-entropy `−(y ln p + (1−y) ln(1−p))`.
///
/// The log argument is floored at [`PROB_EPS`] (where the gradient is zero),
/// so exact 0/1 predictions stay finite. Values outside `[0,1]` are rejected.
pub fn bce_loss(p: f64, y: f64) -> Result<f64> {
    check(p, y)?;
    // only the active term is evaluated, so p = y costs ~0 rather than 0·ln 0
    let q = if y == 1.0 { p } else { 1.0 - p };
    Ok(-q.max(PROB_EPS).ln())
}

/// `∂ bce / ∂p`.
pub fn bce_grad(p: f64, y: f64) -> Result<f64> {
    check(p, y)?;
    let q = if y == 1.0 { p } else { 1.0 - p };
    if q < PROB_EPS {
        return Ok(0.0);
    }
    Ok(if y == 1.0 { -1.0 / p } else { 1.0 / (1.0 - p) })
}

fn check(p: f64, y: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0,1]")));
    }
    if y != 0.0 && y != 1.0 {
        return Err(Error::Domain(format!("label {y} is not 0 or 1")));
    }
    Ok(())
}
