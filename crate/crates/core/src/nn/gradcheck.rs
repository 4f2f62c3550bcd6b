use super::layers::Params;
use crate::error::{Error, Result};

/// Central-difference gradient check.
///
/// `loss(model, with_grad)` must evaluate the loss with dropout disabled; when
/// `with_grad` is true it must also run backward, accumulating into the
/// (already zeroed) gradient fields. Returns the maximum over all scalar
/// parameters of `|analytic − numeric| / max(1e−8, |analytic| + |numeric|)`.
pub fn grad_check<M, F>(model: &mut M, mut loss: F, eps: f64) -> Result<f64>
where
    M: Params,
    F: FnMut(&mut M, bool) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Domain(format!(
            "eps must be in [1e-7, 1e-3], got {eps}"
        )));
    }
    model.zero_grads();
    loss(model, true)?;
    let analytic = model.flat_grads();
    let base = model.flat_values();

    let mut worst: f64 = 0.0;
    let mut values = base.clone();
    for i in 0..base.len() {
        values[i] = base[i] + eps;
        model.set_flat_values(&values)?;
        let plus = loss(model, false)?;
        values[i] = base[i] - eps;
        model.set_flat_values(&values)?;
        let minus = loss(model, false)?;
        values[i] = base[i];

        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    model.set_flat_values(&base)?;
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{bce_grad, bce_loss, sigmoid_grad, sigmoid_scalar, Dense, Init, RngState};

    #[test]
    fn dense_sigmoid_bce() {
        let mut rng = RngState::new(17);
        let mut layer = Dense::new(4, 1, Init::Xavier, &mut rng);
        let xs = [
            ([0.5, -1.0, 0.25, 2.0], 1.0),
            ([-0.3, 0.8, 1.5, -0.7], 0.0),
            ([1.1, 0.1, -0.4, 0.9], 1.0),
        ];
        let err = grad_check(
            &mut layer,
            |l, with_grad| {
                let mut total = 0.0;
                for (x, y) in &xs {
                    let z = l.forward(x)?[0];
                    let p = sigmoid_scalar(z);
                    total += bce_loss(p, *y)?;
                    if with_grad {
                        let g = bce_grad(p, *y)? * sigmoid_grad(z);
                        l.backward(x, &[g])?;
                    }
                }
                Ok(total)
            },
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let mut rng = RngState::new(1);
        let mut layer = Dense::new(3, 2, Init::He, &mut rng);
        let err = grad_check(&mut layer, |_, _| Ok(3.25), 1e-5).unwrap();
        assert_eq!(err, 0.0);
        assert!(layer.flat_grads().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn eps_out_of_range() {
        let mut rng = RngState::new(1);
        let mut layer = Dense::new(1, 1, Init::He, &mut rng);
        assert!(grad_check(&mut layer, |_, _| Ok(0.0), 1e-2).is_err());
    }
}
