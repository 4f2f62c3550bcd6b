use std::fmt;
use std::str::FromStr;

use crate::error::{shape_check, Error, Result};
use crate::models::Prediction;
use crate::nn::{bce_grad, bce_loss};

/// Which ordering between `p_ctr` and `p_cvr` the restriction term penalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RestrictionMode {
    /// Penalize `p_cvr > p_ctr`: a purchase needs a click.
    #[default]
    Corrected,
    /// Penalize `p_ctr > p_cvr`, the sign as originally printed.
    PaperLiteral,
    Off,
}

impl RestrictionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RestrictionMode::Corrected => "corrected",
            RestrictionMode::PaperLiteral => "paper-literal",
            RestrictionMode::Off => "off",
        }
    }

    /// Per-item penalty and its derivatives `(∂/∂p_ctr, ∂/∂p_cvr)`.
    fn term(self, p_ctr: f64, p_cvr: f64) -> (f64, f64, f64) {
        match self {
            RestrictionMode::Corrected if p_cvr > p_ctr => (p_cvr - p_ctr, -1.0, 1.0),
            RestrictionMode::PaperLiteral if p_ctr > p_cvr => (p_ctr - p_cvr, 1.0, -1.0),
            _ => (0.0, 0.0, 0.0),
        }
    }
}

impl fmt::Display for RestrictionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RestrictionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corrected" => Ok(RestrictionMode::Corrected),
            "paper-literal" => Ok(RestrictionMode::PaperLiteral),
            "off" => Ok(RestrictionMode::Off),
            _ => Err(Error::Config(format!(
                "unknown restriction mode {s:?} (expected corrected, paper-literal or off)"
            ))),
        }
    }
}

/// Unnormalized restriction penalty summed over the batch.
pub fn restriction_loss(p_ctr: &[f64], p_cvr: &[f64], mode: RestrictionMode) -> Result<f64> {
    shape_check("restriction batch", p_ctr.len(), p_cvr.len())?;
    Ok(p_ctr
        .iter()
        .zip(p_cvr)
        .map(|(&c, &v)| mode.term(c, v).0)
        .sum())
}

/// Batch loss components. `res` already includes the restriction weight and
/// the `1/n` normalization, so `total = ctr + cvr + res`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub ctr: f64,
    pub cvr: f64,
    pub res: f64,
}

impl LossParts {
    fn from_sums(ctr: f64, cvr: f64, res: f64, n: usize, weight: f64) -> Self {
        let n = n as f64;
        let (ctr, cvr, res) = (ctr / n, cvr / n, weight * res / n);
        LossParts {
            total: ctr + cvr + res,
            ctr,
            cvr,
            res,
        }
    }
}

/// Running sums for [`LossParts`] over a stream of impressions.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct LossAccumulator {
    ctr: f64,
    cvr: f64,
    res: f64,
    n: usize,
}

impl LossAccumulator {
    pub fn add(
        &mut self,
        pred: &Prediction,
        click: bool,
        conversion: bool,
        mode: RestrictionMode,
    ) -> Result<()> {
        self.ctr += bce_loss(pred.p_ctr, label(click))?;
        self.cvr += bce_loss(pred.p_cvr, label(conversion))?;
        self.res += mode.term(pred.p_ctr, pred.p_cvr).0;
        self.n += 1;
        Ok(())
    }

    pub fn res_sum(&self) -> f64 {
        self.res
    }

    pub fn finish(&self, weight: f64) -> LossParts {
        if self.n == 0 {
            return LossParts::default();
        }
        LossParts::from_sums(self.ctr, self.cvr, self.res, self.n, weight)
    }
}

fn label(y: bool) -> f64 {
    if y {
        1.0
    } else {
        0.0
    }
}

/// Mean CTR and CVR cross-entropy over all impressions plus the weighted,
/// batch-normalized restriction term. `labels` holds `(click, conversion)`.
pub fn total_loss(
    predictions: &[Prediction],
    labels: &[(bool, bool)],
    mode: RestrictionMode,
    restriction_weight: f64,
) -> Result<LossParts> {
    shape_check("loss batch", predictions.len(), labels.len())?;
    let mut acc = LossAccumulator::default();
    for (p, &(c, v)) in predictions.iter().zip(labels) {
        acc.add(p, c, v, mode)?;
    }
    Ok(acc.finish(restriction_weight))
}

/// `(∂L/∂p_ctr, ∂L/∂p_cvr)` for one impression of a batch of size `n`.
pub(crate) fn loss_grads(
    pred: &Prediction,
    click: bool,
    conversion: bool,
    mode: RestrictionMode,
    restriction_weight: f64,
    n: usize,
) -> Result<(f64, f64)> {
    let n = n as f64;
    let (_, rc, rv) = mode.term(pred.p_ctr, pred.p_cvr);
    let g_ctr = bce_grad(pred.p_ctr, label(click))? + restriction_weight * rc;
    let g_cvr = bce_grad(pred.p_cvr, label(conversion))? + restriction_weight * rv;
    Ok((g_ctr / n, g_cvr / n))
}
