use crate::error::{Error, Result};
use crate::excursion::{excursion_probability, Surrogate};
use crate::gp::Prediction;
use crate::points::Points;
use crate::smc::RATIO_FLOOR;

const BISECTION_REL_TOL: f64 = 1e-9;

fn mean_ratio(preds: &[Prediction], prev_g: &[f64], u: f64) -> f64 {
    let total: f64 = preds
        .iter()
        .zip(prev_g)
        .map(|(p, g)| {
            let num = excursion_probability(p, u);
            if num == 0.0 {
                0.0
            } else {
                num / g.max(RATIO_FLOOR)
            }
        })
        .sum();
    total / preds.len() as f64
}

/// Level `u ≤ u_final` at which `mean_i g_u(Y_i) / prev_g_i = p0`.
///
/// The left-hand side is non-increasing in `u`, so the root is bracketed and
/// found by bisection; the lower end of the final bracket is returned, so the
/// realized mean ratio is never below `p0`. Returns `u_final` as soon as the
/// ratio there already reaches `p0`. With zero predictive variances this is
/// the empirical `(1 - p0)`-quantile of the predicted means.
pub fn solve_threshold_from_predictions(preds: &[Prediction], prev_g: &[f64], u_final: f64, p0: f64) -> Result<f64> {
    if preds.is_empty() || preds.len() != prev_g.len() {
        return Err(Error::invalid("one previous excursion probability per particle is required"));
    }
    if !(p0 > 0.0 && p0 < 1.0) || !u_final.is_finite() {
        return Err(Error::invalid("p0 must lie in (0, 1) and u_final must be finite"));
    }
    if prev_g.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(Error::invalid("previous excursion probabilities must lie in [0, 1]"));
    }
    if prev_g.iter().all(|g| *g < RATIO_FLOOR) {
        return Err(Error::DegenerateModel("every previous excursion probability vanished".into()));
    }
    if mean_ratio(preds, prev_g, u_final) >= p0 {
        return Ok(u_final);
    }

    let scale = preds
        .iter()
        .map(|p| p.mean.abs().max(p.sd()))
        .fold(u_final.abs(), f64::max)
        .max(f64::MIN_POSITIVE);
    let tol = BISECTION_REL_TOL * scale;
    let mut lo = preds.iter().map(|p| p.mean - 40.0 * p.sd()).fold(f64::INFINITY, f64::min) - 1e-3 * scale;
    if !lo.is_finite() || mean_ratio(preds, prev_g, lo) < p0 {
        return Err(Error::DegenerateModel(
            "the stage ratio stays below p0 even at the lowest level".into(),
        ));
    }
    let mut hi = u_final;
    for _ in 0..400 {
        if hi - lo <= tol {
            break;
        }
        let mid = lo + 0.5 * (hi - lo);
        if mean_ratio(preds, prev_g, mid) >= p0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// [`solve_threshold_from_predictions`] on the surrogate's predictions at `particles`.
pub fn solve_threshold<S: Surrogate>(
    particles: &Points,
    model: &S,
    u_final: f64,
    p0: f64,
    prev_g: &[f64],
) -> Result<f64> {
    let preds = model.predict_all(particles)?;
    solve_threshold_from_predictions(&preds, prev_g, u_final, p0)
}
