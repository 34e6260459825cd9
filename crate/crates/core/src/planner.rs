//! Data-planning queries over fitted scaling curves: required dataset size
//! for a target metric, cost of a relative improvement, data equivalence
//! between two curves, and series normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorModel, Observation};

/// Answer to a required-data query.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RequiredHours {
    pub hours: f64,
    /// True when the answer lies beyond the largest observation the model
    /// was fitted on. Extrapolated answers should be treated as optimistic
    /// lower bounds on the real data need.
    pub extrapolated: bool,
}

/// Dataset size at which `model` attains `target`. `max_fitted_hours` is the
/// largest observation used to fit the model and controls the extrapolation
/// flag.
pub fn required_hours(
    model: &EstimatorModel,
    target: f64,
    max_fitted_hours: f64,
) -> Result<RequiredHours> {
    if !(max_fitted_hours.is_finite() && max_fitted_hours > 0.0) {
        return Err(Error::InvalidInput(format!(
            "max_fitted_hours must be finite and > 0, got {max_fitted_hours}"
        )));
    }
    let hours = model.invert(target)?;
    Ok(RequiredHours {
        hours,
        extrapolated: hours > max_fitted_hours,
    })
}

/// A "how much more data for a p% improvement" query. The improvement is
/// multiplicative on the current curve value: the target metric is
/// `y(reference_hours) * (1 - pct/100)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImprovementQuery {
    pub model: EstimatorModel,
    pub reference_hours: f64,
    pub improvement_pct: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ImprovementCost {
    /// Additional hours beyond the reference dataset; never negative.
    pub additional_hours: f64,
    /// Total hours at which the improved metric is attained.
    pub total_hours: f64,
    /// Metric value the query asks for.
    pub target_value: f64,
}

pub fn improvement_cost(query: &ImprovementQuery) -> Result<ImprovementCost> {
    let ImprovementQuery {
        model,
        reference_hours,
        improvement_pct: pct,
    } = query;
    if !(reference_hours.is_finite() && *reference_hours > 0.0) {
        return Err(Error::InvalidInput(format!(
            "reference_hours must be finite and > 0, got {reference_hours}"
        )));
    }
    if !(pct.is_finite() && *pct >= 0.0 && *pct < 100.0) {
        return Err(Error::InvalidInput(format!(
            "improvement_pct must lie in [0, 100), got {pct}"
        )));
    }
    let current = model.evaluate(*reference_hours)?;
    let target = current * (1.0 - pct / 100.0);
    let asymptote = model.asymptote();
    if model.is_decreasing() && target <= asymptote {
        // The largest feasible improvement stops strictly short of the floor.
        let max_pct = 100.0 * (1.0 - asymptote / current);
        return Err(Error::UnreachableTarget {
            detail: format!(
                "a {pct}% improvement on {current} would require metric {target}, at or below the asymptote {asymptote}"
            ),
            max_improvement_pct: Some(max_pct),
        });
    }
    let total_hours = if *pct == 0.0 {
        *reference_hours
    } else {
        model.invert(target)?
    };
    Ok(ImprovementCost {
        additional_hours: (total_hours - reference_hours).max(0.0),
        total_hours,
        target_value: target,
    })
}

/// How much data curve `b` needs to match curve `a`'s value at a reference
/// dataset size.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EquivalenceResult {
    pub reference_hours: f64,
    pub equivalent_hours: f64,
    /// `100 * (1 - equivalent_hours / reference_hours)`; positive when curve
    /// `b` reaches the same metric with less data.
    pub reduction_pct: f64,
    /// Metric value both curves attain.
    pub metric_value: f64,
}

pub fn data_equivalence(
    model_a: &EstimatorModel,
    model_b: &EstimatorModel,
    reference_hours: f64,
) -> Result<EquivalenceResult> {
    let value = model_a.evaluate(reference_hours)?;
    let equivalent_hours = model_b.invert(value).map_err(|err| match err {
        Error::UnreachableTarget { detail, .. } | Error::DegenerateTarget(detail) => {
            Error::NoEquivalence(format!(
                "the reference metric {value} cannot be reached by the second curve: {detail}"
            ))
        }
        other => other,
    })?;
    Ok(EquivalenceResult {
        reference_hours,
        equivalent_hours,
        reduction_pct: 100.0 * (1.0 - equivalent_hours / reference_hours),
        metric_value: value,
    })
}

/// Scales a series so its maximum value is exactly 1.0. Ratios between
/// entries are preserved and the operation is idempotent.
pub fn normalize(series: &[Observation]) -> Result<Vec<Observation>> {
    if series.is_empty() {
        return Err(Error::EmptyInput("cannot normalize an empty series".into()));
    }
    for obs in series {
        obs.validate()?;
    }
    let max = series.iter().map(|o| o.value).fold(f64::NEG_INFINITY, f64::max);
    Ok(series
        .iter()
        .map(|obs| Observation {
            value: obs.value / max,
            ..obs.clone()
        })
        .collect())
}
