//! Scaling-law estimator families.
//!
//! Four parametric families map a training dataset size `x` (hours) to an
//! error metric `y`:
//!
//! * `M1`: `y = beta * x^c` — pure power law.
//! * `M2`: `y - eps_inf = beta * x^c` — power law with an asymptotic floor.
//! * `M3`: `y = beta * (x^-1 + gamma)^c` — shifted power law.
//! * `M4`: `y - eps_inf = (eps_zero - y)^alpha * beta * x^c` — bounded,
//!   adaptive form; `y` is implicit and is recovered by bisection.
//!
//! All parameter constraints are enforced eagerly at construction so that
//! downstream evaluation, inversion and fitting never observe an invalid
//! model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constraint-set revision stamped into serialized models.
pub const CONSTRAINT_VERSION: u32 = 1;

/// Maximum bisection iterations for the `M4` forward evaluation.
const M4_MAX_BISECT: usize = 200;

/// Interval width below which the `M4` bisection is considered converged.
const M4_ABS_TOL: f64 = 1e-12;

/// Identifier of one estimator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    M1,
    M2,
    M3,
    M4,
}

impl EstimatorKind {
    /// All families, in complexity order.
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::M1,
        EstimatorKind::M2,
        EstimatorKind::M3,
        EstimatorKind::M4,
    ];

    /// Number of free parameters of the family.
    pub fn arity(self) -> usize {
        match self {
            EstimatorKind::M1 => 2,
            EstimatorKind::M2 => 3,
            EstimatorKind::M3 => 3,
            EstimatorKind::M4 => 5,
        }
    }

    /// Stable index used to derive per-family random streams.
    pub(crate) fn index(self) -> usize {
        match self {
            EstimatorKind::M1 => 0,
            EstimatorKind::M2 => 1,
            EstimatorKind::M3 => 2,
            EstimatorKind::M4 => 3,
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorKind::M1 => write!(f, "M1"),
            EstimatorKind::M2 => write!(f, "M2"),
            EstimatorKind::M3 => write!(f, "M3"),
            EstimatorKind::M4 => write!(f, "M4"),
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(EstimatorKind::M1),
            "m2" => Ok(EstimatorKind::M2),
            "m3" => Ok(EstimatorKind::M3),
            "m4" => Ok(EstimatorKind::M4),
            other => Err(Error::InvalidInput(format!(
                "unknown estimator kind '{other}' (expected m1|m2|m3|m4)"
            ))),
        }
    }
}

/// Full parameter record; only the fields relevant to a kind are meaningful,
/// the rest are kept at zero by [`EstimatorModel`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimatorParams {
    /// Scale factor, > 0 for every family.
    pub beta: f64,
    /// Exponent; < 0 for M1/M2/M4, either sign for M3.
    pub c: f64,
    /// Asymptotic metric floor (M2, M4), >= 0 (M4: > 0).
    pub eps_inf: f64,
    /// Shift in inverse hours (M3), > 0.
    pub gamma: f64,
    /// Untrained-model metric level (M4), > eps_inf.
    pub eps_zero: f64,
    /// Adaptation exponent (M4), > 0.
    pub alpha: f64,
}

/// A validated (kind, parameters) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDoc", into = "ModelDoc")]
pub struct EstimatorModel {
    kind: EstimatorKind,
    params: EstimatorParams,
}

impl EstimatorModel {
    /// Pure power law `y = beta * x^c`.
    pub fn m1(beta: f64, c: f64) -> Result<Self> {
        Self::new(
            EstimatorKind::M1,
            EstimatorParams {
                beta,
                c,
                ..Default::default()
            },
        )
    }

    /// Offset power law `y - eps_inf = beta * x^c`.
    pub fn m2(beta: f64, c: f64, eps_inf: f64) -> Result<Self> {
        Self::new(
            EstimatorKind::M2,
            EstimatorParams {
                beta,
                c,
                eps_inf,
                ..Default::default()
            },
        )
    }

    /// Shifted power law `y = beta * (x^-1 + gamma)^c`.
    pub fn m3(beta: f64, c: f64, gamma: f64) -> Result<Self> {
        Self::new(
            EstimatorKind::M3,
            EstimatorParams {
                beta,
                c,
                gamma,
                ..Default::default()
            },
        )
    }

    /// Bounded adaptive law `y - eps_inf = (eps_zero - y)^alpha * beta * x^c`.
    pub fn m4(beta: f64, c: f64, eps_inf: f64, eps_zero: f64, alpha: f64) -> Result<Self> {
        Self::new(
            EstimatorKind::M4,
            EstimatorParams {
                beta,
                c,
                eps_inf,
                eps_zero,
                alpha,
                ..Default::default()
            },
        )
    }

    /// Validates `params` against `kind`'s constraints; irrelevant fields are
    /// normalized to zero so that equal models compare equal.
    pub fn new(kind: EstimatorKind, params: EstimatorParams) -> Result<Self> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        if !(params.beta.is_finite() && params.beta > 0.0) {
            return fail(format!("beta must be finite and > 0, got {}", params.beta));
        }
        if !params.c.is_finite() || params.c == 0.0 {
            return fail(format!("c must be finite and non-zero, got {}", params.c));
        }
        match kind {
            EstimatorKind::M1 | EstimatorKind::M2 | EstimatorKind::M4 => {
                if params.c >= 0.0 {
                    return fail(format!("c must be < 0 for {kind}, got {}", params.c));
                }
            }
            EstimatorKind::M3 => {}
        }
        if matches!(kind, EstimatorKind::M2 | EstimatorKind::M4)
            && !(params.eps_inf.is_finite() && params.eps_inf >= 0.0)
        {
            return fail(format!(
                "eps_inf must be finite and >= 0, got {}",
                params.eps_inf
            ));
        }
        if kind == EstimatorKind::M3 && !(params.gamma.is_finite() && params.gamma > 0.0) {
            return fail(format!(
                "gamma must be finite and > 0, got {}",
                params.gamma
            ));
        }
        if kind == EstimatorKind::M4 {
            if params.eps_inf <= 0.0 {
                return fail(format!("eps_inf must be > 0 for M4, got {}", params.eps_inf));
            }
            if !(params.eps_zero.is_finite() && params.eps_zero > params.eps_inf) {
                return fail(format!(
                    "eps_zero must be finite and > eps_inf, got eps_zero={} eps_inf={}",
                    params.eps_zero, params.eps_inf
                ));
            }
            if !(params.alpha.is_finite() && params.alpha > 0.0) {
                return fail(format!(
                    "alpha must be finite and > 0, got {}",
                    params.alpha
                ));
            }
        }

        let mut normalized = EstimatorParams {
            beta: params.beta,
            c: params.c,
            ..Default::default()
        };
        match kind {
            EstimatorKind::M1 => {}
            EstimatorKind::M2 => normalized.eps_inf = params.eps_inf,
            EstimatorKind::M3 => normalized.gamma = params.gamma,
            EstimatorKind::M4 => {
                normalized.eps_inf = params.eps_inf;
                normalized.eps_zero = params.eps_zero;
                normalized.alpha = params.alpha;
            }
        }
        Ok(EstimatorModel {
            kind,
            params: normalized,
        })
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn params(&self) -> &EstimatorParams {
        &self.params
    }

    /// Metric value predicted at `hours` of training data.
    ///
    /// M1–M3 are closed-form; M4 is solved by bisection on the bracket
    /// `(eps_inf, eps_zero)` where the defining relation has exactly one
    /// root.
    pub fn evaluate(&self, hours: f64) -> Result<f64> {
        if !(hours.is_finite() && hours > 0.0) {
            return Err(Error::InvalidInput(format!(
                "hours must be finite and > 0, got {hours}"
            )));
        }
        match self.kind {
            EstimatorKind::M1 | EstimatorKind::M2 | EstimatorKind::M3 => {
                Ok(eval_closed_form(self.kind, &self.params, hours))
            }
            EstimatorKind::M4 => m4_forward(&self.params, hours),
        }
    }

    /// Metric level approached as the dataset size grows without bound.
    pub fn asymptote(&self) -> f64 {
        let p = &self.params;
        match self.kind {
            EstimatorKind::M1 => 0.0,
            EstimatorKind::M2 | EstimatorKind::M4 => p.eps_inf,
            EstimatorKind::M3 => p.beta * p.gamma.powf(p.c),
        }
    }

    /// True when the curve decreases as data grows (always for M1/M2/M4;
    /// for M3 exactly when `c > 0`, since the base `x^-1 + gamma` shrinks).
    pub fn is_decreasing(&self) -> bool {
        match self.kind {
            EstimatorKind::M1 | EstimatorKind::M2 | EstimatorKind::M4 => true,
            EstimatorKind::M3 => self.params.c > 0.0,
        }
    }

    /// Dataset size at which the curve attains `target`, by closed-form
    /// inversion.
    ///
    /// Targets at or past the asymptote are `unreachable-target` (no finite
    /// dataset attains them); targets at or past the zero-data limit are
    /// `degenerate-target`.
    pub fn invert(&self, target: f64) -> Result<f64> {
        if !target.is_finite() {
            return Err(Error::InvalidInput(format!(
                "target must be finite, got {target}"
            )));
        }
        let asym = self.asymptote();
        let p = &self.params;
        if self.is_decreasing() {
            if target <= asym {
                return Err(Error::UnreachableTarget {
                    detail: format!(
                        "target {target} is at or below the asymptote {asym}; no finite dataset achieves it"
                    ),
                    max_improvement_pct: None,
                });
            }
        } else {
            // Increasing orientation (M3 with c < 0): the asymptote is the
            // supremum and the zero-data limit is 0.
            if target >= asym {
                return Err(Error::UnreachableTarget {
                    detail: format!(
                        "target {target} is at or above the limit {asym}; no finite dataset achieves it"
                    ),
                    max_improvement_pct: None,
                });
            }
            if target <= 0.0 {
                return Err(Error::DegenerateTarget(format!(
                    "target {target} is at or below the zero-data limit 0"
                )));
            }
        }
        match self.kind {
            EstimatorKind::M1 => Ok((target / p.beta).powf(1.0 / p.c)),
            EstimatorKind::M2 => Ok(((target - p.eps_inf) / p.beta).powf(1.0 / p.c)),
            EstimatorKind::M3 => {
                let base = (target / p.beta).powf(1.0 / p.c);
                // target strictly inside the range guarantees base > gamma.
                Ok(1.0 / (base - p.gamma))
            }
            EstimatorKind::M4 => {
                if target >= p.eps_zero {
                    return Err(Error::DegenerateTarget(format!(
                        "target {target} is at or above the zero-data limit {}",
                        p.eps_zero
                    )));
                }
                let num = target - p.eps_inf;
                let den = (p.eps_zero - target).powf(p.alpha) * p.beta;
                Ok((num / den).powf(1.0 / p.c))
            }
        }
    }
}

/// Closed-form forward evaluation for M1–M3; `params` must satisfy `kind`'s
/// constraints and `hours > 0`.
pub(crate) fn eval_closed_form(kind: EstimatorKind, p: &EstimatorParams, hours: f64) -> f64 {
    match kind {
        EstimatorKind::M1 => p.beta * hours.powf(p.c),
        EstimatorKind::M2 => p.eps_inf + p.beta * hours.powf(p.c),
        EstimatorKind::M3 => p.beta * (hours.recip() + p.gamma).powf(p.c),
        EstimatorKind::M4 => unreachable!("M4 has no closed form"),
    }
}

/// Forward evaluation usable on any validated parameter set, returning a
/// best-effort value even if the M4 bisection hits its iteration cap. The
/// fitting engine uses this so that a single hard-to-converge residual does
/// not abort a whole optimization start.
pub(crate) fn eval_best_effort(kind: EstimatorKind, p: &EstimatorParams, hours: f64) -> f64 {
    match kind {
        EstimatorKind::M4 => m4_bisect(p, hours).0,
        _ => eval_closed_form(kind, p, hours),
    }
}

fn m4_forward(p: &EstimatorParams, hours: f64) -> Result<f64> {
    let (y, converged) = m4_bisect(p, hours);
    if converged {
        Ok(y)
    } else {
        Err(Error::NumericFailure(format!(
            "M4 bisection did not converge within {M4_MAX_BISECT} iterations at x={hours}"
        )))
    }
}

/// Solves `z = (w - z)^alpha * beta * x^c` for `z = y - eps_inf` on `[0, w]`,
/// `w = eps_zero - eps_inf`. The left side minus the right side is strictly
/// increasing in `z` with a sign change across the bracket, so the root is
/// unique. Iterates until the bracket collapses to machine precision (which
/// is always at least as tight as [`M4_ABS_TOL`]) or the iteration cap.
fn m4_bisect(p: &EstimatorParams, hours: f64) -> (f64, bool) {
    let w = p.eps_zero - p.eps_inf;
    let k = p.beta * hours.powf(p.c);
    let mut lo = 0.0_f64;
    let mut hi = w;
    let mut converged = false;
    for _ in 0..M4_MAX_BISECT {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            converged = true;
            break;
        }
        let g = mid - (w - mid).powf(p.alpha) * k;
        if g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs() {
            converged = true;
            break;
        }
    }
    if hi - lo <= M4_ABS_TOL {
        converged = true;
    }
    (p.eps_inf + 0.5 * (lo + hi), converged)
}

/// One data point of a metric series: metric value observed after training
/// on `hours` of data, tagged with the series it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub hours: f64,
    pub value: f64,
    #[serde(default)]
    pub action: String,
    #[serde(default)]
    pub metric: String,
    #[serde(default)]
    pub backbone: String,
}

impl Observation {
    pub fn new(hours: f64, value: f64) -> Result<Self> {
        let obs = Observation {
            hours,
            value,
            action: String::new(),
            metric: String::new(),
            backbone: String::new(),
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hours.is_finite() && self.hours > 0.0) {
            return Err(Error::InvalidInput(format!(
                "observation hours must be finite and > 0, got {}",
                self.hours
            )));
        }
        if !(self.value.is_finite() && self.value > 0.0) {
            return Err(Error::InvalidInput(format!(
                "observation value must be finite and > 0, got {}",
                self.value
            )));
        }
        Ok(())
    }
}

/// Validates every observation and the uniqueness of `hours` within the
/// series.
pub fn validate_series(series: &[Observation]) -> Result<()> {
    for obs in series {
        obs.validate()?;
    }
    let mut hours: Vec<f64> = series.iter().map(|o| o.hours).collect();
    hours.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for pair in hours.windows(2) {
        if pair[0] == pair[1] {
            return Err(Error::DuplicateInput(format!(
                "duplicate hours value {} in series",
                pair[0]
            )));
        }
    }
    Ok(())
}

/// Serialized shape of [`EstimatorModel`]: only the fields relevant to the
/// kind are written, and the constraint revision is stamped for forward
/// compatibility. Finite doubles round-trip bit-exactly through JSON.
#[derive(Serialize, Deserialize)]
struct ModelDoc {
    kind: EstimatorKind,
    params: ParamsDoc,
    constraint_version: u32,
}

#[derive(Serialize, Deserialize, Default)]
struct ParamsDoc {
    beta: f64,
    c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_inf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_zero: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

impl From<EstimatorModel> for ModelDoc {
    fn from(model: EstimatorModel) -> Self {
        let p = model.params;
        let mut doc = ParamsDoc {
            beta: p.beta,
            c: p.c,
            ..Default::default()
        };
        match model.kind {
            EstimatorKind::M1 => {}
            EstimatorKind::M2 => doc.eps_inf = Some(p.eps_inf),
            EstimatorKind::M3 => doc.gamma = Some(p.gamma),
            EstimatorKind::M4 => {
                doc.eps_inf = Some(p.eps_inf);
                doc.eps_zero = Some(p.eps_zero);
                doc.alpha = Some(p.alpha);
            }
        }
        ModelDoc {
            kind: model.kind,
            params: doc,
            constraint_version: CONSTRAINT_VERSION,
        }
    }
}

impl TryFrom<ModelDoc> for EstimatorModel {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        if doc.constraint_version != CONSTRAINT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported constraint_version {} (expected {CONSTRAINT_VERSION})",
                doc.constraint_version
            )));
        }
        let required = |field: Option<f64>, name: &str| {
            field.ok_or_else(|| {
                Error::InvalidInput(format!("missing parameter '{name}' for {}", doc.kind))
            })
        };
        let p = doc.params;
        match doc.kind {
            EstimatorKind::M1 => EstimatorModel::m1(p.beta, p.c),
            EstimatorKind::M2 => EstimatorModel::m2(p.beta, p.c, required(p.eps_inf, "eps_inf")?),
            EstimatorKind::M3 => EstimatorModel::m3(p.beta, p.c, required(p.gamma, "gamma")?),
            EstimatorKind::M4 => EstimatorModel::m4(
                p.beta,
                p.c,
                required(p.eps_inf, "eps_inf")?,
                required(p.eps_zero, "eps_zero")?,
                required(p.alpha, "alpha")?,
            ),
        }
    }
}
