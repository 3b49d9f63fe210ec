//! Final comparative conclusion from the signs and robustness of the two
//! interval bounds.
//!
//! The effect is treatment minus comparator on an outcome where larger is
//! worse, so a positive interval means the treatment is inferior.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundStatus {
    pub sign: Sign,
    pub robust: bool,
}

impl BoundStatus {
    pub fn new(sign: Sign, robust: bool) -> Self {
        Self { sign, robust }
    }

    /// `None` for a bound of exactly zero.
    pub fn from_value(value: f64, robust: bool) -> Option<Self> {
        if value > 0.0 {
            Some(Self::new(Sign::Positive, robust))
        } else if value < 0.0 {
            Some(Self::new(Sign::Negative, robust))
        } else {
            None
        }
    }

    fn code(self) -> String {
        format!(
            "{}{}",
            if self.sign == Sign::Positive { '+' } else { '-' },
            if self.robust { 'r' } else { 'n' }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conclusion {
    Inferiority,
    InferiorityOrNoDifference,
    NoDifference,
    Superiority,
    SuperiorityOrNoDifference,
    Indeterminate,
}

/// A possible true state of the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Truth {
    Inferior,
    NoDifference,
    Superior,
}

impl Conclusion {
    pub fn label(self) -> &'static str {
        match self {
            Conclusion::Inferiority => "inferiority",
            Conclusion::InferiorityOrNoDifference => "inferiority or no difference",
            Conclusion::NoDifference => "no difference",
            Conclusion::Superiority => "superiority",
            Conclusion::SuperiorityOrNoDifference => "superiority or no difference",
            Conclusion::Indeterminate => "indeterminate",
        }
    }

    /// The truths the conclusion leaves open. A weaker conclusion is a superset.
    pub fn possible_truths(self) -> BTreeSet<Truth> {
        use Truth::*;
        let v: &[Truth] = match self {
            Conclusion::Inferiority => &[Inferior],
            Conclusion::InferiorityOrNoDifference => &[Inferior, NoDifference],
            Conclusion::NoDifference => &[NoDifference],
            Conclusion::Superiority => &[Superior],
            Conclusion::SuperiorityOrNoDifference => &[Superior, NoDifference],
            Conclusion::Indeterminate => &[Inferior, NoDifference, Superior],
        };
        v.iter().copied().collect()
    }

    /// Sentence describing the finding for a treatment and a comparator.
    pub fn narrative(self, treatment: &str, comparator: &str) -> String {
        match self {
            Conclusion::Inferiority => format!(
                "{treatment} is statistically significantly inferior to {comparator}, and the conclusion is robust"
            ),
            Conclusion::InferiorityOrNoDifference => format!(
                "{treatment} is inferior to or not different from {comparator}; an unmeasured confounder could overturn the significant bound"
            ),
            Conclusion::NoDifference => format!(
                "there is no statistically significant difference between {treatment} and {comparator}, and the conclusion is robust"
            ),
            Conclusion::Superiority => format!(
                "{treatment} is statistically significantly superior to {comparator}, and the conclusion is robust"
            ),
            Conclusion::SuperiorityOrNoDifference => format!(
                "{treatment} is superior to or not different from {comparator}; an unmeasured confounder could overturn the significant bound"
            ),
            Conclusion::Indeterminate => format!(
                "no robust conclusion can be drawn comparing {treatment} with {comparator}"
            ),
        }
    }
}

impl fmt::Display for Conclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Maps (lower, upper) bound status to a conclusion.
pub fn conclude(lower: BoundStatus, upper: BoundStatus) -> Result<Conclusion> {
    use Conclusion::*;
    use Sign::*;
    let c = match (lower.sign, lower.robust, upper.sign, upper.robust) {
        (Positive, _, Negative, _) => return Err(Error::InconsistentBounds),
        (Positive, true, Positive, true) => Inferiority,
        (Positive, false, Positive, true) => InferiorityOrNoDifference,
        // The upper bound only widens an interval whose lower end already
        // robustly excludes zero.
        (Positive, true, Positive, false) => Inferiority,
        (Positive, false, Positive, false) => Indeterminate,
        (Negative, true, Positive, true) => NoDifference,
        (Negative, false, Positive, true) => InferiorityOrNoDifference,
        (Negative, true, Positive, false) => SuperiorityOrNoDifference,
        (Negative, false, Positive, false) => Indeterminate,
        (Negative, true, Negative, true) => Superiority,
        (Negative, true, Negative, false) => SuperiorityOrNoDifference,
        (Negative, false, Negative, true) => Superiority,
        (Negative, false, Negative, false) => Indeterminate,
    };
    Ok(c)
}

/// Like [`conclude`] but on raw bound values; a zero bound is Indeterminate.
pub fn conclude_values(lower: f64, lower_robust: bool, upper: f64, upper_robust: bool) -> Result<Conclusion> {
    if lower > upper {
        return Err(Error::InconsistentBounds);
    }
    match (
        BoundStatus::from_value(lower, lower_robust),
        BoundStatus::from_value(upper, upper_robust),
    ) {
        (Some(l), Some(u)) => conclude(l, u),
        _ => Ok(Conclusion::Indeterminate),
    }
}

/// Rows of the scenario table as `(lower, upper, conclusion)` codes.
pub fn scenario_table() -> Vec<(String, String, Conclusion)> {
    let mut out = Vec::new();
    for ls in [Sign::Positive, Sign::Negative] {
        for us in [Sign::Positive, Sign::Negative] {
            for lr in [true, false] {
                for ur in [true, false] {
                    let (l, u) = (BoundStatus::new(ls, lr), BoundStatus::new(us, ur));
                    if let Ok(c) = conclude(l, u) {
                        out.push((l.code(), u.code(), c));
                    }
                }
            }
        }
    }
    out
}
