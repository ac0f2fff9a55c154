use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Fraction of an interval's length by which it extends into its successor.
pub const OVERLAP_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeSchedule {
    Uniform { intervals: usize },
    Adaptive { steps: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    /// End of the core range `[start, core_end)` this interval answers for.
    pub core_end: f64,
    /// Training range end, including the overlap.
    pub end: f64,
    pub first: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalPlan {
    pub horizon: f64,
    pub intervals: Vec<Interval>,
}

impl IntervalPlan {
    /// The interval whose core range contains `t`; the final interval also
    /// owns `t = horizon`.
    pub fn interval_for(&self, t: f64) -> usize {
        self.intervals
            .iter()
            .position(|iv| t < iv.core_end)
            .unwrap_or(self.intervals.len() - 1)
    }
}

/// Splits `[0, horizon]` into intervals `[t_{i-1}, t_i + 0.05 (t_i - t_{i-1})]`;
/// the last one stops at the horizon.
pub fn partition_time(horizon: f64, schedule: &TimeSchedule) -> Result<IntervalPlan> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("time horizon must be positive, got {horizon}")));
    }
    let steps: Vec<f64> = match schedule {
        TimeSchedule::Uniform { intervals } => {
            if *intervals == 0 {
                return Err(invalid("uniform schedule needs at least one interval"));
            }
            vec![horizon / *intervals as f64; *intervals]
        }
        TimeSchedule::Adaptive { steps } => {
            if steps.is_empty() || steps.iter().any(|s| !(*s > 0.0)) {
                return Err(invalid("adaptive steps must be positive and non-empty"));
            }
            let total: f64 = steps.iter().sum();
            if (total - horizon).abs() > 1e-9 * horizon.max(1.0) {
                return Err(invalid(format!("adaptive steps sum to {total}, horizon is {horizon}")));
            }
            steps.clone()
        }
    };
    let m = steps.len();
    let mut intervals = Vec::with_capacity(m);
    let mut start = 0.0;
    for (i, dt) in steps.iter().enumerate() {
        let core_end = if i + 1 == m { horizon } else { start + dt };
        let end = if i + 1 == m { horizon } else { core_end + OVERLAP_FRACTION * dt };
        intervals.push(Interval {
            start,
            core_end,
            end,
            first: i == 0,
        });
        start = core_end;
    }
    Ok(IntervalPlan { horizon, intervals })
}
