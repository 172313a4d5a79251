use serde::{Deserialize, Serialize};

use crate::geometry::{GuidanceError, Pose};
use crate::widget::Condition;

/// One confirmed (or timed-out) positioning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub subject: u32,
    pub condition: Condition,
    /// Index of the trial within its condition block.
    pub trial: u32,
    pub target: Pose,
    /// True error at the pedal press (or at timeout).
    pub error: GuidanceError,
    /// Seconds from target display to pedal press.
    pub task_time: f64,
    pub timed_out: bool,
    pub seed: u64,
}
