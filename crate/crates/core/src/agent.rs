//! Synthetic user: a seeded proportional controller that steers the tool
//! from noisy perception of the widget feedback and presses the pedal once
//! it believes the tool is on target.
//!
//! Perception noise is an AR(1) process per channel (x, y, z, rx, rz) with a
//! stationary standard deviation taken from the condition's acuity, so the
//! perceived error carries a slowly drifting bias rather than white jitter.
//! Every visible cue lengthens the control time constant, which is how richer
//! widgets trade speed for precision.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, ConfigError};
use crate::geometry::{compute_error, GuidanceError, Pose, UnitQuat, Vec3};
use crate::record::TrialRecord;
use crate::rng::{rng_from_seed, SimRng};
use crate::widget::{build_frame, Condition, RenderFrame, WidgetConfig};

/// Perception noise standard deviations for one condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Acuity {
    /// mm per world axis
    pub pos: f64,
    /// degrees per tool axis
    pub rot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentParams {
    pub gain_pos: f64,
    pub gain_rot: f64,
    /// Seconds after target display before the first correction.
    pub reaction_delay: f64,
    pub motor_noise_pos: f64,
    pub motor_noise_rot: f64,
    pub perception: BTreeMap<Condition, Acuity>,
    /// Used for channels the condition gives no cue for, and for non-finite
    /// acuities.
    pub no_cue_pos_std: f64,
    pub no_cue_rot_std: f64,
    /// Correlation time of the perception noise in seconds; 0 gives white
    /// noise.
    pub perception_corr_time: f64,
    /// Seconds added to the control time constant per visible duo.
    pub duo_latency: f64,
    /// Seconds added per static guidance element (cylinder or disc).
    pub static_cue_latency: f64,
    pub confirm_threshold_pos: f64,
    pub confirm_threshold_rot: f64,
    pub dwell_frames: u32,
    pub seed: u64,
    pub step_hz: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        let perception = BTreeMap::from([
            (Condition::EntryPoint, Acuity { pos: 1.5, rot: 8.0 }),
            (Condition::TargetAxis, Acuity { pos: 1.2, rot: 3.0 }),
            (Condition::Dwep, Acuity { pos: 0.6, rot: 1.2 }),
            (Condition::Dwta, Acuity { pos: 0.5, rot: 1.0 }),
        ]);
        Self {
            gain_pos: 1.5,
            gain_rot: 1.5,
            reaction_delay: 0.3,
            motor_noise_pos: 0.02,
            motor_noise_rot: 0.02,
            perception,
            no_cue_pos_std: 8.0,
            no_cue_rot_std: 8.0,
            perception_corr_time: 20.0,
            duo_latency: 0.12,
            static_cue_latency: 0.1,
            confirm_threshold_pos: 1.0,
            confirm_threshold_rot: 2.0,
            dwell_frames: 12,
            seed: 0,
            step_hz: 60.0,
        }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require_positive("gain_pos", self.gain_pos)?;
        require_positive("gain_rot", self.gain_rot)?;
        require_positive("step_hz", self.step_hz)?;
        for (name, v) in [
            ("reaction_delay", self.reaction_delay),
            ("motor_noise_pos", self.motor_noise_pos),
            ("motor_noise_rot", self.motor_noise_rot),
            ("no_cue_pos_std", self.no_cue_pos_std),
            ("no_cue_rot_std", self.no_cue_rot_std),
            ("perception_corr_time", self.perception_corr_time),
            ("duo_latency", self.duo_latency),
            ("static_cue_latency", self.static_cue_latency),
            ("confirm_threshold_pos", self.confirm_threshold_pos),
            ("confirm_threshold_rot", self.confirm_threshold_rot),
        ] {
            require_non_negative(name, v)?;
        }
        if !self.no_cue_pos_std.is_finite() || !self.no_cue_rot_std.is_finite() {
            return Err(ConfigError::new("no_cue_rot_std", "no-cue floors must be finite"));
        }
        if self.dwell_frames < 1 {
            return Err(ConfigError::new("dwell_frames", "must be >= 1"));
        }
        for (c, a) in &self.perception {
            // +inf is allowed and means "no cue"
            if a.pos.is_nan() || a.pos < 0.0 || a.rot.is_nan() || a.rot < 0.0 {
                return Err(ConfigError::new(format!("perception.{c}"), "stds must be >= 0"));
            }
        }
        Ok(())
    }

    /// Stationary perception stds `(pos mm, rot deg)` under `condition`.
    pub fn perception_std(&self, condition: Condition) -> (f64, f64) {
        let a = self
            .perception
            .get(&condition)
            .copied()
            .unwrap_or(Acuity { pos: self.no_cue_pos_std, rot: self.no_cue_rot_std });
        let pos = if a.pos.is_finite() { a.pos } else { self.no_cue_pos_std };
        let rot = if !condition.has_rotation_cue() || !a.rot.is_finite() {
            self.no_cue_rot_std.max(if a.rot.is_finite() { a.rot } else { 0.0 })
        } else {
            a.rot
        };
        (pos, rot)
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.step_hz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub tool: Pose,
    pub perceived_error: GuidanceError,
    pub frames_within_threshold: u32,
    pub elapsed: f64,
    pub done: bool,
    /// Unit-variance AR(1) perception noise for x, y, z, rx, rz.
    pub perception_noise: [f64; 5],
}

impl AgentState {
    /// Fresh state at `start`, perception noise drawn from its stationary
    /// distribution.
    pub fn new<R: Rng + ?Sized>(start: Pose, rng: &mut R) -> Self {
        Self {
            tool: start,
            perceived_error: GuidanceError::zero(),
            frames_within_threshold: 0,
            elapsed: 0.0,
            done: false,
            perception_noise: std::array::from_fn(|_| rng.sample(StandardNormal)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PedalEvent {
    pub elapsed: f64,
}

/// Advances the agent by one frame.
///
/// The pedal check runs on the perceived error before any movement; on the
/// pressing frame the tool does not move. Rotation only gates the pedal in
/// conditions that show it. Calling this on a finished state
/// returns it unchanged.
pub fn agent_step<R: Rng + ?Sized>(
    state: &AgentState,
    frame: &RenderFrame,
    true_error: &GuidanceError,
    params: &AgentParams,
    rng: &mut R,
) -> (AgentState, Option<PedalEvent>) {
    if state.done {
        return (state.clone(), None);
    }
    let dt = params.dt();
    let mut next = state.clone();

    let rho = if params.perception_corr_time > 0.0 { (-dt / params.perception_corr_time).exp() } else { 0.0 };
    let innovation = (1.0 - rho * rho).sqrt();
    for z in next.perception_noise.iter_mut() {
        let xi: f64 = rng.sample(StandardNormal);
        *z = rho * *z + innovation * xi;
    }
    let (std_pos, std_rot) = params.perception_std(frame.condition);
    let n = next.perception_noise;
    next.perceived_error = GuidanceError::from_components(
        true_error.pe_vec + Vec3::new(n[0], n[1], n[2]) * std_pos,
        true_error.re_x + n[3] * std_rot,
        true_error.re_z + n[4] * std_rot,
    );

    // a channel without any cue cannot be verified, so it does not gate the pedal
    let within = next.perceived_error.pm <= params.confirm_threshold_pos
        && (next.perceived_error.rm <= params.confirm_threshold_rot || !frame.condition.has_rotation_cue());
    next.frames_within_threshold = if within { state.frames_within_threshold + 1 } else { 0 };

    let started_moving = state.elapsed >= params.reaction_delay;
    next.elapsed = state.elapsed + dt;
    if next.frames_within_threshold >= params.dwell_frames {
        next.done = true;
        let elapsed = next.elapsed;
        return (next, Some(PedalEvent { elapsed }));
    }

    let motor: [f64; 5] = std::array::from_fn(|_| rng.sample(StandardNormal));
    if started_moving {
        let load = params.duo_latency * frame.visible_duo_count() as f64
            + params.static_cue_latency * frame.static_cue_count() as f64;
        let alpha_pos = (dt / (1.0 / params.gain_pos + load)).min(1.0);
        let alpha_rot = (dt / (1.0 / params.gain_rot + load)).min(1.0);
        let p = &next.perceived_error;

        let mut position = state.tool.position + p.pe_vec * alpha_pos;
        position += Vec3::new(motor[0], motor[1], motor[2]) * params.motor_noise_pos;

        let swing_local = Vec3::new(p.re_x.to_radians(), 0.0, p.re_z.to_radians());
        let swing_world = reference_orientation(frame, &state.tool).rotate(swing_local);
        let correction = UnitQuat::from_rotation_vector(swing_world * -alpha_rot);
        let tremor =
            UnitQuat::from_rotation_vector(Vec3::new(motor[3], 0.0, motor[4]) * params.motor_noise_rot.to_radians());
        next.tool = Pose::new(position, correction * state.tool.orientation * tremor);
    }
    (next, None)
}

/// Orientation the rotational error components refer to. The target widget
/// shows the target axis; the agent reads its frame from there.
fn reference_orientation(frame: &RenderFrame, tool: &Pose) -> UnitQuat {
    frame
        .primitives
        .iter()
        .find(|p| p.id == "target_axis" || p.id == "entry_point")
        .map_or(tool.orientation, |p| p.pose.orientation)
}

/// Identifies a trial inside an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialKey {
    pub subject: u32,
    pub condition: Condition,
    pub trial: u32,
}

/// Runs one positioning trial, calling `on_frame` with every rendered frame.
pub fn run_trial_with<F: FnMut(&RenderFrame)>(
    key: TrialKey,
    target: &Pose,
    start: &Pose,
    params: &AgentParams,
    cfg: &WidgetConfig,
    timeout: f64,
    mut on_frame: F,
) -> TrialRecord {
    let mut rng: SimRng = rng_from_seed(params.seed);
    let mut state = AgentState::new(*start, &mut rng);
    let mut pedal = None;
    while pedal.is_none() && state.elapsed < timeout {
        let frame = build_frame(&state.tool, target, key.condition, cfg);
        on_frame(&frame);
        let true_error = compute_error(&state.tool, target);
        let (next, event) = agent_step(&state, &frame, &true_error, params, &mut rng);
        state = next;
        pedal = event;
    }
    TrialRecord {
        subject: key.subject,
        condition: key.condition,
        trial: key.trial,
        target: *target,
        error: compute_error(&state.tool, target),
        task_time: state.elapsed,
        timed_out: pedal.is_none(),
        seed: params.seed,
    }
}

/// Runs one positioning trial until the pedal fires or `timeout` seconds of
/// simulated time pass.
pub fn run_trial(
    key: TrialKey,
    target: &Pose,
    start: &Pose,
    params: &AgentParams,
    cfg: &WidgetConfig,
    timeout: f64,
) -> TrialRecord {
    run_trial_with(key, target, start, params, cfg, timeout, |_| {})
}
