//! Within-subject experiment runner.
//!
//! Each simulated subject works through every condition in the order given
//! by a row of a balanced Latin square, positioning the tool on a fresh set
//! of seeded targets per condition. All randomness derives from the master
//! seed through fixed seed paths, so a trial's outcome does not depend on
//! scheduling or worker count.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{run_trial, AgentParams, TrialKey};
use crate::error::{require_non_negative, require_positive, ConfigError};
use crate::geometry::{Pose, UnitQuat, Vec3};
use crate::record::TrialRecord;
use crate::rng::{derive_seed, rng_from_seed};
use crate::widget::{Condition, WidgetConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatinSquareError {
    #[error("a balanced Latin square needs at least 2 conditions, got {0}")]
    TooSmall(usize),
    #[error("no single balanced Latin square exists for odd n = {0}; use the doubled-square variant")]
    Odd(usize),
}

/// Williams design: row `i` is `(base[j] + i) mod n` with base
/// `0, 1, n-1, 2, n-2, ...`. Each condition appears once per row and column,
/// and every ordered adjacent pair appears exactly once.
pub fn balanced_latin_square(n: usize) -> Result<Vec<Vec<usize>>, LatinSquareError> {
    if n < 2 {
        return Err(LatinSquareError::TooSmall(n));
    }
    if n % 2 == 1 {
        return Err(LatinSquareError::Odd(n));
    }
    let base: Vec<usize> = (0..n).map(|j| if j % 2 == 1 { j.div_ceil(2) } else { (n - j / 2) % n }).collect();
    Ok((0..n).map(|i| base.iter().map(|&b| (b + i) % n).collect()).collect())
}

/// Axis-aligned placement box for target entry points plus the maximum tilt
/// of the target bit axis from vertical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetRegion {
    pub min: Vec3,
    pub max: Vec3,
    pub max_tilt_deg: f64,
}

impl Default for TargetRegion {
    fn default() -> Self {
        Self { min: Vec3::new(-25.0, -10.0, 30.0), max: Vec3::new(25.0, 5.0, 70.0), max_tilt_deg: 30.0 }
    }
}

impl TargetRegion {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(ConfigError::new("min", "box corners must be finite"));
        }
        if !(self.max.x > self.min.x && self.max.y > self.min.y && self.max.z > self.min.z) {
            return Err(ConfigError::new("max", "box must be non-degenerate (max > min on every axis)"));
        }
        if !(0.0..=90.0).contains(&self.max_tilt_deg) {
            return Err(ConfigError::new("max_tilt_deg", "must lie in [0, 90]"));
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }
}

/// Uniform positions in the box; bit axes tilted from world `y` by a uniform
/// angle in `[0, max_tilt]` toward a uniform azimuth.
pub fn generate_targets<R: Rng + ?Sized>(region: &TargetRegion, count: usize, rng: &mut R) -> Vec<Pose> {
    (0..count)
        .map(|_| {
            let position = Vec3::new(
                rng.random_range(region.min.x..=region.max.x),
                rng.random_range(region.min.y..=region.max.y),
                rng.random_range(region.min.z..=region.max.z),
            );
            let tilt = rng.random_range(0.0..=region.max_tilt_deg);
            let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
            let lean_axis = Vec3::new(azimuth.cos(), 0.0, azimuth.sin());
            let orientation = UnitQuat::from_axis_angle(lean_axis, tilt).expect("unit axis");
            Pose::new(position, orientation)
        })
        .collect()
}

/// Where the tool starts for each trial, relative to the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartSpec {
    pub min_distance: f64,
    pub max_distance: f64,
    pub min_angle_deg: f64,
    pub max_angle_deg: f64,
}

impl Default for StartSpec {
    fn default() -> Self {
        Self { min_distance: 20.0, max_distance: 60.0, min_angle_deg: 5.0, max_angle_deg: 20.0 }
    }
}

impl StartSpec {
    fn validate(&self) -> Result<(), ConfigError> {
        require_non_negative("min_distance", self.min_distance)?;
        require_non_negative("min_angle_deg", self.min_angle_deg)?;
        if !(self.max_distance >= self.min_distance && self.max_distance.is_finite()) {
            return Err(ConfigError::new("max_distance", "must be finite and >= min_distance"));
        }
        if !(self.max_angle_deg >= self.min_angle_deg && self.max_angle_deg < 180.0) {
            return Err(ConfigError::new("max_angle_deg", "must lie in [min_angle_deg, 180)"));
        }
        Ok(())
    }

    /// Tool start pose: offset in a uniform direction, bit axis swung away
    /// from the target axis, arbitrary twist about the bit.
    pub fn sample<R: Rng + ?Sized>(&self, target: &Pose, rng: &mut R) -> Pose {
        let dir = loop {
            let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
            if let Some(u) = v.normalized() {
                break u;
            }
        };
        let distance = rng.random_range(self.min_distance..=self.max_distance);
        let angle = rng.random_range(self.min_angle_deg..=self.max_angle_deg);
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let twist = rng.random_range(-180.0..180.0);
        // swing axis in the target's local x-z plane
        let swing_axis = Vec3::new(phi.cos(), 0.0, phi.sin());
        let orientation = target.orientation
            * UnitQuat::from_axis_angle(swing_axis, angle).expect("unit axis")
            * UnitQuat::from_axis_angle(Vec3::Y, twist).expect("unit axis");
        Pose::new(target.position + dir * distance, orientation)
    }
}

/// Multiplicative log-normal between-subject variation of agent skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterSpec {
    pub enabled: bool,
    /// Std of the log factor applied to the gains.
    pub gain_log_std: f64,
    /// Std of the log factor applied to every perception acuity.
    pub acuity_log_std: f64,
    /// Std of the log factor applied to the confirm thresholds.
    pub threshold_log_std: f64,
}

impl Default for JitterSpec {
    fn default() -> Self {
        Self { enabled: true, gain_log_std: 0.25, acuity_log_std: 0.2, threshold_log_std: 0.35 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_subjects: u32,
    pub trials_per_condition: u32,
    pub conditions: Vec<Condition>,
    pub target_region: TargetRegion,
    pub start: StartSpec,
    pub widget: WidgetConfig,
    pub agent: AgentParams,
    pub jitter: JitterSpec,
    /// Simulated seconds before a trial is abandoned.
    pub timeout_s: f64,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_subjects: 35,
            trials_per_condition: 16,
            conditions: Condition::ALL.to_vec(),
            target_region: TargetRegion::default(),
            start: StartSpec::default(),
            widget: WidgetConfig::default(),
            agent: AgentParams::default(),
            jitter: JitterSpec::default(),
            timeout_s: 120.0,
            master_seed: 42,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_subjects < 1 {
            return Err(ConfigError::new("n_subjects", "must be >= 1"));
        }
        if self.trials_per_condition < 1 {
            return Err(ConfigError::new("trials_per_condition", "must be >= 1"));
        }
        let k = self.conditions.len();
        for (i, c) in self.conditions.iter().enumerate() {
            if self.conditions[..i].contains(c) {
                return Err(ConfigError::new("conditions", format!("duplicate condition {c}")));
            }
        }
        balanced_latin_square(k).map_err(|e| ConfigError::new("conditions", e.to_string()))?;
        self.target_region.validate().map_err(|e| e.nested("target_region"))?;
        self.start.validate().map_err(|e| e.nested("start"))?;
        self.widget.validate().map_err(|e| e.nested("widget"))?;
        self.agent.validate().map_err(|e| e.nested("agent"))?;
        for (name, v) in [
            ("gain_log_std", self.jitter.gain_log_std),
            ("acuity_log_std", self.jitter.acuity_log_std),
            ("threshold_log_std", self.jitter.threshold_log_std),
        ] {
            require_non_negative(name, v).map_err(|e| e.nested("jitter"))?;
        }
        require_positive("timeout_s", self.timeout_s)?;
        Ok(())
    }

    pub fn expected_records(&self) -> usize {
        self.n_subjects as usize * self.conditions.len() * self.trials_per_condition as usize
    }

    /// Agent parameters for one subject after between-subject jitter.
    pub fn subject_params(&self, subject: u32) -> AgentParams {
        let mut params = self.agent.clone();
        if !self.jitter.enabled {
            return params;
        }
        let mut rng = rng_from_seed(derive_seed(self.master_seed, &[0, subject as u64]));
        let mut factor = |std: f64| {
            let z: f64 = rng.sample(StandardNormal);
            (std * z).exp()
        };
        let gain = factor(self.jitter.gain_log_std);
        let acuity = factor(self.jitter.acuity_log_std);
        let threshold = factor(self.jitter.threshold_log_std);
        params.gain_pos *= gain;
        params.gain_rot *= gain;
        for a in params.perception.values_mut() {
            a.pos *= acuity;
            a.rot *= acuity;
        }
        params.confirm_threshold_pos *= threshold;
        params.confirm_threshold_rot *= threshold;
        params
    }
}

pub(crate) fn condition_code(c: Condition) -> u64 {
    Condition::ALL.iter().position(|&x| x == c).expect("known condition") as u64
}

/// Everything needed to execute one trial independently.
#[derive(Debug, Clone)]
pub struct PlannedTrial {
    pub key: TrialKey,
    /// Position of the trial in the subject's session, from 0.
    pub order: u32,
    pub target: Pose,
    pub start: Pose,
    pub params: AgentParams,
}

/// Lays out every trial of the experiment in session order.
pub fn plan_trials(cfg: &ExperimentConfig) -> Result<Vec<PlannedTrial>, ConfigError> {
    cfg.validate()?;
    let square =
        balanced_latin_square(cfg.conditions.len()).map_err(|e| ConfigError::new("conditions", e.to_string()))?;
    let mut plan = Vec::with_capacity(cfg.expected_records());
    for subject in 0..cfg.n_subjects {
        let base = cfg.subject_params(subject);
        let row = &square[subject as usize % square.len()];
        let mut order = 0;
        for &ci in row {
            let condition = cfg.conditions[ci];
            let code = condition_code(condition);
            let s = subject as u64;
            let mut target_rng = rng_from_seed(derive_seed(cfg.master_seed, &[1, s, code]));
            let targets = generate_targets(&cfg.target_region, cfg.trials_per_condition as usize, &mut target_rng);
            let mut start_rng = rng_from_seed(derive_seed(cfg.master_seed, &[2, s, code]));
            for (trial, target) in targets.into_iter().enumerate() {
                let start = cfg.start.sample(&target, &mut start_rng);
                let params =
                    AgentParams { seed: derive_seed(cfg.master_seed, &[3, s, code, trial as u64]), ..base.clone() };
                plan.push(PlannedTrial {
                    key: TrialKey { subject, condition, trial: trial as u32 },
                    order,
                    target,
                    start,
                    params,
                });
                order += 1;
            }
        }
    }
    Ok(plan)
}

pub fn execute(trial: &PlannedTrial, cfg: &ExperimentConfig) -> TrialRecord {
    run_trial(trial.key, &trial.target, &trial.start, &trial.params, &cfg.widget, cfg.timeout_s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub config: ExperimentConfig,
    /// Sorted by subject, then session order.
    pub records: Vec<TrialRecord>,
    /// Trials that aborted, as `subject/condition/trial: message`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// Runs the whole experiment on `workers` threads. Output does not depend on
/// the worker count.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<Dataset, ExperimentError> {
    let plan = plan_trials(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let outcomes: Vec<(u32, u32, Result<TrialRecord, String>)> = pool.install(|| {
        plan.par_iter()
            .map(|t| {
                let result = catch_unwind(AssertUnwindSafe(|| execute(t, cfg))).map_err(|p| {
                    let msg = p
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| p.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "panic".to_owned());
                    format!("{}/{}/{}: {msg}", t.key.subject, t.key.condition, t.key.trial)
                });
                (t.key.subject, t.order, result)
            })
            .collect()
    });
    let mut outcomes = outcomes;
    outcomes.sort_by_key(|(s, o, _)| (*s, *o));
    let mut records = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (_, _, r) in outcomes {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(e),
        }
    }
    Ok(Dataset { config: cfg.clone(), records, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    fn adjacency_counts(sq: &[Vec<usize>]) -> Vec<Vec<usize>> {
        let n = sq.len();
        let mut counts = vec![vec![0; n]; n];
        for row in sq {
            for w in row.windows(2) {
                counts[w[0]][w[1]] += 1;
            }
        }
        counts
    }

    #[test]
    fn square_examples() {
        let sq4 = balanced_latin_square(4).unwrap();
        assert_eq!(sq4[0], vec![0, 1, 3, 2]);
        assert_eq!(balanced_latin_square(2).unwrap(), vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(balanced_latin_square(3), Err(LatinSquareError::Odd(3)));
        assert_eq!(balanced_latin_square(1), Err(LatinSquareError::TooSmall(1)));
    }

    #[test]
    fn square_balance_for_even_sizes() {
        for n in (2..=12).step_by(2) {
            let sq = balanced_latin_square(n).unwrap();
            for row in &sq {
                let mut r = row.clone();
                r.sort_unstable();
                assert_eq!(r, (0..n).collect::<Vec<_>>());
            }
            for col in 0..n {
                let mut c: Vec<_> = sq.iter().map(|r| r[col]).collect();
                c.sort_unstable();
                assert_eq!(c, (0..n).collect::<Vec<_>>());
            }
            let adj = adjacency_counts(&sq);
            for (a, row) in adj.iter().enumerate() {
                for (b, &count) in row.iter().enumerate() {
                    assert_eq!(count, usize::from(a != b), "n={n} pair ({a},{b})");
                }
            }
        }
    }

    #[test]
    fn targets_edge_cases() {
        let mut rng = SimRng::seed_from_u64(1);
        assert!(generate_targets(&TargetRegion::default(), 0, &mut rng).is_empty());
        let flat = TargetRegion { max_tilt_deg: 0.0, ..TargetRegion::default() };
        for t in generate_targets(&flat, 50, &mut rng) {
            assert_eq!(t.bit_axis(), Vec3::Y);
        }
        let region = TargetRegion::default();
        for t in generate_targets(&region, 500, &mut rng) {
            let tilt = t.bit_axis().dot(Vec3::Y).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(tilt <= region.max_tilt_deg + 1e-9);
            let p = t.position;
            assert!(p.x >= region.min.x && p.x <= region.max.x);
            assert!(p.y >= region.min.y && p.y <= region.max.y);
            assert!(p.z >= region.min.z && p.z <= region.max.z);
        }
    }

    #[test]
    fn target_mean_matches_box_center() {
        let region =
            TargetRegion { min: Vec3::new(80.0, 30.0, 180.0), max: Vec3::new(120.0, 70.0, 220.0), max_tilt_deg: 30.0 };
        let mut rng = SimRng::seed_from_u64(2024);
        let targets = generate_targets(&region, 10_000, &mut rng);
        let sum = targets.iter().fold(Vec3::ZERO, |acc, t| acc + t.position);
        let mean = sum * (1.0 / targets.len() as f64);
        let c = region.center();
        for (m, c) in mean.to_array().iter().zip(c.to_array()) {
            assert!((m - c).abs() <= 0.01 * c.abs(), "{m} vs {c}");
        }
    }

    #[test]
    fn start_pose_respects_ranges() {
        let spec = StartSpec::default();
        let mut rng = SimRng::seed_from_u64(8);
        let target = generate_targets(&TargetRegion::default(), 1, &mut rng)[0];
        for _ in 0..200 {
            let s = spec.sample(&target, &mut rng);
            let e = crate::geometry::compute_error(&s, &target);
            assert!(e.pm >= spec.min_distance - 1e-9 && e.pm <= spec.max_distance + 1e-9);
            assert!(e.rm >= spec.min_angle_deg - 1e-6 && e.rm <= spec.max_angle_deg + 1e-6);
        }
    }

    #[test]
    fn config_errors_name_fields() {
        let cfg = ExperimentConfig { trials_per_condition: 0, ..Default::default() };
        assert_eq!(cfg.validate().unwrap_err().field, "trials_per_condition");
        let mut cfg = ExperimentConfig::default();
        cfg.widget.mt_rot = 0.1;
        assert_eq!(cfg.validate().unwrap_err().field, "widget.tt_rot");
        let mut cfg = ExperimentConfig::default();
        cfg.target_region.max.y = cfg.target_region.min.y;
        assert_eq!(cfg.validate().unwrap_err().field, "target_region.max");
        let cfg = ExperimentConfig {
            conditions: vec![Condition::Dwta, Condition::Dwep, Condition::EntryPoint],
            ..Default::default()
        };
        assert_eq!(cfg.validate().unwrap_err().field, "conditions");
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn small_experiment_cardinality_and_order() {
        let cfg = ExperimentConfig { n_subjects: 4, trials_per_condition: 2, ..Default::default() };
        let ds = run_experiment(&cfg, 2).unwrap();
        assert_eq!(ds.records.len(), 4 * 4 * 2);
        assert!(ds.failures.is_empty());
        // subject 1 follows Latin-square row 1: [1, 2, 0, 3]
        let order: Vec<Condition> =
            ds.records.iter().filter(|r| r.subject == 1).map(|r| r.condition).step_by(2).collect();
        assert_eq!(order, vec![Condition::TargetAxis, Condition::Dwep, Condition::EntryPoint, Condition::Dwta]);
    }

    #[test]
    fn jitter_is_per_subject_and_deterministic() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.subject_params(3), cfg.subject_params(3));
        assert_ne!(cfg.subject_params(3).gain_pos, cfg.subject_params(4).gain_pos);
        let off =
            ExperimentConfig { jitter: JitterSpec { enabled: false, ..Default::default() }, ..Default::default() };
        assert_eq!(off.subject_params(3), off.agent);
    }
}
