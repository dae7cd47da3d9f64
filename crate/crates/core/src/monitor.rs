//! Post-hoc checks of a recorded trajectory against the closed-loop guarantees.
//!
//! Monitors read the trace at its recorded resolution. Each check reports
//! `pass`, `fail` or `not_applicable`; only `fail` sinks the overall verdict.

use serde::{Deserialize, Serialize};

use crate::controller::{settling_bounds, AgentControllerParams, ConstraintSpec, ControllerVariant, UncertaintyBounds};
use crate::plant::{bounds_check, Plant, PlantError};
use crate::sim::TrajectoryTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl CheckStatus {
    fn from_pass(pass: bool) -> Self {
        if pass {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        }
    }

    pub fn is_fail(self) -> bool {
        self == CheckStatus::Fail
    }

    fn and(self, other: CheckStatus) -> CheckStatus {
        match (self, other) {
            (CheckStatus::Fail, _) | (_, CheckStatus::Fail) => CheckStatus::Fail,
            (CheckStatus::NotApplicable, CheckStatus::NotApplicable) => CheckStatus::NotApplicable,
            _ => CheckStatus::Pass,
        }
    }
}

/// Worst-case true plant values across all agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantExtremes {
    pub b_max: f64,
    pub tau_max: f64,
    pub phi_max: f64,
}

impl PlantExtremes {
    pub fn of(plants: &[Plant], horizon: f64) -> Self {
        plants.iter().fold(
            PlantExtremes {
                b_max: 0.0,
                tau_max: 0.0,
                phi_max: 0.0,
            },
            |acc, p| {
                let (b, tau, phi) = p.true_extremes(horizon);
                PlantExtremes {
                    b_max: acc.b_max.max(b),
                    tau_max: acc.tau_max.max(tau),
                    phi_max: acc.phi_max.max(phi),
                }
            },
        )
    }

    /// Largest velocity change one step of length `dt` can produce:
    /// `dt (b_max u_max + tau_max + phi_max v_bar)`.
    pub fn velocity_tolerance(&self, c: &ConstraintSpec, dt: f64) -> f64 {
        dt * (self.b_max * c.u_max + self.tau_max + self.phi_max * c.v_bar())
    }

    /// Chattering allowance on the tracking error once it has settled.
    /// Identical to the velocity tolerance: the damping load also moves `e`
    /// within a step.
    pub fn tracking_tolerance(&self, c: &ConstraintSpec, dt: f64) -> f64 {
        self.velocity_tolerance(c, dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSection {
    pub u_max: f64,
    /// Samples with `|u| > u_max`, compared without tolerance.
    pub input_violations: usize,
    pub max_abs_u: f64,
    pub input_status: CheckStatus,
    pub v_min: f64,
    pub v_max: f64,
    /// Largest overshoot of the velocity window; zero when never left.
    pub velocity_excess: f64,
    pub velocity_tolerance: f64,
    pub velocity_status: CheckStatus,
}

/// Input check is exact; velocity check allows `tol`.
pub fn verify_constraints(trace: &TrajectoryTrace, c: &ConstraintSpec, tol: f64) -> ConstraintSection {
    let mut input_violations = 0;
    let mut max_abs_u: f64 = 0.0;
    for u in trace.u.iter().flatten() {
        if !(u.abs() <= c.u_max) {
            input_violations += 1;
        }
        max_abs_u = max_abs_u.max(u.abs());
    }
    let velocity_excess = trace
        .v
        .iter()
        .flatten()
        .map(|&v| (v - c.v_max).max(c.v_min - v).max(0.0))
        .fold(0.0, f64::max);
    ConstraintSection {
        u_max: c.u_max,
        input_violations,
        max_abs_u,
        input_status: CheckStatus::from_pass(input_violations == 0),
        v_min: c.v_min,
        v_max: c.v_max,
        velocity_excess,
        velocity_tolerance: tol,
        velocity_status: CheckStatus::from_pass(velocity_excess <= tol),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTracking {
    pub agent: usize,
    /// First recorded time with `|e| <= z`.
    pub entry_time: Option<f64>,
    pub t1: f64,
    /// Absent when the sliding margin `mu` is not positive.
    pub t2: Option<f64>,
    pub entry_ok: bool,
    /// Largest `|e| - z` over samples at or after `t1`.
    pub max_excursion_after_t1: Option<f64>,
    pub stays_ok: bool,
    /// Largest `|e|` over samples at or after `t1 + t2`.
    pub max_abs_e_after_settle: Option<f64>,
    pub settle_ok: Option<bool>,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingSection {
    pub epsilon_e: f64,
    pub agents: Vec<AgentTracking>,
    pub status: CheckStatus,
}

impl TrackingSection {
    pub fn entry_times(&self) -> Vec<Option<f64>> {
        self.agents.iter().map(|a| a.entry_time).collect()
    }

    /// `max_i (t1 + t2)` when every agent has both bounds.
    pub fn settle_time(&self) -> Option<f64> {
        self.agents
            .iter()
            .map(|a| a.t2.map(|t2| a.t1 + t2))
            .try_fold(0.0f64, |acc, t| t.map(|t| acc.max(t)))
    }
}

/// Inputs the tracking monitor needs besides the trace.
#[derive(Debug, Clone, Copy)]
pub struct TrackingSetup<'a> {
    pub variant: ControllerVariant,
    pub params: &'a [AgentControllerParams],
    pub bounds: &'a UncertaintyBounds,
    pub constraints: &'a ConstraintSpec,
    pub degrees: &'a [f64],
    /// Allowance for sgn chattering once `e` has settled.
    pub epsilon_e: f64,
    /// Recorded sample spacing; entry times are only known to this resolution.
    pub sample_interval: f64,
}

/// Checks entry into `|e| <= z` by `t1`, residence there afterwards (within
/// `epsilon_e`), and `|e| <= epsilon_e` after `t1 + t2`.
pub fn tracking_monitor(trace: &TrajectoryTrace, s: &TrackingSetup<'_>) -> TrackingSection {
    let agents = (0..trace.n_agents())
        .map(|i| {
            let p = &s.params[i];
            let drive = s.bounds.b_min * (s.constraints.u_max - p.alpha);
            let width = if s.variant.is_centered() {
                s.constraints.half_width()
            } else {
                s.constraints.v_max
            };
            let t1 = (width + p.m - p.z) / drive;
            let t2 = settling_bounds(s.variant, p, s.bounds, s.constraints, s.degrees[i])
                .ok()
                .map(|b| b.t2);
            let e = &trace.e[i];
            let entry = e.iter().position(|v| v.abs() <= p.z);
            let entry_time = entry.map(|k| trace.times[k]);
            let horizon = trace.times.last().copied().unwrap_or(0.0);
            let entry_ok = match entry_time {
                Some(t) => t <= t1 + s.sample_interval,
                None => t1 > horizon,
            };
            let after = |t0: f64| -> Option<f64> {
                trace
                    .times
                    .iter()
                    .zip(e)
                    .filter(|(t, _)| **t >= t0)
                    .map(|(_, v)| v.abs())
                    .reduce(f64::max)
            };
            let max_excursion_after_t1 = after(t1).map(|m| m - p.z);
            let stays_ok = max_excursion_after_t1.is_none_or(|x| x <= s.epsilon_e);
            let max_abs_e_after_settle = t2.and_then(|t2| after(t1 + t2));
            let settle_ok = max_abs_e_after_settle.map(|m| m <= s.epsilon_e);
            let status = CheckStatus::from_pass(entry_ok && stays_ok && settle_ok.unwrap_or(true));
            AgentTracking {
                agent: i + 1,
                entry_time,
                t1,
                t2,
                entry_ok,
                max_excursion_after_t1,
                stays_ok,
                max_abs_e_after_settle,
                settle_ok,
                status,
            }
        })
        .collect::<Vec<_>>();
    let status = agents
        .iter()
        .fold(CheckStatus::NotApplicable, |acc, a| acc.and(a.status));
    TrackingSection {
        epsilon_e: s.epsilon_e,
        agents,
        status,
    }
}

/// Earliest recorded time after which every `|e_i| <= eps` holds to the end.
pub fn observed_tracking_end(trace: &TrajectoryTrace, eps: f64) -> Option<f64> {
    let settled = |k: usize| trace.e.iter().all(|e| e[k].abs() <= eps);
    let mut first = None;
    for k in (0..trace.len()).rev() {
        if settled(k) {
            first = Some(trace.times[k]);
        } else {
            break;
        }
    }
    first
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AfterSource {
    /// `max_i (t1 + t2)`.
    SettlingBound,
    /// Observed end of the tracking phase.
    Observed,
    /// Supplied by the caller.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSection {
    pub after_seconds: Option<f64>,
    pub after_source: Option<AfterSource>,
    pub delta: f64,
    pub samples_checked: usize,
    /// Largest `V(t_{k+1}) - V(t_k)` among checked samples.
    pub max_increase: f64,
    pub violations: usize,
    pub status: CheckStatus,
}

/// Verifies `V(t_{k+1}) <= V(t_k) + delta` for `t_k >= after`, with
/// `delta = 1e-8 max(1, V(after))`. Not applicable when `V` is undefined.
pub fn lyapunov_monitor(trace: &TrajectoryTrace, after: Option<f64>) -> LyapunovSection {
    let not_applicable = |after_seconds| LyapunovSection {
        after_seconds,
        after_source: None,
        delta: 0.0,
        samples_checked: 0,
        max_increase: 0.0,
        violations: 0,
        status: CheckStatus::NotApplicable,
    };
    let v = &trace.lyapunov;
    let Some(after) = after else {
        return not_applicable(None);
    };
    if v.iter().any(|x| x.is_nan()) {
        return not_applicable(Some(after));
    }
    let Some(start) = trace.times.iter().position(|&t| t >= after) else {
        return not_applicable(Some(after));
    };
    let delta = 1e-8 * v[start].max(1.0);
    let mut max_increase = f64::NEG_INFINITY;
    let mut violations = 0;
    for k in start..v.len().saturating_sub(1) {
        let inc = v[k + 1] - v[k];
        max_increase = max_increase.max(inc);
        if inc > delta {
            violations += 1;
        }
    }
    let samples_checked = v.len() - start;
    LyapunovSection {
        after_seconds: Some(after),
        after_source: Some(AfterSource::Explicit),
        delta,
        samples_checked,
        max_increase: if samples_checked > 1 { max_increase } else { 0.0 },
        violations,
        status: CheckStatus::from_pass(violations == 0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSection {
    pub epsilon: f64,
    /// First recorded time after which the spread stays below `epsilon`.
    pub consensus_time: Option<f64>,
    pub final_spread: f64,
    pub v_target: f64,
    /// `max_i |v_i(t_end) - v_target|`.
    pub final_velocity_error: f64,
}

/// Descriptive convergence summary; a finite horizon proves nothing either way.
pub fn consensus_summary(trace: &TrajectoryTrace, epsilon: f64, v_target: f64) -> ConsensusSection {
    let mut consensus_time = None;
    for k in (0..trace.len()).rev() {
        if trace.spread[k] < epsilon {
            consensus_time = Some(trace.times[k]);
        } else {
            break;
        }
    }
    let final_velocity_error = trace
        .v
        .iter()
        .filter_map(|v| v.last())
        .map(|v| (v - v_target).abs())
        .fold(0.0, f64::max);
    ConsensusSection {
        epsilon,
        consensus_time,
        final_spread: trace.spread.last().copied().unwrap_or(f64::NAN),
        v_target,
        final_velocity_error,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPlantBounds {
    pub agent: usize,
    pub b_min: f64,
    pub b_max: f64,
    pub tau_max: f64,
    pub phi: f64,
    /// The model's own declared bounds hold over the horizon.
    pub declared_ok: bool,
    /// The realized values respect the scenario's uncertainty bounds.
    pub scenario_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantBoundsSection {
    pub agents: Vec<AgentPlantBounds>,
    pub status: CheckStatus,
}

/// Grid density used when sampling time-varying models.
const BOUNDS_SAMPLES: usize = 2001;

pub fn plant_bounds_monitor(plants: &[Plant], bounds: &UncertaintyBounds, horizon: f64) -> PlantBoundsSection {
    let agents: Vec<AgentPlantBounds> = plants
        .iter()
        .enumerate()
        .map(|(i, plant)| {
            let (b_max, tau_max, phi) = plant.true_extremes(horizon);
            let (b_min, declared_ok) = match plant {
                Plant::DoubleIntegrator(model) => {
                    let declared_ok = match bounds_check(model, horizon, BOUNDS_SAMPLES) {
                        Ok(_) => true,
                        Err(PlantError::BoundViolation(_)) => false,
                        Err(_) => false,
                    };
                    (model.b_min(horizon), declared_ok)
                }
                Plant::Manipulator(p) => (p.b(), true),
            };
            let scenario_ok = b_min >= bounds.b_min && tau_max <= bounds.tau_max && phi <= bounds.phi_max;
            AgentPlantBounds {
                agent: i + 1,
                b_min,
                b_max,
                tau_max,
                phi,
                declared_ok,
                scenario_ok,
            }
        })
        .collect();
    let status = CheckStatus::from_pass(agents.iter().all(|a| a.declared_ok && a.scenario_ok));
    PlantBoundsSection { agents, status }
}

/// Everything the monitors found about one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub passed: bool,
    pub constraints: ConstraintSection,
    pub tracking: TrackingSection,
    pub lyapunov: LyapunovSection,
    pub consensus: ConsensusSection,
    pub plant_bounds: PlantBoundsSection,
}

impl MonitorReport {
    pub fn assemble(
        constraints: ConstraintSection,
        tracking: TrackingSection,
        lyapunov: LyapunovSection,
        consensus: ConsensusSection,
        plant_bounds: PlantBoundsSection,
    ) -> Self {
        let passed = ![
            constraints.input_status,
            constraints.velocity_status,
            tracking.status,
            lyapunov.status,
            plant_bounds.status,
        ]
        .iter()
        .any(|s| s.is_fail());
        Self {
            passed,
            constraints,
            tracking,
            lyapunov,
            consensus,
            plant_bounds,
        }
    }

    /// Names of the failing checks.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.constraints.input_status.is_fail() {
            out.push("input constraint");
        }
        if self.constraints.velocity_status.is_fail() {
            out.push("velocity constraint");
        }
        if self.tracking.status.is_fail() {
            out.push("tracking");
        }
        if self.lyapunov.status.is_fail() {
            out.push("lyapunov monotonicity");
        }
        if self.plant_bounds.status.is_fail() {
            out.push("plant bounds");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(times: &[f64], u: &[f64], v: &[f64], e: &[f64], lyap: &[f64]) -> TrajectoryTrace {
        TrajectoryTrace {
            times: times.to_vec(),
            x: vec![vec![0.0; times.len()]],
            v: vec![v.to_vec()],
            u: vec![u.to_vec()],
            r: vec![vec![0.0; times.len()]],
            e: vec![e.to_vec()],
            zeta: vec![vec![0.0; times.len()]],
            lyapunov: lyap.to_vec(),
            spread: vec![0.0; times.len()],
        }
    }

    #[test]
    fn injected_input_violation_is_counted() {
        let t = trace(&[0.0, 1.0, 2.0], &[0.0, 2.5, 2.0], &[0.0; 3], &[0.0; 3], &[0.0; 3]);
        let c = ConstraintSpec::symmetric(1.0, 2.0);
        let s = verify_constraints(&t, &c, 1e-3);
        assert_eq!(s.input_violations, 1);
        assert_eq!(s.input_status, CheckStatus::Fail);
        assert_eq!(s.max_abs_u, 2.5);
    }

    #[test]
    fn velocity_at_bound_is_inclusive() {
        let t = trace(&[0.0, 1.0], &[0.0; 2], &[1.0, -1.0], &[0.0; 2], &[0.0; 2]);
        let s = verify_constraints(&t, &ConstraintSpec::symmetric(1.0, 2.0), 0.0);
        assert_eq!(s.velocity_excess, 0.0);
        assert_eq!(s.velocity_status, CheckStatus::Pass);

        let t = trace(&[0.0, 1.0], &[0.0; 2], &[1.002, -1.0], &[0.0; 2], &[0.0; 2]);
        let s = verify_constraints(&t, &ConstraintSpec::symmetric(1.0, 2.0), 1e-3);
        assert!((s.velocity_excess - 0.002).abs() < 1e-12);
        assert_eq!(s.velocity_status, CheckStatus::Fail);
    }

    #[test]
    fn lyapunov_monitor_scope() {
        let times = [0.0, 1.0, 2.0, 3.0];
        // Rises before `after`, flat afterwards.
        let t = trace(&times, &[0.0; 4], &[0.0; 4], &[0.0; 4], &[1.0, 2.0, 2.0, 1.5]);
        assert_eq!(lyapunov_monitor(&t, Some(1.0)).status, CheckStatus::Pass);
        let r = lyapunov_monitor(&t, Some(0.0));
        assert_eq!(r.status, CheckStatus::Fail);
        assert_eq!(r.violations, 1);
        let zero = trace(&times, &[0.0; 4], &[0.0; 4], &[0.0; 4], &[0.0; 4]);
        assert_eq!(lyapunov_monitor(&zero, Some(0.0)).status, CheckStatus::Pass);
        let nan = trace(&times, &[0.0; 4], &[0.0; 4], &[0.0; 4], &[f64::NAN; 4]);
        assert_eq!(lyapunov_monitor(&nan, Some(0.0)).status, CheckStatus::NotApplicable);
    }

    #[test]
    fn tracking_entry_at_zero() {
        let t = trace(&[0.0, 1.0], &[0.0; 2], &[0.0; 2], &[0.0; 2], &[0.0; 2]);
        let params = [AgentControllerParams {
            m: 0.9,
            alpha: 1.8,
            z: 0.1,
            k: 0.2,
            gamma: 1.5,
        }];
        let bounds = UncertaintyBounds {
            b_min: 1.0,
            tau_max: 0.5,
            phi_max: 0.0,
        };
        let c = ConstraintSpec::symmetric(1.0, 2.0);
        let s = tracking_monitor(
            &t,
            &TrackingSetup {
                variant: ControllerVariant::SymmetricTanh,
                params: &params,
                bounds: &bounds,
                constraints: &c,
                degrees: &[1.0],
                epsilon_e: 1e-3,
                sample_interval: 1.0,
            },
        );
        assert_eq!(s.agents[0].entry_time, Some(0.0));
        assert!((s.agents[0].t1 - 9.0).abs() < 1e-12);
        assert_eq!(s.status, CheckStatus::Pass);
    }

    #[test]
    fn observed_tracking_end_finds_last_excursion() {
        let t = trace(
            &[0.0, 1.0, 2.0, 3.0],
            &[0.0; 4],
            &[0.0; 4],
            &[0.5, 0.0, 0.2, 0.0],
            &[0.0; 4],
        );
        assert_eq!(observed_tracking_end(&t, 0.1), Some(3.0));
        assert_eq!(observed_tracking_end(&t, 0.3), Some(1.0));
    }

    #[test]
    fn consensus_summary_examples() {
        let mut t = trace(&[0.0, 1.0, 2.0], &[0.0; 3], &[0.0, 0.0, 1.005], &[0.0; 3], &[0.0; 3]);
        t.spread = vec![1.0, 0.001, 0.002];
        let s = consensus_summary(&t, 0.01, 1.0);
        assert_eq!(s.consensus_time, Some(1.0));
        assert!((s.final_velocity_error - 0.005).abs() < 1e-12);
    }
}
