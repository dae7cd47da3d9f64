//! Scenario files: loading, validation, execution and the built-in presets.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{
    check_feasibility, settling_bounds, AgentControllerParams, ConstraintSpec, ControllerError, ControllerVariant,
    FeasibilityReport, SettlingBounds, UncertaintyBounds,
};
use crate::graph::{DirectedGraph, EdgeSpec, GraphError, GraphSpec};
use crate::monitor::{
    consensus_summary, lyapunov_monitor, observed_tracking_end, plant_bounds_monitor, tracking_monitor,
    verify_constraints, AfterSource, MonitorReport, PlantExtremes, TrackingSetup,
};
use crate::plant::{ManipulatorParams, Plant, PlantError, PlantSpec, UncertaintyKind, UncertaintyModelSpec};
use crate::sim::{AgentState, ClosedLoop, Integrator, SimConfig, SimError, TrajectoryTrace};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl From<serde_json::Error> for ScenarioError {
    fn from(e: serde_json::Error) -> Self {
        ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

/// Everything needed to reproduce one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub graph: GraphSpec,
    pub variant: ControllerVariant,
    pub constraints: ConstraintSpec,
    pub bounds: UncertaintyBounds,
    pub params: Vec<AgentControllerParams>,
    pub plants: Vec<PlantSpec>,
    /// Filter states default to the agent's own position when omitted.
    pub initial_states: Vec<AgentState>,
    pub sim: SimConfig,
    /// Seeds every noise model that does not carry its own seed.
    #[serde(default)]
    pub seed: u64,
}

/// Per-agent feasibility and settling bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentFeasibility {
    pub agent: usize,
    /// Absent for variants whose conditions do not involve the graph.
    pub in_degree: Option<f64>,
    pub all_pass: bool,
    pub conditions: FeasibilityReport,
    pub settling: Option<SettlingBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settling_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFeasibility {
    pub scenario: String,
    pub variant: ControllerVariant,
    /// `b_min u_max - tau_max [- phi_max v_bar]`.
    pub controllability_margin: f64,
    pub all_pass: bool,
    pub agents: Vec<AgentFeasibility>,
}

impl ScenarioFeasibility {
    /// `(agent, condition)` for every failing inequality.
    pub fn warnings(&self) -> Vec<(usize, String)> {
        self.agents
            .iter()
            .flat_map(|a| a.conditions.failures().map(move |c| (a.agent, c.condition.clone())))
            .collect()
    }
}

/// Trace, monitors and feasibility of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: TrajectoryTrace,
    pub monitor: MonitorReport,
    pub feasibility: ScenarioFeasibility,
}

impl Scenario {
    pub fn from_json_str(s: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Pretty JSON with fields in declaration order; stable under
    /// parse/serialize round trips.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn n(&self) -> usize {
        self.graph.n
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, dt: Option<f64>, t_end: Option<f64>, seed: Option<u64>) -> Self {
        if let Some(dt) = dt {
            self.sim.dt_seconds = dt;
        }
        if let Some(t_end) = t_end {
            self.sim.t_end_seconds = t_end;
        }
        if let Some(seed) = seed {
            self.seed = seed;
        }
        self
    }

    /// Checks structure and every load-time assumption; returns the graph.
    pub fn validate(&self) -> Result<DirectedGraph, ScenarioError> {
        let graph = DirectedGraph::try_from(&self.graph)?;
        let n = graph.n();
        for (what, len) in [
            ("params", self.params.len()),
            ("plants", self.plants.len()),
            ("initial_states", self.initial_states.len()),
        ] {
            if len != n {
                return Err(ScenarioError::Invalid(format!(
                    "{what} has {len} entries for {n} agents"
                )));
            }
        }
        self.sim.validate()?;
        self.constraints.validate()?;
        if self.variant.requires_symmetric_window() && !self.constraints.is_symmetric() {
            return Err(ScenarioError::Invalid(format!(
                "variant {:?} needs a symmetric velocity window (v_min = -v_max), got [{}, {}]",
                self.variant, self.constraints.v_min, self.constraints.v_max
            )));
        }
        self.bounds.validate(self.variant, &self.constraints)?;
        for p in &self.params {
            p.validate()?;
        }
        if let Some(m0) = self.params.first().map(|p| p.m) {
            if self.params.iter().any(|p| p.m != m0) {
                return Err(ScenarioError::Invalid("m must be shared by all agents".into()));
            }
        }
        if self.variant.requires_strong_connectivity() {
            if !graph.is_strongly_connected() {
                return Err(ScenarioError::AssumptionViolated(format!(
                    "variant {:?} requires a strongly connected graph",
                    self.variant
                )));
            }
        } else if !graph.has_spanning_tree() {
            return Err(ScenarioError::AssumptionViolated(format!(
                "variant {:?} requires a graph containing a directed spanning tree",
                self.variant
            )));
        }
        for (i, st) in self.initial_states.iter().enumerate() {
            if !(st.x.is_finite() && st.v.is_finite() && st.x_hat.is_none_or(f64::is_finite)) {
                return Err(ScenarioError::Invalid(format!(
                    "initial state of agent {} is not finite",
                    i + 1
                )));
            }
            if !self.constraints.contains(st.v) {
                return Err(ScenarioError::AssumptionViolated(format!(
                    "initial velocity assumption: agent {} starts at v = {} outside [{}, {}]",
                    i + 1,
                    st.v,
                    self.constraints.v_min,
                    self.constraints.v_max
                )));
            }
        }
        for (i, plant) in self.plants.iter().enumerate() {
            if let PlantSpec::DoubleIntegrator(m) = plant {
                if m.declared_b_min < self.bounds.b_min || m.declared_tau_max > self.bounds.tau_max {
                    return Err(ScenarioError::Invalid(format!(
                        "plant {} declares b >= {}, |tau| <= {}, weaker than the scenario bounds b_min = {}, tau_max = {}",
                        i + 1,
                        m.declared_b_min,
                        m.declared_tau_max,
                        self.bounds.b_min,
                        self.bounds.tau_max
                    )));
                }
            }
        }
        Ok(graph)
    }

    /// Feasibility of every agent's parameters against the variant's
    /// condition set, plus settling bounds where they exist.
    pub fn feasibility(&self, graph: &DirectedGraph) -> ScenarioFeasibility {
        let degrees = graph.in_degrees();
        let uses_degree = !self.variant.uses_filter();
        let agents: Vec<AgentFeasibility> = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d = if uses_degree { degrees[i] } else { f64::NAN };
                let conditions = check_feasibility(self.variant, p, &self.bounds, &self.constraints, d);
                let (settling, settling_error) =
                    match settling_bounds(self.variant, p, &self.bounds, &self.constraints, d) {
                        Ok(b) => (Some(b), None),
                        Err(e) => (None, Some(e.to_string())),
                    };
                AgentFeasibility {
                    agent: i + 1,
                    in_degree: uses_degree.then_some(degrees[i]),
                    all_pass: conditions.all_pass(),
                    conditions,
                    settling,
                    settling_error,
                }
            })
            .collect();
        ScenarioFeasibility {
            scenario: self.name.clone(),
            variant: self.variant,
            controllability_margin: self.bounds.controllability_margin(self.variant, &self.constraints),
            all_pass: agents.iter().all(|a| a.all_pass),
            agents,
        }
    }

    fn plant_seed(&self, agent: usize) -> u64 {
        self.seed
            .wrapping_add((agent as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    /// Runtime plants, with scenario-derived seeds filled in.
    pub fn build_plants(&self) -> Result<Vec<Plant>, ScenarioError> {
        self.plants
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let spec = match spec {
                    PlantSpec::DoubleIntegrator(m) if m.kind == UncertaintyKind::Noise && m.seed.is_none() => {
                        PlantSpec::DoubleIntegrator(UncertaintyModelSpec {
                            seed: Some(self.plant_seed(i)),
                            ..m.clone()
                        })
                    }
                    other => other.clone(),
                };
                Ok(Plant::from_spec(&spec, self.sim.dt_seconds, self.sim.t_end_seconds)?)
            })
            .collect()
    }

    pub fn initial(&self) -> Vec<AgentState> {
        self.initial_states
            .iter()
            .map(|s| AgentState {
                x_hat: if self.variant.uses_filter() {
                    Some(s.x_hat.unwrap_or(s.x))
                } else {
                    s.x_hat
                },
                ..*s
            })
            .collect()
    }

    /// Validates and wires up the closed loop.
    pub fn build(&self) -> Result<(ClosedLoop, ScenarioFeasibility), ScenarioError> {
        let graph = self.validate()?;
        let feasibility = self.feasibility(&graph);
        let system = ClosedLoop::new(
            graph,
            self.variant,
            self.constraints,
            self.params.clone(),
            self.build_plants()?,
        )?;
        Ok((system, feasibility))
    }

    /// Validates, simulates and monitors.
    pub fn run(&self) -> Result<RunOutput, ScenarioError> {
        let (system, feasibility) = self.build()?;
        let trace = system.simulate(&self.initial(), &self.sim)?;
        let monitor = self.monitor(&system, &trace);
        Ok(RunOutput {
            trace,
            monitor,
            feasibility,
        })
    }

    /// Runs every monitor against `trace`.
    pub fn monitor(&self, system: &ClosedLoop, trace: &TrajectoryTrace) -> MonitorReport {
        let horizon = self.sim.t_end_seconds;
        let dt = self.sim.dt_seconds;
        let extremes = PlantExtremes::of(system.plants(), horizon);
        let constraints = verify_constraints(
            trace,
            &self.constraints,
            extremes.velocity_tolerance(&self.constraints, dt),
        );
        let degrees = system.graph().in_degrees();
        let eps_e = extremes.tracking_tolerance(&self.constraints, dt);
        let tracking = tracking_monitor(
            trace,
            &TrackingSetup {
                variant: self.variant,
                params: &self.params,
                bounds: &self.bounds,
                constraints: &self.constraints,
                degrees: &degrees,
                epsilon_e: eps_e,
                sample_interval: self.sim.record_interval(),
            },
        );
        let (after, source) = match tracking.settle_time() {
            Some(t) => (Some(t), AfterSource::SettlingBound),
            None => (observed_tracking_end(trace, eps_e), AfterSource::Observed),
        };
        let mut lyapunov = lyapunov_monitor(trace, after);
        if lyapunov.after_source.is_some() {
            lyapunov.after_source = Some(source);
        }
        let consensus = consensus_summary(trace, self.sim.consensus_epsilon, self.constraints.v_r());
        let plant_bounds = plant_bounds_monitor(system.plants(), &self.bounds, horizon);
        MonitorReport::assemble(constraints, tracking, lyapunov, consensus, plant_bounds)
    }

    /// The same scenario integrated by explicit Euler at step `dt`, recording
    /// at the original sample times.
    pub fn euler_reference(&self, dt: f64) -> Self {
        let ratio = (self.sim.record_interval() / dt).round().max(1.0) as usize;
        let mut s = self.clone();
        s.sim.dt_seconds = dt;
        s.sim.record_stride = ratio;
        s.sim.integrator = Integrator::Euler;
        s
    }
}

/// Which velocity window the reproduction preset uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReproductionCase {
    Symmetric,
    Asymmetric,
}

impl std::str::FromStr for ReproductionCase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "symmetric" => Ok(Self::Symmetric),
            "asymmetric" => Ok(Self::Asymmetric),
            other => Err(format!(
                "unknown case {other:?}; expected \"symmetric\" or \"asymmetric\""
            )),
        }
    }
}

/// Directed ring `1 -> 2 -> ... -> 7 -> 1` plus the chord `1 -> 4`, unit weights.
pub fn reproduction_graph() -> GraphSpec {
    let mut edges: Vec<EdgeSpec> = (1..=7)
        .map(|i| EdgeSpec {
            from: i,
            to: i % 7 + 1,
            weight: 1.0,
        })
        .collect();
    edges.push(EdgeSpec {
        from: 1,
        to: 4,
        weight: 1.0,
    });
    GraphSpec { n: 7, edges }
}

/// Seven single-link manipulators (`b = 1`, `phi = 0.8`, `tau = 0.5`) with
/// `|u| <= 2`, gains `gamma = 1.5`, `alpha = 1.8`, `k = 0.5`, `z = 0.1`.
pub fn reproduction(case: ReproductionCase) -> Scenario {
    let (name, constraints, m, v0) = match case {
        ReproductionCase::Symmetric => ("reproduce-symmetric", ConstraintSpec::symmetric(1.0, 2.0), 0.9, 0.0),
        ReproductionCase::Asymmetric => (
            "reproduce-asymmetric",
            ConstraintSpec {
                v_min: 0.5,
                v_max: 1.5,
                u_max: 2.0,
            },
            0.4,
            0.5,
        ),
    };
    let n = 7;
    Scenario {
        name: name.into(),
        notes: Some(
            "Topology: directed ring 1->2->...->7->1 plus chord 1->4, unit weights. \
             Initial positions -3..3, all initial velocities at the lower end of the window \
             (0 in the symmetric case). Manipulator variant: its reference matches the \
             asymmetric tanh law centered at v_r."
                .into(),
        ),
        graph: reproduction_graph(),
        variant: ControllerVariant::Manipulator,
        constraints,
        bounds: UncertaintyBounds {
            b_min: 1.0,
            tau_max: 0.5,
            phi_max: 0.8,
        },
        params: vec![
            AgentControllerParams {
                m,
                alpha: 1.8,
                z: 0.1,
                k: 0.5,
                gamma: 1.5,
            };
            n
        ],
        plants: vec![PlantSpec::Manipulator(ManipulatorParams::from_normalized(1.0, 0.8, 0.5)); n],
        initial_states: (0..n)
            .map(|i| AgentState {
                x: i as f64 - 3.0,
                v: v0,
                x_hat: None,
            })
            .collect(),
        sim: SimConfig {
            dt_seconds: 1e-3,
            t_end_seconds: 60.0,
            record_stride: 10,
            ..SimConfig::default()
        },
        seed: 0,
    }
}

/// Two agents on a bidirectional edge with nominal double-integrator
/// plants and small gains.
pub fn smoke() -> Scenario {
    Scenario {
        name: "smoke-2-agent".into(),
        notes: None,
        graph: GraphSpec {
            n: 2,
            edges: vec![
                EdgeSpec {
                    from: 1,
                    to: 2,
                    weight: 1.0,
                },
                EdgeSpec {
                    from: 2,
                    to: 1,
                    weight: 1.0,
                },
            ],
        },
        variant: ControllerVariant::SymmetricTanh,
        constraints: ConstraintSpec::symmetric(0.25, 0.5),
        bounds: UncertaintyBounds {
            b_min: 1.0,
            tau_max: 0.0,
            phi_max: 0.0,
        },
        params: vec![
            AgentControllerParams {
                m: 0.2,
                alpha: 0.1,
                z: 0.05,
                k: 0.15,
                gamma: 1.5,
            };
            2
        ],
        plants: vec![PlantSpec::DoubleIntegrator(UncertaintyModelSpec::constant(1.0, 0.0)); 2],
        initial_states: vec![
            AgentState {
                x: 0.1,
                v: 0.0,
                x_hat: None,
            },
            AgentState {
                x: -0.1,
                v: 0.0,
                x_hat: None,
            },
        ],
        sim: SimConfig {
            dt_seconds: 1e-3,
            t_end_seconds: 60.0,
            record_stride: 100,
            ..SimConfig::default()
        },
        seed: 0,
    }
}

/// Largest absolute difference between two traces over positions and
/// velocities at shared sample indices.
pub fn max_state_deviation(a: &TrajectoryTrace, b: &TrajectoryTrace) -> f64 {
    let samples = a.len().min(b.len());
    let mut dev: f64 = 0.0;
    for (sa, sb) in [(&a.x, &b.x), (&a.v, &b.v)] {
        for (ra, rb) in sa.iter().zip(sb) {
            for k in 0..samples {
                dev = dev.max((ra[k] - rb[k]).abs());
            }
        }
    }
    dev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        for s in [
            smoke(),
            reproduction(ReproductionCase::Symmetric),
            reproduction(ReproductionCase::Asymmetric),
        ] {
            let a = s.to_canonical_json();
            let parsed = Scenario::from_json_str(&a).unwrap();
            assert_eq!(parsed, s);
            assert_eq!(parsed.to_canonical_json(), a);
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = Scenario::from_json_str("{\n  \"name\": \"x\",\n  oops\n}").unwrap_err();
        match err {
            ScenarioError::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn initial_velocity_outside_window_is_rejected() {
        let mut s = smoke();
        s.initial_states[1].v = 0.3;
        let err = s.validate().unwrap_err();
        assert!(matches!(err, ScenarioError::AssumptionViolated(ref m) if m.contains("initial velocity")));
    }

    #[test]
    fn graph_assumptions_per_variant() {
        let mut s = smoke();
        s.graph.edges.pop();
        // 1 -> 2 only: spanning tree, not strongly connected.
        assert!(matches!(s.validate(), Err(ScenarioError::AssumptionViolated(_))));
        s.variant = ControllerVariant::PiecewiseSat;
        s.constraints = ConstraintSpec {
            v_min: 0.0,
            v_max: 0.5,
            u_max: 0.5,
        };
        s.initial_states.iter_mut().for_each(|st| st.v = 0.1);
        s.validate().unwrap();
        s.graph.edges.clear();
        assert!(matches!(s.validate(), Err(ScenarioError::AssumptionViolated(_))));
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let mut s = smoke();
        s.params.pop();
        assert!(matches!(s.validate(), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn preset_feasibility_flags_only_k() {
        for case in [ReproductionCase::Symmetric, ReproductionCase::Asymmetric] {
            let s = reproduction(case);
            let g = s.validate().unwrap();
            let f = s.feasibility(&g);
            assert!(!f.all_pass);
            for (_, cond) in f.warnings() {
                assert!(cond.starts_with("k <"), "{cond}");
            }
        }
        let s = smoke();
        let g = s.validate().unwrap();
        assert!(s.feasibility(&g).all_pass);
    }

    #[test]
    fn filter_feasibility_ignores_degrees() {
        let mut s = reproduction(ReproductionCase::Symmetric);
        s.variant = ControllerVariant::FilterBased;
        let g = s.validate().unwrap();
        let f = s.feasibility(&g);
        assert!(f.agents.iter().all(|a| a.in_degree.is_none()));
    }

    #[test]
    fn euler_reference_keeps_sample_times() {
        let s = smoke();
        let r = s.euler_reference(1e-5);
        assert_eq!(r.sim.integrator, Integrator::Euler);
        assert_eq!(r.sim.samples(), s.sim.samples());
        assert!((r.sim.record_interval() - s.sim.record_interval()).abs() < 1e-12);
    }
}
