//! Distributed consensus control for second-order uncertain multiagent
//! systems under velocity and input constraints.
//!
//! Each agent runs a saturated, velocity-free control law: it senses its own
//! position and velocity and only the *positions* of its in-neighbors. The
//! crate provides the graph machinery the controllers rely on, the control
//! laws themselves, agent dynamics, a deterministic RK4 simulator, and
//! post-hoc monitors that check the closed loop against its guarantees.

pub mod controller;
pub mod graph;
pub mod monitor;
pub mod plant;
pub mod saturation;
pub mod scenario;
pub mod sim;

pub use controller::{
    AgentControllerParams, ConstraintSpec, ControllerError, ControllerVariant, FeasibilityReport, NeighborView,
    UncertaintyBounds,
};
pub use graph::{DirectedGraph, GraphDecomposition, GraphError, GraphSpec};
pub use monitor::{CheckStatus, MonitorReport};
pub use plant::{ManipulatorParams, Plant, PlantError, PlantSpec, UncertaintyModel, UncertaintyModelSpec};
pub use scenario::{ReproductionCase, RunOutput, Scenario, ScenarioError, ScenarioFeasibility};
pub use sim::{AgentState, ClosedLoop, Integrator, SimConfig, SimError, TrajectoryTrace};
