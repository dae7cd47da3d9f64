//! Fixed-step integration of the closed-loop multiagent system.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{
    control_law, filter_derivative, reference_velocity, AgentControllerParams, ConstraintSpec, ControllerError,
    ControllerVariant, NeighborView,
};
use crate::graph::{DirectedGraph, GraphError};
use crate::plant::Plant;
use crate::saturation::{ln_cosh, varrho_integral};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("state became non-finite at t = {t} (agent {agent})")]
    NonFiniteState { t: f64, agent: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_hat: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt_seconds: f64,
    pub t_end_seconds: f64,
    pub record_stride: usize,
    /// Spread below which positions count as agreed, for `consensus_time`.
    #[serde(default = "default_consensus_epsilon")]
    pub consensus_epsilon: f64,
    #[serde(default)]
    pub integrator: Integrator,
}

fn default_consensus_epsilon() -> f64 {
    1e-2
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_seconds: 1e-3,
            t_end_seconds: 60.0,
            record_stride: 10,
            consensus_epsilon: default_consensus_epsilon(),
            integrator: Integrator::Rk4,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt_seconds > 0.0 && self.dt_seconds.is_finite()) {
            return Err(SimError::InvalidConfig("dt_seconds must be positive".into()));
        }
        if !(self.t_end_seconds >= self.dt_seconds && self.t_end_seconds.is_finite()) {
            return Err(SimError::InvalidConfig(
                "t_end_seconds must be at least dt_seconds".into(),
            ));
        }
        if self.record_stride == 0 {
            return Err(SimError::InvalidConfig("record_stride must be positive".into()));
        }
        if !(self.consensus_epsilon > 0.0) {
            return Err(SimError::InvalidConfig("consensus_epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end_seconds / self.dt_seconds).round() as usize
    }

    /// Recorded samples: `1 + floor(steps / record_stride)`.
    pub fn samples(&self) -> usize {
        1 + self.steps() / self.record_stride
    }

    pub fn record_interval(&self) -> f64 {
        self.dt_seconds * self.record_stride as f64
    }
}

/// Controller outputs for one agent at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentEval {
    pub eta: f64,
    pub r: f64,
    pub e: f64,
    pub u: f64,
}

/// Graph, controllers and plants wired together.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    graph: DirectedGraph,
    variant: ControllerVariant,
    constraints: ConstraintSpec,
    params: Vec<AgentControllerParams>,
    plants: Vec<Plant>,
    neighbors: Vec<Vec<(usize, f64)>>,
    omega: Option<Vec<f64>>,
}

impl ClosedLoop {
    pub fn new(
        graph: DirectedGraph,
        variant: ControllerVariant,
        constraints: ConstraintSpec,
        params: Vec<AgentControllerParams>,
        plants: Vec<Plant>,
    ) -> Result<Self, SimError> {
        let n = graph.n();
        if params.len() != n || plants.len() != n {
            return Err(SimError::DimensionMismatch(format!(
                "graph has {n} nodes, {} parameter sets, {} plants",
                params.len(),
                plants.len()
            )));
        }
        constraints.validate()?;
        for p in &params {
            p.validate()?;
            if !(p.alpha < constraints.u_max) {
                return Err(ControllerError::InfeasibleParams {
                    alpha: p.alpha,
                    u_max: constraints.u_max,
                }
                .into());
            }
        }
        let neighbors = (0..n).map(|i| graph.in_neighbors(i).collect()).collect();
        let omega = graph.left_eigenvector().ok();
        Ok(Self {
            graph,
            variant,
            constraints,
            params,
            plants,
            neighbors,
            omega,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn variant(&self) -> ControllerVariant {
        self.variant
    }

    pub fn constraints(&self) -> &ConstraintSpec {
        &self.constraints
    }

    pub fn params(&self) -> &[AgentControllerParams] {
        &self.params
    }

    pub fn plants(&self) -> &[Plant] {
        &self.plants
    }

    pub fn omega(&self) -> Option<&[f64]> {
        self.omega.as_deref()
    }

    fn state_len(&self) -> usize {
        if self.variant.uses_filter() {
            3 * self.n()
        } else {
            2 * self.n()
        }
    }

    fn pack(&self, states: &[AgentState]) -> Result<Vec<f64>, SimError> {
        let n = self.n();
        if states.len() != n {
            return Err(SimError::DimensionMismatch(format!(
                "{} states for {n} agents",
                states.len()
            )));
        }
        let mut s = vec![0.0; self.state_len()];
        for (i, st) in states.iter().enumerate() {
            s[i] = st.x;
            s[n + i] = st.v;
            if self.variant.uses_filter() {
                s[2 * n + i] = st.x_hat.ok_or(ControllerError::MissingFilterState)?;
            }
        }
        Ok(s)
    }

    fn unpack(&self, s: &[f64]) -> Vec<AgentState> {
        let n = self.n();
        (0..n)
            .map(|i| AgentState {
                x: s[i],
                v: s[n + i],
                x_hat: self.variant.uses_filter().then(|| s[2 * n + i]),
            })
            .collect()
    }

    fn gather(&self, i: usize, s: &[f64], buf: &mut Vec<(f64, f64)>) {
        buf.clear();
        buf.extend(self.neighbors[i].iter().map(|&(j, a)| (a, s[j])));
    }

    fn eval_agent(&self, i: usize, s: &[f64], buf: &mut Vec<(f64, f64)>) -> AgentEval {
        let n = self.n();
        self.gather(i, s, buf);
        let view = NeighborView {
            own_position: s[i],
            own_velocity: s[n + i],
            neighbor_positions: buf,
            filter_state: self.variant.uses_filter().then(|| s[2 * n + i]),
        };
        let p = &self.params[i];
        let r = reference_velocity(self.variant, &view, p, &self.constraints)
            .expect("filter state is always packed for the filter variant");
        let e = view.own_velocity - r;
        AgentEval {
            eta: view.relative_position_sum(),
            r,
            e,
            u: control_law(e, p, self.constraints.u_max),
        }
    }

    /// Controller outputs for every agent at `states`.
    pub fn evaluate(&self, states: &[AgentState]) -> Result<Vec<AgentEval>, SimError> {
        let s = self.pack(states)?;
        let mut buf = Vec::new();
        Ok((0..self.n()).map(|i| self.eval_agent(i, &s, &mut buf)).collect())
    }

    fn derivative(&self, t: f64, step_start: f64, s: &[f64], out: &mut [f64], buf: &mut Vec<(f64, f64)>) {
        let n = self.n();
        for i in 0..n {
            let ev = self.eval_agent(i, s, buf);
            out[i] = s[n + i];
            out[n + i] = self.plants[i].accel(t, step_start, s[i], s[n + i], ev.u);
            if self.variant.uses_filter() {
                // `buf` still holds agent i's neighbor positions.
                out[2 * n + i] = filter_derivative(s[2 * n + i], buf, self.params[i].m);
            }
        }
    }

    /// One integration step from `t` to `t + dt`. The controller is
    /// re-evaluated at every stage; noise is held at its step-start value.
    pub fn step(
        &self,
        states: &[AgentState],
        t: f64,
        dt: f64,
        integrator: Integrator,
    ) -> Result<Vec<AgentState>, SimError> {
        let mut s = self.pack(states)?;
        self.check_finite(&s, t)?;
        let mut work = Workspace::new(s.len());
        self.advance(&mut s, t, dt, integrator, &mut work);
        self.check_finite(&s, t + dt)?;
        Ok(self.unpack(&s))
    }

    fn advance(&self, s: &mut [f64], t: f64, dt: f64, integrator: Integrator, w: &mut Workspace) {
        match integrator {
            Integrator::Euler => {
                self.derivative(t, t, s, &mut w.k1, &mut w.buf);
                for (x, k) in s.iter_mut().zip(&w.k1) {
                    *x += dt * k;
                }
            }
            Integrator::Rk4 => {
                let h = 0.5 * dt;
                self.derivative(t, t, s, &mut w.k1, &mut w.buf);
                for ((y, x), k) in w.tmp.iter_mut().zip(s.iter()).zip(&w.k1) {
                    *y = x + h * k;
                }
                self.derivative(t + h, t, &w.tmp, &mut w.k2, &mut w.buf);
                for ((y, x), k) in w.tmp.iter_mut().zip(s.iter()).zip(&w.k2) {
                    *y = x + h * k;
                }
                self.derivative(t + h, t, &w.tmp, &mut w.k3, &mut w.buf);
                for ((y, x), k) in w.tmp.iter_mut().zip(s.iter()).zip(&w.k3) {
                    *y = x + dt * k;
                }
                self.derivative(t + dt, t, &w.tmp, &mut w.k4, &mut w.buf);
                for (i, x) in s.iter_mut().enumerate() {
                    *x += dt / 6.0 * (w.k1[i] + 2.0 * w.k2[i] + 2.0 * w.k3[i] + w.k4[i]);
                }
            }
        }
    }

    fn check_finite(&self, s: &[f64], t: f64) -> Result<(), SimError> {
        match s.iter().position(|v| !v.is_finite()) {
            Some(idx) => Err(SimError::NonFiniteState {
                t,
                agent: idx % self.n() + 1,
            }),
            None => Ok(()),
        }
    }

    /// Lyapunov value of the current positions, when defined for the variant.
    fn lyapunov(&self, positions: &[f64]) -> f64 {
        let Some(omega) = self.omega.as_deref() else {
            return f64::NAN;
        };
        match self.variant {
            ControllerVariant::SymmetricTanh | ControllerVariant::AsymmetricTanh | ControllerVariant::Manipulator => {
                lyapunov_v(positions, &self.graph, omega, &self.params)
            }
            ControllerVariant::PiecewiseSat => lyapunov_varrho(positions, &self.graph, omega, &self.params),
            ControllerVariant::FilterBased => f64::NAN,
        }
    }

    /// Integrates from `initial` over the configured horizon.
    pub fn simulate(&self, initial: &[AgentState], config: &SimConfig) -> Result<TrajectoryTrace, SimError> {
        config.validate()?;
        let n = self.n();
        let mut s = self.pack(initial)?;
        self.check_finite(&s, 0.0)?;
        let mut trace = TrajectoryTrace::with_capacity(n, config.samples());
        let mut work = Workspace::new(s.len());
        let steps = config.steps();
        let dt = config.dt_seconds;
        self.record(&mut trace, 0.0, &s, &mut work.buf);
        for k in 0..steps {
            let t = k as f64 * dt;
            self.advance(&mut s, t, dt, config.integrator, &mut work);
            let t_next = (k + 1) as f64 * dt;
            self.check_finite(&s, t_next)?;
            if (k + 1) % config.record_stride == 0 {
                self.record(&mut trace, t_next, &s, &mut work.buf);
            }
        }
        Ok(trace)
    }

    fn record(&self, trace: &mut TrajectoryTrace, t: f64, s: &[f64], buf: &mut Vec<(f64, f64)>) {
        let n = self.n();
        trace.times.push(t);
        let positions = &s[..n];
        for i in 0..n {
            let ev = self.eval_agent(i, s, buf);
            trace.x[i].push(s[i]);
            trace.v[i].push(s[n + i]);
            trace.u[i].push(ev.u);
            trace.r[i].push(ev.r);
            trace.e[i].push(ev.e);
            let zeta = self.neighbors[i].iter().map(|&(j, a)| a * (s[n + i] - s[n + j])).sum();
            trace.zeta[i].push(zeta);
        }
        trace.lyapunov.push(self.lyapunov(positions));
        trace.spread.push(spread(positions));
    }
}

struct Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    buf: Vec<(f64, f64)>,
}

impl Workspace {
    fn new(len: usize) -> Self {
        Self {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            tmp: vec![0.0; len],
            buf: Vec::new(),
        }
    }
}

/// Recorded time series; per-agent series are indexed `[agent][sample]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryTrace {
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    /// `sum_j a_ij (v_i - v_j)`; diagnostic only, never fed to a controller.
    pub zeta: Vec<Vec<f64>>,
    /// NaN where no Lyapunov function is defined for the variant or graph.
    pub lyapunov: Vec<f64>,
    pub spread: Vec<f64>,
}

impl TrajectoryTrace {
    pub fn with_capacity(n: usize, samples: usize) -> Self {
        let series = || vec![Vec::with_capacity(samples); n];
        Self {
            times: Vec::with_capacity(samples),
            x: series(),
            v: series(),
            u: series(),
            r: series(),
            e: series(),
            zeta: series(),
            lyapunov: Vec::with_capacity(samples),
            spread: Vec::with_capacity(samples),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.x.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_states(&self) -> Vec<(f64, f64)> {
        (0..self.n_agents())
            .map(|i| {
                (
                    *self.x[i].last().unwrap_or(&f64::NAN),
                    *self.v[i].last().unwrap_or(&f64::NAN),
                )
            })
            .collect()
    }

    /// Writes the CSV form: `t,x_1..x_n,v_1..v_n,u_1..u_n,r_1..r_n,e_1..e_n,V,spread`
    /// with 17 significant digits.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.n_agents();
        let mut header = vec!["t".to_owned()];
        for name in ["x", "v", "u", "r", "e"] {
            header.extend((1..=n).map(|i| format!("{name}_{i}")));
        }
        header.push("V".into());
        header.push("spread".into());
        writeln!(out, "{}", header.join(","))?;
        let mut row = String::new();
        for k in 0..self.len() {
            row.clear();
            push_num(&mut row, self.times[k]);
            for series in [&self.x, &self.v, &self.u, &self.r, &self.e] {
                for agent in series.iter() {
                    row.push(',');
                    push_num(&mut row, agent[k]);
                }
            }
            row.push(',');
            push_num(&mut row, self.lyapunov[k]);
            row.push(',');
            push_num(&mut row, self.spread[k]);
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

fn push_num(buf: &mut String, v: f64) {
    use std::fmt::Write;
    if v.is_nan() {
        buf.push_str("NaN");
    } else {
        write!(buf, "{v:.16e}").expect("writing to a String");
    }
}

/// `sum_i (omega_i / k_i) ln cosh(k_i eta_i / m)`.
pub fn lyapunov_v(positions: &[f64], graph: &DirectedGraph, omega: &[f64], params: &[AgentControllerParams]) -> f64 {
    (0..graph.n())
        .map(|i| {
            let eta: f64 = graph
                .in_neighbors(i)
                .map(|(j, a)| a * (positions[i] - positions[j]))
                .sum();
            let p = &params[i];
            omega[i] / p.k * ln_cosh(p.k * eta / p.m)
        })
        .sum()
}

/// `sum_i omega_i int_0^eta_i varrho(s) ds`, the piecewise variant's analogue.
pub fn lyapunov_varrho(
    positions: &[f64],
    graph: &DirectedGraph,
    omega: &[f64],
    params: &[AgentControllerParams],
) -> f64 {
    (0..graph.n())
        .map(|i| {
            let eta: f64 = graph
                .in_neighbors(i)
                .map(|(j, a)| a * (positions[i] - positions[j]))
                .sum();
            omega[i] * varrho_integral(eta, params[i].k, params[i].m)
        })
        .sum()
}

/// `max_i x_i - min_i x_i`.
pub fn spread(positions: &[f64]) -> f64 {
    let (lo, hi) = positions
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if positions.is_empty() {
        0.0
    } else {
        hi - lo
    }
}
