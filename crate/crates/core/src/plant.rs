//! Agent dynamics: uncertain double integrators and single-link manipulators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("invalid uncertainty model: {0}")]
    InvalidModel(String),
    #[error("invalid manipulator: {0}")]
    InvalidManipulator(String),
    #[error("declared bounds violated at {} sample(s), first at t = {:.6}", .0.violations.len(), .0.violations.first().map_or(f64::NAN, |v| v.t))]
    BoundViolation(BoundsReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyKind {
    Constant,
    Sinusoid,
    Noise,
}

/// Parameters of one uncertain signal. Which fields apply depends on the
/// model kind: `value` (constant); `offset`, `amplitude`, `omega`, `phase`
/// (sinusoid); `center`, `amplitude`, `hold_seconds` (noise).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold_seconds: Option<f64>,
}

impl SignalSpec {
    pub fn constant(value: f64) -> Self {
        Self {
            value: Some(value),
            ..Self::default()
        }
    }

    pub fn sinusoid(offset: f64, amplitude: f64, omega: f64, phase: f64) -> Self {
        Self {
            offset: Some(offset),
            amplitude: Some(amplitude),
            omega: Some(omega),
            phase: Some(phase),
            ..Self::default()
        }
    }

    pub fn noise(center: f64, amplitude: f64) -> Self {
        Self {
            center: Some(center),
            amplitude: Some(amplitude),
            ..Self::default()
        }
    }
}

/// File form of an [`UncertaintyModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyModelSpec {
    pub kind: UncertaintyKind,
    pub b: SignalSpec,
    pub tau: SignalSpec,
    pub declared_b_min: f64,
    pub declared_tau_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl UncertaintyModelSpec {
    /// `b = b`, `tau = tau`, declared bounds equal to the values.
    pub fn constant(b: f64, tau: f64) -> Self {
        Self {
            kind: UncertaintyKind::Constant,
            b: SignalSpec::constant(b),
            tau: SignalSpec::constant(tau),
            declared_b_min: b,
            declared_tau_max: tau.abs(),
            seed: None,
        }
    }
}

/// Samples held piecewise constant over `hold` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    center: f64,
    hold: f64,
    deviations: Vec<f64>,
}

impl NoisePath {
    fn generate(seed: u64, center: f64, amplitude: f64, hold: f64, horizon: f64) -> Self {
        let cells = (horizon / hold).ceil() as usize + 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let deviations = if amplitude > 0.0 {
            let normal = Normal::new(0.0, amplitude / 2.0).expect("finite positive std");
            (0..cells)
                .map(|_| normal.sample(&mut rng).clamp(-amplitude, amplitude))
                .collect()
        } else {
            vec![0.0; cells]
        };
        Self {
            center,
            hold,
            deviations,
        }
    }

    fn cell(&self, t: f64) -> usize {
        // The nudge keeps t = k*hold from rounding into cell k-1.
        let idx = (t / self.hold + 1e-9).floor().max(0.0) as usize;
        idx.min(self.deviations.len() - 1)
    }

    fn at(&self, t: f64) -> f64 {
        self.center + self.deviations[self.cell(t)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    Constant(f64),
    Sinusoid {
        offset: f64,
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    Noise(NoisePath),
}

impl Signal {
    /// Value at stage time `t`; noise is read at the start of the step.
    pub fn value(&self, t: f64, step_start: f64) -> f64 {
        match self {
            Signal::Constant(v) => *v,
            Signal::Sinusoid {
                offset,
                amplitude,
                omega,
                phase,
            } => offset + amplitude * (omega * t + phase).sin(),
            Signal::Noise(path) => path.at(step_start),
        }
    }

    fn range(&self, horizon: f64) -> (f64, f64) {
        match self {
            Signal::Constant(v) => (*v, *v),
            Signal::Sinusoid { offset, amplitude, .. } => (offset - amplitude.abs(), offset + amplitude.abs()),
            Signal::Noise(path) => {
                let last = path.cell(horizon);
                path.deviations[..=last]
                    .iter()
                    .map(|d| path.center + d)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
            }
        }
    }

    /// Times in `[0, horizon]` where the signal attains its extremes.
    fn extremum_times(&self, horizon: f64) -> Vec<f64> {
        match self {
            Signal::Constant(_) => vec![0.0],
            Signal::Sinusoid {
                amplitude,
                omega,
                phase,
                ..
            } => {
                if *omega == 0.0 || *amplitude == 0.0 {
                    return vec![0.0];
                }
                let period = 2.0 * PI / omega.abs();
                [FRAC_PI_2, -FRAC_PI_2]
                    .iter()
                    .filter_map(|target| {
                        // omega t + phase = target + 2 pi j, smallest t >= 0.
                        let t0 = (target - phase) / omega;
                        let t = t0.rem_euclid(period);
                        (t <= horizon).then_some(t)
                    })
                    .collect()
            }
            Signal::Noise(path) => {
                let last = path.cell(horizon);
                (0..=last).map(|c| c as f64 * path.hold).collect()
            }
        }
    }

    fn from_spec(
        kind: UncertaintyKind,
        spec: &SignalSpec,
        name: &str,
        seed: u64,
        hold_default: f64,
        horizon: f64,
    ) -> Result<Self, PlantError> {
        let need = |field: Option<f64>, field_name: &str| {
            field.ok_or_else(|| PlantError::InvalidModel(format!("{name}.{field_name} is required for {kind:?}")))
        };
        let signal = match kind {
            UncertaintyKind::Constant => Signal::Constant(need(spec.value, "value")?),
            UncertaintyKind::Sinusoid => Signal::Sinusoid {
                offset: spec.offset.unwrap_or(0.0),
                amplitude: need(spec.amplitude, "amplitude")?,
                omega: need(spec.omega, "omega")?,
                phase: spec.phase.unwrap_or(0.0),
            },
            UncertaintyKind::Noise => {
                let amplitude = need(spec.amplitude, "amplitude")?;
                if amplitude < 0.0 {
                    return Err(PlantError::InvalidModel(format!(
                        "{name}.amplitude must be nonnegative"
                    )));
                }
                let hold = spec.hold_seconds.unwrap_or(hold_default);
                if !(hold > 0.0) {
                    return Err(PlantError::InvalidModel(format!(
                        "{name}.hold_seconds must be positive"
                    )));
                }
                Signal::Noise(NoisePath::generate(
                    seed,
                    spec.center.unwrap_or(0.0),
                    amplitude,
                    hold,
                    horizon,
                ))
            }
        };
        Ok(signal)
    }
}

/// Time-varying input gain `b(t)` and disturbance `tau(t)` with declared
/// bounds `b(t) >= declared_b_min`, `|tau(t)| <= declared_tau_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyModel {
    pub kind: UncertaintyKind,
    pub b: Signal,
    pub tau: Signal,
    pub declared_b_min: f64,
    pub declared_tau_max: f64,
}

impl UncertaintyModel {
    pub fn nominal() -> Self {
        Self {
            kind: UncertaintyKind::Constant,
            b: Signal::Constant(1.0),
            tau: Signal::Constant(0.0),
            declared_b_min: 1.0,
            declared_tau_max: 0.0,
        }
    }

    /// Builds the runtime model. `step` is the default noise hold and
    /// `horizon` the span the noise path must cover.
    pub fn from_spec(spec: &UncertaintyModelSpec, step: f64, horizon: f64) -> Result<Self, PlantError> {
        if spec.kind == UncertaintyKind::Noise && spec.seed.is_none() {
            return Err(PlantError::InvalidModel("noise models need a seed".into()));
        }
        let seed = spec.seed.unwrap_or(0);
        if !(spec.declared_b_min > 0.0) || !(spec.declared_tau_max >= 0.0) {
            return Err(PlantError::InvalidModel(
                "declared_b_min must be positive and declared_tau_max nonnegative".into(),
            ));
        }
        Ok(Self {
            kind: spec.kind,
            b: Signal::from_spec(spec.kind, &spec.b, "b", seed, step, horizon)?,
            tau: Signal::from_spec(
                spec.kind,
                &spec.tau,
                "tau",
                seed.wrapping_add(0x9E37_79B9_7F4A_7C15),
                step,
                horizon,
            )?,
            declared_b_min: spec.declared_b_min,
            declared_tau_max: spec.declared_tau_max,
        })
    }

    /// Smallest input gain over `[0, horizon]`.
    pub fn b_min(&self, horizon: f64) -> f64 {
        self.b.range(horizon).0
    }

    /// Largest input gain over `[0, horizon]`.
    pub fn b_max(&self, horizon: f64) -> f64 {
        self.b.range(horizon).1
    }

    /// Largest `|tau|` over `[0, horizon]`.
    pub fn tau_abs_max(&self, horizon: f64) -> f64 {
        let (lo, hi) = self.tau.range(horizon);
        lo.abs().max(hi.abs())
    }
}

/// `v' = b(t) u + tau(t)`.
pub fn accel_double_integrator(t: f64, u: f64, model: &UncertaintyModel) -> f64 {
    model.b.value(t, t) * u + model.tau.value(t, t)
}

/// Single-link manipulator `I v' = u - B v - M g l sin(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManipulatorParams {
    pub inertia: f64,
    pub damping: f64,
    pub mass: f64,
    pub gravity: f64,
    pub length: f64,
}

impl ManipulatorParams {
    /// Parameters realizing the given normalized `b`, `phi`, `tau`.
    pub fn from_normalized(b: f64, phi: f64, tau: f64) -> Self {
        let inertia = 1.0 / b;
        Self {
            inertia,
            damping: phi * inertia,
            mass: 1.0,
            gravity: 1.0,
            length: tau * inertia,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.inertia > 0.0 && self.inertia.is_finite()) {
            return Err(PlantError::InvalidManipulator("inertia must be positive".into()));
        }
        for (name, v) in [
            ("damping", self.damping),
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("length", self.length),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PlantError::InvalidManipulator(format!("{name} must be nonnegative")));
            }
        }
        Ok(())
    }

    /// `1 / I`.
    pub fn b(&self) -> f64 {
        1.0 / self.inertia
    }

    /// `B / I`.
    pub fn phi(&self) -> f64 {
        self.damping / self.inertia
    }

    /// `M g l / I`.
    pub fn tau(&self) -> f64 {
        self.mass * self.gravity * self.length / self.inertia
    }
}

/// `v' = b u - phi v - tau sin(x)`.
pub fn accel_manipulator(x: f64, v: f64, u: f64, p: &ManipulatorParams) -> f64 {
    p.b() * u - p.phi() * v - p.tau() * x.sin()
}

/// File form of a [`Plant`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PlantSpec {
    DoubleIntegrator(UncertaintyModelSpec),
    Manipulator(ManipulatorParams),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plant {
    DoubleIntegrator(UncertaintyModel),
    Manipulator(ManipulatorParams),
}

impl Plant {
    pub fn from_spec(spec: &PlantSpec, step: f64, horizon: f64) -> Result<Self, PlantError> {
        match spec {
            PlantSpec::DoubleIntegrator(m) => {
                Ok(Plant::DoubleIntegrator(UncertaintyModel::from_spec(m, step, horizon)?))
            }
            PlantSpec::Manipulator(p) => {
                p.validate()?;
                Ok(Plant::Manipulator(*p))
            }
        }
    }

    /// Acceleration at stage time `t` of a step that began at `step_start`.
    pub fn accel(&self, t: f64, step_start: f64, x: f64, v: f64, u: f64) -> f64 {
        match self {
            Plant::DoubleIntegrator(m) => m.b.value(t, step_start) * u + m.tau.value(t, step_start),
            Plant::Manipulator(p) => accel_manipulator(x, v, u, p),
        }
    }

    /// Worst-case `(b_max, tau_max, phi_max)` actually realized by the plant;
    /// `phi_max` is zero for double integrators.
    pub fn true_extremes(&self, horizon: f64) -> (f64, f64, f64) {
        match self {
            Plant::DoubleIntegrator(m) => (m.b_max(horizon), m.tau_abs_max(horizon), 0.0),
            Plant::Manipulator(p) => (p.b(), p.tau(), p.phi()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundQuantity {
    B,
    Tau,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSample {
    pub t: f64,
    pub quantity: BoundQuantity,
    pub value: f64,
}

/// Outcome of sampling a model against its declared bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    /// `min b - declared_b_min`; negative means violated.
    pub b_margin: f64,
    /// `declared_tau_max - max |tau|`; negative means violated.
    pub tau_margin: f64,
    pub violations: Vec<BoundSample>,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples `b` and `tau` on a uniform grid over `[0, horizon]` plus their
/// analytic extremum times and compares against the declared bounds.
pub fn bounds_check(model: &UncertaintyModel, horizon: f64, samples: usize) -> Result<BoundsReport, PlantError> {
    if samples < 2 {
        return Err(PlantError::InvalidModel("bounds_check needs at least 2 samples".into()));
    }
    let grid = (0..samples).map(|i| horizon * i as f64 / (samples - 1) as f64);
    let mut times: Vec<f64> = grid
        .chain(model.b.extremum_times(horizon))
        .chain(model.tau.extremum_times(horizon))
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut b_margin = f64::INFINITY;
    let mut tau_margin = f64::INFINITY;
    let mut violations = Vec::new();
    for &t in &times {
        let b = model.b.value(t, t);
        let tau = model.tau.value(t, t);
        b_margin = b_margin.min(b - model.declared_b_min);
        tau_margin = tau_margin.min(model.declared_tau_max - tau.abs());
        if b < model.declared_b_min {
            violations.push(BoundSample {
                t,
                quantity: BoundQuantity::B,
                value: b,
            });
        }
        if tau.abs() > model.declared_tau_max {
            violations.push(BoundSample {
                t,
                quantity: BoundQuantity::Tau,
                value: tau,
            });
        }
    }
    let report = BoundsReport {
        b_margin,
        tau_margin,
        violations,
    };
    if report.passed() {
        Ok(report)
    } else {
        Err(PlantError::BoundViolation(report))
    }
}
