//! Per-agent saturated control law, reference velocities, parameter
//! feasibility and settling-time bounds.
//!
//! The control input is
//!
//! ```text
//! u = -[(u_max - alpha) sigma(e) + lambda alpha sgn(e)] / lambda,   lambda = z^gamma
//! ```
//!
//! with `e = v - r` the velocity tracking error and `r` a saturated reference
//! velocity built only from the agent's own state and its neighbors'
//! *positions*.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::saturation::{sgn, sigma, tanh_reference, varrho};

/// Exponent used when no other choice is made.
pub const DEFAULT_GAMMA: f64 = 1.5;

/// Relative slack granted to non-strict (`<=`) conditions so that values
/// meeting a bound with equality are not rejected by rounding in the bound.
const NONSTRICT_RTOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("filter-based reference requires a filter state")]
    MissingFilterState,
    #[error("infeasible parameters: alpha = {alpha} must be below u_max = {u_max}")]
    InfeasibleParams { alpha: f64, u_max: f64 },
    #[error("infeasible problem: {0}")]
    InfeasibleProblem(String),
    #[error("mu = {0} is not positive; settling-time bound unavailable")]
    NonpositiveMu(f64),
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

/// Velocity window and input limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub v_min: f64,
    pub v_max: f64,
    pub u_max: f64,
}

impl ConstraintSpec {
    pub fn symmetric(v_max: f64, u_max: f64) -> Self {
        Self {
            v_min: -v_max,
            v_max,
            u_max,
        }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        if !(self.v_min.is_finite() && self.v_max.is_finite() && self.v_min < self.v_max) {
            return Err(ControllerError::InvalidParameter {
                name: "v_max",
                value: self.v_max,
                reason: "must exceed v_min",
            });
        }
        if !(self.u_max.is_finite() && self.u_max > 0.0) {
            return Err(ControllerError::InvalidParameter {
                name: "u_max",
                value: self.u_max,
                reason: "must be positive",
            });
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        self.v_min == -self.v_max
    }

    /// Center of the velocity window, `(v_max + v_min) / 2`.
    pub fn v_r(&self) -> f64 {
        (self.v_max + self.v_min) / 2.0
    }

    /// `(v_max - v_min) / 2`; equals `v_max` when symmetric.
    pub fn half_width(&self) -> f64 {
        (self.v_max - self.v_min) / 2.0
    }

    /// `max(|v_max|, |v_min|)`.
    pub fn v_bar(&self) -> f64 {
        self.v_max.abs().max(self.v_min.abs())
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.v_min..=self.v_max).contains(&v)
    }
}

/// Known bounds on the uncertain input gain, disturbance and damping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBounds {
    pub b_min: f64,
    pub tau_max: f64,
    #[serde(default)]
    pub phi_max: f64,
}

impl UncertaintyBounds {
    /// `b_min u_max - tau_max`, less `phi_max v_bar` for manipulators.
    /// Must be positive for the input to dominate the uncertainty.
    pub fn controllability_margin(&self, variant: ControllerVariant, c: &ConstraintSpec) -> f64 {
        self.b_min * c.u_max - self.tau_max - self.damping_load(variant, c)
    }

    fn damping_load(&self, variant: ControllerVariant, c: &ConstraintSpec) -> f64 {
        match variant {
            ControllerVariant::Manipulator => self.phi_max * c.v_bar(),
            _ => 0.0,
        }
    }

    /// Checks positivity and the controllability margin.
    pub fn validate(&self, variant: ControllerVariant, c: &ConstraintSpec) -> Result<(), ControllerError> {
        if !(self.b_min > 0.0 && self.b_min.is_finite()) {
            return Err(ControllerError::InvalidParameter {
                name: "b_min",
                value: self.b_min,
                reason: "must be positive",
            });
        }
        if !(self.tau_max >= 0.0 && self.tau_max.is_finite()) {
            return Err(ControllerError::InvalidParameter {
                name: "tau_max",
                value: self.tau_max,
                reason: "must be nonnegative",
            });
        }
        if !(self.phi_max >= 0.0 && self.phi_max.is_finite()) {
            return Err(ControllerError::InvalidParameter {
                name: "phi_max",
                value: self.phi_max,
                reason: "must be nonnegative",
            });
        }
        let margin = self.controllability_margin(variant, c);
        if margin <= 0.0 {
            return Err(ControllerError::InfeasibleProblem(format!(
                "input cannot dominate the uncertainty: b_min*u_max - tau_max{} = {margin} <= 0 \
                 (the admissible alpha interval is empty)",
                if variant == ControllerVariant::Manipulator {
                    " - phi_max*v_bar"
                } else {
                    ""
                }
            )));
        }
        Ok(())
    }
}

/// Per-agent gains. `m` is shared by all agents of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentControllerParams {
    pub m: f64,
    pub alpha: f64,
    pub z: f64,
    pub k: f64,
    pub gamma: f64,
}

impl AgentControllerParams {
    /// `z^gamma`, the saturation level of `sigma`.
    pub fn lambda(&self) -> f64 {
        self.z.powf(self.gamma)
    }

    /// Sign and range checks that hold for every variant.
    pub fn validate(&self) -> Result<(), ControllerError> {
        let positive = [("m", self.m), ("alpha", self.alpha), ("z", self.z), ("k", self.k)];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ControllerError::InvalidParameter {
                    name,
                    value,
                    reason: "must be positive and finite",
                });
            }
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(ControllerError::InvalidParameter {
                name: "gamma",
                value: self.gamma,
                reason: "must exceed 1",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerVariant {
    /// `r = -m tanh(k eta / m)`, symmetric velocity window.
    SymmetricTanh,
    /// `r = v_r - m tanh(k eta / m)`.
    AsymmetricTanh,
    /// `r = -m tanh(k (x - x_hat) / m)` with a first-order consensus filter.
    FilterBased,
    /// `r = v_r - varrho(eta)`; needs only a spanning tree.
    PiecewiseSat,
    /// Asymmetric tanh reference on single-link manipulators.
    Manipulator,
}

impl ControllerVariant {
    pub fn requires_strong_connectivity(self) -> bool {
        !matches!(self, Self::PiecewiseSat)
    }

    pub fn uses_filter(self) -> bool {
        matches!(self, Self::FilterBased)
    }

    /// Whether the reference is centered at `v_r` rather than zero.
    pub fn is_centered(self) -> bool {
        matches!(self, Self::AsymmetricTanh | Self::PiecewiseSat | Self::Manipulator)
    }

    /// Variants whose feasibility conditions assume `v_min = -v_max`.
    pub fn requires_symmetric_window(self) -> bool {
        matches!(self, Self::SymmetricTanh | Self::FilterBased)
    }
}

/// What a single agent can sense: its own position and velocity, and its
/// in-neighbors' positions. There is deliberately no field for neighbor
/// velocities.
#[derive(Debug, Clone, Copy)]
pub struct NeighborView<'a> {
    pub own_position: f64,
    pub own_velocity: f64,
    /// `(a_ij, x_j)` for each in-neighbor `j`.
    pub neighbor_positions: &'a [(f64, f64)],
    pub filter_state: Option<f64>,
}

impl NeighborView<'_> {
    /// `eta_i = sum_j a_ij (x_i - x_j)`.
    pub fn relative_position_sum(&self) -> f64 {
        self.neighbor_positions
            .iter()
            .map(|&(a, x)| a * (self.own_position - x))
            .sum()
    }
}

pub fn relative_position_sum(view: &NeighborView<'_>) -> f64 {
    view.relative_position_sum()
}

pub fn reference_velocity(
    variant: ControllerVariant,
    view: &NeighborView<'_>,
    p: &AgentControllerParams,
    c: &ConstraintSpec,
) -> Result<f64, ControllerError> {
    let r = match variant {
        ControllerVariant::SymmetricTanh => tanh_reference(view.relative_position_sum(), p.k, p.m),
        ControllerVariant::AsymmetricTanh | ControllerVariant::Manipulator => {
            c.v_r() + tanh_reference(view.relative_position_sum(), p.k, p.m)
        }
        ControllerVariant::FilterBased => {
            let x_hat = view.filter_state.ok_or(ControllerError::MissingFilterState)?;
            tanh_reference(view.own_position - x_hat, p.k, p.m)
        }
        ControllerVariant::PiecewiseSat => c.v_r() - varrho(view.relative_position_sum(), p.k, p.m),
    };
    Ok(r)
}

/// `e = v - r`.
pub fn tracking_error(v: f64, r: f64) -> f64 {
    v - r
}

/// The saturated control law. `|u| <= u_max` holds exactly.
pub fn control(e: f64, p: &AgentControllerParams, u_max: f64) -> Result<f64, ControllerError> {
    if !(p.alpha < u_max) {
        return Err(ControllerError::InfeasibleParams { alpha: p.alpha, u_max });
    }
    Ok(control_law(e, p, u_max))
}

/// [`control`] without the parameter check, for callers that validated once.
pub(crate) fn control_law(e: f64, p: &AgentControllerParams, u_max: f64) -> f64 {
    if e >= p.z {
        return -u_max;
    }
    if e <= -p.z {
        return u_max;
    }
    let lambda = p.lambda();
    let u = -((u_max - p.alpha) * sigma(e, p.z, p.gamma) + lambda * p.alpha * sgn(e)) / lambda;
    // Algebraically |u| <= u_max; the clamp only absorbs a final-ulp rounding.
    u.clamp(-u_max, u_max)
}

/// Rate of the consensus-estimate filter, `-m tanh(sum_j a_ij (x_hat - x_j))`.
pub fn filter_derivative(x_hat: f64, neighbor_positions: &[(f64, f64)], m: f64) -> f64 {
    let s: f64 = neighbor_positions.iter().map(|&(a, x)| a * (x_hat - x)).sum();
    tanh_reference(s, 1.0, 1.0) * m
}

/// One inequality of a parameter condition set, read as `lhs < rhs` (strict)
/// or `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub condition: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    /// `rhs - lhs`; positive means slack.
    pub margin: f64,
}

impl ConditionCheck {
    fn strict(condition: &str, lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        Self {
            condition: condition.to_owned(),
            lhs,
            rhs,
            pass: margin > 0.0,
            margin,
        }
    }

    fn non_strict(condition: &str, lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        let slack = NONSTRICT_RTOL * lhs.abs().max(rhs.abs()).max(1.0);
        Self {
            condition: condition.to_owned(),
            lhs,
            rhs,
            pass: margin >= -slack,
            margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeasibilityReport {
    pub conditions: Vec<ConditionCheck>,
}

impl FeasibilityReport {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.conditions.iter().filter(|c| !c.pass)
    }

    pub fn get(&self, condition: &str) -> Option<&ConditionCheck> {
        self.conditions.iter().find(|c| c.condition == condition)
    }
}

/// Limits a variant imposes, before the strict/non-strict comparison.
struct Limits {
    /// Velocity budget `v_max` (symmetric) or half-width.
    width: f64,
    alpha_lo: f64,
    /// Numerator load subtracted from `b_min alpha`.
    load: f64,
    /// Denominator multiplier of `k`'s bound, before `d_i`.
    k_den: f64,
    uses_degree: bool,
}

fn limits(variant: ControllerVariant, b: &UncertaintyBounds, c: &ConstraintSpec) -> Limits {
    let load = b.tau_max + b.damping_load(variant, c);
    match variant {
        ControllerVariant::SymmetricTanh => Limits {
            width: c.v_max,
            alpha_lo: load / b.b_min,
            load,
            k_den: 2.0 * c.v_max,
            uses_degree: true,
        },
        ControllerVariant::FilterBased => Limits {
            width: c.v_max,
            alpha_lo: load / b.b_min,
            load,
            k_den: 2.0 * c.v_max,
            uses_degree: false,
        },
        ControllerVariant::AsymmetricTanh | ControllerVariant::PiecewiseSat | ControllerVariant::Manipulator => {
            Limits {
                width: c.half_width(),
                alpha_lo: load / b.b_min,
                load,
                k_den: c.v_max - c.v_min,
                uses_degree: true,
            }
        }
    }
}

fn k_limit(l: &Limits, b: &UncertaintyBounds, alpha: f64, d_i: f64) -> f64 {
    let degree = if l.uses_degree { d_i } else { 1.0 };
    let num = b.b_min * alpha - l.load;
    if degree == 0.0 {
        f64::INFINITY
    } else {
        num / (degree * l.k_den)
    }
}

/// Evaluates every inequality of the variant's sufficient condition set.
pub fn check_feasibility(
    variant: ControllerVariant,
    p: &AgentControllerParams,
    bounds: &UncertaintyBounds,
    c: &ConstraintSpec,
    d_i: f64,
) -> FeasibilityReport {
    let l = limits(variant, bounds, c);
    let (m_name, z_name, alpha_name, k_name) = match variant {
        ControllerVariant::SymmetricTanh => (
            "m < v_max",
            "z <= v_max - m",
            "tau_max/b_min < alpha",
            "k < (b_min*alpha - tau_max)/(2*d_i*v_max)",
        ),
        ControllerVariant::FilterBased => (
            "m < v_max",
            "z <= v_max - m",
            "tau_max/b_min < alpha",
            "k < (b_min*alpha - tau_max)/(2*v_max)",
        ),
        ControllerVariant::AsymmetricTanh | ControllerVariant::PiecewiseSat => (
            "m < (v_max - v_min)/2",
            "z <= (v_max - v_min)/2 - m",
            "tau_max/b_min < alpha",
            "k < (b_min*alpha - tau_max)/(d_i*(v_max - v_min))",
        ),
        ControllerVariant::Manipulator => (
            "m < (v_max - v_min)/2",
            "z <= (v_max - v_min)/2 - m",
            "(tau_max + phi_max*v_bar)/b_min < alpha",
            "k < (b_min*alpha - tau_max - phi_max*v_bar)/(d_i*(v_max - v_min))",
        ),
    };
    FeasibilityReport {
        conditions: vec![
            ConditionCheck::strict(m_name, p.m, l.width),
            ConditionCheck::strict(alpha_name, l.alpha_lo, p.alpha),
            ConditionCheck::strict("alpha < u_max", p.alpha, c.u_max),
            ConditionCheck::non_strict(z_name, p.z, l.width - p.m),
            ConditionCheck::strict(k_name, p.k, k_limit(&l, bounds, p.alpha, d_i)),
        ],
    }
}

/// Places every parameter at fraction `safety` of its admissible interval.
pub fn suggest_params(
    variant: ControllerVariant,
    bounds: &UncertaintyBounds,
    c: &ConstraintSpec,
    d_i: f64,
    safety: f64,
) -> Result<AgentControllerParams, ControllerError> {
    if !(safety > 0.0 && safety < 1.0) {
        return Err(ControllerError::InvalidParameter {
            name: "safety",
            value: safety,
            reason: "must lie in (0, 1)",
        });
    }
    bounds.validate(variant, c)?;
    let l = limits(variant, bounds, c);
    if l.alpha_lo >= c.u_max {
        return Err(ControllerError::InfeasibleProblem(format!(
            "alpha interval ({}, {}) is empty",
            l.alpha_lo, c.u_max
        )));
    }
    let alpha = 0.5 * (l.alpha_lo + c.u_max);
    let m = safety * l.width;
    let z = safety * (l.width - m);
    let mut k_cap = k_limit(&l, bounds, alpha, d_i);
    if !k_cap.is_finite() {
        // No in-neighbors: any k works; size it as for a unit degree.
        k_cap = k_limit(&l, bounds, alpha, 1.0);
    }
    Ok(AgentControllerParams {
        m,
        alpha,
        z,
        k: safety * k_cap,
        gamma: DEFAULT_GAMMA,
    })
}

/// Upper bounds on the time to reach `|e| <= z` (`t1`) and then `e = 0` (`t2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettlingBounds {
    pub t1: f64,
    pub t2: f64,
    pub mu: f64,
}

impl SettlingBounds {
    pub fn total(&self) -> f64 {
        self.t1 + self.t2
    }
}

/// Settling-time bounds of the tracking error.
///
/// With `w` the velocity budget (`v_max`, or the half-width for centered
/// references) and `d` the in-degree (1 for the filter variant):
///
/// ```text
/// t1 = (w + m - z) / (b_min (u_max - alpha))
/// mu = b_min alpha - tau_max [- phi_max v_bar] - 2 k d w
/// t2 = lambda / (2^((gamma-1)/2) b_min (u_max - alpha) (gamma - 1)) + 1 / (2^(-1/2) mu)
/// ```
pub fn settling_bounds(
    variant: ControllerVariant,
    p: &AgentControllerParams,
    bounds: &UncertaintyBounds,
    c: &ConstraintSpec,
    d_i: f64,
) -> Result<SettlingBounds, ControllerError> {
    let l = limits(variant, bounds, c);
    let gap = c.u_max - p.alpha;
    if !(gap > 0.0) {
        return Err(ControllerError::InfeasibleParams {
            alpha: p.alpha,
            u_max: c.u_max,
        });
    }
    let degree = if l.uses_degree { d_i } else { 1.0 };
    let mu = bounds.b_min * p.alpha - l.load - p.k * degree * l.k_den;
    if !(mu > 0.0) {
        return Err(ControllerError::NonpositiveMu(mu));
    }
    let drive = bounds.b_min * gap;
    let t1 = (l.width + p.m - p.z) / drive;
    let t2 = p.lambda() / (2f64.powf((p.gamma - 1.0) / 2.0) * drive * (p.gamma - 1.0)) + 1.0 / (2f64.powf(-0.5) * mu);
    Ok(SettlingBounds { t1, t2, mu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(alpha: f64, z: f64, k: f64) -> AgentControllerParams {
        AgentControllerParams {
            m: 0.9,
            alpha,
            z,
            k,
            gamma: 1.5,
        }
    }

    fn view(x: f64, neighbors: &[(f64, f64)]) -> NeighborView<'_> {
        NeighborView {
            own_position: x,
            own_velocity: 0.0,
            neighbor_positions: neighbors,
            filter_state: None,
        }
    }

    #[test]
    fn relative_position_sum_examples() {
        assert_eq!(view(3.0, &[(1.0, 3.0), (2.0, 3.0)]).relative_position_sum(), 0.0);
        assert_eq!(view(1.0, &[(1.0, 0.0)]).relative_position_sum(), 1.0);
        assert_eq!(relative_position_sum(&view(2.0, &[(0.5, 1.0), (2.0, 3.0)])), -1.5);
    }

    #[test]
    fn reference_velocity_examples() {
        let p = params(1.8, 0.1, 0.5);
        let sym = ConstraintSpec::symmetric(1.0, 2.0);
        let r = reference_velocity(ControllerVariant::SymmetricTanh, &view(0.0, &[]), &p, &sym).unwrap();
        assert_eq!(r, 0.0);

        let asym = ConstraintSpec {
            v_min: 0.5,
            v_max: 1.5,
            u_max: 2.0,
        };
        let p_asym = AgentControllerParams { m: 0.4, ..p };
        let r = reference_velocity(
            ControllerVariant::AsymmetricTanh,
            &view(1.0, &[(1.0, 1.0)]),
            &p_asym,
            &asym,
        )
        .unwrap();
        assert_eq!(r, 1.0);

        // Linear region of varrho: |eta| <= 2m/(3k) = 0.5333.
        let nb = [(1.0, 0.0)];
        let r = reference_velocity(ControllerVariant::PiecewiseSat, &view(0.3, &nb), &p_asym, &asym).unwrap();
        assert_relative_eq!(r, 1.0 - 0.5 * 0.3, epsilon = 1e-15);

        assert_eq!(
            reference_velocity(ControllerVariant::FilterBased, &view(0.0, &[]), &p, &sym),
            Err(ControllerError::MissingFilterState)
        );
        let mut v = view(1.0, &[]);
        v.filter_state = Some(0.0);
        let r = reference_velocity(ControllerVariant::FilterBased, &v, &p, &sym).unwrap();
        assert_relative_eq!(r, -0.9 * (0.5f64 / 0.9).tanh(), epsilon = 1e-15);
    }

    #[test]
    fn tracking_error_examples() {
        assert_eq!(tracking_error(1.0, 1.0), 0.0);
        assert_relative_eq!(tracking_error(0.5, -0.9), 1.4, epsilon = 1e-15);
        assert_relative_eq!(tracking_error(-1.0, 0.9), -1.9, epsilon = 1e-15);
    }

    #[test]
    fn control_examples() {
        let p = params(1.8, 0.1, 0.2);
        assert_eq!(control(0.0, &p, 2.0).unwrap(), 0.0);
        assert_eq!(control(0.1, &p, 2.0).unwrap(), -2.0);
        assert_eq!(control(-0.1, &p, 2.0).unwrap(), 2.0);
        // -(0.2 * 0.5^1.5 + 1.8)
        let expected = -(0.2 * 0.5f64.powf(1.5) + 1.8);
        assert_relative_eq!(control(0.05, &p, 2.0).unwrap(), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, -1.870_710_678_118_654_8, max_relative = 1e-15);
        assert!(matches!(
            control(0.01, &params(2.0, 0.1, 0.2), 2.0),
            Err(ControllerError::InfeasibleParams { .. })
        ));
    }

    #[test]
    fn filter_derivative_examples() {
        assert_eq!(filter_derivative(2.0, &[(1.0, 2.0), (0.5, 2.0)], 0.9), 0.0);
        assert_relative_eq!(filter_derivative(1.0, &[(1.0, 0.0)], 0.9), -0.685_434_7, epsilon = 1e-6);
        assert_eq!(filter_derivative(5.0, &[], 0.9), 0.0);
    }

    fn manipulator_bounds() -> UncertaintyBounds {
        UncertaintyBounds {
            b_min: 1.0,
            tau_max: 0.5,
            phi_max: 0.8,
        }
    }

    #[test]
    fn feasibility_manipulator_symmetric_window() {
        // v_bar = 1: alpha lower bound (0.5 + 0.8)/1 = 1.3.
        let c = ConstraintSpec::symmetric(1.0, 2.0);
        let p = params(1.8, 0.1, 0.5);
        let report = check_feasibility(ControllerVariant::Manipulator, &p, &manipulator_bounds(), &c, 1.0);
        let lo = report.get("(tau_max + phi_max*v_bar)/b_min < alpha").unwrap();
        assert!(lo.pass);
        assert_relative_eq!(lo.lhs, 1.3, epsilon = 1e-15);
        assert_relative_eq!(lo.margin, 0.5, epsilon = 1e-15);
        let hi = report.get("alpha < u_max").unwrap();
        assert!(hi.pass);
        assert_relative_eq!(hi.margin, 0.2, epsilon = 1e-15);
        // k bound (1.8 - 0.5 - 0.8)/(1 * 2) = 0.25 < 0.5.
        let k = report.conditions.last().unwrap();
        assert!(!k.pass);
        assert_relative_eq!(k.rhs, 0.25, epsilon = 1e-15);
        // z = 0.1 meets z <= 1 - 0.9 with equality.
        assert!(report.get("z <= (v_max - v_min)/2 - m").unwrap().pass);
    }

    #[test]
    fn feasibility_manipulator_asymmetric_window() {
        // v_bar = 1.5: alpha lower bound (0.5 + 1.2)/1 = 1.7,
        // k bound (1.8 - 0.5 - 1.2)/(1 * 1) = 0.1.
        let c = ConstraintSpec {
            v_min: 0.5,
            v_max: 1.5,
            u_max: 2.0,
        };
        let p = AgentControllerParams {
            m: 0.4,
            ..params(1.8, 0.1, 0.5)
        };
        let report = check_feasibility(ControllerVariant::Manipulator, &p, &manipulator_bounds(), &c, 1.0);
        let lo = &report.conditions[1];
        assert!(lo.pass);
        assert_relative_eq!(lo.margin, 0.1, epsilon = 1e-12);
        let k = report.conditions.last().unwrap();
        assert!(!k.pass);
        assert_relative_eq!(k.rhs, 0.1, epsilon = 1e-12);
        assert_eq!(report.failures().count(), 1);
    }

    #[test]
    fn feasibility_alpha_at_u_max_fails_with_zero_margin() {
        let c = ConstraintSpec::symmetric(1.0, 2.0);
        let b = UncertaintyBounds {
            b_min: 1.0,
            tau_max: 0.5,
            phi_max: 0.0,
        };
        let report = check_feasibility(ControllerVariant::SymmetricTanh, &params(2.0, 0.1, 0.1), &b, &c, 1.0);
        let hi = report.get("alpha < u_max").unwrap();
        assert!(!hi.pass);
        assert_eq!(hi.margin, 0.0);
    }

    #[test]
    fn filter_conditions_ignore_degree() {
        let c = ConstraintSpec::symmetric(1.0, 2.0);
        let b = UncertaintyBounds {
            b_min: 1.0,
            tau_max: 0.5,
            phi_max: 0.0,
        };
        let p = params(1.8, 0.1, 0.5);
        let r1 = check_feasibility(ControllerVariant::FilterBased, &p, &b, &c, 1.0);
        let r7 = check_feasibility(ControllerVariant::FilterBased, &p, &b, &c, 7.0);
        assert_eq!(r1, r7);
        assert!(r1.all_pass());
        assert_relative_eq!(r1.conditions[4].rhs, 0.65, epsilon = 1e-15);
    }

    #[test]
    fn suggest_params_manipulator() {
        let c = ConstraintSpec {
            v_min: 0.5,
            v_max: 1.5,
            u_max: 2.0,
        };
        let b = manipulator_bounds();
        let p = suggest_params(ControllerVariant::Manipulator, &b, &c, 1.0, 0.5).unwrap();
        // alpha midpoint of (1.7, 2), m = 0.5 * 0.5, z = 0.5 * (0.5 - 0.25),
        // k = 0.5 * (1.85 - 1.7) / 1.
        assert_relative_eq!(p.alpha, 1.85, epsilon = 1e-12);
        assert_relative_eq!(p.m, 0.25, epsilon = 1e-15);
        assert_relative_eq!(p.z, 0.125, epsilon = 1e-15);
        assert_relative_eq!(p.k, 0.075, epsilon = 1e-12);
        let report = check_feasibility(ControllerVariant::Manipulator, &p, &b, &c, 1.0);
        assert!(report.conditions.iter().all(|c| c.pass && c.margin > 0.0));

        // Symmetric window gives the alpha = 1.65 midpoint of (1.3, 2).
        let p = suggest_params(
            ControllerVariant::Manipulator,
            &b,
            &ConstraintSpec::symmetric(1.0, 2.0),
            1.0,
            0.5,
        )
        .unwrap();
        assert_relative_eq!(p.alpha, 1.65, epsilon = 1e-12);
    }

    #[test]
    fn suggest_params_rejects_uncontrollable() {
        let c = ConstraintSpec::symmetric(1.0, 2.0);
        let b = UncertaintyBounds {
            b_min: 1.0,
            tau_max: 2.0,
            phi_max: 0.0,
        };
        assert!(matches!(
            suggest_params(ControllerVariant::SymmetricTanh, &b, &c, 1.0, 0.5),
            Err(ControllerError::InfeasibleProblem(_))
        ));
        let b = UncertaintyBounds { tau_max: 0.5, ..b };
        assert!(suggest_params(ControllerVariant::SymmetricTanh, &b, &c, 1.0, 1.0).is_err());
    }

    #[test]
    fn suggest_params_margins_vanish_as_safety_approaches_one() {
        let c = ConstraintSpec::symmetric(1.0, 2.0);
        let b = UncertaintyBounds {
            b_min: 1.0,
            tau_max: 0.5,
            phi_max: 0.0,
        };
        let p = suggest_params(ControllerVariant::SymmetricTanh, &b, &c, 2.0, 1.0 - 1e-9).unwrap();
        let report = check_feasibility(ControllerVariant::SymmetricTanh, &p, &b, &c, 2.0);
        assert!(report.all_pass());
        assert!(report.get("m < v_max").unwrap().margin < 1e-8);
        assert!(report.conditions[4].margin < 1e-8);
    }

    #[test]
    fn settling_bounds_examples() {
        let c = ConstraintSpec::symmetric(1.0, 2.0);
        let b = UncertaintyBounds {
            b_min: 1.0,
            tau_max: 0.5,
            phi_max: 0.0,
        };
        let p = params(1.8, 0.1, 0.2);
        let s = settling_bounds(ControllerVariant::SymmetricTanh, &p, &b, &c, 1.0).unwrap();
        assert_relative_eq!(s.t1, 9.0, epsilon = 1e-12);
        assert_relative_eq!(s.mu, 0.9, epsilon = 1e-12);
        // lambda / (2^0.25 * 0.2 * 0.5) + sqrt(2) / 0.9, evaluated independently.
        let lambda = 0.1f64.powf(1.5);
        let t2 = lambda / (2f64.sqrt().sqrt() * 0.1) + 2f64.sqrt() / 0.9;
        assert_relative_eq!(s.t2, t2, max_relative = 1e-13);
        assert_relative_eq!(s.t2, 1.837_26, epsilon = 1e-5);

        assert!(matches!(
            settling_bounds(ControllerVariant::SymmetricTanh, &params(2.0, 0.1, 0.2), &b, &c, 1.0),
            Err(ControllerError::InfeasibleParams { .. })
        ));
        assert!(matches!(
            settling_bounds(ControllerVariant::SymmetricTanh, &params(1.8, 0.1, 1.0), &b, &c, 1.0),
            Err(ControllerError::NonpositiveMu(_))
        ));
    }

    #[test]
    fn bounds_validation_flags_uncontrollable_manipulator() {
        let c = ConstraintSpec {
            v_min: 0.5,
            v_max: 1.5,
            u_max: 1.0,
        };
        let err = manipulator_bounds()
            .validate(ControllerVariant::Manipulator, &c)
            .unwrap_err();
        assert!(matches!(err, ControllerError::InfeasibleProblem(_)));
        assert!(manipulator_bounds()
            .validate(ControllerVariant::Manipulator, &ConstraintSpec { u_max: 2.0, ..c })
            .is_ok());
    }
}
