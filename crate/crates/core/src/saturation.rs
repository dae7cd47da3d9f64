//! Scalar saturation primitives shared by every controller variant.

/// `tanh` saturates to +-1 in double precision well before this.
const TANH_ARG_CLAMP: f64 = 40.0;

/// Signum with `sgn(0) = 0`.
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `|x|^gamma * sgn(x)`.
pub fn signed_power(x: f64, gamma: f64) -> f64 {
    sgn(x) * x.abs().powf(gamma)
}

/// Power-law saturation: `sgn(e)|e|^gamma` inside `(-z, z)`, `+-z^gamma` outside.
pub fn sigma(e: f64, z: f64, gamma: f64) -> f64 {
    let lambda = z.powf(gamma);
    if e >= z {
        lambda
    } else if e <= -z {
        -lambda
    } else {
        signed_power(e, gamma)
    }
}

/// `-m tanh(k eta / m)`.
pub fn tanh_reference(eta: f64, k: f64, m: f64) -> f64 {
    let arg = (k * eta / m).clamp(-TANH_ARG_CLAMP, TANH_ARG_CLAMP);
    -m * arg.tanh()
}

/// Five-branch C^1 saturation: linear `k s` on `|s| <= 2m/(3k)`, quadratic
/// blend up to `|s| = 4m/(3k)`, constant `+-m` beyond.
pub fn varrho(s: f64, k: f64, m: f64) -> f64 {
    let inner = 2.0 * m / (3.0 * k);
    let outer = 4.0 * m / (3.0 * k);
    let quad = 3.0 / (4.0 * m) * k * k * s * s;
    if s >= outer {
        m
    } else if s >= inner {
        (2.0 * k * s - quad - m / 3.0).min(m)
    } else if s >= -inner {
        k * s
    } else if s >= -outer {
        (2.0 * k * s + quad + m / 3.0).max(-m)
    } else {
        -m
    }
}

/// Analytic derivative of [`varrho`]; lies in `[0, k]`.
pub fn varrho_derivative(s: f64, k: f64, m: f64) -> f64 {
    let inner = 2.0 * m / (3.0 * k);
    let outer = 4.0 * m / (3.0 * k);
    let curve = 3.0 / (2.0 * m) * k * k * s;
    if s >= outer || s < -outer {
        0.0
    } else if s >= inner {
        2.0 * k - curve
    } else if s >= -inner {
        k
    } else {
        2.0 * k + curve
    }
}

/// `int_0^s varrho(t) dt`, used by the Lyapunov function of the piecewise
/// variant. Even in `s`, nonnegative, zero only at the origin.
pub fn varrho_integral(s: f64, k: f64, m: f64) -> f64 {
    let a = s.abs();
    let inner = 2.0 * m / (3.0 * k);
    let outer = 4.0 * m / (3.0 * k);
    let linear = |x: f64| 0.5 * k * x * x;
    let quad = |x: f64| k * x * x - k * k * x * x * x / (4.0 * m) - m * x / 3.0;
    if a <= inner {
        linear(a)
    } else if a <= outer {
        linear(inner) + quad(a) - quad(inner)
    } else {
        linear(inner) + quad(outer) - quad(inner) + m * (a - outer)
    }
}

/// Numerically stable `ln(cosh(x))`.
pub fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}
