//! Even analytic functions of the bend angle, expressed in `u = θ²`.
//!
//! Every PCC quantity in this crate depends on θ only through
//! `sin θ / θ` and `(1 - cos θ) / θ²`. Both are entire functions of `u`, so
//! writing them (and their first two `u`-derivatives) in `u` removes the
//! removable singularity at the straight configuration entirely. Near zero the
//! closed forms lose every significant digit to cancellation, so the series is
//! used for `u < SERIES_LIMIT`.

const TERMS: usize = 14;

/// Switch point in `u`. At `u = 1` the truncation error of a 14-term series is
/// below 1e-25 and the closed-form second derivatives have lost fewer than two
/// digits.
const SERIES_LIMIT: f64 = 1.0;

const fn alternating_inverse_factorials(shift: usize) -> [f64; TERMS] {
    let mut out = [0.0; TERMS];
    let mut k = 0;
    while k < TERMS {
        let n = 2 * k + shift;
        let mut fact = 1.0;
        let mut i = 2;
        while i <= n {
            fact *= i as f64;
            i += 1;
        }
        out[k] = if k % 2 == 0 { 1.0 / fact } else { -1.0 / fact };
        k += 1;
    }
    out
}

/// Σ (-1)^k u^k / (2k+1)!  =  sin θ / θ
const SINC_COEFFS: [f64; TERMS] = alternating_inverse_factorials(1);
/// Σ (-1)^k u^k / (2k+2)!  =  (1 - cos θ) / θ²
const COSC_COEFFS: [f64; TERMS] = alternating_inverse_factorials(2);

/// Value and first two derivatives with respect to `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taylor2 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

fn series(coeffs: &[f64; TERMS], u: f64) -> Taylor2 {
    let mut value = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for k in (0..TERMS).rev() {
        let c = coeffs[k];
        value = value * u + c;
        if k >= 1 {
            d1 = d1 * u + k as f64 * c;
        }
        if k >= 2 {
            d2 = d2 * u + (k * (k - 1)) as f64 * c;
        }
    }
    Taylor2 { value, d1, d2 }
}

/// Converts θ-derivatives of an even function into `u`-derivatives.
fn theta_to_u(theta: f64, value: f64, f_t: f64, f_tt: f64) -> Taylor2 {
    Taylor2 {
        value,
        d1: f_t / (2.0 * theta),
        d2: (theta * f_tt - f_t) / (4.0 * theta.powi(3)),
    }
}

/// `sin θ / θ` with `θ = sqrt(u)`.
pub fn sinc(u: f64) -> Taylor2 {
    if u < SERIES_LIMIT {
        return series(&SINC_COEFFS, u);
    }
    let t = u.sqrt();
    let (s, c) = t.sin_cos();
    let f = s / t;
    let f_t = (t * c - s) / u;
    let f_tt = -s / t - 2.0 * c / u + 2.0 * s / (u * t);
    theta_to_u(t, f, f_t, f_tt)
}

/// `(1 - cos θ) / θ²` with `θ = sqrt(u)`.
pub fn cosc(u: f64) -> Taylor2 {
    if u < SERIES_LIMIT {
        return series(&COSC_COEFFS, u);
    }
    let t = u.sqrt();
    let (s, c) = t.sin_cos();
    let one_minus_cos = 1.0 - c;
    let f = one_minus_cos / u;
    let f_t = s / u - 2.0 * one_minus_cos / (u * t);
    let f_tt = c / u - 4.0 * s / (u * t) + 6.0 * one_minus_cos / (u * u);
    theta_to_u(t, f, f_t, f_tt)
}
