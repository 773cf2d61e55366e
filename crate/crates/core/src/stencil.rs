//! Centered finite-difference stencils for the second derivative.
//!
//! Coefficients are generated in exact rational arithmetic using the ratio
//! recurrence
//!
//! ```text
//! d_1     = 2a / (a + 1)
//! d_{j+1} = -d_j * j^2 (a - j) / ((j + 1)^2 (a + j + 1))
//! d_0     = -sum_{j != 0} d_j,   d_{-j} = d_j
//! ```
//!
//! which equals `2 (-1)^{j+1} (a!)^2 / ((a+j)! (a-j)! j^2)` without ever
//! forming a factorial.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Default cap on the half-width `a`.
pub const DEFAULT_MAX_ORDER: usize = 64;

/// The (2a+1)-point centered second-derivative stencil of order 2a.
#[derive(Debug, Clone)]
pub struct StencilCoefficients {
    order: usize,
    exact: Vec<BigRational>,
    values: Vec<f64>,
    norm_sum_exact: BigRational,
    norm_sum: f64,
    moments: OnceLock<Vec<f64>>,
}

impl PartialEq for StencilCoefficients {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order && self.exact == other.exact
    }
}

impl StencilCoefficients {
    /// Half-width `a`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of points, `2a + 1`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Exact coefficients for `j = -a..=a`.
    pub fn exact(&self) -> &[BigRational] {
        &self.exact
    }

    /// Floating-point coefficients for `j = -a..=a`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Coefficient `d_j`; panics if `|j| > a`.
    pub fn coeff(&self, j: isize) -> f64 {
        self.values[(j + self.order as isize) as usize]
    }

    pub fn exact_coeff(&self, j: isize) -> &BigRational {
        &self.exact[(j + self.order as isize) as usize]
    }

    /// `d_0`.
    pub fn center(&self) -> f64 {
        self.coeff(0)
    }

    /// `sum_{j != 0} |d_j|` as a float.
    pub fn norm_sum(&self) -> f64 {
        self.norm_sum
    }

    pub fn norm_sum_exact(&self) -> &BigRational {
        &self.norm_sum_exact
    }

    /// Nonzero offsets `-a..=-1, 1..=a` in the order used for LCU terms.
    pub fn offsets(&self) -> impl Iterator<Item = isize> + '_ {
        let a = self.order as isize;
        (-a..=a).filter(|&j| j != 0)
    }

    /// Eigenvalue of the periodic stencil on the plane wave `e^{ikx}`:
    /// `h^{-2} (d_0 + 2 sum_{j>=1} d_j cos(j k h))`.
    pub fn dispersion(&self, k: f64, h: f64) -> f64 {
        let theta = k * h;
        let mut acc = self.center();
        for j in 1..=self.order {
            acc += 2.0 * self.coeff(j as isize) * (j as f64 * theta).cos();
        }
        acc / (h * h)
    }

    /// Dispersion error `lambda_FD(k) + k^2`.
    ///
    /// For `|k h| <= 2` this is summed from the exact even moments of the
    /// stencil, `sum_{p > a} (-1)^p (kh)^{2p} / (2p)! * sum_j d_j j^{2p}`,
    /// so the result keeps full relative precision even when it is many
    /// orders of magnitude below `k^2`. Larger `|k h|` falls back to the
    /// direct cosine sum, where no such cancellation occurs.
    pub fn dispersion_error(&self, k: f64, h: f64) -> f64 {
        let theta = (k * h).abs();
        if theta > 2.0 {
            return self.dispersion(k, h) + k * k;
        }
        if theta == 0.0 {
            return 0.0;
        }
        let a = self.order as f64;
        let x = a * theta;
        let moments = self.normalized_moments();
        // g_p = x^{2p} / (2p)!, starting at p = a + 1.
        let p0 = self.order + 1;
        let mut log_g = 0.0;
        for n in 1..=(2 * p0) {
            log_g += x.ln() - (n as f64).ln();
        }
        let mut g = log_g.exp();
        let mut sum = 0.0;
        for (offset, m) in moments.iter().enumerate() {
            let p = p0 + offset;
            let sign = if p.is_multiple_of(2) { 1.0 } else { -1.0 };
            let term = sign * g * m;
            sum += term;
            if g == 0.0 || (offset > 0 && term.abs() <= 1e-18 * sum.abs()) {
                break;
            }
            let n = (2 * p) as f64;
            g *= x * x / ((n + 1.0) * (n + 2.0));
        }
        sum / (h * h)
    }

    /// `sum_j d_j (j/a)^{2p}` for `p = a+1, a+2, ...`, converted from exact
    /// rationals.
    fn normalized_moments(&self) -> &[f64] {
        self.moments.get_or_init(|| {
            let a = self.order;
            let count = 12 * a + 40;
            let a_big = BigInt::from(a as u64);
            let a_sq = &a_big * &a_big;
            let p0 = a + 1;
            // j^{2 p0} for each positive j, advanced by j^2 per step.
            let mut powers: Vec<BigInt> = (1..=a)
                .map(|j| num_traits::pow(BigInt::from(j as u64), 2 * p0))
                .collect();
            let mut denom = num_traits::pow(a_big.clone(), 2 * p0);
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let mut acc = BigRational::zero();
                for (idx, pw) in powers.iter().enumerate() {
                    let j = idx as isize + 1;
                    acc += self.exact_coeff(j) * BigRational::from_integer(pw.clone());
                }
                acc *= BigRational::from_integer(BigInt::from(2));
                acc /= BigRational::from_integer(denom.clone());
                out.push(acc.to_f64().unwrap_or(0.0));
                for (idx, pw) in powers.iter_mut().enumerate() {
                    let j = BigInt::from(idx as u64 + 1);
                    *pw *= &j * &j;
                }
                denom *= &a_sq;
            }
            out
        })
    }
}

/// Stencil coefficients for half-width `a`, with the default cap.
pub fn fd_coefficients(a: usize) -> Result<StencilCoefficients> {
    fd_coefficients_capped(a, DEFAULT_MAX_ORDER)
}

/// Stencil coefficients for half-width `a` with an explicit cap on `a`.
pub fn fd_coefficients_capped(a: usize, max_order: usize) -> Result<StencilCoefficients> {
    if a == 0 || a > max_order {
        return Err(Error::InvalidOrder {
            order: a,
            max: max_order,
        });
    }
    let big = |n: usize| BigInt::from(n as u64);
    let mut positive = Vec::with_capacity(a);
    let mut d = BigRational::new(big(2 * a), big(a + 1));
    positive.push(d.clone());
    for j in 1..a {
        let num = big(j * j) * big(a - j);
        let den = big((j + 1) * (j + 1)) * big(a + j + 1);
        d = -d * BigRational::new(num, den);
        positive.push(d.clone());
    }
    let half: BigRational = positive.iter().fold(BigRational::zero(), |acc, x| acc + x);
    let two = BigRational::from_integer(big(2));
    let center = -(&two * &half);
    let norm_sum_exact = positive
        .iter()
        .fold(BigRational::zero(), |acc, x| acc + x.abs())
        * &two;

    let mut exact = Vec::with_capacity(2 * a + 1);
    exact.extend(positive.iter().rev().cloned());
    exact.push(center);
    exact.extend(positive.iter().cloned());

    let values = exact.iter().map(|r| r.to_f64().unwrap_or(f64::NAN)).collect();
    let norm_sum = norm_sum_exact.to_f64().unwrap_or(f64::NAN);
    Ok(StencilCoefficients {
        order: a,
        exact,
        values,
        norm_sum_exact,
        norm_sum,
        moments: OnceLock::new(),
    })
}

/// `sum_{j != 0} |d_j|` for half-width `a`.
pub fn coefficient_norm_sum(a: usize) -> Result<f64> {
    Ok(fd_coefficients(a)?.norm_sum())
}

/// Truncation-error bound for the (2a+1)-point formula:
/// `(pi^{3/2} / 9) e^{2a(1 - ln 2)} h^{2a-1} max_deriv`, where `max_deriv`
/// bounds `|psi^{(2a+1)}|`.
pub fn stencil_error_bound(a: usize, h: f64, max_deriv: f64) -> Result<f64> {
    if a == 0 {
        return Err(Error::InvalidOrder {
            order: a,
            max: DEFAULT_MAX_ORDER,
        });
    }
    if !(h > 0.0) {
        return Err(Error::Domain(format!("grid spacing must be positive, got {h}")));
    }
    if !(max_deriv >= 0.0) {
        return Err(Error::Domain(format!(
            "derivative bound must be nonnegative, got {max_deriv}"
        )));
    }
    let a = a as f64;
    let prefactor = PI.powf(1.5) / 9.0 * (2.0 * a * (1.0 - std::f64::consts::LN_2)).exp();
    Ok(prefactor * h.powf(2.0 * a - 1.0) * max_deriv)
}

/// Periodic application `out[i] = h^{-2} sum_j d_j samples[(i + j) mod n]`.
///
/// `period` must equal `samples.len()`.
pub fn apply_stencil(
    coeffs: &StencilCoefficients,
    samples: &[Complex64],
    h: f64,
    period: usize,
) -> Result<Vec<Complex64>> {
    let n = samples.len();
    if period != n {
        return Err(Error::Shape(format!(
            "period {period} does not match {n} samples"
        )));
    }
    if n < coeffs.len() {
        return Err(Error::Shape(format!(
            "stencil of {} points needs at least that many samples, got {n}",
            coeffs.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::Domain(format!("grid spacing must be positive, got {h}")));
    }
    let a = coeffs.order() as isize;
    let inv_h2 = 1.0 / (h * h);
    let out = (0..n)
        .map(|i| {
            let mut acc = Complex64::zero();
            for j in -a..=a {
                let idx = (i as isize + j).rem_euclid(n as isize) as usize;
                acc += samples[idx] * coeffs.coeff(j);
            }
            acc * inv_h2
        })
        .collect();
    Ok(out)
}

/// Exact rational `sum_j d_j f(x0 + j)` for a polynomial evaluated on the
/// unit-spaced lattice; used for exactness checks.
pub fn apply_exact<F>(coeffs: &StencilCoefficients, x0: &BigRational, f: F) -> BigRational
where
    F: Fn(&BigRational) -> BigRational,
{
    let a = coeffs.order() as isize;
    let mut acc = BigRational::zero();
    for j in -a..=a {
        let x = x0 + BigRational::from_integer(BigInt::from(j));
        acc += coeffs.exact_coeff(j) * f(&x);
    }
    acc
}

/// Exact monomial `x^p` as a rational.
pub fn monomial(x: &BigRational, p: usize) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..p {
        acc *= x;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    /// Independent weight generation: solve sum_j w_j j^{2q} = 2 delta_{q,1}
    /// for q = 0..a over the symmetric unknowns (w_0, w_1, .., w_a) by
    /// Gaussian elimination in exact arithmetic.
    fn vandermonde_weights(a: usize) -> Vec<BigRational> {
        let n = a + 1;
        let mut m: Vec<Vec<BigRational>> = Vec::with_capacity(n);
        for q in 0..n {
            let mut row = Vec::with_capacity(n + 1);
            for j in 0..n {
                let mult = if j == 0 { 1 } else { 2 };
                let val = if q == 0 {
                    BigRational::from_integer(BigInt::from(mult))
                } else {
                    BigRational::from_integer(BigInt::from(mult) * num_traits::pow(BigInt::from(j), 2 * q))
                };
                row.push(val);
            }
            row.push(if q == 1 { rat(2, 1) } else { rat(0, 1) });
            m.push(row);
        }
        for col in 0..n {
            let pivot = (col..n).find(|&r| !m[r][col].is_zero()).unwrap();
            m.swap(col, pivot);
            let p = m[col][col].clone();
            for c in col..=n {
                m[col][c] = &m[col][c] / &p;
            }
            for r in 0..n {
                if r != col && !m[r][col].is_zero() {
                    let f = m[r][col].clone();
                    for c in col..=n {
                        let v = &m[col][c] * &f;
                        m[r][c] -= v;
                    }
                }
            }
        }
        m.into_iter().map(|row| row[n].clone()).collect()
    }

    #[test]
    fn order_one_is_standard_three_point() {
        let c = fd_coefficients(1).unwrap();
        assert_eq!(c.exact(), &[rat(1, 1), rat(-2, 1), rat(1, 1)]);
    }

    #[test]
    fn order_two_matches_five_point() {
        let c = fd_coefficients(2).unwrap();
        assert_eq!(
            c.exact(),
            &[rat(-1, 12), rat(4, 3), rat(-5, 2), rat(4, 3), rat(-1, 12)]
        );
    }

    #[test]
    fn order_two_matches_closed_form() {
        // 2 (-1)^{j+1} (a!)^2 / ((a+j)! (a-j)! j^2) with a = 2
        let fact = |n: i64| (1..=n).product::<i64>().max(1);
        for j in 1..=2i64 {
            let sign = if (j + 1) % 2 == 0 { 1 } else { -1 };
            let expected = rat(sign * 2 * fact(2) * fact(2), fact(2 + j) * fact(2 - j) * j * j);
            assert_eq!(fd_coefficients(2).unwrap().exact_coeff(j as isize), &expected);
        }
    }

    #[test]
    fn recurrence_matches_vandermonde_solve() {
        for a in 1..=10 {
            let c = fd_coefficients(a).unwrap();
            let w = vandermonde_weights(a);
            for (j, wj) in w.iter().enumerate() {
                assert_eq!(c.exact_coeff(j as isize), wj, "a={a} j={j}");
            }
        }
    }

    #[test]
    fn symmetric_and_zero_sum() {
        for a in 1..=20 {
            let c = fd_coefficients(a).unwrap();
            for j in 1..=a as isize {
                assert_eq!(c.exact_coeff(j), c.exact_coeff(-j));
            }
            let total: BigRational = c.exact().iter().fold(BigRational::zero(), |s, x| s + x);
            assert!(total.is_zero());
        }
    }

    #[test]
    fn polynomial_exactness_small_orders() {
        let x0 = rat(7, 3);
        for a in 1..=6 {
            let c = fd_coefficients(a).unwrap();
            for p in 0..=(2 * a + 1) {
                let got = apply_exact(&c, &x0, |x| monomial(x, p));
                let expected = if p < 2 {
                    BigRational::zero()
                } else {
                    BigRational::from_integer(BigInt::from((p * (p - 1)) as u64)) * monomial(&x0, p - 2)
                };
                assert_eq!(got, expected, "a={a} p={p}");
            }
        }
    }

    #[test]
    fn norm_sums() {
        assert_eq!(coefficient_norm_sum(1).unwrap(), 2.0);
        assert_eq!(fd_coefficients(2).unwrap().norm_sum_exact(), &rat(17, 6));
        assert!(coefficient_norm_sum(50).unwrap() < 2.0 * PI * PI / 3.0);
    }

    #[test]
    fn invalid_orders() {
        assert!(matches!(fd_coefficients(0), Err(Error::InvalidOrder { .. })));
        assert!(matches!(fd_coefficients(65), Err(Error::InvalidOrder { .. })));
        assert!(fd_coefficients_capped(80, 100).is_ok());
        assert!(coefficient_norm_sum(0).is_err());
    }

    #[test]
    fn center_approaches_limit() {
        // The gap to -pi^2/3 closes like 2/a, not faster.
        let gap = |a: usize| fd_coefficients(a).unwrap().center() + PI * PI / 3.0;
        assert!(gap(64) > 0.0 && gap(64) < 0.032);
        for a in [16, 32, 64] {
            let scaled = gap(a) * a as f64;
            assert!((1.9..2.0).contains(&scaled), "a={a} a*gap={scaled}");
        }
        let mut prev = fd_coefficients(1).unwrap().center();
        assert_eq!(prev, -2.0);
        for a in 2..=64 {
            let cur = fd_coefficients(a).unwrap().center();
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn error_bound_values() {
        assert_eq!(stencil_error_bound(3, 0.5, 0.0).unwrap(), 0.0);
        let expected = PI.powf(1.5) / 9.0 * (2.0 * (1.0 - 2f64.ln())).exp();
        assert_relative_eq!(stencil_error_bound(1, 1.0, 1.0).unwrap(), expected, max_relative = 1e-15);
        assert_relative_eq!(expected, 0.6187 * 0.6137f64.exp(), max_relative = 1e-3);
        assert!(matches!(stencil_error_bound(1, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(stencil_error_bound(1, -1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn dispersion_series_agrees_with_cosine_sum() {
        // Where the direct sum is well-conditioned the two routes must agree.
        for a in 1..=6 {
            let c = fd_coefficients(a).unwrap();
            for &theta in &[0.8, 1.0, 1.5, 2.0] {
                let direct = c.dispersion(theta, 1.0) + theta * theta;
                let series = c.dispersion_error(theta, 1.0);
                assert!(
                    (direct - series).abs() <= 1e-13 + 1e-9 * direct.abs(),
                    "a={a} theta={theta} direct={direct} series={series}"
                );
            }
        }
    }

    #[test]
    fn dispersion_leading_term() {
        // For a=1: 2(cos t - 1) + t^2 = t^4/12 - t^6/360 + ...
        let c = fd_coefficients(1).unwrap();
        let t: f64 = 1e-3;
        let expected = t.powi(4) / 12.0 - t.powi(6) / 360.0;
        assert_relative_eq!(c.dispersion_error(t, 1.0), expected, max_relative = 1e-12);
    }

    #[test]
    fn apply_constant_and_quadratic() {
        let c = fd_coefficients(3).unwrap();
        let ones = vec![Complex64::new(1.0, 0.0); 16];
        for v in apply_stencil(&c, &ones, 0.3, 16).unwrap() {
            assert!(v.norm() < 1e-12);
        }
        let c1 = fd_coefficients(1).unwrap();
        let h = 0.25;
        let samples: Vec<Complex64> = (0..12)
            .map(|i| Complex64::new((i as f64 * h).powi(2), 0.0))
            .collect();
        let out = apply_stencil(&c1, &samples, h, 12).unwrap();
        for v in &out[1..11] {
            assert_relative_eq!(v.re, 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn apply_plane_wave_eigenvector() {
        let n = 32;
        let l = 2.0 * PI;
        let h = l / n as f64;
        for a in 1..=4 {
            let c = fd_coefficients(a).unwrap();
            for kappa in [1, 3, 7] {
                let k = 2.0 * PI * kappa as f64 / l;
                let samples: Vec<Complex64> =
                    (0..n).map(|i| Complex64::from_polar(1.0, k * i as f64 * h)).collect();
                let out = apply_stencil(&c, &samples, h, n).unwrap();
                let lambda = c.dispersion(k, h);
                for (o, s) in out.iter().zip(&samples) {
                    assert!((o - s * lambda).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn apply_shape_error() {
        let c = fd_coefficients(3).unwrap();
        let short = vec![Complex64::new(1.0, 0.0); 5];
        assert!(matches!(apply_stencil(&c, &short, 1.0, 5), Err(Error::Shape(_))));
        let ok = vec![Complex64::new(1.0, 0.0); 8];
        assert!(matches!(apply_stencil(&c, &ok, 1.0, 9), Err(Error::Shape(_))));
    }
}
