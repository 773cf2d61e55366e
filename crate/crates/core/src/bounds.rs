//! Closed-form discretization-error and resource bounds, with explicit
//! checks of the hypotheses each one needs.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::coulomb_bounds;
use crate::stencil::fd_coefficients;
use crate::taylor::truncation_order;

/// Name used when the box is too small for the worst-case plan.
pub const BOX_ASSUMPTION: &str = "k_max L > π(2e^{−1/3})^{2/ηD}";
pub const SPACING_ASSUMPTION: &str = "k_max h < e^{1/3}";
pub const ORDER_ASSUMPTION: &str = "k_max h < 2/e";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub eta: usize,
    pub dims: usize,
    /// Smallest particle mass.
    pub mass: f64,
    pub spacing: f64,
    pub order: usize,
    pub length: f64,
    pub k_max: f64,
    pub v_max: f64,
    pub v_prime_max: f64,
    pub time: f64,
    pub eps: f64,
    /// Share of `eps` given to each of the three error sources; `eps / 3`
    /// when unset.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Derivative prefactor of the optimistic plan.
    #[serde(default)]
    pub beta: Option<f64>,
}

impl BoundInputs {
    /// `eta * D`.
    pub fn coords(&self) -> usize {
        self.eta * self.dims
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(self.eps / 3.0)
    }

    /// `(k_max L / pi)^{eta D / 2}`.
    pub fn box_factor(&self) -> f64 {
        (self.k_max * self.length / PI).powf(self.coords() as f64 / 2.0)
    }

    /// Fill the potential bounds from the softened Coulomb formulas with
    /// `eta` equal charges `q`.
    pub fn with_coulomb(mut self, softening: f64, charge: f64) -> Self {
        let (v, vp) = coulomb_bounds(softening, &vec![charge; self.eta]);
        self.v_max = v;
        self.v_prime_max = vp;
        self
    }

    fn positive(&self, name: &str, v: f64) -> Result<()> {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
        Ok(())
    }

    fn nonnegative(&self, name: &str, v: f64) -> Result<()> {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be nonnegative, got {v}")));
        }
        Ok(())
    }

    /// Checks shared by every bound.
    pub fn validate(&self) -> Result<()> {
        if self.eta == 0 || self.dims == 0 {
            return Err(Error::Domain("eta and D must be positive".into()));
        }
        if self.order == 0 {
            return Err(Error::InvalidOrder {
                order: 0,
                max: crate::stencil::DEFAULT_MAX_ORDER,
            });
        }
        self.positive("mass", self.mass)?;
        self.positive("spacing", self.spacing)?;
        self.positive("length", self.length)?;
        self.positive("k_max", self.k_max)?;
        self.nonnegative("v_max", self.v_max)?;
        self.nonnegative("v_prime_max", self.v_prime_max)?;
        self.nonnegative("time", self.time)?;
        self.positive("eps", self.eps)?;
        self.positive("delta", self.delta())?;
        if let Some(b) = self.beta {
            self.positive("beta", b)?;
        }
        Ok(())
    }
}

/// `k^r / sqrt(2r + 1) (k / pi)^{N/2}`.
pub fn derivative_bound(r: u32, k_max: f64, n: usize) -> Result<f64> {
    if !(k_max > 0.0) {
        return Err(Error::Domain(format!("k_max must be positive, got {k_max}")));
    }
    Ok(k_max.powi(r as i32) / (2.0 * r as f64 + 1.0).sqrt() * (k_max / PI).powf(n as f64 / 2.0))
}

/// Kinetic prefactor without the `(k/pi)^{N/2}` factor:
/// `pi^{3/2} e^{2a(1 - ln 2)} / (18 m sqrt(4a + 3)) N k^{2a+1} h^{2a-1}`.
fn kinetic_core(inp: &BoundInputs) -> f64 {
    let a = inp.order as f64;
    PI.powf(1.5) * (2.0 * a * (1.0 - LN_2)).exp() / (18.0 * inp.mass * (4.0 * a + 3.0).sqrt())
        * inp.coords() as f64
        * inp.k_max.powf(2.0 * a + 1.0)
        * inp.spacing.powf(2.0 * a - 1.0)
}

pub fn kinetic_error_bound(inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    Ok(kinetic_core(inp) * (inp.k_max / PI).powf(inp.coords() as f64 / 2.0))
}

/// `(h N / 2) V' (k / pi)^{N/2}`.
pub fn potential_error_bound(inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    let n = inp.coords() as f64;
    Ok(inp.spacing * n / 2.0 * inp.v_prime_max * (inp.k_max / PI).powf(n / 2.0))
}

/// `[k N h / (2 sqrt 3) + t (kinetic + h N V' / 2)] (k L / pi)^{N/2}`.
pub fn combined_error_bound(inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    let n = inp.coords() as f64;
    let h = inp.spacing;
    let shift = inp.k_max * n * h / (2.0 * 3f64.sqrt());
    let evolution = inp.time * (kinetic_core(inp) + h * n * inp.v_prime_max / 2.0);
    Ok((shift + evolution) * inp.box_factor())
}

/// `3 sqrt(min(delta, sqrt(3/8)) / N) / k (k L / pi)^{-N/2}`.
pub fn normalization_h_bound(delta: f64, inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    let n = inp.coords() as f64;
    Ok(3.0 * (delta.min((3.0f64 / 8.0).sqrt()) / n).sqrt() / inp.k_max / inp.box_factor())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationPlan {
    pub spacing: f64,
    pub order: usize,
    /// Order from the closed form `(3/2) X / (1 - 3 ln(k h))`, reported for
    /// comparison; it does not always meet the budget.
    pub order_printed: usize,
    pub delta: f64,
    pub k_h: f64,
}

fn hypothesis(assumption: &str, detail: String) -> Error {
    Error::Hypothesis {
        assumption: assumption.into(),
        detail,
    }
}

/// Check `k_max L > pi (2 e^{-1/3})^{2/N}`.
pub fn check_box_assumption(inp: &BoundInputs) -> Result<()> {
    let n = inp.coords() as f64;
    let threshold = PI * (2.0 * (-1.0f64 / 3.0).exp()).powf(2.0 / n);
    let kl = inp.k_max * inp.length;
    if !(kl > threshold) {
        return Err(hypothesis(
            BOX_ASSUMPTION,
            format!("k_max L = {kl} does not exceed {threshold}"),
        ));
    }
    Ok(())
}

/// Smallest `a >= 1` with
/// `C e^{2a(1 - ln 2)} (k h)^{2a} / sqrt(4a + 3) <= delta`, using
/// `sqrt(4a + 3) >= sqrt 7`; `log_ratio = ln(C / (sqrt 7 delta))`.
fn required_order(log_ratio: f64, kh: f64) -> usize {
    let rate = 2.0 * (-kh.ln() - (1.0 - LN_2));
    ((log_ratio / rate).ceil()).max(1.0) as usize
}

fn printed_order(log_ratio: f64, kh: f64) -> usize {
    ((1.5 * log_ratio / (1.0 - 3.0 * kh.ln())).ceil()).max(1.0) as usize
}

fn finish_plan(inp: &BoundInputs, h: f64, prefactor: f64) -> Result<DiscretizationPlan> {
    let delta = inp.delta();
    let kh = inp.k_max * h;
    let third = (1.0f64 / 3.0).exp();
    if !(kh < third) {
        return Err(hypothesis(SPACING_ASSUMPTION, format!("k_max h = {kh}")));
    }
    if !(kh < 2.0 / std::f64::consts::E) {
        return Err(hypothesis(ORDER_ASSUMPTION, format!("k_max h = {kh}")));
    }
    let n = inp.coords() as f64;
    let c = PI.powf(1.5) * prefactor * n * inp.time * inp.k_max / (18.0 * inp.mass * h);
    let log_ratio = (c / (7f64.sqrt() * delta)).ln();
    Ok(DiscretizationPlan {
        spacing: h,
        order: required_order(log_ratio, kh),
        order_printed: printed_order(log_ratio, kh),
        delta,
        k_h: kh,
    })
}

/// Spacing and order meeting `eps` for any state under the momentum cutoff.
pub fn worst_case_plan(inp: &BoundInputs) -> Result<DiscretizationPlan> {
    inp.validate()?;
    check_box_assumption(inp)?;
    let n = inp.coords() as f64;
    let kl = inp.box_factor();
    let h = 2.0 * inp.delta() / (n * (inp.k_max + inp.v_prime_max * inp.time)) / kl;
    finish_plan(inp, h, kl)
}

/// As [`worst_case_plan`] with the box factor replaced by `beta`.
pub fn optimistic_plan(inp: &BoundInputs) -> Result<DiscretizationPlan> {
    inp.validate()?;
    let beta = inp.beta.unwrap_or(1.0);
    let n = inp.coords() as f64;
    let h = 2.0 * inp.delta() / (beta * n * (inp.k_max + inp.v_prime_max * inp.time));
    finish_plan(inp, h, beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryEstimate {
    pub segments: usize,
    pub truncation: usize,
    /// `3 K r`, for potential queries and adder applications alike.
    pub total_queries: u64,
    /// `lambda / M`.
    pub weight_rate: f64,
    pub kinetic_rate: f64,
    /// Segments needed by the kinetic part alone.
    pub kinetic_segments: usize,
    /// `3 K (r - r_kinetic)`: the share of queries attributable to the
    /// potential.
    pub potential_share: u64,
    /// `(N / (m h^2) + V_max) t * ln X / ln ln X` with
    /// `X = (N / (m h^2) + V_max) t / eps`.
    pub envelope: f64,
}

fn ceil_tol(x: f64) -> usize {
    let r = x.ceil();
    if r - x > 1.0 - 1e-12 * x.max(1.0) {
        (r - 1.0) as usize
    } else {
        r as usize
    }
}

/// Segment count, truncation order and query totals for the Taylor-series
/// simulation at the given spacing and order, with all masses at `mass`.
pub fn query_count(inp: &BoundInputs) -> Result<QueryEstimate> {
    inp.validate()?;
    if !(inp.eps < 1.0) {
        return Err(Error::Domain(format!("eps must be below 1, got {}", inp.eps)));
    }
    let coeffs = fd_coefficients(inp.order)?;
    let n = inp.coords() as f64;
    let h2 = inp.spacing * inp.spacing;
    let kinetic_rate = n * coeffs.norm_sum() / (2.0 * inp.mass * h2);
    let weight_rate = kinetic_rate + inp.v_max;
    let segments = ceil_tol(weight_rate * inp.time / LN_2).max(1);
    let kinetic_segments = ceil_tol(kinetic_rate * inp.time / LN_2).max(1);
    let truncation = truncation_order(inp.eps / (2.0 * segments as f64))?;
    let per = 3 * truncation as u64;
    let base = (n / (inp.mass * h2) + inp.v_max) * inp.time;
    let x = base / inp.eps;
    let envelope = if x > std::f64::consts::E.powf(std::f64::consts::E) {
        base * x.ln() / x.ln().ln()
    } else {
        base
    };
    Ok(QueryEstimate {
        segments,
        truncation,
        total_queries: per * segments as u64,
        weight_rate,
        kinetic_rate,
        kinetic_segments,
        potential_share: per * (segments - kinetic_segments.min(segments)) as u64,
        envelope,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    Worst,
    Optimistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub mode: PlanMode,
    pub inputs: BoundInputs,
    pub plan: DiscretizationPlan,
    pub derivative_bound_r1: f64,
    pub kinetic_error_bound: f64,
    pub potential_error_bound: f64,
    pub combined_error_bound: f64,
    pub total_error_bound: f64,
    pub normalization_h_bound: f64,
    pub queries: QueryEstimate,
    pub hypotheses: Vec<HypothesisCheck>,
}

/// Plan `(h, a)`, then evaluate every bound at the planned values. A violated
/// hypothesis aborts with [`Error::Hypothesis`].
pub fn bound_report(inp: &BoundInputs, mode: PlanMode) -> Result<BoundReport> {
    inp.validate()?;
    let mut hypotheses = Vec::new();
    let n = inp.coords() as f64;
    let threshold = PI * (2.0 * (-1.0f64 / 3.0).exp()).powf(2.0 / n);
    let box_ok = inp.k_max * inp.length > threshold;
    hypotheses.push(HypothesisCheck {
        name: BOX_ASSUMPTION.into(),
        holds: box_ok,
        detail: format!("k_max L = {}, threshold {threshold}", inp.k_max * inp.length),
    });
    let plan = match mode {
        PlanMode::Worst => worst_case_plan(inp)?,
        PlanMode::Optimistic => optimistic_plan(inp)?,
    };
    hypotheses.push(HypothesisCheck {
        name: SPACING_ASSUMPTION.into(),
        holds: true,
        detail: format!("k_max h = {}", plan.k_h),
    });
    hypotheses.push(HypothesisCheck {
        name: ORDER_ASSUMPTION.into(),
        holds: true,
        detail: format!("k_max h = {}", plan.k_h),
    });
    let mut planned = inp.clone();
    planned.spacing = plan.spacing;
    planned.order = plan.order;
    let combined = combined_error_bound(&planned)?;
    Ok(BoundReport {
        mode,
        inputs: inp.clone(),
        plan,
        derivative_bound_r1: derivative_bound(1, inp.k_max, inp.coords())?,
        kinetic_error_bound: kinetic_error_bound(&planned)?,
        potential_error_bound: potential_error_bound(&planned)?,
        combined_error_bound: combined,
        total_error_bound: combined + plan.delta,
        normalization_h_bound: normalization_h_bound(plan.delta, &planned)?,
        queries: query_count(&planned)?,
        hypotheses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> BoundInputs {
        BoundInputs {
            eta: 1,
            dims: 1,
            mass: 1.0,
            spacing: 0.1,
            order: 2,
            length: 10.0,
            k_max: 3.0,
            v_max: 0.0,
            v_prime_max: 0.0,
            time: 1.0,
            eps: 1e-3,
            delta: None,
            beta: None,
        }
    }

    #[test]
    fn derivative_bound_values() {
        assert!((derivative_bound(0, PI, 1).unwrap() - 1.0).abs() < 1e-15);
        let k: f64 = 2.5;
        let expected = k / 3f64.sqrt() * (k / PI).powf(1.5);
        assert!((derivative_bound(1, k, 3).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn kinetic_bound_unit_case() {
        let inp = BoundInputs {
            order: 1,
            spacing: 1.0,
            k_max: 1.0,
            ..base()
        };
        let expected = PI.powf(1.5) * (2.0 * (1.0 - LN_2)).exp() / (18.0 * 7f64.sqrt()) / PI.sqrt();
        assert!((kinetic_error_bound(&inp).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn kinetic_bound_decays_in_order() {
        let mut prev = f64::INFINITY;
        for a in 1..20 {
            let v = kinetic_error_bound(&BoundInputs { order: a, ..base() }).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn potential_bound_coulomb() {
        let inp = BoundInputs { eta: 2, ..base() }.with_coulomb(1.0, 1.0);
        assert!((inp.v_prime_max - 4.0 * 3f64.sqrt() / 9.0).abs() < 1e-15);
        assert_eq!(inp.v_max, 1.0);
        assert_eq!(potential_error_bound(&base()).unwrap(), 0.0);
    }

    #[test]
    fn combined_bound_time_zero_and_monotone() {
        let inp = BoundInputs { time: 0.0, ..base() };
        let expected = 3.0 * 0.1 / (2.0 * 3f64.sqrt()) * (30.0 / PI).sqrt();
        assert!((combined_error_bound(&inp).unwrap() - expected).abs() < 1e-14);
        let lo = combined_error_bound(&base()).unwrap();
        let hi_t = combined_error_bound(&BoundInputs { time: 2.0, ..base() }).unwrap();
        let hi_h = combined_error_bound(&BoundInputs { spacing: 0.2, ..base() }).unwrap();
        assert!(hi_t > lo && hi_h > lo);
    }

    #[test]
    fn normalization_clamp_and_scaling() {
        let a = normalization_h_bound(1.0, &base()).unwrap();
        let b = normalization_h_bound(5.0, &base()).unwrap();
        assert_eq!(a, b);
        let wide = normalization_h_bound(0.1, &BoundInputs { length: 40.0, ..base() }).unwrap();
        let narrow = normalization_h_bound(0.1, &base()).unwrap();
        assert!((narrow / wide - 2.0).abs() < 1e-12);
    }

    #[test]
    fn worst_case_recomposes_to_eps() {
        let inp = BoundInputs { eta: 2, dims: 1, time: 3.0, ..base() }.with_coulomb(1.0, 1.0);
        let plan = worst_case_plan(&inp).unwrap();
        let planned = BoundInputs {
            spacing: plan.spacing,
            order: plan.order,
            ..inp.clone()
        };
        assert!(combined_error_bound(&planned).unwrap() + plan.delta <= inp.eps);
    }

    #[test]
    fn worst_case_h_linear_in_eps() {
        let a = worst_case_plan(&base()).unwrap();
        let b = worst_case_plan(&BoundInputs { eps: 5e-4, ..base() }).unwrap();
        assert!((a.spacing / b.spacing - 2.0).abs() < 1e-12);
    }

    #[test]
    fn box_assumption_violation() {
        let inp = BoundInputs { length: 0.5, ..base() };
        match worst_case_plan(&inp) {
            Err(Error::Hypothesis { assumption, .. }) => assert_eq!(assumption, BOX_ASSUMPTION),
            other => panic!("expected hypothesis error, got {other:?}"),
        }
    }

    #[test]
    fn optimistic_ratio_and_reduction() {
        let inp = base();
        let w = worst_case_plan(&inp).unwrap();
        let o = optimistic_plan(&BoundInputs { beta: Some(1.0), ..inp.clone() }).unwrap();
        assert!((o.spacing / w.spacing - inp.box_factor()).abs() < 1e-9);
        let same = optimistic_plan(&BoundInputs {
            beta: Some(inp.box_factor()),
            ..inp.clone()
        })
        .unwrap();
        assert!((same.spacing - w.spacing).abs() < 1e-15);
        assert_eq!(same.order, w.order);
    }

    #[test]
    fn query_count_doubles_with_time() {
        let inp = BoundInputs { eta: 2, ..base() }.with_coulomb(1.0, 1.0);
        let q1 = query_count(&inp).unwrap();
        let q2 = query_count(&BoundInputs { time: 2.0, ..inp.clone() }).unwrap();
        // ceil(2x) >= 2 ceil(x) - 1
        assert!(q2.segments >= 2 * q1.segments - 1);
        assert!(q2.truncation >= q1.truncation);
        assert_eq!(q1.total_queries, 3 * q1.truncation as u64 * q1.segments as u64);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            kinetic_error_bound(&BoundInputs { spacing: 0.0, ..base() }),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            combined_error_bound(&BoundInputs { mass: -1.0, ..base() }),
            Err(Error::Domain(_))
        ));
    }
}
