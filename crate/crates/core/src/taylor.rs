//! Truncated Taylor series evolution.
//!
//! Two execution modes share one plan:
//! * effective mode applies `sum_{k<=K} (-i tau H_eff)^k / k!` matrix-free on
//!   the system register, with `H_eff = (1/M) sum_chi d_chi V_chi`;
//! * block-encoding mode builds `A = B select(W) B` on ancilla (x) system
//!   explicitly and runs one round of oblivious amplitude amplification per
//!   segment. Toy sizes only.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::StateVector;
use crate::hamiltonian::{LcuDecomposition, LcuTerm, QueryLedger};
use crate::oracle::SpectralPropagator;

/// Cap on the ancilla dimension of an explicit block encoding.
pub const ANCILLA_CAP: usize = 10_000;

/// Cap on the system dimension of an explicit block encoding.
pub const BLOCK_SYSTEM_CAP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorPlan {
    /// Total evolution time.
    pub time: f64,
    /// Number of segments `r`.
    pub segments: usize,
    /// Truncation order `K`.
    pub truncation: usize,
    /// Length of a full segment, `M ln 2 / lambda`.
    pub tau: f64,
    /// Length of the last segment (equal to `tau` unless shortened).
    pub final_tau: f64,
    pub scale_m: usize,
    pub lambda: f64,
    /// `sum_k (lambda tau / M)^k / k!` for a full segment.
    pub c_per_segment: f64,
    pub c_final: f64,
    pub eps: f64,
}

impl TaylorPlan {
    /// Queries of each kind charged per segment.
    pub fn queries_per_segment(&self) -> u64 {
        3 * self.truncation as u64
    }

    pub fn total_queries(&self) -> u64 {
        self.queries_per_segment() * self.segments as u64
    }

    pub fn segment_tau(&self, s: usize) -> f64 {
        if s + 1 == self.segments {
            self.final_tau
        } else {
            self.tau
        }
    }
}

/// `(ln 2)^{K+1} / (K+1)!`.
pub fn truncation_bound(k: usize) -> f64 {
    (1..=(k + 1)).fold(1.0, |v, n| v * LN_2 / n as f64)
}

/// Smallest `K >= 1` with `(ln 2)^{K+1} / (K+1)! <= target`.
pub fn truncation_order(target: f64) -> Result<usize> {
    if !(target > 0.0) {
        return Err(Error::Domain(format!("truncation target must be positive, got {target}")));
    }
    let mut k = 1;
    while truncation_bound(k) > target {
        k += 1;
        if k > 200 {
            return Err(Error::Domain(format!("truncation target {target} unreachable")));
        }
    }
    Ok(k)
}

fn exp_partial_sum(x: f64, k: usize) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..=k {
        term *= x / n as f64;
        sum += term;
    }
    sum
}

/// `r = ceil(lambda t / (M ln 2))` segments of length `M ln 2 / lambda`
/// (last one shortened), truncated at the smallest `K` whose remainder is at
/// most `eps / (2 r)`. `t = 0` gives an empty plan.
pub fn plan_evolution(decomp: &LcuDecomposition, t: f64, eps: f64) -> Result<TaylorPlan> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    let m = decomp.scale_m() as f64;
    let lambda = decomp.lambda();
    let tau = m * LN_2 / lambda;
    let x = t / tau;
    let segments = if t == 0.0 {
        0
    } else {
        let r = x.ceil();
        // Absorb rounding noise when x lands on an integer.
        let r = if r - x > 1.0 - 1e-12 * x.max(1.0) { r - 1.0 } else { r };
        (r as usize).max(1)
    };
    let truncation = truncation_order(eps / (2.0 * segments.max(1) as f64))?;
    let final_tau = if segments == 0 {
        0.0
    } else {
        t - (segments - 1) as f64 * tau
    };
    Ok(TaylorPlan {
        time: t,
        segments,
        truncation,
        tau,
        final_tau,
        scale_m: decomp.scale_m(),
        lambda,
        c_per_segment: exp_partial_sum(LN_2, truncation),
        c_final: exp_partial_sum(lambda * final_tau / m, truncation),
        eps,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub segment: usize,
    pub tau: f64,
    pub norm: f64,
    pub drift: f64,
    /// OAA residual against the exact segment propagator, block mode only.
    pub residual: Option<f64>,
    pub success_probability: Option<f64>,
    pub potential_queries: u64,
    pub adder_applications: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentReport {
    pub mode: String,
    pub plan: TaylorPlan,
    pub segments: Vec<SegmentRecord>,
    pub final_norm: f64,
}

/// One segment of the truncated series in place.
fn taylor_segment(decomp: &LcuDecomposition, psi: &mut [Complex64], tau: f64, order: usize) {
    let mut term = psi.to_vec();
    let mut next = vec![Complex64::new(0.0, 0.0); psi.len()];
    for k in 1..=order {
        decomp.apply_effective(&term, &mut next);
        let scale = Complex64::new(0.0, -tau / k as f64);
        for (t, n) in term.iter_mut().zip(&next) {
            *t = n * scale;
        }
        for (p, t) in psi.iter_mut().zip(&term) {
            *p += t;
        }
    }
}

fn check_input(decomp: &LcuDecomposition, psi: &StateVector) -> Result<()> {
    if !psi.grid().same_geometry(decomp.grid()) {
        return Err(Error::Shape("state and decomposition use different grids".into()));
    }
    if !psi.is_normalized() {
        return Err(Error::ContractViolation(format!(
            "input state has squared norm {}, expected 1",
            psi.norm_sq()
        )));
    }
    Ok(())
}

/// Effective-mode evolution. No renormalization between segments; a
/// per-segment norm drift above `10 eps / r` is an error.
pub fn evolve_effective(
    decomp: &LcuDecomposition,
    psi: &StateVector,
    plan: &TaylorPlan,
    ledger: &QueryLedger,
) -> Result<(StateVector, SegmentReport)> {
    check_input(decomp, psi)?;
    let mut amps = psi.amplitudes().to_vec();
    let limit = 10.0 * plan.eps / plan.segments.max(1) as f64;
    let mut records = Vec::with_capacity(plan.segments);
    let mut norm = psi.norm();
    for s in 0..plan.segments {
        let tau = plan.segment_tau(s);
        taylor_segment(decomp, &mut amps, tau, plan.truncation);
        ledger.charge_potential(plan.queries_per_segment());
        ledger.charge_adders(plan.queries_per_segment());
        let new_norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let drift = (new_norm - norm).abs();
        if drift > limit {
            return Err(Error::Instability {
                segment: s,
                drift,
                limit,
            });
        }
        norm = new_norm;
        let counts = ledger.counts();
        records.push(SegmentRecord {
            segment: s,
            tau,
            norm,
            drift,
            residual: None,
            success_probability: None,
            potential_queries: counts.potential_queries,
            adder_applications: counts.adder_applications,
        });
    }
    let out = StateVector::new(psi.grid().clone(), amps)?;
    let report = SegmentReport {
        mode: "effective".into(),
        plan: *plan,
        segments: records,
        final_norm: out.norm(),
    };
    Ok((out, report))
}

/// `A = B select(W) B` for a generic LCU `sum_alpha c_alpha W_alpha`.
///
/// `B` is the Householder reflection exchanging `|0>` and
/// `sum_alpha sqrt(c_alpha / c) |alpha>`, so it is its own inverse and
/// `A^dagger = B select(W^dagger) B`.
#[derive(Debug, Clone)]
pub struct BlockEncoding {
    weights: Vec<f64>,
    c: f64,
    reflector: Vec<f64>,
    reflector_norm_sq: f64,
    unitaries: Vec<DMatrix<Complex64>>,
    system_dim: usize,
}

impl BlockEncoding {
    pub fn new(weights: Vec<f64>, unitaries: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != unitaries.len() {
            return Err(Error::Shape(format!(
                "{} weights for {} unitaries",
                weights.len(),
                unitaries.len()
            )));
        }
        if weights.len() > ANCILLA_CAP {
            return Err(Error::Resource {
                what: "ancilla dimension",
                requested: weights.len(),
                cap: ANCILLA_CAP,
            });
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::Domain(format!("LCU weights must be positive, got {w}")));
        }
        let system_dim = unitaries[0].nrows();
        if system_dim > BLOCK_SYSTEM_CAP {
            return Err(Error::Resource {
                what: "block-encoding system dimension",
                requested: system_dim,
                cap: BLOCK_SYSTEM_CAP,
            });
        }
        if unitaries
            .iter()
            .any(|u| u.nrows() != system_dim || u.ncols() != system_dim)
        {
            return Err(Error::Shape("unitaries differ in dimension".into()));
        }
        let c: f64 = weights.iter().sum();
        let mut reflector: Vec<f64> = weights.iter().map(|w| -(w / c).sqrt()).collect();
        reflector[0] += 1.0;
        let reflector_norm_sq = reflector.iter().map(|v| v * v).sum();
        Ok(Self {
            weights,
            c,
            reflector,
            reflector_norm_sq,
            unitaries,
            system_dim,
        })
    }

    /// `sum_alpha c_alpha`.
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ancilla_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn total_dim(&self) -> usize {
        self.ancilla_dim() * self.system_dim
    }

    /// Apply `B` to every system column. Layout is ancilla-major.
    fn apply_b(&self, state: &mut [Complex64]) {
        if self.reflector_norm_sq < 1e-30 {
            return;
        }
        let s = self.system_dim;
        for x in 0..s {
            let mut dot = Complex64::new(0.0, 0.0);
            for (a, v) in self.reflector.iter().enumerate() {
                dot += state[a * s + x] * v;
            }
            let f = dot * (2.0 / self.reflector_norm_sq);
            for (a, v) in self.reflector.iter().enumerate() {
                state[a * s + x] -= f * v;
            }
        }
    }

    fn apply_select(&self, state: &mut [Complex64], adjoint: bool) {
        let s = self.system_dim;
        for (a, u) in self.unitaries.iter().enumerate() {
            let block = &mut state[a * s..(a + 1) * s];
            let v = nalgebra::DVector::from_column_slice(block);
            let w = if adjoint { u.ad_mul(&v) } else { u * v };
            block.copy_from_slice(w.as_slice());
        }
    }

    pub fn apply(&self, state: &mut [Complex64]) {
        self.apply_b(state);
        self.apply_select(state, false);
        self.apply_b(state);
    }

    pub fn apply_adjoint(&self, state: &mut [Complex64]) {
        self.apply_b(state);
        self.apply_select(state, true);
        self.apply_b(state);
    }

    /// Dense `A`, for dimensions up to `cap`.
    pub fn to_dense(&self, cap: usize) -> Result<DMatrix<Complex64>> {
        let n = self.total_dim();
        if n > cap {
            return Err(Error::Resource {
                what: "dense block encoding dimension",
                requested: n,
                cap,
            });
        }
        let mut m = DMatrix::<Complex64>::zeros(n, n);
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            col.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            col[j] = Complex64::new(1.0, 0.0);
            self.apply(&mut col);
            for (i, z) in col.iter().enumerate() {
                m[(i, j)] = *z;
            }
        }
        Ok(m)
    }

    /// `<0| A |0>` as a system matrix; equals `(1/c) sum c_alpha W_alpha`.
    pub fn ancilla_zero_block(&self) -> DMatrix<Complex64> {
        let s = self.system_dim;
        let mut m = DMatrix::<Complex64>::zeros(s, s);
        let mut state = vec![Complex64::new(0.0, 0.0); self.total_dim()];
        for x in 0..s {
            state.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            state[x] = Complex64::new(1.0, 0.0);
            self.apply(&mut state);
            for y in 0..s {
                m[(y, x)] = state[y];
            }
        }
        m
    }

    /// `P_0 G |0>|psi>` with `G = -A R A^dagger R A` and `R = I - 2 P_0`.
    /// Returns the system part and the success probability.
    pub fn amplify(&self, psi: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
        let s = self.system_dim;
        if psi.len() != s {
            return Err(Error::Shape(format!(
                "state has {} amplitudes, encoding acts on {s}",
                psi.len()
            )));
        }
        let mut state = vec![Complex64::new(0.0, 0.0); self.total_dim()];
        state[..s].copy_from_slice(psi);
        let reflect = |st: &mut [Complex64]| st[..s].iter_mut().for_each(|z| *z = -*z);
        self.apply(&mut state);
        reflect(&mut state);
        self.apply_adjoint(&mut state);
        reflect(&mut state);
        self.apply(&mut state);
        let out: Vec<Complex64> = state[..s].iter().map(|z| -z).collect();
        let p = out.iter().map(|z| z.norm_sqr()).sum();
        Ok((out, p))
    }
}

/// Block encoding of one full segment together with its exact propagator.
#[derive(Debug, Clone)]
pub struct SegmentEncoding {
    pub encoding: BlockEncoding,
    pub tau: f64,
    pub truncation: usize,
    /// `exp(-i tau H_eff)`.
    pub target: DMatrix<Complex64>,
    /// `sum_k (-i tau H_eff)^k / k!`.
    pub series: DMatrix<Complex64>,
}

impl SegmentEncoding {
    /// `10 (|c - 2| + (ln 2)^{K+1} / (K+1)!)`.
    pub fn residual_limit(&self) -> f64 {
        10.0 * ((self.encoding.c() - 2.0).abs() + truncation_bound(self.truncation))
    }
}

fn term_unitary(decomp: &LcuDecomposition, term: LcuTerm) -> Result<DMatrix<Complex64>> {
    Ok(decomp.term_matrix(term)?.map(|x| Complex64::new(x, 0.0)))
}

/// Ancilla states `|k, chi_1 .. chi_k>` for `k = 0..K` with weights
/// `(tau/M)^k / k! prod d_chi` and unitaries `(-i)^k V_{chi_k} .. V_{chi_1}`.
pub fn block_encode_segment(decomp: &LcuDecomposition, plan: &TaylorPlan) -> Result<SegmentEncoding> {
    block_encode_with(decomp, plan.tau, plan.truncation)
}

/// As [`block_encode_segment`] with explicit segment length and order.
pub fn block_encode_with(decomp: &LcuDecomposition, tau: f64, order: usize) -> Result<SegmentEncoding> {
    let n_terms = decomp.term_count();
    let mut ancilla: usize = 0;
    let mut layer: usize = 1;
    for _ in 0..=order {
        ancilla = ancilla.saturating_add(layer);
        layer = layer.saturating_mul(n_terms);
    }
    if ancilla > ANCILLA_CAP {
        return Err(Error::Resource {
            what: "ancilla dimension",
            requested: ancilla,
            cap: ANCILLA_CAP,
        });
    }
    let sys = decomp.grid().dimension();
    if sys > BLOCK_SYSTEM_CAP {
        return Err(Error::Resource {
            what: "block-encoding system dimension",
            requested: sys,
            cap: BLOCK_SYSTEM_CAP,
        });
    }
    let terms: Vec<(f64, DMatrix<Complex64>)> = decomp
        .terms()
        .map(|(w, t)| Ok((w, term_unitary(decomp, t)?)))
        .collect::<Result<_>>()?;
    let step = tau / decomp.scale_m() as f64;
    let minus_i = Complex64::new(0.0, -1.0);

    let mut weights = vec![1.0];
    let mut unitaries = vec![DMatrix::<Complex64>::identity(sys, sys)];
    // Previous layer as (weight, product) pairs, extended by one term each round.
    let mut prev: Vec<(f64, DMatrix<Complex64>)> = vec![(1.0, DMatrix::identity(sys, sys))];
    for k in 1..=order {
        let mut next = Vec::with_capacity(prev.len() * n_terms);
        for (w, u) in &prev {
            for (d, v) in &terms {
                next.push((w * step * d / k as f64, (v * u) * minus_i));
            }
        }
        for (w, u) in &next {
            weights.push(*w);
            unitaries.push(u.clone());
        }
        prev = next;
    }
    let encoding = BlockEncoding::new(weights, unitaries)?;

    let h = decomp.effective_dense()?;
    let prop = SpectralPropagator::symmetric(&h)?;
    let mut target = DMatrix::<Complex64>::zeros(sys, sys);
    let mut series = DMatrix::<Complex64>::zeros(sys, sys);
    for x in 0..sys {
        let mut e = vec![Complex64::new(0.0, 0.0); sys];
        e[x] = Complex64::new(1.0, 0.0);
        let col = prop.evolve_amplitudes(&e, tau)?;
        for y in 0..sys {
            target[(y, x)] = col[y];
        }
        taylor_segment(decomp, &mut e, tau, order);
        for y in 0..sys {
            series[(y, x)] = e[y];
        }
    }
    Ok(SegmentEncoding {
        encoding,
        tau,
        truncation: order,
        target,
        series,
    })
}

#[derive(Debug, Clone)]
pub struct AmplifiedSegment {
    pub state: Vec<Complex64>,
    pub residual: f64,
    pub limit: f64,
    pub success_probability: f64,
}

/// One OAA round on `|0>|psi>`, compared against the exact propagator.
pub fn amplify_segment(seg: &SegmentEncoding, psi: &[Complex64]) -> Result<AmplifiedSegment> {
    let (state, p) = seg.encoding.amplify(psi)?;
    let v = nalgebra::DVector::from_column_slice(psi);
    let exact = &seg.target * v;
    let residual = state
        .iter()
        .zip(exact.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let limit = seg.residual_limit();
    if residual > limit {
        return Err(Error::AmplificationFailure { residual, limit });
    }
    Ok(AmplifiedSegment {
        state,
        residual,
        limit,
        success_probability: p,
    })
}

/// Block-encoding-mode evolution: OAA on every full segment. A shortened
/// final segment has `c < 2`, where a single OAA round does not apply; it
/// is run with the effective-mode series and flagged by `residual = None`.
pub fn evolve_block_encoded(
    decomp: &LcuDecomposition,
    psi: &StateVector,
    plan: &TaylorPlan,
    ledger: &QueryLedger,
) -> Result<(StateVector, SegmentReport)> {
    check_input(decomp, psi)?;
    let seg = if plan.segments > 0 {
        Some(block_encode_segment(decomp, plan)?)
    } else {
        None
    };
    let mut amps = psi.amplitudes().to_vec();
    let mut records = Vec::with_capacity(plan.segments);
    let mut norm = psi.norm();
    let limit = 10.0 * plan.eps / plan.segments.max(1) as f64;
    for s in 0..plan.segments {
        let tau = plan.segment_tau(s);
        let full = (tau - plan.tau).abs() <= 1e-12 * plan.tau;
        let (residual, prob) = match (&seg, full) {
            (Some(seg), true) => {
                let out = amplify_segment(seg, &amps)?;
                amps = out.state;
                (Some(out.residual), Some(out.success_probability))
            }
            _ => {
                taylor_segment(decomp, &mut amps, tau, plan.truncation);
                (None, None)
            }
        };
        ledger.charge_potential(plan.queries_per_segment());
        ledger.charge_adders(plan.queries_per_segment());
        let new_norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let drift = (new_norm - norm).abs();
        if drift > limit {
            return Err(Error::Instability {
                segment: s,
                drift,
                limit,
            });
        }
        norm = new_norm;
        let counts = ledger.counts();
        records.push(SegmentRecord {
            segment: s,
            tau,
            norm,
            drift,
            residual,
            success_probability: prob,
            potential_queries: counts.potential_queries,
            adder_applications: counts.adder_applications,
        });
    }
    let out = StateVector::new(psi.grid().clone(), amps)?;
    let report = SegmentReport {
        mode: "blockencoding".into(),
        plan: *plan,
        segments: records,
        final_norm: out.norm(),
    };
    Ok((out, report))
}
