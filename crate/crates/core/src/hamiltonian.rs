//! Discretized Hamiltonian `H = T + V`, potential oracles and the LCU
//! decomposition into modular adders and signature matrices.
//!
//! The kinetic part is purely off-diagonal: the stencil's `j = 0` term is a
//! multiple of the identity and is reported separately by [`energy_shift`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinIndex, GridSpec};
use crate::stencil::{fd_coefficients, StencilCoefficients};

/// Default cap on the dimension of explicitly assembled matrices.
pub const DENSE_CAP: usize = 4096;

type ExternalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum PotentialKind {
    Zero,
    /// `sum_{i<j} q_i q_j / sqrt(|x_i - x_j|^2 + delta^2)`.
    ModifiedCoulomb { delta: f64, charges: Vec<f64> },
    /// Values keyed by flat grid index.
    Tabulated(BTreeMap<usize, f64>),
    /// Arbitrary function of the full coordinate vector.
    External(ExternalFn),
}

impl fmt::Debug for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialKind::Zero => write!(f, "Zero"),
            PotentialKind::ModifiedCoulomb { delta, charges } => f
                .debug_struct("ModifiedCoulomb")
                .field("delta", delta)
                .field("charges", charges)
                .finish(),
            PotentialKind::Tabulated(t) => write!(f, "Tabulated({} entries)", t.len()),
            PotentialKind::External(_) => write!(f, "External"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PotentialSpec {
    kind: PotentialKind,
    v_max: f64,
    v_prime_max: f64,
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self {
            kind: PotentialKind::Zero,
            v_max: 0.0,
            v_prime_max: 0.0,
        }
    }

    /// Softened Coulomb interaction with bounds derived from `eta = charges.len()`
    /// and `q = max |q_i|`.
    pub fn modified_coulomb(delta: f64, charges: Vec<f64>) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::Domain(format!("softening must be positive, got {delta}")));
        }
        if charges.is_empty() {
            return Err(Error::Domain("need at least one charge".into()));
        }
        let (v_max, v_prime_max) = coulomb_bounds(delta, &charges);
        Ok(Self {
            kind: PotentialKind::ModifiedCoulomb { delta, charges },
            v_max,
            v_prime_max,
        })
    }

    pub fn tabulated(values: BTreeMap<usize, f64>, v_prime_max: f64) -> Result<Self> {
        if let Some((k, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite potential {v} at index {k}")));
        }
        let v_max = values.values().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self {
            kind: PotentialKind::Tabulated(values),
            v_max,
            v_prime_max,
        })
    }

    /// Read `flat_index,value` rows. A leading non-numeric row is treated as
    /// a header.
    pub fn tabulated_csv<P: AsRef<Path>>(path: P, v_prime_max: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut values = BTreeMap::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::Data(format!(
                    "row {row}: expected 2 fields, got {}",
                    record.len()
                )));
            }
            let idx = record[0].parse::<usize>();
            let val = record[1].parse::<f64>();
            match (idx, val) {
                (Ok(i), Ok(v)) => {
                    values.insert(i, v);
                }
                _ if row == 0 => continue,
                _ => return Err(Error::Data(format!("row {row}: cannot parse {record:?}"))),
            }
        }
        Self::tabulated(values, v_prime_max)
    }

    /// Potential given as a function of the coordinate vector, with
    /// caller-supplied bounds.
    pub fn external<F>(f: F, v_max: f64, v_prime_max: f64) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(v_max >= 0.0) || !(v_prime_max >= 0.0) {
            return Err(Error::Domain("potential bounds must be nonnegative".into()));
        }
        Ok(Self {
            kind: PotentialKind::External(Arc::new(f)),
            v_max,
            v_prime_max,
        })
    }

    /// Raise the `||V||_inf` bound. Lowering it below what the potential
    /// provably reaches is rejected.
    pub fn with_v_max(mut self, v_max: f64) -> Result<Self> {
        let floor = match &self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::ModifiedCoulomb { delta, charges } => coulomb_bounds(*delta, charges).0,
            PotentialKind::Tabulated(t) => t.values().fold(0.0f64, |m, v| m.max(v.abs())),
            PotentialKind::External(_) => 0.0,
        };
        if !(v_max >= floor) {
            return Err(Error::ContractViolation(format!(
                "v_max {v_max} is below the potential's bound {floor}"
            )));
        }
        self.v_max = v_max;
        Ok(self)
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn v_prime_max(&self) -> f64 {
        self.v_prime_max
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, PotentialKind::Zero)
    }

    /// Potential at a coordinate vector (no ledger charge).
    pub fn evaluate_at(&self, grid: &GridSpec, flat: usize, x: &[f64]) -> Result<f64> {
        match &self.kind {
            PotentialKind::Zero => Ok(0.0),
            PotentialKind::ModifiedCoulomb { delta, charges } => {
                if charges.len() != grid.eta() {
                    return Err(Error::Shape(format!(
                        "{} charges for {} particles",
                        charges.len(),
                        grid.eta()
                    )));
                }
                let d = grid.dims();
                let mut total = 0.0;
                for i in 0..charges.len() {
                    for j in (i + 1)..charges.len() {
                        total += coulomb_pair(
                            *delta,
                            charges[i],
                            charges[j],
                            &x[i * d..(i + 1) * d],
                            &x[j * d..(j + 1) * d],
                        );
                    }
                }
                Ok(total)
            }
            PotentialKind::Tabulated(t) => t
                .get(&flat)
                .copied()
                .ok_or_else(|| Error::Data(format!("no tabulated potential for index {flat}"))),
            PotentialKind::External(f) => Ok(f(x)),
        }
    }
}

/// `(eta (eta - 1) q^2 / (2 delta), eta^2 q^2 sqrt(3) / (9 delta^2))`.
pub fn coulomb_bounds(delta: f64, charges: &[f64]) -> (f64, f64) {
    let eta = charges.len() as f64;
    let q = charges.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let v_max = eta * (eta - 1.0) * q * q / (2.0 * delta);
    let v_prime_max = eta * eta * q * q * 3f64.sqrt() / (9.0 * delta * delta);
    (v_max, v_prime_max)
}

fn coulomb_pair(delta: f64, qi: f64, qj: f64, xi: &[f64], xj: &[f64]) -> f64 {
    let r2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
    qi * qj / (r2 + delta * delta).sqrt()
}

/// JSON form of a potential, as found in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PotentialConfig {
    Zero,
    ModifiedCoulomb {
        delta: f64,
        charges: Vec<f64>,
    },
    Tabulated {
        path: String,
        #[serde(default)]
        v_prime_max: f64,
    },
}

impl PotentialConfig {
    /// Build the potential; relative table paths resolve against `base`.
    pub fn resolve(&self, base: Option<&Path>) -> Result<PotentialSpec> {
        match self {
            PotentialConfig::Zero => Ok(PotentialSpec::zero()),
            PotentialConfig::ModifiedCoulomb { delta, charges } => {
                PotentialSpec::modified_coulomb(*delta, charges.clone())
            }
            PotentialConfig::Tabulated { path, v_prime_max } => {
                let p = Path::new(path);
                let full = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.to_path_buf(),
                };
                PotentialSpec::tabulated_csv(full, *v_prime_max)
            }
        }
    }
}

/// Oracle and adder usage counters. Safe to share between threads.
#[derive(Debug, Default)]
pub struct QueryLedger {
    potential: AtomicU64,
    pairwise: AtomicU64,
    adders: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LedgerCounts {
    pub potential_queries: u64,
    pub pairwise_queries: u64,
    pub adder_applications: u64,
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge_potential(&self, n: u64) {
        self.potential.fetch_add(n, Ordering::Relaxed);
    }

    pub fn charge_pairwise(&self, n: u64) {
        self.pairwise.fetch_add(n, Ordering::Relaxed);
    }

    pub fn charge_adders(&self, n: u64) {
        self.adders.fetch_add(n, Ordering::Relaxed);
    }

    pub fn counts(&self) -> LedgerCounts {
        LedgerCounts {
            potential_queries: self.potential.load(Ordering::Relaxed),
            pairwise_queries: self.pairwise.load(Ordering::Relaxed),
            adder_applications: self.adders.load(Ordering::Relaxed),
        }
    }
}

/// `V` at the centroid of `idx`; one potential query.
pub fn potential_value(
    spec: &PotentialSpec,
    grid: &GridSpec,
    idx: &BinIndex,
    ledger: &QueryLedger,
) -> Result<f64> {
    let flat = grid.flat_index(idx)?;
    ledger.charge_potential(1);
    spec.evaluate_at(grid, flat, &grid.centroid_of(flat))
}

/// Pair term `V_ij(x_i, x_j)`; one pairwise query.
pub fn pairwise_potential_value(
    spec: &PotentialSpec,
    i: usize,
    j: usize,
    xi: &[f64],
    xj: &[f64],
    ledger: &QueryLedger,
) -> Result<f64> {
    if i == j {
        return Err(Error::Domain(format!("pair term needs distinct particles, got {i} twice")));
    }
    if xi.len() != xj.len() {
        return Err(Error::Shape("particle positions differ in dimension".into()));
    }
    let value = match &spec.kind {
        PotentialKind::Zero => 0.0,
        PotentialKind::ModifiedCoulomb { delta, charges } => {
            let n = charges.len();
            if i >= n || j >= n {
                return Err(Error::Index(format!("particle index out of range for {n} charges")));
            }
            coulomb_pair(*delta, charges[i], charges[j], xi, xj)
        }
        _ => {
            return Err(Error::Domain(
                "potential has no pairwise decomposition".into(),
            ))
        }
    };
    ledger.charge_pairwise(1);
    Ok(value)
}

/// `V` on every centroid, in flat order. Classical precomputation, not
/// charged as queries.
pub fn potential_diagonal(spec: &PotentialSpec, grid: &GridSpec) -> Result<Vec<f64>> {
    (0..grid.dimension())
        .into_par_iter()
        .map(|flat| spec.evaluate_at(grid, flat, &grid.centroid_of(flat)))
        .collect()
}

fn check_order(grid: &GridSpec, a: usize) -> Result<StencilCoefficients> {
    let coeffs = fd_coefficients(a)?;
    if a >= grid.bins() {
        return Err(Error::Domain(format!(
            "stencil half-width {a} must be below the bin count {}",
            grid.bins()
        )));
    }
    Ok(coeffs)
}

/// Off-diagonal kinetic couplings `(coordinate, shift, -d_j / (2 m_i h^2))`.
fn kinetic_couplings(grid: &GridSpec, coeffs: &StencilCoefficients) -> Vec<(usize, isize, f64)> {
    let h2 = grid.spacing().powi(2);
    let mut out = Vec::new();
    for c in 0..grid.coords() {
        let m = grid.masses()[c / grid.dims()];
        for j in coeffs.offsets() {
            out.push((c, j, -coeffs.coeff(j) / (2.0 * m * h2)));
        }
    }
    out
}

/// Dense `H = T + V` with the kinetic diagonal removed.
pub fn assemble_dense(spec: &PotentialSpec, grid: &GridSpec, a: usize) -> Result<DMatrix<f64>> {
    assemble_dense_capped(spec, grid, a, DENSE_CAP)
}

pub fn assemble_dense_capped(
    spec: &PotentialSpec,
    grid: &GridSpec,
    a: usize,
    cap: usize,
) -> Result<DMatrix<f64>> {
    let dim = grid.dimension();
    if dim > cap {
        return Err(Error::Resource {
            what: "dense matrix dimension",
            requested: dim,
            cap,
        });
    }
    let coeffs = check_order(grid, a)?;
    let diag = potential_diagonal(spec, grid)?;
    let couplings = kinetic_couplings(grid, &coeffs);
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for col in 0..dim {
        h[(col, col)] += diag[col];
        for &(c, j, w) in &couplings {
            h[(grid.shifted(col, c, j), col)] += w;
        }
    }
    Ok(h)
}

/// `-D sum_i d_0 / (2 m_i h^2)`, the identity term omitted from `T`.
pub fn energy_shift(grid: &GridSpec, a: usize) -> Result<f64> {
    let coeffs = fd_coefficients(a)?;
    let h2 = grid.spacing().powi(2);
    let per_axis: f64 = grid
        .masses()
        .iter()
        .map(|m| coeffs.center() / (2.0 * m * h2))
        .sum();
    Ok(-(grid.dims() as f64) * per_axis)
}

/// `+1` iff `j <= n(v)` with `n(v) = round(M (1 + v / v_max) / 2)` clamped to
/// `[0, M]`.
pub fn signature_row_sign(v: f64, j: usize, v_max: f64, m: usize) -> Result<i8> {
    if j == 0 || j > m {
        return Err(Error::Index(format!("signature index {j} outside 1..={m}")));
    }
    Ok(if j <= signature_threshold(v, v_max, m)? { 1 } else { -1 })
}

/// Number of `+1` signatures in a row with diagonal value `v`.
pub fn signature_threshold(v: f64, v_max: f64, m: usize) -> Result<usize> {
    if !(v.abs() <= v_max * (1.0 + 1e-12)) {
        return Err(Error::ContractViolation(format!(
            "|v| = {} exceeds v_max = {v_max}",
            v.abs()
        )));
    }
    let ratio = if v_max > 0.0 { v / v_max } else { 0.0 };
    let n = (m as f64 * (1.0 + ratio) / 2.0).round();
    Ok(n.clamp(0.0, m as f64) as usize)
}

/// A unitary in the LCU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LcuTerm {
    /// `phase * A_shift` on coordinate `dim` of `particle`.
    Adder {
        particle: usize,
        dim: usize,
        shift: isize,
        phase: i8,
    },
    /// Signature matrix number `index` in `1..=M`.
    Signature { index: usize },
}

#[derive(Debug, Clone)]
pub struct LcuDecomposition {
    grid: GridSpec,
    coeffs: StencilCoefficients,
    scale_m: usize,
    v_max: f64,
    kinetic: Vec<(f64, LcuTerm)>,
    potential: Vec<f64>,
    thresholds: Vec<usize>,
    reconstructed: Vec<f64>,
    lambda: f64,
}

/// `M = ceil(v_max / delta)`, or 1 when `v_max = 0`.
pub fn lcu_decompose(
    spec: &PotentialSpec,
    grid: &GridSpec,
    a: usize,
    delta_lcu: f64,
) -> Result<LcuDecomposition> {
    if !(delta_lcu > 0.0) {
        return Err(Error::Domain(format!("LCU budget must be positive, got {delta_lcu}")));
    }
    let ratio = spec.v_max() / delta_lcu;
    let m = if ratio <= 0.0 {
        1
    } else if (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0) {
        ratio.round().max(1.0) as usize
    } else {
        ratio.ceil() as usize
    };
    lcu_decompose_with_scale(spec, grid, a, m)
}

/// Decomposition with an explicit number of signature matrices.
pub fn lcu_decompose_with_scale(
    spec: &PotentialSpec,
    grid: &GridSpec,
    a: usize,
    scale_m: usize,
) -> Result<LcuDecomposition> {
    if scale_m == 0 {
        return Err(Error::Domain("scale M must be positive".into()));
    }
    let coeffs = check_order(grid, a)?;
    let potential = potential_diagonal(spec, grid)?;
    let v_max = spec.v_max();
    let m = scale_m as f64;
    let thresholds = potential
        .iter()
        .map(|&v| signature_threshold(v, v_max, scale_m))
        .collect::<Result<Vec<_>>>()?;
    let reconstructed = if v_max > 0.0 {
        thresholds
            .iter()
            .map(|&n| v_max * (2.0 * n as f64 - m) / m)
            .collect()
    } else {
        vec![0.0; potential.len()]
    };

    let h2 = grid.spacing().powi(2);
    let mut kinetic = Vec::with_capacity(2 * grid.coords() * a);
    for particle in 0..grid.eta() {
        let mass = grid.masses()[particle];
        for dim in 0..grid.dims() {
            for shift in coeffs.offsets() {
                let d = coeffs.coeff(shift);
                let weight = m * d.abs() / (2.0 * mass * h2);
                let phase = if d > 0.0 { -1 } else { 1 };
                kinetic.push((
                    weight,
                    LcuTerm::Adder {
                        particle,
                        dim,
                        shift,
                        phase,
                    },
                ));
            }
        }
    }
    let signature_count = if v_max > 0.0 { scale_m } else { 0 };
    let lambda = kinetic.iter().map(|(w, _)| w).sum::<f64>() + signature_count as f64 * v_max;
    Ok(LcuDecomposition {
        grid: grid.clone(),
        coeffs,
        scale_m,
        v_max,
        kinetic,
        potential,
        thresholds,
        reconstructed,
        lambda,
    })
}

impl LcuDecomposition {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn stencil(&self) -> &StencilCoefficients {
        &self.coeffs
    }

    pub fn order(&self) -> usize {
        self.coeffs.order()
    }

    pub fn scale_m(&self) -> usize {
        self.scale_m
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    /// Sum of all weights.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kinetic_terms(&self) -> &[(f64, LcuTerm)] {
        &self.kinetic
    }

    /// Number of signature terms (0 for a vanishing potential).
    pub fn signature_count(&self) -> usize {
        if self.v_max > 0.0 {
            self.scale_m
        } else {
            0
        }
    }

    pub fn term_count(&self) -> usize {
        self.kinetic.len() + self.signature_count()
    }

    /// Term `chi`: kinetic adders first, then signatures.
    pub fn term(&self, chi: usize) -> Result<(f64, LcuTerm)> {
        if chi < self.kinetic.len() {
            Ok(self.kinetic[chi])
        } else if chi < self.term_count() {
            Ok((
                self.v_max,
                LcuTerm::Signature {
                    index: chi - self.kinetic.len() + 1,
                },
            ))
        } else {
            Err(Error::Index(format!(
                "term {chi} outside 0..{}",
                self.term_count()
            )))
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (f64, LcuTerm)> + '_ {
        (0..self.term_count()).map(move |chi| self.term(chi).expect("in range"))
    }

    /// Exact potential diagonal `V(y(x))`.
    pub fn potential_diagonal(&self) -> &[f64] {
        &self.potential
    }

    /// The diagonal represented by the signature sum divided by `M`.
    pub fn reconstructed_diagonal(&self) -> &[f64] {
        &self.reconstructed
    }

    /// `V_chi psi` written into `out`.
    pub fn apply_term(&self, term: LcuTerm, psi: &[Complex64], out: &mut [Complex64]) {
        let grid = &self.grid;
        match term {
            LcuTerm::Adder {
                particle,
                dim,
                shift,
                phase,
            } => {
                let c = particle * grid.dims() + dim;
                let p = phase as f64;
                out.par_iter_mut().enumerate().for_each(|(y, o)| {
                    *o = psi[grid.shifted(y, c, -shift)] * p;
                });
            }
            LcuTerm::Signature { index } => {
                out.par_iter_mut().enumerate().for_each(|(x, o)| {
                    let s = if index <= self.thresholds[x] { 1.0 } else { -1.0 };
                    *o = psi[x] * s;
                });
            }
        }
    }

    /// Matrix of `V_chi`.
    pub fn term_matrix(&self, term: LcuTerm) -> Result<DMatrix<f64>> {
        let dim = self.grid.dimension();
        if dim > DENSE_CAP {
            return Err(Error::Resource {
                what: "dense matrix dimension",
                requested: dim,
                cap: DENSE_CAP,
            });
        }
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        match term {
            LcuTerm::Adder {
                particle,
                dim: n,
                shift,
                phase,
            } => {
                let c = particle * self.grid.dims() + n;
                for x in 0..dim {
                    m[(self.grid.shifted(x, c, shift), x)] = phase as f64;
                }
            }
            LcuTerm::Signature { index } => {
                for x in 0..dim {
                    m[(x, x)] = if index <= self.thresholds[x] { 1.0 } else { -1.0 };
                }
            }
        }
        Ok(m)
    }

    /// `(1/M) sum_chi d_chi V_chi`, summed term by term.
    pub fn reconstruct_dense(&self) -> Result<DMatrix<f64>> {
        let dim = self.grid.dimension();
        let mut acc = DMatrix::<f64>::zeros(dim, dim);
        for (w, term) in self.terms() {
            acc += self.term_matrix(term)? * (w / self.scale_m as f64);
        }
        Ok(acc)
    }

    /// Dense `H_eff` from the kinetic terms and the reconstructed diagonal.
    /// Equal to [`reconstruct_dense`](Self::reconstruct_dense) but linear in
    /// the number of kinetic terms rather than in `M`.
    pub fn effective_dense(&self) -> Result<DMatrix<f64>> {
        let dim = self.grid.dimension();
        if dim > DENSE_CAP {
            return Err(Error::Resource {
                what: "dense matrix dimension",
                requested: dim,
                cap: DENSE_CAP,
            });
        }
        let mut acc = DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_column_slice(
            &self.reconstructed,
        ));
        for &(w, term) in &self.kinetic {
            acc += self.term_matrix(term)? * (w / self.scale_m as f64);
        }
        Ok(acc)
    }

    /// `H_eff psi` with `H_eff = (1/M) sum_chi d_chi V_chi`, matrix-free.
    pub fn apply_effective(&self, psi: &[Complex64], out: &mut [Complex64]) {
        let grid = &self.grid;
        let couplings = kinetic_couplings(grid, &self.coeffs);
        out.par_iter_mut().enumerate().for_each(|(y, o)| {
            let mut acc = psi[y] * self.reconstructed[y];
            for &(c, j, w) in &couplings {
                acc += psi[grid.shifted(y, c, -j)] * w;
            }
            *o = acc;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::StateVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn coulomb2() -> PotentialSpec {
        PotentialSpec::modified_coulomb(1.0, vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn coulomb_values() {
        let spec = coulomb2();
        assert_eq!(spec.v_max(), 1.0);
        assert!((spec.v_prime_max() - 4.0 * 3f64.sqrt() / 9.0).abs() < 1e-15);
        let g = GridSpec::uniform(2, 1, 4, 1.0).unwrap();
        let ledger = QueryLedger::new();
        let v = potential_value(&spec, &g, &BinIndex(vec![2, 2]), &ledger).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(ledger.counts().potential_queries, 1);
        for flat in 0..g.dimension() {
            let idx = g.bin_index(flat).unwrap();
            assert!(potential_value(&spec, &g, &idx, &ledger).unwrap() <= spec.v_max());
        }
        let z = PotentialSpec::zero();
        assert_eq!(potential_value(&z, &g, &BinIndex(vec![0, 3]), &ledger).unwrap(), 0.0);
    }

    #[test]
    fn pairwise_terms() {
        let spec = PotentialSpec::modified_coulomb(2.0, vec![1.0, 1.0]).unwrap();
        let ledger = QueryLedger::new();
        assert_eq!(pairwise_potential_value(&spec, 0, 1, &[0.3], &[0.3], &ledger).unwrap(), 0.5);
        let a = pairwise_potential_value(&spec, 0, 1, &[0.1], &[0.7], &ledger).unwrap();
        let b = pairwise_potential_value(&spec, 1, 0, &[0.7], &[0.1], &ledger).unwrap();
        assert_eq!(a, b);
        assert_eq!(ledger.counts().pairwise_queries, 3);
        assert!(matches!(
            pairwise_potential_value(&spec, 1, 1, &[0.0], &[0.0], &ledger),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn pair_sum_matches_total() {
        let spec = PotentialSpec::modified_coulomb(0.7, vec![1.0, -2.0, 0.5]).unwrap();
        let g = GridSpec::uniform(3, 2, 5, 2.0).unwrap();
        let ledger = QueryLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let flat = rng.gen_range(0..g.dimension());
            let x = g.centroid_of(flat);
            let total = potential_value(&spec, &g, &g.bin_index(flat).unwrap(), &ledger).unwrap();
            let mut sum = 0.0;
            for i in 0..3 {
                for j in (i + 1)..3 {
                    sum += pairwise_potential_value(
                        &spec,
                        i,
                        j,
                        &x[2 * i..2 * i + 2],
                        &x[2 * j..2 * j + 2],
                        &ledger,
                    )
                    .unwrap();
                }
            }
            assert!((sum - total).abs() <= 1e-12 * total.abs().max(1e-300));
        }
    }

    #[test]
    fn tabulated_missing_entry() {
        let mut t = BTreeMap::new();
        t.insert(0, 0.5);
        let spec = PotentialSpec::tabulated(t, 0.0).unwrap();
        let g = GridSpec::uniform(1, 1, 4, 1.0).unwrap();
        let ledger = QueryLedger::new();
        assert_eq!(potential_value(&spec, &g, &BinIndex(vec![0]), &ledger).unwrap(), 0.5);
        assert!(matches!(
            potential_value(&spec, &g, &BinIndex(vec![1]), &ledger),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn tabulated_csv_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        std::fs::write(&path, "index,value\n0,1.5\n1,-2\n2,0\n3,0.25\n").unwrap();
        let spec = PotentialSpec::tabulated_csv(&path, 0.0).unwrap();
        assert_eq!(spec.v_max(), 2.0);
        let g = GridSpec::uniform(1, 1, 4, 1.0).unwrap();
        assert_eq!(potential_diagonal(&spec, &g).unwrap(), vec![1.5, -2.0, 0.0, 0.25]);
    }

    #[test]
    fn v_max_override_checked() {
        assert!(coulomb2().with_v_max(0.5).is_err());
        assert_eq!(coulomb2().with_v_max(3.0).unwrap().v_max(), 3.0);
    }

    #[test]
    fn free_circulant() {
        let g = GridSpec::uniform(1, 1, 4, 4.0).unwrap();
        let h = assemble_dense(&PotentialSpec::zero(), &g, 1).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let expected = match (r as isize - c as isize).rem_euclid(4) {
                    1 | 3 => -0.5,
                    _ => 0.0,
                };
                assert_eq!(h[(r, c)], expected);
            }
        }
    }

    #[test]
    fn free_spectrum_from_dispersion() {
        let l = 3.0;
        let g = GridSpec::uniform(1, 1, 12, l).unwrap();
        let a = 2;
        let hm = assemble_dense(&PotentialSpec::zero(), &g, a).unwrap();
        let mut eig: Vec<f64> = hm.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let c = fd_coefficients(a).unwrap();
        let hs = g.spacing();
        let mut expected: Vec<f64> = (0..12)
            .map(|kappa| {
                let k = 2.0 * PI * kappa as f64 / l;
                -0.5 * (c.dispersion(k, hs) - c.center() / (hs * hs))
            })
            .collect();
        expected.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (e, x) in eig.iter().zip(&expected) {
            assert!((e - x).abs() < 1e-10, "{e} vs {x}");
        }
    }

    #[test]
    fn energy_shift_values() {
        let g = GridSpec::uniform(1, 1, 4, 4.0).unwrap();
        assert_eq!(energy_shift(&g, 1).unwrap(), 1.0);
        let g2 = GridSpec::uniform(1, 1, 4, 2.0).unwrap();
        assert_eq!(energy_shift(&g2, 1).unwrap(), 4.0);
    }

    #[test]
    fn shifted_matrix_is_full_laplacian() {
        let g = GridSpec::new(2, 1, 6, 2.0, vec![1.0, 3.0]).unwrap();
        let a = 2;
        let c = fd_coefficients(a).unwrap();
        let h = assemble_dense(&PotentialSpec::zero(), &g, a).unwrap();
        let shifted = &h + DMatrix::<f64>::identity(36, 36) * energy_shift(&g, a).unwrap();
        let hs2 = g.spacing().powi(2);
        let mut full = DMatrix::<f64>::zeros(36, 36);
        for col in 0..36 {
            for coord in 0..2 {
                let m = g.masses()[coord];
                for j in -(a as isize)..=(a as isize) {
                    full[(g.shifted(col, coord, j), col)] -= c.coeff(j) / (2.0 * m * hs2);
                }
            }
        }
        assert!((shifted - full).amax() < 1e-12);
    }

    #[test]
    fn dense_is_symmetric() {
        let g = GridSpec::uniform(2, 2, 4, 3.0).unwrap();
        let h = assemble_dense(&coulomb2(), &g, 2).unwrap();
        assert!((&h - h.transpose()).amax() < 1e-12);
        let big = GridSpec::uniform(2, 2, 9, 3.0).unwrap();
        assert!(matches!(
            assemble_dense(&coulomb2(), &big, 1),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn signature_rule() {
        for j in 1..=4 {
            assert_eq!(signature_row_sign(1.0, j, 1.0, 4).unwrap(), 1);
        }
        let zero: i32 = (1..=6).map(|j| signature_row_sign(0.0, j, 1.0, 6).unwrap() as i32).sum();
        assert_eq!(zero, 0);
        assert_eq!(signature_threshold(0.5, 1.0, 4).unwrap(), 3);
        let recon: f64 = (1..=4)
            .map(|j| signature_row_sign(0.5, j, 1.0, 4).unwrap() as f64 * 0.25)
            .sum();
        assert_eq!(recon, 0.5);
        assert!(matches!(
            signature_row_sign(1.5, 1, 1.0, 4),
            Err(Error::ContractViolation(_))
        ));
        assert!(matches!(signature_row_sign(0.0, 5, 1.0, 4), Err(Error::Index(_))));
    }

    #[test]
    fn decomposition_scale_and_counts() {
        let g = GridSpec::uniform(2, 1, 4, 1.0).unwrap();
        let d = lcu_decompose(&coulomb2(), &g, 1, 0.25).unwrap();
        assert_eq!(d.scale_m(), 4);
        assert_eq!(d.kinetic_terms().len(), 4);
        assert_eq!(d.term_count(), 8);
        let z = lcu_decompose(&PotentialSpec::zero(), &g, 2, 0.1).unwrap();
        assert_eq!(z.scale_m(), 1);
        assert_eq!(z.term_count(), 2 * 2 * 2);
        assert!(matches!(
            lcu_decompose(&coulomb2(), &g, 1, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_potential_reconstruction_exact() {
        let g = GridSpec::uniform(1, 2, 5, 2.0).unwrap();
        let d = lcu_decompose(&PotentialSpec::zero(), &g, 2, 0.1).unwrap();
        let h = assemble_dense(&PotentialSpec::zero(), &g, 2).unwrap();
        assert!((d.reconstruct_dense().unwrap() - h).amax() < 1e-12);
    }

    #[test]
    fn coulomb_reconstruction_within_bound() {
        let g = GridSpec::uniform(2, 1, 4, 2.0).unwrap();
        let spec = coulomb2();
        let h = assemble_dense(&spec, &g, 1).unwrap();
        for m in [1, 2, 3, 4, 16] {
            let d = lcu_decompose_with_scale(&spec, &g, 1, m).unwrap();
            let err = (d.reconstruct_dense().unwrap() - &h).amax();
            assert!(err <= spec.v_max() / m as f64 + 1e-12, "M={m} err={err}");
        }
    }

    #[test]
    fn closed_form_dense_matches_term_sum() {
        let g = GridSpec::uniform(2, 1, 4, 2.0).unwrap();
        for m in [1, 3, 7] {
            let d = lcu_decompose_with_scale(&coulomb2(), &g, 2, m).unwrap();
            let diff = (d.effective_dense().unwrap() - d.reconstruct_dense().unwrap()).amax();
            assert!(diff < 1e-12, "M={m} diff={diff}");
        }
    }

    #[test]
    fn effective_apply_matches_dense() {
        let g = GridSpec::uniform(2, 1, 5, 2.0).unwrap();
        let d = lcu_decompose_with_scale(&coulomb2(), &g, 2, 5).unwrap();
        let dense = d.reconstruct_dense().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let psi = StateVector::random(g.clone(), &mut rng).unwrap();
        let mut out = vec![Complex64::new(0.0, 0.0); g.dimension()];
        d.apply_effective(psi.amplitudes(), &mut out);
        for r in 0..g.dimension() {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..g.dimension() {
                acc += psi.amplitudes()[c] * dense[(r, c)];
            }
            assert!((acc - out[r]).norm() < 1e-12);
        }
        // Term application agrees with term matrices.
        for (_, term) in d.terms() {
            let m = d.term_matrix(term).unwrap();
            d.apply_term(term, psi.amplitudes(), &mut out);
            for r in 0..g.dimension() {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..g.dimension() {
                    acc += psi.amplitudes()[c] * m[(r, c)];
                }
                assert!((acc - out[r]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn order_must_fit_grid() {
        let g = GridSpec::uniform(1, 1, 3, 1.0).unwrap();
        assert!(matches!(
            assemble_dense(&PotentialSpec::zero(), &g, 3),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn config_round_trip() {
        let json = r#"{"type":"modified_coulomb","delta":1.0,"charges":[1.0,-1.0]}"#;
        let cfg: PotentialConfig = serde_json::from_str(json).unwrap();
        let spec = cfg.resolve(None).unwrap();
        assert_eq!(spec.v_max(), 1.0);
        let zero: PotentialConfig = serde_json::from_str(r#"{"type":"zero"}"#).unwrap();
        assert!(zero.resolve(None).unwrap().is_zero());
    }
}
