//! Register-level realization of `select(V)`.
//!
//! A kinetic term acts on one coordinate register. The controlled-swap
//! network moves the addressed register to position 1 in
//! `ceil(log2 eta) + ceil(log2 D)` stages, a single modular adder acts there,
//! and the inverse network restores the order. Register counts that are not
//! powers of two are padded with inert registers.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::hamiltonian::{signature_row_sign, LcuDecomposition, LcuTerm, DENSE_CAP};

fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    /// `eta * D` coordinate registers.
    pub registers: usize,
    pub qubits_per_register: usize,
    pub system_qubits: usize,
    /// Qubits of the term index `|chi> = |i, n, j>` plus signature labels.
    pub index_qubits: usize,
}

/// Layout for circuit mode; requires `b` to be a power of two.
pub fn register_layout(decomp: &LcuDecomposition) -> Result<RegisterLayout> {
    let grid = decomp.grid();
    let b = grid.bins();
    if !b.is_power_of_two() {
        return Err(Error::Domain(format!("circuit mode needs a power-of-two bin count, got {b}")));
    }
    let q = b.trailing_zeros() as usize;
    Ok(RegisterLayout {
        registers: grid.coords(),
        qubits_per_register: q,
        system_qubits: grid.coords() * q,
        index_qubits: ceil_log2(decomp.term_count()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageLevel {
    Particle,
    Dimension,
}

/// One layer of disjoint controlled swaps, all keyed to one bit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapStage {
    pub level: StageLevel,
    /// Bit number within the level, 1 = most significant.
    pub bit: usize,
    /// Value of the controlling bit for the addressed term.
    pub active: bool,
    /// Swap partners at distance `width`, 1-indexed unit positions.
    pub width: usize,
    pub swaps: Vec<(usize, usize)>,
    /// Registers moved per unit (a particle block or a single register).
    pub unit_registers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapSchedule {
    pub eta: usize,
    pub dims: usize,
    pub padded_eta: usize,
    pub padded_dims: usize,
    pub stages: Vec<SwapStage>,
}

fn level_stages(
    level: StageLevel,
    count: usize,
    target: usize,
    unit_registers: usize,
) -> Vec<SwapStage> {
    let bits = ceil_log2(count);
    let offset = target - 1;
    (1..=bits)
        .map(|k| {
            let width = 1usize << (bits - k);
            SwapStage {
                level,
                bit: k,
                active: (offset >> (bits - k)) & 1 == 1,
                width,
                swaps: ((width + 1)..=(2 * width)).map(|p| (p, p - width)).collect(),
                unit_registers,
            }
        })
        .collect()
}

/// Particle-level schedule bringing register `target_i` (1-indexed) to the
/// front.
pub fn build_swap_schedule(eta: usize, target_i: usize) -> Result<SwapSchedule> {
    build_select_schedule(eta, 1, target_i, 1)
}

/// Particle stages followed by dimension stages within the first particle
/// block; brings coordinate `(target_i, target_n)` (both 1-indexed) to
/// register 1.
pub fn build_select_schedule(
    eta: usize,
    dims: usize,
    target_i: usize,
    target_n: usize,
) -> Result<SwapSchedule> {
    if eta == 0 || dims == 0 {
        return Err(Error::Domain("register counts must be positive".into()));
    }
    if target_i == 0 || target_i > eta {
        return Err(Error::Index(format!("particle {target_i} outside 1..={eta}")));
    }
    if target_n == 0 || target_n > dims {
        return Err(Error::Index(format!("dimension {target_n} outside 1..={dims}")));
    }
    let padded_eta = eta.next_power_of_two();
    let padded_dims = dims.next_power_of_two();
    let mut stages = level_stages(StageLevel::Particle, eta, target_i, padded_dims);
    stages.extend(level_stages(StageLevel::Dimension, dims, target_n, 1));
    Ok(SwapSchedule {
        eta,
        dims,
        padded_eta,
        padded_dims,
        stages,
    })
}

impl SwapSchedule {
    /// Number of register slots including padding.
    pub fn slots(&self) -> usize {
        self.padded_eta * self.padded_dims
    }

    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    /// Slot holding coordinate `(i, n)`, both 0-indexed.
    pub fn slot_of(&self, i: usize, n: usize) -> usize {
        i * self.padded_dims + n
    }

    fn apply_stage<T>(stage: &SwapStage, slots: &mut [T]) {
        if !stage.active {
            return;
        }
        let u = stage.unit_registers;
        for &(p, q) in &stage.swaps {
            for r in 0..u {
                slots.swap((p - 1) * u + r, (q - 1) * u + r);
            }
        }
    }

    /// Execute the active stages on a slot array.
    pub fn apply<T>(&self, slots: &mut [T]) {
        for stage in &self.stages {
            Self::apply_stage(stage, slots);
        }
    }

    /// Undo [`apply`](Self::apply). Each stage is an involution.
    pub fn apply_inverse<T>(&self, slots: &mut [T]) {
        for stage in self.stages.iter().rev() {
            Self::apply_stage(stage, slots);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitMetrics {
    pub gate_count: usize,
    pub depth: usize,
}

/// Controlled swaps times qubits per register, and the number of stages.
pub fn circuit_metrics(schedule: &SwapSchedule, grid: &GridSpec) -> CircuitMetrics {
    let q = ceil_log2(grid.bins());
    let gate_count = schedule
        .stages
        .iter()
        .map(|s| s.swaps.len() * s.unit_registers * q)
        .sum();
    CircuitMetrics {
        gate_count,
        depth: schedule.depth(),
    }
}

/// Permutation `|x> -> |(x + j) mod b>` on one register.
pub fn modular_adder(j: isize, b: usize) -> Result<DMatrix<f64>> {
    if !b.is_power_of_two() || b < 2 {
        return Err(Error::Domain(format!("adder register size must be a power of two, got {b}")));
    }
    if j.unsigned_abs() >= b {
        return Err(Error::Domain(format!("shift {j} must satisfy |j| < {b}")));
    }
    let mut m = DMatrix::<f64>::zeros(b, b);
    for x in 0..b {
        let y = (x as isize + j).rem_euclid(b as isize) as usize;
        m[(y, x)] = 1.0;
    }
    Ok(m)
}

/// Matrix of `select(V)` restricted to term `chi`, built by tracking every
/// basis state through swap-in, the adder or signature, and swap-out.
pub fn select_v_circuit(decomp: &LcuDecomposition, chi: usize) -> Result<DMatrix<f64>> {
    let (_, term) = decomp.term(chi)?;
    let grid = decomp.grid();
    let dim = grid.dimension();
    if dim > DENSE_CAP {
        return Err(Error::Resource {
            what: "circuit matrix dimension",
            requested: dim,
            cap: DENSE_CAP,
        });
    }
    let b = grid.bins();
    let mut out = DMatrix::<f64>::zeros(dim, dim);
    match term {
        LcuTerm::Adder {
            particle,
            dim: n,
            shift,
            phase,
        } => {
            let adder = modular_adder(shift, b)?;
            let schedule = build_select_schedule(grid.eta(), grid.dims(), particle + 1, n + 1)?;
            let mut slots = vec![0usize; schedule.slots()];
            for x in 0..dim {
                slots.iter_mut().for_each(|s| *s = 0);
                for c in 0..grid.coords() {
                    slots[schedule.slot_of(c / grid.dims(), c % grid.dims())] = grid.digit(x, c);
                }
                schedule.apply(&mut slots);
                let reg = slots[0];
                let moved = (0..b).find(|&y| adder[(y, reg)] != 0.0).expect("permutation");
                slots[0] = moved;
                schedule.apply_inverse(&mut slots);
                let mut y = 0;
                for c in 0..grid.coords() {
                    y = y * b + slots[schedule.slot_of(c / grid.dims(), c % grid.dims())];
                }
                out[(y, x)] = phase as f64 * adder[(moved, reg)];
            }
        }
        LcuTerm::Signature { index } => {
            let potential = decomp.potential_diagonal();
            for x in 0..dim {
                let s = signature_row_sign(potential[x], index, decomp.v_max(), decomp.scale_m())?;
                out[(x, x)] = s as f64;
            }
        }
    }
    Ok(out)
}
