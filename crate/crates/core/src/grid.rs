//! Periodic hypercube mesh over `[0, L]^{eta D}` and discretized states.
//!
//! Coordinates are numbered particle-major: coordinate `c = i * D + n` is
//! dimension `n` of particle `i`. The flat index is the mixed-radix value of
//! the per-coordinate bin numbers with coordinate 0 most significant.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on `b^{eta D}`.
pub const DEFAULT_DIMENSION_CAP: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    eta: usize,
    dims: usize,
    bins: usize,
    length: f64,
    masses: Vec<f64>,
    dimension: usize,
}

impl GridSpec {
    pub fn new(eta: usize, dims: usize, bins: usize, length: f64, masses: Vec<f64>) -> Result<Self> {
        Self::with_cap(eta, dims, bins, length, masses, DEFAULT_DIMENSION_CAP)
    }

    /// Grid with unit masses.
    pub fn uniform(eta: usize, dims: usize, bins: usize, length: f64) -> Result<Self> {
        Self::new(eta, dims, bins, length, vec![1.0; eta])
    }

    pub fn with_cap(
        eta: usize,
        dims: usize,
        bins: usize,
        length: f64,
        masses: Vec<f64>,
        cap: usize,
    ) -> Result<Self> {
        if eta == 0 || dims == 0 {
            return Err(Error::Domain(format!(
                "particle count and dimension must be positive (eta={eta}, D={dims})"
            )));
        }
        if bins < 2 {
            return Err(Error::Domain(format!("need at least 2 bins per axis, got {bins}")));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::Domain(format!("box length must be positive, got {length}")));
        }
        if masses.len() != eta {
            return Err(Error::Shape(format!(
                "expected {eta} masses, got {}",
                masses.len()
            )));
        }
        if let Some(m) = masses.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
            return Err(Error::Domain(format!("masses must be positive, got {m}")));
        }
        let coords = eta * dims;
        let mut dimension: usize = 1;
        for _ in 0..coords {
            dimension = match dimension.checked_mul(bins) {
                Some(d) if d <= cap => d,
                _ => {
                    return Err(Error::Resource {
                        what: "grid dimension",
                        requested: bins.saturating_pow(coords as u32),
                        cap,
                    })
                }
            };
        }
        Ok(Self {
            eta,
            dims,
            bins,
            length,
            masses,
            dimension,
        })
    }

    pub fn eta(&self) -> usize {
        self.eta
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// `h = L / b`.
    pub fn spacing(&self) -> f64 {
        self.length / self.bins as f64
    }

    /// Number of coordinates, `eta * D`.
    pub fn coords(&self) -> usize {
        self.eta * self.dims
    }

    /// Hilbert-space dimension `b^{eta D}`.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn min_mass(&self) -> f64 {
        self.masses.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Flat-index stride of coordinate `c`.
    pub fn stride(&self, coord: usize) -> usize {
        self.bins.pow((self.coords() - 1 - coord) as u32)
    }

    /// Bin number of coordinate `c` in flat index `flat`.
    pub fn digit(&self, flat: usize, coord: usize) -> usize {
        (flat / self.stride(coord)) % self.bins
    }

    /// Flat index with coordinate `c` shifted by `shift` modulo `b`.
    pub fn shifted(&self, flat: usize, coord: usize, shift: isize) -> usize {
        let stride = self.stride(coord);
        let x = (flat / stride) % self.bins;
        let y = (x as isize + shift).rem_euclid(self.bins as isize) as usize;
        flat - x * stride + y * stride
    }

    pub fn flat_index(&self, idx: &BinIndex) -> Result<usize> {
        if idx.0.len() != self.coords() {
            return Err(Error::Shape(format!(
                "bin index has {} components, grid has {} coordinates",
                idx.0.len(),
                self.coords()
            )));
        }
        let mut flat = 0;
        for (c, &x) in idx.0.iter().enumerate() {
            if x >= self.bins {
                return Err(Error::Index(format!(
                    "component {c} = {x} outside [0, {}]",
                    self.bins - 1
                )));
            }
            flat = flat * self.bins + x;
        }
        Ok(flat)
    }

    pub fn bin_index(&self, flat: usize) -> Result<BinIndex> {
        if flat >= self.dimension {
            return Err(Error::Index(format!(
                "flat index {flat} outside [0, {})",
                self.dimension
            )));
        }
        Ok(BinIndex(
            (0..self.coords()).map(|c| self.digit(flat, c)).collect(),
        ))
    }

    /// Centroid of flat index `flat`; no range check.
    pub fn centroid_of(&self, flat: usize) -> Vec<f64> {
        let h = self.spacing();
        (0..self.coords())
            .map(|c| (self.digit(flat, c) as f64 + 0.5) * h)
            .collect()
    }

    /// True when `other` has the same geometry (masses are not compared).
    pub fn same_geometry(&self, other: &GridSpec) -> bool {
        self.eta == other.eta
            && self.dims == other.dims
            && self.bins == other.bins
            && self.length == other.length
    }
}

/// Per-coordinate bin numbers, particle-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinIndex(pub Vec<usize>);

impl BinIndex {
    pub fn components(&self) -> &[usize] {
        &self.0
    }
}

/// Centroid `(x + 1/2) h` per axis.
pub fn centroid(grid: &GridSpec, idx: &BinIndex) -> Result<Vec<f64>> {
    let flat = grid.flat_index(idx)?;
    Ok(grid.centroid_of(flat))
}

/// Bin whose centroid is closest to `x`. Points on a bin boundary go to the
/// lower bin.
pub fn nearest_centroid(grid: &GridSpec, x: &[f64]) -> Result<BinIndex> {
    if x.len() != grid.coords() {
        return Err(Error::Shape(format!(
            "point has {} coordinates, grid has {}",
            x.len(),
            grid.coords()
        )));
    }
    let h = grid.spacing();
    let b = grid.bins;
    let mut out = Vec::with_capacity(x.len());
    for (c, &xc) in x.iter().enumerate() {
        if !(0.0..=grid.length).contains(&xc) {
            return Err(Error::Domain(format!(
                "coordinate {c} = {xc} outside [0, {}]",
                grid.length
            )));
        }
        // The axes separate, so the Euclidean argmin is the per-axis argmin.
        let guess = ((xc / h).floor() as usize).min(b - 1);
        let lo = guess.saturating_sub(1);
        let hi = (guess + 1).min(b - 1);
        let mut best = lo;
        let mut best_dist = f64::INFINITY;
        for cand in lo..=hi {
            let d = (xc - (cand as f64 + 0.5) * h).abs();
            if d < best_dist {
                best = cand;
                best_dist = d;
            }
        }
        out.push(best);
    }
    Ok(BinIndex(out))
}

/// Amplitudes over the mesh centroids.
#[derive(Debug, Clone)]
pub struct StateVector {
    grid: GridSpec,
    amplitudes: Vec<Complex64>,
    norm_sq: f64,
}

impl StateVector {
    pub fn new(grid: GridSpec, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != grid.dimension() {
            return Err(Error::Shape(format!(
                "expected {} amplitudes, got {}",
                grid.dimension(),
                amplitudes.len()
            )));
        }
        let norm_sq = norm_sq(&amplitudes);
        Ok(Self {
            grid,
            amplitudes,
            norm_sq,
        })
    }

    /// Computational basis state at `flat`.
    pub fn basis(grid: GridSpec, flat: usize) -> Result<Self> {
        if flat >= grid.dimension() {
            return Err(Error::Index(format!("basis index {flat} out of range")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); grid.dimension()];
        amps[flat] = Complex64::new(1.0, 0.0);
        Self::new(grid, amps)
    }

    /// Normalized state with independent uniform real and imaginary parts.
    pub fn random<R: Rng>(grid: GridSpec, rng: &mut R) -> Result<Self> {
        let amps = (0..grid.dimension())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        Self::new(grid, amps)?.normalized()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq.sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sq - 1.0).abs() < 1e-10
    }

    /// Copy scaled to unit norm.
    pub fn normalized(mut self) -> Result<Self> {
        if !(self.norm_sq > 0.0) || !self.norm_sq.is_finite() {
            return Err(Error::DegenerateState(format!(
                "cannot normalize state with squared norm {}",
                self.norm_sq
            )));
        }
        let inv = 1.0 / self.norm_sq.sqrt();
        self.amplitudes.par_iter_mut().for_each(|a| *a *= inv);
        self.norm_sq = norm_sq(&self.amplitudes);
        Ok(self)
    }

    /// `||self - other||_2`.
    pub fn distance(&self, other: &StateVector) -> Result<f64> {
        check_same(&self.grid, &other.grid)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }
}

// Sequential so that results do not depend on thread scheduling.
fn norm_sq(amps: &[Complex64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

fn check_same(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if !a.same_geometry(b) {
        return Err(Error::Shape("states live on different grids".into()));
    }
    Ok(())
}

/// Sample `psi` at every centroid with midpoint weight `h^{eta D / 2}`,
/// optionally rescaled to unit discrete norm.
pub fn discretize<F>(grid: &GridSpec, psi: F, renormalize: bool) -> Result<StateVector>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let weight = grid.spacing().powf(grid.coords() as f64 / 2.0);
    let amps: Vec<Complex64> = (0..grid.dimension())
        .into_par_iter()
        .map(|flat| psi(&grid.centroid_of(flat)) * weight)
        .collect();
    let state = StateVector::new(grid.clone(), amps)?;
    if renormalize {
        if state.norm_sq == 0.0 {
            return Err(Error::DegenerateState(
                "discretized state has zero norm".into(),
            ));
        }
        state.normalized()
    } else {
        Ok(state)
    }
}

/// `sum conj(phi) psi`.
pub fn inner_product(phi: &StateVector, psi: &StateVector) -> Result<Complex64> {
    check_same(&phi.grid, &psi.grid)?;
    Ok(phi
        .amplitudes
        .iter()
        .zip(&psi.amplitudes)
        .map(|(a, b)| a.conj() * b)
        .sum())
}

#[derive(Debug, Serialize, Deserialize)]
struct StateHeader {
    eta: usize,
    dims: usize,
    bins: usize,
    length: f64,
}

/// Write a JSON header line followed by little-endian `(re, im)` pairs.
pub fn write_state<P: AsRef<Path>>(path: P, state: &StateVector) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = StateHeader {
        eta: state.grid.eta,
        dims: state.grid.dims,
        bins: state.grid.bins,
        length: state.grid.length,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for a in &state.amplitudes {
        w.write_all(&a.re.to_le_bytes())?;
        w.write_all(&a.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a state file. The header carries no masses, so unit masses are
/// assumed; use [`read_state_on`] to attach a known grid.
pub fn read_state<P: AsRef<Path>>(path: P) -> Result<StateVector> {
    let (header, amps) = read_raw(path)?;
    let grid = GridSpec::uniform(header.eta, header.dims, header.bins, header.length)?;
    StateVector::new(grid, amps)
}

/// Read a state file and check it matches `grid`.
pub fn read_state_on<P: AsRef<Path>>(path: P, grid: &GridSpec) -> Result<StateVector> {
    let (header, amps) = read_raw(path)?;
    if header.eta != grid.eta
        || header.dims != grid.dims
        || header.bins != grid.bins
        || header.length != grid.length
    {
        return Err(Error::Shape(format!(
            "state file header {header:?} does not match grid"
        )));
    }
    StateVector::new(grid.clone(), amps)
}

fn read_raw<P: AsRef<Path>>(path: P) -> Result<(StateHeader, Vec<Complex64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: StateHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::Data(format!("bad state header: {e}")))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 16 != 0 {
        return Err(Error::Data(format!(
            "payload of {} bytes is not a whole number of complex values",
            bytes.len()
        )));
    }
    let amps = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Ok((header, amps))
}
