//! Reference solutions: dense exponentials via eigendecomposition, exact
//! free-particle plane waves, and the momentum-truncated Gaussian.

use std::f64::consts::PI;

use nalgebra::{ComplexField, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::grid::{discretize, GridSpec, StateVector};

/// Largest matrix dimension accepted by the dense oracle.
pub const ORACLE_CAP: usize = 4096;

/// Tolerance on `|H_ij - conj(H_ji)|`.
pub const HERMITIAN_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
enum Basis {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
}

/// Eigendecomposition of a Hermitian matrix, reusable for any time.
#[derive(Debug, Clone)]
pub struct SpectralPropagator {
    eigenvalues: Vec<f64>,
    basis: Basis,
}

fn check_dim(n: usize, m: usize) -> Result<()> {
    if n != m {
        return Err(Error::Shape(format!("matrix is {n}x{m}, not square")));
    }
    if n > ORACLE_CAP {
        return Err(Error::Resource {
            what: "oracle matrix dimension",
            requested: n,
            cap: ORACLE_CAP,
        });
    }
    Ok(())
}

/// `max |V diag(lambda) V^H - H|`.
fn eigen_residual<T>(h: &DMatrix<T>, eig: &SymmetricEigen<T, Dyn>) -> f64
where
    T: ComplexField<RealField = f64>,
{
    let lam = DMatrix::from_diagonal(&eig.eigenvalues.map(T::from_real));
    let recon = &eig.eigenvectors * lam * eig.eigenvectors.adjoint();
    (recon - h).iter().fold(0.0, |m, z| m.max(z.clone().modulus()))
}

/// The default convergence threshold can stop with a residual near
/// `1e-7 |H|` when the spectrum is clustered, so tighter thresholds are
/// tried in turn and the decomposition with the smallest residual is kept.
fn accurate_eigen<T>(h: &DMatrix<T>) -> SymmetricEigen<T, Dyn>
where
    T: ComplexField<RealField = f64>,
{
    let n = h.nrows().max(1) as f64;
    let scale = h.iter().fold(1.0f64, |m, z| m.max(z.clone().modulus()));
    let target = 1e-14 * n * scale;
    let mut best = SymmetricEigen::new(h.clone());
    let mut best_res = eigen_residual(h, &best);
    for eps in [1e-16, 1e-17, 1e-15] {
        if best_res <= target {
            break;
        }
        if let Some(eig) = SymmetricEigen::try_new(h.clone(), eps, 1_000_000) {
            let res = eigen_residual(h, &eig);
            if res < best_res {
                best = eig;
                best_res = res;
            }
        }
    }
    best
}

impl SpectralPropagator {
    pub fn symmetric(h: &DMatrix<f64>) -> Result<Self> {
        check_dim(h.nrows(), h.ncols())?;
        let asym = (h - h.transpose()).amax();
        if asym > HERMITIAN_TOL {
            return Err(Error::NotHermitian { asymmetry: asym });
        }
        let eig = accurate_eigen(h);
        Ok(Self {
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            basis: Basis::Real(eig.eigenvectors),
        })
    }

    pub fn hermitian(h: &DMatrix<Complex64>) -> Result<Self> {
        check_dim(h.nrows(), h.ncols())?;
        let asym = (h - h.adjoint()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if asym > HERMITIAN_TOL {
            return Err(Error::NotHermitian { asymmetry: asym });
        }
        if h.iter().all(|z| z.im == 0.0) {
            return Self::symmetric(&h.map(|z| z.re));
        }
        let eig = accurate_eigen(h);
        Ok(Self {
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            basis: Basis::Complex(eig.eigenvectors),
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `exp(-i H t) psi` on raw amplitudes.
    pub fn evolve_amplitudes(&self, psi: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
        if psi.len() != self.dimension() {
            return Err(Error::Shape(format!(
                "state has {} amplitudes, operator has dimension {}",
                psi.len(),
                self.dimension()
            )));
        }
        let v = DVector::from_column_slice(psi);
        let phases = DVector::from_iterator(
            self.dimension(),
            self.eigenvalues.iter().map(|&e| Complex64::from_polar(1.0, -e * t)),
        );
        let out = match &self.basis {
            Basis::Real(u) => {
                let uc = u.map(|x| Complex64::new(x, 0.0));
                let coeffs = uc.tr_mul(&v).component_mul(&phases);
                uc * coeffs
            }
            Basis::Complex(u) => {
                let coeffs = u.ad_mul(&v).component_mul(&phases);
                u * coeffs
            }
        };
        Ok(out.iter().copied().collect())
    }

    pub fn evolve(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        let amps = self.evolve_amplitudes(psi.amplitudes(), t)?;
        StateVector::new(psi.grid().clone(), amps)
    }
}

/// `exp(-i H t) psi` for a complex Hermitian `H`.
pub fn expm_evolve(h: &DMatrix<Complex64>, psi: &StateVector, t: f64) -> Result<StateVector> {
    SpectralPropagator::hermitian(h)?.evolve(psi, t)
}

/// `exp(-i H t) psi` for a real symmetric `H`.
pub fn expm_evolve_real(h: &DMatrix<f64>, psi: &StateVector, t: f64) -> Result<StateVector> {
    SpectralPropagator::symmetric(h)?.evolve(psi, t)
}

/// Check each `k_c L / (2 pi)` is an integer.
pub fn check_commensurate(k: &[f64], length: f64) -> Result<Vec<i64>> {
    k.iter()
        .map(|&kc| {
            let kappa = kc * length / (2.0 * PI);
            let r = kappa.round();
            if (kappa - r).abs() > 1e-9 * kappa.abs().max(1.0) {
                Err(Error::Domain(format!(
                    "wavevector {kc} is not a multiple of 2 pi / {length}"
                )))
            } else {
                Ok(r as i64)
            }
        })
        .collect()
}

/// Continuum energy `sum_c k_c^2 / (2 m_c)`.
pub fn free_energy(k: &[f64], grid: &GridSpec) -> f64 {
    k.iter()
        .enumerate()
        .map(|(c, kc)| kc * kc / (2.0 * grid.masses()[c / grid.dims()]))
        .sum()
}

/// Discretized normalized plane wave `e^{i k.x}` carrying the exact
/// continuum phase `exp(-i t sum k^2 / 2m)`.
pub fn free_particle_reference(k: &[f64], t: f64, grid: &GridSpec) -> Result<StateVector> {
    if k.len() != grid.coords() {
        return Err(Error::Shape(format!(
            "wavevector has {} components, grid has {} coordinates",
            k.len(),
            grid.coords()
        )));
    }
    check_commensurate(k, grid.length())?;
    let phase = Complex64::from_polar(1.0, -free_energy(k, grid) * t);
    let amp = grid.length().powf(-(grid.coords() as f64) / 2.0);
    discretize(
        grid,
        |x| {
            let arg: f64 = x.iter().zip(k).map(|(a, b)| a * b).sum();
            Complex64::from_polar(amp, arg) * phase
        },
        true,
    )
}

/// Minimum-uncertainty wavepacket with its momentum distribution cut off at
/// `|k| < k_max`, centred at `center` with zero mean momentum.
#[derive(Debug, Clone)]
pub struct TruncatedGaussian {
    delta_p: f64,
    k_max: f64,
    center: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

const SIMPSON_PANELS: usize = 2048;

impl TruncatedGaussian {
    pub fn new(delta_p: f64, k_max: f64, center: f64) -> Result<Self> {
        if !(delta_p > 0.0) {
            return Err(Error::Domain(format!("momentum width must be positive, got {delta_p}")));
        }
        if !(k_max >= 3.0 * delta_p) {
            return Err(Error::Domain(format!(
                "cutoff {k_max} must be at least 3 times the momentum width {delta_p}"
            )));
        }
        // Simpson weights on [0, k_max] with the momentum amplitude folded in.
        let n = SIMPSON_PANELS;
        let dk = k_max / n as f64;
        let norm = (2.0 * PI).sqrt().recip() * 2.0;
        let mut nodes = Vec::with_capacity(n + 1);
        let mut weights = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let k = i as f64 * dk;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            nodes.push(k);
            weights.push(w * dk / 3.0 * norm * momentum_amplitude(delta_p, k));
        }
        Ok(Self {
            delta_p,
            k_max,
            center,
            nodes,
            weights,
        })
    }

    pub fn delta_p(&self) -> f64 {
        self.delta_p
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }

    /// Position spread `1 / (2 delta_p)` of the untruncated packet.
    pub fn sigma(&self) -> f64 {
        0.5 / self.delta_p
    }

    /// `psi(x)`; real because the momentum profile is even.
    pub fn value(&self, x: f64) -> f64 {
        let u = x - self.center;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(k, w)| w * (k * u).cos())
            .sum()
    }

    /// `d psi / dx`.
    pub fn derivative(&self, x: f64) -> f64 {
        let u = x - self.center;
        -self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(k, w)| w * k * (k * u).sin())
            .sum::<f64>()
    }

    /// Largest `|psi'|` found by a dense scan over `center +- 6 sigma`
    /// followed by golden-section refinement.
    pub fn max_abs_derivative(&self) -> f64 {
        self.scan_max(|x| self.derivative(x).abs())
    }

    pub fn max_abs_value(&self) -> f64 {
        self.scan_max(|x| self.value(x).abs())
    }

    fn scan_max<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let half = 6.0 * self.sigma();
        let n = 4000;
        let step = 2.0 * half / n as f64;
        let mut best_x = self.center;
        let mut best = f(best_x);
        for i in 0..=n {
            let x = self.center - half + i as f64 * step;
            let v = f(x);
            if v > best {
                best = v;
                best_x = x;
            }
        }
        let (mut lo, mut hi) = (best_x - step, best_x + step);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..60 {
            let x1 = hi - g * (hi - lo);
            let x2 = lo + g * (hi - lo);
            if f(x1) > f(x2) {
                hi = x2;
            } else {
                lo = x1;
            }
        }
        best.max(f(0.5 * (lo + hi)))
    }

    /// Probability outside `[center - L/2, center + L/2]` for the untruncated
    /// packet.
    pub fn tail_mass(&self, length: f64) -> f64 {
        erfc(length / (2.0 * 2f64.sqrt() * self.sigma()))
    }
}

/// `exp(-k^2 / (4 dp^2)) / sqrt(sqrt(2 pi) dp)`.
pub fn momentum_amplitude(delta_p: f64, k: f64) -> f64 {
    (-k * k / (4.0 * delta_p * delta_p)).exp() / ((2.0 * PI).sqrt() * delta_p).sqrt()
}

/// `(8 / (pi e^2))^{1/4} dp^{3/2}`, the peak slope of the untruncated packet.
pub fn gaussian_peak_slope(delta_p: f64) -> f64 {
    (8.0 / (PI * std::f64::consts::E.powi(2))).powf(0.25) * delta_p.powf(1.5)
}

/// Mass beyond which the box is considered too small.
pub const TAIL_TOLERANCE: f64 = 1e-8;

/// Product of identical truncated Gaussians, one per particle, each centred
/// in the box. Requires `D = 1`.
pub fn gaussian_state(delta_p: f64, k_max: f64, grid: &GridSpec) -> Result<StateVector> {
    if grid.dims() != 1 {
        return Err(Error::Domain(format!(
            "gaussian state is defined for D = 1, got D = {}",
            grid.dims()
        )));
    }
    let packet = TruncatedGaussian::new(delta_p, k_max, grid.length() / 2.0)?;
    let tail = packet.tail_mass(grid.length());
    if tail > TAIL_TOLERANCE {
        return Err(Error::Domain(format!(
            "box of length {} leaves mass {tail:e} of the wavepacket outside",
            grid.length()
        )));
    }
    let b = grid.bins();
    let h = grid.spacing();
    let table: Vec<f64> = (0..b).map(|x| packet.value((x as f64 + 0.5) * h)).collect();
    discretize(
        grid,
        |x| {
            let v: f64 = x
                .iter()
                .map(|xc| table[((xc / h - 0.5).round() as usize).min(b - 1)])
                .product();
            Complex64::new(v, 0.0)
        },
        true,
    )
}

/// Peak of `|d/dx_1 Psi|` for an `eta`-fold product of identical packets:
/// `max|psi'| * max|psi|^{eta - 1}`.
pub fn product_peak_slope(packet: &TruncatedGaussian, eta: usize) -> f64 {
    packet.max_abs_derivative() * packet.max_abs_value().powi(eta as i32 - 1)
}
