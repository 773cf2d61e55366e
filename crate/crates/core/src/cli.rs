//! `realsim` command-line front end.
//!
//! Every report is written under `--out` and embeds the resolved config. On
//! failure a one-line JSON error object goes to stderr; hypothesis
//! violations exit with status 3, other module errors with 1, and usage
//! errors with 2.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bounds::{self, BoundInputs, PlanMode};
use crate::circuit;
use crate::error::{Error, Result};
use crate::grid::{self, GridSpec, StateVector};
use crate::hamiltonian::{self, PotentialConfig, PotentialSpec, QueryLedger};
use crate::oracle::{self, SpectralPropagator};
use crate::stencil;
use crate::taylor;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "realsim", version, about = "Real-space grid simulation and resource estimates")]
struct Cli {
    /// Directory for reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for random test states.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the second-derivative stencil of order A.
    Coeffs {
        #[arg(long)]
        order: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Plan spacing and order and evaluate the error and query bounds.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        time: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = EstimateMode::Worst)]
        mode: EstimateMode,
        /// `param=lo:hi:n`, linearly spaced.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Evolve a test state with the truncated Taylor series.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        time: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = SimMode::Effective)]
        mode: SimMode,
        /// Compare against dense spectral evolution.
        #[arg(long)]
        oracle_check: bool,
    },
    /// Run built-in consistency checks.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum EstimateMode {
    Worst,
    Optimistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SimMode {
    Effective,
    #[value(name = "blockencoding")]
    #[serde(rename = "blockencoding")]
    BlockEncoding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Stencil,
    Grid,
    Hamiltonian,
    Taylor,
    Circuit,
    Bounds,
    All,
}

/// Run configuration as read from `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub eta: usize,
    pub dims: usize,
    pub bins: usize,
    pub length: f64,
    /// Unit masses when omitted.
    #[serde(default)]
    pub masses: Vec<f64>,
    pub order_a: usize,
    pub kmax: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub initial_state: InitialState,
}

/// Test state for `simulate`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialState {
    /// Uniformly drawn complex amplitudes, seeded by `--seed`.
    #[default]
    Random,
    /// Plane wave with one wavevector component per coordinate.
    PlaneWave { k: Vec<f64> },
    /// Product of truncated Gaussians cut off at `kmax`; `D = 1` only.
    Gaussian { delta_p: f64 },
    Basis { index: usize },
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if cfg.masses.is_empty() {
            cfg.masses = vec![1.0; cfg.eta];
        }
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.eta, self.dims, self.bins, self.length, self.masses.clone())
    }

    fn potential(&self, config_path: &Path) -> Result<PotentialSpec> {
        self.potential.resolve(config_path.parent())
    }

    fn bound_inputs(&self, spec: &PotentialSpec, time: f64, eps: f64) -> BoundInputs {
        BoundInputs {
            eta: self.eta,
            dims: self.dims,
            mass: self.masses.iter().copied().fold(f64::INFINITY, f64::min),
            spacing: self.length / self.bins as f64,
            order: self.order_a,
            length: self.length,
            k_max: self.kmax,
            v_max: spec.v_max(),
            v_prime_max: spec.v_prime_max(),
            time,
            eps,
            delta: None,
            beta: self.beta,
        }
    }
}

/// Parse `argv` (program name first) and run. Returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            let mut obj = json!({ "kind": err.kind(), "message": err.to_string() });
            if let Error::Hypothesis { assumption, detail } = &err {
                obj["assumption"] = json!(assumption);
                obj["detail"] = json!(detail);
            }
            eprintln!("{}", json!({ "error": obj }));
            match err {
                Error::Hypothesis { .. } => EXIT_HYPOTHESIS,
                _ => EXIT_FAILURE,
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Coeffs { order, format } => coeffs(&cli.out, *order, *format),
        Command::Estimate {
            config,
            time,
            eps,
            mode,
            sweep,
        } => estimate(&cli.out, config, *time, *eps, *mode, sweep.as_deref()),
        Command::Simulate {
            config,
            time,
            eps,
            mode,
            oracle_check,
        } => simulate(&cli.out, cli.seed, config, *time, *eps, *mode, *oracle_check),
        Command::Verify { suite } => verify(&cli.out, cli.seed, *suite),
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

fn coeffs(out: &Path, order: usize, format: Format) -> Result<i32> {
    let st = stencil::fd_coefficients(order)?;
    let a = order as isize;
    let mut rows: Vec<(String, &BigRational)> =
        (-a..=a).map(|j| (j.to_string(), st.exact_coeff(j))).collect();
    rows.push(("norm_sum".into(), st.norm_sum_exact()));
    rows.push(("d_0".into(), st.exact_coeff(0)));
    let text = match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "rational", "decimal"])?;
            for (key, r) in &rows {
                w.write_record([key.clone(), r.to_string(), format!("{:e}", ratio_to_f64(r))])?;
            }
            String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
                .map_err(|e| Error::Data(e.to_string()))?
        }
        Format::Json => {
            let entry = |r: &BigRational| json!({ "rational": r.to_string(), "decimal": ratio_to_f64(r) });
            let coefficients: Vec<Value> = (-a..=a)
                .map(|j| {
                    let mut e = entry(st.exact_coeff(j));
                    e["j"] = json!(j);
                    e
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&json!({
                "order": order,
                "coefficients": coefficients,
                "norm_sum": entry(st.norm_sum_exact()),
                "d_0": entry(st.exact_coeff(0)),
            }))?;
            s.push('\n');
            s
        }
    };
    let name = match format {
        Format::Csv => "coeffs.csv",
        Format::Json => "coeffs.json",
    };
    fs::write(out.join(name), &text)?;
    print!("{text}");
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    param: String,
    value: f64,
    status: String,
    spacing: Option<f64>,
    order: Option<usize>,
    combined_error_bound: Option<f64>,
    total_error_bound: Option<f64>,
    segments: Option<usize>,
    truncation: Option<usize>,
    total_queries: Option<u64>,
}

struct Sweep {
    param: String,
    lo: f64,
    hi: f64,
    n: usize,
}

fn parse_sweep(s: &str) -> Result<Sweep> {
    let bad = || Error::Config(format!("sweep must look like param=lo:hi:n, got {s:?}"));
    let (param, range) = s.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n == 0 {
        return Err(bad());
    }
    Ok(Sweep {
        param: param.to_string(),
        lo,
        hi,
        n,
    })
}

fn set_param(inp: &mut BoundInputs, param: &str, v: f64) -> Result<()> {
    match param {
        "time" => inp.time = v,
        "eps" => inp.eps = v,
        "kmax" | "k_max" => inp.k_max = v,
        "length" => inp.length = v,
        "mass" => inp.mass = v,
        "v_max" => inp.v_max = v,
        "eta" => inp.eta = v.round() as usize,
        "dims" => inp.dims = v.round() as usize,
        "beta" => inp.beta = Some(v),
        other => {
            return Err(Error::Config(format!(
                "unknown sweep parameter {other:?} (time, eps, kmax, length, mass, v_max, eta, dims, beta)"
            )))
        }
    }
    Ok(())
}

fn estimate(
    out: &Path,
    config: &Path,
    time: f64,
    eps: f64,
    mode: EstimateMode,
    sweep: Option<&str>,
) -> Result<i32> {
    let cfg = RunConfig::load(config)?;
    let spec = cfg.potential(config)?;
    let inputs = cfg.bound_inputs(&spec, time, eps);
    let plan_mode = match mode {
        EstimateMode::Worst => PlanMode::Worst,
        EstimateMode::Optimistic => PlanMode::Optimistic,
    };
    let sweep = sweep.map(parse_sweep).transpose()?;
    let report = bounds::bound_report(&inputs, plan_mode.clone())?;
    write_json(
        &out.join("estimate.json"),
        &json!({
            "command": "estimate",
            "args": { "time": time, "eps": eps, "mode": mode, "sweep": sweep.as_ref().map(|s| format!("{}={}:{}:{}", s.param, s.lo, s.hi, s.n)) },
            "config": cfg,
            "report": report,
        }),
    )?;
    if let Some(sw) = sweep {
        let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
        for i in 0..sw.n {
            let v = if sw.n == 1 {
                sw.lo
            } else {
                sw.lo + (sw.hi - sw.lo) * i as f64 / (sw.n - 1) as f64
            };
            let mut inp = inputs.clone();
            set_param(&mut inp, &sw.param, v)?;
            let row = match bounds::bound_report(&inp, plan_mode.clone()) {
                Ok(r) => SweepRow {
                    param: sw.param.clone(),
                    value: v,
                    status: "ok".into(),
                    spacing: Some(r.plan.spacing),
                    order: Some(r.plan.order),
                    combined_error_bound: Some(r.combined_error_bound),
                    total_error_bound: Some(r.total_error_bound),
                    segments: Some(r.queries.segments),
                    truncation: Some(r.queries.truncation),
                    total_queries: Some(r.queries.total_queries),
                },
                Err(e) => SweepRow {
                    param: sw.param.clone(),
                    value: v,
                    status: e.kind().into(),
                    spacing: None,
                    order: None,
                    combined_error_bound: None,
                    total_error_bound: None,
                    segments: None,
                    truncation: None,
                    total_queries: None,
                },
            };
            w.serialize(row)?;
        }
        w.flush()?;
    }
    println!(
        "h = {:e}, a = {}, total error bound = {:e}, queries = {}",
        report.plan.spacing, report.plan.order, report.total_error_bound, report.queries.total_queries
    );
    Ok(EXIT_OK)
}

fn initial_state(cfg: &RunConfig, grid: &GridSpec, seed: u64) -> Result<StateVector> {
    match &cfg.initial_state {
        InitialState::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            StateVector::random(grid.clone(), &mut rng)
        }
        InitialState::PlaneWave { k } => {
            oracle::check_commensurate(k, grid.length())?;
            oracle::free_particle_reference(k, 0.0, grid)
        }
        InitialState::Gaussian { delta_p } => oracle::gaussian_state(*delta_p, cfg.kmax, grid),
        InitialState::Basis { index } => StateVector::basis(grid.clone(), *index),
    }
}

fn simulate(
    out: &Path,
    seed: u64,
    config: &Path,
    time: f64,
    eps: f64,
    mode: SimMode,
    oracle_check: bool,
) -> Result<i32> {
    let cfg = RunConfig::load(config)?;
    let grid = cfg.grid()?;
    let spec = cfg.potential(config)?;
    // Half the error budget goes to the potential reconstruction.
    let delta_lcu = if time > 0.0 { eps / (2.0 * time) } else { f64::INFINITY };
    let decomp = hamiltonian::lcu_decompose(&spec, &grid, cfg.order_a, delta_lcu)?;
    let plan = taylor::plan_evolution(&decomp, time, eps)?;
    let psi0 = initial_state(&cfg, &grid, seed)?;
    let ledger = QueryLedger::new();
    let (psi, report) = match mode {
        SimMode::Effective => taylor::evolve_effective(&decomp, &psi0, &plan, &ledger)?,
        SimMode::BlockEncoding => taylor::evolve_block_encoded(&decomp, &psi0, &plan, &ledger)?,
    };
    let check = if oracle_check {
        let h_eff = decomp.effective_dense()?;
        let reference = SpectralPropagator::symmetric(&h_eff)?.evolve(&psi0, time)?;
        let effective_distance = psi.distance(&reference)?;
        let h_disc = hamiltonian::assemble_dense(&spec, &grid, cfg.order_a)?;
        let discrete = SpectralPropagator::symmetric(&h_disc)?.evolve(&psi0, time)?;
        let discretized_distance = psi.distance(&discrete)?;
        Some(json!({
            "effective_distance": effective_distance,
            "discretized_distance": discretized_distance,
            "tolerance": eps,
            "passed": effective_distance <= eps,
        }))
    } else {
        None
    };
    grid::write_state(out.join("final_state.bin"), &psi)?;
    write_json(
        &out.join("simulate.json"),
        &json!({
            "command": "simulate",
            "args": { "time": time, "eps": eps, "mode": mode, "seed": seed, "oracle_check": oracle_check },
            "config": cfg,
            "lcu": {
                "scale_m": decomp.scale_m(),
                "lambda": decomp.lambda(),
                "terms": decomp.term_count(),
                "v_max": decomp.v_max(),
                "energy_shift": hamiltonian::energy_shift(&grid, cfg.order_a)?,
            },
            "ledger": ledger.counts(),
            "report": report,
            "oracle_check": check,
            "state_file": "final_state.bin",
        }),
    )?;
    println!(
        "{} segments, K = {}, final norm = {:.12}",
        report.plan.segments, report.plan.truncation, report.final_norm
    );
    if let Some(c) = &check {
        println!("oracle distance = {:e}", c["effective_distance"].as_f64().unwrap_or(f64::NAN));
        if c["passed"] == json!(false) {
            return Err(Error::ContractViolation(format!(
                "evolution differs from the dense oracle by more than eps = {eps:e}"
            )));
        }
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize)]
struct CheckRow {
    suite: &'static str,
    instance: String,
    passed: bool,
    detail: String,
}

fn row(suite: &'static str, instance: String, outcome: Result<(bool, String)>) -> CheckRow {
    match outcome {
        Ok((passed, detail)) => CheckRow {
            suite,
            instance,
            passed,
            detail,
        },
        Err(e) => CheckRow {
            suite,
            instance,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn verify_stencil() -> Vec<CheckRow> {
    let mut rows = Vec::new();
    for a in 1..=8usize {
        let outcome = stencil::fd_coefficients(a).map(|st| {
            let x0 = BigRational::new(BigInt::from(3), BigInt::from(7));
            let mut worst = 0;
            let ok = (0..=2 * a + 1).all(|p| {
                let got = stencil::apply_exact(&st, &x0, |x| stencil::monomial(x, p));
                let want = if p < 2 {
                    BigRational::zero()
                } else {
                    stencil::monomial(&x0, p - 2) * BigRational::from_integer(BigInt::from(p * (p - 1)))
                };
                worst = p;
                got == want
            });
            (ok, format!("exact through degree {worst}"))
        });
        rows.push(row("stencil", format!("a={a}"), outcome));
    }
    let limit = 2.0 * std::f64::consts::PI.powi(2) / 3.0;
    let outcome = (|| {
        let mut prev = 0.0;
        for a in 1..=stencil::DEFAULT_MAX_ORDER {
            let s = stencil::coefficient_norm_sum(a)?;
            if !(s > prev && s < limit) {
                return Ok((false, format!("a={a}: sum {s}")));
            }
            prev = s;
        }
        Ok((true, format!("max {prev:.12} < {limit:.12}")))
    })();
    rows.push(row("stencil", "norm sums a=1..64".into(), outcome));
    rows
}

fn verify_grid() -> Vec<CheckRow> {
    let mut rows = Vec::new();
    for (eta, dims, bins) in [(1, 1, 8), (2, 1, 4), (2, 2, 4), (3, 1, 5)] {
        let outcome = GridSpec::uniform(eta, dims, bins, 3.0).and_then(|g| {
            for flat in 0..g.dimension() {
                let idx = g.bin_index(flat)?;
                let c = grid::centroid(&g, &idx)?;
                if grid::nearest_centroid(&g, &c)? != idx || g.flat_index(&idx)? != flat {
                    return Ok((false, format!("round trip fails at {flat}")));
                }
            }
            Ok((true, format!("{} bins round-trip", g.dimension())))
        });
        rows.push(row("grid", format!("eta={eta} D={dims} b={bins}"), outcome));
    }
    rows
}

fn verify_hamiltonian() -> Vec<CheckRow> {
    let mut rows = Vec::new();
    for bins in [4, 8] {
        for a in [1, 2] {
            for m in [2, 4, 16] {
                let outcome = (|| {
                    let g = GridSpec::uniform(2, 1, bins, 4.0)?;
                    let spec = PotentialSpec::modified_coulomb(0.5, vec![1.0, -1.0])?;
                    let d = hamiltonian::lcu_decompose_with_scale(&spec, &g, a, m)?;
                    let h = hamiltonian::assemble_dense(&spec, &g, a)?;
                    let err = (h - d.reconstruct_dense()?).amax();
                    let bound = spec.v_max() / m as f64;
                    Ok((err <= bound, format!("max error {err:.3e} <= {bound:.3e}")))
                })();
                rows.push(row("hamiltonian", format!("b={bins} a={a} M={m}"), outcome));
            }
        }
    }
    rows
}

fn verify_taylor(seed: u64) -> Vec<CheckRow> {
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..4 {
        let eta = 1 + case % 2;
        let bins = if eta == 1 { 16 } else { 8 };
        let a = 1 + case % 3;
        let t: f64 = rng.gen_range(0.2..1.5);
        let eps = 1e-6;
        let outcome = (|| {
            let g = GridSpec::uniform(eta, 1, bins, 4.0)?;
            let charges = if eta == 1 { vec![1.0] } else { vec![1.0, -1.0] };
            let spec = PotentialSpec::modified_coulomb(0.5, charges)?;
            let d = hamiltonian::lcu_decompose(&spec, &g, a, eps / (2.0 * t))?;
            let plan = taylor::plan_evolution(&d, t, eps)?;
            let psi = StateVector::random(g, &mut rng)?;
            let ledger = QueryLedger::new();
            let (got, _) = taylor::evolve_effective(&d, &psi, &plan, &ledger)?;
            let want = SpectralPropagator::symmetric(&d.effective_dense()?)?.evolve(&psi, t)?;
            let err = got.distance(&want)?;
            let queries = ledger.counts().potential_queries;
            let ok = err <= eps && queries == plan.total_queries();
            Ok((ok, format!("error {err:.3e}, queries {queries} = 3Kr {}", plan.total_queries())))
        })();
        rows.push(row("taylor", format!("eta={eta} b={bins} a={a} t={t:.3}"), outcome));
    }
    rows
}

fn verify_circuit() -> Vec<CheckRow> {
    let mut rows = Vec::new();
    for eta in 1..=2usize {
        for dims in 1..=2usize {
            for a in 1..=2usize {
                let outcome = (|| {
                    let g = GridSpec::uniform(eta, dims, 4, 4.0)?;
                    let charges = vec![1.0; eta];
                    let spec = PotentialSpec::modified_coulomb(0.5, charges)?;
                    let d = hamiltonian::lcu_decompose_with_scale(&spec, &g, a, 4)?;
                    let mut worst: f64 = 0.0;
                    for chi in 0..d.term_count() {
                        let (_, term) = d.term(chi)?;
                        let diff = (circuit::select_v_circuit(&d, chi)? - d.term_matrix(term)?).amax();
                        worst = worst.max(diff);
                    }
                    let sched = circuit::build_select_schedule(eta, dims, eta, dims)?;
                    let m = circuit::circuit_metrics(&sched, &g);
                    Ok((
                        worst <= 1e-12,
                        format!(
                            "{} terms, max diff {worst:.1e}, gates {}, depth {}",
                            d.term_count(),
                            m.gate_count,
                            m.depth
                        ),
                    ))
                })();
                rows.push(row("circuit", format!("eta={eta} D={dims} b=4 a={a}"), outcome));
            }
        }
    }
    let outcome = (|| {
        for eta in 1..=16usize {
            let depth = eta.next_power_of_two().trailing_zeros() as usize;
            for i in 1..=eta {
                let s = circuit::build_swap_schedule(eta, i)?;
                let mut slots: Vec<usize> = (0..s.slots()).collect();
                s.apply(&mut slots);
                if slots[0] != s.slot_of(i - 1, 0) || s.depth() != depth {
                    return Ok((false, format!("eta={eta} i={i}")));
                }
                s.apply_inverse(&mut slots);
                if slots.iter().enumerate().any(|(p, &v)| p != v) {
                    return Ok((false, format!("round trip eta={eta} i={i}")));
                }
            }
        }
        Ok((true, "depth ceil(log2 eta), round trip identity".into()))
    })();
    rows.push(row("circuit", "swap network eta<=16".into(), outcome));
    rows
}

fn verify_bounds(seed: u64) -> Vec<CheckRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb0b);
    let mut rows = Vec::new();
    let mut fails = 0;
    let mut tried = 0;
    let mut worst: f64 = 0.0;
    let mut first_error = None;
    for _ in 0..40 {
        let inp = BoundInputs {
            eta: rng.gen_range(1..=3),
            dims: rng.gen_range(1..=3),
            mass: rng.gen_range(0.5..2.0),
            spacing: 0.1,
            order: 1,
            length: rng.gen_range(5.0..20.0),
            k_max: rng.gen_range(1.0..5.0),
            v_max: rng.gen_range(0.0..10.0),
            v_prime_max: rng.gen_range(0.0..10.0),
            time: rng.gen_range(0.1..5.0),
            eps: 10f64.powf(rng.gen_range(-6.0..-2.0)),
            delta: None,
            beta: None,
        };
        let plan = match bounds::worst_case_plan(&inp) {
            Ok(p) => p,
            Err(Error::Hypothesis { .. }) => continue,
            Err(e) => {
                first_error.get_or_insert(e.to_string());
                fails += 1;
                continue;
            }
        };
        tried += 1;
        let mut planned = inp.clone();
        planned.spacing = plan.spacing;
        planned.order = plan.order;
        match bounds::combined_error_bound(&planned) {
            Ok(c) => {
                let ratio = (c + plan.delta) / inp.eps;
                worst = worst.max(ratio);
                if ratio > 1.0 {
                    fails += 1;
                }
            }
            Err(e) => {
                first_error.get_or_insert(e.to_string());
                fails += 1;
            }
        }
    }
    let detail = match first_error {
        Some(e) => format!("{fails} failures, first: {e}"),
        None => format!("{tried} plans, worst (bound + delta) / eps = {worst:.4}"),
    };
    rows.push(CheckRow {
        suite: "bounds",
        instance: "worst-case plan self-consistency".into(),
        passed: fails == 0 && tried > 0,
        detail,
    });
    rows
}

fn verify(out: &Path, seed: u64, suite: Suite) -> Result<i32> {
    let mut rows = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::Stencil {
        rows.extend(verify_stencil());
    }
    if all || suite == Suite::Grid {
        rows.extend(verify_grid());
    }
    if all || suite == Suite::Hamiltonian {
        rows.extend(verify_hamiltonian());
    }
    if all || suite == Suite::Taylor {
        rows.extend(verify_taylor(seed));
    }
    if all || suite == Suite::Circuit {
        rows.extend(verify_circuit());
    }
    if all || suite == Suite::Bounds {
        rows.extend(verify_bounds(seed));
    }
    let width = rows.iter().map(|r| r.instance.len()).max().unwrap_or(0);
    for r in &rows {
        println!(
            "{:<12} {:<width$}  {}  {}",
            r.suite,
            r.instance,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    let failed = rows.iter().filter(|r| !r.passed).count();
    println!("{} checks, {} failed", rows.len(), failed);
    write_json(
        &out.join("verify.json"),
        &json!({ "command": "verify", "args": { "seed": seed }, "rows": rows, "failed": failed }),
    )?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}
