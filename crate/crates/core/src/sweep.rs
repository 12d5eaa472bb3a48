//! Sweeps over `(θ, ω, R, N)` experiments and their CSV output.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::counterexample::{measure, CounterexampleSpec, ResidualReport};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::invertibility::{
    estimate_norm, exact_norm_with_bound, smallest_eigenvalue, DEFAULT_SEED, ESTIMATE_RESTARTS,
};
use crate::norms::{kernel_basis, NormContext, OrthMode, Projector};
use crate::operator::assemble;
use crate::profile::ProfileTable;

pub const CSV_VERSION_LINE: &str = "# segkernel v1";

pub const SWEEP_COLUMNS: &str =
    "theta,omega,R,N,method,orth_mode,K,omega_K,K_over_R,lambda_min,ce_lower_bound,runtime_ms";

pub const COUNTEREXAMPLE_COLUMNS: &str =
    "theta,alpha,R,omega,N,r,phi1_at_0,phi2_at_0,dev_from_profile_derivative,resolution_ok";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    Estimated,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Estimated => "estimated",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Method::Exact),
            "estimated" | "estimate" => Ok(Method::Estimated),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

/// One experiment of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEntry {
    pub theta: f64,
    pub omega: f64,
    pub half_length: f64,
    pub nodes: usize,
    pub orth_mode: OrthMode,
    pub method: Method,
}

impl PlanEntry {
    /// Entry on the default-density grid for `R`.
    pub fn with_default_nodes(theta: f64, omega: f64, half_length: f64, orth_mode: OrthMode, method: Method) -> Self {
        Self {
            theta,
            omega,
            half_length,
            nodes: crate::grid::default_node_count(half_length),
            orth_mode,
            method,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub theta: f64,
    pub omega: f64,
    pub half_length: f64,
    pub nodes: usize,
    pub method: Method,
    pub orth_mode: OrthMode,
    pub k: Option<f64>,
    pub lambda_min: Option<f64>,
    /// `‖φ_ce‖∞ / ‖L_ω φ_ce‖_θ` for the counterexample at this point, when
    /// it is defined (unconstrained, `ω > 0`, `ωR ≥ 1`).
    pub ce_lower_bound: Option<f64>,
    pub runtime_ms: u128,
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn omega_k(&self) -> Option<f64> {
        self.k.map(|k| self.omega * k)
    }

    pub fn k_over_r(&self) -> Option<f64> {
        self.k.map(|k| k / self.half_length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub jobs: usize,
    pub seed: u64,
    pub estimate_iters: usize,
    pub eig_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            seed: DEFAULT_SEED,
            estimate_iters: 10,
            eig_tol: 1e-12,
        }
    }
}

/// Runs every plan entry; failures are recorded in the entry's record and
/// the sweep continues. Records come back in plan order.
pub fn run_sweep(p: &ProfileTable, plan: &[PlanEntry], options: &SweepOptions) -> Vec<SweepRecord> {
    let run = |e: &PlanEntry| run_entry(p, e, options);
    if options.jobs <= 1 {
        return plan.iter().map(run).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(options.jobs).build() {
        // indexed collect keeps plan order
        Ok(pool) => pool.install(|| plan.par_iter().map(run).collect()),
        Err(_) => plan.iter().map(run).collect(),
    }
}

fn run_entry(p: &ProfileTable, e: &PlanEntry, options: &SweepOptions) -> SweepRecord {
    let start = Instant::now();
    let mut record = SweepRecord {
        theta: e.theta,
        omega: e.omega,
        half_length: e.half_length,
        nodes: e.nodes,
        method: e.method,
        orth_mode: e.orth_mode,
        k: None,
        lambda_min: None,
        ce_lower_bound: None,
        runtime_ms: 0,
        error: None,
    };
    if let Err(err) = fill_entry(p, e, options, &mut record) {
        record.error = Some(err.to_string());
    }
    record.runtime_ms = start.elapsed().as_millis();
    record
}

fn fill_entry(p: &ProfileTable, e: &PlanEntry, options: &SweepOptions, record: &mut SweepRecord) -> Result<()> {
    let ctx = NormContext::new(e.theta)?;
    let grid = Grid::new(e.half_length, e.nodes)?;
    let op = assemble(p, e.omega, grid)?;
    let eig = smallest_eigenvalue(&op, options.eig_tol)?;
    record.lambda_min = Some(eig.value);

    let projector = Projector::for_mode(&kernel_basis(p, grid), e.orth_mode, ctx)?;
    let k = match e.method {
        Method::Exact => exact_norm_with_bound(&op, ctx, projector.as_ref(), eig.certified_lower)?.value,
        Method::Estimated => estimate_norm(
            &op,
            ctx,
            projector.as_ref(),
            options.estimate_iters,
            ESTIMATE_RESTARTS,
            options.seed,
        )?,
    };
    record.k = Some(k);

    if e.orth_mode == OrthMode::None && e.omega > 0.0 {
        if let Ok(spec) = CounterexampleSpec::with_omega(e.half_length, e.theta, e.omega, grid) {
            record.ce_lower_bound = Some(measure(p, &spec)?.lower_bound());
        }
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn header(config: &[(String, String)], columns: &str) -> String {
    let mut out = String::new();
    out.push_str(CSV_VERSION_LINE);
    out.push('\n');
    for (k, v) in config {
        let _ = writeln!(out, "# {k} = {v}");
    }
    out.push_str(columns);
    out.push('\n');
    out
}

/// Sweep CSV. `runtime_ms` is written as 0 unless `timings` is set, so that
/// reruns are byte-identical. Failed entries keep their row with empty
/// result cells and are listed as trailing comments.
pub fn sweep_csv(config: &[(String, String)], records: &[SweepRecord], timings: bool) -> String {
    let mut out = header(config, SWEEP_COLUMNS);
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.theta,
            r.omega,
            r.half_length,
            r.nodes,
            r.method.as_str(),
            r.orth_mode.as_str(),
            opt(r.k),
            opt(r.omega_k()),
            opt(r.k_over_r()),
            opt(r.lambda_min),
            opt(r.ce_lower_bound),
            if timings { r.runtime_ms } else { 0 },
        );
    }
    for (i, r) in records.iter().enumerate() {
        if let Some(err) = &r.error {
            let _ = writeln!(out, "# error in row {i}: {err}");
        }
    }
    out
}

/// One counterexample CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleRow {
    pub theta: f64,
    pub alpha: Option<f64>,
    pub half_length: f64,
    pub omega: f64,
    pub report: ResidualReport,
    pub resolution_ok: bool,
}

pub fn counterexample_csv(config: &[(String, String)], rows: &[CounterexampleRow]) -> String {
    let mut out = header(config, COUNTEREXAMPLE_COLUMNS);
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.theta,
            opt(r.alpha),
            r.half_length,
            r.omega,
            r.report.coarse.nodes,
            r.report.r,
            r.report.phi_at_0.0,
            r.report.phi_at_0.1,
            r.report.coarse.phi0_deviation,
            r.resolution_ok,
        );
    }
    out
}
