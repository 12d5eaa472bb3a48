//! Command-line driver: `profile`, `solve`, `counterexample`, `sweep`, `eig`.
//!
//! Every flag can also come from a JSON config file (`--config`) whose keys
//! are the long flag names; flags given on the command line win.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Deserializer};

use crate::counterexample::{counterexample_residual_ungated, CounterexampleSpec};
use crate::error::{Error, Result};
use crate::grid::{default_node_count, Grid};
use crate::invertibility::{smallest_eigenvalue, DEFAULT_SEED};
use crate::norms::OrthMode;
use crate::operator::{assemble, convergence_report};
use crate::profile::{cache, ProfileTable, DEFAULT_HALF_LENGTH, DEFAULT_NEWTON_TOL, DEFAULT_NODES};
use crate::sweep::{
    counterexample_csv, run_sweep, sweep_csv, CounterexampleRow, Method, PlanEntry, SweepOptions,
    CSV_VERSION_LINE,
};

pub const CACHE_ENV: &str = "SEGKERNEL_CACHE";
pub const DEFAULT_CACHE_DIR: &str = ".segkernel-cache";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "segkernel", version, about = "Phase-separation profile and invertibility experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve (or load) the profile and print its asymptotic constants.
    Profile(Flags),
    /// Manufactured-solution solves of the Dirichlet problem; several N give a convergence table.
    Solve(Flags),
    /// Residual of the approximate-kernel counterexample for each R.
    Counterexample(Flags),
    /// Invertibility constants over a (theta, omega, R) plan.
    Sweep(Flags),
    /// Smallest eigenvalue of the discrete operator for each (omega, R).
    Eig(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Profile(_) => "profile",
            Command::Solve(_) => "solve",
            Command::Counterexample(_) => "counterexample",
            Command::Sweep(_) => "sweep",
            Command::Eig(_) => "eig",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Profile(f)
            | Command::Solve(f)
            | Command::Counterexample(f)
            | Command::Sweep(f)
            | Command::Eig(f) => f,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    /// JSON file with flat keys named like the long flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Profile half-length.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t: Option<f64>,
    /// Node count: the profile grid for `profile`, the experiment grid otherwise.
    #[arg(long = "N", value_delimiter = ',')]
    #[serde(rename = "N", default, deserialize_with = "one_or_many")]
    pub n: Option<Vec<usize>>,
    /// Profile node count for the other commands.
    #[arg(long = "N-profile")]
    #[serde(rename = "N-profile")]
    pub n_profile: Option<usize>,
    #[arg(long = "newton-tol")]
    #[serde(rename = "newton-tol")]
    pub newton_tol: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many")]
    pub theta: Option<Vec<f64>>,
    /// Counterexample exponent, omega = R^-alpha (defaults to theta).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many")]
    pub omega: Option<Vec<f64>>,
    #[arg(long = "R", value_delimiter = ',')]
    #[serde(rename = "R", default, deserialize_with = "one_or_many")]
    pub r: Option<Vec<f64>>,
    /// Products omega*R; R is derived per omega.
    #[arg(long = "omegaR", value_delimiter = ',')]
    #[serde(rename = "omegaR", default, deserialize_with = "one_or_many")]
    pub omega_r: Option<Vec<f64>>,
    /// none | one | two
    #[arg(long = "orth-mode")]
    #[serde(rename = "orth-mode")]
    pub orth_mode: Option<String>,
    /// exact | estimated
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long = "cache-dir")]
    #[serde(rename = "cache-dir")]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long = "eig-tol")]
    #[serde(rename = "eig-tol")]
    pub eig_tol: Option<f64>,
    /// Iteration cap of the norm estimator.
    #[arg(long = "max-iters")]
    #[serde(rename = "max-iters")]
    pub max_iters: Option<usize>,
    /// Write measured runtimes instead of 0 in the sweep CSV.
    #[arg(long)]
    #[serde(default)]
    pub timings: bool,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Option<Vec<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Ok(Option::<OneOrMany<T>>::deserialize(d)?.map(|v| match v {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    }))
}

impl Flags {
    /// Fills every unset flag from `file`.
    fn merged_over(self, file: Flags) -> Flags {
        Flags {
            config: self.config,
            t: self.t.or(file.t),
            n: self.n.or(file.n),
            n_profile: self.n_profile.or(file.n_profile),
            newton_tol: self.newton_tol.or(file.newton_tol),
            theta: self.theta.or(file.theta),
            alpha: self.alpha.or(file.alpha),
            omega: self.omega.or(file.omega),
            r: self.r.or(file.r),
            omega_r: self.omega_r.or(file.omega_r),
            orth_mode: self.orth_mode.or(file.orth_mode),
            method: self.method.or(file.method),
            cache_dir: self.cache_dir.or(file.cache_dir),
            out: self.out.or(file.out),
            seed: self.seed.or(file.seed),
            jobs: self.jobs.or(file.jobs),
            eig_tol: self.eig_tol.or(file.eig_tol),
            max_iters: self.max_iters.or(file.max_iters),
            timings: self.timings || file.timings,
        }
    }
}

/// Fully resolved and validated configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub profile_half_length: f64,
    pub profile_nodes: usize,
    pub newton_tol: f64,
    pub theta: Vec<f64>,
    pub alpha: Option<f64>,
    pub omega: Vec<f64>,
    pub half_lengths: Vec<f64>,
    pub omega_r: Vec<f64>,
    /// Fixed experiment node counts; empty means the default density rule.
    pub nodes: Vec<usize>,
    pub orth_mode: OrthMode,
    pub method: Method,
    pub cache_dir: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub jobs: usize,
    pub eig_tol: f64,
    pub max_iters: usize,
    pub timings: bool,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Resolves flags, config file, environment and defaults, then validates.
    pub fn resolve(command: &Command) -> Result<Self> {
        let flags = command.flags().clone();
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str::<Flags>(&text)
                    .map_err(|e| invalid(format!("bad config {}: {e}", path.display())))?
            }
            None => Flags::default(),
        };
        let f = flags.merged_over(file);
        let is_profile = matches!(command, Command::Profile(_));
        let mut nodes = f.n.clone().unwrap_or_default();
        let profile_nodes = if is_profile {
            if nodes.len() > 1 {
                return Err(invalid("profile takes a single --N"));
            }
            nodes.pop().or(f.n_profile).unwrap_or(DEFAULT_NODES)
        } else {
            f.n_profile.unwrap_or(DEFAULT_NODES)
        };
        let cache_dir = f
            .cache_dir
            .clone()
            .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR));
        let cfg = RunConfig {
            command: command.name().to_string(),
            profile_half_length: f.t.unwrap_or(DEFAULT_HALF_LENGTH),
            profile_nodes,
            newton_tol: f.newton_tol.unwrap_or(DEFAULT_NEWTON_TOL),
            theta: f.theta.unwrap_or_else(|| vec![0.5]),
            alpha: f.alpha,
            omega: f.omega.unwrap_or_default(),
            half_lengths: f.r.unwrap_or_default(),
            omega_r: f.omega_r.unwrap_or_default(),
            nodes,
            orth_mode: f.orth_mode.as_deref().unwrap_or("none").parse()?,
            method: f.method.as_deref().unwrap_or("exact").parse()?,
            cache_dir,
            out: f.out,
            seed: f.seed.unwrap_or(DEFAULT_SEED),
            jobs: f.jobs.unwrap_or(1),
            eig_tol: f.eig_tol.unwrap_or(1e-12),
            max_iters: f.max_iters.unwrap_or(10),
            timings: f.timings,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.profile_half_length >= 8.0) {
            return Err(invalid("--T must be at least 8"));
        }
        if self.profile_nodes.is_multiple_of(2) || self.profile_nodes < 17 {
            return Err(invalid("profile node count must be odd and at least 17"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(invalid("--newton-tol must be positive"));
        }
        if self.theta.is_empty() || self.theta.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(invalid("--theta values must be positive"));
        }
        if self.omega.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(invalid("--omega values must be non-negative"));
        }
        if self.half_lengths.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(invalid("--R values must be positive"));
        }
        if self.omega_r.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(invalid("--omegaR values must be positive"));
        }
        if !self.half_lengths.is_empty() && !self.omega_r.is_empty() {
            return Err(invalid("give either --R or --omegaR, not both"));
        }
        if !self.omega_r.is_empty() && self.omega.contains(&0.0) {
            return Err(invalid("--omegaR needs every omega to be positive"));
        }
        if self.nodes.iter().any(|n| *n < 5 || n % 2 == 0) {
            return Err(invalid("--N values must be odd and at least 5"));
        }
        if self.jobs == 0 {
            return Err(invalid("--jobs must be at least 1"));
        }
        if !(self.eig_tol > 0.0) {
            return Err(invalid("--eig-tol must be positive"));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(invalid("--alpha must lie in (0, 1]"));
            }
        }
        match self.command.as_str() {
            "solve" | "eig" | "sweep" => {
                if self.omega.is_empty() {
                    return Err(invalid(format!("{} needs --omega", self.command)));
                }
                if self.half_lengths.is_empty() && self.omega_r.is_empty() {
                    return Err(invalid(format!("{} needs --R or --omegaR", self.command)));
                }
            }
            "counterexample" => {
                if self.half_lengths.is_empty() {
                    return Err(invalid("counterexample needs --R"));
                }
                if self.theta.iter().any(|t| *t >= 1.0) {
                    return Err(invalid("counterexample needs theta in (0, 1)"));
                }
                if let Some(r) = self.half_lengths.iter().find(|r| !(**r > std::f64::consts::E.powf(1.5))) {
                    return Err(invalid(format!("counterexample needs R > e^1.5, got {r}")));
                }
            }
            _ => {}
        }
        if self.command == "sweep" && self.nodes.len() > 1 {
            return Err(invalid("sweep takes a single --N"));
        }
        if self.command == "eig" && self.nodes.len() > 1 {
            return Err(invalid("eig takes a single --N"));
        }
        Ok(())
    }

    /// `(ω, R)` pairs in plan order: ω outer, R inner.
    pub fn omega_r_pairs(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &w in &self.omega {
            if self.omega_r.is_empty() {
                out.extend(self.half_lengths.iter().map(|&r| (w, r)));
            } else {
                // strip the rounding of the division, e.g. 10 / 0.05
                out.extend(self.omega_r.iter().map(|&p| (w, (p / w * 1e6).round() / 1e6)));
            }
        }
        out
    }

    fn nodes_for(&self, half_length: f64) -> usize {
        self.nodes.first().copied().unwrap_or_else(|| default_node_count(half_length))
    }

    /// The `# key = value` lines written into every output. IO-only settings
    /// (output path, cache directory, worker count) are left out so that
    /// equal configurations give byte-identical files.
    pub fn header_lines(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = vec![
            ("command".into(), self.command.clone()),
            ("T".into(), self.profile_half_length.to_string()),
            ("N-profile".into(), self.profile_nodes.to_string()),
            ("newton-tol".into(), format!("{:e}", self.newton_tol)),
            ("theta".into(), join(&self.theta)),
        ];
        if let Some(a) = self.alpha {
            v.push(("alpha".into(), a.to_string()));
        }
        if !self.omega.is_empty() {
            v.push(("omega".into(), join(&self.omega)));
        }
        if !self.half_lengths.is_empty() {
            v.push(("R".into(), join(&self.half_lengths)));
        }
        if !self.omega_r.is_empty() {
            v.push(("omegaR".into(), join(&self.omega_r)));
        }
        let n = if self.nodes.is_empty() {
            "max(2001, round(80R)+1), odd".to_string()
        } else {
            join(&self.nodes)
        };
        v.push(("N".into(), n));
        v.push(("orth-mode".into(), self.orth_mode.as_str().into()));
        v.push(("method".into(), self.method.as_str().into()));
        v.push(("seed".into(), self.seed.to_string()));
        v.push(("eig-tol".into(), format!("{:e}", self.eig_tol)));
        v.push(("max-iters".into(), self.max_iters.to_string()));
        v
    }

    fn header_text(&self) -> String {
        let mut s = String::new();
        s.push_str(CSV_VERSION_LINE);
        s.push('\n');
        for (k, v) in self.header_lines() {
            let _ = writeln!(s, "# {k} = {v}");
        }
        s
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let cfg = match RunConfig::resolve(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    match dispatch(&cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_VALIDATION
            }
        }
    }
}

fn dispatch(cfg: &RunConfig) -> Result<i32> {
    // fail on unwritable outputs before any compute
    if cfg.command != "profile" {
        if let Some(out) = &cfg.out {
            check_writable(out)?;
        }
    }
    match cfg.command.as_str() {
        "profile" => cmd_profile(cfg),
        "solve" => cmd_solve(cfg),
        "counterexample" => cmd_counterexample(cfg),
        "sweep" => cmd_sweep(cfg),
        "eig" => cmd_eig(cfg),
        other => Err(invalid(format!("unknown command {other}"))),
    }
}

fn check_writable(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::OpenOptions::new().create(true).append(true).open(path)?;
    Ok(())
}

fn emit(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.out {
        Some(path) => {
            fs::write(path, text)?;
            println!("{}wrote {}", cfg.header_text(), path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn load_profile(cfg: &RunConfig) -> Result<ProfileTable> {
    let (p, _) = cache::load_or_solve(&cfg.cache_dir, cfg.profile_half_length, cfg.profile_nodes, cfg.newton_tol)?;
    Ok(p)
}

fn cmd_profile(cfg: &RunConfig) -> Result<i32> {
    let dir = cfg.out.clone().unwrap_or_else(|| cfg.cache_dir.clone());
    let (p, path) = cache::load_or_solve(&dir, cfg.profile_half_length, cfg.profile_nodes, cfg.newton_tol)?;
    let a = &p.asymptotics;
    print!("{}", cfg.header_text());
    println!("A = {}", a.slope);
    println!("B = {}", a.intercept);
    println!("c_fit = {}", a.c_fit);
    println!("ode_residual = {:e}", crate::profile::ode_residual(&p));
    println!("cache = {}", path.display());
    Ok(EXIT_OK)
}

fn cmd_solve(cfg: &RunConfig) -> Result<i32> {
    let p = load_profile(cfg)?;
    let mut text = cfg.header_text();
    text.push_str("omega,R,N,h,max_error,observed_order\n");
    for (w, r) in cfg.omega_r_pairs() {
        let counts = if cfg.nodes.is_empty() {
            vec![default_node_count(r)]
        } else {
            cfg.nodes.clone()
        };
        for row in convergence_report(&p, w, r, &counts)? {
            let order = row.observed_order.map(|o| o.to_string()).unwrap_or_default();
            let _ = writeln!(text, "{w},{r},{},{},{},{order}", row.nodes, row.spacing, row.error);
        }
    }
    emit(cfg, &text)?;
    Ok(EXIT_OK)
}

fn cmd_counterexample(cfg: &RunConfig) -> Result<i32> {
    let p = load_profile(cfg)?;
    let mut rows = Vec::new();
    for &theta in &cfg.theta {
        let alpha = cfg.alpha.unwrap_or(theta);
        for &r in &cfg.half_lengths {
            let mut spec = CounterexampleSpec::with_alpha(r, theta, alpha)?;
            if let Some(&n) = cfg.nodes.first() {
                spec = spec.with_grid(Grid::new(r, n)?)?;
            }
            let (report, ok) = counterexample_residual_ungated(&p, &spec)?;
            rows.push(CounterexampleRow {
                theta,
                alpha: Some(alpha),
                half_length: r,
                omega: spec.omega,
                report,
                resolution_ok: ok,
            });
        }
    }
    emit(cfg, &counterexample_csv(&cfg.header_lines(), &rows))?;
    if rows.iter().all(|r| r.resolution_ok) {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: counterexample residual not resolved on at least one grid");
        Ok(EXIT_NUMERICAL)
    }
}

/// Sweep plan: θ outer, then ω, then R.
pub fn sweep_plan(cfg: &RunConfig) -> Vec<PlanEntry> {
    let mut plan = Vec::new();
    for &theta in &cfg.theta {
        for (omega, r) in cfg.omega_r_pairs() {
            plan.push(PlanEntry {
                theta,
                omega,
                half_length: r,
                nodes: cfg.nodes_for(r),
                orth_mode: cfg.orth_mode,
                method: cfg.method,
            });
        }
    }
    plan
}

fn cmd_sweep(cfg: &RunConfig) -> Result<i32> {
    let p = load_profile(cfg)?;
    let options = SweepOptions {
        jobs: cfg.jobs,
        seed: cfg.seed,
        estimate_iters: cfg.max_iters,
        eig_tol: cfg.eig_tol,
    };
    let records = run_sweep(&p, &sweep_plan(cfg), &options);
    emit(cfg, &sweep_csv(&cfg.header_lines(), &records, cfg.timings))?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed == 0 {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: {failed} sweep entries failed");
        Ok(EXIT_NUMERICAL)
    }
}

fn cmd_eig(cfg: &RunConfig) -> Result<i32> {
    let p = load_profile(cfg)?;
    let mut text = cfg.header_text();
    text.push_str("omega,R,N,lambda_min,certified_lower,omega_sq\n");
    for (w, r) in cfg.omega_r_pairs() {
        let grid = Grid::new(r, cfg.nodes_for(r))?;
        let op = assemble(&p, w, grid)?;
        let e = smallest_eigenvalue(&op, cfg.eig_tol)?;
        let _ = writeln!(text, "{w},{r},{},{},{},{}", grid.len(), e.value, e.certified_lower, w * w);
    }
    emit(cfg, &text)?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(args: &[&str]) -> Result<RunConfig> {
        let cli = Cli::try_parse_from(std::iter::once("segkernel").chain(args.iter().copied())).unwrap();
        RunConfig::resolve(&cli.command)
    }

    #[test]
    fn nine_point_plan_has_nine_entries() {
        let cfg = resolve(&["sweep", "--theta", "0.5", "--omega", "0.05,0.1,0.2", "--omegaR", "10,20,40"]).unwrap();
        let plan = sweep_plan(&cfg);
        assert_eq!(plan.len(), 9);
        assert_eq!(plan[0].half_length, 200.0);
        assert_eq!(plan[0].nodes, 16001);
        assert_eq!(plan[8].half_length, 200.0);
    }

    #[test]
    fn validation_rejects_bad_input() {
        assert!(resolve(&["sweep", "--omega", "0.1"]).is_err());
        assert!(resolve(&["sweep", "--omega=-0.1", "--R", "10"]).is_err());
        assert!(resolve(&["sweep", "--omega", "0.1", "--R", "10", "--omegaR", "2"]).is_err());
        assert!(resolve(&["profile", "--N", "4800"]).is_err());
        assert!(resolve(&["counterexample", "--theta", "1.5", "--R", "50"]).is_err());
        assert!(resolve(&["sweep", "--omega", "0.1", "--R", "10", "--orth-mode", "three"]).is_err());
    }

    #[test]
    fn config_file_is_overridden_by_flags() {
        let dir = std::env::temp_dir().join(format!("segkernel-cli-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cfg.json");
        fs::write(&path, r#"{"theta": 0.25, "omega": [0.1, 0.2], "R": 50, "seed": 7}"#).unwrap();
        let cfg = resolve(&["sweep", "--config", path.to_str().unwrap(), "--seed", "9"]).unwrap();
        assert_eq!(cfg.theta, vec![0.25]);
        assert_eq!(cfg.omega, vec![0.1, 0.2]);
        assert_eq!(cfg.half_lengths, vec![50.0]);
        assert_eq!(cfg.seed, 9);
        fs::write(&path, r#"{"bogus": 1}"#).unwrap();
        assert!(resolve(&["sweep", "--config", path.to_str().unwrap()]).is_err());
        let _ = fs::remove_dir_all(&dir);
    }
}
