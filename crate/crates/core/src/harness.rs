//! Benchmark sweeps: assemble or load a system, set up the preconditioner,
//! solve with Bi-CGStab and tabulate iterations and wall-clock times.
//!
//! Times are monotonic wall-clock seconds, not CPU seconds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize};

use crate::block::{BlockVector, ThreeFieldSystem};
use crate::error::{Error, Result};
use crate::io::{load_block_system, BlockSystemFiles};
use crate::krylov::{bicgstab, SolveReport, DEFAULT_MAX_IT, DEFAULT_TOL};
use crate::mandel::{assemble_three_field, GridSpec, MaterialParams};
use crate::rpf::{rpf_setup, InnerPolicy, RpfConfig, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSource {
    /// Mandel slab with `a_over_h` elements across.
    Mandel {
        a_over_h: usize,
        #[serde(default)]
        material: MaterialParams,
    },
    /// Arbitrary Cartesian grid with the Mandel boundary conditions.
    Grid {
        grid: GridSpec,
        #[serde(default)]
        material: MaterialParams,
    },
    /// A stored system in the conventional layout of [`BlockSystemFiles::in_dir`].
    Files { dir: PathBuf },
}

impl ProblemSource {
    pub fn label(&self) -> String {
        match self {
            ProblemSource::Mandel { a_over_h, .. } => format!("mandel-{a_over_h}"),
            ProblemSource::Grid { grid, .. } => format!("grid-{}x{}x{}", grid.nx, grid.ny, grid.nz),
            ProblemSource::Files { dir } => format!("files-{}", dir.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhsKind {
    /// The problem's own load vector.
    #[default]
    Load,
    /// Uniform random entries in [-1, 1) drawn from the case seed.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    pub problem: ProblemSource,
    /// Δt in units of t_c; for stored systems `None` keeps the stored Δt.
    pub dt_over_tc: Option<f64>,
    pub theta: f64,
    pub variant: Variant,
    pub policy: InnerPolicy,
    pub rho_k: usize,
    pub rho_a: usize,
    pub rho_s: usize,
    pub omega_k: f64,
    pub omega_a: f64,
    pub n_in: usize,
    pub tol: f64,
    pub max_it: usize,
    pub seed: u64,
    pub rhs: RhsKind,
}

impl BenchCase {
    pub fn mandel(a_over_h: usize, dt_over_tc: f64) -> Self {
        let d = RpfConfig::default();
        Self {
            problem: ProblemSource::Mandel {
                a_over_h,
                material: MaterialParams::default(),
            },
            dt_over_tc: Some(dt_over_tc),
            theta: 1.0,
            variant: d.variant,
            policy: d.policy,
            rho_k: d.rho_k,
            rho_a: d.rho_a,
            rho_s: d.rho_s,
            omega_k: d.omega_k,
            omega_a: d.omega_a,
            n_in: d.n_in,
            tol: DEFAULT_TOL,
            max_it: DEFAULT_MAX_IT,
            seed: 0,
            rhs: RhsKind::Load,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_it == 0 {
            return Err(Error::Config("max_it must be at least 1".into()));
        }
        if let Some(r) = self.dt_over_tc {
            if !(r > 0.0) {
                return Err(Error::Config(format!(
                    "dt_over_tc must be positive, got {r}"
                )));
            }
        }
        self.rpf_config().validate()
    }

    pub fn rpf_config(&self) -> RpfConfig {
        RpfConfig {
            omega_k: self.omega_k,
            omega_a: self.omega_a,
            policy: self.policy,
            rho_k: self.rho_k,
            rho_a: self.rho_a,
            rho_s: self.rho_s,
            variant: self.variant,
            n_in: self.n_in,
            ..RpfConfig::default()
        }
    }

    /// Assembles or loads the system at this case's time step.
    pub fn build_system(&self) -> Result<(ThreeFieldSystem, BlockVector)> {
        let (sys, mut rhs) = match &self.problem {
            ProblemSource::Mandel { a_over_h, material } => {
                let dt = self.require_dt()? * material.consolidation_time;
                assemble_three_field(&GridSpec::mandel(*a_over_h), material, dt, self.theta)?
            }
            ProblemSource::Grid { grid, material } => {
                let dt = self.require_dt()? * material.consolidation_time;
                assemble_three_field(grid, material, dt, self.theta)?
            }
            ProblemSource::Files { dir } => {
                let (sys, rhs, meta) = load_block_system(&BlockSystemFiles::in_dir(dir))?;
                let sys = match (self.dt_over_tc, meta.consolidation_time) {
                    (None, _) => sys,
                    (Some(r), Some(tc)) => sys.with_time_step(self.theta, r * tc)?,
                    (Some(_), None) => {
                        return Err(Error::Config(
                            "dt_over_tc given but the stored system has no consolidation_time"
                                .into(),
                        ))
                    }
                };
                (sys, rhs)
            }
        };
        if self.rhs == RhsKind::Random {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for v in rhs
                .u
                .iter_mut()
                .chain(rhs.q.iter_mut())
                .chain(rhs.p.iter_mut())
            {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        Ok((sys, rhs))
    }

    fn require_dt(&self) -> Result<f64> {
        self.dt_over_tc
            .ok_or_else(|| Error::Config("dt_over_tc is required for generated problems".into()))
    }
}

/// Outcome column of a summary row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CaseStatus {
    Solved(crate::krylov::SolveStatus),
    SetupFailure(String),
    SolveFailure(String),
}

impl std::fmt::Display for CaseStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CaseStatus::Solved(s) => write!(f, "{s}"),
            CaseStatus::SetupFailure(_) => f.write_str("setup-failure"),
            CaseStatus::SolveFailure(_) => f.write_str("solve-failure"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub problem: String,
    pub dt_over_tc: Option<f64>,
    pub alpha: f64,
    pub alpha_k: f64,
    pub alpha_a: f64,
    pub n_it: Option<usize>,
    pub t_p: f64,
    pub t_s: f64,
    pub t_t: f64,
    pub status: CaseStatus,
    /// What the preconditioner actually ran (see [`crate::RpfOperator::variant_label`]).
    pub variant: String,
    pub policy: InnerPolicy,
    pub n_in: usize,
    pub tol: f64,
    pub final_residual: f64,
}

impl SummaryRow {
    pub const HEADER: &'static str =
        "case,problem,dt_over_tc,alpha,alpha_K,alpha_A,alpha_over_alpha_K,alpha_over_alpha_A,\
n_it,T_p_wall_s,T_s_wall_s,T_t_wall_s,status,variant,policy,n_in,tol,final_residual,message";

    pub fn converged(&self) -> bool {
        self.status == CaseStatus::Solved(crate::krylov::SolveStatus::Converged)
    }

    fn csv_line(&self, index: usize) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let message = match &self.status {
            CaseStatus::SetupFailure(m) | CaseStatus::SolveFailure(m) => csv_quote(m),
            CaseStatus::Solved(_) => String::new(),
        };
        let policy = match self.policy {
            InnerPolicy::Direct => "direct",
            InnerPolicy::Ic => "ic",
        };
        format!(
            "{index},{},{},{:e},{:e},{:e},{:e},{:e},{},{:.6},{:.6},{:.6},{},{},{policy},{},{:e},{:e},{message}",
            csv_quote(&self.problem),
            opt(self.dt_over_tc),
            self.alpha,
            self.alpha_k,
            self.alpha_a,
            self.alpha / self.alpha_k,
            self.alpha / self.alpha_a,
            self.n_it.map(|n| n.to_string()).unwrap_or_default(),
            self.t_p,
            self.t_s,
            self.t_t,
            self.status,
            self.variant,
            self.n_in,
            self.tol,
            self.final_residual,
        )
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub case: BenchCase,
    pub row: SummaryRow,
    pub report: Option<SolveReport>,
    pub setup_report: Option<String>,
}

/// Runs one case; failures at any stage end up in the row's status.
pub fn run_case(case: &BenchCase) -> CaseResult {
    let mut row = SummaryRow {
        problem: case.problem.label(),
        dt_over_tc: case.dt_over_tc,
        alpha: f64::NAN,
        alpha_k: f64::NAN,
        alpha_a: f64::NAN,
        n_it: None,
        t_p: 0.0,
        t_s: 0.0,
        t_t: 0.0,
        status: CaseStatus::SetupFailure(String::new()),
        variant: String::new(),
        policy: case.policy,
        n_in: case.n_in,
        tol: case.tol,
        final_residual: f64::NAN,
    };
    let fail = |mut row: SummaryRow, e: Error| {
        log::warn!("{}: setup failed: {e}", row.problem);
        row.status = CaseStatus::SetupFailure(e.to_string());
        CaseResult {
            case: case.clone(),
            row,
            report: None,
            setup_report: None,
        }
    };
    if let Err(e) = case.validate() {
        return fail(row, e);
    }
    let (sys, rhs) = match case.build_system() {
        Ok(v) => v,
        Err(e) => return fail(row, e),
    };
    let op = match rpf_setup(&sys, &case.rpf_config()) {
        Ok(op) => op,
        Err(e) => return fail(row, e),
    };
    row.alpha = op.alpha();
    row.alpha_k = op.alpha_k();
    row.alpha_a = op.alpha_a();
    row.t_p = op.setup_time();
    row.variant = match case.variant {
        Variant::Auto => op.selected_variant().to_string(),
        _ => op.variant_label(),
    };
    let setup_report = Some(op.setup_report());

    let b = rhs.to_flat();
    let start = Instant::now();
    let solved = bicgstab(&sys, &op, &b, case.tol, case.max_it);
    row.t_s = start.elapsed().as_secs_f64();
    row.t_t = row.t_p + row.t_s;
    match solved {
        Ok((_, report)) => {
            let report = report.with_setup_time(row.t_p);
            row.t_s = report.solve_time;
            row.t_t = report.total_time;
            row.n_it = Some(report.iterations);
            row.final_residual = report.final_residual;
            row.status = CaseStatus::Solved(report.status);
            CaseResult {
                case: case.clone(),
                row,
                report: Some(report),
                setup_report,
            }
        }
        Err(e) => {
            row.status = CaseStatus::SolveFailure(e.to_string());
            CaseResult {
                case: case.clone(),
                row,
                report: None,
                setup_report,
            }
        }
    }
}

/// Runs the cases on up to `workers` threads; results keep the input order.
pub fn run_sweep(cases: &[BenchCase], workers: usize) -> Result<Vec<CaseResult>> {
    use rayon::prelude::*;
    if cases.is_empty() {
        return Err(Error::Config("sweep has no cases".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(|| cases.par_iter().map(run_case).collect()))
}

pub fn summary_csv(results: &[CaseResult]) -> String {
    let mut s = String::from(SummaryRow::HEADER);
    s.push('\n');
    for (i, r) in results.iter().enumerate() {
        let _ = writeln!(s, "{}", r.row.csv_line(i));
    }
    s
}

/// Writes `summary.csv`, `residuals/case-NNN.csv` and `setup/case-NNN.txt` under `dir`.
pub fn write_outputs(dir: &Path, results: &[CaseResult], residuals: bool) -> Result<()> {
    let mk = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mk(dir)?;
    let summary = dir.join("summary.csv");
    std::fs::write(&summary, summary_csv(results)).map_err(|e| Error::io(&summary, e))?;
    let (res_dir, setup_dir) = (dir.join("residuals"), dir.join("setup"));
    if residuals {
        mk(&res_dir)?;
    }
    mk(&setup_dir)?;
    for (i, r) in results.iter().enumerate() {
        if let (true, Some(rep)) = (residuals, &r.report) {
            rep.write_residual_csv(res_dir.join(format!("case-{i:03}.csv")))?;
        }
        let path = setup_dir.join(format!("case-{i:03}.txt"));
        let mut text = format!("problem = {}\n", r.row.problem);
        if let Some(d) = r.case.dt_over_tc {
            let _ = writeln!(text, "dt_over_tc = {d:e}");
        }
        match (&r.setup_report, &r.row.status) {
            (Some(rep), _) => text.push_str(rep),
            (None, status) => {
                let _ = writeln!(text, "status = {status}");
                if let CaseStatus::SetupFailure(m) = status {
                    let _ = writeln!(text, "error = {m}");
                }
            }
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// One or more values; a bare scalar counts as a single value.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

fn axis<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

fn default_tol() -> Vec<f64> {
    vec![DEFAULT_TOL]
}
fn default_max_it() -> usize {
    DEFAULT_MAX_IT
}
fn default_theta() -> f64 {
    1.0
}
fn default_variant() -> Vec<Variant> {
    vec![Variant::Auto]
}
fn default_policy() -> Vec<InnerPolicy> {
    vec![InnerPolicy::Direct]
}
fn default_n_in() -> Vec<usize> {
    vec![RpfConfig::default().n_in]
}
fn default_omega() -> f64 {
    RpfConfig::default().omega_k
}
fn default_true() -> bool {
    true
}

/// A sweep file. Cases are the product
/// problems × dt_over_tc × variant × policy × n_in × tol, in that nesting order.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub name: String,
    pub problems: Vec<ProblemSource>,
    #[serde(default, deserialize_with = "axis")]
    pub dt_over_tc: Vec<f64>,
    #[serde(default = "default_variant", deserialize_with = "axis")]
    pub variant: Vec<Variant>,
    #[serde(default = "default_policy", deserialize_with = "axis")]
    pub policy: Vec<InnerPolicy>,
    #[serde(default = "default_n_in", deserialize_with = "axis")]
    pub n_in: Vec<usize>,
    #[serde(default = "default_tol", deserialize_with = "axis")]
    pub tol: Vec<f64>,
    #[serde(default = "default_max_it")]
    pub max_it: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub rho_k: usize,
    #[serde(default)]
    pub rho_a: usize,
    #[serde(default)]
    pub rho_s: usize,
    #[serde(default = "default_omega")]
    pub omega_k: f64,
    #[serde(default = "default_omega")]
    pub omega_a: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub rhs: RhsKind,
    /// Write per-case residual histories.
    #[serde(default = "default_true")]
    pub residuals: bool,
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn validate(&self) -> Result<()> {
        let empty = |what: &str| {
            Err(Error::Config(format!(
                "`{what}` must list at least one value"
            )))
        };
        if self.problems.is_empty() {
            return empty("problems");
        }
        if self.tol.is_empty() {
            return empty("tol");
        }
        if self.variant.is_empty() {
            return empty("variant");
        }
        if self.policy.is_empty() {
            return empty("policy");
        }
        if self.n_in.is_empty() {
            return empty("n_in");
        }
        let generated = self
            .problems
            .iter()
            .any(|p| !matches!(p, ProblemSource::Files { .. }));
        if generated && self.dt_over_tc.is_empty() {
            return empty("dt_over_tc");
        }
        self.cases().iter().try_for_each(BenchCase::validate)
    }

    pub fn cases(&self) -> Vec<BenchCase> {
        let dts: Vec<Option<f64>> = if self.dt_over_tc.is_empty() {
            vec![None]
        } else {
            self.dt_over_tc.iter().map(|&d| Some(d)).collect()
        };
        let mut out = Vec::new();
        for problem in &self.problems {
            for &dt in &dts {
                for &variant in &self.variant {
                    for &policy in &self.policy {
                        for &n_in in &self.n_in {
                            for &tol in &self.tol {
                                out.push(BenchCase {
                                    problem: problem.clone(),
                                    dt_over_tc: dt,
                                    theta: self.theta,
                                    variant,
                                    policy,
                                    rho_k: self.rho_k,
                                    rho_a: self.rho_a,
                                    rho_s: self.rho_s,
                                    omega_k: self.omega_k,
                                    omega_a: self.omega_a,
                                    n_in,
                                    tol,
                                    max_it: self.max_it,
                                    seed: self.seed,
                                    rhs: self.rhs,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
