//! Command-line front end: problem ingestion, solver runs, algorithm
//! comparison, and invariant-check suites.
//!
//! Problems come from the generator registry (`--problem ncp_affine`) or from
//! a JSON file, which either names a registry entry
//! (`{"name": ..., "params": {...}, "seed": ...}`) or defines an affine
//! instance inline:
//!
//! ```json
//! {"composite": {"F": {"affine": {"M": [[2.0]], "c": [-4.0]}},
//!                "q": {"kind": "nonneg", "dim": 1}},
//!  "solution": [2.0]}
//! ```
//!
//! A polyhedral instance uses `"polyhedral"` with `F`, an optional affine
//! `G` (`{"affine": {"J": ..., "g0": ...}}`, identity when absent), and the
//! set `D` given by its inequality/equality rows.
//!
//! Exit codes: 0 converged (or compare/check passed), 1 input error,
//! 2 no convergence (or compare deviation exceeded), 3 structural failure
//! (singular system, ambiguous multiplier, degenerate basis).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::ge_composite::{self, CompositeAlgorithm, CompositeGe, CompositeError, GammaSchedule};
use crate::ge_polyhedral::{self, GeError, PolyAlgorithm, PolyhedralGe};
use crate::linalg;
use crate::newton::{ConvergenceReport, NewtonConfig, Termination};
use crate::polyhedral::PolyhedralSet;
use crate::problems::{self, ProblemParams};
use crate::prox::BouligandSelector;
use crate::tol;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NO_CONVERGENCE: i32 = 2;
pub const EXIT_STRUCTURAL: i32 = 3;

/// Relative iterate deviation two runs may show and still count as equal.
const COMPARE_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(
    name = "genewton",
    about = "Newton-type solvers for generalized equations",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver and write its convergence report.
    Solve(SolveArgs),
    /// Run two algorithms on the same problem and diff their iterates.
    Compare(CompareArgs),
    /// Run the invariant check suites for a problem.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    /// Polyhedral iteration on the stacked span-reduced system.
    Ssstar,
    /// Newton driver on the polyhedral residual.
    GsemiPoly,
    /// Composite coderivative iteration.
    Scd,
    /// Newton driver on the composite residual.
    GsemiComposite,
}

impl Algorithm {
    fn is_polyhedral(self) -> bool {
        matches!(self, Algorithm::Ssstar | Algorithm::GsemiPoly)
    }

    fn name(self) -> &'static str {
        match self {
            Algorithm::Ssstar => "ssstar",
            Algorithm::GsemiPoly => "gsemi-poly",
            Algorithm::Scd => "scd",
            Algorithm::GsemiComposite => "gsemi-composite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct ProblemArgs {
    /// Registry name or path to a problem JSON file.
    #[arg(long)]
    problem: String,
    /// Generator parameters as JSON (registry problems only).
    #[arg(long)]
    params: Option<String>,
    /// Generator seed (registry problems; default 0).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SolverArgs {
    /// Residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Constant proximal parameter (composite algorithms only).
    #[arg(long, conflicts_with = "gamma_cycle")]
    gamma: Option<f64>,
    /// Comma-separated cycle of proximal parameters.
    #[arg(long, value_delimiter = ',')]
    gamma_cycle: Option<Vec<f64>>,
    /// Start point: a JSON vector, or {"offset_norm": r, "seed": s} to sample
    /// at distance r from the known solution. Defaults to the origin.
    #[arg(long)]
    x0: Option<String>,
}

#[derive(Args)]
struct OutputArgs {
    /// Base path for report files (extension replaced per format).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format; both files are written when omitted.
    #[arg(long, value_enum, requires = "out")]
    format: Option<ReportFormat>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum)]
    algorithm: Algorithm,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Exactly two comma-separated algorithms from the same encoding family.
    #[arg(long, value_enum, value_delimiter = ',', num_args = 1..)]
    algorithms: Vec<Algorithm>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Path for the JSON check report.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Terminal error carrying its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn structural(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_STRUCTURAL,
            message: message.into(),
        }
    }
}

impl From<GeError> for CliError {
    fn from(e: GeError) -> Self {
        match &e {
            GeError::MultiplierAmbiguous { .. }
            | GeError::DegenerateBase
            | GeError::SingularSystem
            | GeError::Numerical(_) => CliError::structural(e.to_string()),
            GeError::QpInfeasible | GeError::Shape(_) | GeError::Set(_) => {
                CliError::input(e.to_string())
            }
        }
    }
}

impl From<CompositeError> for CliError {
    fn from(e: CompositeError) -> Self {
        match &e {
            CompositeError::SingularSystem | CompositeError::Numerical(_) => {
                CliError::structural(e.to_string())
            }
            CompositeError::Prox(_)
            | CompositeError::BadSchedule(_)
            | CompositeError::Shape(_) => CliError::input(e.to_string()),
        }
    }
}

impl From<problems::ProblemError> for CliError {
    fn from(e: problems::ProblemError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        // serde_json errors carry line/column positions
        CliError::input(e.to_string())
    }
}

/// Parses args from the process environment and runs; returns the exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::Check(args) => cmd_check(&args),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {}", e.message);
        e.code
    })
}

// ---------------------------------------------------------------------------
// problem loading

struct Loaded {
    label: String,
    polyhedral: Option<PolyhedralGe>,
    composite: Option<CompositeGe>,
    solution: Option<DVector<f64>>,
}

impl Loaded {
    fn dim(&self) -> usize {
        self.polyhedral
            .as_ref()
            .map(|p| p.dim())
            .or_else(|| self.composite.as_ref().map(|c| c.dim()))
            .expect("loaded problem always has an encoding")
    }

    fn require_polyhedral(&self) -> Result<&PolyhedralGe, CliError> {
        self.polyhedral
            .as_ref()
            .ok_or_else(|| CliError::input("problem has no polyhedral encoding"))
    }

    fn require_composite(&self) -> Result<&CompositeGe, CliError> {
        self.composite
            .as_ref()
            .ok_or_else(|| CliError::input("problem has no composite encoding"))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    name: Option<String>,
    params: Option<ProblemParams>,
    seed: Option<u64>,
    polyhedral: Option<PolyhedralData>,
    composite: Option<CompositeData>,
    solution: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompositeData {
    #[serde(rename = "F")]
    f: SmoothMapData,
    q: crate::prox::ProxFunction,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyhedralData {
    #[serde(rename = "F")]
    f: SmoothMapData,
    #[serde(rename = "G")]
    g: Option<AffineGData>,
    #[serde(rename = "D")]
    d: SetData,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SmoothMapData {
    affine: AffineFData,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineFData {
    #[serde(rename = "M")]
    m: Vec<Vec<f64>>,
    c: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineGData {
    affine: AffineGInner,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineGInner {
    #[serde(rename = "J")]
    j: Vec<Vec<f64>>,
    g0: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetData {
    dim: usize,
    #[serde(default)]
    ineq_matrix: Vec<Vec<f64>>,
    #[serde(default)]
    ineq_rhs: Vec<f64>,
    #[serde(default)]
    eq_matrix: Vec<Vec<f64>>,
    #[serde(default)]
    eq_rhs: Vec<f64>,
}

fn matrix_from_rows(rows: &[Vec<f64>], ncols_hint: usize) -> Result<DMatrix<f64>, CliError> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, ncols_hint));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::input("matrix rows have unequal lengths"));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flat_map(|r| r.iter().copied()),
    ))
}

fn affine_f(data: &AffineFData) -> Result<(DMatrix<f64>, DVector<f64>), CliError> {
    let c = DVector::from_vec(data.c.clone());
    let m = matrix_from_rows(&data.m, c.len())?;
    if m.nrows() != c.len() || m.ncols() != c.len() {
        return Err(CliError::input(format!(
            "affine map needs a square {0}x{0} matrix to match c",
            c.len()
        )));
    }
    Ok((m, c))
}

fn load_problem(args: &ProblemArgs) -> Result<Loaded, CliError> {
    if problems::registry().contains(&args.problem.as_str()) {
        let params: ProblemParams = match &args.params {
            Some(s) => serde_json::from_str(s)?,
            None => ProblemParams::default(),
        };
        let seed = args.seed.unwrap_or(0);
        let made = problems::make(&args.problem, &params, seed)?;
        return Ok(Loaded {
            label: format!("{}(seed={})", args.problem, seed),
            solution: Some(made.solution()),
            polyhedral: made.polyhedral,
            composite: made.composite,
        });
    }
    let path = std::path::Path::new(&args.problem);
    if !path.exists() {
        return Err(CliError::input(format!(
            "{:?} is neither a registry name ({}) nor an existing file",
            args.problem,
            problems::registry().join(", ")
        )));
    }
    let text = fs::read_to_string(path)?;
    let file: ProblemFile = serde_json::from_str(&text)?;

    if let Some(name) = &file.name {
        if file.polyhedral.is_some() || file.composite.is_some() {
            return Err(CliError::input(
                "problem file may not mix a registry name with inline data",
            ));
        }
        if args.params.is_some() {
            return Err(CliError::input(
                "--params conflicts with a problem file; set params in the file",
            ));
        }
        let params = file.params.unwrap_or_default();
        let seed = args.seed.or(file.seed).unwrap_or(0);
        let made = problems::make(name, &params, seed)?;
        return Ok(Loaded {
            label: format!("{name}(seed={seed})"),
            solution: Some(made.solution()),
            polyhedral: made.polyhedral,
            composite: made.composite,
        });
    }

    let solution = file.solution.map(DVector::from_vec);
    match (file.polyhedral, file.composite) {
        (None, Some(data)) => {
            let (m, c) = affine_f(&data.f.affine)?;
            if data.q.dim() != c.len() {
                return Err(CliError::input(format!(
                    "q has dimension {}, F has dimension {}",
                    data.q.dim(),
                    c.len()
                )));
            }
            check_solution_len(&solution, c.len())?;
            Ok(Loaded {
                label: args.problem.clone(),
                polyhedral: None,
                composite: Some(CompositeGe::affine(m, c, data.q)),
                solution,
            })
        }
        (Some(data), None) => {
            let (m, c) = affine_f(&data.f.affine)?;
            let n = c.len();
            let set = PolyhedralSet::new(
                data.d.dim,
                matrix_from_rows(&data.d.ineq_matrix, data.d.dim)?,
                DVector::from_vec(data.d.ineq_rhs.clone()),
                matrix_from_rows(&data.d.eq_matrix, data.d.dim)?,
                DVector::from_vec(data.d.eq_rhs.clone()),
            )
            .map_err(|e| CliError::input(e.to_string()))?;
            check_solution_len(&solution, n)?;
            let prob = match &data.g {
                None => {
                    if set.dim() != n {
                        return Err(CliError::input(format!(
                            "identity G needs D of dimension {n}, got {}",
                            set.dim()
                        )));
                    }
                    let jac = m.clone();
                    PolyhedralGe::with_identity_g(
                        set,
                        move |x| &m * x + &c,
                        move |_| jac.clone(),
                    )
                }
                Some(g) => {
                    let j = matrix_from_rows(&g.affine.j, n)?;
                    let g0 = match &g.affine.g0 {
                        Some(v) => DVector::from_vec(v.clone()),
                        None => DVector::zeros(j.nrows()),
                    };
                    if j.ncols() != n || j.nrows() != set.dim() || g0.len() != set.dim() {
                        return Err(CliError::input(
                            "G must map the problem space into the space of D",
                        ));
                    }
                    let s = set.dim();
                    let jac_f = m.clone();
                    let (j_g, j_jac) = (j.clone(), j);
                    PolyhedralGe::new(
                        n,
                        set,
                        move |x| &m * x + &c,
                        move |_| jac_f.clone(),
                        move |x| &j_g * x + &g0,
                        move |_| j_jac.clone(),
                        move |_, _| DMatrix::zeros(n, n),
                        move |_, _| DMatrix::zeros(s, n),
                    )
                }
            };
            Ok(Loaded {
                label: args.problem.clone(),
                polyhedral: Some(prob),
                composite: None,
                solution,
            })
        }
        (None, None) => Err(CliError::input(
            "problem file needs \"name\", \"polyhedral\", or \"composite\"",
        )),
        (Some(_), Some(_)) => Err(CliError::input(
            "problem file may define only one inline encoding",
        )),
    }
}

fn check_solution_len(solution: &Option<DVector<f64>>, n: usize) -> Result<(), CliError> {
    if let Some(s) = solution {
        if s.len() != n {
            return Err(CliError::input(format!(
                "solution has length {}, problem has dimension {n}",
                s.len()
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// run configuration

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OffsetSpec {
    offset_norm: f64,
    #[serde(default)]
    seed: u64,
}

fn resolve_x0(
    spec: &Option<String>,
    dim: usize,
    solution: Option<&DVector<f64>>,
) -> Result<DVector<f64>, CliError> {
    let Some(text) = spec else {
        return Ok(DVector::zeros(dim));
    };
    let value: serde_json::Value = serde_json::from_str(text)?;
    if value.is_array() {
        let v: Vec<f64> = serde_json::from_value(value)?;
        if v.len() != dim {
            return Err(CliError::input(format!(
                "x0 has length {}, problem has dimension {dim}",
                v.len()
            )));
        }
        return Ok(DVector::from_vec(v));
    }
    let off: OffsetSpec = serde_json::from_value(value)?;
    if off.offset_norm < 0.0 || !off.offset_norm.is_finite() {
        return Err(CliError::input("offset_norm must be nonnegative and finite"));
    }
    let xbar = solution.ok_or_else(|| {
        CliError::input("offset-form x0 needs a problem with a known solution")
    })?;
    Ok(xbar + off.offset_norm * unit_direction(dim, off.seed))
}

fn unit_direction(dim: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn newton_config(args: &SolverArgs) -> Result<NewtonConfig, CliError> {
    let mut config = NewtonConfig::default();
    if let Some(tol) = args.tol {
        config.tol_residual = tol;
    }
    if let Some(mi) = args.max_iter {
        config.max_iter = mi;
    }
    config
        .validate()
        .map_err(|e| CliError::input(e.to_string()))?;
    Ok(config)
}

fn gamma_schedule(args: &SolverArgs) -> Result<Option<GammaSchedule>, CliError> {
    if let Some(g) = args.gamma {
        return Ok(Some(GammaSchedule::constant(g)?));
    }
    if let Some(cycle) = &args.gamma_cycle {
        return Ok(Some(GammaSchedule::cycle(cycle.clone())?));
    }
    Ok(None)
}

fn run_one(
    algorithm: Algorithm,
    loaded: &Loaded,
    x0: &DVector<f64>,
    config: &NewtonConfig,
    schedule: Option<&GammaSchedule>,
) -> Result<(ConvergenceReport, Option<GammaSchedule>), CliError> {
    let reference = loaded.solution.as_ref();
    if algorithm.is_polyhedral() {
        if schedule.is_some() {
            return Err(CliError::input(
                "gamma applies to composite algorithms only",
            ));
        }
        let alg = match algorithm {
            Algorithm::Ssstar => PolyAlgorithm::Ssstar,
            _ => PolyAlgorithm::Gsemi,
        };
        let report =
            ge_polyhedral::solve(loaded.require_polyhedral()?, x0, alg, config, reference)?;
        Ok((report, None))
    } else {
        let alg = match algorithm {
            Algorithm::Scd => CompositeAlgorithm::Scd,
            _ => CompositeAlgorithm::Gsemi,
        };
        let schedule = schedule.cloned().unwrap_or_default();
        let report = ge_composite::solve(
            loaded.require_composite()?,
            x0,
            alg,
            &schedule,
            BouligandSelector::Lower,
            config,
            reference,
        )?;
        Ok((report, Some(schedule)))
    }
}

fn exit_for_termination(t: Termination) -> i32 {
    match t {
        Termination::ResidualMet => EXIT_OK,
        Termination::MaxIter | Termination::Diverged => EXIT_NO_CONVERGENCE,
        Termination::SingularSystem => EXIT_STRUCTURAL,
    }
}

// ---------------------------------------------------------------------------
// output

fn float_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

fn report_row(report: &ConvergenceReport, k: usize) -> (String, String, String) {
    let rn = float_cell(report.residual_norms.get(k).copied());
    let err = float_cell(report.errors.get(k).copied());
    let ratio = if k >= 1 {
        float_cell(report.ratios.get(k - 1).copied())
    } else {
        String::new()
    };
    (rn, err, ratio)
}

fn print_iteration_table(report: &ConvergenceReport, schedule: Option<&GammaSchedule>) {
    println!(
        "{:>4}  {:<24}  {:<24}  {:<24}  {:<10}",
        "k", "residual_norm", "error", "ratio", "gamma"
    );
    for k in 0..report.iterates.len() {
        let (rn, err, ratio) = report_row(report, k);
        let gamma = schedule.map(|s| s.at(k).to_string()).unwrap_or_default();
        println!("{k:>4}  {rn:<24}  {err:<24}  {ratio:<24}  {gamma:<10}");
    }
}

/// Per-iterate CSV with the fixed columns k, residual_norm, error, ratio,
/// gamma, algorithm.
fn cli_csv(
    report: &ConvergenceReport,
    schedule: Option<&GammaSchedule>,
    algorithm: &str,
) -> String {
    let mut out = String::from("k,residual_norm,error,ratio,gamma,algorithm\n");
    for k in 0..report.iterates.len() {
        let (rn, err, ratio) = report_row(report, k);
        let gamma = schedule.map(|s| format!("{:.17e}", s.at(k))).unwrap_or_default();
        let _ = writeln!(out, "{k},{rn},{err},{ratio},{gamma},{algorithm}");
    }
    out
}

fn write_outputs(
    output: &OutputArgs,
    json: &str,
    csv: Option<&str>,
) -> Result<(), CliError> {
    let Some(path) = &output.out else {
        return Ok(());
    };
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("csv") => path.with_extension(""),
        _ => path.clone(),
    };
    let want_json = output.format != Some(ReportFormat::Csv);
    let want_csv = output.format != Some(ReportFormat::Json);
    if want_json {
        fs::write(base.with_extension("json"), json)?;
    }
    if want_csv {
        if let Some(csv) = csv {
            fs::write(base.with_extension("csv"), csv)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// subcommands

fn cmd_solve(args: &SolveArgs) -> Result<i32, CliError> {
    let loaded = load_problem(&args.problem)?;
    let config = newton_config(&args.solver)?;
    let schedule = gamma_schedule(&args.solver)?;
    let x0 = resolve_x0(&args.solver.x0, loaded.dim(), loaded.solution.as_ref())?;

    let (report, schedule) = run_one(args.algorithm, &loaded, &x0, &config, schedule.as_ref())?;

    print_iteration_table(&report, schedule.as_ref());
    println!(
        "{} on {}: {} after {} steps, final residual {:.3e}",
        args.algorithm.name(),
        loaded.label,
        report.termination,
        report.iterates.len() - 1,
        report.residual_norms.last().copied().unwrap_or(f64::NAN),
    );

    let json = serde_json::to_string_pretty(&report)?;
    let csv = cli_csv(&report, schedule.as_ref(), args.algorithm.name());
    write_outputs(&args.output, &json, Some(&csv))?;
    Ok(exit_for_termination(report.termination))
}

#[derive(Serialize)]
struct CompareReport {
    problem: String,
    algorithms: [String; 2],
    terminations: [Termination; 2],
    iterate_counts: [usize; 2],
    /// Relative deviation ||xa - xb|| / (1 + max(||xa||, ||xb||)) per k.
    deviations: Vec<f64>,
    max_relative_deviation: f64,
    threshold: f64,
    pass: bool,
}

fn relative_deviation(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / (1.0 + a.norm().max(b.norm()))
}

fn cmd_compare(args: &CompareArgs) -> Result<i32, CliError> {
    if args.algorithms.len() != 2 {
        return Err(CliError::input(format!(
            "compare needs exactly two algorithms, got {}",
            args.algorithms.len()
        )));
    }
    let (alg_a, alg_b) = (args.algorithms[0], args.algorithms[1]);
    if alg_a.is_polyhedral() != alg_b.is_polyhedral() {
        return Err(CliError::input(
            "algorithms from mismatched encodings cannot be compared",
        ));
    }
    let loaded = load_problem(&args.problem)?;
    let config = newton_config(&args.solver)?;
    let schedule = gamma_schedule(&args.solver)?;
    let x0 = resolve_x0(&args.solver.x0, loaded.dim(), loaded.solution.as_ref())?;

    // sequential runs with identical start, configuration, schedule, and
    // derivative selector; every ingredient is deterministic, so both see
    // the same approximation-step outputs at the same iterate
    let (report_a, _) = run_one(alg_a, &loaded, &x0, &config, schedule.as_ref())?;
    let (report_b, _) = run_one(alg_b, &loaded, &x0, &config, schedule.as_ref())?;

    let common = report_a.iterates.len().min(report_b.iterates.len());
    let deviations: Vec<f64> = (0..common)
        .map(|k| relative_deviation(&report_a.iterates[k], &report_b.iterates[k]))
        .collect();
    let max_dev = deviations.iter().cloned().fold(0.0, f64::max);
    let pass = report_a.iterates.len() == report_b.iterates.len()
        && report_a.termination == report_b.termination
        && max_dev <= COMPARE_TOL;

    let compare = CompareReport {
        problem: loaded.label.clone(),
        algorithms: [alg_a.name().to_string(), alg_b.name().to_string()],
        terminations: [report_a.termination, report_b.termination],
        iterate_counts: [report_a.iterates.len(), report_b.iterates.len()],
        deviations,
        max_relative_deviation: max_dev,
        threshold: COMPARE_TOL,
        pass,
    };

    println!(
        "{} vs {} on {}: {} and {} in {} / {} steps",
        alg_a.name(),
        alg_b.name(),
        loaded.label,
        report_a.termination,
        report_b.termination,
        report_a.iterates.len() - 1,
        report_b.iterates.len() - 1,
    );
    println!(
        "max relative iterate deviation {max_dev:.3e} (threshold {COMPARE_TOL:.0e}): {}",
        if pass { "PASS" } else { "FAIL" }
    );

    let json = serde_json::to_string_pretty(&compare)?;
    let mut csv = String::from("k,deviation\n");
    for (k, d) in compare.deviations.iter().enumerate() {
        let _ = writeln!(csv, "{k},{d:.17e}");
    }
    write_outputs(&args.output, &json, Some(&csv))?;
    Ok(if pass { EXIT_OK } else { EXIT_NO_CONVERGENCE })
}

#[derive(Serialize)]
struct CheckOutcome {
    name: String,
    passed: bool,
    details: String,
}

#[derive(Serialize)]
struct Finding {
    check: String,
    message: String,
}

#[derive(Serialize)]
struct CheckReport {
    problem: String,
    checks: Vec<CheckOutcome>,
    findings: Vec<Finding>,
    passed: bool,
}

fn cmd_check(args: &CheckArgs) -> Result<i32, CliError> {
    let loaded = load_problem(&args.problem)?;
    let mut checks = Vec::new();
    let mut findings = Vec::new();
    let seed = args.problem.seed.unwrap_or(0);

    checks.push(check_construction(&loaded));
    if loaded.polyhedral.is_some() {
        checks.push(check_projection_kkt(&loaded, seed));
        checks.push(check_projection_derivatives(&loaded, seed));
        let (outcome, finding) = check_nondegeneracy(&loaded);
        checks.push(outcome);
        findings.extend(finding);
    }
    if loaded.composite.is_some() {
        checks.push(check_prox_properties(&loaded, seed));
        let (outcome, finding) = check_regularity(&loaded);
        checks.push(outcome);
        findings.extend(finding);
    }

    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        println!(
            "check {}: {} ({})",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.details
        );
    }
    for f in &findings {
        println!("finding [{}]: {}", f.check, f.message);
    }
    println!(
        "{}: {} of {} checks passed, {} finding(s)",
        loaded.label,
        checks.iter().filter(|c| c.passed).count(),
        checks.len(),
        findings.len()
    );

    let report = CheckReport {
        problem: loaded.label.clone(),
        checks,
        findings,
        passed,
    };
    if let Some(path) = &args.out {
        fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(if passed { EXIT_OK } else { EXIT_INPUT })
}

// ---------------------------------------------------------------------------
// check suites

fn check_construction(loaded: &Loaded) -> CheckOutcome {
    let name = "construction".to_string();
    let Some(xbar) = &loaded.solution else {
        return CheckOutcome {
            name,
            passed: true,
            details: "no known solution to verify".into(),
        };
    };
    let mut notes = Vec::new();
    let mut passed = true;
    if let Some(prob) = &loaded.polyhedral {
        match ge_polyhedral::approximation_step(prob, xbar) {
            Ok(step) => {
                let rn = step.u_hat.norm();
                if rn <= tol::KNOWN_SOLUTION_TOL {
                    notes.push(format!("polyhedral residual {rn:.2e}"));
                } else {
                    passed = false;
                    notes.push(format!("polyhedral residual {rn:.2e} too large"));
                }
            }
            Err(GeError::MultiplierAmbiguous { .. }) => {
                // multipliers cannot certify the solution; fall back to
                // feasibility of the constraint image
                let viol = prob.set().violation(&prob.g(xbar));
                if viol <= tol::FEAS_TOL {
                    notes.push("solution feasible; multiplier ambiguous".into());
                } else {
                    passed = false;
                    notes.push(format!("constraint violation {viol:.2e}"));
                }
            }
            Err(e) => {
                passed = false;
                notes.push(format!("approximation step failed: {e}"));
            }
        }
    }
    if let Some(prob) = &loaded.composite {
        let rn = ge_composite::residual(prob, 1.0, xbar).norm();
        if rn <= tol::KNOWN_SOLUTION_TOL {
            notes.push(format!("composite residual {rn:.2e}"));
        } else {
            passed = false;
            notes.push(format!("composite residual {rn:.2e} too large"));
        }
    }
    CheckOutcome {
        name,
        passed,
        details: notes.join("; "),
    }
}

fn check_projection_kkt(loaded: &Loaded, seed: u64) -> CheckOutcome {
    let name = "projection_kkt".to_string();
    let set = loaded.polyhedral.as_ref().unwrap().set();
    let s = set.dim();
    let m = set.ineq_matrix().nrows();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for trial in 0..20 {
        let y = DVector::from_fn(s, |_, _| rng.gen_range(-3.0..3.0));
        let proj = match set.project(&y) {
            Ok(p) => p,
            Err(e) => {
                failures.push(format!("trial {trial}: projection failed: {e}"));
                break;
            }
        };
        let scale = 1.0 + y.norm();
        let mu = proj.multiplier.rows(0, m).into_owned();
        let nu = proj.multiplier.rows(m, proj.multiplier.len() - m).into_owned();
        let stationarity = (&proj.point - &y
            + set.ineq_matrix().transpose() * &mu
            + set.eq_matrix().transpose() * &nu)
            .norm();
        let slack = set.ineq_matrix() * &proj.point - set.ineq_rhs();
        let comp = (0..m)
            .map(|i| (mu[i] * slack[i]).abs())
            .fold(0.0, f64::max);
        let mu_min = if m > 0 { mu.min() } else { 0.0 };
        if set.violation(&proj.point) > tol::FEAS_TOL {
            failures.push(format!("trial {trial}: infeasible projection"));
        } else if mu_min < -tol::MULT_TOL {
            failures.push(format!("trial {trial}: negative multiplier"));
        } else if stationarity > 1e-8 * scale {
            failures.push(format!("trial {trial}: stationarity {stationarity:.2e}"));
        } else if comp > 1e-8 * scale {
            failures.push(format!("trial {trial}: complementarity {comp:.2e}"));
        }
    }
    CheckOutcome {
        name,
        passed: failures.is_empty(),
        details: if failures.is_empty() {
            "20 random projections satisfy their optimality systems".into()
        } else {
            failures.join("; ")
        },
    }
}

fn check_projection_derivatives(loaded: &Loaded, seed: u64) -> CheckOutcome {
    let name = "projection_derivatives".to_string();
    let set = loaded.polyhedral.as_ref().unwrap().set();
    let s = set.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let mut tested = 0usize;
    let mut failures = Vec::new();
    for trial in 0..6 {
        let mu = DVector::from_fn(s, |_, _| rng.gen_range(-2.0..2.0));
        let elements = match set.bouligand_projection_elements(&mu) {
            Ok(e) => e,
            Err(e) => {
                failures.push(format!("trial {trial}: enumeration failed: {e}"));
                break;
            }
        };
        if elements.len() != 1 {
            // kinked base point: the finite difference would straddle
            // linearity regions
            continue;
        }
        let fd = linalg::fd_jacobian(
            |z| set.project(z).map(|p| p.point).unwrap_or_else(|_| z.clone()),
            &mu,
            1e-6,
        );
        let err = (&fd - &elements[0]).amax();
        if err > 1e-6 {
            failures.push(format!("trial {trial}: derivative mismatch {err:.2e}"));
        }
        tested += 1;
    }
    CheckOutcome {
        name,
        passed: failures.is_empty(),
        details: if failures.is_empty() {
            format!("finite differences match at {tested} differentiable points")
        } else {
            failures.join("; ")
        },
    }
}

fn check_nondegeneracy(loaded: &Loaded) -> (CheckOutcome, Option<Finding>) {
    let name = "nondegeneracy".to_string();
    let prob = loaded.polyhedral.as_ref().unwrap();
    let Some(xbar) = &loaded.solution else {
        return (
            CheckOutcome {
                name,
                passed: true,
                details: "no known solution; modulus not evaluated".into(),
            },
            None,
        );
    };
    match ge_polyhedral::nondegeneracy_modulus(prob, xbar, &prob.g(xbar)) {
        Ok(modulus) => {
            let degenerate = modulus <= tol::MODULUS_ZERO_TOL;
            let finding = degenerate.then(|| Finding {
                check: name.clone(),
                message: format!(
                    "nondegeneracy modulus {modulus:.2e} at the solution; \
                     multipliers are ambiguous and dual-based certificates \
                     are unreliable"
                ),
            });
            (
                CheckOutcome {
                    name,
                    passed: true,
                    details: format!("modulus {modulus:.6e}"),
                },
                finding,
            )
        }
        Err(e) => (
            CheckOutcome {
                name,
                passed: false,
                details: format!("modulus evaluation failed: {e}"),
            },
            None,
        ),
    }
}

fn check_prox_properties(loaded: &Loaded, seed: u64) -> CheckOutcome {
    let name = "prox_properties".to_string();
    let prob = loaded.composite.as_ref().unwrap();
    let q = prob.q();
    let n = prob.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x9e3779b9);
    let mut failures = Vec::new();
    for trial in 0..50 {
        let a = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let step = rng.gen_range(0.25..4.0);
        let pa = q.prox(step, &a);
        let pb = q.prox(step, &b);
        let gap = (&pa - &pb).norm_squared() - (&pa - &pb).dot(&(&a - &b));
        if gap > 1e-10 * (1.0 + a.norm() + b.norm()) {
            failures.push(format!("trial {trial}: firm nonexpansiveness gap {gap:.2e}"));
        }
    }
    if let Some(xbar) = &loaded.solution {
        for trial in 0..50 {
            let x = xbar + DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let gamma = rng.gen_range(0.25..4.0);
            let gap = ge_composite::prox_residual_gap(prob, gamma, &x, xbar);
            if gap > 1e-12 * (1.0 + x.norm_squared()) {
                failures.push(format!("trial {trial}: residual bound gap {gap:.2e}"));
            }
        }
    }
    CheckOutcome {
        name,
        passed: failures.is_empty(),
        details: if failures.is_empty() {
            "firm nonexpansiveness and the residual distance bound hold on all samples".into()
        } else {
            failures.join("; ")
        },
    }
}

fn check_regularity(loaded: &Loaded) -> (CheckOutcome, Option<Finding>) {
    let name = "regularity".to_string();
    let prob = loaded.composite.as_ref().unwrap();
    let point = loaded
        .solution
        .clone()
        .unwrap_or_else(|| DVector::zeros(prob.dim()));
    match ge_composite::regularity_enumerate(prob, 1.0, &point) {
        Ok((all_nonsingular, witnesses)) => {
            let finding = (!all_nonsingular).then(|| Finding {
                check: name.clone(),
                message: format!(
                    "{} singular derivative element(s) at the reference point; \
                     Newton steps may fail there",
                    witnesses.len()
                ),
            });
            (
                CheckOutcome {
                    name,
                    passed: true,
                    details: if all_nonsingular {
                        "every enumerated derivative element is nonsingular".into()
                    } else {
                        format!("{} singular element(s) found", witnesses.len())
                    },
                },
                finding,
            )
        }
        Err(CompositeError::Prox(e)) => (
            CheckOutcome {
                name,
                passed: true,
                details: format!("skipped: {e}"),
            },
            None,
        ),
        Err(e) => (
            CheckOutcome {
                name,
                passed: false,
                details: format!("enumeration failed: {e}"),
            },
            None,
        ),
    }
}
