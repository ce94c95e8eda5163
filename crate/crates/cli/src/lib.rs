//! `reso` command-line front end.
//!
//! [`run`] does all the work and returns the exit code with the text meant
//! for stdout and stderr, so tests can drive the CLI in-process.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use reso_core::bergman::{
    gram_block, quasi_resonance_report, representers, BergmanError, GramOptions, QuasiOptions, QuasiResonanceReport,
    Representer, ZeroPolicy,
};
use reso_core::domains::{DomainError, DomainSpec, SampleSet, SamplingConfig, DEFAULT_BATCHES, DEFAULT_POINTS, DEFAULT_SEED, DOMAIN_GRAMMAR};
use reso_core::examples::{rotation_map, symmetric_reflection_map, zapalowski_map, ExampleError};
use reso_core::poly::PolyMap;
use reso_core::verify::{
    overall_status, run_suite, Check, NoiseBand, OrthogonalityOptions, Status, SuiteInput, SuiteOptions,
    VerificationReport, VerifyError,
};
use reso_core::weights::{normalize_weight, resonance_report, ResonanceReport, Weight, WeightError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Description of the polynomial map file format, shown on map errors.
pub const MAP_FORMAT: &str = "\
map files are JSON:
  {\"dim\": n, \"components\": [[{\"alpha\": [a1,..,an], \"re\": x, \"im\": y}, ...], ...]}
one term list per component, exactly n components";

#[derive(Parser, Debug)]
#[command(name = "reso", version, about = "Resonance and quasi-resonance orders of quasi-circular domains")]
struct Cli {
    /// Worker threads (default: all cores). Does not affect results.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct SamplingArgs {
    /// Accepted Monte-Carlo points.
    #[arg(long, default_value_t = DEFAULT_POINTS)]
    samples: usize,

    #[arg(long, default_value_t = DEFAULT_BATCHES)]
    batches: usize,

    #[arg(long, env = "RESO_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
}

impl SamplingArgs {
    fn config(&self) -> SamplingConfig {
        SamplingConfig {
            points: self.samples,
            batches: self.batches,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Resonance sets and orders of a weight.
    Weights {
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        weights: Vec<i64>,

        /// Write the JSON report here and print a table instead.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Quasi-resonance orders by Monte-Carlo Bergman projection.
    Quasi {
        #[arg(long)]
        domain: String,

        /// Defaults to the domain's own weight; must be sorted.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        weights: Option<Vec<i64>>,

        #[command(flatten)]
        sampling: SamplingArgs,

        /// Independent samples for every weighted level.
        #[arg(long)]
        fresh_per_block: bool,

        /// Certified-zero threshold in standard errors.
        #[arg(long, default_value_t = ZeroPolicy::default().zero_sigma)]
        zero_sigma: f64,

        /// Certified-nonzero threshold in standard errors.
        #[arg(long, default_value_t = ZeroPolicy::default().nonzero_sigma)]
        nonzero_sigma: f64,

        #[arg(long, default_value_t = GramOptions::default().max_condition)]
        max_condition: f64,

        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Gram block and representers of one weighted level.
    Gram {
        #[arg(long)]
        domain: String,

        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        weights: Option<Vec<i64>>,

        /// Weighted degree m.alpha of the block.
        #[arg(long)]
        level: u64,

        #[command(flatten)]
        sampling: SamplingArgs,

        #[arg(long, default_value_t = GramOptions::default().max_condition)]
        max_condition: f64,

        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run verification checks on a candidate automorphism.
    Verify {
        #[arg(long)]
        map: PathBuf,

        /// Inverse map; triangular maps are inverted automatically.
        #[arg(long)]
        inverse: Option<PathBuf>,

        #[arg(long)]
        domain: String,

        /// Target domain for maps between two domains sharing a weight.
        #[arg(long)]
        target: Option<String>,

        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        weights: Option<Vec<i64>>,

        #[arg(long, value_enum, value_delimiter = ',', default_value = "all")]
        suite: Vec<SuiteArg>,

        #[command(flatten)]
        sampling: SamplingArgs,

        /// Skip the quasi-resonance computation; degree bounds then use
        /// mu_i <= nu_i <= mu_i m_n / m_1.
        #[arg(long)]
        no_quasi: bool,

        /// Boundary band excluded from membership checks, in level units.
        #[arg(long, default_value_t = SuiteOptions::default().membership_margin)]
        margin: f64,

        /// Largest weighted degree in the orthogonality check.
        #[arg(long, default_value_t = OrthogonalityOptions::default().max_weighted_degree)]
        max_weighted_degree: u64,

        #[arg(long, default_value_t = SuiteOptions::default().adjoint_pairs)]
        adjoint_pairs: usize,

        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write an example map as JSON.
    Example {
        #[command(subcommand)]
        kind: ExampleKind,
    },
}

#[derive(Subcommand, Debug)]
enum ExampleKind {
    /// Proposed origin-fixing map of the symmetrized ellipsoid.
    Zapalowski {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reflection-induced automorphism of the symmetrized ellipsoid with q = 1.
    Reflection {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weighted rotation z_j -> e^{i m_j theta} z_j.
    Rotation {
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        weights: Vec<i64>,
        #[arg(long, allow_negative_numbers = true)]
        theta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SuiteArg {
    All,
    Origin,
    Membership,
    Jacobian,
    Adjoint,
    Orthogonality,
    Degree,
    Linearity,
}

fn suite_checks(args: &[SuiteArg]) -> Vec<Check> {
    let mut out = Vec::new();
    for a in args {
        match a {
            SuiteArg::All => out.extend(Check::ALL),
            SuiteArg::Origin => out.push(Check::Origin),
            SuiteArg::Membership => out.push(Check::Membership),
            SuiteArg::Jacobian => out.push(Check::Jacobian),
            SuiteArg::Adjoint => out.push(Check::Adjoint),
            SuiteArg::Orthogonality => out.push(Check::Orthogonality),
            SuiteArg::Degree => out.push(Check::Degree),
            SuiteArg::Linearity => out.push(Check::Linearity),
        }
    }
    out.sort();
    out.dedup();
    out
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<WeightError> for CliError {
    fn from(e: WeightError) -> Self {
        CliError::Usage(format!("invalid weight: {e}"))
    }
}

impl From<DomainError> for CliError {
    fn from(e: DomainError) -> Self {
        match e {
            DomainError::LowAcceptance { .. } | DomainError::RootSolveFailed(_) => CliError::Numerical(e.to_string()),
            DomainError::InvalidSpec(_) => CliError::Usage(format!("{e}\n\n{DOMAIN_GRAMMAR}")),
            DomainError::Weight(w) => w.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<BergmanError> for CliError {
    fn from(e: BergmanError) -> Self {
        match e {
            BergmanError::Domain(d) => d.into(),
            BergmanError::Weight(w) => w.into(),
            BergmanError::DimensionMismatch { .. } | BergmanError::EmptyLevel { .. } | BergmanError::NotInBlock { .. } => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Domain(d) => d.into(),
            VerifyError::Bergman(b) => b.into(),
            VerifyError::Weight(w) => w.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<ExampleError> for CliError {
    fn from(e: ExampleError) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Result of one CLI invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome {
                    code: EXIT_USAGE,
                    stdout: String::new(),
                    stderr: format!("{text}\n{DOMAIN_GRAMMAR}\n\n{MAP_FORMAT}\n"),
                }
            } else {
                Outcome {
                    code: EXIT_OK,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    let result = match cli.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(CliError::Usage(format!("cannot build thread pool: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok((code, stdout)) => Outcome {
            code,
            stdout,
            stderr: String::new(),
        },
        Err(e) => Outcome {
            code: e.code(),
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
        },
    }
}

fn dispatch(command: Command) -> Result<(i32, String), CliError> {
    match command {
        Command::Weights { weights, json } => cmd_weights(&weights, json.as_deref()),
        Command::Quasi {
            domain,
            weights,
            sampling,
            fresh_per_block,
            zero_sigma,
            nonzero_sigma,
            max_condition,
            json,
        } => {
            let options = QuasiOptions {
                sampling: sampling.config(),
                fresh_per_block,
                gram: GramOptions { max_condition },
                policy: ZeroPolicy {
                    zero_sigma,
                    nonzero_sigma,
                    ..ZeroPolicy::default()
                },
            };
            cmd_quasi(&domain, weights.as_deref(), &options, json.as_deref())
        }
        Command::Gram {
            domain,
            weights,
            level,
            sampling,
            max_condition,
            json,
        } => cmd_gram(
            &domain,
            weights.as_deref(),
            level,
            sampling.config(),
            GramOptions { max_condition },
            json.as_deref(),
        ),
        Command::Verify {
            map,
            inverse,
            domain,
            target,
            weights,
            suite,
            sampling,
            no_quasi,
            margin,
            max_weighted_degree,
            adjoint_pairs,
            json,
        } => {
            let options = SuiteOptions {
                sampling: sampling.config(),
                membership_margin: margin,
                adjoint_pairs,
                orthogonality: OrthogonalityOptions {
                    max_weighted_degree,
                    band: NoiseBand::default(),
                },
                ..SuiteOptions::default()
            };
            let request = VerifyRequest {
                map: &map,
                inverse: inverse.as_deref(),
                domain: &domain,
                target: target.as_deref(),
                weights: weights.as_deref(),
                checks: suite_checks(&suite),
                quasi: !no_quasi,
            };
            cmd_verify(&request, &options, json.as_deref())
        }
        Command::Example { kind } => cmd_example(kind),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

/// JSON to stdout, or JSON to `json` and the table to stdout.
fn emit<T: Serialize>(value: &T, table: String, json: Option<&Path>) -> Result<String, CliError> {
    let text = to_json(value);
    match json {
        Some(path) => {
            write_file(path, &text)?;
            Ok(table)
        }
        None => Ok(text),
    }
}

fn sorted_weight(raw: &[i64]) -> Result<Weight, CliError> {
    match Weight::new(raw) {
        Err(WeightError::NotSorted) => Err(CliError::Usage(
            "weights must be given in ascending order here; `reso weights` reports the sorting permutation".into(),
        )),
        other => Ok(other?),
    }
}

fn resolve_domain(domain: &str, weights: Option<&[i64]>) -> Result<DomainSpec, CliError> {
    let spec: DomainSpec = domain.parse()?;
    match weights {
        Some(raw) => Ok(spec.with_weight(sorted_weight(raw)?)?),
        None => Ok(spec),
    }
}

#[derive(Serialize)]
struct WeightsOutput<'a> {
    input: &'a [i64],
    /// 0-based input position of each sorted entry.
    permutation: &'a [usize],
    #[serde(flatten)]
    report: &'a ResonanceReport,
}

fn cmd_weights(raw: &[i64], json: Option<&Path>) -> Result<(i32, String), CliError> {
    let normalized = normalize_weight(raw)?;
    let report = resonance_report(&normalized.weight)?;
    let mut table = String::new();
    writeln!(table, "weight {}", report.weights).unwrap();
    if !normalized.is_identity() {
        let perm: Vec<String> = normalized.permutation.iter().map(|p| (p + 1).to_string()).collect();
        writeln!(table, "sorted from input positions {}", perm.join(",")).unwrap();
    }
    resonance_table(&mut table, &report);
    let out = WeightsOutput {
        input: raw,
        permutation: &normalized.permutation,
        report: &report,
    };
    Ok((EXIT_OK, emit(&out, table, json)?))
}

fn resonance_table(table: &mut String, report: &ResonanceReport) {
    writeln!(table, "{:>3} {:>5} {:>5}  E_i", "i", "m_i", "mu_i").unwrap();
    for (i, (&mi, &mu)) in report.weights.entries().iter().zip(&report.orders).enumerate() {
        let set: Vec<String> = report.levels[&(i + 1)].iter().map(|a| a.to_string()).collect();
        writeln!(table, "{:>3} {:>5} {:>5}  {}", i + 1, mi, mu, set.join(" ")).unwrap();
    }
    writeln!(table, "mu = {}, linear = {}", report.global_order, report.linear_flag).unwrap();
}

#[derive(Serialize)]
struct QuasiOutput<'a> {
    domain: String,
    resonance: &'a ResonanceReport,
    quasi: &'a QuasiResonanceReport,
}

fn cmd_quasi(
    domain: &str,
    weights: Option<&[i64]>,
    options: &QuasiOptions,
    json: Option<&Path>,
) -> Result<(i32, String), CliError> {
    let spec = resolve_domain(domain, weights)?;
    let resonance = resonance_report(&spec.weight)?;
    let quasi = quasi_resonance_report(&spec, &resonance, options)?;
    let mut table = String::new();
    writeln!(table, "domain {spec}, weight {}", spec.weight).unwrap();
    writeln!(table, "{:>3} {:>5} {:>5} {:>5} {:>6}  borderline", "i", "m_i", "mu_i", "nu_i", "bound").unwrap();
    for i in 0..spec.dim {
        writeln!(
            table,
            "{:>3} {:>5} {:>5} {:>5} {:>6}  {}",
            i + 1,
            spec.weight.entries()[i],
            quasi.resonance_orders[i],
            quasi.orders[i],
            quasi.enumeration_bounds[i],
            quasi.borderline[&(i + 1)].len()
        )
        .unwrap();
    }
    writeln!(table, "nu = {}, complete = {}", quasi.global_order, quasi.complete).unwrap();
    for b in quasi.blocks.iter().filter(|b| b.error.is_some()) {
        writeln!(table, "level {} skipped: {}", b.level, b.error.as_deref().unwrap_or("")).unwrap();
    }
    let out = QuasiOutput {
        domain: spec.to_string(),
        resonance: &resonance,
        quasi: &quasi,
    };
    Ok((EXIT_OK, emit(&out, table, json)?))
}

#[derive(Serialize)]
struct GramOutput<'a> {
    domain: String,
    weights: &'a Weight,
    level: u64,
    sampling: SamplingConfig,
    box_draws: u64,
    monomials: Vec<String>,
    /// Row-major `[re, im]` pairs.
    gram: Vec<Vec<[f64; 2]>>,
    std_errors: Vec<Vec<f64>>,
    condition_number: f64,
    policy: ZeroPolicy,
    representers: &'a [Representer],
}

fn cmd_gram(
    domain: &str,
    weights: Option<&[i64]>,
    level: u64,
    sampling: SamplingConfig,
    gram_options: GramOptions,
    json: Option<&Path>,
) -> Result<(i32, String), CliError> {
    let spec = resolve_domain(domain, weights)?;
    let samples = SampleSet::generate(&spec, sampling)?;
    let block = gram_block(&samples, &spec.weight, level, &gram_options)?;
    let policy = ZeroPolicy::default();
    let reps = representers(&block, &policy)?;
    let s = block.size();
    let mut table = String::new();
    writeln!(table, "domain {spec}, weight {}, level {level}", spec.weight).unwrap();
    writeln!(table, "condition number {:.3e}", block.condition_number).unwrap();
    for rep in &reps {
        let d = rep.degree.d_alpha.map_or("?".to_string(), |d| d.to_string());
        writeln!(table, "p{} (d = {d}) = {}", rep.alpha, rep.poly).unwrap();
    }
    let out = GramOutput {
        domain: spec.to_string(),
        weights: &spec.weight,
        level,
        sampling,
        box_draws: samples.tries(),
        monomials: block.monomials.iter().map(ToString::to_string).collect(),
        gram: (0..s)
            .map(|i| (0..s).map(|j| [block.gram[(i, j)].re, block.gram[(i, j)].im]).collect())
            .collect(),
        std_errors: (0..s).map(|i| (0..s).map(|j| block.std_errors[(i, j)]).collect()).collect(),
        condition_number: block.condition_number,
        policy,
        representers: &reps,
    };
    Ok((EXIT_OK, emit(&out, table, json)?))
}

struct VerifyRequest<'a> {
    map: &'a Path,
    inverse: Option<&'a Path>,
    domain: &'a str,
    target: Option<&'a str>,
    weights: Option<&'a [i64]>,
    checks: Vec<Check>,
    quasi: bool,
}

#[derive(Serialize)]
struct QuasiSummary {
    orders: Vec<u32>,
    global_order: u32,
    complete: bool,
    borderline: usize,
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    domain: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<String>,
    weights: &'a Weight,
    checks: &'a [Check],
    options: &'a SuiteOptions,
    resonance_orders: &'a [u32],
    #[serde(skip_serializing_if = "Option::is_none")]
    quasi: Option<QuasiSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
    status: Status,
    reports: &'a [VerificationReport],
}

fn read_map(path: &Path) -> Result<PolyMap, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    PolyMap::from_json(&text)
        .map_err(|e| CliError::Usage(format!("bad map file {}: {e}\n\n{MAP_FORMAT}", path.display())))
}

fn cmd_verify(request: &VerifyRequest<'_>, options: &SuiteOptions, json: Option<&Path>) -> Result<(i32, String), CliError> {
    let map = read_map(request.map)?;
    let inverse = request.inverse.map(read_map).transpose()?;
    let source = resolve_domain(request.domain, request.weights)?;
    let target = match request.target {
        Some(t) => {
            let spec = resolve_domain(t, request.weights)?;
            if spec.weight != source.weight {
                return Err(CliError::Usage(format!(
                    "source weight {} and target weight {} differ",
                    source.weight, spec.weight
                )));
            }
            Some(spec)
        }
        None => None,
    };
    for m in std::iter::once(&map).chain(inverse.as_ref()) {
        if m.dim() != source.dim {
            return Err(CliError::Usage(format!(
                "map has dimension {} but the domain has dimension {}",
                m.dim(),
                source.dim
            )));
        }
    }
    let resonance = resonance_report(&source.weight)?;
    let mut notes = Vec::new();
    let wants_quasi = request.quasi
        && request
            .checks
            .iter()
            .any(|c| matches!(c, Check::Degree | Check::Orthogonality));
    let quasi = if wants_quasi {
        let qopts = QuasiOptions {
            sampling: options.sampling,
            ..QuasiOptions::default()
        };
        match quasi_resonance_report(&source, &resonance, &qopts) {
            Ok(q) => Some(q),
            Err(BergmanError::Domain(DomainError::LowAcceptance { rate })) => {
                notes.push(format!(
                    "quasi-resonance orders not computed: acceptance rate {rate:.2e} too low to sample"
                ));
                None
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };
    let input = SuiteInput {
        map: &map,
        inverse: inverse.as_ref(),
        source: &source,
        target: target.as_ref(),
        resonance: &resonance,
        quasi: quasi.as_ref(),
    };
    let reports = run_suite(&input, &request.checks, options)?;
    let status = overall_status(&reports);

    let mut table = String::new();
    writeln!(table, "domain {source}, weight {}", source.weight).unwrap();
    for n in &notes {
        writeln!(table, "note: {n}").unwrap();
    }
    for r in &reports {
        writeln!(table, "{:<14} {}", r.check, r.status).unwrap();
        for n in &r.notes {
            writeln!(table, "    {n}").unwrap();
        }
        if let Some(rows) = &r.degree_table {
            writeln!(table, "    {:>3} {:>4} {:>5} {:>5} {:>9}  theorem  conjectured", "i", "deg", "mu_i", "nu_i", "nu_i max").unwrap();
            for row in rows {
                let nu = row.quasi_order.map_or("-".to_string(), |v| v.to_string());
                writeln!(
                    table,
                    "    {:>3} {:>4} {:>5} {:>5} {:>9}  {:<7}  {}",
                    row.component, row.degree, row.resonance_order, nu, row.quasi_order_upper, row.theorem, row.conjectured
                )
                .unwrap();
            }
        }
    }
    writeln!(table, "overall {status}").unwrap();

    let out = VerifyOutput {
        domain: source.to_string(),
        target: target.as_ref().map(ToString::to_string),
        weights: &source.weight,
        checks: &request.checks,
        options,
        resonance_orders: &resonance.orders,
        quasi: quasi.as_ref().map(|q| QuasiSummary {
            orders: q.orders.clone(),
            global_order: q.global_order,
            complete: q.complete,
            borderline: q.borderline.values().map(Vec::len).sum(),
        }),
        notes,
        status,
        reports: &reports,
    };
    let code = if status == Status::Fail {
        EXIT_VERIFY_FAILED
    } else {
        EXIT_OK
    };
    Ok((code, emit(&out, table, json)?))
}

fn cmd_example(kind: ExampleKind) -> Result<(i32, String), CliError> {
    let (map, out) = match kind {
        ExampleKind::Zapalowski { n, out } => (zapalowski_map(n)?, out),
        ExampleKind::Reflection { n, out } => (symmetric_reflection_map(n)?, out),
        ExampleKind::Rotation { weights, theta, out } => (rotation_map(&sorted_weight(&weights)?, theta), out),
    };
    let mut text = map.to_json();
    text.push('\n');
    match out {
        Some(path) => {
            write_file(&path, &text)?;
            Ok((EXIT_OK, format!("wrote {}-dimensional map to {}\n", map.dim(), path.display())))
        }
        None => Ok((EXIT_OK, text)),
    }
}
