//! `arakelov`: heights and stability invariants of toric Fano varieties from the command line.
//!
//! Every command prints one JSON report on stdout and a short summary on stderr. Exit codes:
//! `0` success, `1` a check failed or a computation did not converge, `2` invalid input.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use arakelov_toric::analysis::{analyze, gap_scan, verify_induction_chain, CheckResult};
use arakelov_toric::ding::{maximize, verify_bounds, DingConfig, StepRule};
use arakelov_toric::io::{parse_polytopes, sniff_format, write_matrix, write_native, Format, InputInfo, PolytopeFile, RunReport};
use arakelov_toric::mabuchi::{donaldson_invariant_gap, donaldson_mabuchi, mabuchi_consistency, ConsistencyOptions, GuilleminPotential, Quadrature};
use arakelov_toric::{builtin, Builtin, Error};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "arakelov", version, about = "Arithmetic heights of toric Fano varieties")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Input {
    /// Polytope file, or `-` for stdin.
    file: String,
    /// Input syntax; `auto` recognizes the native header keywords.
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    format: FormatArg,
    /// Read matrix blocks with vertices as rows regardless of shape.
    #[arg(long)]
    transpose: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum FormatArg {
    Auto,
    Native,
    Matrix,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum StepArg {
    Newton,
    Diminishing,
    Polyak,
}

#[derive(Args, Debug, Clone)]
struct DingArgs {
    /// Subdivision factor of the dual grid; the value is extrapolated from grids k and 2k.
    #[arg(long, default_value_t = 14)]
    grid: usize,
    /// Stationarity tolerance on the supergradient.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Seed for the perturbation of the starting point (see --jitter).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Amplitude of the seeded starting-point perturbation.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    #[arg(long, value_enum, default_value_t = StepArg::Newton)]
    step: StepArg,
    /// Initial step length for `--step diminishing`, or the target value for `--step polyak`.
    #[arg(long)]
    step_param: Option<f64>,
    /// Solve a single grid without extrapolation.
    #[arg(long)]
    no_extrapolate: bool,
}

impl DingArgs {
    fn config(&self) -> Result<DingConfig, Error> {
        let step = match self.step {
            StepArg::Newton => StepRule::Newton,
            StepArg::Diminishing => StepRule::Diminishing {
                s0: self.step_param.unwrap_or(1.0),
            },
            StepArg::Polyak => StepRule::Polyak {
                target: self
                    .step_param
                    .ok_or_else(|| Error::BadParams("--step polyak needs --step-param TARGET".into()))?,
            },
        };
        if self.grid == 0 {
            return Err(Error::BadParams("--grid must be positive".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::BadParams("--tol must be positive".into()));
        }
        Ok(DingConfig {
            subdivision: self.grid,
            tol: self.tol,
            max_iterations: self.max_iterations,
            step,
            seed: self.seed,
            jitter: self.jitter,
            extrapolate: !self.no_extrapolate,
        })
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classification flags, exact volumes and closed-form bounds.
    Analyze {
        #[command(flatten)]
        input: Input,
    },
    /// Closed-form bounds only, with their internal consistency checks.
    Bounds {
        #[command(flatten)]
        input: Input,
    },
    /// Kähler-Einstein height by maximizing the toric Ding functional.
    KeHeight {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        ding: DingArgs,
        /// Fail unless every grid solve converged.
        #[arg(long)]
        certified: bool,
    },
    /// Donaldson's toric Mabuchi functional.
    Mabuchi {
        #[command(flatten)]
        input: Input,
        /// Evaluate at the smoothed Ding optimum and check the consistency identity.
        #[arg(long)]
        from_ke: bool,
        #[command(flatten)]
        ding: DingArgs,
        /// Relative tolerance of the consistency check.
        #[arg(long, default_value_t = 0.02)]
        rel_tol: f64,
        /// Degree of the polynomial correction fitted on top of Guillemin's potential.
        #[arg(long, default_value_t = 2)]
        fit_degree: usize,
        /// Also evaluate the entropic smoothings with parameters h, 2h and 4h (slow).
        #[arg(long)]
        sweep: bool,
    },
    /// Volume gap among the K-semistable polytopes of a directory.
    GapScan {
        /// Directory of polytope files, one or more polytopes per file.
        dir: PathBuf,
        /// Dimension to scan; files of other dimensions are skipped with a note.
        #[arg(long)]
        dim: usize,
        /// Read matrix blocks with vertices as rows regardless of shape.
        #[arg(long)]
        transpose: bool,
    },
    /// Numeric checks of the inequality chain for n = 2..=max-n.
    VerifyInequalities {
        #[arg(long, default_value_t = 500)]
        max_n: usize,
    },
    /// Prints a builtin polytope: Pn N, PnxP1 N, Cube N, Xpq P Q, Hexagon, Bl1P2, Bl2P2, Bl1P3.
    Builtin {
        name: String,
        params: Vec<String>,
        #[arg(long, value_enum, default_value_t = FormatArg::Native)]
        format: FormatArg,
    },
}

enum Failure {
    Input(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. }
            | Error::DegenerateInput
            | Error::DimensionMismatch { .. }
            | Error::Unbounded
            | Error::Empty
            | Error::OriginNotInterior
            | Error::NotFanoNormalized
            | Error::BadParams(_)
            | Error::TooLarge(_)
            | Error::NotSemistable
            | Error::MixedDimensions { .. }
            | Error::NonConvexInput(_)
            | Error::Unsupported(_) => Failure::Input(e),
            _ => Failure::Runtime(e),
        }
    }
}

type Run = Result<Option<RunReport>, Failure>;

fn read_input(input: &Input) -> Result<(Vec<u8>, PolytopeFile), Failure> {
    let bytes = if input.file == "-" {
        let mut buf = Vec::new();
        std::io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| Error::BadParams(format!("reading stdin: {e}")))?;
        buf
    } else {
        std::fs::read(&input.file).map_err(|e| Error::BadParams(format!("reading {}: {e}", input.file)))?
    };
    let format = match input.format {
        FormatArg::Auto => sniff_format(&bytes),
        FormatArg::Native => Format::Native,
        FormatArg::Matrix => Format::Matrix,
    };
    let mut files = parse_polytopes(&bytes, format, input.transpose)?;
    if files.len() != 1 {
        return Err(Error::BadParams(format!("expected one polytope, found {}", files.len())).into());
    }
    Ok((bytes, files.remove(0)))
}

fn report_for(command: &str, input: &Input) -> Result<(RunReport, PolytopeFile), Failure> {
    let (bytes, file) = read_input(input)?;
    let mut report = RunReport::new(command);
    report.input = Some(InputInfo::new(&bytes, &file));
    Ok((report, file))
}

fn run_analyze(input: &Input) -> Run {
    let t = Instant::now();
    let (mut report, file) = report_for("analyze", input)?;
    let fano = analyze(&file.polytope)?;
    eprintln!(
        "dim {}  vol {}  k_semistable {}  reflexive {}  smooth {}",
        fano.dim,
        arakelov_toric::rational::format_rational(&fano.vol),
        fano.k_semistable,
        fano.is_reflexive,
        fano.is_smooth
    );
    report.insert("fano_report", &fano)?;
    report.time("total", t);
    Ok(Some(report))
}

fn bound_checks(fano: &arakelov_toric::analysis::FanoReport) -> Vec<CheckResult> {
    let b = &fano.bounds;
    let n = Some(fano.dim);
    let mut checks = vec![
        CheckResult::le("ke_lower_below_ke_upper", n, b.ke_lower, b.ke_upper),
        CheckResult::le("mahler_kurlberg_below_conjectured", n, b.mahler_lower_kurlberg, b.mahler_conjectured),
    ];
    if let Some(c) = b.corollary_upper {
        checks.push(CheckResult::le("ke_lower_below_corollary_upper", n, b.ke_lower, c));
    }
    checks
}

fn run_bounds(input: &Input) -> Run {
    let t = Instant::now();
    let (mut report, file) = report_for("bounds", input)?;
    let fano = analyze(&file.polytope)?;
    eprintln!(
        "ke_lower {:.6}  ke_upper {:.6}  universal_upper {:.6}  pn_height {:.6}",
        fano.bounds.ke_lower, fano.bounds.ke_upper, fano.bounds.universal_upper, fano.bounds.pn_height
    );
    report.insert("bounds", &fano.bounds)?;
    report.insert("mahler", &fano.mahler)?;
    report.add_checks(bound_checks(&fano));
    report.time("total", t);
    Ok(Some(report))
}

fn run_ke_height(input: &Input, ding: &DingArgs, certified: bool) -> Run {
    let t = Instant::now();
    let (mut report, file) = report_for("ke-height", input)?;
    let cfg = ding.config()?;
    report.seed = Some(cfg.seed);
    let fano = analyze(&file.polytope)?;
    let result = maximize(&file.polytope, &cfg)?;
    eprintln!(
        "height {:.6} ± {:.1e}  chi_volume {:.6}  residual {:.1e}  certified {}",
        result.height, result.height_error, result.chi_volume, result.ke_residual, result.certified
    );
    report.insert("fano_report", &fano)?;
    report.insert("ding", &result)?;
    report.insert("config", &cfg)?;
    report.add_checks(verify_bounds(&result, &fano));
    if certified && !result.certified {
        report.all_checks_hold = false;
        report.notes.push("a grid solve did not reach the stationarity tolerance".into());
    }
    report.time("total", t);
    Ok(Some(report))
}

struct MabuchiArgs {
    from_ke: bool,
    rel_tol: f64,
    fit_degree: usize,
    sweep: bool,
}

fn run_mabuchi(input: &Input, ding: &DingArgs, args: MabuchiArgs) -> Run {
    let t = Instant::now();
    let (mut report, file) = report_for("mabuchi", input)?;
    let p = &file.polytope;
    if !args.from_ke {
        let m = donaldson_mabuchi(&GuilleminPotential::new(p), p, &Quadrature::default())?;
        eprintln!("M(guillemin) {:.6} ± {:.1e}", m.value, m.error_estimate);
        report.insert("guillemin", &m)?;
        report.time("total", t);
        return Ok(Some(report));
    }
    let cfg = ding.config()?;
    report.seed = Some(cfg.seed);
    let result = maximize(p, &cfg)?;
    report.time("ding", t);
    let t2 = Instant::now();
    let opts = ConsistencyOptions {
        fit_degree: args.fit_degree,
        rel_tol: args.rel_tol,
        sweep: args.sweep.then_some(Quadrature::Adaptive {
            tol: 1e-4,
            max_simplices: 4000,
        }),
        ..Default::default()
    };
    let consistency = mabuchi_consistency(p, &result, &opts)?;
    let gap = donaldson_invariant_gap(p, &result)?;
    eprintln!(
        "M {:.6}  predicted minimum {:.6}  relative gap {:.2e}  invariant gap over Pn {:.6}",
        consistency.value, consistency.rhs, consistency.relative_gap, gap.gap
    );
    report.insert("ding", &result)?;
    report.insert("mabuchi", &consistency)?;
    report.insert("invariant_gap", &gap)?;
    report.add_checks(consistency.checks.clone());
    report.time("mabuchi", t2);
    report.time("total", t);
    Ok(Some(report))
}

fn run_gap_scan(dir: &Path, dim: usize, transpose: bool) -> Run {
    let t = Instant::now();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::BadParams(format!("reading {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut report = RunReport::new("gap-scan");
    let mut polytopes = Vec::new();
    let mut names = Vec::new();
    for path in &paths {
        let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let parsed = std::fs::read(path)
            .map_err(|e| Error::BadParams(e.to_string()))
            .and_then(|b| parse_polytopes(&b, sniff_format(&b), transpose));
        match parsed {
            Ok(files) => {
                let many = files.len() > 1;
                for (k, f) in files.into_iter().enumerate() {
                    if f.polytope.dim() != dim {
                        report.notes.push(format!("{name}: skipped, dimension {}", f.polytope.dim()));
                        continue;
                    }
                    names.push(if many { format!("{name}#{k}") } else { name.clone() });
                    polytopes.push(f.polytope);
                }
            }
            Err(e) => report.notes.push(format!("{name}: skipped, {e}")),
        }
    }
    let gap = gap_scan(&polytopes, dim)?;
    let entries: Vec<serde_json::Value> = gap
        .semistable
        .iter()
        .map(|e| serde_json::json!({ "file": names[e.index], "vol": arakelov_toric::rational::format_rational(&e.vol) }))
        .collect();
    eprintln!(
        "{} polytopes, {} semistable, second largest volume {}, gap holds {}",
        gap.total,
        gap.semistable.len(),
        gap.second_max.as_ref().map_or("none".into(), arakelov_toric::rational::format_rational),
        gap.gap_holds
    );
    report.insert("gap", &gap)?;
    report.insert("semistable_files", &entries)?;
    report.add_checks([CheckResult::le(
        "second_volume_below_threshold",
        Some(dim),
        gap.second_max.as_ref().map_or(0.0, arakelov_toric::rational::to_f64),
        arakelov_toric::rational::to_f64(&gap.threshold),
    )]);
    report.time("total", t);
    Ok(Some(report))
}

fn run_verify(max_n: usize) -> Run {
    let t = Instant::now();
    let mut report = RunReport::new("verify-inequalities");
    let checks = verify_induction_chain(max_n)?;
    let failed = checks.iter().filter(|c| !c.holds).count();
    let worst = checks.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    eprintln!("{} checks, {failed} failed, smallest margin {worst:.6}", checks.len());
    report.insert("max_n", &max_n)?;
    report.add_checks(checks);
    report.time("total", t);
    Ok(Some(report))
}

fn run_builtin(name: &str, params: &[String], format: FormatArg) -> Run {
    let b = Builtin::parse(name, params)?;
    let p = builtin(&b)?;
    let text = match format {
        FormatArg::Matrix => write_matrix(&p)?,
        _ => write_native(&PolytopeFile::new(p).named(b.name())),
    };
    print!("{text}");
    Ok(None)
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("ARAKELOV_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::BadParams(format!("ARAKELOV_THREADS must be a number, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::BadParams(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = configure_threads().and_then(|()| match &cli.command {
        Command::Analyze { input } => run_analyze(input),
        Command::Bounds { input } => run_bounds(input),
        Command::KeHeight { input, ding, certified } => run_ke_height(input, ding, *certified),
        Command::Mabuchi {
            input,
            from_ke,
            ding,
            rel_tol,
            fit_degree,
            sweep,
        } => run_mabuchi(
            input,
            ding,
            MabuchiArgs {
                from_ke: *from_ke,
                rel_tol: *rel_tol,
                fit_degree: *fit_degree,
                sweep: *sweep,
            },
        ),
        Command::GapScan { dir, dim, transpose } => run_gap_scan(dir, *dim, *transpose),
        Command::VerifyInequalities { max_n } => run_verify(*max_n),
        Command::Builtin { name, params, format } => run_builtin(name, params, *format),
    });
    match outcome {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(report)) => {
            println!("{}", report.to_json());
            if report.all_checks_hold {
                ExitCode::SUCCESS
            } else {
                eprintln!("some checks failed");
                ExitCode::from(1)
            }
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
