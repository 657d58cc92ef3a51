use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use lacuna::apps::{run_app, AppSpec};
use lacuna::certify::{brute_oracle, certify_all_gaps, certify_measure, covered_oracle, CertifyError, ORACLE_TUPLE_CAP};
use lacuna::dimfn::DimensionFunction;
use lacuna::engine::{init, ConstructionState, DEFAULT_LEVEL_CAP};
use lacuna::io::{
    read_pattern_file, read_points_csv, read_tree, write_centers_csv, write_certificates, write_pattern_file,
    write_points_csv, write_schedule_log, write_svg, write_tree, CertificateFile, OracleRun,
};
use lacuna::numeric::{format_rational, parse_rational};

const LEVEL_CAP_ENV: &str = "LACUNA_LEVEL_CAP";
const MIN_PRECISION: u32 = 8;

#[derive(Parser)]
#[command(name = "lacuna", version, about = "Build and certify compact sets avoiding linear patterns")]
struct Cli {
    /// Deepest level any build may reach (also read from LACUNA_LEVEL_CAP).
    #[arg(long, global = true)]
    level_cap: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the construction for a pattern file.
    Build {
        patterns: PathBuf,
        #[arg(long)]
        dimfn: String,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines schedule log (defaults to `<out>.schedule.jsonl`).
        #[arg(long)]
        schedule_log: Option<PathBuf>,
    },
    /// Check a tree file and write its certificates.
    Certify {
        tree: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::All)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
        /// Largest number of tuples the per-entry oracle may scan.
        #[arg(long, default_value_t = 1 << 20)]
        oracle_cap: u64,
    },
    /// Render a tree file.
    Export {
        tree: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        #[arg(long)]
        out: PathBuf,
        /// Decimal places for csv output.
        #[arg(long, default_value_t = 20)]
        precision: u32,
    },
    /// Run an application spec; writes patterns.json, tree.json and cert.json.
    App {
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Search a point list for pattern instances.
    Oracle {
        points: PathBuf,
        patterns: PathBuf,
        #[arg(long, default_value = "0")]
        tol: String,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Gap,
    Measure,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Svg,
    Csv,
    Points,
}

/// Failure with its exit code: 1 for failed checks or found instances, 2 for bad input.
struct Failure {
    code: u8,
    kind: String,
    message: String,
}

impl Failure {
    fn config(kind: &str, message: impl ToString) -> Self {
        Failure { code: 2, kind: kind.to_string(), message: message.to_string() }
    }

    fn from_error(e: lacuna::Error) -> Self {
        let kind = e.kind();
        let code = match kind {
            "GapViolated" | "MeasureViolated" | "EntryNotProcessed" | "StructureViolated" | "ScheduleMismatch"
            | "PlacementFailure" | "RatioViolated" => 1,
            _ => 2,
        };
        Failure { code, kind: kind.to_string(), message: e.to_string() }
    }
}

impl<E: Into<lacuna::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::from_error(e.into())
    }
}

type Outcome = Result<u8, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::config("ReadFailed", format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::config("WriteFailed", format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::config("WriteFailed", format!("{}: {e}", path.display())))
}

fn level_cap(flag: Option<usize>) -> Result<usize, Failure> {
    if let Some(cap) = flag {
        return Ok(cap);
    }
    match std::env::var(LEVEL_CAP_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Failure::config("BadConfig", format!("{LEVEL_CAP_ENV}={v:?}"))),
        Err(_) => Ok(DEFAULT_LEVEL_CAP),
    }
}

fn check_depth(depth: usize, cap: usize) -> Result<(), Failure> {
    if depth > cap {
        return Err(Failure::config("ScheduleOverflow", format!("depth {depth} exceeds the level cap {cap}")));
    }
    Ok(())
}

fn cmd_build(patterns: &Path, dimfn: &str, depth: usize, out: &Path, log: Option<&Path>, cap: usize) -> Outcome {
    check_depth(depth, cap)?;
    let (d, patterns) = read_pattern_file(&read(patterns)?)?;
    let h = DimensionFunction::parse(dimfn, d as u32)?;
    let state = init(d, patterns, h, cap)?.build(depth)?;
    write(out, &write_tree(&state))?;
    let log_path = log.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("schedule.jsonl"));
    write(&log_path, &write_schedule_log(state.entries()))?;
    log::info!("built depth {depth}: {} leaves, {} entries", state.leaves().len(), state.entries().len());
    Ok(0)
}

fn certificates(state: &ConstructionState, mode: Mode, oracle_cap: u128) -> Result<CertificateFile, Failure> {
    state.verify_structure()?;
    let gaps = if mode == Mode::Measure { Vec::new() } else { certify_all_gaps(state)? };
    let measure = if mode == Mode::Gap { None } else { Some(certify_measure(state)?) };
    let mut oracle_runs = Vec::new();
    if mode != Mode::Measure {
        for i in 0..state.entries().len() {
            match covered_oracle(state, i, &num_rational::BigRational::from_integer(0.into()), oracle_cap) {
                Ok(report) => {
                    if !report.instances.is_empty() {
                        return Err(Failure {
                            code: 1,
                            kind: "InstanceFound".into(),
                            message: format!("entry {} covers {} instances", i + 1, report.instances.len()),
                        });
                    }
                    oracle_runs.push(OracleRun::new(i + 1, &report));
                }
                Err(CertifyError::OracleTooLarge { tuples, .. }) => {
                    log::info!("oracle skipped for entry {}: {tuples} tuples", i + 1);
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(CertificateFile { gaps, measure, oracle_runs })
}

fn cmd_certify(tree: &Path, mode: Mode, out: &Path, oracle_cap: u64, cap: usize) -> Outcome {
    let state = read_tree(&read(tree)?, cap)?;
    let file = certificates(&state, mode, oracle_cap as u128)?;
    write(out, &write_certificates(&file))?;
    if let Some(m) = &file.measure {
        println!("lower bound {}", format_rational(&m.lower_bound));
    }
    Ok(0)
}

fn cmd_export(tree: &Path, format: Format, out: &Path, precision: u32, cap: usize) -> Outcome {
    if precision < MIN_PRECISION {
        return Err(Failure::config("BadConfig", format!("precision must be at least {MIN_PRECISION}")));
    }
    let state = read_tree(&read(tree)?, cap)?;
    let text = match format {
        Format::Svg => write_svg(&state)?,
        Format::Csv => write_centers_csv(&state, precision as usize),
        Format::Points => write_points_csv(&state.leaf_centers()),
    };
    write(out, &text)?;
    Ok(0)
}

fn cmd_app(spec: &Path, out_dir: &Path, cap: usize) -> Outcome {
    let spec: AppSpec =
        serde_json::from_str(&read(spec)?).map_err(|e| Failure::config("MalformedJson", e.to_string()))?;
    check_depth(spec.depth, cap)?;
    if spec.bits() < MIN_PRECISION {
        return Err(Failure::config("BadConfig", format!("precision must be at least {MIN_PRECISION}")));
    }
    let run = run_app(&spec, cap)?;
    let state = &run.state;
    write(&out_dir.join("patterns.json"), &write_pattern_file(state.dim(), state.patterns()))?;
    write(&out_dir.join("tree.json"), &write_tree(state))?;
    let mode = if run.measure.is_some() { Mode::All } else { Mode::Gap };
    write(&out_dir.join("cert.json"), &write_certificates(&certificates(state, mode, 1 << 20)?))?;
    if let Some(diff) = &run.differences {
        let rows: String = diff
            .points
            .iter()
            .map(|iv| format!("{},{}\n", format_rational(&iv.lo), format_rational(&iv.hi)))
            .collect();
        write(&out_dir.join("log-points.csv"), &format!("lo,hi\n{rows}"))?;
        let margins = serde_json::to_string_pretty(&diff.margins).expect("margins serialize");
        write(&out_dir.join("margins.json"), &(margins + "\n"))?;
    }
    println!(
        "{} entries certified, depth {}, {} leaves",
        run.gaps.len(),
        state.depth(),
        state.leaves().len()
    );
    Ok(0)
}

fn cmd_oracle(points: &Path, patterns: &Path, tol: &str) -> Outcome {
    let tol = parse_rational(tol).map_err(|e| Failure::config("BadConfig", e))?;
    if tol < num_rational::BigRational::from_integer(0.into()) {
        return Err(Failure::config("BadConfig", "tolerance must be nonnegative"));
    }
    let points = read_points_csv(&read(points)?)?;
    let (d, patterns) = read_pattern_file(&read(patterns)?)?;
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Failure::config("DimensionMismatch", format!("point with {} coordinates, expected {d}", p.len())));
    }
    let mut found = Vec::new();
    let mut checked: u128 = 0;
    for (pid, p) in patterns.iter().enumerate() {
        let report = brute_oracle(&points, p, &tol, ORACLE_TUPLE_CAP);
        checked += report.tuples_checked;
        for t in report.instances {
            let pts: Vec<Vec<String>> =
                t.iter().map(|&i| points[i].iter().map(format_rational).collect()).collect();
            found.push(json!({ "pattern": pid, "indices": t, "points": pts }));
        }
    }
    let summary = json!({ "tuples_checked": checked.to_string(), "instances": found });
    println!("{}", serde_json::to_string_pretty(&summary).expect("report serializes"));
    Ok(if found.is_empty() { 0 } else { 1 })
}

fn run(cli: Cli) -> Outcome {
    let cap = level_cap(cli.level_cap)?;
    match cli.command {
        Command::Build { patterns, dimfn, depth, out, schedule_log } => {
            cmd_build(&patterns, &dimfn, depth, &out, schedule_log.as_deref(), cap)
        }
        Command::Certify { tree, mode, out, oracle_cap } => cmd_certify(&tree, mode, &out, oracle_cap, cap),
        Command::Export { tree, format, out, precision } => cmd_export(&tree, format, &out, precision, cap),
        Command::App { spec, out_dir } => cmd_app(&spec, &out_dir, cap),
        Command::Oracle { points, patterns, tol } => cmd_oracle(&points, &patterns, &tol),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let envelope = json!({ "error": { "kind": "Usage", "message": e.to_string() } });
            eprintln!("{envelope}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("{}", json!({ "error": { "kind": f.kind, "message": f.message } }));
            ExitCode::from(f.code)
        }
    }
}
