use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use selftomo::experiment::{
    run_bell_negativity, run_experiment, write_csv, ClickDataset, ExperimentConfig,
    ExperimentResult, QubitDataset, QubitReconstruction, ResultDocument, Tolerances,
    FORMAT_VERSION,
};
use selftomo::onoff::{ClickTable, OnOffFit};
use selftomo::{Error, Result};

/// Exit status for invalid configuration, input data or usage.
const EXIT_CONFIG: u8 = 2;
/// Exit status for a pipeline that rejected valid input.
const EXIT_PIPELINE: u8 = 3;
/// Exit status for file-system failures.
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "selftomo",
    version,
    about = "Detector self-tomography with entangled sources"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the six-setting qubit calibration and reconstruct the detector.
    SimulateQubit(RunArgs),
    /// Reconstruct a qubit detector from recorded tables or counts.
    ReconstructQubit(DataArgs),
    /// Simulate on/off click statistics and fit efficiency and dark counts.
    SimulateOnoff(RunArgs),
    /// Fit efficiency and dark counts to a recorded click table or counts.
    FitOnoff(DataArgs),
    /// Self-tomography of a fuzzy joint POVM followed by inversion.
    JointTomo(RunArgs),
    /// Invert a configured joint POVM and certify negativity.
    BellNegativity(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML, or JSON by extension).
    #[arg(long)]
    config: PathBuf,
    /// Override the number of shots per setting.
    #[arg(long)]
    shots: Option<u64>,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluate exact probabilities (same as --shots 0).
    #[arg(long, conflicts_with = "shots")]
    exact: bool,
    /// Cross-check closed forms against the Born-rule oracle.
    #[arg(long)]
    oracle_check: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct DataArgs {
    /// Recorded data, or a result document produced by the matching simulate command.
    #[arg(long)]
    data: PathBuf,
    /// Mean photon number for click data that does not carry one.
    #[arg(long)]
    nbar: Option<f64>,
    /// Refine count-based qubit estimates by constrained least squares.
    #[arg(long)]
    refine: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct OutputArgs {
    /// Result document path; relative paths resolve against SELFTOMO_OUT_DIR when set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also export probability tables as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, env = "SELFTOMO_OUT_DIR", hide_env_values = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct AnalysisDocument<T> {
    format: u32,
    generator: &'static str,
    result: T,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("selftomo: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Parse(_) => EXIT_CONFIG,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_PIPELINE,
    }
}

fn run(command: Command) -> Result<()> {
    let name = subcommand_name(&command);
    match command {
        Command::SimulateQubit(a) => simulate(&a, name, "qubit-selftomo", run_experiment),
        Command::SimulateOnoff(a) => simulate(&a, name, "onoff", run_experiment),
        Command::JointTomo(a) => simulate(&a, name, "joint-bell", run_experiment),
        Command::BellNegativity(a) => simulate(&a, name, "joint-bell", run_bell_negativity),
        Command::ReconstructQubit(a) => reconstruct_qubit(&a, name),
        Command::FitOnoff(a) => fit_onoff(&a, name),
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::SimulateQubit(_) => "simulate-qubit",
        Command::ReconstructQubit(_) => "reconstruct-qubit",
        Command::SimulateOnoff(_) => "simulate-onoff",
        Command::FitOnoff(_) => "fit-onoff",
        Command::JointTomo(_) => "joint-tomo",
        Command::BellNegativity(_) => "bell-negativity",
    }
}

fn simulate(
    a: &RunArgs,
    name: &str,
    mode: &str,
    pipeline: fn(&ExperimentConfig) -> Result<ResultDocument>,
) -> Result<()> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if config.experiment.mode() != mode {
        return Err(Error::Config {
            field: "experiment.mode".into(),
            reason: format!(
                "{name} needs mode \"{mode}\", found \"{}\"",
                config.experiment.mode()
            ),
        });
    }
    if let Some(shots) = a.shots {
        config.shots = shots;
    }
    if a.exact {
        config.shots = 0;
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    config.oracle_check |= a.oracle_check;
    let doc = pipeline(&config)?;
    emit(&a.output, name, &doc.to_json()?)?;
    if let Some(csv) = &a.output.csv {
        let path = resolve(&a.output, csv);
        let file = std::fs::File::create(&path).map_err(|e| io_error(&path, e))?;
        write_csv(&doc.csv_rows(), std::io::BufWriter::new(file))?;
    }
    Ok(())
}

fn reconstruct_qubit(a: &DataArgs, name: &str) -> Result<()> {
    if a.output.csv.is_some() {
        return Err(Error::Config {
            field: "csv".into(),
            reason: format!("{name} has no tables to export"),
        });
    }
    let text = read(&a.data)?;
    let dataset = match ResultDocument::from_json(&text) {
        Ok(ResultDocument {
            result: ExperimentResult::QubitSelftomo(q),
            ..
        }) => QubitDataset { tables: q.tables },
        _ => parse_data::<QubitDataset>(&a.data, &text)?,
    };
    let result: QubitReconstruction = dataset.reconstruct(&Tolerances::default(), a.refine)?;
    emit(&a.output, name, &analysis_json(&result)?)
}

#[derive(Serialize)]
struct FitOutput {
    nbar: f64,
    fit: OnOffFit,
}

fn fit_onoff(a: &DataArgs, name: &str) -> Result<()> {
    if a.output.csv.is_some() {
        return Err(Error::Config {
            field: "csv".into(),
            reason: format!("{name} has no tables to export"),
        });
    }
    let text = read(&a.data)?;
    let mut dataset = match ResultDocument::from_json(&text) {
        Ok(ResultDocument {
            result: ExperimentResult::Onoff(o),
            ..
        }) => match o.counts {
            Some(r) => ClickDataset {
                nbar: o.source.nbar,
                table: None,
                counts: Some([r.counts[3], r.counts[1], r.counts[2], r.counts[0]]),
            },
            None => ClickDataset {
                nbar: o.source.nbar,
                table: Some(o.table),
                counts: None,
            },
        },
        _ => parse_click_data(&a.data, &text, a.nbar)?,
    };
    if let Some(nbar) = a.nbar {
        dataset.nbar = nbar;
    }
    let fit = dataset.fit()?;
    emit(
        &a.output,
        name,
        &analysis_json(&FitOutput {
            nbar: dataset.nbar,
            fit,
        })?,
    )
}

/// Click data files may omit `nbar` when it is given on the command line.
fn parse_click_data(path: &Path, text: &str, nbar: Option<f64>) -> Result<ClickDataset> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Raw {
        nbar: Option<f64>,
        table: Option<ClickTable>,
        counts: Option<[u64; 4]>,
    }
    let raw: Raw = parse_data(path, text)?;
    let nbar = nbar.or(raw.nbar).ok_or_else(|| Error::Config {
        field: "nbar".into(),
        reason: "give `nbar` in the data file or with --nbar".into(),
    })?;
    Ok(ClickDataset {
        nbar,
        table: raw.table,
        counts: raw.counts,
    })
}

fn parse_data<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    let parsed = if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
    {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    };
    parsed.map_err(|m| Error::Parse(format!("{}: {m}", path.display())))
}

fn analysis_json<T: Serialize>(result: &T) -> Result<String> {
    let doc = AnalysisDocument {
        format: FORMAT_VERSION,
        generator: env!("CARGO_PKG_VERSION"),
        result,
    };
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn resolve(o: &OutputArgs, path: &Path) -> PathBuf {
    match &o.out_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

/// Writes to `--out`, to `<SELFTOMO_OUT_DIR>/<command>.json`, or to stdout.
fn emit(o: &OutputArgs, name: &str, text: &str) -> Result<()> {
    let target = match (&o.out, &o.out_dir) {
        (Some(p), _) => Some(resolve(o, p)),
        (None, Some(dir)) => Some(dir.join(format!("{name}.json"))),
        (None, None) => None,
    };
    match target {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
            }
            std::fs::write(&path, text).map_err(|e| io_error(&path, e))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
