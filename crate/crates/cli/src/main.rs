use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use mlnsim_cli::config::parse_snr_grid;
use mlnsim_cli::{run_command, Command, ExperimentConfig, Outcome, Preset, EXIT_USAGE};
use mlnsim_core::{PepMethod, QueryKind};

#[derive(Clone, Debug)]
struct SnrGrid(Vec<f64>);

fn parse_grid_arg(s: &str) -> Result<SnrGrid, String> {
    parse_snr_grid(s).map(SnrGrid)
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CommandArg {
    Measure,
    VerifyLemmas,
    Pep,
    Ber,
    Reproduce,
}

impl From<CommandArg> for Command {
    fn from(c: CommandArg) -> Self {
        match c {
            CommandArg::Measure => Command::Measure,
            CommandArg::VerifyLemmas => Command::VerifyLemmas,
            CommandArg::Pep => Command::Pep,
            CommandArg::Ber => Command::Ber,
            CommandArg::Reproduce => Command::Reproduce,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    Example1,
    Example2,
    Example3,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Example1 => Preset::Example1,
            PresetArg::Example2 => Preset::Example2,
            PresetArg::Example3 => Preset::Example3,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum QueryArg {
    Uniform,
    Dft,
    Hadamard,
    RandomUnitary,
}

impl From<QueryArg> for QueryKind {
    fn from(q: QueryArg) -> Self {
        match q {
            QueryArg::Uniform => QueryKind::Uniform,
            QueryArg::Dft => QueryKind::UnitaryDft,
            QueryArg::Hadamard => QueryKind::UnitaryHadamard,
            QueryArg::RandomUnitary => QueryKind::UnitaryRandom,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    QFunctionMc,
    EigenProductMc,
}

impl From<MethodArg> for PepMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::QFunctionMc => PepMethod::QFunctionMc,
            MethodArg::EigenProductMc => PepMethod::EigenProductMc,
        }
    }
}

/// Uniform vs unitary query experiments for M x L x N backscatter links.
///
/// Flags override values from --config. Exit status: 0 success, 1 usage
/// error, 2 invalid configuration, 3 lemma check failed, 4 runtime failure.
#[derive(Debug, Parser)]
#[command(name = "mlnsim", version)]
struct Args {
    /// Command to run.
    command: CommandArg,

    /// Example setup fixing dims and codebook.
    #[arg(long)]
    preset: Option<PresetArg>,

    /// JSON config file with flat keys (m, l, n, t, codebook, delta, seed, ...).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Master seed [default: 2024].
    #[arg(long)]
    seed: Option<u64>,

    /// Trials for the selected command: sampled G for verify-lemmas [default: 1000],
    /// Monte Carlo draws for pep [default: 100000], maximum per SNR point for ber
    /// and reproduce [default: 1000000].
    #[arg(long)]
    trials: Option<u64>,

    /// SNR grid A:STEP:B in dB [default: 10:5:45 for pep, 0:2:40 for ber and reproduce].
    #[arg(long, value_name = "A:STEP:B", value_parser = parse_grid_arg)]
    snr_grid: Option<SnrGrid>,

    /// Run a single query scheme instead of uniform and dft.
    #[arg(long)]
    query: Option<QueryArg>,

    /// PEP estimator [default: eigen-product-mc].
    #[arg(long)]
    method: Option<MethodArg>,

    /// Stop a BER point after this many block errors [default: 200].
    #[arg(long)]
    target_errors: Option<u64>,

    /// Output directory [default: mlnsim-out].
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Args {
    fn overrides(&self) -> ExperimentConfig {
        let command: Command = self.command.into();
        let mut c = ExperimentConfig {
            command: Some(command),
            preset: self.preset.map(Into::into),
            query: self.query.map(Into::into),
            pep_method: self.method.map(Into::into),
            seed: self.seed,
            target_error_events: self.target_errors,
            output_dir: self.out.clone(),
            ..Default::default()
        };
        match command {
            Command::Measure => {}
            Command::VerifyLemmas => c.lemma_trials = self.trials,
            Command::Pep => {
                c.pep_trials = self.trials;
                c.pep_snr_grid_db = self.snr_grid.clone().map(|g| g.0);
            }
            Command::Ber | Command::Reproduce => {
                c.ber_trials = self.trials;
                c.ber_snr_grid_db = self.snr_grid.clone().map(|g| g.0);
            }
        }
        c
    }
}

fn report(outcome: &Outcome) {
    if let Some(m) = &outcome.measure {
        println!("{}", serde_json::to_string_pretty(m).unwrap_or_default());
    }
    if let Some(l) = &outcome.lemmas {
        println!(
            "lemma 1 fraction {} lemma 2 fraction {} over {} trials: {}",
            l.report.lemma1_fraction,
            l.report.lemma2_fraction,
            l.report.trials,
            if l.passed { "pass" } else { "FAIL" }
        );
    }
    if let Some(p) = &outcome.pep {
        for e in &p.exponents {
            match e.measured {
                Some(x) => println!("exponent {}: measured {x:.3}, predicted {} ({:?})", e.query, e.predicted, e.status),
                None => println!("exponent {}: {}", e.query, e.message.as_deref().unwrap_or("unavailable")),
            }
        }
    }
    if let Some(b) = &outcome.ber {
        for g in &b.gain_at_ber {
            match g.gain_db {
                Some(x) => println!("gain at BER {:e}: {x:.2} dB", g.ber_level),
                None => println!("gain at BER {:e}: {}", g.ber_level, g.message.as_deref().unwrap_or("n/a")),
            }
        }
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("MLNSIM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("MLNSIM_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE as u8);
    }

    let file = match &args.config {
        Some(path) => match ExperimentConfig::from_file(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
        },
        None => ExperimentConfig::default(),
    };
    let exp = match file.overridden_by(args.overrides()).resolve() {
        Ok(exp) => exp,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run_command(&exp) {
        Ok(outcome) => {
            report(&outcome);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {} failed: {e}", exp.command);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
