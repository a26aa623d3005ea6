//! `netsurgery` command-line driver.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use netsurgery::data::{gen_xor, load_mnist_dir, Dataset};
use netsurgery::math::Matrix;
use netsurgery::model_io::{compression_report, export_sparse, read_model_file, save_dense, write_file};
use netsurgery::network::{evaluate, init_network, Network};
use netsurgery::presets::{Arch, ExperimentConfig};
use netsurgery::surgery::{run_surgery, train_reference, LogRecord};
use netsurgery::{Error, Result};

#[derive(Parser)]
#[command(name = "netsurgery", version, about = "Train, prune and splice small neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a dense reference model.
    TrainReference(Common),
    /// Run surgery on a reference model.
    Surgery(Common),
    /// Print the top-1 test error of a model.
    Eval(Common),
    /// Print the per-layer compression table of a model.
    Report(Common),
    /// Noisy XOR end to end: data, reference, surgery, report.
    XorDemo(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding the MNIST IDX files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Input model file.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_IO: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_USAGE: u8 = 64;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Format { .. } | Error::Version { .. } | Error::Truncated { .. } => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::TrainReference(c) => cmd_train_reference(&c),
        Command::Surgery(c) => cmd_surgery(&c),
        Command::Eval(c) => cmd_eval(&c),
        Command::Report(c) => cmd_report(&c),
        Command::XorDemo(c) => cmd_xor_demo(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failed(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

enum Failure {
    Usage(String),
    Failed(Error),
}
use Failure::{Failed, Usage};

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failed(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> std::result::Result<&'a Path, Failure> {
    p.as_deref().ok_or_else(|| Usage(format!("--{flag} is required")))
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.surgery.seed = seed;
    }
    Ok(cfg)
}

/// `(train, test)` for a network input width: XOR is generated, anything
/// with 784 inputs reads MNIST.
fn load_data(c: &Common, cfg: &ExperimentConfig, inputs: usize) -> Result<(Dataset, Dataset)> {
    match inputs {
        2 => {
            let data = gen_xor(cfg.xor_samples, cfg.xor_noise, cfg.surgery.seed)?;
            Ok(data.split_at(cfg.xor_samples / 2))
        }
        784 => {
            let dir = c.data_dir.clone().unwrap_or_else(|| PathBuf::from("data/mnist"));
            load_mnist_dir(dir)
        }
        n => Err(Error::Config(format!("no dataset for a network with {n} inputs"))),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn log_csv(log: &[LogRecord], with_kept: bool) -> String {
    let mut out = String::from(if with_kept { "iter,loss,lr,kept_fraction\n" } else { "iter,loss,lr\n" });
    for r in log {
        if with_kept {
            let _ = writeln!(out, "{},{:.6},{:.6e},{:.6}", r.iter, r.loss, r.lr, r.kept_fraction);
        } else {
            let _ = writeln!(out, "{},{:.6},{:.6e}", r.iter, r.loss, r.lr);
        }
    }
    out
}

fn test_error(net: &Network, test: &Dataset) -> Result<f64> {
    Ok(evaluate(net, &test.features, &test.labels, 1000)?.error)
}

fn cmd_train_reference(c: &Common) -> CmdResult {
    let out = required(&c.out, "out")?;
    let cfg = load_config(c)?;
    let arch = cfg.arch.ok_or_else(|| Error::Config("config must set arch".into()))?;
    let (train, test) = load_data(c, &cfg, arch.input().len())?;
    let initial = init_network(arch.architecture(), cfg.surgery.seed);
    let trained = train_reference(&initial, &train, &cfg.reference_config())?;
    write_file(out, &save_dense(&trained.network))?;
    write_file(with_suffix(out, ".log.csv"), log_csv(&trained.log, false).as_bytes())?;
    println!("test_error={:.4}", test_error(&trained.network, &test)?);
    Ok(())
}

fn cmd_surgery(c: &Common) -> CmdResult {
    let input = required(&c.input, "in")?;
    let out = required(&c.out, "out")?;
    let cfg = load_config(c)?;
    let reference = read_model_file(input)?;
    let (train, test) = load_data(c, &cfg, reference.architecture().input().len())?;
    let result = run_surgery(&reference, &train, &cfg.surgery)?;
    write_file(out, &save_dense(&result.network))?;
    write_file(out.with_extension("dnss"), &export_sparse(&result.network).to_bytes())?;
    write_file(with_suffix(out, ".report.csv"), result.report.to_csv().as_bytes())?;
    write_file(with_suffix(out, ".log.csv"), log_csv(&result.log, true).as_bytes())?;
    println!("{}", result.report);
    println!("test_error={:.4}", test_error(&result.network, &test)?);
    Ok(())
}

fn cmd_eval(c: &Common) -> CmdResult {
    let input = required(&c.input, "in")?;
    let cfg = load_config(c)?;
    let net = read_model_file(input)?;
    let (_, test) = load_data(c, &cfg, net.architecture().input().len())?;
    println!("top1_error={:.4}", test_error(&net, &test)?);
    Ok(())
}

fn cmd_report(c: &Common) -> CmdResult {
    let input = required(&c.input, "in")?;
    let report = compression_report(&read_model_file(input)?);
    println!("{report}");
    if let Some(out) = &c.out {
        write_file(out, report.to_csv().as_bytes())?;
    }
    Ok(())
}

fn matrix_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn write_matrices(dir: &Path, net: &Network, tag: &str) -> Result<()> {
    for (name, p) in net.learnable_names().iter().zip(&net.params) {
        write_file(dir.join(format!("{name}_W_{tag}.csv")), matrix_csv(&p.w).as_bytes())?;
        write_file(dir.join(format!("{name}_T_{tag}.csv")), matrix_csv(&p.t).as_bytes())?;
    }
    Ok(())
}

fn cmd_xor_demo(c: &Common) -> CmdResult {
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("xor-demo"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut cfg = load_config(c)?;
    if c.config.is_none() {
        cfg = ExperimentConfig::parse(include_str!("../../../configs/xor.cfg"))?;
        if let Some(seed) = c.seed {
            cfg.surgery.seed = seed;
        }
    }
    let (train, test) = load_data(c, &cfg, 2)?;
    let initial = init_network(Arch::Xor251.architecture(), cfg.surgery.seed);
    let reference = train_reference(&initial, &train, &cfg.reference_config())?;
    println!("reference test_error={:.4}", test_error(&reference.network, &test)?);
    write_file(dir.join("reference.dnsd"), &save_dense(&reference.network))?;
    write_file(dir.join("reference.log.csv"), log_csv(&reference.log, false).as_bytes())?;
    write_matrices(&dir, &reference.network, "before")?;

    let result = run_surgery(&reference.network, &train, &cfg.surgery)?;
    write_file(dir.join("pruned.dnsd"), &save_dense(&result.network))?;
    write_file(dir.join("pruned.dnss"), &export_sparse(&result.network).to_bytes())?;
    write_file(dir.join("pruned.report.csv"), result.report.to_csv().as_bytes())?;
    write_file(dir.join("pruned.log.csv"), log_csv(&result.log, true).as_bytes())?;
    write_matrices(&dir, &result.network, "after")?;
    println!("{}", result.report);
    println!("pruned={} of {}", result.report.pruned(), result.report.total());
    println!("test_error={:.4}", test_error(&result.network, &test)?);
    Ok(())
}
