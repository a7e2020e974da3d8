use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pufe_core::completion::{self, CompletionConfig, RowCompleter};
use pufe_core::config::RunConfig;
use pufe_core::experiment::{self, Horizon, MethodKind};
use pufe_core::io;
use pufe_core::sim::{self, OverlapSetting};
use pufe_core::sketch::FrequentDirections;
use pufe_core::{Error, Result};

#[derive(Parser)]
#[command(name = "pufe", version, about = "Prediction on evolving feature streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every method across the overlap settings and write CSV reports.
    Run(RunArgs),
    /// Complete partially observed rows against the row space of a history.
    Complete(CompleteArgs),
    /// Write one trial's evolving stream and its script.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Common {
    /// Key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overlap setting: C, I or IC.
    #[arg(long)]
    setting: Option<OverlapSetting>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated methods, e.g. NOGD,PUFE.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<MethodKind>>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Trial whose script is dumped.
    #[arg(long, default_value_t = 0)]
    trial: usize,
}

#[derive(Args)]
struct CompleteArgs {
    /// Sparse rows to complete as row_id,col_id,value.
    #[arg(long)]
    observed: PathBuf,
    /// Fully observed history, one dense row per line.
    #[arg(long)]
    history: PathBuf,
    /// Row-space rank; estimated from the history when omitted.
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Rows with fewer observed entries are discarded; derived from the
    /// sample-size bound when omitted.
    #[arg(long)]
    min_entries: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(setting) = common.setting {
        cfg.settings = vec![setting];
    }
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir).map_err(Error::file(dir))?;
    Ok(BufWriter::new(File::create(dir.join(name)).map_err(Error::file(dir.join(name)))?))
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(methods) = args.methods {
        cfg.methods = methods;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    let report = experiment::run_experiment(&cfg)?;
    report.write(&args.common.out)?;
    for cell in &report.cells {
        println!(
            "{:<7} {:<3} {:.4} ± {:.4}",
            cell.method.tag(),
            cell.setting.tag(),
            cell.mean,
            cell.std
        );
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let data = experiment::load_dataset(&cfg)?;
    let h = Horizon::resolve(&cfg, &data)?;
    let seed = experiment::trial_seed(cfg.seed, args.trial);
    let script = sim::make_script(h.d1, h.d2, h.b, h.t1, h.t2, h.s_floor, seed)?.with_noise(cfg.noise);
    let setting = cfg.settings[0];
    let stream = sim::synthesize_stream(&data, &script, setting)?;
    sim::write_stream_csv(&stream[..h.t1 + h.t2], &script, create(&args.common.out, "stream.csv")?)?;
    let path = args.common.out.join("script.txt");
    std::fs::write(&path, script.to_text()).map_err(Error::file(&path))?;
    Ok(())
}

fn complete(args: CompleteArgs) -> Result<()> {
    let history = io::read_matrix(File::open(&args.history).map_err(Error::file(&args.history))?)?;
    let dim = history.ncols();
    let mut sketch = match args.rank {
        Some(r) => FrequentDirections::for_rank(r, dim)?,
        None => FrequentDirections::lossless(dim)?,
    };
    for row in history.row_iter() {
        sketch.insert(row.transpose().as_slice())?;
    }
    let rank = args.rank.unwrap_or_else(|| sketch.estimate_rank().max(1));
    let basis = sketch.row_space(rank)?;
    let rows = io::read_triplets(File::open(&args.observed).map_err(Error::file(&args.observed))?)?.into_rows(dim)?;
    let min_entries = match args.min_entries {
        Some(k) => k,
        None => {
            let mu = completion::incoherence(basis.matrix())?;
            let required = completion::required_samples(mu, rank, rows.len().max(1), args.delta)?;
            if required <= dim {
                required
            } else {
                (2 * rank).min(dim)
            }
        }
    };
    let mut completer = RowCompleter::new(basis.clone(), CompletionConfig::new(rank, args.delta, min_entries)?);
    let mut completed = Vec::new();
    for (id, obs) in &rows {
        if let Some(v) = completer.push(*id, obs)? {
            completed.push((*id, v));
        }
    }
    let report = completer.finish();
    io::write_triplets(&completed, create(&args.out, "completed.csv")?)?;
    let mut w = csv::Writer::from_writer(create(&args.out, "discarded.csv")?);
    w.write_record(["row_id"])?;
    for id in &report.discarded_row_ids {
        w.write_record([id.to_string()])?;
    }
    w.flush()?;
    io::write_matrix(basis.matrix(), create(&args.out, "basis.csv")?)?;
    println!(
        "completed {} rows, discarded {}, rank {rank}, min entries {min_entries}",
        report.kept_row_ids.len(),
        report.discarded_row_ids.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", line.trim());
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Complete(args) => complete(args),
        Command::Simulate(args) => simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}

fn one_line(e: &Error) -> String {
    e.to_string().replace('\n', " ")
}
