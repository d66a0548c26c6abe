//! `tsforge`: fit, predict, benchmark and generate synthetic data.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use tsforge::engine::{self, RunConfig};
use tsforge::frame::{self, TimeSeriesFrame};
use tsforge::metrics::rank_scores;
use tsforge::par;
use tsforge::synth;
use tsforge::tdaub::{ProgressEvent, ProgressSink};
use tsforge::Pipeline;

/// Header names treated as a time column when `--timestamp-col` is not given.
const TIME_HEADERS: [&str; 7] = ["timestamp", "time", "date", "datetime", "month", "ds", "t"];

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] tsforge::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Parser, Debug)]
#[command(name = "tsforge", version, about = "Zero-configuration time-series forecasting")]
struct Cli {
    /// Worker threads for training (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select and train the best pipeline for a CSV file.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Output directory for model.json, report.json, report.csv and progress.log.
        #[arg(long, default_value = "tsforge-out")]
        out: PathBuf,
    },
    /// Forecast with a persisted model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Steps to forecast (default: the horizon the model was trained for).
        #[arg(long)]
        horizon: Option<usize>,
        /// Output CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score every pipeline on every CSV in a directory.
    Bench {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "tsforge-bench")]
        out: PathBuf,
    },
    /// Write the 21-series synthetic corpus as CSV files.
    Synth {
        #[arg(long, default_value = "tsforge-synth")]
        out: PathBuf,
        #[arg(long, env = "TSFORGE_SEED", default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    #[arg(long)]
    timestamp_col: Option<String>,
    #[arg(long, default_value_t = 12)]
    horizon: usize,
    /// Share of rows held back for the final holdout score.
    #[arg(long, default_value_t = 0.2)]
    holdout: f64,
    #[arg(long)]
    max_look_back: Option<usize>,
    /// Use this look-back and skip discovery.
    #[arg(long)]
    lookback: Option<usize>,
    #[arg(long)]
    min_allocation: Option<usize>,
    #[arg(long)]
    allocation: Option<usize>,
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    geo: Option<f64>,
    #[arg(long)]
    run_to_completion: Option<usize>,
    #[arg(long, env = "TSFORGE_SEED", default_value_t = 0)]
    seed: u64,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            horizon: self.horizon,
            holdout: self.holdout,
            max_look_back: self.max_look_back,
            lookback: self.lookback,
            min_allocation: self.min_allocation,
            allocation: self.allocation,
            cutoff: self.cutoff,
            geo: self.geo,
            run_to_completion: self.run_to_completion,
            seed: self.seed,
            ..RunConfig::default()
        }
    }
}

/// Writes one line per training round to the progress log.
struct FileProgress {
    out: Mutex<BufWriter<File>>,
}

impl ProgressSink for FileProgress {
    fn event(&self, e: &ProgressEvent) {
        let line = format!(
            "{:>10.3}s {:?} {} rows={} smape={:.6}{}",
            e.elapsed.as_secs_f64(),
            e.phase,
            e.pipeline,
            e.rows,
            e.smape,
            if e.failed { " FAILED" } else { "" }
        );
        log::debug!("{line}");
        if let Ok(mut w) = self.out.lock() {
            let _ = writeln!(w, "{line}");
        }
    }
}

fn load(path: &Path, timestamp_col: Option<&str>) -> CliResult<TimeSeriesFrame> {
    if let Some(col) = timestamp_col {
        return Ok(frame::load_csv(path, Some(col))?);
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        .clone();
    let time = headers
        .iter()
        .find(|h| TIME_HEADERS.contains(&h.trim().to_ascii_lowercase().as_str()));
    Ok(frame::load_csv(path, time)?)
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn cmd_fit(input: &Path, run: &RunArgs, out: &Path) -> CliResult<()> {
    let frame = load(input, run.timestamp_col.as_deref())?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let log_path = out.join("progress.log");
    let sink = FileProgress {
        out: Mutex::new(BufWriter::new(File::create(&log_path).map_err(io_err(&log_path))?)),
    };
    let started = Instant::now();
    let outcome = engine::fit(&frame, &run.config(), &sink)?;
    sink.out
        .into_inner()
        .map_err(|_| CliError::Usage("progress log lock poisoned".into()))?
        .flush()
        .map_err(io_err(&log_path))?;

    write_file(&out.join("model.json"), &outcome.model.to_json()?)?;
    write_file(&out.join("report.json"), &outcome.report.to_json()?)?;
    let csv_path = out.join("report.csv");
    outcome
        .report
        .write_csv(File::create(&csv_path).map_err(io_err(&csv_path))?)?;

    let w = outcome.report.pipeline(&outcome.report.winner);
    println!(
        "winner {} (holdout smape {}, zero model {}) in {:.2}s; artifacts in {}",
        outcome.report.winner,
        w.and_then(|p| p.smape).map_or("n/a".into(), |s| format!("{s:.4}")),
        outcome.report.zero_model_smape.map_or("n/a".into(), |s| format!("{s:.4}")),
        started.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

fn cmd_predict(model: &Path, horizon: Option<usize>, out: Option<&Path>) -> CliResult<()> {
    let text = fs::read_to_string(model).map_err(io_err(model))?;
    let pipeline = Pipeline::from_json(&text)?;
    let h = horizon.unwrap_or(pipeline.horizon());
    if h == 0 {
        return Err(CliError::Usage("horizon must be at least 1".into()));
    }
    if h > pipeline.horizon() {
        log::warn!(
            "{} was trained for {} steps; steps beyond that are extended recursively",
            pipeline.name,
            pipeline.horizon()
        );
    }
    let forecast = pipeline.predict(h)?;
    let names: Vec<String> = (0..forecast.ncols()).map(|j| format!("y{j}")).collect();
    let columns: Vec<Vec<f64>> = forecast.column_iter().map(|c| c.iter().copied().collect()).collect();
    let frame = TimeSeriesFrame::new(columns, names)?;
    match out {
        Some(path) => frame::write_csv(&frame, File::create(path).map_err(io_err(path))?)?,
        None => frame::write_csv(&frame, std::io::stdout().lock())?,
    }
    Ok(())
}

fn csv_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!("no CSV files in {}", dir.display())));
    }
    Ok(files)
}

fn cmd_bench(input: &Path, run: &RunArgs, out: &Path) -> CliResult<()> {
    let files = csv_files(input)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let cfg = run.config();
    let rows_path = out.join("bench.csv");
    let mut rows = csv::Writer::from_path(&rows_path).map_err(|e| CliError::Usage(format!("{}: {e}", rows_path.display())))?;
    let csv_err = |e: csv::Error| CliError::Usage(format!("{}: {e}", rows_path.display()));
    rows.write_record(["dataset", "pipeline", "smape", "rank", "selected", "selection_seconds"])
        .map_err(csv_err)?;

    // pipeline -> ranks over the datasets it ran on
    let mut ranks: Vec<(String, Vec<usize>)> = Vec::new();
    let mut done = 0usize;
    for path in &files {
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let result = load(path, run.timestamp_col.as_deref()).and_then(|f| {
            let started = Instant::now();
            let outcome = engine::fit(&f, &cfg, &tsforge::tdaub::NoProgress)?;
            let secs = started.elapsed().as_secs_f64();
            let scores = engine::exhaustive_scores(&f, &cfg)?;
            Ok((outcome.report.winner, secs, scores))
        });
        let (winner, secs, scores) = match result {
            Ok(r) => r,
            Err(e) => {
                log::error!("{name}: {e}");
                eprintln!("skipping {name}: {e}");
                continue;
            }
        };
        let values: Vec<f64> = scores.iter().map(|(_, s)| *s).collect();
        let r = rank_scores(&values);
        for ((pipeline, smape), rank) in scores.iter().zip(&r) {
            rows.write_record([
                name.clone(),
                pipeline.clone(),
                smape.to_string(),
                rank.to_string(),
                (pipeline == &winner).to_string(),
                format!("{secs:.6}"),
            ])
            .map_err(csv_err)?;
            match ranks.iter_mut().find(|(p, _)| p == pipeline) {
                Some((_, v)) => v.push(*rank),
                None => ranks.push((pipeline.clone(), vec![*rank])),
            }
        }
        let best = scores.iter().map(|(_, s)| *s).fold(f64::INFINITY, f64::min);
        let chosen = scores.iter().find(|(p, _)| p == &winner).map_or(f64::NAN, |(_, s)| *s);
        println!("{name}: selected {winner} smape {chosen:.4} (best {best:.4}) in {secs:.2}s");
        done += 1;
    }
    rows.flush().map_err(io_err(&rows_path))?;
    if done == 0 {
        return Err(CliError::Usage("every dataset failed".into()));
    }

    let summary_path = out.join("summary.csv");
    let mut summary = csv::Writer::from_path(&summary_path).map_err(|e| CliError::Usage(format!("{}: {e}", summary_path.display())))?;
    let csv_err = |e: csv::Error| CliError::Usage(format!("{}: {e}", summary_path.display()));
    summary.write_record(["pipeline", "mean_rank", "datasets"]).map_err(csv_err)?;
    let mut means: Vec<(String, f64, usize)> = ranks
        .into_iter()
        .map(|(p, r)| (p, r.iter().sum::<usize>() as f64 / r.len() as f64, r.len()))
        .collect();
    means.sort_by(|a, b| a.1.total_cmp(&b.1));
    for (p, mean, n) in &means {
        summary
            .write_record([p.clone(), format!("{mean:.4}"), n.to_string()])
            .map_err(csv_err)?;
    }
    summary.flush().map_err(io_err(&summary_path))?;
    println!("{done} of {} datasets scored; results in {}", files.len(), out.display());
    Ok(())
}

fn cmd_synth(out: &Path, seed: u64) -> CliResult<()> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let corpus = synth::corpus(seed);
    for (name, spec) in &corpus {
        let f = synth::generate(spec)?;
        let path = out.join(format!("{name}.csv"));
        frame::write_csv(&f, File::create(&path).map_err(io_err(&path))?)?;
    }
    println!("wrote {} series to {}", corpus.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    par::with_jobs(cli.jobs, move || match &cli.command {
        Command::Fit { input, run, out } => cmd_fit(input, run, out),
        Command::Predict { model, horizon, out } => cmd_predict(model, *horizon, out.as_deref()),
        Command::Bench { input, run, out } => cmd_bench(input, run, out),
        Command::Synth { out, seed } => cmd_synth(out, *seed),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
