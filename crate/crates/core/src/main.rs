use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use srlmad::checkpoint::Checkpoint;
use srlmad::harness::{det_csv, run_synthetic, score_manifest, synthesize, SynthConfig};
use srlmad::rings::write_rings;
use srlmad::scoring::{read_scores_csv, write_scores_csv};
use srlmad::spectrum::write_residual;
use srlmad::trainer::{train, TrainConfig};
use srlmad::{load_image, load_manifest, Error, FeatureExtractor, Result, ScoreReport, Split};

#[derive(Parser)]
#[command(name = "srlmad", version, about = "Spectral ring one-class morphing attack detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Write an image's residual map (and optionally its ring tensor).
    Extract {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rings: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        num_rings: usize,
    },
    /// Train on the bona fide train split of a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Training log CSV; defaults to `<out>.log.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score manifest entries with a checkpoint.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Compute EER and BPCER@APCER from a scores CSV.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        /// key=value report; defaults to `report.txt` beside the scores.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Optional DET points CSV.
        #[arg(long)]
        det: Option<PathBuf>,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize, train, score and evaluate.
    Run {
        #[arg(long)]
        synth_config: Option<PathBuf>,
        #[arg(long)]
        train_config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn train_config(path: Option<&Path>) -> Result<TrainConfig> {
    path.map_or_else(|| Ok(TrainConfig::default()), TrainConfig::load)
}

fn synth_config(path: Option<&Path>) -> Result<SynthConfig> {
    path.map_or_else(|| Ok(SynthConfig::default()), SynthConfig::load)
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Extract {
            image,
            out,
            rings,
            num_rings,
        } => {
            let img = load_image(&image)?;
            let extractor = FeatureExtractor::with_size(img.height(), img.width(), num_rings)?;
            let residual = extractor.residual(&img)?;
            write_residual(create(&out)?, &residual)?;
            if let Some(path) = rings {
                let tensor = srlmad::rings::extract_rings(&residual, extractor.geometry())?;
                write_rings(create(&path)?, &tensor)?;
            }
        }
        Command::Train {
            manifest,
            config,
            out,
            log,
        } => {
            let cfg = train_config(config.as_deref())?;
            let trained = train(&load_manifest(&manifest)?, &cfg)?;
            trained.checkpoint.save(&out)?;
            let log = log.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".log.csv");
                p.into()
            });
            write(&log, &trained.state.history_csv())?;
        }
        Command::Score {
            checkpoint,
            manifest,
            out,
            split,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let m = load_manifest(&manifest)?;
            let split = match split {
                SplitArg::Train => Some(Split::Train),
                SplitArg::Val => Some(Split::Val),
                SplitArg::Test => Some(Split::Test),
                SplitArg::All => None,
            };
            let samples = score_manifest(&ck, &m, split, manifest.parent())?;
            write_scores_csv(create(&out)?, &samples)?;
        }
        Command::Eval { scores, report, det } => {
            let file = fs::File::open(&scores).map_err(|e| Error::io(&scores, e))?;
            let rep = ScoreReport::from_samples(read_scores_csv(file)?)?;
            print!("{}", rep.summary());
            let report = report.unwrap_or_else(|| scores.with_file_name("report.txt"));
            write(&report, &rep.report_text())?;
            if let Some(det) = det {
                write(&det, &det_csv(&rep)?)?;
            }
        }
        Command::Synth { config, out } => {
            let manifest = synthesize(&synth_config(config.as_deref())?, &out)?;
            println!("wrote {} entries to {}", manifest.len(), out.join("manifest.tsv").display());
        }
        Command::Run {
            synth_config: sc,
            train_config: tc,
            out,
        } => {
            let report = run_synthetic(&synth_config(sc.as_deref())?, &train_config(tc.as_deref())?, &out)?;
            print!("{}", report.summary());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
