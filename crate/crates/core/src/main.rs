//! `vdt` — virtual drive-test pipeline CLI.
//!
//! Stages: `generate` or `ingest` to produce the dataset, then `features`,
//! `train-pattern`, `train-predictor`, `detect`, `explain`, and `report`.
//! Every stage checks the run manifest before it runs, so deleting or
//! changing an upstream artifact (or the config) makes downstream stages
//! refuse with a "missing artifact" error instead of computing on stale
//! data.
//!
//! Exit codes: 0 success, 2 usage (from argument parsing), 3 I/O,
//! 4 validation, 5 training divergence, 6 missing/stale artifact.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vdt_core::pipeline::{self, RunConfig};
use vdt_core::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "vdt", version, about = "Virtual drive-test QoE pipeline")]
struct Cli {
    /// Key-value run configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the root seed (stage seeds re-derive unless set in the file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a calibrated dataset and start a new run.
    Generate,
    /// Validate an external session CSV and install it as the run dataset.
    Ingest {
        /// Input CSV with header `session_id,t,rsrp,rsrq,snr,prb,mos`.
        #[arg(long)]
        input: PathBuf,
    },
    /// Build feature rows and the correlation matrix.
    Features,
    /// Train the autoencoder and extract the typical MOS pattern.
    TrainPattern,
    /// Evaluate the regressors and fit the detection forest.
    TrainPredictor,
    /// Flag anomalous sessions and sweep detection thresholds.
    Detect,
    /// Attributions, distilled decision paths, and root-cause curves.
    Explain,
    /// Assemble the final summary report.
    Report,
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let body =
                std::fs::read_to_string(path).map_err(|e| Error::io(path.clone(), e))?;
            match cli.seed {
                // the override must come first so stage seeds re-derive from
                // it; explicit per-stage seeds in the file still win
                Some(seed) => {
                    let mut amended = format!("seed = {seed}\n");
                    for line in body.lines() {
                        let key = line.split('#').next().unwrap_or("").trim();
                        if key.starts_with("seed") && key["seed".len()..].trim_start().starts_with('=') {
                            continue;
                        }
                        amended.push_str(line);
                        amended.push('\n');
                    }
                    RunConfig::parse_str(&amended)?
                }
                None => RunConfig::parse_str(&body)?,
            }
        }
        None => RunConfig::from_seed(cli.seed.unwrap_or(7), PathBuf::from("out")),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Generate => {
            let summary = pipeline::cmd_generate(&cfg)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "generated {} sessions ({} anomalous) -> {}",
                summary.n_sessions,
                summary.n_anomalous,
                cfg.out_dir.join(pipeline::DATASET_FILE).display()
            );
        }
        Command::Ingest { input } => {
            let summary = pipeline::cmd_ingest(&cfg, input)?;
            println!(
                "ingested {} rows: {} accepted, {} rejected; {} sessions ({} model-eligible)",
                summary.total_rows,
                summary.accepted_rows,
                summary.rejected_rows,
                summary.n_sessions,
                summary.n_model_eligible
            );
        }
        Command::Features => {
            let summary = pipeline::cmd_features(&cfg)?;
            println!(
                "built {} feature rows from {} eligible sessions ({} dropped)",
                summary.n_rows, summary.n_model_eligible, summary.dropped_rows
            );
        }
        Command::TrainPattern => {
            let summary = pipeline::cmd_train_pattern(&cfg)?;
            println!(
                "trained pattern model on {} sequences (epochs {}, batch {}, lr {}, dropout {}); val MSE {:.6}",
                summary.n_sequences,
                summary.chosen_epochs,
                summary.chosen_batch_size,
                summary.chosen_learning_rate,
                summary.chosen_dropout,
                summary.final_val_mse
            );
        }
        Command::TrainPredictor => {
            let summary = pipeline::cmd_train_predictor(&cfg)?;
            println!(
                "predictor trials done: R2 forest {:.4} / boosted {:.4}; MSE-per-session forest {:.4}, boosted {:.4}, tree {:.4}, sess-time tree {:.4}",
                summary.forest_r2_mean,
                summary.boost_r2_mean,
                summary.forest_mse_per_session,
                summary.boost_mse_per_session,
                summary.tree_mse_per_session,
                summary.sess_time_tree_mse_per_session
            );
        }
        Command::Detect => {
            let summary = pipeline::cmd_detect(&cfg)?;
            let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or("n/a".into());
            println!(
                "detection over {} sessions: threshold {:.4}, precision {}, recall {}, F1 {}, max-F1 {:.4}{}",
                summary.n_scored,
                summary.threshold,
                fmt_opt(summary.precision),
                fmt_opt(summary.recall),
                fmt_opt(summary.f1),
                summary.max_f1,
                summary
                    .mean_max_f1_over_trials
                    .map(|m| format!(", mean max-F1 over trials {m:.4}"))
                    .unwrap_or_default()
            );
        }
        Command::Explain => {
            let summary = pipeline::cmd_explain(&cfg)?;
            println!(
                "explained {} rows: top feature `{}` ({:.4}); distilled tree depth {} with student-teacher R2 {:.4}",
                summary.n_attributed_rows,
                summary.top_feature,
                summary.top_importance,
                summary.distilled_depth,
                summary.student_teacher_r2
            );
        }
        Command::Report => {
            let path = pipeline::cmd_report(&cfg)?;
            println!("report written to {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err.class() {
                ErrorClass::Io => 3,
                ErrorClass::Validation => 4,
                ErrorClass::Divergence => 5,
                ErrorClass::MissingArtifact => 6,
            };
            ExitCode::from(code)
        }
    }
}
