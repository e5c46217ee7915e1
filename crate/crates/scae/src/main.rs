use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scae::config::{Dataset, RunConfig};
use scae::trainer::{self, Trainer};
use scae::{checkpoint, data, Error};

#[derive(Parser)]
#[command(
    name = "scae",
    about = "Capsule autoencoders for point constellations and images: training, evaluation, and presence-vector export",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for metrics and checkpoints.
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint and print metric values.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// constellation | mnist | mnist40
        #[arg(long)]
        dataset: String,
        /// Comma-separated: nll, segmentation_error, lin_match, lin_pred
        #[arg(long)]
        metrics: String,
        /// Optional IDX image file overriding the checkpoint's path.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Optional IDX label file overriding the checkpoint's path.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Generate constellation point sets as line-delimited JSON.
    GenConstellations {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write object-capsule presence vectors (for external embedding).
    DumpPresences {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    /// Bad invocation or unusable inputs: exit 1.
    Usage(String),
    /// Failure while running: exit 2.
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help/version requests are successes; everything else is a
            // usage error on stderr.
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                return ExitCode::SUCCESS;
            }
            eprint!("{err}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut cfg = RunConfig::from_file(&config)
                .map_err(|e| CliError::Usage(format!("cannot load config {config:?}: {e}")))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let mut trainer = Trainer::new(cfg).map_err(CliError::Runtime)?;
            let outcome = trainer.run(&out)?;
            println!(
                "finished at step {}; metrics: {}; checkpoint: {}",
                outcome.final_step,
                outcome.metrics_path.display(),
                outcome.checkpoint_path.display()
            );
            Ok(())
        }
        Command::Eval { checkpoint: ckpt_path, dataset, metrics, images, labels } => {
            let ckpt = checkpoint::load(&ckpt_path)
                .map_err(|e| CliError::Usage(format!("cannot load checkpoint {ckpt_path:?}: {e}")))?;
            let mut cfg = ckpt.config.clone();
            cfg.dataset = match dataset.as_str() {
                "constellation" => Dataset::Constellation,
                "mnist" => Dataset::Mnist,
                "mnist40" => Dataset::Mnist40,
                other => return Err(CliError::Usage(format!("unknown dataset `{other}`"))),
            };
            if let Some(p) = images {
                cfg.mnist_images = p.display().to_string();
            }
            if let Some(p) = labels {
                cfg.mnist_labels = p.display().to_string();
            }
            cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let wanted: Vec<&str> = metrics.split(',').map(str::trim).collect();
            for m in &wanted {
                if !["nll", "segmentation_error", "lin_match", "lin_pred"].contains(m) {
                    return Err(CliError::Usage(format!("unknown metric `{m}`")));
                }
            }
            let mut params = scae::ParamStore::new();
            for (name, shape, data) in &ckpt.params {
                params
                    .insert(name, shape.clone(), data.clone())
                    .map_err(|e| CliError::Runtime(e.into()))?;
            }
            let mut init_rng = <scae::Rng as rand::SeedableRng>::seed_from_u64(cfg.seed);
            let mut scratch = scae::ParamStore::new();
            let model = trainer::build_model(&cfg, &mut scratch, &mut init_rng)?;
            let with_lin = wanted.contains(&"lin_match") || wanted.contains(&"lin_pred");
            let row = trainer::evaluate_model(&cfg, &params, &model, cfg.eval_examples, with_lin)?;
            let mut stdout = std::io::stdout().lock();
            for m in wanted {
                let value = match m {
                    "nll" => {
                        if let Some(v) = row.image_nll {
                            writeln!(stdout, "image_nll,{v}").ok();
                        }
                        row.part_nll.map(|v| ("part_nll", v))
                    }
                    "segmentation_error" => row.segmentation_error.map(|v| ("segmentation_error", v)),
                    "lin_match" => row.lin_match.map(|v| ("lin_match", v)),
                    "lin_pred" => row.lin_pred.map(|v| ("lin_pred", v)),
                    _ => unreachable!(),
                };
                match value {
                    Some((name, v)) => {
                        writeln!(stdout, "{name},{v}").ok();
                    }
                    None => {
                        return Err(CliError::Usage(format!(
                            "metric `{m}` is not defined for this model/dataset"
                        )))
                    }
                }
            }
            Ok(())
        }
        Command::GenConstellations { count, seed, out } => {
            let mut rng = data::seeded_rng(seed);
            let spec = data::ConstellationSpec::default();
            let sets = data::generate_constellations(&mut rng, &spec, count);
            let mut body = String::new();
            for ps in &sets {
                body.push_str(&serde_json::to_string(ps).expect("point sets serialize"));
                body.push('\n');
            }
            std::fs::write(&out, body).map_err(|e| CliError::Runtime(Error::io(&out, e)))?;
            println!("wrote {count} examples to {}", out.display());
            Ok(())
        }
        Command::DumpPresences { checkpoint: ckpt_path, out } => {
            let ckpt = checkpoint::load(&ckpt_path)
                .map_err(|e| CliError::Usage(format!("cannot load checkpoint {ckpt_path:?}: {e}")))?;
            let cfg = ckpt.config.clone();
            let mut params = scae::ParamStore::new();
            for (name, shape, data) in &ckpt.params {
                params
                    .insert(name, shape.clone(), data.clone())
                    .map_err(|e| CliError::Runtime(e.into()))?;
            }
            let mut init_rng = <scae::Rng as rand::SeedableRng>::seed_from_u64(cfg.seed);
            let mut scratch = scae::ParamStore::new();
            let model = trainer::build_model(&cfg, &mut scratch, &mut init_rng)?;
            let pm = trainer::dump_presences(&cfg, &params, &model)?;
            let mut body = String::new();
            body.push_str("label");
            for k in 0..pm.num_features {
                body.push_str(&format!(",a{k}"));
            }
            body.push('\n');
            for i in 0..pm.len() {
                body.push_str(&format!("{}", pm.labels[i]));
                for k in 0..pm.num_features {
                    body.push_str(&format!(",{}", pm.presences[i * pm.num_features + k]));
                }
                body.push('\n');
            }
            std::fs::write(&out, body).map_err(|e| CliError::Runtime(Error::io(&out, e)))?;
            println!("wrote {} presence vectors to {}", pm.len(), out.display());
            Ok(())
        }
    }
}
