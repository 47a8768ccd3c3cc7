use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pitchpose_core::config::PipelineConfig;
use pitchpose_core::eval::{aggregate_importance, EvaluationReport};
use pitchpose_core::features::{feature_names, uniform_feature_names};
use pitchpose_core::io::{read_pose_jsonl, write_pose_jsonl, DetectionRecord, FeatureTable, Rejected};
use pitchpose_core::pipeline::{
    evaluate_model, extract, extract_uniform, make_split, top_features, train_model, Extraction, SplitAssignment,
    TOP_FEATURES,
};
use pitchpose_core::pose::{PitchType, PoseSequence};
use pitchpose_core::synth::{generate_dataset, SynthConfig, TruthManifest};
use pitchpose_gbdt::{GbdtModel, TrainingLog};
use serde::Serialize;
use serde_json::json;

const LOG_FORMAT_VERSION: u32 = 1;
const SCHEMA_FORMAT_VERSION: u32 = 1;

/// Pitch-type classification from 3D pose sequences.
#[derive(Parser)]
#[command(name = "pitchpose", version)]
struct Cli {
    /// Pipeline config file (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print feature names.
    Schema {
        /// Names for k evenly spaced frames instead of the event features.
        #[arg(long)]
        uniform: Option<usize>,
    },
    /// Generate a synthetic pose dataset with ground truth.
    Synth(SynthArgs),
    /// Infer handedness and detect FP/MER/REL for each episode.
    Detect {
        #[arg(long)]
        input: PathBuf,
        /// Output JSONL; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the feature CSV from pose JSONL.
    Extract {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sample k evenly spaced frames instead of the detected events.
        #[arg(long)]
        uniform: Option<usize>,
    },
    /// Stratified train/test split of a feature CSV.
    Split {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on the training side of a split.
    Train {
        #[arg(long)]
        features: PathBuf,
        /// Split file; computed from the config when omitted.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        /// Per-round training loss (JSON).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score a model on the test side of a split.
    Eval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the text rendering here.
        #[arg(long)]
        text: Option<PathBuf>,
    },
    /// Aggregate a model's gain importance by category, joint, region and event.
    Importance {
        #[arg(long)]
        model: PathBuf,
        /// Share of right-handed pitchers used to split side-relative
        /// metrics between left and right joints.
        #[arg(long)]
        rhp_share: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// detect, extract, split, train and eval in one run.
    Pipeline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    signature_scale: Option<f64>,
    /// Two classes sharing one signature, e.g. FF,FT.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    twin: Option<Vec<PitchType>>,
    /// Fraction of right-handed pitchers.
    #[arg(long)]
    rhp_share: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth manifest (JSON).
    #[arg(long)]
    truth: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let diag = json!({
                "status": "error",
                "error": e.to_string(),
                "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            eprintln!("{diag}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_features(path: &Path) -> Result<FeatureTable> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    FeatureTable::read_csv(BufReader::new(f)).with_context(|| format!("reading features {}", path.display()))
}

fn load_model(path: &Path) -> Result<GbdtModel> {
    GbdtModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

/// Parsed pose file: usable sequences, rejected lines, and the input order
/// of both (`None` is the next sequence, `Some(i)` is `rejected[i]`).
struct PoseInput {
    seqs: Vec<PoseSequence>,
    rejected: Vec<Rejected>,
    order: Vec<Option<usize>>,
}

fn read_poses(path: &Path) -> Result<PoseInput> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut input = PoseInput {
        seqs: Vec::new(),
        rejected: Vec::new(),
        order: Vec::new(),
    };
    for line in read_pose_jsonl(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))? {
        match line {
            Ok(s) => {
                input.seqs.push(s);
                input.order.push(None);
            }
            Err(r) => {
                input.order.push(Some(input.rejected.len()));
                input.rejected.push(r);
            }
        }
    }
    Ok(input)
}

/// Batch summary on stderr: counts plus one entry per rejected line.
fn report_batch(stage: &str, cfg: &PipelineConfig, rejected: &[Rejected], ex: &Extraction) {
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    for r in rejected {
        *counts.entry(r.reason.clone()).or_default() += 1;
    }
    for (reason, n) in ex.failure_counts() {
        *counts.entry(reason).or_default() += n;
    }
    let skipped: usize = counts.values().sum();
    let errors: Vec<_> = rejected
        .iter()
        .map(|r| json!({"line": r.line, "episode_id": r.episode_id, "reason": r.reason, "message": r.message}))
        .collect();
    let summary = json!({
        "status": "ok",
        "stage": stage,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "kept": ex.table.len(),
        "skipped": skipped,
        "skipped_by_reason": counts,
        "rejected_lines": errors,
    });
    eprintln!("{summary}");
}

/// One detection line per input line, in input order.
fn write_detections(w: &mut dyn Write, input: &PoseInput, ex: &Extraction) -> Result<()> {
    let mut detections = ex.detections.iter();
    for slot in &input.order {
        let rec = match slot {
            None => detections.next().context("detection count mismatch")?.clone(),
            Some(i) => {
                let r = &input.rejected[*i];
                let id = r.episode_id.clone().unwrap_or_else(|| format!("line:{}", r.line));
                DetectionRecord::skipped(&id, &r.reason, &r.message)
            }
        };
        serde_json::to_writer(&mut *w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct LogFile<'a> {
    format_version: u32,
    config_hash: String,
    seed: u64,
    initial_loss: f64,
    round_loss: &'a [f64],
}

fn write_log(path: &Path, cfg: &PipelineConfig, log: &TrainingLog) -> Result<()> {
    write_json(
        path,
        &LogFile {
            format_version: LOG_FORMAT_VERSION,
            config_hash: cfg.hash(),
            seed: cfg.seed,
            initial_loss: log.initial_loss,
            round_loss: &log.round_loss,
        },
    )
}

fn write_report(json_path: &Path, text_path: Option<&Path>, report: &EvaluationReport) -> Result<()> {
    write_json(json_path, report)?;
    if let Some(p) = text_path {
        fs::write(p, report.render_text()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Schema { uniform } => {
            let names = match uniform {
                Some(k) => uniform_feature_names(k),
                None => feature_names().to_vec(),
            };
            let out = json!({
                "format_version": SCHEMA_FORMAT_VERSION,
                "config_hash": cfg.hash(),
                "seed": cfg.seed,
                "n_features": names.len(),
                "names": names,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Synth(a) => {
            let mut sc = SynthConfig {
                n_episodes: a.n,
                seed: cfg.seed,
                ..SynthConfig::default()
            };
            if let Some(v) = a.noise {
                sc.noise_std = v;
            }
            if let Some(v) = a.signature_scale {
                sc.signature_scale = v;
            }
            if let Some(v) = a.rhp_share {
                sc.handedness_ratio = v;
            }
            if let Some(t) = a.twin {
                sc.twin_classes = Some([t[0], t[1]]);
            }
            let eps = generate_dataset(&sc).context("generating synthetic dataset")?;
            let mut w = create(&a.out)?;
            write_pose_jsonl(&mut w, eps.iter().map(|e| &e.sequence))?;
            w.flush()?;
            if let Some(p) = &a.truth {
                write_json(p, &TruthManifest::new(&sc, &eps))?;
            }
            eprintln!("{}", json!({"status": "ok", "stage": "synth", "episodes": eps.len(), "seed": sc.seed}));
        }
        Command::Detect { input, out } => {
            let input = read_poses(&input)?;
            let ex = extract(&input.seqs, &cfg.events);
            let mut w = output(out.as_deref())?;
            write_detections(&mut *w, &input, &ex)?;
            report_batch("detect", &cfg, &input.rejected, &ex);
        }
        Command::Extract { input, out, uniform } => {
            let input = read_poses(&input)?;
            let ex = match uniform {
                Some(k) => extract_uniform(&input.seqs, k),
                None => extract(&input.seqs, &cfg.events),
            };
            let mut w = create(&out)?;
            ex.table.write_csv(&mut w)?;
            w.flush()?;
            report_batch("extract", &cfg, &input.rejected, &ex);
        }
        Command::Split { features, out } => {
            let table = read_features(&features)?;
            write_json(&out, &make_split(&table, &cfg)?)?;
        }
        Command::Train {
            features,
            split,
            model,
            log,
        } => {
            let table = read_features(&features)?;
            let split = match split {
                Some(p) => read_json::<SplitAssignment>(&p)?,
                None => make_split(&table, &cfg)?,
            };
            let (m, training_log) = train_model(&table, &split, &cfg)?;
            m.save(&model).with_context(|| format!("writing model {}", model.display()))?;
            if let Some(p) = log {
                write_log(&p, &cfg, &training_log)?;
            }
        }
        Command::Eval {
            features,
            split,
            model,
            out,
            text,
        } => {
            let table = read_features(&features)?;
            let split: SplitAssignment = read_json(&split)?;
            let m = load_model(&model)?;
            let report = evaluate_model(&m, &table, &split, &cfg)?;
            write_report(&out, text.as_deref(), &report)?;
        }
        Command::Importance { model, rhp_share, out } => {
            let m = load_model(&model)?;
            let mut table = cfg.attribution.clone();
            if let Some(r) = rhp_share {
                if !(0.0..=1.0).contains(&r) {
                    bail!("--rhp-share must be in [0, 1], got {r}");
                }
                table.rhp_share = r;
            }
            let imp = m.gain_importance()?;
            let agg = aggregate_importance(&imp, m.feature_names(), &table)?;
            let value = json!({
                "format_version": 1,
                "config_hash": cfg.hash(),
                "seed": cfg.seed,
                "model_metadata": m.metadata(),
                "importance": agg,
                "top_features": top_features(&imp, m.feature_names(), TOP_FEATURES),
            });
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &value)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Command::Pipeline { input, out_dir } => {
            fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            cfg.save(&out_dir.join("config.toml"))?;
            let input = read_poses(&input)?;
            let ex = extract(&input.seqs, &cfg.events);
            write_detections(&mut create(&out_dir.join("detections.jsonl"))?, &input, &ex)?;
            let mut w = create(&out_dir.join("features.csv"))?;
            ex.table.write_csv(&mut w)?;
            w.flush()?;
            report_batch("pipeline", &cfg, &input.rejected, &ex);
            let split = make_split(&ex.table, &cfg)?;
            write_json(&out_dir.join("split.json"), &split)?;
            let (m, log) = train_model(&ex.table, &split, &cfg)?;
            m.save(out_dir.join("model.json"))?;
            write_log(&out_dir.join("training_log.json"), &cfg, &log)?;
            let report = evaluate_model(&m, &ex.table, &split, &cfg)?;
            write_report(
                &out_dir.join("report.json"),
                Some(&out_dir.join("report.txt")),
                &report,
            )?;
        }
    }
    Ok(())
}
