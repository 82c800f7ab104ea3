use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use maya::augment::{self, pack, synth, DatasetManifest, LeakageMode, Split, DEFAULT_FRACTIONS};
use maya::fer::{self, DatasetSource, FerModel};
use maya::landmark::{parse_landmark_file, write_landmark_file, EmotionLabel, LandmarkSet};
use maya::nn::checkpoint::CheckpointMeta;
use maya::nn::{train, TrainConfig};
use maya::service::{self, ApiConfig};
use maya::sessions::simulate::simulate_game;
use maya::sessions::{to_jsonl, GameConfig, LogicalClock};
use maya::stats::{self, Group, Pairing, UtautResponse, SELECTED_QUESTIONS};

#[derive(Parser)]
#[command(name = "maya", version, about = "Facial-expression recognition and robot session engine")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Global {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON config file for the subcommand (training or game settings).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model checkpoint.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, global = true, default_value_t = 8080)]
    port: u16,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic labeled landmark corpus.
    Synth {
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = synth::DEFAULT_JITTER)]
        jitter: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Build the half-face composite dataset and its split manifest.
    Augment {
        input: PathBuf,
        #[arg(long, value_parser = parse_leakage, default_value = "source-disjoint")]
        leakage: LeakageMode,
        /// Manifest path; defaults to <data-dir>/manifest.json.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Also write packed train/val/test rasters next to the manifest.
        #[arg(long)]
        pack: bool,
    },
    /// Train a checkpoint on a corpus and manifest.
    Train(TrainArgs),
    /// Confusion matrix and accuracy on one split.
    Eval {
        input: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Classify every face in a landmark file.
    Predict { input: PathBuf },
    #[command(subcommand)]
    Game(GameCmd),
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Start the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        #[arg(long)]
        gallery: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        max_sessions: usize,
    },
}

#[derive(Args)]
struct TrainArgs {
    input: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output checkpoint; defaults to --model, then <data-dir>/model.maya.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Use only the first N training samples.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Subcommand)]
enum GameCmd {
    /// Play a scripted game to the end and print its event log.
    Simulate {
        /// Seed for the scripted operator; defaults to --seed.
        #[arg(long)]
        script_seed: Option<u64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Paired t-test on pain scores (participant_id,mode,score[,order]).
    Pain {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Child/parent comparison of questionnaire responses.
    Utaut {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = PairingArg::Independent)]
        pairing: PairingArg,
        /// JSON category map overriding the default.
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum PairingArg {
    Independent,
    ByDyad,
}

fn parse_leakage(s: &str) -> Result<LeakageMode, String> {
    s.parse()
}

type Res<T> = Result<T, String>;

fn read_json<T: DeserializeOwned>(path: &Path) -> Res<T> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_corpus(path: &Path) -> Res<Vec<LandmarkSet>> {
    let f = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_landmark_file(BufReader::new(f)).map_err(|e| format!("{}: {e}", path.display()))
}

fn output(path: Option<&Path>) -> Res<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| format!("{}: {e}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn manifest_path(g: &Global, given: Option<PathBuf>) -> PathBuf {
    given.unwrap_or_else(|| g.data_dir.join("manifest.json"))
}

fn load_model(g: &Global) -> Res<FerModel> {
    let path = g.model.as_ref().ok_or("--model is required")?;
    FerModel::load(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn dataset(input: &Path) -> Res<augment::Dataset> {
    let corpus = read_corpus(input)?;
    let banks = augment::banks_from_landmarks(&corpus).map_err(|e| e.to_string())?;
    augment::build_dataset(banks).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Res<()> {
    let g = &cli.global;
    match cli.command {
        Cmd::Synth { per_class, jitter, out } => {
            let sets = synth::synth_corpus_with_jitter(per_class, g.seed, jitter);
            let mut w = output(out.as_deref())?;
            write_landmark_file(&mut w, &sets).and_then(|_| w.flush()).map_err(|e| e.to_string())
        }
        Cmd::Augment {
            input,
            leakage,
            manifest,
            pack: packed,
        } => {
            let ds = dataset(&input)?;
            let man = augment::stratified_split(&ds, DEFAULT_FRACTIONS, g.seed, leakage).map_err(|e| e.to_string())?;
            for (label, n) in &man.class_counts {
                println!("{label}: {n}");
            }
            println!("total: {}", man.total);
            let [tr, va, te] = man.sizes();
            println!("split: train {tr}, val {va}, test {te}, excluded {}", man.excluded.len());
            let path = manifest_path(g, manifest);
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            }
            fs::write(&path, man.to_json()).map_err(|e| format!("{}: {e}", path.display()))?;
            println!("manifest: {}", path.display());
            if packed {
                for (name, which) in [("train", Split::Train), ("val", Split::Val), ("test", Split::Test)] {
                    let p = path.with_file_name(format!("{name}.mayd"));
                    let f = File::create(&p).map_err(|e| format!("{}: {e}", p.display()))?;
                    pack::write_dataset(BufWriter::new(f), &ds, man.split(which)).map_err(|e| e.to_string())?;
                    println!("packed: {}", p.display());
                }
            }
            Ok(())
        }
        Cmd::Train(args) => train_cmd(g, args),
        Cmd::Eval { input, manifest, split } => {
            let model = load_model(g)?;
            let ds = dataset(&input)?;
            let man: DatasetManifest = read_json(&manifest_path(g, manifest))?;
            let which = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Val => Split::Val,
                SplitArg::Test => Split::Test,
            };
            let ev = fer::evaluate(&model, &DatasetSource(&ds), man.split(which)).map_err(|e| e.to_string())?;
            print!("{}", ev.matrix.render_text());
            println!("accuracy: {:.4}", ev.accuracy);
            Ok(())
        }
        Cmd::Predict { input } => {
            let model = load_model(g)?;
            for set in read_corpus(&input)? {
                let p = model.predict(&set).map_err(|e| format!("{}: {e}", set.subject_id))?;
                let line = serde_json::json!({
                    "subject": set.subject_id,
                    "top": p.top,
                    "probs": p.probs,
                });
                println!("{line}");
            }
            Ok(())
        }
        Cmd::Game(GameCmd::Simulate { script_seed, out }) => {
            let config = match &g.config {
                Some(p) => read_json(p)?,
                None => GameConfig {
                    seed: g.seed,
                    ..GameConfig::default()
                },
            };
            let session =
                simulate_game(config, script_seed.unwrap_or(g.seed), &LogicalClock::default()).map_err(|e| e.to_string())?;
            let mut w = output(out.as_deref())?;
            w.write_all(to_jsonl(&session.events).as_bytes())
                .and_then(|_| w.flush())
                .map_err(|e| e.to_string())
        }
        Cmd::Stats(StatsCmd::Pain { input, format }) => {
            let text = fs::read_to_string(&input).map_err(|e| format!("{}: {e}", input.display()))?;
            let records = stats::parse_pain_csv(text.as_bytes()).map_err(|e| e.to_string())?;
            let report = stats::pain_report(&records).map_err(|e| e.to_string())?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
                _ => print!("{}", report.render_text()),
            }
            match &report.error {
                Some(code) => Err(format!("{code}: the paired t-test is undefined for these scores")),
                None => Ok(()),
            }
        }
        Cmd::Stats(StatsCmd::Utaut {
            input,
            pairing,
            map,
            format,
        }) => {
            let text = fs::read_to_string(&input).map_err(|e| format!("{}: {e}", input.display()))?;
            let responses = stats::parse_utaut_csv(text.as_bytes()).map_err(|e| e.to_string())?;
            let map = match map {
                Some(p) => read_json(&p)?,
                None => stats::CategoryMap::default(),
            };
            let pairing = match pairing {
                PairingArg::Independent => Pairing::Independent,
                PairingArg::ByDyad => Pairing::ByDyad,
            };
            let (kids, parents): (Vec<UtautResponse>, Vec<UtautResponse>) =
                responses.into_iter().partition(|r| r.group == Group::Child);
            let cats = stats::compare_groups(&kids, &parents, &map, pairing).map_err(|e| e.to_string())?;
            let qs = stats::compare_questions(&kids, &parents, &SELECTED_QUESTIONS, &map, pairing)
                .map_err(|e| e.to_string())?;
            match format {
                Format::Text => {
                    print!("{}", cats.render_text());
                    println!();
                    print!("{}", qs.render_text());
                }
                Format::Csv => {
                    print!("{}", cats.to_csv());
                    print!("{}", qs.to_csv().lines().skip(1).map(|l| format!("{l}\n")).collect::<String>());
                }
                Format::Json => {
                    let v = serde_json::json!({ "categories": cats, "questions": qs });
                    println!("{}", serde_json::to_string_pretty(&v).expect("report serializes"));
                }
            }
            Ok(())
        }
        Cmd::Serve {
            bind,
            gallery,
            max_sessions,
        } => {
            let config = ApiConfig {
                addr: SocketAddr::new(bind, g.port),
                model_path: g.model.clone(),
                data_dir: g.data_dir.clone(),
                gallery_path: gallery,
                max_sessions,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            rt.block_on(service::serve(config)).map_err(|e| format!("{}: {}", e.code, e.message))
        }
    }
}

fn train_cmd(g: &Global, args: TrainArgs) -> Res<()> {
    let mut cfg: TrainConfig = match &g.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    cfg.seed = g.seed;
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.patience {
        cfg.patience = v;
    }
    let ds = dataset(&args.input)?;
    let man_path = manifest_path(g, args.manifest);
    let man: DatasetManifest = read_json(&man_path)?;
    let mut train_idx = man.train.clone();
    if let Some(n) = args.limit {
        train_idx.truncate(n);
    }
    let out = args
        .out
        .or_else(|| g.model.clone())
        .unwrap_or_else(|| g.data_dir.join("model.maya"));

    let net = fer::build_maya_net(g.seed).into_network();
    println!("epoch  train_loss  train_acc  val_loss  val_acc");
    let (net, report) = train::train_with_progress(net, &DatasetSource(&ds), &train_idx, &man.val, &cfg, |m| {
        println!(
            "{:>5}  {:>10.6}  {:>9.4}  {:>8.6}  {:>7.4}",
            m.epoch, m.train_loss, m.train_accuracy, m.val_loss, m.val_accuracy
        );
    })
    .map_err(|e| e.to_string())?;
    println!("best epoch: {}", report.best_epoch);

    let manifest_text = fs::read(&man_path).map_err(|e| format!("{}: {e}", man_path.display()))?;
    let meta = CheckpointMeta {
        seed: g.seed,
        manifest_hash: Some(format!("{:x}", sha2_digest(&manifest_text))),
        epochs: report.best_epoch,
        labels: EmotionLabel::ALL.iter().map(|l| l.name().to_string()).collect(),
    };
    let model = FerModel::from_network(net, meta).map_err(|e| e.to_string())?;
    println!("parameters:");
    for p in model.network().param_ledger() {
        println!("  {:<16} {:>9}", p.name, p.count);
    }
    println!("  {:<16} {:>9}", "trunk", model.trunk_param_count());
    println!("  {:<16} {:>9}", "total", model.param_count());
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    model.save(&out).map_err(|e| format!("{}: {e}", out.display()))?;
    println!("checkpoint: {}", out.display());
    Ok(())
}

fn sha2_digest(bytes: &[u8]) -> impl std::fmt::LowerHex {
    use sha2::Digest;
    sha2::Sha256::digest(bytes)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
