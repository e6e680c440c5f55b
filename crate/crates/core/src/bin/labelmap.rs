use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use labelmap::analysis::code_stats;
use labelmap::codec::{ecoc_l1_decode, n_hot_indices, soft_decode_with, DecodeOptions, SiteDistributions};
use labelmap::harness::data::ingest_csv;
use labelmap::harness::experiment::{evaluate_models, run_experiment, site_seed, train_sites, Decoder, ExperimentConfig};
use labelmap::learners::{channel_accuracy, ChannelConfig, SoftmaxModel, TrainConfig};
use labelmap::primes::{pnt_count_estimate, primes_in_range, PrimeRangeQuery};
use labelmap::{Error, LabelMapping, MappingKind, MappingSpec};

const REPORT_DIR_ENV: &str = "LABELMAP_REPORT_DIR";
const BUNDLE_FORMAT: &str = "labelmap-models";
const BUNDLE_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "labelmap", version, about = "Label mappings for many-class classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List primes in [lo, hi), or in the digit-count interval for N, k, epsilon.
    Primes(PrimesArgs),
    /// Build and validate a mapping, printing its JSON description.
    GenMapping(GenArgs),
    /// Print codewords for labels.
    Encode(LabelArgs),
    /// Print positions of the ones in the n-hot encoding of labels.
    Nhot(LabelArgs),
    /// Decode per-site distributions (or ECOC bit probabilities with --l1).
    Decode(DecodeArgs),
    /// Separability, distance and information statistics of a mapping.
    Stats(StatsArgs),
    /// Decode accuracy under the noisy channel, without training.
    Simulate(SimulateArgs),
    /// Train one softmax learner per site on a CSV file.
    Train(TrainArgs),
    /// Accuracy of a trained model bundle on a CSV file.
    Evaluate(EvaluateArgs),
    /// Run a full experiment from a JSON config.
    Run(RunArgs),
}

#[derive(Args)]
struct PrimesArgs {
    #[arg(long, allow_negative_numbers = true)]
    lo: Option<f64>,
    #[arg(long)]
    hi: Option<f64>,
    /// Class count N; selects primes in [N^(1/k), N^(1/(k-epsilon))).
    #[arg(long)]
    classes: Option<u64>,
    #[arg(long, default_value_t = 2)]
    k: u32,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    /// Number of primes to select (smallest first).
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Mixed,
    Simplex,
    Ecoc,
    Onehot,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    classes: usize,
    /// Comma-separated primes for a mixed mapping.
    #[arg(long, value_delimiter = ',')]
    primes: Vec<u64>,
    /// Field size for a simplex mapping.
    #[arg(long)]
    p: Option<u64>,
    /// Digit count (simplex) or target digit count for automatic primes (mixed).
    #[arg(long)]
    k: Option<usize>,
    /// Number of sites (simplex) or primes to pick automatically (mixed).
    #[arg(long)]
    n: Option<usize>,
    /// Simplex evaluation points.
    #[arg(long, value_delimiter = ',')]
    points: Vec<u64>,
    /// Interval width for automatic prime selection.
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    /// ECOC code length.
    #[arg(long)]
    bits: Option<usize>,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    mapping: PathBuf,
    /// Comma-separated labels.
    #[arg(long, value_delimiter = ',', required = true)]
    labels: Vec<usize>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    mapping: PathBuf,
    /// JSON file: one sample as a list of per-site lists, or a list of such
    /// samples. With --l1, a list of bit probabilities or a list of lists.
    #[arg(long)]
    dists: PathBuf,
    /// Score the product of each site's M most likely values first.
    #[arg(long)]
    prune: Option<usize>,
    /// ECOC L1 decoding of bit probabilities.
    #[arg(long)]
    l1: bool,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    mapping: PathBuf,
    /// Pair budget; larger label sets are sampled.
    #[arg(long, default_value_t = 2_000_000)]
    pairs: u64,
    /// Report information in bits instead of nats.
    #[arg(long)]
    bits: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    mapping: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    mapping: PathBuf,
    /// CSV of feature columns followed by a label column.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Decode ECOC mappings by L1 distance instead of soft decoding.
    #[arg(long)]
    l1: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    l2: Option<f64>,
    /// Hidden ReLU width per site learner; 0 for linear softmax.
    #[arg(long)]
    hidden: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Report path; defaults to $LABELMAP_REPORT_DIR/<config name>.report.json,
    /// or stdout when the variable is unset.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Trained per-site learners with the mapping they decode through.
#[derive(Serialize, Deserialize)]
struct ModelBundle {
    format: String,
    version: u32,
    mapping: MappingSpec,
    decoder: Decoder,
    train: TrainConfig,
    models: Vec<SoftmaxModel>,
}

fn read_text(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound | std::io::ErrorKind::InvalidData => {
            invalid(format!("{}: {e}", path.display()))
        }
        _ => Error::Io(e),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

fn load_mapping(path: &Path) -> Result<LabelMapping, Error> {
    read_json::<MappingSpec>(path)?.build()
}

fn print_json(v: &impl Serialize) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn cmd_primes(a: PrimesArgs) -> Result<(), Error> {
    match (a.lo, a.hi, a.classes) {
        (Some(lo), Some(hi), None) => print_json(&primes_in_range(lo, hi)),
        (None, None, Some(n)) => {
            let q = PrimeRangeQuery::new(n, a.k, a.epsilon, a.count.unwrap_or(0))?;
            let (lo, hi) = q.interval();
            let selected = if a.count.is_some() { Some(q.select_smallest()?) } else { None };
            print_json(&json!({
                "interval": [lo, hi],
                "candidates": q.candidates(),
                "estimate": pnt_count_estimate(&q),
                "selected": selected,
            }))
        }
        _ => Err(invalid("give either --lo and --hi, or --classes")),
    }
}

fn cmd_gen(a: GenArgs) -> Result<(), Error> {
    let spec = match a.kind {
        KindArg::Mixed => {
            let primes = if a.primes.is_empty() {
                let (Some(k), Some(n)) = (a.k, a.n) else {
                    return Err(invalid("mixed mapping needs --primes, or --k and --n"));
                };
                PrimeRangeQuery::new(a.classes as u64, k as u32, a.epsilon, n)?.select_smallest()?
            } else {
                a.primes
            };
            MappingSpec::mixed(a.classes, &primes)
        }
        KindArg::Simplex => {
            let (Some(p), Some(k), Some(n)) = (a.p, a.k, a.n) else {
                return Err(invalid("simplex mapping needs --p, --k and --n"));
            };
            let spec = MappingSpec::simplex(a.classes, p, k, n);
            if a.points.is_empty() { spec } else { spec.with_points(&a.points) }
        }
        KindArg::Ecoc => MappingSpec::ecoc(a.classes, a.bits.ok_or_else(|| invalid("ecoc needs --bits"))?),
        KindArg::Onehot => MappingSpec::onehot(a.classes),
    };
    let lm = spec.build()?;
    print_json(&lm.spec())
}

fn cmd_encode(a: LabelArgs, nhot: bool) -> Result<(), Error> {
    let lm = load_mapping(&a.mapping)?;
    let mut rows = Vec::with_capacity(a.labels.len());
    for &y in &a.labels {
        rows.push(if nhot {
            json!({"label": y, "ones": n_hot_indices(&lm, y)?, "length": lm.site_sizes().iter().sum::<usize>()})
        } else {
            json!({"label": y, "codeword": lm.map_label(y)?.0})
        });
    }
    print_json(&rows)
}

fn cmd_decode(a: DecodeArgs) -> Result<(), Error> {
    let lm = load_mapping(&a.mapping)?;
    let value: serde_json::Value = read_json(&a.dists)?;
    let mut out = Vec::new();
    if a.l1 {
        if lm.kind() != MappingKind::Ecoc {
            return Err(invalid("--l1 needs an ecoc mapping"));
        }
        let samples: Vec<Vec<f64>> = match serde_json::from_value::<Vec<f64>>(value.clone()) {
            Ok(one) => vec![one],
            Err(_) => serde_json::from_value(value)?,
        };
        for s in samples {
            out.push(json!({"label": ecoc_l1_decode(&lm, &s)?}));
        }
    } else {
        let samples: Vec<Vec<Vec<f64>>> = match serde_json::from_value::<Vec<Vec<f64>>>(value.clone()) {
            Ok(one) => vec![one],
            Err(_) => serde_json::from_value(value)?,
        };
        let opts = DecodeOptions { prune_top_m: a.prune };
        for s in samples {
            let d = soft_decode_with(&lm, &SiteDistributions::new(s)?, opts)?;
            out.push(json!({"label": d.label, "score": d.score}));
        }
    }
    print_json(&out)
}

fn cmd_stats(a: StatsArgs) -> Result<(), Error> {
    let lm = load_mapping(&a.mapping)?;
    let stats = code_stats(&lm, a.pairs)?;
    print_json(&if a.bits { stats.in_bits() } else { stats })
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Error> {
    let lm = load_mapping(&a.mapping)?;
    let cc = ChannelConfig::new(a.epsilon, a.seed)?;
    print_json(&channel_accuracy(&cc, &lm, a.trials)?)
}

fn cmd_train(a: TrainArgs) -> Result<(), Error> {
    let spec: MappingSpec = read_json(&a.mapping)?;
    let lm = spec.build()?;
    let ds = ingest_csv(&a.data, Some(lm.n_classes()))?;
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
        epochs: a.epochs.unwrap_or(d.epochs),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        seed: a.seed.unwrap_or(d.seed),
        l2: a.l2.unwrap_or(d.l2),
        hidden: a.hidden.unwrap_or(d.hidden),
    };
    if a.l1 && lm.kind() != MappingKind::Ecoc {
        return Err(invalid("--l1 needs an ecoc mapping"));
    }
    let seeds: Vec<u64> = (0..lm.n_sites())
        .map(|i| site_seed(cfg.seed, 0, "train", i as u64))
        .collect();
    let models = train_sites(&lm, &ds.features, &ds.labels, &cfg, &seeds, &[cfg.epochs])?
        .into_iter()
        .map(|mut snaps| snaps.pop().expect("one checkpoint"))
        .collect();
    let bundle = ModelBundle {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        mapping: lm.spec(),
        decoder: if a.l1 { Decoder::L1 } else { Decoder::Soft },
        train: cfg,
        models,
    };
    std::fs::write(&a.out, serde_json::to_string(&bundle)?)?;
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), Error> {
    let bundle: ModelBundle = read_json(&a.models)?;
    if bundle.format != BUNDLE_FORMAT || bundle.version != BUNDLE_VERSION {
        return Err(invalid(format!("unsupported model file {} v{}", bundle.format, bundle.version)));
    }
    for m in &bundle.models {
        m.validate()?;
    }
    let lm = bundle.mapping.build()?;
    let ds = ingest_csv(&a.data, Some(lm.n_classes()))?;
    let acc = evaluate_models(&lm, bundle.decoder, &bundle.models, &ds.features, &ds.labels)?;
    print_json(&json!({"samples": ds.len(), "accuracy": acc}))
}

fn cmd_run(a: RunArgs) -> Result<(), Error> {
    let text = read_text(&a.config)?;
    let cfg = ExperimentConfig::from_json(&text)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let report = run_experiment(&cfg, base)?;
    let body = serde_json::to_string_pretty(&report)? + "\n";
    let out = a.out.or_else(|| {
        std::env::var_os(REPORT_DIR_ENV).map(|dir| {
            let stem = a.config.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            PathBuf::from(dir).join(format!("{stem}.report.json"))
        })
    });
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, body)?;
            eprintln!("report written to {}", path.display());
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        e if e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Primes(a) => cmd_primes(a),
        Command::GenMapping(a) => cmd_gen(a),
        Command::Encode(a) => cmd_encode(a, false),
        Command::Nhot(a) => cmd_encode(a, true),
        Command::Decode(a) => cmd_decode(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Run(a) => cmd_run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
