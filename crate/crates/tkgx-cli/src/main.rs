//! Command-line interface: dataset generation, training, evaluation,
//! pattern-graph export, relation similarity, and the closed-form
//! baseline pipeline.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use tkgx::checkpoint::{file_hash, vocab_hash, Checkpoint, RunManifest};
use tkgx::decoders::{asmp_embed_unseen, ScoreKind};
use tkgx::encoder::{encode_task_values, ModelDims};
use tkgx::eval::{evaluate_embeddings, evaluate_split, known_true_set, relation_similarity};
use tkgx::ingest::{
    build_format, generate_dataset, parse_quadruple_file, read_dataset, write_dataset,
    SamplerConfig,
};
use tkgx::patterns::{build_rppg, build_tspg};
use tkgx::training::{meta_train, train_asmp_tables, write_trace_csv, TrainConfig};

#[derive(Parser)]
#[command(
    name = "tkgx",
    about = "Temporal knowledge graph extrapolation: learns transferable relation \
             patterns and embeds unseen entities and relations of emerging graphs",
    version
)]
struct Cli {
    /// Worker threads; 1 guarantees bitwise-reproducible results.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// JSON config file with flat training/sampler keys; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an extrapolation dataset from a quadruple TSV file.
    Generate(GenerateArgs),
    /// Meta-train the pattern-transfer model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Export the relation pattern graphs of the training split.
    Patterns(PatternsArgs),
    /// Cosine similarities between relation embeddings.
    Similar(SimilarArgs),
    /// Train a conventional embedding model and evaluate it with
    /// closed-form inference for unseen components.
    Asmp(AsmpArgs),
}

#[derive(Args)]
struct SamplerFlags {
    /// Walk length for test/validation extraction.
    #[arg(long)]
    l1: Option<usize>,
    /// Walk length for training-graph and task extraction.
    #[arg(long)]
    l2: Option<usize>,
    #[arg(long)]
    seeds: Option<usize>,
    /// Unseen-ratio interval, e.g. 0.3:0.7.
    #[arg(long)]
    mask: Option<String>,
    #[arg(long)]
    support_fraction: Option<f64>,
    #[arg(long)]
    task_count: Option<usize>,
    /// RNG seed for sampling.
    #[arg(long)]
    seed: Option<u64>,
}

impl SamplerFlags {
    fn apply(&self, cfg: &mut SamplerConfig) -> Result<(), CliError> {
        if let Some(l1) = self.l1 {
            cfg.l1 = l1;
        }
        if let Some(l2) = self.l2 {
            cfg.l2 = l2;
        }
        if let Some(s) = self.seeds {
            cfg.seed_entity_count = s;
        }
        if let Some(mask) = &self.mask {
            let (lo, hi) = mask
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("--mask {mask}: expected LO:HI")))?;
            let parse = |x: &str| {
                x.parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("--mask {mask}: {x} is not a number")))
            };
            cfg.mask_ratio_range = (parse(lo)?, parse(hi)?);
        }
        if let Some(f) = self.support_fraction {
            cfg.support_fraction = f;
        }
        if let Some(n) = self.task_count {
            cfg.task_count = n;
        }
        if let Some(seed) = self.seed {
            cfg.rng_seed = seed;
        }
        Ok(())
    }
}

#[derive(Args)]
struct TrainFlags {
    /// Score function: distmult | complex | rotate | tdistmult | tcomplex | tero.
    #[arg(long)]
    score: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n_neg: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    batch_tasks: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Disable a module: rppg | tspg | entity | gcn (repeatable).
    #[arg(long)]
    ablate: Vec<String>,
}

impl TrainFlags {
    fn apply(&self, cfg: &mut TrainConfig) -> Result<(), CliError> {
        if let Some(score) = &self.score {
            cfg.score_kind = score
                .parse::<ScoreKind>()
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
        let mut dims = cfg.dims;
        if let Some(d) = self.dim {
            dims = ModelDims::new(d, dims.hidden, dims.layers);
        }
        if let Some(h) = self.hidden {
            dims.hidden = h;
        }
        if let Some(k) = self.layers {
            dims.layers = k;
        }
        cfg.dims = dims;
        if let Some(x) = self.lr {
            cfg.lr = x;
        }
        if let Some(x) = self.reg {
            cfg.reg = x;
        }
        if let Some(x) = self.gamma {
            cfg.gamma = x;
        }
        if let Some(x) = self.n_neg {
            cfg.n_neg = x;
        }
        if let Some(x) = self.alpha {
            cfg.alpha = x;
        }
        if let Some(x) = self.batch_tasks {
            cfg.batch_tasks = x;
        }
        if let Some(x) = self.epochs {
            cfg.epochs = x;
        }
        for m in &self.ablate {
            match m.as_str() {
                "rppg" => cfg.ablation.use_rppg = false,
                "tspg" => cfg.ablation.use_tspg = false,
                "entity" => cfg.ablation.use_entity_feature = false,
                "gcn" => cfg.ablation.use_gcn = false,
                other => {
                    return Err(CliError::Usage(format!(
                        "--ablate {other}: expected rppg, tspg, entity or gcn"
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Quadruple TSV file (subject\trelation\tobject\ttimestamp).
    #[arg(long)]
    input: PathBuf,
    /// Input field format.
    #[arg(long, default_value = "labels")]
    format: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sampler: SamplerFlags,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory produced by `generate`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    sampler: SamplerFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Split to evaluate: test | valid.
    #[arg(long, default_value = "test")]
    split: String,
    /// Ranking mode: filtered | raw.
    #[arg(long, default_value = "filtered")]
    mode: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PatternsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimilarArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Relation pair as LABEL::LABEL (repeatable).
    #[arg(long = "pair", required = true)]
    pairs: Vec<String>,
}

#[derive(Args)]
struct AsmpArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value = "filtered")]
    mode: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<tkgx::Error> for CliError {
    fn from(e: tkgx::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn require_exists(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "input path does not exist: {}",
            path.display()
        )))
    }
}

fn load_configs(path: &Option<PathBuf>) -> Result<(TrainConfig, SamplerConfig), CliError> {
    match path {
        None => Ok((TrainConfig::default(), SamplerConfig::default())),
        Some(p) => {
            require_exists(p)?;
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
            let train: TrainConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
            let sampler: SamplerConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
            Ok((train, sampler))
        }
    }
}

fn manifest(
    command: &str,
    config: serde_json::Value,
    rng_seed: u64,
    inputs: &[&Path],
    threads: usize,
    started: Instant,
) -> Result<RunManifest, CliError> {
    let mut input_hashes = std::collections::BTreeMap::new();
    for p in inputs {
        if p.is_file() {
            input_hashes.insert(p.display().to_string(), file_hash(p)?);
        }
    }
    Ok(RunManifest {
        command: command.to_string(),
        config,
        rng_seed,
        input_hashes,
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

fn pick_split<'a>(
    bundle: &'a tkgx::ingest::DatasetBundle,
    split: &str,
) -> Result<&'a tkgx::tkg::TaskSample, CliError> {
    match split {
        "test" => Ok(&bundle.test),
        "valid" => Ok(&bundle.valid),
        other => Err(CliError::Usage(format!(
            "--split {other}: expected test or valid"
        ))),
    }
}

fn pick_mode(mode: &str) -> Result<bool, CliError> {
    match mode {
        "filtered" => Ok(true),
        "raw" => Ok(false),
        other => Err(CliError::Usage(format!(
            "--mode {other}: expected filtered or raw"
        ))),
    }
}

fn cmd_generate(cli: &Cli, args: &GenerateArgs) -> Result<(), CliError> {
    let started = Instant::now();
    require_exists(&args.input)?;
    let format = build_format(&args.format)
        .ok_or_else(|| CliError::Usage(format!("--format {}: expected labels or ids", args.format)))?;
    let (_, mut scfg) = load_configs(&cli.config)?;
    args.sampler.apply(&mut scfg)?;

    let records = parse_quadruple_file(&args.input, format)?;
    let source = tkgx::tkg::build_tkg(&records)?;
    let bundle = generate_dataset(&source, &scfg)?;
    write_dataset(&args.out, &bundle)?;
    manifest(
        "generate",
        serde_json::to_value(scfg).map_err(|e| CliError::Runtime(e.to_string()))?,
        scfg.rng_seed,
        &[args.input.as_path()],
        cli.threads,
        started,
    )?
    .write(&args.out)?;
    println!(
        "wrote {} (train {} quads, test {}+{}, valid {}+{})",
        args.out.display(),
        bundle.stats.train_quads,
        bundle.stats.test_support_quads,
        bundle.stats.test_query_quads,
        bundle.stats.valid_support_quads,
        bundle.stats.valid_query_quads,
    );
    Ok(())
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> Result<(), CliError> {
    let started = Instant::now();
    require_exists(&args.data)?;
    let (mut cfg, mut scfg) = load_configs(&cli.config)?;
    args.train.apply(&mut cfg)?;
    args.sampler.apply(&mut scfg)?;
    cfg.threads = cli.threads;
    if let Some(seed) = args.sampler.seed {
        cfg.rng_seed = seed;
    }

    let bundle = read_dataset(&args.data)?;
    let (params, trace) = meta_train(&bundle.train, &cfg, &scfg)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    Checkpoint {
        params,
        score_kind: cfg.score_kind,
        ablation: cfg.ablation,
        vocab_hash: vocab_hash(&bundle.train),
    }
    .save(&args.out.join("checkpoint.json"))?;
    write_trace_csv(&args.out.join("trace.csv"), &trace)?;
    manifest(
        "train",
        serde_json::json!({ "train": cfg, "sampler": scfg }),
        cfg.rng_seed,
        &[args.data.as_path()],
        cli.threads,
        started,
    )?
    .write(&args.out)?;
    let last = trace.last().map(|r| r.loss).unwrap_or(f64::NAN);
    println!(
        "trained {} steps, final batch loss {last:.4}; checkpoint at {}",
        trace.len(),
        args.out.join("checkpoint.json").display()
    );
    Ok(())
}

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> Result<(), CliError> {
    let started = Instant::now();
    require_exists(&args.data)?;
    require_exists(&args.checkpoint)?;
    let filtered = pick_mode(&args.mode)?;
    let bundle = read_dataset(&args.data)?;
    let task = pick_split(&bundle, &args.split)?;
    let ckpt = Checkpoint::load(&args.checkpoint, &vocab_hash(&bundle.train))?;
    let report = evaluate_split(
        &ckpt.params,
        task,
        ckpt.ablation,
        ckpt.score_kind,
        &bundle.train.quads,
        filtered,
    )?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(
        args.out.join("report.json"),
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(args.out.join("report.txt"), report.text_table())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    manifest(
        "eval",
        serde_json::json!({ "split": args.split, "mode": args.mode }),
        0,
        &[args.checkpoint.as_path()],
        cli.threads,
        started,
    )?
    .write(&args.out)?;
    print!("{}", report.text_table());
    Ok(())
}

fn cmd_patterns(args: &PatternsArgs) -> Result<(), CliError> {
    require_exists(&args.data)?;
    let bundle = read_dataset(&args.data)?;
    let rppg = build_rppg(&bundle.train);
    let tspg = build_tspg(&bundle.train);
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    for (name, graph) in [("rppg.tsv", &rppg), ("tspg.tsv", &tspg)] {
        let file = std::fs::File::create(args.out.join(name))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        graph
            .export_tsv(std::io::BufWriter::new(file))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let named = |g: &tkgx::patterns::PatternGraph| -> std::collections::BTreeMap<&str, usize> {
        g.type_counts()
            .into_iter()
            .map(|(ty, n)| (ty.name(), n))
            .collect()
    };
    let counts = serde_json::json!({
        "rppg": named(&rppg),
        "tspg": named(&tspg),
    });
    std::fs::write(
        args.out.join("type_counts.json"),
        serde_json::to_string_pretty(&counts).map_err(|e| CliError::Runtime(e.to_string()))?,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{counts}");
    Ok(())
}

fn cmd_similar(args: &SimilarArgs) -> Result<(), CliError> {
    require_exists(&args.data)?;
    require_exists(&args.checkpoint)?;
    let bundle = read_dataset(&args.data)?;
    let ckpt = Checkpoint::load(&args.checkpoint, &vocab_hash(&bundle.train))?;
    let emb = encode_task_values(
        &ckpt.params,
        &bundle.test.support,
        &bundle.test,
        ckpt.ablation,
    )?;
    let resolve = |label: &str| -> Result<usize, CliError> {
        bundle
            .train
            .relations
            .id(label)
            .or_else(|| label.parse::<usize>().ok())
            .ok_or_else(|| CliError::Usage(format!("unknown relation {label:?}")))
    };
    for pair in &args.pairs {
        let (a, b) = pair
            .split_once("::")
            .ok_or_else(|| CliError::Usage(format!("--pair {pair}: expected LABEL::LABEL")))?;
        let sim = relation_similarity(resolve(a)?, resolve(b)?, &emb)?;
        println!("{a}\t{b}\t{sim:.4}");
    }
    Ok(())
}

fn cmd_asmp(cli: &Cli, args: &AsmpArgs) -> Result<(), CliError> {
    let started = Instant::now();
    require_exists(&args.data)?;
    let score_name = args.train.score.clone().unwrap_or_else(|| "tero".into());
    let kind = score_name
        .parse::<ScoreKind>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let filtered = pick_mode(&args.mode)?;
    let (mut cfg, _) = load_configs(&cli.config)?;
    args.train.apply(&mut cfg)?;
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }

    let bundle = read_dataset(&args.data)?;
    let task = pick_split(&bundle, &args.split)?;
    let tables = train_asmp_tables(&bundle.train, kind, &cfg)?;
    let emb = asmp_embed_unseen(&task.support, task, &tables, kind);
    let known = known_true_set(task, &bundle.train.quads);
    let report = evaluate_embeddings(task, &emb, kind, &known, filtered)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(
        args.out.join("report.json"),
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(args.out.join("report.txt"), report.text_table())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    manifest(
        "asmp",
        serde_json::json!({ "score": score_name, "split": args.split, "mode": args.mode, "train": cfg }),
        cfg.rng_seed,
        &[args.data.as_path()],
        cli.threads,
        started,
    )?
    .write(&args.out)?;
    print!("{}", report.text_table());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(args) => cmd_generate(cli, args),
        Command::Train(args) => cmd_train(cli, args),
        Command::Eval(args) => cmd_eval(cli, args),
        Command::Patterns(args) => cmd_patterns(args),
        Command::Similar(args) => cmd_similar(args),
        Command::Asmp(args) => cmd_asmp(cli, args),
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}
