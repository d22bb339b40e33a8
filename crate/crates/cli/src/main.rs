use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use stnn::checkpoint::Checkpoint;
use stnn::codec::{self, stw1, CodecTag};
use stnn::config::RunConfig;
use stnn::cost::{model_summary, sweep_curves, ScenarioFile};
use stnn::data::{Dataset, Splits};
use stnn::infer::sparse_forward;
use stnn::network::argmax_rows;
use stnn::prune::{
    encode_network, prune_network, run_pipeline, sparsity_report, PipelineData, PipelineEvent, PruneConfig,
    SigmaChoice, Stage, StageReport,
};
use stnn::report::{artifact, emit_report, RunManifest, StageTiming};
use stnn::train::{TrainData, Trainer};
use stnn::{Error, Result, Tensor};

const MODEL_FILE: &str = "model.stck";
const TRAINED_FILE: &str = "trained.stck";
const RLE_FILE: &str = "weights.rle.stw1";
const HC_FILE: &str = "weights.hc.stw1";

#[derive(Parser)]
#[command(name = "stnn", version, about = "Sparse ternary network training, pruning, encoding and cost modelling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CodecArg {
    Rle,
    Hc,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Validation,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network from scratch and write a checkpoint.
    Train(RunArgs),
    /// Apply the pruning mask to a checkpoint.
    Prune {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Uniform sigma; defaults to each layer's eta.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        allow_sigma_above_eta: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Retrain a (pruned) checkpoint with fresh optimizer state.
    Retrain {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the prune section's retrain epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Encode a checkpoint's ternary weights as STW1.
    Encode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        codec: CodecArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Decode an STW1 file to JSON tensors in canonical order.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint through the sparse decoder kernels.
    Infer {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Encoded weights; encoded from the checkpoint when absent.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Train, prune, retrain and encode, then emit the report.
    Pipeline(RunArgs),
    /// Throughput sweeps and per-model cost summaries.
    Costmodel {
        #[arg(long)]
        scenario: PathBuf,
        /// Write T_e curves over the scenario's sweep grid.
        #[arg(long)]
        sweep: bool,
        /// Summarize this checkpoint's ternary layers.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        batch: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Regenerate report files from a run manifest.
    Report {
        /// Manifest file or the directory containing it.
        #[arg(long)]
        manifest: PathBuf,
        /// Defaults to `report/` next to the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Stage { source, .. } => exit_code(source),
        _ => 1,
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(args) => train(&args),
        Command::Prune { checkpoint, sigma, allow_sigma_above_eta, out } => {
            prune(&checkpoint, sigma, allow_sigma_above_eta, &out)
        }
        Command::Retrain { run, checkpoint, epochs } => retrain(&run, &checkpoint, epochs),
        Command::Encode { checkpoint, codec, out } => encode(&checkpoint, codec, &out),
        Command::Decode { input, out } => decode(&input, &out),
        Command::Infer { run, checkpoint, weights, split } => infer(&run, &checkpoint, weights.as_deref(), split),
        Command::Pipeline(args) => pipeline(&args),
        Command::Costmodel { scenario, sweep, checkpoint, batch, out } => {
            costmodel(&scenario, sweep, checkpoint.as_deref(), batch, &out)
        }
        Command::Report { manifest, out } => report(&manifest, out.as_deref()),
    }
}

/// Loads and validates the config with CLI overrides applied.
fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if let Some(d) = &args.data {
        cfg.data.set_path(d.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(cfg: &RunConfig) -> Result<Splits> {
    let t = Instant::now();
    let splits = cfg.data.load().map_err(|e| e.in_stage("load"))?;
    eprintln!(
        "[load] {} train / {} validation / {} test examples in {:.1}s",
        splits.train.len(),
        splits.validation.len(),
        splits.test.len(),
        t.elapsed().as_secs_f64()
    );
    Ok(splits)
}

fn train_data(s: &Splits) -> TrainData<'_> {
    TrainData {
        train_x: &s.train.images,
        train_y: &s.train.labels,
        val_x: &s.validation.images,
        val_y: &s.validation.labels,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn log_epoch(stage: &str, r: &stnn::train::EpochRecord) {
    let zeros: f64 = if r.zero_fraction.is_empty() {
        0.0
    } else {
        r.zero_fraction.iter().sum::<f64>() / r.zero_fraction.len() as f64
    };
    eprintln!(
        "[{stage}] epoch {:>3}  lr {:.4}  loss {:.4}  train err {:.4}  val err {:.4}  zeros {:.3}",
        r.epoch, r.learning_rate, r.train_loss, r.train_error, r.val_error, zeros
    );
}

fn stage_report(stage: Stage, net: &stnn::network::Network<f32>, s: &Splits) -> Result<StageReport> {
    Ok(StageReport {
        stage,
        iteration: 0,
        val_error: net.error_rate(&s.validation.images, &s.validation.labels)?,
        test_error: Some(net.error_rate(&s.test.images, &s.test.labels)?),
        sparsity: sparsity_report(net),
        sigma: Vec::new(),
        conforming: true,
        history: Vec::new(),
        sizes: None,
    })
}

fn train(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let splits = load_data(&cfg)?;
    create_dir(&args.out)?;
    let t = Instant::now();
    let outcome = Trainer::new(cfg.train.clone())
        .and_then(|tr| tr.fit_with(&train_data(&splits), cfg.train.epochs, &mut |r| log_epoch("train", r)))
        .map_err(|e| e.in_stage("train"))?;
    let seconds = t.elapsed().as_secs_f64();
    let ck = Checkpoint {
        network: outcome.model,
        optimizer: Some(outcome.optimizer),
        epoch: outcome.best_epoch,
        config: Some(cfg.train.clone()),
    };
    ck.save(&args.out.join(MODEL_FILE))?;
    let mut rep = stage_report(Stage::Train, &ck.network, &splits)?;
    rep.history = outcome.history;
    eprintln!("[train] best epoch {}  val err {:.4}  test err {:.4}", ck.epoch, rep.val_error, rep.test_error.unwrap());

    let mut m = RunManifest::new("train");
    m.seed = Some(cfg.train.seed);
    m.config = Some(cfg);
    m.timings.push(StageTiming { stage: "train".into(), seconds });
    m.artifacts.insert(artifact::CHECKPOINT.into(), MODEL_FILE.into());
    m.metrics.stages.push(rep);
    m.save(&args.out)?;
    println!("{}", args.out.join(MODEL_FILE).display());
    Ok(())
}

fn prune(checkpoint: &Path, sigma: Option<f64>, allow: bool, out: &Path) -> Result<()> {
    let mut ck = Checkpoint::load(checkpoint)?;
    let mut pc = PruneConfig::new(1);
    pc.allow_sigma_above_eta = allow;
    if let Some(s) = sigma {
        pc.sigma = SigmaChoice::Fixed { sigma: s };
    }
    let etas: Vec<f64> = ck.network.ternary_layers().map(|s| s.eta).collect();
    let resolved = pc.resolve(&etas)?;
    let sigmas: Vec<f64> = resolved.iter().map(|r| r.0).collect();
    if resolved.iter().any(|r| !r.1) {
        eprintln!("[prune] warning: sigma exceeds eta; this run is non-conforming");
    }
    prune_network(&mut ck.network, &sigmas).map_err(|e| e.in_stage("prune"))?;
    ck.optimizer = None;
    create_dir(out)?;
    ck.save(&out.join(MODEL_FILE))?;
    let sp = sparsity_report(&ck.network);
    eprintln!("[prune] sigma {sigmas:?}  zero fraction {:.4}", sp.zero_fraction());
    println!("{}", out.join(MODEL_FILE).display());
    Ok(())
}

fn retrain(args: &RunArgs, checkpoint: &Path, epochs: Option<usize>) -> Result<()> {
    let cfg = load_config(args)?;
    let ck = Checkpoint::load(checkpoint)?;
    if ck.network.spec != cfg.train.network {
        return Err(Error::Config("checkpoint network does not match the config".into()));
    }
    let epochs = epochs.unwrap_or_else(|| cfg.prune_config().retrain_epochs);
    if epochs == 0 {
        return Err(Error::Config("retrain epochs must be at least 1".into()));
    }
    let splits = load_data(&cfg)?;
    create_dir(&args.out)?;
    let mut tc = cfg.train.clone();
    tc.epochs = epochs;
    let t = Instant::now();
    let outcome = Trainer::from_network(tc.clone(), ck.network)
        .and_then(|tr| tr.fit_with(&train_data(&splits), epochs, &mut |r| log_epoch("retrain", r)))
        .map_err(|e| e.in_stage("retrain"))?;
    let seconds = t.elapsed().as_secs_f64();
    let out_ck = Checkpoint {
        network: outcome.model,
        optimizer: Some(outcome.optimizer),
        epoch: outcome.best_epoch,
        config: Some(tc),
    };
    out_ck.save(&args.out.join(MODEL_FILE))?;
    let mut rep = stage_report(Stage::Retrain, &out_ck.network, &splits)?;
    rep.iteration = 1;
    rep.history = outcome.history;
    eprintln!("[retrain] val err {:.4}  test err {:.4}", rep.val_error, rep.test_error.unwrap());

    let mut m = RunManifest::new("retrain");
    m.seed = Some(cfg.train.seed);
    m.config = Some(cfg);
    m.timings.push(StageTiming { stage: "retrain".into(), seconds });
    m.artifacts.insert(artifact::CHECKPOINT.into(), MODEL_FILE.into());
    m.metrics.stages.push(rep);
    m.save(&args.out)?;
    println!("{}", args.out.join(MODEL_FILE).display());
    Ok(())
}

fn write_stw1(net: &stnn::network::Network<f32>, tag: CodecTag, path: &Path) -> Result<Vec<codec::EncodedLayerBlob>> {
    let blobs = encode_network(net, tag).map_err(|e| e.in_stage("encode"))?;
    fs::write(path, stw1::write(&blobs)?)?;
    Ok(blobs)
}

fn encode(checkpoint: &Path, which: CodecArg, out: &Path) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    if ck.network.ternary_layers().next().is_none() {
        return Err(Error::Config("checkpoint has no ternary layers to encode".into()));
    }
    create_dir(out)?;
    let tags: &[(CodecTag, &str)] = match which {
        CodecArg::Rle => &[(CodecTag::Rle, RLE_FILE)],
        CodecArg::Hc => &[(CodecTag::Hc, HC_FILE)],
        CodecArg::Both => &[(CodecTag::Rle, RLE_FILE), (CodecTag::Hc, HC_FILE)],
    };
    for &(tag, name) in tags {
        let path = out.join(name);
        let blobs = write_stw1(&ck.network, tag, &path)?;
        let bytes = fs::metadata(&path)?.len();
        let k: u64 = blobs.iter().map(|b| b.k).sum();
        let n: u64 = blobs.iter().map(|b| b.n).sum();
        eprintln!("[encode] {}: {} layers, {k}/{n} nonzero, {bytes} bytes", tag.name(), blobs.len());
        println!("{}", path.display());
    }
    Ok(())
}

fn decode(input: &Path, out: &Path) -> Result<()> {
    let blobs = stw1::read(&fs::read(input)?).map_err(|e| e.in_stage("decode"))?;
    let mut layers = Vec::with_capacity(blobs.len());
    for b in &blobs {
        let t: Tensor<f32> = codec::decode(b).map_err(|e| e.in_stage("decode"))?;
        let values: Vec<i8> = t.data().iter().map(|&v| v as i8).collect();
        layers.push(json!({ "codec": b.codec().name(), "shape": b.shape, "values": values }));
    }
    create_dir(out)?;
    let path = out.join("weights.json");
    fs::write(&path, serde_json::to_string(&json!({ "layers": layers }))? + "\n")?;
    println!("{}", path.display());
    Ok(())
}

fn infer(args: &RunArgs, checkpoint: &Path, weights: Option<&Path>, split: SplitArg) -> Result<()> {
    let cfg = load_config(args)?;
    let ck = Checkpoint::load(checkpoint)?;
    if ck.network.spec != cfg.train.network {
        return Err(Error::Config("checkpoint network does not match the config".into()));
    }
    let blobs = match weights {
        Some(p) => stw1::read(&fs::read(p)?).map_err(|e| e.in_stage("decode"))?,
        None => encode_network(&ck.network, CodecTag::Rle).map_err(|e| e.in_stage("encode"))?,
    };
    let splits = load_data(&cfg)?;
    let set: &Dataset = match split {
        SplitArg::Validation => &splits.validation,
        SplitArg::Test => &splits.test,
    };
    let t = Instant::now();
    let chunk = 1000;
    let (mut wrong, mut macs, mut integer_layers) = (0usize, 0u64, 0usize);
    for start in (0..set.len()).step_by(chunk) {
        let part = set.slice(start, (start + chunk).min(set.len()))?;
        let (logits, stats) = sparse_forward(&ck.network, &blobs, &part.images).map_err(|e| e.in_stage("infer"))?;
        wrong += argmax_rows(&logits).iter().zip(&part.labels).filter(|(p, y)| p != y).count();
        macs += stats.macs.0;
        integer_layers = stats.integer_layers;
    }
    let error = wrong as f64 / set.len() as f64;
    let seconds = t.elapsed().as_secs_f64();
    let dense_error = ck.network.error_rate(&set.images, &set.labels)?;
    eprintln!(
        "[infer] sparse error {error:.4}  dense error {dense_error:.4}  MACs {macs}  integer layers {integer_layers}"
    );
    println!(
        "{}",
        json!({ "examples": set.len(), "error": error, "dense_error": dense_error, "macs": macs, "seconds": seconds })
    );
    create_dir(&args.out)?;
    let mut m = RunManifest::new("infer");
    m.seed = Some(cfg.train.seed);
    m.config = Some(cfg);
    m.timings.push(StageTiming { stage: "infer".into(), seconds });
    m.metrics.test_error = Some(error);
    m.metrics.mac_count = Some(macs);
    m.save(&args.out)?;
    Ok(())
}

fn pipeline(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let pc = cfg.prune_config();
    let splits = load_data(&cfg)?;
    create_dir(&args.out)?;
    let data = PipelineData { train: train_data(&splits), test: Some((&splits.test.images, &splits.test.labels)) };
    let mut timings: Vec<StageTiming> = Vec::new();
    let mut clock = Instant::now();
    let arts = run_pipeline(&cfg.train, &pc, &data, &mut |ev| match ev {
        PipelineEvent::Epoch { stage, record, .. } => log_epoch(stage.name(), record),
        PipelineEvent::StageDone(r) => {
            let name =
                if r.iteration > 0 { format!("{}{}", r.stage.name(), r.iteration) } else { r.stage.name().into() };
            timings.push(StageTiming { stage: name.clone(), seconds: clock.elapsed().as_secs_f64() });
            clock = Instant::now();
            eprintln!(
                "[{name}] val err {:.4}  test err {:.4}  zeros {:.4}",
                r.val_error,
                r.test_error.unwrap_or(f64::NAN),
                r.sparsity.zero_fraction()
            );
        }
    })?;

    let trained_ck =
        Checkpoint { network: arts.trained, optimizer: None, epoch: cfg.train.epochs, config: Some(cfg.train.clone()) };
    trained_ck.save(&args.out.join(TRAINED_FILE))?;
    let ck = Checkpoint {
        network: arts.model,
        optimizer: Some(arts.optimizer),
        epoch: cfg.train.epochs + pc.iterations * pc.retrain_epochs,
        config: Some(cfg.train.clone()),
    };
    ck.save(&args.out.join(MODEL_FILE))?;
    fs::write(args.out.join(RLE_FILE), stw1::write(&arts.rle)?)?;
    fs::write(args.out.join(HC_FILE), stw1::write(&arts.hc)?)?;

    let mut m = RunManifest::new("pipeline");
    m.seed = Some(cfg.train.seed);
    m.config = Some(cfg);
    m.timings = timings;
    m.artifacts.insert(artifact::CHECKPOINT.into(), MODEL_FILE.into());
    m.artifacts.insert(artifact::TRAINED.into(), TRAINED_FILE.into());
    m.artifacts.insert(artifact::RLE.into(), RLE_FILE.into());
    m.artifacts.insert(artifact::HC.into(), HC_FILE.into());
    m.metrics.test_error = arts.stages.last().and_then(|s| s.test_error);
    m.metrics.stages = arts.stages;
    let manifest = m.save(&args.out)?;
    let (saved, base) = RunManifest::load(&manifest)?;
    let files = emit_report(&saved, &base, &args.out.join("report"))?;
    eprintln!(
        "[report] sizes MB: dense-1b {:.6}  dense-2b {:.6}  RLE {:.6}  HC {:.6}",
        arts.sizes.total.dense_1bit_bytes as f64 / 1e6,
        arts.sizes.total.dense_2bit_bytes as f64 / 1e6,
        arts.sizes.total.rle_bytes as f64 / 1e6,
        arts.sizes.total.hc_bytes as f64 / 1e6
    );
    println!("{}", manifest.display());
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn costmodel(scenario: &Path, sweep: bool, checkpoint: Option<&Path>, batch: u64, out: &Path) -> Result<()> {
    let text = fs::read_to_string(scenario).map_err(|e| Error::Config(format!("{}: {e}", scenario.display())))?;
    let file = ScenarioFile::from_toml(&text)?;
    if batch == 0 {
        return Err(Error::Config("batch must be at least 1".into()));
    }
    if !sweep && checkpoint.is_none() {
        return Err(Error::Config("nothing to do: pass --sweep and/or --checkpoint".into()));
    }
    create_dir(out)?;
    if sweep {
        let table =
            sweep_curves(&file.scenario, &file.sweep, &file.benchmark_lines()).map_err(|e| e.in_stage("costmodel"))?;
        for (name, text) in [("te_curves.csv", table.curves_csv()), ("te_benchmarks.csv", table.benchmarks_csv())] {
            let p = out.join(name);
            fs::write(&p, text)?;
            println!("{}", p.display());
        }
        let mut m = RunManifest::new("costmodel");
        m.scenario = Some(file.clone());
        m.save(out)?;
    }
    if let Some(p) = checkpoint {
        let ck = Checkpoint::load(p)?;
        let summary = model_summary(&ck.network, &file.scenario, batch).map_err(|e| e.in_stage("costmodel"))?;
        let path = out.join("cost_summary.json");
        fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")?;
        eprintln!("[costmodel] aggregate T_e {} ops/s  peak {} ops/s", summary.aggregate, summary.peak);
        println!("{}", path.display());
    }
    Ok(())
}

fn report(manifest: &Path, out: Option<&Path>) -> Result<()> {
    let (m, base) = RunManifest::load(manifest)?;
    let out = out.map_or_else(|| base.join("report"), Path::to_path_buf);
    for f in emit_report(&m, &base, &out).map_err(|e| e.in_stage("report"))? {
        println!("{}", f.display());
    }
    Ok(())
}
