use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use gme_core::eval::{
    format_table, read_predictions, run_matrix, score_predictions, to_csv, to_json_lines, Grid,
    MarketSplit, MetricReport,
};
use gme_core::features::{Encoder, ENCODER_VERSION};
use gme_core::graph::{build_competition_graph, build_propagation_tree, dump_graphs, PruningMode};
use gme_core::market::{
    build_target_sets, ingest_investments, ingest_projects, window_for, Ingested, InvestmentLog,
    ProjectCatalog, SplitRatio, UtcOffset,
};
use gme_core::model::{
    train, GmeModel, InputScaling, MarketContext, ModelSpec, PrepareOptions, TrainConfig,
};
use gme_core::nn::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
use gme_core::synth::{generate, preset, write_market, INVESTMENTS_FILE, PROJECTS_FILE};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{
    BuildArgs, Cli, CliError, Command, DataArgs, EvalArgs, IngestArgs, PredictArgs, RunConfig,
    SynthArgs, TrainArgs, TrainFlags,
};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const MODEL_FILE: &str = "model.json";
pub const ENCODER_FILE: &str = "encoder.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const METADATA_FILE: &str = "metadata.json";

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Build(a) => build(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
    }
}

#[derive(Debug, Clone, Serialize)]
struct InputHash {
    path: PathBuf,
    sha256: String,
}

fn hash_file(path: &Path) -> anyhow::Result<InputHash> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(InputHash {
        path: path.to_path_buf(),
        sha256: format!("{:x}", Sha256::digest(&bytes)),
    })
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    inputs: Vec<InputHash>,
    /// Auxiliary competitor targets are next-day funding.
    loss_l_mode: &'a str,
    checkpoint_version: u32,
    encoder_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<serde_json::Value>,
}

impl<'a> Metadata<'a> {
    fn new(command: &'a str, seed: u64, config: &'a RunConfig, inputs: Vec<InputHash>) -> Self {
        Metadata {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
            inputs,
            loss_l_mode: "next24h",
            checkpoint_version: CHECKPOINT_VERSION,
            encoder_version: ENCODER_VERSION,
            metrics: None,
        }
    }

    fn write(&self, dir: &Path) -> anyhow::Result<()> {
        write_file(
            &dir.join(METADATA_FILE),
            &serde_json::to_string_pretty(self)?,
        )
    }
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

struct Market {
    catalog: ProjectCatalog,
    log: InvestmentLog,
    inputs: Vec<InputHash>,
}

fn check_rejections<T>(ingested: &Ingested<T>, label: &str, allow: bool) -> anyhow::Result<()> {
    if ingested.rejections.is_empty() {
        return Ok(());
    }
    ingested.write_report(label, std::io::stderr())?;
    if allow {
        return Ok(());
    }
    let first = &ingested.rejections[0];
    Err(CliError::Schema(format!(
        "{label}: {} rejected lines (first: {first})",
        ingested.rejections.len()
    ))
    .into())
}

fn data_dir(args: &DataArgs, config: &RunConfig) -> anyhow::Result<PathBuf> {
    args.data
        .clone()
        .or_else(|| config.data_dir.clone())
        .ok_or_else(|| {
            CliError::Validation(format!(
                "no data directory; pass --data or set {}",
                crate::DATA_DIR_ENV
            ))
            .into()
        })
}

fn load_market(args: &DataArgs, config: &RunConfig) -> anyhow::Result<Market> {
    let dir = data_dir(args, config)?;
    let projects_path = dir.join(PROJECTS_FILE);
    let records_path = dir.join(INVESTMENTS_FILE);
    for p in [&projects_path, &records_path] {
        if !p.is_file() {
            return Err(CliError::Validation(format!("missing input {}", p.display())).into());
        }
    }
    let projects = ingest_projects(&projects_path)?;
    check_rejections(&projects, PROJECTS_FILE, args.allow_rejects)?;
    let records = ingest_investments(&records_path, &projects.value)?;
    check_rejections(&records, INVESTMENTS_FILE, args.allow_rejects)?;
    Ok(Market {
        catalog: projects.value,
        log: records.value,
        inputs: vec![hash_file(&projects_path)?, hash_file(&records_path)?],
    })
}

fn apply_flags(config: &mut TrainConfig, f: &TrainFlags) {
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = f.$field.clone() { config.$field = v; })*
        };
    }
    set!(
        epochs,
        t_h,
        pruning,
        ablation,
        seed,
        hidden,
        lr0,
        decay_rate,
        decay_steps,
        eta,
        keep
    );
}

fn synth(args: &SynthArgs) -> anyhow::Result<()> {
    let mut config = RunConfig::load_or_default(args.config.as_deref())?;
    if let Some(name) = &args.preset {
        config.synth = preset(name)?;
    } else if args.config.is_none() {
        return Err(CliError::Validation("pass --preset or --config".into()).into());
    }
    if let Some(seed) = args.seed {
        config.synth.seed = seed;
    }
    let market = generate(&config.synth)?;
    create_dir(&args.out)?;
    let paths = write_market(&market, &args.out)?;
    let inputs = paths
        .iter()
        .map(|p| hash_file(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Metadata::new("synth", config.synth.seed, &config, inputs).write(&args.out)?;
    println!(
        "wrote {} projects and {} investments to {}",
        market.catalog.len(),
        market.log.len(),
        args.out.display()
    );
    Ok(())
}

fn ingest(args: &IngestArgs) -> anyhow::Result<()> {
    let config = RunConfig::load_or_default(args.data.config.as_deref())?;
    let market = load_market(&args.data, &config)?;
    let sets = build_target_sets(&market.catalog, UtcOffset(config.utc_offset_secs));
    let first = market.catalog.iter().map(|p| p.launch_time).min();
    let last = market.catalog.iter().map(|p| p.launch_time).max();
    println!("projects: {}", market.catalog.len());
    println!("investments: {}", market.log.len());
    println!("target sets: {}", sets.len());
    if let (Some(a), Some(b)) = (first, last) {
        println!("launch span: {a} .. {b}");
    }
    println!("rejected: 0");
    Ok(())
}

fn build(args: &BuildArgs) -> anyhow::Result<()> {
    let config = RunConfig::load_or_default(args.data.config.as_deref())?;
    let market = load_market(&args.data, &config)?;
    let t_h = args.t_h.unwrap_or(config.train.t_h);
    let pruning = args.pruning.unwrap_or(config.train.pruning);
    let sets = build_target_sets(&market.catalog, UtcOffset(config.utc_offset_secs));
    let mut out = String::new();
    let (mut edges, mut tree_edges) = (0, 0);
    for set in &sets {
        let window = window_for(set, &market.catalog, t_h)?;
        let cg = build_competition_graph(&window, &market.catalog, pruning);
        let tree = build_propagation_tree(&window, &market.catalog);
        let dump = dump_graphs(set.reference_time, &cg, &tree);
        edges += dump.competition_edges.len();
        tree_edges += dump.tree_edges.len();
        out.push_str(&serde_json::to_string(&dump)?);
        out.push('\n');
    }
    create_dir(&args.out)?;
    write_file(&args.out.join("graphs.jsonl"), &out)?;
    println!(
        "{} windows, {edges} competition edges, {tree_edges} tree edges (t_h {t_h}, {pruning})",
        sets.len()
    );
    Ok(())
}

/// Everything besides the weights that a saved model needs to prepare
/// windows the way it was trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub spec: ModelSpec,
    pub scaling: InputScaling,
    pub pruning: PruningMode,
    pub utc_offset_secs: i32,
    pub split: SplitRatio,
    /// Reference time of the first test window.
    pub horizon: i64,
    pub checkpoint_version: u32,
}

struct LoadedModel {
    file: ModelFile,
    encoder: Encoder,
    model: GmeModel,
}

fn load_model(dir: &Path) -> anyhow::Result<LoadedModel> {
    let path = dir.join(MODEL_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| gme_core::Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if file.checkpoint_version != CHECKPOINT_VERSION {
        return Err(gme_core::Error::CheckpointVersion {
            found: file.checkpoint_version,
            expected: CHECKPOINT_VERSION,
        }
        .into());
    }
    let store = read_checkpoint(&dir.join(CHECKPOINT_FILE))?;
    let model = GmeModel::from_store(file.spec.clone(), store)?;
    let encoder = Encoder::load(dir.join(ENCODER_FILE))?;
    if encoder.dim() != file.spec.input_dim {
        return Err(gme_core::Error::Checkpoint(format!(
            "encoder width {} does not match model input {}",
            encoder.dim(),
            file.spec.input_dim
        ))
        .into());
    }
    Ok(LoadedModel {
        file,
        encoder,
        model,
    })
}

fn train_cmd(args: &TrainArgs) -> anyhow::Result<()> {
    let mut config = RunConfig::load_or_default(args.data.config.as_deref())?;
    apply_flags(&mut config.train, &args.train);
    config.train.validate()?;
    let market = load_market(&args.data, &config)?;
    let offset = UtcOffset(config.utc_offset_secs);
    let split = MarketSplit::new(&market.catalog, &market.log, offset, config.split)?;
    let tc = &config.train;
    let data = split.prepare(&market.catalog, &market.log, tc.t_h, tc.pruning)?;
    let start = Instant::now();
    let (model, history) = train(&data.train, Some(&data.test), tc)?;
    let secs = start.elapsed().as_secs_f64();

    create_dir(&args.out)?;
    write_checkpoint(&model.store, &args.out.join(CHECKPOINT_FILE))?;
    let file = ModelFile {
        spec: model.spec.clone(),
        scaling: split.scaling,
        pruning: tc.pruning,
        utc_offset_secs: config.utc_offset_secs,
        split: config.split,
        horizon: split.horizon,
        checkpoint_version: CHECKPOINT_VERSION,
    };
    write_file(
        &args.out.join(MODEL_FILE),
        &serde_json::to_string_pretty(&file)?,
    )?;
    split.encoder.save(args.out.join(ENCODER_FILE))?;
    write_file(&args.out.join(HISTORY_FILE), &history.to_json_lines()?)?;
    let last = history.epochs.last();
    let mut meta = Metadata::new("train", tc.seed, &config, market.inputs);
    meta.metrics = Some(serde_json::json!({
        "train_windows": data.train.len(),
        "test_windows": data.test.len(),
        "final_train_loss": last.map(|e| e.train_loss),
        "test": last.and_then(|e| e.validation),
        "wall_clock_secs": secs,
    }));
    meta.write(&args.out)?;
    match last.and_then(|e| e.validation) {
        Some(m) => println!(
            "trained {} epochs in {secs:.1}s; test MAE {:.4}, RMSE {:.4}",
            history.epochs.len(),
            m.mae,
            m.rmse
        ),
        None => println!("trained {} epochs in {secs:.1}s", history.epochs.len()),
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> anyhow::Result<()> {
    let mut config = RunConfig::load_or_default(args.data.config.as_deref())?;
    apply_flags(&mut config.train, &args.train);
    if !args.variants.is_empty() {
        config.eval.variants = args.variants.clone();
    }
    if !args.grid_t_h.is_empty() {
        config.eval.t_h = args.grid_t_h.clone();
    }
    if !args.grid_pruning.is_empty() {
        config.eval.pruning = args.grid_pruning.clone();
    }
    if let Some(jobs) = args.jobs {
        config.eval.jobs = jobs;
    }
    if args.model.is_none() && config.eval.variants.is_empty() && args.predictions.is_none() {
        return Err(CliError::Validation(
            "nothing to evaluate; pass --model, --variants or --predictions".into(),
        )
        .into());
    }
    // load everything that can fail on its own before any work
    let loaded = args.model.as_deref().map(load_model).transpose()?;
    let external = args
        .predictions
        .as_deref()
        .map(read_predictions)
        .transpose()?;
    config.train.validate()?;
    let market = load_market(&args.data, &config)?;
    let mut inputs = market.inputs.clone();

    let mut reports: Vec<MetricReport> = Vec::new();
    if let Some(lm) = &loaded {
        let offset = UtcOffset(lm.file.utc_offset_secs);
        let mut split = MarketSplit::new(&market.catalog, &market.log, offset, lm.file.split)?;
        split.encoder = lm.encoder.clone();
        split.scaling = lm.file.scaling;
        let data = split.prepare(
            &market.catalog,
            &market.log,
            lm.file.spec.t_h,
            lm.file.pruning,
        )?;
        let start = Instant::now();
        let preds = data
            .test
            .iter()
            .map(|w| lm.model.predict(w))
            .collect::<gme_core::Result<Vec<_>>>()?;
        let cfg = TrainConfig {
            t_h: lm.file.spec.t_h,
            pruning: lm.file.pruning,
            ablation: lm.file.spec.ablation,
            hidden: lm.file.spec.hidden,
            ..config.train.clone()
        };
        let name = format!("model:{}", lm.file.spec.ablation);
        reports.push(MetricReport::new(
            &name,
            &cfg,
            &data.test,
            &preds,
            start.elapsed().as_secs_f64(),
        )?);
        inputs.push(hash_file(
            &args.model.as_ref().unwrap().join(CHECKPOINT_FILE),
        )?);
    }

    let offset = UtcOffset(config.utc_offset_secs);
    if !config.eval.variants.is_empty() || external.is_some() {
        let split = MarketSplit::new(&market.catalog, &market.log, offset, config.split)?;
        if !config.eval.variants.is_empty() {
            let grid = Grid {
                t_h: if config.eval.t_h.is_empty() {
                    vec![config.train.t_h]
                } else {
                    config.eval.t_h.clone()
                },
                pruning: if config.eval.pruning.is_empty() {
                    vec![config.train.pruning]
                } else {
                    config.eval.pruning.clone()
                },
            };
            reports.extend(run_matrix(
                &market.catalog,
                &market.log,
                &split,
                &config.eval.variants,
                &grid,
                &config.train,
                config.eval.jobs,
            )?);
        }
        if let Some(preds) = &external {
            let tc = &config.train;
            let data = split.prepare(&market.catalog, &market.log, tc.t_h, tc.pruning)?;
            reports.push(score_predictions("external", tc, &data.test, preds)?);
            inputs.push(hash_file(args.predictions.as_ref().unwrap())?);
        }
    }

    create_dir(&args.out)?;
    let table = format_table(&reports);
    write_file(&args.out.join("reports.txt"), &table)?;
    write_file(&args.out.join("reports.jsonl"), &to_json_lines(&reports)?)?;
    write_file(&args.out.join("reports.csv"), &to_csv(&reports))?;
    let mut meta = Metadata::new("eval", config.train.seed, &config, inputs);
    meta.metrics = Some(serde_json::to_value(
        reports
            .iter()
            .map(|r| (format!("{}/{}/{}", r.variant, r.t_h, r.pruning), r.weighted))
            .collect::<HashMap<_, _>>(),
    )?);
    meta.write(&args.out)?;
    print!("{table}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct Prediction<'a> {
    project_id: &'a str,
    prediction: f64,
}

fn predict(args: &PredictArgs) -> anyhow::Result<()> {
    let config = RunConfig::load_or_default(args.data.config.as_deref())?;
    let lm = load_model(&args.model)?;
    let market = load_market(&args.data, &config)?;
    let targets = ingest_projects(&args.targets)?;
    check_rejections(&targets, "targets", false)?;
    let targets = targets.value;
    if targets.is_empty() {
        bail!(CliError::Validation("no target projects".into()));
    }
    let frontier = market
        .log
        .records()
        .iter()
        .map(|r| r.timestamp)
        .max()
        .unwrap_or(i64::MIN);
    let mut combined = market.catalog.clone();
    for t in targets.iter() {
        if t.launch_time < frontier {
            bail!(CliError::Validation(format!(
                "target {} launches at {}, before the newest investment record at {frontier}",
                t.id, t.launch_time
            )));
        }
        combined
            .insert(t.clone())
            .map_err(|e| CliError::Validation(format!("target {}: {e}", t.id)))?;
    }
    let ctx = MarketContext::new(&combined, &market.log, &lm.encoder, lm.file.scaling);
    let options = PrepareOptions {
        labels: false,
        aux_horizon: None,
    };
    let mut out = String::new();
    for set in build_target_sets(&targets, UtcOffset(lm.file.utc_offset_secs)) {
        let window = window_for(&set, &combined, lm.file.spec.t_h)?;
        let inputs = ctx.prepare(&window, lm.file.pruning, options)?;
        let preds = lm.model.predict(&inputs)?;
        for (id, &p) in inputs.target_ids.iter().zip(&preds) {
            out.push_str(&serde_json::to_string(&Prediction {
                project_id: id,
                prediction: p,
            })?);
            out.push('\n');
        }
    }
    match &args.out {
        Some(path) => write_file(path, &out)?,
        None => std::io::stdout().write_all(out.as_bytes())?,
    }
    Ok(())
}
