use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use hexplane::checkpoint::Checkpoint;
use hexplane::cloud::{load_pointcloud_auto, save_pointcloud, synth_scene, CloudFormat, PointCloud, SceneSpec};
use hexplane::config::RunConfig;
use hexplane::gradcheck::{self, COMPONENTS};
use hexplane::metrics::{range_image_samples, MetricReport};
use hexplane::model::{predict, train_toy, Batch, ModelConfig, ModelParams, PlanesConfig};
use hexplane::projection::{encode_index_sidecar, export_planes, hexplane_project, rasterize_labels, PlaneKind, RasterRecipe};
use hexplane::scenes;
use hexplane::Error;

#[derive(Parser)]
#[command(name = "hexplane", version, about = "Six-plane projection, cross-attention fusion and segmentation metrics for point clouds")]
struct Cli {
    /// Worker threads; 0 uses one per hardware thread. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic labeled scene to a point-cloud file.
    Synth(SynthArgs),
    /// Project a cloud onto the six planes and export images plus the index sidecar.
    Project(ProjectArgs),
    /// Train the model on the configured scenes; writes a checkpoint and a JSONL log.
    Train(TrainArgs),
    /// Score predictions against labels and print a metric report.
    Eval(EvalArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Empty room, floor vs walls.
    Separable,
    /// Room with short and tall boxes (4 classes).
    Objects,
    /// Two walls occluding each other in the range view.
    TwoWall,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Ascii,
    Binary,
}

impl From<FormatArg> for CloudFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Ascii => CloudFormat::Ascii,
            FormatArg::Binary => CloudFormat::Binary,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description (TOML); overrides --preset.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Built-in scene used when --scene is absent.
    #[arg(long, value_enum, default_value = "objects")]
    preset: Preset,
    /// Scene seed for presets.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of points for presets (ignored by two-wall).
    #[arg(long, default_value_t = 1500)]
    points: usize,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    /// Output encoding.
    #[arg(long, value_enum, default_value = "binary")]
    format: FormatArg,
}

#[derive(Args)]
struct ProjectArgs {
    /// Input cloud (ASCII or binary, detected from the contents).
    #[arg(long)]
    input: PathBuf,
    /// Run config whose [model.planes] table sets the grids; defaults apply otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the exported files.
    #[arg(long)]
    out_dir: PathBuf,
    /// File name stem of the exported files.
    #[arg(long, default_value = "cloud")]
    stem: String,
}

#[derive(Args)]
struct TrainArgs {
    /// Run config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override train.steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override output_dir.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Source {
    /// Predictions of the checkpointed model.
    Model,
    /// The labels themselves (sanity check; every score is perfect).
    GroundTruth,
    /// Uniformly random scores from --seed.
    Random,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Domain {
    /// Every labeled point.
    Points,
    /// One sample per occupied range-image pixel.
    RangeImage,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint written by `train`; required for --source model.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Labeled cloud files to score; may be repeated.
    #[arg(long)]
    cloud: Vec<PathBuf>,
    /// Run config; its eval_scenes (or scenes) are used when no --cloud is given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where predictions come from.
    #[arg(long, value_enum, default_value = "model")]
    source: Source,
    /// Samples the segmentation metrics are computed over.
    #[arg(long, value_enum, default_value = "points")]
    domain: Domain,
    /// Class count when neither a checkpoint nor a config supplies one.
    #[arg(long)]
    classes: Option<usize>,
    /// Seed for --source random.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report as JSON to this path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Component to check, or `all`.
    #[arg(long, default_value = "all")]
    component: String,
    /// First instance seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 1)]
    instances: u64,
    /// Print per-group errors as JSON lines.
    #[arg(long)]
    json: bool,
}

/// Stored in the checkpoint so `eval` can rebuild the model.
#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    model: ModelConfig,
    seed: u64,
    steps: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("building the thread pool")
        .and_then(|_| run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_numerical));
            ExitCode::from(if numerical { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Project(a) => cmd_project(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn cmd_synth(a: SynthArgs) -> anyhow::Result<()> {
    let cloud = match (&a.scene, a.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let spec: SceneSpec = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            synth_scene(&spec)?
        }
        (None, Preset::Separable) => synth_scene(&scenes::separable_scene(a.seed, a.points))?,
        (None, Preset::Objects) => synth_scene(&scenes::objects_room(a.seed, a.points))?,
        (None, Preset::TwoWall) => scenes::two_wall_scene()?.cloud,
    };
    save_pointcloud(&cloud, &a.out, a.format.into()).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} points to {}", cloud.len(), a.out.display());
    Ok(())
}

fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn load_cloud(path: &Path) -> anyhow::Result<PointCloud> {
    load_pointcloud_auto(path).with_context(|| format!("loading {}", path.display()))
}

fn cmd_project(a: ProjectArgs) -> anyhow::Result<()> {
    let planes = match &a.config {
        Some(p) => load_config(p)?.model.planes,
        None => PlanesConfig::default(),
    };
    let cloud = load_cloud(&a.input)?;
    let specs = planes.specs(&cloud)?;
    let hex = hexplane_project(&cloud, &specs, &RasterRecipe::default())?;
    let labels = match cloud.labels() {
        Some(_) => Some(rasterize_labels(&cloud, &hex)?),
        None => None,
    };
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut written = export_planes(&hex, labels.as_deref(), &a.out_dir, &a.stem)?;
    let sidecar = a.out_dir.join(format!("{}.index.bin", a.stem));
    fs::write(&sidecar, encode_index_sidecar(&hex))?;
    written.push(sidecar);
    for kind in PlaneKind::ALL {
        let occupied = hex.plane(kind).index.winner.iter().flatten().count();
        println!("{:<12} {occupied} occupied pixels", kind.name());
    }
    println!("wrote {} files to {}", written.len(), a.out_dir.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(s) = a.steps {
        cfg.train.steps = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.output_dir {
        cfg.output_dir = d;
    }
    cfg.validate()?;
    if cfg.scenes.is_empty() {
        bail!(Error::Config("no [[scenes]] to train on".into()));
    }
    let clouds = cfg.scenes.iter().map(|s| s.build()).collect::<hexplane::Result<Vec<_>>>()?;
    let outcome = train_toy(&cfg.model, &cfg.train, &clouds, cfg.seed)?;
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let meta = CheckpointMeta {
        model: cfg.model.clone(),
        seed: cfg.seed,
        steps: cfg.train.steps,
    };
    let ckpt = Checkpoint::from_params(serde_json::to_string(&meta)?, &outcome.params);
    let ckpt_path = cfg.output_dir.join("checkpoint.bin");
    ckpt.save(&ckpt_path)?;
    let log_path = cfg.output_dir.join("train_log.jsonl");
    let mut log = fs::File::create(&log_path)?;
    for r in &outcome.log {
        writeln!(log, "{}", serde_json::to_string(r)?)?;
    }
    if let Some(last) = outcome.log.last() {
        println!("step {} total {:.4} main {:.4} oa {:.4}", last.step, last.total, last.main, last.oa);
    }
    println!("wrote {} and {}", ckpt_path.display(), log_path.display());
    Ok(())
}

fn load_model(path: &Path) -> anyhow::Result<(ModelConfig, ModelParams)> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let meta: CheckpointMeta = serde_json::from_str(&ckpt.metadata)
        .map_err(|e| Error::format(format!("checkpoint metadata: {e}")))?;
    let mut params = ModelParams::init(&meta.model, meta.seed)?;
    ckpt.load_into(&mut params)?;
    Ok((meta.model, params))
}

fn softmax_rows(logits: &mut [f64], k: usize) {
    for row in logits.chunks_exact_mut(k) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<()> {
    let run_cfg = a.config.as_deref().map(load_config).transpose()?;
    let model = a.checkpoint.as_deref().map(load_model).transpose()?;
    if a.source == Source::Model && model.is_none() {
        bail!(Error::Config("--source model needs --checkpoint".into()));
    }
    let model_cfg = match (&model, &run_cfg, a.classes) {
        (Some((m, _)), _, _) => m.clone(),
        (None, Some(c), _) => c.model.clone(),
        (None, None, Some(k)) => ModelConfig::new(k),
        _ => bail!(Error::Config("give --checkpoint, --config or --classes".into())),
    };
    if let Some(k) = a.classes {
        if k != model_cfg.classes {
            bail!(Error::Config(format!("--classes {k} disagrees with the model's {}", model_cfg.classes)));
        }
    }
    model_cfg.validate()?;
    let k = model_cfg.classes;
    let clouds: Vec<PointCloud> = if !a.cloud.is_empty() {
        a.cloud.iter().map(|p| load_cloud(p)).collect::<anyhow::Result<_>>()?
    } else if let Some(c) = &run_cfg {
        let list = if c.eval_scenes.is_empty() { &c.scenes } else { &c.eval_scenes };
        if list.is_empty() {
            bail!(Error::Config("config has no scenes to evaluate".into()));
        }
        list.iter().map(|s| s.build()).collect::<hexplane::Result<_>>()?
    } else {
        bail!(Error::Config("give --cloud or --config".into()));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for cloud in clouds {
        if cloud.labels().is_none() {
            bail!(Error::invalid("evaluation clouds must be labeled"));
        }
        let batch = Batch::new(cloud, &model_cfg)?;
        let truth = batch.labels().expect("checked above");
        let n = truth.len();
        let mut s = match a.source {
            Source::Model => {
                let (cfg, params) = model.as_ref().expect("checked above");
                let mut logits = predict(params, &batch, cfg.bypass_ham)?;
                softmax_rows(&mut logits, k);
                logits
            }
            Source::GroundTruth => {
                let mut s = vec![0.0; n * k];
                for (i, l) in truth.iter().enumerate() {
                    s[i * k + l.unwrap_or(0) as usize] = 1.0;
                }
                s
            }
            Source::Random => (0..n * k).map(|_| rng.random::<f64>()).collect(),
        };
        let mut l = truth.to_vec();
        if a.domain == Domain::RangeImage {
            let keep = range_image_samples(&batch.hex.plane(PlaneKind::Cylindrical).index);
            s = keep.iter().flat_map(|&i| s[i * k..(i + 1) * k].to_vec()).collect();
            l = keep.iter().map(|&i| l[i]).collect();
        }
        scores.extend(s);
        labels.extend(l);
    }
    let report = MetricReport::from_scores(&scores, &labels, k)?;
    print!("{}", report.to_table());
    if let Some(p) = &a.json {
        fs::write(p, report.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> anyhow::Result<()> {
    let components: Vec<&str> = if a.component == "all" {
        COMPONENTS.iter().copied().filter(|c| *c != "mutation").collect()
    } else {
        vec![a.component.as_str()]
    };
    let mut failed = 0;
    for c in components {
        for seed in a.seed..a.seed + a.instances {
            let r = gradcheck::run(c, seed)?;
            let verdict = if r.passed() { "PASS" } else { "FAIL" };
            println!("{verdict} {c:<14} seed {seed:<4} max rel error {:.3e} (tol {:.0e})", r.max_error(), r.tolerance);
            if a.json {
                println!("{}", serde_json::to_string(&r)?);
            }
            failed += !r.passed() as usize;
        }
    }
    if failed > 0 {
        bail!(Error::Numerical(format!("{failed} gradient check(s) failed")));
    }
    Ok(())
}
