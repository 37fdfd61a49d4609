//! `sgrbm`: synthetic data, preprocessing, training, scoring, evaluation and
//! fusion for shared-subspace GRBM speaker verification.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use subspace_grbm::data::{self, CountRange, Format, IVectorCorpus, PartitionSpec, WhiteningTransform};
use subspace_grbm::grbm::{read_model, write_model, GrbmParams, ParamGradient};
use subspace_grbm::plda::{self, read_plda, write_plda, PldaParams, DEFAULT_EM_ITERS};
use subspace_grbm::scoring::{self, content_hash, FusionWeights, ScoreFile, Scorer};
use subspace_grbm::train::{self, CvSets, TrainConfig};
use subspace_grbm::{eval, synth, Error};

use config::ConfigFile;

#[derive(Parser)]
#[command(name = "sgrbm", version, about = "Shared-subspace GRBM speaker verification")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a labeled corpus from a ground-truth model.
    Synth(SynthArgs),
    /// Duration filter, partition, whitening and optional unit-sphere projection.
    Preprocess(PreprocessArgs),
    /// Train a GRBM (or a PLDA model with --plda).
    Train(TrainArgs),
    /// Score all model-speaker × test-vector trials.
    Score(ScoreArgs),
    /// EER, minDCF and DET points of a labeled score file.
    Eval(EvalArgs),
    /// Train fusion weights on CV scores and apply them.
    Fuse(FuseArgs),
}

/// Validation failures detected by the CLI itself; exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_range(s: &str) -> Result<CountRange, String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo = lo.trim().parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi = hi.trim().parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
    Ok(CountRange::new(lo, hi))
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected a,b")?;
    Ok((
        a.trim().parse().map_err(|_| format!("bad number `{a}`"))?,
        b.trim().parse().map_err(|_| format!("bad number `{b}`"))?,
    ))
}

#[derive(Args)]
struct SynthArgs {
    /// Model file (GRBM or PLDA) or `random:p,ds,dc`.
    #[arg(long)]
    truth: String,
    #[arg(long)]
    speakers: usize,
    /// Inclusive range of vectors per speaker, `lo:hi`.
    #[arg(long, value_parser = parse_range)]
    per_speaker: CountRange,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Input corpus (.csv, or .ivec for binary).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Records strictly shorter than this many seconds are dropped.
    #[arg(long, default_value_t = 10.0)]
    min_duration: f64,
    #[arg(long, value_parser = parse_range, default_value = "3:10")]
    train_range: CountRange,
    #[arg(long, value_parser = parse_range, default_value = "11:15")]
    eval_range: CountRange,
    #[arg(long, default_value_t = 15)]
    cv_min: usize,
    #[arg(long, default_value_t = 5)]
    enroll: usize,
    /// Project whitened vectors onto the unit sphere.
    #[arg(long)]
    unit_sphere: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Latent dimensions `speaker,channel`.
    #[arg(long, value_parser = parse_pair)]
    dims: (usize, usize),
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch report; defaults to `<out>.report.csv`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Flat `key = value` file; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Speakers per mini-batch.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    cd_steps: Option<usize>,
    #[arg(long)]
    learn_sigma: bool,
    #[arg(long)]
    init_std: Option<f64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long, requires = "cv_test")]
    cv_model: Option<PathBuf>,
    #[arg(long, requires = "cv_model")]
    cv_test: Option<PathBuf>,
    /// Write parameters and momentum state after every epoch into this directory.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Write 0 in the report's timing column so seeded runs are byte-identical.
    #[arg(long)]
    deterministic: bool,
    /// Train a PLDA model instead of a GRBM.
    #[arg(long)]
    plda: bool,
    /// With --plda: train on F-projected, unit-normalized vectors of this GRBM.
    #[arg(long, requires = "plda")]
    fproj: Option<PathBuf>,
    #[arg(long)]
    em_iters: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScorerKind {
    Llr,
    Cos,
    Cosnorm,
    Plda,
    PldaFproj,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long, value_enum)]
    scorer: ScorerKind,
    /// GRBM model, or the PLDA model for `--scorer plda`.
    #[arg(long)]
    model: PathBuf,
    /// PLDA model for `--scorer plda-fproj`.
    #[arg(long)]
    plda: Option<PathBuf>,
    /// Enrollment corpus; every speaker becomes one model.
    #[arg(long)]
    model_set: PathBuf,
    #[arg(long)]
    test_set: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Add the exact partition terms to LLR scores (small models only).
    #[arg(long)]
    exact_z: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Metrics as `key value` lines.
    #[arg(long)]
    out: PathBuf,
    /// DET staircase CSV.
    #[arg(long)]
    det: Option<PathBuf>,
    #[arg(long, default_value_t = eval::DEFAULT_FA_COST)]
    fa_cost: f64,
}

#[derive(Args)]
struct FuseArgs {
    /// Labeled cross-validation score files, one per system.
    #[arg(long, num_args = 1.., required_unless_present = "load_weights")]
    cv_scores: Vec<PathBuf>,
    /// Score files to fuse, in the same system order.
    #[arg(long, num_args = 1..)]
    apply: Vec<PathBuf>,
    /// Where to write the trained weights.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Use stored weights instead of training.
    #[arg(long, conflicts_with = "cv_scores")]
    load_weights: Option<PathBuf>,
    #[arg(long, requires = "apply")]
    out: Option<PathBuf>,
}

fn load_corpus(path: &Path) -> anyhow::Result<IVectorCorpus> {
    data::load_corpus(path, Format::from_path(path)).with_context(|| format!("reading {}", path.display()))
}

fn save_corpus(corpus: &IVectorCorpus, path: &Path) -> anyhow::Result<()> {
    data::save_corpus(corpus, path, Format::from_path(path)).with_context(|| format!("writing {}", path.display()))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> subspace_grbm::Result<()>) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    Ok(())
}

fn grbm_bytes(params: &GrbmParams) -> Vec<u8> {
    let mut buf = Vec::new();
    write_model(params, &mut buf).expect("writing to memory");
    buf
}

enum Model {
    Grbm(GrbmParams, Vec<u8>),
    Plda(PldaParams, Vec<u8>),
}

fn load_model(path: &Path) -> anyhow::Result<Model> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    match bytes.get(..4) {
        Some(b"GRBM") => Ok(Model::Grbm(read_model(&bytes[..]).with_context(|| format!("parsing {}", path.display()))?, bytes)),
        Some(b"PLDA") => Ok(Model::Plda(read_plda(&bytes[..]).with_context(|| format!("parsing {}", path.display()))?, bytes)),
        _ => Err(usage(format!("{} is neither a GRBM nor a PLDA model file", path.display()))),
    }
}

fn load_grbm(path: &Path) -> anyhow::Result<(GrbmParams, Vec<u8>)> {
    match load_model(path)? {
        Model::Grbm(p, b) => Ok((p, b)),
        Model::Plda(..) => Err(usage(format!("{} is a PLDA model, a GRBM was expected", path.display()))),
    }
}

fn load_plda(path: &Path) -> anyhow::Result<(PldaParams, Vec<u8>)> {
    match load_model(path)? {
        Model::Plda(p, b) => Ok((p, b)),
        Model::Grbm(..) => Err(usage(format!("{} is a GRBM model, a PLDA model was expected", path.display()))),
    }
}

fn cmd_synth(a: SynthArgs) -> anyhow::Result<()> {
    fs::create_dir_all(&a.out_dir)?;
    let (corpus, manifest, truth_name, truth_bytes) = if let Some(spec) = a.truth.strip_prefix("random:") {
        let dims: Vec<usize> = spec
            .split(',')
            .map(|d| d.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| usage(format!("bad random truth spec `{spec}`")))?;
        let [p, ds, dc] = dims[..] else {
            return Err(usage("random truth needs `random:p,ds,dc`"));
        };
        let truth = synth::random_truth(p, ds, dc, a.seed)?;
        let (c, m) = synth::synth_corpus(&truth, a.speakers, a.per_speaker, a.seed)?;
        (c, m, "truth.grbm", grbm_bytes(&truth))
    } else {
        match load_model(Path::new(&a.truth))? {
            Model::Grbm(truth, bytes) => {
                let (c, m) = synth::synth_corpus(&truth, a.speakers, a.per_speaker, a.seed)?;
                (c, m, "truth.grbm", bytes)
            }
            Model::Plda(truth, bytes) => {
                let (c, m) = synth::synth_plda_corpus(&truth, a.speakers, a.per_speaker, a.seed)?;
                (c, m, "truth.plda", bytes)
            }
        }
    };
    save_corpus(&corpus, &a.out_dir.join("corpus.csv"))?;
    fs::write(a.out_dir.join(truth_name), truth_bytes)?;
    write_file(&a.out_dir.join("manifest.txt"), |w| manifest.write(w))?;
    eprintln!(
        "wrote {} vectors of {} speakers to {}",
        corpus.len(),
        corpus.num_speakers(),
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_preprocess(a: PreprocessArgs) -> anyhow::Result<()> {
    let corpus = load_corpus(&a.data)?.filter_by_duration(a.min_duration);
    let spec = PartitionSpec {
        train_range: a.train_range,
        eval_range: a.eval_range,
        cv_min: a.cv_min,
        enroll_per_speaker: a.enroll,
    };
    let parts = spec.apply(&corpus)?;
    if parts.train.is_empty() {
        bail!(Error::EmptyCorpus);
    }
    let whitening = WhiteningTransform::fit(&parts.train)?;
    fs::create_dir_all(&a.out_dir)?;
    for (name, part) in [
        ("train", &parts.train),
        ("model", &parts.model),
        ("test", &parts.test),
        ("model_cv", &parts.model_cv),
        ("test_cv", &parts.test_cv),
    ] {
        let mut out = whitening.apply(part)?;
        if a.unit_sphere {
            out = out.unit_sphere_project()?;
        }
        save_corpus(&out, &a.out_dir.join(format!("{name}.csv")))?;
        eprintln!("{name}: {} vectors, {} speakers", out.len(), out.num_speakers());
    }
    Ok(())
}

/// Effective training settings: explicit flags, then the config file, then
/// defaults.
fn train_config(a: &TrainArgs, file: &ConfigFile) -> anyhow::Result<TrainConfig> {
    let d = TrainConfig::default();
    Ok(TrainConfig {
        learning_rate: a.lr.or(file.get("lr")?).unwrap_or(d.learning_rate),
        momentum: a.momentum.or(file.get("momentum")?).unwrap_or(d.momentum),
        weight_decay: a.weight_decay.or(file.get("weight-decay")?).unwrap_or(d.weight_decay),
        batch_speakers: a.batch.or(file.get("batch")?).unwrap_or(d.batch_speakers),
        epochs: a.epochs.or(file.get("epochs")?).unwrap_or(d.epochs),
        cd_steps: a.cd_steps.or(file.get("cd-steps")?).unwrap_or(d.cd_steps),
        learn_sigma: a.learn_sigma || file.get("learn-sigma")?.unwrap_or(d.learn_sigma),
        init_weight_std: a.init_std.or(file.get("init-std")?).unwrap_or(d.init_weight_std),
        seed: a.seed.or(file.get("seed")?).unwrap_or(d.seed),
        eval_every: a.eval_every.or(file.get("eval-every")?).unwrap_or(d.eval_every),
    })
}

fn settings_line(c: &TrainConfig, dims: (usize, usize)) -> String {
    format!(
        "# dims={},{} lr={:?} momentum={:?} weight-decay={:?} batch={} epochs={} cd-steps={} learn-sigma={} init-std={:?} seed={} eval-every={}",
        dims.0,
        dims.1,
        c.learning_rate,
        c.momentum,
        c.weight_decay,
        c.batch_speakers,
        c.epochs,
        c.cd_steps,
        c.learn_sigma,
        c.init_weight_std,
        c.seed,
        c.eval_every
    )
}

fn gradient_as_params(g: &ParamGradient) -> GrbmParams {
    GrbmParams {
        visible_bias: g.visible_bias.clone(),
        speaker_bias: g.speaker_bias.clone(),
        channel_bias: g.channel_bias.clone(),
        speaker_loading: g.speaker_loading.clone(),
        channel_loading: g.channel_loading.clone(),
        log_variance: g.log_variance.clone(),
    }
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<()> {
    let file = match &a.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let corpus = load_corpus(&a.data)?;
    if a.plda {
        return train_plda(&a, &file, &corpus);
    }
    let config = train_config(&a, &file)?;
    let cv = match (&a.cv_model, &a.cv_test) {
        (Some(m), Some(t)) => Some((load_corpus(m)?, load_corpus(t)?)),
        _ => None,
    };
    let cv_sets = cv.as_ref().map(|(model, test)| CvSets { model, test });

    let speakers: Vec<_> = corpus.speaker_data()?.into_iter().map(|(_, d)| d).collect();
    if speakers.is_empty() {
        bail!(Error::EmptyCorpus);
    }
    let init = train::seeded_init(corpus.dim(), a.dims.0, a.dims.1, &config)?;
    if let Some(dir) = &a.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }
    let mut observer = |t: &train::Trainer, e: &train::EpochReport| -> subspace_grbm::Result<()> {
        eprintln!(
            "epoch {:>3}  recon_err {:.6}  grad_norm {:.6}{}",
            e.epoch,
            e.recon_err,
            e.grad_norm,
            e.cv_min_dcf.map(|v| format!("  cv_mindcf {v:.4}")).unwrap_or_default()
        );
        if let Some(dir) = &a.checkpoint_dir {
            let stem = format!("epoch{:04}", e.epoch);
            write_model(t.params(), BufWriter::new(File::create(dir.join(format!("{stem}.grbm")))?))?;
            write_model(
                &gradient_as_params(t.velocity()),
                BufWriter::new(File::create(dir.join(format!("{stem}.velocity.grbm")))?),
            )?;
        }
        Ok(())
    };
    let (params, report) = train::train_observed(init, speakers, &config, cv_sets, &mut observer)?;
    write_file(&a.out, |w| write_model(&params, w))?;
    let report_path = a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".report.csv"));
    let header = settings_line(&config, a.dims);
    write_file(&report_path, |w| {
        writeln!(w, "{header}")?;
        report.write_csv(w, !a.deterministic)
    })?;
    if let Some(e) = report.best_epoch {
        eprintln!("kept parameters of epoch {e} (lowest CV minDCF)");
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn train_plda(a: &TrainArgs, file: &ConfigFile, corpus: &IVectorCorpus) -> anyhow::Result<()> {
    let em_iters = a.em_iters.or(file.get("em-iters")?).unwrap_or(DEFAULT_EM_ITERS);
    let seed = a.seed.or(file.get("seed")?).unwrap_or(0);
    let features = match &a.fproj {
        Some(path) => {
            let (grbm, _) = load_grbm(path)?;
            corpus.map_values(|r| scoring::project_f(&grbm, &r.values))?
        }
        None => corpus.clone(),
    };
    let params = plda::plda_train(&features, a.dims.0, a.dims.1, em_iters, seed)?;
    if params.is_overparameterized() {
        eprintln!(
            "warning: {} + {} latent dimensions exceed the feature dimension {}",
            a.dims.0,
            a.dims.1,
            params.dim()
        );
    }
    write_file(&a.out, |w| write_plda(&params, w))?;
    Ok(())
}

fn cmd_score(a: ScoreArgs) -> anyhow::Result<()> {
    let model_set = load_corpus(&a.model_set)?;
    let test_set = load_corpus(&a.test_set)?;
    if a.exact_z && a.scorer != ScorerKind::Llr {
        return Err(usage("--exact-z only applies to --scorer llr"));
    }
    if a.plda.is_some() && a.scorer != ScorerKind::PldaFproj {
        return Err(usage("--plda only applies to --scorer plda-fproj"));
    }
    let (grbm, plda_model, hash) = match a.scorer {
        ScorerKind::Plda => {
            let (p, b) = load_plda(&a.model)?;
            (None, Some(p), content_hash(&b))
        }
        ScorerKind::PldaFproj => {
            let plda_path = a.plda.as_ref().ok_or_else(|| usage("--scorer plda-fproj needs --plda"))?;
            let (g, gb) = load_grbm(&a.model)?;
            let (p, pb) = load_plda(plda_path)?;
            (Some(g), Some(p), format!("{}+{}", content_hash(&gb), content_hash(&pb)))
        }
        _ => {
            let (g, b) = load_grbm(&a.model)?;
            (Some(g), None, content_hash(&b))
        }
    };
    let scorer = match a.scorer {
        ScorerKind::Llr => Scorer::Llr {
            params: grbm.as_ref().unwrap(),
            exact_z: a.exact_z,
        },
        ScorerKind::Cos => Scorer::Cosine(grbm.as_ref().unwrap()),
        ScorerKind::Cosnorm => Scorer::CosineNormalized(grbm.as_ref().unwrap()),
        ScorerKind::Plda => Scorer::Plda(plda_model.as_ref().unwrap()),
        ScorerKind::PldaFproj => Scorer::PldaProjected {
            grbm: grbm.as_ref().unwrap(),
            plda: plda_model.as_ref().unwrap(),
        },
    };
    let mut scores = scoring::score_corpora(&scorer, &model_set, &test_set)?;
    scores.metadata.push(("model_hash".into(), hash));
    if a.exact_z {
        scores.metadata.push(("exact_z".into(), "true".into()));
    }
    scores.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("{} trials scored with {}", scores.entries.len(), scorer.name());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<()> {
    let scores = ScoreFile::load(&a.scores).with_context(|| format!("reading {}", a.scores.display()))?;
    let report = eval::compute_metrics_file(&scores, a.fa_cost)?;
    write_file(&a.out, |w| eval::write_metrics(&report, w))?;
    if let Some(det) = &a.det {
        write_file(det, |w| eval::write_det(&report, w))?;
    }
    eprintln!("eer {:.4}  min_dcf {:.4}", report.eer, report.min_dcf);
    Ok(())
}

fn load_scores(paths: &[PathBuf]) -> anyhow::Result<Vec<ScoreFile>> {
    paths
        .iter()
        .map(|p| ScoreFile::load(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn cmd_fuse(a: FuseArgs) -> anyhow::Result<()> {
    let weights = match &a.load_weights {
        Some(path) => FusionWeights::read(File::open(path).with_context(|| format!("reading {}", path.display()))?)?,
        None => {
            let cv = load_scores(&a.cv_scores)?;
            let w = scoring::fuse_train(&cv)?;
            eprintln!("fusion objective on CV: {:.6}", scoring::fusion_objective(&w, &cv)?);
            w
        }
    };
    if let Some(path) = &a.weights {
        write_file(path, |w| weights.write(w))?;
    }
    if !a.apply.is_empty() {
        let out = a.out.as_ref().ok_or_else(|| usage("--apply needs --out"))?;
        let files = load_scores(&a.apply)?;
        let fused = scoring::fuse_apply(&weights, &files)?;
        fused.save(out).with_context(|| format!("writing {}", out.display()))?;
    } else if a.weights.is_none() {
        return Err(usage("nothing to do: give --weights and/or --apply with --out"));
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("configuring thread pool: {e}"))?;
    }
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Train(a) => cmd_train(a),
        Command::Score(a) => cmd_score(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Fuse(a) => cmd_fuse(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return if e.is_validation() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
