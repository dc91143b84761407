//! Subcommands of the `treecut` binary. Artifacts (trees, cuts, clusterings,
//! CSVs) go to `--out` or stdout; one-line JSON summaries go to stderr.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 data error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use treecut::baselines::{run_bf, run_erm};
use treecut::eval::{best_cut, hamming_distance, partition_distance, PairCountTable};
use treecut::harness::{
    generate_tree, plant_cut, run_experiment, summarize, tune, write_csv, AlgoKind, AlgorithmSpec, ExperimentSpec,
    PlantSpec, Trial, TreeKind, RESULT_HEADERS, SUMMARY_HEADERS,
};
use treecut::linkage::{agglomerate, load_csv, load_idx_images, load_idx_labels, tree_report, Linkage, DEFAULT_MATRIX_CAP};
use treecut::nr::{run_nr, NrStop, SamplerConfig};
use treecut::oracle::{
    load_labels, MajorityLabeler, Metered, NodeLabeler, NoiseConfig, NoiseMode, NoisyMatrix, PairLabeler,
    PartitionMatrix, SimilarityMatrix,
};
use treecut::ots::run_ots;
use treecut::wdp::{run_nwdp, run_wdp, NwdpConfig};
use treecut::{k_tilde, Cut, Error, Hierarchy, LcaIndex, Prior};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Data(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::EmptyGrid
            | Error::BadSize { .. }
            | Error::BudgetTooLarge { .. }
            | Error::MemoryBudgetExceeded { .. } => Failure::Config(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn config(e: impl fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn data(e: impl fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

type Outcome = Result<(), Failure>;

#[derive(Debug, Parser)]
#[command(name = "treecut", version, about = "Active learning of flat clusterings from a hierarchical-clustering tree")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a tree from points (CSV or IDX) by agglomerative clustering.
    Linkage(LinkageArgs),
    /// Generate a full, line or random tree.
    GenTree(GenTreeArgs),
    /// Plant a target cut in a tree.
    Plant(PlantArgs),
    /// Best cut in hindsight for a (possibly noisy) reference.
    Best(BestArgs),
    /// Run an experiment from a JSON config, or one algorithm on one instance.
    Run(RunArgs),
    /// Tune one algorithm's parameter on a trial's validation pairs.
    Tune(TuneArgs),
    /// Shape statistics of a tree, and of a cut when given.
    Stats(StatsArgs),
    /// Serve labeling sessions over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InputFormat {
    Csv,
    Idx,
}

#[derive(Debug, Args)]
pub struct LinkageArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Guessed from the extension when omitted (`.csv` or IDX).
    #[arg(long)]
    pub format: Option<InputFormat>,
    /// IDX label file matching an IDX image input.
    #[arg(long)]
    pub idx_labels: Option<PathBuf>,
    /// Use only the first N points.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value = "single")]
    pub linkage: Linkage,
    #[arg(long)]
    pub out: PathBuf,
    /// Writes `leaf_id,label` rows for labeled input.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MATRIX_CAP)]
    pub matrix_cap: usize,
}

#[derive(Debug, Args)]
pub struct GenTreeArgs {
    #[arg(long, default_value = "random")]
    pub kind: TreeKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlantArgs {
    #[arg(long)]
    pub tree: PathBuf,
    /// All nodes at this depth, plus shallower leaves.
    #[arg(long, group = "source")]
    pub depth: Option<usize>,
    /// Sample from the constant prior with this value.
    #[arg(long, group = "source")]
    pub alpha: Option<f64>,
    /// Sample from a prior file; the uniform prior when no source is given.
    #[arg(long, group = "source")]
    pub prior: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

/// Ground truth and noise of a pair oracle.
#[derive(Debug, Args)]
pub struct TruthArgs {
    /// `leaf_id,label` CSV of true classes.
    #[arg(long, group = "truth")]
    pub labels: Option<PathBuf>,
    /// Planted cut file (JSON array of node ids).
    #[arg(long, group = "truth")]
    pub cut: Option<PathBuf>,
    /// Planted cut of all nodes at this depth.
    #[arg(long, group = "truth")]
    pub depth: Option<usize>,
    /// Fraction of pair answers flipped, persistently.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long, default_value = "auto")]
    pub noise_mode: NoiseMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BestArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[command(flatten)]
    pub truth: TruthArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Ots,
    Wdp,
    Nwdp,
    Nr,
    Erm,
    Bf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config (JSON); the remaining single-run flags are ignored.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for trials.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Results CSV with a config; clustering JSON for a single run.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-(algorithm, budget) mean and std CSV.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub tree: Option<PathBuf>,
    #[arg(long)]
    pub algorithm: Option<Algorithm>,
    #[command(flatten)]
    pub truth: TruthArgs,
    /// Maximum number of pair queries.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Prior file for path search; uniform when absent.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Small-node threshold scale for noise-tolerant path search.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub vote_multiplier: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Votes per node query; one by default for the noiseless searches.
    #[arg(long)]
    pub votes: Option<usize>,
    /// Sampling constant of the selective sampler.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Round limit of the selective sampler.
    #[arg(long, default_value_t = 1_000_000)]
    pub max_rounds: u64,
    /// Per-step trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub algorithm: AlgoKind,
    #[arg(long)]
    pub budget: u64,
    #[arg(long, default_value_t = 0)]
    pub trial: usize,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long)]
    pub cut: Option<PathBuf>,
    /// Prior for the cut's log-probability; uniform when absent.
    #[arg(long)]
    pub prior: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Sessions are saved here after every answer and resumed at start.
    #[arg(long)]
    pub snapshot_dir: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Linkage(a) => linkage(a),
        Command::GenTree(a) => gen_tree(a),
        Command::Plant(a) => plant(a),
        Command::Best(a) => best(a),
        Command::Run(a) => match a.config.clone() {
            Some(path) => experiment(&path, a),
            None => single_run(a),
        },
        Command::Tune(a) => tune_cmd(a),
        Command::Stats(a) => stats(a),
        Command::Serve(a) => serve(a),
    }
}

fn emit_json(out: Option<&Path>, value: &impl Serialize) -> Outcome {
    let text = serde_json::to_string(value).map_err(data)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| data(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn report(value: serde_json::Value) {
    eprintln!("{value}");
}

fn load_tree(path: &Path) -> Result<Hierarchy, Failure> {
    Hierarchy::load(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn load_cut(h: &Hierarchy, path: &Path) -> Result<Cut, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let cut: Cut = serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", path.display())))?;
    h.validate_cut(&cut)?;
    Ok(cut)
}

fn load_prior(h: &Hierarchy, path: Option<&Path>) -> Result<Prior, Failure> {
    match path {
        Some(p) => Prior::load(p, h).map_err(|e| match e {
            Error::InvalidParameter(_) => config(format!("{}: {e}", p.display())),
            e => data(format!("{}: {e}", p.display())),
        }),
        None => Ok(Prior::uniform(h, &h.count_cuts())),
    }
}

fn write_labels(path: &Path, labels: impl Iterator<Item = String>) -> Outcome {
    let mut w = csv::Writer::from_path(path).map_err(data)?;
    w.write_record(["leaf_id", "label"]).map_err(data)?;
    for (i, l) in labels.enumerate() {
        w.write_record([i.to_string(), l]).map_err(data)?;
    }
    w.flush().map_err(data)
}

fn linkage(a: LinkageArgs) -> Outcome {
    let format = a.format.unwrap_or(match a.input.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => InputFormat::Csv,
        _ => InputFormat::Idx,
    });
    let mut points = match format {
        InputFormat::Csv => load_csv(&a.input),
        InputFormat::Idx => load_idx_images(&a.input, a.limit),
    }
    .map_err(|e| data(format!("{}: {e}", a.input.display())))?;
    if let Some(n) = a.limit {
        points.truncate(n);
    }
    if let Some(p) = &a.idx_labels {
        let labels = load_idx_labels(p, a.limit).map_err(|e| data(format!("{}: {e}", p.display())))?;
        if labels.len() != points.len() {
            return Err(data(format!("{} labels for {} points", labels.len(), points.len())));
        }
        points.labels = Some(labels.iter().map(u8::to_string).collect());
    }
    let d = agglomerate(&points, a.linkage, a.matrix_cap)?;
    d.tree.save(&a.out).map_err(data)?;
    if let Some(p) = &a.labels_out {
        let labels = points.labels.as_ref().ok_or_else(|| config("--labels-out needs labeled input"))?;
        write_labels(p, labels.iter().cloned())?;
    }
    let mut r = serde_json::to_value(tree_report(&d.tree)).map_err(data)?;
    r["linkage"] = json!(a.linkage);
    r["max_height"] = json!(d.heights.iter().copied().fold(0.0, f64::max));
    report(r);
    Ok(())
}

fn gen_tree(a: GenTreeArgs) -> Outcome {
    let h = generate_tree(a.kind, a.n, a.seed)?;
    emit_json(a.out.as_deref(), &h.to_file())?;
    report(serde_json::to_value(tree_report(&h)).map_err(data)?);
    Ok(())
}

fn plant(a: PlantArgs) -> Outcome {
    let h = load_tree(&a.tree)?;
    let cut = match (a.depth, a.alpha, &a.prior) {
        (Some(d), _, _) => plant_cut(&h, &PlantSpec::Depth { depth: d }, a.seed)?,
        (_, Some(alpha), _) => plant_cut(&h, &PlantSpec::Prior { alpha: Some(alpha) }, a.seed)?,
        (_, _, Some(p)) => load_prior(&h, Some(p))?.sample_cut(&h, &mut ChaCha8Rng::seed_from_u64(a.seed)),
        _ => plant_cut(&h, &PlantSpec::Prior { alpha: None }, a.seed)?,
    };
    emit_json(a.out.as_deref(), &cut)?;
    if let Some(p) = &a.labels_out {
        write_labels(p, h.cut_membership(&cut)?.into_iter().map(|m| m.to_string()))?;
    }
    report(json!({ "k": cut.k(), "k_tilde": k_tilde(&h, &cut)? }));
    Ok(())
}

/// Reference matrix plus the noiseless per-leaf classes.
fn reference(h: &Hierarchy, t: &TruthArgs) -> Result<(Box<dyn SimilarityMatrix>, Vec<u32>), Failure> {
    let n = h.n_leaves();
    let base = match (&t.labels, &t.cut, t.depth) {
        (Some(p), _, _) => {
            let labels = load_labels(p, n).map_err(|e| data(format!("{}: {e}", p.display())))?;
            PartitionMatrix::from_labels(&labels, n)?
        }
        (_, Some(p), _) => PartitionMatrix::planted(h, &load_cut(h, p)?)?,
        (_, _, Some(d)) => PartitionMatrix::planted(h, &h.cut_at_depth(d))?,
        _ => return Err(config("give one of --labels, --cut or --depth")),
    };
    let truth = base.ids().to_vec();
    let m: Box<dyn SimilarityMatrix> = if t.lambda > 0.0 {
        Box::new(NoisyMatrix::new(base, NoiseConfig { lambda: t.lambda, seed: t.seed, mode: t.noise_mode })?)
    } else {
        NoiseConfig::new(t.lambda, t.seed).validate()?;
        Box::new(base)
    };
    Ok((m, truth))
}

fn best(a: BestArgs) -> Outcome {
    let h = load_tree(&a.tree)?;
    let (m, _) = reference(&h, &a.truth)?;
    let lca = LcaIndex::new(&h);
    let b = best_cut(&h, &PairCountTable::from_matrix(&h, &lca, &m)?);
    emit_json(a.out.as_deref(), &b.cut)?;
    let n = h.n_leaves() as f64;
    report(json!({ "k": b.k, "d_h": b.d_h, "error": b.d_h / (n * (n - 1.0)) }));
    Ok(())
}

fn experiment(path: &Path, a: RunArgs) -> Outcome {
    let mut spec = ExperimentSpec::load(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    if a.jobs.is_some() {
        spec.jobs = a.jobs;
    }
    if a.out.is_some() {
        spec.output = a.out;
    }
    if a.summary.is_some() {
        spec.summary = a.summary;
    }
    spec.validate().map_err(config)?;
    let res = run_experiment(&spec)?;
    let sink = |p: &Option<PathBuf>| -> Result<Box<dyn Write>, Failure> {
        Ok(match p {
            Some(p) => Box::new(std::fs::File::create(p).map_err(|e| data(format!("{}: {e}", p.display())))?),
            None => Box::new(std::io::stdout().lock()),
        })
    };
    write_csv(&spec, &res.rows, &RESULT_HEADERS, sink(&spec.output)?)?;
    let summary = summarize(&res.rows);
    if spec.summary.is_some() {
        write_csv(&spec, &summary, &SUMMARY_HEADERS, sink(&spec.summary)?)?;
    }
    for s in &summary {
        report(serde_json::to_value(s).map_err(data)?);
    }
    Ok(())
}

fn trace_file(p: &Path) -> Result<std::fs::File, Failure> {
    std::fs::File::create(p).map_err(|e| data(format!("{}: {e}", p.display())))
}

fn single_run(a: RunArgs) -> Outcome {
    let tree = a.tree.as_deref().ok_or_else(|| config("give --config, or --tree with --algorithm"))?;
    let algorithm = a.algorithm.ok_or_else(|| config("--algorithm is required without --config"))?;
    let h = load_tree(tree)?;
    let (matrix, truth) = reference(&h, &a.truth)?;
    let oracle = match a.budget {
        Some(b) => Metered::with_budget(&matrix, b),
        None => Metered::new(&matrix),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.truth.seed.wrapping_add(1));
    let lca = LcaIndex::new(&h);
    let votes = a.votes.unwrap_or(1);
    if votes == 0 {
        return Err(config("--votes must be positive"));
    }
    let trace = a.trace.as_deref();
    let label = |labeler: &mut dyn FnMut(&mut dyn NodeLabeler) -> Outcome| -> Outcome {
        if votes == 1 {
            labeler(&mut PairLabeler { oracle: &oracle, rng: ChaCha8Rng::seed_from_u64(a.truth.seed.wrapping_add(2)) })
        } else {
            labeler(&mut MajorityLabeler {
                oracle: &oracle,
                rng: ChaCha8Rng::seed_from_u64(a.truth.seed.wrapping_add(2)),
                votes,
            })
        }
    };
    let mut cut = None;
    match algorithm {
        Algorithm::Ots => label(&mut |l| {
            let r = run_ots(&h, l);
            if let Some(p) = trace {
                treecut::ots::write_trace(&r.steps, trace_file(p)?).map_err(data)?;
            }
            cut = Some(r.cut);
            Ok(())
        })?,
        Algorithm::Wdp => {
            let prior = load_prior(&h, a.prior.as_deref())?;
            label(&mut |l| {
                let r = run_wdp(&h, &prior, l);
                if let Some(p) = trace {
                    treecut::wdp::write_trace(&r.searches, trace_file(p)?).map_err(data)?;
                }
                cut = Some(r.cut);
                Ok(())
            })?
        }
        Algorithm::Nwdp => {
            let prior = load_prior(&h, a.prior.as_deref())?;
            let d = NwdpConfig::default();
            let cfg = NwdpConfig {
                lambda: a.truth.lambda,
                delta: a.delta.unwrap_or(d.delta),
                alpha: a.alpha.unwrap_or(d.alpha),
                vote_multiplier: a.vote_multiplier.unwrap_or(d.vote_multiplier),
                votes: a.votes,
                budget: None,
            };
            let r = run_nwdp(&h, &prior, &oracle, &cfg, &mut rng)?;
            if let Some(p) = trace {
                treecut::wdp::write_trace(&r.wdp.searches, trace_file(p)?).map_err(data)?;
            }
            cut = Some(r.cut);
        }
        Algorithm::Nr => {
            let cfg = SamplerConfig { delta: a.delta.unwrap_or(SamplerConfig::default().delta), c1: a.c, c2: a.c };
            let stop = NrStop { query_budget: a.budget, max_rounds: a.max_rounds };
            let r = run_nr(&h, &lca, &oracle, &cfg, stop, trace.is_some(), &mut rng)?;
            if let Some(p) = trace {
                treecut::nr::write_trace(&r.trace, trace_file(p)?).map_err(data)?;
            }
            cut = Some(r.cut);
        }
        Algorithm::Erm => {
            let m = a.budget.ok_or_else(|| config("erm needs --budget (the number of sampled pairs)"))?;
            cut = Some(run_erm(&h, &lca, &oracle, m, false, &mut rng).cut);
        }
        Algorithm::Bf => label(&mut |l| {
            cut = Some(run_bf(&h, l).cut);
            Ok(())
        })?,
    }
    let cut = cut.expect("every algorithm yields a cut");
    let clustering = h.cut_to_clustering(&cut)?;
    emit_json(a.out.as_deref(), &clustering)?;
    let n = h.n_leaves();
    let pairs = n as f64 * (n as f64 - 1.0);
    let error = hamming_distance(&matrix, &clustering, &mut rng)?.fraction(n);
    let to_truth = partition_distance(&truth, &clustering.membership(n))? as f64 / pairs;
    report(json!({
        "algorithm": format!("{algorithm:?}").to_lowercase(),
        "queries": treecut::oracle::PairOracle::queries(&oracle),
        "k": clustering.k(),
        "error": error,
        "distance_to_truth": to_truth,
    }));
    Ok(())
}

fn tune_cmd(a: TuneArgs) -> Outcome {
    let spec = ExperimentSpec::load(&a.config).map_err(|e| config(format!("{}: {e}", a.config.display())))?;
    if a.trial >= spec.trials {
        return Err(config(format!("trial {} out of range (trials = {})", a.trial, spec.trials)));
    }
    let algo = spec.algorithms.iter().find(|s| s.kind == a.algorithm).cloned().unwrap_or_else(|| AlgorithmSpec::new(a.algorithm));
    let h = spec.tree.load()?;
    let lca = LcaIndex::new(&h);
    let trial = Trial::new(&spec, &h, &lca, a.trial)?;
    let (tuned, out) = tune(&trial, &algo, a.budget)?;
    emit_json(None, &tuned)?;
    report(json!({ "queries": out.queries, "k": out.k_out }));
    Ok(())
}

fn stats(a: StatsArgs) -> Outcome {
    let h = load_tree(&a.tree)?;
    let mut r = serde_json::to_value(tree_report(&h)).map_err(data)?;
    if let Some(p) = &a.cut {
        let cut = load_cut(&h, p)?;
        let prior = load_prior(&h, a.prior.as_deref())?;
        r["cut"] = json!({
            "k": cut.k(),
            "k_tilde": k_tilde(&h, &cut)?,
            "log2_probability": prior.log_cut_probability(&h, &cut)? / std::f64::consts::LN_2,
        });
    }
    emit_json(None, &r)
}

fn serve(a: ServeArgs) -> Outcome {
    if let Some(dir) = &a.snapshot_dir {
        std::fs::create_dir_all(dir).map_err(|e| config(format!("{}: {e}", dir.display())))?;
    }
    let rt = tokio::runtime::Runtime::new().map_err(data)?;
    rt.block_on(treecut_service::serve((a.host, a.port).into(), a.snapshot_dir))
        .map_err(|e| match e {
            Error::Io(e) if e.kind() == std::io::ErrorKind::AddrInUse => config(e),
            e => Failure::from(e),
        })
}
