//! Seeded experiments: planted, labeled, or noisy instances; per-budget
//! parameter tuning on held-out validation pairs; learning-curve CSVs.

use crate::baselines::{run_bf, run_erm};
use crate::error::{Error, Result};
use crate::eval::{best_cut, excess_risk, hamming_distance, BestCut, Distance, PairCountTable, PairSample};
use crate::hierarchy::{Clustering, Cut, Hierarchy};
use crate::lca::LcaIndex;
use crate::nr::{run_nr, NrStop, SamplerConfig};
use crate::oracle::{
    load_labels, mix64, Capped, MajorityLabeler, Metered, NoiseConfig, NoiseMode, NoisyMatrix, PairLabeler,
    PairOracle, PartitionMatrix, SimilarityMatrix,
};
use crate::prior::Prior;
use crate::wdp::{run_nwdp, NwdpConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeKind {
    Full,
    Line,
    Random,
}

impl std::str::FromStr for TreeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(TreeKind::Full),
            "line" => Ok(TreeKind::Line),
            "random" => Ok(TreeKind::Random),
            _ => Err(Error::InvalidParameter(format!("unknown tree kind {s:?}"))),
        }
    }
}

/// Builds a tree over leaves `0..n` in left-to-right order. `Line` hangs one
/// leaf off each spine node; `Random` splits every leaf range at a uniform point.
pub fn generate_tree(kind: TreeKind, n: usize, seed: u64) -> Result<Hierarchy> {
    let bad = |kind| Err(Error::BadSize { kind, n });
    if n < 2 {
        return bad("any");
    }
    if kind == TreeKind::Full && !n.is_power_of_two() {
        return bad("full (power of two)");
    }
    let mut children: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (lo, hi, slot to patch with the new node id)
    let mut stack: Vec<(usize, usize, Option<(usize, bool)>)> = vec![(0, n, None)];
    while let Some((lo, hi, up)) = stack.pop() {
        let id = if hi - lo == 1 {
            lo
        } else {
            let mid = match kind {
                TreeKind::Full => lo + (hi - lo) / 2,
                TreeKind::Line => lo + 1,
                TreeKind::Random => rng.gen_range(lo + 1..hi),
            };
            children.push(Some((usize::MAX, usize::MAX)));
            let id = children.len() - 1;
            stack.push((mid, hi, Some((id, true))));
            stack.push((lo, mid, Some((id, false))));
            id
        };
        if let Some((p, right)) = up {
            let c = children[p].as_mut().unwrap();
            if right {
                c.1 = id;
            } else {
                c.0 = id;
            }
        }
    }
    Hierarchy::from_children(&children, vec![])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum TreeSource {
    File { path: PathBuf },
    Generate { kind: TreeKind, n: usize, #[serde(default)] seed: u64 },
}

impl TreeSource {
    pub fn load(&self) -> Result<Hierarchy> {
        match self {
            TreeSource::File { path } => Hierarchy::load(path),
            TreeSource::Generate { kind, n, seed } => generate_tree(*kind, *n, *seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "plant", rename_all = "lowercase")]
pub enum PlantSpec {
    /// All nodes at this depth, plus shallower leaves.
    Depth { depth: usize },
    /// A fresh cut per trial drawn from the uniform (or constant-`alpha`) prior.
    Prior { #[serde(default)] alpha: Option<f64> },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "truth", rename_all = "lowercase")]
pub enum TruthSpec {
    Planted(PlantSpec),
    Labels { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    #[serde(flatten)]
    pub truth: TruthSpec,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_noise_mode")]
    pub noise_mode: NoiseMode,
}

fn default_noise_mode() -> NoiseMode {
    NoiseMode::Auto
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgoKind {
    Nwdp,
    Nr,
    Erm,
    Bf,
}

impl AlgoKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgoKind::Nwdp => "nwdp",
            AlgoKind::Nr => "nr",
            AlgoKind::Erm => "erm",
            AlgoKind::Bf => "bf",
        }
    }

    /// Tuned parameter: vote multiplier (N-WDP), sampling constant (NR),
    /// votes per node (BF). ERM has none.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            AlgoKind::Nwdp => vec![0.5, 1.0, 2.0, 4.0],
            AlgoKind::Nr => vec![0.01, 0.03, 0.1, 0.3, 1.0],
            AlgoKind::Erm => vec![0.0],
            AlgoKind::Bf => vec![1.0, 3.0, 5.0, 9.0, 15.0],
        }
    }
}

impl std::str::FromStr for AlgoKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nwdp" | "n-wdp" => Ok(AlgoKind::Nwdp),
            "nr" => Ok(AlgoKind::Nr),
            "erm" => Ok(AlgoKind::Erm),
            "bf" => Ok(AlgoKind::Bf),
            _ => Err(Error::InvalidParameter(format!("unknown algorithm {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub kind: AlgoKind,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    /// N-WDP base settings; `lambda` defaults to the oracle's noise rate.
    #[serde(default)]
    pub nwdp: Option<NwdpConfig>,
    /// Constant-prior parameter for N-WDP; uniform when absent.
    #[serde(default)]
    pub prior_alpha: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    /// NR round limit as a multiple of the budget.
    #[serde(default = "default_round_factor")]
    pub round_factor: u64,
}

fn default_round_factor() -> u64 {
    200
}

impl AlgorithmSpec {
    pub fn new(kind: AlgoKind) -> Self {
        Self { kind, grid: None, nwdp: None, prior_alpha: None, delta: None, round_factor: default_round_factor() }
    }

    pub fn grid(&self) -> Vec<f64> {
        self.grid.clone().unwrap_or_else(|| self.kind.default_grid())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub tree: TreeSource,
    pub oracle: OracleSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    pub budgets: Vec<u64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Per-trial seeds; `seed + trial` when absent.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_validation")]
    pub validation_pairs: usize,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub summary: Option<PathBuf>,
}

fn default_trials() -> usize {
    10
}

fn default_validation() -> usize {
    500
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("budgets must be strictly ascending".into()));
        }
        if let Some(s) = &self.seeds {
            if s.len() != self.trials {
                return Err(Error::InvalidParameter(format!("{} seeds given for {} trials", s.len(), self.trials)));
            }
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidParameter("jobs must be positive".into()));
        }
        NoiseConfig { lambda: self.oracle.lambda, seed: 0, mode: self.oracle.noise_mode }.validate()?;
        for a in &self.algorithms {
            if a.grid().is_empty() {
                return Err(Error::EmptyGrid);
            }
        }
        Ok(())
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seeds.as_ref().map_or(self.seed.wrapping_add(trial as u64), |s| s[trial])
    }

    pub fn resolved_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }
}

fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix64(base), |acc, &t| mix64(acc ^ t.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Everything one trial needs: the instance, its reference, the held-out
/// validation pairs and the best cut in hindsight.
pub struct Trial<'h> {
    pub h: &'h Hierarchy,
    pub lca: &'h LcaIndex,
    pub index: usize,
    pub seed: u64,
    pub matrix: Box<dyn SimilarityMatrix>,
    pub validation: PairSample,
    pub best: BestCut,
    pub best_distance: Distance,
    pub lambda: f64,
}

impl<'h> Trial<'h> {
    pub fn new(spec: &ExperimentSpec, h: &'h Hierarchy, lca: &'h LcaIndex, index: usize) -> Result<Self> {
        let seed = spec.trial_seed(index);
        let n = h.n_leaves();
        let base = match &spec.oracle.truth {
            TruthSpec::Labels { path } => PartitionMatrix::from_labels(&load_labels(path, n)?, n)?,
            TruthSpec::Planted(plant) => PartitionMatrix::planted(h, &plant_cut(h, plant, derive_seed(seed, &[1]))?)?,
        };
        let lambda = spec.oracle.lambda;
        let matrix: Box<dyn SimilarityMatrix> = if lambda > 0.0 {
            let cfg = NoiseConfig { lambda, seed: derive_seed(seed, &[2]), mode: spec.oracle.noise_mode };
            Box::new(NoisyMatrix::new(base, cfg)?)
        } else {
            Box::new(base)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3]));
        let validation = PairSample::draw(n, spec.validation_pairs, None, &mut rng);
        let best = best_cut(h, &PairCountTable::from_matrix(h, lca, &matrix)?);
        let best_distance = hamming_distance(&matrix, &h.cut_to_clustering(&best.cut)?, &mut rng)?;
        Ok(Self { h, lca, index, seed, matrix, validation, best, best_distance, lambda })
    }

    /// Runs one algorithm to `budget` pair queries with parameter `param`.
    pub fn run(&self, algo: &AlgorithmSpec, budget: u64, param: f64) -> Result<RunOutcome> {
        let h = self.h;
        let oracle = Metered::new(&self.matrix);
        let capped = Capped::new(&oracle, Some(budget));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[4, algo.kind as u64, budget]));
        let cut: Cut = match algo.kind {
            AlgoKind::Nwdp => {
                let mut cfg = algo.nwdp.unwrap_or(NwdpConfig { lambda: self.lambda, ..NwdpConfig::default() });
                cfg.vote_multiplier = param;
                cfg.budget = Some(budget);
                if let Some(d) = algo.delta {
                    cfg.delta = d;
                }
                let prior = match algo.prior_alpha {
                    Some(a) => Prior::constant(h, a)?,
                    None => Prior::uniform(h, &h.count_cuts()),
                };
                run_nwdp(h, &prior, &capped, &cfg, &mut rng)?.cut
            }
            AlgoKind::Nr => {
                let mut cfg = SamplerConfig::scaled(param);
                if let Some(d) = algo.delta {
                    cfg.delta = d;
                }
                let stop = NrStop { query_budget: Some(budget), max_rounds: budget.saturating_mul(algo.round_factor) };
                run_nr(h, self.lca, &capped, &cfg, stop, false, &mut rng)?.cut
            }
            AlgoKind::Erm => run_erm(h, self.lca, &capped, budget, true, &mut rng).cut,
            AlgoKind::Bf => {
                let votes = param.round().max(1.0) as usize;
                if votes == 1 {
                    run_bf(h, &mut PairLabeler { oracle: &capped, rng: &mut rng }).cut
                } else {
                    run_bf(h, &mut MajorityLabeler { oracle: &capped, rng: &mut rng, votes }).cut
                }
            }
        };
        let clustering = h.cut_to_clustering(&cut)?;
        Ok(RunOutcome { queries: capped.queries(), clustering, k_out: cut.k(), cut })
    }

    pub fn validation_error(&self, c: &Clustering) -> f64 {
        self.validation.error(&self.matrix, &c.membership(self.h.n_leaves()))
    }

    /// Disagreement fraction over all unordered pairs outside the validation
    /// sample, and excess risk over all pairs.
    pub fn test_metrics(&self, c: &Clustering) -> Result<(f64, f64)> {
        let n = self.h.n_leaves();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[5]));
        let d = hamming_distance(&self.matrix, c, &mut rng)?;
        let val_bad = self.validation_error(c) * self.validation.pairs.len() as f64;
        let held_out = crate::oracle::pair_total(n) as f64 - self.validation.pairs.len() as f64;
        let test = ((d.ordered_pairs / 2.0 - val_bad) / held_out).max(0.0);
        Ok((test, excess_risk(&d, &self.best_distance, n)))
    }
}

/// The target cut a planted oracle answers from.
pub fn plant_cut(h: &Hierarchy, plant: &PlantSpec, seed: u64) -> Result<Cut> {
    match plant {
        PlantSpec::Depth { depth } => Ok(h.cut_at_depth(*depth)),
        PlantSpec::Prior { alpha } => {
            let prior = match alpha {
                Some(a) => Prior::constant(h, *a)?,
                None => Prior::uniform(h, &h.count_cuts()),
            };
            Ok(prior.sample_cut(h, &mut ChaCha8Rng::seed_from_u64(seed)))
        }
        PlantSpec::File { path } => {
            let cut: Cut = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            h.validate_cut(&cut)?;
            Ok(cut)
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub cut: Cut,
    pub clustering: Clustering,
    pub queries: u64,
    pub k_out: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tuned {
    pub param: f64,
    pub validation_error: f64,
    /// Validation error for every grid value, in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Runs every grid value and keeps the lowest validation error; ties go to
/// the smallest parameter.
pub fn tune(trial: &Trial, algo: &AlgorithmSpec, budget: u64) -> Result<(Tuned, RunOutcome)> {
    let grid = algo.grid();
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut scores = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64, RunOutcome)> = None;
    for &p in &grid {
        let out = trial.run(algo, budget, p)?;
        let err = trial.validation_error(&out.clustering);
        scores.push((p, err));
        let better = match &best {
            None => true,
            Some((bp, be, _)) => err < *be || (err == *be && p < *bp),
        };
        if better {
            best = Some((p, err, out));
        }
    }
    let (param, validation_error, out) = best.unwrap();
    Ok((Tuned { param, validation_error, scores }, out))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub algo: &'static str,
    pub param: f64,
    pub trial: usize,
    pub seed: u64,
    pub budget: u64,
    pub queries_used: u64,
    pub validation_error: f64,
    pub test_error: f64,
    pub excess_risk: f64,
    pub k_out: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algo: &'static str,
    pub budget: u64,
    pub trials: usize,
    pub queries_mean: f64,
    pub test_error_mean: f64,
    pub test_error_std: f64,
    pub excess_risk_mean: f64,
    pub excess_risk_std: f64,
    pub k_out_mean: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Sorted by algorithm order in the spec, then trial, then budget.
    pub rows: Vec<ResultRow>,
    /// Best cut in hindsight per trial: (test error, K).
    pub best: Vec<(f64, usize)>,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let h = spec.tree.load()?;
    let lca = LcaIndex::new(&h);
    let work = || -> Result<Vec<(Vec<ResultRow>, (f64, usize))>> {
        (0..spec.trials)
            .into_par_iter()
            .map(|t| {
                let trial = Trial::new(spec, &h, &lca, t)?;
                let best_clustering = h.cut_to_clustering(&trial.best.cut)?;
                let best = (trial.test_metrics(&best_clustering)?.0, trial.best.k);
                let mut rows = Vec::new();
                for (ai, algo) in spec.algorithms.iter().enumerate() {
                    for &budget in &spec.budgets {
                        let (tuned, out) = tune(&trial, algo, budget)?;
                        let (test_error, excess) = trial.test_metrics(&out.clustering)?;
                        rows.push((ai, ResultRow {
                            algo: algo.kind.name(),
                            param: tuned.param,
                            trial: t,
                            seed: trial.seed,
                            budget,
                            queries_used: out.queries,
                            validation_error: tuned.validation_error,
                            test_error,
                            excess_risk: excess,
                            k_out: out.k_out,
                        }));
                    }
                }
                rows.sort_by_key(|(ai, r)| (*ai, r.budget));
                Ok((rows.into_iter().map(|(_, r)| r).collect(), best))
            })
            .collect()
    };
    let per_trial = match spec.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let order = |r: &ResultRow| spec.algorithms.iter().position(|a| a.kind.name() == r.algo).unwrap_or(usize::MAX);
    let mut rows: Vec<ResultRow> = Vec::new();
    let mut best = Vec::new();
    for (r, b) in per_trial {
        rows.extend(r);
        best.push(b);
    }
    rows.sort_by(|a, b| order(a).cmp(&order(b)).then(a.trial.cmp(&b.trial)).then(a.budget.cmp(&b.budget)));
    Ok(ExperimentResult { rows, best })
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population std over trials per (algorithm, budget).
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(&'static str, u64)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.algo, r.budget)) {
            keys.push((r.algo, r.budget));
        }
    }
    keys.into_iter()
        .map(|(algo, budget)| {
            let g: Vec<&ResultRow> = rows.iter().filter(|r| r.algo == algo && r.budget == budget).collect();
            let (te, ts) = mean_std(g.iter().map(|r| r.test_error));
            let (ee, es) = mean_std(g.iter().map(|r| r.excess_risk));
            SummaryRow {
                algo,
                budget,
                trials: g.len(),
                queries_mean: mean_std(g.iter().map(|r| r.queries_used as f64)).0,
                test_error_mean: te,
                test_error_std: ts,
                excess_risk_mean: ee,
                excess_risk_std: es,
                k_out_mean: mean_std(g.iter().map(|r| r.k_out as f64)).0,
            }
        })
        .collect()
}

/// Writes `# config: <json>` followed by the rows as CSV. A header is always written.
pub fn write_csv<T: Serialize, W: Write>(spec: &ExperimentSpec, rows: &[T], headers: &[&str], mut out: W) -> Result<()> {
    writeln!(out, "# config: {}", spec.resolved_json())?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(headers)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const RESULT_HEADERS: [&str; 10] = [
    "algo",
    "param",
    "trial",
    "seed",
    "budget",
    "queries_used",
    "validation_error",
    "test_error",
    "excess_risk",
    "k_out",
];

pub const SUMMARY_HEADERS: [&str; 9] = [
    "algo",
    "budget",
    "trials",
    "queries_mean",
    "test_error_mean",
    "test_error_std",
    "excess_risk_mean",
    "excess_risk_std",
    "k_out_mean",
];
