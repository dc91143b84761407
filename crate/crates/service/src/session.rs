//! Labeling sessions. Each session runs its learner on a dedicated thread
//! against [`HumanBridge`], which parks the thread until a person answers.
//! Persistent state is only the tree, the configuration, the seed and the
//! ordered answers: replaying those answers through the same seeded learner
//! reproduces every later step, so snapshots and mid-run clusterings are
//! both computed by replay.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard, RwLock};
use std::time::Duration;
use treecut::baselines::run_bf;
use treecut::hierarchy::TreeFile;
use treecut::nr::{run_nr, NrStop, SamplerConfig};
use treecut::oracle::{Halted, MajorityLabeler, PairLabeler, PairOracle, Sign};
use treecut::wdp::{run_nwdp, NwdpConfig};
use treecut::{Clustering, Hierarchy, LcaIndex, LeafId, Prior};

pub type SessionId = u64;

/// Anything that can learn a clustering from pair queries. The run must be
/// a deterministic function of the seed and the answers it receives.
pub trait Learner: Send + Sync + 'static {
    fn run(&self, h: &Hierarchy, oracle: &dyn PairOracle, seed: u64) -> treecut::Result<Clustering>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NwdpParams {
    /// Constant prior; uniform over cuts when absent.
    pub prior_alpha: Option<f64>,
    pub lambda: f64,
    pub delta: f64,
    pub alpha: f64,
    pub vote_multiplier: f64,
    /// Votes per node; one when `lambda` is zero, computed otherwise.
    pub votes: Option<usize>,
}

impl Default for NwdpParams {
    fn default() -> Self {
        Self { prior_alpha: None, lambda: 0.0, delta: 0.05, alpha: 0.0, vote_multiplier: 2.0, votes: None }
    }
}

impl NwdpParams {
    fn config(&self) -> NwdpConfig {
        NwdpConfig {
            lambda: self.lambda,
            delta: self.delta,
            alpha: self.alpha,
            vote_multiplier: self.vote_multiplier,
            votes: self.votes.or((self.lambda == 0.0).then_some(1)),
            budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NrParams {
    pub c1: f64,
    pub c2: f64,
    pub delta: f64,
    pub max_rounds: u64,
}

impl Default for NrParams {
    fn default() -> Self {
        let s = SamplerConfig::default();
        Self { c1: s.c1, c2: s.c2, delta: s.delta, max_rounds: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BfParams {
    pub votes: usize,
}

impl Default for BfParams {
    fn default() -> Self {
        Self { votes: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", content = "params", rename_all = "lowercase")]
pub enum LearnerConfig {
    Nwdp(NwdpParams),
    Nr(NrParams),
    Bf(BfParams),
}

impl LearnerConfig {
    /// Parses `algorithm` plus its optional parameter object.
    pub fn parse(algorithm: &str, params: Option<serde_json::Value>) -> Result<Self, String> {
        let params = params.unwrap_or_else(|| serde_json::json!({}));
        let cfg: Self = serde_json::from_value(serde_json::json!({ "algorithm": algorithm, "params": params }))
            .map_err(|e| format!("invalid algorithm or parameters: {e}"))?;
        cfg.validate(None)?;
        Ok(cfg)
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerConfig::Nwdp(_) => "nwdp",
            LearnerConfig::Nr(_) => "nr",
            LearnerConfig::Bf(_) => "bf",
        }
    }

    pub fn validate(&self, h: Option<&Hierarchy>) -> Result<(), String> {
        match self {
            LearnerConfig::Nwdp(p) => {
                p.config().validate().map_err(|e| e.to_string())?;
                if let (Some(a), Some(h)) = (p.prior_alpha, h) {
                    Prior::constant(h, a).map_err(|e| e.to_string())?;
                }
                Ok(())
            }
            LearnerConfig::Nr(p) => SamplerConfig { c1: p.c1, c2: p.c2, delta: p.delta }.validate().map_err(|e| e.to_string()),
            LearnerConfig::Bf(p) if p.votes == 0 => Err("votes must be at least 1".into()),
            LearnerConfig::Bf(_) => Ok(()),
        }
    }
}

impl Learner for LearnerConfig {
    fn run(&self, h: &Hierarchy, oracle: &dyn PairOracle, seed: u64) -> treecut::Result<Clustering> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            LearnerConfig::Nwdp(p) => {
                let prior = match p.prior_alpha {
                    Some(a) => Prior::constant(h, a)?,
                    None => Prior::uniform(h, &h.count_cuts()),
                };
                Ok(run_nwdp(h, &prior, oracle, &p.config(), &mut rng)?.clustering)
            }
            LearnerConfig::Nr(p) => {
                let lca = LcaIndex::new(h);
                let cfg = SamplerConfig { c1: p.c1, c2: p.c2, delta: p.delta };
                let stop = NrStop { query_budget: None, max_rounds: p.max_rounds };
                Ok(run_nr(h, &lca, oracle, &cfg, stop, false, &mut rng)?.clustering)
            }
            LearnerConfig::Bf(p) => {
                let run = if p.votes == 1 {
                    run_bf(h, &mut PairLabeler { oracle, rng })
                } else {
                    run_bf(h, &mut MajorityLabeler { oracle, rng, votes: p.votes })
                };
                h.cut_to_clustering(&run.cut)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: u64,
    pub a: LeafId,
    pub b: LeafId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub a: LeafId,
    pub b: LeafId,
    pub similar: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Poll {
    Done,
    Ask(Question),
    Working,
}

#[derive(Default)]
struct State {
    pending: Option<Question>,
    answers: Vec<Answer>,
    cache: HashMap<(LeafId, LeafId), bool>,
    cache_hits: u64,
    /// The worker is computing; neither waiting for an answer nor finished.
    busy: bool,
    done: bool,
    stop: bool,
    result: Option<Clustering>,
    error: Option<String>,
}

struct Shared {
    state: Mutex<State>,
    changed: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }
}

fn key(a: LeafId, b: LeafId) -> (LeafId, LeafId) {
    (a.min(b), a.max(b))
}

/// Worker-side oracle. A cached pair is answered at once; a new pair becomes
/// the pending question and the calling thread waits for the answer.
pub struct HumanBridge {
    shared: Arc<Shared>,
    budget: Option<u64>,
    answered: AtomicU64,
}

impl PairOracle for HumanBridge {
    fn answer(&self, a: LeafId, b: LeafId) -> Result<Sign, Halted> {
        let k = key(a, b);
        let mut s = self.shared.lock();
        if let Some(&v) = s.cache.get(&k) {
            s.cache_hits += 1;
            self.answered.fetch_add(1, Ordering::Relaxed);
            return Ok(Sign::from_bool(v));
        }
        if s.stop {
            return Err(Halted::Stopped);
        }
        if self.budget.is_some_and(|b| s.answers.len() as u64 >= b) {
            return Err(Halted::Budget);
        }
        s.pending = Some(Question { id: s.answers.len() as u64 + 1, a: k.0, b: k.1 });
        s.busy = false;
        self.shared.changed.notify_all();
        loop {
            s = self.shared.changed.wait(s).unwrap_or_else(|p| p.into_inner());
            if let Some(&v) = s.cache.get(&k) {
                self.answered.fetch_add(1, Ordering::Relaxed);
                return Ok(Sign::from_bool(v));
            }
            if s.stop {
                s.pending = None;
                return Err(Halted::Stopped);
            }
        }
    }

    fn queries(&self) -> u64 {
        self.answered.load(Ordering::Relaxed)
    }
}

/// Answers from a fixed cache and halts at the first unknown pair.
struct Replay<'a> {
    cache: &'a HashMap<(LeafId, LeafId), bool>,
    answered: AtomicU64,
}

impl PairOracle for Replay<'_> {
    fn answer(&self, a: LeafId, b: LeafId) -> Result<Sign, Halted> {
        let v = *self.cache.get(&key(a, b)).ok_or(Halted::Stopped)?;
        self.answered.fetch_add(1, Ordering::Relaxed);
        Ok(Sign::from_bool(v))
    }

    fn queries(&self) -> u64 {
        self.answered.load(Ordering::Relaxed)
    }
}

/// On-disk form of a session.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: SessionId,
    pub seed: u64,
    pub budget: Option<u64>,
    #[serde(flatten)]
    pub learner: LearnerConfig,
    pub tree: TreeFile,
    pub answers: Vec<Answer>,
    pub stopped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubmitError {
    /// The question id is not the pending one.
    Stale { given: u64, pending: Option<u64> },
}

#[derive(Debug, Clone, Serialize)]
pub struct Stats {
    pub id: SessionId,
    pub algorithm: String,
    pub status: Status,
    pub n: usize,
    pub questions_answered: usize,
    pub cache_hits: u64,
    pub pending_question: Option<u64>,
    pub budget: Option<u64>,
    pub clusters: usize,
    pub error: Option<String>,
}

pub struct Session {
    pub id: SessionId,
    pub tree: Arc<Hierarchy>,
    learner: Arc<dyn Learner>,
    config: Option<LearnerConfig>,
    pub seed: u64,
    pub budget: Option<u64>,
    shared: Arc<Shared>,
    snapshot: Option<PathBuf>,
}

impl Session {
    fn start(
        id: SessionId,
        tree: Hierarchy,
        learner: Arc<dyn Learner>,
        config: Option<LearnerConfig>,
        seed: u64,
        budget: Option<u64>,
        answers: Vec<Answer>,
        stopped: bool,
        snapshot: Option<PathBuf>,
    ) -> Arc<Self> {
        let cache = answers.iter().map(|x| (key(x.a, x.b), x.similar)).collect();
        let state = State { answers, cache, busy: true, stop: stopped, ..State::default() };
        let shared = Arc::new(Shared { state: Mutex::new(state), changed: Condvar::new() });
        let session =
            Arc::new(Self { id, tree: Arc::new(tree), learner, config, seed, budget, shared: shared.clone(), snapshot });
        let (tree, learner) = (session.tree.clone(), session.learner.clone());
        let worker = session.clone();
        std::thread::spawn(move || {
            let bridge = HumanBridge { shared: shared.clone(), budget, answered: AtomicU64::new(0) };
            let out = learner.run(&tree, &bridge, seed);
            let mut s = shared.lock();
            s.pending = None;
            s.busy = false;
            s.done = true;
            match out {
                Ok(c) => s.result = Some(c),
                Err(e) => s.error = Some(e.to_string()),
            }
            worker.persist(&s);
            shared.changed.notify_all();
        });
        session
    }

    fn persist(&self, s: &State) {
        let (Some(path), Some(learner)) = (&self.snapshot, &self.config) else { return };
        let snap = Snapshot {
            id: self.id,
            seed: self.seed,
            budget: self.budget,
            learner: learner.clone(),
            tree: self.tree.to_file(),
            answers: s.answers.clone(),
            stopped: s.stop,
        };
        // write then rename so a crash never leaves a torn file
        let tmp = path.with_extension("json.tmp");
        let ok = serde_json::to_vec(&snap)
            .map_err(std::io::Error::other)
            .and_then(|bytes| std::fs::write(&tmp, bytes))
            .and_then(|_| std::fs::rename(&tmp, path));
        if let Err(e) = ok {
            eprintln!("session {}: snapshot failed: {e}", self.id);
        }
    }

    pub fn algorithm(&self) -> &str {
        self.config.as_ref().map_or("custom", |c| c.name())
    }

    pub fn status(&self) -> Status {
        if self.shared.lock().done {
            Status::Done
        } else {
            Status::Running
        }
    }

    pub fn pending(&self) -> Option<Question> {
        self.shared.lock().pending
    }

    /// Done, waiting on a question, or still computing, read atomically.
    pub fn poll(&self) -> Poll {
        let s = self.shared.lock();
        match (s.done, s.pending) {
            (true, _) => Poll::Done,
            (false, Some(q)) => Poll::Ask(q),
            (false, None) => Poll::Working,
        }
    }

    /// Records the answer to the pending question. Exactly one of several
    /// concurrent submissions for the same id succeeds.
    pub fn submit(&self, question_id: u64, similar: bool) -> Result<Question, SubmitError> {
        let mut s = self.shared.lock();
        match s.pending {
            Some(q) if q.id == question_id => {
                s.pending = None;
                s.busy = true;
                s.answers.push(Answer { a: q.a, b: q.b, similar });
                s.cache.insert((q.a, q.b), similar);
                self.persist(&s);
                self.shared.changed.notify_all();
                Ok(q)
            }
            pending => Err(SubmitError::Stale { given: question_id, pending: pending.map(|q| q.id) }),
        }
    }

    /// Waits until the worker is waiting for an answer or finished. Returns
    /// false on timeout.
    pub fn wait_settled(&self, timeout: Duration) -> bool {
        let s = self.shared.lock();
        let (s, _) = self.shared.changed.wait_timeout_while(s, timeout, |s| s.busy).unwrap_or_else(|p| p.into_inner());
        !s.busy
    }

    /// Asks the learner to finish with its current best clustering.
    pub fn stop(&self) {
        let mut s = self.shared.lock();
        s.stop = true;
        self.persist(&s);
        self.shared.changed.notify_all();
    }

    /// Final clustering once done; otherwise what the learner would return
    /// if stopped now, found by replaying the answers so far.
    pub fn clustering(&self) -> treecut::Result<Clustering> {
        let cache = {
            let s = self.shared.lock();
            if let Some(c) = &s.result {
                return Ok(c.clone());
            }
            s.cache.clone()
        };
        let replay = Replay { cache: &cache, answered: AtomicU64::new(0) };
        self.learner.run(&self.tree, &replay, self.seed)
    }

    pub fn answers(&self) -> Vec<Answer> {
        self.shared.lock().answers.clone()
    }

    pub fn stats(&self) -> Stats {
        let (answered, cache_hits, pending, done, error) = {
            let s = self.shared.lock();
            (s.answers.len(), s.cache_hits, s.pending.map(|q| q.id), s.done, s.error.clone())
        };
        Stats {
            id: self.id,
            algorithm: self.algorithm().to_string(),
            status: if done { Status::Done } else { Status::Running },
            n: self.tree.n_leaves(),
            questions_answered: answered,
            cache_hits,
            pending_question: pending,
            budget: self.budget,
            clusters: self.clustering().map_or(0, |c| c.k()),
            error,
        }
    }
}

/// All live sessions, optionally mirrored to a snapshot directory.
pub struct Sessions {
    map: RwLock<HashMap<SessionId, Arc<Session>>>,
    next_id: AtomicU64,
    dir: Option<PathBuf>,
}

impl Sessions {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { map: RwLock::new(HashMap::new()), next_id: AtomicU64::new(1), dir }
    }

    /// Loads every `*.json` snapshot in `dir` and resumes it.
    pub fn restore(dir: &Path) -> treecut::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let me = Self::new(Some(dir.to_path_buf()));
        let mut max_id = 0;
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let snap: Snapshot = serde_json::from_slice(&std::fs::read(&path)?)?;
            let tree = Hierarchy::from_file(&snap.tree)?;
            max_id = max_id.max(snap.id);
            let learner: Arc<dyn Learner> = Arc::new(snap.learner.clone());
            let s = Session::start(
                snap.id,
                tree,
                learner,
                Some(snap.learner),
                snap.seed,
                snap.budget,
                snap.answers,
                snap.stopped,
                Some(path),
            );
            me.map.write().unwrap().insert(snap.id, s);
        }
        me.next_id.store(max_id + 1, Ordering::SeqCst);
        Ok(me)
    }

    pub fn create(&self, tree: Hierarchy, config: LearnerConfig, seed: u64, budget: Option<u64>) -> Result<Arc<Session>, String> {
        config.validate(Some(&tree))?;
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let snapshot = self.dir.as_ref().map(|d| d.join(format!("{id}.json")));
        let learner: Arc<dyn Learner> = Arc::new(config.clone());
        let s = Session::start(id, tree, learner, Some(config), seed, budget, Vec::new(), false, snapshot);
        s.persist(&s.shared.lock());
        self.map.write().unwrap().insert(id, s.clone());
        Ok(s)
    }

    /// Starts a session around any learner. Such sessions are not persisted.
    pub fn create_with(&self, tree: Hierarchy, learner: Arc<dyn Learner>, seed: u64, budget: Option<u64>) -> Arc<Session> {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let s = Session::start(id, tree, learner, None, seed, budget, Vec::new(), false, None);
        self.map.write().unwrap().insert(id, s.clone());
        s
    }

    pub fn get(&self, id: SessionId) -> Option<Arc<Session>> {
        self.map.read().unwrap().get(&id).cloned()
    }

    /// Stops the session and deletes its snapshot.
    pub fn remove(&self, id: SessionId) -> bool {
        let Some(s) = self.map.write().unwrap().remove(&id) else { return false };
        s.stop();
        if let Some(p) = &s.snapshot {
            let _ = std::fs::remove_file(p);
        }
        true
    }

    pub fn ids(&self) -> Vec<SessionId> {
        let mut ids: Vec<_> = self.map.read().unwrap().keys().copied().collect();
        ids.sort_unstable();
        ids
    }
}
