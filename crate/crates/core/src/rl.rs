//! Advantage actor-critic training of the extractor against rewards
//! computed from the (frozen) rewriter's output.

use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::abstractor::Abstractor;
use crate::corpus::{Sentence, SummaryPair, Vocabulary};
use crate::error::{Error, Result};
pub use crate::extractor::StopRule;
use crate::extractor::{Extractor, Mode, PointerMemory, Trajectory};
use crate::metrics::{rouge_1_summary, rouge_l};
use crate::substrate::layers::{Linear, Lstm, INIT_RANGE};
use crate::substrate::{adam_step, clip_gradients, rng, Grads, Init, OptimState, ParamId, ParamSet, Rng, Tape, Var};

/// Default cap on the number of extraction steps per episode.
pub const MAX_STEPS_CAP: usize = 8;

/// One extraction decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Select(usize),
    Stop,
}

/// A finished rollout with its rewards, returns and critic baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub doc_id: String,
    pub actions: Vec<Action>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub returns: Vec<f64>,
    pub baselines: Vec<f64>,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn stopped(&self) -> bool {
        self.actions.last() == Some(&Action::Stop)
    }

    pub fn selected(&self) -> Vec<usize> {
        selected(&self.actions)
    }
}

fn selected(actions: &[Action]) -> Vec<usize> {
    actions
        .iter()
        .filter_map(|a| match a {
            Action::Select(j) => Some(*j),
            Action::Stop => None,
        })
        .collect()
}

/// Everything a rollout needs for one document: encoded sentences, their
/// cached rewrites and the reference summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RlExample {
    pub id: String,
    pub doc_ids: Vec<Vec<usize>>,
    pub rewritten: Vec<Sentence>,
    pub refs: Vec<Sentence>,
}

impl RlExample {
    /// With `rewriter == None` sentences are used verbatim.
    pub fn build(pair: &SummaryPair, vocab: &Vocabulary, rewriter: Option<&Abstractor>) -> Self {
        let sents = &pair.document.sentences;
        Self {
            id: pair.id().to_string(),
            doc_ids: sents.iter().map(|s| vocab.encode_all(s)).collect(),
            rewritten: match rewriter {
                Some(abs) => sents.iter().map(|s| abs.rewrite(s, vocab)).collect(),
                None => sents.clone(),
            },
            refs: pair.summary.clone(),
        }
    }

    pub fn max_steps(&self, cap: usize) -> usize {
        self.doc_ids.len().min(cap)
    }
}

/// Per-step rewards. Step `t` selecting `j` earns ROUGE-L F1 of
/// `rewritten[j]` against `refs[t]` (0 once the references run out); the
/// stop action earns ROUGE-1 F1 of everything generated so far against all
/// references.
pub fn episode_rewards(actions: &[Action], rewritten: &[Sentence], refs: &[Sentence]) -> Vec<f64> {
    let mut generated: Vec<Sentence> = Vec::new();
    actions
        .iter()
        .enumerate()
        .map(|(t, a)| match *a {
            Action::Select(j) => {
                generated.push(rewritten[j].clone());
                refs.get(t).map_or(0.0, |r| rouge_l(&rewritten[j], r).f1)
            }
            Action::Stop => rouge_1_summary(&generated, refs).f1,
        })
        .collect()
}

/// `R_t = Σ_{k≥t} γ^{k−t} r_k`.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    assert!((0.0..=1.0).contains(&gamma), "gamma must lie in [0, 1]");
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (o, &r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *o = acc;
    }
    out
}

/// Standardizes all returns of a batch jointly (mean 0, std 1 with 1e-8
/// added to the deviation). A single value is only centred.
pub fn standardize_returns(returns: &mut [Vec<f64>]) {
    let n: usize = returns.iter().map(Vec::len).sum();
    if n == 0 {
        return;
    }
    let first = returns.iter().flatten().next().copied().unwrap_or(0.0);
    let mean = if returns.iter().flatten().all(|&r| r == first) {
        // exact, so constant batches map to exact zeros
        first
    } else {
        returns.iter().flatten().sum::<f64>() / n as f64
    };
    let scale = if n >= 2 {
        let var = returns.iter().flatten().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
        1.0 / (var.sqrt() + 1e-8)
    } else {
        1.0
    };
    for r in returns.iter_mut().flatten() {
        *r = (*r - mean) * scale;
    }
}

/// Value network: a pointer-style decoder with its own recurrence and
/// glimpse, reading the actor's sentence encodings, ending in a scalar head.
#[derive(Debug, Clone, Copy)]
pub struct Critic {
    pub dec: Lstm,
    pub h0: ParamId,
    pub c0: ParamId,
    pub start: ParamId,
    pub glimpse_v: ParamId,
    pub glimpse_mem: ParamId,
    pub glimpse_query: ParamId,
    pub head: Linear,
}

impl Critic {
    pub fn register(params: &mut ParamSet, h_dim: usize, hidden: usize, r: &mut Rng) -> Self {
        let u = Init::Uniform(INIT_RANGE);
        Self {
            dec: Lstm::register(params, "critic.dec", h_dim, hidden, r),
            h0: params.add("critic.dec.h0", hidden, 1, u, r),
            c0: params.add("critic.dec.c0", hidden, 1, u, r),
            start: params.add("critic.start", h_dim, 1, u, r),
            glimpse_v: params.add("critic.glimpse.v", hidden, 1, u, r),
            glimpse_mem: params.add("critic.glimpse.w_mem", hidden, h_dim, u, r),
            glimpse_query: params.add("critic.glimpse.w_query", hidden, hidden, u, r),
            head: Linear::register(params, "critic.head", hidden, 1, r),
        }
    }

    pub fn lookup(params: &ParamSet, h_dim: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            dec: Lstm::lookup(params, "critic.dec", h_dim, hidden)?,
            h0: params.id("critic.dec.h0")?,
            c0: params.id("critic.dec.c0")?,
            start: params.id("critic.start")?,
            glimpse_v: params.id("critic.glimpse.v")?,
            glimpse_mem: params.id("critic.glimpse.w_mem")?,
            glimpse_query: params.id("critic.glimpse.w_query")?,
            head: Linear::lookup(params, "critic.head")?,
        })
    }

    /// `b(c_t)` for every step of an action sequence: the state before
    /// step `t` has seen the sentences selected at steps `< t`.
    pub fn values_on_tape(&self, t: &mut Tape<'_>, h: &[Var], actions: &[usize]) -> Vec<Var> {
        let stacked = t.stack(h);
        let wm = t.param(self.glimpse_mem);
        let keys = t.matmul_t(stacked, wm);
        let v = t.param(self.glimpse_v);
        let mut input = t.param(self.start);
        let mut hs = t.param(self.h0);
        let mut cs = t.param(self.c0);
        let mut out = Vec::with_capacity(actions.len());
        for &a in actions {
            (hs, cs) = self.dec.step(t, input, hs, cs);
            let q = t.linear(self.glimpse_query, hs);
            let scores = t.additive_scores(keys, q, v);
            let alpha = t.softmax(scores, None);
            let e = t.matvec_t(keys, alpha);
            let y = self.head.forward(t, e);
            out.push(y);
            if a < h.len() {
                input = h[a];
            }
        }
        out
    }
}

/// The extractor with a critic registered in the same parameter set, so the
/// sentence encoder is shared.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub actor: Extractor,
    pub critic: Critic,
}

impl ActorCritic {
    /// Adds a freshly initialized critic unless the parameters already hold one.
    pub fn new(mut actor: Extractor, seed: u64) -> Self {
        let h_dim = actor.ids.enc.h_dim();
        let hidden = actor.config.hidden;
        let critic = match Critic::lookup(&actor.params, h_dim, hidden) {
            Ok(c) => c,
            Err(_) => Critic::register(&mut actor.params, h_dim, hidden, &mut rng(seed)),
        };
        Self { actor, critic }
    }

    pub fn params(&self) -> &ParamSet {
        &self.actor.params
    }
}

/// How the advantage baseline is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Baseline {
    /// Detached critic outputs; the critic is trained on the same returns.
    Critic,
    Constant(f64),
}

/// Actor and critic terms for a batch on one tape.
#[derive(Debug, Clone, Copy)]
pub struct Surrogate {
    pub actor: Var,
    pub critic: Option<Var>,
}

/// `−(1/ΣN) Σ log π_t · (R_t − b_t)` with the baseline held constant, plus
/// `(1/ΣN) Σ (b_t − R_t)²` for the critic.
pub fn a2c_surrogate(
    t: &mut Tape<'_>,
    log_probs: &[Vec<Var>],
    values: &[Vec<Var>],
    returns: &[Vec<f64>],
    baseline: Baseline,
) -> Surrogate {
    let n: usize = returns.iter().map(Vec::len).sum();
    assert!(n > 0, "empty batch");
    let mut actor_terms = Vec::with_capacity(n);
    let mut critic_terms = Vec::with_capacity(n);
    for (e, (lps, rets)) in log_probs.iter().zip(returns).enumerate() {
        for (s, (&lp, &r)) in lps.iter().zip(rets).enumerate() {
            let b = match baseline {
                Baseline::Critic => {
                    let v = values[e][s];
                    let target = t.constant(vec![r]);
                    let diff = t.sub(v, target);
                    critic_terms.push(t.mul(diff, diff));
                    t.scalar(v)
                }
                Baseline::Constant(c) => c,
            };
            actor_terms.push(t.scale(lp, r - b));
        }
    }
    let total = t.add_all(&actor_terms);
    let actor = t.scale(total, -1.0 / n as f64);
    let critic = (!critic_terms.is_empty()).then(|| {
        let total = t.add_all(&critic_terms);
        t.scale(total, 1.0 / n as f64)
    });
    Surrogate { actor, critic }
}

pub(crate) fn slot_to_action(slot: usize, mem: &PointerMemory) -> Action {
    if Some(slot) == mem.eoe_slot() {
        Action::Stop
    } else {
        Action::Select(slot)
    }
}

/// A rollout recorded on a tape.
#[derive(Debug, Clone)]
pub struct TapeRollout {
    pub traj: Trajectory,
    pub actions: Vec<Action>,
    pub values: Vec<Var>,
}

pub fn rollout_on_tape(
    ac: &ActorCritic,
    t: &mut Tape<'_>,
    ex: &RlExample,
    mode: Mode,
    cap: usize,
    with_critic: bool,
    r: Option<&mut Rng>,
) -> TapeRollout {
    let reps = ac.actor.encode(t, &ex.doc_ids);
    let mem = ac.actor.memory(t, &reps, true);
    let traj = ac.actor.decode_on_tape(t, &mem, mode, ex.max_steps(cap), r);
    let actions = traj.actions.iter().map(|&s| slot_to_action(s, &mem)).collect();
    let values = if with_critic {
        ac.critic.values_on_tape(t, &reps.h, &traj.actions)
    } else {
        Vec::new()
    };
    TapeRollout { traj, actions, values }
}

/// Samples one episode (no learning).
pub fn rollout(ac: &ActorCritic, ex: &RlExample, cap: usize, gamma: f64, r: &mut Rng) -> Episode {
    let mut t = Tape::new(ac.params());
    let ro = rollout_on_tape(ac, &mut t, ex, Mode::Sample, cap, true, Some(r));
    let rewards = episode_rewards(&ro.actions, &ex.rewritten, &ex.refs);
    Episode {
        doc_id: ex.id.clone(),
        returns: compute_returns(&rewards, gamma),
        rewards,
        log_probs: ro.traj.log_prob_vars.iter().map(|&v| t.scalar(v)).collect(),
        baselines: ro.values.iter().map(|&v| t.scalar(v)).collect(),
        actions: ro.actions,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlConfig {
    pub gamma: f64,
    pub lr: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub updates: usize,
    pub max_steps_cap: usize,
    /// Updates between logged curve points.
    pub log_every: usize,
    /// Updates between validation passes (0 disables).
    pub eval_every: usize,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            lr: 1e-4,
            clip: 2.0,
            batch_size: 32,
            updates: 1000,
            max_steps_cap: MAX_STEPS_CAP,
            log_every: 10,
            eval_every: 100,
            standardize: true,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateStats {
    pub mean_reward: f64,
    pub eoe_rate: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub grad_norm: f64,
    pub episodes: Vec<Episode>,
}

/// Rolls out a batch, computes returns and applies one synchronous
/// actor-critic step.
pub fn a2c_update(
    ac: &mut ActorCritic,
    batch: &[&RlExample],
    opt: &mut OptimState,
    cfg: &RlConfig,
    r: &mut Rng,
) -> Result<UpdateStats> {
    assert!(!batch.is_empty());
    let (grads, stats) = {
        let mut t = Tape::new(ac.params());
        let mut rollouts = Vec::with_capacity(batch.len());
        let mut rewards = Vec::with_capacity(batch.len());
        for ex in batch {
            let ro = rollout_on_tape(ac, &mut t, ex, Mode::Sample, cfg.max_steps_cap, true, Some(r));
            rewards.push(episode_rewards(&ro.actions, &ex.rewritten, &ex.refs));
            rollouts.push(ro);
        }
        let raw: Vec<Vec<f64>> = rewards.iter().map(|rw| compute_returns(rw, cfg.gamma)).collect();
        let mut returns = raw.clone();
        if cfg.standardize {
            standardize_returns(&mut returns);
        }
        let lps: Vec<Vec<Var>> = rollouts.iter().map(|ro| ro.traj.log_prob_vars.clone()).collect();
        let vals: Vec<Vec<Var>> = rollouts.iter().map(|ro| ro.values.clone()).collect();
        let s = a2c_surrogate(&mut t, &lps, &vals, &returns, Baseline::Critic);
        let critic = s.critic.expect("critic baseline");
        let (al, cl) = (t.scalar(s.actor), t.scalar(critic));
        if !al.is_finite() || !cl.is_finite() {
            return Err(Error::NonFiniteLoss(format!("actor loss {al}, critic loss {cl}")));
        }
        let loss = t.add(s.actor, critic);
        let grads = t.backward(loss);
        let episodes: Vec<Episode> = batch
            .iter()
            .zip(rollouts)
            .zip(rewards)
            .zip(raw)
            .map(|(((ex, ro), rw), ret)| Episode {
                doc_id: ex.id.clone(),
                log_probs: ro.traj.log_prob_vars.iter().map(|&v| t.scalar(v)).collect(),
                baselines: ro.values.iter().map(|&v| t.scalar(v)).collect(),
                actions: ro.actions,
                rewards: rw,
                returns: ret,
            })
            .collect();
        let n = episodes.len() as f64;
        let stats = UpdateStats {
            mean_reward: episodes.iter().map(Episode::total_reward).sum::<f64>() / n,
            eoe_rate: episodes.iter().filter(|e| e.stopped()).count() as f64 / n,
            actor_loss: al,
            critic_loss: cl,
            grad_norm: 0.0,
            episodes,
        };
        (grads, stats)
    };
    let mut grads: Grads = grads;
    let norm = clip_gradients(&mut grads, cfg.clip);
    adam_step(&mut ac.actor.params, &grads, opt)?;
    Ok(UpdateStats { grad_norm: norm, ..stats })
}

/// Greedy extraction as an action sequence.
pub fn greedy_actions(actor: &Extractor, ex: &RlExample, rule: StopRule) -> Vec<Action> {
    let e = actor.extract(&ex.doc_ids, rule);
    let mut a: Vec<Action> = e.indices.into_iter().map(Action::Select).collect();
    // a fixed-k extraction is closed with a stop so it is scored like a
    // stopping policy
    if e.stopped || matches!(rule, StopRule::FixedK(_)) {
        a.push(Action::Stop);
    }
    a
}

/// Mean undiscounted episode reward of greedy extraction.
pub fn mean_greedy_reward(actor: &Extractor, examples: &[RlExample], rule: StopRule) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let total: f64 = examples
        .iter()
        .map(|ex| episode_rewards(&greedy_actions(actor, ex, rule), &ex.rewritten, &ex.refs).iter().sum::<f64>())
        .sum();
    total / examples.len() as f64
}

/// One logged point of the reward curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub mean_reward: f64,
    pub eoe_rate: f64,
}

#[derive(Debug, Clone)]
pub struct RlOutcome {
    pub best: ActorCritic,
    pub best_val_reward: f64,
    pub curve: Vec<CurvePoint>,
}

/// Full RL loop. The best actor by greedy validation reward is kept (the
/// final one when validation is disabled or `val` is empty).
pub fn train_rl(mut ac: ActorCritic, train: &[RlExample], val: &[RlExample], cfg: &RlConfig) -> Result<RlOutcome> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if cfg.batch_size == 0 || cfg.log_every == 0 {
        return Err(Error::InvalidArgument("batch_size and log_every must be positive".into()));
    }
    let mut r = rng(cfg.seed);
    let mut opt = OptimState::new(ac.params(), cfg.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut r);
    let mut cursor = 0;
    let rule = StopRule::Eoe { cap: cfg.max_steps_cap };
    let validate = cfg.eval_every > 0 && !val.is_empty();
    let mut best = ac.clone();
    let mut best_val = f64::NEG_INFINITY;
    if validate {
        best_val = mean_greedy_reward(&ac.actor, val, rule);
        info!("rl step 0: validation reward {best_val:.4}");
    }
    let mut curve = Vec::new();
    let (mut acc_reward, mut acc_eoe, mut acc_n) = (0.0, 0.0, 0);

    for step in 1..=cfg.updates {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(train.len()) {
            if cursor == order.len() {
                order.shuffle(&mut r);
                cursor = 0;
            }
            batch.push(&train[order[cursor]]);
            cursor += 1;
        }
        let stats = a2c_update(&mut ac, &batch, &mut opt, cfg, &mut r)?;
        acc_reward += stats.mean_reward;
        acc_eoe += stats.eoe_rate;
        acc_n += 1;
        if step % cfg.log_every == 0 || step == cfg.updates {
            let p = CurvePoint {
                step,
                mean_reward: acc_reward / acc_n as f64,
                eoe_rate: acc_eoe / acc_n as f64,
            };
            info!("rl step {step}: reward {:.4} eoe {:.3}", p.mean_reward, p.eoe_rate);
            curve.push(p);
            (acc_reward, acc_eoe, acc_n) = (0.0, 0.0, 0);
        }
        if validate && (step % cfg.eval_every == 0 || step == cfg.updates) {
            let v = mean_greedy_reward(&ac.actor, val, rule);
            info!("rl step {step}: validation reward {v:.4}");
            if v > best_val {
                best_val = v;
                best = ac.clone();
            }
        }
    }
    if !validate {
        best = ac;
    }
    Ok(RlOutcome {
        best,
        best_val_reward: best_val,
        curve,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::InvalidArgument(format!("{}: {e}", path.display()))
}

/// Writes `step,mean_reward,eoe_rate` rows with a header.
pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for p in curve {
        w.serialize(p).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurvePoint>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?;
    if header != vec!["step", "mean_reward", "eoe_rate"] {
        return Err(Error::InvalidArgument(format!("{}: missing reward-curve header", path.display())));
    }
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}
