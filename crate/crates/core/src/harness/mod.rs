//! Experiment orchestration: training, evaluation, three-way comparison and
//! the CSV and JSON files they write.
//!
//! Training draws fading epochs `0..episodes`; evaluation uses a disjoint
//! range starting at [`EVAL_EPOCH_BASE`], shared by every agent so that a
//! comparison sees the same channels.

pub mod config;
pub mod episode;
pub mod output;

use std::path::Path;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

pub use config::ExperimentConfig;
pub use episode::{run_episode, Env, EpisodeResult, Learner, MetricsRow, StepRecord};
pub use output::{RewardCurveRow, Summary};

use crate::codebook::{Codebook, Rank};
use crate::error::{Error, Result};
use crate::rl::{A2c, Checkpoint, PolicyValueNet};
use crate::rng::{keyed_rng, TAG_INIT, TAG_POLICY};
use crate::topology::Topology;
use crate::xapp::{Agent, AgentKind};

pub const EVAL_EPOCH_BASE: u64 = 1 << 32;

const STREAM_TRAIN: u64 = 1;
const STREAM_EVAL: u64 = 2;

fn agent_tag(kind: AgentKind) -> u64 {
    match kind {
        AgentKind::FollowPmi => 0,
        AgentKind::A2c => 1,
        AgentKind::InterA2c => 2,
        AgentKind::Random => 3,
    }
}

fn policy_rng(cfg: &ExperimentConfig, kind: AgentKind, stream: u64) -> ChaCha8Rng {
    keyed_rng(cfg.seed, &[TAG_POLICY, agent_tag(kind), stream])
}

/// Freshly initialized network for a learning agent.
pub fn initial_net(
    cfg: &ExperimentConfig,
    kind: AgentKind,
    codebook: &Codebook,
) -> Result<PolicyValueNet> {
    let arch = kind.architecture(
        &cfg.hidden,
        codebook.len(Rank::One),
        codebook.len(Rank::Two),
    )?;
    let mut rng = keyed_rng(cfg.seed, &[TAG_INIT, agent_tag(kind)]);
    Ok(PolicyValueNet::init(arch, cfg.head_init_gain, &mut rng))
}

/// Builds the agent used for evaluation: greedy for learning agents, whose
/// parameters come from `checkpoint`.
pub fn eval_agent(
    env: &Env,
    cfg: &ExperimentConfig,
    kind: AgentKind,
    checkpoint: Option<&Checkpoint>,
) -> Result<Agent> {
    let ctx = env.agent_context(cfg);
    match kind {
        AgentKind::FollowPmi => Ok(Agent::follow_pmi(ctx)),
        AgentKind::Random => Ok(Agent::random(ctx, policy_rng(cfg, kind, STREAM_EVAL))),
        AgentKind::A2c | AgentKind::InterA2c => {
            let ck = checkpoint
                .ok_or_else(|| Error::Config(format!("agent {kind} needs a checkpoint")))?;
            let arch = kind.architecture(&cfg.hidden, ctx.j1, ctx.j2)?;
            let net = ck.clone().into_net(kind.name(), &arch)?;
            Agent::learned(kind, net, true, ctx, policy_rng(cfg, kind, STREAM_EVAL))
        }
    }
}

/// Outcome of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub curve: Vec<RewardCurveRow>,
    /// Mean reward of every training episode.
    pub episode_rewards: Vec<f64>,
}

/// Trains a learning agent for `cfg.episodes` episodes, calling `progress`
/// after each.
pub fn train_with(
    env: &mut Env,
    cfg: &ExperimentConfig,
    kind: AgentKind,
    mut progress: impl FnMut(&EpisodeResult),
) -> Result<TrainOutput> {
    if !kind.is_learning() {
        return Err(Error::Config(format!("agent {kind} cannot be trained")));
    }
    let net = initial_net(cfg, kind, env.network.codebook())?;
    let ctx = env.agent_context(cfg);
    let mut agent = Agent::learned(
        kind,
        net.clone(),
        false,
        ctx,
        policy_rng(cfg, kind, STREAM_TRAIN),
    )?;
    let mut learner = Learner::new(A2c::new(net, cfg.a2c()));
    let mut rewards = Vec::with_capacity(cfg.episodes as usize);
    for ep in 0..cfg.episodes {
        let res = run_episode(env, &mut agent, ep, ep, Some(&mut learner))?;
        rewards.push(res.mean_reward());
        progress(&res);
    }
    Ok(TrainOutput {
        checkpoint: Checkpoint::new(kind.name(), &learner.a2c.net, cfg.episodes),
        curve: output::reward_curve(&rewards, cfg.smoothing_window),
        episode_rewards: rewards,
    })
}

/// [`train_with`] plus `reward_curve.csv` and `checkpoint.json` in `out`.
pub fn train(cfg: &ExperimentConfig, kind: AgentKind, out: &Path) -> Result<TrainOutput> {
    std::fs::create_dir_all(out)?;
    let mut env = Env::new(cfg)?;
    let every = (cfg.episodes / 20).max(1);
    let result = train_with(&mut env, cfg, kind, |r| {
        if (r.episode + 1) % every == 0 {
            log::info!(
                "{kind} episode {}: mean reward {:.4}",
                r.episode + 1,
                r.mean_reward()
            );
        }
    });
    let trained = match result {
        Ok(t) => t,
        Err(e @ Error::Divergence(_)) => {
            let dump = serde_json::json!({ "error": e.to_string(), "config": cfg });
            std::fs::write(
                out.join("divergence.json"),
                serde_json::to_string_pretty(&dump)?,
            )?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    output::write_reward_curve(&out.join("reward_curve.csv"), &trained.curve)?;
    trained.checkpoint.save(&out.join("checkpoint.json"))?;
    Ok(trained)
}

/// Everything an evaluation produced, before it is written out.
#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub agent: String,
    pub rows: Vec<MetricsRow>,
    pub ue_se: Vec<f64>,
    pub ue_thr: Vec<f64>,
    pub episode_rewards: Vec<f64>,
    pub channel_digests: Vec<u64>,
    pub interference_checked: usize,
    pub interference_violations: usize,
    pub breakdowns: Vec<crate::xapp::RewardBreakdown>,
}

/// Runs `agent` over the evaluation epochs.
pub fn evaluate_with(
    env: &mut Env,
    agent: &mut Agent,
    episodes: u64,
    first_epoch: u64,
) -> Result<Evaluation> {
    let mut ev = Evaluation {
        agent: agent.kind().name().to_string(),
        ..Evaluation::default()
    };
    for ep in 0..episodes {
        let r = run_episode(env, agent, ep, first_epoch + ep, None)?;
        ev.episode_rewards.push(r.mean_reward());
        ev.rows.extend(r.rows);
        ev.ue_se.extend(r.ue_se);
        ev.ue_thr.extend(r.ue_thr);
        ev.channel_digests.extend(r.channel_digests);
        ev.interference_checked += r.interference_checked;
        ev.interference_violations += r.interference_violations;
        ev.breakdowns.extend(r.steps.iter().map(|s| s.breakdown));
    }
    Ok(ev)
}

/// Evaluates one agent and writes its metrics files to `out`.
pub fn evaluate(
    cfg: &ExperimentConfig,
    kind: AgentKind,
    checkpoint: Option<&Checkpoint>,
    out: &Path,
) -> Result<Summary> {
    let mut env = Env::new(cfg)?;
    let fallback;
    let checkpoint = match (checkpoint, kind.is_learning()) {
        (Some(c), _) => Some(c),
        (None, true) => {
            log::warn!("no checkpoint for {kind}; evaluating the untrained network");
            fallback = Checkpoint::new(
                kind.name(),
                &initial_net(cfg, kind, env.network.codebook())?,
                0,
            );
            Some(&fallback)
        }
        (None, false) => None,
    };
    let mut agent = eval_agent(&env, cfg, kind, checkpoint)?;
    let ev = evaluate_with(&mut env, &mut agent, cfg.eval_episodes, EVAL_EPOCH_BASE)?;
    output::write_evaluation(out, &ev, env.network.topology().num_cells())
}

/// Evaluates Follow-PMI, A2C and Inter-A2C on identical channels and writes
/// per-agent directories plus `comparison.csv` into `out`. Learning agents
/// without a configured checkpoint are trained first.
pub fn compare(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<Summary>> {
    std::fs::create_dir_all(out)?;
    let sim = cfg.sim();
    let topo = Arc::new(Topology::build(&sim.scenario)?);
    let codebook = Arc::new(Codebook::build(&sim.codebook)?);
    let mut summaries = Vec::new();
    let mut digests: Option<Vec<u64>> = None;
    for kind in [AgentKind::FollowPmi, AgentKind::A2c, AgentKind::InterA2c] {
        let dir = out.join(kind.name());
        std::fs::create_dir_all(&dir)?;
        let mut env = Env::with_parts(cfg, topo.clone(), codebook.clone())?;
        let checkpoint = if kind.is_learning() {
            Some(match cfg.checkpoint_for(kind) {
                Some(p) => Checkpoint::load(p)?,
                None => {
                    log::info!("training {kind} for {} episodes", cfg.episodes);
                    let t = train_with(&mut env, cfg, kind, |_| {})?;
                    output::write_reward_curve(&dir.join("reward_curve.csv"), &t.curve)?;
                    t.checkpoint.save(&dir.join("checkpoint.json"))?;
                    t.checkpoint
                }
            })
        } else {
            None
        };
        let mut agent = eval_agent(&env, cfg, kind, checkpoint.as_ref())?;
        let ev = evaluate_with(&mut env, &mut agent, cfg.eval_episodes, EVAL_EPOCH_BASE)?;
        match &digests {
            None => digests = Some(ev.channel_digests.clone()),
            Some(d) if *d != ev.channel_digests => {
                return Err(Error::State(format!(
                    "{kind} saw different channel draws than follow_pmi"
                )));
            }
            Some(_) => {}
        }
        summaries.push(output::write_evaluation(&dir, &ev, topo.num_cells())?);
    }
    output::write_comparison(&out.join("comparison.csv"), &summaries)?;
    Ok(summaries)
}
