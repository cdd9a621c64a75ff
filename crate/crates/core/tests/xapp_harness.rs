mod common;

use interpmi_core::codebook::Rank;
use interpmi_core::csi::CsiReport;
use interpmi_core::harness::output::{empirical_cdf, per_cell, read_metrics, summarize};
use interpmi_core::harness::{
    self, eval_agent, evaluate_with, run_episode, train_with, Env, EVAL_EPOCH_BASE,
};
use interpmi_core::rl::Checkpoint;
use interpmi_core::rng::{keyed_rng, TAG_POLICY};
use interpmi_core::xapp::agent::AgentContext;
use interpmi_core::xapp::{
    build_state, decode_action, select_target_cell, Agent, AgentKind, GroupKind, Normalization,
    RewardBreakdown, RewardConstants,
};
use proptest::prelude::*;

fn report(
    ue: usize,
    pci: usize,
    wb_cqi: u8,
    rsrp: f64,
    interf: Vec<f64>,
    thr: f64,
    prbs: usize,
) -> CsiReport {
    CsiReport {
        ue,
        pci,
        tti: 1,
        ri: Rank::Two,
        pmi: vec![0; 6],
        cqi: vec![wb_cqi; 6],
        wb_cqi,
        rsrp_dbm: rsrp,
        thr_mbps: thr,
        interf_mw: interf,
        prbs,
        extra: serde_json::Map::new(),
    }
}

fn arb_report() -> impl Strategy<Value = CsiReport> {
    (
        0usize..40,
        0u8..=15,
        -140.0f64..-40.0,
        proptest::collection::vec(0.0f64..1e-3, 0..9),
        0.0f64..500.0,
        0usize..400,
    )
        .prop_map(|(ue, cqi, rsrp, interf, thr, prbs)| report(ue, 0, cqi, rsrp, interf, thr, prbs))
}

#[test]
fn episodes_are_reproducible() {
    let cfg = common::small_config();
    let run = || {
        let mut env = Env::new(&cfg).unwrap();
        let mut agent = Agent::random(env.agent_context(&cfg), keyed_rng(4, &[TAG_POLICY]));
        run_episode(&mut env, &mut agent, 0, 17, None).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.channel_digests, b.channel_digests);
    assert_eq!(a.steps.len(), cfg.ttis_per_episode as usize);
}

#[test]
fn plain_a2c_always_targets_the_whole_cell() {
    let cfg = common::small_config();
    let mut env = Env::new(&cfg).unwrap();
    let t = train_with(&mut env, &cfg, AgentKind::A2c, |_| {}).unwrap();
    let mut agent = eval_agent(&env, &cfg, AgentKind::A2c, Some(&t.checkpoint)).unwrap();
    let ev = evaluate_with(&mut env, &mut agent, 3, EVAL_EPOCH_BASE).unwrap();
    assert!(ev
        .rows
        .iter()
        .filter(|r| r.target)
        .all(|r| r.group == Some(GroupKind::All)));
}

#[test]
fn episode_end_flushes_a_bootstrapped_rollout() {
    let cfg = common::small_config();
    let mut env = Env::new(&cfg).unwrap();
    let t = train_with(&mut env, &cfg, AgentKind::InterA2c, |r| {
        assert!(r.rl_steps.iter().all(|s| !s.done));
        let n = cfg.ttis_per_episode as usize;
        assert_eq!(r.updates.len(), n.div_ceil(cfg.n_steps));
    })
    .unwrap();
    assert_eq!(t.episode_rewards.len(), cfg.episodes as usize);
}

#[test]
fn observe_matches_the_decision_state() {
    let cfg = common::small_config();
    let mut env = Env::new(&cfg).unwrap();
    env.network.reset(5).unwrap();
    let reports = env.network.measure().unwrap();
    let tti = reports[0].tti;
    let net =
        interpmi_core::harness::initial_net(&cfg, AgentKind::InterA2c, env.network.codebook())
            .unwrap();
    let mut agent = Agent::learned(
        AgentKind::InterA2c,
        net,
        false,
        env.agent_context(&cfg),
        keyed_rng(2, &[TAG_POLICY]),
    )
    .unwrap();
    let seen = agent.observe(tti, &reports).unwrap();
    let d = agent.decide(tti, &reports).unwrap();
    assert_eq!(seen, d.state);
    assert_eq!(agent.value(&seen).unwrap(), d.value);
}

#[test]
fn follow_pmi_applies_the_reported_pmis() {
    let cfg = common::small_config();
    let mut env = Env::new(&cfg).unwrap();
    let mut agent = Agent::follow_pmi(env.agent_context(&cfg));
    let res = run_episode(&mut env, &mut agent, 0, 3, None).unwrap();
    for s in &res.steps {
        assert!(s.decision.raw.is_empty() && s.decision.action.is_none());
        assert_eq!(
            s.decision.directives.len(),
            env.network.topology().num_cells()
        );
        assert!(!s.breakdown.rejected);
    }
}

#[test]
fn training_writes_a_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small_config();
    let t = harness::train(&cfg, AgentKind::InterA2c, dir.path()).unwrap();
    assert_eq!(t.episode_rewards.len(), cfg.episodes as usize);
    let curve = std::fs::read_to_string(dir.path().join("reward_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), cfg.episodes as usize + 1);
    let ck = Checkpoint::load(&dir.path().join("checkpoint.json")).unwrap();
    assert_eq!(ck, t.checkpoint);
    let env = Env::new(&cfg).unwrap();
    assert!(eval_agent(&env, &cfg, AgentKind::InterA2c, Some(&ck)).is_ok());
    assert!(eval_agent(&env, &cfg, AgentKind::A2c, Some(&ck)).is_err());
}

#[test]
fn outputs_are_consistent_with_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small_config();
    let summary = harness::evaluate(&cfg, AgentKind::FollowPmi, None, dir.path()).unwrap();
    let rows = read_metrics(&dir.path().join("metrics.csv")).unwrap();
    let again = summarize("follow_pmi", &rows, &[]);
    for (a, b) in [
        (summary.mean_se, again.mean_se),
        (summary.mean_thr, again.mean_thr),
        (summary.mean_prb_util, again.mean_prb_util),
        (summary.mean_interference, again.mean_interference),
        (summary.target_mean_se, again.target_mean_se),
        (summary.mean_reward, again.mean_reward),
    ] {
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }
    assert_eq!(summary.rows, rows.len());

    let num_cells = 3;
    let pc = per_cell(&rows, num_cells);
    assert_eq!(pc.len(), num_cells);
    assert_eq!(
        pc.iter().map(|r| r.target_steps).sum::<usize>(),
        summary.target_rows
    );
    let per_cell_csv = std::fs::read_to_string(dir.path().join("per_cell_se.csv")).unwrap();
    assert_eq!(per_cell_csv.lines().count(), num_cells + 1);

    for name in ["cdf_se.csv", "cdf_thr.csv"] {
        let mut r = csv::Reader::from_path(dir.path().join(name)).unwrap();
        let pts: Vec<(f64, f64)> = r.deserialize().map(|x| x.unwrap()).collect();
        assert!(
            pts.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1),
            "{name} not monotone"
        );
        assert_eq!(pts.last().unwrap().1, 1.0);
    }
}

#[test]
fn compare_shares_channels_across_agents() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small_config();
    let s = harness::compare(&cfg, dir.path()).unwrap();
    assert_eq!(s.len(), 3);
    assert!(s.iter().all(|x| x.channel_digest == s[0].channel_digest));
    let text = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 + 3);
    for agent in ["follow_pmi", "a2c", "inter_a2c"] {
        assert!(dir.path().join(agent).join("metrics.csv").exists());
    }
}

#[test]
fn cdf_of_constant_samples() {
    let c = empirical_cdf(&[2.0; 4]);
    assert_eq!(
        c.iter().map(|p| p.1).collect::<Vec<_>>(),
        [0.25, 0.5, 0.75, 1.0]
    );
}

fn ctx() -> AgentContext {
    AgentContext {
        num_cells: 2,
        num_prbs: 52,
        sigma2: 1e-12,
        j1: 64,
        j2: 128,
        high_interference_fraction: 0.2,
        norm: Normalization::default(),
    }
}

#[test]
fn random_agent_decides_for_the_most_interfered_cell() {
    let reports = vec![
        report(0, 0, 7, -80.0, vec![1e-9], 1.0, 2),
        report(1, 1, 7, -105.0, vec![5e-9], 1.0, 2),
        report(2, 1, 9, -85.0, vec![1e-10], 1.0, 2),
    ];
    let mut agent = Agent::random(ctx(), keyed_rng(1, &[TAG_POLICY]));
    let d = agent.decide(1, &reports).unwrap();
    assert_eq!(d.pci, 1);
    let action = d.action.unwrap();
    let expected: Vec<usize> = match action.group {
        GroupKind::Edge => vec![1],
        GroupKind::HighInterference => vec![1],
        GroupKind::All => vec![1, 2],
    };
    assert_eq!(d.selected, expected);
    assert_eq!(d.directives.len(), 1);
    assert_eq!(d.directives[0].pci, 1);
}

proptest! {
    #[test]
    fn state_lies_in_unit_cube(reports in proptest::collection::vec(arb_report(), 1..30), take in 0usize..5) {
        let refs: Vec<&CsiReport> = reports.iter().collect();
        let group: Vec<usize> = reports.iter().take(take).map(|r| r.ue).collect();
        let s = build_state(&refs, &group, 1e-13, 52, &Normalization::default()).unwrap();
        for x in s.to_vec() {
            prop_assert!((0.0..=1.0).contains(&x), "{:?}", s);
        }
    }

    #[test]
    fn reward_is_monotone_in_each_term(
        g in 0.0f64..5.6, c in 0.0f64..1.0, u in 0.0f64..1.0, dg in 0.0f64..1.0, dc in 0.0f64..1.0,
    ) {
        let k = RewardConstants::default();
        let r = |g, c, u| RewardBreakdown::from_terms(g, c, u, &k).reward;
        prop_assert!(r(g + dg, c, u) >= r(g, c, u));
        prop_assert!(r(g, c + dc, u) <= r(g, c, u));
        // Utilization is penalized by its distance to the target.
        let near = k.util_target + (u - k.util_target) * 0.5;
        prop_assert!(r(g, c, near) >= r(g, c, u));
        let b = RewardBreakdown::from_terms(g, c, u, &k);
        prop_assert!((b.recompute() - b.reward).abs() <= 1e-12);
    }

    #[test]
    fn target_cell_is_a_maximizer(xs in proptest::collection::vec(0.0f64..1.0, 1..60)) {
        let k = select_target_cell(&xs).unwrap();
        prop_assert!(xs.iter().all(|&x| x <= xs[k]));
        prop_assert!(xs[..k].iter().all(|&x| x < xs[k]));
    }

    #[test]
    fn two_head_actions_always_pick_the_whole_cell(a in 0usize..64, b in 0usize..128) {
        prop_assert_eq!(decode_action(&[a, b], 64, 128).unwrap().group, GroupKind::All);
    }
}
