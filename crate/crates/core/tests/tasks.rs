//! End-to-end checks on the shipped tasks and fixture files.

use std::path::PathBuf;

use efelab::envs::{
    bandit_factory, bandit_fixture, bandit_with, cue, cue_task_factory, cue_task_fixture,
    cue_task_hand_go_probability, cue_task_hand_totals, write_fixtures, Environment,
};
use efelab::functionals::{predictive_state, Functional};
use efelab::inference::{bayes_posterior, belief_predict};
use efelab::model::{load_model, PreferenceModel};
use efelab::oracle::{expected_log_evidence_exact, identity_suite, SuiteConfig};
use efelab::planning::{plan, select_action, PlanConfig};
use efelab::probability::Categorical;

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[test]
fn checked_in_fixtures_match_factories() {
    let dir = fixtures_dir();
    assert_eq!(load_model(dir.join("cue_task.toml")).unwrap(), cue_task_fixture());
    assert_eq!(load_model(dir.join("bandit.toml")).unwrap(), bandit_fixture());
    let on_disk = std::fs::read_to_string(dir.join("cue_task.toml")).unwrap();
    assert_eq!(on_disk, cue_task_fixture().to_text());
}

#[test]
fn written_fixtures_load_back() {
    let tmp = tempfile::tempdir().unwrap();
    let paths = write_fixtures(tmp.path()).unwrap();
    assert_eq!(paths.len(), 2);
    for p in paths {
        let f = load_model(&p).unwrap();
        assert!(f.true_state.is_some());
        assert!(f.preferences.is_some());
    }
}

#[test]
fn cue_task_posteriors() {
    let (m, pref, _) = cue_task_factory();
    for f in Functional::ALL {
        let p = plan(&PlanConfig::new(f, 1), m.initial_prior(), &m, &pref).unwrap();
        let hand = cue_task_hand_totals(f);
        assert!((p.evaluations[cue::STAY].total - hand[cue::STAY]).abs() < 1e-12);
        assert!((p.evaluations[cue::GO_CUE].total - hand[cue::GO_CUE]).abs() < 1e-12);
        assert!((p.posterior[cue::GO_CUE] - cue_task_hand_go_probability(f)).abs() < 1e-9);
    }
}

#[test]
fn cue_task_orderings() {
    let (m, pref, _) = cue_task_factory();
    let go = |f| {
        plan(&PlanConfig::new(f, 1), m.initial_prior(), &m, &pref).unwrap().posterior[cue::GO_CUE]
    };
    // Information-seeking functionals prefer the cue; the FEF has no reason to.
    assert!(go(Functional::Efe) > 0.5);
    assert!(go(Functional::Feef) > 0.5);
    assert!((go(Functional::Fef) - 0.5).abs() < 1e-12);
    assert!(go(Functional::Gfe) > go(Functional::Efe));
}

#[test]
fn cue_evidence_is_ln3_at_the_cue() {
    let (m, pref, _) = cue_task_factory();
    let q = m.transition(cue::GO_CUE).unwrap().apply(m.initial_prior()).unwrap();
    let ps = predictive_state(&q, &m, None).unwrap();
    assert!((expected_log_evidence_exact(&ps, &pref).unwrap() - 3f64.ln()).abs() < 1e-15);
}

#[test]
fn efe_agent_visits_the_cue_and_learns_the_context() {
    let f = cue_task_fixture();
    let pref = f.preferences.clone().unwrap();
    let m = f.model;
    let mut env = Environment::new(m.clone(), f.true_state.unwrap(), 0).unwrap();
    let mut belief = m.initial_prior().clone();
    let p = plan(&PlanConfig::new(Functional::Efe, 1), &belief, &m, &pref).unwrap();
    let a = select_action(&p.posterior, &p.policies(), None);
    assert_eq!(a, cue::GO_CUE);
    let o = env.step(a).unwrap();
    belief = bayes_posterior(&belief_predict(&belief, a, &m).unwrap(), m.likelihood(), o)
        .unwrap()
        .dist;
    assert_eq!(belief, Categorical::delta(4, cue::state(1, cue::CUE)));
}

#[test]
fn bandit_prefers_high_reward_arm() {
    let (m, pref, _) = bandit_factory();
    for f in Functional::ALL {
        let p = plan(&PlanConfig::new(f, 1), m.initial_prior(), &m, &pref).unwrap();
        assert_eq!(p.posterior.argmax(), 0, "{f}");
        for e in &p.evaluations {
            // Arms are absorbing with known state, so nothing to learn.
            if let Some(ig) = e.per_step[0].term("epistemic") {
                assert!(ig.abs() < 1e-12);
            }
        }
    }
}

#[test]
fn bandit_ties_without_preferences() {
    let (m, _, _) = bandit_with(0.9, 0.1, 0.5).unwrap();
    let pref = PreferenceModel::observations(Categorical::uniform(2));
    for f in Functional::ALL {
        let p = plan(&PlanConfig::new(f, 1), m.initial_prior(), &m, &pref).unwrap();
        let d = p.evaluations[0].total - p.evaluations[1].total;
        assert!(d.abs() < 1e-12, "{f}: {d}");
    }
}

#[test]
fn suite_reports_both_gap_signs_and_strict_post_err() {
    let r = identity_suite(&SuiteConfig {
        num_seeds: 20,
        ..SuiteConfig::default()
    })
    .unwrap();
    assert!(r.passed());
    assert!(r.efe_evidence_gap_with_override.positive > 0);
    assert!(r.efe_evidence_gap_with_override.negative > 0);
    assert_eq!(r.post_err_with_override.positive, r.post_err_with_override.total());
}
