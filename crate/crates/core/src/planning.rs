//! Policy enumeration, belief rollout and the policy posterior.
//!
//! Beliefs are mean-field across time: each step's `Q(x_τ | π)` is the
//! previous one pushed through the chosen transition, and a policy's cost is
//! the sum of per-step functional values. The posterior is
//! `Q(π) ∝ exp(-γ Σ_τ G_τ(π))`, so a lower cost means a more probable policy.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functionals::{evaluate_step, predictive_state, Functional, FunctionalReport, PredictiveState};
use crate::model::{GenerativeModel, PreferenceModel};
use crate::probability::{softmax, Categorical};

/// Upper bound on `A^T`.
pub const MAX_POLICIES: u128 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Policy {
    pub actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Actions joined with `-`, e.g. `1-0-1`.
    pub fn label(&self) -> String {
        self.actions
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// `A^T` without overflow, saturating at `u128::MAX`.
pub fn policy_count(num_actions: usize, horizon: usize) -> u128 {
    let mut n: u128 = 1;
    for _ in 0..horizon {
        n = n.saturating_mul(num_actions as u128);
    }
    n
}

/// All `A^T` action sequences in lexicographic order.
pub fn enumerate_policies(num_actions: usize, horizon: usize) -> Result<Vec<Policy>> {
    let size = policy_count(num_actions, horizon);
    if size > MAX_POLICIES {
        return Err(Error::PolicySpaceTooLarge { size });
    }
    let size = size as usize;
    let mut out = Vec::with_capacity(size);
    for mut k in 0..size {
        // Most significant digit first gives lexicographic order.
        let mut actions = vec![0; horizon];
        for slot in actions.iter_mut().rev() {
            *slot = k % num_actions;
            k /= num_actions;
        }
        out.push(Policy::new(actions));
    }
    Ok(out)
}

fn check_policy(policy: &Policy, m: &GenerativeModel) -> Result<()> {
    for &a in &policy.actions {
        if a >= m.num_actions() {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: a,
                size: m.num_actions(),
            });
        }
    }
    Ok(())
}

/// Predicted state beliefs `B[a_τ] ⋯ B[a_1] belief0` for `τ = 1..T`.
pub fn belief_rollout(
    belief0: &Categorical,
    policy: &Policy,
    m: &GenerativeModel,
) -> Result<Vec<Categorical>> {
    check_policy(policy, m)?;
    let mut q = belief0.clone();
    policy
        .actions
        .iter()
        .map(|&a| {
            q = m.transition(a)?.apply(&q)?;
            Ok(q.clone())
        })
        .collect()
}

/// One predictive state per step of the policy.
pub fn rollout(
    belief0: &Categorical,
    policy: &Policy,
    m: &GenerativeModel,
) -> Result<Vec<PredictiveState>> {
    belief_rollout(belief0, policy, m)?
        .iter()
        .map(|q| predictive_state(q, m, None))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub policy: Policy,
    pub functional: Functional,
    pub per_step: Vec<FunctionalReport>,
    pub total: f64,
}

/// Evaluates a policy with the exact conditionals.
pub fn evaluate_policy(
    policy: &Policy,
    functional: Functional,
    belief0: &Categorical,
    m: &GenerativeModel,
    pref: &PreferenceModel,
) -> Result<PolicyEvaluation> {
    evaluate_policy_with_override(policy, functional, belief0, m, pref, 0.0)
}

/// Like [`evaluate_policy`], with every step's `Q(x | o)` mixed toward
/// uniform at rate `eta`. `eta = 0` means no override.
pub fn evaluate_policy_with_override(
    policy: &Policy,
    functional: Functional,
    belief0: &Categorical,
    m: &GenerativeModel,
    pref: &PreferenceModel,
    eta: f64,
) -> Result<PolicyEvaluation> {
    let per_step = rollout(belief0, policy, m)?
        .into_iter()
        .map(|ps| {
            let ps = if eta > 0.0 { ps.with_mixed_posterior(eta)? } else { ps };
            evaluate_step(functional, &ps, pref)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = per_step.iter().map(|r| r.value).sum();
    Ok(PolicyEvaluation {
        policy: policy.clone(),
        functional,
        per_step,
        total,
    })
}

/// `softmax(-γ · totals)` over the evaluations, in their given order.
pub fn policy_posterior(evals: &[PolicyEvaluation], precision: f64) -> Result<Categorical> {
    if let Some(first) = evals.first() {
        if let Some(other) = evals.iter().find(|e| e.functional != first.functional) {
            return Err(Error::MixedFunctionals {
                first: first.functional.to_string(),
                other: other.functional.to_string(),
            });
        }
    }
    if !(precision > 0.0 && precision.is_finite()) {
        return Err(Error::InvalidDistribution(format!(
            "policy precision must be positive, got {precision}"
        )));
    }
    let neg: Vec<f64> = evals.iter().map(|e| -e.total).collect();
    softmax(&neg, precision)
}

/// Every policy evaluated, plus the posterior over them.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub evaluations: Vec<PolicyEvaluation>,
    pub posterior: Categorical,
}

impl Plan {
    pub fn policies(&self) -> Vec<Policy> {
        self.evaluations.iter().map(|e| e.policy.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanConfig {
    pub functional: Functional,
    pub horizon: usize,
    pub precision: f64,
    pub eta: f64,
}

impl PlanConfig {
    pub fn new(functional: Functional, horizon: usize) -> Self {
        Self {
            functional,
            horizon,
            precision: 1.0,
            eta: 0.0,
        }
    }
}

/// Evaluates all policies in parallel; results keep enumeration order.
pub fn plan(
    cfg: &PlanConfig,
    belief0: &Categorical,
    m: &GenerativeModel,
    pref: &PreferenceModel,
) -> Result<Plan> {
    let policies = enumerate_policies(m.num_actions(), cfg.horizon)?;
    let evaluations = policies
        .par_iter()
        .map(|p| evaluate_policy_with_override(p, cfg.functional, belief0, m, pref, cfg.eta))
        .collect::<Result<Vec<_>>>()?;
    let posterior = policy_posterior(&evaluations, cfg.precision)?;
    Ok(Plan {
        evaluations,
        posterior,
    })
}

/// Seeded generator for stochastic policy selection.
pub fn selection_rng(seed: u64) -> ChaCha8Rng {
    // Offset so a run seed shared with an environment gives a different stream.
    ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15)
}

/// Index of the modal policy, or of a sampled one when `rng` is given. Ties
/// go to the lexicographically first policy.
pub fn select_policy(posterior: &Categorical, rng: Option<&mut ChaCha8Rng>) -> usize {
    assert!(!posterior.is_empty(), "no policies to select from");
    match rng {
        None => posterior.argmax(),
        Some(rng) => WeightedIndex::new(posterior.probs())
            .expect("posterior is a valid distribution")
            .sample(rng),
    }
}

/// First action of the policy picked by [`select_policy`].
pub fn select_action(
    posterior: &Categorical,
    policies: &[Policy],
    rng: Option<&mut ChaCha8Rng>,
) -> usize {
    assert_eq!(posterior.len(), policies.len(), "one probability per policy");
    let k = select_policy(posterior, rng);
    policies[k].actions.first().copied().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_model;
    use crate::probability::StochasticMatrix;

    fn eval_with_total(functional: Functional, total: f64) -> PolicyEvaluation {
        PolicyEvaluation {
            policy: Policy::new(vec![0]),
            functional,
            per_step: vec![],
            total,
        }
    }

    #[test]
    fn enumeration_examples() {
        let p = enumerate_policies(2, 1).unwrap();
        assert_eq!(p, vec![Policy::new(vec![0]), Policy::new(vec![1])]);
        let p = enumerate_policies(2, 2).unwrap();
        let got: Vec<_> = p.iter().map(|p| p.actions.clone()).collect();
        assert_eq!(got, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(
            enumerate_policies(3, 11),
            Err(Error::PolicySpaceTooLarge { size: 177147 })
        );
    }

    #[test]
    fn identity_transitions_keep_beliefs() {
        let (m, _) = random_model(3, 2, 1, 3, 4);
        let m = GenerativeModel::new(
            m.likelihood().clone(),
            vec![StochasticMatrix::identity(3)],
            m.initial_prior().clone(),
            3,
        )
        .unwrap();
        let qs = belief_rollout(m.initial_prior(), &Policy::new(vec![0, 0, 0]), &m).unwrap();
        assert!(qs.iter().all(|q| q == m.initial_prior()));
    }

    #[test]
    fn period_two_cycle_returns() {
        let swap = StochasticMatrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let m = GenerativeModel::new(
            StochasticMatrix::identity(2),
            vec![swap],
            Categorical::delta(2, 0),
            2,
        )
        .unwrap();
        let qs = belief_rollout(m.initial_prior(), &Policy::new(vec![0, 0]), &m).unwrap();
        assert_eq!(qs[0], Categorical::delta(2, 1));
        assert_eq!(qs[1], Categorical::delta(2, 0));
    }

    #[test]
    fn bad_action_is_rejected() {
        let (m, _) = random_model(2, 2, 2, 1, 0);
        assert!(matches!(
            rollout(m.initial_prior(), &Policy::new(vec![2]), &m),
            Err(Error::IndexOutOfRange { what: "action", .. })
        ));
    }

    #[test]
    fn single_step_total_is_step_value() {
        let (m, pref) = random_model(3, 3, 2, 1, 8);
        let e = evaluate_policy(&Policy::new(vec![1]), Functional::Fef, m.initial_prior(), &m, &pref)
            .unwrap();
        assert_eq!(e.per_step.len(), 1);
        assert_eq!(e.total, e.per_step[0].value);
    }

    #[test]
    fn posterior_examples() {
        let evals = vec![eval_with_total(Functional::Efe, 1.5); 3];
        let p = policy_posterior(&evals, 1.0).unwrap();
        assert!(p.probs().iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));

        let (ln2, ln3) = (2f64.ln(), 3f64.ln());
        let evals = vec![
            eval_with_total(Functional::Efe, ln3 - ln2),
            eval_with_total(Functional::Efe, ln3),
        ];
        let p = policy_posterior(&evals, 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);

        let evals = vec![
            eval_with_total(Functional::Fef, ln3 + ln2),
            eval_with_total(Functional::Fef, ln3),
        ];
        let p = policy_posterior(&evals, 1.0).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_functionals_rejected() {
        let evals = vec![eval_with_total(Functional::Efe, 0.0), eval_with_total(Functional::Gfe, 0.0)];
        assert_eq!(
            policy_posterior(&evals, 1.0),
            Err(Error::MixedFunctionals {
                first: "efe".into(),
                other: "gfe".into()
            })
        );
    }

    #[test]
    fn selection_examples() {
        let policies = enumerate_policies(2, 1).unwrap();
        let post = Categorical::new(vec![0.9, 0.1]).unwrap();
        assert_eq!(select_action(&post, &policies, None), 0);
        let post = Categorical::new(vec![0.1, 0.9]).unwrap();
        assert_eq!(select_action(&post, &policies, None), 1);
        assert_eq!(select_action(&Categorical::uniform(2), &policies, None), 0);

        let draws = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| select_action(&Categorical::uniform(2), &policies, Some(&mut rng)))
                .collect::<Vec<_>>()
        };
        assert_eq!(draws(3), draws(3));
    }

    #[test]
    fn plan_keeps_enumeration_order() {
        let (m, pref) = random_model(3, 3, 3, 2, 12);
        let cfg = PlanConfig::new(Functional::Efe, 2);
        let a = plan(&cfg, m.initial_prior(), &m, &pref).unwrap();
        let b = plan(&cfg, m.initial_prior(), &m, &pref).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.policies(), enumerate_policies(3, 2).unwrap());
        assert!((a.posterior.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
