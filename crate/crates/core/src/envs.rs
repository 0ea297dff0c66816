//! Ground-truth environments and the two shipped tasks.
//!
//! The cue task separates information-seeking functionals from the FEF: going
//! to the cue resolves the hidden context, and nothing else differs between
//! the two actions. The bandit checks that every functional follows
//! extrinsic value when information gain is equal across arms.

use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::functionals::Functional;
use crate::model::{GenerativeModel, Labels, ModelFile, PreferenceModel};
use crate::probability::{Categorical, StochasticMatrix};

/// A hidden state evolving under a ground-truth model.
#[derive(Debug, Clone)]
pub struct Environment {
    true_state: usize,
    model: GenerativeModel,
    seed: u64,
    rng: ChaCha8Rng,
}

impl Environment {
    pub fn new(model: GenerativeModel, true_state: usize, seed: u64) -> Result<Self> {
        if true_state >= model.num_states() {
            return Err(Error::IndexOutOfRange {
                what: "true_state",
                index: true_state,
                size: model.num_states(),
            });
        }
        Ok(Self {
            true_state,
            model,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn true_state(&self) -> usize {
        self.true_state
    }

    pub fn model(&self) -> &GenerativeModel {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Moves the hidden state under `action` and emits an observation from
    /// the new state.
    pub fn step(&mut self, action: usize) -> Result<usize> {
        let next = sample(&self.model.transition(action)?.column(self.true_state), &mut self.rng);
        self.true_state = next;
        Ok(sample(&self.model.likelihood().column(next), &mut self.rng))
    }
}

/// Draws a hidden start state from `prior` with a seeded generator.
pub fn sample_initial_state(prior: &Categorical, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    sample(prior, &mut rng)
}

/// Functional form of [`Environment::step`].
pub fn env_step(mut env: Environment, action: usize) -> Result<(usize, Environment)> {
    let o = env.step(action)?;
    Ok((o, env))
}

fn sample(p: &Categorical, rng: &mut ChaCha8Rng) -> usize {
    WeightedIndex::new(p.probs())
        .expect("validated column")
        .sample(rng)
}

fn labels(states: &[&str], observations: &[&str], actions: &[&str]) -> Labels {
    let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
    Labels {
        states: own(states),
        observations: own(observations),
        actions: own(actions),
    }
}

pub mod cue {
    //! Indices for the cue task. States are `2 · context + location`.
    pub const START: usize = 0;
    pub const CUE: usize = 1;
    pub const NULL: usize = 0;
    pub const STAY: usize = 0;
    pub const GO_CUE: usize = 1;

    pub fn state(context: usize, location: usize) -> usize {
        2 * context + location
    }

    pub fn cue_obs(context: usize) -> usize {
        1 + context
    }
}

/// Hidden context × {start, cue}; the cue location reveals the context.
pub fn cue_task_factory() -> (GenerativeModel, PreferenceModel, Labels) {
    use cue::*;
    let (s, o) = (4, 3);
    let mut lik = vec![0.0; o * s];
    let mut go = vec![0.0; s * s];
    for ctx in 0..2 {
        lik[NULL * s + state(ctx, START)] = 1.0;
        lik[cue_obs(ctx) * s + state(ctx, CUE)] = 1.0;
        for loc in [START, CUE] {
            go[state(ctx, CUE) * s + state(ctx, loc)] = 1.0;
        }
    }
    let mut prior = vec![0.0; s];
    prior[state(0, START)] = 0.5;
    prior[state(1, START)] = 0.5;
    let model = GenerativeModel::new(
        StochasticMatrix::new(o, s, lik).expect("cue likelihood"),
        vec![
            StochasticMatrix::identity(s),
            StochasticMatrix::new(s, s, go).expect("cue transition"),
        ],
        Categorical::new(prior).expect("cue prior"),
        1,
    )
    .expect("cue task is a valid model");
    let pref = PreferenceModel::observations(Categorical::uniform(o));
    let labels = labels(
        &["ctx0_start", "ctx0_cue", "ctx1_start", "ctx1_cue"],
        &["null", "cue0", "cue1"],
        &["stay", "go_cue"],
    );
    (model, pref, labels)
}

/// Two absorbing arms paying "reward" with the given probabilities, and
/// preferences putting `reward_preference` on "reward".
pub fn bandit_with(
    reward_arm0: f64,
    reward_arm1: f64,
    reward_preference: f64,
) -> Result<(GenerativeModel, PreferenceModel, Labels)> {
    // States: start, arm0, arm1. Observations: no_reward, reward.
    let lik = StochasticMatrix::new(
        2,
        3,
        vec![
            1.0, 1.0 - reward_arm0, 1.0 - reward_arm1, //
            0.0, reward_arm0, reward_arm1,
        ],
    )?;
    let to_arm = |arm: usize| {
        let mut b = vec![0.0; 9];
        b[arm * 3] = 1.0;
        b[4] = 1.0;
        b[8] = 1.0;
        StochasticMatrix::new(3, 3, b)
    };
    let model = GenerativeModel::new(lik, vec![to_arm(1)?, to_arm(2)?], Categorical::delta(3, 0), 1)?;
    let pref = PreferenceModel::observations(Categorical::new(vec![
        1.0 - reward_preference,
        reward_preference,
    ])?);
    let labels = labels(
        &["start", "arm0", "arm1"],
        &["no_reward", "reward"],
        &["pull_arm0", "pull_arm1"],
    );
    Ok((model, pref, labels))
}

pub fn bandit_factory() -> (GenerativeModel, PreferenceModel, Labels) {
    bandit_with(0.9, 0.1, 0.99).expect("bandit is a valid model")
}

fn fixture(
    (model, pref, labels): (GenerativeModel, PreferenceModel, Labels),
    true_state: usize,
) -> ModelFile {
    ModelFile {
        model,
        preferences: Some(pref),
        true_state: Some(true_state),
        labels: Some(labels),
    }
}

/// The cue task as a model file; the hidden context is 1.
pub fn cue_task_fixture() -> ModelFile {
    fixture(cue_task_factory(), cue::state(1, cue::START))
}

pub fn bandit_fixture() -> ModelFile {
    fixture(bandit_factory(), 0)
}

/// Writes `cue_task.toml` and `bandit.toml` into `dir`.
pub fn write_fixtures(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(e.to_string()))?;
    let mut out = Vec::new();
    for (name, file) in [("cue_task.toml", cue_task_fixture()), ("bandit.toml", bandit_fixture())] {
        let path = dir.join(name);
        file.save(&path)?;
        out.push(path);
    }
    Ok(out)
}

/// Hand-derived cue-task totals, indexed `[stay, go_cue]`.
///
/// Going to the cue yields `Q(o)` uniform over the two cues, deterministic
/// posteriors and `Q(x | π)` at 1/2 on each cue state; staying yields the
/// null observation with certainty and posterior equal to prior. With
/// uniform preferences `p̃(o) = 1/3`:
///
/// * EFE: go `= ln 3 - ln 2` (information gain `ln 2`), stay `= ln 3`.
/// * FEF: go `= ln 3 + 0` (posterior error 0, no information-gain bonus),
///   stay `= ln 3`.
/// * FEEF: equal to EFE, the likelihood carries no entropy.
/// * GFE: go `= ln 3 - 2 ln 2` (mutual information `ln 2` on top of FEEF),
///   stay `= ln 3`.
pub fn cue_task_hand_totals(f: Functional) -> [f64; 2] {
    let (ln2, ln3) = (2f64.ln(), 3f64.ln());
    match f {
        Functional::Efe | Functional::Feef => [ln3, ln3 - ln2],
        Functional::Fef => [ln3, ln3],
        Functional::Gfe => [ln3, ln3 - 2.0 * ln2],
    }
}

/// Go-cue policy probability at precision 1, from the hand totals.
pub fn cue_task_hand_go_probability(f: Functional) -> f64 {
    match f {
        Functional::Efe | Functional::Feef => 2.0 / 3.0,
        Functional::Fef => 0.5,
        Functional::Gfe => 0.8,
    }
}

/// Hand-derived bandit totals `[arm0, arm1]` for reward probabilities
/// `r0, r1` and reward preference `c`. Each arm is absorbing with a known
/// state, so information gain and mutual information are zero and only the
/// expected log preference (EFE, FEF) or the emission divergence from the
/// preferences (FEEF, GFE) remains.
pub fn bandit_hand_totals(f: Functional, r0: f64, r1: f64, c: f64) -> [f64; 2] {
    let cross = |r: f64| -(r * c.ln() + (1.0 - r) * (1.0 - c).ln());
    let neg_entropy = |r: f64| {
        let t = |p: f64| if p > 0.0 { p * p.ln() } else { 0.0 };
        t(r) + t(1.0 - r)
    };
    match f {
        Functional::Efe | Functional::Fef => [cross(r0), cross(r1)],
        Functional::Feef | Functional::Gfe => {
            [cross(r0) + neg_entropy(r0), cross(r1) + neg_entropy(r1)]
        }
    }
}
