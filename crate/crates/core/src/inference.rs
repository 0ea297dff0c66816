//! State inference at the current timestep and the variational free energy.
//!
//! The variational family is the whole simplex over states, so the optimal
//! posterior is exact Bayes. Suboptimal posteriors come from
//! [`Posterior::perturbed`], which mixes the exact posterior toward uniform.

use crate::error::{Error, Result};
use crate::model::{build_biased_joint, GenerativeModel, PreferenceModel};
use crate::probability::{kl_divergence, Categorical, Joint2, LogClamp, StochasticMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosteriorSource {
    ExactBayes,
    SuppliedApproximation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub dist: Categorical,
    pub source: PosteriorSource,
}

impl Posterior {
    pub fn supplied(dist: Categorical) -> Self {
        Self {
            dist,
            source: PosteriorSource::SuppliedApproximation,
        }
    }

    /// `(1 - eta) · self + eta · uniform`, marked as an approximation.
    pub fn perturbed(&self, eta: f64) -> Self {
        let uniform = Categorical::uniform(self.dist.len());
        Self::supplied(self.dist.mix(&uniform, eta).expect("same support"))
    }
}

/// `p(x | o) ∝ p(o | x) p(x)`.
pub fn bayes_posterior(
    prior: &Categorical,
    likelihood: &StochasticMatrix,
    observation: usize,
) -> Result<Posterior> {
    if observation >= likelihood.rows() {
        return Err(Error::IndexOutOfRange {
            what: "observation",
            index: observation,
            size: likelihood.rows(),
        });
    }
    if prior.len() != likelihood.cols() {
        return Err(Error::DimensionMismatch {
            expected: likelihood.cols(),
            found: prior.len(),
        });
    }
    let weights: Vec<f64> = likelihood
        .row(observation)
        .iter()
        .zip(prior.probs())
        .map(|(l, p)| l * p)
        .collect();
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::ImpossibleObservation { observation });
    }
    Ok(Posterior {
        dist: Categorical::from_weights(weights)?,
        source: PosteriorSource::ExactBayes,
    })
}

/// Pushes a belief through `p(x' | x, action)`.
pub fn belief_predict(
    belief: &Categorical,
    action: usize,
    model: &GenerativeModel,
) -> Result<Categorical> {
    model.transition(action)?.apply(belief)
}

/// VFE at one observation with all three decompositions.
///
/// `accuracy` is `E_q[ln p(o | x)]` and enters with a minus sign;
/// `neg_entropy` is `E_q[ln q]` and `energy` is `E_q[ln p(o, x)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VfeReport {
    pub vfe: f64,
    pub energy: f64,
    pub neg_entropy: f64,
    pub accuracy: f64,
    pub complexity: f64,
    pub neg_log_evidence: f64,
    pub posterior_divergence: f64,
    /// The posterior was the closed-form Bayes update, not an iterate.
    pub closed_form: bool,
    pub clamped: bool,
}

impl VfeReport {
    /// `-H[q] - energy`.
    pub fn entropy_energy_form(&self) -> f64 {
        self.neg_entropy - self.energy
    }

    /// `-accuracy + complexity`.
    pub fn accuracy_complexity_form(&self) -> f64 {
        -self.accuracy + self.complexity
    }

    /// `-ln p(o) + KL[q || p(x | o)]`.
    pub fn evidence_form(&self) -> f64 {
        self.neg_log_evidence + self.posterior_divergence
    }
}

/// Variational free energy `KL[q(x) || p(o, x)]` at observation `o`.
///
/// The joint is `p(o | x) prior(x)` from the model, or, when `pref` is
/// given, the biased joint built from that predictive joint.
pub fn vfe(
    q: &Posterior,
    observation: usize,
    prior: &Categorical,
    model: &GenerativeModel,
    pref: Option<&PreferenceModel>,
) -> Result<VfeReport> {
    let s = model.num_states();
    if q.dist.len() != s {
        return Err(Error::DimensionMismatch {
            expected: s,
            found: q.dist.len(),
        });
    }
    if observation >= model.num_obs() {
        return Err(Error::IndexOutOfRange {
            what: "observation",
            index: observation,
            size: model.num_obs(),
        });
    }
    let predictive = Joint2::from_conditional_and_col_marginal(model.likelihood(), prior)?;
    let joint = match pref {
        None => predictive,
        Some(p) => build_biased_joint(p, &predictive, model.likelihood())?
            .joint()
            .clone(),
    };

    // p(o, x) for the observed o, the state prior, and p(o | x) from the joint.
    let row: Vec<f64> = (0..s).map(|x| joint.get(observation, x)).collect();
    let evidence: f64 = row.iter().sum();
    if evidence <= 0.0 {
        return Err(Error::ImpossibleObservation { observation });
    }
    let state_prior = joint.col_marginal();
    let exact = Categorical::from_weights(row.clone())?;

    let mut ln = LogClamp::new();
    let mut neg_entropy = 0.0;
    let mut energy = 0.0;
    let mut accuracy = 0.0;
    for x in 0..s {
        let qx = q.dist[x];
        if qx == 0.0 {
            continue;
        }
        neg_entropy += qx * qx.ln();
        energy += qx * ln.ln(row[x]);
        let lik = if state_prior[x] > 0.0 {
            row[x] / state_prior[x]
        } else {
            0.0
        };
        accuracy += qx * ln.ln(lik);
    }
    let complexity = kl_divergence(&q.dist, &state_prior)?;
    let posterior_divergence = kl_divergence(&q.dist, &exact)?;
    Ok(VfeReport {
        vfe: neg_entropy - energy,
        energy,
        neg_entropy,
        accuracy,
        complexity,
        neg_log_evidence: -evidence.ln(),
        posterior_divergence,
        closed_form: q.source == PosteriorSource::ExactBayes,
        clamped: ln.clamped(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_model;

    fn cat(v: &[f64]) -> Categorical {
        Categorical::new(v.to_vec()).unwrap()
    }

    #[test]
    fn bayes_examples() {
        let prior = cat(&[0.2, 0.3, 0.5]);
        let p = bayes_posterior(&prior, &StochasticMatrix::identity(3), 1).unwrap();
        assert_eq!(p.dist, Categorical::delta(3, 1));
        assert_eq!(p.source, PosteriorSource::ExactBayes);

        let flat = StochasticMatrix::new(2, 3, vec![0.3, 0.3, 0.3, 0.7, 0.7, 0.7]).unwrap();
        let p = bayes_posterior(&prior, &flat, 0).unwrap();
        for (a, b) in p.dist.probs().iter().zip(prior.probs()) {
            assert!((a - b).abs() < 1e-15);
        }

        let l = StochasticMatrix::new(2, 2, vec![0.8, 0.2, 0.2, 0.8]).unwrap();
        let p = bayes_posterior(&cat(&[0.5, 0.5]), &l, 0).unwrap();
        assert!((p.dist[0] - 0.8).abs() < 1e-15);
        assert!((p.dist[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn impossible_observation() {
        let l = StochasticMatrix::identity(2);
        assert_eq!(
            bayes_posterior(&Categorical::delta(2, 0), &l, 1),
            Err(Error::ImpossibleObservation { observation: 1 })
        );
    }

    #[test]
    fn predict_examples() {
        let (m, _) = random_model(2, 2, 1, 1, 0);
        let id = GenerativeModel::new_unchecked(
            m.likelihood().clone(),
            vec![
                StochasticMatrix::identity(2),
                StochasticMatrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap(),
                StochasticMatrix::new(2, 2, vec![0.9, 0.2, 0.1, 0.8]).unwrap(),
            ],
            Categorical::uniform(2),
            1,
        );
        let b = cat(&[0.3, 0.7]);
        assert_eq!(belief_predict(&b, 0, &id).unwrap(), b);
        assert_eq!(belief_predict(&b, 1, &id).unwrap().probs(), &[0.7, 0.3]);
        let out = belief_predict(&cat(&[0.5, 0.5]), 2, &id).unwrap();
        assert!((out[0] - 0.55).abs() < 1e-15);
        assert!((out[1] - 0.45).abs() < 1e-15);
        assert!(matches!(
            belief_predict(&b, 3, &id),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn exact_posterior_makes_bound_tight() {
        let (m, _) = random_model(3, 3, 1, 1, 5);
        let prior = m.initial_prior().clone();
        let q = bayes_posterior(&prior, m.likelihood(), 2).unwrap();
        let r = vfe(&q, 2, &prior, &m, None).unwrap();
        assert!(r.posterior_divergence.abs() < 1e-12);
        assert!((r.vfe - r.neg_log_evidence).abs() < 1e-12);
        assert!(r.closed_form);
    }

    #[test]
    fn flat_likelihood_prior_posterior_has_zero_complexity() {
        let flat = StochasticMatrix::new(2, 3, vec![0.4, 0.4, 0.4, 0.6, 0.6, 0.6]).unwrap();
        let prior = cat(&[0.2, 0.3, 0.5]);
        let m = GenerativeModel::new(
            flat,
            vec![StochasticMatrix::identity(3)],
            prior.clone(),
            1,
        )
        .unwrap();
        let r = vfe(&Posterior::supplied(prior.clone()), 1, &prior, &m, None).unwrap();
        assert!(r.complexity.abs() < 1e-15);
    }

    #[test]
    fn decompositions_agree_for_perturbed_posterior() {
        let (m, _) = random_model(3, 3, 1, 1, 21);
        let prior = m.initial_prior().clone();
        let q = bayes_posterior(&prior, m.likelihood(), 0).unwrap().perturbed(0.3);
        let r = vfe(&q, 0, &prior, &m, None).unwrap();
        assert!((r.vfe - r.entropy_energy_form()).abs() < 1e-12);
        assert!((r.vfe - r.accuracy_complexity_form()).abs() < 1e-9);
        assert!((r.vfe - r.evidence_form()).abs() < 1e-9);
        assert!(r.posterior_divergence > 0.0);
        assert!(!r.closed_form);
    }
}
