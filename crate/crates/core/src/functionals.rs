//! Per-timestep free-energy functionals of a policy-conditioned prediction.
//!
//! All four functionals are costs over the predictive joint
//! `Q(o, x | π) = p(o | x) Q(x | π)` and a biased joint `p̃(o, x)`:
//!
//! ```text
//! EFE  = E[ln Q(x | π)           - ln p̃(o, x)]
//! FEF  = E[ln Q(x | o)           - ln p̃(o, x)]
//! FEEF = E[ln Q(o, x | π)        - ln p̃(o, x)]   (= KL[Q(o, x | π) || p̃(o, x)])
//! GFE  = E[ln Q(o) + ln Q(x | π) - ln p̃(o, x)]
//! ```
//!
//! EFE and FEF take their expectation under `Q(o | π) Q̂(x | o)`, where
//! `Q̂(x | o)` is the exact conditional unless a posterior override is
//! supplied. With an override the two factorizations of the predictive joint
//! no longer agree, which is what exposes the posterior-approximation-error
//! term. FEEF and GFE always use the predictive joint itself.
//!
//! Every report keeps its terms with their natural sign (information gain
//! and divergences are non-negative, `accuracy` and `energy` are expected
//! log probabilities) and lists each decomposition as explicit signed sums
//! of those terms.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{build_biased_joint, BiasedJoint, GenerativeModel, PreferenceModel};
use crate::probability::{
    entropy, factorize, kl_divergence, Categorical, Joint2, LogClamp, StochasticMatrix,
};

/// Tolerance used when flagging a violated naturalisation assumption.
pub const ASSUMPTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Functional {
    Efe,
    Fef,
    Feef,
    Gfe,
}

impl Functional {
    pub const ALL: [Functional; 4] = [
        Functional::Efe,
        Functional::Fef,
        Functional::Feef,
        Functional::Gfe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Functional::Efe => "efe",
            Functional::Fef => "fef",
            Functional::Feef => "feef",
            Functional::Gfe => "gfe",
        }
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Functional {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "efe" => Ok(Functional::Efe),
            "fef" => Ok(Functional::Fef),
            "feef" => Ok(Functional::Feef),
            "gfe" => Ok(Functional::Gfe),
            other => Err(format!("unknown functional `{other}` (expected efe|fef|feef|gfe)")),
        }
    }
}

/// Which `Q(x | o)` the report's terms were computed with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionalSource {
    Exact,
    Override,
}

/// A policy-conditioned prediction for one future timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveState {
    q_x: Categorical,
    likelihood: StochasticMatrix,
    joint: Joint2,
    q_o: Categorical,
    /// `S × O`; column `o` is the exact `Q(x | o)`.
    exact_x_given_o: StochasticMatrix,
    posterior_override: Option<StochasticMatrix>,
}

/// Builds `Q(o, x | π)` from `Q(x | π)` and the model likelihood.
pub fn predictive_state(
    q_x: &Categorical,
    model: &GenerativeModel,
    posterior_override: Option<StochasticMatrix>,
) -> Result<PredictiveState> {
    PredictiveState::from_parts(q_x.clone(), model.likelihood().clone(), posterior_override)
}

impl PredictiveState {
    pub fn from_parts(
        q_x: Categorical,
        likelihood: StochasticMatrix,
        posterior_override: Option<StochasticMatrix>,
    ) -> Result<Self> {
        let joint = Joint2::from_conditional_and_col_marginal(&likelihood, &q_x)?;
        let f = factorize(&joint);
        if let Some(ov) = &posterior_override {
            if ov.rows() != likelihood.cols() {
                return Err(Error::DimensionMismatch {
                    expected: likelihood.cols(),
                    found: ov.rows(),
                });
            }
            if ov.cols() != likelihood.rows() {
                return Err(Error::DimensionMismatch {
                    expected: likelihood.rows(),
                    found: ov.cols(),
                });
            }
            // Re-validate the columns.
            StochasticMatrix::new(ov.rows(), ov.cols(), ov.data().to_vec())?;
        }
        Ok(Self {
            q_x,
            likelihood,
            joint,
            q_o: f.row_marginal,
            exact_x_given_o: f.col_given_row,
            posterior_override,
        })
    }

    /// Replaces `Q(x | o)` by the exact conditional mixed toward uniform at
    /// rate `eta`. `eta = 0` gives back the exact conditional (as an override).
    pub fn with_mixed_posterior(&self, eta: f64) -> Result<Self> {
        let s = self.q_x.len();
        let uniform = Categorical::uniform(s);
        let columns = (0..self.q_o.len())
            .map(|o| self.exact_x_given_o.column(o).mix(&uniform, eta))
            .collect::<Result<Vec<_>>>()?;
        let mut out = self.clone();
        out.posterior_override = Some(StochasticMatrix::from_columns(&columns)?);
        Ok(out)
    }

    pub fn without_override(&self) -> Self {
        let mut out = self.clone();
        out.posterior_override = None;
        out
    }

    pub fn q_x(&self) -> &Categorical {
        &self.q_x
    }

    pub fn q_o(&self) -> &Categorical {
        &self.q_o
    }

    pub fn joint(&self) -> &Joint2 {
        &self.joint
    }

    pub fn likelihood(&self) -> &StochasticMatrix {
        &self.likelihood
    }

    pub fn exact_x_given_o(&self) -> &StochasticMatrix {
        &self.exact_x_given_o
    }

    pub fn posterior_override(&self) -> Option<&StochasticMatrix> {
        self.posterior_override.as_ref()
    }

    /// The `Q(x | o)` used in EFE/FEF expectations.
    pub fn q_x_given_o(&self) -> &StochasticMatrix {
        self.posterior_override
            .as_ref()
            .unwrap_or(&self.exact_x_given_o)
    }

    pub fn conditional_source(&self) -> ConditionalSource {
        if self.posterior_override.is_some() {
            ConditionalSource::Override
        } else {
            ConditionalSource::Exact
        }
    }

    /// `Q(o | π) Q̂(x | o)` laid out as `O × S`.
    pub fn evaluation_measure(&self) -> Joint2 {
        Joint2::from_row_marginal_and_conditional(&self.q_o, self.q_x_given_o())
            .expect("override shape checked at construction")
    }

    /// The biased joint for this timestep.
    pub fn biased_joint(&self, pref: &PreferenceModel) -> Result<BiasedJoint> {
        build_biased_joint(pref, &self.joint, &self.likelihood)
    }
}

/// A signed sum of named report terms that should equal the report value.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub name: &'static str,
    pub parts: Vec<(&'static str, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalReport {
    pub functional: Functional,
    pub value: f64,
    /// Terms in a fixed order per functional.
    pub terms: Vec<(&'static str, f64)>,
    pub decompositions: Vec<Decomposition>,
    pub conditional: ConditionalSource,
    pub clamped: bool,
}

impl FunctionalReport {
    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(k, _)| *k == name).map(|&(_, v)| v)
    }

    fn require(&self, name: &str) -> f64 {
        self.term(name)
            .unwrap_or_else(|| panic!("{} report has no term `{name}`", self.functional))
    }

    pub fn assemble(&self, d: &Decomposition) -> f64 {
        d.parts
            .iter()
            .map(|&(name, sign)| sign * self.require(name))
            .sum()
    }

    pub fn decomposition(&self, name: &str) -> Option<&Decomposition> {
        self.decompositions.iter().find(|d| d.name == name)
    }

    /// Largest `|value - assembled|` over all listed decompositions.
    pub fn max_decomposition_error(&self) -> f64 {
        self.decompositions
            .iter()
            .map(|d| (self.assemble(d) - self.value).abs())
            .fold(0.0, f64::max)
    }

    /// `value` followed by every term, as `(key, value)` pairs.
    pub fn flat(&self) -> Vec<(String, f64)> {
        std::iter::once(("value".to_string(), self.value))
            .chain(self.terms.iter().map(|&(k, v)| (k.to_string(), v)))
            .collect()
    }

    /// One `key=value` pair per line, reals with 12 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = format!("functional={}\n", self.functional);
        for (k, v) in self.flat() {
            out.push_str(&format!("{k}={}\n", format_real(v)));
        }
        out
    }
}

/// Decimal with 12 significant digits. Negative zero prints as zero.
pub fn format_real(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.11e}")
}

fn d(name: &'static str, parts: &[(&'static str, f64)]) -> Decomposition {
    Decomposition {
        name,
        parts: parts.to_vec(),
    }
}

/// `Σ p_i ln(p_i / q_i)` with the log floor applied to `q`.
fn kl_floored(p: &[f64], q: &[f64], ln: &mut LogClamp) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi.ln() - ln.ln(qi)))
        .sum()
}

/// `Σ_{o,x} m(o, x) · ln f(o, x)` over the support of `m`.
fn expect_ln(m: &Joint2, ln: &mut LogClamp, f: impl Fn(usize, usize) -> f64) -> f64 {
    let mut total = 0.0;
    for o in 0..m.rows() {
        for x in 0..m.cols() {
            let w = m.get(o, x);
            if w > 0.0 {
                total += w * ln.ln(f(o, x));
            }
        }
    }
    total
}

/// Quantities shared by the functionals at one timestep.
struct Shared<'a> {
    ps: &'a PredictiveState,
    biased: BiasedJoint,
    measure: Joint2,
}

impl<'a> Shared<'a> {
    fn new(ps: &'a PredictiveState, pref: &PreferenceModel) -> Result<Self> {
        Ok(Self {
            biased: ps.biased_joint(pref)?,
            measure: ps.evaluation_measure(),
            ps,
        })
    }

    /// `-Σ_o Q(o) ln p̃(o)`.
    fn neg_expected_log_preference(&self, ln: &mut LogClamp) -> f64 {
        let pref_o = self.biased.obs_marginal();
        -self
            .ps
            .q_o
            .probs()
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(o, &w)| w * ln.ln(pref_o[o]))
            .sum::<f64>()
    }

    /// `Σ_o Q(o) KL[Q̂(x | o) || Q(x | π)]`.
    fn information_gain(&self, ln: &mut LogClamp) -> f64 {
        let cond = self.ps.q_x_given_o();
        (0..self.ps.q_o.len())
            .filter(|&o| self.ps.q_o[o] > 0.0)
            .map(|o| self.ps.q_o[o] * kl_floored(cond.column(o).probs(), self.ps.q_x.probs(), ln))
            .sum()
    }

    /// `Σ_o Q(o) KL[Q̂(x | o) || p̃(x | o)]`.
    fn posterior_error(&self, ln: &mut LogClamp) -> f64 {
        let cond = self.ps.q_x_given_o();
        let target = self.biased.state_given_obs();
        (0..self.ps.q_o.len())
            .filter(|&o| self.ps.q_o[o] > 0.0)
            .map(|o| {
                self.ps.q_o[o]
                    * kl_floored(cond.column(o).probs(), target.column(o).probs(), ln)
            })
            .sum()
    }

    /// `E_{Q(x | π)} H[p(o | x)]`.
    fn likelihood_entropy(&self) -> f64 {
        (0..self.ps.q_x.len())
            .map(|x| self.ps.q_x[x] * entropy(&self.ps.likelihood.column(x)))
            .sum()
    }

    /// `KL[Q(o, x | π) || p̃(o, x)]`.
    fn joint_divergence(&self, ln: &mut LogClamp) -> f64 {
        kl_floored(self.ps.joint.data(), self.biased.joint().data(), ln)
    }
}

/// Expected free energy at one timestep.
pub fn efe_step(ps: &PredictiveState, pref: &PreferenceModel) -> Result<FunctionalReport> {
    let sh = Shared::new(ps, pref)?;
    let mut ln = LogClamp::new();
    let m = &sh.measure;
    let bj = &sh.biased;
    let q_x = ps.q_x.probs();
    let pj = bj.joint();
    let p_o_given_x = bj.obs_given_state();
    let p_x = bj.state_marginal();
    let p_x_given_o = bj.state_given_obs();
    let exact = &ps.exact_x_given_o;
    let lik = &ps.likelihood;

    let value = expect_ln(m, &mut ln, |_, x| q_x[x]) - expect_ln(m, &mut ln, |o, x| pj.get(o, x));

    let extrinsic = sh.neg_expected_log_preference(&mut ln);
    let epistemic = sh.information_gain(&mut ln);
    let post_err = sh.posterior_error(&mut ln);

    let entropy_term = -expect_ln(m, &mut ln, |_, x| q_x[x]);
    let energy = expect_ln(m, &mut ln, |o, x| pj.get(o, x));

    let accuracy = expect_ln(m, &mut ln, |o, x| p_o_given_x.get(o, x));
    let complexity = expect_ln(m, &mut ln, |_, x| q_x[x]) - expect_ln(m, &mut ln, |_, x| p_x[x]);

    let predicted_uncertainty = -expect_ln(m, &mut ln, |o, x| lik.get(o, x));
    let predicted_divergence = kl_floored(ps.q_o.probs(), bj.obs_marginal().probs(), &mut ln);
    let conditional_gap = expect_ln(m, &mut ln, |o, x| exact.get(x, o))
        - expect_ln(m, &mut ln, |o, x| p_x_given_o.get(x, o));
    let obs_information_gain =
        expect_ln(m, &mut ln, |o, x| lik.get(o, x)) - expect_ln(m, &mut ln, |o, _| ps.q_o[o]);

    // Risk and ambiguity through the state-side factorization of the same
    // biased joint, aggregated over the measure's state marginal.
    let mf = factorize(m);
    let mut risk = 0.0;
    let mut ambiguity = 0.0;
    for x in 0..q_x.len() {
        let w = mf.col_marginal[x];
        if w == 0.0 {
            continue;
        }
        risk += w * (ln.ln(q_x[x]) - ln.ln(p_x[x]));
        let mut surprise = 0.0;
        for o in 0..ps.q_o.len() {
            let c = mf.row_given_col.get(o, x);
            if c > 0.0 {
                surprise -= c * ln.ln(p_o_given_x.get(o, x));
            }
        }
        ambiguity += w * surprise;
    }
    let kl_control = kl_floored(q_x, p_x.probs(), &mut ln);

    let mut decompositions = vec![
        d(
            "extrinsic_epistemic",
            &[("extrinsic", 1.0), ("epistemic", -1.0), ("post_err", 1.0)],
        ),
        d("entropy_energy", &[("entropy", -1.0), ("energy", -1.0)]),
        d("accuracy_complexity", &[("accuracy", -1.0), ("complexity", 1.0)]),
        d(
            "observation_space",
            &[
                ("predicted_uncertainty", 1.0),
                ("predicted_divergence", 1.0),
                ("conditional_gap", 1.0),
            ],
        ),
        d(
            "observation_information_gain",
            &[
                ("extrinsic", 1.0),
                ("obs_information_gain", -1.0),
                ("conditional_gap", 1.0),
            ],
        ),
        d("risk_ambiguity", &[("risk", 1.0), ("ambiguity", 1.0)]),
    ];
    // The measure's state marginal is Q(x | π) only for the exact conditional.
    if ps.posterior_override.is_none() {
        decompositions.push(d("kl_control", &[("kl_control", 1.0), ("ambiguity", 1.0)]));
    }

    Ok(FunctionalReport {
        functional: Functional::Efe,
        value,
        terms: vec![
            ("extrinsic", extrinsic),
            ("epistemic", epistemic),
            ("post_err", post_err),
            ("entropy", entropy_term),
            ("energy", energy),
            ("accuracy", accuracy),
            ("complexity", complexity),
            ("predicted_uncertainty", predicted_uncertainty),
            ("predicted_divergence", predicted_divergence),
            ("conditional_gap", conditional_gap),
            ("obs_information_gain", obs_information_gain),
            ("risk", risk),
            ("ambiguity", ambiguity),
            ("kl_control", kl_control),
        ],
        decompositions,
        conditional: ps.conditional_source(),
        clamped: ln.clamped(),
    })
}

/// Free energy of the future at one timestep.
pub fn fef_step(ps: &PredictiveState, pref: &PreferenceModel) -> Result<FunctionalReport> {
    let sh = Shared::new(ps, pref)?;
    let mut ln = LogClamp::new();
    let m = &sh.measure;
    let bj = &sh.biased;
    let cond = ps.q_x_given_o();
    let q_x = ps.q_x.probs();
    let pj = bj.joint();
    let p_o_given_x = bj.obs_given_state();
    let p_x = bj.state_marginal();

    let value =
        expect_ln(m, &mut ln, |o, x| cond.get(x, o)) - expect_ln(m, &mut ln, |o, x| pj.get(o, x));

    let neg_expected_evidence = sh.neg_expected_log_preference(&mut ln);
    let post_err = sh.posterior_error(&mut ln);
    let information_gain = sh.information_gain(&mut ln);
    let accuracy = expect_ln(m, &mut ln, |o, x| p_o_given_x.get(o, x));
    // Residual between the variational prior and the biased state marginal;
    // zero exactly when p̃(x) = Q(x | π).
    let risk = expect_ln(m, &mut ln, |_, x| q_x[x]) - expect_ln(m, &mut ln, |_, x| p_x[x]);
    let entropy_term = -expect_ln(m, &mut ln, |o, x| cond.get(x, o));
    let energy = expect_ln(m, &mut ln, |o, x| pj.get(o, x));

    Ok(FunctionalReport {
        functional: Functional::Fef,
        value,
        terms: vec![
            ("neg_expected_evidence", neg_expected_evidence),
            ("post_err", post_err),
            ("accuracy", accuracy),
            ("complexity", information_gain),
            ("risk", risk),
            ("epistemic", information_gain),
            ("entropy", entropy_term),
            ("energy", energy),
        ],
        decompositions: vec![
            d(
                "evidence_posterior_error",
                &[("neg_expected_evidence", 1.0), ("post_err", 1.0)],
            ),
            d(
                "accuracy_complexity",
                &[("accuracy", -1.0), ("complexity", 1.0), ("risk", 1.0)],
            ),
            d("entropy_energy", &[("entropy", -1.0), ("energy", -1.0)]),
        ],
        conditional: ps.conditional_source(),
        clamped: ln.clamped(),
    })
}

/// Free energy of the expected future at one timestep.
pub fn feef_step(ps: &PredictiveState, pref: &PreferenceModel) -> Result<FunctionalReport> {
    let sh = Shared::new(ps, pref)?;
    let mut ln = LogClamp::new();
    let pref_o = sh.biased.obs_marginal().probs();

    let value = sh.joint_divergence(&mut ln);
    let extrinsic: f64 = (0..ps.q_x.len())
        .filter(|&x| ps.q_x[x] > 0.0)
        .map(|x| ps.q_x[x] * kl_floored(ps.likelihood.column(x).probs(), pref_o, &mut ln))
        .sum();
    let intrinsic = sh.information_gain(&mut ln);
    let post_err = sh.posterior_error(&mut ln);
    let likelihood_entropy = sh.likelihood_entropy();
    let neg_expected_evidence = sh.neg_expected_log_preference(&mut ln);

    let mut decompositions = vec![d(
        "extrinsic_via_likelihood_entropy",
        &[
            ("neg_expected_evidence", 1.0),
            ("likelihood_entropy", -1.0),
            ("intrinsic", -1.0),
            ("post_err", 1.0),
        ],
    )];
    // Intrinsic and post_err use the override, the value does not.
    if ps.posterior_override.is_none() {
        decompositions.insert(
            0,
            d(
                "extrinsic_intrinsic",
                &[("extrinsic", 1.0), ("intrinsic", -1.0), ("post_err", 1.0)],
            ),
        );
    } else {
        decompositions.clear();
    }

    Ok(FunctionalReport {
        functional: Functional::Feef,
        value,
        terms: vec![
            ("extrinsic", extrinsic),
            ("intrinsic", intrinsic),
            ("post_err", post_err),
            ("likelihood_entropy", likelihood_entropy),
            ("neg_expected_evidence", neg_expected_evidence),
        ],
        decompositions,
        conditional: ps.conditional_source(),
        clamped: ln.clamped(),
    })
}

/// Generalised free energy at one timestep.
pub fn gfe_step(ps: &PredictiveState, pref: &PreferenceModel) -> Result<FunctionalReport> {
    let sh = Shared::new(ps, pref)?;
    let mut ln = LogClamp::new();
    let j = &ps.joint;
    let pj = sh.biased.joint();
    let q_x = ps.q_x.probs();
    let q_o = ps.q_o.probs();

    let value = expect_ln(j, &mut ln, |o, _| q_o[o]) + expect_ln(j, &mut ln, |_, x| q_x[x])
        - expect_ln(j, &mut ln, |o, x| pj.get(o, x));

    let mutual_information: f64 = (0..q_x.len())
        .filter(|&x| q_x[x] > 0.0)
        .map(|x| q_x[x] * kl_divergence(&ps.likelihood.column(x), &ps.q_o).unwrap_or(f64::NAN))
        .sum();
    let joint_divergence = sh.joint_divergence(&mut ln);
    let predicted_divergence = kl_floored(q_o, sh.biased.obs_marginal().probs(), &mut ln);

    let exact = ps.without_override();
    let sh_exact = Shared::new(&exact, pref)?;
    let epistemic = sh_exact.information_gain(&mut ln);
    let post_err = sh_exact.posterior_error(&mut ln);

    Ok(FunctionalReport {
        functional: Functional::Gfe,
        value,
        terms: vec![
            ("mutual_information", mutual_information),
            ("joint_divergence", joint_divergence),
            ("predicted_divergence", predicted_divergence),
            ("epistemic", epistemic),
            ("post_err", post_err),
        ],
        decompositions: vec![
            d(
                "divergence_minus_mi",
                &[("joint_divergence", 1.0), ("mutual_information", -1.0)],
            ),
            d(
                "predicted_divergence_epistemic",
                &[
                    ("predicted_divergence", 1.0),
                    ("epistemic", -1.0),
                    ("post_err", 1.0),
                ],
            ),
        ],
        conditional: ConditionalSource::Exact,
        clamped: ln.clamped(),
    })
}

pub fn evaluate_step(
    functional: Functional,
    ps: &PredictiveState,
    pref: &PreferenceModel,
) -> Result<FunctionalReport> {
    match functional {
        Functional::Efe => efe_step(ps, pref),
        Functional::Fef => fef_step(ps, pref),
        Functional::Feef => feef_step(ps, pref),
        Functional::Gfe => gfe_step(ps, pref),
    }
}

/// Checks on the assumptions needed to turn the expected model evidence
/// into the EFE.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalisationReport {
    /// `E_{Q(o|π) Q(x|π)}[ln Q(x|π) - ln p̃(o, x)]`: the EFE integrand under
    /// the product of marginals, which is also what importance sampling on
    /// the variational prior yields.
    pub marginal_product_efe: f64,
    pub efe: f64,
    /// `marginal_product_efe - efe`.
    pub marginal_product_gap: f64,
    /// `-E_{Q(o|π)} ln Q(o|π)`, the entropy bound on the FEF.
    pub entropy_bound: f64,
    pub fef: f64,
    pub fef_above_entropy_bound: bool,
    pub marginal_product_above_entropy_bound: bool,
    /// `max |Q(o, x) - Q(o) Q(x)|`.
    pub max_independence_deviation: f64,
    /// `max_{o: Q(o) > 0, x} |Q̂(x | o) - Q(x | π)|`.
    pub max_posterior_prior_deviation: f64,
    pub independence_violated: bool,
    pub posterior_equals_prior_violated: bool,
    pub clamped: bool,
}

pub fn naturalisation_diagnostics(
    ps: &PredictiveState,
    pref: &PreferenceModel,
) -> Result<NaturalisationReport> {
    let efe = efe_step(ps, pref)?;
    let fef = fef_step(ps, pref)?;
    let bj = ps.biased_joint(pref)?;
    let mut ln = LogClamp::new();
    let (q_o, q_x) = (ps.q_o.probs(), ps.q_x.probs());

    let mut marginal_product_efe = 0.0;
    let mut max_independence_deviation: f64 = 0.0;
    for (o, &wo) in q_o.iter().enumerate() {
        for (x, &wx) in q_x.iter().enumerate() {
            let w = wo * wx;
            max_independence_deviation =
                max_independence_deviation.max((ps.joint.get(o, x) - w).abs());
            if w > 0.0 {
                marginal_product_efe += w * (wx.ln() - ln.ln(bj.joint().get(o, x)));
            }
        }
    }
    let cond = ps.q_x_given_o();
    let mut max_posterior_prior_deviation: f64 = 0.0;
    for (o, &wo) in q_o.iter().enumerate() {
        if wo > 0.0 {
            for (x, &wx) in q_x.iter().enumerate() {
                max_posterior_prior_deviation =
                    max_posterior_prior_deviation.max((cond.get(x, o) - wx).abs());
            }
        }
    }
    let entropy_bound = entropy(&ps.q_o);
    const SLACK: f64 = 1e-12;
    Ok(NaturalisationReport {
        marginal_product_efe,
        efe: efe.value,
        marginal_product_gap: marginal_product_efe - efe.value,
        entropy_bound,
        fef: fef.value,
        fef_above_entropy_bound: fef.value >= entropy_bound - SLACK,
        marginal_product_above_entropy_bound: marginal_product_efe >= entropy_bound - SLACK,
        max_independence_deviation,
        max_posterior_prior_deviation,
        independence_violated: max_independence_deviation > ASSUMPTION_TOL,
        posterior_equals_prior_violated: max_posterior_prior_deviation > ASSUMPTION_TOL,
        clamped: ln.clamped() || efe.clamped || fef.clamped,
    })
}
