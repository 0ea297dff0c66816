//! POMDP generative models, preference distributions, and biased joints.
//!
//! A [`GenerativeModel`] holds the likelihood `p(o | x)` as an `O × S`
//! column-stochastic table, one `S × S` transition table `p(x' | x, a)` per
//! action (rows index the next state), an initial state prior, and a
//! planning horizon. Preferences live beside the model in a
//! [`PreferenceModel`]; the two are combined into a [`BiasedJoint`] one
//! future timestep at a time.

use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::probability::{
    factorize, Categorical, Factorization, Joint2, StochasticMatrix, NORMALIZATION_TOL,
};

#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeModel {
    likelihood: StochasticMatrix,
    transitions: Vec<StochasticMatrix>,
    initial_prior: Categorical,
    horizon: usize,
}

impl GenerativeModel {
    /// Builds and validates a model.
    pub fn new(
        likelihood: StochasticMatrix,
        transitions: Vec<StochasticMatrix>,
        initial_prior: Categorical,
        horizon: usize,
    ) -> Result<Self> {
        let m = Self::new_unchecked(likelihood, transitions, initial_prior, horizon);
        let report = validate_model(&m);
        if report.is_valid() {
            Ok(m)
        } else {
            Err(Error::Validation(report))
        }
    }

    /// Skips validation; run [`validate_model`] before using the result.
    pub fn new_unchecked(
        likelihood: StochasticMatrix,
        transitions: Vec<StochasticMatrix>,
        initial_prior: Categorical,
        horizon: usize,
    ) -> Self {
        Self {
            likelihood,
            transitions,
            initial_prior,
            horizon,
        }
    }

    pub fn num_states(&self) -> usize {
        self.likelihood.cols()
    }

    pub fn num_obs(&self) -> usize {
        self.likelihood.rows()
    }

    pub fn num_actions(&self) -> usize {
        self.transitions.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn likelihood(&self) -> &StochasticMatrix {
        &self.likelihood
    }

    pub fn transitions(&self) -> &[StochasticMatrix] {
        &self.transitions
    }

    pub fn transition(&self, action: usize) -> Result<&StochasticMatrix> {
        self.transitions.get(action).ok_or(Error::IndexOutOfRange {
            what: "action",
            index: action,
            size: self.transitions.len(),
        })
    }

    pub fn initial_prior(&self) -> &Categorical {
        &self.initial_prior
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_initial_prior(mut self, prior: Categorical) -> Self {
        self.initial_prior = prior;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreferenceKind {
    /// `p̃(o)` over observations.
    Observations,
    /// `p̃(x)` over states.
    States,
}

impl PreferenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PreferenceKind::Observations => "observations",
            PreferenceKind::States => "states",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceModel {
    pub kind: PreferenceKind,
    pub dist: Categorical,
}

impl PreferenceModel {
    pub fn observations(dist: Categorical) -> Self {
        Self {
            kind: PreferenceKind::Observations,
            dist,
        }
    }

    pub fn states(dist: Categorical) -> Self {
        Self {
            kind: PreferenceKind::States,
            dist,
        }
    }
}

/// One timestep's biased joint `p̃(o, x)` with both of its factorizations
/// precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasedJoint {
    joint: Joint2,
    provenance: PreferenceKind,
    factors: Factorization,
}

impl BiasedJoint {
    pub fn joint(&self) -> &Joint2 {
        &self.joint
    }

    /// Which preference factorization built the joint.
    pub fn provenance(&self) -> PreferenceKind {
        self.provenance
    }

    /// `p̃(o)`.
    pub fn obs_marginal(&self) -> &Categorical {
        &self.factors.row_marginal
    }

    /// `p̃(x)`.
    pub fn state_marginal(&self) -> &Categorical {
        &self.factors.col_marginal
    }

    /// `p̃(o | x)`, `O × S`.
    pub fn obs_given_state(&self) -> &StochasticMatrix {
        &self.factors.row_given_col
    }

    /// `p̃(x | o)`, `S × O`.
    pub fn state_given_obs(&self) -> &StochasticMatrix {
        &self.factors.col_given_row
    }

    pub fn factorization(&self) -> &Factorization {
        &self.factors
    }
}

/// Builds `p̃(o, x)` for one timestep.
///
/// With observation preferences the joint is `p̃(o) · Q(x | o)`, where
/// `Q(x | o)` is the exact conditional of `predictive`; with state
/// preferences it is `p(o | x) · p̃(x)` using `likelihood`.
pub fn build_biased_joint(
    pref: &PreferenceModel,
    predictive: &Joint2,
    likelihood: &StochasticMatrix,
) -> Result<BiasedJoint> {
    let (num_obs, num_states) = (predictive.rows(), predictive.cols());
    if likelihood.rows() != num_obs {
        return Err(Error::DimensionMismatch {
            expected: num_obs,
            found: likelihood.rows(),
        });
    }
    if likelihood.cols() != num_states {
        return Err(Error::DimensionMismatch {
            expected: num_states,
            found: likelihood.cols(),
        });
    }
    let joint = match pref.kind {
        PreferenceKind::Observations => {
            if pref.dist.len() != num_obs {
                return Err(Error::DimensionMismatch {
                    expected: num_obs,
                    found: pref.dist.len(),
                });
            }
            let conditional = factorize(predictive).col_given_row;
            Joint2::from_row_marginal_and_conditional(&pref.dist, &conditional)?
        }
        PreferenceKind::States => {
            if pref.dist.len() != num_states {
                return Err(Error::DimensionMismatch {
                    expected: num_states,
                    found: pref.dist.len(),
                });
            }
            Joint2::from_conditional_and_col_marginal(likelihood, &pref.dist)?
        }
    };
    let factors = factorize(&joint);
    Ok(BiasedJoint {
        joint,
        provenance: pref.kind,
        factors,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    /// Column (or vector) total differs from one.
    Unnormalized { sum: f64, deviation: f64 },
    Negative { value: f64 },
    NonFinite,
    /// Declared and actual sizes disagree.
    Shape { expected: usize, found: usize },
    /// Scalar field out of its allowed range.
    OutOfRange { value: usize, bound: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Component name, e.g. `likelihood` or `transitions[1]`.
    pub component: String,
    pub row: Option<usize>,
    pub column: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.component)?;
        match (self.row, self.column) {
            (Some(r), Some(c)) => write!(f, " [row {r}, column {c}]")?,
            (None, Some(c)) => write!(f, " [column {c}]")?,
            (Some(r), None) => write!(f, " [index {r}]")?,
            (None, None) => {}
        }
        match &self.kind {
            ViolationKind::Unnormalized { sum, deviation } => {
                write!(f, ": sums to {sum} (deviation {deviation:e})")
            }
            ViolationKind::Negative { value } => write!(f, ": negative entry {value}"),
            ViolationKind::NonFinite => write!(f, ": non-finite entry"),
            ViolationKind::Shape { expected, found } => {
                write!(f, ": expected size {expected}, found {found}")
            }
            ViolationKind::OutOfRange { value, bound } => {
                write!(f, ": value {value} violates {bound}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

fn check_column(
    out: &mut Vec<Violation>,
    component: &str,
    column: Option<usize>,
    values: impl Iterator<Item = f64>,
    row_is_index: bool,
) {
    let mut sum = 0.0;
    let mut finite = true;
    for (i, v) in values.enumerate() {
        let (row, col) = if row_is_index {
            (Some(i), None)
        } else {
            (Some(i), column)
        };
        if !v.is_finite() {
            finite = false;
            out.push(Violation {
                component: component.into(),
                row,
                column: col,
                kind: ViolationKind::NonFinite,
            });
            continue;
        }
        if v < 0.0 {
            out.push(Violation {
                component: component.into(),
                row,
                column: col,
                kind: ViolationKind::Negative { value: v },
            });
        }
        sum += v;
    }
    let deviation = (sum - 1.0).abs();
    if finite && deviation > NORMALIZATION_TOL {
        out.push(Violation {
            component: component.into(),
            row: None,
            column,
            kind: ViolationKind::Unnormalized { sum, deviation },
        });
    }
}

fn check_matrix(out: &mut Vec<Violation>, component: &str, m: &StochasticMatrix) {
    for j in 0..m.cols() {
        check_column(out, component, Some(j), (0..m.rows()).map(|i| m.get(i, j)), false);
    }
}

/// Lists every violated model invariant; an empty report means valid.
pub fn validate_model(m: &GenerativeModel) -> ValidationReport {
    let mut out = Vec::new();
    let s = m.num_states();
    check_matrix(&mut out, "likelihood", &m.likelihood);
    if m.transitions.is_empty() {
        out.push(Violation {
            component: "num_actions".into(),
            row: None,
            column: None,
            kind: ViolationKind::OutOfRange {
                value: 0,
                bound: ">= 1".into(),
            },
        });
    }
    for (a, b) in m.transitions.iter().enumerate() {
        let name = format!("transitions[{a}]");
        if b.rows() != s || b.cols() != s {
            out.push(Violation {
                component: name,
                row: None,
                column: None,
                kind: ViolationKind::Shape {
                    expected: s * s,
                    found: b.rows() * b.cols(),
                },
            });
            continue;
        }
        check_matrix(&mut out, &name, b);
    }
    if m.initial_prior.len() != s {
        out.push(Violation {
            component: "initial_prior".into(),
            row: None,
            column: None,
            kind: ViolationKind::Shape {
                expected: s,
                found: m.initial_prior.len(),
            },
        });
    } else {
        check_column(
            &mut out,
            "initial_prior",
            None,
            m.initial_prior.probs().iter().copied(),
            true,
        );
    }
    if m.horizon == 0 {
        out.push(Violation {
            component: "horizon".into(),
            row: None,
            column: None,
            kind: ViolationKind::OutOfRange {
                value: 0,
                bound: ">= 1".into(),
            },
        });
    }
    ValidationReport { violations: out }
}

fn dirichlet_column(rng: &mut ChaCha8Rng, n: usize) -> Categorical {
    let weights: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    Categorical::from_weights(weights).expect("exponential variates are positive")
}

fn dirichlet_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> StochasticMatrix {
    let columns: Vec<Categorical> = (0..cols).map(|_| dirichlet_column(rng, rows)).collect();
    StochasticMatrix::from_columns(&columns).expect("columns share a length")
}

/// Random strictly positive model with observation preferences.
///
/// Every column (and the prior and preferences) is an independent flat
/// Dirichlet draw: normalized unit-exponential variates from a seeded
/// ChaCha8 stream.
pub fn random_model(
    num_states: usize,
    num_obs: usize,
    num_actions: usize,
    horizon: usize,
    seed: u64,
) -> (GenerativeModel, PreferenceModel) {
    assert!(num_states >= 1 && num_obs >= 1 && num_actions >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let likelihood = dirichlet_matrix(&mut rng, num_obs, num_states);
    let transitions = (0..num_actions)
        .map(|_| dirichlet_matrix(&mut rng, num_states, num_states))
        .collect();
    let prior = dirichlet_column(&mut rng, num_states);
    let pref = dirichlet_column(&mut rng, num_obs);
    let model = GenerativeModel::new_unchecked(likelihood, transitions, prior, horizon.max(1));
    (model, PreferenceModel::observations(pref))
}

/// Random categorical from the same flat Dirichlet as [`random_model`].
pub fn random_categorical(n: usize, seed: u64) -> Categorical {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dirichlet_column(&mut rng, n)
}

/// Optional human-readable names carried by fixture files.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Labels {
    #[serde(default)]
    pub states: Vec<String>,
    #[serde(default)]
    pub observations: Vec<String>,
    #[serde(default)]
    pub actions: Vec<String>,
}

/// Everything a model file can hold.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: GenerativeModel,
    pub preferences: Option<PreferenceModel>,
    /// Present in environment fixtures.
    pub true_state: Option<usize>,
    pub labels: Option<Labels>,
}

impl ModelFile {
    pub fn new(model: GenerativeModel) -> Self {
        Self {
            model,
            preferences: None,
            true_state: None,
            labels: None,
        }
    }

    pub fn with_preferences(mut self, pref: PreferenceModel) -> Self {
        self.preferences = Some(pref);
        self
    }

    /// Serializes to the TOML model format. Reals are written with 17
    /// significant digits, which round-trips every `f64` exactly.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let mut out = String::new();
        out.push_str(&format!("num_states = {}\n", m.num_states()));
        out.push_str(&format!("num_obs = {}\n", m.num_obs()));
        out.push_str(&format!("num_actions = {}\n", m.num_actions()));
        out.push_str(&format!("horizon = {}\n", m.horizon()));
        if let Some(t) = self.true_state {
            out.push_str(&format!("true_state = {t}\n"));
        }
        out.push_str("\n# p(o | x): one row per observation, one column per state\n");
        out.push_str("likelihood = [\n");
        for i in 0..m.num_obs() {
            out.push_str(&format!("  {},\n", fmt_row(m.likelihood.row(i))));
        }
        out.push_str("]\n\n# p(x' | x, a): one block per action; rows index x', columns index x\n");
        out.push_str("transitions = [\n");
        for b in &m.transitions {
            out.push_str("  [\n");
            for i in 0..b.rows() {
                out.push_str(&format!("    {},\n", fmt_row(b.row(i))));
            }
            out.push_str("  ],\n");
        }
        out.push_str("]\n\n");
        out.push_str(&format!(
            "initial_prior = {}\n",
            fmt_row(m.initial_prior.probs())
        ));
        if let Some(p) = &self.preferences {
            out.push_str("\n[preferences]\n");
            out.push_str(&format!("kind = \"{}\"\n", p.kind.as_str()));
            out.push_str(&format!("dist = {}\n", fmt_row(p.dist.probs())));
        }
        if let Some(l) = &self.labels {
            out.push_str("\n[labels]\n");
            out.push_str(&format!("states = {}\n", fmt_strings(&l.states)));
            out.push_str(&format!("observations = {}\n", fmt_strings(&l.observations)));
            out.push_str(&format!("actions = {}\n", fmt_strings(&l.actions)));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::Io(e.to_string()))
    }
}

fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_row(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|&x| fmt_real(x)).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_strings(xs: &[String]) -> String {
    let parts: Vec<String> = xs.iter().map(|s| format!("{s:?}")).collect();
    format!("[{}]", parts.join(", "))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPreferences {
    kind: String,
    dist: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    num_states: usize,
    num_obs: usize,
    num_actions: usize,
    horizon: usize,
    likelihood: Vec<Vec<f64>>,
    transitions: Vec<Vec<Vec<f64>>>,
    initial_prior: Vec<f64>,
    preferences: Option<RawPreferences>,
    true_state: Option<usize>,
    labels: Option<Labels>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn backticked(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

fn shape_violation(component: &str, expected: usize, found: usize) -> Violation {
    Violation {
        component: component.into(),
        row: None,
        column: None,
        kind: ViolationKind::Shape { expected, found },
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], cols: usize) -> Vec<f64> {
    rows.iter().flat_map(|r| r.iter().copied()).take(rows.len() * cols).collect()
}

/// Parses the TOML model format.
pub fn parse_model(text: &str) -> Result<ModelFile> {
    let raw: RawModel = toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        Error::Parse {
            line: e.span().map(|s| line_of(text, s.start)),
            field: backticked(&message),
            message,
        }
    })?;

    let (s, o, a) = (raw.num_states, raw.num_obs, raw.num_actions);
    let mut shape = Vec::new();
    if raw.likelihood.len() != o {
        shape.push(shape_violation("likelihood rows", o, raw.likelihood.len()));
    }
    for (i, r) in raw.likelihood.iter().enumerate() {
        if r.len() != s {
            shape.push(shape_violation(&format!("likelihood row {i}"), s, r.len()));
        }
    }
    if raw.transitions.len() != a {
        shape.push(shape_violation("transitions blocks", a, raw.transitions.len()));
    }
    for (k, block) in raw.transitions.iter().enumerate() {
        if block.len() != s {
            shape.push(shape_violation(&format!("transitions[{k}] rows"), s, block.len()));
        }
        for (i, r) in block.iter().enumerate() {
            if r.len() != s {
                shape.push(shape_violation(
                    &format!("transitions[{k}] row {i}"),
                    s,
                    r.len(),
                ));
            }
        }
    }
    if raw.initial_prior.len() != s {
        shape.push(shape_violation("initial_prior", s, raw.initial_prior.len()));
    }
    if s == 0 || o == 0 || a == 0 {
        shape.push(Violation {
            component: "dimensions".into(),
            row: None,
            column: None,
            kind: ViolationKind::OutOfRange {
                value: 0,
                bound: "num_states, num_obs, num_actions >= 1".into(),
            },
        });
    }
    if !shape.is_empty() {
        return Err(Error::Validation(ValidationReport { violations: shape }));
    }

    let likelihood = StochasticMatrix::new_unchecked(o, s, matrix_from_rows(&raw.likelihood, s))?;
    let transitions = raw
        .transitions
        .iter()
        .map(|b| StochasticMatrix::new_unchecked(s, s, matrix_from_rows(b, s)))
        .collect::<Result<Vec<_>>>()?;
    let prior = Categorical::new_unchecked(raw.initial_prior);
    let model = GenerativeModel::new_unchecked(likelihood, transitions, prior, raw.horizon);
    let mut report = validate_model(&model);

    let preferences = match raw.preferences {
        None => None,
        Some(p) => {
            let kind = match p.kind.as_str() {
                "observations" => PreferenceKind::Observations,
                "states" => PreferenceKind::States,
                other => {
                    return Err(Error::Parse {
                        line: None,
                        field: Some("preferences.kind".into()),
                        message: format!(
                            "expected \"observations\" or \"states\", found \"{other}\""
                        ),
                    })
                }
            };
            let expected = match kind {
                PreferenceKind::Observations => o,
                PreferenceKind::States => s,
            };
            if p.dist.len() != expected {
                report
                    .violations
                    .push(shape_violation("preferences.dist", expected, p.dist.len()));
            } else {
                check_column(
                    &mut report.violations,
                    "preferences.dist",
                    None,
                    p.dist.iter().copied(),
                    true,
                );
            }
            Some(PreferenceModel {
                kind,
                dist: Categorical::new_unchecked(p.dist),
            })
        }
    };
    if let Some(t) = raw.true_state {
        if t >= s {
            report.violations.push(Violation {
                component: "true_state".into(),
                row: None,
                column: None,
                kind: ViolationKind::OutOfRange {
                    value: t,
                    bound: format!("< num_states ({s})"),
                },
            });
        }
    }
    if !report.is_valid() {
        return Err(Error::Validation(report));
    }
    Ok(ModelFile {
        model,
        preferences,
        true_state: raw.true_state,
        labels: raw.labels,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_model() -> GenerativeModel {
        GenerativeModel::new_unchecked(
            StochasticMatrix::identity(2),
            vec![StochasticMatrix::identity(2)],
            Categorical::uniform(2),
            1,
        )
    }

    #[test]
    fn valid_model_has_empty_report() {
        assert!(validate_model(&identity_model()).is_valid());
    }

    #[test]
    fn short_column_is_reported_with_deviation() {
        let l = StochasticMatrix::new_unchecked(2, 2, vec![0.5, 0.0, 0.4, 1.0]).unwrap();
        let m = GenerativeModel::new_unchecked(
            l,
            vec![StochasticMatrix::identity(2)],
            Categorical::uniform(2),
            1,
        );
        let r = validate_model(&m);
        assert_eq!(r.violations.len(), 1);
        let v = &r.violations[0];
        assert_eq!(v.component, "likelihood");
        assert_eq!(v.column, Some(0));
        match v.kind {
            ViolationKind::Unnormalized { deviation, .. } => {
                assert!((deviation - 0.1).abs() < 1e-12)
            }
            ref k => panic!("unexpected {k:?}"),
        }
    }

    #[test]
    fn negative_transition_entry_is_located() {
        let b = StochasticMatrix::new_unchecked(2, 2, vec![1.1, 0.0, -0.1, 1.0]).unwrap();
        let m = GenerativeModel::new_unchecked(
            StochasticMatrix::identity(2),
            vec![StochasticMatrix::identity(2), b],
            Categorical::uniform(2),
            1,
        );
        let r = validate_model(&m);
        assert_eq!(r.violations.len(), 1);
        let v = &r.violations[0];
        assert_eq!(v.component, "transitions[1]");
        assert_eq!((v.row, v.column), (Some(1), Some(0)));
        assert_eq!(v.kind, ViolationKind::Negative { value: -0.1 });
    }

    #[test]
    fn random_model_is_deterministic_and_valid() {
        let (a, pa) = random_model(2, 2, 2, 2, 7);
        let (b, pb) = random_model(2, 2, 2, 2, 7);
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        assert!(validate_model(&a).is_valid());
        let (c, _) = random_model(2, 2, 2, 2, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn missing_field_names_field() {
        let text = "num_states = 1\nnum_obs = 1\nnum_actions = 1\nhorizon = 1\n\
                    likelihood = [[1.0]]\ninitial_prior = [1.0]\n";
        match parse_model(text) {
            Err(Error::Parse { field, .. }) => assert_eq!(field.as_deref(), Some("transitions")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unnormalized_prior_is_a_validation_error() {
        let text = "num_states = 2\nnum_obs = 1\nnum_actions = 1\nhorizon = 1\n\
                    likelihood = [[1.0, 1.0]]\ntransitions = [[[1.0, 0.0], [0.0, 1.0]]]\n\
                    initial_prior = [0.7, 0.7]\n";
        match parse_model(text) {
            Err(Error::Validation(r)) => {
                assert_eq!(r.violations.len(), 1);
                assert_eq!(r.violations[0].component, "initial_prior");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = "num_states = 1\nnum_obs = = 1\n";
        match parse_model(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, Some(2)),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let (m, p) = random_model(3, 4, 2, 3, 11);
        let file = ModelFile::new(m).with_preferences(p);
        let back = parse_model(&file.to_text()).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn state_preference_joint_keeps_likelihood() {
        let (m, _) = random_model(3, 2, 1, 1, 3);
        let pred = Joint2::from_conditional_and_col_marginal(m.likelihood(), m.initial_prior())
            .unwrap();
        let pref = PreferenceModel::states(Categorical::new(vec![0.2, 0.3, 0.5]).unwrap());
        let bj = build_biased_joint(&pref, &pred, m.likelihood()).unwrap();
        assert_eq!(bj.provenance(), PreferenceKind::States);
        for (a, b) in bj.state_marginal().probs().iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in bj.obs_given_state().data().iter().zip(m.likelihood().data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn biased_joint_dimension_checks() {
        let (m, _) = random_model(3, 2, 1, 1, 3);
        let pred = Joint2::from_conditional_and_col_marginal(m.likelihood(), m.initial_prior())
            .unwrap();
        let bad = PreferenceModel::observations(Categorical::uniform(3));
        assert!(matches!(
            build_biased_joint(&bad, &pred, m.likelihood()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
