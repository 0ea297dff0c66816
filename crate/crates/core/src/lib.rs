//! Exact free-energy functionals for small discrete POMDPs.
//!
//! The crate scores action policies under four functionals (EFE, FEF, FEEF
//! and GFE), turns the scores into a policy posterior, and runs agents in
//! closed loop. Every expectation is a finite sum. The [`oracle`] module
//! recomputes the same quantities from raw sums and checks the identities
//! that relate them.
//!
//! ```
//! use efelab::envs::cue_task_factory;
//! use efelab::functionals::Functional;
//! use efelab::planning::{plan, PlanConfig};
//!
//! let (m, pref, _) = cue_task_factory();
//! let p = plan(&PlanConfig::new(Functional::Efe, 1), m.initial_prior(), &m, &pref).unwrap();
//! assert!(p.posterior[1] > p.posterior[0]);
//! ```

pub mod envs;
pub mod error;
pub mod functionals;
pub mod inference;
pub mod model;
pub mod oracle;
pub mod planning;
pub mod probability;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/probability.md")]
    mod probability {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/functionals.md")]
    mod functionals {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../book/src/tasks.md")]
    mod tasks {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
