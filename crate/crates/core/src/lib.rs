//! Checks whether a token-level simulator reproduces, for a given observer,
//! the causal behaviour the observer expects of a referent system.
//!
//! The observer holds a finite structural causal model of the referent,
//! distributions over contexts, interventions and prompt encodings, and a
//! map τ from simulator outputs to referent states. A simulator is a
//! conditional next-token table plus a sampler. The checks compare the
//! referent-side outcome distribution with the τ-image of the simulator's
//! output distribution, exactly or through seeded Monte Carlo.
//!
//! ```
//! use casim_core::{scenario::builtin, verify::{check_exact, Verdict}};
//!
//! let doc = builtin("example4").unwrap();
//! let report = check_exact(&doc.observer, &doc.simulator).unwrap();
//! assert_eq!(report.verdict, Verdict::Simulates);
//! ```

pub mod error;
pub mod json;
pub mod observer;
pub mod prob;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod scm;
pub mod token;
pub mod verify;

pub use error::{Error, Result};
pub use observer::{tau_push, Observer, Outcome, TauEntry, TauMap};
pub use prob::Distribution;
pub use scenario::{builtin, load_scenario, save_scenario, ScenarioDoc, ScenarioError};
pub use scm::{Assignment, CausalModel, Context, EndogenousSetting, FiniteRange, Intervention, StructuralEquation};
pub use token::{ConditionalTable, PaddedOutput, Prompt, Sampler, TokenSimulator, Vocabulary};
pub use verify::{CheckSpec, DistanceKind, McConfig, Mode, Verdict, VerificationReport};
