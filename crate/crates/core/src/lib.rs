//! Approximate minimisation of labelled Markov chains.
//!
//! Two algorithms shrink a chain by merging states that are almost
//! bisimilar: [`local::minimise_local`] merges one closest pair at a time,
//! [`refine::minimise_apr`] clusters greedily around representatives. Every
//! step is backed by a [`witness::EpsQuotientCertificate`] that can be
//! checked independently with [`witness::verify_epsilon_quotient`].

pub mod bench;
pub mod bisim;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod lmc;
pub mod local;
mod lp;
mod maxflow;
pub mod oracle;
pub mod perturb;
pub mod refine;
pub mod trace;
pub mod witness;

pub use bisim::{bisimulation_partition, exact_quotient};
pub use error::{Error, Result};
pub use lmc::{ChainBuilder, Label, LabelledMarkovChain, Partition, QuotientResult, SparseDistribution};
pub use local::minimise_local;
pub use refine::{minimise_apr, OrderPolicy, RefinementConfig};
pub use trace::{Algorithm, MinimisationTrace};
pub use witness::{verify_epsilon_quotient, EpsQuotientCertificate, PerturbationWitness, Verdict};
