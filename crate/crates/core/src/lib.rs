//! Prescriptive process monitoring with mined MDPs.
//!
//! The pipeline turns an event log into an explicit Markov decision process
//! and learns which next activity maximizes a trace-level KPI:
//!
//! 1. [`eventlog`]: parse, enrich with the KPI reward, split.
//! 2. [`encoding`] and [`clustering`]: encode every prefix and cluster the
//!    encodings with k-means.
//! 3. [`mdp`]: replay the traces into a graph over (last activity, cluster)
//!    states.
//! 4. [`rl`]: Monte Carlo policy iteration with occurrence-scaled q-values,
//!    plus tabular Q-learning.
//! 5. [`recommender`]: map an ongoing prefix to a state and recommend.
//! 6. [`simgen`] and [`evaluation`]: synthetic loan-process logs, policy
//!    simulation and test-log analyses.

pub mod clustering;
pub mod encoding;
pub mod evaluation;
pub mod eventlog;
pub mod mdp;
pub mod pipeline;
pub mod recommender;
pub mod rl;
pub mod simgen;

pub use clustering::{KMeansConfig, KMeansModel};
pub use encoding::{NormalizationStats, PrefixVector};
pub use evaluation::{EvalReport, PairwiseTest};
pub use eventlog::{Event, EventLog, KpiSpec, Owner, SplitOptions, Trace};
pub use mdp::{BuildOptions, ClusterTag, Edge, Mdp, State};
pub use recommender::{Recommendation, Recommender};
pub use rl::{Policy, QTable, ScalingFn, ScalingSpec, TrainConfig};
pub use simgen::{ProcessModel, SimEntry, SimReport};
