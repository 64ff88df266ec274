//! Preprocessing phase in one call: encode, cluster, build the MDP.

use crate::clustering::{fit, ClusterError, KMeansConfig, KMeansModel};
use crate::encoding::{encode_log, fit_stats, EncodingError, NormalizationStats};
use crate::eventlog::EventLog;
use crate::mdp::{build, BuildOptions, Mdp, MdpError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Artifacts mined from an enriched training log.
#[derive(Clone, Debug)]
pub struct Mined {
    pub stats: NormalizationStats,
    pub kmeans: KMeansModel,
    pub mdp: Mdp,
}

pub fn mine(train: &EventLog, kmeans: &KMeansConfig, opts: &BuildOptions) -> Result<Mined, PipelineError> {
    let stats = fit_stats(train)?;
    let vectors = encode_log(train, &stats)?;
    let mut model = fit(&vectors, kmeans)?;
    model.alphabet_hash = stats.alphabet_hash();
    let mdp = build(train, &model, &stats, opts)?;
    Ok(Mined {
        stats,
        kmeans: model,
        mdp,
    })
}
