//! Inputs shared by the benchmarks.

use prescriptor::encoding::{encode_log, fit_stats, NormalizationStats};
use prescriptor::eventlog::{split, EventLog, SplitOptions};
use prescriptor::pipeline::{mine, Mined};
use prescriptor::simgen::{generate_log, ProcessModel};
use prescriptor::{BuildOptions, KMeansConfig, PrefixVector};

/// Training half of a generated log.
pub fn train_log(preset: &str, n_traces: usize, seed: u64) -> EventLog {
    let model = ProcessModel::preset(preset).expect("known preset");
    let log = generate_log(&model, n_traces, seed).expect("valid preset");
    let opts = SplitOptions {
        train_fraction: 0.8,
        seed,
        exclude_undecidable_test: false,
    };
    split(&log, &opts).expect("both sides non-empty").0
}

pub fn encoded(log: &EventLog) -> (NormalizationStats, Vec<PrefixVector>) {
    let stats = fit_stats(log).expect("non-empty log");
    let vectors = encode_log(log, &stats).expect("log encodes");
    (stats, vectors)
}

pub fn mined(log: &EventLog, k: usize) -> Mined {
    let cfg = KMeansConfig {
        k,
        ..KMeansConfig::default()
    };
    mine(log, &cfg, &BuildOptions::default()).expect("mining succeeds")
}
