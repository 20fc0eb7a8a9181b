//! Monte-Carlo simulator of the two-slit view of retrieval: a document
//! source, a relevance slit, and a term-X detector. Runs in three modes
//! (keep relevant, keep non-relevant, no filter) and produces counts from
//! which the statistics fed to [`crate::probcheck`] are estimated.
//!
//! Non-classicality is injected through an additive interference term `δ`
//! applied only in no-filter mode: the directly measured `P(X)` deviates
//! from the law-of-total-probability blend by exactly `δ` in expectation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::probcheck::MelucciStats;

const MAX_EMISSIONS: u64 = 100_000_000;

#[derive(Debug, Error)]
pub enum MelucciError {
    #[error("invalid source config: {0}")]
    Config(String),
    #[error("filter mode {mode:?} failed to pass {wanted} documents in {emitted} emissions")]
    Starvation {
        mode: SlitMode,
        wanted: u64,
        emitted: u64,
    },
    #[error("estimate_stats needs one count from each of the three modes")]
    ModeMismatch,
    #[error("zero passed documents in mode {0:?}")]
    ZeroCount(SlitMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlitMode {
    FilterR,
    FilterNotR,
    NoFilter,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceConfig {
    /// Probability that an emitted document is relevant.
    pub p_r: f64,
    pub p_x_given_r: f64,
    pub p_x_given_not_r: f64,
    /// Additive deviation from the law of total probability, no-filter mode.
    pub delta: f64,
    /// Documents analyzed per mode (emission continues until this many pass).
    pub num_docs: u64,
    pub seed: u64,
}

impl SourceConfig {
    /// The no-filter detection probability: the LTP blend plus δ.
    pub fn blended(&self) -> f64 {
        self.p_x_given_r * self.p_r + self.p_x_given_not_r * (1.0 - self.p_r) + self.delta
    }

    pub fn validate(&self) -> Result<(), MelucciError> {
        for (name, v) in [
            ("p_r", self.p_r),
            ("p_x_given_r", self.p_x_given_r),
            ("p_x_given_not_r", self.p_x_given_not_r),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MelucciError::Config(format!("{name} = {v} outside [0,1]")));
            }
        }
        let b = self.blended();
        if !(0.0..=1.0).contains(&b) {
            return Err(MelucciError::Config(format!(
                "blended no-filter probability {b} outside [0,1]"
            )));
        }
        if self.num_docs == 0 {
            return Err(MelucciError::Config("num_docs must be positive".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentCounts {
    pub mode: SlitMode,
    pub emitted: u64,
    pub passed_slit: u64,
    pub detected_x: u64,
}

/// Run one slit experiment: emit documents until `num_docs` pass the slit,
/// counting detector hits among the passed ones. Deterministic for a fixed
/// `(config, mode)`; each mode draws from its own RNG stream.
pub fn run_experiment(cfg: &SourceConfig, mode: SlitMode) -> Result<ExperimentCounts, MelucciError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(match mode {
        SlitMode::FilterR => 1,
        SlitMode::FilterNotR => 2,
        SlitMode::NoFilter => 3,
    });
    let mut emitted = 0u64;
    let mut passed = 0u64;
    let mut detected = 0u64;
    let no_filter_p = cfg.blended();
    while passed < cfg.num_docs {
        if emitted >= MAX_EMISSIONS {
            return Err(MelucciError::Starvation {
                mode,
                wanted: cfg.num_docs,
                emitted,
            });
        }
        emitted += 1;
        match mode {
            SlitMode::FilterR | SlitMode::FilterNotR => {
                let relevant = rng.gen_bool(cfg.p_r);
                let keep = if mode == SlitMode::FilterR { relevant } else { !relevant };
                if keep {
                    passed += 1;
                    let p = if mode == SlitMode::FilterR {
                        cfg.p_x_given_r
                    } else {
                        cfg.p_x_given_not_r
                    };
                    if rng.gen_bool(p) {
                        detected += 1;
                    }
                }
            }
            SlitMode::NoFilter => {
                passed += 1;
                if rng.gen_bool(no_filter_p) {
                    detected += 1;
                }
            }
        }
    }
    Ok(ExperimentCounts {
        mode,
        emitted,
        passed_slit: passed,
        detected_x: detected,
    })
}

/// Binomial standard errors paired with [`MelucciStats`] estimates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StatsErrors {
    pub p_x: f64,
    pub p_x_given_r: f64,
    pub p_x_given_not_r: f64,
    pub p_r: f64,
}

fn binom_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Relative-frequency estimates from one run of each mode. `P(R)` comes from
/// the pass rate of the filter-R run.
pub fn estimate_stats(
    c_r: &ExperimentCounts,
    c_not_r: &ExperimentCounts,
    c_none: &ExperimentCounts,
) -> Result<(MelucciStats, StatsErrors), MelucciError> {
    if c_r.mode != SlitMode::FilterR
        || c_not_r.mode != SlitMode::FilterNotR
        || c_none.mode != SlitMode::NoFilter
    {
        return Err(MelucciError::ModeMismatch);
    }
    for c in [c_r, c_not_r, c_none] {
        if c.passed_slit == 0 {
            return Err(MelucciError::ZeroCount(c.mode));
        }
    }
    let p_x_given_r = c_r.detected_x as f64 / c_r.passed_slit as f64;
    let p_x_given_not_r = c_not_r.detected_x as f64 / c_not_r.passed_slit as f64;
    let p_x = c_none.detected_x as f64 / c_none.passed_slit as f64;
    let p_r = c_r.passed_slit as f64 / c_r.emitted as f64;
    let stats = MelucciStats {
        p_x,
        p_x_given_r,
        p_x_given_not_r,
        p_r,
    };
    let errors = StatsErrors {
        p_x: binom_se(p_x, c_none.passed_slit),
        p_x_given_r: binom_se(p_x_given_r, c_r.passed_slit),
        p_x_given_not_r: binom_se(p_x_given_not_r, c_not_r.passed_slit),
        p_r: binom_se(p_r, c_r.emitted),
    };
    Ok((stats, errors))
}

/// Accardi invariant estimate with a delta-method standard error from the
/// binomial errors of its three inputs.
pub fn invariant_with_se(
    stats: &MelucciStats,
    errors: &StatsErrors,
) -> Result<(f64, f64), crate::probcheck::ProbError> {
    let a = crate::probcheck::accardi_invariant(stats)?;
    let den = stats.p_x_given_r - stats.p_x_given_not_r;
    let d_px = 1.0 / den;
    let d_pxr = -(stats.p_x - stats.p_x_given_not_r) / (den * den);
    let d_pxnr = (stats.p_x - stats.p_x_given_r) / (den * den);
    let var = (d_px * errors.p_x).powi(2)
        + (d_pxr * errors.p_x_given_r).powi(2)
        + (d_pxnr * errors.p_x_given_not_r).powi(2);
    Ok((a, var.sqrt()))
}

/// Run all three modes and estimate the statistics in one call.
pub fn run_all(cfg: &SourceConfig) -> Result<(MelucciStats, StatsErrors), MelucciError> {
    let c_r = run_experiment(cfg, SlitMode::FilterR)?;
    let c_not_r = run_experiment(cfg, SlitMode::FilterNotR)?;
    let c_none = run_experiment(cfg, SlitMode::NoFilter)?;
    estimate_stats(&c_r, &c_not_r, &c_none)
}
