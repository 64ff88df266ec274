use std::fmt;

use serde::{Deserialize, Serialize};

use crate::mdp::Mdp;

/// Occurrence-based weight h(n) ∈ [0, 1] applied to q-values at selection
/// time, so rarely observed actions need proportionally more value to win.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalingFn {
    /// h ≡ 1: plain q-values.
    H0,
    /// Min-max normalized occurrence count over the MDP's agent pairs.
    Linear { n_min: u64, n_max: u64 },
    /// 0 up to and including `n_t` occurrences, 1 above.
    Step { n_t: u64 },
    /// 1 − 2e^(−n/λ) / (1 + e^(−n/λ)).
    Smooth { lambda: f64 },
    /// Constant weight; useful to check argmax invariance.
    Constant { value: f64 },
}

/// Scaling as configured, before the linear range is known.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalingSpec {
    H0,
    Linear,
    Step {
        #[serde(default = "default_n_t")]
        n_t: u64,
    },
    Smooth {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
}

fn default_n_t() -> u64 {
    50
}

fn default_lambda() -> f64 {
    50.0
}

impl ScalingSpec {
    /// The four variants trained by default: h0, linear, step(50), smooth(50).
    pub fn standard_set() -> Vec<ScalingSpec> {
        vec![
            ScalingSpec::H0,
            ScalingSpec::Linear,
            ScalingSpec::Step { n_t: default_n_t() },
            ScalingSpec::Smooth {
                lambda: default_lambda(),
            },
        ]
    }

    /// Freezes data-dependent parameters against `mdp`.
    pub fn fit(&self, mdp: &Mdp) -> ScalingFn {
        match *self {
            ScalingSpec::H0 => ScalingFn::H0,
            ScalingSpec::Linear => {
                let (lo, hi) = mdp
                    .agent_occurrences()
                    .fold((u64::MAX, 0), |(lo, hi), (_, _, n)| (lo.min(n), hi.max(n)));
                if lo > hi {
                    ScalingFn::Linear { n_min: 0, n_max: 0 }
                } else {
                    ScalingFn::Linear { n_min: lo, n_max: hi }
                }
            }
            ScalingSpec::Step { n_t } => ScalingFn::Step { n_t },
            ScalingSpec::Smooth { lambda } => ScalingFn::Smooth { lambda },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScalingSpec::H0 => "h0",
            ScalingSpec::Linear => "lin",
            ScalingSpec::Step { .. } => "step",
            ScalingSpec::Smooth { .. } => "smooth",
        }
    }
}

impl ScalingFn {
    /// h(n). A linear scaling with `n_max == n_min` is degenerate and yields 1.
    pub fn h_value(&self, n: u64) -> f64 {
        match *self {
            ScalingFn::H0 => 1.0,
            ScalingFn::Linear { n_min, n_max } => {
                if n_max <= n_min {
                    1.0
                } else {
                    ((n as f64 - n_min as f64) / (n_max - n_min) as f64).clamp(0.0, 1.0)
                }
            }
            ScalingFn::Step { n_t } => {
                if n <= n_t {
                    0.0
                } else {
                    1.0
                }
            }
            ScalingFn::Smooth { lambda } => {
                let e = (-(n as f64) / lambda).exp();
                1.0 - 2.0 * e / (1.0 + e)
            }
            ScalingFn::Constant { value } => value,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScalingFn::H0 => "h0",
            ScalingFn::Linear { .. } => "lin",
            ScalingFn::Step { .. } => "step",
            ScalingFn::Smooth { .. } => "smooth",
            ScalingFn::Constant { .. } => "const",
        }
    }
}

impl fmt::Display for ScalingFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalingFn::H0 => f.write_str("h0"),
            ScalingFn::Linear { n_min, n_max } => write!(f, "lin[{n_min},{n_max}]"),
            ScalingFn::Step { n_t } => write!(f, "step(n_t={n_t})"),
            ScalingFn::Smooth { lambda } => write!(f, "smooth(lambda={lambda})"),
            ScalingFn::Constant { value } => write!(f, "const({value})"),
        }
    }
}

/// q̃ = q · h(n).
pub fn scaled_q(q: f64, scaling: &ScalingFn, n: u64) -> f64 {
    q * scaling.h_value(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_is_zero_at_zero() {
        assert_eq!(ScalingFn::Smooth { lambda: 50.0 }.h_value(0), 0.0);
    }

    #[test]
    fn step_threshold_is_inclusive() {
        let s = ScalingFn::Step { n_t: 50 };
        assert_eq!(s.h_value(50), 0.0);
        assert_eq!(s.h_value(51), 1.0);
    }

    #[test]
    fn linear_endpoints_and_degenerate_range() {
        let l = ScalingFn::Linear { n_min: 2, n_max: 100 };
        assert_eq!(l.h_value(100), 1.0);
        assert_eq!(l.h_value(2), 0.0);
        assert_eq!(ScalingFn::Linear { n_min: 7, n_max: 7 }.h_value(7), 1.0);
    }

    #[test]
    fn scaled_q_examples() {
        assert_eq!(scaled_q(-3.5, &ScalingFn::H0, 1), -3.5);
        assert_eq!(scaled_q(100.0, &ScalingFn::Step { n_t: 50 }, 3), 0.0);
        let far = scaled_q(-40.0, &ScalingFn::Smooth { lambda: 50.0 }, 1_000_000);
        assert!((far + 40.0).abs() < 1e-9);
    }

    #[test]
    fn specs_round_trip_through_json() {
        let json = serde_json::to_string(&ScalingSpec::standard_set()).unwrap();
        assert_eq!(
            json,
            r#"[{"kind":"h0"},{"kind":"linear"},{"kind":"step","n_t":50},{"kind":"smooth","lambda":50.0}]"#
        );
        let back: Vec<ScalingSpec> = serde_json::from_str(r#"[{"kind":"step"}]"#).unwrap();
        assert_eq!(back, vec![ScalingSpec::Step { n_t: 50 }]);
    }
}
