//! Bundled reference scenario: three hypotheses observed through an
//! optimistic and a pessimistic Gaussian source, three Assumption-4 experts
//! with loss rate vectors (0,0,0), (0,0,0.2) and (0,0.05,0), and a final
//! agent sharing both sources. Used by the `reference-study` CLI command and
//! as the main cross-validation fixture.

use crate::scenario::{Agent0, Expert, LossSpec, Scenario, SourceModel};

/// Loss choices for the final agent in the reference scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum C0Variant {
    /// Same rates as expert 1: (0, 0, 0) — the 0-1 loss.
    C1,
    /// Same rates as expert 2: (0, 0, 0.2).
    C2,
    /// Same rates as expert 3: (0, 0.05, 0); the default in the study.
    C3,
    /// Arbitrary per-hypothesis rates.
    Custom(Vec<f64>),
}

impl C0Variant {
    pub fn rates(&self) -> Vec<f64> {
        match self {
            C0Variant::C1 => vec![0.0, 0.0, 0.0],
            C0Variant::C2 => vec![0.0, 0.0, 0.2],
            C0Variant::C3 => vec![0.0, 0.05, 0.0],
            C0Variant::Custom(r) => r.clone(),
        }
    }
}

/// Expert loss rate vectors of the reference scenario.
pub const EXPERT_RATES: [[f64; 3]; 3] = [[0.0, 0.0, 0.0], [0.0, 0.0, 0.2], [0.0, 0.05, 0.0]];

/// Build the reference scenario for a given mid-hypothesis mean offset
/// `delta` and source variance `sigma2`.
pub fn reference_scenario(delta: f64, sigma2: f64, c0: C0Variant) -> Scenario {
    let sources = vec![
        SourceModel::Gaussian {
            means: vec![-1.0, delta, 1.0],
            variance: sigma2,
        },
        SourceModel::Gaussian {
            means: vec![-1.0, -delta, 1.0],
            variance: sigma2,
        },
    ];
    let experts = EXPERT_RATES
        .iter()
        .enumerate()
        .map(|(idx, rates)| Expert {
            id: idx + 1,
            sources: vec![0, 1],
            decisions: 3,
            loss: LossSpec::from_row_rates(rates).unwrap(),
            q: 1.0,
        })
        .collect();
    Scenario::build(
        vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        sources,
        Agent0 {
            sources: vec![0, 1],
            loss: LossSpec::from_row_rates(&c0.rates()).unwrap(),
        },
        experts,
    )
    .expect("reference scenario is statically valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_and_round_trips() {
        let s = reference_scenario(0.9, 4.0, C0Variant::C3);
        assert_eq!(s.experts.len(), 3);
        assert_eq!(s.num_hypotheses(), 3);
        let back = crate::scenario::parse_scenario(&s.to_json()).unwrap();
        assert_eq!(s, back);
    }
}
