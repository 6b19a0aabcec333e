//! Problem-instance definition: hypotheses, priors, information sources,
//! experts with loss-decay-rate matrices, and observation policies.
//!
//! A scenario is a single self-contained JSON document (see the CLI docs for
//! the schema). All domain types are immutable after validation and safe to
//! share across threads.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::path::Path;

pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("failed to read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse scenario file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario ({field}): {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Conditional distribution family of one information source, shared across
/// agents. Both kinds have exact log moment generating functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceModel {
    /// Per-hypothesis mean with a variance shared across hypotheses.
    Gaussian { means: Vec<f64>, variance: f64 },
    /// Per-hypothesis probability vector over a common finite support;
    /// `rows[m][y]` is P_m(y). Strict positivity guarantees mutual absolute
    /// continuity.
    Finite { rows: Vec<Vec<f64>> },
}

impl SourceModel {
    pub fn validate(&self, num_hypotheses: usize, field: &str) -> Result<(), ScenarioError> {
        match self {
            SourceModel::Gaussian { means, variance } => {
                if means.len() != num_hypotheses {
                    return Err(invalid(field, "gaussian source needs one mean per hypothesis"));
                }
                if !(*variance > 0.0) || !variance.is_finite() {
                    return Err(invalid(field, "gaussian variance must be positive and finite"));
                }
                if means.iter().any(|m| !m.is_finite()) {
                    return Err(invalid(field, "gaussian means must be finite"));
                }
            }
            SourceModel::Finite { rows } => {
                if rows.len() != num_hypotheses {
                    return Err(invalid(field, "finite source needs one row per hypothesis"));
                }
                let support = rows[0].len();
                if support == 0 {
                    return Err(invalid(field, "finite source needs a nonempty support"));
                }
                for (m, row) in rows.iter().enumerate() {
                    if row.len() != support {
                        return Err(invalid(field, "all rows must share one support"));
                    }
                    if row.iter().any(|p| !(*p > 0.0)) {
                        return Err(invalid(
                            field,
                            format!("row {m} must be strictly positive on the full support"),
                        ));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > 1e-9 {
                        return Err(invalid(field, format!("row {m} must sum to 1 (got {s})")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Matrix of loss decay rates c(m, d), extended nonnegative reals.
/// `f64::INFINITY` encodes an exactly-zero loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    rates: Vec<Vec<f64>>,
}

impl LossSpec {
    pub fn new(rates: Vec<Vec<f64>>) -> Result<Self, ScenarioError> {
        let spec = LossSpec { rates };
        spec.validate("loss")?;
        Ok(spec)
    }

    fn validate(&self, field: &str) -> Result<(), ScenarioError> {
        if self.rates.is_empty() || self.rates[0].is_empty() {
            return Err(invalid(field, "loss matrix must be nonempty"));
        }
        let d = self.rates[0].len();
        let mut any_finite = false;
        for row in &self.rates {
            if row.len() != d {
                return Err(invalid(field, "loss matrix rows must have equal length"));
            }
            for &c in row {
                if c.is_nan() || c < 0.0 {
                    return Err(invalid(field, "loss rates must satisfy c(m,d) >= 0"));
                }
                if c.is_finite() {
                    any_finite = true;
                }
            }
        }
        if !any_finite {
            return Err(invalid(field, "loss matrix cannot be all-infinite"));
        }
        Ok(())
    }

    pub fn num_hypotheses(&self) -> usize {
        self.rates.len()
    }

    pub fn num_decisions(&self) -> usize {
        self.rates[0].len()
    }

    pub fn rate(&self, m: usize, d: usize) -> f64 {
        self.rates[m][d]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rates
    }

    /// Smallest finite rate in the matrix.
    pub fn min_finite(&self) -> f64 {
        self.rates
            .iter()
            .flatten()
            .cloned()
            .filter(|c| c.is_finite())
            .fold(f64::INFINITY, f64::min)
    }

    /// True when `min_finite` is zero, i.e. the loss is a canonical
    /// representative of its asymptotic-equivalence class.
    pub fn is_canonical(&self) -> bool {
        self.min_finite().abs() < 1e-15
    }

    /// Agent-0 form: square, c(m,m) = inf, and c(m,d) constant over d != m.
    pub fn validate_agent0_form(&self, num_hypotheses: usize) -> Result<(), ScenarioError> {
        let field = "agent0.loss";
        if self.num_hypotheses() != num_hypotheses || self.num_decisions() != num_hypotheses {
            return Err(invalid(field, "agent-0 loss must be M x M"));
        }
        for m in 0..num_hypotheses {
            if self.rates[m][m] != f64::INFINITY {
                return Err(invalid(field, format!("diagonal entry ({m},{m}) must be \"inf\"")));
            }
            let off: Vec<f64> = (0..num_hypotheses)
                .filter(|&d| d != m)
                .map(|d| self.rates[m][d])
                .collect();
            if off.iter().any(|&c| !c.is_finite()) {
                return Err(invalid(field, format!("row {m} off-diagonal rates must be finite")));
            }
            if off.windows(2).any(|w| (w[0] - w[1]).abs() > 1e-12) {
                return Err(invalid(
                    field,
                    format!("row {m} must use one rate for all wrong decisions"),
                ));
            }
        }
        Ok(())
    }

    /// True when the matrix has the shape of Assumption 4: square with an
    /// infinite diagonal and one finite rate per row off the diagonal.
    pub fn is_assumption4_form(&self) -> bool {
        let m = self.num_hypotheses();
        if self.num_decisions() != m {
            return false;
        }
        self.validate_agent0_form(m).is_ok()
    }

    /// Off-diagonal rate of row `m` for agent-0 / Assumption-4 form matrices.
    pub fn off_diagonal_rate(&self, m: usize) -> f64 {
        let d = if m == 0 { 1 } else { 0 };
        self.rates[m][d]
    }

    /// Build an Assumption-4 form matrix from a vector of per-hypothesis rates.
    pub fn from_row_rates(rates: &[f64]) -> Result<Self, ScenarioError> {
        let m = rates.len();
        let mut mat = vec![vec![0.0; m]; m];
        for (i, &c) in rates.iter().enumerate() {
            for d in 0..m {
                mat[i][d] = if d == i { f64::INFINITY } else { c };
            }
        }
        LossSpec::new(mat)
    }

    /// 0-1 loss rates: zero off the diagonal, infinite on it.
    pub fn zero_one(num_hypotheses: usize) -> Self {
        LossSpec::from_row_rates(&vec![0.0; num_hypotheses]).unwrap()
    }
}

/// Shifts all finite rates so the minimum finite rate is 0. Idempotent;
/// infinite entries are unchanged.
pub fn canonicalize_loss(spec: &LossSpec) -> LossSpec {
    let shift = spec.min_finite();
    let rates = spec
        .rates
        .iter()
        .map(|row| {
            row.iter()
                .map(|&c| if c.is_finite() { c - shift } else { c })
                .collect()
        })
        .collect();
    LossSpec { rates }
}

mod loss_serde {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Cell {
        Number(f64),
        Text(String),
    }

    impl Serialize for LossSpec {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            let out: Vec<Vec<Cell>> = self
                .rates
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&c| {
                            if c == f64::INFINITY {
                                Cell::Text("inf".to_string())
                            } else {
                                Cell::Number(c)
                            }
                        })
                        .collect()
                })
                .collect();
            out.serialize(s)
        }
    }

    impl<'de> Deserialize<'de> for LossSpec {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            let cells: Vec<Vec<Cell>> = Deserialize::deserialize(d)?;
            let mut rates = Vec::with_capacity(cells.len());
            for row in cells {
                let mut out = Vec::with_capacity(row.len());
                for cell in row {
                    out.push(match cell {
                        Cell::Number(x) => x,
                        Cell::Text(t) if t == "inf" => f64::INFINITY,
                        Cell::Text(t) => {
                            return Err(D::Error::custom(format!(
                                "loss cell must be a number or \"inf\", got {t:?}"
                            )))
                        }
                    });
                }
                rates.push(out);
            }
            Ok(LossSpec { rates })
        }
    }
}

/// Point on the simplex over an agent's information sources, aligned with
/// the agent's `sources` list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy {
    weights: Vec<f64>,
}

impl Policy {
    pub fn new(weights: Vec<f64>) -> Result<Self, ScenarioError> {
        if weights.is_empty() {
            return Err(invalid("policy", "policy cannot be empty"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("policy", "policy weights must be nonnegative"));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(invalid("policy", format!("policy weights must sum to 1 (got {s})")));
        }
        Ok(Policy { weights })
    }

    pub fn vertex(dim: usize, index: usize) -> Self {
        let mut w = vec![0.0; dim];
        w[index] = 1.0;
        Policy { weights: w }
    }

    pub fn barycenter(dim: usize) -> Self {
        Policy {
            weights: vec![1.0 / dim as f64; dim],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expert {
    pub id: usize,
    /// Indices into the scenario's global source list.
    pub sources: Vec<usize>,
    /// Size of the decision space d_k.
    pub decisions: usize,
    /// M x d_k loss decay rates.
    pub loss: LossSpec,
    /// Observation ratio q_k = lim n_k / n_0.
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent0 {
    pub sources: Vec<usize>,
    /// M x M loss, agent-0 form (infinite diagonal, one rate per row).
    pub loss: LossSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Hypotheses {
    count: usize,
    priors: Vec<f64>,
}

/// Complete, validated problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioFile", into = "ScenarioFile")]
pub struct Scenario {
    pub priors: Vec<f64>,
    pub sources: Vec<SourceModel>,
    pub agent0: Agent0,
    pub experts: Vec<Expert>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    schema: u32,
    hypotheses: Hypotheses,
    sources: Vec<SourceModel>,
    agent0: Agent0,
    experts: Vec<Expert>,
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = ScenarioError;
    fn try_from(f: ScenarioFile) -> Result<Self, ScenarioError> {
        if f.schema != 1 {
            return Err(invalid("schema", format!("unsupported schema version {}", f.schema)));
        }
        if f.hypotheses.count != f.hypotheses.priors.len() {
            return Err(invalid("hypotheses", "count must match the number of priors"));
        }
        let s = Scenario {
            priors: f.hypotheses.priors,
            sources: f.sources,
            agent0: f.agent0,
            experts: f.experts,
        };
        s.validate()?;
        Ok(s)
    }
}

impl From<Scenario> for ScenarioFile {
    fn from(s: Scenario) -> ScenarioFile {
        ScenarioFile {
            schema: 1,
            hypotheses: Hypotheses {
                count: s.priors.len(),
                priors: s.priors,
            },
            sources: s.sources,
            agent0: s.agent0,
            experts: s.experts,
        }
    }
}

impl Scenario {
    pub fn num_hypotheses(&self) -> usize {
        self.priors.len()
    }

    pub fn build(
        priors: Vec<f64>,
        sources: Vec<SourceModel>,
        agent0: Agent0,
        experts: Vec<Expert>,
    ) -> Result<Self, ScenarioError> {
        let s = Scenario {
            priors,
            sources,
            agent0,
            experts,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let m = self.num_hypotheses();
        if m < 2 {
            return Err(invalid("hypotheses", "need at least two hypotheses"));
        }
        if self.priors.iter().any(|p| !(*p > 0.0)) {
            return Err(invalid("hypotheses.priors", "priors must be strictly positive"));
        }
        let s: f64 = self.priors.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(invalid("hypotheses.priors", "priors must sum to 1"));
        }
        if self.sources.is_empty() {
            return Err(invalid("sources", "need at least one information source"));
        }
        for (i, src) in self.sources.iter().enumerate() {
            src.validate(m, &format!("sources[{i}]"))?;
        }
        self.validate_source_set(&self.agent0.sources, "agent0.sources")?;
        self.agent0.loss.validate_agent0_form(m)?;
        for (i, e) in self.experts.iter().enumerate() {
            let field = format!("experts[{i}]");
            self.validate_source_set(&e.sources, &format!("{field}.sources"))?;
            if e.decisions < 1 || e.decisions > m {
                return Err(invalid(
                    &format!("{field}.decisions"),
                    "decision-space size must lie in [1, M]",
                ));
            }
            e.loss.validate(&format!("{field}.loss"))?;
            if e.loss.num_hypotheses() != m || e.loss.num_decisions() != e.decisions {
                return Err(invalid(&format!("{field}.loss"), "loss matrix must be M x d_k"));
            }
            if !(e.q > 0.0) || !e.q.is_finite() {
                return Err(invalid(&format!("{field}.q"), "observation ratio must satisfy q_k > 0"));
            }
        }
        Ok(())
    }

    fn validate_source_set(&self, set: &[usize], field: &str) -> Result<(), ScenarioError> {
        if set.is_empty() {
            return Err(invalid(field, "source set cannot be empty"));
        }
        for &g in set {
            if g >= self.sources.len() {
                return Err(invalid(field, format!("unknown source id {g}")));
            }
        }
        let mut sorted = set.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != set.len() {
            return Err(invalid(field, "source set has duplicates"));
        }
        Ok(())
    }

    /// Expert by its declared id.
    pub fn expert(&self, id: usize) -> Option<&Expert> {
        self.experts.iter().find(|e| e.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioFile::from(self.clone())).unwrap()
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let scenario: Scenario = serde_json::from_str(&text).map_err(|e| {
        // Validation failures surface through serde's try_from; keep their text.
        ScenarioError::Parse(e)
    })?;
    Ok(scenario)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_pair() -> Vec<SourceModel> {
        vec![
            SourceModel::Gaussian {
                means: vec![-1.0, 0.9, 1.0],
                variance: 4.0,
            },
            SourceModel::Gaussian {
                means: vec![-1.0, -0.9, 1.0],
                variance: 4.0,
            },
        ]
    }

    fn small_scenario() -> Scenario {
        Scenario::build(
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 - 2.0 / 3.0],
            gaussian_pair(),
            Agent0 {
                sources: vec![0, 1],
                loss: LossSpec::from_row_rates(&[0.0, 0.05, 0.0]).unwrap(),
            },
            vec![Expert {
                id: 1,
                sources: vec![0, 1],
                decisions: 3,
                loss: LossSpec::zero_one(3),
                q: 1.0,
            }],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let s = small_scenario();
        let text = s.to_json();
        let back = parse_scenario(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn bad_priors_rejected() {
        let err = Scenario::build(
            vec![0.5, 0.5, 0.1],
            gaussian_pair(),
            Agent0 {
                sources: vec![0],
                loss: LossSpec::zero_one(3),
            },
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("sum to 1"));
    }

    #[test]
    fn zero_observation_ratio_rejected() {
        let mut s = small_scenario();
        s.experts[0].q = 0.0;
        let err = s.validate().unwrap_err();
        assert!(err.to_string().contains("q_k > 0"));
    }

    #[test]
    fn canonicalize_shifts_to_zero_min() {
        let spec = LossSpec::from_row_rates(&[0.3, 0.3, 0.3]).unwrap();
        let canon = canonicalize_loss(&spec);
        assert!(canon.is_canonical());
        for m in 0..3 {
            assert_eq!(canon.rate(m, m), f64::INFINITY);
            assert_eq!(canon.off_diagonal_rate(m), 0.0);
        }
    }

    #[test]
    fn canonicalize_keeps_canonical_losses() {
        // 0-1 loss is already canonical
        let zo = LossSpec::zero_one(3);
        assert_eq!(canonicalize_loss(&zo), zo);
        // rates (0, 0, 0.2) have min 0 already
        let c2 = LossSpec::from_row_rates(&[0.0, 0.0, 0.2]).unwrap();
        assert_eq!(canonicalize_loss(&c2), c2);
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let spec = LossSpec::from_row_rates(&[0.1, 0.4, 0.25]).unwrap();
        let once = canonicalize_loss(&spec);
        assert_eq!(canonicalize_loss(&once), once);
    }

    #[test]
    fn inf_cells_round_trip_as_strings() {
        let s = small_scenario();
        let text = s.to_json();
        assert!(text.contains("\"inf\""));
        assert_eq!(parse_scenario(&text).unwrap(), s);
    }

    #[test]
    fn finite_source_rows_must_be_positive() {
        let src = SourceModel::Finite {
            rows: vec![vec![0.5, 0.5], vec![1.0, 0.0]],
        };
        assert!(src.validate(2, "sources[0]").is_err());
    }

    #[test]
    fn policy_must_be_on_simplex() {
        assert!(Policy::new(vec![0.4, 0.4]).is_err());
        assert!(Policy::new(vec![-0.1, 1.1]).is_err());
        assert!(Policy::new(vec![0.25, 0.75]).is_ok());
    }
}
