//! Flat TOML training configuration with `key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ExperimentProtocol;
use crate::error::{FamlError, Result};
use crate::net::{AdamConfig, EvidenceActivation};
use crate::prior::PriorSchedule;

/// Every key is optional in a config file; missing keys take the defaults
/// below, which correspond to the full method. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Prior strength: `β_k = γ / recall_k`.
    pub gamma: f64,
    /// Weight of the cross-view consistency term.
    pub beta_con: f64,
    pub warmup_epochs: usize,
    pub refresh_interval: usize,
    /// Training-trajectory prior (off: unit prior throughout).
    pub adaptive_prior: bool,
    /// Class-wise evidence variance penalty (off: `λ_t = 0`).
    pub fairness: bool,
    /// Cross-view variance alignment (off: `β_con = 0`).
    pub consistency: bool,
    /// Inverse-frequency weights on the supervised terms.
    pub class_balanced: bool,
    pub seed: u64,
    /// Test-set evaluation period in epochs; the last epoch is always evaluated.
    /// 0 evaluates only at the end.
    pub eval_every: usize,
    /// Hidden layer widths; omitted means one layer of `max(64, d_v / 2)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dims: Option<Vec<usize>>,
    pub activation: EvidenceActivation,
    /// Also differentiate the fusion confidences.
    pub exact_fusion_grad: bool,
    /// Feed the prior from a clean end-of-epoch pass instead of training-time
    /// predictions.
    pub fresh_eval_prior: bool,
    /// One prior per view from that view's own predictions.
    pub per_view_prior: bool,
    /// Project fused opinions with base rates `1/K` instead of `β / W`.
    pub pin_base_rates: bool,
    pub save_trajectory: bool,
    pub test_fraction: f64,
    pub imbalance_ratio: f64,
    pub normalize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            gamma: 1.0,
            beta_con: 1.0,
            warmup_epochs: 20,
            refresh_interval: 5,
            adaptive_prior: true,
            fairness: true,
            consistency: true,
            class_balanced: true,
            seed: 0,
            eval_every: 10,
            hidden_dims: None,
            activation: EvidenceActivation::Softplus,
            exact_fusion_grad: false,
            fresh_eval_prior: false,
            per_view_prior: false,
            pin_base_rates: false,
            save_trajectory: true,
            test_fraction: 0.2,
            imbalance_ratio: 10.0,
            normalize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FamlError::Config(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(self.beta_con.is_finite() && self.beta_con >= 0.0) {
            return bad(format!("beta_con must be non-negative, got {}", self.beta_con));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if !(self.imbalance_ratio.is_finite() && self.imbalance_ratio >= 1.0) {
            return bad(format!("imbalance_ratio must be at least 1, got {}", self.imbalance_ratio));
        }
        if self.hidden_dims.as_ref().is_some_and(|h| h.contains(&0)) {
            return bad("hidden_dims entries must be positive".into());
        }
        self.schedule().validate()
    }

    pub fn schedule(&self) -> PriorSchedule {
        PriorSchedule {
            warmup_epochs: self.warmup_epochs,
            refresh_interval: self.refresh_interval,
            gamma: self.gamma,
        }
    }

    pub fn optimizer(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn protocol(&self) -> ExperimentProtocol {
        ExperimentProtocol {
            test_fraction: self.test_fraction,
            imbalance_ratio: self.imbalance_ratio,
            normalize: self.normalize,
        }
    }

    pub fn with_flags(&self, flags: AblationFlags) -> Self {
        Self {
            adaptive_prior: flags.adaptive_prior,
            fairness: flags.fairness,
            consistency: flags.consistency,
            ..self.clone()
        }
    }

    pub fn flags(&self) -> AblationFlags {
        AblationFlags {
            adaptive_prior: self.adaptive_prior,
            fairness: self.fairness,
            consistency: self.consistency,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| FamlError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads an optional file, applies `key=value` overrides on top and
    /// validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| FamlError::io(p, e))?;
                parse_table(&text)?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| FamlError::Config(format!("config serialization: {e}")))
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| FamlError::Config(e.message().to_string()))
}

/// Applies one `dotted.key=value` override. The value is read as a TOML
/// literal when possible and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| FamlError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(FamlError::Config(format!("override `{assignment}` has an empty key")));
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut node = table;
    for part in parts {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| FamlError::Config(format!("override key `{key}`: `{part}` is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

/// The three switchable components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub adaptive_prior: bool,
    pub fairness: bool,
    pub consistency: bool,
}

impl AblationFlags {
    pub const ALL_OFF: Self = Self {
        adaptive_prior: false,
        fairness: false,
        consistency: false,
    };
    pub const ALL_ON: Self = Self {
        adaptive_prior: true,
        fairness: true,
        consistency: true,
    };
}

/// The five rows of the ablation table, in order.
pub const ABLATION_ROWS: [(&str, AblationFlags); 5] = [
    ("baseline", AblationFlags::ALL_OFF),
    (
        "prior",
        AblationFlags {
            adaptive_prior: true,
            fairness: false,
            consistency: false,
        },
    ),
    (
        "prior+fairness",
        AblationFlags {
            adaptive_prior: true,
            fairness: true,
            consistency: false,
        },
    ),
    (
        "prior+consistency",
        AblationFlags {
            adaptive_prior: true,
            fairness: false,
            consistency: true,
        },
    ),
    ("full", AblationFlags::ALL_ON),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_full_method() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.epochs, 200);
        assert_eq!(cfg.flags(), AblationFlags::ALL_ON);
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = TrainConfig {
            hidden_dims: Some(vec![32, 16]),
            gamma: 0.1 + 0.2,
            ..TrainConfig::default()
        };
        let back = TrainConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = TrainConfig::from_toml_str("epochz = 3").unwrap_err();
        assert!(matches!(err, FamlError::Config(ref m) if m.contains("epochz")), "{err}");
        let err = TrainConfig::load(None, &["nested.key=1".into()]).unwrap_err();
        assert!(matches!(err, FamlError::Config(_)));
    }

    #[test]
    fn overrides_apply_after_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "epochs = 5\ngamma = 2.0\n").unwrap();
        let cfg = TrainConfig::load(
            Some(&path),
            &["gamma=0.5".into(), "fairness=false".into(), "activation=exp".into()],
        )
        .unwrap();
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.gamma, 0.5);
        assert!(!cfg.fairness);
        assert_eq!(cfg.activation, EvidenceActivation::Exp);
        assert!(TrainConfig::load(None, &["epochs".into()]).is_err());
        assert!(TrainConfig::load(None, &["epochs=0".into()]).is_err());
    }

    #[test]
    fn ablation_rows() {
        assert_eq!(ABLATION_ROWS.len(), 5);
        assert_eq!(ABLATION_ROWS[0].1, AblationFlags::ALL_OFF);
        assert_eq!(ABLATION_ROWS[4].1, AblationFlags::ALL_ON);
    }
}
