use serde::{Deserialize, Serialize};

use crate::error::{GbdtError, Result};

/// Boosting hyperparameters. Every boosting round fits one regression tree
/// per class against the softmax gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub row_subsample: f64,
    pub col_subsample: f64,
    pub n_bins: usize,
    pub min_child_hessian: f64,
    pub l2_leaf_reg: f64,
    /// Standardize features with training-set statistics before binning.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 300,
            max_depth: 12,
            learning_rate: 0.1,
            row_subsample: 0.8,
            col_subsample: 0.8,
            n_bins: 256,
            min_child_hessian: 1.0,
            l2_leaf_reg: 1.0,
            standardize: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GbdtError::Config(msg));
        if self.rounds == 0 {
            return bad("rounds must be >= 1".into());
        }
        if self.max_depth == 0 {
            return bad("max_depth must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate {} not in (0, 1]", self.learning_rate));
        }
        for (name, v) in [
            ("row_subsample", self.row_subsample),
            ("col_subsample", self.col_subsample),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} {v} not in (0, 1]"));
            }
        }
        if !(2..=256).contains(&self.n_bins) {
            return bad(format!("n_bins {} not in [2, 256]", self.n_bins));
        }
        if !(self.min_child_hessian > 0.0 && self.min_child_hessian.is_finite()) {
            return bad("min_child_hessian must be positive".into());
        }
        if !(self.l2_leaf_reg >= 0.0 && self.l2_leaf_reg.is_finite()) {
            return bad("l2_leaf_reg must be nonnegative".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.rounds, 300);
        assert_eq!(cfg.max_depth, 12);
    }

    #[test]
    fn rejects_out_of_range_values() {
        let cases = [
            TrainConfig { rounds: 0, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { learning_rate: 1.5, ..Default::default() },
            TrainConfig { row_subsample: 0.0, ..Default::default() },
            TrainConfig { col_subsample: 1.01, ..Default::default() },
            TrainConfig { n_bins: 1, ..Default::default() },
            TrainConfig { n_bins: 300, ..Default::default() },
            TrainConfig { min_child_hessian: 0.0, ..Default::default() },
            TrainConfig { l2_leaf_reg: -1.0, ..Default::default() },
        ];
        for c in cases {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
