use serde::{Deserialize, Serialize};

use crate::guidance::BundleOptions;

/// Where the success threshold for the mode schedule comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauPolicy {
    /// Mean success of the first K0 executed pilot samples.
    Adaptive,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariantFlags {
    pub use_set: bool,
    pub use_dr_schedule: bool,
    pub use_reconciliation: bool,
}

impl Default for VariantFlags {
    fn default() -> Self {
        Self {
            use_set: true,
            use_dr_schedule: true,
            use_reconciliation: true,
        }
    }
}

impl VariantFlags {
    pub fn bundle_options(self) -> BundleOptions {
        BundleOptions {
            use_set: self.use_set,
            use_dr_schedule: self.use_dr_schedule,
        }
    }
}

/// A named (flags, threshold policy) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub flags: VariantFlags,
    #[serde(default = "adaptive")]
    pub tau_policy: TauPolicy,
}

fn adaptive() -> TauPolicy {
    TauPolicy::Adaptive
}

impl Variant {
    /// The four ablation rows: reconciled mission only, plus the table,
    /// plus the schedule with a fixed threshold, plus the adaptive threshold.
    pub fn presets() -> Vec<Variant> {
        let base = VariantFlags {
            use_set: false,
            use_dr_schedule: false,
            use_reconciliation: true,
        };
        let set = VariantFlags { use_set: true, ..base };
        let full = VariantFlags { use_dr_schedule: true, ..set };
        vec![
            Variant { name: "baseline_du".into(), flags: base, tau_policy: TauPolicy::Adaptive },
            Variant { name: "set".into(), flags: set, tau_policy: TauPolicy::Adaptive },
            Variant { name: "dr_fixed".into(), flags: full, tau_policy: TauPolicy::Fixed(0.1) },
            Variant { name: "dr_adaptive".into(), flags: full, tau_policy: TauPolicy::Adaptive },
        ]
    }

    pub fn preset(name: &str) -> Option<Variant> {
        Self::presets().into_iter().find(|v| v.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    /// Number of iterations N.
    pub iterations: u32,
    /// Samples per iteration K.
    pub samples: usize,
    /// Executed pilot samples K0 for the adaptive threshold.
    pub pilot_samples: usize,
    pub max_pilot_batches: u32,
    pub final_eval_runs: u32,
    pub tau_policy: TauPolicy,
    pub variant: VariantFlags,
    /// Free-form name recorded in logs and reports.
    pub variant_name: String,
    pub seed: u64,
    /// Threads used to evaluate the samples of one iteration.
    pub eval_workers: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            samples: 16,
            pilot_samples: 16,
            max_pilot_batches: 10,
            final_eval_runs: 5,
            tau_policy: TauPolicy::Adaptive,
            variant: VariantFlags::default(),
            variant_name: "full".into(),
            seed: 0,
            eval_workers: 1,
        }
    }
}

impl EvolutionConfig {
    pub fn with_variant(mut self, variant: &Variant) -> Self {
        self.variant = variant.flags;
        self.tau_policy = variant.tau_policy;
        self.variant_name = variant.name.clone();
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.iterations == 0 {
            return Err("iterations must be at least 1".into());
        }
        if self.samples == 0 {
            return Err("samples must be at least 1".into());
        }
        if self.pilot_samples == 0 {
            return Err("pilot_samples must be at least 1".into());
        }
        if self.max_pilot_batches == 0 {
            return Err("max_pilot_batches must be at least 1".into());
        }
        if self.final_eval_runs == 0 {
            return Err("final_eval_runs must be at least 1".into());
        }
        if let TauPolicy::Fixed(v) = self.tau_policy {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("fixed threshold {v} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_the_ablation_rows() {
        let names: Vec<String> = Variant::presets().into_iter().map(|v| v.name).collect();
        assert_eq!(names, ["baseline_du", "set", "dr_fixed", "dr_adaptive"]);
        let base = Variant::preset("baseline_du").unwrap();
        assert!(!base.flags.use_set && !base.flags.use_dr_schedule && base.flags.use_reconciliation);
        assert_eq!(Variant::preset("dr_fixed").unwrap().tau_policy, TauPolicy::Fixed(0.1));
    }

    #[test]
    fn validation() {
        assert!(EvolutionConfig::default().validate().is_ok());
        let bad = EvolutionConfig { tau_policy: TauPolicy::Fixed(1.5), ..EvolutionConfig::default() };
        assert!(bad.validate().is_err());
        let bad = EvolutionConfig { samples: 0, ..EvolutionConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = EvolutionConfig { tau_policy: TauPolicy::Fixed(0.1), seed: 9, ..EvolutionConfig::default() };
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<EvolutionConfig>(&text).unwrap(), cfg);
        let partial: EvolutionConfig = toml::from_str("iterations = 3\ntau_policy = \"adaptive\"").unwrap();
        assert_eq!(partial.iterations, 3);
        assert_eq!(partial.samples, 16);
    }
}
