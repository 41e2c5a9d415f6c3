//! Per-implementation presets: hyperparameters and fault profiles for the
//! six public codebases this engine models, plus the faithful baseline.
//!
//! Width entries written as fractions of the data dimension are rounded
//! down with a floor of one unit. Teacher counts scale as N/1000 where an
//! implementation does so, with a floor of one.

use serde::{Deserialize, Serialize};

use crate::data::PartitionMode;
use crate::dp::{AccountantFault, AccountantMode, DeltaScaleFault, NoiseConvention};
use crate::engine::{AccountingGranularity, FaultProfile, PateGanConfig, TeacherModel};
use crate::error::{Error, Result};
use crate::nn::OptimizerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Every fault off: disjoint partitions, MLP teachers, Laplace(1/λ)
    /// aggregation noise, exact accounting with a budget pre-check.
    Faithful,
    /// No ensemble and no accounting; Gaussian label noise with the XOR
    /// exponentiation slip; synthetic labels forced to the training counts.
    Original,
    /// Teachers all read the last partition, aggregation noise is
    /// Laplace(λ), teachers are refit logistic regressions, RMSProp.
    Updated,
    /// Teachers draw from the full dataset every iteration (`ResampleAll`);
    /// the accountant has the moment index shift.
    Synthcity,
    /// No ensemble and no accounting; Gaussian label noise with the
    /// multiply-instead-of-divide scale slip; hard 100-iteration cap.
    Turing,
    /// Correct partitioning and noise; the accountant skips a log.
    Borealis,
    /// Three-layer teachers; the accountant skips a log.
    Smartnoise,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Faithful,
        Preset::Original,
        Preset::Updated,
        Preset::Synthcity,
        Preset::Turing,
        Preset::Borealis,
        Preset::Smartnoise,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Faithful => "faithful",
            Preset::Original => "original",
            Preset::Updated => "updated",
            Preset::Synthcity => "synthcity",
            Preset::Turing => "turing",
            Preset::Borealis => "borealis",
            Preset::Smartnoise => "smartnoise",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|p| p.name() == name)
            .ok_or_else(|| {
                let valid: Vec<&str> = Self::ALL.iter().map(|p| p.name()).collect();
                Error::Config(format!("unknown preset {name:?}; valid presets: {valid:?}"))
            })
    }
}

fn frac(d: usize, num: usize, den: usize) -> usize {
    (d * num / den).max(1)
}

fn teachers_per_thousand(n_rows: usize) -> usize {
    (n_rows / 1000).max(1)
}

fn delta_n_sqrt_n(n_rows: usize) -> f64 {
    let n = n_rows as f64;
    (1.0 / (n * n.sqrt())).min(0.5)
}

/// Hyperparameters and fault profile for a preset, instantiated for a
/// dataset of `d` columns and `n_rows` records. `epsilon_budget` and `seed`
/// are runtime choices and come back as placeholders (1.0 and 0).
pub fn preset_config(preset: Preset, d: usize, n_rows: usize) -> (PateGanConfig, FaultProfile) {
    let base = PateGanConfig {
        epsilon_budget: 1.0,
        delta: 1e-5,
        lambda: 1e-3,
        teachers: teachers_per_thousand(n_rows),
        teacher_iters: 5,
        student_iters: 5,
        generator_iters: 1,
        batch: 64,
        max_iters: 10_000,
        noise_dim: d,
        generator_widths: vec![d, frac(d, 1, 2), d],
        teacher_widths: vec![1],
        student_widths: vec![d, d, 1],
        moments: 100,
        optimizer: OptimizerKind::Adam,
        learning_rate: 1e-4,
        accounting: AccountingGranularity::PerSample,
        accountant_mode: AccountantMode::PateGan,
        literal_generator_loss: false,
        trace: false,
        seed: 0,
    };
    let faithful_profile = FaultProfile::default();
    match preset {
        Preset::Faithful => (base, faithful_profile),
        Preset::Original => (
            PateGanConfig {
                batch: 128,
                student_iters: 1,
                noise_dim: frac(d, 1, 4),
                generator_widths: vec![d, d, d],
                student_widths: vec![d, d, 1],
                ..base
            },
            FaultProfile {
                pate_enabled: false,
                noise_convention: NoiseConvention::Gaussian,
                delta_scale_fault: DeltaScaleFault::XorPower,
                label_conditioning: true,
                ..faithful_profile
            },
        ),
        Preset::Updated => (
            PateGanConfig {
                teachers: 10.min(n_rows),
                lambda: 1.0,
                moments: 20,
                optimizer: OptimizerKind::Rmsprop,
                teacher_iters: 1,
                noise_dim: d,
                generator_widths: vec![4 * d, 4 * d, d],
                student_widths: vec![d, 1],
                accounting: AccountingGranularity::PerBatch,
                ..base
            },
            FaultProfile {
                partition_mode: PartitionMode::AllLast,
                teacher_model: TeacherModel::Logreg,
                noise_convention: NoiseConvention::LapLambda,
                ..faultless_ensemble()
            },
        ),
        Preset::Synthcity => (
            PateGanConfig {
                teachers: 10.min(n_rows),
                delta: delta_n_sqrt_n(n_rows),
                batch: 200,
                max_iters: 1000,
                teacher_iters: 1,
                student_iters: 10,
                generator_iters: 10,
                noise_dim: d,
                generator_widths: vec![100, d],
                student_widths: vec![100, 1],
                accounting: AccountingGranularity::PerBatch,
                ..base
            },
            FaultProfile {
                partition_mode: PartitionMode::ResampleAll,
                teacher_model: TeacherModel::Logreg,
                accountant_fault: AccountantFault::IndexShift,
                ..faultless_ensemble()
            },
        ),
        Preset::Turing => (
            PateGanConfig {
                batch: 128,
                max_iters: 100,
                student_iters: 1,
                noise_dim: frac(d, 1, 4),
                generator_widths: vec![d, d, d],
                student_widths: vec![d, d, 1],
                ..base
            },
            FaultProfile {
                pate_enabled: false,
                noise_convention: NoiseConvention::Gaussian,
                delta_scale_fault: DeltaScaleFault::MultDiv,
                ..faithful_profile
            },
        ),
        Preset::Borealis => (
            PateGanConfig {
                teachers: 10.min(n_rows),
                lambda: 1e-4,
                noise_dim: frac(d, 1, 4),
                generator_widths: vec![2 * d, d],
                teacher_widths: vec![frac(d, 1, 2), 1],
                student_widths: vec![frac(d, 1, 2), 1],
                ..base
            },
            FaultProfile {
                accountant_fault: AccountantFault::MissingLog,
                ..faultless_ensemble()
            },
        ),
        Preset::Smartnoise => (
            PateGanConfig {
                delta: delta_n_sqrt_n(n_rows),
                noise_dim: 64,
                generator_widths: vec![64, 64, d],
                teacher_widths: vec![frac(d, 2, 3), frac(d, 1, 3), 1],
                student_widths: vec![frac(d, 2, 3), frac(d, 1, 3), 1],
                ..base
            },
            FaultProfile {
                accountant_fault: AccountantFault::MissingLog,
                ..faultless_ensemble()
            },
        ),
    }
}

fn faultless_ensemble() -> FaultProfile {
    FaultProfile::default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn faithful_has_no_faults() {
        let (_, profile) = preset_config(Preset::Faithful, 10, 5000);
        assert!(profile.is_faithful());
    }

    #[test]
    fn updated_profile_matches_catalog() {
        let (cfg, profile) = preset_config(Preset::Updated, 6, 5000);
        assert_eq!(profile.partition_mode, PartitionMode::AllLast);
        assert_eq!(profile.noise_convention, NoiseConvention::LapLambda);
        assert_eq!(profile.teacher_model, TeacherModel::Logreg);
        assert_eq!(cfg.optimizer, OptimizerKind::Rmsprop);
        assert_eq!(cfg.lambda, 1.0);
        assert_eq!(cfg.moments, 20);
        assert_eq!(cfg.generator_widths, vec![24, 24, 6]);
    }

    #[test]
    fn turing_profile_matches_catalog() {
        let (cfg, profile) = preset_config(Preset::Turing, 4, 100);
        assert!(!profile.pate_enabled);
        assert_eq!(profile.delta_scale_fault, DeltaScaleFault::MultDiv);
        assert_eq!(profile.noise_convention, NoiseConvention::Gaussian);
        assert_eq!(cfg.max_iters, 100);
    }

    #[test]
    fn original_forces_label_counts_and_xor_scale() {
        let (_, profile) = preset_config(Preset::Original, 4, 100);
        assert!(!profile.pate_enabled);
        assert!(profile.label_conditioning);
        assert_eq!(profile.delta_scale_fault, DeltaScaleFault::XorPower);
    }

    #[test]
    fn smartnoise_shapes() {
        let (cfg, profile) = preset_config(Preset::Smartnoise, 9, 12_000);
        assert_eq!(cfg.teachers, 12);
        assert_eq!(cfg.noise_dim, 64);
        assert_eq!(cfg.teacher_widths, vec![6, 3, 1]);
        assert_eq!(profile.accountant_fault, AccountantFault::MissingLog);
        assert!((cfg.delta - 1.0 / (12_000.0f64 * 12_000.0f64.sqrt())).abs() < 1e-18);
    }

    #[test]
    fn synthcity_resamples_and_shifts() {
        let (cfg, profile) = preset_config(Preset::Synthcity, 5, 800);
        assert_eq!(profile.partition_mode, PartitionMode::ResampleAll);
        assert_eq!(profile.accountant_fault, AccountantFault::IndexShift);
        assert_eq!(cfg.batch, 200);
        assert_eq!(cfg.student_iters, 10);
        assert_eq!(cfg.generator_iters, 10);
    }

    #[test]
    fn small_dimensions_stay_positive() {
        for preset in Preset::ALL {
            let (cfg, _) = preset_config(preset, 2, 4);
            assert!(cfg.noise_dim >= 1);
            assert!(cfg.teachers >= 1);
            assert!(cfg.generator_widths.iter().all(|&w| w >= 1));
            assert!(cfg.teacher_widths.iter().all(|&w| w >= 1));
            assert!(cfg.student_widths.iter().all(|&w| w >= 1));
            assert!(cfg.delta > 0.0 && cfg.delta < 1.0);
        }
    }

    #[test]
    fn names_roundtrip() {
        for preset in Preset::ALL {
            assert_eq!(Preset::parse(preset.name()).unwrap(), preset);
        }
        assert!(Preset::parse("nope").is_err());
    }
}
