// Scratch experiments (removed before ship): verify the accountant-fault
// ordering math and the audit leak dynamics empirically.

use pategan_core::audit::*;
use pategan_core::data::build_worstcase;
use pategan_core::dp::*;
use pategan_core::engine::*;
use pategan_core::presets::{preset_config, Preset};
use pategan_core::rng::rng_from;
use rand::Rng;
use std::sync::Arc;

fn random_stream(k: u32, n: usize, seed: u64) -> Vec<VoteTally> {
    let mut rng = rng_from(seed, &[]);
    (0..n)
        .map(|_| {
            let n1 = rng.gen_range(0..=k);
            VoteTally { n0: k - n1, n1 }
        })
        .collect()
}

fn eps_traj(tallies: &[VoteTally], lambda: f64, fault: AccountantFault) -> Vec<f64> {
    let mut acc =
        MomentsAccountant::new(lambda, 100, 1e-5, AccountantMode::PateGan, fault).unwrap();
    tallies
        .iter()
        .map(|&t| {
            acc.update(t).unwrap();
            acc.epsilon()
        })
        .collect()
}

#[test]
fn fault_ordering_both_lambdas() {
    let stream = random_stream(5, 1000, 42);
    for lambda in [1e-3, 1.0] {
        let none = eps_traj(&stream, lambda, AccountantFault::None);
        let ml = eps_traj(&stream, lambda, AccountantFault::MissingLog);
        let shift = eps_traj(&stream, lambda, AccountantFault::IndexShift);
        let strict_gt = ml
            .iter()
            .zip(&none)
            .filter(|(m, n)| m > n)
            .count();
        let equal = ml.iter().zip(&none).filter(|(m, n)| m == n).count();
        let shift_lt = none.iter().zip(&shift).filter(|(n, s)| n > s).count();
        println!(
            "lambda={lambda}: ml>none at {strict_gt}/1000, ml==none at {equal}/1000, none>shift at {shift_lt}/1000, final ml={:.4} none={:.4} shift={:.4} ratio={:.3}",
            ml[999], none[999], shift[999], ml[999] / none[999]
        );
    }
}

fn worstcase_with_target() -> (pategan_core::data::Dataset, usize) {
    let (ds, target) = build_worstcase(4).unwrap();
    let mut rows = ds.rows.clone();
    rows.push(target);
    let data = pategan_core::data::Dataset::new(rows, Arc::clone(&ds.meta)).unwrap();
    let idx = data.len() - 1;
    (data, idx)
}

fn audit_preset(preset: Preset, lambda_override: Option<f64>, max_iters: usize, games: usize) {
    let (data, target) = worstcase_with_target();
    let (mut cfg, profile) = preset_config(preset, 3, data.len());
    cfg.teachers = 2;
    cfg.epsilon_budget = 1.0;
    cfg.delta = 1e-5;
    cfg.max_iters = max_iters;
    if let Some(l) = lambda_override {
        cfg.lambda = l;
    }
    let audit_cfg = AuditConfig {
        attack: Attack::Querybased,
        generator: GeneratorKind::PateGan,
        preset_name: preset.name().into(),
        pategan: cfg,
        profile,
        games_per_world: games,
        split: AuditConfig::default_split(games),
        delta: 1e-5,
        interval: IntervalMethod::ClopperPearson,
        confidence: 0.95,
        synth_rows: Some(100),
        claimed_epsilon: 1.0,
        workers: 8,
        seed: 1234,
    };
    let start = std::time::Instant::now();
    let report = audit_pipeline(&audit_cfg, &data, target).unwrap();
    println!(
        "{} lambda={:?} iters={}: eps_emp={:.3} alpha={:.3} beta={:.3} violation={} ({:.1}s)",
        preset.name(),
        lambda_override,
        max_iters,
        report.eps_emp,
        report.alpha,
        report.beta,
        report.violation,
        start.elapsed().as_secs_f64()
    );
}

#[test]
fn updated_leak_probe() {
    audit_preset(Preset::Updated, Some(1e-3), 1000, 100);
}

#[test]
fn borealis_leak_probe() {
    audit_preset(Preset::Borealis, Some(1e-3), 1000, 100);
}

#[test]
fn synthcity_leak_probe_lambda_one() {
    audit_preset(Preset::Synthcity, Some(1.0), 200, 100);
}

#[test]
fn training_iterations_probe() {
    // how many iterations does each preset actually run at claimed eps=1?
    let (data, _) = worstcase_with_target();
    for (preset, lambda) in [
        (Preset::Updated, Some(1e-3)),
        (Preset::Borealis, Some(1e-3)),
        (Preset::Synthcity, Some(1.0)),
    ] {
        let (mut cfg, profile) = preset_config(preset, 3, data.len());
        cfg.teachers = 2;
        cfg.epsilon_budget = 1.0;
        cfg.delta = 1e-5;
        cfg.max_iters = 1000;
        if let Some(l) = lambda {
            cfg.lambda = l;
        }
        cfg.seed = 9;
        let start = std::time::Instant::now();
        let model = train(&data, &cfg, &profile).unwrap();
        println!(
            "{}: ran {} iterations, exhausted={}, reported_eps={:.4} ({:.2}s)",
            preset.name(),
            model.iterations_run,
            model.budget_exhausted,
            model.reported_epsilon,
            start.elapsed().as_secs_f64()
        );
    }
}
