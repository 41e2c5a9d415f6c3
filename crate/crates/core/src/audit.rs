//! Black-box privacy auditing via membership-inference distinguishing
//! games.
//!
//! One audit plays `games_per_world` games in each world: the generator is
//! trained on the full dataset (with the target) or on the dataset minus the
//! target, a synthetic sample is drawn and featurized, and a random-forest
//! attacker is fit to tell the worlds apart. Upper confidence bounds on the
//! attacker's test error rates convert into the empirical privacy estimate
//!
//! ```text
//! eps_emp = max( ln((1 - a̅ - δ) / β̅), ln((1 - β̅ - δ) / a̅), 0 )
//! ```
//!
//! Every game derives its RNG stream from (seed, world, game index), so
//! audits are bit-identical at any worker count.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::classifiers::{fit, predict_scores, ClassifierConfig, ClassifierKind};
use crate::data::{ColumnKind, Dataset};
use crate::engine::{generate, train, FaultProfile, PateGanConfig};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::metrics::auroc;
use crate::rng::{derive_seed, rng_from};
use rand::Rng;

/// Featurization used by the attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attack {
    /// Exact-match counts over the full binary domain.
    Querybased,
    /// Per-column min, max, mean, median, standard deviation.
    Groundhog,
}

impl Attack {
    pub fn name(&self) -> &'static str {
        match self {
            Attack::Querybased => "querybased",
            Attack::Groundhog => "groundhog",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "querybased" => Ok(Attack::Querybased),
            "groundhog" => Ok(Attack::Groundhog),
            other => Err(Error::Config(format!(
                "unknown attack {other:?}; valid attacks: [\"querybased\", \"groundhog\"]"
            ))),
        }
    }
}

/// What gets trained inside each game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// The engine under audit.
    PateGan,
    /// Emits its training set verbatim; the perfect-adversary calibration
    /// point.
    Memorize,
    /// Ignores its training data entirely; the null calibration point.
    NoiseOnly,
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::PateGan => "pategan",
            GeneratorKind::Memorize => "memorize",
            GeneratorKind::NoiseOnly => "noise",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "pategan" => Ok(GeneratorKind::PateGan),
            "memorize" => Ok(GeneratorKind::Memorize),
            "noise" => Ok(GeneratorKind::NoiseOnly),
            other => Err(Error::Config(format!(
                "unknown generator {other:?}; valid: [\"pategan\", \"memorize\", \"noise\"]"
            ))),
        }
    }
}

/// Which interval produces the rate upper bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    ClopperPearson,
    Bayesian,
}

impl IntervalMethod {
    pub fn name(&self) -> &'static str {
        match self {
            IntervalMethod::ClopperPearson => "clopper_pearson",
            IntervalMethod::Bayesian => "bayesian",
        }
    }
}

/// Full audit configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditConfig {
    pub attack: Attack,
    pub generator: GeneratorKind,
    pub preset_name: String,
    pub pategan: PateGanConfig,
    pub profile: FaultProfile,
    pub games_per_world: usize,
    /// (train, val, test) games per world; must sum to `games_per_world`.
    pub split: (usize, usize, usize),
    pub delta: f64,
    pub interval: IntervalMethod,
    pub confidence: f64,
    /// Synthetic rows per game; `None` means the training-set size.
    pub synth_rows: Option<usize>,
    pub claimed_epsilon: f64,
    pub workers: usize,
    pub seed: u64,
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.split;
        if a + b + c != self.games_per_world {
            return Err(Error::Config(format!(
                "split {:?} must sum to games_per_world {}",
                self.split, self.games_per_world
            )));
        }
        if a == 0 || b == 0 || c == 0 {
            return Err(Error::Config("every split segment needs at least one game".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Config("confidence must be in (0, 1)".into()));
        }
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return Err(Error::Config("delta must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Standard 40/20/40 split for a given game count.
    pub fn default_split(games_per_world: usize) -> (usize, usize, usize) {
        let train = games_per_world * 2 / 5;
        let val = games_per_world / 5;
        (train, val, games_per_world - train - val)
    }
}

/// One game per entry: the world bit is implicit in which vector the
/// features live in.
#[derive(Debug, Clone)]
pub struct GameTranscript {
    pub with_features: Vec<Vec<f64>>,
    pub without_features: Vec<Vec<f64>>,
}

/// Attack error rates on the test games plus their upper confidence bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatePair {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_upper: f64,
    pub beta_upper: f64,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub n_without: usize,
    pub n_with: usize,
}

/// Per-column min, max, mean, median, population standard deviation,
/// concatenated in column order.
pub fn featurize_naive(synthetic: &Dataset) -> Result<Vec<f64>> {
    if synthetic.is_empty() {
        return Err(Error::Data("cannot featurize an empty dataset".into()));
    }
    let n = synthetic.len() as f64;
    let mut features = Vec::with_capacity(5 * synthetic.width());
    for c in 0..synthetic.width() {
        let mut col = synthetic.column(c);
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let min = col[0];
        let max = col[col.len() - 1];
        let mean = col.iter().sum::<f64>() / n;
        let median = if col.len() % 2 == 1 {
            col[col.len() / 2]
        } else {
            (col[col.len() / 2 - 1] + col[col.len() / 2]) / 2.0
        };
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        features.extend_from_slice(&[min, max, mean, median, var.sqrt()]);
    }
    Ok(features)
}

/// The full binary domain of `d` columns in lexicographic order.
pub fn binary_domain(d: usize) -> Result<Vec<Vec<f64>>> {
    if d == 0 || d > 20 {
        return Err(Error::Config(format!("domain of width {d} not enumerable")));
    }
    Ok((0..1usize << d)
        .map(|bits| (0..d).map(|c| f64::from(bits >> (d - 1 - c) & 1 == 1)).collect())
        .collect())
}

/// Exact-match counts of every domain record in the synthetic data,
/// domain order.
pub fn featurize_queries(synthetic: &Dataset, domain: &[Vec<f64>]) -> Result<Vec<f64>> {
    if domain.is_empty() {
        return Err(Error::Config("empty query domain".into()));
    }
    if synthetic
        .meta
        .columns
        .iter()
        .any(|c| c.kind != ColumnKind::Binary)
    {
        return Err(Error::Data(
            "query featurization needs all-binary columns".into(),
        ));
    }
    let mut counts = vec![0.0; domain.len()];
    for row in &synthetic.rows {
        if let Some(pos) = domain.iter().position(|d| d == row) {
            counts[pos] += 1.0;
        }
    }
    Ok(counts)
}

fn featurize(attack: Attack, synthetic: &Dataset, domain: &[Vec<f64>]) -> Result<Vec<f64>> {
    match attack {
        Attack::Querybased => featurize_queries(synthetic, domain),
        Attack::Groundhog => featurize_naive(synthetic),
    }
}

fn noise_only_rows(template: &Dataset, n: usize, rng: &mut impl Rng) -> Result<Dataset> {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            template
                .meta
                .columns
                .iter()
                .map(|c| match c.kind {
                    ColumnKind::Binary => f64::from(rng.gen_bool(0.5)),
                    ColumnKind::Numerical => rng.gen(),
                })
                .collect()
        })
        .collect();
    Dataset::new(rows, std::sync::Arc::clone(&template.meta))
}

fn play_game(
    cfg: &AuditConfig,
    train_data: &Dataset,
    domain: &[Vec<f64>],
    world_tag: u64,
    index: u64,
) -> Result<Vec<f64>> {
    let game_seed = derive_seed(cfg.seed, &[world_tag, index]);
    let n_synth = cfg.synth_rows.unwrap_or(train_data.len());
    let synthetic = match cfg.generator {
        GeneratorKind::Memorize => train_data.clone(),
        GeneratorKind::NoiseOnly => {
            let mut rng = rng_from(game_seed, &[0x2015e]);
            noise_only_rows(train_data, n_synth, &mut rng)?
        }
        GeneratorKind::PateGan => {
            let mut train_cfg = cfg.pategan.clone();
            train_cfg.seed = game_seed;
            train_cfg.trace = false;
            let model = train(train_data, &train_cfg, &cfg.profile)?;
            let mut rng = rng_from(game_seed, &[0x5a3]);
            generate(&model, n_synth, &mut rng)?
        }
    };
    featurize(cfg.attack, &synthetic, domain)
}

/// Play all games. `data` must contain the target row at `target_index`;
/// the without-target world trains on the dataset minus that row.
pub fn run_games(cfg: &AuditConfig, data: &Dataset, target_index: usize) -> Result<GameTranscript> {
    cfg.validate()?;
    let without = data.without_row(target_index)?;
    let domain = match cfg.attack {
        Attack::Querybased => binary_domain(data.width())?,
        Attack::Groundhog => Vec::new(),
    };
    let g = cfg.games_per_world;
    let results: Vec<Result<Vec<f64>>> = map_indexed(2 * g, cfg.workers, |i| {
        let (world_tag, train_data, index) = if i < g {
            (1u64, data, i as u64)
        } else {
            (0u64, &without, (i - g) as u64)
        };
        play_game(cfg, train_data, &domain, world_tag, index)
    });
    let mut with_features = Vec::with_capacity(g);
    let mut without_features = Vec::with_capacity(g);
    for (i, r) in results.into_iter().enumerate() {
        let features = r?;
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("non-finite features in game {i}")));
        }
        if i < g {
            with_features.push(features);
        } else {
            without_features.push(features);
        }
    }
    Ok(GameTranscript {
        with_features,
        without_features,
    })
}

/// Plug-in estimate from raw rates; used only for threshold tuning.
fn plugin_eps(alpha: f64, beta: f64, delta: f64) -> f64 {
    let a = if beta > 0.0 {
        ((1.0 - alpha - delta) / beta).ln()
    } else if 1.0 - alpha - delta > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    let b = if alpha > 0.0 {
        ((1.0 - beta - delta) / alpha).ln()
    } else if 1.0 - beta - delta > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    a.max(b).max(0.0)
}

fn rates_at(
    threshold: f64,
    with_scores: &[f64],
    without_scores: &[f64],
) -> (usize, usize) {
    // prediction "with-target" when score >= threshold
    let false_negatives = with_scores.iter().filter(|&&s| s < threshold).count();
    let false_positives = without_scores.iter().filter(|&&s| s >= threshold).count();
    (false_positives, false_negatives)
}

/// Fit the attacker on the train split, tune the decision threshold on the
/// validation split (maximizing the plug-in estimate), and report test
/// rates with their upper bounds.
pub fn fit_and_evaluate(
    transcript: &GameTranscript,
    cfg: &AuditConfig,
    seed: u64,
) -> Result<RatePair> {
    let (n_train, n_val, n_test) = cfg.split;
    if transcript.with_features.len() != cfg.games_per_world
        || transcript.without_features.len() != cfg.games_per_world
    {
        return Err(Error::Shape("transcript size does not match config".into()));
    }
    let mut x = Vec::with_capacity(2 * n_train);
    let mut y = Vec::with_capacity(2 * n_train);
    for f in &transcript.with_features[..n_train] {
        x.push(f.clone());
        y.push(1.0);
    }
    for f in &transcript.without_features[..n_train] {
        x.push(f.clone());
        y.push(0.0);
    }
    let forest = fit(
        ClassifierKind::RandomForest,
        &x,
        &y,
        &ClassifierConfig::default(),
        seed,
    )?;

    let val_with = predict_scores(&forest, &transcript.with_features[n_train..n_train + n_val])?;
    let val_without =
        predict_scores(&forest, &transcript.without_features[n_train..n_train + n_val])?;

    // candidate thresholds: midpoints between adjacent distinct validation
    // scores, plus sentinels below and above everything
    let mut all: Vec<f64> = val_with.iter().chain(&val_without).copied().collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup();
    let mut candidates = vec![0.0];
    for w in all.windows(2) {
        candidates.push((w[0] + w[1]) / 2.0);
    }
    candidates.push(1.0 + 1e-9);
    if all.len() == 1 {
        candidates.push(all[0]);
    }

    let mut best_threshold = candidates[0];
    let mut best_value = f64::NEG_INFINITY;
    for &t in &candidates {
        let (fp, fn_) = rates_at(t, &val_with, &val_without);
        let value = plugin_eps(fp as f64 / n_val as f64, fn_ as f64 / n_val as f64, cfg.delta);
        if value > best_value {
            best_value = value;
            best_threshold = t;
        }
    }

    let test_with =
        predict_scores(&forest, &transcript.with_features[n_train + n_val..])?;
    let test_without =
        predict_scores(&forest, &transcript.without_features[n_train + n_val..])?;
    let (fp, fn_) = rates_at(best_threshold, &test_with, &test_without);
    let (alpha, beta) = (fp as f64 / n_test as f64, fn_ as f64 / n_test as f64);
    let (alpha_upper, beta_upper) = match cfg.interval {
        IntervalMethod::ClopperPearson => (
            cp_upper(fp, n_test, cfg.confidence)?,
            cp_upper(fn_, n_test, cfg.confidence)?,
        ),
        IntervalMethod::Bayesian => (
            bayes_upper(fp, n_test, cfg.confidence)?,
            bayes_upper(fn_, n_test, cfg.confidence)?,
        ),
    };
    Ok(RatePair {
        alpha,
        beta,
        alpha_upper,
        beta_upper,
        false_positives: fp,
        false_negatives: fn_,
        n_without: n_test,
        n_with: n_test,
    })
}

fn check_counts(errors: usize, trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    if errors > trials {
        return Err(Error::Config(format!("{errors} errors in {trials} trials")));
    }
    Ok(())
}

/// Beta quantile by bisecting the regularized-incomplete-beta CDF down to
/// machine resolution. The library's built-in inverse is far too coarse for
/// interval math.
fn beta_quantile(a: f64, b: f64, p: f64) -> Result<f64> {
    let dist = Beta::new(a, b).map_err(|e| Error::Config(e.to_string()))?;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if dist.cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Two-sided Clopper-Pearson upper bound at the given confidence: the
/// 1 - (1-confidence)/2 quantile of Beta(errors + 1, trials - errors).
pub fn cp_upper(errors: usize, trials: usize, confidence: f64) -> Result<f64> {
    check_counts(errors, trials)?;
    if errors == trials {
        return Ok(1.0);
    }
    let tail = (1.0 - confidence) / 2.0;
    beta_quantile((errors + 1) as f64, (trials - errors) as f64, 1.0 - tail)
}

/// One-sided Bayesian credible upper bound under a uniform prior: the
/// `credibility` quantile of the posterior Beta(errors + 1, trials - errors + 1).
/// `trials = 0` is allowed and yields the prior quantile.
pub fn bayes_upper(errors: usize, trials: usize, credibility: f64) -> Result<f64> {
    if trials != 0 {
        check_counts(errors, trials)?;
    } else if errors != 0 {
        return Err(Error::Config("errors without trials".into()));
    }
    beta_quantile((errors + 1) as f64, (trials - errors + 1) as f64, credibility)
}

/// Convert upper-bounded error rates into the empirical privacy estimate.
pub fn eps_emp(alpha_upper: f64, beta_upper: f64, delta: f64) -> Result<f64> {
    if !(alpha_upper > 0.0 && beta_upper > 0.0) {
        return Err(Error::Config(
            "rate upper bounds must be positive (missing interval flooring?)".into(),
        ));
    }
    if alpha_upper > 1.0 || beta_upper > 1.0 || !(0.0..1.0).contains(&delta) {
        return Err(Error::Config("rates must be in (0, 1], delta in [0, 1)".into()));
    }
    let a = ((1.0 - alpha_upper - delta) / beta_upper).ln();
    let b = ((1.0 - beta_upper - delta) / alpha_upper).ln();
    let mut out: f64 = 0.0;
    if a.is_finite() {
        out = out.max(a);
    }
    if b.is_finite() {
        out = out.max(b);
    }
    Ok(out)
}

/// Full audit report, serialized as the audit artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub attack: String,
    pub generator: String,
    pub preset: String,
    pub claimed_epsilon: f64,
    pub delta: f64,
    pub games_per_world: usize,
    pub split: (usize, usize, usize),
    pub alpha: f64,
    pub beta: f64,
    pub alpha_upper: f64,
    pub beta_upper: f64,
    pub interval_method: String,
    pub eps_emp: f64,
    pub violation: bool,
    /// The tracked budget is computed from clean vote tallies, so the
    /// estimate itself depends on the data.
    pub epsilon_is_data_dependent: bool,
    pub fault_profile: FaultProfile,
    pub rates: RatePair,
}

/// Run the whole pipeline: games, attack fit, bounds, estimate, verdict.
pub fn audit_pipeline(cfg: &AuditConfig, data: &Dataset, target_index: usize) -> Result<AuditReport> {
    let transcript = run_games(cfg, data, target_index)?;
    let rates = fit_and_evaluate(&transcript, cfg, derive_seed(cfg.seed, &[0xa77ac4]))?;
    let estimate = eps_emp(rates.alpha_upper, rates.beta_upper, cfg.delta)?;
    Ok(AuditReport {
        attack: cfg.attack.name().to_string(),
        generator: cfg.generator.name().to_string(),
        preset: cfg.preset_name.clone(),
        claimed_epsilon: cfg.claimed_epsilon,
        delta: cfg.delta,
        games_per_world: cfg.games_per_world,
        split: cfg.split,
        alpha: rates.alpha,
        beta: rates.beta,
        alpha_upper: rates.alpha_upper,
        beta_upper: rates.beta_upper,
        interval_method: cfg.interval.name().to_string(),
        eps_emp: estimate,
        violation: estimate > cfg.claimed_epsilon,
        epsilon_is_data_dependent: true,
        fault_profile: cfg.profile.clone(),
        rates,
    })
}

/// Attack AUC for a candidate target, from `n_games` cheap distinguishing
/// games split evenly into attacker train/eval halves. This is the oracle
/// [`crate::data::select_target`] expects.
pub fn mini_mia_auc(
    cfg: &AuditConfig,
    data: &Dataset,
    candidate: usize,
    n_games: usize,
    seed: u64,
) -> Result<f64> {
    let mut mini = cfg.clone();
    mini.seed = seed;
    mini.attack = Attack::Groundhog;
    mini.games_per_world = n_games;
    mini.split = (n_games / 2, 1, n_games - n_games / 2 - 1);
    let transcript = run_games(&mini, data, candidate)?;
    let half = n_games / 2;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for f in &transcript.with_features[..half] {
        x.push(f.clone());
        y.push(1.0);
    }
    for f in &transcript.without_features[..half] {
        x.push(f.clone());
        y.push(0.0);
    }
    let forest = fit(
        ClassifierKind::RandomForest,
        &x,
        &y,
        &ClassifierConfig::default(),
        seed,
    )?;
    let mut eval_scores = predict_scores(&forest, &transcript.with_features[half..])?;
    let mut eval_labels = vec![1.0; eval_scores.len()];
    let without_scores = predict_scores(&forest, &transcript.without_features[half..])?;
    eval_labels.extend(vec![0.0; without_scores.len()]);
    eval_scores.extend(without_scores);
    auroc(&eval_labels, &eval_scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_worstcase;
    use std::sync::Arc;

    fn worstcase_with_target() -> (Dataset, usize) {
        let (ds, target) = build_worstcase(4).unwrap();
        let mut rows = ds.rows.clone();
        rows.push(target);
        let data = Dataset::new(rows, Arc::clone(&ds.meta)).unwrap();
        let idx = data.len() - 1;
        (data, idx)
    }

    fn memorize_cfg(games: usize) -> AuditConfig {
        let (pategan, profile) = crate::presets::preset_config(crate::presets::Preset::Faithful, 3, 5);
        AuditConfig {
            attack: Attack::Querybased,
            generator: GeneratorKind::Memorize,
            preset_name: "memorize".into(),
            pategan,
            profile,
            games_per_world: games,
            split: AuditConfig::default_split(games),
            delta: 1e-5,
            interval: IntervalMethod::ClopperPearson,
            confidence: 0.95,
            synth_rows: None,
            claimed_epsilon: 1.0,
            workers: 1,
            seed: 7,
        }
    }

    #[test]
    fn naive_features_hand_computed() {
        let (ds, _) = build_worstcase(4).unwrap();
        let f = featurize_naive(&ds).unwrap();
        assert_eq!(f, vec![0.0; 15]);

        let meta = ds.meta.clone();
        let rows = vec![
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ];
        let ds5 = Dataset::new(rows, meta).unwrap();
        let f = featurize_naive(&ds5).unwrap();
        // first column [0,0,0,0,1]: min 0, max 1, mean 0.2, median 0, std 0.4
        assert_eq!(&f[..5], &[0.0, 1.0, 0.2, 0.0, 0.4]);
    }

    #[test]
    fn naive_features_two_point_column() {
        let (ds, _) = build_worstcase(1).unwrap();
        let rows = vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]];
        let ds2 = Dataset::new(rows, ds.meta.clone()).unwrap();
        let f = featurize_naive(&ds2).unwrap();
        assert_eq!(&f[..5], &[0.0, 1.0, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn query_features_worstcase_and_identity() {
        let (ds, _) = build_worstcase(4).unwrap();
        let domain = binary_domain(3).unwrap();
        assert_eq!(domain.len(), 8);
        let counts = featurize_queries(&ds, &domain).unwrap();
        assert_eq!(counts, vec![4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        let one_each = Dataset::new(domain.clone(), ds.meta.clone()).unwrap();
        let counts = featurize_queries(&one_each, &domain).unwrap();
        assert_eq!(counts, vec![1.0; 8]);
        assert_eq!(counts.iter().sum::<f64>() as usize, one_each.len());
    }

    #[test]
    fn cp_upper_known_values() {
        assert!((cp_upper(0, 1, 0.95).unwrap() - 0.975).abs() < 1e-9);
        let v = cp_upper(0, 400, 0.95).unwrap();
        let exact = 1.0 - 0.025f64.powf(1.0 / 400.0);
        assert!((v - exact).abs() < 1e-9, "{v} vs {exact}");
        assert!((v - 0.009180).abs() < 1e-6);
        assert_eq!(cp_upper(7, 7, 0.95).unwrap(), 1.0);
    }

    #[test]
    fn bayes_upper_known_values() {
        assert!((bayes_upper(0, 0, 0.95).unwrap() - 0.95).abs() < 1e-9);
        let v = bayes_upper(0, 400, 0.95).unwrap();
        let exact = 1.0 - 0.05f64.powf(1.0 / 401.0);
        assert!((v - exact).abs() < 1e-9, "{v} vs {exact}");
        assert!((v - 0.007443).abs() < 1e-6);
        // tighter than the two-sided bound at zero errors
        assert!(v < cp_upper(0, 400, 0.95).unwrap());
    }

    #[test]
    fn eps_emp_known_values() {
        assert_eq!(eps_emp(0.5, 0.5, 1e-5).unwrap(), 0.0);
        let v = eps_emp(0.1, 0.1, 0.0).unwrap();
        assert!((v - 9.0f64.ln()).abs() < 1e-12);
        let cap = eps_emp(0.009180, 0.009180, 1e-5).unwrap();
        assert!((cap - 4.681).abs() < 1e-3, "{cap}");
        assert!(eps_emp(0.0, 0.5, 1e-5).is_err());
    }

    #[test]
    fn eps_emp_monotone_in_bounds() {
        let base = eps_emp(0.05, 0.05, 1e-5).unwrap();
        assert!(eps_emp(0.06, 0.05, 1e-5).unwrap() <= base);
        assert!(eps_emp(0.05, 0.06, 1e-5).unwrap() <= base);
        assert!(base > 0.0);
    }

    #[test]
    fn memorizing_generator_hits_cp_cap() {
        let (data, target) = worstcase_with_target();
        let cfg = memorize_cfg(50);
        let report = audit_pipeline(&cfg, &data, target).unwrap();
        // perfect separation: zero errors in 20 test games per world
        assert_eq!(report.rates.false_positives, 0);
        assert_eq!(report.rates.false_negatives, 0);
        let cap = eps_emp(
            cp_upper(0, 20, 0.95).unwrap(),
            cp_upper(0, 20, 0.95).unwrap(),
            1e-5,
        )
        .unwrap();
        assert!((report.eps_emp - cap).abs() < 1e-12);
        assert!(report.violation);
    }

    #[test]
    fn transcript_counts_and_determinism() {
        let (data, target) = worstcase_with_target();
        let cfg = memorize_cfg(10);
        let t1 = run_games(&cfg, &data, target).unwrap();
        let t2 = run_games(&cfg, &data, target).unwrap();
        assert_eq!(t1.with_features.len(), 10);
        assert_eq!(t1.without_features.len(), 10);
        assert_eq!(t1.with_features, t2.with_features);
        assert_eq!(t1.without_features, t2.without_features);
        // leave-one-out: with-world memorized output has one more row
        let sum_with: f64 = t1.with_features[0].iter().sum();
        let sum_without: f64 = t1.without_features[0].iter().sum();
        assert_eq!(sum_with - sum_without, 1.0);
    }

    #[test]
    fn parallel_games_match_serial() {
        let (data, target) = worstcase_with_target();
        let mut cfg = memorize_cfg(10);
        cfg.generator = GeneratorKind::NoiseOnly;
        let serial = run_games(&cfg, &data, target).unwrap();
        cfg.workers = 4;
        let parallel = run_games(&cfg, &data, target).unwrap();
        assert_eq!(serial.with_features, parallel.with_features);
        assert_eq!(serial.without_features, parallel.without_features);
    }

    #[test]
    fn noise_generator_scores_near_chance() {
        let (data, target) = worstcase_with_target();
        let mut cfg = memorize_cfg(60);
        cfg.generator = GeneratorKind::NoiseOnly;
        cfg.synth_rows = Some(20);
        let report = audit_pipeline(&cfg, &data, target).unwrap();
        // nothing to distinguish: the estimate must stay small
        assert!(report.eps_emp < 1.5, "eps_emp {}", report.eps_emp);
    }

    #[test]
    fn split_must_sum() {
        let mut cfg = memorize_cfg(10);
        cfg.split = (5, 2, 2);
        assert!(cfg.validate().is_err());
    }
}
