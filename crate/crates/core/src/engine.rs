//! The teacher/student GAN training loop with budget-gated termination.
//!
//! One outer iteration runs (a) `teacher_iters` rounds of teacher updates on
//! partition-real vs generated-fake batches, (b) `student_iters` rounds in
//! which a generated batch is labeled by noisy teacher votes, the accountant
//! is charged, and the student trains on the noisy labels, then (c)
//! `generator_iters` generator updates against the frozen student. Training
//! stops when the tracked budget would exceed `epsilon_budget` or at
//! `max_iters`.
//!
//! The faithful profile uses a pre-check: the accountant charge for a batch
//! is simulated first and the batch is discarded (labels unused) if it would
//! cross the budget, so the reported spend never exceeds the budget. Fault
//! profiles follow the codebases they model and check only between
//! iterations, overshooting by up to one iteration.
//!
//! With `pate_enabled = false` there is no ensemble and no accounting: a
//! single discriminator sees all the data, its target labels perturbed by
//! the profile's noise convention, and training stops only at `max_iters`.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::{fit_logreg, LogisticModel};
use crate::data::{partition_teachers, ColumnKind, Dataset, Metadata, PartitionMode};
use crate::dp::{
    gaussian_mechanism_sigma, gaussian_sample, laplace_sample, pate_aggregate, AccountantFault,
    AccountantMode, AccountantTraceRecord, DeltaScaleFault, MomentsAccountant, NoiseConvention,
    VoteTally,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{
    bce_loss, HiddenActivation, Mlp, OptimizerKind, OptimizerState, OutputActivation, BCE_CLIP,
};
use crate::rng::rng_from;

/// How often the accountant is charged during the student phase.
///
/// `PerSample` charges one update per aggregated vote set (one query per
/// generated record, the per-query default). `PerBatch` charges a single
/// update per student batch at the batch's largest q (smallest vote gap);
/// some of the modeled codebases spend at this much slower rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountingGranularity {
    PerSample,
    PerBatch,
}

/// What the teachers are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherModel {
    Mlp,
    /// Logistic-regression teachers refit from scratch (full-batch Newton to
    /// tolerance 1e-8 or 100 steps) on every outer iteration.
    Logreg,
}

/// Training hyperparameters. Width lists run hidden..output; the input
/// width (noise for the generator, data width for discriminators) is
/// implied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PateGanConfig {
    pub epsilon_budget: f64,
    pub delta: f64,
    pub lambda: f64,
    pub teachers: usize,
    pub teacher_iters: usize,
    pub student_iters: usize,
    pub generator_iters: usize,
    pub batch: usize,
    pub max_iters: usize,
    pub noise_dim: usize,
    pub generator_widths: Vec<usize>,
    pub teacher_widths: Vec<usize>,
    pub student_widths: Vec<usize>,
    /// Number of tracked moments (L).
    pub moments: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub accounting: AccountingGranularity,
    pub accountant_mode: AccountantMode,
    /// Use the saturating generator loss log(1 - S(G(z))) instead of the
    /// default non-saturating -log S(G(z)).
    pub literal_generator_loss: bool,
    pub trace: bool,
    pub seed: u64,
}

impl PateGanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_budget > 0.0) {
            return Err(Error::Config("epsilon budget must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config("delta must be in (0, 1)".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if self.teachers < 1 || self.batch < 1 || self.max_iters < 1 || self.moments < 1 {
            return Err(Error::Config(
                "teachers, batch, max_iters and moments must all be at least 1".into(),
            ));
        }
        if self.noise_dim < 1 {
            return Err(Error::Config("noise dimension must be at least 1".into()));
        }
        Ok(())
    }
}

/// The switchboard of injected deviations. The default profile is faithful:
/// every fault off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultProfile {
    pub pate_enabled: bool,
    pub partition_mode: PartitionMode,
    pub teacher_model: TeacherModel,
    pub noise_convention: NoiseConvention,
    pub accountant_fault: AccountantFault,
    pub delta_scale_fault: DeltaScaleFault,
    pub label_conditioning: bool,
}

impl Default for FaultProfile {
    fn default() -> Self {
        FaultProfile {
            pate_enabled: true,
            partition_mode: PartitionMode::Disjoint,
            teacher_model: TeacherModel::Mlp,
            noise_convention: NoiseConvention::LapInvLambda,
            accountant_fault: AccountantFault::None,
            delta_scale_fault: DeltaScaleFault::None,
            label_conditioning: false,
        }
    }
}

impl FaultProfile {
    /// True when every fault is off and the ensemble path is active; this is
    /// the profile that gets the strict budget pre-check.
    pub fn is_faithful(&self) -> bool {
        self == &FaultProfile::default()
    }
}

/// Teacher parameters carried by a trained model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TeacherSet {
    Mlp(Vec<Mlp>),
    Logreg(Vec<LogisticModel>),
    /// No ensemble: the `student` field holds the single discriminator.
    None,
}

/// Per-iteration training instrumentation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Cumulative distinct records seen by each teacher, one row per
    /// iteration.
    pub teachers_seen: Vec<Vec<usize>>,
    /// (teacher 1 cross-entropy on its first-seen subset, mean of the other
    /// teachers on that same subset), one entry per iteration.
    pub teacher_loss: Vec<(f64, f64)>,
    /// Accountant snapshot per iteration.
    pub moments: Vec<AccountantTraceRecord>,
    /// Full tally stream, for replay.
    pub tallies: Vec<VoteTally>,
    /// Number of tallies committed up to and including each iteration.
    pub tallies_per_iter: Vec<usize>,
}

impl TrainingTrace {
    /// Write the three trace streams as JSON lines files with the given
    /// path prefix.
    pub fn export(&self, prefix: &Path) -> Result<Vec<std::path::PathBuf>> {
        let base = prefix.to_string_lossy();
        let seen_path = std::path::PathBuf::from(format!("{base}.teachers_seen.jsonl"));
        let loss_path = std::path::PathBuf::from(format!("{base}.teacher_loss.jsonl"));
        let moments_path = std::path::PathBuf::from(format!("{base}.moments.jsonl"));
        let mut seen = std::fs::File::create(&seen_path)?;
        for (i, counts) in self.teachers_seen.iter().enumerate() {
            writeln!(
                seen,
                "{}",
                serde_json::json!({ "iter": i + 1, "distinct_seen": counts })
            )?;
        }
        let mut loss = std::fs::File::create(&loss_path)?;
        for (i, (first, others)) in self.teacher_loss.iter().enumerate() {
            writeln!(
                loss,
                "{}",
                serde_json::json!({ "iter": i + 1, "teacher_1": first, "others_mean": others })
            )?;
        }
        let mut moments = std::fs::File::create(&moments_path)?;
        for rec in &self.moments {
            writeln!(moments, "{}", serde_json::to_string(rec)?)?;
        }
        Ok(vec![seen_path, loss_path, moments_path])
    }
}

/// A trained generator with everything needed to sample from it, audit it,
/// and reproduce it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PateGanModel {
    pub version: u32,
    pub generator: Mlp,
    pub teachers: TeacherSet,
    pub student: Mlp,
    pub accountant: MomentsAccountant,
    pub meta: Metadata,
    pub config: PateGanConfig,
    pub profile: FaultProfile,
    pub label_positives: usize,
    pub train_rows: usize,
    pub iterations_run: usize,
    pub budget_exhausted: bool,
    /// Budget estimate at the end of training; zero if no vote aggregation
    /// was ever charged. Data dependent: computed from clean vote tallies.
    pub reported_epsilon: f64,
    #[serde(skip)]
    pub trace: Option<TrainingTrace>,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

impl PateGanModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: PateGanModel = serde_json::from_str(text)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::Serde(format!(
                "unsupported model format version {}",
                model.version
            )));
        }
        Ok(model)
    }
}

struct NetTrainer {
    net: Mlp,
    opt: OptimizerState,
}

impl NetTrainer {
    fn new(
        widths: Vec<usize>,
        output: OutputActivation,
        cfg: &PateGanConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let net = Mlp::new(widths, HiddenActivation::Relu, output, rng)?;
        let opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate, &net);
        Ok(NetTrainer { net, opt })
    }

    /// One BCE step on (inputs, targets).
    fn bce_step(&mut self, inputs: &Matrix, targets: &[f64]) -> Result<f64> {
        let (out, cache) = self.net.forward(inputs)?;
        let (loss, grad) = bce_loss(&out.data, targets)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("discriminator loss {loss}")));
        }
        let gm = Matrix::from_vec(out.rows, out.cols, grad)?;
        let (grads, _) = self.net.backward(&cache, &gm)?;
        self.opt.apply(&mut self.net, &grads)?;
        Ok(loss)
    }
}

/// One generator update against the frozen student. Taking only the
/// generator and the student keeps the post-processing structure honest:
/// teacher parameters cannot reach this computation.
fn generator_step(
    gen: &mut NetTrainer,
    student: &Mlp,
    z: &Matrix,
    literal_loss: bool,
) -> Result<f64> {
    let (x, gen_cache) = gen.net.forward(z)?;
    let (scores, student_cache) = student.forward(&x)?;
    let n = scores.data.len() as f64;
    let mut loss = 0.0;
    let grad: Vec<f64> = scores
        .data
        .iter()
        .map(|&raw| {
            let s = raw.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
            if literal_loss {
                loss += (1.0 - s).ln();
                1.0 / (1.0 - s) / n
            } else {
                loss += -s.ln();
                -1.0 / s / n
            }
        })
        .collect();
    let gm = Matrix::from_vec(scores.rows, scores.cols, grad)?;
    let (_, input_grad) = student.backward(&student_cache, &gm)?;
    let (gen_grads, _) = gen.net.backward(&gen_cache, &input_grad)?;
    gen.opt.apply(&mut gen.net, &gen_grads)?;
    Ok(loss / n)
}

fn sample_noise(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, dim);
    for v in m.data.iter_mut() {
        *v = rng.gen::<f64>();
    }
    m
}

fn rows_matrix(ds: &Dataset, indices: &[usize]) -> Matrix {
    let d = ds.width();
    let mut m = Matrix::zeros(indices.len(), d);
    for (r, &i) in indices.iter().enumerate() {
        m.data[r * d..(r + 1) * d].copy_from_slice(&ds.rows[i]);
    }
    m
}

fn stack(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.cols);
    let mut data = Vec::with_capacity((a.rows + b.rows) * a.cols);
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Matrix {
        rows: a.rows + b.rows,
        cols: a.cols,
        data,
    }
}

enum Teachers {
    Mlp(Vec<NetTrainer>),
    Logreg(Vec<Option<LogisticModel>>),
}

impl Teachers {
    /// Per-teacher score vectors for a whole batch (k × batch rows).
    fn batch_scores(&self, batch: &Matrix) -> Result<Vec<Vec<f64>>> {
        match self {
            Teachers::Mlp(nets) => nets
                .iter()
                .map(|t| Ok(t.net.predict(batch)?.data))
                .collect(),
            Teachers::Logreg(models) => models
                .iter()
                .map(|m| {
                    let m = m
                        .as_ref()
                        .ok_or_else(|| Error::Config("teacher queried before first fit".into()))?;
                    Ok((0..batch.rows).map(|r| m.score(batch.row(r))).collect())
                })
                .collect(),
        }
    }

    /// Mean BCE of teacher `t` on `rows` labeled as real.
    fn cross_entropy(&self, t: usize, rows: &Matrix) -> Result<f64> {
        let ones = vec![1.0; rows.rows];
        let preds = match self {
            Teachers::Mlp(nets) => nets[t].net.predict(rows)?.data,
            Teachers::Logreg(models) => {
                let model = models[t]
                    .as_ref()
                    .ok_or_else(|| Error::Config("teacher loss before first fit".into()))?;
                (0..rows.rows).map(|r| model.score(rows.row(r))).collect()
            }
        };
        Ok(bce_loss(&preds, &ones)?.0)
    }

    fn count(&self) -> usize {
        match self {
            Teachers::Mlp(nets) => nets.len(),
            Teachers::Logreg(models) => models.len(),
        }
    }
}

/// Train a generator on `data`, which must already be scaled to [0, 1].
pub fn train(data: &Dataset, cfg: &PateGanConfig, profile: &FaultProfile) -> Result<PateGanModel> {
    cfg.validate()?;
    let d = data.width();
    if data
        .rows
        .iter()
        .flatten()
        .any(|&v| !(0.0..=1.0).contains(&v))
    {
        return Err(Error::Data("training data must be scaled to [0, 1]".into()));
    }
    if profile.pate_enabled && cfg.teachers > data.len() {
        return Err(Error::Config(format!(
            "{} teachers cannot partition {} rows",
            cfg.teachers,
            data.len()
        )));
    }

    let label_positives = data
        .rows
        .iter()
        .filter(|r| r[data.meta.label_index] > 0.5)
        .count();

    let mut rng = rng_from(cfg.seed, &[0x90de1]);
    let gen_widths = [vec![cfg.noise_dim], cfg.generator_widths.clone()].concat();
    let mut generator = NetTrainer::new(gen_widths, OutputActivation::Sigmoid, cfg, &mut rng)?;
    let student_widths = [vec![d], cfg.student_widths.clone()].concat();
    let mut student = NetTrainer::new(student_widths, OutputActivation::Sigmoid, cfg, &mut rng)?;

    let mut accountant = MomentsAccountant::new(
        cfg.lambda,
        cfg.moments,
        cfg.delta,
        cfg.accountant_mode,
        profile.accountant_fault,
    )?;
    let mut trace = cfg.trace.then(TrainingTrace::default);

    let outcome = if profile.pate_enabled {
        train_with_ensemble(
            data,
            cfg,
            profile,
            &mut generator,
            &mut student,
            &mut accountant,
            &mut trace,
            &mut rng,
        )?
    } else {
        train_single_discriminator(data, cfg, profile, &mut generator, &mut student, &mut rng)?
    };

    let reported_epsilon = if accountant.updates() > 0 {
        accountant.epsilon()
    } else {
        0.0
    };
    Ok(PateGanModel {
        version: MODEL_FORMAT_VERSION,
        generator: generator.net,
        teachers: outcome.teachers,
        student: student.net,
        accountant,
        meta: (*data.meta).clone(),
        config: cfg.clone(),
        profile: profile.clone(),
        label_positives,
        train_rows: data.len(),
        iterations_run: outcome.iterations_run,
        budget_exhausted: outcome.budget_exhausted,
        reported_epsilon,
        trace,
    })
}

struct LoopOutcome {
    teachers: TeacherSet,
    iterations_run: usize,
    budget_exhausted: bool,
}

#[allow(clippy::too_many_arguments)]
fn train_with_ensemble(
    data: &Dataset,
    cfg: &PateGanConfig,
    profile: &FaultProfile,
    generator: &mut NetTrainer,
    student: &mut NetTrainer,
    accountant: &mut MomentsAccountant,
    trace: &mut Option<TrainingTrace>,
    rng: &mut ChaCha8Rng,
) -> Result<LoopOutcome> {
    let d = data.width();
    let k = cfg.teachers;
    let partition = partition_teachers(data, k, profile.partition_mode, cfg.seed)?;

    let mut teachers = match profile.teacher_model {
        TeacherModel::Mlp => {
            let widths = [vec![d], cfg.teacher_widths.clone()].concat();
            let nets: Result<Vec<NetTrainer>> = (0..k)
                .map(|_| NetTrainer::new(widths.clone(), OutputActivation::Sigmoid, cfg, rng))
                .collect();
            Teachers::Mlp(nets?)
        }
        TeacherModel::Logreg => Teachers::Logreg(vec![None; k]),
    };

    let faithful = profile.is_faithful();
    let mut seen: Vec<HashSet<usize>> = vec![HashSet::new(); k];
    let mut first_seen_rows: Option<Matrix> = None;
    let mut iterations_run = 0;
    let mut budget_exhausted = false;

    'outer: for _iter in 0..cfg.max_iters {
        // (a) teacher phase
        for _round in 0..cfg.teacher_iters {
            let z = sample_noise(cfg.batch, cfg.noise_dim, rng);
            let fake = generator.net.predict(&z)?;
            // the modeled indexing bug feeds every teacher the same batch
            let shared = (profile.partition_mode == PartitionMode::AllLast)
                .then(|| partition.sample_batch(0, cfg.batch, rng));
            for t in 0..k {
                match &mut teachers {
                    Teachers::Mlp(nets) => {
                        let idx = match &shared {
                            Some(s) => s.clone(),
                            None => partition.sample_batch(t, cfg.batch, rng),
                        };
                        seen[t].extend(idx.iter().copied());
                        let real = rows_matrix(data, &idx);
                        let inputs = stack(&real, &fake);
                        let mut targets = vec![1.0; cfg.batch];
                        targets.extend(vec![0.0; cfg.batch]);
                        nets[t].bce_step(&inputs, &targets)?;
                    }
                    Teachers::Logreg(models) => {
                        // full-batch refit from scratch on the teacher's view
                        let idx: Vec<usize> = match partition.fixed_view(t) {
                            Some(view) => view.to_vec(),
                            None => partition.sample_batch(t, cfg.batch, rng),
                        };
                        seen[t].extend(idx.iter().copied());
                        let mut x: Vec<Vec<f64>> =
                            idx.iter().map(|&i| data.rows[i].clone()).collect();
                        let mut y = vec![1.0; x.len()];
                        for r in 0..fake.rows {
                            x.push(fake.row(r).to_vec());
                            y.push(0.0);
                        }
                        models[t] = Some(fit_logreg(&x, &y)?);
                    }
                }
            }
        }
        if first_seen_rows.is_none() {
            let mut first: Vec<usize> = seen[0].iter().copied().collect();
            first.sort_unstable();
            if !first.is_empty() {
                first_seen_rows = Some(rows_matrix(data, &first));
            }
        }

        // (b) student phase
        for _round in 0..cfg.student_iters {
            let z = sample_noise(cfg.batch, cfg.noise_dim, rng);
            let synth = generator.net.predict(&z)?;
            let teacher_scores = teachers.batch_scores(&synth)?;
            let mut labels = Vec::with_capacity(cfg.batch);
            let mut tallies = Vec::with_capacity(cfg.batch);
            for r in 0..synth.rows {
                let votes: Vec<bool> = teacher_scores.iter().map(|s| s[r] > 0.5).collect();
                let (label, tally) =
                    pate_aggregate(&votes, cfg.lambda, profile.noise_convention, rng)?;
                labels.push(f64::from(label));
                tallies.push(tally);
            }
            let charges: Vec<VoteTally> = match cfg.accounting {
                AccountingGranularity::PerSample => tallies.clone(),
                AccountingGranularity::PerBatch => {
                    let min_gap = tallies.iter().map(VoteTally::gap).min().unwrap_or(0);
                    vec![*tallies
                        .iter()
                        .find(|t| t.gap() == min_gap)
                        .expect("non-empty batch")]
                }
            };
            if faithful {
                let would_be = accountant.epsilon_after(&charges)?;
                if would_be > cfg.epsilon_budget {
                    budget_exhausted = true;
                    break 'outer;
                }
            }
            for &t in &charges {
                accountant.update(t)?;
            }
            if let Some(tr) = trace.as_mut() {
                tr.tallies.extend_from_slice(&charges);
            }
            student.bce_step(&synth, &labels)?;
        }

        // (c) generator phase
        for _round in 0..cfg.generator_iters {
            let z = sample_noise(cfg.batch, cfg.noise_dim, rng);
            generator_step(generator, &student.net, &z, cfg.literal_generator_loss)?;
        }

        iterations_run += 1;
        if let Some(tr) = trace.as_mut() {
            tr.teachers_seen.push(seen.iter().map(HashSet::len).collect());
            let (first, others) = match &first_seen_rows {
                Some(rows) => {
                    let first = teachers.cross_entropy(0, rows)?;
                    let mut sum = 0.0;
                    for t in 1..teachers.count() {
                        sum += teachers.cross_entropy(t, rows)?;
                    }
                    let others = if teachers.count() > 1 {
                        sum / (teachers.count() - 1) as f64
                    } else {
                        first
                    };
                    (first, others)
                }
                None => (f64::NAN, f64::NAN),
            };
            tr.teacher_loss.push((first, others));
            tr.moments.push(AccountantTraceRecord {
                iter: iterations_run,
                alpha: accountant.alpha().to_vec(),
                epsilon_hat: accountant.epsilon(),
            });
            tr.tallies_per_iter.push(tr.tallies.len());
        }

        // fault presets check between iterations and overshoot by at most one
        if !faithful && accountant.updates() > 0 && accountant.epsilon() >= cfg.epsilon_budget {
            budget_exhausted = true;
            break;
        }
    }

    let teacher_set = match teachers {
        Teachers::Mlp(nets) => TeacherSet::Mlp(nets.into_iter().map(|t| t.net).collect()),
        Teachers::Logreg(models) => TeacherSet::Logreg(models.into_iter().flatten().collect()),
    };
    Ok(LoopOutcome {
        teachers: teacher_set,
        iterations_run,
        budget_exhausted,
    })
}

fn train_single_discriminator(
    data: &Dataset,
    cfg: &PateGanConfig,
    profile: &FaultProfile,
    generator: &mut NetTrainer,
    discriminator: &mut NetTrainer,
    rng: &mut ChaCha8Rng,
) -> Result<LoopOutcome> {
    let noise_scale = match profile.noise_convention {
        NoiseConvention::Gaussian => {
            gaussian_mechanism_sigma(cfg.epsilon_budget, cfg.delta, profile.delta_scale_fault)?
        }
        other => other.scale(cfg.lambda),
    };
    for _iter in 0..cfg.max_iters {
        for _round in 0..cfg.student_iters {
            let idx: Vec<usize> = (0..cfg.batch).map(|_| rng.gen_range(0..data.len())).collect();
            let real = rows_matrix(data, &idx);
            let z = sample_noise(cfg.batch, cfg.noise_dim, rng);
            let fake = generator.net.predict(&z)?;
            let inputs = stack(&real, &fake);
            let mut targets = Vec::with_capacity(2 * cfg.batch);
            for base in [1.0, 0.0] {
                for _ in 0..cfg.batch {
                    let noise = match profile.noise_convention {
                        NoiseConvention::Gaussian => gaussian_sample(noise_scale, rng)?,
                        _ => laplace_sample(noise_scale, rng)?,
                    };
                    targets.push((base + noise).clamp(0.0, 1.0));
                }
            }
            discriminator.bce_step(&inputs, &targets)?;
        }
        for _round in 0..cfg.generator_iters {
            let z = sample_noise(cfg.batch, cfg.noise_dim, rng);
            generator_step(generator, &discriminator.net, &z, cfg.literal_generator_loss)?;
        }
    }
    Ok(LoopOutcome {
        teachers: TeacherSet::None,
        iterations_run: cfg.max_iters,
        budget_exhausted: false,
    })
}

/// Sample `n` synthetic rows in the scaled [0, 1] space. Binary columns are
/// thresholded at 0.5. With `label_conditioning` the label column is
/// overwritten so that positive counts match the training frequency exactly
/// (rows with the highest raw label scores become positive).
pub fn generate(model: &PateGanModel, n: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    if n < 1 {
        return Err(Error::Config("need at least one synthetic row".into()));
    }
    let z = sample_noise(n, model.config.noise_dim, rng);
    let raw = model.generator.predict(&z)?;
    let d = model.meta.width();
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            (0..d)
                .map(|c| {
                    let v = raw.get(r, c);
                    match model.meta.columns[c].kind {
                        ColumnKind::Binary => f64::from(v > 0.5),
                        ColumnKind::Numerical => v.clamp(0.0, 1.0),
                    }
                })
                .collect()
        })
        .collect();
    if model.profile.label_conditioning {
        let li = model.meta.label_index;
        let target_pos =
            ((model.label_positives as f64 / model.train_rows as f64) * n as f64).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            raw.get(b, li)
                .partial_cmp(&raw.get(a, li))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for (rank, &r) in order.iter().enumerate() {
            rows[r][li] = f64::from(rank < target_pos);
        }
    }
    Dataset::new(rows, std::sync::Arc::new(model.meta.clone()))
}

/// Convenience wrapper deriving the generation RNG from a seed.
pub fn generate_seeded(model: &PateGanModel, n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = rng_from(seed, &[0x9e4]);
    generate(model, n, &mut rng)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::data::{BoundsProvenance, ColumnSpec};
    use std::sync::Arc;

    pub fn tiny_config(seed: u64) -> PateGanConfig {
        PateGanConfig {
            epsilon_budget: 1e9,
            delta: 1e-5,
            lambda: 1e-3,
            teachers: 2,
            teacher_iters: 1,
            student_iters: 1,
            generator_iters: 1,
            batch: 8,
            max_iters: 5,
            noise_dim: 2,
            generator_widths: vec![4, 3],
            teacher_widths: vec![3, 1],
            student_widths: vec![3, 1],
            moments: 20,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            accounting: AccountingGranularity::PerSample,
            accountant_mode: AccountantMode::PateGan,
            literal_generator_loss: false,
            trace: false,
            seed,
        }
    }

    pub fn tiny_data(n: usize) -> Dataset {
        let meta = Arc::new(
            Metadata::new(
                vec![
                    ColumnSpec::numerical("x", 0.0, 1.0),
                    ColumnSpec::binary("b"),
                    ColumnSpec::binary("y"),
                ],
                2,
                BoundsProvenance::Public,
            )
            .unwrap(),
        );
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                vec![
                    (i % 10) as f64 / 10.0,
                    f64::from(i % 2 == 0),
                    f64::from(i % 3 == 0),
                ]
            })
            .collect();
        Dataset::new(rows, meta).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::{tiny_config, tiny_data};
    use super::*;
    use crate::data::{BoundsProvenance, ColumnSpec};
    use std::sync::Arc;

    #[test]
    fn training_is_deterministic() {
        let data = tiny_data(20);
        let cfg = tiny_config(11);
        let profile = FaultProfile::default();
        let a = train(&data, &cfg, &profile).unwrap();
        let b = train(&data, &cfg, &profile).unwrap();
        assert_eq!(a.generator, b.generator);
        assert_eq!(a.student, b.student);
        assert_eq!(a.reported_epsilon.to_bits(), b.reported_epsilon.to_bits());
    }

    #[test]
    fn max_iters_cap_respected() {
        let data = tiny_data(20);
        let mut cfg = tiny_config(3);
        cfg.max_iters = 10;
        let model = train(&data, &cfg, &FaultProfile::default()).unwrap();
        assert_eq!(model.iterations_run, 10);
        assert!(!model.budget_exhausted);
    }

    #[test]
    fn faithful_budget_never_exceeded() {
        let data = tiny_data(30);
        let mut cfg = tiny_config(5);
        cfg.epsilon_budget = 0.7;
        cfg.lambda = 1.0; // heavy spend so the budget binds quickly
        cfg.max_iters = 50;
        let model = train(&data, &cfg, &FaultProfile::default()).unwrap();
        assert!(model.budget_exhausted);
        assert!(
            model.reported_epsilon <= 0.7,
            "reported {} > budget",
            model.reported_epsilon
        );
    }

    #[test]
    fn budget_exhausted_before_first_commit_reports_zero() {
        let data = tiny_data(20);
        let mut cfg = tiny_config(5);
        // budget below the accountant floor ln(1e5)/20 = 0.576
        cfg.epsilon_budget = 0.01;
        cfg.lambda = 1.0;
        let model = train(&data, &cfg, &FaultProfile::default()).unwrap();
        assert!(model.budget_exhausted);
        assert_eq!(model.iterations_run, 0);
        assert_eq!(model.reported_epsilon, 0.0);
    }

    #[test]
    fn generate_shapes_and_binary_domain() {
        let data = tiny_data(20);
        let cfg = tiny_config(7);
        let model = train(&data, &cfg, &FaultProfile::default()).unwrap();
        let synth = generate_seeded(&model, 5, 99).unwrap();
        assert_eq!(synth.len(), 5);
        assert_eq!(synth.width(), 3);
        for row in &synth.rows {
            assert!(row[1] == 0.0 || row[1] == 1.0);
            assert!(row[2] == 0.0 || row[2] == 1.0);
            assert!((0.0..=1.0).contains(&row[0]));
        }
    }

    #[test]
    fn label_conditioning_matches_training_frequency() {
        let data = tiny_data(30); // 10 positives of 30
        let cfg = tiny_config(7);
        let profile = FaultProfile {
            label_conditioning: true,
            ..FaultProfile::default()
        };
        let model = train(&data, &cfg, &profile).unwrap();
        let synth = generate_seeded(&model, 30, 1).unwrap();
        let pos = synth.rows.iter().filter(|r| r[2] > 0.5).count();
        assert_eq!(pos, 10);
    }

    #[test]
    fn logreg_teachers_train() {
        let data = tiny_data(20);
        let cfg = tiny_config(13);
        let profile = FaultProfile {
            teacher_model: TeacherModel::Logreg,
            ..FaultProfile::default()
        };
        let model = train(&data, &cfg, &profile).unwrap();
        match model.teachers {
            TeacherSet::Logreg(models) => assert_eq!(models.len(), 2),
            other => panic!("unexpected teacher set {other:?}"),
        }
    }

    #[test]
    fn no_pate_profile_runs_to_cap_without_accounting() {
        let data = tiny_data(20);
        let mut cfg = tiny_config(17);
        cfg.epsilon_budget = 1.0;
        cfg.max_iters = 4;
        let profile = FaultProfile {
            pate_enabled: false,
            noise_convention: NoiseConvention::Gaussian,
            delta_scale_fault: DeltaScaleFault::XorPower,
            ..FaultProfile::default()
        };
        let model = train(&data, &cfg, &profile).unwrap();
        assert_eq!(model.iterations_run, 4);
        assert_eq!(model.reported_epsilon, 0.0);
        assert_eq!(model.accountant.updates(), 0);
        assert!(matches!(model.teachers, TeacherSet::None));
    }

    #[test]
    fn trace_replay_reproduces_accountant() {
        let data = tiny_data(24);
        let mut cfg = tiny_config(23);
        cfg.trace = true;
        cfg.max_iters = 6;
        let model = train(&data, &cfg, &FaultProfile::default()).unwrap();
        let trace = model.trace.as_ref().unwrap();
        let replayed = crate::dp::replay(
            &trace.tallies,
            cfg.lambda,
            cfg.moments,
            cfg.delta,
            cfg.accountant_mode,
            AccountantFault::None,
        )
        .unwrap();
        assert_eq!(replayed.alpha(), model.accountant.alpha());
        assert_eq!(
            replayed.epsilon().to_bits(),
            model.accountant.epsilon().to_bits()
        );
    }

    #[test]
    fn per_batch_accounting_charges_once_per_student_round() {
        let data = tiny_data(24);
        let mut cfg = tiny_config(31);
        cfg.accounting = AccountingGranularity::PerBatch;
        cfg.student_iters = 3;
        cfg.max_iters = 4;
        let model = train(&data, &cfg, &FaultProfile::default()).unwrap();
        assert_eq!(model.accountant.updates(), 3 * 4);
    }

    #[test]
    fn rejects_unscaled_data() {
        let meta = Arc::new(
            Metadata::new(
                vec![ColumnSpec::numerical("x", 0.0, 10.0), ColumnSpec::binary("y")],
                1,
                BoundsProvenance::Public,
            )
            .unwrap(),
        );
        let data = Dataset::new(vec![vec![5.0, 0.0], vec![7.0, 1.0]], meta).unwrap();
        let cfg = tiny_config(1);
        assert!(train(&data, &cfg, &FaultProfile::default()).is_err());
    }

    #[test]
    fn model_json_roundtrip() {
        let data = tiny_data(20);
        let cfg = tiny_config(29);
        let model = train(&data, &cfg, &FaultProfile::default()).unwrap();
        let text = model.to_json().unwrap();
        let back = PateGanModel::from_json(&text).unwrap();
        assert_eq!(back.generator, model.generator);
        assert_eq!(back.config, model.config);
        let s1 = generate_seeded(&model, 7, 5).unwrap();
        let s2 = generate_seeded(&back, 7, 5).unwrap();
        assert_eq!(s1.rows, s2.rows);
    }
}
