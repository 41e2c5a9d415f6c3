//! Privacy mechanisms: Laplace/Gaussian sampling, noisy vote aggregation for
//! the teacher ensemble, and the moments accountant that tracks the privacy
//! budget during training.
//!
//! The accountant has two modes and two injectable faults:
//!
//! * `PateGan` mode takes the minimum of two bound terms per moment;
//!   `PateStrict` adds a third term (`2·λ·l`) and checks the validity
//!   condition on q, logging violations instead of aborting.
//! * `MissingLog` skips the log on the second bound term (using the raw
//!   value), which inflates the tracked budget wherever that term is active.
//! * `IndexShift` applies the update intended for moment l to moment l−1, so
//!   the top moment never accumulates and the reported budget saturates at
//!   ln(1/δ)/L — a systematic underestimate.
//!
//! The reported budget is data dependent (q is computed from the clean vote
//! tallies); reports carry `epsilon_is_data_dependent: true` to make that
//! explicit. No private release of the estimate is attempted.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clean vote counts behind one aggregated label: `n0` votes for "fake",
/// `n1` votes for "real".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub n0: u32,
    pub n1: u32,
}

impl VoteTally {
    pub fn teachers(&self) -> u32 {
        self.n0 + self.n1
    }

    pub fn gap(&self) -> u32 {
        self.n0.abs_diff(self.n1)
    }
}

/// Scale convention for the vote-aggregation noise.
///
/// `LapInvLambda` is the default: Laplace with scale 1/λ, so larger λ means
/// less noise. `LapLambda` (scale λ) and `Gaussian` reproduce the wrong
/// conventions found in the wild.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseConvention {
    LapInvLambda,
    LapLambda,
    Gaussian,
}

impl NoiseConvention {
    /// Noise scale for a given λ. The Gaussian variant mirrors the inverse
    /// rule so larger λ still means less noise.
    pub fn scale(&self, lambda: f64) -> f64 {
        match self {
            NoiseConvention::LapInvLambda | NoiseConvention::Gaussian => 1.0 / lambda,
            NoiseConvention::LapLambda => lambda,
        }
    }
}

/// One draw from Laplace(0, scale) via inverse-CDF on a single uniform.
pub fn laplace_sample(scale: f64, rng: &mut impl Rng) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::Config(format!("laplace scale {scale} must be positive")));
    }
    let u: f64 = rng.gen::<f64>() - 0.5;
    Ok(-scale * u.signum() * (1.0 - 2.0 * u.abs()).ln())
}

/// One draw from N(0, sigma^2).
pub fn gaussian_sample(sigma: f64, rng: &mut impl Rng) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("gaussian sigma {sigma} must be positive")));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    Ok(normal.sample(rng))
}

/// Noisy argmax over the teachers' votes. Returns the aggregated label and
/// the clean tally (which is what the accountant consumes).
pub fn pate_aggregate(
    votes: &[bool],
    lambda: f64,
    convention: NoiseConvention,
    rng: &mut impl Rng,
) -> Result<(u8, VoteTally)> {
    if votes.is_empty() {
        return Err(Error::Config("empty vote vector".into()));
    }
    let n1 = votes.iter().filter(|&&v| v).count() as u32;
    let n0 = votes.len() as u32 - n1;
    let scale = convention.scale(lambda);
    let (noise0, noise1) = match convention {
        NoiseConvention::LapInvLambda | NoiseConvention::LapLambda => {
            (laplace_sample(scale, rng)?, laplace_sample(scale, rng)?)
        }
        NoiseConvention::Gaussian => (gaussian_sample(scale, rng)?, gaussian_sample(scale, rng)?),
    };
    let label = u8::from(f64::from(n1) + noise1 > f64::from(n0) + noise0);
    Ok((label, VoteTally { n0, n1 }))
}

/// Per-aggregation bound parameter: q = (2 + λ|n0-n1|) / (4 exp(λ|n0-n1|)).
/// Always in (0, 0.5] for λ > 0.
pub fn accountant_q(tally: VoteTally, lambda: f64) -> f64 {
    let x = lambda * f64::from(tally.gap());
    (2.0 + x) / (4.0 * x.exp())
}

/// Validity threshold for q from the strict analysis:
/// q < (e^{2λ} - 1) / (e^{4λ} - 1).
pub fn strict_q_threshold(lambda: f64) -> f64 {
    ((2.0 * lambda).exp() - 1.0) / ((4.0 * lambda).exp() - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountantMode {
    /// Minimum over the two bound terms.
    PateGan,
    /// Adds the third bound term 2λl and checks the q validity condition
    /// (violations are counted and logged, not fatal).
    PateStrict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountantFault {
    None,
    /// Updates land one moment lower than intended; the top moment never
    /// accumulates, capping the reported budget at ln(1/δ)/L.
    IndexShift,
    /// The second bound term is used without the log.
    MissingLog,
}

/// Running log-moment vector α(1..L) with conversion to an (ε, δ) estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsAccountant {
    pub lambda: f64,
    pub delta: f64,
    pub mode: AccountantMode,
    pub fault: AccountantFault,
    /// alpha[i] holds the moment of order i+1.
    alpha: Vec<f64>,
    updates: u64,
    q_violations: u64,
}

/// min that ignores an undefined (NaN) candidate; the clipped bound term is
/// always defined, so the update stays finite outside the valid q region.
#[inline]
fn bound_min(a: f64, b: f64) -> f64 {
    a.min(b)
}

impl MomentsAccountant {
    pub fn new(
        lambda: f64,
        moments: usize,
        delta: f64,
        mode: AccountantMode,
        fault: AccountantFault,
    ) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Config(format!("lambda {lambda} must be positive")));
        }
        if moments < 1 {
            return Err(Error::Config("need at least one moment".into()));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!("delta {delta} must be in (0, 1)")));
        }
        Ok(MomentsAccountant {
            lambda,
            delta,
            mode,
            fault,
            alpha: vec![0.0; moments],
            updates: 0,
            q_violations: 0,
        })
    }

    pub fn moments(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn q_violations(&self) -> u64 {
        self.q_violations
    }

    /// The bound increment for moment order `l` at a given q, before any
    /// fault rearrangement.
    fn term_for(&self, q: f64, l: f64) -> f64 {
        let lambda = self.lambda;
        let clipped = 2.0 * lambda * lambda * l * (l + 1.0);
        let e2l = (2.0 * lambda).exp();
        let inner = (1.0 - q) * ((1.0 - q) / (1.0 - e2l * q)).powf(l) + q * (2.0 * lambda * l).exp();
        let second = match self.fault {
            AccountantFault::MissingLog => inner,
            _ => inner.ln(),
        };
        let two_term = bound_min(clipped, second);
        match self.mode {
            AccountantMode::PateGan => two_term,
            AccountantMode::PateStrict => bound_min(two_term, 2.0 * lambda * l),
        }
    }

    /// Fold one aggregation's clean tally into the moment vector.
    pub fn update(&mut self, tally: VoteTally) -> Result<()> {
        let q = accountant_q(tally, self.lambda);
        if !(q > 0.0 && q <= 0.5) {
            return Err(Error::Accountant(format!(
                "q = {q} outside (0, 0.5]; corrupted tally {tally:?}"
            )));
        }
        if self.mode == AccountantMode::PateStrict && q >= strict_q_threshold(self.lambda) {
            self.q_violations += 1;
            log::warn!(
                "q condition violated: q = {q:.6} >= {:.6} (lambda = {}, gap = {})",
                strict_q_threshold(self.lambda),
                self.lambda,
                tally.gap()
            );
        }
        let moments = self.alpha.len();
        match self.fault {
            AccountantFault::IndexShift => {
                // update for moment l lands on moment l-1; the update for
                // moment 1 has nowhere to go and the top moment gets nothing
                for l in 2..=moments {
                    let term = self.term_for(q, l as f64);
                    self.alpha[l - 2] += term;
                }
            }
            _ => {
                for l in 1..=moments {
                    let term = self.term_for(q, l as f64);
                    self.alpha[l - 1] += term;
                }
            }
        }
        self.updates += 1;
        Ok(())
    }

    /// Budget estimate: min over l of (α(l) + ln(1/δ)) / l.
    pub fn epsilon(&self) -> f64 {
        let log_inv_delta = (1.0 / self.delta).ln();
        self.alpha
            .iter()
            .enumerate()
            .map(|(i, &a)| (a + log_inv_delta) / (i as f64 + 1.0))
            .fold(f64::INFINITY, f64::min)
    }

    /// Budget the accountant would report after folding in `tallies`,
    /// without committing them.
    pub fn epsilon_after(&self, tallies: &[VoteTally]) -> Result<f64> {
        let mut trial = self.clone();
        for &t in tallies {
            trial.update(t)?;
        }
        Ok(trial.epsilon())
    }
}

/// Re-run a recorded tally stream through a fresh accountant. Training
/// traces must reproduce bit-exactly under this replay.
pub fn replay(
    tallies: &[VoteTally],
    lambda: f64,
    moments: usize,
    delta: f64,
    mode: AccountantMode,
    fault: AccountantFault,
) -> Result<MomentsAccountant> {
    let mut acc = MomentsAccountant::new(lambda, moments, delta, mode, fault)?;
    for &t in tallies {
        acc.update(t)?;
    }
    Ok(acc)
}

/// One accountant trace record, exported as a JSON line per iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccountantTraceRecord {
    pub iter: usize,
    pub alpha: Vec<f64>,
    pub epsilon_hat: f64,
}

/// Noise scale for the no-ensemble (single-discriminator) presets, derived
/// from (ε, δ) with δ = 10^-p: sqrt(2 ln(1.25 · 10^p)) / ε.
///
/// `DeltaScaleFault` reproduces the arithmetic slips found in the wild:
/// `XorPower` evaluates `10 ^ p` as bitwise XOR instead of exponentiation;
/// `MultDiv` multiplies by ε instead of dividing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaScaleFault {
    None,
    XorPower,
    MultDiv,
}

pub fn gaussian_mechanism_sigma(epsilon: f64, delta: f64, fault: DeltaScaleFault) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config("delta must be in (0, 1)".into()));
    }
    let p = (-delta.log10()).round().max(1.0) as u64;
    let inv_delta_factor = match fault {
        DeltaScaleFault::XorPower => (10u64 ^ p) as f64,
        _ => 10f64.powi(p as i32),
    };
    let base = (2.0 * (1.25 * inv_delta_factor).ln()).sqrt();
    Ok(match fault {
        DeltaScaleFault::MultDiv => base * epsilon,
        _ => base / epsilon,
    })
}
