//! Training-free stand-in for a bank of trained site learners.
//!
//! Each site independently misreads its value with probability `epsilon`,
//! replacing it with a uniformly chosen wrong value. The learner then reports
//! `1 - epsilon` on the value it observed and spreads `epsilon` evenly over
//! the rest, so a clean site yields the sharp distribution around the truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{soft_decode, SiteDistributions};
use crate::error::{Error, Result};
use crate::mapping::LabelMapping;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ChannelConfig {
    pub fn new(epsilon: f64, seed: u64) -> Result<Self> {
        let cc = ChannelConfig { epsilon, seed };
        cc.validate()?;
        Ok(cc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::invalid(format!(
                "flip probability {} outside [0, 1)",
                self.epsilon
            )));
        }
        Ok(())
    }

    fn check_sites(&self, lm: &LabelMapping) -> Result<()> {
        self.validate()?;
        if self.epsilon > 0.0 {
            if let Some(i) = lm.site_sizes().iter().position(|&s| s == 1) {
                return Err(Error::invalid(format!(
                    "site {i} has a single value; cannot flip with epsilon > 0"
                )));
            }
        }
        Ok(())
    }
}

/// Distributions reported when the sites read `observed`.
pub fn channel_posterior(lm: &LabelMapping, observed: &[usize], epsilon: f64) -> Result<SiteDistributions> {
    ChannelConfig::new(epsilon, 0)?.check_sites(lm)?;
    if observed.len() != lm.n_sites() {
        return Err(Error::invalid(format!(
            "{} observed values for {} sites",
            observed.len(),
            lm.n_sites()
        )));
    }
    let mut blocks = Vec::with_capacity(observed.len());
    for (i, (&v, &size)) in observed.iter().zip(lm.site_sizes()).enumerate() {
        if v >= size {
            return Err(Error::invalid(format!("site {i}: value {v} out of range {size}")));
        }
        let rest = if size > 1 { epsilon / (size - 1) as f64 } else { 0.0 };
        let mut block = vec![rest; size];
        block[v] = 1.0 - epsilon;
        blocks.push(block);
    }
    SiteDistributions::new(blocks)
}

/// Seeded emitter; each call advances the shared stream.
pub struct NoisyChannel<'a> {
    cfg: ChannelConfig,
    lm: &'a LabelMapping,
    rng: ChaCha8Rng,
}

impl<'a> NoisyChannel<'a> {
    pub fn new(cfg: ChannelConfig, lm: &'a LabelMapping) -> Result<Self> {
        cfg.check_sites(lm)?;
        Ok(NoisyChannel {
            cfg,
            lm,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    /// Site values after independent flips.
    pub fn observe(&mut self, y: usize) -> Result<Vec<usize>> {
        let mut obs = self.lm.map_label(y)?.0;
        if self.cfg.epsilon > 0.0 {
            for (v, &size) in obs.iter_mut().zip(self.lm.site_sizes()) {
                if self.rng.random::<f64>() < self.cfg.epsilon {
                    // uniform over the size-1 wrong values
                    let r = self.rng.random_range(0..size - 1);
                    *v = if r >= *v { r + 1 } else { r };
                }
            }
        }
        Ok(obs)
    }

    pub fn emit(&mut self, y: usize) -> Result<SiteDistributions> {
        let obs = self.observe(y)?;
        channel_posterior(self.lm, &obs, self.cfg.epsilon)
    }

    fn draw_label(&mut self) -> usize {
        self.rng.random_range(0..self.lm.n_classes())
    }
}

/// One emission from a fresh channel seeded by `cc.seed`.
pub fn channel_emit(cc: &ChannelConfig, lm: &LabelMapping, y: usize) -> Result<SiteDistributions> {
    NoisyChannel::new(*cc, lm)?.emit(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelAccuracy {
    pub trials: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub epsilon: f64,
    pub seed: u64,
}

/// Monte-Carlo decode accuracy over `trials` uniformly drawn labels.
///
/// Labels and flips come from one sequential stream, so the result does not
/// depend on the thread count; only decoding runs in parallel.
pub fn channel_accuracy(cc: &ChannelConfig, lm: &LabelMapping, trials: usize) -> Result<ChannelAccuracy> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let mut ch = NoisyChannel::new(*cc, lm)?;
    let mut draws = Vec::with_capacity(trials);
    for _ in 0..trials {
        let y = ch.draw_label();
        draws.push((y, ch.observe(y)?));
    }
    let correct = draws
        .par_iter()
        .map(|(y, obs)| {
            let d = channel_posterior(lm, obs, cc.epsilon)?;
            Ok(usize::from(soft_decode(lm, &d)?.label == *y))
        })
        .sum::<Result<usize>>()?;
    Ok(ChannelAccuracy {
        trials,
        correct,
        accuracy: correct as f64 / trials as f64,
        epsilon: cc.epsilon,
        seed: cc.seed,
    })
}
