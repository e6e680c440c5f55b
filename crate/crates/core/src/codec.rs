//! Decoding base-learner outputs back to labels, and n-hot input encodings.
//!
//! The soft decoder picks the label `a` maximising `sum_i log P_i(f_i(a))`,
//! which equals minus the summed KL divergence between the point mass at `a`
//! pushed through each site function and the site distribution. Zero
//! probabilities are clamped to [`PROB_FLOOR`] before taking logarithms, and
//! ties always go to the smallest label.

use crate::error::{Error, Result};
use crate::mapping::{LabelMapping, MappingKind};

/// Probabilities are clamped to this value before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Site vectors must sum to one within this tolerance.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// One probability vector per site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteDistributions {
    blocks: Vec<Vec<f64>>,
}

impl SiteDistributions {
    /// Validates each block (finite, non-negative, sums to one within
    /// tolerance) and renormalises it exactly.
    pub fn new(blocks: Vec<Vec<f64>>) -> Result<Self> {
        let mut blocks = blocks;
        for (i, block) in blocks.iter_mut().enumerate() {
            if block.is_empty() {
                return Err(Error::invalid(format!("site {i}: empty distribution")));
            }
            if let Some(v) = block.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::invalid(format!("site {i}: invalid probability {v}")));
            }
            let sum: f64 = block.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::invalid(format!(
                    "site {i}: probabilities sum to {sum}, not 1"
                )));
            }
            if sum != 1.0 {
                block.iter_mut().for_each(|v| *v /= sum);
            }
        }
        Ok(SiteDistributions { blocks })
    }

    /// Splits one flat row of concatenated site blocks using the mapping's
    /// site sizes.
    pub fn from_flat(lm: &LabelMapping, values: &[f64]) -> Result<Self> {
        let total: usize = lm.site_sizes().iter().sum();
        if values.len() != total {
            return Err(Error::invalid(format!(
                "expected {total} probabilities, got {}",
                values.len()
            )));
        }
        let mut blocks = Vec::with_capacity(lm.n_sites());
        let mut offset = 0;
        for &size in lm.site_sizes() {
            blocks.push(values[offset..offset + size].to_vec());
            offset += size;
        }
        Self::new(blocks)
    }

    /// Point masses at the codeword of `y`.
    pub fn delta(lm: &LabelMapping, y: usize) -> Result<Self> {
        let code = lm.map_label(y)?;
        let blocks = code
            .sites()
            .iter()
            .zip(lm.site_sizes())
            .map(|(&v, &size)| {
                let mut b = vec![0.0; size];
                b[v] = 1.0;
                b
            })
            .collect();
        Ok(SiteDistributions { blocks })
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn n_sites(&self) -> usize {
        self.blocks.len()
    }

    fn check_against(&self, lm: &LabelMapping) -> Result<()> {
        if self.blocks.len() != lm.n_sites() {
            return Err(Error::invalid(format!(
                "{} site distributions for a mapping with {} sites",
                self.blocks.len(),
                lm.n_sites()
            )));
        }
        for (i, (b, &size)) in self.blocks.iter().zip(lm.site_sizes()).enumerate() {
            if b.len() != size {
                return Err(Error::invalid(format!(
                    "site {i}: distribution has length {}, site size is {size}",
                    b.len()
                )));
            }
        }
        Ok(())
    }

    fn log_tables(&self) -> Vec<Vec<f64>> {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|&v| v.max(PROB_FLOOR).ln()).collect())
            .collect()
    }
}

/// Result of soft decoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoded {
    pub label: usize,
    pub score: f64,
}

/// Soft-decoder settings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeOptions {
    /// When set, only labels whose codewords lie in the product of each
    /// site's `m` most probable values are scored first. The result is
    /// returned only when a bound proves no other label can beat it;
    /// otherwise decoding falls back to the exhaustive search.
    pub prune_top_m: Option<usize>,
}

/// Exhaustive soft decoding.
pub fn soft_decode(lm: &LabelMapping, d: &SiteDistributions) -> Result<Decoded> {
    soft_decode_with(lm, d, DecodeOptions::default())
}

pub fn soft_decode_with(
    lm: &LabelMapping,
    d: &SiteDistributions,
    opts: DecodeOptions,
) -> Result<Decoded> {
    d.check_against(lm)?;
    let logs = d.log_tables();
    if let Some(m) = opts.prune_top_m {
        if m == 0 {
            return Err(Error::invalid("prune_top_m must be positive"));
        }
        if let Some(hit) = pruned_decode(lm, &logs, m) {
            return Ok(hit);
        }
    }
    Ok(exhaustive_decode(lm, &logs))
}

fn score_label(lm: &LabelMapping, logs: &[Vec<f64>], code: &mut [usize], a: usize) -> f64 {
    lm.encode_into(a, code);
    code.iter().zip(logs).fold(0.0, |acc, (&v, t)| acc + t[v])
}

fn exhaustive_decode(lm: &LabelMapping, logs: &[Vec<f64>]) -> Decoded {
    let mut code = vec![0; lm.n_sites()];
    let mut best = Decoded {
        label: 0,
        score: f64::NEG_INFINITY,
    };
    for a in 0..lm.n_classes() {
        let s = score_label(lm, logs, &mut code, a);
        if s > best.score {
            best = Decoded { label: a, score: s };
        }
    }
    best
}

fn pruned_decode(lm: &LabelMapping, logs: &[Vec<f64>], m: usize) -> Option<Decoded> {
    // per site: value indices sorted by descending log-probability, ties by value
    let ranked: Vec<Vec<usize>> = logs
        .iter()
        .map(|t| {
            let mut idx: Vec<usize> = (0..t.len()).collect();
            idx.sort_by(|&a, &b| t[b].total_cmp(&t[a]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let keep: Vec<usize> = ranked.iter().map(|r| m.min(r.len())).collect();

    // a label outside the candidate product misses the top-m on at least one
    // site; its score is at most the best total with that site demoted
    let best_total: f64 = ranked.iter().zip(logs).map(|(r, t)| t[r[0]]).sum();
    let bound = ranked
        .iter()
        .zip(logs)
        .zip(&keep)
        .filter(|((r, _), &kk)| kk < r.len())
        .map(|((r, t), &kk)| best_total - t[r[0]] + t[r[kk]])
        .fold(f64::NEG_INFINITY, f64::max);

    let mut best: Option<Decoded> = None;
    let mut choice = vec![0usize; logs.len()];
    let mut sites = vec![0usize; logs.len()];
    let mut code = vec![0usize; logs.len()];
    loop {
        for (i, &c) in choice.iter().enumerate() {
            sites[i] = ranked[i][c];
        }
        if let Some(a) = lm.label_of(&sites) {
            let s = score_label(lm, logs, &mut code, a);
            let better = match best {
                None => true,
                Some(b) => s > b.score || (s == b.score && a < b.label),
            };
            if better {
                best = Some(Decoded { label: a, score: s });
            }
        }
        // odometer increment over the candidate product
        let mut i = 0;
        loop {
            if i == choice.len() {
                // slack absorbs rounding differences between summation orders
                let slack = 1e-9 * bound.abs().max(1.0);
                return best.filter(|b| bound == f64::NEG_INFINITY || b.score > bound + slack);
            }
            choice[i] += 1;
            if choice[i] < keep[i] {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// `-sum_i KL(f_i# delta_a || P_i)`, computed from the pushforward point
/// masses directly.
pub fn kl_score(lm: &LabelMapping, a: usize, d: &SiteDistributions) -> Result<f64> {
    d.check_against(lm)?;
    let code = lm.map_label(a)?;
    let mut divergence = 0.0;
    for ((&v, block), &size) in code.sites().iter().zip(d.blocks()).zip(lm.site_sizes()) {
        let mut pushforward = vec![0.0f64; size];
        pushforward[v] = 1.0;
        let kl: f64 = pushforward
            .iter()
            .zip(block)
            .filter(|(q, _)| **q > 0.0)
            .map(|(&q, &p)| q * (q.ln() - p.max(PROB_FLOOR).ln()))
            .sum();
        divergence += kl;
    }
    Ok(-divergence)
}

/// Binary ECOC decoding: the label whose codeword is closest in L1 to the
/// per-bit probabilities `P(bit = 1)`.
pub fn ecoc_l1_decode(lm: &LabelMapping, bit_probs: &[f64]) -> Result<usize> {
    if lm.kind() != MappingKind::Ecoc {
        return Err(Error::invalid(format!(
            "L1 decoding needs an ecoc mapping, got {}",
            lm.kind()
        )));
    }
    if bit_probs.len() != lm.n_sites() {
        return Err(Error::invalid(format!(
            "expected {} bit probabilities, got {}",
            lm.n_sites(),
            bit_probs.len()
        )));
    }
    if let Some(b) = bit_probs.iter().find(|b| !(0.0..=1.0).contains(*b)) {
        return Err(Error::invalid(format!("bit probability {b} outside [0, 1]")));
    }
    let mut code = vec![0; lm.n_sites()];
    let mut best = (0, f64::INFINITY);
    for a in 0..lm.n_classes() {
        lm.encode_into(a, &mut code);
        let dist = code
            .iter()
            .zip(bit_probs)
            .fold(0.0, |acc, (&bit, &p)| acc + (p - bit as f64).abs());
        if dist < best.1 {
            best = (a, dist);
        }
    }
    Ok(best.0)
}

/// Concatenated one-hot blocks of a codeword, one block per site.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NHotVector {
    bits: Vec<u8>,
}

impl NHotVector {
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Positions of the ones.
    pub fn ones(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn n_hot_encode(lm: &LabelMapping, y: usize) -> Result<NHotVector> {
    let total: usize = lm.site_sizes().iter().sum();
    let mut bits = vec![0u8; total];
    for idx in n_hot_indices(lm, y)? {
        bits[idx] = 1;
    }
    Ok(NHotVector { bits })
}

/// Positions of the ones in the n-hot encoding of `y`.
pub fn n_hot_indices(lm: &LabelMapping, y: usize) -> Result<Vec<usize>> {
    let code = lm.map_label(y)?;
    let mut offset = 0;
    Ok(code
        .sites()
        .iter()
        .zip(lm.site_sizes())
        .map(|(&v, &size)| {
            let idx = offset + v;
            offset += size;
            idx
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixed6() -> LabelMapping {
        LabelMapping::mixed(6, &[2, 3]).unwrap()
    }

    fn example_dists() -> SiteDistributions {
        SiteDistributions::new(vec![vec![0.9, 0.1], vec![0.1, 0.8, 0.1]]).unwrap()
    }

    /// Brute-force oracle: enumerate labels, multiply probabilities.
    fn oracle_decode(lm: &LabelMapping, d: &SiteDistributions) -> usize {
        let mut best = (0, -1.0);
        for a in 0..lm.n_classes() {
            let code = lm.map_label(a).unwrap();
            let prod: f64 = code
                .sites()
                .iter()
                .zip(d.blocks())
                .map(|(&v, b)| b[v])
                .product();
            if prod > best.1 {
                best = (a, prod);
            }
        }
        best.0
    }

    #[test]
    fn soft_decode_example() {
        let lm = mixed6();
        let d = example_dists();
        let out = soft_decode(&lm, &d).unwrap();
        assert_eq!(out.label, 4);
        assert_eq!(oracle_decode(&lm, &d), 4);
        assert!((out.score - 0.72f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn uniform_ties_go_to_smallest_label() {
        let lm = mixed6();
        let d = SiteDistributions::new(vec![vec![0.5, 0.5], vec![1.0 / 3.0; 3]]).unwrap();
        assert_eq!(soft_decode(&lm, &d).unwrap().label, 0);
    }

    #[test]
    fn delta_round_trip() {
        let lm = LabelMapping::simplex(100, 11, 2, 4).unwrap();
        for y in 0..100 {
            let d = SiteDistributions::delta(&lm, y).unwrap();
            assert_eq!(soft_decode(&lm, &d).unwrap().label, y);
            assert_eq!(kl_score(&lm, y, &d).unwrap(), 0.0);
        }
    }

    #[test]
    fn kl_score_examples() {
        let lm = mixed6();
        let d = example_dists();
        let s = kl_score(&lm, 4, &d).unwrap();
        assert!((s - (-0.328_504_066_972_036_1)).abs() < 1e-12);
        assert_eq!(s, soft_decode(&lm, &d).unwrap().score);
    }

    #[test]
    fn validation_errors() {
        let lm = mixed6();
        assert!(SiteDistributions::new(vec![vec![0.5, 0.4]]).is_err());
        assert!(SiteDistributions::new(vec![vec![1.5, -0.5]]).is_err());
        assert!(SiteDistributions::new(vec![vec![f64::NAN, 1.0]]).is_err());
        let wrong_sites = SiteDistributions::new(vec![vec![1.0, 0.0]]).unwrap();
        assert!(soft_decode(&lm, &wrong_sites).is_err());
        let wrong_len = SiteDistributions::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        assert!(soft_decode(&lm, &wrong_len).is_err());
        assert!(kl_score(&lm, 6, &example_dists()).is_err());
    }

    #[test]
    fn renormalizes_within_tolerance() {
        let d = SiteDistributions::new(vec![vec![0.5 + 4e-7, 0.5]]).unwrap();
        let s: f64 = d.blocks()[0].iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_probabilities_use_floor() {
        let lm = mixed6();
        let d = SiteDistributions::new(vec![vec![1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let out = soft_decode(&lm, &d).unwrap();
        assert_eq!(out.label, 2);
        let s = kl_score(&lm, 1, &d).unwrap();
        assert!((s - 2.0 * PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn ecoc_l1_examples() {
        let lm = LabelMapping::ecoc(4, 2).unwrap();
        assert_eq!(ecoc_l1_decode(&lm, &[0.9, 0.2]).unwrap(), 2);
        assert_eq!(ecoc_l1_decode(&lm, &[0.5, 0.5]).unwrap(), 0);
        for y in 0..4 {
            let c = lm.map_label(y).unwrap();
            let probs: Vec<f64> = c.sites().iter().map(|&b| b as f64).collect();
            assert_eq!(ecoc_l1_decode(&lm, &probs).unwrap(), y);
        }
        assert!(ecoc_l1_decode(&lm, &[0.5]).is_err());
        assert!(ecoc_l1_decode(&lm, &[1.5, 0.0]).is_err());
        assert!(ecoc_l1_decode(&mixed6(), &[0.5, 0.5]).is_err());
    }

    #[test]
    fn n_hot_examples() {
        let v = n_hot_encode(&mixed6(), 4).unwrap();
        assert_eq!(v.bits(), &[1, 0, 0, 1, 0]);
        let v = n_hot_encode(&LabelMapping::onehot(3).unwrap(), 1).unwrap();
        assert_eq!(v.bits(), &[0, 1, 0]);
        let v = n_hot_encode(&LabelMapping::mixed(100, &[11, 13]).unwrap(), 0).unwrap();
        assert_eq!(v.len(), 24);
        assert_eq!(v.ones(), vec![0, 11]);
        assert!(n_hot_encode(&mixed6(), 6).is_err());
    }

    #[test]
    fn pruned_matches_exhaustive_on_peaked_inputs() {
        let lm = LabelMapping::simplex(1000, 37, 2, 5).unwrap();
        for y in (0..1000).step_by(37) {
            let mut blocks = SiteDistributions::delta(&lm, y).unwrap().blocks().to_vec();
            for (i, b) in blocks.iter_mut().enumerate() {
                for (j, v) in b.iter_mut().enumerate() {
                    *v = 0.8 * *v + 0.2 / 37.0 + if (i + j) % 5 == 0 { 1e-3 } else { 0.0 };
                }
                let s: f64 = b.iter().sum();
                b.iter_mut().for_each(|v| *v /= s);
            }
            let d = SiteDistributions::new(blocks).unwrap();
            let full = soft_decode(&lm, &d).unwrap();
            let pruned = soft_decode_with(&lm, &d, DecodeOptions { prune_top_m: Some(2) }).unwrap();
            assert_eq!(full, pruned);
            assert_eq!(pruned.label, y);
        }
    }

    #[test]
    fn pruned_falls_back_when_uncertified() {
        let lm = mixed6();
        let d = SiteDistributions::new(vec![vec![0.5, 0.5], vec![1.0 / 3.0; 3]]).unwrap();
        let out = soft_decode_with(&lm, &d, DecodeOptions { prune_top_m: Some(1) }).unwrap();
        assert_eq!(out.label, 0);
        assert!(soft_decode_with(&lm, &d, DecodeOptions { prune_top_m: Some(0) }).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn dist(size: usize) -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(0.0f64..1.0, size).prop_map(|v| {
                let s: f64 = v.iter().sum::<f64>() + 1e-9;
                v.iter().map(|x| (x + 1e-9 / v.len() as f64) / s).collect()
            })
        }

        fn mixed_dists() -> impl Strategy<Value = SiteDistributions> {
            (dist(11), dist(13), dist(17))
                .prop_map(|(a, b, c)| SiteDistributions::new(vec![a, b, c]).unwrap())
        }

        proptest! {
            #[test]
            fn soft_decode_is_argmax_of_kl_score(d in mixed_dists()) {
                let lm = LabelMapping::mixed(400, &[11, 13, 17]).unwrap();
                let got = soft_decode(&lm, &d).unwrap();
                let mut best = (0, f64::NEG_INFINITY);
                for a in 0..lm.n_classes() {
                    let s = kl_score(&lm, a, &d).unwrap();
                    if s > best.1 { best = (a, s); }
                }
                prop_assert_eq!(got.label, best.0);
                prop_assert_eq!(got.score, best.1);
            }

            #[test]
            fn soft_decode_invariant_under_site_rescaling(d in mixed_dists(), scale in 0.1f64..10.0, site in 0usize..3) {
                let lm = LabelMapping::mixed(400, &[11, 13, 17]).unwrap();
                let mut blocks = d.blocks().to_vec();
                let s: f64 = blocks[site].iter().map(|v| v * scale).sum();
                blocks[site] = blocks[site].iter().map(|v| v * scale / s).collect();
                let rescaled = SiteDistributions::new(blocks).unwrap();
                prop_assert_eq!(
                    soft_decode(&lm, &d).unwrap().label,
                    soft_decode(&lm, &rescaled).unwrap().label
                );
            }

            #[test]
            fn pruned_decoding_agrees_with_exhaustive(d in mixed_dists(), m in 1usize..6) {
                let lm = LabelMapping::mixed(400, &[11, 13, 17]).unwrap();
                let full = soft_decode(&lm, &d).unwrap();
                let pruned = soft_decode_with(&lm, &d, DecodeOptions { prune_top_m: Some(m) }).unwrap();
                prop_assert_eq!(full, pruned);
            }

            #[test]
            fn n_hot_has_one_bit_per_site(y in 0usize..2000) {
                let lm = LabelMapping::mixed(2000, &[11, 13, 17]).unwrap();
                let v = n_hot_encode(&lm, y).unwrap();
                prop_assert_eq!(v.ones().len(), 3);
                let mut offset = 0;
                for &size in lm.site_sizes() {
                    let block = &v.bits()[offset..offset + size];
                    prop_assert_eq!(block.iter().filter(|&&b| b == 1).count(), 1);
                    offset += size;
                }
            }
        }
    }
}
