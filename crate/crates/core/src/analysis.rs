//! Code-quality statistics for label mappings.
//!
//! Everything here is exact: mutual information is a finite sum over the
//! uniformly distributed label, and pair statistics are either exhaustive or
//! explicitly flagged as sampled.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mapping::LabelMapping;

/// Largest `N` for which information quantities are enumerated.
pub const MI_ENUMERATION_LIMIT: usize = 10_000_000;

/// Largest simplex message space enumerated for the full-space distance.
pub const MESSAGE_SPACE_LIMIT: u128 = 10_000_000;

/// Seed used when pair statistics have to be sampled.
pub const DEFAULT_PAIR_SEED: u64 = 0;

/// Joint and marginal preimage counts of two sites under a uniform label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreimageCounts {
    pub total: u64,
    /// Non-empty cells `(value_i, value_j) -> count`.
    pub joint: BTreeMap<(usize, usize), u64>,
    pub marginal_i: Vec<u64>,
    pub marginal_j: Vec<u64>,
}

fn check_site(lm: &LabelMapping, site: usize) -> Result<()> {
    if site >= lm.n_sites() {
        return Err(Error::invalid(format!(
            "site {site} out of range for a mapping with {} sites",
            lm.n_sites()
        )));
    }
    Ok(())
}

fn check_enumerable(lm: &LabelMapping) -> Result<()> {
    if lm.n_classes() > MI_ENUMERATION_LIMIT {
        return Err(Error::Unsupported(format!(
            "N = {} exceeds the enumeration limit {MI_ENUMERATION_LIMIT}",
            lm.n_classes()
        )));
    }
    Ok(())
}

pub fn preimage_counts(lm: &LabelMapping, i: usize, j: usize) -> Result<PreimageCounts> {
    check_site(lm, i)?;
    check_site(lm, j)?;
    check_enumerable(lm)?;
    let sizes = lm.site_sizes();
    let mut marginal_i = vec![0u64; sizes[i]];
    let mut marginal_j = vec![0u64; sizes[j]];
    let mut joint = BTreeMap::new();
    for x in 0..lm.n_classes() {
        let (a, b) = (lm.site_value(i, x), lm.site_value(j, x));
        marginal_i[a] += 1;
        marginal_j[b] += 1;
        *joint.entry((a, b)).or_insert(0) += 1;
    }
    Ok(PreimageCounts {
        total: lm.n_classes() as u64,
        joint,
        marginal_i,
        marginal_j,
    })
}

fn entropy_of_counts(counts: &[u64], total: u64) -> f64 {
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Entropy (nats) of one site under a uniform label.
pub fn site_entropy(lm: &LabelMapping, i: usize) -> Result<f64> {
    check_site(lm, i)?;
    check_enumerable(lm)?;
    let mut counts = vec![0u64; lm.site_sizes()[i]];
    for x in 0..lm.n_classes() {
        counts[lm.site_value(i, x)] += 1;
    }
    Ok(entropy_of_counts(&counts, lm.n_classes() as u64))
}

/// Exact mutual information (nats) between sites `i` and `j` for a
/// uniformly distributed label.
pub fn mutual_information(lm: &LabelMapping, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return Err(Error::invalid(
            "mutual information of a site with itself is its entropy; use site_entropy",
        ));
    }
    let counts = preimage_counts(lm, i, j)?;
    Ok(mi_from_counts(&counts))
}

pub fn mi_from_counts(c: &PreimageCounts) -> f64 {
    let n = c.total as f64;
    let mi: f64 = c
        .joint
        .iter()
        .map(|(&(a, b), &count)| {
            let ratio = (count as f64 * n) / (c.marginal_i[a] as f64 * c.marginal_j[b] as f64);
            count as f64 / n * ratio.ln()
        })
        .sum();
    mi.max(0.0)
}

/// Symmetric `n x n` matrix: site entropies on the diagonal, pairwise mutual
/// information elsewhere.
pub fn mi_matrix(lm: &LabelMapping) -> Result<Vec<Vec<f64>>> {
    let n = lm.n_sites();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        m[i][i] = site_entropy(lm, i)?;
        for j in (i + 1)..n {
            let v = mutual_information(lm, i, j)?;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok(m)
}

/// Counts of label pairs by number of agreeing sites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CollisionHistogram {
    /// `counts[a]` is the number of examined pairs agreeing on exactly `a` sites.
    pub counts: Vec<u64>,
    pub pairs: u64,
    pub sampled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CollisionHistogram {
    /// Largest agreement observed, if any pair was examined.
    pub fn max_agreement(&self) -> Option<usize> {
        self.counts.iter().rposition(|&c| c > 0)
    }
}

/// Histogram of agreeing-site counts: exhaustive when all `N(N-1)/2` pairs
/// fit in `pair_budget`, otherwise `pair_budget` uniform random pairs drawn
/// with [`DEFAULT_PAIR_SEED`].
pub fn separability_report(lm: &LabelMapping, pair_budget: u64) -> CollisionHistogram {
    separability_report_seeded(lm, pair_budget, DEFAULT_PAIR_SEED)
}

pub fn separability_report_seeded(
    lm: &LabelMapping,
    pair_budget: u64,
    seed: u64,
) -> CollisionHistogram {
    let n_classes = lm.n_classes() as u64;
    let n_sites = lm.n_sites();
    let all_pairs = n_classes * n_classes.saturating_sub(1) / 2;
    if all_pairs <= pair_budget.max(1) {
        let codebook = codebook(lm);
        let counts = (0..lm.n_classes())
            .into_par_iter()
            .fold(
                || vec![0u64; n_sites + 1],
                |mut acc, y1| {
                    let c1 = &codebook[y1 * n_sites..(y1 + 1) * n_sites];
                    for y2 in (y1 + 1)..lm.n_classes() {
                        let c2 = &codebook[y2 * n_sites..(y2 + 1) * n_sites];
                        let agree = c1.iter().zip(c2).filter(|(a, b)| a == b).count();
                        acc[agree] += 1;
                    }
                    acc
                },
            )
            .reduce(|| vec![0u64; n_sites + 1], add_counts);
        return CollisionHistogram {
            counts,
            pairs: all_pairs,
            sampled: false,
            seed: None,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; n_sites + 1];
    let (mut c1, mut c2) = (vec![0; n_sites], vec![0; n_sites]);
    for _ in 0..pair_budget {
        let y1 = rng.random_range(0..lm.n_classes());
        let mut y2 = rng.random_range(0..lm.n_classes() - 1);
        if y2 >= y1 {
            y2 += 1;
        }
        lm.encode_into(y1, &mut c1);
        lm.encode_into(y2, &mut c2);
        counts[c1.iter().zip(&c2).filter(|(a, b)| a == b).count()] += 1;
    }
    CollisionHistogram {
        counts,
        pairs: pair_budget,
        sampled: true,
        seed: Some(seed),
    }
}

fn add_counts(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    a
}

fn codebook(lm: &LabelMapping) -> Vec<u32> {
    let n = lm.n_sites();
    let mut book = vec![0u32; lm.n_classes() * n];
    let mut buf = vec![0usize; n];
    for y in 0..lm.n_classes() {
        lm.encode_into(y, &mut buf);
        for (slot, &v) in book[y * n..(y + 1) * n].iter_mut().zip(&buf) {
            *slot = v as u32;
        }
    }
    book
}

/// Minimum Hamming distance of a simplex code over the whole message space
/// GF(p)^k. The code is linear, so this is the minimum weight of a nonzero
/// codeword. `None` for other kinds or oversized message spaces.
pub fn full_space_min_distance(lm: &LabelMapping) -> Option<usize> {
    let (field, k, points) = lm.simplex_params()?;
    let p = field.modulus();
    let space = (p as u128).checked_pow(k as u32)?;
    if space > MESSAGE_SPACE_LIMIT {
        return None;
    }
    let mut digits = vec![0u64; k];
    let mut best = points.len();
    for m in 1..space as u64 {
        let mut x = m;
        for d in digits.iter_mut() {
            *d = x % p;
            x /= p;
        }
        let weight = points
            .iter()
            .filter(|&&pt| field.horner(&digits, pt) != 0)
            .count();
        best = best.min(weight);
    }
    Some(best)
}

/// Everything [`code_stats`] reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodeStats {
    pub kind: String,
    #[serde(rename = "N")]
    pub n_classes: usize,
    pub n_sites: usize,
    pub site_sizes: Vec<usize>,
    /// Minimum Hamming distance over the label set (over the examined pairs
    /// when `sampled`).
    pub min_site_distance: Option<usize>,
    /// Simplex codes only: minimum distance over all of GF(p)^k.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full_space_min_distance: Option<usize>,
    /// `q^(n-d+1) - N` with `q` the largest site size; saturates at `i128::MAX`.
    pub singleton_slack: Option<i128>,
    pub collision_histogram: CollisionHistogram,
    pub mi_unit: &'static str,
    pub mi_matrix: Vec<Vec<f64>>,
    pub sampled: bool,
}

impl CodeStats {
    /// Re-expresses the information matrix in bits.
    pub fn in_bits(mut self) -> Self {
        if self.mi_unit == "nats" {
            for row in &mut self.mi_matrix {
                row.iter_mut().for_each(|v| *v /= std::f64::consts::LN_2);
            }
            self.mi_unit = "bits";
        }
        self
    }
}

/// `q^(n-d+1) - N`, saturating.
pub fn singleton_slack(q: usize, n_sites: usize, d: usize, n_classes: usize) -> i128 {
    let exp = (n_sites + 1).saturating_sub(d) as u32;
    let bound = (q as i128).checked_pow(exp).unwrap_or(i128::MAX);
    bound.saturating_sub(n_classes as i128)
}

pub fn code_stats(lm: &LabelMapping, pair_budget: u64) -> Result<CodeStats> {
    let hist = separability_report(lm, pair_budget);
    let min_site_distance = hist.max_agreement().map(|a| lm.n_sites() - a);
    let singleton = min_site_distance
        .map(|d| singleton_slack(lm.max_site_size(), lm.n_sites(), d, lm.n_classes()));
    Ok(CodeStats {
        kind: lm.kind().to_string(),
        n_classes: lm.n_classes(),
        n_sites: lm.n_sites(),
        site_sizes: lm.site_sizes().to_vec(),
        min_site_distance,
        full_space_min_distance: full_space_min_distance(lm),
        singleton_slack: singleton,
        sampled: hist.sampled,
        collision_histogram: hist,
        mi_unit: "nats",
        mi_matrix: mi_matrix(lm)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: pairwise brute force over GF(p)^k using the
    /// closed-form digit polynomial.
    fn brute_full_space_distance(p: u64, k: u32, points: &[u64]) -> usize {
        let space = p.pow(k);
        let encode = |m: u64| -> Vec<u64> {
            points
                .iter()
                .map(|&x| {
                    let mut acc = 0u64;
                    let mut mm = m;
                    let mut xp = 1u64;
                    for _ in 0..k {
                        acc = (acc + (mm % p) * xp) % p;
                        xp = xp * x % p;
                        mm /= p;
                    }
                    acc
                })
                .collect()
        };
        let words: Vec<Vec<u64>> = (0..space).map(encode).collect();
        let mut best = points.len();
        for a in 0..words.len() {
            for b in (a + 1)..words.len() {
                let d = words[a].iter().zip(&words[b]).filter(|(x, y)| x != y).count();
                best = best.min(d);
            }
        }
        best
    }

    #[test]
    fn mi_examples() {
        let lm = LabelMapping::mixed(6, &[2, 3]).unwrap();
        assert_eq!(mutual_information(&lm, 0, 1).unwrap(), 0.0);

        // frozen from a 100-term enumeration in an independent script
        let lm = LabelMapping::mixed(100, &[11, 13]).unwrap();
        let mi = mutual_information(&lm, 0, 1).unwrap();
        assert!((mi - 0.355_356_805_341_119_46).abs() < 1e-12, "{mi}");

        let lm = LabelMapping::onehot(4).unwrap();
        assert!((site_entropy(&lm, 0).unwrap() - 4f64.ln()).abs() < 1e-12);

        assert!(mutual_information(&lm, 0, 0).is_err());
        let lm = LabelMapping::mixed(100, &[11, 13]).unwrap();
        assert!(mutual_information(&lm, 0, 2).is_err());
    }

    #[test]
    fn mi_simplex_full_square_is_zero() {
        let lm = LabelMapping::simplex(121, 11, 2, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(mutual_information(&lm, i, j).unwrap().abs() < 1e-15);
                }
            }
        }
        let lm = LabelMapping::simplex(100, 11, 2, 2).unwrap();
        let mi = mutual_information(&lm, 0, 1).unwrap();
        assert!((mi - 0.189_648_928_184_087_38).abs() < 1e-12, "{mi}");
    }

    #[test]
    fn mi_is_symmetric_and_nonnegative() {
        let lm = LabelMapping::mixed(5000, &[11, 13, 17, 19]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    let a = mutual_information(&lm, i, j).unwrap();
                    let b = mutual_information(&lm, j, i).unwrap();
                    assert!(a >= 0.0);
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mi_zero_when_n_is_prime_product() {
        for (p, q) in [(2u64, 3u64), (5, 7), (11, 13)] {
            let lm = LabelMapping::mixed((p * q) as usize, &[p, q]).unwrap();
            assert_eq!(mutual_information(&lm, 0, 1).unwrap(), 0.0);
        }
    }

    #[test]
    fn preimage_counts_follow_ceiling_rule() {
        for n in [100usize, 997, 2000, 4321] {
            let lm = LabelMapping::mixed(n, &[11, 13, 17, 19]).unwrap();
            for i in 0..4 {
                let c = preimage_counts(&lm, i, (i + 1) % 4).unwrap();
                let q = lm.site_sizes()[i] as u64;
                let t = (n as u64).div_ceil(q);
                assert!(c.marginal_i.iter().all(|&m| m == t || m == t - 1));
                assert_eq!(c.joint.values().sum::<u64>(), n as u64);
            }
        }
    }

    #[test]
    fn matrix_diagonal_is_entropy() {
        let lm = LabelMapping::ecoc(8, 3).unwrap();
        let m = mi_matrix(&lm).unwrap();
        for (i, row) in m.iter().enumerate() {
            assert!((row[i] - 2f64.ln()).abs() < 1e-15);
            for (j, v) in row.iter().enumerate() {
                if i != j {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn enumeration_limit_is_explicit() {
        let lm = LabelMapping::onehot(MI_ENUMERATION_LIMIT + 1).unwrap();
        assert!(matches!(site_entropy(&lm, 0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn separability_examples() {
        let lm = LabelMapping::mixed(100, &[11, 13]).unwrap();
        let h = separability_report(&lm, u64::MAX);
        assert!(!h.sampled);
        assert_eq!(h.pairs, 4950);
        assert_eq!(h.counts[2], 0);
        assert_eq!(h.counts.iter().sum::<u64>(), 4950);

        let lm = LabelMapping::simplex(121, 11, 2, 6).unwrap();
        let h = separability_report(&lm, u64::MAX);
        assert_eq!(h.max_agreement(), Some(1));

        let lm = LabelMapping::onehot(50).unwrap();
        let h = separability_report(&lm, u64::MAX);
        assert_eq!(h.counts, vec![1225, 0]);
    }

    #[test]
    fn separability_samples_beyond_budget() {
        let lm = LabelMapping::mixed(2000, &[47, 53]).unwrap();
        let h = separability_report(&lm, 10_000);
        assert!(h.sampled);
        assert_eq!(h.seed, Some(0));
        assert_eq!(h.pairs, 10_000);
        assert_eq!(h.counts.iter().sum::<u64>(), 10_000);
        assert_eq!(h, separability_report(&lm, 10_000));
    }

    #[test]
    fn code_stats_examples() {
        let lm = LabelMapping::simplex(25, 5, 2, 3).unwrap();
        let s = code_stats(&lm, u64::MAX).unwrap();
        assert_eq!(s.full_space_min_distance, Some(2));
        assert_eq!(s.min_site_distance, Some(2));
        assert_eq!(brute_full_space_distance(5, 2, &[1, 2, 3]), 2);
        assert_eq!(s.singleton_slack, Some(0));

        let lm = LabelMapping::ecoc(4, 2).unwrap();
        let s = code_stats(&lm, u64::MAX).unwrap();
        assert_eq!(s.min_site_distance, Some(1));
        assert_eq!(s.singleton_slack, Some(0));

        let lm = LabelMapping::onehot(10).unwrap();
        let s = code_stats(&lm, u64::MAX).unwrap();
        assert_eq!(s.min_site_distance, Some(1));
        assert_eq!(s.collision_histogram.counts, vec![45, 0]);
        assert_eq!(s.singleton_slack, Some(0));
    }

    #[test]
    fn full_space_distance_matches_pairwise_brute_force() {
        for (p, k, n) in [(5u64, 2usize, 3usize), (5, 2, 5), (7, 3, 5), (7, 2, 4), (3, 2, 3)] {
            let lm = LabelMapping::simplex(p.pow(k as u32) as usize, p, k, n).unwrap();
            let points: Vec<u64> = (1..=n as u64).map(|i| i % p).collect();
            let fast = full_space_min_distance(&lm).unwrap();
            assert_eq!(fast, brute_full_space_distance(p, k as u32, &points));
            assert_eq!(fast, n - k + 1);
        }
        let lm = LabelMapping::mixed(100, &[11, 13]).unwrap();
        assert_eq!(full_space_min_distance(&lm), None);
    }

    #[test]
    fn stats_in_bits() {
        let lm = LabelMapping::onehot(4).unwrap();
        let s = code_stats(&lm, 100).unwrap().in_bits();
        assert_eq!(s.mi_unit, "bits");
        assert!((s.mi_matrix[0][0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn measured_distance_respects_singleton_bound() {
        let mappings = [
            LabelMapping::mixed(1000, &[11, 13, 17]).unwrap(),
            LabelMapping::simplex(300, 17, 3, 6).unwrap(),
            LabelMapping::ecoc(100, 7).unwrap(),
            LabelMapping::ecoc(60, 9).unwrap(),
        ];
        for lm in &mappings {
            let s = code_stats(lm, u64::MAX).unwrap();
            assert!(s.singleton_slack.unwrap() >= 0, "{:?}", lm.kind());
        }
    }
}
