//! Prime generation and selection of prime parameters for label mappings.

use crate::error::{Error, Result};

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin. The first twelve primes as witnesses are
/// sufficient for every 64-bit input.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &w in &WITNESSES {
        if n % w == 0 {
            return n == w;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// All primes `<= limit`, ascending (sieve of Eratosthenes).
pub fn sieve_primes(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let limit = limit as usize;
    let mut composite = vec![false; limit + 1];
    let mut primes = Vec::new();
    for i in 2..=limit {
        if composite[i] {
            continue;
        }
        primes.push(i as u64);
        let mut j = i.saturating_mul(i);
        while j <= limit {
            composite[j] = true;
            j += i;
        }
    }
    primes
}

/// Primes `p` with `lo <= p < hi`. Endpoints are compared exactly, not rounded.
pub fn primes_in_range(lo: f64, hi: f64) -> Vec<u64> {
    if !(hi > lo) || !hi.is_finite() {
        return Vec::new();
    }
    let top = hi.ceil() as u64;
    sieve_primes(top)
        .into_iter()
        .filter(|&p| (p as f64) >= lo && (p as f64) < hi)
        .collect()
}

/// Parameters for choosing `count` primes in `[N^(1/k), N^(1/(k-epsilon)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimeRangeQuery {
    pub n_classes: u64,
    pub k: u32,
    pub epsilon: f64,
    pub count: usize,
}

impl PrimeRangeQuery {
    pub fn new(n_classes: u64, k: u32, epsilon: f64, count: usize) -> Result<Self> {
        let q = PrimeRangeQuery {
            n_classes,
            k,
            epsilon,
            count,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::invalid("class count must be at least 2"));
        }
        if self.k < 1 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) || self.epsilon >= self.k as f64 {
            return Err(Error::invalid(format!(
                "epsilon must lie in (0, 1) and below k, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// The half-open interval `[N^(1/k), N^(1/(k-epsilon)))`.
    pub fn interval(&self) -> (f64, f64) {
        let n = self.n_classes as f64;
        let k = self.k as f64;
        (n.powf(1.0 / k), n.powf(1.0 / (k - self.epsilon)))
    }

    /// Every prime in the interval, ascending.
    pub fn candidates(&self) -> Vec<u64> {
        let (lo, hi) = self.interval();
        primes_in_range(lo.max(2.0), hi)
    }

    /// The `count` smallest candidates. Fails only if the interval holds fewer.
    pub fn select_smallest(&self) -> Result<Vec<u64>> {
        let c = self.candidates();
        if c.len() < self.count {
            let (lo, hi) = self.interval();
            return Err(Error::invalid(format!(
                "only {} primes in [{lo:.3}, {hi:.3}), {} requested",
                c.len(),
                self.count
            )));
        }
        Ok(c[..self.count].to_vec())
    }
}

/// Prime Number Theorem estimate `k (N^(1/(k-eps)) - N^(1/k)) / ln N` of how
/// many primes the query interval holds. Advisory only.
pub fn pnt_count_estimate(q: &PrimeRangeQuery) -> f64 {
    let (lo, hi) = q.interval();
    q.k as f64 * (hi - lo) / (q.n_classes as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sieve_examples() {
        assert_eq!(sieve_primes(10), vec![2, 3, 5, 7]);
        assert_eq!(sieve_primes(2), vec![2]);
        assert_eq!(
            sieve_primes(30),
            vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
        );
        assert!(sieve_primes(1).is_empty());
        assert!(sieve_primes(0).is_empty());
    }

    #[test]
    fn range_examples() {
        assert_eq!(primes_in_range(10.0, 24.0), vec![11, 13, 17, 19, 23]);
        assert_eq!(
            primes_in_range(144.6, 182.0),
            vec![149, 151, 157, 163, 167, 173, 179, 181]
        );
        assert!(primes_in_range(24.0, 29.0).is_empty());
        assert!(primes_in_range(30.0, 20.0).is_empty());
        // half-open: hi excluded, lo included
        assert_eq!(primes_in_range(11.0, 13.0), vec![11]);
        assert_eq!(primes_in_range(10.5, 11.0), Vec::<u64>::new());
    }

    #[test]
    fn miller_rabin_matches_sieve() {
        let sieve = sieve_primes(100_000);
        let from_mr: Vec<u64> = (0..=100_000).filter(|&n| is_prime(n)).collect();
        assert_eq!(sieve, from_mr);
    }

    #[test]
    fn miller_rabin_large_values() {
        assert!(is_prime(18_446_744_073_709_551_557));
        assert!(!is_prime(18_446_744_073_709_551_557 - 2));
        // strong pseudoprime to bases 2..=37 would be needed to fool this
        assert!(!is_prime(3_215_031_751));
        assert!(!is_prime(341_550_071_728_321));
        assert!(is_prime(1_000_000_007));
    }

    #[test]
    fn pnt_estimate_examples() {
        // oracle: direct evaluation of the closed form in double precision
        let q = PrimeRangeQuery::new(1_000_000, 2, 0.2, 1).unwrap();
        let est = pnt_count_estimate(&q);
        assert!((est - 167.121_538_532_845_8).abs() < 1e-9, "{est}");

        let q = PrimeRangeQuery::new(100, 2, 0.53, 1).unwrap();
        assert!((pnt_count_estimate(&q) - 5.618_642_106_300_318).abs() < 1e-9);

        let q = PrimeRangeQuery::new(4, 2, 1e-12, 1).unwrap();
        assert!(pnt_count_estimate(&q).abs() < 1e-9);
    }

    #[test]
    fn estimate_within_sanity_envelope() {
        for (n, k, eps) in [(1_000_000u64, 2u32, 0.2), (10_000_000, 2, 0.3), (1_000_000_000, 3, 0.4)] {
            let q = PrimeRangeQuery::new(n, k, eps, 1).unwrap();
            let actual = q.candidates().len() as f64;
            assert!(actual >= 20.0);
            let est = pnt_count_estimate(&q);
            assert!((actual - est).abs() / actual <= 0.5, "n={n} actual={actual} est={est}");
        }
    }

    #[test]
    fn query_validation() {
        assert!(PrimeRangeQuery::new(1, 2, 0.2, 1).is_err());
        assert!(PrimeRangeQuery::new(100, 0, 0.2, 1).is_err());
        assert!(PrimeRangeQuery::new(100, 2, 0.0, 1).is_err());
        assert!(PrimeRangeQuery::new(100, 2, 1.0, 1).is_err());
        assert!(PrimeRangeQuery::new(100, 1, 0.5, 1).is_ok());
    }

    #[test]
    fn select_smallest_first() {
        let q = PrimeRangeQuery::new(100, 2, 0.53, 3).unwrap();
        assert_eq!(q.candidates(), vec![11, 13, 17, 19]);
        assert_eq!(q.select_smallest().unwrap(), vec![11, 13, 17]);
        let q = PrimeRangeQuery::new(100, 2, 0.53, 9).unwrap();
        assert!(q.select_smallest().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn range_is_subset_of_sieve(lo in 2.0f64..5000.0, width in 0.0f64..3000.0) {
                let hi = lo + width;
                let got = primes_in_range(lo, hi);
                let all = sieve_primes(hi.ceil() as u64);
                for p in &got {
                    prop_assert!(all.contains(p));
                    prop_assert!((*p as f64) >= lo && (*p as f64) < hi);
                }
                let expected: Vec<u64> = all.into_iter().filter(|&p| (p as f64) >= lo && (p as f64) < hi).collect();
                prop_assert_eq!(got, expected);
            }
        }
    }
}
