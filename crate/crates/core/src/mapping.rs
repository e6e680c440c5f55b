//! Label mappings: families of site functions `f_i: Z/NZ -> Z/N_iZ` that
//! split an `N`-class label into `n` small sub-labels.
//!
//! Four constructions are supported:
//!
//! - **mixed**: `f_i(x) = x mod p_i` for distinct primes `p_i`;
//! - **simplex**: the base-`p` digits of `x` are the coefficients of a
//!   polynomial of degree `< k` over GF(p), evaluated at `n` distinct points
//!   (a Reed–Solomon code, so the full message space has minimum distance
//!   `n - k + 1`);
//! - **ecoc**: the binary expansion of `x`, most significant bit first;
//! - **onehot**: a single site carrying the label itself.
//!
//! Construction checks injectivity structurally, and additionally by
//! enumeration when `N <= 100_000`.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeField};
use crate::primes::is_prime;

/// Labels up to this size are checked for injectivity by enumeration.
pub const EXHAUSTIVE_INJECTIVITY_LIMIT: usize = 100_000;

const MAX_MESSAGE_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingKind {
    Mixed,
    Simplex,
    Ecoc,
    Onehot,
}

impl fmt::Display for MappingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MappingKind::Mixed => "mixed",
            MappingKind::Simplex => "simplex",
            MappingKind::Ecoc => "ecoc",
            MappingKind::Onehot => "onehot",
        };
        f.write_str(s)
    }
}

/// On-disk description of a mapping. Fields not used by `kind` are omitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingSpec {
    pub kind: MappingKind,
    #[serde(rename = "N")]
    pub n_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primes: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<u64>>,
}

impl MappingSpec {
    fn bare(kind: MappingKind, n_classes: usize) -> Self {
        MappingSpec {
            kind,
            n_classes,
            primes: None,
            p: None,
            k: None,
            n: None,
            points: None,
        }
    }

    pub fn mixed(n_classes: usize, primes: &[u64]) -> Self {
        MappingSpec {
            primes: Some(primes.to_vec()),
            ..Self::bare(MappingKind::Mixed, n_classes)
        }
    }

    /// Simplex mapping with the default evaluation points `i mod p`, `i = 1..=n`.
    pub fn simplex(n_classes: usize, p: u64, k: usize, n: usize) -> Self {
        MappingSpec {
            p: Some(p),
            k: Some(k),
            n: Some(n),
            ..Self::bare(MappingKind::Simplex, n_classes)
        }
    }

    pub fn with_points(mut self, points: &[u64]) -> Self {
        self.points = Some(points.to_vec());
        self
    }

    pub fn ecoc(n_classes: usize, bits: usize) -> Self {
        MappingSpec {
            n: Some(bits),
            ..Self::bare(MappingKind::Ecoc, n_classes)
        }
    }

    pub fn onehot(n_classes: usize) -> Self {
        Self::bare(MappingKind::Onehot, n_classes)
    }

    pub fn build(&self) -> Result<LabelMapping> {
        LabelMapping::from_spec(self)
    }

    fn require<T: Clone>(field: &Option<T>, name: &str, kind: MappingKind) -> Result<T> {
        field
            .clone()
            .ok_or_else(|| Error::invalid(format!("{kind} mapping requires `{name}`")))
    }
}

/// The image of one label: one value per site.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Codeword(pub Vec<usize>);

impl Codeword {
    pub fn sites(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of positions where the two codewords differ.
    pub fn hamming(&self, other: &Codeword) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl fmt::Display for Codeword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Encoder {
    Mixed { primes: Vec<u64> },
    Simplex { field: PrimeField, k: usize, points: Vec<u64> },
    Ecoc { bits: usize },
    OneHot,
}

/// A validated, immutable label mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMapping {
    n_classes: usize,
    encoder: Encoder,
    site_sizes: Vec<usize>,
    effective_k: usize,
}

impl LabelMapping {
    pub fn from_spec(spec: &MappingSpec) -> Result<Self> {
        match spec.kind {
            MappingKind::Mixed => {
                let primes = MappingSpec::require(&spec.primes, "primes", spec.kind)?;
                Self::mixed(spec.n_classes, &primes)
            }
            MappingKind::Simplex => {
                let p = MappingSpec::require(&spec.p, "p", spec.kind)?;
                let k = MappingSpec::require(&spec.k, "k", spec.kind)?;
                let n = MappingSpec::require(&spec.n, "n", spec.kind)?;
                match &spec.points {
                    Some(points) => Self::simplex_with_points(spec.n_classes, p, k, n, points),
                    None => Self::simplex(spec.n_classes, p, k, n),
                }
            }
            MappingKind::Ecoc => {
                let bits = MappingSpec::require(&spec.n, "n", spec.kind)?;
                Self::ecoc(spec.n_classes, bits)
            }
            MappingKind::Onehot => {
                if spec.n.is_some_and(|n| n != 1) {
                    return Err(Error::invalid("onehot mapping has exactly one site"));
                }
                Self::onehot(spec.n_classes)
            }
        }
    }

    /// Mixed mapping `f_i(x) = x mod p_i`.
    pub fn mixed(n_classes: usize, primes: &[u64]) -> Result<Self> {
        check_classes(n_classes)?;
        if primes.is_empty() {
            return Err(Error::invalid("mixed mapping needs at least one prime"));
        }
        if let Some(&c) = primes.iter().find(|&&p| !is_prime(p)) {
            return Err(Error::invalid(format!("{c} is not prime")));
        }
        let mut sorted = primes.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("mixed mapping primes must be distinct"));
        }
        let mut product = 1u128;
        let mut effective_k = None;
        for (i, &p) in sorted.iter().enumerate() {
            product = product.saturating_mul(p as u128);
            if effective_k.is_none() && product >= n_classes as u128 {
                effective_k = Some(i + 1);
            }
        }
        let Some(effective_k) = effective_k else {
            return Err(Error::NotInjective(format!(
                "product of primes {product} is below N = {n_classes}"
            )));
        };
        let lm = LabelMapping {
            n_classes,
            site_sizes: primes.iter().map(|&p| p as usize).collect(),
            encoder: Encoder::Mixed {
                primes: primes.to_vec(),
            },
            effective_k,
        };
        lm.confirm_injective()?;
        Ok(lm)
    }

    /// Simplex mapping with evaluation points `i mod p` for `i = 1..=n`
    /// (so `n = p` uses every field element, with `p` itself wrapping to 0).
    pub fn simplex(n_classes: usize, p: u64, k: usize, n: usize) -> Result<Self> {
        let points: Vec<u64> = (1..=n as u64).map(|i| i % p.max(1)).collect();
        Self::simplex_with_points(n_classes, p, k, n, &points)
    }

    pub fn simplex_with_points(
        n_classes: usize,
        p: u64,
        k: usize,
        n: usize,
        points: &[u64],
    ) -> Result<Self> {
        check_classes(n_classes)?;
        let field = PrimeField::new(p)?;
        if k == 0 || k > MAX_MESSAGE_LEN {
            return Err(Error::invalid(format!(
                "message length k must be in 1..={MAX_MESSAGE_LEN}, got {k}"
            )));
        }
        if n == 0 {
            return Err(Error::invalid("code length n must be positive"));
        }
        let capacity = (p as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
        if capacity < n_classes as u128 {
            return Err(Error::NotInjective(format!(
                "p^k = {p}^{k} = {capacity} is below N = {n_classes}"
            )));
        }
        if n as u64 > p {
            return Err(Error::TooManySites { n, p });
        }
        if n < k {
            return Err(Error::NotInjective(format!(
                "code length {n} is shorter than message length {k}"
            )));
        }
        if points.len() != n {
            return Err(Error::invalid(format!(
                "expected {n} evaluation points, got {}",
                points.len()
            )));
        }
        if let Some(&bad) = points.iter().find(|&&x| x >= p) {
            return Err(Error::invalid(format!(
                "evaluation point {bad} is not an element of GF({p})"
            )));
        }
        let distinct: HashSet<u64> = points.iter().copied().collect();
        if distinct.len() != points.len() {
            return Err(Error::invalid("evaluation points must be distinct"));
        }
        let lm = LabelMapping {
            n_classes,
            site_sizes: vec![p as usize; n],
            encoder: Encoder::Simplex {
                field,
                k,
                points: points.to_vec(),
            },
            effective_k: k,
        };
        lm.confirm_injective()?;
        Ok(lm)
    }

    /// Binary ECOC, site 0 is the most significant bit.
    pub fn ecoc(n_classes: usize, bits: usize) -> Result<Self> {
        check_classes(n_classes)?;
        if bits == 0 || bits > 63 {
            return Err(Error::invalid(format!("bit length must be in 1..=63, got {bits}")));
        }
        if (1u64 << bits) < n_classes as u64 {
            return Err(Error::NotInjective(format!(
                "2^{bits} is below N = {n_classes}"
            )));
        }
        let effective_k = (0..=bits)
            .find(|&b| (1u64 << b) >= n_classes as u64)
            .unwrap_or(bits);
        let lm = LabelMapping {
            n_classes,
            site_sizes: vec![2; bits],
            encoder: Encoder::Ecoc { bits },
            effective_k,
        };
        lm.confirm_injective()?;
        Ok(lm)
    }

    pub fn onehot(n_classes: usize) -> Result<Self> {
        check_classes(n_classes)?;
        Ok(LabelMapping {
            n_classes,
            site_sizes: vec![n_classes],
            encoder: Encoder::OneHot,
            effective_k: 1,
        })
    }

    fn confirm_injective(&self) -> Result<()> {
        if self.n_classes > EXHAUSTIVE_INJECTIVITY_LIMIT {
            return Ok(());
        }
        let mut seen = HashSet::with_capacity(self.n_classes);
        let mut buf = vec![0usize; self.n_sites()];
        for y in 0..self.n_classes {
            self.encode_into(y, &mut buf);
            if !seen.insert(buf.clone()) {
                return Err(Error::NotInjective(format!(
                    "label {y} collides with an earlier label"
                )));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> MappingKind {
        match self.encoder {
            Encoder::Mixed { .. } => MappingKind::Mixed,
            Encoder::Simplex { .. } => MappingKind::Simplex,
            Encoder::Ecoc { .. } => MappingKind::Ecoc,
            Encoder::OneHot => MappingKind::Onehot,
        }
    }

    /// The `MappingSpec` describing this mapping, with every parameter explicit.
    pub fn spec(&self) -> MappingSpec {
        match &self.encoder {
            Encoder::Mixed { primes } => MappingSpec::mixed(self.n_classes, primes),
            Encoder::Simplex { field, k, points } => {
                MappingSpec::simplex(self.n_classes, field.modulus(), *k, points.len())
                    .with_points(points)
            }
            Encoder::Ecoc { bits } => MappingSpec::ecoc(self.n_classes, *bits),
            Encoder::OneHot => MappingSpec::onehot(self.n_classes),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_sites(&self) -> usize {
        self.site_sizes.len()
    }

    pub fn site_sizes(&self) -> &[usize] {
        &self.site_sizes
    }

    pub fn max_site_size(&self) -> usize {
        self.site_sizes.iter().copied().max().unwrap_or(0)
    }

    /// Smallest `k` such that any `k` sites determine the label.
    pub fn effective_k(&self) -> usize {
        self.effective_k
    }

    /// `(p, k, points)` for simplex mappings.
    pub fn simplex_params(&self) -> Option<(PrimeField, usize, &[u64])> {
        match &self.encoder {
            Encoder::Simplex { field, k, points } => Some((*field, *k, points)),
            _ => None,
        }
    }

    /// Value of site `site` for label `y`. The caller guarantees `y < N` and
    /// `site < n`.
    #[inline]
    pub fn site_value(&self, site: usize, y: usize) -> usize {
        debug_assert!(y < self.n_classes && site < self.n_sites());
        match &self.encoder {
            Encoder::Mixed { primes } => y % primes[site] as usize,
            Encoder::Simplex { field, k, points } => {
                let mut digits = [0u64; MAX_MESSAGE_LEN];
                let digits = fill_digits(y as u64, field.modulus(), *k, &mut digits);
                field.horner(digits, points[site]) as usize
            }
            Encoder::Ecoc { bits } => (y >> (bits - 1 - site)) & 1,
            Encoder::OneHot => y,
        }
    }

    /// Writes the codeword of `y` into `out` (length `n`), unchecked.
    #[inline]
    pub fn encode_into(&self, y: usize, out: &mut [usize]) {
        match &self.encoder {
            Encoder::Simplex { field, k, points } => {
                let mut digits = [0u64; MAX_MESSAGE_LEN];
                let digits = fill_digits(y as u64, field.modulus(), *k, &mut digits);
                for (o, &x) in out.iter_mut().zip(points) {
                    *o = field.horner(digits, x) as usize;
                }
            }
            _ => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = self.site_value(i, y);
                }
            }
        }
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.n_classes {
            return Err(Error::invalid(format!(
                "label {y} out of range for N = {}",
                self.n_classes
            )));
        }
        Ok(())
    }

    pub fn map_label(&self, y: usize) -> Result<Codeword> {
        self.check_label(y)?;
        let mut out = vec![0; self.n_sites()];
        self.encode_into(y, &mut out);
        Ok(Codeword(out))
    }

    /// Number of sites on which `y1` and `y2` agree.
    pub fn agreeing_sites(&self, y1: usize, y2: usize) -> Result<usize> {
        self.check_label(y1)?;
        self.check_label(y2)?;
        Ok((0..self.n_sites())
            .filter(|&i| self.site_value(i, y1) == self.site_value(i, y2))
            .count())
    }

    /// Inverse map: the label whose codeword is `sites`, if any.
    pub fn label_of(&self, sites: &[usize]) -> Option<usize> {
        if sites.len() != self.n_sites()
            || sites.iter().zip(&self.site_sizes).any(|(&v, &s)| v >= s)
        {
            return None;
        }
        let candidate = match &self.encoder {
            Encoder::OneHot => sites[0],
            Encoder::Ecoc { .. } => sites.iter().fold(0usize, |acc, &b| (acc << 1) | b),
            Encoder::Mixed { primes } => self.crt_candidate(primes, sites)?,
            Encoder::Simplex { field, k, points } => {
                interpolate_label(*field, *k, points, sites, self.n_classes)?
            }
        };
        if candidate >= self.n_classes {
            return None;
        }
        let mut buf = vec![0; self.n_sites()];
        self.encode_into(candidate, &mut buf);
        (buf == sites).then_some(candidate)
    }

    fn crt_candidate(&self, primes: &[u64], residues: &[usize]) -> Option<usize> {
        let n = self.n_classes as u128;
        let (mut x, mut m) = (0u128, 1u128);
        for (&p, &r) in primes.iter().zip(residues) {
            if m >= n {
                break;
            }
            let p128 = p as u128;
            let gf = PrimeField::new(p).ok()?;
            let m_inv = gf.element((m % p128) as u64).inv().ok()?.value() as u128;
            let diff = (r as u128 + p128 - x % p128) % p128;
            let t = diff * m_inv % p128;
            x += m * t;
            m *= p128;
        }
        usize::try_from(x).ok()
    }
}

fn check_classes(n_classes: usize) -> Result<()> {
    if n_classes == 0 {
        return Err(Error::invalid("class count must be positive"));
    }
    Ok(())
}

/// Base-`p` digits of `x`, lowest first, into the first `k` slots of `buf`.
#[inline]
fn fill_digits(mut x: u64, p: u64, k: usize, buf: &mut [u64; MAX_MESSAGE_LEN]) -> &[u64] {
    for d in buf.iter_mut().take(k) {
        *d = x % p;
        x /= p;
    }
    &buf[..k]
}

/// Recovers the message polynomial from the first `k` sites by solving the
/// Vandermonde system over GF(p), then reads it back as a base-`p` integer.
fn interpolate_label(
    field: PrimeField,
    k: usize,
    points: &[u64],
    sites: &[usize],
    n_classes: usize,
) -> Option<usize> {
    let el = |v: u64| field.element(v);
    // augmented rows [x^0 .. x^{k-1} | y]
    let mut rows: Vec<Vec<FieldElement>> = (0..k)
        .map(|r| {
            let x = el(points[r]);
            let mut row: Vec<FieldElement> = (0..k).map(|j| x.pow(j as u64)).collect();
            row.push(el(sites[r] as u64));
            row
        })
        .collect();
    for col in 0..k {
        let pivot = (col..k).find(|&r| rows[r][col].value() != 0)?;
        rows.swap(col, pivot);
        let inv = rows[col][col].inv().ok()?;
        for v in rows[col].iter_mut() {
            *v = v.try_mul(&inv).ok()?;
        }
        for r in 0..k {
            if r != col && rows[r][col].value() != 0 {
                let factor = rows[r][col];
                for c in col..=k {
                    let sub = rows[col][c].try_mul(&factor).ok()?;
                    rows[r][c] = rows[r][c].try_sub(&sub).ok()?;
                }
            }
        }
    }
    let p = field.modulus() as u128;
    let mut label = 0u128;
    for row in rows.iter().rev() {
        label = label.checked_mul(p)?.checked_add(row[k].value() as u128)?;
        if label >= n_classes as u128 {
            return None;
        }
    }
    usize::try_from(label).ok()
}
