//! Exact moments of uniformly drawn training-index sets.
//!
//! Two training sets `S_j`, `S_j'` of size `n1` are drawn independently and
//! uniformly from `{0, .., n-1}`. Fixed distinct indices are `i = 0`,
//! `i' = 1`, `i'' = 2`. Every tag names one expectation over that draw.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest number of ordered subset pairs `enumerate_moment` will visit.
pub const ENUMERATION_BUDGET: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SplitGeometry {
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
}

impl SplitGeometry {
    pub fn new(n: usize, n1: usize) -> Result<Self> {
        if n1 >= n || n1 == 0 {
            return Err(Error::InvalidGeometry(format!(
                "need 1 <= n1 < n, got n={n}, n1={n1}"
            )));
        }
        let n2 = n - n1;
        if n2 > n1 {
            return Err(Error::InvalidGeometry(format!(
                "need n1 >= n/2, got n={n}, n1={n1}"
            )));
        }
        Ok(SplitGeometry { n, n1, n2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MomentTag {
    A,
    B1,
    B2,
    C,
    DMean,
    DVar,
    E,
    F,
    G,
    H,
    I1,
    I2,
    J,
    K,
}

impl MomentTag {
    pub const ALL: [MomentTag; 14] = [
        MomentTag::A,
        MomentTag::B1,
        MomentTag::B2,
        MomentTag::C,
        MomentTag::DMean,
        MomentTag::DVar,
        MomentTag::E,
        MomentTag::F,
        MomentTag::G,
        MomentTag::H,
        MomentTag::I1,
        MomentTag::I2,
        MomentTag::J,
        MomentTag::K,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MomentTag::A => "a",
            MomentTag::B1 => "b1",
            MomentTag::B2 => "b2",
            MomentTag::C => "c",
            MomentTag::DMean => "d_mean",
            MomentTag::DVar => "d_var",
            MomentTag::E => "e",
            MomentTag::F => "f",
            MomentTag::G => "g",
            MomentTag::H => "h",
            MomentTag::I1 => "i1",
            MomentTag::I2 => "i2",
            MomentTag::J => "j",
            MomentTag::K => "k",
        }
    }

    /// Smallest n for which the closed form is defined.
    pub fn min_n(self) -> usize {
        match self {
            MomentTag::C | MomentTag::I2 | MomentTag::J => 3,
            _ => 2,
        }
    }

    /// Whether the defining expression involves the second set.
    pub fn uses_pair(self) -> bool {
        matches!(
            self,
            MomentTag::F
                | MomentTag::G
                | MomentTag::H
                | MomentTag::I1
                | MomentTag::I2
                | MomentTag::J
                | MomentTag::K
        )
    }
}

impl fmt::Display for MomentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MomentTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        MomentTag::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown moment tag '{s}'")))
    }
}

fn ratio(num: i128, den: i128) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Closed-form value of a tagged moment.
pub fn lemma_moment(tag: MomentTag, geom: SplitGeometry) -> Result<BigRational> {
    if geom.n < tag.min_n() {
        return Err(Error::InvalidGeometry(format!(
            "tag {tag} needs n >= {}, got n={}",
            tag.min_n(),
            geom.n
        )));
    }
    let n = geom.n as i128;
    let n1 = geom.n1 as i128;
    let n2 = geom.n2 as i128;
    let v = match tag {
        MomentTag::A | MomentTag::DMean => ratio(n2, n),
        MomentTag::B1 | MomentTag::E => ratio(n2 * (n2 - 1), n * (n - 1)),
        MomentTag::B2 => ratio(n1 * n2, n * (n - 1)),
        MomentTag::C => ratio(n1 * n2 * (n1 - 1), n * (n - 1) * (n - 2)),
        MomentTag::DVar => ratio(n1 * n2, n * n),
        MomentTag::F => ratio(n2 * n2, n * n),
        MomentTag::G => ratio(n1 * n2 * n2, n * n * (n - 1)),
        MomentTag::H => ratio(n1 * n1 * n2 * n2, n * n * (n - 1) * (n - 1)),
        MomentTag::I1 => ratio(n1 * n1 * n2 * n2, n * n * (n - 1)),
        MomentTag::I2 => ratio(
            n1 * n1 * n2 * n2 * (n1 * (n1 - 1) + n2 - 1),
            n * n * (n - 1) * (n - 2),
        ),
        MomentTag::J => ratio(
            n1 * n1 * n2 * n2 * ((n - 2) * (n - 2) + (n - 3) * (n1 - 1) * (n1 - 1)),
            n * n * (n - 1) * (n - 1) * (n - 2),
        ),
        MomentTag::K => ratio(n1 * n1 * n2 * n2 * (n1 - 1), n * n * (n - 1) * (n - 1)),
    };
    Ok(v)
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for t in 0..k {
        acc = acc * (n - t) as u128 / (t + 1) as u128;
    }
    acc
}

/// The `rank`-th `k`-subset of `{0..n}` in lexicographic order, as a bitmask.
pub fn unrank_subset(n: usize, k: usize, mut rank: u128) -> u64 {
    let mut mask = 0u64;
    let mut next = 0usize;
    for slot in 0..k {
        let remaining = k - slot - 1;
        loop {
            let block = binomial(n - next - 1, remaining);
            if rank < block {
                break;
            }
            rank -= block;
            next += 1;
        }
        mask |= 1 << next;
        next += 1;
    }
    mask
}

/// Value of the tag's defining expression for one pair of training sets.
fn integrand(tag: MomentTag, sj: u64, sjp: u64) -> u64 {
    let i = 1u64;
    let ip = 1u64 << 1;
    let ipp = 1u64 << 2;
    let in_j = |b: u64| sj & b != 0;
    let in_jp = |b: u64| sjp & b != 0;
    let y = (sj & sjp).count_ones() as u64;
    let ind = |c: bool| c as u64;
    match tag {
        MomentTag::A | MomentTag::DMean => ind(!in_j(i)),
        MomentTag::B1 | MomentTag::E => ind(!in_j(i) && !in_j(ip)),
        MomentTag::B2 => ind(!in_j(i) && in_j(ip)),
        MomentTag::C => ind(!in_j(i) && in_j(ip) && in_j(ipp)),
        // second moment of the indicator; the mean is subtracted afterwards
        MomentTag::DVar => ind(!in_j(i)),
        MomentTag::F => ind(!in_j(i) && !in_jp(i)),
        MomentTag::G => ind(!in_j(i) && !in_jp(ip) && in_j(ip)),
        MomentTag::H => ind(!in_j(i) && !in_jp(ip) && in_j(ip) && in_jp(i)),
        MomentTag::I1 => y * ind(!in_j(i) && !in_jp(i)),
        MomentTag::I2 => y * y * ind(!in_j(i) && !in_jp(i)),
        MomentTag::J => y * y * ind(!in_j(i) && !in_jp(ip)),
        MomentTag::K => y * ind(!in_j(i) && !in_jp(ip) && in_jp(i)),
    }
}

fn finish(tag: MomentTag, sum: u128, count: u128) -> BigRational {
    let mean = BigRational::new(BigInt::from(sum), BigInt::from(count));
    if tag == MomentTag::DVar {
        // indicator: E[1^2] = E[1]
        &mean - &mean * &mean
    } else {
        mean
    }
}

/// Brute-force expectation over all ordered pairs of training sets.
pub fn enumerate_moment(tag: MomentTag, geom: SplitGeometry) -> Result<BigRational> {
    if geom.n < tag.min_n() {
        return Err(Error::InvalidGeometry(format!(
            "tag {tag} needs n >= {}, got n={}",
            tag.min_n(),
            geom.n
        )));
    }
    if geom.n > 63 {
        return Err(Error::BudgetExceeded {
            pairs: u128::MAX,
            budget: ENUMERATION_BUDGET,
        });
    }
    let m = binomial(geom.n, geom.n1);
    let pairs = m.saturating_mul(m);
    if pairs > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded {
            pairs,
            budget: ENUMERATION_BUDGET,
        });
    }
    let subsets: Vec<u64> = (0..m).map(|r| unrank_subset(geom.n, geom.n1, r)).collect();
    let mut sum: u128 = 0;
    if tag.uses_pair() {
        for &a in &subsets {
            for &b in &subsets {
                sum += integrand(tag, a, b) as u128;
            }
        }
        Ok(finish(tag, sum, pairs))
    } else {
        for &a in &subsets {
            sum += integrand(tag, a, 0) as u128;
        }
        Ok(finish(tag, sum, m))
    }
}

/// Training-set overlaps of two distinct folds: `(|S_j ∩ S_j'|, |S_j^c ∩ S_j'^c|)`.
pub fn kfold_overlap(n: usize, k: usize) -> Result<(usize, usize)> {
    if k < 2 || k > n {
        return Err(Error::OutOfRange(format!(
            "need 2 <= k <= n, got k={k}, n={n}"
        )));
    }
    if n % k != 0 {
        return Err(Error::NotDivisible { n, k });
    }
    Ok(((k - 2) * n / k, 0))
}

/// Expectation of a pair tag in the k-fold regime: the two test sets are
/// distinct folds of a uniformly random equal partition, so they are disjoint
/// rather than independent.
pub fn enumerate_kfold_moment(tag: MomentTag, n: usize, k: usize) -> Result<BigRational> {
    kfold_overlap(n, k)?;
    if n > 63 {
        return Err(Error::BudgetExceeded {
            pairs: u128::MAX,
            budget: ENUMERATION_BUDGET,
        });
    }
    let m = n / k;
    let full = (1u64 << n) - 1;
    let tests: Vec<u64> = (0..binomial(n, m))
        .map(|r| unrank_subset(n, m, r))
        .collect();
    let pairs = binomial(n, m).saturating_mul(binomial(n - m, m));
    if pairs > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded {
            pairs,
            budget: ENUMERATION_BUDGET,
        });
    }
    let mut sum: u128 = 0;
    let mut count: u128 = 0;
    for &ta in &tests {
        for &tb in &tests {
            if ta & tb != 0 {
                continue;
            }
            sum += integrand(tag, full & !ta, full & !tb) as u128;
            count += 1;
        }
    }
    Ok(finish(tag, sum, count))
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub tag: String,
    pub closed_form: String,
    pub enumerated: String,
    pub value: f64,
    pub pass: bool,
}

/// Compares closed forms against enumeration for the given tags.
pub fn oracle_check(geom: SplitGeometry, tags: &[MomentTag]) -> Result<Vec<OracleRow>> {
    let mut rows = Vec::with_capacity(tags.len());
    for &tag in tags {
        if geom.n < tag.min_n() {
            continue;
        }
        let closed = lemma_moment(tag, geom)?;
        let enumerated = enumerate_moment(tag, geom)?;
        rows.push(OracleRow {
            tag: tag.to_string(),
            value: to_f64(&closed),
            pass: closed == enumerated,
            closed_form: closed.to_string(),
            enumerated: enumerated.to_string(),
        });
    }
    Ok(rows)
}

pub fn to_f64(x: &BigRational) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    x.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(a: i128, b: i128) -> BigRational {
        ratio(a, b)
    }

    #[test]
    fn closed_form_values() {
        let g = SplitGeometry::new(10, 6).unwrap();
        assert_eq!(lemma_moment(MomentTag::A, g).unwrap(), r(4, 10));
        let g = SplitGeometry::new(2, 1).unwrap();
        assert_eq!(lemma_moment(MomentTag::A, g).unwrap(), r(1, 2));
        let g = SplitGeometry::new(6, 3).unwrap();
        assert_eq!(lemma_moment(MomentTag::I1, g).unwrap(), r(9, 20));
        let g = SplitGeometry::new(5, 3).unwrap();
        assert_eq!(lemma_moment(MomentTag::F, g).unwrap(), r(4, 25));
    }

    #[test]
    fn small_n_rejected() {
        let g = SplitGeometry::new(2, 1).unwrap();
        assert!(matches!(
            lemma_moment(MomentTag::C, g),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(SplitGeometry::new(6, 2).is_err());
        assert!(SplitGeometry::new(6, 6).is_err());
    }

    #[test]
    fn enumeration_small_cases() {
        let g = SplitGeometry::new(4, 2).unwrap();
        assert_eq!(enumerate_moment(MomentTag::A, g).unwrap(), r(1, 2));
        let g = SplitGeometry::new(6, 3).unwrap();
        assert_eq!(
            enumerate_moment(MomentTag::H, g).unwrap(),
            lemma_moment(MomentTag::H, g).unwrap()
        );
    }

    #[test]
    fn budget_guard() {
        let g = SplitGeometry::new(30, 15).unwrap();
        assert!(matches!(
            enumerate_moment(MomentTag::F, g),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn unranking_is_lexicographic() {
        let all: Vec<u64> = (0..binomial(5, 2))
            .map(|r| unrank_subset(5, 2, r))
            .collect();
        assert_eq!(all[0], 0b00011);
        assert_eq!(all[1], 0b00101);
        assert_eq!(*all.last().unwrap(), 0b11000);
        let mut sorted = all.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), 10);
    }

    #[test]
    fn kfold_overlaps() {
        assert_eq!(kfold_overlap(10, 2).unwrap(), (0, 0));
        assert_eq!(kfold_overlap(12, 3).unwrap(), (4, 0));
        assert_eq!(kfold_overlap(100, 10).unwrap(), (80, 0));
        assert!(matches!(
            kfold_overlap(10, 3),
            Err(Error::NotDivisible { .. })
        ));
    }

    #[test]
    fn kfold_regime_differs_from_independent_draws() {
        // disjoint test folds never share a held-out index
        let f = enumerate_kfold_moment(MomentTag::F, 6, 3).unwrap();
        assert!(f.is_zero());
        let g = SplitGeometry::new(6, 4).unwrap();
        assert!(!lemma_moment(MomentTag::F, g).unwrap().is_zero());
    }

    #[test]
    fn tag_round_trip() {
        for t in MomentTag::ALL {
            assert_eq!(t.name().parse::<MomentTag>().unwrap(), t);
        }
        assert!("zz".parse::<MomentTag>().is_err());
    }
}
