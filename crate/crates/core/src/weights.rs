//! Weight vectors of the rotation action, multi-indices, and resonance orders.
//!
//! Everything here is exact integer combinatorics. The resonance set of
//! coordinate `i` is the set of exponents whose weighted degree equals the
//! weight `m_i`; its largest total degree is the resonance order `mu_i`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on the number of multi-indices a single level may produce.
pub const DEFAULT_LEVEL_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WeightError {
    #[error("weight vector is empty")]
    EmptyWeight,
    #[error("weight entry {index} is {value}; entries must be positive integers")]
    NonPositiveEntry { index: usize, value: i64 },
    #[error("weight entries have gcd {gcd}; divide it out before use")]
    GcdNotOne { gcd: u64 },
    #[error("level {level} has more than {cap} multi-indices")]
    LevelTooLarge { level: u64, cap: usize },
    #[error("weight entries must be listed in non-decreasing order")]
    NotSorted,
}

/// Exponent tuple `alpha = (alpha_1, ..., alpha_n)`.
///
/// Ordering is lexicographic on the exponent vector.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// The unit vector `e_i` (0-based `i`).
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut e = vec![0; dim];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    /// Total degree `|alpha|`.
    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Weighted degree `m . alpha`.
    pub fn weighted_degree(&self, m: &Weight) -> u64 {
        self.0
            .iter()
            .zip(m.entries())
            .map(|(&a, &w)| u64::from(a) * u64::from(w))
            .sum()
    }

    /// `alpha! = prod alpha_j!`.
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&a| (1..=a).map(f64::from).product::<f64>())
            .product()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, a) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }
}

/// A normalized weight: positive, non-decreasing, gcd one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Weight(Vec<u32>);

/// Result of [`normalize_weight`]: the sorted weight and the permutation used.
///
/// `permutation[k]` is the 0-based position in the raw input of the entry
/// now at position `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedWeight {
    pub weight: Weight,
    pub permutation: Vec<usize>,
}

impl NormalizedWeight {
    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(k, &p)| k == p)
    }
}

impl Weight {
    /// Builds a weight that must already be sorted; use [`normalize_weight`]
    /// to accept arbitrary order.
    pub fn new(entries: &[i64]) -> Result<Weight, WeightError> {
        let normalized = normalize_weight(entries)?;
        // Sorting relabels coordinates, so the caller has to do it knowingly.
        if !normalized.is_identity() {
            return Err(WeightError::NotSorted);
        }
        Ok(normalized.weight)
    }

    /// The circular weight `(1, ..., 1)`.
    pub fn circular(n: usize) -> Weight {
        Weight(vec![1; n])
    }

    /// The weight `(1, 2, ..., n)`.
    pub fn ascending(n: usize) -> Weight {
        Weight((1..=n as u32).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn min(&self) -> u32 {
        self.0[0]
    }

    pub fn max(&self) -> u32 {
        self.0[self.0.len() - 1]
    }

    pub fn is_circular(&self) -> bool {
        self.0.iter().all(|&m| m == self.0[0])
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw: Vec<i64> = Vec::deserialize(d)?;
        Weight::new(&raw).map_err(serde::de::Error::custom)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Sorts a raw weight and checks the gcd condition.
///
/// Weights with a common factor are rejected rather than rescaled.
pub fn normalize_weight(raw: &[i64]) -> Result<NormalizedWeight, WeightError> {
    if raw.is_empty() {
        return Err(WeightError::EmptyWeight);
    }
    if let Some((index, &value)) = raw.iter().enumerate().find(|(_, &v)| v < 1) {
        return Err(WeightError::NonPositiveEntry { index, value });
    }
    if let Some((index, &value)) = raw.iter().enumerate().find(|(_, &v)| v > i64::from(u32::MAX)) {
        return Err(WeightError::NonPositiveEntry { index, value });
    }
    let g = raw.iter().fold(0u64, |acc, &v| gcd(acc, v as u64));
    if g != 1 {
        return Err(WeightError::GcdNotOne { gcd: g });
    }
    let mut permutation: Vec<usize> = (0..raw.len()).collect();
    permutation.sort_by_key(|&k| raw[k]);
    let weight = Weight(permutation.iter().map(|&k| raw[k] as u32).collect());
    Ok(NormalizedWeight {
        weight,
        permutation,
    })
}

/// All `alpha` with `m . alpha = k`, in ascending lexicographic order.
pub fn enumerate_level(m: &Weight, k: u64) -> Result<Vec<MultiIndex>, WeightError> {
    enumerate_level_capped(m, k, DEFAULT_LEVEL_CAP)
}

pub fn enumerate_level_capped(
    m: &Weight,
    k: u64,
    cap: usize,
) -> Result<Vec<MultiIndex>, WeightError> {
    let mut out = Vec::new();
    let mut current = vec![0u32; m.dim()];
    fill_level(m.entries(), 0, k, &mut current, &mut out, cap).map_err(|()| {
        WeightError::LevelTooLarge { level: k, cap }
    })?;
    Ok(out)
}

fn fill_level(
    weights: &[u32],
    pos: usize,
    remaining: u64,
    current: &mut Vec<u32>,
    out: &mut Vec<MultiIndex>,
    cap: usize,
) -> Result<(), ()> {
    let w = u64::from(weights[pos]);
    if pos + 1 == weights.len() {
        if remaining.is_multiple_of(w) {
            if out.len() == cap {
                return Err(());
            }
            current[pos] = (remaining / w) as u32;
            out.push(MultiIndex(current.clone()));
            current[pos] = 0;
        }
        return Ok(());
    }
    for a in 0..=remaining / w {
        current[pos] = a as u32;
        fill_level(weights, pos + 1, remaining - a * w, current, out, cap)?;
    }
    current[pos] = 0;
    Ok(())
}

/// All `alpha` with `m . alpha <= max_level`, grouped by level.
pub fn enumerate_up_to(
    m: &Weight,
    max_level: u64,
) -> Result<BTreeMap<u64, Vec<MultiIndex>>, WeightError> {
    (0..=max_level)
        .map(|k| enumerate_level(m, k).map(|level| (k, level)))
        .filter(|r| !matches!(r, Ok((_, level)) if level.is_empty()))
        .collect()
}

/// Resonance sets `E_i`, orders `mu_i`, and the global order `mu`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub weights: Weight,
    /// Keyed by 1-based coordinate index.
    pub levels: BTreeMap<usize, Vec<MultiIndex>>,
    pub orders: Vec<u32>,
    pub global_order: u32,
    pub linear_flag: bool,
}

impl ResonanceReport {
    /// `mu_i` for 0-based `i`.
    pub fn order(&self, i: usize) -> u32 {
        self.orders[i]
    }

    /// Whether `alpha` lies in the resonance set `E = U E_i`.
    pub fn contains(&self, alpha: &MultiIndex) -> bool {
        self.levels.values().any(|set| set.contains(alpha))
    }
}

pub fn resonance_report(m: &Weight) -> Result<ResonanceReport, WeightError> {
    let mut levels = BTreeMap::new();
    let mut orders = Vec::with_capacity(m.dim());
    for (i, &mi) in m.entries().iter().enumerate() {
        let set = enumerate_level(m, u64::from(mi))?;
        // e_i always lies in E_i, so the set is never empty.
        let mu = set.iter().map(MultiIndex::total_degree).max().unwrap_or(0);
        orders.push(mu);
        levels.insert(i + 1, set);
    }
    let global_order = orders.iter().copied().max().unwrap_or(0);
    Ok(ResonanceReport {
        weights: m.clone(),
        levels,
        orders,
        global_order,
        linear_flag: global_order == 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(e: &[i64]) -> Weight {
        Weight::new(e).unwrap()
    }

    fn mi(e: &[u32]) -> MultiIndex {
        MultiIndex::new(e.to_vec())
    }

    #[test]
    fn normalize_sorts_and_reports_permutation() {
        let n = normalize_weight(&[3, 1, 2]).unwrap();
        assert_eq!(n.weight.entries(), &[1, 2, 3]);
        // 1-based this is (2,3,1)
        assert_eq!(n.permutation, vec![1, 2, 0]);
        let n = normalize_weight(&[1, 1, 1]).unwrap();
        assert_eq!(n.weight.entries(), &[1, 1, 1]);
        assert!(n.is_identity());
    }

    #[test]
    fn normalize_errors() {
        assert_eq!(
            normalize_weight(&[2, 4]),
            Err(WeightError::GcdNotOne { gcd: 2 })
        );
        assert_eq!(normalize_weight(&[]), Err(WeightError::EmptyWeight));
        assert_eq!(
            normalize_weight(&[1, 0]),
            Err(WeightError::NonPositiveEntry { index: 1, value: 0 })
        );
        assert!(Weight::new(&[2, 1]).is_err());
    }

    #[test]
    fn level_examples() {
        assert_eq!(
            enumerate_level(&w(&[1, 2]), 2).unwrap(),
            vec![mi(&[0, 1]), mi(&[2, 0])]
        );
        assert_eq!(
            enumerate_level(&w(&[1, 1]), 1).unwrap(),
            vec![mi(&[0, 1]), mi(&[1, 0])]
        );
        assert_eq!(enumerate_level(&w(&[2, 3]), 2).unwrap(), vec![mi(&[1, 0])]);
        assert_eq!(enumerate_level(&w(&[2, 3]), 1).unwrap(), vec![]);
        assert_eq!(enumerate_level(&w(&[1, 2, 3]), 0).unwrap(), vec![mi(&[0, 0, 0])]);
    }

    #[test]
    fn level_cap_is_enforced() {
        let m = Weight::circular(4);
        assert!(matches!(
            enumerate_level_capped(&m, 10, 50),
            Err(WeightError::LevelTooLarge { level: 10, cap: 50 })
        ));
        // C(13,3) = 286
        assert_eq!(enumerate_level_capped(&m, 10, 286).unwrap().len(), 286);
    }

    #[test]
    fn resonance_examples() {
        for n in 1..=5 {
            let r = resonance_report(&Weight::circular(n)).unwrap();
            assert_eq!(r.global_order, 1);
            assert!(r.linear_flag);
        }
        assert_eq!(resonance_report(&w(&[2, 3])).unwrap().global_order, 1);
        for n in 1..=6 {
            let r = resonance_report(&Weight::ascending(n)).unwrap();
            assert_eq!(r.orders, (1..=n as u32).collect::<Vec<_>>());
        }
    }

    #[test]
    fn resonance_json_keys() {
        let r = resonance_report(&w(&[1, 2])).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["weights", "levels", "orders", "global_order", "linear_flag"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["levels"]["2"], serde_json::json!([[0, 1], [2, 0]]));
        let back: ResonanceReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    fn brute_force_level(m: &[u32], k: u64) -> Vec<Vec<u32>> {
        let bounds: Vec<u32> = m.iter().map(|&mj| (k / u64::from(mj)) as u32).collect();
        let mut out = Vec::new();
        let mut cur = vec![0u32; m.len()];
        loop {
            let deg: u64 = cur.iter().zip(m).map(|(&a, &b)| u64::from(a * b)).sum();
            if deg == k {
                out.push(cur.clone());
            }
            let mut pos = m.len();
            loop {
                if pos == 0 {
                    out.sort();
                    return out;
                }
                pos -= 1;
                if cur[pos] < bounds[pos] {
                    cur[pos] += 1;
                    break;
                }
                cur[pos] = 0;
            }
        }
    }

    fn sorted_weight() -> impl Strategy<Value = Weight> {
        prop::collection::vec(1u32..=6, 1..=4).prop_filter_map("gcd", |mut v| {
            v.sort();
            let raw: Vec<i64> = v.iter().map(|&x| i64::from(x)).collect();
            Weight::new(&raw).ok()
        })
    }

    proptest! {
        #[test]
        fn level_matches_box_scan(m in sorted_weight(), k in 0u64..=20) {
            let got: Vec<Vec<u32>> = enumerate_level(&m, k)
                .unwrap()
                .into_iter()
                .map(|a| a.exponents().to_vec())
                .collect();
            prop_assert_eq!(got, brute_force_level(m.entries(), k));
        }

        #[test]
        fn resonance_order_bounds(m in sorted_weight()) {
            let r = resonance_report(&m).unwrap();
            prop_assert!(r.orders[0] >= 1);
            for (i, &mu) in r.orders.iter().enumerate() {
                prop_assert!(mu <= m.entries()[i]);
                for alpha in &r.levels[&(i + 1)] {
                    prop_assert_eq!(alpha.weighted_degree(&m), u64::from(m.entries()[i]));
                }
            }
        }
    }

    #[test]
    fn normal_pairs_have_order_one() {
        for m1 in 2..=50i64 {
            for m2 in m1..=50 {
                if gcd(m1 as u64, m2 as u64) != 1 {
                    continue;
                }
                let r = resonance_report(&w(&[m1, m2])).unwrap();
                assert_eq!(r.global_order, 1, "m = ({m1},{m2})");
            }
        }
    }
}
