//! Finite-support probability distributions with exact rational masses.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::{format_fraction, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DistError {
    #[error("distribution has no entries")]
    Empty,
    #[error("negative mass {0}")]
    NegativeMass(String),
    #[error("masses sum to {0}, expected 1")]
    SumNotOne(String),
    #[error("halt mass {0} outside [0, 1]")]
    BadHaltMass(String),
}

/// A probability distribution: positive masses summing to exactly one.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Distribution<T: Ord> {
    entries: BTreeMap<T, Rational>,
}

impl<T: Ord + Clone> Distribution<T> {
    /// Builds a distribution, dropping zero-mass entries. Duplicate outcomes
    /// are accumulated.
    pub fn new(entries: impl IntoIterator<Item = (T, Rational)>) -> Result<Self, DistError> {
        let mut map: BTreeMap<T, Rational> = BTreeMap::new();
        let mut seen = false;
        for (outcome, mass) in entries {
            seen = true;
            if mass.is_negative() {
                return Err(DistError::NegativeMass(format_fraction(&mass)));
            }
            *map.entry(outcome).or_insert_with(Rational::zero) += mass;
        }
        if !seen {
            return Err(DistError::Empty);
        }
        map.retain(|_, m| !m.is_zero());
        let total: Rational = map.values().sum();
        if !total.is_one() {
            return Err(DistError::SumNotOne(format_fraction(&total)));
        }
        Ok(Self { entries: map })
    }

    pub fn point(outcome: T) -> Self {
        Self { entries: BTreeMap::from([(outcome, Rational::one())]) }
    }

    /// Uniform distribution over the given outcomes.
    pub fn uniform(outcomes: impl IntoIterator<Item = T>) -> Result<Self, DistError> {
        let outcomes: Vec<T> = outcomes.into_iter().collect();
        let n = outcomes.len() as i64;
        if n == 0 {
            return Err(DistError::Empty);
        }
        Self::new(outcomes.into_iter().map(|o| (o, crate::rational::ratio(1, n))))
    }

    pub fn prob(&self, outcome: &T) -> Rational {
        self.entries.get(outcome).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn support(&self) -> impl Iterator<Item = &T> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, &Rational)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_point(&self) -> bool {
        self.entries.len() == 1
    }

    /// Pushes the distribution through `f`. Masses of outcomes that collide
    /// are added.
    pub fn map<U: Ord + Clone>(&self, mut f: impl FnMut(&T) -> U) -> Distribution<U> {
        let mut entries: BTreeMap<U, Rational> = BTreeMap::new();
        for (o, m) in &self.entries {
            *entries.entry(f(o)).or_insert_with(Rational::zero) += m;
        }
        Distribution { entries }
    }

    /// Independent product `(a, b) ↦ μ(a)·ν(b)`.
    pub fn product<U: Ord + Clone, V: Ord + Clone>(
        &self,
        other: &Distribution<U>,
        mut join: impl FnMut(&T, &U) -> V,
    ) -> Distribution<V> {
        let mut entries = BTreeMap::new();
        for (a, ma) in &self.entries {
            for (b, mb) in &other.entries {
                *entries.entry(join(a, b)).or_insert_with(Rational::zero) += ma * mb;
            }
        }
        Distribution { entries }
    }
}

/// A sub-probability distribution. The missing mass is the halt mass, the
/// probability of stopping instead of choosing any outcome.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubDistribution<T: Ord> {
    entries: BTreeMap<T, Rational>,
    halt: Rational,
}

impl<T: Ord + Clone> SubDistribution<T> {
    pub fn new(
        entries: impl IntoIterator<Item = (T, Rational)>,
        halt: Rational,
    ) -> Result<Self, DistError> {
        if halt.is_negative() || halt > Rational::one() {
            return Err(DistError::BadHaltMass(format_fraction(&halt)));
        }
        let mut map: BTreeMap<T, Rational> = BTreeMap::new();
        for (outcome, mass) in entries {
            if mass.is_negative() {
                return Err(DistError::NegativeMass(format_fraction(&mass)));
            }
            *map.entry(outcome).or_insert_with(Rational::zero) += mass;
        }
        map.retain(|_, m| !m.is_zero());
        let total: Rational = map.values().sum::<Rational>() + &halt;
        if !total.is_one() {
            return Err(DistError::SumNotOne(format_fraction(&total)));
        }
        Ok(Self { entries: map, halt })
    }

    pub fn halt() -> Self {
        Self { entries: BTreeMap::new(), halt: Rational::one() }
    }

    pub fn point(outcome: T) -> Self {
        Self { entries: BTreeMap::from([(outcome, Rational::one())]), halt: Rational::zero() }
    }

    pub fn from_distribution(dist: Distribution<T>) -> Self {
        Self { entries: dist.entries, halt: Rational::zero() }
    }

    pub fn halt_mass(&self) -> &Rational {
        &self.halt
    }

    pub fn prob(&self, outcome: &T) -> Rational {
        self.entries.get(outcome).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, &Rational)> {
        self.entries.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &T> {
        self.entries.keys()
    }

    /// True when all mass is on halting.
    pub fn is_halt(&self) -> bool {
        self.entries.is_empty()
    }

    /// The single outcome of a deterministic row.
    pub fn as_point(&self) -> Option<&T> {
        if self.halt.is_zero() && self.entries.len() == 1 {
            self.entries.keys().next()
        } else {
            None
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.is_halt() || self.as_point().is_some()
    }

    pub fn map<U: Ord + Clone>(&self, mut f: impl FnMut(&T) -> U) -> SubDistribution<U> {
        let mut entries: BTreeMap<U, Rational> = BTreeMap::new();
        for (o, m) in &self.entries {
            *entries.entry(f(o)).or_insert_with(Rational::zero) += m;
        }
        SubDistribution { entries, halt: self.halt.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn point_distribution() {
        let d = Distribution::new([("s", ratio(1, 1))]).unwrap();
        assert!(d.is_point());
        assert_eq!(d.prob(&"s"), ratio(1, 1));
    }

    #[test]
    fn fair_coin() {
        let d = Distribution::new([("h", ratio(1, 2)), ("t", ratio(1, 2))]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.prob(&"t"), ratio(1, 2));
    }

    #[test]
    fn mass_must_sum_to_one() {
        let err = Distribution::new([("a", ratio(1, 3)), ("b", ratio(1, 3))]).unwrap_err();
        assert_eq!(err, DistError::SumNotOne("2/3".into()));
        let err = Distribution::new([("a", ratio(-1, 3)), ("b", ratio(4, 3))]).unwrap_err();
        assert!(matches!(err, DistError::NegativeMass(_)));
        assert_eq!(Distribution::<u8>::new([]).unwrap_err(), DistError::Empty);
    }

    #[test]
    fn zero_entries_are_dropped() {
        let d = Distribution::new([("a", ratio(0, 1)), ("b", ratio(1, 1))]).unwrap();
        assert_eq!(d.support().collect::<Vec<_>>(), vec![&"b"]);
    }

    #[test]
    fn product_is_a_distribution() {
        let a = Distribution::new([(0, ratio(1, 3)), (1, ratio(2, 3))]).unwrap();
        let b = Distribution::new([(0, ratio(1, 2)), (1, ratio(1, 2))]).unwrap();
        let p = a.product(&b, |x, y| (*x, *y));
        assert_eq!(p.iter().map(|(_, m)| m.clone()).sum::<Rational>(), ratio(1, 1));
        assert_eq!(p.prob(&(1, 0)), ratio(1, 3));
    }

    #[test]
    fn sub_distribution_halt_mass() {
        let s = SubDistribution::new([(0, ratio(1, 4))], ratio(3, 4)).unwrap();
        assert_eq!(s.halt_mass(), &ratio(3, 4));
        assert!(SubDistribution::new([(0, ratio(1, 4))], ratio(1, 4)).is_err());
        assert!(SubDistribution::<u8>::halt().is_halt());
    }
}
