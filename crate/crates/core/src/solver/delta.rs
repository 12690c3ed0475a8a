//! Values `c + k·δ` for a symbolic positive infinitesimal `δ`.

use std::cmp::Ordering;
use std::ops::{Add, Sub};

use num_traits::{Signed, Zero};

use crate::rational::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delta {
    pub c: Rational,
    pub k: Rational,
}

impl Delta {
    pub fn real(c: Rational) -> Self {
        Delta { c, k: Rational::zero() }
    }

    pub fn new(c: Rational, k: Rational) -> Self {
        Delta { c, k }
    }

    pub fn zero() -> Self {
        Delta::real(Rational::zero())
    }

    pub fn scale(&self, a: &Rational) -> Delta {
        Delta { c: &self.c * a, k: &self.k * a }
    }

    pub fn is_negative(&self) -> bool {
        self.c.is_negative() || (self.c.is_zero() && self.k.is_negative())
    }

    /// The value at a concrete `δ`.
    pub fn at(&self, delta: &Rational) -> Rational {
        &self.c + &self.k * delta
    }
}

impl Ord for Delta {
    fn cmp(&self, other: &Self) -> Ordering {
        self.c.cmp(&other.c).then_with(|| self.k.cmp(&other.k))
    }
}

impl PartialOrd for Delta {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add<&Delta> for &Delta {
    type Output = Delta;
    fn add(self, rhs: &Delta) -> Delta {
        Delta { c: &self.c + &rhs.c, k: &self.k + &rhs.k }
    }
}

impl Sub<&Delta> for &Delta {
    type Output = Delta;
    fn sub(self, rhs: &Delta) -> Delta {
        Delta { c: &self.c - &rhs.c, k: &self.k - &rhs.k }
    }
}

/// Largest concrete `δ` (capped at 1) keeping `lo ≤ hi` true, assuming it
/// holds symbolically.
pub fn max_delta(lo: &Delta, hi: &Delta) -> Option<Rational> {
    let dc = &hi.c - &lo.c;
    let dk = &lo.k - &hi.k;
    if dc.is_positive() && dk.is_positive() {
        Some(dc / dk)
    } else {
        None
    }
}
