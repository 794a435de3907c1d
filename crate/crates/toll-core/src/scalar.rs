//! Numeric abstraction used by every solver.
//!
//! All algorithms are written against [`Scalar`]. The exact instantiation is
//! [`crate::Rational`]; [`crate::Float`] exists for quick experiments where
//! grid comparisons may be off by rounding.

use std::fmt::{Debug, Display};
use std::hash::Hash;

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// An ordered, hashable field-like number.
pub trait Scalar: Num + Clone + Ord + Hash + Debug + Display + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    fn from_int(n: i64) -> Self {
        Self::from_i64(n).expect("integer fits in scalar")
    }

    fn from_count(n: usize) -> Self {
        Self::from_u64(n as u64).expect("integer fits in scalar")
    }

    fn half(&self) -> Self {
        self.clone() / Self::from_int(2)
    }

    /// `2^t`.
    fn pow2(t: u32) -> Self {
        let mut out = Self::one();
        let mut left = t;
        while left >= 62 {
            out = out * Self::from_int(1 << 62);
            left -= 62;
        }
        out * Self::from_int(1 << left)
    }

    fn approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: Num + Clone + Ord + Hash + Debug + Display + FromPrimitive + ToPrimitive + Send + Sync + 'static {}

/// Sum of a sequence of scalars.
pub fn sum<'a, T: Scalar>(it: impl IntoIterator<Item = &'a T>) -> T {
    it.into_iter().fold(T::zero(), |acc, x| acc + x.clone())
}

/// Smallest integer `s ≤ limit` making every value times `s` an integer of
/// magnitude below `2^40`.
pub fn integer_scale<T: Scalar>(values: &[T], limit: i64) -> Option<i64> {
    'scale: for s in 1..=limit {
        let ts = T::from_int(s);
        for v in values {
            let w = v.clone() * ts.clone();
            match w.to_i64() {
                Some(x) if x.abs() < (1 << 40) && T::from_int(x) == w => {}
                _ => continue 'scale,
            }
        }
        return Some(s);
    }
    None
}

pub fn from_i128<T: Scalar>(x: i128) -> T {
    if let Some(v) = T::from_i128(x) {
        return v;
    }
    let hi = x >> 62;
    let lo = x - (hi << 62);
    from_i128::<T>(hi) * T::pow2(62) + T::from_i64(lo as i64).expect("low part fits")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Float, Rational};

    #[test]
    fn pow2_is_exact_for_rationals() {
        assert_eq!(Rational::pow2(0), Rational::from_int(1));
        assert_eq!(Rational::pow2(10), Rational::from_int(1024));
        let big = Rational::pow2(130);
        assert_eq!(big.clone() / Rational::pow2(68), Rational::pow2(62));
    }

    #[test]
    fn half_of_odd_integer() {
        let h = Rational::from_int(5).half();
        assert_eq!(h.to_string(), "5/2");
    }

    #[test]
    fn scale_and_wide_conversion() {
        let v: Vec<Rational> = ["1/2", "3/4", "5"].iter().map(|s| s.parse().unwrap()).collect();
        assert_eq!(integer_scale(&v, 100), Some(4));
        let third: Rational = "1/3".parse().unwrap();
        assert_eq!(integer_scale(&[third], 2), None);
        let big: i128 = (1 << 100) + 7;
        assert_eq!(from_i128::<Rational>(big), Rational::pow2(100) + Rational::from_int(7));
        assert_eq!(from_i128::<Rational>(-big), -(Rational::pow2(100) + Rational::from_int(7)));
    }

    #[test]
    fn float_instantiation_compiles_and_orders() {
        let a = Float::from_int(3);
        let b = a.half();
        assert!(b < a);
        assert_eq!(b.approx(), 1.5);
    }
}
