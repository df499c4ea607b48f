use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// The handful of operations Gaussian elimination needs, so the same code
/// runs over exact rationals and over `f64`.
pub trait Field: Clone + std::fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_ratio(num: u64, den: u64) -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn div(&self, other: &Self) -> Self;
    fn magnitude(&self) -> f64;
    fn to_f64(&self) -> f64;
}

impl Field for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_ratio(num: u64, den: u64) -> Self {
        BigRational::new(num.into(), den.into())
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn magnitude(&self) -> f64 {
        ToPrimitive::to_f64(&self.abs()).unwrap_or(f64::INFINITY)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

/// Solves `A X = B` in place by Gauss–Jordan elimination with partial
/// pivoting on magnitude. `a` is `k x k`, `b` is `k x m`, both row-major.
/// Returns `None` when `A` is singular.
pub(crate) fn solve<F: Field>(k: usize, a: &mut [F], m: usize, b: &mut [F]) -> Option<()> {
    for col in 0..k {
        let pivot = (col..k)
            .filter(|&r| !a[r * k + col].is_zero())
            .max_by(|&x, &y| a[x * k + col].magnitude().total_cmp(&a[y * k + col].magnitude()))?;
        if pivot != col {
            for j in 0..k {
                a.swap(pivot * k + j, col * k + j);
            }
            for j in 0..m {
                b.swap(pivot * m + j, col * m + j);
            }
        }
        let inv = F::one().div(&a[col * k + col]);
        for j in 0..k {
            a[col * k + j] = a[col * k + j].mul(&inv);
        }
        for j in 0..m {
            b[col * m + j] = b[col * m + j].mul(&inv);
        }
        for r in 0..k {
            if r == col || a[r * k + col].is_zero() {
                continue;
            }
            let factor = a[r * k + col].clone();
            for j in 0..k {
                let t = a[col * k + j].mul(&factor);
                a[r * k + j] = a[r * k + j].sub(&t);
            }
            for j in 0..m {
                let t = b[col * m + j].mul(&factor);
                b[r * m + j] = b[r * m + j].sub(&t);
            }
        }
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // [2 1; 1 3] x = [3; 5] -> x = [4/5, 7/5]
        let mut a: Vec<BigRational> = [2, 1, 1, 3].iter().map(|&v| BigRational::from_ratio(v, 1)).collect();
        let mut b: Vec<BigRational> = [3, 5].iter().map(|&v| BigRational::from_ratio(v, 1)).collect();
        solve(2, &mut a, 1, &mut b).unwrap();
        assert_eq!(b, vec![BigRational::from_ratio(4, 5), BigRational::from_ratio(7, 5)]);

        let mut sing = vec![1.0, 2.0, 2.0, 4.0];
        let mut rhs = vec![1.0, 1.0];
        assert!(solve(2, &mut sing, 1, &mut rhs).is_none());
    }
}
