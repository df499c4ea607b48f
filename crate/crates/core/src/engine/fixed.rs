//! Unsigned fixed-point matrices with `bits` fractional bits stored in `u128`.
//!
//! Products accumulate in 256 bits and truncate once per entry, so every
//! rounding step is toward zero.

use crate::graph::Graph;

/// Largest supported number of fractional bits; leaves 32 integer bits.
pub const MAX_BITS: u32 = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct U256 {
    hi: u128,
    lo: u128,
}

impl U256 {
    fn add(self, o: U256) -> U256 {
        let (lo, c) = self.lo.overflowing_add(o.lo);
        U256 { hi: self.hi + o.hi + c as u128, lo }
    }

    fn shr(self, s: u32) -> u128 {
        if s == 0 {
            assert_eq!(self.hi, 0, "fixed-point overflow");
            return self.lo;
        }
        assert!(self.hi >> s == 0, "fixed-point overflow");
        (self.lo >> s) | (self.hi << (128 - s))
    }
}

fn mul_wide(a: u128, b: u128) -> U256 {
    const M: u128 = u64::MAX as u128;
    let (a1, a0) = (a >> 64, a & M);
    let (b1, b0) = (b >> 64, b & M);
    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;
    let mid = (p00 >> 64) + (p01 & M) + (p10 & M);
    let lo = (p00 & M) | (mid << 64);
    let hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    U256 { hi, lo }
}

/// `floor(a * 2^bits / d)` by restoring long division.
fn div_scaled(a: u128, bits: u32, d: u128) -> u128 {
    assert!(d > 0);
    let num = if bits == 0 { U256 { hi: 0, lo: a } } else { U256 { hi: a >> (128 - bits), lo: a << bits } };
    let mut q: u128 = 0;
    let mut rem: u128 = 0;
    for i in (0..256).rev() {
        let bit = if i >= 128 { (num.hi >> (i - 128)) & 1 } else { (num.lo >> i) & 1 };
        let carry = rem >> 127;
        rem = (rem << 1) | bit;
        if carry == 1 || rem >= d {
            rem = rem.wrapping_sub(d);
            if i < 128 {
                q |= 1 << i;
            } else {
                panic!("fixed-point quotient overflow");
            }
        }
    }
    q
}

/// Exact `floor(x * 2^bits)` for a finite non-negative `f64`.
pub fn from_f64(x: f64, bits: u32) -> u128 {
    assert!(x.is_finite() && x >= 0.0, "entry {x} not representable");
    if x == 0.0 {
        return 0;
    }
    let raw = x.to_bits();
    let exp = ((raw >> 52) & 0x7ff) as i32;
    let (mant, e) = if exp == 0 {
        (raw & ((1 << 52) - 1), -1074)
    } else {
        ((raw & ((1 << 52) - 1)) | (1 << 52), exp - 1075)
    };
    let shift = e + bits as i32;
    if shift >= 0 {
        assert!(shift < 75, "entry {x} too large");
        (mant as u128) << shift
    } else if shift > -64 {
        (mant >> (-shift)) as u128
    } else {
        0
    }
}

/// Largest `f64` not above `v / 2^bits`.
pub fn to_f64(v: u128, bits: u32) -> f64 {
    let mut f = v as f64;
    if f as u128 > v {
        f = f64::from_bits(f.to_bits() - 1);
    }
    f * 2f64.powi(-(bits as i32))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedMatrix {
    n: usize,
    bits: u32,
    data: Vec<u128>,
}

impl FixedMatrix {
    pub fn zeros(n: usize, bits: u32) -> Self {
        assert!((1..=MAX_BITS).contains(&bits));
        FixedMatrix { n, bits, data: vec![0; n * n] }
    }

    pub fn identity(n: usize, bits: u32) -> Self {
        let mut m = Self::zeros(n, bits);
        for i in 0..n {
            m.data[i * n + i] = m.one();
        }
        m
    }

    /// Truncating conversion of a row-major `f64` matrix.
    pub fn from_f64(n: usize, entries: &[f64], bits: u32) -> Self {
        assert_eq!(entries.len(), n * n);
        let mut m = Self::zeros(n, bits);
        for (d, &x) in m.data.iter_mut().zip(entries) {
            *d = from_f64(x, bits);
        }
        m
    }

    /// Random-walk matrix of `g` with each entry `w/deg` truncated exactly.
    pub fn transition(g: &Graph, bits: u32) -> Self {
        let n = g.n();
        let mut m = Self::zeros(n, bits);
        for u in 0..n {
            let deg = g.weighted_degree(u) as u128;
            for &(v, w) in g.neighbors(u) {
                m.data[u * n + v] = ((w as u128) << bits) / deg;
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn one(&self) -> u128 {
        1u128 << self.bits
    }

    /// Value of one unit in the last place.
    pub fn ulp(&self) -> f64 {
        2f64.powi(-(self.bits as i32))
    }

    pub fn raw(&self, i: usize, j: usize) -> u128 {
        self.data[i * self.n + j]
    }

    pub fn set_raw(&mut self, i: usize, j: usize, v: u128) {
        self.data[i * self.n + j] = v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        to_f64(self.raw(i, j), self.bits)
    }

    pub fn raw_row(&self, i: usize) -> &[u128] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_sum_raw(&self, i: usize) -> u128 {
        self.raw_row(i).iter().sum()
    }

    /// `1 - row sum` as a float, clamped at zero.
    pub fn row_deficit(&self, i: usize) -> f64 {
        let s = self.row_sum_raw(i);
        let one = self.one();
        if s >= one {
            0.0
        } else {
            to_f64(one - s, self.bits)
        }
    }

    pub fn max_row_deficit(&self) -> f64 {
        (0..self.n).map(|i| self.row_deficit(i)).fold(0.0, f64::max)
    }

    /// Truncated product: each entry is `floor(sum_k a_ik b_kj)` at this scale.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!((self.n, self.bits), (other.n, other.bits));
        let n = self.n;
        let mut acc = vec![U256::default(); n];
        let mut out = Self::zeros(n, self.bits);
        for i in 0..n {
            acc.iter_mut().for_each(|a| *a = U256::default());
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0 {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                for (slot, &b) in acc.iter_mut().zip(brow) {
                    if b != 0 {
                        *slot = slot.add(mul_wide(a, b));
                    }
                }
            }
            for (j, a) in acc.iter().enumerate() {
                out.data[i * n + j] = a.shr(self.bits);
            }
        }
        out
    }

    /// `floor(a / d)` in fixed point.
    pub fn div_raw(&self, a: u128, d: u128) -> u128 {
        div_scaled(a, self.bits, d)
    }

    pub fn to_f64_entries(&self) -> Vec<f64> {
        self.data.iter().map(|&v| to_f64(v, self.bits)).collect()
    }

    /// Square submatrix on the given rows and columns.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> Self {
        assert_eq!(rows.len(), cols.len());
        let k = rows.len();
        let mut m = Self::zeros(k, self.bits);
        for (a, &r) in rows.iter().enumerate() {
            for (b, &c) in cols.iter().enumerate() {
                m.data[a * k + b] = self.raw(r, c);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn conversions() {
        assert_eq!(from_f64(0.5, 4), 8);
        assert_eq!(from_f64(1.0 / 3.0, 2), 1);
        assert_eq!(from_f64(0.0, 96), 0);
        assert_eq!(to_f64(1 << 95, 96), 0.5);
        let third = from_f64(1.0 / 3.0, 96);
        assert!(to_f64(third, 96) <= 1.0 / 3.0);
        // 2^96 / 3 truncated must convert down, never up.
        let exact_third = (1u128 << 96) / 3;
        assert!(to_f64(exact_third, 96) <= 1.0 / 3.0);
    }

    #[test]
    fn wide_multiply_and_divide() {
        let a = u128::MAX;
        let p = mul_wide(a, a);
        assert_eq!(p.lo, 1);
        assert_eq!(p.hi, u128::MAX - 1);
        assert_eq!(div_scaled(1 << 96, 96, 3 << 96), (1u128 << 96) / 3);
        assert_eq!(div_scaled(5, 0, 2), 2);
    }

    #[test]
    fn exact_transition() {
        let k3 = crate::corpus::named("k3").unwrap();
        let m = FixedMatrix::transition(&k3, 96);
        assert_eq!(m.raw(0, 1), 1 << 95);
        assert_eq!(m.row_deficit(0), 0.0);
        let s3 = crate::corpus::named("star-s3").unwrap();
        let m = FixedMatrix::transition(&s3, 96);
        assert_eq!(m.raw(2, 0), (1u128 << 96) / 3);
        assert!(m.row_deficit(2) > 0.0 && m.row_deficit(2) <= 3.0 * m.ulp());
    }

    proptest! {
        #[test]
        fn mul_wide_matches_split(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
            let x = (a as u128) << 40 | c as u128;
            let y = b as u128;
            let p = mul_wide(x, y);
            let lo = x.wrapping_mul(y);
            prop_assert_eq!(p.lo, lo);
        }

        #[test]
        fn product_is_subtractive(vals in proptest::collection::vec(0u32..1000, 9)) {
            // Rows normalised to sum to at most one.
            let total: Vec<f64> = (0..3).map(|r| vals[r*3..r*3+3].iter().map(|&v| v as f64).sum::<f64>().max(1.0)).collect();
            let e: Vec<f64> = (0..9).map(|x| vals[x] as f64 / total[x / 3]).collect();
            let m = FixedMatrix::from_f64(3, &e, 40);
            let sq = m.mul(&m);
            for i in 0..3 {
                for j in 0..3 {
                    let exact: f64 = (0..3).map(|k| m.get(i, k) * m.get(k, j)).sum();
                    prop_assert!(sq.get(i, j) <= exact + 1e-15);
                    prop_assert!(exact - sq.get(i, j) <= 2f64.powi(-40) + 1e-15);
                }
            }
        }
    }
}
