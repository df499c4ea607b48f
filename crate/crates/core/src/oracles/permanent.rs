use super::OracleError;

pub const MAX_PERMANENT_SIDE: usize = 20;

/// Permanent of a square row-major matrix by Ryser's formula, visiting
/// column subsets in Gray-code order so each step updates the row sums by
/// one column.
pub fn exact_permanent(side: usize, m: &[f64]) -> Result<f64, OracleError> {
    assert_eq!(m.len(), side * side);
    if side > MAX_PERMANENT_SIDE {
        return Err(OracleError::TooLarge(format!("permanent of side {side}")));
    }
    if side == 0 {
        return Ok(1.0);
    }
    let mut sums = vec![0.0f64; side];
    let mut total = 0.0f64;
    let mut gray = 0u32;
    for step in 1u32..(1 << side) {
        let bit = step.trailing_zeros() as usize;
        gray ^= 1 << bit;
        let adding = gray >> bit & 1 == 1;
        for (r, s) in sums.iter_mut().enumerate() {
            if adding {
                *s += m[r * side + bit];
            } else {
                *s -= m[r * side + bit];
            }
        }
        let prod: f64 = sums.iter().product();
        if (side - gray.count_ones() as usize) % 2 == 0 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    Ok(total.max(0.0))
}

/// Sum over all permutations; for cross-checking on tiny inputs.
pub fn brute_force_permanent(side: usize, m: &[f64]) -> f64 {
    fn rec(row: usize, side: usize, m: &[f64], used: &mut [bool]) -> f64 {
        if row == side {
            return 1.0;
        }
        let mut acc = 0.0;
        for c in 0..side {
            if !used[c] && m[row * side + c] != 0.0 {
                used[c] = true;
                acc += m[row * side + c] * rec(row + 1, side, m, used);
                used[c] = false;
            }
        }
        acc
    }
    rec(0, side, m, &mut vec![false; side])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_cases() {
        assert_eq!(exact_permanent(1, &[1.0]).unwrap(), 1.0);
        assert_eq!(exact_permanent(2, &[1.0, 2.0, 3.0, 4.0]).unwrap(), 10.0);
        assert_eq!(exact_permanent(3, &[1.0; 9]).unwrap(), 6.0);
        let perm = [0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        assert_eq!(exact_permanent(3, &perm).unwrap(), 1.0);
        let zero_row = [1.0, 2.0, 0.0, 0.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let zr = [zero_row[0], zero_row[1], zero_row[2], 0.0, 0.0, 0.0, 5.0, 6.0, 7.0];
        assert_eq!(exact_permanent(3, &zr).unwrap(), 0.0);
        assert!(matches!(exact_permanent(21, &vec![0.0; 441]), Err(OracleError::TooLarge(_))));
    }

    proptest! {
        #[test]
        fn ryser_matches_brute_force(side in 1usize..7, seed in proptest::collection::vec(0u8..10, 36)) {
            let m: Vec<f64> = seed[..side * side].iter().map(|&x| x as f64).collect();
            let a = exact_permanent(side, &m).unwrap();
            let b = brute_force_permanent(side, &m);
            prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
    }
}
