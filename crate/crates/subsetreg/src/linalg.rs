//! Dense linear algebra for least-squares fits plus the exact rational
//! `size` arithmetic used by the size-based big-M bound.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::dataset::Instance;
use crate::{Error, Result};

/// Row-major dense matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument("matrix dimension mismatch".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite matrix entry".into()));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Least-squares fit of `b` on the intercept plus the columns in `subset`.
/// Returns `(coefficients, intercept, sse)`, coefficients in subset order.
pub fn solve_normal_equations(inst: &Instance, subset: &[usize]) -> Result<(Vec<f64>, f64, f64)> {
    let p = subset.len();
    let k = p + 1; // intercept first
    // Gram matrix of the augmented design [1 | a_S].
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for i in 0..inst.n {
        let mut row = Vec::with_capacity(k);
        row.push(1.0);
        for &j in subset {
            row.push(inst.at(i, j));
        }
        for r in 0..k {
            for c in r..k {
                gram[r * k + c] += row[r] * row[c];
            }
            rhs[r] += row[r] * inst.b[i];
        }
    }
    for r in 0..k {
        for c in 0..r {
            gram[r * k + c] = gram[c * k + r];
        }
    }
    let sol = cholesky_solve(&gram, &rhs, k)
        .ok_or_else(|| Error::SingularSystem { subset: subset.to_vec() })?;
    let mut sse = 0.0;
    for i in 0..inst.n {
        let mut pred = sol[0];
        for (s, &j) in subset.iter().enumerate() {
            pred += sol[s + 1] * inst.at(i, j);
        }
        sse += (pred - inst.b[i]).powi(2);
    }
    Ok((sol[1..].to_vec(), sol[0], sse))
}

/// SSE of the least-squares fit on `subset`, skipping columns that are
/// linearly dependent on earlier ones. Dropping a dependent column leaves
/// the fitted subspace unchanged, so the returned SSE equals the SSE of the
/// full (rank-deficient) subset.
pub fn sse_rank_tolerant(inst: &Instance, subset: &[usize]) -> f64 {
    let mut kept: Vec<usize> = Vec::with_capacity(subset.len());
    for &j in subset {
        kept.push(j);
        if solve_normal_equations(inst, &kept).is_err() {
            kept.pop();
        }
    }
    match solve_normal_equations(inst, &kept) {
        Ok((_, _, sse)) => sse,
        Err(_) => {
            // Even the intercept-only system failed; be conservative.
            0.0
        }
    }
}

/// Plain Cholesky (LL^T) with a relative singularity threshold.
fn cholesky_solve(a: &[f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    if k == 0 {
        return Some(Vec::new());
    }
    let max_diag = (0..k).map(|i| a[i * k + i]).fold(0.0f64, f64::max);
    let threshold = 1e-10 * max_diag.max(1e-300);
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut sum = a[i * k + j];
            for t in 0..j {
                sum -= l[i * k + t] * l[j * k + t];
            }
            if i == j {
                if sum <= threshold {
                    return None;
                }
                l[i * k + i] = sum.sqrt();
            } else {
                l[i * k + j] = sum / l[j * k + j];
            }
        }
    }
    // Forward then backward substitution.
    let mut y = vec![0.0; k];
    for i in 0..k {
        let mut sum = b[i];
        for t in 0..i {
            sum -= l[i * k + t] * y[t];
        }
        y[i] = sum / l[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut sum = y[i];
        for t in i + 1..k {
            sum -= l[t * k + i] * x[t];
        }
        x[i] = sum / l[i * k + i];
    }
    Some(x)
}

/// Exact rational with coprime numerator/denominator, carrying the `size`
/// arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalSize {
    pub value: BigRational,
}

impl RationalSize {
    /// Exact conversion of the decimal literal a float prints as; the
    /// denominator is a power of ten, so the result is reproducible and
    /// independent of the binary representation.
    pub fn from_decimal(v: f64) -> RationalSize {
        let s = format!("{v}");
        let (sign, digits) = match s.strip_prefix('-') {
            Some(rest) => (-1, rest),
            None => (1, s.as_str()),
        };
        let (int_part, frac_part) = match digits.split_once('.') {
            Some((a, b)) => (a, b),
            None => (digits, ""),
        };
        let mut num: BigInt = format!("{int_part}{frac_part}").parse().expect("decimal digits");
        if sign < 0 {
            num = -num;
        }
        let den = BigInt::from(10u32).pow(frac_part.len() as u32);
        RationalSize { value: BigRational::new(num, den) }
    }

    /// `1 + ceil(log2(|num| + 1)) + ceil(log2(den + 1))`.
    pub fn size(&self) -> u64 {
        1 + ceil_log2_succ(&self.value.numer().abs().to_biguint().unwrap())
            + ceil_log2_succ(&self.value.denom().to_biguint().unwrap())
    }
}

/// `ceil(log2(v + 1))`, which equals the bit length of `v`.
fn ceil_log2_succ(v: &BigUint) -> u64 {
    if v.is_zero() {
        0
    } else {
        v.bits()
    }
}

/// Sum of entry sizes.
pub fn size_of_vector(v: &[RationalSize]) -> u64 {
    v.iter().map(|r| r.size()).sum()
}

/// `m^2` plus the sum of entry sizes for a square `m x m` matrix.
pub fn size_of_matrix(entries: &[RationalSize], m: usize) -> u64 {
    debug_assert_eq!(entries.len(), m * m);
    (m as u64) * (m as u64) + entries.iter().map(|r| r.size()).sum::<u64>()
}

/// Exact Gram matrix `a^T a` and vector `a^T b` of the instance as rationals.
pub fn exact_gram(inst: &Instance) -> (Vec<RationalSize>, Vec<RationalSize>) {
    let m = inst.m;
    let cols: Vec<Vec<BigRational>> = (0..m)
        .map(|j| {
            (0..inst.n)
                .map(|i| RationalSize::from_decimal(inst.at(i, j)).value)
                .collect()
        })
        .collect();
    let b: Vec<BigRational> = inst
        .b
        .iter()
        .map(|&v| RationalSize::from_decimal(v).value)
        .collect();
    let mut gram = Vec::with_capacity(m * m);
    for r in 0..m {
        for c in 0..m {
            let mut acc = BigRational::zero();
            for i in 0..inst.n {
                acc += &cols[r][i] * &cols[c][i];
            }
            gram.push(RationalSize { value: acc });
        }
    }
    let mut atb = Vec::with_capacity(m);
    for col in &cols {
        let mut acc = BigRational::zero();
        for i in 0..inst.n {
            acc += &col[i] * &b[i];
        }
        atb.push(RationalSize { value: acc });
    }
    (gram, atb)
}
