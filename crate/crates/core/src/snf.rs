//! Smith normal form of integer matrices with tracked unimodular transforms,
//! A = U·D·V. Elimination runs in checked 64-bit arithmetic and falls back
//! to arbitrary precision on overflow.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_traits::{CheckedAdd, CheckedMul, CheckedSub, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SnfError {
    #[error("result entries exceed 64-bit range even after exact elimination")]
    ResultOverflow,
}

#[derive(Debug, Clone)]
pub struct Snf {
    /// Diagonal entries d_i ≥ 0 with d_i | d_{i+1}; length min(m,n).
    pub diag: Vec<i64>,
    /// m×m unimodular.
    pub u: DMatrix<i64>,
    pub u_inv: DMatrix<i64>,
    /// n×n unimodular.
    pub v: DMatrix<i64>,
    pub v_inv: DMatrix<i64>,
    pub rank: usize,
}

impl Snf {
    /// D as a full m×n matrix.
    pub fn d_matrix(&self, m: usize, n: usize) -> DMatrix<i64> {
        let mut d = DMatrix::zeros(m, n);
        for (i, &x) in self.diag.iter().enumerate() {
            d[(i, i)] = x;
        }
        d
    }

    /// Basis of the integer kernel of A (saturated): columns rank..n of V⁻¹.
    pub fn kernel_basis(&self, n: usize) -> DMatrix<i64> {
        let cols = n - self.rank;
        let mut k = DMatrix::zeros(n, cols);
        for c in 0..cols {
            for r in 0..n {
                k[(r, c)] = self.v_inv[(r, self.rank + c)];
            }
        }
        k
    }
}

trait Elem:
    Clone + Ord + Zero + One + Signed + CheckedAdd + CheckedSub + CheckedMul + std::ops::Div<Output = Self>
{
}
impl<T> Elem for T where
    T: Clone
        + Ord
        + Zero
        + One
        + Signed
        + CheckedAdd
        + CheckedSub
        + CheckedMul
        + std::ops::Div<Output = T>
{
}

struct Work<T> {
    a: Vec<Vec<T>>,
    u: Vec<Vec<T>>,
    u_inv: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    v_inv: Vec<Vec<T>>,
    m: usize,
    n: usize,
}

fn identity<T: Elem>(k: usize) -> Vec<Vec<T>> {
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| if i == j { T::one() } else { T::zero() })
                .collect()
        })
        .collect()
}

impl<T: Elem> Work<T> {
    fn new(a: Vec<Vec<T>>, m: usize, n: usize) -> Self {
        Work {
            a,
            u: identity(m),
            u_inv: identity(m),
            v: identity(n),
            v_inv: identity(n),
            m,
            n,
        }
    }

    fn swap_rows(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        self.a.swap(i, j);
        for r in 0..self.m {
            self.u[r].swap(i, j);
        }
        self.u_inv.swap(i, j);
    }

    fn swap_cols(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        for r in 0..self.m {
            self.a[r].swap(i, j);
        }
        self.v.swap(i, j);
        for r in 0..self.n {
            self.v_inv[r].swap(i, j);
        }
    }

    fn negate_row(&mut self, i: usize) {
        for x in &mut self.a[i] {
            *x = -x.clone();
        }
        for r in 0..self.m {
            self.u[r][i] = -self.u[r][i].clone();
        }
        for x in &mut self.u_inv[i] {
            *x = -x.clone();
        }
    }

    /// row_j += q · row_i
    fn add_row(&mut self, j: usize, i: usize, q: &T) -> Option<()> {
        for c in 0..self.n {
            let t = q.checked_mul(&self.a[i][c])?;
            self.a[j][c] = self.a[j][c].checked_add(&t)?;
        }
        // U ← U·L⁻¹: column i −= q·column j
        for r in 0..self.m {
            let t = q.checked_mul(&self.u[r][j])?;
            self.u[r][i] = self.u[r][i].checked_sub(&t)?;
        }
        // U⁻¹ ← L·U⁻¹: row j += q·row i
        for c in 0..self.m {
            let t = q.checked_mul(&self.u_inv[i][c])?;
            self.u_inv[j][c] = self.u_inv[j][c].checked_add(&t)?;
        }
        Some(())
    }

    /// col_j += q · col_i
    fn add_col(&mut self, j: usize, i: usize, q: &T) -> Option<()> {
        for r in 0..self.m {
            let t = q.checked_mul(&self.a[r][i])?;
            self.a[r][j] = self.a[r][j].checked_add(&t)?;
        }
        // V ← R⁻¹·V: row i −= q·row j
        for c in 0..self.n {
            let t = q.checked_mul(&self.v[j][c])?;
            self.v[i][c] = self.v[i][c].checked_sub(&t)?;
        }
        // V⁻¹ ← V⁻¹·R: column j += q·column i
        for r in 0..self.n {
            let t = q.checked_mul(&self.v_inv[r][i])?;
            self.v_inv[r][j] = self.v_inv[r][j].checked_add(&t)?;
        }
        Some(())
    }

    fn reduce(&mut self) -> Option<()> {
        let steps = self.m.min(self.n);
        let mut t = 0;
        while t < steps {
            // smallest nonzero |entry| in the trailing block
            let mut pivot: Option<(usize, usize)> = None;
            for i in t..self.m {
                for j in t..self.n {
                    if self.a[i][j].is_zero() {
                        continue;
                    }
                    let better = match &pivot {
                        None => true,
                        Some((pi, pj)) => self.a[i][j].abs() < self.a[*pi][*pj].abs(),
                    };
                    if better {
                        pivot = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = pivot else { break };
            self.swap_rows(t, pi);
            self.swap_cols(t, pj);
            if self.a[t][t].is_negative() {
                self.negate_row(t);
            }
            // clear row and column t
            let mut dirty = false;
            for i in t + 1..self.m {
                if !self.a[i][t].is_zero() {
                    let q = -(self.a[i][t].clone() / self.a[t][t].clone());
                    self.add_row(i, t, &q)?;
                    if !self.a[i][t].is_zero() {
                        dirty = true;
                    }
                }
            }
            for j in t + 1..self.n {
                if !self.a[t][j].is_zero() {
                    let q = -(self.a[t][j].clone() / self.a[t][t].clone());
                    self.add_col(j, t, &q)?;
                    if !self.a[t][j].is_zero() {
                        dirty = true;
                    }
                }
            }
            if dirty {
                continue;
            }
            // divisibility: every trailing entry must be divisible by a[t][t]
            let d = self.a[t][t].clone();
            let mut fixed = true;
            'outer: for i in t + 1..self.m {
                for j in t + 1..self.n {
                    let r = self.a[i][j].clone() - (self.a[i][j].clone() / d.clone()) * d.clone();
                    if !r.is_zero() {
                        let one = T::one();
                        self.add_row(t, i, &one)?;
                        fixed = false;
                        break 'outer;
                    }
                }
            }
            if fixed {
                t += 1;
            }
        }
        Some(())
    }
}

fn to_rows<T: Elem + From<i64>>(a: &DMatrix<i64>) -> Vec<Vec<T>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| T::from(a[(i, j)])).collect())
        .collect()
}

fn from_rows_i64(rows: &[Vec<i64>], k: usize) -> DMatrix<i64> {
    DMatrix::from_fn(k, k, |i, j| rows[i][j])
}

fn from_rows_big(rows: &[Vec<BigInt>], k: usize) -> Option<DMatrix<i64>> {
    let mut out = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            out[(i, j)] = rows[i][j].to_i64()?;
        }
    }
    Some(out)
}

/// Smith normal form with A = U·D·V, U and V unimodular, D diagonal with a
/// divisibility chain.
pub fn smith_normal_form(a: &DMatrix<i64>) -> Result<Snf, SnfError> {
    let (m, n) = (a.nrows(), a.ncols());
    // fast path in 64-bit
    let mut w: Work<i64> = Work::new(to_rows(a), m, n);
    if w.reduce().is_some() {
        let diag: Vec<i64> = (0..m.min(n)).map(|i| w.a[i][i]).collect();
        let rank = diag.iter().filter(|&&d| d != 0).count();
        return Ok(Snf {
            diag,
            u: from_rows_i64(&w.u, m),
            u_inv: from_rows_i64(&w.u_inv, m),
            v: from_rows_i64(&w.v, n),
            v_inv: from_rows_i64(&w.v_inv, n),
            rank,
        });
    }
    // arbitrary-precision fallback
    let mut w: Work<BigInt> = Work::new(to_rows(a), m, n);
    w.reduce().expect("BigInt elimination cannot overflow");
    let diag: Vec<i64> = (0..m.min(n))
        .map(|i| w.a[i][i].to_i64().ok_or(SnfError::ResultOverflow))
        .collect::<Result<_, _>>()?;
    let rank = diag.iter().filter(|&&d| d != 0).count();
    Ok(Snf {
        diag,
        u: from_rows_big(&w.u, m).ok_or(SnfError::ResultOverflow)?,
        u_inv: from_rows_big(&w.u_inv, m).ok_or(SnfError::ResultOverflow)?,
        v: from_rows_big(&w.v, n).ok_or(SnfError::ResultOverflow)?,
        v_inv: from_rows_big(&w.v_inv, n).ok_or(SnfError::ResultOverflow)?,
        rank,
    })
}

/// Determinant sign helper for unimodularity checks (small matrices).
pub fn det_i64(a: &DMatrix<i64>) -> i64 {
    let n = a.nrows();
    if n == 0 {
        return 1;
    }
    // Bareiss elimination in i128.
    let mut m: Vec<Vec<i128>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)] as i128).collect())
        .collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if m[k][k] == 0 {
            let Some(p) = (k + 1..n).find(|&i| m[i][k] != 0) else {
                return 0;
            };
            m.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
            }
            m[i][k] = 0;
        }
        prev = m[k][k];
    }
    (sign * m[n - 1][n - 1]) as i64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(rows: usize, cols: usize, v: &[i64]) -> DMatrix<i64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    fn verify(a: &DMatrix<i64>, s: &Snf) {
        let d = s.d_matrix(a.nrows(), a.ncols());
        assert_eq!(&s.u * d * &s.v, *a, "A = U D V failed");
        assert_eq!(det_i64(&s.u).abs(), 1, "U not unimodular");
        assert_eq!(det_i64(&s.v).abs(), 1, "V not unimodular");
        assert_eq!(
            &s.u * &s.u_inv,
            DMatrix::identity(a.nrows(), a.nrows()),
            "u_inv wrong"
        );
        assert_eq!(
            &s.v * &s.v_inv,
            DMatrix::identity(a.ncols(), a.ncols()),
            "v_inv wrong"
        );
        for w in s.diag.windows(2) {
            assert!(w[0] >= 0 && w[1] >= 0);
            if w[0] != 0 {
                assert_eq!(w[1] % w[0], 0, "divisibility chain broken");
            } else {
                assert_eq!(w[1], 0);
            }
        }
    }

    #[test]
    fn scalar_two() {
        let a = dm(1, 1, &[2]);
        let s = smith_normal_form(&a).unwrap();
        assert_eq!(s.diag, vec![2]);
        verify(&a, &s);
    }

    #[test]
    fn diag_projector() {
        let a = dm(2, 2, &[1, 0, 0, 0]);
        let s = smith_normal_form(&a).unwrap();
        assert_eq!(s.diag, vec![1, 0]);
        verify(&a, &s);
    }

    #[test]
    fn invariant_factors_2_4() {
        let a = dm(2, 2, &[2, 4, 6, 8]);
        let s = smith_normal_form(&a).unwrap();
        assert_eq!(s.diag, vec![2, 4]);
        verify(&a, &s);
    }

    #[test]
    fn rectangular_and_kernel() {
        let a = dm(2, 3, &[1, 2, 3, 2, 4, 6]);
        let s = smith_normal_form(&a).unwrap();
        verify(&a, &s);
        assert_eq!(s.rank, 1);
        let k = s.kernel_basis(3);
        assert_eq!(k.ncols(), 2);
        let prod = &a * &k;
        assert!(prod.iter().all(|&x| x == 0));
    }

    #[test]
    fn random_matrices_roundtrip() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let m = rng.gen_range(1..=5);
            let n = rng.gen_range(1..=5);
            let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-9..=9));
            let s = smith_normal_form(&a).unwrap();
            verify(&a, &s);
        }
    }

    #[test]
    fn zero_matrix() {
        let a = DMatrix::zeros(3, 2);
        let s = smith_normal_form(&a).unwrap();
        assert_eq!(s.rank, 0);
        verify(&a, &s);
    }
}
