//! Dense complex linear algebra used by every counting-statistics computation.
//!
//! Matrices are `nalgebra::DMatrix<Complex<f64>>`, stored column-major. The
//! vectorization `|A⟩⟩` stacks the columns of `A`, so it is a plain copy of the
//! underlying storage, and `vec(B X C) = (Cᵀ ⊗ B) vec(X)`.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Relative singular-value cutoff used when none is given.
pub const DEFAULT_CUTOFF: f64 = 1e-12;

/// Jacobi sweeps before giving up.
const SVD_MAX_SWEEPS: usize = 80;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Builds a matrix from row slices, rejecting empty, ragged or non-finite input.
pub fn matrix_from_rows(rows: &[Vec<C64>]) -> Result<ComplexMatrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(Error::InvalidMatrix("matrix must have at least one row and column".into()));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::InvalidMatrix(format!(
            "row {bad} has {} entries, expected {ncols}",
            rows[bad].len()
        )));
    }
    let m = DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
    ensure_finite(&m)?;
    Ok(m)
}

pub fn real_matrix(rows: &[&[f64]]) -> ComplexMatrix {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(nrows, ncols, |i, j| re(rows[i][j]))
}

pub fn ensure_finite(m: &ComplexMatrix) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::InvalidMatrix("empty matrix".into()));
    }
    if let Some((idx, _)) = m.iter().enumerate().find(|(_, z)| !(z.re.is_finite() && z.im.is_finite())) {
        let (i, j) = (idx % m.nrows(), idx / m.nrows());
        return Err(Error::InvalidMatrix(format!("non-finite entry at ({i}, {j})")));
    }
    Ok(())
}

pub fn dagger(m: &ComplexMatrix) -> ComplexMatrix {
    m.adjoint()
}

/// Frobenius norm of `H - H†`.
pub fn hermiticity_residual(m: &ComplexMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let rows = a.nrows().checked_mul(b.nrows());
    let cols = a.ncols().checked_mul(b.ncols());
    match (rows, cols) {
        (Some(r), Some(c)) if r.checked_mul(c).is_some() => {}
        _ => {
            return Err(Error::DimensionMismatch(format!(
                "kronecker product of {}x{} and {}x{} overflows",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )))
        }
    }
    let (br, bc) = (b.nrows(), b.ncols());
    let mut out = DMatrix::zeros(a.nrows() * br, a.ncols() * bc);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            out.view_mut((i * br, j * bc), (br, bc)).zip_apply(b, |o, bv| *o = aij * bv);
        }
    }
    Ok(out)
}

/// Kronecker product of a list of factors, left to right.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> Result<ComplexMatrix> {
    let mut it = factors.into_iter();
    let first = it
        .next()
        .ok_or_else(|| Error::DimensionMismatch("empty kronecker product".into()))?
        .clone();
    it.try_fold(first, |acc, f| kron(&acc, f))
}

/// Column-stacked vector `|A⟩⟩` of an `n×n` operator.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorizedOperator {
    dim: usize,
    data: ComplexVector,
}

impl VectorizedOperator {
    pub fn new(data: ComplexVector) -> Result<Self> {
        let len = data.len();
        let dim = (len as f64).sqrt().round() as usize;
        if len == 0 || dim * dim != len {
            return Err(Error::DimensionMismatch(format!("vector length {len} is not a perfect square")));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &ComplexVector {
        &self.data
    }

    pub fn into_data(self) -> ComplexVector {
        self.data
    }

    /// `⟨⟨self|other⟩⟩`, conjugate-linear in `self`.
    pub fn inner(&self, other: &VectorizedOperator) -> C64 {
        self.data.dotc(&other.data)
    }
}

pub fn vectorize(a: &ComplexMatrix) -> Result<VectorizedOperator> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "vectorize needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    // column-major storage is already the column stacking
    Ok(VectorizedOperator {
        dim: a.nrows(),
        data: DVector::from_column_slice(a.as_slice()),
    })
}

pub fn unvectorize(v: &VectorizedOperator) -> ComplexMatrix {
    DMatrix::from_column_slice(v.dim, v.dim, v.data.as_slice())
}

/// `|1⟩⟩` for the `n×n` identity.
pub fn identity_vector(n: usize) -> ComplexVector {
    let mut v = DVector::zeros(n * n);
    for i in 0..n {
        v[i * n + i] = re(1.0);
    }
    v
}

/// One-sided (Hestenes) Jacobi SVD, `A = U Σ V†` with singular values in
/// descending order. Columns of `U` belonging to zero singular values are left
/// zero. For `m < n` the factorization goes through `A†`, so `V` has only `m`
/// columns. Works for real and complex entries.
pub fn jacobi_svd<T>(a: &DMatrix<T>) -> Result<(DMatrix<T>, Vec<f64>, DMatrix<T>)>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let (m, n) = a.shape();
    if m < n {
        let (u, s, v_t) = jacobi_svd(&a.adjoint())?;
        return Ok((v_t.adjoint(), s, u.adjoint()));
    }
    let mut w = a.clone();
    let mut v = DMatrix::<T>::identity(n, n);
    let tol = f64::EPSILON * m as f64;
    // columns at rounding level of the whole matrix are treated as zero
    let floor = tol * f64::EPSILON * a.norm_squared();
    let mut converged = n < 2;
    for _ in 0..SVD_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dotc(&w.column(j));
                let g = gamma.modulus();
                if g <= floor || g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma.unscale(g);
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate_columns(&mut w, i, j, cs, sn, phase);
                rotate_columns(&mut v, i, j, cs, sn, phase);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::SvdNonConvergence { rows: m, cols: n });
    }
    let norms: Vec<f64> = (0..n).map(|k| w.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let mut u = DMatrix::<T>::zeros(m, n);
    let mut vs = DMatrix::<T>::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        if sigma > 0.0 {
            u.set_column(dst, &w.column(src).unscale(sigma));
        }
        vs.set_column(dst, &v.column(src));
        s.push(sigma);
    }
    Ok((u, s, vs.adjoint()))
}

/// `(x_i, x_j) ← (c x_i − s e^{-iθ} x_j, s e^{iθ} x_i + c x_j)` with
/// `e^{iθ} = phase`, which zeroes the inner product of the two columns.
fn rotate_columns<T>(x: &mut DMatrix<T>, i: usize, j: usize, cs: f64, sn: f64, phase: T)
where
    T: ComplexField<RealField = f64> + Copy,
{
    let conj = phase.conjugate();
    for r in 0..x.nrows() {
        let (xi, xj) = (x[(r, i)], x[(r, j)]);
        x[(r, i)] = xi.scale(cs) - (xj * conj).scale(sn);
        x[(r, j)] = (xi * phase).scale(sn) + xj.scale(cs);
    }
}

/// Full singular value decomposition `A = U Σ V†`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub singular_values: Vec<f64>,
    pub v_t: ComplexMatrix,
}

impl Svd {
    pub fn compute(a: &ComplexMatrix) -> Result<Self> {
        ensure_finite(a)?;
        let (u, singular_values, v_t) = jacobi_svd(a)?;
        Ok(Self { u, singular_values, v_t })
    }

    pub fn max_singular_value(&self) -> f64 {
        self.singular_values.iter().copied().fold(0.0, f64::max)
    }

    fn threshold(&self, cutoff: f64) -> f64 {
        cutoff * self.max_singular_value()
    }

    pub fn pseudo_inverse(&self, cutoff: f64) -> ComplexMatrix {
        let thr = self.threshold(cutoff);
        let (m, n) = (self.u.nrows(), self.v_t.ncols());
        let mut out = DMatrix::zeros(n, m);
        for (k, &s) in self.singular_values.iter().enumerate() {
            if s > thr && s > 0.0 {
                // A⁺ = Σ_k v_k u_k† / s_k
                let v = self.v_t.row(k).adjoint();
                let u = self.u.column(k);
                out += (v * u.adjoint()) * re(1.0 / s);
            }
        }
        out
    }

    /// `A⁺ v` without forming `A⁺`.
    pub fn apply_pseudo_inverse(&self, v: &ComplexVector, cutoff: f64) -> ComplexVector {
        let thr = self.threshold(cutoff);
        let mut out = DVector::zeros(self.v_t.ncols());
        for (k, &s) in self.singular_values.iter().enumerate() {
            if s > thr && s > 0.0 {
                let coeff = self.u.column(k).dotc(v) / s;
                out += self.v_t.row(k).adjoint() * coeff;
            }
        }
        out
    }

    /// Orthonormal basis of the right null space of a square matrix.
    pub fn null_space(&self, cutoff: f64) -> Vec<ComplexVector> {
        let thr = self.threshold(cutoff);
        self.singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s <= thr)
            .map(|(k, _)| self.v_t.row(k).adjoint())
            .collect()
    }
}

pub fn moore_penrose(a: &ComplexMatrix, cutoff: f64) -> Result<ComplexMatrix> {
    check_cutoff(cutoff)?;
    Ok(Svd::compute(a)?.pseudo_inverse(cutoff))
}

pub fn null_space(a: &ComplexMatrix, cutoff: f64) -> Result<Vec<ComplexVector>> {
    check_cutoff(cutoff)?;
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "null_space needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(Svd::compute(a)?.null_space(cutoff))
}

fn check_cutoff(cutoff: f64) -> Result<()> {
    if cutoff > 0.0 && cutoff < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("cutoff {cutoff} must lie in (0, 1)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, r: usize, cols: usize) -> ComplexMatrix {
        DMatrix::from_fn(r, cols, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn diag(vals: &[f64]) -> ComplexMatrix {
        DMatrix::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|&x| re(x))))
    }

    #[test]
    fn kron_identity_and_diagonal() {
        let i2 = ComplexMatrix::identity(2, 2);
        assert_eq!(kron(&i2, &i2).unwrap(), ComplexMatrix::identity(4, 4));
        let k = kron(&diag(&[1.0, 2.0]), &diag(&[3.0, 4.0])).unwrap();
        assert_eq!(k, diag(&[3.0, 4.0, 6.0, 8.0]));
    }

    #[test]
    fn kron_mixed_product_with_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 2, 2);
        let b = random_matrix(&mut rng, 2, 2);
        let x = random_matrix(&mut rng, 2, 1);
        let y = random_matrix(&mut rng, 2, 1);
        let lhs = kron(&a, &b).unwrap() * kron(&x, &y).unwrap();
        let rhs = kron(&(&a * &x), &(&b * &y)).unwrap();
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn kron_is_associative_on_integer_matrices() {
        let a = real_matrix(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = real_matrix(&[&[0.0, 5.0, 1.0]]);
        let cm = real_matrix(&[&[2.0], &[-1.0]]);
        let left = kron(&kron(&a, &b).unwrap(), &cm).unwrap();
        let right = kron(&a, &kron(&b, &cm).unwrap()).unwrap();
        assert_eq!(left, right);
    }

    #[test]
    fn vectorize_stacks_columns() {
        let a = real_matrix(&[&[1.0, 3.0], &[2.0, 4.0]]);
        let v = vectorize(&a).unwrap();
        let got: Vec<f64> = v.data().iter().map(|z| z.re).collect();
        assert_eq!(got, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(unvectorize(&v), a);
    }

    #[test]
    fn vectorize_sandwich_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = random_matrix(&mut rng, 3, 3);
        let x = random_matrix(&mut rng, 3, 3);
        let cm = random_matrix(&mut rng, 3, 3);
        let lhs = vectorize(&(&b * &x * &cm)).unwrap();
        let rhs = kron(&cm.transpose(), &b).unwrap() * vectorize(&x).unwrap().data();
        assert!((lhs.data() - rhs).norm() < 1e-13);
    }

    #[test]
    fn trace_is_inner_product_with_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 4, 4);
        let one = identity_vector(4);
        let tr = one.dotc(vectorize(&a).unwrap().data());
        assert_relative_eq!(tr.re, a.trace().re, epsilon = 1e-14);
        assert_relative_eq!(tr.im, a.trace().im, epsilon = 1e-14);
    }

    #[test]
    fn vectorize_rejects_non_square() {
        assert!(vectorize(&ComplexMatrix::zeros(2, 3)).is_err());
        assert!(VectorizedOperator::new(ComplexVector::zeros(5)).is_err());
    }

    #[test]
    fn pseudo_inverse_examples() {
        let p = moore_penrose(&diag(&[2.0, 4.0]), DEFAULT_CUTOFF).unwrap();
        assert!((p - diag(&[0.5, 0.25])).norm() < 1e-14);
        let proj = diag(&[1.0, 0.0]);
        let p = moore_penrose(&proj, DEFAULT_CUTOFF).unwrap();
        assert!((p - proj).norm() < 1e-14);
    }

    #[test]
    fn penrose_identities_on_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [4usize, 9, 16, 64] {
            let rank = n / 2;
            let a = random_matrix(&mut rng, n, rank) * random_matrix(&mut rng, rank, n);
            let p = moore_penrose(&a, DEFAULT_CUTOFF).unwrap();
            let scale = a.norm();
            assert!((&a * &p * &a - &a).norm() <= 1e-10 * scale, "n={n}");
            assert!((&p * &a * &p - &p).norm() <= 1e-10 * p.norm());
            let ap = &a * &p;
            let pa = &p * &a;
            assert!((&ap - ap.adjoint()).norm() <= 1e-10 * ap.norm());
            assert!((&pa - pa.adjoint()).norm() <= 1e-10 * pa.norm());
        }
    }

    #[test]
    fn null_space_examples() {
        let ns = null_space(&diag(&[0.0, 1.0]), DEFAULT_CUTOFF).unwrap();
        assert_eq!(ns.len(), 1);
        assert_relative_eq!(ns[0][0].norm(), 1.0, epsilon = 1e-14);
        assert!(ns[0][1].norm() < 1e-14);

        let full = real_matrix(&[&[2.0, 1.0], &[1.0, 3.0]]);
        assert!(null_space(&full, DEFAULT_CUTOFF).unwrap().is_empty());

        // L p = 0 for the two-state rate matrix: p ∝ (2, 1)
        let rates = real_matrix(&[&[-1.0, 2.0], &[1.0, -2.0]]);
        let ns = null_space(&rates, DEFAULT_CUTOFF).unwrap();
        assert_eq!(ns.len(), 1);
        let v = &ns[0];
        let phase = v[0] / v[0].norm();
        let expected = [2.0 / 5f64.sqrt(), 1.0 / 5f64.sqrt()];
        for (i, e) in expected.iter().enumerate() {
            let z = v[i] / phase;
            assert_relative_eq!(z.re, *e, epsilon = 1e-12);
            assert!(z.im.abs() < 1e-12);
        }
    }

    #[test]
    fn null_vectors_annihilate_random_singular_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3usize, 6, 12] {
            let a = random_matrix(&mut rng, n, n - 2) * random_matrix(&mut rng, n - 2, n);
            let ns = null_space(&a, 1e-10).unwrap();
            assert_eq!(ns.len(), 2);
            for v in &ns {
                assert!((&a * v).norm() <= 1e-10 * a.norm());
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matrix_from_rows(&[]).is_err());
        assert!(matrix_from_rows(&[vec![re(1.0)], vec![re(1.0), re(2.0)]]).is_err());
        assert!(matrix_from_rows(&[vec![re(f64::NAN)]]).is_err());
        assert!(moore_penrose(&diag(&[1.0]), 0.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn unvectorize_inverts_vectorize(n in 1usize..6, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, n, n);
            proptest::prop_assert_eq!(unvectorize(&vectorize(&a).unwrap()), a);
        }
    }
}
