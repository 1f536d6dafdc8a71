//! Dense linear algebra helpers: matrix exponential, Hermitian eigensystems and
//! superoperator construction.

use nalgebra::{self as na, ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{Complex, Real};

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

fn norm1<N: ComplexField + Copy>(a: &DMatrix<N>) -> f64 {
    let mut best = 0.0f64;
    for col in a.column_iter() {
        let s: f64 = col
            .iter()
            .map(|x| na::try_convert::<N::RealField, f64>(x.modulus()).unwrap_or(f64::NAN))
            .sum();
        if !(s <= best) {
            best = s;
        }
    }
    best
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
///
/// Works for real and complex element types alike. Fails when the input has
/// non-finite entries or the Padé denominator is singular.
pub fn expm<N: ComplexField + Copy>(a: &DMatrix<N>) -> Result<DMatrix<N>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    let norm = norm1(a);
    if !norm.is_finite() {
        return Err(Error::Propagation("non-finite generator".into()));
    }
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scale: N = N::from_real(na::convert(0.5f64.powi(squarings)));
    let a = a * scale;

    let b = |i: usize| -> N { N::from_real(na::convert(PADE13[i])) };
    let ident = DMatrix::<N>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9))
        + &a6 * b(7)
        + &a4 * b(5)
        + &a2 * b(3)
        + &ident * b(1);
    let u = &a * inner_u;
    let v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8))
        + &a6 * b(6)
        + &a4 * b(4)
        + &a2 * b(2)
        + &ident * b(0);

    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .ok_or_else(|| Error::Propagation("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Propagation("matrix exponential overflowed".into()));
    }
    Ok(r)
}

/// Frobenius norm of `a - a†`.
pub fn hermiticity_defect<T: Real>(a: &CMatrix<T>) -> T {
    (a - a.adjoint()).norm()
}

pub(crate) fn hermitian_part<T: Real>(a: &CMatrix<T>) -> CMatrix<T> {
    (a + a.adjoint()) * Complex::new(T::lit(0.5), T::zero())
}

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns) of a Hermitian matrix.
pub fn hermitian_eigensystem<T: Real>(a: &CMatrix<T>) -> Result<(DVector<T>, CMatrix<T>)> {
    let scale = T::one().max(a.norm());
    let defect = hermiticity_defect(a);
    if defect > T::tol(1e-10) * scale {
        return Err(Error::NotHermitian(defect.to_f64_lossy()));
    }
    Ok(eigensystem_unchecked(&hermitian_part(a)))
}

pub(crate) fn eigensystem_unchecked<T: Real>(a: &CMatrix<T>) -> (DVector<T>, CMatrix<T>) {
    let eig = a.clone().symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &k| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[k])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Column-stacking superoperator of `rate * (2 L ρ L† − L†L ρ − ρ L†L)`.
///
/// With `vec` stacking columns, `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`.
pub fn lindblad_superoperator<T: Real>(jump: &CMatrix<T>, rate: T) -> CMatrix<T> {
    let n = jump.nrows();
    let ident = CMatrix::<T>::identity(n, n);
    let jump_dag = jump.adjoint();
    let ldl = &jump_dag * jump;
    let two = Complex::new(T::lit(2.0), T::zero());
    let sandwich = jump.conjugate().kronecker(jump) * two;
    let left = ident.kronecker(&ldl);
    let right = ldl.transpose().kronecker(&ident);
    (sandwich - left - right) * Complex::new(rate, T::zero())
}

pub fn vectorize<T: Real>(a: &CMatrix<T>) -> CVector<T> {
    CVector::from_column_slice(a.as_slice())
}

pub fn unvectorize<T: Real>(v: &CVector<T>, n: usize) -> CMatrix<T> {
    CMatrix::from_column_slice(n, n, v.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taylor_expm(a: &DMatrix<f64>) -> DMatrix<f64> {
        // Plain Taylor series with many terms after halving; only for small test inputs.
        let n = a.nrows();
        let s = 10;
        let a = a / 2f64.powi(s);
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = DMatrix::<f64>::zeros(4, 4);
        assert_eq!(expm(&z).unwrap(), DMatrix::identity(4, 4));
    }

    #[test]
    fn expm_matches_taylor_and_nalgebra() {
        let a = DMatrix::from_fn(6, 6, |i, k| ((i * 7 + k * 3) % 5) as f64 - 2.0);
        let ours = expm(&a).unwrap();
        let taylor = taylor_expm(&a);
        let theirs = a.clone().exp();
        assert!((&ours - &taylor).norm() / taylor.norm() < 1e-12);
        assert!((&ours - &theirs).norm() / theirs.norm() < 1e-12);
    }

    #[test]
    fn expm_rotation_generator() {
        let t = 0.7f64;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = expm(&a).unwrap();
        assert!((e[(0, 0)] - t.cos()).abs() < 1e-15);
        assert!((e[(1, 0)] - t.sin()).abs() < 1e-15);
    }

    #[test]
    fn expm_defective_jordan_block() {
        // exp([[l, 1], [0, l]]) = e^l [[1, 1], [0, 1]]
        let l = -3.5f64;
        let a = DMatrix::from_row_slice(2, 2, &[l, 1.0, 0.0, l]);
        let e = expm(&a).unwrap();
        assert!((e[(0, 1)] - l.exp()).abs() < 1e-15);
        assert!((e[(0, 0)] - l.exp()).abs() < 1e-15);
    }

    #[test]
    fn eigensystem_sorted_and_reconstructs() {
        let a = CMatrix::<f64>::from_fn(4, 4, |i, k| {
            let re = (i + k) as f64 * 0.3;
            let im = if i == k { 0.0 } else { (i as f64 - k as f64) * 0.2 };
            Complex::new(re, im)
        });
        let (vals, vecs) = hermitian_eigensystem(&a).unwrap();
        assert!(vals.as_slice().windows(2).all(|w| w[0] <= w[1]));
        let d = CMatrix::from_diagonal(&vals.map(|x| Complex::new(x, 0.0)));
        let back = &vecs * d * vecs.adjoint();
        assert!((back - a).norm() < 1e-12);
    }

    #[test]
    fn eigensystem_rejects_non_hermitian() {
        let mut a = CMatrix::<f64>::identity(3, 3);
        a[(0, 1)] = Complex::new(1.0, 0.0);
        assert!(matches!(hermitian_eigensystem(&a), Err(Error::NotHermitian(_))));
    }
}
