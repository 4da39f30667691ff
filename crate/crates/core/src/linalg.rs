//! Small dense complex linear-algebra helpers on top of nalgebra.

use faer::{Mat, MatRef};
use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// One draw of CN(0, 1): real and imaginary parts are N(0, 1/2).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    // column-major fill order, fixed so outputs are reproducible
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CVector {
    loop {
        let v = CVector::from_fn(dim, |_, _| complex_gaussian(rng));
        let n = v.norm();
        if n > 1e-3 {
            return v / C64::from(n);
        }
    }
}

pub fn normalized(v: &CVector) -> CVector {
    let n = v.norm();
    if n == 0.0 {
        v.clone()
    } else {
        v / C64::from(n)
    }
}

pub fn normalize_columns(m: &CMatrix) -> CMatrix {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= C64::from(n);
        }
    }
    out
}

fn to_faer(m: &CMatrix) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: MatRef<'_, C64>) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Full SVD: the square left factor and the singular values in descending order.
fn full_svd(m: &CMatrix) -> (CMatrix, Vec<f64>) {
    let svd = to_faer(m).svd().expect("SVD converges");
    let s = svd.S().column_vector().iter().map(|z| z.re).collect();
    (from_faer(svd.U()), s)
}

/// Thin left singular vectors (rows x min(rows, cols)), ordered by descending singular value.
pub fn left_singular_vectors(m: &CMatrix) -> CMatrix {
    if m.nrows() == 0 || m.ncols() == 0 {
        return CMatrix::zeros(m.nrows(), 0);
    }
    from_faer(to_faer(m).thin_svd().expect("SVD converges").U())
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    to_faer(m).singular_values().expect("SVD converges")
}

pub fn min_singular_value(m: &CMatrix) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Numerical rank: singular values above `rel_tol * sigma_max`.
pub fn rank(m: &CMatrix, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    numerical_rank(&sv, rel_tol)
}

fn numerical_rank(sv: &[f64], rel_tol: f64) -> usize {
    match sv.first() {
        Some(&top) if top > 0.0 => sv.iter().filter(|&&s| s > rel_tol * top).count(),
        _ => 0,
    }
}

/// Orthonormal basis (M x r) for the column span of `m`.
pub fn orthonormal_basis(m: &CMatrix, rel_tol: f64) -> CMatrix {
    let rows = m.nrows();
    if m.ncols() == 0 || rows == 0 {
        return CMatrix::zeros(rows, 0);
    }
    let (u, sv) = full_svd(m);
    u.columns(0, numerical_rank(&sv, rel_tol)).into_owned()
}

/// Orthonormal basis of the orthogonal complement of span(`m`) in C^M.
pub fn orthogonal_complement(m: &CMatrix, rel_tol: f64) -> CMatrix {
    let dim = m.nrows();
    if m.ncols() == 0 {
        return CMatrix::identity(dim, dim);
    }
    let (u, sv) = full_svd(m);
    let r = numerical_rank(&sv, rel_tol);
    u.columns(r, dim - r).into_owned()
}

/// Sine of the angle between the lines spanned by `a` and `b`.
pub fn line_distance(a: &CVector, b: &CVector) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    // projection residual stays accurate for nearly parallel lines
    let coef = a.dotc(b) / C64::from(na * na);
    ((b - a * coef).norm() / nb).min(1.0)
}

/// Eigenpair with the eigenvalue of largest magnitude (lowest index on ties).
/// The returned eigenvector has unit norm.
pub fn dominant_eigenpair(m: &CMatrix) -> Option<(C64, CVector)> {
    eigenpairs(m)?.into_iter().next()
}

/// All eigenpairs with unit eigenvectors, by decreasing |λ|; ties keep the
/// solver's order.
pub fn eigenpairs(m: &CMatrix) -> Option<Vec<(C64, CVector)>> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "eigenpair of a non-square matrix");
    if n == 0 {
        return None;
    }
    let evd = to_faer(m).eigen().ok()?;
    let u = evd.U();
    let mut pairs = Vec::with_capacity(n);
    for (i, &lambda) in evd.S().column_vector().iter().enumerate() {
        let v = CVector::from_fn(n, |r, _| u[(r, i)]);
        if !v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) || v.norm() == 0.0 {
            return None;
        }
        pairs.push((lambda, normalized(&v)));
    }
    pairs.sort_by(|a, b| b.0.norm().total_cmp(&a.0.norm()));
    Some(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};

    #[test]
    fn complement_is_orthogonal_and_complete() {
        let mut rng = substream(1, Purpose::Channels, 0);
        let a = gaussian_matrix(&mut rng, 5, 2);
        let c = orthogonal_complement(&a, 1e-10);
        assert_eq!(c.ncols(), 3);
        assert!((c.adjoint() * &a).norm() < 1e-12);
        let gram = c.adjoint() * &c;
        assert!((gram - CMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn complement_of_empty_span_is_identity() {
        let c = orthogonal_complement(&CMatrix::zeros(3, 0), 1e-10);
        assert_eq!(c, CMatrix::identity(3, 3));
    }

    #[test]
    fn rank_detects_duplicate_column() {
        let mut rng = substream(2, Purpose::Channels, 0);
        let mut a = gaussian_matrix(&mut rng, 4, 3);
        let c0 = a.column(0).clone_owned() * C64::new(0.0, 2.0);
        a.set_column(2, &c0);
        assert_eq!(rank(&a, 1e-8), 2);
    }

    #[test]
    fn dominant_eigenpair_residual() {
        for idx in 0..50 {
            let mut rng = substream(3, Purpose::Channels, idx);
            let m = gaussian_matrix(&mut rng, 6, 6);
            let (lambda, v) = dominant_eigenpair(&m).unwrap();
            let r = (&m * &v - &v * lambda).norm();
            assert!(r < 1e-12 * m.norm(), "residual {r}");
            let ev = nalgebra::Schur::new(m.clone()).eigenvalues().unwrap();
            let max = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!((lambda.norm() - max).abs() < 1e-10 * max);
        }
    }

    #[test]
    fn basis_of_rank_deficient_span_reconstructs_it() {
        // five vectors in a two-dimensional subspace of C^6
        for idx in 0..200 {
            let mut rng = substream(6, Purpose::Channels, idx);
            let span = gaussian_matrix(&mut rng, 6, 2);
            let mix = gaussian_matrix(&mut rng, 2, 5);
            let m = normalize_columns(&(&span * mix));
            let q = orthonormal_basis(&m, 1e-8);
            assert_eq!(q.ncols(), 2);
            let residual = (&m - &q * (q.adjoint() * &m)).norm();
            assert!(residual < 1e-12, "{idx}: {residual:e}");
            let c = orthogonal_complement(&m, 1e-8);
            assert_eq!(c.ncols(), 4);
            assert!((c.adjoint() * &m).norm() < 1e-12);
        }
    }

    #[test]
    fn line_distance_ignores_phase_and_scale() {
        let mut rng = substream(4, Purpose::Channels, 0);
        let v = random_unit_vector(&mut rng, 4);
        let w = &v * C64::new(-3.0, 1.5);
        assert!(line_distance(&v, &w) < 1e-7);
        let u = random_unit_vector(&mut rng, 4);
        assert!(line_distance(&v, &u) > 1e-3);
    }
}
