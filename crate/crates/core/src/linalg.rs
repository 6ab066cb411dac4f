//! Dense complex linear algebra on top of LAPACK.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, ShapeBuilder};
use ndarray_linalg::{Eigh, JobSvd, QR, SVDDC, SVD, UPLO};
use num_complex::Complex64 as C64;

use crate::tensor::TensorError;

pub fn dagger(m: &ArrayView2<C64>) -> Array2<C64> {
    m.t().mapv(|x| x.conj())
}

pub fn frobenius(m: &ArrayView2<C64>) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Thin SVD `m = u * diag(s) * vh` with `k = min(rows, cols)` singular values
/// in descending order.
pub fn svd_thin(m: &Array2<C64>) -> Result<(Array2<C64>, Array1<f64>, Array2<C64>), TensorError> {
    let (r, c) = m.dim();
    let k = r.min(c);
    if k == 0 {
        return Ok((Array2::zeros((r, 0)), Array1::zeros(0), Array2::zeros((0, c))));
    }
    let res = match m.svddc(JobSvd::Some) {
        Ok((Some(u), s, Some(vh))) if s.iter().all(|x| x.is_finite()) => (u, s, vh),
        _ => {
            // divide-and-conquer occasionally fails on nasty inputs; fall back to gesvd
            let (u, s, vh) = m
                .svd(true, true)
                .map_err(|e| TensorError::Linalg(format!("svd failed: {e}")))?;
            let u = u.unwrap().slice(s![.., ..k]).to_owned();
            let vh = vh.unwrap().slice(s![..k, ..]).to_owned();
            (u, s, vh)
        }
    };
    Ok(res)
}

/// Thin QR with a non-negative real diagonal on `r`, making the factors unique
/// for full-rank input.
pub fn qr_positive(m: &Array2<C64>) -> Result<(Array2<C64>, Array2<C64>), TensorError> {
    let (rows, cols) = m.dim();
    let k = rows.min(cols);
    if k == 0 {
        return Ok((Array2::zeros((rows, 0)), Array2::zeros((0, cols))));
    }
    let (mut q, mut r) = m.qr().map_err(|e| TensorError::Linalg(format!("qr failed: {e}")))?;
    // lax returns q: rows x k, r: k x cols
    debug_assert_eq!(q.dim(), (rows, k));
    debug_assert_eq!(r.dim(), (k, cols));
    for j in 0..k {
        let d = r[[j, j]];
        let n = d.norm();
        if n > 0.0 {
            let phase = d / n;
            q.column_mut(j).mapv_inplace(|x| x * phase);
            r.row_mut(j).mapv_inplace(|x| x * phase.conj());
            r[[j, j]] = C64::new(n, 0.0);
        }
    }
    Ok((q, r))
}

/// Thin LQ with non-negative real diagonal on `l`: `m = l * q`, `q q^† = 1`.
pub fn lq_positive(m: &Array2<C64>) -> Result<(Array2<C64>, Array2<C64>), TensorError> {
    let (q, r) = qr_positive(&dagger(&m.view()))?;
    Ok((dagger(&r.view()), dagger(&q.view())))
}

/// Eigen-decomposition of a Hermitian matrix, ascending eigenvalues.
pub fn eigh(h: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>), TensorError> {
    if h.is_empty() {
        return Ok((Array1::zeros(0), Array2::zeros(h.dim())));
    }
    // symmetrize to protect LAPACK from rounding asymmetry
    let hs = (h + &dagger(&h.view())).mapv(|x| x * 0.5);
    // column-major copy: LAPACK would otherwise see the transpose, conj(h)
    let mut hf = Array2::<C64>::zeros(hs.dim().f());
    hf.assign(&hs);
    hf.eigh(UPLO::Upper).map_err(|e| TensorError::Linalg(format!("eigh failed: {e}")))
}

/// `exp(t * x)` for skew-Hermitian `x`, through the Hermitian matrix `i x`.
pub fn expm_skew(x: &Array2<C64>, t: f64) -> Result<Array2<C64>, TensorError> {
    let i = C64::new(0.0, 1.0);
    let h = x.mapv(|v| v * i);
    let (w, v) = eigh(&h)?;
    // x = -i h  =>  exp(t x) = V exp(-i t w) V^†
    let phases = w.mapv(|e| C64::from_polar(1.0, -t * e));
    let vd = dagger(&v.view());
    let scaled = &v * &phases.insert_axis(Axis(0));
    Ok(scaled.dot(&vd))
}

pub fn skew_part(x: &Array2<C64>) -> Array2<C64> {
    (x - &dagger(&x.view())).mapv(|v| v * 0.5)
}

pub fn identity(n: usize) -> Array2<C64> {
    Array2::eye(n)
}

/// `‖m^† m − 1‖_F`.
pub fn unitarity_defect(m: &Array2<C64>) -> f64 {
    let p = dagger(&m.view()).dot(m) - identity(m.ncols());
    frobenius(&p.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn sample(r: usize, c: usize) -> Array2<C64> {
        Array2::from_shape_fn((r, c), |(i, j)| {
            C64::new(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64 - 1.0)
        })
    }

    #[test]
    fn qr_is_deterministic_and_positive() {
        let m = sample(5, 3);
        let (q1, r1) = qr_positive(&m).unwrap();
        let (q2, r2) = qr_positive(&m).unwrap();
        assert_eq!(q1, q2);
        assert_eq!(r1, r2);
        for j in 0..3 {
            assert!(r1[[j, j]].im == 0.0 && r1[[j, j]].re >= 0.0);
        }
        let err = &q1.dot(&r1) - &m;
        assert!(frobenius(&err.view()) < 1e-12);
        assert!(unitarity_defect(&q1) < 1e-12);
    }

    #[test]
    fn lq_reconstructs() {
        let m = sample(3, 6);
        let (l, q) = lq_positive(&m).unwrap();
        assert!(frobenius(&(&l.dot(&q) - &m).view()) < 1e-12);
        let qq = q.dot(&dagger(&q.view())) - identity(3);
        assert!(frobenius(&qq.view()) < 1e-12);
    }

    #[test]
    fn expm_of_diagonal_generator() {
        let theta = 0.7;
        let mut x = Array2::<C64>::zeros((2, 2));
        x[[0, 0]] = C64::new(0.0, theta);
        x[[1, 1]] = C64::new(0.0, -theta);
        let u = expm_skew(&x, -0.3).unwrap();
        assert!((u[[0, 0]] - C64::from_polar(1.0, -0.3 * theta)).norm() < 1e-14);
        assert!((u[[1, 1]] - C64::from_polar(1.0, 0.3 * theta)).norm() < 1e-14);
    }

    #[test]
    fn eigh_residual() {
        let x = sample(4, 4);
        let h = (&x + &dagger(&x.view())).mapv(|v| v * 0.5);
        let (w, v) = eigh(&h).unwrap();
        let res = h.dot(&v) - &v * &w.mapv(|e| C64::new(e, 0.0)).insert_axis(Axis(0));
        assert!(frobenius(&res.view()) < 1e-12);
    }

    #[test]
    fn expm_matches_taylor_series() {
        let x = skew_part(&sample(4, 4)).mapv(|v| v * 0.3);
        let mut term = identity(4);
        let mut sum = identity(4);
        for k in 1..40 {
            term = term.dot(&x).mapv(|v| v * (0.9 / k as f64));
            sum += &term;
        }
        assert!(frobenius(&(&expm_skew(&x, 0.9).unwrap() - &sum).view()) < 1e-13);
    }

    #[test]
    fn svd_thin_shapes() {
        let m = sample(7, 3);
        let (u, s, vh) = svd_thin(&m).unwrap();
        assert_eq!(u.dim(), (7, 3));
        assert_eq!(vh.dim(), (3, 3));
        let rec = (&u * &s.mapv(|x| C64::new(x, 0.0)).insert_axis(Axis(0))).dot(&vh);
        assert!(frobenius(&(&rec - &m).view()) < 1e-12);
    }
}
