//! Small dense linear algebra over real or complex scalars: matrix products,
//! a partial-pivot solver, the scaling-and-squaring matrix exponential, and a
//! Jacobi eigensolver for Hermitian matrices.
//!
//! Everything here operates on `ndarray::Array2` in standard (row-major)
//! layout. Matrix dimensions in this crate stay in the low hundreds, so
//! cache-aware triple loops are all that is needed.

use ndarray::Array2;
use num_complex::Complex;
use num_traits::{One, ToPrimitive, Zero};

use crate::scalar::{Real, C};

/// Element type usable in the dense routines: the library's real scalars and
/// their complex extensions.
pub trait MatElem:
    Copy
    + PartialEq
    + Zero
    + One
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::fmt::Debug
    + Send
    + Sync
    + 'static
{
    type Re: Real;

    fn modulus(self) -> Self::Re;
    fn from_re(r: Self::Re) -> Self;
    fn scale(self, r: Self::Re) -> Self;
}

macro_rules! impl_mat_elem_real {
    ($t:ty) => {
        impl MatElem for $t {
            type Re = $t;

            fn modulus(self) -> $t {
                self.abs()
            }

            fn from_re(r: $t) -> $t {
                r
            }

            fn scale(self, r: $t) -> $t {
                self * r
            }
        }
    };
}

impl_mat_elem_real!(f32);
impl_mat_elem_real!(f64);

impl<T: Real> MatElem for Complex<T> {
    type Re = T;

    fn modulus(self) -> T {
        self.norm()
    }

    fn from_re(r: T) -> Self {
        Complex::new(r, T::zero())
    }

    fn scale(self, r: T) -> Self {
        Complex::new(self.re * r, self.im * r)
    }
}

pub fn identity<E: MatElem>(n: usize) -> Array2<E> {
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        m[[i, i]] = E::one();
    }
    m
}

/// `a * b` with an i-k-j loop; zero entries of `a` are skipped, which makes
/// triangular and banded products proportionally cheaper.
pub fn matmul<E: MatElem>(a: &Array2<E>, b: &Array2<E>) -> Array2<E> {
    let (n, k) = a.dim();
    let (kb, m) = b.dim();
    assert_eq!(k, kb, "matmul: inner dimensions differ");
    let mut c: Array2<E> = Array2::zeros((n, m));
    let b_std = b.as_standard_layout();
    let bs = b_std.as_slice().expect("standard layout");
    let cs = c.as_slice_mut().expect("standard layout");
    for i in 0..n {
        let crow = &mut cs[i * m..(i + 1) * m];
        for kk in 0..k {
            let aik = a[[i, kk]];
            if aik.is_zero() {
                continue;
            }
            let brow = &bs[kk * m..(kk + 1) * m];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    }
    c
}

/// Maximum absolute column sum.
pub fn one_norm<E: MatElem>(a: &Array2<E>) -> E::Re {
    let (n, m) = a.dim();
    let mut best = E::Re::zero();
    for j in 0..m {
        let mut s = E::Re::zero();
        for i in 0..n {
            s += a[[i, j]].modulus();
        }
        if s > best {
            best = s;
        }
    }
    best
}

/// Solve `A X = B` by Gaussian elimination with partial pivoting.
///
/// Panics on a singular pivot; callers only pass Pade denominators, which are
/// well conditioned by construction.
pub fn solve<E: MatElem>(a: &Array2<E>, b: &Array2<E>) -> Array2<E> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert_eq!(n, b.nrows());
    let m = b.ncols();

    let mut lu = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let mut piv = col;
        let mut piv_mod = lu[[col, col]].modulus();
        for row in col + 1..n {
            let v = lu[[row, col]].modulus();
            if v > piv_mod {
                piv = row;
                piv_mod = v;
            }
        }
        assert!(piv_mod > E::Re::zero(), "solve: singular matrix");
        if piv != col {
            for j in 0..n {
                let t = lu[[col, j]];
                lu[[col, j]] = lu[[piv, j]];
                lu[[piv, j]] = t;
            }
            for j in 0..m {
                let t = x[[col, j]];
                x[[col, j]] = x[[piv, j]];
                x[[piv, j]] = t;
            }
        }
        let pivot = lu[[col, col]];
        for row in col + 1..n {
            if lu[[row, col]].is_zero() {
                continue;
            }
            let f = lu[[row, col]] / pivot;
            lu[[row, col]] = E::zero();
            for j in col + 1..n {
                let v = lu[[col, j]];
                lu[[row, j]] -= f * v;
            }
            for j in 0..m {
                let v = x[[col, j]];
                x[[row, j]] -= f * v;
            }
        }
    }
    for col in (0..n).rev() {
        let pivot = lu[[col, col]];
        for j in 0..m {
            let mut s = x[[col, j]];
            for k in col + 1..n {
                s -= lu[[col, k]] * x[[k, j]];
            }
            x[[col, j]] = s / pivot;
        }
    }
    x
}

/// Pade(13) numerator coefficients (Higham 2005, scaling-and-squaring).
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

/// Matrix exponential by scaling and squaring with a Pade(13) approximant.
pub fn expm<E: MatElem>(a: &Array2<E>) -> Array2<E> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm: matrix must be square");
    if n == 0 {
        return Array2::zeros((0, 0));
    }

    let norm = one_norm(a).to_f64().unwrap_or(f64::INFINITY);
    let s: u32 = if norm > THETA13 { (norm / THETA13).log2().ceil() as u32 } else { 0 };
    let scale = E::Re::of(0.5f64.powi(s as i32));
    let a1 = a.mapv(|v| v.scale(scale));

    let b = |k: usize| E::from_re(E::Re::of(PADE13[k]));
    let a2 = matmul(&a1, &a1);
    let a4 = matmul(&a2, &a2);
    let a6 = matmul(&a2, &a4);
    let eye = identity::<E>(n);

    let w1 = &a6.mapv(|v| v * b(13)) + &a4.mapv(|v| v * b(11)) + &a2.mapv(|v| v * b(9));
    let w2 = matmul(&w1, &a6)
        + &a6.mapv(|v| v * b(7))
        + &a4.mapv(|v| v * b(5))
        + &a2.mapv(|v| v * b(3))
        + &eye.mapv(|v| v * b(1));
    let u = matmul(&a1, &w2);

    let v1 = &a6.mapv(|v| v * b(12)) + &a4.mapv(|v| v * b(10)) + &a2.mapv(|v| v * b(8));
    let v = matmul(&v1, &a6)
        + &a6.mapv(|v| v * b(6))
        + &a4.mapv(|v| v * b(4))
        + &a2.mapv(|v| v * b(2))
        + &eye.mapv(|v| v * b(0));

    let num = &v + &u;
    let den = &v - &u;
    let mut r = solve(&den, &num);
    for _ in 0..s {
        r = matmul(&r, &r);
    }
    r
}

/// Eigenvalues of a Hermitian matrix by cyclic Jacobi rotations,
/// in ascending order.
///
/// Intended for diagnostics (positivity checks) on matrices up to a few
/// hundred rows; convergence is quadratic once the off-diagonal mass is
/// small.
pub fn eigvals_hermitian<T: Real>(a: &Array2<C<T>>) -> Vec<T> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    // Symmetrize first so roundoff in the input cannot feed the iteration.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (m[[i, j]] + m[[j, i]].conj()).scale(T::half());
            m[[i, j]] = avg;
            m[[j, i]] = avg.conj();
        }
        m[[i, i]] = Complex::new(m[[i, i]].re, T::zero());
    }

    let tol = T::epsilon() * T::of(n as f64);
    for _sweep in 0..60 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]].norm_sqr();
            }
        }
        let scale = one_norm(&m) + T::min_positive_value();
        if off.sqrt() <= tol * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                let mag = apq.norm();
                if mag <= tol * scale {
                    continue;
                }
                // Unitary 2x2 rotation zeroing the (p,q) element.
                let phase = apq / Complex::new(mag, T::zero());
                let tau = (m[[q, q]].re - m[[p, p]].re) / (T::two() * mag);
                let t = {
                    let s = if tau >= T::zero() { T::one() } else { -T::one() };
                    s / (tau.abs() + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                let cs = Complex::new(c, T::zero());
                let ss = phase.scale(s);
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = mkp * cs - mkq * ss.conj();
                    m[[k, q]] = mkp * ss + mkq * cs;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = mpk * cs - mqk * ss;
                    m[[q, k]] = mpk * ss.conj() + mqk * cs;
                }
            }
        }
    }

    let mut vals: Vec<T> = (0..n).map(|i| m[[i, i]].re).collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cr;

    fn c64(re: f64, im: f64) -> C<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn matmul_small() {
        let a = Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Array2::from_shape_vec((2, 2), vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = matmul(&a, &b);
        assert_eq!(c[[0, 0]], 19.0);
        assert_eq!(c[[0, 1]], 22.0);
        assert_eq!(c[[1, 0]], 43.0);
        assert_eq!(c[[1, 1]], 50.0);
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = Array2::from_shape_vec((2, 2), vec![4.0, 1.0, 2.0, 3.0]).unwrap();
        let x_true = Array2::from_shape_vec((2, 1), vec![1.5f64, -2.0]).unwrap();
        let b = matmul(&a, &x_true);
        let x = solve(&a, &b);
        assert!((x[[0, 0]] - 1.5).abs() < 1e-13);
        assert!((x[[1, 0]] + 2.0).abs() < 1e-13);
    }

    #[test]
    fn expm_zero_is_identity() {
        let z: Array2<f64> = Array2::zeros((3, 3));
        let e = expm(&z);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((e[[i, j]] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn expm_diagonal_complex() {
        let mut a = Array2::zeros((2, 2));
        a[[0, 0]] = c64(-0.3, 0.0);
        a[[1, 1]] = c64(0.0, 2.0);
        let e = expm(&a);
        assert!((e[[0, 0]] - cr((-0.3f64).exp())).norm() < 1e-14);
        assert!((e[[1, 1]] - c64(2.0f64.cos(), 2.0f64.sin())).norm() < 1e-14);
    }

    #[test]
    fn expm_antihermitian_is_unitary() {
        // Generator of the form i*H, H Hermitian.
        let mut a = Array2::zeros((3, 3));
        a[[0, 1]] = c64(0.0, 0.7);
        a[[1, 0]] = c64(0.0, 0.7);
        a[[1, 2]] = c64(0.4, 0.1);
        a[[2, 1]] = c64(-0.4, 0.1);
        let u = expm(&a);
        let udag = u.t().mapv(|v: C<f64>| v.conj());
        let p = matmul(&udag, &u.to_owned());
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((p[[i, j]] - cr(want)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn expm_large_norm_uses_scaling() {
        // Nilpotent upper shift with a big prefactor: exp is a finite
        // polynomial, easy to check exactly.
        let mut a: Array2<f64> = Array2::zeros((3, 3));
        a[[0, 1]] = 40.0;
        a[[1, 2]] = 40.0;
        let e = expm(&a);
        assert!((e[[0, 1]] - 40.0).abs() < 1e-9);
        assert!((e[[0, 2]] - 800.0).abs() < 1e-7);
        assert!((e[[1, 2]] - 40.0).abs() < 1e-9);
    }

    #[test]
    fn eigvals_hermitian_known_spectrum() {
        // Pauli-x like block plus an isolated level.
        let mut a = Array2::zeros((3, 3));
        a[[0, 1]] = c64(0.0, -1.0);
        a[[1, 0]] = c64(0.0, 1.0);
        a[[2, 2]] = c64(0.5, 0.0);
        let vals = eigvals_hermitian(&a);
        assert!((vals[0] + 1.0).abs() < 1e-12);
        assert!((vals[1] - 0.5).abs() < 1e-12);
        assert!((vals[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigvals_hermitian_matches_trace() {
        let n = 8;
        let mut a = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let re = ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5;
                let im = ((i * 5 + j * 2) % 13) as f64 / 13.0 - 0.5;
                a[[i, j]] = c64(re, if i == j { 0.0 } else { im });
            }
        }
        // Hermitize.
        let h = {
            let adag = a.t().mapv(|v: C<f64>| v.conj());
            (&a + &adag).mapv(|v| v.scale(0.5))
        };
        let vals = eigvals_hermitian(&h);
        let tr: f64 = (0..n).map(|i| h[[i, i]].re).sum();
        let sum: f64 = vals.iter().sum();
        assert!((tr - sum).abs() < 1e-10);
    }
}
