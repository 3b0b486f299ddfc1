//! Dense complex matrices on the spin Hilbert space.

use nalgebra::{DMatrix, DVector};

use crate::scalar::{c_re, cabs, Real, C};

/// Dense complex square matrix acting on the (2s+1)^V dimensional space.
pub type OperatorMatrix<T> = DMatrix<C<T>>;
pub type StateVector<T> = DVector<C<T>>;

pub fn identity<T: Real>(dim: usize) -> OperatorMatrix<T> {
    DMatrix::identity(dim, dim)
}

pub fn zeros<T: Real>(dim: usize) -> OperatorMatrix<T> {
    DMatrix::zeros(dim, dim)
}

/// `a ⊗ b` with `a` acting on the more significant index.
pub fn kron<T: Real>(a: &OperatorMatrix<T>, b: &OperatorMatrix<T>) -> OperatorMatrix<T> {
    a.kronecker(b)
}

pub fn trace<T: Real>(m: &OperatorMatrix<T>) -> C<T> {
    m.diagonal().iter().fold(c_re(T::zero()), |acc, z| acc + *z)
}

/// `m^n` by binary powering; `n = 0` yields the identity.
pub fn powi<T: Real>(m: &OperatorMatrix<T>, mut n: usize) -> OperatorMatrix<T> {
    let dim = m.nrows();
    let mut acc = identity::<T>(dim);
    if n == 0 {
        return acc;
    }
    let mut base = m.clone();
    let mut first = true;
    loop {
        if n & 1 == 1 {
            if first {
                acc = base.clone();
                first = false;
            } else {
                acc = &acc * &base;
            }
        }
        n >>= 1;
        if n == 0 {
            break;
        }
        base = &base * &base;
    }
    acc
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff<T: Real>(a: &OperatorMatrix<T>, b: &OperatorMatrix<T>) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| cabs(*x - *y))
        .fold(T::zero(), |m, v| if v > m { v } else { m })
}

pub fn max_abs<T: Real>(a: &OperatorMatrix<T>) -> T {
    a.iter()
        .map(|x| cabs(*x))
        .fold(T::zero(), |m, v| if v > m { v } else { m })
}

pub fn is_hermitian<T: Real>(a: &OperatorMatrix<T>, tol: T) -> bool {
    a.is_square() && max_abs_diff(a, &a.adjoint()) <= tol
}

/// Product of `n` factors equal to `base`, except that factor `k` is replaced
/// by `m` for every `(k, m)` in `replaced`. Runs of identical factors are
/// evaluated by binary powering. `replaced` must be sorted by slot with
/// distinct slots below `n`.
pub fn chain_product<T: Real>(
    base: &OperatorMatrix<T>,
    n: usize,
    replaced: &[(usize, &OperatorMatrix<T>)],
) -> OperatorMatrix<T> {
    let mut acc = identity::<T>(base.nrows());
    let mut pos = 0;
    for &(slot, m) in replaced {
        debug_assert!(slot >= pos && slot < n);
        if slot > pos {
            acc = &acc * powi(base, slot - pos);
        }
        acc = &acc * m;
        pos = slot + 1;
    }
    if n > pos {
        acc = &acc * powi(base, n - pos);
    }
    acc
}
