"""Linear algebra and quadrature shared by every other module.

Matrices are ``scipy.sparse.csr_matrix`` instances; vectors are 1-D float
arrays. Factorizations are reused for transposed solves, which is how the
adjoint systems are solved.
"""
from functools import lru_cache
import warnings

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_LIMIT = 500
PIVOT_RTOL = 1e-14
MAX_GAUSS_POINTS = 16


class SingularMatrix(ArithmeticError):
    pass


class DimensionMismatch(ValueError):
    pass


class UnsupportedOrder(ValueError):
    pass


def as_sparse(A):
    """Return ``A`` as a CSR matrix with sorted column indices."""
    A = sp.csr_matrix(A, dtype=float)
    if not A.has_sorted_indices:
        A.sort_indices()
    return A


def _check_square(A, b=None):
    n, m = A.shape
    if n != m:
        raise DimensionMismatch(f"matrix is {n}x{m}, expected square")
    if b is not None and np.shape(b) != (n,):
        raise DimensionMismatch(f"rhs has shape {np.shape(b)}, expected ({n},)")


class LUFactor:
    """LU factorization with partial pivoting, usable for A x = b and A^T x = b.

    Dense LAPACK factorization is used below ``DENSE_LIMIT`` unknowns and
    SuperLU above it. A pivot smaller than ``PIVOT_RTOL`` times the largest
    pivot raises :class:`SingularMatrix`.
    """

    def __init__(self, A):
        A = as_sparse(A)
        _check_square(A)
        self.shape = A.shape
        n = A.shape[0]
        self._dense = n < DENSE_LIMIT
        if self._dense:
            with warnings.catch_warnings():
                # zero pivots are reported below as SingularMatrix
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu, piv = scipy.linalg.lu_factor(A.toarray(), check_finite=True)
            pivots = np.abs(np.diag(lu))
            self._lu = (lu, piv)
        else:
            try:
                self._lu = spla.splu(A.tocsc())
            except RuntimeError as exc:
                raise SingularMatrix(str(exc)) from None
            pivots = np.abs(self._lu.U.diagonal())
        big = pivots.max() if n else 0.0
        if n and (big == 0.0 or pivots.min() <= PIVOT_RTOL * big):
            raise SingularMatrix(
                f"pivot ratio {pivots.min() / big if big else 0.0:.3e} below {PIVOT_RTOL}"
            )

    def _solve(self, b, trans):
        b = np.asarray(b, dtype=float)
        if b.shape != (self.shape[0],):
            raise DimensionMismatch(f"rhs has shape {b.shape}, expected ({self.shape[0]},)")
        if self._dense:
            x = scipy.linalg.lu_solve(self._lu, b, trans=1 if trans else 0)
        else:
            x = self._lu.solve(b, trans="T" if trans else "N")
        if not np.all(np.isfinite(x)):
            raise SingularMatrix("non-finite solution")
        return x

    def solve(self, b):
        return self._solve(b, trans=False)

    def solve_transpose(self, b):
        return self._solve(b, trans=True)


def solve(A, b):
    """Solve ``A x = b``."""
    A = as_sparse(A)
    _check_square(A, b)
    return LUFactor(A).solve(b)


def solve_transpose(A, b):
    """Solve ``A^T x = b`` using the factorization of ``A`` itself."""
    A = as_sparse(A)
    _check_square(A, b)
    return LUFactor(A).solve_transpose(b)


def matvec(A, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (A.shape[1],):
        raise DimensionMismatch(f"vector has shape {x.shape}, expected ({A.shape[1]},)")
    return np.asarray(A @ x).ravel()


def matvec_transpose(A, x):
    # A.T of a CSR matrix is a CSC view over the same arrays; no copy is made.
    x = np.asarray(x, dtype=float)
    if x.shape != (A.shape[0],):
        raise DimensionMismatch(f"vector has shape {x.shape}, expected ({A.shape[0]},)")
    return np.asarray(sp.csr_matrix(A).T @ x).ravel()


class QuadratureRule:
    """Gauss-Legendre points and weights on [-1, 1]."""

    def __init__(self, points, weights):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)

    def __len__(self):
        return len(self.points)

    def integrate(self, func, a=-1.0, b=1.0):
        half = 0.5 * (b - a)
        x = 0.5 * (a + b) + half * self.points
        return half * float(np.dot(self.weights, func(x)))


@lru_cache(maxsize=None)
def _gauss_table(n):
    return np.polynomial.legendre.leggauss(n)


def gauss_rule(n_points: int) -> QuadratureRule:
    """n-point Gauss-Legendre rule; exact for polynomials of degree 2n-1."""
    if not isinstance(n_points, (int, np.integer)) or not 1 <= n_points <= MAX_GAUSS_POINTS:
        raise UnsupportedOrder(f"gauss_rule supports 1..{MAX_GAUSS_POINTS} points, got {n_points!r}")
    x, w = _gauss_table(int(n_points))
    return QuadratureRule(x.copy(), w.copy())
