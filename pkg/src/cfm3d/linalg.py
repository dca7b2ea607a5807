"""Householder QR with limited column pivoting for least squares.

Columns are processed in their given order. A column whose norm, after
removing its projection on the columns already accepted, falls below
``tol`` times its original norm is declared aliased and moved to the end,
in the manner of LINPACK's ``dqrdc2``. Earlier (lower-order) columns are
therefore always preferred over later ones.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular


@dataclass
class LimitedPivotQR:
    reflectors: list[np.ndarray]  # Householder vectors, one per accepted column
    r: np.ndarray                 # rank x rank upper-triangular factor of the accepted columns
    kept: list[int]
    aliased: list[int]
    n_rows: int

    @property
    def rank(self) -> int:
        return len(self.kept)

    def qt(self, y: np.ndarray) -> np.ndarray:
        y = np.array(y, dtype=float)
        for k, v in enumerate(self.reflectors):
            y[k:] -= 2.0 * v * (v @ y[k:])
        return y

    def solve(self, y: np.ndarray) -> tuple[np.ndarray, float]:
        """Least-squares coefficients of the kept columns and the residual sum of squares."""
        qty = self.qt(y)
        coef = solve_triangular(self.r, qty[: self.rank])
        rss = float(qty[self.rank:] @ qty[self.rank:])
        return coef, rss

    def unscaled_covariance_diag(self) -> np.ndarray:
        """diag((X^T X)^-1) restricted to the kept columns."""
        rinv = solve_triangular(self.r, np.eye(self.rank))
        return np.sum(rinv**2, axis=1)


def qr_limited_pivoting(x: np.ndarray, tol: float = 1e-7) -> LimitedPivotQR:
    a = np.array(x, dtype=float)
    n, p = a.shape
    norms0 = np.linalg.norm(a, axis=0)
    kept, aliased, reflectors = [], [], []
    k = 0
    for j in range(p):
        if k >= n:
            aliased.append(j)
            continue
        col = a[k:, j]
        r = np.linalg.norm(col)
        if norms0[j] == 0 or r <= tol * norms0[j]:
            aliased.append(j)
            continue
        v = col.copy()
        v[0] += np.copysign(r, col[0]) if col[0] != 0 else r
        v /= np.linalg.norm(v)
        a[k:, j:] -= 2.0 * np.outer(v, v @ a[k:, j:])
        reflectors.append(v)
        kept.append(j)
        k += 1
    r_mat = np.triu(a[: len(kept), kept])
    return LimitedPivotQR(reflectors, r_mat, kept, aliased, n)
