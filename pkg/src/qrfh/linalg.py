"""Low-rank factorization primitives for complex IQ matrices.

The central routine is :func:`pivoted_qr_approx`, a column-pivoted truncated
QR: it keeps the ``l`` strongest antenna columns as an orthonormal basis and
expresses every column of the input in that basis.  :func:`truncated_svd`
provides the optimal-rank-l yardstick the QR approximation is measured
against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import mgs_orthonormalize
from .errors import ConvergenceError, InvalidInputError, RankDeficiencyError

__all__ = [
    "QrFactors",
    "SvdFactors",
    "column_norms",
    "pivoted_qr_approx",
    "qr_reconstruct",
    "truncated_svd",
    "svd_reconstruct",
    "frobenius_error",
]

#: residual-norm floor, relative to the largest column norm, below which a
#: pivot column is declared numerically dependent on the basis built so far
RANK_TOL = 1e-14


def _as_iq_matrix(a, name: str = "a") -> np.ndarray:
    """Validate and return ``a`` as a 2-D finite complex128 array."""
    a = np.asarray(a)
    if a.ndim != 2 or a.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 2-D matrix, got shape {a.shape}")
    a = a.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(a.view(np.float64))):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class QrFactors:
    """Truncated pivoted-QR factorization of an ``m x n`` matrix.

    Attributes
    ----------
    q : ndarray, shape (m, l)
        Orthonormal basis spanning the ``l`` selected pivot columns.
    r : ndarray, shape (l, n)
        Basis coefficients for *all* permuted columns: ``r = q^H a[:, perm]``.
    perm : ndarray, shape (n,)
        Column permutation; the first ``l`` entries are the pivot (basis)
        columns in selection order, the remainder follow in original order.
    """

    q: np.ndarray
    r: np.ndarray
    perm: np.ndarray = field(repr=False)

    @property
    def l_u(self) -> int:
        return self.q.shape[1]


@dataclass(frozen=True)
class SvdFactors:
    """Rank-``k`` truncated SVD ``a ~ u @ diag(s) @ v^H``."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def column_norms(a) -> np.ndarray:
    """Euclidean norm of every column of ``a``.

    Parameters
    ----------
    a : array_like, shape (m, n)
        Complex matrix; must be finite.

    Returns
    -------
    ndarray, shape (n,)
        Non-negative column norms.
    """
    a = _as_iq_matrix(a)
    return np.linalg.norm(a, axis=0)


def _residual_pivot_order(a: np.ndarray, l: int) -> np.ndarray:
    """Greedy residual-norm pivot order (classical rank-revealing rule)."""
    m, n = a.shape
    work = a.copy()
    res2 = np.einsum("ij,ij->j", work.conj(), work).real
    selected = np.empty(l, dtype=np.int64)
    chosen = np.zeros(n, dtype=bool)
    for i in range(l):
        masked = np.where(chosen, -np.inf, res2)
        j = int(np.argmax(masked))  # argmax takes the lowest index on ties
        selected[i] = j
        chosen[j] = True
        nrm = np.linalg.norm(work[:, j])
        if nrm > 0:
            qcol = work[:, j] / nrm
            coef = qcol.conj() @ work
            work -= np.outer(qcol, coef)
            res2 = np.einsum("ij,ij->j", work.conj(), work).real
    rest = np.sort(np.where(~chosen)[0])
    return np.concatenate([selected, rest])


def pivoted_qr_approx(a, l: int, pivot: str = "original",
                      perm=None) -> QrFactors:
    """Rank-``l`` column-pivoted QR approximation.

    The ``l`` columns with the largest Euclidean norms (of the *input*
    matrix, sorted once; ties resolved toward the lower index) are
    orthonormalized into a basis ``q``; every column is then described by its
    basis coefficients so that ``a[:, perm] ~ q @ r``.

    Parameters
    ----------
    a : array_like, shape (m, n)
        Complex matrix to approximate.
    l : int
        Basis size, ``1 <= l <= min(m, n)``.
    pivot : {"original", "residual"}
        Pivot rule.  ``"original"`` (default) sorts once on input column
        norms; ``"residual"`` re-pivots greedily on residual norms after each
        orthogonalization step (kept as an internal experiment option --
        payloads produced from it are not comparable across rules).
    perm : array_like, optional
        Explicit column permutation overriding the pivot rule; must be a
        permutation of ``0..n-1`` whose first ``l`` entries select the basis.

    Returns
    -------
    QrFactors

    Raises
    ------
    InvalidInputError
        Non-finite input, bad shape, or ``l`` out of range.
    RankDeficiencyError
        A selected pivot column has residual norm below ``1e-14`` times the
        largest column norm, i.e. ``l`` exceeds the numerical rank.
    """
    a = _as_iq_matrix(a)
    m, n = a.shape
    if not isinstance(l, (int, np.integer)) or not 1 <= l <= min(m, n):
        raise InvalidInputError(f"basis size l={l} outside 1..min(m, n)={min(m, n)}")
    norms = np.linalg.norm(a, axis=0)
    max_norm = float(norms.max())
    if max_norm == 0.0:
        raise RankDeficiencyError("step 0: all columns are zero, no pivot available")

    if perm is not None:
        perm = np.asarray(perm, dtype=np.int64)
        if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
            raise InvalidInputError("perm must be a permutation of 0..n-1")
    elif pivot == "original":
        order = np.argsort(-norms, kind="stable")
        perm = np.concatenate([order[:l], np.sort(order[l:])])
    elif pivot == "residual":
        perm = _residual_pivot_order(a, l)
    else:
        raise InvalidInputError(f"unknown pivot rule {pivot!r}")

    a_perm = a[:, perm]
    q, fail_step = mgs_orthonormalize(np.ascontiguousarray(a_perm), l,
                                      RANK_TOL * max_norm)
    if fail_step >= 0:
        raise RankDeficiencyError(
            f"orthogonalization step {fail_step} (source column "
            f"{int(perm[fail_step])}): residual norm below {RANK_TOL:g} of the "
            f"largest column norm; l={l} exceeds the numerical rank")
    r = q.conj().T @ a_perm
    return QrFactors(q=q, r=r, perm=perm)


def qr_reconstruct(factors: QrFactors) -> np.ndarray:
    """Rebuild the approximated matrix in original column order.

    Returns ``y`` with ``y[:, perm] = q @ r``, undoing the pivot permutation.
    """
    q, r, perm = factors.q, factors.r, factors.perm
    if q.ndim != 2 or r.ndim != 2 or q.shape[1] != r.shape[0]:
        raise InvalidInputError(
            f"inconsistent factor shapes q{q.shape} r{r.shape}")
    n = r.shape[1]
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise InvalidInputError("perm must be a permutation matching r's width")
    out = np.empty((q.shape[0], n), dtype=np.complex128)
    out[:, perm] = q @ r
    return out


def truncated_svd(a, k: int) -> SvdFactors:
    """Rank-``k`` truncated singular value decomposition.

    Parameters
    ----------
    a : array_like, shape (m, n)
    k : int
        Number of leading singular triplets to keep, ``1 <= k <= min(m, n)``.

    Returns
    -------
    SvdFactors
        ``u`` (m, k), singular values ``s`` (k,) in non-increasing order and
        ``v`` (n, k); ``a ~ u @ diag(s) @ v^H`` is the best rank-``k``
        approximation in the Frobenius norm.

    Raises
    ------
    ConvergenceError
        The underlying iteration failed to converge.
    """
    a = _as_iq_matrix(a)
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= min(a.shape):
        raise InvalidInputError(f"rank k={k} outside 1..min(m, n)={min(a.shape)}")
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        # LAPACK drives the iteration internally and does not report the
        # residual of the unconverged superdiagonal, so none is quoted here.
        raise ConvergenceError(f"SVD iteration did not converge: {exc}") from exc
    return SvdFactors(u=u[:, :k], s=s[:k], v=vh[:k].conj().T)


def svd_reconstruct(factors: SvdFactors) -> np.ndarray:
    """Rebuild ``u @ diag(s) @ v^H`` from truncated SVD factors."""
    return (factors.u * factors.s) @ factors.v.conj().T


def frobenius_error(a, b) -> float:
    """Relative Frobenius distance ``||a - b||_F / ||a||_F``.

    Falls back to the absolute distance when ``a`` is the zero matrix.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch {a.shape} vs {b.shape}")
    denom = np.linalg.norm(a)
    num = np.linalg.norm(a - b)
    return float(num / denom) if denom > 0 else float(num)
