"""Dense symmetric kernels: eigendecomposition, PSD square root, regularized inverse."""

import numpy as np

from .exceptions import InvalidInputError, NotPSDError, ShapeError

PSD_RTOL = 1e-8


def _as_symmetric(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ShapeError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix has non-finite entries")
    # WtW products are symmetric only up to rounding
    return (a + a.T) / 2.0


def sym_eigen(a):
    """Eigendecomposition of a symmetric matrix.

    Returns
    -------
    w : ndarray, shape (n,)
        Eigenvalues in ascending order.
    v : ndarray, shape (n, n)
        Orthonormal eigenvectors stored as columns.
    """
    return np.linalg.eigh(_as_symmetric(a))


def psd_sqrt(a):
    """Principal square root of a symmetric positive semidefinite matrix.

    Eigenvalues in ``[-1e-8 * ||a||_F, 0)`` are treated as rounding noise and
    clamped to zero; anything more negative raises :class:`NotPSDError`.
    """
    a = _as_symmetric(a)
    w, v = np.linalg.eigh(a)
    tol = PSD_RTOL * np.linalg.norm(a)
    if w[0] < -tol:
        raise NotPSDError(f"smallest eigenvalue {w[0]:.3e} is below -{tol:.3e}")
    root = np.sqrt(np.clip(w, 0.0, None))
    s = (v * root) @ v.T
    return (s + s.T) / 2.0


def regularized_inverse(a, eps):
    """Return ``(a + eps*I)^-1`` for symmetric PSD ``a`` and ``eps > 0``."""
    if not eps > 0:
        raise InvalidInputError(f"eps must be positive, got {eps!r}")
    a = _as_symmetric(a)
    n = a.shape[0]
    inv = np.linalg.solve(a + eps * np.eye(n), np.eye(n))
    return (inv + inv.T) / 2.0


def normalized_trace(s):
    """Scale a matrix to unit trace."""
    return s / np.trace(s)
