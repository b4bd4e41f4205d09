"""Dense order-4 tensor algebra.

Tensors are plain ``numpy.ndarray`` objects of shape ``(W, H, C, T)`` and
dtype float64. Modes are numbered 1..4 as in the usual tensor notation, so
``mode_n_product(t, m, 2)`` acts on axis 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORDER = 4


def as_tensor4(t, name="tensor") -> np.ndarray:
    """Validate and return ``t`` as a float64 order-4 array."""
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim != ORDER:
        raise ValueError(f"{name} must be order 4, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"{name} has an empty mode: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _check_mode(mode: int, ndim: int = ORDER) -> int:
    if not isinstance(mode, (int, np.integer)) or not 1 <= mode <= ndim:
        raise ValueError(f"mode must be in 1..{ndim}, got {mode!r}")
    return int(mode) - 1


def outer_product(v1, v2, v3, v4) -> np.ndarray:
    vs = [np.asarray(v, dtype=np.float64).ravel() for v in (v1, v2, v3, v4)]
    for j, v in enumerate(vs, 1):
        if v.size == 0:
            raise ValueError(f"factor vector {j} is empty")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"factor vector {j} is not finite")
    return np.einsum("i,j,k,l->ijkl", *vs)


def frobenius_norm(t) -> float:
    t = np.asarray(t, dtype=np.float64)
    return float(np.sqrt(np.sum(t * t)))


def mode_n_product(t, m, mode: int) -> np.ndarray:
    """n-mode product ``t x_n m`` for a matrix ``m`` of shape (K, I_n).

    Works for tensors of any order; the mode-n extent becomes K.
    """
    t = np.asarray(t, dtype=np.float64)
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    axis = _check_mode(mode, t.ndim)
    if m.ndim != 2 or m.shape[1] != t.shape[axis]:
        raise ValueError(
            f"matrix of shape {m.shape} does not match mode-{mode} extent {t.shape[axis]}"
        )
    out = np.tensordot(m, t, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def multi_mode_product(t, matrices, modes) -> np.ndarray:
    out = t
    for m, n in zip(matrices, modes):
        out = mode_n_product(out, m, n)
    return out


def unfold(t, mode: int) -> np.ndarray:
    """Mode-n matricization of shape ``(I_n, prod of the other extents)``.

    Columns run over the remaining modes in ascending order with the earliest
    one varying fastest.
    """
    t = np.asarray(t, dtype=np.float64)
    axis = _check_mode(mode, t.ndim)
    return np.reshape(np.moveaxis(t, axis, 0), (t.shape[axis], -1), order="F")


def refold(mat, mode: int, shape) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    axis = _check_mode(mode, len(shape))
    moved = (shape[axis],) + shape[:axis] + shape[axis + 1:]
    mat = np.asarray(mat, dtype=np.float64)
    if mat.size != int(np.prod(shape)) or mat.shape[0] != shape[axis]:
        raise ValueError(f"matrix of shape {mat.shape} cannot refold to {shape}")
    return np.moveaxis(np.reshape(mat, moved, order="F"), 0, axis)


def _fix_signs(u: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made nonnegative
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def mode_spectrum(t, mode: int) -> tuple[np.ndarray, np.ndarray]:
    """Left singular vectors and singular values of the mode-n unfolding."""
    u, s, _ = np.linalg.svd(unfold(t, mode), full_matrices=False)
    return _fix_signs(u), s


@dataclass(frozen=True)
class FactorMatrixSet:
    """Tucker form: ``core x_1 U1 x_2 U2 x_3 U3 x_4 U4``."""

    factors: tuple
    core: np.ndarray
    spectra: tuple = ()

    @property
    def ranks(self) -> tuple:
        return tuple(u.shape[1] for u in self.factors)

    def reconstruct(self) -> np.ndarray:
        return multi_mode_product(self.core, self.factors, range(1, ORDER + 1))


def hosvd(t, ranks=None) -> FactorMatrixSet:
    t = as_tensor4(t)
    if ranks is None:
        ranks = t.shape
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != ORDER:
        raise ValueError(f"need one rank per mode, got {ranks}")
    factors, spectra = [], []
    for n, (r, extent) in enumerate(zip(ranks, t.shape), 1):
        if not 1 <= r <= extent:
            raise ValueError(f"rank {r} for mode {n} outside 1..{extent}")
        u, s = mode_spectrum(t, n)
        # thin SVD gives min(I_n, rest) columns; pad with an orthonormal
        # complement when a full square basis is requested
        if u.shape[1] < r:
            q, _ = np.linalg.qr(np.hstack([u, np.eye(extent)]))
            extra = q[:, u.shape[1]:r]
            u = np.hstack([u, _fix_signs(extra)])
        factors.append(u[:, :r])
        spectra.append(s)
    core = multi_mode_product(t, [u.T for u in factors], range(1, ORDER + 1))
    return FactorMatrixSet(tuple(factors), core, tuple(spectra))


def multilinear_rank(t, tol: float = 1e-8) -> tuple:
    if not 0 < tol < 1:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    t = as_tensor4(t)
    ranks = []
    for n in range(1, ORDER + 1):
        s = np.linalg.svd(unfold(t, n), compute_uv=False)
        if s.size == 0 or s[0] == 0.0:
            ranks.append(0)
        else:
            ranks.append(int(np.sum(s > tol * s[0])))
    return tuple(ranks)
