"""Global factorizations: M-mode SVD (Tucker), truncation, ALS refinement,
rank-1 approximation and a PCA baseline."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .tensor import as_tensor, frobenius_norm, matrixize, mode_product, multi_mode_product

SIGN_TOL = 1e-12
SIGN_CONVENTION_VERSION = 1


@dataclass
class LossTrace:
    """Per-iteration loss values ``e_n = 0.5 * ||D - D_approx||^2``.

    ``values[0]`` is the loss of the initialization.
    """

    values: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    def is_nonincreasing(self, slack: float = 1e-9) -> bool:
        v = np.asarray(self.values)
        return bool(np.all(np.diff(v) <= slack))

    @property
    def final(self) -> float:
        return float(self.values[-1])


@dataclass
class TuckerModel:
    """Core tensor plus one column-orthonormal matrix per mode.

    ``reconstruct(model) = core x_0 U_0 x_1 U_1 ... (+ mean on mode 0)``.
    """

    core: np.ndarray
    factors: list
    mean: Optional[np.ndarray] = None
    trace: Optional[LossTrace] = None

    @property
    def order(self) -> int:
        return self.core.ndim

    @property
    def ranks(self) -> tuple:
        return tuple(u.shape[1] for u in self.factors)

    @property
    def dims(self) -> tuple:
        return tuple(u.shape[0] for u in self.factors)

    @property
    def mode_singular_values(self) -> list:
        """Per mode, the norms of the core slabs ``||Z_{i_m = a}||``."""
        return [np.linalg.norm(matrixize(self.core, m), axis=1) for m in range(self.order)]

    def extended_core(self) -> np.ndarray:
        """``T = Z x_0 U_0``: the basis tensor used for multilinear projection."""
        return mode_product(self.core, 0, self.factors[0])


# ---------------------------------------------------------------------------
# helpers


def sign_fix(u: np.ndarray, tol: float = SIGN_TOL):
    """Flip columns so the first entry with ``|x| > tol`` is nonnegative.

    Returns the adjusted matrix and the +/-1 flips applied.
    """
    u = np.array(u, dtype=np.float64)
    signs = np.ones(u.shape[1])
    for j in range(u.shape[1]):
        nz = np.flatnonzero(np.abs(u[:, j]) > tol)
        if nz.size and u[nz[0], j] < 0:
            signs[j] = -1.0
    return u * signs, signs


def leading_left_singular_vectors(x, rank: Optional[int] = None, method: str = "auto"):
    """Left singular vectors and singular values of ``x``, largest first.

    ``method="qr"`` orthogonalizes the rows first (``x^T = QR``) and takes the
    SVD of the small triangular factor; ``"auto"`` picks it when ``x`` is much
    wider than tall.
    """
    x = np.asarray(x, dtype=np.float64)
    rows, cols = x.shape
    if method == "auto":
        method = "qr" if cols > 4 * rows else "svd"
    if method == "svd":
        u, s, _ = np.linalg.svd(x, full_matrices=False)
    elif method == "qr":
        _, r = np.linalg.qr(x.T)
        u, s, _ = np.linalg.svd(r.T, full_matrices=False)
    else:
        raise ValueError(f"unknown method {method!r}")
    if rank is not None:
        u, s = u[:, :rank], s[:rank]
    return u, s


def _center(d: np.ndarray):
    mean = matrixize(d, 0).mean(axis=1)
    shape = (d.shape[0],) + (1,) * (d.ndim - 1)
    return d - mean.reshape(shape), mean


def _add_mean(x: np.ndarray, mean: Optional[np.ndarray]) -> np.ndarray:
    if mean is None:
        return x
    return x + mean.reshape((x.shape[0],) + (1,) * (x.ndim - 1))


def _normalize_ranks(ranks, order: int, current: Sequence[int]) -> list:
    if ranks is None:
        return list(current)
    ranks = list(ranks)
    if len(ranks) != order:
        raise ValueError(f"expected {order} ranks, got {len(ranks)}")
    out = []
    for m, (r, full) in enumerate(zip(ranks, current)):
        if r is None:
            out.append(full)
            continue
        r = int(r)
        if not 1 <= r <= full:
            raise ValueError(f"rank {r} for mode {m} outside [1, {full}]")
        out.append(r)
    return out


def canonicalize(core: np.ndarray, factors: Sequence[np.ndarray]):
    """Rotate a Tucker model so its core is all-orthogonal and ordered.

    Computes the M-mode SVD of the core and folds the rotations into the
    factors.  The reconstruction and every factor's column span are
    unchanged.
    """
    core = as_tensor(core)
    rotations = []
    for m in range(core.ndim):
        v, _, _ = np.linalg.svd(matrixize(core, m), full_matrices=True)
        rotations.append(v)
    new_core = multi_mode_product(core, rotations, transpose=True)
    new_factors = []
    for m, (u, v) in enumerate(zip(factors, rotations)):
        uv, signs = sign_fix(u @ v)
        new_factors.append(uv)
        new_core = mode_product(new_core, m, np.diag(signs))
    return new_core, new_factors


# ---------------------------------------------------------------------------
# M-mode SVD and friends


def m_mode_svd(d, center: bool = False, method: str = "auto") -> TuckerModel:
    """Full-rank M-mode SVD.

    Each mode matrix is the left orthonormal matrix of the SVD of the
    mode-m matrixized data; the core is ``D x_0 U_0^T x_1 U_1^T ...``.
    """
    d = as_tensor(d)
    mean = None
    if center:
        d, mean = _center(d)
    factors = []
    for m in range(d.ndim):
        try:
            u, _ = leading_left_singular_vectors(matrixize(d, m), method=method)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"SVD failed on mode {m}: {exc}") from exc
        factors.append(sign_fix(u)[0])
    core = multi_mode_product(d, factors, transpose=True)
    return TuckerModel(core=core, factors=factors, mean=mean)


def reconstruct(model: TuckerModel) -> np.ndarray:
    return _add_mean(multi_mode_product(model.core, model.factors), model.mean)


def truncate(model: TuckerModel, ranks) -> TuckerModel:
    """Keep the leading ``ranks[m]`` columns of every mode matrix.

    The matching core sub-block is kept and the result is re-canonicalized
    (a rotation inside each kept span) so the core stays all-orthogonal and
    ordered.  ``None`` keeps a mode untouched.
    """
    ranks = _normalize_ranks(ranks, model.order, model.ranks)
    core = model.core[tuple(slice(0, r) for r in ranks)]
    factors = [u[:, :r] for u, r in zip(model.factors, ranks)]
    core, factors = canonicalize(core, factors)
    return TuckerModel(core=core, factors=factors,
                       mean=None if model.mean is None else model.mean.copy())


def tucker_als(d, ranks, max_iters: int = 50, tol: Optional[float] = None,
               center: bool = False) -> TuckerModel:
    """Best rank-(R_0, ..., R_C) approximation by alternating least squares.

    Starts from the truncated M-mode SVD.  Each sweep sets every mode matrix
    to the leading left singular vectors of the data projected on all other
    modes, then recomputes the core.  Stops when the loss decrease falls to
    ``tol`` (default ``1e-6 * ||D||^2``) or after ``max_iters`` sweeps.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    d = as_tensor(d)
    mean = None
    if center:
        d, mean = _center(d)
    init = m_mode_svd(d)
    ranks = _normalize_ranks(ranks, d.ndim, init.ranks)
    if tol is None:
        tol = 1e-6 * frobenius_norm(d) ** 2
    if tol <= 0:
        raise ValueError("tol must be positive")
    factors = [u[:, :r] for u, r in zip(init.factors, ranks)]

    def loss(core, factors):
        return 0.5 * frobenius_norm(d - multi_mode_product(core, factors)) ** 2

    core = multi_mode_product(d, factors, transpose=True)
    trace = LossTrace(values=[loss(core, factors)])
    for it in range(1, max_iters + 1):
        for m in range(d.ndim):
            others = [None if n == m else u for n, u in enumerate(factors)]
            x = multi_mode_product(d, others, transpose=True)
            u, _ = leading_left_singular_vectors(matrixize(x, m), rank=ranks[m])
            factors[m] = sign_fix(u)[0]
        core = mode_product(x, d.ndim - 1, factors[-1].T)
        trace.values.append(loss(core, factors))
        trace.iterations = it
        if trace.values[-2] - trace.values[-1] <= tol:
            trace.converged = True
            break
    core, factors = canonicalize(core, factors)
    return TuckerModel(core=core, factors=factors, mean=mean, trace=trace)


# ---------------------------------------------------------------------------
# rank-1 approximation


@dataclass
class Rank1Factors:
    """``scale * (v_0 o v_1 o ...)`` with unit-norm vectors."""

    vectors: list
    scale: float
    converged: bool = True
    zero: bool = False
    iterations: int = 0
    residuals: list = field(default_factory=list)

    def full(self) -> np.ndarray:
        from .tensor import outer
        return self.scale * outer(self.vectors)


def _contract_except(t: np.ndarray, vectors: Sequence[np.ndarray], skip: int) -> np.ndarray:
    out = t
    for m in range(t.ndim - 1, -1, -1):
        if m == skip:
            continue
        out = np.tensordot(out, vectors[m], axes=(m, 0))
    return out


def rank_one_approx(t, max_iters: int = 200, tol: float = 1e-13) -> Rank1Factors:
    """Best rank-1 approximation by alternating (higher-order power) updates.

    Every vector is initialized with the leading left singular vector of the
    corresponding matrixization, then updated in turn as the normalized
    contraction of ``t`` with all other vectors.  The scale is made
    nonnegative and vector signs are fixed deterministically.
    """
    t = as_tensor(t)
    if t.ndim < 2:
        raise ValueError("rank_one_approx needs an order >= 2 tensor")
    norm_sq = frobenius_norm(t) ** 2
    if norm_sq == 0.0:
        vectors = [np.eye(n)[:, 0] for n in t.shape]
        return Rank1Factors(vectors=vectors, scale=0.0, converged=True, zero=True,
                            residuals=[0.0])
    vectors = [sign_fix(leading_left_singular_vectors(matrixize(t, m), rank=1)[0])[0][:, 0]
               for m in range(t.ndim)]
    last = t.ndim - 1
    sigma = float(np.dot(_contract_except(t, vectors, last), vectors[last]))
    residuals = [max(norm_sq - sigma**2, 0.0)]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        for m in range(t.ndim):
            g = _contract_except(t, vectors, m)
            gn = np.linalg.norm(g)
            if gn == 0.0:
                break
            vectors[m] = g / gn
        new_sigma = float(np.dot(_contract_except(t, vectors, last), vectors[last]))
        residuals.append(max(norm_sq - new_sigma**2, 0.0))
        done = abs(abs(new_sigma) - abs(sigma)) <= tol * abs(new_sigma)
        sigma = new_sigma
        if done:
            converged = True
            break
    # deterministic signs: fix all but the last vector, then absorb into the last
    for m in range(last):
        v, s = sign_fix(vectors[m][:, None])
        if s[0] < 0:
            vectors[m] = v[:, 0]
            vectors[last] = -vectors[last]
    if sigma < 0:
        sigma = -sigma
        vectors[last] = -vectors[last]
    return Rank1Factors(vectors=vectors, scale=sigma, converged=converged,
                        iterations=it, residuals=residuals)


# ---------------------------------------------------------------------------
# PCA baseline


@dataclass
class PCAModel:
    mean: np.ndarray
    basis: np.ndarray
    singular_values: np.ndarray
    coefficients: np.ndarray

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        centered = x - (self.mean if x.ndim == 1 else self.mean[:, None])
        return self.basis.T @ centered

    def reconstruct(self, coefficients=None) -> np.ndarray:
        c = self.coefficients if coefficients is None else np.asarray(coefficients)
        out = self.basis @ c
        return out + (self.mean if out.ndim == 1 else self.mean[:, None])


def pca_baseline(observations, rank: int) -> PCAModel:
    """Mean-centered truncated SVD of an ``I_0 x N`` observation matrix."""
    x = np.asarray(observations, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("observations must be a matrix")
    if not 1 <= rank <= min(x.shape):
        raise ValueError(f"rank {rank} outside [1, {min(x.shape)}]")
    mean = x.mean(axis=1)
    centered = x - mean[:, None]
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    basis = sign_fix(u[:, :rank])[0]
    return PCAModel(mean=mean, basis=basis, singular_values=s,
                    coefficients=basis.T @ centered)
