"""Compositional hierarchical tensor factorization.

The data are modeled as a sum of per-segment Tucker models,

    D ~ sum_s Z_s x_0 U_{0,s} x_1 U_{1,s} ... x_C U_{C,s},

which is the block-diagonal hierarchical model written segment by segment.
The block-diagonal core and the composite mode matrices
``U_cx = [U_{c,1} ... U_{c,S}]`` are never formed as giant block matrices;
everything below loops over segments.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import subspace_angles

from .decomposition import LossTrace, canonicalize, m_mode_svd, sign_fix
from .filters import SegmentFilterBank
from .tensor import as_tensor, frobenius_norm, matrixize, mode_product, multi_mode_product, unmatrixize

log = logging.getLogger(__name__)

EPS = np.finfo(np.float64).eps
DENSE_CORE_LIMIT = 3000
DECOUPLE_TOL = 1e-10


@dataclass
class Segment:
    """One block of the hierarchical model."""

    core: np.ndarray
    factors: list

    @property
    def ranks(self) -> tuple:
        return tuple(u.shape[1] for u in self.factors)

    @property
    def active(self) -> bool:
        return all(r > 0 for r in self.ranks)

    def reconstruct(self) -> np.ndarray:
        return multi_mode_product(self.core, self.factors)

    def extended_core(self) -> np.ndarray:
        return mode_product(self.core, 0, self.factors[0])


@dataclass
class HierarchicalModel:
    segments: list
    bank: Optional[SegmentFilterBank]
    dims: tuple
    mean: Optional[np.ndarray] = None
    trace: Optional[LossTrace] = None
    info: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def ranks(self) -> list:
        return [seg.ranks for seg in self.segments]

    def active_segments(self) -> list:
        return [s for s, seg in enumerate(self.segments) if seg.active]

    def composite(self, c: int) -> np.ndarray:
        """``U_cx``: the mode-c matrices of the active segments side by side."""
        blocks = [self.segments[s].factors[c] for s in self.active_segments()]
        if not blocks:
            return np.zeros((self.dims[c], 0))
        return np.hstack(blocks)

    def offsets(self, c: int) -> list:
        """Column offsets of each active segment inside ``composite(c)``."""
        out, k = [], 0
        for s in self.active_segments():
            out.append(k)
            k += self.segments[s].ranks[c]
        out.append(k)
        return out

    def with_composite(self, c: int, u_cx) -> "HierarchicalModel":
        """Copy of the model whose active mode-c blocks are cut from ``u_cx``.

        The blocks need not be orthonormal; used for loss and gradient checks.
        """
        u_cx = np.asarray(u_cx, dtype=np.float64)
        new = copy.deepcopy(self)
        off = self.offsets(c)
        for k, s in enumerate(self.active_segments()):
            new.segments[s].factors[c] = u_cx[:, off[k]:off[k + 1]].copy()
        return new

    def extended_cores(self) -> list:
        return [seg.extended_core() if seg.active else None for seg in self.segments]


# ---------------------------------------------------------------------------
# evaluation


def _center(d: np.ndarray, center: bool):
    if not center:
        return d, None
    mean = matrixize(d, 0).mean(axis=1)
    return d - mean.reshape((-1,) + (1,) * (d.ndim - 1)), mean


def _sum_segments(segments, dims) -> np.ndarray:
    out = np.zeros(dims)
    for seg in segments:
        if seg.active:
            out += seg.reconstruct()
    return out


def chtf_reconstruct(model: HierarchicalModel) -> np.ndarray:
    """``sum_s Z_s x_0 U_{0,s} ... x_C U_{C,s}`` plus the stored mean."""
    out = _sum_segments(model.segments, model.dims)
    if model.mean is not None:
        out = out + model.mean.reshape((-1,) + (1,) * (out.ndim - 1))
    return out


def chtf_loss(d, model: HierarchicalModel) -> float:
    """One half of the squared Frobenius residual."""
    d = as_tensor(d)
    return 0.5 * frobenius_norm(d - chtf_reconstruct(model)) ** 2


def constraint_violation(model: HierarchicalModel) -> float:
    """Largest ``||U^T U - I||_max`` over all active segment mode matrices."""
    worst = 0.0
    for seg in model.segments:
        if not seg.active:
            continue
        for u in seg.factors:
            g = u.T @ u - np.eye(u.shape[1])
            worst = max(worst, float(np.max(np.abs(g))))
    return worst


def _w_transpose(model: HierarchicalModel, c: int) -> np.ndarray:
    """``W_c^T``: per active segment ``(Z_s x_{n != c} U_{n,s})_[c]`` stacked."""
    rows = []
    for s in model.active_segments():
        seg = model.segments[s]
        others = [None if n == c else u for n, u in enumerate(seg.factors)]
        rows.append(matrixize(multi_mode_product(seg.core, others), c))
    return np.vstack(rows)


def mode_gradient(d, model: HierarchicalModel, c: int) -> np.ndarray:
    """Gradient of the loss with respect to ``U_cx``: ``-D_[c] W_c + U_cx W_c^T W_c``."""
    d = as_tensor(d)
    if model.mean is not None:
        d = d - model.mean.reshape((-1,) + (1,) * (d.ndim - 1))
    wt = _w_transpose(model, c)
    dc = matrixize(d, c)
    return -dc @ wt.T + model.composite(c) @ (wt @ wt.T)


def principal_angles(a, b) -> np.ndarray:
    """Principal angles (radians) between the column spans of ``a`` and ``b``."""
    return subspace_angles(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


# ---------------------------------------------------------------------------
# initialization and truncation


def _empty_segment(dims) -> Segment:
    return Segment(core=np.zeros((0,) * len(dims)), factors=[np.zeros((n, 0)) for n in dims])


def _trimmed_svd_segment(ds: np.ndarray) -> Segment:
    """Full M-mode SVD of a segment with numerically zero directions dropped."""
    tm = m_mode_svd(ds)
    keep = []
    for m, sv in enumerate(tm.mode_singular_values):
        cutoff = max(matrixize(ds, m).shape) * EPS * (sv[0] if sv.size else 0.0)
        keep.append(int(np.sum(sv > cutoff)))
    core = tm.core[tuple(slice(0, r) for r in keep)]
    return Segment(core=core, factors=[u[:, :r] for u, r in zip(tm.factors, keep)])


def chtf_init(d, bank: SegmentFilterBank, center: bool = False) -> HierarchicalModel:
    """Per-segment M-mode SVD of ``D_s = D x_0 H_s``.

    Directions with numerically zero singular values are dropped, so each
    segment starts at its numerical multilinear rank.  An all-zero segment
    gets rank 0 and stays in the model as an inert placeholder.
    """
    d = as_tensor(d)
    if bank.dim != d.shape[0]:
        raise ValueError(f"bank dimension {bank.dim} does not match mode-0 extent {d.shape[0]}")
    d, mean = _center(d, center)
    segments, zero = [], []
    for s in range(len(bank)):
        ds = bank.apply(s, d)
        if frobenius_norm(ds) == 0.0:
            segments.append(_empty_segment(d.shape))
            zero.append(s)
            continue
        segments.append(_trimmed_svd_segment(ds))
    if zero:
        log.info("segments %s are all zero and get rank 0", zero)
    return HierarchicalModel(segments=segments, bank=bank, dims=d.shape, mean=mean,
                             info={"zero_segments": zero})


def _normalize_total_ranks(total_ranks, order: int) -> list:
    ranks = list(total_ranks)
    if len(ranks) == order - 1:
        ranks = [None] + ranks
    if len(ranks) != order:
        raise ValueError(f"expected {order} (or {order - 1} causal) ranks, got {len(ranks)}")
    return ranks


def chtf_truncate(model: HierarchicalModel, total_ranks) -> HierarchicalModel:
    """Keep the ``J_c`` largest mode-c singular values across all segments.

    Per-segment core slab norms are merged and sorted in descending order;
    ties go to the lower segment index, then the lower column index.  The
    columns and core slabs that fall below the cut are deleted from their
    owning segment.  A rank of ``None`` leaves the mode untouched; by
    default the measurement mode is not reduced (pass a causal-only list).
    """
    ranks = _normalize_total_ranks(total_ranks, model.order)
    new = copy.deepcopy(model)
    for c, target in enumerate(ranks):
        if target is None:
            continue
        entries = []
        for s in new.active_segments():
            sv = np.linalg.norm(matrixize(new.segments[s].core, c), axis=1)
            entries.extend((-float(v), s, j) for j, v in enumerate(sv))
        target = int(target)
        if not 1 <= target <= len(entries):
            raise ValueError(f"rank {target} for mode {c} outside [1, {len(entries)}]")
        kept = sorted(entries)[:target]
        per_segment = {s: 0 for s in new.active_segments()}
        for _, s, _ in kept:
            per_segment[s] += 1
        for s, r in per_segment.items():
            seg = new.segments[s]
            idx = [slice(None)] * model.order
            idx[c] = slice(0, r)
            seg.core = seg.core[tuple(idx)]
            seg.factors[c] = seg.factors[c][:, :r]
    # a segment that lost every column in some mode becomes the inert placeholder
    new.segments = [seg if seg.active else _empty_segment(new.dims) for seg in new.segments]
    return new


# ---------------------------------------------------------------------------
# core solve


def _gram_blocks(segs: Sequence[Segment]):
    """Per-pair, per-mode ``U_{c,s}^T U_{c,t}``."""
    n = len(segs)
    return [[[a.T @ b for a, b in zip(segs[s].factors, segs[t].factors)] for t in range(n)]
            for s in range(n)]


def _decoupled(grams) -> bool:
    n = len(grams)
    for s in range(n):
        for t in range(s + 1, n):
            if not any(np.max(np.abs(g), initial=0.0) <= DECOUPLE_TOL for g in grams[s][t]):
                return False
    return True


def _kron_desc(mats) -> np.ndarray:
    out = np.ones((1, 1))
    for m in mats:  # ascending mode order; each new mode goes on the left
        out = np.kron(m, out)
    return out


def _solve_cores(d: np.ndarray, segs: list, max_cg: int = 500) -> list:
    """Least-squares cores for fixed mode matrices.

    Only the segment cores (the nonzero blocks of the block-diagonal core)
    are unknowns.  Uses a direct projection when the segments are mutually
    orthogonal in some mode, a dense Gram solve for small problems, and
    warm-started CGLS otherwise.
    """
    grams = _gram_blocks(segs)
    projections = [multi_mode_product(d, seg.factors, transpose=True) for seg in segs]
    if _decoupled(grams):
        return projections
    sizes = [seg.core.size for seg in segs]
    total = sum(sizes)
    if total <= DENSE_CORE_LIMIT:
        g = np.block([[_kron_desc(grams[s][t]) for t in range(len(segs))] for s in range(len(segs))])
        b = np.concatenate([p.ravel(order="F") for p in projections])
        z0 = np.concatenate([seg.core.ravel(order="F") for seg in segs])
        # correct the warm start so a flat direction is never moved along
        dz = np.linalg.lstsq(g, b - g @ z0, rcond=None)[0]
        z = z0 + dz
        out, k = [], 0
        for seg, n in zip(segs, sizes):
            out.append(np.reshape(z[k:k + n], seg.core.shape, order="F"))
            k += n
        return out
    return _cgls_cores(d, segs, projections, max_cg)


def _cgls_cores(d, segs, projections, max_iter) -> list:
    def forward(cores):
        out = np.zeros(d.shape)
        for z, seg in zip(cores, segs):
            out += multi_mode_product(z, seg.factors)
        return out

    def adjoint(r):
        return [multi_mode_product(r, seg.factors, transpose=True) for seg in segs]

    def dot(a, b):
        return sum(float(np.vdot(x, y)) for x, y in zip(a, b))

    x = [seg.core.copy() for seg in segs]
    r = d - forward(x)
    s = adjoint(r)
    p = [v.copy() for v in s]
    gamma = dot(s, s)
    tol = (EPS * 10) ** 2 * max(dot(projections, projections), 1e-300)
    for _ in range(max_iter):
        if gamma <= tol:
            break
        q = forward(p)
        qq = float(np.vdot(q, q))
        if qq == 0.0:
            break
        alpha = gamma / qq
        x = [a + alpha * b for a, b in zip(x, p)]
        r = r - alpha * q
        s = adjoint(r)
        gamma_new = dot(s, s)
        p = [a + (gamma_new / gamma) * b for a, b in zip(s, p)]
        gamma = gamma_new
    return x


# ---------------------------------------------------------------------------
# alternating least squares


def _update_mode(d: np.ndarray, model: HierarchicalModel, c: int) -> None:
    """Least-squares update of ``U_cx`` then per-segment re-orthonormalization."""
    active = model.active_segments()
    wt = _w_transpose(model, c)
    u_old = model.composite(c)
    resid = matrixize(d, c) - u_old @ wt
    # minimum-norm correction of the current iterate; cutoff eps * max(shape) * sigma_max
    step = np.linalg.lstsq(wt.T, resid.T, rcond=None)[0].T
    u_new = u_old + step
    off = model.offsets(c)
    for k, s in enumerate(active):
        seg = model.segments[s]
        block = u_new[:, off[k]:off[k + 1]]
        p, sigma, qt = np.linalg.svd(block, full_matrices=False)
        p, signs = sign_fix(p)
        seg.factors[c] = p
        seg.core = mode_product(seg.core, c, (signs[:, None] * sigma[:, None]) * qt)


def _objective(d, segments) -> float:
    return 0.5 * frobenius_norm(d - _sum_segments(segments, d.shape)) ** 2


def chtf_als(d, bank: SegmentFilterBank, total_ranks=None, max_iters: int = 50,
             tol: Optional[float] = None, center: bool = False):
    """Fit the hierarchical model by block alternating least squares.

    Starts from :func:`chtf_init` (truncated by :func:`chtf_truncate` when
    ``total_ranks`` is given).  Each sweep cycles through the modes: the
    composite mode matrix is solved by least squares against the block
    matricized model, each segment block is replaced by its left singular
    vectors (the rest of the factor is folded into the core so the fit is
    unchanged), and after the last mode the segment cores are re-solved.
    At least one sweep runs; iteration stops once the loss decrease is at
    most ``tol`` (default ``1e-6 * ||D||^2``) or after ``max_iters`` sweeps.

    Returns ``(model, trace)``; the trace holds ``0.5 * ||D - D_hat||^2`` for
    the initialization and after every sweep.
    """
    d = as_tensor(d)
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    model = chtf_init(d, bank, center=center)
    if total_ranks is not None:
        model = chtf_truncate(model, total_ranks)
    dc, _ = _center(d, center)
    if tol is None:
        tol = 1e-6 * frobenius_norm(dc) ** 2
    if not tol > 0:
        raise ValueError("tol must be positive")

    trace = LossTrace(values=[_objective(dc, model.segments)])
    if not model.active_segments():
        trace.converged = True
        model.trace = trace
        return model, trace

    for it in range(1, max_iters + 1):
        for c in range(d.ndim):
            _update_mode(dc, model, c)
        active = [model.segments[s] for s in model.active_segments()]
        before = _objective(dc, model.segments)
        cores = _solve_cores(dc, active)
        old = [seg.core for seg in active]
        for seg, z in zip(active, cores):
            seg.core = z
        loss = _objective(dc, model.segments)
        if loss > before:
            # an inexact core solve must never undo progress
            for seg, z in zip(active, old):
                seg.core = z
            loss = before
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at sweep {it}")
        trace.values.append(loss)
        trace.iterations = it
        if trace.values[-2] - loss <= tol:
            trace.converged = True
            break

    for seg in model.segments:
        if seg.active:
            seg.core, seg.factors = canonicalize(seg.core, seg.factors)
    model.trace = trace
    model.info["constraint_violation"] = constraint_violation(model)
    return model, trace


# ---------------------------------------------------------------------------
# special cases


def chtf_independent(d, bank: SegmentFilterBank, center: bool = False) -> HierarchicalModel:
    """Independent parts: per-segment M-mode SVDs side by side."""
    if not bank.is_disjoint:
        raise ValueError("independent-parts factorization needs a disjoint segmentation bank")
    return chtf_init(d, bank, center=center)


def chtf_overlapping(d, bank: SegmentFilterBank, shared_ranks, mode_matrices=None,
                     center: bool = False) -> HierarchicalModel:
    """Completely overlapping parts sharing one causal rank tuple.

    The causal mode matrices of segment ``s`` come from the truncated
    M-mode SVD of ``D_s`` (or from ``mode_matrices[s]``).  The extended
    cores are then solved jointly,

        [T_1[0] ... T_S[0]] = D_[0] pinv(M),
        M = [(U_{C,1} (x) ... (x) U_{1,1})^T ; ... ; (U_{C,S} (x) ... (x) U_{1,S})^T],

    and each ``T_s[0]`` is split by SVD into ``U_{0,s}`` and ``Z_s``.
    """
    d = as_tensor(d)
    if bank.dim != d.shape[0]:
        raise ValueError(f"bank dimension {bank.dim} does not match mode-0 extent {d.shape[0]}")
    ranks = list(shared_ranks)
    if len(ranks) == d.ndim:
        ranks = ranks[1:]
    if len(ranks) != d.ndim - 1:
        raise ValueError(f"expected {d.ndim - 1} causal ranks, got {len(shared_ranks)}")
    for s in range(len(bank)):
        if bank.support(s).size != bank.dim:
            raise ValueError(f"filter {s} does not have full support")
    d, mean = _center(d, center)

    causal = []
    for s in range(len(bank)):
        if mode_matrices is not None:
            mats = [np.asarray(u, dtype=np.float64) for u in mode_matrices[s]]
        else:
            ds = bank.apply(s, d)
            mats = []
            for c, r in enumerate(ranks, start=1):
                u, _, _ = np.linalg.svd(matrixize(ds, c), full_matrices=False)
                if r > u.shape[1]:
                    raise ValueError(f"rank {r} for mode {c} exceeds {u.shape[1]}")
                mats.append(sign_fix(u[:, :r])[0])
        if [u.shape[1] for u in mats] != [int(r) for r in ranks]:
            raise ValueError("mode matrices do not match the shared ranks")
        causal.append(mats)

    m = np.vstack([_kron_desc(mats).T for mats in causal])
    rank = np.linalg.matrix_rank(m)
    deficient = rank < m.shape[0]
    if deficient:
        log.warning("stacked system is rank deficient (%d < %d)", rank, m.shape[0])
    t = np.linalg.lstsq(m.T, matrixize(d, 0).T, rcond=None)[0].T
    block = int(np.prod(ranks))
    segments = []
    for s, mats in enumerate(causal):
        ts = t[:, s * block:(s + 1) * block]
        p, sigma, qt = np.linalg.svd(ts, full_matrices=False)
        keep = int(np.sum(sigma > max(ts.shape) * EPS * (sigma[0] if sigma.size else 0.0)))
        if keep == 0:
            segments.append(_empty_segment(d.shape))
            continue
        p, signs = sign_fix(p[:, :keep])
        z0 = (signs[:, None] * sigma[:keep, None]) * qt[:keep]
        core = unmatrixize(z0, 0, (keep,) + tuple(int(r) for r in ranks))
        segments.append(Segment(core=core, factors=[p] + mats))
    return HierarchicalModel(segments=segments, bank=bank, dims=d.shape, mean=mean,
                             info={"rank_deficient": bool(deficient)})
