"""Training, multilinear projection, part signatures and verification."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .decomposition import Rank1Factors, TuckerModel, m_mode_svd, rank_one_approx, truncate
from .filters import SegmentFilterBank, identity_bank
from .hierarchy import HierarchicalModel, chtf_als
from .tensor import as_tensor, matrixize

EPS = np.finfo(np.float64).eps
ZERO_RESPONSE_TOL = 1e-10
PERSON_MODE = 1
FIT_POWER = 4.0


@dataclass
class LabeledEnsemble:
    """Vectorized observations ``I_0 x I_1 x ... x I_C`` with per-mode labels."""

    tensor: np.ndarray
    labels: list

    def __post_init__(self):
        self.tensor = as_tensor(self.tensor)
        if self.tensor.ndim < 2:
            raise ValueError("an ensemble needs a measurement mode and at least one causal mode")
        if len(self.labels) != self.tensor.ndim - 1:
            raise ValueError(f"expected {self.tensor.ndim - 1} label lists, got {len(self.labels)}")
        for c, lab in enumerate(self.labels, start=1):
            if len(lab) != self.tensor.shape[c]:
                raise ValueError(f"mode {c} has {self.tensor.shape[c]} entries but {len(lab)} labels")
        if not np.all(np.isfinite(self.tensor)):
            raise ValueError("ensemble has missing (non-finite) cells")

    @property
    def measurements(self) -> int:
        return self.tensor.shape[0]


# ---------------------------------------------------------------------------
# projection


class Projector:
    """Multilinear projection against a fixed extended core ``T``.

    ``pinv(T_[0])`` is computed once.
    """

    def __init__(self, extended_core):
        t = as_tensor(extended_core)
        if t.ndim < 2:
            raise ValueError("extended core needs at least one causal mode")
        self.shape = t.shape
        self.pinv = np.linalg.pinv(matrixize(t, 0))
        self.gain = float(np.linalg.norm(self.pinv, 2)) if self.pinv.size else 0.0

    def response(self, d_new) -> np.ndarray:
        d_new = np.asarray(d_new, dtype=np.float64).ravel()
        if d_new.size != self.shape[0]:
            raise ValueError(f"observation has {d_new.size} entries, expected {self.shape[0]}")
        return np.reshape(self.pinv @ d_new, self.shape[1:], order="F")

    def project(self, d_new) -> Rank1Factors:
        d_new = np.asarray(d_new, dtype=np.float64).ravel()
        r = self.response(d_new)
        norm = float(np.linalg.norm(r))
        if norm <= ZERO_RESPONSE_TOL * self.gain * float(np.linalg.norm(d_new)) or norm == 0.0:
            r = np.zeros_like(r)
        if r.ndim == 1:
            # a single causal mode: the response is already the coefficient vector
            if norm == 0.0 or not np.any(r):
                return Rank1Factors(vectors=[np.eye(r.size)[:, 0]], scale=0.0, zero=True)
            return Rank1Factors(vectors=[r / np.linalg.norm(r)], scale=float(np.linalg.norm(r)))
        return rank_one_approx(r)


def multilinear_project(extended_core, d_new) -> Rank1Factors:
    """Causal-factor vectors of one observation.

    Forms the response tensor ``R = pinv(T_[0]) d_new`` reshaped to the
    causal ranks and returns its best rank-1 approximation.  ``zero`` is set
    when the observation has no component in the span of ``T_[0]``;
    ``converged`` is False when the rank-1 iteration hit its limit.
    """
    proj = extended_core if isinstance(extended_core, Projector) else Projector(extended_core)
    return proj.project(d_new)


# ---------------------------------------------------------------------------
# training


def _numerical_ranks(model: TuckerModel, data) -> list:
    ranks = []
    for m, sv in enumerate(model.mode_singular_values):
        cutoff = max(matrixize(data, m).shape) * EPS * (sv[0] if sv.size else 0.0)
        ranks.append(max(1, int(np.sum(sv > cutoff))))
    return ranks


def train_global(ensemble: LabeledEnsemble, ranks=None, center: bool = False) -> TuckerModel:
    """Global M-mode SVD of the ensemble.

    ``ranks`` defaults to the numerical multilinear rank, so training images
    are reproduced exactly.  Use :meth:`TuckerModel.extended_core` for the
    projection basis.
    """
    full = m_mode_svd(ensemble.tensor, center=center)
    data = ensemble.tensor
    if full.mean is not None:
        data = data - full.mean.reshape((-1,) + (1,) * (data.ndim - 1))
    target = _numerical_ranks(full, data) if ranks is None else list(ranks)
    if len(target) == data.ndim - 1:
        target = [None] + target
    return truncate(full, target)


def person_variance_weights(ensemble: LabeledEnsemble, bank: SegmentFilterBank,
                            center: bool = False) -> np.ndarray:
    """Between-person energy share of every segment.

    For each person the mean image over all other causal modes is taken;
    the segment weight is the energy of ``H_s`` applied to the deviations
    of these means from their average, normalized to sum to 1.
    """
    d = ensemble.tensor
    if center:
        d = d - matrixize(d, 0).mean(axis=1).reshape((-1,) + (1,) * (d.ndim - 1))
    axes = tuple(a for a in range(1, d.ndim) if a != PERSON_MODE)
    means = d.mean(axis=axes) if axes else d
    dev = means - means.mean(axis=1, keepdims=True)
    energy = np.array([np.linalg.norm(bank.apply(s, dev)) ** 2 for s in range(len(bank))])
    total = energy.sum()
    if total == 0.0:
        return np.full(len(bank), 1.0 / len(bank))
    return energy / total


def train_compositional(ensemble: LabeledEnsemble, bank: SegmentFilterBank, ranks=None,
                        max_iters: int = 50, tol: Optional[float] = None,
                        center: bool = False) -> HierarchicalModel:
    """Hierarchical factorization of the ensemble plus segment weights.

    The weights are stored in ``model.info["weights"]``.
    """
    model, _ = chtf_als(ensemble.tensor, bank, total_ranks=ranks, max_iters=max_iters,
                        tol=tol, center=center)
    model.info["weights"] = person_variance_weights(ensemble, bank, center=center).tolist()
    return model


# ---------------------------------------------------------------------------
# signatures


@dataclass
class Signature:
    """Per-segment person vectors and their weights.

    ``person[s]`` is ``None`` for a segment whose projection failed; its
    weight is 0 and the remaining weights are renormalized.
    """

    person: list
    weights: np.ndarray
    factors: list = field(default_factory=list)
    fit: Optional[np.ndarray] = None

    @property
    def offsets(self) -> list:
        out, k = [0], 0
        for v in self.person:
            k += 0 if v is None else v.size
            out.append(k)
        return out

    @property
    def composite(self) -> np.ndarray:
        """Concatenation of ``sqrt(w_s) * r_{P,s}`` over valid segments."""
        parts = [np.sqrt(w) * v for v, w in zip(self.person, self.weights) if v is not None]
        return np.concatenate(parts) if parts else np.zeros(0)


class SignatureError(RuntimeError):
    """No segment produced a usable projection."""


def _model_projectors(model: HierarchicalModel) -> list:
    cache = model.info.get("_projectors")
    if cache is None:
        cache = [Projector(t) if t is not None else None for t in model.extended_cores()]
        model.info["_projectors"] = cache
    return cache


def signature(model: HierarchicalModel, d_new) -> Signature:
    """Project every filtered part of an observation on its own extended core."""
    d_new = np.asarray(d_new, dtype=np.float64).ravel()
    if d_new.size != model.dims[0]:
        raise ValueError(f"observation has {d_new.size} entries, expected {model.dims[0]}")
    x = d_new if model.mean is None else d_new - model.mean
    bank = model.bank if model.bank is not None else identity_bank(model.dims[0])
    base = np.asarray(model.info.get("weights", np.full(len(model.segments), 1.0 / len(model.segments))))
    weights = base.astype(np.float64).copy()
    person, factors = [], []
    for s, proj in enumerate(_model_projectors(model)):
        if proj is None:
            person.append(None)
            factors.append(None)
            weights[s] = 0.0
            continue
        f = proj.project(bank.apply(s, x))
        factors.append(f)
        if f.zero or not f.converged:
            person.append(None)
            weights[s] = 0.0
        else:
            person.append(f.vectors[PERSON_MODE - 1])
    total = weights.sum()
    if total <= 0.0:
        raise SignatureError("every segment failed to project")
    fit = np.array([rank_one_fit(f) if f is not None else 0.0 for f in factors])
    return Signature(person=person, weights=weights / total, factors=factors, fit=fit)


def global_signature(projector: Projector, d_new, mean=None) -> Signature:
    """Single-segment signature against a global extended core."""
    d_new = np.asarray(d_new, dtype=np.float64).ravel()
    x = d_new if mean is None else d_new - mean
    f = projector.project(x)
    if f.zero:
        raise SignatureError("observation has no component in the model span")
    return Signature(person=[f.vectors[PERSON_MODE - 1]], weights=np.ones(1), factors=[f],
                     fit=np.array([rank_one_fit(f)]))


def rank_one_fit(f: Rank1Factors) -> float:
    """Share of the response energy captured by the rank-1 term, in [0, 1]."""
    if f.zero:
        return 0.0
    resid = f.residuals[-1] if f.residuals else 0.0
    total = f.scale ** 2 + resid
    return float(f.scale ** 2 / total) if total > 0 else 0.0


# ---------------------------------------------------------------------------
# verification


def similarity(a, b) -> float:
    """Weighted sign-folded cosine for signatures, plain cosine for vectors.

    For signatures, segments that failed in either observation are dropped
    and the product of the two weight vectors is renormalized.
    """
    if isinstance(a, Signature) and isinstance(b, Signature):
        if all(v is None for v in a.person) or all(v is None for v in b.person):
            return 0.0
        if len(a.person) != len(b.person):
            raise ValueError("signatures have different segment counts")
        fa = a.fit if a.fit is not None else np.ones(len(a.person))
        fb = b.fit if b.fit is not None else np.ones(len(b.person))
        w = np.array([wa * wb * (qa * qb) ** FIT_POWER if va is not None and vb is not None else 0.0
                      for va, vb, wa, wb, qa, qb in zip(a.person, b.person, a.weights, b.weights, fa, fb)])
        if w.sum() == 0.0:
            return 0.0
        w = w / w.sum()
        score = 0.0
        for va, vb, ws in zip(a.person, b.person, w):
            if ws > 0.0:
                score += ws * abs(_cosine(va, vb))
        return float(score)
    return _cosine(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


@dataclass
class VerificationResult:
    scores: np.ndarray
    labels: np.ndarray
    threshold: float
    decisions: np.ndarray
    accuracy: float
    calibration_accuracy: float
    roc: np.ndarray  # rows of (threshold, fpr, tpr)
    auc: float


def roc_curve(scores, labels) -> np.ndarray:
    """ROC points for every distinct score used as a threshold.

    A pair is accepted when ``score >= threshold``.  The first row uses
    ``+inf`` (nothing accepted).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    pos, neg = max(int(labels.sum()), 1), max(int((~labels).sum()), 1)
    thresholds = np.concatenate([[np.inf], np.unique(scores)[::-1]])
    rows = []
    for t in thresholds:
        acc = scores >= t
        rows.append((t, np.sum(acc & ~labels) / neg, np.sum(acc & labels) / pos))
    return np.array(rows)


def _auc(roc: np.ndarray) -> float:
    fpr, tpr = roc[:, 1], roc[:, 2]
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def best_threshold(scores, labels) -> tuple:
    """Threshold with the highest accuracy; midpoints between sorted scores."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    u = np.unique(scores)
    candidates = np.concatenate([[u[0] - 1.0], (u[1:] + u[:-1]) / 2.0, [u[-1] + 1.0]])
    best_t, best_acc = candidates[0], -1.0
    for t in candidates:
        acc = float(np.mean((scores >= t) == labels))
        if acc > best_acc:
            best_t, best_acc = t, acc
    return float(best_t), best_acc


def verify_pairs(signatures_a: Sequence, signatures_b: Sequence, labels: Sequence,
                 threshold: Optional[float] = None) -> VerificationResult:
    """Score pairs, pick a threshold and report accuracy and ROC.

    Without an explicit ``threshold`` the even-indexed pairs form the
    calibration split used to choose it and accuracy is measured on the
    odd-indexed pairs.  With a threshold, accuracy covers all pairs.
    """
    if not (len(signatures_a) == len(signatures_b) == len(labels)):
        raise ValueError("pair lists must have equal lengths")
    if len(labels) == 0:
        raise ValueError("no pairs to verify")
    scores = np.array([similarity(a, b) for a, b in zip(signatures_a, signatures_b)])
    labels = np.asarray(labels, dtype=bool)
    if threshold is None:
        cal = np.arange(len(labels)) % 2 == 0
        evaluation = ~cal if np.any(~cal) else cal
        threshold, cal_acc = best_threshold(scores[cal], labels[cal])
    else:
        evaluation = np.ones(len(labels), dtype=bool)
        cal_acc = float("nan")
    decisions = scores >= threshold
    accuracy = float(np.mean(decisions[evaluation] == labels[evaluation]))
    roc = roc_curve(scores, labels)
    return VerificationResult(scores=scores, labels=labels, threshold=float(threshold),
                              decisions=decisions, accuracy=accuracy,
                              calibration_accuracy=cal_acc, roc=roc, auc=_auc(roc))
