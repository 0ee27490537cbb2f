"""Seeded occlusion benchmark: PCA vs global TensorFaces vs compositional.

Every seed draws a face model, trains all methods on a complete
people x views x illuminations ensemble, renders disjoint test people under
new conditions with a random occluding block, and scores the same balanced
list of same/different pairs with every method.
"""
from __future__ import annotations

import hashlib
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .decomposition import pca_baseline
from .filters import grid_bank, make_pyramid_bank
from .recognition import (LabeledEnsemble, Projector, Signature, SignatureError, global_signature,
                          signature, train_compositional, train_global, verify_pairs)
from .synthetic import centered_vectors, make_face_model, occlude
from .tensor import matrixize

log = logging.getLogger(__name__)

METHODS = ("pca", "tensorfaces", "compositional", "gaussian", "laplacian")
DEFAULT_METHODS = ("pca", "tensorfaces", "compositional")


@dataclass
class BenchConfig:
    width: int = 16
    height: int = 16
    ranks: tuple = (4, 2, 2)
    train_people: int = 20
    test_people: int = 20
    train_views: int = 3
    train_lights: int = 3
    images_per_person: int = 5
    grid: tuple = (4, 4)
    pyramid_levels: int = 3
    occlusion: float = 0.25
    noise: float = 0.0
    mean_level: float = 1.0
    spread: float = 1.0
    seed: int = 0
    reps: int = 10
    max_iters: int = 50
    methods: tuple = DEFAULT_METHODS
    threads: int = 1


@dataclass
class MethodResult:
    method: str
    accuracies: list = field(default_factory=list)
    aucs: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))

    @property
    def auc(self) -> float:
        return float(np.mean(self.aucs))


@dataclass
class BenchmarkReport:
    config: BenchConfig
    results: dict
    pair_hashes: list

    @property
    def pair_hash(self) -> str:
        return hashlib.sha256("".join(self.pair_hashes).encode()).hexdigest()[:16]

    def rows(self) -> list:
        return [(m, r.mean, r.std, r.auc, len(r.accuracies), self.pair_hash)
                for m, r in self.results.items()]


@dataclass
class _Trial:
    train: LabeledEnsemble
    images: list
    pairs: list
    same: list
    pair_hash: str


def _pair_hash(pairs, same) -> str:
    text = "".join(f"{a},{b},{int(s)}\n" for (a, b), s in zip(pairs, same))
    return hashlib.sha256(text.encode()).hexdigest()


def make_trial(cfg: BenchConfig, seed: int) -> _Trial:
    rng = np.random.default_rng(seed)
    rp, rv, rl = cfg.ranks
    face = make_face_model(rng, cfg.width, cfg.height, cfg.ranks, cfg.mean_level)
    v0, l0 = rng.standard_normal(rv), rng.standard_normal(rl)

    def view():
        return v0 + cfg.spread * rng.standard_normal(rv)

    def light():
        return l0 + cfg.spread * rng.standard_normal(rl)

    people = centered_vectors(rng, cfg.train_people, rp)
    views = np.array([view() for _ in range(cfg.train_views)])
    lights = np.array([light() for _ in range(cfg.train_lights)])
    train = LabeledEnsemble(face.ensemble(people, views, lights),
                            [list(range(cfg.train_people)), list(range(cfg.train_views)),
                             list(range(cfg.train_lights))])

    test_people = rng.standard_normal((cfg.test_people, rp))
    images, ids = [], []
    for i in range(cfg.test_people):
        for _ in range(cfg.images_per_person):
            x = face.render(test_people[i], view(), light())
            if cfg.noise > 0:
                x = x + cfg.noise * rng.standard_normal(x.size)
            images.append(occlude(x, cfg.width, cfg.height, cfg.occlusion, rng))
            ids.append(i)
    ids = np.array(ids)
    all_pairs = list(itertools.combinations(range(len(ids)), 2))
    same = [p for p in all_pairs if ids[p[0]] == ids[p[1]]]
    diff = [p for p in all_pairs if ids[p[0]] != ids[p[1]]]
    pick = np.sort(rng.choice(len(diff), size=min(len(same), len(diff)), replace=False))
    pairs = same + [diff[k] for k in pick]
    order = rng.permutation(len(pairs))
    pairs = [pairs[k] for k in order]
    labels = [bool(ids[a] == ids[b]) for a, b in pairs]
    return _Trial(train=train, images=images, pairs=pairs, same=labels,
                  pair_hash=_pair_hash(pairs, labels))


def _safe(fn, x):
    try:
        return fn(x)
    except SignatureError:
        return None


def _score_lists(sigs, pairs):
    a = [sigs[i] for i, _ in pairs]
    b = [sigs[j] for _, j in pairs]
    empty = Signature(person=[None], weights=np.ones(1))
    return [s if s is not None else empty for s in a], [s if s is not None else empty for s in b]


def signatures_for(method: str, cfg: BenchConfig, train: LabeledEnsemble, images) -> list:
    if method == "pca":
        rank = min(int(np.prod(cfg.ranks)), min(matrixize(train.tensor, 0).shape))
        pca = pca_baseline(matrixize(train.tensor, 0), rank)
        return [pca.project(x) for x in images]
    if method == "tensorfaces":
        model = train_global(train, center=True)
        proj = Projector(model.extended_core())
        return [_safe(lambda x: global_signature(proj, x, model.mean), x) for x in images]
    if method == "compositional":
        bank = grid_bank(cfg.width, cfg.height, *cfg.grid)
    elif method in ("gaussian", "laplacian"):
        bank = make_pyramid_bank(cfg.width, cfg.height, cfg.pyramid_levels, method)
    else:
        raise ValueError(f"unknown method {method!r}")
    model = train_compositional(train, bank, max_iters=cfg.max_iters, center=True)
    return [_safe(lambda x: signature(model, x), x) for x in images]


def _run_seed(cfg: BenchConfig, seed: int) -> tuple:
    trial = make_trial(cfg, seed)
    out = {}
    for method in cfg.methods:
        t0 = time.perf_counter()
        sigs = signatures_for(method, cfg, trial.train, trial.images)
        if method == "pca":
            a = [sigs[i] for i, _ in trial.pairs]
            b = [sigs[j] for _, j in trial.pairs]
        else:
            a, b = _score_lists(sigs, trial.pairs)
        res = verify_pairs(a, b, trial.same)
        out[method] = (res, time.perf_counter() - t0)
    return trial.pair_hash, out


def run_benchmark(cfg: BenchConfig) -> BenchmarkReport:
    """Run ``cfg.reps`` seeds (``cfg.seed``, ``cfg.seed + 1``, ...)."""
    for m in cfg.methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    seeds = [cfg.seed + k for k in range(cfg.reps)]
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            per_seed = list(pool.map(lambda s: _run_seed(cfg, s), seeds))
    else:
        per_seed = [_run_seed(cfg, s) for s in seeds]
    results = {m: MethodResult(method=m) for m in cfg.methods}
    hashes = []
    for pair_hash, out in per_seed:  # merged in seed order
        hashes.append(pair_hash)
        for m, (res, secs) in out.items():
            r = results[m]
            r.accuracies.append(res.accuracy)
            r.aucs.append(res.auc)
            r.scores.extend(res.scores.tolist())
            r.labels.extend(res.labels.tolist())
            r.seconds += secs
    for m, r in results.items():
        log.info("%s: accuracy %.4f +/- %.4f, %.2f s", m, r.mean, r.std, r.seconds)
    return BenchmarkReport(config=cfg, results=results, pair_hashes=hashes)
