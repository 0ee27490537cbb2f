"""Measurement-space filter banks.

A bank is a list of linear operators ``H_s`` acting on mode 0.  Segmentation
banks are stored as index sets and applied as masks, which keeps the
partition-of-identity sum bit-exact.  Pyramid banks are built from the
5-tap binomial kernel and stored densely, but serialize as parameters.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .tensor import as_tensor, mode_product

KINDS = ("segmentation", "pyramid-level", "general")
_BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass
class SegmentFilterBank:
    """The operators ``{H_s}``.

    For ``kind == "segmentation"`` only ``regions`` is populated; otherwise
    ``operators`` holds one ``I_0 x I_0`` matrix per filter.
    """

    dim: int
    kind: str
    regions: Optional[list] = None
    operators: Optional[list] = None
    params: dict = field(default_factory=dict)
    partition_flag: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown bank kind {self.kind!r}")

    def __len__(self) -> int:
        return len(self.regions) if self.kind == "segmentation" else len(self.operators)

    @property
    def is_disjoint(self) -> bool:
        if self.kind != "segmentation":
            return False
        seen = np.zeros(self.dim, dtype=int)
        for r in self.regions:
            seen[r] += 1
        return bool(np.all(seen <= 1))

    def matrix(self, s: int) -> np.ndarray:
        """Dense ``H_s``."""
        if self.kind == "segmentation":
            h = np.zeros((self.dim, self.dim))
            h[self.regions[s], self.regions[s]] = 1.0
            return h
        return self.operators[s]

    def apply(self, s: int, x) -> np.ndarray:
        """``H_s`` applied along axis 0 of ``x`` (a vector or a tensor)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.dim:
            raise ValueError(f"mode-0 extent {x.shape[0]} does not match bank dimension {self.dim}")
        if self.kind == "segmentation":
            out = np.zeros_like(x)
            out[self.regions[s]] = x[self.regions[s]]
            return out
        if x.ndim == 1:
            return self.operators[s] @ x
        return mode_product(x, 0, self.operators[s])

    def support(self, s: int) -> np.ndarray:
        """Indexes where ``H_s`` has a nonzero row."""
        if self.kind == "segmentation":
            return np.asarray(self.regions[s])
        return np.flatnonzero(np.any(self.operators[s] != 0, axis=1))

    def to_dict(self) -> dict:
        if self.kind == "segmentation":
            return {"kind": self.kind, "dim": self.dim,
                    "regions": [[int(i) for i in r] for r in self.regions]}
        if self.kind == "pyramid-level" and self.params:
            return {"kind": self.kind, "dim": self.dim, **self.params}
        raise ValueError("general banks have no compact serialization; store the operators")


def bank_from_dict(spec: dict, operators: Optional[Sequence] = None) -> SegmentFilterBank:
    kind = spec["kind"]
    if kind == "segmentation":
        return make_segmentation_bank(spec["dim"], spec["regions"])
    if kind == "pyramid-level":
        return make_pyramid_bank(spec["width"], spec["height"], spec["levels"], spec["mode"],
                                 dim=spec.get("dim"))
    if operators is None:
        raise ValueError("general bank needs its operators")
    return make_general_bank(operators)


def make_segmentation_bank(dims_0: int, regions) -> SegmentFilterBank:
    """Diagonal 0/1 selectors, one per index set."""
    dims_0 = int(dims_0)
    if dims_0 < 1:
        raise ValueError("dims_0 must be positive")
    if len(regions) == 0:
        raise ValueError("at least one region is required")
    clean = []
    for k, r in enumerate(regions):
        idx = np.unique(np.asarray(r, dtype=np.int64))
        if idx.size == 0:
            raise ValueError(f"region {k} is empty")
        if idx[0] < 0 or idx[-1] >= dims_0:
            raise ValueError(f"region {k} has indexes outside [0, {dims_0})")
        clean.append(idx)
    counts = np.zeros(dims_0, dtype=int)
    for idx in clean:
        counts[idx] += 1
    return SegmentFilterBank(dim=dims_0, kind="segmentation", regions=clean,
                             partition_flag=bool(np.all(counts == 1)))


def identity_bank(dims_0: int) -> SegmentFilterBank:
    return make_segmentation_bank(dims_0, [np.arange(dims_0)])


def grid_bank(width: int, height: int, rows: int, cols: int) -> SegmentFilterBank:
    """Partition a row-major ``height x width`` image into a ``rows x cols`` grid."""
    if not (1 <= rows <= height and 1 <= cols <= width):
        raise ValueError(f"grid {rows}x{cols} does not fit a {height}x{width} image")
    ys = np.array_split(np.arange(height), rows)
    xs = np.array_split(np.arange(width), cols)
    regions = [(y[:, None] * width + x[None, :]).ravel() for y in ys for x in xs]
    return make_segmentation_bank(width * height, regions)


def make_general_bank(operators) -> SegmentFilterBank:
    ops = [np.asarray(h, dtype=np.float64) for h in operators]
    if not ops:
        raise ValueError("at least one operator is required")
    n = ops[0].shape[0]
    for h in ops:
        if h.shape != (n, n):
            raise ValueError("operators must all be square with the same size")
    total = np.sum(ops, axis=0)
    return SegmentFilterBank(dim=n, kind="general", operators=ops,
                             partition_flag=bool(np.array_equal(total, np.eye(n))))


def _reduce_matrix(n: int) -> np.ndarray:
    """Blur with the binomial kernel (reflected edges) and keep even samples."""
    m = (n + 1) // 2
    r = np.zeros((m, n))
    for i in range(m):
        for k, w in zip(range(-2, 3), _BINOMIAL):
            j = 2 * i + k
            if j < 0:
                j = -j
            if j >= n:
                j = 2 * (n - 1) - j
            r[i, min(max(j, 0), n - 1)] += w
    return r / r.sum(axis=1, keepdims=True)


def _expand_matrix(n: int) -> np.ndarray:
    e = _reduce_matrix(n).T
    return e / e.sum(axis=1, keepdims=True)


def _gaussian_operators(width: int, height: int, levels: int) -> list:
    ops = [np.eye(width * height)]
    down = np.eye(width * height)
    up = np.eye(width * height)
    w, h = width, height
    for _ in range(1, levels):
        if w == 1 and h == 1:
            raise ValueError(f"{levels} levels is too many for a {height}x{width} image")
        rx, ry = _reduce_matrix(w), _reduce_matrix(h)
        ex, ey = _expand_matrix(w), _expand_matrix(h)
        down = np.kron(ry, rx) @ down
        up = up @ np.kron(ey, ex)
        w, h = rx.shape[0], ry.shape[0]
        ops.append(up @ down)
    return ops


def make_pyramid_bank(width: int, height: int, levels: int, mode: str = "laplacian",
                      dim: Optional[int] = None) -> SegmentFilterBank:
    """Gaussian or Laplacian pyramid levels as measurement-space operators.

    Level ``k`` of the Gaussian bank is ``expand^k(reduce^k(x))``, so every
    filter maps an image to an image of the same size.  The Laplacian bank
    holds the differences of adjacent Gaussian levels followed by the last
    Gaussian level, so the filters sum to the identity.
    """
    width, height, levels = int(width), int(height), int(levels)
    if width < 1 or height < 1:
        raise ValueError("width and height must be positive")
    if dim is not None and width * height != dim:
        raise ValueError(f"{width}x{height} image does not factor a measurement size of {dim}")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if mode not in ("gaussian", "laplacian"):
        raise ValueError(f"unknown pyramid mode {mode!r}")
    gauss = _gaussian_operators(width, height, levels)
    if mode == "gaussian":
        ops = gauss
    else:
        ops = [gauss[k] - gauss[k + 1] for k in range(levels - 1)] + [gauss[-1]]
    total = np.sum(ops, axis=0)
    n = width * height
    return SegmentFilterBank(
        dim=n, kind="pyramid-level", operators=ops,
        params={"width": width, "height": height, "levels": levels, "mode": mode},
        partition_flag=bool(np.array_equal(total, np.eye(n))),
    )


def segment_tensor(d, bank: SegmentFilterBank, s: int) -> np.ndarray:
    """``D_s = D x_0 H_s``."""
    d = as_tensor(d)
    if not 0 <= s < len(bank):
        raise ValueError(f"segment {s} out of range for a bank of {len(bank)}")
    return bank.apply(s, d)
