"""Seeded synthetic data: planted Tucker ensembles and a face-like
person x view x illumination generator with occlusion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decomposition import sign_fix
from .tensor import multi_mode_product, outer


def random_orthonormal(rng: np.random.Generator, n: int, r: int) -> np.ndarray:
    if r > n:
        raise ValueError(f"cannot draw {r} orthonormal columns in dimension {n}")
    q, _ = np.linalg.qr(rng.standard_normal((n, r)))
    return sign_fix(q)[0]


def planted_tucker(rng: np.random.Generator, dims, ranks, noise: float = 0.0):
    """``D = Z x_0 U_0 x_1 U_1 ...`` with Gaussian core and orthonormal factors.

    Returns ``(D, core, factors)``.
    """
    dims, ranks = tuple(int(n) for n in dims), tuple(int(r) for r in ranks)
    if len(dims) != len(ranks):
        raise ValueError("dims and ranks differ in length")
    factors = [random_orthonormal(rng, n, r) for n, r in zip(dims, ranks)]
    core = rng.standard_normal(ranks)
    d = multi_mode_product(core, factors)
    if noise > 0:
        d = d + noise * rng.standard_normal(dims)
    return d, core, factors


@dataclass
class FaceModel:
    """Generative model ``d = mean + G x_P p x_V v x_L l`` on a ``height x width`` image.

    ``basis`` has shape ``(I_0, R_P, R_V, R_L)``; the image vector is the
    row-major flattening of the image.
    """

    width: int
    height: int
    basis: np.ndarray
    mean: np.ndarray

    @property
    def ranks(self) -> tuple:
        return self.basis.shape[1:]

    def render(self, p, v, l) -> np.ndarray:
        return self.mean + multi_mode_product(self.basis, [p[None, :], v[None, :], l[None, :]],
                                              modes=[1, 2, 3]).ravel()

    def ensemble(self, people, views, lights) -> np.ndarray:
        """Tensor ``I_0 x P x V x L`` of all renderings."""
        core = multi_mode_product(self.basis, [people, views, lights], modes=[1, 2, 3])
        return core + self.mean.reshape(-1, 1, 1, 1)


def make_face_model(rng: np.random.Generator, width: int = 16, height: int = 16,
                    ranks=(4, 2, 2), mean_level: float = 1.0) -> FaceModel:
    n = width * height
    basis = rng.standard_normal((n,) + tuple(ranks)) / np.sqrt(np.prod(ranks))
    mean = mean_level * (1.0 + 0.5 * rng.random(n)) if mean_level else np.zeros(n)
    return FaceModel(width=width, height=height, basis=basis, mean=mean)


def centered_vectors(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """``count`` random rows with zero column means (needs ``count >= 2``)."""
    x = rng.standard_normal((count, dim))
    if count > 1:
        x -= x.mean(axis=0)
    return x


def occlude(image, width: int, height: int, fraction: float, rng: np.random.Generator,
            value: float = 0.0) -> np.ndarray:
    """Zero a contiguous rectangle covering about ``fraction`` of the image.

    The block is as close to square as the image allows and is placed at a
    uniformly random position.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("occlusion fraction must be in [0, 1]")
    img = np.array(image, dtype=np.float64).reshape(height, width)
    if fraction == 0.0:
        return img.ravel()
    bh = min(height, max(1, int(round(height * np.sqrt(fraction)))))
    bw = min(width, max(1, int(round(fraction * width * height / bh))))
    y = int(rng.integers(0, height - bh + 1))
    x = int(rng.integers(0, width - bw + 1))
    img[y:y + bh, x:x + bw] = value
    return img.ravel()


def rank_one_tensor(rng: np.random.Generator, dims, scale: float = 1.0):
    vecs = [v / np.linalg.norm(v) for v in (rng.standard_normal(n) for n in dims)]
    return scale * outer(vecs), vecs
