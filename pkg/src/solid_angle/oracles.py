"""Independent reference values: closed forms in dimensions 2 and 3, and Monte Carlo.

The Monte Carlo estimator samples standard Gaussian points, whose directions
are uniform on the sphere, and counts how many fall in the cone.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cones import Cone, SimplicialCone, contains_points, make_simplicial
from .errors import NotOrthogonal, WrongDimension
from .linalg import orthonormal_basis


@dataclass(frozen=True)
class McConfig:
    samples: int = 1_000_000
    seed: int = 0
    batch: int = 1 << 16

    def __post_init__(self):
        if int(self.samples) < 1:
            raise ValueError("samples must be >= 1")
        if int(self.batch) < 1:
            raise ValueError("batch must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def _as_simplicial(K) -> SimplicialCone:
    return K if isinstance(K, SimplicialCone) else make_simplicial(K)


def measure_dim2(K) -> float:
    """arccos(v1 . v2) / (2 pi) for a planar angle."""
    K = _as_simplicial(K)
    if K.n != 2:
        raise WrongDimension(f"measure_dim2 needs n = 2, got {K.n}")
    c = float(np.clip(K.gram[0, 1], -1.0, 1.0))
    return math.acos(c) / (2.0 * math.pi)


def measure_dim3(K) -> float:
    """Spherical triangle area over 4 pi, via the atan2 form of the Euler-Lagrange formula."""
    K = _as_simplicial(K)
    if K.n != 3:
        raise WrongDimension(f"measure_dim3 needs n = 3, got {K.n}")
    v1, v2, v3 = K.V.T
    num = abs(float(np.dot(v1, np.cross(v2, v3))))
    den = 1.0 + float(v2 @ v3 + v2 @ v1 + v1 @ v3)
    return 2.0 * math.atan2(num, den) / (4.0 * math.pi)


def _generator(seed: int, stream: int) -> np.random.Generator:
    # Philox is counter based: the 128-bit key (seed, stream) selects an
    # independent stream per batch, so the schedule never changes the draws.
    return np.random.Generator(np.random.Philox(key=int(seed) + (int(stream) << 64)))


def _codes(C, X: np.ndarray) -> np.ndarray:
    if isinstance(C, Cone) and not C.is_full_dimensional:
        # almost every point is off the span; only test the ones close to it
        B = orthonormal_basis(C.nonzero_generators)
        U = X / np.linalg.norm(X, axis=1, keepdims=True)
        resid = np.linalg.norm(U - (U @ B) @ B.T, axis=1)
        out = np.full(len(X), -1, dtype=np.int8)
        near = resid <= 1e-9
        if np.any(near):
            out[near] = contains_points(C, X[near])
        return out
    return contains_points(C, X)


def _batch_hits(C, n: int, seed: int, index: int, size: int) -> int:
    X = _generator(seed, index).standard_normal((size, n))
    codes = _codes(C, X)
    # count in half units so boundary points contribute exactly 1/2
    return 2 * int(np.count_nonzero(codes == 1)) + int(np.count_nonzero(codes == 0))


def mc_estimate(C, cfg: McConfig = McConfig(), jobs: int = 1) -> tuple:
    """Hit fraction of Gaussian samples and its binomial standard error.

    Batches use disjoint counter-based streams and the hit counts are summed as
    integers, so the estimate does not depend on ``jobs``.
    """
    if isinstance(C, SimplicialCone):
        n = C.n
    else:
        if not isinstance(C, Cone):
            C = Cone(C)
        n = C.ambient_dim
    samples, batch = int(cfg.samples), int(cfg.batch)
    sizes = [min(batch, samples - start) for start in range(0, samples, batch)]
    args = [(C, n, cfg.seed, i, s) for i, s in enumerate(sizes)]
    if jobs > 1 and len(args) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            halves = sum(pool.map(lambda a: _batch_hits(*a), args))
    else:
        halves = sum(_batch_hits(*a) for a in args)
    p = halves / (2.0 * samples)
    return p, math.sqrt(p * (1.0 - p) / samples)


def _unit_rows(C) -> np.ndarray:
    if isinstance(C, SimplicialCone):
        return C.generators
    if not isinstance(C, Cone):
        C = Cone(C)
    G = C.nonzero_generators
    return G / np.linalg.norm(G, axis=1, keepdims=True)


def check_orthogonal(cones: Sequence, tol: float = 1e-9) -> None:
    rows = [_unit_rows(C) for C in cones]
    for a in range(len(rows)):
        for b in range(a + 1, len(rows)):
            cross = rows[a] @ rows[b].T
            if cross.size and np.max(np.abs(cross)) > tol:
                raise NotOrthogonal(
                    f"parts {a} and {b} are not orthogonal (max |v.w| = {np.max(np.abs(cross)):.3g})")


def orthogonal_product_measure(parts: Sequence[tuple], tol: float = 1e-9) -> float:
    """Measure of an orthogonal sum of cones: the product of the parts' measures.

    ``parts`` is a list of (cone, measure) pairs, each measure taken relative to
    the part's own span.
    """
    check_orthogonal([C for C, _ in parts], tol)
    out = 1.0
    for _, m in parts:
        out *= float(m)
    return out
