"""End-to-end measure of an arbitrary polyhedral cone.

Pipeline: remove the lineality space, triangulate the pointed part in its own
span, decompose every simplex into signed cones with positive-definite
associated matrices, evaluate each piece and add up with signs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .cones import Cone, SimplicialCone, triangulate
from .decompose import Form, Method, decomp1, decomp2, span_reduction
from .errors import NotPositiveDefinite, WrongDimension
from .linalg import is_tridiagonal
from .oracles import McConfig, mc_estimate, measure_dim2, measure_dim3
from .series import BetaVector, MeasureResult, TruncationSpec, _Chain, t_alpha, t_beta

log = logging.getLogger(__name__)

METHODS = ("decomp1", "decomp2", "decomp2-tridiag", "closed-form", "mc")
DEFAULT_METHOD = "decomp2-tridiag"
# chains predicted to need fewer kernel entries are summed as they are
MIN_FLIP_WORK = 2e4


@dataclass(frozen=True)
class MeasureConfig:
    method: str = DEFAULT_METHOD
    tol: float = 1e-8
    max_terms: int = 50_000_000
    span_relative: bool = False
    samples: int = 1_000_000
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


def _as_cone(C) -> Cone:
    if isinstance(C, SimplicialCone):
        return C.as_cone()
    if isinstance(C, Cone):
        return C
    return Cone(C)


def _tridiag(beta: np.ndarray) -> np.ndarray:
    G = np.eye(len(beta) + 1)
    idx = np.arange(len(beta))
    G[idx, idx + 1] = G[idx + 1, idx] = beta
    return G


def project_vertex(beta: np.ndarray, j: int) -> np.ndarray:
    """Couplings of the chain projected onto the complement of generator j.

    Only the neighbors of j change, and they become neighbors of each other,
    so the normalized Schur complement is again a chain.
    """
    G = _tridiag(beta)
    keep = [k for k in range(len(G)) if k != j]
    S = G[np.ix_(keep, keep)] - np.outer(G[keep, j], G[j, keep])
    d = np.sqrt(np.diag(S))
    return np.diag(S / np.outer(d, d), 1).copy()


def flip_vertex(beta: np.ndarray, j: int) -> np.ndarray:
    """Couplings after negating generator j."""
    b = beta.copy()
    if j > 0:
        b[j - 1] *= -1.0
    if j < len(b):
        b[j] *= -1.0
    return b


def chain_measure(beta, abs_det: Optional[float], tol: float, max_terms: int,
                  depth: int = 0) -> MeasureResult:
    """Measure of a cone with tridiagonal Gram matrix, given its couplings.

    Negating generator j gives a neighbor cone; the two tile the wedge
    spanned by the other generators plus the line through j, whose measure
    is that of the projected chain one dimension down.  So the measure is
    (projected) - (neighbor).  The sign pattern decides how many terms the
    series needs, and a flip is used when the two replacement series are
    predicted to be much cheaper than the original one.
    """
    beta = np.asarray(beta, dtype=float)
    m = len(beta)
    if m >= 2 and depth <= 2 * m:
        work = _Chain(beta).work
        best = None
        if work > MIN_FLIP_WORK:
            for j in range(m + 1):
                alt = _Chain(flip_vertex(beta, j)).work + _Chain(project_vertex(beta, j)).work
                if alt < 0.5 * work and (best is None or alt < best[0]):
                    best = (alt, j)
        if best is not None:
            j = best[1]
            proj = chain_measure(project_vertex(beta, j), None, tol / 2, max_terms, depth + 1)
            other = chain_measure(flip_vertex(beta, j), abs_det, tol / 2,
                                  max(int(max_terms) - proj.terms_used, 1), depth + 1)
            raw = proj.raw_value - other.raw_value
            return MeasureResult.from_raw(
                raw, proj.abs_error_estimate + other.abs_error_estimate, "t_beta",
                terms_used=proj.terms_used + other.terms_used,
                pieces=proj.pieces + other.pieces)
    spec = TruncationSpec(target_tol=tol, max_terms=int(max_terms))
    return t_beta(BetaVector(tuple(beta)), abs_det=abs_det, spec=spec)


def piece_measure(K: SimplicialCone, tol: float, max_terms: int,
                  prefer_chain: bool = True) -> MeasureResult:
    """Series value of one simplicial cone with a positive-definite associated matrix.

    A tridiagonal Gram matrix only has chain couplings, in which case the
    all-pairs series coincides with the chain series and the latter is used.
    """
    if prefer_chain and is_tridiagonal(K.gram, 1e-9):
        return chain_measure(np.diag(K.gram, 1), K.abs_det, tol, max_terms)
    return t_alpha(K, TruncationSpec(target_tol=tol, max_terms=max_terms))


def _closed_form(K: SimplicialCone) -> float:
    if K.n == 1:
        return 0.5
    if K.n == 2:
        return measure_dim2(K)
    if K.n == 3:
        return measure_dim3(K)
    raise WrongDimension(f"no closed form in dimension {K.n}")


def _pieces(S: SimplicialCone, method: str) -> list:
    if method == "decomp1":
        return decomp1(S).pieces
    return decomp2(S, tridiagonal=method == "decomp2-tridiag").pieces


def _pointed_measure(G: np.ndarray, cfg: MeasureConfig) -> MeasureResult:
    """Measure of the full-dimensional pointed cone generated by the rows of G."""
    simplices = triangulate(Cone(G))
    if cfg.method == "closed-form":
        value = sum(_closed_form(S) for S in simplices)
        return MeasureResult.from_raw(value, 0.0, cfg.method, pieces=len(simplices),
                                      details={"simplices": len(simplices)})
    work = [p for S in simplices for p in _pieces(S, cfg.method)]
    tol_piece = cfg.tol / max(len(work), 1)
    value, err, terms = 0.0, 0.0, 0
    for p in work:
        if p.form is Form.PD_FULL:
            r = piece_measure(p.cone, tol_piece, cfg.max_terms)
            raw = r.raw_value if r.raw_value is not None else r.value
        elif p.form is Form.CONTAINS_LINE:
            # a cone with lines has the measure of its pointed part in R^n
            sub = measure(p.cone, MeasureConfig(method=cfg.method, tol=tol_piece,
                                                max_terms=cfg.max_terms))
            r, raw = sub, sub.value
        else:
            raise NotPositiveDefinite("decomposition produced a piece that is not positive definite")
        value += p.sign * raw
        err += r.abs_error_estimate
        terms += r.terms_used
    log.debug("%d simplices, %d pieces, value %.17g", len(simplices), len(work), value)
    return MeasureResult.from_raw(value, err, cfg.method, terms_used=terms, pieces=len(work),
                                  details={"simplices": len(simplices)})


def _mc(C: Cone, cfg: MeasureConfig, span_dim: int) -> MeasureResult:
    mc = McConfig(samples=cfg.samples, seed=cfg.seed)
    if cfg.span_relative and span_dim < C.ambient_dim:
        from .linalg import orthonormal_basis

        B = orthonormal_basis(C.nonzero_generators)
        C = Cone(C.nonzero_generators @ B)
    p, se = mc_estimate(C, mc, jobs=cfg.jobs)
    return MeasureResult.from_raw(p, se, "mc", terms_used=cfg.samples, pieces=0,
                                  details={"std_error": se})


def measure(C, cfg: Union[MeasureConfig, None] = None, **kw) -> MeasureResult:
    """Normalized solid angle of the cone generated by ``C``.

    By default the measure is relative to the ambient space, so cones that are
    not full-dimensional get 0; with ``span_relative`` it is taken relative to
    the linear span of the cone.
    """
    cfg = cfg or MeasureConfig(**kw)
    C = _as_cone(C)
    n = C.ambient_dim
    L, B, G = span_reduction(C)
    span_dim = L.shape[1] + (0 if B is None else B.shape[1])
    details = {"ambient_dim": n, "span_dim": span_dim, "lineality_dim": L.shape[1]}
    if cfg.method == "mc":
        r = _mc(C, cfg, span_dim)
        r.details.update(details)
        return r
    if span_dim < n and not cfg.span_relative:
        return MeasureResult.from_raw(0.0, 0.0, cfg.method, pieces=0, details=details)
    if B is None:
        # a linear subspace fills its own span
        return MeasureResult.from_raw(1.0, 0.0, cfg.method, pieces=0, details=details)
    r = _pointed_measure(G, cfg)
    r.details.update(details)
    return r


def measure_simplicial(K: SimplicialCone, method: str = DEFAULT_METHOD,
                       tol: float = 1e-8, max_terms: int = 50_000_000) -> MeasureResult:
    """Measure of a single full-dimensional simplicial cone."""
    return measure(K.as_cone(), MeasureConfig(method=method, tol=tol, max_terms=max_terms))
