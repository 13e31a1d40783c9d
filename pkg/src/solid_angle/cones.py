"""Cone data model: construction, membership, triangulation, duality, lineality."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from .errors import (
    DimensionMismatch,
    EmptyCone,
    NotFullDim,
    RankDeficient,
    ZeroVector,
)
from .linalg import gram, orthonormal_basis

EPS_RANK = 1e-9
ZERO_NORM = 1e-12
MEMBERSHIP_TOL = 1e-9


class Location(enum.Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"
    BOUNDARY = "boundary"


INSIDE = Location.INSIDE
OUTSIDE = Location.OUTSIDE
BOUNDARY = Location.BOUNDARY


def _as_rows(generators, ambient_dim: Optional[int] = None) -> np.ndarray:
    G = np.array(generators, dtype=float)
    if G.ndim == 1:
        if G.size == 0:
            G = G.reshape(0, ambient_dim or 0)
        else:
            G = G.reshape(1, -1)
    if G.ndim != 2:
        raise DimensionMismatch(f"generators must be a list of vectors, got shape {G.shape}")
    if ambient_dim is not None and G.shape[1] != ambient_dim:
        raise DimensionMismatch(
            f"generators have {G.shape[1]} coordinates, expected {ambient_dim}"
        )
    if not np.all(np.isfinite(G)):
        raise ValueError("generators have non-finite entries")
    return G


@dataclass(frozen=True, eq=False)
class Cone:
    """Cone generated by the rows of ``generators`` (any number, any redundancy)."""

    generators: np.ndarray
    ambient_dim: int

    def __init__(self, generators, ambient_dim: Optional[int] = None):
        G = _as_rows(generators, ambient_dim)
        if G.shape[0] == 0 or not np.any(np.linalg.norm(G, axis=1) >= ZERO_NORM):
            raise EmptyCone("a cone needs at least one nonzero generator")
        G = G.copy()
        G.setflags(write=False)
        object.__setattr__(self, "generators", G)
        object.__setattr__(self, "ambient_dim", G.shape[1])

    def __repr__(self) -> str:
        return f"Cone({self.generators.tolist()!r})"

    @property
    def nonzero_generators(self) -> np.ndarray:
        keep = np.linalg.norm(self.generators, axis=1) >= ZERO_NORM
        return self.generators[keep]

    @cached_property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.nonzero_generators, tol=EPS_RANK))

    @property
    def is_full_dimensional(self) -> bool:
        return self.rank == self.ambient_dim

    @cached_property
    def _facets(self) -> np.ndarray:
        """Inward unit normals of the boundary faces of a full-dimensional cone."""
        return _boundary_normals(self)


@dataclass(frozen=True, eq=False)
class SimplicialCone:
    """Full-dimensional simplicial cone; generators are the unit columns of V."""

    V: np.ndarray
    gram: np.ndarray = field(repr=False)
    abs_det: float

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def generators(self) -> np.ndarray:
        """Generators as rows, matching :class:`Cone`."""
        return self.V.T

    def as_cone(self) -> Cone:
        return Cone(self.V.T)

    def column(self, i: int) -> np.ndarray:
        return self.V[:, i]


def make_simplicial(generators, eps_rank: float = EPS_RANK) -> SimplicialCone:
    """Normalize n generators of R^n and cache the Gram matrix and |det V|.

    ``generators`` is a sequence of n vectors (rows).
    """
    G = _as_rows(generators)
    n = G.shape[1]
    if G.shape[0] != n:
        raise DimensionMismatch(f"need {n} generators in R^{n}, got {G.shape[0]}")
    norms = np.linalg.norm(G, axis=1)
    if np.any(norms < ZERO_NORM):
        raise ZeroVector("generator with norm below 1e-12")
    V = (G / norms[:, None]).T.copy()
    abs_det = abs(float(np.linalg.det(V))) if n else 1.0
    if not abs_det > eps_rank:
        raise RankDeficient(f"|det V| = {abs_det:.3e} is not above {eps_rank:g}")
    Gm = gram(V)
    V.setflags(write=False)
    Gm.setflags(write=False)
    return SimplicialCone(V=V, gram=Gm, abs_det=abs_det)


def associated_matrix(K: SimplicialCone) -> np.ndarray:
    """Unit diagonal, off-diagonal entries -|v_i . v_j|."""
    M = -np.abs(np.asarray(K.gram, dtype=float))
    np.fill_diagonal(M, 1.0)
    return M


def dual(K: SimplicialCone) -> np.ndarray:
    """Dual generators as columns of (V^-1)^T, so that w*_i . w_j = delta_ij.

    Columns are left unnormalized; pass ``.T`` to :func:`make_simplicial` when a
    cone object is needed.
    """
    try:
        W = np.linalg.inv(K.V).T
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("singular generator matrix") from exc
    P = W.T @ K.V
    if not np.allclose(P, np.eye(K.n), atol=1e-9):
        raise RankDeficient("dual basis failed the biorthogonality check")
    return W


# -- membership ---------------------------------------------------------------

def _unit(x: np.ndarray) -> Optional[np.ndarray]:
    nx = np.linalg.norm(x)
    if nx < ZERO_NORM:
        return None
    return x / nx


def _classify(values: np.ndarray, tol: float) -> Location:
    if values.size == 0 or np.all(values > tol):
        return INSIDE
    if np.all(values >= -tol):
        return BOUNDARY
    return OUTSIDE


def contains_point(C, x, tol: float = MEMBERSHIP_TOL) -> Location:
    """Classify x as INSIDE, OUTSIDE or on the BOUNDARY of a cone.

    The point is normalized first, so ``tol`` is a scale-free distance. For a
    simplicial cone the coefficients of x in the generator basis are tested;
    otherwise the inward facet normals of the cone's triangulation are used.
    Every point of a lower-dimensional cone counts as BOUNDARY.
    """
    x = np.asarray(x, dtype=float)
    n = C.n if isinstance(C, SimplicialCone) else C.ambient_dim
    if x.shape != (n,):
        raise DimensionMismatch(f"point has shape {x.shape}, expected ({n},)")
    u = _unit(x)
    if u is None:
        return BOUNDARY
    if isinstance(C, SimplicialCone):
        lam = np.linalg.solve(C.V, u)
        return _classify(lam, tol)
    if C.is_full_dimensional:
        return _classify(C._facets @ u, tol)
    basis = orthonormal_basis(C.nonzero_generators)
    coords = basis.T @ u
    if np.linalg.norm(u - basis @ coords) > tol:
        return OUTSIDE
    inner = Cone(C.nonzero_generators @ basis)
    loc = contains_point(inner, coords, tol)
    return OUTSIDE if loc is OUTSIDE else BOUNDARY


def contains_points(C, X, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
    """Vectorized membership: returns +1 inside, 0 boundary, -1 outside per row."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    norms = np.linalg.norm(X, axis=1)
    U = X / np.where(norms < ZERO_NORM, 1.0, norms)[:, None]
    if isinstance(C, SimplicialCone):
        vals = np.linalg.solve(C.V, U.T).T
    elif C.is_full_dimensional:
        vals = U @ C._facets.T
    else:
        out = np.array([_code(contains_point(C, x, tol)) for x in X], dtype=np.int8)
        return out
    if vals.shape[1] == 0:
        out = np.ones(len(X), dtype=np.int8)
    else:
        lo = vals.min(axis=1)
        out = np.where(lo > tol, 1, np.where(lo >= -tol, 0, -1)).astype(np.int8)
    out[norms < ZERO_NORM] = 0
    return out


def _code(loc: Location) -> int:
    return {INSIDE: 1, BOUNDARY: 0, OUTSIDE: -1}[loc]


# -- triangulation --------------------------------------------------------------

def remove_redundant(G: np.ndarray, tol: float = 1e-9) -> list[int]:
    """Indices of irredundant generators (unit rows of G).

    A generator is redundant when it is a nonnegative combination of the other
    remaining ones. Candidates are examined from the highest index down, so among
    duplicates the lowest index survives.
    """
    keep = list(range(len(G)))
    for i in reversed(range(len(G))):
        others = [k for k in keep if k != i]
        if not others:
            continue
        _, resid = nnls(G[others].T, G[i])
        if resid <= tol:
            keep.remove(i)
    return keep


def _face_normal(vectors: np.ndarray, toward: np.ndarray) -> np.ndarray:
    """Unit normal of the hyperplane spanned by ``vectors`` with positive side at ``toward``."""
    _, _, Vt = np.linalg.svd(vectors, full_matrices=True)
    nrm = Vt[-1]
    if nrm @ toward < 0:
        nrm = -nrm
    return nrm


def _place(G: np.ndarray, tol: float = 1e-10):
    """Placing triangulation of the unit rows of a full-rank configuration.

    Returns (simplices, boundary) where simplices are sorted index tuples and
    boundary maps each boundary face (sorted tuple) to its inward unit normal.
    """
    n = G.shape[1]
    basis: list[int] = []
    for i in range(len(G)):
        trial = basis + [i]
        if np.linalg.matrix_rank(G[trial], tol=EPS_RANK) == len(trial):
            basis = trial
        if len(basis) == n:
            break
    if len(basis) < n:
        raise NotFullDim(f"generators span dimension {len(basis)} < {n}")

    simplices = [tuple(sorted(basis))]
    boundary: dict[tuple, np.ndarray] = {}
    for k in basis:
        face = tuple(sorted(j for j in basis if j != k))
        boundary[face] = _face_normal(G[list(face)], G[k])

    order = basis + [i for i in range(len(G)) if i not in basis]
    for g in order[n:]:
        visible = [f for f, nrm in boundary.items() if nrm @ G[g] < -tol]
        if not visible:
            continue
        for f in visible:
            simplices.append(tuple(sorted(f + (g,))))
        for f in visible:
            del boundary[f]
            for k in f:
                new_face = tuple(sorted([j for j in f if j != k] + [g]))
                if new_face in boundary:
                    del boundary[new_face]
                else:
                    boundary[new_face] = _face_normal(G[list(new_face)], G[k])
    return simplices, boundary


def _prepared_generators(C: Cone) -> np.ndarray:
    G = C.nonzero_generators
    U = G / np.linalg.norm(G, axis=1)[:, None]
    return U[remove_redundant(U)]


def _boundary_normals(C: Cone) -> np.ndarray:
    if not C.is_full_dimensional:
        raise NotFullDim("facet normals need a full-dimensional cone")
    U = _prepared_generators(C)
    _, boundary = _place(U)
    if not boundary:
        return np.zeros((0, C.ambient_dim))
    return np.array(list(boundary.values()))


def triangulate(C: Cone) -> list[SimplicialCone]:
    """Placing triangulation of a full-dimensional cone into simplicial cones.

    Redundant generators are removed first; the remaining ones are placed in
    input order, after the first n linearly independent ones.
    """
    if isinstance(C, SimplicialCone):
        return [C]
    if not C.is_full_dimensional:
        raise NotFullDim(f"cone spans dimension {C.rank} < {C.ambient_dim}")
    U = _prepared_generators(C)
    simplices, _ = _place(U)
    return [make_simplicial(U[list(s)]) for s in simplices]


# -- lineality --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinealitySplit:
    basis: np.ndarray  # orthonormal columns spanning the lineality space
    reduced: Optional[Cone]  # projection onto its orthogonal complement

    def __iter__(self):
        yield [self.basis[:, j] for j in range(self.basis.shape[1])]
        yield self.reduced

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def lineality_split(C: Cone, tol: float = MEMBERSHIP_TOL) -> LinealitySplit:
    """Split C into its lineality space L and the pointed cone C projected onto L-perp.

    L is spanned by the generators g with -g in C.
    """
    G = C.nonzero_generators
    n = C.ambient_dim
    in_lineality = [g for g in G if contains_point(C, -g, tol) is not OUTSIDE]
    if in_lineality:
        L = orthonormal_basis(np.array(in_lineality))
    else:
        L = np.zeros((n, 0))
    if L.shape[1] == 0:
        return LinealitySplit(L, C)
    P = G - (G @ L) @ L.T
    scale = np.linalg.norm(G, axis=1)
    keep = np.linalg.norm(P, axis=1) > 1e-9 * np.maximum(scale, 1.0)
    reduced = Cone(P[keep]) if np.any(keep) else None
    return LinealitySplit(L, reduced)
