"""Signed decompositions of simplicial cones.

Two families are implemented:

* the hyperplane identity and the recursive decomposition built on it
  (``decomp1``), whose pieces are either positive-definite simplicial cones or
  cones containing lines;
* the dual line identity and the recursive decomposition built on it
  (``decomp2``), whose pieces are positive-definite simplicial cones, with an
  optional tridiagonal refinement.

All recursion works on generator columns in ambient coordinates; signs multiply
along the recursion.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .cones import (
    Cone,
    SimplicialCone,
    associated_matrix,
    lineality_split,
    make_simplicial,
    orthonormal_basis,
    triangulate,
)
from .errors import (
    AllOrthogonal,
    DegenerateHyperplane,
    DimensionMismatch,
    EmptyCone,
    RankDeficient,
    RecursionLimit,
)
from .linalg import EPS0, is_positive_definite, is_tridiagonal, smallest_eigenvalue_dense

#: Off-tridiagonal / orthogonality tolerance for structural checks.
STRUCT_TOL = 1e-9
MAX_DEPTH = 64


class Form(enum.Enum):
    PD_FULL = "PD_FULL"
    CONTAINS_LINE = "CONTAINS_LINE"
    LOWER_DIM = "LOWER_DIM"
    SIMPLICIAL = "SIMPLICIAL"  # raw identity output, not yet classified


class Method(enum.Enum):
    DECOMP1 = "DECOMP1"
    DECOMP2 = "DECOMP2"
    DECOMP2_TRIDIAG = "DECOMP2_TRIDIAG"
    TRIANGULATION = "TRIANGULATION"


@dataclass(frozen=True, eq=False)
class SignedCone:
    cone: Union[SimplicialCone, Cone]
    sign: int
    form: Form

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.form is Form.PD_FULL:
            if not isinstance(self.cone, SimplicialCone):
                raise TypeError("PD_FULL pieces must be simplicial")
            if not is_positive_definite(associated_matrix(self.cone)):
                raise ValueError("PD_FULL piece has a non positive definite associated matrix")

    @property
    def generators(self) -> np.ndarray:
        return self.cone.generators


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Signed pieces of a cone; ``dropped`` holds measure-zero pieces kept for inspection."""

    pieces: list
    source: str
    method: Method
    dropped: list = field(default_factory=list)
    # ambient reduction metadata filled in by decompose_any
    basis: Optional[np.ndarray] = None
    lineality: Optional[np.ndarray] = None
    simplices: int = 1
    pivot: Optional[int] = None  # generator used as the top-level pivot

    def __len__(self) -> int:
        return len(self.pieces)

    def __iter__(self):
        return iter(self.pieces)


# -- hyperplane identity -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HyperplaneSpec:
    basis: np.ndarray  # rows span the hyperplane
    normal: np.ndarray

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.basis, dtype=float))
        nrm = np.asarray(self.normal, dtype=float)
        if np.linalg.norm(nrm) < 1e-12:
            raise DegenerateHyperplane("zero normal")
        nrm = nrm / np.linalg.norm(nrm)
        if B.size and np.max(np.abs(B @ nrm)) > 1e-9 * max(1.0, np.max(np.abs(B))):
            raise DegenerateHyperplane("normal is not orthogonal to the basis")
        object.__setattr__(self, "basis", B)
        object.__setattr__(self, "normal", nrm)

    @classmethod
    def from_normal(cls, normal) -> "HyperplaneSpec":
        nrm = np.asarray(normal, dtype=float)
        _, _, Vt = np.linalg.svd(nrm.reshape(1, -1))
        return cls(basis=Vt[1:], normal=nrm)

    @classmethod
    def from_basis(cls, basis) -> "HyperplaneSpec":
        B = np.atleast_2d(np.asarray(basis, dtype=float))
        _, _, Vt = np.linalg.svd(B, full_matrices=True)
        return cls(basis=B, normal=Vt[-1])


def _snap(values: np.ndarray, eps: float = EPS0) -> np.ndarray:
    out = np.asarray(values, dtype=float).copy()
    out[np.abs(out) <= eps] = 0.0
    return out


def _projected(W: np.ndarray, h: np.ndarray, a0: int, k: int) -> np.ndarray:
    """Projection of w_k onto ker h parallel to w_a0."""
    return W[:, k] - (h[k] / h[a0]) * W[:, a0]


def _hyperplane_pieces(W: np.ndarray, h: np.ndarray, corrections: bool = True):
    """Exact hyperplane identity for the cone over the columns of W.

    ``h`` holds the values of a linear functional on the generators (already
    snapped). Returns (simplicial, lines): lists of (sign, generator rows) where
    the simplicial part is the classical Brion-Vergne sum and ``lines`` are the
    cones containing lines that complete it to an exact identity (up to sets of
    measure zero).

    With P = {h > 0}, N = {h < 0} and F_A = {lambda_k >= 0 for k not in A}:

        [C] = sum_P [F_i & H+] - sum_N [F_j & H+] + sum_N [F_j]
              + sum_{A in P, |A|>=2} (-1)^(|A|+1) [F_A & H+]
              + sum_{A in N, |A|>=2} (-1)^(|A|+1) [F_A & H-]
    """
    m = W.shape[1]
    P = [k for k in range(m) if h[k] > 0]
    N = [k for k in range(m) if h[k] < 0]
    simplicial = []
    for i in P + N:
        sgn = 1 if h[i] > 0 else -1
        gens = []
        for k in range(m):
            if k == i:
                continue
            gens.append(_projected(W, h, i, k))
        gens.append(sgn * W[:, i])
        simplicial.append((sgn, i, np.array(gens)))
    lines = []
    if corrections:
        for j in N:
            gens = [W[:, k] for k in range(m) if k != j] + [W[:, j], -W[:, j]]
            lines.append((1, np.array(gens)))
        for group in (P, N):
            for size in range(2, len(group) + 1):
                for A in itertools.combinations(group, size):
                    a0 = A[0]
                    gens = [W[:, a0]]
                    gens += [_projected(W, h, a0, k) for k in range(m) if k not in A]
                    for a in A[1:]:
                        r = _projected(W, h, a0, a)
                        gens += [r, -r]
                    lines.append(((-1) ** (size + 1), np.array(gens)))
    return simplicial, lines


def bv_hyperplane(K: SimplicialCone, L: HyperplaneSpec, corrections: bool = True) -> list:
    """Signed cones of the hyperplane identity for K with respect to L.

    Generators strictly on the positive side of L give ``+[R+ w_i + rho_i(K)]``,
    those on the negative side give ``-[R+(-w_i) + rho_i(K)]``; rho_i projects
    onto L parallel to w_i. With ``corrections`` the cones containing lines that
    make the relation exact are appended (tagged CONTAINS_LINE).
    """
    W = np.asarray(K.V, dtype=float)
    if L.normal.shape[0] != W.shape[0]:
        raise DimensionMismatch("hyperplane and cone live in different dimensions")
    h = _snap(W.T @ L.normal)
    if not np.any(h):
        raise DegenerateHyperplane("every generator lies in the hyperplane")
    simplicial, lines = _hyperplane_pieces(W, h, corrections)
    out = []
    for sgn, _, gens in simplicial:
        out.append(_signed(gens, sgn, Form.SIMPLICIAL))
    for sgn, gens in lines:
        out.append(SignedCone(Cone(gens), sgn, Form.CONTAINS_LINE))
    return out


def _signed(rows: np.ndarray, sign: int, form: Form) -> SignedCone:
    try:
        return SignedCone(make_simplicial(rows), sign, form)
    except RankDeficient:
        return SignedCone(Cone(rows), sign, Form.LOWER_DIM)


# -- line identity (dual route) --------------------------------------------------------

@dataclass(frozen=True)
class SignTable:
    delta: tuple
    s: tuple
    eps: tuple  # eps[i][k]

    def __post_init__(self):
        n = len(self.delta)
        if len(self.s) != n or len(self.eps) != n:
            raise DimensionMismatch("sign table sizes disagree")


def signs_from_delta(delta) -> SignTable:
    """The sign rules of the line identity, computed from delta in {-1, 0, 1}^n.

    s_i = (-1)^#{j < i : delta_j = 1} when delta_i = 1, and
    (-1)^#{j > i : delta_j = -1} when delta_i = -1 (s_i = 1 when delta_i = 0).
    eps_ik = -1 when delta_i = delta_k = 1 and k < i, or delta_i = delta_k = -1
    and k > i; otherwise +1.
    """
    delta = tuple(int(d) for d in delta)
    n = len(delta)
    s = []
    for i, d in enumerate(delta):
        if d == 1:
            s.append((-1) ** sum(1 for j in range(i) if delta[j] == 1))
        elif d == -1:
            s.append((-1) ** sum(1 for j in range(i + 1, n) if delta[j] == -1))
        else:
            s.append(1)
    eps = []
    for i in range(n):
        row = []
        for k in range(n):
            flip = (delta[i] == delta[k] == 1 and k < i) or (
                delta[i] == delta[k] == -1 and k > i
            )
            row.append(-1 if flip else 1)
        eps.append(tuple(row))
    return SignTable(delta=delta, s=tuple(s), eps=tuple(eps))


def _delta(W: np.ndarray, eps: float = EPS0) -> tuple:
    d = _snap(W[:, :-1].T @ W[:, -1], eps)
    return tuple(int(x) for x in np.sign(d)) + (0,)


def sign_table(K: SimplicialCone) -> SignTable:
    return signs_from_delta(_delta(np.asarray(K.V)))


def _line_pieces(W: np.ndarray):
    """Pieces of the line identity for the columns of W, pivoting on the last one.

    Returns a list of (sign, i, rows) with rows ordered as
    [normalized u_ik for k != i, k < m-1] + [w_i, w_m].
    """
    m = W.shape[1]
    table = signs_from_delta(_delta(W))
    delta = table.delta
    if not any(delta):
        raise AllOrthogonal("every generator is orthogonal to the last one")
    d = W[:, :-1].T @ W[:, -1]
    out = []
    for i in range(m - 1):
        if delta[i] == 0:
            continue
        rows = []
        for k in range(m - 1):
            if k == i:
                continue
            if delta[k] == 0:
                u = W[:, k].copy()
            else:
                u = table.eps[i][k] * (W[:, k] - (d[k] / d[i]) * W[:, i])
                u = u / np.linalg.norm(u)
            rows.append(u)
        rows.append(W[:, i])
        rows.append(W[:, -1])
        out.append((table.s[i], i, np.array(rows)))
    return out


def bv_mod_lower_dim(K: SimplicialCone) -> list:
    """Signed cones of the line identity, exact up to lower-dimensional cones.

    One piece per i with w_i . w_n != 0, with sign s_i; each piece keeps w_i and
    w_n as its last two generators.
    """
    W = np.asarray(K.V, dtype=float)
    return [_signed(rows, sgn, Form.SIMPLICIAL) for sgn, _, rows in _line_pieces(W)]


# -- structural predicates -----------------------------------------------------------

def signing_vector(G: np.ndarray, tol: float = STRUCT_TOL) -> Optional[np.ndarray]:
    """Signs e with e_i e_j G_ij = -|G_ij| for every pair, or None if impossible."""
    m = G.shape[0]
    eps = np.zeros(m, dtype=int)
    for start in range(m):
        if eps[start]:
            continue
        eps[start] = 1
        stack = [start]
        while stack:
            i = stack.pop()
            for j in range(m):
                if j == i or abs(G[i, j]) <= tol:
                    continue
                want = -eps[i] * int(np.sign(G[i, j]))
                if eps[j] == 0:
                    eps[j] = want
                    stack.append(j)
                elif eps[j] != want:
                    return None
    return eps


def _is_terminal(W: np.ndarray, tridiagonal: bool) -> bool:
    m = W.shape[1]
    if m <= 2:
        return True
    G = W.T @ W
    if tridiagonal:
        return is_tridiagonal(G, STRUCT_TOL)
    # last generator orthogonal to all but its predecessor, and signable
    if np.max(np.abs(G[:-2, -1])) > STRUCT_TOL:
        return False
    return signing_vector(G) is not None


# -- recursive decompositions ----------------------------------------------------------

def _recurse(W: np.ndarray, method: Method, depth: int = 0):
    """Yield (sign, rows, kind) with kind in {"simplicial", "line"}."""
    if depth > MAX_DEPTH:
        raise RecursionLimit("decomposition recursion too deep")
    m = W.shape[1]
    tridiagonal = method is Method.DECOMP2_TRIDIAG
    if _is_terminal(W, tridiagonal):
        yield 1, W.T.copy(), "simplicial"
        return
    w_last = W[:, -1]
    d = _snap(W[:, :-1].T @ w_last)
    if not np.any(d):
        for sgn, rows, kind in _recurse(W[:, :-1], method, depth + 1):
            yield sgn, np.vstack([rows, w_last]), kind
        return

    if method is Method.DECOMP1:
        pivot = int(np.argmax(np.abs(d)))
        order = [k for k in range(m - 1) if k != pivot] + [pivot, m - 1]
        W = W[:, order]
        d = _snap(W[:, :-1].T @ w_last)
        h = np.append(d, 0.0)
        if h[m - 2] < 0:
            h = -h
        simplicial, lines = _hyperplane_pieces(W, h, corrections=True)
        for sgn, rows in lines:
            yield sgn, rows, "line"
        for sgn, i, rows in simplicial:
            # rows: [rho_i(w_k) for k != i] + [s w_i]; rho_i(w_last) = w_last is last of the first block
            us = [r / np.linalg.norm(r) for r in rows[:-2]]
            sub = np.column_stack(us + [rows[-1]])
            for s2, sub_rows, kind in _recurse(sub, method, depth + 1):
                yield sgn * s2, np.vstack([sub_rows, w_last]), kind
    else:
        for sgn, _, rows in _line_pieces(W):
            sub = rows[:-1].T
            for s2, sub_rows, kind in _recurse(sub, method, depth + 1):
                yield sgn * s2, np.vstack([sub_rows, w_last]), kind


def _classify_piece(rows: np.ndarray, sign: int, kind: str) -> SignedCone:
    if kind == "line":
        return SignedCone(Cone(rows), sign, Form.CONTAINS_LINE)
    try:
        K = make_simplicial(rows)
    except RankDeficient:
        return SignedCone(Cone(rows), sign, Form.LOWER_DIM)
    if not is_positive_definite(associated_matrix(K)):
        return SignedCone(K, sign, Form.SIMPLICIAL)
    return SignedCone(K, sign, Form.PD_FULL)


def _collect(W: np.ndarray, method: Method) -> tuple:
    pieces, dropped = [], []
    for sgn, rows, kind in _recurse(W, method):
        piece = _classify_piece(rows, sgn, kind)
        if piece.form is Form.LOWER_DIM:
            dropped.append(piece)
        else:
            pieces.append(piece)
    return pieces, dropped


def _worst_lambda(pieces: list) -> float:
    lams = [smallest_eigenvalue_dense(associated_matrix(p.cone))
            for p in pieces if p.form is Form.PD_FULL]
    return min(lams) if lams else 1.0


def _run(K: SimplicialCone, method: Method, orient: bool = True) -> Decomposition:
    """Decompose K; for the line-based methods optionally choose the pivot generator.

    With ``orient`` every generator is tried as the top-level pivot and the
    decomposition whose worst piece has the largest lambda_min is kept (ties
    keep the given order).  Series cost grows like 1/lambda_min, so this
    mostly protects against badly conditioned pieces.
    """
    W = np.asarray(K.V, dtype=float)
    m = W.shape[1]
    lined = method in (Method.DECOMP2, Method.DECOMP2_TRIDIAG)
    pivots = [m - 1]
    if orient and lined and not _is_terminal(W, method is Method.DECOMP2_TRIDIAG):
        pivots += list(range(m - 1))
    best = None
    for j in pivots:
        order = [k for k in range(m) if k != j] + [j]
        try:
            pieces, dropped = _collect(W[:, order], method)
        except AllOrthogonal:
            continue
        score = _worst_lambda(pieces) if len(pivots) > 1 else 1.0
        if best is None or score > best[0] * (1.0 + 1e-9):
            best = (score, pieces, dropped, j)
    _, pieces, dropped, j = best
    return Decomposition(pieces=pieces, source=repr(K.V.T.tolist()), method=method,
                         dropped=dropped, pivot=j)


def decomp1(K: SimplicialCone) -> Decomposition:
    """Hyperplane-based decomposition into positive-definite cones and cones with lines."""
    return _run(K, Method.DECOMP1)


def decomp2(K: SimplicialCone, tridiagonal: bool = False, orient: bool = True) -> Decomposition:
    """Line-based decomposition into positive-definite cones (tridiagonal Gram if asked)."""
    return _run(K, Method.DECOMP2_TRIDIAG if tridiagonal else Method.DECOMP2, orient)


def max_pieces(n: int) -> int:
    """Upper bound (n-1)! on the number of pieces of decomp2 for an n-dim cone."""
    return math.factorial(max(n - 1, 0))


# -- arbitrary cones -----------------------------------------------------------------

def span_reduction(C: Cone):
    """Lineality basis, orthonormal span basis and reduced generators in span coordinates.

    Returns (lineality, basis, reduced) where ``reduced`` is None for a linear
    subspace. When the reduced cone is full-dimensional in the ambient space the
    identity basis is used so coordinates are unchanged.
    """
    split = lineality_split(C)
    L = split.basis
    if split.reduced is None:
        return L, None, None
    G = split.reduced.nonzero_generators
    n = C.ambient_dim
    if L.shape[1] == 0 and np.linalg.matrix_rank(G, tol=1e-9) == n:
        return L, np.eye(n), G
    B = orthonormal_basis(G)
    return L, B, G @ B


def decompose_any(C, method: Union[Method, str] = Method.DECOMP2_TRIDIAG,
                  tridiagonal: Optional[bool] = None, orient: bool = True) -> Decomposition:
    """Triangulate the pointed part of C in its span and decompose every simplex.

    Piece generators are expressed in the coordinates of ``basis`` (columns,
    ambient coordinates); ``lineality`` spans the removed lineality space.
    """
    if isinstance(method, str):
        method = Method[method.upper().replace("-", "_")]
    if tridiagonal is not None and method in (Method.DECOMP2, Method.DECOMP2_TRIDIAG):
        method = Method.DECOMP2_TRIDIAG if tridiagonal else Method.DECOMP2
    if isinstance(C, SimplicialCone):
        C = C.as_cone()
    elif not isinstance(C, Cone):
        try:
            C = Cone(C)
        except EmptyCone:
            raise
    L, B, G = span_reduction(C)
    if B is None:
        return Decomposition(pieces=[], source=repr(C), method=method,
                             basis=np.zeros((C.ambient_dim, 0)), lineality=L, simplices=0)
    simplices = triangulate(Cone(G))
    pieces, dropped = [], []
    for S in simplices:
        if method is Method.TRIANGULATION:
            pieces.append(SignedCone(S, 1, Form.SIMPLICIAL))
            continue
        sub = _run(S, method, orient)
        pieces.extend(sub.pieces)
        dropped.extend(sub.dropped)
    return Decomposition(pieces=pieces, source=repr(C), method=method, dropped=dropped,
                         basis=B, lineality=L, simplices=len(simplices))


# -- structural checks -----------------------------------------------------------------

PROPERTIES = ("IIa", "IIb", "IIc", "IId", "IIe", "IId'")


def _same_span(A: np.ndarray, B: np.ndarray, tol: float) -> bool:
    """Column spans of A and B coincide (orthogonal projectors agree)."""
    if A.shape[1] == 0 or B.shape[1] == 0:
        return A.shape[1] == B.shape[1]
    Pa = orthonormal_basis(A.T)
    Pb = orthonormal_basis(B.T)
    if Pa.shape[1] != Pb.shape[1]:
        return False
    return bool(np.max(np.abs(Pa @ Pa.T - Pb @ Pb.T)) <= tol)


def check_pieces(K: SimplicialCone, dec: Decomposition, tol: float = 1e-8,
                 rng: Optional[np.random.Generator] = None) -> dict:
    """Verify the structural properties of every positive-definite piece of ``dec``.

    ``dec`` must come from decomposing the single simplicial cone K.  Returns a
    mapping from property name to a pass flag; "IId'" is only reported for the
    tridiagonal method.
    """
    rng = rng or np.random.default_rng(0)
    W = np.asarray(K.V, dtype=float)
    m = W.shape[1]
    j = m - 1 if dec.pivot is None else dec.pivot
    w_n = W[:, j]
    rest = W[:, [k for k in range(m) if k != j]]
    ok = {p: True for p in PROPERTIES[:5]}
    tridiagonal = dec.method is Method.DECOMP2_TRIDIAG
    if tridiagonal:
        ok["IId'"] = True
    for p in dec.pieces:
        if p.form is not Form.PD_FULL:
            continue
        V = np.asarray(p.cone.V, dtype=float)
        G = V.T @ V
        ok["IIa"] &= bool(np.all(np.abs(np.diag(G) - 1.0) <= tol))
        ok["IIb"] &= bool(np.max(np.abs(V[:, -1] - w_n)) <= tol)
        ok["IIc"] &= _same_span(V[:, :-1], rest, tol)
        ok["IId"] &= bool(m <= 2 or np.max(np.abs(G[:-2, -1])) <= tol)
        eps = signing_vector(G)
        if eps is None:
            ok["IIe"] = False
        else:
            M = associated_matrix(p.cone)
            X = rng.standard_normal((100, m))
            lhs = np.einsum("ki,ij,kj->k", X, M, X)
            rhs = np.sum(((X * eps) @ V.T) ** 2, axis=1)
            ok["IIe"] &= bool(np.max(np.abs(lhs - rhs)) <= tol * max(1.0, np.max(np.abs(lhs))))
        if tridiagonal:
            ok["IId'"] &= is_tridiagonal(G, STRUCT_TOL)
    return ok
