"""Hypergeometric series for the normalized solid angle.

Two series are implemented:

* ``t_alpha``: the general multivariate series in the C(n,2) couplings
  alpha_ij = v_i . v_j, converging iff the associated matrix is positive definite.
* ``t_beta``: the (n-1)-variable chain series for cones whose Gram matrix is
  tridiagonal, with couplings beta_i = v_i . v_{i+1}.

All series are written in "normalized" form: value = |det V| 2^-n S with

    g(k) = Gamma((1+k)/2) / sqrt(pi),

so that the zero multi-index contributes exactly 1 to S.  Coefficient
magnitudes live in log space; signs are carried separately.

The chain series is summed by a transfer recursion along the chain.  The two
end variables are summed in closed form (a regularized incomplete beta
function), which leaves a shorter chain whose effective conditioning is usually
much better than that of the original one.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.special import betainc, betaincc, betaln, gammaln, logsumexp

from .errors import (
    BudgetExceeded,
    DimensionMismatch,
    NonFiniteTerm,
    NotPositiveDefinite,
    ZeroDenominator,
)
from .linalg import (
    SymTridiag,
    is_positive_definite,
    smallest_eigenvalue_dense,
    sturm_sequence,
    tridiag_lambda_min,
)

LOG_SQRT_PI = 0.5 * math.log(math.pi)
#: Couplings below this magnitude are treated as exactly zero.
ZERO_COUPLING = 1e-14
_CHUNK = 1 << 22  # kernel entries evaluated per block


# ---------------------------------------------------------------------------
# Gamma at half-integers


@lru_cache(maxsize=8)
def _half_gamma_table(size: int) -> np.ndarray:
    # lnGamma((1+k)/2) by the recurrence Gamma(x+1) = x Gamma(x), seeded with
    # Gamma(1/2) = sqrt(pi) and Gamma(1) = 1; accumulated in extended precision.
    k = np.arange(size, dtype=np.longdouble)
    steps = np.log((1 + k) / 2)
    out = np.empty(size, dtype=np.longdouble)
    out[0::2] = LOG_SQRT_PI
    out[1::2] = 0.0
    out[2::2] += np.cumsum(steps[0:size - 2:2])
    out[3::2] += np.cumsum(steps[1:size - 2:2])
    return out.astype(float)


def log_gamma_half(kmax: int) -> np.ndarray:
    """``lnGamma((1+k)/2)`` for k = 0..kmax."""
    size = 1 << max(int(kmax).bit_length(), 15)
    return _half_gamma_table(size)[: kmax + 1]


def log_g(kmax: int) -> np.ndarray:
    """``ln g(k) = lnGamma((1+k)/2) - ln sqrt(pi)`` for k = 0..kmax."""
    return log_gamma_half(kmax) - LOG_SQRT_PI


@lru_cache(maxsize=8)
def _log_factorial_table(size: int) -> np.ndarray:
    return gammaln(np.arange(size, dtype=float) + 1.0)


def log_factorial(kmax: int) -> np.ndarray:
    size = 1 << max(int(kmax).bit_length(), 15)
    return _log_factorial_table(size)[: kmax + 1]


def _coef_logs(beta: float, nmax: int, absolute: bool = False):
    """log|c(b)| and sign of c(b) = (-2 beta)^b / b! for b = 0..nmax."""
    b = np.arange(nmax + 1)
    lc = np.full(nmax + 1, -np.inf)
    lc[0] = 0.0
    if abs(beta) > 0.0:
        lc = b * math.log(2.0 * abs(beta)) - log_factorial(nmax)
    if absolute or beta < 0:
        sg = np.ones(nmax + 1)
    else:
        sg = np.where(b % 2 == 0, 1.0, -1.0)
    return lc, sg


# ---------------------------------------------------------------------------
# Public value types


@dataclass(frozen=True)
class AlphaVector:
    """Pairwise couplings alpha_ij = v_i . v_j, ordered lexicographically (i < j)."""

    alpha: tuple
    n: int

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if len(self.alpha) != self.n * (self.n - 1) // 2:
            raise DimensionMismatch(f"need {self.n * (self.n - 1) // 2} couplings for n={self.n}")
        if any(not math.isfinite(a) or abs(a) > 1 + 1e-12 for a in self.alpha):
            raise ValueError("couplings must satisfy |alpha| <= 1")

    @classmethod
    def from_gram(cls, G) -> "AlphaVector":
        G = np.asarray(G, dtype=float)
        n = G.shape[0]
        iu = np.triu_indices(n, 1)
        return cls(tuple(G[iu]), n)

    def pairs(self) -> list:
        return [(i, j) for i in range(self.n) for j in range(i + 1, self.n)]

    def associated_matrix(self) -> np.ndarray:
        M = np.eye(self.n)
        for (i, j), a in zip(self.pairs(), self.alpha):
            M[i, j] = M[j, i] = -abs(a)
        return M


@dataclass(frozen=True)
class BetaVector:
    """Chain couplings beta_i = v_i . v_{i+1} of a tridiagonal Gram matrix."""

    beta: tuple

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if any(not math.isfinite(b) or abs(b) > 1 + 1e-12 for b in self.beta):
            raise ValueError("couplings must satisfy |beta| <= 1")

    @property
    def n(self) -> int:
        return len(self.beta) + 1

    @classmethod
    def from_gram(cls, G, tol: float = 1e-9) -> "BetaVector":
        from .linalg import is_tridiagonal

        G = np.asarray(G, dtype=float)
        if not is_tridiagonal(G, tol):
            raise ValueError("Gram matrix is not tridiagonal")
        return cls(tuple(np.diag(G, 1)))

    def tridiag(self) -> SymTridiag:
        return SymTridiag.unit(self.beta)


def _as_beta(beta) -> BetaVector:
    return beta if isinstance(beta, BetaVector) else BetaVector(tuple(beta))


@dataclass(frozen=True)
class TruncationSpec:
    """Truncation controls.

    With ``caps`` set the sum is taken over the fixed box ``b_i <= caps[i]``;
    otherwise the caps grow until the tail estimate drops below ``target_tol``.
    """

    caps: Optional[tuple] = None
    target_tol: float = 1e-10
    max_terms: int = 50_000_000

    def __post_init__(self):
        if self.caps is not None:
            caps = (self.caps,) if np.isscalar(self.caps) else self.caps
            caps = tuple(int(c) for c in caps)
            if any(c < 0 for c in caps):
                raise ValueError("caps must be >= 0")
            object.__setattr__(self, "caps", caps)
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")
        if not self.target_tol > 0:
            raise ValueError("target_tol must be positive")

    def caps_for(self, k: int) -> Optional[tuple]:
        if self.caps is None:
            return None
        if len(self.caps) == 1:
            return self.caps * k
        if len(self.caps) != k:
            raise DimensionMismatch(f"expected {k} caps, got {len(self.caps)}")
        return self.caps


@dataclass(frozen=True)
class ErrorModel:
    lambda_min: float
    rho: float
    tail_estimate: float
    terms_used: int
    caps: tuple = ()


def decay_ratio(lambda_min: float) -> float:
    """Heuristic geometric decay ratio used for tail estimates.

    ``min(1 - lambda/2, 0.999)``, raised to ``1 - lambda/2`` when the cap would
    fall below the asymptotic ratio ``1 - lambda``.
    """
    rho = min(1.0 - lambda_min / 2.0, 0.999)
    if rho <= 1.0 - lambda_min:
        rho = 1.0 - lambda_min / 2.0
    return rho


@dataclass
class MeasureResult:
    value: float
    abs_error_estimate: float
    method: str
    terms_used: int = 0
    pieces: int = 1
    warning: bool = False
    raw_value: Optional[float] = None
    error_model: Optional[ErrorModel] = None
    details: dict = field(default_factory=dict)

    @classmethod
    def from_raw(cls, raw: float, err: float, method: str, **kw) -> "MeasureResult":
        """Clamp ``raw`` into [0, 1], flagging values outside by more than ``err``."""
        if not math.isfinite(raw):
            raise NonFiniteTerm(f"non-finite measure {raw!r}")
        excess = max(-raw, raw - 1.0, 0.0)
        warning = kw.pop("warning", False) or excess > err
        value = min(max(raw, 0.0), 1.0)
        return cls(value=value, abs_error_estimate=err, method=method,
                   warning=warning, raw_value=raw, **kw)

    def to_dict(self) -> dict:
        out = {
            "value": self.value,
            "abs_error_estimate": self.abs_error_estimate,
            "method": self.method,
            "terms_used": self.terms_used,
            "pieces": self.pieces,
            "warning": self.warning,
        }
        if self.error_model is not None:
            out["lambda_min"] = self.error_model.lambda_min
            out["rho"] = self.error_model.rho
        out.update(self.details)
        return out


# ---------------------------------------------------------------------------
# Closed-form end sums


def _log_betaincc_cf(p: np.ndarray, x: float) -> np.ndarray:
    # log I_x(p, 1/2) by the Lentz continued fraction, for large p where the
    # value underflows; valid for x < (p+1)/(p+2.5).
    q = 0.5
    qab, qap, qam = p + q, p + 1.0, p - 1.0
    tiny = 1e-300
    c = np.ones_like(p)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < tiny, tiny, d)
    d = 1.0 / d
    h = d.copy()
    for m in range(1, 20000):
        m2 = 2 * m
        aa = m * (q - m) * x / ((qam + m2) * (p + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < tiny, tiny, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        d = 1.0 / d
        h *= d * c
        aa = -(p + m) * (qab + m) * x / ((p + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < tiny, tiny, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        d = 1.0 / d
        delta = d * c
        h *= delta
        if np.all(np.abs(delta - 1.0) < 1e-15):
            break
    front = p * math.log(x) + q * math.log1p(-x) - betaln(p, q) - np.log(p)
    return front + np.log(h)


def _log_upper_tail(p: float, x: float) -> float:
    """log of 1 - I_x(1/2, p), switching to a continued fraction on underflow."""
    v = float(betaincc(0.5, p, x))
    if v > 1e-280:
        return math.log(v)
    return float(_log_betaincc_cf(np.array([p]), 1.0 - x)[0])


def end_sum_logs(beta: float, nmax: int, absolute: bool = False) -> np.ndarray:
    """log of F(c) = sum_b c(b) g(b) g(b + c) for c = 0..nmax, in closed form.

    F(c) = g(c) (1 - beta^2)^(-(1+c)/2) [1 - sgn(beta) I_{beta^2}(1/2, (1+c)/2)],
    where I is the regularized incomplete beta function.  ``absolute`` replaces
    beta by -|beta|, giving the sum of absolute values.  F is always positive.

    The bracket is filled in from two seed values per parity of c using
    I(1/2, p+1) - I(1/2, p) = |beta| (1-beta^2)^p Gamma(p+1/2) / (Gamma(p+1) Gamma(1/2)),
    summed upward when beta < 0 and downward when beta > 0 so that only
    positive quantities are ever added.
    """
    if absolute:
        beta = -abs(beta)
    c = np.arange(nmax + 1)
    lg = log_g(nmax)
    if beta == 0.0:
        return lg
    x = beta * beta
    p = 0.5 * (1.0 + c)
    log_a = math.log1p(-x)
    step = (gammaln(p + 0.5) - gammaln(p + 1.0) - LOG_SQRT_PI
            + math.log(abs(beta)) + p * log_a)
    bracket = np.empty(nmax + 1)
    for parity in (0, 1):
        idx = c[parity::2]
        if idx.size == 0:
            continue
        if beta < 0:
            lower = float(betainc(0.5, p[idx[0]], x))
            inc = np.concatenate([[0.0], np.cumsum(np.exp(step[idx[:-1]]))])
            bracket[idx] = np.log1p(lower + inc)
        else:
            top = _log_upper_tail(p[idx[-1]], x)
            rev = np.logaddexp.accumulate(step[idx[:-1]][::-1])[::-1]
            bracket[idx[:-1]] = np.logaddexp(top, rev)
            bracket[idx[-1]] = top
    return lg - p * log_a + bracket


# ---------------------------------------------------------------------------
# Chain transfer


def _transfer(logx: np.ndarray, sgn: np.ndarray, n_out: int,
              log_kernel: Optional[np.ndarray] = None) -> tuple:
    """w(b') = sum_b x(b) K(b, b') for each row of x, in log-magnitude form.

    K defaults to g(b + b'); ``log_kernel`` supplies any other positive kernel.
    Every output column is reduced relative to its own largest term, so the
    result keeps full relative precision whatever the dynamic range of x.
    """
    logx = np.atleast_2d(logx)
    sgn = np.atleast_2d(sgn)
    r, n_in = logx.shape
    lg = log_g(n_in + n_out) if log_kernel is None else None
    logy = np.full((r, n_out), -np.inf)
    sy = np.zeros((r, n_out))
    live = [i for i in range(r) if np.any(np.isfinite(logx[i]))]
    if not live:
        return logy, sy
    b = np.arange(n_in)
    cols = max(1, _CHUNK // n_in)
    for c0 in range(0, n_out, cols):
        c1 = min(n_out, c0 + cols)
        if log_kernel is None:
            H = lg[b[:, None] + np.arange(c0, c1)[None, :]]
        else:
            H = log_kernel[:, c0:c1]
        for i in live:
            A = logx[i][:, None] + H
            M = np.max(A, axis=0)
            M = np.where(np.isfinite(M), M, 0.0)
            np.subtract(A, M, out=A)
            np.exp(A, out=A)
            s = sgn[i] @ A
            with np.errstate(divide="ignore"):
                logy[i, c0:c1] = np.log(np.abs(s)) + M
            sy[i, c0:c1] = np.sign(s)
    return logy, sy


def _signed_logsum(logs: np.ndarray, sgn: np.ndarray) -> float:
    m = np.max(logs)
    if not np.isfinite(m):
        return 0.0
    return float(np.sum(sgn * np.exp(logs - m)) * math.exp(m))


def _interior_kernel_logs(beta: float, n_rows: int, n_cols: int) -> np.ndarray:
    """log F(a, c) = log sum_b c(b) g(a + b) g(b + c) for a < n_rows, c < n_cols.

    F(a, c) is the moment of x^a y^c exp(-2 beta x y) under the half-line
    Gaussian weight in each variable, and integration by parts in x gives
    2 F(a+1, c) = a F(a-1, c) - 2 beta F(a, c+1) + (2/sqrt(pi)) [a = 0] g(c).
    Row 0 is the end sum.  Only for beta < 0, where every term is positive and
    the recurrence is stable.
    """
    if beta >= 0:
        raise ValueError("interior summation needs a negative coupling")
    if n_rows > n_cols:
        return _interior_kernel_logs(beta, n_cols, n_rows).T.copy()
    width = n_cols + n_rows
    out = np.empty((n_rows, n_cols))
    prev = None
    cur = end_sum_logs(beta, width)
    lg = log_g(width)
    log_2b = math.log(-2.0 * beta)
    log_half = -math.log(2.0)
    log_2_over_sqrt_pi = math.log(2.0) - LOG_SQRT_PI
    for a in range(n_rows):
        out[a] = cur[:n_cols]
        if a + 1 == n_rows:
            break
        w = len(cur) - 1
        nxt = log_2b + cur[1:]
        if a == 0:
            nxt = np.logaddexp(nxt, log_2_over_sqrt_pi + lg[:w])
        else:
            nxt = np.logaddexp(nxt, math.log(a) + prev[:w])
        prev, cur = cur, nxt + log_half
    return out


def _independent_sets(m: int):
    """All sets of pairwise non-adjacent edges of a path with m edges."""
    def rec(k):
        if k >= m:
            yield ()
            return
        for rest in rec(k + 1):
            yield rest
        for rest in rec(k + 2):
            yield (k,) + rest
    return rec(0)


def _chain_plan(beta: np.ndarray, gone: tuple) -> tuple:
    """Decay rate and expected index ranges when the edges in ``gone`` are summed out.

    The absolute series of the rearranged sum is the orthant integral of
    exp(-t'G't), where G' has -|beta| on explicit edges and the signed beta on
    summed-out ones.  Its slow directions are those of the pieces left after
    cutting the positive summed-out edges.  Along the Perron vector z of a
    piece with smallest eigenvalue lambda, edge k has index range about
    2 |beta_k| z_k z_(k+1) / lambda.
    """
    m = len(beta)
    cut = [k in gone and beta[k] > 0 for k in range(m)]
    scale = np.zeros(m)
    lam = 1.0
    start = 0
    for stop in range(m + 1):
        if stop < m and not cut[stop]:
            continue
        edges = np.arange(start, stop)
        if len(edges):
            M = SymTridiag.unit(-np.abs(beta[edges])).dense()
            w, U = np.linalg.eigh(M)
            lam_c = max(float(w[0]), 1e-300)
            z = np.abs(U[:, 0])
            scale[edges] = 2.0 * np.abs(beta[edges]) * z[:-1] * z[1:] / lam_c
            if any(k not in gone for k in edges):
                lam = min(lam, lam_c)
        start = stop + 1
    return lam, scale


class _Chain:
    """One block of consecutive nonzero couplings beta_1..beta_m (m+1 generators).

    Some edge indices are summed out in closed form: end edges through the
    end sums, interior edges with negative coupling through the kernel F.  The
    remaining explicit edges form a chain linked by g(b + b') between
    neighbors and by F across a summed-out edge.  Among all admissible sets
    of summed-out edges (never two adjacent) the one with the smallest
    predicted work is used.
    """

    def __init__(self, beta: Sequence[float], resum: bool = True):
        self.beta = np.asarray(beta, dtype=float)
        m = self.m = len(self.beta)
        self.lambda_min = tridiag_lambda_min(SymTridiag.unit(self.beta))
        best = None
        options = _independent_sets(m) if resum and m >= 2 else [()]
        for gone in options:
            if any(0 < k < m - 1 and self.beta[k] >= 0 for k in gone):
                continue
            lam, scale = _chain_plan(self.beta, gone)
            keep = [k for k in range(m) if k not in gone]
            caps = [16 + 20.0 * scale[k] for k in keep]
            work = caps[0] + sum(a * b + (min(a, b) * (a + b) if kb - ka == 2 else 0.0)
                                 for a, b, ka, kb in zip(caps, caps[1:], keep, keep[1:]))
            key = (work, -len(gone))
            if best is None or key < best[0]:
                best = (key, gone, lam, scale)
        (self.work, _), gone, self.lambda_eff, self.scale = best
        self.keep = [k for k in range(m) if k not in gone]
        self.p = len(self.keep)
        self.left = 0 in gone
        self.right = m - 1 in gone
        # link i joins keep[i-1] and keep[i]; None means the plain g kernel
        self.links = [None] + [self.keep[i - 1] + 1 if self.keep[i] - self.keep[i - 1] == 2
                               else None for i in range(1, self.p)]

    def rho(self) -> float:
        return decay_ratio(min(self.lambda_eff, self.lambda_min))

    def cost(self, caps: Sequence[int]) -> int:
        sizes = [c + 1 for c in caps]
        if len(sizes) == 1:
            return sizes[0]
        total = 0
        for i in range(1, self.p):
            a, b = sizes[i - 1], sizes[i]
            total += a * b
            if self.links[i] is not None:
                total += min(a, b) * (a + b)
        return int(total)

    def _ends(self, cap_first: int, cap_last: int):
        L = end_sum_logs(self.beta[0], cap_first) if self.left else log_g(cap_first)
        R = end_sum_logs(self.beta[-1], cap_last) if self.right else log_g(cap_last)
        return L, R

    def initial_caps(self) -> list:
        """Per-coordinate starting caps from the slow mode of the chain.

        Along the Perron vector z of the associated matrix the index of edge k
        has mean about 2 |beta_k| z_k z_(k+1) / lambda; edges away from the
        slow mode only need a short range.
        """
        return [int(min(16 + math.ceil(self.scale[k]), 4096)) for k in self.keep]

    def evaluate(self, caps: Sequence[int]) -> tuple:
        """Signed sum, absolute sum and absolute marginals over the kept box.

        The marginal of coordinate k at index b is the absolute sum over all
        multi-indices in the box with b_k = b (log scale).
        """
        caps = [int(c) for c in caps]
        assert len(caps) == self.p
        # the summed-out edges give positive factors, so the absolute series
        # of the rearranged sum only takes absolute values of the coefficients
        L, R = self._ends(caps[0], caps[-1])
        coefs = [_coef_logs(self.beta[k], c) for k, c in zip(self.keep, caps)]
        kernels = [None] * self.p
        for i in range(1, self.p):
            if self.links[i] is not None:
                kernels[i] = _interior_kernel_logs(self.beta[self.links[i]],
                                                   caps[i - 1] + 1, caps[i] + 1)
        fs = coefs[0][0] + L
        sg = coefs[0][1]
        fa = fs
        fwd = [fa]
        for j in range(1, self.p):
            logy, sy = _transfer(np.vstack([fs, fa]), np.vstack([sg, np.ones_like(sg)]),
                                 caps[j] + 1, kernels[j])
            lc, sgc = coefs[j]
            fs, sg, fa = logy[0] + lc, sy[0] * sgc, logy[1] + lc
            fwd.append(fa)
        S = _signed_logsum(fs + R, sg)
        total = float(np.exp(logsumexp(fa + R)))
        bwd = [None] * self.p
        bwd[-1] = R
        for j in range(self.p - 2, -1, -1):
            h = bwd[j + 1] + coefs[j + 1][0]
            K = None if kernels[j + 1] is None else kernels[j + 1].T
            bwd[j] = _transfer(h, np.ones_like(h), caps[j] + 1, K)[0][0]
        margins = [f + h for f, h in zip(fwd, bwd)]
        return S, total, margins


def _face_tail(margin: np.ndarray) -> float:
    """Tail beyond the cap of one coordinate, from its marginal near the cap.

    The marginal is continued geometrically with its average ratio over the
    last eighth of the range; returns inf while it is not yet decreasing.
    """
    N = len(margin) - 1
    last = margin[-1]
    if not np.isfinite(last):
        return 0.0
    d = max(1, N // 8)
    if N < d or not np.isfinite(margin[N - d]):
        return math.inf
    log_r = (last - margin[N - d]) / d
    if log_r >= 0.0:
        return math.inf
    r = math.exp(log_r)
    return math.exp(last) * r / (1.0 - r)


def _block_dets(beta: np.ndarray) -> float:
    return math.sqrt(max(sturm_sequence(SymTridiag.unit(beta), 0.0)[-1], 0.0))


def _split_blocks(beta: np.ndarray) -> list:
    """Split the chain at zero couplings; returns lists of nonzero couplings."""
    blocks, cur = [], []
    for b in beta:
        if abs(b) <= ZERO_COUPLING:
            blocks.append(cur)
            cur = []
        else:
            cur.append(float(b))
    blocks.append(cur)
    return blocks


def _sum_block(beta: list, tol: float, budget: int, resum: bool,
               caps: Optional[tuple]) -> dict:
    """Evaluate one block to absolute tolerance ``tol`` on its measure."""
    m = len(beta)
    if m == 0:
        # an isolated generator is a constant factor, not a series
        return dict(value=0.5, tail=0.0, terms=0, S=1.0, rho=0.5,
                    lam=1.0, caps=())
    det = _block_dets(np.asarray(beta))
    pref = det / 2.0 ** (m + 1)
    if caps is not None:
        chain = _Chain(beta, resum=False)
        rho = chain.rho()
        terms = chain.cost(caps)
        if terms > budget:
            raise BudgetExceeded(f"fixed caps need {terms} terms, budget {budget}")
        S, _, margins = chain.evaluate(caps)
        layer = float(sum(np.exp(mg[-1]) for mg in margins))
        tail = layer * rho / (1.0 - rho)
        return dict(value=pref * S, tail=pref * tail, terms=terms, S=S, rho=rho,
                    lam=chain.lambda_min, caps=tuple(caps))
    if m == 1 and resum:
        # the whole series is the end sum F(0), known in closed form
        S = math.exp(end_sum_logs(beta[0], 0)[0])
        return dict(value=pref * S, tail=0.0, terms=1, S=S, rho=decay_ratio(1.0 - abs(beta[0])),
                    lam=1.0 - abs(beta[0]), caps=(0,))
    chain = _Chain(beta, resum=resum)
    rho = chain.rho()
    tol_S = tol / pref
    caps_now = chain.initial_caps()
    used = 0
    best = None
    history = []
    while True:
        cost = chain.cost(caps_now)
        if used + cost > budget:
            raise BudgetExceeded(
                f"series needs more than {budget} terms "
                f"(lambda_eff={chain.lambda_eff:.3g})", partial=best)
        S, total, margins = chain.evaluate(caps_now)
        used += cost
        if not math.isfinite(S) or not math.isfinite(total):
            raise NonFiniteTerm("non-finite partial sum")
        history.append(S)
        faces = [_face_tail(mg) for mg in margins]
        tail = min(sum(faces), _signed_tail(history, total))
        best = dict(value=pref * S, tail=pref * tail, terms=used, S=S, rho=rho,
                    lam=chain.lambda_min, caps=tuple(caps_now))
        if tail <= tol_S:
            return best
        share = tol_S / len(faces)
        grow = [k for k, f in enumerate(faces) if f > share] or list(range(len(faces)))
        for k in grow:
            caps_now[k] = int(math.ceil(caps_now[k] * 1.5)) + 1


def _signed_tail(history: list, total: float) -> float:
    """Tail of the signed sum extrapolated from successive partial sums.

    Alternating terms cancel inside each outer layer, so the signed partial
    sums often settle long before the absolute tail is small.  Needs three
    successive differences that shrink; the last one is extended geometrically
    with the observed ratio.  Returns inf when there is no such evidence.
    """
    if len(history) < 4:
        return math.inf
    d = np.abs(np.diff(history[-4:]))
    floor = 4.0 * np.finfo(float).eps * total
    d = np.maximum(d, floor)
    if not (d[2] <= d[1] <= d[0]):
        return math.inf
    r = d[2] / d[1]
    if r >= 0.9:
        return math.inf
    return float(d[2] * max(r, 0.1) / (1.0 - r))


def _combine_blocks(parts: list, abs_det: Optional[float], n: int) -> tuple:
    value = 1.0
    for p in parts:
        value *= p["value"]
    err = 0.0
    for k, p in enumerate(parts):
        other = 1.0
        for j, q in enumerate(parts):
            if j != k:
                other *= abs(q["value"]) + q["tail"]
        err += p["tail"] * other
    if abs_det is not None:
        # rescale from the Sturm determinant to the supplied one
        det_blocks = 1.0
        for p in parts:
            det_blocks *= 1.0 if p["S"] == 0 else p["value"] / p["S"] * 2.0 ** (p["m"] + 1)
        if det_blocks > 0:
            ratio = abs_det / det_blocks
            value *= ratio
            err *= ratio
    return value, err


def t_beta(beta, abs_det: Optional[float] = None,
           spec: Optional[TruncationSpec] = None, resum_ends: bool = True) -> MeasureResult:
    """Normalized solid angle of a cone with tridiagonal Gram matrix.

    ``beta`` holds the n-1 couplings; ``abs_det`` is |det V| (defaults to the
    square root of the Gram determinant).  Zero couplings split the chain into
    orthogonal blocks whose measures multiply.
    """
    bv = _as_beta(beta)
    spec = spec or TruncationSpec()
    b = np.array(bv.beta, dtype=float)
    n = bv.n
    if n == 1:
        return MeasureResult.from_raw(0.5, 0.0, "t_beta", terms_used=1,
                                      error_model=ErrorModel(1.0, 0.5, 0.0, 1))
    T = SymTridiag.unit(b)
    if not is_positive_definite(T.dense(), tol=0.0) or np.any(np.abs(b) >= 1.0):
        raise NotPositiveDefinite("tridiagonal Gram matrix is not positive definite")
    lam = tridiag_lambda_min(T)
    caps = spec.caps_for(n - 1)
    blocks = _split_blocks(b)
    nblocks = sum(1 for blk in blocks if blk)
    tol_block = spec.target_tol / max(nblocks, 1)
    parts, used = [], 0
    offset = 0
    for k, blk in enumerate(blocks):
        bcaps = None if caps is None else caps[offset:offset + len(blk)]
        offset += len(blk) + 1
        try:
            part = _sum_block(blk, tol_block, spec.max_terms - used, resum_ends, bcaps)
        except BudgetExceeded as exc:
            partial = None
            rest = blocks[k + 1:]
            if exc.partial is not None and not any(rest):
                done = parts + [dict(exc.partial, m=len(blk))]
                done += [dict(value=0.5, tail=0.0, S=1.0, m=0)] * len(rest)
                v, e = _combine_blocks(done, abs_det, n)
                partial = MeasureResult(value=v, abs_error_estimate=e, method="t_beta",
                                        terms_used=used + exc.partial["terms"], warning=True)
            raise BudgetExceeded(str(exc), partial=partial) from None
        part["m"] = len(blk)
        used += part["terms"]
        parts.append(part)
    value, err = _combine_blocks(parts, abs_det, n)
    rho = max(p["rho"] for p in parts)
    if rho <= 1.0 - lam:
        rho = decay_ratio(lam)
    used = max(used, 1)
    model = ErrorModel(lambda_min=lam, rho=rho, tail_estimate=err, terms_used=used,
                       caps=tuple(c for p in parts for c in p["caps"]))
    return MeasureResult.from_raw(value, err, "t_beta", terms_used=used,
                                  error_model=model)


def t_beta_reference(beta, caps: Sequence[int]) -> float:
    """Brute-force partial sum S over the box b_i <= caps[i] (testing oracle).

    Enumerates every multi-index and sums in log-magnitude form; exponential
    in n and meant for small boxes only.
    """
    b = np.asarray(_as_beta(beta).beta, dtype=float)
    m = len(b)
    caps = [int(c) for c in caps]
    lg = log_g(2 * max(caps) + 2)
    grids = np.meshgrid(*[np.arange(c + 1) for c in caps], indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    logs = np.zeros(len(idx))
    sgn = np.ones(len(idx))
    for j in range(m):
        lc, sg = _coef_logs(b[j], caps[j])
        logs += lc[idx[:, j]]
        sgn *= sg[idx[:, j]]
    padded = np.hstack([np.zeros((len(idx), 1), int), idx, np.zeros((len(idx), 1), int)])
    for e in range(m + 1):
        logs += lg[padded[:, e] + padded[:, e + 1]]
    return _signed_logsum(logs, sgn)


# ---------------------------------------------------------------------------
# General series over all pairs


@lru_cache(maxsize=64)
def _compositions(total: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``total``."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    # stars and bars: choose positions of parts-1 bars among total+parts-1 slots
    bars = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(total + parts - 1), parts - 1)),
        dtype=np.int64,
    ).reshape(-1, parts - 1)
    edges = np.hstack([np.full((len(bars), 1), -1), bars,
                       np.full((len(bars), 1), total + parts - 1)])
    out = np.diff(edges, axis=1) - 1
    out.setflags(write=False)
    return out


def _alpha_terms(idx: np.ndarray, log2a: np.ndarray, neg: np.ndarray,
                 incidence: np.ndarray, n: int) -> tuple:
    deg = idx @ incidence  # degree of each generator
    kmax = int(deg.max()) if deg.size else 0
    lg = log_g(kmax)
    lf = log_factorial(int(idx.max()) if idx.size else 0)
    logs = idx @ log2a - lf[idx].sum(axis=1) + lg[deg].sum(axis=1)
    odd = (idx[:, neg] % 2).sum(axis=1) % 2
    return logs, np.where(odd == 1, -1.0, 1.0)


def t_alpha(K, spec: Optional[TruncationSpec] = None) -> MeasureResult:
    """Normalized solid angle of a simplicial cone by the all-pairs series.

    ``K`` is a SimplicialCone (or anything with ``gram`` and ``abs_det``).
    Terms are enumerated by total degree over the nonzero couplings; with
    ``spec.caps`` the sum is instead taken over the box a_ij <= caps.
    """
    spec = spec or TruncationSpec()
    G = np.asarray(K.gram, dtype=float)
    n = G.shape[0]
    abs_det = float(K.abs_det)
    av = AlphaVector.from_gram(G)
    M = av.associated_matrix()
    if not is_positive_definite(M):
        raise NotPositiveDefinite("associated matrix is not positive definite")
    lam = smallest_eigenvalue_dense(M) if n > 1 else 1.0
    rho = decay_ratio(lam) if n > 1 else 0.5
    pref = abs_det / 2.0 ** n
    alpha = np.array(av.alpha)
    pairs = av.pairs()
    active = [k for k, a in enumerate(alpha) if abs(a) > ZERO_COUPLING]
    if not active:
        model = ErrorModel(lam, rho, 0.0, 1)
        return MeasureResult.from_raw(pref, 0.0, "t_alpha", terms_used=1, error_model=model)
    act = np.array(active)
    log2a = np.log(2.0 * np.abs(alpha[act]))
    neg = alpha[act] > 0  # coefficient sign is sgn(-alpha)^a
    incidence = np.zeros((len(act), n), dtype=np.int64)
    for r, k in enumerate(act):
        i, j = pairs[k]
        incidence[r, i] = incidence[r, j] = 1
    caps = spec.caps_for(len(alpha))
    if caps is not None:
        kc = [caps[k] for k in act]
        if int(np.prod([c + 1 for c in kc], dtype=float)) > spec.max_terms:
            raise BudgetExceeded("fixed caps exceed max_terms")
        grids = np.meshgrid(*[np.arange(c + 1) for c in kc], indexing="ij")
        idx = np.stack([g.ravel() for g in grids], axis=1)
        logs, sg = _alpha_terms(idx, log2a, neg, incidence, n)
        S = _signed_logsum(logs, sg)
        outer = np.any(idx == np.array(kc), axis=1)
        layer = float(np.exp(logsumexp(logs[outer]))) if outer.any() else 0.0
        tail = pref * layer * rho / (1 - rho)
        model = ErrorModel(lam, rho, tail, len(idx), tuple(caps))
        return MeasureResult.from_raw(pref * S, tail, "t_alpha", terms_used=len(idx),
                                      error_model=model)
    tol_S = spec.target_tol / pref
    S = 0.0
    used = 0
    shells = []
    D = 0
    while True:
        idx = _compositions(D, len(act))
        if used + len(idx) > spec.max_terms:
            tail = pref * max(shells[-2:]) * rho / (1 - rho)
            partial = MeasureResult.from_raw(
                pref * S, tail, "t_alpha", terms_used=used, warning=True,
                error_model=ErrorModel(lam, rho, tail, used))
            raise BudgetExceeded(f"t_alpha needs more than {spec.max_terms} terms",
                                 partial=partial)
        logs, sg = _alpha_terms(idx, log2a, neg, incidence, n)
        S += _signed_logsum(logs, sg)
        shells.append(float(np.exp(logsumexp(logs))))
        used += len(idx)
        if not math.isfinite(S):
            raise NonFiniteTerm("non-finite partial sum")
        if D >= 3:
            tail_S = max(shells[-2:]) * rho / (1 - rho)
            if tail_S <= tol_S:
                break
        D += 1
    tail = pref * tail_S
    model = ErrorModel(lam, rho, tail, used, (D,))
    return MeasureResult.from_raw(pref * S, tail, "t_alpha", terms_used=used,
                                  error_model=model)


# ---------------------------------------------------------------------------
# Coefficient ratios and the convergence domain


def coefficient_ratio(b: Sequence[int], i: int) -> float:
    """f_i(b) = A_{b+e_i} / A_b for the chain coefficients (index i is 0-based).

    A_b = prod_j (-2)^{b_j}/b_j! * prod_e Gamma((1 + b_e + b_{e+1})/2) with
    b_0 = b_n = 0, so only the two Gamma factors touching b_i change.
    """
    b = [int(x) for x in b]
    if not 0 <= i < len(b):
        raise IndexError(i)
    padded = [0] + b + [0]
    k = i + 1
    out = -2.0 / (b[i] + 1)
    for s in (padded[k - 1] + padded[k], padded[k] + padded[k + 1]):
        out *= math.exp(math.lgamma((2 + s) / 2) - math.lgamma((1 + s) / 2))
    return out


def psi(b: Sequence[float], i: int) -> float:
    """Limit of the coefficient ratio along rays: -sqrt((b_{i-1}+b_i)(b_i+b_{i+1}))/b_i.

    ``i`` is 0-based; missing neighbours count as zero.
    """
    b = [float(x) for x in b]
    if not 0 <= i < len(b):
        raise IndexError(i)
    if not b[i] > 0:
        raise ZeroDenominator("psi requires b_i > 0")
    left = b[i - 1] if i > 0 else 0.0
    right = b[i + 1] if i + 1 < len(b) else 0.0
    return -math.sqrt((left + b[i]) * (b[i] + right)) / b[i]


def on_convergence_boundary(x: Sequence[float]) -> float:
    """Determinant of the unit tridiagonal matrix with off-diagonal -|x_i|.

    It vanishes exactly on the boundary of the region of absolute convergence.
    """
    T = SymTridiag.unit([-abs(float(v)) for v in x])
    return float(sturm_sequence(T, 0.0)[-1])


def boundary_point(beta) -> np.ndarray:
    """beta / (1 - lambda_min), a point on the convergence boundary."""
    b = np.array(_as_beta(beta).beta, dtype=float)
    lam = tridiag_lambda_min(SymTridiag.unit(b))
    return b / (1.0 - lam)


# ---------------------------------------------------------------------------
# Truncation error probe


def truncation_errors(beta, N: Sequence[int], L: int,
                      max_terms: int = 50_000_000) -> tuple:
    """E(N + l) for l = 0..L, plus the horizon used.

    E(N) is the sum of |A_b beta^b| over multi-indices with b_i >= N_i for at
    least one i, truncated at a far horizon
    H = max(N) + L + max(80, ceil(30 / lambda_min)).
    """
    b = np.array(_as_beta(beta).beta, dtype=float)
    m = len(b)
    if m == 0:
        return np.zeros(L + 1), 0
    N = [int(N)] * m if np.isscalar(N) else [int(v) for v in N]
    if len(N) != m:
        raise DimensionMismatch(f"expected {m} caps")
    T = SymTridiag.unit(b)
    if np.any(np.abs(b) >= 1.0) or not is_positive_definite(T.dense(), tol=0.0):
        raise NotPositiveDefinite("tridiagonal Gram matrix is not positive definite")
    lam = tridiag_lambda_min(T)
    H = max(N) + L + max(80, int(math.ceil(30.0 / lam)))
    # all shifts share one kernel pass
    cost = (H + 1) ** 2 * (m - 1) if m > 1 else H + 1
    if cost > max_terms:
        raise BudgetExceeded(f"probe needs {cost} terms, budget {max_terms}")
    lg = log_g(H)
    shifts = np.arange(L + 1)
    grid = np.arange(H + 1)
    lc, _ = _coef_logs(b[0], H, absolute=True)
    base = lc + lg
    if m == 1:
        out = [float(np.exp(logsumexp((base + lg)[N[0] + l:]))) if N[0] + l <= H else 0.0
               for l in shifts]
        return np.array(out), H
    # two rows per shift: no coordinate beyond its cap yet / some coordinate beyond
    hit = grid[None, :] >= (N[0] + shifts)[:, None]
    rows = np.vstack([np.where(hit, -np.inf, base), np.where(hit, base, -np.inf)])
    for j in range(1, m):
        logy, _ = _transfer(rows, np.ones_like(rows), H + 1)
        lc, _ = _coef_logs(b[j], H, absolute=True)
        free, done = logy[: L + 1], logy[L + 1:]
        hit = grid[None, :] >= (N[j] + shifts)[:, None]
        new_free = np.where(hit, -np.inf, free) + lc
        new_done = np.logaddexp(done, np.where(hit, free, -np.inf)) + lc
        rows = np.vstack([new_free, new_done])
    E = np.exp(logsumexp(rows[L + 1:] + lg[None, :], axis=1))
    return E, H


def truncation_decay_probe(beta, N: Sequence[int], L: int,
                           max_terms: int = 50_000_000) -> list:
    """Ratios E(N + l)/E(N) for l = 0..L (all zero when E(N) = 0)."""
    E, _ = truncation_errors(beta, N, L, max_terms)
    if E[0] == 0.0:
        return [0.0] * (L + 1)
    return [float(e / E[0]) for e in E]
