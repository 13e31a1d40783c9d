import numpy as np
import pytest

from solid_angle import make_simplicial


def random_cone(rng: np.random.Generator, n: int):
    """Simplicial cone with standard Gaussian generators (redrawn if nearly singular)."""
    while True:
        try:
            return make_simplicial(rng.standard_normal((n, n)))
        except ValueError:
            continue


def chain_generators(beta) -> np.ndarray:
    """Rows whose Gram matrix is the unit tridiagonal matrix with off-diagonal beta."""
    beta = np.asarray(beta, dtype=float)
    G = np.eye(len(beta) + 1)
    idx = np.arange(len(beta))
    G[idx, idx + 1] = G[idx + 1, idx] = beta
    return np.linalg.cholesky(G)


def random_chain(rng: np.random.Generator, n: int, scale: float = 0.7) -> np.ndarray:
    """Couplings of a positive-definite unit tridiagonal matrix."""
    while True:
        beta = rng.uniform(-scale, scale, n - 1)
        G = np.eye(n) + np.diag(beta, 1) + np.diag(beta, -1)
        if np.linalg.eigvalsh(G)[0] > 0.05:
            return beta


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def signed_indicator_mismatches(K, pieces, X: np.ndarray, tol: float = 1e-7) -> tuple:
    """Compare sum_i s_i [x in C_i] with [x in K] at the rows of X.

    Points within ``tol`` of a boundary of K or of any piece are skipped.
    Returns (points checked, mismatches).
    """
    from solid_angle import contains_points

    whole = contains_points(K, X, tol)
    clean = whole != 0
    total = np.zeros(len(X), dtype=int)
    for p in pieces:
        codes = contains_points(p.cone, X, tol)
        clean &= codes != 0
        total += p.sign * (codes == 1)
    bad = clean & (total != (whole == 1))
    return int(np.count_nonzero(clean)), int(np.count_nonzero(bad))


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
