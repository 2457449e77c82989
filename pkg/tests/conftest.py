import numpy as np
import pytest
from scipy import linalg

from ste_lab.copulas import PairCopula
from ste_lab.dvine import DVineModel


def var1_stationary_cov(A, Q):
    return linalg.solve_discrete_lyapunov(np.asarray(A), np.asarray(Q))


def var1_panel_cov(A, Q, k, ell):
    """Covariance of (y_t, y_t-1..y_t-l, x_t-k..x_t-1, x_t) for a VAR(1) in (x, y)."""
    A = np.asarray(A, float)
    S = var1_stationary_cov(A, Q)

    def lag_cov(h):  # Cov(Z_{t+h}, Z_t)
        return np.linalg.matrix_power(A, h) @ S if h >= 0 else (np.linalg.matrix_power(A, -h) @ S).T

    # (component, lag) per panel position; component 0 = x, 1 = y
    spec = [(1, 0)] + [(1, i) for i in range(1, ell + 1)] + [(0, j) for j in range(k, 0, -1)] + [(0, 0)]
    d = len(spec)
    C = np.empty((d, d))
    for a, (ca, la) in enumerate(spec):
        for b, (cb, lb) in enumerate(spec):
            C[a, b] = lag_cov(lb - la)[ca, cb]
    return C


def partial_corr(C, a, b, given):
    idx = [a, b] + list(given)
    P = np.linalg.inv(C[np.ix_(idx, idx)])
    return -P[0, 1] / np.sqrt(P[0, 0] * P[1, 1])


def gaussian_dvine_from_cov(C, k, ell):
    """The D-vine whose Gaussian pair copulas carry the partial correlations of C."""
    d = C.shape[0]
    C = C / np.sqrt(np.outer(np.diag(C), np.diag(C)))
    trees = []
    for L in range(1, d):
        trees.append(tuple(PairCopula("gaussian", (partial_corr(C, i, i + L, range(i + 1, i + L)),))
                           for i in range(d - L)))
    return DVineModel(k, ell, tuple(trees))


RANDOM_FAMILIES = ("gaussian", "t", "clayton", "gumbel", "frank", "joe", "indep")


def random_copula(rng):
    fam = RANDOM_FAMILIES[rng.integers(len(RANDOM_FAMILIES))]
    rot = int(rng.choice([0, 90, 180, 270])) if fam in ("clayton", "gumbel", "joe") else 0
    tau = rng.uniform(0.1, 0.7)
    par = {"gaussian": (np.sin(np.pi * tau / 2) * rng.choice([-1, 1]),),
           "t": (np.sin(np.pi * tau / 2) * rng.choice([-1, 1]), rng.uniform(3, 20)),
           "clayton": (2 * tau / (1 - tau),), "gumbel": (1 / (1 - tau),),
           "frank": (rng.uniform(1, 12) * rng.choice([-1, 1]),), "joe": (1 + 2 * tau / (1 - tau),),
           "indep": ()}[fam]
    return PairCopula(fam, par, rot)


def random_vine(k, ell, rng):
    d = k + ell + 2
    return DVineModel(k, ell, tuple(tuple(random_copula(rng) for _ in range(d - L)) for L in range(1, d)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# PASS/FAIL lines from the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LOG: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line(line)
