"""D-vine copula over a lag-embedded pair of uniform series.

Variables sit on a path in the order

    y_t, y_{t-1}, ..., y_{t-l}, x_{t-k}, ..., x_{t-1}, x_t

so position ``p`` holds the p-th column of a :class:`LaggedPanel`.  Edge ``(L, i)``
joins positions ``i`` and ``i + L`` given the positions strictly between them.
Its copula is evaluated at ``(a, b)`` with ``a = F(v_i | between)`` as the first
argument and ``b = F(v_{i+L} | between)`` as the second.

Transfer entropy from x to y is the sum of the expected log densities of the
edges joining ``y_t`` to each x lag; the reverse direction uses the edges
joining ``x_t`` to each y lag.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .copulas import FAMILIES, INDEPENDENCE, PairCopula, select_family
from .errors import ConfigError, DataError, FitError, NumericalError, TooShortError

X_TO_Y = "X->Y"
Y_TO_X = "Y->X"
DIRECTIONS = (X_TO_Y, Y_TO_X)

MIN_EXTRA_ROWS = 20


def normalize_direction(direction: str) -> str:
    d = direction.replace(" ", "").replace("→", "->").upper()
    if d in ("X->Y", "XY", "FORWARD"):
        return X_TO_Y
    if d in ("Y->X", "YX", "REVERSE", "BACKWARD"):
        return Y_TO_X
    raise ConfigError(f"unknown direction {direction!r}")


def variable_labels(k: int, ell: int) -> list[str]:
    ys = ["y_t"] + [f"y_t-{i}" for i in range(1, ell + 1)]
    xs = [f"x_t-{j}" for j in range(k, 0, -1)] + ["x_t"]
    return ys + xs


# ---------------------------------------------------------------------------
# lagged panel


@dataclass(frozen=True)
class LaggedPanel:
    data: np.ndarray  # (rows, k + l + 2)
    k: int
    ell: int

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[1] != self.k + self.ell + 2:
            raise ConfigError(f"panel needs {self.k + self.ell + 2} columns, got shape {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def labels(self) -> list[str]:
        return variable_labels(self.k, self.ell)

    def __len__(self):
        return self.n


def build_panel(uy, ux, k: int, ell: int) -> LaggedPanel:
    """Lag-embed two PIT series; the first ``max(k, l)`` time points are dropped."""
    uy = np.asarray(uy, dtype=float)
    ux = np.asarray(ux, dtype=float)
    if k < 1 or ell < 1 or int(k) != k or int(ell) != ell:
        raise ConfigError(f"lags must be positive integers, got k={k}, l={ell}")
    if uy.shape != ux.shape or uy.ndim != 1:
        raise DataError(f"series must be one-dimensional with equal length, got {uy.shape} and {ux.shape}")
    n = len(uy)
    p = max(k, ell)
    if n <= p + MIN_EXTRA_ROWS:
        raise TooShortError(f"{n} observations is too short for lags k={k}, l={ell}")
    if np.any(~(uy > 0) | ~(uy < 1)) or np.any(~(ux > 0) | ~(ux < 1)):
        raise DataError("panel entries must lie strictly inside (0, 1)")
    t = np.arange(p, n)
    cols = [uy[t]] + [uy[t - i] for i in range(1, ell + 1)]
    cols += [ux[t - j] for j in range(k, 0, -1)] + [ux[t]]
    return LaggedPanel(np.column_stack(cols), int(k), int(ell))


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class DVineModel:
    """``trees[L - 1][i]`` is the copula of edge ``(L, i)``."""

    k: int
    ell: int
    trees: tuple
    n_fit: int = 0
    order: tuple = field(default=())

    def __post_init__(self):
        d = self.d
        trees = tuple(tuple(level) for level in self.trees)
        if len(trees) != d - 1 or any(len(trees[L - 1]) != d - L for L in range(1, d)):
            raise ConfigError(f"a {d}-variable D-vine needs levels of sizes {list(range(d - 1, 0, -1))}")
        object.__setattr__(self, "trees", trees)
        if not self.order:
            object.__setattr__(self, "order", tuple(variable_labels(self.k, self.ell)))

    @property
    def d(self) -> int:
        return self.k + self.ell + 2

    def edge(self, level: int, i: int) -> PairCopula:
        return self.trees[level - 1][i]

    def edges(self):
        for L, level in enumerate(self.trees, start=1):
            for i, c in enumerate(level):
                yield (L, i), c

    def with_edges(self, updates: dict) -> DVineModel:
        trees = [list(level) for level in self.trees]
        for (L, i), c in updates.items():
            trees[L - 1][i] = c
        return replace(self, trees=tuple(tuple(level) for level in trees))

    def summary(self) -> list[str]:
        lab = self.order
        out = []
        for (L, i), c in self.edges():
            cond = ",".join(lab[i + 1 : i + L])
            name = f"{lab[i]},{lab[i + L]}" + (f"|{cond}" if cond else "")
            out.append(f"{name}: {c}")
        return out

    def to_dict(self):
        return {
            "k": self.k,
            "ell": self.ell,
            "order": list(self.order),
            "n_fit": self.n_fit,
            "trees": [[c.to_dict() for c in level] for level in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        trees = tuple(tuple(PairCopula.from_dict(c) for c in level) for level in d["trees"])
        return cls(int(d["k"]), int(d["ell"]), trees, int(d.get("n_fit", 0)), tuple(d.get("order", ())))

    # -- density -------------------------------------------------------------

    def edge_logpdfs(self, rows: np.ndarray, max_level: int | None = None) -> dict:
        """Per-edge log densities at each row, conditionals recomputed by h-functions."""
        return _edge_logpdfs(self.trees, np.asarray(rows, dtype=float), max_level)

    def logpdf(self, rows) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        terms = self.edge_logpdfs(rows)
        return np.sum(list(terms.values()), axis=0) if terms else np.zeros(rows.shape[0])

    def direction_edges(self, direction: str) -> list[tuple[int, int]]:
        return direction_edges(self.k, self.ell, direction)

    def submodel(self, lo: int, hi: int) -> "SubVine":
        """The D-vine on the contiguous positions ``lo..hi`` (inclusive)."""
        if not 0 <= lo <= hi < self.d:
            raise ConfigError(f"invalid position range {lo}..{hi} for d={self.d}")
        trees = tuple(tuple(self.trees[L - 1][lo : hi - L + 1]) for L in range(1, hi - lo + 1))
        return SubVine(trees, hi - lo + 1)


@dataclass(frozen=True)
class SubVine:
    """A D-vine on a contiguous block of positions of a larger vine."""

    trees: tuple
    d: int

    def logpdf(self, rows) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.shape[1] != self.d:
            raise ConfigError(f"expected {self.d} columns, got {rows.shape[1]}")
        terms = _edge_logpdfs(self.trees, rows, None)
        return np.sum(list(terms.values()), axis=0) if terms else np.zeros(rows.shape[0])


def direction_edges(k: int, ell: int, direction: str) -> list[tuple[int, int]]:
    """Edges whose expected log densities add up to the transfer entropy."""
    d = k + ell + 2
    if normalize_direction(direction) == X_TO_Y:
        # y_t (position 0) with x_{t-j} (position d-1-j), j = 1..k
        return [(d - 1 - j, 0) for j in range(1, k + 1)]
    # x_t (position d-1) with y_{t-i} (position i), i = 1..l
    return [(d - 1 - i, i) for i in range(1, ell + 1)]


def _edge_logpdfs(trees, rows, max_level):
    d = len(trees) + 1
    if rows.shape[1] != d:
        raise ConfigError(f"expected {d} columns, got {rows.shape[1]}")
    top = d - 1 if max_level is None else min(max_level, d - 1)
    a = [rows[:, i] for i in range(d - 1)]
    b = [rows[:, i + 1] for i in range(d - 1)]
    out = {}
    for L in range(1, top + 1):
        level = trees[L - 1]
        for i, c in enumerate(level):
            if not c.is_independence:
                out[(L, i)] = c.logpdf(a[i], b[i])
        if L == top:
            break
        a, b = _next_level(level, a, b)
    return out


def _next_level(level, a, b):
    # a[i] <- F(v_i | v_{i+1..i+L}),  b[i] <- F(v_{i+L+1} | v_{i+1..i+L})
    m = len(level) - 1
    new_a = [a[i] if level[i].is_independence else level[i].h1(a[i], b[i]) for i in range(m)]
    new_b = [b[i + 1] if level[i + 1].is_independence else level[i + 1].h2(b[i + 1], a[i + 1])
             for i in range(m)]
    return new_a, new_b


# ---------------------------------------------------------------------------
# fitting


def fit_dvine(panel: LaggedPanel, families=FAMILIES, level: float = 0.05) -> DVineModel:
    """Tree-by-tree sequential estimation with per-edge family selection."""
    data = panel.data
    d = panel.d
    a = [data[:, i] for i in range(d - 1)]
    b = [data[:, i + 1] for i in range(d - 1)]
    trees = []
    for L in range(1, d):
        fitted = []
        for i in range(d - L):
            try:
                fitted.append(select_family(a[i], b[i], families, level).copula)
            except NumericalError as exc:
                raise FitError(f"edge ({L}, {i}): {exc}", edge=(L, i),
                               **getattr(exc, "diagnostics", {})) from exc
        trees.append(tuple(fitted))
        if L == d - 1:
            break
        a, b = _next_level(fitted, a, b)
    return DVineModel(panel.k, panel.ell, tuple(trees), panel.n)


# ---------------------------------------------------------------------------
# simulation and transfer entropy


def simulate(model: DVineModel, n: int, seed=None) -> LaggedPanel:
    """Inverse Rosenblatt sampling along the path."""
    rng = np.random.default_rng(seed)
    d = model.d
    w = rng.uniform(size=(n, d))
    out = np.empty((n, d))
    out[:, 0] = w[:, 0]
    # A[j] holds F(v_j | v_{j+1..i-1}) while variable i is drawn.
    A = [out[:, 0]]
    for i in range(1, d):
        p = w[:, i]
        B = []
        for j in range(i):
            c = model.edge(i - j, j)
            if not c.is_independence:
                p = c.hinv2(p, A[j])
            B.append(p)  # F(v_i | v_{j+1..i-1})
        out[:, i] = p
        for j in range(i):
            c = model.edge(i - j, j)
            if not c.is_independence:
                A[j] = c.h1(A[j], B[j])
        A.append(out[:, i])
    return LaggedPanel(out, model.k, model.ell)


@dataclass(frozen=True)
class TeEstimate:
    value: float
    raw: float
    se: float
    clamped: bool
    exact_zero: bool
    n_mc: int

    def __float__(self):
        return self.value


def te_from_vine(model: DVineModel, direction: str, n_mc: int = 10_000, seed=None) -> TeEstimate:
    """Monte-Carlo transfer entropy in one direction from a fitted vine."""
    edges = model.direction_edges(direction)
    if all(model.edge(L, i).is_independence for L, i in edges):
        return TeEstimate(0.0, 0.0, 0.0, False, True, 0)
    if n_mc < 2:
        raise ConfigError("Monte-Carlo size must be at least 2")
    rows = simulate(model, n_mc, seed).data
    top = max(L for L, _ in edges)
    terms = model.edge_logpdfs(rows, max_level=top)
    total = np.zeros(n_mc)
    for e in edges:
        if e in terms:
            total += terms[e]
    if not np.all(np.isfinite(total)):
        raise NumericalError("non-finite log density in Monte-Carlo transfer entropy")
    raw = float(total.mean())
    se = float(total.std(ddof=1) / math.sqrt(n_mc))
    clamped = raw < 0
    return TeEstimate(max(raw, 0.0), raw, se, clamped, False, int(n_mc))


def null_model(model: DVineModel, direction: str) -> DVineModel:
    """Copy of the vine with the direction's edges set to independence."""
    return model.with_edges({e: INDEPENDENCE for e in model.direction_edges(direction)})
