"""Numerical checks of the spectral homophily theorems and the alignment identity.

Each check decomposes the unnormalized Laplacian densely and scans every
admissible split index by brute force.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from .errors import PreconditionError
from .graph import Graph, homophily_of, unnormalized_laplacian
from .spectral import MatrixKind, ZERO_EIG, eig_full, spectral_coefficients


@dataclass(frozen=True)
class TheoremWitness:
    satisfied: bool
    M: Optional[int]
    lhs: float
    rhs: float
    gap: float
    # low-frequency side of the first theorem; unused (nan) for the second
    low_lhs: float = float("nan")
    low_rhs: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def _binary_balanced(y, n: int, name: str) -> np.ndarray:
    y = np.asarray(y).reshape(-1)
    if len(y) != n:
        raise PreconditionError(f"{name}: length {len(y)} != n={n}")
    if not np.all((y == 0) | (y == 1)):
        raise PreconditionError(f"{name}: labels must be binary")
    if n % 2 or int(y.sum()) != n // 2:
        raise PreconditionError(f"{name}: classes not balanced (sum={int(y.sum())}, n={n})")
    return y.astype(np.float64)


def _spectrum(g: Graph):
    return eig_full(unnormalized_laplacian(g), MatrixKind.LAP_UNNORM)


def check_theorem1(g: Graph, y, y_hat, tol: float = 1e-9, scale: float = 1.0) -> TheoremWitness:
    """Find the first ``M`` where the lower-homophily labelling ``y_hat``
    carries at least ``2*delta*m / (scale * lambda_M * n)`` more
    high-frequency energy than ``y`` (and correspondingly less low-frequency
    energy). ``scale`` plays the same role as in :func:`theorem2_hypothesis`."""
    y = _binary_balanced(y, g.n, "y")
    y_hat = _binary_balanced(y_hat, g.n, "y_hat")
    delta = homophily_of(g, y) - homophily_of(g, y_hat)
    if not delta > 0:
        raise PreconditionError(f"need h(y) > h(y_hat), got delta={delta}")
    es = _spectrum(g)
    c2 = spectral_coefficients(es, y) ** 2
    ch2 = spectral_coefficients(es, y_hat) ** 2
    # suffix sums: tail[M] = sum_{i >= M}
    tail, tail_h = np.cumsum(c2[::-1])[::-1], np.cumsum(ch2[::-1])[::-1]
    head, head_h = np.cumsum(c2) - c2, np.cumsum(ch2) - ch2
    lam = es.values
    best = None
    for M in range(1, g.n):
        if lam[M] <= ZERO_EIG:
            continue
        bound = 2.0 * delta * g.m / (scale * lam[M] * g.n)
        hi_ok = tail_h[M] >= tail[M] + bound - tol
        lo_ok = head_h[M] <= head[M] - bound + tol
        if hi_ok and lo_ok:
            return TheoremWitness(True, M, float(tail_h[M]), float(tail[M] + bound),
                                  float(tail_h[M] - tail[M] - bound),
                                  float(head_h[M]), float(head[M] - bound))
        if best is None:
            best = (M, bound)
    if best is None:
        return TheoremWitness(False, None, float("nan"), float("nan"), float("nan"))
    M, bound = best
    return TheoremWitness(False, None, float(tail_h[M]), float(tail[M] + bound),
                          float(tail_h[M] - tail[M] - bound), float(head_h[M]),
                          float(head[M] - bound))


def theorem2_hypothesis(g: Graph, y, scale: float = 1.0) -> tuple:
    """``(h(y), 1 - scale * lambda_max * n / (8m))``; the theorem needs the
    first below the second.

    ``y^T L y`` counts each cross-class edge once, so ``h = 1 - y^T L y / m``;
    ``scale=2`` gives the threshold consistent with that identity, the
    default keeps the stated ``n / (8m)`` form.
    """
    lam_max = float(_spectrum(g).values[-1])
    return homophily_of(g, y), 1.0 - scale * lam_max * g.n / (8.0 * g.m)


def check_theorem2(g: Graph, y, scale: float = 1.0, tol: float = 1e-9) -> TheoremWitness:
    """First ``M'`` whose high-frequency energy exceeds the rest by more than ``tol``.

    On a connected graph ``c_0^2 = n/4`` is already half of ``||y||^2`` for any
    balanced binary ``y``, so the strict inequality can only appear through
    round-off; ``tol`` keeps such ties from counting as witnesses.
    """
    yv = _binary_balanced(y, g.n, "y")
    h, limit = theorem2_hypothesis(g, y, scale)
    if not h < limit:
        raise PreconditionError(f"hypothesis fails: h={h!r} is not < 1 - lambda_max*n/(8m)={limit!r}")
    es = _spectrum(g)
    c2 = spectral_coefficients(es, yv) ** 2
    tail = np.cumsum(c2[::-1])[::-1]
    head = np.cumsum(c2) - c2
    for M in range(1, g.n):
        if tail[M] > head[M] + tol:
            return TheoremWitness(True, M, float(tail[M]), float(head[M]), float(tail[M] - head[M]))
    M = int(np.argmax(tail[1:] - head[1:])) + 1
    return TheoremWitness(False, None, float(tail[M]), float(head[M]), float(tail[M] - head[M]))


def check_remark1(g: Graph, y) -> float:
    """Spectral energy of a perfectly homophilic labelling outside the Laplacian kernel."""
    h = homophily_of(g, y)
    if abs(h - 1.0) > 1e-12:
        raise PreconditionError(f"remark needs h(y) = 1, got {h}")
    es = _spectrum(g)
    c = spectral_coefficients(es, y)
    return float(np.sum(c[es.values > ZERO_EIG] ** 2))


def homophily_quadratic_residual(g: Graph, y, denominator: str = "2m") -> float:
    """``|h(y) - (1 - y^T L y / D)|`` for a binary labelling, ``D`` in {"2m", "m"}.

    Only ``D = m`` is an identity for ``L = D - A``; ``"2m"`` evaluates the
    stated form and is nonzero whenever a cross-class edge exists.
    """
    yv = np.asarray(y, dtype=np.float64).reshape(-1)
    L = unnormalized_laplacian(g)
    denom = {"2m": 2.0 * g.m, "m": float(g.m)}[denominator]
    return abs(homophily_of(g, y) - (1.0 - float(yv @ (L @ yv)) / denom))


def theorem3_identity(Z_A, Z_B) -> float:
    """Residual of ``sum ||z - z_hat||^2 = 2n - 2 sum z_hat^T z`` for unit rows."""
    Z_A = np.asarray(Z_A, dtype=np.float64)
    Z_B = np.asarray(Z_B, dtype=np.float64)
    if Z_A.shape != Z_B.shape or Z_A.ndim != 2:
        raise PreconditionError(f"shape mismatch {Z_A.shape} vs {Z_B.shape}")
    for name, Z in (("Z_A", Z_A), ("Z_B", Z_B)):
        dev = np.abs(np.linalg.norm(Z, axis=1) - 1.0).max(initial=0.0)
        if dev > 1e-6:
            raise PreconditionError(f"{name} rows must be unit-norm (max deviation {dev:.3g})")
    n = Z_A.shape[0]
    lhs = float(np.sum((Z_A - Z_B) ** 2))
    rhs = 2.0 * n - 2.0 * float(np.sum(Z_A * Z_B))
    return abs(lhs - rhs)
