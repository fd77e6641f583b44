"""Eigen-decompositions, spectral coefficients and per-band distances."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError, PreconditionError
from .graph import Graph, normalized_adjacency

DENSE_LIMIT = 3000
ZERO_EIG = 1e-12


class MatrixKind(str, enum.Enum):
    ADJ_SYM = "adj_sym"
    LAP_SYM = "lap_sym"
    LAP_UNNORM = "lap_unnorm"

    @property
    def descending(self) -> bool:
        return self is MatrixKind.ADJ_SYM


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Eigenpairs of one symmetric graph matrix.

    Column ``i`` of ``vectors`` pairs with ``values[i]``. Laplacian kinds are
    sorted ascending, ``ADJ_SYM`` descending, so index ``i`` always denotes
    the ``i``-th lowest graph frequency.
    """

    kind: MatrixKind
    values: np.ndarray
    vectors: np.ndarray
    complete: bool

    def __post_init__(self):
        for name in ("values", "vectors"):
            a = np.array(getattr(self, name), dtype=np.float64, copy=True)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    def __len__(self) -> int:
        return len(self.values)

    @property
    def frequencies(self) -> np.ndarray:
        """Ascending ``lambda`` view; ``1 - omega`` for ``ADJ_SYM``."""
        if self.kind is MatrixKind.ADJ_SYM:
            return 1.0 - self.values
        return self.values

    def as_adjacency(self) -> "EigenSystem":
        """``ADJ_SYM`` pairs from an ``LAP_SYM`` system via ``omega = 1 - lambda``."""
        if self.kind is MatrixKind.ADJ_SYM:
            return self
        if self.kind is not MatrixKind.LAP_SYM:
            raise PreconditionError("only LAP_SYM systems convert to ADJ_SYM")
        return EigenSystem(MatrixKind.ADJ_SYM, 1.0 - self.values, self.vectors, self.complete)

    def reconstruct(self) -> np.ndarray:
        V = self.vectors
        return (V * self.values) @ V.T


def fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry is positive (first index on ties)."""
    V = np.array(V, dtype=np.float64, copy=True)
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _dense(M) -> np.ndarray:
    if sp.issparse(M):
        return M.toarray()
    return np.asarray(M, dtype=np.float64)


def _order(values: np.ndarray, kind: MatrixKind) -> np.ndarray:
    # stable sort keeps eigh's order inside exact ties
    if kind.descending:
        return np.argsort(-values, kind="stable")
    return np.argsort(values, kind="stable")


def eig_full(M, kind: MatrixKind) -> EigenSystem:
    """Complete dense eigen-decomposition of a symmetric matrix."""
    kind = MatrixKind(kind)
    A = _dense(M)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise PreconditionError("matrix must be square")
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if np.abs(A - A.T).max(initial=0.0) > 1e-12 * scale:
        raise PreconditionError("matrix is not symmetric")
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"dense eigensolver did not converge: {exc}") from exc
    order = _order(w, kind)
    return EigenSystem(kind, w[order], fix_signs(V[:, order]), complete=True)


# --- Lanczos ----------------------------------------------------------------------

def _orthogonalize(w: np.ndarray, *bases: np.ndarray) -> np.ndarray:
    # two interleaved classical Gram-Schmidt sweeps; sweeping the bases one at a
    # time lets round-off in one leak back into the other
    for _ in range(2):
        for Q in bases:
            if Q.shape[1]:
                w = w - Q @ (Q.T @ w)
    return w


def lanczos_smallest(matvec: Callable[[np.ndarray], np.ndarray], n: int, K: int,
                     rng: np.random.Generator, locked: Optional[np.ndarray] = None,
                     tol: float = 1e-10, maxiter: Optional[int] = None):
    """Lanczos with full reorthogonalization for the ``K`` smallest eigenpairs.

    The Krylov basis is kept orthogonal to ``locked`` (deflation). On an
    invariant-subspace breakdown the iteration restarts from a fresh random
    vector, which lets it pick up repeated eigenvalues. Returns Ritz values,
    Ritz vectors and a converged flag.
    """
    locked = np.zeros((n, 0)) if locked is None else locked
    free_dim = n - locked.shape[1]
    maxiter = free_dim if maxiter is None else min(maxiter, free_dim)
    K = min(K, free_dim)
    Q = np.zeros((n, maxiter))
    alpha = np.zeros(maxiter)
    beta = np.zeros(maxiter)

    def fresh_start(basis):
        for _ in range(5):
            q = _orthogonalize(rng.standard_normal(n), locked, basis)
            nrm = np.linalg.norm(q)
            if nrm > 1e-8:
                return q / nrm
        return None

    q = fresh_start(Q[:, :0])
    if q is None:
        raise NumericalError("Lanczos could not build a starting vector")
    theta = S = None
    steps = 0
    for j in range(maxiter):
        Q[:, j] = q
        w = matvec(q)
        alpha[j] = q @ w
        w = _orthogonalize(w, locked, Q[:, :j + 1])
        b = np.linalg.norm(w)
        steps = j + 1
        if steps >= K:
            T = np.diag(alpha[:steps]) + np.diag(beta[:steps - 1], 1) + np.diag(beta[:steps - 1], -1)
            theta, S = np.linalg.eigh(T)
            resid = np.abs(b * S[-1, :K])
            if steps == maxiter or np.all(resid <= tol * max(1.0, np.abs(theta[:K]).max())):
                break
        if steps == maxiter:
            break
        if b <= 1e-10:
            q = fresh_start(Q[:, :steps])
            if q is None:
                break
            beta[j] = 0.0
        else:
            q = w / b
            beta[j] = b
    if theta is None:
        T = np.diag(alpha[:steps]) + np.diag(beta[:steps - 1], 1) + np.diag(beta[:steps - 1], -1)
        theta, S = np.linalg.eigh(T)
        b = 0.0
    converged = steps == maxiter or bool(np.all(np.abs(b * S[-1, :K])
                                               <= tol * max(1.0, np.abs(theta[:K]).max())))
    vectors = Q[:, :steps] @ S[:, :K]
    return theta[:K], vectors, converged


def eig_partial(M, kind: MatrixKind, K: int, seed: int = 0,
                tol: float = 1e-10) -> EigenSystem:
    """``K`` lowest-frequency eigenpairs via Lanczos.

    Laplacian kinds return the ``K`` smallest eigenvalues; ``ADJ_SYM``
    returns the ``K`` largest (``omega = 1 - lambda``). After convergence a
    second deflated run checks for eigenvalues hidden by exact multiplicity.
    """
    kind = MatrixKind(kind)
    n = M.shape[0]
    if not 1 <= K < n:
        raise PreconditionError(f"need 1 <= K < n, got K={K}, n={n}")
    sign = -1.0 if kind.descending else 1.0
    Mop = M.tocsr() if sp.issparse(M) else np.asarray(M, dtype=np.float64)

    def matvec(v):
        return sign * (Mop @ v)

    rng = np.random.default_rng(seed)
    vals, vecs, ok = lanczos_smallest(matvec, n, K, rng, tol=tol)
    if not ok:
        raise NumericalError("Lanczos did not converge")
    for _ in range(n):
        # locking pass: anything below the current K-th value was missed
        extra_vals, extra_vecs, ok = lanczos_smallest(matvec, n, K, rng, locked=vecs, tol=tol)
        if not ok:
            raise NumericalError("Lanczos deflation pass did not converge")
        missed = extra_vals < vals[-1] - max(tol, 1e-9)
        if not np.any(missed):
            break
        vals = np.concatenate([vals, extra_vals[missed]])
        vecs = np.concatenate([vecs, extra_vecs[:, missed]], axis=1)
        order = np.argsort(vals, kind="stable")[:K]
        vals, vecs = vals[order], vecs[:, order]
    vecs, _ = np.linalg.qr(vecs)
    # Rayleigh-Ritz on the final basis tidies eigenvalues and orthonormality
    H = vecs.T @ np.column_stack([matvec(vecs[:, i]) for i in range(vecs.shape[1])])
    H = 0.5 * (H + H.T)
    theta, S = np.linalg.eigh(H)
    vecs = vecs @ S
    values = sign * theta
    order = _order(values, kind)
    return EigenSystem(kind, values[order], fix_signs(vecs[:, order]), complete=False)


def adjacency_eigensystem(g: Graph, K: Optional[int] = None, seed: int = 0,
                          dense_limit: int = DENSE_LIMIT) -> EigenSystem:
    """ADJ_SYM eigenpairs from one decomposition of ``I - A_sym``.

    On graphs without isolated nodes ``I - A_sym`` is exactly ``L_sym``, so
    this is the single-decomposition route with ``omega = 1 - lambda``; at
    isolated nodes it keeps ``A_sym`` exact (their ``omega`` is 0). Dense up to
    ``dense_limit`` nodes unless ``K`` is given, Lanczos otherwise.
    """
    A = normalized_adjacency(g)
    M = (sp.identity(g.n, format="csr") - A).tocsr()
    if K is None and g.n <= dense_limit:
        es = eig_full(M, MatrixKind.LAP_SYM)
    else:
        if K is None:
            raise PreconditionError(f"n={g.n} exceeds the dense limit; pass K for Lanczos")
        es = eig_partial(M, MatrixKind.LAP_SYM, K, seed=seed)
    return EigenSystem(MatrixKind.LAP_SYM, es.values, es.vectors, es.complete).as_adjacency()


# --- spectral coefficients ---------------------------------------------------------

def spectral_coefficients(es: EigenSystem, y) -> np.ndarray:
    """Coefficients ``c_i = u_i^T y`` against unnormalized-Laplacian eigenvectors."""
    if es.kind is not MatrixKind.LAP_UNNORM:
        raise PreconditionError("spectral coefficients need a LAP_UNNORM system")
    if not es.complete:
        raise PreconditionError("spectral coefficients need a complete system")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if len(y) != es.n:
        raise PreconditionError(f"signal length {len(y)} != n={es.n}")
    return es.vectors.T @ y


# --- per-band distances ---------------------------------------------------------------

def group_bounds(n: int, k_groups: int = 10) -> List[tuple]:
    return [((k - 1) * n // k_groups, k * n // k_groups) for k in range(1, k_groups + 1)]


@dataclass(frozen=True)
class BandReport:
    k_groups: int
    F: np.ndarray
    F_norm: np.ndarray
    norms: np.ndarray
    norms_aug: np.ndarray

    def cov(self) -> float:
        """Coefficient of variation of ``F_norm`` over the groups."""
        mu = float(np.mean(self.F_norm))
        return float(np.std(self.F_norm)) / mu if mu > 0 else 0.0

    def to_csv(self) -> str:
        lines = ["group,F,F_norm,norm"]
        for k in range(self.k_groups):
            lines.append(f"{k + 1},{self.F[k]:.12g},{self.F_norm[k]:.12g},{self.norms[k]:.12g}")
        return "\n".join(lines) + "\n"


def _grouped(es: EigenSystem, lo: int, hi: int):
    lam = es.values[lo:hi]
    V = es.vectors[:, lo:hi]
    comp = (V * lam) @ V.T
    norm = float(lam.max()) if len(lam) else 0.0
    scaled = comp / norm if norm >= ZERO_EIG else comp
    return comp, scaled, norm


def band_distance(es_orig: EigenSystem, es_aug: EigenSystem, k_groups: int = 10) -> BandReport:
    """Frobenius distances between grouped components of two ``L_sym`` spectra.

    Groups are contiguous ascending-eigenvalue slices
    ``[floor((k-1)n/K), floor(kn/K))``. ``F_norm`` divides each grouped
    component by the largest eigenvalue of its group (raw component when that
    is below ``1e-12``).
    """
    for es in (es_orig, es_aug):
        if es.kind is not MatrixKind.LAP_SYM or not es.complete:
            raise PreconditionError("band_distance needs complete LAP_SYM systems")
    if es_orig.n != es_aug.n:
        raise PreconditionError(f"size mismatch: {es_orig.n} vs {es_aug.n}")
    F, Fn, norms, norms_aug = [], [], [], []
    for lo, hi in group_bounds(es_orig.n, k_groups):
        c1, s1, n1 = _grouped(es_orig, lo, hi)
        c2, s2, n2 = _grouped(es_aug, lo, hi)
        F.append(np.linalg.norm(c1 - c2))
        Fn.append(np.linalg.norm(s1 - s2))
        norms.append(n1)
        norms_aug.append(n2)
    return BandReport(k_groups, np.array(F), np.array(Fn), np.array(norms), np.array(norms_aug))


def band_energy_fraction(delta, Phi_B: np.ndarray, atol: float = 1e-12) -> float:
    """Share of ``||delta||_F^2`` inside ``span(Phi_B)`` (two-sided projector).

    A perturbation with Frobenius norm at most ``atol`` is round-off (e.g. a
    one-pair band, which cannot be mixed) and counts as fully in band.
    """
    D = _dense(delta)
    total = float(np.sum(D * D))
    if total <= atol * atol:
        return 1.0
    inner = Phi_B.T @ D @ Phi_B
    return float(np.sum(inner * inner)) / total


def group_energy_profile(delta, es: EigenSystem, k_groups: int = 10) -> np.ndarray:
    """Energy ``||delta V_k||_F^2`` per ascending-frequency group of a complete system."""
    D = _dense(delta)
    proj = D @ es.vectors
    col = np.sum(proj * proj, axis=0)
    return np.array([col[lo:hi].sum() for lo, hi in group_bounds(es.n, k_groups)])
