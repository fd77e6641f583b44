"""GCN encoder trained with the CCA-SSG objective on pairs of augmented views.

Everything is plain numpy: the forward pass keeps the intermediates needed by
a hand-written backward pass, and parameters are updated with Adam.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .augment import AugmentConfig, AugmentedView, Augmenter, random_views
from .errors import ConfigError, NumericalError, PreconditionError
from .graph import Graph
from .spectral import EigenSystem

SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1e-3
    lr: float = 1e-3
    epochs: int = 200
    hidden: int = 128
    layers: int = 2
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.epochs < 0 or self.hidden < 1:
            raise ConfigError("epochs must be >= 0 and hidden >= 1")
        if self.layers not in (1, 2):
            raise ConfigError(f"layers must be 1 or 2, got {self.layers}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


@dataclass
class EncoderParams:
    W1: np.ndarray
    W2: Optional[np.ndarray] = None

    @property
    def layers(self) -> int:
        return 1 if self.W2 is None else 2

    @property
    def arrays(self) -> List[np.ndarray]:
        return [self.W1] if self.W2 is None else [self.W1, self.W2]

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "EncoderParams":
        if len(arrays) not in (1, 2):
            raise PreconditionError(f"expected 1 or 2 weight matrices, got {len(arrays)}")
        W1 = np.asarray(arrays[0], dtype=np.float64)
        W2 = np.asarray(arrays[1], dtype=np.float64) if len(arrays) == 2 else None
        if W2 is not None and W2.shape != (W1.shape[1], W1.shape[1]):
            raise PreconditionError(f"W2 shape {W2.shape} inconsistent with W1 {W1.shape}")
        return cls(W1, W2)

    def copy(self) -> "EncoderParams":
        return EncoderParams.from_arrays([a.copy() for a in self.arrays])


def init_params(d: int, hidden: int, layers: int = 2, seed=0) -> EncoderParams:
    """Uniform on ``(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
    rng = np.random.default_rng(seed)
    b1 = 1.0 / math.sqrt(d)
    W1 = rng.uniform(-b1, b1, size=(d, hidden))
    W2 = None
    if layers == 2:
        b2 = 1.0 / math.sqrt(hidden)
        W2 = rng.uniform(-b2, b2, size=(hidden, hidden))
    return EncoderParams(W1, W2)


def propagation_matrix(g: Graph) -> sp.csr_matrix:
    """``D^-1/2 (W + I) D^-1/2`` with ``D`` the weighted degree plus one."""
    A = g.adjacency() + sp.identity(g.n, format="csr")
    s = 1.0 / np.sqrt(np.asarray(A.sum(axis=1)).ravel())
    return sp.csr_matrix(sp.diags(s) @ A @ sp.diags(s))


@dataclass
class _Cache:
    P: sp.csr_matrix
    PX: np.ndarray
    U1: np.ndarray
    mask: Optional[np.ndarray]
    PH: Optional[np.ndarray]


def _dropout_mask(shape, rate: float, seed) -> Optional[np.ndarray]:
    if rate <= 0.0:
        return None
    rng = np.random.default_rng(seed)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _forward(P, X, params: EncoderParams, dropout: float, seed) -> Tuple[np.ndarray, _Cache]:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != P.shape[0] or X.shape[1] != params.W1.shape[0]:
        raise PreconditionError(f"features {X.shape} do not fit n={P.shape[0]}, W1 {params.W1.shape}")
    PX = P @ X
    U1 = PX @ params.W1
    H = np.maximum(U1, 0.0)
    if params.W2 is None:
        return H, _Cache(P, PX, U1, None, None)
    mask = _dropout_mask(H.shape, dropout, seed)
    if mask is not None:
        H = H * mask
    PH = P @ H
    return PH @ params.W2, _Cache(P, PX, U1, mask, PH)


def _backward(gZ: np.ndarray, params: EncoderParams, c: _Cache) -> List[np.ndarray]:
    if params.W2 is None:
        return [c.PX.T @ (gZ * (c.U1 > 0))]
    gW2 = c.PH.T @ gZ
    gH = c.P.T @ (gZ @ params.W2.T)
    if c.mask is not None:
        gH = gH * c.mask
    gW1 = c.PX.T @ (gH * (c.U1 > 0))
    return [gW1, gW2]


def gcn_forward(view, params: EncoderParams, dropout: float = 0.0, seed=0) -> np.ndarray:
    """Encode an :class:`AugmentedView` (or a plain :class:`Graph`)."""
    if isinstance(view, Graph):
        topo, X = view, view.X
    else:
        topo, X = view.topology, view.features
    return _forward(propagation_matrix(topo), X, params, dropout, seed)[0]


def infer(g: Graph, params: EncoderParams) -> np.ndarray:
    """Embeddings of the unaugmented graph, no dropout."""
    return gcn_forward(g, params, 0.0)


def _standardize(Z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise PreconditionError(f"standardize needs n >= 2 rows, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise NumericalError("non-finite embeddings")
    C = Z - Z.mean(axis=0)
    sigma = np.sqrt(np.mean(C * C, axis=0))
    live = sigma >= SIGMA_FLOOR
    # sigma * sqrt(n) is the column norm of the centred matrix
    scale = np.where(live, sigma * math.sqrt(Z.shape[0]), 1.0)
    return np.where(live, C / scale, 0.0), np.where(live, scale, np.inf)


def standardize(Z: np.ndarray) -> np.ndarray:
    """Centre each column and scale it to unit Euclidean norm; flat columns become 0."""
    return _standardize(Z)[0]


def _standardize_backward(g: np.ndarray, Zt: np.ndarray, scale: np.ndarray) -> np.ndarray:
    gc = (g - Zt * np.sum(Zt * g, axis=0)) / scale
    return gc - gc.mean(axis=0)


def cca_ssg_loss(Za: np.ndarray, Zb: np.ndarray, alpha: float) -> float:
    Za = np.asarray(Za, dtype=np.float64)
    Zb = np.asarray(Zb, dtype=np.float64)
    if Za.shape != Zb.shape or Za.ndim != 2:
        raise PreconditionError(f"shape mismatch {Za.shape} vs {Zb.shape}")
    eye = np.eye(Za.shape[1])
    return float(np.sum((Za - Zb) ** 2)
                 + alpha * (np.sum((Za.T @ Za - eye) ** 2) + np.sum((Zb.T @ Zb - eye) ** 2)))


def _loss_grad(Za, Zb, alpha):
    eye = np.eye(Za.shape[1])
    diff = Za - Zb
    return 2.0 * diff + 4.0 * alpha * Za @ (Za.T @ Za - eye), \
        -2.0 * diff + 4.0 * alpha * Zb @ (Zb.T @ Zb - eye)


def loss_gradients(views: Tuple[AugmentedView, AugmentedView], params: EncoderParams,
                   cfg: TrainConfig, seeds: Tuple = (0, 1)) -> Tuple[float, List[np.ndarray]]:
    """Objective value and its gradient with respect to each weight matrix.

    ``seeds`` fix the dropout masks of the two views.
    """
    caches, Zts, scales = [], [], []
    for view, s in zip(views, seeds):
        Z, c = _forward(propagation_matrix(view.topology), view.features, params, cfg.dropout, s)
        Zt, scale = _standardize(Z)
        caches.append(c)
        Zts.append(Zt)
        scales.append(scale)
    loss = cca_ssg_loss(Zts[0], Zts[1], cfg.alpha)
    grads = [np.zeros_like(a) for a in params.arrays]
    for gZt, Zt, scale, c in zip(_loss_grad(Zts[0], Zts[1], cfg.alpha), Zts, scales, caches):
        for acc, gw in zip(grads, _backward(_standardize_backward(gZt, Zt, scale), params, c)):
            acc += gw
    return loss, grads


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: Optional[List[np.ndarray]] = None
        self.v: Optional[List[np.ndarray]] = None

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        """Update ``params`` in place."""
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainResult:
    params: EncoderParams
    embeddings: np.ndarray
    losses: List[float] = field(default_factory=list)

    def __iter__(self):
        return iter((self.params, self.embeddings))


ViewFactory = Callable[[int], Tuple[AugmentedView, AugmentedView]]


def _epoch_seed(seed: int, epoch: int, stream: int) -> int:
    return int(np.random.SeedSequence([int(seed), stream, epoch]).generate_state(1)[0])


def view_factory(g: Graph, aug_cfg: AugmentConfig, kind: str = "spectral",
                 es: Optional[EigenSystem] = None) -> ViewFactory:
    """``epoch_seed -> (view_a, view_b)``; ``kind`` is "spectral" or "random"."""
    if kind == "spectral":
        aug = Augmenter(g, es)
        return lambda s: aug.views(aug_cfg.replace(seed=s))
    if kind == "random":
        return lambda s: random_views(g, aug_cfg.replace(seed=s))
    raise ConfigError(f"unknown view kind {kind!r}")


def train(g: Graph, aug_cfg: AugmentConfig, train_cfg: TrainConfig,
          views: Optional[ViewFactory] = None, es: Optional[EigenSystem] = None) -> TrainResult:
    """Fit the encoder on fresh view pairs each epoch, then embed the clean graph."""
    if g.X is None or g.X.ndim != 2:
        raise PreconditionError("graph has no feature matrix")
    if views is None:
        views = view_factory(g, aug_cfg, es=es)
    params = init_params(g.X.shape[1], train_cfg.hidden, train_cfg.layers,
                         np.random.SeedSequence([int(train_cfg.seed), 0]))
    opt = Adam(train_cfg.lr)
    losses = []
    for epoch in range(train_cfg.epochs):
        pair = views(_epoch_seed(aug_cfg.seed, epoch, 1))
        drop = (_epoch_seed(train_cfg.seed, epoch, 2), _epoch_seed(train_cfg.seed, epoch, 3))
        loss, grads = loss_gradients(pair, params, train_cfg, drop)
        if not math.isfinite(loss) or not all(np.all(np.isfinite(gr)) for gr in grads):
            raise NumericalError(f"non-finite loss or gradient at epoch {epoch} (loss={loss})")
        losses.append(loss)
        opt.step(params.arrays, grads)
    return TrainResult(params, infer(g, params), losses)
