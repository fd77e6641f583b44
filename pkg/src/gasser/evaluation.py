"""Linear-probe evaluation, splits, structure attacks and the experiment driver."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .augment import AugmentConfig, BandMode
from .errors import ConfigError, PreconditionError
from .gcl import Adam, TrainConfig, infer, train, view_factory
from .graph import Graph, homophily, load_graph, sbm_generate

DEFAULT_RATIOS = (0.1, 0.1, 0.8)
VARIANTS = ("FULL", "W", "B", "RANDOM_BASELINE")
ATTACKS = ("none", "random", "dice")


# --- splits -----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    @property
    def valid(self) -> bool:
        """Usable for probing: every part non-empty."""
        return len(self.train) > 0 and len(self.val) > 0 and len(self.test) > 0

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("train", "val", "test")}

    @classmethod
    def from_dict(cls, d: dict) -> "Split":
        parts = [np.asarray(d.get(k, []), dtype=np.int64) for k in ("train", "val", "test")]
        joined = np.concatenate(parts)
        if len(np.unique(joined)) != len(joined):
            raise PreconditionError("split parts overlap")
        return cls(*parts)


def make_split(n: int, ratios: Sequence[float] = DEFAULT_RATIOS, seed=0,
               splits: Optional[dict] = None) -> Split:
    """Seeded shuffle cut into train/val/test; ``splits`` (as loaded from
    ``splits.json``) takes precedence when given.

    Train and val sizes are ``floor(ratio * n)``; test takes the remainder.
    """
    if splits is not None:
        return Split.from_dict(splits)
    ratios = [float(r) for r in ratios]
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    perm = np.random.default_rng(seed).permutation(n)
    a = int(math.floor(ratios[0] * n + 1e-9))
    b = a + int(math.floor(ratios[1] * n + 1e-9))
    return Split(np.sort(perm[:a]), np.sort(perm[a:b]), np.sort(perm[b:]))


# --- linear probe -----------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeResult:
    accuracies: Tuple[float, ...]
    val_accuracies: Tuple[float, ...] = ()

    @property
    def accuracy(self) -> float:
        return self.mean

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))

    @classmethod
    def combine(cls, results: Sequence["ProbeResult"]) -> "ProbeResult":
        return cls(tuple(a for r in results for a in r.accuracies),
                   tuple(a for r in results for a in r.val_accuracies))

    def to_dict(self) -> dict:
        return {"accuracies": list(self.accuracies), "mean": self.mean, "std": self.std}


def _softmax_xent(W, b, X, y, C, weight_decay):
    logits = X @ W + b
    logits -= logits.max(axis=1, keepdims=True)
    P = np.exp(logits)
    P /= P.sum(axis=1, keepdims=True)
    n = len(y)
    loss = -np.mean(np.log(P[np.arange(n), y] + 1e-300)) + 0.5 * weight_decay * np.sum(W * W)
    P[np.arange(n), y] -= 1.0
    P /= n
    return loss, X.T @ P + weight_decay * W, P.sum(axis=0)


def linear_probe(Z: np.ndarray, y, split: Split, seed=0, weight_decay: float = 1e-4,
                 lr: float = 0.01, max_iter: int = 500, tol: float = 1e-6) -> ProbeResult:
    """Multinomial logistic regression on frozen embeddings.

    Features are z-scored with train statistics. The weights with the best
    validation accuracy seen during optimization are used on the test rows.
    """
    if not split.valid:
        raise PreconditionError("split has an empty train, val or test part")
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    C = int(y.max()) + 1
    mu = Z[split.train].mean(axis=0)
    sd = Z[split.train].std(axis=0)
    Zs = (Z - mu) / np.where(sd > 1e-12, sd, 1.0)
    Xtr, ytr = Zs[split.train], y[split.train]
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, 0.01, size=(Z.shape[1], C))
    b = np.zeros(C)
    opt = Adam(lr)
    best_val, best = -1.0, (W.copy(), b.copy())
    prev = np.inf
    for _ in range(max_iter):
        loss, gW, gb = _softmax_xent(W, b, Xtr, ytr, C, weight_decay)
        opt.step([W, b], [gW, gb])
        val = float(np.mean(np.argmax(Zs[split.val] @ W + b, axis=1) == y[split.val]))
        if val > best_val:
            best_val, best = val, (W.copy(), b.copy())
        if abs(prev - loss) < tol:
            break
        prev = loss
    W, b = best
    correct = int(np.sum(np.argmax(Zs[split.test] @ W + b, axis=1) == y[split.test]))
    return ProbeResult((correct / len(split.test),), (best_val,))


# --- attacks ----------------------------------------------------------------------------

def attack_budget(g: Graph, sigma: float) -> int:
    k = int(math.floor(sigma * g.m + 1e-9))
    if k < 1:
        raise PreconditionError(f"attack budget floor({sigma} * {g.m}) = 0")
    return k


def _flip(g: Graph, remove_keys: np.ndarray, add_pairs: np.ndarray) -> Graph:
    keep = ~np.isin(g.edge_keys(), remove_keys)
    add_pairs = np.asarray(add_pairs, dtype=np.int64).reshape(-1, 2)
    edges = np.concatenate([g.edges[keep], add_pairs])
    weights = np.concatenate([g.weights[keep], np.ones(len(add_pairs))])
    return g.with_edges(edges, weights)


def attack_random(g: Graph, sigma: float, seed=0) -> Graph:
    """Flip ``floor(sigma * m)`` distinct uniformly chosen node pairs."""
    k = attack_budget(g, sigma)
    total = g.n * (g.n - 1) // 2
    if k > total:
        raise PreconditionError(f"budget {k} exceeds {total} node pairs")
    rng = np.random.default_rng(seed)
    keys = np.zeros(0, dtype=np.int64)
    while len(keys) < k:
        draw = rng.integers(0, g.n, size=(2 * (k - len(keys)) + 16, 2))
        draw = draw[draw[:, 0] != draw[:, 1]]
        keys = np.concatenate([keys, draw.min(axis=1) * g.n + draw.max(axis=1)])
        _, first = np.unique(keys, return_index=True)
        keys = keys[np.sort(first)][:k]
    present = np.isin(keys, g.edge_keys())
    add = keys[~present]
    return _flip(g, keys[present], np.stack([add // g.n, add % g.n], axis=1))


def attack_dice(g: Graph, sigma: float, seed=0) -> Graph:
    """Delete intra-class edges / insert inter-class non-edges, one of each
    with probability 1/2 per step, falling back to the other kind when one
    runs out."""
    if g.y is None:
        raise PreconditionError("DICE needs labels")
    k = attack_budget(g, sigma)
    rng = np.random.default_rng(seed)
    y = g.y
    intra = np.flatnonzero(y[g.edges[:, 0]] == y[g.edges[:, 1]])
    counts = np.bincount(y)
    inter_pairs = (g.n * (g.n - 1) - int(np.sum(counts * (counts - 1)))) // 2
    inter_absent = inter_pairs - (g.m - len(intra))
    edge_keys = set(g.edge_keys().tolist())
    deleted, inserted = [], set()
    alive = list(intra)
    for _ in range(k):
        can_del = len(alive) > 0
        can_ins = inter_absent - len(inserted) > 0
        if not (can_del or can_ins):
            raise PreconditionError("DICE budget exhausted both edge categories")
        delete = rng.random() < 0.5
        if delete and not can_del:
            delete = False
        elif not delete and not can_ins:
            delete = True
        if delete:
            idx = int(rng.integers(len(alive)))
            alive[idx], alive[-1] = alive[-1], alive[idx]
            deleted.append(alive.pop())
            continue
        inserted.add(_absent_inter_pair(g, rng, edge_keys, inserted, inter_absent - len(inserted)))
    rem = g.edge_keys()[np.asarray(deleted, dtype=np.int64)] if deleted else np.zeros(0, np.int64)
    add = np.array(sorted(inserted), dtype=np.int64)
    return _flip(g, rem, np.stack([add // g.n, add % g.n], axis=1) if len(add) else np.zeros((0, 2)))


def _absent_inter_pair(g: Graph, rng, edge_keys: set, inserted: set, remaining: int) -> int:
    y, n = g.y, g.n
    if remaining * 8 >= n:
        for _ in range(64 * n):
            i, j = (int(v) for v in rng.integers(0, n, size=2))
            if y[i] == y[j]:
                continue
            key = min(i, j) * n + max(i, j)
            if key not in edge_keys and key not in inserted:
                return key
    # few candidates left: enumerate them
    iu, ju = np.triu_indices(n, k=1)
    keys = iu * n + ju
    ok = y[iu] != y[ju]
    keys = keys[ok]
    taken = np.fromiter(edge_keys | inserted, dtype=np.int64)
    keys = keys[~np.isin(keys, taken)]
    return int(keys[rng.integers(len(keys))])


# --- datasets ---------------------------------------------------------------------------

SBM_KEYS = {"n": int, "C": int, "p_in": float, "p_out": float, "d": int, "signal": float, "seed": int}
SBM_DEFAULTS = {"C": 2, "d": 16, "signal": 1.0}


def parse_sbm_spec(spec: str) -> dict:
    """``sbm:n=400,C=2,p_in=0.1,p_out=0.01[,d=16][,signal=1][,seed=0]``."""
    body = spec[len("sbm:"):]
    out = dict(SBM_DEFAULTS)
    for part in filter(None, (p.strip() for p in body.split(","))):
        if "=" not in part:
            raise ConfigError(f"bad dataset spec item {part!r} in {spec!r}")
        k, v = (s.strip() for s in part.split("=", 1))
        if k not in SBM_KEYS:
            raise ConfigError(f"unknown sbm key {k!r}; expected one of {sorted(SBM_KEYS)}")
        try:
            out[k] = SBM_KEYS[k](v)
        except ValueError:
            raise ConfigError(f"sbm key {k}: cannot parse {v!r}") from None
    for k in ("n", "p_in", "p_out"):
        if k not in out:
            raise ConfigError(f"sbm spec missing {k!r}: {spec!r}")
    return out


def resolve_dataset(spec: str, seed: int = 0) -> Graph:
    """Load a dataset directory or generate an inline ``sbm:`` graph.

    An SBM spec without its own ``seed`` is drawn with ``seed``.
    """
    if spec.startswith("sbm:"):
        p = parse_sbm_spec(spec)
        return sbm_generate(p["n"], p["C"], p["p_in"], p["p_out"], p["d"],
                            seed=p.get("seed", seed), signal=p["signal"])
    if not Path(spec).exists():
        raise ConfigError(f"dataset path does not exist: {spec}")
    return load_graph(spec)


# --- experiments ------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "sbm:n=400,C=2,p_in=0.05,p_out=0.005"
    variant: str = "FULL"
    band_mode: str = "homophilic"
    b0: int = 10
    band_size: int = 40
    pivot: float = 0.7
    r1: float = 0.2
    r2: float = 0.2
    pool_size: Optional[int] = None
    mask_ratio: float = 0.2
    alpha: float = 1e-3
    hidden: int = 64
    layers: int = 2
    dropout: float = 0.0
    lr: float = 1e-3
    epochs: int = 100
    seeds: Tuple[int, ...] = tuple(range(10))
    attack: str = "none"
    sigma: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "variant", str(self.variant).upper())
        object.__setattr__(self, "attack", str(self.attack).lower())
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.attack not in ATTACKS:
            raise ConfigError(f"unknown attack {self.attack!r}; expected one of {ATTACKS}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        try:
            BandMode(self.band_mode)
        except ValueError:
            raise ConfigError(f"unknown band_mode {self.band_mode!r}") from None
        self.augment_config(0)
        self.train_config(0)

    def augment_config(self, seed: int) -> AugmentConfig:
        cfg = AugmentConfig(band_mode=BandMode(self.band_mode), b0=self.b0, band_size=self.band_size,
                            pivot=self.pivot, r1=self.r1, r2=self.r2, pool_size=self.pool_size,
                            mask_ratio=self.mask_ratio, weighted=self.variant != "W", seed=seed)
        return cfg.swapped() if self.variant == "B" else cfg

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(alpha=self.alpha, lr=self.lr, epochs=self.epochs, hidden=self.hidden,
                           layers=self.layers, dropout=self.dropout, seed=seed)

    def replace(self, **changes) -> "ExperimentConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return ExperimentConfig(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d


CONFIG_KEYS = tuple(f.name for f in fields(ExperimentConfig))


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key == "seeds":
        if "," in raw:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if "-" in raw:
            lo, hi = raw.split("-", 1)
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(range(int(raw)))
    if key == "pool_size":
        return None if raw.lower() in ("", "none", "default") else int(raw)
    kind = {f.name: f.type for f in fields(ExperimentConfig)}[key]
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Flat ``key=value`` lines; ``#`` starts a comment. ``seeds`` accepts a
    count (``10``), a range (``0-9``) or a list (``1,4,7``)."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, raw)
        except ValueError:
            raise ConfigError(f"config line {lineno}: bad value {raw!r} for {key}") from None
    return (base or ExperimentConfig()).replace(**values)


def load_config(path, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), base)


def worker_count(jobs: int) -> int:
    raw = os.environ.get("GASSER_THREADS")
    try:
        cap = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        raise ConfigError(f"GASSER_THREADS must be an integer, got {raw!r}") from None
    return max(1, min(cap, jobs))


def attack_graph(g: Graph, attack: str, sigma: float, seed) -> Graph:
    if attack == "random":
        return attack_random(g, sigma, seed)
    if attack == "dice":
        return attack_dice(g, sigma, seed)
    return g


def run_seed(cfg: ExperimentConfig, seed: int) -> dict:
    """One seed of an experiment: train, embed, probe (and attack)."""
    g = resolve_dataset(cfg.dataset, seed)
    if g.y is None:
        raise PreconditionError(f"dataset {cfg.dataset} has no labels")
    aug_cfg = cfg.augment_config(seed)
    kind = "random" if cfg.variant == "RANDOM_BASELINE" else "spectral"
    result = train(g, aug_cfg, cfg.train_config(seed), views=view_factory(g, aug_cfg, kind))
    split = make_split(g.n, DEFAULT_RATIOS, seed, g.splits)
    probe = linear_probe(result.embeddings, g.y, split, seed)
    clean = probe.accuracy
    row = {"seed": seed, "accuracy": clean, "val_accuracy": probe.val_accuracies[0],
           "homophily": homophily(g),
           "final_loss": result.losses[-1] if result.losses else None}
    if cfg.attack != "none":
        # the encoder never sees the poisoned graph; only inference and the probe do
        poisoned = attack_graph(g, cfg.attack, cfg.sigma, seed)
        attacked = linear_probe(infer(poisoned, result.params), poisoned.y, split, seed).accuracy
        row.update(clean_accuracy=clean, accuracy=attacked, drop=clean - attacked,
                   attacked_homophily=homophily(poisoned))
    return row


def _stats(values: List[float]) -> dict:
    return {"mean": float(np.mean(values)), "std": float(np.std(values))}


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run all seeds (threaded, capped by ``GASSER_THREADS``) and aggregate."""
    with ThreadPoolExecutor(max_workers=worker_count(len(cfg.seeds))) as pool:
        rows = list(pool.map(lambda s: run_seed(cfg, s), cfg.seeds))
    rows.sort(key=lambda r: r["seed"])
    agg = {"accuracy": _stats([r["accuracy"] for r in rows]),
           "val_accuracy": _stats([r["val_accuracy"] for r in rows])}
    if cfg.attack != "none":
        agg["clean_accuracy"] = _stats([r["clean_accuracy"] for r in rows])
        agg["drop"] = _stats([r["drop"] for r in rows])
    return {"config": cfg.to_dict(), "results": rows, "aggregate": agg}


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
