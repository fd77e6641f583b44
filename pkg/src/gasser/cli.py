"""``gasser`` command-line entry point.

Exit status: 0 on success, 1 on configuration / input errors, 2 on numerical
failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .augment import Augmenter
from .diagnostics import analyze, parse_perturbation, verify_report
from .errors import ConfigError, GasserError, NumericalError
from .evaluation import (CONFIG_KEYS, DEFAULT_RATIOS, ExperimentConfig, attack_graph, linear_probe,
                         load_config, make_split, parse_config, parse_sbm_spec, report_json,
                         resolve_dataset, run_experiment)
from .gcl import train, view_factory
from .graph import write_graph
from .io import atomic_write_bytes, atomic_write_text, pack_matrices, read_matrix_csv, write_matrix_csv

VERBS = ("analyze", "augment", "train", "eval", "attack", "verify", "experiment")

CONFIG_HELP = "config keys (key=value file or --set): " + ", ".join(CONFIG_KEYS)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    overrides = getattr(args, "set", None) or []
    if overrides:
        cfg = parse_config("\n".join(overrides), cfg)
    if getattr(args, "dataset", None):
        cfg = cfg.replace(dataset=args.dataset)
    return cfg


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def cmd_analyze(args) -> None:
    cfg = _config(args)
    parse_perturbation(args.perturbation)
    g = resolve_dataset(cfg.dataset, args.seed)
    res = analyze(g, args.perturbation, args.k_groups, args.seed, cfg.augment_config(args.seed))
    _emit(res.to_csv(), args.out)


def cmd_augment(args) -> None:
    cfg = _config(args)
    g = resolve_dataset(cfg.dataset, args.seed)
    aug_cfg = cfg.augment_config(args.seed)
    views = Augmenter(g).views(aug_cfg)
    out = Path(args.out)
    plans = []
    for name, view in zip(("view_a", "view_b"), views):
        write_graph(view.topology.replace(X=view.features), out / name, weighted=True)
        plan = view.plan
        plans.append({"view": name, "B": plan.B.tolist(), "b0": plan.b0,
                      "gamma_sha256": hashlib.sha256(np.ascontiguousarray(plan.gamma, "<f8").tobytes()).hexdigest(),
                      "edges": view.topology.m})
    doc = {"seed": args.seed, "band_mode": aug_cfg.effective_mode.value, "views": plans}
    atomic_write_text(out / "plan.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_train(args) -> None:
    cfg = _config(args)
    g = resolve_dataset(cfg.dataset, args.seed)
    aug_cfg = cfg.augment_config(args.seed)
    kind = "random" if cfg.variant == "RANDOM_BASELINE" else "spectral"
    res = train(g, aug_cfg, cfg.train_config(args.seed), views=view_factory(g, aug_cfg, kind))
    out = Path(args.out)
    write_matrix_csv(out / "embeddings.csv", res.embeddings)
    atomic_write_bytes(out / "params.bin", pack_matrices(res.params.arrays))
    doc = {"seed": args.seed, "config": cfg.to_dict(), "losses": res.losses}
    atomic_write_text(out / "train.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_eval(args) -> None:
    g = resolve_dataset(args.dataset, args.seed)
    if g.y is None:
        raise ConfigError(f"dataset {args.dataset} has no labels")
    path = Path(args.embeddings)
    if not path.is_file():
        raise ConfigError(f"embeddings file not found: {path}")
    Z = read_matrix_csv(path)
    if Z.shape[0] != g.n:
        raise ConfigError(f"{path}: {Z.shape[0]} rows for {g.n} nodes")
    split = make_split(g.n, DEFAULT_RATIOS, args.seed, g.splits)
    res = linear_probe(Z, g.y, split, args.seed)
    doc = {"seed": args.seed, "accuracy": res.accuracy, "val_accuracy": res.val_accuracies[0],
           "split": {k: len(getattr(split, k)) for k in ("train", "val", "test")}}
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)


def cmd_attack(args) -> None:
    g = resolve_dataset(args.dataset, args.seed)
    if args.method not in ("random", "dice"):
        raise ConfigError(f"unknown attack method {args.method!r}")
    write_graph(attack_graph(g, args.method, args.sigma, args.seed), args.out)


def cmd_verify(args) -> None:
    spec = args.dataset or "sbm:n=40,C=2,p_in=0.3,p_out=0.05"
    if not spec.startswith("sbm:"):
        raise ConfigError("verify draws random instances and needs an sbm: dataset spec")
    p = parse_sbm_spec(spec)
    if p["C"] != 2:
        raise ConfigError("verify needs two classes (C=2)")
    rep = verify_report(p["n"], p["p_in"], p["p_out"], args.trials, args.seed, p["d"])
    _emit(json.dumps(rep, indent=2, sort_keys=True) + "\n", args.out)


def cmd_experiment(args) -> None:
    cfg = _config(args)
    if args.seed:
        cfg = cfg.replace(seeds=tuple(s + args.seed for s in cfg.seeds))
    _emit(report_json(run_experiment(cfg)), args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gasser", description="Selective spectral augmentation for graph "
                     "contrastive learning.", epilog=CONFIG_HELP)
    sub = parser.add_subparsers(dest="verb", metavar="verb", parser_class=_Parser)

    def verb(name, func, helptext, dataset=True, config=False, out_required=False, dataset_required=None):
        p = sub.add_parser(name, help=helptext, description=helptext, epilog=CONFIG_HELP)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0, help="single source of randomness (default 0)")
        p.add_argument("--out", required=out_required,
                       help="output path" + ("" if out_required else " (default stdout)"))
        if dataset:
            p.add_argument("--dataset", required=(not config) if dataset_required is None else dataset_required,
                           help="dataset directory or inline spec such as "
                                "sbm:n=400,C=2,p_in=0.1,p_out=0.01[,d=16,signal=1,seed=0]")
        if config:
            p.add_argument("--config", help="key=value config file")
            p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        return p

    p = verb("analyze", cmd_analyze, "band-wise distance between a graph and a perturbed copy", config=True)
    p.add_argument("--k-groups", type=int, default=10)
    p.add_argument("--perturbation", default="none", help="none | random_insert:<ratio> | gasser")
    verb("augment", cmd_augment, "write two augmented views and plan.json", config=True, out_required=True)
    verb("train", cmd_train, "train the encoder; writes embeddings.csv, params.bin, train.json",
         config=True, out_required=True)
    p = verb("eval", cmd_eval, "linear probe of saved embeddings")
    p.add_argument("--embeddings", required=True)
    p = verb("attack", cmd_attack, "write a structurally poisoned copy of a dataset", out_required=True)
    p.add_argument("--method", default="dice", help="random | dice")
    p.add_argument("--sigma", type=float, default=0.1)
    p = verb("verify", cmd_verify, "numerical checks of the spectral theorems (JSON report)",
             dataset_required=False)
    p.add_argument("--trials", type=int, default=100)
    verb("experiment", cmd_experiment, "run an experiment config over its seeds (JSON report)",
         config=True)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "verb", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"gasser {args.verb}: numerical error: {exc}", file=sys.stderr)
        return 2
    except (GasserError, ValueError, OSError) as exc:
        print(f"gasser {args.verb}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
