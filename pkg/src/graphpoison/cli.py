"""Command-line entry point.

Option values resolve as: command-line flag, then ``--config`` file
(``key=value`` lines, ``#`` comments), then built-in default.
Exit codes: 0 success, 1 invalid input, 2 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .attacker import format_log, parse_log, replay
from .datasets import SbmSpec, generate_sbm, load_dataset, random_instance, write_dataset, write_edges
from .errors import ValidationError
from .structgrad import AttackObjective, finite_difference_gradient, structural_gradient
from .surrogate import TrainConfig, pseudo_label_table, train
from .victim import VictimConfig, format_report, trial_suite

log = logging.getLogger("graphpoison")

METHODS = ("neg-ce", "grad-debias", "random", "dice")

DEFAULTS = {
    "seed": 0,
    "lcc": False,
    # surrogate
    "epochs": 200,
    "lr": 0.01,
    "weight_decay": 5e-4,
    # attack
    "objective": "grad-debias",
    "budget": 0.05,
    "retrain_every": 1,
    # victim
    "trials": 10,
    "hidden": 16,
    "dropout": 0.5,
    "victim_epochs": 200,
    # sbm
    "blocks": "50,50,50,50",
    "p_in": 0.065,
    "p_out": 0.0053,
    "feature_dim": 32,
    "noise": 1.0,
    # analysis
    "objectives": "neg-ce,grad-debias",
    "budgets": "0.01,0.03,0.05",
    "bins": 10,
    # check-grad
    "n": 20,
    "edge_prob": 0.15,
    "d": 8,
    "k": 3,
    "eps": 1e-5,
    "instances": 1,
    "tol": 1e-4,
}

TYPES = {key: type(value) for key, value in DEFAULTS.items()}


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def read_config(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{line_no}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _coerce(key, value):
    kind = TYPES.get(key, str)
    if kind is bool and isinstance(value, str):
        return value.lower() in ("1", "true", "yes", "on")
    try:
        return kind(value)
    except ValueError:
        raise UsageError(f"--{key.replace('_', '-')}: invalid value {value!r}") from None


def resolve(args) -> dict:
    """Merge flag values over config-file values over defaults."""
    cfg = read_config(args.config) if args.config else {}
    out = {}
    for key, value in vars(args).items():
        if value is None and key in cfg:
            value = cfg[key]
        if value is None and key in DEFAULTS:
            value = DEFAULTS[key]
        out[key] = _coerce(key, value) if key in DEFAULTS and value is not None else value
    return out


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _train_cfg(o) -> TrainConfig:
    return TrainConfig(epochs=o["epochs"], learning_rate=o["lr"], weight_decay=o["weight_decay"], seed=o["seed"])


def _victim_cfg(o) -> VictimConfig:
    return VictimConfig(
        hidden_dim=o["hidden"], dropout=o["dropout"], epochs=o["victim_epochs"],
        n_trials=o["trials"], base_seed=o["seed"],
    )


def _load(o):
    bundle = load_dataset(o["data"])
    return bundle.lcc() if o["lcc"] else bundle


def _emit(text: str, out) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_sbm(o) -> int:
    spec = SbmSpec(
        blocks=tuple(int(b) for b in _floats(o["blocks"])),
        p_in=o["p_in"], p_out=o["p_out"], feature_dim=o["feature_dim"],
        feature_noise=o["noise"], seed=o["seed"],
    )
    bundle = generate_sbm(spec)
    write_dataset(bundle, o["out"])
    log.info("wrote %s: n=%d, m=%d", o["out"], bundle.graph.n, bundle.graph.num_edges)
    return 0


def cmd_attack(o) -> int:
    bundle = _load(o)
    method = o["objective"] if o["objective"] in ("random", "dice") else AttackObjective.parse(o["objective"]).value
    run = analysis.perturb(bundle, method, o["budget"], o["seed"], _train_cfg(o), o["retrain_every"])
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "flips.log").write_text(format_log(run), encoding="utf-8")
    write_edges(out / "edges.tsv", run.final_graph)
    log.info("%s: %d/%d flips%s", method, len(run.flips), run.budget, " (stopped early)" if run.truncated else "")
    return 0


def cmd_eval(o) -> int:
    bundle = _load(o)
    g = bundle.graph
    if o["flips"] and o["edges"]:
        raise UsageError("--flips and --edges are mutually exclusive")
    if o["flips"]:
        _, records = parse_log(Path(o["flips"]).read_text(encoding="utf-8"), o["flips"])
        g = replay(g, records)
    elif o["edges"]:
        edges = np.loadtxt(o["edges"], dtype=np.int64, delimiter="\t", ndmin=2, comments="#")
        g = g.with_edges(edges.reshape(-1, 2))
    report = trial_suite(g, bundle.labeled, bundle.unlabeled, _victim_cfg(o))
    _emit(format_report(report), o["out"])
    log.info("accuracy %.4f ± %.4f", report.mean, report.std)
    return 0


def cmd_scatter(o) -> int:
    bundle = _load(o)
    g = bundle.attacker_view()
    params = train(g, bundle.labeled, _train_cfg(o))
    table = pseudo_label_table(params, g)
    records = []
    for obj in o["objectives"].split(","):
        records += analysis.confidence_gradient_scatter(params, g, bundle.unlabeled, table, obj.strip())
    _emit(analysis.format_scatter(records), o["out"])
    return 0


def cmd_hist(o) -> int:
    bundle = _load(o)
    graphs = {"clean": bundle.graph}
    for item in o["flips"] or []:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).parent.name or Path(item).stem, item
        _, records = parse_log(Path(path).read_text(encoding="utf-8"), path)
        graphs[name] = replay(bundle.graph, records)
    victim = _victim_cfg(o)
    report = analysis.confidence_histogram(graphs, bundle.labeled, "clean", victim, o["seed"], o["bins"])
    _emit(analysis.format_histogram(report), o["out"])
    return 0


def cmd_curve(o) -> int:
    bundle = _load(o)
    objectives = [x.strip() for x in o["objectives"].split(",") if x.strip()]
    for obj in objectives:
        if obj not in METHODS:
            AttackObjective.parse(obj)
    rows = analysis.attack_curve(bundle, objectives, _floats(o["budgets"]), _victim_cfg(o), o["seed"], _train_cfg(o))
    _emit(analysis.format_curve(rows), o["out"])
    return 0


def check_gradients(n, edge_prob, d, k, eps, seed, instances=1, train_cfg=TrainConfig()):
    """Max relative Frobenius error of the analytic gradient per objective."""
    worst = {obj: 0.0 for obj in AttackObjective}
    for t in range(instances):
        g, labeled = random_instance(n, edge_prob, d, k, seed + t)
        seen = g.mask_labels(labeled)
        params = train(seen, labeled, train_cfg)
        table = pseudo_label_table(params, seen)
        targets = np.setdiff1d(np.arange(n), labeled)
        for obj in AttackObjective:
            exact = structural_gradient(params, seen, targets, table, obj).matrix
            approx = finite_difference_gradient(params, seen, targets, table, obj, eps)
            err = np.linalg.norm(exact - approx) / max(np.linalg.norm(approx), np.finfo(float).tiny)
            worst[obj] = max(worst[obj], float(err))
    return worst


def cmd_check_grad(o) -> int:
    worst = check_gradients(o["n"], o["edge_prob"], o["d"], o["k"], o["eps"], o["seed"], o["instances"], _train_cfg(o))
    ok = True
    for obj, err in worst.items():
        status = "ok" if err <= o["tol"] else "FAIL"
        ok &= err <= o["tol"]
        print(f"{obj.value}\tmax_rel_error={err:.3e}\t{status}")
    print(f"max relative error: {max(worst.values()):.3e} (tolerance {o['tol']:g})")
    return 0 if ok else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="graphpoison", description="Gradient-based poisoning attacks on graph structure.")
    p.add_argument("--config", help="key=value file supplying option defaults")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_opts(sp):
        sp.add_argument("--data", required=True, help="dataset directory")
        sp.add_argument("--lcc", action="store_const", const=True, default=None, help="restrict to the largest connected component")
        sp.add_argument("--seed", type=int)

    def surrogate_opts(sp):
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--weight-decay", type=float)

    def victim_opts(sp):
        sp.add_argument("--trials", type=int)
        sp.add_argument("--hidden", type=int)
        sp.add_argument("--dropout", type=float)
        sp.add_argument("--victim-epochs", type=int)

    sp = sub.add_parser("gen-sbm", help="write a synthetic SBM dataset directory")
    sp.add_argument("--blocks")
    sp.add_argument("--p-in", type=float)
    sp.add_argument("--p-out", type=float)
    sp.add_argument("--feature-dim", type=int)
    sp.add_argument("--noise", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_sbm)

    sp = sub.add_parser("attack", help="poison a dataset; writes flips.log and edges.tsv")
    data_opts(sp)
    surrogate_opts(sp)
    sp.add_argument("--objective", choices=METHODS)
    sp.add_argument("--budget", type=float, help="fraction of edges to flip")
    sp.add_argument("--retrain-every", type=int)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("eval", help="victim accuracy over several seeds (CSV)")
    data_opts(sp)
    victim_opts(sp)
    sp.add_argument("--flips", help="flip log to replay onto the dataset")
    sp.add_argument("--edges", help="edge list replacing the dataset's edges")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)

    ap = sub.add_parser("analyze", help="diagnostic CSVs")
    asub = ap.add_subparsers(dest="analysis", required=True, parser_class=_Parser)
    sp = asub.add_parser("scatter", help="confidence vs partial-gradient norm")
    data_opts(sp)
    surrogate_opts(sp)
    sp.add_argument("--objectives")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_scatter)
    sp = asub.add_parser("hist", help="confidence histograms of clean and poisoned graphs")
    data_opts(sp)
    victim_opts(sp)
    sp.add_argument("--flips", action="append", help="NAME=LOG, repeatable")
    sp.add_argument("--bins", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_hist)
    sp = asub.add_parser("curve", help="victim accuracy vs budget")
    data_opts(sp)
    surrogate_opts(sp)
    victim_opts(sp)
    sp.add_argument("--objectives")
    sp.add_argument("--budgets")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_curve)

    sp = sub.add_parser("check-grad", help="compare analytic and finite-difference gradients")
    sp.add_argument("--n", type=int)
    sp.add_argument("--edge-prob", type=float)
    sp.add_argument("--d", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--instances", type=int)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--seed", type=int)
    surrogate_opts(sp)
    sp.set_defaults(func=cmd_check_grad)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        opts = resolve(args)
        return args.func(opts)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        log.exception("internal error")
        return 2


if __name__ == "__main__":
    sys.exit(main())
