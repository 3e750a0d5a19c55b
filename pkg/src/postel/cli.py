"""Command-line entry point: ``postel {smooth,run,gen-synth,verify,sweep}``.

Exit codes: 0 success, 1 verification violation, 2 input error,
3 statistics error, 4 training divergence, 5 infeasible spec.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from . import __version__
from . import io as pio
from .errors import (InfeasibleSpec, InputError, InsufficientPairs, NoLabeledNodes,
                     NonFiniteLoss, PostelError)
from .graph import build_graph
from .nn import TrainConfig
from .pipeline import (ALPHA_GRID, BETA_GRID, Ablation, ExperimentConfig, grid_sweep,
                       iterative_pseudo_label, parse_variant, stratified_split)
from .smoothing import BLENDED, ONE_HOT, blend_rows, posterior_all, posterior_all_local
from .stats import LabelState, Source, class_homophily, estimate_stats
from . import synthlab

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_STATS, EXIT_DIVERGED, EXIT_INFEASIBLE = range(6)

# flags that never change results; kept out of the provenance line
_NON_RESULT_FLAGS = {"command", "config", "func", "jobs"}


def _floats(text):
    try:
        return tuple(float(t) for t in str(text).split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _variant(text):
    try:
        parse_variant(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def read_config(path) -> dict:
    """Parse ``key = value`` lines; keys may use dashes or underscores."""
    out = {}
    with pio._open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            s = raw.strip()
            if not s or s.startswith("#"):
                continue
            if "=" not in s:
                raise InputError(path, "expected key=value", lineno)
            key, value = (p.strip() for p in s.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = value
    return out


def provenance(args) -> str:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in _NON_RESULT_FLAGS}
    parts = " ".join(f"--{k.replace('_', '-')}={_fmt(v)}" for k, v in flags.items())
    return f"postel {__version__} {args.command} {parts}"


def _fmt(v):
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return str(v)


def _dump_json(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _add_dataset(p, features_required=False):
    p.add_argument("--edges", required=True, help="edge-list file")
    p.add_argument("--labels", required=True, help="CSV node,label")
    p.add_argument("--features", required=features_required, default=None, help="CSV node,f0,...")
    p.add_argument("--split", default=None, help="CSV node,role (default: seeded 60/20/20)")


def _add_training(p):
    d = TrainConfig()
    p.add_argument("--model", choices=("gcn", "mlp"), default=d.model_kind)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--variant", type=_variant, default="global")
    p.add_argument("--floor", type=float, default=1e-12)
    p.add_argument("--max-iters", type=int, default=10)
    p.add_argument("--iterate", type=_bool, nargs="?", const=True, default=True)
    p.add_argument("--no-iterate", dest="iterate", action="store_false")
    p.add_argument("--posterior-smoothing", type=_bool, default=True)
    p.add_argument("--uniform-noise", type=_bool, default=True)
    p.add_argument("--method", choices=("postel", "onehot", "uniform", "neighbor"), default="postel")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label-fraction", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=d.max_epochs)
    p.add_argument("--patience", type=int, default=d.patience)
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--weight-decay", type=float, default=d.weight_decay)
    p.add_argument("--hidden", type=int, default=d.hidden_dim)
    p.add_argument("--dropout", type=float, default=d.dropout)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="postel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"postel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("smooth", help="write posterior soft labels")
    _add_dataset(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--variant", type=_variant, default="global")
    p.add_argument("--floor", type=float, default=1e-12)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("run", help="train with smoothed targets and pseudo-labeling")
    _add_dataset(p, features_required=True)
    _add_training(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gen-synth", help="write a synthetic dataset bundle")
    p.add_argument("--nodes", type=int, default=500)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--homophily", type=_floats, default=(0.8, 0.8))
    p.add_argument("--avg-degree", type=float, default=5.0)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--signal", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--forbid-isolated", type=_bool, nargs="?", const=True, default=False)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("verify", help="run verification suites")
    p.add_argument("--suite", choices=("lemmas", "oracle", "independence", "all"), default="all")
    p.add_argument("--trials", type=int, default=None,
                   help="oracle trials (default 1000) or lemma pairs (default 50)")
    p.add_argument("--max-degree", type=int, default=20)
    p.add_argument("--nodes", type=int, default=2000, help="independence graph size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--corrupt-stats", type=_bool, nargs="?", const=True, default=False,
                   help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="grid search over alpha and beta")
    _add_dataset(p, features_required=True)
    _add_training(p)
    p.add_argument("--alpha-grid", type=_floats, default=ALPHA_GRID)
    p.add_argument("--beta-grid", type=_floats, default=BETA_GRID)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    for sp in sub.choices.values():
        sp.add_argument("--config", default=None, help="file of key=value defaults")
    return parser


def parse_args(argv=None):
    """Parse with precedence flags > --config file > built-in defaults."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    config = pre.parse_known_args(argv)[0].config
    subparsers = parser._subparsers._group_actions[0].choices
    command = next((t for t in argv if t in subparsers), None)
    if config and command:
        values = read_config(config)
        sp = subparsers[command]
        actions = {a.dest: a for a in sp._actions}
        for key in values:
            if key not in actions or key in ("help", "config"):
                raise InputError(config, f"unknown key {key!r}")
            # a required flag may be supplied by the file instead
            actions[key].required = False
        sp.set_defaults(**values)
    return parser.parse_args(argv)


# ---------------------------------------------------------------- commands

def _load(args):
    bundle = pio.DatasetBundle(args.edges, args.labels, getattr(args, "features", None),
                               getattr(args, "split", None))
    n, edges, y, x, split = bundle.load()
    return build_graph(n, edges), y, x, split


def cmd_smooth(args) -> int:
    g, y, _, _ = _load(args)
    if not (y >= 0).any():
        raise NoLabeledNodes("labels file has no labeled nodes")
    k = int(y.max()) + 1
    labels = LabelState.from_ground_truth(np.where(y >= 0, y, 0), k, y >= 0)
    kind, hops = parse_variant(args.variant)
    sources = Source.GROUND_TRUTH
    if kind == "local":
        post = posterior_all_local(g, labels, hops, sources, args.floor)
    else:
        post = posterior_all(g, labels, estimate_stats(g, labels, sources, kind), args.floor)
    matrix, prov = post.matrix.copy(), post.provenance.copy()
    lab = np.flatnonzero(y >= 0)
    if args.alpha == 0.0:
        matrix[lab] = np.eye(k)[y[lab]]
        prov[lab] = ONE_HOT
    else:
        matrix[lab] = blend_rows(post.matrix[lab], y[lab], args.alpha, args.beta)
        prov[lab] = BLENDED
    pio.write_soft_labels(args.out, matrix, prov, comment=provenance(args))
    return EXIT_OK


def _experiment_config(args) -> ExperimentConfig:
    # --no-iterate and --max-iters 0 resolve to the same configuration
    iterate = bool(args.iterate) and args.max_iters > 0
    args.iterate, args.max_iters = iterate, (args.max_iters if iterate else 0)
    trainer = TrainConfig(learning_rate=args.lr, weight_decay=args.weight_decay,
                          max_epochs=args.epochs, patience=args.patience, hidden_dim=args.hidden,
                          dropout=args.dropout, seed=args.seed, model_kind=args.model)
    return ExperimentConfig(alpha=args.alpha, beta=args.beta, variant=args.variant,
                            ablation=Ablation(args.posterior_smoothing, args.uniform_noise, iterate),
                            max_pl_iterations=args.max_iters, trainer=trainer,
                            label_fraction=args.label_fraction, floor=args.floor,
                            method=args.method)


def _prepare_run(args):
    g, y, x, split = _load(args)
    if not (y >= 0).any():
        raise NoLabeledNodes("labels file has no labeled nodes")
    if split is None:
        split = stratified_split(y, args.seed)
    try:
        cfg = _experiment_config(args)
    except ValueError as exc:
        raise InputError("<flags>", str(exc)) from None
    return g, y, x, split, cfg


def cmd_run(args) -> int:
    g, y, x, split, cfg = _prepare_run(args)
    res = iterative_pseudo_label(g, x, y, split, cfg, num_classes=int(y.max()) + 1)
    out = pio.ensure_dir(args.out_dir)
    header = provenance(args)
    payload = dict(provenance=header, **res.to_dict())
    _dump_json(os.path.join(out, "result.json"), payload)
    for rec in res.iterations:
        with open(os.path.join(out, f"history_iter{rec.iteration}.csv"), "w",
                  encoding="utf-8", newline="") as fh:
            rec.history.to_csv(fh, header_comment=header)
    print(f"best iteration {res.best_iteration}  test accuracy {res.final_test_accuracy:.4f}  "
          f"iterations used {res.iterations_used}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    g, y, x, split, cfg = _prepare_run(args)
    if any(not 0.0 <= a <= 1.0 for a in args.alpha_grid) or any(b < 0 for b in args.beta_grid):
        raise InputError("<flags>", "alpha grid must lie in [0, 1] and beta grid be >= 0")
    best, table = grid_sweep(g, x, y, split, cfg, args.alpha_grid, args.beta_grid,
                             num_classes=int(y.max()) + 1, n_jobs=args.jobs)
    out = pio.ensure_dir(args.out_dir)
    header = provenance(args)
    cols = ("alpha", "beta", "best_val_loss", "test_acc", "iterations_used")
    with open(os.path.join(out, "sweep.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {header}\n")
        fh.write(",".join(cols) + "\n")
        for row in table:
            fh.write(",".join(repr(row[c]) for c in cols) + "\n")
    best_row = next(r for r in table if r["alpha"] == best.alpha and r["beta"] == best.beta)
    _dump_json(os.path.join(out, "best.json"),
               dict(provenance=header, config=asdict(best), row=best_row))
    print(f"best alpha {best.alpha} beta {best.beta}  val loss {best_row['best_val_loss']:.6f}")
    return EXIT_OK


def cmd_gen_synth(args) -> int:
    spec = synthlab.SyntheticSpec(num_nodes=args.nodes, num_classes=args.classes,
                                  class_homophily=tuple(args.homophily),
                                  avg_degree=args.avg_degree, feature_dim=args.feature_dim,
                                  feature_signal=args.signal, seed=args.seed,
                                  forbid_isolated=args.forbid_isolated)
    g, labels, x = synthlab.generate(spec)
    y = labels.classes
    split = stratified_split(y, args.seed)
    out = pio.ensure_dir(args.out_dir)
    header = provenance(args)
    pio.write_edge_list(os.path.join(out, "edges.txt"), g.undirected_edges(), header)
    pio.write_labels(os.path.join(out, "labels.csv"), y, header)
    pio.write_features(os.path.join(out, "features.csv"), x, header)
    pio.write_split(os.path.join(out, "split.csv"), split, header)
    h = class_homophily(g, labels)
    print(f"{g.num_nodes} nodes, {g.num_undirected_edges} edges, class homophily "
          + ", ".join(f"{v:.3f}" for v in h))
    return EXIT_OK


def _independence_pair(nodes, seed):
    spec = synthlab.SyntheticSpec(num_nodes=nodes, num_classes=3,
                                  class_homophily=(0.6, 0.5, 0.4), avg_degree=10.0, seed=seed)
    g, labels, _ = synthlab.generate(spec)
    independent = synthlab.independence_report(g, labels)
    g2, labels2 = synthlab.correlated_pairs_graph(max(nodes // 4, 2), seed)
    adversarial = synthlab.independence_report(g2, labels2)
    # the diagnostic must separate the two constructions
    ok = independent.max_deviation <= 0.05 and adversarial.max_deviation > 0.1
    return dict(name="independence", ok=ok,
                independent=independent.to_dict(), adversarial=adversarial.to_dict(),
                violations=[] if ok else [dict(independent=independent.max_deviation,
                                               adversarial=adversarial.max_deviation)])


def cmd_verify(args) -> int:
    suites = ("lemmas", "oracle", "independence") if args.suite == "all" else (args.suite,)
    results = {}
    for name in suites:
        if name == "lemmas":
            reports = synthlab.lemma_suite(trials=args.trials or 50, max_degree=args.max_degree,
                                           seed=args.seed)
            viol = [v for r in reports for v in r.violations]
            results[name] = dict(ok=not viol, checked=sum(r.checked for r in reports),
                                 violations=viol[:100], num_violations=len(viol))
        elif name == "oracle":
            r = synthlab.oracle_agreement(trials=args.trials or 1000, seed=args.seed,
                                          corrupt=args.corrupt_stats)
            d = r.to_dict()
            d["num_violations"] = len(r.violations)
            d["violations"] = r.violations[:100]
            results[name] = d
        else:
            results[name] = _independence_pair(args.nodes, args.seed)
    ok = all(r["ok"] for r in results.values())
    payload = dict(provenance=provenance(args), ok=ok, suites=results)
    if args.out:
        _dump_json(args.out, payload)
    for name, r in results.items():
        print(f"{name}: {'ok' if r['ok'] else 'VIOLATION'}")
        if not r["ok"]:
            for v in r.get("violations", [])[:10]:
                print(f"  {v}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_VIOLATION


# ---------------------------------------------------------------- entry point

def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:
        # argparse exits 2 on usage errors, 0 on --help/--version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InfeasibleSpec as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NonFiniteLoss as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (NoLabeledNodes, InsufficientPairs) as exc:
        print(f"statistics error: {exc}", file=sys.stderr)
        return EXIT_STATS
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (PostelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
