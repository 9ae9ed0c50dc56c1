"""Command-line front end: ``rdnn {train,eval,cluster,synth,gradcheck}``.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numerical
failure (divergence or a failed gradient check).
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields

from .analysis import group_report, spectral_cluster
from .dataio import load_labels, load_manifest, split
from .exceptions import DivergenceError, FormatError, InvalidInputError, RdnnError, ShapeError
from .gradcheck import PATTERNS, TOLERANCE, run_gradcheck
from .metrics import metric_report
from .model import NetworkConfig, load_model, save_model
from .relations import load_relation, save_relation, update_class_relation
from .synth import SynthSpec, write_synth
from .training import TrainConfig, build_baseline, predict_plan, train_plan

log = logging.getLogger("rdnn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# subsystem seeds are fixed offsets from --seed
INIT_OFFSET, SHUFFLE_OFFSET, SPLIT_OFFSET, CLUSTER_OFFSET = 0, 1, 2, 3

NETWORK_KEYS = ("transform_dim", "fusion_dim", "transform_depth")
TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig) if f.name not in ("seed", "mode"))
KINDS = ("rdnn", "rdnn-f", "rdnn-c", "dnn", "nn-ef", "nn-lf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _run_manifest(command, args, config, paths):
    return {
        "command": command,
        "argv": args.argv if args.record_argv else None,
        "seed": getattr(args, "seed", None),
        "config": config,
        "paths": paths,
    }


def _select_subset(dataset, args):
    if args.split is None:
        return dataset
    train, test = split(dataset, args.split, args.seed + SPLIT_OFFSET)
    return train if args.subset == "train" else test


# -- train ----------------------------------------------------------------------

def _resolve_train_config(args):
    cfg = _read_json(args.config) if args.config else {}
    unknown = set(cfg) - set(TRAIN_KEYS) - set(NETWORK_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for key in TRAIN_KEYS + NETWORK_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    net = {k: cfg.pop(k) for k in NETWORK_KEYS if k in cfg}
    return cfg, net


def cmd_train(args):
    cfg_dict, net_kw = _resolve_train_config(args)
    kind = args.mode
    mode = kind if kind in ("rdnn", "rdnn-f", "rdnn-c", "dnn") else "dnn"
    train_cfg = TrainConfig(seed=args.seed + SHUFFLE_OFFSET, mode=mode, **cfg_dict)
    dataset = _select_subset(load_manifest(args.data), args)
    net = NetworkConfig(input_dims=dataset.input_dims, num_categories=dataset.num_categories, **net_kw)
    plan = build_baseline("rdnn" if kind in ("rdnn", "rdnn-f", "rdnn-c", "dnn") else kind, net)

    runs = train_plan(plan, dataset.features, dataset.labels, train_cfg, init_seed=args.seed + INIT_OFFSET)

    os.makedirs(args.out, exist_ok=True)
    single = len(runs) == 1
    names = []
    reports, timings = [], []
    for i, (model, psi, omega, report) in enumerate(runs):
        suffix = "" if single else f"_{i}"
        save_model(model, os.path.join(args.out, f"model{suffix}.rdnm"))
        save_relation(psi, os.path.join(args.out, f"psi{suffix}.txt"))
        save_relation(omega, os.path.join(args.out, f"omega{suffix}.txt"))
        names.append(f"model{suffix}.rdnm")
        reports.append(report.to_dict())
        timings.append(report.epoch_seconds)
    report_doc = dict(reports[0]) if single else {"networks": reports}
    report_doc["kind"] = kind
    _write_json(os.path.join(args.out, "report.json"), report_doc)
    _write_json(os.path.join(args.out, "timing.json"), {"epoch_seconds": timings})
    _write_json(os.path.join(args.out, "plan.json"), {
        "kind": plan.kind,
        "models": names,
        "groups": [list(g) for g in plan.groups],
        "concatenate": plan.concatenate,
        "category_names": dataset.category_names,
        "modality_names": dataset.modality_names,
    })
    config = {"train": train_cfg.to_dict(), "network": asdict(net), "kind": kind,
              "split": args.split, "subset": args.subset}
    _write_json(os.path.join(args.out, "run_manifest.json"),
                _run_manifest("train", args, config, {"data": args.data, "config": args.config, "out": args.out}))
    last = runs[0][3]
    print(f"trained {kind} for {train_cfg.epochs} epochs; final objective {last.objective[-1]:.6g}")
    return EXIT_OK


# -- eval -----------------------------------------------------------------------

def _load_plan(args):
    if args.run:
        doc = _read_json(os.path.join(args.run, "plan.json"))
        models = [load_model(os.path.join(args.run, p)) for p in doc["models"]]
        kind = doc["kind"]
    else:
        models = [load_model(p) for p in args.model]
        kind = args.kind or ("nn-lf" if len(models) > 1 else "rdnn")
    return kind, models


def cmd_eval(args):
    if not args.run and not args.model:
        raise UsageError("eval needs --run or --model")
    kind, models = _load_plan(args)
    dataset = _select_subset(load_manifest(args.data), args)
    c_model = models[0].config.num_categories
    if c_model != dataset.num_categories:
        raise ShapeError(f"model predicts {c_model} categories but the labels have {dataset.num_categories}")
    net = NetworkConfig(input_dims=dataset.input_dims, num_categories=dataset.num_categories,
                        transform_dim=models[0].config.transform_dim, fusion_dim=models[0].config.fusion_dim,
                        transform_depth=models[0].config.transform_depth)
    plan = build_baseline(kind, net)
    if len(models) != len(plan.configs):
        raise ShapeError(f"{kind} needs {len(plan.configs)} model(s), got {len(models)}")
    for mdl, expect in zip(models, plan.configs):
        if mdl.config.input_dims != expect.input_dims:
            raise ShapeError(f"model input dims {mdl.config.input_dims} do not match data dims {expect.input_dims}")
    scores = predict_plan(plan, models, dataset.features)
    report = metric_report(scores, dataset.labels, dataset.category_names)
    report["kind"] = kind
    report["n_samples"] = len(dataset)
    if args.out:
        _write_json(args.out, report)
        _write_json(_manifest_path(args.out), _run_manifest(
            "eval", args, {"kind": kind, "split": args.split, "subset": args.subset},
            {"data": args.data, "run": args.run, "model": args.model, "out": args.out}))
    print(f"mAP {report['map']:.4f}")
    return EXIT_OK


def _manifest_path(out):
    stem, _ = os.path.splitext(out)
    return f"{stem}.manifest.json"


# -- cluster ----------------------------------------------------------------------

def cmd_cluster(args):
    sources = [s for s in (args.omega, args.model, args.run) if s]
    if len(sources) != 1:
        raise UsageError("cluster needs exactly one of --omega, --model, --run")
    if args.omega:
        omega = load_relation(args.omega)
    elif args.model:
        omega = update_class_relation(load_model(args.model).output_weights)
    else:
        omega = load_relation(os.path.join(args.run, "omega.txt"))
    c = omega.shape[0]
    if not 1 <= args.k <= c:
        raise UsageError(f"--k must lie in [1, {c}], got {args.k}")
    names = None
    if args.labels:
        names = load_labels(args.labels)[2]
        if len(names) != c:
            raise ShapeError(f"label file has {len(names)} categories, omega has {c}")
    groups = spectral_cluster(omega, args.k, args.seed + CLUSTER_OFFSET)
    report = group_report(omega, groups, names)
    _write_json(args.out, report)
    _write_json(_manifest_path(args.out), _run_manifest(
        "cluster", args, {"k": args.k},
        {"omega": args.omega, "model": args.model, "run": args.run, "labels": args.labels, "out": args.out}))
    for g, members in report["groups"].items():
        print(f"group {g}: {' '.join(members)}")
    return EXIT_OK


# -- synth ----------------------------------------------------------------------

def cmd_synth(args):
    spec_kw = _read_json(args.spec) if args.spec else {}
    for f in fields(SynthSpec):
        val = getattr(args, f.name, None)
        if val is not None:
            spec_kw[f.name] = val
    spec_kw["seed"] = args.seed
    spec = SynthSpec(**spec_kw)
    manifest = write_synth(args.out, spec)
    _write_json(os.path.join(args.out, "run_manifest.json"),
                _run_manifest("synth", args, asdict(spec), {"out": args.out, "spec": args.spec}))
    print(f"wrote {spec.n_samples} samples x {spec.n_modalities} modalities to {manifest}")
    return EXIT_OK


# -- gradcheck --------------------------------------------------------------------

def cmd_gradcheck(args):
    errors = run_gradcheck(args.seed, PATTERNS, n_samples=args.samples, transform_depth=args.depth)
    worst = max(errors.values())
    for (lam2, lam3), err in errors.items():
        print(f"lambda2={lam2:g} lambda3={lam3:g} max relative error {err:.3e}")
    print(f"max relative error {worst:.3e} (tolerance {TOLERANCE:g})")
    return EXIT_OK if worst < TOLERANCE else EXIT_NUMERIC


# -- parser -------------------------------------------------------------------------

def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser():
    p = _Parser(prog="rdnn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--no-argv", dest="record_argv", action="store_false",
                        help="leave the command line out of the run manifest")

    def subset_args(sp):
        sp.add_argument("--split", type=float, default=None, help="train fraction of a seeded split")
        sp.add_argument("--subset", choices=("train", "test"), default="train")

    t = sub.add_parser("train", help="train a fused network or a fusion baseline")
    common(t)
    subset_args(t)
    t.add_argument("--data", required=True)
    t.add_argument("--config")
    t.add_argument("--mode", choices=KINDS, default="rdnn")
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int)
    t.add_argument("--learning-rate", dest="learning_rate", type=float)
    for lam in ("lambda1", "lambda2", "lambda3"):
        t.add_argument(f"--{lam}", type=float)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--eps", type=float)
    t.add_argument("--loss", choices=("bce", "squared"))
    t.add_argument("--transform-dim", dest="transform_dim", type=int)
    t.add_argument("--fusion-dim", dest="fusion_dim", type=int)
    t.add_argument("--transform-depth", dest="transform_depth", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a trained run on a data set")
    common(e)
    subset_args(e)
    e.add_argument("--data", required=True)
    e.add_argument("--run")
    e.add_argument("--model", action="append")
    e.add_argument("--kind", choices=("rdnn", "nn-ef", "nn-lf"))
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("cluster", help="group categories by spectral clustering of omega")
    common(c)
    c.add_argument("--omega")
    c.add_argument("--model")
    c.add_argument("--run")
    c.add_argument("--labels", help="label CSV supplying category names")
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_cluster)

    s = sub.add_parser("synth", help="write a synthetic data set with planted groups")
    common(s)
    s.add_argument("--out", required=True)
    s.add_argument("--spec")
    s.add_argument("--n-samples", dest="n_samples", type=int)
    s.add_argument("--n-categories", dest="n_categories", type=int)
    s.add_argument("--n-groups", dest="n_groups", type=int)
    s.add_argument("--latent-dim", dest="latent_dim", type=int)
    s.add_argument("--modality-dims", dest="modality_dims", type=_int_list)
    s.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    s.add_argument("--group-spread", dest="group_spread", type=float)
    s.add_argument("--positive-rate", dest="positive_rate", type=float)
    s.add_argument("--complementary", dest="complementary", action=argparse.BooleanOptionalAction, default=None)
    s.set_defaults(func=cmd_synth)

    g = sub.add_parser("gradcheck", help="compare backprop with finite differences")
    common(g)
    g.add_argument("--samples", type=int, default=1)
    g.add_argument("--depth", type=int, default=1)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, TypeError) as exc:
        print(f"rdnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"rdnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InvalidInputError as exc:
        print(f"rdnn {args.command}: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ShapeError, OSError, ValueError, KeyError, RdnnError) as exc:
        print(f"rdnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
