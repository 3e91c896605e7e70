"""Command line: ``ambireg generate | train | evaluate | ingest | tradeoff``.

Failures exit nonzero after printing one line to stderr of the form
``ambireg: error[<kind>]: <message>``.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import dpd
from .config import ConfigError, load_config
from .encoder import Encoder, load_geometry
from .experiment import (
    MODES,
    IngestError,
    dataset_dirs,
    evaluate,
    generate,
    ingest,
    read_dataset,
    sweep_features,
    tradeoff,
    train_model,
    write_features,
    write_report,
    write_tradeoff,
)


class CLIError(Exception):
    def __init__(self, kind, message, code=1):
        super().__init__(message)
        self.kind = kind
        self.code = code


def _config(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg, cfg.resolve_output(args.out)


def cmd_generate(args):
    cfg, out = _config(args)
    paths = generate(cfg, out)
    print(f"wrote {len(paths)} recordings under {out / 'data'}")


def cmd_train(args):
    cfg, out = _config(args)
    data = Path(args.data) if args.data else dataset_dirs(out)[args.mode]
    if not data.is_dir():
        raise CLIError("missing-dataset", f"{data} does not exist; run 'generate' first")
    recs = read_dataset(data)
    try:
        result, _ = train_model(recs, args.mode, cfg)
    except dpd.DegenerateDataError as err:
        raise CLIError("degenerate-labels", str(err)) from None
    models = out / "models"
    models.mkdir(parents=True, exist_ok=True)
    dpd.save_params(result.params, models / f"{args.mode}.txt")
    dpd.write_history(result.history, models / f"{args.mode}_history.csv")
    print(f"model {models / (args.mode + '.txt')} (best epoch {result.best_epoch})")


def _load_model(path, channels):
    try:
        params = dpd.load_params(path)
    except (OSError, ValueError) as err:
        raise CLIError("bad-model", f"{path}: {err}") from None
    if params.sizes[0] != channels:
        raise CLIError("dimension-mismatch", f"{path}: model takes {params.sizes[0]} features, encoding gives {channels}")
    return params


def cmd_evaluate(args):
    cfg, out = _config(args)
    test_root = Path(args.data) if args.data else dataset_dirs(out)["test"]
    seed_dirs = sorted(test_root.glob("seed_*")) if test_root.is_dir() else []
    if not seed_dirs:
        raise CLIError("missing-dataset", f"no test sets under {test_root}; run 'generate' first")
    channels = (cfg.order + 1) ** 2
    models = {args.mode: _load_model(args.model or out / "models" / f"{args.mode}.txt", channels)}
    if args.compare:
        other = MODES[1 - MODES.index(args.mode)]
        models[other] = _load_model(args.compare, channels)
    test_sets = {int(d.name.split("_", 1)[1]): read_dataset(d) for d in seed_dirs}
    encoder = Encoder(load_geometry(cfg.geometry), cfg.order)
    report = evaluate(models, sweep_features(test_sets, cfg, encoder), cfg)
    paths = write_report(report, out / "report", plots=not args.no_plots)
    print("\n".join(str(p) for p in paths.values()))


def cmd_ingest(args):
    cfg = load_config(args.config)
    out = cfg.resolve_output(args.out)
    geom = load_geometry(args.geometry)
    _, feats = ingest(args.wav, geom, args.lam, cfg)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{Path(args.wav).stem}_features.npz"
    write_features(feats, path)
    print(json.dumps({"features": str(path), "lam": feats.meta["lam"], "bins": len(feats)}))


def cmd_tradeoff(args):
    cfg = load_config(args.config)
    out = cfg.resolve_output(args.out)
    out.mkdir(parents=True, exist_ok=True)
    freqs = np.linspace(*cfg.band, args.points)
    lams = args.lams
    g, d = tradeoff(Encoder(load_geometry(cfg.geometry), cfg.order), freqs, lams)
    write_tradeoff(freqs, lams, g, d, out / "tradeoff.csv")
    if not args.no_plots:
        from .plots import plot_tradeoff

        plot_tradeoff(freqs, lams, g, d, out / "tradeoff.png")
    print(out / "tradeoff.csv")


def build_parser():
    p = argparse.ArgumentParser(prog="ambireg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="YAML experiment config (defaults if omitted)")
        sp.add_argument("--out", help="output directory (overrides config and AMBIREG_OUT)")
        if seed:
            sp.add_argument("--seed", type=int, help="global seed offset")

    sp = sub.add_parser("generate", help="simulate training and test recordings")
    common(sp)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("train", help="train the direct-path classifier")
    common(sp)
    sp.add_argument("--mode", choices=MODES, default="uninformed")
    sp.add_argument("--data", help="recording directory (default: <out>/data/train_<mode>)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="run the regularization sweep and write reports")
    common(sp)
    sp.add_argument("--mode", choices=MODES, default="uninformed")
    sp.add_argument("--model", help="model file (default: <out>/models/<mode>.txt)")
    sp.add_argument("--compare", help="model of the other mode, for the side-by-side table")
    sp.add_argument("--data", help="test root with seed_* directories")
    sp.add_argument("--no-plots", action="store_true", help="write CSV only")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("ingest", help="encode an external array recording")
    common(sp, seed=False)
    sp.add_argument("wav")
    sp.add_argument("--geometry", default="builtin", help="array layout file")
    sp.add_argument("--lam", type=float, required=True, help="regularization level")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("tradeoff", help="noise gain and distortion against frequency")
    common(sp, seed=False)
    sp.add_argument("--lams", type=float, nargs="+", default=[0.01, 0.05, 0.25, 0.5, 1.0, 1.5])
    sp.add_argument("--points", type=int, default=50)
    sp.add_argument("--no-plots", action="store_true")
    sp.set_defaults(func=cmd_tradeoff)
    return p


def _fail(kind, message, code):
    print(f"ambireg: error[{kind}]: {message}", file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CLIError as err:
        return _fail(err.kind, err, err.code)
    except ConfigError as err:
        return _fail("config", err, 2)
    except IngestError as err:
        return _fail("input-mismatch", err, 3)
    except (OSError, ValueError) as err:
        return _fail(type(err).__name__, err, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
