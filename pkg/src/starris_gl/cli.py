"""Command-line entry point: ``starris-gl <command> [options]``.

Commands: gen-data, train, eval, sweep, flops, selftest. Every command that
writes results first writes ``manifest-<command>.json`` (atomically) into the
output directory; result files reference the manifest id. On failure the
process exits nonzero and prints a one-line JSON error with a category.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import pipeline as pl
from .config import ConfigError, RunConfig, load_config
from .rates import GridTooLargeError, NumericalError

EXIT_CODES = {"internal": 1, "config": 2, "hash_mismatch": 3, "data": 4, "numerical": 5, "usage": 6, "io": 7}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def parse_values(text: str) -> list[float]:
    """``"10..50"`` (step 10), ``"10..50/5"`` (step 5) or ``"10,20,40"``."""
    try:
        if ".." in text:
            span, _, step = text.partition("/")
            lo, hi = (float(v) for v in span.split(".."))
            step = float(step) if step else 10.0
            if step <= 0 or hi < lo:
                raise ValueError
            n = int(np.floor((hi - lo) / step + 1e-9)) + 1
            return [lo + i * step for i in range(n)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError("usage", f"cannot parse sweep values {text!r}") from None


def out_dir(args) -> Path:
    env = os.environ.get("STARRIS_GL_OUT")
    path = Path(env) if env else Path(args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def build_config(args) -> RunConfig:
    cfg = load_config(args.config, args.set or None)
    if args.seed is not None:
        cfg = cfg.with_overrides({"experiment.seed": args.seed})
    return cfg


def n_threads(args) -> int:
    return args.threads if args.threads and args.threads > 0 else (os.cpu_count() or 1)


def manifest_id(command: str, params: dict, cfg: RunConfig) -> str:
    blob = json.dumps({"command": command, "params": params, "config_hash": cfg.hash()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_manifest(directory: Path, command: str, params: dict, cfg: RunConfig, outputs: list[str]) -> str:
    from .io import atomic_write_bytes

    mid = manifest_id(command, params, cfg)
    manifest = {
        "manifest_id": mid,
        "tool": "starris-gl",
        "version": __version__,
        "command": command,
        "params": params,
        "config_hash": cfg.hash(),
        "data_hash": cfg.data_hash(),
        "seeds": {"experiment": cfg.experiment.seed},
        "config": cfg.to_dict(),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "outputs": outputs,
    }
    atomic_write_bytes(directory / f"manifest-{command}.json", json.dumps(manifest, indent=2).encode())
    return mid


def replay_argv(manifest: dict, config_path) -> list[str]:
    """Command line that reruns a manifest's command.

    ``config_path`` must hold ``manifest["config"]`` (YAML or JSON). Output
    directory and thread flags are left to the caller.
    """
    command, p = manifest["command"], manifest["params"]
    argv = [command.split("-")[0] if command.startswith("sweep-") else command, "--config", str(config_path)]
    if command == "gen-data":
        argv += ["--split", p["split"]] + (["--n", str(p["n"])] if p["n"] else [])
    elif command == "train":
        argv += ["--data", p["data"]]
    elif command == "eval":
        argv += (["--model", p["model"]] if p["model"] else []) + (["--data", p["data"]] if p["data"] else []) + (["--n-eval", str(p["n_eval"])] if p["n_eval"] else [])
    elif command.startswith("sweep-"):
        argv += [p["axis"], ",".join(repr(float(v)) for v in p["values"]),
                 "--schemes", ",".join(p["schemes"]), "--n-eval", str(p["n_eval"])]
        argv += ["--model", p["model"]] if p["model"] else []
    elif command == "flops":
        argv += ["--model", p["model"]] if p["model"] else []
    else:
        raise CliError("usage", f"cannot replay command {command!r}")
    return argv


def _write_text(path: Path, text: str) -> None:
    from .io import atomic_write_bytes

    atomic_write_bytes(path, text.encode())


def cmd_gen_data(args, cfg):
    from . import io

    d = out_dir(args)
    e = cfg.experiment
    splits = ["train", "test"] if args.split == "both" else [args.split]
    sizes = {"train": args.n if args.n else e.n_train, "test": args.n if args.n else e.n_test}
    starts = {"train": 0, "test": pl.TEST_OFFSET}
    outputs = [f"dataset_{s}.npz" for s in splits]
    write_manifest(d, "gen-data", {"split": args.split, "n": args.n, "sizes": sizes}, cfg, outputs)
    for split in splits:
        data = pl.generate_dataset(cfg, sizes[split], e.seed, start=starts[split],
                                   chunk_dir=d / f"chunks_{split}", n_jobs=n_threads(args))
        io.save_dataset(d / f"dataset_{split}.npz", data, cfg)
        print(f"wrote {d / f'dataset_{split}.npz'} ({len(data)} samples, data hash {data.data_hash})")


def cmd_train(args, cfg):
    from . import io

    d = out_dir(args)
    data_path = Path(args.data) if args.data else d / "dataset_train.npz"
    data = io.load_dataset(data_path, expect_hash=cfg.data_hash())
    model_path = d / "model.npz"
    write_manifest(d, "train", {"data": str(data_path)}, cfg, [model_path.name])
    model = pl.train(data, cfg, n_jobs=n_threads(args))
    io.save_model(model_path, model)
    pre = model.precoder
    print(f"wrote {model_path} (model hash {io.model_hash(model)}, {pre.n_features_} Saab features)")
    print(f"validation MSE {np.nanmean(pre.val_mse_):.6g} vs mean predictor {np.nanmean(pre.val_baseline_mse_):.6g}")


def _load_model(args, cfg):
    from . import io

    path = Path(args.model) if args.model else out_dir(args) / "model.npz"
    return io.load_model(path, expect_data_hash=cfg.data_hash())


def cmd_eval(args, cfg):
    from . import io

    d = out_dir(args)
    model = _load_model(args, cfg)
    csv_path = d / "eval.csv"
    params = {"model": args.model, "data": args.data, "n_eval": args.n_eval}
    mid = write_manifest(d, "eval", params, cfg, [csv_path.name, "eval.json"])
    if args.data:
        data = io.load_dataset(args.data, expect_hash=model.data_hash)
        values = pl.evaluate_dataset(model, data, cfg)
    else:
        n = args.n_eval or cfg.experiment.n_test
        values = pl.evaluate_schemes(cfg, n, cfg.experiment.seed, pl.SCHEMES, model, n_jobs=n_threads(args))
    report = pl.ExperimentReport("power", seeds={"eval": cfg.experiment.seed})
    for scheme in pl.SCHEMES:
        report.rows.append((cfg.system.tx_power_dbm, pl.SchemeStat.from_values(scheme, values[scheme])))
    _write_text(csv_path, report.to_csv(f"manifest {mid}"))
    p = cfg.system.tx_power_dbm
    summary = {
        "manifest_id": mid,
        "means": {s: report.stat(p, s).mean for s in pl.SCHEMES},
        "gl_over_bcd": report.gl_bcd_ratio(p),
        "gl_over_random": report.stat(p, "gl").mean / report.stat(p, "random").mean,
        "n": report.stat(p, "bcd").n,
    }
    _write_text(d / "eval.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(report.to_csv().strip())
    print(f"GL/BCD = {summary['gl_over_bcd']:.4f}, GL/random = {summary['gl_over_random']:.4f}")


def cmd_sweep(args, cfg):
    d = out_dir(args)
    values = parse_values(args.values)
    schemes = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
    bad = set(schemes) - set(pl.SCHEMES)
    if bad:
        raise CliError("usage", f"unknown scheme(s) {sorted(bad)}")
    model = None
    if "gl" in schemes and not pl.needs_retrain(cfg, args.axis):
        model = _load_model(args, cfg)
    n_eval = args.n_eval or cfg.experiment.n_test
    csv_path = d / f"sweep_{args.axis}.csv"
    params = {"axis": args.axis, "values": values, "schemes": list(schemes), "n_eval": n_eval, "model": args.model}
    mid = write_manifest(d, f"sweep-{args.axis}", params, cfg, [csv_path.name])
    report = pl.run_sweep(cfg, args.axis, values, schemes, n_eval, cfg.experiment.seed, model,
                          n_jobs=n_threads(args))
    text = report.to_csv(f"manifest {mid}")
    _write_text(csv_path, text)
    print(text.strip())


def cmd_flops(args, cfg):
    from .flops import format_flops_table

    d = out_dir(args)
    model = None
    if args.model:
        model = _load_model(args, cfg)
    report = pl.model_flops(model, cfg) if model else pl.nominal_flops(cfg)
    mid = write_manifest(d, "flops", {"model": args.model}, cfg, ["flops.csv"])
    rows = [
        "# manifest " + mid,
        "scheme,flops",
        f"bcd,{report.bcd}",
        f"gl,{report.gl}",
        f"gl_saab,{report.saab}",
        f"gl_trees,{report.trees}",
        f"gl_decode,{report.decode}",
    ]
    _write_text(d / "flops.csv", "\n".join(rows) + "\n")
    if model is None:
        print("(no model given: upper bound with every Saab component and full trees)")
    print(format_flops_table(cfg.system, report))


def cmd_selftest(args, cfg):
    from . import selftest

    if not selftest.run(verbose=True):
        raise CliError("internal", "selftest failed")
    print("selftest: all checks passed")


COMMANDS = {
    "gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
    "sweep": cmd_sweep, "flops": cmd_flops, "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=int, help="override experiment.seed")
    common.add_argument("--threads", type=int, default=0, help="worker processes (default: all cores)")
    common.add_argument("--out-dir", default="out", help="output directory (env STARRIS_GL_OUT wins)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="config override such as gbdt.max_depth=3 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="starris-gl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="generate labelled pilot datasets")
    g.add_argument("--split", choices=["train", "test", "both"], default="both")
    g.add_argument("--n", type=int, help="samples per split (default from config)")

    t = sub.add_parser("train", parents=[common], help="train the learned precoder")
    t.add_argument("--data", help="training dataset (default OUT/dataset_train.npz)")

    e = sub.add_parser("eval", parents=[common], help="single-point rate report")
    e.add_argument("--model", help="model container (default OUT/model.npz)")
    e.add_argument("--data", help="labelled test dataset; fresh channels when omitted")
    e.add_argument("--n-eval", type=int)

    s = sub.add_parser("sweep", parents=[common], help="rate versus power, elements or distance")
    s.add_argument("axis", choices=["power", "elements", "distance"])
    s.add_argument("values", help='e.g. "10..50", "10..50/5" or "16,32,64"')
    s.add_argument("--schemes", default="bcd,gl,random")
    s.add_argument("--model", help="model used when the axis does not retrain")
    s.add_argument("--n-eval", type=int)

    f = sub.add_parser("flops", parents=[common], help="FLOPs per inference table")
    f.add_argument("--model", help="fitted model; nominal upper bound when omitted")

    sub.add_parser("selftest", parents=[common], help="run built-in example checks")
    return p


def _fail(category: str, message: str) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return EXIT_CODES[category]


def main(argv=None) -> int:
    from .io import ContainerError, HashMismatchError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        COMMANDS[args.command](args, cfg)
    except CliError as exc:
        return _fail(exc.category, str(exc))
    except HashMismatchError as exc:
        return _fail("hash_mismatch", str(exc))
    except pl.PipelineError as exc:
        category = "hash_mismatch" if "hash" in str(exc) else "data"
        return _fail(category, str(exc))
    except ConfigError as exc:
        return _fail("config", str(exc))
    except (ContainerError, FileNotFoundError) as exc:
        return _fail("io", str(exc))
    except (NumericalError, GridTooLargeError) as exc:
        return _fail("numerical", str(exc))
    except (ValueError, TypeError) as exc:
        return _fail("data", str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
