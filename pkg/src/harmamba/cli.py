"""``harmamba`` command line: preprocess, synth, train, eval, ablate, bench, gradcheck.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
``--threads 1`` (the default) gives bit-identical reruns; more threads give
statistically equivalent results.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path


from . import config as config_mod
from .model import ConfigError, ModelConfig

log = logging.getLogger("harmamba")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _csv_ints(s: str) -> list[int]:
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="64-bit seed (config: seed)")
    common.add_argument("--threads", type=int, help="worker threads (config: threads)")
    common.add_argument("--out", help="output directory (config: out)")
    common.add_argument("--precision", choices=config_mod.PRECISIONS, help="float width (config: precision)")

    p = _Parser(prog="harmamba", description="Bidirectional selective state-space models for activity recognition.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("preprocess", parents=[common], help="CSV exports -> HARW1 windowed dataset")
    s.add_argument("--manifest", help="manifest JSON or built-in name (config: data.manifest)")
    s.add_argument("--input-dir", help="directory of CSV files (config: data.input_dir)")
    s.add_argument("--overlap", type=float, help="window overlap (config: data.overlap)")

    s = sub.add_parser("synth", parents=[common], help="write the synthetic dataset as HARW1")
    s.add_argument("--n-classes", type=int, help="config: data.n_classes")
    s.add_argument("--n-channels", type=int, help="config: data.n_channels")
    s.add_argument("--window", type=int, help="config: data.window")
    s.add_argument("--n-per-class", type=int, help="config: data.n_per_class")
    s.add_argument("--synth-seed", type=int, help="config: data.synth_seed")

    for name, helptext in (("train", "train a model"), ("ablate", "run an ablation suite")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--data", help="HARW1 file or 'synthetic' (config: data.path)")
        s.add_argument("--epochs", type=int, help="config: train.epochs")
        s.add_argument("--batch-size", type=int, help="config: train.batch_size")
        s.add_argument("--lr", type=float, help="config: train.lr")
        s.add_argument("--weight-decay", type=float, help="config: train.weight_decay")
        s.add_argument("--n-layers", type=int, help="config: model.n_layers")
        s.add_argument("--d-model", type=int, help="config: model.d_model")
        s.add_argument("--patch-len", type=int, help="config: model.patch_len")
        if name == "ablate":
            s.add_argument("--suite", help="directionality, channel_mode or class_token (config: ablate.suite)")
            s.add_argument("--seeds", type=_csv_ints, help="comma-separated seeds (config: ablate.seeds)")

    s = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint and render figures")
    s.add_argument("--checkpoint", required=True, help="directory holding model.ssmh and model.json")
    s.add_argument("--data", help="HARW1 file or 'synthetic' (config: data.path)")
    s.add_argument("--split", default="test", choices=("train", "val", "test"))

    s = sub.add_parser("bench", parents=[common], help="parameter, FLOP and memory report")
    s.add_argument("--lengths", type=_csv_ints, help="window lengths (config: bench.lengths)")
    s.add_argument("--data", help="dataset whose shape sets channels and classes (config: data.path)")
    s.add_argument("--manifest", help="take channels, classes and patch length from a manifest")
    s.add_argument("--no-memory", action="store_true", help="skip the measured peak memory (config: bench.memory)")

    s = sub.add_parser("gradcheck", parents=[common], help="64-bit finite-difference gradient suite")
    s.add_argument("--probes", type=int, default=20)
    return p


_FLAG_KEYS = {
    "seed": "seed", "threads": "threads", "out": "out", "precision": "precision",
    "manifest": "data.manifest", "input_dir": "data.input_dir", "overlap": "data.overlap",
    "n_classes": "data.n_classes", "n_channels": "data.n_channels", "window": "data.window",
    "n_per_class": "data.n_per_class", "synth_seed": "data.synth_seed", "data": "data.path",
    "epochs": "train.epochs", "batch_size": "train.batch_size", "lr": "train.lr",
    "weight_decay": "train.weight_decay", "n_layers": "model.n_layers", "d_model": "model.d_model",
    "patch_len": "model.patch_len", "suite": "ablate.suite", "seeds": "ablate.seeds",
    "lengths": "bench.lengths",
}


def resolve_config(args) -> config_mod.RunConfig:
    cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig()
    overrides = {key: getattr(args, flag) for flag, key in _FLAG_KEYS.items() if hasattr(args, flag)}
    if getattr(args, "no_memory", False):
        overrides["bench.memory"] = False
    return config_mod.with_overrides(cfg, overrides)


def _setup_logging() -> None:
    level = os.environ.get("SSMHAR_LOG", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise UsageError(f"SSMHAR_LOG must be one of {sorted(levels)}, got {level!r}")
    logging.basicConfig(level=levels[level], format="%(levelname)s %(name)s: %(message)s")


def _set_threads(n: int) -> None:
    import numba
    from threadpoolctl import threadpool_limits

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    threadpool_limits(n)


def _load_dataset(cfg: config_mod.RunConfig):
    from .data import read_harw, synthetic_dataset

    d = cfg.data
    if d.path == "synthetic":
        return synthetic_dataset(d.n_classes, d.n_channels, d.window, d.n_per_class, d.synth_seed)
    if not Path(d.path).exists():
        raise FileNotFoundError(f"dataset not found: {d.path}")
    return read_harw(d.path)


def _model_config(cfg, ds):
    model = dict(cfg.model)
    patch = ds.meta.get("patch_len")
    if patch and "patch_len" not in model:
        model["patch_len"] = patch
    return ModelConfig(n_channels=ds.n_channels, window=ds.window, n_classes=ds.n_classes, **model)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------------ commands

def cmd_preprocess(cfg, args) -> int:
    from .data import Dataset, ingest_dir, prepare, resolve_manifest, write_harw

    if not cfg.data.manifest:
        raise UsageError("preprocess: --manifest is required")
    if not cfg.data.input_dir:
        raise UsageError("preprocess: --input-dir is required")
    try:
        manifest = resolve_manifest(cfg.data.manifest)
    except FileNotFoundError as e:
        raise UsageError(str(e)) from None
    recs = ingest_dir(cfg.data.input_dir, manifest)
    prep = prepare(recs, manifest.window, cfg.data.overlap)
    if not prep.train:
        raise RuntimeError("preprocess: no training windows; recordings are shorter than the window")
    ds = Dataset.from_windows(prep.train, prep.val, prep.test, manifest.n_classes, name=manifest.name)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{manifest.name.lower()}.harw"
    summary = prep.summary(manifest.n_classes)
    write_harw(path, ds, sidecar={
        "stats": prep.stats.to_dict(), "channels": list(manifest.channels), "rate_hz": manifest.rate_hz,
        "patch_len": manifest.patch_len, "overlap": cfg.data.overlap,
        "boundaries": {rid: {k: list(v) for k, v in b.items()} for rid, b in sorted(prep.boundaries.items())},
        "summary": summary,
    })
    for split, s in summary.items():
        print(f"{split:<5} windows={s['windows']:<6d} per_class={s['per_class']}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_synth(cfg, args) -> int:
    from .data import write_harw

    ds = _load_dataset(config_mod.with_overrides(cfg, {"data.path": "synthetic"}))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "synthetic.harw"
    write_harw(path, ds)
    for split, counts in ds.counts().items():
        print(f"{split:<5} windows={sum(counts):<6d} per_class={counts}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_train(cfg, args) -> int:
    from .plotting import training_figure
    from .train.trainer import evaluate, train

    ds = _load_dataset(cfg)
    mc = _model_config(cfg, ds)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "run_config.json")
    res = train(mc, ds, cfg.train_config(), out_dir=out)
    rep = evaluate(res.model, ds.x_test, ds.y_test, cfg.train.eval_batch_size)
    _write_json(out / "test_report.json", {**rep.to_dict(), "best_epoch": res.best_epoch})
    training_figure(res.log, out / "training.png")
    print(f"best epoch {res.best_epoch}: val F1 {res.best_val_f1:.4f}; "
          f"test accuracy {rep.accuracy_std:.4f}, weighted F1 {rep.weighted_f1:.4f}")
    print(f"wrote {out / 'best'}, {out / 'train_log.csv'}")
    return EXIT_OK


def cmd_eval(cfg, args) -> int:
    from .model import HARMamba
    from .plotting import confusion_figure
    from .train.metrics import write_confusion_csv
    from .train.trainer import evaluate

    ckpt = Path(args.checkpoint)
    if not (ckpt / "model.json").exists():
        raise UsageError(f"eval: no checkpoint at {ckpt}")
    model = HARMamba.load(ckpt)
    ds = _load_dataset(cfg)
    x, y = ds.split(args.split)
    rep = evaluate(model, x, y, cfg.train.eval_batch_size)
    out = Path(cfg.out)
    _write_json(out / f"eval_{args.split}.json", rep.to_dict())
    write_confusion_csv(out / f"confusion_{args.split}.csv", rep.confusion)
    confusion_figure(rep.confusion, out / f"confusion_{args.split}.png",
                     title=f"{ds.name or 'dataset'} {args.split}")
    print(f"{args.split}: n={rep.n} accuracy {rep.accuracy_std:.4f} one-vs-rest accuracy "
          f"{rep.accuracy_ovr:.4f} weighted F1 {rep.weighted_f1:.4f} loss {rep.loss:.4f}")
    return EXIT_OK


def cmd_ablate(cfg, args) -> int:
    from .plotting import ablation_figure
    from .train.ablation import run_ablation, suite_variants

    try:
        suite_variants(cfg.ablate.suite)
    except ValueError as e:
        raise UsageError(str(e)) from None
    ds = _load_dataset(cfg)
    out = Path(cfg.out)
    results = run_ablation(cfg.ablate.suite, _model_config(cfg, ds), ds, cfg.ablate.seeds,
                           cfg.train_config(), out_dir=out)
    rows = [{"variant": r.variant, "f1_mean": r.f1_mean, "f1_std": r.f1_std} for r in results]
    ablation_figure(rows, out / f"ablation_{cfg.ablate.suite}.png", title=cfg.ablate.suite)
    for r in results:
        print(f"{r.variant:<28} F1 {r.f1_mean:.4f} ± {r.f1_std:.4f}  accuracy {r.acc_mean:.4f} ± {r.acc_std:.4f}")
    return EXIT_OK


def cmd_bench(cfg, args) -> int:
    from .plotting import cost_figure
    from .train.cost import cost_report

    if getattr(args, "manifest", None):
        from .data import resolve_manifest

        try:
            m = resolve_manifest(args.manifest)
        except FileNotFoundError as e:
            raise UsageError(str(e)) from None
        model = {"patch_len": m.patch_len, **cfg.model} if m.patch_len else dict(cfg.model)
        mc = ModelConfig(n_channels=len(m.channels), window=m.window, n_classes=m.n_classes, **model)
    else:
        mc = _model_config(cfg, _load_dataset(cfg))
    reports = [r.to_dict() for r in cost_report(mc, cfg.bench.lengths, cfg.bench.memory, cfg.bench.batch)]
    out = Path(cfg.out)
    _write_json(out / "bench.json", {"model": mc.to_dict(), "reports": reports})
    cost_figure(reports, out / "bench.png")
    for r in reports:
        mem = f"{r['peak_bytes'] / 2**20:8.1f} MiB" if r["peak_bytes"] else "      -"
        print(f"L={r['window']:<6d} tokens={r['n_tokens']:<6d} params={r['params']:<9d} "
              f"MFLOPs={r['flops'] / 1e6:10.2f} attention MFLOPs={r['attention_flops'] / 1e6:10.2f} peak={mem}")
    return EXIT_OK


def cmd_gradcheck(cfg, args) -> int:
    from .gradcheck import run_suite

    results = run_suite(n_probes=args.probes, seed=cfg.seed)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} gradient checks failed: {', '.join(failed)}")
        return EXIT_RUNTIME
    print(f"all {len(results)} gradient checks passed")
    return EXIT_OK


COMMANDS = {"preprocess": cmd_preprocess, "synth": cmd_synth, "train": cmd_train, "eval": cmd_eval,
            "ablate": cmd_ablate, "bench": cmd_bench, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    from .autodiff import set_precision
    from .data import HARWError, IngestError

    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, FileNotFoundError) as e:
        problems = getattr(e, "problems", [str(e)])
        print("configuration error:\n  " + "\n  ".join(problems), file=sys.stderr)
        return EXIT_USAGE
    _set_threads(cfg.threads)
    set_precision(cfg.precision)
    try:
        return COMMANDS[args.command](cfg, args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print("configuration error:\n  " + "\n  ".join(e.problems), file=sys.stderr)
        return EXIT_USAGE
    except (IngestError, HARWError, FileNotFoundError, ValueError, RuntimeError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        set_precision("f32")


if __name__ == "__main__":
    sys.exit(main())
