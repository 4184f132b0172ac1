"""Command-line entry point: train, eval, rf, catalog, inspect.

Exit codes: 0 success, 2 usage/config/format errors, 3 runtime numeric errors.
The DTK_THREADS environment variable caps the worker-thread count.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import cifar, config as runconfig, ntl, rf, train, vgg
from .errors import ConfigError, NumericError, ToolkitError


def _cap_threads() -> None:
    raw = os.environ.get("DTK_THREADS")
    if not raw:
        return
    try:
        want = max(1, int(raw))
    except ValueError:
        raise ConfigError(f"DTK_THREADS must be an integer, got '{raw}'")
    import numba

    numba.set_num_threads(min(want, numba.config.NUMBA_NUM_THREADS))


def _load_splits(cfg: runconfig.RunConfig) -> train.DataSplits:
    if not cfg.data_dir:
        raise ConfigError("data_dir is required (set it in the config or pass --data-dir)")
    loader = cifar.load_cifar10 if cfg.dataset == "cifar10" else cifar.load_cifar100
    pool, test = loader(cfg.data_dir)
    train_raw, val_raw = cifar.split(pool, cfg.seed)
    if cfg.train_subset:
        train_raw = train_raw.take(cfg.train_subset)
    if cfg.val_subset:
        val_raw = val_raw.take(cfg.val_subset)
    train_images, stats = cifar.standardize(train_raw.images)
    val_images, _ = cifar.standardize(val_raw.images, stats)
    test_images, _ = cifar.standardize(test.images, stats)
    return train.DataSplits(
        train_images=train_images,
        train_labels=train_raw.labels,
        val_images=val_images,
        val_labels=val_raw.labels,
        test_images=test_images,
        test_labels=test.labels,
    )


def _expected_classes(cfg: runconfig.RunConfig) -> None:
    expected = 10 if cfg.dataset == "cifar10" else 100
    if cfg.num_classes != expected:
        raise ConfigError(
            f"num_classes {cfg.num_classes} does not match dataset {cfg.dataset}"
        )


def _build_graph(cfg: runconfig.RunConfig):
    arch = cfg.arch()
    if cfg.weights:
        init = vgg.PretrainedInit(cfg.weights, dense_seed=cfg.seed)
    else:
        init = vgg.RandomInit(cfg.seed)
    return vgg.build(arch, init)


def cmd_train(args) -> int:
    cfg = runconfig.load(args.config, args.set or [])
    _merge_flags(cfg, args)
    _expected_classes(cfg)
    data = _load_splits(cfg)
    graph = _build_graph(cfg)
    report = train.fit(graph, data, cfg.train())

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.csv").write_text(report.to_csv())
    ntl.save_checkpoint(out_dir / "checkpoint.ntl", graph, report.adam_state)
    (out_dir / "manifest.cfg").write_text(cfg.manifest())
    last = report.epochs[-1] if report.epochs else None
    if last is not None:
        print(f"epoch {last.epoch}: val_loss={last.val_loss:.6f} val_acc={last.val_acc:.4f}")
    if report.test_acc is not None:
        print(f"test_acc={report.test_acc:.4f}")
    print(f"wrote {out_dir / 'metrics.csv'}")
    return 0


def cmd_eval(args) -> int:
    cfg = runconfig.load(args.config, args.set or [])
    _merge_flags(cfg, args)
    _expected_classes(cfg)
    data = _load_splits(cfg)
    arch = cfg.arch()
    graph = vgg.build(arch, vgg.RandomInit(cfg.seed))
    ntl.load_checkpoint(args.weights, graph)
    images, labels = {
        "train": (data.train_images, data.train_labels),
        "val": (data.val_images, data.val_labels),
        "test": (data.test_images, data.test_labels),
    }[args.split]
    _, acc = train.evaluate(graph, images, labels)
    print(f"accuracy {acc!r}")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "eval.csv", "a") as fh:
        fh.write(f"{args.split},{acc!r}\n")
    return 0


def _parse_schedule(raw: str) -> list[rf.ScheduleLayer]:
    import re

    layers = []
    for token in raw.split(","):
        m = re.fullmatch(r"(\d+)x(\d+)(?:r(\d+))?(?:s(\d+))?", token.strip())
        if not m or m.group(1) != m.group(2):
            raise ConfigError(f"bad schedule token '{token}' (want e.g. 3x3r2 or 2x2s2)")
        layers.append(
            rf.ScheduleLayer(
                kernel=int(m.group(1)),
                dilation=int(m.group(3) or 1),
                stride=int(m.group(4) or 1),
            )
        )
    return layers


def cmd_rf(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    if args.layers:
        schedule = _parse_schedule(args.layers)
        cov = rf.coverage(schedule)
        rows.append(("schedule", cov.span, cov.density))
        rf.write_pgm(out_dir / "coverage.pgm", cov.mask)
        (out_dir / "coverage.txt").write_text(rf.render_text(cov.mask) + "\n")
    elif args.config:
        cfg = runconfig.load(args.config, args.set or [])
        report = rf.rf_report(cfg.arch())
        rows = [(r.layer, r.span, r.density) for r in report]
        rf.write_pgm(out_dir / f"{report[-1].layer}.pgm", report[-1].mask)
    else:
        raise ConfigError("rf needs --layers or --config")

    lines = ["layer,span_h,span_w,density"]
    for name, span, density in rows:
        flag = " (gridding)" if density < 1.0 else ""
        print(f"{name}: span {span[0]}x{span[1]}, density {density:.4f}{flag}")
        lines.append(f"{name},{span[0]},{span[1]},{density!r}")
    (out_dir / "coverage.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out_dir / 'coverage.csv'}")
    return 0


def cmd_catalog(_args) -> int:
    rows = vgg.catalog()
    print(f"{'label':<20} {'family':<7} " + " ".join(f"block{i}" for i in range(1, 6)))
    for label, cfg in rows.items():
        cells = []
        for plan in cfg.blocks:
            rate = ",".join(str(d) for d in plan.dilations)
            cells.append(f"{'frz' if plan.frozen else rate:>6}")
        print(f"{label:<20} {cfg.family:<7}" + " ".join(cells))
    return 0


def cmd_inspect(args) -> int:
    entries = ntl.read(args.file)
    print(f"{len(entries)} entries")
    for name, arr in entries:
        print(f"  {name}  {list(arr.shape)}")
    return 0


def _merge_flags(cfg: runconfig.RunConfig, args) -> None:
    if getattr(args, "data_dir", None):
        cfg.values["data_dir"] = args.data_dir
    if getattr(args, "out_dir", None):
        cfg.values["out_dir"] = args.out_dir
    if getattr(args, "weights_init", None):
        cfg.values["weights"] = args.weights_init
    if getattr(args, "seed", None) is not None:
        cfg.values["seed"] = args.seed


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dtk", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
        sp.add_argument("--data-dir", dest="data_dir")
        sp.add_argument("--out-dir", dest="out_dir")
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("train", help="train a configuration and write metrics + checkpoint")
    common(sp)
    sp.add_argument("--weights", dest="weights_init", help="pretrained .ntl for initialization")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    common(sp)
    sp.add_argument("--weights", required=True, help="checkpoint .ntl")
    sp.add_argument("--split", choices=("train", "val", "test"), default="test")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("rf", help="receptive-field coverage analysis")
    sp.add_argument("--layers", help="schedule like 3x3r2,3x3r2,3x3r2")
    sp.add_argument("--config", help="analyze a built architecture instead")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE")
    sp.add_argument("--out-dir", dest="out_dir", default="runs/rf")
    sp.set_defaults(fn=cmd_rf)

    sp = sub.add_parser("catalog", help="list the studied freeze/dilation combinations")
    sp.set_defaults(fn=cmd_catalog)

    sp = sub.add_parser("inspect", help="list entries of a named-tensor file")
    sp.add_argument("file")
    sp.set_defaults(fn=cmd_inspect)
    return p


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    try:
        _cap_threads()
        return args.fn(args)
    except NumericError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except ToolkitError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
