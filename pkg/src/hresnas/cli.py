"""Command-line entry points: start or resume a search, evaluate a
checkpoint, and export architecture or history documents.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import tree
from .engine import (
    CheckpointWriteError,
    RunConfig,
    SearchEngine,
    build_datasets,
    evaluate,
    history_csv_text,
)

logger = logging.getLogger("hresnas")


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return RunConfig.from_dict(json.loads(Path(path).read_text()))


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        config.seed = args.seed
    if args.max_iterations is not None:
        config.max_iterations = args.max_iterations
    return config


def _parse_serve(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    return host or "127.0.0.1", int(port)


def cmd_run(args) -> int:
    config = _apply_overrides(_load_config(args.config), args)
    if args.print_config:
        print(json.dumps(config.to_dict(), indent=2))
        return 0
    out_dir = Path(args.out_dir)
    engine = SearchEngine(config, out_dir, meta_file=args.meta_file,
                          data_dir=args.data)
    if args.serve:
        from .server import serve

        host, port = _parse_serve(args.serve)
        serve(engine, host, port, ui_dir=args.ui)
        logger.info("control api at http://%s:%d%s", host, port,
                    " (dashboard at /ui/)" if args.ui else "")
    final = engine.run()
    logger.info("finished after iteration %d; final checkpoint %s",
                engine.iteration - 1, final)
    return 0


def cmd_resume(args) -> int:
    engine = SearchEngine.resume(args.run_dir, data_dir=args.data,
                                 meta_file=args.meta_file)
    if args.max_iterations is not None:
        final = engine.run(args.max_iterations)
    else:
        final = engine.run()
    logger.info("resumed run stopped at iteration %d; final checkpoint %s",
                engine.iteration - 1, final)
    return 0


def _config_for_checkpoint(ckpt: Path, config_path: str | None) -> RunConfig:
    if config_path:
        return _load_config(config_path)
    run_json = ckpt.parent / "run.json"
    if run_json.exists():
        return RunConfig.from_dict(json.loads(run_json.read_text())["config"])
    raise FileNotFoundError(
        f"no run.json next to {ckpt}; pass --config to describe the dataset")


def cmd_eval(args) -> int:
    ckpt = Path(args.checkpoint)
    net = tree.deserialize(ckpt.read_bytes())
    config = _config_for_checkpoint(ckpt, args.config)
    train, test = build_datasets(config.dataset, args.data)
    dataset = train if args.split == "train" else test
    loss, acc = evaluate(net, dataset)
    result = {"split": args.split, "n": dataset.n, "loss": loss,
              "accuracy": acc, "param_count": tree.count_params(net)}
    print(json.dumps(result))
    return 0


def cmd_export(args) -> int:
    path = Path(args.path)
    if args.format == "arch-json":
        if path.is_dir():
            run = json.loads((path / "run.json").read_text())
            path = path / run["engine"]["last_checkpoint"]
        net = tree.deserialize(path.read_bytes())
        doc = json.dumps(tree.architecture_dict(net), indent=2)
        if args.out:
            Path(args.out).write_text(doc + "\n")
        else:
            print(doc)
        return 0
    # history-csv
    run_json = path / "run.json" if path.is_dir() else path
    history = json.loads(run_json.read_text())["history"]
    text = history_csv_text(history)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hresnas",
        description="grow-and-shrink architecture search for residual trees",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="start a search")
    run.add_argument("--config", help="JSON config file (defaults otherwise)")
    run.add_argument("--data", help="data directory (MNIST IDX files)")
    run.add_argument("--meta-file", help="meta-parameter file to watch "
                                         "(default: <out-dir>/meta.json)")
    run.add_argument("--out-dir", default="runs/latest",
                     help="checkpoint/history directory")
    run.add_argument("--serve", metavar="ADDR",
                     help="expose the control api, e.g. 127.0.0.1:8314")
    run.add_argument("--ui", metavar="DIR",
                     help="also serve a built dashboard directory at /ui")
    run.add_argument("--seed", type=int)
    run.add_argument("--max-iterations", type=int)
    run.add_argument("--print-config", action="store_true",
                     help="dump the fully resolved config and exit")
    run.set_defaults(fn=cmd_run)

    resume = sub.add_parser("resume", help="continue a checkpointed run")
    resume.add_argument("run_dir", help="directory holding run.json")
    resume.add_argument("--data")
    resume.add_argument("--meta-file")
    resume.add_argument("--max-iterations", type=int)
    resume.set_defaults(fn=cmd_resume)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ev.add_argument("checkpoint")
    ev.add_argument("--config", help="config describing the dataset")
    ev.add_argument("--data")
    ev.add_argument("--split", choices=("train", "test"), default="test")
    ev.set_defaults(fn=cmd_eval)

    export = sub.add_parser("export", help="emit architecture or history docs")
    export.add_argument("path", help="checkpoint file or run directory")
    export.add_argument("--format", choices=("arch-json", "history-csv"),
                        required=True)
    export.add_argument("--out", help="output file (stdout otherwise)")
    export.set_defaults(fn=cmd_export)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CheckpointWriteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
