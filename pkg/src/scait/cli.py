"""Command-line entry point: ``scait <subcommand>``.

Exit codes: 0 success, 1 usage error, 2 setup error (missing or invalid
inputs), 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

from .dataset import DatasetError, save_pgm_dir
from .harness.config import ConfigError, ExperimentConfig, load_config
from .harness.plots import emit_plots
from .harness.sweep import (
    REPORT_FIELDS,
    SetupError,
    evaluate_point,
    load_assets,
    prepare_assets,
    read_report,
    run_sweep,
    selection_seed,
    row_channel,
    write_report,
)
from .knowledge_base import KBError, build_kb, load_kb, save_kb, sync_kb
from .link import LinkSetupError, TransportError, run_receiver, run_transmitter
from .nn import CheckpointError, Model, ModelSpec, load_checkpoint, save_checkpoint, train

EXIT_OK, EXIT_USAGE, EXIT_SETUP, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _strs(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _config(args):
    overrides = {
        "out_dir": getattr(args, "out_dir", None),
        "data_dir": getattr(args, "data_dir", None),
        "schemes": getattr(args, "schemes", None),
        "cr": getattr(args, "cr_list", None),
        "snr_db": getattr(args, "snr_list", None),
        "quality": getattr(args, "quality_list", None),
        "fec": getattr(args, "fec_list", None),
        "seeds": getattr(args, "seeds", None),
        "checkpoint": getattr(args, "checkpoint", None),
        "baseline_checkpoint": getattr(args, "baseline_checkpoint", None),
        "kb_path": getattr(args, "kb", None),
    }
    if args.seed is not None:
        overrides["master_seed"] = args.seed
        overrides["data_seed"] = args.seed
        overrides["train_seed"] = args.seed
    if args.config:
        if not os.path.exists(args.config):
            raise SetupError(f"config file {args.config} not found")
        return load_config(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def cmd_gen_data(args):
    cfg = _config(args)
    split = cfg.dataset()
    n = save_pgm_dir(split, args.out)
    print(f"wrote {n} images to {args.out}")


def cmd_train(args):
    cfg = _config(args)
    if args.role == "both":
        prepare_assets(cfg, log=print)
        print(f"wrote {cfg.path('clean.scnn')}, {cfg.path('semantic.scnn')}, {cfg.path('kb.txt')}")
        return
    split = cfg.dataset()
    spec = ModelSpec(input_shape=tuple(split.image_shape), num_classes=split.num_classes)
    model = Model.init(spec, seed=cfg.train_seed)
    tc = cfg.clean_train_config() if args.role == "clean" else cfg.train_config(spec.num_maps)
    train(model, split, tc, log=lambda r: print(f"epoch {r['epoch']}: loss {r['loss']:.4f} "
                                                f"test accuracy {r['test_accuracy']:.4f}"))
    out = args.out or cfg.path(f"{args.role}.scnn")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    save_checkpoint(model, out)
    print(f"wrote {out}")


def _load_model(path):
    if not path or not os.path.exists(path):
        raise SetupError(f"checkpoint {path or '(none)'} not found; run 'scait train' first")
    return load_checkpoint(path)


def cmd_build_kb(args):
    cfg = _config(args)
    model = _load_model(args.checkpoint or cfg.path("semantic.scnn"))
    split = cfg.dataset()
    kb = build_kb(model, split.train_x, split.train_y)
    out = args.out or cfg.path("kb.txt")
    save_kb(kb, out)
    print(f"wrote {out} (top maps: {kb.ranking()[:8].tolist()})")


def cmd_sync_kb(args):
    if not os.path.exists(args.src):
        raise SetupError(f"source KB {args.src} not found")
    with open(args.src, "rb") as fh:
        data = fh.read()
    print(sync_kb(data, args.dest))


def cmd_evaluate(args):
    cfg = _config(args)
    assets = load_assets(cfg)
    point = args.quality if args.scheme == "baseline_codec" else args.cr
    row = evaluate_point(assets, args.scheme, point, args.snr, args.fec, cfg.master_seed if args.run_seed is None
                         else args.run_seed, cfg.master_seed, cfg.link_rate_bps, cfg.timing_images)
    writer = csv.DictWriter(sys.stdout, fieldnames=REPORT_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerow(row)


def cmd_sweep(args):
    cfg = _config(args)
    assets = prepare_assets(cfg, log=print) if args.train else load_assets(cfg)
    rows = run_sweep(cfg, assets, progress=lambda r: print(
        f"{r['scheme']:>14} {r['cr_or_quality']:>6} snr={r['snr_db']:<5} {r['fec']:<9} seed={r['seed']} "
        f"acc={r['accuracy']:.3f} bpp={r['bpp_source']:.3f}"))
    out = args.out or os.path.join(cfg.out_dir, "report.csv")
    write_report(rows, out)
    print(f"wrote {out}")
    if args.plot:
        for path in emit_plots(rows, os.path.dirname(os.path.abspath(out))).values():
            print(f"wrote {path}")


def cmd_plot(args):
    if not os.path.exists(args.report):
        raise SetupError(f"report {args.report} not found; run 'scait sweep' first")
    for path in emit_plots(read_report(args.report), args.out).values():
        print(f"wrote {path}")


def cmd_serve(args):
    cfg = _config(args)
    model = _load_model(args.checkpoint or cfg.path("semantic.scnn"))
    image_model = _load_model(args.baseline_checkpoint) if args.baseline_checkpoint else None
    log = run_receiver((args.host, args.port), model, kb_path=args.kb or cfg.path("kb.txt"), image_model=image_model,
                       log_path=args.log, max_frames=args.max_frames, idle_timeout=args.idle_timeout,
                       task_id=cfg.task_id)
    print(f"classified {len(log)} frames")


def cmd_send(args):
    cfg = _config(args)
    model = _load_model(args.checkpoint or cfg.path("semantic.scnn"))
    kb_path = args.kb or cfg.path("kb.txt")
    if not os.path.exists(kb_path):
        raise SetupError(f"KB {kb_path} not found; run 'scait build-kb' first")
    kb = load_kb(kb_path)
    split = cfg.dataset()
    images = split.test_x[:args.count] if args.count else split.test_x
    run_seed = cfg.master_seed if args.run_seed is None else args.run_seed
    kind = "baseline" if args.scheme == "baseline_codec" else "semantic"
    point = args.quality if kind == "baseline" else args.cr
    channel = row_channel(cfg.master_seed, kind, point, args.snr, args.fec, run_seed)
    sent = run_transmitter((args.host, args.port), model, kb, images, cr=args.cr, channel=channel,
                           scheme=args.scheme, quality=args.quality, task_id=cfg.task_id,
                           seed=selection_seed(cfg.master_seed, args.cr, run_seed))
    acked = sum(1 for r in sent if r["status"] == "acked")
    print(f"sent {len(sent)} frames, {acked} acknowledged")
    if acked != len(sent):
        return EXIT_RUNTIME


def build_parser():
    p = _Parser(prog="scait", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--seed", type=int, help="override data, training and master seeds")
        sp.add_argument("--out-dir", dest="out_dir", help="working directory for checkpoints, KB and reports")
        sp.add_argument("--data-dir", dest="data_dir", help="PGM dataset root (one folder per class)")
        sp.set_defaults(func=func)
        return sp

    sp = add("gen-data", cmd_gen_data, "write the synthetic dataset as PGM folders")
    sp.add_argument("--out", required=True)

    sp = add("train", cmd_train, "train the clean and/or semantic model")
    sp.add_argument("--role", choices=("clean", "semantic", "both"), default="both")
    sp.add_argument("--out", help="checkpoint path (single role only)")

    sp = add("build-kb", cmd_build_kb, "build the knowledge base from a checkpoint")
    sp.add_argument("--checkpoint")
    sp.add_argument("--out")

    sp = add("sync-kb", cmd_sync_kb, "synchronize a KB file to a destination path")
    sp.add_argument("--src", required=True)
    sp.add_argument("--dest", required=True)

    def add_point(sp):
        sp.add_argument("--scheme", choices=("sc_ait", "sc_random", "baseline_codec"), default="sc_ait")
        sp.add_argument("--cr", type=float, default=0.0)
        sp.add_argument("--quality", type=int, default=75)
        sp.add_argument("--snr", type=float, default=10.0)
        sp.add_argument("--fec", choices=("none", "hamming74"), default="none")
        sp.add_argument("--run-seed", dest="run_seed", type=int, help="seed of the report row to reproduce")
        sp.add_argument("--checkpoint")
        sp.add_argument("--baseline-checkpoint", dest="baseline_checkpoint")
        sp.add_argument("--kb")

    sp = add("evaluate", cmd_evaluate, "evaluate one sweep point and print its CSV row")
    add_point(sp)

    sp = add("sweep", cmd_sweep, "run the configured sweep and write report.csv")
    sp.add_argument("--train", action="store_true", help="train models and build the KB first")
    sp.add_argument("--plot", action="store_true", help="also write SVG charts")
    sp.add_argument("--out", help="report path (default <out_dir>/report.csv)")
    sp.add_argument("--schemes", type=_strs)
    sp.add_argument("--cr", dest="cr_list", type=_floats)
    sp.add_argument("--snr", dest="snr_list", type=_floats)
    sp.add_argument("--quality", dest="quality_list", type=_ints)
    sp.add_argument("--fec", dest="fec_list", type=_strs)
    sp.add_argument("--seeds", type=_ints)
    sp.add_argument("--checkpoint")
    sp.add_argument("--baseline-checkpoint", dest="baseline_checkpoint")
    sp.add_argument("--kb")

    sp = add("plot", cmd_plot, "render SVG charts from a report CSV")
    sp.add_argument("--report", required=True)
    sp.add_argument("--out", required=True)

    for name, func, text in (("serve", cmd_serve, "run the UDP receiver"), ("send", cmd_send, "run the UDP transmitter")):
        sp = add(name, func, text)
        sp.add_argument("--host", default="127.0.0.1")
        sp.add_argument("--port", type=int, default=9750)
        if name == "serve":
            sp.add_argument("--checkpoint")
            sp.add_argument("--baseline-checkpoint", dest="baseline_checkpoint")
            sp.add_argument("--kb", help="receiver-side KB path, overwritten on KB_SYNC")
            sp.add_argument("--log", help="classification log CSV")
            sp.add_argument("--max-frames", dest="max_frames", type=int)
            sp.add_argument("--idle-timeout", dest="idle_timeout", type=float)
        else:
            add_point(sp)
            sp.add_argument("--count", type=int, default=0, help="number of test images (0 = all)")
    return p


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args) or EXIT_OK
    except (SetupError, ConfigError, CheckpointError, KBError, DatasetError, LinkSetupError, FileNotFoundError) as exc:
        print(f"setup error: {exc}", file=sys.stderr)
        return EXIT_SETUP
    except (TransportError, RuntimeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
