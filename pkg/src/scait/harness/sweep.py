"""End-to-end evaluation of the three schemes over CR / quality / SNR / seed grids."""

from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .. import baseline_codec as codec
from ..channel import ChannelConfig
from ..knowledge_base import build_kb, load_kb, rank_maps, save_kb
from ..nn import CheckpointError, Model, ModelSpec, load_checkpoint, save_checkpoint, train
from ..pipeline import (
    baseline_receive,
    derive_seed,
    extract_features,
    image_channel,
    impair_frame,
    impair_stream,
    semantic_indices,
    semantic_receive,
)
from ..semantic_codec import SemanticFrame, encode_frame, frame_size, num_keep
from .metrics import compute_bpp, delay_model

REPORT_FIELDS = (
    "scheme", "cr_or_quality", "snr_db", "fec", "seed", "accuracy", "bpp_source", "bpp_air",
    "process_delay_ms", "transmission_delay_ms", "total_delay_ms",
)


class SetupError(RuntimeError):
    pass


@dataclass
class Assets:
    """Everything a sweep needs: data, both classifiers and the KB."""

    split: object
    semantic_model: Model
    clean_model: Model
    kb: object
    _features: np.ndarray = None
    _streams: dict = field(default_factory=dict)
    _timing: dict = field(default_factory=dict)

    @property
    def ranking(self):
        return rank_maps(self.kb)

    @property
    def features(self):
        if self._features is None:
            self._features = extract_features(self.semantic_model, self.split.test_x)
        return self._features

    def streams(self, quality):
        if quality not in self._streams:
            self._streams[quality] = [codec.encode_image(img, quality) for img in self.split.test_x]
        return self._streams[quality]


def prepare_assets(config, log=print):
    """Train both models, build the KB and write them under ``config.out_dir``."""
    os.makedirs(config.out_dir, exist_ok=True)
    split = config.dataset()
    spec = ModelSpec(input_shape=tuple(split.image_shape), num_classes=split.num_classes)
    say = (lambda msg: log(msg)) if log else (lambda msg: None)

    clean = Model.init(spec, seed=config.train_seed)
    say("training clean classifier")
    train(clean, split, config.clean_train_config(), log=lambda r: say(f"  clean epoch {r['epoch']}: {r}"))
    save_checkpoint(clean, config.path("clean.scnn"))

    semantic = Model.init(spec, seed=config.train_seed)
    say("training semantic model")
    train(semantic, split, config.train_config(spec.num_maps), log=lambda r: say(f"  semantic epoch {r['epoch']}: {r}"))
    save_checkpoint(semantic, config.path("semantic.scnn"))

    # the KB is built from the stored (float32) weights so its fingerprint matches the file
    semantic = load_checkpoint(config.path("semantic.scnn"))
    clean = load_checkpoint(config.path("clean.scnn"))
    kb = build_kb(semantic, split.train_x, split.train_y)
    save_kb(kb, config.path("kb.txt"))
    return Assets(split, semantic, clean, kb)


def load_assets(config):
    paths = {name: config.path(name) for name in ("semantic.scnn", "clean.scnn", "kb.txt")}
    missing = [p for p in paths.values() if not os.path.exists(p)]
    if missing:
        raise SetupError(
            f"missing {', '.join(missing)}; run 'scait train' then 'scait build-kb' "
            f"(or pass --train to 'scait sweep')"
        )
    try:
        semantic = load_checkpoint(paths["semantic.scnn"])
        clean = load_checkpoint(paths["clean.scnn"])
    except CheckpointError as exc:
        raise SetupError(str(exc)) from exc
    kb = load_kb(paths["kb.txt"], model=semantic)
    return Assets(config.dataset(), semantic, clean, kb)


# --------------------------------------------------------------------------
# single evaluations


def row_channel(master_seed, kind, point, snr_db, fec, seed):
    """Base channel of one report row; ``None`` for an infinite SNR.

    The seed ignores the scheme so sc_ait and sc_random see the same noise.
    """
    if math.isinf(snr_db):
        return None
    return ChannelConfig(snr_db, fec, derive_seed(master_seed, kind, float(point), float(snr_db), fec, int(seed)))


def selection_seed(master_seed, cr, seed):
    return derive_seed(master_seed, "sc_random", float(cr), int(seed))


def run_semantic(assets, scheme, cr, channel, select_seed=0):
    """Per-image predictions and payload size for sc_ait / sc_random."""
    model = assets.semantic_model
    k = model.spec.num_maps
    ranking = assets.ranking
    preds = np.empty(len(assets.features), dtype=np.int64)
    for i, maps in enumerate(assets.features):
        indices = semantic_indices(scheme, ranking, cr, k, select_seed, i)
        frame, _ = impair_frame(encode_frame(maps, indices), image_channel(channel, i))
        preds[i] = semantic_receive(model, frame)
    h, w = model.spec.map_shape
    return preds, frame_size(num_keep(cr, k), h, w)


def run_baseline(assets, quality, channel):
    streams = assets.streams(quality)
    preds = np.empty(len(streams), dtype=np.int64)
    for i, stream in enumerate(streams):
        received, _ = impair_stream(stream, image_channel(channel, i))
        preds[i] = baseline_receive(assets.clean_model, received)
    return preds, float(np.mean([s.nbytes for s in streams]))


def measure_process_ms(assets, scheme, point, n_images=32):
    """Mean wall-clock ms per image for encode + decode + inference (no channel)."""
    key = (scheme, float(point))
    if key in assets._timing:
        return assets._timing[key]
    images = assets.split.test_x[:n_images]
    model = assets.semantic_model
    ranking = assets.ranking
    start = time.perf_counter()
    for i, img in enumerate(images):
        if scheme == "baseline_codec":
            data = codec.encode_image(img, int(point)).to_bytes()
            baseline_receive(assets.clean_model, codec.BlockStream.from_bytes(data))
        else:
            maps = extract_features(model, [img])[0]
            indices = semantic_indices(scheme, ranking, point, model.spec.num_maps, 0, i)
            data = encode_frame(maps, indices).to_bytes()
            semantic_receive(model, SemanticFrame.from_bytes(data))
    elapsed = 1000.0 * (time.perf_counter() - start) / max(1, len(images))
    assets._timing[key] = elapsed
    return elapsed


def evaluate_point(assets, scheme, point, snr_db, fec, seed, master_seed=0, link_rate_bps=1e6, timing_images=32):
    """One report row."""
    h, w = assets.split.image_shape
    if scheme == "baseline_codec":
        channel = row_channel(master_seed, "baseline", point, snr_db, fec, seed)
        preds, nbytes = run_baseline(assets, int(point), channel)
        point = int(point)
    else:
        channel = row_channel(master_seed, "semantic", point, snr_db, fec, seed)
        preds, nbytes = run_semantic(assets, scheme, point, channel, selection_seed(master_seed, point, seed))
        point = float(point)
    bpp_source, bpp_air = compute_bpp(nbytes, w, h, fec)
    delays = delay_model(measure_process_ms(assets, scheme, point, timing_images), bpp_air * w * h, link_rate_bps)
    return {
        "scheme": scheme,
        "cr_or_quality": point,
        "snr_db": float(snr_db),
        "fec": fec,
        "seed": int(seed),
        "accuracy": float(np.mean(preds == assets.split.test_y)),
        "bpp_source": bpp_source,
        "bpp_air": bpp_air,
        **delays,
    }


def sweep_points(config):
    for scheme in config.schemes:
        points = config.quality if scheme == "baseline_codec" else config.cr
        for point in points:
            for snr in config.snr_db:
                for fec in config.fec:
                    for seed in config.seeds:
                        yield scheme, point, snr, fec, seed


def run_sweep(config, assets=None, progress=None):
    """Evaluate every (scheme, point, snr, fec, seed); rows come back canonically sorted."""
    if assets is None:
        assets = load_assets(config)
    rows = []
    for scheme, point, snr, fec, seed in sweep_points(config):
        rows.append(evaluate_point(assets, scheme, point, snr, fec, seed, config.master_seed,
                                   config.link_rate_bps, config.timing_images))
        if progress:
            progress(rows[-1])
    return sort_rows(rows)


def sort_rows(rows):
    return sorted(rows, key=lambda r: (r["scheme"], float(r["cr_or_quality"]), float(r["snr_db"]), r["fec"], int(r["seed"])))


def _fmt(value):
    if isinstance(value, float):
        return repr(value) if math.isinf(value) else format(value, ".6f")
    return str(value)


def write_report(rows, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_FIELDS)
        for row in sort_rows(rows):
            writer.writerow([_fmt(row[f]) for f in REPORT_FIELDS])


def read_report(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_FIELDS:
            raise ValueError(f"{path}: unexpected CSV header {reader.fieldnames}")
        rows = []
        for raw in reader:
            row = dict(raw)
            for key in REPORT_FIELDS:
                if key in ("scheme", "fec"):
                    continue
                row[key] = int(raw[key]) if key == "seed" else float(raw[key])
            if row["scheme"] == "baseline_codec":
                row["cr_or_quality"] = int(row["cr_or_quality"])
            rows.append(row)
    return rows


def summarize(rows, keys=("scheme", "cr_or_quality", "snr_db", "fec")):
    """Mean of every numeric column over seeds, grouped by ``keys``."""
    groups = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in keys), []).append(row)
    out = []
    for key, members in groups.items():
        agg = dict(zip(keys, key))
        for f in ("accuracy", "bpp_source", "bpp_air", "process_delay_ms", "transmission_delay_ms", "total_delay_ms"):
            agg[f] = float(np.mean([m[f] for m in members]))
        agg["n_seeds"] = len(members)
        out.append(agg)
    return out

