"""SVG charts for sweep reports: accuracy vs SNR, accuracy vs bpp, delay bars."""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sweep import summarize  # noqa: E402


def _label(row):
    if row["scheme"] == "baseline_codec":
        return f"baseline q={int(row['cr_or_quality'])} ({row['fec']})"
    return f"{row['scheme']} cr={row['cr_or_quality']:g} ({row['fec']})"


def snr_series(rows):
    """``{label: [(snr, mean accuracy), ...]}`` over finite SNRs, sorted by SNR."""
    series = {}
    for agg in summarize(rows):
        if math.isinf(agg["snr_db"]):
            continue
        series.setdefault(_label(agg), []).append((agg["snr_db"], agg["accuracy"]))
    return {k: sorted(v) for k, v in sorted(series.items())}


def bpp_series(rows, snr_db=None):
    """``{scheme: [(bpp_source, mean accuracy), ...]}`` at one SNR (default: the highest)."""
    aggs = summarize(rows)
    if not aggs:
        return {}
    if snr_db is None:
        snr_db = max(a["snr_db"] for a in aggs)
    series = {}
    for agg in aggs:
        if agg["snr_db"] == snr_db:
            series.setdefault(f"{agg['scheme']} ({agg['fec']})", []).append((agg["bpp_source"], agg["accuracy"]))
    return {k: sorted(v) for k, v in sorted(series.items())}


def delay_bars(rows):
    """``[(label, process_ms, transmission_ms)]`` averaged over SNRs and seeds."""
    groups = {}
    for agg in summarize(rows, keys=("scheme", "cr_or_quality", "fec")):
        groups[_label(agg)] = (agg["process_delay_ms"], agg["transmission_delay_ms"])
    return [(k, p, t) for k, (p, t) in sorted(groups.items())]


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def emit_plots(rows, out_dir):
    """Write the three charts as SVG; returns their paths keyed by chart name."""
    if not rows:
        raise ValueError("empty report")
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, pts in snr_series(rows).items():
        xs, ys = zip(*pts)
        ax.plot(xs, ys, marker="o", label=label, gid=f"series-{label}")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    paths["accuracy_vs_snr"] = _save(fig, os.path.join(out_dir, "accuracy_vs_snr.svg"))

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, pts in bpp_series(rows).items():
        xs, ys = zip(*pts)
        ax.plot(xs, ys, marker="o", label=label, gid=f"series-{label}")
    ax.set_xscale("log")
    ax.set_xlabel("bits per pixel (source)")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=7)
    paths["accuracy_vs_bpp"] = _save(fig, os.path.join(out_dir, "accuracy_vs_bpp.svg"))

    bars = delay_bars(rows)
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = [b[0] for b in bars]
    proc = [b[1] for b in bars]
    trans = [b[2] for b in bars]
    ax.bar(labels, proc, label="process", gid="bars-process")
    ax.bar(labels, trans, bottom=proc, label="transmission", gid="bars-transmission")
    ax.set_ylabel("delay per image (ms)")
    ax.tick_params(axis="x", labelrotation=60, labelsize=7)
    ax.legend(fontsize=7)
    paths["delay"] = _save(fig, os.path.join(out_dir, "delay.svg"))
    return paths
