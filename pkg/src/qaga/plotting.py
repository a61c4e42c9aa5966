"""Swarm and head-to-head figures for TTS reports."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

TIMEOUT_COLOR = "0.85"


def _ceiling(values) -> float:
    finite = [v for v in values if v > 0 and not math.isinf(v)]
    top = max(finite) if finite else 1.0
    return 10 ** (math.ceil(math.log10(top)) + 1)


def swarm_plot(entries, path, title=""):
    """One column per solver, one dot per instance; timeouts sit in a shaded band."""
    solvers = sorted({e.solver for e in entries})
    ceiling = _ceiling([e.tts50_us for e in entries])
    fig, ax = plt.subplots(figsize=(1.4 * len(solvers) + 2, 4.5))
    ax.axhspan(ceiling / 3, ceiling * 3, color=TIMEOUT_COLOR, zorder=0)
    jitter = np.random.default_rng(0)
    for x, s in enumerate(solvers):
        ys = np.array([ceiling if math.isinf(e.tts50_us) else e.tts50_us for e in entries if e.solver == s])
        xs = x + jitter.uniform(-0.25, 0.25, len(ys))
        ax.scatter(xs, ys, s=12, alpha=0.8)
    ax.set_yscale("log")
    ax.set_xticks(range(len(solvers)))
    ax.set_xticklabels(solvers)
    ax.set_ylabel("median TTS (µs)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def scatter_plot(rows, path, title=""):
    """Reference TTS against baseline TTS, log-log, infinite TTS in the shaded margins."""
    vals = [r["reference_tts_us"] for r in rows] + [r["baseline_tts_us"] for r in rows]
    ceiling = _ceiling(vals)
    finite = [v for v in vals if v > 0 and not math.isinf(v)]
    floor = 10 ** math.floor(math.log10(min(finite))) if finite else 1.0
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.axhspan(ceiling / 3, ceiling * 3, color=TIMEOUT_COLOR, zorder=0)
    ax.axvspan(ceiling / 3, ceiling * 3, color=TIMEOUT_COLOR, zorder=0)
    xs = [ceiling if math.isinf(r["baseline_tts_us"]) else r["baseline_tts_us"] for r in rows]
    ys = [ceiling if math.isinf(r["reference_tts_us"]) else r["reference_tts_us"] for r in rows]
    ax.scatter(xs, ys, s=14, facecolors="none", edgecolors="C0")
    ax.plot([floor, ceiling * 3], [floor, ceiling * 3], "k--", lw=0.8)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlim(floor, ceiling * 3)
    ax.set_ylim(floor, ceiling * 3)
    if rows:
        ax.set_xlabel(f"{rows[0]['baseline']} TTS (µs)")
        ax.set_ylabel(f"{rows[0]['reference']} TTS (µs)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_all(table, h2h_rows, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    for cls in sorted({e.instance_class for e in table}):
        tag = cls or "all"
        sub = [e for e in table if e.instance_class == cls]
        paths.append(swarm_plot(sub, out_dir / f"swarm_{tag}.png", title=tag))
        for base in sorted({r["baseline"] for r in h2h_rows}):
            rows = [r for r in h2h_rows if r["baseline"] == base and r["instance_class"] == cls]
            if rows:
                p = out_dir / f"scatter_{tag}_{rows[0]['reference']}_vs_{base}.png"
                paths.append(scatter_plot(rows, p, title=f"{tag}: {rows[0]['reference']} vs {base}"))
    return paths
