"""Training-curve figures (SVG) and relation histograms."""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (4.5, 3.2),
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "twcsg",
    "svg.fonttype": "none",
}
METRIC_LABELS = {"score": "Normalized score", "steps": "#Steps"}
LEVELS = ("easy", "medium", "hard")


def ema(values, alpha: float = 0.1) -> list[float]:
    """Exponential moving average; ``alpha=1`` returns the input unchanged."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    out, acc = [], None
    for v in values:
        acc = v if acc is None else alpha * v + (1.0 - alpha) * acc
        out.append(acc)
    return out


def read_metrics(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no metric rows")
    need = {"run", "episode", "level", "knowledge_source", "score", "steps"}
    missing = need - set(rows[0])
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    return rows


def method_label(rows) -> str:
    """Knowledge sources in the order they were used, e.g. ``conceptnet+scenegraph``."""
    seen = []
    for r in sorted(rows, key=lambda r: (int(r["run"]), int(r["episode"]))):
        if r["knowledge_source"] not in seen:
            seen.append(r["knowledge_source"])
    return "+".join(seen)


def mean_curves(rows, metric: str) -> dict[str, list[float]]:
    """Per level: metric averaged over runs at each episode."""
    acc: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        acc[r["level"]][int(r["episode"])].append(float(r[metric]))
    return {lvl: [sum(v) / len(v) for _, v in sorted(eps.items())] for lvl, eps in acc.items()}


def plot_curves(metrics_paths, alpha: float = 0.1, out_dir="figures", labels=None) -> list[Path]:
    """One figure per (level, metric); one smoothed line per metrics file."""
    if isinstance(metrics_paths, (str, Path)):
        metrics_paths = [metrics_paths]
    series = []
    for i, p in enumerate(metrics_paths):
        rows = read_metrics(p)
        label = labels[i] if labels else method_label(rows)
        series.append((label, rows))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    levels = sorted({r["level"] for _, rows in series for r in rows},
                    key=lambda l: LEVELS.index(l) if l in LEVELS else len(LEVELS))
    written = []
    with plt.rc_context(STYLE):
        for level in levels:
            for metric in ("score", "steps"):
                fig, ax = plt.subplots()
                for label, rows in series:
                    curve = mean_curves(rows, metric).get(level)
                    if curve:
                        ax.plot(range(1, len(curve) + 1), ema(curve, alpha), label=label, lw=1.2)
                ax.set_xlabel("Episode")
                ax.set_ylabel(METRIC_LABELS[metric])
                ax.set_title(f"{level.capitalize()}, {METRIC_LABELS[metric]}")
                ax.legend(frameon=False)
                fig.tight_layout()
                path = out_dir / f"{level}_{metric}.svg"
                fig.savefig(path, format="svg", metadata={"Date": None})
                plt.close(fig)
                written.append(path)
    return written


def plot_relation_histogram(hist, path, title: str = "") -> Path:
    """Horizontal bar chart of (relation, count) pairs, largest on top."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 0.25 * max(len(hist), 1) + 1))
        names = [r for r, _ in hist][::-1]
        counts = [c for _, c in hist][::-1]
        ax.barh(names, counts, color="0.35")
        ax.set_xlabel("Count")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
