"""CSV, JSON and SVG emission for experiment results."""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

FORMAT_VERSION = "atlab-results/1"
BASE_COLUMNS = ["observable", "value", "stderr", "backend", "seed"]


def _clean(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if math.isnan(x) else x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(rows, param_columns) -> str:
    cols = list(param_columns) + BASE_COLUMNS
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def write_csv(path, rows, param_columns):
    with open(path, "w", newline="") as f:
        f.write(csv_text(rows, param_columns))


def results_document(config: dict, results, seed, elapsed=None) -> dict:
    return {"format_version": FORMAT_VERSION, "resolved_config": _clean(config),
            "results": _clean(list(results)),
            "timing": None if elapsed is None else {"elapsed_seconds": round(float(elapsed), 3)},
            "seed": seed}


def write_json(path, doc):
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "atlab"
    matplotlib.rcParams["svg.fonttype"] = "none"
    return plt


def heatmap_svg(path, xs, ys, values, title="", xlabel="", ylabel="", label=""):
    """values[i, j] belongs to (xs[j], ys[i])."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    values = np.asarray(values, dtype=float)
    if values.size:
        im = ax.imshow(values, origin="lower", aspect="auto", cmap="viridis",
                       extent=_extent(xs, ys))
        fig.colorbar(im, ax=ax, label=label)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _extent(xs, ys):
    def span(v):
        v = np.asarray(v, dtype=float)
        if len(v) == 1:
            return v[0] - 0.5, v[0] + 0.5
        h = (v[-1] - v[0]) / (len(v) - 1) / 2
        return v[0] - h, v[-1] + h

    x0, x1 = span(xs)
    y0, y1 = span(ys)
    return (x0, x1, y0, y1)


def line_svg(path, series: dict, title="", xlabel="", ylabel=""):
    """series maps a label to (x, y) or (x, y, yerr)."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, data in series.items():
        x, y = data[0], data[1]
        err = data[2] if len(data) > 2 else None
        if err is not None and np.any(np.asarray(err) > 0):
            ax.errorbar(x, y, yerr=err, marker="o", ms=3, capsize=2, label=name)
        else:
            ax.plot(x, y, marker="o", ms=3, label=name)
    if series:
        ax.legend(fontsize=8)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
