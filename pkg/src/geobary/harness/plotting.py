"""Figures for the experiment outputs.

Each ``emit_*`` function always writes a Vega-Lite description of the figure
that reads the CSV next to it, and renders a PNG with matplotlib when
``render`` is true. They return the names of the files they wrote.
"""

import json
from pathlib import Path

import numpy as np

VEGA_LITE = "https://vega.github.io/schema/vega-lite/v5.json"


def _write_spec(out, name, spec):
    with open(Path(out) / name, "w") as fh:
        json.dump(spec, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return name


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    # no timestamp or version metadata, so reruns give identical files
    fig.savefig(path, dpi=120, metadata={"Software": None})
    fig.clf()


def sweep_spec(csv_name="summary.csv"):
    return {
        "$schema": VEGA_LITE,
        "data": {"url": csv_name, "format": {"type": "csv"}},
        "transform": [
            {"filter": "datum.status == 'ok'"},
            {"calculate": "datum.mean_bary_gap_sq - datum.std_bary_gap_sq", "as": "lo"},
            {"calculate": "datum.mean_bary_gap_sq + datum.std_bary_gap_sq", "as": "hi"},
        ],
        "layer": [
            {
                "mark": {"type": "line", "point": True},
                "encoding": {
                    "x": {"field": "N", "type": "quantitative", "scale": {"type": "log"}},
                    "y": {"field": "mean_bary_gap_sq", "type": "quantitative", "scale": {"type": "log"},
                          "title": "mean ||a - a~||^2"},
                },
            },
            {
                "mark": "errorband",
                "encoding": {
                    "x": {"field": "N", "type": "quantitative"},
                    "y": {"field": "lo", "type": "quantitative"},
                    "y2": {"field": "hi"},
                },
            },
        ],
    }


def emit_sweep(out, summary, render=True):
    files = [_write_spec(out, "sweep.vl.json", sweep_spec())]
    if render:
        ok = [r for r in summary if r["status"] == "ok"]
        plt = _pyplot()
        fig, ax = plt.subplots(figsize=(5, 3.5))
        if ok:
            N = np.array([r["N"] for r in ok], dtype=float)
            mean = np.array([r["mean_bary_gap_sq"] for r in ok])
            std = np.array([r["std_bary_gap_sq"] for r in ok])
            ax.plot(N, mean, "o-")
            ax.fill_between(N, np.maximum(mean - std, mean * 1e-3), mean + std, alpha=0.3)
            ax.set_xscale("log")
            if np.all(mean > 0):
                ax.set_yscale("log")
        ax.set_xlabel("N")
        ax.set_ylabel("mean squared barycenter gap")
        fig.tight_layout()
        _save(fig, Path(out) / "sweep.png")
        plt.close(fig)
        files.append("sweep.png")
    return files


def bounds_spec(csv_name="bounds.csv"):
    return {
        "$schema": VEGA_LITE,
        "data": {"url": csv_name, "format": {"type": "csv"}},
        "facet": {"column": {"field": "shape"}, "row": {"field": "epsilon"}},
        "spec": {
            "mark": {"type": "point"},
            "encoding": {
                "x": {"field": "delta", "type": "quantitative", "scale": {"type": "log"}},
                "y": {"field": "prop1_ratio", "type": "quantitative", "title": "obj gap / bound"},
                "color": {"field": "prop1_pass", "type": "nominal"},
            },
        },
    }


def emit_bounds(out, rows, render=True):
    files = [_write_spec(out, "bounds.vl.json", bounds_spec())]
    if render:
        plt = _pyplot()
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
        for shape in sorted({r["shape"] for r in rows}):
            sub = [r for r in rows if r["shape"] == shape and r["prop1_bound"] > 0]
            delta = [r["delta"] for r in sub]
            axes[0].scatter(delta, [r["prop1_ratio"] for r in sub], s=8, label=shape)
            axes[1].scatter(delta, [max(r["bary_gap_sq"], 1e-300) for r in sub], s=8, label=shape)
        axes[0].axhline(1.0, color="k", lw=0.8)
        axes[0].set_ylabel("objective gap / bound")
        axes[1].set_ylabel("squared barycenter gap")
        for ax in axes:
            ax.set_xscale("log")
            ax.set_xlabel("delta")
        axes[1].set_yscale("log")
        axes[0].legend(fontsize=8)
        fig.tight_layout()
        _save(fig, Path(out) / "bounds.png")
        plt.close(fig)
        files.append("bounds.png")
    return files


def interpolation_spec(k):
    return {
        "$schema": VEGA_LITE,
        "description": f"barycenter weights over the support, one panel per weight vector ({k} panels)",
        "data": {"url": "support.txt", "format": {"type": "dsv", "delimiter": " "}},
        "note": "weights_<index>_<source>.txt holds one weight per support point",
        "mark": "circle",
        "encoding": {"x": {"field": "0"}, "y": {"field": "1"}, "size": {"field": "weight"}},
    }


def emit_interpolation(out, support, grid, true, graph, render=True):
    files = [_write_spec(out, "interpolation.vl.json", interpolation_spec(len(grid)))]
    if render:
        plt = _pyplot()
        side = int(np.ceil(np.sqrt(len(grid))))
        xy = np.asarray(support)[:, :2]
        for source, weights in (("true", true), ("graph", graph)):
            fig, axes = plt.subplots(side, side, figsize=(2 * side, 2 * side), squeeze=False)
            for ax in axes.ravel():
                ax.set_axis_off()
            for k, a in enumerate(weights):
                ax = axes[k // side, k % side]
                ax.scatter(xy[:, 0], xy[:, 1], c=a, s=6, cmap="viridis")
                ax.set_aspect("equal")
                ax.set_title(" ".join(f"{v:.2f}" for v in grid[k]), fontsize=6)
            fig.tight_layout()
            name = f"interpolation_{source}.png"
            _save(fig, Path(out) / name)
            plt.close(fig)
            files.append(name)
    return files
