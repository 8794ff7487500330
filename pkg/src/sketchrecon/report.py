"""Figure rendering for reports.

Every function writes a PNG next to the delimited/JSON artifacts. Uses
the Agg backend so rendering works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .features import FEATURE_NAMES, FeatureMatrix  # noqa: E402
from .forest import AblationResult  # noqa: E402
from .stats import SignificanceReport  # noqa: E402
from .surfacing import SurfaceMesh  # noqa: E402
from .topology import CurveNetwork  # noqa: E402


def save_significance_figure(report: SignificanceReport,
                             path: str | Path) -> None:
    names = [e.feature for e in report.entries]
    logp = [-np.log10(max(e.p_value, 1e-300)) for e in report.entries]
    colors = ["tab:blue" if e.retained else "tab:gray"
              for e in report.entries]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.barh(names[::-1], logp[::-1], color=colors[::-1])
    ax.axvline(-np.log10(report.alpha), color="tab:red", ls="--", lw=1,
               label=f"alpha = {report.alpha:g}")
    ax.set_xlabel("-log10 p-value")
    ax.set_title("Feature relevance (gray = dropped)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_feature_histograms(matrix: FeatureMatrix, path: str | Path) -> None:
    fig, axes = plt.subplots(3, 4, figsize=(13, 8))
    labels = matrix.labels
    for k, name in enumerate(FEATURE_NAMES):
        ax = axes.flat[k]
        col = matrix.values[:, k]
        if labels is not None:
            ax.hist(col[labels == 1], bins=30, alpha=0.6, label="boundary")
            ax.hist(col[labels == 0], bins=30, alpha=0.6, label="fill")
        else:
            ax.hist(col, bins=30, alpha=0.8)
        ax.set_title(name, fontsize=9)
    axes.flat[0].legend(fontsize=7)
    for ax in axes.flat[len(FEATURE_NAMES):]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_ablation_figure(result: AblationResult, path: str | Path) -> None:
    subsets = sorted({r.subset for r in result.rows})
    models = sorted({r.model for r in result.rows})
    width = 0.8 / len(models)
    fig, ax = plt.subplots(figsize=(8, 4))
    x = np.arange(len(subsets))
    for mi, model in enumerate(models):
        accs = [result.get(model, s, "test").accuracy for s in subsets]
        ax.bar(x + mi * width, accs, width, label=model)
    ax.set_xticks(x + width / 2)
    ax.set_xticklabels(subsets)
    ax.set_ylabel("test accuracy [%]")
    ax.set_ylim(0, 105)
    ax.legend()
    ax.set_title("Feature-subset ablation")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_network_figure(network: CurveNetwork, path: str | Path) -> None:
    fig = plt.figure(figsize=(6, 6))
    ax = fig.add_subplot(projection="3d")
    for e in network.edges:
        pts = e.evaluate(np.linspace(0.0, 1.0, 32))
        ax.plot(pts[:, 0], pts[:, 1], pts[:, 2], color="tab:blue", lw=1.2)
    if network.nodes.size:
        ax.scatter(network.nodes[:, 0], network.nodes[:, 1],
                   network.nodes[:, 2], color="tab:red", s=18)
    ax.set_title(f"curve network: {network.nodes.shape[0]} nodes, "
                 f"{len(network.edges)} edges")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_mesh_figure(mesh: SurfaceMesh, path: str | Path) -> None:
    from mpl_toolkits.mplot3d.art3d import Poly3DCollection

    fig = plt.figure(figsize=(6, 6))
    ax = fig.add_subplot(projection="3d")
    if not mesh.is_empty():
        tris = mesh.vertices[mesh.faces]
        coll = Poly3DCollection(tris, alpha=0.55, facecolor="tab:cyan",
                                edgecolor="k", linewidths=0.2)
        ax.add_collection3d(coll)
        lo = mesh.vertices.min(axis=0)
        hi = mesh.vertices.max(axis=0)
        ax.set_xlim(lo[0], hi[0])
        ax.set_ylim(lo[1], hi[1])
        ax.set_zlim(lo[2], hi[2])
    ax.set_title(f"surface mesh: {mesh.faces.shape[0]} faces, "
                 f"{len(set(mesh.face_patch.tolist()))} patches")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_timings_figure(timings: dict, path: str | Path) -> None:
    stages = list(timings["stages"].keys())
    vals = [timings["stages"][s] for s in stages]
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.barh(stages[::-1], vals[::-1], color="tab:purple")
    ax.set_xlabel("wall time [s]")
    ax.set_title(f"pipeline stages (total {timings['total']:.1f}s)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
