"""
Static figures written next to the CSV and JSON outputs.

Everything renders with the Agg backend so it works without a display.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .discretization import DiscreteTriple  # noqa: E402


def _arrays(obj):
    if isinstance(obj, DiscreteTriple):
        return obj.mesh.times, obj.x, obj.u, obj.a
    return obj.times, obj.x, obj.u, obj.a


def plot_trajectory(obj, path, reference=None, title: str = "") -> Path:
    """Plot x, u and a against time, one panel each.

    Parameters
    ----------
    obj : DiscreteTriple or ContinuousPath
    path : str or Path
        Output image file.
    reference : path, optional
        Drawn dashed on the same axes.
    """
    times, x, u, a = _arrays(obj)
    fig, axes = plt.subplots(3, 1, figsize=(6, 7), sharex=True)
    for ax, vals, label in zip(axes, (x, u, a), ("x", "u", "a")):
        for i in range(vals.shape[1]):
            ax.plot(times, vals[:, i], marker="o", ms=3, label=f"{label}_{i + 1}")
        if reference is not None:
            fine = np.linspace(0.0, times[-1], 200)
            rx, ru, ra = reference.sample(fine)
            ref_vals = {"x": rx, "u": ru, "a": ra}[label]
            for i in range(ref_vals.shape[1]):
                ax.plot(fine, ref_vals[:, i], "k--", lw=1, label=f"reference {label}_{i + 1}")
        ax.set_ylabel(label)
        ax.legend(fontsize=7, loc="best")
    axes[-1].set_xlabel("t")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_convergence(study, path, floor: float = 1e-16) -> Path:
    """Log-log plot of the convergence-study columns against k."""
    ks = np.array([r.k for r in study.rows], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in ("w12_gap_sum", "initial_u_rate", "u_rate_variation"):
        vals = np.array([getattr(r, name) for r in study.rows], dtype=float)
        ax.loglog(ks, np.maximum(np.abs(vals), floor), marker="o", label=name)
    ax.set_xlabel("k")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_residuals(report, path, floor: float = 1e-18) -> Path:
    """Bar chart of residual maxima with the pass threshold."""
    names = list(report.residuals)
    vals = np.array([report.residuals[n] for n in names], dtype=float)
    vals = np.where(np.isfinite(vals), vals, 1e3)
    fig, ax = plt.subplots(figsize=(7, 0.3 * len(names) + 1.5))
    ax.barh(names, np.maximum(vals, floor), color=["C3" if v > report.tol else "C0" for v in vals])
    ax.axvline(report.tol, color="k", ls="--", lw=1)
    ax.set_xscale("log")
    ax.tick_params(axis="y", labelsize=7)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
