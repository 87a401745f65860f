"""Matplotlib figure output for the Monte Carlo harness (SVG files)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "fd_bins",
    "eig_pair_scatter",
    "hist_with_curves",
    "tau_panels",
    "eigvec_orthographic",
]


def fd_bins(samples: np.ndarray, floor: int = 20) -> int:
    """Freedman-Diaconis bin count with a hard floor."""
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    if len(x) < 2 or np.ptp(x) == 0:
        return floor
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    if iqr <= 0:
        return floor
    h = 2 * iqr * len(x) ** (-1 / 3)
    return max(floor, int(math.ceil(np.ptp(x) / h)))


def eig_pair_scatter(path, xy: np.ndarray, title: str = "") -> None:
    """Scatter of randomized eigenvalue pairs; repulsion empties the diagonal."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(xy[:, 0], xy[:, 1], s=2, alpha=0.35, linewidths=0)
    lims = [xy.min(), xy.max()]
    ax.plot(lims, lims, "k--", lw=0.6)
    ax.set_xlabel("eigenvalue (pair member 1)")
    ax.set_ylabel("eigenvalue (pair member 2)")
    if title:
        ax.set_title(title)
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def hist_with_curves(path, samples, curves, title="", xlabel="") -> None:
    """Density histogram with overlay curves [(x, y, label), ...]."""
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(x, bins=fd_bins(x), density=True, color="0.75", edgecolor="0.55")
    for cx, cy, label in curves:
        ax.plot(cx, cy, lw=1.4, label=label)
    if curves:
        ax.legend(frameon=False)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("density")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def tau_panels(path, tau2, tau3, tau5, chi2_pdf, gamma_pdf2=None,
               gamma_pdf5=None, title="") -> None:
    """Sphericity-statistic panels: scatter plus histograms with limit curves."""
    tau2 = np.asarray(tau2, float)
    tau3 = np.asarray(tau3, float)
    tau5 = np.asarray(tau5, float)
    ok3 = np.isfinite(tau3)
    ok5 = np.isfinite(tau5)
    fig, axes = plt.subplots(2, 2, figsize=(9, 7))

    ax = axes[0, 0]
    ax.scatter(tau2[ok3], np.abs(tau3[ok3]), s=2, alpha=0.3, linewidths=0)
    ax.set_xlabel(r"$\tau_2$")
    ax.set_ylabel(r"$|\tau_3|$")

    for ax, data, pdf_fit, name in (
        (axes[0, 1], tau2, gamma_pdf2, r"$\tau_2$"),
        (axes[1, 0], tau5[ok5], gamma_pdf5, r"$\tau_5$"),
    ):
        xs = np.linspace(0, max(np.percentile(data, 99.5), 20), 300)
        ax.hist(data, bins=fd_bins(data), density=True, color="0.75",
                edgecolor="0.55")
        ax.plot(xs, chi2_pdf(xs), "k-", lw=1.3, label=r"$\chi^2_5$")
        if pdf_fit is not None:
            ax.plot(xs, pdf_fit(xs), "r--", lw=1.3, label="gamma fit")
        ax.legend(frameon=False)
        ax.set_xlabel(name)

    ax = axes[1, 1]
    ax.hist(np.abs(tau3[ok3]), bins=fd_bins(tau3[ok3]), density=True,
            color="0.75", edgecolor="0.55")
    ax.axhline(1.0, color="k", lw=1.3, label="uniform")
    ax.set_xlabel(r"$|\tau_3|$")
    ax.legend(frameon=False)

    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def eigvec_orthographic(path, coords: np.ndarray, title="") -> None:
    """Orthographic (x, y) projection of eigenvector tips on the unit sphere.

    ``coords`` has rows (replication, eigenvector index 1..3, x, y, z);
    southern-hemisphere points are drawn hollow.
    """
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    colors = ["tab:blue", "tab:red", "tab:green"]
    for j in (1, 2, 3):
        sel = coords[:, 1] == j
        pts = coords[sel][:, 2:]
        north = pts[:, 2] >= 0
        ax.scatter(pts[north, 0], pts[north, 1], s=6, color=colors[j - 1],
                   label=f"eigenvector {j}", linewidths=0)
        ax.scatter(pts[~north, 0], pts[~north, 1], s=6, facecolors="none",
                   edgecolors=colors[j - 1], linewidths=0.5)
    circle = plt.Circle((0, 0), 1.0, fill=False, color="0.4", lw=0.8)
    ax.add_patch(circle)
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    ax.set_aspect("equal")
    ax.legend(frameon=False, fontsize=8, loc="upper right")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
