"""Report figures rendered to files with the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG bytes independent of the run date
_SAVE = {"dpi": 120, "metadata": {"Software": None}}


def _save(fig, path):
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def plot_expansion(report, path):
    """Log-log rates (left) and normalized energy gaps (right) against ``n``."""
    ns = np.array(report.ns, dtype=float)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for key, label in (("h1_resid", r"$H^{-1}$ residual, order 2"),
                       ("h1_resid_order1", r"$H^{-1}$ residual, order 1"),
                       ("l2_err", r"$\|u_n - g\|_{L^2}$")):
        vals = report.column(key)
        if np.all(np.isfinite(vals)) and np.all(vals > 0):
            ax1.loglog(ns, vals, "o-", label=label)
    for p in (1, 2):
        ax1.loglog(ns, ns[0] ** p * ns**-p * 0.5 * report.column("h1_resid")[0], ":",
                   color="gray", lw=0.8)
    ax1.set_xlabel("n")
    ax1.legend(fontsize=8)
    ax1.set_title("decay against n")
    ax2.plot(ns, report.column("F1_n"), "o-", label=r"$F^1_n(u^{\min}_n)$")
    rec = report.column("F1_n_recovery")
    if np.all(np.isfinite(rec)):
        ax2.plot(ns, rec, "s-", label=r"$F^1_n$ recovery")
    if report.F1_hom is not None:
        ax2.axhline(report.F1_hom.value, color="k", lw=0.8, label=r"$F^1_{hom}$")
    ax2.set_xscale("log")
    ax2.set_xlabel("n")
    ax2.legend(fontsize=8)
    ax2.set_title("first order energy gaps")
    return _save(fig, path)


def plot_correctors(cs, path):
    """First order correctors: curves in 1D, images of ``psi_1`` and ``psi_2`` in 2D."""
    M = cs.grid.M
    if cs.dim == 1:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        y = np.arange(M + 1) / M
        ax.plot(y, np.append(cs.psi[0].values, cs.psi[0].values[0]), label=r"$\psi_1$")
        ax.plot(y, np.append(cs.chi[0][0].values, cs.chi[0][0].values[0]), label=r"$\chi_{11}$")
        ax.set_xlabel("y")
        ax.legend()
    else:
        fig, axes = plt.subplots(1, 2, figsize=(9, 4))
        for j, ax in enumerate(axes):
            im = ax.imshow(cs.psi[j].values.T, origin="lower", extent=(0, 1, 0, 1))
            ax.set_title(rf"$\psi_{j + 1}$")
            fig.colorbar(im, ax=ax, shrink=0.8)
    return _save(fig, path)


def plot_rl(entries, path):
    """``|D_n - L|`` against ``n`` for every Riemann-Lebesgue case."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for e in entries:
        err = np.abs(np.array(e["D"]) - e["target"])
        # exact zeros cannot be drawn on a log axis
        ax.semilogy(e["ns"], np.maximum(err, 1e-18), "o-", ms=3, label=e["name"])
    ax.set_xlabel("n")
    ax.set_ylabel(r"$|D_n - L|$")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_lp(entries, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for e in entries:
        ns = [r["n"] for r in e["rows"]]
        ax.semilogy(ns, np.maximum([r["gap"] for r in e["rows"]], 1e-18), "o-",
                    label=e["integrand"])
        ax.axhline(e["tolerance"], ls=":", lw=0.8, color=ax.lines[-1].get_color())
    ax.set_xlabel("n")
    ax.set_ylabel(r"$|\min G_n - \min G_{hom}|$")
    ax.legend(fontsize=8)
    return _save(fig, path)
