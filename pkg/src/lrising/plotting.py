"""Figure rendering for the CLI report commands (Agg backend, files only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps repeated renders byte-stable
    meta = {"Software": None} if path.suffix.lower() == ".png" else {"Creator": None}
    fig.savefig(path, dpi=120, metadata=meta)
    plt.close(fig)
    return path


def profile_figure(profile, path, residual=None) -> Path:
    """Heat map of the magnetization grid; a second panel shows the anti-symmetry residual."""
    g = profile.geometry
    extent = (-g.L - 0.5, g.L + 0.5, g.j_min - 0.5, g.j_max + 0.5)
    panels = 1 if residual is None else 2
    fig, axes = plt.subplots(1, panels, figsize=(4.5 * panels, 4), squeeze=False)
    ax = axes[0, 0]
    im = ax.imshow(profile.mean, origin="lower", extent=extent, cmap="RdBu_r", vmin=-1, vmax=1)
    ax.set_xlabel("i")
    ax.set_ylabel("j")
    ax.set_title(r"$\langle\sigma_{(i,j)}\rangle$")
    fig.colorbar(im, ax=ax)
    if residual is not None:
        ax = axes[0, 1]
        r = np.max(np.abs(residual)) or 1.0
        im = ax.imshow(residual, origin="lower", extent=extent, cmap="PuOr", vmin=-r, vmax=r)
        ax.set_xlabel("i")
        ax.set_title("mirror residual")
        fig.colorbar(im, ax=ax)
    fig.tight_layout()
    return _save(fig, path)


def fluctuation_figure(report, path) -> Path:
    """log-log plot of the mid-column height variance with bootstrap intervals."""
    fig, ax = plt.subplots(figsize=(5, 4))
    L = report.sizes
    v = report.variance
    ax.errorbar(L, v, yerr=[v - report.ci_low, report.ci_high - v], fmt="o", capsize=3, label="Var h")
    if np.isfinite(report.exponent):
        c = np.exp(np.mean(np.log(v) - report.exponent * np.log(L)))
        xs = np.geomspace(L.min(), L.max(), 50)
        ax.plot(xs, c * xs ** report.exponent, "--", label=f"slope {report.exponent:.3f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("L")
    ax.set_ylabel("variance of mid-column height")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)
