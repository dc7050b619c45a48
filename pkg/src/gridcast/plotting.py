"""Figures written next to the result tables (headless Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

_STATE_COLORS = ListedColormap(["#b2182b", "#f4a582", "#2166ac"])  # Byzantine, correct, reliable


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_reliable_map(correct: np.ndarray, reliable: np.ndarray, path, n: int | None = None,
                      title: str = "") -> Path:
    """Grid picture: Byzantine, correct-but-unreliable and reliable nodes; cluster lines every ``n``."""
    state = np.where(~correct, 0, np.where(reliable, 2, 1))
    side = state.shape[0]
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(state, cmap=_STATE_COLORS, vmin=0, vmax=2, interpolation="nearest")
    if n and n < side:
        for x in range(n, side, n):
            ax.axhline(x - 0.5, color="k", lw=0.4)
            ax.axvline(x - 0.5, color="k", lw=0.4)
    ax.set_xticks([])
    ax.set_yticks([])
    ax.set_title(title or f"reliable {int(reliable.sum())}/{reliable.size}")
    return _save(fig, path)


def plot_bound_curves(rows: list[dict], path, target: float | None = None) -> Path:
    mus = np.array([r["mu"] for r in rows])
    lam = 1.0 - mus
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(lam, [1.0 - r["g"] for r in rows], label="1 - g")
    for key in sorted(k for k in rows[0] if k.startswith("iterated_")):
        ax.plot(lam, [1.0 - r[key] for r in rows], ls="--", label=f"1 - prod g^i, k={key.split('_')[1]}")
    ax.plot(lam, [1.0 - r["H_limit"] for r in rows], lw=2, label="1 - H_limit")
    if target is not None:
        ax.axhline(1.0 - target, color="grey", ls=":", label="target")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("1 - mu (Byzantine probability)")
    ax.set_ylabel("unreliable fraction bound")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_mc(rows: list[dict], path) -> Path:
    """Monte Carlo estimates with 3-sigma bars against the analytic bound."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for k in sorted({r["k"] for r in rows}):
        sel = [r for r in rows if r["k"] == k]
        mus = [r["mu"] for r in sel]
        ax.errorbar(mus, [r["estimate"] for r in sel], yerr=[3 * r["stderr"] for r in sel],
                    fmt="o", capsize=3, label=f"{sel[0]['quantity']} estimate, k={k}")
        ax.plot(mus, [r["bound"] for r in sel], "x--", label=f"analytic bound, k={k}")
    ax.set_xlabel("mu")
    ax.set_ylabel("probability / fraction")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_fraction_hist(fractions, bound: float, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(fractions, bins=30)
    ax.axvline(bound, color="r", ls="--", label=f"bound {bound:.4f}")
    ax.set_xlabel("reliable fraction")
    ax.set_ylabel("placements")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)
