"""Plotting recipes for the CSV artifacts (needs the optional matplotlib extra).

Each function takes CSV paths written by the CLI and returns a matplotlib
Figure; nothing here is used by the CLI itself.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .report import read_csv

__all__ = ["plot_rate_curves", "plot_mux_gain", "plot_dmt", "plot_outage"]


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - exercised only without the extra
        raise ImportError("plotting needs matplotlib: pip install 'artifact[plot]'") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _label(path: Path, prefix: str) -> str:
    stem = Path(path).stem
    return stem[len(prefix) + 1:] if stem.startswith(prefix + "_") else stem


def plot_rate_curves(paths: Sequence[str | Path], closed_form: bool = True):
    """Monte Carlo rate (with 3-sigma bars) per CSV, plus the shared closed form."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    cf = None
    for path in paths:
        t = read_csv(path)
        ax.errorbar(t["snr_a_db"], t["mc_mean_rate"], yerr=3 * t["mc_stderr"], marker="o", ms=3,
                    label=_label(path, "rate_curve"))
        cf = t
    if closed_form and cf is not None:
        ax.plot(cf["snr_a_db"], cf["closed_form_rate"], "k--", label="closed form")
    ax.set_xlabel("SNR_a (dB)")
    ax.set_ylabel("ergodic rate (bits/s/Hz)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return fig


def plot_mux_gain(paths: Sequence[str | Path]):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for path in paths:
        t = read_csv(path)
        ax.plot(t["snr_db"], t["psi"], label=_label(path, "mux_gain"))
    ax.set_xlabel("mean SNR (dB)")
    ax.set_ylabel("R / log2(SNR)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return fig


def plot_dmt(paths: Sequence[str | Path], integer: bool = True):
    """Tradeoff curves; integer-restricted gains drawn as steps at integer d."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for path in paths:
        t = read_csv(path)
        line, = ax.plot(t["d"], t["g_m"], label=Path(path).stem)
        if integer:
            mask = ~np.isnan(t["g_m_integer"])
            ax.step(t["d"][mask], t["g_m_integer"][mask], where="post", ls=":", color=line.get_color())
    ax.set_xlabel("diversity gain d")
    ax.set_ylabel("multiplexing gain G_m")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return fig


def plot_outage(paths: Sequence[str | Path]):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for path in paths:
        t = read_csv(path)
        ok = t["outage_prob"] > 0
        ax.semilogy(t["snr_db"][ok], t["outage_prob"][ok], "o", ms=3, label=f"{Path(path).stem} (MC)")
        ax.semilogy(t["snr_db"], t["oracle_prob"], "-", label=f"{Path(path).stem} (exact)")
    ax.set_xlabel("mean SNR (dB)")
    ax.set_ylabel("outage probability")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return fig
