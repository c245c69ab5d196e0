"""Render ECDF figures for a finished run directory.

Import stays lazy-friendly: matplotlib is only touched here, with the Agg
backend forced so figures render in headless environments.
"""
from __future__ import annotations

import os
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .sim import EmptySamples, PhaseSample, ecdf_points  # noqa: E402

CREDENTIAL_FIGURE = "cdf_credential.png"
PAYMENT_FIGURE = "cdf_payment.png"
SESSION_FIGURE = "cdf_session_total.png"

_CREDENTIAL_SERIES = ("handshake", "gantry_proof", "user_proof", "credential_total")
_PAYMENT_SERIES = ("tip_selection", "pow", "broadcast", "payment_total")


def _series(samples: Sequence[PhaseSample]) -> Dict[str, List[float]]:
    grouped: Dict[str, List[float]] = {}
    for sample in samples:
        grouped.setdefault(sample.phase, []).append(sample.elapsed_s)
    return grouped


def _plot_ecdf(ax, values: Sequence[float], label: str) -> None:
    points = ecdf_points(values)
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    # step up exactly at each observed value, starting from probability zero
    ax.step([xs[0]] + xs, [0.0] + ys, where="post", label=label)


def render_figures(
    samples: Sequence[PhaseSample], out_dir, window_s: Optional[float] = None
) -> List[str]:
    """Write the three ECDF figures next to the delimited output files."""
    grouped = _series(samples)
    os.makedirs(out_dir, exist_ok=True)
    paths: List[str] = []

    for file_name, title, series in (
        (CREDENTIAL_FIGURE, "Credential exchange phases", _CREDENTIAL_SERIES),
        (PAYMENT_FIGURE, "Payment phases", _PAYMENT_SERIES),
    ):
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        plotted = False
        for phase in series:
            if phase in grouped:
                _plot_ecdf(ax, grouped[phase], phase)
                plotted = True
        if not plotted:
            plt.close(fig)
            raise EmptySamples(f"no samples available for figure {file_name!r}")
        ax.set_xlabel("elapsed time (s)")
        ax.set_ylabel("fraction of trials")
        ax.set_ylim(0.0, 1.02)
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
        ax.legend(loc="lower right")
        path = os.path.join(out_dir, file_name)
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        paths.append(path)

    if "session_total" not in grouped:
        raise EmptySamples("no session_total samples for the session figure")
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    _plot_ecdf(ax, grouped["session_total"], "session_total")
    if window_s is not None:
        ax.axvline(window_s, color="tab:red", linestyle="--", label=f"window = {window_s:.2f} s")
    ax.set_xlabel("elapsed time (s)")
    ax.set_ylabel("fraction of trials")
    ax.set_ylim(0.0, 1.02)
    ax.set_title("Session total vs. communication window")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right")
    path = os.path.join(out_dir, SESSION_FIGURE)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)
    return paths
