"""Matplotlib rendering of curve tables to deterministic SVG files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

QUANTITY_LABELS = {
    "prevalence": "Disease prevalence",
    "risk": "Cumulative disease risk",
    "conditional": "Conditional disease probability",
}

_SVG_SALT = "idmkit"


def _style():
    plt.rcParams.update({
        "svg.hashsalt": _SVG_SALT,
        "figure.figsize": (7.0, 4.5),
        "axes.grid": True,
        "grid.alpha": 0.3,
        "axes.spines.top": False,
        "axes.spines.right": False,
    })


def plot_curve_frame(frame: pd.DataFrame, out_path, title: str | None = None) -> None:
    """Render one quantity's curves (one line + 95% band per profile).

    ``frame`` uses the curve CSV layout: age, estimate, lo95, hi95,
    quantity, profile. Output bytes are reproducible: fixed hash salt, no
    embedded timestamp.
    """
    _style()
    fig, ax = plt.subplots()
    quantity = str(frame["quantity"].iloc[0]) if len(frame) else "risk"
    profiles = list(dict.fromkeys(frame.get("profile", pd.Series([""] * len(frame))).fillna("")))
    cmap = plt.get_cmap("tab10")
    for i, profile in enumerate(profiles):
        sel = frame[frame.get("profile", "").fillna("") == profile] if "profile" in frame \
            else frame
        sel = sel.sort_values("age")
        color = cmap(i % 10)
        label = profile if profile else quantity
        ax.plot(sel["age"], sel["estimate"], color=color, label=label)
        ax.fill_between(sel["age"], sel["lo95"], sel["hi95"], color=color, alpha=0.25,
                        linewidth=0)
    ax.set_xlabel("Age (years)")
    ax.set_ylabel(QUANTITY_LABELS.get(quantity, quantity))
    ax.set_ylim(bottom=0)
    if title:
        ax.set_title(title)
    if any(profiles):
        ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_curve_tables(tables, out_path, title: str | None = None) -> None:
    """Render CurveTable objects (stacked into one figure)."""
    frame = pd.concat([t.to_frame() for t in tables], ignore_index=True)
    plot_curve_frame(frame, out_path, title=title)
