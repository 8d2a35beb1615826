"""Figures for study reports.

Rendering uses the non-interactive Agg backend so reports can be produced on
headless machines.
"""
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

METHOD_LABELS = {
    "onestep": "one-step",
    "trajectory": "action trajectory",
    "statemarg": "state marginalized",
}


def _figure(width=6.0, height=None):
    golden = (math.sqrt(5) - 1.0) / 2.0
    fig, ax = plt.subplots(figsize=(width, height or width * golden))
    ax.grid(alpha=0.3)
    return fig, ax


def error_boxplot(errors_by_method, path):
    """Box plot of offline-minus-online errors, one box per method."""
    methods = [m for m in METHOD_LABELS if m in errors_by_method]
    fig, ax = _figure()
    ax.boxplot([errors_by_method[m] for m in methods])
    ax.set_xticks(range(1, len(methods) + 1))
    ax.set_xticklabels([METHOD_LABELS[m] for m in methods])
    ax.axhline(0.0, color="grey", lw=0.8, ls="--")
    ax.set_ylabel("offline - online value")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def online_value_histogram(values, behavior_value, path, bins=15):
    """Distribution of learned-policy online values with the behavior value marked."""
    fig, ax = _figure()
    ax.hist(values, bins=bins, color="steelblue", edgecolor="white")
    ax.axvline(behavior_value, color="red", lw=2, label="behavior policy")
    ax.set_xlabel("online value (total reward)")
    ax.set_ylabel("policies")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
