"""Optional matplotlib rendering of report tables to image files.

Figures are written next to the delimited output when plotting is enabled
(CLI flag ``--plot`` or ``output.plots`` in the config); nothing here is
imported unless plotting was requested.
"""

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_value_curve(table, n, path):
    """Mean value curve per component over time (from solution_value_curve)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    t = table[:, 0]
    for k in range(n):
        ax.plot(t, table[:, 1 + k], label="Y mean, component %d" % k)
    ax.set_xlabel("t")
    ax.set_ylabel("value")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_lambda_scan(report, path):
    """Risk-sharing objective over the transfer fraction grid."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for k in range(report.scan.shape[1]):
        ax.plot(report.lambda_grid, report.scan[:, k], marker=".",
                label="component %d" % k)
        ax.axhline(report.closed_form[k], linestyle="--", linewidth=0.8)
        ax.axvline(report.lambda_star[k], linestyle=":", linewidth=0.8)
    ax.set_xlabel("transfer fraction")
    ax.set_ylabel("shared risk")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_penalization(result, target, times, path):
    """Approximated increasing process per penalization level."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for m in result.m_list:
        ax.plot(times, result.A_m[m][:, 0], label="m = %s" % m)
    ax.set_xlabel("t")
    ax.set_ylabel("A^m")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_fenchel(table, path):
    """Conjugate surface as a heatmap; divergent cells are masked out."""
    import numpy as np
    fig, ax = plt.subplots(figsize=(6, 4))
    vals = np.where(table.divergent, np.nan, table.values)
    im = ax.imshow(vals, origin="lower", aspect="auto",
                   extent=[table.c_grid.min(), table.c_grid.max(),
                           table.b_grid.min(), table.b_grid.max()])
    fig.colorbar(im, ax=ax, label="G")
    ax.set_xlabel("c")
    ax.set_ylabel("b")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
