"""Matplotlib figures written to files next to the CSV output."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings in the files, so reruns match
_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path


def plot_curves(curves, path, title=None, points=None):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for name, c in curves.items():
        c = np.asarray(c, dtype=complex)
        ax.plot(c.real, c.imag, lw=1.2, label=name)
    if points is not None:
        p = np.asarray(points, dtype=complex)
        ax.plot(p.real, p.imag, "k.", ms=4)
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.set_aspect("equal", adjustable="datalim")
    if len(curves) > 1:
        ax.legend(frameon=False, fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    return _save(fig, path)


def plot_moments(report, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    lags, est = report.lags, report.estimates
    ax.loglog(lags, est, "o", ms=4, label="estimate")
    xx = np.array([lags.min(), lags.max()])
    ax.loglog(xx, np.exp(report.intercept) * xx ** report.slope, "-", lw=1,
              label=f"slope {report.slope:.3f} $\\pm$ {report.stderr:.3f}")
    ax.set_xlabel("lag")
    ax.set_ylabel(f"E|increment|$^{{{report.p:g}}}$")
    ax.set_title(f"{report.quantity}, {report.axis} axis", fontsize=10)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_angles(windows, sequences, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, angles in sequences.items():
        ax.semilogx(windows, angles, "o-", ms=4, lw=1, label=name)
    ax.axhline(np.pi, color="0.5", lw=0.8, ls="--")
    ax.axhline(np.pi / 2, color="0.5", lw=0.8, ls=":")
    ax.invert_xaxis()
    ax.set_xlabel("window")
    ax.set_ylabel("corner angle (rad)")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return _save(fig, path)
