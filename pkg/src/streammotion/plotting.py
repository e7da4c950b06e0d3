"""Figure rendering for the CLI report paths. Always renders off-screen to files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_spectrogram(mag, path, title="Motion spectrogram", fps=None):
    mag = np.asarray(mag)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    extent = None
    if fps:
        n_fft = 2 * (mag.shape[0] - 1)
        extent = [0, mag.shape[1] / fps, 0, fps / 2]
        ax.set_xlabel("time (s)")
        ax.set_ylabel("frequency (Hz)")
    else:
        n_fft = None
        ax.set_xlabel("frame")
        ax.set_ylabel("frequency bin")
    im = ax.imshow(np.log1p(mag), origin="lower", aspect="auto", extent=extent, cmap="magma")
    fig.colorbar(im, ax=ax, label="log(1 + |S|)")
    ax.set_title(title if n_fft is None else f"{title} (n_fft={n_fft})")
    _finish(fig, path)


def plot_trajectories(paths, path, labels=None):
    """Top-down (x, y) view of one or more F x 3 translation tracks."""
    fig, ax = plt.subplots(figsize=(5, 5))
    labels = labels or [None] * len(paths)
    for p, label in zip(paths, labels):
        p = np.asarray(p)
        ax.plot(p[:, 0], p[:, 1], lw=1.0, label=label)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if any(labels):
        ax.legend(frameon=False)
    _finish(fig, path)


def plot_mask(values, path, title="Soft mask"):
    fig, ax = plt.subplots(figsize=(4, 4))
    im = ax.imshow(np.asarray(values), cmap="gray", vmin=0.0, vmax=1.0)
    fig.colorbar(im, ax=ax)
    ax.set_title(title)
    ax.set_axis_off()
    _finish(fig, path)
