"""STFT spectrograms of motion sequences and spectrogram comparison metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from streammotion.errors import MetricUndefinedError, ValidationError
from streammotion.motion_model import MotionSequence

CHANNEL_MODES = ("per_channel_mean", "flattened")
EPSILON = 1e-8


@dataclass(frozen=True)
class StftParams:
    n_fft: int = 128
    hop: int = 32
    window: str = "hann"
    channel_mode: str = "per_channel_mean"
    symmetric: bool = False

    def __post_init__(self):
        if int(self.n_fft) != self.n_fft or self.n_fft < 2:
            raise ValidationError(f"n_fft must be an integer >= 2, got {self.n_fft}")
        if int(self.hop) != self.hop or not (1 <= self.hop <= self.n_fft):
            raise ValidationError(f"hop must be in [1, n_fft], got {self.hop}")
        if self.window != "hann":
            raise ValidationError(f"unsupported window {self.window!r}")
        if self.channel_mode not in CHANNEL_MODES:
            raise ValidationError(f"channel_mode must be one of {CHANNEL_MODES}")

    @property
    def n_bins(self):
        return self.n_fft // 2 + 1


def hann_window(n, symmetric=False):
    """Periodic Hann window ``0.5 (1 - cos(2 pi k / n))``; symmetric uses ``n - 1``."""
    if n < 2:
        raise ValidationError("window length must be >= 2")
    denom = n - 1 if symmetric else n
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / denom))


def stft_magnitude(signal, params):
    """Centered one-sided STFT magnitudes, shape ``(n_fft//2 + 1, 1 + len // hop)``.

    The signal is zero-padded by ``n_fft // 2`` on both ends so column ``c``
    is centered on sample ``c * hop``.
    """
    x = np.asarray(signal, dtype=float)
    n = params.n_fft
    half = n // 2
    padded = np.concatenate([np.zeros(half), x, np.zeros(n - half)])
    n_cols = 1 + (len(x) - 1) // params.hop
    starts = np.arange(n_cols) * params.hop
    frames = padded[starts[:, None] + np.arange(n)[None, :]]
    w = hann_window(n, params.symmetric)
    return np.abs(np.fft.rfft(frames * w[None, :], axis=1)).T


def _resample_columns(mag, centers, length):
    """Linear interpolation of each bin's row from column centers onto 0..length-1."""
    target = np.arange(length, dtype=float)
    if mag.shape[1] == 1:
        return np.repeat(mag, length, axis=1)
    return np.stack([np.interp(target, centers, row) for row in mag])


def _as_array(seq):
    if isinstance(seq, MotionSequence):
        return seq.flat()
    a = np.asarray(seq, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim == 3:
        a = a.reshape(a.shape[0], -1)
    if a.ndim != 2 or a.shape[0] < 1:
        raise ValidationError(f"expected an F x C signal, got shape {a.shape}")
    return a


def spectrogram(seq, params=None):
    """Magnitude spectrogram, ``(n_fft//2 + 1) x F``, resampled to one column per frame.

    ``per_channel_mean`` runs one STFT per coordinate series and averages the
    magnitudes. ``flattened`` concatenates the frames' coordinates into a single
    series of length ``F * C`` and maps its time axis back to frames.
    """
    params = params or StftParams()
    y = _as_array(seq)
    n_frames, n_channels = y.shape
    if params.channel_mode == "per_channel_mean":
        total = None
        for c in range(n_channels):
            mag = stft_magnitude(y[:, c], params)
            total = mag if total is None else total + mag
        mag = total / n_channels
        centers = np.arange(mag.shape[1]) * params.hop
        return _resample_columns(mag, centers.astype(float), n_frames)
    series = y.reshape(-1)
    mag = stft_magnitude(series, params)
    centers = np.arange(mag.shape[1]) * params.hop / n_channels
    return _resample_columns(mag, centers, n_frames)


def rmse_norm(s_gt, s_pred, eps=EPSILON):
    """``100 * RMSE / (std(S_gt) + eps)``. Deliberately not symmetric."""
    a = np.asarray(s_gt, dtype=float)
    b = np.asarray(s_pred, dtype=float)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    rmse = math.sqrt(float(np.mean((a - b) ** 2)))
    return 100.0 * rmse / (float(a.std()) + eps)


def corr_norm(s_gt, s_pred):
    """``100 * (1 - r) / 2`` with ``r`` the Pearson correlation over all entries.

    A constant matrix paired with a non-constant one gives ``r = 0``.
    """
    a = np.asarray(s_gt, dtype=float).ravel()
    b = np.asarray(s_pred, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    da = a - a.mean()
    db = b - b.mean()
    saa = float(np.dot(da, da))
    sbb = float(np.dot(db, db))
    if saa == 0.0 and sbb == 0.0:
        raise MetricUndefinedError("correlation undefined: both spectrograms are constant")
    if saa == 0.0 or sbb == 0.0:
        r = 0.0
    else:
        r = float(np.dot(da, db)) / math.sqrt(saa * sbb)
        r = max(-1.0, min(1.0, r))
    return 100.0 * (1.0 - r) / 2.0
