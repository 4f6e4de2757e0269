"""Signal chain: resample to 120 Hz, baseline-correct, robust-scale, clamp.

The pipeline order is fixed. Baseline correction is applied per extracted
window; scaler statistics are fit once per recording on its training-split
portion and then applied everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .dataset.types import Recording


class DegenerateChannel(ValueError):
    """A channel's interquartile range is zero; it cannot be scaled."""


def _resample_filter(up: int, down: int, half_zc: int = 16, beta: float = 8.6,
                     rolloff: float = 0.94) -> np.ndarray:
    """Kaiser-windowed sinc lowpass for a rational-rate polyphase resampler."""
    max_rate = max(up, down)
    half = half_zc * max_rate
    n = np.arange(-half, half + 1)
    c = rolloff / max_rate  # cutoff as a fraction of the upsampled Nyquist
    h = c * np.sinc(c * n) * np.kaiser(2 * half + 1, beta)
    h /= h.sum()
    return h * up


def resample(signal: np.ndarray, sr_in: float, sr_out: float = 120.0) -> np.ndarray:
    """Windowed-sinc polyphase resampling of a (C, T) signal.

    Downsampling only; content above ``sr_out / 2`` is attenuated by at
    least 60 dB. Edges are handled by constant extension so DC signals are
    preserved exactly. Output length is ``round(T * sr_out / sr_in)``.
    """
    signal = np.atleast_2d(np.asarray(signal))
    if sr_out <= 0 or sr_in <= 0:
        raise ValueError("sample rates must be positive")
    if sr_in < sr_out:
        raise ValueError(f"upsampling unsupported ({sr_in} Hz -> {sr_out} Hz)")
    t_in = signal.shape[1]
    t_out = int(round(t_in * sr_out / sr_in))
    if sr_in == sr_out:
        return signal.copy()

    ratio = Fraction(sr_out / sr_in).limit_denominator(10000)
    up, down = ratio.numerator, ratio.denominator
    h = _resample_filter(up, down)
    half = (len(h) - 1) // 2

    pad_in = -(-half // up)  # ceil; constant extension on both edges
    padded = np.pad(signal, ((0, 0), (pad_in, pad_in)), mode="edge")
    stuffed = np.zeros((signal.shape[0], padded.shape[1] * up), dtype=np.float64)
    stuffed[:, ::up] = padded
    out = np.empty((signal.shape[0], t_out), dtype=signal.dtype)
    offset = pad_in * up + half
    take = np.arange(t_out) * down + offset
    for c in range(signal.shape[0]):
        full = np.convolve(stuffed[c], h)
        out[c] = full[take]
    return out


def baseline_correct(window: np.ndarray, baseline_dur: float = 0.5,
                     sample_rate: float = 120.0) -> np.ndarray:
    """Subtract each channel's mean over the first ``baseline_dur`` seconds."""
    window = np.asarray(window)
    n0 = int(round(baseline_dur * sample_rate))
    if window.ndim != 2 or window.shape[1] < n0:
        raise ValueError(f"window of {window.shape} too short for {baseline_dur}s baseline")
    return window - window[:, :n0].mean(axis=1, keepdims=True)


@dataclass
class ScalerParams:
    """Per-channel robust-scaler statistics (training portion only)."""

    q25: np.ndarray
    median: np.ndarray
    q75: np.ndarray

    def __post_init__(self):
        self.q25 = np.asarray(self.q25, dtype=np.float64)
        self.median = np.asarray(self.median, dtype=np.float64)
        self.q75 = np.asarray(self.q75, dtype=np.float64)
        bad = np.flatnonzero(self.q75 - self.q25 <= 0)
        if bad.size:
            raise DegenerateChannel(
                f"channel(s) {bad.tolist()} have zero interquartile range"
            )
        if np.any(self.q25 > self.median) or np.any(self.median > self.q75):
            raise ValueError("quantiles out of order")

    @classmethod
    def fit(cls, signal: np.ndarray) -> "ScalerParams":
        q25, med, q75 = np.quantile(signal, [0.25, 0.5, 0.75], axis=1)
        return cls(q25=q25, median=med, q75=q75)

    def apply(self, signal: np.ndarray) -> np.ndarray:
        """Affine map sending q25 -> -1 and q75 -> +1 per channel."""
        q25 = self.q25[:, None]
        q75 = self.q75[:, None]
        return (2.0 * signal - q25 - q75) / (q75 - q25)

    def to_dict(self) -> dict:
        return {
            "q25": self.q25.tolist(),
            "median": self.median.tolist(),
            "q75": self.q75.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ScalerParams":
        return cls(q25=obj["q25"], median=obj["median"], q75=obj["q75"])


def robust_scale(recording: Recording, params: ScalerParams) -> Recording:
    if params.q25.shape[0] != recording.n_channels:
        raise ValueError("scaler fitted for a different channel count")
    return Recording(
        recording_id=recording.recording_id,
        subject_id=recording.subject_id,
        channel_names=recording.channel_names,
        positions=recording.positions,
        signal=params.apply(recording.signal).astype(recording.signal.dtype),
        sample_rate=recording.sample_rate,
    )


def clamp(signal: np.ndarray, limit: Optional[float] = 20.0) -> np.ndarray:
    """Saturate values to [-limit, +limit]; ``limit=None`` is the ablation identity."""
    if limit is None:
        return np.asarray(signal).copy()
    if limit <= 0:
        raise ValueError("clamp limit must be positive")
    return np.clip(signal, -limit, limit)


def preprocess_window(window: np.ndarray, params: ScalerParams,
                      baseline_dur: float = 0.5, sample_rate: float = 120.0,
                      clamp_limit: Optional[float] = 20.0) -> np.ndarray:
    """Fixed-order window pipeline: baseline-correct, robust-scale, clamp."""
    out = baseline_correct(window, baseline_dur, sample_rate)
    out = params.apply(out)
    return clamp(out, clamp_limit)
