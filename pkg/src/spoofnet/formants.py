"""Frame-level F1/F2 estimation via Burg-method linear prediction.

The signal is pre-emphasized, framed in step with the STFT, windowed
with a Gaussian taper, and fitted with an order-10 all-pole model whose
complex roots give candidate (frequency, bandwidth) resonances. The two
lowest candidates inside a plausible speech band with reasonable
bandwidth are reported as (f1, f2); dropout frames inherit the previous
frame's values, range midpoints seed frame zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import FRAME_LEN, HOP_LEN, FixedWaveform, frame_signal

F1_FALLBACK_HZ = 525.0   # midpoint of the 200-850 Hz F1 range
F2_FALLBACK_HZ = 1750.0  # midpoint of the 800-2700 Hz F2 range


@dataclass(frozen=True)
class FormantConfig:
    order: int = 10
    preemphasis: float = 0.97
    frame_len: int = FRAME_LEN
    hop: int = HOP_LEN
    min_freq_hz: float = 50.0
    max_freq_hz: float = 5500.0
    max_bandwidth_hz: float = 400.0
    window_std_fraction: float = 1.0 / 6.0

    def key(self) -> str:
        return (
            f"burg:{self.order}:{self.preemphasis}:{self.frame_len}:{self.hop}:"
            f"{self.min_freq_hz}:{self.max_freq_hz}:{self.max_bandwidth_hz}:"
            f"{self.window_std_fraction}"
        )


def burg(x: np.ndarray, order: int) -> np.ndarray:
    """Burg-method LPC coefficients [1, a1, ..., a_order].

    Minimizes the summed forward and backward prediction error through a
    lattice recursion; reflection coefficients stay in [-1, 1] so the
    resulting polynomial is minimum-phase (all roots inside the unit
    circle).
    """
    a = np.zeros(order + 1)
    a[0] = 1.0
    f = x[1:].astype(np.float64)
    b = x[:-1].astype(np.float64)
    for m in range(order):
        den = float(np.dot(f, f) + np.dot(b, b))
        if den <= 0.0 or f.size == 0:
            break
        k = -2.0 * float(np.dot(f, b)) / den
        prev = a.copy()
        for i in range(1, m + 2):
            a[i] = prev[i] + k * prev[m + 1 - i]
        f, b = f[1:] + k * b[1:], b[:-1] + k * f[:-1]
    return a


def lpc_resonances(a: np.ndarray, sample_rate: int) -> list[tuple[float, float]]:
    """(frequency_hz, bandwidth_hz) for each upper-half-plane pole."""
    roots = np.roots(a)
    out = []
    for r in roots:
        if r.imag <= 0.0:
            continue
        freq = float(np.angle(r)) * sample_rate / (2.0 * np.pi)
        mag = abs(r)
        if mag <= 0.0:
            continue
        bandwidth = -np.log(mag) * sample_rate / np.pi
        out.append((freq, bandwidth))
    return sorted(out)


def gaussian_window(n: int, std_fraction: float) -> np.ndarray:
    half = (n - 1) / 2.0
    idx = np.arange(n) - half
    return np.exp(-0.5 * (idx / (std_fraction * n)) ** 2)


def preemphasize(x: np.ndarray, coeff: float) -> np.ndarray:
    y = x.astype(np.float64).copy()
    y[1:] -= coeff * x[:-1]
    return y


def frame_formants(
    frame: np.ndarray, cfg: FormantConfig, sample_rate: int
) -> tuple[float, float] | None:
    """Estimate (f1, f2) for one windowed frame; None when fewer than two
    qualifying resonances exist."""
    if not np.any(frame):
        return None
    a = burg(frame, cfg.order)
    keep = [
        (f, bw)
        for f, bw in lpc_resonances(a, sample_rate)
        if cfg.min_freq_hz < f < cfg.max_freq_hz and bw < cfg.max_bandwidth_hz
    ]
    if len(keep) < 2:
        return None
    f1, f2 = keep[0][0], keep[1][0]
    if not f1 < f2:
        return None
    return f1, f2


def track_formants(
    x: FixedWaveform, cfg: FormantConfig = FormantConfig(), sample_rate: int = 16000
) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame (f1, f2) arrays aligned with the STFT framing."""
    emphasized = preemphasize(x.samples, cfg.preemphasis)
    frames = frame_signal(emphasized, cfg.frame_len, cfg.hop)
    window = gaussian_window(cfg.frame_len, cfg.window_std_fraction)
    n = frames.shape[0]
    f1 = np.empty(n)
    f2 = np.empty(n)
    last = (F1_FALLBACK_HZ, F2_FALLBACK_HZ)
    for t in range(n):
        est = frame_formants(frames[t] * window, cfg, sample_rate)
        if est is not None:
            last = est
        f1[t], f2[t] = last
    return f1, f2
