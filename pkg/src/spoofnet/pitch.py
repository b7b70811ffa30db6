"""Probabilistic pitch tracking for frame-level f0 ground truth.

Per frame, a YIN cumulative-mean-normalized difference function yields
candidate period troughs; each candidate is weighted by the share of a
uniform threshold prior it would be selected under. A Viterbi pass over
a log-spaced pitch grid plus one unvoiced state smooths the track.
Frames with no winning pitch state are reported as NaN (unvoiced).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import FRAME_LEN, HOP_LEN, FixedWaveform, frame_signal


@dataclass(frozen=True)
class PitchConfig:
    fmin_hz: float = 60.0
    fmax_hz: float = 400.0
    frame_len: int = FRAME_LEN
    hop: int = HOP_LEN
    # uniform prior over YIN thresholds in (0, threshold_max]
    threshold_max: float = 0.35
    n_thresholds: int = 100
    # Viterbi grid: 10-cent bins spanning [fmin, fmax]
    cents_per_bin: float = 10.0
    # cost in nats per grid bin of pitch movement between frames
    jump_cost_per_bin: float = 0.1
    # probability of flipping voiced<->unvoiced between frames
    switch_prob: float = 0.01
    energy_floor: float = 1e-12

    def key(self) -> str:
        return (
            f"pyin:{self.fmin_hz}:{self.fmax_hz}:{self.frame_len}:{self.hop}:"
            f"{self.threshold_max}:{self.n_thresholds}:{self.cents_per_bin}:"
            f"{self.jump_cost_per_bin}:{self.switch_prob}"
        )


def difference_function(frame: np.ndarray, tau_max: int) -> np.ndarray:
    """YIN squared-difference function d(tau) for tau in [0, tau_max].

    Computed exactly via the autocorrelation identity
    d(tau) = e[N-tau] + (e[N] - e[tau]) - 2 r(tau), with r obtained by
    FFT, so the cost is O(N log N) rather than O(N * tau_max).
    """
    n = frame.size
    fft_size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(frame, n=fft_size)
    acf = np.fft.irfft(spec * np.conj(spec))[: tau_max + 1]
    energy = np.concatenate([[0.0], np.cumsum(frame * frame)])
    taus = np.arange(tau_max + 1)
    d = energy[n - taus] + (energy[n] - energy[taus]) - 2.0 * acf
    return np.maximum(d, 0.0)


def cmndf(d: np.ndarray) -> np.ndarray:
    """Cumulative-mean-normalized difference; 1 at lag 0 by definition."""
    out = np.ones_like(d)
    cumulative = np.cumsum(d[1:])
    positive = cumulative > 0
    out[1:][positive] = d[1:][positive] * np.arange(1, d.size)[positive] / cumulative[positive]
    return out


def _parabolic_refine(y: np.ndarray, i: int) -> tuple[float, float]:
    """Refine trough position i to sub-sample accuracy; returns (lag, value)."""
    if i <= 0 or i >= y.size - 1:
        return float(i), float(y[i])
    denom = y[i - 1] - 2.0 * y[i] + y[i + 1]
    if denom <= 0:
        return float(i), float(y[i])
    shift = 0.5 * (y[i - 1] - y[i + 1]) / denom
    value = y[i] - 0.25 * (y[i - 1] - y[i + 1]) * shift
    return i + shift, value


def frame_candidates(
    frame: np.ndarray, sample_rate: int, cfg: PitchConfig
) -> list[tuple[float, float]]:
    """Pitch candidates (frequency_hz, probability) for one frame.

    Troughs of the normalized difference inside the lag range are scored
    by the fraction of thresholds under which plain YIN (pick the first
    trough below threshold) would select them.
    """
    if float(np.dot(frame, frame)) < cfg.energy_floor:
        return []
    tau_min = max(2, int(np.floor(sample_rate / cfg.fmax_hz)))
    tau_max = min(frame.size - 2, int(np.ceil(sample_rate / cfg.fmin_hz)))
    d = difference_function(frame, tau_max + 1)
    nd = cmndf(d)
    lags = np.arange(tau_min, tau_max + 1)
    inner = nd[tau_min : tau_max + 1]
    is_trough = (inner <= nd[lags - 1]) & (inner < nd[lags + 1])
    trough_lags = lags[is_trough]
    if trough_lags.size == 0:
        return []
    refined = [_parabolic_refine(nd, t) for t in trough_lags]
    depths = np.array([v for _, v in refined])

    thresholds = cfg.threshold_max * (np.arange(1, cfg.n_thresholds + 1) / cfg.n_thresholds)
    weight = 1.0 / cfg.n_thresholds
    probs = np.zeros(len(refined))
    # first trough below each threshold wins that threshold's mass
    order = np.arange(len(refined))
    for s in thresholds:
        below = order[depths < s]
        if below.size:
            probs[below[0]] += weight

    out = []
    for (lag, _), p in zip(refined, probs):
        if p <= 0.0 or lag <= 0:
            continue
        f = sample_rate / lag
        f = min(max(f, cfg.fmin_hz), cfg.fmax_hz)
        out.append((f, float(p)))
    return out


def _pitch_grid(cfg: PitchConfig) -> np.ndarray:
    """Geometric pitch grid from fmin upward in cents_per_bin steps."""
    n_bins = int(np.floor(1200.0 * np.log2(cfg.fmax_hz / cfg.fmin_hz) / cfg.cents_per_bin)) + 1
    return cfg.fmin_hz * 2.0 ** (cfg.cents_per_bin * np.arange(n_bins) / 1200.0)


def viterbi_track(
    candidates_per_frame: list[list[tuple[float, float]]], cfg: PitchConfig
) -> np.ndarray:
    """Decode a smooth f0 track; NaN marks unvoiced frames.

    States are the pitch grid bins plus one unvoiced state. Moving k bins
    between voiced frames costs jump_cost_per_bin * k nats; switching
    voicing state costs -log(switch_prob).
    """
    grid = _pitch_grid(cfg)
    n_bins = grid.size
    unvoiced = n_bins
    n_frames = len(candidates_per_frame)
    log_grid = np.log2(grid)

    obs_voiced = np.full((n_frames, n_bins), -np.inf)
    obs_unvoiced = np.zeros(n_frames)
    cand_freq = np.full((n_frames, n_bins), np.nan)
    for t, cands in enumerate(candidates_per_frame):
        total = 0.0
        for f, p in cands:
            b = int(np.clip(np.round(1200.0 * np.log2(f / cfg.fmin_hz) / cfg.cents_per_bin),
                            0, n_bins - 1))
            if not np.isfinite(obs_voiced[t, b]) or p > np.exp(obs_voiced[t, b]):
                cand_freq[t, b] = f
            prev = np.exp(obs_voiced[t, b]) if np.isfinite(obs_voiced[t, b]) else 0.0
            obs_voiced[t, b] = np.log(prev + p)
            total += p
        obs_unvoiced[t] = np.log(max(1.0 - total, 1e-9))

    switch = -np.log(cfg.switch_prob)
    stay = -np.log(1.0 - cfg.switch_prob)
    jump = cfg.jump_cost_per_bin * np.abs(np.arange(n_bins)[:, None] - np.arange(n_bins)[None, :])

    dp = np.full((n_frames, n_bins + 1), -np.inf)
    bp = np.zeros((n_frames, n_bins + 1), dtype=np.int32)
    dp[0, :n_bins] = obs_voiced[0] + np.log(0.5)
    dp[0, unvoiced] = obs_unvoiced[0] + np.log(0.5)

    for t in range(1, n_frames):
        prev_v = dp[t - 1, :n_bins]
        prev_u = dp[t - 1, unvoiced]

        vv = prev_v[:, None] - jump - stay
        best_vv = vv.max(axis=0)
        argbest_vv = vv.argmax(axis=0)
        from_u = prev_u - switch
        take_u = from_u > best_vv
        dp[t, :n_bins] = obs_voiced[t] + np.where(take_u, from_u, best_vv)
        bp[t, :n_bins] = np.where(take_u, unvoiced, argbest_vv)

        from_v = prev_v.max() - switch
        from_uu = prev_u - stay
        if from_v > from_uu:
            dp[t, unvoiced] = obs_unvoiced[t] + from_v
            bp[t, unvoiced] = int(prev_v.argmax())
        else:
            dp[t, unvoiced] = obs_unvoiced[t] + from_uu
            bp[t, unvoiced] = unvoiced

    path = np.empty(n_frames, dtype=np.int32)
    path[-1] = int(dp[-1].argmax())
    for t in range(n_frames - 2, -1, -1):
        path[t] = bp[t + 1, path[t + 1]]

    f0 = np.full(n_frames, np.nan)
    for t in range(n_frames):
        state = path[t]
        if state == unvoiced:
            continue
        f = cand_freq[t, state]
        f0[t] = f if np.isfinite(f) else grid[state]
    return np.clip(f0, cfg.fmin_hz, cfg.fmax_hz)


def track_pitch(
    x: FixedWaveform, cfg: PitchConfig = PitchConfig(), sample_rate: int = 16000
) -> np.ndarray:
    """Per-frame f0 in Hz aligned with the STFT framing; NaN = unvoiced."""
    frames = frame_signal(x.samples, cfg.frame_len, cfg.hop)
    candidates = [frame_candidates(f, sample_rate, cfg) for f in frames]
    return viterbi_track(candidates, cfg)
