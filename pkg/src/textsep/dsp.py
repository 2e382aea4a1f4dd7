"""Time-frequency analysis and mask arithmetic.

The analysis/synthesis pair here is a centered STFT: the input is
reflect-padded by half a window on both ends, framed with a hop, windowed,
and transformed with a real FFT. Synthesis applies the same window again
and divides the overlap-add output by the summed squared windows
(least-squares inversion), which makes the round trip exact up to floating
point for any hop that keeps the squared-window sum bounded away from zero.
All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .validation import (
    check_finite_2d,
    check_same_shape,
    check_sample_rate,
    check_samples,
)

# Below this, a squared-window overlap sum is treated as "no coverage".
_COVERAGE_TINY = 1e-10

WINDOW_KINDS = ("hann", "rectangular")


@dataclass(frozen=True)
class Waveform:
    """A mono audio signal: finite float64 samples at a fixed rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        object.__setattr__(self, "samples", check_samples(self.samples))
        object.__setattr__(self, "sample_rate", check_sample_rate(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters: 0 < hop_length <= window_length <= fft_length."""

    window_length: int = 1022
    hop_length: int = 256
    window_kind: str = "hann"
    fft_length: int = 0  # 0 means "same as window_length"

    def __post_init__(self):
        if self.fft_length == 0:
            object.__setattr__(self, "fft_length", self.window_length)
        if not (0 < self.hop_length <= self.window_length <= self.fft_length):
            raise InvalidInput(
                "need 0 < hop_length <= window_length <= fft_length, got "
                f"hop={self.hop_length} window={self.window_length} fft={self.fft_length}"
            )
        if self.window_kind not in WINDOW_KINDS:
            raise InvalidInput(f"window_kind must be one of {WINDOW_KINDS}")

    @property
    def frequency_bins(self) -> int:
        return self.fft_length // 2 + 1


@dataclass(frozen=True)
class ComplexSpectrogram:
    """Complex STFT bins, shape (frequency, frames), plus analysis metadata."""

    bins: np.ndarray
    config: StftConfig
    sample_rate: int
    original_length: int

    def __post_init__(self):
        bins = check_finite_2d(self.bins, "bins", dtype=np.complex128)
        if bins.shape[0] != self.config.frequency_bins:
            raise InvalidInput(
                f"expected {self.config.frequency_bins} frequency bins, got {bins.shape[0]}"
            )
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "sample_rate", check_sample_rate(self.sample_rate))
        if self.original_length <= 0:
            raise InvalidInput("original_length must be positive")

    @property
    def n_frames(self) -> int:
        return self.bins.shape[1]


@dataclass(frozen=True)
class MagnitudeSpectrogram:
    """Non-negative magnitude bins with the same metadata as the complex grid."""

    bins: np.ndarray
    config: StftConfig
    sample_rate: int
    original_length: int

    def __post_init__(self):
        bins = check_finite_2d(self.bins, "bins", dtype=np.float64)
        if np.any(bins < 0):
            raise InvalidInput("magnitude bins must be non-negative")
        object.__setattr__(self, "bins", bins)


@dataclass(frozen=True)
class Mask:
    """Per-bin gains in [0, 1]; must match the spectrogram it applies to."""

    bins: np.ndarray

    def __post_init__(self):
        bins = check_finite_2d(self.bins, "bins", dtype=np.float64)
        if np.any(bins < 0) or np.any(bins > 1):
            raise InvalidInput("mask bins must lie in [0, 1]")
        object.__setattr__(self, "bins", bins)


def _analysis_window(cfg: StftConfig) -> np.ndarray:
    n = cfg.window_length
    if cfg.window_kind == "hann":
        # Periodic Hann; w[0] == 0, peak at n/2.
        return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))
    return np.ones(n)


def _reflect_extend(x: np.ndarray, pad: int) -> np.ndarray:
    """Reflect x (without repeating edges) by `pad` samples on both sides.

    Works for any pad, including pad >= len(x); a length-1 signal degrades
    to constant extension.
    """
    n = x.shape[0]
    if pad == 0:
        return x
    if n == 1:
        return np.full(n + 2 * pad, x[0])
    idx = np.arange(-pad, n + pad)
    period = 2 * n - 2
    m = np.mod(idx, period)
    m = np.where(m >= n, period - m, m)
    return x[m]


def stft(x: Waveform, cfg: StftConfig) -> ComplexSpectrogram:
    """Centered short-time Fourier transform of `x`."""
    if not isinstance(x, Waveform):
        raise InvalidInput("stft expects a Waveform")
    pad = cfg.window_length // 2
    ext = _reflect_extend(x.samples, pad)
    # Zero-pad the tail so the frame grid always covers the last sample,
    # whatever the hop; extra frames see only padding.
    n_frames = 1 + max(0, -(-(ext.shape[0] - cfg.window_length) // cfg.hop_length))
    needed = (n_frames - 1) * cfg.hop_length + cfg.window_length
    if needed > ext.shape[0]:
        ext = np.concatenate([ext, np.zeros(needed - ext.shape[0])])
    frames = np.lib.stride_tricks.sliding_window_view(ext, cfg.window_length)[
        :: cfg.hop_length
    ][:n_frames]
    window = _analysis_window(cfg)
    spec = np.fft.rfft(frames * window, n=cfg.fft_length, axis=1)
    return ComplexSpectrogram(
        bins=spec.T.copy(),
        config=cfg,
        sample_rate=x.sample_rate,
        original_length=len(x),
    )


def istft(spec: ComplexSpectrogram) -> Waveform:
    """Least-squares inverse STFT; returns exactly `original_length` samples."""
    cfg = spec.config
    window = _analysis_window(cfg)
    frames = np.fft.irfft(spec.bins.T, n=cfg.fft_length, axis=1)[:, : cfg.window_length]
    n_frames = frames.shape[0]
    total = (n_frames - 1) * cfg.hop_length + cfg.window_length
    acc = np.zeros(total)
    wss = np.zeros(total)
    wsq = window * window
    for t in range(n_frames):
        start = t * cfg.hop_length
        acc[start : start + cfg.window_length] += frames[t] * window
        wss[start : start + cfg.window_length] += wsq
    pad = cfg.window_length // 2
    region = slice(pad, pad + spec.original_length)
    if region.stop > total:
        raise InvalidInput(
            f"spectrogram with {n_frames} frames cannot cover original_length="
            f"{spec.original_length}"
        )
    cov = wss[region]
    if np.any(cov < _COVERAGE_TINY):
        raise InvalidInput(
            "window/hop combination leaves gaps in coverage; "
            "use hop_length < window_length (strictly, for tapered windows)"
        )
    return Waveform(acc[region] / cov, spec.sample_rate)


def magnitude_phase(spec: ComplexSpectrogram):
    """Split into magnitude and phase; zero bins get phase 0 by convention."""
    mag = np.abs(spec.bins)
    phase = np.where(mag == 0.0, 0.0, np.angle(spec.bins))
    magnitude = MagnitudeSpectrogram(
        bins=mag,
        config=spec.config,
        sample_rate=spec.sample_rate,
        original_length=spec.original_length,
    )
    return magnitude, phase


def magnitude(spec: ComplexSpectrogram) -> MagnitudeSpectrogram:
    """Magnitude half of :func:`magnitude_phase`."""
    return magnitude_phase(spec)[0]


def apply_mask_and_reconstruct(mix: ComplexSpectrogram, mask: Mask) -> Waveform:
    """Filter `mix` with `mask` and resynthesize using the mixture's phase."""
    check_same_shape(mask.bins, mix.bins, "mask", "mix")
    mag, phase = magnitude_phase(mix)
    filtered = (mask.bins * mag.bins) * np.exp(1j * phase)
    return istft(
        ComplexSpectrogram(
            bins=filtered,
            config=mix.config,
            sample_rate=mix.sample_rate,
            original_length=mix.original_length,
        )
    )


def ideal_ratio_mask(sources, eps: float = 1e-8):
    """Oracle soft masks: |S_i| / (sum_j |S_j| + eps), one per source."""
    if len(sources) < 2:
        raise InvalidInput("ideal_ratio_mask needs at least 2 sources")
    mags = [s.bins for s in sources]
    first = mags[0]
    for m in mags[1:]:
        check_same_shape(m, first, "source", "source")
    denom = np.sum(mags, axis=0) + eps
    return [Mask(np.clip(m / denom, 0.0, 1.0)) for m in mags]


def spectrogram_energy(spec) -> float:
    """Window-normalized signal energy estimated from a spectrogram.

    Applies the one-sided spectrum correction (doubling all bins except DC
    and, for even FFT lengths, Nyquist) and normalizes by the analysis
    window energy per hop, so for long steady-state signals the result
    approximates sum(x**2).
    """
    bins = np.abs(spec.bins) ** 2
    cfg = spec.config
    weights = np.full(bins.shape[0], 2.0)
    weights[0] = 1.0
    if cfg.fft_length % 2 == 0:
        weights[-1] = 1.0
    frame_energy = (weights[:, None] * bins).sum(axis=0) / cfg.fft_length
    window = _analysis_window(cfg)
    return float(frame_energy.sum() * cfg.hop_length / np.sum(window * window))


def snr_db(reference: np.ndarray, estimate: np.ndarray) -> float:
    """Plain SNR in dB of `estimate` against `reference` (same length)."""
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    check_same_shape(reference, estimate, "reference", "estimate")
    noise = np.sum((reference - estimate) ** 2)
    signal = np.sum(reference**2)
    if noise == 0.0:
        return np.inf
    if signal == 0.0:
        return -np.inf
    return 10.0 * np.log10(signal / noise)
