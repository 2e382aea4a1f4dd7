"""Mono WAV reading and writing (16-bit PCM and 32-bit float).

Sample-rate conversion is out of scope: callers that require a specific
rate pass `expected_sample_rate` and get an error on mismatch.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.io import wavfile

from .dsp import Waveform
from .errors import InvalidInput

_PCM16_SCALE = 32768.0


def read_wav(path, expected_sample_rate: int | None = None) -> Waveform:
    """Read a mono WAV file into a Waveform with samples in [-1, 1]."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such WAV file: {path}")
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise InvalidInput(f"{path}: only mono WAV is supported, got shape {data.shape}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / _PCM16_SCALE
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise InvalidInput(f"{path}: unsupported sample format {data.dtype}")
    if expected_sample_rate is not None and rate != expected_sample_rate:
        raise InvalidInput(
            f"{path}: sample rate {rate} != expected {expected_sample_rate} "
            "(resampling is not supported)"
        )
    return Waveform(samples, rate)


def write_wav(path, waveform: Waveform, sample_format: str = "float32") -> None:
    """Write a Waveform as mono WAV; `sample_format` is 'float32' or 'pcm16'."""
    if sample_format == "float32":
        data = waveform.samples.astype(np.float32)
    elif sample_format == "pcm16":
        clipped = np.clip(waveform.samples, -1.0, 1.0 - 1.0 / _PCM16_SCALE)
        data = np.round(clipped * _PCM16_SCALE).astype(np.int16)
    else:
        raise InvalidInput(f"unsupported sample_format {sample_format!r}")
    wavfile.write(path, waveform.sample_rate, data)
