"""Synthetic mixture construction.

Training examples are four-leaf mixture hierarchies: leaves x1..x4 are
gain-scaled and summed pairwise into y1, y2, which sum into the root z.
Each node carries a text prompt (S1..S4 for leaves, M1/M2 for the pair
mixtures) and a magnitude-spectrogram target on the root's STFT grid.
Two-source mixtures, used for held-out evaluation, reuse the same gain
policy.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .audio_io import read_wav, write_wav
from .dsp import MagnitudeSpectrogram, StftConfig, Waveform, magnitude, stft
from .errors import InvalidInput
from .validation import check_positive

PROMPT_KEYS = ("S1", "S2", "S3", "S4", "M1", "M2")
SINGLE_SOURCE_KEYS = ("S1", "S2", "S3", "S4")

_NORMALIZED_PEAK = 0.99

MANIFEST_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GainPolicy:
    """Per-source amplitude rescaling: gains drawn uniformly from [low, high]."""

    gain_low: float = 0.25
    gain_high: float = 1.0
    normalize_peak: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if not (0 < self.gain_low <= self.gain_high):
            raise InvalidInput(
                f"need 0 < gain_low <= gain_high, got [{self.gain_low}, {self.gain_high}]"
            )

    def with_seed(self, seed: int) -> "GainPolicy":
        return replace(self, rng_seed=int(seed))


@dataclass(frozen=True)
class SourceClip:
    audio: Waveform
    class_label: str
    clip_id: str
    descriptor: str | None = None

    @property
    def prompt_text(self) -> str:
        return self.descriptor if self.descriptor else self.class_label


@dataclass(frozen=True)
class MixtureTree:
    leaves: tuple
    gains: np.ndarray
    mid: tuple
    root: Waveform
    prompts: dict
    targets: dict


@dataclass(frozen=True)
class PairMixture:
    """A two-source evaluation mixture with its exact (gain-scaled) targets."""

    clips: tuple
    gains: np.ndarray
    mixture: Waveform
    targets: tuple  # gain-scaled source Waveforms


def _check_aligned(waves) -> None:
    if len(waves) < 2:
        raise InvalidInput("need at least 2 sources to mix")
    n, rate = len(waves[0]), waves[0].sample_rate
    for w in waves[1:]:
        if len(w) != n:
            raise InvalidInput(f"source length mismatch: {len(w)} != {n}")
        if w.sample_rate != rate:
            raise InvalidInput(f"sample rate mismatch: {w.sample_rate} != {rate}")


def _weighted_sum(waves, gains) -> np.ndarray:
    out = np.zeros(len(waves[0]))
    for g, w in zip(gains, waves):
        out += g * w.samples
    return out


def rescale_and_mix(sources, policy: GainPolicy):
    """Draw per-source gains, sum the scaled sources, optionally normalize.

    Returns (mixture, gains). When the policy normalizes and the raw peak
    exceeds 1, all gains are scaled down uniformly so the peak lands at
    0.99, and the mixture is recomputed from the scaled gains so that
    mixture == sum(g_i * x_i) holds exactly.
    """
    _check_aligned(sources)
    rng = np.random.default_rng(policy.rng_seed)
    gains = rng.uniform(policy.gain_low, policy.gain_high, size=len(sources))
    mix = _weighted_sum(sources, gains)
    peak = np.max(np.abs(mix)) if mix.size else 0.0
    if policy.normalize_peak and peak > 1.0:
        gains = gains * (_NORMALIZED_PEAK / peak)
        mix = _weighted_sum(sources, gains)
    return Waveform(mix, sources[0].sample_rate), [float(g) for g in gains]


def _combine_prompts(a: str, b: str) -> str:
    return f"{a} and {b}"


def build_mixture_tree(
    clips, policy: GainPolicy, stft_cfg: StftConfig
) -> MixtureTree:
    """Build the two-level hierarchy z = (g1·x1 + g2·x2) + (g3·x3 + g4·x4).

    Peak normalization happens at the root only: leaf gains are scaled
    uniformly so every supervision target stays exactly g_i * x_i.
    Targets are magnitude spectrograms of {g_i·x_i, y1, y2} on the root's
    frame grid.
    """
    if len(clips) != 4:
        raise InvalidInput(f"a mixture tree needs exactly 4 leaves, got {len(clips)}")
    waves = [c.audio for c in clips]
    _check_aligned(waves)
    rng = np.random.default_rng(policy.rng_seed)
    gains = rng.uniform(policy.gain_low, policy.gain_high, size=4)

    def assemble(gs):
        scaled = [g * w.samples for g, w in zip(gs, waves)]
        y1 = scaled[0] + scaled[1]
        y2 = scaled[2] + scaled[3]
        return scaled, y1, y2, y1 + y2

    scaled, y1, y2, z = assemble(gains)
    peak = np.max(np.abs(z))
    if policy.normalize_peak and peak > 1.0:
        gains = gains * (_NORMALIZED_PEAK / peak)
        scaled, y1, y2, z = assemble(gains)

    rate = waves[0].sample_rate
    root = Waveform(z, rate)
    mids = (Waveform(y1, rate), Waveform(y2, rate))
    prompts = {
        "S1": clips[0].prompt_text,
        "S2": clips[1].prompt_text,
        "S3": clips[2].prompt_text,
        "S4": clips[3].prompt_text,
        "M1": _combine_prompts(clips[0].prompt_text, clips[1].prompt_text),
        "M2": _combine_prompts(clips[2].prompt_text, clips[3].prompt_text),
    }
    node_waves = {
        "S1": Waveform(scaled[0], rate),
        "S2": Waveform(scaled[1], rate),
        "S3": Waveform(scaled[2], rate),
        "S4": Waveform(scaled[3], rate),
        "M1": mids[0],
        "M2": mids[1],
    }
    targets = {key: magnitude(stft(w, stft_cfg)) for key, w in node_waves.items()}
    return MixtureTree(
        leaves=tuple(clips),
        gains=np.asarray(gains, dtype=np.float64),
        mid=mids,
        root=root,
        prompts=prompts,
        targets=targets,
    )


def target_waveform(tree: MixtureTree, key: str) -> Waveform:
    """Time-domain supervision target for one prompt key."""
    rate = tree.root.sample_rate
    if key in SINGLE_SOURCE_KEYS:
        i = SINGLE_SOURCE_KEYS.index(key)
        return Waveform(tree.gains[i] * tree.leaves[i].audio.samples, rate)
    if key == "M1":
        return tree.mid[0]
    if key == "M2":
        return tree.mid[1]
    raise InvalidInput(f"unknown prompt key {key!r}")


def validate_tree(tree: MixtureTree, atol: float = 1e-9) -> None:
    """Re-check the hierarchy invariants; raises InvalidInput on violation."""
    y1, y2 = tree.mid
    root = tree.root.samples
    if not np.allclose(root, y1.samples + y2.samples, atol=atol, rtol=0):
        raise InvalidInput("root != mid[0] + mid[1]")
    for k, pair in ((0, (0, 1)), (1, (2, 3))):
        expect = (
            tree.gains[pair[0]] * tree.leaves[pair[0]].audio.samples
            + tree.gains[pair[1]] * tree.leaves[pair[1]].audio.samples
        )
        if not np.allclose(tree.mid[k].samples, expect, atol=atol, rtol=0):
            raise InvalidInput(f"mid[{k}] != weighted sum of its leaves")
    if set(tree.prompts) != set(PROMPT_KEYS):
        raise InvalidInput(f"prompts must cover {PROMPT_KEYS}")


def mix_pair(clips, policy: GainPolicy) -> PairMixture:
    """Two-source mixture with exact gain-scaled targets (evaluation sets)."""
    if len(clips) != 2:
        raise InvalidInput(f"mix_pair needs exactly 2 clips, got {len(clips)}")
    waves = [c.audio for c in clips]
    mixture, gains = rescale_and_mix(waves, policy)
    rate = waves[0].sample_rate
    targets = tuple(Waveform(g * w.samples, rate) for g, w in zip(gains, waves))
    return PairMixture(
        clips=tuple(clips),
        gains=np.asarray(gains, dtype=np.float64),
        mixture=mixture,
        targets=targets,
    )


def write_tree(tree: MixtureTree, out_dir, seed: int) -> str:
    """Write a tree's WAVs plus its manifest JSON; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)

    def _emit(name, wave):
        path = os.path.join(out_dir, name)
        write_wav(path, wave)
        return name

    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "root_wav": _emit("root.wav", tree.root),
        "mid_wavs": [_emit(f"mid{k}.wav", tree.mid[k]) for k in range(2)],
        "leaf_wavs": [
            _emit(f"leaf{k}.wav", tree.leaves[k].audio) for k in range(4)
        ],
        "gains": [float(g) for g in tree.gains],
        "prompts": dict(tree.prompts),
        "seed": int(seed),
        "classes": [c.class_label for c in tree.leaves],
        "clip_ids": [c.clip_id for c in tree.leaves],
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def write_pair(pair: PairMixture, out_dir, seed: int) -> str:
    """Write a two-source mixture's WAVs plus manifest; returns manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    write_wav(os.path.join(out_dir, "mix.wav"), pair.mixture)
    for k in range(2):
        write_wav(os.path.join(out_dir, f"source{k}.wav"), pair.targets[k])
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "kind": "pair",
        "mix_wav": "mix.wav",
        "source_wavs": ["source0.wav", "source1.wav"],
        "gains": [float(g) for g in pair.gains],
        "prompts": [c.prompt_text for c in pair.clips],
        "classes": [c.class_label for c in pair.clips],
        "clip_ids": [c.clip_id for c in pair.clips],
        "seed": int(seed),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def read_manifest(path) -> dict:
    with open(path) as fh:
        manifest = json.load(fh)
    if "root_wav" not in manifest and "mix_wav" not in manifest:
        raise InvalidInput(f"{path}: not a mixture manifest")
    return manifest


def manifest_wav_paths(manifest_path, manifest: dict):
    """Absolute paths of every WAV referenced by a manifest."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    names = []
    if "root_wav" in manifest:
        names = [manifest["root_wav"], *manifest["mid_wavs"], *manifest["leaf_wavs"]]
    else:
        names = [manifest["mix_wav"], *manifest["source_wavs"]]
    return [os.path.join(base, n) for n in names]
