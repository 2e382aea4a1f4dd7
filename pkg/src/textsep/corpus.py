"""Deterministic synthetic source corpus.

Each class is a parametric generator (tone, harmonic stack, chirp, noise
band, or amplitude-modulated tone) plus two text renderings: a short
class phrase and an enriched descriptor whose numbers come straight from
the synthesis parameters. The default eight classes span the band up to
~7.8 kHz with two deliberately overlapping pairs, so separation is easy
for most pairings but not degenerate.
"""

from __future__ import annotations

import hashlib
import json
import os
import zlib
from dataclasses import asdict, dataclass

import numpy as np

from .audio_io import read_wav, write_wav
from .dsp import Waveform
from .errors import InvalidInput
from .mixing import SourceClip

INDEX_SCHEMA_VERSION = 1

GENERATORS = ("pure_tone", "harmonic_tone", "chirp", "noise_band", "am_burst")

TEXT_MODES = ("class-only", "enriched")


@dataclass(frozen=True)
class ToyClassSpec:
    class_id: str
    generator: str
    freq_low: float
    freq_high: float
    harmonic_count: int = 1
    am_rate_hz: float = 0.0
    sweep: str = "up"  # chirp direction
    attack_ms: float = 10.0
    decay_ms: float = 40.0
    class_phrase: str = ""
    descriptor_template: str = ""

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise InvalidInput(f"unknown generator {self.generator!r}")
        if not (0 < self.freq_low <= self.freq_high):
            raise InvalidInput(
                f"{self.class_id}: need 0 < freq_low <= freq_high, "
                f"got [{self.freq_low}, {self.freq_high}]"
            )

    def band(self) -> tuple[float, float]:
        """Approximate spectral extent of clips from this class, in Hz."""
        low, high = self.freq_low, self.freq_high
        if self.generator == "harmonic_tone":
            high = self.freq_high * self.harmonic_count
        elif self.generator == "am_burst":
            low = max(1.0, low - 2 * self.am_rate_hz)
            high = high + 2 * self.am_rate_hz
        return low, high

    def template_params(self) -> dict:
        return {
            "f_lo": self.freq_low,
            "f_hi": self.freq_high,
            "harmonics": self.harmonic_count,
            "am_rate": self.am_rate_hz,
            "attack": self.attack_ms,
            "decay": self.decay_ms,
        }


def knowledge_text_for_class(spec: ToyClassSpec, mode: str = "enriched") -> str:
    """Render a class's conditioning text in the requested mode."""
    if mode not in TEXT_MODES:
        raise InvalidInput(f"mode must be one of {TEXT_MODES}")
    if mode == "class-only":
        return spec.class_phrase
    return spec.descriptor_template.format(**spec.template_params())


def default_classes() -> list[ToyClassSpec]:
    """The eight stock classes (two overlapping band pairs by design)."""
    return [
        ToyClassSpec(
            class_id="tone_low",
            generator="pure_tone",
            freq_low=200,
            freq_high=400,
            class_phrase="a low steady tone",
            descriptor_template=(
                "a steady pure tone between {f_lo:.0f} and {f_hi:.0f} Hz, low in "
                "pitch, played at moderate loudness, with a soft attack of "
                "{attack:.0f} ms and a release of {decay:.0f} ms, a flat sustained "
                "envelope, and a clean narrow spectrum free of harmonics"
            ),
        ),
        ToyClassSpec(
            class_id="tone_high",
            generator="pure_tone",
            freq_low=2000,
            freq_high=3000,
            class_phrase="a high steady tone",
            descriptor_template=(
                "a steady pure tone between {f_lo:.0f} and {f_hi:.0f} Hz, high and "
                "piercing in pitch, moderately loud, with a quick attack of "
                "{attack:.0f} ms and a release of {decay:.0f} ms, a flat sustained "
                "envelope, and a clean narrow spectrum free of harmonics"
            ),
        ),
        ToyClassSpec(
            class_id="harmonic_mid",
            generator="harmonic_tone",
            freq_low=350,
            freq_high=550,
            harmonic_count=3,
            class_phrase="a warm harmonic tone",
            descriptor_template=(
                "a warm tone with a fundamental between {f_lo:.0f} and {f_hi:.0f} Hz "
                "and {harmonics} stacked harmonics, mid in pitch, moderately loud, "
                "with a gentle attack of {attack:.0f} ms, a rich spectrum of "
                "overtones, and a flat sustained envelope"
            ),
        ),
        ToyClassSpec(
            class_id="chirp_up",
            generator="chirp",
            freq_low=500,
            freq_high=1500,
            sweep="up",
            class_phrase="a rising chirp",
            descriptor_template=(
                "a tone sweeping upward from {f_lo:.0f} to {f_hi:.0f} Hz, rising in "
                "pitch across the clip, moderately loud, with a soft attack of "
                "{attack:.0f} ms, a narrow moving spectral peak, and a smooth "
                "gliding envelope"
            ),
        ),
        ToyClassSpec(
            class_id="chirp_down",
            generator="chirp",
            freq_low=4200,
            freq_high=5500,
            sweep="down",
            class_phrase="a falling chirp",
            descriptor_template=(
                "a tone sweeping downward from {f_hi:.0f} to {f_lo:.0f} Hz, falling "
                "in pitch across the clip, moderately loud, with a soft attack of "
                "{attack:.0f} ms, a narrow moving spectral peak, and a smooth "
                "gliding envelope"
            ),
        ),
        ToyClassSpec(
            class_id="noise_low",
            generator="noise_band",
            freq_low=100,
            freq_high=500,
            class_phrase="a low rumbling noise",
            descriptor_template=(
                "a rumbling band of noise between {f_lo:.0f} and {f_hi:.0f} Hz, low "
                "in pitch, moderately loud, rough in timbre, with a broadband "
                "spectrum inside its band, a soft attack of {attack:.0f} ms, and a "
                "grainy steady envelope"
            ),
        ),
        ToyClassSpec(
            class_id="noise_high",
            generator="noise_band",
            freq_low=6500,
            freq_high=7800,
            class_phrase="a high hissing noise",
            descriptor_template=(
                "a hissing band of noise between {f_lo:.0f} and {f_hi:.0f} Hz, high "
                "in pitch, moderately loud, airy in timbre, with a broadband "
                "spectrum inside its band, a soft attack of {attack:.0f} ms, and a "
                "grainy steady envelope"
            ),
        ),
        ToyClassSpec(
            class_id="am_high",
            generator="am_burst",
            freq_low=3300,
            freq_high=3900,
            am_rate_hz=8.0,
            class_phrase="a pulsing high tone",
            descriptor_template=(
                "a tone between {f_lo:.0f} and {f_hi:.0f} Hz pulsing {am_rate:.0f} "
                "times per second, high in pitch, moderately loud, with a throbbing "
                "periodic envelope, a soft attack of {attack:.0f} ms, and a narrow "
                "spectrum with faint sidebands"
            ),
        ),
    ]


@dataclass(frozen=True)
class SplitSpec:
    seen: frozenset
    unseen: frozenset
    rng_seed: int


def split_seen_unseen(class_ids, seed: int) -> SplitSpec:
    """Seeded half/half class partition (seen gets the extra class if odd)."""
    ids = sorted(class_ids)
    if len(ids) < 2:
        raise InvalidInput("need at least 2 classes to split")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    cut = (len(order) + 1) // 2
    return SplitSpec(
        seen=frozenset(order[:cut]), unseen=frozenset(order[cut:]), rng_seed=int(seed)
    )


def _envelope(n: int, sample_rate: int, attack_ms: float, decay_ms: float) -> np.ndarray:
    env = np.ones(n)
    a = min(n, int(round(attack_ms * sample_rate / 1000.0)))
    d = min(n, int(round(decay_ms * sample_rate / 1000.0)))
    if a > 0:
        env[:a] = np.linspace(0.0, 1.0, a, endpoint=False)
    if d > 0:
        env[n - d :] = np.linspace(1.0, 0.0, d)
    return env


def generate_clip(
    spec: ToyClassSpec,
    duration: float,
    seed: int,
    sample_rate: int = 16000,
    clip_id: str | None = None,
    text_mode: str = "enriched",
) -> SourceClip:
    """Synthesize one deterministic clip (peak <= 0.9) for a class."""
    if duration <= 0:
        raise InvalidInput(f"duration must be > 0, got {duration}")
    nyquist = sample_rate / 2.0
    if spec.band()[1] >= nyquist:
        raise InvalidInput(
            f"{spec.class_id}: spectral extent {spec.band()[1]:.0f} Hz exceeds "
            f"Nyquist {nyquist:.0f} Hz"
        )
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate

    if spec.generator == "pure_tone":
        f = rng.uniform(spec.freq_low, spec.freq_high)
        x = np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    elif spec.generator == "harmonic_tone":
        f0 = rng.uniform(spec.freq_low, spec.freq_high)
        x = np.zeros(n)
        for h in range(1, spec.harmonic_count + 1):
            x += np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi)) / h
    elif spec.generator == "chirp":
        f0, f1 = spec.freq_low, spec.freq_high
        if spec.sweep == "down":
            f0, f1 = f1, f0
        total = duration
        phase = 2 * np.pi * (f0 * t + (f1 - f0) * t * t / (2 * total))
        x = np.sin(phase + rng.uniform(0, 2 * np.pi))
    elif spec.generator == "noise_band":
        white = rng.standard_normal(n)
        spectrum = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
        spectrum[(freqs < spec.freq_low) | (freqs > spec.freq_high)] = 0.0
        x = np.fft.irfft(spectrum, n=n)
    else:  # am_burst
        f = rng.uniform(spec.freq_low, spec.freq_high)
        carrier = np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
        depth = 0.5 * (1.0 - np.cos(2 * np.pi * spec.am_rate_hz * t))
        x = carrier * (0.1 + 0.9 * depth)

    x *= _envelope(n, sample_rate, spec.attack_ms, spec.decay_ms)
    peak = np.max(np.abs(x))
    if peak > 0:
        x *= rng.uniform(0.5, 0.85) / peak
    return SourceClip(
        audio=Waveform(x, sample_rate),
        class_label=spec.class_id,
        clip_id=clip_id or f"{spec.class_id}_{seed & 0xFFFFFFFF:08x}",
        descriptor=knowledge_text_for_class(spec, text_mode),
    )


def _clip_seed(corpus_seed: int, class_id: str, k: int) -> int:
    ss = np.random.SeedSequence([corpus_seed, zlib.crc32(class_id.encode()), k])
    return int(ss.generate_state(1)[0])


def _canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


class Corpus:
    """Handle over an on-disk corpus: index metadata plus lazy clip audio."""

    def __init__(self, root_dir: str, index: dict):
        self.root_dir = root_dir
        self.index = index
        self.sample_rate = index["sample_rate"]
        self.clip_seconds = index["clip_seconds"]
        self.specs = {
            c["class_id"]: ToyClassSpec(**c) for c in index["classes"]
        }
        self._records = {}
        for rec in index["clips"]:
            self._records.setdefault(rec["class_id"], []).append(rec)
        self._audio_cache = {}

    @property
    def class_ids(self) -> list[str]:
        return sorted(self.specs)

    @property
    def index_hash(self) -> str:
        return hashlib.sha256(_canonical_json(self.index).encode()).hexdigest()

    def records_for_class(self, class_id: str) -> list[dict]:
        return list(self._records.get(class_id, []))

    def _load_audio(self, rec: dict) -> Waveform:
        clip_id = rec["clip_id"]
        if clip_id not in self._audio_cache:
            path = os.path.join(self.root_dir, rec["path"])
            self._audio_cache[clip_id] = read_wav(path, self.sample_rate)
        return self._audio_cache[clip_id]

    def clip(self, rec: dict, text_mode: str = "enriched") -> SourceClip:
        spec = self.specs[rec["class_id"]]
        return SourceClip(
            audio=self._load_audio(rec),
            class_label=rec["class_id"],
            clip_id=rec["clip_id"],
            descriptor=knowledge_text_for_class(spec, text_mode),
        )

    def sample_clips(
        self,
        rng: np.random.Generator,
        count: int,
        classes=None,
        text_mode: str = "enriched",
    ) -> list[SourceClip]:
        """Sample `count` clips from distinct classes (without replacement)."""
        pool = sorted(classes) if classes is not None else self.class_ids
        if count > len(pool):
            raise InvalidInput(
                f"cannot sample {count} distinct classes from {len(pool)} available"
            )
        chosen = [pool[i] for i in rng.choice(len(pool), size=count, replace=False)]
        clips = []
        for cid in chosen:
            recs = self._records[cid]
            clips.append(self.clip(recs[rng.integers(len(recs))], text_mode))
        return clips

    def descriptor_texts(self) -> list[str]:
        """Every conditioning text the corpus can produce (both modes)."""
        texts = []
        for cid in self.class_ids:
            spec = self.specs[cid]
            texts.append(knowledge_text_for_class(spec, "class-only"))
            texts.append(knowledge_text_for_class(spec, "enriched"))
        return texts

    @classmethod
    def load(cls, root_dir: str) -> "Corpus":
        index_path = os.path.join(root_dir, "index.json")
        with open(index_path) as fh:
            return cls(root_dir, json.load(fh))


def generate_corpus(
    classes,
    clips_per_class: int,
    seed: int,
    out_dir: str,
    duration: float = 1.0,
    sample_rate: int = 16000,
) -> Corpus:
    """Write WAVs plus index.json for a corpus; returns its handle.

    Mixture trees need four distinct leaf classes, so fewer than four
    classes is rejected.
    """
    if len(classes) < 4:
        raise InvalidInput(f"a corpus needs >= 4 classes, got {len(classes)}")
    if clips_per_class < 0:
        raise InvalidInput("clips_per_class must be >= 0")
    ids = [c.class_id for c in classes]
    if len(set(ids)) != len(ids):
        raise InvalidInput("class_ids must be unique")

    os.makedirs(out_dir, exist_ok=True)
    clip_rows = []
    for spec in classes:
        class_dir = os.path.join(out_dir, spec.class_id)
        os.makedirs(class_dir, exist_ok=True)
        for k in range(clips_per_class):
            clip_seed = _clip_seed(seed, spec.class_id, k)
            clip_id = f"{spec.class_id}_{k:03d}"
            clip = generate_clip(
                spec, duration, clip_seed, sample_rate, clip_id=clip_id
            )
            rel = os.path.join(spec.class_id, f"{clip_id}.wav")
            write_wav(os.path.join(out_dir, rel), clip.audio)
            clip_rows.append(
                {
                    "clip_id": clip_id,
                    "class_id": spec.class_id,
                    "path": rel,
                    "seed": clip_seed,
                }
            )

    index = {
        "schema_version": INDEX_SCHEMA_VERSION,
        "sample_rate": sample_rate,
        "clip_seconds": duration,
        "seed": int(seed),
        "clips_per_class": int(clips_per_class),
        "classes": [asdict(c) for c in classes],
        "clips": clip_rows,
    }
    with open(os.path.join(out_dir, "index.json"), "w") as fh:
        fh.write(_canonical_json(index))
    return Corpus(out_dir, index)
