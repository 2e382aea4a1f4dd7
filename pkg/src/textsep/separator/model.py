"""Text-conditioned mask prediction network.

A U-shaped encoder/decoder over magnitude spectrograms predicts a
sigmoid mask for the source named by a text condition. Conditioning is
attention-based: at the configured deepest levels, feature maps pass
through self-attention followed by cross-attention onto the token
embeddings of the condition text (on the bottleneck, and on skip
connections before they are concatenated in the decoder).

Text is tokenized with a deterministic lowercase word tokenizer whose
vocabulary comes from the training corpus descriptors; out-of-vocabulary
words fall back to a fixed set of hash buckets. The token-embedding table
is part of the model and trains with everything else.
"""

from __future__ import annotations

import math
import re
import zlib
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from ..dsp import MagnitudeSpectrogram, Mask
from ..errors import InvalidInput
from ..validation import check_nonempty_text

_TOKEN_RE = re.compile(r"[a-z0-9]+")

_PAD_ID = 0


@dataclass(frozen=True)
class SeparatorConfig:
    """Architecture hyperparameters; defaults are CPU-trainable in minutes."""

    levels: int = 4
    base_channels: int = 16
    attention_levels: tuple = (3, 4)
    attention_heads: int = 4
    embed_dim: int = 64
    context_window: int = 512
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "attention_levels", tuple(sorted(self.attention_levels)))
        if self.levels < 2:
            raise InvalidInput("levels must be >= 2")
        expected = tuple(
            range(self.levels - len(self.attention_levels) + 1, self.levels + 1)
        )
        if self.attention_levels != expected:
            raise InvalidInput(
                "attention_levels must be the deepest levels, e.g. "
                f"{expected} for levels={self.levels}; got {self.attention_levels}"
            )
        if self.embed_dim % self.attention_heads != 0:
            raise InvalidInput("attention_heads must divide embed_dim")
        for lv in self.attention_levels:
            if self.channel_at(lv) % self.attention_heads != 0:
                raise InvalidInput(
                    f"attention_heads must divide the {self.channel_at(lv)} channels "
                    f"at level {lv}"
                )
        if self.context_window < 1:
            raise InvalidInput("context_window must be >= 1")

    def channel_at(self, level: int) -> int:
        return self.base_channels * 2 ** (level - 1)

    @property
    def channels(self) -> list:
        return [self.channel_at(lv) for lv in range(1, self.levels + 1)]


def micro_config(rng_seed: int = 0) -> SeparatorConfig:
    """Tiny configuration for finite-difference gradient checks."""
    return SeparatorConfig(
        levels=2,
        base_channels=4,
        attention_levels=(2,),
        attention_heads=2,
        embed_dim=8,
        context_window=64,
        rng_seed=rng_seed,
    )


def full_scale_config(rng_seed: int = 0) -> SeparatorConfig:
    """Large preset (seven levels, eight heads); far too slow for the tests."""
    return SeparatorConfig(
        levels=7,
        base_channels=16,
        attention_levels=(4, 5, 6, 7),
        attention_heads=8,
        embed_dim=256,
        context_window=512,
        rng_seed=rng_seed,
    )


class Tokenizer:
    """Deterministic lowercase word tokenizer with hashed OOV fallback."""

    def __init__(self, words, hash_buckets: int = 64):
        self.words = tuple(sorted(set(words)))
        self.hash_buckets = int(hash_buckets)
        if self.hash_buckets < 1:
            raise InvalidInput("hash_buckets must be >= 1")
        self._ids = {w: i + 1 for i, w in enumerate(self.words)}

    @classmethod
    def from_texts(cls, texts, hash_buckets: int = 64) -> "Tokenizer":
        vocab = set()
        for text in texts:
            vocab.update(_TOKEN_RE.findall(text.lower()))
        return cls(vocab, hash_buckets)

    @property
    def table_size(self) -> int:
        # id 0 is padding.
        return 1 + len(self.words) + self.hash_buckets

    def encode(self, text: str, max_len: int) -> list:
        ids = []
        base = 1 + len(self.words)
        for word in _TOKEN_RE.findall(text.lower()):
            wid = self._ids.get(word)
            if wid is None:
                wid = base + zlib.crc32(word.encode()) % self.hash_buckets
            ids.append(wid)
            if len(ids) == max_len:
                break
        return ids


@dataclass(frozen=True)
class TextEmbedding:
    """Token ids plus their embedded (and position-encoded) vectors."""

    tokens: tuple
    vectors: torch.Tensor


def _sinusoidal_encoding(length: int, dim: int) -> torch.Tensor:
    position = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    half = torch.arange(0, dim, 2, dtype=torch.float64)
    scale = torch.exp(-math.log(10000.0) * half / dim)
    pe = torch.zeros(length, dim, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(position * scale)
    pe[:, 1::2] = torch.cos(position * scale[: pe[:, 1::2].shape[1]])
    return pe


class _Down(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 4, stride=2, padding=1)
        self.norm = nn.GroupNorm(_groups_for(cout), cout)
        self.act = nn.SiLU()

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


class _Up(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.conv = nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1)
        self.norm = nn.GroupNorm(_groups_for(cout), cout)
        self.act = nn.SiLU()

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


class _Fuse(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv = nn.Conv2d(2 * channels, channels, 3, padding=1)
        self.norm = nn.GroupNorm(_groups_for(channels), channels)
        self.act = nn.SiLU()

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


def _groups_for(channels: int) -> int:
    for g in (8, 4, 2, 1):
        if channels % g == 0:
            return g
    return 1


class _ConditionBlock(nn.Module):
    """Self-attention then cross-attention over a feature map's positions."""

    def __init__(self, channels, heads, text_dim):
        super().__init__()
        self.norm_self = nn.LayerNorm(channels)
        self.self_attn = nn.MultiheadAttention(channels, heads, batch_first=True)
        self.norm_cross = nn.LayerNorm(channels)
        self.cross_attn = nn.MultiheadAttention(
            channels, heads, kdim=text_dim, vdim=text_dim, batch_first=True
        )

    def forward(self, feat, text, text_padding):
        b, c, f, t = feat.shape
        tokens = feat.flatten(2).transpose(1, 2)
        normed = self.norm_self(tokens)
        tokens = tokens + self.self_attn(normed, normed, normed, need_weights=False)[0]
        tokens = (
            tokens
            + self.cross_attn(
                self.norm_cross(tokens),
                text,
                text,
                key_padding_mask=text_padding,
                need_weights=False,
            )[0]
        )
        return tokens.transpose(1, 2).reshape(b, c, f, t)


class _MaskUNet(nn.Module):
    def __init__(self, cfg: SeparatorConfig, table_size: int):
        super().__init__()
        self.cfg = cfg
        chans = cfg.channels
        self.embedding = nn.Embedding(table_size, cfg.embed_dim, padding_idx=_PAD_ID)
        self.register_buffer(
            "positional", _sinusoidal_encoding(cfg.context_window, cfg.embed_dim)
        )
        self.downs = nn.ModuleList(
            _Down(chans[k - 1] if k else 1, chans[k]) for k in range(cfg.levels)
        )
        self.condition = nn.ModuleDict(
            {
                str(lv): _ConditionBlock(
                    cfg.channel_at(lv), cfg.attention_heads, cfg.embed_dim
                )
                for lv in cfg.attention_levels
            }
        )
        self.ups = nn.ModuleList(
            _Up(chans[k], chans[k - 1]) for k in range(cfg.levels - 1, 0, -1)
        )
        self.fuses = nn.ModuleList(
            _Fuse(chans[k - 1]) for k in range(cfg.levels - 1, 0, -1)
        )
        self.top = _Up(chans[0], chans[0])
        self.head = nn.Conv2d(chans[0], 1, 3, padding=1)

    def embed_tokens(self, ids: torch.Tensor) -> torch.Tensor:
        return self.embedding(ids) + self.positional[: ids.shape[1]]

    def forward(self, x, text, text_padding):
        levels = self.cfg.levels
        skips = []
        h = x
        for down in self.downs:
            h = down(h)
            skips.append(h)
        if str(levels) in self.condition:
            h = self.condition[str(levels)](h, text, text_padding)
        for idx, (up, fuse) in enumerate(zip(self.ups, self.fuses)):
            level = levels - 1 - idx  # level of the skip being consumed
            h = up(h)
            skip = skips[level - 1]
            if str(level) in self.condition:
                skip = self.condition[str(level)](skip, text, text_padding)
            h = fuse(torch.cat([h, skip], dim=1))
        h = self.top(h)
        return torch.sigmoid(self.head(h))


class SeparatorModel:
    """Config + tokenizer + network, with numpy-facing inference helpers."""

    def __init__(self, config: SeparatorConfig, tokenizer: Tokenizer, net: _MaskUNet):
        self.config = config
        self.tokenizer = tokenizer
        self.net = net

    @classmethod
    def create(cls, config: SeparatorConfig, vocab_texts, dtype=torch.float32) -> "SeparatorModel":
        """Fresh model; initialization is a pure function of config.rng_seed."""
        tokenizer = Tokenizer.from_texts(vocab_texts)
        torch.manual_seed(config.rng_seed)
        net = _MaskUNet(config, tokenizer.table_size).to(dtype)
        return cls(config, tokenizer, net)

    @property
    def dtype(self):
        return self.net.head.weight.dtype

    def parameter_groups(self) -> dict:
        return dict(self.net.named_parameters())

    def config_dict(self) -> dict:
        return asdict(self.config)

    def all_parameters_finite(self) -> bool:
        return all(torch.isfinite(p).all() for p in self.net.parameters())

    # -- text ---------------------------------------------------------------

    def _encode_batch(self, texts):
        """Token ids, embedded vectors, and the padding mask for a text batch."""
        ids = []
        for text in texts:
            check_nonempty_text(text, "condition text")
            encoded = self.tokenizer.encode(text, self.config.context_window)
            if not encoded:
                raise InvalidInput(f"text has no encodable tokens: {text!r}")
            ids.append(encoded)
        width = max(len(i) for i in ids)
        batch = torch.full((len(ids), width), _PAD_ID, dtype=torch.long)
        for row, encoded in enumerate(ids):
            batch[row, : len(encoded)] = torch.tensor(encoded, dtype=torch.long)
        padding = batch == _PAD_ID
        return ids, self.net.embed_tokens(batch), padding

    def encode_text(self, text: str) -> TextEmbedding:
        with torch.no_grad():
            ids, vectors, _ = self._encode_batch([text])
        return TextEmbedding(tokens=tuple(ids[0]), vectors=vectors[0].detach())

    # -- masks ---------------------------------------------------------------

    def _prepare_input(self, mag: torch.Tensor):
        """Pad (freq, time) up to multiples of 2**levels and scale to [0, 1]."""
        if mag.ndim != 2 or mag.shape[0] < 1 or mag.shape[1] < 1:
            raise InvalidInput(f"magnitude input must be 2-D and non-empty, got {tuple(mag.shape)}")
        block = 2**self.config.levels
        f, t = mag.shape
        fp = -(-f // block) * block
        tp = -(-t // block) * block
        padded = torch.zeros(fp, tp, dtype=mag.dtype)
        padded[:f, :t] = mag
        peak = padded.max()
        scaled = padded / peak if peak > 0 else padded
        return scaled, (f, t)

    def masks_for_texts(self, mag: torch.Tensor, texts) -> torch.Tensor:
        """Differentiable batch of masks, one per condition text; [B, F, T]."""
        scaled, (f, t) = self._prepare_input(mag)
        _, vectors, padding = self._encode_batch(texts)
        batch = scaled.unsqueeze(0).unsqueeze(0).expand(len(texts), 1, *scaled.shape)
        out = self.net(batch.contiguous(), vectors.to(self.dtype), padding)
        return out[:, 0, :f, :t]


def encode_text(text: str, model: SeparatorModel) -> TextEmbedding:
    """Deterministic token ids + embedding vectors for a condition text."""
    return model.encode_text(text)


def predict_mask(mix_mag: MagnitudeSpectrogram, cond, model: SeparatorModel) -> Mask:
    """Mask in [0, 1] for the source described by `cond` (TextEmbedding or str)."""
    if isinstance(cond, TextEmbedding):
        if not cond.tokens:
            raise InvalidInput("condition has no tokens")
        with torch.no_grad():
            vectors = cond.vectors.unsqueeze(0).to(model.dtype)
            padding = torch.zeros(1, vectors.shape[1], dtype=torch.bool)
            mag = torch.from_numpy(np.ascontiguousarray(mix_mag.bins)).to(model.dtype)
            scaled, (f, t) = model._prepare_input(mag)
            batch = scaled.unsqueeze(0).unsqueeze(0)
            out = model.net(batch, vectors, padding)
        bins = out[0, 0, :f, :t].double().numpy()
    else:
        with torch.no_grad():
            mag = torch.from_numpy(np.ascontiguousarray(mix_mag.bins)).to(model.dtype)
            out = model.masks_for_texts(mag, [str(cond)])
        bins = out[0].double().numpy()
    return Mask(np.clip(bins, 0.0, 1.0))
