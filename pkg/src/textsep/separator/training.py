"""Multi-level mix-and-separate training.

Every training example is a four-leaf mixture tree. The loss runs the
model once per prompt on the root mixture's magnitude and takes the mean
L1 distance between each masked mixture magnitude and its target
magnitude, over either all six prompts (multi-level) or the four
single-source prompts only (the ablation baseline).

Epoch data is resampled from the corpus with an RNG derived from
(rng_seed, epoch), so a run resumed from a checkpoint at epoch k follows
the exact trajectory of an uninterrupted run.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from ..dsp import StftConfig, stft
from ..errors import InvalidInput, TrainingDiverged
from ..mixing import (
    PROMPT_KEYS,
    SINGLE_SOURCE_KEYS,
    GainPolicy,
    build_mixture_tree,
)
from .model import SeparatorModel

PROMPT_SETS = {"multi": PROMPT_KEYS, "single": SINGLE_SOURCE_KEYS}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    lr: float = 1e-3
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_trees_per_step: int = 1
    rng_seed: int = 0
    trees_per_epoch: int = 40
    prompt_set: str = "multi"
    grad_clip: float = 5.0

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidInput("lr must be > 0")
        if not 0 < self.lr_decay_factor <= 1:
            raise InvalidInput("lr_decay_factor must be in (0, 1]")
        if self.lr_decay_every < 1 or self.epochs < 0:
            raise InvalidInput("lr_decay_every must be >= 1 and epochs >= 0")
        if self.prompt_set not in PROMPT_SETS:
            raise InvalidInput(f"prompt_set must be one of {sorted(PROMPT_SETS)}")
        if self.batch_trees_per_step < 1 or self.trees_per_epoch < 1:
            raise InvalidInput("batch_trees_per_step and trees_per_epoch must be >= 1")

    def lr_at_epoch(self, epoch: int) -> float:
        return self.lr * self.lr_decay_factor ** (epoch // self.lr_decay_every)


def full_schedule() -> TrainConfig:
    """The large-scale schedule: 80 epochs, lr 1e-3 decaying 10x every 20."""
    return TrainConfig(epochs=80, lr=1e-3, lr_decay_factor=0.1, lr_decay_every=20)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    lr: float
    mean_loss: float
    wall_seconds: float


@dataclass
class TrainResult:
    model: SeparatorModel
    history: list = field(default_factory=list)
    optimizer_state: dict | None = None


def multilevel_loss(tree, model: SeparatorModel, prompt_keys=PROMPT_KEYS) -> torch.Tensor:
    """Mean L1 between masked mixture magnitudes and the prompt targets.

    Differentiable; callers that only need the number take float() of it.
    """
    first = tree.targets[prompt_keys[0]]
    cfg = first.config
    for key in prompt_keys:
        target = tree.targets[key]
        if target.config != cfg or target.bins.shape != first.bins.shape:
            raise InvalidInput("tree targets must share one STFT grid")
    root_spec = stft(tree.root, cfg)
    if root_spec.bins.shape != first.bins.shape:
        raise InvalidInput(
            "tree targets were computed on a different grid than the root mixture"
        )
    mix_mag = torch.from_numpy(np.abs(root_spec.bins)).to(model.dtype)
    texts = [tree.prompts[key] for key in prompt_keys]
    targets = torch.from_numpy(
        np.stack([tree.targets[key].bins for key in prompt_keys])
    ).to(model.dtype)
    masks = model.masks_for_texts(mix_mag, texts)
    return (masks * mix_mag - targets).abs().mean()


def sample_tree(corpus, rng: np.random.Generator, stft_cfg: StftConfig,
                gain_policy: GainPolicy, classes=None, text_mode: str = "enriched"):
    """One training tree: 4 distinct-class clips, fresh gains from `rng`."""
    clips = corpus.sample_clips(rng, 4, classes=classes, text_mode=text_mode)
    policy = gain_policy.with_seed(int(rng.integers(2**31)))
    return build_mixture_tree(clips, policy, stft_cfg)


def _snapshot(model: SeparatorModel, optimizer, epoch: int) -> dict:
    return {
        "params": {
            k: v.detach().clone() for k, v in model.net.state_dict().items()
        },
        "optimizer": copy.deepcopy(optimizer.state_dict()),
        "epoch": epoch,
    }


def train(
    model: SeparatorModel,
    corpus,
    tc: TrainConfig,
    stft_cfg: StftConfig | None = None,
    gain_policy: GainPolicy | None = None,
    classes=None,
    text_mode: str = "enriched",
    start_epoch: int = 0,
    optimizer_state: dict | None = None,
    on_epoch_end=None,
) -> TrainResult:
    """Adam training loop over freshly sampled mixture trees.

    `classes` restricts sampling (e.g. to the seen half of a split);
    `on_epoch_end(model, optimizer_state, stats)` runs after each epoch,
    which is where checkpoint writers hook in. Raises TrainingDiverged,
    carrying the last finite state, if the loss goes non-finite.
    """
    stft_cfg = stft_cfg or StftConfig()
    gain_policy = gain_policy or GainPolicy()
    prompt_keys = PROMPT_SETS[tc.prompt_set]

    optimizer = torch.optim.Adam(
        model.net.parameters(),
        lr=tc.lr,
        betas=(tc.adam_beta1, tc.adam_beta2),
        eps=tc.adam_eps,
    )
    if optimizer_state is not None:
        optimizer.load_state_dict(copy.deepcopy(optimizer_state))

    history: list = []
    last_good = _snapshot(model, optimizer, start_epoch - 1)
    for epoch in range(start_epoch, tc.epochs):
        t0 = time.perf_counter()
        lr = tc.lr_at_epoch(epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        rng = np.random.default_rng([tc.rng_seed, epoch])
        losses = []
        remaining = tc.trees_per_epoch
        while remaining > 0:
            batch = min(tc.batch_trees_per_step, remaining)
            remaining -= batch
            trees = [
                sample_tree(corpus, rng, stft_cfg, gain_policy, classes, text_mode)
                for _ in range(batch)
            ]
            loss = torch.stack(
                [multilevel_loss(t, model, prompt_keys) for t in trees]
            ).mean()
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}", epoch=epoch, last_good=last_good
                )
            optimizer.zero_grad()
            loss.backward()
            if tc.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.net.parameters(), tc.grad_clip)
            optimizer.step()
            if not model.all_parameters_finite():
                raise TrainingDiverged(
                    f"non-finite parameters at epoch {epoch}",
                    epoch=epoch,
                    last_good=last_good,
                )
            losses.append(loss.detach().item())
        stats = EpochStats(
            epoch=epoch,
            lr=lr,
            mean_loss=float(np.mean(losses)),
            wall_seconds=time.perf_counter() - t0,
        )
        history.append(stats)
        last_good = _snapshot(model, optimizer, epoch)
        if on_epoch_end is not None:
            on_epoch_end(model, optimizer.state_dict(), stats)
    return TrainResult(
        model=model, history=history, optimizer_state=optimizer.state_dict()
    )
