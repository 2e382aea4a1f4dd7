"""Running a trained separator on mixtures."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

from ..dsp import StftConfig, Waveform, apply_mask_and_reconstruct, magnitude, stft
from ..errors import InvalidInput
from .model import SeparatorModel, predict_mask


def _prompt_text(prompt) -> str:
    full_text = getattr(prompt, "full_text", None)
    return full_text if full_text is not None else str(prompt)


def separate(
    mix: Waveform,
    prompts,
    model: SeparatorModel,
    stft_cfg: StftConfig | None = None,
    parallelism: int = 1,
) -> list:
    """One separated waveform per prompt, each the mixture's exact length.

    Prompts may be knowledge cards or plain strings. Mask prediction is
    read-only on the model, so prompts fan out across threads up to
    `parallelism`; outputs keep prompt order.
    """
    if not prompts:
        raise InvalidInput("separate needs at least one prompt")
    stft_cfg = stft_cfg or StftConfig()
    spec = stft(mix, stft_cfg)
    mag = magnitude(spec)

    def run(prompt):
        mask = predict_mask(mag, _prompt_text(prompt), model)
        return apply_mask_and_reconstruct(spec, mask)

    if parallelism > 1 and len(prompts) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(run, prompts))
    return [run(p) for p in prompts]
