"""Versioned binary checkpoint container.

Layout: an 8-byte magic, a little-endian u64 header length, a JSON header
(config, vocabulary, tensor index, optimizer metadata), then the raw
little-endian tensor buffers in header order. Reload is bit-exact, which
the resume-equivalence tests rely on.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import InvalidInput
from .model import SeparatorConfig, SeparatorModel, Tokenizer, _MaskUNet

MAGIC = b"TSEPCKP1"
FORMAT_VERSION = 1

_DTYPES = {
    "float32": (np.float32, torch.float32),
    "float64": (np.float64, torch.float64),
    "int64": (np.int64, torch.int64),
}
_TORCH_NAMES = {torch.float32: "float32", torch.float64: "float64", torch.int64: "int64"}


def _tensor_entry(name: str, tensor: torch.Tensor):
    dtype_name = _TORCH_NAMES.get(tensor.dtype)
    if dtype_name is None:
        raise InvalidInput(f"cannot serialize tensor {name!r} of dtype {tensor.dtype}")
    array = tensor.detach().cpu().contiguous().numpy()
    return (
        {"name": name, "shape": list(array.shape), "dtype": dtype_name},
        array.tobytes(),
    )


def _flatten_optimizer(optimizer_state: dict):
    """Split an Adam state_dict into (json-safe metadata, named tensors)."""
    tensors = []
    scalars: dict = {}
    for idx in sorted(optimizer_state.get("state", {})):
        entry = optimizer_state["state"][idx]
        for key in sorted(entry):
            value = entry[key]
            if isinstance(value, torch.Tensor):
                tensors.append((f"opt/{idx}/{key}", value))
            else:
                scalars.setdefault(str(idx), {})[key] = value
    meta = {
        "param_groups": optimizer_state.get("param_groups", []),
        "scalars": scalars,
    }
    return meta, tensors


def save_checkpoint(
    path,
    model: SeparatorModel,
    epoch: int | None = None,
    optimizer_state: dict | None = None,
    extra: dict | None = None,
) -> None:
    entries = []
    buffers = []
    for name, tensor in model.net.state_dict().items():
        entry, buf = _tensor_entry(f"net/{name}", tensor)
        entries.append(entry)
        buffers.append(buf)
    optimizer_meta = None
    if optimizer_state is not None:
        optimizer_meta, opt_tensors = _flatten_optimizer(optimizer_state)
        for name, tensor in opt_tensors:
            entry, buf = _tensor_entry(name, tensor)
            entries.append(entry)
            buffers.append(buf)
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config_dict(),
        "vocab_words": list(model.tokenizer.words),
        "hash_buckets": model.tokenizer.hash_buckets,
        "dtype": _TORCH_NAMES[model.dtype],
        "epoch": epoch,
        "extra": extra or {},
        "optimizer": optimizer_meta,
        "tensors": entries,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for buf in buffers:
            fh.write(buf)


@dataclass
class LoadedCheckpoint:
    model: SeparatorModel
    epoch: int | None
    optimizer_state: dict | None
    extra: dict


def load_checkpoint(path) -> LoadedCheckpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise InvalidInput(f"{path}: not a checkpoint file (bad magic)")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len))
        if header["format_version"] != FORMAT_VERSION:
            raise InvalidInput(
                f"{path}: unsupported checkpoint version {header['format_version']}"
            )
        tensors = {}
        for entry in header["tensors"]:
            np_dtype, torch_dtype = _DTYPES[entry["dtype"]]
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            buf = fh.read(count * np.dtype(np_dtype).itemsize)
            array = np.frombuffer(buf, dtype=np_dtype).reshape(entry["shape"]).copy()
            tensors[entry["name"]] = torch.from_numpy(array).to(torch_dtype)

    config_kwargs = dict(header["config"])
    config_kwargs["attention_levels"] = tuple(config_kwargs["attention_levels"])
    config = SeparatorConfig(**config_kwargs)
    tokenizer = Tokenizer(header["vocab_words"], header["hash_buckets"])
    torch.manual_seed(config.rng_seed)
    net = _MaskUNet(config, tokenizer.table_size).to(_DTYPES[header["dtype"]][1])
    net.load_state_dict(
        {k[len("net/") :]: v for k, v in tensors.items() if k.startswith("net/")}
    )
    model = SeparatorModel(config, tokenizer, net)

    optimizer_state = None
    if header["optimizer"] is not None:
        state: dict = {}
        for name, tensor in tensors.items():
            if not name.startswith("opt/"):
                continue
            _, idx, key = name.split("/", 2)
            state.setdefault(int(idx), {})[key] = tensor
        for idx, entries in header["optimizer"].get("scalars", {}).items():
            state.setdefault(int(idx), {}).update(entries)
        param_groups = []
        for group in header["optimizer"]["param_groups"]:
            group = dict(group)
            if "betas" in group:
                group["betas"] = tuple(group["betas"])
            param_groups.append(group)
        optimizer_state = {"state": state, "param_groups": param_groups}
    return LoadedCheckpoint(
        model=model,
        epoch=header["epoch"],
        optimizer_state=optimizer_state,
        extra=header.get("extra", {}),
    )
