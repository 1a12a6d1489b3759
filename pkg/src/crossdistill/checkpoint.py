"""Parameter checkpoints on top of the shared binary container format."""

from __future__ import annotations

from pathlib import Path

from .container import ContainerError, dumps_container, read_container
from .models import EncoderParams, HeadParams
from .tensor import Tensor


def encoder_arrays(enc: EncoderParams) -> dict:
    arrays = {}
    for i, (w, b) in enumerate(zip(enc.weights, enc.biases)):
        arrays[f"w{i}"] = w.data
        arrays[f"b{i}"] = b.data
    return arrays


def encoder_bytes(enc: EncoderParams, config: dict | None = None) -> bytes:
    meta = {"model": "encoder", "activation": enc.activation, "n_layers": len(enc.weights)}
    if config:
        meta["run"] = config
    return dumps_container("checkpoint", meta, encoder_arrays(enc))


def save_encoder(path: str | Path, enc: EncoderParams, config: dict | None = None) -> None:
    Path(path).write_bytes(encoder_bytes(enc, config))


def load_encoder(path: str | Path) -> EncoderParams:
    kind, meta, arrays = read_container(path)
    if kind != "checkpoint" or meta.get("model") != "encoder":
        raise ContainerError(f"{path}: not an encoder checkpoint")
    n = meta["n_layers"]
    weights = [Tensor(arrays[f"w{i}"], requires_grad=True) for i in range(n)]
    biases = [Tensor(arrays[f"b{i}"], requires_grad=True) for i in range(n)]
    return EncoderParams(weights=weights, biases=biases, activation=meta["activation"])


def head_bytes(head: HeadParams, config: dict | None = None) -> bytes:
    meta = {"model": "head"}
    if config:
        meta["run"] = config
    return dumps_container("checkpoint", meta, {"weight": head.weight.data, "bias": head.bias.data})


def save_head(path: str | Path, head: HeadParams, config: dict | None = None) -> None:
    Path(path).write_bytes(head_bytes(head, config))


def load_head(path: str | Path) -> HeadParams:
    kind, meta, arrays = read_container(path)
    if kind != "checkpoint" or meta.get("model") != "head":
        raise ContainerError(f"{path}: not a head checkpoint")
    return HeadParams(
        weight=Tensor(arrays["weight"], requires_grad=True),
        bias=Tensor(arrays["bias"], requires_grad=True),
    )
