"""MLP encoder with unit-norm embedding rows, plus a linear classifier head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, add, matmul, normalize_rows, relu, tanh

_ACTIVATIONS = {"relu": relu, "tanh": tanh}


@dataclass
class EncoderParams:
    """Weights of the embedding model: an MLP whose outputs are L2-normalized per row."""

    weights: list[Tensor]
    biases: list[Tensor]
    activation: str = "relu"

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def embed_dim(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> list[Tensor]:
        return [*self.weights, *self.biases]


@dataclass
class HeadParams:
    """One-layer classifier mapping embeddings to class logits."""

    weight: Tensor
    bias: Tensor

    @property
    def embed_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def n_classes(self) -> int:
        return self.weight.shape[1]

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


def _uniform_fanin(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_encoder(
    input_dim: int,
    widths: tuple[int, ...] = (64, 64, 16),
    activation: str = "relu",
    rng: np.random.Generator | None = None,
) -> EncoderParams:
    """Fresh encoder with U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero biases."""
    if activation not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}; expected one of {sorted(_ACTIVATIONS)}")
    if not widths:
        raise ValueError("widths must list at least the output dimension")
    rng = np.random.default_rng() if rng is None else rng
    dims = [input_dim, *widths]
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        weights.append(Tensor(_uniform_fanin(rng, d_in, d_out), requires_grad=True))
        biases.append(Tensor(np.zeros(d_out), requires_grad=True))
    return EncoderParams(weights=weights, biases=biases, activation=activation)


def init_head(embed_dim: int, n_classes: int, rng: np.random.Generator | None = None) -> HeadParams:
    rng = np.random.default_rng() if rng is None else rng
    return HeadParams(
        weight=Tensor(_uniform_fanin(rng, embed_dim, n_classes), requires_grad=True),
        bias=Tensor(np.zeros(n_classes), requires_grad=True),
    )


def forward_encoder(params: EncoderParams, x: Tensor) -> Tensor:
    """Embed a batch; every output row has unit L2 norm (zero rows stay zero).

    Hidden layers apply the configured activation; the final layer is linear
    and feeds the row normalization, so all pairwise inner products of the
    output lie in [-1, 1].
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.data.ndim != 2:
        raise ValueError(f"encoder input must be 2-d (batch, features), got {x.data.shape}")
    if x.data.shape[1] != params.input_dim:
        raise ValueError(
            f"encoder expects {params.input_dim} input features, got {x.data.shape[1]}"
        )
    act = _ACTIVATIONS[params.activation]
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = add(matmul(h, w), b)
        if i != last:
            h = act(h)
    return normalize_rows(h)


def forward_head(params: HeadParams, z: Tensor) -> Tensor:
    """Class logits for a batch of embeddings."""
    z = z if isinstance(z, Tensor) else Tensor(z)
    if z.data.ndim != 2:
        raise ValueError(f"head input must be 2-d (batch, embed), got {z.data.shape}")
    if z.data.shape[1] != params.embed_dim:
        raise ValueError(f"head expects embed dim {params.embed_dim}, got {z.data.shape[1]}")
    return add(matmul(z, params.weight), params.bias)


def encode(params: EncoderParams, x: np.ndarray) -> np.ndarray:
    """Inference-only embedding of a raw array (no gradient bookkeeping kept)."""
    return forward_encoder(params, Tensor(np.asarray(x, dtype=np.float64))).data


def clone_encoder(params: EncoderParams) -> EncoderParams:
    return EncoderParams(
        weights=[Tensor(w.data.copy(), requires_grad=True) for w in params.weights],
        biases=[Tensor(b.data.copy(), requires_grad=True) for b in params.biases],
        activation=params.activation,
    )


def clone_head(params: HeadParams) -> HeadParams:
    return HeadParams(
        weight=Tensor(params.weight.data.copy(), requires_grad=True),
        bias=Tensor(params.bias.data.copy(), requires_grad=True),
    )
