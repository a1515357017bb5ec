"""
Trainable tensors of the attention layers and the classifier heads.

Shapes follow the row convention used by the tape: embeddings are rows of
``H`` (n x M), a linear layer is ``x @ weight + bias``. The tanh attention
keeps ``V`` as L x M so that its score is literally ``w^T tanh(V h^T)``.
Weights are uniform in +-1/sqrt(fan_in) from the caller's generator; biases
start at zero.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from diffcore import Param

Layer = Tuple[Param, Param]


@dataclass
class TanhAttentionParams:
    V: Param
    w: Param

    @classmethod
    def init(cls, rng: np.random.Generator, embed_dim: int, attention_dim: int) -> "TanhAttentionParams":
        return cls(
            V=Param.uniform(rng, (attention_dim, embed_dim), embed_dim, name="attn.V"),
            w=Param.uniform(rng, (attention_dim, 1), attention_dim, name="attn.w"),
        )

    def named(self) -> Dict[str, Param]:
        return {"attn.V": self.V, "attn.w": self.w}


@dataclass
class LeakyAttentionParams:
    W1: Param
    b1: Param
    W2: Param
    b2: Param

    @classmethod
    def init(cls, rng: np.random.Generator, embed_dim: int, attention_dim: int) -> "LeakyAttentionParams":
        return cls(
            W1=Param.uniform(rng, (embed_dim, attention_dim), embed_dim, name="attn.W1"),
            b1=Param.zeros((1, attention_dim), name="attn.b1"),
            W2=Param.uniform(rng, (attention_dim, 1), attention_dim, name="attn.W2"),
            b2=Param.zeros((1, 1), name="attn.b2"),
        )

    def named(self) -> Dict[str, Param]:
        return {"attn.W1": self.W1, "attn.b1": self.b1, "attn.W2": self.W2, "attn.b2": self.b2}


def _init_layers(rng: np.random.Generator, prefix: str, widths: Sequence[int]) -> List[Layer]:
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        layers.append((
            Param.uniform(rng, (fan_in, fan_out), fan_in, name=f"{prefix}.{i}.weight"),
            Param.zeros((1, fan_out), name=f"{prefix}.{i}.bias"),
        ))
    return layers


@dataclass
class _LayerStack:
    layers: List[Layer] = field(default_factory=list)
    prefix: str = "layers"

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    def __iter__(self) -> Iterator[Layer]:
        return iter(self.layers)

    def named(self) -> Dict[str, Param]:
        out = {}
        for i, (w, b) in enumerate(self.layers):
            out[f"{self.prefix}.{i}.weight"] = w
            out[f"{self.prefix}.{i}.bias"] = b
        return out


@dataclass
class BagClassifierParams(_LayerStack):
    """psi_p of attention MIL: pooled embedding -> one logit."""
    prefix: str = "clf"

    @classmethod
    def init(cls, rng, embed_dim: int, hidden: Sequence[int] = ()) -> "BagClassifierParams":
        return cls(_init_layers(rng, "clf", [embed_dim, *hidden, 1]))


@dataclass
class PatchScoreParams(_LayerStack):
    """psi_p of additive MIL: one attended embedding -> one logit per class."""
    prefix: str = "ps"

    @classmethod
    def init(cls, rng, embed_dim: int, hidden: Sequence[int] = (), n_classes: int = 2) -> "PatchScoreParams":
        return cls(_init_layers(rng, "ps", [embed_dim, *hidden, n_classes]))
