"""
The three bag classifiers.

* ``AttentionMIL``  -- tanh attention pooling, then one bag logit (sigmoid).
* ``AdditiveMIL``   -- LeakyReLU attention, then a patch score for each
  attended instance; patch scores are summed per class and the bag class
  scores go through a 2-way softmax.
* ``HybridAdditiveMIL`` -- the additive head on top of the tanh attention.

The functional entry points (``attention_tanh``, ``amil_forward``, ...) and
the model classes record the same tape graph, so what is trained is exactly
what is evaluated.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Type

import numpy as np
from numpy.typing import ArrayLike

from diffcore import Param, Tape, Var, as_tensor2d, sigmoid
from utils.errors import ConfigError, DimensionError, EmptyBagError

from .params import (
    BagClassifierParams,
    LeakyAttentionParams,
    PatchScoreParams,
    TanhAttentionParams,
    _LayerStack,
)

POSITIVE = 1


@dataclass
class BagOutput:
    bag_prob: float
    attention: np.ndarray
    patch_logits: Optional[np.ndarray] = None
    bounded_contribs: Optional[np.ndarray] = None
    class_patch_logits: Optional[np.ndarray] = None
    bag_scores: Optional[np.ndarray] = None

    @property
    def additive(self) -> bool:
        return self.patch_logits is not None


@dataclass
class _Trace:
    prob: Var
    attention: Var
    patch_logits: Optional[Var] = None
    bag_scores: Optional[Var] = None

    def to_output(self) -> BagOutput:
        attention = self.attention.value[:, 0].copy()
        if self.patch_logits is None:
            return BagOutput(bag_prob=self.prob.item(), attention=attention)
        per_class = self.patch_logits.value.copy()
        positive = per_class[:, POSITIVE].copy()
        return BagOutput(
            bag_prob=self.prob.item(),
            attention=attention,
            patch_logits=positive,
            bounded_contribs=sigmoid(positive),
            class_patch_logits=per_class,
            bag_scores=self.bag_scores.value[0].copy(),
        )


def bag_matrix(H: ArrayLike, embed_dim: Optional[int] = None) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    if H.size == 0 or H.ndim == 0 or H.shape[0] == 0:
        raise EmptyBagError("bag has no instances")
    H = as_tensor2d(H, name="bag")
    if embed_dim is not None and H.shape[1] != embed_dim:
        raise DimensionError(f"bag embeddings are {H.shape[1]}-dim, model expects {embed_dim}")
    return H


# -- graph pieces -----------------------------------------------------------

def _stack(tape: Tape, x: Var, stack: _LayerStack) -> Var:
    layers = list(stack)
    for i, (w, b) in enumerate(layers):
        x = tape.linear(x, tape.param(w), tape.param(b))
        if i < len(layers) - 1:
            x = tape.leaky_relu(x)
    return x


def _tanh_scores(tape: Tape, h: Var, p: TanhAttentionParams) -> Var:
    hidden = tape.tanh(tape.linear(h, tape.transpose(tape.param(p.V))))
    return tape.linear(hidden, tape.param(p.w))


def _leaky_scores(tape: Tape, h: Var, p: LeakyAttentionParams) -> Var:
    hidden = tape.leaky_relu(tape.linear(h, tape.param(p.W1), tape.param(p.b1)))
    return tape.linear(hidden, tape.param(p.W2), tape.param(p.b2))


def _record_pooling(tape: Tape, h: Var, scores: Var, clf: BagClassifierParams) -> _Trace:
    a = tape.softmax(scores)
    z = tape.sum(tape.mul(a, h), axis=0)
    prob = tape.sigmoid(_stack(tape, z, clf))
    return _Trace(prob=prob, attention=a)


def _record_additive(tape: Tape, h: Var, scores: Var, ps: PatchScoreParams) -> _Trace:
    a = tape.softmax(scores)
    patch_logits = _stack(tape, tape.mul(a, h), ps)
    bag_scores = tape.sum(patch_logits, axis=0)
    class_probs = tape.softmax(bag_scores, axis=1)
    prob = tape.pick(class_probs, 0, POSITIVE)
    return _Trace(prob=prob, attention=a, patch_logits=patch_logits, bag_scores=bag_scores)


# -- functional API ---------------------------------------------------------

def attention_tanh(H: ArrayLike, p: TanhAttentionParams) -> np.ndarray:
    tape = Tape()
    scores = _tanh_scores(tape, tape.const(bag_matrix(H)), p)
    return tape.softmax(scores).value[:, 0].copy()


def attention_leaky(H: ArrayLike, p: LeakyAttentionParams) -> np.ndarray:
    tape = Tape()
    scores = _leaky_scores(tape, tape.const(bag_matrix(H)), p)
    return tape.softmax(scores).value[:, 0].copy()


def amil_forward(H: ArrayLike, attn: TanhAttentionParams, clf: BagClassifierParams) -> BagOutput:
    tape = Tape()
    h = tape.const(bag_matrix(H))
    return _record_pooling(tape, h, _tanh_scores(tape, h, attn), clf).to_output()


def admil_forward(H: ArrayLike, attn: LeakyAttentionParams, ps: PatchScoreParams) -> BagOutput:
    tape = Tape()
    h = tape.const(bag_matrix(H))
    return _record_additive(tape, h, _leaky_scores(tape, h, attn), ps).to_output()


def hybrid_forward(H: ArrayLike, attn: TanhAttentionParams, ps: PatchScoreParams) -> BagOutput:
    tape = Tape()
    h = tape.const(bag_matrix(H))
    return _record_additive(tape, h, _tanh_scores(tape, h, attn), ps).to_output()


# -- model classes ----------------------------------------------------------

class BaseMILModel(ABC):
    architecture: str = "base"
    additive: bool = False

    def __init__(self, embed_dim: int, attention_dim: int = 128,
                 classifier_hidden: Sequence[int] = (), seed: int = 0):
        self.embed_dim = int(embed_dim)
        self.attention_dim = int(attention_dim)
        self.classifier_hidden = tuple(int(w) for w in classifier_hidden)
        rng = np.random.default_rng(seed)
        self._build(rng)

    @abstractmethod
    def _build(self, rng: np.random.Generator) -> None:
        pass

    @abstractmethod
    def _record(self, tape: Tape, h: Var) -> _Trace:
        pass

    @abstractmethod
    def named_parameters(self) -> Dict[str, Param]:
        pass

    def parameters(self) -> List[Param]:
        return list(self.named_parameters().values())

    def gradcheck_parameters(self) -> List[Param]:
        """Parameters with a non-trivial gradient (all of them by default)."""
        return self.parameters()

    def record(self, tape: Tape, H: ArrayLike) -> _Trace:
        return self._record(tape, tape.const(bag_matrix(H, self.embed_dim)))

    def forward(self, H: ArrayLike) -> BagOutput:
        return self.record(Tape(), H).to_output()

    def loss(self, tape: Tape, H: ArrayLike, label: int) -> Var:
        return tape.bce(self.record(tape, H).prob, int(label))

    def __repr__(self) -> str:
        return (f"{type(self).__name__}(M={self.embed_dim}, L={self.attention_dim}, "
                f"hidden={self.classifier_hidden})")


class AttentionMIL(BaseMILModel):
    architecture = "amil"

    def _build(self, rng):
        self.attn = TanhAttentionParams.init(rng, self.embed_dim, self.attention_dim)
        self.clf = BagClassifierParams.init(rng, self.embed_dim, self.classifier_hidden)

    def _record(self, tape, h):
        return _record_pooling(tape, h, _tanh_scores(tape, h, self.attn), self.clf)

    def named_parameters(self):
        return {**self.attn.named(), **self.clf.named()}


class AdditiveMIL(BaseMILModel):
    architecture = "admil"
    additive = True

    def _build(self, rng):
        self.attn = LeakyAttentionParams.init(rng, self.embed_dim, self.attention_dim)
        self.ps = PatchScoreParams.init(rng, self.embed_dim, self.classifier_hidden)

    def _record(self, tape, h):
        return _record_additive(tape, h, _leaky_scores(tape, h, self.attn), self.ps)

    def named_parameters(self):
        return {**self.attn.named(), **self.ps.named()}

    def gradcheck_parameters(self):
        # b2 shifts every attention score equally; softmax cancels it
        return [p for p in self.parameters() if p is not self.attn.b2]


class HybridAdditiveMIL(BaseMILModel):
    architecture = "hybrid"
    additive = True

    def _build(self, rng):
        self.attn = TanhAttentionParams.init(rng, self.embed_dim, self.attention_dim)
        self.ps = PatchScoreParams.init(rng, self.embed_dim, self.classifier_hidden)

    def _record(self, tape, h):
        return _record_additive(tape, h, _tanh_scores(tape, h, self.attn), self.ps)

    def named_parameters(self):
        return {**self.attn.named(), **self.ps.named()}


MODEL_REGISTRY: Dict[str, Type[BaseMILModel]] = {
    cls.architecture: cls for cls in (AttentionMIL, AdditiveMIL, HybridAdditiveMIL)
}


def build_model(architecture: str, embed_dim: int, attention_dim: int = 128,
                classifier_hidden: Sequence[int] = (), seed: int = 0) -> BaseMILModel:
    try:
        cls = MODEL_REGISTRY[architecture]
    except KeyError:
        raise ConfigError(f"unknown architecture '{architecture}' "
                          f"(expected one of {', '.join(MODEL_REGISTRY)})") from None
    return cls(embed_dim, attention_dim, classifier_hidden, seed=seed)
