"""
Interpretability statistics of a bag's attention and patch contributions.
"""
import math

import numpy as np
from numpy.typing import ArrayLike

from utils.errors import DimensionError, EmptyBagError, EmptyMaskError, RangeError

EXCITATORY_CUT = 0.5


def attention_entropy(attention: ArrayLike) -> float:
    """Shannon entropy (nats) of an attention vector; 0 log 0 counts as 0."""
    a = np.asarray(attention, dtype=np.float64).reshape(-1)
    if a.size == 0:
        raise EmptyBagError("attention vector is empty")
    nz = a[a > 0]
    return float(-(nz * np.log(nz)).sum())


def effective_instance_count(attention: ArrayLike) -> float:
    """exp(entropy): 1 for one-hot attention, n for uniform attention."""
    return math.exp(attention_entropy(attention))


def excitatory_fraction(bounded_contribs: ArrayLike) -> float:
    c = np.asarray(bounded_contribs, dtype=np.float64).reshape(-1)
    if c.size == 0:
        raise EmptyBagError("no patch contributions")
    return float(np.mean(c >= EXCITATORY_CUT))


def top_tiles(scores: ArrayLike, top_frac: float = 0.1) -> np.ndarray:
    """Indices of the ceil(top_frac * n) highest scores; earlier index wins ties."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if s.size == 0:
        raise EmptyBagError("no scores")
    if not 0.0 < top_frac <= 1.0:
        raise RangeError(f"top fraction {top_frac} outside (0, 1]")
    n_top = max(1, math.ceil(top_frac * s.size))
    return np.argsort(-s, kind="stable")[:n_top]


def roi_recall(scores: ArrayLike, region_mask: ArrayLike, top_frac: float = 0.1) -> float:
    """|top ∩ region| / min(|top|, |region|)."""
    region = np.asarray(region_mask).reshape(-1).astype(bool)
    if region.size != np.asarray(scores).size:
        raise DimensionError(f"{np.asarray(scores).size} scores for a region mask of {region.size}")
    if not region.any():
        raise EmptyMaskError("region mask is empty")
    top = top_tiles(scores, top_frac)
    hits = int(region[top].sum())
    return hits / min(top.size, int(region.sum()))
