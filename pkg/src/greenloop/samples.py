"""Sample records flowing through pools, batches, and the replay buffer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Provenance tags. Replayed samples get "replay/" prefixed onto their
# original tag so batch composition stays countable after mixing.
PROV_SEED = "seed"
PROV_HUMAN = "human"
PROV_WEAK = "weak"
PROV_REPLAY_PREFIX = "replay/"


def _freeze(features) -> np.ndarray:
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"features must be 1-D, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """A feature vector with a class label, a training weight, and provenance.

    Weight 1.0 marks a direct (human or seed) label; injected-rule weak
    labels carry a configured weight below 1.0.
    """

    sample_id: int
    features: np.ndarray
    label: int
    weight: float = 1.0
    provenance: str = PROV_SEED

    def __post_init__(self):
        object.__setattr__(self, "features", _freeze(self.features))
        if self.label < 0:
            raise ValueError("label must be nonnegative")
        if not (self.weight > 0.0):
            raise ValueError("weight must be positive")


@dataclass(frozen=True, eq=False)
class UnlabeledSample:
    """A pool sample awaiting a label.

    ``true_label`` is the simulation oracle's ground truth; it is never
    read by scoring or selection, only by the oracle answering queries.
    """

    sample_id: int
    features: np.ndarray
    true_label: int | None = None
    provenance: str = "pool"

    def __post_init__(self):
        object.__setattr__(self, "features", _freeze(self.features))
