"""Desk-scale goodness: random-weight network features plus a ridge readout."""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from ..arch import ArchConfig, ExpansionFactors, instantiate
from ..cost import propagate_shapes
from ..engine import features, init_weights
from .ridge import RidgeClassifier
from .synthetic import SyntheticDatasetSpec, generate_dataset

logger = logging.getLogger(__name__)

DEFAULT_ACTIVATION_BUDGET = 2 * 10**8


class ActivationBudgetError(RuntimeError):
    pass


def activation_elements(spec, batch: int = 1) -> int:
    return batch * sum(s.out_T * s.out_H * s.out_W * s.out_C for s in propagate_shapes(spec))


def _extract(spec, weights, clips, batch, threads):
    out = [features(spec, weights, clips[i : i + batch], threads=threads) for i in range(0, len(clips), batch)]
    return np.concatenate(out, axis=0)


def random_feature_eval(
    factors: ExpansionFactors,
    arch_config: Optional[ArchConfig] = None,
    ds: Optional[SyntheticDatasetSpec] = None,
    seed: int = 0,
    lam: float = 1e-2,
    *,
    dataset_seed: Optional[int] = None,
    batch: int = 32,
    threads: Optional[int] = None,
    activation_budget: int = DEFAULT_ACTIVATION_BUDGET,
    shuffle_labels: bool = False,
) -> float:
    """Test accuracy of a ridge readout on pooled conv5 features.

    The dataset geometry follows the instantiated architecture's input.
    ``shuffle_labels`` permutes train and test labels independently (a
    chance-level control).

    Raises:
        ActivationBudgetError: one batch would exceed ``activation_budget``
            activation elements.
    """
    arch_config = arch_config or ArchConfig()
    ds = ds or SyntheticDatasetSpec()
    spec = instantiate(factors, arch_config)
    batch = max(1, int(batch))
    used = activation_elements(spec, batch)
    if used > activation_budget:
        raise ActivationBudgetError(f"{used} activation elements per batch exceed budget {activation_budget}")

    geo = spec.input
    ds = ds.matched(geo.frames, geo.resolution, geo.stride)
    data = generate_dataset(ds, seed if dataset_seed is None else dataset_seed)
    train_y, test_y = data.train_y, data.test_y
    if shuffle_labels:
        rng = np.random.default_rng([int(seed), 0x5EED])
        train_y = rng.permutation(train_y)
        test_y = rng.permutation(test_y)

    weights = init_weights(spec, seed)
    train_f = _extract(spec, weights, data.train_x, batch, threads)
    test_f = _extract(spec, weights, data.test_x, batch, threads)
    clf = RidgeClassifier(lam).fit(train_f, train_y, ds.num_classes)
    if clf.degenerate:
        logger.warning("all pooled features are constant; scoring at chance")
        return 1.0 / ds.num_classes
    return float(np.mean(clf.predict(test_f) == test_y))
