"""Entropy-guided sample weighting.

Each gated token is scored by how much information it carries: either its
population variance (the stable production choice) or the differential
entropy of a Gaussian with that variance, 0.5*(1 + log(2*pi) + log(var)).
Samples whose tokens carry little information are hard; their classification
loss is scaled up by eta = 1 + exp(-gamma * total_information), which lies in
(1, 2] for nonnegative totals.  Gradients flow through eta as well as the
base loss, so minimizing the product also pushes token information up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .errors import ContractError
from .tensor import Tensor

LOG_EPS = 1e-8  # guards log(0) for constant tokens in entropy mode
GAUSSIAN_CONST = 0.5 * (1.0 + math.log(2.0 * math.pi))

MODES = ("variance", "entropy")


def _check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ContractError(f"unknown information mode {mode!r}, expected one of {MODES}")
    return mode


def token_information(token, mode: str = "variance") -> Tensor:
    """Information carried by a token (trailing axis holds its entries).

    variance mode returns the population variance; entropy mode returns
    0.5*(1 + log(2*pi) + log(var + eps)).  Differentiable in both modes.
    Accepts (..., D) and reduces the trailing axis.
    """
    _check_mode(mode)
    _, var = T.reduce_mean_var(token)
    if mode == "variance":
        return var
    return T.add(T.scale(T.log(T.add(var, LOG_EPS)), 0.5), GAUSSIAN_CONST)


def sample_weight(per_token_info: Tensor, gamma: float) -> Tensor:
    """Hardness weight eta = 1 + exp(-gamma * total information)."""
    if gamma <= 0:
        raise ContractError(f"gamma must be positive, got {gamma}")
    return T.add(T.exp(T.scale(T.tensor_sum(per_token_info), -gamma)), 1.0)


def reweighted_loss(eta: Tensor, arc: Tensor) -> Tensor:
    """Classification loss scaled by the hardness weight; both factors carry gradient."""
    return T.mul(eta, arc)


@dataclass(frozen=True)
class EntropyReport:
    """Information summary for one sample's gated tokens."""

    per_token: np.ndarray
    total: float
    eta: float
    mode: str


def entropy_report(gated: np.ndarray, gamma: float, mode: str = "variance") -> EntropyReport:
    """Numpy-side information/weight summary (no graph)."""
    _check_mode(mode)
    if gamma <= 0:
        raise ContractError(f"gamma must be positive, got {gamma}")
    with T.no_grad():
        per_token = token_information(Tensor(np.asarray(gated)), mode).data
    total = float(per_token.sum())
    return EntropyReport(per_token=per_token, total=total, eta=1.0 + math.exp(-gamma * total), mode=mode)


def mean_token_information(token_sets: Sequence | Iterable, mode: str = "entropy") -> float:
    """Mean information over all gated tokens of all samples in a batch.

    Accepts TokenSet objects (their ``gated`` field) or plain (n, D) arrays.
    """
    _check_mode(mode)
    values: list[np.ndarray] = []
    for ts in token_sets:
        gated = getattr(ts, "gated", ts)
        arr = gated.data if isinstance(gated, Tensor) else np.asarray(gated)
        with T.no_grad():
            values.append(token_information(Tensor(arr), mode).data.reshape(-1))
    if not values:
        raise ContractError("mean_token_information of an empty batch")
    return float(np.concatenate(values).mean())
