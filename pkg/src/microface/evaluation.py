"""Face-verification scoring: pair accuracy and TAR at a fixed FAR."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import VerificationPair, read_ppm
from .errors import ContractError
from .model import Model


@dataclass
class PairEvalResult:
    accuracy: float
    threshold: float
    genuine: list[float]
    impostor: list[float]


@dataclass(frozen=True)
class TarFarResult:
    tar: float
    threshold: float
    saturated: bool


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ContractError("cosine similarity of a zero-norm embedding")
    return float(a @ b / (na * nb))


def best_threshold_accuracy(genuine: list[float], impostor: list[float]) -> tuple[float, float]:
    """Max verification accuracy over thresholds between consecutive scores.

    Candidate thresholds are midpoints of the sorted distinct scores plus
    sentinels below/above everything (predict-all-same / predict-all-diff).
    Score >= threshold predicts "same identity".
    """
    scores = np.array(genuine + impostor)
    labels = np.array([True] * len(genuine) + [False] * len(impostor))
    uniq = np.unique(scores)
    candidates = [uniq[0] - 1.0, uniq[-1] + 1.0]
    candidates.extend((uniq[:-1] + uniq[1:]) / 2.0)
    best_acc, best_t = -1.0, 0.0
    for t in candidates:
        acc = float(((scores >= t) == labels).mean())
        if acc > best_acc:
            best_acc, best_t = acc, float(t)
    return best_acc, best_t


def evaluate_pairs(model: Model, pairs: list[VerificationPair], root) -> PairEvalResult:
    """Cosine-score every pair through the model and sweep for best accuracy."""
    if not pairs:
        raise ContractError("evaluate_pairs needs a nonempty pair list")
    root = Path(root)
    cache: dict[str, np.ndarray] = {}

    def emb(rel: str) -> np.ndarray:
        if rel not in cache:
            cache[rel] = model.embedding(read_ppm(root / rel))
        return cache[rel]

    genuine, impostor = [], []
    for p in pairs:
        score = cosine_similarity(emb(p.path_a), emb(p.path_b))
        (genuine if p.same else impostor).append(score)
    if genuine and impostor:
        acc, thr = best_threshold_accuracy(genuine, impostor)
    else:
        acc, thr = 1.0, 0.0  # single-class pair lists are trivially separable
    return PairEvalResult(accuracy=acc, threshold=thr, genuine=genuine, impostor=impostor)


def tar_at_far(genuine: list[float], impostor: list[float], far: float) -> TarFarResult:
    """True-accept rate at the loosest threshold whose false-accept rate <= far.

    The threshold is the exact empirical quantile: the smallest cut that
    keeps the fraction of impostor scores at or above it within ``far``.
    When ``far`` is below 1/len(impostor), no positive FAR is achievable; the
    result is computed just above the top impostor score and flagged.
    """
    if not genuine or not impostor:
        raise ContractError("tar_at_far needs nonempty genuine and impostor score lists")
    if not 0.0 < far <= 1.0:
        raise ContractError(f"far must be in (0, 1], got {far}")
    gen = np.asarray(genuine, dtype=np.float64)
    imp = np.asarray(impostor, dtype=np.float64)
    n = imp.size
    saturated = far < 1.0 / n
    # Threshold sits just above the smallest impostor score u for which the
    # strictly-greater fraction is within far; scores > u are accepted.
    if (imp >= imp.min()).mean() <= far:  # far == 1.0: accept everything
        return TarFarResult(tar=1.0, threshold=-np.inf, saturated=saturated)
    for u in np.unique(imp):
        if (imp > u).sum() / n <= far:
            tar = float((gen > u).mean())
            return TarFarResult(tar=tar, threshold=float(u), saturated=saturated)
    raise AssertionError("unreachable: the largest impostor score always satisfies the bound")
