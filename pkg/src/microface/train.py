"""Training loop: clean-pass gate harvesting, amplitude perturbation,
entropy-weighted margin loss, adaptive-moment updates, per-epoch metrics.

Every batch runs two passes per the augmentation scheme: a no-grad forward
of the clean image collects the gate scalings that pick the dominant
patches; the perturbed image then makes the recorded forward/backward pass.
All randomness flows from (seed, epoch, sample index), so a run is a pure
function of (seed, config, corpus) and reruns reproduce checkpoints
bit-exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .data import DatasetManifest, ImageSample, read_ppm
from .dpap import AugmentationConfig, augment
from .ehsm import mean_token_information, reweighted_loss, sample_weight, token_information
from .errors import ContractError, NumericalAbort
from .model import Model, ModelConfig, arcface_from_cosines
from .optim import AdamW
from .tensor import Tensor

EHSM_MODES = ("variance", "entropy", "global", "off")


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.1
    alpha: float = 1.0
    top_k: int = 0  # 0 -> max(1, round(7 * n / 144))
    gamma: float = 0.1
    ehsm_mode: str = "variance"
    dpap: bool = True
    seed: int = 1
    target_accuracy: float = 0.0  # stop early once train accuracy reaches this

    def validate(self) -> None:
        if self.ehsm_mode not in EHSM_MODES:
            raise ContractError(f"ehsm_mode must be one of {EHSM_MODES}, got {self.ehsm_mode!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractError("epochs and batch_size must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ContractError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.gamma <= 0:
            raise ContractError(f"gamma must be positive, got {self.gamma}")


@dataclass
class TrainRecord:
    epoch: int
    mean_arc_loss: float
    mean_eta: float
    mean_token_entropy: float
    train_accuracy: float
    wall_seconds: float


@dataclass
class TrainResult:
    model: Model
    records: list[TrainRecord]
    counters: dict = field(default_factory=dict)


def default_top_k(n: int) -> int:
    """Dominant-patch count scaled to the grid size (7 of 144 at full scale)."""
    return max(1, int(round(7 * n / 144)))


def sample_seed(seed: int, epoch: int, index: int) -> int:
    ss = np.random.SeedSequence([seed, epoch, index])
    return int(ss.generate_state(1, np.uint64)[0])


def first_nonfinite(loss: Tensor) -> str:
    """Name the first tensor in forward order holding a non-finite value."""
    for node in T.graph_nodes(loss):
        if not np.isfinite(node.data).all():
            return f"op '{node.op}' with shape {node.data.shape}"
    return "loss (graph values all finite; gradient-side overflow?)"


def train_model(
    manifest: DatasetManifest,
    model_cfg: ModelConfig,
    settings: TrainSettings,
    epoch_callback: Callable[[TrainRecord], None] | None = None,
) -> TrainResult:
    settings.validate()
    cfg = model_cfg.resolve()
    if settings.dpap and not cfg.use_se:
        raise ContractError("dominant-patch augmentation needs the SE gate (use_se)")
    if cfg.classes < manifest.num_classes:
        raise ContractError(f"model has {cfg.classes} classes but manifest labels reach {manifest.num_classes - 1}")

    model = Model(cfg, seed=settings.seed)
    opt = AdamW(
        model.parameters(),
        lr=settings.lr,
        betas=(0.9, 0.999),
        weight_decay=settings.weight_decay,
    )
    images = [read_ppm(manifest.root / rel) for rel, _ in manifest.rows]
    expected = (cfg.channels, cfg.image_side, cfg.image_side)
    for (rel, _), img in zip(manifest.rows, images):
        if img.shape != expected:
            raise ContractError(
                f"corpus image {rel} has shape {img.shape} but the model expects {expected}; "
                f"set image-side/channels to match"
            )
    labels = [label for _, label in manifest.rows]
    top_k = settings.top_k if settings.top_k > 0 else default_top_k(cfg.num_patches)
    counters = {"augment_calls": 0, "ehsm_reweight_calls": 0}
    records: list[TrainRecord] = []

    for epoch in range(settings.epochs):
        started = time.perf_counter()
        order = np.random.default_rng(np.random.SeedSequence([settings.seed, epoch])).permutation(len(images))
        arc_sum = eta_sum = 0.0
        correct = 0
        gated_batches: list[np.ndarray] = []
        for lo in range(0, len(order), settings.batch_size):
            batch_idx = order[lo : lo + settings.batch_size]
            samples = [
                ImageSample(images[i], labels[i], seed=sample_seed(settings.seed, epoch, int(i)))
                for i in batch_idx
            ]
            if settings.dpap:
                kappas = [model.kappa_of(s.pixels) for s in samples]
                augmented = []
                for j, s in enumerate(samples):
                    donor = samples[(j + 1) % len(samples)]
                    aug_cfg = AugmentationConfig(top_k=top_k, alpha=settings.alpha, seed=s.seed)
                    augmented.append(augment(s, kappas[j], aug_cfg, donor, grid=model.grid))
                    counters["augment_calls"] += 1
            else:
                augmented = samples

            losses = []
            for s in augmented:
                ts = model.token_set(s.pixels)
                emb = model.embed(ts.global_token)
                cosines = T.cosine_to_columns(emb, model.arc_w)
                arc = arcface_from_cosines(cosines, s.label, cfg.scale, cfg.margin)
                if settings.ehsm_mode == "off":
                    loss = arc
                    eta_val = 1.0
                else:
                    if settings.ehsm_mode == "global":
                        info = token_information(T.reshape(ts.global_token, (1, ts.global_token.size)), "variance")
                    else:
                        info = token_information(ts.gated, settings.ehsm_mode)
                    eta = sample_weight(info, settings.gamma)
                    loss = reweighted_loss(eta, arc)
                    eta_val = eta.item()
                    counters["ehsm_reweight_calls"] += 1
                losses.append(loss)
                arc_sum += arc.item()
                eta_sum += eta_val
                correct += int(np.argmax(cosines.data) == s.label)
                gated_batches.append(ts.gated.data.copy())

            batch_loss = T.tensor_mean(T.stack_scalars(losses))
            if not np.isfinite(batch_loss.data).all():
                raise NumericalAbort(
                    f"non-finite loss at epoch {epoch}: first non-finite tensor is {first_nonfinite(batch_loss)}"
                )
            T.backward(batch_loss, params=model.parameters())
            opt.step()
            opt.zero_grad()

        record = TrainRecord(
            epoch=epoch,
            mean_arc_loss=arc_sum / len(images),
            mean_eta=eta_sum / len(images),
            mean_token_entropy=mean_token_information(gated_batches, "entropy"),
            train_accuracy=correct / len(images),
            wall_seconds=time.perf_counter() - started,
        )
        records.append(record)
        if epoch_callback is not None:
            epoch_callback(record)
        if settings.target_accuracy and record.train_accuracy >= settings.target_accuracy:
            break

    return TrainResult(model=model, records=records, counters=counters)
