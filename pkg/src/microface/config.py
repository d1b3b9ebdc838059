"""Run configuration: a line-based ``key = value`` file, every key also a CLI flag.

Precedence is defaults < config file < explicit command-line flags.  Unknown
keys are rejected.
"""

from __future__ import annotations

from pathlib import Path

from .errors import UsageError
from .model import ModelConfig
from .train import EHSM_MODES, TrainSettings


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("on", "true", "1", "yes"):
        return True
    if low in ("off", "false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_mode(raw: str) -> str:
    if raw not in EHSM_MODES:
        raise ValueError(f"must be one of {', '.join(EHSM_MODES)}")
    return raw


# key -> (type parser, default, help)
KEYS: dict[str, tuple] = {
    "image-side": (int, 32, "input image side length in pixels"),
    "channels": (int, 3, "image channel count"),
    "patch": (int, 8, "patch side length in pixels"),
    "dim": (int, 32, "token embedding width"),
    "depth": (int, 2, "encoder block count"),
    "heads": (int, 4, "attention head count"),
    "mlp-ratio": (float, 2.0, "MLP hidden width as a multiple of dim"),
    "se-hidden": (int, 0, "SE hidden width (0 = patch count)"),
    "emb": (int, 128, "face embedding width"),
    "scale": (float, 64.0, "cosine logit scale"),
    "margin": (float, 0.5, "additive angular margin (radians)"),
    "se": (_parse_bool, True, "enable the token-gating SE module (on/off)"),
    "dpap": (_parse_bool, True, "enable dominant-patch amplitude perturbation (on/off)"),
    "ehsm-mode": (_parse_mode, "variance", "sample weighting: variance, entropy, global or off"),
    "alpha": (float, 1.0, "upper bound of the amplitude mix weight"),
    "top-k": (int, 0, "dominant patches per image (0 = auto)"),
    "gamma": (float, 0.1, "temperature of the hardness weight"),
    "epochs": (int, 200, "training epochs"),
    "batch-size": (int, 32, "samples per optimization step"),
    "lr": (float, 1e-3, "base learning rate"),
    "weight-decay": (float, 0.1, "decoupled weight decay"),
    "seed": (int, 1, "master RNG seed"),
    "target-accuracy": (float, 0.0, "stop once train accuracy reaches this (0 = never)"),
}


def defaults() -> dict:
    return {key: default for key, (_, default, _) in KEYS.items()}


def load_config_file(path) -> dict:
    """Parse ``key = value`` lines; blank lines and #-comments are skipped."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    out: dict = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        parser = KEYS[key][0]
        try:
            out[key] = parser(raw)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return out


def merge_settings(config_path=None, cli_overrides: dict | None = None) -> dict:
    merged = defaults()
    if config_path is not None:
        merged.update(load_config_file(config_path))
    for key, value in (cli_overrides or {}).items():
        if value is not None:
            if key not in KEYS:
                raise UsageError(f"unknown configuration key {key!r}")
            merged[key] = value
    return merged


def model_config(values: dict, classes: int) -> ModelConfig:
    return ModelConfig(
        image_side=values["image-side"],
        channels=values["channels"],
        patch=values["patch"],
        dim=values["dim"],
        depth=values["depth"],
        heads=values["heads"],
        mlp_ratio=values["mlp-ratio"],
        se_hidden=values["se-hidden"],
        emb=values["emb"],
        classes=classes,
        scale=values["scale"],
        margin=values["margin"],
        use_se=values["se"],
    )


def train_settings(values: dict) -> TrainSettings:
    return TrainSettings(
        epochs=values["epochs"],
        batch_size=values["batch-size"],
        lr=values["lr"],
        weight_decay=values["weight-decay"],
        alpha=values["alpha"],
        top_k=values["top-k"],
        gamma=values["gamma"],
        ehsm_mode=values["ehsm-mode"],
        dpap=values["dpap"],
        seed=values["seed"],
        target_accuracy=values["target-accuracy"],
    )
