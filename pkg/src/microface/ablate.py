"""Component ablation: retrain with pieces toggled on a shared seed and corpus."""

from __future__ import annotations

import csv
from dataclasses import replace

from .data import DatasetManifest
from .errors import UsageError
from .model import ModelConfig
from .train import TrainResult, TrainSettings, train_model

# mode -> (use_se, dpap, ehsm_mode or None to keep the configured one)
ABLATION_MODES: dict[str, tuple[bool, bool, str | None]] = {
    "baseline": (False, False, "off"),
    "+SE": (True, False, "off"),
    "+DPAP": (True, True, "off"),
    "full": (True, True, None),
    "EHSM-global": (True, True, "global"),
}

DEFAULT_MODES = ("baseline", "+SE", "+DPAP", "full")


def ablation_run(
    manifest: DatasetManifest,
    model_cfg: ModelConfig,
    settings: TrainSettings,
    modes: tuple[str, ...] = DEFAULT_MODES,
) -> tuple[list[dict], dict[str, TrainResult]]:
    """One training run per mode; returns metric rows and the raw results."""
    for mode in modes:
        if mode not in ABLATION_MODES:
            raise UsageError(f"unknown ablation mode {mode!r}, expected one of {', '.join(ABLATION_MODES)}")
    rows: list[dict] = []
    results: dict[str, TrainResult] = {}
    for mode in modes:
        use_se, dpap, ehsm_mode = ABLATION_MODES[mode]
        cfg = replace(model_cfg, use_se=use_se)
        run_settings = replace(settings, dpap=dpap)
        if ehsm_mode is not None:
            run_settings = replace(run_settings, ehsm_mode=ehsm_mode)
        result = train_model(manifest, cfg, run_settings)
        final = result.records[-1]
        rows.append(
            {
                "mode": mode,
                "epochs": len(result.records),
                "mean_arc_loss": final.mean_arc_loss,
                "mean_eta": final.mean_eta,
                "mean_token_entropy": final.mean_token_entropy,
                "train_accuracy": final.train_accuracy,
                "augment_calls": result.counters["augment_calls"],
                "ehsm_reweight_calls": result.counters["ehsm_reweight_calls"],
            }
        )
        results[mode] = result
    return rows, results


def write_ablation_csv(rows: list[dict], path) -> None:
    columns = [
        "mode", "epochs", "mean_arc_loss", "mean_eta", "mean_token_entropy",
        "train_accuracy", "augment_calls", "ehsm_reweight_calls",
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
