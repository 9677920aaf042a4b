"""Ablation suites: every variant trained with the same seeds and budget."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..data.dataset import Dataset
from ..model import ModelConfig
from .trainer import TrainConfig, evaluate, train

SUITES = {
    "directionality": [
        ("SSM", {"bidirectional": False, "use_conv": False}),
        ("Bidirectional SSM", {"bidirectional": True, "use_conv": False}),
        ("Bidirectional SSM + Conv1D", {"bidirectional": True, "use_conv": True}),
    ],
    "channel_mode": [
        ("Channel Fusion", {"channel_mode": "fusion"}),
        ("Channel Independent", {"channel_mode": "independent"}),
    ],
    "class_token": [
        ("No class token", {"class_token": "none"}),
        ("End class token", {"class_token": "end"}),
    ],
}


@dataclass
class VariantResult:
    variant: str
    seeds: list
    f1: list
    accuracy: list

    @property
    def f1_mean(self) -> float:
        return float(np.mean(self.f1))

    @property
    def f1_std(self) -> float:
        return float(np.std(self.f1))

    @property
    def acc_mean(self) -> float:
        return float(np.mean(self.accuracy))

    @property
    def acc_std(self) -> float:
        return float(np.std(self.accuracy))


def suite_variants(suite: str):
    if suite not in SUITES:
        raise ValueError(f"unknown ablation suite {suite!r}; valid suites: {', '.join(SUITES)}")
    return SUITES[suite]


def run_ablation(suite: str, base: ModelConfig, dataset: Dataset, seeds=(0, 1, 2),
                 train_config: TrainConfig | None = None, out_dir=None) -> list[VariantResult]:
    """Test-split weighted F1 and accuracy of each variant, one run per seed."""
    variants = suite_variants(suite)
    tc = train_config or TrainConfig()
    results = []
    for label, overrides in variants:
        cfg = replace(base, **overrides)
        f1s, accs = [], []
        for seed in seeds:
            res = train(cfg, dataset, replace(tc, seed=seed))
            rep = evaluate(res.model, dataset.x_test, dataset.y_test, tc.eval_batch_size)
            f1s.append(rep.weighted_f1)
            accs.append(rep.accuracy_std)
        results.append(VariantResult(label, list(seeds), f1s, accs))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_ablation_csv(out / f"ablation_{suite}.csv", results)
    return results


def write_ablation_csv(path, results: list[VariantResult]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["variant", "f1_mean", "f1_std", "acc_mean", "acc_std", "n_seeds"])
        for r in results:
            w.writerow([r.variant, f"{r.f1_mean:.6f}", f"{r.f1_std:.6f}", f"{r.acc_mean:.6f}",
                        f"{r.acc_std:.6f}", len(r.seeds)])
