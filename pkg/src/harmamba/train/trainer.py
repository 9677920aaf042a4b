"""Epoch loop, per-epoch validation and best-checkpoint selection."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff import backward, no_grad, ops
from ..data.dataset import Dataset
from ..model import HARMamba, ModelConfig
from ..rng import stream
from .metrics import EvalReport, report
from .optim import AdamW

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "train_loss", "val_loss", "val_acc_std", "val_acc_eq13", "val_f1")


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.05
    seed: int = 0
    eval_batch_size: int = 256


@dataclass
class TrainResult:
    model: HARMamba
    log: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_f1: float = float("-inf")
    seconds: float = 0.0


def evaluate(model: HARMamba, x: np.ndarray, y: np.ndarray, batch_size: int = 256) -> EvalReport:
    if len(x) == 0:
        raise ValueError("cannot evaluate an empty split")
    preds, nll = [], 0.0
    with no_grad():
        for i in range(0, len(x), batch_size):
            logits = model(x[i:i + batch_size])
            yb = y[i:i + batch_size]
            nll += ops.cross_entropy(logits, yb).item() * len(yb)
            preds.append(logits.data.argmax(axis=1))
    return report(y, np.concatenate(preds), model.config.n_classes, loss=nll / len(x))


def batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else f"{v:.6f}"


def write_log(path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in LOG_COLUMNS])


def train(model_config: ModelConfig, dataset: Dataset, config: TrainConfig | None = None,
          out_dir=None, model_seed: int | None = None) -> TrainResult:
    """Train with AdamW; keep the parameters of the best validation-F1 epoch.

    With ``out_dir`` set, writes ``train_log.csv`` and the best checkpoint
    under ``out_dir/best``.  The returned model holds the best parameters.
    """
    config = config or TrainConfig()
    if len(dataset.x_train) == 0:
        raise ValueError("training split is empty")
    if len(dataset.x_val) == 0:
        raise ValueError("validation split is empty")
    seed = config.seed if model_seed is None else model_seed
    model = HARMamba(model_config, seed=seed)
    params = model.parameters()
    opt = AdamW(params, lr=config.lr, betas=(config.beta1, config.beta2), eps=config.eps,
                weight_decay=config.weight_decay)
    res = TrainResult(model)
    best_state = model.state_dict()
    t0 = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        rng = stream(config.seed, "epoch", str(epoch))
        total, seen = 0.0, 0
        for idx in batches(len(dataset.x_train), config.batch_size, rng):
            opt.zero_grad()
            loss = ops.cross_entropy(model(dataset.x_train[idx]), dataset.y_train[idx])
            backward(loss)
            opt.step()
            total += loss.item() * len(idx)
            seen += len(idx)
        val = evaluate(model, dataset.x_val, dataset.y_val, config.eval_batch_size)
        row = {"epoch": epoch, "train_loss": total / seen, "val_loss": val.loss,
               "val_acc_std": val.accuracy_std, "val_acc_eq13": val.accuracy_ovr,
               "val_f1": val.weighted_f1}
        res.log.append(row)
        log.info("epoch %d train_loss %.4f val_loss %.4f val_acc %.4f val_f1 %.4f", epoch,
                 row["train_loss"], val.loss, val.accuracy_std, val.weighted_f1)
        if val.weighted_f1 > res.best_val_f1:
            res.best_val_f1 = val.weighted_f1
            res.best_epoch = epoch
            best_state = model.state_dict()
    model.load_state_dict(best_state)
    res.seconds = time.perf_counter() - t0
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_log(out / "train_log.csv", res.log)
        model.save(out / "best")
    return res
