"""Pairwise trust head training, evaluation metrics and the CV protocol.

Protocol: snapshots ``0 .. S-2`` are the model's history and the observed
trust of every pair active in slot ``S-1`` is the target, i.e. the model
predicts next-window trust. Pairs are split 80/20; k-fold cross-validation
with early stopping on the training part picks the epoch budget, and the
final model is retrained on all training pairs for that many epochs.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .embed import Node2vecConfig, node2vec
from .model import GmModel, ModelConfig
from .snapshot import TrustSnapshot, WindowSpec, build_snapshots
from .spatial import HistoryGraph
from .tensor import Tensor, as_tensor, mul, softmax_cross_entropy, total

log = logging.getLogger(__name__)

METRICS_HEADER = ("fold", "epoch", "split", "rmse", "mae", "loss")


@dataclass
class TrainConfig:
    lr: float = 1e-2
    l2: float = 1e-5
    dropout: float = 0.0
    momentum: float = 0.9
    epochs_max: int = 30
    patience: int = 10
    folds: int = 5
    test_frac: float = 0.2
    batch_size: int = 32
    clip_norm: float = 5.0
    min_pairs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.folds < 2 or self.batch_size < 1 or self.epochs_max < 0 or self.patience < 1:
            raise ValueError("folds >= 2, batch_size >= 1, epochs_max >= 0, patience >= 1 required")
        if not 0.0 < self.test_frac < 1.0:
            raise ValueError("test_frac must be in (0, 1)")


@dataclass(frozen=True)
class PairExample:
    trustor_id: int
    trustee_id: int
    target_bin: int
    target_value: float


def to_bin(value: float, n_bins: int) -> int:
    return int(round(value * (n_bins - 1)))


def label_pairs(snapshot: TrustSnapshot, n_bins: int) -> list[PairExample]:
    return [PairExample(e.trustor_id, e.trustee_id, to_bin(e.weight, n_bins), e.weight) for e in snapshot.edges]


# ----------------------------------------------------------- scoring & loss

def decode(logits: np.ndarray) -> np.ndarray:
    """Trust value of the highest-scoring bin, ``argmax / (K - 1)``."""
    logits = np.asarray(logits)
    return np.argmax(logits, axis=-1) / (logits.shape[-1] - 1)


def score_pair(model: GmModel, emb_i: Tensor, emb_j: Tensor) -> tuple[Tensor, float]:
    """Logits and decoded trust for one ordered pair of fused embeddings."""
    logits = model.head(as_tensor(emb_i), as_tensor(emb_j))
    return logits, float(decode(logits.data))


def l2_penalty(params: Sequence[Tensor]) -> Tensor:
    acc = None
    for p in params:
        sq = total(mul(p, p))
        acc = sq if acc is None else acc + sq
    return acc if acc is not None else Tensor(0.0)


def loss(logits: Tensor, target_bins, params: Sequence[Tensor] = (), l2: float = 0.0) -> Tensor:
    """Mean softmax cross-entropy plus ``l2 * sum ||theta||^2``."""
    ce = softmax_cross_entropy(logits, np.asarray(target_bins))
    if l2 == 0.0 or not params:
        return ce
    return ce + l2_penalty(params) * l2


def metrics(predictions, targets) -> tuple[float, float]:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.size == 0:
        raise ValueError(f"metrics need equal, non-empty inputs, got {p.shape} and {t.shape}")
    err = p - t
    return math.sqrt(float(np.mean(err * err))), float(np.mean(np.abs(err)))


# --------------------------------------------------------------- optimiser

class SGD:
    """Heavy-ball SGD with decoupled L2 and global gradient-norm clipping.

    The L2 term ``l2 * ||theta||^2`` is applied as a separate shrink
    ``theta -= lr * 2 * l2 * theta`` outside the momentum buffer.
    """

    def __init__(self, params: dict[str, Tensor], lr: float, momentum: float = 0.9, l2: float = 0.0,
                 clip_norm: float | None = None):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.l2 = l2
        self.clip_norm = clip_norm
        self.velocity = {k: np.zeros_like(v.data) for k, v in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def grad_norm(self) -> float:
        return math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in self.params.values() if p.grad is not None))

    def step(self) -> None:
        factor = 1.0
        if self.clip_norm is not None:
            norm = self.grad_norm()
            if norm > self.clip_norm:
                factor = self.clip_norm / norm
        for name, p in self.params.items():
            if p.grad is None:
                continue
            v = self.velocity[name]
            v *= self.momentum
            v += factor * p.grad
            if self.l2:
                p.data -= self.lr * 2.0 * self.l2 * p.data
            p.data -= self.lr * v


# ---------------------------------------------------------------- training

@dataclass
class EvalResult:
    predictions: np.ndarray
    targets: np.ndarray
    rmse: float
    mae: float
    loss: float


def _pairs_array(examples: Sequence[PairExample]) -> np.ndarray:
    return np.array([[e.trustor_id, e.trustee_id] for e in examples], dtype=np.int64).reshape(-1, 2)


def evaluate_pairs(model: GmModel, graph: HistoryGraph, examples: Sequence[PairExample],
                   batch_size: int = 512) -> EvalResult:
    preds, losses = [], []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        logits = model.pair_logits(graph, _pairs_array(chunk))
        preds.append(decode(logits.data))
        losses.append(softmax_cross_entropy(Tensor(logits.data), [e.target_bin for e in chunk]).item() * len(chunk))
    targets = np.array([e.target_value for e in examples])
    predictions = np.concatenate(preds)
    rmse, mae = metrics(predictions, targets)
    return EvalResult(predictions, targets, rmse, mae, sum(losses) / len(examples))


def run_epoch(model: GmModel, graph: HistoryGraph, examples: Sequence[PairExample], opt: SGD, cfg: TrainConfig,
              rng: np.random.Generator) -> tuple[float, float, float]:
    """One shuffled pass; returns (rmse, mae, mean loss) over the batches seen."""
    order = rng.permutation(len(examples))
    trainable = list(opt.params.values())
    preds, targets, loss_sum = [], [], 0.0
    for start in range(0, len(order), cfg.batch_size):
        batch = [examples[i] for i in order[start:start + cfg.batch_size]]
        logits = model.pair_logits(graph, _pairs_array(batch), cfg.dropout, True, rng)
        ce = loss(logits, [e.target_bin for e in batch])
        penalty = cfg.l2 * l2_penalty(trainable).item() if cfg.l2 else 0.0
        opt.zero_grad()
        ce.backward()
        opt.step()
        preds.append(decode(logits.data))
        targets.extend(e.target_value for e in batch)
        loss_sum += (ce.item() + penalty) * len(batch)
    rmse, mae = metrics(np.concatenate(preds), targets)
    return rmse, mae, loss_sum / len(examples)


@dataclass
class TrainResult:
    model: GmModel
    rows: list[tuple] = field(default_factory=list)
    selected_epochs: int = 0
    fold_best_epochs: list[int] = field(default_factory=list)
    train_pairs: list[PairExample] = field(default_factory=list)
    test_pairs: list[PairExample] = field(default_factory=list)
    test: EvalResult | None = None
    snapshots: list[TrustSnapshot] = field(default_factory=list)


def _fit(model: GmModel, graph: HistoryGraph, train: Sequence[PairExample], val: Sequence[PairExample] | None,
         cfg: TrainConfig, epochs: int, rng: np.random.Generator, fold_label: str, rows: list) -> int:
    """Train up to ``epochs``; with ``val`` stop after ``patience`` epochs without improvement.

    Returns the 1-based epoch with the lowest validation loss (or ``epochs``).
    """
    opt = SGD(model.trainable(), cfg.lr, cfg.momentum, cfg.l2, cfg.clip_norm)
    best_loss, best_epoch, waited = math.inf, 0, 0
    for epoch in range(1, epochs + 1):
        rmse, mae, tr_loss = run_epoch(model, graph, train, opt, cfg, rng)
        rows.append((fold_label, epoch, "train", rmse, mae, tr_loss))
        if val is None:
            continue
        res = evaluate_pairs(model, graph, val)
        rows.append((fold_label, epoch, "val", res.rmse, res.mae, res.loss))
        log.debug("fold %s epoch %d train %.4f val %.4f rmse %.4f", fold_label, epoch, tr_loss, res.loss, res.rmse)
        if res.loss < best_loss:
            best_loss, best_epoch, waited = res.loss, epoch, 0
        else:
            waited += 1
            if waited >= cfg.patience:
                break
    return best_epoch if val is not None else epochs


def prepare(dataset, window: WindowSpec, alpha1: float = 0.6, alpha2: float = 0.4):
    """Snapshots plus the history/label split used for training."""
    snapshots = build_snapshots(dataset, window, alpha1, alpha2)
    if window.n_slots < 2:
        raise ValueError("need at least two slots: history plus a label slot")
    return snapshots, snapshots[:-1], snapshots[-1]


def split_pairs(pairs: Sequence[PairExample], test_frac: float, seed: int):
    order = np.random.default_rng([seed, 31]).permutation(len(pairs))
    n_test = int(round(test_frac * len(pairs)))
    test = [pairs[i] for i in sorted(order[:n_test])]
    train = [pairs[i] for i in sorted(order[n_test:])]
    return train, test


def train(dataset, window: WindowSpec, cfg: TrainConfig | None = None, model_cfg: ModelConfig | None = None,
          n2v_cfg: Node2vecConfig | None = None, alpha1: float = 0.6, alpha2: float = 0.4,
          node_table: Tensor | None = None) -> TrainResult:
    cfg = cfg or TrainConfig()
    model_cfg = model_cfg or ModelConfig()
    n2v_cfg = n2v_cfg or Node2vecConfig(dim=model_cfg.d_a)
    snapshots, history, label_slot = prepare(dataset, window, alpha1, alpha2)
    pairs = label_pairs(label_slot, model_cfg.n_bins)
    if len(pairs) < cfg.min_pairs:
        raise RuntimeError(f"too few labelled pairs to train: {len(pairs)} < {cfg.min_pairs}")
    n = dataset.n_devices
    if node_table is None:
        node_table = node2vec(history, n, n2v_cfg)
    graph = HistoryGraph.from_snapshots(history, n, model_cfg.d_t)
    train_pairs, test_pairs = split_pairs(pairs, cfg.test_frac, cfg.seed)

    rows: list[tuple] = []
    best_epochs: list[int] = []
    if cfg.epochs_max > 0:
        folds = np.array_split(np.random.default_rng([cfg.seed, 32]).permutation(len(train_pairs)), cfg.folds)
        for k, val_idx in enumerate(folds):
            val_set = set(val_idx.tolist())
            fold_train = [p for i, p in enumerate(train_pairs) if i not in val_set]
            fold_val = [train_pairs[i] for i in sorted(val_set)]
            model = GmModel.create(model_cfg, node_table, window.n_slots, seed=cfg.seed * 1000 + k + 1)
            rng = np.random.default_rng([cfg.seed, 40 + k])
            best = _fit(model, graph, fold_train, fold_val, cfg, cfg.epochs_max, rng, str(k), rows)
            best_epochs.append(best)
            log.info("fold %d: best epoch %d", k, best)
    selected = int(round(float(np.mean(best_epochs)))) if best_epochs else 0

    model = GmModel.create(model_cfg, node_table, window.n_slots, seed=cfg.seed * 1000)
    _fit(model, graph, train_pairs, None, cfg, selected, np.random.default_rng([cfg.seed, 50]), "final", rows)
    test = evaluate_pairs(model, graph, test_pairs)
    rows.append(("final", "-", "test", test.rmse, test.mae, test.loss))
    log.info("selected %d epochs; test rmse %.4f mae %.4f", selected, test.rmse, test.mae)
    return TrainResult(model, rows, selected, best_epochs, train_pairs, test_pairs, test, snapshots)


# --------------------------------------------------------------- evaluation

Predictor = Callable[[Sequence[TrustSnapshot], Sequence[PairExample]], "tuple[np.ndarray, float | None]"]


def model_predictor(model: GmModel, n_devices: int) -> Predictor:
    """Adapter: predict pairs from a history of snapshots with a trained model."""

    def predict(history, examples):
        graph = HistoryGraph.from_snapshots(history, n_devices, model.config.d_t)
        res = evaluate_pairs(model, graph, examples)
        return res.predictions, res.loss

    return predict


def evaluate_slots(predict: Predictor, snapshots: Sequence[TrustSnapshot], n_bins: int = 256,
                   final_pairs: Sequence[PairExample] | None = None) -> list[tuple]:
    """Per-target-slot error rows ``(slot, history, n_pairs, rmse, mae, loss)`` plus an overall row.

    Target slot ``s`` (``1 <= s < S``) is predicted from snapshots ``0 .. s-1``.
    ``final_pairs`` restricts the last slot (e.g. to held-out test pairs).
    """
    rows = []
    all_p, all_t, loss_sum, loss_n = [], [], 0.0, 0
    for s in range(1, len(snapshots)):
        examples = label_pairs(snapshots[s], n_bins)
        if s == len(snapshots) - 1 and final_pairs is not None:
            examples = list(final_pairs)
        if not examples:
            continue
        preds, loss_value = predict(snapshots[:s], examples)
        targets = [e.target_value for e in examples]
        rmse, mae = metrics(preds, targets)
        rows.append((s, s, len(examples), rmse, mae, "-" if loss_value is None else loss_value))
        all_p.extend(preds)
        all_t.extend(targets)
        if loss_value is not None:
            loss_sum += loss_value * len(examples)
            loss_n += len(examples)
    if all_p:
        rmse, mae = metrics(all_p, all_t)
        rows.append(("all", "-", len(all_p), rmse, mae, loss_sum / loss_n if loss_n else "-"))
    return rows


EVAL_HEADER = ("slot", "history", "n_pairs", "rmse", "mae", "loss")


def write_csv(path, header: Sequence[str], rows: Sequence[tuple]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def model_scorer(model: GmModel, graph: HistoryGraph) -> Callable[[int, Sequence[int]], np.ndarray]:
    """Historical trust ``owner -> candidates`` from a trained model, as decoded values."""

    def score(owner: int, candidates: Sequence[int]) -> np.ndarray:
        pairs = np.array([[owner, c] for c in candidates], dtype=np.int64)
        return decode(model.pair_logits(graph, pairs).data)

    return score
