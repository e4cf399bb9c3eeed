"""Losses, Adam, per-fold training, and cross-validation aggregation."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tape, Tensor
from .data import Dataset, FoldPlan
from .layers import row_normalized
from .model import TapNet, TapNetConfig, build_tapnet


@dataclass
class TrainConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2_coeff: float = 0.0008
    epochs: int = 200
    batch_size: int = 32
    aux_weight: float = 0.0
    seed: int = 0

    def validate(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.l2_coeff < 0:
            raise ValueError(f"l2_coeff must be non-negative, got {self.l2_coeff}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def classification_loss(logits: Tensor, label: int) -> Tensor:
    return ad.cross_entropy_logits(logits, label)


def aux_link_loss(tape: Tape, similarities) -> Tensor:
    """Cross-entropy between row-softmaxed similarity and the row-normalized
    self-looped adjacency, averaged over n^2 entries, then over stages."""
    if not similarities:
        return tape.constant(np.zeros((1, 1)))
    stage_losses = []
    for r, adjacency in similarities:
        n = adjacency.shape[0]
        if r.shape != (n, n):
            raise ad.DimensionError(
                f"similarity shape {r.shape} does not match adjacency {adjacency.shape}"
            )
        target = tape.constant(-row_normalized(adjacency))
        probs = ad.softmax_rows(r)
        ce = ad.sum_all(ad.mul(ad.log(probs), target))
        stage_losses.append(ad.scale(ce, 1.0 / (n * n)))
    total = stage_losses[0]
    for extra in stage_losses[1:]:
        total = ad.add(total, extra)
    return ad.scale(total, 1.0 / len(stage_losses))


class Adam:
    """Bias-corrected Adam; L2 is added to the gradient before the update."""

    def __init__(self, params: list[Parameter], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]
        self.t = 0

    def step(self):
        cfg = self.cfg
        self.t += 1
        b1c = 1.0 - cfg.beta1**self.t
        b2c = 1.0 - cfg.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad + cfg.l2_coeff * p.value
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p.value = p.value - cfg.lr * (m / b1c) / (np.sqrt(v / b2c) + cfg.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


@dataclass
class FoldResult:
    fold_id: int
    train_loss: list[float]
    train_acc: list[float]
    test_acc: list[float]
    best_epoch: int
    best_params: dict[str, np.ndarray]
    model_seed: int = 0
    trained_graphs: set = field(default_factory=set)


@dataclass
class CvReport:
    dataset: str
    folds: list[dict]  # per-fold curves
    selected_epoch: int
    mean_accuracy: float
    std_accuracy: float
    wall_clock_seconds: float
    model_config: dict
    train_config: dict

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(model: TapNet, dataset: Dataset, indices) -> float:
    correct = 0
    for i in indices:
        g = dataset.graphs[i]
        out = model.forward(g, training=False)
        if int(np.argmax(out.logits.value[0])) == g.label:
            correct += 1
    return correct / len(indices) if indices else 0.0


def train_fold(
    dataset: Dataset,
    fold_plan: FoldPlan,
    fold_id: int,
    model_cfg: TapNetConfig,
    train_cfg: TrainConfig,
) -> FoldResult:
    """Train on the 9 complementary folds, evaluate the held-out fold each
    epoch. Minibatches accumulate per-graph gradients (mean loss)."""
    train_cfg.validate()
    num_folds = len(fold_plan.folds)
    if not 0 <= fold_id < num_folds:
        raise ValueError(f"fold_id {fold_id} out of range [0, {num_folds})")
    test_idx = list(fold_plan.folds[fold_id])
    train_idx = [
        i for f, fold in enumerate(fold_plan.folds) if f != fold_id for i in fold
    ]
    seed_seq = np.random.SeedSequence([train_cfg.seed, fold_id])
    model_seed = int(seed_seq.generate_state(1)[0])
    model = build_tapnet(model_cfg, dataset.feature_dim, dataset.num_classes, model_seed)
    rng = np.random.default_rng(seed_seq.spawn(1)[0])
    opt = Adam(model.parameters(), train_cfg)

    result = FoldResult(
        fold_id, [], [], [], best_epoch=0, best_params={}, model_seed=model_seed
    )
    best_acc = -1.0
    aux_on = train_cfg.aux_weight > 0.0
    for epoch in range(train_cfg.epochs):
        order = np.array(train_idx)
        rng.shuffle(order)
        epoch_loss = 0.0
        epoch_correct = 0
        for start in range(0, len(order), train_cfg.batch_size):
            batch = order[start : start + train_cfg.batch_size]
            opt.zero_grad()
            inv = 1.0 / len(batch)
            for i in batch:
                g = dataset.graphs[int(i)]
                tape = Tape()
                out = model.forward(g, training=True, tape=tape, rng=rng)
                loss = classification_loss(out.logits, g.label)
                if aux_on and out.similarities:
                    loss = ad.add(
                        loss,
                        ad.scale(
                            aux_link_loss(tape, out.similarities), train_cfg.aux_weight
                        ),
                    )
                epoch_loss += float(loss.value[0, 0])
                loss = ad.scale(loss, inv)
                tape.backward(loss)
                result.trained_graphs.add(int(i))
                if int(np.argmax(out.logits.value[0])) == g.label:
                    epoch_correct += 1
            opt.step()
        result.train_loss.append(epoch_loss / len(order))
        result.train_acc.append(epoch_correct / len(order))
        test_acc = evaluate(model, dataset, test_idx)
        result.test_acc.append(test_acc)
        if test_acc > best_acc:
            best_acc = test_acc
            result.best_epoch = epoch
            result.best_params = {p.name: p.value.copy() for p in model.parameters()}
    return result


def _fold_worker(args):
    dataset, fold_plan, fold_id, model_cfg, train_cfg = args
    return train_fold(dataset, fold_plan, fold_id, model_cfg, train_cfg)


def cross_validate(
    dataset: Dataset,
    fold_plan: FoldPlan,
    model_cfg: TapNetConfig,
    train_cfg: TrainConfig,
    jobs: int = 1,
) -> tuple[CvReport, list[FoldResult]]:
    """Run every fold; report mean/std of test accuracy at the epoch that
    maximizes the mean test curve across folds."""
    start = time.time()
    num_folds = len(fold_plan.folds)
    tasks = [(dataset, fold_plan, f, model_cfg, train_cfg) for f in range(num_folds)]
    if jobs > 1:
        import concurrent.futures

        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fold_worker, tasks))
    else:
        results = [_fold_worker(t) for t in tasks]
    curves = np.array([r.test_acc for r in results])  # folds x epochs
    mean_curve = curves.mean(axis=0)
    selected_epoch = int(np.argmax(mean_curve))
    fold_accs = curves[:, selected_epoch]
    report = CvReport(
        dataset=dataset.name,
        folds=[
            {
                "fold": r.fold_id,
                "train_loss": r.train_loss,
                "train_acc": r.train_acc,
                "test_acc": r.test_acc,
                "best_epoch": r.best_epoch,
            }
            for r in results
        ],
        selected_epoch=selected_epoch,
        mean_accuracy=float(fold_accs.mean()),
        std_accuracy=float(fold_accs.std()),
        wall_clock_seconds=time.time() - start,
        model_config=asdict(model_cfg),
        train_config=asdict(train_cfg),
    )
    return report, results
