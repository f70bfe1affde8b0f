"""Noise-robust training loops: vanilla, co-teaching, and co-teaching with
active label swapping.

The two-network algorithms cross-teach: each network ranks the mini-batch
by its own per-sample loss on the labels as given, keeps the low-loss
fraction R as presumed-clean, and (swap variant) additionally takes the
top-loss fraction S, flips those binary labels, and hands the union to the
peer for one SGD step. Selections always use pre-update parameters, so the
two updates per iteration are order-independent and the whole loop is
bitwise reproducible from its seeds.

R follows a schedule that starts at 1 (first epoch trains on everything)
and decays linearly to a floor of 1 - tau_f at epoch t_k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, NumericError
from .data import MaskDataset
from .metrics import PRF1, confusion, prf1
from .nn import Batch, Network, NetworkSpec, init_network, per_sample_loss, predict, sgd_step

__all__ = [
    "TrainConfig",
    "EpochRecord",
    "TrainResult",
    "IterationDiag",
    "ALGORITHMS",
    "remember_rate",
    "select_clean",
    "select_swap",
    "flip_labels",
    "coteaching_iteration",
    "canc_iteration",
    "train",
    "predict_dataset",
    "dataset_metrics",
]

ALGORITHMS = ("vanilla", "coteaching", "canc")
SWAP_MODES = ("fixed", "one_minus_r")
_PREDICT_CHUNK = 512  # fixed so rerun predictions are bitwise identical


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs besides the data and architecture."""

    algo: str = "canc"
    lr: float = 0.05
    t_max: int = 30
    t_k: int = 10
    batch_size: int = 64
    n_max: int = 0  # iterations per epoch; 0 means ceil(n_train / batch_size)
    tau_f: float = 0.45
    swap_rate: float = 0.05
    swap_mode: str = "fixed"
    persist_swaps: bool = False
    shuffle_seed: int = 0
    init_seed_1: int = 1
    init_seed_2: int = 2

    def __post_init__(self):
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algo!r}, expected one of {ALGORITHMS}")
        if self.swap_mode not in SWAP_MODES:
            raise ConfigError(f"unknown swap mode {self.swap_mode!r}")
        if self.lr < 0:
            raise ConfigError("learning rate must be >= 0")
        if self.t_max < 1 or self.t_k < 1:
            raise ConfigError("t_max and t_k must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.n_max < 0:
            raise ConfigError("n_max must be >= 0 (0 derives it from the data)")
        if not 0.0 <= self.tau_f < 1.0:
            raise ConfigError("tau_f must be in [0,1)")
        if not 0.0 <= self.swap_rate <= 1.0:
            raise ConfigError("swap_rate must be in [0,1]")
        # keeps clean and swap sets disjoint even once R bottoms out at
        # 1 - tau_f; the one_minus_r ablation pins S to the schedule instead
        if self.algo == "canc" and self.swap_mode == "fixed" and self.swap_rate > self.tau_f:
            raise ConfigError(
                f"swap_rate {self.swap_rate} must not exceed tau_f {self.tau_f}"
            )


@dataclass(frozen=True)
class EpochRecord:
    """Per-epoch training diagnostics plus metrics on both splits.

    Metrics come from whichever network scored higher model-selection
    accuracy that epoch (ties go to network 1). Train-split metrics compare
    against the stored (noisy) labels, the only ones a trainer may see.
    """

    epoch: int
    remember_rate: float
    swap_rate: float
    n_clean: int
    n_swapped: int
    swap_correct_fraction: float
    train_metrics: PRF1
    modelsel_metrics: PRF1


@dataclass(frozen=True, eq=False)
class IterationDiag:
    """Batch-local index sets chosen in one cross-teaching iteration.

    clean_for_m2/swap_for_m2 were selected by network 1 (they update
    network 2), and vice versa.
    """

    clean_for_m2: np.ndarray
    swap_for_m2: np.ndarray
    clean_for_m1: np.ndarray
    swap_for_m1: np.ndarray


@dataclass(frozen=True, eq=False)
class TrainResult:
    best_network: Network
    best_epoch: int
    best_accuracy: float
    final_networks: tuple
    records: tuple

    @property
    def final_modelsel_accuracy(self) -> float:
        return self.records[-1].modelsel_metrics.accuracy


def remember_rate(t: int, t_k: int, tau_f: float) -> float:
    """R(t) = 1 - min(t/t_k * tau_f, tau_f): 1 at t=0, floor 1-tau_f from t_k on."""
    if t_k < 1:
        raise ConfigError("t_k must be >= 1")
    if t < 0:
        raise ConfigError("epoch index must be >= 0")
    return 1.0 - min(t / t_k * tau_f, tau_f)


def _check_losses(losses) -> np.ndarray:
    v = np.asarray(losses, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ConfigError("losses must be a non-empty vector")
    if not np.all(np.isfinite(v)):
        raise NumericError("non-finite loss encountered during selection")
    return v


def select_clean(losses, r: float) -> np.ndarray:
    """Indices of the max(1, floor(r*n)) smallest losses, ascending index
    order; loss ties resolve to the lower index."""
    v = _check_losses(losses)
    if not 0.0 < r <= 1.0:
        raise ConfigError(f"remember rate must be in (0,1], got {r}")
    k = max(1, int(math.floor(r * v.size)))
    chosen = np.argsort(v, kind="stable")[:k]
    return np.sort(chosen)


def select_swap(losses, s: float) -> np.ndarray:
    """Indices of the floor(s*n) largest losses, ascending index order;
    loss ties resolve to the lower index."""
    v = _check_losses(losses)
    if not 0.0 <= s <= 1.0:
        raise ConfigError(f"swap rate must be in [0,1], got {s}")
    k = int(math.floor(s * v.size))
    chosen = np.argsort(-v, kind="stable")[:k]
    return np.sort(chosen)


def flip_labels(labels, idx) -> np.ndarray:
    """Copy of the binary label vector with 1 - label at each idx."""
    y = np.asarray(labels, dtype=np.int64).copy()
    sel = np.asarray(idx, dtype=np.int64)
    if sel.size:
        if sel.min() < 0 or sel.max() >= y.size:
            raise IndexError(f"flip index outside [0,{y.size})")
        y[sel] = 1 - y[sel]
    return y


def _teaching_batch(batch: Batch, clean_idx, swap_idx) -> Batch:
    """Assemble the peer's update batch: clean samples as labeled, swap
    samples with flipped labels, in that order."""
    flipped = flip_labels(batch.y, swap_idx)
    x = np.concatenate([batch.x[clean_idx], batch.x[swap_idx]])
    y = np.concatenate([batch.y[clean_idx], flipped[swap_idx]])
    return Batch(x=x, y=y, indices=np.concatenate([batch.indices[clean_idx], batch.indices[swap_idx]]))


def _select_sets(losses, r: float, s: float) -> tuple:
    clean = select_clean(losses, r)
    swap = select_swap(losses, s)
    # loss ties plus the 1-sample clean floor can collide the sets; the
    # swap decision wins and the index leaves the clean set
    if swap.size and clean.size:
        clean = np.setdiff1d(clean, swap, assume_unique=True)
        if clean.size == 0:
            clean = np.setdiff1d(select_clean(losses, 1.0), swap, assume_unique=True)[:1]
    return clean, swap


def coteaching_iteration(m1: Network, m2: Network, batch: Batch, r: float, lr: float):
    """One cross-teaching step without swapping: each network's low-loss
    picks update the other network."""
    losses_1 = per_sample_loss(m1, batch)
    losses_2 = per_sample_loss(m2, batch)
    clean_1 = select_clean(losses_1, r)
    clean_2 = select_clean(losses_2, r)
    m2_new = sgd_step(m2, Batch(batch.x[clean_1], batch.y[clean_1], batch.indices[clean_1]), lr)
    m1_new = sgd_step(m1, Batch(batch.x[clean_2], batch.y[clean_2], batch.indices[clean_2]), lr)
    empty = np.empty(0, dtype=np.int64)
    return m1_new, m2_new, IterationDiag(clean_1, empty, clean_2, empty)


def canc_iteration(
    m1: Network,
    m2: Network,
    batch: Batch,
    r: float,
    s: float,
    lr: float,
    allow_overlap: bool = False,
):
    """One cross-teaching step with active label swapping.

    Each network ranks the batch by its own per-sample loss on the labels
    as given, takes the low-loss fraction r as clean and the top-loss
    fraction s for flipping, and the peer does one SGD step on the union.
    Both rankings use pre-update parameters. s may exceed 1 - r only when
    allow_overlap is set (schedule-coupled ablation); any clean/swap
    collision resolves in favor of the swap.
    """
    if not allow_overlap and s > 1.0 - r + 1e-12:
        raise ConfigError(f"swap rate {s} exceeds 1 - remember rate {1.0 - r}")
    losses_1 = per_sample_loss(m1, batch)
    losses_2 = per_sample_loss(m2, batch)
    clean_1, swap_1 = _select_sets(losses_1, r, s)
    clean_2, swap_2 = _select_sets(losses_2, r, s)
    m2_new = sgd_step(m2, _teaching_batch(batch, clean_1, swap_1), lr)
    m1_new = sgd_step(m1, _teaching_batch(batch, clean_2, swap_2), lr)
    return m1_new, m2_new, IterationDiag(clean_1, swap_1, clean_2, swap_2)


def predict_dataset(net: Network, patches: np.ndarray) -> np.ndarray:
    """Predict a whole collection in fixed-size chunks so the result is
    independent of available memory and bitwise stable across reruns."""
    out = np.empty(len(patches), dtype=np.int64)
    for start in range(0, len(patches), _PREDICT_CHUNK):
        out[start : start + _PREDICT_CHUNK] = predict(net, patches[start : start + _PREDICT_CHUNK])
    return out


def dataset_metrics(net: Network, ds: MaskDataset) -> PRF1:
    """Metrics of one network against the dataset's stored labels."""
    return prf1(confusion(ds.labels, predict_dataset(net, ds.patches)))


def _epoch_batches(rng, n: int, batch_size: int, n_max: int):
    """n_max index chunks for one epoch; reshuffles whenever a permutation
    runs out, so any n_max stays deterministic in the rng state."""
    chunks = []
    while len(chunks) < n_max:
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            chunks.append(perm[start : start + batch_size])
    return chunks[:n_max]


def train(
    train_ds: MaskDataset,
    modelsel_ds: MaskDataset,
    net_spec: NetworkSpec,
    config: TrainConfig,
) -> TrainResult:
    """Run one training job and return the best snapshot by model-selection
    accuracy plus all epoch records.

    vanilla trains one network on every label as given. coteaching and canc
    train two networks that cross-teach; canc additionally swaps top-loss
    labels at the configured rate. With persist_swaps, flips write back to
    a private working copy of the labels (the input dataset is untouched).
    """
    if len(train_ds) == 0 or len(modelsel_ds) == 0:
        raise ConfigError("train and model-selection sets must be non-empty")
    n = len(train_ds)
    n_max = config.n_max if config.n_max > 0 else -(-n // config.batch_size)
    shuffle_rng = np.random.default_rng(config.shuffle_seed)

    net1 = init_network(replace(net_spec, seed=config.init_seed_1))
    nets = [net1]
    if config.algo != "vanilla":
        nets.append(init_network(replace(net_spec, seed=config.init_seed_2)))

    labels_work = train_ds.labels.copy()
    clean_ref = train_ds.clean_labels  # may be None; diagnostics only

    best_net, best_epoch, best_acc = nets[0], -1, -np.inf
    records = []
    for epoch in range(config.t_max):
        r = remember_rate(epoch, config.t_k, config.tau_f)
        if config.algo != "canc":
            s_eff = 0.0
        elif config.swap_mode == "one_minus_r":
            s_eff = 1.0 - r
        else:
            s_eff = min(config.swap_rate, 1.0 - r)

        n_clean = n_swapped = n_swap_correct = 0
        for idx in _epoch_batches(shuffle_rng, n, config.batch_size, n_max):
            batch = Batch(train_ds.patches[idx], labels_work[idx], idx)
            if config.algo == "vanilla":
                nets[0] = sgd_step(nets[0], batch, config.lr)
                n_clean += len(batch)
                continue
            if config.algo == "coteaching":
                nets[0], nets[1], diag = coteaching_iteration(
                    nets[0], nets[1], batch, r, config.lr
                )
            else:
                nets[0], nets[1], diag = canc_iteration(
                    nets[0],
                    nets[1],
                    batch,
                    r,
                    s_eff,
                    config.lr,
                    allow_overlap=config.swap_mode == "one_minus_r",
                )
            n_clean += len(diag.clean_for_m2) + len(diag.clean_for_m1)
            n_swapped += len(diag.swap_for_m2) + len(diag.swap_for_m1)
            swapped_local = np.concatenate([diag.swap_for_m2, diag.swap_for_m1])
            if swapped_local.size:
                flipped = 1 - batch.y[swapped_local]
                if clean_ref is not None:
                    n_swap_correct += int(np.sum(flipped == clean_ref[idx[swapped_local]]))
                if config.persist_swaps:
                    uniq = np.unique(idx[swapped_local])
                    labels_work[uniq] = 1 - labels_work[uniq]

        # epoch bookkeeping: score both networks on the model-selection
        # split, keep the better one's metrics (tie -> network 1)
        modelsel_all = [dataset_metrics(net, modelsel_ds) for net in nets]
        pick = 0
        if len(nets) == 2 and modelsel_all[1].accuracy > modelsel_all[0].accuracy:
            pick = 1
        train_metrics = dataset_metrics(nets[pick], train_ds)
        swap_fraction = n_swap_correct / n_swapped if (n_swapped and clean_ref is not None) else math.nan
        records.append(
            EpochRecord(
                epoch=epoch,
                remember_rate=r,
                swap_rate=s_eff,
                n_clean=n_clean,
                n_swapped=n_swapped,
                swap_correct_fraction=swap_fraction,
                train_metrics=train_metrics,
                modelsel_metrics=modelsel_all[pick],
            )
        )
        if modelsel_all[pick].accuracy > best_acc:
            best_net, best_epoch, best_acc = nets[pick], epoch, modelsel_all[pick].accuracy

    return TrainResult(
        best_network=best_net,
        best_epoch=best_epoch,
        best_accuracy=float(best_acc),
        final_networks=tuple(nets),
        records=tuple(records),
    )
