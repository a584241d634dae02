"""Per-shard cell classifier: embedding trunk plus a K-way output layer
trained with a sampled softmax.

Each search event has exactly one booked cell, so training treats the
event's class as the single positive and scores it against a set of
negative classes drawn uniformly without replacement from the classes
that are nobody's positive in the batch. No proposal-distribution
correction is applied. When the negative set is the entire remaining
class space (num_negatives == n_classes - 1 with one distinct positive
in the batch), the sampled loss equals the full softmax loss exactly;
tests pin that equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .features import EncodedBatch, FeaturePipeline, SHARDS
from .labels import LabelVocabulary
from .nn import (
    TrunkSpec,
    clone_params,
    ensure_finite,
    init_dense,
    init_trunk,
    log_softmax,
    sgd_update,
    trunk_backward,
    trunk_forward,
)

DTYPES = {"float32": np.float32, "float64": np.float64}

EVAL_CHUNK = 2048


@dataclass(frozen=True)
class TrainConfig:
    """Classifier hyperparameters. Defaults are the reduced desk scale."""

    embed_dim: int = 16
    hidden: tuple[int, ...] = (64, 128, 64, 32)
    learning_rate: float = 0.002
    epochs: int = 16
    patience: int = 2
    batch_size: int = 512
    num_negatives: int = 512
    seed: int = 7
    dtype: str = "float32"

    def __post_init__(self):
        if self.embed_dim < 1:
            raise ConfigError("embed_dim must be >= 1")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError("hidden widths must be >= 1")
        if not (0 < self.learning_rate < 1):
            raise ConfigError("learning_rate must lie in (0, 1)")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.num_negatives < 1:
            raise ConfigError("num_negatives must be >= 1")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(DTYPES)}")


def full_scale_config(base: TrainConfig) -> TrainConfig:
    """The production-sized variant: wider trunk, far more negatives."""
    return TrainConfig(
        embed_dim=base.embed_dim,
        hidden=(1024, 2056, 1024, 256),
        learning_rate=base.learning_rate,
        epochs=base.epochs,
        patience=base.patience,
        batch_size=base.batch_size,
        num_negatives=25000,
        seed=base.seed,
        dtype=base.dtype,
    )


def sample_negatives(rng, n_classes, targets, num_negatives) -> np.ndarray:
    """One negative class set shared by the whole batch.

    Drawn uniformly without replacement from the classes that are not a
    positive of any batch row. Raises when the request cannot be met.
    """
    distinct = np.unique(targets)
    pool_size = n_classes - distinct.size
    if num_negatives > pool_size:
        raise ConfigError(
            f"num_negatives={num_negatives} exceeds the {pool_size} classes "
            "available after excluding the batch positives"
        )
    pool = np.setdiff1d(np.arange(n_classes), distinct, assume_unique=True)
    return rng.choice(pool, size=num_negatives, replace=False)


def sampled_loss_and_grads(params, spec, categorical, continuous, targets, negatives):
    """Mean sampled-softmax loss and gradients for every parameter.

    Each row's candidate columns are its own positive followed by the
    shared negatives; the loss is the cross entropy of column 0.
    """
    n = targets.size
    if n == 0:
        raise DataError("empty batch")
    h, cache = trunk_forward(params, spec, categorical, continuous)
    out_w = params["out_w"]
    out_b = params["out_b"]
    pos_w = out_w[:, targets]  # (H, N)
    pos_logit = np.einsum("nh,hn->n", h, pos_w) + out_b[targets]
    neg_logits = h @ out_w[:, negatives] + out_b[negatives]
    logits = np.concatenate([pos_logit[:, None], neg_logits], axis=1)
    lsm = log_softmax(logits)
    loss = float(-lsm[:, 0].mean())

    dlogits = np.exp(lsm)
    dlogits[:, 0] -= 1.0
    dlogits /= n
    grads: dict[str, np.ndarray] = {}
    g_out_w = np.zeros_like(out_w)
    g_out_b = np.zeros_like(out_b)
    # Positive columns may repeat across rows, so scatter-add per row.
    np.add.at(g_out_w.T, targets, dlogits[:, :1] * h)
    np.add.at(g_out_b, targets, dlogits[:, 0])
    # Negative columns are distinct, so fancy indexing adds safely.
    g_out_w[:, negatives] += h.T @ dlogits[:, 1:]
    g_out_b[negatives] += dlogits[:, 1:].sum(axis=0)
    dh = dlogits[:, :1] * pos_w.T + dlogits[:, 1:] @ out_w[:, negatives].T
    trunk_backward(params, spec, cache, dh, grads)
    grads["out_w"] = g_out_w
    grads["out_b"] = g_out_b
    return loss, grads, logits


def full_loss_and_grads(params, spec, categorical, continuous, targets):
    """Mean full-softmax cross entropy and gradients."""
    n = targets.size
    if n == 0:
        raise DataError("empty batch")
    h, cache = trunk_forward(params, spec, categorical, continuous)
    logits = h @ params["out_w"] + params["out_b"]
    lsm = log_softmax(logits)
    rows = np.arange(n)
    loss = float(-lsm[rows, targets].mean())

    dlogits = np.exp(lsm)
    dlogits[rows, targets] -= 1.0
    dlogits /= n
    grads: dict[str, np.ndarray] = {}
    grads_out_w = h.T @ dlogits
    grads_out_b = dlogits.sum(axis=0)
    dh = dlogits @ params["out_w"].T
    trunk_backward(params, spec, cache, dh, grads)
    grads["out_w"] = grads_out_w
    grads["out_b"] = grads_out_b
    return loss, grads, logits


def _shard_index(shard: str) -> int:
    try:
        return SHARDS.index(shard)
    except ValueError:
        raise ConfigError(f"unknown shard {shard!r}") from None


class ShardModel:
    """One shard's classifier: parameters, class space, and train state."""

    def __init__(self, config, spec, vocab, params, rng, trained=False, train_log=None):
        self.config = config
        self.spec = spec
        self.vocab = vocab
        self.params = params
        self._rng = rng
        self.trained = trained
        self.train_log = [] if train_log is None else train_log
        self.best_epoch = -1

    @classmethod
    def build(cls, config: TrainConfig, pipeline: FeaturePipeline, vocab: LabelVocabulary):
        emb_names = pipeline.categorical_names
        sizes = pipeline.vocab_sizes()
        spec = TrunkSpec(
            emb_names=emb_names,
            emb_rows=tuple(sizes[name] for name in emb_names),
            emb_dim=config.embed_dim,
            n_continuous=pipeline.n_continuous(),
            hidden=tuple(config.hidden),
        )
        dtype = DTYPES[config.dtype]
        rng = np.random.default_rng((config.seed, _shard_index(vocab.shard)))
        params = init_trunk(rng, spec, dtype)
        params["out_w"], params["out_b"] = init_dense(
            rng, spec.output_dim, len(vocab), dtype
        )
        return cls(config, spec, vocab, params, rng)

    @property
    def shard(self) -> str:
        return self.vocab.shard

    @property
    def n_classes(self) -> int:
        return len(self.vocab)

    def train_step(self, categorical, continuous, targets, rng) -> float:
        """One SGD step on a batch; returns the loss before the update."""
        negatives = sample_negatives(
            rng, self.n_classes, targets, self.config.num_negatives
        )
        loss, grads, logits = sampled_loss_and_grads(
            self.params, self.spec, categorical, continuous, targets, negatives
        )
        ensure_finite("training logits", logits, log=self.train_log)
        if not np.isfinite(loss):
            raise NumericError("training loss diverged", log=self.train_log)
        sgd_update(self.params, grads, self.config.learning_rate)
        return loss

    def _targets_of(self, batch: EncodedBatch):
        """Class indices for a batch; rows with out-of-vocabulary booked
        cells are dropped and counted."""
        idx = self.vocab.lookup_array(batch.booked_cells)
        keep = idx >= 0
        if not keep.any():
            raise DataError(
                f"no {self.shard} events have in-vocabulary booked cells"
            )
        return batch.take(np.flatnonzero(keep)), idx[keep], int((~keep).sum())

    def fit(self, batch: EncodedBatch, val_batch: EncodedBatch | None = None):
        """Mini-batch SGD with early stopping on held-out cross entropy.

        Without an explicit val_batch, 10% of the rows (at least one) are
        held out. The parameters from the best validation epoch are kept.
        Returns the per-epoch log.
        """
        cfg = self.config
        rng = self._rng
        batch, targets, dropped = self._targets_of(batch)
        if val_batch is None:
            n = targets.size
            if n < 2:
                raise DataError("need at least 2 events to split off validation")
            perm = rng.permutation(n)
            n_val = max(1, int(round(0.1 * n)))
            val_idx, train_idx = perm[:n_val], perm[n_val:]
            val_cat = batch.categorical[val_idx]
            val_cont = batch.continuous[val_idx]
            val_y = targets[val_idx]
            cat = batch.categorical[train_idx]
            cont = batch.continuous[train_idx]
            y = targets[train_idx]
        else:
            vb, val_y, _ = self._targets_of(val_batch)
            val_cat, val_cont = vb.categorical, vb.continuous
            cat, cont, y = batch.categorical, batch.continuous, targets

        log: list[dict] = []
        self.train_log = log
        best_ce = np.inf
        best_params = None
        bad_epochs = 0
        for epoch in range(cfg.epochs):
            order = rng.permutation(y.size)
            losses = []
            for start in range(0, order.size, cfg.batch_size):
                rows = order[start : start + cfg.batch_size]
                losses.append(
                    self.train_step(cat[rows], cont[rows], y[rows], rng)
                )
            val_ce = self._cross_entropy(val_cat, val_cont, val_y)
            if not np.isfinite(val_ce):
                raise NumericError("validation cross entropy diverged", log=log)
            log.append(
                {
                    "epoch": epoch,
                    "train_loss": float(np.mean(losses)),
                    "val_ce": val_ce,
                    "dropped_events": dropped if epoch == 0 else 0,
                }
            )
            if val_ce < best_ce:
                best_ce = val_ce
                best_params = clone_params(self.params)
                self.best_epoch = epoch
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= cfg.patience:
                    break
        if best_params is not None:
            self.params = best_params
        self.trained = True
        return log

    def _cross_entropy(self, categorical, continuous, targets) -> float:
        """Full-softmax cross entropy, computed in row chunks. The
        log-softmax and the sum run in float64 whatever the model dtype,
        so the metric is not polluted by accumulation rounding."""
        total = 0.0
        n = targets.size
        for start in range(0, n, EVAL_CHUNK):
            sl = slice(start, min(start + EVAL_CHUNK, n))
            h, _ = trunk_forward(
                self.params, self.spec, categorical[sl], continuous[sl]
            )
            logits = h @ self.params["out_w"] + self.params["out_b"]
            lsm = log_softmax(logits.astype(np.float64))
            total -= float(lsm[np.arange(targets[sl].size), targets[sl]].sum())
        return total / n

    def eval_cross_entropy(self, batch: EncodedBatch) -> float:
        """Mean cross entropy over the batch rows with in-vocabulary
        booked cells."""
        batch, targets, _ = self._targets_of(batch)
        return self._cross_entropy(batch.categorical, batch.continuous, targets)

    def predict_probs(self, batch: EncodedBatch) -> np.ndarray:
        """(N, n_classes) class probabilities. Callers chunk large batches."""
        h, _ = trunk_forward(
            self.params, self.spec, batch.categorical, batch.continuous
        )
        logits = h @ self.params["out_w"] + self.params["out_b"]
        ensure_finite("prediction logits", logits)
        return np.exp(log_softmax(logits))

    def with_zeroed_output(self) -> "ShardModel":
        """A copy whose output layer is explicitly zeroed, so every class
        gets probability 1/n_classes. Diagnostic: its cross entropy must
        equal ln(n_classes) on any batch."""
        params = clone_params(self.params)
        params["out_w"][:] = 0.0
        params["out_b"][:] = 0.0
        twin = ShardModel(
            self.config,
            self.spec,
            self.vocab,
            params,
            np.random.default_rng((self.config.seed, _shard_index(self.shard))),
            trained=self.trained,
            train_log=list(self.train_log),
        )
        twin.best_epoch = self.best_epoch
        return twin
