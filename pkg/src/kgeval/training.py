"""Self-adversarial negative-sampling training with a row-sparse Adagrad.

Each step draws ``batch_size`` training triples, corrupts the head or tail
of every positive (fair coin per positive) with ``neg_per_pos`` uniformly
drawn entities, drops corruptions that are themselves training triples, and
minimizes

    softplus(-s_pos) + sum_i w_i * softplus(s_neg_i)

averaged over the batch, where ``w = softmax(adversarial_temperature * s_neg)``
is treated as a constant.  An L3 penalty on the touched rows is added when
``regularization_coeff > 0``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass
from importlib import resources

import numpy as np

from kgeval.graph import KnowledgeGraph
from kgeval.models import ROTATE, ModelParams, canonical_family, init_params, score_grads

logger = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    def __init__(self, step: int, what: str):
        super().__init__(f"non-finite {what} detected at step {step}")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 200
    batch_size: int = 1024
    neg_per_pos: int = 256
    learning_rate: float = 0.1
    steps: int = 1000
    gamma: float = 12.0
    adversarial_temperature: float = 1.0
    regularization_coeff: float = 1e-9
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        for name in ("dim", "batch_size", "neg_per_pos", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("learning_rate", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("steps", "adversarial_temperature", "regularization_coeff"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        fields = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key not in fields:
                raise ValueError(f"unknown config key {key!r}")
            default = getattr(cls, key)
            kwargs[key] = type(default)(value)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        return cls.from_dict(read_config(path))


def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key] = value
    return out


def bundled_config(name: str) -> str:
    """Path of a config shipped in ``kgeval/configs`` (``toy``, ``fb15k237``, ...)."""
    return str(resources.files("kgeval") / "configs" / f"{name}.cfg")


def max_workers() -> int:
    cap = os.environ.get("KGE_EVAL_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


class _Adagrad:
    def __init__(self, table: np.ndarray, lr: float):
        self.table = table
        self.state = np.zeros_like(table)
        self.lr = lr

    def update(self, rows: np.ndarray, grads: np.ndarray) -> None:
        rows = rows.ravel()
        grads = grads.reshape(len(rows), -1)
        order = np.argsort(rows, kind="stable")
        rows = rows[order]
        starts = np.flatnonzero(np.r_[True, rows[1:] != rows[:-1]])
        uniq = rows[starts]
        # segment sums over sorted rows; np.add.at is far slower on 2-d input
        acc = np.add.reduceat(grads[order].astype(np.float64, copy=False), starts, axis=0)
        self.state[uniq] += (acc * acc).astype(self.state.dtype)
        step = self.lr * acc / (np.sqrt(self.state[uniq]) + 1e-10)
        self.table[uniq] -= step.astype(self.table.dtype)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def loss_and_grads(
    p: ModelParams,
    pos: np.ndarray,
    neg_heads: np.ndarray,
    neg_tails: np.ndarray,
    cfg: TrainConfig,
    neg_mask: np.ndarray | None = None,
):
    """Batch loss plus row gradients.

    ``neg_heads``/``neg_tails`` are ``(B, N)`` entity ids of the corrupted
    triples (the uncorrupted slot repeats the positive's entity).
    ``neg_mask`` marks the corruptions to use; masked-out entries get zero
    weight and the remaining weights of the row are renormalized.
    """
    ent, rel = p.entity_emb, p.relation_emb
    B = len(pos)
    h, r, t = ent[pos[:, 0]], rel[pos[:, 1]], ent[pos[:, 2]]
    s_pos, dh_p, dr_p, dt_p = score_grads(p.family, h, r, t, p.gamma)
    nh, nt = ent[neg_heads], ent[neg_tails]
    s_neg, dh_n, dr_n, dt_n = score_grads(p.family, nh, r[:, None, :], nt, p.gamma)

    mask = np.ones(s_neg.shape, dtype=bool) if neg_mask is None else neg_mask
    if cfg.adversarial_temperature > 0:
        z = np.where(mask, cfg.adversarial_temperature * s_neg, -np.inf)
        top = z.max(axis=1, keepdims=True)
        w = np.exp(z - np.where(np.isfinite(top), top, 0.0))
    else:
        w = mask.astype(s_neg.dtype)
    total = w.sum(axis=1, keepdims=True)
    w = np.divide(w, total, out=np.zeros_like(w), where=total > 0)

    loss = 0.5 * (_softplus(-s_pos).mean() + (w * _softplus(s_neg)).sum(1).mean())
    g_pos = (-0.5 / B) * _sigmoid(-s_pos)
    g_neg = (0.5 / B) * w * _sigmoid(s_neg)

    ent_rows = [pos[:, 0], pos[:, 2], neg_heads.ravel(), neg_tails.ravel()]
    ent_grads = [
        g_pos[:, None] * dh_p,
        g_pos[:, None] * dt_p,
        (g_neg[..., None] * dh_n).reshape(-1, ent.shape[1]),
        (g_neg[..., None] * dt_n).reshape(-1, ent.shape[1]),
    ]
    rel_grad = g_pos[:, None] * dr_p + (g_neg[..., None] * dr_n).sum(1)
    rel_rows = [pos[:, 1]]
    rel_grads = [rel_grad]

    coeff = cfg.regularization_coeff
    if coeff > 0:
        loss += coeff * (np.abs(h) ** 3 + np.abs(t) ** 3).sum() / B
        ent_rows += [pos[:, 0], pos[:, 2]]
        ent_grads += [3 * coeff / B * h * np.abs(h), 3 * coeff / B * t * np.abs(t)]
        if p.family != ROTATE:
            loss += coeff * (np.abs(r) ** 3).sum() / B
            rel_rows.append(pos[:, 1])
            rel_grads.append(3 * coeff / B * r * np.abs(r))
    return (
        float(loss),
        (np.concatenate(ent_rows), np.concatenate(ent_grads)),
        (np.concatenate(rel_rows), np.concatenate(rel_grads)),
    )


def _is_member(sorted_keys: np.ndarray, keys: np.ndarray) -> np.ndarray:
    if not len(sorted_keys):
        return np.zeros(keys.shape, dtype=bool)
    idx = np.searchsorted(sorted_keys, keys).clip(max=len(sorted_keys) - 1)
    return sorted_keys[idx] == keys


def sample_negatives(rng: np.random.Generator, pos: np.ndarray, num_entities: int, n: int):
    """Corrupt the head or the tail of each positive (fair coin) with ``n``
    uniformly drawn entities; returns ``(neg_heads, neg_tails)``."""
    B = len(pos)
    corrupt_head = rng.random(B) < 0.5
    ids = rng.integers(0, num_entities, size=(B, n))
    neg_heads = np.where(corrupt_head[:, None], ids, pos[:, [0]])
    neg_tails = np.where(corrupt_head[:, None], pos[:, [2]], ids)
    return neg_heads, neg_tails


def train(
    g: KnowledgeGraph,
    cfg: TrainConfig,
    family: str,
    init: ModelParams | None = None,
    log_every: int = 0,
) -> ModelParams:
    """Train a model on the train split of ``g``.

    With ``cfg.workers == 1`` the parameter trajectory is a pure function of
    ``cfg.seed``.  More workers run hogwild-style on shared tables (lock-free,
    nondeterministic).  The per-step loss history is kept in
    ``params.meta["loss_history"]``.
    """
    family = canonical_family(family)
    train_triples = g.train
    if not len(train_triples):
        raise ValueError("graph has an empty train split")
    rng = np.random.default_rng(cfg.seed)
    if init is None:
        p = init_params(family, g.num_entities, g.num_relations, cfg.dim, cfg.gamma, rng)
    else:
        p = init.copy()
    ent_opt = _Adagrad(p.entity_emb, cfg.learning_rate)
    rel_opt = _Adagrad(p.relation_emb, cfg.learning_rate)
    batch = min(cfg.batch_size, len(train_triples))
    history = np.zeros(cfg.steps)
    # corruptions that are themselves training triples are dropped from the loss
    known = np.unique(
        (train_triples[:, 0] * g.num_relations + train_triples[:, 1]) * g.num_entities + train_triples[:, 2]
    )

    def run(worker_rng, steps):
        for step in steps:
            idx = worker_rng.integers(0, len(train_triples), size=batch)
            pos = train_triples[idx]
            neg_h, neg_t = sample_negatives(worker_rng, pos, g.num_entities, cfg.neg_per_pos)
            keys = (neg_h * g.num_relations + pos[:, [1]]) * g.num_entities + neg_t
            mask = ~_is_member(known, keys)
            loss, (erows, egrads), (rrows, rgrads) = loss_and_grads(p, pos, neg_h, neg_t, cfg, mask)
            if not np.isfinite(loss):
                raise NumericalError(step, "loss")
            ent_opt.update(erows, egrads)
            rel_opt.update(rrows, rgrads)
            if not (np.isfinite(p.entity_emb[erows]).all() and np.isfinite(p.relation_emb[rrows]).all()):
                raise NumericalError(step, "parameters")
            history[step] = loss
            if log_every and step % log_every == 0:
                logger.info("%s step %d loss %.6f", family, step, loss)

    workers = min(cfg.workers, max_workers())
    if workers <= 1:
        run(rng, range(cfg.steps))
    else:
        errors: list[BaseException] = []
        seeds = np.random.SeedSequence(cfg.seed).spawn(workers)

        def target(k):
            try:
                run(np.random.default_rng(seeds[k]), range(k, cfg.steps, workers))
            except BaseException as exc:  # surfaced in the caller
                errors.append(exc)

        threads = [threading.Thread(target=target, args=(k,)) for k in range(workers)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        if errors:
            raise errors[0]

    p.meta.update(
        {
            "loss_history": history,
            "config": cfg.to_dict(),
            "config_hash": cfg.hash(),
            "seed": cfg.seed,
        }
    )
    return p


def loss_trend(history: np.ndarray, frac: float = 0.1) -> tuple[float, float]:
    """Mean loss over the first and the last ``frac`` of steps."""
    history = np.asarray(history)
    k = max(1, int(len(history) * frac))
    return float(history[:k].mean()), float(history[-k:].mean())
