"""Score functions for TransE, DistMult, ComplEx and RotatE.

All families share one layout: ``entity_emb`` is ``|E| x d``; ComplEx and
RotatE read each row as ``[real half | imaginary half]``.  ``relation_emb``
is ``|R| x d`` except for RotatE, which stores ``d/2`` phases per relation so
that every relation coordinate ``exp(i*theta)`` has unit modulus.

Scores are oriented so that higher means more plausible: the distance
families return ``gamma - distance``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TRANSE, DISTMULT, COMPLEX, ROTATE = "TransE", "DistMult", "ComplEx", "RotatE"
FAMILIES = (TRANSE, DISTMULT, COMPLEX, ROTATE)

# max elements of a (batch, candidates, d) temporary for the distance families
_CHUNK_ELEMS = 1 << 22


def canonical_family(name: str) -> str:
    for fam in FAMILIES:
        if fam.lower() == str(name).lower():
            return fam
    raise ValueError(f"unknown model family {name!r}; expected one of {FAMILIES}")


@dataclass
class ModelParams:
    family: str
    entity_emb: np.ndarray
    relation_emb: np.ndarray
    gamma: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.family = canonical_family(self.family)
        self.entity_emb = np.asarray(self.entity_emb)
        self.relation_emb = np.asarray(self.relation_emb)
        d = self.entity_emb.shape[1]
        if self.family in (COMPLEX, ROTATE) and d % 2:
            raise ValueError(f"{self.family} needs an even dimension, got {d}")
        want = d // 2 if self.family == ROTATE else d
        if self.relation_emb.shape[1] != want:
            raise ValueError(
                f"{self.family} relation table must have {want} columns, got {self.relation_emb.shape[1]}"
            )

    @property
    def dim(self) -> int:
        return self.entity_emb.shape[1]

    @property
    def num_entities(self) -> int:
        return self.entity_emb.shape[0]

    @property
    def num_relations(self) -> int:
        return self.relation_emb.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.family, self.entity_emb.copy(), self.relation_emb.copy(), self.gamma, dict(self.meta)
        )

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            self.family,
            self.entity_emb.astype(dtype),
            self.relation_emb.astype(dtype),
            self.gamma,
            dict(self.meta),
        )


def relation_dim(family: str, dim: int) -> int:
    return dim // 2 if canonical_family(family) == ROTATE else dim


def embedding_range(gamma: float, dim: int) -> float:
    # RotatE convention: (gamma + epsilon) / dim with epsilon = 2
    return (gamma + 2.0) / dim


def init_params(
    family: str,
    num_entities: int,
    num_relations: int,
    dim: int,
    gamma: float,
    rng: np.random.Generator | int | None = None,
    dtype=np.float32,
) -> ModelParams:
    """Uniform initialization in ``[-(gamma+2)/dim, (gamma+2)/dim]``;
    RotatE phases uniform in ``[-pi, pi]``."""
    family = canonical_family(family)
    rng = np.random.default_rng(rng)
    bound = embedding_range(gamma, dim)
    ent = rng.uniform(-bound, bound, size=(num_entities, dim))
    if family == ROTATE:
        rel = rng.uniform(-np.pi, np.pi, size=(num_relations, dim // 2))
    else:
        rel = rng.uniform(-bound, bound, size=(num_relations, dim))
    return ModelParams(family, ent.astype(dtype), rel.astype(dtype), float(gamma))


# elementwise kernels -----------------------------------------------------------
#
# h, r, t are broadcast-compatible arrays whose last axis holds the embedding.


def _halves(x):
    k = x.shape[-1] // 2
    return x[..., :k], x[..., k:]


def score_arrays(family: str, h, r, t, gamma: float):
    if family == TRANSE:
        return gamma - np.abs(h + r - t).sum(-1)
    if family == DISTMULT:
        return (h * r * t).sum(-1)
    if family == COMPLEX:
        hr, hi = _halves(h)
        rr, ri = _halves(r)
        tr, ti = _halves(t)
        return (hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr).sum(-1)
    if family == ROTATE:
        hr, hi = _halves(h)
        tr, ti = _halves(t)
        c, s = np.cos(r), np.sin(r)
        a = hr * c - hi * s - tr
        b = hr * s + hi * c - ti
        return gamma - np.sqrt(a * a + b * b).sum(-1)
    raise ValueError(family)


def score_grads(family: str, h, r, t, gamma: float):
    """Score and its gradients w.r.t. ``h``, ``r`` and ``t``.

    Gradients are returned at the full broadcast shape.  TransE uses the
    subgradient ``sign(0) = 0`` at L1 kinks.
    """
    shape = np.broadcast_shapes(h.shape[:-1], r.shape[:-1], t.shape[:-1]) + (h.shape[-1],)
    if family == TRANSE:
        u = np.sign(h + r - t)
        u = np.broadcast_to(u, shape)
        return gamma - np.abs(h + r - t).sum(-1), -u, -u, u
    if family == DISTMULT:
        b = np.broadcast_to
        return (h * r * t).sum(-1), b(r * t, shape), b(h * t, shape), b(h * r, shape)
    if family == COMPLEX:
        hr, hi = _halves(h)
        rr, ri = _halves(r)
        tr, ti = _halves(t)
        s = (hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr).sum(-1)
        half = shape[:-1] + (shape[-1] // 2,)

        def cat(re, im):
            return np.concatenate([np.broadcast_to(re, half), np.broadcast_to(im, half)], -1)

        dh = cat(rr * tr + ri * ti, rr * ti - ri * tr)
        dr = cat(hr * tr + hi * ti, hr * ti - hi * tr)
        dt = cat(hr * rr - hi * ri, hi * rr + hr * ri)
        return s, dh, dr, dt
    if family == ROTATE:
        hr, hi = _halves(h)
        tr, ti = _halves(t)
        c, sn = np.cos(r), np.sin(r)
        a = hr * c - hi * sn - tr
        b = hr * sn + hi * c - ti
        m = np.sqrt(a * a + b * b)
        s = gamma - m.sum(-1)
        inv = 1.0 / np.maximum(m, 1e-30)
        ga, gb = -a * inv, -b * inv  # ds/da, ds/db
        dh = np.concatenate([ga * c + gb * sn, -ga * sn + gb * c], -1)
        dt = np.concatenate([-ga, -gb], -1)
        dr = ga * (-hr * sn - hi * c) + gb * (hr * c - hi * sn)
        half = shape[:-1] + (shape[-1] // 2,)
        return s, np.broadcast_to(dh, shape), np.broadcast_to(dr, half), np.broadcast_to(dt, shape)
    raise ValueError(family)


def _check_ids(p: ModelParams, h=None, r=None, t=None):
    for ids, n, what in ((h, p.num_entities, "entity"), (t, p.num_entities, "entity"), (r, p.num_relations, "relation")):
        if ids is None:
            continue
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise IndexError(f"{what} id out of range for a model with {n} {what} rows")


# public scoring -------------------------------------------------------------------


def score(p: ModelParams, h: int, r: int, t: int) -> float:
    _check_ids(p, h, r, t)
    return float(
        score_arrays(p.family, p.entity_emb[h], p.relation_emb[r], p.entity_emb[t], p.gamma)
    )


def score_triples(p: ModelParams, triples: np.ndarray) -> np.ndarray:
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    _check_ids(p, triples[:, 0], triples[:, 1], triples[:, 2])
    return score_arrays(
        p.family,
        p.entity_emb[triples[:, 0]],
        p.relation_emb[triples[:, 1]],
        p.entity_emb[triples[:, 2]],
        p.gamma,
    )


def score_tails(p: ModelParams, heads, rels, candidates=None) -> np.ndarray:
    """Scores of ``(heads[i], rels[i], c)`` for every candidate entity ``c``;
    shape ``(len(heads), n_candidates)``."""
    heads = np.atleast_1d(np.asarray(heads, dtype=np.int64))
    rels = np.atleast_1d(np.asarray(rels, dtype=np.int64))
    _check_ids(p, heads, rels)
    cand = p.entity_emb if candidates is None else p.entity_emb[np.asarray(candidates)]
    h = p.entity_emb[heads]
    r = p.relation_emb[rels]
    fam = p.family
    if fam == DISTMULT:
        return (h * r) @ cand.T
    if fam == COMPLEX:
        hr, hi = _halves(h)
        rr, ri = _halves(r)
        q = np.concatenate([hr * rr - hi * ri, hr * ri + hi * rr], -1)
        return q @ cand.T
    if fam == TRANSE:
        return _distance_scores(h + r, cand, p.gamma, complex_=False)
    hr, hi = _halves(h)
    c, s = np.cos(r), np.sin(r)
    q = np.concatenate([hr * c - hi * s, hr * s + hi * c], -1)
    return _distance_scores(q, cand, p.gamma, complex_=True)


def score_heads(p: ModelParams, rels, tails, candidates=None) -> np.ndarray:
    """Scores of ``(c, rels[i], tails[i])`` for every candidate entity ``c``."""
    rels = np.atleast_1d(np.asarray(rels, dtype=np.int64))
    tails = np.atleast_1d(np.asarray(tails, dtype=np.int64))
    _check_ids(p, None, rels, tails)
    cand = p.entity_emb if candidates is None else p.entity_emb[np.asarray(candidates)]
    t = p.entity_emb[tails]
    r = p.relation_emb[rels]
    fam = p.family
    if fam == DISTMULT:
        return (r * t) @ cand.T
    if fam == COMPLEX:
        rr, ri = _halves(r)
        tr, ti = _halves(t)
        q = np.concatenate([rr * tr + ri * ti, rr * ti - ri * tr], -1)
        return q @ cand.T
    if fam == TRANSE:
        return _distance_scores(t - r, cand, p.gamma, complex_=False)
    # |h o r - t| = |h - t o conj(r)| for unit-modulus r
    tr, ti = _halves(t)
    c, s = np.cos(r), np.sin(r)
    q = np.concatenate([tr * c + ti * s, ti * c - tr * s], -1)
    return _distance_scores(q, cand, p.gamma, complex_=True)


def score_batch_tails(p: ModelParams, h: int, r: int) -> np.ndarray:
    return score_tails(p, [h], [r])[0]


def score_batch_heads(p: ModelParams, r: int, t: int) -> np.ndarray:
    return score_heads(p, [r], [t])[0]


def _distance_scores(q: np.ndarray, cand: np.ndarray, gamma: float, complex_: bool) -> np.ndarray:
    n_q, d = q.shape
    out = np.empty((n_q, len(cand)), dtype=np.result_type(q, cand))
    step = max(1, _CHUNK_ELEMS // max(1, len(cand) * d))
    for lo in range(0, n_q, step):
        diff = q[lo : lo + step, None, :] - cand[None, :, :]
        if complex_:
            re, im = _halves(diff)
            dist = np.sqrt(re * re + im * im).sum(-1)
        else:
            dist = np.abs(diff).sum(-1)
        out[lo : lo + step] = gamma - dist
    return out


# gradient check ---------------------------------------------------------------------


@dataclass
class GradCheckResult:
    max_rel_error: float
    probes: int
    excluded: int


def grad_check(
    p: ModelParams,
    family: str | None = None,
    probe_count: int = 100,
    step: float = 1e-5,
    seed: int = 0,
) -> GradCheckResult:
    """Compare analytic score gradients with central differences.

    Each probe draws a random triple of ``p`` and perturbs every coordinate of
    the head, relation and tail rows.  The relative error of a probe is
    ``|analytic - numeric| / max(|analytic|, |numeric|)`` in vector norm, per
    embedding.  TransE probes within ``2 * step`` of an L1 kink, and RotatE
    probes with a near-zero complex residual, are excluded and counted.
    """
    family = canonical_family(family or p.family)
    if probe_count < 1:
        raise ValueError("probe_count must be >= 1")
    rng = np.random.default_rng(seed)
    ent = p.entity_emb.astype(np.float64)
    rel = p.relation_emb.astype(np.float64)
    worst, excluded = 0.0, 0
    for _ in range(probe_count):
        hi, ri, ti = rng.integers(p.num_entities), rng.integers(p.num_relations), rng.integers(p.num_entities)
        h, r, t = ent[hi].copy(), rel[ri].copy(), ent[ti].copy()
        if _near_kink(family, h, r, t, step):
            excluded += 1
            continue
        _, dh, dr, dt = score_grads(family, h, r, t, p.gamma)
        for vec, analytic in ((h, dh), (r, dr), (t, dt)):
            numeric = np.empty_like(vec)
            for k in range(len(vec)):
                orig = vec[k]
                vec[k] = orig + step
                up = score_arrays(family, h, r, t, p.gamma)
                vec[k] = orig - step
                down = score_arrays(family, h, r, t, p.gamma)
                vec[k] = orig
                numeric[k] = (up - down) / (2 * step)
            denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
            worst = max(worst, float(np.linalg.norm(analytic - numeric) / denom))
    return GradCheckResult(worst, probe_count, excluded)


def _near_kink(family, h, r, t, step) -> bool:
    if family == TRANSE:
        return bool(np.abs(h + r - t).min() < 2 * step)
    if family == ROTATE:
        hr, hi = _halves(h)
        tr, ti = _halves(t)
        a = hr * np.cos(r) - hi * np.sin(r) - tr
        b = hr * np.sin(r) + hi * np.cos(r) - ti
        return bool(np.sqrt(a * a + b * b).min() < 10 * step)
    return False
