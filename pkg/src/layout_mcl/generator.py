"""Autoregressive layout decoding and the teacher-forced training objective.

One generation step encodes the current prefix, samples the next category
(or takes a forced one), draws a bbox from one of that category's hypothesis
predictors, and decides whether this object closes the layout. Hard
constraints are a verbatim prefix; soft constraints force categories in
order and may nudge predictor choice toward a requested size.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import diffcore as dc
from .data import Layout, LayoutObject
from .encoder import encode_batch, encode_rows
from .mcl import LossVariant, hypotheses_batch, mixture_batch, wta_loss_batch
from .model import category_log_probs, stop_logits

SIZE_HINT_BANDWIDTH = 0.1
STOP_THRESHOLD = 0.5
LOG_FLOOR = 1e-12


class GeneratorError(Exception):
    pass


@dataclass(frozen=True)
class SoftConstraint:
    category: int
    size: tuple | None = None  # optional (w, h) hint


@dataclass(frozen=True)
class GenerationRequest:
    hard: tuple = ()
    soft: tuple = ()
    count: int = 1
    max_objects: int = 10
    seed: int = 0
    temperature: float = 1.0
    renormalize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hard", tuple(self.hard))
        object.__setattr__(self, "soft", tuple(self.soft))
        if self.count < 1:
            raise GeneratorError(f"count must be at least 1, got {self.count}")
        if self.temperature <= 0:
            raise GeneratorError(f"temperature must be positive, got {self.temperature}")
        if len(self.hard) + len(self.soft) > self.max_objects:
            raise GeneratorError(
                f"{len(self.hard)} hard + {len(self.soft)} soft constraints exceed max_objects={self.max_objects}"
            )


def predict_category(x_shared, heads, temperature, rng):
    """Sample the next category from the tempered head distribution."""
    log_probs = category_log_probs(x_shared, heads).data[0]
    z = log_probs / temperature
    z -= z.max()
    probs = np.exp(z)
    probs /= probs.sum()
    return int(rng.choice(probs.size, p=probs))


def predict_stop(x_shared, heads, object_count, max_objects):
    """Stop when the head fires above 0.5 or the layout is at capacity."""
    if object_count >= max_objects:
        return True
    logit = stop_logits(x_shared, heads).data[0]
    return bool(1.0 / (1.0 + np.exp(-logit)) > STOP_THRESHOLD)


def _predictor_weights(phi, paired_row, size_hint, hypotheses, renormalize):
    if renormalize and paired_row.any():
        weights = paired_row.astype(np.float64)
    else:
        weights = phi.copy()
    if size_hint is not None:
        sizes = hypotheses[:, 2:]
        distance = np.abs(sizes - np.asarray(size_hint)).sum(axis=1)
        weights = weights * np.exp(-distance / SIZE_HINT_BANDWIDTH)
    total = weights.sum()
    if total <= 0:
        weights = np.ones_like(weights)
        total = weights.sum()
    return weights / total


def _clamp_overflow(bbox):
    x, y, w, h = bbox
    return (x, y, min(w, 1.0 - x), min(h, 1.0 - y))


def _emit_object(x, category, size_hint, model, request, rng):
    hypotheses = hypotheses_batch(x, category, model.mcl.bank).data[0]
    phi = mixture_batch(x, category, model.mcl.mixture).data[0]
    weights = _predictor_weights(
        phi, model.paired[category], size_hint, hypotheses, request.renormalize
    )
    index = int(rng.choice(weights.size, p=weights))
    bbox = _clamp_overflow(tuple(float(v) for v in hypotheses[index]))
    return LayoutObject(category=category, bbox=bbox, stop=False)


def _generate_one(request, model, rng):
    enc, cfg = model.encoder, model.config.encoder
    objects = [replace(o, stop=False) for o in request.hard]
    forced = list(request.soft)
    while len(objects) < request.max_objects:
        x = encode_batch([objects], enc, cfg)
        if forced:
            # soft phase: category forced, stop head ignored
            constraint = forced.pop(0)
            category, size_hint = constraint.category, constraint.size
            stop_now = False
        else:
            category = predict_category(x, model.heads, request.temperature, rng)
            size_hint = None
            # the head marks the object emitted this step as the last one
            stop_now = predict_stop(x, model.heads, len(objects) + 1, request.max_objects)
        objects.append(_emit_object(x, category, size_hint, model, request, rng))
        if stop_now:
            break
    objects[-1] = replace(objects[-1], stop=True)
    return Layout(objects=objects, source="generated")


def generate(request, model):
    """Decode `count` candidate layouts honoring the request's constraints."""
    for obj in request.hard:
        if not 0 <= obj.category < len(model.vocabulary.names):
            raise GeneratorError(f"hard constraint category {obj.category} not in vocabulary")
    for constraint in request.soft:
        if not 0 <= constraint.category < len(model.vocabulary.names):
            raise GeneratorError(f"soft constraint category {constraint.category} not in vocabulary")
    return [
        _generate_one(request, model, np.random.default_rng([request.seed, j]))
        for j in range(request.count)
    ]


# ---------------------------------------------------------------------------
# teacher-forced training objective


def teacher_forced_pairs(layout):
    """Split an n-object layout into n (prefix, target, stop) training pairs."""
    n = len(layout.objects)
    return [
        (layout.objects[:i], layout.objects[i], 1.0 if i == n - 1 else 0.0)
        for i in range(n)
    ]


def total_loss(batch, model, lam_c=1.0, lam_s=1.0, lam_b=40.0, variant=LossVariant("mixture_wta")):
    """Weighted sum of category NLL, stop BCE, and the hypothesis-bank loss."""
    if not batch:
        raise GeneratorError("empty batch")
    prefixes = [list(prefix) for prefix, _, _ in batch]
    targets = [target for _, target, _ in batch]
    stops = np.array([stop for _, _, stop in batch])
    categories = np.array([t.category for t in targets], dtype=np.intp)

    x = encode_rows(prefixes, model.encoder, model.config.encoder)

    log_probs = category_log_probs(x, model.heads)
    l_c = -dc.take_per_row(log_probs, categories).mean()

    logits = stop_logits(x, model.heads)
    p = logits.sigmoid()
    l_s = -(
        dc.Tensor(stops) * p.clip_min(LOG_FLOOR).log()
        + dc.Tensor(1.0 - stops) * (1.0 - p).clip_min(LOG_FLOOR).log()
    ).mean()

    pieces = []
    for category in sorted(set(int(c) for c in categories)):
        rows = np.flatnonzero(categories == category)
        x_rows = dc.gather_rows(x, rows)
        y = np.stack([targets[r].bbox for r in rows])
        hyps = hypotheses_batch(x_rows, category, model.mcl.bank)
        phi = mixture_batch(x_rows, category, model.mcl.mixture) if variant.kind == "mixture_wta" else None
        pieces.append(wta_loss_batch(hyps, y, variant, phi))
    l_b = (pieces[0] if len(pieces) == 1 else dc.concat(pieces, axis=0)).mean()

    total = lam_c * l_c + lam_s * l_s + lam_b * l_b
    parts = {"l_c": float(l_c.data), "l_s": float(l_s.data), "l_b": float(l_b.data)}
    return total, parts
