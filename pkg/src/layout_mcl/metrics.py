"""Evaluation metrics: alignment, discriminator features, FID, fake-positive.

The discriminator reuses the layout encoder as a backbone with a 512-unit
penultimate layer and a 2-class output (real=0, fake=1). Its penultimate
activations are the feature space for the Frechet distance between corpora.
"""

import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .data import perturb_fake
from .encoder import EncoderConfig, EncoderParams, encode_rows
from .trainer import AdamState, adam_step, clip_global_norm

log = logging.getLogger(__name__)

REAL_INDEX = 0
FAKE_INDEX = 1
FEATURE_WIDTH = 512
FID_STABLE_MINIMUM = 50


class MetricsError(Exception):
    pass


# ---------------------------------------------------------------------------
# alignment


def alignment(layouts):
    """Mean over layouts of each object's closest left/center/right-edge match."""
    if not layouts:
        raise MetricsError("alignment needs at least one layout")
    total = 0.0
    for layout in layouts:
        n = len(layout.objects)
        if n < 2:
            continue  # nothing to align against
        xs = np.array([o.bbox[0] for o in layout.objects])
        ws = np.array([o.bbox[2] for o in layout.objects])
        edges = (xs, xs + ws / 2.0, xs + ws)
        closest = np.full((n, n), np.inf)
        for e in edges:
            closest = np.minimum(closest, np.abs(e[:, None] - e[None, :]))
        np.fill_diagonal(closest, np.inf)
        total += closest.min(axis=1).sum()
    return total / len(layouts)


# ---------------------------------------------------------------------------
# discriminator


@dataclass(frozen=True)
class DiscriminatorConfig:
    encoder: EncoderConfig
    feature_width: int = FEATURE_WIDTH
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 4
    holdout_fraction: float = 0.25
    magnitude: float = 0.25

    def __post_init__(self):
        if self.feature_width != FEATURE_WIDTH:
            raise MetricsError(f"penultimate width is fixed at {FEATURE_WIDTH}")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise MetricsError("holdout_fraction must be in (0, 1)")


@dataclass
class Discriminator:
    config: DiscriminatorConfig
    encoder: EncoderParams
    l1: dc.LinearParams
    l2: dc.LinearParams

    @staticmethod
    def create(rng, config, prefix="disc"):
        shared = config.encoder.shared_width
        return Discriminator(
            config=config,
            encoder=EncoderParams.create(rng, config.encoder, prefix=f"{prefix}.encoder"),
            l1=dc.LinearParams.create(rng, shared, config.feature_width, f"{prefix}.l1"),
            l2=dc.LinearParams.create(rng, config.feature_width, 2, f"{prefix}.l2"),
        )

    def named(self):
        return self.encoder.named() + self.l1.named() + self.l2.named()

    def save(self, dirpath, extra=None):
        dirpath = Path(dirpath)
        dirpath.mkdir(parents=True, exist_ok=True)
        dc.save_params(dirpath / "params.bin", self.named())
        manifest = {
            "format": "layout-mcl-discriminator",
            "encoder": asdict(self.config.encoder),
            "feature_width": self.config.feature_width,
        }
        if extra:
            manifest.update(extra)
        with open(dirpath / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        return dirpath

    @staticmethod
    def load(dirpath):
        dirpath = Path(dirpath)
        with open(dirpath / "manifest.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
        if manifest.get("format") != "layout-mcl-discriminator":
            raise MetricsError(f"{dirpath} is not a discriminator checkpoint")
        config = DiscriminatorConfig(encoder=EncoderConfig(**manifest["encoder"]))
        disc = Discriminator.create(np.random.default_rng(0), config)
        stored = dc.load_params(dirpath / "params.bin")
        for name, tensor in disc.named():
            tensor.data[...] = stored[name]
        return disc


def _feature_tensor(layouts, disc):
    x = encode_rows([list(l.objects) for l in layouts], disc.encoder, disc.config.encoder)
    return dc.linear(x, disc.l1).relu()


def features(layouts, disc):
    """(N, 512) penultimate activations, evaluation mode (no tape needed)."""
    if not layouts:
        raise MetricsError("no layouts to featurize")
    return _feature_tensor(layouts, disc).data.copy()


def _logits(layouts, disc):
    return dc.linear(_feature_tensor(layouts, disc), disc.l2)


def classify(layouts, disc):
    """(N,) predicted class indices, argmax over the 2-class output."""
    if not layouts:
        raise MetricsError("no layouts to classify")
    return np.argmax(_logits(layouts, disc).data, axis=1)


def train_discriminator(real_corpus, config, rng):
    """Fit real-vs-fake on perturbed copies; returns (model, held-out accuracy).

    The corpus is split before fakes are made, so held-out fakes derive only
    from held-out reals.
    """
    if len(real_corpus) < 8:
        raise MetricsError("need at least 8 layouts to train a discriminator")
    order = rng.permutation(len(real_corpus))
    n_hold = max(1, int(len(real_corpus) * config.holdout_fraction))
    hold_reals = [real_corpus[i] for i in order[:n_hold]]
    train_reals = [real_corpus[i] for i in order[n_hold:]]
    train_fakes = [perturb_fake(l, rng, config.magnitude) for l in train_reals]
    hold_fakes = [perturb_fake(l, rng, config.magnitude) for l in hold_reals]

    disc = Discriminator.create(rng, config)
    named = disc.named()
    state = AdamState(named)
    examples = [(l, REAL_INDEX) for l in train_reals] + [(l, FAKE_INDEX) for l in train_fakes]
    for _ in range(config.epochs):
        perm = rng.permutation(len(examples))
        for start in range(0, len(examples), config.batch_size):
            batch = [examples[i] for i in perm[start : start + config.batch_size]]
            layouts = [l for l, _ in batch]
            labels = np.array([y for _, y in batch], dtype=np.intp)
            with dc.Tape() as tape:
                log_probs = _logits(layouts, disc).log_softmax()
                loss = -dc.take_per_row(log_probs, labels).mean()
                tape.backward(loss)
                grads = {name: tape.grad(t) for name, t in named}
            clip_global_norm(grads)
            adam_step(named, grads, state, config.learning_rate)

    held = hold_reals + hold_fakes
    truth = np.array([REAL_INDEX] * len(hold_reals) + [FAKE_INDEX] * len(hold_fakes))
    accuracy = float((classify(held, disc) == truth).mean())
    if accuracy < 0.6:
        log.warning("discriminator held-out accuracy %.3f < 0.6; FID will be weakly informative", accuracy)
    return disc, accuracy


def fake_positive(layouts, disc):
    """Fraction of layouts the discriminator calls fake."""
    if not layouts:
        raise MetricsError("fake_positive of an empty corpus")
    return float((classify(layouts, disc) == FAKE_INDEX).mean())


# ---------------------------------------------------------------------------
# Frechet distance


def _sqrtm_psd(sym):
    vals, vecs = np.linalg.eigh(sym)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def moments(feature_rows):
    rows = np.asarray(feature_rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise MetricsError("need a (N>=2, width) feature matrix")
    if not np.isfinite(rows).all():
        raise MetricsError("non-finite feature values")
    return rows.mean(axis=0), np.cov(rows, rowvar=False)


def fid_from_moments(mu1, c1, mu2, c2):
    mu1, mu2 = np.atleast_1d(mu1), np.atleast_1d(mu2)
    c1, c2 = np.atleast_2d(c1), np.atleast_2d(c2)
    s = _sqrtm_psd(c1)
    cross = _sqrtm_psd(s @ c2 @ s)
    d2 = float(((mu1 - mu2) ** 2).sum() + np.trace(c1) + np.trace(c2) - 2.0 * np.trace(cross))
    return max(d2, 0.0)


def fid(features_a, features_b):
    """Frechet distance between two feature samples."""
    a, b = np.asarray(features_a), np.asarray(features_b)
    for side in (a, b):
        if side.shape[0] < FID_STABLE_MINIMUM:
            log.warning("feature set of size %d is below the stability minimum %d", side.shape[0], FID_STABLE_MINIMUM)
    mu1, c1 = moments(a)
    mu2, c2 = moments(b)
    return fid_from_moments(mu1, c1, mu2, c2)


# ---------------------------------------------------------------------------
# diversity and reporting


@dataclass
class DiversityStats:
    distinct: int
    frequencies: dict  # category sequence tuple -> fraction


def diversity_stats(layouts):
    if len(layouts) < 2:
        raise MetricsError("diversity needs at least 2 layouts")
    sequences = [l.category_sequence() for l in layouts]
    counts = Counter(sequences)
    return DiversityStats(
        distinct=len(counts),
        frequencies={seq: count / len(sequences) for seq, count in counts.items()},
    )


@dataclass
class MetricReport:
    alignment: float = math.nan
    fid: float = math.nan
    fake_positive: float = math.nan
    diversity_distinct: int = 0
    diversity_frequencies: dict = None

    def to_dict(self):
        freqs = self.diversity_frequencies or {}
        return {
            "alignment": self.alignment,
            "fid": self.fid,
            "fake_positive": self.fake_positive,
            "diversity": {
                "distinct": self.diversity_distinct,
                "frequencies": {" ".join(map(str, k)): v for k, v in freqs.items()},
            },
        }
