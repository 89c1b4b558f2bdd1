"""Composite generation model and its on-disk checkpoint format.

A checkpoint is a directory: params.bin holds every tensor, manifest.json
holds the architecture config, vocabulary, pairing diagnostics, and anything
the trainer wants to record. Loading rebuilds the parameter structure and
overwrites it with the stored arrays, so a round trip is bit-exact.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .data import CategoryVocabulary
from .encoder import EncoderConfig, EncoderParams
from .mcl import MclParams

MANIFEST_NAME = "manifest.json"
PARAMS_NAME = "params.bin"


class ModelError(Exception):
    pass


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig
    M: int = 10
    bank_hidden: int = 64
    mixture_hidden: int = 32
    head_hidden: int = 64

    def __post_init__(self):
        for name in ("M", "bank_hidden", "mixture_hidden", "head_hidden"):
            if getattr(self, name) <= 0:
                raise ModelError(f"{name} must be positive")

    @staticmethod
    def desk(num_categories):
        return ModelConfig(
            encoder=EncoderConfig(
                num_categories=num_categories,
                gru_hidden=32,
                conv_layers=2,
                conv_channels=8,
                raster_res=16,
                spatial_width=32,
            ),
            bank_hidden=32,
            mixture_hidden=16,
            head_hidden=32,
        )

    @staticmethod
    def paper(num_categories):
        return ModelConfig(encoder=EncoderConfig(num_categories=num_categories))

    def to_dict(self):
        return asdict(self)

    @staticmethod
    def from_dict(d):
        d = dict(d)
        d["encoder"] = EncoderConfig(**d["encoder"])
        return ModelConfig(**d)


@dataclass
class HeadParams:
    """Next-category head (log-probabilities) and stop head (single logit)."""

    category_l1: dc.LinearParams
    category_l2: dc.LinearParams
    stop_l1: dc.LinearParams
    stop_l2: dc.LinearParams

    @staticmethod
    def create(rng, shared_width, num_categories, hidden, prefix="heads"):
        return HeadParams(
            category_l1=dc.LinearParams.create(rng, shared_width, hidden, f"{prefix}.category.l1"),
            category_l2=dc.LinearParams.create(rng, hidden, num_categories, f"{prefix}.category.l2"),
            stop_l1=dc.LinearParams.create(rng, shared_width, hidden, f"{prefix}.stop.l1"),
            stop_l2=dc.LinearParams.create(rng, hidden, 1, f"{prefix}.stop.l2"),
        )

    def named(self):
        out = []
        for p in (self.category_l1, self.category_l2, self.stop_l1, self.stop_l2):
            out.extend(p.named())
        return out


def category_log_probs(x, heads):
    """(B, |C|) log-probabilities of the next category."""
    return dc.linear(dc.linear(x, heads.category_l1).relu(), heads.category_l2).log_softmax()


def stop_logits(x, heads):
    """(B,) raw stop logits; sigmoid > 0.5 means stop."""
    out = dc.linear(dc.linear(x, heads.stop_l1).relu(), heads.stop_l2)
    return out.reshape((x.shape[0],))


@dataclass
class LayoutModel:
    config: ModelConfig
    vocabulary: CategoryVocabulary
    encoder: EncoderParams
    mcl: MclParams
    heads: HeadParams
    paired: np.ndarray = field(default=None)  # (|C|, M) bool; True = usable at test time

    def __post_init__(self):
        if self.paired is None:
            self.paired = np.ones((len(self.vocabulary.names), self.config.M), dtype=bool)

    @staticmethod
    def create(rng, vocabulary, config):
        num_categories = len(vocabulary.names)
        if config.encoder.num_categories != num_categories:
            raise ModelError(
                f"encoder built for {config.encoder.num_categories} categories, vocabulary has {num_categories}"
            )
        shared = config.encoder.shared_width
        return LayoutModel(
            config=config,
            vocabulary=vocabulary,
            encoder=EncoderParams.create(rng, config.encoder),
            mcl=MclParams.create(
                rng, shared, num_categories, config.M, config.bank_hidden, config.mixture_hidden
            ),
            heads=HeadParams.create(rng, shared, num_categories, config.head_hidden),
        )

    def named(self):
        return self.encoder.named() + self.mcl.named() + self.heads.named()

    def save(self, dirpath, extra=None):
        dirpath = Path(dirpath)
        dirpath.mkdir(parents=True, exist_ok=True)
        dc.save_params(dirpath / PARAMS_NAME, self.named())
        manifest = {
            "format": "layout-mcl-checkpoint",
            "version": 1,
            "config": self.config.to_dict(),
            "vocabulary": list(self.vocabulary.names),
            "paired": self.paired.astype(int).tolist(),
            "params_sha256": checkpoint_hash(dirpath),
        }
        if extra:
            manifest.update(extra)
        with open(dirpath / MANIFEST_NAME, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        return dirpath

    @staticmethod
    def load(dirpath):
        dirpath = Path(dirpath)
        manifest_path = dirpath / MANIFEST_NAME
        if not manifest_path.exists():
            raise ModelError(f"no checkpoint manifest at {manifest_path}")
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        if manifest.get("format") != "layout-mcl-checkpoint":
            raise ModelError(f"{manifest_path} is not a model checkpoint manifest")
        config = ModelConfig.from_dict(manifest["config"])
        vocabulary = CategoryVocabulary(tuple(manifest["vocabulary"]))
        model = LayoutModel.create(np.random.default_rng(0), vocabulary, config)
        model.paired = np.asarray(manifest["paired"], dtype=bool)
        stored = dc.load_params(dirpath / PARAMS_NAME)
        for name, tensor in model.named():
            if name not in stored:
                raise ModelError(f"checkpoint missing tensor {name}")
            if stored[name].shape != tensor.data.shape:
                raise ModelError(
                    f"tensor {name} has shape {stored[name].shape}, expected {tensor.data.shape}"
                )
            tensor.data[...] = stored[name]
        return model, manifest


def checkpoint_hash(dirpath):
    digest = hashlib.sha256()
    with open(Path(dirpath) / PARAMS_NAME, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
