"""Optimization loop: minibatching, Adam, logging, checkpointing.

Batches mix prefix lengths; the objective groups them internally for the
recurrent encoder. The loop is deterministic given the config seed: batch
order is derived from (seed, epoch) and parameter init from seed alone.
"""

import hashlib
import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import diffcore as dc
from .data import layout_to_json
from .encoder import encode_batch
from .generator import teacher_forced_pairs, total_loss
from .mcl import LossVariant, ewta_schedule, pair_report
from .model import LayoutModel, ModelConfig

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
GRAD_CLIP_NORM = 5.0


class TrainerError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 64  # desk-scale default; paper-scale 512 is a config choice
    epochs: int = 10
    lam_c: float = 1.0
    lam_s: float = 1.0
    lam_b: float = 40.0
    loss: str = "mixture_wta"
    epsilon: float = 0.05
    M: int = 10
    seed: int = 0
    pair_tau: float = 0.05
    pair_sample: int = 128

    def __post_init__(self):
        for name in ("batch_size", "epochs", "M", "pair_tau", "pair_sample"):
            if getattr(self, name) <= 0:
                raise TrainerError(f"{name} must be positive")
        # zero is allowed so a frozen-parameter run stays expressible
        if self.learning_rate < 0:
            raise TrainerError("learning_rate must be non-negative")
        LossVariant(self.loss, epsilon=self.epsilon)  # validates kind and epsilon


class AdamState:
    def __init__(self, named_params):
        self.m = {name: np.zeros_like(t.data) for name, t in named_params}
        self.v = {name: np.zeros_like(t.data) for name, t in named_params}
        self.t = 0


def adam_step(named_params, grads, state, lr):
    """First/second-moment update with bias correction, in place."""
    state.t += 1
    correction1 = 1.0 - ADAM_BETA1**state.t
    correction2 = 1.0 - ADAM_BETA2**state.t
    for name, tensor in named_params:
        g = grads[name]
        state.m[name] = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * g
        state.v[name] = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * g * g
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        tensor.data -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def clip_global_norm(grads, max_norm=GRAD_CLIP_NORM):
    """Scale the whole gradient set so its global L2 norm is at most max_norm."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for name in grads:
            grads[name] = grads[name] * scale
    return total


def corpus_hash(layouts, vocabulary):
    digest = hashlib.sha256()
    for layout in layouts:
        digest.update(layout_to_json(layout, vocabulary).encode("utf-8"))
    return digest.hexdigest()


def _variant_for(config, step, total_steps):
    if config.loss == "evolving_wta":
        return LossVariant(config.loss, epsilon=config.epsilon, k=ewta_schedule(step, total_steps, config.M))
    return LossVariant(config.loss, epsilon=config.epsilon)


def _pairing_snapshot(model, pairs, config):
    """Forward-only pairing diagnostics on a fixed sample of training pairs."""
    sample = pairs[: config.pair_sample]
    by_length = {}
    for prefix, target, _ in sample:
        by_length.setdefault(len(prefix), []).append((prefix, target))
    eval_set = []
    for length, items in sorted(by_length.items()):
        x = encode_batch([list(p) for p, _ in items], model.encoder, model.config.encoder).data
        eval_set.extend((x[i], t.category, np.asarray(t.bbox)) for i, (_, t) in enumerate(items))
    return pair_report(model.mcl.bank, model.mcl.mixture, eval_set, tau_pair=config.pair_tau)


def _paired_mask(report, num_categories, M):
    mask = np.zeros((num_categories, M), dtype=bool)
    for (category, index), flag in report.paired.items():
        mask[category, index] = flag
    return mask


def _eval_loss(model, pairs, config, variant):
    total, _ = total_loss(
        pairs[: min(len(pairs), 256)], model, config.lam_c, config.lam_s, config.lam_b, variant
    )
    return float(total.data)


@dataclass
class TrainResult:
    model: LayoutModel
    log: list
    best_epoch: int
    checkpoint_dir: object = None


def train(corpus, vocabulary, config, model_config=None, out_dir=None, init_model=None):
    """Fit a model on reading-ordered layouts; returns model, log, checkpoint.

    init_model warm-starts from existing parameters instead of a fresh init.
    """
    if not corpus:
        raise TrainerError("empty corpus")
    if init_model is not None:
        model = init_model
        if model.config.M != config.M:
            raise TrainerError(f"model has M={model.config.M}, config asks for M={config.M}")
    else:
        if model_config is None:
            model_config = ModelConfig.desk(len(vocabulary))
        if model_config.M != config.M:
            model_config = replace(model_config, M=config.M)
        model = LayoutModel.create(np.random.default_rng(config.seed), vocabulary, model_config)
    named = model.named()
    state = AdamState(named)

    pairs = [pair for layout in corpus for pair in teacher_forced_pairs(layout)]
    steps_per_epoch = math.ceil(len(pairs) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch

    log = []
    best = math.inf
    best_epoch = -1
    checkpoint_dir = None
    step = 0
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, epoch]).permutation(len(pairs))
        sums = {"l_c": 0.0, "l_s": 0.0, "l_b": 0.0, "total": 0.0}
        for start in range(0, len(pairs), config.batch_size):
            batch = [pairs[i] for i in order[start : start + config.batch_size]]
            variant = _variant_for(config, step, total_steps)
            with dc.Tape() as tape:
                total, parts = total_loss(batch, model, config.lam_c, config.lam_s, config.lam_b, variant)
                loss_value = float(total.data)
                if not math.isfinite(loss_value):
                    where = f"step {step} (epoch {epoch})"
                    hint = f"; last finite checkpoint: {checkpoint_dir}" if checkpoint_dir else ""
                    raise TrainerError(f"training diverged to non-finite loss at {where}{hint}")
                tape.backward(total)
                grads = {name: tape.grad(t) for name, t in named}
            clip_global_norm(grads)
            adam_step(named, grads, state, config.learning_rate)
            for key in ("l_c", "l_s", "l_b"):
                sums[key] += parts[key]
            sums["total"] += loss_value
            step += 1
        report = _pairing_snapshot(model, pairs, config)
        entry = {
            "epoch": epoch,
            "l_c": sums["l_c"] / steps_per_epoch,
            "l_s": sums["l_s"] / steps_per_epoch,
            "l_b": sums["l_b"] / steps_per_epoch,
            "total": sums["total"] / steps_per_epoch,
            "paired_count": report.paired_count,
            "unpaired_mass": report.unpaired_mass,
        }
        log.append(entry)
        model.paired = _paired_mask(report, len(vocabulary), config.M)
        if entry["total"] < best:
            best = entry["total"]
            best_epoch = epoch
            if out_dir is not None:
                final_variant = _variant_for(config, total_steps - 1, total_steps)
                checkpoint_dir = model.save(
                    out_dir,
                    extra={
                        "train_config": asdict(config),
                        "corpus_sha256": corpus_hash(corpus, vocabulary),
                        "log": log,
                        "best_epoch": best_epoch,
                        "checkpoint_eval_loss": _eval_loss(model, pairs, config, final_variant),
                    },
                )
    if checkpoint_dir is not None:
        _update_manifest_log(checkpoint_dir, log)
    return TrainResult(model=model, log=log, best_epoch=best_epoch, checkpoint_dir=checkpoint_dir)


def _update_manifest_log(checkpoint_dir, log):
    # the checkpoint keeps best-epoch params but should report the full run
    manifest_path = checkpoint_dir / "manifest.json"
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    manifest["log"] = log
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_and_eval(checkpoint_dir, corpus, config):
    """Recompute the checkpoint's recorded eval loss from disk (consistency probe)."""
    model, manifest = LayoutModel.load(checkpoint_dir)
    pairs = [pair for layout in corpus for pair in teacher_forced_pairs(layout)]
    steps_per_epoch = math.ceil(len(pairs) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    variant = _variant_for(config, total_steps - 1, total_steps)
    return _eval_loss(model, pairs, config, variant), manifest
