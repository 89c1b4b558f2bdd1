"""2D point-prediction lab for the winner-takes-all loss family.

The production predictor bank and mixture layer are reused verbatim, just
with 2-dim outputs and one constant input, so the dynamics observed here
(pairing, boosting, stuck hypotheses) come from the exact code the layout
model trains with. Trajectories are emitted as CSV snapshots for plotting.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .mcl import (
    LossVariant,
    MixtureParams,
    PredictorBank,
    ewta_schedule,
    hypotheses_batch,
    mixture_batch,
    wta_loss_batch,
)
from .trainer import AdamState, adam_step, clip_global_norm

DEFAULT_GROUND_TRUTHS = ((0.2, 0.5), (0.5, 0.2), (0.8, 0.8))
STUCK_DELTA = 0.05  # farther than this from every ground truth = stuck
CAPTURE_TAU = 0.05  # capture radius for the paired set, mirrors pair_tau
PAIR_DISTANCE = 0.02  # stage marker: ground truth considered reached
BOOST_MASS = 0.99  # stage marker: stray phi mass below 1%
COOL_FRACTION = 0.2  # tail of training run at a tenth of the learning rate


class ToyError(Exception):
    pass


@dataclass(frozen=True)
class ToyTask:
    ground_truths: tuple = DEFAULT_GROUND_TRUTHS
    M: int = 10
    input_width: int = 4
    hidden: int = 32

    def __post_init__(self):
        pts = [tuple(p) for p in self.ground_truths]
        if not pts:
            raise ToyError("need at least one ground truth")
        if len(set(pts)) != len(pts):
            raise ToyError("ground truths must be distinct")
        for p in pts:
            if len(p) != 2 or not all(0.0 <= v <= 1.0 for v in p):
                raise ToyError(f"ground truth {p} outside the unit square")
        for name in ("M", "input_width", "hidden"):
            if getattr(self, name) < 1:
                raise ToyError(f"{name} must be positive")

    @property
    def points(self):
        return np.asarray(self.ground_truths, dtype=np.float64)

    def centroid(self):
        return self.points.mean(axis=0)


@dataclass
class ToySnapshot:
    step: int
    positions: np.ndarray  # (M, 2)
    phi: np.ndarray  # (M,)


@dataclass
class ToySummary:
    variant: str
    seed: int
    steps: int
    nearest: tuple  # per-ground-truth nearest hypothesis L1 distance
    paired: tuple  # hypothesis indices capturing a ground truth
    paired_count: int
    unpaired_mass: float  # phi mass outside the paired set
    stuck_count: int
    poor_probability: float  # chance of sampling a stuck hypothesis
    pairing_step: int | None
    boosting_step: int | None


def _stage_and_final_stats(positions, phi, gts):
    d = np.abs(positions[:, None, :] - gts[None]).sum(axis=2)  # (M, K)
    nearest = d.min(axis=0)
    winners = d.argmin(axis=0)
    paired = sorted({int(w) for k, w in enumerate(winners) if d[w, k] < CAPTURE_TAU})
    stuck = np.flatnonzero(d.min(axis=1) > STUCK_DELTA)
    return d, nearest, paired, stuck


def run_toy(task, variant, steps=3000, seed=0, learning_rate=0.01, snapshot_every=None):
    """Train one toy configuration; returns (snapshots, summary).

    variant is a LossVariant kind; evolving_wta follows its top-k schedule
    over the step budget. The final fifth of training runs at a tenth of
    the learning rate so equilibrium positions settle.
    """
    LossVariant(variant)  # validate the kind early
    if steps < 1:
        raise ToyError("steps must be positive")
    if snapshot_every is None:
        snapshot_every = max(1, steps // 20)
    rng = np.random.default_rng(seed)
    bank = PredictorBank.create(rng, task.input_width, 1, task.M, task.hidden, out_dim=2)
    mixture = MixtureParams.create(rng, task.input_width, 1, task.M, task.hidden)
    # zero the coefficient output layer so phi starts exactly uniform
    mixture.l2.w.data[...] = 0.0
    mixture_on = variant == "mixture_wta"
    named = bank.named() + (mixture.named() if mixture_on else [])
    state = AdamState(named)
    x = dc.Tensor(np.ones((1, task.input_width)))
    gts = task.points
    cool_at = int(steps * (1.0 - COOL_FRACTION))
    # without the mixture loss the coefficients never train, so one forward suffices
    phi_const = None if mixture_on else mixture_batch(x, 0, mixture).data[0]

    snapshots = []
    pairing_step = None
    boosting_step = None
    for step in range(steps):
        target = gts[rng.integers(len(gts))]
        if variant == "evolving_wta":
            step_variant = LossVariant(variant, k=ewta_schedule(step, steps, task.M))
        else:
            step_variant = LossVariant(variant)
        with dc.Tape() as tape:
            hyps = hypotheses_batch(x, 0, bank)
            phi = mixture_batch(x, 0, mixture) if mixture_on else None
            loss = wta_loss_batch(hyps, target.reshape(1, 2), step_variant, phi).sum()
            tape.backward(loss)
            grads = {name: tape.grad(t) for name, t in named}

        positions = hyps.data[0]
        phi_now = phi.data[0] if mixture_on else phi_const
        if step % snapshot_every == 0:
            snapshots.append(ToySnapshot(step, positions.copy(), phi_now.copy()))
        d = np.abs(positions[:, None, :] - gts[None]).sum(axis=2)
        if pairing_step is None and d.min(axis=0).max() < PAIR_DISTANCE:
            pairing_step = step
        if mixture_on and boosting_step is None and phi_now[d.min(axis=1) < PAIR_DISTANCE].sum() > BOOST_MASS:
            boosting_step = step

        clip_global_norm(grads)
        adam_step(named, grads, state, learning_rate if step < cool_at else learning_rate / 10.0)

    positions = hypotheses_batch(x, 0, bank).data[0]
    phi_now = mixture_batch(x, 0, mixture).data[0]
    snapshots.append(ToySnapshot(steps, positions.copy(), phi_now.copy()))
    _, nearest, paired, stuck = _stage_and_final_stats(positions, phi_now, gts)
    if mixture_on:
        poor = float(phi_now[stuck].sum())
    else:
        poor = len(stuck) / task.M  # no trained coefficients: uniform sampling
    summary = ToySummary(
        variant=variant,
        seed=seed,
        steps=steps,
        nearest=tuple(float(v) for v in nearest),
        paired=tuple(paired),
        paired_count=len(paired),
        unpaired_mass=float(phi_now.sum() - phi_now[paired].sum()),
        stuck_count=int(len(stuck)),
        poor_probability=poor,
        pairing_step=pairing_step,
        boosting_step=boosting_step,
    )
    return snapshots, summary


def write_trajectory_csv(snapshots, path):
    """One row per hypothesis per snapshot: step, hypothesis, x, y, phi."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "hypothesis", "x", "y", "phi"])
        for snap in snapshots:
            for i, (pos, p) in enumerate(zip(snap.positions, snap.phi)):
                writer.writerow([snap.step, i, f"{pos[0]:.6f}", f"{pos[1]:.6f}", f"{p:.6f}"])


@dataclass
class VariantComparison:
    poor_mean: float
    poor_std: float
    stuck_mean: float
    stuck_std: float
    coverage_mean: float  # worst per-ground-truth nearest distance
    coverage_std: float
    summaries: list


def compare_variants(task, seeds, steps=3000, learning_rate=0.01, variants=None):
    """Equilibrium statistics per loss variant over shared seeds."""
    if len(seeds) < 5:
        raise ToyError(f"need at least 5 seeds for a stable comparison, got {len(seeds)}")
    if variants is None:
        variants = ("vanilla_wta", "relaxed_wta", "evolving_wta", "mixture_wta")
    table = {}
    for variant in variants:
        summaries = [run_toy(task, variant, steps, seed, learning_rate)[1] for seed in seeds]
        poor = np.array([s.poor_probability for s in summaries])
        stuck = np.array([s.stuck_count for s in summaries], dtype=np.float64)
        coverage = np.array([max(s.nearest) for s in summaries])
        table[variant] = VariantComparison(
            poor_mean=float(poor.mean()),
            poor_std=float(poor.std()),
            stuck_mean=float(stuck.mean()),
            stuck_std=float(stuck.std()),
            coverage_mean=float(coverage.mean()),
            coverage_std=float(coverage.std()),
            summaries=summaries,
        )
    return table
