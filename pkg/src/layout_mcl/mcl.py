"""Multi-choice bbox prediction.

Each category owns M independent 2-layer networks producing competing bbox
hypotheses, plus one mixture layer scoring how often each hypothesis wins.
Training uses a winner-takes-all loss family over the hypotheses; the
mixture variant weights the winner's L1 distance by the negative log of its
mixture coefficient so the coefficients learn win frequencies. At test time
predictors that never win within tolerance can be masked out and the
remainder sampled uniformly.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc

PHI_FLOOR = 1e-12
DEFAULT_TAU_PAIR = 0.05
DEFAULT_EPSILON = 0.05
VARIANT_KINDS = ("vanilla_wta", "relaxed_wta", "evolving_wta", "mixture_wta")


class MclError(Exception):
    pass


@dataclass(frozen=True)
class LossVariant:
    kind: str
    epsilon: float = DEFAULT_EPSILON  # relaxed_wta weight on non-winners
    k: int = 1  # evolving_wta active top-k

    def __post_init__(self):
        if self.kind not in VARIANT_KINDS:
            raise MclError(f"unknown loss variant {self.kind!r}")
        if not 0.0 < self.epsilon < 1.0:
            raise MclError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.k < 1:
            raise MclError(f"top-k must be at least 1, got {self.k}")


def ewta_schedule(step, total_steps, M):
    """Top-k for the evolving variant: halve k on a fixed phase grid, ending at 1."""
    if not 0 <= step < total_steps:
        raise MclError(f"step {step} outside [0, {total_steps})")
    if M <= 1:
        return 1
    num_phases = int(math.floor(math.log2(M))) + 1  # length of the chain M, M//2, ..., 1
    phase = min(int(step * num_phases / total_steps), num_phases - 1)
    return max(1, M >> phase)


@dataclass
class PredictorBank:
    M: int
    num_categories: int
    nets: list  # nets[category][i] = (hidden LinearParams, output LinearParams)
    out_dim: int = 4

    @staticmethod
    def create(rng, shared_width, num_categories, M=10, hidden=64, prefix="bank", out_dim=4):
        nets = []
        for c in range(num_categories):
            row = []
            for i in range(M):
                name = f"{prefix}.c{c}.h{i}"
                row.append(
                    (
                        dc.LinearParams.create(rng, shared_width, hidden, f"{name}.l1"),
                        dc.LinearParams.create(rng, hidden, out_dim, f"{name}.l2"),
                    )
                )
            nets.append(row)
        return PredictorBank(M=M, num_categories=num_categories, nets=nets, out_dim=out_dim)

    def named(self):
        out = []
        for row in self.nets:
            for l1, l2 in row:
                out.extend(l1.named())
                out.extend(l2.named())
        return out


@dataclass
class MixtureParams:
    M: int
    num_categories: int
    l1: dc.LinearParams
    l2: dc.LinearParams

    @staticmethod
    def create(rng, shared_width, num_categories, M=10, hidden=32, prefix="mixture"):
        return MixtureParams(
            M=M,
            num_categories=num_categories,
            l1=dc.LinearParams.create(rng, shared_width + num_categories, hidden, f"{prefix}.l1"),
            l2=dc.LinearParams.create(rng, hidden, M, f"{prefix}.l2"),
        )

    def named(self):
        return self.l1.named() + self.l2.named()


@dataclass
class MclParams:
    bank: PredictorBank
    mixture: MixtureParams

    @staticmethod
    def create(rng, shared_width, num_categories, M=10, bank_hidden=64, mixture_hidden=32, prefix="mcl"):
        return MclParams(
            bank=PredictorBank.create(rng, shared_width, num_categories, M, bank_hidden, f"{prefix}.bank"),
            mixture=MixtureParams.create(rng, shared_width, num_categories, M, mixture_hidden, f"{prefix}.mixture"),
        )

    def named(self):
        return self.bank.named() + self.mixture.named()


@dataclass
class MixtureCoefficients:
    phi: dc.Tensor  # length-M probability vector


@dataclass
class HypothesisSet:
    hypotheses: dc.Tensor  # (M, 4), each row in (0, 1)^4
    phi: MixtureCoefficients
    winner_index: int | None = None


def _check_category(category, num_categories):
    if not 0 <= category < num_categories:
        raise MclError(f"category {category} outside vocabulary of size {num_categories}")


def hypotheses_batch(x, category, bank):
    """All M bbox hypotheses of one category for (B, W) inputs: (B, M, out)."""
    _check_category(category, bank.num_categories)
    batch = x.shape[0]
    slices = []
    for l1, l2 in bank.nets[category]:
        out = dc.linear(dc.linear(x, l1).relu(), l2).sigmoid()
        slices.append(out.reshape((batch, 1, bank.out_dim)))
    return dc.concat(slices, axis=1)


def mixture_batch(x, category, params):
    """Mixture coefficients of one category for (B, W) inputs: (B, M)."""
    _check_category(category, params.num_categories)
    onehot = np.zeros((x.shape[0], params.num_categories))
    onehot[:, category] = 1.0
    joined = dc.concat([x, dc.Tensor(onehot)])
    return dc.linear(dc.linear(joined, params.l1).relu(), params.l2).softmax()


def mixture_layer(x_shared, category, params):
    phi = mixture_batch(_as_row(x_shared), category, params).reshape((params.M,))
    return MixtureCoefficients(phi=phi)


def predict_hypotheses(x_shared, category, mcl):
    """Hypothesis set (no winner) for a single shared representation."""
    x = _as_row(x_shared)
    hyps = hypotheses_batch(x, category, mcl.bank).reshape((mcl.bank.M, 4))
    return HypothesisSet(hypotheses=hyps, phi=mixture_layer(x, category, mcl.mixture))


def _as_row(x):
    if not isinstance(x, dc.Tensor):
        x = dc.Tensor(np.asarray(x, dtype=np.float64))
    if x.data.ndim == 1:
        x = x.reshape((1, x.shape[0]))
    return x


def l1_distances_batch(hyps, y):
    """Per-hypothesis L1 distance to targets: (B, M, D) x (B, D) -> (B, M)."""
    targets = dc.Tensor(np.asarray(y, dtype=np.float64).reshape(hyps.shape[0], 1, hyps.shape[2]))
    return (hyps - targets).abs().sum(axis=2)


def select_winners(distances):
    """Row argmin over (B, M) distances; ties go to the lowest index."""
    return np.argmin(np.asarray(distances), axis=-1)


def _weights_for(variant, dists_data):
    batch, M = dists_data.shape
    winners = select_winners(dists_data)
    rows = np.arange(batch)
    if variant.kind == "vanilla_wta":
        w = np.zeros((batch, M))
        w[rows, winners] = 1.0
    elif variant.kind == "relaxed_wta":
        w = np.full((batch, M), variant.epsilon)
        w[rows, winners] = 1.0
    elif variant.kind == "evolving_wta":
        k = min(variant.k, M)
        top = np.argsort(dists_data, axis=1, kind="stable")[:, :k]
        w = np.zeros((batch, M))
        w[rows[:, None], top] = 1.0
    else:
        raise MclError(f"no static weights for variant {variant.kind!r}")
    return w, winners


def wta_loss_batch(hyps, y, variant, phi=None):
    """Per-example winner-takes-all loss over (B, M, 4) hypotheses: (B,)."""
    if hyps.shape[1] == 0:
        raise MclError("empty hypothesis set")
    dists = l1_distances_batch(hyps, y)
    if variant.kind == "mixture_wta":
        if phi is None:
            raise MclError("mixture_wta needs mixture coefficients")
        winners = select_winners(dists.data)
        phi_w = dc.take_per_row(phi, winners).clip_min(PHI_FLOOR)
        return -phi_w.log() * dc.take_per_row(dists, winners)
    weights, _ = _weights_for(variant, dists.data)
    return (dists * dc.Tensor(weights)).sum(axis=1)


def wta_loss(hypotheses, y, variant, phi=None):
    """Scalar loss for one example; hypotheses (M, D), y in [0,1]^D."""
    M = hypotheses.shape[0]
    if M == 0:
        raise MclError("empty hypothesis set")
    hyps = hypotheses.reshape((1, M, hypotheses.shape[1]))
    phi_row = phi.phi.reshape((1, M)) if isinstance(phi, MixtureCoefficients) else (phi.reshape((1, M)) if phi is not None else None)
    return wta_loss_batch(hyps, np.asarray(y).reshape(1, -1), variant, phi_row).sum()


@dataclass
class PairReport:
    paired: dict  # (category, index) -> won at least once under tau
    mean_phi: dict  # (category, index) -> average coefficient mass
    paired_count: int
    unpaired_mass: float  # mean over examples of phi mass on unpaired predictors


def pair_report(bank, mixture_params, eval_set, tau_pair=DEFAULT_TAU_PAIR):
    """Which predictors win within tolerance, and how much phi mass they hold."""
    paired = {(c, i): False for c in range(bank.num_categories) for i in range(bank.M)}
    phi_sums = {key: 0.0 for key in paired}
    counts = {c: 0 for c in range(bank.num_categories)}
    rows = []
    for x, category, y in eval_set:
        hyps = hypotheses_batch(_as_row(x), category, bank)
        dists = l1_distances_batch(hyps, np.asarray(y).reshape(1, -1)).data[0]
        winner = int(np.argmin(dists))
        phi = mixture_batch(_as_row(x), category, mixture_params).data[0]
        if dists[winner] < tau_pair:
            paired[(category, winner)] = True
        counts[category] += 1
        for i in range(bank.M):
            phi_sums[(category, i)] += phi[i]
        rows.append((category, phi))
    mean_phi = {
        (c, i): (phi_sums[(c, i)] / counts[c] if counts[c] else 0.0) for (c, i) in paired
    }
    unpaired = [
        sum(phi[i] for i in range(bank.M) if not paired[(category, i)])
        for category, phi in rows
    ]
    return PairReport(
        paired=paired,
        mean_phi=mean_phi,
        paired_count=sum(paired.values()),
        unpaired_mass=float(np.mean(unpaired)) if unpaired else 0.0,
    )


def sample_predictor(phi, paired_mask, rng, renormalize=True):
    """Draw a predictor index from phi, or uniformly over paired predictors."""
    probs = phi.data if isinstance(phi, dc.Tensor) else np.asarray(phi, dtype=np.float64)
    probs = probs.reshape(-1)
    if renormalize:
        paired_idx = np.flatnonzero(np.asarray(paired_mask, dtype=bool))
        if paired_idx.size == 0:
            raise MclError("no paired predictors; sample with renormalize=False to use raw coefficients")
        return int(rng.choice(paired_idx))
    return int(rng.choice(probs.size, p=probs / probs.sum()))
