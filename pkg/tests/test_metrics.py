"""Metrics: alignment against a brute-force oracle, FID against closed forms,
discriminator training behavior, diversity statistics."""

import json
import logging

import numpy as np
import pytest

from layout_mcl import metrics
from layout_mcl.data import Layout, LayoutObject, perturb_fake, synth_grammar
from layout_mcl.encoder import EncoderConfig
from layout_mcl.metrics import (
    FAKE_INDEX,
    REAL_INDEX,
    Discriminator,
    DiscriminatorConfig,
    MetricsError,
    alignment,
    classify,
    diversity_stats,
    fake_positive,
    features,
    fid,
    fid_from_moments,
    moments,
    train_discriminator,
)

TINY_ENCODER = EncoderConfig(
    num_categories=3,
    gru_layers=1,
    gru_hidden=6,
    conv_layers=2,
    conv_channels=3,
    raster_res=8,
    spatial_width=6,
)


def box_layout(boxes, category=0):
    objects = [
        LayoutObject(category=category, bbox=tuple(b), stop=(i == len(boxes) - 1))
        for i, b in enumerate(boxes)
    ]
    return Layout(objects=objects)


def random_layout(rng, n_objects=5):
    boxes = []
    for _ in range(n_objects):
        x, y = rng.uniform(0, 0.7, size=2)
        w, h = rng.uniform(0.05, 0.3, size=2)
        boxes.append((x, y, min(w, 1 - x), min(h, 1 - y)))
    return box_layout(boxes)


# ---------------------------------------------------------------------------
# alignment


def alignment_oracle(layouts):
    # deliberately naive: explicit loops over objects and edge kinds
    total = 0.0
    for layout in layouts:
        per_layout = []
        objs = layout.objects
        for i, a in enumerate(objs):
            best = None
            for j, b in enumerate(objs):
                if j == i:
                    continue
                left = abs(a.bbox[0] - b.bbox[0])
                center = abs((a.bbox[0] + a.bbox[2] / 2) - (b.bbox[0] + b.bbox[2] / 2))
                right = abs((a.bbox[0] + a.bbox[2]) - (b.bbox[0] + b.bbox[2]))
                candidate = min(left, center, right)
                best = candidate if best is None else min(best, candidate)
            if best is not None:
                per_layout.append(best)
        total += float(np.sum(per_layout))
    return total / len(layouts)


def test_alignment_hand_example():
    layout = box_layout([(0.10, 0.1, 0.20, 0.1), (0.15, 0.4, 0.20, 0.1)])
    assert alignment([layout]) == pytest.approx(0.10, abs=1e-12)


def test_alignment_perfect_left_alignment_is_zero():
    layout = box_layout([(0.2, 0.1, 0.3, 0.1), (0.2, 0.5, 0.3, 0.2)])
    assert alignment([layout]) == 0.0


def test_alignment_single_object_contributes_zero():
    single = box_layout([(0.3, 0.3, 0.2, 0.2)])
    assert alignment([single]) == 0.0
    pair = box_layout([(0.10, 0.1, 0.20, 0.1), (0.15, 0.4, 0.20, 0.1)])
    # normalizer counts every layout, including the zero-contribution one
    assert alignment([pair, single]) == pytest.approx(0.05, abs=1e-12)


def test_alignment_normalizes_by_layout_count():
    a = box_layout([(0.10, 0.1, 0.20, 0.1), (0.15, 0.4, 0.20, 0.1)])
    b = box_layout([(0.0, 0.1, 0.3, 0.1), (0.02, 0.4, 0.4, 0.1), (0.5, 0.7, 0.2, 0.1)])
    assert alignment([a, a, a]) == pytest.approx(alignment([a]), abs=1e-12)
    assert alignment([a, b]) == pytest.approx((alignment([a]) + alignment([b])) / 2, abs=1e-12)


def test_alignment_matches_brute_force_oracle():
    rng = np.random.default_rng(42)
    layouts = [random_layout(rng) for _ in range(100)]
    for layout in layouts:
        assert alignment([layout]) == alignment_oracle([layout])
    assert alignment(layouts) == pytest.approx(alignment_oracle(layouts), abs=1e-12)


def test_alignment_horizontal_only():
    rng = np.random.default_rng(3)
    layout = random_layout(rng)
    base = alignment([layout])

    shifted_y = Layout(
        objects=[
            LayoutObject(o.category, (o.bbox[0], o.bbox[1] * 0.5, o.bbox[2], o.bbox[3]), o.stop)
            for o in layout.objects
        ]
    )
    assert alignment([shifted_y]) == base

    moved = list(layout.objects)
    o = moved[0]
    moved[0] = LayoutObject(o.category, (o.bbox[0] + 0.013, o.bbox[1], o.bbox[2], o.bbox[3]), o.stop)
    assert alignment([Layout(objects=moved)]) != base


def test_alignment_empty_corpus_error():
    with pytest.raises(MetricsError):
        alignment([])


# ---------------------------------------------------------------------------
# FID


def test_fid_identical_sets_is_zero():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(60, 8))
    assert 0.0 <= fid(a, a) < 1e-6


def test_fid_one_dimensional_hand_case():
    assert fid_from_moments(np.array([0.0]), np.array([[1.0]]), np.array([1.0]), np.array([[1.0]])) == pytest.approx(
        1.0, abs=1e-12
    )


def test_fid_diagonal_closed_form():
    rng = np.random.default_rng(7)
    for _ in range(5):
        d = 6
        mu1, mu2 = rng.normal(size=d), rng.normal(size=d)
        c1, c2 = rng.uniform(0.1, 2.0, size=d), rng.uniform(0.1, 2.0, size=d)
        expected = float(((mu1 - mu2) ** 2).sum() + ((np.sqrt(c1) - np.sqrt(c2)) ** 2).sum())
        got = fid_from_moments(mu1, np.diag(c1), mu2, np.diag(c2))
        assert got == pytest.approx(expected, abs=1e-6)


def test_fid_symmetry_and_permutation_invariance():
    rng = np.random.default_rng(11)
    a = rng.normal(size=(64, 5))
    b = rng.normal(size=(64, 5)) + 0.3
    d = fid(a, b)
    assert d > 0
    assert fid(b, a) == pytest.approx(d, rel=1e-8)
    perm = rng.permutation(64)
    assert fid(a[perm], b[perm]) == pytest.approx(d, rel=1e-8, abs=1e-9)


def test_fid_nonfinite_features_error():
    a = np.zeros((60, 4))
    bad = a.copy()
    bad[3, 2] = np.nan
    with pytest.raises(MetricsError):
        fid(a, bad)


def test_fid_warns_on_small_sets(caplog):
    rng = np.random.default_rng(2)
    a = rng.normal(size=(10, 3))
    with caplog.at_level(logging.WARNING, logger="layout_mcl.metrics"):
        fid(a, a)
    assert any("stability minimum" in r.message for r in caplog.records)


def test_moments_requires_two_rows():
    with pytest.raises(MetricsError):
        moments(np.zeros((1, 4)))


# ---------------------------------------------------------------------------
# discriminator

CORPUS = synth_grammar(seed=5, n=96, profile="double-column-doc")
DISC_CONFIG = DiscriminatorConfig(
    encoder=TINY_ENCODER, learning_rate=0.003, batch_size=16, epochs=6, magnitude=0.25
)


@pytest.fixture(scope="module")
def trained():
    disc, accuracy = train_discriminator(CORPUS, DISC_CONFIG, np.random.default_rng(11))
    return disc, accuracy


def test_feature_width_is_fixed():
    with pytest.raises(MetricsError):
        DiscriminatorConfig(encoder=TINY_ENCODER, feature_width=256)


def test_features_shape(trained):
    disc, _ = trained
    out = features(CORPUS[:7], disc)
    assert out.shape == (7, 512)
    assert np.isfinite(out).all()


def test_magnitude_zero_fakes_give_exactly_half_accuracy():
    config = DiscriminatorConfig(encoder=TINY_ENCODER, epochs=1, magnitude=0.0)
    _, accuracy = train_discriminator(CORPUS[:24], config, np.random.default_rng(1))
    assert accuracy == 0.5


def test_accuracy_monotone_in_perturbation_magnitude(trained):
    accs = {0.25: trained[1]}
    for magnitude in (0.05, 0.15):
        config = DiscriminatorConfig(
            encoder=TINY_ENCODER, learning_rate=0.003, batch_size=16, epochs=6, magnitude=magnitude
        )
        _, accs[magnitude] = train_discriminator(CORPUS, config, np.random.default_rng(11))
    assert accs[0.05] <= accs[0.15] + 0.03
    assert accs[0.15] <= accs[0.25] + 0.03
    assert accs[0.25] > 0.6  # the sweep is not flat at chance


def test_fake_positive_plus_real_accuracy_is_one(trained):
    disc, _ = trained
    reals = synth_grammar(seed=77, n=40, profile="double-column-doc")
    real_accuracy = float((classify(reals, disc) == REAL_INDEX).mean())
    assert fake_positive(reals, disc) + real_accuracy == 1.0


def test_fake_positive_high_on_strong_perturbations(trained):
    disc, accuracy = trained
    assert accuracy >= 0.75
    rng = np.random.default_rng(13)
    fakes = [perturb_fake(l, rng, 0.25) for l in synth_grammar(seed=21, n=40, profile="double-column-doc")]
    assert fake_positive(fakes, disc) >= 0.7


def test_trained_features_separate_fakes_in_fid(trained):
    disc, _ = trained
    rng = np.random.default_rng(29)
    real_a = synth_grammar(seed=31, n=60, profile="double-column-doc")
    real_b = synth_grammar(seed=32, n=60, profile="double-column-doc")
    fakes = [perturb_fake(l, rng, 0.25) for l in real_b]
    real_real = fid(features(real_a, disc), features(real_b, disc))
    real_fake = fid(features(real_a, disc), features(fakes, disc))
    assert real_real < real_fake


def test_empty_inputs_error(trained):
    disc, _ = trained
    with pytest.raises(MetricsError):
        fake_positive([], disc)
    with pytest.raises(MetricsError):
        classify([], disc)
    with pytest.raises(MetricsError):
        features([], disc)


def test_discriminator_save_load_roundtrip(tmp_path, trained):
    disc, _ = trained
    probe = CORPUS[:9]
    before = features(probe, disc)
    disc.save(tmp_path / "disc", extra={"held_out_accuracy": trained[1]})
    loaded = Discriminator.load(tmp_path / "disc")
    assert np.array_equal(features(probe, loaded), before)
    assert np.array_equal(classify(probe, loaded), classify(probe, disc))
    manifest = json.loads((tmp_path / "disc" / "manifest.json").read_text())
    assert manifest["held_out_accuracy"] == trained[1]


def test_discriminator_load_rejects_wrong_manifest(tmp_path):
    bad = tmp_path / "not_disc"
    bad.mkdir()
    (bad / "manifest.json").write_text(json.dumps({"format": "something-else"}))
    with pytest.raises(MetricsError):
        Discriminator.load(bad)


def test_train_discriminator_needs_layouts():
    with pytest.raises(MetricsError):
        train_discriminator(CORPUS[:4], DISC_CONFIG, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# diversity


def test_diversity_identical_corpus():
    layout = box_layout([(0.1, 0.1, 0.2, 0.2)], category=1)
    stats = diversity_stats([layout] * 5)
    assert stats.distinct == 1
    assert stats.frequencies == {(1,): 1.0}


def test_diversity_two_mode_grammar():
    stats = diversity_stats(synth_grammar(seed=9, n=100, profile="double-column-doc"))
    assert stats.distinct == 2
    assert all(0.4 <= f <= 0.6 for f in stats.frequencies.values())
    assert sum(stats.frequencies.values()) == pytest.approx(1.0, abs=1e-12)


def test_diversity_distinct_bounded_by_corpus_size():
    layouts = synth_grammar(seed=4, n=30, profile="single-column-doc")
    stats = diversity_stats(layouts)
    assert 1 <= stats.distinct <= 30


def test_diversity_requires_two_layouts():
    with pytest.raises(MetricsError):
        diversity_stats([box_layout([(0.1, 0.1, 0.2, 0.2)])])


def test_metric_report_serializes():
    report = metrics.MetricReport(
        alignment=0.12,
        fid=3.4,
        fake_positive=0.25,
        diversity_distinct=2,
        diversity_frequencies={(0, 1): 0.5, (1, 0): 0.5},
    )
    d = report.to_dict()
    assert d["alignment"] == 0.12
    assert d["diversity"]["frequencies"] == {"0 1": 0.5, "1 0": 0.5}
    json.dumps(d)
