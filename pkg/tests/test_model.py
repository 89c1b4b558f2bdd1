"""Model composite: construction, checkpoint directory round trip, manifests."""

import numpy as np
import pytest

from layout_mcl.data import CategoryVocabulary
from layout_mcl.encoder import EncoderConfig
from layout_mcl.model import LayoutModel, ModelConfig, ModelError, checkpoint_hash

VOCAB = CategoryVocabulary(("title", "text", "figure"))

TINY = ModelConfig(
    encoder=EncoderConfig(num_categories=3, gru_layers=1, gru_hidden=6, conv_layers=2, conv_channels=3, raster_res=8, spatial_width=6),
    M=3,
    bank_hidden=5,
    mixture_hidden=4,
    head_hidden=5,
)


def make_model(seed=0, config=TINY):
    return LayoutModel.create(np.random.default_rng(seed), VOCAB, config)


def test_desk_and_paper_configs_are_expressible():
    desk = ModelConfig.desk(5)
    assert desk.encoder.gru_hidden == 32
    assert desk.encoder.raster_res == 16
    assert desk.encoder.conv_layers == 2
    paper = ModelConfig.paper(25)
    assert paper.encoder.gru_hidden == 128
    assert paper.encoder.raster_res == 32
    assert paper.encoder.conv_layers == 5
    assert paper.M == 10


def test_vocabulary_size_must_match_encoder():
    with pytest.raises(ModelError):
        LayoutModel.create(np.random.default_rng(0), VOCAB, ModelConfig.desk(7))


def test_parameter_names_are_unique():
    model = make_model()
    names = [name for name, _ in model.named()]
    assert len(names) == len(set(names))


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    model = make_model(seed=1)
    model.paired[1, 2] = False
    path = model.save(tmp_path / "ckpt", extra={"note": "fixture"})
    loaded, manifest = LayoutModel.load(path)
    assert manifest["note"] == "fixture"
    assert manifest["vocabulary"] == ["title", "text", "figure"]
    assert manifest["params_sha256"] == checkpoint_hash(path)
    np.testing.assert_array_equal(loaded.paired, model.paired)
    for (name_a, a), (name_b, b) in zip(model.named(), loaded.named()):
        assert name_a == name_b
        np.testing.assert_array_equal(a.data, b.data)
    assert loaded.config == model.config


def test_missing_manifest_is_error(tmp_path):
    with pytest.raises(ModelError):
        LayoutModel.load(tmp_path / "nowhere")


def test_corrupt_manifest_is_error(tmp_path):
    path = make_model().save(tmp_path / "ckpt")
    (path / "manifest.json").write_text('{"format": "something-else"}', encoding="utf-8")
    with pytest.raises(ModelError):
        LayoutModel.load(path)


def test_default_pairing_marks_every_predictor_usable():
    model = make_model()
    assert model.paired.shape == (3, 3)
    assert model.paired.all()
