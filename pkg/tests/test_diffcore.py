"""Gradient and contract tests for the tensor engine."""

import numpy as np
import pytest

from layout_mcl import diffcore as dc
from layout_mcl.diffcore import GruParams, LinearParams, Tape, Tensor

from gradcheck import assert_gradients_match, rand_tensor


RNG = np.random.default_rng(20240611)


def scalarize(t):
    return t.mean()


# ---------------------------------------------------------------------------
# analytic spot checks


def test_sigmoid_at_zero():
    x = Tensor([0.0])
    with Tape() as tape:
        y = x.sigmoid()
        tape.backward(y.sum())
    assert y.data[0] == pytest.approx(0.5)
    assert tape.grad(x)[0] == pytest.approx(0.25)


def test_softmax_equal_logits_is_uniform():
    for m in (2, 5, 10):
        x = Tensor(np.full((1, m), 3.7))
        np.testing.assert_allclose(dc.softmax(x, axis=1).data, np.full((1, m), 1.0 / m))


def test_matmul_identity():
    a = rand_tensor(RNG, (3, 3))
    eye = Tensor(np.eye(3))
    np.testing.assert_array_equal(dc.matmul(eye, a).data, a.data)


def test_sum_of_squares_gradient():
    x = Tensor([1.0, 2.0])
    with Tape() as tape:
        loss = (x * x).sum()
        tape.backward(loss)
    np.testing.assert_allclose(tape.grad(x), [2.0, 4.0])


def test_unused_parameter_gradient_is_exactly_zero():
    x = Tensor([1.0, 2.0])
    unused = Tensor([5.0])
    with Tape() as tape:
        loss = (x * x).sum()
        grads = tape.backward(loss, params=[unused])
    assert grads[0].shape == (1,)
    assert (grads[0] == 0.0).all()


def test_backward_rejects_non_scalar_root():
    x = Tensor([1.0, 2.0])
    with Tape() as tape:
        y = x * x
        with pytest.raises(dc.DiffcoreError):
            tape.backward(y)


def test_shape_mismatch_reports_primitive_and_shapes():
    a, b = Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3)))
    with pytest.raises(dc.ShapeError) as err:
        dc.matmul(a, b)
    assert "matmul" in str(err.value)
    assert "(2, 3)" in str(err.value)


def test_softmax_is_a_distribution():
    x = rand_tensor(RNG, (4, 7), low=-5, high=5)
    s = dc.softmax(x, axis=1).data
    assert (s >= 0).all()
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-9)


def test_forward_determinism():
    x = Tensor(np.linspace(-1, 1, 12).reshape(3, 4))
    w = Tensor(np.linspace(0.5, -0.5, 8).reshape(4, 2))
    a = dc.matmul(x, w).tanh().softmax(axis=1).data
    b = dc.matmul(x, w).tanh().softmax(axis=1).data
    assert (a == b).all()


# ---------------------------------------------------------------------------
# finite-difference oracle over every primitive

# inputs drawn away from the kinks of relu/abs/clip so the FD oracle is valid
PRIMITIVE_CASES = [
    ("add", lambda a, b: scalarize((dc.add(a, b) * 1.7).tanh()), [(3, 4), (3, 4)]),
    ("add_broadcast", lambda a, b: scalarize(dc.add(a, b).sigmoid()), [(3, 4), (4,)]),
    ("mul", lambda a, b: scalarize(dc.mul(a, b).tanh()), [(2, 5), (2, 5)]),
    ("mul_broadcast", lambda a, b: scalarize(dc.mul(a, b).tanh()), [(2, 5), (5,)]),
    ("matmul", lambda a, b: scalarize(dc.matmul(a, b).tanh()), [(3, 4), (4, 2)]),
    ("concat", lambda a, b: scalarize(dc.concat([a, b], axis=1).tanh()), [(2, 3), (2, 4)]),
    ("slice", lambda a: scalarize(a.slice(1, 3, axis=1).tanh()), [(3, 5)]),
    ("relu", lambda a: scalarize(a.relu()), [(4, 4)]),
    ("sigmoid", lambda a: scalarize(a.sigmoid()), [(4, 4)]),
    ("tanh", lambda a: scalarize(a.tanh()), [(4, 4)]),
    ("softmax", lambda a: scalarize((dc.softmax(a, axis=1) * dc.softmax(a, axis=1)).sum()), [(3, 6)]),
    ("log_softmax", lambda a: scalarize(dc.log_softmax(a, axis=1).tanh()), [(3, 6)]),
    ("exp", lambda a: scalarize(a.exp()), [(3, 3)]),
    ("mean", lambda a: (a.tanh()).mean(), [(3, 7)]),
    ("abs", lambda a: scalarize(a.abs()), [(4, 4)]),
    ("sum_all", lambda a: (a.tanh().sum() * 0.1).sum(), [(2, 6)]),
    ("sum_axis0", lambda a: scalarize(a.sum(axis=0).tanh()), [(5, 3)]),
    ("sum_axis1", lambda a: scalarize(a.sum(axis=1).tanh()), [(5, 3)]),
    ("reshape", lambda a: scalarize(a.reshape((6, 2)).tanh()), [(3, 4)]),
    ("gather_rows", lambda a: scalarize(dc.gather_rows(a, [2, 0, 2]).tanh()), [(4, 3)]),
    ("take_per_row", lambda a: scalarize(dc.take_per_row(a, [1, 0, 2]).tanh()), [(3, 4)]),
]


@pytest.mark.parametrize("name,fn,shapes", PRIMITIVE_CASES, ids=[c[0] for c in PRIMITIVE_CASES])
def test_primitive_gradients(name, fn, shapes):
    rng = np.random.default_rng(hash(name) % 2**32)
    tensors = []
    for shape in shapes:
        t = rand_tensor(rng, shape)
        # keep clear of non-differentiable points
        t.data[np.abs(t.data) < 0.05] = 0.25
        tensors.append(t)
    assert_gradients_match(fn, tensors)


def test_log_gradient():
    rng = np.random.default_rng(7)
    x = rand_tensor(rng, (3, 3), low=0.2, high=2.0)
    assert_gradients_match(lambda a: scalarize(a.log()), [x])


def test_clip_min_gradient_away_from_boundary():
    rng = np.random.default_rng(8)
    x = rand_tensor(rng, (4, 4))
    x.data[np.abs(x.data - 0.1) < 0.05] = 0.5
    assert_gradients_match(lambda a: scalarize(a.clip_min(0.1).tanh()), [x])


@pytest.mark.parametrize("stride,padding", [(1, "same"), (2, "same"), (1, "valid")])
def test_conv2d_gradients(stride, padding):
    rng = np.random.default_rng(stride * 31 + len(padding))
    x = rand_tensor(rng, (2, 2, 5, 5), name="x")
    k = rand_tensor(rng, (3, 2, 3, 3), name="k")
    assert_gradients_match(lambda a, b: scalarize(dc.conv2d(a, b, stride=stride, padding=padding).tanh()), [x, k])


def test_conv2d_same_output_shape():
    x = Tensor(np.zeros((1, 3, 7, 7)))
    k = Tensor(np.zeros((4, 3, 3, 3)))
    assert dc.conv2d(x, k, stride=1).shape == (1, 4, 7, 7)
    assert dc.conv2d(x, k, stride=2).shape == (1, 4, 4, 4)


def test_conv2d_channel_mismatch():
    x = Tensor(np.zeros((1, 3, 7, 7)))
    k = Tensor(np.zeros((4, 2, 3, 3)))
    with pytest.raises(dc.ShapeError):
        dc.conv2d(x, k)


# ---------------------------------------------------------------------------
# recurrent cells


def test_gru_zero_params_give_zero_state():
    p = GruParams(
        wx=Tensor(np.zeros((5, 9))),
        wh=Tensor(np.zeros((3, 9))),
        bx=Tensor(np.zeros(9)),
        bh=Tensor(np.zeros(9)),
        hidden=3,
    )
    x = Tensor(np.ones((2, 5)))
    h = Tensor(np.zeros((2, 3)))
    out = dc.gru_cell(x, h, p)
    np.testing.assert_array_equal(out.data, np.zeros((2, 3)))


def test_bigru_single_step_matches_cells():
    rng = np.random.default_rng(11)
    fwd = GruParams.create(rng, 4, 3, "fwd")
    bwd = GruParams.create(rng, 4, 3, "bwd")
    x = rand_tensor(rng, (2, 4))
    fwd_states, bwd_states = dc.bigru([x], fwd, bwd)
    h0 = Tensor(np.zeros((2, 3)))
    np.testing.assert_allclose(fwd_states[0].data, dc.gru_cell(x, h0, fwd).data)
    np.testing.assert_allclose(bwd_states[0].data, dc.gru_cell(x, h0, bwd).data)


def test_bigru_rejects_empty_sequence():
    rng = np.random.default_rng(12)
    fwd = GruParams.create(rng, 4, 3, "fwd")
    bwd = GruParams.create(rng, 4, 3, "bwd")
    with pytest.raises(dc.DiffcoreError):
        dc.bigru([], fwd, bwd)


def test_bigru_gradients_through_time():
    rng = np.random.default_rng(13)
    fwd = GruParams.create(rng, 3, 4, "fwd")
    bwd = GruParams.create(rng, 3, 4, "bwd")
    seq = [rand_tensor(rng, (2, 3), name=f"x{t}") for t in range(3)]

    def run(*steps):
        fs, bs = dc.bigru(list(steps), fwd, bwd)
        return scalarize(dc.concat([fs[-1], bs[0]], axis=1).tanh())

    assert_gradients_match(run, seq)


def test_gru_parameter_gradients():
    rng = np.random.default_rng(14)
    fwd = GruParams.create(rng, 3, 4, "fwd")
    x0, x1 = rand_tensor(rng, (1, 3)), rand_tensor(rng, (1, 3))

    def run(wx, wh, bx, bh):
        p = GruParams(wx=wx, wh=wh, bx=bx, bh=bh, hidden=4)
        h = dc.gru_cell(x0, Tensor(np.zeros((1, 4))), p)
        h = dc.gru_cell(x1, h, p)
        return scalarize(h)

    assert_gradients_match(run, [fwd.wx, fwd.wh, fwd.bx, fwd.bh])


# ---------------------------------------------------------------------------
# composed networks (up to 3 layers)


def test_three_layer_network_gradients():
    rng = np.random.default_rng(15)
    l1 = LinearParams.create(rng, 4, 5, "l1")
    l2 = LinearParams.create(rng, 5, 5, "l2")
    l3 = LinearParams.create(rng, 5, 2, "l3")
    x = rand_tensor(rng, (3, 4))

    def run(w1, b1, w2, b2, w3, b3):
        h = (dc.matmul(x, w1) + b1).relu()
        h = (dc.matmul(h, w2) + b2).tanh()
        out = (dc.matmul(h, w3) + b3).sigmoid()
        return scalarize(out)

    assert_gradients_match(run, [l1.w, l1.b, l2.w, l2.b, l3.w, l3.b])


# ---------------------------------------------------------------------------
# checkpoint container


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(16)
    named = [
        ("enc.w", rand_tensor(rng, (3, 4))),
        ("enc.b", rand_tensor(rng, (4,))),
        ("bank.0.k", rand_tensor(rng, (2, 2, 3, 3))),
    ]
    path = tmp_path / "params.bin"
    dc.save_params(path, named)
    loaded = dc.load_params(path)
    assert set(loaded) == {"enc.w", "enc.b", "bank.0.k"}
    for name, tensor in named:
        np.testing.assert_array_equal(loaded[name], tensor.data)


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
    with pytest.raises(dc.DiffcoreError):
        dc.load_params(path)
