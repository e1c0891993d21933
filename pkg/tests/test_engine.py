import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_conv3d
from x3d_forge.arch import ArchConfig, BlockSpec, ExpansionFactors, instantiate, preset_spec
from x3d_forge.cost import count_params, propagate_shapes
from x3d_forge.engine import backend, block_forward, conv3d, features, forward, head, init_weights
from x3d_forge.engine import ops

BACKENDS = sorted(backend.BACKENDS)


def random_case(rng):
    groups_kind = rng.integers(3)
    c_in = int(rng.integers(1, 5))
    if groups_kind == 0:
        groups, c_out = 1, int(rng.integers(1, 5))
    elif groups_kind == 1:
        groups, c_out = c_in, c_in * int(rng.integers(1, 3))
    else:
        groups = 2
        c_in, c_out = 2 * c_in, 2 * int(rng.integers(1, 3))
    k = tuple(int(v) for v in rng.choice([1, 3], size=3))
    stride = tuple(int(v) for v in rng.integers(1, 3, size=3))
    pad = tuple(int(rng.integers(0, kk // 2 + 1)) for kk in k)
    size = tuple(int(v) for v in rng.integers(3, 7, size=3))
    x = rng.standard_normal((int(rng.integers(1, 3)), c_in) + size).astype(np.float32)
    w = rng.standard_normal((c_out, c_in // groups) + k).astype(np.float32)
    return x, w, stride, pad, groups


@pytest.mark.parametrize("name", BACKENDS)
def test_conv_matches_naive_oracle(name):
    rng = np.random.default_rng(1234)
    for _ in range(20):
        x, w, stride, pad, groups = random_case(rng)
        got = conv3d(x, w, stride, pad, groups, backend=name)
        want = naive_conv3d(x, w, stride, pad, groups)
        assert got.dtype == np.float32
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)


def test_native_backend_is_built():
    assert "native" in backend.BACKENDS, "compiled extension missing; run pip install -e ."


@pytest.mark.parametrize("name", BACKENDS)
def test_thread_count_does_not_change_bits(name):
    rng = np.random.default_rng(7)
    x = rng.standard_normal((3, 8, 4, 9, 9)).astype(np.float32)
    w = rng.standard_normal((8, 1, 3, 3, 3)).astype(np.float32)
    a = conv3d(x, w, (1, 2, 2), (1, 1, 1), 8, threads=1, backend=name)
    b = conv3d(x, w, (1, 2, 2), (1, 1, 1), 8, threads=4, backend=name)
    assert np.array_equal(a, b)


def test_conv_rejects_group_mismatch():
    x = np.zeros((1, 4, 2, 4, 4), np.float32)
    with pytest.raises(ValueError):
        conv3d(x, np.zeros((4, 3, 1, 1, 1), np.float32))
    with pytest.raises(ValueError):
        conv3d(x[0], np.zeros((4, 4, 1, 1, 1), np.float32))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_backends_agree(seed):
    if len(BACKENDS) < 2:
        pytest.skip("only one backend available")
    x, w, stride, pad, groups = random_case(np.random.default_rng(seed))
    a, b = (conv3d(x, w, stride, pad, groups, backend=n) for n in BACKENDS)
    np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-5)


@pytest.mark.parametrize("name", ["X2D", "X3D-S", "X3D-M"])
def test_weight_count_equals_param_count(name):
    spec = preset_spec(name)
    assert init_weights(spec, 0).element_count() == count_params(spec)


def test_weights_depend_only_on_seed():
    spec = preset_spec("X2D")
    assert init_weights(spec, 5).equals(init_weights(spec, 5))
    assert not init_weights(spec, 5).equals(init_weights(spec, 6))


@pytest.mark.parametrize("name", ["X2D", "X3D-XS", "X3D-S"])
def test_forward_trace_matches_shape_propagation(name):
    spec = preset_spec(name)
    g = spec.input
    clip = np.zeros((1, 3, g.frames, g.resolution, g.resolution), np.float32)
    trace = []
    logits = forward(spec, init_weights(spec, 0), clip, trace=trace)
    assert logits.shape == (1, 400)
    want = [(s.layer_id, s.out_T, s.out_H, s.out_W, s.out_C) for s in propagate_shapes(spec)]
    assert trace == want


def test_forward_rejects_wrong_geometry():
    spec = preset_spec("X2D")
    with pytest.raises(ValueError):
        forward(spec, init_weights(spec, 0), np.zeros((1, 3, 2, 112, 112), np.float32))


def test_head_recomputes_forward():
    spec = instantiate(ExpansionFactors(gamma_t=2, gamma_s=4 / 7), ArchConfig(min_res5_size=1))
    w = init_weights(spec, 3)
    clip = np.random.default_rng(0).standard_normal((2, 3, 2, 64, 64)).astype(np.float32)
    assert np.array_equal(head(w, features(spec, w, clip)), forward(spec, w, clip))


def test_forward_deterministic_across_threads():
    spec = instantiate(ExpansionFactors(gamma_t=2, gamma_s=4 / 7), ArchConfig(min_res5_size=1))
    w = init_weights(spec, 1)
    clip = np.random.default_rng(1).standard_normal((2, 3, 2, 64, 64)).astype(np.float32)
    assert np.array_equal(forward(spec, w, clip, threads=1), forward(spec, w, clip, threads=4))


def _se_weights(c, r, bias):
    return (
        np.zeros((r, c), np.float32),
        np.zeros(r, np.float32),
        np.zeros((c, r), np.float32),
        np.full(c, bias, np.float32),
    )


def test_se_gate_saturates():
    x = np.random.default_rng(0).standard_normal((2, 4, 2, 3, 3)).astype(np.float32)
    np.testing.assert_allclose(ops.squeeze_excite(x, *_se_weights(4, 1, 50.0)), x, rtol=1e-6)
    np.testing.assert_allclose(ops.squeeze_excite(x, *_se_weights(4, 1, -50.0)), 0, atol=1e-12)
    np.testing.assert_allclose(ops.squeeze_excite(x, *_se_weights(4, 1, 0.0)), 0.5 * x, rtol=1e-6)


def test_residual_passthrough_with_zero_branch():
    block = BlockSpec(in_width=4, bottleneck_width=6, out_width=4)
    rng = np.random.default_rng(0)
    affine = {"scale": np.ones(6, np.float32), "shift": np.zeros(6, np.float32)}
    weights = {
        "a": {"weight": rng.standard_normal((6, 4, 1, 1, 1)).astype(np.float32), **affine},
        "b": {"weight": rng.standard_normal((6, 1, 3, 3, 3)).astype(np.float32), **affine},
        "c": {
            "weight": np.zeros((4, 6, 1, 1, 1), np.float32),
            "scale": np.ones(4, np.float32),
            "shift": np.zeros(4, np.float32),
        },
    }
    x = rng.standard_normal((1, 4, 2, 5, 5)).astype(np.float32)
    np.testing.assert_array_equal(block_forward(block, x, weights), np.maximum(x, 0))


def test_swish_and_norm():
    x = np.array([-2.0, 0.0, 3.0], np.float32)
    np.testing.assert_allclose(ops.swish(x), x / (1 + np.exp(-x)), rtol=1e-6)
    y = np.ones((1, 2, 1, 1, 1), np.float32)
    out = ops.norm(y, np.array([2.0, 1.0], np.float32), np.array([0.0, 1.0], np.float32))
    np.testing.assert_allclose(out.ravel(), [2 / np.sqrt(1 + 1e-5), 1 / np.sqrt(1 + 1e-5) + 1], rtol=1e-6)
