import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchvsr.errors import InvalidConfigError, ShapeError, SnapshotError
from patchvsr.model import (
    ConditioningBundle,
    MacCounter,
    MicroCondition,
    ModelWeights,
    OracleModel,
    StochasticOracleModel,
    ToyDenoiser,
    attention,
    attention_weights,
    base_forward,
    global_encode,
    lora_apply,
    micro_embed,
    oracle_velocity,
    patch_branch_features,
    smooth_perturbation,
    stochastic_oracle_velocity,
    toy_denoiser_predict,
)
from patchvsr.model.weights import MAGIC
from patchvsr.schedule import forward_diffuse, gaussian_noise
from patchvsr.tiling import partition


@pytest.fixture(scope="module")
def zero_w():
    return ModelWeights.init(seed=5)


@pytest.fixture(scope="module")
def live_w():
    return ModelWeights.init(seed=5, zero_adapters=False)


def bundle(rng, shape=(2, 8, 8, 12), scale=2.0, mask=None, origin=(0, 0)):
    mask = np.zeros(shape[1:3]) if mask is None else mask
    return ConditioningBundle(rng.standard_normal(shape), rng.standard_normal(shape), mask,
                              MicroCondition(250, scale, origin))


# oracles

def test_oracle_examples(rng):
    target = rng.standard_normal((1, 4, 4, 2))
    eps = rng.standard_normal(target.shape)
    assert np.all(oracle_velocity(target, target, 0.3) == 0)
    assert np.array_equal(oracle_velocity(target, eps, 1.0), target - eps)
    assert np.all(oracle_velocity(np.ones(3), np.full(3, 0.5), 0.5) == 1.0)
    assert np.all(np.isfinite(oracle_velocity(target, eps, 0.0)))


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1.0), st.integers(0, 1000))
def test_oracle_consistency(t, seed):
    z0 = gaussian_noise((1, 3, 3, 2), seed, 1)
    eps = gaussian_noise(z0.shape, seed, 2)
    v = oracle_velocity(z0, forward_diffuse(z0, t, eps), t)
    assert np.abs(v - (z0 - eps)).max() <= 1e-9


def test_stochastic_oracle(rng):
    target, z = rng.standard_normal((2, 1, 8, 8, 12))
    assert np.array_equal(stochastic_oracle_velocity(target, z, 0.5, 3, 0.0), oracle_velocity(target, z, 0.5))
    a = stochastic_oracle_velocity(target, z, 0.5, 3, 0.1, stream=4)
    assert a.tobytes() == stochastic_oracle_velocity(target, z, 0.5, 3, 0.1, stream=4).tobytes()
    assert np.any(a != stochastic_oracle_velocity(target, z, 0.5, 3, 0.1, stream=5))


def test_perturbation_rms():
    shape = (4, 64, 64, 12)  # ~2e5 elements
    target = np.zeros(shape)
    dev = stochastic_oracle_velocity(target, target, 0.5, 0, 0.1, stream=7)
    assert abs(np.sqrt(np.mean(dev ** 2)) - 0.1) <= 0.005


def test_perturbation_is_smooth():
    p = smooth_perturbation((1, 64, 64, 1), 0, 0)
    white = gaussian_noise((1, 64, 64, 1), 0, 0)
    assert np.abs(np.diff(p, axis=2)).mean() < 0.5 * np.abs(np.diff(white, axis=2)).mean()


def test_oracle_models_use_patch_footprint(rng):
    canvas = rng.standard_normal((1, 16, 16, 12))
    grid = partition(canvas.shape, (8, 8))
    spec = grid.patch(1)
    cond = ConditioningBundle(np.zeros((1, 8, 8, 12)), np.zeros((1, 8, 8, 12)), np.zeros((8, 8)), patch=spec)
    z = np.zeros((1, 8, 8, 12))
    assert np.array_equal(OracleModel(canvas).predict(z, 1.0, cond), spec.extract(canvas))
    sm = StochasticOracleModel(canvas, seed=0, amplitude=0.0)
    assert np.array_equal(sm.predict(z, 1.0, cond), spec.extract(canvas))


# attention and LoRA

def test_attention_examples(rng):
    q = rng.standard_normal((5, 3))
    k = rng.standard_normal((1, 3))
    v = rng.standard_normal((1, 4))
    assert np.allclose(attention(q, k, v), np.broadcast_to(v, (5, 4)), atol=1e-15)
    k_same = np.tile(rng.standard_normal((1, 3)), (6, 1))
    vals = rng.standard_normal((6, 2))
    assert np.allclose(attention(q, k_same, vals), vals.mean(axis=0), atol=1e-12)
    keys, values = np.array([[0.0], [math.log(3)]]), np.array([[1.0], [2.0]])
    # scores (0, ln 3) need a unit query; a zero query scores both keys equally
    assert attention(np.array([[1.0]]), keys, values)[0, 0] == pytest.approx(1.75, abs=1e-12)
    assert attention(np.array([[0.0]]), keys, values)[0, 0] == pytest.approx(1.5, abs=1e-12)


def test_attention_errors():
    with pytest.raises(ShapeError):
        attention(np.zeros((0, 3)), np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        attention(np.zeros((2, 3)), np.zeros((2, 4)), np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        attention(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((3, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.integers(1, 8), st.integers(0, 2**31))
def test_softmax_rows_sum_to_one(nq, nk, d, seed):
    rng = np.random.default_rng(seed)
    w = attention_weights(5 * rng.standard_normal((nq, d)), 5 * rng.standard_normal((nk, d)))
    assert np.abs(w.sum(axis=-1) - 1).max() <= 1e-6


def test_mac_counter():
    c = MacCounter()
    attention(np.zeros((3, 10, 4)), np.zeros((3, 7, 4)), np.zeros((3, 7, 5)), c)
    assert c.macs == 3 * 10 * 7 * (4 + 5) and c.calls == 1


def test_lora_examples(rng):
    W, A, B, x = rng.standard_normal((4, 3)), rng.standard_normal((2, 3)), rng.standard_normal((4, 2)), rng.standard_normal((5, 3))
    assert np.array_equal(lora_apply(W, A, np.zeros_like(B), x), x @ W.T)
    assert np.array_equal(lora_apply(W, np.zeros_like(A), B, x), x @ W.T)
    out = lora_apply(np.eye(2), np.array([[0.0, 1.0]]), np.array([[1.0], [0.0]]), np.array([3.0, 4.0]))
    assert out.tolist() == [7.0, 4.0]
    with pytest.raises(ShapeError):
        lora_apply(W, A, rng.standard_normal((3, 2)), x)


# toy denoiser

def test_global_encode(zero_w, live_w, rng):
    out = global_encode(zero_w, np.zeros((1, 16, 16, 12)), np.zeros((16, 16)))
    assert out.shape == (1, 64, zero_w.config.width) and np.all(np.isfinite(out))
    lat = rng.standard_normal((2, 8, 8, 12))
    mask = np.zeros((8, 8))
    flipped = mask.copy()
    flipped[2, 5] = 1
    assert np.abs(global_encode(live_w, lat, mask) - global_encode(live_w, lat, flipped)).max() > 0
    with pytest.raises(ShapeError):
        global_encode(zero_w, lat, np.zeros((8, 6)))


def test_patch_branch(zero_w, live_w, rng):
    lat = rng.standard_normal((2, 8, 8, 12))
    feats = patch_branch_features(zero_w, lat, 0.3)
    assert len(feats) == zero_w.config.depth and all(np.all(f == 0) for f in feats)
    a = patch_branch_features(live_w, lat, 0.3)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a, patch_branch_features(live_w, lat, 0.3)))
    b = patch_branch_features(live_w, lat + 0.1, 0.3)
    assert any(np.abs(x - y).max() > 0 for x, y in zip(a, b))
    with pytest.raises(ShapeError):
        patch_branch_features(zero_w, np.zeros((1, 8, 8, 5)), 0.3)


def test_adapter_vanishing_many_inputs(zero_w):
    rng = np.random.default_rng(0)
    for _ in range(20):
        f = int(rng.choice([1, 4]))
        s = int(rng.choice([8, 16]))
        z = rng.standard_normal((f, s, s, 12))
        t = float(rng.random())
        cond = bundle(rng, z.shape, scale=float(rng.uniform(1, 4)))
        assert toy_denoiser_predict(zero_w, z, t, cond).tobytes() == base_forward(zero_w, z, t).tobytes()


@pytest.mark.parametrize("f", [1, 4])
@pytest.mark.parametrize("s", [8, 16])
def test_output_shape(live_w, rng, f, s):
    z = rng.standard_normal((f, s, s, 12))
    assert toy_denoiser_predict(live_w, z, 0.5, bundle(rng, z.shape)).shape == z.shape


def test_scale_factor_sensitivity(live_w, rng):
    z = rng.standard_normal((1, 8, 8, 12))
    cond = bundle(rng, z.shape, scale=1.0)
    outs = []
    for scale in (1.0, 2.0, 4.0):
        c = ConditioningBundle(cond.patch_latent_noised, cond.global_latent_noised, cond.location_mask,
                               MicroCondition(250, scale, (0, 0)))
        outs.append(toy_denoiser_predict(live_w, z, 0.5, c))
    for i in range(3):
        for j in range(i + 1, 3):
            assert np.abs(outs[i] - outs[j]).max() > 0


def test_unconditional_differs_and_cfg_identity(live_w, rng):
    z = rng.standard_normal((1, 8, 8, 12))
    cond = bundle(rng, z.shape)
    assert np.abs(toy_denoiser_predict(live_w, z, 0.5, cond)
                  - toy_denoiser_predict(live_w, z, 0.5, cond.unconditional())).max() > 0
    with pytest.raises(ShapeError):
        toy_denoiser_predict(live_w, z, 0.5, bundle(rng, (1, 16, 16, 12)))


def test_micro_embed(live_w):
    a = micro_embed(live_w, 250, 2.0, (0, 0))
    assert a.shape == (live_w.config.width,)
    assert a.tobytes() == micro_embed(live_w, 250, 2.0, (0, 0)).tobytes()
    assert np.linalg.norm(a - micro_embed(live_w, 250, 3.0, (0, 0))) > 0
    with pytest.raises(InvalidConfigError):
        micro_embed(live_w, 250, 5.0, (0, 0))
    with pytest.raises(InvalidConfigError):
        micro_embed(live_w, 1200, 2.0, (0, 0))


def test_zero_init_invariants(zero_w):
    names = zero_w.adapter_names()
    assert any(n.endswith("lora_b") for n in names)
    assert any(n.startswith("patch.out") for n in names)
    assert any(n.endswith("gca.gate") for n in names)
    assert all(np.all(zero_w[n] == 0) for n in names)


def test_weights_init_deterministic():
    assert ModelWeights.init(seed=9).equal(ModelWeights.init(seed=9))
    assert not ModelWeights.init(seed=9).equal(ModelWeights.init(seed=10))


def test_snapshot_roundtrip_and_corruption(live_w, tmp_path):
    path = tmp_path / "w.bin"
    live_w.save(path)
    data = path.read_bytes()
    assert data.startswith(MAGIC)
    assert ModelWeights.load(path).equal(live_w)
    bad = bytearray(data)
    bad[len(bad) // 2] ^= 0xFF
    with pytest.raises(SnapshotError):
        ModelWeights.from_bytes(bytes(bad))
    with pytest.raises(SnapshotError):
        ModelWeights.from_bytes(data[:100])
    with pytest.raises(SnapshotError):
        ModelWeights.from_bytes(b"XXXXXXXX" + data[8:])


def test_toy_denoiser_thread_safe(live_w, rng):
    from concurrent.futures import ThreadPoolExecutor

    z = rng.standard_normal((1, 8, 8, 12))
    cond = bundle(rng, z.shape)
    model = ToyDenoiser(live_w)
    ref = model.predict(z, 0.4, cond).tobytes()
    with ThreadPoolExecutor(4) as pool:
        outs = list(pool.map(lambda _: model.predict(z, 0.4, cond).tobytes(), range(8)))
    assert all(o == ref for o in outs)
