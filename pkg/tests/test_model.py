import numpy as np
import pytest

from csidistill.errors import DataError, FormatError, NumericError, TruncatedError
from csidistill.model import (
    PARAM_NAMES, backward, checkpoint_hash, conv_out_len, decode_checkpoint,
    encode_checkpoint, encoded_len, forward, init_params, load_checkpoint, save_checkpoint,
)

from .oracles import central_difference, max_rel_error


def random_state(seed, cin=3, d=8, C=6, scale=1.0):
    st = init_params(seed, cin, d, C)
    rng = np.random.default_rng(seed + 1000)
    for k, v in st.params.items():
        if k.endswith("_b"):
            v[:] = 0.1 * rng.standard_normal(v.shape)
        v *= scale
    return st


def test_length_formula():
    assert conv_out_len(256) == 126
    assert encoded_len(256) == 61
    assert encoded_len(25) == 4
    assert encoded_len(64) == 13


def test_zero_network_zero_output():
    st = init_params(0, 4, 8, 6)
    for v in st.params.values():
        v[:] = 0
    rec = forward(st, np.zeros((40, 4)))
    assert not np.any(rec.segment_embeddings)
    assert not np.any(rec.pooled_embedding)
    assert not np.any(rec.logits)


def test_shapes_and_mean_pooling():
    st = random_state(1)
    x = np.random.default_rng(0).standard_normal((256, 3))
    rec = forward(st, x)
    assert rec.segment_embeddings.shape == (61, 8)
    assert rec.logits.shape == (6,)
    np.testing.assert_allclose(rec.pooled_embedding, rec.segment_embeddings.mean(axis=0),
                               atol=1e-12, rtol=0)


def test_constant_input_gives_equal_segments():
    st = random_state(2)
    x = np.tile(np.array([0.3, -1.0, 2.0]), (50, 1))
    rec = forward(st, x)
    np.testing.assert_allclose(rec.segment_embeddings,
                               np.broadcast_to(rec.segment_embeddings[0], rec.segment_embeddings.shape),
                               atol=1e-14)
    np.testing.assert_allclose(rec.pooled_embedding, rec.segment_embeddings[0], atol=1e-14)


def test_forward_is_pure():
    st = random_state(3)
    x = np.random.default_rng(1).standard_normal((30, 3))
    a, b = forward(st, x), forward(st, x)
    assert a.logits.tobytes() == b.logits.tobytes()
    assert a.segment_embeddings.tobytes() == b.segment_embeddings.tobytes()


def test_forward_errors():
    st = random_state(0)
    with pytest.raises(DataError):
        forward(st, np.zeros((30, 4)))
    with pytest.raises(DataError):
        forward(st, np.zeros((24, 3)))
    x = np.zeros((30, 3))
    x[3, 1] = np.inf
    with pytest.raises(NumericError):
        forward(st, x)


def test_init_params():
    a, b = init_params(5, 30, 64, 6), init_params(5, 30, 64, 6)
    for k in PARAM_NAMES:
        assert np.array_equal(a.params[k], b.params[k])
        assert not np.any(a.grads[k])
        assert a.grads[k].shape == a.params[k].shape
    for k in ("conv1_b", "conv2_b", "proj_b", "cls_b"):
        assert not np.any(a.params[k])
    bound = np.sqrt(6.0 / (5 * 30 + 5 * 32))
    assert np.max(np.abs(a.params["conv1_w"])) <= bound
    assert np.max(np.abs(a.params["proj_w"])) <= np.sqrt(6.0 / (64 + 64))


def upstream(rec, seed):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal(rec.segment_embeddings.shape),
            rng.standard_normal(rec.pooled_embedding.shape),
            rng.standard_normal(rec.logits.shape))


def test_zero_upstream_leaves_buffers():
    st = random_state(4)
    rec = forward(st, np.random.default_rng(0).standard_normal((30, 3)))
    backward(st, rec, np.zeros((5, 8)), np.zeros(8), np.zeros(6))
    backward(st, rec)
    assert all(not np.any(g) for g in st.grads.values())


def test_backward_accumulates():
    st = random_state(5)
    rec = forward(st, np.random.default_rng(0).standard_normal((30, 3)))
    gs, gp, gl = upstream(rec, 1)
    backward(st, rec, gs, gp, gl)
    once = {k: v.copy() for k, v in st.grads.items()}
    backward(st, rec, gs, gp, gl)
    for k in PARAM_NAMES:
        np.testing.assert_allclose(st.grads[k], 2 * once[k], rtol=1e-14, atol=1e-15)


def test_backward_shape_mismatch():
    st = random_state(5)
    rec = forward(st, np.zeros((30, 3)))
    with pytest.raises(DataError):
        backward(st, rec, np.zeros((4, 8)), None, None)


def test_gradient_full_check_small_model():
    st = random_state(7, cin=2, d=3, C=4)
    x = np.random.default_rng(7).standard_normal((27, 2))
    rec = forward(st, x)
    gs, gp, gl = upstream(rec, 8)
    backward(st, rec, gs, gp, gl)

    for name in PARAM_NAMES:
        def f(p, name=name):
            saved = st.params[name]
            st.params[name] = p
            r = forward(st, x)
            st.params[name] = saved
            return (np.sum(gs * r.segment_embeddings) + gp @ r.pooled_embedding
                    + gl @ r.logits)
        fd = central_difference(f, st.params[name], 1e-4)
        assert max_rel_error(st.grads[name], fd) < 1e-4, name


def test_checkpoint_round_trip(tmp_path):
    st = random_state(9, cin=5, d=7, C=6)
    save_checkpoint(st, tmp_path / "m.glsd")
    back = load_checkpoint(tmp_path / "m.glsd")
    for k in PARAM_NAMES:
        assert back.params[k].tobytes() == st.params[k].tobytes()
    assert encode_checkpoint(back) == (tmp_path / "m.glsd").read_bytes()
    assert checkpoint_hash(back) == checkpoint_hash(st)


def test_checkpoint_errors():
    data = encode_checkpoint(random_state(0))
    assert data[:4] == b"GLSD"
    with pytest.raises(TruncatedError):
        decode_checkpoint(data[:-8])
    with pytest.raises(FormatError):
        decode_checkpoint(b"XXXX" + data[4:])
    bad_version = data[:4] + (2).to_bytes(4, "little") + data[8:]
    with pytest.raises(FormatError):
        decode_checkpoint(bad_version)
