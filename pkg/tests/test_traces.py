import io

import numpy as np
import pytest

from csidistill.errors import DataError, FormatError, TruncatedError
from csidistill.traces import (
    TRACE_HEADER_SIZE, CsiTrace, chirp_phase, encode_trace, make_splits, read_manifest,
    read_trace, synth_dataset, write_manifest, write_trace,
)


def small_trace(T=2, S=1, A=2, label=1, seed=0):
    rng = np.random.default_rng(seed)
    x = (rng.standard_normal((T, S, A)) + 1j * rng.standard_normal((T, S, A))).astype(np.complex64)
    return CsiTrace(x, 100.0, label, location_id=2, orientation_id=3, subject_id=4)


def test_header_layout_is_32_bytes():
    # magic 4 + three u32 + f64 + four u16
    assert TRACE_HEADER_SIZE == 4 + 12 + 8 + 8 == 32


def test_minimal_trace_size():
    buf = io.BytesIO()
    n = write_trace(small_trace(), buf)
    # 4 complex samples, 8 bytes each
    assert n == TRACE_HEADER_SIZE + 4 * 8
    assert len(buf.getvalue()) == n
    assert buf.getvalue()[:4] == b"CSI1"


def test_round_trip_bit_exact(tmp_path):
    tr = small_trace(T=7, S=5, A=3, label=5)
    path = tmp_path / "t.csi"
    write_trace(tr, path)
    back = read_trace(path)
    assert back.samples.tobytes() == tr.samples.tobytes()
    assert (back.sample_rate, back.label, back.location_id, back.orientation_id,
            back.subject_id) == (100.0, 5, 2, 3, 4)
    assert encode_trace(back) == path.read_bytes()


def test_nan_sample_rejected_before_writing():
    x = np.ones((2, 1, 2), dtype=np.complex64)
    x[1, 0, 1] = np.nan
    with pytest.raises(DataError):
        CsiTrace(x, 100.0, 0)
    tr = small_trace()
    tr.samples[0, 0, 0] = np.nan
    buf = io.BytesIO()
    with pytest.raises(DataError):
        write_trace(tr, buf)
    assert buf.getvalue() == b""


def test_bad_magic():
    data = bytearray(encode_trace(small_trace()))
    data[:4] = b"XXXX"
    with pytest.raises(FormatError):
        read_trace(io.BytesIO(bytes(data)))


def test_truncated_payload():
    data = encode_trace(small_trace(T=4))
    with pytest.raises(TruncatedError):
        read_trace(io.BytesIO(data[:-3]))
    with pytest.raises(TruncatedError):
        read_trace(io.BytesIO(data[:10]))


def test_label_out_of_range_on_read():
    data = bytearray(encode_trace(small_trace()))
    data[24:26] = (6).to_bytes(2, "little")
    with pytest.raises(DataError):
        read_trace(io.BytesIO(bytes(data)))


@pytest.mark.parametrize("shape", [(1, 1, 2), (2, 1, 1), (2, 0, 2)])
def test_shape_invariants(shape):
    with pytest.raises(DataError):
        CsiTrace(np.ones(shape, complex), 100.0, 0)


def test_manifest_round_trip(tmp_path):
    names = ["a.csi", "sub/b.csi"]
    write_manifest(names, tmp_path / "m.txt")
    assert read_manifest(tmp_path / "m.txt") == [tmp_path / "a.csi", tmp_path / "sub/b.csi"]


# ----------------------------------------------------------------------------
# synthetic generator


def test_synth_deterministic():
    a = synth_dataset(1, 2, 2, T=32, S=4, A=3, seed=7)
    b = synth_dataset(1, 2, 2, T=32, S=4, A=3, seed=7)
    assert all(x.samples.tobytes() == y.samples.tobytes() for x, y in zip(a, b))
    c = synth_dataset(1, 2, 2, T=32, S=4, A=3, seed=8)
    assert a[0].samples.tobytes() != c[0].samples.tobytes()


def test_synth_counts_and_tags():
    data = synth_dataset(4, 3, 5, T=16, S=2, A=2, seed=0)
    assert len(data) == 6 * 3 * 5 * 4 == 360
    labels = np.array([t.label for t in data])
    assert np.bincount(labels).tolist() == [60] * 6
    assert {t.location_id for t in data} == {0, 1, 2}
    assert {t.orientation_id for t in data} == set(range(5))


def test_synth_noise_free_cell_differs_only_by_jitter():
    kw = dict(T=64, S=3, A=3, noise_sigma=0.0, seed=3)
    fixed = synth_dataset(2, 1, 1, jitter=0.0, **kw)
    jittered = synth_dataset(2, 1, 1, jitter=0.1, **kw)
    for c in range(6):
        a, b = fixed[2 * c], fixed[2 * c + 1]
        assert a.samples.tobytes() == b.samples.tobytes()
        a, b = jittered[2 * c], jittered[2 * c + 1]
        assert not np.array_equal(a.samples, b.samples)


def test_synth_round_trips_through_files(tmp_path):
    tr = synth_dataset(1, 1, 1, T=16, S=3, A=2, seed=1)[4]
    write_trace(tr, tmp_path / "x.csi")
    assert read_trace(tmp_path / "x.csi").samples.tobytes() == tr.samples.tobytes()


def test_class_chirps_pairwise_distinct():
    t = np.arange(256) / 100.0
    pats = [chirp_phase(c, t, 2.56) for c in range(6)]
    for i in range(6):
        for j in range(i + 1, 6):
            assert np.linalg.norm(pats[i] - pats[j]) > 1.0


# ----------------------------------------------------------------------------
# splits


@pytest.fixture(scope="module")
def grid():
    return synth_dataset(2, 3, 5, T=8, S=1, A=2, seed=0)


def test_in_domain_four_to_one():
    data = [CsiTrace(np.ones((2, 1, 2), complex), 1.0, i % 6) for i in range(100)]
    sp = make_splits(data, "in-domain", train_fraction=0.8, seed=0)
    assert (len(sp.train_ids), len(sp.test_ids)) == (80, 20)
    assert not set(sp.train_ids) & set(sp.test_ids)
    assert {data[i].label for i in sp.train_ids} == set(range(6))


def test_in_domain_deterministic(grid):
    a = make_splits(grid, "in-domain", seed=4)
    b = make_splits(grid, "in-domain", seed=4)
    c = make_splits(grid, "in-domain", seed=5)
    assert a == b
    assert a.train_ids != c.train_ids


def test_cross_location_tests_on_all_others(grid):
    sp = make_splits(grid, "cross-location", 0)
    assert {grid[i].location_id for i in sp.train_ids} == {0}
    assert {grid[i].location_id for i in sp.test_ids} == {1, 2}
    assert len(sp.train_ids) + len(sp.test_ids) == len(grid)


def test_cross_orientation_partition(grid):
    sp = make_splits(grid, "cross-orientation", 2)
    assert {grid[i].orientation_id for i in sp.train_ids} == {2}
    assert 2 not in {grid[i].orientation_id for i in sp.test_ids}


def test_single_location_has_empty_test():
    data = synth_dataset(1, 1, 2, T=8, S=1, A=2, seed=0)
    with pytest.raises(DataError, match="empty test"):
        make_splits(data, "cross-location", 0)


def test_missing_holdout_value(grid):
    with pytest.raises(DataError):
        make_splits(grid, "cross-location", 9)


def test_class_absent_from_train():
    data = [CsiTrace(np.ones((2, 1, 2), complex), 1.0, c, location_id=int(c == 5))
            for c in range(6)] * 2
    with pytest.raises(DataError, match="absent"):
        make_splits(data, "cross-location", 0)
