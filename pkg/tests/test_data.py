import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from widthlab.data import (
    DataError,
    Dataset,
    InsufficientDataError,
    batch_iter,
    gen_synthetic,
    load_cifar2,
    read_cifar_records,
)


def cifar_bytes(labels, fill=None, seed=0):
    rng = np.random.default_rng(seed)
    recs = []
    for lab in labels:
        px = rng.integers(0, 256, 3072, dtype=np.uint8) if fill is None else np.full(3072, fill, np.uint8)
        recs.append(np.concatenate([[lab], px]).astype(np.uint8))
    return np.concatenate(recs).tobytes() if recs else b""


class TestDatasetInvariants:
    def test_rejects_nan(self):
        x = np.array([[0.0], [np.nan]])
        with pytest.raises(DataError):
            Dataset(x, np.array([0, 1]))

    def test_rejects_single_class(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((3, 2)), np.array([1, 1, 1]))

    def test_rejects_bad_labels(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((2, 2)), np.array([0, 2]))

    def test_rejects_too_few(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((1, 2)), np.array([0]))

    def test_arrays_read_only(self):
        ds = gen_synthetic(8, 3, 1.0, 0)
        with pytest.raises(ValueError):
            ds.inputs[0, 0] = 1.0

    def test_csv_roundtrip(self, tmp_path):
        ds = gen_synthetic(10, 3, 2.0, 5)
        ds.to_csv(tmp_path / "d.csv")
        assert (tmp_path / "d.csv").read_text().splitlines()[0] == "label,f0,f1,f2"
        back = Dataset.from_csv(tmp_path / "d.csv")
        np.testing.assert_array_equal(back.inputs, ds.inputs)
        np.testing.assert_array_equal(back.labels, ds.labels)


class TestSynthetic:
    def test_zero_separation_same_distribution(self):
        ds = gen_synthetic(4, 2, 0.0, 7)
        assert ds.labels.sum() == 2
        assert ds.d0 == 2

    def test_deterministic(self):
        a, b = gen_synthetic(256, 20, 3.0, 1), gen_synthetic(256, 20, 3.0, 1)
        assert a.inputs.tobytes() == b.inputs.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()

    def test_first_feature_separates(self):
        ds = gen_synthetic(256, 20, 3.0, 1)
        proj = ds.inputs[:, 0]
        # best single threshold on the projection, searched exhaustively
        best = max(np.mean((proj > t) == (ds.labels > 0.5)) for t in np.sort(proj))
        assert best > 0.9

    def test_unit_rms(self):
        ds = gen_synthetic(64, 5, 3.0, 2)
        np.testing.assert_allclose(np.sqrt(np.mean(ds.inputs**2)), 1.0, rtol=1e-12)

    def test_rejects_odd(self):
        with pytest.raises(DataError):
            gen_synthetic(5, 2, 1.0, 0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 32), st.integers(1, 6), st.floats(0, 5), st.integers(0, 2**31))
    def test_always_valid(self, half, d0, sep, seed):
        ds = gen_synthetic(2 * half, d0, sep, seed)
        assert ds.n == 2 * half
        assert ds.labels.sum() == half
        assert np.all(np.isfinite(ds.inputs))


class TestCifar:
    def test_filters_to_two_classes(self, tmp_path):
        f = tmp_path / "data_batch_1.bin"
        f.write_bytes(cifar_bytes([0, 7, 1]))
        labels, _ = read_cifar_records(f)
        assert np.sum(labels <= 1) == 2

    def test_pixels_scaled(self, tmp_path):
        f = tmp_path / "b.bin"
        f.write_bytes(cifar_bytes([0, 1, 1, 0], fill=255))
        train, test = load_cifar2(f, 2, 2)
        np.testing.assert_allclose(train.inputs, 1.0)
        assert train.d0 == 3072

    def test_split_order_and_directory(self, tmp_path):
        (tmp_path / "data_batch_1.bin").write_bytes(cifar_bytes([0, 1, 9]))
        (tmp_path / "data_batch_2.bin").write_bytes(cifar_bytes([1, 0, 3], seed=1))
        train, test = load_cifar2(tmp_path, 2, 2)
        np.testing.assert_array_equal(train.labels, [0, 1])
        np.testing.assert_array_equal(test.labels, [1, 0])

    def test_bad_size(self, tmp_path):
        f = tmp_path / "b.bin"
        f.write_bytes(b"\x00" * 3074)
        with pytest.raises(DataError):
            read_cifar_records(f)

    def test_empty_file(self, tmp_path):
        f = tmp_path / "b.bin"
        f.write_bytes(b"")
        with pytest.raises(DataError):
            load_cifar2(f, 1, 1)

    def test_insufficient(self, tmp_path):
        f = tmp_path / "b.bin"
        f.write_bytes(cifar_bytes([0, 1, 5]))
        with pytest.raises(InsufficientDataError):
            load_cifar2(f, 2, 2)


class TestBatches:
    def test_full_batch_natural_order(self):
        (b,) = batch_iter(10, 10, 3, 0)
        np.testing.assert_array_equal(b, np.arange(10))

    def test_deterministic(self):
        a = batch_iter(4, 2, 11, 0)
        b = batch_iter(4, 2, 11, 0)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_epochs_differ(self):
        a = np.concatenate(batch_iter(64, 8, 0, 0))
        b = np.concatenate(batch_iter(64, 8, 0, 1))
        assert not np.array_equal(a, b)

    @given(st.integers(1, 64).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n))),
           st.integers(0, 1000), st.integers(0, 5))
    def test_partition(self, nb, seed, epoch):
        n, bs = nb
        batches = batch_iter(n, bs, seed, epoch)
        flat = np.concatenate(batches)
        assert len(batches) == -(-n // bs)
        assert sorted(flat.tolist()) == list(range(n))
