import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eigengame import ConfigError, Dataset, ParseError, Spectrum, jacobi_eigh, load_edges, load_matrix, sample_batch, save_matrix, synth_covariance
from eigengame.data_io import load_labels, save_edges, save_labels, sym_sqrt
from eigengame.linalg import rng_stream


class TestSpectrum:
    def test_exponential(self):
        np.testing.assert_allclose(Spectrum("exponential", d=3, lambda1=1, ratio=0.5).values(), [1, 0.5, 0.25])

    def test_linear(self):
        np.testing.assert_allclose(Spectrum("linear", d=3, lambda1=3, lambda_d=1).values(), [3, 2, 1])

    def test_linear_default_floor(self):
        np.testing.assert_allclose(Spectrum("linear", d=4, lambda1=1).values()[-1], 0.25)

    @pytest.mark.parametrize("kw", [dict(kind="exp", ratio=1.0), dict(kind="exp", ratio=0.0),
                                    dict(kind="linear", lambda_d=2.0), dict(kind="exp", lambda1=-1.0),
                                    dict(kind="cubic"), dict(kind="exp", d=0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            Spectrum(**kw).values()


class TestSynth:
    def test_oracle_roundtrip(self):
        S, truth = synth_covariance(Spectrum("exp", d=3, lambda1=1, ratio=0.5), seed=1)
        np.testing.assert_allclose(jacobi_eigh(S).eigenvalues, [1, 0.5, 0.25], atol=1e-10)
        np.testing.assert_allclose(np.abs(jacobi_eigh(S).eigenvectors.T @ truth.eigenvectors), np.eye(3),
                                   atol=1e-8)

    def test_identity_rotation(self):
        S, _ = synth_covariance(Spectrum("linear", d=3, lambda1=3, lambda_d=1), 0, rotation=np.eye(3))
        np.testing.assert_allclose(S, np.diag([3, 2, 1]))

    def test_symmetric_and_pd(self):
        S, _ = synth_covariance(Spectrum("exp", d=20), seed=9)
        np.testing.assert_array_equal(S, S.T)
        assert jacobi_eigh(S).eigenvalues[-1] > 0

    def test_sym_sqrt(self):
        S, _ = synth_covariance(Spectrum("exp", d=6), seed=2)
        R = sym_sqrt(S)
        np.testing.assert_allclose(R @ R, S, atol=1e-12)


class TestSampling:
    def test_sequential_full_batch(self):
        X = np.arange(12.0).reshape(4, 3)
        np.testing.assert_array_equal(sample_batch(Dataset(rows=X, sequential=True), 4, None), X)

    def test_sequential_wraps(self):
        X = np.arange(5.0)[:, None]
        ds = Dataset(rows=X, sequential=True)
        np.testing.assert_array_equal(sample_batch(ds, 3, None, step=1)[:, 0], [3, 4, 0])

    def test_reproducible(self):
        ds = Dataset(rows=np.random.default_rng(0).standard_normal((30, 2)))
        a = [sample_batch(ds, 4, r) for r in [rng_stream(1, 1)] * 3]
        b = [sample_batch(ds, 4, r) for r in [rng_stream(1, 1)] * 3]
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_generator_covariance(self):
        S, _ = synth_covariance(Spectrum("exp", d=4, ratio=0.5), seed=3)
        X = sample_batch(Dataset.gaussian(S), 1_000_000, rng_stream(0, 1))
        emp = X.T @ X / X.shape[0]
        assert np.linalg.norm(emp - S) / np.linalg.norm(S) < 1e-2

    def test_dataset_validation(self):
        with pytest.raises(ConfigError):
            Dataset()
        with pytest.raises(ConfigError):
            Dataset(rows=np.zeros((0, 3)))


class TestMatrixFiles:
    def test_scalar(self, tmp_path):
        save_matrix(tmp_path / "m.egm", [[42.0]])
        np.testing.assert_array_equal(load_matrix(tmp_path / "m.egm"), [[42.0]])

    def test_header_bytes(self, tmp_path):
        save_matrix(tmp_path / "m.egm", np.zeros((2, 3)))
        raw = (tmp_path / "m.egm").read_bytes()
        assert raw[:20] == b"EGM1" + bytes([2, 0, 0, 0, 0, 0, 0, 0]) + bytes([3, 0, 0, 0, 0, 0, 0, 0])
        assert len(raw) == 20 + 48

    def test_values_little_endian_row_major(self, tmp_path):
        save_matrix(tmp_path / "m.egm", [[1.0, 2.0], [3.0, 4.0]])
        raw = (tmp_path / "m.egm").read_bytes()
        np.testing.assert_array_equal(np.frombuffer(raw[20:], "<f8"), [1, 2, 3, 4])

    def test_csv(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1.5,2.0\n3.0,4.0\n")
        np.testing.assert_array_equal(load_matrix(p), [[1.5, 2.0], [3.0, 4.0]])

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)),
                  elements=st.floats(allow_nan=False, allow_infinity=False)))
    def test_roundtrip(self, tmp_path_factory, M):
        d = tmp_path_factory.mktemp("rt")
        for name in ("m.egm", "m.csv"):
            save_matrix(d / name, M)
            np.testing.assert_array_equal(load_matrix(d / name), M)
        first = (d / "m.egm").read_bytes()
        save_matrix(d / "m.egm", load_matrix(d / "m.egm"))
        assert (d / "m.egm").read_bytes() == first

    def test_bad_magic(self, tmp_path):
        (tmp_path / "m.egm").write_bytes(b"EGM2" + bytes(16))
        with pytest.raises(ParseError) as info:
            load_matrix(tmp_path / "m.egm")
        assert info.value.position == 0

    def test_truncated(self, tmp_path):
        save_matrix(tmp_path / "m.egm", np.ones((2, 2)))
        (tmp_path / "m.egm").write_bytes((tmp_path / "m.egm").read_bytes()[:-3])
        with pytest.raises(ParseError):
            load_matrix(tmp_path / "m.egm")

    def test_ragged_csv(self, tmp_path):
        (tmp_path / "m.csv").write_text("1,2\n3\n")
        with pytest.raises(ParseError) as info:
            load_matrix(tmp_path / "m.csv")
        assert info.value.position == 2


class TestEdgeFiles:
    def test_single_edge(self, tmp_path):
        (tmp_path / "g").write_text("0 1\n")
        g = load_edges(tmp_path / "g")
        assert g.num_nodes == 2 and g.edges.tolist() == [[0, 1]]

    def test_nodes_directive(self, tmp_path):
        (tmp_path / "g").write_text("# nodes=5\n0 1\n")
        assert load_edges(tmp_path / "g").num_nodes == 5

    def test_self_loop(self, tmp_path):
        (tmp_path / "g").write_text("2 2\n")
        with pytest.raises(ParseError):
            load_edges(tmp_path / "g")

    def test_directive_after_edges(self, tmp_path):
        (tmp_path / "g").write_text("0 1\n# nodes=5\n")
        with pytest.raises(ParseError):
            load_edges(tmp_path / "g")

    def test_roundtrip(self, tmp_path):
        (tmp_path / "g").write_text("# a comment\n# nodes=4\n0 1\n\n2 3\n")
        g = load_edges(tmp_path / "g")
        save_edges(tmp_path / "h", g)
        h = load_edges(tmp_path / "h")
        assert h.num_nodes == 4
        np.testing.assert_array_equal(h.edges, g.edges)


def test_labels_roundtrip(tmp_path):
    save_labels(tmp_path / "l.csv", [1, 0, 2])
    np.testing.assert_array_equal(load_labels(tmp_path / "l.csv"), [1, 0, 2])
