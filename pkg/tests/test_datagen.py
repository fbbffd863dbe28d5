import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from covgp.datagen import (
    DatasetFormatError,
    SyntheticSpec,
    load_dataset,
    load_features,
    sample_gp,
    save_dataset,
    split,
)
from covgp.kernel import MaternParams, covariance_matrix
from covgp.kriging import Dataset


class TestSampleGp:
    def test_deterministic(self):
        spec = SyntheticSpec(50, MaternParams(0.425, 0.675, tau2=1e-10), seed=7)
        assert sample_gp(spec) == sample_gp(spec)
        assert not np.array_equal(sample_gp(spec).responses, sample_gp(SyntheticSpec(50, spec.params, seed=8)).responses)

    def test_features_in_domain(self):
        data = sample_gp(SyntheticSpec(200, MaternParams(1.0, 0.3, tau2=1e-8), domain=(-2.0, 3.0), dims=2, seed=1))
        assert data.features.shape == (200, 2)
        assert data.features.min() >= -2.0 and data.features.max() < 3.0

    def test_grid_layout(self):
        data = sample_gp(SyntheticSpec(11, MaternParams(1.0, 0.3, tau2=1e-8), layout="grid"))
        np.testing.assert_allclose(data.features[:, 0], np.linspace(0, 1, 11))

    def test_single_point_variance(self):
        p = MaternParams(0.7, 0.2, gamma2=2.0, tau2=0.5)
        y = np.array([sample_gp(SyntheticSpec(1, p, seed=s)).responses[0] for s in range(100_000)])
        assert np.var(y) == pytest.approx(p.prior_variance, rel=0.02)

    def test_empirical_covariance(self):
        p = MaternParams(0.5, 0.1, tau2=1e-6)
        reps = 2000
        Y = np.array([sample_gp(SyntheticSpec(500, p, layout="grid", seed=s)).responses for s in range(reps)])
        X = np.linspace(0, 1, 500)[:, None]
        K = covariance_matrix(X, None, p)
        S = Y.T @ Y / reps  # zero-mean process
        se = np.sqrt((K ** 2 + np.outer(np.diag(K), np.diag(K))) / reps)
        assert np.all(np.abs(S - K) <= 5 * se)

    def test_mahalanobis_chi_square(self):
        n, reps = 6, 4000
        p = MaternParams(1.3, 0.4, gamma2=1.5, tau2=1e-4)
        X = np.linspace(0, 1, n)[:, None]
        Kinv = np.linalg.inv(covariance_matrix(X, None, p))
        m = np.empty(reps)
        for s in range(reps):
            y = sample_gp(SyntheticSpec(n, p, layout="grid", seed=s)).responses
            m[s] = y @ Kinv @ y
        se = math.sqrt(2 * n / reps)
        assert abs(m.mean() - n) <= 3 * se
        assert stats.kstest(m, stats.chi2(n).cdf).pvalue > 1e-3

    def test_log_density_finite(self):
        p = MaternParams(0.425, 0.675, tau2=1e-10)
        data = sample_gp(SyntheticSpec(8, p, seed=3))
        K = covariance_matrix(data.features, None, p)
        assert np.isfinite(stats.multivariate_normal(np.zeros(8), K).logpdf(data.responses))

    def test_exponential_markov_sampler(self):
        # the 1-D exponential kernel is sampled by an exact Markov recursion past the dense cap;
        # whitening the sorted path must give iid standard normals
        p = MaternParams(0.5, 0.05, tau2=1e-12)
        data = sample_gp(SyntheticSpec(100_000, p, seed=11))
        order = np.argsort(data.features[:, 0])
        x, y = data.features[order, 0], data.responses[order]
        a = np.exp(-np.diff(x) / p.rho)
        e = (y[1:] - a * y[:-1]) / np.sqrt(1 - a * a)
        assert abs(e.mean()) < 5 / math.sqrt(e.size)
        assert e.var() == pytest.approx(1.0, abs=5 * math.sqrt(2 / e.size))
        assert abs(np.corrcoef(e[1:], e[:-1])[0, 1]) < 5 / math.sqrt(e.size)

    def test_markov_sampler_matches_kernel_small(self):
        from covgp.datagen import _sample_exponential_1d

        p = MaternParams(0.5, 0.3, gamma2=2.0, tau2=1e-3)
        X = np.linspace(0, 1, 20)[:, None]
        rng = np.random.default_rng(0)
        Y = np.array([_sample_exponential_1d(X, p, rng) for _ in range(20000)])
        K = covariance_matrix(X, None, p)
        se = np.sqrt((K ** 2 + np.outer(np.diag(K), np.diag(K))) / len(Y))
        assert np.all(np.abs(Y.T @ Y / len(Y) - K) <= 5 * se)

    def test_size_cap(self):
        with pytest.raises(ValueError, match="20000"):
            sample_gp(SyntheticSpec(20001, MaternParams(1.0, 0.5)))

    def test_factorization_failure_suggests_nugget(self):
        with pytest.raises(np.linalg.LinAlgError, match="tau2"):
            sample_gp(SyntheticSpec(400, MaternParams(2.5, 5.0, tau2=0.0), seed=0))

    @pytest.mark.parametrize("kw", [dict(n_points=0), dict(domain=(1.0, 1.0)), dict(dims=0), dict(layout="hex"),
                                    dict(layout="grid", dims=2)])
    def test_spec_validation(self, kw):
        base = dict(n_points=5, params=MaternParams(1.0, 1.0))
        base.update(kw)
        with pytest.raises(ValueError):
            SyntheticSpec(**base)


class TestSplit:
    def _data(self, n):
        return Dataset(np.arange(n, dtype=float)[:, None], np.arange(n, dtype=float) * 10)

    def test_half(self):
        train, test = split(self._data(10), 0.5, 0)
        assert train.n == test.n == 5
        assert set(train.features[:, 0]) | set(test.features[:, 0]) == set(range(10))

    def test_full_size(self):
        train, test = split(self._data(10000), 0.5, 3)
        assert (train.n, test.n) == (5000, 5000)

    @pytest.mark.parametrize("f", [0.0, 1.0, 0.05])
    def test_degenerate(self, f):
        with pytest.raises(ValueError):
            split(self._data(10), f, 0)


@settings(max_examples=80, deadline=None)
@given(n=st.integers(2, 300), f=st.floats(0.01, 0.99), seed=st.integers(0, 2**31))
def test_split_partition(n, f, seed):
    data = Dataset(np.arange(n, dtype=float)[:, None], np.arange(n, dtype=float))
    if not 1 <= math.floor(f * n) < n:
        with pytest.raises(ValueError):
            split(data, f, seed)
        return
    train, test = split(data, f, seed)
    a, b = train.features[:, 0].astype(int), test.features[:, 0].astype(int)
    assert train.n == math.floor(f * n) and test.n == n - math.floor(f * n)
    assert not set(a) & set(b)
    assert sorted(np.concatenate([a, b]).tolist()) == list(range(n))
    np.testing.assert_array_equal(train.responses, a)
    again = split(data, f, seed)
    assert again[0] == train and again[1] == test


class TestFiles:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        data = Dataset(rng.random((3, 2)) * 1e-7, rng.standard_normal(3) * 1e9)
        save_dataset(data, tmp_path / "d.csv")
        assert load_dataset(tmp_path / "d.csv") == data
        assert (tmp_path / "d.csv").read_text().splitlines()[0] == "f0,f1,y"

    def test_no_temp_files_left(self, tmp_path):
        save_dataset(Dataset([[0.0]], [1.0]), tmp_path / "d.csv")
        assert [p.name for p in tmp_path.iterdir()] == ["d.csv"]

    def test_nan_reports_line(self, tmp_path):
        (tmp_path / "d.csv").write_text("f0,y\n0.1,1.0\n0.2,nan\n")
        with pytest.raises(DatasetFormatError, match=":3:"):
            load_dataset(tmp_path / "d.csv")

    def test_bad_field_count(self, tmp_path):
        (tmp_path / "d.csv").write_text("f0,y\n0.1,1.0,3\n")
        with pytest.raises(DatasetFormatError, match=":2:"):
            load_dataset(tmp_path / "d.csv")

    def test_header_only(self, tmp_path):
        (tmp_path / "d.csv").write_text("f0,f1,y\n")
        with pytest.raises(DatasetFormatError, match="empty dataset"):
            load_dataset(tmp_path / "d.csv")

    def test_scientific_notation_accepted(self, tmp_path):
        (tmp_path / "d.csv").write_text("f0,y\n1e-3,2.5E2\n")
        data = load_dataset(tmp_path / "d.csv")
        assert data.features[0, 0] == 1e-3 and data.responses[0] == 250.0

    def test_features_only(self, tmp_path):
        (tmp_path / "z.csv").write_text("f0,f1\n1,2\n3,4\n")
        np.testing.assert_array_equal(load_features(tmp_path / "z.csv"), [[1, 2], [3, 4]])
        (tmp_path / "e.csv").write_text("f0,f1\n")
        assert load_features(tmp_path / "e.csv").shape == (0, 2)

    def test_missing_response_column(self, tmp_path):
        (tmp_path / "z.csv").write_text("f0,f1\n1,2\n")
        with pytest.raises(DatasetFormatError, match="'y'"):
            load_dataset(tmp_path / "z.csv")
