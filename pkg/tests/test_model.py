import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prtbw.model import (BalancePartition, Dataset, Dispersion, DomainError, EstimandKind, EstimandSpec, rho,
                         rho_double_prime, rho_prime)

ENT = Dispersion.entropy()
QS = Dispersion.quadratic(nonneg=False)
QN = Dispersion.quadratic(nonneg=True)


class TestRhoPrime:
    def test_entropy_at_minus_one(self):
        assert rho_prime(ENT, -1.0) == 1.0

    def test_signed_quadratic(self):
        assert rho_prime(QS, -2.0) == 1.0

    def test_nonneg_quadratic_clips(self):
        assert rho_prime(QN, 1.0) == 0.0
        assert rho_prime(QN, -4.0) == 2.0

    @pytest.mark.parametrize("t", [float("nan"), float("inf"), -float("inf")])
    def test_non_finite_rejected(self, t):
        with pytest.raises(DomainError):
            rho_prime(ENT, t)
        with pytest.raises(DomainError):
            rho(QS, t)


class TestRho:
    def test_entropy_at_zero(self):
        assert rho(ENT, 0.0) == pytest.approx(-math.exp(-1.0), abs=1e-15)
        assert rho(ENT, 0.0) == pytest.approx(-0.36788, abs=1e-5)

    def test_quadratic_at_zero(self):
        assert rho(QS, 0.0) == 0.0
        assert rho(QN, 0.0) == 0.0

    @pytest.mark.parametrize("d", [ENT, QS, QN], ids=["entropy", "quadratic", "quadratic-nonneg"])
    @pytest.mark.parametrize("t", [-2.0, 0.5, 2.0])
    def test_central_difference(self, d, t):
        eps = 1e-6
        fd = (rho(d, t + eps) - rho(d, t - eps)) / (2 * eps)
        exact = rho_prime(d, t)
        assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))

    def test_signed_quadratic_central_difference_at_zero(self):
        eps = 1e-6
        fd = (rho(QS, eps) - rho(QS, -eps)) / (2 * eps)
        assert abs(fd - rho_prime(QS, 0.0)) <= 1e-9

    @pytest.mark.parametrize("d", [ENT, QS], ids=["entropy", "quadratic"])
    def test_finite_differences_on_grid(self, d):
        grid = np.linspace(-10, 10, 401)
        eps = 1e-6
        fd = (d.rho(grid + eps) - d.rho(grid - eps)) / (2 * eps)
        exact = d.rho_prime(grid)
        rel = np.abs(fd - exact) / np.maximum(1.0, np.abs(exact))
        assert rel.max() <= 1e-6

    @pytest.mark.parametrize("d", [ENT, QS], ids=["entropy", "quadratic"])
    def test_strict_concavity(self, d):
        grid = np.linspace(-10, 10, 201)
        assert np.all(d.rho_double_prime(grid) < 0)
        assert rho_double_prime(d, 0.0) < 0


@given(st.floats(min_value=-700, max_value=700, allow_nan=False))
@settings(max_examples=200, deadline=None)
def test_entropy_weights_positive(t):
    assert ENT.rho_prime(t) > 0


class TestDispersionParse:
    @pytest.mark.parametrize("name,label", [("entropy", "entropy"), ("Quadratic", "quadratic"),
                                            ("quadratic-signed", "quadratic-signed")])
    def test_round_trip(self, name, label):
        assert Dispersion.parse(name).label == label

    def test_unknown(self):
        with pytest.raises(ValueError):
            Dispersion.parse("huber")


class TestDataset:
    def test_basic(self):
        d = Dataset(z=[1, 0, 1], X=[[1.0], [2.0], [3.0]], y=[1, 2, 3])
        assert (d.n, d.p) == (3, 1)
        assert d.columns == ("x1",)

    def test_arrays_are_frozen(self):
        d = Dataset(z=[1, 0], X=[[1.0], [2.0]])
        with pytest.raises(ValueError):
            d.X[0, 0] = 5.0

    def test_rejects_single_arm(self):
        with pytest.raises(ValueError, match="both treatment arms"):
            Dataset(z=[1, 1], X=[[1.0], [2.0]])

    def test_rejects_non_finite_covariate(self):
        with pytest.raises(ValueError, match="row 1, column 0"):
            Dataset(z=[1, 0], X=[[1.0], [np.nan]])

    def test_rejects_non_binary_treatment(self):
        with pytest.raises(ValueError):
            Dataset(z=[1, 2], X=[[1.0], [2.0]])

    def test_transport_allows_missing_outside_trial(self):
        d = Dataset(z=[1, 0, np.nan], X=[[1.0], [2.0], [3.0]], y=[1.0, 2.0, np.nan], r=[1, 1, 0])
        assert d.analysis_mask.tolist() == [True, True, False]
        assert np.isnan(d.z[2])

    def test_missing_outcome_in_trial_rejected(self):
        with pytest.raises(ValueError, match="outcome"):
            Dataset(z=[1, 0], X=[[1.0], [2.0]], y=[1.0, np.nan])

    def test_subset_with_duplicates(self):
        d = Dataset(z=[1, 0, 1], X=[[1.0], [2.0], [3.0]])
        s = d.subset([0, 0, 1])
        assert s.X[:, 0].tolist() == [1.0, 1.0, 2.0]
        assert s.unit_ids.tolist() == [0, 0, 1]


class TestPartition:
    def test_from_g(self):
        part = BalancePartition.from_g(4, [2])
        assert part.c_idx == (0, 1, 3)
        assert (part.K, part.L) == (4, 1)

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            BalancePartition((0, 1), (1,), 2)

    def test_must_cover(self):
        with pytest.raises(ValueError):
            BalancePartition((0,), (), 2)


class TestEstimandSpec:
    def test_parse(self):
        assert EstimandSpec.parse("transport").kind is EstimandKind.TRANSPORT

    def test_wate_needs_h(self):
        with pytest.raises(ValueError):
            EstimandSpec(EstimandKind.WATE)

    def test_wate_rejects_zero_h(self):
        with pytest.raises(ValueError):
            EstimandSpec(EstimandKind.WATE, np.zeros(3))

    def test_wate_rejects_negative_h(self):
        with pytest.raises(ValueError):
            EstimandSpec(EstimandKind.WATE, np.array([1.0, -1.0]))
