import math

import numpy as np
import pytest

from prtbw.model import BalancePartition, Dataset, Dispersion, EstimandKind, EstimandSpec
from prtbw.problems import ProblemError, build_system, dual_objective
from prtbw.solver import fit_weights

from conftest import make_random_instance

DISPERSIONS = [Dispersion.entropy(), Dispersion.quadratic(False), Dispersion.quadratic(True)]
IDS = ["entropy", "quadratic", "quadratic-nonneg"]


def central_gradient(f, theta, eps=1e-6):
    g = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = eps
        g[k] = (f(theta + e) - f(theta - e)) / (2 * eps)
    return g


class TestBuildSystem:
    def test_ate_intercept_rows(self):
        data = Dataset(z=[1, 0, 1, 0], X=[[2.0], [0.0], [4.0], [0.0]])
        sys = build_system(data, BalancePartition.from_g(1, [0]))
        # intercept rows: (1/m) sum_{Z=z} w = 1, i.e. sum_{Z=z} w = n = 4
        A = sys.A_raw[:2]
        assert A.tolist() == [[0.0, 0.25, 0.0, 0.25], [0.25, 0.0, 0.25, 0.0]]
        assert sys.b_raw[:2].tolist() == [1.0, 1.0]
        assert sys.b_raw[0] * sys.m == 4

    def test_att_target_is_treated_mean(self, rct4):
        sys = build_system(rct4, BalancePartition.from_g(1, []), EstimandSpec(EstimandKind.ATT))
        assert sys.c_target_mean.tolist() == [1.0, 3.0]
        assert sys.b_raw.tolist() == [1.0, 3.0, 1.0, 3.0]

    def test_transport_target(self):
        data = Dataset(z=[1, 0, 1, 0, np.nan, np.nan], X=[[1.0], [2.0], [3.0], [4.0], [10.0], [20.0]],
                       r=[1, 1, 1, 1, 0, 0])
        sys = build_system(data, BalancePartition.from_g(1, []), EstimandSpec(EstimandKind.TRANSPORT))
        assert sys.c_target_mean.tolist() == [1.0, 15.0]
        assert sys.analysis_mask.tolist() == [True] * 4 + [False] * 2
        assert sys.m == 4

    def test_wate_target(self):
        data = Dataset(z=[1, 0, 1, 0], X=[[1.0], [2.0], [3.0], [4.0]])
        h = np.array([1.0, 0.0, 1.0, 2.0])
        sys = build_system(data, BalancePartition.from_g(1, []), EstimandSpec(EstimandKind.WATE, h))
        assert sys.c_target_mean[1] == pytest.approx((1 + 3 + 8) / 4)

    def test_row_layout(self, hull):
        sys = build_system(hull, BalancePartition.from_g(1, [0]))
        assert sys.F.shape == (4, 2 * sys.K + sys.L)
        assert sys.row_labels == ("control:(intercept)", "treated:(intercept)", "between:x1")
        assert sys.b[-1] == 0.0

    def test_transport_requires_r(self, hull):
        with pytest.raises(ProblemError):
            build_system(hull, BalancePartition.from_g(1, []), EstimandSpec(EstimandKind.TRANSPORT))

    def test_partition_mismatch(self, hull):
        with pytest.raises(ProblemError):
            build_system(hull, BalancePartition.from_g(2, []))

    def test_empty_arm_in_trial(self):
        with pytest.raises(ValueError, match="both treatment arms"):
            Dataset(z=[1, 1, 0, np.nan], X=[[1.0], [2.0], [3.0], [4.0]], r=[1, 1, 0, 0])


class TestDualObjective:
    def test_quadratic_loss_at_zero(self, rng):
        data = make_random_instance(rng, 30, 3)
        obj = dual_objective(build_system(data, BalancePartition.from_g(3, [1])), Dispersion.quadratic(False))
        assert obj.loss(np.zeros(obj.dim)) == 0.0

    def test_entropy_loss_at_zero(self, rng):
        for n in (10, 57):
            data = make_random_instance(rng, n, 2)
            obj = dual_objective(build_system(data, BalancePartition.from_g(2, [])), Dispersion.entropy())
            assert obj.loss(np.zeros(obj.dim)) == pytest.approx(math.exp(-1.0), abs=1e-15)

    @pytest.mark.parametrize("d", DISPERSIONS, ids=IDS)
    def test_gradient_matches_finite_differences(self, rng, d):
        data = make_random_instance(rng, 40, 4)
        obj = dual_objective(build_system(data, BalancePartition.from_g(4, [0, 3])), d)
        for _ in range(5):
            theta = rng.normal(scale=0.5, size=obj.dim)
            fd = central_gradient(obj.loss, theta)
            g = obj.grad(theta)
            assert np.max(np.abs(fd - g)) / max(1.0, np.max(np.abs(g))) <= 1e-5

    def test_gradient_is_negated_residual(self, rng):
        data = make_random_instance(rng, 25, 3)
        sys = build_system(data, BalancePartition.from_g(3, [2]))
        obj = dual_objective(sys, Dispersion.entropy())
        theta = rng.normal(scale=0.3, size=obj.dim)
        w = obj.weights(theta)
        assert np.allclose(obj.grad(theta), -sys.residuals(w), atol=1e-14)

    @pytest.mark.parametrize("d", DISPERSIONS, ids=IDS)
    def test_hessian_psd(self, rng, d):
        data = make_random_instance(rng, 30, 3)
        obj = dual_objective(build_system(data, BalancePartition.from_g(3, [1])), d)
        for _ in range(5):
            H = obj.hess(rng.normal(size=obj.dim))
            assert np.linalg.eigvalsh(H).min() >= -1e-10


class TestAffineInvariance:
    @pytest.mark.parametrize("d", [Dispersion.entropy(), Dispersion.quadratic(True)], ids=["entropy", "quadratic"])
    def test_c_column_rescaling(self, rng, d):
        for _ in range(3):
            data = make_random_instance(rng, 40, 3)
            X2 = data.X.copy()
            X2[:, 0] = -3.7 * X2[:, 0] + 11.0
            X2[:, 1] = 0.01 * X2[:, 1] - 2.0
            data2 = Dataset(z=data.z, X=X2, y=data.y)
            part = BalancePartition.from_g(3, [2])
            w1 = fit_weights(data, part, None, d).w
            w2 = fit_weights(data2, part, None, d).w
            assert np.max(np.abs(w1 - w2)) <= 1e-8
