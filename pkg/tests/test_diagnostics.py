import numpy as np
import pytest

from prtbw import comparators, diagnostics, simlab
from prtbw.model import BalancePartition, Dataset, Dispersion
from prtbw.solver import fit_weights

from conftest import make_random_instance


class TestSMD:
    def test_unit_smd(self):
        # treated mean 1, control mean 0, both arm sds 1 -> pooled sd 1
        x = np.array([0.0, 2.0, 1.0, -1.0, 1.0, 0.0])
        z = np.array([1, 1, 1, 0, 0, 0.0])
        table = diagnostics.smd_table(Dataset(z=z, X=x[:, None]))
        assert table["smd_tc"].iloc[0] == pytest.approx(1.0)
        assert table["sd_pooled"].iloc[0] == pytest.approx(1.0)

    def test_zero_sd_flagged(self):
        data = Dataset(z=[1, 0, 1, 0], X=[[1.0, 3.0], [1.0, 2.0], [1.0, 5.0], [1.0, 1.0]])
        table = diagnostics.smd_table(data)
        assert bool(table["zero_sd"].iloc[0])
        assert table["smd_tc"].iloc[0] == 0.0

    def test_prtbw_solution_balances(self, rng):
        data = make_random_instance(rng, 500, 4, shift=0.8)
        part = BalancePartition.from_g(4, [0, 2])
        ws = fit_weights(data, part, None, Dispersion.quadratic(True))
        table = diagnostics.smd_table(data, ws)
        assert np.all(np.abs(table["smd_tc"]) <= 1e-6)
        assert np.all(np.abs(table["smd_t_target"].iloc[list(part.c_idx)]) <= 1e-6)

    def test_triangle_inequality(self, rng):
        data = make_random_instance(rng, 300, 3, shift=0.8)
        for w in (None, np.abs(rng.normal(size=300)) + 0.1):
            t = diagnostics.smd_table(data, w)
            assert np.all(t["smd_tc"].abs() <= t["smd_t_target"].abs() + t["smd_c_target"].abs() + 1e-12)

    def test_ipw_leaves_imbalance(self):
        cfg = simlab.ScenarioConfig(p=20, pct_treated=0.2, gamma=0.75, delta_het=1.0, n=1000, reps=1, seed=3)
        data, _ = simlab.generate_scenario(cfg, 0)
        fit = comparators.fit_logistic_ps(data)
        w = comparators.ipw_weights(fit.e_hat, data.z, "ATE")
        avg = diagnostics.average_abs_smd(diagnostics.smd_table(data, w))
        assert avg["smd_tc"] > 0.01


class TestTargetProfile:
    def test_empty_g(self, rng):
        data = make_random_instance(rng, 50, 2)
        ws = fit_weights(data, BalancePartition.from_g(2, []))
        assert diagnostics.target_profile(ws, data).empty

    def test_hull(self, hull):
        ws = fit_weights(hull, BalancePartition.from_g(1, [0]))
        prof = diagnostics.target_profile(ws, hull)
        assert 1.0 <= prof["weighted_mean"].iloc[0] <= 1.5
        assert prof["shift_sd"].iloc[0] > 0
        assert prof["target_mean"].iloc[0] == pytest.approx(0.375)

    def test_rct_no_shift(self):
        rng = np.random.default_rng(11)
        n = 2000
        X = rng.standard_normal((n, 3))
        z = (rng.random(n) < 0.5).astype(float)
        data = Dataset(z=z, X=X)
        ws = fit_weights(data, BalancePartition.from_g(3, [0, 1]))
        prof = diagnostics.target_profile(ws, data)
        assert np.all(np.abs(prof["shift_sd"]) <= 0.05)


class TestWeightSummary:
    def test_uniform(self):
        s = diagnostics.weight_summary(np.full(4, 2.0), np.array([1, 0, 1, 0.0]))
        assert s["ess_treated"] == 2.0 and s["ess_control"] == 2.0
        assert s["cv"] == 0.0

    def test_dominant_weight(self):
        # (3.9 + 0.1)^2 / (3.9^2 + 0.1^2) = 16 / 15.22
        s = diagnostics.weight_summary(np.array([3.9, 0.1, 1.0, 1.0]), np.array([1, 1, 0, 0.0]))
        assert s["ess_treated"] == pytest.approx(16 / 15.22, abs=1e-12)
        assert s["ess_treated"] == pytest.approx(1.0512, abs=1e-4)

    def test_entropy_positive(self, rng):
        data = make_random_instance(rng, 100, 2)
        ws = fit_weights(data, BalancePartition.from_g(2, [1]), None, Dispersion.entropy())
        assert diagnostics.weight_summary(ws, data.z)["min"] > 0


class TestCertificate:
    @pytest.mark.parametrize("d", [Dispersion.entropy(), Dispersion.quadratic(True)], ids=["entropy", "quadratic"])
    def test_recomputed_residuals_match_solver(self, rng, d):
        for _ in range(5):
            data = make_random_instance(rng, 200, 4)
            part = BalancePartition.from_g(4, [1, 3])
            ws = fit_weights(data, part, None, d)
            res = diagnostics.balance_residuals(data, ws, part)
            assert np.max(np.abs(res - ws.balance_residuals)) <= 1e-12
