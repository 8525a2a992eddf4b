import numpy as np
import pytest
from scipy.special import expit

from prtbw import simlab
from prtbw.model import BalancePartition
from prtbw.rng import stream
from prtbw.solver import fit_weights

QN = simlab.SIM_DISPERSION


@pytest.fixture(scope="module")
def base_cfg():
    return simlab.ScenarioConfig(p=20, pct_treated=0.2, gamma=2.0, delta_het=1.0, theta=0.25, n=1000, reps=1, seed=3)


class TestConfig:
    def test_levels(self):
        cfg = simlab.ScenarioConfig.from_levels(20, 0.2, "med", "high")
        assert (cfg.gamma, cfg.delta_het) == (2.0, 2.0)
        cfg = simlab.ScenarioConfig.from_levels(100, 0.4, "low", "medium")
        assert (cfg.gamma, cfg.delta_het) == (1.0, 0.75)

    def test_numbers_pass_through(self):
        cfg = simlab.ScenarioConfig.from_levels(50, 0.3, 1.5, 0.7)
        assert (cfg.gamma, cfg.delta_het) == (1.5, 0.7)

    def test_unknown_row(self):
        with pytest.raises(ValueError):
            simlab.ScenarioConfig.from_levels(50, 0.3, "med", 1.0)

    @pytest.mark.parametrize("kw", [{"p": 3}, {"pct_treated": 1.0}, {"gamma": 0.0}, {"delta_het": -1.0},
                                    {"theta": 1.5}, {"n": 2}])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            simlab.ScenarioConfig(**kw)


class TestGeneration:
    def test_modifier_layout(self):
        assert simlab.modifier_indices(20, 0.25) == (2, 6, 10, 14, 18)
        alpha, beta, mods = simlab.coefficients(20, 2.0, 1.0, 0.25)
        assert sorted(set(np.round(np.abs(alpha) * 2.0, 2))) == [0.5, 1.33, 2.16, 3.0]
        others = [j for j in range(20) if j not in mods]
        assert np.all(beta[others] == 0.25)
        assert beta[2] == pytest.approx(1.0) and beta[6] == pytest.approx(0.25 - 0.6)

    def test_no_heterogeneity_ate(self):
        cfg = simlab.ScenarioConfig(delta_het=0.0)
        assert simlab.true_ate(cfg) == 1.0

    def test_analytic_ate_matches_monte_carlo(self):
        cfg = simlab.ScenarioConfig(p=20, pct_treated=0.2, gamma=2.0, delta_het=1.0, theta=0.25)
        _, beta, _ = simlab.coefficients(cfg.p, cfg.gamma, cfg.delta_het, cfg.theta)
        rng = stream(777, 0)
        draws = []
        for _ in range(4):
            X = simlab.covariates(simlab.truncated_normal(rng, (250_000, cfg.p)))
            draws.append(1.0 + X @ (beta - 0.25))
        cate = np.concatenate(draws)
        mcse = cate.std(ddof=1) / np.sqrt(cate.size)
        assert abs(cate.mean() - simlab.true_ate(cfg)) <= 3 * mcse

    @pytest.mark.parametrize("p,pct", [(20, 0.2), (20, 0.4), (100, 0.2)])
    def test_treated_fraction(self, p, pct):
        cfg = simlab.ScenarioConfig.from_levels(p, pct, "med", "high", n=100_000, seed=1)
        data, truth = simlab.generate_scenario(cfg, 0)
        assert abs(data.z.mean() - pct) <= 0.02

    def test_truncated_normal_moments(self):
        v = simlab.truncated_normal(stream(5, 0), 100_000)
        n = v.size
        assert abs(v.mean()) <= 3 / np.sqrt(n)
        # sd of the sample variance is about sqrt((kurtosis - 1) / n)
        kurt = np.mean(v ** 4)
        assert abs(v.var() - 1.0) <= 3 * np.sqrt((kurt - 1) / n)
        assert np.abs(v).max() <= 3 / np.sqrt(simlab._TRUNC_VAR) + 1e-12

    def test_reproducible(self, base_cfg):
        a, ta = simlab.generate_scenario(base_cfg, 4)
        b, tb = simlab.generate_scenario(base_cfg, 4)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y) and np.array_equal(a.z, b.z)
        c, _ = simlab.generate_scenario(base_cfg, 5)
        assert not np.array_equal(a.y, c.y)

    def test_truth_record(self, base_cfg):
        data, truth = simlab.generate_scenario(base_cfg, 0)
        assert np.allclose(truth.e, expit(truth.alpha[0] + data.X @ truth.alpha[1:]))
        assert np.allclose(truth.mu1, truth.beta1[0] + data.X @ truth.beta1[1:])
        assert set(truth.modifiers) | set(truth.non_modifiers) == set(range(base_cfg.p))


class TestDecompose:
    def test_terms_sum_to_total(self, base_cfg):
        data, truth = simlab.generate_scenario(base_cfg, 1)
        ws = fit_weights(data, BalancePartition.from_g(data.p, truth.non_modifiers), None, QN)
        parts = simlab.decompose_error(ws, data, truth)
        assert parts["mismatch"] + parts["sampling"] + parts["noise"] == pytest.approx(parts["total"], abs=1e-12)

    def test_no_modification_mismatch_vanishes(self):
        cfg = simlab.ScenarioConfig(p=20, pct_treated=0.2, gamma=2.0, delta_het=0.0, n=1000, seed=2)
        data, truth = simlab.generate_scenario(cfg, 0)
        ws = fit_weights(data, BalancePartition.from_g(data.p, [0, 1, 5, 12]), None, QN)
        assert ws.feasible
        assert abs(simlab.decompose_error(ws, data, truth)["mismatch"]) <= 1e-8

    def test_mismatch_equals_profile_shift(self, base_cfg):
        data, truth = simlab.generate_scenario(base_cfg, 2)
        g = list(truth.non_modifiers) + list(truth.modifiers[:2])
        ws = fit_weights(data, BalancePartition.from_g(data.p, g), None, QN)
        assert ws.feasible
        lam = (truth.beta1[1:] - truth.beta0[1:])[g]
        expected = lam @ (ws.target_profile_g - data.X[:, g].mean(axis=0))
        assert simlab.decompose_error(ws, data, truth)["mismatch"] == pytest.approx(expected, abs=1e-8)

    def test_uniform_weights_on_randomized_design(self):
        cfg = simlab.ScenarioConfig(p=20, pct_treated=0.5, gamma=1e6, delta_het=1.0, n=20_000, seed=4)
        data, truth = simlab.generate_scenario(cfg, 0)
        t = data.z == 1
        w = np.where(t, data.n / t.sum(), data.n / (~t).sum())
        parts = simlab.decompose_error(w, data, truth)
        for key in ("mismatch", "sampling", "noise"):
            assert abs(parts[key]) <= 0.1


class TestStudy:
    def test_failures_recorded(self):
        cfg = simlab.ScenarioConfig(p=20, pct_treated=0.2, gamma=0.75, delta_het=1.0, n=400, reps=10, seed=6)
        reps, metrics = simlab.run_study([cfg], simlab.resolve_panel(["direct", "prtbw_true"]))
        assert len(reps) == 20
        m = metrics.set_index("estimator")
        assert m.loc["direct", "feasibility_rate"] < 1.0
        assert m.loc["prtbw_true", "feasibility_rate"] > m.loc["direct", "feasibility_rate"]
        failed = reps[~reps["feasible"]]
        assert failed["error"].str.startswith("infeasible").all()

    def test_threads_do_not_change_results(self):
        cfg = simlab.ScenarioConfig(p=20, pct_treated=0.2, gamma=2.0, delta_het=1.0, n=300, reps=4, seed=7)
        panel = simlab.resolve_panel(["ipw_ato", "prtbw_design"])
        a, ma = simlab.run_study([cfg], panel)
        b, mb = simlab.run_study([cfg], panel, threads=3)
        assert a.equals(b) and ma.equals(mb)

    def test_ipw_error_shrinks_with_n(self):
        # zero noise, no heterogeneity, good overlap: MSE falls like 1/n
        mse = []
        for n in (500, 2000):
            cfg = simlab.ScenarioConfig(p=20, pct_treated=0.4, gamma=10.0, delta_het=0.0, noise_sd=0.0,
                                        n=n, reps=40, seed=8)
            _, m = simlab.run_study([cfg], simlab.resolve_panel(["ipw_ate"]))
            mse.append(m["mse"].iloc[0])
        assert mse[1] <= mse[0] / 2.5

    def test_empty_panel(self, base_cfg):
        with pytest.raises(ValueError):
            simlab.run_study([base_cfg], {})

    def test_unknown_estimator(self):
        with pytest.raises(ValueError):
            simlab.resolve_panel(["bart"])

    def test_summary_columns(self):
        cfg = simlab.ScenarioConfig(n=200, reps=3, seed=1, gamma=3.0)
        _, m = simlab.run_study([cfg], simlab.resolve_panel(["ipw_ate"]))
        assert {"mse", "abs_bias", "sd", "feasibility_rate", "mc_se"} <= set(m.columns)


class TestParseGrid:
    def test_cartesian_product(self):
        grid = simlab.parse_grid({"n": "200,400", "delta": "low,high", "reps": "5"})
        assert len(grid) == 4
        assert {(c.n, c.delta_het) for c in grid} == {(200, 0.5), (200, 2.0), (400, 0.5), (400, 2.0)}
        assert all(c.reps == 5 for c in grid)

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            simlab.parse_grid({"sigma": "1"})
