"""Tests for the Monte Carlo harness."""

import math

import numpy as np
import pytest

from ctssim.coding import categorize, code_binary
from ctssim.estimation import estimate_ols_hc2
from ctssim.harness import (
    CODINGS,
    REPLICATION_FIELDS,
    SCENARIO_PRESETS,
    ReplicationError,
    Replications,
    SimulationConfig,
    bootstrap_mc_se,
    latent_summary,
    run_cell,
    run_replication,
    run_simulation,
    scenario_grid,
    scenario_preset,
    summarize,
)
from ctssim.joint import ActSpec, MultiActModel
from ctssim.marginals import MarginalParams


def small_model(k=3):
    acts = tuple(ActSpec(i + 1, f"act {i + 1}", "physical", "severe") for i in range(k))
    margins = tuple(MarginalParams("zip", 2.0, 0.6) for _ in range(k))
    sigma = np.full((k, k), 0.4)
    np.fill_diagonal(sigma, 1.0)
    return MultiActModel(acts, margins, sigma)


def config(scenario_name="cessation_only", n_units=300, n_reps=200, seed=5, **kw):
    return SimulationConfig(
        model=small_model(),
        scenario=scenario_preset(scenario_name),
        n_units=n_units,
        n_reps=n_reps,
        n_bootstrap=kw.pop("n_bootstrap", 50),
        seed=seed,
        **kw,
    )


class TestPresets:
    def test_standard_probability_vectors(self):
        assert SCENARIO_PRESETS["cessation_only"] == (0.70, 0.30, 0.0, 0.0)
        assert SCENARIO_PRESETS["cessation_reduction"] == (0.70, 0.10, 0.20, 0.0)
        assert SCENARIO_PRESETS["reduction_only"] == (0.70, 0.0, 0.30, 0.0)
        assert SCENARIO_PRESETS["cessation_reduction_increase"] == (0.70, 0.10, 0.15, 0.05)
        assert SCENARIO_PRESETS["null"] == (1.0, 0.0, 0.0, 0.0)

    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            scenario_preset("everything_works")

    def test_preset_carries_target(self):
        s = scenario_preset("cessation_only", target="sexual")
        assert s.target == "sexual" and s.name == "cessation_only"


class TestRunReplication:
    def test_deterministic(self):
        cfg = config()
        a = run_replication(cfg, 3)
        b = run_replication(cfg, 3)
        assert a == b

    def test_distinct_replications_differ(self):
        cfg = config()
        assert run_replication(cfg, 0) != run_replication(cfg, 1)

    def test_null_scenario_true_ate_zero(self):
        rec = run_replication(config("null"), 0)
        assert rec["binary"]["true_ate"] == 0.0
        assert rec["sum"]["true_ate"] == 0.0

    def test_reduction_only_binary_ate_zero_every_rep(self):
        cfg = config("reduction_only", n_reps=30)
        for m in range(30):
            rec = run_replication(cfg, m)
            assert rec["binary"]["true_ate"] == 0.0

    def test_error_carries_replication_index(self):
        class BrokenModel:
            acts = small_model().acts

            def sample_control(self, n, rng):
                raise RuntimeError("sampler exploded")

        cfg = SimulationConfig(BrokenModel(), scenario_preset("null"), 100, n_reps=5, seed=1)
        with pytest.raises(ReplicationError, match="replication 4"):
            run_replication(cfg, 4)

    def test_schedule_reproduces_binary_estimate(self):
        # the stored statistics really are functions of the stored schedule
        cfg = config()
        reps = run_simulation(cfg)
        rec = run_replication(cfg, 7, return_schedule=True)
        table = rec["schedule"]
        recomputed = estimate_ols_hc2(
            code_binary(categorize(table.observed())), table.z, alpha=cfg.alpha
        )
        assert recomputed.estimate == reps.data["binary"]["estimate"][7]
        assert recomputed.se == reps.data["binary"]["se"][7]
        assert recomputed.p_value == reps.data["binary"]["p_value"][7]


class TestRunSimulation:
    def test_thread_count_is_invisible(self):
        cfg = config(n_reps=40)
        serial = run_simulation(cfg, threads=1)
        threaded = run_simulation(cfg, threads=3)
        for c in CODINGS:
            for f in REPLICATION_FIELDS:
                assert np.array_equal(serial.data[c][f], threaded.data[c][f])

    def test_rerun_bit_identical(self):
        cfg = config(n_reps=25)
        a, b = run_simulation(cfg), run_simulation(cfg)
        assert np.array_equal(a.data["sum"]["estimate"], b.data["sum"]["estimate"])


def handmade_reps(estimates, trues, p_values=None, half_width=0.1):
    m = len(estimates)
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(trues, dtype=float)
    p = np.asarray(p_values, dtype=float) if p_values is not None else np.full(m, 0.5)
    data = {}
    for c in CODINGS:
        data[c] = {
            "estimate": est,
            "se": np.full(m, half_width / 1.96),
            "p_value": p,
            "ci_low": est - half_width,
            "ci_high": est + half_width,
            "true_ate": tru,
        }
    return Replications(data)


class TestSummarize:
    def test_exact_estimates(self):
        reps = handmade_reps([0.2, 0.2], [0.2, 0.2])
        stats = summarize(reps)["binary"]
        assert stats.bias == 0.0
        assert stats.rmse == 0.0
        assert stats.coverage == 1.0
        assert not stats.true_ate_is_zero

    def test_symmetric_errors(self):
        reps = handmade_reps([0.3, 0.1], [0.2, 0.2])
        stats = summarize(reps)["sum"]
        assert stats.bias == pytest.approx(0.0, abs=1e-15)
        assert stats.rmse == pytest.approx(0.1)

    def test_power_counts_rejections(self):
        reps = handmade_reps([0.0] * 4, [0.0] * 4, p_values=[0.01, 0.04, 0.06, 0.5])
        stats = summarize(reps, alpha=0.05)["binary"]
        assert stats.power == 0.5
        assert stats.true_ate_is_zero

    def test_rmse_at_least_abs_bias(self):
        reps = run_simulation(config(n_reps=50))
        for s in summarize(reps).values():
            assert s.rmse >= abs(s.bias)


class TestBootstrap:
    def test_constant_records_zero_se(self):
        reps = handmade_reps([0.2] * 20, [0.2] * 20, p_values=[0.01] * 20)
        ses = bootstrap_mc_se(reps, 50, np.random.default_rng(0))
        for stat_se in ses["binary"].values():
            assert stat_se == 0.0

    def test_power_se_matches_binomial(self):
        cfg = config("cessation_only", n_units=250, n_reps=1000, seed=9)
        reps = run_simulation(cfg)
        stats = summarize(reps, cfg.alpha, n_bootstrap=200, rng=np.random.default_rng(1))
        for c in CODINGS:
            p = stats[c].power
            expected = math.sqrt(p * (1 - p) / cfg.n_reps)
            assert stats[c].mc_se["power"] == pytest.approx(expected, rel=0.30)

    def test_doubling_reps_shrinks_se(self):
        small = run_simulation(config(n_reps=400, seed=21))
        large = run_simulation(config(n_reps=800, seed=21))
        rng = np.random.default_rng(2)
        se_small = bootstrap_mc_se(small, 300, rng)["sum"]
        se_large = bootstrap_mc_se(large, 300, rng)["sum"]
        for stat in ("bias", "rmse"):
            ratio = se_small[stat] / se_large[stat]
            assert ratio == pytest.approx(math.sqrt(2.0), rel=0.25)

    def test_requires_two_resamples(self):
        with pytest.raises(ValueError):
            bootstrap_mc_se(handmade_reps([0.1], [0.1]), 1, np.random.default_rng(0))


class TestScenarioGrid:
    def test_grid_shape_and_names(self):
        cfg = config(n_reps=10, n_bootstrap=10)
        scenarios = [scenario_preset("null"), scenario_preset("cessation_only")]
        cells = scenario_grid(cfg, scenarios, ["all", "physical"])
        assert len(cells) == 4
        assert {(c.scenario_name, c.target) for c in cells} == {
            ("null", "all"), ("null", "physical"),
            ("cessation_only", "all"), ("cessation_only", "physical"),
        }

    def test_cells_independent_of_grid_composition(self):
        cfg = config(n_reps=15)
        lone = scenario_grid(cfg, [scenario_preset("cessation_only")], ["all"])[0]
        in_grid = scenario_grid(
            cfg, [scenario_preset("null"), scenario_preset("cessation_only")], ["all"]
        )[1]
        assert np.array_equal(
            lone.reps.data["sum"]["estimate"], in_grid.reps.data["sum"]["estimate"]
        )

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            scenario_grid(config(), [], ["all"])

    def test_power_monotone_in_sample_size(self):
        powers, ses = [], []
        for n_units in (150, 400, 1000):
            cell = run_cell(config("cessation_only", n_units=n_units, n_reps=300, seed=31))
            powers.append(cell.stats["sum"].power)
            ses.append(cell.stats["sum"].mc_se["power"])
        assert powers[1] >= powers[0] - ses[0]
        assert powers[2] >= powers[1] - ses[1]


class TestOrderingRobustness:
    @pytest.mark.parametrize("zero_prob,label", [(0.87, "low"), (0.72, "high")])
    def test_orderings_across_prevalence(self, zero_prob, label):
        # binary wins under cessation-only, sum wins under reduction-only,
        # for any-act prevalence anywhere in roughly [0.2, 0.6]
        k = 4
        acts = tuple(ActSpec(i + 1, f"act {i + 1}", "physical", "severe") for i in range(k))
        margins = tuple(MarginalParams("zinb", 2.2, zero_prob, dispersion=1.0) for _ in range(k))
        sigma = np.full((k, k), 0.5)
        np.fill_diagonal(sigma, 1.0)
        model = MultiActModel(acts, margins, sigma)
        from ctssim.joint import sample_joint

        draws = sample_joint(model, 50_000, np.random.default_rng(0))
        prevalence = (draws > 0).any(axis=1).mean()
        assert 0.2 <= prevalence <= 0.6

        def powers(scenario_name, n_units):
            cfg = SimulationConfig(
                model, scenario_preset(scenario_name), n_units, n_reps=400, n_bootstrap=0, seed=17
            )
            stats = summarize(run_simulation(cfg))
            return stats["binary"].power, stats["sum"].power

        cess_binary, cess_sum = powers("cessation_only", 700)
        assert cess_binary > cess_sum
        red_binary, red_sum = powers("reduction_only", 2000)
        assert red_sum > red_binary


class TestLatentDiagnostics:
    def test_latent_sum_recorded(self):
        cfg = config("reduction_only", n_reps=20, latent_diagnostics=True)
        reps = run_simulation(cfg)
        assert reps.latent_sum_true is not None
        assert np.all(reps.latent_sum_true <= 0.0)

    def test_off_by_default(self):
        reps = run_simulation(config(n_reps=5))
        assert reps.latent_sum_true is None
        with pytest.raises(ValueError):
            latent_summary(reps, 3)

    def test_latent_report_shows_count_scale_bias(self):
        # reductions of 2 inside the "a few times" category are invisible to
        # the coded sum, so the denormalized estimate understates the latent
        # count change
        cfg = config("reduction_only", n_units=900, n_reps=300, latent_diagnostics=True)
        reps = run_simulation(cfg)
        report = latent_summary(reps, n_items=3)
        assert report["mean_latent_count_ate"] < 0.0
        assert report["denormalized_sum_bias"] > 0.0
        assert report["denormalized_sum_coverage"] < 0.93
