import json
import math

import numpy as np
import pytest

from ldbranch._numerics import BracketError
from ldbranch.experiments import (
    conditioned_clone_experiment,
    convergence_experiment,
    moment_validation,
    tail_probability_experiment,
    validate_suite,
    write_passage_csv,
)
from ldbranch.params import (
    ModelParams,
    MutationLaw,
    ResistantRates,
    SensitiveRates,
    build_from_settings,
    with_mu,
)

FIG4 = ModelParams(
    sensitive=SensitiveRates(0.3, 0.5),
    resistant=ResistantRates(0.4, 0.2),
    mutation=MutationLaw(0.1, 0.5),
)
HOT = with_mu(FIG4, 1.0)  # inflated mutation keeps early events observable


class TestConvergence:
    def test_quantiles_shrink_with_n(self):
        rep = convergence_experiment(FIG4, 1.0, [500, 5000], 150, seed=1,
                                     threads=2)
        assert rep.passed
        names = {c["name"] for c in rep.cells}
        assert "abs-dev-gamma-q90-n500" in names
        assert "abs-dev-tau-q99-n5000" in names

    def test_no_mutation_rejects(self):
        params = ModelParams(FIG4.sensitive, FIG4.resistant,
                             MutationLaw(0.0, 0.5))
        with pytest.raises(BracketError):
            convergence_experiment(params, 1.0, [500], 10, seed=0)

    def test_single_n_emits_no_trend_verdict(self):
        rep = convergence_experiment(FIG4, 1.0, [500], 50, seed=2)
        assert not any("nonincreasing" in c["name"] for c in rep.checks)
        assert any(c["name"].startswith("abs-dev") for c in rep.cells)


class TestTailProbability:
    def test_small_offset_probability_is_large_and_slope_small(self):
        rep = tail_probability_experiment(HOT, 1.0, 0.01, [25, 50, 100],
                                          4000, seed=3, threads=2)
        p_cells = [c for c in rep.cells if c["name"].startswith("p-early")]
        assert all(0.3 < c["estimate"] <= 1.0 for c in p_cells)
        slope = next(c for c in rep.cells if c["name"] == "slope")
        assert abs(slope["estimate"]) < 0.02

    def test_probabilities_lie_in_unit_interval_and_se_recomputable(self):
        rep = tail_probability_experiment(HOT, 1.0, 0.5, [25, 50, 100],
                                          2000, seed=4)
        for c in rep.cells:
            if not c["name"].startswith("p-early"):
                continue
            p = c["estimate"]
            assert 0.0 <= p <= 1.0
            assert c["se"] == pytest.approx(
                math.sqrt(p * (1 - p) / rep.replicates)
            )
            assert c["events"] == round(p * rep.replicates)

    def test_unobservable_events_excluded_with_warning(self):
        # large y and tiny mu: no early recurrences at this scale
        rep = tail_probability_experiment(FIG4, 1.0, 6.0, [400, 800, 1600],
                                          200, seed=5)
        assert any(c["passed"] is None and "excluded" in c["detail"]
                   for c in rep.checks)
        assert any(c["name"] == "regression-points" and c["passed"] is False
                   for c in rep.checks)

    def test_crossover_variant_targets_xi(self):
        rep = tail_probability_experiment(HOT, 1.0, 0.3, [25, 50, 100],
                                          2000, seed=6, passage="crossover")
        assert rep.experiment == "tail-crossover"
        slope = next(c for c in rep.cells if c["name"] == "slope")
        assert slope["limit_rate"] > 0


class TestConditionedClones:
    def test_near_zero_offset_mode_ratio_near_one(self):
        rep = conditioned_clone_experiment(HOT, 0.01, 1000, 1500, seed=7,
                                           threads=2)
        cell = next(c for c in rep.cells if c["name"] == "conditional-mode-ratio")
        assert abs(cell["estimate"] - 1.0) < 0.25

    def test_moderate_offset_mode_exceeds_unconditional(self):
        rep = conditioned_clone_experiment(HOT, 0.5, 2000, 1500, seed=8,
                                           threads=2)
        assert rep.passed
        check = next(c for c in rep.checks
                     if c["name"] == "conditional-mode-exceeds-unconditional")
        assert check["passed"] is True

    def test_too_few_conditioning_events_is_inconclusive(self):
        rep = conditioned_clone_experiment(FIG4, 2.0, 4000, 100, seed=9)
        check = next(c for c in rep.checks if c["name"] == "conditional-mode")
        assert check["passed"] is None
        cell = next(c for c in rep.cells if c["name"] == "conditioning-events")
        assert cell["estimate"] < 200


class TestMomentValidation:
    def test_time_zero_row_is_exact(self):
        rep = moment_validation(FIG4, 500, [0.0, 2.0], 400, seed=10)
        exact = [c for c in rep.cells if c["name"].endswith("-t0")]
        assert exact
        for c in exact:
            assert c["se"] == 0.0 or c["z"] == 0.0

    def test_reference_configuration_passes(self):
        rep = moment_validation(FIG4, 1000, [2.0, 5.0], 2500, seed=11,
                                threads=2)
        assert rep.passed

    def test_no_mutation_keeps_z2_at_zero(self):
        params = ModelParams(FIG4.sensitive, FIG4.resistant,
                             MutationLaw(1e-300, 0.5))
        rep = moment_validation(params, 500, [2.0], 300, seed=12)
        z2 = next(c for c in rep.cells if c["name"] == "mean-z2-t2")
        assert z2["estimate"] == 0.0 and rep.passed


class TestReports:
    def test_json_bytes_reproducible(self):
        a = moment_validation(FIG4, 300, [1.0], 200, seed=13)
        b = moment_validation(FIG4, 300, [1.0], 200, seed=13)
        assert a.to_json() == b.to_json()
        assert a.to_json().encode() == b.to_json().encode()

    def test_json_excludes_wall_time(self):
        rep = moment_validation(FIG4, 300, [1.0], 100, seed=14)
        payload = json.loads(rep.to_json())
        assert "wall_time" not in payload
        assert payload["passed"] == rep.passed

    def test_text_rendering_has_verdict(self):
        rep = moment_validation(FIG4, 300, [1.0], 100, seed=15)
        text = rep.to_text()
        assert "result: PASS" in text or "result: FAIL" in text

    def test_passage_csv_round_trip(self, tmp_path):
        gammas = np.array([1.5, math.nan, 2.5])
        taus = np.array([0.5, 1.0, math.nan])
        out = tmp_path / "raw.csv"
        write_passage_csv(out, gammas, taus, surviving=[3, 1, 0],
                          extinct=[1, 0, 2])
        lines = out.read_text().splitlines()
        assert lines[0] == "replicate,gamma,tau,censored_gamma,censored_tau,S,E"
        assert lines[1] == "0,1.5,0.5,0,0,3,1"
        assert lines[2].split(",")[1] == ""  # censored gamma left empty
        assert lines[2].split(",")[3] == "1"


class TestValidateSuite:
    def test_default_configuration_passes(self):
        params, scenario, seed = build_from_settings({})
        rep = validate_suite(params, scenario, seed)
        assert rep.passed, rep.to_text()
