import math

import numpy as np
import pytest

from sparse_kan.data import ikeda_step
from sparse_kan.evaluation import (
    ReportRow,
    UndefinedMetricError,
    format_table,
    multistep_rmse,
    r_squared,
    read_records,
    rmse,
    rollout,
    write_records,
)
from sparse_kan.spline import InvalidInputError


class TestMetrics:
    def test_perfect(self):
        y = np.array([1.0, 2.0, 3.0])
        assert r_squared(y, y) == 1.0

    def test_mean_predictor(self):
        assert r_squared(np.full(3, 2.0), np.array([1.0, 2.0, 3.0])) == 0.0

    def test_half(self):
        assert r_squared(np.array([1.5, 2.0, 2.5]), np.array([1.0, 2.0, 3.0])) == pytest.approx(0.75)
        assert r_squared(np.array([0.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.0])) == pytest.approx(0.5)

    def test_constant_target(self):
        with pytest.raises(UndefinedMetricError):
            r_squared(np.array([1.0, 2.0]), np.array([3.0, 3.0]))

    def test_pooled_over_outputs(self):
        t = np.array([[0.0, 0.0], [2.0, 4.0]])
        p = np.array([[0.0, 0.0], [2.0, 2.0]])
        # ss_res = 4, ss_tot = 2 + 8
        assert r_squared(p, t) == pytest.approx(1 - 4 / 10)

    def test_rmse(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert rmse([2.0, 2.0], [0.0, 0.0]) == 2.0
        assert rmse([[0.0, 0.0]], [[5.0, 5.0]]) == pytest.approx(5.0)
        assert rmse([0.0, 0.0], [5.0, 0.0]) == pytest.approx(3.5355, abs=1e-4)


class TestRollout:
    def test_identity(self):
        r = rollout(lambda s: s, [0.3, 0.4], 5)
        np.testing.assert_array_equal(r.states, np.tile([0.3, 0.4], (5, 1)))
        assert not r.diverged

    def test_matches_map_iteration(self):
        r = rollout(ikeda_step, [0.1, 0.1], 20)
        s = np.array([0.1, 0.1])
        for k in range(20):
            s = ikeda_step(s)
            np.testing.assert_allclose(r.states[k], s, atol=1e-14)

    def test_zero_steps(self):
        r = rollout(lambda s: s, [1.0], 0)
        assert r.states.shape == (0, 1)

    def test_divergence_stops(self):
        with np.errstate(over="ignore"):
            r = rollout(lambda s: s * 1e200, [1.0], 5)
        assert r.diverged and len(r.states) == 1

    def test_dimension_change_rejected(self):
        with pytest.raises(InvalidInputError):
            rollout(lambda s: np.zeros((1, 3)), [1.0, 2.0], 2)


class TestMultistep:
    def test_perfect_model(self):
        traj = [np.array([0.1, 0.1])]
        for _ in range(30):
            traj.append(ikeda_step(traj[-1]))
        assert multistep_rmse(ikeda_step, np.array(traj), 25) == (0.0, False)

    def test_constant_model(self):
        traj = np.arange(5.0)[:, None]
        # predictions stay at 0 while the truth is 1, 2, 3
        val, div = multistep_rmse(lambda s: s * 0, traj, 3)
        assert val == pytest.approx(math.sqrt((1 + 4 + 9) / 3)) and not div

    def test_horizon_too_long(self):
        with pytest.raises(InvalidInputError):
            multistep_rmse(lambda s: s, np.zeros((3, 1)), 3)


def row(**kw):
    base = dict(problem="ikeda", condition="full", beta=0.1, r2=0.99, rmse_1step=0.01,
                rmse_multistep=0.5, trunk_active=10, fc_active=3, sparsity_pct=13.0, epochs=100, seed=0)
    return ReportRow(**{**base, **kw})


class TestReport:
    def test_table_layout(self):
        text = format_table([row(), row(condition="baseline", beta=None, fc_active=None, rmse_multistep=None)])
        lines = text.splitlines()
        assert len(lines) == 4
        assert "Full (FC+Gates) (100)" in lines[2]
        assert "Baseline (100)" in lines[3] and "--" in lines[3]

    def test_records_round_trip(self, tmp_path):
        rows = [row(), row(status="failed", error="boom", r2=float("nan"))]
        write_records(rows, tmp_path / "r.jsonl")
        back = read_records(tmp_path / "r.jsonl")
        assert back[0] == rows[0]
        assert back[1].status == "failed" and math.isnan(back[1].r2)
