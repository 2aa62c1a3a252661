import csv
import math

import numpy as np
import pytest

from sparse_kan.data import (
    DYNAMICAL,
    DynamicalSpec,
    GenerationError,
    Problem,
    ecosystem_flow,
    ecosystem_rhs,
    gen_ecosystem,
    gen_ikeda,
    gen_symbolic,
    ikeda_step,
    load_concrete,
    load_superconductor,
    make_problem,
    standardize,
    symbolic_target,
)
from sparse_kan.spline import InvalidInputError


class TestSymbolic:
    def test_f1_at_one(self):
        assert symbolic_target("F1", [[1.0]])[0, 0] == 3.0

    def test_f9_at_origin(self):
        assert symbolic_target("F9", [[0.0, 0.0]])[0, 0] == 0.0

    def test_f5_at_zero(self):
        assert symbolic_target("F5", [[0.0]])[0, 0] == -1.0

    def test_anecdote(self):
        assert symbolic_target("anecdote", [[0.5, 1.0]])[0, 0] == pytest.approx(math.sin(1.5))

    def test_sizes_and_domain(self):
        p = gen_symbolic("F10", seed=3)
        assert p.train_x.shape == (1024, 2) and p.test_x.shape == (256, 2)
        assert np.all(np.abs(p.train_x) <= math.pi)
        np.testing.assert_allclose(p.train_y, symbolic_target("F10", p.train_x))

    def test_deterministic(self):
        a, b = gen_symbolic("F7", seed=5), gen_symbolic("F7", seed=5)
        np.testing.assert_array_equal(a.train_x, b.train_x)
        assert not np.array_equal(a.train_x, gen_symbolic("F7", seed=6).train_x)

    def test_unknown_id(self):
        with pytest.raises(InvalidInputError):
            gen_symbolic("F11")

    def test_round_trip(self, tmp_path):
        p = make_problem("nguyen-f3", seed=1)
        p.save(tmp_path)
        q = Problem.load(tmp_path)
        np.testing.assert_array_equal(p.train_x, q.train_x)
        np.testing.assert_array_equal(p.test_y, q.test_y)


class TestIkeda:
    def test_origin(self):
        np.testing.assert_allclose(ikeda_step([0.0, 0.0]), [1.0, 0.0], atol=1e-15)

    def test_unit_point(self):
        np.testing.assert_allclose(ikeda_step([1.0, 0.0]), [0.22880, -0.46395], atol=1e-5)

    def test_zero_mu_collapses(self):
        pts = np.random.default_rng(0).normal(size=(10, 2))
        np.testing.assert_array_equal(ikeda_step(pts, mu=0.0), np.tile([1.0, 0.0], (10, 1)))

    def test_pairs_are_consecutive_iterates(self):
        p = gen_ikeda(DynamicalSpec("ikeda", n_train=200, n_test=50))
        assert p.kind == DYNAMICAL
        np.testing.assert_allclose(ikeda_step(p.train_x), p.train_y, atol=1e-15)
        np.testing.assert_array_equal(p.train_x[1:], p.train_y[:-1])
        np.testing.assert_array_equal(p.trajectory[:-1], p.test_x)
        assert p.train_x.shape == (200, 2) and p.test_x.shape == (50, 2)

    def test_default_sizes(self):
        p = make_problem("ikeda")
        assert len(p.train_x) == 5000 and len(p.test_x) == 1000

    def test_divergence_reported(self):
        with pytest.raises(GenerationError):
            gen_ikeda(DynamicalSpec("ikeda", params={"mu": 5.0}, n_train=100, n_test=10))


class TestEcosystem:
    def test_extinction_equilibrium(self):
        np.testing.assert_array_equal(ecosystem_rhs([0.0, 0.0, 0.0]), 0.0)

    def test_carrying_capacity_equilibrium(self):
        np.testing.assert_allclose(ecosystem_rhs([0.98, 0.0, 0.0]), 0.0, atol=1e-15)

    def test_step_halving(self):
        spec = DynamicalSpec("ecosystem")
        fine = DynamicalSpec("ecosystem", h=spec.h / 2)
        s = np.array([0.7, 0.2, 0.8])
        assert np.max(np.abs(ecosystem_flow(s, spec) - ecosystem_flow(s, fine))) < 1e-9

    def test_populations_stay_positive(self):
        p = gen_ecosystem(DynamicalSpec("ecosystem", n_train=300, n_test=50))
        assert np.all(p.train_x > 0) and p.train_x.shape == (300, 3)

    def test_negative_initial_state(self):
        with pytest.raises(InvalidInputError):
            gen_ecosystem(DynamicalSpec("ecosystem", initial_state=(-0.1, 0.2, 0.8)))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


CONCRETE_HEADER = ["Cement (component 1)", "Blast Furnace Slag", "Fly Ash", "Water", "Superplasticizer",
                   "Coarse Aggregate", "Fine Aggregate", "Age (day)", "Concrete compressive strength(MPa)"]


class TestConcrete:
    def test_derived_features(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = rng.uniform(1, 500, (1030, 9))
        rows[:, 3] = 0.5 * rows[:, 0]
        rows[:, 1] = rows[:, 2] = 0.0
        rows[:, 7] = 0.0
        write_csv(tmp_path / "c.csv", CONCRETE_HEADER, rows)
        p = load_concrete(tmp_path / "c.csv")
        assert p.train_x.shape == (824, 13) and p.test_x.shape == (206, 13)
        raw = p.train_x * p.input_std + p.input_mean
        np.testing.assert_allclose(raw[:, 8], 0.5)
        np.testing.assert_allclose(raw[:, 12], 0.0, atol=1e-12)

    def test_zero_cement_rows_rejected(self, tmp_path):
        rows = np.random.default_rng(1).uniform(1, 100, (20, 9))
        rows[0, 0] = 0.0
        write_csv(tmp_path / "c.csv", CONCRETE_HEADER, rows)
        p = load_concrete(tmp_path / "c.csv")
        assert p.meta["rejected_rows"] == 1 and len(p.train_x) + len(p.test_x) == 19

    def test_missing_column(self, tmp_path):
        write_csv(tmp_path / "c.csv", CONCRETE_HEADER[:-2], np.ones((10, 7)))
        with pytest.raises(InvalidInputError):
            load_concrete(tmp_path / "c.csv")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            make_problem("concrete", csv_path=tmp_path / "none.csv")


class TestSuperconductor:
    HEADER = ["number_of_elements", "wtd_mean_Valence", "wtd_mean_fie", "mean_ElectronAffinity",
              "entropy_Valence", "other", "critical_temp"]

    def test_disjoint_standardized_split(self, tmp_path):
        rows = np.random.default_rng(2).normal(size=(2000, 7))
        rows[:, -1] = np.arange(2000)
        write_csv(tmp_path / "s.csv", self.HEADER, rows)
        p = load_superconductor(tmp_path / "s.csv", seed=4)
        ids = np.concatenate([p.train_y[:, 0], p.test_y[:, 0]])
        assert sorted(ids) == list(range(2000))
        np.testing.assert_allclose(p.train_x.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(p.train_x.std(axis=0), 1.0, atol=1e-12)
        q = load_superconductor(tmp_path / "s.csv", seed=4)
        np.testing.assert_array_equal(p.train_x, q.train_x)

    def test_too_few_rows(self, tmp_path):
        write_csv(tmp_path / "s.csv", self.HEADER, np.ones((10, 7)))
        with pytest.raises(InvalidInputError):
            load_superconductor(tmp_path / "s.csv")


def test_standardize_uses_train_statistics():
    train = np.array([[0.0, 5.0], [2.0, 5.0]])
    tr, te, mean, std = standardize(train, np.array([[4.0, 6.0]]))
    np.testing.assert_array_equal(mean, [1.0, 5.0])
    np.testing.assert_array_equal(std, [1.0, 1.0])
    np.testing.assert_array_equal(te, [[3.0, 1.0]])
