import itertools

import numpy as np
import pytest

from mvsde.errors import UnsupportedCheck
from mvsde.measures import EmpiricalMeasure, second_moment, w2_assignment, w2_coupling_bound
from mvsde.paths import Segment


def measure_from_arrays(*arrays, h=0.5):
    return EmpiricalMeasure(np.stack([np.asarray(a, dtype=float) for a in arrays]), h)


def random_measure(rng, n_atoms, width=4, d=1, scale=1.0):
    return EmpiricalMeasure(rng.normal(0, scale, size=(n_atoms, width, d)), 0.5)


class TestSecondMoment:
    def test_zero_atoms(self):
        mu = EmpiricalMeasure(np.zeros((3, 4, 2)), 0.5)
        assert second_moment(mu) == 0.0

    def test_single_atom(self):
        mu = measure_from_arrays([[2.0], [1.0]])
        assert second_moment(mu) == pytest.approx(4.0)

    def test_three_atoms(self):
        # sup norms 1, 2, 3 -> (1+4+9)/3
        mu = measure_from_arrays([[1.0], [0.0]], [[2.0], [0.0]], [[0.0], [3.0]])
        assert second_moment(mu) == pytest.approx(14.0 / 3.0)


class TestW2Assignment:
    def test_identical(self):
        rng = np.random.default_rng(0)
        mu = random_measure(rng, 5)
        assert w2_assignment(mu, mu) == pytest.approx(0.0, abs=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(1)
        atoms = rng.normal(size=(6, 3, 2))
        mu = EmpiricalMeasure(atoms, 0.5)
        nu = EmpiricalMeasure(atoms[::-1].copy(), 0.5)
        assert w2_assignment(mu, nu) == pytest.approx(0.0, abs=1e-12)

    def test_two_by_two(self):
        # squared distances [[1,4],[4,1]]: identity assignment wins, W2 = 1
        mu = measure_from_arrays([[0.0]], [[3.0]])
        nu = measure_from_arrays([[1.0]], [[2.0]])
        assert w2_assignment(mu, nu) == pytest.approx(1.0)

    def test_unequal_counts_unsupported(self):
        rng = np.random.default_rng(2)
        with pytest.raises(UnsupportedCheck):
            w2_assignment(random_measure(rng, 3), random_measure(rng, 4))

    @pytest.mark.parametrize("P", [2, 3, 4, 5, 6])
    def test_matches_brute_force(self, P):
        rng = np.random.default_rng(100 + P)
        for _ in range(20):
            mu = random_measure(rng, P, width=3, d=2)
            nu = random_measure(rng, P, width=3, d=2)
            diff = mu.atom_values[:, None] - nu.atom_values[None, :]
            cost = np.max(np.sum(diff * diff, axis=3), axis=2)
            best = min(
                sum(cost[i, p[i]] for i in range(P)) / P
                for p in itertools.permutations(range(P))
            )
            assert w2_assignment(mu, nu) == pytest.approx(np.sqrt(best), rel=1e-12)

    def test_metric_axioms_on_random_triples(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            mu = random_measure(rng, 4)
            nu = random_measure(rng, 4)
            rho = random_measure(rng, 4)
            dmn = w2_assignment(mu, nu)
            dnm = w2_assignment(nu, mu)
            assert dmn == pytest.approx(dnm, rel=1e-12)
            assert dmn >= 0
            assert w2_assignment(mu, rho) <= dmn + w2_assignment(nu, rho) + 1e-12


class TestCouplingBound:
    def test_identical_labels(self):
        rng = np.random.default_rng(8)
        mu = random_measure(rng, 5)
        assert w2_coupling_bound(mu, mu) == 0.0

    def test_swapped_pair(self):
        # nu holds mu's atoms with labels exchanged: assignment 0, bound > 0
        a = [[0.0], [0.0]]
        b = [[5.0], [5.0]]
        mu = measure_from_arrays(a, b)
        nu = measure_from_arrays(b, a)
        assert w2_assignment(mu, nu) == pytest.approx(0.0, abs=1e-12)
        assert w2_coupling_bound(mu, nu) == pytest.approx(5.0)

    def test_single_atom_equals_assignment(self):
        rng = np.random.default_rng(9)
        mu = random_measure(rng, 1)
        nu = random_measure(rng, 1)
        assert w2_coupling_bound(mu, nu) == pytest.approx(w2_assignment(mu, nu))

    def test_dominates_assignment(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            mu = random_measure(rng, 6)
            nu = random_measure(rng, 6)
            assert w2_coupling_bound(mu, nu) >= w2_assignment(mu, nu) - 1e-12


class TestConstruction:
    def test_from_segments(self):
        segs = [Segment(np.ones((3, 1)) * i, 0.5) for i in range(4)]
        mu = EmpiricalMeasure.from_segments(segs)
        assert mu.n_atoms == 4
        assert mu.atoms[2].values[0, 0] == 2.0

    def test_mismatched_atoms_rejected(self):
        with pytest.raises(ValueError):
            EmpiricalMeasure.from_segments([
                Segment(np.ones((3, 1)), 0.5),
                Segment(np.ones((4, 1)), 0.5),
            ])
