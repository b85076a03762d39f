import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import FIG5_THETA, oracle_c0, oracle_cij, oracle_sigma, random_locations, random_theta
from mvgeostat import InvalidParameterError, LocationSet, ParameterSet, Representation, assemble_sigma
from mvgeostat.covariance import (
    assemble_c0,
    colocated_correlation,
    colocated_covariance,
    flatten,
    matern_cross_cov,
    n_params,
    permutation_between,
    unflatten,
)

# 40-digit mpmath values, frozen here
RHO_FIG5 = 0.47140452079103168293
C12_FIG5_AT_RANGE = 0.2359543495471652448


class TestParameterSet:
    def test_vector_round_trip(self):
        theta = ParameterSet.from_vector(FIG5_THETA)
        assert theta.p == 2
        assert theta.to_vector().tolist() == list(FIG5_THETA)
        assert theta.names() == ["sigma2_1", "sigma2_2", "range", "nu_1", "nu_2", "beta_12"]

    def test_trivariate_ordering(self):
        vec = [1, 2, 3, 0.1, 0.5, 1.0, 1.5, 0.2, 0.3, 0.4]
        theta = ParameterSet.from_vector(vec)
        assert theta.p == 3
        assert theta.beta[0, 2] == 0.3 and theta.beta[2, 1] == 0.4
        assert len(vec) == n_params(3)

    @pytest.mark.parametrize(
        "vec, message",
        [
            ([1, 1, -0.2, 0.5, 1, 0.5], "range"),
            ([1, 0, 0.2, 0.5, 1, 0.5], "variances"),
            ([1, 1, 0.2, 0.0, 1, 0.5], "smoothness"),
            ([1, 1, 0.2, 0.5, 1, 1.0], "positive definite"),
            ([1, 1, 0.2, 0.5, 1], "length"),
        ],
    )
    def test_invalid(self, vec, message):
        with pytest.raises(InvalidParameterError, match=message):
            ParameterSet.from_vector(vec)

    def test_immutable(self):
        theta = ParameterSet.from_vector(FIG5_THETA)
        with pytest.raises(ValueError):
            theta.nu[0] = 3.0


class TestColocated:
    def test_diagonal_and_independent(self):
        theta = ParameterSet.from_vector([1, 1, 0.1, 0.5, 1, 0.0])
        assert colocated_correlation(theta, 0, 0, 2) == 1.0
        assert colocated_correlation(theta, 0, 1, 2) == 0.0

    def test_gamma_ratio_value(self):
        theta = ParameterSet.from_vector(FIG5_THETA)
        assert colocated_correlation(theta, 0, 1, 2) == pytest.approx(RHO_FIG5, rel=1e-14)

    def test_equal_smoothness_gives_beta(self):
        theta = ParameterSet.from_vector([1, 1, 0.1, 0.8, 0.8, 0.35])
        assert colocated_correlation(theta, 0, 1, 2) == pytest.approx(0.35, rel=1e-15)

    def test_covariance_matrix(self):
        theta = ParameterSet.from_vector([2, 0.5, 0.1, 0.5, 1, 0.5])
        c0 = colocated_covariance(theta, 2)
        assert c0[0, 0] == 2 and c0[1, 1] == 0.5
        assert c0[0, 1] == pytest.approx(RHO_FIG5 * 1.0, rel=1e-14)


class TestCrossCov:
    def test_variance_at_zero_lag(self):
        theta = ParameterSet.from_vector([1.7, 1, 0.1, 0.5, 1, 0.5])
        assert matern_cross_cov(theta, 0, 0, 0.0, 2) == pytest.approx(1.7)

    def test_exponential_special_case(self):
        theta = ParameterSet.from_vector([1, 1, 0.2, 0.5, 1, 0.5])
        assert matern_cross_cov(theta, 0, 0, 0.2, 2) == pytest.approx(math.exp(-1), rel=1e-14)

    def test_fig5_cross_value(self):
        theta = ParameterSet.from_vector(FIG5_THETA)
        assert matern_cross_cov(theta, 0, 1, 0.09, 2) == pytest.approx(C12_FIG5_AT_RANGE, rel=1e-13)

    def test_matches_scalar_oracle(self, rng):
        theta = random_theta(rng, 3)
        h = rng.uniform(0, 1, 25)
        for i in range(3):
            for j in range(3):
                got = matern_cross_cov(theta, i, j, h, 2)
                want = [oracle_cij(theta, i, j, v) for v in h]
                np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_negative_distance(self):
        with pytest.raises(ValueError):
            matern_cross_cov(ParameterSet.from_vector(FIG5_THETA), 0, 0, -1.0, 2)


class TestAssembly:
    def test_single_location(self):
        theta = ParameterSet.from_vector([2, 3, 0.1, 0.5, 1, 0.5])
        off = RHO_FIG5 * math.sqrt(6)
        for rep in Representation:
            s = assemble_sigma(theta, LocationSet([[0.3, 0.3]]), rep).to_dense()
            np.testing.assert_allclose(s, [[2, off], [off, 3]], rtol=1e-14)

    def test_fig3_layout(self):
        theta = ParameterSet.from_vector(FIG5_THETA)
        locs = LocationSet([[0.1, 0.1], [0.5, 0.2], [0.3, 0.9]])
        s1 = assemble_sigma(theta, locs, "I").to_dense()
        s2 = assemble_sigma(theta, locs, "II").to_dense()
        perm = permutation_between(3, 2)
        assert np.array_equal(s1, s2[np.ix_(perm, perm)])
        # Rep I row 1 is variable 2 at location 1; Rep II row 3 is the same
        np.testing.assert_allclose(s1[1, 2], matern_cross_cov(theta, 1, 0, locs.distances[0, 1], 2))
        np.testing.assert_allclose(s2[3, 1], s1[1, 2])

    def test_matches_oracle_both_representations(self, rng):
        theta = random_theta(rng, 2)
        locs = random_locations(rng, 7)
        np.testing.assert_allclose(assemble_sigma(theta, locs, "I").to_dense(), oracle_sigma(theta, locs.coords), rtol=1e-12)
        np.testing.assert_allclose(
            assemble_sigma(theta, locs, "II").to_dense(), oracle_sigma(theta, locs.coords, block=True), rtol=1e-12
        )

    def test_univariate_matern(self, rng):
        theta = ParameterSet([1.3], 0.15, [1.2], [[1.0]])
        locs = random_locations(rng, 10)
        np.testing.assert_allclose(assemble_sigma(theta, locs).to_dense(), oracle_sigma(theta, locs.coords), rtol=1e-12)

    def test_exactly_symmetric(self, rng):
        s = assemble_sigma(random_theta(rng, 3), random_locations(rng, 40)).data
        assert np.array_equal(s, s.T)

    def test_c0_at_data_site_and_oracle(self, rng):
        theta = random_theta(rng, 2)
        locs = random_locations(rng, 4)
        c = assemble_c0(theta, locs, locs.coords[2])
        np.testing.assert_allclose(c[4:6], colocated_covariance(theta, 2), rtol=1e-14)
        s0 = rng.uniform(0, 1, 2)
        np.testing.assert_allclose(assemble_c0(theta, locs, s0), oracle_c0(theta, locs.coords, s0), rtol=1e-12)

    def test_c0_single_location(self):
        theta = ParameterSet.from_vector(FIG5_THETA)
        c = assemble_c0(theta, LocationSet([[0.0, 0.0]]), [0.09, 0.0])
        assert c[0, 1] == pytest.approx(C12_FIG5_AT_RANGE, rel=1e-13)

    def test_flatten_round_trip(self, rng):
        v = rng.standard_normal((5, 3))
        for rep in Representation:
            assert np.array_equal(unflatten(flatten(v, rep), 5, 3, rep), v)


def test_numpy_fallback_matches_compiled(rng):
    """The MVGEOSTAT_NUMBA=0 path assembles the same matrix."""
    code = (
        "import json, numpy as np\n"
        "from mvgeostat import ParameterSet, assemble_sigma, generate_locations\n"
        "from mvgeostat._accel import USE_NUMBA\n"
        "s = assemble_sigma(ParameterSet.from_vector([1, 1, 0.09, 0.5, 1.3, 0.5]), generate_locations('uniform_random', 30, 4))\n"
        "print(json.dumps([USE_NUMBA, s.data.ravel().tolist()]))\n"
    )
    runs = {}
    for flag in ("0", "1"):
        env = dict(os.environ, MVGEOSTAT_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        runs[flag] = json.loads(out.stdout)
    assert runs["0"][0] is False
    np.testing.assert_allclose(runs["0"][1], runs["1"][1], rtol=1e-13, atol=1e-300)
