"""Shared fixtures and brute-force oracles.

The oracles rebuild every quantity from scalar loops over scipy's Bessel
function and explicit matrix inverses, sharing no code with the package.
"""

import math

import numpy as np
import pytest
from scipy.special import kv

from mvgeostat import LocationSet, ParameterSet

FIG5_THETA = (1.0, 1.0, 0.09, 0.5, 1.0, 0.5)


def oracle_rho(sigma2, nu, beta, i, j, d):
    if i == j:
        return 1.0
    nij = 0.5 * (nu[i] + nu[j])
    h = d / 2
    r = math.sqrt(math.gamma(nu[i] + h) / math.gamma(nu[i])) * math.sqrt(math.gamma(nu[j] + h) / math.gamma(nu[j]))
    return beta[i][j] * r * math.gamma(nij) / math.gamma(nij + h)


def oracle_cij(theta: ParameterSet, i, j, h, d=2):
    s2, a, nu, beta = theta.sigma2, theta.spatial_range, theta.nu, theta.beta
    scale = oracle_rho(s2, nu, beta, i, j, d) * math.sqrt(s2[i] * s2[j])
    if h == 0:
        return scale
    nij = 0.5 * (nu[i] + nu[j])
    x = h / a
    return scale * 2 ** (1 - nij) / math.gamma(nij) * x**nij * kv(nij, x)


def oracle_sigma(theta: ParameterSet, coords, block=False):
    coords = np.asarray(coords, dtype=float)
    n, p = coords.shape[0], theta.p
    out = np.empty((n * p, n * p))
    for l in range(n):
        for m in range(n):
            h = math.dist(coords[l], coords[m])
            for i in range(p):
                for j in range(p):
                    r, c = (i * n + l, j * n + m) if block else (l * p + i, m * p + j)
                    out[r, c] = oracle_cij(theta, i, j, h, coords.shape[1])
    return out


def oracle_c0(theta: ParameterSet, coords, targets):
    coords, targets = np.asarray(coords, float), np.atleast_2d(np.asarray(targets, float))
    n, m, p = coords.shape[0], targets.shape[0], theta.p
    out = np.empty((n * p, m * p))
    for l in range(n):
        for t in range(m):
            h = math.dist(coords[l], targets[t])
            for i in range(p):
                for j in range(p):
                    out[l * p + i, t * p + j] = oracle_cij(theta, i, j, h, coords.shape[1])
    return out


def oracle_loglik(theta, coords, values):
    s = oracle_sigma(theta, coords)
    z = np.asarray(values, float).reshape(-1)
    _, logdet = np.linalg.slogdet(s)
    return -0.5 * (z.size * math.log(2 * math.pi) + logdet + z @ np.linalg.inv(s) @ z)


def oracle_cokrige(theta, coords, values, targets):
    s = oracle_sigma(theta, coords)
    c = oracle_c0(theta, coords, targets)
    z = np.asarray(values, float).reshape(-1)
    return (c.T @ np.linalg.inv(s) @ z).reshape(-1, theta.p)


def oracle_errors(theta_t, theta_a, coords, target):
    """(E_t, E_ta, E_a) at one target from the direct expansions."""
    st, sa = oracle_sigma(theta_t, coords), oracle_sigma(theta_a, coords)
    ct, ca = oracle_c0(theta_t, coords, target), oracle_c0(theta_a, coords, target)
    it, ia = np.linalg.inv(st), np.linalg.inv(sa)
    origin = [[0.0] * len(target)]
    c0t, c0a = oracle_c0(theta_t, origin, origin), oracle_c0(theta_a, origin, origin)
    e_t = np.trace(c0t) - np.trace(ct.T @ it @ ct)
    wa = ia @ ca
    e_ta = np.trace(c0t) - 2 * np.trace(ct.T @ wa) + np.trace(wa.T @ st @ wa)
    e_a = np.trace(c0a) - np.trace(ca.T @ ia @ ca)
    return e_t, e_ta, e_a


def random_theta(rng, p):
    sigma2 = rng.uniform(0.5, 2.0, p)
    a = rng.uniform(0.05, 0.3)
    nu = rng.uniform(0.3, 2.0, p)
    b = rng.standard_normal((p, p + 1))
    cov = b @ b.T + 0.3 * np.eye(p)
    sd = np.sqrt(np.diag(cov))
    beta = cov / np.outer(sd, sd)
    np.fill_diagonal(beta, 1.0)
    beta = 0.5 * (beta + beta.T)
    return ParameterSet(sigma2, a, nu, beta)


def perturb(theta, rng, scale=0.3):
    f = np.exp(rng.uniform(-scale, scale, theta.p))
    return ParameterSet(theta.sigma2 * f, theta.spatial_range * math.exp(rng.uniform(-scale, scale)), theta.nu * f[::-1], theta.beta)


def random_locations(rng, n):
    return LocationSet(rng.uniform(0.0, 1.0, (n, 2)))


@pytest.fixture
def fig5_theta():
    return ParameterSet.from_vector(FIG5_THETA)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------------------
# acceptance summary: one pass/fail line per criterion
# ---------------------------------------------------------------------------

CRITERIA = {}


@pytest.fixture(scope="session")
def criterion():
    """``record(number, ok, detail)`` stores a summary line and prints it."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        CRITERIA[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[number])
