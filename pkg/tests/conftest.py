import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import twistbands as tb

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

THETA = math.radians(1.1)


@pytest.fixture(scope="session")
def geom():
    return tb.build_layer_geometry(2.46, THETA)


@pytest.fixture(scope="session")
def moire(geom):
    return tb.build_moire_geometry(geom)


@pytest.fixture(scope="session")
def model(geom):
    return tb.simplified_model(theta=THETA)


@pytest.fixture(scope="session")
def weak_model(geom):
    """Interlayer coupling far below the flat-band value; spectra stay
    perturbative, so truncation behaviour is clean at small cutoffs."""
    return tb.simplified_model(theta=THETA, scale=2.0)


@pytest.fixture(scope="session")
def small_basis(geom, moire):
    return tb.build_basis(geom, moire, 3.2 * moire.shortest_g, tb.VALLEY_K)


def _second_neighbours():
    return [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]


def synthetic_table_kernel(kappa=0.9, mu=1.0, rho_max=2.6):
    """A tabulated interlayer kernel whose samples come from a function that
    lies exactly in the fit basis, so the fitted kernel is the sampled one."""

    def env(s):
        return np.exp(-kappa * np.sqrt(s + mu * mu))

    def cheb(k, s):
        x = 2.0 * s / rho_max**2 - 1.0
        return np.cos(k * np.arccos(np.clip(x, -1.0, 1.0)))

    def h_diag(xi):
        s = xi[..., 0] ** 2 + xi[..., 1] ** 2
        return (0.34 + 0.12 * cheb(1, s) - 0.05 * cheb(2, s)) * env(s)

    def h_off(xi):
        s = xi[..., 0] ** 2 + xi[..., 1] ** 2
        re_w2 = xi[..., 0] ** 2 - xi[..., 1] ** 2
        return (0.27 + 0.08 * cheb(1, s)) * env(s) + 0.03 * re_w2 * env(s)

    rhos = np.linspace(0.0, rho_max, 12)
    thetas = np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False)
    samples = []
    for r in rhos:
        for th in thetas:
            xi = np.array([r * math.cos(th), r * math.sin(th)])
            for pair, fn in (
                ("AA", h_diag),
                ("BB", h_diag),
                ("AB", h_off),
                ("BA", h_off),
            ):
                samples.append((float(r), float(th), pair, complex(fn(xi))))
    kernel = tb.TableInterlayer(
        samples, L=4, K=8, rho_max=rho_max, kappa=kappa, mu=mu
    )
    return kernel, h_diag, h_off


def build_wannier_model(geom, t1=0.9, t2=0.11):
    """Tight-binding model with 2nd-neighbour hoppings and a table kernel."""
    hops = []
    for n in ((0, 0), (1, 0), (0, 1)):
        hops.append(tb.Hopping(n, "A", "B", complex(-t1)))
    for n in ((0, 0), (-1, 0), (0, -1)):
        hops.append(tb.Hopping(n, "B", "A", complex(-t1)))
    for n in _second_neighbours():
        hops.append(tb.Hopping(n, "A", "A", complex(t2)))
        hops.append(tb.Hopping(n, "B", "B", complex(t2)))
    kernel, _, _ = synthetic_table_kernel()
    return tb.TBModel(
        geom,
        {1: list(hops), 2: list(hops)},
        kernel,
        gamma=(2.0, 2.0, 0.9),
        kind="wannier",
    )


@pytest.fixture(scope="session")
def wannier_model(geom):
    return build_wannier_model(geom)


@pytest.fixture(scope="session")
def wannier_path(wannier_model, tmp_path_factory):
    path = tmp_path_factory.mktemp("models") / "wannier.txt"
    tb.write_model(wannier_model, path)
    return path
