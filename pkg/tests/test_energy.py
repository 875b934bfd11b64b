import math

import numpy as np
import pytest

from conftest import config_path
from expfb.energy import (EnergyModel, SmoothedIndicator, check_dirichlet, continuum_energy,
                          energy, energy_breakdown, energy_gradient, smoothed_heaviside)
from expfb.errors import DimensionMismatch, DomainError, NFunctionOverflow
from expfb.grid import build_mesh, interval
from expfb.nfunction import EnergyLaw
from expfb.problem import constant, load_config, sample


@pytest.fixture(scope="module")
def twophase():
    spec = load_config(config_path("twophase_2d.json")).with_(resolution=(8, 8))
    return spec, spec.mesh()


def test_heaviside():
    ind = SmoothedIndicator(0.1)
    assert smoothed_heaviside(ind, -1.0) == 0.0
    assert smoothed_heaviside(ind, 0.05) == pytest.approx(0.5)
    assert np.array_equal(smoothed_heaviside(ind, np.array([0.0, 0.2])), [0.0, 1.0])
    with pytest.raises(DomainError):
        SmoothedIndicator(0.0)


def test_affine_energy_closed_form():
    spec = load_config(config_path("affine_1d.json"))
    mesh = spec.mesh()
    U = sample(spec.psi, mesh)
    assert energy(spec, mesh, U) == pytest.approx(math.exp(4.0), rel=1e-14)
    phi, f, g = energy_breakdown(spec, mesh, U)
    assert phi == pytest.approx(math.exp(4.0) - 1.0) and f == 0.0 and g == pytest.approx(1.0)
    assert check_dirichlet(spec, mesh, U)
    assert not check_dirichlet(spec, mesh, U + 1.0)


def test_breakdown_sums_to_energy(twophase):
    spec, mesh = twophase
    U = sample(spec.psi, mesh)
    assert sum(energy_breakdown(spec, mesh, U)) == pytest.approx(energy(spec, mesh, U), rel=1e-14)


def test_delta_energy_matches_direct_difference(twophase):
    spec, mesh = twophase
    rng = np.random.default_rng(3)
    model = EnergyModel(spec, mesh, EnergyLaw(), 0.02)
    for _ in range(20):
        U = 0.3 * rng.standard_normal(mesh.n_nodes)
        dU = 1e-2 * rng.standard_normal(mesh.n_nodes)
        direct = model.energy(U + dU) - model.energy(U)
        assert model.delta_energy(U, dU) == pytest.approx(direct, rel=1e-9, abs=1e-13)


def test_delta_energy_across_ramp(twophase):
    spec, mesh = twophase
    model = EnergyModel(spec, mesh, EnergyLaw(3), 0.05)
    U = np.full(mesh.n_nodes, -0.02)
    dU = np.full(mesh.n_nodes, 0.1)   # every node crosses the whole ramp
    direct = model.energy(U + dU) - model.energy(U)
    assert model.delta_energy(U, dU) == pytest.approx(direct, rel=1e-12)


def test_one_sided_gradients_at_kink():
    spec = load_config(config_path("kink_1d.json")).with_(resolution=(4,))
    mesh = spec.mesh()
    model = EnergyModel(spec, mesh, EnergyLaw(), 0.1)
    U = np.array([-0.2, -0.05, 0.0, 0.05, 0.2])
    _, ga, gb = model.one_sided_gradients(U)
    # the ramp adds (gamma_+ - gamma_-) w / delta from above only
    w = mesh.lumped_weights[2]
    assert ga[2] - gb[2] == pytest.approx(5.0 * w / 0.1)
    assert ga[0] == 0.0 and ga[-1] == 0.0


def test_gradient_matches_difference_one_field(twophase):
    spec, mesh = twophase
    U = 0.2 * np.sin(7 * mesh.nodes[:, 0]) + 0.13
    g = energy_gradient(spec, mesh, U, SmoothedIndicator(0.01))
    model = EnergyModel(spec, mesh, None, 0.01)
    i = int(np.flatnonzero(~mesh.boundary_mask)[5])
    e = np.zeros_like(U)
    e[i] = 1e-6
    assert g[i] == pytest.approx((model.energy(U + e) - model.energy(U - e)) / 2e-6, rel=1e-6)


def test_overflow_gives_inf():
    spec = load_config(config_path("affine_1d.json"))
    mesh = spec.mesh()
    U = 30.0 * np.cos(np.arange(mesh.n_nodes))
    assert energy(spec, mesh, U) == np.inf
    assert energy(spec, mesh, U, law=EnergyLaw(4)) < np.inf
    with pytest.raises(NFunctionOverflow):
        energy_gradient(spec, mesh, U)


def test_shape_mismatch():
    spec = load_config(config_path("affine_1d.json"))
    with pytest.raises(DimensionMismatch):
        energy(spec, spec.mesh(), np.zeros(3))


def test_continuum_energy_exact_cases():
    spec = load_config(config_path("kink_1d.json")).with_(resolution=(4,))
    mesh = spec.mesh()
    # linear from -0.2 to 0.2 crosses at 1/2: J = Phi(0.4) + 5 * 1/2
    U = -0.2 + 0.4 * mesh.nodes[:, 0]
    assert continuum_energy(spec, mesh, U) == pytest.approx(math.expm1(0.16) + 2.5, rel=1e-14)
    spec2 = spec.with_(f_plus=constant(2.0), gamma_plus=constant(0.0))
    # int of max(u, 0) over the interval is 0.05
    assert continuum_energy(spec2, mesh, U) == pytest.approx(math.expm1(0.16) - 0.1, rel=1e-13)
