from dataclasses import replace

import numpy as np
import pytest

from conftest import config_path
from expfb.energy import EnergyModel
from expfb.errors import DomainError, LineSearchFailure
from expfb.grid import build_mesh, rectangle
from expfb.nfunction import INFINITE, EnergyLaw
from expfb.options import SolverOptions
from expfb.problem import constant, load_config, sample
from expfb.solver import (_descend, ball_dirichlet_energy, harmonic_extension, minimize_stage,
                          multistart, oracle_1d, phi_harmonic_replacement, solve,
                          stage_laws)


@pytest.fixture(scope="module")
def small2d():
    spec = load_config(config_path("twophase_2d.json")).with_(resolution=(12, 12))
    return spec, spec.mesh()


def test_stage_laws_end_at_target():
    spec = load_config(config_path("kink_1d.json"))
    assert [l.order for l in stage_laws(spec)] == [1, 2, 4, 8, 16, INFINITE]
    low = spec.with_(law=EnergyLaw(4))
    assert [l.order for l in stage_laws(low)] == [1, 2, 4]
    odd = spec.with_(law=EnergyLaw(3))
    assert [l.order for l in stage_laws(odd)] == [1, 2, 3]


def test_harmonic_extension_of_affine_data(small2d):
    spec, mesh = small2d
    U = harmonic_extension(spec, mesh)
    assert np.allclose(U, sample(spec.psi, mesh), atol=1e-12)


def test_stage_decreases_energy_and_keeps_boundary(small2d):
    spec, mesh = small2d
    U0 = harmonic_extension(spec, mesh)
    res = minimize_stage(spec, mesh, U0, EnergyLaw(2), 0.1)
    model = EnergyModel(spec, mesh, EnergyLaw(2), 0.1)
    assert res.converged
    assert res.energy_value < model.energy(U0)
    b = mesh.boundary_mask
    assert np.array_equal(res.field[b], sample(spec.psi, mesh)[b])
    energies = [t.energy for t in res.trace]
    assert all(b <= a for a, b in zip(energies, energies[1:]))


def test_solve_records_every_stage(small2d):
    spec, mesh = small2d
    res = solve(spec, mesh)
    n = len(stage_laws(spec)) * len(spec.solver.delta_schedule)
    assert len(res.per_stage) == n
    assert res.converged
    assert res.iterations == sum(s.iterations for s in res.per_stage)
    assert res.energy_value == pytest.approx(sum(res.breakdown), rel=1e-14)
    assert np.isfinite(res.energy_value)


def test_solve_is_deterministic(small2d):
    spec, mesh = small2d
    a, b = solve(spec, mesh), solve(spec, mesh)
    assert np.array_equal(a.field, b.field)


def test_iteration_cap_reports_not_converged(small2d):
    spec, mesh = small2d
    opts = SolverOptions(max_iters=1, k_schedule=(1,), delta_schedule=(0.1,))
    res = solve(spec.with_(law=EnergyLaw(1)), mesh, opts=opts)
    assert not res.converged


def test_polish_never_raises_energy(small2d):
    spec, mesh = small2d
    rough = solve(spec, mesh, opts=replace(spec.solver, polish=False))
    polished = solve(spec, mesh)
    assert polished.energy_value <= rough.energy_value + 1e-12


def _bad_gradient_problem():
    # the reported gradient says "go right" but the energy rises that way
    def fun(x):
        return float(x @ x), x - 1.0, x - 1.0

    def dfun(x, dx):
        return float((x + dx) @ (x + dx) - x @ x)
    return fun, dfun


def test_descend_raises_without_admissible_step():
    fun, dfun = _bad_gradient_problem()
    opts = SolverOptions()
    with pytest.raises(LineSearchFailure) as info:
        _descend(fun, dfun, np.zeros(3), (), opts, lambda v: v.copy(), "t")
    assert info.value.iterate is not None


def test_descend_accepts_rounding_floor():
    fun, dfun = _bad_gradient_problem()
    x, E, gnorm, it, conv, _ = _descend(fun, dfun, np.zeros(3), (), SolverOptions(),
                                        lambda v: v.copy(), "t", noise=lambda x: 2.0)
    assert conv and it == 0 and gnorm == 1.0


def test_oracle_symmetric_case():
    t, e = oracle_1d(0.3, 0.3, 1.0, 1.0, EnergyLaw(), grid_points=10**4)
    assert t == pytest.approx(0.5, abs=1e-4)
    assert e == pytest.approx(np.expm1(0.36) + 1.0, rel=1e-8)
    with pytest.raises(DomainError):
        oracle_1d(0.0, 0.3, 1.0, 1.0, EnergyLaw())


def test_oracle_prefers_cheap_phase():
    # cheaper minus phase pushes the kink towards the plus end
    t, _ = oracle_1d(0.2, 0.2, 5.0, 0.0, EnergyLaw(), grid_points=10**4)
    assert t > 0.5


def test_replacement_keeps_affine_and_lowers_energy():
    mesh = build_mesh(rectangle(), (16, 16))
    ball = ((0.5, 0.5), 0.3)
    affine = 0.4 * mesh.nodes[:, 0] - 0.2 * mesh.nodes[:, 1]
    law = EnergyLaw(4)
    V = phi_harmonic_replacement(law, mesh, affine, ball)
    assert np.allclose(V, affine, atol=1e-9)
    bumpy = affine + 0.05 * np.sin(9 * mesh.nodes[:, 0]) * np.sin(7 * mesh.nodes[:, 1])
    W = phi_harmonic_replacement(law, mesh, bumpy, ball)
    assert ball_dirichlet_energy(law, mesh, W, ball) < ball_dirichlet_energy(law, mesh, bumpy, ball)
    outside = np.hypot(mesh.nodes[:, 0] - 0.5, mesh.nodes[:, 1] - 0.5) >= 0.3
    assert np.array_equal(W[outside], bumpy[outside])
    with pytest.raises(DomainError):
        phi_harmonic_replacement(law, mesh, affine, ((0.1, 0.5), 0.3))


def test_multistart_ties_structure():
    spec = load_config(config_path("affine_1d.json")).with_(resolution=(16,))
    results, ties = multistart(spec, 2)
    assert len(results) == 2
    assert ties == []    # strictly convex: every start reaches the same field
    assert np.allclose(results[0].field, results[1].field, atol=1e-8)


def test_f_zero_respects_bounds(small2d):
    spec, mesh = small2d
    spec = spec.with_(f_plus=constant(0.0), f_minus=constant(0.0))
    U = solve(spec, mesh).field
    psi = sample(spec.psi, mesh)[mesh.boundary_mask]
    assert U.max() <= psi.max() + 1e-6 and U.min() >= psi.min() - 1e-6
