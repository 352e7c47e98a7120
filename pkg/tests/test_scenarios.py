import numpy as np
import pytest

from qrevdiff.errors import ConstraintError
from qrevdiff.operators import HilbertSpace
from qrevdiff.phase_space import PhaseGrid, wigner_transform
from qrevdiff.scenarios import (Scenario, ScenarioModel, get_scenario, initial_moments, initial_state,
                                lindblad_model, reference_state, register, scenario_names, weyl_polynomial)
from qrevdiff.symbols import Symbol
from qrevdiff.config import SCHEMA

PARAMS = {k: v[1] for k, v in SCHEMA["physics"].items()}


def test_registry():
    assert set(scenario_names()) >= {"damped-harmonic-oscillator", "quartic-kerr-perturbation",
                                     "ou-classical", "unitary-only"}
    with pytest.raises(ConstraintError):
        get_scenario("missing")
    with pytest.raises(ValueError):
        register(get_scenario("unitary-only"))


def test_model_shapes():
    damped = get_scenario("damped-harmonic-oscillator").build(dict(PARAMS, n_thermal=0.5))
    assert len(damped.ells) == 2 and damped.is_linear
    quartic = get_scenario("quartic-kerr-perturbation").build(PARAMS)
    assert len(quartic.ells) == 2 and not quartic.is_linear and quartic.H.degree == 4
    assert get_scenario("unitary-only").build(PARAMS).ells == []
    ou = get_scenario("ou-classical").build(PARAMS)
    assert not ou.quantum and np.array_equal(ou.drift_matrix, -np.eye(2))


def test_weyl_polynomial_matches_grid_quantization():
    hs = HilbertSpace(64, "position", 8.0)
    grid = PhaseGrid.dual_to(hs)
    Q, P = Symbol.Q(), Symbol.P()
    sym = Q * P * 0.5 + Q * Q * P * 0.1
    direct = weyl_polynomial(sym, hs)
    q, p = hs.q(), hs.p()
    assert np.allclose(weyl_polynomial(Q * P, hs), 0.5 * (q @ p + p @ q))
    # Tr(ρ Weyl(f)) equals the phase-space pairing of f with the Wigner function of ρ
    rho = np.outer(hs.gaussian_ket(0.5, -0.3, 0.9), hs.gaussian_ket(0.5, -0.3, 0.9).conj())
    W = wigner_transform(rho, hs, grid).values.real
    pairing = np.sum(W * sym.evaluate(grid)) * grid.cell_area / (2 * np.pi * hs.hbar)
    assert np.trace(rho @ direct) == pytest.approx(pairing, abs=1e-8)


def test_lindblad_model_scales_jumps_by_root_hbar():
    hs = HilbertSpace(20, "fock", hbar=0.25)
    m = lindblad_model(get_scenario("damped-harmonic-oscillator").build(PARAMS), hs)
    # ℓ = sqrt(ℏ)·a as a symbol, so L = ℓ/sqrt(ℏ) is the bare lowering operator
    assert np.allclose(m.L(0.0)[0], hs.a(), atol=1e-12)
    with pytest.raises(ConstraintError):
        lindblad_model(get_scenario("ou-classical").build(PARAMS), hs)


def test_initial_state_moments_agree():
    hs = HilbertSpace(64, "position", 8.0, hbar=0.5)
    params = dict(PARAMS, hbar=0.5, q0=0.7, p0=-0.4, width=0.9)
    rho = initial_state(params, hs)
    mean, cov = initial_moments(params)
    q, p = hs.q(), hs.p()
    assert np.trace(rho @ q).real == pytest.approx(mean[0], abs=1e-8)
    assert np.trace(rho @ p).real == pytest.approx(mean[1], abs=1e-8)
    var_q = np.trace(rho @ q @ q).real - mean[0] ** 2
    assert var_q == pytest.approx(cov[0, 0], abs=1e-8)


def test_reference_state_is_full_rank_density():
    hs = HilbertSpace(20, "fock")
    g = reference_state(hs, PARAMS, 0.8)
    w = np.linalg.eigvalsh(g)
    assert np.trace(g).real == pytest.approx(1.0, abs=1e-12) and w[0] > 0
