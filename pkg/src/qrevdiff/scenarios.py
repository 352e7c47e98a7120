"""Registry of shipped scenarios: symbols, operators and initial states.

Every quantum scenario is defined by ℏ-free polynomial symbols H(Q, P) and
ℓ_α(Q, P).  Operators are their Weyl quantizations on whichever Hilbert
space a driver needs, so the position-basis Lindblad run, the Fock-basis
Petz run and the phase-space coefficients all describe the same model.
"""

from dataclasses import dataclass, field
from math import comb
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.linalg import expm

from .errors import ConstraintError
from .lindblad import LindbladModel
from .operators import HilbertSpace, pure_state, thermal_state
from .symbols import Symbol


@dataclass
class ScenarioModel:
    """Symbols of one scenario instance (or a linear classical model)."""

    H: Optional[Symbol]
    ells: List[Symbol]
    quantum: bool = True
    drift_matrix: Optional[np.ndarray] = None     # classical models: f = A x
    diffusion_matrix: Optional[np.ndarray] = None

    @property
    def is_linear(self) -> bool:
        if not self.quantum:
            return True
        return (self.H is None or self.H.degree <= 2) and all(l.degree <= 1 for l in self.ells)


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    build: Callable[[dict], ScenarioModel]
    quantum: bool = True


_REGISTRY: Dict[str, Scenario] = {}


def register(scenario: Scenario, replace: bool = False) -> Scenario:
    if scenario.name in _REGISTRY and not replace:
        raise ValueError(f"scenario {scenario.name!r} already registered")
    _REGISTRY[scenario.name] = scenario
    return scenario


def unregister(name: str) -> None:
    _REGISTRY.pop(name, None)


def get_scenario(name: str) -> Scenario:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ConstraintError(f"unknown scenario {name!r}; known: {', '.join(sorted(_REGISTRY))}") from None


def scenario_names() -> list:
    return sorted(_REGISTRY)


# ---------------------------------------------------------------------------
# symbol builders

def _oscillator(p) -> Symbol:
    Q, P = Symbol.Q(), Symbol.P()
    m, w = p["mass"], p["omega"]
    return P * P / (2 * m) + Q * Q * (m * w * w / 2)


def _lowering(p) -> Symbol:
    """ℏ-free symbol of sqrt(ℏ)·a: (sqrt(mω) Q + i P / sqrt(mω)) / sqrt(2)."""
    Q, P = Symbol.Q(), Symbol.P()
    s = np.sqrt(p["mass"] * p["omega"])
    return (Q * s + P * (1j / s)) / np.sqrt(2)


def _thermal_channels(p) -> List[Symbol]:
    a = _lowering(p)
    n = p["n_thermal"]
    out = [a * np.sqrt(p["kappa"] * (1 + n))]
    if n > 0:
        out.append(a.conj() * np.sqrt(p["kappa"] * n))
    return out


def _damped(p) -> ScenarioModel:
    return ScenarioModel(_oscillator(p), _thermal_channels(p))


def _quartic(p) -> ScenarioModel:
    Q, P = Symbol.Q(), Symbol.P()
    r2 = Q * Q + P * P
    H = _oscillator(p) + r2 * r2 * (p["lambda_quartic"] / 4)
    ells = _thermal_channels(p)
    if p["kappa2"] > 0:
        z = Q + P * 1j
        ells.append(z * z * (np.sqrt(p["kappa2"]) / 2))
    return ScenarioModel(H, ells)


def _unitary(p) -> ScenarioModel:
    return ScenarioModel(_oscillator(p), [])


def _ou(p) -> ScenarioModel:
    k, D = p["ou_rate"], p["ou_diffusion"]
    return ScenarioModel(None, [], quantum=False, drift_matrix=-k * np.eye(2), diffusion_matrix=D * np.eye(2))


register(Scenario("damped-harmonic-oscillator",
                  "harmonic H with thermal amplitude damping; the phase-space reduction is exact", _damped))
register(Scenario("quartic-kerr-perturbation",
                  "harmonic H plus λ(Q²+P²)²/4 and a two-photon loss channel; O(ℏ²) studies", _quartic))
register(Scenario("ou-classical", "classical Ornstein–Uhlenbeck process dx = −k x dt + sqrt(D) dW", _ou,
                  quantum=False))
register(Scenario("unitary-only", "harmonic H without jump operators", _unitary))


def check_hbar_independent(scenario: Scenario, params: dict) -> None:
    """Reject scenarios whose symbols change when only ℏ changes."""
    a = scenario.build(dict(params, hbar=params.get("hbar", 1.0)))
    b = scenario.build(dict(params, hbar=2.0 * params.get("hbar", 1.0) + 0.37))
    same = len(a.ells) == len(b.ells) and (a.H is None) == (b.H is None)
    if same and a.H is not None:
        same = a.H == b.H
    if same:
        same = all(x == y for x, y in zip(a.ells, b.ells))
    if same and not a.quantum:
        same = np.array_equal(a.drift_matrix, b.drift_matrix) and np.array_equal(a.diffusion_matrix,
                                                                                 b.diffusion_matrix)
    if not same:
        raise ConstraintError(f"scenario {scenario.name!r} has symbols that depend on hbar")


# ---------------------------------------------------------------------------
# quantization

def weyl_polynomial(symbol: Symbol, space: HilbertSpace) -> np.ndarray:
    """Weyl-ordered operator of a polynomial symbol.

    Uses Weyl(Q^i P^j) = 2^{-i} Σ_k C(i, k) q^k p^j q^{i-k}.
    """
    q, p = space.q(), space.p()
    d = space.dim
    qpow = [np.eye(d, dtype=complex)]
    ppow = [np.eye(d, dtype=complex)]
    ci, cj = symbol.coeffs.shape
    for _ in range(1, ci):
        qpow.append(qpow[-1] @ q)
    for _ in range(1, cj):
        ppow.append(ppow[-1] @ p)
    out = np.zeros((d, d), complex)
    for (i, j), c in np.ndenumerate(symbol.coeffs):
        if c == 0:
            continue
        acc = np.zeros((d, d), complex)
        for k in range(i + 1):
            acc += comb(i, k) * qpow[k] @ ppow[j] @ qpow[i - k]
        out += c * acc / 2**i
    return out


def lindblad_model(model: ScenarioModel, space: HilbertSpace) -> LindbladModel:
    """Operators for the Lindblad equation: Ĥ = Weyl(H), L_α = Weyl(ℓ_α)/sqrt(ℏ).

    The symbols are ℏ-free; the 1/sqrt(ℏ) makes the dissipator carry the
    1/ℏ that the phase-space coefficients assume.
    """
    if not model.quantum:
        raise ConstraintError("scenario has no quantum model")
    H = weyl_polynomial(model.H, space)
    H = 0.5 * (H + H.conj().T)
    Ls = [weyl_polynomial(l, space) / np.sqrt(space.hbar) for l in model.ells]
    return LindbladModel(H, Ls, space.hbar, model.H, list(model.ells))


def initial_moments(params: dict):
    """Mean and covariance of the Gaussian initial state (classical normalization)."""
    w, hbar = params["width"], params["hbar"]
    mean = np.array([params["q0"], params["p0"]])
    cov = np.diag([w * w / 2, hbar * hbar / (2 * w * w)])
    return mean, cov


def initial_state(params: dict, space: HilbertSpace) -> np.ndarray:
    return pure_state(space.gaussian_ket(params["q0"], params["p0"], params["width"]))


def gaussian_density(mean, cov, grid) -> np.ndarray:
    Qm, Pm = grid.mesh()
    X = np.stack([Qm - mean[0], Pm - mean[1]], axis=-1)
    Ci = np.linalg.inv(cov)
    quad = np.einsum("...i,ij,...j->...", X, Ci, X)
    return np.exp(-0.5 * quad) / (2 * np.pi * np.sqrt(np.linalg.det(cov)))


def reference_state(space: HilbertSpace, params: dict, displacement: float) -> np.ndarray:
    """Full-rank reference γ0 = D(α) thermal(β) D(α)† of the bare oscillator (Fock basis)."""
    a = space.a()
    n_op = a.conj().T @ a
    th = thermal_state(n_op, params["beta"])
    D = expm(displacement * (a.conj().T - a))
    g = D @ th @ D.conj().T
    return 0.5 * (g + g.conj().T)
