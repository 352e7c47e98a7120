"""Semiclassical drift/diffusion coefficients, score fields and reversed symbols.

Symbols are ℏ-free: the Hamiltonian operator is the Weyl quantization of
``H`` and each jump operator is ``Weyl(ℓ)/sqrt(ℏ)``.  All coefficient
formulas are written on :class:`~qrevdiff.symbols.Jet` objects, so the same
code serves exact polynomial symbols and grid-sampled fields.

Index convention: component 0 is Q, component 1 is P, and the symplectic
form has ω^{QP} = 1, ω^{PQ} = −1.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import events
from .errors import DerivativeUnavailableError, GridMismatchError, NumericalError
from .phase_space import Field, PhaseGrid, field_jet, grid_derivative, star_from_jets
from .symbols import Jet, Symbol

DEFAULT_DELTA = 1e-12


def symplectic_form(N: int = 1) -> np.ndarray:
    omega = np.zeros((2 * N, 2 * N), dtype=int)
    omega[:N, N:] = np.eye(N, dtype=int)
    omega[N:, :N] = -np.eye(N, dtype=int)
    return omega


OMEGA = symplectic_form(1)


def _smooth_on_grid(values: np.ndarray, rtol: float = 1e-9) -> bool:
    """True if the periodic extension of ``values`` is spectrally resolved."""
    F = np.abs(np.fft.fft2(values))
    top = F.max()
    if top == 0:
        return True
    kq = np.abs(np.fft.fftfreq(values.shape[0]))[:, None]
    kp = np.abs(np.fft.fftfreq(values.shape[1]))[None, :]
    high = (kq > 0.25) | (kp > 0.25)
    return bool(F[high].max() <= rtol * top)


def symbol_jet(x, grid: PhaseGrid, order: int, scheme: str = "spectral") -> Jet:
    """Jet of a symbol; grid fields must be smooth and periodic-compatible."""
    if isinstance(x, Jet):
        if x.order < order:
            raise DerivativeUnavailableError(f"jet of order {x.order} given, {order} needed")
        return x.truncate(order)
    if isinstance(x, Symbol):
        return x.jet(grid, order)
    if isinstance(x, Field):
        if x.grid != grid:
            raise GridMismatchError("symbol field lives on a different grid")
        if scheme == "spectral" and not _smooth_on_grid(x.values):
            raise DerivativeUnavailableError(
                "field is not smooth and decaying on the grid; supply a closed-form symbol")
        return field_jet(x.values, grid, order, scheme)
    if isinstance(x, (int, float, complex)):
        return Symbol.const(x).jet(grid, order)
    raise DerivativeUnavailableError(f"cannot obtain derivatives of {type(x).__name__}")


# ---------------------------------------------------------------------------
# drift and diffusion

def _drift_from_jets(Hj: Jet, ell_jets: Sequence[Jet], hbar: float) -> np.ndarray:
    bracket = [np.real(Hj[1, 0]).astype(float), np.real(Hj[0, 1]).astype(float)]
    for lj in ell_jets:
        lc = lj.conj()
        for nu, e in enumerate(((1, 0), (0, 1))):
            dlc = lc[e]
            im_term = np.imag(lj[0, 0] * dlc)
            # {ℓ, ∂_ν ℓ*} = ∂_Q ℓ ∂_P ∂_ν ℓ* − ∂_P ℓ ∂_Q ∂_ν ℓ*
            pb = lj[1, 0] * lc[e[0], e[1] + 1] - lj[0, 1] * lc[e[0] + 1, e[1]]
            bracket[nu] = bracket[nu] + im_term - 0.5 * hbar * np.real(pb)
    return np.stack([OMEGA[m, 0] * bracket[0] + OMEGA[m, 1] * bracket[1] for m in range(2)])


def _u_vectors(lj: Jet):
    """u^μ = Σ_λ ω^{μλ} ∂_λ ℓ and its first derivatives ∂_κ u^μ (if available)."""
    grad = [lj[1, 0], lj[0, 1]]
    u = [OMEGA[m, 0] * grad[0] + OMEGA[m, 1] * grad[1] for m in range(2)]
    du = None
    if lj.order >= 2:
        hess = [[lj[2, 0], lj[1, 1]], [lj[1, 1], lj[0, 2]]]   # hess[κ][λ]
        du = [[OMEGA[m, 0] * hess[k][0] + OMEGA[m, 1] * hess[k][1] for m in range(2)] for k in range(2)]
    return u, du


def _diffusion_from_jets(ell_jets: Sequence[Jet], hbar: float, shape):
    G = np.zeros((2, 2) + shape)
    divG = np.zeros((2,) + shape)
    Dc = np.zeros((2, 2) + shape, complex)
    for lj in ell_jets:
        u, du = _u_vectors(lj)
        for m in range(2):
            for n in range(m, 2):
                Dc[m, n] = Dc[m, n] + u[m] * np.conj(u[n])
        if du is not None:
            for m in range(2):
                for n in range(2):
                    # ∂_n of Re(u^m conj(u^n))
                    divG[m] += hbar * np.real(du[n][m] * np.conj(u[n]) + u[m] * np.conj(du[n][n]))
    Dc[1, 0] = np.conj(Dc[0, 1])
    for m in range(2):
        for n in range(m, 2):
            G[m, n] = hbar * np.real(Dc[m, n])
    G[1, 0] = G[0, 1]   # mirrored so symmetry is exact
    return G, divG, Dc


@dataclass
class DriftDiffusion:
    """Drift f^μ (shape (2, n_q, n_p)) and diffusion G^{μν} (shape (2, 2, n_q, n_p))."""

    drift: np.ndarray
    diffusion: np.ndarray
    grid: PhaseGrid
    hbar: float
    divergence: Optional[np.ndarray] = None   # Σ_ν ∂_ν G^{μν}
    complex_diffusion: Optional[np.ndarray] = None   # D_c, debug only

    @property
    def D_R(self) -> np.ndarray:
        return self.diffusion / self.hbar


def drift_coefficients(H, ells, hbar: float, grid: PhaseGrid, scheme: str = "spectral") -> np.ndarray:
    """f^μ = Σ_ν ω^{μν}[∂_ν H + Σ_α(Im(ℓ ∂_ν ℓ*) − (ℏ/2) Re{ℓ, ∂_ν ℓ*})]."""
    Hj = symbol_jet(H, grid, 1, scheme)
    ljs = [symbol_jet(l, grid, 2, scheme) for l in ells]
    return _drift_from_jets(Hj, ljs, hbar)


def diffusion_coefficients(ells, hbar: float, grid: PhaseGrid, scheme: str = "spectral") -> np.ndarray:
    """G^{μν} = ℏ Σ_α Σ_{λρ} ω^{μλ} ω^{νρ} Re(∂_λ ℓ ∂_ρ ℓ*)."""
    ljs = [symbol_jet(l, grid, 1, scheme) for l in ells]
    G, _, _ = _diffusion_from_jets(ljs, hbar, grid.shape)
    return G


def drift_diffusion(H, ells, hbar: float, grid: PhaseGrid, scheme: str = "spectral") -> DriftDiffusion:
    Hj = symbol_jet(H, grid, 1, scheme)
    ljs = [symbol_jet(l, grid, 2, scheme) for l in ells]
    f = _drift_from_jets(Hj, ljs, hbar)
    G, divG, Dc = _diffusion_from_jets(ljs, hbar, grid.shape)
    return DriftDiffusion(f, G, grid, hbar, divG, Dc)


def psd_min_eigenvalue(G: np.ndarray, sym_tol: float = 1e-12) -> float:
    """Smallest eigenvalue of G(x) over all grid points."""
    G = np.asarray(G, dtype=float)
    scale = max(np.max(np.abs(G)), 1e-300)
    asym = np.max(np.abs(G - np.swapaxes(G, 0, 1)))
    if asym > sym_tol * scale:
        raise NumericalError(f"diffusion matrix is not symmetric (deviation {asym:.3e})")
    mats = np.moveaxis(G, (0, 1), (-2, -1))
    return float(np.linalg.eigvalsh(mats)[..., 0].min())


# ---------------------------------------------------------------------------
# score fields

def _key(axes):
    return (axes.count(0), axes.count(1))


@dataclass
class ScoreField:
    """Derivatives of φ = log W up to third order, plus floor bookkeeping.

    ``V`` is the score (∂_Q φ, ∂_P φ).  ``floored`` marks points where W was
    below δ·max W; ``region`` marks points with W ≥ 10δ·max W, where
    residual comparisons are made.
    """

    log_jet: Jet
    floored: np.ndarray
    region: np.ndarray
    delta: float

    @property
    def V(self) -> np.ndarray:
        return np.stack([self.log_jet[1, 0], self.log_jet[0, 1]])

    @property
    def floor_fraction(self) -> float:
        return float(np.mean(self.floored))

    def component_jets(self):
        """Jets of V_Q and V_P (one order lower than the log-density jet)."""
        return self.log_jet.d(0), self.log_jet.d(1)


def score_field(W: Field, delta: float = DEFAULT_DELTA, scheme: str = "spectral",
                order: int = 3) -> ScoreField:
    """Score ∂W/W with W floored at δ·max W, and higher log-derivatives via cumulant identities."""
    vals = np.real(W.values)
    top = vals.max()
    if top <= 0:
        raise NumericalError("reference density has no positive values")
    floor = delta * top
    floored = vals < floor
    events.record("density_floor", int(np.count_nonzero(floored)))
    Wf = np.maximum(vals, floor)
    wj = field_jet(vals, W.grid, order, scheme)
    r = {k: v / Wf for k, v in wj.values.items()}
    phi = {(0, 0): np.log(Wf)}
    for a in range(2):
        phi[_key((a,))] = r[_key((a,))]
    if order >= 2:
        for a in range(2):
            for b in range(a, 2):
                phi[_key((a, b))] = r[_key((a, b))] - phi[_key((a,))] * phi[_key((b,))]
    if order >= 3:
        for a in range(2):
            for b in range(a, 2):
                for c in range(b, 2):
                    k = _key((a, b, c))
                    phi[k] = (r[k]
                              - phi[_key((a, b))] * phi[_key((c,))]
                              - phi[_key((a, c))] * phi[_key((b,))]
                              - phi[_key((b, c))] * phi[_key((a,))]
                              - phi[_key((a,))] * phi[_key((b,))] * phi[_key((c,))])
    return ScoreField(Jet(phi, order), floored, vals >= 10 * floor, delta)


def score_from_log_density(phi: Symbol, grid: PhaseGrid, delta: float = DEFAULT_DELTA,
                           order: int = 3) -> ScoreField:
    """Exact score of W ∝ exp(φ) for a polynomial log-density φ."""
    if not phi.is_real:
        raise ValueError("log-density must be real")
    jet = phi.jet(grid, order)
    logw = jet[0, 0] - jet[0, 0].max()
    region = logw >= np.log(10 * delta)
    return ScoreField(jet, np.zeros(grid.shape, bool), region, delta)


def reverse_drift(dd: DriftDiffusion, reference: Union[Field, ScoreField],
                  delta: float = DEFAULT_DELTA, scheme: str = "spectral") -> np.ndarray:
    """f̄^μ = −f^μ + (1/W_γ) Σ_ν ∂_ν(G^{μν} W_γ) = −f^μ + Σ_ν ∂_ν G^{μν} + Σ_ν G^{μν} V_ν."""
    score = reference if isinstance(reference, ScoreField) else score_field(reference, delta, scheme, order=1)
    V = score.V
    G = dd.diffusion
    if dd.divergence is not None:
        divG = dd.divergence
    else:
        divG = np.stack([sum(grid_derivative(G[m, n], dd.grid, *((1, 0) if n == 0 else (0, 1)), scheme="fd4")
                             for n in range(2)) for m in range(2)])
    GV = np.einsum("mn...,n...->m...", G, V)
    scale = max(np.max(np.abs(G)), 1e-300)
    constant_G = np.max(np.abs(G - G[:, :, :1, :1])) <= 1e-14 * scale
    if constant_G:
        if np.max(np.abs(divG), initial=0.0) > 1e-8 * max(scale, 1.0):
            raise NumericalError("constant diffusion with non-zero divergence")
        return -dd.drift + GV
    return -dd.drift + divG + GV


# ---------------------------------------------------------------------------
# reversed symbols and the two-route check

@dataclass
class ReversedSymbols:
    ell_tilde: list      # complex arrays
    H_tilde: np.ndarray
    ell_jets: list
    H_jet: Jet


def _reversed_jets(Hj: Jet, ell_jets: Sequence[Jet], score: ScoreField, hbar: float):
    VQ, VP = score.component_jets()
    lt = []
    Ht = -Hj
    for lj in ell_jets:
        lc = lj.conj()
        lt.append(lc + (0.5j * hbar) * (lc.d(1) * VQ - lc.d(0) * VP))
        corr = (lc * lj.d(0)).real * VP - (lc * lj.d(1)).real * VQ
        Ht = Ht - (0.5 * hbar) * corr
    return Ht, lt


def reversed_symbols(ells, H, score: ScoreField, hbar: float, grid: PhaseGrid,
                     scheme: str = "spectral") -> ReversedSymbols:
    """First-order reversed symbols.

    ℓ̃ = ℓ* + (iℏ/2)(∂_P ℓ* V_Q − ∂_Q ℓ* V_P),
    H̃ = −H − (ℏ/2) Σ_α [Re(ℓ* ∂_Q ℓ) V_P − Re(ℓ* ∂_P ℓ) V_Q].
    """
    order = min(2, score.log_jet.order - 1)
    Hj = symbol_jet(H, grid, order, scheme)
    ljs = [symbol_jet(l, grid, order + 1, scheme) for l in ells]
    Ht, lt = _reversed_jets(Hj, ljs, score, hbar)
    return ReversedSymbols([j[0, 0] for j in lt], np.real(Ht[0, 0]), lt, Ht)


def _route_one(Hj, ljs, score, hbar):
    Ht, lt = _reversed_jets(Hj, ljs, score, hbar)
    return _drift_from_jets(Ht.real, lt, hbar)


def reverse_drift_routes(H, ells, score: ScoreField, hbar: float, grid: PhaseGrid,
                         order: str = "first", scheme: str = "spectral"):
    """Reversed drift from the reversed symbols (route 1) and from the score formula (route 2).

    With ``order="first"`` route 1 is expanded in ℏ and truncated after the
    linear term, matching the accuracy of the reversed symbols themselves;
    ``order="full"`` evaluates it as is.
    """
    if score.log_jet.order < 3:
        raise DerivativeUnavailableError("two-route check needs third derivatives of log W")
    Hj = symbol_jet(H, grid, 2, scheme)
    ljs = [symbol_jet(l, grid, 3, scheme) for l in ells]
    G, divG, _ = _diffusion_from_jets(ljs, hbar, grid.shape)
    dd = DriftDiffusion(_drift_from_jets(Hj, ljs, hbar), G, grid, hbar, divG)
    route2 = reverse_drift(dd, score)
    if order == "full":
        route1 = _route_one(Hj, ljs, score, hbar)
    elif order == "first":
        # route 1 is a cubic polynomial in ℏ; p'(0)·ℏ from four exact samples
        p = [_route_one(Hj, ljs, score, k * hbar) for k in range(4)]
        route1 = p[0] + (-11 * p[0] + 18 * p[1] - 9 * p[2] + 2 * p[3]) / 6
    else:
        raise ValueError("order must be 'first' or 'full'")
    return route1, route2


def two_route_reverse_drift_residual(H, ells, reference: Union[Field, ScoreField, Symbol], hbar: float,
                                     grid: PhaseGrid, order: str = "first",
                                     delta: float = DEFAULT_DELTA, scheme: str = "spectral") -> float:
    """max |route 1 − route 2| over the region W_γ ≥ 10δ·max W_γ."""
    if isinstance(reference, Symbol):
        score = score_from_log_density(reference, grid, delta)
    elif isinstance(reference, Field):
        score = score_field(reference, delta, scheme, order=3)
    else:
        score = reference
    r1, r2 = reverse_drift_routes(H, ells, score, hbar, grid, order, scheme)
    diff = np.abs(r1 - r2)[:, score.region]
    return float(diff.max()) if diff.size else 0.0


# ---------------------------------------------------------------------------
# Moyal-level right-hand sides

def lindblad_wigner_rhs(H, ells, W: Field, hbar: float, order: int = 2, scheme: str = "spectral") -> Field:
    """Moyal form of the Lindblad generator acting on a Wigner function.

    (1/iℏ)(H⋆W − W⋆H) + (1/ℏ)Σ_α[ℓ⋆W⋆ℓ* − ½(ℓ*⋆ℓ⋆W + W⋆ℓ*⋆ℓ)], each star
    product truncated at ``order``.  Nested products are associated so that
    the polynomial factor always multiplies a decaying field, and the
    sandwich term is symmetrized, which keeps the result real.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    grid = W.grid

    def J(x):
        if isinstance(x, np.ndarray):
            return field_jet(x, grid, order, scheme)
        return symbol_jet(x, grid, order, scheme)

    def star(a, b):
        return star_from_jets(a, b, hbar, order)

    Wj = J(W.values)
    Hj = J(H)
    out = (star(Hj, Wj) - star(Wj, Hj)) / (1j * hbar)
    for l in ells:
        lj = J(l)
        lcj = lj.conj()
        lW = star(lj, Wj)
        Wlc = star(Wj, lcj)
        sandwich = 0.5 * (star(J(lW), lcj) + star(lj, J(Wlc)))
        outer = star(lcj, J(lW)) + star(J(Wlc), lj)
        out = out + (sandwich - 0.5 * outer) / hbar
    return Field(np.real(out), grid)


def fp_rhs(drift: np.ndarray, diffusion: np.ndarray, W: Field, scheme: str = "spectral") -> Field:
    """−Σ_μ ∂_μ(f^μ W) + ½ Σ_{μν} ∂_μ ∂_ν (G^{μν} W)."""
    grid = W.grid
    w = np.real(W.values)
    e = ((1, 0), (0, 1))
    out = np.zeros(grid.shape)
    for m in range(2):
        out -= grid_derivative(drift[m] * w, grid, *e[m], scheme=scheme)
    for m in range(2):
        for n in range(2):
            dq = e[m][0] + e[n][0]
            dp = e[m][1] + e[n][1]
            out += 0.5 * grid_derivative(diffusion[m, n] * w, grid, dq, dp, scheme=scheme)
    return Field(out, grid)
