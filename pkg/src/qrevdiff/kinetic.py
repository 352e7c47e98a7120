"""Fokker–Planck solvers, Langevin ensembles and the Monte-Carlo Bayes check.

Densities here use the classical normalization ∫ P dQ dP = 1 (a Wigner
function W corresponds to P = W / (2πℏ)).  Reverse-time solvers always step
in the increasing variable s = T − t and take the reversed drift f̄ in the
sign convention of :func:`qrevdiff.semiclassical.reverse_drift`, i.e. they
integrate ∂_s P̄ = −∂_μ(f̄^μ P̄) + ½ ∂_μ∂_ν(G^{μν} P̄).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import expm
from scipy.special import ndtri

from . import events
from .errors import DivergenceError, NumericalError, PSDViolationError, SamplingError, StepSizeError
from .lindblad import rk4_integrate, step_count
from .phase_space import Field, PhaseGrid, _fd4_first
from .semiclassical import DEFAULT_DELTA, DriftDiffusion, reverse_drift, score_field


class DistributionField(Field):
    """Classically normalized density on a phase-space grid."""

    @classmethod
    def from_wigner(cls, W: Field) -> "DistributionField":
        return cls(np.real(W.values) / (2 * np.pi * W.grid.hbar), W.grid)

    @property
    def mass(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_area)

    def normalized(self) -> "DistributionField":
        return DistributionField(self.values / self.mass, self.grid)


def l1_distance(a, b, grid: PhaseGrid) -> float:
    av = a.values if isinstance(a, Field) else a
    bv = b.values if isinstance(b, Field) else b
    return float(np.sum(np.abs(av - bv)) * grid.cell_area)


def moments(P: Field):
    """Mean vector and covariance matrix of a gridded density."""
    Qm, Pm = P.grid.mesh()
    w = P.values * P.grid.cell_area
    m = w.sum()
    mean = np.array([(Qm * w).sum(), (Pm * w).sum()]) / m
    dq, dp = Qm - mean[0], Pm - mean[1]
    cov = np.array([[(dq * dq * w).sum(), (dq * dp * w).sum()],
                    [(dq * dp * w).sum(), (dp * dp * w).sum()]]) / m
    return mean, cov


# ---------------------------------------------------------------------------
# method-of-lines Fokker–Planck operator

def _faces_value(u, axis):
    """Fourth-order face values u_{i+1/2}, i = 0..n-2, using mirrored ghosts."""
    u = np.moveaxis(u, axis, 0)
    up = np.concatenate([u[1:2], u, u[-2:-1]], axis=0)   # mirrored ghosts
    F = (-up[:-3] + 7 * up[1:-2] + 7 * up[2:-1] - up[3:]) / 12.0
    return np.moveaxis(F, 0, axis)


def _faces_gradient(u, h, axis):
    u = np.moveaxis(u, axis, 0)
    up = np.concatenate([u[1:2], u, u[-2:-1]], axis=0)
    F = (up[:-3] - 15 * up[1:-2] + 15 * up[2:-1] - up[3:]) / (12.0 * h)
    return np.moveaxis(F, 0, axis)


def _divergence(F, h, axis):
    """(F_{i+1/2} − F_{i−1/2})/h with zero flux through both boundary faces."""
    F = np.moveaxis(F, axis, 0)
    z = np.zeros_like(F[:1])
    Ff = np.concatenate([z, F, z], axis=0)
    return np.moveaxis((Ff[1:] - Ff[:-1]) / h, 0, axis)


def fp_operator(P, drift, diffusion, grid: PhaseGrid):
    """Conservative discretization of −∂_μ(f^μ P) + ½ ∂_μ∂_ν(G^{μν} P)."""
    h = (grid.dq, grid.dp)
    out = np.zeros_like(P)
    for m in range(2):
        out -= _divergence(_faces_value(drift[m] * P, m), h[m], m)
    if diffusion is not None:
        for m in range(2):
            g = diffusion[m, m]
            if np.any(g):
                out += 0.5 * _divergence(_faces_gradient(g * P, h[m], m), h[m], m)
        g = diffusion[0, 1]
        if np.any(g):
            inner = _fd4_first(g * P, h[1], 1)
            out += _divergence(_faces_value(inner, 0), h[0], 0)
    return out


def cfl_limit(drift, diffusion, grid: PhaseGrid) -> float:
    """Largest admissible dt: 0.5·min(Δx²/max‖G‖, Δx/max‖f‖)."""
    dx = min(grid.dq, grid.dp)
    fmax = float(np.sqrt(np.max(drift[0] ** 2 + drift[1] ** 2)))
    if diffusion is None:
        gmax = 0.0
    else:
        mats = np.moveaxis(np.asarray(diffusion), (0, 1), (-2, -1))
        gmax = float(np.max(np.abs(np.linalg.eigvalsh(mats))))
    lims = [np.inf]
    if gmax > 0:
        lims.append(dx * dx / gmax)
    if fmax > 0:
        lims.append(dx / fmax)
    return 0.5 * min(lims)


@dataclass
class FPSolution:
    times: np.ndarray
    densities: np.ndarray
    grid: PhaseGrid
    dt: float

    def __len__(self):
        return len(self.times)

    def __getitem__(self, k) -> DistributionField:
        return DistributionField(self.densities[k], self.grid)

    @property
    def final(self) -> DistributionField:
        return self[-1]

    def masses(self) -> np.ndarray:
        return self.densities.sum(axis=(1, 2)) * self.grid.cell_area

    def at(self, t: float) -> np.ndarray:
        """Density at time ``t`` by linear interpolation between snapshots."""
        ts = self.times
        if ts[0] > ts[-1]:
            ts = ts[::-1]
            dens = self.densities[::-1]
        else:
            dens = self.densities
        if t <= ts[0]:
            return dens[0]
        if t >= ts[-1]:
            return dens[-1]
        k = int(np.searchsorted(ts, t) - 1)
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        return (1 - w) * dens[k] + w * dens[k + 1]


DriftLike = Union[np.ndarray, Callable[[float], np.ndarray]]


def _solve_fp(drift_of, diffusion, P0: np.ndarray, grid: PhaseGrid, dt, duration, stride,
              check_cfl, negative_mass_tol):
    f0 = drift_of(0.0)
    G = None if diffusion is None else np.asarray(diffusion, dtype=float)
    if check_cfl:
        lim = cfl_limit(f0, G, grid)
        if dt > lim * (1 + 1e-12):
            raise StepSizeError(f"dt={dt:.3g} exceeds the stability bound {lim:.3g}")

    def rhs(s, P):
        return fp_operator(P, drift_of(s), G, grid)

    def monitor(k, s, P):
        neg = float(np.sum(np.minimum(P, 0.0)) * grid.cell_area)
        if not np.all(np.isfinite(P)) or neg < -negative_mass_tol:
            raise NumericalError(f"Fokker-Planck solution unstable at step {k} (negative mass {neg:.3e})")

    return rk4_integrate(rhs, np.asarray(P0, dtype=float), 0.0, duration, dt, stride, monitor=monitor)


def integrate_fp(drift: DriftLike, diffusion, P0: Field, dt: float, T: float, stride: int = 1,
                 t0: float = 0.0, check_cfl: bool = True, negative_mass_tol: float = 1e-6) -> FPSolution:
    """Forward Fokker–Planck equation with zero-flux boundaries and RK4 in time.

    ``drift`` is an array of shape (2, n_q, n_p) or a callable of time
    returning one; ``diffusion`` has shape (2, 2, n_q, n_p) (or None).
    """
    drift_of = (lambda s: drift(t0 + s)) if callable(drift) else (lambda s: drift)
    s, dens, h = _solve_fp(drift_of, diffusion, P0.values, P0.grid, dt, T, stride, check_cfl, negative_mass_tol)
    return FPSolution(t0 + s, dens, P0.grid, h)


def integrate_reverse_fp(reverse_drift_: DriftLike, diffusion, P_T: Field, dt: float, T: float,
                         t0: float = 0.0, stride: int = 1, check_cfl: bool = True,
                         negative_mass_tol: float = 1e-6) -> FPSolution:
    """Reverse-time equation from physical time T down to t0; times are returned decreasing."""
    drift_of = (lambda s: reverse_drift_(T - s)) if callable(reverse_drift_) else (lambda s: reverse_drift_)
    s, dens, h = _solve_fp(drift_of, diffusion, P_T.values, P_T.grid, dt, T - t0, stride,
                           check_cfl, negative_mass_tol)
    return FPSolution(T - s, dens, P_T.grid, h)


class ReverseDriftSchedule:
    """f̄(t) built from stored reference densities, linear in t between snapshots.

    Each snapshot's reversed drift is evaluated once, using the score of the
    reference density floored at δ·max.
    """

    def __init__(self, dd: DriftDiffusion, reference: FPSolution, delta: float = DEFAULT_DELTA,
                 scheme: str = "spectral"):
        order = np.argsort(reference.times)
        self.times = reference.times[order]
        self.grid = reference.grid
        self.fields = np.stack([
            reverse_drift(dd, score_field(Field(reference.densities[k], reference.grid), delta, scheme, order=1))
            for k in order
        ])

    def __call__(self, t: float) -> np.ndarray:
        ts = self.times
        if t <= ts[0]:
            return self.fields[0]
        if t >= ts[-1]:
            return self.fields[-1]
        k = int(np.searchsorted(ts, t) - 1)
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        return (1 - w) * self.fields[k] + w * self.fields[k + 1]

    def at_points(self, x: np.ndarray, t: float) -> np.ndarray:
        """Bilinear interpolation of f̄(t) at particle positions ``x`` (M, 2)."""
        vals = np.moveaxis(self(t), 0, -1)
        interp = RegularGridInterpolator((self.grid.q, self.grid.p), vals, bounds_error=False, fill_value=None)
        return interp(x)


# ---------------------------------------------------------------------------
# noise factors and ensembles

def noise_factor(G: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Pointwise symmetric PSD square root g with g gᵀ = G.

    Works on arrays shaped (n, n, ...) or a single (n, n) matrix.
    """
    G = np.asarray(G, dtype=float)
    mats = np.moveaxis(G, (0, 1), (-2, -1))
    w, V = np.linalg.eigh(mats)
    scale = max(float(np.max(np.abs(w), initial=0.0)), 1e-300)
    if np.min(w, initial=0.0) < -rtol * scale:
        raise PSDViolationError(f"diffusion matrix has eigenvalue {np.min(w):.3e}")
    n_clamped = int(np.count_nonzero(w < 0))
    events.record("psd_clamp", n_clamped)
    r = np.sqrt(np.maximum(w, 0.0))
    g = (V * r[..., None, :]) @ np.swapaxes(V, -1, -2)
    return np.moveaxis(g, (-2, -1), (0, 1))


@dataclass
class Ensemble:
    x: np.ndarray          # (M, n)
    seed: int
    t: float = 0.0

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if self.x.shape[0] < 1:
            raise ValueError("ensemble needs at least one particle")
        if not np.all(np.isfinite(self.x)):
            raise DivergenceError("ensemble has non-finite coordinates")

    @property
    def size(self) -> int:
        return self.x.shape[0]

    @classmethod
    def gaussian(cls, mean, cov, M: int, seed: int, t: float = 0.0) -> "Ensemble":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        chol = np.linalg.cholesky(np.atleast_2d(cov))
        z = standard_normals(seed, 0, 0, M, len(mean), stream=2)
        return cls(mean + z @ chol.T, seed, t)

    def to_csv(self, path) -> None:
        header = "particle," + ",".join(["Q", "P"] if self.x.shape[1] == 2 else
                                        [f"x{k}" for k in range(self.x.shape[1])])
        data = np.column_stack([np.arange(self.size), self.x])
        fmt = ["%d"] + ["%.17g"] * self.x.shape[1]
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt=fmt)


def standard_normals(seed: int, step: int, start: int, count: int, dim: int, stream: int = 0) -> np.ndarray:
    """Counter-based standard normals for particles ``start .. start+count-1`` at ``step``.

    Philox is keyed by ``seed`` with counter (block, 0, step, stream); each
    (particle, component) consumes one 64-bit draw, so any split of the
    particle range reproduces the same numbers.
    """
    offset = start * dim
    n = count * dim
    bg = np.random.Philox(key=int(seed), counter=[offset // 4, 0, int(step), int(stream)])
    raw = bg.random_raw(offset % 4 + n)[offset % 4:]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u).reshape(count, dim)


@dataclass
class SdeModel:
    """dx = f(x, t) dt + g(x, t) dW with G = g gᵀ.

    ``noise`` is a constant (n, n) matrix or a callable returning (M, n, n).
    """

    drift: Callable[[np.ndarray, float], np.ndarray]
    noise: Union[np.ndarray, Callable[[np.ndarray, float], np.ndarray]]
    dim: int
    diffusion_divergence: Optional[Callable[[np.ndarray, float], np.ndarray]] = None

    def noise_at(self, x, t):
        if callable(self.noise):
            return self.noise(x, t)
        return np.asarray(self.noise, dtype=float)

    def diffusion_at(self, x, t):
        g = self.noise_at(x, t)
        return g @ np.swapaxes(g, -1, -2)


@dataclass
class EnsembleTrajectory:
    times: np.ndarray
    states: np.ndarray          # (n_store, M, n)
    seed: int
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def __getitem__(self, k) -> Ensemble:
        return Ensemble(self.states[k], self.seed, float(self.times[k]))

    @property
    def final(self) -> Ensemble:
        return self[-1]


def _em_chunk(model, x, t, dt, seed, step, start, stream):
    xi = standard_normals(seed, step, start, x.shape[0], x.shape[1], stream)
    g = model.noise_at(x, t)
    if g.ndim == 2:
        kick = xi @ g.T
    else:
        kick = np.einsum("mij,mj->mi", g, xi)
    return x + model.drift(x, t) * dt + kick * np.sqrt(dt)


def euler_maruyama(model: SdeModel, init: Ensemble, dt: float, T: float, stride: Optional[int] = None,
                   seed: Optional[int] = None, stream: int = 0, chunk_size: Optional[int] = None,
                   threads: int = 1, _time_map=None) -> EnsembleTrajectory:
    """Euler–Maruyama from ``init.t`` to ``init.t + T``.

    Noise is drawn per (particle, step) from counter-based streams, so the
    output is identical for any ``chunk_size`` and ``threads``.
    """
    seed = init.seed if seed is None else seed
    n = step_count(0.0, T, dt)
    h = T / n if n else dt
    stride = n if stride is None else stride
    x = init.x.copy()
    M = x.shape[0]
    chunk = M if chunk_size is None else max(1, int(chunk_size))
    starts = list(range(0, M, chunk))
    pool = ThreadPoolExecutor(threads) if threads > 1 and len(starts) > 1 else None
    times, states = [init.t], [x.copy()]
    try:
        for k in range(1, n + 1):
            t = init.t + (k - 1) * h
            tm = t if _time_map is None else _time_map(t)

            def work(s0):
                return _em_chunk(model, x[s0: s0 + chunk], tm, h, seed, k, s0, stream)

            parts = list(pool.map(work, starts)) if pool else [work(s0) for s0 in starts]
            x = np.concatenate(parts, axis=0) if len(parts) > 1 else parts[0]
            bad = ~np.all(np.isfinite(x), axis=1)
            if np.any(bad):
                idx = int(np.argmax(bad))
                raise DivergenceError(f"particle {idx} became non-finite at step {k}")
            if k % stride == 0 or k == n:
                times.append(init.t + k * h)
                states.append(x.copy())
    finally:
        if pool:
            pool.shutdown()
    return EnsembleTrajectory(np.array(times), np.array(states), seed, {"dt": h})


def reverse_sde(reverse_drift_: Callable[[np.ndarray, float], np.ndarray], noise, terminal: Ensemble,
                dt: float, T: float, t0: float = 0.0, seed: Optional[int] = None, stride: Optional[int] = None,
                stream: int = 1, chunk_size: Optional[int] = None, threads: int = 1) -> EnsembleTrajectory:
    """Euler–Maruyama for dx = f̄(x, T − s) ds + g dW in s ∈ [0, T − t0].

    ``reverse_drift_(x, t)`` takes physical time; ``noise`` is a constant
    matrix or ``noise(x, t)``.  Returned times are physical and decreasing.
    """
    if callable(noise):
        noise_s = lambda x, s: noise(x, T - s)
    else:
        noise_s = noise
    model = SdeModel(lambda x, s: reverse_drift_(x, T - s), noise_s, terminal.x.shape[1])
    start = Ensemble(terminal.x, terminal.seed if seed is None else seed, 0.0)
    traj = euler_maruyama(model, start, dt, T - t0, stride=stride, seed=seed, stream=stream,
                          chunk_size=chunk_size, threads=threads)
    traj.times = T - traj.times
    return traj


def density_estimate(ens: Ensemble, grid: PhaseGrid, bandwidth="auto", chunk: int = 20000) -> DistributionField:
    """Separable Gaussian kernel density on the grid, renormalized to unit mass."""
    x = np.asarray(ens.x, dtype=float)
    if x.shape[0] == 0:
        raise SamplingError("empty ensemble")
    if x.shape[1] != 2:
        raise ValueError("density_estimate expects (Q, P) particles")
    M = x.shape[0]
    if isinstance(bandwidth, str):
        if bandwidth != "auto":
            raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
        bw = M ** (-1.0 / 6.0) * x.std(axis=0)
        fallback = np.array([2 * grid.dq, 2 * grid.dp])
        bw = np.where(bw > 0, bw, fallback)
    else:
        bw = np.broadcast_to(np.asarray(bandwidth, dtype=float), (2,))
        if np.any(bw <= 0):
            raise ValueError("bandwidth must be positive")
    out = np.zeros(grid.shape)
    q, p = grid.q, grid.p
    for s in range(0, M, chunk):
        xs = x[s: s + chunk]
        Kq = np.exp(-0.5 * ((xs[:, 0:1] - q[None, :]) / bw[0]) ** 2)
        Kp = np.exp(-0.5 * ((xs[:, 1:2] - p[None, :]) / bw[1]) ** 2)
        out += Kq.T @ Kp
    mass = out.sum() * grid.cell_area
    if mass <= 0:
        raise SamplingError("ensemble lies entirely outside the grid")
    return DistributionField(out / mass, grid)


# ---------------------------------------------------------------------------
# linear (Ornstein–Uhlenbeck) helpers and the Bayes check

def linear_gaussian_marginal(A, G, mean0, cov0, t: float):
    """Mean and covariance at time t of dx = A x dt + g dW (G = g gᵀ)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    n = A.shape[0]
    E = expm(A * t)
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = -A
    block[:n, n:] = G
    block[n:, n:] = A.T
    F = expm(block * t)
    integral = F[n:, n:].T @ F[:n, n:]       # ∫_0^t e^{As} G e^{Aᵀs} ds
    mean = E @ np.atleast_1d(mean0)
    cov = E @ np.atleast_2d(cov0) @ E.T + integral
    return mean, cov


def gaussian_score(mean_cov: Callable[[float], tuple]):
    """Score ∇ log N(m(t), Σ(t)) as a function (x, t) → (M, n)."""
    def score(x, t):
        m, C = mean_cov(t)
        return -np.linalg.solve(C, (x - m).T).T
    return score


@dataclass
class BayesReport:
    max_violation: float
    reported_bins: int
    forward_counts: np.ndarray
    reverse_counts: np.ndarray
    t_edges: np.ndarray
    s_edges: np.ndarray
    transitions: int


def _quantile_bins(v, nbins):
    edges = np.quantile(v, np.linspace(0, 1, nbins + 1))
    edges[0], edges[-1] = -np.inf, np.inf
    return edges


def bayes_transition_check(model: SdeModel, init: Ensemble, score: Callable[[np.ndarray, float], np.ndarray],
                           bins: int = 8, dt: float = 1e-3, horizon: float = 0.5, min_transitions: int = 10**6,
                           min_count: int = 100, chunk_size: Optional[int] = None,
                           threads: int = 1) -> BayesReport:
    """Binned Monte-Carlo test of P(x_t|x_s)P(x_s) = P(x_s|x_t)P(x_t) for a 1-D model.

    Forward pairs (x_t, x_s) come from Euler–Maruyama started at ``init``.
    Reverse pairs start from the forward endpoints x_s and run the reverse
    SDE with drift f̄ = −f + ∂G + G ∂log P, where ``score(x, t)`` supplies
    ∂ log P.  Both joint histograms over equal-probability bins must agree;
    the largest relative disagreement over bins with ≥ ``min_count`` forward
    entries is reported.
    """
    M = init.size
    if M < min_transitions:
        raise SamplingError(f"{M} transitions requested; at least {min_transitions} are required")
    if model.dim != 1:
        raise ValueError("bayes_transition_check bins a one-dimensional state")
    t0 = init.t
    fwd = euler_maruyama(model, init, dt, horizon, chunk_size=chunk_size, threads=threads, stream=0)
    xs = fwd.final.x

    def rev_drift(x, t):
        G = model.diffusion_at(x, t)
        G = np.broadcast_to(G, (x.shape[0],) + G.shape[-2:]) if G.ndim == 2 else G
        out = -model.drift(x, t) + np.einsum("mij,mj->mi", G, score(x, t))
        if model.diffusion_divergence is not None:
            out = out + model.diffusion_divergence(x, t)
        return out

    noise = model.noise if not callable(model.noise) else model.noise
    rev = reverse_sde(rev_drift, noise, Ensemble(xs, init.seed, t0 + horizon), dt, t0 + horizon, t0,
                      seed=init.seed, stream=1, chunk_size=chunk_size, threads=threads)
    xt_fwd = init.x[:, 0]
    xt_rev = rev.final.x[:, 0]
    t_edges = _quantile_bins(xt_fwd, bins)
    s_edges = _quantile_bins(xs[:, 0], bins)
    Nf, _, _ = np.histogram2d(xt_fwd, xs[:, 0], bins=[t_edges, s_edges])
    Nr, _, _ = np.histogram2d(xt_rev, xs[:, 0], bins=[t_edges, s_edges])
    ok = Nf >= min_count
    if not np.any(ok):
        raise SamplingError("no bin reached the minimum count")
    viol = np.abs(Nf[ok] - Nr[ok]) / Nf[ok]
    return BayesReport(float(viol.max()), int(ok.sum()), Nf, Nr, t_edges, s_edges, M)
