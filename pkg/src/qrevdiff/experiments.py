"""Scenario pipelines, ℏ-sweeps, the correspondence report and run manifests.

Each pipeline returns a :class:`StageResult` holding metrics (value,
threshold, pass flag) and the files it wrote.  :func:`run_scenario` wraps a
pipeline with event collection and writes ``manifest.json``, also on failure.
"""

import csv
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import events
from .config import ScenarioConfig
from .errors import ConfigError, ConstraintError, InsufficientSweepError, QrevError, ThresholdError
from .kinetic import (DistributionField, Ensemble, FPSolution, ReverseDriftSchedule, SdeModel, density_estimate,
                      euler_maruyama, integrate_fp, integrate_reverse_fp, l1_distance, moments, noise_factor,
                      reverse_sde)
from .lindblad import integrate_forward
from .operators import HilbertSpace, expectation
from .petz import recovery_error
from .phase_space import Field, PhaseGrid, save_field, wigner_transform
from .scenarios import (ScenarioModel, gaussian_density, initial_moments, initial_state, lindblad_model,
                        reference_state)
from .semiclassical import (DriftDiffusion, drift_diffusion, fp_rhs, lindblad_wigner_rhs, psd_min_eigenvalue,
                            two_route_reverse_drift_residual)
from .symbols import Symbol

try:
    from importlib.metadata import version as _dist_version
    VERSION = _dist_version("artifact")
except Exception:  # pragma: no cover - running from a source tree
    VERSION = "0.1.0"


@dataclass
class Metric:
    value: float
    threshold: Optional[float]
    passed: bool

    def to_dict(self):
        return {"value": self.value, "threshold": self.threshold, "passed": self.passed}


def _metric(value, threshold) -> Metric:
    return Metric(float(value), threshold, bool(threshold is None or value <= threshold))


@dataclass
class StageResult:
    metrics: Dict[str, Metric] = field(default_factory=dict)
    files: List[Path] = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def merge(self, other: "StageResult") -> "StageResult":
        self.metrics.update(other.metrics)
        self.files.extend(other.files)
        self.data.update(other.data)
        return self

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.metrics.values())


def _write_csv(path: Path, header: Sequence[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


# ---------------------------------------------------------------------------
# shared building blocks

def phase_grid(cfg: ScenarioConfig, hbar: Optional[float] = None) -> PhaseGrid:
    g = cfg["grid"]
    return PhaseGrid((-g["q_extent"], g["q_extent"]), (-g["p_extent"], g["p_extent"]), g["n_q"], g["n_p"],
                     cfg.hbar if hbar is None else hbar)


def _require_quantum(model: ScenarioModel, what: str):
    if not model.quantum:
        raise ConstraintError(f"{what} needs a quantum scenario")


def coefficients(cfg: ScenarioConfig, grid: PhaseGrid, model: Optional[ScenarioModel] = None) -> DriftDiffusion:
    model = cfg.model() if model is None else model
    if model.quantum:
        return drift_diffusion(model.H if model.H is not None else Symbol.const(0.0), model.ells, grid.hbar, grid)
    Qm, Pm = grid.mesh()
    A, D = model.drift_matrix, model.diffusion_matrix
    f = np.stack([A[0, 0] * Qm + A[0, 1] * Pm, A[1, 0] * Qm + A[1, 1] * Pm])
    G = np.broadcast_to(D[:, :, None, None], (2, 2) + grid.shape).copy()
    return DriftDiffusion(f, G, grid, grid.hbar, np.zeros_like(f))


def initial_density(cfg: ScenarioConfig, grid: PhaseGrid) -> DistributionField:
    mean, cov = initial_moments(cfg.physics)
    return DistributionField(gaussian_density(mean, cov, grid), grid)


def checkpoint_times(cfg: ScenarioConfig) -> np.ndarray:
    n, T = cfg["time"]["checkpoints"], cfg["time"]["T"]
    return T * np.arange(1, n + 1) / n


def _stride_for(interval: float, dt: float) -> int:
    s = interval / dt
    k = int(round(s))
    if k < 1 or abs(s - k) > 1e-9 * max(1.0, s):
        raise ConstraintError(f"checkpoint spacing {interval} is not a multiple of dt = {dt}")
    return k


# ---------------------------------------------------------------------------
# pipelines

def forward_lindblad(cfg: ScenarioConfig, out: Optional[Path] = None) -> StageResult:
    """Lindblad run in the position basis with Wigner snapshots at the checkpoints."""
    model = cfg.model()
    _require_quantum(model, "forward-lindblad")
    h = cfg["hilbert"]
    space = HilbertSpace(h["dim"], "position", h["extent"], cfg.physics["mass"], cfg.physics["omega"], cfg.hbar)
    lm = lindblad_model(model, space)
    rho0 = initial_state(cfg.physics, space)
    T, dt = cfg["time"]["T"], cfg["time"]["dt"]
    cps = checkpoint_times(cfg)
    traj = integrate_forward(lm, rho0, 0.0, T, dt, stride=_stride_for(cps[0], dt))
    grid = phase_grid(cfg)
    q, p = space.q(), space.p()
    rows, wigners, imag = [], [], 0.0
    for t, rho in zip(traj.times, traj.states):
        rows.append((t, np.trace(rho).real, expectation(rho, q).real, expectation(rho, p).real,
                     np.real(np.trace(rho @ rho)), np.linalg.eigvalsh(rho)[0]))
        Wc = wigner_transform(rho, space, grid)
        imag = max(imag, Wc.imag_ratio())
        wigners.append(Wc.real())
    trace_drift = max(abs(r[1] - 1.0) for r in rows) / T
    res = StageResult()
    res.metrics["lindblad_trace_drift"] = _metric(trace_drift, cfg["tolerance"]["trace_drift"])
    res.metrics["wigner_imag_ratio"] = _metric(imag, cfg["tolerance"]["wigner_imag"])
    res.data.update(lindblad=traj, wigners=wigners, space=space, grid=grid)
    if out is not None:
        res.files.append(_write_csv(out / "lindblad_observables.csv",
                                    ["t", "trace", "mean_q", "mean_p", "purity", "min_eigenvalue"], rows))
        res.files.extend(save_field(wigners[-1], out / "wigner_final"))
    return res


def fokker_planck(cfg: ScenarioConfig, out: Optional[Path] = None, round_trip: bool = True) -> StageResult:
    """Forward FP to T and, optionally, the reverse FP from round_trip_T back to 0."""
    model = cfg.model()
    grid = phase_grid(cfg)
    dd = coefficients(cfg, grid, model)
    P0 = initial_density(cfg, grid)
    tm = cfg["time"]
    T, dt = tm["T"], tm["fp_dt"]
    sol = integrate_fp(dd.drift, dd.diffusion, P0, dt, T, stride=tm["fp_stride"])
    masses = sol.masses()
    res = StageResult()
    res.metrics["fp_mass_drift"] = _metric(np.max(np.abs(masses - masses[0])) / T, cfg["tolerance"]["mass_drift"])
    res.metrics["psd_min_eigenvalue_neg"] = _metric(max(0.0, -psd_min_eigenvalue(dd.diffusion)), 1e-12)
    res.data.update(fp=sol, coefficients=dd, P0=P0)
    rows = []
    for k, t in enumerate(sol.times):
        mean, cov = moments(sol[k])
        rows.append((t, masses[k], mean[0], mean[1], cov[0, 0], cov[1, 1], cov[0, 1], sol.densities[k].min()))
    if round_trip:
        Tr = tm["round_trip_T"]
        keep = sol.times <= Tr + 1e-12
        ref = FPSolution(sol.times[keep], sol.densities[keep], grid, sol.dt)
        schedule = ReverseDriftSchedule(dd, ref)
        back = integrate_reverse_fp(schedule, dd.diffusion, ref.final, dt, Tr, stride=tm["fp_stride"])
        res.metrics["fp_round_trip_l1"] = _metric(l1_distance(back.final, P0, grid), cfg["tolerance"]["round_trip_l1"])
        res.data.update(schedule=schedule, reverse_fp=back)
        if out is not None:
            res.files.extend(save_field(back.final, out / "reverse_fp_initial"))
    if out is not None:
        res.files.append(_write_csv(out / "fp_moments.csv",
                                    ["t", "mass", "mean_q", "mean_p", "var_q", "var_p", "cov_qp", "min_value"], rows))
        res.files.extend(save_field(sol.final, out / "fp_final"))
    return res


def wigner_vs_fp(cfg: ScenarioConfig, out: Optional[Path] = None) -> StageResult:
    """Relative L2 distance between the Lindblad Wigner function and the FP density at each checkpoint."""
    lind = forward_lindblad(cfg, out)
    fp = fokker_planck(cfg, out)
    sol = fp.data["fp"]
    rows, worst = [], 0.0
    for t, W in zip(lind.data["lindblad"].times[1:], lind.data["wigners"][1:]):
        Pw = DistributionField.from_wigner(W).values
        Pf = sol.at(t)
        err = float(np.linalg.norm(Pw - Pf) / np.linalg.norm(Pf))
        rows.append((t, err))
        worst = max(worst, err)
    res = StageResult().merge(lind).merge(fp)
    res.metrics["wigner_fp_rel_l2"] = _metric(worst, cfg["tolerance"]["wigner_fp_l2"])
    if out is not None:
        res.files.append(_write_csv(out / "wigner_vs_fp.csv", ["t", "relative_l2"], rows))
    return res


def petz_reverse(cfg: ScenarioConfig, out: Optional[Path] = None) -> StageResult:
    """Petz recovery of γ0 (asserted) and of the Gaussian initial state (reported) in the Fock basis."""
    model = cfg.model()
    _require_quantum(model, "petz-reverse")
    pz = cfg["petz"]
    space = HilbertSpace(pz["dim"], "fock", mass=cfg.physics["mass"], omega=cfg.physics["omega"], hbar=cfg.hbar)
    lm = lindblad_model(model, space)
    gamma0 = reference_state(space, cfg.physics, pz["displacement"])
    err = recovery_error(lm, gamma0, gamma0, pz["T"], pz["dt"])
    rho0 = initial_state(cfg.physics, space)
    generic = recovery_error(lm, gamma0, rho0, pz["T"], pz["dt"])
    res = StageResult()
    res.metrics["petz_recovery"] = _metric(err, cfg["tolerance"]["petz"])
    res.metrics["petz_recovery_generic_state"] = _metric(generic, None)
    if out is not None:
        res.files.append(_write_csv(out / "petz_recovery.csv", ["state", "trace_distance"],
                                    [("reference", err), ("gaussian_initial", generic)]))
    return res


def _sde_coefficients(dd: DriftDiffusion):
    grid = dd.grid
    f_int = RegularGridInterpolator((grid.q, grid.p), np.moveaxis(dd.drift, 0, -1), bounds_error=False,
                                    fill_value=None)
    G = dd.diffusion
    if np.all(G == G[:, :, :1, :1]):
        noise = noise_factor(G[:, :, 0, 0])
    else:
        g = np.moveaxis(noise_factor(G), (0, 1), (-2, -1))
        g_int = RegularGridInterpolator((grid.q, grid.p), g, bounds_error=False, fill_value=None)
        noise = lambda x, t: g_int(x)
    return (lambda x, t: f_int(x)), noise


def reverse_sde_pipeline(cfg: ScenarioConfig, out: Optional[Path] = None, fp: Optional[StageResult] = None) -> StageResult:
    """Forward Euler–Maruyama ensemble, then the reverse SDE driven by the FP-reference drift."""
    if fp is None:
        c2 = cfg.with_overrides([f"time.T={cfg['time']['round_trip_T']!r}"])
        fp = fokker_planck(c2, None)
    dd, schedule, P0 = fp.data["coefficients"], fp.data["schedule"], fp.data["P0"]
    grid = dd.grid
    tm, ens_cfg = cfg["time"], cfg["ensemble"]
    mean, cov = initial_moments(cfg.physics)
    chunk = ens_cfg["chunk_size"] or None
    ens = Ensemble.gaussian(mean, cov, ens_cfg["size"], cfg.seed)
    drift, noise = _sde_coefficients(dd)
    Tr = tm["round_trip_T"]
    fwd = euler_maruyama(SdeModel(drift, noise, 2), ens, tm["sde_dt"], Tr, chunk_size=chunk,
                         threads=ens_cfg["threads"])
    back = reverse_sde(schedule.at_points, noise, fwd.final, tm["sde_dt"], Tr, chunk_size=chunk,
                       threads=ens_cfg["threads"])
    l1 = l1_distance(density_estimate(back.final, grid), P0, grid)
    res = StageResult()
    res.metrics["sde_round_trip_l1"] = _metric(l1, cfg["tolerance"]["sde_l1"])
    res.data.update(forward_ensemble=fwd, reverse_ensemble=back)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        fwd.final.to_csv(out / "ensemble_terminal.csv")
        back.final.to_csv(out / "ensemble_recovered.csv")
        res.files += [out / "ensemble_terminal.csv", out / "ensemble_recovered.csv"]
    return res


def sweep_log_density(cfg: ScenarioConfig) -> Symbol:
    s = cfg["sweep"]
    Q, P = Symbol.Q(), Symbol.P()
    dq, dp = Q - s["center_q"], P - s["center_p"]
    return -(dq * dq) / (2 * s["var_q"]) - (dp * dp) / (2 * s["var_p"]) - (Q ** 4) * s["quartic_tilt"]


def _sweep_point(cfg: ScenarioConfig, model: ScenarioModel, phi: Symbol, hbar: float):
    grid = phase_grid(cfg, hbar)
    rho = np.exp(phi.evaluate(grid).real)
    W = Field(2 * np.pi * hbar * rho / (rho.sum() * grid.cell_area), grid)
    dd = drift_diffusion(model.H, model.ells, hbar, grid)
    lw = lindblad_wigner_rhs(model.H, model.ells, W, hbar, order=2)
    fr = fp_rhs(dd.drift, dd.diffusion, W)
    a = float(np.linalg.norm(lw.values - fr.values) / np.linalg.norm(fr.values))
    b = two_route_reverse_drift_residual(model.H, model.ells, phi, hbar, grid, order="full")
    return a, b


def _slope(hs, vals):
    hs, vals = np.asarray(hs, float), np.asarray(vals, float)
    if np.any(vals <= 0):
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(vals), 1)[0])


def hbar_sweep(cfg: ScenarioConfig, hbars: Optional[Sequence[float]] = None, out: Optional[Path] = None) -> StageResult:
    """Residuals (a) Moyal-vs-FP right-hand side and (b) two-route reversed drift across ℏ.

    Each column gets a least-squares log-log slope; a column whose residuals
    all lie below ``[sweep] floor`` is flagged floor-limited instead of
    being compared with the expected slope of 2.
    """
    hbars = list(cfg["sweep"]["hbars"] if hbars is None else hbars)
    if len(hbars) < 3:
        raise InsufficientSweepError(f"an hbar sweep needs at least 3 values, got {len(hbars)}")
    if len(set(hbars)) != len(hbars):
        raise InsufficientSweepError("duplicate hbar values in sweep")
    model = cfg.model()
    _require_quantum(model, "hbar-sweep")
    phi = sweep_log_density(cfg)
    threads = cfg["ensemble"]["threads"]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda h: _sweep_point(cfg, model, phi, h), hbars))
    else:
        results = [_sweep_point(cfg, model, phi, h) for h in hbars]
    floor, tol = cfg["sweep"]["floor"], cfg["tolerance"]["slope"]
    res = StageResult()
    summary = {}
    for idx, name in enumerate(("rhs_residual", "two_route_residual")):
        vals = [r[idx] for r in results]
        limited = max(vals) <= floor
        slope = _slope(hbars, vals)
        summary[name] = {"values": vals, "slope": slope, "floor_limited": limited}
        if limited:
            res.metrics[f"{name}_max"] = _metric(max(vals), floor)
        else:
            res.metrics[f"{name}_slope_error"] = _metric(abs(slope - 2.0) if np.isfinite(slope) else np.inf, tol)
    res.data["sweep"] = summary
    res.data["hbars"] = hbars
    if out is not None:
        for k, (h, r) in enumerate(zip(hbars, results)):
            res.files.append(_write_csv(out / f"hbar_{k:02d}" / "residuals.csv",
                                        ["hbar", "rhs_residual", "two_route_residual"], [(h, r[0], r[1])]))
        rows = [(h, r[0], r[1]) for h, r in zip(hbars, results)]
        res.files.append(_write_csv(out / "hbar_sweep.csv", ["hbar", "rhs_residual", "two_route_residual"], rows))
        res.files.append(_write_csv(out / "hbar_sweep_slopes.csv", ["residual", "slope", "floor_limited"],
                                    [(n, s["slope"], str(s["floor_limited"]).lower()) for n, s in summary.items()]))
    return res


REPORT_ROWS = (
    ("forward-reduction", "wigner_fp_rel_l2"),
    ("petz-reversal", "petz_recovery"),
    ("bayes-reversal", "fp_round_trip_l1"),
    ("reduced-reversal", "two_route_residual"),
)


def correspondence_report(cfg: ScenarioConfig, out: Optional[Path] = None) -> StageResult:
    """All four arrows on one scenario: reduction, Petz reversal, Bayes reversal, reduced reversal."""
    model = cfg.model()
    res = StageResult()
    if model.quantum:
        res.merge(wigner_vs_fp(cfg, out))
        res.merge(petz_reverse(cfg, out))
        sol = res.data["fp"]
        grid = sol.grid
        k = int(np.argmin(np.abs(sol.times - cfg["time"]["round_trip_T"])))
        ref = Field(sol.densities[k], grid)
        H = model.H if model.H is not None else Symbol.const(0.0)
        r = two_route_reverse_drift_residual(H, model.ells, ref, cfg.hbar, grid, order="first")
        res.metrics["two_route_residual"] = _metric(r, cfg["tolerance"]["two_route"])
        res.data["diffusion_max"] = float(np.max(np.abs(res.data["coefficients"].diffusion)))
    else:
        res.merge(fokker_planck(cfg, out))
    rows = []
    for arrow, key in REPORT_ROWS:
        m = res.metrics.get(key)
        if m is None:
            rows.append((arrow, key, "", "", "skipped"))
        else:
            rows.append((arrow, key, m.value, m.threshold, "pass" if m.passed else "fail"))
    res.data["report_rows"] = rows
    if out is not None:
        res.files.append(_write_csv(out / "correspondence_report.csv",
                                    ["arrow", "metric", "value", "threshold", "status"], rows))
    return res


PIPELINES = {
    "forward-lindblad": forward_lindblad,
    "petz-reverse": petz_reverse,
    "fokker-planck": fokker_planck,
    "reverse-sde": reverse_sde_pipeline,
    "hbar-sweep": hbar_sweep,
    "correspondence-report": correspondence_report,
}


# ---------------------------------------------------------------------------
# manifests

def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    command: str
    config: Optional[dict]
    defaults_filled: List[str]
    version: str
    seeds: dict
    started: str
    finished: str = ""
    files: List[dict] = field(default_factory=list)
    events: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    status: str = "ok"
    error: Optional[dict] = None
    elapsed_seconds: float = 0.0

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def write(self, out: Path) -> Path:
        out.mkdir(parents=True, exist_ok=True)
        path = out / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable) + "\n")
        return path

    @property
    def digests(self) -> Dict[str, str]:
        return {f["path"]: f["sha256"] for f in self.files}


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_THRESHOLD = 0, 1, 2, 3, 4


def failure_manifest(command: str, out: Path, exc: BaseException, cfg: Optional[ScenarioConfig] = None) -> RunManifest:
    m = RunManifest(command, cfg.to_dict() if cfg else None, cfg.defaults_filled if cfg else [], VERSION,
                    {"ensemble": cfg.seed} if cfg else {}, _now(), _now(), status="config-error",
                    error={"type": type(exc).__name__, "code": getattr(exc, "code", None), "message": str(exc)})
    m.write(out)
    return m


def run_scenario(cfg: ScenarioConfig, command: str = "correspondence-report", out=None) -> RunManifest:
    """Run one pipeline, write its outputs and a manifest; never raises for pipeline failures.

    The manifest ``status`` is ``ok``, ``threshold`` (a metric missed its
    threshold), ``numerical`` (a library error), ``config-error`` or
    ``internal-error`` (an unexpected exception, recorded rather than raised).
    """
    if command not in PIPELINES:
        raise ValueError(f"unknown command {command!r}")
    out = Path(cfg["output"]["dir"] if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command, cfg.to_dict(), list(cfg.defaults_filled), VERSION,
                           {"ensemble": cfg.seed}, _now())
    t0 = time.perf_counter()
    with events.collect() as counts:
        try:
            result = PIPELINES[command](cfg, out=out)
        except ConfigError as exc:
            manifest.status = "config-error"
            manifest.error = {"type": type(exc).__name__, "code": exc.code, "message": str(exc)}
            result = None
        except (QrevError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            manifest.status = "numerical"
            manifest.error = {"type": type(exc).__name__, "code": getattr(exc, "code", "numerical"),
                              "message": str(exc)}
            result = None
        except Exception as exc:
            manifest.status = "internal-error"
            manifest.error = {"type": type(exc).__name__, "code": "internal", "message": str(exc)}
            result = None
    manifest.events = dict(sorted(counts.items()))
    manifest.elapsed_seconds = time.perf_counter() - t0
    manifest.finished = _now()
    if result is not None:
        manifest.metrics = {k: m.to_dict() for k, m in sorted(result.metrics.items())}
        seen = set()
        for p in result.files:
            p = Path(p)
            if p in seen:
                continue
            seen.add(p)
            manifest.files.append({"path": str(p.relative_to(out)), "sha256": sha256_file(p)})
        manifest.files.sort(key=lambda f: f["path"])
        if not result.passed:
            manifest.status = "threshold"
        manifest._result = result
    manifest.write(out)
    return manifest


def exit_code(manifest: RunManifest) -> int:
    return {"ok": EXIT_OK, "config-error": EXIT_CONFIG, "numerical": EXIT_NUMERICAL,
            "threshold": EXIT_THRESHOLD, "internal-error": EXIT_INTERNAL}[manifest.status]
