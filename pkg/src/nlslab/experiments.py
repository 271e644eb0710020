"""Experiment configuration, scenario runners, log-log fits and CSV output."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from . import dynamics as dyn
from .dynamics import LEDGER_COLUMNS, EnergyLedger, SolverConfig, evolve, format_float
from .ground_state import dist_hs, eval_Q
from .modulation import DecompositionError, decompose, track_modulation
from .multilinear import filter_bound_scan, scan_rows_csv
from .spectral import ConfigurationError, Field, GridSpec, NumericalError, hs_weights

log = logging.getLogger(__name__)

SCENARIOS = ("simulate", "growth_scan", "conservation_scan", "orbital", "symbol_scan", "decompose")
FIT_COLUMNS = ("quantity", "slope", "intercept", "residual", "n_points", "range_lo", "range_hi")


# --- configuration -----------------------------------------------------------

@dataclass
class GridSection:
    num_modes: int = 2048
    box_length: float = 40.0 * math.pi


@dataclass
class SolverSection:
    dt: float = 5e-4
    t_end: float = 10.0
    sign: str = "focusing"
    dealias: bool = True
    record_stride: int = 100


@dataclass
class SimulateSection:
    initial: str = "soliton"  # soliton | galilean | plane_wave | rough | perturbed
    eps: float = 0.05
    amplitude: float = 1.0
    k: int = 1
    norm: float = 1.0
    sigma: float = 0.01
    track_distance: bool = False
    track_modulation: bool = False
    save_field: str = ""


@dataclass
class GrowthSection:
    data: str = "rough"  # rough | soliton
    norm: float = 1.0
    t_fit_min: float = 1.0
    margin: float = 0.2


@dataclass
class ConservationSection:
    data: str = "rough"  # rough | bandlimited
    kmax: int = 0
    norm: float = 1.0
    delta: float = 0.1
    kinds: List[str] = field(default_factory=lambda: ["D", "I"])
    slope_D: float = -0.4
    slope_I: float = -0.8
    roundoff_floor: float = 1e-13
    drift_factor: float = 2.0
    samples_per_window: int = 50
    sigma_sweep: bool = True
    sigmas: List[float] = field(default_factory=lambda: [1e-3, 3e-3, 1e-2, 3e-2])
    sigma_N: float = 32.0
    sigma_num_modes: int = 4096
    sigma_box_length: float = 80.0
    sigma_dt: float = 2e-5
    sigma_exponent: float = 2.0
    sigma_tol: float = 0.3


@dataclass
class OrbitalSection:
    data: str = "perturbed"  # perturbed | galilean
    sigmas: List[float] = field(default_factory=lambda: [1e-3, 3e-3, 1e-2])
    eps: float = 0.05
    t_start: float = 1.0
    t_probe: float = 5.0
    drift_margin: float = 0.3
    sigma_tol: float = 0.2
    track_modulation: bool = False


@dataclass
class SymbolSection:
    s_values: List[float] = field(default_factory=lambda: [0.25, 0.5, 0.75])
    N: float = 8.0
    n_sop: List[float] = field(default_factory=lambda: [2.0**j for j in range(3, 11)])
    stable_n_sop: List[float] = field(default_factory=lambda: [64.0, 128.0, 256.0, 512.0])
    samples: int = 1_000_000
    floor: float = 1e-3
    stability_factor: float = 2.0


@dataclass
class DecomposeSection:
    field_path: str = ""
    initial: str = "perturbed"  # used when field_path is empty
    sigma: float = 0.01


@dataclass
class ExperimentConfig:
    scenario: str = "simulate"
    seed: int = 0
    out: str = "runs"
    workers: int = 1
    s: float = 0.5
    N: List[float] = field(default_factory=lambda: [8.0, 16.0, 32.0, 64.0, 128.0])
    grid: GridSection = field(default_factory=GridSection)
    solver: SolverSection = field(default_factory=SolverSection)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    growth_scan: GrowthSection = field(default_factory=GrowthSection)
    conservation_scan: ConservationSection = field(default_factory=ConservationSection)
    orbital: OrbitalSection = field(default_factory=OrbitalSection)
    symbol_scan: SymbolSection = field(default_factory=SymbolSection)
    decompose: DecomposeSection = field(default_factory=DecomposeSection)

    # -- construction and serialization --

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        return _build(cls, data or {}, "config")

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"config is not valid YAML: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigurationError("config must be a mapping")
        return cls.from_dict(data or {})

    def with_overrides(self, overrides: Sequence[str]) -> "ExperimentConfig":
        data = self.to_dict()
        for item in overrides:
            if "=" not in item:
                raise ConfigurationError(f"override {item!r} is not key=value")
            key, raw = item.split("=", 1)
            parts = key.strip().split(".")
            node = data
            for p in parts[:-1]:
                if p not in node or not isinstance(node[p], dict):
                    raise ConfigurationError(f"unknown config section {key!r}")
                node = node[p]
            if parts[-1] not in node:
                raise ConfigurationError(f"unknown config key {key!r}")
            node[parts[-1]] = yaml.safe_load(raw)
        return ExperimentConfig.from_dict(data)

    # -- validation --

    def grid_spec(self) -> GridSpec:
        return GridSpec(int(self.grid.num_modes), float(self.grid.box_length))

    def solver_config(self, **changes) -> SolverConfig:
        kw = dataclasses.asdict(self.solver)
        kw.update(changes)
        return SolverConfig(**kw)

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}")
        if not (0.0 <= self.s < 1.0):
            raise ConfigurationError(f"s must lie in [0, 1), got {self.s}")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if not self.N:
            raise ConfigurationError("N list is empty")
        grid = self.grid_spec()
        if self.scenario != "symbol_scan":
            for n in self.N:
                if not n >= 1:
                    raise ConfigurationError(f"N must be >= 1, got {n}")
                if n > grid.xi_max / 2:
                    raise ConfigurationError(
                        f"N={n} exceeds half the resolved frequency range ({grid.xi_max / 2:.4g})"
                    )
        cfg = self.solver_config()
        if self.scenario in ("simulate", "growth_scan", "conservation_scan", "orbital"):
            cfg.check_resolution(grid)
        if self.scenario == "conservation_scan":
            c = self.conservation_scan
            bad = set(c.kinds) - {"D", "I"}
            if bad:
                raise ConfigurationError(f"unknown energy kinds {sorted(bad)}")
            if c.delta <= 0:
                raise ConfigurationError("delta must be positive")
            if c.sigma_sweep:
                g2 = GridSpec(int(c.sigma_num_modes), float(c.sigma_box_length))
                if c.sigma_N > g2.xi_max / 2:
                    raise ConfigurationError("sigma_N exceeds half the sigma-grid frequency range")
                SolverConfig(dt=c.sigma_dt).check_resolution(g2)
                eval_Q(g2)
        if self.scenario == "orbital":
            eval_Q(grid)
            if len(self.orbital.sigmas) < 2 and self.orbital.data == "perturbed":
                raise ConfigurationError("orbital needs at least two sigmas for the scaling fit")
        if self.scenario == "symbol_scan":
            for sv in self.symbol_scan.s_values:
                if not (0.0 <= sv < 1.0):
                    raise ConfigurationError(f"symbol_scan s value {sv} outside [0, 1)")


def _build(cls, data: Dict[str, Any], where: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where} must be a mapping")
    fields_ = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields_)
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {sorted(unknown)}")
    kwargs = {}
    defaults = cls()
    for name, f in fields_.items():
        if name not in data:
            continue
        value = data[name]
        default = getattr(defaults, name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        else:
            kwargs[name] = _coerce(value, default, f"{where}.{name}")
    return cls(**kwargs)


def _coerce(value, default, where):
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, str):
            if not isinstance(value, str):
                raise TypeError
            return value
        if isinstance(default, list):
            if not isinstance(value, list):
                value = [value]
            if default and isinstance(default[0], float):
                return [float(v) for v in value]
            if default and isinstance(default[0], str):
                return [str(v) for v in value]
            return list(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"bad value for {where}: {value!r}") from None
    return value


def load_config(path: Optional[str]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file {path} does not exist")
    return ExperimentConfig.from_yaml(p.read_text())


# --- fits ----------------------------------------------------------------------

@dataclass
class FitResult:
    quantity: str
    slope: float
    intercept: float
    residual: float
    n_points: int
    range_lo: float
    range_hi: float

    def row(self) -> List[str]:
        return [self.quantity, format_float(self.slope), format_float(self.intercept),
                format_float(self.residual), str(self.n_points),
                format_float(self.range_lo), format_float(self.range_hi)]


def fit_loglog(x: Sequence[float], y: Sequence[float], quantity: str, *,
               trim: bool = False) -> FitResult:
    """Least-squares line through ``(log x, log y)``.

    ``trim`` drops the smallest and largest x (the end octaves of a sweep).
    The residual is the RMS deviation in log y.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(x)
    x, y = x[order], y[order]
    if trim and x.size >= 4:
        x, y = x[1:-1], y[1:-1]
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise NumericalError(f"cannot fit {quantity}: need >= 2 positive points")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
    if not np.isfinite(slope):
        raise NumericalError(f"fit for {quantity} is not finite")
    return FitResult(quantity + ("_trimmed" if trim else ""), float(slope), float(intercept),
                     resid, int(x.size), float(x[0]), float(x[-1]))


def fits_csv(fits: Sequence[FitResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIT_COLUMNS)
    for f in fits:
        w.writerow(f.row())
    return buf.getvalue()


def rows_csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


# --- outcomes ------------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class Outcome:
    scenario: str
    checks: List[Check] = field(default_factory=list)
    fits: List[FitResult] = field(default_factory=list)
    files: Dict[str, str] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def report(self) -> str:
        lines = [f"scenario: {self.scenario}"]
        for c in self.checks:
            lines.append(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
        for n in self.notes:
            lines.append(f"NOTE {n}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str) -> None:
        p = Path(out_dir)
        p.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            (p / name).write_text(text)
        if self.fits:
            (p / "fit.csv").write_text(fits_csv(self.fits))
        (p / "report.txt").write_text(self.report())


def _map(fn: Callable, items: Sequence, workers: int) -> List:
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# --- initial data ----------------------------------------------------------------

def initial_field(cfg: ExperimentConfig, kind: str, grid: GridSpec, *, sigma: float = 0.0,
                  norm: float = 1.0, eps: float = 0.05, amplitude: float = 1.0, k: int = 1,
                  kmax: Optional[int] = None) -> Field:
    if kind == "soliton":
        return dyn.exact_solution(grid, "soliton", 0.0)
    if kind == "galilean":
        return dyn.exact_solution(grid, "galilean", 0.0, eps=eps)
    if kind == "plane_wave":
        return dyn.exact_solution(grid, "plane_wave", 0.0, amplitude=amplitude, k=k)
    if kind in ("rough", "bandlimited"):
        return dyn.rough_data(grid, cfg.s, cfg.seed, norm=norm, kmax=kmax)
    if kind == "perturbed":
        return eval_Q(grid) + sigma * dyn.rough_data(grid, cfg.s, cfg.seed)
    raise ConfigurationError(f"unknown initial data {kind!r}")


# --- scenarios -----------------------------------------------------------------

def attach_modulation(ledger: EnergyLedger, s: float, N: float, outcome: "Outcome",
                      label: str = "") -> None:
    """Fill the modulation columns of ``ledger`` from its stored fields.

    After a basin exit the remaining rows are left empty and a note is added.
    """
    track = track_modulation(ledger.fields, ledger.times, s, N)
    n_all, n = ledger.times.size, track.times.size
    if track.failed_at is not None:
        outcome.notes.append(f"{label}decomposition left its basin at t={track.failed_at:.6g}; "
                             f"modulation columns empty from there on")

    def padded(vals):
        out = np.full(n_all, np.nan)
        out[:n] = vals
        return out

    ledger.columns["theta"] = padded(track.theta)
    ledger.columns["x0"] = padded(track.x0)
    ledger.columns["iw_h1"] = padded([f.iw_h1 for f in track.frames])
    ledger.columns["res0"] = padded([f.ortho_residuals[0] for f in track.frames])
    ledger.columns["res1"] = padded([f.ortho_residuals[1] for f in track.frames])


def run_simulate(cfg: ExperimentConfig) -> Outcome:
    grid = cfg.grid_spec()
    sec = cfg.simulate
    u0 = initial_field(cfg, sec.initial, grid, sigma=sec.sigma, norm=sec.norm, eps=sec.eps,
                       amplitude=sec.amplitude, k=sec.k)
    N = cfg.N[0]
    probes = dyn.standard_probes(cfg.s, N)
    if sec.track_distance:
        probes["dist_hs"] = lambda u: dist_hs(u, cfg.s).distance
    solver = cfg.solver_config()
    keep = sec.track_modulation or bool(sec.save_field)
    ledger = evolve(u0, solver, probes, keep_fields=keep)
    out = Outcome("simulate")
    if sec.track_modulation:
        attach_modulation(ledger, cfg.s, N, out)
    mass = ledger["mass"]
    drift = float(np.max(np.abs(mass - mass[0])) / mass[0])
    if solver.dealias:
        # the truncated cubic term is not mass-preserving, so only report it
        out.notes.append(f"relative mass drift {drift:.3e} (dealiased flow)")
    else:
        out.checks.append(Check("mass_conservation", drift <= 1e-10,
                                f"relative drift {drift:.3e} (tol 1e-10)"))
    out.files["ledger.csv"] = ledger.to_csv()
    if sec.save_field and ledger.fields:
        save_field(Path(cfg.out) / sec.save_field, ledger.fields[-1])
    return out


def run_growth_scan(cfg: ExperimentConfig) -> Outcome:
    grid = cfg.grid_spec()
    sec = cfg.growth_scan
    u0 = initial_field(cfg, sec.data, grid, norm=sec.norm)
    solver = cfg.solver_config()
    ledger = evolve(u0, solver, {"mass": dyn.mass, "hs_norm": lambda u: dyn.hs_norm(u, cfg.s)})
    t = ledger.times
    env = np.maximum.accumulate(ledger["hs_norm"])
    sel = t >= sec.t_fit_min
    out = Outcome("growth_scan")
    fit = fit_loglog(t[sel], env[sel], "hs_envelope")
    out.fits.append(fit)
    bound = 2 * cfg.s + sec.margin
    out.checks.append(Check("growth_envelope_exponent", fit.slope <= bound,
                            f"slope {fit.slope:.4f} <= {bound:.4f}"))
    out.files["ledger.csv"] = ledger.to_csv()
    return out


def _increment_run(args) -> Dict[str, np.ndarray]:
    grid_tuple, values, solver_kw, s, Ns, kinds = args
    grid = GridSpec(*grid_tuple)
    u0 = Field(grid, values)
    probes = {"mass": dyn.mass, "L": dyn.lyapunov}
    for N in Ns:
        if "D" in kinds:
            probes[f"E_D@{N!r}"] = (lambda N: lambda u: dyn.modified_energy_D(u, s, N))(N)
        if "I" in kinds:
            probes[f"E_I@{N!r}"] = (lambda N: lambda u: dyn.modified_energy_I(u, s, N))(N)
    ledger = evolve(u0, SolverConfig(**solver_kw), probes)
    cols = {k: v for k, v in ledger.columns.items()}
    cols["t"] = ledger.times
    return cols


def _max_increment(times: np.ndarray, series: np.ndarray, window: float) -> float:
    sel = times <= window * (1 + 1e-9)
    return float(np.max(np.abs(series[sel] - series[0])))


def run_conservation_scan(cfg: ExperimentConfig) -> Outcome:
    grid = cfg.grid_spec()
    sec = cfg.conservation_scan
    out = Outcome("conservation_scan")
    kmax = sec.kmax if sec.data == "bandlimited" and sec.kmax > 0 else None
    if sec.data == "bandlimited" and kmax is None:
        raise ConfigurationError("bandlimited data needs conservation_scan.kmax > 0")
    u0 = initial_field(cfg, sec.data, grid, norm=sec.norm, kmax=kmax)
    steps = max(1, int(round(sec.delta / cfg.solver.dt)))
    stride = max(1, steps // max(1, sec.samples_per_window))
    solver_kw = dict(dt=cfg.solver.dt, t_end=sec.delta, sign=cfg.solver.sign,
                     dealias=cfg.solver.dealias, record_stride=stride)
    Ns = [float(n) for n in cfg.N]
    cols = _increment_run(((grid.num_modes, grid.box_length), u0.values, solver_kw, cfg.s, Ns,
                           list(sec.kinds)))
    t = cols["t"]
    rows = []
    for kind in sec.kinds:
        baseline = "mass" if kind == "D" else "L"
        for window, label in ((sec.delta, ""), (0.5 * sec.delta, "_half_delta")):
            floor = max(sec.roundoff_floor,
                        sec.drift_factor * _max_increment(t, cols[baseline], window))
            incs = []
            for N in Ns:
                inc = _max_increment(t, cols[f"E_{kind}@{N!r}"], window)
                flagged = inc <= floor
                rows.append([kind, window, N, 0.0, inc, floor, int(flagged)])
                incs.append((N, inc, flagged))
            good = [(n, v) for n, v, f in incs if not f]
            name = f"E_{kind}_increment{label}"
            if len(good) < 2:
                out.notes.append(f"{name}: fewer than two increments above the floor "
                                 f"{floor:.3e} ({baseline} drift x {sec.drift_factor}); fit skipped")
                continue
            fit = fit_loglog([n for n, _ in good], [v for _, v in good], name)
            out.fits.append(fit)
            if len(good) >= 4:
                out.fits.append(fit_loglog([n for n, _ in good], [v for _, v in good], name, trim=True))
            bound = sec.slope_D if kind == "D" else sec.slope_I
            vals = [v for _, v in good]
            monotone = all(b < a for a, b in zip(vals, vals[1:]))
            out.checks.append(Check(f"{name}_slope", fit.slope <= bound,
                                    f"slope {fit.slope:.4f} <= {bound}"))
            out.checks.append(Check(f"{name}_monotone", monotone,
                                    "strictly decreasing across octaves" if monotone else
                                    "not monotone: " + ", ".join(f"{v:.3e}" for v in vals)))

    if sec.sigma_sweep:
        g2 = GridSpec(int(sec.sigma_num_modes), float(sec.sigma_box_length))
        Q = eval_Q(g2)
        w = dyn.rough_data(g2, cfg.s, cfg.seed)
        steps2 = max(1, int(round(sec.delta / sec.sigma_dt)))
        kw2 = dict(dt=sec.sigma_dt, t_end=sec.delta, sign="focusing", dealias=cfg.solver.dealias,
                   record_stride=max(1, steps2 // max(1, sec.samples_per_window)))
        jobs = [((g2.num_modes, g2.box_length), (Q + sg * w).values, kw2, cfg.s,
                 [float(sec.sigma_N)], ["I"]) for sg in sec.sigmas]
        results = _map(_increment_run, jobs, cfg.workers)
        incs = []
        for sg, res in zip(sec.sigmas, results):
            inc = _max_increment(res["t"], res[f"E_I@{float(sec.sigma_N)!r}"], sec.delta)
            floor = max(sec.roundoff_floor,
                        sec.drift_factor * _max_increment(res["t"], res["L"], sec.delta))
            rows.append(["I_sigma", sec.delta, float(sec.sigma_N), sg, inc, floor, int(inc <= floor)])
            incs.append(inc)
        fit = fit_loglog(sec.sigmas, incs, "E_I_sigma_exponent")
        out.fits.append(fit)
        ok = abs(fit.slope - sec.sigma_exponent) <= sec.sigma_tol
        out.checks.append(Check("sigma_exponent", ok,
                                f"exponent {fit.slope:.4f} = {sec.sigma_exponent} +- {sec.sigma_tol}"))
    out.files["increments.csv"] = rows_csv(["kind", "window", "N", "sigma", "increment", "floor", "below_floor"], rows)
    return out


def _orbital_run(args):
    grid_tuple, values, solver_kw, s, N = args
    grid = GridSpec(*grid_tuple)
    ledger = evolve(Field(grid, values), SolverConfig(**solver_kw),
                    {"mass": dyn.mass, "L": dyn.lyapunov, "hs_norm": lambda u: dyn.hs_norm(u, s),
                     "dist_hs": lambda u: dist_hs(u, s).distance},
                    keep_fields=N is not None)
    notes = Outcome("orbital")
    if N is not None:
        attach_modulation(ledger, s, N, notes)
        ledger.fields = None
    return ledger, notes.notes


def _distance_to_fixed_state(u: Field, Q: Field, s: float) -> float:
    """H^s distance from ``u`` to ``Q`` after the best phase rotation only."""
    w = hs_weights(u.grid, s)
    c = np.sum(w * u.spectrum * np.conj(Q.spectrum))
    return dyn.hs_norm(u - Q * np.exp(1j * np.angle(c)), s)


def run_orbital(cfg: ExperimentConfig) -> Outcome:
    grid = cfg.grid_spec()
    sec = cfg.orbital
    out = Outcome("orbital")
    solver_kw = dataclasses.asdict(cfg.solver)
    Q = eval_Q(grid)
    if sec.data == "galilean":
        u0 = initial_field(cfg, "galilean", grid, eps=sec.eps)
        probes = {"mass": dyn.mass, "L": dyn.lyapunov,
                  "dist_hs": lambda u: dist_hs(u, 1.0).distance,
                  "dist_initial": lambda u: _distance_to_fixed_state(u, u0, 1.0)}
        ledger = evolve(u0, SolverConfig(**solver_kw), probes)
        d = ledger["dist_hs"]
        d0 = ledger["dist_initial"]
        bounded = float(np.max(d)) <= 1.05 * float(d[0]) + 1e-9
        grows = float(d0[-1]) > 2.0 * float(d[0])
        out.checks.append(Check("cylinder_distance_bounded", bounded,
                                f"max dist_H1 to the cylinder {np.max(d):.4e}, initial {d[0]:.4e}"))
        out.checks.append(Check("distance_to_initial_state_grows", grows,
                                f"final distance to u0 {d0[-1]:.4e}"))
        out.files["ledger.csv"] = ledger.to_csv()
        out.files["initial_distance.csv"] = rows_csv(
            ["t", "dist_initial"], list(zip(ledger.times.tolist(), d0.tolist())))
        return out

    w = dyn.rough_data(grid, cfg.s, cfg.seed)
    N = cfg.N[0] if sec.track_modulation else None
    jobs = [((grid.num_modes, grid.box_length), (Q + sg * w).values, solver_kw, cfg.s, N)
            for sg in sec.sigmas]
    results = _map(_orbital_run, jobs, cfg.workers)
    at_probe = []
    for sg, (ledger, notes) in zip(sec.sigmas, results):
        out.notes.extend(f"sigma={sg!r}: {n}" for n in notes)
        t = ledger.times
        d = ledger["dist_hs"]
        sel = t >= sec.t_start
        env = np.maximum.accumulate(d)
        fit = fit_loglog(t[sel], env[sel], f"dist_envelope_sigma={sg!r}")
        out.fits.append(fit)
        bound = (1.0 - cfg.s) + sec.drift_margin
        out.checks.append(Check(f"drift_exponent_sigma={sg!r}", fit.slope <= bound,
                                f"slope {fit.slope:.4f} <= {bound:.4f}"))
        j = int(np.argmin(np.abs(t - sec.t_probe)))
        at_probe.append(float(d[j]))
        out.files[f"ledger_sigma={sg!r}.csv"] = ledger.to_csv()
    fit = fit_loglog(sec.sigmas, at_probe, f"dist_vs_sigma_at_t={sec.t_probe!r}")
    out.fits.append(fit)
    out.checks.append(Check("sigma_linearity", abs(fit.slope - 1.0) <= sec.sigma_tol,
                            f"exponent {fit.slope:.4f} = 1 +- {sec.sigma_tol}"))
    out.files["sigma_scaling.csv"] = rows_csv(["sigma", "t", "dist_hs"],
                                              [[sg, sec.t_probe, v] for sg, v in zip(sec.sigmas, at_probe)])
    return out


def run_symbol_scan(cfg: ExperimentConfig) -> Outcome:
    sec = cfg.symbol_scan
    out = Outcome("symbol_scan")
    results = []
    for j, sv in enumerate(sec.s_values):
        per_s = []
        for i, ns in enumerate(sec.n_sop):
            r = filter_bound_scan(sv, sec.N, ns, sec.samples, seed=cfg.seed + 1000 * j + i,
                                  floor=sec.floor)
            results.append(r)
            per_s.append(r)
        stable = [r.max_ratio for r in per_s if r.N_sop in sec.stable_n_sop]
        if stable:
            spread = max(stable) / min(stable)
            out.checks.append(Check(f"filter_constant_stable_s={sv!r}", spread <= sec.stability_factor,
                                    f"max/min = {spread:.4f} over N_sop {sorted(sec.stable_n_sop)}"))
    out.files["scan.csv"] = scan_rows_csv(results)
    return out


def save_field(path: Path, f: Field) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, values=f.values, box_length=f.grid.box_length)


def load_field(path: str, grid: Optional[GridSpec] = None) -> Field:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"field file {path} does not exist")
    if p.suffix == ".npz":
        data = np.load(p)
        vals = data["values"]
        g = GridSpec(int(vals.size), float(data["box_length"]))
        return Field(g, vals)
    if p.suffix == ".npy":
        vals = np.load(p)
        if grid is None or grid.num_modes != vals.size:
            raise ConfigurationError("npy field size does not match the configured grid")
        return Field(grid, vals)
    raise ConfigurationError(f"unsupported field file type {p.suffix!r}")


def run_decompose(cfg: ExperimentConfig) -> Outcome:
    sec = cfg.decompose
    grid = cfg.grid_spec()
    if sec.field_path:
        u = load_field(sec.field_path, grid)
    else:
        u = initial_field(cfg, sec.initial, grid, sigma=sec.sigma)
    out = Outcome("decompose")
    N = cfg.N[0]
    try:
        frame = decompose(u, cfg.s, N)
    except DecompositionError as exc:
        out.checks.append(Check("decomposition", False, str(exc)))
        return out
    from .modulation import modulation_rates
    rates = modulation_rates(frame, cfg.s, N)
    tol = 1e-9 * max(frame.w_h1, 1e-300)
    res = max(abs(r) for r in frame.ortho_residuals)
    out.checks.append(Check("orthogonality", res <= max(tol, 1e-13),
                            f"max residual {res:.3e} (w_H1 = {frame.w_h1:.3e})"))
    rows = [[0.0, dyn.mass(u), dyn.hamiltonian(u), dyn.lyapunov(u),
             dyn.modified_energy_D(u, cfg.s, N), dyn.modified_energy_I(u, cfg.s, N),
             dyn.hs_norm(u, cfg.s), dist_hs(u, cfg.s).distance, frame.params.theta,
             frame.params.x0, frame.iw_h1, frame.ortho_residuals[0], frame.ortho_residuals[1]]]
    out.files["frame.csv"] = rows_csv(LEDGER_COLUMNS, rows)
    out.files["rates.csv"] = rows_csv(["theta_rate", "x0_rate"], [list(rates)])
    return out


RUNNERS: Dict[str, Callable[[ExperimentConfig], Outcome]] = {
    "simulate": run_simulate,
    "growth_scan": run_growth_scan,
    "conservation_scan": run_conservation_scan,
    "orbital": run_orbital,
    "symbol_scan": run_symbol_scan,
    "decompose": run_decompose,
}


def run_experiment(cfg: ExperimentConfig, *, write: bool = True) -> Outcome:
    cfg.validate()
    outcome = RUNNERS[cfg.scenario](cfg)
    if write:
        outcome.files.setdefault("config.yaml", cfg.to_yaml())
        outcome.write(cfg.out)
    return outcome
