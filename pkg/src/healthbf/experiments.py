"""Monte-Carlo experiment harness: rho_s sweeps, dynamic rate requirements,
antenna selection and beampattern exports.

Every run derives its channel, radar scene and initial beamformer from one
integer seed through independent ``SeedSequence`` children, so a run is
reproducible in isolation and sweeps can execute in any order.
"""

from __future__ import annotations

import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import InvalidArgumentError, check_positive_int
from .metrics import beampattern, csv_header, records_to_csv
from .power import PowerModelParams, hybrid_power_surrogate, total_power
from .scenario import (
    MaskKind,
    ReliabilityMask,
    SystemConfig,
    random_mask,
    random_scene,
    sample_channel,
)
from .solver import (
    DivergenceError,
    GpgdaPowerParams,
    SolverOptions,
    gpgda_solve,
    pgda_solve,
)

PGDA_RHO_GRID = (0.0, 0.2218, 0.74, 1.332)
# the printed selection grid never switches an antenna off with our scaling,
# so the default continues it up to a value where selection saturates
GPGDA_RHO_GRID = (0.0, 0.0038, 0.0767, 1.0, 3.0, 10.0)
DEFAULT_MASK_SEED = 10
DEFAULT_ANTENNA_HEALTH = (1.0, 0.2, 0.9, 1.0, 0.3, 0.75, 1.0, 0.1, 0.45, 1.0)
MAX_FAILURE_FRACTION = 0.2
RANDOMNESS_POLICY = ("per-run SeedSequence(seed).spawn(3): channel, scene, initial W; "
                     "all three redrawn every run")


class ExperimentError(RuntimeError):
    """Too many runs of an experiment failed to produce a result."""


def default_entry_mask(n_tx, n_users, seed=DEFAULT_MASK_SEED):
    return random_mask(seed, (n_tx, n_users))


def default_antenna_mask(n_tx, seed=DEFAULT_MASK_SEED):
    """Fixed health profile for a 10-element array, a seeded draw otherwise."""
    if n_tx == len(DEFAULT_ANTENNA_HEALTH):
        return ReliabilityMask.per_antenna(DEFAULT_ANTENNA_HEALTH)
    return random_mask(seed, n_tx)


@dataclass(frozen=True)
class Scenario:
    """Everything an experiment needs besides the seeds."""

    config: SystemConfig = field(default_factory=SystemConfig)
    entry_mask: ReliabilityMask | None = None
    antenna_mask: ReliabilityMask | None = None
    options: SolverOptions = field(default_factory=SolverOptions)
    gpgda_power: GpgdaPowerParams = field(default_factory=GpgdaPowerParams)
    power_model: PowerModelParams = field(default_factory=PowerModelParams)
    pgda_rho_s: tuple = PGDA_RHO_GRID
    gpgda_rho_s: tuple = GPGDA_RHO_GRID
    n_runs: int = 100
    base_seed: int = 0
    dynamic_stages: int = 3
    dynamic_increment: float = 0.1
    grid_points: int = 181

    def __post_init__(self):
        cfg = self.config
        if self.entry_mask is None:
            object.__setattr__(self, "entry_mask", default_entry_mask(cfg.n_tx, cfg.n_users))
        if self.antenna_mask is None:
            object.__setattr__(self, "antenna_mask", default_antenna_mask(cfg.n_tx))
        if self.entry_mask.kind is not MaskKind.PER_ENTRY:
            raise InvalidArgumentError("reliability_mask must be per-entry")
        if self.antenna_mask.kind is not MaskKind.PER_ANTENNA:
            raise InvalidArgumentError("antenna_mask must be per-antenna")
        self.entry_mask.check_compatible(cfg.n_tx, cfg.n_users)
        self.antenna_mask.check_compatible(cfg.n_tx, cfg.n_users)
        for name in ("pgda_rho_s", "gpgda_rho_s"):
            object.__setattr__(self, name, _check_grid(getattr(self, name), name))
        check_positive_int(self.n_runs, "n_runs")
        check_positive_int(self.dynamic_stages, "dynamic_stages")
        check_positive_int(self.grid_points, "grid_points")
        if int(self.base_seed) != self.base_seed or self.base_seed < 0:
            raise InvalidArgumentError("seed must be a nonnegative integer")

    def mask_for(self, solver):
        return self.entry_mask if solver == "pgda" else self.antenna_mask

    def rho_grid(self, solver):
        return self.pgda_rho_s if solver == "pgda" else self.gpgda_rho_s

    def to_dict(self):
        return {
            "system": self.config.to_dict(),
            "reliability_mask": self.entry_mask.to_json(),
            "antenna_mask": self.antenna_mask.to_json(),
            "solver": _dataclass_dict(self.options),
            "gpgda": _dataclass_dict(self.gpgda_power),
            "power_model": self.power_model.to_dict(),
            "pgda_rho_s": list(self.pgda_rho_s),
            "gpgda_rho_s": list(self.gpgda_rho_s),
            "n_runs": self.n_runs,
            "seed": self.base_seed,
            "dynamic": {"stages": self.dynamic_stages, "increment": self.dynamic_increment},
            "grid_points": self.grid_points,
        }


def _dataclass_dict(obj):
    return {k: getattr(obj, k) for k in obj.__dataclass_fields__}


def _check_grid(values, name):
    grid = tuple(float(v) for v in np.atleast_1d(values))
    if not grid:
        raise InvalidArgumentError(f"{name} must be nonempty")
    if any(v < 0 or not math.isfinite(v) for v in grid):
        raise InvalidArgumentError(f"{name} must hold finite nonnegative values")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise InvalidArgumentError(f"{name} must be sorted ascending")
    return grid


_SCENARIO_KEYS = {"system", "reliability_mask", "antenna_mask", "mask_seed", "solver",
                  "gpgda", "power_model", "pgda_rho_s", "gpgda_rho_s", "n_runs", "seed",
                  "dynamic", "grid_points"}


def scenario_from_dict(data, base_dir=None):
    """Build a :class:`Scenario` from a JSON-compatible mapping.

    Mask entries take an inline array, a ``{"kind", "values"}`` mapping or a
    path to a JSON file; ``mask_seed`` reseeds the generated defaults.
    """
    unknown = set(data) - _SCENARIO_KEYS
    if unknown:
        raise InvalidArgumentError(f"unknown scenario keys: {sorted(unknown)}")
    config = SystemConfig.from_dict(data.get("system", {}))
    mask_seed = data.get("mask_seed", DEFAULT_MASK_SEED)
    entry = data.get("reliability_mask")
    antenna = data.get("antenna_mask")
    dyn = data.get("dynamic", {})
    kwargs = dict(
        config=config,
        entry_mask=(ReliabilityMask.from_spec(entry, base_dir) if entry is not None
                    else default_entry_mask(config.n_tx, config.n_users, mask_seed)),
        antenna_mask=(ReliabilityMask.from_spec(antenna, base_dir) if antenna is not None
                      else default_antenna_mask(config.n_tx, mask_seed)),
        options=SolverOptions.from_dict(data.get("solver")),
        gpgda_power=GpgdaPowerParams(**data.get("gpgda", {})),
        power_model=PowerModelParams.from_dict(data.get("power_model")),
        dynamic_stages=dyn.get("stages", 3),
        dynamic_increment=dyn.get("increment", 0.1),
    )
    for key, target in (("pgda_rho_s", "pgda_rho_s"), ("gpgda_rho_s", "gpgda_rho_s"),
                        ("n_runs", "n_runs"), ("seed", "base_seed"),
                        ("grid_points", "grid_points")):
        if key in data:
            kwargs[target] = data[key]
    return Scenario(**kwargs)


def load_scenario(path=None):
    """Read a scenario JSON file; ``None`` gives the default scenario."""
    if path is None:
        return Scenario()
    path = Path(path)
    with open(path) as fh:
        data = json.load(fh)
    return scenario_from_dict(data, base_dir=path.parent)


# ---------------------------------------------------------------- single runs

def run_streams(seed):
    """Independent generators for channel, scene and initial beamformer."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def draw_instance(config, seed):
    """Channel and radar scene of run ``seed``, plus the initial-W generator."""
    ch_rng, scene_rng, w_rng = run_streams(seed)
    H = sample_channel(ch_rng, config.n_tx, config.n_users)
    scene = random_scene(scene_rng, config.n_targets) if config.n_targets else None
    return H, scene, w_rng


@dataclass(frozen=True)
class RunRecord:
    rho_s: float
    seed: int
    metrics: object = None
    result: object = None
    error: str | None = None
    # radiated power for PGDA, hybrid surrogate for GPGDA
    constraint_power: float = float("nan")

    @property
    def ok(self):
        return self.error is None


def run_single(scenario, rho_s, seed, solver="pgda", keep_result=False):
    """Solve one seeded instance; solver failures become an errored record."""
    if solver not in ("pgda", "gpgda"):
        raise InvalidArgumentError(f"unknown solver {solver!r}")
    cfg = scenario.config
    H, scene, w_rng = draw_instance(cfg, seed)
    try:
        if solver == "pgda":
            res = pgda_solve(cfg, scene, H, scenario.entry_mask, scenario.options,
                             rho_s=rho_s, random_state=w_rng)
        else:
            res = gpgda_solve(cfg, scene, H, scenario.antenna_mask, scenario.gpgda_power,
                              scenario.options, rho_s=rho_s, random_state=w_rng)
    except (DivergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return RunRecord(rho_s, seed, error=f"{type(exc).__name__}: {exc}")
    if solver == "pgda":
        power = res.metrics.tx_power
    else:
        p = scenario.gpgda_power
        power = hybrid_power_surrogate(res.w_star, p.eta_pa, p.p_antenna)
    return RunRecord(rho_s, seed, res.metrics, res if keep_result else None,
                     constraint_power=float(power))


def _run_job(args):
    return run_single(*args)


# ---------------------------------------------------------------- sweeps

@dataclass(frozen=True)
class SweepSpec:
    rho_s_values: tuple
    n_runs: int = 100
    base_seed: int = 0
    solver: str = "pgda"

    def __post_init__(self):
        object.__setattr__(self, "rho_s_values", _check_grid(self.rho_s_values, "rho_s_values"))
        check_positive_int(self.n_runs, "n_runs")
        if self.solver not in ("pgda", "gpgda"):
            raise InvalidArgumentError(f"unknown solver {self.solver!r}")

    @property
    def seeds(self):
        return list(range(self.base_seed, self.base_seed + self.n_runs))

    @classmethod
    def from_scenario(cls, scenario, solver="pgda", rho_s_values=None, n_runs=None,
                      base_seed=None):
        return cls(rho_s_values=scenario.rho_grid(solver) if rho_s_values is None
                   else rho_s_values,
                   n_runs=scenario.n_runs if n_runs is None else n_runs,
                   base_seed=scenario.base_seed if base_seed is None else base_seed,
                   solver=solver)


@dataclass(frozen=True)
class SweepRow:
    rho_s: float
    mean_se: float
    std_se: float
    mean_rate: float
    std_rate: float
    mean_mi: float
    std_mi: float
    mean_density: float
    mean_power: float
    mean_reliability: float
    mean_constraint_power: float
    n_ok: int
    n_failed: int

    HEADER = ("rho_s", "mean_se", "std_se", "mean_rate", "std_rate", "mean_mi", "std_mi",
              "mean_density_pct", "mean_power", "mean_reliability_pct",
              "mean_constraint_power", "n_ok", "n_failed")

    def as_list(self):
        return [self.rho_s, self.mean_se, self.std_se, self.mean_rate, self.std_rate,
                self.mean_mi, self.std_mi, self.mean_density, self.mean_power,
                self.mean_reliability, self.mean_constraint_power, self.n_ok, self.n_failed]


def aggregate(rho_s, records):
    """Sweep row from the runs of one rho_s value; failed runs are excluded."""
    ok = [r for r in records if r.ok]
    good = [r.metrics for r in ok]
    n_failed = len(records) - len(good)
    if not good:
        nan = float("nan")
        return SweepRow(float(rho_s), *([nan] * 10), 0, n_failed)
    se = np.array([m.mean_se for m in good])
    rate = np.array([m.mean_rate for m in good])
    mi = np.array([m.radar_mi for m in good])
    return SweepRow(
        rho_s=float(rho_s),
        mean_se=float(se.mean()), std_se=float(se.std()),
        mean_rate=float(rate.mean()), std_rate=float(rate.std()),
        mean_mi=float(mi.mean()), std_mi=float(mi.std()),
        mean_density=float(np.mean([m.density_pct for m in good])),
        mean_power=float(np.mean([m.tx_power for m in good])),
        mean_reliability=float(np.mean([m.reliability_pct for m in good])),
        mean_constraint_power=float(np.mean([r.constraint_power for r in ok])),
        n_ok=len(good), n_failed=n_failed,
    )


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    rows: list
    runs: list

    @property
    def n_failed(self):
        return sum(not r.ok for r in self.runs)


def run_rho_sweep(scenario, spec, n_jobs=1, keep_results=False):
    """Monte-Carlo sweep over ``spec.rho_s_values``.

    Every rho_s value reuses the same seeds. Runs are ordered by (rho_s,
    seed) regardless of ``n_jobs``, so parallel and serial execution give
    identical output. More than 20% failed runs raises :class:`ExperimentError`.
    ``keep_results`` retains each full solve (needed for trace export).
    """
    jobs = [(scenario, rho, seed, spec.solver, keep_results) for rho in spec.rho_s_values
            for seed in spec.seeds]
    if n_jobs == 1:
        runs = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            runs = list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * n_jobs))))
    failed = sum(not r.ok for r in runs)
    if failed > MAX_FAILURE_FRACTION * len(runs):
        raise ExperimentError(f"{failed} of {len(runs)} runs failed; first: "
                              f"{next(r.error for r in runs if not r.ok)}")
    rows = [aggregate(rho, [r for r in runs if r.rho_s == rho]) for rho in spec.rho_s_values]
    return SweepResult(spec, rows, runs)


# ---------------------------------------------------------------- dynamic

@dataclass(frozen=True)
class StageRecord:
    stage: int
    rate_min: tuple
    metrics: object
    result: object


def run_dynamic(scenario, seed=None, stages=None, increment=None):
    """Raise every minimum rate by ``increment`` per stage, warm-starting each.

    Stage ``s`` (1-based) requires ``rate_min * (1 + increment) ** s``. PGDA
    runs without sparsity; the beamformer and multipliers of one stage seed
    the next, so the solver tracks the changing requirement.
    """
    seed = scenario.base_seed if seed is None else seed
    stages = scenario.dynamic_stages if stages is None else check_positive_int(stages, "stages")
    increment = scenario.dynamic_increment if increment is None else increment
    if increment < 0:
        raise InvalidArgumentError("increment must be nonnegative")
    base = scenario.config
    H, scene, w_rng = draw_instance(base, seed)
    W, duals, out = None, None, []
    for s in range(1, stages + 1):
        rate_min = tuple(float(r) * (1.0 + increment) ** s for r in base.rate_min)
        cfg = base.replace(rate_min=rate_min)
        res = pgda_solve(cfg, scene, H, scenario.entry_mask, scenario.options, rho_s=0.0,
                         W0=W, duals0=duals, random_state=w_rng)
        W, duals = res.w_star, res.duals
        out.append(StageRecord(s, rate_min, res.metrics, res))
    return out


# ---------------------------------------------------------------- beampatterns

@dataclass(frozen=True)
class BeampatternCurve:
    rho_s: float
    masked: bool
    theta: np.ndarray
    power: np.ndarray


def angle_grid(n_points=181):
    return np.linspace(-np.pi / 2, np.pi / 2, n_points)


def run_beampatterns(scenario, rho_s_values=None, seed=None, solver="gpgda"):
    """Masked and unmasked transmit patterns of one instance per rho_s.

    The same channel, scene and initial beamformer are used for every
    rho_s so that only the sparsity weight changes between curves.
    """
    grid = scenario.rho_grid(solver) if rho_s_values is None else _check_grid(rho_s_values,
                                                                             "rho_s_values")
    seed = scenario.base_seed if seed is None else seed
    cfg = scenario.config
    theta = angle_grid(scenario.grid_points)
    mask = scenario.mask_for(solver)
    curves = []
    for rho in grid:
        rec = run_single(scenario, rho, seed, solver, keep_result=True)
        if not rec.ok:
            raise ExperimentError(f"beampattern run at rho_s={rho} failed: {rec.error}")
        W = rec.result.w_star
        for masked in (False, True):
            p = beampattern(W, theta, cfg.n_tx, cfg.spacing, cfg.wavelength,
                            mask if masked else None)
            curves.append(BeampatternCurve(rho, masked, theta, p))
    return curves


def pattern_errors(curves):
    """Mean absolute deviation of each masked curve from the unmasked pattern
    of the smallest rho_s (the undamaged reference)."""
    rho0 = min(c.rho_s for c in curves)
    ideal = next(c.power for c in curves if c.rho_s == rho0 and not c.masked)
    return [(c.rho_s, float(np.mean(np.abs(c.power - ideal)))) for c in curves if c.masked]


# ---------------------------------------------------------------- export

def _rho_tag(rho):
    return repr(float(rho)).replace("-", "m")


def run_metadata(scenario, spec=None, n_failed=0, extra=None):
    meta = {
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scenario": scenario.to_dict(),
        "randomness": RANDOMNESS_POLICY,
        "failure_count": int(n_failed),
    }
    if spec is not None:
        meta["sweep"] = {"rho_s_values": list(spec.rho_s_values), "n_runs": spec.n_runs,
                         "base_seed": spec.base_seed, "seeds": spec.seeds,
                         "solver": spec.solver}
    if extra:
        meta.update(extra)
    return meta


def rows_to_csv(rows):
    lines = [",".join(SweepRow.HEADER)]
    for row in rows:
        lines.append(",".join(repr(int(v)) if isinstance(v, int) else repr(float(v))
                              for v in row.as_list()))
    return "\n".join(lines) + "\n"


def _write(path, text):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def export_results(obj, path, fmt="csv", scenario=None, traces=False):
    """Persist a sweep, dynamic run or beampattern set under directory ``path``.

    Returns the list of files written. Nothing is written outside ``path``.
    """
    if fmt not in ("csv", "json"):
        raise InvalidArgumentError(f"unknown format {fmt!r}")
    out = Path(path)
    written = []
    scenario = scenario or Scenario()
    if isinstance(obj, SweepResult):
        runs_ok = [(r.rho_s, r.metrics) for r in obj.runs if r.ok]
        if fmt == "csv":
            written.append(_write(out / "runs.csv", records_to_csv(runs_ok)))
            written.append(_write(out / "summary.csv", rows_to_csv(obj.rows)))
        else:
            doc = {"rows": [dict(zip(SweepRow.HEADER, r.as_list())) for r in obj.rows],
                   "runs": [{"rho_s": r.rho_s, "seed": r.seed,
                             "metrics": r.metrics.to_dict() if r.ok else None,
                             "constraint_power": r.constraint_power if r.ok else None,
                             "error": r.error} for r in obj.runs]}
            written.append(_write(out / "results.json", _dump_json(doc)))
        if traces:
            for r in obj.runs:
                if r.ok and r.result is not None:
                    name = f"trace_rho{_rho_tag(r.rho_s)}_seed{r.seed}.csv"
                    written.append(_write(out / "traces" / name, r.result.trace.to_csv()))
        meta = run_metadata(scenario, obj.spec, obj.n_failed,
                            {"failed_runs": [{"rho_s": r.rho_s, "seed": r.seed,
                                              "error": r.error}
                                             for r in obj.runs if not r.ok]})
    elif isinstance(obj, list) and obj and isinstance(obj[0], StageRecord):
        if fmt == "csv":
            header = ["stage"] + [f"rate_min_{j + 1}" for j in range(len(obj[0].rate_min))]
            header += csv_header(len(obj[0].rate_min))[1:]
            lines = [",".join(header)]
            for st in obj:
                vals = [*st.rate_min, *st.metrics.csv_row(0.0)[1:]]
                lines.append(",".join([str(st.stage)] + [repr(float(v)) for v in vals]))
            written.append(_write(out / "dynamic.csv", "\n".join(lines) + "\n"))
        else:
            doc = [{"stage": st.stage, "rate_min": list(st.rate_min),
                    "metrics": st.metrics.to_dict(), "duals": st.result.duals.to_dict()}
                   for st in obj]
            written.append(_write(out / "dynamic.json", _dump_json(doc)))
        if traces:
            for st in obj:
                written.append(_write(out / "traces" / f"trace_stage{st.stage}.csv",
                                      st.result.trace.to_csv()))
        meta = run_metadata(scenario, extra={"experiment": "dynamic"})
    elif isinstance(obj, list) and obj and isinstance(obj[0], BeampatternCurve):
        for c in obj:
            kind = "masked" if c.masked else "unmasked"
            if fmt == "csv":
                body = "theta_deg,power\n" + "".join(
                    f"{float(t)!r},{float(p)!r}\n" for t, p in zip(np.degrees(c.theta), c.power))
                name = f"beampattern_rho{_rho_tag(c.rho_s)}_{kind}.csv"
            else:
                body = _dump_json({"rho_s": c.rho_s, "masked": c.masked,
                                   "theta_deg": np.degrees(c.theta).tolist(),
                                   "power": c.power.tolist()})
                name = f"beampattern_rho{_rho_tag(c.rho_s)}_{kind}.json"
            written.append(_write(out / name, body))
        errs = pattern_errors(obj)
        body = "rho_s,mean_abs_error\n" + "".join(f"{r!r},{e!r}\n" for r, e in errs)
        written.append(_write(out / "beampattern_errors.csv", body))
        meta = run_metadata(scenario, extra={"experiment": "beampattern"})
    elif isinstance(obj, list) and not obj:
        written.append(_write(out / "runs.csv", records_to_csv([])))
        meta = run_metadata(scenario)
    else:
        raise InvalidArgumentError(f"cannot export object of type {type(obj).__name__}")
    written.append(_write(out / "metadata.json", _dump_json(meta)))
    return written


def selection_power_report(W, scenario):
    """Hybrid surrogate and full consumption model of a selection solution."""
    p = scenario.gpgda_power
    return {"hybrid_power": hybrid_power_surrogate(W, p.eta_pa, p.p_antenna),
            "total_power": total_power(W, scenario.power_model, scenario.config.n_tx)}


__all__ = [
    "ExperimentError", "Scenario", "SweepSpec", "SweepRow", "SweepResult", "RunRecord",
    "StageRecord", "BeampatternCurve", "load_scenario", "scenario_from_dict",
    "run_single", "run_rho_sweep", "run_dynamic", "run_beampatterns", "export_results",
    "aggregate", "pattern_errors", "angle_grid", "draw_instance", "run_streams",
    "default_entry_mask", "default_antenna_mask", "selection_power_report", "run_metadata",
]
