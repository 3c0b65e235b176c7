"""Closed-loop episodes, Monte-Carlo campaigns and gain sweeps.

Random streams: run ``i`` of a campaign with base seed ``s`` uses
``SeedSequence([s, i])`` spawned into two children, the first for the
initial state and the second for the sensors (gyro bias, then per-sample
noise).  Every controller therefore sees the same initial state, bias and
noise sequence for a given run index, independent of scheduling.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .controllers import ControllerConfig, DetumbleController
from .dynamics import (
    Env,
    PropagationError,
    Propagator,
    SimState,
    SpacecraftParams,
    draw_gyro_bias,
    gyro_sigma,
    measure,
    sample_initial_state,
)
from .geomag import GeoEpoch, load_coefficient_file, load_igrf13

log = logging.getLogger(__name__)

DETUMBLE_THRESHOLD = 0.01
INCREASE_RATIO = 1.05

BASELINES = ("lyapunov_momentum", "bcross", "bdot_variant", "projection", "bdot")
DEFAULT_CONTROLLERS = BASELINES + ("nonmonotonic",)


@dataclass
class EnvConfig:
    igrf_path: str | None = None
    igrf_degree: int = 10
    epoch: str = "2024-01-01T00:00:00"
    j2: bool = True
    drag: bool = True
    drag_torque: bool = True

    def build(self) -> Env:
        if self.igrf_path:
            model = load_coefficient_file(self.igrf_path, max_degree=self.igrf_degree)
        else:
            model = load_igrf13(max_degree=self.igrf_degree)
        return Env(
            field_model=model,
            epoch=GeoEpoch.from_iso(self.epoch),
            j2=self.j2,
            drag=self.drag,
            drag_torque=self.drag_torque,
        )


@dataclass
class InitialConditions:
    """Sampling ranges for the Monte-Carlo initial states (SI, radians)."""

    altitude: float = 400e3
    inclination_min: float = math.radians(20.0)
    inclination_max: float = math.radians(160.0)
    omega_norm: float = math.radians(30.0)


@dataclass
class CampaignConfig:
    n_runs: int = 100
    horizon: float = 7200.0
    control_rate: float = 1.0
    dt: float = 0.5
    controllers: tuple = field(default_factory=lambda: tuple(ControllerConfig(n) for n in DEFAULT_CONTROLLERS))
    spacecraft: SpacecraftParams = field(default_factory=SpacecraftParams)
    env: EnvConfig = field(default_factory=EnvConfig)
    initial: InitialConditions = field(default_factory=InitialConditions)
    seed: int = 0
    decimation: float = 10.0
    threshold: float = DETUMBLE_THRESHOLD
    estimate_gyro_bias: bool = True
    workers: int = 1
    output: str = "out"

    def __post_init__(self):
        if self.n_runs < 0 or self.horizon <= 0 or self.control_rate <= 0 or self.dt <= 0:
            raise ValueError("n_runs, horizon, control_rate and dt must be positive")
        period = 1.0 / self.control_rate
        if abs(period / self.dt - round(period / self.dt)) > 1e-9:
            raise ValueError("control period must be a multiple of dt")
        if abs(self.decimation * self.control_rate - round(self.decimation * self.control_rate)) > 1e-9:
            raise ValueError("decimation must be a multiple of the control period")
        self.controllers = tuple(
            c if isinstance(c, ControllerConfig) else ControllerConfig(c) for c in self.controllers
        )
        # dipole limits follow the spacecraft
        mu_max = tuple(float(m) for m in self.spacecraft.mu_max)
        self.controllers = tuple(replace(c, mu_max=mu_max) for c in self.controllers)

    def controller(self, name: str) -> ControllerConfig:
        for c in self.controllers:
            if c.name == name:
                return c
        return ControllerConfig(name, mu_max=tuple(self.spacecraft.mu_max))

    def to_dict(self) -> dict:
        sc = self.spacecraft
        return {
            "n_runs": self.n_runs,
            "horizon": self.horizon,
            "control_rate": self.control_rate,
            "dt": self.dt,
            "seed": self.seed,
            "decimation": self.decimation,
            "threshold": self.threshold,
            "estimate_gyro_bias": self.estimate_gyro_bias,
            "workers": self.workers,
            "output": self.output,
            "controllers": [c.to_dict() for c in self.controllers],
            "spacecraft": {
                "inertia": sc.inertia.tolist(),
                "mass": sc.mass,
                "dims": sc.dims.tolist(),
                "drag_coeff": sc.drag_coeff,
                "mu_max": sc.mu_max.tolist(),
                "mag_noise": sc.mag_noise,
                "gyro_noise_density": sc.gyro_noise_density,
                "gyro_bias": sc.gyro_bias,
                "cp_offset": sc.cp_offset.tolist(),
            },
            "env": asdict(self.env),
            "initial": asdict(self.initial),
        }

    @classmethod
    def from_dict(cls, d: dict) -> CampaignConfig:
        d = dict(d)
        sc = d.pop("spacecraft")
        env = d.pop("env")
        initial = d.pop("initial")
        ctrls = d.pop("controllers")
        return cls(
            **d,
            spacecraft=SpacecraftParams(**{k: np.asarray(v) if isinstance(v, list) else v for k, v in sc.items()}),
            env=EnvConfig(**env),
            initial=InitialConditions(**initial),
            controllers=tuple(ControllerConfig(**{**c, "mu_max": tuple(c["mu_max"])}) for c in ctrls),
        )


@dataclass
class RunRecord:
    seed: int
    run_index: int
    controller: str
    t: np.ndarray
    h_norm: np.ndarray
    mu: np.ndarray
    b_norm: np.ndarray
    detumble_time: float | None = None
    final_h: float = math.nan
    effort: float = 0.0
    momentum_increase: bool = False
    active_increase: bool = False
    failed: bool = False
    error: str = ""
    gain: float | None = None

    def summarize(self, threshold: float = DETUMBLE_THRESHOLD) -> None:
        """(Re)compute the summary fields from the sampled series."""
        if len(self.t) == 0:
            return
        self.detumble_time = detumble_time(self, threshold)
        self.final_h = float(self.h_norm[-1])
        self.momentum_increase = momentum_increase(self.h_norm)
        self.active_increase = momentum_increase(self.h_norm, active_below=threshold)


def run_rngs(seed: int, run_index: int) -> tuple[np.random.Generator, np.random.Generator]:
    init_ss, sensor_ss = np.random.SeedSequence([seed, run_index]).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(sensor_ss)


def initial_state(cfg: CampaignConfig, run_index: int) -> SimState:
    rng, _ = run_rngs(cfg.seed, run_index)
    ic = cfg.initial
    return sample_initial_state(
        rng,
        altitude=ic.altitude,
        inclination_range=(ic.inclination_min, ic.inclination_max),
        omega_norm=ic.omega_norm,
    )


def detumble_time(record, threshold: float = DETUMBLE_THRESHOLD) -> float | None:
    """First sample time with ``|h| <= threshold * |h(0)|``; None if never."""
    t = np.asarray(record.t)
    h = np.asarray(record.h_norm)
    if len(t) == 0:
        raise ValueError("empty record")
    below = np.nonzero(h <= threshold * h[0])[0]
    return float(t[below[0]]) if len(below) else None


def momentum_increase(h_norm, ratio: float = INCREASE_RATIO, active_below: float | None = None) -> bool:
    """True if some sample is at least ``ratio`` times the minimum of the
    samples before it.

    With ``active_below`` set, only rises from a running minimum still above
    ``active_below * |h(0)|`` count, which ignores ripple on the noise floor
    after detumbling.
    """
    h = np.asarray(h_norm, dtype=float)
    if len(h) < 2:
        return False
    prior_min = np.minimum.accumulate(h)[:-1]
    rises = h[1:] >= ratio * prior_min
    if active_below is not None:
        rises &= prior_min > active_below * h[0]
    return bool(np.any(rises))


def run_episode(
    init: SimState,
    cfg: CampaignConfig,
    controller: ControllerConfig | str | None = None,
    run_index: int = 0,
) -> RunRecord:
    """Simulate one closed-loop detumble from ``init``.

    Loop at the control rate: measure, compute the dipole, hold it while RK4
    propagates one control period.  Propagation failures are recorded, not
    raised.
    """
    if controller is None:
        controller = cfg.controllers[0]
    elif isinstance(controller, str):
        controller = cfg.controller(controller)
    params = cfg.spacecraft
    env = cfg.env.build()
    prop = Propagator(params, env)
    _, sensor_rng = run_rngs(cfg.seed, run_index)
    bias = draw_gyro_bias(sensor_rng, params)
    ctrl = DetumbleController(
        controller,
        params.inertia,
        estimate_gyro_bias=cfg.estimate_gyro_bias,
        mag_noise=params.mag_noise,
        gyro_sigma=gyro_sigma(params, cfg.control_rate),
    )

    period = 1.0 / cfg.control_rate
    n_sub = int(round(period / cfg.dt))
    n_ctrl = int(round(cfg.horizon * cfg.control_rate))
    every = int(round(cfg.decimation * cfg.control_rate))

    ts, hs, mus, bs = [], [], [], []
    effort = 0.0
    failed, error = False, ""
    x = prop.to_internal(init)
    t = float(init.t)
    for k in range(n_ctrl + 1):
        state = prop.from_internal(t, x)
        b_body = env.field_body(state)
        if k == n_ctrl:
            mu = np.zeros(3)
        else:
            sample = measure(state, params, env, sensor_rng, bias, cfg.control_rate, b_body)
            mu = ctrl(sample)
        if k % every == 0 or k == n_ctrl:
            ts.append(t)
            hs.append(float(np.linalg.norm(x[10:13])))
            mus.append(mu)
            bs.append(float(np.linalg.norm(b_body)))
        if k == n_ctrl:
            break
        effort += float(np.abs(mu).sum()) * period
        try:
            x = prop.propagate_vector(t, x, mu, cfg.dt, n_sub)
        except PropagationError as exc:
            failed, error = True, str(exc)
            log.warning("run %d (%s) aborted: %s", run_index, controller.name, exc)
            break
        t = init.t + (k + 1) * period

    record = RunRecord(
        seed=cfg.seed,
        run_index=run_index,
        controller=controller.name,
        t=np.array(ts),
        h_norm=np.array(hs),
        mu=np.array(mus).reshape(-1, 3),
        b_norm=np.array(bs),
        effort=effort,
        failed=failed,
        error=error,
        gain=controller.gain,
    )
    record.summarize(cfg.threshold)
    return record


def _job(args):
    cfg, controller, run_index = args
    return run_episode(initial_state(cfg, run_index), cfg, controller, run_index)


def _run_jobs(cfg: CampaignConfig, jobs: list) -> list[RunRecord]:
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_job, jobs))
    return [_job(j) for j in jobs]


@dataclass
class CampaignResult:
    config: CampaignConfig
    records: list
    summary: list  # one dict per controller


def summarize_campaign(records: list[RunRecord], cfg: CampaignConfig) -> list[dict]:
    """Per-controller statistics.  Failed runs are counted and excluded.

    ``mean_detumble_time`` counts runs that never reach the threshold as the
    full horizon; ``mean_detumble_time_converged`` averages converged runs
    only.
    """
    rows = []
    names = [c.name for c in cfg.controllers]
    for name in names:
        recs = [r for r in records if r.controller == name]
        ok = [r for r in recs if not r.failed]
        times = [r.detumble_time for r in ok if r.detumble_time is not None]
        censored = [r.detumble_time if r.detumble_time is not None else cfg.horizon for r in ok]
        final = np.array([r.final_h for r in ok])
        rows.append(
            {
                "controller": name,
                "runs": len(recs),
                "failed": len(recs) - len(ok),
                "converged": len(times),
                "mean_detumble_time": float(np.mean(censored)) if ok else math.nan,
                "mean_detumble_time_converged": float(np.mean(times)) if times else math.nan,
                "median_detumble_time": float(np.median(times)) if times else math.nan,
                "median_final_h": float(np.median(final)) if ok else math.nan,
                "min_final_h": float(final.min()) if ok else math.nan,
                "max_final_h": float(final.max()) if ok else math.nan,
                "increase_fraction": float(np.mean([r.momentum_increase for r in ok])) if ok else math.nan,
                "active_increase_fraction": float(np.mean([r.active_increase for r in ok])) if ok else math.nan,
                "mean_effort": float(np.mean([r.effort for r in ok])) if ok else math.nan,
            }
        )
    return rows


def run_monte_carlo(cfg: CampaignConfig) -> CampaignResult:
    """Every controller from the same ``cfg.n_runs`` initial states."""
    jobs = [(cfg, c, i) for i in range(cfg.n_runs) for c in cfg.controllers]
    records = _run_jobs(cfg, jobs)
    return CampaignResult(cfg, records, summarize_campaign(records, cfg))


def run_gain_sweep(cfg: CampaignConfig, controller: ControllerConfig | str, gains, run_index: int = 0) -> list[RunRecord]:
    """One record per gain, all from initial condition ``run_index``."""
    if isinstance(controller, str):
        controller = cfg.controller(controller)
    jobs = [(cfg, controller.with_gain(float(g)), run_index) for g in gains]
    return _run_jobs(cfg, jobs)


def sweep_table(records: list[RunRecord]) -> list[dict]:
    return [
        {
            "controller": r.controller,
            "gain": r.gain,
            "final_h": r.final_h,
            "detumble_time": r.detumble_time,
            "failed": r.failed,
        }
        for r in records
    ]


# --------------------------------------------------------------------------
# output files

SERIES_COLUMNS = ("t_s", "h_norm_Nms", "mu_x_Am2", "mu_y_Am2", "mu_z_Am2", "B_norm_T")
SUMMARY_COLUMNS = (
    "controller",
    "runs",
    "failed",
    "converged",
    "mean_detumble_time",
    "mean_detumble_time_converged",
    "median_detumble_time",
    "median_final_h",
    "min_final_h",
    "max_final_h",
    "increase_fraction",
    "active_increase_fraction",
    "mean_effort",
)
RUNS_COLUMNS = (
    "controller",
    "run_index",
    "gain",
    "detumble_time_s",
    "final_h_Nms",
    "effort_Am2s",
    "momentum_increase",
    "active_increase",
    "failed",
    "error",
    "file",
)


def run_filename(record: RunRecord) -> str:
    return f"{record.controller}_{record.run_index:04d}.csv"


def write_run_csv(record: RunRecord, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SERIES_COLUMNS)
        for t, h, mu, b in zip(record.t, record.h_norm, record.mu, record.b_norm):
            w.writerow([repr(float(t)), repr(float(h)), *(repr(float(m)) for m in mu), repr(float(b))])


def read_run_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_outputs(result: CampaignResult, path) -> Path:
    """Per-run CSVs under ``runs/``, ``summary.csv``, ``runs.csv`` and ``manifest.json``."""
    out = Path(path)
    try:
        (out / "runs").mkdir(parents=True, exist_ok=True)
        for r in result.records:
            write_run_csv(r, out / "runs" / run_filename(r))
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
            w.writeheader()
            for row in result.summary:
                w.writerow({k: _fmt(v) for k, v in row.items()})
        with open(out / "runs.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RUNS_COLUMNS)
            for r in result.records:
                w.writerow(
                    [r.controller, r.run_index, _fmt(r.gain), _fmt(r.detumble_time), _fmt(r.final_h),
                     _fmt(r.effort), int(r.momentum_increase), int(r.active_increase), int(r.failed), r.error, f"runs/{run_filename(r)}"]
                )
        manifest = {
            "config": result.config.to_dict(),
            "run_indices": sorted({r.run_index for r in result.records}),
            "summary": result.summary,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_json_default))
    except OSError as exc:
        raise OSError(f"failed writing outputs to {out}: {exc}") from exc
    return out


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v))


def load_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    return json.loads(path.read_text())


def rerun_from_manifest(path) -> CampaignResult:
    """Re-execute the campaign described by a manifest."""
    cfg = CampaignConfig.from_dict(load_manifest(path)["config"])
    return run_monte_carlo(cfg)
