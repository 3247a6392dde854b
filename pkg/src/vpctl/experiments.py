"""Config-driven experiment runner.

A config is a nested mapping (TOML or JSON on disk) with the sections
``experiment``, ``grid``, ``equilibrium``, ``initial``, ``controller``,
``solver``, ``training`` and ``noise``. ``experiment.preset`` pulls in a named
preset from :mod:`vpctl.presets`; any explicit keys override it. Unknown
keys are errors reported with their dotted path.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controllers import KINDS, NoisyFeedback, make_controller
from .diagnostics import checkpoint_read, checkpoint_write, write_field_snapshot, write_series_csv
from .equilibria import PRESET_EQUILIBRIA, EquilibriumSpec, PerturbationSpec, initial_condition
from .grid import PhaseGrid, integrate_v
from .presets import PRESETS, _merge, preset_config
from .solver import NumericalBlowup, SolverConfig, VlasovPoisson
from .training import TRAINABLE, TrainConfig, Trainer

log = logging.getLogger(__name__)

_NUM = (int, float)

# section -> key -> accepted types
SCHEMA = {
    "experiment": {"name": str, "preset": str, "scale": str, "seed": int, "out": str,
                   "snapshot_times": list, "compare": list},
    "grid": {"dim": int, "nx": int, "nv": int, "x_bounds": list, "v_bounds": list},
    "equilibrium": {"kind": str, "params": dict},
    "initial": {"preset": str, "eps": _NUM},
    "controller": {"kind": str, "gamma": _NUM, "eps_bias": _NUM, "checkpoint": str},
    "solver": {"dt": _NUM, "t_end": _NUM, "record_every": int, "bc": str,
               "blowup_threshold": _NUM},
    "training": {"horizon": _NUM, "iterations": int, "adagrad_steps": int, "lr_adagrad": _NUM,
                 "lr_adam": _NUM, "eval_every": int, "eps_p": _NUM, "k_modes": int,
                 "n_modes": int},
    "noise": {"sigma": list, "controllers": list, "replicas": int},
}

_DEFAULT_INITIAL = {
    "two_stream_1d": "two_stream_default",
    "bump_on_tail_1d": "bump_on_tail_default",
    "two_stream_2d": "two_stream_2d_default",
}

# fixed seed offsets for noise replicas: sigma index, controller index, replica
_SIGMA_STRIDE, _CTRL_STRIDE, _NOISE_BASE = 1000, 100, 10_000


class ConfigError(ValueError):
    """Invalid experiment configuration; the message starts with the field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config ({exc.strerror})") from exc
    if path.suffix == ".json":
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
    import tomli

    try:
        return tomli.loads(text.decode("utf-8"))
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from exc


def check_keys(raw: dict) -> None:
    """Reject unknown sections/keys and values of the wrong type."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping of sections")
    for section, body in raw.items():
        if section not in SCHEMA:
            raise ConfigError(section, f"unknown section; expected one of {sorted(SCHEMA)}")
        if not isinstance(body, dict):
            raise ConfigError(section, "section must be a table")
        for key, val in body.items():
            where = f"{section}.{key}"
            if key not in SCHEMA[section]:
                raise ConfigError(where, f"unknown key; expected one of {sorted(SCHEMA[section])}")
            want = SCHEMA[section][key]
            if isinstance(val, bool) or not isinstance(val, want):
                names = want.__name__ if isinstance(want, type) else "number"
                raise ConfigError(where, f"expected {names}, got {type(val).__name__}")


@dataclass
class ExperimentConfig:
    name: str
    scale: str
    seed: int
    out: Path
    grid: PhaseGrid
    equilibrium: EquilibriumSpec
    initial: str
    eps: float | None
    controller: dict
    solver: SolverConfig
    bc: str
    snapshot_times: list = field(default_factory=list)
    compare: list = field(default_factory=list)
    training: dict | None = None
    noise: dict | None = None
    raw: dict = field(default_factory=dict)

    def train_config(self, kind: str) -> TrainConfig:
        t = self.training or {}
        pert = PerturbationSpec(
            eps_p=float(t.get("eps_p", 1e-3)), k_modes=t.get("k_modes", 11),
            n_modes=t.get("n_modes", 6), rng_seed=self.seed,
        )
        opts = {k: t[k] for k in ("iterations", "adagrad_steps", "eval_every") if k in t}
        opts.update({k: float(t[k]) for k in ("horizon", "lr_adagrad", "lr_adam") if k in t})
        return TrainConfig(
            controller=kind, preset=self.initial, grid=self.grid, dt=self.solver.dt,
            perturbation=pert, seed=self.seed, bc=self.bc, equilibrium=self.equilibrium,
            eps=self.eps, **opts,
        )


def _guard(where: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        raise ConfigError(where, str(msg)) from exc


def resolve_config(raw: dict, *, scale: str | None = None, seed: int | None = None,
                   out=None) -> ExperimentConfig:
    """Validate a raw mapping, expand its preset and apply command-line overrides."""
    check_keys(raw)
    raw = copy.deepcopy(raw)
    exp = raw.get("experiment", {})
    preset = exp.get("preset")
    scale = scale or exp.get("scale", "desk")
    if scale not in ("desk", "paper"):
        raise ConfigError("experiment.scale", f"must be 'desk' or 'paper', got {scale!r}")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError("experiment.preset", f"unknown preset {preset!r}")
        raw = _merge(preset_config(preset, scale), raw)
    exp = raw.setdefault("experiment", {})
    if seed is not None:
        exp["seed"] = seed
    if out is not None:
        exp["out"] = str(out)

    eq_sec, ini_sec = raw.get("equilibrium", {}), raw.get("initial", {})
    if "kind" in eq_sec:
        eq_kind = eq_sec["kind"]
    elif "preset" in ini_sec:
        eq_kind = _guard("initial.preset", PRESET_EQUILIBRIA.__getitem__, ini_sec["preset"])
    else:
        raise ConfigError("equilibrium.kind", "missing (give equilibrium.kind or initial.preset)")
    spec = _guard("equilibrium", EquilibriumSpec, eq_kind, eq_sec.get("params", {}))
    ini = ini_sec.get("preset", _DEFAULT_INITIAL.get(eq_kind))
    if ini not in PRESET_EQUILIBRIA:
        raise ConfigError("initial.preset", f"unknown initial condition {ini!r}")
    if PRESET_EQUILIBRIA[ini] != eq_kind:
        raise ConfigError("initial.preset", f"{ini!r} perturbs {PRESET_EQUILIBRIA[ini]}, not {eq_kind}")

    g = dict(raw.get("grid", {}))
    g.setdefault("dim", spec.dim)
    if g["dim"] != spec.dim:
        raise ConfigError("grid.dim", f"equilibrium {eq_kind} needs dim={spec.dim}")
    for key in ("x_bounds", "v_bounds"):
        if key in g:
            if len(g[key]) != 2:
                raise ConfigError(f"grid.{key}", "expected [lower, upper]")
            g[key] = tuple(float(b) for b in g[key])
    grid = _guard("grid", PhaseGrid, **g)

    s = raw.get("solver", {})
    bc = s.get("bc", "dirichlet" if grid.dim == 1 else "periodic")
    if bc not in ("dirichlet", "periodic"):
        raise ConfigError("solver.bc", f"must be 'dirichlet' or 'periodic', got {bc!r}")
    if grid.dim == 2 and bc != "periodic":
        raise ConfigError("solver.bc", "2D runs use periodic boundaries")
    solver = _guard("solver", SolverConfig, dt=float(s.get("dt", 0.2)),
                    t_end=float(s.get("t_end", 70.0)), record_every=s.get("record_every", 1),
                    blowup_threshold=float(s.get("blowup_threshold", 1e6)))

    ctrl = {"kind": "zero", "gamma": 1.0, "eps_bias": 1e-8, **raw.get("controller", {})}
    kinds = [ctrl["kind"]] + list(exp.get("compare", []))
    noise = raw.get("noise")
    if noise is not None:
        noise = {"controllers": [ctrl["kind"]], "replicas": 1, **noise}
        if "sigma" not in noise or not noise["sigma"]:
            raise ConfigError("noise.sigma", "give at least one noise level")
        for i, sig in enumerate(noise["sigma"]):
            if isinstance(sig, bool) or not isinstance(sig, _NUM) or sig < 0:
                raise ConfigError(f"noise.sigma[{i}]", "expected a non-negative number")
        if noise["replicas"] < 1:
            raise ConfigError("noise.replicas", "must be >= 1")
        kinds += list(noise["controllers"])
    for i, k in enumerate(kinds):
        where = "controller.kind" if i == 0 else "experiment.compare / noise.controllers"
        if k not in KINDS:
            raise ConfigError(where, f"unknown controller kind {k!r}; expected one of {KINDS}")
        if grid.dim == 2 and k in TRAINABLE:
            raise ConfigError(where, f"{k} is defined on 1D grids only")
    if ctrl.get("checkpoint") and ctrl["kind"] not in TRAINABLE:
        raise ConfigError("controller.checkpoint", f"{ctrl['kind']} has no parameters to load")
    if any(k in TRAINABLE for k in kinds) and "training" not in raw and not ctrl.get("checkpoint"):
        raise ConfigError("training", "trainable controllers need a [training] section "
                                      "or controller.checkpoint")

    times = [float(t) for t in exp.get("snapshot_times", [])]
    for i, t in enumerate(times):
        if not 0 <= t <= solver.t_end + 1e-9:
            raise ConfigError(f"experiment.snapshot_times[{i}]", f"{t} lies outside [0, t_end]")

    name = exp.get("name", preset or "experiment")
    cfg = ExperimentConfig(
        name=name, scale=scale, seed=int(exp.get("seed", 0)),
        out=Path(exp.get("out", Path("runs") / name)), grid=grid, equilibrium=spec,
        initial=ini, eps=None if "eps" not in ini_sec else float(ini_sec["eps"]),
        controller=ctrl, solver=solver, bc=bc, snapshot_times=times,
        compare=list(exp.get("compare", [])), training=raw.get("training"), noise=noise, raw=raw,
    )
    if cfg.training is not None:
        for k in TRAINABLE:
            if k in kinds:
                _guard("training", cfg.train_config, k)
    return cfg


def thread_count() -> int:
    """Worker threads for sweep replicas, from ``VPCTL_THREADS`` (default 1)."""
    val = os.environ.get("VPCTL_THREADS", "1")
    try:
        n = int(val)
    except ValueError:
        raise ConfigError("VPCTL_THREADS", f"expected an integer, got {val!r}") from None
    return max(1, n)


# -- running ---------------------------------------------------------------------

def _tag(t: float) -> str:
    return f"{t:g}".replace(".", "p")


class _Snapshots:
    """``on_step`` callback writing field snapshots at the configured times."""

    def __init__(self, cfg: ExperimentConfig, system: VlasovPoisson, out: Path):
        self.cfg, self.system, self.out = cfg, system, out
        dt = cfg.solver.dt
        self.wanted = {int(round(t / dt)): t for t in cfg.snapshot_times}
        self.written = []

    def __call__(self, n, t, f):
        if n not in self.wanted:
            return
        grid, tag = self.cfg.grid, _tag(self.wanted[n])
        if grid.dim == 1:
            self.written.append(write_field_snapshot(f, self.out / f"f_t{tag}")[0])
            return
        drho = integrate_v(grid, f - self.system.fbar)
        self.written.append(write_field_snapshot(drho, self.out / f"delta_rho_t{tag}")[0])
        ix = int(np.argmin(np.abs(grid.x - 6 * np.pi)))
        iy = int(np.argmin(np.abs(grid.x - 5 * np.pi)))
        self.written.append(write_field_snapshot(f[ix, iy], self.out / f"f_slice_t{tag}")[0])


class Experiment:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.system = VlasovPoisson(cfg.grid, cfg.equilibrium, cfg.bc)
        self.f0 = initial_condition(cfg.initial, cfg.grid, eps=cfg.eps, spec=cfg.equilibrium)
        self._controllers = {}
        self.training = {}

    def controller(self, kind: str):
        """Build (training or loading on first use) the controller of a given kind."""
        if kind in self._controllers:
            return self._controllers[kind]
        cfg, c = self.cfg, self.cfg.controller
        ctrl = make_controller(kind, cfg.grid, cfg.equilibrium, gamma=c["gamma"],
                               eps_bias=c["eps_bias"], bc=cfg.bc, seed=cfg.seed)
        if kind in TRAINABLE:
            main = kind == c["kind"]
            if main and c.get("checkpoint"):
                try:
                    ctrl.set_parameters(_load_parameters(c["checkpoint"], kind))
                except ValueError as exc:
                    raise ConfigError("controller.checkpoint", str(exc)) from exc
            else:
                suffix = "" if main else f"_{kind}"
                log.info("training %s controller", kind)
                best, record = Trainer(cfg.train_config(kind), ctrl).train()
                record.write_csv(cfg.out / f"train_record{suffix}.csv")
                payload = ctrl.params if kind == "low_rank_operator" else best
                checkpoint_write(payload, cfg.out / f"checkpoint{suffix}.bin", kind)
                self.training[kind] = {
                    "best_iteration": record.best_iteration,
                    "best_future_loss": record.best_future_loss,
                    "iterations": len(record.running_loss),
                    "skipped": int(sum(record.skipped)),
                }
        self._controllers[kind] = ctrl
        return ctrl

    def simulate(self, controller, path: Path, on_step=None):
        try:
            _, series = self.system.run_forward(self.f0, controller, self.cfg.solver, on_step)
        except NumericalBlowup as exc:
            if exc.diagnostics is not None:
                write_series_csv(exc.diagnostics, path)
            raise
        write_series_csv(series, path)
        return series

    def _noise_job(self, job):
        sigma, kind, replica, seed, path = job
        rng = np.random.default_rng(seed)
        noisy = NoisyFeedback(self.controller(kind), sigma, rng)
        try:
            series = self.simulate(noisy, path)
        except NumericalBlowup as exc:
            return {"sigma": sigma, "controller": kind, "replica": replica, "seed": seed,
                    "blowup_step": exc.step, "final_l2": math.inf}
        return {"sigma": sigma, "controller": kind, "replica": replica, "seed": seed,
                "final_l2": series.l2_perturbation[-1]}

    def noise_sweep(self):
        noise, out = self.cfg.noise, self.cfg.out
        for kind in noise["controllers"]:
            self.controller(kind)  # train or load before fanning out
        jobs = []
        for i, sigma in enumerate(noise["sigma"]):
            sub = out / f"sigma_{sigma:g}"
            sub.mkdir(parents=True, exist_ok=True)
            for j, kind in enumerate(noise["controllers"]):
                for r in range(noise["replicas"]):
                    seed = self.cfg.seed + _NOISE_BASE + _SIGMA_STRIDE * i + _CTRL_STRIDE * j + r
                    name = f"series_{kind}.csv" if noise["replicas"] == 1 else f"series_{kind}_r{r}.csv"
                    jobs.append((float(sigma), kind, r, seed, sub / name))
        with ThreadPoolExecutor(max_workers=thread_count()) as pool:
            return list(pool.map(self._noise_job, jobs))

    def run(self) -> dict:
        cfg = self.cfg
        start = time.perf_counter()
        try:
            cfg.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError("experiment.out", f"cannot create {cfg.out}: {exc.strerror}") from exc
        kind = cfg.controller["kind"]
        snaps = _Snapshots(cfg, self.system, cfg.out)
        series = self.simulate(self.controller(kind), cfg.out / "series.csv", snaps)
        l2 = series.l2_perturbation
        summary = {
            "name": cfg.name, "scale": cfg.scale, "seed": cfg.seed, "controller": kind,
            "t_end": series.t[-1], "initial_l2": l2[0], "final_l2": l2[-1],
            "growth": l2[-1] / l2[0] if l2[0] else math.inf,
            "snapshots": [p.name for p in snaps.written],
            "compare": {},
        }
        for other in cfg.compare:
            s = self.simulate(self.controller(other), cfg.out / f"series_{other}.csv")
            summary["compare"][other] = {"final_l2": s.l2_perturbation[-1]}
        if cfg.noise is not None:
            summary["noise"] = self.noise_sweep()
        summary["training"] = self.training
        summary["wall_time"] = time.perf_counter() - start
        (cfg.out / "summary.json").write_text(json.dumps(summary, indent=2, default=float) + "\n")
        return summary


def _load_parameters(path, kind):
    params = checkpoint_read(path, kind)
    return params.to_vector() if kind == "low_rank_operator" else params


def run_experiment(cfg: ExperimentConfig | dict) -> dict:
    """Run an experiment end to end and return its summary."""
    if isinstance(cfg, dict):
        cfg = resolve_config(cfg)
    return Experiment(cfg).run()


def summary_line(summary: dict) -> str:
    return (f"{summary['name']}: final l2_perturbation {summary['final_l2']:.6e} "
            f"at t={summary['t_end']:g} ({summary['growth']:.3g}x initial), "
            f"wall time {summary['wall_time']:.1f} s")
