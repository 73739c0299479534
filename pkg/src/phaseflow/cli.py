"""Scenario runner: reproducible command-line workflows over the library.

Five subcommands, one responsibility each:

- ``simulate``   integrate a trajectory ensemble (retro or forward_guided)
                 or an interacting particle system (meanfield) and write
                 CSV plus summary metrics
- ``fp-oracle``  evolve the position marginal under the guided drift and
                 report its L1 distance from the analytic law, the referee
                 check between the two drift sign conventions
- ``chaos``      run the particle-count convergence experiment and write
                 its report
- ``compare``    per-time transport and KS distances between two ensemble
                 CSVs
- ``husimi``     dump the coherent-state phase-space density on a grid

Every run writes a manifest recording the package version, the effective
configuration (defaults, then TOML file values, then flags, later wins),
wall-clock duration, and a sha256 digest per emitted file. With the
configuration and seed fixed, every digest-listed artifact is
byte-reproducible. Exit codes: 0 success, 2 configuration error, 3
numerical error during execution. No environment variables are read.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np
import tomli
from scipy.special import ndtr

from . import __version__, core, meanfield, metrics, sde
from .core import DRIFT_CONVENTIONS, GaussianMarginal, GaussianPhaseSolution, TimeGrid
from .errors import ConfigError, PhaseflowError, UnsupportedModelError

SCENARIOS = ("amplifier", "free_particle")
CLI_MODES = ("retro", "forward_guided", "meanfield", "fp_oracle")

_DEFAULT_THREADS = os.cpu_count() or 1

_DEFAULTS = {
    "scenario": "amplifier",
    "mode": "forward_guided",
    "t0": 0.0,
    "tf": 1.0,
    "dt": 1e-3,
    "n_traj": 1000,
    "n_particles": 200,
    "n_reps": 1,
    "p0": 1.0,
    "q0": 1.0,
    "seed": 0,
    "drift_sign_convention": "anderson",
    "bandwidth_rule": "n^-1/5",
    "out_dir": ".",
    "threads": _DEFAULT_THREADS,
}

# chunk memory is chunk * n_nodes * 2 doubles; cap it near 64 MB
_CHUNK_BUDGET = 4_000_000


def _as_float(key: str, value) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a real number, got {value!r}") from None
    if not np.isfinite(out):
        raise ConfigError(f"{key}: must be finite, got {value!r}")
    return out


def _as_int(key: str, value, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    out = int(value)
    if out < minimum:
        raise ConfigError(f"{key}: must be >= {minimum}, got {out}")
    return out


def _as_choice(key: str, value, choices) -> str:
    if value not in choices:
        raise ConfigError(f"{key}: must be one of {choices}, got {value!r}")
    return value


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated description of one simulation run.

    p0 and q0 anchor the reference solution at time zero; the boundary
    laws and reference marginals at other times follow from the
    scenario's analytic flow.
    """

    scenario: str
    mode: str
    t0: float
    tf: float
    dt: float
    n_traj: int
    n_particles: int
    n_reps: int
    p0: float
    q0: float
    seed: int
    drift_sign_convention: str
    bandwidth_rule: str
    out_dir: str
    threads: int

    def __post_init__(self):
        _as_choice("scenario", self.scenario, SCENARIOS)
        _as_choice("mode", self.mode, CLI_MODES)
        for key in ("t0", "tf", "dt", "p0", "q0"):
            object.__setattr__(self, key, _as_float(key, getattr(self, key)))
        for key in ("n_traj", "n_particles", "n_reps", "threads"):
            object.__setattr__(self, key, _as_int(key, getattr(self, key)))
        if not self.tf > self.t0:
            raise ConfigError(f"tf: must exceed t0 ({self.t0}), got {self.tf}")
        if not self.dt > 0.0:
            raise ConfigError(f"dt: must be positive, got {self.dt}")
        seed = _as_int("seed", self.seed, minimum=0)
        if seed >= 2**64:
            raise ConfigError(f"seed: must fit in 64 unsigned bits, got {seed}")
        object.__setattr__(self, "seed", seed)
        _as_choice(
            "drift_sign_convention", self.drift_sign_convention, DRIFT_CONVENTIONS
        )
        _as_choice("bandwidth_rule", self.bandwidth_rule, meanfield.BANDWIDTH_RULES)
        if not isinstance(self.out_dir, (str, os.PathLike)):
            raise ConfigError(f"out_dir: expected a path, got {self.out_dir!r}")
        object.__setattr__(self, "out_dir", os.fspath(self.out_dir))

    @classmethod
    def from_mapping(cls, values) -> "ScenarioConfig":
        values = dict(values)
        known = set(_DEFAULTS)
        for key in values:
            if key not in known:
                raise ConfigError(f"{key}: unknown configuration key")
        merged = {**_DEFAULTS, **values}
        return cls(**merged)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RunManifest:
    """What a run produced: effective config, version, timing, file digests."""

    config: dict
    version: str
    duration_seconds: float
    digests: dict

    def as_dict(self) -> dict:
        return {
            "config": self.config,
            "version": self.version,
            "duration_seconds": self.duration_seconds,
            "digests": self.digests,
        }

    def write(self, path) -> None:
        _write_json(path, self.as_dict())


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _reference_solution(config: ScenarioConfig) -> GaussianPhaseSolution:
    if config.scenario == "amplifier":
        return core.amplifier_solution(config.p0, config.q0)
    p0, q0 = config.p0, config.q0
    return GaussianPhaseSolution(
        p_marginal=GaussianMarginal(mean=lambda t: p0 + 0.0 * t, variance=1.0),
        q_marginal=GaussianMarginal(mean=lambda t: q0 + p0 * t, variance=1.0),
    )


def _build_model(config: ScenarioConfig) -> core.DiffusionModel:
    if config.scenario == "amplifier":
        return core.amplifier_model()
    return core.free_particle_model(1.0)


def _build_grid(config: ScenarioConfig) -> TimeGrid:
    try:
        return TimeGrid(config.t0, config.tf, config.dt)
    except PhaseflowError as exc:
        raise ConfigError(f"t0/tf/dt: {exc}") from exc


def _reference_laws(config: ScenarioConfig) -> dict:
    """Mean and sd of the exact forward law at tf, per coordinate."""
    span = config.tf - config.t0
    if config.scenario == "amplifier":
        return {
            "q": (config.q0 * float(np.exp(config.tf)), 1.0),
            "p": (config.p0 * float(np.exp(-config.tf)), 1.0),
        }
    # free flight spreads the position by the momentum scatter
    return {
        "q": (config.q0 + config.p0 * config.tf, float(np.sqrt(1.0 + span * span))),
        "p": (config.p0, 1.0),
    }


def _coordinate_metrics(samples: np.ndarray, mean: float, sd: float) -> dict:
    cdf = lambda x: ndtr((np.asarray(x, dtype=float) - mean) / sd)
    return {
        "sample_mean": float(samples.mean()),
        "sample_sd": float(samples.std(ddof=1)) if samples.size > 1 else 0.0,
        "reference_mean": mean,
        "reference_sd": sd,
        "w1_vs_reference": metrics.wasserstein1_gaussian(samples, mean, sd),
        "ks_vs_reference": metrics.ks_statistic(samples, cdf),
    }


def _chunk_size(n_nodes: int) -> int:
    return max(1, min(2048, _CHUNK_BUDGET // max(1, n_nodes)))


def _run_trajectories(config: ScenarioConfig, out_dir: str) -> dict:
    model = _build_model(config)
    grid = _build_grid(config)
    solution = _reference_solution(config)
    sampler = sde.BoundarySampler(solution.p_marginal, solution.q_marginal)
    times = grid.times
    n_nodes = times.size
    p_final = np.empty(config.n_traj)
    q_final = np.empty(config.n_traj)
    traj_path = os.path.join(out_dir, "trajectories.csv")
    with open(traj_path, "w") as fh:
        fh.write("traj_id,t,p,q\n")

        def consume(start, P, Q):
            stop = start + P.shape[0]
            p_final[start:stop] = P[:, -1]
            q_final[start:stop] = Q[:, -1]
            for i in range(P.shape[0]):
                tid = start + i
                pi, qi = P[i], Q[i]
                fh.writelines(
                    f"{tid},{times[k]:.17g},{pi[k]:.17g},{qi[k]:.17g}\n"
                    for k in range(n_nodes)
                )

        if config.mode == "retro" and not model.product_form:
            raise UnsupportedModelError(
                f"model {model.name!r} is not product form; retro integration "
                "needs a1 = a1(p), a2 = a2(q)"
            )
        sde._run_chunks(
            config.mode,
            model,
            grid,
            sampler,
            solution.q_marginal,
            config.n_traj,
            config.seed,
            config.drift_sign_convention,
            _chunk_size(n_nodes),
            consume,
        )
    laws = _reference_laws(config)
    report = {
        "scenario": config.scenario,
        "mode": config.mode,
        "t_final": config.tf,
        "n_traj": config.n_traj,
        "q": _coordinate_metrics(q_final, *laws["q"]),
        "p": _coordinate_metrics(p_final, *laws["p"]),
    }
    metrics_path = os.path.join(out_dir, "metrics.json")
    _write_json(metrics_path, report)
    return {"trajectories.csv": traj_path, "metrics.json": metrics_path}


def _run_meanfield(config: ScenarioConfig, out_dir: str) -> dict:
    model = _build_model(config)
    grid = _build_grid(config)
    solution = _reference_solution(config)
    sampler = sde.BoundarySampler(solution.p_marginal, solution.q_marginal)
    n = config.n_particles
    streams = meanfield.ParticleStreams(config.seed, n)
    kernel = meanfield.MollifierKernel(
        meanfield.bandwidth_from_rule(config.bandwidth_rule, n)
    )
    system = meanfield.initial_system(sampler, n, kernel, streams, config.t0)
    particles_path = os.path.join(out_dir, "particles.csv")
    with open(particles_path, "w") as fh:
        fh.write("step,particle_id,q,p\n")

        def emit(step, s):
            q, p = s.positions, s.momenta
            for i in range(n):
                fh.write(f"{step},{i},{q[i]:.17g},{p[i]:.17g}\n")

        emit(0, system)
        for step in range(1, grid.n_steps + 1):
            system = meanfield.step_nsystem(
                model, system, grid.dt, streams, config.drift_sign_convention
            )
            emit(step, system)
    laws = _reference_laws(config)
    report = {
        "scenario": config.scenario,
        "mode": config.mode,
        "t_final": config.tf,
        "n_particles": n,
        "bandwidth": kernel.bandwidth,
        "q": _coordinate_metrics(system.positions, *laws["q"]),
        "p": _coordinate_metrics(system.momenta, *laws["p"]),
    }
    metrics_path = os.path.join(out_dir, "metrics.json")
    _write_json(metrics_path, report)
    return {"particles.csv": particles_path, "metrics.json": metrics_path}


def _run_fp_oracle(config: ScenarioConfig, out_dir: str) -> dict:
    model = _build_model(config)
    _build_grid(config)  # t0/tf/dt validation; the flow picks its own step
    solution = _reference_solution(config)
    flowed = core.guided_marginal_flow(
        model,
        solution,
        config.t0,
        config.tf,
        drift_sign_convention=config.drift_sign_convention,
    )
    reference = core.marginal_density_grid(
        solution.q_marginal, config.tf, flowed.q_grid, quad_tol=0.05
    )
    l1 = core.l1_distance(flowed, reference)
    density_path = os.path.join(out_dir, "density.csv")
    flowed.to_csv(density_path)
    report = {
        "scenario": config.scenario,
        "mode": config.mode,
        "t0": config.t0,
        "tf": config.tf,
        "drift_sign_convention": config.drift_sign_convention,
        "l1_error": l1,
        "convention_inconsistent": bool(l1 > 0.1),
    }
    metrics_path = os.path.join(out_dir, "metrics.json")
    _write_json(metrics_path, report)
    return {"density.csv": density_path, "metrics.json": metrics_path}


def run(config: ScenarioConfig) -> RunManifest:
    """Execute one configured simulation and write its artifacts.

    Emits the mode's data files plus metrics.json and manifest.json into
    config.out_dir. Raises ConfigError for malformed configuration and
    lets numerical errors from the library propagate.
    """
    start = time.perf_counter()
    os.makedirs(config.out_dir, exist_ok=True)
    if config.mode in ("retro", "forward_guided"):
        outputs = _run_trajectories(config, config.out_dir)
    elif config.mode == "meanfield":
        outputs = _run_meanfield(config, config.out_dir)
    else:
        outputs = _run_fp_oracle(config, config.out_dir)
    digests = {name: _sha256(path) for name, path in sorted(outputs.items())}
    manifest = RunManifest(
        config=config.as_dict(),
        version=__version__,
        duration_seconds=time.perf_counter() - start,
        digests=digests,
    )
    manifest.write(os.path.join(config.out_dir, "manifest.json"))
    return manifest


def compare(ensemble_a, ensemble_b, times, out) -> dict:
    """Distributional distances between two ensemble CSVs, per time.

    Both files must carry the identical time grid. For each requested
    node time the report holds W1 and KS distances between the q-samples
    and between the p-samples; `equivalent_within` is the largest of all
    reported distances, the tightest uniform bound the data certifies.
    """
    grid_a, p_a, q_a = sde.load_ensemble_csv(ensemble_a)
    grid_b, p_b, q_b = sde.load_ensemble_csv(ensemble_b)
    if grid_a != grid_b:
        raise ConfigError(
            f"ensembles do not share a time grid: {ensemble_a} has {grid_a}, "
            f"{ensemble_b} has {grid_b}"
        )
    if times is None or len(times) == 0:
        times = [grid_a.tf]
    cols = []
    for t in times:
        try:
            cols.append(grid_a.index_of(float(t)))
        except PhaseflowError as exc:
            raise ConfigError(f"times: {exc}") from exc
    report = {
        "ensemble_a": os.fspath(ensemble_a),
        "ensemble_b": os.fspath(ensemble_b),
        "times": [float(t) for t in times],
        "q_w1": [],
        "q_ks": [],
        "p_w1": [],
        "p_ks": [],
    }
    for k in cols:
        report["q_w1"].append(metrics.wasserstein1(q_a[:, k], q_b[:, k]))
        report["q_ks"].append(metrics.ks_two_sample(q_a[:, k], q_b[:, k]))
        report["p_w1"].append(metrics.wasserstein1(p_a[:, k], p_b[:, k]))
        report["p_ks"].append(metrics.ks_two_sample(p_a[:, k], p_b[:, k]))
    report["equivalent_within"] = max(
        report["q_w1"] + report["q_ks"] + report["p_w1"] + report["p_ks"]
    )
    if out is not None:
        _write_json(out, report)
    return report


def _chaos_settings(args) -> dict:
    file_values = _load_config_file(args.config) if args.config else {}
    allowed = {
        "scenario", "t0", "tf", "dt", "n_particles", "n_reps", "p0", "q0",
        "seed", "drift_sign_convention", "bandwidth_rule", "out_dir", "threads",
    }
    for key in file_values:
        if key not in allowed:
            raise ConfigError(f"{key}: unknown configuration key")
    defaults = {k: _DEFAULTS[k] for k in allowed}
    # short horizon by default: the experiment's signal lives before the
    # self-read score lets collective fluctuations grow
    defaults.update({"tf": 0.25, "dt": 2e-3, "n_particles": "20,80", "n_reps": 2})
    flags = {
        k: getattr(args, k)
        for k in allowed
        if getattr(args, k, None) is not None
    }
    merged = {**defaults, **file_values, **flags}
    merged["scenario"] = _as_choice("scenario", merged["scenario"], SCENARIOS)
    for key in ("t0", "tf", "dt", "p0", "q0"):
        merged[key] = _as_float(key, merged[key])
    merged["n_reps"] = _as_int("n_reps", merged["n_reps"])
    merged["seed"] = _as_int("seed", merged["seed"], minimum=0)
    merged["threads"] = _as_int("threads", merged["threads"])
    _as_choice("drift_sign_convention", merged["drift_sign_convention"], DRIFT_CONVENTIONS)
    _as_choice("bandwidth_rule", merged["bandwidth_rule"], meanfield.BANDWIDTH_RULES)
    merged["n_particles"] = _particle_list("n_particles", merged["n_particles"])
    return merged


def _particle_list(key: str, value) -> list:
    if isinstance(value, str):
        parts = [part.strip() for part in value.split(",") if part.strip()]
        try:
            value = [int(part) for part in parts]
        except ValueError:
            raise ConfigError(
                f"{key}: expected comma-separated integers, got {value!r}"
            ) from None
    elif isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        value = [int(value)]
    elif isinstance(value, (list, tuple)):
        value = [_as_int(key, v) for v in value]
    else:
        raise ConfigError(f"{key}: expected a particle-count list, got {value!r}")
    if len(value) < 2:
        raise ConfigError(f"{key}: the convergence ladder needs at least 2 counts")
    return value


def _run_chaos(args) -> int:
    start = time.perf_counter()
    settings = _chaos_settings(args)
    out_dir = os.fspath(settings["out_dir"])
    os.makedirs(out_dir, exist_ok=True)
    config = ScenarioConfig.from_mapping(
        {
            k: v
            for k, v in settings.items()
            if k in _DEFAULTS and k != "n_particles"
        }
        | {"mode": "meanfield"}
    )
    model = _build_model(config)
    grid = _build_grid(config)
    solution = _reference_solution(config)
    report = meanfield.chaos_experiment(
        model,
        solution,
        settings["n_particles"],
        settings["n_reps"],
        grid,
        settings["seed"],
        bandwidth_rule=settings["bandwidth_rule"],
        drift_sign_convention=settings["drift_sign_convention"],
    )
    report_path = os.path.join(out_dir, "chaos_report.json")
    report.to_json(report_path)
    manifest = RunManifest(
        config={**settings, "command": "chaos"},
        version=__version__,
        duration_seconds=time.perf_counter() - start,
        digests={"chaos_report.json": _sha256(report_path)},
    )
    manifest.write(os.path.join(out_dir, "manifest.json"))
    print(f"chaos report: {report_path} (loglog slope {report.loglog_slope:.3f})")
    return 0


def _run_husimi(args) -> int:
    start = time.perf_counter()
    p0 = _as_float("p0", args.p0 if args.p0 is not None else _DEFAULTS["p0"])
    q0 = _as_float("q0", args.q0 if args.q0 is not None else _DEFAULTS["q0"])
    out_dir = os.fspath(args.out_dir if args.out_dir is not None else ".")
    os.makedirs(out_dir, exist_ok=True)
    hbar = 1.0
    x = np.linspace(q0 - 10.0, q0 + 10.0, 2001)
    psi = core.coherent_state(p0, q0, hbar, x)
    p_grid = np.linspace(p0 - 8.0, p0 + 8.0, 321)
    q_grid = np.linspace(q0 - 8.0, q0 + 8.0, 321)
    grid = core.husimi(psi, p_grid, q_grid)
    husimi_path = os.path.join(out_dir, "husimi.csv")
    grid.to_csv(husimi_path)
    manifest = RunManifest(
        config={"command": "husimi", "p0": p0, "q0": q0, "hbar": hbar, "out_dir": out_dir},
        version=__version__,
        duration_seconds=time.perf_counter() - start,
        digests={"husimi.csv": _sha256(husimi_path)},
    )
    manifest.write(os.path.join(out_dir, "manifest.json"))
    print(f"husimi grid: {husimi_path} (total mass {grid.total_mass():.6f})")
    return 0


def _load_config_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config: no such file: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config: {path}: {exc}") from None


def _scenario_config(args, forced_mode=None) -> ScenarioConfig:
    file_values = _load_config_file(args.config) if args.config else {}
    flags = {
        key: getattr(args, key)
        for key in _DEFAULTS
        if getattr(args, key, None) is not None
    }
    merged = {**file_values, **flags}
    if forced_mode is not None:
        merged["mode"] = forced_mode
    return ScenarioConfig.from_mapping(merged)


def _add_run_flags(parser, modes=None, particle_list=False, with_n_traj=True):
    if modes is not None:
        parser.add_argument("--mode", choices=modes)
    parser.add_argument("--scenario", choices=SCENARIOS)
    parser.add_argument("--t0", type=float)
    parser.add_argument("--tf", type=float)
    parser.add_argument("--dt", type=float)
    if with_n_traj:
        parser.add_argument("--n-traj", dest="n_traj", type=int)
    # the chaos ladder wants several counts, so there the flag reads a
    # comma-separated list instead of one integer
    parser.add_argument(
        "--n-particles", dest="n_particles", type=str if particle_list else int
    )
    parser.add_argument("--n-reps", dest="n_reps", type=int)
    parser.add_argument("--p0", type=float)
    parser.add_argument("--q0", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument(
        "--drift-convention", dest="drift_sign_convention", choices=DRIFT_CONVENTIONS
    )
    parser.add_argument(
        "--bandwidth-rule", dest="bandwidth_rule", choices=meanfield.BANDWIDTH_RULES
    )
    parser.add_argument("--out-dir", dest="out_dir")
    parser.add_argument("--threads", type=int)
    parser.add_argument("--config")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phaseflow",
        description="Phase-space diffusion scenarios with reproducible artifacts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate an ensemble or particle system")
    _add_run_flags(sim, modes=("retro", "forward_guided", "meanfield"))

    oracle = sub.add_parser(
        "fp-oracle", help="marginal-flow referee between drift sign conventions"
    )
    _add_run_flags(oracle, modes=None)

    chaos = sub.add_parser("chaos", help="particle-count convergence experiment")
    _add_run_flags(chaos, modes=None, particle_list=True, with_n_traj=False)

    cmp_parser = sub.add_parser(
        "compare", help="per-time W1 and KS distances between two ensemble CSVs"
    )
    cmp_parser.add_argument("ensemble_a")
    cmp_parser.add_argument("ensemble_b")
    cmp_parser.add_argument("--times", help="comma-separated node times")
    cmp_parser.add_argument("--out", required=True)

    hus = sub.add_parser("husimi", help="coherent-state phase-space density CSV")
    hus.add_argument("--p0", type=float)
    hus.add_argument("--q0", type=float)
    hus.add_argument("--out-dir", dest="out_dir")

    return parser


def _dispatch(args) -> int:
    if args.command == "simulate":
        manifest = run(_scenario_config(args))
        print(f"manifest: {os.path.join(manifest.config['out_dir'], 'manifest.json')}")
        return 0
    if args.command == "fp-oracle":
        manifest = run(_scenario_config(args, forced_mode="fp_oracle"))
        print(f"manifest: {os.path.join(manifest.config['out_dir'], 'manifest.json')}")
        return 0
    if args.command == "chaos":
        return _run_chaos(args)
    if args.command == "husimi":
        return _run_husimi(args)
    times = None
    if args.times:
        try:
            times = [float(part) for part in args.times.split(",") if part.strip()]
        except ValueError:
            raise ConfigError(f"times: expected comma-separated reals, got {args.times!r}")
    report = compare(args.ensemble_a, args.ensemble_b, times, args.out)
    print(f"equivalent_within: {report['equivalent_within']:.6g}")
    return 0


def _qualified_message(exc: BaseException) -> str:
    # name the deepest package module on the raising path, so "which
    # subsystem failed" survives into scripts that only see stderr
    module = type(exc).__module__
    tb = exc.__traceback__
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("phaseflow"):
            module = name
        tb = tb.tb_next
    return f"{module}: {type(exc).__name__}: {exc}"


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except PhaseflowError as exc:
        print(_qualified_message(exc), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
