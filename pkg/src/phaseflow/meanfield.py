"""Interacting N-particle realization of the guided position dynamics.

Instead of consulting an analytic marginal, each particle reads the
score from a kernel-smoothed version of the ensemble's own empirical
measure, so the system closes on itself: N coupled Euler-Maruyama
updates whose coupling weakens as N grows. The module also carries the
pairwise-potential form of the same drift, convergence experiments
against the analytic law, and a decoupling diagnostic.

Reproducibility follows the trajectory modules: every particle owns
noise streams derived from (master_seed, particle index, role), and
replicate experiment runs derive their seeds from (master_seed,
replicate key), so reports are bit-stable across chunking and rerun.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import ndtr

from . import metrics
from .core import (
    DRIFT_CONVENTIONS,
    DiffusionModel,
    GaussianPhaseSolution,
    TimeGrid,
    _require_b_independent_of_p,
)
from .errors import DomainError, SupportError
from .sde import BoundarySampler, RandomSource, _ROLE_BOUNDARY, _ROLE_P, _ROLE_Q

__all__ = [
    "BANDWIDTH_RULES",
    "ChaosReport",
    "MollifierKernel",
    "PairwisePotential",
    "ParticleStreams",
    "ParticleSystem",
    "bandwidth_from_rule",
    "chaos_experiment",
    "decoupling_experiment",
    "evolve_nsystem",
    "harmonic_potential",
    "initial_system",
    "load_particle_history",
    "mollified_density",
    "mollified_guidance_drift",
    "mollified_potential_mean",
    "nsystem_drift",
    "potential_drift",
    "save_particle_history",
    "step_nsystem",
]

BANDWIDTH_RULES = ("1/n", "n^-1/3", "n^-1/5")

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))

# fixed quadrature for mollifying user potentials; degree 21 integrates
# polynomials up to degree 41 exactly, far beyond any smooth V we meet
_GH_NODES, _GH_WEIGHTS = hermgauss(21)
_GH_NORM = 1.0 / float(np.sqrt(np.pi))


def bandwidth_from_rule(rule: str, n: int) -> float:
    """Kernel bandwidth as a function of the particle count.

    The score read from an n-sample kernel estimate has pointwise noise
    of order (n h^3)^(-1/2), so "1/n" (n h^3 -> 0) and "n^-1/3"
    (n h^3 = 1) leave the drift noisy no matter how large n gets; they
    are kept for study. "n^-1/5" keeps the noise shrinking with n and
    is what the experiment drivers use unless told otherwise.
    """
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise DomainError(f"particle count must be a positive integer, got {n}")
    if rule == "1/n":
        return 1.0 / float(n)
    if rule == "n^-1/3":
        return float(n) ** (-1.0 / 3.0)
    if rule == "n^-1/5":
        return float(n) ** (-0.2)
    raise DomainError(f"bandwidth rule must be one of {BANDWIDTH_RULES}, got {rule!r}")


@dataclass(frozen=True)
class MollifierKernel:
    """Gaussian smoothing kernel with standard deviation `bandwidth`."""

    bandwidth: float

    def __post_init__(self):
        h = self.bandwidth
        if not (np.isfinite(h) and h > 0.0):
            raise DomainError(f"bandwidth must be a positive finite real, got {h}")
        object.__setattr__(self, "bandwidth", float(h))

    def density(self, u):
        """Unit-mass Gaussian density with variance bandwidth**2 at u."""
        h = self.bandwidth
        u = np.asarray(u, dtype=float)
        out = np.exp(-(u * u) / (2.0 * h * h)) / (h * _SQRT_2PI)
        return float(out) if out.ndim == 0 else out

    def cdf(self, u):
        h = self.bandwidth
        u = np.asarray(u, dtype=float)
        out = ndtr(u / h)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ParticleSystem:
    """Immutable snapshot of N particles: positions, momenta, kernel, clock."""

    positions: np.ndarray
    momenta: np.ndarray
    kernel: MollifierKernel
    time: float

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        mom = np.array(self.momenta, dtype=float)
        if pos.ndim != 1 or pos.size < 1:
            raise DomainError("positions must be a 1-d sequence with at least one particle")
        if mom.shape != pos.shape:
            raise DomainError(
                f"momenta shape {mom.shape} does not match positions shape {pos.shape}"
            )
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(mom))):
            raise DomainError("particle state must be finite")
        if not isinstance(self.kernel, MollifierKernel):
            raise DomainError("kernel must be a MollifierKernel")
        if not np.isfinite(self.time):
            raise DomainError(f"time must be finite, got {self.time}")
        pos.flags.writeable = False
        mom.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "momenta", mom)
        object.__setattr__(self, "time", float(self.time))

    @property
    def n_particles(self) -> int:
        return self.positions.size


@dataclass(frozen=True)
class PairwisePotential:
    """Interaction potential V(q, x) with its analytic q-gradient.

    Both callables must act elementwise on array arguments. The gradient
    is cross-checked against a central difference of V at fixed probe
    points on construction; a mismatch is a construction error, not a
    runtime surprise.
    """

    v: Callable
    gradient: Callable

    def __post_init__(self):
        for qv in (-1.3, 0.0, 2.1):
            for xv in (-0.7, 1.9):
                eps = 1e-5 * max(1.0, abs(qv))
                fd = (self.v(qv + eps, xv) - self.v(qv - eps, xv)) / (2.0 * eps)
                if abs(self.gradient(qv, xv) - fd) > 1e-6:
                    raise DomainError(
                        f"gradient disagrees with central difference of v at "
                        f"(q={qv}, x={xv}): {self.gradient(qv, xv)} vs {fd}"
                    )


def harmonic_potential() -> PairwisePotential:
    """Quadratic attraction (q - x)**2 / 2 with gradient q - x."""
    return PairwisePotential(
        v=lambda q, x: 0.5 * (q - x) ** 2,
        gradient=lambda q, x: q - x,
    )


# ---------------------------------------------------------------------------
# Mollified empirical measure


def mollified_density(sys: ParticleSystem, x):
    """Kernel-smoothed empirical density (1/N) sum_i K(x - q_i).

    Strictly positive in exact arithmetic; in floats the value underflows
    to 0 many bandwidths away from every particle.
    """
    xa = np.asarray(x, dtype=float)
    vals = sys.kernel.density(xa[..., None] - sys.positions)
    out = vals.mean(axis=-1)
    return float(out) if out.ndim == 0 else out


def _mollified_score_at(positions: np.ndarray, h: float, x: np.ndarray) -> np.ndarray:
    """d_q log of the mollified empirical density, evaluated at points x.

    The common normalization of the kernel cancels in the ratio, so only
    the relative weights exp(-(x-q_j)^2 / 2h^2) enter.
    """
    diff = positions[None, :] - x[:, None]
    w = np.exp(-(diff * diff) / (2.0 * h * h))
    den = w.sum(axis=1)
    if np.any(den <= 1e-300):
        raise SupportError(
            "mollified density underflowed at an evaluation point; the score "
            "is only defined near the particle cloud"
        )
    return (w * diff).sum(axis=1) / (h * h * den)


def mollified_guidance_drift(
    model: DiffusionModel,
    sys: ParticleSystem,
    p,
    q,
    t: float,
    drift_sign_convention: str = "anderson",
):
    """core.guidance_drift with the score read from the particle cloud.

    Same structure: sign * a2 + d_q(b^2) + b^2 * score, but the score is
    that of the mollified empirical measure, so no analytic marginal is
    needed. q may be a scalar or a 1-d array of evaluation points; they
    need not coincide with particle positions, though far outside the
    cloud the mollified density underflows and the score is rejected.
    """
    if drift_sign_convention not in DRIFT_CONVENTIONS:
        raise DomainError(
            f"drift_sign_convention must be one of {DRIFT_CONVENTIONS}, "
            f"got {drift_sign_convention!r}"
        )
    qa = np.asarray(q, dtype=float)
    pa = np.asarray(p, dtype=float)
    scalar = qa.ndim == 0 and pa.ndim == 0
    sign = 1.0 if drift_sign_convention == "anderson" else -1.0
    a2 = np.asarray(model.a2(pa, qa, t), dtype=float)
    _require_b_independent_of_p(model, qa, t)
    b = np.asarray(model.b(0.0, qa, t), dtype=float)
    b2 = b * b
    if np.all(b2 == 0.0):
        out = sign * a2
        return float(out) if scalar else out
    eps = 1e-6 * np.maximum(1.0, np.abs(qa))
    bp = np.asarray(model.b(0.0, qa + eps, t), dtype=float)
    bm = np.asarray(model.b(0.0, qa - eps, t), dtype=float)
    db2 = (bp * bp - bm * bm) / (2.0 * eps)
    score = _mollified_score_at(
        sys.positions, sys.kernel.bandwidth, np.atleast_1d(qa)
    ).reshape(qa.shape)
    out = sign * a2 + db2 + b2 * score
    return float(out) if scalar else out


def nsystem_drift(
    model: DiffusionModel,
    sys: ParticleSystem,
    i: int,
    t: float,
    drift_sign_convention: str = "anderson",
) -> float:
    """Guided position drift for particle i, scored against the mollified
    empirical measure.

    The particle's own kernel mass is included; at q_i it contributes
    weight 1, so the score denominator never vanishes there.
    """
    if not (isinstance(i, (int, np.integer)) and 0 <= i < sys.n_particles):
        raise DomainError(
            f"particle index must lie in [0, {sys.n_particles}), got {i}"
        )
    i = int(i)
    return float(
        mollified_guidance_drift(
            model, sys, sys.momenta[i], sys.positions[i], t, drift_sign_convention
        )
    )


def _drift_all(
    model: DiffusionModel,
    sys: ParticleSystem,
    t: float,
    drift_sign_convention: str,
) -> np.ndarray:
    """Guided drift at every particle position under the current snapshot."""
    out = mollified_guidance_drift(
        model, sys, sys.momenta, sys.positions, t, drift_sign_convention
    )
    return np.broadcast_to(np.asarray(out, dtype=float), sys.positions.shape)


# ---------------------------------------------------------------------------
# Noise streams and time stepping


class ParticleStreams:
    """Per-particle Gaussian streams with the (index, role) layout of
    RandomSource, so particle i's noise is independent of every other
    particle's and of the particle count.

    The generators are stateful: each step consumes one normal per
    particle per coordinate, and drawing a whole path at once consumes
    the streams identically to drawing step by step.
    """

    def __init__(self, master_seed: int, n_particles: int):
        if not (isinstance(n_particles, (int, np.integer)) and n_particles >= 1):
            raise DomainError(
                f"n_particles must be a positive integer, got {n_particles}"
            )
        src = RandomSource(master_seed)
        n = int(n_particles)
        self.master_seed = src.master_seed
        self.n_particles = n
        self._p = [src.stream(i, _ROLE_P) for i in range(n)]
        self._q = [src.stream(i, _ROLE_Q) for i in range(n)]
        self._boundary = [src.stream(i, _ROLE_BOUNDARY) for i in range(n)]

    def initial_normals(self):
        """One (z_p, z_q) pair per particle from its boundary stream."""
        z = np.array([g.standard_normal(2) for g in self._boundary])
        return z[:, 0], z[:, 1]

    def step_normals(self):
        """One momentum and one position normal per particle."""
        xi_p = np.array([g.standard_normal() for g in self._p])
        xi_q = np.array([g.standard_normal() for g in self._q])
        return xi_p, xi_q

    def path_normals(self, n_steps: int):
        """(N, n_steps) noise blocks; consumes the streams exactly as
        n_steps successive step_normals() calls would."""
        if not (isinstance(n_steps, (int, np.integer)) and n_steps >= 1):
            raise DomainError(f"n_steps must be a positive integer, got {n_steps}")
        xi_p = np.stack([g.standard_normal(int(n_steps)) for g in self._p])
        xi_q = np.stack([g.standard_normal(int(n_steps)) for g in self._q])
        return xi_p, xi_q

    def permuted(self, perm) -> "ParticleStreams":
        """View with the per-particle streams reordered by `perm`.

        Shares generator state with self; exists so that relabeling
        particles together with their noise is expressible, which is
        what makes exchangeability checkable.
        """
        perm = np.asarray(perm)
        if sorted(perm.tolist()) != list(range(self.n_particles)):
            raise DomainError("perm must be a permutation of range(n_particles)")
        out = object.__new__(ParticleStreams)
        out.master_seed = self.master_seed
        out.n_particles = self.n_particles
        out._p = [self._p[j] for j in perm]
        out._q = [self._q[j] for j in perm]
        out._boundary = [self._boundary[j] for j in perm]
        return out


def initial_system(
    sampler: BoundarySampler,
    n_particles: int,
    kernel: MollifierKernel,
    rng: ParticleStreams,
    t0: float,
) -> ParticleSystem:
    """Draw an iid initial configuration from the marginal laws at t0."""
    if rng.n_particles != n_particles:
        raise DomainError(
            f"rng carries {rng.n_particles} particle streams, need {n_particles}"
        )
    z_p, z_q = rng.initial_normals()
    p0, q0 = sampler.draw(z_p, z_q, t0, t0)
    return ParticleSystem(positions=q0, momenta=p0, kernel=kernel, time=float(t0))


def _advance(
    model: DiffusionModel,
    sys: ParticleSystem,
    dt: float,
    xi_p: np.ndarray,
    xi_q: np.ndarray,
    drift_sign_convention: str,
) -> ParticleSystem:
    # synchronous update: all drifts are read from the same snapshot
    # before any particle moves
    t = sys.time
    q = sys.positions
    p = sys.momenta
    drift_q = _drift_all(model, sys, t, drift_sign_convention)
    a1 = np.asarray(model.a1(p, q, t), dtype=float)
    b = np.asarray(model.b(0.0, q, t), dtype=float)
    root_dt = np.sqrt(dt)
    new_q = q + drift_q * dt + b * root_dt * xi_q
    new_p = p + a1 * dt + b * root_dt * xi_p
    return ParticleSystem(
        positions=new_q, momenta=new_p, kernel=sys.kernel, time=t + dt
    )


def step_nsystem(
    model: DiffusionModel,
    sys: ParticleSystem,
    dt: float,
    rng: ParticleStreams,
    drift_sign_convention: str = "anderson",
) -> ParticleSystem:
    """One synchronous Euler-Maruyama step of the coupled system."""
    if not (np.isfinite(dt) and dt > 0.0):
        raise DomainError(f"dt must be a positive finite real, got {dt}")
    if drift_sign_convention not in DRIFT_CONVENTIONS:
        raise DomainError(
            f"drift_sign_convention must be one of {DRIFT_CONVENTIONS}, "
            f"got {drift_sign_convention!r}"
        )
    if rng.n_particles != sys.n_particles:
        raise DomainError(
            f"rng carries {rng.n_particles} particle streams, system has "
            f"{sys.n_particles} particles"
        )
    xi_p, xi_q = rng.step_normals()
    return _advance(model, sys, dt, xi_p, xi_q, drift_sign_convention)


def evolve_nsystem(
    model: DiffusionModel,
    sys: ParticleSystem,
    duration: float,
    dt: float,
    rng: ParticleStreams,
    drift_sign_convention: str = "anderson",
) -> ParticleSystem:
    """Advance the system through round(duration/dt) steps.

    Draws each particle's noise path in one block, which consumes the
    streams exactly as stepwise calls would; the result is bit-identical
    to repeated step_nsystem.
    """
    if not (np.isfinite(dt) and dt > 0.0):
        raise DomainError(f"dt must be a positive finite real, got {dt}")
    if not (np.isfinite(duration) and duration > 0.0):
        raise DomainError(f"duration must be a positive finite real, got {duration}")
    if drift_sign_convention not in DRIFT_CONVENTIONS:
        raise DomainError(
            f"drift_sign_convention must be one of {DRIFT_CONVENTIONS}, "
            f"got {drift_sign_convention!r}"
        )
    if rng.n_particles != sys.n_particles:
        raise DomainError(
            f"rng carries {rng.n_particles} particle streams, system has "
            f"{sys.n_particles} particles"
        )
    n_steps = int(round(duration / dt))
    if n_steps < 1 or abs(n_steps * dt - duration) > 1e-9 * max(1.0, abs(duration)):
        raise DomainError(
            f"duration {duration} is not a whole positive number of steps of {dt}"
        )
    xi_p, xi_q = rng.path_normals(n_steps)
    cur = sys
    for k in range(n_steps):
        cur = _advance(model, cur, dt, xi_p[:, k], xi_q[:, k], drift_sign_convention)
    return cur


# ---------------------------------------------------------------------------
# Pairwise-potential form of the drift


def potential_drift(sys: ParticleSystem, pot: PairwisePotential, b: float, q):
    """Drift -b^2 (1/N) sum_i d_q(V conv K)(q, q_i).

    The kernel convolution is applied to V through fixed Gauss-Hermite
    quadrature of the analytic gradient; for a quadratic V the Gaussian
    mollification leaves the gradient unchanged, so the harmonic case
    reduces to -b^2 (q - mean(positions)) up to quadrature roundoff.
    """
    qa = np.asarray(q, dtype=float)
    scalar = qa.ndim == 0
    qv = np.atleast_1d(qa)
    h = sys.kernel.bandwidth
    shift = np.sqrt(2.0) * h * _GH_NODES
    acc = np.zeros_like(qv)
    for k in range(_GH_NODES.size):
        g = np.asarray(pot.gradient(qv[:, None] - shift[k], sys.positions[None, :]))
        if g.shape != (qv.size, sys.n_particles):
            raise DomainError(
                "potential gradient must act elementwise on array arguments"
            )
        acc += _GH_WEIGHTS[k] * g.mean(axis=1)
    out = -(b * b) * _GH_NORM * acc
    return float(out[0]) if scalar else out


def mollified_potential_mean(sys: ParticleSystem, pot: PairwisePotential, q):
    """Average of the kernel-mollified potential over the particle cloud,
    (1/N) sum_i (V conv K)(q, q_i), by the same quadrature rule."""
    qa = np.asarray(q, dtype=float)
    scalar = qa.ndim == 0
    qv = np.atleast_1d(qa)
    h = sys.kernel.bandwidth
    shift = np.sqrt(2.0) * h * _GH_NODES
    acc = np.zeros_like(qv)
    for k in range(_GH_NODES.size):
        v = np.asarray(pot.v(qv[:, None] - shift[k], sys.positions[None, :]))
        if v.shape != (qv.size, sys.n_particles):
            raise DomainError("potential must act elementwise on array arguments")
        acc += _GH_WEIGHTS[k] * v.mean(axis=1)
    out = _GH_NORM * acc
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Experiments


def _replicate_seed(master_seed: int, *key: int) -> int:
    """Derive an independent 64-bit seed for one replicate run."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def _w1_mollified_vs_gaussian(
    positions: np.ndarray, h: float, mean: float, sd: float
) -> float:
    """W1 between the mollified empirical measure and a Gaussian, as the
    area between their distribution functions on a wide grid."""
    lo = min(float(positions.min()) - 8.0 * h, mean - 8.0 * sd)
    hi = max(float(positions.max()) + 8.0 * h, mean + 8.0 * sd)
    x = np.linspace(lo, hi, 4001)
    f_moll = ndtr((x[:, None] - positions[None, :]) / h).mean(axis=1)
    f_ref = ndtr((x - mean) / sd)
    return float(np.trapezoid(np.abs(f_moll - f_ref), x))


@dataclass(frozen=True)
class ChaosReport:
    """Wasserstein convergence summary over a ladder of particle counts."""

    model: str
    n_list: tuple
    n_reps: int
    bandwidth_rule: str
    w1_mean: tuple
    w1_stderr: tuple
    w1_mollified_mean: tuple
    loglog_slope: float
    seed: int

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "N_list": list(self.n_list),
            "n_reps": self.n_reps,
            "bandwidth_rule": self.bandwidth_rule,
            "w1_mean": list(self.w1_mean),
            "w1_stderr": list(self.w1_stderr),
            "w1_mollified_mean": list(self.w1_mollified_mean),
            "loglog_slope": self.loglog_slope,
            "seed": self.seed,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _final_positions(
    model: DiffusionModel,
    solution: GaussianPhaseSolution,
    n_particles: int,
    grid: TimeGrid,
    seed: int,
    bandwidth_rule: str,
    drift_sign_convention: str,
) -> np.ndarray:
    kernel = MollifierKernel(bandwidth_from_rule(bandwidth_rule, n_particles))
    streams = ParticleStreams(seed, n_particles)
    sampler = BoundarySampler(solution.p_marginal, solution.q_marginal)
    sys0 = initial_system(sampler, n_particles, kernel, streams, grid.t0)
    final = evolve_nsystem(
        model, sys0, grid.tf - grid.t0, grid.dt, streams, drift_sign_convention
    )
    return final.positions


def chaos_experiment(
    model: DiffusionModel,
    solution: GaussianPhaseSolution,
    N_list: Sequence[int],
    n_reps: int,
    grid: TimeGrid,
    master_seed: int,
    bandwidth_rule: str = "n^-1/5",
    drift_sign_convention: str = "anderson",
) -> ChaosReport:
    """Measure how fast the N-system's final law approaches the analytic
    marginal as N grows.

    For each N, runs n_reps independent replicates to grid.tf and
    records W1 between the final positions and the analytic Gaussian at
    tf, both for the raw empirical sample and for its mollified version.
    The log-log slope of mean W1 against N summarizes the rate. The
    initial configuration is drawn from the analytic law at t0, so the
    experiment isolates dynamical error.
    """
    n_values = [int(n) for n in N_list]
    if len(n_values) < 2:
        raise DomainError("N_list needs at least two particle counts")
    if any(n < 10 for n in n_values):
        raise DomainError(f"every N must be at least 10, got {n_values}")
    if any(b >= a for b, a in zip(n_values, n_values[1:])):
        raise DomainError(f"N_list must be strictly increasing, got {n_values}")
    if not (isinstance(n_reps, (int, np.integer)) and n_reps >= 1):
        raise DomainError(f"n_reps must be a positive integer, got {n_reps}")
    if bandwidth_rule not in BANDWIDTH_RULES:
        raise DomainError(
            f"bandwidth rule must be one of {BANDWIDTH_RULES}, got {bandwidth_rule!r}"
        )
    mean_tf = solution.q_marginal.mean(grid.tf)
    sd_tf = float(np.sqrt(solution.q_marginal.variance))
    w1_mean, w1_stderr, w1_moll = [], [], []
    for n in n_values:
        h = bandwidth_from_rule(bandwidth_rule, n)
        vals = np.empty(n_reps)
        vals_moll = np.empty(n_reps)
        for rep in range(n_reps):
            seed = _replicate_seed(master_seed, n, rep)
            q_final = _final_positions(
                model, solution, n, grid, seed, bandwidth_rule, drift_sign_convention
            )
            vals[rep] = metrics.wasserstein1_gaussian(q_final, mean_tf, sd_tf)
            vals_moll[rep] = _w1_mollified_vs_gaussian(q_final, h, mean_tf, sd_tf)
        w1_mean.append(float(vals.mean()))
        w1_stderr.append(
            float(vals.std(ddof=1) / np.sqrt(n_reps)) if n_reps > 1 else 0.0
        )
        w1_moll.append(float(vals_moll.mean()))
    slope = metrics.loglog_slope(
        metrics.ConvergenceSeries(np.array(n_values, dtype=float), np.array(w1_mean))
    )
    return ChaosReport(
        model=model.name,
        n_list=tuple(n_values),
        n_reps=int(n_reps),
        bandwidth_rule=bandwidth_rule,
        w1_mean=tuple(w1_mean),
        w1_stderr=tuple(w1_stderr),
        w1_mollified_mean=tuple(w1_moll),
        loglog_slope=float(slope),
        seed=int(master_seed),
    )


def decoupling_experiment(
    model: DiffusionModel,
    solution: GaussianPhaseSolution,
    n_particles: int,
    n_reps: int,
    grid: TimeGrid,
    master_seed: int,
    bandwidth_rule: str = "n^-1/5",
    drift_sign_convention: str = "anderson",
) -> float:
    """Correlation between two tagged particles' final positions across
    replicate runs; small magnitude is the decoupling signature."""
    if not (isinstance(n_particles, (int, np.integer)) and n_particles >= 2):
        raise DomainError(
            f"decoupling needs at least two particles, got {n_particles}"
        )
    if not (isinstance(n_reps, (int, np.integer)) and n_reps >= 2):
        raise DomainError(f"n_reps must be at least 2, got {n_reps}")
    q1 = np.empty(n_reps)
    q2 = np.empty(n_reps)
    for rep in range(n_reps):
        # replicate key 0 keeps these seeds disjoint from chaos_experiment,
        # whose first key is a particle count >= 10
        seed = _replicate_seed(master_seed, 0, rep)
        q_final = _final_positions(
            model,
            solution,
            int(n_particles),
            grid,
            seed,
            bandwidth_rule,
            drift_sign_convention,
        )
        q1[rep] = q_final[0]
        q2[rep] = q_final[1]
    return float(np.corrcoef(q1, q2)[0, 1])


# ---------------------------------------------------------------------------
# Particle history CSV


def save_particle_history(path, systems: Sequence[ParticleSystem]) -> None:
    """Write snapshots as rows step,particle_id,q,p (full precision)."""
    systems = list(systems)
    if not systems:
        raise DomainError("need at least one snapshot to save")
    n = systems[0].n_particles
    if any(s.n_particles != n for s in systems):
        raise DomainError("all snapshots must hold the same particle count")
    with open(path, "w") as fh:
        fh.write("step,particle_id,q,p\n")
        for step, s in enumerate(systems):
            q = s.positions
            p = s.momenta
            for i in range(n):
                fh.write(f"{step},{i},{q[i]:.17g},{p[i]:.17g}\n")


def load_particle_history(path):
    """Read a history written by save_particle_history.

    Returns (positions, momenta) arrays of shape (n_snapshots, n_particles).
    """
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    if data.shape == ():
        data = data.reshape(1)
    steps = data["step"].astype(int)
    pids = data["particle_id"].astype(int)
    if steps.size == 0:
        raise DomainError("history file holds no rows")
    n_steps = steps.max() + 1
    n = pids.max() + 1
    if steps.size != n_steps * n:
        raise DomainError(
            f"expected {n_steps * n} rows for {n_steps} snapshots of {n} "
            f"particles, found {steps.size}"
        )
    positions = np.empty((n_steps, n))
    momenta = np.empty((n_steps, n))
    positions[steps, pids] = data["q"]
    momenta[steps, pids] = data["p"]
    return positions, momenta
