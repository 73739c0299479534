"""Seeded trajectory integrators for the three dynamical pictures.

The same phase-space law can be realized three ways: a retro pair that
integrates momentum forward from t0 and position backward from a
terminal draw at tf, a forward-guided pair whose position drift adds a
score term to the raw drift, and a noise-free classical flow for the
degenerate case. All integration is Euler-Maruyama with a fixed step,
and every trajectory owns deterministic noise streams derived from
(master_seed, trajectory index, role), so ensembles are bit-reproducible
and independent of chunking or execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DiffusionModel,
    GaussianMarginal,
    PhaseState,
    TimeGrid,
    guidance_drift,
)
from .errors import DomainError, UnsupportedModelError

__all__ = [
    "RandomSource",
    "Trajectory",
    "Ensemble",
    "BoundarySampler",
    "integrate_retro",
    "integrate_forward_guided",
    "simulate_ensemble",
    "simulate_snapshots",
    "load_ensemble_csv",
]

MODES = ("retro", "forward_guided", "deterministic")

# one noise stream per (trajectory, role); the layout is part of the
# reproducibility contract and must not be reordered
_ROLE_P = 0
_ROLE_Q = 1
_ROLE_BOUNDARY = 2


@dataclass(frozen=True)
class RandomSource:
    """Derives independent, reproducible Gaussian streams per trajectory.

    stream(i, role) is seeded from (master_seed, i, role); identical
    arguments and call sequences give bit-identical draws, distinct
    (i, role) pairs give statistically independent sequences.
    """

    master_seed: int

    def __post_init__(self):
        if not isinstance(self.master_seed, (int, np.integer)):
            raise DomainError("master_seed must be an integer")
        if not 0 <= int(self.master_seed) < 2**64:
            raise DomainError("master_seed must fit in 64 unsigned bits")

    def stream(self, index: int, role: int = 0) -> np.random.Generator:
        if index < 0:
            raise DomainError("stream index must be nonnegative")
        seq = np.random.SeedSequence(
            entropy=int(self.master_seed), spawn_key=(int(index), int(role))
        )
        return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class Trajectory:
    """One path sampled on a TimeGrid, stored as coordinate arrays."""

    grid: TimeGrid
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        n = self.grid.n_steps + 1
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.shape != (n,) or q.shape != (n,):
            raise DomainError(f"trajectory arrays must have {n} entries, one per node")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise DomainError("trajectory contains non-finite states")
        for name, arr in (("p", p), ("q", q)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.p.size

    @property
    def states(self) -> tuple:
        return tuple(PhaseState(float(a), float(b)) for a, b in zip(self.p, self.q))


@dataclass(frozen=True)
class Ensemble:
    """Trajectories sharing one grid, stored as (n_traj, n_nodes) arrays."""

    grid: TimeGrid
    p: np.ndarray
    q: np.ndarray
    mode: str
    model_name: str
    master_seed: int

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        n = self.grid.n_steps + 1
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.ndim != 2 or p.shape[1] != n or p.shape != q.shape or p.shape[0] < 1:
            raise DomainError("ensemble arrays must have shape (n_traj, n_nodes)")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise DomainError("ensemble contains non-finite states")
        for name, arr in (("p", p), ("q", q)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_traj(self) -> int:
        return self.p.shape[0]

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(grid=self.grid, p=self.p[i], q=self.q[i])

    @property
    def trajectories(self) -> tuple:
        return tuple(self.trajectory(i) for i in range(self.n_traj))

    def __iter__(self):
        return (self.trajectory(i) for i in range(self.n_traj))

    def q_at(self, t: float) -> np.ndarray:
        return self.q[:, self.grid.index_of(t)]

    def p_at(self, t: float) -> np.ndarray:
        return self.p[:, self.grid.index_of(t)]

    def to_csv(self, path) -> None:
        """Write rows traj_id,t,p,q at 17 significant digits."""
        times = self.grid.times
        with open(path, "w") as fh:
            fh.write("traj_id,t,p,q\n")
            for i in range(self.n_traj):
                pi, qi = self.p[i], self.q[i]
                fh.writelines(
                    f"{i},{times[k]:.17g},{pi[k]:.17g},{qi[k]:.17g}\n"
                    for k in range(times.size)
                )


def load_ensemble_csv(path):
    """Read an ensemble CSV back as (TimeGrid, p, q) arrays.

    Rows must be grouped by trajectory with times ascending, the layout
    to_csv produces. Returns 2-D arrays of shape (n_traj, n_nodes).
    """
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 4:
        raise DomainError(f"{path} does not have columns traj_id,t,p,q")
    ids = data[:, 0].astype(int)
    n_traj = ids.max() + 1
    if ids.min() != 0 or data.shape[0] % n_traj != 0:
        raise DomainError(f"{path} has ragged or non-contiguous trajectory ids")
    n_nodes = data.shape[0] // n_traj
    if not np.array_equal(ids, np.repeat(np.arange(n_traj), n_nodes)):
        raise DomainError(f"{path} rows are not grouped by trajectory id")
    times = data[:n_nodes, 1]
    grid = TimeGrid(t0=float(times[0]), tf=float(times[-1]), dt=float(times[1] - times[0]))
    p = data[:, 2].reshape(n_traj, n_nodes)
    q = data[:, 3].reshape(n_traj, n_nodes)
    return grid, p, q


@dataclass(frozen=True)
class BoundarySampler:
    """Gaussian laws for the two boundary draws.

    p_initial is always sampled at t0. q_boundary is sampled at t0 by the
    forward integrators and at tf by the retro integrator; the marginal's
    own time-dependent mean makes both readings of the same object
    consistent.
    """

    p_initial: GaussianMarginal
    q_boundary: GaussianMarginal

    def __post_init__(self):
        for name, marg in (("p_initial", self.p_initial), ("q_boundary", self.q_boundary)):
            if not isinstance(marg, GaussianMarginal):
                raise DomainError(f"{name} must be a GaussianMarginal")

    def draw(self, z_p: np.ndarray, z_q: np.ndarray, t_p: float, t_q: float):
        p0 = float(self.p_initial.mean(t_p)) + np.sqrt(self.p_initial.variance) * z_p
        q0 = float(self.q_boundary.mean(t_q)) + np.sqrt(self.q_boundary.variance) * z_q
        return p0, q0


def _require_constant_b(model: DiffusionModel, t0: float, tf: float) -> float:
    pts = (-2.1, 0.0, 1.4)
    ref = float(np.asarray(model.b(0.0, 0.0, t0)))
    for t in (t0, 0.5 * (t0 + tf), tf):
        for p in pts:
            for q in pts:
                if abs(float(np.asarray(model.b(p, q, t))) - ref) > 1e-12 * max(1.0, abs(ref)):
                    raise UnsupportedModelError(
                        f"model {model.name!r} has state- or time-dependent diffusion; "
                        "the retro construction needs one shared constant amplitude"
                    )
    return ref


def _chunk_retro(model, grid, p0, qf, dwp, dwq):
    """Vectorized retro kernel over one chunk of trajectories.

    p runs forward from t0 by Euler-Maruyama. q runs backward from the
    terminal draw, realized as forward integration in reversed time
    tau = tf - t with drift -a2, then index reversal; the reversed-time
    noise stream plays the backward increments.
    """
    dt = grid.dt
    n = grid.n_steps
    sdt = np.sqrt(dt)
    bconst = _require_constant_b(model, grid.t0, grid.tf)
    m = p0.size
    P = np.empty((m, n + 1))
    Qr = np.empty((m, n + 1))
    P[:, 0] = p0
    Qr[:, 0] = qf
    times = grid.times
    for k in range(n):
        t = times[k]
        pk = P[:, k]
        a1 = np.broadcast_to(np.asarray(model.a1(pk, 0.0, t), dtype=float), pk.shape)
        P[:, k + 1] = pk + a1 * dt + bconst * sdt * dwp[:, k]
        tau_t = times[n - k]  # physical time at the current reversed node
        qk = Qr[:, k]
        a2 = np.broadcast_to(np.asarray(model.a2(0.0, qk, tau_t), dtype=float), qk.shape)
        Qr[:, k + 1] = qk - a2 * dt + bconst * sdt * dwq[:, k]
    return P, Qr[:, ::-1]


def _chunk_guided(model, grid, mu, p0, q0, dwp, dwq, convention):
    """Vectorized forward-guided kernel over one chunk of trajectories."""
    dt = grid.dt
    n = grid.n_steps
    sdt = np.sqrt(dt)
    m = p0.size
    P = np.empty((m, n + 1))
    Q = np.empty((m, n + 1))
    P[:, 0] = p0
    Q[:, 0] = q0
    times = grid.times
    for k in range(n):
        t = times[k]
        pk, qk = P[:, k], Q[:, k]
        a1 = np.broadcast_to(np.asarray(model.a1(pk, qk, t), dtype=float), pk.shape)
        drift = guidance_drift(model, mu, pk, qk, t, drift_sign_convention=convention)
        b = np.broadcast_to(np.asarray(model.b(0.0, qk, t), dtype=float), qk.shape)
        P[:, k + 1] = pk + a1 * dt + b * sdt * dwp[:, k]
        Q[:, k + 1] = qk + np.broadcast_to(drift, qk.shape) * dt + b * sdt * dwq[:, k]
    return P, Q


def _chunk_deterministic(model, grid, p0, q0):
    """Noise-free classical flow, forward from t0."""
    dt = grid.dt
    n = grid.n_steps
    m = p0.size
    P = np.empty((m, n + 1))
    Q = np.empty((m, n + 1))
    P[:, 0] = p0
    Q[:, 0] = q0
    times = grid.times
    for k in range(n):
        t = times[k]
        pk, qk = P[:, k], Q[:, k]
        a1 = np.broadcast_to(np.asarray(model.a1(pk, qk, t), dtype=float), pk.shape)
        a2 = np.broadcast_to(np.asarray(model.a2(pk, qk, t), dtype=float), pk.shape)
        P[:, k + 1] = pk + a1 * dt
        Q[:, k + 1] = qk + a2 * dt
    return P, Q


def _draw_chunk(rng: RandomSource, indices, n: int, with_noise: bool):
    m = len(indices)
    zb = np.empty((m, 2))
    dwp = np.empty((m, n)) if with_noise else None
    dwq = np.empty((m, n)) if with_noise else None
    for row, i in enumerate(indices):
        zb[row] = rng.stream(i, _ROLE_BOUNDARY).standard_normal(2)
        if with_noise:
            dwp[row] = rng.stream(i, _ROLE_P).standard_normal(n)
            dwq[row] = rng.stream(i, _ROLE_Q).standard_normal(n)
    return zb, dwp, dwq


def integrate_retro(
    model: DiffusionModel,
    grid: TimeGrid,
    sampler: BoundarySampler,
    rng: RandomSource,
    traj_index: int,
) -> Trajectory:
    """Integrate one retro trajectory: p forward from t0, q backward from tf.

    Requires a product-form model with a constant diffusion amplitude;
    the backward position construction cannot anticipate the momentum
    path, so coupled models are rejected.
    """
    if not model.product_form:
        raise UnsupportedModelError(
            f"model {model.name!r} is not product form; retro integration needs "
            "a1 = a1(p), a2 = a2(q)"
        )
    zb, dwp, dwq = _draw_chunk(rng, [traj_index], grid.n_steps, with_noise=True)
    p0, qf = sampler.draw(zb[:, 0], zb[:, 1], grid.t0, grid.tf)
    P, Q = _chunk_retro(model, grid, p0, qf, dwp, dwq)
    return Trajectory(grid=grid, p=P[0], q=Q[0])


def integrate_forward_guided(
    model: DiffusionModel,
    grid: TimeGrid,
    sampler: BoundarySampler,
    mu,
    rng: RandomSource,
    traj_index: int,
    drift_sign_convention: str = "anderson",
) -> Trajectory:
    """Integrate one forward trajectory under the score-guided drift.

    Both coordinates start at t0; the position drift is
    guidance_drift(model, mu, p, q, t) and the noise amplitude is b(q, t).
    mu must cover all grid times (a GaussianMarginal does); it is never
    consulted when b vanishes identically.
    """
    zb, dwp, dwq = _draw_chunk(rng, [traj_index], grid.n_steps, with_noise=True)
    p0, q0 = sampler.draw(zb[:, 0], zb[:, 1], grid.t0, grid.t0)
    P, Q = _chunk_guided(model, grid, mu, p0, q0, dwp, dwq, drift_sign_convention)
    return Trajectory(grid=grid, p=P[0], q=Q[0])


def _run_chunks(
    mode, model, grid, sampler, mu, n_traj, master_seed, convention, chunk_size, consume
):
    rng = RandomSource(master_seed)
    n = grid.n_steps
    for start in range(0, n_traj, chunk_size):
        indices = range(start, min(start + chunk_size, n_traj))
        zb, dwp, dwq = _draw_chunk(rng, indices, n, with_noise=(mode != "deterministic"))
        if mode == "retro":
            p0, qb = sampler.draw(zb[:, 0], zb[:, 1], grid.t0, grid.tf)
            P, Q = _chunk_retro(model, grid, p0, qb, dwp, dwq)
        elif mode == "forward_guided":
            p0, qb = sampler.draw(zb[:, 0], zb[:, 1], grid.t0, grid.t0)
            P, Q = _chunk_guided(model, grid, mu, p0, qb, dwp, dwq, convention)
        else:
            p0, qb = sampler.draw(zb[:, 0], zb[:, 1], grid.t0, grid.t0)
            P, Q = _chunk_deterministic(model, grid, p0, qb)
        consume(start, P, Q)


def simulate_ensemble(
    mode: str,
    model: DiffusionModel,
    grid: TimeGrid,
    sampler: BoundarySampler,
    mu_if_guided,
    n_traj: int,
    master_seed: int,
    drift_sign_convention: str = "anderson",
    chunk_size: int = 2048,
) -> Ensemble:
    """Integrate n_traj independent trajectories and keep every node.

    Trajectory i always consumes stream(i), so the result is independent
    of chunk_size and reproducible from master_seed alone. Memory scales
    as n_traj * n_nodes; for large ensembles where only a few times
    matter, use simulate_snapshots instead.
    """
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    if not (isinstance(n_traj, (int, np.integer)) and n_traj >= 1):
        raise DomainError(f"n_traj must be a positive integer, got {n_traj}")
    if mode == "retro" and not model.product_form:
        raise UnsupportedModelError(
            f"model {model.name!r} is not product form; retro integration needs "
            "a1 = a1(p), a2 = a2(q)"
        )
    n = grid.n_steps
    P = np.empty((n_traj, n + 1))
    Q = np.empty((n_traj, n + 1))

    def consume(start, cp, cq):
        P[start : start + cp.shape[0]] = cp
        Q[start : start + cq.shape[0]] = cq

    _run_chunks(
        mode, model, grid, sampler, mu_if_guided, n_traj, master_seed,
        drift_sign_convention, chunk_size, consume,
    )
    return Ensemble(
        grid=grid, p=P, q=Q, mode=mode, model_name=model.name, master_seed=int(master_seed)
    )


def simulate_snapshots(
    mode: str,
    model: DiffusionModel,
    grid: TimeGrid,
    sampler: BoundarySampler,
    mu_if_guided,
    n_traj: int,
    master_seed: int,
    times,
    drift_sign_convention: str = "anderson",
    chunk_size: int = 2048,
):
    """Like simulate_ensemble, but store only the requested node times.

    Returns {t: (p_samples, q_samples)}. Uses the identical kernels and
    stream layout, so the samples at a stored time are bit-identical to
    the corresponding columns of the full ensemble. This is the memory-
    safe route for distribution checks on large ensembles, where full
    paths would need n_traj * n_nodes floats.
    """
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    if not (isinstance(n_traj, (int, np.integer)) and n_traj >= 1):
        raise DomainError(f"n_traj must be a positive integer, got {n_traj}")
    if mode == "retro" and not model.product_form:
        raise UnsupportedModelError(
            f"model {model.name!r} is not product form; retro integration needs "
            "a1 = a1(p), a2 = a2(q)"
        )
    cols = {float(t): grid.index_of(float(t)) for t in times}
    if not cols:
        raise DomainError("at least one snapshot time is required")
    out = {
        t: (np.empty(n_traj), np.empty(n_traj)) for t in cols
    }

    def consume(start, cp, cq):
        stop = start + cp.shape[0]
        for t, k in cols.items():
            out[t][0][start:stop] = cp[:, k]
            out[t][1][start:stop] = cq[:, k]

    _run_chunks(
        mode, model, grid, sampler, mu_if_guided, n_traj, master_seed,
        drift_sign_convention, chunk_size, consume,
    )
    return out
