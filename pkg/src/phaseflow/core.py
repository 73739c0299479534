"""Phase-space states, Husimi projection, and Fokker-Planck evolution.

This module defines the model vocabulary shared by the whole package:
process coefficient bundles, wavefunctions and their coherent-state
phase-space projections, analytic Gaussian flows, score and guidance
drifts, and grid evolution of the signed-diffusion transport equation

    dQ/dt = -d_p(a1 Q) - d_q(a2 Q) + 1/2 d_pp(b^2 Q) - 1/2 d_qq(b^2 Q)

whose q-direction diffusion enters with a negative sign. That signed
term makes the equation a backward heat equation in q, so any literal
local stencil amplifies grid-scale noise at a rate ~ 2 b^2 / dq^2 no
matter how small dt is. The stepper here therefore evaluates the same
conservative-form generator spectrally and band-limits the update, so
the well-resolved bulk evolves accurately while unresolvable modes are
frozen instead of amplified.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    CoverageError,
    DomainError,
    EvaluationError,
    StabilityError,
    SupportError,
    UnsupportedModelError,
)

__all__ = [
    "PhaseState",
    "TimeGrid",
    "DiffusionModel",
    "Wavefunction",
    "HusimiGrid",
    "DensityGrid1D",
    "GaussianMarginal",
    "GaussianPhaseSolution",
    "coherent_state",
    "husimi",
    "berezin_expectation",
    "marginal_q",
    "amplifier_model",
    "free_particle_model",
    "amplifier_solution",
    "gaussian_phase_grid",
    "marginal_density_grid",
    "score",
    "guidance_drift",
    "l1_distance",
    "fokker_planck_step",
    "fokker_planck_evolve",
    "guided_marginal_flow",
]

DRIFT_CONVENTIONS = ("anderson", "paper_literal")

_SCORE_FLOOR = 1e-30


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


def _uniform_spacing(grid: np.ndarray, name: str) -> float:
    if grid.ndim != 1 or grid.size < 2:
        raise DomainError(f"{name} must be a 1-D grid with at least two nodes")
    if not np.all(np.isfinite(grid)):
        raise DomainError(f"{name} contains non-finite nodes")
    steps = np.diff(grid)
    h = float(steps[0])
    if h <= 0.0 or np.any(np.abs(steps - h) > 1e-9 * max(abs(h), 1.0)):
        raise DomainError(f"{name} must be strictly increasing with uniform spacing")
    return h


def _trapz2(values: np.ndarray, dp: float, dq: float) -> float:
    wq = np.trapezoid(values, dx=dq, axis=1)
    return float(np.trapezoid(wq, dx=dp))


@dataclass(frozen=True)
class PhaseState:
    """A single point (p, q) in phase space."""

    p: float
    q: float

    def __post_init__(self):
        if not (np.isfinite(self.p) and np.isfinite(self.q)):
            raise DomainError("phase-space coordinates must be finite")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time discretization of [t0, tf].

    n_steps is derived from dt; the product n_steps * dt must land on tf
    to within one part in 1e9, so a grid always covers the interval
    exactly instead of stopping one ragged step short.
    """

    t0: float
    tf: float
    dt: float
    n_steps: int = field(init=False)

    def __post_init__(self):
        if not (np.isfinite(self.t0) and np.isfinite(self.tf) and np.isfinite(self.dt)):
            raise DomainError("t0, tf, dt must be finite")
        if not self.tf > self.t0:
            raise DomainError(f"tf ({self.tf}) must exceed t0 ({self.t0})")
        if not 0.0 < self.dt <= self.tf - self.t0:
            raise DomainError(f"dt ({self.dt}) must lie in (0, tf - t0]")
        n = int(round((self.tf - self.t0) / self.dt))
        if abs(self.t0 + n * self.dt - self.tf) > 1e-9 * max(1.0, abs(self.tf)):
            raise DomainError(
                f"dt ({self.dt}) does not divide [{self.t0}, {self.tf}] evenly"
            )
        object.__setattr__(self, "n_steps", n)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def index_of(self, t: float) -> int:
        """Grid index of time t; t must sit on a node within 1e-9."""
        k = int(round((t - self.t0) / self.dt))
        if k < 0 or k > self.n_steps or abs(self.t0 + k * self.dt - t) > 1e-9:
            raise DomainError(f"time {t} is not a node of this grid")
        return k


_SPOT_POINTS = (-1.7, 0.0, 2.3)


@dataclass(frozen=True)
class DiffusionModel:
    """Coefficient bundle (a1, a2, b) of the phase-space process.

    a1 drives p, a2 drives q, b is the shared diffusion amplitude; all
    three are callables of (p, q, t). product_form asserts that a1
    depends only on p while a2 and b depend only on q; the assertion is
    spot-checked on a small sample lattice at construction, as is
    finiteness of all three coefficients.
    """

    a1: Callable
    a2: Callable
    b: Callable
    name: str
    product_form: bool

    def __post_init__(self):
        for label, fn in (("a1", self.a1), ("a2", self.a2), ("b", self.b)):
            for p in _SPOT_POINTS:
                for q in _SPOT_POINTS:
                    for t in (0.0, 0.5):
                        v = float(fn(p, q, t))
                        if not np.isfinite(v):
                            raise DomainError(
                                f"{label}({p}, {q}, {t}) of model {self.name!r} is not finite"
                            )
                        if label == "b" and v < 0.0:
                            raise DomainError(
                                f"b({p}, {q}, {t}) of model {self.name!r} is negative"
                            )
        if self.product_form:
            for p in _SPOT_POINTS:
                for q in _SPOT_POINTS:
                    if abs(float(self.a1(p, q, 0.0)) - float(self.a1(p, 0.0, 0.0))) > 0.0:
                        raise DomainError(
                            f"model {self.name!r} claims product form but a1 varies with q"
                        )
                    for fn, label in ((self.a2, "a2"), (self.b, "b")):
                        if abs(float(fn(p, q, 0.0)) - float(fn(0.0, q, 0.0))) > 0.0:
                            raise DomainError(
                                f"model {self.name!r} claims product form but {label} varies with p"
                            )


def amplifier_model() -> DiffusionModel:
    """Linear amplifier: a1 = -p, a2 = q, b = sqrt(2).

    The diffusion amplitude sqrt(2) makes b^2 / 2 = 1, matching unit
    second-derivative coefficients in the transport equation and the
    sqrt(2) noise amplitude of the associated coordinate processes.
    """
    return DiffusionModel(
        a1=lambda p, q, t: -p,
        a2=lambda p, q, t: q,
        b=lambda p, q, t: np.sqrt(2.0) * np.ones_like(np.asarray(p, dtype=float)),
        name="amplifier",
        product_form=True,
    )


def free_particle_model(m: float) -> DiffusionModel:
    """Free particle of mass m: a1 = 0, a2 = p/m, b = 0.

    Not product form, since the position drift depends on momentum.
    """
    if not (m > 0.0 and np.isfinite(m)):
        raise DomainError(f"mass must be positive and finite, got {m}")
    return DiffusionModel(
        a1=lambda p, q, t: np.zeros_like(np.asarray(p, dtype=float)),
        a2=lambda p, q, t: np.asarray(p, dtype=float) / m,
        b=lambda p, q, t: np.zeros_like(np.asarray(p, dtype=float)),
        name=f"free_particle(m={m:g})",
        product_form=False,
    )


@dataclass(frozen=True)
class Wavefunction:
    """Complex amplitudes sampled on a uniform position grid.

    The trapezoidal norm must equal 1 within 1e-6; construction refuses
    anything less normalized than that.
    """

    x_grid: np.ndarray
    amplitudes: np.ndarray
    hbar: float

    def __post_init__(self):
        x = np.asarray(self.x_grid, dtype=float)
        dx = _uniform_spacing(x, "x_grid")
        amp = np.asarray(self.amplitudes, dtype=complex)
        if amp.shape != x.shape:
            raise DomainError("amplitudes must match x_grid in shape")
        if not (self.hbar > 0.0 and np.isfinite(self.hbar)):
            raise DomainError(f"hbar must be positive and finite, got {self.hbar}")
        norm = float(np.trapezoid(np.abs(amp) ** 2, dx=dx))
        if abs(norm - 1.0) > 1e-6:
            raise DomainError(
                f"wavefunction norm {norm:.8f} deviates from 1 by more than 1e-6"
            )
        object.__setattr__(self, "x_grid", _freeze(x))
        object.__setattr__(self, "amplitudes", _freeze(amp))

    @property
    def dx(self) -> float:
        return float(self.x_grid[1] - self.x_grid[0])


def coherent_state(p0: float, q0: float, hbar: float, x_grid) -> Wavefunction:
    """Gaussian wave packet centered at (p0, q0) with position spread hbar/2.

    The grid must reach q0 +- 8 sqrt(hbar) with spacing at most
    sqrt(hbar)/8; the amplitude is renormalized on the grid so the
    trapezoidal norm is 1 to machine precision.
    """
    if not (hbar > 0.0 and np.isfinite(hbar)):
        raise DomainError(f"hbar must be positive and finite, got {hbar}")
    x = np.asarray(x_grid, dtype=float)
    dx = _uniform_spacing(x, "x_grid")
    s = np.sqrt(hbar)
    if x[0] > q0 - 8.0 * s or x[-1] < q0 + 8.0 * s:
        raise DomainError(
            f"x_grid [{x[0]:g}, {x[-1]:g}] does not span q0 +- 8*sqrt(hbar) "
            f"= [{q0 - 8 * s:g}, {q0 + 8 * s:g}]"
        )
    if dx > s / 8.0:
        raise DomainError(
            f"x_grid spacing {dx:g} exceeds sqrt(hbar)/8 = {s / 8:g}"
        )
    amp = (np.pi * hbar) ** -0.25 * np.exp(
        -1j * p0 * q0 / (2.0 * hbar)
        + 1j * p0 * x / hbar
        - (x - q0) ** 2 / (2.0 * hbar)
    )
    amp = amp / np.sqrt(np.trapezoid(np.abs(amp) ** 2, dx=dx))
    return Wavefunction(x_grid=x, amplitudes=amp, hbar=hbar)


@dataclass(frozen=True)
class HusimiGrid:
    """Nonnegative phase-space quasi-density on a uniform (p, q) grid.

    values[i, j] lives at (p_grid[i], q_grid[j]). The trapezoidal double
    integral must equal 1 within quad_tol.
    """

    p_grid: np.ndarray
    q_grid: np.ndarray
    values: np.ndarray
    hbar: float
    quad_tol: float = 1e-4

    def __post_init__(self):
        p = np.asarray(self.p_grid, dtype=float)
        q = np.asarray(self.q_grid, dtype=float)
        dp = _uniform_spacing(p, "p_grid")
        dq = _uniform_spacing(q, "q_grid")
        v = np.asarray(self.values, dtype=float)
        if v.shape != (p.size, q.size):
            raise DomainError(
                f"values shape {v.shape} does not match (n_p, n_q) = ({p.size}, {q.size})"
            )
        if not np.all(np.isfinite(v)):
            raise DomainError("grid values must be finite")
        if np.any(v < 0.0):
            raise DomainError("grid values must be nonnegative")
        if not (self.hbar > 0.0 and np.isfinite(self.hbar)):
            raise DomainError(f"hbar must be positive and finite, got {self.hbar}")
        if not (0.0 < self.quad_tol < 1.0):
            raise DomainError("quad_tol must lie in (0, 1)")
        total = _trapz2(v, dp, dq)
        if abs(total - 1.0) > self.quad_tol:
            raise CoverageError(
                f"grid integral {total:.8f} deviates from 1 by more than {self.quad_tol:g}; "
                "the grid does not capture the state"
            )
        object.__setattr__(self, "p_grid", _freeze(p))
        object.__setattr__(self, "q_grid", _freeze(q))
        object.__setattr__(self, "values", _freeze(v))

    @property
    def dp(self) -> float:
        return float(self.p_grid[1] - self.p_grid[0])

    @property
    def dq(self) -> float:
        return float(self.q_grid[1] - self.q_grid[0])

    def total_mass(self) -> float:
        return _trapz2(self.values, self.dp, self.dq)

    def to_csv(self, path) -> None:
        """Write rows (p, q, value) with a header, p-major order."""
        pp, qq = np.meshgrid(self.p_grid, self.q_grid, indexing="ij")
        rows = np.column_stack([pp.ravel(), qq.ravel(), self.values.ravel()])
        np.savetxt(path, rows, fmt="%.17g", delimiter=",", header="p,q,value", comments="")

    @classmethod
    def from_csv(cls, path, hbar: float, quad_tol: float = 1e-4) -> "HusimiGrid":
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if rows.shape[1] != 3:
            raise DomainError(f"{path} does not have 3 columns (p, q, value)")
        p = np.unique(rows[:, 0])
        q = np.unique(rows[:, 1])
        if p.size * q.size != rows.shape[0]:
            raise DomainError(f"{path} is not a complete rectangular grid")
        values = np.full((p.size, q.size), np.nan)
        pi = np.searchsorted(p, rows[:, 0])
        qi = np.searchsorted(q, rows[:, 1])
        values[pi, qi] = rows[:, 2]
        return cls(p_grid=p, q_grid=q, values=values, hbar=hbar, quad_tol=quad_tol)


@dataclass(frozen=True)
class DensityGrid1D:
    """Nonnegative density samples on a uniform 1-D grid, normalized within quad_tol."""

    q_grid: np.ndarray
    values: np.ndarray
    quad_tol: float = 1e-3

    def __post_init__(self):
        q = np.asarray(self.q_grid, dtype=float)
        dq = _uniform_spacing(q, "q_grid")
        v = np.asarray(self.values, dtype=float)
        if v.shape != q.shape:
            raise DomainError("values must match q_grid in shape")
        if not np.all(np.isfinite(v)):
            raise DomainError("density values must be finite")
        if np.any(v < 0.0):
            raise DomainError("density values must be nonnegative")
        if not (0.0 < self.quad_tol < 1.0):
            raise DomainError("quad_tol must lie in (0, 1)")
        total = float(np.trapezoid(v, dx=dq))
        if abs(total - 1.0) > self.quad_tol:
            raise CoverageError(
                f"density integral {total:.8f} deviates from 1 by more than {self.quad_tol:g}"
            )
        object.__setattr__(self, "q_grid", _freeze(q))
        object.__setattr__(self, "values", _freeze(v))

    @property
    def dq(self) -> float:
        return float(self.q_grid[1] - self.q_grid[0])

    def mean(self) -> float:
        return float(np.trapezoid(self.q_grid * self.values, dx=self.dq))

    def variance(self) -> float:
        m = self.mean()
        return float(np.trapezoid((self.q_grid - m) ** 2 * self.values, dx=self.dq))

    def to_csv(self, path) -> None:
        rows = np.column_stack([self.q_grid, self.values])
        np.savetxt(path, rows, fmt="%.17g", delimiter=",", header="q,value", comments="")

    @classmethod
    def from_csv(cls, path, quad_tol: float = 1e-3) -> "DensityGrid1D":
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if rows.shape[1] != 2:
            raise DomainError(f"{path} does not have 2 columns (q, value)")
        return cls(q_grid=rows[:, 0], values=rows[:, 1], quad_tol=quad_tol)


def husimi(psi: Wavefunction, p_grid, q_grid) -> HusimiGrid:
    """Project a wavefunction onto coherent states over a (p, q) grid.

    values(p, q) = |<phi_pq, psi>|^2 / (2 pi hbar), with the overlap
    integral evaluated by trapezoidal quadrature on psi's position grid.
    The caller chooses the grid; if the result integrates to something
    other than 1 beyond the declared tolerance, the grid missed part of
    the state and a coverage error is raised.
    """
    p = np.asarray(p_grid, dtype=float)
    q = np.asarray(q_grid, dtype=float)
    _uniform_spacing(p, "p_grid")
    _uniform_spacing(q, "q_grid")
    hbar = psi.hbar
    x = psi.x_grid
    w = np.full(x.size, psi.dx)
    w[0] *= 0.5
    w[-1] *= 0.5  # trapezoid weights
    # overlap factorizes: a q-dependent Gaussian window times a p-dependent
    # Fourier phase, so the (p, q) sweep is two dense mat-vecs, not a loop
    windowed = np.exp(-((x[None, :] - q[:, None]) ** 2) / (2.0 * hbar)) * (
        psi.amplitudes * w
    )[None, :]
    phases = np.exp(-1j * np.outer(p, x) / hbar)
    overlaps = phases @ windowed.T  # (n_p, n_q)
    values = (np.pi * hbar) ** -0.5 * np.abs(overlaps) ** 2 / (2.0 * np.pi * hbar)
    return HusimiGrid(p_grid=p, q_grid=q, values=values, hbar=hbar)


def berezin_expectation(f, Q: HusimiGrid) -> float:
    """Trapezoidal phase-space average of f(p, q) against Q."""
    pp, qq = np.meshgrid(Q.p_grid, Q.q_grid, indexing="ij")
    with np.errstate(all="ignore"):  # non-finite output is reported, not warned
        fv = np.asarray(f(pp, qq), dtype=float)
        if fv.shape != Q.values.shape:
            fv = np.broadcast_to(fv, Q.values.shape)
        result = _trapz2(fv * Q.values, Q.dp, Q.dq)
    if not np.isfinite(result):
        raise EvaluationError("phase-space average overflowed or is undefined")
    return result


def marginal_q(Q: HusimiGrid) -> DensityGrid1D:
    """Integrate out p, returning the position marginal."""
    vals = np.trapezoid(Q.values, dx=Q.dp, axis=0)
    return DensityGrid1D(q_grid=Q.q_grid, values=vals, quad_tol=max(Q.quad_tol, 1e-3))


@dataclass(frozen=True)
class GaussianMarginal:
    """Gaussian 1-D law with a time-dependent mean and constant variance."""

    mean: Callable
    variance: float

    def __post_init__(self):
        if not (self.variance > 0.0 and np.isfinite(self.variance)):
            raise DomainError(f"variance must be positive and finite, got {self.variance}")
        for t in (0.0, 0.5, 1.0):
            if not np.isfinite(float(self.mean(t))):
                raise DomainError(f"mean({t}) is not finite")

    def density(self, x, t: float):
        m = float(self.mean(t))
        return np.exp(-((np.asarray(x, dtype=float) - m) ** 2) / (2.0 * self.variance)) / np.sqrt(
            2.0 * np.pi * self.variance
        )


@dataclass(frozen=True)
class GaussianPhaseSolution:
    """Product of independent Gaussian marginals for p and q."""

    p_marginal: GaussianMarginal
    q_marginal: GaussianMarginal

    def density(self, p, q, t: float):
        return self.p_marginal.density(p, t) * self.q_marginal.density(q, t)

    def to_json(self, path) -> None:
        """Serialize as {p_mean0, q_mean0, variance}.

        This format captures the amplifier-type solution family: means at
        t = 0 plus one shared variance, with the exponential mean laws
        implied. Writing a solution with unequal marginal variances is
        refused rather than silently truncated.
        """
        vp, vq = self.p_marginal.variance, self.q_marginal.variance
        if abs(vp - vq) > 1e-12 * max(vp, vq):
            raise DomainError("JSON format requires equal p and q variances")
        payload = {
            "p_mean0": float(self.p_marginal.mean(0.0)),
            "q_mean0": float(self.q_marginal.mean(0.0)),
            "variance": vp,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "GaussianPhaseSolution":
        with open(path) as fh:
            payload = json.load(fh)
        missing = {"p_mean0", "q_mean0", "variance"} - set(payload)
        if missing:
            raise DomainError(f"solution JSON missing fields: {sorted(missing)}")
        p0, q0, var = payload["p_mean0"], payload["q_mean0"], payload["variance"]
        return cls(
            p_marginal=GaussianMarginal(mean=lambda t: p0 * np.exp(-t), variance=var),
            q_marginal=GaussianMarginal(mean=lambda t: q0 * np.exp(t), variance=var),
        )


def amplifier_solution(p0: float, q0: float) -> GaussianPhaseSolution:
    """Analytic amplifier flow: q-mean q0 e^t, p-mean p0 e^{-t}, unit variances."""
    if not (np.isfinite(p0) and np.isfinite(q0)):
        raise DomainError("p0 and q0 must be finite")
    return GaussianPhaseSolution(
        p_marginal=GaussianMarginal(mean=lambda t: p0 * np.exp(-t), variance=1.0),
        q_marginal=GaussianMarginal(mean=lambda t: q0 * np.exp(t), variance=1.0),
    )


def gaussian_phase_grid(
    solution: GaussianPhaseSolution, t: float, p_grid, q_grid, hbar: float = 1.0
) -> HusimiGrid:
    """Sample an analytic product solution onto a HusimiGrid at time t."""
    p = np.asarray(p_grid, dtype=float)
    q = np.asarray(q_grid, dtype=float)
    values = np.outer(solution.p_marginal.density(p, t), solution.q_marginal.density(q, t))
    return HusimiGrid(p_grid=p, q_grid=q, values=values, hbar=hbar)


def marginal_density_grid(
    marginal: GaussianMarginal, t: float, q_grid, quad_tol: float = 1e-3
) -> DensityGrid1D:
    """Sample a Gaussian marginal onto a DensityGrid1D at time t."""
    q = np.asarray(q_grid, dtype=float)
    return DensityGrid1D(q_grid=q, values=marginal.density(q, t), quad_tol=quad_tol)


def score(mu, q, t: float):
    """Logarithmic density gradient d_q log mu_t at q.

    GaussianMarginal uses the closed form -(q - mean(t)) / variance.
    DensityGrid1D uses a central finite difference of log values at the
    grid nodes, linearly interpolated between nodes; the density must
    exceed 1e-30 on the stencil, and q must be far enough from the grid
    edge for the stencil to exist. Accepts scalar or array q.
    """
    if isinstance(mu, GaussianMarginal):
        return -(np.asarray(q, dtype=float) - float(mu.mean(t))) / mu.variance
    if not isinstance(mu, DensityGrid1D):
        raise DomainError("mu must be a GaussianMarginal or DensityGrid1D")
    qa = np.asarray(q, dtype=float)
    scalar = qa.ndim == 0
    qa = np.atleast_1d(qa)
    grid, vals, dq = mu.q_grid, mu.values, mu.dq
    # stencil at node j uses j-1 and j+1; interpolation between nodes j, j+1
    # therefore needs nodes j-1 .. j+2 inside the grid
    j = np.searchsorted(grid, qa, side="right") - 1
    if np.any(j < 1) or np.any(j > grid.size - 3):
        raise SupportError(
            "evaluation point lies outside the differentiable interior of the grid"
        )
    stencil = np.stack([vals[j - 1], vals[j], vals[j + 1], vals[j + 2]])
    if np.any(stencil <= _SCORE_FLOOR):
        raise SupportError(
            f"density below the support floor {_SCORE_FLOOR:g} near an evaluation point"
        )
    logs = np.log(stencil)
    sj = (logs[2] - logs[0]) / (2.0 * dq)
    sj1 = (logs[3] - logs[1]) / (2.0 * dq)
    w = (qa - grid[j]) / dq
    out = (1.0 - w) * sj + w * sj1
    return float(out[0]) if scalar else out


def _require_b_independent_of_p(model: DiffusionModel, q, t: float):
    qa = np.atleast_1d(np.asarray(q, dtype=float))
    probe = qa[:: max(1, qa.size // 3)][:3]
    for qv in probe:
        ref = float(np.asarray(model.b(0.0, qv, t)))
        for pv in (-1.3, 1.7):
            if abs(float(np.asarray(model.b(pv, qv, t))) - ref) > 1e-12 * max(1.0, abs(ref)):
                raise UnsupportedModelError(
                    f"model {model.name!r} has p-dependent diffusion; guided position "
                    "dynamics are defined only for b = b(q, t)"
                )


def guidance_drift(
    model: DiffusionModel,
    mu,
    p,
    q,
    t: float,
    drift_sign_convention: str = "anderson",
):
    """Effective forward position drift combining a2 with the score term.

    anderson convention:      a2(p,q,t) + d_q(b^2 mu_t)(q) / mu_t(q)
    paper_literal convention: -a2(p,q,t) + d_q(b^2 mu_t)(q) / mu_t(q)

    The anderson sign is the default: it is the one under which the
    forward position flow preserves the analytic amplifier law, and the
    one that reduces to straight-line transport q' = p/m for the free
    particle. The literal variant is kept so that its failure of both
    checks stays demonstrable. Degenerate diffusion (b identically 0)
    short-circuits to a2 exactly, without touching mu.

    Diffusion must not depend on p; models violating that are rejected.
    """
    if drift_sign_convention not in DRIFT_CONVENTIONS:
        raise DomainError(
            f"drift_sign_convention must be one of {DRIFT_CONVENTIONS}, "
            f"got {drift_sign_convention!r}"
        )
    qa = np.asarray(q, dtype=float)
    pa = np.asarray(p, dtype=float)
    a2 = np.asarray(model.a2(pa, qa, t), dtype=float)
    sign = 1.0 if drift_sign_convention == "anderson" else -1.0
    _require_b_independent_of_p(model, qa, t)
    b = np.asarray(model.b(0.0, qa, t), dtype=float)
    b2 = b * b
    if np.all(b2 == 0.0):
        out = sign * a2
        return float(out) if np.ndim(q) == 0 and np.ndim(p) == 0 else out
    # d_q(b^2 mu)/mu = d_q(b^2) + b^2 * score; b is smooth so a small
    # central difference resolves its gradient to machine accuracy
    h = 1e-6 * np.maximum(1.0, np.abs(qa))
    bp = np.asarray(model.b(0.0, qa + h, t), dtype=float)
    bm = np.asarray(model.b(0.0, qa - h, t), dtype=float)
    db2 = (bp * bp - bm * bm) / (2.0 * h)
    out = sign * a2 + db2 + b2 * score(mu, qa, t)
    return float(out) if np.ndim(q) == 0 and np.ndim(p) == 0 else out


def l1_distance(a, b) -> float:
    """Trapezoidal L1 distance between two densities on identical grids."""
    if isinstance(a, HusimiGrid) and isinstance(b, HusimiGrid):
        if a.values.shape != b.values.shape or not (
            np.allclose(a.p_grid, b.p_grid) and np.allclose(a.q_grid, b.q_grid)
        ):
            raise DomainError("grids must coincide for an L1 comparison")
        return _trapz2(np.abs(a.values - b.values), a.dp, a.dq)
    if isinstance(a, DensityGrid1D) and isinstance(b, DensityGrid1D):
        if a.values.shape != b.values.shape or not np.allclose(a.q_grid, b.q_grid):
            raise DomainError("grids must coincide for an L1 comparison")
        return float(np.trapezoid(np.abs(a.values - b.values), dx=a.dq))
    raise DomainError("l1_distance expects two HusimiGrids or two DensityGrid1Ds")


def _mesh_coefficients(model: DiffusionModel, p: np.ndarray, q: np.ndarray, t: float):
    pp, qq = np.meshgrid(p, q, indexing="ij")
    a1 = np.broadcast_to(np.asarray(model.a1(pp, qq, t), dtype=float), pp.shape)
    a2 = np.broadcast_to(np.asarray(model.a2(pp, qq, t), dtype=float), pp.shape)
    b = np.broadcast_to(np.asarray(model.b(pp, qq, t), dtype=float), pp.shape)
    return a1, a2, b * b


def _check_step_preconditions(
    dt: float, dp: float, dq: float, a1: np.ndarray, a2: np.ndarray, b2: np.ndarray
):
    h = min(dp, dq)
    b2max = float(np.max(b2))
    amax = float(max(np.max(np.abs(a1)), np.max(np.abs(a2))))
    if b2max > 0.0 and dt > 0.2 * h * h / b2max:
        raise StabilityError(
            f"dt = {dt:g} violates the diffusive bound 0.2*min(dp,dq)^2/max(b^2) "
            f"= {0.2 * h * h / b2max:g}"
        )
    if amax > 0.0 and dt > 0.2 * h / amax:
        raise StabilityError(
            f"dt = {dt:g} violates the advective bound 0.2*min(dp,dq)/max|a| "
            f"= {0.2 * h / amax:g}"
        )


def _boundary_mass(values: np.ndarray, dp: float, dq: float) -> float:
    edge = (
        np.sum(values[0, :])
        + np.sum(values[-1, :])
        + np.sum(values[1:-1, 0])
        + np.sum(values[1:-1, -1])
    )
    return float(edge * dp * dq)


class _SpectralWorkspace:
    """Precomputed wavenumbers and band mask for one (p, q) grid."""

    def __init__(self, n_p: int, n_q: int, dp: float, dq: float, cutoff: float):
        self.kp = 2.0 * np.pi * np.fft.fftfreq(n_p, dp)[:, None]
        self.kq = 2.0 * np.pi * np.fft.rfftfreq(n_q, dq)[None, :]
        self.mask = (np.abs(self.kp) <= cutoff) & (np.abs(self.kq) <= cutoff)
        self.shape = (n_p, n_q)

    def update(self, F, a1, a2, b2, dt):
        """One band-limited explicit Euler increment of the signed generator."""
        f1 = np.fft.rfft2(a1 * F)
        f2 = np.fft.rfft2(a2 * F)
        f3 = np.fft.rfft2(b2 * F)
        gen = (
            -1j * self.kp * f1
            - 1j * self.kq * f2
            - 0.5 * self.kp**2 * f3
            + 0.5 * self.kq**2 * f3
        )
        dF = np.fft.irfft2(np.where(self.mask, gen, 0.0), s=self.shape)
        out = F + dt * dF
        np.maximum(out, 0.0, out=out)  # shave band-limit ringing, ~1e-14 deep
        out[0, :] = out[-1, :] = 0.0
        out[:, 0] = out[:, -1] = 0.0
        return out


def fokker_planck_step(
    Q: HusimiGrid,
    model: DiffusionModel,
    dt: float,
    t: float = 0.0,
    spectral_cutoff: float = 8.0,
) -> HusimiGrid:
    """One explicit Euler step of the signed-diffusion transport equation.

    The generator is applied in conservative form with spatial derivatives
    evaluated spectrally, and the increment is restricted to wavenumbers
    |k_p|, |k_q| <= spectral_cutoff. Modes beyond the cutoff do not move;
    this is what keeps the anti-diffusive q-term from amplifying
    grid-scale content, and it caps the resolvable feature size at
    roughly 1/spectral_cutoff. Cutoffs much above 8 re-admit the
    instability; the default is a measured stability edge, not a style
    choice. Boundary values are clamped to zero, so the grid must be
    wide enough that boundary mass stays below 1e-8.

    dt must satisfy both explicit-scheme bounds, dt <= 0.2 min(dp,dq)^2
    / max(b^2) and dt <= 0.2 min(dp,dq) / max(|a1|, |a2|), evaluated
    over the grid at time t.
    """
    if not (dt > 0.0 and np.isfinite(dt)):
        raise DomainError(f"dt must be positive and finite, got {dt}")
    if not (spectral_cutoff > 0.0 and np.isfinite(spectral_cutoff)):
        raise DomainError("spectral_cutoff must be positive and finite")
    dp, dq = Q.dp, Q.dq
    a1, a2, b2 = _mesh_coefficients(model, Q.p_grid, Q.q_grid, t)
    _check_step_preconditions(dt, dp, dq, a1, a2, b2)
    bm = _boundary_mass(Q.values, dp, dq)
    if bm >= 1e-8:
        raise CoverageError(
            f"boundary mass {bm:.3e} exceeds 1e-8; widen the grid before stepping"
        )
    ws = _SpectralWorkspace(Q.p_grid.size, Q.q_grid.size, dp, dq, spectral_cutoff)
    out = ws.update(Q.values.copy(), a1, a2, b2, dt)
    return HusimiGrid(
        p_grid=Q.p_grid, q_grid=Q.q_grid, values=out, hbar=Q.hbar, quad_tol=Q.quad_tol
    )


def fokker_planck_evolve(
    Q: HusimiGrid,
    model: DiffusionModel,
    duration: float,
    dt: float,
    t0: float = 0.0,
    spectral_cutoff: float = 8.0,
) -> HusimiGrid:
    """Repeat fokker_planck_step over a duration, amortizing the setup.

    Identical arithmetic to the single-step operation, with the spectral
    workspace built once and validation performed on entry, every 200
    steps, and on exit. The step count is duration/dt rounded to the
    nearest integer and must match within one part in 1e9.
    """
    if not (duration > 0.0 and np.isfinite(duration)):
        raise DomainError(f"duration must be positive and finite, got {duration}")
    n = int(round(duration / dt))
    if n < 1 or abs(n * dt - duration) > 1e-9 * max(1.0, duration):
        raise DomainError(f"dt = {dt:g} does not divide duration {duration:g} evenly")
    dp, dq = Q.dp, Q.dq
    ws = _SpectralWorkspace(Q.p_grid.size, Q.q_grid.size, dp, dq, spectral_cutoff)
    F = Q.values.copy()
    for k in range(n):
        t = t0 + k * dt
        a1, a2, b2 = _mesh_coefficients(model, Q.p_grid, Q.q_grid, t)
        if k == 0:
            _check_step_preconditions(dt, dp, dq, a1, a2, b2)
        if k % 200 == 0:
            bm = _boundary_mass(F, dp, dq)
            if bm >= 1e-8:
                raise CoverageError(
                    f"boundary mass {bm:.3e} exceeds 1e-8 at t = {t:g}; "
                    "the state has outgrown the grid"
                )
        F = ws.update(F, a1, a2, b2, dt)
    return HusimiGrid(
        p_grid=Q.p_grid, q_grid=Q.q_grid, values=F, hbar=Q.hbar, quad_tol=Q.quad_tol
    )


def guided_marginal_flow(
    model: DiffusionModel,
    solution: GaussianPhaseSolution,
    t0: float,
    t1: float,
    drift_sign_convention: str = "anderson",
    n_nodes: int = 1751,
    pad: float = 8.0,
    dt: float | None = None,
    quad_tol: float = 0.05,
) -> DensityGrid1D:
    """Evolve the position marginal forward under the guided drift.

    Solves d mu/dt = -d_q(abar2 mu) + 1/2 d_qq(b^2 mu) with abar2 the
    guidance drift built from the analytic score of `solution`, using a
    conservative central-difference scheme. Unlike the phase-space
    equation, this flow has positive diffusion and is well-posed forward
    in time, which makes it the clean referee between the two drift sign
    conventions: started from the analytic marginal at t0, `anderson`
    reproduces the analytic marginal at t1 while `paper_literal` visibly
    does not.

    Requires a2 and b to be p-independent and diffusion to be
    non-degenerate; other models are rejected.
    """
    if drift_sign_convention not in DRIFT_CONVENTIONS:
        raise DomainError(
            f"drift_sign_convention must be one of {DRIFT_CONVENTIONS}, "
            f"got {drift_sign_convention!r}"
        )
    if not t1 > t0:
        raise DomainError(f"t1 ({t1}) must exceed t0 ({t0})")
    marg = solution.q_marginal
    sd = float(np.sqrt(marg.variance))
    means = [float(marg.mean(t)) for t in np.linspace(t0, t1, 33)]
    half = pad * max(sd, 1.0)
    grid = np.linspace(min(means) - half, max(means) + half, n_nodes)
    dq = grid[1] - grid[0]
    _require_b_independent_of_p(model, grid, t0)
    for pv in (-1.3, 0.0, 1.7):
        ref = np.asarray(model.a2(0.0, grid[::700], t0), dtype=float)
        got = np.asarray(model.a2(pv, grid[::700], t0), dtype=float)
        if np.any(np.abs(got - ref) > 1e-12 * np.maximum(1.0, np.abs(ref))):
            raise UnsupportedModelError(
                f"model {model.name!r} has p-dependent position drift; its marginal "
                "flow does not close in q alone"
            )
    b0 = np.asarray(model.b(0.0, grid, t0), dtype=float)
    b2max = float(np.max(b0 * b0))
    if b2max == 0.0:
        raise UnsupportedModelError(
            f"model {model.name!r} has degenerate diffusion; the guided marginal "
            "flow needs b > 0 somewhere"
        )
    if dt is None:
        dt = 0.2 * dq * dq / b2max
    n = max(1, int(np.ceil((t1 - t0) / dt)))
    dt = (t1 - t0) / n
    sign = 1.0 if drift_sign_convention == "anderson" else -1.0
    mu = marg.density(grid, t0)
    for k in range(n):
        t = t0 + k * dt
        b = np.asarray(model.b(0.0, grid, t), dtype=float)
        b2 = b * b
        h = 1e-6
        bp = np.asarray(model.b(0.0, grid + h, t), dtype=float)
        bm = np.asarray(model.b(0.0, grid - h, t), dtype=float)
        db2 = (bp * bp - bm * bm) / (2.0 * h)
        a2 = np.asarray(model.a2(0.0, grid, t), dtype=float)
        s = -(grid - float(marg.mean(t))) / marg.variance
        drift = sign * a2 + db2 + b2 * s
        flux = drift * mu
        diff = 0.5 * b2 * mu
        rhs = np.zeros_like(mu)
        rhs[1:-1] = -(flux[2:] - flux[:-2]) / (2.0 * dq) + (
            diff[2:] - 2.0 * diff[1:-1] + diff[:-2]
        ) / (dq * dq)
        mu = mu + dt * rhs
        mu[0] = mu[-1] = 0.0
    np.maximum(mu, 0.0, out=mu)
    return DensityGrid1D(q_grid=grid, values=mu, quad_tol=quad_tol)
