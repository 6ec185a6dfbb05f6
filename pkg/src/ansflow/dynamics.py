"""Exponential-Euler time stepping for the anisotropic stochastic flow.

One step of the splitting scheme, from state u at time t:

1. explicit drift:      u* = u + dt * (-c_nl * B(u) + sigma(c_t t, u) phi(t))
2. Ito noise increment: u* += c_noise * sigma(c_t t, u) dW,  dW ~ N(0, dt I_K)
3. integrating factor:  u_hat <- exp(-(c_visc k1^2 + reg_eps^2 k2^2) dt) u_hat

The noise map is always evaluated at the pre-step state, and exactly one
Gaussian vector of length K is drawn per step whenever noise is active, so
trajectories are bitwise reproducible from the generator state.

``EquationSpec`` bundles the scale factors (c_visc, c_nl, c_noise, c_t)
together with the noise model and an optional control; classmethod factories
cover the equation families the rare-event analysis needs: the base flow,
its small-noise version, the controlled version, the noise-free skeleton,
the short-time rescaling and the linear comparison equation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .nonlinear import AdvectionWorkspace, _advect_raw
from .noise import NoiseModel, sigma_columns
from .spectral import GridSpec, SpectralField

__all__ = [
    "SolverConfig",
    "EquationSpec",
    "Trajectory",
    "BlowUpError",
    "ExitTime",
    "solve",
    "solve_skeleton",
    "step",
    "exit_time",
    "read_trajectory_csv",
]

ControlLike = Callable[[float], np.ndarray]


class BlowUpError(RuntimeError):
    """The state left the finite range (or crossed the abort norm).

    Carries the failure time and the trajectory recorded up to the last
    healthy step.
    """

    def __init__(self, time: float, trajectory: "Trajectory"):
        super().__init__(f"solution blew up at t = {time:.6g}")
        self.time = time
        self.trajectory = trajectory


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping parameters.

    ``reg_eps`` adds vertical smoothing reg_eps^2 * k2^2 to the integrating
    factor (zero keeps the purely horizontal dissipation).  ``abort_norm``
    aborts with :class:`BlowUpError` once the H norm exceeds it; NaN/Inf
    always abort.  States are stored every ``save_every`` steps plus the
    final one.
    """

    dt: float
    t_end: float
    scheme: str = "exp_euler"
    save_every: int = 1
    reg_eps: float = 0.0
    abort_norm: float | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end <= 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.scheme != "exp_euler":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.save_every < 1:
            raise ValueError(f"save_every must be >= 1, got {self.save_every}")
        n = round(self.t_end / self.dt)
        if n < 1 or abs(n * self.dt - self.t_end) > 1e-9 * max(self.t_end, 1.0):
            raise ValueError(
                f"t_end = {self.t_end} is not an integer multiple of dt = {self.dt}"
            )

    @property
    def n_steps(self) -> int:
        return round(self.t_end / self.dt)


@dataclass(frozen=True)
class EquationSpec:
    """Which equation to integrate: scale factors, noise model, control."""

    visc_scale: float = 1.0
    nl_scale: float = 1.0
    noise_scale: float = 1.0
    noise_time_scale: float = 1.0
    model: NoiseModel | None = None
    control: ControlLike | None = None

    def __post_init__(self):
        if self.noise_scale != 0.0 and self.model is None:
            raise ValueError("noise_scale != 0 requires a noise model")
        if self.control is not None and self.model is None:
            raise ValueError("a control acts through the noise map; pass a model")

    @property
    def noise_active(self) -> bool:
        return self.model is not None and self.noise_scale != 0.0

    @classmethod
    def base(cls, model: NoiseModel | None = None) -> "EquationSpec":
        """Unit-strength equation; omit the model for the deterministic flow."""
        return cls(1.0, 1.0, 1.0 if model is not None else 0.0, 1.0, model)

    @classmethod
    def small_noise(cls, model: NoiseModel, eps: float) -> "EquationSpec":
        """Noise amplitude sqrt(eps), everything else unit."""
        _check_eps(eps)
        return cls(1.0, 1.0, float(np.sqrt(eps)), 1.0, model)

    @classmethod
    def skeleton(cls, model: NoiseModel, control: ControlLike) -> "EquationSpec":
        """Noise-free flow driven by the control through the noise map."""
        return cls(1.0, 1.0, 0.0, 1.0, model, _as_control(control))

    @classmethod
    def controlled(
        cls, model: NoiseModel, eps: float, control: ControlLike
    ) -> "EquationSpec":
        """Small-noise equation with an added control drift."""
        _check_eps(eps)
        return cls(1.0, 1.0, float(np.sqrt(eps)), 1.0, model, _as_control(control))

    @classmethod
    def small_time(cls, model: NoiseModel, eps: float) -> "EquationSpec":
        """Short-time rescaling: drift scaled by eps, noise by sqrt(eps),
        and the noise map sampled at the compressed time eps * t."""
        _check_eps(eps)
        return cls(eps, eps, float(np.sqrt(eps)), eps, model)

    @classmethod
    def linear_comparison(cls, model: NoiseModel, eps: float) -> "EquationSpec":
        """Driftless comparison equation matching the small-time noise law."""
        _check_eps(eps)
        return cls(0.0, 0.0, float(np.sqrt(eps)), eps, model)


def _check_eps(eps: float) -> None:
    if not (eps > 0):
        raise ValueError(f"eps must be positive, got {eps}")


def _as_control(control) -> ControlLike:
    value_at = getattr(control, "value_at", None)
    return value_at if value_at is not None else control


@dataclass
class Trajectory:
    """Per-step diagnostics and stored states of one run.

    Diagnostic arrays have one entry per time node (n_steps + 1):
    ``h2`` the squared H norm, ``dx1h2`` the squared H norm of d1 u,
    ``h01_2`` and ``h11_2`` the squared anisotropic norms of orders (0,1)
    and (1,1).
    """

    grid: GridSpec
    times: np.ndarray
    h2: np.ndarray
    dx1h2: np.ndarray
    h01_2: np.ndarray
    h11_2: np.ndarray
    saved_steps: list[int] = field(default_factory=list)
    saved_states: list[SpectralField] = field(default_factory=list)

    @property
    def final_state(self) -> SpectralField:
        return self.saved_states[-1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "H2", "dx1H2", "H01_2", "H11_2"])
            for row in zip(self.times, self.h2, self.dx1h2, self.h01_2, self.h11_2):
                writer.writerow([f"{v:.17g}" for v in row])


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    """Read a diagnostics CSV back into arrays keyed by column name."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    data = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header))
    return {name: data[:, j] for j, name in enumerate(header)}


class _Stepper:
    """Cached per-run state: integrating factor, workspace, fixed columns."""

    def __init__(self, grid: GridSpec, eq: EquationSpec, cfg: SolverConfig):
        self.grid = grid
        self.eq = eq
        self.cfg = cfg
        k1sq = grid.k1.astype(np.float64) ** 2
        k2sq = grid.k2.astype(np.float64) ** 2
        rate = eq.visc_scale * k1sq + cfg.reg_eps ** 2 * k2sq
        with np.errstate(over="ignore"):
            self.decay = np.exp(-rate * cfg.dt)
        self.workspace = AdvectionWorkspace(grid) if eq.nl_scale != 0.0 else None
        self.fixed_columns = None
        if eq.model is not None and eq.model.kind == "additive":
            zero = SpectralField(grid, np.zeros((2, grid.n1, grid.n2), np.complex128))
            self.fixed_columns = sigma_columns(eq.model, 0.0, zero)
        # diagnostic weights
        self.w_d1 = k1sq
        self.w_h01 = 1.0 + k2sq
        self.w_h11 = (1.0 + k1sq) * (1.0 + k2sq)

    def columns(self, t: float, coeffs: np.ndarray) -> np.ndarray:
        if self.fixed_columns is not None:
            return self.fixed_columns
        u = SpectralField(self.grid, coeffs)
        return sigma_columns(self.eq.model, self.eq.noise_time_scale * t, u)

    def advance(
        self, t: float, coeffs: np.ndarray, rng: np.random.Generator | None
    ) -> np.ndarray:
        eq, dt = self.eq, self.cfg.dt
        cols = None
        if eq.noise_active or eq.control is not None:
            cols = self.columns(t, coeffs)
        new = coeffs.copy()
        if eq.nl_scale != 0.0:
            new -= (dt * eq.nl_scale) * _advect_raw(coeffs, coeffs, self.workspace)
        if eq.control is not None:
            phi = np.asarray(eq.control(t), dtype=np.float64)
            new += dt * np.einsum("k,kcij->cij", phi, cols)
        if eq.noise_active:
            dw = rng.standard_normal(eq.model.trunc) * np.sqrt(dt)
            new += eq.noise_scale * np.einsum("k,kcij->cij", dw, cols)
        with np.errstate(invalid="ignore", over="ignore"):
            new *= self.decay
        return new

    def diagnostics(self, coeffs: np.ndarray) -> tuple[float, float, float, float]:
        mag = np.abs(coeffs[0]) ** 2 + np.abs(coeffs[1]) ** 2
        return (
            float(np.sum(mag)),
            float(np.sum(self.w_d1 * mag)),
            float(np.sum(self.w_h01 * mag)),
            float(np.sum(self.w_h11 * mag)),
        )


def step(
    u: SpectralField,
    t: float,
    eq: EquationSpec,
    cfg: SolverConfig,
    rng: np.random.Generator | None = None,
) -> SpectralField:
    """Advance one time step; arithmetic identical to :func:`solve`."""
    if eq.noise_active and rng is None:
        raise ValueError("the equation has active noise; pass a generator")
    stepper = _Stepper(u.grid, eq, cfg)
    return SpectralField(u.grid, stepper.advance(t, u.coeffs, rng))


def solve(
    u0: SpectralField,
    eq: EquationSpec,
    cfg: SolverConfig,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Integrate from ``u0`` to ``cfg.t_end``; see the module docstring.

    Raises :class:`BlowUpError` (with the partial trajectory attached) when
    the state stops being finite or crosses ``cfg.abort_norm``.
    """
    if eq.noise_active and rng is None:
        raise ValueError("the equation has active noise; pass a generator")
    stepper = _Stepper(u0.grid, eq, cfg)
    n = cfg.n_steps
    times = np.arange(n + 1) * cfg.dt
    diag = np.empty((4, n + 1))
    traj = Trajectory(
        grid=u0.grid,
        times=times,
        h2=diag[0],
        dx1h2=diag[1],
        h01_2=diag[2],
        h11_2=diag[3],
    )
    coeffs = u0.coeffs.copy()
    diag[:, 0] = stepper.diagnostics(coeffs)
    traj.saved_steps.append(0)
    traj.saved_states.append(SpectralField(u0.grid, coeffs.copy()))
    for i in range(n):
        coeffs = stepper.advance(times[i], coeffs, rng)
        ok = bool(np.all(np.isfinite(coeffs.view(np.float64))))
        if ok:
            diag[:, i + 1] = stepper.diagnostics(coeffs)
            if cfg.abort_norm is not None and diag[0, i + 1] > cfg.abort_norm ** 2:
                ok = False
        if not ok:
            partial = Trajectory(
                grid=u0.grid,
                times=times[: i + 1],
                h2=diag[0, : i + 1].copy(),
                dx1h2=diag[1, : i + 1].copy(),
                h01_2=diag[2, : i + 1].copy(),
                h11_2=diag[3, : i + 1].copy(),
                saved_steps=traj.saved_steps,
                saved_states=traj.saved_states,
            )
            raise BlowUpError(float(times[i + 1]), partial)
        if (i + 1) % cfg.save_every == 0 and i + 1 < n:
            traj.saved_steps.append(i + 1)
            traj.saved_states.append(SpectralField(u0.grid, coeffs.copy()))
    traj.saved_steps.append(n)
    traj.saved_states.append(SpectralField(u0.grid, coeffs))
    return traj


def solve_skeleton(
    u0: SpectralField,
    control: ControlLike,
    model: NoiseModel,
    cfg: SolverConfig,
) -> Trajectory:
    """Integrate the noise-free controlled flow (the skeleton equation)."""
    return solve(u0, EquationSpec.skeleton(model, control), cfg)


@dataclass(frozen=True)
class ExitTime:
    """First-crossing result: ``time`` is capped at the horizon when the
    threshold was never crossed (then ``crossed`` is False)."""

    time: float
    crossed: bool


def exit_time(
    traj: Trajectory,
    threshold: float,
    *,
    eps: float = 1.0,
    mode: str = "h",
) -> ExitTime:
    """First time the accumulated horizontal dissipation crosses a level.

    Computes ``eps * integral_0^t f(s) ds`` by left-endpoint quadrature of
    the stored diagnostics, where f is the squared H norm of d1 u
    (``mode="h"``) or its H01-weighted version (``mode="h01"``), and returns
    the first time node where it exceeds ``threshold``.
    """
    if mode == "h":
        f = traj.dx1h2
    elif mode == "h01":
        f = traj.h11_2 - traj.h01_2  # sum k1^2 (1 + k2^2) |u_hat|^2
    else:
        raise ValueError(f"mode must be 'h' or 'h01', got {mode!r}")
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    dt = float(traj.times[1] - traj.times[0]) if len(traj.times) > 1 else 0.0
    acc = np.concatenate([[0.0], np.cumsum(f[:-1]) * dt]) * eps
    idx = np.nonzero(acc > threshold)[0]
    if idx.size:
        return ExitTime(float(traj.times[idx[0]]), True)
    return ExitTime(float(traj.times[-1]), False)
