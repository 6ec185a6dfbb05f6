"""Action minimisation and path-rate evaluation for the controlled flow.

Two complementary tools:

* :func:`minimize_small_noise_rate` searches for the cheapest piecewise
  constant control steering the noise-free skeleton from a start state to a
  target terminal state, by quadratic-penalty continuation over the exact
  discrete dynamics.  The reported value is the control energy
  ``1/2 integral ||phi||^2 dt``, the small-noise cost of reaching the target.

* :func:`small_time_rate` evaluates the short-time cost of a given path: at
  every node the path velocity is matched by noise-map columns in least
  squares, and the squared coefficient norm is integrated by the trapezoid
  rule.  Paths whose velocity leaves the range of the noise map are
  infeasible and get an infinite value.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.optimize

from .dynamics import EquationSpec, SolverConfig, _Stepper
from .noise import NoiseModel, sigma_columns
from .spectral import SpectralField

__all__ = [
    "Control",
    "RateOptions",
    "RateResult",
    "minimize_small_noise_rate",
    "small_time_rate",
    "write_control_csv",
    "read_control_csv",
]


@dataclass(frozen=True)
class Control:
    """Piecewise constant control on a uniform grid over [0, t_end].

    ``values`` has shape (n_nodes, K); node m is active on
    [m t_end/n_nodes, (m+1) t_end/n_nodes).
    """

    t_end: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] < 1:
            raise ValueError(
                f"values must be (n_nodes, K) with n_nodes >= 1, got {vals.shape}"
            )
        if self.t_end <= 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def trunc(self) -> int:
        return self.values.shape[1]

    @property
    def node_dt(self) -> float:
        return self.t_end / self.n_nodes

    def value_at(self, t: float) -> np.ndarray:
        # nudge guards block boundaries against times one ulp low
        idx = min(max(int(t / self.node_dt + 1e-9), 0), self.n_nodes - 1)
        return self.values[idx]

    @property
    def energy(self) -> float:
        """1/2 integral of the squared l2 norm over [0, t_end]."""
        return 0.5 * self.node_dt * float(np.sum(self.values ** 2))

    def within_energy(self, bound: float) -> bool:
        return self.energy <= bound


@dataclass(frozen=True)
class RateOptions:
    """Penalty-continuation settings for the action search."""

    penalty_init: float = 1e2
    penalty_growth: float = 100.0
    penalty_max: float = 1e12
    feas_tol: float = 1e-6
    maxiter: int = 500
    gtol: float = 1e-12
    initial_control: Control | None = None


@dataclass
class RateResult:
    """Outcome of a rate evaluation.

    ``value`` is +inf when no feasible control/representation was found
    (``feasible`` False); JSON serialises that as null.
    """

    value: float
    feasible: bool
    control: Control | None = None
    target_error: float = float("nan")
    iterations: int = 0
    penalty: float = float("nan")
    coefficients: np.ndarray | None = None
    residuals: np.ndarray | None = None

    def to_json(self, path=None) -> str:
        payload = {
            "value": None if not np.isfinite(self.value) else float(self.value),
            "feasible": bool(self.feasible),
            "target_error": _nan_to_none(self.target_error),
            "iterations": int(self.iterations),
            "penalty": _nan_to_none(self.penalty),
        }
        text = json.dumps(payload, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, text: str) -> "RateResult":
        payload = json.loads(text)
        return cls(
            value=float("inf") if payload["value"] is None else float(payload["value"]),
            feasible=bool(payload["feasible"]),
            target_error=_none_to_nan(payload["target_error"]),
            iterations=int(payload["iterations"]),
            penalty=_none_to_nan(payload["penalty"]),
        )


def _nan_to_none(x: float):
    return None if not np.isfinite(x) else float(x)


def _none_to_nan(x) -> float:
    return float("nan") if x is None else float(x)


def _terminal_state(
    u0: SpectralField,
    eq: EquationSpec,
    cfg: SolverConfig,
    control: Control,
) -> np.ndarray:
    """Final coefficients of the controlled skeleton (no storage overhead)."""
    stepper = _Stepper(u0.grid, replace(eq, control=control.value_at), cfg)
    coeffs = u0.coeffs.copy()
    for i in range(cfg.n_steps):
        coeffs = stepper.advance(i * cfg.dt, coeffs, None)
    return coeffs


def minimize_small_noise_rate(
    u0: SpectralField,
    target: SpectralField,
    model: NoiseModel,
    cfg: SolverConfig,
    *,
    n_nodes: int,
    options: RateOptions = RateOptions(),
    eq: EquationSpec | None = None,
) -> RateResult:
    """Cheapest control steering the skeleton from ``u0`` to ``target``.

    Minimises the control energy subject to the terminal state matching the
    target within ``options.feas_tol`` (in H, relative to 1 + the target
    norm), by quadratic-penalty continuation with L-BFGS-B inner solves.
    ``eq`` overrides the flow the control acts on (default: the full
    skeleton scales); its noise and control entries are ignored.  For linear
    flows with additive noise the gradient is computed by an exact discrete
    adjoint, otherwise by finite differences.

    Returns an infeasible result (value +inf) when the continuation hits
    ``options.penalty_max`` without meeting the tolerance; the best control
    found is still attached for inspection.
    """
    if u0.grid != target.grid or u0.grid != model.grid:
        raise ValueError("start, target and noise model must share one grid")
    if cfg.n_steps % n_nodes != 0:
        raise ValueError(
            f"n_nodes = {n_nodes} must divide the step count {cfg.n_steps}"
        )
    if eq is None:
        eq = EquationSpec(1.0, 1.0, 0.0, 1.0, model)
    else:
        eq = EquationSpec(
            eq.visc_scale, eq.nl_scale, 0.0, eq.noise_time_scale, model
        )
    k = model.trunc
    node_dt = cfg.t_end / n_nodes
    feas_scale = 1.0 + float(np.sqrt(np.sum(np.abs(target.coeffs) ** 2)))

    if options.initial_control is not None:
        x0 = options.initial_control.values.reshape(-1).copy()
        if x0.size != n_nodes * k:
            raise ValueError("initial control has the wrong node/column count")
    else:
        x0 = np.zeros(n_nodes * k)

    linear_additive = eq.nl_scale == 0.0 and model.kind == "additive"
    if linear_additive:
        objective = _LinearAdditiveObjective(u0, target, model, cfg, eq, n_nodes)
    else:
        objective = _GenericObjective(u0, target, model, cfg, eq, n_nodes)

    rho = options.penalty_init
    iterations = 0
    x = x0
    gap = float("inf")
    while True:
        res = scipy.optimize.minimize(
            objective.value_and_grad if objective.has_grad else objective.value,
            x,
            args=(rho,),
            jac=objective.has_grad,
            method="L-BFGS-B",
            options={"maxiter": options.maxiter, "gtol": options.gtol},
        )
        x = res.x
        iterations += int(res.nit)
        gap = objective.terminal_gap(x)
        if gap <= options.feas_tol * feas_scale:
            break
        if rho >= options.penalty_max:
            break
        rho = min(rho * options.penalty_growth, options.penalty_max)

    control = Control(cfg.t_end, x.reshape(n_nodes, k))
    feasible = gap <= options.feas_tol * feas_scale
    # value from the exact control quadrature, independent of the penalty
    value = control.energy if feasible else float("inf")
    return RateResult(
        value=value,
        feasible=feasible,
        control=control,
        target_error=gap,
        iterations=iterations,
        penalty=rho,
    )


class _GenericObjective:
    """Penalty objective via the actual stepper; finite-difference jacobian."""

    has_grad = False

    def __init__(self, u0, target, model, cfg, eq, n_nodes):
        self.u0 = u0
        self.target = target
        self.cfg = cfg
        self.eq = eq
        self.n_nodes = n_nodes
        self.k = model.trunc
        self.node_dt = cfg.t_end / n_nodes

    def _terminal(self, x: np.ndarray) -> np.ndarray:
        ctrl = Control(self.cfg.t_end, x.reshape(self.n_nodes, self.k))
        return _terminal_state(self.u0, self.eq, self.cfg, ctrl)

    def value(self, x: np.ndarray, rho: float) -> float:
        g = self._terminal(x) - self.target.coeffs
        gap_sq = float(np.sum(np.abs(g) ** 2))
        return 0.5 * self.node_dt * float(np.sum(x ** 2)) + rho * gap_sq

    def terminal_gap(self, x: np.ndarray) -> float:
        g = self._terminal(x) - self.target.coeffs
        return float(np.sqrt(np.sum(np.abs(g) ** 2)))


class _LinearAdditiveObjective:
    """Exact closed-form objective and adjoint gradient for linear flows.

    With decay matrix D per step and fixed columns C, the terminal state is
    ``D^N u0 + dt sum_n D^(N-n) C phi_(block(n))``; both the objective and
    its gradient follow in closed form.
    """

    has_grad = True

    def __init__(self, u0, target, model, cfg, eq, n_nodes):
        self.n_nodes = n_nodes
        self.k = model.trunc
        self.node_dt = cfg.t_end / n_nodes
        stepper = _Stepper(u0.grid, eq, cfg)
        decay = stepper.decay
        cols = stepper.fixed_columns
        n = cfg.n_steps
        steps_per_node = n // n_nodes
        # block weights S_m = dt * sum_{j in block m} D^(N-j)
        power = decay.copy()  # D^(N-j) for j = N-1 downwards
        s = np.zeros((n_nodes,) + decay.shape)
        for j in range(n - 1, -1, -1):
            s[j // steps_per_node] += power
            if j > 0:
                power = power * decay
        s *= cfg.dt
        self.drift_free = power * u0.coeffs  # power is D^N after the loop
        # sensitivity fields A[m, k] = S_m * c_k, flattened for fast dots
        sens = s[:, None, None, :, :] * cols[None, :, :, :, :]
        self.sens = sens.reshape(n_nodes, self.k, -1)
        self.cols = cols
        self.target = target.coeffs

    def _terminal(self, x: np.ndarray) -> np.ndarray:
        phi = x.reshape(self.n_nodes, self.k)
        out = self.drift_free.reshape(-1).copy()
        out += np.einsum("mk,mkp->p", phi, self.sens)
        return out

    def value_and_grad(self, x: np.ndarray, rho: float):
        phi = x.reshape(self.n_nodes, self.k)
        g = self._terminal(x) - self.target.reshape(-1)
        gap_sq = float(np.sum(np.abs(g) ** 2))
        val = 0.5 * self.node_dt * float(np.sum(x ** 2)) + rho * gap_sq
        grad = self.node_dt * phi + 2.0 * rho * np.real(
            np.einsum("mkp,p->mk", self.sens, np.conj(g))
        )
        return val, grad.reshape(-1)

    def terminal_gap(self, x: np.ndarray) -> float:
        g = self._terminal(x) - self.target.reshape(-1)
        return float(np.sqrt(np.sum(np.abs(g) ** 2)))


def small_time_rate(
    states: Sequence[SpectralField],
    times: Sequence[float],
    model: NoiseModel,
    *,
    sigma_time: float = 0.0,
    rel_residual_tol: float = 1e-6,
) -> RateResult:
    """Short-time cost of a path given by states at uniformly spaced times.

    The path velocity at each node comes from centered differences
    (one-sided at the ends); it is matched by the noise-map columns through
    the K x K Gram normal equations.  The value is the trapezoid integral of
    ``1/2 ||h(t)||^2``.  If any node velocity cannot be represented within
    ``rel_residual_tol`` (relative to its norm), the path is infeasible and
    the value is +inf; per-node coefficients and residuals are attached
    either way.
    """
    states = list(states)
    times = np.asarray(times, dtype=np.float64)
    if len(states) < 2 or len(states) != len(times):
        raise ValueError("need >= 2 states with one time per state")
    dts = np.diff(times)
    if not np.all(dts > 0) or np.max(np.abs(dts - dts[0])) > 1e-9 * dts[0]:
        raise ValueError("times must be strictly increasing and uniform")
    dt = float(dts[0])
    n = len(states)
    k = model.trunc
    coeffs = np.stack([s.coeffs for s in states])
    vel = np.empty_like(coeffs)
    vel[0] = (coeffs[1] - coeffs[0]) / dt
    vel[-1] = (coeffs[-1] - coeffs[-2]) / dt
    if n > 2:
        vel[1:-1] = (coeffs[2:] - coeffs[:-2]) / (2.0 * dt)

    h = np.zeros((n, k))
    residuals = np.zeros(n)
    feasible = True
    rank_warned = False
    for i in range(n):
        cols = sigma_columns(model, sigma_time, states[i])
        flat = cols.reshape(k, -1)
        v = vel[i].reshape(-1)
        gram = np.real(flat @ np.conj(flat).T)
        rhs = np.real(flat @ np.conj(v))
        sol, _, rank, _ = np.linalg.lstsq(gram, rhs, rcond=None)
        if rank < k and not rank_warned:
            warnings.warn(
                "noise columns are linearly dependent along the path; "
                "coefficients use the minimum-norm representation",
                stacklevel=2,
            )
            rank_warned = True
        h[i] = sol
        resid = v - sol @ flat
        residuals[i] = float(np.sqrt(np.sum(np.abs(resid) ** 2)))
        vnorm = float(np.sqrt(np.sum(np.abs(v) ** 2)))
        if residuals[i] > rel_residual_tol * max(vnorm, 1e-300):
            feasible = False

    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    value = 0.5 * float(trapezoid(np.sum(h ** 2, axis=1), times))
    return RateResult(
        value=value if feasible else float("inf"),
        feasible=feasible,
        coefficients=h,
        residuals=residuals,
    )


def write_control_csv(path, control: Control) -> None:
    """Columns: node start time, then one column per noise direction."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"phi_{j}" for j in range(control.trunc)])
        for m in range(control.n_nodes):
            row = [m * control.node_dt] + list(control.values[m])
            writer.writerow([f"{v:.17g}" for v in row])


def read_control_csv(path) -> Control:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    data = np.asarray(rows, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != len(header) or data.shape[1] < 2:
        raise ValueError("malformed control CSV")
    node_times = data[:, 0]
    if len(node_times) > 1:
        dt_c = node_times[1] - node_times[0]
    else:
        raise ValueError("control CSV needs at least two nodes to infer t_end")
    t_end = dt_c * len(node_times)
    return Control(float(t_end), data[:, 1:])
