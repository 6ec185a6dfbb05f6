"""Monte Carlo probes of rare-event decay rates and scaling laws.

The probes estimate tail probabilities along a ladder of noise strengths
eps and report ``eps * log p_hat`` with Wilson-interval error bars, the
empirical counterpart of a large-deviation rate.  Plain Monte Carlo only:
importance sampling would presuppose the rate function under test.

Reproducibility contract: per-sample seeds derive from
``SeedSequence([base_seed, eps_index, sample_index])``, samples are
processed in fixed-size chunks, and chunk results are combined in chunk
order, so every probe returns bitwise-identical results for a given
(config, seed) at any worker count.  Parallel execution uses fork-based
process pools (POSIX only); ``workers=1`` runs inline.

Trajectory batches advance through the same arithmetic as
:func:`ansflow.dynamics.solve`, vectorised across samples; state-dependent
noise models fall back to a per-sample loop.
"""

from __future__ import annotations

import csv
import math
import multiprocessing
import os
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .dynamics import EquationSpec, SolverConfig, Trajectory, _Stepper, solve
from .nonlinear import _advect_raw
from .noise import NoiseModel
from .spectral import SpectralField, random_divergence_free

__all__ = [
    "TerminalNormExceeds",
    "SupDeviationFromSkeleton",
    "SupPairDeviation",
    "LdpProbeSpec",
    "ProbeRow",
    "ProbeResult",
    "EnergyStats",
    "ScalingCheck",
    "wilson_bounds",
    "mc_tail",
    "exp_equivalence_probe",
    "energy_stats",
    "small_time_scaling_check",
    "read_probe_csv",
]

_MIN_EPS = 0.02  # deeper tails would starve the hit counts at desk-scale n
_MIN_SAMPLES = 100


@dataclass(frozen=True)
class TerminalNormExceeds:
    """Hit when the terminal H norm (not squared) exceeds ``r``."""

    r: float

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"threshold must be >= 0, got {self.r}")


@dataclass(frozen=True)
class SupDeviationFromSkeleton:
    """Hit when sup_t of the squared H distance to the skeleton path
    exceeds ``delta``.  The skeleton is integrated once from ``control``."""

    control: object
    delta: float

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")


@dataclass(frozen=True)
class SupPairDeviation:
    """Hit when sup_t of the squared H distance between two coupled
    trajectories exceeds ``delta``."""

    delta: float

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")


@dataclass(frozen=True)
class LdpProbeSpec:
    """Ladder description for one probe.

    ``eps_ladder`` must be strictly decreasing with entries in
    [0.02, inf); ``n_samples`` is one integer (shared by all rungs) or a
    sequence matching the ladder, each >= 100.
    """

    eps_ladder: tuple
    n_samples: object
    base_seed: int
    event: object = None

    def __post_init__(self):
        ladder = tuple(float(e) for e in self.eps_ladder)
        if not ladder:
            raise ValueError("eps_ladder must not be empty")
        if any(e < _MIN_EPS for e in ladder):
            raise ValueError(
                f"eps values below {_MIN_EPS} are out of reach for plain "
                f"Monte Carlo at desk scale; got {min(ladder)}"
            )
        if any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError(f"eps_ladder must be strictly decreasing, got {ladder}")
        object.__setattr__(self, "eps_ladder", ladder)
        if isinstance(self.n_samples, (int, np.integer)):
            counts = (int(self.n_samples),) * len(ladder)
        else:
            counts = tuple(int(n) for n in self.n_samples)
            if len(counts) != len(ladder):
                raise ValueError(
                    f"n_samples has {len(counts)} entries for a "
                    f"{len(ladder)}-rung ladder"
                )
        if any(n < _MIN_SAMPLES for n in counts):
            raise ValueError(f"need >= {_MIN_SAMPLES} samples per rung, got {counts}")
        object.__setattr__(self, "n_samples", counts)
        if not (0 <= int(self.base_seed) < 2 ** 64):
            raise ValueError("base_seed must fit an unsigned 64-bit integer")

    def n_for(self, index: int) -> int:
        return self.n_samples[index]


@dataclass(frozen=True)
class ProbeRow:
    eps: float
    n: int
    hits: int
    p_hat: float
    eps_log_p: float
    stderr: float
    censored: int


@dataclass
class ProbeResult:
    rows: list
    reference: float | None = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["eps", "n", "hits", "p_hat", "eps_log_p", "stderr", "censored"]
            )
            for r in self.rows:
                writer.writerow(
                    [
                        f"{r.eps:.17g}",
                        r.n,
                        r.hits,
                        f"{r.p_hat:.17g}",
                        f"{r.eps_log_p:.17g}",
                        f"{r.stderr:.17g}",
                        r.censored,
                    ]
                )


def read_probe_csv(path) -> ProbeResult:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["eps", "n", "hits", "p_hat", "eps_log_p", "stderr", "censored"]:
            raise ValueError(f"unexpected probe CSV header: {header}")
        rows = [
            ProbeRow(
                eps=float(r[0]),
                n=int(r[1]),
                hits=int(r[2]),
                p_hat=float(r[3]),
                eps_log_p=float(r[4]),
                stderr=float(r[5]),
                censored=int(r[6]),
            )
            for r in reader
        ]
    return ProbeResult(rows)


def wilson_bounds(hits: int, n: int, z: float = 1.0) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if not (0 <= hits <= n) or n < 1:
        raise ValueError(f"need 0 <= hits <= n, n >= 1; got hits={hits}, n={n}")
    p = hits / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return max(center - half, 0.0), min(center + half, 1.0)


def _row_from_hits(eps: float, n: int, hits: int) -> ProbeRow:
    if hits == 0:
        # censored: only the resolution bound eps log(1/n) can be reported
        return ProbeRow(eps, n, 0, 0.0, eps * math.log(1.0 / n), float("nan"), 1)
    p_hat = hits / n
    lo, hi = wilson_bounds(hits, n, z=1.0)
    stderr = eps * (math.log(hi) - math.log(lo)) / 2.0
    return ProbeRow(eps, n, hits, p_hat, eps * math.log(p_hat), stderr, 0)


# ---------------------------------------------------------------------------
# batched trajectory kernels
# ---------------------------------------------------------------------------


def _chunk_size(n1: int, n2: int) -> int:
    """Fixed chunk width per grid: part of the reproducibility contract."""
    return max(128, min(1024, (1 << 21) // (n1 * n2)))


def _supports_batch(eq: EquationSpec) -> bool:
    return eq.model is None or eq.model.kind == "additive"


def _sample_normals(base_seed: int, eps_index: int, start: int, count: int,
                    nsteps: int, k: int) -> np.ndarray:
    """Per-sample Gaussian blocks, (count, nsteps, k), order-independent."""
    out = np.empty((count, nsteps, k))
    for j in range(count):
        rng = np.random.default_rng(
            np.random.SeedSequence([base_seed, eps_index, start + j])
        )
        out[j] = rng.standard_normal((nsteps, k))
    return out


class _BatchStepper:
    """Lane-parallel version of the solver step, same arithmetic per lane."""

    def __init__(self, grid, eq: EquationSpec, cfg: SolverConfig):
        self.eq = eq
        self.cfg = cfg
        self.inner = _Stepper(grid, eq, cfg)
        if not _supports_batch(eq):
            raise ValueError("batched stepping requires additive (or no) noise")

    def advance(self, t: float, states: np.ndarray, z: np.ndarray | None):
        eq, dt = self.eq, self.cfg.dt
        cols = self.inner.fixed_columns
        new = states.copy()
        if eq.nl_scale != 0.0:
            new -= (dt * eq.nl_scale) * _advect_raw(
                states, states, self.inner.workspace
            )
        if eq.control is not None:
            phi = np.asarray(eq.control(t), dtype=np.float64)
            new += dt * np.einsum("k,kcij->cij", phi, cols)
        if eq.noise_active:
            dw = z * np.sqrt(dt)
            new += eq.noise_scale * np.einsum("bk,kcij->bcij", dw, cols)
        with np.errstate(invalid="ignore", over="ignore"):
            new *= self.inner.decay
        return new


def _skeleton_path(u0: SpectralField, eq: EquationSpec, cfg: SolverConfig,
                   control) -> np.ndarray:
    """States of the noise-free controlled flow at every node."""
    value_at = getattr(control, "value_at", None) or control
    skel_eq = EquationSpec(
        eq.visc_scale, eq.nl_scale, 0.0, eq.noise_time_scale, eq.model, value_at
    )
    cfg_all = replace(cfg, save_every=1)
    traj = solve(u0, skel_eq, cfg_all)
    return np.stack([s.coeffs for s in traj.saved_states])


def _sq_norm_lanes(arr: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(arr) ** 2, axis=(-3, -2, -1))


# worker context, installed before forking so children inherit it
_CTX: dict | None = None


def _install_ctx(ctx: dict) -> None:
    global _CTX
    _CTX = ctx


def _eval_chunk(args) -> object:
    e_index, start, count = args
    ctx = _CTX
    kind = ctx["kind"]
    eq = ctx["eqs"][e_index]
    cfg = ctx["cfg"]
    u0 = ctx["u0"]
    nsteps = cfg.n_steps
    k = eq.model.trunc if eq.model is not None else 0

    if kind == "pair":
        eq_v = ctx["eqs_v"][e_index]
        return _chunk_pair(ctx, eq, eq_v, cfg, u0, e_index, start, count, nsteps, k)
    if kind == "proj":
        return _chunk_projections(ctx, eq, cfg, u0, e_index, start, count, nsteps, k)

    event = ctx["event"]
    if _supports_batch(eq):
        z = (
            _sample_normals(ctx["base_seed"], e_index, start, count, nsteps, k)
            if eq.noise_active
            else None
        )
        stepper = _BatchStepper(ctx["grid"], eq, cfg)
        states = np.broadcast_to(u0, (count,) + u0.shape).copy()
        if isinstance(event, SupDeviationFromSkeleton):
            ref = ctx["ref_path"]
            sup = _sq_norm_lanes(states - ref[0])
            for i in range(nsteps):
                states = stepper.advance(
                    i * cfg.dt, states, z[:, i, :] if z is not None else None
                )
                sup = np.maximum(sup, _sq_norm_lanes(states - ref[i + 1]))
            metric = sup
            hits = (metric > event.delta) | ~np.isfinite(metric)
        else:
            for i in range(nsteps):
                states = stepper.advance(
                    i * cfg.dt, states, z[:, i, :] if z is not None else None
                )
            metric = np.sqrt(_sq_norm_lanes(states))
            hits = (metric > event.r) | ~np.isfinite(metric)
        return int(np.count_nonzero(hits))

    # state-dependent noise: per-sample loop through the scalar stepper
    stepper = _Stepper(ctx["grid"], eq, cfg)
    hits = 0
    for j in range(count):
        rng = np.random.default_rng(
            np.random.SeedSequence([ctx["base_seed"], e_index, start + j])
        )
        coeffs = u0.copy()
        if isinstance(event, SupDeviationFromSkeleton):
            ref = ctx["ref_path"]
            sup = float(np.sum(np.abs(coeffs - ref[0]) ** 2))
            for i in range(nsteps):
                coeffs = stepper.advance(i * cfg.dt, coeffs, rng)
                sup = max(sup, float(np.sum(np.abs(coeffs - ref[i + 1]) ** 2)))
            if sup > event.delta or not np.isfinite(sup):
                hits += 1
        else:
            for i in range(nsteps):
                coeffs = stepper.advance(i * cfg.dt, coeffs, rng)
            norm = float(np.sqrt(np.sum(np.abs(coeffs) ** 2)))
            if norm > event.r or not np.isfinite(norm):
                hits += 1
    return hits


def _chunk_projections(ctx, eq, cfg, u0, e_index, start, count, nsteps, k):
    tests = ctx["tests"]
    z = (
        _sample_normals(ctx["base_seed"], e_index, start, count, nsteps, k)
        if eq.noise_active
        else None
    )
    stepper = _BatchStepper(ctx["grid"], eq, cfg)
    states = np.broadcast_to(u0, (count,) + u0.shape).copy()
    for i in range(nsteps):
        states = stepper.advance(
            i * cfg.dt, states, z[:, i, :] if z is not None else None
        )
    return np.real(np.einsum("bcij,tcij->bt", states, np.conj(tests)))


def _chunk_pair(ctx, eq_u, eq_v, cfg, u0, e_index, start, count, nsteps, k):
    delta = ctx["delta"]
    z = _sample_normals(ctx["base_seed"], e_index, start, count, nsteps, k)
    step_u = _BatchStepper(ctx["grid"], eq_u, cfg)
    step_v = _BatchStepper(ctx["grid"], eq_v, cfg)
    su = np.broadcast_to(u0, (count,) + u0.shape).copy()
    sv = su.copy()
    sup = np.zeros(count)
    for i in range(nsteps):
        t = i * cfg.dt
        su = step_u.advance(t, su, z[:, i, :])
        sv = step_v.advance(t, sv, z[:, i, :])
        sup = np.maximum(sup, _sq_norm_lanes(su - sv))
    hits = (sup > delta) | ~np.isfinite(sup)
    return int(np.count_nonzero(hits))


def _map_chunks(chunks: list, workers: int) -> list:
    if workers <= 1 or len(chunks) <= 1:
        return [_eval_chunk(c) for c in chunks]
    if "fork" not in multiprocessing.get_all_start_methods():
        raise ValueError("parallel probes need fork-based multiprocessing")
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(min(workers, len(chunks), os.cpu_count() or 1)) as pool:
        return pool.map(_eval_chunk, chunks)


def _run_hit_ladder(spec: LdpProbeSpec, ctx: dict, workers: int) -> list[ProbeRow]:
    n1, n2 = ctx["grid"].n1, ctx["grid"].n2
    chunk = _chunk_size(n1, n2)
    rows = []
    for e_index, eps in enumerate(spec.eps_ladder):
        n = spec.n_for(e_index)
        chunks = [
            (e_index, start, min(chunk, n - start)) for start in range(0, n, chunk)
        ]
        _install_ctx(ctx)
        hits = sum(_map_chunks(chunks, workers))  # chunk-order reduction
        rows.append(_row_from_hits(eps, n, hits))
    return rows


def mc_tail(
    spec: LdpProbeSpec,
    u0: SpectralField,
    eq_of_eps: Callable[[float], EquationSpec],
    cfg: SolverConfig,
    *,
    workers: int = 1,
    reference: float | None = None,
) -> ProbeResult:
    """Hit-probability ladder for a rare event under the eps-family of flows.

    ``eq_of_eps`` maps each rung's eps to the equation to simulate.  The
    event is ``spec.event``: terminal-norm exceedance or sup-deviation from
    the skeleton of ``event.control`` (integrated once, noise off, using the
    first rung's drift scales).  Rows with zero hits are censored and carry
    the resolution bound eps log(1/n).
    """
    if spec.event is None or isinstance(spec.event, SupPairDeviation):
        raise ValueError(
            "mc_tail needs a TerminalNormExceeds or SupDeviationFromSkeleton event"
        )
    eqs = [eq_of_eps(e) for e in spec.eps_ladder]
    grid = u0.grid
    for eq in eqs:
        if eq.model is not None and eq.model.grid != grid:
            raise ValueError("noise model grid does not match the initial state")
    ctx = {
        "kind": "single",
        "grid": grid,
        "u0": u0.coeffs,
        "eqs": eqs,
        "cfg": cfg,
        "event": spec.event,
        "base_seed": int(spec.base_seed),
        "ref_path": None,
    }
    if isinstance(spec.event, SupDeviationFromSkeleton):
        ctx["ref_path"] = _skeleton_path(u0, eqs[0], cfg, spec.event.control)
    rows = _run_hit_ladder(spec, ctx, workers)
    return ProbeResult(rows, reference)


def exp_equivalence_probe(
    u0: SpectralField,
    model: NoiseModel,
    delta: float,
    spec: LdpProbeSpec,
    cfg: SolverConfig,
    *,
    u_family: Callable[[float], EquationSpec] | None = None,
    v_family: Callable[[float], EquationSpec] | None = None,
    workers: int = 1,
) -> ProbeResult:
    """Tail of the pathwise distance between two flows coupled on one noise.

    Defaults compare the short-time rescaled flow against the driftless
    comparison equation (their exponential equivalence underlies the
    short-time rate); both families can be overridden.  Each sample drives
    both equations with the same Gaussian increments; the event is
    sup_t ||u(t) - v(t)||_H^2 > delta.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if u_family is None:
        u_family = lambda e: EquationSpec.small_time(model, e)
    if v_family is None:
        v_family = lambda e: EquationSpec.linear_comparison(model, e)
    eqs_u = [u_family(e) for e in spec.eps_ladder]
    eqs_v = [v_family(e) for e in spec.eps_ladder]
    for eq_u, eq_v in zip(eqs_u, eqs_v):
        ku = eq_u.model.trunc if eq_u.model is not None else 0
        kv = eq_v.model.trunc if eq_v.model is not None else 0
        if ku != kv:
            raise ValueError("coupled equations need the same noise dimension")
        if not (_supports_batch(eq_u) and _supports_batch(eq_v)):
            raise ValueError("coupled probes support additive models only")
    ctx = {
        "kind": "pair",
        "grid": u0.grid,
        "u0": u0.coeffs,
        "eqs": eqs_u,
        "eqs_v": eqs_v,
        "cfg": cfg,
        "delta": float(delta),
        "base_seed": int(spec.base_seed),
    }
    rows = _run_hit_ladder(spec, ctx, workers)
    return ProbeResult(rows)


# ---------------------------------------------------------------------------
# energy functionals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyRow:
    m: float
    p_f: float
    eps_log_p_f: float
    stderr_f: float
    censored_f: int
    p_g: float
    eps_log_p_g: float
    stderr_g: float
    censored_g: int


@dataclass
class EnergyStats:
    """Empirical tails of the energy functionals F and G over an ensemble.

    F(T) is the running sup of the squared H norm plus eps times the
    horizontal dissipation integral; G is its anisotropic analogue (squared
    (0,1) norm, integral of the squared (1,1) norm) stopped at the first
    time the H energy or dissipation budget crosses ``m1``.
    """

    eps: float
    m1: float
    f_values: np.ndarray
    g_values: np.ndarray
    tau_values: np.ndarray
    rows: list

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "M",
                    "p_F",
                    "eps_log_p_F",
                    "stderr_F",
                    "censored_F",
                    "p_G",
                    "eps_log_p_G",
                    "stderr_G",
                    "censored_G",
                ]
            )
            for r in self.rows:
                writer.writerow(
                    [
                        f"{r.m:.17g}",
                        f"{r.p_f:.17g}",
                        f"{r.eps_log_p_f:.17g}",
                        f"{r.stderr_f:.17g}",
                        r.censored_f,
                        f"{r.p_g:.17g}",
                        f"{r.eps_log_p_g:.17g}",
                        f"{r.stderr_g:.17g}",
                        r.censored_g,
                    ]
                )


def energy_stats(
    trajectories: Sequence[Trajectory],
    eps: float,
    m_grid: Sequence[float],
    *,
    m1: float = float("inf"),
) -> EnergyStats:
    """Tail table of the F and G energy functionals over an ensemble."""
    trajs = list(trajectories)
    if not trajs:
        raise ValueError("need at least one trajectory")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    n = len(trajs)
    f_vals = np.empty(n)
    g_vals = np.empty(n)
    tau_vals = np.empty(n)
    for j, tr in enumerate(trajs):
        dt = float(tr.times[1] - tr.times[0]) if len(tr.times) > 1 else 0.0
        # left-endpoint cumulative integrals at every node
        cum_d1 = np.concatenate([[0.0], np.cumsum(tr.dx1h2[:-1]) * dt])
        cum_h11 = np.concatenate([[0.0], np.cumsum(tr.h11_2[:-1]) * dt])
        f_vals[j] = float(np.max(np.maximum.accumulate(tr.h2) + eps * cum_d1))
        crossed = (tr.h2 > m1) | (eps * cum_d1 > m1)
        stop = int(np.argmax(crossed)) if crossed.any() else len(tr.times) - 1
        tau_vals[j] = float(tr.times[stop])
        g_vals[j] = float(
            np.max(tr.h01_2[: stop + 1]) + eps * cum_h11[stop]
        )
    rows = []
    for m in m_grid:
        row_f = _row_from_hits(eps, n, int(np.count_nonzero(f_vals > m)))
        row_g = _row_from_hits(eps, n, int(np.count_nonzero(g_vals > m)))
        rows.append(
            EnergyRow(
                m=float(m),
                p_f=row_f.p_hat,
                eps_log_p_f=row_f.eps_log_p,
                stderr_f=row_f.stderr,
                censored_f=row_f.censored,
                p_g=row_g.p_hat,
                eps_log_p_g=row_g.eps_log_p,
                stderr_g=row_g.stderr,
                censored_g=row_g.censored,
            )
        )
    return EnergyStats(
        eps=float(eps),
        m1=float(m1),
        f_values=f_vals,
        g_values=g_vals,
        tau_values=tau_vals,
        rows=rows,
    )


# ---------------------------------------------------------------------------
# small-time scaling law
# ---------------------------------------------------------------------------


@dataclass
class ScalingCheck:
    """Two-sample moment comparison between u(eps T) and the rescaled flow.

    ``z_mean``/``z_second`` hold one z-score per test functional for the
    first and second moments of the terminal projections; ``max_abs_z`` is
    the worst of all of them.
    """

    eps: float
    n: int
    z_mean: np.ndarray
    z_second: np.ndarray

    @property
    def max_abs_z(self) -> float:
        return float(
            max(np.max(np.abs(self.z_mean)), np.max(np.abs(self.z_second)))
        )


def _terminal_projections(
    u0: SpectralField,
    eq: EquationSpec,
    cfg: SolverConfig,
    tests: np.ndarray,
    base_seed: int,
    side: int,
    n: int,
    workers: int,
) -> np.ndarray:
    """Terminal inner products (n, n_tests) via the chunked batch kernel."""
    grid = u0.grid
    chunk = _chunk_size(grid.n1, grid.n2)
    ctx = {
        "kind": "proj",
        "grid": grid,
        "u0": u0.coeffs,
        "eqs": {side: eq},
        "cfg": cfg,
        "tests": tests,
        "base_seed": int(base_seed),
    }
    chunks = [(side, start, min(chunk, n - start)) for start in range(0, n, chunk)]
    _install_ctx(ctx)
    parts = _map_chunks(chunks, workers)
    out = np.empty((n, tests.shape[0]))
    for (side_, start, count), part in zip(chunks, parts):
        out[start : start + count] = part
    return out


def small_time_scaling_check(
    u0: SpectralField,
    model: NoiseModel,
    eps: float,
    n: int,
    cfg: SolverConfig,
    *,
    base_seed: int = 0,
    n_functionals: int = 8,
    workers: int = 1,
) -> ScalingCheck:
    """Compare the law of u(eps T) with the rescaled flow at time T.

    Simulates the unit-strength flow on [0, eps T] and the eps-rescaled
    flow on [0, T] with the same step count and independent seeds, then
    z-scores the first and second moments of fixed random linear
    functionals of the terminal states.  Time-homogeneous additive models
    only (the scaling law needs both).
    """
    if model.kind != "additive":
        raise ValueError("the scaling law check needs an additive model")
    if not (0 < eps <= 1):
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    if n < _MIN_SAMPLES:
        raise ValueError(f"need >= {_MIN_SAMPLES} samples, got {n}")
    grid = u0.grid
    # fixed random unit test fields, seeded independently of the samples
    trng = np.random.default_rng(np.random.SeedSequence([int(base_seed), 2]))
    kcap = max(2, min(grid.kmax1, grid.kmax2) // 2)
    tests = np.stack(
        [
            random_divergence_free(grid, trng, scale=1.0, kmax=kcap).coeffs
            for _ in range(n_functionals)
        ]
    )

    cfg_base = replace(cfg, dt=eps * cfg.dt, t_end=eps * cfg.t_end)
    proj_base = _terminal_projections(
        u0, EquationSpec.base(model), cfg_base, tests, int(base_seed), 0, n, workers
    )
    proj_resc = _terminal_projections(
        u0,
        EquationSpec.small_time(model, eps),
        cfg,
        tests,
        int(base_seed),
        1,
        n,
        workers,
    )

    def z_scores(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        ma, mb = a.mean(axis=0), b.mean(axis=0)
        va, vb = a.var(axis=0, ddof=1), b.var(axis=0, ddof=1)
        return (ma - mb) / np.sqrt(va / a.shape[0] + vb / b.shape[0])

    return ScalingCheck(
        eps=float(eps),
        n=int(n),
        z_mean=z_scores(proj_base, proj_resc),
        z_second=z_scores(proj_base ** 2, proj_resc ** 2),
    )
