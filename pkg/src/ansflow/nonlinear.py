"""Advection nonlinearity ``P_H(u . grad v)`` and its trilinear form.

Quadratic products are evaluated pointwise on a zero-padded grid at least
3/2 the nominal size.  Because fields are band-limited to the retained
fraction of the Nyquist band, products on the padded grid are exact (the
full convolution, no aliasing), so truncating back to the retained band
gives the exact truncated convolution.  This is what makes the algebraic
identities of the trilinear form hold to rounding:

* ``b(u, v, v) = 0`` for divergence-free u,
* ``b(u, v, w) = -b(u, w, v)`` for divergence-free u and w,
* ``<d2 u1, d2 (u . grad u1)> = 0`` for divergence-free u.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .spectral import (
    GridSpec,
    SpectralField,
    _check_same_grid,
    _leray_raw,
    inner,
    sobolev_norm,
)

__all__ = [
    "AdvectionWorkspace",
    "advect",
    "trilinear",
    "partial2_identity_check",
    "BoundRatios",
    "estimate_diagnostic",
    "diagnostic_study",
    "write_diagnostic_csv",
]


class AdvectionWorkspace:
    """Precomputed index maps and wavenumber arrays for dealiased products.

    A workspace belongs to one grid and is not safe to share between
    concurrently running calls; create one per worker/trajectory.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        # Exact products of retained modes need a padded grid that no alias
        # of the product band can reach back into the retained band: this is
        # m > 3*kmax, which 3n/2 guarantees for any dealias_fraction < 1.
        self.m1 = scipy.fft.next_fast_len(
            max(-(-3 * grid.n1 // 2), 3 * grid.kmax1 + 1)
        )
        self.m2 = scipy.fft.next_fast_len(
            max(-(-3 * grid.n2 // 2), 3 * grid.kmax2 + 1)
        )
        # real-signal transforms store only k2 >= 0; the negative-k2 band
        # modes ride along as the conjugates of their mirrored-k1 partners
        rows = np.r_[0 : grid.kmax1 + 1, grid.n1 - grid.kmax1 : grid.n1]
        rows_p = np.r_[0 : grid.kmax1 + 1, self.m1 - grid.kmax1 : self.m1]
        rows_p_mirror = (self.m1 - rows_p) % self.m1
        cols_pos = np.arange(grid.kmax2 + 1)
        cols_neg = np.arange(1, grid.kmax2 + 1)
        self._half_shape = (self.m1, self.m2 // 2 + 1)
        self._band_pos = np.ix_(rows, cols_pos)
        self._half_pos = np.ix_(rows_p, cols_pos)
        self._half_neg = np.ix_(rows_p_mirror, cols_neg)
        self._band_neg = np.ix_(rows, grid.n2 - cols_neg)
        self.ik1 = 1j * grid.k1.astype(np.float64)
        self.ik2 = 1j * grid.k2.astype(np.float64)
        self._scale_up = self.m1 * self.m2
        self._band = grid.band_mask

    def to_padded_physical(self, coeffs: np.ndarray) -> np.ndarray:
        """Evaluate band-limited coefficients on the padded collocation grid."""
        lead = coeffs.shape[:-2]
        half = np.zeros(lead + self._half_shape, dtype=np.complex128)
        half[(..., *self._half_pos)] = coeffs[(..., *self._band_pos)]
        return np.ascontiguousarray(
            scipy.fft.irfft2(half, s=(self.m1, self.m2), axes=(-2, -1))
            * self._scale_up
        )

    def from_padded_physical(self, values: np.ndarray) -> np.ndarray:
        """Transform padded samples back and truncate to the retained band."""
        spec = scipy.fft.rfft2(values, axes=(-2, -1)) / self._scale_up
        lead = values.shape[:-2]
        out = np.zeros(lead + (self.grid.n1, self.grid.n2), dtype=np.complex128)
        out[(..., *self._band_pos)] = spec[(..., *self._half_pos)]
        out[(..., *self._band_neg)] = np.conj(spec[(..., *self._half_neg)])
        return out


def _advect_raw(
    coeffs_u: np.ndarray, coeffs_v: np.ndarray, ws: AdvectionWorkspace
) -> np.ndarray:
    """Leray-projected u . grad v on trusted (..., 2, n1, n2) arrays."""
    up = ws.to_padded_physical(coeffs_u)
    g1 = ws.to_padded_physical(ws.ik1 * coeffs_v)
    g2 = ws.to_padded_physical(ws.ik2 * coeffs_v)
    adv = up[..., 0:1, :, :] * g1 + up[..., 1:2, :, :] * g2
    out = ws.from_padded_physical(adv)
    return _leray_raw(ws.grid, out)


def advect(
    u: SpectralField, v: SpectralField, workspace: AdvectionWorkspace | None = None
) -> SpectralField:
    """Projected advection ``B(u, v) = P_H(u . grad v)``.

    ``u`` must be divergence-free (guaranteed by SpectralField); the product
    is formed on the padded grid, truncated to the retained band, projected
    and zero-meaned.
    """
    _check_same_grid(u, v)
    ws = workspace if workspace is not None else AdvectionWorkspace(u.grid)
    if ws.grid != u.grid:
        raise ValueError("workspace was built for a different grid")
    return SpectralField(u.grid, _advect_raw(u.coeffs, v.coeffs, ws))


def trilinear(
    u: SpectralField,
    v: SpectralField,
    w: SpectralField,
    workspace: AdvectionWorkspace | None = None,
) -> float:
    """Trilinear form ``b(u, v, w) = <B(u, v), w>``."""
    _check_same_grid(u, v, w)
    return inner(advect(u, v, workspace), w)


def partial2_identity_check(
    u: SpectralField, workspace: AdvectionWorkspace | None = None
) -> float:
    """Magnitude of ``<d2 u1, d2 (u . grad u1)>``.

    Vanishes identically for divergence-free u (the advection of the first
    component integrates against its own vertical derivative to a multiple
    of div u).  Contract: ``<= 1e-10 * ||u||_{H^{1,1}}^3`` for valid fields;
    non-solenoidal inputs generically produce an O(1)-scaled value, which is
    what makes this usable as a solenoidality diagnostic.
    """
    ws = workspace if workspace is not None else AdvectionWorkspace(u.grid)
    if ws.grid != u.grid:
        raise ValueError("workspace was built for a different grid")
    c1 = u.coeffs[0]
    up = ws.to_padded_physical(u.coeffs)
    g1 = ws.to_padded_physical((ws.ik1 * c1)[None])[0]
    g2 = ws.to_padded_physical((ws.ik2 * c1)[None])[0]
    adv = up[0] * g1 + up[1] * g2
    a_hat = ws.from_padded_physical(adv[None])[0]
    k2sq = (u.grid.k2.astype(np.float64)) ** 2
    value = np.sum(k2sq * c1 * np.conj(a_hat))
    return float(abs(np.real(value)))


@dataclass(frozen=True)
class BoundRatios:
    """Observed-to-bound ratios for the two advection estimates.

    ``ratio_a3``: |b(u,v,u)| against ``a ||d1 u||^2 + ||u||^2 (1 + ||v||^2_{H^{1,1}})``.
    ``ratio_a4``: |b(u,v,w)| against ``||u||_{H^1} ||v||_{H^{1,1}} ||w||``.
    Both must stay bounded (by 1 for a valid constant) on smooth fields.
    """

    sample_id: int
    ratio_a3: float
    ratio_a4: float


def estimate_diagnostic(
    u: SpectralField,
    v: SpectralField,
    w: SpectralField | None = None,
    *,
    a: float = 0.2,
    sample_id: int = 0,
    workspace: AdvectionWorkspace | None = None,
) -> BoundRatios:
    """Evaluate both advection-bound ratios on one field triple.

    ``a`` is the weight on the ``||d1 u||^2`` term of the first bound (small
    by design so the dissipation can absorb it); ``w`` defaults to ``u``.
    """
    if a <= 0:
        raise ValueError(f"the split weight a must be positive, got {a}")
    ws = workspace if workspace is not None else AdvectionWorkspace(u.grid)
    if w is None:
        w = u
    _check_same_grid(u, v, w)
    bu = advect(u, v, ws)
    h = sobolev_norm(u, 0.0)
    d1u = float(
        np.sqrt(
            np.sum(
                (u.grid.k1.astype(np.float64) ** 2)
                * (np.abs(u.coeffs[0]) ** 2 + np.abs(u.coeffs[1]) ** 2)
            )
        )
    )
    v11 = sobolev_norm(v, 1.0, 1.0)
    denom_a3 = a * d1u ** 2 + h ** 2 * (1.0 + v11 ** 2)
    num_a3 = abs(inner(bu, u))
    denom_a4 = sobolev_norm(u, 1.0) * v11 * sobolev_norm(w, 0.0)
    num_a4 = abs(inner(bu, w))
    return BoundRatios(
        sample_id=sample_id,
        ratio_a3=num_a3 / denom_a3 if denom_a3 > 0 else np.inf,
        ratio_a4=num_a4 / denom_a4 if denom_a4 > 0 else np.inf,
    )


def diagnostic_study(
    grid: GridSpec,
    n_samples: int,
    rng: np.random.Generator,
    *,
    a: float = 0.2,
) -> list[BoundRatios]:
    """Evaluate the bound ratios on random smooth field triples."""
    from .spectral import random_divergence_free

    ws = AdvectionWorkspace(grid)
    rows = []
    for i in range(n_samples):
        u = random_divergence_free(grid, rng, scale=1.0, decay=1.0)
        v = random_divergence_free(grid, rng, scale=1.0, decay=1.0)
        w = random_divergence_free(grid, rng, scale=1.0, decay=1.0)
        rows.append(estimate_diagnostic(u, v, w, a=a, sample_id=i, workspace=ws))
    return rows


def write_diagnostic_csv(rows, path) -> None:
    """Write bound-ratio rows as CSV with columns (sample_id, ratio_a3, ratio_a4)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "ratio_a3", "ratio_a4"])
        for row in rows:
            writer.writerow(
                [row.sample_id, f"{row.ratio_a3:.17g}", f"{row.ratio_a4:.17g}"]
            )
