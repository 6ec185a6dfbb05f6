"""Spectral representation of periodic 2-D velocity fields.

Velocity fields on the square torus [0, 2*pi)^2 are stored through their
Fourier coefficients ``u_hat[k]`` with ``u(x) = sum_k u_hat[k] exp(i k.x)``.
Coefficients live on the integer lattice in standard FFT ordering and are
truncated to the retained band ``|k_i| <= dealias_fraction * n_i / 2``.

Conventions used throughout the package:

* the inner product of two fields is the plain coefficient sum
  ``<u, v> = sum_k u_hat[k] . conj(v_hat[k])`` (unit Plancherel weight), and
  every Sobolev-type norm is a weighted lattice sum on top of it;
* physical-space mixed norms ``L^p_h(L^q_v)`` are honest torus integrals and
  therefore carry the 2*pi quadrature weights;
* axis 1 ("h", horizontal) is the first coordinate, axis 2 ("v", vertical)
  the second.  Only the horizontal direction is smoothed by the viscosity in
  the flows this package simulates, which is why several norms treat the two
  axes asymmetrically.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.fft

__all__ = [
    "GridSpec",
    "SpectralField",
    "ScalarGridField",
    "GridMismatchError",
    "SymmetryError",
    "SnapshotFormatError",
    "leray_project",
    "sobolev_norm",
    "mixed_norm",
    "mollify",
    "inner",
    "partial_derivative",
    "to_physical",
    "from_physical",
    "write_snapshot",
    "read_snapshot",
    "random_divergence_free",
    "field_from_modes",
    "horizontal_shear",
    "vertical_shear",
]

ANSF_MAGIC = b"ANSF"
ANSF_VERSION = 1

_HERMITIAN_TOL = 1e-12
_DIVERGENCE_TOL = 1e-12
_MEAN_TOL = 1e-12


class GridMismatchError(ValueError):
    """Raised when an operation mixes fields living on different grids."""


class SymmetryError(ValueError):
    """Raised when coefficients fail the Hermitian-symmetry requirement."""


class SnapshotFormatError(ValueError):
    """Raised when a snapshot file is corrupted or has the wrong format."""


def _check_same_grid(*fields) -> None:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(
                f"fields live on different grids: {grid} vs {f.grid}"
            )


@dataclass(frozen=True)
class GridSpec:
    """Uniform collocation grid on the torus with a retained Fourier band.

    Parameters
    ----------
    n1, n2 : int
        Number of collocation points per axis.  Even and >= 4.
    dealias_fraction : float
        Fraction of the Nyquist band that is retained; modes with
        ``|k_i| > dealias_fraction * n_i / 2`` are identically zero.  The
        default 2/3 keeps quadratic products exactly representable on the
        padded product grid.
    """

    n1: int
    n2: int
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self) -> None:
        for n in (self.n1, self.n2):
            if n < 4 or n % 2 != 0:
                raise ValueError(f"grid sizes must be even and >= 4, got {n}")
        if not 0.0 < self.dealias_fraction <= 1.0:
            raise ValueError(
                f"dealias_fraction must lie in (0, 1], got {self.dealias_fraction}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @cached_property
    def k1(self) -> np.ndarray:
        """Integer wavenumbers along axis 1, shape (n1, 1)."""
        return np.fft.fftfreq(self.n1, d=1.0 / self.n1).astype(np.int64).reshape(-1, 1)

    @cached_property
    def k2(self) -> np.ndarray:
        """Integer wavenumbers along axis 2, shape (1, n2)."""
        return np.fft.fftfreq(self.n2, d=1.0 / self.n2).astype(np.int64).reshape(1, -1)

    @cached_property
    def kmax1(self) -> int:
        return int(self.dealias_fraction * (self.n1 // 2) + 1e-9)

    @cached_property
    def kmax2(self) -> int:
        return int(self.dealias_fraction * (self.n2 // 2) + 1e-9)

    @cached_property
    def band_mask(self) -> np.ndarray:
        """Boolean (n1, n2) mask of retained wavenumbers."""
        mask = (np.abs(self.k1) <= self.kmax1) & (np.abs(self.k2) <= self.kmax2)
        mask.flags.writeable = False
        return mask

    @cached_property
    def _conj_index(self) -> tuple[np.ndarray, np.ndarray]:
        i1 = (-np.arange(self.n1)) % self.n1
        i2 = (-np.arange(self.n2)) % self.n2
        return i1, i2

    def collocation_axes(self) -> tuple[np.ndarray, np.ndarray]:
        """Collocation coordinates along each axis (x1 shape (n1,1), x2 (1,n2))."""
        x1 = (2.0 * np.pi / self.n1) * np.arange(self.n1)
        x2 = (2.0 * np.pi / self.n2) * np.arange(self.n2)
        return x1.reshape(-1, 1), x2.reshape(1, -1)


def _reflected(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Coefficients of k -> -k, i.e. conj(result) tests Hermitian symmetry."""
    i1, i2 = grid._conj_index
    return coeffs[..., i1, :][..., :, i2]


def _validate_coeffs(
    grid: GridSpec,
    coeffs: np.ndarray,
    *,
    require_divergence_free: bool = True,
) -> np.ndarray:
    if coeffs.shape != (2, grid.n1, grid.n2):
        raise ValueError(
            f"coefficient array must have shape (2, {grid.n1}, {grid.n2}), "
            f"got {coeffs.shape}"
        )
    coeffs = np.ascontiguousarray(coeffs, dtype=np.complex128)
    if not np.all(np.isfinite(coeffs.view(np.float64))):
        raise ValueError("coefficients contain NaN or Inf")
    scale = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    floor = max(scale, 1.0)
    sym_defect = float(np.max(np.abs(coeffs - np.conj(_reflected(coeffs, grid)))))
    if sym_defect > _HERMITIAN_TOL * floor:
        raise SymmetryError(
            f"coefficients are not Hermitian-symmetric (defect {sym_defect:.3e}, "
            f"scale {scale:.3e})"
        )
    mean = float(np.max(np.abs(coeffs[:, 0, 0])))
    if mean > _MEAN_TOL * floor:
        raise ValueError(f"zero mode must vanish, got magnitude {mean:.3e}")
    outside = float(np.max(np.abs(coeffs[:, ~grid.band_mask]))) if not grid.band_mask.all() else 0.0
    if outside > 1e-13 * floor:
        raise ValueError(
            f"coefficients outside the retained band (max magnitude {outside:.3e})"
        )
    if not grid.band_mask.all():
        coeffs[:, ~grid.band_mask] = 0.0
    if require_divergence_free:
        div = grid.k1 * coeffs[0] + grid.k2 * coeffs[1]
        # tolerance relative to the field scale, not per-mode: rounding in
        # tiny high modes must not trip the check
        kmag = max(grid.kmax1, grid.kmax2, 1)
        worst = float(np.max(np.abs(div))) if div.size else 0.0
        if worst > _DIVERGENCE_TOL * kmag * floor:
            raise ValueError(
                f"field is not divergence-free (worst |k.u_hat| = {worst:.3e})"
            )
    return coeffs


@dataclass(frozen=True)
class SpectralField:
    """Divergence-free velocity field stored by Fourier coefficients.

    ``coeffs`` has shape (2, n1, n2), complex128, in standard FFT ordering,
    Hermitian-symmetric, with zero mean, supported on the retained band.
    Construct through :meth:`from_coefficients` (validating) or the module
    factories; the raw constructor trusts its input.
    """

    grid: GridSpec
    coeffs: np.ndarray

    @classmethod
    def from_coefficients(
        cls,
        grid: GridSpec,
        coeffs: np.ndarray,
        *,
        require_divergence_free: bool = True,
    ) -> "SpectralField":
        clean = _validate_coeffs(
            grid, coeffs, require_divergence_free=require_divergence_free
        )
        clean.flags.writeable = False
        return cls(grid, clean)

    @property
    def is_divergence_free(self) -> bool:
        div = self.grid.k1 * self.coeffs[0] + self.grid.k2 * self.coeffs[1]
        local = np.sqrt(np.abs(self.coeffs[0]) ** 2 + np.abs(self.coeffs[1]) ** 2)
        return bool(np.all(np.abs(div) <= _DIVERGENCE_TOL * local + 1e-300))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True)
class ScalarGridField:
    """Real scalar samples on the collocation grid, shape (n1, n2)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values must have shape {self.grid.shape}, got {self.values.shape}"
            )


def leray_project(grid: GridSpec, coeffs: np.ndarray) -> SpectralField:
    """Project raw coefficients onto divergence-free fields.

    Per mode: ``u_hat[k] <- u_hat[k] - k (k . u_hat[k]) / |k|^2`` with the
    zero mode removed.  Input must be Hermitian-symmetric (otherwise the
    result would not be a real field) and is band-limited on the way in.

    Raises
    ------
    SymmetryError
        If the coefficients are not Hermitian-symmetric.
    """
    coeffs = np.ascontiguousarray(coeffs, dtype=np.complex128)
    if coeffs.shape != (2, grid.n1, grid.n2):
        raise ValueError(
            f"expected shape (2, {grid.n1}, {grid.n2}), got {coeffs.shape}"
        )
    scale = max(float(np.max(np.abs(coeffs))), 1.0)
    sym_defect = float(np.max(np.abs(coeffs - np.conj(_reflected(coeffs, grid)))))
    if sym_defect > _HERMITIAN_TOL * scale:
        raise SymmetryError(
            f"cannot project non-Hermitian coefficients (defect {sym_defect:.3e})"
        )
    projected = _leray_raw(grid, coeffs.copy())
    return SpectralField.from_coefficients(grid, projected)


def _leray_raw(grid: GridSpec, coeffs: np.ndarray) -> np.ndarray:
    """In-place Leray projection on a trusted (..., 2, n1, n2) array."""
    k1 = grid.k1
    k2 = grid.k2
    ksq = (k1 * k1 + k2 * k2).astype(np.float64)
    ksq[0, 0] = 1.0  # zero mode handled by explicit removal below
    dot = (k1 * coeffs[..., 0, :, :] + k2 * coeffs[..., 1, :, :]) / ksq
    coeffs[..., 0, :, :] -= k1 * dot
    coeffs[..., 1, :, :] -= k2 * dot
    coeffs[..., :, 0, 0] = 0.0
    coeffs[..., :, ~grid.band_mask] = 0.0
    return coeffs


def sobolev_weights(grid: GridSpec, s: float, s_prime: float | None = None) -> np.ndarray:
    """Lattice weights for the Sobolev norms; see :func:`sobolev_norm`."""
    if s_prime is None:
        ksq = (grid.k1 ** 2 + grid.k2 ** 2).astype(np.float64)
        return (1.0 + ksq) ** s
    w1 = (1.0 + grid.k1.astype(np.float64) ** 2) ** s
    w2 = (1.0 + grid.k2.astype(np.float64) ** 2) ** s_prime
    return w1 * w2


def sobolev_norm(u: SpectralField, s: float, s_prime: float | None = None) -> float:
    """Sobolev norm of a field as a weighted lattice sum.

    With ``s_prime`` omitted this is the isotropic norm
    ``(sum_k (1+|k|^2)^s |u_hat[k]|^2)^(1/2)``; with ``s_prime`` given it is
    the anisotropic norm with weight ``(1+k1^2)^s (1+k2^2)^s_prime``.
    """
    w = sobolev_weights(u.grid, s, s_prime)
    total = float(np.sum(w * (np.abs(u.coeffs[0]) ** 2 + np.abs(u.coeffs[1]) ** 2)))
    return float(np.sqrt(total))


def inner(u: SpectralField, v: SpectralField) -> float:
    """Coefficient-sum inner product ``sum_k u_hat[k] . conj(v_hat[k])``.

    Real for real-valued fields; the imaginary rounding residue is dropped.
    """
    _check_same_grid(u, v)
    return float(np.real(np.sum(u.coeffs * np.conj(v.coeffs))))


def partial_derivative(u: SpectralField, axis: int) -> SpectralField:
    """Spectral partial derivative along ``axis`` (1 or 2).

    Differentiation multiplies by i*k; any Nyquist modes (present only when
    dealias_fraction == 1) get derivative zero, as an odd-order derivative of
    a real field has no consistent Nyquist coefficient.
    """
    if axis not in (1, 2):
        raise ValueError(f"axis must be 1 or 2, got {axis}")
    k = u.grid.k1 if axis == 1 else u.grid.k2
    mult = 1j * k.astype(np.float64)
    n = u.grid.n1 if axis == 1 else u.grid.n2
    if axis == 1:
        mult = np.where(np.abs(u.grid.k1) == n // 2, 0.0, mult)
    else:
        mult = np.where(np.abs(u.grid.k2) == n // 2, 0.0, mult)
    return SpectralField(u.grid, u.coeffs * mult)


def mollify(u: SpectralField, eps: float) -> SpectralField:
    """Smooth a field with the Gaussian multiplier ``exp(-|eps*k|^2)``."""
    if eps < 0:
        raise ValueError(f"mollifier width must be >= 0, got {eps}")
    ksq = (u.grid.k1 ** 2 + u.grid.k2 ** 2).astype(np.float64)
    return SpectralField(u.grid, u.coeffs * np.exp(-(eps * eps) * ksq))


def to_physical(u: SpectralField) -> tuple[ScalarGridField, ScalarGridField]:
    """Evaluate both velocity components on the collocation grid."""
    n = u.grid.n1 * u.grid.n2
    phys = scipy.fft.ifft2(u.coeffs, axes=(-2, -1)) * n
    return (
        ScalarGridField(u.grid, np.ascontiguousarray(phys[0].real)),
        ScalarGridField(u.grid, np.ascontiguousarray(phys[1].real)),
    )


def from_physical(
    grid: GridSpec,
    components: tuple[ScalarGridField, ScalarGridField] | np.ndarray,
    *,
    project: bool = False,
    require_divergence_free: bool = True,
) -> SpectralField:
    """Transform collocation samples into a band-limited spectral field.

    The mean is removed and modes outside the retained band are dropped.
    ``project=True`` applies the Leray projection instead of validating
    divergence-freeness.
    """
    if isinstance(components, np.ndarray):
        values = np.asarray(components, dtype=np.float64)
        if values.shape != (2, grid.n1, grid.n2):
            raise ValueError(
                f"expected physical array of shape (2, {grid.n1}, {grid.n2}), "
                f"got {values.shape}"
            )
    else:
        c1, c2 = components
        if c1.grid != grid or c2.grid != grid:
            raise GridMismatchError("scalar components live on a different grid")
        values = np.stack([c1.values, c2.values])
    coeffs = scipy.fft.fft2(values, axes=(-2, -1)) / (grid.n1 * grid.n2)
    coeffs[:, ~grid.band_mask] = 0.0
    coeffs[:, 0, 0] = 0.0
    if project:
        return SpectralField.from_coefficients(grid, _leray_raw(grid, coeffs))
    return SpectralField.from_coefficients(
        grid, coeffs, require_divergence_free=require_divergence_free
    )


def mixed_norm(
    u: ScalarGridField,
    p: float,
    q: float,
    *,
    outer: str = "h",
) -> float:
    """Mixed Lebesgue norm of a scalar field by collocation quadrature.

    ``outer="h"`` computes ``L^p_h(L^q_v)``: the inner norm runs over the
    vertical coordinate x2, the outer norm over the horizontal coordinate x1.
    ``outer="v"`` swaps the roles.  Powers of infinity take grid maxima; the
    periodic trapezoid rule (equal weights 2*pi/n) handles finite exponents.
    """
    if p < 1 or q < 1:
        raise ValueError(f"exponents must be >= 1, got p={p}, q={q}")
    if outer not in ("h", "v"):
        raise ValueError(f"outer must be 'h' or 'v', got {outer!r}")
    if isinstance(u, SpectralField):
        raise TypeError(
            "mixed_norm expects a scalar grid field; pass one velocity "
            "component, e.g. to_physical(u)[0]"
        )
    vals = np.abs(np.asarray(u.values, dtype=np.float64))
    # axis 0 is x1 (horizontal), axis 1 is x2 (vertical)
    inner_axis = 1 if outer == "h" else 0
    n_inner = vals.shape[inner_axis]
    n_outer = vals.shape[1 - inner_axis]
    dx_inner = 2.0 * np.pi / n_inner
    dx_outer = 2.0 * np.pi / n_outer
    if np.isinf(q):
        profile = vals.max(axis=inner_axis)
    else:
        profile = (np.sum(vals ** q, axis=inner_axis) * dx_inner) ** (1.0 / q)
    if np.isinf(p):
        return float(profile.max())
    return float((np.sum(profile ** p) * dx_outer) ** (1.0 / p))


# ---------------------------------------------------------------------------
# snapshot file format
#
# Layout: 4-byte magic "ANSF", version byte (1), n1 and n2 as little-endian
# uint32, then 2*n1*n2 little-endian complex doubles: the coefficient pair
# (u1_hat, u2_hat) for every lattice site in k1-major FFT order.
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sBII")


def write_snapshot(path, field: SpectralField) -> None:
    """Write a field snapshot; the coefficient payload round-trips bitwise."""
    pairs = np.ascontiguousarray(
        field.coeffs.transpose(1, 2, 0), dtype="<c16"
    )
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(ANSF_MAGIC, ANSF_VERSION, field.grid.n1, field.grid.n2))
        fh.write(pairs.tobytes())


def read_snapshot(
    path,
    *,
    dealias_fraction: float = 2.0 / 3.0,
    require_divergence_free: bool = True,
) -> SpectralField:
    """Read a snapshot written by :func:`write_snapshot`.

    The retained-band fraction is not part of the file format and must be
    supplied; the stored coefficients are validated against it.

    Raises
    ------
    SnapshotFormatError
        On a wrong magic, unsupported version, implausible grid sizes, or a
        payload whose length does not match the header.
    """
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise SnapshotFormatError("snapshot file too short for its header")
        magic, version, n1, n2 = _HEADER.unpack(header)
        if magic != ANSF_MAGIC:
            raise SnapshotFormatError(f"bad magic {magic!r}, expected {ANSF_MAGIC!r}")
        if version != ANSF_VERSION:
            raise SnapshotFormatError(f"unsupported snapshot version {version}")
        if n1 < 4 or n2 < 4 or n1 % 2 or n2 % 2 or n1 > 1 << 20 or n2 > 1 << 20:
            raise SnapshotFormatError(f"implausible grid sizes ({n1}, {n2})")
        payload = fh.read()
    expected = 2 * n1 * n2 * 16
    if len(payload) != expected:
        raise SnapshotFormatError(
            f"payload has {len(payload)} bytes, expected {expected}"
        )
    pairs = np.frombuffer(payload, dtype="<c16").reshape(n1, n2, 2)
    coeffs = np.ascontiguousarray(pairs.transpose(2, 0, 1), dtype=np.complex128)
    grid = GridSpec(int(n1), int(n2), dealias_fraction)
    try:
        return SpectralField.from_coefficients(
            grid, coeffs, require_divergence_free=require_divergence_free
        )
    except (ValueError, SymmetryError) as exc:
        raise SnapshotFormatError(f"snapshot payload invalid: {exc}") from exc


# ---------------------------------------------------------------------------
# field factories
# ---------------------------------------------------------------------------


def field_from_modes(
    grid: GridSpec,
    modes: Mapping[tuple[int, int], tuple[complex, complex]],
    *,
    project: bool = False,
    require_divergence_free: bool = True,
) -> SpectralField:
    """Build a field from a handful of modes, mirroring each to its conjugate.

    ``modes`` maps a lattice point (k1, k2) to the coefficient pair
    (u1_hat, u2_hat); the conjugate value is placed at -k automatically so the
    field is real.  Specifying both k and -k is rejected.
    """
    coeffs = np.zeros((2, grid.n1, grid.n2), dtype=np.complex128)
    seen: set[tuple[int, int]] = set()
    for (a, b), vec in modes.items():
        if (a, b) == (0, 0):
            raise ValueError("the zero mode must vanish; shift the field instead")
        if abs(a) > grid.kmax1 or abs(b) > grid.kmax2:
            raise ValueError(
                f"mode ({a}, {b}) lies outside the retained band "
                f"(kmax = ({grid.kmax1}, {grid.kmax2}))"
            )
        if (-a, -b) in seen:
            raise ValueError(f"mode ({a}, {b}) conflicts with its mirror, set it once")
        seen.add((a, b))
        i1, i2 = a % grid.n1, b % grid.n2
        j1, j2 = (-a) % grid.n1, (-b) % grid.n2
        coeffs[0, i1, i2] = vec[0]
        coeffs[1, i1, i2] = vec[1]
        coeffs[0, j1, j2] = np.conj(vec[0])
        coeffs[1, j1, j2] = np.conj(vec[1])
    if project:
        return SpectralField.from_coefficients(grid, _leray_raw(grid, coeffs))
    return SpectralField.from_coefficients(
        grid, coeffs, require_divergence_free=require_divergence_free
    )


def horizontal_shear(grid: GridSpec, amplitude: float = 1.0) -> SpectralField:
    """The field (0, A sin x1): vertical velocity sheared along x1.

    Pure mode (1, 0), divergence-free; the horizontal viscosity damps it at
    the rate exp(-t) per unit viscosity.
    """
    return field_from_modes(grid, {(1, 0): (0.0, -0.5j * amplitude)})


def vertical_shear(grid: GridSpec, amplitude: float = 1.0) -> SpectralField:
    """The field (A sin x2, 0): horizontal velocity sheared along x2.

    Pure mode (0, 1), divergence-free, annihilated by both the horizontal
    Laplacian and the self-advection term, hence a steady state.
    """
    return field_from_modes(grid, {(0, 1): (-0.5j * amplitude, 0.0)})


def random_divergence_free(
    grid: GridSpec,
    rng: np.random.Generator,
    *,
    scale: float = 1.0,
    kmin: int = 1,
    kmax: int | None = None,
    decay: float = 0.0,
) -> SpectralField:
    """Random smooth divergence-free field with H norm ``scale``.

    Retained modes with ``kmin <= max(|k1|, |k2|) <= kmax`` receive complex
    Gaussian coefficients damped by ``(1 + |k|)^(-decay)``; the result is
    Hermitian-symmetrized, Leray-projected and rescaled.  Deterministic given
    the generator state.
    """
    coeffs = rng.standard_normal((2, grid.n1, grid.n2)) + 1j * rng.standard_normal(
        (2, grid.n1, grid.n2)
    )
    kmag = np.maximum(np.abs(grid.k1), np.abs(grid.k2))
    hi = min(kmax, max(grid.kmax1, grid.kmax2)) if kmax is not None else max(
        grid.kmax1, grid.kmax2
    )
    keep = grid.band_mask & (kmag >= kmin) & (kmag <= hi)
    coeffs[:, ~keep] = 0.0
    if decay > 0.0:
        ksq = (grid.k1 ** 2 + grid.k2 ** 2).astype(np.float64)
        coeffs *= (1.0 + np.sqrt(ksq)) ** (-decay)
    coeffs = 0.5 * (coeffs + np.conj(_reflected(coeffs, grid)))
    coeffs[:, 0, 0] = 0.0
    _leray_raw(grid, coeffs)
    norm = np.sqrt(np.sum(np.abs(coeffs) ** 2))
    if norm == 0.0:
        raise ValueError("no modes available in the requested band")
    coeffs *= scale / norm
    return SpectralField.from_coefficients(grid, coeffs)
