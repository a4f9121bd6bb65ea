"""Periodic-torus spectral core: grids, fields, Fourier multipliers, projectors.

Conventions (fixed once, used everywhere):

* Fourier transform is the unitary symmetric one, forward and inverse each
  carrying ``(2*pi)**(-3/2)``.  Discrete Plancherel is then constant-free:
  ``l2_norm(u) == l2_norm(u_hat)`` to round-off.
* The frequency grid is ``2*pi*k/L`` in FFT ordering, ``|k| <= n/2`` per axis.
* The Coulomb multiplier ``4*pi/|xi|**2`` takes the value 0 at ``xi = 0``
  (mean-free potential); homogeneous negative powers do the same.
* The unpaired Nyquist plane is zeroed after nonlinear operations so real
  densities keep an exactly Hermitian spectrum.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft

from .errors import BosonLabError

PHYSICAL = "physical"
SPECTRAL = "spectral"

_UNITARY_3D = (2.0 * np.pi) ** (-1.5)


def fft_workers() -> int:
    """Worker count for FFT calls, capped by the BSLAB_THREADS env var."""
    cap = os.environ.get("BSLAB_THREADS")
    if cap:
        return max(1, int(cap))
    return min(os.cpu_count() or 1, 8)


class Grid3:
    """Uniform periodic grid on ``[0, L)^3`` with ``n`` points per axis.

    ``n`` must be a power of two; ``dx * n == box_length`` exactly.
    """

    def __init__(self, n_per_dim: int, box_length: float):
        n = int(n_per_dim)
        if n <= 0 or (n & (n - 1)) != 0:
            raise ValueError(f"n_per_dim must be a power of two, got {n_per_dim}")
        if box_length <= 0:
            raise ValueError("box_length must be positive")
        self.n = n
        self.box_length = float(box_length)
        self.dx = self.box_length / n
        self.dk = 2.0 * np.pi / self.box_length
        self.x1d = self.dx * np.arange(n)
        self.k1d = 2.0 * np.pi * scipy.fft.fftfreq(n, d=self.dx)
        kx = self.k1d[:, None, None]
        ky = self.k1d[None, :, None]
        kz = self.k1d[None, None, :]
        self.ksq = kx**2 + ky**2 + kz**2
        self.kabs = np.sqrt(self.ksq)

    @property
    def cell_volume(self) -> float:
        return self.dx**3

    @property
    def spectral_cell_volume(self) -> float:
        return self.dk**3

    @property
    def nyquist(self) -> float:
        """Largest per-axis frequency magnitude, ``pi * n / L``."""
        return np.pi * self.n / self.box_length

    def meshgrid(self):
        """Physical coordinate arrays with 'ij' indexing (x fastest axis 0)."""
        return np.meshgrid(self.x1d, self.x1d, self.x1d, indexing="ij")

    def kvectors(self):
        kx = np.broadcast_to(self.k1d[:, None, None], (self.n,) * 3)
        ky = np.broadcast_to(self.k1d[None, :, None], (self.n,) * 3)
        kz = np.broadcast_to(self.k1d[None, None, :], (self.n,) * 3)
        return kx, ky, kz

    def nyquist_mask(self):
        """Boolean mask of the unpaired Nyquist planes (index n/2)."""
        idx = np.abs(scipy.fft.fftfreq(self.n, d=1.0 / self.n) + self.n / 2) < 0.5
        mask = np.zeros((self.n,) * 3, dtype=bool)
        mask[idx, :, :] = True
        mask[:, idx, :] = True
        mask[:, :, idx] = True
        return mask

    def dealias_mask(self):
        """2/3-rule keep-mask (True on kept modes), Nyquist always dropped."""
        kidx = np.abs(scipy.fft.fftfreq(self.n, d=1.0 / self.n))
        keep1d = kidx <= self.n / 3.0
        return (
            keep1d[:, None, None] & keep1d[None, :, None] & keep1d[None, None, :]
        )

    def __eq__(self, other):
        return (
            isinstance(other, Grid3)
            and self.n == other.n
            and self.box_length == other.box_length
        )

    def __repr__(self):
        return f"Grid3(n_per_dim={self.n}, box_length={self.box_length})"


@dataclass
class Field:
    """Complex scalar field on a Grid3, in physical or spectral representation."""

    grid: Grid3
    values: np.ndarray
    rep: str = PHYSICAL
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (self.grid.n,) * 3:
            raise ValueError("values shape does not match grid")
        if self.rep not in (PHYSICAL, SPECTRAL):
            raise ValueError(f"unknown representation {self.rep!r}")
        if self.values.dtype != np.complex128:
            self.values = np.asarray(self.values, dtype=np.complex128)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy(), self.rep, dict(self.meta))

    def to_spectral(self) -> "Field":
        if self.rep == SPECTRAL:
            return self
        vhat = scipy.fft.fftn(self.values, workers=fft_workers())
        vhat *= _UNITARY_3D * self.grid.cell_volume
        return Field(self.grid, vhat, SPECTRAL, dict(self.meta))

    def to_physical(self) -> "Field":
        if self.rep == PHYSICAL:
            return self
        v = scipy.fft.ifftn(self.values, workers=fft_workers())
        v *= _UNITARY_3D * self.grid.spectral_cell_volume * self.grid.n**3
        return Field(self.grid, v, PHYSICAL, dict(self.meta))

    def in_rep(self, rep: str) -> "Field":
        return self.to_spectral() if rep == SPECTRAL else self.to_physical()


def field_from_function(grid: Grid3, fn, centered: bool = True) -> Field:
    """Physical field from ``fn(x, y, z)``; coordinates centered at L/2 if asked."""
    X, Y, Z = grid.meshgrid()
    if centered:
        c = grid.box_length / 2.0
        X, Y, Z = X - c, Y - c, Z - c
    return Field(grid, np.asarray(fn(X, Y, Z), dtype=np.complex128), PHYSICAL)


def zero_field(grid: Grid3, rep: str = PHYSICAL) -> Field:
    return Field(grid, np.zeros((grid.n,) * 3, dtype=np.complex128), rep)


def random_field(grid: Grid3, seed: int, rep: str = PHYSICAL) -> Field:
    rng = np.random.Generator(np.random.Philox(key=seed))
    vals = rng.standard_normal((grid.n,) * 3) + 1j * rng.standard_normal((grid.n,) * 3)
    return Field(grid, vals, rep)


# ---------------------------------------------------------------------------
# Fourier multipliers
# ---------------------------------------------------------------------------

_MULTIPLIER_KINDS = (
    "half_wave",
    "sqrt_op",
    "coulomb",
    "japanese_bracket_power",
    "homogeneous_power",
)


@dataclass(frozen=True)
class MultiplierSymbol:
    """Radial Fourier multiplier ``sym(|xi|)``.

    kinds: half_wave(m) = m - sqrt(m^2+|xi|^2); sqrt_op(m) = sqrt(m^2+|xi|^2);
    coulomb = 4*pi/|xi|^2 (0 at the origin); japanese_bracket_power(s) =
    (1+|xi|^2)^(s/2); homogeneous_power(a) = |xi|^a (0 at the origin for a<0).
    """

    kind: str
    m: float = 0.0
    exponent: float = 0.0

    def __post_init__(self):
        if self.kind not in _MULTIPLIER_KINDS:
            raise ValueError(f"unknown multiplier kind {self.kind!r}")
        if self.kind in ("half_wave", "sqrt_op") and self.m < 0:
            raise ValueError("mass must be nonnegative")

    def evaluate(self, kabs: np.ndarray) -> np.ndarray:
        k = np.asarray(kabs, dtype=np.float64)
        if self.kind == "half_wave":
            return self.m - np.sqrt(self.m**2 + k**2)
        if self.kind == "sqrt_op":
            return np.sqrt(self.m**2 + k**2)
        if self.kind == "coulomb":
            with np.errstate(divide="ignore"):
                out = np.where(k > 0.0, 4.0 * np.pi / np.where(k > 0, k, 1.0) ** 2, 0.0)
            return out
        if self.kind == "japanese_bracket_power":
            return (1.0 + k**2) ** (self.exponent / 2.0)
        # homogeneous_power
        if self.exponent >= 0:
            return k**self.exponent
        with np.errstate(divide="ignore"):
            return np.where(k > 0.0, np.where(k > 0, k, 1.0) ** self.exponent, 0.0)


def half_wave_symbol(xi, m: float) -> np.ndarray | float:
    """Dispersion symbol ``m - sqrt(m^2 + |xi|^2)`` for a frequency vector."""
    if m < 0:
        raise ValueError("mass must be nonnegative")
    xi = np.asarray(xi, dtype=np.float64)
    mag = np.sqrt(np.sum(xi**2, axis=-1))
    out = m - np.sqrt(m**2 + mag**2)
    return float(out) if out.ndim == 0 else out


def apply_multiplier(u, sym: MultiplierSymbol):
    """Pointwise spectral multiply; output representation matches the input."""
    from .radial import RadialProfile, radial_fourier  # local import, no cycle

    if isinstance(u, Field):
        rep_in = u.rep
        uhat = u.to_spectral()
        vals = uhat.values * sym.evaluate(u.grid.kabs)
        out = Field(u.grid, vals, SPECTRAL, dict(u.meta))
        return out.in_rep(rep_in)
    if isinstance(u, RadialProfile):
        rep_in = u.rep
        uhat = radial_fourier(u) if u.rep == PHYSICAL else u
        vals = uhat.values * sym.evaluate(uhat.grid.rho)
        out = RadialProfile(uhat.grid, vals, SPECTRAL)
        return radial_fourier(out) if rep_in == PHYSICAL else out
    raise TypeError(f"cannot apply multiplier to {type(u)!r}")


# ---------------------------------------------------------------------------
# Projectors
# ---------------------------------------------------------------------------


def bump(s):
    """Even bump: 1 on [-1,1], 0 outside (-2,2), quintic smoothstep between."""
    a = np.abs(np.asarray(s, dtype=np.float64))
    x = np.clip(a - 1.0, 0.0, 1.0)
    out = 1.0 - x**3 * (10.0 + x * (-15.0 + 6.0 * x))
    return out


def dyadic_symbol(lam: float, kabs: np.ndarray) -> np.ndarray:
    """Littlewood-Paley weight for the dyadic block at ``lam`` (lam=1 is the ball)."""
    if lam < 1:
        raise ValueError("dyadic scale must be >= 1")
    if lam == 1:
        return bump(kabs)
    return bump(kabs / lam) - bump(2.0 * kabs / lam)


@dataclass(frozen=True)
class ProjectorSpec:
    """Frequency projector: smooth dyadic block or sharp set indicator.

    kinds: smooth_dyadic(lam); sharp_ball(center, radius); sharp_cube(center,
    half_side); sharp_annulus(lam) with support ``lam <= |xi| <= 2*lam``.
    """

    kind: str
    lam: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.0
    half_side: float = 0.0

    def weights(self, grid: Grid3) -> np.ndarray:
        if self.kind == "smooth_dyadic":
            return dyadic_symbol(self.lam, grid.kabs)
        if self.kind == "sharp_ball":
            kx, ky, kz = grid.kvectors()
            c = self.center
            d2 = (kx - c[0]) ** 2 + (ky - c[1]) ** 2 + (kz - c[2]) ** 2
            return (d2 <= self.radius**2).astype(np.float64)
        if self.kind == "sharp_cube":
            kx, ky, kz = grid.kvectors()
            c = self.center
            inside = (
                (np.abs(kx - c[0]) <= self.half_side)
                & (np.abs(ky - c[1]) <= self.half_side)
                & (np.abs(kz - c[2]) <= self.half_side)
            )
            return inside.astype(np.float64)
        if self.kind == "sharp_annulus":
            return (
                (grid.kabs >= self.lam) & (grid.kabs <= 2.0 * self.lam)
            ).astype(np.float64)
        raise ValueError(f"unknown projector kind {self.kind!r}")


def project(u: Field, p: ProjectorSpec) -> Field:
    """Zero (sharp) or damp (smooth) spectral content outside the projector."""
    rep_in = u.rep
    uhat = u.to_spectral()
    w = p.weights(u.grid)
    if not np.any(w):
        warnings.warn("projector support does not intersect the frequency grid")
        meta = dict(u.meta)
        meta["empty_projector"] = True
        out = Field(u.grid, np.zeros_like(uhat.values), SPECTRAL, meta)
        return out.in_rep(rep_in)
    out = Field(u.grid, uhat.values * w, SPECTRAL, dict(u.meta))
    return out.in_rep(rep_in)


# ---------------------------------------------------------------------------
# Norms and the torus Coulomb backend
# ---------------------------------------------------------------------------


def l2_norm(u) -> float:
    """L2 norm with the grid measure, identical in either representation."""
    from .radial import RadialProfile

    if isinstance(u, Field):
        cell = u.grid.cell_volume if u.rep == PHYSICAL else u.grid.spectral_cell_volume
        return float(np.sqrt(np.sum(np.abs(u.values) ** 2) * cell))
    if isinstance(u, RadialProfile):
        g = u.grid
        if u.rep == PHYSICAL:
            return float(np.sqrt(np.sum(np.abs(u.values) ** 2 * 4 * np.pi * g.r**2) * g.dr))
        return float(np.sqrt(np.sum(np.abs(u.values) ** 2 * 4 * np.pi * g.rho**2) * g.drho))
    raise TypeError(f"cannot take l2_norm of {type(u)!r}")


def sobolev_norm(u, s: float) -> float:
    """H^s norm: weighted spectral L2 with weight ``(1+|xi|^2)^s``."""
    from .radial import RadialProfile, radial_fourier

    if isinstance(u, Field):
        uhat = u.to_spectral()
        w = (1.0 + u.grid.ksq) ** s
        total = np.sum(w * np.abs(uhat.values) ** 2) * u.grid.spectral_cell_volume
        return float(np.sqrt(total))
    if isinstance(u, RadialProfile):
        uhat = radial_fourier(u) if u.rep == PHYSICAL else u
        g = uhat.grid
        w = (1.0 + g.rho**2) ** s
        total = np.sum(w * np.abs(uhat.values) ** 2 * 4 * np.pi * g.rho**2) * g.drho
        return float(np.sqrt(total))
    raise TypeError(f"cannot take sobolev_norm of {type(u)!r}")


def validate_density(values: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Check a density is real and nonnegative up to ``tol`` (relative)."""
    scale = float(np.max(np.abs(values))) or 1.0
    if float(np.max(np.abs(values.imag))) > tol * scale:
        raise BosonLabError("density has a non-negligible imaginary part")
    rho = values.real
    if float(np.min(rho)) < -tol * scale:
        raise BosonLabError("density is negative beyond tolerance")
    return rho


def coulomb_potential_torus(rho: Field, dealias: bool = False) -> Field:
    """Mean-free Coulomb potential ``|x|^{-1} * rho`` via the 4*pi/|xi|^2 multiplier.

    The zero mode is set to 0 (Design Decisions); the Nyquist plane is zeroed
    to keep the potential exactly real for real densities.
    """
    vals = rho.to_physical().values
    validate_density(vals)
    rho_hat = rho.to_spectral().values.copy()
    if dealias:
        rho_hat *= rho.grid.dealias_mask()
    else:
        rho_hat[rho.grid.nyquist_mask()] = 0.0
    sym = MultiplierSymbol("coulomb").evaluate(rho.grid.kabs)
    out = Field(rho.grid, rho_hat * sym, SPECTRAL, dict(rho.meta))
    return out.in_rep(rho.rep)
