"""Discrete space-time restriction norms and empirical Strichartz probes.

Norms use the canonical m = 0 modulation weight <tau + |xi|> (the weights for
different masses are equivalent); the mass enters only through sample
generation.  All probes report sampled lower envelopes of constants, never
operator norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import ConfigError
from .reporting import ExperimentReport
from .spectral import Grid3, bump, dyadic_symbol, fft_workers

PHYSICAL = "physical"
SPECTRAL = "spectral"

_UNITARY_4D = (2.0 * np.pi) ** (-2.0)


@dataclass
class XsbParams:
    s: float = 0.0
    b: float = 0.6
    b_prime: float = -0.3
    T: float = 0.5
    m: float = 0.0

    def validate_wellposed(self) -> None:
        """Enforce -1/2 < b' < 0 < 1/2 < b <= b'+1."""
        if not (-0.5 < self.b_prime < 0.0):
            raise ConfigError(f"b' = {self.b_prime} violates -1/2 < b' < 0")
        if not (0.5 < self.b <= self.b_prime + 1.0):
            raise ConfigError(f"b = {self.b} violates 1/2 < b <= b' + 1")


@dataclass
class SpaceTimeField:
    """Complex field on (time circle) x (torus), shape (n_t, n, n, n)."""

    grid: Grid3
    n_t: int
    t_period: float
    values: np.ndarray
    rep: str = PHYSICAL
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = (self.n_t,) + (self.grid.n,) * 3
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")
        if self.values.dtype != np.complex128:
            self.values = np.asarray(self.values, dtype=np.complex128)

    @property
    def dt(self) -> float:
        return self.t_period / self.n_t

    def times(self) -> np.ndarray:
        """Sample times centered at 0."""
        return self.dt * np.arange(self.n_t) - self.t_period / 2.0

    def taus(self) -> np.ndarray:
        return 2.0 * np.pi * scipy.fft.fftfreq(self.n_t, d=self.dt)

    def cell_4d(self, rep: str) -> float:
        if rep == PHYSICAL:
            return self.dt * self.grid.cell_volume
        return (2.0 * np.pi / self.t_period) * self.grid.spectral_cell_volume

    def to_spectral(self) -> "SpaceTimeField":
        if self.rep == SPECTRAL:
            return self
        vhat = scipy.fft.fftn(self.values, workers=fft_workers())
        vhat *= _UNITARY_4D * self.dt * self.grid.cell_volume
        return SpaceTimeField(self.grid, self.n_t, self.t_period, vhat, SPECTRAL,
                              dict(self.meta))

    def to_physical(self) -> "SpaceTimeField":
        if self.rep == PHYSICAL:
            return self
        v = scipy.fft.ifftn(self.values, workers=fft_workers())
        v *= (
            _UNITARY_4D
            * (2.0 * np.pi / self.t_period)
            * self.grid.spectral_cell_volume
            * self.n_t
            * self.grid.n**3
        )
        return SpaceTimeField(self.grid, self.n_t, self.t_period, v, PHYSICAL,
                              dict(self.meta))

    def in_rep(self, rep: str) -> "SpaceTimeField":
        return self.to_spectral() if rep == SPECTRAL else self.to_physical()


def st_l2_norm(u: SpaceTimeField) -> float:
    return float(np.sqrt(np.sum(np.abs(u.values) ** 2) * u.cell_4d(u.rep)))


def st_l4_norm(u: SpaceTimeField) -> float:
    phys = u.to_physical()
    return float((np.sum(np.abs(phys.values) ** 4) * u.cell_4d(PHYSICAL)) ** 0.25)


def xsb_norm(u: SpaceTimeField, p: XsbParams) -> float:
    """Weighted spectral norm with weights <xi>^{2s} <tau+|xi|>^{2b}."""
    uhat = u.to_spectral()
    kabs = u.grid.kabs
    tau = u.taus()
    mod = tau[:, None, None, None] + kabs[None, :, :, :]
    w = (1.0 + kabs**2)[None] ** p.s * (1.0 + mod**2) ** p.b
    total = np.sum(w * np.abs(uhat.values) ** 2) * u.cell_4d(SPECTRAL)
    return float(np.sqrt(total))


def project_spatial(u: SpaceTimeField, weights: np.ndarray) -> SpaceTimeField:
    """Multiply the spatial spectrum by frequency weights (all tau alike)."""
    uhat = u.to_spectral()
    return SpaceTimeField(u.grid, u.n_t, u.t_period,
                          uhat.values * weights[None], SPECTRAL, dict(u.meta))


def ball_weights(grid: Grid3, center, radius: float) -> np.ndarray:
    kx, ky, kz = grid.kvectors()
    d2 = (kx - center[0]) ** 2 + (ky - center[1]) ** 2 + (kz - center[2]) ** 2
    return (d2 <= radius**2).astype(np.float64)


# ---------------------------------------------------------------------------
# Sample generation
# ---------------------------------------------------------------------------


def _radial_spectrum(grid: Grid3, rng, radius_range) -> np.ndarray:
    """Random spatial spectrum depending only on the binned |xi| (exactly
    radial under the grid's signed permutations)."""
    bins = np.round(grid.kabs / grid.dk).astype(np.intp)
    n_bins = int(bins.max()) + 1
    coeffs = rng.standard_normal(n_bins) + 1j * rng.standard_normal(n_bins)
    vals = coeffs[bins]
    lo, hi = radius_range
    vals = np.where((grid.kabs >= lo) & (grid.kabs <= hi), vals, 0.0)
    return vals


def sample_xsb_function(seed: int, concentration: str, grid: Grid3,
                        n_t: int, t_period: float, T: float = 0.5,
                        lam: float = 8.0, m: float = 0.0,
                        radial: bool = False, center=None,
                        cap_radius: float = 0.0) -> SpaceTimeField:
    """Deterministic random space-time test function.

    cone: psi_T(t) U(t) phi with phi supported on the annulus [lam, 7*lam/4]
    (modulation concentrated at tau = -|xi|).  cap: like cone but phi lives
    on the ball of radius cap_radius at ``center`` (the sharp family for the
    ball-restriction estimates).  cube: cone structure with phi on the cube
    of half-side lam/8 at lam*e1.  annulus: spatially annulus-supported white
    noise in time, psi_T cutoff.  random: white space-time noise.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    n = grid.n
    t = t_period / n_t * np.arange(n_t) - t_period / 2.0
    psi = bump(t / T)
    if concentration in ("cone", "annulus"):
        hi = min(1.75 * lam, 0.9 * grid.nyquist)
        if radial:
            phi_hat = _radial_spectrum(grid, rng, (lam, hi))
        else:
            phi_hat = rng.standard_normal((n,) * 3) + 1j * rng.standard_normal((n,) * 3)
            phi_hat *= ((grid.kabs >= lam) & (grid.kabs <= hi)).astype(float)
    elif concentration == "cap":
        if center is None or cap_radius <= 0.0:
            raise ValueError("cap concentration requires center and cap_radius")
        phi_hat = rng.standard_normal((n,) * 3) + 1j * rng.standard_normal((n,) * 3)
        phi_hat *= ball_weights(grid, center, cap_radius)
    elif concentration == "cube":
        kx, ky, kz = grid.kvectors()
        mask = (
            (np.abs(kx - lam) <= lam / 8.0)
            & (np.abs(ky) <= lam / 8.0)
            & (np.abs(kz) <= lam / 8.0)
        ).astype(float)
        phi_hat = (rng.standard_normal((n,) * 3)
                   + 1j * rng.standard_normal((n,) * 3)) * mask
    elif concentration == "random":
        vals = rng.standard_normal((n_t,) + (n,) * 3) + 1j * rng.standard_normal(
            (n_t,) + (n,) * 3
        )
        return SpaceTimeField(grid, n_t, t_period, vals, PHYSICAL)
    else:
        raise ValueError(f"unknown concentration {concentration!r}")
    if concentration in ("cone", "cube", "cap"):
        phase = np.exp(
            1j * t[:, None, None, None]
            * (m - np.sqrt(m**2 + grid.ksq))[None]
        )
        spec_t = phase * phi_hat[None]
        # inverse spatial transform per time slice, then the psi_T cutoff
        v = scipy.fft.ifftn(spec_t, axes=(1, 2, 3), workers=fft_workers())
        v *= (2.0 * np.pi) ** (-1.5) * grid.spectral_cell_volume * grid.n**3
        v *= psi[:, None, None, None]
        return SpaceTimeField(grid, n_t, t_period, v, PHYSICAL)
    # annulus: independent noise per time slice on the spatial support
    noise_t = rng.standard_normal((n_t,) + (n,) * 3) + 1j * rng.standard_normal(
        (n_t,) + (n,) * 3
    )
    spec_t = np.where(np.abs(phi_hat[None]) > 0, noise_t, 0.0)
    v = scipy.fft.ifftn(spec_t, axes=(1, 2, 3), workers=fft_workers())
    v *= (2.0 * np.pi) ** (-1.5) * grid.spectral_cell_volume * grid.n**3
    v *= psi[:, None, None, None]
    return SpaceTimeField(grid, n_t, t_period, v, PHYSICAL)


def is_spatially_radial(u: SpaceTimeField, tol: float = 1e-10) -> bool:
    """Exact-symmetry check: spatial spectrum invariant under grid rotations."""
    uhat = u.to_spectral().values
    scale = float(np.max(np.abs(uhat))) or 1.0
    swapped = np.transpose(uhat, (0, 2, 1, 3))
    if float(np.max(np.abs(uhat - swapped))) > tol * scale:
        return False
    flipped = np.roll(uhat[:, ::-1, :, :], 1, axis=1)
    return float(np.max(np.abs(uhat - flipped))) <= tol * scale


# ---------------------------------------------------------------------------
# Ratio probes
# ---------------------------------------------------------------------------


def strichartz_ratio(u: SpaceTimeField, mu: float, p: XsbParams,
                     center=(0.0, 0.0, 0.0)) -> float:
    """||P_{B_mu} u||_{L4} / (mu^{1/4} ||u||_{1/4,b}); 0 for u = 0."""
    if p.b <= 0.5:
        raise ConfigError("strichartz probes require b > 1/2")
    den_params = XsbParams(s=0.25, b=p.b)
    den = mu**0.25 * xsb_norm(u, den_params)
    if den == 0.0:
        if float(np.max(np.abs(u.values))) == 0.0:
            return 0.0
        raise ZeroDivisionError("vanishing X^{1/4,b} norm for nonzero field")
    w = ball_weights(u.grid, center, mu)
    proj = project_spatial(u, w)
    return st_l4_norm(proj) / den


def strichartz_global_ratio(u: SpaceTimeField, p: XsbParams) -> float:
    """||u||_{L4} / ||u||_{1/2,b}; 0 for u = 0."""
    if p.b <= 0.5:
        raise ConfigError("strichartz probes require b > 1/2")
    den = xsb_norm(u, XsbParams(s=0.5, b=p.b))
    if den == 0.0:
        if float(np.max(np.abs(u.values))) == 0.0:
            return 0.0
        raise ZeroDivisionError("vanishing X^{1/2,b} norm for nonzero field")
    return st_l4_norm(u) / den


def bilinear_ratio(u1: SpaceTimeField, u2: SpaceTimeField, mu: float,
                   lam: float, p: XsbParams, radial: bool = False,
                   conjugate_second: bool = True) -> float:
    """Normalized low-frequency output of a product of two waves.

    General form: ||P_mu(u1 * ~u2)||_{L2} / (mu^{1/2} ||u1||_{1/4,b} ||u2||_{1/4,b}).
    Radial form (requires spatially radial inputs): the factors are first
    localized with P_lam and the normalization is mu * ||.||_{0,b}^2.
    """
    if p.b <= 0.5:
        raise ConfigError("bilinear probes require b > 1/2")
    if float(np.max(np.abs(u2.values))) == 0.0 or float(np.max(np.abs(u1.values))) == 0.0:
        return 0.0
    if radial:
        if lam < mu:
            raise ValueError("radial form requires lam >= mu")
        if not (is_spatially_radial(u1) and is_spatially_radial(u2)):
            raise ValueError("radial form requires spatially radial inputs")
        w_lam = dyadic_symbol(lam, u1.grid.kabs)
        f1 = project_spatial(u1, w_lam)
        f2 = project_spatial(u2, w_lam)
        den = mu * xsb_norm(u1, XsbParams(s=0.0, b=p.b)) * xsb_norm(
            u2, XsbParams(s=0.0, b=p.b)
        )
    else:
        f1, f2 = u1, u2
        q = XsbParams(s=0.25, b=p.b)
        den = mu**0.5 * xsb_norm(u1, q) * xsb_norm(u2, q)
    a = f1.to_physical().values
    b = f2.to_physical().values
    if conjugate_second:
        b = np.conj(b)
    prod = SpaceTimeField(u1.grid, u1.n_t, u1.t_period, a * b, PHYSICAL)
    w_mu = dyadic_symbol(mu, u1.grid.kabs)
    num = st_l2_norm(project_spatial(prod, w_mu))
    return num / den


# ---------------------------------------------------------------------------
# Probe sweeps (seeded maxima, reproducible)
# ---------------------------------------------------------------------------

PROBE_IDS = ("str1", "str1b", "str2", "bil-str")


def _probe_grid(n: int = 32) -> Grid3:
    return Grid3(n, 2.0 * np.pi)


def run_probe(probe: str, p: XsbParams | None = None, n_seeds: int = 100,
              mu_list=(1.0, 2.0, 4.0), lam: float = 8.0,
              lam_list=(4.0, 8.0, 16.0), n_t: int = 48,
              t_period: float = 3.0) -> ExperimentReport:
    """Run one estimate probe over seeds; rows (estimate_id, mu, lambda, seed, ratio).

    str1: ball-restricted L4 (max-ratio per mu should be mu-stable).
    str1b: global L4 against the X^{1/2,b} norm.
    str2: bilinear low-output with the mu^{1/2} normalization.
    bil-str: radial-data comparison of the mu-normalized (radial) against the
    mu^{1/2}-normalized (general) form across lam; the advantage exponent is
    fitted in the summary.
    """
    p = p or XsbParams()
    p.validate_wellposed()
    rows = []
    if probe in ("str1", "str1b", "str2"):
        grid = _probe_grid(32)
        for seed in range(n_seeds):
            rng = np.random.Generator(np.random.Philox(key=seed + 10**6))
            direction = rng.standard_normal(3)
            direction /= np.linalg.norm(direction)
            center = lam * 1.35 * direction
            if probe == "str1":
                # cap-concentrated data: the sharp family for the ball estimate
                for mu in mu_list:
                    u = sample_xsb_function(seed, "cap", grid, n_t, t_period,
                                            T=p.T, m=p.m, center=center,
                                            cap_radius=mu)
                    rows.append((probe, mu, lam, seed,
                                 strichartz_ratio(u, mu, p, center)))
            elif probe == "str1b":
                u = sample_xsb_function(seed, "cone", grid, n_t, t_period,
                                        T=p.T, lam=lam, m=p.m)
                rows.append((probe, 0.0, lam, seed,
                             strichartz_global_ratio(u, p)))
            else:
                # same-shell cap pairs separated by ~mu so the difference
                # frequencies land in the dyadic output block
                for mu in mu_list:
                    tangent = np.cross(direction, [0.0, 0.0, 1.0])
                    if np.linalg.norm(tangent) < 1e-9:
                        tangent = np.cross(direction, [0.0, 1.0, 0.0])
                    tangent /= np.linalg.norm(tangent)
                    c2 = center + 1.5 * mu * tangent
                    c2 *= np.linalg.norm(center) / np.linalg.norm(c2)
                    u1 = sample_xsb_function(seed, "cap", grid, n_t, t_period,
                                             T=p.T, m=p.m, center=center,
                                             cap_radius=mu)
                    u2 = sample_xsb_function(seed + 5 * 10**5, "cap", grid,
                                             n_t, t_period, T=p.T, m=p.m,
                                             center=c2, cap_radius=mu)
                    rows.append((probe, mu, lam, seed,
                                 bilinear_ratio(u1, u2, mu, lam, p)))
    elif probe == "bil-str":
        grid = _probe_grid(64)
        for lam_i in lam_list:
            for seed in range(n_seeds):
                u1 = sample_xsb_function(seed, "cone", grid, n_t, t_period,
                                         T=p.T, lam=lam_i, m=p.m, radial=True)
                u2 = sample_xsb_function(seed + 5 * 10**5, "cone", grid, n_t,
                                         t_period, T=p.T, lam=lam_i, m=p.m,
                                         radial=True)
                r_rad = bilinear_ratio(u1, u2, 1.0, lam_i, p, radial=True)
                r_gen = bilinear_ratio(u1, u2, 1.0, lam_i, p, radial=False)
                rows.append(("bil-str-radial", 1.0, lam_i, seed, r_rad))
                rows.append(("bil-str-general", 1.0, lam_i, seed, r_gen))
    else:
        raise ConfigError(f"unknown probe {probe!r}; choose from {PROBE_IDS}")
    report = ExperimentReport(
        columns=("estimate_id", "mu", "lambda", "seed", "ratio"),
        rows=rows,
        config={"probe": probe, "b": p.b, "s": p.s, "T": p.T, "m": p.m,
                "n_seeds": n_seeds, "n_t": n_t, "t_period": t_period},
    )
    report.config.update(_summarize_probe(probe, rows))
    return report


def _summarize_probe(probe: str, rows) -> dict:
    out: dict = {"per_mu_max": {}}
    if probe == "bil-str":
        gaps = {}
        for est_id, mu, lam, seed, ratio in rows:
            key = (est_id, lam)
            cur = gaps.get(key)
            if cur is None or ratio > cur[0]:
                gaps[key] = (ratio, seed)
        lams = sorted({lam for (_, lam) in gaps})
        advantage = []
        for lam in lams:
            rad = gaps[("bil-str-radial", lam)][0]
            gen = gaps[("bil-str-general", lam)][0]
            advantage.append(rad / gen)
        exponent = float(np.polyfit(np.log(lams), np.log(advantage), 1)[0])
        out["radial_advantage_exponent"] = exponent
        out["per_lambda_max"] = {
            f"{est_id}@{lam}": {"ratio": v[0], "seed": v[1]}
            for (est_id, lam), v in gaps.items()
        }
        return out
    best: dict = {}
    for est_id, mu, lam, seed, ratio in rows:
        cur = best.get(mu)
        if cur is None or ratio > cur[0]:
            best[mu] = (ratio, seed)
    out["per_mu_max"] = {
        str(mu): {"ratio": v[0], "seed": v[1]} for mu, v in best.items()
    }
    return out
