"""Counterexample wavepackets, the trilinear Duhamel integral, and the
norm-inflation / uniform-continuity experiments.

The trilinear integral evaluated here is the Fourier transform of the cubic
Duhamel term at frequency xi,

    F_t(xi) = c * e^{i t phi_m(xi)} *
              iint (e^{i t r_m} - 1)/(i r_m) *
              chi_1(xi1) chi_2(xi2) chi_1(xi - xi1 - xi2) / |xi1 + xi2|^2
              dxi1 dxi2,

with c = 1/(2 pi^2) fixed by expanding the Duhamel series under this
package's unitary Fourier convention (cross-validated against the grid
computation in evolve.duhamel_third_iterate).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import EmptySupportError, MonteCarloPrecisionError
from .evolve import MASS_SHIFTED, duhamel_kernel, half_phase
from .reporting import ExperimentReport, check_geometric, fit_loglog
from .spectral import Field, Grid3, SPECTRAL

TRILINEAR_CONSTANT = 1.0 / (2.0 * np.pi**2)

_SHARD_SIZE = 1 << 16


@dataclass(frozen=True)
class WavepacketSpec:
    """Fourier-support description of counterexample data.

    cube_pair(lam, delta): indicator of the cube of half-side mu = delta *
    sqrt(lam) centered at +lam*e1 (its mirror enters through the conjugate
    factor of the trilinear integral).  annulus(lam): indicator of
    lam <= |xi| <= 2*lam.
    """

    kind: str
    lam: float
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("cube_pair", "annulus"):
            raise ValueError(f"unknown wavepacket kind {self.kind!r}")
        if self.kind == "cube_pair":
            if not (0.0 < self.delta < 1.0):
                raise ValueError("delta must lie in (0, 1)")
            if self.lam < 1.0:
                raise ValueError("lam must be >= 1")
            if self.mu > self.lam / 8.0:
                raise ValueError("mu = delta*sqrt(lam) must be <= lam/8")
        else:
            if self.lam < 4.0:
                raise ValueError("annulus requires lam >= 4")

    @property
    def mu(self) -> float:
        return self.delta * math.sqrt(self.lam)


def build_wavepacket(spec: WavepacketSpec, grid: Grid3) -> Field:
    """Spectral indicator field of the wavepacket region on the torus grid."""
    if spec.kind == "cube_pair":
        support_radius = spec.lam + spec.mu
    else:
        support_radius = 2.0 * spec.lam
    if support_radius >= grid.nyquist:
        need = int(2 ** math.ceil(math.log2(
            support_radius * grid.box_length / np.pi + 2
        )))
        from .errors import SupportOverflowError

        raise SupportOverflowError(
            f"wavepacket support |xi| <= {support_radius:.2f} exceeds the "
            f"Nyquist frequency {grid.nyquist:.2f}; need n_per_dim >= {need}",
            min_n_per_dim=need,
        )
    kx, ky, kz = grid.kvectors()
    if spec.kind == "cube_pair":
        mu = spec.mu
        inside = (
            (np.abs(kx - spec.lam) <= mu)
            & (np.abs(ky) <= mu)
            & (np.abs(kz) <= mu)
        )
    else:
        inside = (grid.kabs >= spec.lam) & (grid.kabs <= 2.0 * spec.lam)
    vals = inside.astype(np.complex128)
    return Field(grid, vals, SPECTRAL)


def resonance(xi1, xi2, xi, m: float):
    """r_m = phi_m(xi1) - phi_m(xi2) + phi_m(xi-xi1-xi2) - phi_m(xi)."""
    if m < 0:
        raise ValueError("mass must be nonnegative")

    def phi(v):
        return m - np.sqrt(m**2 + np.sum(np.square(v), axis=-1))

    xi1 = np.asarray(xi1, dtype=np.float64)
    xi2 = np.asarray(xi2, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    out = phi(xi1) - phi(xi2) + phi(xi - xi1 - xi2) - phi(xi)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class TrilinearResult:
    xi: tuple
    value: complex
    stderr: float
    n_samples: int
    seed: int
    acceptance_rate: float = 0.0
    singular_rejects: int = 0


def _sphere_directions(rng, k: int) -> np.ndarray:
    v = rng.standard_normal((k, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _shard(spec: WavepacketSpec, t: float, xi: np.ndarray, m: float,
           k: int, seed_seq, singular_cutoff: float, exclude_cell_half: float):
    """One Monte-Carlo shard; returns (sum, sum_sq, accepted, singular)."""
    rng = np.random.Generator(np.random.Philox(seed_seq))
    lam = spec.lam
    if spec.kind == "cube_pair":
        mu = spec.mu
        center = np.array([lam, 0.0, 0.0])
        xi1 = center + mu * (2.0 * rng.random((k, 3)) - 1.0)
        omega = _sphere_directions(rng, k)
        reach = 2.0 * mu / np.max(np.abs(omega), axis=1)
        s = rng.random(k) * reach
        zeta = s[:, None] * omega
        base_weight = (2.0 * mu) ** 3 * 4.0 * np.pi * reach
        xi2 = zeta - xi1
        ok2 = (
            (np.abs(xi2[:, 0] + lam) <= mu)
            & (np.abs(xi2[:, 1]) <= mu)
            & (np.abs(xi2[:, 2]) <= mu)
        )
        xi3 = xi[None, :] - zeta
        ok3 = (
            (np.abs(xi3[:, 0] - lam) <= mu)
            & (np.abs(xi3[:, 1]) <= mu)
            & (np.abs(xi3[:, 2]) <= mu)
        )
    else:
        vol_A = 4.0 * np.pi / 3.0 * 7.0 * lam**3
        omega1 = _sphere_directions(rng, k)
        radius1 = lam * np.cbrt(1.0 + 7.0 * rng.random(k))
        xi1 = radius1[:, None] * omega1
        omega = _sphere_directions(rng, k)
        s = 4.0 * lam * rng.random(k)
        zeta = s[:, None] * omega
        base_weight = np.full(k, vol_A * 4.0 * np.pi * 4.0 * lam)
        r2 = np.linalg.norm(zeta - xi1, axis=1)
        ok2 = (r2 >= lam) & (r2 <= 2.0 * lam)
        r3 = np.linalg.norm(xi[None, :] - zeta, axis=1)
        ok3 = (r3 >= lam) & (r3 <= 2.0 * lam)
    zabs = np.linalg.norm(zeta, axis=1)
    singular = zabs < singular_cutoff
    if exclude_cell_half > 0.0:
        singular |= np.max(np.abs(zeta), axis=1) < exclude_cell_half
    accept = ok2 & ok3 & ~singular
    w = np.zeros(k, dtype=np.complex128)
    if np.any(accept):
        xi1a = xi1[accept]
        zet = zeta[accept]
        xi2a = zet - xi1a
        r = resonance(xi1a, xi2a, xi[None, :], m)
        w[accept] = duhamel_kernel(t, r) * base_weight[accept]
    return (
        complex(np.sum(w)),
        float(np.sum(np.abs(w) ** 2)),
        int(np.count_nonzero(accept)),
        int(np.count_nonzero(singular)),
    )


def f_t_monte_carlo(spec: WavepacketSpec, t: float, xi, m: float,
                    n_samples: int, seed: int, gauge: str = MASS_SHIFTED,
                    singular_cutoff: float = 1e-9,
                    exclude_cell_half: float = 0.0) -> TrilinearResult:
    """Monte-Carlo evaluation of the trilinear integral F_t at one frequency.

    Sampling: xi1 uniform over its region; the pair sum zeta = xi1 + xi2 is
    drawn radius-uniform (importance density ~ 1/|zeta|^2), which cancels the
    singular Coulomb weight exactly and leaves a bounded integrand.  Samples
    with |zeta| below ``singular_cutoff`` (or, when ``exclude_cell_half`` is
    set, inside that centered cube, matching a torus grid's excised zero
    cell) are rejected and counted.  Deterministic per (inputs, seed):
    fixed-size shards with per-shard Philox substreams, reduced in order.
    """
    if n_samples < 10**4:
        raise ValueError("n_samples must be at least 1e4")
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (3,):
        raise ValueError("xi must be a 3-vector")
    _check_reachable(spec, xi)
    shards = []
    offset = 0
    idx = 0
    while offset < n_samples:
        k = min(_SHARD_SIZE, n_samples - offset)
        shards.append((idx, k))
        offset += k
        idx += 1
    workers = int(os.environ.get("BSLAB_THREADS", "1"))

    def run(shard):
        i, k = shard
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(i,))
        return _shard(spec, t, xi, m, k, ss, singular_cutoff, exclude_cell_half)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, shards))
    else:
        results = [run(sh) for sh in shards]
    S1 = 0.0 + 0.0j
    S2 = 0.0
    n_acc = 0
    n_sing = 0
    for s1, s2, na, ns in results:
        S1 += s1
        S2 += s2
        n_acc += na
        n_sing += ns
    if n_acc == 0 and t != 0.0:
        raise EmptySupportError(
            f"no admissible samples for xi={tuple(xi)}; frequency outside the "
            "reachable sum-set"
        )
    mean = S1 / n_samples
    var = max(S2 / n_samples - abs(mean) ** 2, 0.0)
    phase = np.exp(1j * t * half_phase(np.linalg.norm(xi), m, gauge))
    value = TRILINEAR_CONSTANT * phase * mean
    stderr = TRILINEAR_CONSTANT * math.sqrt(var / n_samples)
    return TrilinearResult(
        xi=tuple(xi),
        value=complex(value),
        stderr=float(stderr),
        n_samples=int(n_samples),
        seed=int(seed),
        acceptance_rate=n_acc / n_samples,
        singular_rejects=n_sing,
    )


def _check_reachable(spec: WavepacketSpec, xi: np.ndarray) -> None:
    if spec.kind == "cube_pair":
        lim = 3.0 * spec.mu
        off = np.abs(xi - np.array([spec.lam, 0.0, 0.0]))
        if np.any(off > lim):
            raise EmptySupportError(
                f"xi={tuple(xi)} outside the reachable set (cube of half-side "
                f"{lim:.3f} at lam*e1)"
            )
    else:
        if np.linalg.norm(xi) > 6.0 * spec.lam:
            raise EmptySupportError("xi outside the reachable set |xi| <= 6*lam")


# ---------------------------------------------------------------------------
# Deterministic output frequencies and H^s norms of the indicator data
# ---------------------------------------------------------------------------

_CUBE_CORNERS = np.array(
    [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
    dtype=np.float64,
)

_ANNULUS_DIRECTIONS = np.array(
    [
        [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0],
        [1, 0, 1], [0, 1, 1], [1, 1, 1], [1, -1, 1],
    ],
    dtype=np.float64,
)
_ANNULUS_DIRECTIONS /= np.linalg.norm(_ANNULUS_DIRECTIONS, axis=1, keepdims=True)


def quarter_region_points(spec: WavepacketSpec) -> np.ndarray:
    """Eight deterministic output frequencies inside the 1/4-scaled region.

    cube_pair: corners of the concentric cube of half-side mu/8 (inside the
    1/4-cube of half-side mu/4).  annulus: fixed directions at radius
    11*lam/8, the midpoint of the concentric sub-annulus [5/4, 3/2]*lam.
    """
    if spec.kind == "cube_pair":
        return np.array([spec.lam, 0.0, 0.0]) + (spec.mu / 8.0) * _CUBE_CORNERS
    return (11.0 * spec.lam / 8.0) * _ANNULUS_DIRECTIONS


def quarter_region_volume(spec: WavepacketSpec) -> float:
    if spec.kind == "cube_pair":
        return (spec.mu / 2.0) ** 3
    return 4.0 * np.pi / 3.0 * spec.lam**3 * (27.0 / 8.0 - 125.0 / 64.0)


def hs_norm_indicator(spec: WavepacketSpec, s: float, n_quad: int = 24) -> float:
    """H^s norm of the indicator data, by Gauss-Legendre quadrature."""
    nodes, weights = leggauss(n_quad)
    if spec.kind == "cube_pair":
        mu = spec.mu
        x = spec.lam + mu * nodes
        yz = mu * nodes
        X, Y, Z = np.meshgrid(x, yz, yz, indexing="ij")
        W = (
            weights[:, None, None]
            * weights[None, :, None]
            * weights[None, None, :]
        ) * mu**3
        val = np.sum(W * (1.0 + X**2 + Y**2 + Z**2) ** s)
        return float(np.sqrt(val))
    r = 1.5 * spec.lam + 0.5 * spec.lam * nodes
    w = 0.5 * spec.lam * weights
    val = 4.0 * np.pi * np.sum(w * (1.0 + r**2) ** s * r**2)
    return float(np.sqrt(val))


# ---------------------------------------------------------------------------
# Scaling experiments
# ---------------------------------------------------------------------------


def _point_seed(seed: int, lam_idx: int, xi_idx: int) -> int:
    return seed * 100003 + lam_idx * 101 + xi_idx


def _norm_proxy(spec, s, values, stderrs):
    """L2(xi) norm over the 1/4-region from sampled |F| values, with stderr."""
    pts = quarter_region_points(spec)
    wts = (1.0 + np.sum(pts**2, axis=1)) ** s
    vals = np.asarray(values)
    sigs = np.asarray(stderrs)
    vol = quarter_region_volume(spec)
    mean_sq = float(np.mean(wts * vals**2))
    num_sq = vol * mean_sq
    var_num_sq = vol**2 * float(np.sum((wts * 2.0 * vals * sigs) ** 2)) / len(vals) ** 2
    num = math.sqrt(num_sq)
    sigma_num = math.sqrt(var_num_sq) / (2.0 * num) if num > 0 else np.inf
    return num, sigma_num


def c3_scaling_experiment(lam_list, s: float, t: float, delta: float, m: float,
                          n_samples: int, seed: int,
                          stderr_limit: float = 0.05) -> ExperimentReport:
    """Norm-inflation ratio of the cubic term for cube-pair data vs lambda.

    ratio(lam) = ||<xi>^s F_t||_{L2(1/4 W+)} / ||phi||_{H^s}^3, estimated from
    the eight deterministic output frequencies; the fitted log-log slope is
    expected at 1/2 - 2s.
    """
    lam_list = [float(l) for l in lam_list]
    check_geometric(lam_list)
    rows = []
    ratios = []
    log_sigmas = []
    for i, lam in enumerate(lam_list):
        spec = WavepacketSpec("cube_pair", lam, delta)
        pts = quarter_region_points(spec)
        vals, sigs = [], []
        for j, xi in enumerate(pts):
            res = f_t_monte_carlo(spec, t, xi, m, n_samples,
                                  _point_seed(seed, i, j))
            vals.append(abs(res.value))
            sigs.append(res.stderr)
        _require_precision(vals, sigs, stderr_limit)
        num, sigma_num = _norm_proxy(spec, s, vals, sigs)
        den = hs_norm_indicator(spec, s) ** 3
        ratio = num / den
        ratios.append(ratio)
        log_sigmas.append(sigma_num / num)
        for v, sg in zip(vals, sigs):
            rows.append((lam, t, v, sg, ratio))
    slope, ci = fit_loglog(lam_list, ratios, log_sigmas)
    return ExperimentReport(
        columns=("lambda", "t", "value", "stderr", "ratio"),
        rows=rows,
        config={
            "experiment": "c3_scaling",
            "s": s, "t": t, "delta": delta, "m": m,
            "n_samples": n_samples, "seed": seed,
            "lambdas": lam_list,
            "quarter_region": "concentric cube of half-side mu/4",
        },
        fitted_slope=slope,
        slope_ci=ci,
        expected_slope=0.5 - 2.0 * s,
    )


def radial_scaling_experiment(lam_list, s: float, delta: float, m: float,
                              n_samples: int, seed: int,
                              stderr_limit: float = 0.05) -> ExperimentReport:
    """Radial analogue on annulus data with t = delta/lam per lambda.

    ratio(lam) = ||<xi>^s F_t||_{L2(1/4 A)} / ||phi||_{H^s}^3; expected
    log-log slope -2s.
    """
    lam_list = [float(l) for l in lam_list]
    check_geometric(lam_list)
    rows = []
    ratios = []
    log_sigmas = []
    for i, lam in enumerate(lam_list):
        spec = WavepacketSpec("annulus", lam)
        t = delta / lam
        pts = quarter_region_points(spec)
        vals, sigs = [], []
        for j, xi in enumerate(pts):
            res = f_t_monte_carlo(spec, t, xi, m, n_samples,
                                  _point_seed(seed, i, j))
            vals.append(abs(res.value))
            sigs.append(res.stderr)
        _require_precision(vals, sigs, stderr_limit)
        num, sigma_num = _norm_proxy(spec, s, vals, sigs)
        den = hs_norm_indicator(spec, s) ** 3
        ratio = num / den
        ratios.append(ratio)
        log_sigmas.append(sigma_num / num)
        for v, sg in zip(vals, sigs):
            rows.append((lam, t, v, sg, ratio))
    slope, ci = fit_loglog(lam_list, ratios, log_sigmas)
    return ExperimentReport(
        columns=("lambda", "t", "value", "stderr", "ratio"),
        rows=rows,
        config={
            "experiment": "radial_scaling",
            "s": s, "delta": delta, "m": m,
            "n_samples": n_samples, "seed": seed,
            "lambdas": lam_list,
            "quarter_region": "concentric annulus [5/4, 3/2]*lam",
        },
        fitted_slope=slope,
        slope_ci=ci,
        expected_slope=-2.0 * s,
    )


def _require_precision(vals, sigs, limit: float) -> None:
    worst = max(sg / v if v > 0 else np.inf for v, sg in zip(vals, sigs))
    if worst > limit:
        raise MonteCarloPrecisionError(
            f"Monte-Carlo stderr/|value| = {worst:.3f} exceeds {limit}; "
            "increase n_samples"
        )


# ---------------------------------------------------------------------------
# Uniform-continuity (soliton decoherence) experiment
# ---------------------------------------------------------------------------


def uniform_continuity_experiment(t: float, n_list, m: float,
                                  init=None, tol: float = 1e-10) -> ExperimentReport:
    """Pairwise L2 distances of soliton solutions with merging initial data.

    For m = 0 the single massless profile Q is rescaled exactly; for m > 0
    the profile family is solved per member.  The frequency sequences are
    chosen so t*(mu1 - mu2) is an odd multiple of pi/2, killing the cosine:
    I(t) then equals the sum of the two masses while I(0) -> 0.
    """
    from .groundstate import default_initial_profile, petviashvili_solve
    from .radial import overlap_integral
    from .spectral import l2_norm

    if t <= 0:
        raise ValueError("t must be positive")
    n_list = [int(n) for n in n_list]
    if any(n <= 0 for n in n_list):
        raise ValueError("n values must be positive integers")
    base = np.pi / (2.0 * t)
    rows = []
    if m == 0.0:
        Q = petviashvili_solve(0.0, init or default_initial_profile(), tol)
        norm_sq = Q.l2_norm**2
        for n in n_list:
            mu1, mu2 = base * (n + 1) ** 2, base * n**2
            a = mu2 / mu1
            ov = a**1.5 * overlap_integral(Q.profile, Q.profile, a)
            cosf = math.cos(t * (mu1 - mu2))
            rows.append((n, mu1, mu2,
                         2.0 * norm_sq - 2.0 * ov,
                         2.0 * norm_sq - 2.0 * cosf * ov))
        config = {"experiment": "uniform_continuity", "m": m, "t": t,
                  "n_list": n_list, "Q_mass": norm_sq,
                  "limit_mass_2x": 2.0 * norm_sq}
    else:
        # rescale so the mass parameter is m^2; mu indexes the soliton family
        members = {}
        for n in sorted(set(n_list) | {max(n_list) + 1}):
            mu = base * n**2
            gs = petviashvili_solve(m**2 / mu**2,
                                    init or default_initial_profile(), tol)
            members[n] = (mu, gs)
        for n in n_list:
            mu2, gs2 = members[n]
            mu1, gs1 = members[n + 1]
            a = mu2 / mu1
            ov = a**1.5 * overlap_integral(gs1.profile, gs2.profile, a)
            cosf = math.cos(t * (mu1 - mu2))
            I0 = gs1.l2_norm**2 + gs2.l2_norm**2 - 2.0 * ov
            It = gs1.l2_norm**2 + gs2.l2_norm**2 - 2.0 * cosf * ov
            rows.append((n, mu1, mu2, I0, It))
        last = members[max(n_list) + 1][1]
        config = {"experiment": "uniform_continuity", "m": m, "t": t,
                  "n_list": n_list, "R_mass_finest": last.l2_norm**2,
                  "limit_mass_2x": 2.0 * last.l2_norm**2}
    return ExperimentReport(
        columns=("n", "mu1", "mu2", "I_zero", "I_t"),
        rows=rows,
        config=config,
    )
