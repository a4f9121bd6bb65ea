"""Time propagation of the boson star equation and Duhamel-expansion tools.

The integrator is Strang splitting with an *exact* nonlinear substep: the
Hartree potential V = |x|^{-1} * |u|^2 is invariant during the potential-only
flow, so u <- exp(+-i*dt*V) u is exact.  Mass is conserved per substep up to
FFT round-off; energy drift is O(dt^2).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError
from .radial import (
    RadialProfile,
    coulomb_potential_radial,
    radial_fourier,
    resample,
)
from .spectral import (
    PHYSICAL,
    SPECTRAL,
    Field,
    MultiplierSymbol,
    coulomb_potential_torus,
    l2_norm,
)

RAW = "raw"
MASS_SHIFTED = "mass_shifted"
FOCUSING = "focusing"
DEFOCUSING = "defocusing"

BLOWUP_FACTOR = 1e6


@dataclass
class EvolutionConfig:
    m: float = 0.0
    dt: float = 1e-2
    t_final: float = 1.0
    backend: str = "torus_fft"
    gauge: str = MASS_SHIFTED
    sign: str = FOCUSING

    def __post_init__(self):
        if self.m < 0:
            raise ConfigError("mass m must be nonnegative")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.t_final <= 0:
            raise ConfigError("t_final must be positive")
        if self.dt > self.t_final:
            raise ConfigError("dt must not exceed t_final")
        if self.backend not in ("torus_fft", "radial_newton"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.gauge not in (RAW, MASS_SHIFTED):
            raise ConfigError(f"unknown gauge {self.gauge!r}")
        if self.sign not in (FOCUSING, DEFOCUSING):
            raise ConfigError(f"unknown sign {self.sign!r}")

    def check_phase_resolution(self, state) -> None:
        """Warn when dt does not resolve the fastest linear phase."""
        kmax = _max_frequency(state)
        phase = abs(half_phase(kmax, self.m, self.gauge))
        if self.dt * phase > np.pi:
            warnings.warn(
                f"dt*max|phi_m| = {self.dt * phase:.3f} > pi; "
                "linear phase under-resolved"
            )


@dataclass
class Trajectory:
    """Sampled observables (and optional snapshots) along one evolution."""

    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    linf: list = field(default_factory=list)
    l2: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    def record(self, t, state, m, backend, sign, keep_snapshot=False):
        M, E = observables(state, m, backend=backend, sign=sign)
        self.times.append(float(t))
        self.mass.append(M)
        self.energy.append(E)
        self.linf.append(float(np.max(np.abs(_phys_values(state)))))
        self.l2.append(l2_norm(state))
        if keep_snapshot:
            self.snapshots.append(state.copy())

    def rows(self):
        return list(zip(self.times, self.mass, self.energy, self.linf, self.l2))


def _phys_values(state):
    if isinstance(state, Field):
        return state.to_physical().values
    return radial_fourier(state).values if state.rep == SPECTRAL else state.values


def _max_frequency(state) -> float:
    if isinstance(state, Field):
        return float(np.max(state.grid.kabs))
    return float(state.grid.rho[-1])


def half_phase(kabs, m: float, gauge: str):
    """Linear dispersion symbol in the chosen gauge."""
    if gauge == MASS_SHIFTED:
        return m - np.sqrt(m**2 + kabs**2)
    return -np.sqrt(m**2 + kabs**2)


def propagate_linear(u, t: float, m: float, gauge: str = MASS_SHIFTED):
    """Exact linear flow: multiply the spectrum by exp(i*t*phi_m)."""
    if isinstance(u, Field):
        rep_in = u.rep
        uhat = u.to_spectral()
        phase = np.exp(1j * t * half_phase(u.grid.kabs, m, gauge))
        return Field(u.grid, uhat.values * phase, SPECTRAL, dict(u.meta)).in_rep(rep_in)
    if isinstance(u, RadialProfile):
        rep_in = u.rep
        uhat = radial_fourier(u) if u.rep == PHYSICAL else u
        phase = np.exp(1j * t * half_phase(uhat.grid.rho, m, gauge))
        out = RadialProfile(uhat.grid, uhat.values * phase, SPECTRAL, dict(u.meta))
        return radial_fourier(out) if rep_in == PHYSICAL else out
    raise TypeError(f"cannot propagate {type(u)!r}")


def hartree_potential(u, backend: str):
    """Coulomb potential of |u|^2 with the backend's own dealiasing rule.

    The same routine is used by the integrator and by ``observables`` so the
    measured energy corresponds exactly to the evolved semi-discrete system.
    """
    if backend == "torus_fft":
        phys = u.to_physical()
        rho = Field(phys.grid, np.abs(phys.values) ** 2 + 0j, PHYSICAL)
        return coulomb_potential_torus(rho, dealias=True)
    phys = radial_fourier(u) if u.rep == SPECTRAL else u
    rho = RadialProfile(phys.grid, np.abs(phys.values) ** 2 + 0j, PHYSICAL)
    return coulomb_potential_radial(rho)


def strang_step(u, dt: float, cfg: EvolutionConfig):
    """One Strang step: half linear, exact potential flow, half linear."""
    half = propagate_linear(u, dt / 2.0, cfg.m, cfg.gauge)
    phys = half.to_physical() if isinstance(half, Field) else (
        radial_fourier(half) if half.rep == SPECTRAL else half
    )
    V = hartree_potential(phys, cfg.backend)
    sign = 1.0 if cfg.sign == FOCUSING else -1.0
    kicked_vals = phys.values * np.exp(1j * sign * dt * V.values.real)
    if isinstance(phys, Field):
        kicked = Field(phys.grid, kicked_vals, PHYSICAL, dict(phys.meta))
    else:
        kicked = RadialProfile(phys.grid, kicked_vals, PHYSICAL, dict(phys.meta))
    out = propagate_linear(kicked, dt / 2.0, cfg.m, cfg.gauge)
    vals = out.values
    if not np.all(np.isfinite(vals.view(np.float64))):
        raise DivergenceError("non-finite field values after Strang step")
    return out


def evolve(u0, cfg: EvolutionConfig, sample_every: int = 1,
           snapshot_every: int = 0) -> Trajectory:
    """Drive Strang steps to t_final, recording observables along the way."""
    cfg.check_phase_resolution(u0)
    n_steps = int(round(cfg.t_final / cfg.dt))
    traj = Trajectory()
    state = u0.copy()
    sup0 = float(np.max(np.abs(_phys_values(state)))) or 1.0
    traj.record(0.0, state, cfg.m, cfg.backend, cfg.sign, snapshot_every > 0)
    for k in range(1, n_steps + 1):
        try:
            state = strang_step(state, cfg.dt, cfg)
        except DivergenceError as exc:
            raise DivergenceError(
                f"evolution diverged at step {k}",
                last_good_time=(k - 1) * cfg.dt,
            ) from exc
        sup = float(np.max(np.abs(_phys_values(state))))
        if sup > BLOWUP_FACTOR * sup0:
            raise DivergenceError(
                f"sup-norm grew {sup / sup0:.2e}x; halting (possible blow-up)",
                last_good_time=(k - 1) * cfg.dt,
            )
        if k % sample_every == 0 or k == n_steps:
            keep = snapshot_every > 0 and (k % snapshot_every == 0 or k == n_steps)
            traj.record(k * cfg.dt, state, cfg.m, cfg.backend, cfg.sign, keep)
    return traj


def observables(u, m: float, backend: str | None = None,
                sign: str = FOCUSING) -> tuple[float, float]:
    """Mass and energy, with the potential from the evolution's own backend."""
    if backend is None:
        backend = "torus_fft" if isinstance(u, Field) else "radial_newton"
    M = l2_norm(u) ** 2
    if isinstance(u, Field):
        uhat = u.to_spectral()
        kin_density = np.sqrt(m**2 + u.grid.ksq) * np.abs(uhat.values) ** 2
        kinetic = float(np.sum(kin_density)) * u.grid.spectral_cell_volume
        phys = u.to_physical()
        V = hartree_potential(phys, backend)
        pot = float(np.sum(V.values.real * np.abs(phys.values) ** 2)) * u.grid.cell_volume
    else:
        uhat = radial_fourier(u) if u.rep == PHYSICAL else u
        g = uhat.grid
        kinetic = float(
            np.sum(np.sqrt(m**2 + g.rho**2) * np.abs(uhat.values) ** 2
                   * 4 * np.pi * g.rho**2) * g.drho
        )
        phys = radial_fourier(u) if u.rep == SPECTRAL else u
        V = hartree_potential(phys, backend)
        pot = float(
            np.sum(V.values.real * np.abs(phys.values) ** 2 * phys.grid.quadrature_weights())
        )
    s = -1.0 if sign == FOCUSING else 1.0
    E = 0.5 * kinetic + s * 0.25 * pot
    return M, E


def rescale(u, lam: float):
    """Spatial scaling u -> lam^{3/2} u(lam x) on the same grid.

    For integer lam the sample points lam*x_j are grid points, so the map is
    exact sampling; the input spectrum scaled by lam must stay inside the
    Nyquist ball or aliasing would corrupt the result.  For lam = 1/q the
    dual spectral subsampling is used.  Radial profiles resample by spline.
    """
    if lam <= 0:
        raise ValueError("scaling factor must be positive")
    if isinstance(u, RadialProfile):
        return resample(u, lam)
    if lam == 1.0:
        return u.copy()
    n = u.grid.n
    if lam > 1:
        if abs(lam - round(lam)) > 1e-12:
            raise ValueError("torus rescale supports integer lam (or 1/integer)")
        p = int(round(lam))
        uhat = u.to_spectral()
        support = np.abs(uhat.values) > 1e-13 * np.max(np.abs(uhat.values))
        if p * float(np.max(u.grid.kabs[support], initial=0.0)) > np.pi * n / u.grid.box_length:
            raise ValueError("rescaled spectral support exceeds the Nyquist ball")
        idx = (p * np.arange(n)) % n
        vals = lam**1.5 * u.to_physical().values[np.ix_(idx, idx, idx)]
        return Field(u.grid, vals, PHYSICAL, dict(u.meta)).in_rep(u.rep)
    inv = 1.0 / lam
    if abs(inv - round(inv)) > 1e-12:
        raise ValueError("torus rescale supports integer lam (or 1/integer)")
    q = int(round(inv))
    uhat = u.to_spectral()
    idx = (q * np.arange(n)) % n
    vals = q**1.5 * uhat.values[np.ix_(idx, idx, idx)]
    return Field(u.grid, vals, SPECTRAL, dict(u.meta)).in_rep(u.rep)


# ---------------------------------------------------------------------------
# Third Picard iterate
# ---------------------------------------------------------------------------


def duhamel_kernel(t: float, r):
    """(exp(i*t*r) - 1)/(i*r), with a series branch for |t*r| < 1e-4.

    The direct branch writes exp(iz)-1 = -2 sin^2(z/2) + i sin(z), which is
    cancellation-free; the series branch covers r ~ 0 including r = 0.
    """
    r = np.asarray(r, dtype=np.float64)
    z = t * r
    small = np.abs(z) < 1e-4
    zs = np.where(small, 0.0, z)
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = (-2.0 * np.sin(zs / 2.0) ** 2 + 1j * np.sin(zs)) / (1j * np.where(small, 1.0, r))
    series = t * (1.0 + z * (0.5j + z * (-1.0 / 6.0 + z * (-1j / 24.0))))
    return np.where(small, series, direct)


def duhamel_kernel_direct(t: float, r):
    """Direct formula only (used to validate the series branch)."""
    r = np.asarray(r, dtype=np.float64)
    z = t * r
    return (-2.0 * np.sin(z / 2.0) ** 2 + 1j * np.sin(z)) / (1j * r)


def duhamel_third_iterate(phi: Field, t: float, m: float, n_quad: int = 64,
                          gauge: str = MASS_SHIFTED,
                          check_refinement: bool = False) -> Field:
    """Cubic Duhamel term A3[phi](t) by composite Simpson in tau.

    A3 = int_0^t U(t-tau) (|x|^{-1} * |U(tau) phi|^2 U(tau) phi) dtau.
    No dealiasing is applied: for band-limited data whose product support
    stays inside the Nyquist ball the grid convolutions are exact, and the
    2/3 truncation would corrupt high-frequency wavepackets.
    """
    if n_quad < 4 or n_quad % 2 != 0:
        raise ValueError("n_quad must be an even integer >= 4")

    def compute(nq: int) -> np.ndarray:
        taus = np.linspace(0.0, t, nq + 1)
        w = np.ones(nq + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= (t / nq) / 3.0
        phi_hat = phi.to_spectral()
        grid = phi.grid
        nyq = grid.nyquist_mask()
        phase_sym = half_phase(grid.kabs, m, gauge)
        acc = np.zeros_like(phi_hat.values)
        for tau, wt in zip(taus, w):
            v_hat = phi_hat.values * np.exp(1j * tau * phase_sym)
            v = Field(grid, v_hat, SPECTRAL).to_physical()
            rho_hat = Field(
                grid, np.abs(v.values) ** 2 + 0j, PHYSICAL
            ).to_spectral().values
            rho_hat[nyq] = 0.0
            V_hat = rho_hat * MultiplierSymbol("coulomb").evaluate(grid.kabs)
            V = Field(grid, V_hat, SPECTRAL).to_physical()
            prod_hat = Field(
                grid, V.values * v.values, PHYSICAL
            ).to_spectral().values
            prod_hat[nyq] = 0.0
            acc += wt * np.exp(1j * (t - tau) * phase_sym) * prod_hat
        return acc

    if t == 0.0:
        return Field(phi.grid, np.zeros((phi.grid.n,) * 3, dtype=np.complex128), SPECTRAL)
    acc = compute(n_quad)
    out = Field(phi.grid, acc, SPECTRAL, dict(phi.meta))
    if check_refinement:
        fine = compute(2 * n_quad)
        ref = l2_norm(Field(phi.grid, fine, SPECTRAL)) or 1.0
        change = l2_norm(Field(phi.grid, fine - acc, SPECTRAL)) / ref
        out.meta["quadrature_refinement"] = change
        if change > 0.1:
            warnings.warn(f"Duhamel quadrature not converged (refinement {change:.2e})")
    return out
