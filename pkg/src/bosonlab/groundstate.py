"""Solitary-wave profiles: Petviashvili iteration and constrained minimization.

Both solvers target, on the radial grid,

    sqrt(-Delta + a) R + R - (|x|^{-1} * R^2) R = 0,        a = mass_param >= 0,

using the same spectral operator and Newton potential as the evolution module,
so a converged profile is a discrete steady state of the discrete flow.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, StagnationError
from .radial import (
    RadialGrid,
    RadialProfile,
    apply_radial_symbol,
    coulomb_potential_radial,
    overlap_integral,
    radial_fourier,
    resample,
)
from .spectral import PHYSICAL, l2_norm, sobolev_norm

HARDY_THRESHOLD = 2.0 / np.pi

DEFAULT_GRID = RadialGrid(r_max=64.0, n_r=4096)


@dataclass
class GroundState:
    profile: RadialProfile
    mass_param: float
    residual: float
    l2_norm: float
    h_half_norm: float
    theta: float | None = None
    iterations: int = 0

    def rescaled_soliton(self, mu: float) -> RadialProfile:
        """Q_mu(x) = mu^{3/2} * R(mu x); solves the mu-soliton equation."""
        return resample(self.profile, mu)


@dataclass
class VariationalReport:
    F_value: float
    V_constraint: float
    theta: float
    iterations: int


def default_initial_profile(grid: RadialGrid | None = None) -> RadialProfile:
    grid = grid or DEFAULT_GRID
    return RadialProfile(grid, np.exp(-grid.r**2 / 4.0) + 0j, PHYSICAL)


def _linear_symbol(grid: RadialGrid, mass_param: float) -> np.ndarray:
    """Symbol of L = sqrt(-Delta + mass_param) + 1 on the radial frequency grid."""
    return np.sqrt(grid.rho**2 + mass_param) + 1.0


def _nonlinear_term(R: RadialProfile) -> tuple[RadialProfile, RadialProfile]:
    """Returns (V, N) with V = |x|^{-1} * R^2 and N = V*R."""
    g = R.grid
    rho = RadialProfile(g, np.abs(R.values) ** 2 + 0j, PHYSICAL)
    V = coulomb_potential_radial(rho)
    N = RadialProfile(g, V.values.real * R.values, PHYSICAL)
    return V, N


def _inner(a: RadialProfile, b: RadialProfile) -> float:
    w = a.grid.quadrature_weights()
    return float(np.sum(a.values.real * b.values.real * w))


def residual_norm(R: RadialProfile, mass_param: float) -> float:
    """Discrete L2 norm of the Euler-Lagrange defect L R - N(R)."""
    sym = _linear_symbol(R.grid, mass_param)
    LR = apply_radial_symbol(R, sym)
    _, N = _nonlinear_term(R)
    diff = RadialProfile(R.grid, LR.values - N.values, PHYSICAL)
    return l2_norm(diff)


def petviashvili_solve(mass_param: float, init: RadialProfile | None = None,
                       tol: float = 1e-10, max_iter: int = 2000) -> GroundState:
    """Petviashvili iteration R <- S^{3/2} L^{-1} N(R), S = <LR,R>/<N,R>.

    The stabilizing exponent 3/2 matches the cubic homogeneity of the Hartree
    nonlinearity; at any exact solution S = 1.
    """
    if mass_param < 0:
        raise ValueError("mass_param must be nonnegative")
    if tol < 1e-12:
        raise ValueError("tol must be >= 1e-12")
    R = (init or default_initial_profile()).copy()
    if np.min(R.values.real) < 0 or l2_norm(R) == 0:
        raise ValueError("initial profile must be positive")
    g = R.grid
    sym = _linear_symbol(g, mass_param)
    res = np.inf
    for it in range(1, max_iter + 1):
        _, N = _nonlinear_term(R)
        LR = apply_radial_symbol(R, sym)
        num = _inner(LR, R)
        den = _inner(N, R)
        if den <= 0:
            raise DivergenceError("nonlinear pairing became nonpositive",
                                  iterate=R)
        S = num / den
        if not (1e-6 < S < 1e6):
            raise DivergenceError(f"stabilization factor left range (S={S:.3e})",
                                  iterate=R)
        Linv_N = apply_radial_symbol(N, 1.0 / sym)
        new_vals = S**1.5 * Linv_N.values.real
        if np.min(new_vals) < -1e-12 * np.max(np.abs(new_vals)):
            raise DivergenceError("iterate lost positivity", iterate=R)
        R = RadialProfile(g, np.clip(new_vals, 0.0, None) + 0j, PHYSICAL)
        if it % 5 == 0 or it == max_iter:
            res = residual_norm(R, mass_param)
            if res < tol:
                break
    else:
        raise DivergenceError(f"no convergence in {max_iter} iterations "
                              f"(residual {res:.3e})", iterate=R)
    res = residual_norm(R, mass_param)
    gs = GroundState(
        profile=R,
        mass_param=mass_param,
        residual=res,
        l2_norm=l2_norm(R),
        h_half_norm=sobolev_norm(R, 0.5),
        iterations=it,
    )
    _validate_ground_state(gs)
    return gs


def _validate_ground_state(gs: GroundState) -> None:
    vals = gs.profile.values.real
    if np.min(vals) < -1e-10 * np.max(vals):
        warnings.warn("ground state has negative samples")
    if np.any(np.diff(vals) > 1e-8 * np.max(vals)):
        warnings.warn("ground state is not radially nonincreasing")
    if gs.l2_norm**2 <= HARDY_THRESHOLD:
        warnings.warn(
            f"ground-state mass {gs.l2_norm**2:.6f} at or below the Hardy "
            f"threshold 2/pi; profile is suspect"
        )


def stabilization_factor(R: RadialProfile, mass_param: float) -> float:
    """S = <LR,R>/<N(R),R>; equals 1 at an exact solution."""
    sym = _linear_symbol(R.grid, mass_param)
    LR = apply_radial_symbol(R, sym)
    _, N = _nonlinear_term(R)
    return _inner(LR, R) / _inner(N, R)


# ---------------------------------------------------------------------------
# Variational route
# ---------------------------------------------------------------------------


def quadratic_form(u: RadialProfile, mass_param: float) -> float:
    """F(u) = <u, sqrt(-Delta+mass_param) u> + ||u||^2."""
    uhat = radial_fourier(u) if u.rep == PHYSICAL else u
    g = uhat.grid
    w = 4.0 * np.pi * g.rho**2 * g.drho
    sym = np.sqrt(g.rho**2 + mass_param)
    return float(np.sum((sym + 1.0) * np.abs(uhat.values) ** 2 * w))


def hartree_functional(u: RadialProfile) -> float:
    """V(u) = int (|x|^{-1} * |u|^2) |u|^2 dx."""
    g = u.grid
    rho = RadialProfile(g, np.abs(u.values) ** 2 + 0j, PHYSICAL)
    V = coulomb_potential_radial(rho)
    return float(np.sum(V.values.real * np.abs(u.values) ** 2 * g.quadrature_weights()))


def constrained_minimize(mass_param: float, init: RadialProfile | None = None,
                         constraint: float = 1.0, tol: float = 1e-7,
                         max_iter: int = 4000) -> tuple[GroundState, VariationalReport]:
    """Minimize F over {V(u) = constraint} by preconditioned projected descent.

    Works on the scale-invariant quotient g(u) = F(u)/sqrt(V(u)); the descent
    direction is u - (F/V) L^{-1} N(u), preconditioned by L, with an exact
    line search (F is quadratic and V quartic along a ray, so the 1D problem
    is polynomial).  Returns T (normalized to the constraint), theta from the
    Euler-Lagrange pairing, and R = theta^{1/2} T.
    """
    if mass_param < 0:
        raise ValueError("mass_param must be nonnegative")
    u = (init or default_initial_profile()).copy()
    if hartree_functional(u) <= 0:
        raise ValueError("initial profile must have positive Hartree energy")
    g = u.grid
    sym = _linear_symbol(g, mass_param)

    def F_of(v):
        return quadratic_form(v, mass_param)

    Fv = F_of(u)
    Vv = hartree_functional(u)
    gval = Fv / np.sqrt(Vv)
    stall = 0
    for it in range(1, max_iter + 1):
        _, N = _nonlinear_term(u)
        LinvN = apply_radial_symbol(N, 1.0 / sym)
        d_vals = -(u.values.real - (Fv / Vv) * LinvN.values.real)
        d = RadialProfile(g, d_vals + 0j, PHYSICAL)
        # polynomial line objective: F quadratic, V quartic in alpha
        Lu = apply_radial_symbol(u, sym)
        Ld = apply_radial_symbol(d, sym)
        f0, f1, f2 = Fv, 2.0 * _inner(Lu, d), _inner(Ld, d)
        v_coeffs = _hartree_quartic(u, d)

        def line_g(alpha):
            Fa = f0 + alpha * (f1 + alpha * f2)
            Va = np.polyval(v_coeffs, alpha)
            if Va <= 0:
                return np.inf
            return Fa / np.sqrt(Va)

        alpha = _line_search(line_g, gval)
        if alpha == 0.0:
            stall += 1
        else:
            u = RadialProfile(g, u.values.real + alpha * d.values.real + 0j, PHYSICAL)
            Fv, Vv = F_of(u), hartree_functional(u)
            new_g = Fv / np.sqrt(Vv)
            stall = stall + 1 if gval - new_g < 1e-14 * abs(gval) else 0
            gval = new_g
        scaled = RadialProfile(
            g, u.values.real * (constraint / Vv) ** 0.25 + 0j, PHYSICAL
        )
        res = _el_residual(scaled, mass_param, constraint)
        if res < tol:
            u = scaled
            break
        if stall >= 100:
            raise StagnationError(
                f"descent stalled at residual {res:.3e}", partial=scaled
            )
    else:
        raise StagnationError(
            f"no convergence in {max_iter} iterations", partial=u
        )
    T = u
    F_T = F_of(T)
    V_T = hartree_functional(T)
    theta = F_T / V_T
    R = RadialProfile(g, np.sqrt(theta) * T.values.real + 0j, PHYSICAL)
    gs = GroundState(
        profile=R,
        mass_param=mass_param,
        residual=residual_norm(R, mass_param),
        l2_norm=l2_norm(R),
        h_half_norm=sobolev_norm(R, 0.5),
        theta=theta,
        iterations=it,
    )
    report = VariationalReport(F_value=F_T, V_constraint=V_T, theta=theta,
                               iterations=it)
    return gs, report


def _hartree_quartic(u: RadialProfile, d: RadialProfile) -> np.ndarray:
    """Coefficients (highest first) of alpha -> V(u + alpha d)."""
    g = u.grid
    uu = np.abs(u.values) ** 2
    ud = u.values.real * d.values.real
    dd = np.abs(d.values) ** 2
    C_uu = coulomb_potential_radial(
        RadialProfile(g, uu + 0j, PHYSICAL), check_decay=False
    ).values.real
    C_dd = coulomb_potential_radial(
        RadialProfile(g, dd + 0j, PHYSICAL), check_decay=False
    ).values.real
    # signed cross density: compute via polarization to keep inputs nonnegative
    plus = coulomb_potential_radial(
        RadialProfile(g, (u.values.real + d.values.real) ** 2 + 0j, PHYSICAL),
        check_decay=False,
    ).values.real
    C_ud = 0.5 * (plus - C_uu - C_dd)
    w = g.quadrature_weights()

    def pair(A, b):
        return float(np.sum(A * b * w))

    c0 = pair(C_uu, uu)
    c1 = 2.0 * pair(C_uu, ud) + 2.0 * pair(C_ud, uu)
    c2 = pair(C_uu, dd) + pair(C_dd, uu) + 4.0 * pair(C_ud, ud)
    c3 = 2.0 * pair(C_ud, dd) + 2.0 * pair(C_dd, ud)
    c4 = pair(C_dd, dd)
    return np.array([c4, c3, c2, c1, c0])


def _line_search(line_g, g0: float) -> float:
    """Coarse-to-fine 1D minimization of the scale-invariant objective."""
    best_a, best_g = 0.0, g0
    for a in np.geomspace(1e-4, 4.0, 24):
        ga = line_g(a)
        if ga < best_g:
            best_a, best_g = a, ga
    if best_a == 0.0:
        return 0.0
    lo, hi = best_a / 2.0, best_a * 2.0
    for _ in range(40):
        mids = np.linspace(lo, hi, 5)
        vals = [line_g(a) for a in mids]
        j = int(np.argmin(vals))
        lo = mids[max(j - 1, 0)]
        hi = mids[min(j + 1, 4)]
        if hi - lo < 1e-12 * max(1.0, best_a):
            break
    a = 0.5 * (lo + hi)
    return a if line_g(a) < g0 else best_a


def _el_residual(T: RadialProfile, mass_param: float, constraint: float) -> float:
    """Relative Euler-Lagrange defect of the constrained problem (scale-free)."""
    sym = _linear_symbol(T.grid, mass_param)
    LT = apply_radial_symbol(T, sym)
    _, N = _nonlinear_term(T)
    theta = _inner(LT, T) / _inner(N, T)
    diff = RadialProfile(T.grid, LT.values - theta * N.values, PHYSICAL)
    return l2_norm(diff) / l2_norm(LT)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def pohozaev_ratio(gs: GroundState) -> float:
    """(int R sqrt(-Delta) R) / (int (|x|^{-1}*R^2) R^2); 1/2 for massless states."""
    R = gs.profile
    Rhat = radial_fourier(R)
    g = Rhat.grid
    w = 4.0 * np.pi * g.rho**2 * g.drho
    kinetic = float(np.sum(g.rho * np.abs(Rhat.values) ** 2 * w))
    return kinetic / hartree_functional(R)


def decay_exponent_fit(profile_or_gs, r_window: tuple[float, float]) -> float:
    """Least-squares slope of log R vs log r over the window."""
    profile = (
        profile_or_gs.profile
        if isinstance(profile_or_gs, GroundState)
        else profile_or_gs
    )
    g = profile.grid
    r1, r2 = r_window
    if r2 > g.r_max / 2.0:
        raise ValueError("window extends past r_max/2 (boundary contamination)")
    sel = (g.r >= r1) & (g.r <= r2)
    vals = profile.values.real[sel]
    if np.any(vals <= 0):
        raise ValueError("profile not positive on the fit window")
    slope = np.polyfit(np.log(g.r[sel]), np.log(vals), 1)[0]
    return float(slope)


def power_law_envelope(profile: RadialProfile, exponent: float,
                       r_window: tuple[float, float]) -> float:
    """max of R(r) * r^{-exponent}^{-1} ... i.e. sup R(r) r^{|exponent|} on the window."""
    g = profile.grid
    sel = (g.r >= r_window[0]) & (g.r <= r_window[1])
    return float(np.max(profile.values.real[sel] * g.r[sel] ** (-exponent)))


def newton_bound_excess(gs: GroundState) -> float:
    """max over the grid of V(r) - ||R||^2 / r (should be <= 0 up to round-off)."""
    R = gs.profile
    V, _ = _nonlinear_term(R)
    bound = gs.l2_norm**2 / R.grid.r
    return float(np.max(V.values.real - bound))


def optimal_constant_defect(gs: GroundState) -> float:
    """Relative defect of V(Q) = (2/||Q||^2) <Q,sqrt(-Delta)Q> ||Q||^2 at Q."""
    R = gs.profile
    Rhat = radial_fourier(R)
    g = Rhat.grid
    w = 4.0 * np.pi * g.rho**2 * g.drho
    kinetic = float(np.sum(g.rho * np.abs(Rhat.values) ** 2 * w))
    lhs = hartree_functional(R)
    rhs = (2.0 / gs.l2_norm**2) * kinetic * gs.l2_norm**2
    return abs(lhs - rhs) / abs(rhs)


def family_limit_check(mass_params, init: RadialProfile | None = None,
                       tol: float = 1e-10):
    """Solve the family for decreasing mass_params and compare to the massless Q.

    Returns an ExperimentReport whose rows are
    (mass_param, ||R_mu - Q||_L2, ||R_mu||_L2^2, ||R_mu||/||Q|| distance ratio).
    """
    from .reporting import ExperimentReport

    mass_params = list(mass_params)
    if len(mass_params) < 3:
        raise ValueError("need at least 3 family members")
    if any(b >= a for a, b in zip(mass_params, mass_params[1:])):
        raise ValueError("mass_params must be strictly decreasing")
    init = init or default_initial_profile()
    Q = petviashvili_solve(0.0, init, tol)
    rows = []
    failures = []
    for a in mass_params:
        try:
            gs = petviashvili_solve(a, init, tol)
        except (DivergenceError, StagnationError) as exc:
            failures.append((a, str(exc)))
            continue
        diff = RadialProfile(gs.profile.grid,
                             gs.profile.values - Q.profile.values, PHYSICAL)
        dist = l2_norm(diff)
        rows.append((a, dist, gs.l2_norm**2, dist / Q.l2_norm))
    if failures:
        raise DivergenceError(f"unconverged family members: {failures}")
    report = ExperimentReport(
        columns=("mass_param", "l2_distance_to_Q", "l2_mass", "relative_distance"),
        rows=rows,
        config={"mass_params": mass_params, "tol": tol,
                "Q_l2_mass": Q.l2_norm**2},
    )
    dists = [r[1] for r in rows]
    report.config["strictly_decreasing"] = all(
        b < a for a, b in zip(dists, dists[1:])
    )
    return report, Q


def soliton_evolution_check(gs: GroundState, mu: float, t_final: float,
                            dt: float = 1e-3, n_samples: int = 16) -> float:
    """Evolve Q_mu with the radial backend; max relative L2 defect vs e^{i t mu} Q_mu.

    gs must hold R_mu with mass_param = mu^{-2} (or 0 for the massless family,
    where any mu > 0 can be reached by pure rescaling); the evolution runs in
    the raw gauge with m = mu * sqrt(mass_param), which is 1 for the massive
    family and 0 for the massless one.
    """
    from .evolve import EvolutionConfig, strang_step

    if t_final == 0:
        return 0.0
    Q_mu = gs.rescaled_soliton(mu)
    m = mu * np.sqrt(gs.mass_param)
    cfg = EvolutionConfig(m=m, dt=dt, t_final=t_final, backend="radial_newton",
                          gauge="raw")
    n_steps = int(round(t_final / dt))
    sample_at = set(np.linspace(0, n_steps, n_samples + 1, dtype=int)[1:])
    state = Q_mu.copy()
    ref_norm = l2_norm(Q_mu)
    worst = 0.0
    for k in range(1, n_steps + 1):
        state = strang_step(state, dt, cfg)
        if k in sample_at:
            t = k * dt
            target = np.exp(1j * t * mu) * Q_mu.values
            diff = RadialProfile(Q_mu.grid, state.values - target, PHYSICAL)
            worst = max(worst, l2_norm(diff) / ref_norm)
    return worst
