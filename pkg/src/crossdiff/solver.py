"""1D entropy-variable implicit Euler solver with no-flux boundaries.

Each step solves, for the new entropy-variable field w,

    (u(w) - u_prev)/tau - div(B_eps(w) grad w) + eps(-lap w + w) = f(u(w)),

where B_eps = A_eps(u) H_eps(u)^{-1}, u(w) is the inverse entropy
transform, faces carry arithmetic-mean states, and mirrored ghost values
impose zero flux at both ends (for the mobility flux and the grad-w
regularization flux alike).  Solving in w keeps every density strictly
positive.  The inner solver is a damped Newton iteration with a colored
finite-difference Jacobian (the stencil is nearest-neighbor, so three cell
colors suffice) and a banded linear solve.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from . import entropy as ent
from . import kernels, mobility
from .entropy import EntropyParams, InverseTransformError
from .model import CoefficientSystem, DomainConfig, InitialData, reaction, validate_system


class NewtonError(RuntimeError):
    """Inner Newton iteration failed to converge."""

    def __init__(self, message, w=None, residual_norm=None):
        super().__init__(message)
        self.w = w
        self.residual_norm = residual_norm


@dataclass(frozen=True)
class GridState:
    """Cell-centered densities and entropy variables at one time level."""

    x: np.ndarray      # (M,) cell centers
    u: np.ndarray      # (M, n) densities, strictly positive
    w: np.ndarray      # (M, n) entropy variables, u = (h_eps')^{-1}(w)
    t: float
    k: int

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def cells(self) -> int:
        return self.x.size

    @property
    def n(self) -> int:
        return self.u.shape[1]


@dataclass
class StepReport:
    newton_iters: int
    final_residual: float
    entropy_before: float
    entropy_after: float
    dissipation_integral: float
    regularization_integral: float
    mass_before: np.ndarray
    mass_after: np.ndarray
    entropy_slack: float
    tau_used: float
    halvings: int


@dataclass
class SolverConfig:
    """Bundle of system, domain and solver options for one run."""

    system: CoefficientSystem
    domain: DomainConfig
    pi: np.ndarray
    newton_max_iter: int = 50
    newton_tol_factor: float = 1e-10
    max_halvings: int = 10
    store_trajectory: bool = False

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=float)
        if self.pi.shape != (self.system.n,):
            raise ValueError("pi must have one weight per species")
        self.params = EntropyParams(s=self.system.s, pi=self.pi, eps=self.domain.eps)
        self.mu = mobility.mu_weights(self.system, self.pi)
        eps = self.domain.eps
        self.eps_eta = eps ** self.domain.eta if eps > 0.0 else 0.0
        self.c_f = reaction_growth_constant(self.system, self.params)


def reaction_growth_constant(sys: CoefficientSystem, p: EntropyParams) -> float:
    """Admissible C_f with sum_i f_i(u) w_i <= C_f (1 + h_eps(u)) for all u > 0.

    Uses u_i w_i = s pi_i (h_s(u_i) - 1 + u_i) + eps (h_1(u_i) - 1 + u_i),
    hence u_i w_i >= -(s pi_i + eps), together with sup bounds of z^m over
    1 + h_s(z).  The closed form covers sigma <= max(1, s); outside that
    range (possible for sublinear s) the constant is a sampled estimate
    with a 1.5x margin and is not a proof.
    """
    if not sys.has_reaction:
        return 0.0
    s, eps, pi = p.s, p.eps, p.pi
    m = max(1.0, s)
    if sys.sigma <= m + 1e-12:
        rho1s = _sup_power_ratio(1.0, s)
        rhoms = _sup_power_ratio(m, s)
        rho11 = _sup_power_ratio(1.0, 1.0)
        k0 = float(np.sum(sys.b0 * (s * pi * rho1s + eps * rho11))
                   + np.sum(sys.b * (s * pi + eps)[:, None] * (1.0 + rhoms)))
        k1 = float(np.sum(sys.b0 * (s * (1.0 + rho1s) + 1.0 + rho11))
                   + np.sum(sys.b * (s * pi + eps)[:, None] * rhoms / pi[None, :]))
        return max(k0, k1)
    # sampled estimate (no closed bound available for sigma > max(1, s))
    rng = np.random.default_rng(1234)
    u = 10.0 ** rng.uniform(-4.0, 4.0, size=(5000, sys.n))
    g = np.sum(reaction(sys, u) * ent.entropy_variable(p, u), axis=1)
    ratio = g / (1.0 + ent.entropy_density(p, u))
    return 1.5 * max(0.0, float(np.max(ratio)))


def _sup_power_ratio(mpow: float, s: float) -> float:
    """sup_{z>0} z^mpow / (1 + h_s(z)), padded by 1%; the ratio is unimodal."""
    z = np.logspace(-12.0, 12.0, 20001)
    hs = ent._hs(z, s)
    return 1.01 * float(np.max(z ** mpow / (1.0 + hs)))


# ---------------------------------------------------------------------------
# residual and Jacobian
# ---------------------------------------------------------------------------

def _divergence(face_values: np.ndarray, dx: float) -> np.ndarray:
    """(F_{j+1/2} - F_{j-1/2}) / dx with zero boundary faces."""
    out = np.zeros((face_values.shape[0] + 1, face_values.shape[1]))
    out[:-1] += face_values
    out[1:] -= face_values
    return out / dx


def _residual(u, w, u_prev, sc: SolverConfig, tau: float):
    sys, dom = sc.system, sc.domain
    flux = kernels.mobility_fluxes(u, w, sys.a0, sys.a, sc.mu, sys.s, sc.pi,
                                   dom.eps, sc.eps_eta, dom.dx)
    r = (u - u_prev) / tau - _divergence(flux, dom.dx)
    if dom.eps > 0.0:
        regflux = (w[1:] - w[:-1]) / dom.dx
        r += dom.eps * (w - _divergence(regflux, dom.dx))
    if sys.has_reaction:
        r -= reaction(sys, u)
    return r, flux


def assemble_residual(state_prev: GridState, w_trial: np.ndarray,
                      sc: SolverConfig, tau: float | None = None) -> np.ndarray:
    """Residual of the implicit step at a trial entropy-variable field."""
    tau = sc.domain.tau if tau is None else tau
    u_trial = ent.inverse_transform(sc.params, w_trial)
    r, _ = _residual(u_trial, w_trial, state_prev.u, sc, tau)
    return r


def _jacobian_banded(w, r0, u_prev, sc: SolverConfig, tau: float):
    """Colored forward-difference Jacobian in banded storage."""
    mcells, n = w.shape
    band = 2 * n - 1
    ab = np.zeros((2 * band + 1, mcells * n))
    hcol = np.sqrt(np.finfo(float).eps) * (1.0 + np.abs(w))
    for color in range(3):
        cells = np.arange(color, mcells, 3)
        if cells.size == 0:
            continue
        for l in range(n):
            wp = w.copy()
            wp[cells, l] += hcol[cells, l]
            up = ent.inverse_transform(sc.params, wp)
            rp, _ = _residual(up, wp, u_prev, sc, tau)
            d = rp - r0
            for dj in (-1, 0, 1):
                rows = cells + dj
                ok = (rows >= 0) & (rows < mcells)
                if not np.any(ok):
                    continue
                cols = cells[ok] * n + l
                for i in range(n):
                    ab[band + dj * n + i - l, cols] = (
                        d[rows[ok], i] / hcol[cells[ok], l]
                    )
    return ab, band


def _residual_floor(ab, band, w):
    """Attainable |residual| floor: macheps * max row sum of |J| |w|.

    Newton cannot push the residual below the rounding noise of its own
    evaluation; for steep data the flux rows of J make that floor exceed
    the nominal tolerance, independent of tau.
    """
    ncols = ab.shape[1]
    wabs = np.abs(w.ravel())
    rowsum = np.zeros(ncols)
    for d in range(-band, band + 1):
        vals = np.abs(ab[band + d]) * wabs  # entry (row=col+d, col)
        if d >= 0:
            rowsum[d:] += vals[: ncols - d] if d else vals
        else:
            rowsum[:d] += vals[-d:]
    return float(np.finfo(float).eps * np.max(rowsum))


def _newton_solve(u_prev, w_start, sc: SolverConfig, tau: float):
    tol = sc.newton_tol_factor * (1.0 + float(np.max(np.abs(u_prev))))
    w = w_start.copy()
    u = ent.inverse_transform(sc.params, w)
    r, flux = _residual(u, w, u_prev, sc, tau)
    norm = float(np.max(np.abs(r)))
    iters = 0
    while norm > tol:
        if iters >= sc.newton_max_iter:
            raise NewtonError(f"Newton stalled at residual {norm:.3e} "
                              f"after {iters} iterations", w=w, residual_norm=norm)
        ab, band = _jacobian_banded(w, r, u_prev, sc, tau)
        try:
            delta = solve_banded((band, band), ab, -r.ravel())
        except np.linalg.LinAlgError as exc:
            raise NewtonError(f"singular Jacobian: {exc}", w=w, residual_norm=norm)
        delta = delta.reshape(w.shape)
        lam = 1.0
        improved = False
        for _ in range(30):
            w_try = w + lam * delta
            try:
                u_try = ent.inverse_transform(sc.params, w_try)
            except InverseTransformError:
                lam *= 0.5
                continue
            r_try, flux_try = _residual(u_try, w_try, u_prev, sc, tau)
            norm_try = float(np.max(np.abs(r_try)))
            if norm_try < norm:
                w, u, r, flux, norm = w_try, u_try, r_try, flux_try, norm_try
                improved = True
                break
            lam *= 0.5
        if not improved:
            if norm <= 8.0 * _residual_floor(ab, band, w):
                break  # converged to the evaluation's rounding floor
            raise NewtonError(f"line search stagnated at residual {norm:.3e}",
                              w=w, residual_norm=norm)
        iters += 1
    return w, u, flux, iters, norm


def initial_state(sc: SolverConfig, u0) -> GridState:
    """Sample the initial datum on the grid and form its entropy variables."""
    x = sc.domain.grid()
    u = u0.sample(x) if isinstance(u0, InitialData) else np.array(u0, dtype=float)
    if u.shape != (sc.domain.cells, sc.system.n):
        raise ValueError(f"initial field must have shape ({sc.domain.cells}, "
                         f"{sc.system.n}), got {u.shape}")
    if np.any(u <= 0.0):
        raise ValueError("initial data must be strictly positive on the grid; "
                         "apply cutoff_initial_data first")
    w = ent.entropy_variable(sc.params, u)
    return GridState(x=x, u=u, w=w, t=0.0, k=0)


def newton_step(state_prev: GridState, sc: SolverConfig,
                tau: float | None = None):
    """Advance one implicit step; halves tau on stagnation (up to the cap).

    Returns the new state and a :class:`StepReport` whose entropy_slack is
    the measured slack of the discrete entropy inequality
    (1 - C_f tau) H^k + tau*D^k + eps*tau*R^k <= H^{k-1} + C_f tau |Omega|.
    """
    dom = sc.domain
    tau_req = dom.tau if tau is None else tau
    last_exc = None
    for halvings in range(sc.max_halvings + 1):
        tau_try = tau_req / 2 ** halvings
        try:
            w, u, flux, iters, norm = _newton_solve(state_prev.u, state_prev.w,
                                                    sc, tau_try)
            break
        except NewtonError as exc:
            last_exc = exc
    else:
        raise NewtonError(
            f"step failed after {sc.max_halvings} tau halvings: {last_exc}",
            w=last_exc.w, residual_norm=last_exc.residual_norm)

    dx = dom.dx
    length = dom.length
    dissipation = float(np.sum(flux * (w[1:] - w[:-1])))
    reg = 0.0
    if dom.eps > 0.0:
        reg = float(np.sum((w[1:] - w[:-1]) ** 2) / dx + np.sum(w ** 2) * dx)
    h_before = ent.entropy_total(sc.params, state_prev.u, dx)
    h_after = ent.entropy_total(sc.params, u, dx)
    slack = (h_before + sc.c_f * tau_try * length
             - (1.0 - sc.c_f * tau_try) * h_after
             - tau_try * dissipation - dom.eps * tau_try * reg)
    report = StepReport(
        newton_iters=iters,
        final_residual=norm,
        entropy_before=h_before,
        entropy_after=h_after,
        dissipation_integral=dissipation,
        regularization_integral=reg,
        mass_before=state_prev.u.sum(axis=0) * dx,
        mass_after=u.sum(axis=0) * dx,
        entropy_slack=float(slack),
        tau_used=tau_try,
        halvings=halvings,
    )
    state = GridState(x=state_prev.x, u=u, w=w, t=state_prev.t + tau_try,
                      k=state_prev.k + 1)
    return state, report


@dataclass
class DiagnosticsSeries:
    """Per-step monitors of one simulation (index 0 is the initial state)."""

    setup: SolverConfig
    t: np.ndarray
    entropy: np.ndarray
    mass: np.ndarray
    min_u: np.ndarray
    max_u: np.ndarray
    production: np.ndarray        # signed dH/dt estimate, -dissipation
    dissipation: np.ndarray
    regularization: np.ndarray
    newton_iters: np.ndarray
    residuals: np.ndarray
    entropy_slack: np.ndarray
    tau_used: np.ndarray
    c_f: float
    states: list | None = None

    @property
    def steps(self) -> int:
        return self.tau_used.size

    @property
    def min_entropy_slack(self) -> float:
        return float(np.min(self.entropy_slack)) if self.steps else np.nan

    @property
    def entropy_nonincreasing(self) -> bool:
        return bool(np.all(np.diff(self.entropy) <= 1e-12 * (1.0 + np.abs(self.entropy[:-1]))))


def simulate(sc: SolverConfig, u0) -> DiagnosticsSeries:
    """Run the implicit scheme to the final time and record diagnostics."""
    rep = validate_system(sc.system, sc.domain)
    if not rep.passed:
        raise ValueError(f"invalid configuration:\n{rep}")
    if sc.c_f > 0.0 and sc.domain.tau >= 1.0 / sc.c_f:
        raise ValueError(f"tau = {sc.domain.tau} must be below 1/C_f = {1.0 / sc.c_f:.3e}")

    state = initial_state(sc, u0)
    dx = sc.domain.dx
    t_hist = [0.0]
    entropy_hist = [ent.entropy_total(sc.params, state.u, dx)]
    mass_hist = [state.u.sum(axis=0) * dx]
    min_hist = [float(state.u.min())]
    max_hist = [float(state.u.max())]
    production, dissipation, regularization = [], [], []
    iters_hist, res_hist, slack_hist, tau_hist = [], [], [], []
    states = [state] if sc.store_trajectory else None

    t_end = sc.domain.T
    while state.t < t_end - 1e-12 * t_end:
        tau_req = min(sc.domain.tau, t_end - state.t)
        state, step = newton_step(state, sc, tau=tau_req)
        t_hist.append(state.t)
        entropy_hist.append(step.entropy_after)
        mass_hist.append(step.mass_after)
        min_hist.append(float(state.u.min()))
        max_hist.append(float(state.u.max()))
        production.append(-step.dissipation_integral)
        dissipation.append(step.dissipation_integral)
        regularization.append(step.regularization_integral)
        iters_hist.append(step.newton_iters)
        res_hist.append(step.final_residual)
        slack_hist.append(step.entropy_slack)
        tau_hist.append(step.tau_used)
        if states is not None:
            states.append(state)

    return DiagnosticsSeries(
        setup=sc,
        t=np.array(t_hist),
        entropy=np.array(entropy_hist),
        mass=np.array(mass_hist),
        min_u=np.array(min_hist),
        max_u=np.array(max_hist),
        production=np.array(production),
        dissipation=np.array(dissipation),
        regularization=np.array(regularization),
        newton_iters=np.array(iters_hist, dtype=int),
        residuals=np.array(res_hist),
        entropy_slack=np.array(slack_hist),
        tau_used=np.array(tau_hist),
        c_f=sc.c_f,
        states=states,
    )


# ---------------------------------------------------------------------------
# space-time weak-form residuals of a stored trajectory
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeakResidualEntry:
    form: str          # "gradient" or "very-weak"
    species: int
    poly_degree: int
    mode: int
    value: float


def weak_residual(series: DiagnosticsSeries, test_functions=None) -> list:
    """Evaluate both space-time weak forms against smooth test functions.

    The trajectory is read as the piecewise-constant-in-time interpolant.
    Test functions phi(x, t) = t^p cos(m pi x / L) satisfy the no-flux
    compatibility phi'(0) = phi'(L) = 0 and are polynomial in t, so the
    time integrals are exact: the time-derivative pairing is integrated by
    parts, -int u d_t phi + [u phi]_0^T.  The returned magnitudes decay
    like O(tau + dx^2 + eps) under refinement.
    """
    if series.states is None:
        raise ValueError("weak_residual needs a trajectory; run simulate with "
                         "store_trajectory=True")
    if test_functions is None:
        test_functions = [(p, m) for p in (0, 1) for m in (0, 1, 2)]
    sc = series.setup
    sys = sc.system
    length = sc.domain.length
    dx = sc.domain.dx
    x = series.states[0].x
    xf = x[:-1] + 0.5 * dx
    nspec = sys.n
    ntest = len(test_functions)

    acc_dt = np.zeros((ntest, nspec))
    acc_grad = np.zeros((ntest, nspec))
    acc_vw = np.zeros((ntest, nspec))
    acc_rhs = np.zeros((ntest, nspec))

    for k in range(1, len(series.states)):
        u = series.states[k].u
        tk = series.states[k].t
        tk_prev = series.states[k - 1].t
        ub = 0.5 * (u[1:] + u[:-1])
        du = (u[1:] - u[:-1]) / dx
        flux = np.einsum("fil,fl->fi", mobility.diffusion_matrix(sys, ub), du)
        upu = u * sys.transition_rates(u)
        fu = reaction(sys, u) if sys.has_reaction else None
        for it, (pdeg, mode) in enumerate(test_functions):
            dt_tp = tk ** pdeg - tk_prev ** pdeg              # int_I d_t(t^p) dt
            int_tp = (tk ** (pdeg + 1) - tk_prev ** (pdeg + 1)) / (pdeg + 1.0)
            km = mode * np.pi / length
            cosx = np.cos(km * x)
            acc_dt[it] -= dt_tp * (u.T @ cosx) * dx
            acc_grad[it] += int_tp * (flux.T @ (-km * np.sin(km * xf))) * dx
            acc_vw[it] += int_tp * km ** 2 * (upu.T @ cosx) * dx
            if fu is not None:
                acc_rhs[it] += int_tp * (fu.T @ cosx) * dx

    u_first = series.states[0].u
    u_last = series.states[-1].u
    t_last = series.states[-1].t
    for it, (pdeg, mode) in enumerate(test_functions):
        cosx = np.cos(mode * np.pi / length * x)
        acc_dt[it] += t_last ** pdeg * (u_last.T @ cosx) * dx
        if pdeg == 0:
            acc_dt[it] -= u_first.T @ cosx * dx

    out = []
    for it, (pdeg, mode) in enumerate(test_functions):
        for i in range(nspec):
            out.append(WeakResidualEntry("gradient", i, pdeg, mode,
                                         float(acc_dt[it, i] + acc_grad[it, i]
                                               - acc_rhs[it, i])))
            out.append(WeakResidualEntry("very-weak", i, pdeg, mode,
                                         float(acc_dt[it, i] + acc_vw[it, i]
                                               - acc_rhs[it, i])))
    return out
