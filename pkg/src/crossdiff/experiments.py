"""Canned scenarios: entropy-increase counterexamples, production, sweeps.

Both counterexamples use the cyclic coefficients a_13 = a_32 = a_21 = 1
(all other cross terms zero), which violate detailed balance and every
weak-cross-diffusion condition.  With the ramp initial data below, the
entropy production at t = 0 is strictly positive, so the entropy rises
before it decays.  Reference values of dH/dt[u0] are evaluated in closed
form (validated against quadrature in the tests).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import balance, kernels, mobility
from .model import CoefficientSystem, DomainConfig, InitialData
from .solver import DiagnosticsSeries, SolverConfig, simulate

VARIANTS = ("vanishing_a0", "positive_a0")


@dataclass(frozen=True)
class CounterexampleConfig:
    """Scenario selector for the two entropy-increase constructions.

    ``eps_profile`` is the width of the initial-data ramps on
    (0.5, 0.5 + eps); it must lie in (0, 0.5).  ``a20``/``a30`` only enter
    the positive-diffusion variant.
    """

    variant: str
    eps_profile: float
    a20: float = 1.0
    a30: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0.0 < self.eps_profile < 0.5:
            raise ValueError(f"eps_profile must lie in (0, 0.5), got {self.eps_profile}")
        if self.variant == "positive_a0" and (self.a20 <= 0.0 or self.a30 <= 0.0):
            raise ValueError("positive_a0 variant needs a20 > 0 and a30 > 0")


def counterexample_system(c: CounterexampleConfig) -> CoefficientSystem:
    """Cyclic three-species system of the chosen variant (a10 fixed to 1)."""
    a = np.zeros((3, 3))
    a[0, 2] = a[2, 1] = a[1, 0] = 1.0  # a_13 = a_32 = a_21 = 1
    if c.variant == "vanishing_a0":
        a0 = np.zeros(3)
    else:
        a0 = np.array([1.0, c.a20, c.a30])
    return CoefficientSystem(n=3, s=1.0, a0=a0, a=a)


def counterexample_initial_data(c: CounterexampleConfig, x: np.ndarray) -> InitialData:
    """Ramp initial data of the chosen variant, validated against the grid.

    Species 2 ramps down and species 3 ramps up across (0.5, 0.5 + eps);
    species 1 is constant.  The grid must resolve the ramp: dx <= eps/8.
    """
    x = np.asarray(x, dtype=float)
    dx = float(x[1] - x[0])
    if dx > c.eps_profile / 8.0 + 1e-14:
        raise ValueError(f"grid too coarse for the ramp: dx = {dx:.4g} > "
                         f"eps_profile/8 = {c.eps_profile / 8.0:.4g}")
    e = c.eps_profile
    if c.variant == "vanishing_a0":
        u1_lo = u1_hi = 1.0
        u2_lo, u2_hi = 3.0, 2.0
        u3_lo, u3_hi = 9.0, 10.0
    else:
        a20, a30 = c.a20, c.a30
        u1_lo = u1_hi = a20 * (2.0 * a20 + a30) / (8.0 * a20 + 4.0 * a30)
        u2_lo, u2_hi = 4.0 * a20, 3.0 * a20
        u3_lo, u3_hi = 8.0 * a20 + 4.0 * a30, 9.0 * a20 + 4.0 * a30
    breaks = (0.0, 0.5, 0.5 + e, 1.0)
    return InitialData.piecewise_linear([
        (breaks, (u1_lo, u1_lo, u1_hi, u1_hi)),
        (breaks, (u2_lo, u2_lo, u2_hi, u2_hi)),
        (breaks, (u3_lo, u3_lo, u3_hi, u3_hi)),
    ])


def counterexample_production_reference(c: CounterexampleConfig) -> float:
    """Closed-form dH/dt[u0] from analytic integration over the ramp."""
    e = c.eps_profile
    if c.variant == "vanishing_a0":
        return (2.0 - np.log(1.5) - 12.0 * np.log(10.0 / 9.0)) / e
    a, b = c.a20, c.a30
    bracket = (2.0 - 1.25 * np.log(4.0 / 3.0)
               - (12.0 * a + 5.0 * b) / a * np.log((9.0 * a + 4.0 * b) / (8.0 * a + 4.0 * b)))
    return a * a * bracket / e


def counterexample_production_bound(c: CounterexampleConfig) -> float:
    """Proved lower bound on dH/dt[u0]: 1/(6 eps) resp. a20^2/(12 eps)."""
    if c.variant == "vanishing_a0":
        return 1.0 / (6.0 * c.eps_profile)
    return c.a20 ** 2 / (12.0 * c.eps_profile)


def counterexample_grid_cells(c: CounterexampleConfig, ratio: int = 64) -> int:
    """Cell count giving dx = eps_profile/ratio on the unit interval."""
    cells = int(round(ratio / c.eps_profile))
    if cells % 2:
        cells += 1  # keep x = 0.5 on a face
    return cells


def entropy_production(sys: CoefficientSystem, pi: np.ndarray, u: np.ndarray,
                       dx: float) -> float:
    """Signed dH/dt = -integral of (du)^T H(u)A(u) (du), reactions excluded.

    Centered face differences and arithmetic-mean face states, matching the
    solver's dissipation quadrature.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0):
        raise ValueError("entropy production requires strictly positive densities")
    pi = np.asarray(pi, dtype=float)
    ub = 0.5 * (u[1:] + u[:-1])
    du = (u[1:] - u[:-1]) / dx
    vals = kernels.ha_quadform(ub, du, sys.a0, sys.a, pi, sys.s)
    return -float(np.sum(vals) * dx)


# ---------------------------------------------------------------------------
# regime sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    knob: str
    value: float
    detailed_balance: bool
    eta0: float
    eta1: float
    eta2: float
    s0: float | None
    applicable: tuple
    dhdt0: float
    min_slack: float
    entropy_increased: bool
    completed: bool


def _apply_knob(sys: CoefficientSystem, knob: str, value: float) -> CoefficientSystem:
    if knob == "s":
        return dataclasses.replace(sys, s=value)
    if knob == "sigma":
        return dataclasses.replace(sys, sigma=value)
    if knob.startswith("a_sym["):
        i, j = (int(t) for t in knob[len("a_sym["):].rstrip("]").split(","))
        arr = np.array(sys.a)
        arr[i, j] = arr[j, i] = value
        return dataclasses.replace(sys, a=arr)
    if knob.startswith(("a[", "b[", "a0[", "b0[")):
        name, rest = knob.split("[", 1)
        idx = tuple(int(t) for t in rest.rstrip("]").split(","))
        arr = np.array(getattr(sys, name))
        arr[idx] = value
        return dataclasses.replace(sys, **{name: arr})
    raise ValueError(f"unknown sweep knob {knob!r}")


def _eps_profile_row(val: float) -> SweepRow:
    c = CounterexampleConfig(variant="vanishing_a0", eps_profile=float(val))
    sys = counterexample_system(c)
    cells = counterexample_grid_cells(c)
    x = (np.arange(cells) + 0.5) / cells
    u0_c = counterexample_initial_data(c, x)
    pi, cert = balance.working_weights(sys.a)
    bounds = mobility.structural_constants(sys, pi)
    dhdt = entropy_production(sys, pi, u0_c.sample(x), 1.0 / cells)
    return SweepRow(knob="eps_profile", value=float(val),
                    detailed_balance=cert.holds, eta0=bounds.eta0,
                    eta1=bounds.eta1, eta2=bounds.eta2, s0=bounds.s0,
                    applicable=bounds.applicable, dhdt0=dhdt,
                    min_slack=np.nan, entropy_increased=dhdt > 0.0,
                    completed=True)


def _knob_row(base, knob, val, dom, u0, steps) -> SweepRow:
    sys = _apply_knob(base, knob, float(val))
    pi, cert = balance.working_weights(sys.a)
    bounds = mobility.structural_constants(sys, pi)
    if dom is None:
        eps = 0.0 if abs(sys.s - 1.0) < 1e-8 else 1e-3
        dom = DomainConfig(cells=64, T=steps * 1e-3, tau=1e-3, eps=eps)
    if u0 is None:
        x = dom.grid()
        u0 = np.stack([1.0 + 0.3 * np.cos((i + 1) * np.pi * x / dom.length)
                       for i in range(sys.n)], axis=1)
    dhdt, min_slack = np.nan, np.nan
    increased, completed = False, False
    try:
        series = simulate(SolverConfig(system=sys, domain=dom, pi=pi), u0)
        dhdt = float(series.production[0])
        min_slack = series.min_entropy_slack
        increased = bool(np.any(np.diff(series.entropy)
                                > 1e-12 * (1.0 + np.abs(series.entropy[:-1]))))
        completed = True
    except Exception:
        pass
    return SweepRow(knob=knob, value=float(val), detailed_balance=cert.holds,
                    eta0=bounds.eta0, eta1=bounds.eta1, eta2=bounds.eta2,
                    s0=bounds.s0, applicable=bounds.applicable,
                    dhdt0=dhdt, min_slack=min_slack,
                    entropy_increased=increased, completed=completed)


def regime_sweep(base: CoefficientSystem, knob: str, values,
                 dom: DomainConfig | None = None, u0: InitialData | None = None,
                 steps: int = 20, jobs: int = 1) -> list:
    """Sweep one knob: certificate, constants, short run, entropy monitors.

    The special knob ``eps_profile`` sweeps the ramp width of the
    vanishing-diffusion counterexample and reports its initial production
    instead of running a simulation.  Cells are independent; ``jobs > 1``
    evaluates them on a thread pool (row order is preserved).
    """
    if knob == "eps_profile":
        work = _eps_profile_row
    else:
        def work(val):
            return _knob_row(base, knob, val, dom, u0, steps)
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(work, values))
    return [work(val) for val in values]


def counterexample_series(c: CounterexampleConfig, dom: DomainConfig,
                          store_trajectory: bool = False) -> DiagnosticsSeries:
    """Simulate the chosen counterexample on the given domain."""
    sys = counterexample_system(c)
    x = dom.grid()
    u0 = counterexample_initial_data(c, x)
    pi, _ = balance.working_weights(sys.a)
    sc = SolverConfig(system=sys, domain=dom, pi=pi,
                      store_trajectory=store_trajectory)
    return simulate(sc, u0)
