import numpy as np
import pytest

import crossdiff as cd
from crossdiff import entropy as ent
from crossdiff import experiments, mobility
from crossdiff.solver import (
    SolverConfig,
    assemble_residual,
    initial_state,
    newton_step,
    reaction_growth_constant,
    simulate,
    weak_residual,
)
from helpers import random_db_system, smooth_positive_field

HEAT = cd.CoefficientSystem(n=1, s=1.0, a0=[1.0], a=[[0.0]])


def heat_setup(cells, T, tau, store=False):
    dom = cd.DomainConfig(cells=cells, T=T, tau=tau, eps=0.0)
    sc = SolverConfig(system=HEAT, domain=dom, pi=np.ones(1),
                      store_trajectory=store)
    x = dom.grid()
    u0 = (1.0 + 0.5 * np.cos(np.pi * x)).reshape(-1, 1)
    return sc, u0


def test_constant_state_is_steady():
    sysr = cd.CoefficientSystem(n=2, s=1.0, a0=[0.5, 0.5],
                                a=[[1.0, 0.4], [0.4, 1.0]])
    dom = cd.DomainConfig(cells=32, T=0.01, tau=1e-3, eps=0.0)
    sc = SolverConfig(system=sysr, domain=dom, pi=np.ones(2))
    state = initial_state(sc, np.full((32, 2), 1.7))
    res = assemble_residual(state, state.w, sc)
    assert np.max(np.abs(res)) <= 1e-12
    new, rep = newton_step(state, sc)
    assert rep.newton_iters <= 1
    assert np.allclose(new.u, state.u, atol=1e-12)
    assert rep.entropy_slack >= -1e-12


def test_scheme_approaches_heat_stencil():
    # with s = 1, eps = 0 the flux u_face * D(log u) equals D(u) up to O(dx^2)
    errs = []
    for cells in (32, 64, 128):
        sc, u0 = heat_setup(cells, T=1e-3, tau=1e-3)
        state = initial_state(sc, u0)
        w_trial = state.w * 1.02  # off the steady manifold
        r_ours = assemble_residual(state, w_trial, sc)
        u_t = ent.inverse_transform(sc.params, w_trial)
        dx = sc.domain.dx
        lap = np.zeros_like(u_t)
        lap[1:-1] = (u_t[2:] - 2 * u_t[1:-1] + u_t[:-2]) / dx ** 2
        lap[0] = (u_t[1] - u_t[0]) / dx ** 2
        lap[-1] = (u_t[-2] - u_t[-1]) / dx ** 2
        r_heat = (u_t - state.u) / sc.domain.tau - lap
        errs.append(np.max(np.abs(r_ours - r_heat)))
    assert errs[0] / errs[1] > 3.0 and errs[1] / errs[2] > 3.0  # ~O(dx^2)


def test_single_step_mass_identity_two_cells():
    sysr = cd.CoefficientSystem(n=2, s=0.5, a0=[0.5, 0.5],
                                a=[[0.8, 0.3], [0.3, 0.6]])
    dom = cd.DomainConfig(cells=2, T=1e-3, tau=1e-3, eps=1e-2)
    sc = SolverConfig(system=sysr, domain=dom, pi=np.ones(2))
    state = initial_state(sc, np.array([[1.0, 2.0], [1.5, 0.7]]))
    w_trial = state.w + 0.1
    res = assemble_residual(state, w_trial, sc)
    u_trial = ent.inverse_transform(sc.params, w_trial)
    # testing against phi = 1 kills the fluxes; only the eps*w term survives
    lhs = res.sum(axis=0) * dom.dx
    rhs = ((u_trial.sum(axis=0) - state.u.sum(axis=0)) * dom.dx / dom.tau
           + dom.eps * w_trial.sum(axis=0) * dom.dx)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_mass_defect_bounded_by_regularization():
    rng = np.random.default_rng(0)
    sysr = random_db_system(rng, 2, 0.5, a0_hi=0.5)
    pi = cd.check_conditions(sysr.a).measure.pi
    defects = []
    for eps in (1e-3, 5e-4):
        dom = cd.DomainConfig(cells=64, T=1e-3, tau=1e-3, eps=eps)
        sc = SolverConfig(system=sysr, domain=dom, pi=pi)
        state = initial_state(sc, smooth_positive_field(dom.grid(), 2))
        new, rep = newton_step(state, sc)
        defect = np.abs(rep.mass_after - rep.mass_before)
        wint = np.sum(np.abs(new.w), axis=0) * dom.dx
        dwint = np.sum(np.abs(np.diff(new.w, axis=0)), axis=0)
        assert np.all(defect <= eps * dom.tau * (wint + dwint) + 1e-12)
        defects.append(defect.max())
    assert defects[1] < 0.75 * defects[0]  # shrinks roughly linearly in eps


def test_mass_balance_against_reactions():
    # with eps = 0, summing the residual over cells leaves exactly
    # (mass change)/tau - integral of f at the new state
    skt = cd.CoefficientSystem(n=2, s=1.0, a0=[0.5, 0.3],
                               a=[[0.2, 0.6], [0.4, 0.1]],
                               b0=[1.0, 0.8], b=[[1.0, 0.5], [0.6, 1.0]])
    dom = cd.DomainConfig(cells=64, T=5e-3, tau=1e-3, eps=0.0)
    sc = SolverConfig(system=skt, domain=dom, pi=np.ones(2), store_trajectory=True)
    series = simulate(sc, smooth_positive_field(dom.grid(), 2))
    for k in range(1, len(series.states)):
        u = series.states[k].u
        f_int = cd.reaction(skt, u).sum(axis=0) * dom.dx
        defect = series.mass[k] - series.mass[k - 1] - series.tau_used[k - 1] * f_int
        assert np.max(np.abs(defect)) <= 1e-10


def test_heat_fourier_decay_factor():
    tau = 1e-4
    sc, u0 = heat_setup(256, T=0.05, tau=tau, store=True)
    series = simulate(sc, u0)
    x = sc.domain.grid()
    steps = series.steps
    amp0 = 2.0 * np.mean(u0[:, 0] * np.cos(np.pi * x))
    amp = 2.0 * np.mean(series.states[-1].u[:, 0] * np.cos(np.pi * x))
    predicted = amp0 * (1.0 + tau * np.pi ** 2) ** (-steps)
    assert abs(amp - predicted) / abs(predicted) <= 1e-3
    assert series.entropy_nonincreasing


def test_counterexample_first_step_raises_entropy():
    c = experiments.CounterexampleConfig(variant="vanishing_a0", eps_profile=0.1)
    dom = cd.DomainConfig(cells=128, T=5e-5, tau=5e-5, eps=1e-6)
    sysr = experiments.counterexample_system(c)
    sc = SolverConfig(system=sysr, domain=dom, pi=np.ones(3))
    state = initial_state(sc, experiments.counterexample_initial_data(c, dom.grid()))
    new, rep = newton_step(state, sc)
    assert rep.entropy_after > rep.entropy_before


def test_positivity_and_entropy_inequality_random_systems():
    rng = np.random.default_rng(1)
    for s in (0.5, 1.0, 2.0):
        sysr = random_db_system(rng, 3, s)
        pi = cd.check_conditions(sysr.a).measure.pi
        eps = 0.0 if s == 1.0 else 1e-4
        dom = cd.DomainConfig(cells=64, T=0.02, tau=1e-3, eps=eps)
        sc = SolverConfig(system=sysr, domain=dom, pi=pi)
        series = simulate(sc, smooth_positive_field(dom.grid(), 3))
        assert series.min_u.min() > 0.0
        assert series.min_entropy_slack >= -1e-8
        assert series.entropy_nonincreasing


@pytest.mark.parametrize("s", [0.5, 1.0, 1.5, 2.0])
def test_dissipation_coercivity(s):
    sysr = cd.CoefficientSystem(n=2, s=s, a0=[0.2, 0.2],
                                a=[[1.0, 0.5], [0.5, 1.0]])
    eps = 0.0 if s == 1.0 else 1e-4
    dom = cd.DomainConfig(cells=128, T=5e-3, tau=1e-3, eps=eps)
    sc = SolverConfig(system=sysr, domain=dom, pi=np.ones(2), store_trajectory=True)
    series = simulate(sc, smooth_positive_field(dom.grid(), 2))
    bound = mobility.dissipation_bound(sysr, sc.params, dom.eta)
    for k in range(1, len(series.states)):
        u = series.states[k].u
        grad_us = np.sum(((u[1:] ** s - u[:-1] ** s) / dom.dx) ** 2) * dom.dx
        assert series.dissipation[k - 1] >= bound.cs * grad_us - 1e-8


def test_weak_residual_steady_state():
    dom = cd.DomainConfig(cells=32, T=5e-3, tau=1e-3, eps=0.0)
    sc = SolverConfig(system=HEAT, domain=dom, pi=np.ones(1), store_trajectory=True)
    series = simulate(sc, np.full((32, 1), 2.0))
    entries = weak_residual(series)
    assert max(abs(e.value) for e in entries) <= 1e-12


def test_weak_residual_decays_linearly_in_tau():
    maxima = []
    for tau in (2e-3, 1e-3, 5e-4):
        sc, u0 = heat_setup(128, T=0.02, tau=tau, store=True)
        series = simulate(sc, u0)
        entries = weak_residual(series)
        maxima.append(max(abs(e.value) for e in entries))
    slopes = [np.log2(maxima[i] / maxima[i + 1]) for i in range(2)]
    assert min(slopes) >= 0.9


def test_weak_forms_agree_on_skt_trajectory():
    skt = cd.CoefficientSystem(n=2, s=1.0, a0=[0.5, 0.3],
                               a=[[0.2, 0.6], [0.4, 0.1]],
                               b0=[1.0, 0.8], b=[[1.0, 0.5], [0.6, 1.0]])
    dom = cd.DomainConfig(cells=128, T=0.02, tau=5e-4, eps=0.0)
    sc = SolverConfig(system=skt, domain=dom, pi=np.ones(2), store_trajectory=True)
    series = simulate(sc, smooth_positive_field(dom.grid(), 2))
    assert series.min_u.min() > 0.0
    entries = weak_residual(series)
    grad = {(e.species, e.poly_degree, e.mode): e.value
            for e in entries if e.form == "gradient"}
    very = {(e.species, e.poly_degree, e.mode): e.value
            for e in entries if e.form == "very-weak"}
    # integration by parts relates the two forms up to quadrature error
    assert max(abs(grad[k] - very[k]) for k in grad) <= 1e-4


def test_spatial_refinement_order():
    tau, T = 1e-4, 5e-3
    errs = []
    for cells in (32, 64, 128):
        sc, u0 = heat_setup(cells, T=T, tau=tau, store=True)
        series = simulate(sc, u0)
        x = sc.domain.grid()
        ref = 1.0 + 0.5 * (1.0 + tau * np.pi ** 2) ** (-series.steps) * np.cos(np.pi * x)
        errs.append(np.sqrt(np.mean((series.states[-1].u[:, 0] - ref) ** 2)))
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 1.9


def test_reaction_growth_constant():
    assert reaction_growth_constant(HEAT, ent.EntropyParams(s=1.0, pi=np.ones(1))) == 0.0
    skt = cd.CoefficientSystem(n=2, s=1.0, a0=[0.5, 0.3],
                               a=[[0.2, 0.6], [0.4, 0.1]],
                               b0=[1.0, 0.8], b=[[1.0, 0.5], [0.6, 1.0]])
    p = ent.EntropyParams(s=1.0, pi=np.ones(2))
    cf = reaction_growth_constant(skt, p)
    assert cf > 0.0
    # admissibility: f.w <= C_f (1 + h) on a wide sampled box
    rng = np.random.default_rng(3)
    u = 10.0 ** rng.uniform(-4, 4, (20000, 2))
    g = np.sum(cd.reaction(skt, u) * cd.entropy_variable(p, u), axis=1)
    assert np.all(g <= cf * (1.0 + cd.entropy_density(p, u)) + 1e-12)


def test_simulate_validates_configuration():
    bad_dom = cd.DomainConfig(cells=16, T=0.01, tau=1e-3, eps=0.0)
    sub = cd.CoefficientSystem(n=2, s=0.5, a0=[1.0, 1.0], a=np.ones((2, 2)))
    sc = SolverConfig(system=sub, domain=bad_dom, pi=np.ones(2))
    with pytest.raises(ValueError):
        simulate(sc, np.ones((16, 2)))  # eps = 0 invalid for s != 1
    with pytest.raises(ValueError):
        sc2 = SolverConfig(system=HEAT,
                           domain=cd.DomainConfig(cells=16, T=0.01, tau=1e-3, eps=0.0),
                           pi=np.ones(1))
        simulate(sc2, np.zeros((16, 1)))  # nonpositive initial data


def test_newton_step_halves_tau_on_stagnation(monkeypatch):
    import crossdiff.solver as solver_mod

    real_solve = solver_mod._newton_solve

    def flaky_solve(u_prev, w_start, sc, tau):
        if tau > 2.6e-4:  # force two halvings of the nominal 1e-3 step
            raise solver_mod.NewtonError("forced", w=w_start, residual_norm=1.0)
        return real_solve(u_prev, w_start, sc, tau)

    monkeypatch.setattr(solver_mod, "_newton_solve", flaky_solve)
    dom = cd.DomainConfig(cells=32, T=0.01, tau=1e-3, eps=0.0)
    sc = SolverConfig(system=HEAT, domain=dom, pi=np.ones(1))
    state = initial_state(sc, np.full((32, 1), 1.5))
    new, rep = solver_mod.newton_step(state, sc)
    assert rep.halvings == 2
    assert rep.tau_used == pytest.approx(2.5e-4)
    assert new.t == pytest.approx(2.5e-4)

    def hopeless(u_prev, w_start, sc, tau):
        raise solver_mod.NewtonError("forced", w=w_start, residual_norm=1.0)

    monkeypatch.setattr(solver_mod, "_newton_solve", hopeless)
    with pytest.raises(solver_mod.NewtonError):
        solver_mod.newton_step(state, sc)


def test_simulate_lands_exactly_on_final_time():
    dom = cd.DomainConfig(cells=32, T=0.0025, tau=1e-3, eps=0.0)  # 2.5 steps
    sc = SolverConfig(system=HEAT, domain=dom, pi=np.ones(1))
    x = dom.grid()
    series = simulate(sc, (1.0 + 0.2 * np.cos(np.pi * x)).reshape(-1, 1))
    assert series.t[-1] == pytest.approx(0.0025, abs=1e-14)
    assert series.tau_used[-1] == pytest.approx(0.5e-3)
    assert series.steps == 3


def test_simulate_enforces_reaction_step_bound():
    strong = cd.CoefficientSystem(n=1, s=1.0, a0=[1.0], a=[[0.0]],
                                  b0=[5.0], b=[[5.0]])
    dom = cd.DomainConfig(cells=16, T=1.0, tau=0.5, eps=0.0)
    sc = SolverConfig(system=strong, domain=dom, pi=np.ones(1))
    assert sc.c_f > 2.0  # tau = 0.5 >= 1/C_f
    with pytest.raises(ValueError):
        simulate(sc, np.ones((16, 1)))
