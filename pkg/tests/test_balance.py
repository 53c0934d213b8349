import numpy as np
import pytest

import crossdiff as cd
from crossdiff import balance
from helpers import break_cycle_condition, random_reversible_matrix


def test_communicating_classes_examples():
    a = np.zeros((3, 3))
    a[0, 1] = a[1, 0] = 1.0
    assert cd.communicating_classes(a) == ((0, 1), (2,))

    cyc = np.zeros((3, 3))
    cyc[0, 2] = cyc[2, 1] = cyc[1, 0] = 1.0
    assert cd.communicating_classes(cyc) == ((0, 1, 2),)

    oneway = np.zeros((2, 2))
    oneway[0, 1] = 1.0
    assert cd.communicating_classes(oneway) == ((0,), (1,))


def test_classes_permutation_equivariant():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(3, 7))
        a = (rng.random((n, n)) < 0.4) * rng.uniform(0.1, 1.0, (n, n))
        np.fill_diagonal(a, 0.0)
        perm = rng.permutation(n)
        b = a[np.ix_(perm, perm)]
        orig = {frozenset(cls) for cls in cd.communicating_classes(a)}
        mapped = {frozenset(int(np.nonzero(perm == i)[0][0]) for i in cls)
                  for cls in orig}
        assert {frozenset(cls) for cls in cd.communicating_classes(b)} == mapped


def test_check_conditions_symmetric_matrix():
    a = np.array([[0.0, 0.7, 0.2], [0.7, 0.0, 1.1], [0.2, 1.1, 0.0]])
    cert = cd.check_conditions(a)
    assert cert.holds
    assert np.allclose(cert.measure.pi, 1.0 / 3.0)


def test_check_conditions_cycle_coefficients_fail():
    a = np.zeros((3, 3))
    a[0, 2] = a[2, 1] = a[1, 0] = 1.0
    cert = cd.check_conditions(a)
    assert not cert.a1_holds and not cert.holds
    wtn = cert.witness
    assert isinstance(wtn, balance.PairWitness)
    assert wtn.forward > 0.0 and wtn.backward == 0.0


def test_check_conditions_balanced_triple_product():
    # a12 a23 a31 = a13 a32 a21 = 6
    a = np.array([[0.0, 1.0, 3.0], [2.0, 0.0, 6.0], [1.0, 1.0, 0.0]])
    assert a[0, 1] * a[1, 2] * a[2, 0] == a[0, 2] * a[2, 1] * a[1, 0] == 6.0
    cert = cd.check_conditions(a)
    assert cert.holds
    expected = np.array([1.0, a[0, 1] / a[1, 0], a[0, 2] / a[2, 0]])
    assert np.allclose(cert.measure.pi, expected / expected.sum(), rtol=1e-12)


def test_check_conditions_unbalanced_cycle_witness():
    a = np.array([[0.0, 1.0, 3.0], [2.0, 0.0, 6.0], [1.0, 2.0, 0.0]])
    cert = cd.check_conditions(a)
    assert cert.a1_holds and not cert.a2_holds
    wtn = cert.witness
    assert isinstance(wtn, balance.CycleWitness)
    assert wtn.forward != pytest.approx(wtn.backward)


def test_invariant_measure_examples():
    a2 = np.array([[0.0, 2.0], [1.0, 0.0]])
    assert np.allclose(cd.invariant_measure(a2).pi, [1.0 / 3.0, 2.0 / 3.0])

    sym = np.array([[0.2, 0.5], [0.5, 0.1]])
    assert np.allclose(cd.invariant_measure(sym).pi, 0.5)

    cyc = np.zeros((3, 3))
    cyc[0, 2] = cyc[2, 1] = cyc[1, 0] = 1.0
    with pytest.raises(ValueError):
        cd.invariant_measure(cyc)


def test_constructed_measure_satisfies_all_balance_equations():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(2, 7))
        a = random_reversible_matrix(rng, n)
        pi = cd.invariant_measure(a).pi
        lhs = pi[:, None] * a
        scale = 1.0 + np.abs(lhs) + np.abs(lhs.T)
        assert np.max(np.abs(lhs - lhs.T) / scale) <= 1e-12


def test_measure_consistent_under_relabeling():
    rng = np.random.default_rng(4)
    for _ in range(20):
        n = int(rng.integers(3, 6))
        a = random_reversible_matrix(rng, n)
        perm = rng.permutation(n)
        pi_a = cd.invariant_measure(a).pi
        pi_b = cd.invariant_measure(a[np.ix_(perm, perm)]).pi
        assert np.allclose(pi_b, pi_a[perm], rtol=1e-10)


def test_symmetry_check_matches_certificate_verdict():
    rng = np.random.default_rng(5)
    for trial in range(100):
        n = int(rng.integers(3, 6))
        a = random_reversible_matrix(rng, n)
        if trial % 2:
            a = break_cycle_condition(a)
        cert = cd.check_conditions(a)
        pi = cert.measure.pi if cert.holds else np.ones(n)
        sysr = cd.CoefficientSystem(n=n, s=float(rng.uniform(0.3, 2.5)),
                                    a0=np.zeros(n), a=a)
        rep = cd.symmetry_check(sysr, pi, samples=40, seed=trial)
        assert rep.passed == cert.holds
        if not rep.passed:
            assert rep.witness is not None  # asymmetry located at a sample


def test_symmetry_check_fails_on_cycle_coefficients():
    a = np.zeros((3, 3))
    a[0, 2] = a[2, 1] = a[1, 0] = 1.0
    sysr = cd.CoefficientSystem(n=3, s=1.0, a0=np.zeros(3), a=a)
    rep = cd.symmetry_check(sysr, np.ones(3), samples=20, seed=0)
    assert not rep.passed
    u, i, j = rep.witness
    m = balance.ha_matrix(sysr, np.ones(3), u)
    assert abs(m[i, j] - m[j, i]) > 0.0


def test_transition_graph_stores_positive_offdiagonal_edges():
    a = np.array([[0.5, 0.0, 2.0], [1.0, 0.3, 0.0], [0.0, 0.0, 0.0]])
    g = balance.TransitionGraph.from_matrix(a)
    assert g.n == 3
    assert set(g.edges) == {(0, 2, 2.0), (1, 0, 1.0)}  # no self-loops, no zeros


def test_symmetry_check_edge_cases():
    sys1 = cd.CoefficientSystem(n=1, s=1.0, a0=[1.0], a=[[0.5]])
    assert cd.symmetry_check(sys1, np.ones(1), samples=10).passed
    with pytest.raises(ValueError):
        cd.symmetry_check(sys1, np.zeros(1), samples=10)
    with pytest.raises(ValueError):
        cd.symmetry_check(sys1, np.ones(1), samples=0)


def test_one_way_edge_across_classes_fails_a1_only():
    # 0 -> 1 with no return path: no cycle exists, so only the pairwise
    # support condition fails
    a = np.zeros((2, 2))
    a[0, 1] = 1.0
    cert = cd.check_conditions(a)
    assert not cert.a1_holds and cert.a2_holds
    assert isinstance(cert.witness, balance.PairWitness)
    assert cert.measure is None


def test_block_diagonal_reversible_matrix():
    rng = np.random.default_rng(6)
    a = np.zeros((5, 5))
    a[:2, :2] = random_reversible_matrix(rng, 2)
    a[2:, 2:] = random_reversible_matrix(rng, 3)
    cert = cd.check_conditions(a)
    assert cert.holds
    assert cert.measure.classes == ((0, 1), (2, 3, 4))
    pi = cert.measure.pi
    assert pi.sum() == pytest.approx(1.0)
    lhs = pi[:, None] * a
    assert np.allclose(lhs, lhs.T, rtol=1e-12, atol=1e-15)


def test_working_weights_convention():
    cyc = np.zeros((3, 3))
    cyc[0, 2] = cyc[2, 1] = cyc[1, 0] = 1.0
    pi, cert = balance.working_weights(cyc)
    assert not cert.holds
    assert np.all(pi == 1.0)  # all-ones fallback when balance fails
