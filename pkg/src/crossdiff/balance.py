"""Markov-chain structure of the cross-diffusion coefficients.

The off-diagonal coefficients (a_ij) are read as transition rates of a
finite chain.  This module partitions the states into communicating
classes, checks the pairwise-support and cycle-product conditions that
characterize reversibility, constructs the reversible weights pi when they
exist, and probes the equivalent mobility-symmetry property by sampling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

#: relative tolerance for the cycle-product (tree potential) verification
CYCLE_TOL = 1e-12
#: asymmetry threshold of the sampled mobility-symmetry test
SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class TransitionGraph:
    """Directed weighted graph on states 0..n-1 with positive off-diagonal rates."""

    n: int
    edges: tuple  # ((i, j, weight), ...), i != j, weight > 0

    @classmethod
    def from_matrix(cls, a: np.ndarray) -> "TransitionGraph":
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValueError("transition matrix must be square")
        edges = tuple(
            (i, j, float(a[i, j]))
            for i in range(n)
            for j in range(n)
            if i != j and a[i, j] > 0.0
        )
        return cls(n=n, edges=edges)

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n))
        for i, j, wgt in self.edges:
            adj[i, j] = wgt
        return adj


@dataclass(frozen=True)
class InvariantMeasure:
    pi: np.ndarray
    normalized: bool
    classes: tuple


@dataclass(frozen=True)
class PairWitness:
    """One-way pair: a_ij > 0 but a_ji = 0."""

    i: int
    j: int
    forward: float
    backward: float


@dataclass(frozen=True)
class CycleWitness:
    """Cycle whose forward and backward rate products differ."""

    nodes: tuple
    forward: float
    backward: float


@dataclass(frozen=True)
class BalanceCertificate:
    a1_holds: bool
    a2_holds: bool
    measure: InvariantMeasure | None
    witness: PairWitness | CycleWitness | None

    @property
    def holds(self) -> bool:
        return self.a1_holds and self.a2_holds


def communicating_classes(g: TransitionGraph | np.ndarray) -> tuple:
    """Mutual-reachability classes (strongly connected components).

    Classes are returned as sorted tuples, ordered by their smallest state.
    """
    if not isinstance(g, TransitionGraph):
        g = TransitionGraph.from_matrix(np.asarray(g))
    adj = g.adjacency()
    ncomp, labels = connected_components(
        csr_matrix(adj > 0.0), directed=True, connection="strong"
    )
    groups = [tuple(sorted(np.nonzero(labels == c)[0].tolist())) for c in range(ncomp)]
    return tuple(sorted(groups, key=lambda grp: grp[0]))


def _tree_potentials(a, members):
    """BFS spanning tree from the smallest member; returns (logpi, parent edges)."""
    i0 = members[0]
    logpi = {i0: 0.0}
    tree = []
    queue = [i0]
    mem = set(members)
    while queue:
        i = queue.pop(0)
        for j in sorted(mem):
            if j in logpi:
                continue
            if a[i, j] > 0.0 and a[j, i] > 0.0:
                logpi[j] = logpi[i] + np.log(a[i, j] / a[j, i])
                tree.append((i, j))
                queue.append(j)
    return logpi, tree


def _tree_path(tree, start, goal):
    """Node path from start to goal through the undirected spanning tree."""
    nbr: dict = {}
    for i, j in tree:
        nbr.setdefault(i, []).append(j)
        nbr.setdefault(j, []).append(i)
    prev = {start: None}
    queue = [start]
    while queue:
        node = queue.pop(0)
        if node == goal:
            break
        for nxt in nbr.get(node, []):
            if nxt not in prev:
                prev[nxt] = node
                queue.append(nxt)
    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    return path[::-1]


def _cycle_products(a, nodes):
    fwd = 1.0
    bwd = 1.0
    for u, v in zip(nodes, nodes[1:] + nodes[:1]):
        fwd *= a[u, v]
        bwd *= a[v, u]
    return fwd, bwd


def check_conditions(a: np.ndarray) -> BalanceCertificate:
    """Verify the pairwise-support and cycle-product conditions on (a_ij).

    The cycle condition is checked constructively: log-potentials are
    assigned along a spanning tree of each communicating class and every
    non-tree edge must reproduce the same potential difference to relative
    tolerance ``CYCLE_TOL``.  On failure the witness is the closing cycle
    with its forward and backward rate products.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or np.any(a < 0.0):
        raise ValueError("coefficient matrix must be square and nonnegative")

    a1 = True
    a1_witness = None
    for i in range(n):
        for j in range(i + 1, n):
            if (a[i, j] > 0.0) != (a[j, i] > 0.0):
                a1 = False
                if a1_witness is None:
                    ii, jj = (i, j) if a[i, j] > 0.0 else (j, i)
                    a1_witness = PairWitness(ii, jj, float(a[ii, jj]), float(a[jj, ii]))

    classes = communicating_classes(a)
    a2 = True
    a2_witness = None
    logpi = np.zeros(n)
    for members in classes:
        mem = set(members)
        # a one-way pair inside a class closes a cycle with zero product
        oneway = None
        for i in members:
            for j in members:
                if a[i, j] > 0.0 and a[j, i] == 0.0:
                    oneway = (i, j)
                    break
            if oneway:
                break
        if oneway:
            a2 = False
            if a2_witness is None:
                i, j = oneway
                back = _directed_path(a, j, i, mem)  # [j, ..., i]
                nodes = tuple([i] + back[:-1])
                fwd, bwd = _cycle_products(a, list(nodes))
                a2_witness = CycleWitness(nodes, fwd, bwd)
            continue
        pots, tree = _tree_potentials(a, members)
        for i in members:
            logpi[i] = pots[i]
        for i in members:
            for j in members:
                if i < j and a[i, j] > 0.0 and (i, j) not in tree and (j, i) not in tree:
                    lhs = pots[j] - pots[i]
                    rhs = np.log(a[i, j] / a[j, i])
                    if abs(lhs - rhs) > CYCLE_TOL * (1.0 + abs(lhs) + abs(rhs)):
                        a2 = False
                        if a2_witness is None:
                            path = _tree_path(tree, j, i)
                            nodes = tuple([i] + path[:-1])
                            fwd, bwd = _cycle_products(a, list(nodes))
                            a2_witness = CycleWitness(nodes, fwd, bwd)

    measure = None
    if a1 and a2:
        pi = np.exp(logpi)
        pi /= pi.sum()
        measure = InvariantMeasure(pi=pi, normalized=True, classes=classes)
    return BalanceCertificate(
        a1_holds=a1,
        a2_holds=a2,
        measure=measure,
        witness=a1_witness if not a1 else (a2_witness if not a2 else None),
    )


def _directed_path(a, start, goal, members):
    """Some directed positive-rate path start -> ... -> goal within a class."""
    prev = {start: None}
    queue = [start]
    while queue:
        node = queue.pop(0)
        if node == goal:
            break
        for nxt in sorted(members):
            if nxt not in prev and a[node, nxt] > 0.0:
                prev[nxt] = node
                queue.append(nxt)
    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    return path[::-1]


def invariant_measure(a: np.ndarray) -> InvariantMeasure:
    """Reversible weights pi with pi_i a_ij = pi_j a_ji, normalized to sum 1.

    Per communicating class the smallest state gets weight 1 and the rest
    follow from rate-ratio products along the spanning tree; the result is
    then normalized globally.  Raises if the balance conditions fail.
    """
    cert = check_conditions(a)
    if not cert.holds:
        raise ValueError("invariant measure undefined: balance conditions fail "
                         f"({cert.witness})")
    return cert.measure


def working_weights(a: np.ndarray) -> tuple:
    """(pi, certificate): constructed weights, or all-ones when balance fails."""
    cert = check_conditions(a)
    if cert.holds:
        return cert.measure.pi, cert
    return np.ones(a.shape[0]), cert


@dataclass(frozen=True)
class SymmetryReport:
    passed: bool
    max_asymmetry: float
    witness: tuple | None  # (u, i, j) at the worst sample
    samples: int
    seed: int


def symmetry_check(sys, pi: np.ndarray, samples: int, seed: int = 0,
                   tol: float = SYMMETRY_TOL) -> SymmetryReport:
    """Sampled symmetry test of H(u)A(u) with weights pi.

    Draws log-uniform states u in [1e-3, 1e3]^n and reports the largest
    relative asymmetry max_{i!=j} |M_ij - M_ji| / (1 + |M_ij| + |M_ji|).
    Passing at every sample is equivalent (numerically) to detailed balance
    holding with these weights.
    """
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0.0):
        raise ValueError("weights pi must be strictly positive")
    if samples < 1:
        raise ValueError("sample count must be >= 1")
    n = sys.n
    rng = np.random.default_rng(seed)
    worst = 0.0
    witness = None
    for _ in range(samples):
        u = 10.0 ** rng.uniform(-3.0, 3.0, size=n)
        m = ha_matrix(sys, pi, u)
        if n > 1:
            rel = np.abs(m - m.T) / (1.0 + np.abs(m) + np.abs(m.T))
            np.fill_diagonal(rel, 0.0)
            i, j = np.unravel_index(np.argmax(rel), rel.shape)
            if rel[i, j] > worst:
                worst = float(rel[i, j])
                witness = (u, int(i), int(j))
    passed = worst < tol
    return SymmetryReport(passed=passed, max_asymmetry=worst,
                          witness=None if passed else witness,
                          samples=samples, seed=seed)


def ha_matrix(sys, pi: np.ndarray, u: np.ndarray) -> np.ndarray:
    """H(u) A(u) at a single state, H = diag(s pi_i u_i^(s-2))."""
    from . import mobility  # deferred: mobility imports this module

    amat = mobility.diffusion_matrix(sys, u)
    h = sys.s * np.asarray(pi) * np.asarray(u) ** (sys.s - 2.0)
    return h[:, None] * amat


__all__ = [
    "TransitionGraph", "InvariantMeasure", "BalanceCertificate",
    "PairWitness", "CycleWitness", "SymmetryReport",
    "communicating_classes", "check_conditions", "invariant_measure",
    "working_weights", "symmetry_check", "ha_matrix",
]
