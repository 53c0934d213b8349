"""Diffusion matrices, structural constants and quadratic-form certification.

The central objects are A(u) (the nonlinear diffusion matrix), its
regularized variant A_eps(u), and the products H(u)A(u) whose positive
definiteness drives the entropy dissipation.  ``certify_lower_bound``
checks each of the seven explicit lower bounds by randomized sampling with
a relative slack tolerance; small-n eigenvalue computations serve as an
independent oracle in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .entropy import EntropyParams
from .model import CoefficientSystem

#: relative slack tolerance of the sampled bound checks
SLACK_TOL = 1e-10
#: relative tolerance when testing pi_i a_ij = pi_j a_ji for given weights
DB_TOL = 1e-12

#: identifiers of the certified lower bounds
BOUND_IDS = ("general", "db-sublinear", "eta0", "s0", "eta1", "eta2", "regularized")


def diffusion_matrix(sys: CoefficientSystem, u) -> np.ndarray:
    """A_ij(u) = delta_ij (a_i0 + sum_k a_ik u_k^s) + s a_ij u_i u_j^(s-1).

    Accepts a single state (n,) or a batch (..., n); returns (..., n, n).
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0):
        raise ValueError("densities must be nonnegative")
    if sys.s < 1.0 and np.any(u == 0.0):
        raise ValueError("u_j^(s-1) is singular at zero components for s < 1")
    with np.errstate(divide="ignore"):
        us1 = u ** (sys.s - 1.0)
    p = sys.transition_rates(u)
    amat = sys.s * sys.a * u[..., :, None] * us1[..., None, :]
    idx = np.arange(sys.n)
    amat[..., idx, idx] += p
    return amat


def mu_weights(sys: CoefficientSystem, pi: np.ndarray) -> np.ndarray:
    """mu_i = (pi_i/2) sum_{j != i} (a_ji/pi_i + a_ij/pi_j)."""
    pi = np.asarray(pi, dtype=float)
    a = sys.a
    terms = a.T / pi[:, None] + a / pi[None, :]  # row i: a_ji/pi_i + a_ij/pi_j
    np.fill_diagonal(terms, 0.0)
    return 0.5 * pi * terms.sum(axis=1)


def approx_matrix(sys: CoefficientSystem, p: EntropyParams, eta: float, u) -> np.ndarray:
    """A_eps(u) = A(u) + eps A0(u) + eps^eta A1(u) with non-diagonal A0."""
    if p.eps <= 0.0:
        raise ValueError("approximate matrix requires eps > 0")
    if not 0.0 < eta < 0.5:
        raise ValueError(f"eta must lie in (0, 1/2), got {eta}")
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0):
        raise ValueError("densities must be strictly positive")
    amat = diffusion_matrix(sys, u)
    mu = mu_weights(sys, p.pi)
    a0 = -(u / p.pi)[..., :, None] * sys.a.T  # (i, l) -> -u_i a_li / pi_i
    idx = np.arange(sys.n)
    a0[..., idx, idx] = u * mu / p.pi
    amat += p.eps * a0
    amat[..., idx, idx] += p.eps ** eta * u
    return amat


def ha_product(sys: CoefficientSystem, pi: np.ndarray, u) -> np.ndarray:
    """H(u) A(u) with H = diag(s pi_i u_i^(s-2))."""
    u = np.asarray(u, dtype=float)
    h = sys.s * np.asarray(pi) * u ** (sys.s - 2.0)
    return h[..., :, None] * diffusion_matrix(sys, u)


def heps_aeps_product(sys: CoefficientSystem, p: EntropyParams, eta: float, u) -> np.ndarray:
    """H_eps(u) A_eps(u) with H_eps = H + eps diag(1/u_i)."""
    u = np.asarray(u, dtype=float)
    h = sys.s * p.pi * u ** (sys.s - 2.0) + p.eps / u
    return h[..., :, None] * approx_matrix(sys, p, eta, u)


# ---------------------------------------------------------------------------
# structural constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MobilityBounds:
    eta0: float
    eta1: float
    eta2: float
    s0: float | None
    applicable: tuple

    def constant_for(self, condition: str, pi: np.ndarray, a: np.ndarray) -> float:
        """Coercivity constant of one applicable condition."""
        pi = np.asarray(pi)
        diag = np.diagonal(a)
        return {
            "db_self_diffusion": float(np.min(pi * diag)),
            "eta0": self.eta0,
            "db_eta1": self.eta1 * float(np.min(pi)),
            "eta2": self.eta2,
            "s0": float(np.min(diag)),
        }[condition]


def _is_detailed_balance(a: np.ndarray, pi: np.ndarray) -> bool:
    m = pi[:, None] * a
    scale = 1.0 + np.abs(m) + np.abs(m.T)
    return bool(np.all(np.abs(m - m.T) <= DB_TOL * scale))


def structural_constants(sys: CoefficientSystem, pi=None) -> MobilityBounds:
    """Evaluate the closed-form constants eta0, eta1, eta2 and s0.

    ``applicable`` lists which sufficient positive-definiteness conditions
    hold for (s, a, pi): detailed balance with positive self-diffusion
    (s <= 1), eta0 > 0 (s <= 1), detailed balance with eta1 > 0 (s > 1),
    eta2 > 0 (s > 1), and s <= s0.
    """
    a = np.asarray(sys.a, dtype=float)
    s = sys.s
    n = sys.n
    pi = np.ones(n) if pi is None else np.asarray(pi, dtype=float)
    diag = np.diagonal(a)
    sq = np.sqrt(a)

    # the j-sum runs over all j; the j = i term vanishes identically
    eta0 = float(np.min(diag - s / (2.0 * (s + 1.0)) * np.sum((sq - sq.T) ** 2, axis=1)))

    off = a.copy()
    np.fill_diagonal(off, 0.0)
    eta1 = float(np.min(diag - (s - 1.0) / (s + 1.0) * off.sum(axis=1)))

    cross = s * (a + a.T) - 2.0 * np.sqrt(a * a.T)
    cross = cross.copy()
    np.fill_diagonal(cross, 0.0)
    eta2 = float(np.min(diag - cross.sum(axis=1) / (2.0 * (s + 1.0))))

    pairsum = a + a.T
    if np.all(pairsum > 0.0):
        s0 = float(np.min(2.0 * np.sqrt(a * a.T) / pairsum))
    else:
        s0 = None

    db = _is_detailed_balance(a, pi)
    applicable = []
    if db and np.all(diag > 0.0) and s <= 1.0:
        applicable.append("db_self_diffusion")
    if eta0 > 0.0 and s <= 1.0:
        applicable.append("eta0")
    if db and eta1 > 0.0 and s > 1.0:
        applicable.append("db_eta1")
    if eta2 > 0.0 and s > 1.0:
        applicable.append("eta2")
    if s0 is not None and s <= s0:
        applicable.append("s0")
    return MobilityBounds(eta0=eta0, eta1=eta1, eta2=eta2, s0=s0,
                          applicable=tuple(applicable))


# ---------------------------------------------------------------------------
# randomized certification of the quadratic-form lower bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadraticFormWitness:
    u: np.ndarray
    z: np.ndarray
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs


@dataclass
class CertificationReport:
    bound: str
    hypotheses_met: bool
    reason: str
    passed: bool
    samples: int
    min_slack: float
    tight_fraction: float
    witnesses: list = field(default_factory=list)
    seed: int = 0

    @property
    def verdict(self) -> str:
        if not self.hypotheses_met:
            return "hypotheses unmet"
        return "pass" if self.passed else "fail"


def _rhs_general(sys, pi, u, z):
    s = sys.s
    a = sys.a
    us = u ** s
    t1 = s * np.sum(pi * sys.a0 * u ** (s - 2.0) * z ** 2, axis=1)
    offd = a.copy()
    np.fill_diagonal(offd, 0.0)
    t2 = s * (1.0 - s) * np.sum((us @ offd.T) * pi * u ** (s - 2.0) * z ** 2, axis=1)
    pa = pi[:, None] * a
    penalty = np.sum((np.sqrt(pa) - np.sqrt(pa.T)) ** 2, axis=1)
    coeff = (s + 1.0) * pi * np.diagonal(a) - 0.5 * s * penalty
    t3 = s * np.sum(coeff * u ** (2.0 * (s - 1.0)) * z ** 2, axis=1)
    return t1 + t2 + t3


def _rhs_db_sublinear(sys, pi, u, z):
    s = sys.s
    us = u ** s
    t1 = s * np.sum(pi * u ** (s - 2.0) * (sys.a0 + (s + 1.0) * np.diagonal(sys.a) * us)
                    * z ** 2, axis=1)
    ratio = np.sqrt(u[:, None, :] / u[:, :, None])   # (k, i, j) -> sqrt(u_j/u_i)
    pair = ratio * z[:, :, None] + z[:, None, :] / ratio
    uij = (u[:, :, None] * u[:, None, :]) ** (s - 1.0)
    offd = (pi[:, None] * sys.a).copy()
    np.fill_diagonal(offd, 0.0)
    t2 = 0.5 * s ** 2 * np.sum(offd * uij * pair ** 2, axis=(1, 2))
    return t1 + t2


def _rhs_diagonal(sys, pi, u, z, const):
    """s sum a_i0 u^(s-2) z^2 + const * s(s+1) sum pi_i u^(2(s-1)) z^2."""
    s = sys.s
    return (s * np.sum(sys.a0 * pi * u ** (s - 2.0) * z ** 2, axis=1)
            + const * s * (s + 1.0) * np.sum(pi * u ** (2.0 * (s - 1.0)) * z ** 2, axis=1))


def _rhs_s0(sys, u, z):
    s = sys.s
    return (s * np.sum(sys.a0 * u ** (s - 2.0) * z ** 2, axis=1)
            + s * (s + 1.0) * np.sum(np.diagonal(sys.a) * u ** (2.0 * (s - 1.0)) * z ** 2,
                                     axis=1))


def certify_lower_bound(sys: CoefficientSystem, pi, bound: str,
                        samples: int = 10_000, seed: int = 0,
                        jobs: int = 1) -> CertificationReport:
    """Sample-check one of the explicit z^T M z lower bounds.

    Hypotheses are verified first; when unmet no sampling happens.  States u
    are log-uniform in [1e-3, 1e3]^n, directions z uniform on the sphere.
    A sample fails when slack < -SLACK_TOL * (1 + |lhs|); failing samples are
    returned as witnesses (at most 10).

    ``jobs > 1`` splits the samples into chunks with per-chunk seeds spawned
    deterministically from ``seed`` and evaluates them on a thread pool; the
    merged report depends on (samples, seed, jobs) only.
    """
    if jobs > 1:
        return _certify_chunked(sys, pi, bound, samples, seed, jobs)
    if bound not in BOUND_IDS:
        raise ValueError(f"unknown bound identifier {bound!r}; known: {BOUND_IDS}")
    pi = np.ones(sys.n) if pi is None else np.asarray(pi, dtype=float)
    s = sys.s
    consts = structural_constants(sys, pi)
    ones = np.ones(sys.n)

    hypotheses_met, reason = True, "hypotheses hold"
    if bound == "db-sublinear":
        if s > 1.0:
            hypotheses_met, reason = False, f"requires s <= 1 (s = {s})"
        elif not _is_detailed_balance(sys.a, pi):
            hypotheses_met, reason = False, "requires detailed balance with given pi"
    elif bound == "eta0":
        if s > 1.0:
            hypotheses_met, reason = False, f"requires s <= 1 (s = {s})"
        elif not consts.eta0 > 0.0:
            hypotheses_met, reason = False, f"requires eta0 > 0 (eta0 = {consts.eta0:.6g})"
    elif bound == "s0":
        if consts.s0 is None:
            hypotheses_met, reason = False, "requires a_ij + a_ji > 0 for all pairs"
        elif s > consts.s0:
            hypotheses_met, reason = False, f"requires s <= s0 = {consts.s0:.6g} (s = {s})"
    elif bound == "eta1":
        if s <= 1.0:
            hypotheses_met, reason = False, f"requires s > 1 (s = {s})"
        elif not _is_detailed_balance(sys.a, pi):
            hypotheses_met, reason = False, "requires detailed balance with given pi"
        elif not consts.eta1 > 0.0:
            hypotheses_met, reason = False, f"requires eta1 > 0 (eta1 = {consts.eta1:.6g})"
    elif bound == "eta2":
        if s <= 1.0:
            hypotheses_met, reason = False, f"requires s > 1 (s = {s})"
        elif not consts.eta2 > 0.0:
            hypotheses_met, reason = False, f"requires eta2 > 0 (eta2 = {consts.eta2:.6g})"

    if not hypotheses_met:
        return CertificationReport(bound=bound, hypotheses_met=False, reason=reason,
                                   passed=False, samples=0, min_slack=np.nan,
                                   tight_fraction=0.0, seed=seed)

    rng = np.random.default_rng(seed)
    u = 10.0 ** rng.uniform(-3.0, 3.0, size=(samples, sys.n))
    z = rng.standard_normal((samples, sys.n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)

    if bound == "regularized":
        eps = 10.0 ** rng.uniform(-6.0, np.log10(0.5), size=samples)
        eta = rng.uniform(0.01, 0.49, size=samples)
        eps_eta = eps ** eta
        amat = diffusion_matrix(sys, u)
        mu = mu_weights(sys, pi)
        a0mat = -(u / pi)[:, :, None] * sys.a.T[None, :, :]
        idx = np.arange(sys.n)
        a0mat[:, idx, idx] = u * (mu / pi)
        aeps = amat + eps[:, None, None] * a0mat
        aeps[:, idx, idx] += eps_eta[:, None] * u
        heps = s * pi * u ** (s - 2.0) + eps[:, None] / u
        lhs = np.einsum("ki,kil,kl->k", z * heps, aeps, z)
        base = kernels.ha_quadform(u, z, sys.a0, sys.a, pi, s)
        rhs = (base
               + eps_eta * s * np.sum(pi * u ** (s - 1.0) * z ** 2, axis=1)
               + eps_eta * eps * np.sum(z ** 2, axis=1))
    else:
        pi_eff = pi if bound in ("general", "db-sublinear", "eta1") else ones
        lhs = kernels.ha_quadform(u, z, sys.a0, sys.a, pi_eff, s)
        if bound == "general":
            rhs = _rhs_general(sys, pi, u, z)
        elif bound == "db-sublinear":
            rhs = _rhs_db_sublinear(sys, pi, u, z)
        elif bound == "eta0":
            rhs = _rhs_diagonal(sys, ones, u, z, consts.eta0)
        elif bound == "s0":
            rhs = _rhs_s0(sys, u, z)
        elif bound == "eta1":
            rhs = _rhs_diagonal(sys, pi, u, z, consts.eta1)
        else:  # eta2
            rhs = _rhs_diagonal(sys, ones, u, z, consts.eta2)

    slack = lhs - rhs
    tol = SLACK_TOL * (1.0 + np.abs(lhs))
    failing = np.nonzero(slack < -tol)[0]
    tight = np.count_nonzero(np.abs(slack) <= tol)
    witnesses = [
        QuadraticFormWitness(u=u[k].copy(), z=z[k].copy(),
                             lhs=float(lhs[k]), rhs=float(rhs[k]))
        for k in failing[:10]
    ]
    return CertificationReport(
        bound=bound, hypotheses_met=True, reason=reason,
        passed=failing.size == 0, samples=samples,
        min_slack=float(np.min(slack)) if samples else np.nan,
        tight_fraction=tight / samples if samples else 0.0,
        witnesses=witnesses, seed=seed,
    )


def _certify_chunked(sys, pi, bound, samples, seed, jobs):
    from concurrent.futures import ThreadPoolExecutor

    sizes = [samples // jobs + (1 if k < samples % jobs else 0) for k in range(jobs)]
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(jobs)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(
            lambda job: certify_lower_bound(sys, pi, bound, samples=sizes[job],
                                            seed=seeds[job]),
            range(jobs)))
    head = parts[0]
    if not head.hypotheses_met:
        head.seed = seed
        return head
    witnesses = [w for part in parts for w in part.witnesses][:10]
    total = sum(part.samples for part in parts)
    return CertificationReport(
        bound=bound, hypotheses_met=True, reason=head.reason,
        passed=all(part.passed for part in parts), samples=total,
        min_slack=min(part.min_slack for part in parts),
        tight_fraction=sum(part.tight_fraction * part.samples for part in parts) / total,
        witnesses=witnesses, seed=seed,
    )


# ---------------------------------------------------------------------------
# dissipation coercivity constants used by the solver diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DissipationBound:
    """Coefficients of the dissipation lower bound.

    ``cs`` multiplies sum_i |grad u_i^s|^2, ``eps_eta_coeff`` multiplies
    sum_i pi_i |grad u_i^((s+1)/2)|^2, and ``eps_mass_coeff`` multiplies
    sum_i |grad u_i|^2.  For s = 1 the per-species coefficients of the
    sharper bound (4 pi_i a_i0 for |grad sqrt(u_i)|^2 and 2 pi_i a_ii for
    |grad u_i|^2) are also reported.
    """

    cs: float
    eps_eta_coeff: float
    eps_mass_coeff: float
    condition: str
    sqrt_gradient_coeffs: np.ndarray | None = None
    gradient_coeffs: np.ndarray | None = None


def dissipation_bound(sys: CoefficientSystem, p: EntropyParams, eta: float) -> DissipationBound:
    """Coercivity constants of the entropy dissipation for (s, a, pi, eps)."""
    consts = structural_constants(sys, p.pi)
    if not consts.applicable:
        raise ValueError("no applicable positive-definiteness condition; "
                         "dissipation bound undefined")
    cstar = min(consts.constant_for(c, p.pi, sys.a) for c in consts.applicable)
    s = sys.s
    cs = (s + 1.0) / s * cstar
    eps_eta = 4.0 * p.eps ** eta * s / (s + 1.0) ** 2 if p.eps > 0.0 else 0.0
    eps_mass = p.eps ** (eta + 1.0) if p.eps > 0.0 else 0.0
    kwargs = {}
    if abs(s - 1.0) < 1e-8:
        kwargs["sqrt_gradient_coeffs"] = 4.0 * p.pi * sys.a0
        kwargs["gradient_coeffs"] = 2.0 * p.pi * np.diagonal(sys.a)
    return DissipationBound(cs=cs, eps_eta_coeff=eps_eta, eps_mass_coeff=eps_mass,
                            condition=",".join(consts.applicable), **kwargs)
