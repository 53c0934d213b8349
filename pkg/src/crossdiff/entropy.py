"""Entropy densities, entropy variables, Hessians and the inverse transform.

The working entropy density is

    h_eps(u) = sum_i pi_i * h_s(u_i) + eps * sum_i (u_i (log u_i - 1) + 1)

with h_s(z) = z(log z - 1) + 1 for s = 1 and (z^s - s z)/(s - 1) + 1 else.
All maps act componentwise on the trailing axis, so fields of shape (M, n)
work the same as single states of shape (n,).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

_S_LINEAR_TOL = 1e-8  # |s-1| below this routes to the s=1 branch


class InverseTransformError(RuntimeError):
    """Inverse entropy transform failed on some component."""


@dataclass(frozen=True)
class EntropyParams:
    s: float
    pi: np.ndarray
    eps: float = 0.0

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        if pi.ndim != 1 or pi.size < 1:
            raise ValueError("pi must be a 1-D vector")
        if np.any(pi <= 0.0):
            raise ValueError("entropy weights pi must be strictly positive")
        if not self.s > 0.0:
            raise ValueError(f"entropy exponent s must be positive, got {self.s}")
        if self.eps < 0.0:
            raise ValueError(f"regularization eps must be >= 0, got {self.eps}")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "eps", float(self.eps))

    @property
    def n(self) -> int:
        return self.pi.size

    @property
    def is_linear(self) -> bool:
        return abs(self.s - 1.0) < _S_LINEAR_TOL


def _h1(z: np.ndarray) -> np.ndarray:
    # z log z - z + 1 with the 0 log 0 = 0 convention
    out = np.ones_like(z)
    pos = z > 0.0
    zp = z[pos]
    out[pos] = zp * (np.log(zp) - 1.0) + 1.0
    return out


def _hs(z: np.ndarray, s: float) -> np.ndarray:
    if abs(s - 1.0) < _S_LINEAR_TOL:
        return _h1(z)
    return (z ** s - s * z) / (s - 1.0) + 1.0


def entropy_density(p: EntropyParams, u) -> np.ndarray:
    """h_eps(u), reducing over the trailing species axis."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0):
        raise ValueError("entropy density requires nonnegative densities")
    val = np.sum(p.pi * _hs(u, p.s), axis=-1)
    if p.eps > 0.0:
        val = val + p.eps * np.sum(_h1(u), axis=-1)
    return val


def entropy_total(p: EntropyParams, u: np.ndarray, dx: float) -> float:
    """Midpoint quadrature of h_eps over a cell-centered field (M, n)."""
    return float(np.sum(entropy_density(p, u)) * dx)


def entropy_variable(p: EntropyParams, u) -> np.ndarray:
    """w = h_eps'(u), componentwise; requires strictly positive u."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0):
        raise ValueError("entropy variable requires strictly positive densities")
    logu = np.log(u)
    if p.is_linear:
        return (p.pi + p.eps) * logu
    return (p.s * p.pi / (p.s - 1.0)) * (u ** (p.s - 1.0) - 1.0) + p.eps * logu


def hessian(p: EntropyParams, u) -> np.ndarray:
    """Diagonal of H_eps(u) = diag(s pi_i u_i^(s-2) + eps / u_i)."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0):
        raise ValueError("entropy Hessian requires strictly positive densities")
    if p.is_linear:
        return (p.pi + p.eps) / u
    return p.s * p.pi * u ** (p.s - 2.0) + p.eps / u


def inverse_transform(p: EntropyParams, w) -> np.ndarray:
    """u = (h_eps')^{-1}(w), strictly positive, solved to |residual| <= 1e-12.

    Closed form for s = 1; otherwise a safeguarded per-component Newton
    iteration (bracket grown by doubling, bisection fallback) in log space.
    Requires eps > 0 when s != 1, since h' is not onto R^n there.
    """
    w = np.asarray(w, dtype=float)
    if p.is_linear:
        return np.exp(w / (p.pi + p.eps))
    if p.eps <= 0.0:
        raise ValueError("inverse transform with s != 1 requires eps > 0")

    flat = w.reshape(-1, p.n)
    u, nfail = kernels.invert_field(flat, p.s, p.pi, p.eps)
    usable = np.isfinite(u) & (u > 0.0)
    if not np.all(usable):
        j, i = np.argwhere(~usable)[0]
        raise InverseTransformError(
            f"component (cell {j}, species {i}): root of w = {flat[j, i]} "
            f"is not representable in float64 (u = {u[j, i]})"
        )
    res = np.abs(entropy_variable(p, u) - flat)
    tol = 1e-12 * (1.0 + np.abs(flat))
    bad = res > tol
    if np.any(bad):
        j, i = np.argwhere(bad)[0]
        raise InverseTransformError(
            f"component (cell {j}, species {i}) did not converge: "
            f"w = {flat[j, i]}, residual = {res[j, i]:.3e}"
        )
    return u.reshape(w.shape)
