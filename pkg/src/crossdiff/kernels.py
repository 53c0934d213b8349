"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The backend is picked once at import time: numba is used when it imports
cleanly, unless the environment variable ``CROSSDIFF_DISABLE_NUMBA`` is set
to ``1``/``true``/``yes``/``on``.  ``BACKEND`` records the active choice and
``benchmarks/kernel_benchmark.py`` compares the two paths.

Three kernels live here because profiling shows they dominate runtime:

* ``invert_field``    -- entropy-variable inversion u = (h_eps')^{-1}(w),
                         called inside every residual evaluation,
* ``mobility_fluxes`` -- per-face mobility fluxes of the implicit scheme,
* ``ha_quadform``     -- batched quadratic forms z^T H(u) A(u) z used by the
                         randomized bound certification.
"""
from __future__ import annotations

import os

import numpy as np


def _numba_requested() -> bool:
    flag = os.environ.get("CROSSDIFF_DISABLE_NUMBA", "").strip().lower()
    if flag in ("1", "true", "yes", "on"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"

_EXP_CAP = 700.0  # exp() overflows float64 just above this


# ---------------------------------------------------------------------------
# entropy-variable inversion: solve (s*pi/(s-1))*(u^(s-1)-1) + eps*log(u) = w
# per component, in v = log(u).  The map is strictly increasing and convex
# (s>1) or concave (s<1) in v, so Newton converges globally; a bracket grown
# by doubling plus bisection guards the float edge cases.
# ---------------------------------------------------------------------------

def _invert_loops(w, s, pi, eps, max_iter, tol_scale):
    m, n = w.shape
    u = np.empty_like(w)
    nfail = 0
    c = s - 1.0
    for j in range(m):
        for i in range(n):
            wv = w[j, i]
            al = s * pi[i] / c
            tol = tol_scale * (1.0 + abs(wv))

            # candidate starts: v=0, the eps-free root, the h_s-saturated root
            v = 0.0
            best = abs(-wv)
            t = 1.0 + wv * c / (s * pi[i])
            if t > 0.0:
                va = np.log(t) / c
                e = np.exp(min(c * va, _EXP_CAP))
                r = abs(al * (e - 1.0) + eps * va - wv)
                if r < best:
                    best = r
                    v = va
            vb = (wv + al) / eps
            e = np.exp(min(c * vb, _EXP_CAP))
            r = abs(al * (e - 1.0) + eps * vb - wv)
            if r < best:
                v = vb

            # bracket by doubling until the residual changes sign
            e = np.exp(min(c * v, _EXP_CAP))
            gv = al * (e - 1.0) + eps * v - wv
            if gv < 0.0:
                lo = v
                k = 1.0
                hi = v + k
                for _ in range(200):
                    e = np.exp(min(c * hi, _EXP_CAP))
                    if al * (e - 1.0) + eps * hi - wv >= 0.0:
                        break
                    lo = hi
                    k *= 2.0
                    hi = v + k
            else:
                hi = v
                k = 1.0
                lo = v - k
                for _ in range(200):
                    e = np.exp(min(c * lo, _EXP_CAP))
                    if al * (e - 1.0) + eps * lo - wv <= 0.0:
                        break
                    hi = lo
                    k *= 2.0
                    lo = v - k

            ok = False
            for _ in range(max_iter):
                e = np.exp(min(c * v, _EXP_CAP))
                gv = al * (e - 1.0) + eps * v - wv
                if abs(gv) <= tol:
                    ok = True
                    break
                if gv > 0.0:
                    hi = v
                else:
                    lo = v
                gp = s * pi[i] * e + eps
                vn = v - gv / gp
                if not (lo < vn < hi) or not np.isfinite(vn):
                    vn = 0.5 * (lo + hi)
                if vn == v:  # bracket collapsed to machine precision
                    ok = True
                    break
                v = vn
            if not ok:
                nfail += 1
            u[j, i] = np.exp(v)
    return u, nfail


def _invert_numpy(w, s, pi, eps, max_iter=100, tol_scale=1e-15):
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _invert_numpy_core(w, s, pi, eps, max_iter, tol_scale)


def _invert_numpy_core(w, s, pi, eps, max_iter, tol_scale):
    c = s - 1.0
    al = s * pi / c
    tol = tol_scale * (1.0 + np.abs(w))

    def geval(v):
        e = np.exp(np.minimum(c * v, _EXP_CAP))
        return al * (e - 1.0) + eps * v - w, s * pi * e + eps

    v = np.zeros_like(w)
    gv, _ = geval(v)
    best = np.abs(gv)
    t = 1.0 + w * c / (s * pi)
    va = np.where(t > 0.0, np.log(np.maximum(t, 1e-300)) / c, 0.0)
    ga, _ = geval(va)
    take = (t > 0.0) & (np.abs(ga) < best)
    v = np.where(take, va, v)
    best = np.where(take, np.abs(ga), best)
    vb = (w + al) / eps
    gb, _ = geval(vb)
    v = np.where(np.abs(gb) < best, vb, v)

    for _ in range(max_iter):
        gv, gp = geval(v)
        if np.all(np.abs(gv) <= tol):
            break
        step = gv / gp
        step = np.where(np.isfinite(step), step, np.sign(gv) * 60.0)
        v = v - np.clip(step, -60.0, 60.0)

    gv, _ = geval(v)
    bad = np.abs(gv) > tol
    nfail = 0
    if np.any(bad):
        # rare stragglers: re-run the safeguarded scalar path on them
        jj, ii = np.nonzero(bad)
        sub = np.ascontiguousarray(w[jj, ii]).reshape(-1, 1)
        for k in range(sub.shape[0]):
            uk, nf = _invert_loops(sub[k : k + 1], s, pi[ii[k] : ii[k] + 1],
                                   eps, max_iter, tol_scale)
            nfail += nf
            v[jj[k], ii[k]] = np.log(uk[0, 0])
    return np.exp(v), nfail


# ---------------------------------------------------------------------------
# per-face mobility fluxes  F_i = sum_l B_il(ubar) * (w[f+1,l]-w[f,l]) / dx
# with B = A_eps(u) H_eps(u)^{-1}, arithmetic-mean face states and the
# eps-approximation A_eps = A + eps*A0 + eps^eta*A1.
# ---------------------------------------------------------------------------

def _fluxes_loops(u, w, a0, a, mu, s, pi, eps, eps_eta, dx):
    m, n = u.shape
    nf = m - 1
    flux = np.zeros((nf, n))
    ub = np.empty(n)
    us = np.empty(n)
    us1 = np.empty(n)
    hess = np.empty(n)
    for f in range(nf):
        for i in range(n):
            ub[i] = 0.5 * (u[f, i] + u[f + 1, i])
        for i in range(n):
            us[i] = ub[i] ** s
            us1[i] = ub[i] ** (s - 1.0)
            hess[i] = s * pi[i] * ub[i] ** (s - 2.0) + eps / ub[i]
        for i in range(n):
            p = a0[i]
            for k in range(n):
                p += a[i, k] * us[k]
            acc = 0.0
            for l in range(n):
                aij = s * a[i, l] * ub[i] * us1[l]
                if l == i:
                    aij += p + eps * ub[i] * mu[i] / pi[i] + eps_eta * ub[i]
                else:
                    aij -= eps * ub[i] * a[l, i] / pi[i]
                acc += aij / hess[l] * (w[f + 1, l] - w[f, l])
            flux[f, i] = acc / dx
    return flux


def _fluxes_numpy(u, w, a0, a, mu, s, pi, eps, eps_eta, dx):
    n = u.shape[1]
    ub = 0.5 * (u[:-1] + u[1:])
    us = ub ** s
    us1 = ub ** (s - 1.0)
    p = a0 + us @ a.T
    amat = s * a * ub[:, :, None] * us1[:, None, :]
    idx = np.arange(n)
    amat[:, idx, idx] += p
    if eps > 0.0:
        amat[:, idx, idx] += eps * ub * (mu / pi) + eps_eta * ub
        off = eps * (ub / pi)[:, :, None] * a.T[None, :, :]
        off[:, idx, idx] = 0.0
        amat -= off
    hess = s * pi * ub ** (s - 2.0) + eps / ub
    dw = (w[1:] - w[:-1]) / dx
    return np.einsum("fil,fl->fi", amat / hess[:, None, :], dw)


# ---------------------------------------------------------------------------
# batched quadratic form  z^T H(u) A(u) z,  H = diag(s*pi_i*u_i^(s-2))
# ---------------------------------------------------------------------------

def _quadform_loops(u, z, a0, a, pi, s):
    m, n = u.shape
    out = np.empty(m)
    us = np.empty(n)
    us1 = np.empty(n)
    for kk in range(m):
        for i in range(n):
            us[i] = u[kk, i] ** s
            us1[i] = u[kk, i] ** (s - 1.0)
        acc = 0.0
        for i in range(n):
            p = a0[i]
            azi = 0.0
            for l in range(n):
                p += a[i, l] * us[l]
                azi += a[i, l] * us1[l] * z[kk, l]
            azi = p * z[kk, i] + s * u[kk, i] * azi
            acc += s * pi[i] * u[kk, i] ** (s - 2.0) * z[kk, i] * azi
        out[kk] = acc
    return out


def _quadform_numpy(u, z, a0, a, pi, s):
    us = u ** s
    us1 = u ** (s - 1.0)
    p = a0 + us @ a.T
    az = p * z + s * u * ((us1 * z) @ a.T)
    return np.sum(s * pi * u ** (s - 2.0) * z * az, axis=1)


if USE_NUMBA:
    from numba import njit

    _invert_numba = njit(cache=True)(_invert_loops)
    _fluxes_numba = njit(cache=True)(_fluxes_loops)
    _quadform_numba = njit(cache=True)(_quadform_loops)
else:  # pragma: no cover - exercised via the env flag
    _invert_numba = None
    _fluxes_numba = None
    _quadform_numba = None


def invert_field(w, s, pi, eps, max_iter=100, tol_scale=1e-15):
    """Invert the entropy-variable map componentwise on a (M, n) field.

    Returns ``(u, nfail)`` where ``nfail`` counts components that missed the
    residual tolerance after the iteration cap.
    """
    w = np.ascontiguousarray(w, dtype=np.float64)
    pi = np.ascontiguousarray(pi, dtype=np.float64)
    if USE_NUMBA:
        return _invert_numba(w, s, pi, eps, max_iter, tol_scale)
    return _invert_numpy(w, s, pi, eps, max_iter, tol_scale)


def mobility_fluxes(u, w, a0, a, mu, s, pi, eps, eps_eta, dx):
    """Mobility flux of w at the M-1 interior faces of a (M, n) field."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if USE_NUMBA:
        return _fluxes_numba(u, w, a0, a, mu, s, pi, eps, eps_eta, dx)
    return _fluxes_numpy(u, w, a0, a, mu, s, pi, eps, eps_eta, dx)


def ha_quadform(u, z, a0, a, pi, s):
    """z^T H(u) A(u) z for a batch of (u, z) rows."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    if USE_NUMBA:
        return _quadform_numba(u, z, a0, a, pi, s)
    return _quadform_numpy(u, z, a0, a, pi, s)


#: implementations exposed for the benchmark and for backend parity tests
NUMPY_IMPLS = {
    "invert_field": _invert_numpy,
    "mobility_fluxes": _fluxes_numpy,
    "ha_quadform": _quadform_numpy,
}
NUMBA_IMPLS = {
    "invert_field": _invert_numba,
    "mobility_fluxes": _fluxes_numba,
    "ha_quadform": _quadform_numba,
}
