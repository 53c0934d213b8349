"""Coefficient systems, domains, initial data and run-configuration parsing."""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SPATIAL_DIM = 1  # the solver is one-dimensional; certification ops are dimension-free


class ConfigError(ValueError):
    """Raised when a run-configuration file cannot be parsed."""


def _readonly(arr, shape, name):
    out = np.array(arr, dtype=float)
    if out.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CoefficientSystem:
    """Diffusion/transition and reaction coefficients of an n-species system.

    Construction only checks shapes; semantic invariants (nonnegativity,
    exponent ranges) are reported by :func:`validate_system`.
    """

    n: int
    s: float
    a0: np.ndarray
    a: np.ndarray
    b0: np.ndarray | None = None
    b: np.ndarray | None = None
    sigma: float = 1.0

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise ValueError("species count n must be >= 1")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "a0", _readonly(self.a0, (n,), "a0"))
        object.__setattr__(self, "a", _readonly(self.a, (n, n), "a"))
        b0 = np.zeros(n) if self.b0 is None else self.b0
        b = np.zeros((n, n)) if self.b is None else self.b
        object.__setattr__(self, "b0", _readonly(b0, (n,), "b0"))
        object.__setattr__(self, "b", _readonly(b, (n, n), "b"))

    @property
    def regime(self) -> str:
        if abs(self.s - 1.0) < 1e-8:
            return "linear"
        return "sublinear" if self.s < 1.0 else "superlinear"

    @property
    def has_reaction(self) -> bool:
        return bool(np.any(self.b0 > 0.0) or np.any(self.b > 0.0))

    def transition_rates(self, u: np.ndarray) -> np.ndarray:
        """p_i(u) = a_{i0} + sum_k a_{ik} u_k^s, vectorized over leading axes."""
        u = np.asarray(u, dtype=float)
        return self.a0 + (u ** self.s) @ self.a.T


@dataclass(frozen=True)
class DomainConfig:
    """1D interval (0, length), uniform grid and time-stepping parameters."""

    cells: int
    T: float
    tau: float
    eps: float
    length: float = 1.0
    eta: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "cells", int(self.cells))

    @property
    def dx(self) -> float:
        return self.length / self.cells

    def grid(self) -> np.ndarray:
        """Cell centers of the uniform grid."""
        return (np.arange(self.cells) + 0.5) * self.dx


@dataclass(frozen=True)
class InitialData:
    """Per-species initial profiles: constant, piecewise-linear, or samples.

    ``clip`` carries the cut-off bounds installed by
    :func:`cutoff_initial_data`; sampling applies them last.
    """

    profiles: tuple
    clip: tuple[float, float] | None = None

    @classmethod
    def constant(cls, values) -> "InitialData":
        return cls(tuple(("constant", float(v)) for v in np.atleast_1d(values)))

    @classmethod
    def piecewise_linear(cls, per_species) -> "InitialData":
        """``per_species`` is a list of (xs, vs) breakpoint pairs, one per species."""
        profs = []
        for xs, vs in per_species:
            xs = tuple(float(x) for x in xs)
            vs = tuple(float(v) for v in vs)
            if len(xs) != len(vs) or len(xs) < 2:
                raise ValueError("piecewise-linear profile needs >= 2 breakpoints")
            if any(x1 <= x0 for x0, x1 in zip(xs, xs[1:])):
                raise ValueError("breakpoints must be strictly increasing")
            profs.append(("linear", xs, vs))
        return cls(tuple(profs))

    @classmethod
    def from_samples(cls, values: np.ndarray) -> "InitialData":
        values = np.atleast_2d(np.asarray(values, dtype=float))
        return cls(tuple(("samples", tuple(col)) for col in values.T))

    @property
    def n(self) -> int:
        return len(self.profiles)

    @property
    def nonnegative(self) -> bool:
        lo = np.inf
        for prof in self.profiles:
            vals = prof[2] if prof[0] == "linear" else prof[1]
            lo = min(lo, np.min(vals))
        if self.clip is not None:
            lo = max(lo, self.clip[0])
        return lo >= 0.0

    def sample(self, x: np.ndarray) -> np.ndarray:
        """Evaluate all species on cell centers ``x``; returns (len(x), n)."""
        x = np.asarray(x, dtype=float)
        out = np.empty((x.size, self.n))
        for i, prof in enumerate(self.profiles):
            kind = prof[0]
            if kind == "constant":
                out[:, i] = prof[1]
            elif kind == "linear":
                out[:, i] = np.interp(x, prof[1], prof[2])
            else:
                vals = np.asarray(prof[1], dtype=float)
                if vals.size != x.size:
                    raise ValueError(
                        f"sampled profile for species {i} has {vals.size} values, "
                        f"grid has {x.size} cells"
                    )
                out[:, i] = vals
        if self.clip is not None:
            np.clip(out, self.clip[0], self.clip[1], out=out)
        return out


def cutoff(values: np.ndarray, eps: float) -> np.ndarray:
    """Clamp densities into [eps, eps^(-1/2)] (strictly positive, bounded)."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"cut-off requires 0 < eps < 1, got {eps}")
    return np.clip(np.asarray(values, dtype=float), eps, eps ** -0.5)


def cutoff_initial_data(u0: InitialData, eps: float) -> InitialData:
    """Install the [eps, eps^(-1/2)] cut-off on an initial datum."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"cut-off requires 0 < eps < 1, got {eps}")
    return dataclasses.replace(u0, clip=(eps, eps ** -0.5))


def reaction(sys: CoefficientSystem, u: np.ndarray) -> np.ndarray:
    """Lotka-Volterra competition term f_i(u) = u_i (b_{i0} - sum_j b_{ij} u_j^sigma)."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0):
        raise ValueError("reaction requires nonnegative densities")
    return u * (sys.b0 - (u ** sys.sigma) @ sys.b.T)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)  # (name, passed, message)
    regime: str = ""
    candidate_conditions: tuple = ()

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def failures(self) -> list:
        return [(name, msg) for name, ok, msg in self.checks if not ok]

    def __str__(self) -> str:
        lines = [f"regime: {self.regime}"]
        for name, ok, msg in self.checks:
            lines.append(f"  [{'ok' if ok else 'FAIL'}] {name}: {msg}")
        lines.append(f"  candidate conditions: {', '.join(self.candidate_conditions) or 'none'}")
        return "\n".join(lines)


def validate_system(sys: CoefficientSystem, dom: DomainConfig | None = None) -> ValidationReport:
    """Check every structural invariant; returns a report, never raises."""
    rep = ValidationReport(regime=sys.regime)
    add = rep.checks.append

    ok = bool(np.all(sys.a0 >= 0.0) and np.all(sys.a >= 0.0)
              and np.all(sys.b0 >= 0.0) and np.all(sys.b >= 0.0))
    add(("coefficients nonnegative", ok,
         "all a, b entries >= 0" if ok else "negative coefficient found"))

    ok = sys.s > 0.0
    add(("s > 0", ok, f"s = {sys.s}" if ok else f"s > 0 violated (s = {sys.s})"))

    d = SPATIAL_DIM
    if sys.s > 0.0 and sys.s < 1.0 - 1e-8:
        bound = 2.0 * sys.s - 1.0 + 2.0 / d
        ok = 0.0 <= sys.sigma < bound
        add(("reaction exponent", ok,
             f"0 <= sigma = {sys.sigma} < 2s-1+2/d = {bound}" if ok
             else f"sigma < 2s-1+2/d = {bound} violated (sigma = {sys.sigma})"))
        ok = sys.s > max(0.0, 1.0 - 2.0 / d)
        add(("sublinear solver bound", ok,
             f"s = {sys.s} > max(0, 1-2/d) = {max(0.0, 1.0 - 2.0 / d)}"))
    elif sys.s > 0.0:
        ok = abs(sys.sigma - 1.0) < 1e-12
        add(("reaction exponent", ok,
             "sigma = 1" if ok else f"sigma = 1 required for s >= 1 (sigma = {sys.sigma})"))

    if dom is not None:
        ok = dom.cells >= 2
        add(("cells >= 2", ok, f"M = {dom.cells}"))
        ok = dom.tau > 0.0
        add(("tau > 0", ok, f"tau = {dom.tau}"))
        ok = dom.T > 0.0
        add(("T > 0", ok, f"T = {dom.T}"))
        if abs(sys.s - 1.0) < 1e-8:
            ok = 0.0 <= dom.eps < 1.0
            add(("eps in [0,1)", ok, f"eps = {dom.eps} (eps = 0 allowed for s = 1)"))
        else:
            ok = 0.0 < dom.eps < 1.0
            add(("eps in (0,1)", ok,
                 f"eps = {dom.eps}" if ok
                 else f"0 < eps < 1 required for s != 1 (eps = {dom.eps})"))
        ok = 0.0 < dom.eta < 0.5
        add(("eta in (0,1/2)", ok, f"eta = {dom.eta} (strict upper bound enforced)"))

    if rep.checks[0][1] and rep.checks[1][1]:
        from . import balance, mobility  # deferred: those modules import model

        cert = balance.check_conditions(np.asarray(sys.a))
        pi = cert.measure.pi if cert.holds else np.ones(sys.n)
        bounds = mobility.structural_constants(sys, pi)
        rep.candidate_conditions = bounds.applicable
    return rep


# ---------------------------------------------------------------------------
# run-configuration files (INI sections [system] [domain] [initial] [run])
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    system: CoefficientSystem
    domain: DomainConfig | None = None
    initial: InitialData | None = None
    seed: int = 0
    out: str = "out"


def _floats(value: str) -> list:
    try:
        return [float(tok) for tok in value.split()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse numbers from {value!r}") from exc


def _matrix(value: str, n: int, name: str) -> np.ndarray:
    vals = _floats(value)
    if len(vals) != n * n:
        raise ConfigError(f"{name} needs {n}x{n} = {n * n} entries, got {len(vals)}")
    return np.array(vals).reshape(n, n)


def _vector(value: str, n: int, name: str) -> np.ndarray:
    vals = _floats(value)
    if len(vals) != n:
        raise ConfigError(f"{name} needs {n} entries, got {len(vals)}")
    return np.array(vals)


def _parse_profile(spec: str, key: str):
    toks = spec.split()
    if not toks:
        raise ConfigError(f"empty profile for {key}")
    kind, args = toks[0], toks[1:]
    if kind == "constant":
        if len(args) != 1:
            raise ConfigError(f"{key}: 'constant' takes one value")
        return ("constant", float(args[0]))
    if kind == "linear":
        pts = []
        for tok in args:
            try:
                xs, vs = tok.split(":")
                pts.append((float(xs), float(vs)))
            except ValueError as exc:
                raise ConfigError(f"{key}: bad breakpoint {tok!r}, expected x:value") from exc
        if len(pts) < 2:
            raise ConfigError(f"{key}: 'linear' needs >= 2 breakpoints")
        xs = tuple(p[0] for p in pts)
        vs = tuple(p[1] for p in pts)
        if any(x1 <= x0 for x0, x1 in zip(xs, xs[1:])):
            raise ConfigError(f"{key}: breakpoints must be strictly increasing")
        return ("linear", xs, vs)
    if kind == "samples":
        return ("samples", tuple(float(v) for v in args))
    raise ConfigError(f"{key}: unknown profile kind {kind!r}")


def parse_config(source) -> RunConfig:
    """Parse a run-configuration file (path or text) into model objects."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if isinstance(source, (str, Path)) and "\n" not in str(source):
            text = Path(source).read_text()
        elif isinstance(source, io.TextIOBase):
            text = source.read()
        else:
            text = str(source)
        parser.read_string(text)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from exc

    if not parser.has_section("system"):
        raise ConfigError("missing [system] section")
    sect = parser["system"]
    try:
        n = sect.getint("n")
        s = sect.getfloat("s")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [system] entry: {exc}") from exc
    if n is None or s is None:
        raise ConfigError("[system] requires n and s")
    try:
        system = CoefficientSystem(
            n=n,
            s=s,
            a0=_vector(sect.get("a0", " ".join(["0"] * n)), n, "a0"),
            a=_matrix(sect.get("a", " ".join(["0"] * (n * n))), n, "a"),
            b0=_vector(sect.get("b0", " ".join(["0"] * n)), n, "b0"),
            b=_matrix(sect.get("b", " ".join(["0"] * (n * n))), n, "b"),
            sigma=sect.getfloat("sigma", fallback=1.0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    domain = None
    if parser.has_section("domain"):
        dsect = parser["domain"]
        try:
            domain = DomainConfig(
                cells=dsect.getint("cells"),
                T=dsect.getfloat("t"),
                tau=dsect.getfloat("tau"),
                eps=dsect.getfloat("eps"),
                length=dsect.getfloat("length", fallback=1.0),
                eta=dsect.getfloat("eta", fallback=0.25),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad [domain] entry: {exc}") from exc

    initial = None
    if parser.has_section("initial"):
        isect = parser["initial"]
        profs = []
        for i in range(1, n + 1):
            key = f"u{i}"
            if key not in isect:
                raise ConfigError(f"[initial] missing {key}")
            profs.append(_parse_profile(isect[key], key))
        initial = InitialData(tuple(profs))

    seed, out = 0, "out"
    if parser.has_section("run"):
        rsect = parser["run"]
        seed = rsect.getint("seed", fallback=0)
        out = rsect.get("out", fallback="out")

    return RunConfig(system=system, domain=domain, initial=initial, seed=seed, out=out)
