"""Projective parameters from the oscillation equation y'' + q(t) y = 0.

Zero counting, Bessel comparison and the completeness verdict for a single
geodesic live here.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.special import jv, yv

from .errors import DegenerateMoebius, StepFailure, SturmViolation

ZERO_XTOL = 1e-12


@dataclass
class OscillationSolution:
    """Fundamental pair y0, y1 with (y, y') = (1, 0) and (0, 1) at ``t0``."""

    q: Callable
    t_span: tuple[float, float]
    sol: object
    t: np.ndarray
    zeros0: np.ndarray
    zeros1: np.ndarray
    subdivide: int = 8

    @property
    def t0(self):
        return self.t_span[0]

    def __call__(self, t):
        """Rows y0, y0', y1, y1' at t."""
        return self.sol(t)

    def y0(self, t):
        return self.sol(t)[0]

    def y1(self, t):
        return self.sol(t)[2]

    def wronskian(self, t):
        y = self.sol(t)
        return y[0] * y[3] - y[2] * y[1]

    def combination(self, alpha: float, beta: float) -> Callable:
        """The solution with y(t0) = alpha, y'(t0) = beta."""
        return lambda t: alpha * self.sol(t)[0] + beta * self.sol(t)[2]

    def combination_zeros(self, alpha: float, beta: float) -> np.ndarray:
        return _zeros(self.combination(alpha, beta), self._grid())

    def _grid(self):
        return _refine(self.t, self.subdivide)

    def zero_counts(self) -> tuple[int, int]:
        return len(self.zeros0), len(self.zeros1)


def _refine(t, k):
    pieces = [np.linspace(a, b, k + 1)[:-1] for a, b in zip(t[:-1], t[1:])]
    return np.concatenate(pieces + [t[-1:]])


def _zeros(f, grid, xtol=ZERO_XTOL) -> np.ndarray:
    vals = f(grid)
    out = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            out.append(grid[i])
        elif vals[i] * vals[i + 1] < 0:
            out.append(brentq(f, grid[i], grid[i + 1], xtol=xtol, rtol=4 * np.finfo(float).eps))
    if len(grid) and vals[-1] == 0.0:
        out.append(grid[-1])
    return np.asarray(out, dtype=float)


def check_separation(z0, z1) -> None:
    """Between consecutive zeros of one solution lies exactly one zero of the other."""
    for a, b in ((z0, z1), (z1, z0)):
        for lo, hi in zip(a[:-1], a[1:]):
            k = int(np.count_nonzero((b > lo) & (b < hi)))
            if k != 1:
                raise SturmViolation(f"{k} zeros of the partner solution in ({lo:.12g}, {hi:.12g})")


def solve_oscillation(q: Callable, t_span, *, rtol: float = 1e-12, atol: float = 1e-12,
                      max_step: float = np.inf, subdivide: int = 8,
                      check: bool = True) -> OscillationSolution:
    """Integrate both fundamental solutions of y'' + q(t) y = 0 with dense output.

    Zeros come from sign changes on a refined step grid, polished by Brent's
    method to 1e-12 in t.  Sturm separation is asserted unless ``check`` is off.
    """
    t0, t1 = map(float, t_span)

    def rhs(t, y):
        qt = float(q(t))
        return [y[1], -qt * y[0], y[3], -qt * y[2]]

    res = solve_ivp(rhs, (t0, t1), [1.0, 0.0, 0.0, 1.0], method="DOP853", rtol=rtol,
                    atol=atol, dense_output=True, max_step=max_step)
    if res.status != 0:
        raise StepFailure(res.message)
    sol = res.sol
    grid = _refine(res.t, subdivide)
    z0 = _zeros(lambda t: sol(t)[0], grid)
    z1 = _zeros(lambda t: sol(t)[2], grid)
    out = OscillationSolution(q, (t0, t1), sol, res.t, z0, z1, subdivide)
    if check:
        check_separation(z0, z1)
    return out


# -- projective parameter ----------------------------------------------------------


@dataclass
class ProjectiveParameter:
    """u(t) = (a y1 + b y0) / (c y1 + d y0) with its poles."""

    sol: OscillationSolution
    moebius: tuple[float, float, float, float]
    poles: np.ndarray

    def __call__(self, t):
        a, b, c, d = self.moebius
        y = self.sol(t)
        return (a * y[2] + b * y[0]) / (c * y[2] + d * y[0])

    @property
    def winding(self) -> int:
        return len(self.poles)


def projective_parameter(sol: OscillationSolution, a, b, c, d) -> ProjectiveParameter:
    """Ratio of two independent solutions, normalised by a Moebius matrix.

    The poles of u are the zeros of the denominator solution; their number
    is the winding of the development across the window.
    """
    if a * d - b * c == 0:
        raise DegenerateMoebius(f"ad - bc = 0 for {(a, b, c, d)}")
    den = sol.combination(d, c)
    return ProjectiveParameter(sol, (a, b, c, d), _zeros(den, sol._grid()))


def moebius(m, u):
    a, b, c, d = m
    return (a * u + b) / (c * u + d)


def compose(m2, m1):
    """Matrix product m2 @ m1 for (a, b, c, d) tuples."""
    A = np.array(m2, float).reshape(2, 2) @ np.array(m1, float).reshape(2, 2)
    return tuple(A.ravel())


# -- Bessel comparison -------------------------------------------------------------


def bessel_comparison_solution(c: float, eps: float, kind: str = "J") -> Callable:
    """sqrt(t) Z_{1/eps}(sqrt(c) t^{eps/2} / eps), Z = J or Y.

    Solves y'' + c / (4 t^{2 - eps}) y = 0 on t > 0.
    """
    nu = 1.0 / eps
    Z = jv if kind == "J" else yv
    return lambda t: np.sqrt(t) * Z(nu, np.sqrt(c) * np.power(t, eps / 2) / eps)


def bessel_comparison_derivative(c: float, eps: float, kind: str = "J") -> Callable:
    from scipy.special import jvp, yvp

    nu = 1.0 / eps
    Z, dZ = (jv, jvp) if kind == "J" else (yv, yvp)

    def d(t):
        arg = np.sqrt(c) * np.power(t, eps / 2) / eps
        darg = np.sqrt(c) * 0.5 * np.power(t, eps / 2 - 1)
        return 0.5 / np.sqrt(t) * Z(nu, arg) + np.sqrt(t) * dZ(nu, arg) * darg

    return d


def bessel_zeros(nu: float, x_max: float, kind: str = "J") -> np.ndarray:
    """Positive zeros of J_nu (or Y_nu) below ``x_max``.

    Brackets follow the asymptotic spacing pi: the scan step is pi/8 after
    a fine sweep near the origin, then each bracket is polished with Brent.
    """
    Z = jv if kind == "J" else yv
    f = lambda x: Z(nu, x)
    x_lo = 1e-8
    fine = np.linspace(x_lo, min(x_max, nu + 10.0), 2000)
    coarse = np.arange(fine[-1], x_max + np.pi / 8, np.pi / 8)[1:]
    grid = np.concatenate((fine, coarse))
    grid = grid[grid <= x_max]
    return _zeros(f, grid, xtol=1e-14)


def bessel_comparison_zeros(c: float, eps: float, t_span, kind: str = "J") -> np.ndarray:
    """Zeros in ``t_span`` of the comparison solution sqrt(t) Z_{1/eps}(...)."""
    if c <= 0 or eps <= 0:
        raise ValueError("c and eps must be positive")
    t0, t1 = map(float, t_span)
    if t0 < 0:
        raise ValueError("comparison lives on t > 0")
    x_of = lambda t: np.sqrt(c) * t ** (eps / 2) / eps
    xs = bessel_zeros(1.0 / eps, x_of(t1), kind)
    ts = (eps * xs / np.sqrt(c)) ** (2.0 / eps)
    return ts[(ts >= t0) & (ts <= t1)]


# -- completeness verdicts -----------------------------------------------------------


@dataclass
class Certificate:
    kind: str  # "comparison" or "jacobi"
    c: float = float("nan")
    eps: float = float("nan")
    window: tuple[float, float] = (float("nan"), float("nan"))
    detail: str = ""


@dataclass
class CompletenessVerdict:
    geodesic_id: str
    window: tuple[float, float]
    zeros_forward: int
    zeros_backward: int | None
    verdict: str  # complete | incomplete | undetermined
    certificate: Certificate | None = None
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.verdict == "complete" and self.certificate is None:
            raise ValueError("a complete verdict needs a certificate")

    CSV_HEADER = ("geodesic_id", "t_start", "t_end", "zeros_forward", "zeros_backward",
                  "certificate", "c", "eps", "verdict")

    def csv_row(self) -> list[str]:
        cert = self.certificate
        fmt = lambda v: "" if v is None or (isinstance(v, float) and np.isnan(v)) else f"{v:.6g}"
        return [self.geodesic_id, f"{self.window[0]:.6g}", f"{self.window[1]:.6g}",
                str(self.zeros_forward),
                "" if self.zeros_backward is None else str(self.zeros_backward),
                "" if cert is None else cert.kind,
                fmt(None if cert is None else cert.c), fmt(None if cert is None else cert.eps),
                self.verdict]


def verdicts_to_csv(verdicts, fh=None) -> str:
    buf = io.StringIO() if fh is None else fh
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CompletenessVerdict.CSV_HEADER)
    for v in verdicts:
        w.writerow(v.csv_row())
    return buf.getvalue() if fh is None else ""


EPS_GRID = (2.0, 1.5, 1.0, 0.75, 0.5, 0.25, 0.1)


@dataclass
class VerdictOptions:
    tail_fraction: float = 0.5
    eps_grid: tuple = EPS_GRID
    assume_tail: bool = False   # skip the non-degradation check of the tail bound
    degrade_tol: float = 0.05   # allowed relative drop of the bound across the tail
    q_zero: float = 1e-8        # |q| below this counts as zero
    rtol: float = 1e-12
    atol: float = 1e-12


def comparison_certificate(t, q, opts: VerdictOptions | None = None) -> Certificate | None:
    """Best (c, eps) with q(t) >= c / (4 t^{2-eps}) on the tail of the window.

    A finite window alone cannot certify an infinite tail, so a candidate
    is accepted only if g(t) = 4 q(t) t^{2-eps} does not degrade across the
    tail: the minimum of g over the second half of the tail must stay
    within ``degrade_tol`` of its minimum over the first half.  The largest
    accepted eps wins; c is then the tail minimum of g.
    """
    opts = opts or VerdictOptions()
    t = np.asarray(t, float)
    q = np.asarray(q, float)
    lo = t[0] + (1 - opts.tail_fraction) * (t[-1] - t[0])
    m = (t >= lo) & (t > 0)
    if m.sum() < 4:
        return None
    tt, qq = t[m], q[m]
    half = tt <= 0.5 * (tt[0] + tt[-1])
    for eps in sorted(opts.eps_grid, reverse=True):
        g = 4 * qq * tt ** (2 - eps)
        c = float(g.min())
        if c <= 0:
            continue
        if not opts.assume_tail:
            g1, g2 = g[half].min(), g[~half].min()
            if g2 < (1 - opts.degrade_tol) * g1:
                continue
        return Certificate("comparison", c=c, eps=eps, window=(float(tt[0]), float(tt[-1])))
    return None


def _one_direction(t, q, opts):
    """(certificate, zero count, q <= 0 on tail, at most one zero)."""
    from scipy.interpolate import CubicSpline

    t = np.asarray(t, float)
    qf = CubicSpline(t, q) if len(t) > 1 else (lambda s: q[0])
    sol = solve_oscillation(qf, (t[0], t[-1]), rtol=opts.rtol, atol=opts.atol)
    n0, n1 = sol.zero_counts()
    lo = t[0] + (1 - opts.tail_fraction) * (t[-1] - t[0])
    nonpos = bool(np.all(np.asarray(q)[t >= lo] <= opts.q_zero))
    return comparison_certificate(t, q, opts), n1, nonpos, max(n0, n1) <= 1


def completeness_verdict(profile, backward=None, *, geodesic_id: str = "",
                         options: VerdictOptions | None = None,
                         jacobi: Certificate | None = None) -> CompletenessVerdict:
    """Decide completeness of one geodesic from its Ricci profile.

    ``profile`` has ``t`` and ``q`` arrays (see ``ricci_along``); ``backward``
    is the profile of the reversed geodesic.  Rules, per direction:

    * a comparison certificate (or a supplied Jacobi certificate) -> complete;
    * q <= 0 on the tail and at most one zero in the window -> incomplete;
    * otherwise undetermined.

    Both directions must be complete for a complete verdict; either
    direction being incomplete makes the geodesic incomplete.
    """
    opts = options or VerdictOptions()
    dirs = [profile] + ([] if backward is None else [backward])
    results = [_one_direction(p.t, p.q, opts) for p in dirs]
    window = (float(profile.t[0]), float(profile.t[-1]))
    zf = results[0][1]
    zb = results[1][1] if backward is not None else None
    notes = []
    if jacobi is not None:
        return CompletenessVerdict(geodesic_id, window, zf, zb, "complete", jacobi,
                                   ["periodic geodesic with a vanishing Jacobi field"])
    if any(nonpos and few for _, _, nonpos, few in results):
        return CompletenessVerdict(geodesic_id, window, zf, zb, "incomplete", None,
                                   ["q <= 0 on the tail: development stays in a proper interval"])
    certs = [r[0] for r in results]
    if all(c is not None for c in certs):
        best = min(certs, key=lambda c: (c.eps, c.c))
        return CompletenessVerdict(geodesic_id, window, zf, zb, "complete", best, notes)
    notes.append("no comparison certificate on the examined tail")
    return CompletenessVerdict(geodesic_id, window, zf, zb, "undetermined", None, notes)


def verdict_for_geodesic(source, x0, v0, window: float = 60.0, *, chart: int = 0,
                         geodesic_id: str = "", options: VerdictOptions | None = None,
                         max_dt: float = 0.05) -> CompletenessVerdict:
    """Integrate a geodesic both ways over [0, window] and judge its completeness.

    A geodesic that leaves its only chart before the window ends is
    reported incomplete: its affine parameter cannot be extended.
    """
    from .geodesic_engine import integrate_geodesic, ricci_along

    profiles = []
    for sign in (1.0, -1.0):
        traj = integrate_geodesic(source, x0, sign * np.asarray(v0, float), (0.0, window),
                                  chart=chart)
        if traj.exit is not None:
            return CompletenessVerdict(geodesic_id, (0.0, float(traj.exit.t)), 0, None,
                                       "incomplete", None,
                                       [f"left the chart at t={traj.exit.t:.6g}"])
        profiles.append(ricci_along(None, traj, max_dt=max_dt))
    return completeness_verdict(profiles[0], profiles[1], geodesic_id=geodesic_id,
                                options=options)
