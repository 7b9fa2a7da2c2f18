"""Chart-level geodesics, Jacobi fields, geodesic curvature and Weyl equivalence.

Christoffel convention: ``G[i, j, k]`` = Gamma^i_{jk} with
nabla_{d_j} d_k = Gamma^i_{jk} d_i, so geodesics solve
x''^i + Gamma^i_{jk} x'^j x'^k = 0.  Curvature ``R[i, j, k, l]`` is the
i-th component of R(d_k, d_l) d_j.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import DegenerateVelocity, PoleHandling, StepFailure
from .lie_algebra import LeftInvariantConnection, is_torsion_free, symmetrized_ricci

RTOL = 1e-10
ATOL = 1e-10
FD_STEP = 1e-4


@dataclass(frozen=True)
class ChartConnection:
    """An affine connection on one coordinate chart.

    ``domain`` returns a margin that is positive inside the chart; the
    geodesic integrator stops where it reaches zero.  ``dchristoffel``
    (x -> dG[i, j, k, l] = d_l Gamma^i_{jk}), ``curvature`` (x -> R),
    ``ricci`` and ``metric`` are optional analytic extras.
    """

    dim: int
    christoffel: Callable[[np.ndarray], np.ndarray]
    domain: Callable[[np.ndarray], float] | None = None
    dchristoffel: Callable[[np.ndarray], np.ndarray] | None = None
    ricci: Callable[[np.ndarray], np.ndarray] | None = None
    curvature: Callable[[np.ndarray], np.ndarray] | None = None
    metric: Callable[[np.ndarray], np.ndarray] | None = None
    torsion_free: bool = True
    name: str = ""
    fd_step: float = FD_STEP

    def gamma(self, x) -> np.ndarray:
        return np.asarray(self.christoffel(np.asarray(x, dtype=float)), dtype=float)

    def margin(self, x) -> float:
        return np.inf if self.domain is None else float(self.domain(np.asarray(x, float)))

    def dgamma(self, x, step: float | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.dchristoffel is not None and step is None:
            return np.asarray(self.dchristoffel(x), dtype=float)
        h0 = self.fd_step if step is None else step
        n = self.dim
        out = np.empty((n, n, n, n))
        for l in range(n):
            h = h0 * (1.0 + abs(x[l]))
            e = np.zeros(n)
            e[l] = h
            out[..., l] = (self.gamma(x + e) - self.gamma(x - e)) / (2 * h)
        return out

    def riemann(self, x, step: float | None = None) -> np.ndarray:
        if self.curvature is not None and step is None:
            return np.asarray(self.curvature(np.asarray(x, float)), dtype=float)
        G = self.gamma(x)
        dG = self.dgamma(x, step)
        return (np.einsum("iljk->ijkl", dG) - np.einsum("ikjl->ijkl", dG)
                + np.einsum("ikm,mlj->ijkl", G, G) - np.einsum("ilm,mkj->ijkl", G, G))

    def ricci_tensor(self, x, method: str = "auto", step: float | None = None) -> np.ndarray:
        """Symmetrised Ricci (R^k_{ikj} + R^k_{jki}) / 2."""
        if self.ricci is not None and method in ("auto", "analytic"):
            return np.asarray(self.ricci(np.asarray(x, float)), dtype=float)
        if method == "analytic":
            raise ValueError(f"connection {self.name!r} has no analytic Ricci")
        ric = np.einsum("kikj->ij", self.riemann(x, step))
        return 0.5 * (ric + ric.T)

    def torsion(self, x) -> np.ndarray:
        G = self.gamma(x)
        return G - np.transpose(G, (0, 2, 1))

    def check_torsion_free(self, points, tol: float = 1e-10) -> bool:
        return all(np.max(np.abs(self.torsion(p))) <= tol for p in points)


def flat_connection(n: int = 2, name: str = "flat") -> ChartConnection:
    zero = np.zeros((n, n, n))
    return ChartConnection(n, lambda x: zero, name=name, metric=lambda x: np.eye(n),
                           ricci=lambda x: np.zeros((n, n)))


def metric_connection(dim, metric, dmetric, domain=None, name="", **kw) -> ChartConnection:
    """Levi-Civita connection of ``metric(x)`` with ``dmetric(x)[a, b, c] = d_c g_ab``."""

    def christoffel(x):
        g = metric(x)
        dg = dmetric(x)
        ginv = np.linalg.inv(g)
        # lower[l, j, k] = (d_j g_lk + d_k g_lj - d_l g_jk) / 2
        lower = 0.5 * (np.einsum("lkj->ljk", dg) + np.einsum("ljk->ljk", dg)
                       - np.einsum("jkl->ljk", dg))
        return np.einsum("il,ljk->ijk", ginv, lower)

    return ChartConnection(dim, christoffel, domain=domain, metric=metric, name=name, **kw)


# -- Lie groups in exponential coordinates --------------------------------------


def _dexp_coframe(alg, x, terms: int | None = None) -> np.ndarray:
    """theta(x) = (1 - exp(-ad_x)) / ad_x, the left-trivialised derivative of exp.

    ``x`` may carry leading batch axes.  The series is truncated once the
    remainder bound |ad_x|^m / (m+1)! drops below 1e-18 (at most 60 terms).
    """
    x = np.asarray(x)
    adx = np.einsum("...i,ijk->...kj", x, alg.c)
    n = alg.dim
    if terms is None:
        nrm = float(np.max(np.abs(adx), initial=0.0)) * n
        terms, bound = 1, nrm
        while bound > 1e-18 and terms < 60:
            terms += 1
            bound *= nrm / (terms + 1)
    eye = np.eye(n)
    # Horner evaluation of sum_m (-ad_x)^m / (m+1)!
    out = np.broadcast_to(eye, adx.shape).astype(adx.dtype)
    for m in range(terms, 0, -1):
        out = eye - (adx @ out) / (m + 1)
    return out


def lie_exp_chart(conn: LeftInvariantConnection, radius: float = 1.0) -> ChartConnection:
    """Push a left-invariant connection to exponential coordinates around a point.

    With coframe theta = E^{-1}: Gamma^i_{jk} = E^i_c (d_j theta^c_k +
    theta^a_j theta^b_k Gamma(e_a)^c_b).  Coframe derivatives use complex
    steps, so the chart Christoffels are accurate to rounding.
    """
    alg = conn.algebra
    n = alg.dim
    G = conn.gamma
    r_frame = symmetrized_ricci(conn)

    steps = 1e-30j * np.eye(n)

    def christoffel(x):
        # one batched complex-step pass: real part theta, imaginary parts d_j theta
        tc = _dexp_coframe(alg, x[None, :] + steps)
        th = tc[0].real
        E = np.linalg.inv(th)
        dth = tc.imag / 1e-30  # dth[j, c, k] = d_j theta^c_k
        inner = dth.transpose(1, 0, 2) + np.einsum("aj,bk,acb->cjk", th, th, G)
        return np.einsum("ic,cjk->ijk", E, inner)

    def ricci(x):
        th = _dexp_coframe(alg, x).real
        return th.T @ r_frame @ th

    return ChartConnection(n, christoffel, domain=lambda x: radius - np.linalg.norm(x),
                           ricci=ricci, name=f"lie:{alg.name}",
                           torsion_free=is_torsion_free(conn))


# -- atlases ---------------------------------------------------------------------


class Atlas(Protocol):
    def chart(self, idx: int) -> ChartConnection: ...

    def transfer(self, idx: int, x: np.ndarray) -> tuple[int, np.ndarray, np.ndarray]:
        """Return (new chart, new coordinates, Jacobian d new / d old) at an exit point."""
        ...


class LieGroupAtlas:
    """Left translates of one exponential chart; re-centres at each exit."""

    def __init__(self, conn: LeftInvariantConnection, radius: float = 1.0):
        self.conn = conn
        self.radius = radius
        self._chart = lie_exp_chart(conn, radius)

    def chart(self, idx):
        return self._chart

    def transfer(self, idx, x):
        th = _dexp_coframe(self.conn.algebra, x).real
        return idx + 1, np.zeros_like(x), th


class SingleChart:
    def __init__(self, conn: ChartConnection):
        self.conn = conn

    def chart(self, idx):
        return self.conn

    def transfer(self, idx, x):
        raise PoleHandling(f"left the only chart of {self.conn.name!r} at x={x}")


def as_atlas(obj) -> Atlas:
    if isinstance(obj, ChartConnection):
        return SingleChart(obj)
    return obj


# -- integration ------------------------------------------------------------------


@dataclass(frozen=True)
class ChartExit:
    t: float
    chart: int
    x: np.ndarray
    v: np.ndarray


@dataclass
class Segment:
    chart: int
    conn: ChartConnection
    sol: object
    t: np.ndarray
    y: np.ndarray

    @property
    def t0(self):
        return self.t[0]

    @property
    def t1(self):
        return self.t[-1]


@dataclass
class GeodesicTrajectory:
    """A geodesic, possibly spread over several charts of an atlas."""

    segments: list[Segment]
    dim: int
    source: object = None
    exit: ChartExit | None = None
    x0: np.ndarray | None = None
    v0: np.ndarray | None = None
    chart0: int = 0
    rtol: float = RTOL
    atol: float = ATOL

    @property
    def t(self) -> np.ndarray:
        return np.concatenate([s.t if i == 0 else s.t[1:] for i, s in enumerate(self.segments)])

    def _stack(self, sl):
        return np.concatenate([s.y[sl].T if i == 0 else s.y[sl].T[1:]
                               for i, s in enumerate(self.segments)])

    @property
    def x(self) -> np.ndarray:
        return self._stack(slice(0, self.dim))

    @property
    def v(self) -> np.ndarray:
        return self._stack(slice(self.dim, 2 * self.dim))

    @property
    def charts(self) -> np.ndarray:
        return np.concatenate([np.full(len(s.t) - (i > 0), s.chart)
                               for i, s in enumerate(self.segments)])

    @property
    def t_span(self):
        return self.segments[0].t0, self.segments[-1].t1

    def segment_at(self, t) -> Segment:
        for s in self.segments:
            if s.t0 <= t <= s.t1:
                return s
        raise ValueError(f"t={t} outside trajectory span {self.t_span}")

    def state(self, t):
        """(chart, x, v) at time t via dense output."""
        s = self.segment_at(t)
        y = s.sol(t)
        return s.chart, y[: self.dim], y[self.dim: 2 * self.dim]

    def full_state(self, t):
        s = self.segment_at(t)
        return s, s.sol(t)

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        n = self.dim
        w.writerow(["t", "chart"] + [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)])
        for t, c, x, v in zip(self.t, self.charts, self.x, self.v):
            w.writerow([f"{t:.12g}", int(c)] + [f"{a:.12g}" for a in x] + [f"{a:.12g}" for a in v])
        return buf.getvalue() if fh is None else ""


def _frame_complement(v, metric=None) -> np.ndarray:
    """Columns e_2..e_n completing v, orthonormal (for ``metric`` if given)."""
    n = len(v)
    g = np.eye(n) if metric is None else metric
    basis = [v / np.sqrt(v @ g @ v)]
    cand = list(np.eye(n))
    out = []
    for c in cand:
        w = c.astype(float)
        for b in basis:
            w = w - (b @ g @ w) * b
        nrm = np.sqrt(max(w @ g @ w, 0.0))
        if nrm > 1e-8:
            w = w / nrm
            basis.append(w)
            out.append(w)
        if len(out) == n - 1:
            break
    return np.array(out).T


def _make_rhs(conn: ChartConnection, n: int, mode: str):
    """mode: 'geo' (x, v), 'jac' (x, v, frame, a, a1)."""
    m = n - 1

    def rhs(t, y):
        x = y[:n]
        v = y[n:2 * n]
        G = conn.gamma(x)
        acc = -np.einsum("ijk,j,k->i", G, v, v)
        if mode == "geo":
            return np.concatenate((v, acc))
        Ef = y[2 * n:2 * n + n * m].reshape(n, m)
        a = y[2 * n + n * m:2 * n + n * m + m]
        a1 = y[2 * n + n * m + m:]
        dE = -np.einsum("ijk,j,kI->iI", G, v, Ef)
        R = conn.riemann(x)
        # w_J = R(e_J, v) v
        W = np.einsum("ijkl,j,kJ,l->iJ", R, v, Ef, v)
        coef = np.linalg.solve(np.column_stack((v, Ef)), W)
        M = -coef[1:]
        return np.concatenate((v, acc, dE.ravel(), a1, M @ a))

    return rhs


def _integrate(source, x0, v0, t_span, *, chart=0, extra=None, mode="geo",
               rtol=RTOL, atol=ATOL, max_transitions=10000, dense=True) -> GeodesicTrajectory:
    atlas = as_atlas(source)
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    n = len(x0)
    if not np.any(v0):
        raise DegenerateVelocity("initial velocity is zero")
    y = np.concatenate((x0, v0) + (() if extra is None else (extra,)))
    t, t_end = float(t_span[0]), float(t_span[1])
    idx = chart
    segments = []
    exit_ = None
    for _ in range(max_transitions):
        conn = atlas.chart(idx)
        if conn.margin(y[:n]) <= 0:
            raise PoleHandling(f"start point {y[:n]} lies outside chart {idx}")
        event = None
        if conn.domain is not None:
            def event(tt, yy, conn=conn):
                return conn.margin(yy[:n])
            event.terminal = True
            event.direction = -1
        sol = solve_ivp(_make_rhs(conn, n, mode), (t, t_end), y, method="DOP853",
                        rtol=rtol, atol=atol, dense_output=dense,
                        events=None if event is None else [event])
        if sol.status == -1:
            raise StepFailure(f"chart {idx}: {sol.message}")
        segments.append(Segment(idx, conn, sol.sol, sol.t, sol.y))
        if sol.status == 0:
            break
        t = float(sol.t[-1])
        y = sol.y[:, -1].copy()
        exit_ = ChartExit(t, idx, y[:n].copy(), y[n:2 * n].copy())
        if isinstance(atlas, SingleChart):
            break
        idx, xn, J = atlas.transfer(idx, y[:n])
        y[:n] = xn
        y[n:2 * n] = J @ y[n:2 * n]
        if mode == "jac":
            m = n - 1
            Ef = y[2 * n:2 * n + n * m].reshape(n, m)
            y[2 * n:2 * n + n * m] = (J @ Ef).ravel()
        exit_ = None
    else:
        raise PoleHandling("too many chart transitions")
    return GeodesicTrajectory(segments, n, source=source, exit=exit_, x0=x0, v0=v0,
                              chart0=chart, rtol=rtol, atol=atol)


def integrate_geodesic(source, x0, v0, t_span, *, chart: int = 0, rtol: float = RTOL,
                       atol: float = ATOL) -> GeodesicTrajectory:
    """Integrate x'' + Gamma(x', x') = 0.

    ``source`` is a ChartConnection or an atlas.  On a single chart the
    integration stops at the chart boundary and the exit state is kept in
    ``trajectory.exit``; an atlas hands over to its next chart instead.
    """
    return _integrate(source, x0, v0, t_span, chart=chart, rtol=rtol, atol=atol)


def geodesic_residual(traj: GeodesicTrajectory, h: float = 1e-3) -> float:
    """Max |x'' + Gamma(x', x')| at step midpoints.

    x'' comes from a fourth-order central difference of the dense-output
    velocity, so ``h`` should sit well inside one step.
    """
    n = traj.dim
    worst = 0.0
    for s in traj.segments:
        mids = 0.5 * (s.t[1:] + s.t[:-1])
        for tm, dt in zip(mids, np.diff(s.t)):
            hh = min(h, 0.2 * dt)
            v = [s.sol(tm + k * hh)[n:2 * n] for k in (-2, -1, 1, 2)]
            acc = (v[0] - 8 * v[1] + 8 * v[2] - v[3]) / (12 * hh)
            y = s.sol(tm)
            G = s.conn.gamma(y[:n])
            r = acc + np.einsum("ijk,j,k->i", G, y[n:2 * n], y[n:2 * n])
            worst = max(worst, float(np.max(np.abs(r))))
    return worst


# -- Ricci along a geodesic -------------------------------------------------------


@dataclass
class RicciProfile:
    """q(t) = Ric(x', x') sampled along a geodesic, with spline interpolation."""

    t: np.ndarray
    q: np.ndarray
    _spline: CubicSpline | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.t) >= 2:
            self._spline = CubicSpline(self.t, self.q)

    def __call__(self, t):
        if self._spline is None:
            return np.full_like(np.asarray(t, float), self.q[0])
        return self._spline(t)


def ricci_along(conn, traj: GeodesicTrajectory, *, max_dt: float = 0.02,
                method: str = "auto", step: float | None = None) -> RicciProfile:
    """Sample q(t) = Ric_ij(x) x'^i x'^j along ``traj``.

    ``conn`` may be None, in which case each segment's own chart connection
    is used (the normal case for multi-chart trajectories).
    """
    ts, qs = [], []
    for i, s in enumerate(traj.segments):
        c = s.conn if conn is None or len(traj.segments) > 1 else conn
        nsub = max(1, int(np.ceil((s.t1 - s.t0) / max_dt)))
        grid = np.linspace(s.t0, s.t1, nsub + 1)
        if i > 0:
            grid = grid[1:]
        for tt in grid:
            y = s.sol(tt)
            x, v = y[:traj.dim], y[traj.dim:2 * traj.dim]
            ts.append(tt)
            qs.append(float(v @ c.ricci_tensor(x, method, step) @ v))
    t = np.asarray(ts)
    keep = np.concatenate(([True], np.diff(t) > 1e-14))
    return RicciProfile(t[keep], np.asarray(qs)[keep])


# -- Jacobi fields --------------------------------------------------------------


@dataclass
class JacobiField:
    """Normal components a^I and their derivatives a^I_1 in a parallel frame."""

    trajectory: GeodesicTrajectory
    t: np.ndarray
    a: np.ndarray
    a1: np.ndarray
    zeros: list[tuple[int, float]]

    def at(self, t):
        s, y = self.trajectory.full_state(t)
        n = self.trajectory.dim
        m = n - 1
        off = 2 * n + n * m
        return y[off:off + m], y[off + m:]

    def frame_at(self, t):
        s, y = self.trajectory.full_state(t)
        n = self.trajectory.dim
        return s.chart, y[2 * n:2 * n + n * (n - 1)].reshape(n, n - 1)

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        m = self.a.shape[1]
        w.writerow(["t"] + [f"a{I + 2}" for I in range(m)] + [f"a{I + 2}_1" for I in range(m)]
                   + ["zero"])
        zero_ts = {}
        for I, tz in self.zeros:
            zero_ts.setdefault(round(tz, 12), []).append(I + 2)
        rows = [[t, list(a), list(a1), ""] for t, a, a1 in zip(self.t, self.a, self.a1)]
        for tz, comps in zero_ts.items():
            label = "|".join(f"a{c}" for c in comps)
            i = int(np.argmin(np.abs(self.t - tz)))
            if abs(self.t[i] - tz) < 1e-12:  # zero on a sample time: mark that row
                rows[i][3] = label
                continue
            a, a1 = self.at(tz)
            rows.append([tz, list(a), list(a1), label])
        rows.sort(key=lambda r: r[0])
        for t, a, a1, z in rows:
            w.writerow([f"{t:.12g}"] + [f"{x:.12g}" for x in a + a1] + [z])
        return buf.getvalue() if fh is None else ""


def _sign_change_roots(f, grid, xtol=1e-12):
    """Roots of scalar f bracketed by sign changes on ``grid`` (exact zeros kept)."""
    vals = np.array([f(t) for t in grid])
    roots = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            roots.append(float(grid[i]))
        elif vals[i] * vals[i + 1] < 0:
            roots.append(brentq(f, grid[i], grid[i + 1], xtol=xtol, rtol=4 * np.finfo(float).eps))
    if vals[-1] == 0.0:
        roots.append(float(grid[-1]))
    return roots


def integrate_jacobi(traj: GeodesicTrajectory, a0, a1_0, *, frame=None,
                     rtol: float | None = None, atol: float | None = None,
                     subdivide: int = 8) -> JacobiField:
    """Solve the Jacobi system along ``traj`` for a torsion-free connection.

    d a^I = a^I_1 dt,  d a^I_1 = K^I_J a^J dt,  K^I_J = -<R(e_J, v) v>^I,

    in a frame (v, e_2, ..., e_n) parallel along the geodesic.  The e_I
    start orthonormal (for the chart metric when one is attached).  Zeros of
    each a^I are located by sign change and Brent refinement.
    """
    n = traj.dim
    m = n - 1
    atlas = as_atlas(traj.source)
    conn0 = atlas.chart(traj.chart0)
    if not conn0.torsion_free:
        raise ValueError("Jacobi fields are only implemented for torsion-free connections")
    x0, v0 = traj.x0, traj.v0
    if frame is None:
        g = None if conn0.metric is None else conn0.metric(x0)
        frame = _frame_complement(v0, g)
    a0 = np.atleast_1d(np.asarray(a0, float))
    a1_0 = np.atleast_1d(np.asarray(a1_0, float))
    extra = np.concatenate((np.asarray(frame, float).ravel(), a0, a1_0))
    jt = _integrate(traj.source, x0, v0, traj.t_span, chart=traj.chart0, extra=extra,
                    mode="jac", rtol=rtol or traj.rtol, atol=atol or traj.atol)
    off = 2 * n + n * m
    t_all, a_all, a1_all, zeros = [], [], [], []
    for i, s in enumerate(jt.segments):
        sl = slice(1 if i else 0, None)
        t_all.append(s.t[sl])
        a_all.append(s.y[off:off + m, sl].T)
        a1_all.append(s.y[off + m:, sl].T)
        grid = np.linspace(s.t0, s.t1, subdivide * (len(s.t) - 1) + 1)
        for I in range(m):
            for r in _sign_change_roots(lambda tt, s=s, I=I: s.sol(tt)[off + I], grid):
                if not zeros or abs(r - zeros[-1][1]) > 1e-9 or zeros[-1][0] != I:
                    zeros.append((I, r))
    zeros.sort(key=lambda z: (z[1], z[0]))
    return JacobiField(jt, np.concatenate(t_all), np.concatenate(a_all),
                       np.concatenate(a1_all), zeros)


# -- geodesic curvature -----------------------------------------------------------


def _derivs(curve, t, h=1e-3):
    x = np.asarray(curve(t), float)
    pts = [np.asarray(curve(t + k * h), float) for k in (-2, -1, 1, 2)]
    d1 = (pts[0] - 8 * pts[1] + 8 * pts[2] - pts[3]) / (12 * h)
    d2 = (-pts[0] + 16 * pts[1] - 30 * x + 16 * pts[2] - pts[3]) / (12 * h * h)
    return x, d1, d2


def geodesic_curvature(conn: ChartConnection, curve, ts, h: float = 1e-3) -> np.ndarray:
    """Normal part of the covariant acceleration per unit squared speed.

    ``curve`` maps t to chart coordinates, or to a tuple (x, x', x'').  The
    result has shape (len(ts), n-1): coefficients on a complement of x'
    (orthonormal for the chart metric when available), divided by |x'|^2.
    """
    out = []
    for t in np.atleast_1d(ts):
        res = curve(t)
        if isinstance(res, tuple):
            x, d1, d2 = (np.asarray(r, float) for r in res)
        else:
            x, d1, d2 = _derivs(curve, t, h)
        g = None if conn.metric is None else conn.metric(x)
        speed2 = float(d1 @ (np.eye(len(x)) if g is None else g) @ d1)
        if speed2 <= 1e-24:
            raise DegenerateVelocity(f"velocity vanishes at t={t}")
        acc = d2 + np.einsum("ijk,j,k->i", conn.gamma(x), d1, d1)
        comp = _frame_complement(d1, g)
        coef = np.linalg.solve(np.column_stack((d1, comp)), acc)
        out.append(coef[1:] / speed2)
    return np.array(out)


# -- Weyl projective equivalence --------------------------------------------------


@dataclass
class WeylResult:
    equivalent: bool
    residual: float
    lam: np.ndarray  # one row of lambda_j per sample point


def _weyl_design(n: int) -> np.ndarray:
    M = np.zeros((n, n, n, n))  # M[i, j, k, m] = d(lambda_j delta^i_k + lambda_k delta^i_j)/d lambda_m
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if i == k:
                    M[i, j, k, j] += 1
                if i == j:
                    M[i, j, k, k] += 1
    return M.reshape(n ** 3, n)


def weyl_equivalence(conn_a: ChartConnection, conn_b: ChartConnection, points,
                     tol: float = 1e-8) -> WeylResult:
    """Least-squares fit Gamma_b - Gamma_a = lambda_j delta^i_k + lambda_k delta^i_j.

    Equivalent iff the residual is below ``tol`` (relative to the size of
    the Christoffel symbols) at every sample point.
    """
    n = conn_a.dim
    if conn_b.dim != n:
        raise ValueError("connections live on charts of different dimension")
    M = _weyl_design(n)
    lams, worst = [], 0.0
    for p in points:
        Ga, Gb = conn_a.gamma(p), conn_b.gamma(p)
        D = (Gb - Ga).ravel()
        lam, *_ = np.linalg.lstsq(M, D, rcond=None)
        scale = 1.0 + max(np.max(np.abs(Ga)), np.max(np.abs(Gb)))
        worst = max(worst, float(np.linalg.norm(M @ lam - D)) / scale)
        lams.append(lam)
    return WeylResult(worst < tol, worst, np.array(lams))


def weyl_shift(conn: ChartConnection, lam: Callable[[np.ndarray], np.ndarray] | Sequence[float],
               name: str = "") -> ChartConnection:
    """conn + (lambda_j delta^i_k + lambda_k delta^i_j) for a 1-form lambda(x)."""
    n = conn.dim
    lam_fn = lam if callable(lam) else (lambda x, c=np.asarray(lam, float): c)
    eye = np.eye(n)

    def christoffel(x):
        l = np.asarray(lam_fn(x), float)
        return conn.gamma(x) + np.einsum("j,ik->ijk", l, eye) + np.einsum("k,ij->ijk", l, eye)

    return ChartConnection(n, christoffel, domain=conn.domain, name=name or conn.name + "+weyl")
