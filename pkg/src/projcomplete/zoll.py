"""Zoll metrics on the 2-sphere built from an odd profile function.

g = (1+f(z))^2/(1-z^2) dz^2 + (1-z^2) dtheta^2.  The band chart (z, theta)
degenerates at the poles, so geodesics are integrated on an atlas of the
band |z| < 0.95 and two polar caps |z| > 0.9 with coordinates
(u, v) = sqrt(1-z^2) (cos theta, sin theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .geodesic_engine import (
    ChartConnection,
    GeodesicTrajectory,
    integrate_geodesic,
    integrate_jacobi,
    metric_connection,
)
from .ricci_oscillation import Certificate, CompletenessVerdict

BAND_LIMIT = 0.95
CAP_LIMIT = 0.9
PROFILE_FD_STEP = 1e-6
CLOSURE_TOL = 1e-5
ROUND_PERIOD = 2 * math.pi


class ProfileError(ValueError):
    """The profile is not an odd function into (-1, 1) vanishing at +-1."""


@dataclass(frozen=True)
class ZollProfile:
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    tol: float = 1e-10

    def __post_init__(self):
        z = np.linspace(-1, 1, 2001)
        fz = np.asarray(self.f(z), float)
        if not np.all(np.abs(fz[1:-1]) < 1):
            raise ProfileError(f"|f| reaches {np.max(np.abs(fz)):.6g} >= 1")
        if np.max(np.abs(fz + fz[::-1])) > self.tol:
            raise ProfileError("f is not odd")
        if max(abs(fz[0]), abs(fz[-1])) > self.tol:
            raise ProfileError("f(+-1) must vanish")

    def __call__(self, z):
        return self.f(np.asarray(z, float))

    def derivative(self, z):
        z = np.asarray(z, float)
        if self.df is not None:
            return self.df(z)
        h = PROFILE_FD_STEP
        return (self.f(z + h) - self.f(z - h)) / (2 * h)


def round_profile() -> ZollProfile:
    return ZollProfile(lambda z: np.zeros_like(z), lambda z: np.zeros_like(z), name="round")


def build_paper_profile(alpha: float, beta: float, z0: float) -> ZollProfile:
    """f = cos(pi z/2) exp(-alpha z^2) sin(2 atan(beta (z-z0)) + 2 atan(beta (z+z0)))."""
    if not (alpha > 0 and beta >= 0 and 0 < z0 < 1):
        raise ProfileError(f"need alpha > 0, beta >= 0, 0 < z0 < 1; got {alpha}, {beta}, {z0}")

    def parts(z):
        c = np.cos(np.pi * z / 2)
        e = np.exp(-alpha * z * z)
        s = 2 * np.arctan(beta * (z - z0)) + 2 * np.arctan(beta * (z + z0))
        return c, e, s

    def f(z):
        c, e, s = parts(z)
        return c * e * np.sin(s)

    def df(z):
        c, e, s = parts(z)
        dc = -np.pi / 2 * np.sin(np.pi * z / 2)
        de = -2 * alpha * z * e
        ds = 2 * beta / (1 + (beta * (z - z0)) ** 2) + 2 * beta / (1 + (beta * (z + z0)) ** 2)
        return (dc * e + c * de) * np.sin(s) + c * e * np.cos(s) * ds

    return ZollProfile(f, df, name="paper", params=dict(alpha=alpha, beta=beta, z0=z0))


def get_profile(name: str, **params) -> ZollProfile:
    if name == "round":
        return round_profile()
    if name == "paper":
        return build_paper_profile(params.get("alpha", 1.0), params.get("beta", 0.25),
                                   params.get("z0", 0.5))
    raise KeyError(f"unknown profile {name!r}; known: round, paper")


@dataclass(frozen=True)
class ZollMetric:
    profile: ZollProfile

    def g_zz(self, z):
        z = np.asarray(z, float)
        return (1 + self.profile(z)) ** 2 / (1 - z * z)

    def g_tt(self, z):
        z = np.asarray(z, float)
        return 1 - z * z

    def dg_zz(self, z):
        z = np.asarray(z, float)
        f, df = self.profile(z), self.profile.derivative(z)
        w = 1 - z * z
        return (2 * (1 + f) * df * w + 2 * z * (1 + f) ** 2) / (w * w)

    # -- pole-regular pieces for the cap charts: g = delta + phi(s) u u^T ----

    def _H(self, z, w):
        """H = (2f + f^2)/(1-z^2) and its z-derivative, w = 1 - z^2."""
        f, df = float(self.profile(z)), float(self.profile.derivative(z))
        if w < 1e-14:
            sign = 1.0 if z > 0 else -1.0
            return -sign * df, 0.0
        H = (2 * f + f * f) / w
        dH = 2 * df * (1 + f) / w + 2 * z * (2 * f + f * f) / (w * w)
        return H, dH

    def cap_metric(self, sign: float):
        def z_of(x):
            s = x[0] ** 2 + x[1] ** 2
            return sign * math.sqrt(max(1 - s, 0.0)), s

        def metric(x):
            z, s = z_of(x)
            H, _ = self._H(z, s)
            return np.eye(2) + (1 + H) / (z * z) * np.outer(x, x)

        def dmetric(x):
            z, s = z_of(x)
            H, dH = self._H(z, s)
            phi = (1 + H) / (z * z)
            # d phi / ds with dz/ds = -1/(2z)
            dphi = dH * (-1 / (2 * z)) / (z * z) + (1 + H) / z ** 4
            eye = np.eye(2)
            return (phi * (np.einsum("ac,b->abc", eye, x) + np.einsum("bc,a->abc", eye, x))
                    + 2 * dphi * np.einsum("a,b,c->abc", x, x, x))

        return metric, dmetric


def gauss_curvature(metric: ZollMetric, z):
    """kappa = (f + 1 - z f')/(f + 1)^3."""
    z = np.asarray(z, float)
    f = metric.profile(z)
    return (f + 1 - z * metric.profile.derivative(z)) / (f + 1) ** 3


def brioschi_curvature(E: Callable, G: Callable, z, h: float = 1e-4):
    """Curvature of E(z) dz^2 + G(z) dtheta^2 from finite differences of E, G.

    For a diagonal metric independent of theta the Brioschi formula reduces
    to K = -(1/(2 sqrt(EG))) d/dz (G_z / sqrt(EG)).
    """
    z = np.asarray(z, float)

    def flux(x):
        Gz = (G(x + h) - G(x - h)) / (2 * h)
        return Gz / np.sqrt(E(x) * G(x))

    dflux = (flux(z + h) - flux(z - h)) / (2 * h)
    return -dflux / (2 * np.sqrt(E(z) * G(z)))


def _surface_curvature(g, z_of, metric: ZollMetric) -> dict:
    """Analytic Ricci and Riemann of a surface: Ric = kappa g, R = kappa (d^i_k g_lj - d^i_l g_kj)."""
    eye = np.eye(2)

    def ricci(x):
        return float(gauss_curvature(metric, z_of(x))) * g(x)

    def curvature(x):
        gx = g(x)
        R = np.einsum("ik,lj->ijkl", eye, gx) - np.einsum("il,kj->ijkl", eye, gx)
        return float(gauss_curvature(metric, z_of(x))) * R

    return dict(ricci=ricci, curvature=curvature)


# -- atlas -------------------------------------------------------------------------

BAND, NORTH, SOUTH = 0, 1, 2


class ZollAtlas:
    """Band (z, theta) plus two polar caps (u, v)."""

    def __init__(self, metric: ZollMetric):
        self.metric = metric
        m = metric

        def band_metric(x):
            return np.diag([float(m.g_zz(x[0])), float(m.g_tt(x[0]))])

        def band_dmetric(x):
            d = np.zeros((2, 2, 2))
            d[0, 0, 0] = float(m.dg_zz(x[0]))
            d[1, 1, 0] = -2 * x[0]
            return d

        self._charts = {
            BAND: metric_connection(2, band_metric, band_dmetric,
                                    domain=lambda x: BAND_LIMIT - abs(x[0]), name="zoll-band",
                                    **_surface_curvature(band_metric, lambda x: x[0], m)),
        }
        cap_s = 1 - CAP_LIMIT ** 2
        for idx, sign in ((NORTH, 1.0), (SOUTH, -1.0)):
            g, dg = metric.cap_metric(sign)

            def z_of(x, sign=sign):
                return sign * math.sqrt(max(1 - x[0] ** 2 - x[1] ** 2, 0.0))

            self._charts[idx] = metric_connection(
                2, g, dg, domain=lambda x: cap_s - (x[0] ** 2 + x[1] ** 2),
                name="zoll-north" if sign > 0 else "zoll-south",
                **_surface_curvature(g, z_of, m))

    def chart(self, idx):
        return self._charts[idx]

    def transfer(self, idx, x):
        if idx == BAND:
            z, th = x
            rho = math.sqrt(1 - z * z)
            c, s = math.cos(th), math.sin(th)
            J = np.array([[-z / rho * c, -rho * s], [-z / rho * s, rho * c]])
            return (NORTH if z > 0 else SOUTH), np.array([rho * c, rho * s]), J
        u, v = x
        s = u * u + v * v
        z = (1.0 if idx == NORTH else -1.0) * math.sqrt(1 - s)
        J = np.array([[-u / z, -v / z], [-v / s, u / s]])
        return BAND, np.array([z, math.atan2(v, u)]), J

    # -- embedding into the unit sphere ------------------------------------------

    def embed(self, idx, x, v):
        """Point and velocity in R^3 for the round embedding."""
        if idx == BAND:
            z, th = x
            rho = math.sqrt(1 - z * z)
            c, s = math.cos(th), math.sin(th)
            P = np.array([rho * c, rho * s, z])
            dP = np.array([[-z / rho * c, -rho * s], [-z / rho * s, rho * c], [1.0, 0.0]])
        else:
            u, w = x
            z = (1.0 if idx == NORTH else -1.0) * math.sqrt(max(1 - u * u - w * w, 0.0))
            P = np.array([u, w, z])
            dP = np.array([[1.0, 0.0], [0.0, 1.0], [-u / z, -w / z]])
        return P, dP @ np.asarray(v, float)

    def clairaut(self, idx, x, v):
        """Angular momentum (1-z^2) theta' = u v' - v u'."""
        if idx == BAND:
            return (1 - x[0] ** 2) * v[1]
        return x[0] * v[1] - x[1] * v[0]

    def unit_initial(self, z, theta, direction):
        """Band-chart initial data with the velocity scaled to unit length.

        ``direction`` is the angle from the eastward (increasing theta)
        direction, measured in an orthonormal frame.
        """
        if abs(z) >= BAND_LIMIT:
            raise ValueError(f"start at |z| < {BAND_LIMIT}")
        ez = 1 / math.sqrt(float(self.metric.g_zz(z)))
        et = 1 / math.sqrt(float(self.metric.g_tt(z)))
        v = np.array([math.sin(direction) * ez, math.cos(direction) * et])
        return np.array([z, theta], float), v


def zoll_atlas(profile: ZollProfile | str = "paper", **params) -> ZollAtlas:
    if isinstance(profile, str):
        profile = get_profile(profile, **params)
    return ZollAtlas(ZollMetric(profile))


# -- closure ---------------------------------------------------------------------


@dataclass
class Closure:
    closed: bool
    period: float | None
    phase_error: float
    trajectory: GeodesicTrajectory
    x0: np.ndarray
    v0: np.ndarray
    clairaut_drift: float = float("nan")


def _phase(atlas, traj, t):
    idx, x, v = traj.state(t)
    return atlas.embed(idx, x, v)


def zoll_geodesic_closure(atlas: ZollAtlas, z: float, theta: float, direction: float,
                          tol: float = CLOSURE_TOL, *, max_periods: float = 4.0,
                          rtol: float = 1e-11, atol: float = 1e-11, dt: float = 0.01) -> Closure:
    """Integrate a unit-speed geodesic and look for its first return in phase space.

    The phase distance is |P - P0| + |V - V0| in the round embedding; a
    return time is the root of (P - P0).V next to a sampled local minimum.
    """
    x0, v0 = atlas.unit_initial(z, theta, direction)
    t_max = max_periods * ROUND_PERIOD
    traj = integrate_geodesic(atlas, x0, v0, (0.0, t_max), rtol=rtol, atol=atol)
    P0, V0 = atlas.embed(BAND, x0, v0)

    def dist(t):
        P, V = _phase(atlas, traj, t)
        return float(np.linalg.norm(P - P0) + np.linalg.norm(V - V0))

    def radial(t):
        P, V = _phase(atlas, traj, t)
        return float((P - P0) @ V)

    ts = np.arange(0.5, t_max + dt / 2, dt)
    ds = np.array([dist(t) for t in ts])
    L0 = atlas.clairaut(BAND, x0, v0)
    drift = max(abs(atlas.clairaut(*traj.state(t)) - L0) for t in ts[::10])
    best = math.inf
    for i in range(1, len(ts) - 1):
        if not (ds[i] <= ds[i - 1] and ds[i] <= ds[i + 1] and ds[i] < 0.1):
            continue
        a, b = ts[i - 1], ts[i + 1]
        if radial(a) * radial(b) < 0:
            tr = brentq(radial, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        else:
            tr = ts[i]
        err = dist(tr)
        best = min(best, err)
        if err < tol:
            return Closure(True, tr, err, traj, x0, v0, drift)
    return Closure(False, None, best, traj, x0, v0, drift)


def jacobi_zero_completeness(atlas: ZollAtlas, closure: Closure, *, a1_0: float = 1.0,
                             geodesic_id: str = "") -> CompletenessVerdict:
    """Completeness of a closed geodesic from a Jacobi field vanishing at its start.

    The field with a(0) = 0, a'(0) = a1_0 is integrated over one period;
    a nonzero field with a zero on a periodic geodesic has infinitely many
    zeros, which certifies completeness.  A zero field is no certificate.
    """
    if not closure.closed:
        raise ValueError("geodesic was not verified closed")
    T = closure.period
    window = (0.0, T)
    traj = integrate_geodesic(atlas, closure.x0, closure.v0, window,
                              rtol=closure.trajectory.rtol, atol=closure.trajectory.atol)
    jf = integrate_jacobi(traj, [0.0], [a1_0])
    if a1_0 == 0.0 or float(np.max(np.abs(jf.a))) == 0.0:
        return CompletenessVerdict(geodesic_id, window, 0, None, "undetermined", None,
                                   ["zero Jacobi field is not a certificate"])
    # the field lives on the closed curve only if it vanishes again after one period
    aT, _ = jf.at(T)
    scale = float(np.max(np.abs(jf.a)))
    interior = [t for _, t in jf.zeros if 1e-8 < t < T - 1e-6]
    if abs(float(aT[0])) > CLOSURE_TOL * scale:
        return CompletenessVerdict(geodesic_id, window, len(interior) + 1, None, "undetermined",
                                   None, [f"Jacobi field does not close up: a(T) = {aT[0]:.3g}"])
    zeros = [0.0] + interior + [T]
    cert = Certificate("jacobi", window=window,
                       detail="zeros at " + " ".join(f"{t:.6g}" for t in zeros))
    return CompletenessVerdict(geodesic_id, window, len(zeros), None, "complete", cert,
                               ["periodic geodesic with a vanishing Jacobi field"])
