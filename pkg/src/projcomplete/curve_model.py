"""Flat projective geometry of curves.

Infinitesimal symmetries and their invariant B(X), zero orders, the phi
chart of the universal cover of RP^1, and the Kuiper classification of
projective connections on curves with its completeness verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import AmbiguousZero, InvalidMonodromy, StepFailure, ZeroLemmaViolation

B_BAND = 1e-9


def _zero(t):
    return 0.0


@dataclass(frozen=True)
class CurveGauge:
    """Coframe data along a curve with omega^1 = dt."""

    gamma11: Callable[[float], float] = _zero
    omega1: Callable[[float], float] = _zero

    @classmethod
    def affine(cls) -> "CurveGauge":
        return cls()


@dataclass(frozen=True)
class SymmetryState:
    X1: float      # X^1
    X11: float     # X^1_1
    X_1: float     # X_1

    def as_array(self):
        return np.array([self.X1, self.X11, self.X_1], float)


def killing_invariant(X1, X11, X_1):
    """B(X) = 2 X_1 X^1 + (X^1_1)^2 / 2 (vectorised)."""
    return 2 * X_1 * X1 + 0.5 * X11 ** 2


def classify_symmetry(state: SymmetryState, band: float = B_BAND) -> str:
    s = state.as_array()
    if not np.any(s):
        return "zero"
    B = killing_invariant(*s)
    if B < -band:
        return "elliptic"
    if B > band:
        return "hyperbolic"
    return "parabolic"


@dataclass
class SymmetryTrajectory:
    gauge: CurveGauge
    init: SymmetryState
    t: np.ndarray
    X: np.ndarray  # rows (X^1, X^1_1, X_1)
    sol: object

    def __call__(self, t):
        return self.sol(t)

    @property
    def B(self) -> np.ndarray:
        return killing_invariant(*self.X.T)

    def drift(self) -> float:
        return float(np.max(np.abs(self.B - self.B[0])))

    @property
    def kind(self) -> str:
        return classify_symmetry(self.init)


def integrate_symmetry(gauge: CurveGauge, init: SymmetryState, t_span, *, t0: float | None = None,
                       rtol: float = 1e-12, atol: float = 1e-12,
                       n_samples: int = 2001) -> SymmetryTrajectory:
    """Solve the infinitesimal-symmetry system along a curve.

    dX^1 = X^1_1 - X^1 g,  dX^1_1 = 2 X^1 w - 2 X_1,  dX_1 = X_1 g - X^1_1 w
    with g = gamma^1_1(t), w = omega_1(t).  ``init`` is the state at ``t0``
    (default t = 0 if the window contains it, else the left end); the
    solution covers all of ``t_span``.
    """
    a, b = map(float, t_span)
    if t0 is None:
        t0 = 0.0 if a <= 0.0 <= b else a
    t0 = float(t0)

    def rhs(t, X):
        g, w = gauge.gamma11(t), gauge.omega1(t)
        return [X[1] - X[0] * g, 2 * X[0] * w - 2 * X[2], X[2] * g - X[1] * w]

    y0 = init.as_array()
    pieces = []
    for end in (a, b):
        if end == t0:
            continue
        res = solve_ivp(rhs, (t0, end), y0, method="DOP853", rtol=rtol, atol=atol,
                        dense_output=True)
        if res.status != 0:
            raise StepFailure(res.message)
        pieces.append(res.sol)

    def sol(t):
        t = np.asarray(t, float)
        out = np.empty((3,) + t.shape)
        left = t < t0
        for piece in pieces:
            lo, hi = sorted((piece.t_min, piece.t_max))
            m = (t >= lo) & (t <= hi) & ((~left) if hi > t0 else left | (t == t0))
            if np.any(m):
                out[:, m] = piece(t[m])
        if not pieces:
            out[:] = y0.reshape((3,) + (1,) * t.ndim)
        return out

    ts = np.linspace(a, b, n_samples)
    return SymmetryTrajectory(gauge, init, ts, sol(ts).T, sol)


@dataclass(frozen=True)
class Zero:
    t: float
    order: int


def zero_order_audit(traj: SymmetryTrajectory, *, zero_tol: float = 1e-7,
                     slope_tol: float = 1e-5, merge: float = 1e-4) -> list[Zero]:
    """Locate zeros of X^1 and their orders.

    Simple zeros show up as sign changes; double zeros as extrema of X^1
    where it (nearly) vanishes.  Order 1 if X^1_1 != 0 at the zero, order 2
    if X^1_1 = 0 and X_1 != 0.  Tolerances are relative to the size of the
    state along the window.  Elliptic symmetries must have no zeros, and
    zeros of the others must have the order the zero lemma predicts;
    violations raise ZeroLemmaViolation.
    """
    t = traj.t
    X = traj.X
    scale = max(1.0, float(np.max(np.abs(X))))
    f = lambda s: traj.sol(s)[0]
    # dX^1/dt along the solution
    g = traj.gauge
    df = lambda s: traj.sol(s)[1] - traj.sol(s)[0] * np.vectorize(g.gamma11)(s)

    cands = []
    x1 = X[:, 0]
    for i in range(len(t) - 1):
        if x1[i] == 0.0:
            cands.append(t[i])
        elif x1[i] * x1[i + 1] < 0:
            cands.append(brentq(f, t[i], t[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps))
    d = df(t)
    for i in range(len(t) - 1):
        if d[i] * d[i + 1] < 0 or d[i] == 0.0:
            te = t[i] if d[i] == 0.0 else brentq(df, t[i], t[i + 1], xtol=1e-14)
            if abs(f(te)) <= zero_tol * scale:
                cands.append(te)
    if x1[-1] == 0.0:
        cands.append(t[-1])
    cands.sort()

    zeros: list[Zero] = []
    group: list[float] = []
    for c in cands + [math.inf]:
        if group and c - group[-1] > merge:
            tz = float(np.mean(group)) if len(group) > 1 else group[0]
            X1, X11, X_1 = traj.sol(tz)
            if abs(X11) > slope_tol * scale and len(group) == 1:
                order = 1
            elif abs(X_1) > slope_tol * scale:
                order = 2
            else:
                raise AmbiguousZero(f"all components vanish near t={tz:.6g}")
            zeros.append(Zero(float(tz), order))
            group = []
        group.append(c)

    kind = traj.kind
    if kind == "elliptic" and zeros:
        raise ZeroLemmaViolation(f"elliptic symmetry has zeros at {[z.t for z in zeros]}")
    expected = {"hyperbolic": 1, "parabolic": 2}.get(kind)
    for z in zeros:
        if expected is not None and z.order != expected:
            raise ZeroLemmaViolation(f"{kind} symmetry has a zero of order {z.order} at t={z.t:.6g}")
    return zeros


# -- the universal cover of RP^1 ----------------------------------------------------


def phi_to_x(phi: float) -> float:
    """Affine coordinate x = cot(phi) of a point of the universal cover."""
    r = math.fmod(phi, math.pi)
    if r <= 0:
        r += math.pi
    if r == math.pi:
        return math.inf
    return math.cos(r) / math.sin(r)


def x_to_phi(x: float, branch: int = 0) -> tuple[int, float]:
    """Lift x to (branch, phi) with phi in (0, pi]; x = inf maps to phi = pi."""
    if math.isinf(x):
        return branch, math.pi
    return branch, math.pi / 2 - math.atan(x)


def lift(branch: int, phi: float) -> float:
    """Global coordinate Phi = branch * pi + phi on the universal cover."""
    return branch * math.pi + phi


def unlift(Phi: float) -> tuple[int, float]:
    k = math.ceil(Phi / math.pi) - 1
    phi = Phi - k * math.pi
    if phi <= 0:
        k -= 1
        phi += math.pi
    return k, phi


# -- Kuiper classification --------------------------------------------------------


@dataclass(frozen=True)
class Monodromy:
    """Symbolic holonomy around a closed curve, lifted to the universal cover.

    kind ``rot``: phi -> phi + theta.  ``trans``: x -> x + s composed with
    n deck translations.  ``dil``: x -> r x composed with n deck translations.
    """

    kind: str
    value: float
    winding: int = 0

    @classmethod
    def parse(cls, text: str) -> "Monodromy":
        parts = text.split(":")
        if parts[0] not in ("rot", "trans", "dil") or len(parts) not in (2, 3):
            raise ValueError(f"bad monodromy {text!r}; use rot:THETA, trans:S[:N] or dil:R[:N]")
        n = int(parts[2]) if len(parts) == 3 else 0
        if parts[0] == "rot" and len(parts) == 3:
            raise ValueError("rot takes no winding")
        return cls(parts[0], float(parts[1]), n)

    def fixed_points(self):
        """Fixed points of the lift, as a predicate on Phi, or None if there are none."""
        if self.kind == "rot":
            return None if self.value != 0 else (lambda Phi: True)
        if self.winding != 0:
            return None
        if self.kind == "trans":   # fixes exactly the infinities Phi = k pi
            return lambda Phi: abs(Phi / math.pi - round(Phi / math.pi)) < 1e-12
        # dil: fixes the zeros and infinities Phi = k pi / 2
        return lambda Phi: abs(2 * Phi / math.pi - round(2 * Phi / math.pi)) < 1e-12


@dataclass(frozen=True)
class CurveClass:
    kind: str                 # elliptic | parabolic | hyperbolic
    topology: str             # open | closed
    subtype: int | None       # 1 | 2 | None
    invariant: float | None   # theta or r
    winding: int | None
    complete: bool

    CSV_HEADER = ("kind", "topology", "subtype", "invariant", "winding", "complete")

    def csv_row(self) -> str:
        fields = [self.kind, self.topology,
                  "none" if self.subtype is None else str(self.subtype),
                  "" if self.invariant is None else f"{self.invariant:.12g}",
                  "" if self.winding is None else str(self.winding),
                  "true" if self.complete else "false"]
        return ",".join(fields)


def completeness_rule(kind: str, topology: str, subtype) -> bool:
    return kind == "elliptic" or (topology == "closed" and subtype == 2)


COVERS = {
    "full": (-math.inf, math.inf),
    "chart": (0.0, math.pi),          # one affine line between consecutive infinities
    "half": (0.0, math.pi / 2),       # x in (0, inf)
}


def classify_curve_connection(interval, monodromy: Monodromy | None = None) -> CurveClass:
    """Classify a projective connection on a curve from its development.

    ``interval`` is (Phi_left, Phi_right) in the global coordinate of the
    universal cover (infinite ends allowed), or one of 'full', 'chart',
    'half'.  Closed curves pass their monodromy; open curves pass None.
    """
    if isinstance(interval, str):
        interval = COVERS[interval]
    lo, hi = map(float, interval)
    if not lo < hi:
        raise ValueError(f"empty interval {interval}")
    bounded = (math.isfinite(lo), math.isfinite(hi))

    if monodromy is None:
        if not any(bounded):
            return CurveClass("elliptic", "open", None, None, None, True)
        if not all(bounded):
            return CurveClass("parabolic", "open", 2, None, None, False)
        length = (hi - lo) / math.pi
        k = round(length)
        if abs(length - k) < 1e-12:
            return CurveClass("parabolic", "open", 1, None, k, False)
        return CurveClass("hyperbolic", "open", None, None, math.floor(length), False)

    m = monodromy
    fixed = m.fixed_points()
    if m.kind == "rot" and m.value == 0:
        raise InvalidMonodromy("identity monodromy fixes every point")
    if m.kind == "trans" and m.value == 0:
        raise InvalidMonodromy("translation by 0 fixes every point")
    if m.kind == "dil" and (m.value <= 0 or m.value == 1):
        raise InvalidMonodromy("dilation factor must be positive and different from 1")
    if m.winding < 0:
        raise InvalidMonodromy("winding must be non-negative")

    if not any(bounded):
        if fixed is not None:
            raise InvalidMonodromy(f"{m.kind} without winding fixes interior points of the full cover")
        if m.kind == "rot":
            return CurveClass("elliptic", "closed", None, m.value, None, True)
        if m.kind == "trans":
            return CurveClass("parabolic", "closed", 2, None, m.winding, True)
        r = m.value if m.value > 1 else 1 / m.value
        return CurveClass("hyperbolic", "closed", 2, r, m.winding, True)

    if not all(bounded):
        raise InvalidMonodromy("a closed curve cannot develop onto a half-infinite interval")
    if fixed is None:
        raise InvalidMonodromy(f"{m.kind} monodromy moves the endpoints of a bounded interval")
    if not (fixed(lo) and fixed(hi)):
        raise InvalidMonodromy("interval endpoints must be fixed by the monodromy")
    step = math.pi if m.kind == "trans" else math.pi / 2
    if hi - lo > step * (1 + 1e-12):
        raise InvalidMonodromy("the monodromy fixes a point in the interior of the interval")
    if m.kind == "trans":
        return CurveClass("parabolic", "closed", 1, None, 0, False)
    r = m.value if m.value > 1 else 1 / m.value
    return CurveClass("hyperbolic", "closed", 1, r, 0, False)
