"""Left-invariant affine and projective connections on Lie groups.

Everything here is computed from structure constants alone.  Storage
conventions used throughout the module:

* ``c[i, j, k]`` is the structure constant c^k_{ij}, i.e. [e_i, e_j] = c^k_{ij} e_k.
* ``gamma[a, c, b]`` is the matrix entry (c, b) of Gamma(e_a) in gl(h), so that
  nabla_{e_a} e_b = gamma[a, c, b] e_c.
* ``ad(A)[k, j]`` is the matrix of ad_A, ad_A e_j = ad(A)[k, j] e_k.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

VALIDATION_TOL = 1e-9


class InvalidStructureConstants(ValueError):
    """Raised when structure constants fail antisymmetry or the Jacobi identity."""


@dataclass(frozen=True)
class StructureConstants:
    c: np.ndarray
    name: str = ""
    tol: float = VALIDATION_TOL

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.ndim != 3 or len(set(c.shape)) != 1:
            raise InvalidStructureConstants(f"expected an n x n x n array, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        validate_structure_constants(c, self.tol)

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    def bracket(self, A, B) -> np.ndarray:
        return np.einsum("ijk,i,j->k", self.c, A, B)

    def ad(self, A) -> np.ndarray:
        return np.einsum("ijk,i->kj", self.c, A)

    def ad_basis(self) -> np.ndarray:
        """Stack of ad_{e_i} matrices, shape (n, n, n)."""
        return np.transpose(self.c, (0, 2, 1)).copy()


def validate_structure_constants(c: np.ndarray, tol: float = VALIDATION_TOL) -> None:
    scale = max(1.0, float(np.max(np.abs(c)))) if c.size else 1.0
    anti = np.max(np.abs(c + np.transpose(c, (1, 0, 2)))) if c.size else 0.0
    if anti > tol * scale:
        raise InvalidStructureConstants(f"antisymmetry violated by {anti:.3e}")
    # sum_m c^m_{ij} c^l_{mk} + cyclic(i, j, k)
    t = np.einsum("ijm,mkl->ijkl", c, c)
    jac = t + np.transpose(t, (1, 2, 0, 3)) + np.transpose(t, (2, 0, 1, 3))
    worst = np.max(np.abs(jac)) if jac.size else 0.0
    if worst > tol * scale**2:
        raise InvalidStructureConstants(f"Jacobi identity violated by {worst:.3e}")


def _from_entries(dim: int, entries, name: str = "") -> StructureConstants:
    """Build from (i, j, k, value) entries meaning c^k_{ij} = value (0-based).

    The antisymmetric partner c^k_{ji} is filled in unless listed explicitly.
    """
    c = np.zeros((dim, dim, dim))
    given = set()
    for i, j, k, val in entries:
        c[i, j, k] = val
        given.add((i, j, k))
    for i, j, k in list(given):
        if (j, i, k) not in given:
            c[j, i, k] = -c[i, j, k]
    return StructureConstants(c, name=name)


def so3() -> StructureConstants:
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[j, i, k] = -1.0
    return StructureConstants(eps, name="so3")


def sl2() -> StructureConstants:
    """Basis (H, E, F) with [H,E]=2E, [H,F]=-2F, [E,F]=H."""
    H, E, F = 0, 1, 2
    return _from_entries(3, [(H, E, E, 2.0), (H, F, F, -2.0), (E, F, H, 1.0)], name="sl2")


def heisenberg() -> StructureConstants:
    return _from_entries(3, [(0, 1, 2, 1.0)], name="heisenberg")


def abelian(n: int = 3) -> StructureConstants:
    return StructureConstants(np.zeros((n, n, n)), name=f"abelian{n}")


REGISTRY = {
    "so3": so3,
    "sl2": sl2,
    "heisenberg": heisenberg,
    "abelian": abelian,
}

# Matrix realisation of the sl2 basis (H, E, F), used for group-level flows.
SL2_MATRICES = np.array([
    [[1.0, 0.0], [0.0, -1.0]],
    [[0.0, 1.0], [0.0, 0.0]],
    [[0.0, 0.0], [1.0, 0.0]],
])


def get_algebra(name: str) -> StructureConstants:
    """Look up a registry algebra; ``abelianN`` gives the n-dimensional abelian algebra."""
    if name in REGISTRY:
        return REGISTRY[name]()
    if name.startswith("abelian") and name[7:].isdigit():
        return abelian(int(name[7:]))
    raise KeyError(f"unknown algebra {name!r}; known: {sorted(REGISTRY)} or abelianN")


def load_algebra(path, name: str | None = None) -> StructureConstants:
    """Read an algebra from a text file.

    Format: a ``dim n`` line, then one ``i j k value`` line per nonzero
    c^k_{ij} (1-based indices).  ``#`` starts a comment.
    """
    path = Path(path)
    dim = None
    entries = []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "dim":
            dim = int(parts[1])
            continue
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 'i j k value', got {raw!r}")
        i, j, k = (int(p) - 1 for p in parts[:3])
        entries.append((i, j, k, float(parts[3])))
    if dim is None:
        raise ValueError(f"{path}: missing 'dim n' line")
    for i, j, k, _ in entries:
        if not all(0 <= idx < dim for idx in (i, j, k)):
            raise ValueError(f"{path}: index out of range 1..{dim}")
    return _from_entries(dim, entries, name=name or path.stem)


def killing_form(alg: StructureConstants) -> np.ndarray:
    """B_ij = sum_{k,l} c^k_{il} c^l_{jk} = tr(ad_{e_i} ad_{e_j})."""
    c = alg.c
    return np.einsum("ilk,jkl->ij", c, c)


# -- left-invariant connections ------------------------------------------------


@dataclass(frozen=True)
class LeftInvariantConnection:
    algebra: StructureConstants
    gamma: np.ndarray
    name: str = ""

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float)
        n = self.algebra.dim
        if g.shape != (n, n, n):
            raise ValueError(f"gamma must have shape {(n, n, n)}, got {g.shape}")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)

    @property
    def dim(self) -> int:
        return self.algebra.dim

    def of(self, A) -> np.ndarray:
        """Gamma(A) as an n x n matrix."""
        return np.einsum("a,acb->cb", _vec(A, self.dim), self.gamma)

    @classmethod
    def scaled_ad(cls, alg: StructureConstants, p: float = 0.5, S=None) -> "LeftInvariantConnection":
        """Gamma = p ad + S, with S[a, c, b] the optional extra term."""
        g = p * alg.ad_basis()
        if S is not None:
            g = g + np.asarray(S, dtype=float)
        return cls(alg, g, name=f"{p}ad" + ("+S" if S is not None else ""))

    @classmethod
    def zero(cls, alg: StructureConstants) -> "LeftInvariantConnection":
        n = alg.dim
        return cls(alg, np.zeros((n, n, n)), name="zero")


def _vec(A, n: int) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.shape != (n,):
        raise ValueError(f"expected a vector of length {n}, got shape {A.shape}")
    return A


def symmetric_tensor(S) -> np.ndarray:
    """Symmetrise S[a, c, b] (meaning S(e_a) e_b has component c) in (a, b)."""
    S = np.asarray(S, dtype=float)
    return 0.5 * (S + np.transpose(S, (2, 1, 0)))


def connection_torsion(conn: LeftInvariantConnection, A, B) -> np.ndarray:
    """T(A,B) = Gamma(A)B - Gamma(B)A - [A,B]."""
    n = conn.dim
    A, B = _vec(A, n), _vec(B, n)
    return conn.of(A) @ B - conn.of(B) @ A - conn.algebra.bracket(A, B)


def torsion_tensor(conn: LeftInvariantConnection) -> np.ndarray:
    """T[a, b, k] = k-th component of T(e_a, e_b)."""
    g = conn.gamma
    return np.einsum("akb->abk", g) - np.einsum("bka->abk", g) - conn.algebra.c


def is_torsion_free(conn: LeftInvariantConnection, tol: float = 1e-10) -> bool:
    return bool(np.max(np.abs(torsion_tensor(conn)), initial=0.0) <= tol)


def connection_curvature(conn: LeftInvariantConnection, A, B) -> np.ndarray:
    """kappa(A,B) = [Gamma(A), Gamma(B)] - Gamma([A,B])."""
    n = conn.dim
    A, B = _vec(A, n), _vec(B, n)
    GA, GB = conn.of(A), conn.of(B)
    return GA @ GB - GB @ GA - conn.of(conn.algebra.bracket(A, B))


def curvature_tensor(conn: LeftInvariantConnection) -> np.ndarray:
    """K[i, j, k, l] = entry (i, j) of kappa(e_k, e_l)."""
    n = conn.dim
    eye = np.eye(n)
    K = np.empty((n, n, n, n))
    for k in range(n):
        for l in range(n):
            K[:, :, k, l] = connection_curvature(conn, eye[k], eye[l])
    return K


def symmetrized_ricci(conn: LeftInvariantConnection) -> np.ndarray:
    """K_jl = (K^i_{jil} + K^i_{lij}) / 2."""
    K = curvature_tensor(conn)
    ric = np.einsum("ijil->jl", K)
    return 0.5 * (ric + ric.T)


def is_flat(conn: LeftInvariantConnection, tol: float = 1e-10) -> bool:
    return bool(np.max(np.abs(curvature_tensor(conn)), initial=0.0) <= tol)


# -- projective lift -------------------------------------------------------------


@dataclass(frozen=True)
class ProjectiveLift:
    """C(A) = [[-tr E(A), F(A)], [A, E(A)]] as a linear map h -> sl(n+1).

    ``E[a]`` is E(e_a) and ``F[a, b]`` is F(e_a) applied to e_b.
    """

    algebra: StructureConstants
    E: np.ndarray
    F: np.ndarray

    @property
    def dim(self) -> int:
        return self.algebra.dim

    def C(self, A) -> np.ndarray:
        n = self.dim
        A = _vec(A, n)
        EA = np.einsum("a,acb->cb", A, self.E)
        M = np.zeros((n + 1, n + 1))
        M[0, 0] = -np.trace(EA)
        M[0, 1:] = A @ self.F
        M[1:, 0] = A
        M[1:, 1:] = EA
        return M

    def curvature(self, A, B) -> np.ndarray:
        """[C(A), C(B)] - C([A,B])."""
        CA, CB = self.C(A), self.C(B)
        return CA @ CB - CB @ CA - self.C(self.algebra.bracket(A, B))


def projective_lift(conn: LeftInvariantConnection) -> ProjectiveLift:
    n = conn.dim
    alg = conn.algebra
    tr = np.einsum("acc->a", conn.gamma)
    E = conn.gamma - (tr / (n + 1))[:, None, None] * np.eye(n)[None]
    # F(e_a)(e_b) = tr(Gamma(e_b) ad_{e_a}) / (2(n+1)), explicit double index sum
    ad = alg.ad_basis()
    F = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            F[a, b] = sum(conn.gamma[b, i, m] * ad[a, m, i] for i in range(n) for m in range(n))
    F /= 2 * (n + 1)
    return ProjectiveLift(alg, E, F)


@dataclass(frozen=True)
class NormalityReport:
    normal: bool
    residual: float
    invariant_residual: float
    traced_curvature: float


def normality_check(lift: ProjectiveLift, tol: float = 1e-10) -> NormalityReport:
    """Sweep basis pairs for (E(A)+trE(A))B - (E(B)+trE(B))A - [A,B].

    The same quantity is also evaluated as the R^n block of
    [C(A),C(B)] - C([A,B]); both must vanish.  The traced curvature of the
    lift is reported but does not enter the verdict.
    """
    n = lift.dim
    eye = np.eye(n)
    res = inv = traced = 0.0
    for a in range(n):
        for b in range(n):
            A, B = eye[a], eye[b]
            EA = np.einsum("a,acb->cb", A, lift.E)
            EB = np.einsum("a,acb->cb", B, lift.E)
            r = (EA + np.trace(EA) * np.eye(n)) @ B - (EB + np.trace(EB) * np.eye(n)) @ A
            r = r - lift.algebra.bracket(A, B)
            res = max(res, float(np.max(np.abs(r))))
            kap = lift.curvature(A, B)
            inv = max(inv, float(np.max(np.abs(kap[1:, 0]))))
    for j in range(n):
        for l in range(n):
            t = sum(lift.curvature(eye[i], eye[l])[1 + i, 1 + j] for i in range(n))
            traced = max(traced, abs(float(t)))
    return NormalityReport(
        normal=bool(res <= tol and inv <= tol),
        residual=res,
        invariant_residual=inv,
        traced_curvature=traced,
    )


# -- the biinvariant SL(2,R) family --------------------------------------------


def sl2_family_lift(p: float, q: float) -> ProjectiveLift:
    """C(A) = [[0, q A*], [A, p ad_A]] with A* = B(A, .)."""
    alg = sl2()
    return ProjectiveLift(alg, p * alg.ad_basis(), q * killing_form(alg))


def sl2_family_curvature(p: float, q: float, A, B) -> np.ndarray:
    """Closed-form curvature of the biinvariant family.

    Blocks: top-left 0; top-right (2p-1) q [A,B]*; lower-left (2p-1)[A,B];
    lower-right q(A (x) B* - B (x) A*) + p(p-1) ad_[A,B].
    """
    alg = sl2()
    Bk = killing_form(alg)
    A, B = _vec(A, 3), _vec(B, 3)
    AB = alg.bracket(A, B)
    K = np.zeros((4, 4))
    K[0, 1:] = (2 * p - 1) * q * (Bk @ AB)
    K[1:, 0] = (2 * p - 1) * AB
    K[1:, 1:] = q * (np.outer(A, Bk @ B) - np.outer(B, Bk @ A)) + p * (p - 1) * alg.ad(AB)
    return K


def sl2_normal_q() -> float:
    """q for which the family equals the lift of the Killing connection Gamma = ad/2."""
    lift = projective_lift(LeftInvariantConnection.scaled_ad(sl2(), 0.5))
    return float(lift.F[0, 0] / killing_form(lift.algebra)[0, 0])


def classify_direction(conn: LeftInvariantConnection, A, band: float = 1e-12) -> str:
    """Sign of the (constant) Ricci term r(A, A) along exp(tA).

    Positive gives an oscillating projective parameter (elliptic), zero the
    affine one (parabolic), negative a hyperbolic one.
    """
    A = _vec(A, conn.dim)
    r = float(A @ symmetrized_ricci(conn) @ A)
    if r > band:
        return "elliptic"
    if r < -band:
        return "hyperbolic"
    return "parabolic"


@dataclass
class SL2Flow:
    t: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    h: np.ndarray
    blowup_time: float | None = None
    reason: str = ""
    det_c: np.ndarray = field(default=None)


class Singular(ArithmeticError):
    """det c crossed the configured floor during the sl2 geodesic flow."""

    def __init__(self, t, message=""):
        super().__init__(message or f"det c reached the floor at t={t:.6g}")
        self.t = t


def sl2_geodesic_flow(p, q, A, a0=1.0, b0=None, c0=None, h0=None, t_span=(0.0, 10.0),
                      det_floor=1e-8, max_norm=1e150, rtol=1e-10, atol=1e-12,
                      raise_on_singular=False) -> SL2Flow:
    """Integrate the geodesic flow of the biinvariant family on SL(2,R).

    da = <b,A>, db = -(q/det c) c^T c A,
    dc = -(1/det c)((cA) (x) b + p ad_{cA} c), h^{-1} dh = (1/det c) cA.
    The integration stops when det c falls below ``det_floor`` or the state
    exceeds ``max_norm``; that time is reported as ``blowup_time``.  The
    frame variables (a, b, c) may grow exponentially along a geodesic that
    exists for all time, so the default norm cap only catches genuine
    finite-time blow-up.
    """
    from scipy.integrate import solve_ivp

    from .errors import StepFailure

    alg = sl2()
    A = _vec(A, 3)
    b0 = np.zeros(3) if b0 is None else np.asarray(b0, float)
    c0 = np.eye(3) if c0 is None else np.asarray(c0, float)
    h0 = np.eye(2) if h0 is None else np.asarray(h0, float)
    if abs(np.linalg.det(c0)) <= det_floor:
        raise Singular(t_span[0], "initial c is singular")

    def rhs(t, y):
        b = y[1:4]
        c = y[4:13].reshape(3, 3)
        h = y[13:17].reshape(2, 2)
        dc_ = np.linalg.det(c)
        cA = c @ A
        da = b @ A
        db = -(q / dc_) * (c.T @ c @ A)
        dc = -(np.outer(cA, b) + p * alg.ad(cA) @ c) / dc_
        dh = h @ np.einsum("i,ijk->jk", cA, SL2_MATRICES) / dc_
        return np.concatenate(([da], db, dc.ravel(), dh.ravel()))

    def singular(t, y):
        return abs(np.linalg.det(y[4:13].reshape(3, 3))) - det_floor

    def diverged(t, y):
        return max_norm - np.max(np.abs(y))

    singular.terminal = diverged.terminal = True
    y0 = np.concatenate(([a0], b0, c0.ravel(), h0.ravel()))
    sol = solve_ivp(rhs, t_span, y0, method="DOP853", rtol=rtol, atol=atol,
                    events=(singular, diverged))
    if sol.status == -1:
        raise StepFailure(sol.message)
    Y = sol.y.T
    dets = np.array([np.linalg.det(y[4:13].reshape(3, 3)) for y in Y])
    flow = SL2Flow(t=sol.t, a=Y[:, 0], b=Y[:, 1:4], c=Y[:, 4:13].reshape(-1, 3, 3),
                   h=Y[:, 13:17].reshape(-1, 2, 2), det_c=dets)
    if sol.status == 1:
        flow.blowup_time = float(sol.t[-1])
        flow.reason = "singular" if len(sol.t_events[0]) else "diverged"
        if raise_on_singular and flow.reason == "singular":
            raise Singular(flow.blowup_time)
    return flow
