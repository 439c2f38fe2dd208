"""Uniform 1-D grid, hat basis and the nonlocal stiffness/mass matrices.

The grid ``x_0 = -R, ..., x_{n-1} = R`` carries full hat functions, so the mesh has
one ghost cell on each side and discrete functions vanish outside ``[-L, L]`` with
``L = R + dx``. The stiffness matrix realizes

    B_K(u, v) = int int K(x, y) (u(x) - u(y)) (v(x) - v(y)) |x - y|^(-1-2s) dx dy

over the whole plane: cell pairs inside ``[-L, L]^2`` plus the far-field strip where one
variable leaves ``[-L, L]``, which reduces to ``2 int u v T`` with the tail weight

    T(x) = int_{|y| > L} K(x, y) |x - y|^(-1-2s) dy.

Cell-pair rules: identical cells and cells sharing a node are integrated after a
Duffy-type split that absorbs the ``|x - y|^(1-2s)`` behaviour into a Gauss-Jacobi
weight; pairs one or two cells apart use an 8x8 Gauss rule, farther pairs 4x4.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import roots_jacobi, roots_legendre

from .errors import DisjointWindows, GeometryError, QuadratureFailure
from .kernels import Kernel, TabulatedKernel

__all__ = [
    "DiscreteGeometry",
    "AssembledForms",
    "build_geometry",
    "assemble_stiffness",
    "mass_matrix",
    "weighted_mass",
    "unit_stiffness",
    "discrete_seminorm",
    "discrete_dual_norm",
]

_N_SING = 8
_N_NEAR = 8
_N_FAR = 4
_N_TAIL_X = 8
_N_TAIL_T = 16


def _legendre01(n):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _jacobi01(n, a, b):
    """Nodes/weights on (0, 1) for the weight ``r**b * (1 - r)**a``."""
    x, w = roots_jacobi(n, a, b)
    return 0.5 * (x + 1.0), w / 2.0 ** (a + b + 1.0)


def _as_intervals(w):
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w[None, :]
    if w.ndim != 2 or w.shape[1] != 2 or np.any(w[:, 0] >= w[:, 1]):
        raise GeometryError(f"window must be an interval (a, b) with a < b or a list of them, got {w.tolist()}")
    return [tuple(map(float, row)) for row in w]


def _overlap(w1, w2):
    return any(min(b1, b2) > max(a1, a2) for a1, b1 in w1 for a2, b2 in w2)


@dataclass
class DiscreteGeometry:
    """Truncated line ``[-R, R]`` with interior ``omega`` and measurement windows.

    Windows are open intervals (or unions of them) in the exterior collar; a node
    belongs to a window when it lies strictly inside it.
    """

    R: float
    n_nodes: int
    omega: tuple[float, float]
    W1: list[tuple[float, float]]
    W2: list[tuple[float, float]]
    x: np.ndarray = field(init=False, repr=False)
    dx: float = field(init=False)
    interior: np.ndarray = field(init=False, repr=False)
    exterior: np.ndarray = field(init=False, repr=False)
    w1: np.ndarray = field(init=False, repr=False)
    w2: np.ndarray = field(init=False, repr=False)
    _quad: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        self.x = np.linspace(-self.R, self.R, self.n_nodes)
        self.dx = 2.0 * self.R / (self.n_nodes - 1)
        tol = 1e-9 * self.dx
        a, b = self.omega
        self.interior = np.flatnonzero((self.x >= a - tol) & (self.x <= b + tol))
        self.exterior = np.setdiff1d(np.arange(self.n_nodes), self.interior)
        self.w1 = self._window_nodes(self.W1)
        self.w2 = self._window_nodes(self.W2)

    def _window_nodes(self, w):
        tol = 1e-9 * self.dx
        mask = np.zeros(self.n_nodes, dtype=bool)
        for a, b in w:
            mask |= (self.x > a + tol) & (self.x < b - tol)
        return np.flatnonzero(mask)

    @property
    def L(self) -> float:
        """Edge of the support of discrete functions, one cell beyond ``R``."""
        return self.R + self.dx

    @property
    def x_interior(self):
        return self.x[self.interior]

    def to_dict(self):
        return {
            "R": self.R,
            "n_nodes": self.n_nodes,
            "omega": list(self.omega),
            "W1": [list(w) for w in self.W1],
            "W2": [list(w) for w in self.W2],
        }

    def same_as(self, other: "DiscreteGeometry") -> bool:
        return self.to_dict() == other.to_dict()


def build_geometry(R=4.0, n_nodes=129, omega=(-1.0, 1.0), W1=(1.25, 3.0), W2=(2.0, 3.75)) -> DiscreteGeometry:
    """Validate geometry parameters and build a :class:`DiscreteGeometry`.

    Raises
    ------
    GeometryError
        Bad radius, node count, or a window leaving the collar or touching the
        closure of ``omega``.
    DisjointWindows
        ``W1`` and ``W2`` do not intersect.
    """
    R = float(R)
    a, b = map(float, omega)
    if not (a < b):
        raise GeometryError(f"omega must be an interval (a, b) with a < b, got {omega}")
    if not (R > max(abs(a), abs(b))):
        raise GeometryError(f"truncation radius R={R} must exceed the domain ({a}, {b})")
    if int(n_nodes) != n_nodes or n_nodes < 9:
        raise GeometryError(f"n_nodes must be an integer >= 9, got {n_nodes}")
    w1, w2 = _as_intervals(W1), _as_intervals(W2)
    for name, w in (("W1", w1), ("W2", w2)):
        for lo, hi in w:
            if lo < -R or hi > R:
                raise GeometryError(f"{name} interval ({lo}, {hi}) leaves the grid [-{R}, {R}]")
            if not (lo > b or hi < a):
                raise GeometryError(f"{name} interval ({lo}, {hi}) touches the closure of omega ({a}, {b})")
    if not _overlap(w1, w2):
        raise DisjointWindows(f"W1={w1} and W2={w2} do not overlap")
    geom = DiscreteGeometry(R, int(n_nodes), (a, b), w1, w2)
    if geom.interior.size == 0:
        raise GeometryError("no grid node falls inside omega; refine the grid")
    for name, idx in (("W1", geom.w1), ("W2", geom.w2)):
        if idx.size == 0:
            raise GeometryError(f"no grid node falls strictly inside {name}; refine the grid")
    return geom


@dataclass
class _Group:
    dofs: np.ndarray  # (P, k) mesh-point indices, ghosts included
    X: np.ndarray  # (P, Q)
    Y: np.ndarray  # (P, Q)
    W: np.ndarray  # (P, Q)
    D: np.ndarray  # (Q, k, k)


def _pair_groups(geom: DiscreteGeometry, s: float) -> list[_Group]:
    h, L = geom.dx, geom.L
    nc = geom.n_nodes + 1
    z = -L + h * np.arange(nc + 1)
    alpha = 1.0 + 2.0 * s
    groups = []

    # identical cells: x - y = h r, y = z_a + h (1 - r) tau, both orderings
    r, wr = _jacobi01(_N_SING, 1.0, 1.0 - 2.0 * s)
    tau, wt = _legendre01(_N_SING)
    R_, T_ = (a.ravel() for a in np.meshgrid(r, tau, indexing="ij"))
    w = (wr[:, None] * wt[None, :]).ravel()
    eta = (1.0 - R_) * T_
    cells = np.arange(nc)
    groups.append(
        _Group(
            dofs=np.stack([cells, cells + 1], axis=1),
            X=z[cells, None] + h * (eta + R_)[None, :],
            Y=z[cells, None] + h * eta[None, :],
            W=np.broadcast_to(2.0 * h ** (2.0 - alpha) * w, (nc, w.size)).copy(),
            D=np.broadcast_to(np.array([[1.0, -1.0], [-1.0, 1.0]]), (w.size, 2, 2)).copy(),
        )
    )

    # cells sharing z_{a+1}: x = z_{a+1} - h p, y = z_{a+1} + h q, split along p = q
    rho, wrho = _jacobi01(_N_SING, 0.0, 2.0 - 2.0 * s)
    t, wt = _legendre01(_N_SING)
    Rh, Tt = (a.ravel() for a in np.meshgrid(rho, t, indexing="ij"))
    w = (wrho[:, None] * wt[None, :]).ravel() * (1.0 + Tt) ** (-alpha)
    p = np.concatenate([Rh, Rh * Tt])
    q = np.concatenate([Rh * Tt, Rh])
    d = np.concatenate(
        [np.stack([np.ones_like(Tt), Tt - 1.0, -Tt], 1), np.stack([Tt, 1.0 - Tt, -np.ones_like(Tt)], 1)]
    )
    w = np.concatenate([w, w])
    a = np.arange(nc - 1)
    groups.append(
        _Group(
            dofs=np.stack([a, a + 1, a + 2], axis=1),
            X=z[a + 1, None] - h * p[None, :],
            Y=z[a + 1, None] + h * q[None, :],
            W=np.broadcast_to(2.0 * h ** (2.0 - alpha) * w, (a.size, w.size)).copy(),
            D=d[:, :, None] * d[:, None, :],
        )
    )

    # separated pairs b - a >= 2
    ia, ib = np.triu_indices(nc, k=2)
    gap = ib - ia
    for sel, nq in ((gap <= 3, _N_NEAR), (gap > 3, _N_FAR)):
        if not np.any(sel):
            continue
        xi, wx = _legendre01(nq)
        Xi, Et = (a.ravel() for a in np.meshgrid(xi, xi, indexing="ij"))
        w = (wx[:, None] * wx[None, :]).ravel()
        pa, pb = ia[sel], ib[sel]
        dist = (pb - pa)[:, None] + Et[None, :] - Xi[None, :]
        d = np.stack([1.0 - Xi, Xi, Et - 1.0, -Et], axis=1)
        groups.append(
            _Group(
                dofs=np.stack([pa, pa + 1, pb, pb + 1], axis=1),
                X=z[pa, None] + h * Xi[None, :],
                Y=z[pb, None] + h * Et[None, :],
                W=2.0 * h ** (2.0 - alpha) * w[None, :] * dist ** (-alpha),
                D=d[:, :, None] * d[:, None, :],
            )
        )

    # far field: 2 int u v T, one group per side
    tau, wtau = _jacobi01(_N_TAIL_T, 0.0, 2.0 * s - 1.0)
    xl, wl = _legendre01(_N_TAIL_X)
    # edge cell: the surviving hat vanishes like r = dist / h, so take r^(2-2s) as the weight
    xj, wj = _jacobi01(_N_TAIL_X, 0.0, 2.0 - 2.0 * s)
    wj = wj / xj**2
    cells = np.arange(nc)
    for side in (1.0, -1.0):
        # xi: position in the cell measured from its left point; dist: distance to the near edge
        xi = np.broadcast_to(xl, (nc, _N_TAIL_X)).copy()
        wx = np.broadcast_to(wl, (nc, _N_TAIL_X)).copy()
        edge_cell = nc - 1 if side > 0 else 0
        xi[edge_cell] = 1.0 - xj if side > 0 else xj
        X0 = z[cells, None] + h * xi
        dist = L - side * X0
        wx = wx * dist ** (-2.0 * s)
        wx[edge_cell] = wj * h ** (-2.0 * s)
        Xq = np.repeat(X0, _N_TAIL_T, axis=1)
        Wq = 2.0 * h * np.repeat(wx, _N_TAIL_T, axis=1) * np.tile(wtau, _N_TAIL_X)[None, :]
        Yq = Xq + side * np.repeat(dist, _N_TAIL_T, axis=1) / np.tile(tau, _N_TAIL_X)[None, :]
        # D depends on xi, which varies by cell only at the edge; store per-point hat values in W/D
        phi = np.stack([1.0 - xi, xi], axis=2)  # (nc, Qx, 2)
        phi = np.repeat(phi, _N_TAIL_T, axis=1)
        groups.append(_TailGroup(np.stack([cells, cells + 1], axis=1), Xq, Yq, Wq, phi))
    return groups


class _TailGroup(_Group):
    """Same as :class:`_Group` but with hat values varying per cell."""

    def __init__(self, dofs, X, Y, W, phi):
        self.dofs, self.X, self.Y, self.W, self.phi = dofs, X, Y, W, phi
        self.D = None


def _quadrature(geom: DiscreteGeometry, s: float):
    key = round(float(s), 14)
    if key not in geom._quad:
        geom._quad[key] = _pair_groups(geom, s)
    return geom._quad[key]


def _kernel_values(kernel: Kernel | None, geom: DiscreteGeometry, X, Y):
    if kernel is None:
        return 1.0
    if isinstance(kernel, TabulatedKernel):
        if kernel.nodes.size != geom.n_nodes or not np.allclose(kernel.nodes, geom.x):
            raise GeometryError("tabulated kernel nodes differ from the geometry nodes")
        snap = lambda v: np.clip(np.rint((v + geom.R) / geom.dx), 0, geom.n_nodes - 1).astype(int)
        return kernel.at_indices(snap(X), snap(Y))
    return kernel.evaluate(X, Y)


def _assemble(geom: DiscreteGeometry, s: float, kernel: Kernel | None) -> np.ndarray:
    npts = geom.n_nodes + 2
    flat = np.zeros(npts * npts)
    for g in _quadrature(geom, s):
        wk = g.W * _kernel_values(kernel, geom, g.X, g.Y)
        if g.D is None:
            local = np.einsum("pq,pqi,pqj->pij", wk, g.phi, g.phi)
        else:
            local = np.einsum("pq,qij->pij", wk, g.D)
        k = g.dofs.shape[1]
        rows = np.repeat(g.dofs, k, axis=1)
        cols = np.tile(g.dofs, (1, k))
        flat += np.bincount((rows * npts + cols).ravel(), weights=local.ravel(), minlength=npts * npts)
    full = flat.reshape(npts, npts)[1:-1, 1:-1]
    if not np.all(np.isfinite(full)):
        bad = np.argwhere(~np.isfinite(full))[:5].tolist()
        raise QuadratureFailure(f"non-finite stiffness entries at {bad} (s={s}, n={geom.n_nodes})")
    return 0.5 * (full + full.T)


def mass_matrix(geom: DiscreteGeometry) -> np.ndarray:
    """Consistent P1 mass matrix on the full node set."""
    n, h = geom.n_nodes, geom.dx
    return h * (np.diag(np.full(n, 2.0 / 3.0)) + np.diag(np.full(n - 1, 1.0 / 6.0), 1) + np.diag(np.full(n - 1, 1.0 / 6.0), -1))


def weighted_mass(geom: DiscreteGeometry, coef, lumped: bool = True) -> np.ndarray:
    """``int c phi_i phi_j`` with ``c`` interpolated linearly from nodal values.

    With ``lumped=True`` the nodal rule ``c_i int phi_i`` is put on the diagonal. This
    keeps the implicit-Euler Jacobian an M-matrix and makes row ``i`` depend on
    ``c_i`` alone.
    """
    c = np.broadcast_to(np.asarray(coef, dtype=float), (geom.n_nodes,))
    if lumped:
        return np.diag(c * geom.dx)
    cp = np.concatenate([c[:1], c, c[-1:]])  # constant extension into the ghost cells
    h = geom.dx
    # exact integrals of linear c times products of two linear hats on one cell
    lo, hi = cp[:-1], cp[1:]
    m00 = h * (3.0 * lo + hi) / 12.0
    m11 = h * (lo + 3.0 * hi) / 12.0
    m01 = h * (lo + hi) / 12.0
    npts = geom.n_nodes + 2
    full = np.zeros((npts, npts))
    idx = np.arange(npts - 1)
    full[idx, idx] += m00
    full[idx + 1, idx + 1] += m11
    full[idx, idx + 1] += m01
    full[idx + 1, idx] += m01
    return full[1:-1, 1:-1]


@dataclass
class AssembledForms:
    """Matrices realizing the bilinear forms on the full node set.

    ``A`` is the stiffness for the kernel, ``A_unit`` the same quadrature with
    ``K = 1`` (the Gagliardo form), ``M`` the consistent mass matrix.
    """

    geom: DiscreteGeometry
    kernel: Kernel
    A: np.ndarray
    A_unit: np.ndarray
    M: np.ndarray

    @property
    def s(self):
        return self.kernel.s

    @property
    def A_II(self):
        i = self.geom.interior
        return self.A[np.ix_(i, i)]

    @property
    def A_IE(self):
        return self.A[np.ix_(self.geom.interior, self.geom.exterior)]

    def energy(self, u, v=None):
        """``B_K(u, v)`` for nodal fields on the full grid."""
        u = np.asarray(u, dtype=float)
        return float(u @ self.A @ (u if v is None else np.asarray(v, dtype=float)))


def assemble_stiffness(geom: DiscreteGeometry, kernel: Kernel) -> AssembledForms:
    """Assemble the nonlocal stiffness matrix of ``kernel`` on ``geom``.

    Quadrature data are cached on the geometry per order ``s``, so reassembling for
    another kernel of the same order only re-evaluates the kernel.
    """
    A = _assemble(geom, kernel.s, kernel)
    A_unit = _assemble(geom, kernel.s, None)
    return AssembledForms(geom, kernel, A, A_unit, mass_matrix(geom))


def unit_stiffness(geom: DiscreteGeometry, s: float) -> np.ndarray:
    """Stiffness with ``K = 1``; its quadratic form is the squared Gagliardo seminorm."""
    return _assemble(geom, s, None)


def discrete_seminorm(geom: DiscreteGeometry, s: float, field) -> float:
    """Gagliardo seminorm ``[u]_{H^s}`` of a nodal field on the full grid."""
    u = np.asarray(field, dtype=float)
    if u.shape != (geom.n_nodes,):
        raise ValueError(f"field must have {geom.n_nodes} nodal values, got shape {u.shape}")
    val = float(u @ unit_stiffness(geom, s) @ u)
    return float(np.sqrt(max(val, 0.0)))


def discrete_dual_norm(geom: DiscreteGeometry, s: float, functional, gram=None) -> float:
    """Dual norm of an interior functional against the discrete ``H^s`` norm.

    ``functional`` is given on the interior nodes (or on all nodes, in which case it
    must vanish on the exterior). The default Gram matrix is ``A_unit + M`` restricted
    to the interior; pass ``gram`` (interior block) to use another norm, e.g. ``A_K``.
    """
    f = np.asarray(functional, dtype=float)
    i = geom.interior
    if f.shape == (geom.n_nodes,):
        if np.any(f[geom.exterior] != 0):
            raise ValueError("functional must be supported on interior nodes")
        f = f[i]
    elif f.shape != (i.size,):
        raise ValueError(f"functional must have {i.size} interior values, got shape {f.shape}")
    if gram is None:
        gram = (unit_stiffness(geom, s) + mass_matrix(geom))[np.ix_(i, i)]
    try:
        c = linalg.cho_factor(gram)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("Gram matrix is singular or not positive definite") from exc
    return float(np.sqrt(max(f @ linalg.cho_solve(c, f), 0.0)))
