"""Lagrange P1/P2 spaces and the finite element forms of the stabilized scheme.

Vector fields on a scalar space with ``n`` DOFs use the blocked layout
``[u1_0 .. u1_{n-1}, u2_0 .. u2_{n-1}]``. In 2D the curl of ``u`` is the
scalar ``d u2/dx - d u1/dy``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .linalg import CooBuilder, SparseMatrix, lu_factor
from .mesh import Mesh, MeshError
from .quadrature import QuadratureRule, get_rule

# default rule: degree 5 covers P2 x P2 x grad P2 (convection) on affine elements
DEFAULT_DEGREE = 5
# smooth, non-polynomial data (loads, exact solutions)
DATA_DEGREE = 20

Coefficient = Union[None, float, np.ndarray]


# ---------------------------------------------------------------------------
# reference basis

_DL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])  # d(l0, l1, l2)/d(x, y)
P2_EDGES = ((0, 1), (1, 2), (2, 0))


def eval_basis(degree: int, bary) -> tuple[np.ndarray, np.ndarray]:
    """Basis values (nq, nb) and reference gradients (nq, nb, 2) at barycentric points.

    P2 ordering: vertices 0, 1, 2 then the midpoints of edges (0,1), (1,2), (2,0).
    """
    lam = np.atleast_2d(np.asarray(bary, dtype=float))
    if lam.shape[1] != 3:
        raise ValueError("barycentric points need three coordinates")
    nq = lam.shape[0]
    if degree == 1:
        vals = lam.copy()
        grads = np.broadcast_to(_DL, (nq, 3, 2)).copy()
    elif degree == 2:
        vals = np.empty((nq, 6))
        grads = np.empty((nq, 6, 2))
        for i in range(3):
            vals[:, i] = lam[:, i] * (2 * lam[:, i] - 1)
            grads[:, i] = (4 * lam[:, i] - 1)[:, None] * _DL[i]
        for k, (i, j) in enumerate(P2_EDGES):
            vals[:, 3 + k] = 4 * lam[:, i] * lam[:, j]
            grads[:, 3 + k] = 4 * (lam[:, j][:, None] * _DL[i] + lam[:, i][:, None] * _DL[j])
    else:
        raise ValueError(f"unsupported polynomial degree {degree}")
    return vals, grads


# ---------------------------------------------------------------------------
# spaces and functions


class FeSpace:
    """Continuous scalar Lagrange space of degree 1 or 2 over ``mesh``."""

    def __init__(self, mesh: Mesh, degree: int):
        if degree not in (1, 2):
            raise ValueError(f"unsupported polynomial degree {degree}")
        self.mesh = mesh
        self.degree = degree
        nv = mesh.n_vertices
        if degree == 1:
            self.element_dofs = mesh.triangles.copy()
            self.dof_coords = mesh.vertices.copy()
        else:
            self.element_dofs = np.hstack([mesh.triangles, nv + mesh.triangle_edges])
            e = mesh.edges
            mid = 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])
            self.dof_coords = np.vstack([mesh.vertices, mid])
        self.element_dofs.flags.writeable = False
        self.n_dofs = len(self.dof_coords)
        self._cache: dict = {}

    @property
    def n_local(self) -> int:
        return 3 if self.degree == 1 else 6

    def __repr__(self):
        return f"FeSpace(P{self.degree}, {self.n_dofs} dofs)"

    def geometry(self):
        """Per-element affine data: origin (ne, 2), J^{-T} (ne, 2, 2), |det J| (ne,)."""
        if "geom" not in self._cache:
            p = self.mesh.vertices[self.mesh.triangles]
            J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            invT = np.empty_like(J)
            invT[:, 0, 0] = J[:, 1, 1] / det
            invT[:, 0, 1] = -J[:, 1, 0] / det
            invT[:, 1, 0] = -J[:, 0, 1] / det
            invT[:, 1, 1] = J[:, 0, 0] / det
            self._cache["geom"] = (p[:, 0], J, invT, np.abs(det))
        return self._cache["geom"]

    def tabulate(self, rule: QuadratureRule):
        """Values (nq, nb), physical gradients (ne, nq, nb, 2), weights (ne, nq), points (ne, nq, 2)."""
        key = ("tab", rule.degree, len(rule))
        if key not in self._cache:
            x0, J, invT, det = self.geometry()
            vals, rgrad = eval_basis(self.degree, rule.points)
            grads = np.einsum("qbk,edk->eqbd", rgrad, invT)
            wts = det[:, None] * rule.weights[None, :]
            pts = x0[:, None, :] + np.einsum("edk,qk->eqd", J, rule.reference_xy)
            self._cache[key] = (vals, grads, wts, pts)
        return self._cache[key]

    def vector_dofs(self) -> np.ndarray:
        """(ne, 2, nb) global indices of the blocked vector space."""
        return np.stack([self.element_dofs, self.element_dofs + self.n_dofs], axis=1)


@dataclass(eq=False)
class FeFunction:
    """Coefficients over ``space``; shape (n,) for scalars and (2, n) for vectors."""

    space: FeSpace
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64)
        n = self.space.n_dofs
        if c.shape not in ((n,), (2, n)):
            if c.shape == (2 * n,):
                c = c.reshape(2, n)
            else:
                raise ValueError(f"coefficient shape {c.shape} does not match space with {n} dofs")
        self.coefficients = c

    @property
    def is_vector(self) -> bool:
        return self.coefficients.ndim == 2

    @property
    def flat(self) -> np.ndarray:
        return self.coefficients.ravel()

    @classmethod
    def zeros(cls, space: FeSpace, vector: bool = False) -> "FeFunction":
        return cls(space, np.zeros((2, space.n_dofs) if vector else space.n_dofs))

    def copy(self) -> "FeFunction":
        return FeFunction(self.space, self.coefficients.copy())

    def at_quadrature(self, rule: QuadratureRule):
        """Values (ne, nq[, 2]) and gradients (ne, nq[, 2], 2) at the rule's points."""
        vals, grads, _, _ = self.space.tabulate(rule)
        dofs = self.space.element_dofs
        ne, nq, nb, _ = grads.shape
        # batched matmul over elements; plain einsum is far slower here
        gflat = grads.transpose(0, 2, 1, 3).reshape(ne, nb, 2 * nq)
        if self.is_vector:
            c = self.coefficients[:, dofs].transpose(1, 0, 2)  # (ne, 2, nb)
            v = (c @ vals.T).transpose(0, 2, 1)
            g = (c @ gflat).reshape(ne, 2, nq, 2).transpose(0, 2, 1, 3)
        else:
            c = self.coefficients[dofs]
            v = c @ vals.T
            g = (c[:, None, :] @ gflat).reshape(ne, nq, 2)
        return v, g


def vector_space_size(space: FeSpace) -> int:
    return 2 * space.n_dofs


# ---------------------------------------------------------------------------
# assembly


def _element_coef(space: FeSpace, coef: Coefficient) -> np.ndarray:
    ne = space.mesh.n_triangles
    if coef is None:
        return np.ones(ne)
    c = np.asarray(coef, dtype=float)
    if c.ndim == 0:
        return np.full(ne, float(c))
    if c.shape != (ne,):
        raise ValueError("per-element coefficient must have one value per triangle")
    return c


def _scatter(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> SparseMatrix:
    ne, R, C = local.shape
    b = CooBuilder(*shape)
    b.add(np.repeat(rows, C, axis=1).reshape(ne, R, C),
          np.tile(cols, (1, R)).reshape(ne, R, C), local)
    return b.finalize()


def _blockdiag(m: SparseMatrix) -> SparseMatrix:
    return SparseMatrix.from_scipy(sp.block_diag([m.to_scipy(), m.to_scipy()], format="csr"))


def assemble_mass(space: FeSpace, coef: Coefficient = None, rule: Optional[QuadratureRule] = None) -> SparseMatrix:
    rule = rule or get_rule(DEFAULT_DEGREE)
    vals, _, wts, _ = space.tabulate(rule)
    w = wts * _element_coef(space, coef)[:, None]
    local = np.einsum("eq,qi,qj->eij", w, vals, vals)
    d = space.element_dofs
    return _scatter(local, d, d, (space.n_dofs, space.n_dofs))


def assemble_stiffness(space: FeSpace, coef: Coefficient = None, rule: Optional[QuadratureRule] = None) -> SparseMatrix:
    rule = rule or get_rule(DEFAULT_DEGREE)
    _, grads, wts, _ = space.tabulate(rule)
    w = wts * _element_coef(space, coef)[:, None]
    local = np.einsum("eq,eqid,eqjd->eij", w, grads, grads)
    d = space.element_dofs
    return _scatter(local, d, d, (space.n_dofs, space.n_dofs))


def assemble_vector_mass(space: FeSpace) -> SparseMatrix:
    return _blockdiag(assemble_mass(space))


def assemble_vector_stiffness(space: FeSpace) -> SparseMatrix:
    return _blockdiag(assemble_stiffness(space))


def _div_basis(grads: np.ndarray) -> np.ndarray:
    """div of phi_j e_a: (ne, nq, 2, nb) with a the component."""
    return np.moveaxis(grads, 3, 2)


def _curl_basis(grads: np.ndarray) -> np.ndarray:
    """curl of phi_j e_a = (-d_y phi_j, d_x phi_j)[a]: (ne, nq, 2, nb)."""
    return np.stack([-grads[..., 1], grads[..., 0]], axis=2)


def _vector_form(space: FeSpace, ops: np.ndarray, coef: Coefficient, rule) -> SparseMatrix:
    _, _, wts, _ = space.tabulate(rule)
    w = wts * _element_coef(space, coef)[:, None]
    ne, _, _, nb = ops.shape
    local = np.einsum("eq,eqai,eqbj->eaibj", w, ops, ops).reshape(ne, 2 * nb, 2 * nb)
    vd = space.vector_dofs().reshape(ne, 2 * nb)
    n = 2 * space.n_dofs
    return _scatter(local, vd, vd, (n, n))


def assemble_divdiv(space: FeSpace, coef: Coefficient = None, rule: Optional[QuadratureRule] = None) -> SparseMatrix:
    """(div u, div v) on the vector space."""
    rule = rule or get_rule(DEFAULT_DEGREE)
    _, grads, _, _ = space.tabulate(rule)
    return _vector_form(space, _div_basis(grads), coef, rule)


def assemble_curlcurl(space: FeSpace, coef: Coefficient = None, rule: Optional[QuadratureRule] = None) -> SparseMatrix:
    """(curl u, curl v) on the vector space, optionally weighted per element."""
    rule = rule or get_rule(DEFAULT_DEGREE)
    _, grads, _, _ = space.tabulate(rule)
    return _vector_form(space, _curl_basis(grads), coef, rule)


def _mixed_form(vspace: FeSpace, sspace: FeSpace, ops_name: str, coef: Coefficient, rule) -> SparseMatrix:
    if sspace.mesh is not vspace.mesh:
        raise MeshError("spaces must live on the same mesh")
    rule = rule or get_rule(DEFAULT_DEGREE)
    _, grads, wts, _ = vspace.tabulate(rule)
    svals, _, _, _ = sspace.tabulate(rule)
    ops = _div_basis(grads) if ops_name == "div" else _curl_basis(grads)
    w = wts * _element_coef(vspace, coef)[:, None]
    ne, _, _, nb = ops.shape
    local = np.einsum("eq,qk,eqbj->ekbj", w, svals, ops).reshape(ne, sspace.n_local, 2 * nb)
    vd = vspace.vector_dofs().reshape(ne, 2 * nb)
    return _scatter(local, sspace.element_dofs, vd, (sspace.n_dofs, 2 * vspace.n_dofs))


def assemble_pressure_div(vspace: FeSpace, pspace: FeSpace, rule: Optional[QuadratureRule] = None) -> SparseMatrix:
    """B[q, v] = (div v, q); shape (n_p, 2 n_u)."""
    return _mixed_form(vspace, pspace, "div", None, rule)


def assemble_curl_coupling(vspace: FeSpace, lspace: FeSpace, coef: Coefficient = None,
                           rule: Optional[QuadratureRule] = None) -> SparseMatrix:
    """C[l, v] = (l, curl v); shape (n_l, 2 n_u)."""
    return _mixed_form(vspace, lspace, "curl", coef, rule)


def assemble_convection(beta: FeFunction, space: FeSpace, rule: Optional[QuadratureRule] = None) -> SparseMatrix:
    """Skew-symmetric convection b(beta, u, v) = ((beta.grad u, v) - (beta.grad v, u)) / 2."""
    if not beta.is_vector:
        raise ValueError("convecting field must be a vector FeFunction")
    rule = rule or get_rule(DEFAULT_DEGREE)
    vals, grads, wts, _ = space.tabulate(rule)
    bq, _ = beta.at_quadrature(rule) if beta.space is space else _foreign_values(beta, space, rule)
    adv = np.einsum("eqd,eqjd->eqj", bq, grads)  # beta . grad phi_j
    A = np.einsum("eq,eqj,qi->eij", wts, adv, vals)
    local = 0.5 * (A - np.transpose(A, (0, 2, 1)))
    d = space.element_dofs
    return _blockdiag(_scatter(local, d, d, (space.n_dofs, space.n_dofs)))


def _foreign_values(f: FeFunction, space: FeSpace, rule):
    if f.space.mesh is not space.mesh:
        raise MeshError("function and space must share a mesh")
    return f.at_quadrature(rule)


def assemble_load(space: FeSpace, f: Callable, t: float = 0.0, vector: bool = True,
                  rule: Optional[QuadratureRule] = None) -> np.ndarray:
    """(f(., t), v) for every basis function; ``f(x, y, t)`` is evaluated on arrays."""
    rule = rule or get_rule(DATA_DEGREE)
    vals, _, wts, pts = space.tabulate(rule)
    fx = f(pts[..., 0], pts[..., 1], t)
    d = space.element_dofs
    n = space.n_dofs
    if vector:
        out = np.zeros(2 * n)
        for a in range(2):
            comp = np.broadcast_to(np.asarray(fx[a], dtype=float), wts.shape)
            local = np.einsum("eq,eq,qi->ei", wts, comp, vals)
            out[a * n:(a + 1) * n] = np.bincount(d.ravel(), local.ravel(), minlength=n)
        return out
    comp = np.broadcast_to(np.asarray(fx, dtype=float), wts.shape)
    local = np.einsum("eq,eq,qi->ei", wts, comp, vals)
    return np.bincount(d.ravel(), local.ravel(), minlength=n)


def mean_vector(space: FeSpace) -> np.ndarray:
    """Integrals of the basis functions, (1, phi_i)."""
    rule = get_rule(DEFAULT_DEGREE)
    vals, _, wts, _ = space.tabulate(rule)
    local = np.einsum("eq,qi->ei", wts, vals)
    return np.bincount(space.element_dofs.ravel(), local.ravel(), minlength=space.n_dofs)


# ---------------------------------------------------------------------------
# projection and interpolation


def l2_project_curl(u: FeFunction, lspace: FeSpace) -> FeFunction:
    """L2 projection of curl u onto ``lspace``: solves M_L s = C u."""
    if not u.is_vector:
        raise ValueError("l2_project_curl expects a vector field")
    cache = lspace._cache
    key = ("curl-proj", id(u.space))
    if key not in cache:
        M = assemble_mass(lspace)
        C = assemble_curl_coupling(u.space, lspace)
        cache[key] = (lu_factor(M), C.to_scipy())
    lu, C = cache[key]
    return FeFunction(lspace, lu.solve(C @ u.flat))


def _call_field(f: Callable, x: np.ndarray, y: np.ndarray, *args):
    out = f(x, y, *args)
    if isinstance(out, (tuple, list)):
        return np.stack([np.broadcast_to(np.asarray(c, dtype=float), x.shape) for c in out])
    return np.broadcast_to(np.asarray(out, dtype=float), x.shape) if np.ndim(out) < 2 else np.asarray(out, float)


def interpolate(f: Callable, space: FeSpace, *args) -> FeFunction:
    """Nodal interpolant; ``f(x, y, *args)`` returns a scalar array or a pair of arrays."""
    x, y = space.dof_coords.T
    vals = _call_field(f, x, y, *args)
    if not np.all(np.isfinite(vals)):
        raise ValueError("interpolated function is not finite at every node")
    return FeFunction(space, vals)


# ---------------------------------------------------------------------------
# boundary conditions


@dataclass
class DirichletBc:
    """Velocity value ``value(x, y, t) -> (u1, u2)`` on boundary edges with the given markers."""

    markers: Sequence[int]
    value: Callable = field(default=lambda x, y, t: (0.0 * x, 0.0 * x))


def boundary_dofs(space: FeSpace, markers: Optional[Iterable[int]] = None) -> np.ndarray:
    """Scalar DOFs lying on boundary edges with the given markers (all markers if None)."""
    m = space.mesh
    if markers is None:
        rows = np.arange(len(m.boundary_edges))
    else:
        markers = list(markers)
        missing = set(markers) - m.markers
        if missing:
            raise MeshError(f"boundary marker(s) {sorted(missing)} absent from mesh")
        rows = m.marked_edges(markers)
    dofs = [m.boundary_edges[rows, :2].ravel()]
    if space.degree == 2:
        dofs.append(m.n_vertices + m.boundary_edge_ids[rows])
    return np.unique(np.concatenate(dofs))


def dirichlet_data(space: FeSpace, bcs: Sequence[DirichletBc], t: float) -> tuple[np.ndarray, np.ndarray]:
    """Constrained vector-DOF indices and their values; later conditions win at shared nodes."""
    n = space.n_dofs
    values = {}
    for bc in bcs:
        dofs = boundary_dofs(space, bc.markers)
        x, y = space.dof_coords[dofs].T
        v = _call_field(bc.value, x, y, t)
        for a in range(2):
            values.update(zip((dofs + a * n).tolist(), v[a].tolist()))
    idx = np.array(sorted(values), dtype=np.int64)
    return idx, np.array([values[i] for i in idx.tolist()], dtype=float)


def apply_dirichlet(A: SparseMatrix, b: np.ndarray, dofs: np.ndarray, values: np.ndarray) -> tuple[SparseMatrix, np.ndarray]:
    """Symmetric elimination: constrained rows and columns become identity, RHS corrected."""
    n = A.n_rows
    g = np.zeros(n)
    g[dofs] = values
    free = np.ones(n)
    free[dofs] = 0.0
    Asp = A.to_scipy()
    rhs = free * (np.asarray(b, dtype=float) - Asp @ g) + g
    F = sp.diags(free)
    out = F @ Asp @ F + sp.diags(1.0 - free)
    return SparseMatrix.from_scipy(out), rhs


# ---------------------------------------------------------------------------
# evaluation


def norms(f: FeFunction, rule: Optional[QuadratureRule] = None) -> dict:
    """L2 norm, H1 seminorm and, for vector fields, the L2 norms of div and curl."""
    rule = rule or get_rule(max(DEFAULT_DEGREE, 2 * f.space.degree))
    _, _, wts, _ = f.space.tabulate(rule)
    v, g = f.at_quadrature(rule)
    out = {
        "l2": float(np.sqrt(np.sum(wts * (v ** 2 if not f.is_vector else (v ** 2).sum(-1))))),
        "h1_semi": float(np.sqrt(np.sum(wts * (g ** 2).reshape(*wts.shape, -1).sum(-1)))),
    }
    if f.is_vector:
        div = g[..., 0, 0] + g[..., 1, 1]
        curl = g[..., 1, 0] - g[..., 0, 1]
        out["div_l2"] = float(np.sqrt(np.sum(wts * div ** 2)))
        out["curl_l2"] = float(np.sqrt(np.sum(wts * curl ** 2)))
    return out


def inner_curl(u: FeFunction, s: Union[FeFunction, None], w: FeFunction,
               rule: Optional[QuadratureRule] = None) -> float:
    """(curl u - s, curl w) by quadrature; ``s`` a scalar FeFunction or None."""
    rule = rule or get_rule(DEFAULT_DEGREE)
    _, _, wts, _ = u.space.tabulate(rule)
    _, gu = u.at_quadrature(rule)
    _, gw = w.at_quadrature(rule)
    cu = gu[..., 1, 0] - gu[..., 0, 1]
    cw = gw[..., 1, 0] - gw[..., 0, 1]
    if s is not None:
        sv, _ = s.at_quadrature(rule)
        cu = cu - sv
    return float(np.sum(wts * cu * cw))


def locate(mesh: Mesh, x: float, y: float, tol: float = 1e-12) -> tuple[int, np.ndarray]:
    """Containing triangle and barycentric coordinates of (x, y)."""
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    rx, ry = x - p[:, 0, 0], y - p[:, 0, 1]
    l1 = (rx * d2[:, 1] - ry * d2[:, 0]) / det
    l2 = (d1[:, 0] * ry - d1[:, 1] * rx) / det
    l0 = 1.0 - l1 - l2
    lam = np.column_stack([l0, l1, l2])
    inside = np.flatnonzero(lam.min(axis=1) >= -tol)
    if inside.size == 0:
        raise ValueError(f"point ({x}, {y}) lies outside the mesh")
    k = int(inside[np.argmax(lam[inside].min(axis=1))])
    return k, lam[k]


def point_eval(f: FeFunction, x: float, y: float):
    k, lam = locate(f.space.mesh, x, y)
    vals, _ = eval_basis(f.space.degree, lam[None, :])
    dofs = f.space.element_dofs[k]
    if f.is_vector:
        return f.coefficients[:, dofs] @ vals[0]
    return float(f.coefficients[dofs] @ vals[0])


def infsup_constant(vspace: FeSpace, pspace: FeSpace, max_pressure_dofs: int = 2500) -> float:
    """Discrete inf-sup constant with velocity H1-seminorm and pressure L2 scalings.

    Homogeneous Dirichlet velocities; the constant pressure mode is excluded.
    """
    if pspace.n_dofs > max_pressure_dofs:
        raise ValueError(f"{pspace.n_dofs} pressure dofs exceed the dense limit "
                         f"{max_pressure_dofs}; skip the inf-sup check on this mesh")
    B = assemble_pressure_div(vspace, pspace).to_dense()
    K = assemble_vector_stiffness(vspace).to_dense()
    Mp = assemble_mass(pspace).to_dense()
    bnd = boundary_dofs(vspace)
    free = np.setdiff1d(np.arange(2 * vspace.n_dofs), np.concatenate([bnd, bnd + vspace.n_dofs]))
    Bf = B[:, free]
    S = Bf @ scipy.linalg.solve(K[np.ix_(free, free)], Bf.T, assume_a="pos")
    ev = scipy.linalg.eigh(0.5 * (S + S.T), Mp, eigvals_only=True)
    # smallest eigenvalue belongs to the constant pressure
    return float(np.sqrt(max(ev[1], 0.0)))
