"""Dense reference assembly built independently of ``savflow.spaces``.

Each element gets its own Lagrange basis expressed in physical monomials
(solved from a Vandermonde system at the element nodes) and is integrated with
a Duffy-collapsed Gauss-Legendre rule in physical coordinates. Global indices
are found by matching node coordinates against the space's DOF coordinates,
so only the numbering convention is shared with the library.
"""
import numpy as np

N_GAUSS = 9


def _exponents(degree):
    return [(a, k - a) for k in range(degree + 1) for a in range(k, -1, -1)]


def _duffy(tri):
    """Physical points and weights of a collapsed Gauss-Legendre rule on ``tri``."""
    g, w = np.polynomial.legendre.leggauss(N_GAUSS)
    u, wu = 0.5 * (g + 1), 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    W = np.outer(wu, wu) * (1 - U)
    s, t = U.ravel(), (V * (1 - U)).ravel()
    p0, p1, p2 = tri
    J = np.column_stack([p1 - p0, p2 - p0])
    pts = p0 + np.column_stack([s, t]) @ J.T
    return pts, W.ravel() * abs(np.linalg.det(J))


class ElementBasis:
    """Lagrange basis of one element as monomial coefficients."""

    def __init__(self, nodes, degree):
        self.exps = _exponents(degree)
        V = np.array([[x ** a * y ** b for a, b in self.exps] for x, y in nodes])
        self.coef = np.linalg.inv(V)  # column j gives basis j

    def values(self, pts):
        M = np.column_stack([pts[:, 0] ** a * pts[:, 1] ** b for a, b in self.exps])
        return M @ self.coef

    def grads(self, pts):
        x, y = pts[:, 0], pts[:, 1]
        dx = np.column_stack([a * x ** max(a - 1, 0) * y ** b if a else 0 * x for a, b in self.exps])
        dy = np.column_stack([b * x ** a * y ** max(b - 1, 0) if b else 0 * x for a, b in self.exps])
        return np.stack([dx @ self.coef, dy @ self.coef], axis=-1)  # (nq, nb, 2)


def element_nodes(mesh, k, degree):
    v = mesh.vertices[mesh.triangles[k]]
    if degree == 1:
        return v
    mids = [(v[0] + v[1]) / 2, (v[1] + v[2]) / 2, (v[2] + v[0]) / 2]
    return np.vstack([v, mids])


def global_index(space, nodes):
    out = []
    for q in nodes:
        d = np.hypot(*(space.dof_coords - q).T)
        i = int(np.argmin(d))
        assert d[i] < 1e-12
        out.append(i)
    return np.array(out)


def _elements(space):
    m = space.mesh
    for k in range(m.n_triangles):
        nodes = element_nodes(m, k, space.degree)
        yield k, ElementBasis(nodes, space.degree), global_index(space, nodes), \
            _duffy(m.vertices[m.triangles[k]])


def scalar_form(space, kind):
    n = space.n_dofs
    A = np.zeros((n, n))
    for _, basis, idx, (pts, w) in _elements(space):
        if kind == "mass":
            v = basis.values(pts)
            local = (v * w[:, None]).T @ v
        else:
            g = basis.grads(pts)
            local = np.einsum("q,qid,qjd->ij", w, g, g)
        A[np.ix_(idx, idx)] += local
    return A


def _vector_ops(g, kind):
    """(nq, 2 nb) operator applied to each blocked vector basis function."""
    if kind == "div":
        return np.hstack([g[..., 0], g[..., 1]])
    # curl of (phi, 0) is -d_y phi, of (0, phi) is d_x phi
    return np.hstack([-g[..., 1], g[..., 0]])


def vector_form(space, kind, coef=None):
    n = space.n_dofs
    A = np.zeros((2 * n, 2 * n))
    for k, basis, idx, (pts, w) in _elements(space):
        c = 1.0 if coef is None else np.broadcast_to(coef, (space.mesh.n_triangles,))[k]
        ops = _vector_ops(basis.grads(pts), kind)
        vidx = np.concatenate([idx, idx + n])
        A[np.ix_(vidx, vidx)] += c * np.einsum("q,qi,qj->ij", w, ops, ops)
    return A


def mixed_form(vspace, sspace, kind, coef=None):
    n = vspace.n_dofs
    A = np.zeros((sspace.n_dofs, 2 * n))
    m = vspace.mesh
    for k in range(m.n_triangles):
        vn = element_nodes(m, k, vspace.degree)
        sn = element_nodes(m, k, sspace.degree)
        vb, sb = ElementBasis(vn, vspace.degree), ElementBasis(sn, sspace.degree)
        vidx, sidx = global_index(vspace, vn), global_index(sspace, sn)
        pts, w = _duffy(m.vertices[m.triangles[k]])
        c = 1.0 if coef is None else np.broadcast_to(coef, (m.n_triangles,))[k]
        ops = _vector_ops(vb.grads(pts), kind)
        A[np.ix_(sidx, np.concatenate([vidx, vidx + n]))] += c * np.einsum("q,qi,qj->ij", w, sb.values(pts), ops)
    return A


def convection(space, beta_coef):
    """Skew form 0.5[(b.grad u, v) - (b.grad v, u)] for b given by P2 coefficients (2, n)."""
    n = space.n_dofs
    A = np.zeros((n, n))
    for _, basis, idx, (pts, w) in _elements(space):
        v = basis.values(pts)
        g = basis.grads(pts)
        b = np.stack([v @ beta_coef[0, idx], v @ beta_coef[1, idx]], axis=-1)
        adv = np.einsum("qd,qjd->qj", b, g)
        full = np.einsum("q,qj,qi->ij", w, adv, v)  # row i test, column j trial
        A[np.ix_(idx, idx)] += 0.5 * (full - full.T)
    out = np.zeros((2 * n, 2 * n))
    out[:n, :n] = A
    out[n:, n:] = A
    return out


def load(space, f, t=0.0):
    n = space.n_dofs
    out = np.zeros(2 * n)
    for _, basis, idx, (pts, w) in _elements(space):
        v = basis.values(pts)
        f1, f2 = f(pts[:, 0], pts[:, 1], t)
        out[idx] += (w * np.broadcast_to(f1, w.shape)) @ v
        out[idx + n] += (w * np.broadcast_to(f2, w.shape)) @ v
    return out


def mean(space):
    out = np.zeros(space.n_dofs)
    for _, basis, idx, (pts, w) in _elements(space):
        out[idx] += w @ basis.values(pts)
    return out
