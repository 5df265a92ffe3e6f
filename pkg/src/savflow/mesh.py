"""Conforming triangle meshes with boundary markers.

Structured unit-square meshes, graded unstructured meshes of the
channel-with-cylinder and offset-annulus domains, uniform red refinement and
a small line-oriented text format.
"""
from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.spatial import Delaunay

# channel-with-cylinder geometry (2D flow-around-cylinder benchmark)
CHANNEL_LENGTH = 2.2
CHANNEL_HEIGHT = 0.41
CYLINDER_CENTER = (0.2, 0.2)
CYLINDER_RADIUS = 0.05

INFLOW, OUTFLOW, WALLS, CYLINDER = 1, 2, 3, 4
OUTER_CIRCLE, INNER_CIRCLE = 1, 2

# offset-annulus geometry
ANNULUS_OUTER_RADIUS = 1.0
ANNULUS_INNER_RADIUS = 0.1
ANNULUS_INNER_CENTER = (0.5, 0.0)


class MeshError(ValueError):
    pass


class MeshFormatError(MeshError):
    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(eq=False)
class Mesh:
    """Triangulation: ``vertices`` (nv, 2), CCW ``triangles`` (nt, 3) and
    ``boundary_edges`` rows ``(v0, v1, marker)``."""

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.boundary_edges = np.ascontiguousarray(self.boundary_edges, dtype=np.int64).reshape(-1, 3)
        for arr in (self.vertices, self.triangles, self.boundary_edges):
            arr.flags.writeable = False

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def _edge_data(self):
        # local edge j joins local vertices (j, j+1 mod 3)
        t = self.triangles
        local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1)  # (nt, 3, 2)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(flat, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 3)

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs."""
        return self._edge_data[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """(nt, 3) global edge index of local edge (j, j+1)."""
        return self._edge_data[1]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_triangle_count(self) -> np.ndarray:
        return np.bincount(self.triangle_edges.ravel(), minlength=self.n_edges)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    @cached_property
    def element_diameters(self) -> np.ndarray:
        return self.edge_lengths[self.triangle_edges].max(axis=1)

    @property
    def h(self) -> float:
        """Maximum edge length."""
        return float(self.edge_lengths.max())

    @cached_property
    def boundary_edge_ids(self) -> np.ndarray:
        """Global edge index of each row of ``boundary_edges``."""
        lookup = {tuple(e): i for i, e in enumerate(self.edges.tolist())}
        out = np.empty(len(self.boundary_edges), dtype=np.int64)
        for k, (a, b, _) in enumerate(self.boundary_edges.tolist()):
            key = (a, b) if a < b else (b, a)
            if key not in lookup:
                raise MeshError(f"boundary edge {k} ({a}, {b}) is not an edge of the mesh")
            out[k] = lookup[key]
        return out

    @property
    def markers(self) -> set[int]:
        return set(self.boundary_edges[:, 2].tolist())

    def marked_edges(self, markers: Iterable[int]) -> np.ndarray:
        """Row indices of ``boundary_edges`` whose marker is in ``markers``."""
        return np.flatnonzero(np.isin(self.boundary_edges[:, 2], list(markers)))

    def boundary_vertices(self, markers: Optional[Iterable[int]] = None) -> np.ndarray:
        rows = self.boundary_edges if markers is None else self.boundary_edges[self.marked_edges(markers)]
        return np.unique(rows[:, :2])

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    def bounding_box(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def transformed(self, rotation: float = 0.0, shift=(0.0, 0.0)) -> "Mesh":
        c, s = math.cos(rotation), math.sin(rotation)
        R = np.array([[c, -s], [s, c]])
        return Mesh(self.vertices @ R.T + np.asarray(shift), self.triangles, self.boundary_edges)

    def validate(self) -> "Mesh":
        check_mesh(self)
        return self


def check_mesh(m: Mesh) -> None:
    """Raise MeshError unless ``m`` is CCW, watertight and fully marked."""
    nv = m.n_vertices
    if m.n_triangles == 0:
        raise MeshError("mesh has no triangles")
    if m.triangles.min() < 0 or m.triangles.max() >= nv:
        bad = int(np.flatnonzero((m.triangles < 0).any(1) | (m.triangles >= nv).any(1))[0])
        raise MeshError(f"triangle {bad} references a vertex outside 0..{nv - 1}")
    if len(m.boundary_edges) and (m.boundary_edges[:, :2].min() < 0 or m.boundary_edges[:, :2].max() >= nv):
        raise MeshError("boundary edge references a missing vertex")
    neg = np.flatnonzero(m.signed_areas <= 0.0)
    if neg.size:
        raise MeshError(f"triangle {int(neg[0])} is not counter-clockwise (signed area {m.signed_areas[neg[0]]:.3e})")
    counts = m.edge_triangle_count
    if counts.max() > 2:
        raise MeshError("non-manifold edge shared by more than two triangles")
    topo = set(np.flatnonzero(counts == 1).tolist())
    listed = m.boundary_edge_ids.tolist()
    if len(set(listed)) != len(listed):
        raise MeshError("duplicate boundary edge")
    if set(listed) != topo:
        raise MeshError(f"boundary edges do not match the mesh boundary "
                        f"({len(topo - set(listed))} missing, {len(set(listed) - topo)} extra)")
    if len(m.boundary_edges) and m.boundary_edges[:, 2].min() <= 0:
        raise MeshError("boundary markers must be positive")


def _boundary_from_topology(triangles: np.ndarray, marker_fn) -> np.ndarray:
    """Boundary edges oriented as in their (CCW) triangle, marked by ``marker_fn(v0, v1)``."""
    local = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    key = np.sort(local, axis=1)
    _, inv, cnt = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    bnd = local[cnt[inv.ravel()] == 1]
    marks = np.array([marker_fn(a, b) for a, b in bnd], dtype=np.int64)
    return np.column_stack([bnd, marks])


def build_unit_square(n: int) -> Mesh:
    """Structured n x n mesh of [0,1]^2, each cell cut by its SW-NE diagonal."""
    if n < 1:
        raise MeshError("unit square needs n >= 1")
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)  # idx[j, i] -> (x_i, y_j)
    sw = idx[:-1, :-1].ravel()
    se = idx[:-1, 1:].ravel()
    nw = idx[1:, :-1].ravel()
    ne = idx[1:, 1:].ravel()
    tris = np.concatenate([np.column_stack([sw, se, ne]), np.column_stack([sw, ne, nw])])
    bnd = _boundary_from_topology(tris, lambda a, b: 1)
    return Mesh(verts, tris, bnd).validate()


def refine_uniform(m: Mesh) -> Mesh:
    """Split every triangle into four via edge midpoints; markers are inherited."""
    nv = m.n_vertices
    e = m.edges
    mid = 0.5 * (m.vertices[e[:, 0]] + m.vertices[e[:, 1]])
    verts = np.vstack([m.vertices, mid])
    t = m.triangles
    te = m.triangle_edges + nv  # midpoints of (0,1), (1,2), (2,0)
    m01, m12, m20 = te[:, 0], te[:, 1], te[:, 2]
    tris = np.concatenate([
        np.column_stack([t[:, 0], m01, m20]),
        np.column_stack([t[:, 1], m12, m01]),
        np.column_stack([t[:, 2], m20, m12]),
        np.column_stack([m01, m12, m20]),
    ])
    bmid = m.boundary_edge_ids + nv
    b = m.boundary_edges
    bnd = np.concatenate([
        np.column_stack([b[:, 0], bmid, b[:, 2]]),
        np.column_stack([bmid, b[:, 1], b[:, 2]]),
    ])
    return Mesh(verts, tris, bnd).validate()


# ---------------------------------------------------------------------------
# unstructured generation (force-based smoothing with Delaunay retriangulation,
# after Persson & Strang's distmesh)


def _place_on_curve(curve: Callable[[np.ndarray], np.ndarray], length: float,
                    fh: Callable[[np.ndarray], np.ndarray], closed: bool,
                    min_segments: int = 1) -> np.ndarray:
    """Points along ``curve(s)``, s in [0,1], spaced according to the size function."""
    s = np.linspace(0.0, 1.0, 2001)
    dens = 1.0 / fh(curve(s))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(s))]) * length
    nseg = max(min_segments, int(math.ceil(cum[-1] - 1e-9)))
    targets = np.linspace(0.0, cum[-1], nseg + 1)
    spos = np.interp(targets, cum, s)
    pts = curve(spos)
    return pts[:-1] if closed else pts


def _circle(center, radius, start=0.0):
    cx, cy = center

    def curve(s):
        th = start + 2.0 * math.pi * np.asarray(s)
        return np.column_stack([cx + radius * np.cos(th), cy + radius * np.sin(th)])

    return curve


def _segment(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)

    def curve(s):
        s = np.asarray(s)[:, None]
        return (1 - s) * a + s * b

    return curve


def _distmesh(fd, fh, h0: float, bbox, pfix: np.ndarray, seed: int = 0,
              max_iter: int = 400) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = bbox
    xs = np.arange(x0, x1 + h0, h0)
    ys = np.arange(y0, y1 + h0 * math.sqrt(3) / 2, h0 * math.sqrt(3) / 2)
    X, Y = np.meshgrid(xs, ys)
    X[1::2, :] += h0 / 2
    p = np.column_stack([X.ravel(), Y.ravel()])
    p = p[fd(p) < -0.6 * fh(p)]
    r0 = 1.0 / fh(p) ** 2
    p = p[rng.random(len(p)) < r0 / r0.max()]
    nfix = len(pfix)
    p = np.vstack([pfix, p])

    geps = 1e-3 * h0
    deps = math.sqrt(np.finfo(float).eps) * h0
    Fscale, dt, ttol, dptol = 1.2, 0.2, 0.1, 1e-3
    pold = np.full_like(p, np.inf)
    t = bars = None
    for _ in range(max_iter):
        if np.max(np.linalg.norm(p - pold, axis=1)) / h0 > ttol:
            pold = p.copy()
            t = Delaunay(p).simplices
            t = t[fd(p[t].mean(axis=1)) < -geps]
            bars = np.unique(np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [0, 2]]]), axis=1), axis=0)
        barvec = p[bars[:, 0]] - p[bars[:, 1]]
        L = np.linalg.norm(barvec, axis=1)
        hbars = fh(0.5 * (p[bars[:, 0]] + p[bars[:, 1]]))
        L0 = hbars * Fscale * math.sqrt(np.sum(L ** 2) / np.sum(hbars ** 2))
        F = np.maximum(L0 - L, 0.0)
        Fvec = (F / L)[:, None] * barvec
        Ftot = np.zeros_like(p)
        np.add.at(Ftot, bars[:, 0], Fvec)
        np.add.at(Ftot, bars[:, 1], -Fvec)
        Ftot[:nfix] = 0.0
        p = p + dt * Ftot
        # pull escaped interior points back inside, away from the fixed boundary nodes
        d = fd(p)
        out = np.flatnonzero(d > -0.3 * fh(p))
        out = out[out >= nfix]
        if out.size:
            q = p[out]
            gx = (fd(q + [deps, 0.0]) - d[out]) / deps
            gy = (fd(q + [0.0, deps]) - d[out]) / deps
            g2 = gx ** 2 + gy ** 2 + 1e-30
            shift = d[out] + 0.3 * fh(q)
            p[out] = q - (shift / g2)[:, None] * np.column_stack([gx, gy])
        move = np.linalg.norm(dt * Ftot[nfix:], axis=1)
        if move.size and move.max() / h0 < dptol:
            break
    t = Delaunay(p).simplices
    t = t[fd(p[t].mean(axis=1)) < -geps]
    return p, t


def _finish_unstructured(p: np.ndarray, t: np.ndarray, segments: dict) -> Mesh:
    used = np.unique(t)
    remap = -np.ones(len(p), dtype=np.int64)
    remap[used] = np.arange(len(used))
    p = p[used]
    t = remap[t]
    seg = {(int(remap[a]), int(remap[b])) if remap[a] < remap[b] else (int(remap[b]), int(remap[a])): mk
           for (a, b), mk in segments.items() if remap[a] >= 0 and remap[b] >= 0}
    area = 0.5 * ((p[t[:, 1], 0] - p[t[:, 0], 0]) * (p[t[:, 2], 1] - p[t[:, 0], 1])
                  - (p[t[:, 1], 1] - p[t[:, 0], 1]) * (p[t[:, 2], 0] - p[t[:, 0], 0]))
    flip = area < 0
    t[flip] = t[flip][:, [0, 2, 1]]
    if np.any(np.abs(area) < 1e-14):
        raise MeshError("mesh generation produced a degenerate triangle")

    def marker(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in seg:
            raise MeshError(f"boundary edge ({a}, {b}) was not recovered from the boundary discretization")
        return seg[key]

    bnd = _boundary_from_topology(t, marker)
    if len(bnd) != len(seg):
        raise MeshError(f"{len(seg) - len(bnd)} boundary segments missing from the triangulation")
    return Mesh(p, t, bnd).validate()


def _segments_from_chain(start: int, n: int, closed: bool, marker: int) -> dict:
    out = {}
    for k in range(n - (0 if closed else 1)):
        a = start + k
        b = start + (k + 1) % n
        out[(min(a, b), max(a, b))] = marker
    return out


def build_channel_cylinder(h_target: float = 0.04, h_cylinder: Optional[float] = None,
                           grading: float = 0.3, seed: int = 0) -> Mesh:
    """Channel [0, 2.2] x [0, 0.41] minus the disk of diameter 0.1 centred at (0.2, 0.2).

    ``h_target`` is the far-field edge length; ``h_cylinder`` (default
    ``h_target / 4``) the edge length on the obstacle, growing away from it
    at rate ``grading``. Markers: 1 inflow, 2 outflow, 3 walls, 4 cylinder.
    """
    if h_cylinder is None:
        h_cylinder = h_target / 4
    if h_target <= 0 or h_cylinder <= 0:
        raise MeshError("mesh sizes must be positive")
    circumference = 2 * math.pi * CYLINDER_RADIUS
    if circumference / h_cylinder < 16 - 1e-9:
        raise MeshError(f"h_cylinder={h_cylinder} resolves the cylinder with fewer than 16 edges")
    if h_target > CHANNEL_HEIGHT / 3:
        raise MeshError("h_target too coarse for the channel height")
    c = np.array(CYLINDER_CENTER)
    L, H, r = CHANNEL_LENGTH, CHANNEL_HEIGHT, CYLINDER_RADIUS

    def fh(q):
        d = np.linalg.norm(np.atleast_2d(q) - c, axis=1) - r
        return np.minimum(h_target, h_cylinder + grading * np.maximum(d, 0.0))

    def fd(q):
        q = np.atleast_2d(q)
        drect = -np.minimum(np.minimum(q[:, 0], L - q[:, 0]), np.minimum(q[:, 1], H - q[:, 1]))
        dcirc = r - np.linalg.norm(q - c, axis=1)
        return np.maximum(drect, dcirc)

    corners = [(0.0, 0.0), (L, 0.0), (L, H), (0.0, H)]
    side_marker = [WALLS, OUTFLOW, WALLS, INFLOW]
    chain, marks = [], []
    for k in range(4):
        a, b = corners[k], corners[(k + 1) % 4]
        pts = _place_on_curve(_segment(a, b), math.dist(a, b), fh, closed=False)[:-1]
        chain.extend(pts.tolist())
        marks.extend([side_marker[k]] * len(pts))
    n_outer = len(chain)
    segments = {}
    for k in range(n_outer):
        a, b = k, (k + 1) % n_outer
        segments[(min(a, b), max(a, b))] = marks[k]
    circ = _place_on_curve(_circle(c, r), circumference, fh, closed=True, min_segments=16)
    segments.update(_segments_from_chain(n_outer, len(circ), True, CYLINDER))
    pfix = np.vstack([np.array(chain), circ])
    p, t = _distmesh(fd, fh, h_cylinder, (0.0, 0.0, L, H), pfix, seed=seed)
    # circle vertices: snap exactly onto the circle
    p[n_outer:n_outer + len(circ)] = c + r * (p[n_outer:n_outer + len(circ)] - c) / np.linalg.norm(
        p[n_outer:n_outer + len(circ)] - c, axis=1)[:, None]
    return _finish_unstructured(p, t, segments)


def build_offset_annulus(h_target: float = 0.08, h_inner: Optional[float] = 0.025,
                         grading: float = 0.3, seed: int = 0) -> Mesh:
    """Unit disk minus the disk of radius 0.1 centred at (0.5, 0).

    Markers: 1 outer circle, 2 inner circle.
    """
    if h_inner is None:
        h_inner = h_target / 3
    if h_target <= 0 or h_inner <= 0:
        raise MeshError("mesh sizes must be positive")
    r1, r2 = ANNULUS_OUTER_RADIUS, ANNULUS_INNER_RADIUS
    c = np.array(ANNULUS_INNER_CENTER)
    if 2 * math.pi * r2 / h_inner < 16 - 1e-9:
        raise MeshError(f"h_inner={h_inner} resolves the inner circle with fewer than 16 edges")
    if 2 * math.pi * r1 / h_target < 16 - 1e-9:
        raise MeshError(f"h_target={h_target} resolves the outer circle with fewer than 16 edges")

    def fh(q):
        d = np.linalg.norm(np.atleast_2d(q) - c, axis=1) - r2
        return np.minimum(h_target, h_inner + grading * np.maximum(d, 0.0))

    def fd(q):
        q = np.atleast_2d(q)
        return np.maximum(np.linalg.norm(q, axis=1) - r1, r2 - np.linalg.norm(q - c, axis=1))

    outer = _place_on_curve(_circle((0.0, 0.0), r1), 2 * math.pi * r1, fh, closed=True, min_segments=16)
    inner = _place_on_curve(_circle(c, r2), 2 * math.pi * r2, fh, closed=True, min_segments=16)
    segments = _segments_from_chain(0, len(outer), True, OUTER_CIRCLE)
    segments.update(_segments_from_chain(len(outer), len(inner), True, INNER_CIRCLE))
    pfix = np.vstack([outer, inner])
    p, t = _distmesh(fd, fh, h_inner, (-r1, -r1, r1, r1), pfix, seed=seed)
    return _finish_unstructured(p, t, segments)


# ---------------------------------------------------------------------------
# text format


def write_mesh(m: Mesh, path) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".mesh-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(f"{m.n_vertices} {m.n_triangles} {len(m.boundary_edges)}\n")
            for x, y in m.vertices.tolist():
                f.write(f"{x!r} {y!r}\n")
            for a, b, c in m.triangles.tolist():
                f.write(f"{a} {b} {c}\n")
            for a, b, mk in m.boundary_edges.tolist():
                f.write(f"{a} {b} {mk}\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_mesh(path) -> Mesh:
    with open(path) as f:
        lines = [(i + 1, ln.split()) for i, ln in enumerate(f)
                 if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise MeshFormatError("empty mesh file")
    lineno, head = lines[0]
    try:
        nv, nt, nb = (int(v) for v in head)
    except ValueError:
        raise MeshFormatError("header must be 'nv nt nb'", lineno) from None
    if min(nv, nt, nb) < 0:
        raise MeshFormatError("negative count in header", lineno)
    body = lines[1:]
    if len(body) != nv + nt + nb:
        where = body[-1][0] if body else lineno
        raise MeshFormatError(f"expected {nv + nt + nb} records after the header, found {len(body)}", where)

    def parse(rows, n, kind, conv):
        out = []
        for ln, toks in rows:
            if len(toks) != n:
                raise MeshFormatError(f"expected {n} fields in {kind} record", ln)
            try:
                out.append([conv(v) for v in toks])
            except ValueError:
                raise MeshFormatError(f"bad number in {kind} record", ln) from None
        return out

    verts = parse(body[:nv], 2, "vertex", float)
    tris = parse(body[nv:nv + nt], 3, "triangle", int)
    bnd = parse(body[nv + nt:], 3, "boundary", int)
    for k, (ln, _) in enumerate(body[nv:nv + nt]):
        if any(v < 0 or v >= nv for v in tris[k]):
            raise MeshFormatError(f"triangle {k} references a vertex outside 0..{nv - 1}", ln)
    for k, (ln, _) in enumerate(body[nv + nt:]):
        if any(v < 0 or v >= nv for v in bnd[k][:2]):
            raise MeshFormatError(f"boundary edge {k} references a vertex outside 0..{nv - 1}", ln)
    m = Mesh(np.array(verts, float).reshape(-1, 2), np.array(tris, np.int64).reshape(-1, 3),
             np.array(bnd, np.int64).reshape(-1, 3))
    neg = np.flatnonzero(m.signed_areas <= 0)
    if neg.size:
        k = int(neg[0])
        raise MeshFormatError(f"triangle {k} has non-positive signed area (orientation error)",
                              body[nv + k][0])
    return m.validate()
