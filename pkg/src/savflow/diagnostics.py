"""Quantities of interest and discrete balance checks for SAV runs.

All integrals here are recomputed by quadrature with rules distinct from the
ones used during assembly, so they do not share arithmetic with the solver.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .mesh import CYLINDER, Mesh
from .quadrature import collapsed_gauss, get_rule
from .spaces import (DATA_DEGREE, FeFunction, dirichlet_data, l2_project_curl,
                     point_eval)

# exact for products of two P2 fields and P2 x cubic loads, but not the assembly rule
DIAG_RULE = collapsed_gauss(8)
DATA_RULE = get_rule(DATA_DEGREE)

DRAG_PREFACTOR = 20.0  # 2 / (rho L U^2) with rho = 1, L = 0.1, U = 1
PROBE_FRONT = (0.15, 0.2)
PROBE_BACK = (0.25, 0.2)


@dataclass
class DiagnosticsRecord:
    time: float
    kinetic_energy: float
    enstrophy: float
    div_l2: float
    grad_l2: float
    curl_l2: float
    extrap_l2: float
    alpha1_curl_sq: float
    force_l2: float = 0.0
    drag: Optional[float] = None
    lift: Optional[float] = None
    pressure_drop: Optional[float] = None
    energy_identity_residual: Optional[float] = None
    sav_bound_slack: Optional[float] = None
    linear_residual: Optional[float] = None
    divergence_inf: Optional[float] = None
    error_l2: Optional[float] = None
    error_h1: Optional[float] = None

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class EnergyLedger:
    """Terms of the per-step energy balance; ``residual`` is their signed sum."""

    d_energy: float
    d_extrap: float
    curvature: float
    viscous: float
    subgrid: float
    graddiv: float
    forcing: float

    @property
    def terms(self) -> list[float]:
        return [self.d_energy, self.d_extrap, self.curvature, self.viscous,
                self.subgrid, self.graddiv, -self.forcing]

    @property
    def residual(self) -> float:
        return float(sum(self.terms))

    @property
    def relative_residual(self) -> float:
        scale = max(abs(t) for t in self.terms)
        return abs(self.residual) / scale if scale > 0 else 0.0


# ---------------------------------------------------------------------------
# field integrals


def _weights(space, rule=DIAG_RULE):
    return space.tabulate(rule)[2]


def _vec_integrals(u: FeFunction, rule=DIAG_RULE) -> dict:
    w = _weights(u.space, rule)
    v, g = u.at_quadrature(rule)
    div = g[..., 0, 0] + g[..., 1, 1]
    curl = g[..., 1, 0] - g[..., 0, 1]
    return {
        "l2sq": float(np.sum(w * (v ** 2).sum(-1))),
        "gradsq": float(np.sum(w * (g ** 2).sum((-1, -2)))),
        "divsq": float(np.sum(w * div ** 2)),
        "curlsq": float(np.sum(w * curl ** 2)),
        "curl": curl,
        "w": w,
    }


def _l2sq(u: FeFunction) -> float:
    return _vec_integrals(u)["l2sq"]


def _combo(a: float, u: FeFunction, b: float, v: FeFunction, c: float = 0.0, w: Optional[FeFunction] = None) -> FeFunction:
    coef = a * u.coefficients + b * v.coefficients
    if w is not None:
        coef = coef + c * w.coefficients
    return FeFunction(u.space, coef)


def energy(u: FeFunction) -> float:
    return 0.5 * _l2sq(u)


def enstrophy(u: FeFunction, nu: float) -> float:
    return 0.5 * nu * _vec_integrals(u)["curlsq"]


def _alpha_field(alpha1, ne: int) -> np.ndarray:
    a = np.asarray(alpha1, dtype=float)
    return np.full(ne, float(a)) if a.ndim == 0 else a


def force_l2(space, force: Optional[Callable], t: float) -> float:
    if force is None:
        return 0.0
    _, _, w, pts = space.tabulate(DATA_RULE)
    f1, f2 = force(pts[..., 0], pts[..., 1], t)
    f1 = np.broadcast_to(f1, w.shape)
    f2 = np.broadcast_to(f2, w.shape)
    return float(np.sqrt(np.sum(w * (f1 ** 2 + f2 ** 2))))


def force_work(u: FeFunction, force: Optional[Callable], t: float) -> float:
    """(f(t), u)."""
    if force is None:
        return 0.0
    _, _, w, pts = u.space.tabulate(DATA_RULE)
    v, _ = u.at_quadrature(DATA_RULE)
    f1, f2 = force(pts[..., 0], pts[..., 1], t)
    return float(np.sum(w * (f1 * v[..., 0] + f2 * v[..., 1])))


# ---------------------------------------------------------------------------
# discrete balance checks


def energy_identity_check(u_next: FeFunction, u_curr: FeFunction, u_prev: FeFunction,
                          s_next: Optional[FeFunction], dt: float, nu: float, alpha1, alpha2: float,
                          force: Optional[Callable], t_next: float, sav_enabled: bool = True) -> EnergyLedger:
    """Per-step energy balance obtained by testing the momentum equation with ``u_next``.

    The subgrid term is ``alpha1 (curl u_next - s_next, curl u_next)`` where
    ``s_next`` is the projection of ``curl u_curr``; pass ``s_next=None`` to have
    it recomputed. Valid only for homogeneous Dirichlet data.
    """
    a, b, c = u_next, u_curr, u_prev
    curv = _combo(1.0, a, -2.0, b, 1.0, c)
    ia = _vec_integrals(a)
    subgrid = 0.0
    if sav_enabled and np.any(np.asarray(alpha1) != 0):
        if s_next is None:
            raise ValueError("s_next (or the coarse space) is required when SAV is enabled")
        sv, _ = s_next.at_quadrature(DIAG_RULE)
        al = _alpha_field(alpha1, a.space.mesh.n_triangles)[:, None]
        subgrid = float(np.sum(ia["w"] * al * (ia["curl"] - sv) * ia["curl"]))
    return EnergyLedger(
        d_energy=(ia["l2sq"] - _l2sq(b)) / (4 * dt),
        d_extrap=(_l2sq(_combo(2.0, a, -1.0, b)) - _l2sq(_combo(2.0, b, -1.0, c))) / (4 * dt),
        curvature=_l2sq(curv) / (4 * dt),
        viscous=nu * ia["gradsq"],
        subgrid=subgrid,
        graddiv=alpha2 * ia["divsq"],
        forcing=force_work(a, force, t_next),
    )


def sav_bound_check(s_next: FeFunction, u_curr: FeFunction) -> float:
    """||curl u_curr|| - ||s_next||; nonnegative for an L2 projection."""
    curl = math.sqrt(_vec_integrals(u_curr)["curlsq"])
    w = _weights(s_next.space)
    sv, _ = s_next.at_quadrature(DIAG_RULE)
    return curl - math.sqrt(float(np.sum(w * sv ** 2)))


def poincare_bound(mesh: Mesh) -> float:
    """Poincare-Friedrichs constant bound d / pi, d the narrower bounding-box width."""
    x0, y0, x1, y1 = mesh.bounding_box()
    return min(x1 - x0, y1 - y0) / math.pi


def stability_ledger(records: Sequence[DiagnosticsRecord], params, c_pf: float) -> tuple[float, float]:
    """Both sides of the unconditional stability bound, starting from the first step.

    ``records[k]`` describes the state at ``t^k``; the dual norm of f is
    replaced by ``c_pf * ||f||``.
    """
    N = len(records) - 1
    if N < 1:
        raise ValueError("stability ledger needs at least one completed step")
    dt, nu = params.dt, params.nu
    a2 = params.alpha2
    r1, rN = records[1], records[N]
    lhs = 2 * rN.kinetic_energy + rN.extrap_l2 ** 2 + 2 * dt * rN.alpha1_curl_sq
    rhs = 2 * r1.kinetic_energy + r1.extrap_l2 ** 2 + 2 * dt * r1.alpha1_curl_sq
    for n in range(1, N):
        r = records[n + 1]
        lhs += 2 * dt * (nu * r.grad_l2 ** 2 + 2 * a2 * r.div_l2 ** 2)
        rhs += 2 * dt * (c_pf * r.force_l2) ** 2 / nu
    return lhs, rhs


# ---------------------------------------------------------------------------
# cylinder functionals


def _obstacle_edges(mesh: Mesh, marker: int = CYLINDER):
    rows = mesh.marked_edges([marker])
    if rows.size == 0:
        raise ValueError(f"mesh has no boundary edges with marker {marker}")
    eids = mesh.boundary_edge_ids[rows]
    tri, loc = np.nonzero(np.isin(mesh.triangle_edges, eids))
    order = {int(e): k for k, e in enumerate(eids)}
    pos = np.array([order[int(mesh.triangle_edges[t, j])] for t, j in zip(tri, loc)])
    out_tri = np.empty(len(eids), dtype=np.int64)
    out_loc = np.empty(len(eids), dtype=np.int64)
    out_tri[pos] = tri
    out_loc[pos] = loc
    return out_tri, out_loc


_G3 = (np.array([0.5 - math.sqrt(0.15), 0.5, 0.5 + math.sqrt(0.15)]),
       np.array([5.0, 8.0, 5.0]) / 18.0)


def drag_lift(u: FeFunction, p: FeFunction, mesh: Mesh, nu: float, prefactor: float = DRAG_PREFACTOR,
              marker: int = CYLINDER) -> tuple[float, float]:
    """Drag and lift coefficients as boundary integrals over the obstacle.

    ``n`` is the unit normal pointing out of the obstacle into the fluid and the
    tangent is ``(n_y, -n_x)``; three Gauss points per edge.
    """
    from .spaces import eval_basis

    tri, loc = _obstacle_edges(mesh, marker)
    _, _, invT, _ = u.space.geometry()
    s, ws = _G3
    fd = fl = 0.0
    for t, j in zip(tri.tolist(), loc.tolist()):
        va = mesh.vertices[mesh.triangles[t, j]]
        vb = mesh.vertices[mesh.triangles[t, (j + 1) % 3]]
        d = vb - va
        length = float(np.hypot(*d))
        # fluid lies to the left of a CCW boundary edge, so the left normal points into it
        n = np.array([-d[1], d[0]]) / length
        tan = np.array([n[1], -n[0]])
        lam = np.zeros((3, 3))
        lam[:, j] = 1 - s
        lam[:, (j + 1) % 3] = s
        vals_u, rg_u = eval_basis(u.space.degree, lam)
        vals_p, _ = eval_basis(p.space.degree, lam)
        gu = np.einsum("qbk,dk->qbd", rg_u, invT[t])  # (3, nb, 2)
        cu = u.coefficients[:, u.space.element_dofs[t]]  # (2, nb)
        grad = np.einsum("cb,qbd->qcd", cu, gu)  # du_c/dx_d
        pq = vals_p @ p.coefficients[p.space.element_dofs[t]]
        dut_dn = np.einsum("c,qcd,d->q", tan, grad, n)
        fd += length * np.sum(ws * (nu * dut_dn * n[1] - pq * n[0]))
        fl += length * np.sum(ws * (nu * dut_dn * n[0] + pq * n[1]))
    return prefactor * fd, -prefactor * fl


def pressure_drop(p: FeFunction) -> float:
    return point_eval(p, *PROBE_FRONT) - point_eval(p, *PROBE_BACK)


# ---------------------------------------------------------------------------
# errors against an exact solution


def snapshot_errors(u: FeFunction, exact: Callable, exact_grad: Optional[Callable], t: float) -> tuple[float, Optional[float]]:
    """L2 error and H1-seminorm error of ``u`` against ``exact(x, y, t)``."""
    _, _, w, pts = u.space.tabulate(DATA_RULE)
    v, g = u.at_quadrature(DATA_RULE)
    x, y = pts[..., 0], pts[..., 1]
    e1, e2 = exact(x, y, t)
    l2 = float(np.sqrt(np.sum(w * ((v[..., 0] - e1) ** 2 + (v[..., 1] - e2) ** 2))))
    if exact_grad is None:
        return l2, None
    G = exact_grad(x, y, t)  # G[c][d] = d u_c / d x_d
    err = sum((g[..., c, d] - np.broadcast_to(G[c][d], w.shape)) ** 2 for c in range(2) for d in range(2))
    return l2, float(np.sqrt(np.sum(w * err)))


ERROR_MODES = ("l2_in_time_of_l2", "l2_in_time_of_h1", "time_rms_of_l2", "time_rms_of_h1")


def aggregate_in_time(errors: Sequence[float], dt: float, mode: str) -> float:
    """Combine per-step spatial errors ``e_n`` (n = 1..N) into one number.

    ``l2_in_time_*`` is ``(dt * sum e_n^2)^(1/2)``; ``time_rms_*`` divides the
    sum by the final time ``N dt`` as well, i.e. the root mean square in time.
    """
    if mode not in ERROR_MODES:
        raise ValueError(f"unknown error mode {mode!r}; expected one of {ERROR_MODES}")
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        return 0.0
    total = dt * float(np.sum(e ** 2))
    if mode.startswith("time_rms"):
        total /= dt * e.size
    return math.sqrt(total)


def error_norms(snapshots: Iterable, exact: Callable, mode: str = "l2_in_time_of_l2",
                exact_grad: Optional[Callable] = None, dt: Optional[float] = None) -> float:
    """Time-aggregated error over ``(t, u_h)`` snapshots, see :func:`aggregate_in_time`.

    The ``*_of_h1`` modes use the H1 seminorm and need ``exact_grad``.
    """
    snaps = list(snapshots)
    if mode not in ERROR_MODES:
        raise ValueError(f"unknown error mode {mode!r}; expected one of {ERROR_MODES}")
    h1 = mode.endswith("h1")
    if h1 and exact_grad is None:
        raise ValueError("H1 error needs the exact gradient")
    if not snaps:
        return 0.0
    if dt is None:
        times = [0.0] + [t for t, _ in snaps]
        dt = float(np.min(np.diff(times)))
    errs = []
    for t, u in snaps:
        l2, semi = snapshot_errors(u, exact, exact_grad if h1 else None, t)
        errs.append(semi if h1 else l2)
    return aggregate_in_time(errs, dt, mode)


# ---------------------------------------------------------------------------
# per-step recorder used by SavSolver.run


class Recorder:
    """Builds a :class:`DiagnosticsRecord` for the initial state and after every step."""

    def __init__(self, setup, params, cylinder: bool = False, exact: Optional[Callable] = None,
                 exact_grad: Optional[Callable] = None, check_energy: bool = True):
        self.setup = setup
        self.params = params
        self.cylinder = cylinder
        self.exact = exact
        self.exact_grad = exact_grad
        self.check_energy = check_energy
        self.ledgers: list[EnergyLedger] = []
        self._alpha = _alpha_field(params.effective_alpha1, setup.mesh.n_triangles)

    def _base(self, state) -> DiagnosticsRecord:
        u = state.u_curr
        I = _vec_integrals(u)
        extrap = _l2sq(_combo(2.0, u, -1.0, state.u_prev))
        rec = DiagnosticsRecord(
            time=state.time,
            kinetic_energy=0.5 * I["l2sq"],
            enstrophy=0.5 * self.params.nu * I["curlsq"],
            div_l2=math.sqrt(I["divsq"]),
            grad_l2=math.sqrt(I["gradsq"]),
            curl_l2=math.sqrt(I["curlsq"]),
            extrap_l2=math.sqrt(extrap),
            alpha1_curl_sq=float(np.sum(I["w"] * self._alpha[:, None] * I["curl"] ** 2)),
            force_l2=force_l2(u.space, self.setup.force, state.time),
        )
        if self.cylinder:
            rec.drag, rec.lift = drag_lift(u, state.p_curr, self.setup.mesh, self.params.nu)
            rec.pressure_drop = pressure_drop(state.p_curr)
        if self.exact is not None:
            rec.error_l2, rec.error_h1 = snapshot_errors(u, self.exact, self.exact_grad, state.time)
        return rec

    def initial(self, state) -> DiagnosticsRecord:
        return self._base(state)

    def _homogeneous(self, t: float) -> bool:
        _, vals = dirichlet_data(self.setup.velocity_space, self.setup.dirichlet, t)
        return not np.any(vals != 0.0)

    def record(self, old, new, report) -> DiagnosticsRecord:
        rec = self._base(new)
        rec.linear_residual = report.residual
        rec.divergence_inf = report.divergence_inf
        p = self.params
        if p.sav_enabled:
            rec.sav_bound_slack = sav_bound_check(report.s_next, old.u_curr)
        if self.check_energy and self._homogeneous(new.time):
            s_indep = l2_project_curl(old.u_curr, self.setup.coarse_space) if p.sav_enabled else None
            ledger = energy_identity_check(new.u_curr, old.u_curr, old.u_prev, s_indep, p.dt, p.nu,
                                           p.effective_alpha1, p.alpha2, self.setup.force, new.time,
                                           sav_enabled=p.sav_enabled)
            self.ledgers.append(ledger)
            rec.energy_identity_residual = ledger.relative_residual
        return rec
