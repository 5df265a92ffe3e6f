"""BDF2 time stepping with linear extrapolation of the convecting velocity and
subgrid artificial viscosity acting through a projected vorticity.

Per step, with ``beta = 2 u^n - u^{n-1}`` and ``s = P_L curl u^n``::

    (3 u - 4 u^n + u^{n-1}) / (2 dt) + nu K u + N(beta) u - B^T p
        + alpha1 (curl u, curl v) - alpha1 (s, curl v) + alpha2 (div u, div v) = f(t^{n+1})
    B u = 0,  mean(p) = 0

The projection only involves ``u^n`` so it is solved first, then one
monolithic velocity/pressure system.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .linalg import (BlockSystem, SparseMatrix, assemble_block, is_null_vector, solve_bordered,
                     solve_gmres, solve_sparse_lu, spmv)
from .mesh import Mesh
from .spaces import (DirichletBc, FeFunction, FeSpace, apply_dirichlet,
                     assemble_convection, assemble_curl_coupling, assemble_curlcurl,
                     assemble_divdiv, assemble_load, assemble_pressure_div,
                     assemble_vector_mass, assemble_vector_stiffness, dirichlet_data,
                     interpolate, l2_project_curl, mean_vector)

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass
class SavParameters:
    nu: float
    dt: float
    t_end: float
    alpha1: Union[float, np.ndarray] = 0.0
    alpha2: float = 0.0
    sav_enabled: bool = True

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if np.any(np.asarray(self.alpha1) < 0) or self.alpha2 < 0:
            raise ValueError("stabilization parameters must be nonnegative")

    @property
    def n_steps(self) -> int:
        n = self.t_end / self.dt
        return int(round(n)) if abs(n - round(n)) < 1e-9 * max(1.0, n) else int(np.ceil(n))

    @property
    def effective_alpha1(self):
        return self.alpha1 if self.sav_enabled else 0.0


def nosav_mode(params: SavParameters) -> SavParameters:
    """Same parameters with the subgrid viscosity and its projection switched off."""
    return replace(params, sav_enabled=False)


def alpha1_from_mesh(mesh: Mesh, mode: str = "uniform_h2") -> Union[float, np.ndarray]:
    """``h^2`` with h the largest edge (uniform) or each element's diameter squared."""
    if mode == "uniform_h2":
        return mesh.h ** 2
    if mode == "per_element_h2":
        return mesh.element_diameters ** 2
    raise ValueError(f"unknown alpha1 mode {mode!r}")


@dataclass
class ProblemSetup:
    mesh: Mesh
    velocity_space: FeSpace
    pressure_space: FeSpace
    coarse_space: FeSpace
    dirichlet: Sequence[DirichletBc] = ()
    force: Optional[Callable] = None
    u0: Optional[Callable] = None

    def __post_init__(self):
        for s in (self.velocity_space, self.pressure_space, self.coarse_space):
            if s.mesh is not self.mesh:
                raise ValueError("all spaces must be built on the setup mesh")

    @classmethod
    def taylor_hood(cls, mesh: Mesh, dirichlet: Sequence[DirichletBc] = (),
                    force: Optional[Callable] = None, u0: Optional[Callable] = None) -> "ProblemSetup":
        """P2 velocity, P1 pressure and P1 vorticity space on one mesh."""
        p1 = FeSpace(mesh, 1)
        return cls(mesh, FeSpace(mesh, 2), p1, FeSpace(mesh, 1), list(dirichlet), force, u0)


@dataclass
class SavState:
    u_curr: FeFunction
    u_prev: FeFunction
    p_curr: FeFunction
    s_curr: FeFunction
    step_index: int
    time: float


@dataclass
class StepReport:
    residual: float
    wall_time: float
    n_dofs: dict
    multiplier: float
    s_next: FeFunction
    divergence_inf: float


class SavSolver:
    """Caches the time-independent operators of one (setup, parameters) pair."""

    def __init__(self, setup: ProblemSetup, params: SavParameters, linear_solver: str = "lu",
                 gmres_tol: float = 1e-12):
        if linear_solver not in ("lu", "gmres"):
            raise ValueError(f"unknown linear solver {linear_solver!r}")
        self.setup = setup
        self.params = params
        self.linear_solver = linear_solver
        self.gmres_tol = gmres_tol
        V, Q, L = setup.velocity_space, setup.pressure_space, setup.coarse_space
        self.nu_dofs = 2 * V.n_dofs
        self.np_dofs = Q.n_dofs
        self.M = assemble_vector_mass(V)
        self.K = assemble_vector_stiffness(V)
        self.B = assemble_pressure_div(V, Q)
        self.mean = mean_vector(Q)
        a1 = params.effective_alpha1
        static = (3.0 / (2.0 * params.dt)) * self.M + params.nu * self.K
        if params.alpha2:
            static = static + params.alpha2 * assemble_divdiv(V)
        if params.sav_enabled and np.any(np.asarray(a1) != 0):
            static = static + assemble_curlcurl(V, coef=a1)
            self.G = assemble_curl_coupling(V, L, coef=a1)
        else:
            self.G = None
        self.static = static
        self._minusBt = -1.0 * self.B.transpose()
        self._minusB = -1.0 * self.B
        m = SparseMatrix.from_dense(self.mean[:, None])
        self._mean_col = m
        self._mean_row = m.transpose()

    @property
    def n_dofs(self) -> dict:
        return {"velocity": self.nu_dofs, "pressure": self.np_dofs,
                "coarse": self.setup.coarse_space.n_dofs, "total": self.nu_dofs + self.np_dofs}

    def initialize(self) -> SavState:
        V = self.setup.velocity_space
        if self.setup.u0 is None:
            u0 = FeFunction.zeros(V, vector=True)
        else:
            u0 = interpolate(self.setup.u0, V)
            if not u0.is_vector:
                raise ValueError("initial velocity must return two components")
        return SavState(u_curr=u0, u_prev=u0.copy(), p_curr=FeFunction.zeros(self.setup.pressure_space),
                        s_curr=l2_project_curl(u0, self.setup.coarse_space), step_index=0, time=0.0)

    def system(self, state: SavState, beta_override: Optional[FeFunction] = None):
        """Constrained monolithic matrix, RHS, the projected vorticity and the Dirichlet data."""
        p = self.params
        V = self.setup.velocity_space
        t_next = (state.step_index + 1) * p.dt
        if self.G is not None:
            s_next = l2_project_curl(state.u_curr, self.setup.coarse_space)
        else:
            s_next = FeFunction.zeros(self.setup.coarse_space)
        uc, up = state.u_curr.flat, state.u_prev.flat
        beta = beta_override if beta_override is not None else FeFunction(V, 2.0 * uc - up)
        A = self.static + assemble_convection(beta, V)
        rhs_u = spmv(self.M, (4.0 * uc - up) / (2.0 * p.dt))
        if self.setup.force is not None:
            rhs_u = rhs_u + assemble_load(V, self.setup.force, t_next)
        if self.G is not None:
            rhs_u = rhs_u + spmv(self.G.transpose(), s_next.coefficients)
        blocks = BlockSystem(
            [[A, self._minusBt, None],
             [self._minusB, None, self._mean_col],
             [None, self._mean_row, None]],
            rhs=np.concatenate([rhs_u, np.zeros(self.np_dofs + 1)]),
        )
        mat, rhs = assemble_block(blocks)
        dofs, vals = dirichlet_data(V, self.setup.dirichlet, t_next)
        mat, rhs = apply_dirichlet(mat, rhs, dofs, vals)
        return mat, rhs, s_next, (dofs, vals)

    def _solve_direct(self, mat: SparseMatrix, rhs: np.ndarray) -> np.ndarray:
        """LU solve; the dense mean-value border is eliminated when pressure is
        only determined up to a constant (velocity given on the whole boundary)."""
        n = mat.n_rows - 1
        S = mat.to_scipy().tocsr()
        K = SparseMatrix.from_scipy(S[:n, :n])
        z = np.zeros(n)
        z[self.nu_dofs:] = 1.0
        col = S[:n, n].toarray().ravel()
        row = S[n, :n].toarray().ravel()
        if S[n, n] == 0 and np.array_equal(col, row) and is_null_vector(K, z):
            x, lam = solve_bordered(K, col, z, rhs[:n], float(rhs[n]))
            return np.append(x, lam)
        return solve_sparse_lu(mat, rhs)

    def step(self, state: SavState, beta_override: Optional[FeFunction] = None) -> tuple[SavState, StepReport]:
        t0 = time.perf_counter()
        mat, rhs, s_next, _ = self.system(state, beta_override)
        n = state.step_index + 1
        if not np.all(np.isfinite(rhs)) or not np.all(np.isfinite(mat.values)):
            raise DivergenceError(f"non-finite system at step {n}", n)
        if self.linear_solver == "lu":
            x = self._solve_direct(mat, rhs)
        else:
            x = solve_gmres(mat, rhs, tol=self.gmres_tol, max_iter=2000, preconditioner="ilu")
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite solution at step {n}", n)
        res = float(np.linalg.norm(spmv(mat, x) - rhs) / max(1.0, np.linalg.norm(rhs)))
        V = self.setup.velocity_space
        u_new = FeFunction(V, x[:self.nu_dofs])
        p_new = FeFunction(self.setup.pressure_space, x[self.nu_dofs:self.nu_dofs + self.np_dofs])
        if np.max(np.abs(u_new.coefficients)) > 1e12:
            raise DivergenceError(f"velocity blew up at step {n}", n)
        new = SavState(u_curr=u_new, u_prev=state.u_curr, p_curr=p_new, s_curr=s_next,
                       step_index=n, time=n * self.params.dt)
        report = StepReport(residual=res, wall_time=time.perf_counter() - t0, n_dofs=self.n_dofs,
                            multiplier=float(x[-1]), s_next=s_next,
                            divergence_inf=float(np.max(np.abs(spmv(self.B, u_new.flat)))))
        return new, report

    def run(self, observers: Iterable[Callable] = (), recorder=None, n_steps: Optional[int] = None):
        """Advance to ``t_end``; observers are called as ``obs(old, new, report)``.

        Returns the list of diagnostics records (initial state first) produced
        by ``recorder`` (a :class:`savflow.diagnostics.Recorder`; one is built
        if omitted).
        """
        from .diagnostics import Recorder

        observers = list(observers)
        if recorder is None:
            recorder = Recorder(self.setup, self.params)
        state = self.initialize()
        records = [recorder.initial(state)]
        total = self.params.n_steps if n_steps is None else n_steps
        for _ in range(total):
            new, report = self.step(state)
            records.append(recorder.record(state, new, report))
            for obs in observers:
                obs(state, new, report)
            if new.step_index % 50 == 0:
                log.info("step %d t=%.4f residual=%.2e (%.3fs)", new.step_index, new.time,
                         report.residual, report.wall_time)
            state = new
        self.final_state = state
        return records


def initialize(setup: ProblemSetup, params: SavParameters) -> SavState:
    return SavSolver(setup, params).initialize()


def step(state: SavState, setup: ProblemSetup, params: SavParameters) -> tuple[SavState, StepReport]:
    return SavSolver(setup, params).step(state)


def run(setup: ProblemSetup, params: SavParameters, observers: Iterable[Callable] = (), **kwargs):
    return SavSolver(setup, params, **kwargs).run(observers)
