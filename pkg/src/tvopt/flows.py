"""Continuous-time running algorithms and their tracking certification.

Two integrators are provided for a time-varying scenario with quadratic
cost (x - c(t))^T Q (x - c(t)):

  * an explicit Runge-Kutta gradient flow for unconstrained scenarios, and
  * a catching-up discretization of the constrained projected dynamics,
    where each explicit gradient step is projected onto the constraint
    polyhedron at the new time. Projecting onto the set at the new time is
    what keeps every iterate feasible as the set moves.

A run records the instantaneous optimizer, tracking error, feasibility and
a discrete surrogate of the monotonicity inner product, and grades the
result against a supplied tracking bound.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog

from .nlp import InfeasibleProblem, KKTTriple

log = logging.getLogger(__name__)

INVARIANCE_TOL = 5e-3     # slack on the invariance ball for discrete runs
CERT_TOL = 1e-3           # slack on the limsup estimate vs the bound
PROJECTION_TOL = 1e-10


class EmptyPolyhedron(Exception):
    """The constraint polyhedron has no points."""


# ---------------------------------------------------------------------------
# polyhedron projection


def chebyshev_center(U, v):
    """Largest inscribed ball of {x | Ux <= v}: returns (center, radius).

    A negative radius certifies emptiness. The radius is capped so the
    program stays bounded for cones and slabs.
    """
    U = np.asarray(U, dtype=float)
    v = np.asarray(v, dtype=float)
    m, n = U.shape
    norms = np.linalg.norm(U, axis=1)
    keep = norms > 0
    if np.any(~keep & (v < 0)):
        return None, -np.inf
    U, v, norms = U[keep], v[keep], norms[keep]
    if U.shape[0] == 0:
        return np.zeros(n), np.inf
    res = linprog(np.r_[np.zeros(n), -1.0],
                  A_ub=np.c_[U, norms], b_ub=v,
                  bounds=[(None, None)] * n + [(None, 1e6)],
                  method="highs")
    if not res.success:
        raise RuntimeError(f"feasibility program failed: {res.message}")
    return res.x[:n], float(res.x[-1])


def _active_candidate(z, U, v, idx):
    """Projection of z onto the affine slice of the rows ``idx``."""
    UI = U[idx]
    G = UI @ UI.T
    rhs = UI @ z - v[idx]
    try:
        nu = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        nu = np.linalg.lstsq(G, rhs, rcond=None)[0]
    return z - UI.T @ nu, nu


def projection_enumeration_oracle(z, U, v, tol=PROJECTION_TOL):
    """Exhaustive projection: try every active subset of size <= n.

    Exact on small polyhedra and independent of the iterative path; returns
    None when no subset yields a first-order-consistent candidate (which
    for a nonempty set only happens in degenerate geometry).
    """
    z = np.asarray(z, dtype=float)
    U = np.asarray(U, dtype=float)
    v = np.asarray(v, dtype=float)
    m, n = U.shape
    if m == 0 or np.all(U @ z <= v + tol):
        return z.copy()
    best = None
    for size in range(1, n + 1):
        for idx in combinations(range(m), size):
            idx = list(idx)
            s = np.linalg.svd(U[idx], compute_uv=False)
            if s[-1] <= 1e-12 * s[0]:
                continue
            y, nu = _active_candidate(z, U, v, idx)
            if nu.min(initial=0.0) < -tol:
                continue
            if np.all(U @ y <= v + max(tol, 1e-9)):
                d = float(np.linalg.norm(y - z))
                if best is None or d < best[0] - 1e-15:
                    best = (d, y)
    return None if best is None else best[1]


def _project(z, U, v, tol=PROJECTION_TOL, warm=()):
    """Dual active-set projection loop. Returns (y, active tuple) or None."""
    m, n = U.shape
    viol = U @ z - v
    if viol.max(initial=-np.inf) <= tol:
        return z.copy(), ()
    act = [i for i in warm if i < m]
    for _ in range(4 * m + 12):
        if act:
            y, nu = _active_candidate(z, U, v, act)
            if nu.size and nu.min() < -1e-12:
                del act[int(np.argmin(nu))]
                continue
        else:
            y = z
        w = U @ y - v
        k = int(np.argmax(w))
        if w[k] <= tol:
            return y, tuple(act)
        if k in act or len(act) >= n:
            # stuck or over-determined working set; caller falls back
            return None
        act.append(k)
    return None


def project_polyhedron(z, U, v, tol=PROJECTION_TOL):
    """Euclidean projection of z onto {y | Uy <= v}.

    Uses a dual active-set iteration with an exhaustive fallback; emptiness
    is certified through the inscribed-ball program and raised as
    EmptyPolyhedron.
    """
    z = np.asarray(z, dtype=float)
    U = np.asarray(U, dtype=float)
    v = np.asarray(v, dtype=float)
    out = _project(z, U, v, tol=tol)
    if out is not None:
        return out[0]
    _, radius = chebyshev_center(U, v)
    if radius < -1e-9:
        raise EmptyPolyhedron(f"inscribed radius {radius:.3e} < 0")
    y = projection_enumeration_oracle(z, U, v, tol=tol)
    if y is None:
        raise RuntimeError("projection failed on a nonempty polyhedron")
    return y


# ---------------------------------------------------------------------------
# scenarios


@dataclass
class TimeVaryingScenario:
    """Quadratic tracking scenario, optionally constrained to a moving
    polyhedron {x | U x <= V1 t + V2}.

    The cost at time t is (x - c(t))^T Q (x - c(t)) with Q symmetric
    positive definite, so the strong convexity and gradient Lipschitz
    moduli are twice the extreme eigenvalues of Q. When the translation
    curve comes from a linear-solve parametrization, ``P_of_t`` with
    c(t) = -Q^{-1} P(t) / 2 is kept alongside for constant derivations.
    """

    kind: str                 # "unconstrained" | "polyhedral-sweeping"
    Q: np.ndarray
    c_of_t: Callable
    c_dot_of_t: Callable
    ell_c: float
    U: Optional[np.ndarray] = None
    V1: Optional[np.ndarray] = None
    V2: Optional[np.ndarray] = None
    horizon: float = 10.0
    name: str = ""
    kink_period: Optional[float] = None
    omega_paper: Optional[float] = None
    P_of_t: Optional[Callable] = None
    P_dot_of_t: Optional[Callable] = None

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if self.kind not in ("unconstrained", "polyhedral-sweeping"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "polyhedral-sweeping":
            self.U = np.atleast_2d(np.asarray(self.U, dtype=float))
            self.V1 = np.atleast_1d(np.asarray(self.V1, dtype=float))
            self.V2 = np.atleast_1d(np.asarray(self.V2, dtype=float))
            if self.U.shape[0] != self.V1.size or self.V1.size != self.V2.size:
                raise ValueError("U, V1, V2 dimensions are inconsistent")
            if self.U.shape[1] != self.Q.shape[0]:
                raise ValueError("U column count must match the decision dimension")

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return 0 if self.U is None else self.U.shape[0]

    @cached_property
    def _eigs(self):
        return np.linalg.eigvalsh(self.Q)

    @property
    def alpha(self) -> float:
        """Strong convexity modulus of the cost."""
        return 2.0 * float(self._eigs[0])

    @property
    def beta(self) -> float:
        """Lipschitz modulus of the cost gradient."""
        return 2.0 * float(self._eigs[-1])

    @property
    def ell_v(self) -> float:
        return 0.0 if self.V1 is None else float(np.linalg.norm(self.V1))

    @cached_property
    def _sqrtQ(self):
        w, V = np.linalg.eigh(self.Q)
        if w[0] <= 0:
            raise ValueError("Q must be positive definite")
        return V @ np.diag(np.sqrt(w)) @ V.T

    @cached_property
    def _sqrtQ_inv(self):
        return np.linalg.inv(self._sqrtQ)

    def v_of_t(self, t):
        return self.V1 * t + self.V2

    def grad_cost(self, x, t):
        return 2.0 * self.Q @ (x - self.c_of_t(t))

    def cost(self, x, t):
        d = x - self.c_of_t(t)
        return float(d @ self.Q @ d)

    def kink_times(self, t0, t1):
        """Times in [t0, t1] where the translation curve has a kink."""
        if self.kink_period is None:
            return np.zeros(0)
        half = self.kink_period / 2.0
        k0 = int(np.ceil(t0 / half - 1e-12))
        k1 = int(np.floor(t1 / half + 1e-12))
        return np.arange(k0, k1 + 1) * half


# ---------------------------------------------------------------------------
# steps and instantaneous optimizers


def gradient_flow_step(scenario: TimeVaryingScenario, x_k, t_k, h):
    """One classical Runge-Kutta step of the unconstrained gradient flow."""
    x_k = np.asarray(x_k, dtype=float)

    def f(t, x):
        return -scenario.grad_cost(x, t)

    k1 = f(t_k, x_k)
    k2 = f(t_k + h / 2, x_k + (h / 2) * k1)
    k3 = f(t_k + h / 2, x_k + (h / 2) * k2)
    k4 = f(t_k + h, x_k + h * k3)
    return x_k + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def sweeping_flow_step(scenario: TimeVaryingScenario, x_k, t_k, h, feas_tol=1e-6):
    """Catching-up step: explicit gradient step, then projection onto the
    constraint set at the new time. Raises EmptyPolyhedron when the set at
    t_k + h has emptied."""
    x_k = np.asarray(x_k, dtype=float)
    if scenario.kind != "polyhedral-sweeping":
        raise ValueError("sweeping step needs a polyhedral scenario")
    if (scenario.U @ x_k - scenario.v_of_t(t_k)).max(initial=-np.inf) > feas_tol:
        raise ValueError("state is infeasible at the current time")
    z = x_k - h * scenario.grad_cost(x_k, t_k)
    return project_polyhedron(z, scenario.U, scenario.v_of_t(t_k + h))


def _optimizer_polyhedral(scenario, t, warm=()):
    """Constrained minimizer via projection in the metric of Q.

    With y = Q^{1/2} x the cost is |y - Q^{1/2} c|^2, so the minimizer is
    the projection of Q^{1/2} c(t) onto the transformed polyhedron. The
    projection multipliers scale by two into the multipliers of the
    original program (the cost carries no 1/2 factor).
    """
    S, Sinv = scenario._sqrtQ, scenario._sqrtQ_inv
    Ut = scenario.U @ Sinv
    vt = scenario.v_of_t(t)
    z = S @ scenario.c_of_t(t)
    out = _project(z, Ut, vt, warm=warm)
    if out is None:
        _, radius = chebyshev_center(Ut, vt)
        if radius < -1e-9:
            raise EmptyPolyhedron(f"constraint set empty at t={t:.6g}")
        y = projection_enumeration_oracle(z, Ut, vt)
        if y is None:
            raise RuntimeError("optimizer projection failed on nonempty set")
        act = tuple(int(i) for i in np.flatnonzero(Ut @ y - vt >= -1e-9))
    else:
        y, act = out
    x = Sinv @ y
    mu = np.zeros(scenario.m)
    if act:
        _, nu = _active_candidate(z, Ut, vt, list(act))
        mu[list(act)] = 2.0 * np.maximum(nu, 0.0)
    return x, mu, act


def instantaneous_optimizer(scenario: TimeVaryingScenario, t) -> KKTTriple:
    """Exact minimizer of the scenario cost over its constraint set at t."""
    if scenario.kind == "unconstrained":
        x = np.atleast_1d(np.asarray(scenario.c_of_t(t), dtype=float))
        return KKTTriple(xi=[t], x=x, lam=np.zeros(0), mu=np.zeros(0))
    try:
        x, mu, _ = _optimizer_polyhedral(scenario, t)
    except EmptyPolyhedron as exc:
        raise InfeasibleProblem(str(exc)) from exc
    return KKTTriple(xi=[t], x=x, lam=np.zeros(0), mu=mu)


# ---------------------------------------------------------------------------
# runs and certification


@dataclass
class TrajectoryRecord:
    """Grid, algorithm state, instantaneous optimizer and diagnostics.

    ``monotonicity_lhs`` holds, per step k, the discrete surrogate
    <(x_{k+1} - x_k)/h, x_k - x*_k> + a |x_k - x*_k|^2 of the monotonicity
    inner product; the final grid point has no step and stores zero.
    """

    times: np.ndarray
    x_alg: np.ndarray
    x_opt: np.ndarray
    err: np.ndarray
    feasibility_violation: np.ndarray
    monotonicity_lhs: np.ndarray
    feasible_window_end: float
    truncated: bool


@dataclass
class TrackingCertificate:
    bound: float
    limsup_estimate: float
    invariance_ok: bool
    a_used: float
    passed: bool
    window_start: float


def run_and_certify(scenario: TimeVaryingScenario, x0, h, a=None, ell_t=None,
                    horizon=None, feas_tol=1e-8, window_frac=0.25):
    """Integrate the matching flow and grade tracking against ell_t / a.

    The initial state must lie in the constraint set at time zero. For
    polyhedral scenarios the run stops at the first time the set empties and
    the certificate covers only the recorded window. Certificate failure is
    reported in the returned record, not raised.
    """
    if ell_t is None:
        raise ValueError("run_and_certify needs the tracking constant ell_t")
    a = scenario.alpha if a is None else float(a)
    if a <= 0:
        raise ValueError("monotonicity rate a must be positive")
    T = scenario.horizon if horizon is None else float(horizon)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    poly = scenario.kind == "polyhedral-sweeping"
    if poly and (scenario.U @ x0 - scenario.v_of_t(0.0)).max(initial=-np.inf) > 1e-9:
        raise ValueError("x0 is not feasible at time zero")

    K = int(round(T / h))
    times = np.arange(K + 1) * h
    n = scenario.n
    xs = np.zeros((K + 1, n))
    xopt = np.zeros((K + 1, n))
    err = np.zeros(K + 1)
    feas = np.zeros(K + 1)
    surr = np.zeros(K + 1)

    kinks = set()
    if scenario.kink_period:
        for tk in scenario.kink_times(0.0, T):
            k = int(round(tk / h))
            if 0 <= k <= K and abs(k * h - tk) < 1e-12:
                kinks.add(k)

    x = x0.copy()
    warm_opt = ()
    warm_step = ()
    last = K
    truncated = False
    S, Sinv, Ut = (None, None, None)
    if poly:
        S, Sinv = scenario._sqrtQ, scenario._sqrtQ_inv
        Ut = scenario.U @ Sinv
    for k in range(K + 1):
        t = times[k]
        if poly:
            try:
                out = _project(S @ scenario.c_of_t(t), Ut, scenario.v_of_t(t), warm=warm_opt)
                if out is None:
                    xsol, _, warm_opt = _optimizer_polyhedral(scenario, t)
                else:
                    y, warm_opt = out
                    xsol = Sinv @ y
            except EmptyPolyhedron:
                last, truncated = k - 1, True
                break
            feas[k] = max((scenario.U @ x - scenario.v_of_t(t)).max(), 0.0)
        else:
            xsol = np.atleast_1d(np.asarray(scenario.c_of_t(t), dtype=float))
            feas[k] = 0.0
        xs[k] = x
        xopt[k] = xsol
        e = x - xsol
        err[k] = float(np.linalg.norm(e))
        if k == K:
            break
        # advance
        if poly:
            z = x - h * scenario.grad_cost(x, t)
            out = _project(z, scenario.U, scenario.v_of_t(t + h), warm=warm_step)
            if out is None:
                try:
                    xn = project_polyhedron(z, scenario.U, scenario.v_of_t(t + h))
                    warm_step = ()
                except EmptyPolyhedron:
                    last, truncated = k, True
                    break
            else:
                xn, warm_step = out
        else:
            xn = gradient_flow_step(scenario, x, t, h)
        # monotonicity surrogate; exact kink hits are sampled half a step later
        xref = xsol
        if k in kinks:
            tref = t + h / 2
            if poly:
                out = _project(S @ scenario.c_of_t(tref), Ut, scenario.v_of_t(tref), warm=warm_opt)
                if out is not None:
                    xref = Sinv @ out[0]
            else:
                xref = np.atleast_1d(np.asarray(scenario.c_of_t(tref), dtype=float))
        eref = x - xref
        surr[k] = float((xn - x) @ eref / h + a * (eref @ eref))
        x = xn

    sl = slice(0, last + 1)
    rec = TrajectoryRecord(
        times=times[sl], x_alg=xs[sl], x_opt=xopt[sl], err=err[sl],
        feasibility_violation=feas[sl],
        monotonicity_lhs=np.r_[surr[:last], 0.0] if last >= 0 else np.zeros(0),
        feasible_window_end=float(times[last]) if last >= 0 else 0.0,
        truncated=truncated,
    )

    bound = float(ell_t) / a
    t_end = rec.feasible_window_end
    ws = max(3.0 / a, (1.0 - window_frac) * t_end)
    if ws >= t_end:
        ws = (1.0 - window_frac) * t_end
    win = rec.times >= ws
    limsup = float(rec.err[win].max()) if win.any() else float(rec.err.max(initial=0.0))
    inside = np.flatnonzero(rec.err <= bound)
    if inside.size:
        k0 = int(inside[0])
        invariance_ok = bool(np.all(rec.err[k0:] <= bound + INVARIANCE_TOL))
    else:
        invariance_ok = False
    cert = TrackingCertificate(
        bound=bound, limsup_estimate=limsup, invariance_ok=invariance_ok,
        a_used=a, passed=bool(limsup <= bound + CERT_TOL and invariance_ok),
        window_start=float(ws),
    )
    if rec.feasibility_violation.max(initial=0.0) > feas_tol:
        log.warning("feasibility violation %.3e exceeds %.1e",
                    rec.feasibility_violation.max(), feas_tol)
    return rec, cert


def set_variation_estimate(scenario: TimeVaryingScenario, probe_points, t_grid):
    """Empirical Lipschitz rate of t -> distance(z, constraint set at t).

    Maximum over probes and adjacent grid times of the distance difference
    quotient, with distances computed through the projection. Bounded by
    ell_v / omega for a polyhedron with right-hand-side motion.
    """
    if scenario.kind != "polyhedral-sweeping":
        raise ValueError("set variation needs a polyhedral scenario")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size < 2 or not probe_points:
        raise ValueError("need at least two grid times and one probe")
    rate = 0.0
    for z in probe_points:
        z = np.asarray(z, dtype=float)
        d_prev = None
        for i, t in enumerate(t_grid):
            y = project_polyhedron(z, scenario.U, scenario.v_of_t(t))
            d = float(np.linalg.norm(z - y))
            if d_prev is not None:
                rate = max(rate, abs(d - d_prev) / abs(t_grid[i] - t_grid[i - 1]))
            d_prev = d
    return rate
