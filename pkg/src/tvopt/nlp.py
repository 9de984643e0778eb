"""Parametrized nonlinear programs: KKT systems, regularity, and solving.

A problem is the data of

    minimize_x  f(x, xi)   subject to   h(x, xi) = 0,  g(x, xi) <= 0,

with x in R^n and a parameter xi in R^r. Derivative callables may be
omitted, in which case central finite differences fill the gaps (and the
fact is flagged, since FD Hessians degrade downstream sensitivity accuracy).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .linalg import spectral_extremes

log = logging.getLogger(__name__)

KKT_TOL = 1e-9
EPS_ACTIVE = 1e-7     # absolute tolerance on g values for activity
EPS_STRONG = 1e-8     # multiplier threshold for strong activity
FD_FIRST_STEP = 1e-6
FD_SECOND_STEP = 1e-5


class DimensionMismatch(Exception):
    """Point dimensions do not match the problem."""


class Infeasible(Exception):
    """A supposedly feasible point violates constraints beyond tolerance."""


class InfeasibleProblem(Exception):
    """The feasible set is empty (phase-1 certificate)."""


class MaxIterations(Exception):
    """The instance solver did not reach the required KKT residual."""


class MissingCertificates(Exception):
    """Neither dual-bound route has the inputs it needs."""


# ---------------------------------------------------------------------------
# problem container


@dataclass
class ParametrizedNLP:
    """Callable bundle for a parametrized program with consistent shapes.

    Required: dimensions and ``f``. Constraint callables ``h``/``g`` are
    None when p/m is zero. Derivative callables return:

      grad_x_f(x, xi)   -> (n,)
      jac_x_h(x, xi)    -> (p, n)        jac_x_g(x, xi)   -> (m, n)
      hess_xx_f(x, xi)  -> (n, n)
      hess_xx_h(x, xi)  -> (p, n, n)     hess_xx_g(x, xi) -> (m, n, n)
      cross_xi_x_f(x, xi)  -> (n, r)     second derivative d/dxi of grad_x f
      cross_xi_x_h(x, xi)  -> (p, n, r)  cross_xi_x_g(x, xi) -> (m, n, r)
      jac_xi_h(x, xi)   -> (p, r)        jac_xi_g(x, xi)  -> (m, r)

    Missing derivatives are replaced by central differences when
    ``fd_fallback`` is true.
    """

    n: int
    p: int
    m: int
    r: int
    f: Callable
    h: Optional[Callable] = None
    g: Optional[Callable] = None
    grad_x_f: Optional[Callable] = None
    jac_x_h: Optional[Callable] = None
    jac_x_g: Optional[Callable] = None
    hess_xx_f: Optional[Callable] = None
    hess_xx_h: Optional[Callable] = None
    hess_xx_g: Optional[Callable] = None
    cross_xi_x_f: Optional[Callable] = None
    cross_xi_x_h: Optional[Callable] = None
    cross_xi_x_g: Optional[Callable] = None
    jac_xi_h: Optional[Callable] = None
    jac_xi_g: Optional[Callable] = None
    fd_fallback: bool = True
    name: str = ""

    def __post_init__(self):
        if self.p > 0 and self.h is None:
            raise ValueError("p > 0 but no equality callable given")
        if self.m > 0 and self.g is None:
            raise ValueError("m > 0 but no inequality callable given")
        missing = self._missing_derivatives()
        if missing and not self.fd_fallback:
            raise ValueError(f"missing derivatives {missing} and FD fallback disabled")

    def _missing_derivatives(self):
        names = ["grad_x_f", "hess_xx_f", "cross_xi_x_f"]
        if self.p > 0:
            names += ["jac_x_h", "hess_xx_h", "cross_xi_x_h", "jac_xi_h"]
        if self.m > 0:
            names += ["jac_x_g", "hess_xx_g", "cross_xi_x_g", "jac_xi_g"]
        return [nm for nm in names if getattr(self, nm) is None]

    @property
    def uses_fd_derivatives(self) -> bool:
        return bool(self._missing_derivatives())

    # -- evaluation with FD fallback ------------------------------------

    def eval_h(self, x, xi):
        if self.p == 0:
            return np.zeros(0)
        return np.asarray(self.h(x, xi), dtype=float).reshape(self.p)

    def eval_g(self, x, xi):
        if self.m == 0:
            return np.zeros(0)
        return np.asarray(self.g(x, xi), dtype=float).reshape(self.m)

    def eval_grad_x_f(self, x, xi):
        if self.grad_x_f is not None:
            return np.asarray(self.grad_x_f(x, xi), dtype=float).reshape(self.n)
        return _fd_grad(lambda z: self.f(z, xi), x)

    def eval_jac_x_h(self, x, xi):
        if self.p == 0:
            return np.zeros((0, self.n))
        if self.jac_x_h is not None:
            return np.asarray(self.jac_x_h(x, xi), dtype=float).reshape(self.p, self.n)
        return _fd_jac(lambda z: self.eval_h(z, xi), x, self.p)

    def eval_jac_x_g(self, x, xi):
        if self.m == 0:
            return np.zeros((0, self.n))
        if self.jac_x_g is not None:
            return np.asarray(self.jac_x_g(x, xi), dtype=float).reshape(self.m, self.n)
        return _fd_jac(lambda z: self.eval_g(z, xi), x, self.m)

    def eval_hess_xx_f(self, x, xi):
        if self.hess_xx_f is not None:
            return np.asarray(self.hess_xx_f(x, xi), dtype=float).reshape(self.n, self.n)
        H = _fd_jac(lambda z: self.eval_grad_x_f(z, xi), x, self.n, step=FD_SECOND_STEP)
        return 0.5 * (H + H.T)

    def eval_hess_xx_h(self, x, xi):
        if self.p == 0:
            return np.zeros((0, self.n, self.n))
        if self.hess_xx_h is not None:
            return np.asarray(self.hess_xx_h(x, xi), dtype=float).reshape(self.p, self.n, self.n)
        J = _fd_jac3(lambda z: self.eval_jac_x_h(z, xi), x, (self.p, self.n))
        return 0.5 * (J + np.transpose(J, (0, 2, 1)))

    def eval_hess_xx_g(self, x, xi):
        if self.m == 0:
            return np.zeros((0, self.n, self.n))
        if self.hess_xx_g is not None:
            return np.asarray(self.hess_xx_g(x, xi), dtype=float).reshape(self.m, self.n, self.n)
        J = _fd_jac3(lambda z: self.eval_jac_x_g(z, xi), x, (self.m, self.n))
        return 0.5 * (J + np.transpose(J, (0, 2, 1)))

    def eval_cross_xi_x_f(self, x, xi):
        if self.cross_xi_x_f is not None:
            return np.asarray(self.cross_xi_x_f(x, xi), dtype=float).reshape(self.n, self.r)
        return _fd_jac_wrt(lambda z: self.eval_grad_x_f(x, z), xi, self.n, step=FD_SECOND_STEP)

    def eval_cross_xi_x_h(self, x, xi):
        if self.p == 0:
            return np.zeros((0, self.n, self.r))
        if self.cross_xi_x_h is not None:
            return np.asarray(self.cross_xi_x_h(x, xi), dtype=float).reshape(self.p, self.n, self.r)
        return _fd_jac3_wrt(lambda z: self.eval_jac_x_h(x, z), xi, (self.p, self.n))

    def eval_cross_xi_x_g(self, x, xi):
        if self.m == 0:
            return np.zeros((0, self.n, self.r))
        if self.cross_xi_x_g is not None:
            return np.asarray(self.cross_xi_x_g(x, xi), dtype=float).reshape(self.m, self.n, self.r)
        return _fd_jac3_wrt(lambda z: self.eval_jac_x_g(x, z), xi, (self.m, self.n))

    def eval_jac_xi_h(self, x, xi):
        if self.p == 0:
            return np.zeros((0, self.r))
        if self.jac_xi_h is not None:
            return np.asarray(self.jac_xi_h(x, xi), dtype=float).reshape(self.p, self.r)
        return _fd_jac_wrt(lambda z: self.eval_h(x, z), xi, self.p)

    def eval_jac_xi_g(self, x, xi):
        if self.m == 0:
            return np.zeros((0, self.r))
        if self.jac_xi_g is not None:
            return np.asarray(self.jac_xi_g(x, xi), dtype=float).reshape(self.m, self.r)
        return _fd_jac_wrt(lambda z: self.eval_g(x, z), xi, self.m)

    def eval_hess_xx_lagrangian(self, x, lam, mu, xi):
        """Hessian in x of f + lam.h + mu.g at the given multipliers."""
        A = self.eval_hess_xx_f(x, xi).copy()
        if self.p > 0:
            A += np.tensordot(lam, self.eval_hess_xx_h(x, xi), axes=1)
        if self.m > 0:
            A += np.tensordot(mu, self.eval_hess_xx_g(x, xi), axes=1)
        return 0.5 * (A + A.T)

    def eval_cross_xi_x_lagrangian(self, x, lam, mu, xi):
        """d/dxi of grad_x of the Lagrangian, an (n, r) matrix."""
        Ls = self.eval_cross_xi_x_f(x, xi).copy()
        if self.p > 0:
            Ls += np.tensordot(lam, self.eval_cross_xi_x_h(x, xi), axes=1)
        if self.m > 0:
            Ls += np.tensordot(mu, self.eval_cross_xi_x_g(x, xi), axes=1)
        return Ls


def _fd_grad(fun, x, step=FD_FIRST_STEP):
    x = np.asarray(x, dtype=float)
    d = step * (1.0 + np.linalg.norm(x))
    out = np.zeros(x.size)
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = d
        out[j] = (fun(x + e) - fun(x - e)) / (2 * d)
    return out


def _fd_jac(fun, x, nrows, step=FD_FIRST_STEP):
    x = np.asarray(x, dtype=float)
    d = step * (1.0 + np.linalg.norm(x))
    out = np.zeros((nrows, x.size))
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = d
        out[:, j] = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * d)
    return out


def _fd_jac_wrt(fun, w, nrows, step=FD_SECOND_STEP):
    # Jacobian of fun with respect to the vector w it is called on.
    return _fd_jac(fun, w, nrows, step=step)


def _fd_jac3(fun, x, shape2, step=FD_SECOND_STEP):
    x = np.asarray(x, dtype=float)
    d = step * (1.0 + np.linalg.norm(x))
    out = np.zeros(shape2 + (x.size,))
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = d
        out[..., j] = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * d)
    return out


def _fd_jac3_wrt(fun, w, shape2, step=FD_SECOND_STEP):
    return _fd_jac3(fun, w, shape2, step=step)


# ---------------------------------------------------------------------------
# points and classification


@dataclass
class KKTTriple:
    """Primal point with equality and inequality multipliers at parameter xi."""

    xi: np.ndarray
    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        self.xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.lam = np.atleast_1d(np.asarray(self.lam, dtype=float)) if np.size(self.lam) else np.zeros(0)
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float)) if np.size(self.mu) else np.zeros(0)
        if self.mu.size and self.mu.min() < -1e-9:
            raise ValueError(f"negative inequality multiplier {self.mu.min():.3e}")
        self.mu = np.maximum(self.mu, 0.0)


@dataclass(frozen=True)
class ActiveSetClassification:
    active: tuple
    inactive: tuple
    strongly_active: tuple
    weakly_active: tuple
    eps_active: float
    eps_strong: float

    @property
    def scs(self) -> bool:
        """Strict complementary slackness: no weakly active constraint."""
        return len(self.weakly_active) == 0


@dataclass(frozen=True)
class RegularityReport:
    licq: bool
    sigma_min_constraints: float
    ssosc: bool
    reduced_hessian_min_eig: float
    scs: bool
    kkt_residual_norm: float
    is_regular_minimizer: bool
    used_fd_derivatives: bool


def _check_dims(prob: ParametrizedNLP, point: KKTTriple):
    if point.x.size != prob.n or point.xi.size != prob.r:
        raise DimensionMismatch("x or xi size does not match problem")
    if point.lam.size != prob.p or point.mu.size != prob.m:
        raise DimensionMismatch("multiplier sizes do not match problem")


def kkt_residual(prob: ParametrizedNLP, point: KKTTriple) -> np.ndarray:
    """Stacked first-order system [grad_x L; h; diag(mu) g] at the point."""
    _check_dims(prob, point)
    x, xi, lam, mu = point.x, point.xi, point.lam, point.mu
    rd = prob.eval_grad_x_f(x, xi)
    if prob.p > 0:
        rd = rd + prob.eval_jac_x_h(x, xi).T @ lam
    if prob.m > 0:
        rd = rd + prob.eval_jac_x_g(x, xi).T @ mu
    return np.concatenate([rd, prob.eval_h(x, xi), mu * prob.eval_g(x, xi)])


def classify_active_set(prob, point, eps_active=EPS_ACTIVE, eps_strong=EPS_STRONG):
    """Partition inequality indices into active/inactive and grade activity.

    Index i is active iff g_i >= -eps_active, strongly active iff additionally
    mu_i > eps_strong. Raises Infeasible when some g_i > eps_active.
    """
    _check_dims(prob, point)
    gv = prob.eval_g(point.x, point.xi)
    if gv.size and gv.max() > eps_active:
        raise Infeasible(f"constraint violation {gv.max():.3e} exceeds {eps_active:g}")
    active = tuple(int(i) for i in np.flatnonzero(gv >= -eps_active))
    inactive = tuple(i for i in range(prob.m) if i not in active)
    strongly = tuple(i for i in active if point.mu[i] > eps_strong)
    weakly = tuple(i for i in active if point.mu[i] <= eps_strong)
    return ActiveSetClassification(active, inactive, strongly, weakly, eps_active, eps_strong)


def check_regularity(prob, point, eps_active=EPS_ACTIVE, eps_strong=EPS_STRONG, kkt_tol=KKT_TOL):
    """LICQ, SSOSC and SCS report at a KKT candidate.

    LICQ stacks the equality Jacobian with the active inequality rows and
    checks full row rank via the smallest singular value. SSOSC restricts
    the Lagrangian Hessian to the null space of equality and strongly
    active inequality gradients only.
    """
    cls = classify_active_set(prob, point, eps_active, eps_strong)
    x, xi = point.x, point.xi
    Jh = prob.eval_jac_x_h(x, xi)
    Jg = prob.eval_jac_x_g(x, xi)

    stacked = np.vstack([Jh, Jg[list(cls.active)]]) if (prob.p + len(cls.active)) else np.zeros((0, prob.n))
    if stacked.shape[0] == 0:
        licq, smin = True, np.inf
    elif stacked.shape[0] > prob.n:
        licq, smin = False, 0.0
    else:
        smin = float(np.linalg.svd(stacked, compute_uv=False)[-1])
        licq = smin > 1e-9 * max(1.0, float(np.abs(stacked).max()))

    A = prob.eval_hess_xx_lagrangian(x, point.lam, point.mu, xi)
    cone_rows = np.vstack([Jh, Jg[list(cls.strongly_active)]]) if (prob.p + len(cls.strongly_active)) else np.zeros((0, prob.n))
    if cone_rows.shape[0] == 0:
        Z = np.eye(prob.n)
    else:
        _, s, Vt = np.linalg.svd(cone_rows)
        rank = int(np.sum(s > 1e-12 * max(1.0, s[0] if s.size else 1.0)))
        Z = Vt[rank:].T
    if Z.shape[1] == 0:
        ssosc, min_eig = True, np.inf
    else:
        red = Z.T @ A @ Z
        min_eig = float(np.linalg.eigvalsh(0.5 * (red + red.T))[0])
        ssosc = min_eig > 0.0

    res = float(np.max(np.abs(kkt_residual(prob, point)))) if (prob.n + prob.p + prob.m) else 0.0
    regular = bool(licq and ssosc and res <= kkt_tol)
    return RegularityReport(
        licq=bool(licq),
        sigma_min_constraints=smin,
        ssosc=bool(ssosc),
        reduced_hessian_min_eig=min_eig,
        scs=cls.scs,
        kkt_residual_norm=res,
        is_regular_minimizer=regular,
        used_fd_derivatives=prob.uses_fd_derivatives,
    )


# ---------------------------------------------------------------------------
# instance solver: primal-dual Newton with slacks, then active-set polish


def _newton_polish(prob, xi, x, lam, act, max_rounds=None, iters=8, tol=KKT_TOL):
    """Newton iterations on the equality-pinned KKT system for a fixed
    active set, with dual-sign and feasibility driven set updates."""
    n, p, m = prob.n, prob.p, prob.m
    act = sorted(act)
    if max_rounds is None:
        max_rounds = m + 2
    nu = None
    for _ in range(max_rounds):
        k = len(act)
        nu = np.zeros(k) if nu is None or nu.size != k else nu
        for _ in range(iters):
            Jh = prob.eval_jac_x_h(x, xi)
            Jg = prob.eval_jac_x_g(x, xi)
            Ja = Jg[act].reshape(k, n)
            mu_full = np.zeros(m)
            mu_full[act] = np.maximum(nu, 0.0)
            A = prob.eval_hess_xx_lagrangian(x, lam, mu_full, xi)
            rd = prob.eval_grad_x_f(x, xi)
            if p:
                rd = rd + Jh.T @ lam
            if k:
                rd = rd + Ja.T @ nu
            rh = prob.eval_h(x, xi)
            ra = prob.eval_g(x, xi)[act] if k else np.zeros(0)
            F = np.concatenate([rd, rh, ra])
            if np.max(np.abs(F), initial=0.0) <= 0.1 * tol:
                break
            K = np.zeros((n + p + k, n + p + k))
            K[:n, :n] = A
            K[:n, n:n + p] = Jh.T
            K[:n, n + p:] = Ja.T
            K[n:n + p, :n] = Jh
            K[n + p:, :n] = Ja
            try:
                step = np.linalg.solve(K, -F)
            except np.linalg.LinAlgError:
                K[:n, :n] += 1e-10 * np.eye(n)
                step = np.linalg.lstsq(K, -F, rcond=None)[0]
            x = x + step[:n]
            lam = lam + step[n:n + p]
            nu = nu + step[n + p:]
        # dual sign check: drop the most negative active multiplier
        if nu.size and nu.min() < -1e-9:
            drop = act[int(np.argmin(nu))]
            act = [i for i in act if i != drop]
            nu = None
            continue
        # primal feasibility check: add the worst violated constraint
        gv = prob.eval_g(x, xi)
        mask = np.ones(m, dtype=bool)
        mask[act] = False
        if m and mask.any() and gv[mask].max(initial=-np.inf) > tol:
            cand = [i for i in range(m) if mask[i]]
            add = cand[int(np.argmax(gv[cand]))]
            act = sorted(act + [add])
            nu = None
            continue
        mu = np.zeros(m)
        if nu is not None and nu.size:
            mu[act] = np.maximum(nu, 0.0)
        return x, lam, mu, act
    return None


def _ipm(prob, xi, x, lam, mu, max_iter=120, target=1e-8):
    """Infeasible-start primal-dual Newton on the slack form of the KKT
    system, with fraction-to-boundary steps and a monotone tau schedule."""
    n, p, m = prob.n, prob.p, prob.m
    gv = prob.eval_g(x, xi)
    s = np.maximum(1e-2, -gv)
    mu = np.maximum(mu, 1e-6)
    tau = max(float(mu @ s) / m, 1e-2)

    def residuals(x, lam, s, mu, tau):
        Jh = prob.eval_jac_x_h(x, xi)
        Jg = prob.eval_jac_x_g(x, xi)
        rd = prob.eval_grad_x_f(x, xi)
        if p:
            rd = rd + Jh.T @ lam
        rd = rd + Jg.T @ mu
        return np.concatenate([
            rd,
            prob.eval_h(x, xi),
            prob.eval_g(x, xi) + s,
            mu * s - tau,
        ]), Jh, Jg

    for it in range(max_iter):
        F, Jh, Jg = residuals(x, lam, s, mu, tau)
        # true stationarity test without the tau relaxation
        triple_res = np.concatenate([F[:n], F[n:n + p], mu * prob.eval_g(x, xi)])
        gmax = prob.eval_g(x, xi).max(initial=-np.inf)
        if np.max(np.abs(triple_res)) <= target and gmax <= target:
            return x, lam, s, mu, True
        A = prob.eval_hess_xx_lagrangian(x, lam, mu, xi)
        N = n + p + 2 * m
        K = np.zeros((N, N))
        K[:n, :n] = A
        K[:n, n:n + p] = Jh.T
        K[:n, n + p + m:] = Jg.T
        K[n:n + p, :n] = Jh
        K[n + p:n + p + m, :n] = Jg
        K[n + p:n + p + m, n + p:n + p + m] = np.eye(m)
        K[n + p + m:, n + p:n + p + m] = np.diag(mu)
        K[n + p + m:, n + p + m:] = np.diag(s)
        ridge = 0.0
        while True:
            try:
                step = np.linalg.solve(K + ridge * np.eye(N), -F)
                break
            except np.linalg.LinAlgError:
                ridge = max(1e-10, ridge * 10)
                if ridge > 1e-2:
                    return x, lam, s, mu, False
        dx, dlam = step[:n], step[n:n + p]
        ds, dmu = step[n + p:n + p + m], step[n + p + m:]
        alpha = 1.0
        if m:
            neg = ds < 0
            if neg.any():
                alpha = min(alpha, float(np.min(-0.995 * s[neg] / ds[neg])))
            neg = dmu < 0
            if neg.any():
                alpha = min(alpha, float(np.min(-0.995 * mu[neg] / dmu[neg])))
        base = float(np.linalg.norm(F))
        ok = False
        for _ in range(40):
            Ft, _, _ = residuals(x + alpha * dx, lam + alpha * dlam,
                                 s + alpha * ds, mu + alpha * dmu, tau)
            if np.linalg.norm(Ft) <= (1 - 1e-4 * alpha) * base:
                ok = True
                break
            alpha *= 0.5
        if not ok:
            # no progress at this tau; tighten or give up
            if tau <= 1e-14:
                return x, lam, s, mu, False
            tau = max(tau * 0.1, 1e-16)
            continue
        x = x + alpha * dx
        lam = lam + alpha * dlam
        s = s + alpha * ds
        mu = mu + alpha * dmu
        comp = float(mu @ s) / m
        tau = min(tau, max(0.2 * comp, 1e-16))
    return x, lam, s, mu, False


def _phase1(prob, xi, x0, tol=1e-7):
    """Minimize the worst constraint violation; certify emptiness."""
    n, p, m = prob.n, prob.p, prob.m
    aug = ParametrizedNLP(
        n=n + 1, p=p, m=m, r=prob.r,
        f=lambda z, w: z[-1],
        h=(lambda z, w: prob.eval_h(z[:-1], w)) if p else None,
        g=lambda z, w: prob.eval_g(z[:-1], w) - z[-1],
        grad_x_f=lambda z, w: np.concatenate([np.zeros(n), [1.0]]),
        jac_x_h=(lambda z, w: np.hstack([prob.eval_jac_x_h(z[:-1], w), np.zeros((p, 1))])) if p else None,
        jac_x_g=lambda z, w: np.hstack([prob.eval_jac_x_g(z[:-1], w), -np.ones((m, 1))]),
        hess_xx_f=lambda z, w: np.zeros((n + 1, n + 1)),
        hess_xx_h=(lambda z, w: _pad_hess(prob.eval_hess_xx_h(z[:-1], w), p, n)) if p else None,
        hess_xx_g=lambda z, w: _pad_hess(prob.eval_hess_xx_g(z[:-1], w), m, n),
        fd_fallback=True,
    )
    sbar0 = float(prob.eval_g(x0, xi).max(initial=0.0)) + 1.0
    z = np.concatenate([x0, [sbar0]])
    lam = np.zeros(p)
    mu = np.full(m, 0.1)
    z, lam, s, mu, ok = _ipm(aug, xi, z, lam, mu, target=1e-9)
    sbar = float(z[-1])
    if sbar > tol:
        raise InfeasibleProblem(f"phase-1 optimum {sbar:.3e} > 0; feasible set is empty")
    return z[:-1]


def _pad_hess(H, k, n):
    out = np.zeros((k, n + 1, n + 1))
    out[:, :n, :n] = H
    return out


def solve_instance(prob: ParametrizedNLP, xi, warm_start: Optional[KKTTriple] = None,
                   tol=KKT_TOL, max_iter=120) -> KKTTriple:
    """Solve one instance to a KKT triple with residual below ``tol``.

    A primal-dual Newton method on the slack form of the first-order system
    does the heavy lifting; an equality-pinned Newton polish on the final
    active set then drives the residual to solver precision. Emptiness of
    the feasible set is certified by a phase-1 slack program and surfaced
    as InfeasibleProblem.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.size != prob.r:
        raise DimensionMismatch(f"xi has size {xi.size}, expected {prob.r}")
    n, p, m = prob.n, prob.p, prob.m

    if warm_start is not None:
        x = warm_start.x.copy()
        lam = warm_start.lam.copy() if p else np.zeros(0)
        mu = warm_start.mu.copy() if m else np.zeros(0)
    else:
        x = np.zeros(n)
        lam = np.zeros(p)
        mu = np.full(m, 0.1)

    def finish(x, lam, act):
        polished = _newton_polish(prob, xi, x, lam, act, tol=tol)
        if polished is None:
            return None
        x2, lam2, mu2, _ = polished
        triple = KKTTriple(xi=xi, x=x2, lam=lam2, mu=mu2)
        res = np.max(np.abs(kkt_residual(prob, triple)), initial=0.0)
        gmax = prob.eval_g(x2, xi).max(initial=-np.inf) if m else -np.inf
        if res <= tol and gmax <= tol:
            return triple
        return None

    # pure equality / unconstrained problems skip the interior phase
    if m == 0:
        for attempt in range(3):
            out = finish(x, lam, [])
            if out is not None:
                return out
            x = x + 0.1 * (attempt + 1) * np.ones(n)
        raise MaxIterations("equality-constrained Newton did not converge")

    # warm starts near a solution go straight to the polish
    if warm_start is not None:
        try:
            res = np.max(np.abs(kkt_residual(prob, warm_start)), initial=0.0)
        except Exception:
            res = np.inf
        if res <= 1e-4:
            gv = prob.eval_g(x, xi)
            act = [i for i in range(m) if gv[i] >= -1e-7 or mu[i] > 1e-7]
            out = finish(x, lam, act)
            if out is not None:
                return out

    x1, lam1, s1, mu1, ok = _ipm(prob, xi, x, lam, mu, max_iter=max_iter)
    if not ok:
        xf = _phase1(prob, xi, x)  # raises InfeasibleProblem on emptiness
        x1, lam1, s1, mu1, ok = _ipm(prob, xi, xf, np.zeros(p), np.full(m, 0.1),
                                     max_iter=max_iter)
        if not ok:
            raise MaxIterations("primal-dual iteration stalled")
    act = [i for i in range(m) if mu1[i] > s1[i]]
    out = finish(x1, lam1, act)
    if out is not None:
        return out
    # retry polish from activity classified on g values
    gv = prob.eval_g(x1, xi)
    act = [i for i in range(m) if gv[i] >= -1e-6]
    out = finish(x1, lam1, act)
    if out is not None:
        return out
    raise MaxIterations("active-set polish failed to reach tolerance")


# ---------------------------------------------------------------------------
# assumption audit


@dataclass
class AssumptionAudit:
    """Sampled estimates of the global-bound constants, never proofs.

    ``omega_hat`` is a lower-confidence sample of the uniform-rank constant;
    it is labelled sampled because the underlying assumption quantifies over
    every feasible point, which sampling cannot certify.
    """

    alpha_hat: float
    beta_hat: float
    ell_g_hat: np.ndarray
    omega_hat: Optional[float]
    omega_label: str
    zeta_hat: Optional[np.ndarray]
    zeta_route: str
    violations: list
    n_samples: int


def audit_assumptions(prob: ParametrizedNLP, xi_samples: Sequence,
                      strictly_feasible=None, f_lower=None,
                      grad_bound_f=None, grad_bounds_g=None,
                      boundary_points=None,
                      eps_active=EPS_ACTIVE) -> AssumptionAudit:
    """Estimate strong convexity, smoothness, constraint rank and dual
    bounds by sampling instances.

    The dual bound needs a certificate route when inequality constraints are
    present: either a strictly feasible point with a strict lower bound on
    the optimal value (quotient rule), or uniform bounds on the gradients of
    f and g (ratio rule). With neither, MissingCertificates is raised.

    ``boundary_points`` may carry extra (xi, x) pairs whose active sets
    feed the rank estimate, e.g. enumerated faces of a polyhedron.
    """
    xi_samples = [np.atleast_1d(np.asarray(w, dtype=float)) for w in xi_samples]
    if not xi_samples:
        raise ValueError("need at least one parameter sample")

    has_quotient = strictly_feasible is not None and f_lower is not None
    has_ratio = grad_bound_f is not None and grad_bounds_g is not None
    if prob.m > 0 and not (has_quotient or has_ratio):
        raise MissingCertificates(
            "dual multiplier bound needs a strictly feasible point with an "
            "objective lower bound, or uniform gradient bounds")

    violations = []
    alpha_hat = np.inf
    beta_hat = 0.0
    ell_g = np.zeros(prob.m)
    omegas = []
    zetas = np.zeros(prob.m) if prob.m else None

    for xi in xi_samples:
        try:
            triple = solve_instance(prob, xi)
        except InfeasibleProblem:
            violations.append(f"infeasible instance at xi={xi.tolist()}")
            continue
        x = triple.x
        Hf = prob.eval_hess_xx_f(x, xi)
        ext = spectral_extremes(0.5 * (Hf + Hf.T))
        alpha_hat = min(alpha_hat, ext.lambda_min)
        beta_hat = max(beta_hat, ext.lambda_max)
        if prob.m:
            Hg = prob.eval_hess_xx_g(x, xi)
            for i in range(prob.m):
                ell_g[i] = max(ell_g[i], spectral_extremes(0.5 * (Hg[i] + Hg[i].T)).sigma_max)
        cls = classify_active_set(prob, triple, eps_active=eps_active)
        if cls.active:
            Ja = prob.eval_jac_x_g(x, xi)[list(cls.active)]
            omegas.append(float(np.linalg.svd(Ja, compute_uv=False)[-1]))
        if prob.m and has_quotient:
            xt = np.asarray(strictly_feasible(xi) if callable(strictly_feasible) else strictly_feasible, dtype=float)
            fl = float(f_lower(xi) if callable(f_lower) else f_lower)
            gxt = prob.eval_g(xt, xi)
            if gxt.max() >= 0:
                violations.append(f"certificate point not strictly feasible at xi={xi.tolist()}")
            else:
                zetas = np.maximum(zetas, (prob.f(xt, xi) - fl) / (-gxt))

    for (xi, x) in (boundary_points or []):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        x = np.asarray(x, dtype=float)
        gv = prob.eval_g(x, xi)
        act = np.flatnonzero(gv >= -eps_active)
        if act.size:
            Ja = prob.eval_jac_x_g(x, xi)[act]
            if Ja.shape[0] <= prob.n:
                omegas.append(float(np.linalg.svd(Ja, compute_uv=False)[-1]))
            else:
                omegas.append(0.0)

    if alpha_hat <= 0:
        violations.append(f"objective not strongly convex on samples (alpha_hat={alpha_hat:.3e})")
    omega_hat = min(omegas) if omegas else None
    if omega_hat is not None and omega_hat < 1e-8:
        violations.append("active-constraint Jacobian nearly rank deficient on samples")

    if prob.m == 0:
        zeta_hat, route = None, "vacuous"
    elif has_quotient:
        zeta_hat, route = zetas, "strictly-feasible-quotient"
    else:
        Bf = float(grad_bound_f)
        Bg = np.asarray(grad_bounds_g, dtype=float).reshape(prob.m)
        zeta_hat, route = Bf / Bg, "gradient-bound-ratio"

    return AssumptionAudit(
        alpha_hat=float(alpha_hat),
        beta_hat=float(beta_hat),
        ell_g_hat=ell_g,
        omega_hat=omega_hat,
        omega_label="sampled",
        zeta_hat=zeta_hat,
        zeta_route=route,
        violations=violations,
        n_samples=len(xi_samples),
    )
