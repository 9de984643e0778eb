"""Solution-map Jacobians and Lipschitz bounds for parametrized programs.

At a regular minimizer, the solution map xi -> (x*, lambda*, mu*) is locally
Lipschitz and, under strict complementary slackness, differentiable. The
derivative and the bound constants are driven by four matrices evaluated at
the point:

    A  = hessian in x of the Lagrangian            (n x n, required > 0)
    B  = stacked active constraint Jacobian rows   ((p + |R|) x n)
    Ls = d/dxi of grad_x of the Lagrangian         (n x r)
    Gs = stacked d/dxi of the active constraints   ((p + |R|) x r)

where R is the working set of inequality indices, bracketed between the
strongly active set and the full active set. Without strict complementarity
the worst case over admissible R is attained at the full active set, which is
what the degenerate bound uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from . import nlp as _nlp
from .linalg import RankDeficient, SingularA, oblique_projectors, right_pseudoinverse

ASSUMPTION_EIG_GATE = 1e-10  # smallest Lagrangian-Hessian eigenvalue tolerated


class AssumptionViolated(Exception):
    """The Lagrangian Hessian is not safely positive definite."""


class MissingConstant(Exception):
    """A bound recipe was invoked without one of its required constants."""


class UnknownCase(Exception):
    """Unrecognized special-case tag."""


@dataclass
class SensitivityBlocks:
    A: np.ndarray
    B: np.ndarray
    Lstar: np.ndarray
    Gstar: np.ndarray
    Bdagger: np.ndarray
    Sigma: np.ndarray
    Pi: np.ndarray
    active_set_used: tuple
    p: int
    m: int
    lam_min_A: float
    lam_max_A: float
    sigma_min_BT: float  # inf when B is empty


@dataclass
class SolutionJacobians:
    """Derivatives of the primal and dual solution maps.

    ``dlm_dxi`` stacks the equality multiplier rows first, then the rows of
    the working inequality set. Multipliers of constraints outside the
    working set have identically zero derivative, recorded in
    ``dmu_inactive`` and expanded by ``multiplier_jacobian_full``.
    """

    dx_dxi: np.ndarray
    dlm_dxi: np.ndarray
    dmu_inactive: np.ndarray
    active_set: tuple
    p: int
    m: int

    def multiplier_jacobian_full(self) -> np.ndarray:
        r = self.dx_dxi.shape[1]
        out = np.zeros((self.p + self.m, r))
        out[:self.p] = self.dlm_dxi[:self.p]
        for row, i in enumerate(self.active_set):
            out[self.p + i] = self.dlm_dxi[self.p + row]
        return out


@dataclass
class LipschitzBoundReport:
    ell_x: float
    ell_lm: float
    mode: str
    constants_used: dict = field(default_factory=dict)

    def recompute(self):
        """Re-evaluate the reported bounds from the recorded constants."""
        return recompute_bounds(self.mode, self.constants_used)


# ---------------------------------------------------------------------------
# block assembly and Jacobians


def assemble_blocks(prob, point, active_choice=None,
                    eps_active=_nlp.EPS_ACTIVE, eps_strong=_nlp.EPS_STRONG) -> SensitivityBlocks:
    """Evaluate the sensitivity matrices at a KKT point for a working set.

    ``active_choice`` must contain every strongly active index and only
    active indices; None means the full active set. AssumptionViolated is
    raised when the Lagrangian Hessian has an eigenvalue at or below the
    positive-definiteness gate, RankDeficient when the chosen rows are not
    linearly independent.
    """
    cls = _nlp.classify_active_set(prob, point, eps_active, eps_strong)
    if active_choice is None:
        R = tuple(cls.active)
    else:
        R = tuple(sorted(int(i) for i in active_choice))
        if not set(cls.strongly_active) <= set(R) <= set(cls.active):
            raise ValueError(
                f"working set {R} must be between strongly active "
                f"{cls.strongly_active} and active {cls.active}")

    x, xi, lam, mu = point.x, point.xi, point.lam, point.mu
    A = prob.eval_hess_xx_lagrangian(x, lam, mu, xi)
    w = np.linalg.eigvalsh(A)
    if w[0] <= ASSUMPTION_EIG_GATE:
        raise AssumptionViolated(
            f"Lagrangian Hessian eigenvalue {w[0]:.3e} at or below gate")

    Jh = prob.eval_jac_x_h(x, xi)
    Jg = prob.eval_jac_x_g(x, xi)
    B = np.vstack([Jh, Jg[list(R)]]) if (prob.p + len(R)) else np.zeros((0, prob.n))
    Gh = prob.eval_jac_xi_h(x, xi)
    Gg = prob.eval_jac_xi_g(x, xi)
    Gs = np.vstack([Gh, Gg[list(R)]]) if (prob.p + len(R)) else np.zeros((0, prob.r))
    Ls = prob.eval_cross_xi_x_lagrangian(x, lam, mu, xi)

    if B.shape[0]:
        sig = np.linalg.svd(B, compute_uv=False)
        if B.shape[0] > prob.n or sig[-1] <= 1e-9 * sig[0]:
            raise RankDeficient("active constraint gradients are dependent")
        sigma_min_BT = float(sig[-1])
    else:
        sigma_min_BT = np.inf
    Bd = right_pseudoinverse(B) if B.shape[0] else np.zeros((prob.n, 0))
    Sigma, Pi = oblique_projectors(A, B)

    return SensitivityBlocks(
        A=A, B=B, Lstar=Ls, Gstar=Gs, Bdagger=Bd, Sigma=Sigma, Pi=Pi,
        active_set_used=R, p=prob.p, m=prob.m,
        lam_min_A=float(w[0]), lam_max_A=float(w[-1]), sigma_min_BT=sigma_min_BT,
    )


def solution_jacobian(blocks: SensitivityBlocks) -> SolutionJacobians:
    """Derivative of the solution map from assembled blocks.

        dx/dxi      = -Pi A^{-1} Ls - Sigma B^+ Gs
        d(l,mu)/dxi = B^{+T} A Sigma (A^{-1} Ls - B^+ Gs)

    Calling this without strict complementarity gives the one branch of the
    solution map selected by the working set; the map itself may be only
    one-sidedly differentiable there, so use the degenerate bound instead.
    """
    A, B, Ls, Gs = blocks.A, blocks.B, blocks.Lstar, blocks.Gstar
    AinvL = np.linalg.solve(A, Ls)
    r = Ls.shape[1]
    if B.shape[0]:
        core = AinvL - blocks.Bdagger @ Gs
        dx = -blocks.Pi @ AinvL - blocks.Sigma @ (blocks.Bdagger @ Gs)
        dlm = blocks.Bdagger.T @ A @ blocks.Sigma @ core
    else:
        dx = -AinvL
        dlm = np.zeros((0, r))
    n_inactive = blocks.m - len(blocks.active_set_used)
    return SolutionJacobians(
        dx_dxi=dx, dlm_dxi=dlm, dmu_inactive=np.zeros((n_inactive, r)),
        active_set=blocks.active_set_used, p=blocks.p, m=blocks.m,
    )


def fd_jacobian_oracle(prob, xi, step=None, solver_tol=1e-12):
    """Central-difference Jacobian of xi -> x*(xi) built from re-solves.

    Independent of the closed-form derivative; used to cross-check it.
    Re-solves are warm started from the base solution.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if step is None:
        step = 1e-4 * (1.0 + float(np.linalg.norm(xi)))
    base = _nlp.solve_instance(prob, xi, tol=solver_tol)
    out = np.zeros((prob.n, prob.r))
    for j in range(prob.r):
        e = np.zeros(prob.r)
        e[j] = step
        hi = _nlp.solve_instance(prob, xi + e, warm_start=base, tol=solver_tol)
        lo = _nlp.solve_instance(prob, xi - e, warm_start=base, tol=solver_tol)
        out[:, j] = (hi.x - lo.x) / (2 * step)
    return out


# ---------------------------------------------------------------------------
# bound formulas


def _spectral_bound_pair(lam_min, lam_max, sigma_min_BT, norm_L, norm_G):
    paren = norm_L / lam_min
    if np.isfinite(sigma_min_BT):
        paren = paren + norm_G / sigma_min_BT
        ell_lm = lam_max ** 1.5 / (sigma_min_BT * lam_min ** 0.5) * paren
    else:
        ell_lm = 0.0
    ell_x = np.sqrt(lam_max / lam_min) * paren
    return float(ell_x), float(ell_lm)


def local_lipschitz_bounds(blocks: SensitivityBlocks) -> LipschitzBoundReport:
    """Local Lipschitz bounds of the primal and dual maps from the blocks.

    ell_x  = sqrt(lmax/lmin) (|Ls|/lmin + |Gs|/smin)
    ell_lm = lmax^{3/2} / (smin lmin^{1/2}) (|Ls|/lmin + |Gs|/smin)

    with spectral norms throughout; the constraint term drops when the
    working set is empty.
    """
    nL = float(np.linalg.norm(blocks.Lstar, 2)) if blocks.Lstar.size else 0.0
    nG = float(np.linalg.norm(blocks.Gstar, 2)) if blocks.Gstar.size else 0.0
    ell_x, ell_lm = _spectral_bound_pair(
        blocks.lam_min_A, blocks.lam_max_A, blocks.sigma_min_BT, nL, nG)
    return LipschitzBoundReport(
        ell_x=ell_x, ell_lm=ell_lm, mode="local",
        constants_used={
            "lam_min_A": blocks.lam_min_A,
            "lam_max_A": blocks.lam_max_A,
            "sigma_min_BT": blocks.sigma_min_BT,
            "norm_Lstar": nL,
            "norm_Gstar": nG,
            "active_set": list(blocks.active_set_used),
        })


def degenerate_lipschitz_bounds(prob, point, eps_active=_nlp.EPS_ACTIVE,
                                eps_strong=_nlp.EPS_STRONG) -> LipschitzBoundReport:
    """Lipschitz bounds valid without strict complementarity.

    The admissible working sets bracket the strongly active set and the full
    active set; the worst bound among them is attained with every weakly
    active constraint included, so only that set is assembled. Equals the
    local bound when strict complementarity holds.
    """
    cls = _nlp.classify_active_set(prob, point, eps_active, eps_strong)
    blocks = assemble_blocks(prob, point, active_choice=cls.active,
                             eps_active=eps_active, eps_strong=eps_strong)
    rep = local_lipschitz_bounds(blocks)
    rep.mode = "degenerate"
    return rep


def enumerate_degenerate_bounds(prob, point, eps_active=_nlp.EPS_ACTIVE,
                                eps_strong=_nlp.EPS_STRONG) -> dict:
    """Debug cross-check: the bound pair for every admissible working set.

    Exponential in the number of weakly active constraints; intended for
    small instances only.
    """
    cls = _nlp.classify_active_set(prob, point, eps_active, eps_strong)
    weak = tuple(cls.weakly_active)
    out = {}
    for k in range(len(weak) + 1):
        for extra in combinations(weak, k):
            R = tuple(sorted(set(cls.strongly_active) | set(extra)))
            blocks = assemble_blocks(prob, point, active_choice=R,
                                     eps_active=eps_active, eps_strong=eps_strong)
            rep = local_lipschitz_bounds(blocks)
            out[R] = (rep.ell_x, rep.ell_lm)
    return out


def global_lipschitz_bounds(alpha, beta, zeta, ell_g, omega, Lbar, Gbar) -> LipschitzBoundReport:
    """Global Lipschitz bounds from certified problem constants.

    ``alpha``/``beta`` are the strong convexity and gradient Lipschitz
    moduli, ``zeta``/``ell_g`` the per-constraint dual bounds and gradient
    Lipschitz constants (their products raise the curvature cap), ``omega``
    the uniform active-rank constant, ``Lbar``/``Gbar`` suprema of the two
    parameter couplings.
    """
    if alpha is None or alpha <= 0:
        raise MissingConstant("alpha must be positive")
    if beta is None or beta <= 0:
        raise MissingConstant("beta must be positive")
    zeta = np.zeros(0) if zeta is None else np.atleast_1d(np.asarray(zeta, dtype=float))
    ell_g = np.zeros(0) if ell_g is None else np.atleast_1d(np.asarray(ell_g, dtype=float))
    if zeta.shape != ell_g.shape:
        raise MissingConstant("zeta and ell_g must have matching shapes")
    Lbar = 0.0 if Lbar is None else float(Lbar)
    Gbar = 0.0 if Gbar is None else float(Gbar)
    lam_cap = float(beta + zeta @ ell_g)
    if Gbar > 0 and (omega is None or omega <= 0):
        raise MissingConstant("omega must be positive when constraints move")
    paren = Lbar / alpha
    if omega is not None and omega > 0:
        paren = paren + Gbar / omega
        ell_mu = lam_cap ** 1.5 / (alpha ** 0.5 * omega) * paren
    else:
        ell_mu = 0.0
    ell_x = float(np.sqrt(lam_cap / alpha) * paren)
    return LipschitzBoundReport(
        ell_x=ell_x, ell_lm=float(ell_mu), mode="global",
        constants_used={
            "alpha": float(alpha), "beta": float(beta),
            "zeta_dot_ell_g": float(zeta @ ell_g),
            "omega": None if omega is None else float(omega),
            "Lbar": Lbar, "Gbar": Gbar,
        })


def special_case_bound(case_tag, constants) -> LipschitzBoundReport:
    """Closed-form bound constants for the structured problem families.

    unconstrained:  {ell_f, alpha}           ell_x = ell_f / alpha
    translational:  {alpha, beta, ell_c, ...}  objective shifted by a curve
    linear:         {alpha, beta, omega, ell_v}  right-hand side motion only
    composite:      {alpha, beta, omega, ell_c, ell_v}  both motions
    """
    c = dict(constants)

    def need(*names):
        vals = []
        for nm in names:
            if c.get(nm) is None:
                raise MissingConstant(f"special case '{case_tag}' needs constant '{nm}'")
            vals.append(float(c[nm]))
        return vals

    if case_tag == "unconstrained":
        ell_f, alpha = need("ell_f", "alpha")
        if alpha <= 0:
            raise MissingConstant("alpha must be positive")
        return LipschitzBoundReport(
            ell_x=ell_f / alpha, ell_lm=0.0, mode="special-case:unconstrained",
            constants_used={"ell_f": ell_f, "alpha": alpha})

    if case_tag == "translational":
        alpha, beta, ell_c = need("alpha", "beta", "ell_c")
        rep = global_lipschitz_bounds(
            alpha, beta, c.get("zeta"), c.get("ell_g"), c.get("omega"),
            Lbar=beta * ell_c, Gbar=c.get("Gbar", 0.0))
        rep.mode = "special-case:translational"
        rep.constants_used["ell_c"] = ell_c
        return rep

    if case_tag == "linear":
        alpha, beta, omega, ell_v = need("alpha", "beta", "omega", "ell_v")
        if min(alpha, omega) <= 0:
            raise MissingConstant("alpha and omega must be positive")
        ell_x = np.sqrt(beta / alpha) * ell_v / omega
        ell_mu = beta ** 1.5 / alpha ** 0.5 * ell_v / omega ** 2
        return LipschitzBoundReport(
            ell_x=float(ell_x), ell_lm=float(ell_mu), mode="special-case:linear",
            constants_used={"alpha": alpha, "beta": beta, "omega": omega, "ell_v": ell_v})

    if case_tag == "composite":
        alpha, beta, ell_c, ell_v = need("alpha", "beta", "ell_c", "ell_v")
        omega = c.get("omega")
        if ell_v > 0 and (omega is None or omega <= 0):
            raise MissingConstant("omega must be positive when ell_v > 0")
        paren = beta * ell_c / alpha
        if omega is not None and omega > 0:
            paren = paren + ell_v / omega
            ell_mu = beta ** 1.5 / (alpha ** 0.5 * omega) * paren
        else:
            ell_mu = 0.0
        ell_x = np.sqrt(beta / alpha) * paren
        return LipschitzBoundReport(
            ell_x=float(ell_x), ell_lm=float(ell_mu), mode="special-case:composite",
            constants_used={"alpha": alpha, "beta": beta,
                            "omega": None if omega is None else float(omega),
                            "ell_c": ell_c, "ell_v": ell_v})

    raise UnknownCase(f"unknown special case tag {case_tag!r}")


def recompute_bounds(mode, constants):
    """Evaluate the bound formula named by ``mode`` on recorded constants.

    Guards the reports against drifting away from the formulas they cite.
    """
    c = constants
    if mode in ("local", "degenerate"):
        return _spectral_bound_pair(c["lam_min_A"], c["lam_max_A"],
                                    c["sigma_min_BT"], c["norm_Lstar"], c["norm_Gstar"])
    if mode == "global" or mode == "special-case:translational":
        zd = c.get("zeta_dot_ell_g", 0.0)
        lam_cap = c["beta"] + zd
        om = c.get("omega")
        paren = c["Lbar"] / c["alpha"]
        if om is not None and om > 0:
            paren += c["Gbar"] / om
            ell_mu = lam_cap ** 1.5 / (c["alpha"] ** 0.5 * om) * paren
        else:
            ell_mu = 0.0
        return float(np.sqrt(lam_cap / c["alpha"]) * paren), float(ell_mu)
    if mode == "special-case:unconstrained":
        return c["ell_f"] / c["alpha"], 0.0
    if mode == "special-case:linear":
        return (float(np.sqrt(c["beta"] / c["alpha"]) * c["ell_v"] / c["omega"]),
                float(c["beta"] ** 1.5 / c["alpha"] ** 0.5 * c["ell_v"] / c["omega"] ** 2))
    if mode == "special-case:composite":
        om = c.get("omega")
        paren = c["beta"] * c["ell_c"] / c["alpha"]
        if om is not None and om > 0:
            paren += c["ell_v"] / om
            ell_mu = c["beta"] ** 1.5 / (c["alpha"] ** 0.5 * om) * paren
        else:
            ell_mu = 0.0
        return float(np.sqrt(c["beta"] / c["alpha"]) * paren), float(ell_mu)
    raise UnknownCase(f"unknown report mode {mode!r}")


# ---------------------------------------------------------------------------
# path sweep


@dataclass
class SweepResult:
    reports: list
    ratios: np.ndarray
    max_ratio: float
    max_bound: float


def lipschitz_sweep(prob, xi_path) -> SweepResult:
    """Solve along a parameter path and compare motion against the bounds.

    Returns the per-sample degenerate bound reports plus the empirical
    difference quotients |x*(xi_{i+1}) - x*(xi_i)| / |xi_{i+1} - xi_i|.
    """
    path = [np.atleast_1d(np.asarray(w, dtype=float)) for w in xi_path]
    if len(path) < 2:
        raise ValueError("need at least two parameter samples")
    for a, b in zip(path[:-1], path[1:]):
        if np.array_equal(a, b):
            raise ValueError("consecutive path samples must be distinct")
    sols = []
    warm = None
    for w in path:
        warm = _nlp.solve_instance(prob, w, warm_start=warm)
        sols.append(warm)
    reports = [degenerate_lipschitz_bounds(prob, s) for s in sols]
    ratios = np.array([
        np.linalg.norm(s2.x - s1.x) / np.linalg.norm(w2 - w1)
        for s1, s2, w1, w2 in zip(sols[:-1], sols[1:], path[:-1], path[1:])
    ])
    return SweepResult(
        reports=reports, ratios=ratios,
        max_ratio=float(ratios.max(initial=0.0)),
        max_bound=float(max(r.ell_x for r in reports)),
    )
