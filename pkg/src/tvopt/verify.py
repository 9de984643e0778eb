"""Seeded property ensembles shared by the test suite and the CLI.

Every generator takes an explicit seed so a run is reproducible down to the
byte. The suites return counts and worst-case residuals instead of raising,
so callers can render pass/fail summaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import flows, linalg, nlp, sensitivity


@dataclass
class SuiteResult:
    name: str
    passed: int
    total: int
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.passed == self.total


def random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def random_spd(rng, n, cond_max=1e4):
    """Symmetric positive definite with condition number up to cond_max."""
    cond = np.exp(rng.uniform(0.0, np.log(cond_max)))
    eigs = np.exp(rng.uniform(0.0, 1.0, n))
    eigs = 1.0 + (eigs - eigs.min()) / max(float(np.ptp(eigs)), 1e-12) * (cond - 1.0)
    V = random_orthogonal(rng, n)
    return V @ np.diag(eigs) @ V.T


def random_full_row_rank(rng, k, n, sigma_range=(0.5, 2.0)):
    sig = np.exp(rng.uniform(np.log(sigma_range[0]), np.log(sigma_range[1]), k))
    Uo = random_orthogonal(rng, k)
    Vo = random_orthogonal(rng, n)[:k]
    return Uo @ np.diag(sig) @ Vo


def suite_lemma1(seed=0, trials=1000):
    """Projector norm bound and projector algebra on random metric pairs."""
    rng = np.random.default_rng(seed)
    passed = 0
    worst_norm_excess = -np.inf
    worst_algebra = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 8))
        k = int(rng.integers(1, n + 1))
        A = random_spd(rng, n, cond_max=1e4)
        B = random_full_row_rank(rng, k, n)
        Sigma, Pi = linalg.oblique_projectors(A, B)
        w = np.linalg.eigvalsh(A)
        bound = np.sqrt(w[-1] / w[0])
        norms = max(np.linalg.norm(Sigma, 2), np.linalg.norm(Pi, 2))
        algebra = max(
            np.linalg.norm(Sigma + Pi - np.eye(n), 2),
            np.linalg.norm(Sigma @ Sigma - Sigma, 2),
            np.linalg.norm(Pi @ Pi - Pi, 2),
            np.linalg.norm(B @ Pi, 2),
        )
        worst_norm_excess = max(worst_norm_excess, norms - bound)
        worst_algebra = max(worst_algebra, algebra)
        if norms <= bound + 1e-9 and algebra <= 1e-9:
            passed += 1
    return SuiteResult("lemma1", passed, trials, {
        "worst_norm_excess": worst_norm_excess,
        "worst_algebra_residual": worst_algebra,
    })


def suite_block_inverse(seed=0, trials=500):
    """Multiply-back residual of the partitioned inverse on random splits."""
    rng = np.random.default_rng(seed)
    passed = 0
    worst = 0.0
    done = 0
    while done < trials:
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 6))
        N = n + m
        sig = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), N))
        sig = sig / sig.max() * np.exp(rng.uniform(0.0, np.log(1e3)))
        M = random_orthogonal(rng, N) @ np.diag(sig) @ random_orthogonal(rng, N)
        A = M[:n, :n]
        if linalg.condition_number(M) > 1e6 or linalg.condition_number(A) > 1e5:
            continue
        done += 1
        B, C, D = M[n:, :n], M[:n, n:], M[n:, n:]
        try:
            M1, M2, M3, M4 = linalg.block_inverse(A, B, C, D)
        except linalg.LinalgError:
            continue
        Minv = np.block([[M1, M2], [M3, M4]])
        resid = float(np.abs(M @ Minv - np.eye(N)).max())
        worst = max(worst, resid)
        if resid <= 1e-10:
            passed += 1
    return SuiteResult("block-inverse", passed, trials, {"worst_residual": worst})


# ---------------------------------------------------------------------------
# random strongly convex parametric programs with known structure


def random_qp_instance(rng, n_max=6, m_max=4, r_max=3):
    """Strongly convex QP with linear parametric constraints, built so that
    the solution at the base parameter is known and strictly complementary.

    Returns (problem, xi0, truth) where truth carries the designed solution,
    active set and multipliers.
    """
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    r = int(rng.integers(1, r_max + 1))
    Q = random_spd(rng, n, cond_max=30.0)
    S = rng.standard_normal((n, r))
    H = 0.5 * rng.standard_normal((m, r))
    xi0 = rng.standard_normal(r)
    xhat = rng.standard_normal(n)
    n_act = int(rng.integers(0, min(m, n - 1) + 1))

    for _ in range(64):
        G = rng.standard_normal((m, n))
        G /= np.linalg.norm(G, axis=1, keepdims=True)
        if n_act == 0:
            break
        s = np.linalg.svd(G[:n_act], compute_uv=False)
        if s[-1] >= 0.3:
            break
    act = list(range(n_act))
    b = G @ xhat - H @ xi0
    slack = 0.3 + rng.uniform(0.0, 1.0, m)
    b[n_act:] += slack[n_act:]
    mu = np.zeros(m)
    mu[act] = 0.3 + rng.uniform(0.0, 1.2, n_act)
    q0 = -(Q @ xhat + S @ xi0 + G.T @ mu)

    prob = nlp.ParametrizedNLP(
        n=n, p=0, m=m, r=r,
        f=lambda x, xi: 0.5 * x @ Q @ x + (q0 + S @ xi) @ x,
        g=lambda x, xi: G @ x - H @ xi - b,
        grad_x_f=lambda x, xi: Q @ x + q0 + S @ xi,
        jac_x_g=lambda x, xi: G,
        hess_xx_f=lambda x, xi: Q,
        hess_xx_g=lambda x, xi: np.zeros((m, n, n)),
        cross_xi_x_f=lambda x, xi: S,
        cross_xi_x_g=lambda x, xi: np.zeros((m, n, r)),
        jac_xi_g=lambda x, xi: -H,
        name="random-qp",
    )
    truth = {"x": xhat, "mu": mu, "active": tuple(act),
             "Q": Q, "S": S, "G": G, "H": H}
    return prob, xi0, truth


def qp_ensemble(seed=0, count=100, **kw):
    rng = np.random.default_rng(seed)
    return [random_qp_instance(rng, **kw) for _ in range(count)]


def suite_fd_jacobian(seed=0, trials=100):
    """Closed-form solution Jacobian against the finite-difference oracle."""
    rng = np.random.default_rng(seed)
    passed = 0
    worst = 0.0
    for _ in range(trials):
        prob, xi0, truth = random_qp_instance(rng)
        sol = nlp.solve_instance(prob, xi0, tol=1e-11)
        cls = nlp.classify_active_set(prob, sol)
        if not cls.scs or cls.active != truth["active"]:
            # construction guarantees margins; a mismatch is a failure
            continue
        blocks = sensitivity.assemble_blocks(prob, sol)
        jac = sensitivity.solution_jacobian(blocks)
        fd = sensitivity.fd_jacobian_oracle(prob, xi0)
        rel = float(np.abs(jac.dx_dxi - fd).max() / (1.0 + np.abs(jac.dx_dxi).max()))
        worst = max(worst, rel)
        if rel <= 1e-5:
            passed += 1
    return SuiteResult("fd-jacobian", passed, trials, {"worst_rel_deviation": worst})


def suite_projection(seed=0, trials=200):
    """Fast polyhedron projection against the exhaustive active-set oracle."""
    rng = np.random.default_rng(seed)
    passed = 0
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 7))
        U = rng.standard_normal((m, n))
        interior = rng.standard_normal(n)
        v = U @ interior + rng.uniform(0.05, 1.0, m)
        z = rng.standard_normal(n) * 2.0
        y_fast = flows.project_polyhedron(z, U, v)
        y_ref = flows.projection_enumeration_oracle(z, U, v)
        if y_ref is None:
            continue
        dev = float(np.abs(y_fast - y_ref).max())
        worst = max(worst, dev)
        if dev <= 1e-10:
            passed += 1
    return SuiteResult("projection", passed, trials, {"worst_deviation": worst})


SUITES = {
    "lemma1": suite_lemma1,
    "block-inverse": suite_block_inverse,
    "fd-jacobian": suite_fd_jacobian,
    "projection": suite_projection,
}


def run_suite(name, seed=0):
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; pick from {sorted(SUITES)} or 'all'")
    return SUITES[name](seed=seed)
