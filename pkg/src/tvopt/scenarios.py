"""Scenario configuration: a small expression grammar, JSON configs, the
two bundled example scenarios, and the derivation of tracking constants.

The cost of every scenario is (x - c(t))^T Q (x - c(t)). The translation
curve c comes either from a triangular wave (period, slope), or from a
vector of grammar expressions P(t) through c(t) = -Q^{-1} P(t) / 2, which
matches how such costs arise from x^T Q x + P(t)^T x after completing the
square.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from itertools import combinations
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from . import sensitivity
from .flows import TimeVaryingScenario, instantaneous_optimizer

BUILTIN_NAMES = ("paper-ex1", "paper-ex2")

# Reproduces the bundled constrained example's published tracking bound;
# its source states the rank constant was read off by inspection without
# printing it, and this is the value consistent with the printed bound.
PAPER_EX2_OMEGA = 1.74


class ConfigError(Exception):
    """Malformed or inconsistent scenario configuration."""


# ---------------------------------------------------------------------------
# expression grammar:  expr := term (('+'|'-') term)* ; term := unary ('*' unary)*
# unary := '-' unary | atom ; atom := number | 't' | fn '(' expr ')' | '(' expr ')'

_FUNCS = ("sin", "cos", "tanh")


def _tokenize(text):
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "+-*()":
            out.append(ch)
            i += 1
        elif ch.isdigit() or ch == ".":
            j = i
            while j < len(text) and (text[j].isdigit() or text[j] in ".eE" or
                                     (text[j] in "+-" and text[j - 1] in "eE")):
                j += 1
            out.append(("num", float(text[i:j])))
            i = j
        elif ch.isalpha():
            j = i
            while j < len(text) and text[j].isalpha():
                j += 1
            word = text[i:j]
            if word == "t":
                out.append(("t",))
            elif word in _FUNCS:
                out.append(("fn", word))
            else:
                raise ConfigError(f"unknown symbol {word!r} in expression {text!r}")
            i = j
        else:
            raise ConfigError(f"unexpected character {ch!r} in expression {text!r}")
    return out


def parse_expr(text):
    """Parse one expression of the closed grammar into an AST."""
    toks = _tokenize(text)
    pos = [0]

    def peek():
        return toks[pos[0]] if pos[0] < len(toks) else None

    def take(tok=None):
        cur = peek()
        if cur is None or (tok is not None and cur != tok):
            raise ConfigError(f"malformed expression {text!r}")
        pos[0] += 1
        return cur

    def expr():
        node = term()
        while peek() in ("+", "-"):
            op = take()
            node = ("add" if op == "+" else "sub", node, term())
        return node

    def term():
        node = unary()
        while peek() == "*":
            take()
            node = ("mul", node, unary())
        return node

    def unary():
        if peek() == "-":
            take()
            return ("neg", unary())
        if peek() == "+":
            take()
            return unary()
        return atom()

    def atom():
        cur = peek()
        if cur == "(":
            take()
            node = expr()
            take(")")
            return node
        if isinstance(cur, tuple) and cur[0] == "num":
            take()
            return ("num", cur[1])
        if cur == ("t",):
            take()
            return ("t",)
        if isinstance(cur, tuple) and cur[0] == "fn":
            take()
            take("(")
            node = expr()
            take(")")
            return (cur[1], node)
        raise ConfigError(f"malformed expression {text!r}")

    node = expr()
    if pos[0] != len(toks):
        raise ConfigError(f"trailing tokens in expression {text!r}")
    return node


def eval_expr(node, t):
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "t":
        return t
    if kind == "neg":
        return -eval_expr(node[1], t)
    if kind == "add":
        return eval_expr(node[1], t) + eval_expr(node[2], t)
    if kind == "sub":
        return eval_expr(node[1], t) - eval_expr(node[2], t)
    if kind == "mul":
        return eval_expr(node[1], t) * eval_expr(node[2], t)
    if kind == "sin":
        return math.sin(eval_expr(node[1], t))
    if kind == "cos":
        return math.cos(eval_expr(node[1], t))
    if kind == "tanh":
        return math.tanh(eval_expr(node[1], t))
    raise ConfigError(f"bad AST node {node!r}")


def diff_expr(node):
    """Exact derivative AST with respect to t."""
    kind = node[0]
    if kind == "num":
        return ("num", 0.0)
    if kind == "t":
        return ("num", 1.0)
    if kind == "neg":
        return ("neg", diff_expr(node[1]))
    if kind in ("add", "sub"):
        return (kind, diff_expr(node[1]), diff_expr(node[2]))
    if kind == "mul":
        return ("add", ("mul", diff_expr(node[1]), node[2]),
                ("mul", node[1], diff_expr(node[2])))
    if kind == "sin":
        return ("mul", ("cos", node[1]), diff_expr(node[1]))
    if kind == "cos":
        return ("neg", ("mul", ("sin", node[1]), diff_expr(node[1])))
    if kind == "tanh":
        u = node[1]
        return ("mul", ("sub", ("num", 1.0), ("mul", ("tanh", u), ("tanh", u))),
                diff_expr(u))
    raise ConfigError(f"bad AST node {node!r}")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ScenarioConfig:
    """Plain-data description of a scenario, JSON round-trippable."""

    name: str = "scenario"
    kind: str = "unconstrained"
    Q: Optional[list] = None
    P: Optional[list] = None          # grammar expressions, one per dimension
    wave: Optional[dict] = None       # {"period": ..., "slope": ...}
    U: Optional[list] = None
    V1: Optional[list] = None
    V2: Optional[list] = None
    horizon: float = 10.0
    step: float = 1e-3
    x0: Optional[list] = None
    constants: dict = field(default_factory=dict)
    builtin: Optional[str] = None

    _FIELDS = ("name", "kind", "Q", "P", "wave", "U", "V1", "V2",
               "horizon", "step", "x0", "constants", "builtin")
    _CONSTANT_KEYS = ("a", "alpha", "beta", "omega", "ell_c", "ell_v")

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(d) - set(cls._FIELDS)
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self):
        d = asdict(self)
        return {k: d[k] for k in self._FIELDS if d[k] is not None and d[k] != {}}

    def validate(self):
        if self.builtin is not None:
            if self.builtin not in BUILTIN_NAMES:
                raise ConfigError(f"unknown builtin {self.builtin!r}")
            return
        if self.kind not in ("unconstrained", "polyhedral-sweeping"):
            raise ConfigError(f"unknown kind {self.kind!r}")
        if self.Q is None:
            raise ConfigError("configuration needs the quadratic cost matrix Q")
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        n = Q.shape[0]
        if Q.shape != (n, n):
            raise ConfigError("Q must be square")
        if np.linalg.eigvalsh(0.5 * (Q + Q.T))[0] <= 0:
            raise ConfigError("Q must be positive definite")
        if (self.P is None) == (self.wave is None):
            raise ConfigError("exactly one of P or wave must describe the motion")
        if self.P is not None:
            if len(self.P) != n:
                raise ConfigError("P must have one expression per dimension")
            for s in self.P:
                parse_expr(s)
        if self.wave is not None:
            if n != 1:
                raise ConfigError("wave motion is one-dimensional")
            if set(self.wave) != {"period", "slope"} or self.wave["period"] <= 0:
                raise ConfigError("wave needs positive period and a slope")
        if self.kind == "polyhedral-sweeping":
            if self.U is None or self.V1 is None or self.V2 is None:
                raise ConfigError("polyhedral scenarios need U, V1 and V2")
            U = np.atleast_2d(np.asarray(self.U, dtype=float))
            if U.shape[1] != n or len(self.V1) != U.shape[0] or len(self.V2) != U.shape[0]:
                raise ConfigError("U, V1, V2 dimensions are inconsistent")
        elif self.U is not None or self.V1 is not None or self.V2 is not None:
            raise ConfigError("unconstrained scenarios take no U, V1, V2")
        if self.horizon <= 0 or self.step <= 0:
            raise ConfigError("horizon and step must be positive")
        if self.x0 is not None and len(self.x0) != n:
            raise ConfigError("x0 has the wrong dimension")
        bad = set(self.constants) - set(self._CONSTANT_KEYS)
        if bad:
            raise ConfigError(f"unknown constant overrides {sorted(bad)}")


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}") from exc
    return ScenarioConfig.from_dict(data)


def dump_config(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=False) + "\n"


# ---------------------------------------------------------------------------
# scenario construction


def _wave_callables(period, slope):
    half = period / 2.0
    amp = slope * period / 4.0

    def c(t):
        s = t % period
        if s < half:
            return np.array([slope * s - amp])
        return np.array([amp - slope * (s - half)])

    def cdot(t):
        # right derivative at the kinks
        s = t % period
        return np.array([slope if s < half else -slope])

    return c, cdot


def _sampled_sup(fn, horizon, samples=8001):
    ts = np.linspace(0.0, horizon, samples)
    return float(max(np.linalg.norm(fn(t)) for t in ts))


def build_scenario(cfg: ScenarioConfig) -> TimeVaryingScenario:
    """Materialize a configuration into callable scenario data."""
    if cfg.builtin is not None:
        base_cfg, scen = builtin_scenario(cfg.builtin)
        return scen
    cfg.validate()
    Q = np.atleast_2d(np.asarray(cfg.Q, dtype=float))
    n = Q.shape[0]
    kink_period = None
    P_of_t = P_dot_of_t = None
    if cfg.wave is not None:
        c, cdot = _wave_callables(float(cfg.wave["period"]), float(cfg.wave["slope"]))
        ell_c = abs(float(cfg.wave["slope"]))
        kink_period = float(cfg.wave["period"])
    else:
        asts = [parse_expr(s) for s in cfg.P]
        dasts = [diff_expr(a) for a in asts]
        half_Qinv = 0.5 * np.linalg.inv(Q)

        def P_of_t(t, _a=asts):
            return np.array([eval_expr(a, t) for a in _a])

        def P_dot_of_t(t, _d=dasts):
            return np.array([eval_expr(a, t) for a in _d])

        def c(t):
            return -half_Qinv @ P_of_t(t)

        def cdot(t):
            return -half_Qinv @ P_dot_of_t(t)

        ell_c = None  # sampled below once the horizon is known

    scen = TimeVaryingScenario(
        kind=cfg.kind, Q=Q, c_of_t=c, c_dot_of_t=cdot,
        ell_c=0.0 if ell_c is None else ell_c,
        U=None if cfg.U is None else np.atleast_2d(np.asarray(cfg.U, dtype=float)),
        V1=None if cfg.V1 is None else np.asarray(cfg.V1, dtype=float),
        V2=None if cfg.V2 is None else np.asarray(cfg.V2, dtype=float),
        horizon=float(cfg.horizon), name=cfg.name, kink_period=kink_period,
        P_of_t=P_of_t, P_dot_of_t=P_dot_of_t,
    )
    if ell_c is None:
        scen.ell_c = _sampled_sup(cdot, scen.horizon)
    return scen


def default_x0(cfg: ScenarioConfig, scenario: TimeVaryingScenario):
    if cfg.x0 is not None:
        return np.asarray(cfg.x0, dtype=float)
    return instantaneous_optimizer(scenario, 0.0).x


# ---------------------------------------------------------------------------
# bundled examples


def _paper_ex1():
    cfg = ScenarioConfig(
        name="paper-ex1", kind="unconstrained", Q=[[1.0]],
        wave={"period": 4.0, "slope": 1.0},
        horizon=40.0, step=1e-3, x0=[5.0], builtin=None,
    )
    scen = build_scenario(cfg)
    cfg.builtin = "paper-ex1"
    return cfg, scen


def _paper_ex2():
    Q = np.array([[12.0, -8.0], [-8.0, 10.0]])
    U = [[-2.0, 1.0], [1.0, -1.0], [0.5, 1.0], [-3.0, -1.0]]
    V1 = [-0.05, -0.3, 0.25, -0.5]
    V2 = [-2.0, 5.0, 4.0, 3.0]
    half_Qinv = 0.5 * np.linalg.inv(Q)

    def P(t):
        return -np.array([3.0 * np.sin(t + 3.0) + 1.3 * t,
                          2.0 * np.tanh(t - 3.0) + 0.71 * t])

    def Pdot(t):
        return -np.array([3.0 * np.cos(t + 3.0) + 1.3,
                          2.0 * (1.0 - np.tanh(t - 3.0) ** 2) + 0.71])

    def c(t):
        return -half_Qinv @ P(t)

    def cdot(t):
        return -half_Qinv @ Pdot(t)

    scen = TimeVaryingScenario(
        kind="polyhedral-sweeping", Q=Q, c_of_t=c, c_dot_of_t=cdot,
        ell_c=0.0, U=np.array(U), V1=np.array(V1), V2=np.array(V2),
        horizon=16.0, name="paper-ex2", omega_paper=PAPER_EX2_OMEGA,
        P_of_t=P, P_dot_of_t=Pdot,
    )
    scen.ell_c = _sampled_sup(cdot, scen.horizon)
    # start inside the tracking ball: step off the initial optimizer along
    # the inward normal of the constraint it sits on
    xstar0 = instantaneous_optimizer(scen, 0.0).x
    u0 = scen.U[0] / np.linalg.norm(scen.U[0])
    x0 = xstar0 - 0.45 * u0
    cfg = ScenarioConfig(
        name="paper-ex2", kind="polyhedral-sweeping",
        Q=[list(map(float, row)) for row in Q],
        P=["-(3*sin(t+3)+1.3*t)", "-(2*tanh(t-3)+0.71*t)"],
        U=U, V1=V1, V2=V2, horizon=16.0, step=1e-3,
        x0=[float(x0[0]), float(x0[1])], builtin="paper-ex2",
    )
    return cfg, scen


def builtin_scenario(name):
    """Hard-coded example scenarios; golden numbers never pass the parser."""
    if name == "paper-ex1":
        return _paper_ex1()
    if name == "paper-ex2":
        return _paper_ex2()
    raise ConfigError(f"unknown builtin {name!r}")


def scenario_to_nlp(scenario: TimeVaryingScenario):
    """View a scenario as a program parametrized by the scalar time.

    Exact derivatives throughout; for kinked translation curves the time
    derivative is the right-sided one.
    """
    from .nlp import ParametrizedNLP

    Q = scenario.Q
    n, m = scenario.n, scenario.m

    def f(x, xi):
        d = x - scenario.c_of_t(xi[0])
        return float(d @ Q @ d)

    def grad(x, xi):
        return 2.0 * Q @ (x - scenario.c_of_t(xi[0]))

    def cross(x, xi):
        return (-2.0 * Q @ scenario.c_dot_of_t(xi[0])).reshape(n, 1)

    kw = dict(
        n=n, p=0, m=m, r=1, f=f, grad_x_f=grad,
        hess_xx_f=lambda x, xi: 2.0 * Q,
        cross_xi_x_f=cross,
        name=scenario.name,
    )
    if m:
        U, V1 = scenario.U, scenario.V1
        kw.update(
            g=lambda x, xi: U @ x - scenario.v_of_t(xi[0]),
            jac_x_g=lambda x, xi: U,
            hess_xx_g=lambda x, xi: np.zeros((m, n, n)),
            cross_xi_x_g=lambda x, xi: np.zeros((m, n, 1)),
            jac_xi_g=lambda x, xi: (-V1).reshape(m, 1),
        )
    return ParametrizedNLP(**kw)


# ---------------------------------------------------------------------------
# constraint-rank enumeration and tracking constants


def polyhedral_active_subsets(U, v_fn, t_grid, max_extra=1):
    """Row subsets that can be simultaneously active at a feasible point.

    For each grid time, a subset I is kept when the face
    {x : U_I x = v_I, U x <= v} is nonempty (checked by a feasibility
    program). Subsets up to one more than the dimension are examined so
    rank-breaking corners are noticed.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    m, n = U.shape
    found = set()
    sizes = range(1, min(m, n + max_extra) + 1)
    for t in np.asarray(t_grid, dtype=float):
        v = np.asarray(v_fn(t), dtype=float)
        for size in sizes:
            for idx in combinations(range(m), size):
                if idx in found:
                    continue
                res = linprog(np.zeros(n), A_ub=U, b_ub=v,
                              A_eq=U[list(idx)], b_eq=v[list(idx)],
                              bounds=[(None, None)] * n, method="highs")
                if res.status == 0:
                    found.add(idx)
    return sorted(found)


def enumerated_omega(U, v_fn, t_grid, max_extra=1):
    """Sampled uniform-rank constant: smallest sigma_min over realizable
    active subsets. Zero when a subset larger than the dimension occurs."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    n = U.shape[1]
    subsets = polyhedral_active_subsets(U, v_fn, t_grid, max_extra=max_extra)
    if not subsets:
        return None, subsets
    omega = np.inf
    for idx in subsets:
        if len(idx) > n:
            omega = 0.0
            continue
        s = np.linalg.svd(U[list(idx)], compute_uv=False)
        omega = min(omega, float(s[-1]))
    return omega, subsets


def scenario_bound_report(scenario: TimeVaryingScenario, mode="paper",
                          constants=None, omega_grid=33):
    """Tracking-bound constants for a scenario in one of two arithmetics.

    ``paper`` bounds the parameter coupling of the gradient directly, by
    sampling the supremum of |d/dt grad cost| (for translated quadratics
    this equals |P'(t)| when the cost is given through P), and uses the
    pinned inspection value of the rank constant when the scenario carries
    one. ``strict`` uses the literal Lipschitz constant of the translation
    curve in the composite closed form, with the rank constant enumerated
    from realizable active subsets.

    Returns (report, extras) where extras carries the tracking constant,
    the bound ell_t / a, and the provenance of each constant.
    """
    if mode not in ("paper", "strict"):
        raise ConfigError(f"unknown constants mode {mode!r}")
    constants = dict(constants or {})
    alpha = float(constants.get("alpha", scenario.alpha))
    beta = float(constants.get("beta", scenario.beta))
    a = float(constants.get("a", alpha))
    ell_c = float(constants.get("ell_c", scenario.ell_c))
    ell_v = float(constants.get("ell_v", scenario.ell_v))

    extras = {"mode": mode, "a": a, "alpha": alpha, "beta": beta,
              "ell_c_strict": scenario.ell_c}

    if scenario.kind == "unconstrained":
        rep = sensitivity.special_case_bound(
            "composite", {"alpha": alpha, "beta": beta, "ell_c": ell_c,
                          "ell_v": 0.0, "omega": None})
        extras.update(omega_used=None, omega_source="vacuous")
    else:
        if "omega" in constants:
            omega, source = float(constants["omega"]), "override"
        elif mode == "paper" and scenario.omega_paper is not None:
            omega, source = float(scenario.omega_paper), "paper-inspection"
        else:
            grid = np.linspace(0.0, scenario.horizon, omega_grid)
            omega, _ = enumerated_omega(scenario.U, scenario.v_of_t, grid)
            source = "enumerated"
            if omega is None or omega <= 0:
                raise ConfigError("could not certify a positive rank constant")
        extras.update(omega_used=omega, omega_source=source)
        if mode == "paper":
            if scenario.P_dot_of_t is not None:
                Lbar = _sampled_sup(scenario.P_dot_of_t, scenario.horizon)
            else:
                Lbar = _sampled_sup(lambda t: 2.0 * scenario.Q @ scenario.c_dot_of_t(t),
                                    scenario.horizon)
            rep = sensitivity.global_lipschitz_bounds(
                alpha, beta, None, None, omega, Lbar=Lbar, Gbar=ell_v)
            extras["Lbar_sampled"] = Lbar
        else:
            rep = sensitivity.special_case_bound(
                "composite", {"alpha": alpha, "beta": beta, "omega": omega,
                              "ell_c": ell_c, "ell_v": ell_v})
    ell_t = rep.ell_x
    extras.update(ell_t=ell_t, bound=ell_t / a, ell_mu=rep.ell_lm)
    return rep, extras
