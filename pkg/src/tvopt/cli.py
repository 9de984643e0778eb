"""Command-line front end.

Verbs: solve, jacobian, bounds, track, verify. Outputs are deterministic
for a fixed configuration and seed: floats are printed with shortest
round-trip decimals and logging goes to stderr only.

Exit codes: 0 success, 1 certificate failure, 2 infeasible or solver
failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import flows, nlp, scenarios, sensitivity, verify
from .flows import EmptyPolyhedron, run_and_certify
from .nlp import InfeasibleProblem, MaxIterations
from .scenarios import ConfigError

log = logging.getLogger("tvopt")


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "True" if x else "False"
    if x is None:
        return "None"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return repr(int(x))
    return str(x)


def _fmt_vec(x):
    return " ".join(repr(float(v)) for v in np.atleast_1d(x))


def _parse_value(s):
    if s == "None":
        return None
    if s in ("True", "False"):
        return s == "True"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


@dataclass
class RunReport:
    """Flat record of one tracking run; serializes to key = value lines."""

    scenario: str
    mode: str
    step: float
    horizon: float
    a_used: float
    ell_t: float
    bound: float
    limsup_estimate: float
    invariance_ok: bool
    certificate_passed: bool
    feasible_window_end: float
    truncated: bool
    constants: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = []
        for k in ("scenario", "mode", "step", "horizon", "a_used", "ell_t",
                  "bound", "limsup_estimate", "invariance_ok",
                  "certificate_passed", "feasible_window_end", "truncated"):
            lines.append(f"{k} = {_fmt(getattr(self, k))}")
        for k, v in self.constants.items():
            lines.append(f"const_{k} = {_fmt(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text) -> "RunReport":
        plain = {}
        consts = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, val = line.partition(" = ")
            if key.startswith("const_"):
                consts[key[len("const_"):]] = _parse_value(val)
            else:
                plain[key] = _parse_value(val)
        plain["constants"] = consts
        return cls(**plain)


def write_trajectory_csv(path, record: flows.TrajectoryRecord):
    n = record.x_alg.shape[1]
    cols = (["t"] + [f"x_{i + 1}" for i in range(n)]
            + [f"xstar_{i + 1}" for i in range(n)]
            + ["err", "feas_viol", "monot_lhs"])
    rows = [",".join(cols)]
    for k in range(record.times.size):
        vals = [record.times[k], *record.x_alg[k], *record.x_opt[k],
                record.err[k], record.feasibility_violation[k],
                record.monotonicity_lhs[k]]
        rows.append(",".join(repr(float(v)) for v in vals))
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


# ---------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse usage errors are config errors
        self.print_usage(sys.stderr)
        self.exit(3, f"{self.prog}: error: {message}\n")


def _add_scenario_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", metavar="PATH", help="scenario configuration file")
    src.add_argument("--builtin", metavar="NAME",
                     help=f"bundled scenario, one of {', '.join(scenarios.BUILTIN_NAMES)}")
    p.add_argument("--step", type=float, default=None, help="integrator step size")
    p.add_argument("--horizon", type=float, default=None, help="run length in time units")
    p.add_argument("--constants", choices=("paper", "strict"), default="paper",
                   help="arithmetic used for the tracking constants")


def build_parser():
    ap = _Parser(prog="tvopt", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance and report regularity")
    _add_scenario_args(p)
    p.add_argument("--at", type=float, default=0.0, help="evaluation time")

    p = sub.add_parser("jacobian", help="solution-map derivative at a time")
    _add_scenario_args(p)
    p.add_argument("--at", type=float, default=0.0, help="evaluation time")
    p.add_argument("--fd-check", action="store_true",
                   help="compare against the finite-difference oracle")

    p = sub.add_parser("bounds", help="tracking-bound constants")
    _add_scenario_args(p)

    p = sub.add_parser("track", help="integrate the flow and certify tracking")
    _add_scenario_args(p)
    p.add_argument("--out", metavar="DIR", default="tvopt-out",
                   help="directory for trajectory.csv and report.txt")

    p = sub.add_parser("verify", help="run seeded property suites")
    p.add_argument("--suite", default="all",
                   choices=sorted(verify.SUITES) + ["all"])
    p.add_argument("--seed", type=int, default=0)
    return ap


def _load(args):
    if args.builtin:
        cfg, scen = scenarios.builtin_scenario(args.builtin)
    else:
        cfg = scenarios.load_config(args.config)
        if cfg.builtin is not None:
            cfg, scen = scenarios.builtin_scenario(cfg.builtin)
        else:
            scen = scenarios.build_scenario(cfg)
    if args.step is not None:
        if args.step <= 0:
            raise ConfigError("step must be positive")
        cfg.step = args.step
    if args.horizon is not None:
        if args.horizon <= 0:
            raise ConfigError("horizon must be positive")
        cfg.horizon = args.horizon
        scen.horizon = args.horizon
    return cfg, scen


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args):
    cfg, scen = _load(args)
    prob = scenarios.scenario_to_nlp(scen)
    triple = nlp.solve_instance(prob, [args.at])
    report = nlp.check_regularity(prob, triple)
    print(f"scenario = {cfg.name}")
    print(f"t = {_fmt(args.at)}")
    print(f"x = {_fmt_vec(triple.x)}")
    if triple.mu.size:
        print(f"mu = {_fmt_vec(triple.mu)}")
    print(f"kkt_residual = {_fmt(report.kkt_residual_norm)}")
    print(f"licq = {_fmt(report.licq)}")
    print(f"ssosc = {_fmt(report.ssosc)}")
    print(f"scs = {_fmt(report.scs)}")
    print(f"regular_minimizer = {_fmt(report.is_regular_minimizer)}")
    return 0


def cmd_jacobian(args):
    cfg, scen = _load(args)
    prob = scenarios.scenario_to_nlp(scen)
    triple = nlp.solve_instance(prob, [args.at])
    cls = nlp.classify_active_set(prob, triple)
    print(f"scenario = {cfg.name}")
    print(f"t = {_fmt(args.at)}")
    if not cls.scs:
        log.warning("strict complementarity fails at t=%s; reporting the "
                    "degenerate Lipschitz bound instead of a derivative", args.at)
        rep = sensitivity.degenerate_lipschitz_bounds(prob, triple)
        print("scs = False")
        print(f"degenerate_ell_x = {_fmt(rep.ell_x)}")
        print(f"degenerate_ell_lm = {_fmt(rep.ell_lm)}")
        return 0
    blocks = sensitivity.assemble_blocks(prob, triple)
    jac = sensitivity.solution_jacobian(blocks)
    print("scs = True")
    print(f"active_set = {list(blocks.active_set_used)}")
    for i in range(prob.n):
        print(f"dx_dxi[{i + 1}] = {_fmt_vec(jac.dx_dxi[i])}")
    full = jac.multiplier_jacobian_full()
    for i in range(full.shape[0]):
        print(f"dmu_dxi[{i + 1}] = {_fmt_vec(full[i])}")
    if args.fd_check:
        fd = sensitivity.fd_jacobian_oracle(prob, [args.at])
        rel = float(np.abs(jac.dx_dxi - fd).max() / (1.0 + np.abs(jac.dx_dxi).max()))
        for i in range(prob.n):
            print(f"fd_dx_dxi[{i + 1}] = {_fmt_vec(fd[i])}")
        print(f"fd_max_rel_deviation = {_fmt(rel)}")
    return 0


def _bounds(cfg, scen, mode):
    rep, extras = scenarios.scenario_bound_report(scen, mode=mode)
    lines = {
        "scenario": cfg.name,
        "mode": extras["mode"],
        "bound_mode": rep.mode,
        "ell_t": extras["ell_t"],
        "ell_mu": extras["ell_mu"],
        "a": extras["a"],
        "bound": extras["bound"],
        "alpha": extras["alpha"],
        "beta": extras["beta"],
        "omega_used": extras.get("omega_used"),
        "omega_source": extras.get("omega_source"),
        "ell_c_strict": extras.get("ell_c_strict"),
    }
    if "Lbar_sampled" in extras:
        lines["Lbar_sampled"] = extras["Lbar_sampled"]
    return rep, extras, lines


def cmd_bounds(args):
    cfg, scen = _load(args)
    rep, extras, lines = _bounds(cfg, scen, args.constants)
    for k, v in lines.items():
        print(f"{k} = {_fmt(v)}")
    for k, v in rep.constants_used.items():
        print(f"const_{k} = {_fmt(v)}")
    return 0


def cmd_track(args):
    cfg, scen = _load(args)
    rep, extras, _ = _bounds(cfg, scen, args.constants)
    x0 = scenarios.default_x0(cfg, scen)
    record, cert = run_and_certify(
        scen, x0, h=cfg.step, a=extras["a"], ell_t=extras["ell_t"],
        horizon=cfg.horizon if cfg.horizon else None)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "trajectory.csv")
    report_path = os.path.join(args.out, "report.txt")
    write_trajectory_csv(csv_path, record)
    run_report = RunReport(
        scenario=cfg.name, mode=args.constants, step=cfg.step, horizon=cfg.horizon,
        a_used=cert.a_used, ell_t=extras["ell_t"], bound=cert.bound,
        limsup_estimate=cert.limsup_estimate, invariance_ok=cert.invariance_ok,
        certificate_passed=cert.passed,
        feasible_window_end=record.feasible_window_end, truncated=record.truncated,
        constants={
            "alpha": extras["alpha"], "beta": extras["beta"],
            "omega_used": extras.get("omega_used"),
            "omega_source": extras.get("omega_source"),
            "ell_c_strict": extras.get("ell_c_strict"),
            "max_feasibility_violation": float(record.feasibility_violation.max(initial=0.0)),
        },
    )
    with open(report_path, "w") as fh:
        fh.write(run_report.to_text())
    print(run_report.to_text(), end="")
    print(f"trajectory_csv = {csv_path}")
    print(f"report_txt = {report_path}")
    return 0 if cert.passed else 1


def cmd_verify(args):
    names = sorted(verify.SUITES) if args.suite == "all" else [args.suite]
    failed = False
    for name in names:
        res = verify.run_suite(name, seed=args.seed)
        status = "PASS" if res.ok else "FAIL"
        detail = " ".join(f"{k}={_fmt(v)}" for k, v in sorted(res.details.items()))
        print(f"{res.name}: {status} ({res.passed}/{res.total}) {detail}")
        failed = failed or not res.ok
    return 1 if failed else 0


COMMANDS = {
    "solve": cmd_solve,
    "jacobian": cmd_jacobian,
    "bounds": cmd_bounds,
    "track": cmd_track,
    "verify": cmd_verify,
}


def _setup_logging():
    level = {"quiet": logging.WARNING, "info": logging.INFO,
             "debug": logging.DEBUG}.get(os.environ.get("TVOPT_LOG", "quiet"))
    if level is None:
        level = logging.WARNING
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (InfeasibleProblem, EmptyPolyhedron, MaxIterations) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
