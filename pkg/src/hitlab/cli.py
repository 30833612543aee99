"""Command-line driver.

    hitlab mesh-build --level 3 --out runs
    hitlab verify-all --config run.cfg
    hitlab report runs/run-0001

Config files hold one ``key = value`` per line; ``#`` starts a comment.
See ``RunConfig`` for the keys.  Exit codes: 0 ok, 1 a check failed,
2 usage or config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

__all__ = ["ConfigParseError", "MissingReport", "RunConfig", "parse_config", "main",
           "verify_all", "summarize"]

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
SUITE_ORDER = ("mesh", "basis", "fuchsian", "solver", "connection", "goldman")
OUT_ENV = "HITLAB_OUT"


class ConfigParseError(ValueError):
    pass


class MissingReport(FileNotFoundError):
    pass


@dataclass
class RunConfig:
    level: int = 2
    newton_tol: float = 1e-9
    continuation_steps: int = 8
    dt: tuple = (1e-2, 5e-3)
    q_index: tuple = (0,)
    q_amplitude: tuple = (1.0,)
    goldman_t: float = 0.1
    pairing_constant: float = 16.0
    out: str = "runs"
    seed: int = 0

    def validate(self):
        if not 0 <= self.level <= 5:
            raise ConfigParseError(f"level {self.level} outside 0..5")
        if self.newton_tol <= 0 or any(d <= 0 for d in self.dt):
            raise ConfigParseError("tolerances and dt must be positive")
        if self.continuation_steps < 1:
            raise ConfigParseError("continuation_steps must be >= 1")
        if len(self.q_index) != len(self.q_amplitude):
            raise ConfigParseError("q_index and q_amplitude need the same length")
        if any(not 0 <= i < 5 for i in self.q_index):
            raise ConfigParseError("q_index entries must be in 0..4")
        if self.pairing_constant <= 0:
            raise ConfigParseError("pairing_constant must be positive")
        return self

    def to_dict(self):
        d = asdict(self)
        d["q_amplitude"] = [str(complex(a)) for a in self.q_amplitude]
        d["dt"] = list(self.dt)
        d["q_index"] = list(self.q_index)
        return d


def _scalar(kind):
    def conv(s):
        if kind is complex:
            v = complex(s.replace(" ", ""))
            return v.real if v.imag == 0 else v
        return kind(s)
    return conv


_PARSERS = {
    "level": _scalar(int),
    "newton_tol": _scalar(float),
    "continuation_steps": _scalar(int),
    "dt": lambda s: tuple(float(x) for x in s.split(",")),
    "q_index": lambda s: tuple(int(x) for x in s.split(",")),
    "q_amplitude": lambda s: tuple(_scalar(complex)(x) for x in s.split(",")),
    "goldman_t": _scalar(float),
    "pairing_constant": _scalar(float),
    "out": str,
    "seed": _scalar(int),
}


def parse_config(text, base=None):
    """Parse ``key = value`` lines into a validated RunConfig."""
    cfg = base or RunConfig()
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"line {n}: expected key = value")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigParseError(f"line {n}: unknown key {key!r}")
        try:
            setattr(cfg, key, _PARSERS[key](val))
        except ValueError as exc:
            raise ConfigParseError(f"line {n}: bad value for {key}: {exc}") from None
    return cfg.validate()


def load_config(args):
    cfg = RunConfig()
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigParseError(f"cannot read config: {exc}") from None
        cfg = parse_config(text, cfg)
    if args.level is not None:
        cfg.level = args.level
    if args.seed is not None:
        cfg.seed = args.seed
    if os.environ.get(OUT_ENV):
        cfg.out = os.environ[OUT_ENV]
    if args.out:
        cfg.out = args.out
    return cfg.validate()


def _header(name, elapsed=None):
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    extra = "" if elapsed is None else f" elapsed={elapsed:.1f}s"
    return f"# hitlab {name} generated={stamp}{extra}\n"


def _write_report(path, name, body, elapsed=None):
    with open(path, "w") as fh:
        fh.write(_header(name, elapsed))
        fh.write(json.dumps(body, indent=1, sort_keys=True, default=_jsonable))
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serialisable: {type(x)}")


def read_report(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return json.loads("".join(lines))


def _new_run_dir(out):
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    n = 1
    while (root / f"run-{n:04d}").exists():
        n += 1
    d = root / f"run-{n:04d}"
    d.mkdir()
    return d


def _numerical_errors():
    from .connections import PathNotFound, UnsolvedState
    from .differentials import KernelGapFailure
    from .goldman import DegenerateGram
    from .numerics import NonConvergence, SingularOperator
    from .surface import MeshQualityFailure
    from .wang import NewtonDivergence, SingularLinearization
    return (NewtonDivergence, SingularLinearization, NonConvergence, SingularOperator,
            KernelGapFailure, DegenerateGram, MeshQualityFailure, UnsolvedState, PathNotFound,
            FloatingPointError)


# ---------------------------------------------------------------------------
# commands

def verify_all(cfg, run_dir=None, log=print, suites=SUITE_ORDER):
    """Run the suites in order and write one report each.  Returns (exit code, reports)."""
    from .suites import SuiteReport, Workspace, run_suite
    run_dir = Path(run_dir) if run_dir else _new_run_dir(cfg.out)
    _write_report(run_dir / "config.json", "config", cfg.to_dict())
    ws = Workspace(cfg)
    reports = []
    code = EXIT_OK
    for name in suites:
        t0 = time.perf_counter()
        try:
            rep = run_suite(name, ws)
        except _numerical_errors() as exc:
            rep = SuiteReport(name, cfg.level, error=f"{type(exc).__name__}: {exc}")
            code = EXIT_NUMERIC
        elapsed = time.perf_counter() - t0
        _write_report(run_dir / f"{name}.json", name, rep.to_dict(), elapsed)
        reports.append(rep)
        for c in rep.checks:
            if not c.passed:
                log(f"[{name}] {c.describe()}")
        status = "ok" if rep.passed else ("error: " + rep.error if rep.error else "FAILED")
        log(f"suite {name:<10} {status}  ({elapsed:.1f}s)")
        if code == EXIT_NUMERIC:
            break
        if not rep.passed:
            code = EXIT_CHECK
    log(f"reports written to {run_dir}")
    return code, reports


def _load_run(run_dir):
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise MissingReport(f"{run_dir} is not a directory")
    reps = {}
    for name in SUITE_ORDER:
        p = run_dir / f"{name}.json"
        if p.exists():
            reps[name] = read_report(p)
    if not reps:
        raise MissingReport(f"no suite reports in {run_dir}")
    return reps


def _refinement_rows(series):
    """Group refinement-tracked series by (run, suite, metric, param); also
    merge runs at distinct levels using each run's own level."""
    per_run, merged = {}, {}
    for run, run_level, suite, metric, level, param, value, tracked in series:
        if not tracked:
            continue
        per_run.setdefault((run, suite, metric, param), {})[level] = value
        if level == run_level:
            merged.setdefault((suite, metric, param), {}).setdefault(level, value)
    rows = []

    def fmt(label, by_level):
        lv = sorted(by_level)
        vals = [by_level[x] for x in lv]
        mono = all(vals[i + 1] < vals[i] for i in range(len(vals) - 1))
        return (f"  {label}: " + ", ".join(f"L{x}={by_level[x]:.4g}" for x in lv)
                + ("  decreasing" if mono else "  NOT decreasing"))

    for (run, suite, metric, param), by_level in per_run.items():
        if len(by_level) > 1:
            tag = metric + (f" param={param}" if param != "" else "")
            rows.append(fmt(f"{run} {suite}/{tag}", by_level))
    if len({s[1] for s in series}) > 1:
        for (suite, metric, param), by_level in sorted(merged.items(), key=str):
            if len(by_level) > 1:
                tag = metric + (f" param={param}" if param != "" else "")
                rows.append(fmt(f"across runs {suite}/{tag}", by_level))
    return rows


def summarize(run_dirs, csv_dir=None):
    """Summary text for one or more run directories; writes CSV tables if asked."""
    runs = [(str(d), _load_run(d)) for d in run_dirs]
    lines, checks, series, eig = [], [], [], []
    for label, reps in runs:
        n_pass = sum(c["passed"] for r in reps.values() for c in r["checks"])
        n_all = sum(len(r["checks"]) for r in reps.values())
        level = next(iter(reps.values()))["level"]
        lines.append(f"run {label}: level {level}, {n_pass}/{n_all} checks passed")
        for name, r in reps.items():
            state = "pass" if r["passed"] else ("error" if r["error"] else "FAIL")
            lines.append(f"  {name:<10} {state}" + (f"  {r['error']}" if r["error"] else ""))
            for c in r["checks"]:
                checks.append([label, name, c["operation"], c["name"], c["value"],
                               c["comparison"], c["threshold"], int(c["passed"])])
                if not c["passed"]:
                    lines.append(f"    FAIL {c['operation']} {c['name']} = {c['value']:.6g} "
                                 f"(need {c['comparison']} {c['threshold']:.6g}; {c['claim']})")
            for s in r["series"]:
                series.append([label, level, name, s["metric"], s["level"], s["param"],
                               s["value"], int(s["tracked"])])
        g = reps.get("goldman", {}).get("data", {}).get("gram")
        if g:
            lines.append(f"  signature verdict: ({g['n_plus']}, {g['n_minus']})")
            for i, ev in enumerate(g["eigenvalues"]):
                eig.append([label, g["level"], i, ev])
    rows = _refinement_rows(series)
    if rows:
        lines.append("refinement series:")
        lines.extend(rows)
    if csv_dir is not None:
        csv_dir = Path(csv_dir)
        csv_dir.mkdir(parents=True, exist_ok=True)
        for fname, head, data in (
                ("checks.csv", ["run", "suite", "operation", "check", "value", "comparison",
                                "threshold", "passed"], checks),
                ("series.csv", ["run", "run_level", "suite", "metric", "level", "param", "value",
                                "tracked"], series),
                ("eigenvalues.csv", ["run", "level", "index", "eigenvalue"], eig)):
            with open(csv_dir / fname, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(head)
                w.writerows(data)
    return "\n".join(lines)


def _cmd_mesh_build(cfg, args):
    from .surface import build_bolza_domain, build_mesh, save_mesh
    m = build_mesh(build_bolza_domain(), cfg.level)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"mesh-L{cfg.level}.npz"
    save_mesh(m, path)
    print(f"level {m.level}: {m.n_dof} dofs, {len(m.vertices)} copies, "
          f"{len(m.triangles)} triangles, min angle {m.min_angle():.1f} deg, "
          f"checksum {m.checksum()} -> {path}")
    return EXIT_OK


def _cmd_basis(cfg, args):
    from .differentials import holomorphic_basis, dbar_kernel, save_basis
    from .surface import build_bolza_domain, build_mesh
    m = build_mesh(build_bolza_domain(), cfg.level)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for k in (2, 3):
        rep = dbar_kernel(m, k)
        fields_ = holomorphic_basis(m, k)
        path = out / f"basis-k{k}-L{cfg.level}.json"
        save_basis(fields_, m, path)
        print(f"k={k}: dimension {len(fields_)}, gap ratio {rep.gap_ratio:.4g} -> {path}")
    return EXIT_OK


def _solved_state(cfg):
    from .differentials import DifferentialField, holomorphic_basis
    from .surface import build_bolza_domain, build_mesh
    from .wang import solve_wang
    m = build_mesh(build_bolza_domain(), cfg.level)
    Q = DifferentialField.zeros(m, 3)
    if any(a != 0 for a in cfg.q_amplitude):
        B = holomorphic_basis(m, 3)
        for i, a in zip(cfg.q_index, cfg.q_amplitude):
            Q = Q + B[i] * a
    return solve_wang(m, Q, steps=cfg.continuation_steps, tol=cfg.newton_tol,
                      constant=cfg.pairing_constant)


def _cmd_solve(cfg, args):
    sol = _solved_state(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"solve-L{cfg.level}.json"
    _write_report(path, "solve", {"config": cfg.to_dict(), "report": sol.report})
    r = sol.report
    print(f"level {cfg.level}: {r['newton_steps']} Newton steps, residual "
          f"{r['final_residual']:.3e}, u in [{r['re_u_min']:.6g}, {r['re_u_max']:.6g}] -> {path}")
    return EXIT_OK


def _cmd_holonomy(cfg, args):
    from .connections import assemble_D, holonomy_report
    from .surface import commutator_relation_word
    sol = _solved_state(cfg)
    D = assemble_D(sol)
    dom = sol.mesh.domain
    recs = holonomy_report(D, [dom.relation, commutator_relation_word(dom)])
    expected = 1 + 2 * math.cosh(dom.translation_length)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"holonomy-L{cfg.level}.json"
    _write_report(path, "holonomy", {"records": recs, "fuchsian_trace": expected})
    for r in recs:
        print(f"word {r['word']}: trace {r['trace_re']:.8g}{r['trace_im']:+.3g}i "
              f"det-1 {r['det_residual']:.2e}")
    print(f"Fuchsian generator trace 1 + 2 cosh(l) = {expected:.8g}")
    return EXIT_OK


def _cmd_signature(cfg, args):
    from .differentials import holomorphic_basis
    from .goldman import gram_signature
    from .surface import build_bolza_domain, build_mesh
    m = build_mesh(build_bolza_domain(), cfg.level)
    rep = gram_signature(m, holomorphic_basis(m, 2), holomorphic_basis(m, 3))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"gram-L{cfg.level}.json"
    with open(path, "w") as fh:
        fh.write(_header("gram"))
        fh.write(rep.to_json() + "\n")
    v = rep.verdicts()
    print(f"signature {v['signature']}  eigenvalues {np.array2string(rep.eigenvalues, precision=4)}")
    print(f"symmetry residual {rep.symmetry_residual:.2e}, "
          f"compatibility residual {rep.compatibility_residual:.2e} -> {path}")
    return EXIT_OK if v["signature_ok"] and v["compatibility_ok"] else EXIT_CHECK


def _cmd_verify_all(cfg, args):
    code, _ = verify_all(cfg)
    return code


def _cmd_report(cfg, args):
    dirs = args.runs or []
    if not dirs:
        root = Path(cfg.out)
        dirs = sorted(p for p in root.glob("run-*") if p.is_dir()) if root.is_dir() else []
        if not dirs:
            raise MissingReport(f"no run directories under {root}")
    csv_dir = args.csv or Path(dirs[-1]) / "csv"
    print(summarize(dirs, csv_dir))
    print(f"CSV tables in {csv_dir}")
    return EXIT_OK


COMMANDS = {
    "mesh-build": _cmd_mesh_build,
    "basis": _cmd_basis,
    "solve": _cmd_solve,
    "holonomy": _cmd_holonomy,
    "signature": _cmd_signature,
    "verify-all": _cmd_verify_all,
    "report": _cmd_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigParseError(message)


def build_parser():
    p = _Parser(prog="hitlab", description="Hitchin-component numerics on the Bolza surface.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="key = value config file")
        s.add_argument("--level", type=int, help="mesh level 0..5")
        s.add_argument("--out", help="output directory")
        s.add_argument("--seed", type=int)
        if name == "report":
            s.add_argument("runs", nargs="*", help="run directories (default: all under --out)")
            s.add_argument("--csv", help="directory for CSV tables")
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingReport as exc:
        print(f"missing report: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _numerical_errors() as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
