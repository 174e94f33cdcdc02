"""Command line driver: ``mvf <command> --config <path> [--seed N] [--out DIR]``.

Commands are ``lemma-check``, ``consistency``, ``solve``, ``game`` and
``study``; ``mvf catalog`` prints the built-in solutions. Every run writes
``<out>/<experiment_id>.csv`` with one row per checked metric and a JSON
summary next to it. The exit code is 0 when every row passes, 1 when some
row fails or the run errors, and 2 for configuration problems.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from . import catalog, linalg
from .errors import MvfError
from .games import GameSpec, greedy_pair, greedy_strategy, simulate_control, simulate_two_player, simulate_walk
from .operators import OperatorClass, consistency_check, family_gap
from .quadrature import make_ball_rule, make_sphere_rule
from .solver import ProblemSpec, convergence_study, march, matched_spacing

__all__ = ["RunConfig", "ConfigError", "ReportRow", "run", "run_config", "list_catalog", "main"]

COMMANDS = ("lemma-check", "consistency", "solve", "game", "study")
CSV_COLUMNS = ["experiment_id", "command", "n", "epsilon", "h", "family_size", "metric", "value", "tolerance", "pass"]

# config field -> TOML table (None = top level)
_SECTIONS = {
    "command": None,
    "experiment_id": None,
    "seed": None,
    "out": None,
    "solution": "problem",
    "n": "problem",
    "variant": "problem",
    "controls": None,
    "eps": "schedule",
    "refinements": "schedule",
    "final_time": "schedule",
    "lower": "grid",
    "upper": "grid",
    "h": "grid",
    "matched_k": "grid",
    "steps": "grid",
    "points": "probe",
    "t": "probe",
    "count": "game",
    "start": "game",
    "t_start": "game",
    "samples": "lemma",
    "tolerances": None,
}


class ConfigError(MvfError):
    """The run configuration is malformed or references unknown names."""


@dataclass
class RunConfig:
    command: str
    experiment_id: str = "run"
    seed: int = 0
    out: str = "mvf-out"
    solution: str | None = None
    n: int | None = None
    variant: str = "point"
    controls: dict = field(default_factory=dict)
    eps: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    refinements: list = field(default_factory=lambda: [1])
    final_time: float | None = None
    lower: float = -0.5
    upper: float = 0.5
    h: float | None = None
    matched_k: int = 3
    steps: int = 10
    points: list | None = None
    t: float = 1.0
    count: int = 10000
    start: list | None = None
    t_start: float | None = None
    samples: int = 50
    tolerances: dict = field(default_factory=dict)

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        if self.command != "lemma-check":
            if self.solution is None:
                raise ConfigError("[problem] solution is required")
            if self.solution not in catalog.CATALOG:
                raise ConfigError(f"unknown catalog key {self.solution!r}")
            entry = catalog.CATALOG[self.solution]
            n = entry.default_n if self.n is None else self.n
            if n not in entry.dims:
                raise ConfigError(f"{self.solution} is defined for n in {entry.dims}")
        if not self.eps or any(not e > 0 for e in self.eps):
            raise ConfigError("eps must be a non-empty list of positive numbers")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        flat = {}
        known_tables = {s for s in _SECTIONS.values() if s} | {"controls", "tolerances"}
        for key, value in data.items():
            if isinstance(value, dict) and key in known_tables and key not in ("controls", "tolerances"):
                for k, v in value.items():
                    if _SECTIONS.get(k) != key:
                        raise ConfigError(f"unknown key {k!r} in [{key}]")
                    flat[k] = v
            elif key in _SECTIONS and _SECTIONS[key] is None:
                flat[key] = value
            else:
                raise ConfigError(f"unknown key {key!r}")
        if "command" not in flat:
            raise ConfigError("missing 'command'")
        try:
            return cls(**flat).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out: dict = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            sec = _SECTIONS[f.name]
            (out if sec is None else out.setdefault(sec, {}))[f.name] = v
        return out

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_toml(cls, text: str) -> "RunConfig":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse config: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_toml(text)


@dataclass
class ReportRow:
    experiment_id: str
    command: str
    n: int | None
    epsilon: float | None
    h: float | None
    family_size: int | None
    metric: str
    value: float
    tolerance: float
    passed: bool

    def as_list(self):
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return [fmt(v) for v in astuple(self)]


def _row(cfg, n, eps, h, fam, metric, value, tol, upper=True):
    """``upper`` metrics pass when ``|value| <= tol``, the others when ``value >= tol``."""
    value, tol = float(value), float(tol)
    ok = abs(value) <= tol if upper else value >= tol
    return ReportRow(cfg.experiment_id, cfg.command, n, eps, h, fam, metric, value, tol, bool(ok))


def _tol(cfg, name, default):
    return float(cfg.tolerances.get(name, default))


def _entry_and_op(cfg, variant=None):
    entry = catalog.get(cfg.solution)
    n = entry.default_n if cfg.n is None else cfg.n
    op = entry.operator(n, variant or cfg.variant, **cfg.controls)
    return entry, n, op


def _default_points(entry, n):
    if entry.cls == "PLaplacian":
        e = np.eye(n)
        return np.vstack([0.5 * e, -0.5 * e, [0.7] + [0.0] * (n - 1)])[:5]
    base = np.array([[0.0] * 3, [0.1, 0.1, 0.1], [-0.2, 0.05, 0.0], [0.0, 0.3, -0.1], [0.15, -0.25, 0.2]])
    return base[:, :n]


def _lemma_check(cfg):
    rng = np.random.default_rng(cfg.seed)
    rows = []
    worst_rel = worst_feas = worst_cap = 0.0
    bind = True
    for _ in range(cfg.samples):
        n = int(rng.integers(2, 4))
        Q = np.linalg.qr(rng.normal(size=(n, n)))[0]
        M = Q @ np.diag(rng.uniform(0.1, 10, n)) @ Q.T
        res = linalg.inf_trace_det1(M)
        brute = _brute_det1(M, rng)
        worst_rel = max(worst_rel, abs(res.value - brute) / brute)
        A = res.optimizer
        worst_feas = max(worst_feas, abs(np.linalg.det(A) - 1), abs(np.trace(A.T @ M @ A) - res.value))
        th0 = linalg.theta0(M)
        worst_cap = max(worst_cap, abs(linalg.inf_trace_det1_capped(M, 1.01 * th0).value - res.value))
        bind &= linalg.inf_trace_det1_capped(M, 0.5 * th0).value > res.value
    rows.append(_row(cfg, None, None, None, None, "det1_infimum_rel_error", worst_rel, _tol(cfg, "det1_rel", 0.01)))
    rows.append(_row(cfg, None, None, None, None, "optimizer_feasibility", worst_feas, _tol(cfg, "feasibility", 1e-10)))
    rows.append(_row(cfg, None, None, None, None, "cap_inactive_error", worst_cap, _tol(cfg, "cap", 1e-8)))
    rows.append(_row(cfg, None, None, None, None, "cap_binding_detected", float(bind), 1.0, upper=False))
    worst_q = 0.0
    for _ in range(cfg.samples):
        n = int(rng.integers(1, 4))
        B = rng.normal(size=(n, n))
        M = B + B.T
        for rule, k in ((make_ball_rule(n), n + 2), (make_sphere_rule(n), n)):
            got = k * np.einsum("q,qi,ij,qj->", rule.weights, rule.nodes, M, rule.nodes)
            worst_q = max(worst_q, abs(got - np.trace(M)))
    rows.append(_row(cfg, None, None, None, None, "quadrature_trace_error", worst_q, _tol(cfg, "quadrature", 1e-10)))
    return rows


def _brute_det1(M, rng, rotations=400, stretches=400):
    """Sampled minimum of trace(A M A) over A = R diag(s) R^t with prod(s) = 1."""
    n = len(M)
    lam, V = np.linalg.eigh(M)
    best = math.inf
    # random frames around the eigenframe plus log-uniform stretches
    for _ in range(rotations // 40):
        R = np.linalg.qr(rng.normal(size=(n, n)))[0]
        frames = [V, R]
        for F in frames:
            logs = rng.uniform(-3, 3, size=(stretches, n))
            logs -= logs.mean(1, keepdims=True)
            s = np.exp(logs)
            A = np.einsum("ij,kj,lj->kil", F, s, F)
            best = min(best, float(np.einsum("kji,jl,kli->k", A, M, A).min()))
    return best


def _consistency(cfg):
    entry, n, op = _entry_and_op(cfg)
    pts = np.asarray(cfg.points, dtype=float) if cfg.points is not None else _default_points(entry, n)
    eps = sorted(cfg.eps, reverse=True)
    rep = consistency_check(op, entry.u, pts, eps, cfg.t)
    rows = []
    for i, e in enumerate(eps):
        fam = len(op.family(e))
        if entry.quadratic:
            gap = max(
                family_gap(
                    op,
                    entry.hessian(p[None], cfg.t)[0],
                    float(entry.u_t(p[None], cfg.t)[0]),
                    e,
                    entry.gradient(p[None], cfg.t)[0],
                )
                for p in pts
            )
            tol = _tol(cfg, "residual", 1e-6) + gap
        else:
            tol = _tol(cfg, "residual", math.inf)
        rows.append(_row(cfg, n, e, None, fam, "residual", rep.residuals[i], tol))
    if not entry.quadratic and len(eps) > 1:
        rows.append(_row(cfg, n, None, None, None, "slope", rep.slope, _tol(cfg, "slope", 2.5), upper=False))
    return rows


def _grid_h(cfg, n, eps):
    return cfg.h if cfg.h is not None else matched_spacing(n, eps, cfg.matched_k)


def _problem(cfg, entry, n, op, eps):
    h = _grid_h(cfg, n, eps)
    return ProblemSpec(
        op,
        np.full(n, cfg.lower),
        np.full(n, cfg.upper),
        h,
        eps,
        entry.u,
        t0=0.0,
        steps=cfg.steps,
        exact=entry.u,
        history=math.inf,
    )


def _gap_indicator(entry, op, eps, t):
    if not entry.quadratic:
        return 1.0
    x = np.zeros((1, op.n))
    return float(family_gap(op, entry.hessian(x, t)[0], float(entry.u_t(x, t)[0]), eps) > 1e-12)


def _solve(cfg, out_dir):
    entry, n, op = _entry_and_op(cfg, "point")
    rows = []
    for eps in cfg.eps:
        spec = _problem(cfg, entry, n, op, eps)
        rep = march(spec)
        ind = _gap_indicator(entry, op, eps, 0.0)
        tol = _tol(cfg, "sup_error_factor", 5.0) * (spec.h**2 + eps**2 * ind)
        rows.append(_row(cfg, n, eps, spec.h, len(rep.family), "sup_error", rep.sup_error, tol))
        _write_error_table(out_dir / f"{cfg.experiment_id}_eps{eps:g}_errors.csv", rep.error_table)
    return rows


def _write_error_table(path, table):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "sup", "mean"])
        for row in zip(table["time"], table["sup"], table["mean"]):
            w.writerow([repr(float(v)) for v in row])


def _game(cfg):
    entry, n, op = _entry_and_op(cfg, "point")
    eps = cfg.eps[0]
    lower, upper = np.full(n, cfg.lower), np.full(n, cfg.upper)
    start = np.asarray(cfg.start if cfg.start is not None else np.zeros(n), dtype=float)
    rows = []
    if op.cls == OperatorClass.HEAT:
        t_start = cfg.t_start if cfg.t_start is not None else 0.1
        spec = GameSpec.walk(np.eye(n), 1.0, lower, upper, eps, entry.u)
        est = simulate_walk(spec, start, t_start, cfg.count, cfg.seed)
        ref = float(entry.u(start[None], t_start)[0])
        rows.append(_row(cfg, n, eps, None, 1, "walk_minus_exact", est.mean - ref, 3 * est.stderr))
        rows.append(_row(cfg, n, eps, None, 1, "walk_stderr", est.stderr, math.inf))
        return rows
    spec = _problem(cfg, entry, n, op, eps)
    rep = march(spec)
    gf = rep.solution
    t_start = cfg.t_start if cfg.t_start is not None else gf.t0 + cfg.steps * gf.dt
    marched = float(gf(start[None], t_start)[0])
    game = GameSpec(op, rep.family, lower, upper, eps, entry.u)
    if op.cls == OperatorClass.SUPINF:
        s1, s2 = greedy_pair(rep)
        est = simulate_two_player(game, start, t_start, cfg.count, cfg.seed, s1, s2)
    else:
        est = simulate_control(game, start, t_start, cfg.count, cfg.seed, greedy_strategy(rep))
    tol = 3 * est.stderr + 2 * spec.h**2
    rows.append(_row(cfg, n, eps, spec.h, len(rep.family), "greedy_minus_marched", est.mean - marched, tol))
    return rows


def _study(cfg):
    entry, n, op = _entry_and_op(cfg, "point")
    eps_list = sorted(cfg.eps, reverse=True)
    spec = _problem(cfg, entry, n, op, eps_list[0])
    h_of_eps = None if cfg.h is not None else (lambda e: matched_spacing(n, e, cfg.matched_k))
    table = convergence_study(spec, entry.u, eps_list, cfg.refinements, h_of_eps, cfg.final_time)
    rows = []
    for r in table["rows"]:
        rows.append(_row(cfg, n, r["eps"], r["h"], r["family_size"], f"sup_error_r{r['refinement']}", r["sup"], math.inf))
    first = [r for r in table["rows"] if r["refinement"] == cfg.refinements[0]]
    for a, b in zip(first, first[1:]):
        if a["sup"] > 0 and b["sup"] > 0:
            order = math.log(a["sup"] / b["sup"]) / math.log(a["eps"] / b["eps"])
            rows.append(_row(cfg, n, b["eps"], b["h"], b["family_size"], "observed_order", order, _tol(cfg, "order", 1.9), upper=False))
    if len(cfg.refinements) > 1:
        rows.append(_row(cfg, n, None, None, None, "monotone_refinement", float(table["monotone_refinement"]), 1.0, upper=False))
    return rows


def run_config(cfg: RunConfig) -> tuple[int, list]:
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.command == "lemma-check":
        rows = _lemma_check(cfg)
    elif cfg.command == "consistency":
        rows = _consistency(cfg)
    elif cfg.command == "solve":
        rows = _solve(cfg, out_dir)
    elif cfg.command == "game":
        rows = _game(cfg)
    else:
        rows = _study(cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.as_list())
    (out_dir / f"{cfg.experiment_id}.csv").write_text(buf.getvalue())
    summary = dict(
        experiment_id=cfg.experiment_id,
        command=cfg.command,
        rows=len(rows),
        failed=[r.metric for r in rows if not r.passed],
        all_pass=all(r.passed for r in rows),
        config=cfg.to_dict(),
    )
    (out_dir / f"{cfg.experiment_id}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return (0 if summary["all_pass"] else 1), rows


def run(config_path, seed: int | None = None, out: str | None = None, command: str | None = None) -> int:
    """Run a config file; returns the process exit code."""
    try:
        cfg = RunConfig.load(config_path)
        if command is not None and command != cfg.command:
            raise ConfigError(f"command {command!r} does not match config command {cfg.command!r}")
        if seed is not None:
            cfg.seed = seed
        if out is not None:
            cfg.out = out
    except (ConfigError, MvfError) as exc:
        print(f"mvf: config error: {exc}", file=sys.stderr)
        return 2
    try:
        code, _ = run_config(cfg)
    except Exception as exc:  # report location and fail
        print(f"mvf: {cfg.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return code


def list_catalog() -> str:
    return catalog.list_catalog()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mvf", description="Mean value formula experiments.")
    parser.add_argument("command", choices=COMMANDS + ("catalog",))
    parser.add_argument("--config", help="TOML run configuration")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")
    args = parser.parse_args(argv)
    if args.command == "catalog":
        sys.stdout.write(list_catalog())
        return 0
    if not args.config:
        parser.print_usage(sys.stderr)
        print("mvf: --config is required", file=sys.stderr)
        return 2
    return run(args.config, args.seed, args.out, args.command)


if __name__ == "__main__":
    sys.exit(main())
