"""Command line front end: ``table``, ``simulate`` and ``verify``."""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from importlib import resources
from dataclasses import dataclass, field
from datetime import datetime, timezone

from . import __version__
from . import analytic_limits as al
from . import verify as vf
from .analytic_limits import ModelParams
from .gwi_sim import SimConfig, ensemble_to_csv, simulate_ensemble

SUITES = ("default", "acceptance")
OUT_ENV = "GWIAGG_OUT"
DEFAULT_OUT = "gwiagg-out"

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

CHECKS = (
    "theorem21", "theorem21_monotone", "corollary28_i", "corollary28_ii", "corollary28_iii",
    "theorem29", "tail_ratio", "forward_tail", "karamata",
)


def _count(s: str) -> int:
    # sizes may be written 1e5; the value must still be an exact integer
    try:
        return int(s)
    except ValueError:
        v = float(s)
        if not v.is_integer() or abs(v) > 2**53:
            raise ValueError(s) from None
        return int(v)


# key -> parser; the same keys are accepted at top level and per check
_KEYS = {
    "alpha": float, "m_xi": float, "N": _count, "n": _count, "k": _count, "seed": int,
    "replicates": _count, "z_max": float, "bias_allowance": float, "beta": float,
    "quantile_level": float, "horizon": _count, "burn_in": _count, "k_max": _count,
    "Ns": lambda s: [_count(v) for v in s.split()],
    "x_grid": lambda s: [float(v) for v in s.split()],
    "t_points": lambda s: [float(v) for v in s.split()],
}
_TOP_ONLY = {"checks", "out"}

DEFAULTS = {
    "alpha": 0.5, "m_xi": 0.5, "N": 100_000, "n": 100, "k": 1, "seed": 20240611,
    "replicates": 200, "z_max": 4.0, "bias_allowance": 0.02, "beta": 2.0, "quantile_level": 0.999,
    "horizon": 2, "k_max": 3, "Ns": [1000, 10_000, 100_000], "x_grid": [1e2, 1e3, 1e4],
    "t_points": [1.0],
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)  # labels, "name" or "name@tag"
    overrides: dict = field(default_factory=dict)  # label -> {key: value}
    out: str | None = None

    def get(self, key, label: str | None = None):
        if label is not None and key in self.overrides.get(label, {}):
            return self.overrides[label][key]
        if key in self.values:
            return self.values[key]
        return DEFAULTS.get(key)

    def params(self, label: str | None = None) -> ModelParams:
        return ModelParams(m_xi=self.get("m_xi", label), alpha=self.get("alpha", label))


def _check_base(label: str) -> str:
    return label.split("@", 1)[0]


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse key = value lines; every problem is reported with its line number."""
    cfg = RunConfig()
    errors = []
    pending = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"{source}:{lineno}: expected key = value")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            errors.append(f"{source}:{lineno}: empty key or value")
            continue
        if key == "checks":
            labels = [s.strip() for s in value.split(",") if s.strip()]
            bad = [lab for lab in labels if _check_base(lab) not in CHECKS]
            if bad:
                errors.append(f"{source}:{lineno}: unknown check(s) {', '.join(bad)}")
                continue
            cfg.checks = labels
            continue
        if key == "out":
            cfg.out = value
            continue
        label, _, name = key.rpartition(".")
        if name not in _KEYS:
            errors.append(f"{source}:{lineno}: unknown key {name!r}")
            continue
        try:
            parsed = _KEYS[name](value)
        except ValueError:
            errors.append(f"{source}:{lineno}: bad value {value!r} for {name}")
            continue
        if label:
            if _check_base(label) not in CHECKS:
                errors.append(f"{source}:{lineno}: unknown check {label!r}")
                continue
            pending.append((lineno, label))
            cfg.overrides.setdefault(label, {})[name] = parsed
        else:
            cfg.values[name] = parsed
    for lineno, label in pending:
        if label not in cfg.checks:
            errors.append(f"{source}:{lineno}: override for check {label!r} not in the check list")
    for label in [None] + cfg.checks:
        try:
            cfg.params(label)
        except ValueError as exc:
            errors.append(f"{source}: {label or 'top level'}: {exc}")
    if errors:
        raise ConfigError("\n".join(errors))
    return cfg


def run_check(label: str, cfg: RunConfig, jobs: int) -> vf.VerificationReport:
    name = _check_base(label)
    g = lambda key: cfg.get(key, label)  # noqa: E731
    p = cfg.params(label)
    common = {"seed": g("seed"), "jobs": jobs}
    stat = {"replicates": g("replicates"), "z_max": g("z_max"), "bias_allowance": g("bias_allowance")}
    if name == "theorem21":
        return vf.check_theorem21(p, g("k"), g("N"), **common, **stat)
    if name == "theorem21_monotone":
        return vf.check_theorem21_monotone(p, g("k"), g("Ns"), **common, **stat)
    if name.startswith("corollary28_"):
        return vf.check_corollary28(p, g("k"), g("N"), name.split("_")[1], **common, **stat)
    if name == "theorem29":
        reps = cfg.overrides.get(label, {}).get("replicates", cfg.values.get("replicates"))
        N = cfg.overrides.get(label, {}).get("N")
        return vf.check_theorem29(p, g("n"), g("t_points"), replicates=reps, N=N, z_max=g("z_max"),
                                  bias_allowance=g("bias_allowance"), **common)
    if name == "tail_ratio":
        return vf.check_tail_ratio(p, g("k"), g("N"), g("quantile_level"), **common)
    if name == "forward_tail":
        return vf.check_forward_tail(p, g("k"), g("N"), quantile_level=g("quantile_level"), **common)
    if name == "karamata":
        return vf.check_karamata(p, g("beta"), g("x_grid"))
    raise ConfigError(f"unknown check {name!r}")


def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def table_rows(params: ModelParams, k_max: int) -> tuple[list, list]:
    a = params.alpha
    head = [
        ("alpha", a), ("m_xi", params.m_xi), ("C_alpha", al.c_alpha(a)), ("C", al.constant_C()),
        ("b_alpha", "n/a" if a == 1.0 else al.b_alpha(params)),
        ("tail_constant", al.stationary_tail_constant(params)),
    ]
    rows = []
    for k in range(k_max + 1):
        V = al.basis_vectors(k, params).vectors
        basis = " ".join("(" + ",".join(f"{x:.6f}" for x in v) + ")" for v in V)
        rows.append((k, al.sum_tail_ratio(k, params), al.levy_mass_above(k, params), basis))
    return head, rows


def cmd_table(params: ModelParams, k_max: int, fmt: str = "text") -> str:
    head, rows = table_rows(params, k_max)
    if fmt == "json":
        doc = dict(head)
        doc["horizons"] = [{"k": k, "sum_tail_ratio": s, "levy_mass_above": m, "basis": b} for k, s, m, b in rows]
        return json.dumps(doc, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        buf.write("k,sum_tail_ratio,levy_mass_above,basis," + ",".join(h[0] for h in head) + "\n")
        consts = ",".join(_fmt(v) for _, v in head)
        for k, s, m, b in rows:
            # vectors are ';'-separated so the row stays comma-clean
            buf.write(f"{k},{s:.6f},{m:.6f},{b.replace(',', ';')},{consts}\n")
        return buf.getvalue()
    width = max(len(h[0]) for h in head)
    out = [f"{name.ljust(width)}  {_fmt(v)}" for name, v in head]
    out.append("")
    cols = [("k", "sum_tail_ratio", "levy_mass_above", "basis")]
    cols += [(str(k), f"{s:.6f}", f"{m:.6f}", b) for k, s, m, b in rows]
    w = [max(len(r[i]) for r in cols) for i in range(4)]
    out += ["  ".join(c.ljust(wi) for c, wi in zip(r, w)).rstrip() for r in cols]
    return "\n".join(out) + "\n"


def _out_dir(args, cfg: RunConfig | None) -> str:
    return args.out or (cfg.out if cfg else None) or os.environ.get(OUT_ENV) or DEFAULT_OUT


def bundled_suite(name: str) -> str:
    """Text of a suite shipped with the package ("default" or "acceptance")."""
    return resources.files("gwiagg").joinpath("suites", f"{name}.cfg").read_text(encoding="utf-8")


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        if not os.path.exists(path) and path in SUITES:
            text = bundled_suite(path)
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, path)


def _report_text(rep: vf.VerificationReport) -> str:
    d = rep.as_dict()
    lines = [f"check   {rep.check}", f"passed  {rep.passed}", f"params  {json.dumps(d['params'])}",
             f"sizes   {json.dumps(d['sizes'])}", f"seed    {rep.seed}", ""]
    if rep.points:
        keys = [k for k in rep.points[0] if k != "values"]
        rows = [keys] + [[_cell(p.get(k)) for k in keys] for p in rep.points]
        w = [max(len(r[i]) for r in rows) for i in range(len(keys))]
        lines += ["  ".join(c.ljust(wi) for c, wi in zip(r, w)).rstrip() for r in rows]
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "(" + ",".join(_cell(x) for x in v) + ")"
    return str(v)


def _report_csv(rep: vf.VerificationReport) -> str:
    pts = [p for p in rep.points if "theta" in p]
    if not pts:
        return _report_text(rep)
    dim = len(pts[0]["theta"])
    buf = io.StringIO()
    extra = ["t"] if "t" in pts[0] else []
    buf.write(",".join(extra + [f"theta{i}" for i in range(dim)] + ["ecf_re", "ecf_im", "cf_re", "cf_im", "z"]) + "\n")
    for p in pts:
        cells = ([repr(p["t"])] if extra else []) + [repr(t) for t in p["theta"]]
        cells += [repr(p[k]) for k in ("ecf_re", "ecf_im", "cf_re", "cf_im")]
        cells.append("" if p["z"] is None else repr(p["z"]))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def cmd_verify(cfg: RunConfig, out_dir: str, jobs: int, fmt: str = "json", stdout=None) -> int:
    stdout = stdout or sys.stdout
    if not cfg.checks:
        stdout.write("no checks requested\n")
        return EXIT_OK
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        sys.stderr.write(f"error: cannot create {out_dir}: {exc}\n")
        return EXIT_IO
    reports, meta = [], {"version": __version__, "jobs": jobs, "started": _now(), "checks": {}}
    for label in cfg.checks:
        rep = run_check(label, cfg, jobs)
        reports.append(rep)
        ext = {"json": "json", "text": "txt", "csv": "csv"}[fmt]
        body = {"json": rep.to_json, "text": lambda: _report_text(rep), "csv": lambda: _report_csv(rep)}[fmt]()
        try:
            with open(os.path.join(out_dir, f"{label.replace('@', '-')}.{ext}"), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(body)
        except OSError as exc:
            sys.stderr.write(f"error: cannot write report: {exc}\n")
            return EXIT_IO
        meta["checks"][label] = {"wall_time_s": round(rep.wall_time, 3), "passed": bool(rep.passed)}
        stdout.write(f"{label}: {'PASS' if rep.passed else 'FAIL'} ({rep.wall_time:.1f}s)\n")
        stdout.flush()
    meta["finished"] = _now()
    summary = vf.format_table(reports, cfg.checks)
    try:
        with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(summary)
        with open(os.path.join(out_dir, "run_metadata.json"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(meta, indent=2) + "\n")
    except OSError as exc:
        sys.stderr.write(f"error: cannot write summary: {exc}\n")
        return EXIT_IO
    stdout.write(summary)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def cmd_simulate(cfg: RunConfig, out_dir: str, jobs: int, fmt: str = "csv") -> int:
    params = cfg.params()
    sim = SimConfig(n_copies=cfg.get("N"), horizon=cfg.get("horizon"), seed=cfg.get("seed"),
                    burn_in=cfg.values.get("burn_in"))
    ens = simulate_ensemble(params, sim, jobs=jobs)
    try:
        os.makedirs(out_dir, exist_ok=True)
        if fmt == "json":
            path = os.path.join(out_dir, "ensemble.json")
            doc = {"alpha": params.alpha, "m_xi": params.m_xi, "seed": sim.seed,
                   "burn_in": sim.resolved_burn_in(params),
                   "rows": [[int(v) for v in row] for row in ens.values]}
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(json.dumps(doc) + "\n")
        else:
            path = os.path.join(out_dir, "ensemble.csv")
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                ensemble_to_csv(ens, fh)
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_IO
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gwiagg", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("table", "simulate", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value config file, or a bundled suite name: default, acceptance")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--jobs", type=int, default=1, help="worker processes; never changes results")
        p.add_argument("--format", choices=("csv", "json", "text"))
        if name == "verify":
            p.add_argument("--checks", help="comma-separated check list, replaces the config list")
        if name == "table":
            p.add_argument("--alpha", type=float)
            p.add_argument("--m-xi", type=float, dest="m_xi")
            p.add_argument("--k-max", type=int, dest="k_max")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        sys.stderr.write("error: --jobs must be at least 1\n")
        return EXIT_USAGE
    try:
        cfg = _load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit value")
            cfg.values["seed"] = args.seed
        if args.command == "table":
            for key in ("alpha", "m_xi", "k_max"):
                if getattr(args, key) is not None:
                    cfg.values[key] = getattr(args, key)
            params = cfg.params()
            sys.stdout.write(cmd_table(params, cfg.get("k_max"), args.format or "text"))
            return EXIT_OK
        if args.command == "simulate":
            return cmd_simulate(cfg, _out_dir(args, cfg), args.jobs, args.format or "csv")
        if args.checks is not None:
            labels = [s.strip() for s in args.checks.split(",") if s.strip()]
            bad = [lab for lab in labels if _check_base(lab) not in CHECKS]
            if bad:
                raise ConfigError(f"unknown check(s) {', '.join(bad)}")
            cfg.checks = labels
        return cmd_verify(cfg, _out_dir(args, cfg), args.jobs, args.format or "json")
    except ConfigError as exc:
        sys.stderr.write(f"config error:\n{exc}\n")
        return EXIT_USAGE
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
