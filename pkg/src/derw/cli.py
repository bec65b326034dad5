"""Batch front-end: ``derw <command> --config CONFIG.json [--threads K] [--out DIR]``.

Exit codes: 0 = informational command or all checks pass, 1 = a verification
failed, 2 = config/usage error. Result bodies (CSV/JSON/.dat) depend only on
the config; timing and environment go to ``metadata.json``.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import time
from pathlib import Path

import jsonschema

from . import __version__, analysis, model, sequences, simulator
from .errors import BudgetError, DomainError, RegimeError

COMMANDS = (
    "classify",
    "sequences",
    "simulate",
    "verify-fclt",
    "verify-critical",
    "verify-slln",
    "verify-strong",
    "verify-invariants",
)

DEFAULT_TOLERANCES = {
    "ks_p": 0.01,
    "se_multiplier": 3.0,
    "asymptotic_band": 0.05,
    "gate_fraction": 0.05,
    "min_corr": 0.95,
    "condition_a_band": 0.05,
}

_SPEC_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"kind": {"const": "constant"}, "c": {"type": "number", "minimum": 0, "maximum": 1}},
            "required": ["kind", "c"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "limit_power"},
                "limit": {"type": "number", "minimum": 0, "maximum": 1},
                "coeff": {"type": "number"},
                "exponent": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["kind", "limit", "coeff", "exponent"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "table"},
                "values": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
                "tail": {"type": "number", "minimum": 0, "maximum": 1},
            },
            "required": ["kind", "values", "tail"],
            "additionalProperties": False,
        },
    ]
}

_POS_INT = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "p": {"type": "number", "minimum": 0, "maximum": 1},
        "q": {"type": "number", "minimum": 0, "maximum": 1},
        "alpha": _SPEC_SCHEMA,
        "beta": _SPEC_SCHEMA,
        "n": _POS_INT,
        "N": {"type": "integer", "minimum": 1, "maximum": 2**40},
        "N_big": _POS_INT,
        "paths": _POS_INT,
        "t_grid": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "grid": {"type": "array", "items": _POS_INT},
        "rows": {"type": "array", "items": _POS_INT},
        "checkpoints": {"type": "array", "items": _POS_INT, "minItems": 1},
        "master_seed": {"type": "integer", "minimum": 0},
        "seeds": {"type": "integer", "minimum": 1, "maximum": 10},
        "min_passes": _POS_INT,
        "out": {"type": "string"},
        "threads": _POS_INT,
        "diagnostics": {"type": "boolean"},
        "tail_horizon": _POS_INT,
        "tolerances": {
            "type": "object",
            "properties": {k: {"type": "number", "minimum": 0} for k in DEFAULT_TOLERANCES},
            "additionalProperties": False,
        },
    },
    "required": ["p", "alpha", "beta"],
    "additionalProperties": False,
}

_REQUIRED = {
    "classify": (),
    "sequences": ("N",),
    "simulate": ("N", "paths", "master_seed"),
    "verify-fclt": ("n", "paths", "t_grid", "master_seed"),
    "verify-critical": ("n", "paths", "t_grid", "master_seed"),
    "verify-slln": ("N", "master_seed"),
    "verify-strong": ("n", "N_big", "paths", "master_seed"),
    "verify-invariants": ("N", "paths", "master_seed"),
}


PLOT_FILES = ("statistic.dat", "oracle.dat")


class ConfigError(Exception):
    pass


def _line_of(text, path):
    """Best-effort line number of the JSON key at the end of ``path``."""
    keys = [k for k in path if isinstance(k, str)]
    if not keys:
        return 1
    pos = 0
    for key in keys:
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if m is None:
            break
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def load_config(path, command):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from None
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(k) for k in e.absolute_path) or "<root>"
        raise ConfigError(f"{path}:{_line_of(text, e.absolute_path)}: {where}: {e.message}")
    missing = [k for k in _REQUIRED[command] if k not in cfg]
    if missing:
        raise ConfigError(f"{path}:1: command {command!r} needs {', '.join(missing)}")
    try:
        params = model.ModelParams.from_dict(cfg)
    except ValueError as e:
        raise ConfigError(f"{path}:1: {e}") from None
    return cfg, params


class _Outputs:
    """Writes files under ``root`` and removes them all if the run fails."""

    def __init__(self, root):
        self.root = Path(root)
        self.written = []
        self._created_root = not self.root.exists()

    def path(self, name):
        self.root.mkdir(parents=True, exist_ok=True)
        p = self.root / name
        self.written.append(p)
        return p

    def text(self, name, body):
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(body)

    def json(self, name, obj):
        self.text(name, json.dumps(analysis._plain(obj), indent=2, sort_keys=True) + "\n")

    def discard(self):
        for p in self.written:
            try:
                p.unlink()
            except FileNotFoundError:
                pass
        if self._created_root:
            try:
                self.root.rmdir()
            except OSError:
                pass


def emit_plot_data(report, grid, out_dir):
    """Two-column (t value) files for the statistic and the limit oracle.

    Rows of ``report`` are matched to ``grid`` by their ``t`` field. The
    oracle file carries the limit-process value where a row has one
    (``asymptotic``), the row's oracle otherwise. Returns the written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_t = {float(r["t"]): r for r in report.rows}
    written = []
    for fname, what in zip(PLOT_FILES, ("statistic", "oracle")):
        lines = [f"# t {what}"]
        for t in grid:
            r = by_t.get(float(t))
            if r is None:
                continue
            v = r.get("asymptotic", r["oracle"]) if what == "oracle" else r["statistic"]
            lines.append(f"{float(t)!r} {float(v)!r}")
        p = out_dir / fname
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        written.append(p)
    return written


def _tol(cfg, key):
    return float(cfg.get("tolerances", {}).get(key, DEFAULT_TOLERANCES[key]))


def _seeds(cfg):
    k = int(cfg.get("seeds", 3))
    return [int(cfg["master_seed"]) + i for i in range(k)]


def _cmd_classify(cfg, params, out, threads):
    regime = model.classify(params)
    out.json("regime.json", {"params": params.to_dict(), "regime": regime.to_dict()})
    const = "" if regime.constant is None else f", constant {regime.constant:.6f}"
    print(f"regime {regime.label()}{const}")
    return None


def _cmd_sequences(cfg, params, out, threads):
    N = int(cfg["N"])
    try:
        tables = sequences.build_tables(params, N)
    except DomainError as e:
        raise ConfigError(str(e)) from None
    rows = cfg.get("rows")
    if rows and max(rows) > N:
        raise ConfigError(f"rows must not exceed N={N}")
    with open(out.path("sequences.csv"), "w", encoding="utf-8", newline="\n") as fh:
        sequences.write_tables_csv(tables, fh, rows)
    print(f"wrote {N if not rows else len(rows)} rows to {out.root / 'sequences.csv'}")
    return None


def _cmd_simulate(cfg, params, out, threads):
    N = int(cfg["N"])
    ck = cfg.get("checkpoints", [N])
    if max(ck) > N:
        raise ConfigError(f"checkpoints must not exceed N={N}")
    ens = simulator.simulate_ensemble(
        params, N, int(cfg["paths"]), int(cfg["master_seed"]), ck,
        diagnostics=bool(cfg.get("diagnostics", False)), threads=threads,
    )
    with open(out.path("samples.csv"), "w", encoding="utf-8", newline="\n") as fh:
        simulator.write_samples_csv(ens, fh)
    body = ens.metadata()
    if ens.profile is not None:
        body["max_bound_excess"] = float(ens.bound_excess.max())
    out.json("ensemble.json", body)
    return None


def _require(params, kinds):
    regime = model.classify(params)
    if regime.kind not in kinds:
        raise ConfigError(f"regime precondition: needs {' or '.join(kinds)}, got {regime.label()}")
    return regime


def _cmd_fclt(kind):
    def run(cfg, params, out, threads):
        _require(params, (kind,))
        t_grid = [float(t) for t in cfg["t_grid"]]

        def one(seed):
            return analysis.fclt_verify(
                params, int(cfg["n"]), int(cfg["paths"]), t_grid, seed, threads=threads,
                ks_threshold=_tol(cfg, "ks_p"), se_mult=_tol(cfg, "se_multiplier"),
                asymptotic_band=_tol(cfg, "asymptotic_band"),
            )

        return analysis.over_seeds(one, _seeds(cfg), int(cfg.get("min_passes", 1))), t_grid

    return run


def _cmd_slln(cfg, params, out, threads):
    a, p = params.alpha_limit, params.p
    if not p * a < 1.0:
        raise ConfigError(f"regime precondition: verify-slln needs p*alpha < 1 (p={p}, alpha={a})")
    N = int(cfg["N"])
    tables = sequences.build_tables(params, N)
    grid = cfg.get("grid", [])
    rep = analysis.slln_check(params, tables, N, int(cfg["master_seed"]), grid)
    return rep, [r["t"] for r in rep.rows]


def _cmd_strong(cfg, params, out, threads):
    _require(params, ("StrongElephant",))
    n, N_big = int(cfg["n"]), int(cfg["N_big"])
    if N_big < 100 * n:
        raise ConfigError(f"N_big must be >= 100*n ({100 * n})")

    def one(seed):
        return analysis.strong_elephant_test(
            params, n, N_big, int(cfg["paths"]), seed, threads=threads,
            ks_threshold=_tol(cfg, "ks_p"), gate=_tol(cfg, "gate_fraction"),
            min_corr=_tol(cfg, "min_corr"), tail_horizon=int(cfg.get("tail_horizon", 10**7)),
        )

    return analysis.over_seeds(one, _seeds(cfg), int(cfg.get("min_passes", 2))), [n]


def _cmd_invariants(cfg, params, out, threads):
    N = int(cfg["N"])
    ck = cfg.get("checkpoints")
    if ck and max(ck) > N:
        raise ConfigError(f"checkpoints must not exceed N={N}")
    try:
        rep = analysis.invariants_check(
            params, N, int(cfg["paths"]), int(cfg["master_seed"]), ck,
            se_mult=max(4.0, _tol(cfg, "se_multiplier")), threads=threads,
        )
    except DomainError as e:
        raise ConfigError(str(e)) from None
    return rep, []


_HANDLERS = {
    "classify": _cmd_classify,
    "sequences": _cmd_sequences,
    "simulate": _cmd_simulate,
    "verify-fclt": _cmd_fclt("DiffusiveGaussian"),
    "verify-critical": _cmd_fclt("CriticalLog"),
    "verify-slln": _cmd_slln,
    "verify-strong": _cmd_strong,
    "verify-invariants": _cmd_invariants,
}


def resolve_threads(flag):
    if flag is not None:
        return max(1, int(flag))
    return simulator.default_threads()


def run(command, config_path, threads=None, out_dir=None):
    """Execute one command; returns the process exit code."""
    if command not in COMMANDS:
        print(f"error: unknown command {command!r}", file=sys.stderr)
        return 2
    try:
        cfg, params = load_config(config_path, command)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    threads = resolve_threads(threads if threads is not None else cfg.get("threads"))
    out = _Outputs(out_dir or cfg.get("out", "derw-out"))
    t0 = time.perf_counter()
    try:
        result = _HANDLERS[command](cfg, params, out, threads)
        code = 0
        if result is not None:
            report, grid = result
            out.text("report.json", report.to_json())
            with open(out.path("report.csv"), "w", encoding="utf-8", newline="\n") as fh:
                report.write_csv(fh)
            for name in PLOT_FILES:
                out.path(name)
            emit_plot_data(report, grid, out.root)
            print(f"{report.name}: {'PASS' if report.passed else 'FAIL'}")
            code = 0 if report.passed else 1
        out.json(
            "metadata.json",
            {
                "version": __version__,
                "command": command,
                "config": cfg,
                "rng": simulator.RNG_ID,
                "threads": threads,
                "wall_time_s": time.perf_counter() - t0,
                "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            },
        )
        return code
    except (ConfigError, RegimeError, BudgetError) as e:
        out.discard()
        print(f"error: {e}", file=sys.stderr)
        return 2
    except BaseException:
        out.discard()
        raise


def main(argv=None):
    parser = argparse.ArgumentParser(prog="derw", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: DERW_THREADS or all cores)")
    parser.add_argument("--out", default=None, help="output directory (default: config 'out' or ./derw-out)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    return run(args.command, args.config, args.threads, args.out)


if __name__ == "__main__":
    sys.exit(main())
