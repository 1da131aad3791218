"""Config-driven command line front end.

Usage::

    qinfo <command> --config run.json [--out DIR] [--seed N] [--threads N]

Commands: qfi, fisher, chain, attain, classify, simulate, sweep. Each writes
``<command>.csv`` and ``<command>.json`` (``simulate`` also writes
``simulate_summary.csv``). Exit codes: 0 success, 2 configuration error,
3 numerical or I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import re
import sys
import time
from pathlib import Path
from typing import Iterable, Optional, Sequence

import jsonschema
import numpy as np

from . import __version__
from .errors import ConfigError, NumericalError, SingularFisher
from .estimation import Experiment, GridMleFirstStage, replicate
from .geometry import (
    curve_classify,
    polar_vector,
    curve_model,
    example_curve,
    example_model,
    load_curve_csv,
    sample_curve,
    sphere_model,
    uniform_attainability,
)
from .information import bc_chain, fisher_matrix, qfi_matrix
from .model import Povm, in_plane_povm, pauli_povm, spin_povm, yz_mix_povm

COMMANDS = ("qfi", "fisher", "chain", "attain", "classify", "simulate", "sweep")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_ANGLE_RE = re.compile(r"^\s*(?:(?P<num>\d+(?:\.\d*)?)\s*\*?\s*)?pi(?:\s*/\s*(?P<den>\d+(?:\.\d*)?))?\s*$")

ANGLE = {"anyOf": [{"type": "number"}, {"type": "string", "pattern": _ANGLE_RE.pattern}]}
RANGE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["count"],
    "properties": {
        "start": ANGLE,
        "stop": ANGLE,
        "count": {"type": "integer", "minimum": 1},
        "endpoint": {"type": "boolean"},
    },
}
MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
POVM_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "oneOf": [
        {"properties": {"kind": {"enum": ["pauli-x", "pauli-y", "pauli-z", "yz-mix", "identity"]}},
         "additionalProperties": False},
        {"properties": {"kind": {"const": "in-plane"}, "angle": ANGLE},
         "required": ["angle"], "additionalProperties": False},
        {"properties": {"kind": {"const": "direction"}, "eta": ANGLE, "phi": ANGLE},
         "required": ["eta", "phi"], "additionalProperties": False},
        {
            "properties": {
                "kind": {"const": "custom"},
                "elements": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["label", "re"],
                        "properties": {"label": {"type": "string"}, "re": MATRIX, "im": MATRIX},
                    },
                },
            },
            "required": ["elements"],
            "additionalProperties": False,
        },
    ],
}
CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "model": {
            "type": "object",
            "required": ["kind"],
            "oneOf": [
                {"properties": {"kind": {"const": "example"}, "eta": ANGLE},
                 "required": ["eta"], "additionalProperties": False},
                {"properties": {"kind": {"const": "bloch-curve"}, "path": {"type": "string"}},
                 "required": ["path"], "additionalProperties": False},
                {"properties": {"kind": {"const": "sphere"}}, "additionalProperties": False},
            ],
        },
        "povm": POVM_SCHEMA,
        "grid": {
            "anyOf": [
                RANGE,
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["eta", "phi"],
                    "properties": {"eta": RANGE, "phi": RANGE},
                },
            ]
        },
        "plan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "strategy": {"enum": ["two-stage", "adaptive", "two-param", "two-param-x"]},
                "n": {"type": "integer", "minimum": 1},
                "n_values": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "R": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "theta": ANGLE,
                "eta": ANGLE,
                "phi": ANGLE,
                "first_stage": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["povms"],
                    "properties": {
                        "povms": {"type": "array", "minItems": 1, "items": POVM_SCHEMA},
                        "grid": {"type": "integer", "minimum": 8},
                    },
                },
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}


def parse_angle(value) -> float:
    """Radians from a number or a string such as ``"pi/4"`` or ``"3*pi/2"``."""
    if isinstance(value, (int, float)):
        return float(value)
    m = _ANGLE_RE.match(str(value))
    if not m:
        raise ConfigError(f"cannot parse angle {value!r}")
    num = float(m.group("num")) if m.group("num") else 1.0
    den = float(m.group("den")) if m.group("den") else 1.0
    return num * math.pi / den


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def emit_csv(rows: Sequence[dict], path, columns: Optional[Sequence[str]] = None) -> None:
    """Comma-separated table with a header; floats carry 17 significant digits."""
    if columns is None:
        if not rows:
            raise ValueError("columns are required for an empty table")
        columns = list(rows[0])
    columns = list(columns)
    for r in rows:
        if list(r) != columns:
            raise ValueError("rows are not homogeneous")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for r in rows:
            writer.writerow([format_value(r[c]) for c in columns])


def grid_values(spec: Optional[dict], default_count: int = 64) -> np.ndarray:
    spec = spec or {"count": default_count}
    start = parse_angle(spec.get("start", 0.0))
    stop = parse_angle(spec.get("stop", "2*pi"))
    return np.linspace(start, stop, spec["count"], endpoint=spec.get("endpoint", False))


def build_povm(spec: dict) -> Povm:
    kind = spec["kind"]
    if kind.startswith("pauli-"):
        return pauli_povm(kind[-1])
    if kind == "yz-mix":
        return yz_mix_povm()
    if kind == "identity":
        return Povm(("1",), (np.eye(2),))
    if kind == "in-plane":
        return in_plane_povm(parse_angle(spec["angle"]))
    if kind == "direction":
        return spin_povm(polar_vector(parse_angle(spec["eta"]), parse_angle(spec["phi"])))
    labels, elements = [], []
    for e in spec["elements"]:
        re_part = np.asarray(e["re"], dtype=float)
        im_part = np.asarray(e.get("im", np.zeros_like(re_part)), dtype=float)
        if re_part.shape != im_part.shape:
            raise ConfigError(f"element {e['label']!r}: re/im shapes differ")
        labels.append(e["label"])
        elements.append(re_part + 1j * im_part)
    try:
        return Povm(tuple(labels), tuple(elements))
    except (NumericalError, ValueError) as exc:
        raise ConfigError(f"invalid custom POVM: {exc}") from exc


def build_model(spec: dict, base: Path):
    kind = spec["kind"]
    if kind == "example":
        return example_model(parse_angle(spec["eta"])), None
    if kind == "sphere":
        return sphere_model(), None
    path = Path(spec["path"])
    if not path.is_absolute():
        path = base / path
    try:
        sample = load_curve_csv(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load curve {path}: {exc}") from exc
    return curve_model(sample), sample


class Run:
    """A validated configuration plus command-line overrides."""

    def __init__(self, command: str, config: dict, base: Path, seed: Optional[int], threads: int):
        self.command = command
        self.config = config
        self.base = base
        self.threads = threads
        self.model, self.sample = build_model(config["model"], base)
        self.povm = build_povm(config["povm"]) if "povm" in config else None
        plan = config.get("plan", {})
        self.seed = seed if seed is not None else plan.get("seed")
        self._check()

    def _check(self):
        cmd = self.command
        k = self.model.param_dim
        if cmd in ("fisher", "chain", "attain") and self.povm is None:
            raise ConfigError(f"command {cmd!r} needs a povm")
        if cmd in ("chain", "attain", "classify") and k != 1:
            raise ConfigError(f"command {cmd!r} needs a one-parameter model")
        if self.povm is not None and self.povm.dim != 2:
            raise ConfigError("POVM must act on a qubit")
        grid = self.config.get("grid")
        if grid is not None and (("eta" in grid) != (k == 2)):
            raise ConfigError("grid shape does not match the model's parameter count")
        if cmd in ("simulate", "sweep"):
            plan = self.config.get("plan")
            if plan is None:
                raise ConfigError(f"command {cmd!r} needs a plan")
            needed = ["strategy", "R"] + (["n"] if cmd == "simulate" else ["n_values"])
            missing = [f for f in needed if f not in plan]
            if self.seed is None:
                missing.append("seed")
            if missing:
                raise ConfigError(f"plan is missing {', '.join(missing)}")
            two_param = plan["strategy"].startswith("two-param")
            if two_param != (k == 2):
                raise ConfigError(f"strategy {plan['strategy']!r} does not match the model")
            if plan["strategy"] == "two-stage" and self.config["model"]["kind"] != "example":
                raise ConfigError("the closed-form two-stage strategy needs the example model")
            truth = ["eta", "phi"] if two_param else ["theta"]
            absent = [f for f in truth if f not in plan]
            if absent:
                raise ConfigError(f"plan is missing true value(s) {', '.join(absent)}")

    def points(self) -> list:
        grid = self.config.get("grid")
        if self.model.param_dim == 2:
            etas = grid_values(grid["eta"]) if grid else np.array([math.pi / 2])
            phis = grid_values(grid["phi"]) if grid else np.array([0.0])
            return [np.array([e, p]) for e in etas for p in phis]
        if grid is None and self.sample is not None:
            return [np.array([t]) for t in self.sample.thetas]
        return [np.array([t]) for t in grid_values(grid)]

    # --- commands -------------------------------------------------------

    def qfi(self):
        rows = []
        for t in self.points():
            q = qfi_matrix(self.model, t).matrix
            if self.model.param_dim == 1:
                rows.append({"theta": t[0], "qfi": q[0, 0]})
            else:
                rows.append({"eta": t[0], "phi": t[1], "qfi_00": q[0, 0], "qfi_01": q[0, 1], "qfi_11": q[1, 1]})
        cols = ["theta", "qfi"] if self.model.param_dim == 1 else ["eta", "phi", "qfi_00", "qfi_01", "qfi_11"]
        return {"main": (rows, cols)}, {"points": len(rows)}

    def fisher(self):
        rows = []
        singular = 0
        for t in self.points():
            f = fisher_matrix(self.model, self.povm, t)
            q = qfi_matrix(self.model, t).matrix
            singular += f.singular
            if self.model.param_dim == 1:
                rows.append({"theta": t[0], "singular": f.singular, "fisher": f.matrix[0, 0], "qfi": q[0, 0]})
            else:
                m = f.matrix
                rows.append({"eta": t[0], "phi": t[1], "singular": f.singular,
                             "fisher_00": m[0, 0], "fisher_01": m[0, 1], "fisher_11": m[1, 1],
                             "qfi_00": q[0, 0], "qfi_01": q[0, 1], "qfi_11": q[1, 1]})
        if self.model.param_dim == 1:
            cols = ["theta", "singular", "fisher", "qfi"]
        else:
            cols = ["eta", "phi", "singular", "fisher_00", "fisher_01", "fisher_11", "qfi_00", "qfi_01", "qfi_11"]
        return {"main": (rows, cols)}, {"points": len(rows), "singular_points": singular}

    def chain(self):
        cols = ["theta", "singular", "fisher", "step1", "step2", "quantum", "slack1", "slack2", "slack3"]
        rows = []
        min_slack = math.inf
        for t in self.points():
            try:
                rep = bc_chain(self.model, self.povm, t)
            except SingularFisher:
                rows.append({c: (t[0] if c == "theta" else True if c == "singular" else math.nan) for c in cols})
                continue
            min_slack = min(min_slack, *rep.slack)
            rows.append({"theta": t[0], "singular": False, **rep.as_row()})
        return {"main": (rows, cols)}, {"points": len(rows), "min_slack": min_slack}

    def attain(self):
        thetas = [t[0] for t in self.points()]
        rep = uniform_attainability(self.model, self.povm, thetas)
        rows = []
        for t, r in zip(thetas, rep.reports):
            resid = [o.proportionality_residual for o in r.outcomes if o.in_support]
            rows.append({
                "theta": t,
                "attains": r.attains_here,
                "cond1_all": r.cond1_all,
                "cond2_value": r.cond2_value,
                "max_residual": max(resid) if resid else 0.0,
                "support_size": len(resid),
            })
        cols = ["theta", "attains", "cond1_all", "cond2_value", "max_residual", "support_size"]
        return {"main": (rows, cols)}, {"points": len(rows), "uniform": rep.attains}

    def classify(self):
        if self.sample is not None and self.config.get("grid") is None:
            sample = self.sample
        elif self.config["model"]["kind"] == "example":
            sample = example_curve(parse_angle(self.config["model"]["eta"]), [t[0] for t in self.points()])
        else:
            sample = sample_curve(self.model, [t[0] for t in self.points()])
        cls = curve_classify(sample)
        normal = cls.normal if cls.normal is not None else np.full(3, math.nan)
        row = {"tag": cls.tag, "normal_x": normal[0], "normal_y": normal[1], "normal_z": normal[2],
               "points": len(sample)}
        return {"main": ([row], list(row))}, {"tag": cls.tag}

    def _experiment(self, n: int) -> Experiment:
        plan = self.config["plan"]
        strategy = plan["strategy"]
        alpha = plan.get("alpha", 0.5)
        if strategy.startswith("two-param"):
            return Experiment(strategy, n, parse_angle(plan["eta"]), parse_angle(plan["phi"]), alpha)
        eta = parse_angle(self.config["model"]["eta"]) if "eta" in self.config["model"] else math.nan
        first = None
        if "first_stage" in plan:
            fs = plan["first_stage"]
            first = GridMleFirstStage(tuple(build_povm(p) for p in fs["povms"]), fs.get("grid", 256))
        model = None if self.config["model"]["kind"] == "example" and first is None else self.model
        return Experiment(strategy, n, eta, parse_angle(plan["theta"]), alpha, model=model, first_stage=first)

    def _simulate(self, n: int):
        plan = self.config["plan"]
        try:
            exp = self._experiment(n)
            exp.plan
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return exp, replicate(exp, plan["R"], self.seed, self.threads)

    @staticmethod
    def summary_row(summary) -> dict:
        names = summary.param_names
        row = {"strategy": summary.strategy, "n": summary.n, "R": summary.replications, "seed": summary.master_seed}
        for j, p in enumerate(names):
            row[f"nvar_{p}"] = summary.scaled_cov[j, j]
        if len(names) == 2:
            row["ncov_eta_phi"] = summary.scaled_cov[0, 1]
        row["nvar_sum"] = summary.scaled_variance_sum
        for j, p in enumerate(names):
            row[f"bias_{p}"] = summary.bias[j]
            row[f"skew_{p}"] = summary.skewness[j]
            row[f"exkurt_{p}"] = summary.excess_kurtosis[j]
            row[f"bound_{p}"] = summary.reference_bound[j, j]
        row["mean_fidelity_loss"] = summary.mean_fidelity_loss
        row["gm_trace"] = summary.gm_trace
        row["gm_se"] = summary.gm_standard_error
        row["gm_within_3se"] = summary.gm_trace <= 1.0 + 3.0 * summary.gm_standard_error
        row["clamped_fraction"] = summary.clamped_fraction
        row["boundary_fraction"] = summary.boundary_fraction
        return row

    def simulate(self):
        exp, (summary, results) = self._simulate(self.config["plan"]["n"])
        names = exp.param_names
        rows = []
        for r in results:
            row = {"index": r.index}
            for j, p in enumerate(names):
                row[f"est_{p}"] = r.estimate[j]
            for j, p in enumerate(names):
                row[f"err_{p}"] = r.error[j]
            row.update({"fidelity_loss": r.fidelity_loss, "clamped": r.clamped, "degenerate": r.degenerate,
                        "boundary": r.boundary})
            rows.append(row)
        cols = ["index", *[f"est_{p}" for p in names], *[f"err_{p}" for p in names],
                "fidelity_loss", "clamped", "degenerate", "boundary"]
        srow = self.summary_row(summary)
        result = summary.as_dict()
        if exp.strategy == "adaptive":
            result["assumption"] = ("second-stage Fisher information assumed continuous in the "
                                    "first-stage estimate near the true value")
        return {"main": (rows, cols), "summary": ([srow], list(srow))}, result

    def sweep(self):
        rows = []
        for n in self.config["plan"]["n_values"]:
            _, (summary, _) = self._simulate(n)
            rows.append(self.summary_row(summary))
        return {"main": (rows, list(rows[0]))}, {"n_values": list(self.config["plan"]["n_values"])}

    def execute(self):
        return getattr(self, self.command)()


def load_config(path) -> dict:
    try:
        with Path(path).open(encoding="utf-8") as fh:
            config = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    return config


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def run_config(command: str, config_path, out: Optional[str] = None, seed: Optional[int] = None,
               threads: int = 1) -> int:
    """Validate, run and write reports; returns the process exit code."""
    started = time.perf_counter()
    try:
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        config = load_config(config_path)
        if config.get("command", command) != command:
            raise ConfigError(f"config is for command {config['command']!r}, not {command!r}")
        base = Path(config_path).resolve().parent
        run = Run(command, config, base, seed, threads)
        if out:
            out_dir = Path(out)
        elif "output" in config and "dir" in config["output"]:
            out_dir = base / config["output"]["dir"]
        else:
            out_dir = Path.cwd() / "qinfo-out"
        targets = [out_dir / f"{command}.csv", out_dir / f"{command}.json", out_dir / f"{command}_summary.csv"]
        if any(t.resolve() == Path(config_path).resolve() for t in targets):
            raise ConfigError("output would overwrite the config file; choose another --out")
        tables, result = run.execute()
    except ConfigError as exc:
        print(f"qinfo: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"qinfo: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for key, (rows, cols) in tables.items():
            name = command if key == "main" else f"{command}_{key}"
            emit_csv(rows, out_dir / f"{name}.csv", cols)
        effective = dict(config, command=command)
        if run.seed is not None:
            effective.setdefault("plan", {})
            effective["plan"] = dict(effective["plan"], seed=run.seed)
        doc = {
            "command": command,
            "result": _jsonable(result),
            "metadata": {
                "config_hash": config_hash(effective),
                "seed": run.seed,
                "version": __version__,
                "wall_time_s": time.perf_counter() - started,
            },
        }
        with (out_dir / f"{command}.json").open("w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, indent=2, allow_nan=False)
            fh.write("\n")
    except OSError as exc:
        print(f"qinfo: cannot write reports: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        # strict JSON has no NaN/Infinity; undefined values become null
        return float(x) if math.isfinite(x) else None
    return x


def _threads(value: Optional[int]) -> int:
    if value is not None:
        return max(1, value)
    env = os.environ.get("QINFO_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def main(argv: Optional[Iterable[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="qinfo", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="output directory (default: config output.dir, else ./qinfo-out)")
    parser.add_argument("--seed", type=int, help="master seed, overrides plan.seed")
    parser.add_argument("--threads", type=int, help="worker threads (fallback: QINFO_THREADS)")
    args = parser.parse_args(list(argv) if argv is not None else None)
    return run_config(args.command, args.config, args.out, args.seed, _threads(args.threads))


if __name__ == "__main__":
    sys.exit(main())
