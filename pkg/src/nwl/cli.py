"""Configuration-driven experiment runner.

Usage::

    nwl <command> --config <path> [--out <dir>] [--jobs N]

``command`` is one of ``kernels``, ``simulate``, ``compare`` or ``sweep``.
The config is a single JSON document; it is validated (schema, kernel
construction, ellipticity pre-flight) before any grid is built.  Every run
writes ``manifest.txt`` (resolved config plus diagnostics) and its CSV
tables into one output directory.  Exit status: 0 success, 2 config error,
3 numerical abort, 4 degenerate fit.
"""
import argparse
import csv
from dataclasses import dataclass, field, fields
import datetime
import json
import logging
import os
import sys
import time

import jsonschema

from . import comparison, kernels, solver
from .errors import BoundaryLeak, InsufficientPoints, NwlError, SchemaError, SolutionOverflow
from .grid import PeriodicGrid

log = logging.getLogger("nwl")

COMMANDS = ("kernels", "simulate", "compare", "sweep")
DEFAULT_CATALOG = ("dirac", "exponential", "gaussian")
DEFAULT_KERNELS = {"kernels": list(DEFAULT_CATALOG), "simulate": ["exponential"],
                   "compare": ["exponential", "dirac"], "sweep": ["exponential", "dirac"]}
KERNEL_COUNT = {"simulate": 1, "compare": 2, "sweep": 2}
INITIAL_DATA = {
    "gaussian_pulse": {"amplitude": 1.0, "width": 8.0, "center": 0.0, "direction": "right"},
    "windowed_cosine": {"wavenumber": 1.0, "amplitude": 1.0, "width": 16.0},
}

_number = {"type": "number"}
_positive = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "kernels": {"type": "array", "minItems": 1, "items": {"$ref": "#/$defs/kernel"}},
        "initial_data": {
            "type": "object",
            "required": ["type"],
            "properties": {"type": {"enum": list(INITIAL_DATA)}},
            # dispatch on the type so an unknown key is reported as such
            "allOf": [
                {"if": {"properties": {"type": {"const": "gaussian_pulse"}}},
                 "then": {"additionalProperties": False,
                          "properties": {"type": True, "amplitude": _number, "width": _positive,
                                         "center": _number,
                                         "direction": {"enum": ["right", "left", "standing"]}}}},
                {"if": {"properties": {"type": {"const": "windowed_cosine"}}},
                 "then": {"additionalProperties": False,
                          "properties": {"type": True, "wavenumber": _number,
                                         "amplitude": _number, "width": _positive}}},
            ],
        },
        "n": {"type": "integer", "minimum": 8},
        "L": _positive,
        "dt": {"oneOf": [{"const": "auto"}, _positive]},
        "dt_safety": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "t_final": _positive,
        "epsilon": {"type": "number", "minimum": 0, "maximum": 1},
        "delta": _positive,
        "deltas": {"type": "array", "items": _positive},
        "p": {"type": "integer", "minimum": 1},
        "s_meas": {"type": "number", "minimum": 0},
        "report_s_meas": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "growth_threshold": _positive,
        "dealias": {"type": "boolean"},
        "boundary_check": {"type": "boolean"},
        "snapshot_stride": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string", "minLength": 1},
    },
    "$defs": {
        "kernel": {
            "oneOf": [
                {"type": "string"},
                {"type": "object", "additionalProperties": False, "required": ["expression"],
                 "properties": {"expression": {"type": "string"}, "name": {"type": "string"},
                                "smoothness_order": {"type": "integer", "minimum": 0}}},
                {"type": "object", "additionalProperties": False, "required": ["approximant", "k"],
                 "properties": {"approximant": {"$ref": "#/$defs/kernel"},
                                "k": {"type": "integer", "minimum": 1}}},
                {"type": "object", "additionalProperties": False,
                 "required": ["perturb", "phi", "mode"],
                 "properties": {"perturb": {"$ref": "#/$defs/kernel"},
                                "phi": {"$ref": "#/$defs/kernel"},
                                "mode": {"enum": ["mix", "mollify", "high_deriv"]},
                                "nu": _number, "a": _number,
                                "k": {"type": "integer", "minimum": 1}}},
            ],
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


@dataclass
class ExperimentConfig:
    """Fully resolved experiment; ``emit`` and :func:`parse_config` round-trip it."""
    command: str
    kernels: list
    initial_data: dict
    n: int = 1024
    L: float = 64.0
    dt: object = "auto"
    dt_safety: float = 0.5
    t_final: float = 10.0
    epsilon: float = 0.25
    delta: float = 0.2
    deltas: list = field(default_factory=lambda: list(comparison.DEFAULT_DELTAS))
    p: int = 1
    s_meas: float = 2.0
    report_s_meas: list = field(default_factory=lambda: [0.0, 2.0])
    growth_threshold: float = 3.0
    dealias: bool = True
    boundary_check: bool = True
    snapshot_stride: int = 10
    output_dir: str = "nwl_out"
    built_kernels: list = field(default=None, repr=False, compare=False)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "built_kernels"}

    def emit(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @property
    def grid(self):
        return PeriodicGrid(self.n, float(self.L))

    def sim_config(self, delta=None):
        return solver.SimConfig(
            grid=self.grid, epsilon=float(self.epsilon),
            delta=float(self.delta if delta is None else delta), p=self.p,
            dt=None if self.dt == "auto" else float(self.dt), t_final=float(self.t_final),
            dealias=self.dealias, snapshot_stride=self.snapshot_stride,
            dt_safety=float(self.dt_safety), boundary_check=self.boundary_check)

    def data(self):
        spec = dict(self.initial_data)
        kind = spec.pop("type")
        return getattr(solver, kind)(**spec)


def parse_config(text, command=None):
    """Validate a JSON config, fill defaults and build its kernels.

    ``command`` (from the command line) takes part in validation: a config
    naming a different command is rejected.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config is not valid JSON: {exc.msg} (line {exc.lineno})", path="") from None
    err = jsonschema.exceptions.best_match(_VALIDATOR.iter_errors(raw))
    if err is not None:
        path = "/".join(str(p) for p in err.absolute_path)
        raise SchemaError(f"invalid config at '{path or '<root>'}': {err.message}", path=path)
    cmd = raw.get("command", command)
    if cmd is None:
        raise SchemaError("no command given in config or on the command line", path="command")
    if command is not None and cmd != command:
        raise SchemaError(f"config is for {cmd!r} but {command!r} was requested", path="command")
    values = dict(raw, command=cmd)
    values.setdefault("kernels", list(DEFAULT_KERNELS[cmd]))
    data = dict(raw.get("initial_data", {"type": "gaussian_pulse"}))
    values["initial_data"] = dict(INITIAL_DATA[data["type"]], **data)
    config = ExperimentConfig(**values)
    _check_semantics(config)
    return config


def _check_semantics(config):
    n = config.n
    if n & (n - 1):
        raise SchemaError(f"n must be a power of two, got {n}", path="n")
    want = KERNEL_COUNT.get(config.command)
    if want is not None and len(config.kernels) != want:
        raise SchemaError(f"{config.command} needs exactly {want} kernel(s), got {len(config.kernels)}",
                          path="kernels")
    if config.command == "sweep":
        if len(config.deltas) < comparison.MIN_ROWS:
            raise InsufficientPoints(f"a sweep needs at least {comparison.MIN_ROWS} deltas, "
                                     f"got {len(config.deltas)}", path="deltas")
        if len(set(config.deltas)) != len(config.deltas):
            raise SchemaError("deltas must be distinct", path="deltas")
    try:
        config.data()
    except ValueError as exc:
        raise SchemaError(str(exc), path="initial_data") from None
    config.built_kernels = [build_kernel(spec) for spec in config.kernels]
    if config.command != "kernels":
        # pre-flight: the symbol must stay positive on every wavenumber the runs will see
        deltas = config.deltas if config.command == "sweep" else [config.delta]
        xi_max = max(deltas) * PeriodicGrid(config.n, float(config.L)).xi_max
        for kernel in config.built_kernels:
            kernels.verify_ellipticity(kernel, xi_max, kernels.WORKING_SAMPLES)


def build_kernel(spec):
    """KernelSpec from a config entry: a catalog name or an expression/approximant/perturb object."""
    if isinstance(spec, str):
        return kernels.get_kernel(spec)
    if "expression" in spec:
        return kernels.from_expression(spec["expression"], name=spec.get("name"),
                                       smoothness_order=spec.get("smoothness_order", 8))
    if "approximant" in spec:
        return kernels.boussinesq_approximant(build_kernel(spec["approximant"]), spec["k"])
    return kernels.perturb(build_kernel(spec["perturb"]), build_kernel(spec["phi"]), spec["mode"],
                           nu=spec.get("nu"), a=spec.get("a"), k=spec.get("k"))


# --- commands --------------------------------------------------------------------

def _kernels(config, out, jobs):
    path = os.path.join(out, "kernel_catalog.csv")
    rows = []
    for kernel in config.built_kernels:
        m = kernels.compute_moments(kernel, 4)
        c1, c2 = kernels.verify_ellipticity(kernel, kernels.WORKING_XI_MAX, kernels.WORKING_SAMPLES)
        rows.append([kernel.name] + [_g(x) for x in (m[0], m[2], m[4], c1, c2)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "m0", "m2", "m4", "c1_sq", "c2_sq"])
        writer.writerows(rows)
    return {"kernel_count": len(rows)}, 0


def _simulate(config, out, jobs):
    (kernel,) = config.built_kernels
    sim = config.sim_config()
    dt = solver.resolve_dt(sim, [kernel])
    snapshots = os.path.join(out, "snapshots")
    os.makedirs(snapshots, exist_ok=True)
    try:
        traj = solver.run(config.data(), kernel, sim, dt=dt)
    except (BoundaryLeak, SolutionOverflow) as exc:
        _write_partial(exc, snapshots)
        raise
    traj.write_csv(snapshots)
    diag = {"dt_resolved": dt, "dt_step": traj.dt}
    diag.update(traj.diagnostics())
    return diag, 0


def _write_partial(exc, directory):
    if exc.partial is not None and len(exc.partial):
        exc.partial.write_csv(directory)
        exc.context["partial_snapshots"] = len(exc.partial)


def _compare(config, out, jobs):
    k1, k2 = config.built_kernels
    sim = config.sim_config()
    dt = solver.resolve_dt(sim, [k1, k2])
    try:
        series = comparison.run_pair(k1, k2, config.data(), sim, s_meas=config.s_meas, dt=dt)
    except comparison.MismatchedRuns as exc:
        exc.partial.write_csv(os.path.join(out, "diff_series_partial.csv"))
        raise
    series.write_csv(os.path.join(out, "diff_series.csv"))
    growth = comparison.growth_check(series, threshold=config.growth_threshold)
    order = kernels.matching_order(k1, k2)
    diag = {"dt_resolved": dt, "dt_step": series.runs[0].dt, "matching_order": str(order),
            "error": series.error, "final_diff_norm": float(series.diff_norm[-1]),
            "growth_passed": growth.passed, "growth_max_ratio": growth.max_ratio,
            "growth_ratio_at_one": growth.ratio_at_one,
            "growth_max_factor": growth.max_factor}
    for i, traj in enumerate(series.runs, 1):
        diag[f"run{i}.hamiltonian_drift"] = traj.hamiltonian_drift
        diag[f"run{i}.mean_mode_drift"] = traj.mean_drift
    return diag, 0


def _sweep(config, out, jobs):
    k1, k2 = config.built_kernels
    base = config.sim_config()
    dt = comparison.sweep_dt(k1, k2, base, config.deltas)
    table = comparison.delta_sweep(k1, k2, config.data(), base.with_(dt=dt), config.deltas,
                                   s_meas=config.s_meas, jobs=jobs)
    order = kernels.matching_order(k1, k2)
    extra = {"predicted_slope": order.predicted_rate, "matching_order": str(order)}
    for s in config.report_s_meas:
        other = comparison.rescore(table, s)
        extra[f"fitted_slope_s{s:g}"] = other.fitted_slope
    growth = {d: comparison.growth_check(table.series[d], threshold=config.growth_threshold)
              for d in config.deltas}
    extra["growth_passed"] = all(g.passed for g in growth.values())
    table.write_csv(os.path.join(out, "rate_table.csv"), extra)
    series_dir = os.path.join(out, "series")
    os.makedirs(series_dir, exist_ok=True)
    for d, series in table.series.items():
        series.write_csv(os.path.join(series_dir, f"diff_series_delta_{d!r}.csv"))
    runs = [t for s in table.series.values() for t in s.runs]
    diag = {"dt_resolved": dt, "dt_step": runs[0].dt, "fitted_slope": table.fitted_slope,
            "fit_residual": table.fit_residual, "intercept": table.intercept}
    diag.update(extra)
    for d, g in growth.items():
        diag[f"growth_max_factor.delta_{d!r}"] = g.max_factor
    diag["max_hamiltonian_drift"] = max(t.hamiltonian_drift for t in runs)
    diag["max_mean_mode_drift"] = max(t.mean_drift for t in runs)
    if table.fit_error:
        diag["fit_error"] = table.fit_error
        return diag, comparison.DegenerateTable(table.fit_error, errors=table.errors.tolist())
    return diag, 0


_DISPATCH = {"kernels": _kernels, "simulate": _simulate, "compare": _compare, "sweep": _sweep}


# --- artifacts -------------------------------------------------------------------

def _g(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value + 0.0:.17g}"
    return str(value)


def write_manifest(path, config, diagnostics, wall_time):
    lines = [f"config.{key} = {json.dumps(value, sort_keys=True)}"
             for key, value in config.to_dict().items()]
    for i, kernel in enumerate(config.built_kernels or []):
        lines.append(f"kernel.{i}.name = {kernel.name}")
        lines.append(f"kernel.{i}.definition = {kernel.describe()}")
    lines += [f"{key} = {_g(value)}" for key, value in diagnostics.items()]
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    lines.append(f"timestamp = {stamp} (wall_time_s={wall_time:.3f})")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _report(error, out):
    record = error.record()
    text = json.dumps(record, sort_keys=True)
    print(text, file=sys.stderr, flush=True)
    if out is not None:
        try:
            os.makedirs(out, exist_ok=True)
            with open(os.path.join(out, "error.json"), "w", newline="\n") as fh:
                fh.write(json.dumps(record, indent=2, sort_keys=True) + "\n")
        except OSError:
            pass
    return error.exit_status


def execute(config, out=None, jobs=1):
    """Run a parsed config; returns the exit status."""
    out = out or config.output_dir
    os.makedirs(out, exist_ok=True)
    started = time.perf_counter()
    try:
        diagnostics, status = _DISPATCH[config.command](config, out, jobs)
    except NwlError as exc:
        return _report(exc, out)
    write_manifest(os.path.join(out, "manifest.txt"), config, diagnostics,
                   time.perf_counter() - started)
    if isinstance(status, NwlError):
        return _report(status, out)
    return status


def main(argv=None):
    parser = argparse.ArgumentParser(prog="nwl", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", help="output directory (default: the config's output_dir)")
    parser.add_argument("--jobs", type=int, default=1, help="parallel sweep entries")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        return _report(SchemaError(f"cannot read config: {exc.strerror}", path=args.config), args.out)
    try:
        config = parse_config(text, command=args.command)
    except NwlError as exc:
        return _report(exc, args.out)
    return execute(config, args.out, max(1, args.jobs))


if __name__ == "__main__":
    sys.exit(main())
