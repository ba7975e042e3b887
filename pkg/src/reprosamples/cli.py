"""Command-line harness: dataset simulation, candidate sets, coefficient
inference, model confidence sets, and replication benchmarks.

Exit codes: 0 success, 2 user/input error, 3 numerical or solver failure.
All JSON outputs are schema-validated on write; candidate-set inputs are
validated on read. A single master seed drives every substream, so a rerun
with identical inputs produces byte-identical outputs.
"""

from __future__ import annotations

import json
import os
import sys

import click
import jsonschema
import numpy as np

from . import benchmark as bench
from .candidates import CandidateSet, build_candidate_set
from .glm import Dataset, SeparationError
from .inference import confset_Abeta, confset_beta_j, confset_case_prob
from .modelcs import model_confidence_set
from .solvers import SolverError, SurrogateLoss
from .synthetic import export_csv, gen_design, gen_response, mean_function, \
    sim_design

EXIT_USER = 2
EXIT_NUMERIC = 3

_TAU = {"type": "array", "items": {"type": "integer", "minimum": 1}}

SCHEMAS = {
    "candidates": {
        "type": "object",
        "required": ["models", "provenance", "params"],
        "properties": {
            "models": {"type": "array", "items": _TAU},
            "provenance": {"type": "object"},
            "params": {"type": "object"},
        },
    },
    "regions": {
        "type": "object",
        "required": ["alpha", "target", "regions", "skipped"],
        "properties": {
            "alpha": {"type": "number", "exclusiveMinimum": 0,
                      "exclusiveMaximum": 1},
            "target": {"type": "string"},
            "regions": {"type": "array", "items": {
                "type": "object",
                "required": ["tau", "center", "shape", "threshold", "df",
                             "C", "n"],
                "properties": {
                    "tau": _TAU,
                    "center": {"type": "array", "items": {"type": "number"}},
                    "shape": {"type": "array", "items": {"type": "number"}},
                    "threshold": {"type": "number", "minimum": 0},
                    "df": {"type": "integer", "minimum": 0},
                    "C": {"type": "array", "items": {"type": "number"}},
                    "n": {"type": "integer", "minimum": 1},
                },
            }},
            "skipped": {"type": "array"},
        },
    },
    "intervals": {
        "type": "object",
        "required": ["alpha", "j", "intervals", "length", "skipped"],
        "properties": {
            "alpha": {"type": "number"},
            "j": {"type": "integer", "minimum": 1},
            "intervals": {"type": "array", "items": {
                "type": "array", "items": {"type": "number"},
                "minItems": 2, "maxItems": 2}},
            "length": {"type": "number", "minimum": 0},
        },
    },
    "model-cs": {
        "type": "object",
        "required": ["alpha", "m", "mode", "models"],
        "properties": {
            "alpha": {"type": "number"},
            "m": {"type": "integer", "minimum": 1},
            "mode": {"enum": ["mle", "profile"]},
            "models": {"type": "array", "items": {
                "type": "object",
                "required": ["tau", "T_hat", "beta_used"],
                "properties": {
                    "tau": _TAU,
                    "T_hat": {"type": "number", "minimum": 0, "maximum": 1},
                    "beta_used": {"type": "array",
                                  "items": {"type": "number"}},
                },
            }},
        },
    },
    "benchmark": {
        "type": "object",
        "required": ["design", "metrics", "complete", "seconds"],
        "properties": {
            "design": {"type": "string"},
            "complete": {"type": "boolean"},
            "metrics": {"type": "object"},
        },
    },
}


class UserError(click.ClickException):
    exit_code = EXIT_USER


def _fail_numeric(exc: Exception):
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_NUMERIC)


def _write_json(text: str, schema: str, out_path):
    jsonschema.validate(json.loads(text), SCHEMAS[schema])
    if out_path:
        with open(out_path, "w", newline="\n") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def load_csv(path) -> Dataset:
    """Parse the "y,x1,...,xp" CSV format into a Dataset."""
    try:
        with open(path) as fh:
            header = fh.readline().strip()
            body = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as exc:
        raise UserError(f"cannot read dataset: {exc}")
    except ValueError as exc:
        raise UserError(f"ill-formed CSV {path}: {exc}")
    if body.size == 0:
        raise UserError(f"empty dataset: {path}")
    p = body.shape[1] - 1
    expected = "y," + ",".join(f"x{k}" for k in range(1, p + 1))
    if header != expected:
        raise UserError(f"bad CSV header in {path}: expected {expected!r}")
    try:
        return Dataset(body[:, 1:], body[:, 0])
    except ValueError as exc:
        raise UserError(f"invalid dataset {path}: {exc}")


def load_candidates(path) -> CandidateSet:
    try:
        with open(path) as fh:
            text = fh.read()
        doc = json.loads(text)
        jsonschema.validate(doc, SCHEMAS["candidates"])
        return CandidateSet.from_json(text)
    except OSError as exc:
        raise UserError(f"cannot read candidate set: {exc}")
    except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
        raise UserError(f"invalid candidate-set JSON {path}: {exc}")


def load_config(path) -> dict:
    """Simple key=value config file; '#' starts a comment line."""
    cfg = {}
    try:
        with open(path) as fh:
            for ln, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise UserError(f"{path}:{ln}: expected key=value")
                key, _, value = line.partition("=")
                cfg[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise UserError(f"cannot read config: {exc}")
    return cfg


def resolve(cli_value, name, config, default, cast):
    """Precedence: explicit CLI flag > config file > default."""
    if cli_value is not None:
        return cli_value
    if name in config:
        try:
            return cast(config[name])
        except ValueError as exc:
            raise UserError(f"config value {name}={config[name]!r}: {exc}")
    return default


def thread_count(cli_value, config) -> int:
    env = os.environ.get("REPRO_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise UserError(f"REPRO_THREADS={env!r} is not an integer")
    return max(1, resolve(cli_value, "threads", config,
                          os.cpu_count() or 1, int))


def _load_matrix(path, what) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise UserError(f"cannot read {what} from {path}: {exc}")


@click.group()
def main():
    """Model-free inference for high-dimensional binary regression."""


_common = [
    click.option("--config", "config_path", type=click.Path(), default=None,
                 help="key=value config file; CLI flags take precedence"),
    click.option("--seed", type=int, default=None, help="master seed"),
]


def common_options(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@main.command()
@common_options
@click.option("--design", "model_id", default=None,
              type=click.Choice(["M1", "M2", "M3", "M4"]))
@click.option("--n", type=int, default=None)
@click.option("--p", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--with-u", is_flag=True,
              help="also write the realized uniforms to OUT.u")
def simulate(config_path, seed, model_id, n, p, out_path, with_u):
    """Generate a synthetic dataset CSV."""
    cfg = load_config(config_path) if config_path else {}
    model_id = resolve(model_id, "design", cfg, "M3", str)
    seed = resolve(seed, "seed", cfg, 0, int)
    n = resolve(n, "n", cfg, None, int)
    p = resolve(p, "p", cfg, None, int)
    try:
        design = sim_design(model_id, n=n, p=p)
    except ValueError as exc:
        raise UserError(str(exc))
    X = gen_design(design.n, design.p, seed)
    y, u = gen_response(mean_function(design, X), seed, with_u=True)
    export_csv(X, y, out_path, u=u if with_u else None)


@main.command()
@common_options
@click.option("--data", "data_path", type=click.Path(), required=True)
@click.option("--d", type=int, default=None, help="number of noise draws")
@click.option("--s-u", type=int, default=None, help="sparsity cap")
@click.option("--loss", default=None,
              type=click.Choice(["hinge", "logistic"]))
@click.option("--threads", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
def candidate(config_path, seed, data_path, d, s_u, loss, threads, out_path):
    """Build the model candidate set from a dataset CSV."""
    cfg = load_config(config_path) if config_path else {}
    seed = resolve(seed, "seed", cfg, 0, int)
    d = resolve(d, "d", cfg, 200, int)
    s_u = resolve(s_u, "s_u", cfg, 10, int)
    loss = resolve(loss, "loss", cfg, "hinge", str)
    jobs = thread_count(threads, cfg)
    data = load_csv(data_path)
    if d < 1 or s_u < 1:
        raise UserError("need d >= 1 and s_u >= 1")
    try:
        cand = build_candidate_set(data, d, s_u=s_u,
                                   loss=SurrogateLoss(loss), seed=seed,
                                   n_jobs=jobs)
    except (SolverError, FloatingPointError, RuntimeError) as exc:
        _fail_numeric(exc)
    _write_json(cand.to_json(), "candidates", out_path)


@main.command()
@common_options
@click.option("--data", "data_path", type=click.Path(), required=True)
@click.option("--candidates", "cand_path", type=click.Path(), required=True)
@click.option("--target", required=True,
              type=click.Choice(["abeta", "beta_j", "beta", "caseprob"]))
@click.option("--j", type=int, default=None,
              help="coefficient index for --target beta_j")
@click.option("--a-matrix", "a_path", type=click.Path(), default=None,
              help="CSV for the combination matrix (--target abeta)")
@click.option("--x-new", "xnew_path", type=click.Path(), default=None,
              help="CSV of new design rows (--target caseprob)")
@click.option("--alpha", type=float, default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
def infer(config_path, seed, data_path, cand_path, target, j, a_path,
          xnew_path, alpha, out_path):
    """Confidence sets for coefficient combinations or case probabilities."""
    cfg = load_config(config_path) if config_path else {}
    alpha = resolve(alpha, "alpha", cfg, 0.95, float)
    if not 0.0 < alpha < 1.0:
        raise UserError("alpha must lie in (0, 1)")
    data = load_csv(data_path)
    cand = load_candidates(cand_path)
    if len(cand.models) == 0:
        _fail_numeric(RuntimeError("empty candidate set"))
    try:
        if target == "beta_j":
            if j is None:
                raise UserError("--target beta_j requires --j")
            if not 1 <= j <= data.p:
                raise UserError(f"column index out of range: {j}")
            cs = confset_beta_j(data, cand, j, alpha)
            _write_json(cs.to_json(), "intervals", out_path)
        elif target == "caseprob":
            if xnew_path is None:
                raise UserError("--target caseprob requires --x-new")
            X_new = _load_matrix(xnew_path, "new design rows")
            if X_new.shape[1] != data.p:
                raise UserError("new rows must have the dataset's width")
            cs = confset_case_prob(data, cand, X_new, alpha)
            _write_json(cs.to_json(), "regions", out_path)
        else:
            if target == "beta":
                A = np.eye(data.p)
            else:
                if a_path is None:
                    raise UserError("--target abeta requires --a-matrix")
                A = _load_matrix(a_path, "combination matrix")
                if A.shape[1] != data.p:
                    raise UserError("matrix must have the dataset's width")
            cs = confset_Abeta(data, cand, A, alpha, target=target)
            _write_json(cs.to_json(), "regions", out_path)
    except (SolverError, SeparationError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        _fail_numeric(exc)


@main.command("model-cs")
@common_options
@click.option("--data", "data_path", type=click.Path(), required=True)
@click.option("--candidates", "cand_path", type=click.Path(), required=True)
@click.option("--alpha", type=float, default=None)
@click.option("--m", type=int, default=None, help="synthetic draws per model")
@click.option("--mode", default=None, type=click.Choice(["mle", "profile"]))
@click.option("--out", "out_path", type=click.Path(), default=None)
def model_cs(config_path, seed, data_path, cand_path, alpha, m, mode,
             out_path):
    """Monte-Carlo model confidence set over a candidate set."""
    cfg = load_config(config_path) if config_path else {}
    seed = resolve(seed, "seed", cfg, 0, int)
    alpha = resolve(alpha, "alpha", cfg, 0.95, float)
    m = resolve(m, "m", cfg, 300, int)
    mode = resolve(mode, "nuisance_mode", cfg, "mle", str)
    if not 0.0 < alpha < 1.0:
        raise UserError("alpha must lie in (0, 1)")
    if m < 1:
        raise UserError("need m >= 1")
    data = load_csv(data_path)
    cand = load_candidates(cand_path)
    if len(cand.models) == 0:
        _fail_numeric(RuntimeError("empty candidate set"))
    try:
        mcs = model_confidence_set(data, cand, alpha, m, mode, seed=seed)
    except (SolverError, FloatingPointError) as exc:
        _fail_numeric(exc)
    if not set(mcs.models) <= set(cand.models):
        _fail_numeric(RuntimeError("retained model outside candidate set"))
    _write_json(mcs.to_json(), "model-cs", out_path)


@main.command("benchmark")
@common_options
@click.option("--preset", "preset_name", default=None,
              type=click.Choice(sorted(bench.PRESETS)))
@click.option("--tasks", default=None,
              help="comma list from: " + ",".join(bench.ALL_TASKS))
@click.option("--reps", type=int, default=None)
@click.option("--threads", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
def benchmark_cmd(config_path, seed, preset_name, tasks, reps, threads,
                  out_path):
    """Run a desk-scale replication benchmark and print the table."""
    cfg = load_config(config_path) if config_path else {}
    seed = resolve(seed, "seed", cfg, 0, int)
    preset_name = resolve(preset_name, "preset", cfg, "toy", str)
    tasks = resolve(tasks, "tasks", cfg, "candidate", str)
    reps = resolve(reps, "reps", cfg, None, int)
    jobs = thread_count(threads, cfg)
    task_tuple = tuple(t.strip() for t in tasks.split(",") if t.strip())
    bad = [t for t in task_tuple if t not in bench.ALL_TASKS]
    if bad:
        raise UserError(f"unknown task(s): {','.join(bad)}")
    overrides = {"tasks": task_tuple}
    if reps is not None:
        if reps < 1:
            raise UserError("need at least one replication")
        overrides["reps"] = reps
    config = bench.preset(preset_name, **overrides)
    report = bench.run_benchmark(config, seed=seed, n_jobs=jobs)
    click.echo(report.table_text(), nl=False)
    _write_json(report.to_json(), "benchmark", out_path)
    if not report.complete:
        sys.exit(EXIT_NUMERIC)


if __name__ == "__main__":
    main()
