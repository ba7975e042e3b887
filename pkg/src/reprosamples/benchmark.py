"""Replication benchmarks reproducing the synthetic-study tables at desk
scale.

A benchmark run draws independent replications of a design, applies the
candidate-set / coefficient-inference / model-confidence-set pipeline to
each, and aggregates coverage and cardinality (or length) as mean(sd).
Named presets keep the acceptance runs to one call.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .candidates import build_candidate_set
from .glm import Dataset
from .inference import confset_Abeta, confset_beta_j, confset_case_prob
from .modelcs import model_confidence_set
from .rng import substream
from .synthetic import gen_design, gen_response, mean_function, sim_design

ALL_TASKS = ("candidate", "beta_j", "joint", "caseprob", "mcs")


@dataclass(frozen=True)
class BenchConfig:
    model_id: str
    n: int
    p: int
    d: int
    reps: int
    loss: str = "hinge"
    s_u: int = 10
    alpha: float = 0.95
    m: int = 300
    n_new: int = 2
    tasks: tuple = ("candidate",)
    tau0: tuple = (1, 2, 3, 4)
    beta0_tau0: tuple = (5.0, 4.0, 3.0, 2.5)


PRESETS = {
    "m3-desk": BenchConfig("M3", n=300, p=120, d=200, reps=60),
    "m4-desk": BenchConfig("M4", n=300, p=120, d=200, reps=30,
                           beta0_tau0=(5.0, 4.0, 3.0, 1.0)),
    "toy": BenchConfig("M3", n=80, p=12, d=25, reps=5, s_u=4, m=40),
}


def preset(name: str, **overrides) -> BenchConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides)


def _rep_seed(seed: int, rep: int) -> int:
    return int(substream(seed, "replication", rep).integers(2**31))


def run_replication(config: BenchConfig, rep: int, seed: int,
                    null_js: tuple = ()) -> dict:
    """One replication; returns per-task metrics keyed by task name."""
    design = sim_design(config.model_id, n=config.n, p=config.p, d=config.d)
    rs = _rep_seed(seed, rep)
    X = gen_design(config.n, config.p, rs)
    mu = mean_function(design, X)
    y = gen_response(mu, rs)
    data = Dataset(X, y)
    beta0 = np.zeros(config.p)
    beta0[[j - 1 for j in config.tau0]] = config.beta0_tau0
    out: dict = {"rep": rep}

    cand = build_candidate_set(data, config.d, s_u=config.s_u,
                               loss=config.loss, seed=rs)
    out["candidate"] = {"covered": config.tau0 in cand,
                        "cardinality": len(cand.models)}

    if "beta_j" in config.tasks:
        rows = {}
        for j in list(config.tau0) + list(null_js):
            cs = confset_beta_j(data, cand, j, config.alpha)
            rows[j] = {"covered": cs.covers(beta0[j - 1]),
                       "length": cs.length,
                       "selected": any(j in tau for tau in cand.models)}
        out["beta_j"] = rows

    if "joint" in config.tasks:
        cs = confset_Abeta(data, cand, np.eye(config.p), config.alpha,
                           target="beta")
        out["joint"] = {"covered": cs.covers(beta0)}

    if "caseprob" in config.tasks:
        X_new = gen_design(config.n_new, config.p,
                           _rep_seed(seed + 1, rep))
        mu_new = mean_function(design, X_new)
        cs = confset_case_prob(data, cand, X_new, config.alpha)
        out["caseprob"] = {"covered": cs.covers_probability(mu_new)}

    if "mcs" in config.tasks:
        mcs = model_confidence_set(data, cand, config.alpha, config.m,
                                   "mle", seed=rs)
        models = set(mcs.models)
        out["mcs"] = {"covered": config.tau0 in models,
                      "cardinality": len(models),
                      "subset_of_candidates": models <= set(cand.models)}
    return out


@dataclass
class BenchmarkReport:
    """Aggregated replication metrics: name -> (mean, sd, count)."""

    config: BenchConfig
    metrics: dict
    seconds: float
    failures: list = field(default_factory=list)
    raw: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.failures

    def table_text(self) -> str:
        lines = [f"design={self.config.model_id} n={self.config.n} "
                 f"p={self.config.p} d={self.config.d} "
                 f"reps={self.config.reps} loss={self.config.loss}"]
        width = max(len(k) for k in self.metrics) if self.metrics else 0
        for name in sorted(self.metrics):
            mean, sd, cnt = self.metrics[name]
            lines.append(f"  {name:<{width}}  {mean:.3f}({sd:.3f})  n={cnt}")
        if self.failures:
            lines.append(f"  INCOMPLETE: {len(self.failures)} failed "
                         "replication(s)")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {"design": self.config.model_id,
               "n": self.config.n, "p": self.config.p, "d": self.config.d,
               "reps": self.config.reps, "loss": self.config.loss,
               "alpha": self.config.alpha, "tasks": list(self.config.tasks),
               "seconds": round(self.seconds, 3),
               "complete": self.complete,
               "failures": self.failures,
               "metrics": {k: {"mean": v[0], "sd": v[1], "count": v[2]}
                           for k, v in self.metrics.items()}}
        return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def _mean_sd(values) -> tuple:
    arr = np.asarray(values, dtype=float)
    sd = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), sd, int(arr.size)


def aggregate(config: BenchConfig, results: list, seconds: float,
              failures: list) -> BenchmarkReport:
    metrics = {}
    series: dict = {}
    for res in results:
        c = res["candidate"]
        series.setdefault("candidate_coverage", []).append(c["covered"])
        series.setdefault("candidate_cardinality", []).append(c["cardinality"])
        if "beta_j" in res:
            rows = res["beta_j"]
            sel = [r for j, r in rows.items() if j in config.tau0]
            nul = [r for j, r in rows.items() if j not in config.tau0]
            if sel:
                series.setdefault("beta_j_signal_coverage", []).append(
                    np.mean([r["covered"] for r in sel]))
                series.setdefault("beta_j_signal_length", []).append(
                    np.mean([r["length"] for r in sel]))
            if nul:
                series.setdefault("beta_j_null_coverage", []).append(
                    np.mean([r["covered"] for r in nul]))
                series.setdefault("beta_j_null_length", []).append(
                    np.mean([r["length"] for r in nul]))
        if "joint" in res:
            series.setdefault("joint_coverage", []).append(
                res["joint"]["covered"])
        if "caseprob" in res:
            series.setdefault("caseprob_coverage", []).append(
                res["caseprob"]["covered"])
        if "mcs" in res:
            series.setdefault("mcs_coverage", []).append(
                res["mcs"]["covered"])
            series.setdefault("mcs_cardinality", []).append(
                res["mcs"]["cardinality"])
            series.setdefault("mcs_subset", []).append(
                res["mcs"]["subset_of_candidates"])
    for name, vals in series.items():
        metrics[name] = _mean_sd(vals)
    return BenchmarkReport(config, metrics, seconds, failures, results)


def run_benchmark(config: BenchConfig, seed: int = 0, n_jobs: int = 1,
                  null_js: tuple | None = None) -> BenchmarkReport:
    """Run all replications (optionally in parallel) and aggregate.

    A replication that raises is recorded as a failure and the report is
    flagged incomplete rather than aborting the run.
    """
    if config.reps < 1:
        raise ValueError("need at least one replication")
    if null_js is None and "beta_j" in config.tasks:
        pool = [j for j in range(1, config.p + 1) if j not in config.tau0]
        pick = substream(seed, "null-js", 0).choice(len(pool),
                                                    size=min(20, len(pool)),
                                                    replace=False)
        null_js = tuple(sorted(pool[i] for i in pick))
    null_js = null_js or ()

    start = time.perf_counter()

    def one(rep):
        try:
            return run_replication(config, rep, seed, null_js), None
        except Exception as exc:  # noqa: BLE001 - report, don't abort
            return None, {"rep": rep, "error": f"{type(exc).__name__}: {exc}"}

    if n_jobs != 1:
        from joblib import Parallel, delayed
        pairs = Parallel(n_jobs=n_jobs)(delayed(one)(r)
                                        for r in range(config.reps))
    else:
        pairs = [one(r) for r in range(config.reps)]
    results = [r for r, _ in pairs if r is not None]
    failures = [f for _, f in pairs if f is not None]
    return aggregate(config, results, time.perf_counter() - start, failures)
