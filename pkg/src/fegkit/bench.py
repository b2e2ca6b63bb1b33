"""Config-driven experiment runner: traces, bound series, certificates, files."""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import analysis, solvers, stochastic
from .core import FegError, ProblemSpec
from .problems import problem_from_label

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EMIT_KINDS = ("trace_csv", "certificate_json", "summary_json")
CSV_HEADER = "k,grad_norm_sq,bound,potential,tau,eta"


class ConfigError(FegError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    problem: str = "bilinear"
    problem_params: dict = field(default_factory=dict)
    # each entry: {"name": <selector>, **method parameters}
    methods: List[dict] = field(default_factory=lambda: [{"name": "feg"}])
    iters: int = 100
    trials: int = 1
    seed: int = 0
    eps: Optional[float] = None
    sigma2: Optional[float] = None
    output_dir: str = "out"
    emit: List[str] = field(default_factory=lambda: list(EMIT_KINDS))
    z0: Optional[List[float]] = None
    verify: bool = True
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> "ExperimentConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"unsupported version {self.schema_version}")
        if not isinstance(self.problem, str) or not self.problem:
            raise ConfigError("problem", "must be a nonempty label")
        if not self.methods:
            raise ConfigError("methods", "at least one method is required")
        for i, m in enumerate(self.methods):
            name = m.get("name") if isinstance(m, dict) else None
            if name not in solvers.METHODS:
                raise ConfigError(f"methods[{i}]", f"unknown method {name!r}; choose from {solvers.METHODS}")
            _check_method_params(f"methods[{i}]", m)
        if not isinstance(self.iters, int) or self.iters < 1:
            raise ConfigError("iters", "must be an integer >= 1")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials", "must be an integer >= 1")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed", "must be a nonnegative integer")
        if self.eps is not None and not self.eps > 0:
            raise ConfigError("eps", "must be positive")
        if self.sigma2 is not None and not self.sigma2 >= 0:
            raise ConfigError("sigma2", "must be nonnegative")
        if self.eps is not None and self.sigma2 is not None:
            raise ConfigError("eps", "give either eps or sigma2, not both")
        bad = [e for e in self.emit if e not in EMIT_KINDS]
        if bad:
            raise ConfigError("emit", f"unknown outputs {bad}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown field")
        methods = data.get("methods", [{"name": "feg"}])
        data = dict(data, methods=[{"name": m} if isinstance(m, str) else dict(m) for m in methods])
        return cls(**data).validate()

    def save(self, path) -> None:
        atomic_write(path, json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", str(exc)) from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
        return cls.from_dict(data)


def _check_method_params(where, m):
    def positive(key):
        if key in m and not (isinstance(m[key], (int, float)) and m[key] > 0):
            raise ConfigError(f"{where}.{key}", "must be positive")

    name = m["name"]
    if name == "feg-a":
        positive("tau_init")
        positive("eta_init")
        if "delta" in m and not 0 < m["delta"] < 1:
            raise ConfigError(f"{where}.delta", "must lie in (0, 1)")
    if name in ("eg", "eg+"):
        positive("alpha")
        if "beta" in m and not 0 < m["beta"] <= 1:
            raise ConfigError(f"{where}.beta", "must lie in (0, 1]")
    allowed = {"name", "rho", "tau_init", "eta_init", "delta", "alpha", "beta"}
    extra = set(m) - allowed
    if extra:
        raise ConfigError(f"{where}.{sorted(extra)[0]}", "unknown method parameter")


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    return "" if x is None else f"{float(x):#.17g}"


def emit_trace_csv(trace: solvers.Trace, bounds, path, potential=None) -> None:
    """Write one row per k with 17 significant digits; absent values stay empty."""
    n = len(trace.iterates)
    if len(trace.grad_norm_sq) != n or (bounds is not None and len(bounds) != n):
        raise ValueError("trace and bound series lengths differ")
    taus, etas = trace.step_tau or [], trace.step_eta or []
    V = potential or []
    lines = [CSV_HEADER]
    for k in range(n):
        row = [
            str(k),
            _fmt(trace.grad_norm_sq[k]),
            _fmt(bounds[k] if bounds is not None else None),
            _fmt(V[k] if k < len(V) else None),
            _fmt(taus[k] if k < len(taus) else None),
            _fmt(etas[k] if k < len(etas) else None),
        ]
        lines.append(",".join(row))
    atomic_write(path, "\n".join(lines) + "\n")


def read_trace_csv(path) -> dict:
    """Parse an emitted CSV back into columns (None for empty fields)."""
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError("not a trace CSV")
    cols = {name: [] for name in CSV_HEADER.split(",")}
    for line in rows[1:]:
        for name, cell in zip(cols, line.split(",")):
            if name == "k":
                cols[name].append(int(cell))
            else:
                cols[name].append(float(cell) if cell else None)
    return cols


def default_z0(problem: ProblemSpec, seed: int) -> np.ndarray:
    if problem.label == "bilinear":
        return np.array([1.0, 0.0])
    if problem.label == "worst-case":
        return np.zeros(2)
    return np.random.default_rng(seed).uniform(-1.0, 1.0, problem.dim)


def noise_for(config: ExperimentConfig) -> stochastic.NoiseModel:
    if config.eps is not None:
        sched = stochastic.schedule_for_epsilon(config.eps, config.iters)
    elif config.sigma2 is not None:
        sched = stochastic.constant_schedule(config.sigma2)
    else:
        sched = stochastic.zero_schedule()
    return stochastic.NoiseModel(sched, seed=config.seed)


def run_method(problem: ProblemSpec, m: dict, z0, config: ExperimentConfig):
    """Run one method selector; returns a trace (trial 0 for S-FEG)."""
    name, K = m["name"], config.iters
    if name == "feg":
        rho = m.get("rho", problem.comonotone if problem.comonotone is not None else 0.0)
        return solvers.run_feg(problem, z0, K, rho=rho)
    if name == "feg-a":
        return solvers.run_feg_a(problem.operator, z0, m.get("tau_init", 1.0), m.get("eta_init", 1.0),
                                 m.get("delta", 0.5), K, problem=problem)
    if name == "eg":
        return solvers.run_eg(problem, z0, K, alpha=m.get("alpha"))
    if name == "eg+":
        return solvers.run_eg_plus(problem, z0, K, alpha=m.get("alpha"), beta=m.get("beta", 0.5))
    if name in ("eag-c", "eag-v"):
        return solvers.run_eag(problem, z0, K, variant=name[-1])
    if name == "s-feg":
        return stochastic.run_sfeg(problem, noise_for(config), z0, K, trial=0)
    raise ConfigError("methods", f"unknown method {name!r}")


def _flag(value) -> str:
    if value is None:
        return "n/a"
    return "pass" if value else "fail"


def _is_stall(problem: ProblemSpec, trace) -> bool:
    if problem.label != "worst-case":
        return False
    target = 2.0 * problem.params["L"] * problem.params["R"]
    return all(g == target for g in trace.grad_norm_sq)


def run_experiment(config: ExperimentConfig) -> dict:
    """Run every configured method and write the requested files.

    Returns {"problem", "K", "results": [per-method summary], "exit_code"}.
    """
    config.validate()
    params = dict(config.problem_params)
    problem = problem_from_label(config.problem, **params)
    z0 = np.asarray(config.z0, dtype=np.float64) if config.z0 is not None else default_z0(problem, config.seed)
    out_dir = Path(config.output_dir)
    results, used = [], {}
    for m in config.methods:
        name = m["name"]
        used[name] = used.get(name, 0) + 1
        tag = name if used[name] == 1 else f"{name}_{used[name]}"
        trace = run_method(problem, m, z0, config)
        summary, bounds, V, report = _certify(problem, m, trace, z0, config)
        if "trace_csv" in config.emit:
            emit_trace_csv(trace, bounds, out_dir / f"{tag}_trace.csv", potential=V)
        if "certificate_json" in config.emit and config.verify:
            atomic_write(out_dir / f"{tag}_certificate.json", json.dumps(report, indent=1, default=_json_default))
        results.append(summary)
    failed = any(v == "fail" for r in results for v in r["certificates"].values())
    doc = {"problem": problem.label, "K": config.iters, "results": results,
           "exit_code": 2 if failed else 0}
    if "summary_json" in config.emit:
        atomic_write(out_dir / "summary.json", json.dumps(doc, indent=2, default=_json_default))
    return doc


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _certify(problem, m, trace, z0, config):
    name = m["name"]
    noise = trace.params.get("noise") if name == "s-feg" else None
    sigmas = noise.schedule if noise is not None else None
    bounds = analysis.bound_series(trace, problem, sigmas=sigmas)
    certs = {"potential": None, "bound": None, "span": None}
    V, report = None, {}
    if config.verify:
        if name == "s-feg" and config.trials > 1:
            traces = stochastic.sample_traces(problem, noise, z0, config.iters, config.trials)
            mc = stochastic.monte_carlo_report(traces, bounds)
            if any(r["pass"] is not None for r in mc):
                certs["bound"] = all(r["pass"] is not False for r in mc)
            floor = stochastic.check_potential_floor(traces, sigmas)
            certs["potential"] = all(r["pass"] for r in floor)
            report = {"monte_carlo": mc, "potential_floor": floor}
        else:
            pot = analysis.certify_potential(trace, problem)
            if name == "s-feg" and noise.schedule.default != 0.0:
                pot = None  # a single noisy run carries no monotonicity guarantee
            if pot is not None:
                certs["potential"] = pot.passed
                V = pot.V
            if name != "s-feg":
                certs["bound"] = analysis.certify_bound(trace, bounds)
                certs["span"] = analysis.check_span(trace, problem)
            report = {"records": analysis.certificate_report(trace, bounds, pot)}
    defined = [(g, b) for g, b in zip(trace.grad_norm_sq, bounds) if b is not None and b > 0]
    summary = {
        "method": name,
        "problem": problem.label,
        "K": trace.iterations,
        "final_grad_norm_sq": trace.grad_norm_sq[-1],
        "bound_final": bounds[-1],
        "bound_ratio_max": max((g / b for g, b in defined), default=None),
        "oracle_calls": trace.oracle_calls,
        "stop_reason": trace.stop_reason.value,
        "certificates": {k: _flag(v) for k, v in certs.items()},
    }
    if _is_stall(problem, trace):
        L, R = problem.params["L"], problem.params["R"]
        summary["note"] = f"expected stall: grad_norm_sq constant at 2LR = {2 * L * R:g}"
    return summary, bounds, V, report
