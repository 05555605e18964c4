"""Command-line front end.

One mode per invocation, configured by a JSON file::

    zvmc --config run.json --out results/ [--seed 7] [--threads 4]
    zvmc --sweep sweep.json --out results/

A sweep file is a JSON list of configs; config ``i`` runs into ``out/<i>/``.
Each run writes a CSV (the trace, replications or runs table of its mode)
and ``summary.json`` with keys ``mode``, ``config``, ``metrics``,
``wall_ms``, ``censored_total`` and ``build_id``.

Exit codes: 0 on success, 2 when the config, a model file or an input fails
validation, 3 when a numerical procedure fails.
"""

import argparse
import json
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import BasisModel, estimate_rate, run_adaptive, write_trace_csv
from .counterexample import (
    classify_experiment, divergent_spec, summable_spec, write_runs_csv,
)
from .eigen import eigen_oracle, load_eigen_model, run_eigen_adaptive, write_eigen_trace_csv
from .errors import EstimationError, ModelError, NumericalError
from .exact import solve_mu, spectral_radius
from .model import compute_constants, load_model
from .sampling import estimate_mu, write_replications_csv
from .tilting import build_tilted

MODES = ("solve", "constants", "simulate", "adapt", "eigen", "counterexample")
REQUIRED = {
    "solve": ("model_path",),
    "constants": ("model_path",),
    "simulate": ("model_path", "R"),
    "adapt": ("model_path", "R", "n_iters"),
    "eigen": ("model_path", "R", "n_iters"),
    "counterexample": ("spec", "steps", "n_runs"),
}
SPECS = {"divergent": divergent_spec, "summable": summable_spec}
CSV_NAME = {
    "simulate": "replications.csv",
    "adapt": "trace.csv",
    "eigen": "eigen_trace.csv",
    "counterexample": "runs.csv",
}

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """A validated experiment description.

    ``model_path`` points at a reward-model JSON (an eigen-model JSON for
    mode ``eigen``).  Fields a mode does not use stay None.
    """

    mode: str
    model_path: str = None
    R: int = None
    n_iters: int = None
    seed: int = 0
    max_steps: int = None
    clamp: list = None
    basis: dict = None
    output_path: str = None
    x0: list = None
    nu: list = None
    init: list = None
    nu_bounds: list = None
    alpha_max: float = None
    spec: str = None
    steps: int = None
    n_runs: int = None

    @classmethod
    def from_dict(cls, doc, base_dir=None):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        if "mode" not in doc:
            raise ConfigError("missing required field 'mode'")
        cfg = cls(**doc)
        if cfg.model_path is not None and base_dir is not None:
            p = Path(cfg.model_path)
            if not p.is_absolute():
                cfg.model_path = str(Path(base_dir) / p)
        cfg.validate()
        return cfg

    def to_dict(self):
        return asdict(self)

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        for name in REQUIRED[self.mode]:
            if getattr(self, name) is None:
                raise ConfigError(f"mode {self.mode!r} requires field '{name}'")
        if not _is_int(self.seed) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"field 'seed' must be an unsigned 64-bit integer, got {self.seed!r}")
        for name in ("R", "n_iters", "max_steps", "steps", "n_runs"):
            v = getattr(self, name)
            if v is not None and (not _is_int(v) or v < 1):
                raise ConfigError(f"field '{name}' must be an integer >= 1, got {v!r}")
        for name in ("clamp", "nu_bounds"):
            v = getattr(self, name)
            if v is not None and not (_is_reals(v) and len(v) == 2 and 0 < v[0] <= v[1]):
                raise ConfigError(f"field '{name}' must be [lo, hi] with 0 < lo <= hi")
        for name in ("nu", "init"):
            v = getattr(self, name)
            if v is not None and not (_is_reals(v) and all(x > 0 for x in v)):
                raise ConfigError(f"field '{name}' must be a list of positive reals")
        if self.x0 is not None and not (isinstance(self.x0, list)
                                        and all(_is_int(x) for x in self.x0)):
            raise ConfigError("field 'x0' must be a list of state indices")
        if self.spec is not None and self.spec not in SPECS:
            raise ConfigError(f"field 'spec' must be one of {', '.join(SPECS)}")
        if self.alpha_max is not None and not _is_real(self.alpha_max):
            raise ConfigError("field 'alpha_max' must be a number")
        if self.basis is not None:
            b = self.basis
            if not isinstance(b, dict) or "design_states" not in b or "columns" not in b:
                raise ConfigError("field 'basis' needs 'design_states' and 'columns'")


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_reals(v):
    return isinstance(v, list) and all(_is_real(x) for x in v)


def build_id():
    """``git describe`` of the source tree when available, else the package version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        out = None
    if out is not None and out.returncode == 0 and out.stdout.strip():
        return f"{__version__}+{out.stdout.strip()}"
    return __version__


# -- modes -------------------------------------------------------------------

def _vector(values, n, name):
    if values is None:
        return None
    if len(values) != n:
        raise ConfigError(f"field '{name}' must have {n} entries (one per transient state)")
    return np.array(values, dtype=float)


def _basis(model, spec):
    cols = np.array(spec["columns"], dtype=float)
    if cols.ndim == 1:
        cols = cols[None, :]
    b0 = spec.get("b0")
    b0 = np.zeros(model.n_transient) if b0 is None else np.array(b0, dtype=float)
    return BasisModel.for_model(model, spec["design_states"], b0, cols.T)


def _run_solve(cfg, out, threads):
    model = load_model(cfg.model_path)
    mu = solve_mu(model)
    M = model.discounted()[np.ix_(model.transient, model.transient)]
    metrics = {"mu": mu.tolist(), "transient": model.transient.tolist(),
               "spectral_radius": spectral_radius(M)}
    return metrics, 0


def _run_constants(cfg, out, threads):
    model = load_model(cfg.model_path)
    mu = solve_mu(model)
    lo, hi = cfg.nu_bounds or (0.5 * float(mu.min()), 2.0 * float(mu.max()))
    c = compute_constants(model, mu, lo, hi)
    return c.to_dict(), 0


def _run_simulate(cfg, out, threads):
    model = load_model(cfg.model_path)
    nu = _vector(cfg.nu, model.n_transient, "nu")
    mu = solve_mu(model)
    if nu is None:
        nu = np.ones(model.n_transient)
    tilted = build_tilted(model, nu)
    starts = model.transient.tolist() if cfg.x0 is None else cfg.x0
    ests = []
    for x in starts:
        if not 0 <= x < model.n_states:
            raise ConfigError(f"x0 entry {x} is not a state")
        ests.append(estimate_mu(tilted, x, cfg.R, cfg.seed, max_steps=cfg.max_steps,
                                threads=threads))
    write_replications_csv(ests, out / CSV_NAME["simulate"])
    metrics = {"estimates": [
        {"x0": e.x0, "mean": e.mean, "variance": e.variance, "censored": e.censored,
         "insufficient": e.insufficient, "exact_mu": float(mu[model.position(e.x0)])}
        for e in ests]}
    return metrics, sum(e.censored for e in ests)


def _run_adapt(cfg, out, threads):
    model = load_model(cfg.model_path)
    init = _vector(cfg.init, model.n_transient, "init")
    basis = _basis(model, cfg.basis) if cfg.basis else None
    trace = run_adaptive(model, basis=basis, init=init, R=cfg.R, n_iters=cfg.n_iters,
                         seed=cfg.seed, max_steps=cfg.max_steps, clamp=cfg.clamp,
                         threads=threads)
    try:
        trace.theta_hat = estimate_rate(trace)
    except EstimationError:
        trace.theta_hat = None
    write_trace_csv(trace, out / CSV_NAME["adapt"])
    metrics = {
        "final_sup_error": trace.final_error,
        "theta_hat": trace.theta_hat,
        "iterations": len(trace.sample_vars),
        "sup_errors": trace.sup_errors,
        "flagged_iterations": [i + 1 for i, f in enumerate(trace.flagged) if f],
        "iteration_wall_ms": trace.wall_ms,
        "final_nu": trace.iterates[-1].tolist(),
    }
    return metrics, int(sum(trace.censored))


def _run_eigen(cfg, out, threads):
    model = load_eigen_model(cfg.model_path)
    oracle = eigen_oracle(model)
    init = None if cfg.init is None else _vector(cfg.init, model.d, "init")
    trace = run_eigen_adaptive(model, init_nu=init, R=cfg.R, n_iters=cfg.n_iters,
                               seed=cfg.seed, alpha_max=cfg.alpha_max, clamp=cfg.clamp,
                               max_steps=cfg.max_steps or 100_000, threads=threads,
                               oracle=oracle)
    write_eigen_trace_csv(trace, out / CSV_NAME["eigen"])
    metrics = {
        "alpha_hat": trace.alpha_hat[-1] if trace.alpha_hat else None,
        "alpha_err": trace.alpha_err[-1] if trace.alpha_err else None,
        "nu_sup_err": trace.nu_sup_err[-1] if trace.nu_sup_err else None,
        "lambda_pf": oracle.lambda_pf,
        "alpha_star": oracle.alpha_star,
        "mu_star": oracle.mu_star.tolist(),
        "oracle_residual": oracle.residual,
        "bias": trace.bias,
    }
    return metrics, int(sum(trace.censored))


def _run_counterexample(cfg, out, threads):
    summary = classify_experiment(SPECS[cfg.spec](), cfg.steps, cfg.n_runs, cfg.seed)
    write_runs_csv(summary, out / CSV_NAME["counterexample"])
    return summary.to_dict(), 0


RUNNERS = {
    "solve": _run_solve,
    "constants": _run_constants,
    "simulate": _run_simulate,
    "adapt": _run_adapt,
    "eigen": _run_eigen,
    "counterexample": _run_counterexample,
}


def run(config, out_dir, threads=1):
    """Run one experiment and write its artifacts into ``out_dir``; returns the summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    metrics, censored = RUNNERS[config.mode](config, out, threads)
    summary = {
        "mode": config.mode,
        "config": config.to_dict(),
        "metrics": metrics,
        "wall_ms": 1e3 * (time.perf_counter() - t0),
        "censored_total": int(censored),
        "build_id": build_id(),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def _read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read file ({exc.strerror})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def _run_guarded(doc, base_dir, args, out_dir):
    try:
        if args.seed is not None and isinstance(doc, dict):
            doc = {**doc, "seed": args.seed}
        cfg = ExperimentConfig.from_dict(doc, base_dir=base_dir)
        run(cfg, out_dir, threads=args.threads)
    except (ConfigError, ModelError, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _parser():
    ap = argparse.ArgumentParser(prog="zvmc", description=__doc__.split("\n\n")[0])
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="experiment config (JSON)")
    src.add_argument("--sweep", help="JSON list of configs; config i runs into OUT/i/")
    ap.add_argument("--seed", type=int, help="unsigned 64-bit seed; overrides the config")
    ap.add_argument("--threads", type=int, default=1, help="worker cap (results do not depend on it)")
    ap.add_argument("--out", help="output directory (default: the config's output_path or .)")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print(f"error: --seed must be an unsigned 64-bit integer, got {args.seed}",
              file=sys.stderr)
        return EXIT_INVALID
    path = Path(args.config or args.sweep)
    try:
        doc = _read_json(path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.config:
        out = args.out or (doc.get("output_path") if isinstance(doc, dict) else None) or "."
        return _run_guarded(doc, path.parent, args, out)
    if not isinstance(doc, list) or not doc:
        print(f"error: {path}: sweep file must be a non-empty JSON list of configs",
              file=sys.stderr)
        return EXIT_INVALID
    root = Path(args.out or ".")
    codes = [_run_guarded(item, path.parent, args, root / str(i)) for i, item in enumerate(doc)]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
