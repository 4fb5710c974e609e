"""Experiment driver.

    python3 -m twofactor --config exp.json [--task certify] [--threads 1]

The config is one JSON document; the only environment override is RUN_SEED,
which replaces path.seed.  Exit status: 0 all task checks passed, 1 a check
failed (the failing check is named on stderr), 2 configuration error.
"""

import argparse
from dataclasses import dataclass, field
import json
import os
from pathlib import Path
import subprocess
import sys
import time
from typing import Optional

import numpy as np
from scipy import stats as sps

from .certify import GridSpec, drift_certificate_search
from .coupling import CouplingMode, XMode, simulate_coupled, simulate_coupled_ensemble
from .errors import CertificateNotFound, ParameterError, ValidationError
from .lyapunov import LyapunovShape
from .model import ModelKind, ModelSpec, validate_model
from .paths import PathConfig, simulate_ensemble
from .quadrature import QuadratureConfig
from .stats import decay_estimate, moment_growth_check, wasserstein_report

TASKS = ("certify", "decay", "wasserstein", "moments", "marginal-check", "all")


class ConfigError(Exception):
    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")


@dataclass
class ExperimentConfig:
    model: ModelSpec
    shape: LyapunovShape
    path: PathConfig
    coupling: CouplingMode
    task: str
    output_dir: str
    n_paths: int = 10000
    grid_spec: GridSpec = field(default_factory=GridSpec)
    init_pair: tuple = ((2.0, 1.0), (1.0, 0.0))
    moment_times: tuple = (1.0, 2.0)
    moment_dt: float = 1e-2
    write_paths: bool = False
    margins_csv: bool = False
    c: Optional[float] = None      # skip the certificate search in decay when both given
    zeta: Optional[float] = None
    raw: dict = field(default_factory=dict)


def _section(raw, key, cls, where):
    body = raw.get(key, {})
    if not isinstance(body, dict):
        raise ConfigError(where, "must be an object")
    try:
        return cls(**body)
    except TypeError as e:
        raise ConfigError(where, str(e)) from None
    except (ParameterError, ValueError) as e:
        raise ConfigError(where, str(e)) from None


def parse_config(text: str, task_override: Optional[str] = None) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"line {e.lineno} column {e.colno}", e.msg) from None
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    known = {"model", "shape", "path", "coupling", "task", "output_dir", "n_paths", "grid", "init_pair",
             "moment_times", "moment_dt", "write_paths", "margins_csv", "c", "zeta"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown field")
    try:
        model = validate_model(ModelSpec.from_dict(raw.get("model", {})))
    except ValidationError as e:
        raise ConfigError(f"model.{e.field}", str(e)) from None
    shape_raw = dict(raw.get("shape", {}))
    if model.kind == ModelKind.TYPE_II and "kappa0" not in shape_raw and model.lam > 0:
        shape_raw["kappa0"] = 2 * (1 + abs(model.gamma) / model.lam)
    shape = _section({"shape": shape_raw}, "shape", LyapunovShape, "shape")
    path = _section(raw, "path", PathConfig, "path")
    if "RUN_SEED" in os.environ:
        try:
            path = PathConfig(**{**path.__dict__, "seed": int(os.environ["RUN_SEED"])})
        except ValueError:
            raise ConfigError("RUN_SEED", "must be an integer") from None
    cp = raw.get("coupling", {})
    try:
        coupling = CouplingMode.for_model(model, XMode(cp.get("x_mode", "THINNING")))
    except ValueError as e:
        raise ConfigError("coupling.x_mode", str(e)) from None
    grid = _section(raw, "grid", GridSpec, "grid")
    task = task_override or raw.get("task", "all")
    if task not in TASKS:
        raise ConfigError("task", f"must be one of {TASKS}, got {task!r}")
    if "output_dir" not in raw:
        raise ConfigError("output_dir", "required")
    try:
        pair = tuple(tuple(float(v) for v in p) for p in raw.get("init_pair", ((2.0, 1.0), (1.0, 0.0))))
        assert len(pair) == 2 and all(len(p) == 2 for p in pair)
    except (TypeError, ValueError, AssertionError):
        raise ConfigError("init_pair", "must be [[y, x], [y~, x~]]") from None
    n_paths = raw.get("n_paths", 10000)
    if not isinstance(n_paths, int) or n_paths < 1:
        raise ConfigError("n_paths", "must be a positive integer")
    return ExperimentConfig(model, shape, path, coupling, task, str(raw["output_dir"]), n_paths, grid, pair,
                            tuple(raw.get("moment_times", (1.0, 2.0))), float(raw.get("moment_dt", 1e-2)),
                            bool(raw.get("write_paths", False)), bool(raw.get("margins_csv", False)),
                            raw.get("c"), raw.get("zeta"), raw)


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=10)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    from . import __version__
    return __version__


# ------------------------------------------------------------------ tasks


def _write(out: Path, name: str, text: str):
    (out / name).write_text(text)


def task_certify(cfg: ExperimentConfig, out: Path, state: dict):
    try:
        cert = drift_certificate_search(cfg.model, cfg.shape, cfg.grid_spec, QuadratureConfig())
    except CertificateNotFound as e:
        _write(out, "certificate.json", json.dumps({"found": False, "message": str(e),
                                                    "worst_points": e.worst_points,
                                                    "worst_margins": e.worst_margins}, indent=2))
        return [("certify: positive rate on grid", False)]
    _write(out, "certificate.json", cert.to_json())
    if cfg.margins_csv:
        _write(out, "margins.csv", cert.margins_csv())
    state["c"], state["zeta"] = cert.c, cert.zeta
    return [("certify: positive rate on grid", cert.valid)]


def _coupled(cfg: ExperimentConfig, threads: int, state: dict):
    if "ensemble" not in state:
        state["ensemble"] = simulate_coupled_ensemble(cfg.model, cfg.init_pair, cfg.path, cfg.n_paths,
                                                      cfg.coupling, threads)
    return state["ensemble"]


def task_decay(cfg: ExperimentConfig, out: Path, state: dict, threads: int):
    if cfg.c is not None and cfg.zeta is not None:
        state.setdefault("c", cfg.c)
        state.setdefault("zeta", cfg.zeta)
    if "c" not in state:
        checks = task_certify(cfg, out, state)
        if not checks[0][1]:
            return checks
    ens = _coupled(cfg, threads, state)
    rep = decay_estimate(ens, cfg.shape, state["c"], eta_bound=min(cfg.model.lam, state["zeta"]),
                         seed=cfg.path.seed)
    _write(out, "decay.csv", rep.to_csv())
    _write(out, "decay.json", rep.to_json())
    if rep.degenerate:
        return [("decay: degenerate report (flagged)", True)]
    return [("decay: mean V below certified bound", bool(rep.bound_ok)), ("decay: fitted rate > 0", rep.eta_hat > 0)]


def task_wasserstein(cfg: ExperimentConfig, out: Path, state: dict, threads: int):
    ens = _coupled(cfg, threads, state)
    rep = wasserstein_report(ens, cfg.shape.theta, seed=cfg.path.seed)
    _write(out, "wasserstein.csv", rep.to_csv())
    _write(out, "wasserstein.json", json.dumps(rep.to_dict(), indent=2, sort_keys=True))
    checks = [("wasserstein: coupling bound dominates marginal W1", rep.dominated)]
    if rep.eta_hat is not None:
        checks.append(("wasserstein: fitted rate > 0", rep.eta_hat > 0))
    return checks


def task_moments(cfg: ExperimentConfig, out: Path, state: dict, threads: int):
    y0, x0 = cfg.init_pair[0]
    rep = moment_growth_check(cfg.model, (y0, x0), cfg.moment_times, cfg.n_paths, dt=cfg.moment_dt,
                              seed=cfg.path.seed, threads=threads)
    _write(out, "moments.json", json.dumps(rep.to_dict(), indent=2, sort_keys=True))
    return [("moments: mean W below W0 exp(C0 t)", rep.passed)]


def marginal_check(cfg: ExperimentConfig, threads: int, state: dict):
    ens = _coupled(cfg, threads, state)
    y0, x0 = cfg.init_pair[0]
    ref_cfg = PathConfig(t_end=cfg.path.t_end, dt=cfg.path.dt, seed=cfg.path.seed + 1,
                         record_every=max(cfg.path.n_steps, 1))
    ref = simulate_ensemble(cfg.model, (y0, x0), ref_cfg, cfg.n_paths, threads)
    a, b = ens.y[-1], ref.y[-1]
    ks = sps.ks_2samp(a, b)
    se = np.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    return {"ks_statistic": float(ks.statistic), "ks_pvalue": float(ks.pvalue), "mean_coupled": float(a.mean()),
            "mean_single": float(b.mean()), "stderr": float(se), "t": float(cfg.path.t_end)}


def task_marginal(cfg: ExperimentConfig, out: Path, state: dict, threads: int):
    res = marginal_check(cfg, threads, state)
    _write(out, "marginal.json", json.dumps(res, indent=2, sort_keys=True))
    return [("marginal-check: KS not rejected at 1%", res["ks_pvalue"] >= 0.01),
            ("marginal-check: means within 4 stderr", abs(res["mean_coupled"] - res["mean_single"]) <= 4 * res["stderr"])]


def write_paths(cfg: ExperimentConfig, out: Path):
    pdir = out / "paths"
    pdir.mkdir(exist_ok=True)
    p = simulate_coupled(cfg.model, cfg.init_pair, cfg.path, cfg.coupling)
    (pdir / "coupled.csv").write_text(p.to_csv())
    (pdir / "coupled.json").write_text(p.sidecar_json())


def run(config_path: str, task: Optional[str] = None, threads: int = 1) -> int:
    t0 = time.time()
    try:
        text = Path(config_path).read_text()
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text, task)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"config error: output_dir: {e}", file=sys.stderr)
        return 2
    tasks = ("certify", "decay", "wasserstein", "moments", "marginal-check") if cfg.task == "all" else (cfg.task,)
    state: dict = {}
    checks = []
    error = None
    try:
        for name in tasks:
            if name == "certify":
                checks += task_certify(cfg, out, state)
            elif name == "decay":
                checks += task_decay(cfg, out, state, threads)
            elif name == "wasserstein":
                checks += task_wasserstein(cfg, out, state, threads)
            elif name == "moments":
                checks += task_moments(cfg, out, state, threads)
            elif name == "marginal-check":
                checks += task_marginal(cfg, out, state, threads)
        if cfg.write_paths:
            write_paths(cfg, out)
    except Exception as e:  # manifest is still written
        error = f"{type(e).__name__}: {e}"
    failed = [name for name, ok in checks if not ok]
    status = 1 if (failed or error) else 0
    manifest = {"config": cfg.raw, "task": cfg.task, "version": version_string(), "seed": cfg.path.seed,
                "threads": threads, "wall_time_s": round(time.time() - t0, 3),
                "checks": {name: bool(ok) for name, ok in checks}, "status": status, "error": error}
    _write(out, "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
    for name in failed:
        print(f"FAILED {name}", file=sys.stderr)
    if error:
        print(f"ERROR {error}", file=sys.stderr)
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="twofactor", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True)
    ap.add_argument("--task", choices=TASKS)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    return run(args.config, args.task, max(1, args.threads))
