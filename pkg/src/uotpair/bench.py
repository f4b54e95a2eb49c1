"""Simulation sweeps: sine-density benchmark, fine-grid oracle, risk CSV, rate table."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .exceptions import ConfigError, UOTError
from .kernel_estimator import KernelPluginEstimator, fit_kernel_pair
from .measures import (MassEstimate, SyntheticDensity, density_to_grid, sample_iid,
                       sample_ppp)
from .metrics import RiskReport, loglog_rate_fit, map_risk
from .plan_estimator import ClipBounds, PlanBasedEstimator, evaluate_pair
from .uot_core import SolverConfig

logger = logging.getLogger(__name__)

ESTIMATORS = ("pb_1nn", "pb_nw", "kernel_plugin")
CSV_COLUMNS = ["seed", "n", "d", "estimator", "mass_mode", "map_mse", "growth_mse",
               "status", "runtime_ms"]
# grid resolution used for the kernel plug-in when the config leaves it unset
DEFAULT_GRID_RESOLUTION = {1: 128, 2: 64, 3: 32, 4: 32}


@dataclass(frozen=True)
class KernelAnchor:
    L0: float = 14.0
    n0: int = 1000
    alpha: float = 2.0


@dataclass(frozen=True)
class ExperimentConfig:
    dim: int = 1
    n_list: tuple = (100, 200, 500, 1000)
    seeds: tuple = tuple(range(10))
    mass_mu: float = 1.0
    mass_nu: float = 2.5
    c_mu: float = 0.3
    c_nu: float = 0.7
    estimators: tuple = ("pb_1nn",)
    solver: SolverConfig = field(default_factory=SolverConfig)
    clip: ClipBounds = field(default_factory=ClipBounds)
    kernel_anchor: KernelAnchor = field(default_factory=KernelAnchor)
    grid_resolution: int | None = None
    oracle_resolution: int | None = None
    mass_mode: str = "known"
    nw_kernel: str = "gaussian"
    nw_bandwidth: float = 0.02
    oracle_eps_final: float = 1e-4

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("n_list", tuple(int(n) for n in self.n_list))
        seeds = range(self.seeds) if isinstance(self.seeds, int) else self.seeds
        set_("seeds", tuple(int(s) for s in seeds))
        set_("estimators", tuple(self.estimators))
        if int(self.dim) < 1:
            raise ConfigError("dim must be >= 1")
        if not self.n_list or list(self.n_list) != sorted(set(self.n_list)) or self.n_list[0] < 1:
            raise ConfigError("n_list must be a nonempty strictly ascending list of positive sizes")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if not (self.mass_mu > 0 and self.mass_nu > 0):
            raise ConfigError("masses must be positive")
        for c in (self.c_mu, self.c_nu):
            if not 0 < c < 1:
                raise ConfigError("sine shifts must lie in (0, 1)")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad or not self.estimators:
            raise ConfigError(f"unknown estimators {bad}; choose from {ESTIMATORS}")
        if self.mass_mode not in ("known", "poisson"):
            raise ConfigError("mass_mode must be 'known' or 'poisson'")
        R = self.grid_resolution or DEFAULT_GRID_RESOLUTION.get(int(self.dim), 32)
        set_("grid_resolution", int(R))
        set_("oracle_resolution", int(self.oracle_resolution or 2 * R))
        if self.oracle_resolution < 2 * self.grid_resolution:
            raise ConfigError("oracle_resolution must be at least twice grid_resolution")

    # -- serialization -----------------------------------------------------
    @classmethod
    def from_dict(cls, raw):
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kw = dict(raw)
        try:
            if "solver" in kw:
                kw["solver"] = SolverConfig(**kw["solver"])
            if "clip" in kw:
                kw["clip"] = ClipBounds(**kw["clip"])
            if "kernel_anchor" in kw:
                anchor = kw["kernel_anchor"]
                kw["kernel_anchor"] = (KernelAnchor(*anchor) if isinstance(anchor, (list, tuple))
                                       else KernelAnchor(**anchor))
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self):
        out = asdict(self)
        for k in ("n_list", "seeds", "estimators"):
            out[k] = list(out[k])
        return out

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def mu_density(self):
        return SyntheticDensity.sine_shift(self.c_mu, self.dim)

    @property
    def nu_density(self):
        return SyntheticDensity.sine_shift(self.c_nu, self.dim)


def oracle_from_densities(mu_density, nu_density, mass_mu, mass_nu, resolution,
                          solver=None, clip=None, eps_final=1e-4):
    """Plug-in pair on exact grid discretizations of two analytic densities.

    Returns ``(pair, mu_grid)``.  The solver's ``eps_final`` is lowered to
    ``eps_final`` and its per-level budget raised to at least 20000 iterations.
    """
    solver = solver or SolverConfig()
    mu = density_to_grid(mu_density, mass_mu, resolution)
    nu = density_to_grid(nu_density, mass_nu, resolution)
    solver = solver.replace(eps_final=min(eps_final, solver.eps_final),
                            max_iters_per_eps=max(solver.max_iters_per_eps, 20_000))
    return fit_kernel_pair(mu, nu, solver, clip), mu


def compute_oracle(config, resolution=None):
    """Fine-grid plug-in pair on the exact densities; used as ground truth for risks."""
    return oracle_from_densities(config.mu_density, config.nu_density, config.mass_mu,
                                 config.mass_nu, int(resolution or config.oracle_resolution),
                                 config.solver, config.clip, config.oracle_eps_final)


def _draw(config, density, mass, n, seed, side):
    """One sample plus its mass estimate; streams are keyed by (seed, n, side)."""
    ss = np.random.SeedSequence([int(seed), int(n), side])
    if config.mass_mode == "known":
        return sample_iid(density, n, ss), MassEstimate.known(mass)
    # exposure n / mass makes the expected count n while the estimate stays count / exposure
    return sample_ppp(density, mass, ss, exposure=n / mass)


def build_estimator(name, config, n):
    if name == "pb_1nn":
        return PlanBasedEstimator("1nn", w_minus=config.clip.w_minus,
                                  w_plus=config.clip.w_plus, solver=config.solver)
    if name == "pb_nw":
        return PlanBasedEstimator("nw", kernel=config.nw_kernel, bandwidth=config.nw_bandwidth,
                                  w_minus=config.clip.w_minus, w_plus=config.clip.w_plus,
                                  solver=config.solver)
    anchor = config.kernel_anchor
    return KernelPluginEstimator(L=None, L0=anchor.L0, n0=anchor.n0, alpha=anchor.alpha,
                                 resolution=config.grid_resolution, w_minus=config.clip.w_minus,
                                 w_plus=config.clip.w_plus, solver=config.solver)


def run_cells(config, oracle=None, progress=None):
    """Evaluate every (seed, n, estimator) cell; returns rows in that sort order."""
    if oracle is None:
        oracle = compute_oracle(config)
    pair0, mu_grid = oracle
    ref = evaluate_pair(pair0, mu_grid.centers())
    rows = []
    for seed in config.seeds:
        for n in config.n_list:
            X, mx = _draw(config, config.mu_density, config.mass_mu, n, seed, 0)
            Y, my = _draw(config, config.nu_density, config.mass_nu, n, seed, 1)
            for name in sorted(config.estimators):
                t0 = time.perf_counter()
                status = "ok"
                try:
                    est = build_estimator(name, config, n).fit(X, Y, mx, my)
                    report = RiskReport(*map_risk(est.pair_, pair0, mu_grid, ref), n, name, seed)
                except UOTError as exc:
                    logger.warning("cell seed=%s n=%s %s failed: %s", seed, n, name, exc)
                    status = "failed"
                    report = RiskReport(float("nan"), float("nan"), n, name, seed)
                runtime = (time.perf_counter() - t0) * 1e3
                rows.append({"seed": seed, "n": n, "d": config.dim, "estimator": name,
                             "mass_mode": config.mass_mode, "map_mse": report.map_mse,
                             "growth_mse": report.growth_mse, "status": status,
                             "runtime_ms": runtime})
                if progress:
                    progress(rows[-1])
    return rows


def format_csv(config, rows, record_runtime=True, timestamp=None):
    buf = io.StringIO()
    stamp = timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    buf.write(f"# generated {stamp}\n")
    buf.write(f"# uotpair {__version__} config_hash={config.digest()} "
              f"oracle_resolution={config.oracle_resolution} risk_measure=analytic_mu\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r["seed"], r["n"], r["d"], r["estimator"], r["mass_mode"],
                    "" if np.isnan(r["map_mse"]) else repr(r["map_mse"]),
                    "" if np.isnan(r["growth_mse"]) else repr(r["growth_mse"]),
                    r["status"],
                    f"{r['runtime_ms']:.1f}" if record_runtime else ""])
    return buf.getvalue()


def run_benchmark(config, out_path=None, record_runtime=True, oracle=None, progress=None):
    """Run the sweep and write the benchmark CSV; returns the rows.

    With ``record_runtime=False`` the ``runtime_ms`` column is left empty so
    reruns are byte-identical apart from the timestamp line.
    """
    rows = run_cells(config, oracle, progress)
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            fh.write(format_csv(config, rows, record_runtime))
    return rows


def tune_kernel_anchor(config, candidates=(4.0, 6.0, 8.0, 11.0, 14.0, 20.0), seeds=(1000, 1001, 1002),
                       oracle=None):
    """Pick the anchor ``L0`` at ``n0`` minimizing the seed-mean oracle map risk.

    Tuning seeds are disjoint from the default sweep seeds.  Returns
    ``(best_anchor, {L0: mean map_mse})``.
    """
    if oracle is None:
        oracle = compute_oracle(config)
    n0 = config.kernel_anchor.n0
    scores = {}
    for L0 in candidates:
        anchor = KernelAnchor(float(L0), n0, config.kernel_anchor.alpha)
        trial = replace(config, estimators=("kernel_plugin",), n_list=(n0,), seeds=tuple(seeds),
                        kernel_anchor=anchor)
        means = seed_means(run_cells(trial, oracle), "kernel_plugin")
        scores[float(L0)] = means.get(n0, float("inf"))
    best = min(scores, key=lambda k: (scores[k], k))
    return KernelAnchor(best, n0, config.kernel_anchor.alpha), scores


def read_benchmark(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = []
    for r in csv.DictReader(lines):
        rows.append({
            "seed": int(r["seed"]), "n": int(r["n"]), "d": int(r["d"]),
            "estimator": r["estimator"], "mass_mode": r["mass_mode"],
            "map_mse": float(r["map_mse"]) if r["map_mse"] else float("nan"),
            "growth_mse": float(r["growth_mse"]) if r["growth_mse"] else float("nan"),
            "status": r["status"],
            "runtime_ms": float(r["runtime_ms"]) if r.get("runtime_ms") else float("nan"),
        })
    return rows


def seed_means(rows, estimator, target="map_mse"):
    """``{n: mean over successful seeds}`` for one estimator."""
    by_n = {}
    for r in rows:
        if r["estimator"] == estimator and r["status"] == "ok":
            by_n.setdefault(r["n"], []).append(r[target])
    return {n: float(np.mean(v)) for n, v in sorted(by_n.items())}


def report_rates(rows):
    """Per-estimator log-log slopes of the seed-averaged risks.

    ``rows`` may be a path to a benchmark CSV or already-parsed rows.  An
    estimator with fewer than two sample sizes gets NaN entries and an
    ``error`` field instead of aborting the table.
    """
    if isinstance(rows, (str, bytes)) or hasattr(rows, "__fspath__"):
        rows = read_benchmark(rows)
    table = []
    for name in sorted({r["estimator"] for r in rows}):
        entry = {"estimator": name}
        for target in ("map_mse", "growth_mse"):
            means = seed_means(rows, name, target)
            key = target.split("_")[0]
            try:
                slope, intercept, stderr = loglog_rate_fit(list(means.items()))
                entry.update({f"{key}_slope": slope, f"{key}_intercept": intercept,
                              f"{key}_stderr": stderr})
            except UOTError as exc:
                entry.update({f"{key}_slope": float("nan"), f"{key}_intercept": float("nan"),
                              f"{key}_stderr": float("nan"), "error": str(exc)})
        table.append(entry)
    return table
