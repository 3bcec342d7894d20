"""Monte-Carlo coverage experiments.

A replication draws an initial point, runs the main averaged-SGD path coupled
with ``B`` bootstrap replicas, and forms the Bootstrap, Cov and Oracle
intervals for ``a^T theta``.  Coverage is scored against the local minimum
nearest the final average (the *resolved* target) and, separately, against
the first listed minimum (the *fixed-sign* target).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import seeding
from .bootstrap import COV_MODES, MultiplierDistribution, aggregate_covariance, collect_projections
from .inference import METHODS, ConfidenceInterval, bootstrap_ci, cov_ci, oracle_ci
from .kernels import run_coupled
from .models import (
    GmmModel,
    QuadraticModel,
    gmm_oracle_covariance,
    load_dataset,
    logistic_find_optimum,
    logistic_generate_data,
    logistic_oracle_covariance,
    toeplitz_cov,
)
from .sgd_core import StepSchedule

log = logging.getLogger(__name__)

MODEL_KINDS = ("gmm", "logistic", "quadratic")

# Per-model experiment defaults (step scale/exponent, init box, dimension).
_MODEL_DEFAULTS = {
    "gmm": {"d": 5, "s": 3.0, "sigma2": 1.0, "sigma_xi2": 0.1},
    "logistic": {"d": 10, "M": 1000, "theta_s": None, "sigma_x": "identity", "rho": 0.5, "lam": 0.1, "dataset": None},
    "quadratic": {"d": 2, "hessian": None, "noise_cov": None, "center": None},
}
_RUN_DEFAULTS = {
    "gmm": {"C": 0.5, "alpha": 47 / 92, "init_side": 10.0, "N": 4000},
    "logistic": {"C": 1.0, "alpha": 47 / 92, "init_side": 4.0, "N": 8000},
    "quadratic": {"C": 0.5, "alpha": 0.6, "init_side": 2.0, "N": 2000},
}


@dataclass
class ExperimentConfig:
    model: dict = field(default_factory=lambda: {"kind": "gmm"})
    N: int | None = None
    B: int = 200
    m: int = 5
    C: float | None = None
    alpha: float | None = None
    MC: int = 100
    q: float = 0.05
    a: list | None = None
    weights: str = "uniform"
    r0: float = 1.0
    init_center: list | None = None
    init_side: float | None = None
    seed: int = 20240901
    cov_mode: str = "exact"
    oracle_n_mc: int = 1_000_000
    backend: str = "auto"

    def __post_init__(self):
        kind = self.model.get("kind", "gmm")
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
        self.model = {"kind": kind, **_MODEL_DEFAULTS[kind], **self.model}
        for key, val in _RUN_DEFAULTS[kind].items():
            if getattr(self, key) is None:
                setattr(self, key, val)
        for name in ("N", "B", "m", "MC"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.init_side > 0:
            raise ValueError("init_side must be positive")
        if self.weights not in ("uniform", "exp", "constant"):
            raise ValueError(f"unknown weight distribution {self.weights!r}")
        if self.cov_mode not in COV_MODES:
            raise ValueError(f"cov_mode must be one of {COV_MODES}")
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def kind(self) -> str:
        return self.model["kind"]

    @property
    def d(self) -> int:
        return int(self.model["d"])

    @property
    def schedule(self) -> StepSchedule:
        return StepSchedule(self.C, self.alpha)

    @property
    def dist(self) -> MultiplierDistribution:
        return MultiplierDistribution(self.weights)

    def functional(self) -> np.ndarray:
        if self.a is None:
            a = np.zeros(self.d)
            a[0] = 1.0
            return a
        a = np.asarray(self.a, dtype=float)
        if a.shape != (self.d,):
            raise ValueError(f"functional a has length {a.size}, model dimension is {self.d}")
        return a

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class Prepared:
    """Experiment-level objects shared by every replication."""

    model: object
    candidates: list
    oracle_sigma: np.ndarray
    init_center: np.ndarray
    a: np.ndarray


def _build_logistic(cfg: ExperimentConfig):
    spec = cfg.model
    if spec.get("dataset"):
        base = load_dataset(spec["dataset"]).with_lambda(spec["lam"])
    else:
        d = cfg.d
        theta_s = spec.get("theta_s")
        if theta_s is None:
            theta_s = np.zeros(d)
            theta_s[: min(2, d)] = 1.0
        if spec["sigma_x"] == "identity":
            Sigma_X = np.eye(d)
        elif spec["sigma_x"] == "toeplitz":
            Sigma_X = toeplitz_cov(d, spec["rho"])
        else:
            raise ValueError(f"unknown sigma_x {spec['sigma_x']!r}")
        rng = seeding.experiment_stream(cfg.seed, seeding.DESIGN)
        meta = {"sigma_x": spec["sigma_x"], "rho": spec["rho"], "seed": int(cfg.seed)}
        base = logistic_generate_data(d, int(spec["M"]), theta_s, Sigma_X, rng, spec["lam"], meta)
    theta_opt = logistic_find_optimum(base, base.meta.get("theta_s"))
    return base, theta_opt


def prepare(cfg: ExperimentConfig) -> Prepared:
    kind = cfg.kind
    spec = cfg.model
    if kind == "gmm":
        model = GmmModel.from_signal(cfg.d, spec["s"], spec["sigma2"], spec["sigma_xi2"])
        oracle = gmm_oracle_covariance(
            model, cfg.m, cfg.oracle_n_mc, seeding.experiment_stream(cfg.seed, seeding.ORACLE)
        )
        candidates = model.local_minima()
        default_center = np.zeros(cfg.d)
    elif kind == "logistic":
        model, theta_opt = _build_logistic(cfg)
        oracle = logistic_oracle_covariance(model, theta_opt, cfg.m)
        candidates = [theta_opt]
        default_center = theta_opt
    else:
        d = cfg.d
        H = np.eye(d) if spec["hessian"] is None else np.asarray(spec["hessian"], dtype=float)
        S = np.eye(d) if spec["noise_cov"] is None else np.asarray(spec["noise_cov"], dtype=float)
        model = QuadraticModel(H, spec["center"], S)
        oracle = model.oracle_covariance(cfg.m)
        candidates = model.local_minima()
        default_center = model.center
    center = default_center if cfg.init_center is None else np.asarray(cfg.init_center, dtype=float)
    return Prepared(model, candidates, oracle.sandwich, np.asarray(center, dtype=float), cfg.functional())


def resolve_target(theta_bar, candidates) -> np.ndarray:
    """Candidate minimum nearest ``theta_bar``; ties go to the earliest listed."""
    if len(candidates) == 0:
        raise ValueError("need at least one candidate minimum")
    theta_bar = np.asarray(theta_bar, dtype=float)
    dists = [float(np.linalg.norm(theta_bar - np.asarray(c, dtype=float))) for c in candidates]
    return np.asarray(candidates[int(np.argmin(dists))], dtype=float)


@dataclass
class ReplicationResult:
    replication: int
    intervals: dict
    target: float
    target_fixed: float
    covered: dict
    covered_fixed: dict
    accepted: int
    center: float

    @property
    def no_accept(self) -> bool:
        return self.accepted == 0


def draw_inputs(cfg: ExperimentConfig, prep: Prepared, k: int):
    """Initial point, mini-batches, weights and step sizes for replication ``k``."""
    init_rng = seeding.replication_stream(cfg.seed, k, seeding.INIT)
    theta0 = prep.init_center + cfg.init_side * (init_rng.random(cfg.d) - 0.5)
    data_rng = seeding.replication_stream(cfg.seed, k, seeding.DATA)
    batches = prep.model.sample_batches(data_rng, cfg.N, cfg.m)
    dist = cfg.dist
    streams = seeding.replica_weight_streams(cfg.seed, k, cfg.B)
    weights = np.empty((cfg.N, cfg.B))
    for b, rng in enumerate(streams):
        weights[:, b] = dist.sample_n(rng, cfg.N)
    return theta0, batches, weights, cfg.schedule.gammas(cfg.N)


def run_replication(cfg: ExperimentConfig, k: int, prep: Prepared | None = None) -> ReplicationResult:
    prep = prepare(cfg) if prep is None else prep
    theta0, batches, weights, gammas = draw_inputs(cfg, prep, k)
    main, ens = run_coupled(
        prep.model, theta0, batches, weights, gammas,
        track_sigma=cfg.cov_mode == "paper", backend=cfg.backend, dist=cfg.dist,
    )
    N, a, q = cfg.N, prep.a, cfg.q
    sigma, c = aggregate_covariance(ens, main, N, cfg.r0, cfg.cov_mode)
    intervals = {"Oracle": oracle_ci(a, main.theta_bar, prep.oracle_sigma, N, q)}
    if c > 0:
        intervals["Cov"] = cov_ci(a, main.theta_bar, sigma, N, q, accepted_count=c)
        proj = collect_projections(ens, main, a, N, cfg.r0)
        intervals["Bootstrap"] = bootstrap_ci(a, main.theta_bar, proj, N, q)
    else:
        intervals["Cov"] = intervals["Bootstrap"] = None
    target = float(a @ resolve_target(main.theta_bar, prep.candidates))
    target_fixed = float(a @ prep.candidates[0])
    covered = {m: (ci.contains(target) if ci is not None else None) for m, ci in intervals.items()}
    covered_fixed = {m: (ci.contains(target_fixed) if ci is not None else None) for m, ci in intervals.items()}
    return ReplicationResult(k, intervals, target, target_fixed, covered, covered_fixed, c, float(a @ main.theta_bar))


@dataclass
class CoverageReport:
    methods: dict
    MC: int
    no_accept_count: int
    accepted_mean: float
    accepted_min: int
    accepted_max: int
    config: dict
    wall_clock: float = 0.0

    @property
    def no_accept_rate(self) -> float:
        return self.no_accept_count / self.MC

    def coverage(self, method) -> float:
        return self.methods[method]["coverage"]

    def mean_width(self, method) -> float:
        return self.methods[method]["mean_width"]

    def to_dict(self):
        return {
            "methods": self.methods,
            "MC": self.MC,
            "no_accept_count": self.no_accept_count,
            "no_accept_rate": self.no_accept_rate,
            "accepted": {"mean": self.accepted_mean, "min": self.accepted_min, "max": self.accepted_max},
            "config": self.config,
            "wall_clock_seconds": self.wall_clock,
        }


def aggregate(results, cfg: ExperimentConfig, wall_clock=0.0) -> CoverageReport:
    """Order-independent reduction of replication results."""
    results = sorted(results, key=lambda r: r.replication)
    methods = {}
    for m in METHODS:
        cis = [r for r in results if r.intervals[m] is not None]
        n = len(cis)
        hits = sum(bool(r.covered[m]) for r in cis)
        hits_fixed = sum(bool(r.covered_fixed[m]) for r in cis)
        widths = np.array([r.intervals[m].width for r in cis])
        methods[m] = {
            "count": n,
            "covered": hits,
            "coverage": hits / n if n else math.nan,
            "coverage_fixed_sign": hits_fixed / n if n else math.nan,
            "mean_width": float(np.sort(widths).sum() / n) if n else math.nan,
        }
    acc = np.array([r.accepted for r in results])
    return CoverageReport(
        methods=methods,
        MC=len(results),
        no_accept_count=int(np.sum(acc == 0)),
        accepted_mean=float(acc.mean()),
        accepted_min=int(acc.min()),
        accepted_max=int(acc.max()),
        config=cfg.to_dict(),
        wall_clock=wall_clock,
    )


def write_outputs(report: CoverageReport, results, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, allow_nan=True)
    with open(os.path.join(out_dir, "intervals.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replication", "method", "lower", "upper", "target", "covered", "width", "accepted"])
        for r in sorted(results, key=lambda r: r.replication):
            for m in METHODS:
                ci: ConfidenceInterval | None = r.intervals[m]
                if ci is None:
                    w.writerow([r.replication, m, "", "", repr(r.target), "", "", r.accepted])
                else:
                    w.writerow([
                        r.replication, m, repr(ci.lower), repr(ci.upper), repr(r.target),
                        int(r.covered[m]), repr(ci.width), r.accepted,
                    ])


_worker_state = {}


def _worker_init(cfg_dict):
    cfg = ExperimentConfig.from_dict(cfg_dict)
    _worker_state["cfg"] = cfg
    _worker_state["prep"] = prepare(cfg)


def _worker_run(k):
    return run_replication(_worker_state["cfg"], k, _worker_state["prep"])


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers=1, progress=False):
    """Run ``cfg.MC`` replications and aggregate them.

    Replication ``k`` is fully determined by ``(cfg.seed, k)``, so the report
    does not depend on ``workers``.  Returns ``(CoverageReport, results)``.
    """
    t0 = time.perf_counter()
    ks = range(cfg.MC)
    if workers > 1:
        with ProcessPoolExecutor(workers, initializer=_worker_init, initargs=(cfg.to_dict(),)) as pool:
            results = list(pool.map(_worker_run, ks, chunksize=max(1, cfg.MC // (4 * workers))))
    else:
        prep = prepare(cfg)
        results = []
        for k in ks:
            results.append(run_replication(cfg, k, prep))
            if progress and (k + 1) % max(1, cfg.MC // 10) == 0:
                log.info("replication %d/%d", k + 1, cfg.MC)
    report = aggregate(results, cfg, time.perf_counter() - t0)
    if out_dir is not None:
        write_outputs(report, results, out_dir)
    return report, results


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw)
