"""Experiment specifications and runners.

Each runner returns a ``SummaryTable`` in long format.  Replication r
draws its data, plans and subsamples from ``seed ^ r`` so results do not
depend on how replications are scheduled across workers.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .. import rng as rngmod
from ..data import DataSet, SimConfig, generate_dataset, ingest_csv, make_batch_plan
from ..errors import InvalidInput
from ..linalg import sym_eigen
from ..optimizer import GdmConfig, estimation_error, ols, run_mgdm
from ..spectral import Status, TuningMode, check_convergence, optimal_tuning
from ..stability import d_gamma_closed, stable_for_partition

KINDS = ("converge", "stable-ee", "dgamma", "compare", "tune", "ingest")
DESK_REPS = 25
FULL_REPS = 100


@dataclass
class ExperimentSpec:
    kind: str
    sim: SimConfig = field(default_factory=lambda: SimConfig(N=5000, p=50))
    grid: list = field(default_factory=list)
    replications: int = DESK_REPS
    epochs: int = 30
    batch_size: int = 500
    kappas: list = field(default_factory=lambda: [1.0])
    seed: int = 0
    out_dir: Optional[str] = None
    ingest: Optional[dict] = None
    workers: int = 1

    def validate(self):
        if self.kind not in KINDS:
            raise InvalidInput(f"unknown experiment kind {self.kind!r}")
        if int(self.replications) != self.replications or self.replications < 1:
            raise InvalidInput("replications must be a positive integer")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise InvalidInput("epochs must be a positive integer")
        if self.batch_size < 1:
            raise InvalidInput("batch_size must be positive")
        if self.workers < 1:
            raise InvalidInput("workers must be positive")
        if not 0 <= int(self.seed) <= rngmod.MASK64:
            raise InvalidInput("seed must be an unsigned 64-bit integer")
        for pt in self.grid:
            vals = pt if isinstance(pt, (list, tuple)) else [pt]
            if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in vals):
                raise InvalidInput(f"grid point {pt!r} is not finite")
        if self.kind in ("stable-ee", "compare"):
            if not self.grid or not all(isinstance(pt, (list, tuple)) and len(pt) == 2 for pt in self.grid):
                raise InvalidInput(f"{self.kind} needs a grid of [alpha, gamma] pairs")
        if self.kind == "dgamma" and not self.grid:
            raise InvalidInput("dgamma needs a gamma grid")
        if self.kind in ("converge", "tune") and not self.kappas:
            raise InvalidInput(f"{self.kind} needs a kappa list")
        if self.kind == "ingest":
            if not self.ingest or not {"path", "schema", "response"} <= set(self.ingest):
                raise InvalidInput("ingest needs path, schema and response")
        else:
            self.sim.validate()
            if self.kind != "tune" and self.sim.N % self.batch_size:
                raise InvalidInput(f"N={self.sim.N} is not divisible by batch_size={self.batch_size}")
        return self

    def to_dict(self):
        d = asdict(self)
        d["sim"] = asdict(self.sim)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInput(f"unknown spec fields: {sorted(unknown)}")
        if "kind" not in d:
            raise InvalidInput("spec needs a kind")
        sim = d.get("sim")
        if isinstance(sim, dict):
            try:
                d["sim"] = SimConfig(**sim)
            except TypeError as e:
                raise InvalidInput(f"bad sim block: {e}") from None
        return cls(**d)


@dataclass(frozen=True)
class Row:
    kind: str
    method: str
    param: str
    index: int
    stat: str
    value: float


@dataclass(frozen=True)
class ReplicationResult:
    index: int
    seed: int
    series: dict  # method/grid key -> metric array
    diverged: dict  # same keys -> bool


@dataclass
class SummaryTable:
    kind: str
    rows: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # (param, verdict, condition)
    diverged: dict = field(default_factory=dict)  # series key -> count of excluded runs
    replication_seeds: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def add(self, method, param, index, stat, value):
        self.rows.append(Row(self.kind, method, param, int(index), stat, float(value)))

    def __len__(self):
        return len(self.rows)

    def select(self, method=None, param=None, stat=None):
        return [r for r in self.rows
                if (method is None or r.method == method)
                and (param is None or r.param == param)
                and (stat is None or r.stat == stat)]


def fmt(x):
    return format(float(x), "g")


def ag_param(alpha, gamma):
    return f"alpha={fmt(alpha)};gamma={fmt(gamma)}"


def _replicate(spec, fn):
    """Run ``fn(index, seed)`` for every replication; results in index order."""
    seeds = [rngmod.replication_seed(spec.seed, r) for r in range(spec.replications)]
    if spec.workers > 1:
        with ThreadPoolExecutor(spec.workers) as ex:
            results = list(ex.map(fn, range(spec.replications), seeds))
    else:
        results = [fn(r, s) for r, s in zip(range(spec.replications), seeds)]
    return seeds, results


def _sim(spec, seed, kappa=None):
    cfg = spec.sim
    return SimConfig(N=cfg.N, p=cfg.p, kappa=cfg.kappa if kappa is None else kappa,
                     sigma=cfg.sigma, seed=seed, theta0=cfg.theta0)


def _median_excluding(values, flags):
    ok = [v for v, bad in zip(values, flags) if not bad]
    return float(np.median(ok)) if ok else float("nan")


# --------------------------------------------------------------------------

def converge_methods(kappa, p):
    """(name, alpha, gamma) of the two tuned runs for a given kappa."""
    lam1, lamp = kappa * p + 1.0, 1.0
    gd = optimal_tuning(lam1, lamp, TuningMode.GD_ONLY)
    gdm = optimal_tuning(lam1, lamp, TuningMode.GLOBAL)
    return [("FMGD", gd.alpha, gd.gamma, gd.rho), ("FMGDM", gdm.alpha, gdm.gamma, gdm.rho)]


def run_converge(spec):
    table = SummaryTable("converge")
    n, T = spec.batch_size, spec.epochs

    def one(r, seed):
        series, div = {}, {}
        for kappa in spec.kappas:
            ds = generate_dataset(_sim(spec, seed, kappa))
            plan = make_batch_plan(ds.N, n, "fixed", T, seed)
            for name, a, g, _ in converge_methods(kappa, ds.p):
                ref = stable_for_partition(ds, plan.epoch(0), a, g).last
                tr = run_mgdm(ds, plan, GdmConfig(a, g, T), reference=ref)
                series[(name, kappa)] = tr.deltas
                div[(name, kappa)] = tr.diverged
        return ReplicationResult(r, seed, series, div)

    seeds, reps = _replicate(spec, one)
    table.replication_seeds = seeds
    for name in ("FMGD", "FMGDM"):
        for kappa in spec.kappas:
            key = (name, kappa)
            flags = [rr.diverged[key] for rr in reps]
            table.diverged[f"{name};kappa={fmt(kappa)}"] = int(sum(flags))
            D = np.array([rr.series[key] for rr in reps])
            for t in range(T):
                table.add(name, f"kappa={fmt(kappa)}", t + 1, "median_delta",
                          _median_excluding(D[:, t], flags))
    for kappa in spec.kappas:
        for name, a, g, rho in converge_methods(kappa, spec.sim.p):
            table.notes[f"{name};kappa={fmt(kappa)}"] = {"alpha": a, "gamma": g, "rho": rho}
    return table


def run_stable_ee(spec):
    table = SummaryTable("stable-ee")
    lam1 = spec.sim.population_extremes()[0]
    points = []
    for a, g in spec.grid:
        if a <= 0 or g < 0:
            table.skipped.append({"param": ag_param(a, g), "verdict": "invalid",
                                  "condition": "need alpha>0 and gamma>=0"})
            continue
        if g == 1:
            # no unique stable solution, whatever the iteration verdict says
            table.skipped.append({"param": ag_param(a, g), "verdict": Status.BOUNDARY.value,
                                  "condition": "gamma==1"})
            continue
        v = check_convergence(a, g, lam1)
        # gamma > 1 diverges when iterated but the stable solution is still defined
        if v.status is Status.BOUNDARY:
            table.skipped.append({"param": ag_param(a, g), "verdict": v.status.value,
                                  "condition": v.condition})
        else:
            points.append((a, g))

    def one(r, seed):
        ds = generate_dataset(_sim(spec, seed))
        parts = make_batch_plan(ds.N, spec.batch_size, "fixed", 1, seed).epoch(0)
        out = {"OLS": estimation_error(ols(ds), ds.theta0)}
        for a, g in points:
            out[(a, g)] = estimation_error(stable_for_partition(ds, parts, a, g).last, ds.theta0)
        return ReplicationResult(r, seed, out, {})

    seeds, reps = _replicate(spec, one)
    table.replication_seeds = seeds
    for sk in table.skipped:
        table.add("stable", sk["param"], 0, "skipped", float("nan"))
    for a, g in points:
        for rr in reps:
            table.add("stable", ag_param(a, g), rr.index, "log_ee", math.log(rr.series[(a, g)]))
    for rr in reps:
        table.add("OLS", "-", rr.index, "log_ee", math.log(rr.series["OLS"]))
    return table


def run_dgamma(spec):
    table = SummaryTable("dgamma")
    M = spec.sim.N // spec.batch_size
    if M < 2:
        raise InvalidInput("dgamma needs at least two batches")
    for i, g in enumerate(spec.grid):
        if g == 1:
            table.skipped.append({"param": f"gamma={fmt(g)}", "verdict": Status.BOUNDARY.value,
                                  "condition": "gamma==1"})
            table.add("closed", f"gamma={fmt(g)}", i, "skipped", float("nan"))
            continue
        table.add("closed", f"gamma={fmt(g)}", i, "d_gamma", d_gamma_closed(M, g).value)
    table.notes["M"] = M
    return table


COMPARE_MODES = (("Fixed", "fixed"), ("Shuffled", "shuffled"), ("Random", "random"))


def run_compare(spec):
    table = SummaryTable("compare")
    T, n = spec.epochs, spec.batch_size
    lam1 = spec.sim.population_extremes()[0]
    points = []
    for a, g in spec.grid:
        v = check_convergence(a, g, lam1)
        if v.status is Status.BOUNDARY:
            table.skipped.append({"param": ag_param(a, g), "verdict": v.status.value,
                                  "condition": v.condition})
        else:
            points.append((a, g))

    def one(r, seed):
        ds = generate_dataset(_sim(spec, seed))
        series, div = {"OLS": estimation_error(ols(ds), ds.theta0)}, {"OLS": False}
        plans = {mode: make_batch_plan(ds.N, n, mode, T, seed) for _, mode in COMPARE_MODES}
        for a, g in points:
            for name, mode in COMPARE_MODES:
                tr = run_mgdm(ds, plans[mode], GdmConfig(a, g, T))
                key = (name, a, g)
                div[key] = tr.diverged
                series[key] = float("nan") if tr.diverged else estimation_error(tr.theta_final, ds.theta0)
        return ReplicationResult(r, seed, series, div)

    seeds, reps = _replicate(spec, one)
    table.replication_seeds = seeds
    for sk in table.skipped:
        table.add("-", sk["param"], 0, "skipped", float("nan"))
    for name, _ in COMPARE_MODES:
        for a, g in points:
            key = (name, a, g)
            flags = [rr.diverged[key] for rr in reps]
            vals = [rr.series[key] for rr in reps]
            table.diverged[f"{name};{ag_param(a, g)}"] = int(sum(flags))
            for rr in reps:
                table.add(name, ag_param(a, g), rr.index, "ee", rr.series[key])
            table.add(name, ag_param(a, g), -1, "median_ee", _median_excluding(vals, flags))
    ols_vals = [rr.series["OLS"] for rr in reps]
    for rr in reps:
        table.add("OLS", "-", rr.index, "ee", rr.series["OLS"])
    table.add("OLS", "-", -1, "median_ee", float(np.median(ols_vals)))
    return table


def run_tune(spec):
    table = SummaryTable("tune")
    p = spec.sim.p
    alphas = [pt for pt in spec.grid if not isinstance(pt, (list, tuple))]
    for kappa in spec.kappas:
        lam1, lamp = kappa * p + 1.0, 1.0
        param = f"kappa={fmt(kappa)}"
        reports = [optimal_tuning(lam1, lamp, m) for m in (TuningMode.GLOBAL, TuningMode.GD_ONLY)]
        for i, a in enumerate(alphas):
            if 0 < a < 1.0 / lam1:
                reports.append(optimal_tuning(lam1, lamp, TuningMode.SMALL_ALPHA, a))
            else:
                table.skipped.append({"param": f"{param};alpha={fmt(a)}", "verdict": "invalid",
                                      "condition": "small-alpha needs alpha < 1/lambda1"})
        for i, rep in enumerate(reports):
            for stat in ("alpha", "gamma", "rho"):
                table.add(rep.mode.value, param, i, stat, getattr(rep, stat))
    return table


def run_ingest(spec):
    """OLS on an ingested CSV, optionally compared with FMGDM on subsamples.

    Subsamples are ``ingest.subsamples`` independent draws of
    ``ingest.subsample_size`` distinct rows; different subsamples may
    overlap.  Each is fit by OLS and, when ``ingest.alpha`` is given (or
    ``ingest.tune`` is true), by FMGDM; EE is measured against the
    full-data OLS fit.
    """
    table = SummaryTable("ingest")
    cfg = spec.ingest
    ds = ingest_csv(cfg["path"], cfg["schema"], cfg["response"])
    theta = ols(ds)
    table.add("data", "-", 0, "N", ds.N)
    table.add("data", "-", 0, "p", ds.p)
    for j, name in enumerate(ds.columns):
        table.add("OLS", name, j, "coef", theta[j])

    R = int(cfg.get("subsamples", 0))
    if R <= 0:
        return table
    size = int(cfg.get("subsample_size", ds.N))
    n = int(cfg.get("batch_size", spec.batch_size))
    if not 0 < size <= ds.N or size % n:
        raise InvalidInput("subsample_size must be in (0, N] and divisible by batch_size")
    alpha, gamma = cfg.get("alpha"), cfg.get("gamma", 0.0)
    if alpha is None and cfg.get("tune"):
        spec_s = sym_eigen(ds.X.T @ ds.X / ds.N).eigenvalues
        rep = optimal_tuning(float(spec_s[0]), float(spec_s[-1]), TuningMode.GLOBAL)
        alpha, gamma = rep.alpha, rep.gamma
        table.notes["tuning"] = {"alpha": alpha, "gamma": gamma, "rho": rep.rho}

    def one(r, seed):
        idx = rngmod.stream(seed, rngmod.SUBSAMPLE).permutation(ds.N)[:size]
        sub = DataSet(X=ds.X[idx], y=ds.y[idx], columns=ds.columns)
        out = {"OLS": estimation_error(ols(sub), theta)}
        div = {"OLS": False}
        if alpha is not None:
            plan = make_batch_plan(size, n, "fixed", spec.epochs, seed)
            tr = run_mgdm(sub, plan, GdmConfig(alpha, gamma, spec.epochs))
            div["FMGDM"] = tr.diverged
            out["FMGDM"] = float("nan") if tr.diverged else estimation_error(tr.theta_final, theta)
        return ReplicationResult(r, seed, out, div)

    sub_spec = ExperimentSpec(kind="ingest", replications=R, seed=spec.seed, workers=spec.workers)
    seeds, reps = _replicate(sub_spec, one)
    table.replication_seeds = seeds
    table.notes["subsampling"] = "independent draws of distinct rows; subsamples may overlap"
    for method in ("OLS", "FMGDM") if alpha is not None else ("OLS",):
        for rr in reps:
            table.add(method, "subsample", rr.index, "ee", rr.series[method])
        table.diverged[method] = int(sum(rr.diverged[method] for rr in reps))
    return table


RUNNERS = {
    "converge": run_converge,
    "stable-ee": run_stable_ee,
    "dgamma": run_dgamma,
    "compare": run_compare,
    "tune": run_tune,
    "ingest": run_ingest,
}


def run_experiment(spec: ExperimentSpec) -> SummaryTable:
    spec.validate()
    return RUNNERS[spec.kind](spec)


def default_spec(kind, full_scale=False) -> ExperimentSpec:
    """Desk-scale defaults mirroring the simulation designs."""
    R = FULL_REPS if full_scale else DESK_REPS
    sim = SimConfig(N=5000, p=50, kappa=1.0, sigma=1.0)
    if kind == "converge":
        return ExperimentSpec(kind, sim=sim, replications=R, epochs=30, kappas=[1.0])
    if kind == "stable-ee":
        grid = [[a, 0.5] for a in (0.15, 0.1, 0.05, 0.01, 0.001)]
        grid += [[0.1, g] for g in (0, 0.5, 0.8, 1, 2, 5, 10)]
        return ExperimentSpec(kind, sim=sim, grid=grid, replications=R)
    if kind == "dgamma":
        grid = [0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.5, 2, 4, 6, 8, 10]
        return ExperimentSpec(kind, sim=sim, grid=grid, replications=1)
    if kind == "compare":
        return ExperimentSpec(kind, sim=sim, grid=[[0.01, 0.9]], replications=R, epochs=50)
    if kind == "tune":
        return ExperimentSpec(kind, sim=sim, replications=1, kappas=[0.1, 1.0, 5.0])
    if kind == "ingest":
        return ExperimentSpec(kind, sim=sim, replications=1)
    raise InvalidInput(f"unknown experiment kind {kind!r}")
