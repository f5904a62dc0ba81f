"""Monte Carlo convergence studies.

Every study is described by a :class:`Plan`: a set of discretisations
(mesh, step count, scheme) that are advanced in lockstep on the same Wiener
path, and a set of comparisons between pairs of them (or against the
manufactured solution).  Errors are accumulated on the fly so trajectories
never have to be stored.

Samples are processed in fixed blocks of ``block_size``; a block depends only
on ``(seed, sample indices)``, so tables are bit-identical whatever the
number of workers.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .assembly import Operators, assemble_operators
from .errors import (
    CrossMeshNorms,
    ErrorAccumulator,
    ErrorReport,
    ExactNorms,
    SameMeshNorms,
    SampleErrors,
    convergence_order,
)
from .femspace import build_mini_spaces
from .linsolve import Factorization
from .mesh import build_uniform_mesh
from .problem import benchmark_forcing, zero_forcing
from .stepper import EULER_MARUYAMA, MILSTEIN, StepDiagnostics, _step, make_factorization
from .stochastic import DEFAULT_FINE_STEPS, LinearNoise, coarse_increments, generate_paths

KINDS = ("time", "space", "det", "em", "single")
PRESSURE_ALIGNMENTS = {
    "pointwise": "reference pressure taken at the coarse time point t_n",
    "average": "reference pressures averaged over the sub-steps of each coarse step",
}

CSV_HEADER = [
    "resolution",
    "err_l2h1",
    "order_l2h1",
    "err_linfl2",
    "order_linfl2",
    "err_press",
    "order_press",
    "se_l2h1",
    "se_linfl2",
    "se_press",
]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str = "time"
    n: int = 40
    n_list: tuple[int, ...] = (8, 16, 32)
    M_list: tuple[int, ...] = (64, 128, 256, 512, 1024)
    M: int = 256
    samples: int = 300
    seed: int = 20240101
    alpha: float = 0.5
    nu: float = 1.0
    T: float = 1.0
    fine_steps: int = DEFAULT_FINE_STEPS
    reference_M: int = DEFAULT_FINE_STEPS
    scheme: str = MILSTEIN
    workers: int = 1
    block_size: int = 20
    check: bool = True
    pressure_alignment: str = "pointwise"
    out: str | None = None

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.samples < 1:
            raise ConfigError("sample count must be >= 1")
        if not (self.nu > 0 and self.T > 0):
            raise ConfigError("nu and T must be positive")
        if self.scheme not in (MILSTEIN, EULER_MARUYAMA):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.pressure_alignment not in PRESSURE_ALIGNMENTS:
            raise ConfigError(f"pressure_alignment must be one of {tuple(PRESSURE_ALIGNMENTS)}")
        if self.workers < 1 or self.block_size < 1:
            raise ConfigError("workers and block_size must be >= 1")
        steps = {
            "time": set(self.M_list) | {2 * m for m in self.M_list},
            "space": {self.M},
            "single": {self.M},
            "det": set(self.M_list) | {self.M, self.reference_M},
            "em": set(self.M_list) | {self.reference_M},
        }[self.kind]
        for m in steps:
            if m < 1 or self.fine_steps % m != 0:
                raise ConfigError(f"step count {m} does not divide the fine step count {self.fine_steps}")
        for n in (self.n, *self.n_list):
            if n < 1:
                raise ConfigError("mesh sizes must be positive")
        return self


DESK_PRESETS = {
    "time": dict(n=20, samples=100, M_list=(64, 128, 256, 512)),
    "space": dict(M=256, samples=50, n_list=(8, 16, 32)),
    "em": dict(n=16, samples=100, M_list=(256,)),
    "det": dict(n=64, M=1024, n_list=(8, 16, 32), M_list=(16, 32, 64, 128, 256)),
    "single": dict(n=16, M=256, samples=1),
}

FULL_PRESETS = {
    "time": dict(n=40, samples=300, M_list=(64, 128, 256, 512, 1024)),
    "space": dict(M=256, samples=300, n_list=(4, 8, 16, 32)),
    "em": dict(n=20, samples=100, M_list=(64, 128, 256, 512)),
    "det": dict(n=64, M=1024, n_list=(8, 16, 32), M_list=(16, 32, 64, 128, 256)),
    "single": dict(n=16, M=256, samples=1),
}


# --------------------------------------------------------------------------
# lockstep engine


@dataclass(frozen=True)
class RunSpec:
    n: int
    M: int
    scheme: str = MILSTEIN


@dataclass(frozen=True)
class CompareSpec:
    a: int
    b: int | None  # None: compare against the manufactured solution


@dataclass(frozen=True)
class Plan:
    runs: tuple[RunSpec, ...]
    comparisons: tuple[CompareSpec, ...]
    alpha: float
    nu: float
    T: float
    fine_steps: int
    forcing: bool = True
    check: bool = True
    pressure_alignment: str = "pointwise"

    def __post_init__(self):
        for c in self.comparisons:
            if c.b is not None:
                ra, rb = self.runs[c.a], self.runs[c.b]
                if rb.M % ra.M or rb.n % ra.n:
                    raise ValueError("the reference run must be nested in the compared run")


@lru_cache(maxsize=None)
def _operators(n: int, forcing: bool) -> Operators:
    spaces = build_mini_spaces(build_uniform_mesh(n))
    return assemble_operators(spaces, benchmark_forcing() if forcing else zero_forcing())


@lru_cache(maxsize=None)
def _factorization(n: int, forcing: bool, nu: float, k: float) -> Factorization:
    return make_factorization(_operators(n, forcing), nu, k)


@lru_cache(maxsize=None)
def _pair_norms(na: int, nb: int, forcing: bool):
    if na == nb:
        return SameMeshNorms.from_operators(_operators(na, forcing))
    return CrossMeshNorms(_operators(na, forcing).spaces, _operators(nb, forcing).spaces)


@lru_cache(maxsize=None)
def _exact_norms(n: int, forcing: bool):
    return ExactNorms(_operators(n, forcing).spaces)


def simulate_block(plan: Plan, seed: int, samples: tuple[int, ...]):
    """Run every discretisation of ``plan`` for the given samples.

    Returns per-comparison :class:`SampleErrors` and merged diagnostics.
    """
    fine = generate_paths(seed, samples, plan.fine_steps, plan.T)
    J = len(samples)
    model = LinearNoise(plan.alpha)
    M_max = max(r.M for r in plan.runs)
    if plan.fine_steps % M_max:
        raise ValueError("all step counts must divide the fine step count")

    state = []
    for r in plan.runs:
        ops = _operators(r.n, plan.forcing)
        k = plan.T / r.M
        state.append(
            dict(
                ops=ops,
                fact=_factorization(r.n, plan.forcing, plan.nu, k),
                k=k,
                ratio=M_max // r.M,
                inc=coarse_increments(fine, r.M),
                u=np.zeros((ops.spaces.n_vel_dofs, J)),
                p=None,
                n=0,
                milstein=r.scheme == MILSTEIN,
            )
        )
    accs = [ErrorAccumulator(plan.T / plan.runs[c.a].M, (J,)) for c in plan.comparisons]
    buffers: list[list[np.ndarray]] = [[] for _ in plan.comparisons]
    norms = [
        _pair_norms(plan.runs[c.a].n, plan.runs[c.b].n, plan.forcing) if c.b is not None
        else _exact_norms(plan.runs[c.a].n, plan.forcing)
        for c in plan.comparisons
    ]
    diag = StepDiagnostics() if plan.check else None

    for m in range(1, M_max + 1):
        advanced = []
        for s in state:
            if m % s["ratio"]:
                advanced.append(False)
                continue
            i = s["n"]
            s["u"], s["p"] = _step(
                s["u"], s["inc"][i], s["ops"], s["fact"], (i + 1) * s["k"], model,
                s["milstein"], plan.forcing, diag,
            )
            s["n"] = i + 1
            advanced.append(True)
        for ci, c in enumerate(plan.comparisons):
            sa = state[c.a]
            if c.b is None:
                if advanced[c.a]:
                    accs[ci].add(*norms[ci](sa["u"], sa["p"], sa["n"] * sa["k"], sa["k"]))
                continue
            sb = state[c.b]
            if advanced[c.b]:
                buffers[ci].append(sb["p"])
            if advanced[c.a]:
                if plan.pressure_alignment == "pointwise" or len(buffers[ci]) == 1:
                    pb = buffers[ci][-1]
                else:
                    pb = np.mean(np.stack(buffers[ci]), axis=0)
                buffers[ci] = []
                accs[ci].add(*norms[ci](sa["u"], sa["p"], sb["u"], pb))
    return [a.samples() for a in accs], diag or StepDiagnostics()


def _blocks(J: int, size: int):
    return [tuple(range(s, min(s + size, J))) for s in range(0, J, size)]


def run_plan(plan: Plan, seed: int, J: int, block_size: int = 20, workers: int = 1):
    """Run all samples; aggregation order is by sample index regardless of workers."""
    blocks = _blocks(J, block_size)
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(simulate_block, [plan] * len(blocks), [seed] * len(blocks), blocks))
    else:
        results = [simulate_block(plan, seed, b) for b in blocks]
    per_cmp = [SampleErrors.concatenate(r[0][i] for r in results) for i in range(len(plan.comparisons))]
    diag = StepDiagnostics()
    for _, d in results:
        diag.merge(d)
    return per_cmp, diag


# --------------------------------------------------------------------------
# tables


@dataclass
class TableRow:
    resolution: float
    report: ErrorReport
    orders: tuple[float | None, float | None, float | None] = (None, None, None)


@dataclass
class ConvergenceTable:
    rows: list[TableRow] = field(default_factory=list)
    resolution_name: str = "k"
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_reports(cls, resolutions, reports, resolution_name="k", meta=None) -> "ConvergenceTable":
        rows = []
        for i, (res, rep) in enumerate(zip(resolutions, reports)):
            orders = (None, None, None)
            if i > 0:
                prev = rows[-1].report
                orders = tuple(
                    _safe_order(a, b) for a, b in zip(prev.triple(), rep.triple())
                )
            rows.append(TableRow(float(res), rep, orders))
        return cls(rows, resolution_name, dict(meta or {}))

    def errors(self, which: str) -> list[float]:
        idx = {"l2h1": 0, "linfl2": 1, "press": 2}[which]
        return [r.report.triple()[idx] for r in self.rows]

    def orders(self, which: str) -> list[float]:
        idx = {"l2h1": 0, "linfl2": 1, "press": 2}[which]
        return [r.orders[idx] for r in self.rows[1:]]


def _safe_order(a: float, b: float) -> float | None:
    try:
        return convergence_order(a, b)
    except ValueError:
        return None


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def table_rows(table: ConvergenceTable) -> list[list[str]]:
    out = []
    for r in table.rows:
        rep = r.report
        out.append(
            [
                _fmt(r.resolution),
                _fmt(rep.err_L2H1), _fmt(r.orders[0]),
                _fmt(rep.err_LinfL2), _fmt(r.orders[1]),
                _fmt(rep.err_pressL1L2), _fmt(r.orders[2]),
                _fmt(rep.se_L2H1), _fmt(rep.se_LinfL2), _fmt(rep.se_pressL1L2),
            ]
        )
    return out


def write_table(table: ConvergenceTable, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(table_rows(table))


def emit_csv(table: ConvergenceTable, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        write_table(table, fh)
    return path


def emit_plot_data(table: ConvergenceTable, path) -> Path:
    """log2-log2 points (resolution vs. each error) for external plotting."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["resolution", "log2_resolution", "log2_err_l2h1", "log2_err_linfl2", "log2_err_press"])
        for r in table.rows:
            errs = r.report.triple()
            w.writerow(
                [_fmt(r.resolution), _fmt(math.log2(r.resolution))]
                + [_fmt(math.log2(e)) if e > 0 else "" for e in errs]
            )
    return path


def emit_meta(meta: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o))


def _base_meta(cfg: ExperimentConfig, diag: StepDiagnostics | None) -> dict:
    meta = {
        "package_version": __version__,
        "config": {k: v for k, v in asdict(cfg).items() if k != "out"},
        "prng": "numpy Philox4x64-10 keyed by (seed, sample) + Box-Muller",
        "pressure_alignment": PRESSURE_ALIGNMENTS[cfg.pressure_alignment],
        "aggregation": "root-mean-square over samples for velocity norms, mean for pressure",
    }
    if diag is not None:
        meta["diagnostics"] = diag.as_dict()
    return meta


# --------------------------------------------------------------------------
# studies


def run_time_convergence(cfg: ExperimentConfig) -> ConvergenceTable:
    """Fixed mesh, step sizes ``T/M`` for ``M`` in ``M_list``, each compared
    with the same-path solution at half the step."""
    cfg.validate()
    Ms = sorted(set(cfg.M_list))
    levels = sorted(set(Ms) | {2 * m for m in Ms})
    runs = tuple(RunSpec(cfg.n, m, cfg.scheme) for m in levels)
    cmps = tuple(CompareSpec(levels.index(m), levels.index(2 * m)) for m in Ms)
    plan = Plan(runs, cmps, cfg.alpha, cfg.nu, cfg.T, cfg.fine_steps, True, cfg.check, cfg.pressure_alignment)
    per_cmp, diag = run_plan(plan, cfg.seed, cfg.samples, cfg.block_size, cfg.workers)
    meta = _base_meta(cfg, diag)
    meta["reference"] = "same path, half step"
    return ConvergenceTable.from_reports(
        [cfg.T / m for m in Ms], [s.report() for s in per_cmp], "k", meta
    )


def run_space_convergence(cfg: ExperimentConfig) -> ConvergenceTable:
    """Fixed step, meshes ``1/n`` for ``n`` in ``n_list``, each compared with
    the same-path solution on the uniformly refined mesh."""
    cfg.validate()
    ns = sorted(set(cfg.n_list))
    levels = sorted(set(ns) | {2 * n for n in ns})
    runs = tuple(RunSpec(n, cfg.M, cfg.scheme) for n in levels)
    cmps = tuple(CompareSpec(levels.index(n), levels.index(2 * n)) for n in ns)
    plan = Plan(runs, cmps, cfg.alpha, cfg.nu, cfg.T, cfg.fine_steps, True, cfg.check, cfg.pressure_alignment)
    per_cmp, diag = run_plan(plan, cfg.seed, cfg.samples, cfg.block_size, cfg.workers)
    meta = _base_meta(cfg, diag)
    meta["reference"] = "same path, refined mesh h/2"
    return ConvergenceTable.from_reports([1.0 / n for n in ns], [s.report() for s in per_cmp], "h", meta)


@dataclass
class DeterministicStudy:
    spatial: ConvergenceTable
    temporal: ConvergenceTable
    temporal_floor: ErrorReport
    temporal_corrected: ConvergenceTable


def subtract_floor(table: ConvergenceTable, floor: ErrorReport) -> ConvergenceTable:
    """Errors minus a measured floor, with orders recomputed."""
    reports = []
    for r in table.rows:
        rep = r.report
        reports.append(
            replace(
                rep,
                err_L2H1=rep.err_L2H1 - floor.err_L2H1,
                err_LinfL2=rep.err_LinfL2 - floor.err_LinfL2,
                err_pressL1L2=rep.err_pressL1L2 - floor.err_pressL1L2,
            )
        )
    meta = dict(table.meta, floor={"l2h1": floor.err_L2H1, "linfl2": floor.err_LinfL2, "press": floor.err_pressL1L2})
    return ConvergenceTable.from_reports([r.resolution for r in table.rows], reports, table.resolution_name, meta)


def run_deterministic_study(cfg: ExperimentConfig) -> DeterministicStudy:
    """Errors against the manufactured solution with the noise switched off.

    Spatial study: meshes ``n_list`` at ``M`` steps.  Temporal study: step
    counts ``M_list`` on mesh ``n``; its spatial floor is measured with
    ``reference_M`` steps on the same mesh and subtracted.
    """
    if cfg.alpha != 0:
        raise ConfigError("the deterministic study requires alpha = 0")
    cfg.validate()
    ns = sorted(set(cfg.n_list))
    plan = Plan(
        tuple(RunSpec(n, cfg.M) for n in ns),
        tuple(CompareSpec(i, None) for i in range(len(ns))),
        0.0, cfg.nu, cfg.T, cfg.fine_steps, True, cfg.check,
    )
    sp_errs, d1 = run_plan(plan, cfg.seed, 1)
    Ms = sorted(set(cfg.M_list))
    tplan = Plan(
        tuple(RunSpec(cfg.n, m) for m in Ms + [cfg.reference_M]),
        tuple(CompareSpec(i, None) for i in range(len(Ms) + 1)),
        0.0, cfg.nu, cfg.T, cfg.fine_steps, True, cfg.check,
    )
    t_errs, d2 = run_plan(tplan, cfg.seed, 1)
    d1.merge(d2)
    meta = _base_meta(cfg, d1)
    meta["reference"] = "manufactured solution (degree-10 quadrature)"
    spatial = ConvergenceTable.from_reports([1.0 / n for n in ns], [s.report() for s in sp_errs], "h", meta)
    temporal = ConvergenceTable.from_reports(
        [cfg.T / m for m in Ms], [s.report() for s in t_errs[:-1]], "k", meta
    )
    floor = t_errs[-1].report()
    return DeterministicStudy(spatial, temporal, floor, subtract_floor(temporal, floor))


@dataclass
class PairedRow:
    resolution: float
    milstein: ErrorReport
    euler_maruyama: ErrorReport
    t_statistic: float
    p_value: float

    @property
    def ratios(self) -> tuple[float, float, float]:
        return tuple(
            e / m if m > 0 else float("nan")
            for e, m in zip(self.euler_maruyama.triple(), self.milstein.triple())
        )


@dataclass
class PairedTable:
    rows: list[PairedRow]
    meta: dict = field(default_factory=dict)


PAIRED_HEADER = [
    "resolution",
    "mil_err_l2h1", "mil_err_linfl2", "mil_err_press",
    "em_err_l2h1", "em_err_linfl2", "em_err_press",
    "ratio_l2h1", "ratio_linfl2", "ratio_press",
    "paired_t_l2h1", "paired_p_l2h1",
]


def paired_test(milstein: SampleErrors, em: SampleErrors) -> tuple[float, float]:
    """One-sided paired t-test that the per-sample Milstein velocity error
    (``L2_t H1_x``) is smaller than the Euler-Maruyama one."""
    a = np.sqrt(em.l2_h1_sq)
    b = np.sqrt(milstein.l2_h1_sq)
    if a.shape[0] < 2 or np.all(a == b):
        return float("nan"), float("nan")
    res = stats.ttest_rel(a, b, alternative="greater")
    return float(res.statistic), float(res.pvalue)


def run_em_comparison(cfg: ExperimentConfig) -> PairedTable:
    """Milstein and Euler-Maruyama at each step count in ``M_list`` against
    a same-path Milstein reference with ``reference_M`` steps."""
    cfg.validate()
    Ms = sorted(set(cfg.M_list))
    runs = [RunSpec(cfg.n, cfg.reference_M, MILSTEIN)]
    cmps = []
    for m in Ms:
        runs += [RunSpec(cfg.n, m, MILSTEIN), RunSpec(cfg.n, m, EULER_MARUYAMA)]
        cmps += [CompareSpec(len(runs) - 2, 0), CompareSpec(len(runs) - 1, 0)]
    plan = Plan(tuple(runs), tuple(cmps), cfg.alpha, cfg.nu, cfg.T, cfg.fine_steps, True, cfg.check, cfg.pressure_alignment)
    per_cmp, diag = run_plan(plan, cfg.seed, cfg.samples, cfg.block_size, cfg.workers)
    rows = []
    for i, m in enumerate(Ms):
        mil, em = per_cmp[2 * i], per_cmp[2 * i + 1]
        t, p = paired_test(mil, em)
        rows.append(PairedRow(cfg.T / m, mil.report(), em.report(), t, p))
    meta = _base_meta(cfg, diag)
    meta["reference"] = f"same path Milstein with {cfg.reference_M} steps"
    return PairedTable(rows, meta)


def write_paired(table: PairedTable, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PAIRED_HEADER)
    for r in table.rows:
        w.writerow(
            [_fmt(r.resolution)]
            + [_fmt(x) for x in r.milstein.triple()]
            + [_fmt(x) for x in r.euler_maruyama.triple()]
            + [_fmt(x) for x in r.ratios]
            + [_fmt(r.t_statistic), _fmt(r.p_value)]
        )


def emit_paired_csv(table: PairedTable, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        write_paired(table, fh)
    return path


SINGLE_HEADER = ["t", "u_l2", "u_h1", "p_l2", "time_averaged_p_l2"]


def run_single(cfg: ExperimentConfig) -> list[list[float]]:
    """One trajectory (sample 0) summarised per step."""
    from .errors import h1_norm, l2_norm
    from .stepper import SchemeConfig, run_trajectory

    cfg.validate()
    ops = _operators(cfg.n, True)
    sc = SchemeConfig(M=cfg.M, nu=cfg.nu, alpha=cfg.alpha, T=cfg.T, scheme=cfg.scheme)
    inc = coarse_increments(generate_paths(cfg.seed, (0,), cfg.fine_steps, cfg.T)[:, 0], cfg.M)
    traj = run_trajectory(sc, inc, ops, _factorization(cfg.n, True, cfg.nu, sc.k), cfg.check)
    P = np.cumsum(traj.pressure, axis=0) * traj.k
    rows = []
    for n in range(1, traj.M + 1):
        u = traj.velocity[n]
        rows.append(
            [
                float(traj.times[n]),
                float(l2_norm(u, ops.mass)),
                float(h1_norm(u, ops.mass, ops.stiffness)),
                float(l2_norm(traj.pressure[n - 1], ops.pressure_mass)),
                float(l2_norm(P[n - 1], ops.pressure_mass)),
            ]
        )
    return rows
