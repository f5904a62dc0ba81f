"""End-to-end acceptance criteria, each at its stated tolerance.

These run the desk-sized studies and take a while (tens of minutes on one
core).  Every criterion prints one PASS/FAIL line, repeated in the pytest
terminal summary.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from stostokes.assembly import assemble_operators, element_matrices
from stostokes.cli import main
from stostokes.experiment import (
    DESK_PRESETS,
    ExperimentConfig,
    run_deterministic_study,
    run_em_comparison,
    run_space_convergence,
    run_time_convergence,
)
from stostokes.femspace import build_mini_spaces
from stostokes.mesh import build_uniform_mesh
from stostokes.stepper import make_factorization, milstein_step
from stostokes.stochastic import LinearNoise, coarse_increments, generate_paths, milstein_weight

from oracles import dense_step, element_oracle

# literature order columns for the first three step-halvings
REFERENCE_ORDERS = {
    "l2h1": (0.7597, 0.8430, 0.9416),
    "linfl2": (0.6088, 0.7640, 0.8830),
    "press": (0.8200, 0.8749, 0.9445),
}
WORKERS = 1


def _fmt(xs):
    return "[" + ", ".join(f"{x:.3f}" for x in xs) + "]"


@pytest.fixture(scope="module")
def time_study():
    cfg = ExperimentConfig(kind="time", workers=WORKERS, **DESK_PRESETS["time"])
    t0 = time.perf_counter()
    table = run_time_convergence(cfg)
    return table, time.perf_counter() - t0


@pytest.fixture(scope="module")
def space_study():
    cfg = ExperimentConfig(kind="space", workers=WORKERS, **DESK_PRESETS["space"])
    return run_space_convergence(cfg)


@pytest.fixture(scope="module")
def em_study():
    cfg = ExperimentConfig(kind="em", alpha=0.5, workers=WORKERS, **DESK_PRESETS["em"])
    return run_em_comparison(cfg)


def test_criterion_1_deterministic(record_criterion):
    cfg = ExperimentConfig(kind="det", alpha=0.0, **DESK_PRESETS["det"])
    assert cfg.M == 1024 and cfg.n_list == (8, 16, 32) and cfg.n == 64
    t0 = time.perf_counter()
    st = run_deterministic_study(cfg)
    elapsed = time.perf_counter() - t0
    h1 = st.spatial.orders("l2h1")
    l2 = st.spatial.orders("linfl2")
    tk = st.temporal_corrected.orders("linfl2")
    checks = {
        "1.a": (all(0.9 <= o <= 1.1 for o in h1), f"spatial H1 orders {_fmt(h1)} in [0.9, 1.1]"),
        "1.b": (all(1.8 <= o <= 2.2 for o in l2), f"spatial L2 orders {_fmt(l2)} in [1.8, 2.2]"),
        "1.c": (
            all(o is not None and 0.85 <= o <= 1.15 for o in tk),
            f"temporal orders after floor subtraction {_fmt(tk)} in [0.85, 1.15] "
            f"(floor {st.temporal_floor.err_LinfL2:.4e})",
        ),
        "1.d": (elapsed < 300, f"runtime {elapsed:.1f} s < 300 s"),
    }
    for key, (ok, detail) in checks.items():
        record_criterion(key, ok, detail)
    assert all(ok for ok, _ in checks.values())


def test_criterion_2_time_convergence(time_study, record_criterion):
    table, elapsed = time_study
    assert [round(1 / r.resolution) for r in table.rows] == [64, 128, 256, 512]
    ok_all = True
    for which in ("l2h1", "linfl2", "press"):
        orders = table.orders(which)
        finest = orders[-2:]
        floor_ok = all(o >= 0.7 for o in finest)
        near = all(abs(o - ref) <= 0.25 for o, ref in zip(orders, REFERENCE_ORDERS[which]))
        record_criterion(
            f"2.{which}",
            floor_ok and near,
            f"orders {_fmt(orders)}: two finest >= 0.7 and within 0.25 of {_fmt(REFERENCE_ORDERS[which])}",
        )
        ok_all &= floor_ok and near
    record_criterion("2.runtime", elapsed < 1800, f"runtime {elapsed:.1f} s < 1800 s")
    assert ok_all and elapsed < 1800


def test_criterion_3_space_convergence(space_study, record_criterion):
    t = space_study
    assert [round(1 / r.resolution) for r in t.rows] == [8, 16, 32]
    h1, l2, pr = t.orders("l2h1"), t.orders("linfl2"), t.orders("press")
    checks = {
        "3.h1": (all(o >= 0.8 for o in h1), f"velocity H1 orders {_fmt(h1)} >= 0.8"),
        "3.l2": (all(o >= 1.6 for o in l2), f"velocity L2 orders {_fmt(l2)} >= 1.6"),
        "3.press": (all(o >= 1.2 for o in pr), f"pressure orders {_fmt(pr)} >= 1.2"),
    }
    for key, (ok, detail) in checks.items():
        record_criterion(key, ok, detail)
    assert all(ok for ok, _ in checks.values())


def test_criterion_4_structural_invariants(time_study, space_study, em_study, record_criterion):
    diags = [time_study[0].meta["diagnostics"], space_study.meta["diagnostics"], em_study.meta["diagnostics"]]
    div = max(d["max_div_inf"] for d in diags)
    mean_p = max(d["max_abs_pressure_integral"] for d in diags)
    res = max(d["max_relative_residual"] for d in diags)
    ok = div <= 1e-9 and mean_p <= 1e-10 and res <= 1e-10
    record_criterion("4", ok, f"max |Bu|_inf={div:.2e} (<=1e-9), |int p|={mean_p:.2e} (<=1e-10), residual={res:.2e} (<=1e-10)")
    assert ok


def test_criterion_5_noise_statistics(record_criterion):
    k = 1 / 2048
    inc = generate_paths(20240101, range(49), 2048).ravel()[:100_000]
    N = inc.size
    mean_ok = abs(inc.mean()) <= 4 * math.sqrt(k) / math.sqrt(N)
    var_ratio = inc.var(ddof=1) / k
    var_ok = 0.97 <= var_ratio <= 1.03
    ks_p = stats.kstest(inc[:10_000] / math.sqrt(k), "norm").pvalue
    ks_ok = ks_p > 1e-3
    fine = generate_paths(7, range(4), 2048)
    tele_ok = True
    for M in (1024, 512, 64, 1):
        direct = coarse_increments(fine, M)
        chained = fine
        m = 2048
        while m > M:
            m //= 2
            chained = coarse_increments(chained, m)
        tele_ok &= np.array_equal(direct, chained)
        tele_ok &= np.array_equal(coarse_increments(direct, 1), coarse_increments(fine, 1))
    w = milstein_weight(inc, k)
    w_ok = abs(w.mean()) <= 4 * math.sqrt(k * k / 2) / math.sqrt(N)
    ok = mean_ok and var_ok and ks_ok and tele_ok and w_ok
    record_criterion(
        "5",
        ok,
        f"mean ok={mean_ok}, var ratio={var_ratio:.4f}, KS p={ks_p:.3f}, telescoping exact={tele_ok}, "
        f"milstein weight mean ok={w_ok}",
    )
    assert ok


def test_criterion_6_milstein_vs_em(em_study, record_criterion):
    row = em_study.rows[0]
    assert round(1 / row.resolution) == 256
    mil, em = row.milstein.err_L2H1, row.euler_maruyama.err_L2H1
    ok = mil <= em and row.p_value < 0.05
    record_criterion(
        "6", ok, f"Milstein {mil:.4e} <= EM {em:.4e}, one-sided paired p={row.p_value:.2e} < 0.05 (J={len(row.milstein.samples.l2_h1_sq)})"
    )
    assert ok


def test_criterion_7_determinism(tmp_path, record_criterion):
    base = ["--test", "time", "--n", "8", "--klist", "1/64,1/128", "--samples", "8", "--block-size", "2", "--seed", "31"]
    main(base + ["--out", str(tmp_path / "a.csv")])
    main(base + ["--out", str(tmp_path / "b.csv")])
    main(base + ["--out", str(tmp_path / "c.csv"), "--workers", "3"])
    a, b, c = ((tmp_path / f"{x}.csv").read_bytes() for x in "abc")
    ok = a == b == c
    record_criterion("7", ok, "repeated and 3-worker runs give byte-identical CSV")
    assert ok


def test_criterion_8_oracles(record_criterion):
    ops = assemble_operators(build_mini_spaces(build_uniform_mesh(1)))
    k, nu, alpha, dW = 1 / 8, 1.0, 0.5, 0.23
    u = np.zeros(ops.spaces.n_vel_dofs)
    u[ops.spaces.free_dofs] = [0.3, -1.1, 0.7, 0.05]
    fact = make_factorization(ops, nu, k)
    got_u, got_p = milstein_step(u, dW, ops, fact, k, LinearNoise(alpha), forcing=False)
    extra = lambda M: M @ (alpha * dW * u + 0.5 * alpha**2 * (dW**2 - k) * u)
    ref_u, ref_p, _ = dense_step(ops.spaces.mesh, u, extra, nu, k)
    step_err = max(np.abs(got_u - ref_u).max(), np.abs(got_p - ref_p).max())
    ref_tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    blocks = [np.abs(a - b).max() for a, b in zip(element_matrices(ref_tri), element_oracle(ref_tri))]
    ok = step_err <= 1e-12 and max(blocks) <= 1e-12
    record_criterion("8", ok, f"n=1 Milstein step vs dense oracle {step_err:.1e}; element blocks vs symbolic {max(blocks):.1e}")
    assert ok
