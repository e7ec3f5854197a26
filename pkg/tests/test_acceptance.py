"""End-to-end acceptance checks.

Each test prints exactly one ``[PASS]`` / ``[FAIL]`` line with the measured
numbers, then asserts.  Run with ``pytest tests/test_acceptance.py -v``.
"""

import math
import time
import tracemalloc

import numpy as np
import pytest

from butterfly_sft.butterfly import StorageMonitor, plan, transform
from butterfly_sft.geometry import PRESETS, attach_random_charges, sample_curve_2d, sample_surface_3d
from butterfly_sft.lowrank_core import (
    apply_child_to_parent,
    apply_fit_operator,
    assemble_operators,
    cartesian_grid,
    evaluate_from_charges,
    fit_diagonals,
    kernel_eval,
    solve_equivalent_charges,
    taylor_rank_bound,
    transfer_diagonals,
)
from butterfly_sft.oracle import direct_transform, estimate_direct_time, estimate_error, sample_indices
from conftest import EPS
from oracles import axis_matrix, dense_box_operator, random_pair, taylor_partial

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def emit(tag, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {tag}: {detail}")
        return ok

    return emit


def rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def ellipse_pair(N, seed=1):
    X = sample_curve_2d(PRESETS["ellipse"], N, 5)
    K = attach_random_charges(sample_curve_2d(PRESETS["ellipse-small"], N, 5), seed)
    return K, X


@pytest.fixture(scope="module")
def scaling_runs():
    """Median-of-3 transform time and probe-estimated direct time, p=5."""
    out = {}
    for N in (1024, 2048, 4096, 8192):
        K, X = ellipse_pair(N)
        times = []
        for _ in range(3):
            t0 = time.perf_counter()
            transform(plan(K, X, 5), K.charges)
            times.append(time.perf_counter() - t0)
        T_d = estimate_direct_time(K, X, N) if N == 8192 else None
        out[N] = (float(np.median(times)), T_d)
    return out


def test_accuracy_vs_p(report):
    N = 1024
    t0 = time.perf_counter()
    K, X = ellipse_pair(N)
    idx = sample_indices(len(X))
    exact = direct_transform(K, K.charges, X.points[idx], N)
    eps = {}
    for p in (5, 7, 9):
        u = transform(plan(K, X, p), K.charges)
        eps[p] = estimate_error(exact, u[idx], idx).eps_a
    elapsed = time.perf_counter() - t0
    ok = all(eps[p] <= EPS[p] for p in eps) and elapsed <= 60
    detail = ", ".join(f"p={p} eps_a={eps[p]:.2e} (<= {EPS[p]:.0e})" for p in eps)
    assert report("C1 accuracy vs p, N=1024 ellipse", ok, f"{detail}; {elapsed:.1f} s (<= 60 s)")


def test_full_population(report):
    t0 = time.perf_counter()
    errs = {}
    for N in (64, 128, 256):
        K, X = ellipse_pair(N)
        exact = direct_transform(K, K.charges, X, N)
        for p in (5, 7, 9):
            errs[N, p] = rel(transform(plan(K, X, p), K.charges), exact)
    elapsed = time.perf_counter() - t0
    ok = all(e <= EPS[p] for (N, p), e in errs.items()) and elapsed <= 30
    worst = {p: max(e for (n, q), e in errs.items() if q == p) for p in (5, 7, 9)}
    detail = ", ".join(f"p={p} worst={worst[p]:.2e}" for p in worst)
    assert report("C2 full population N=64,128,256", ok, f"{detail}; {elapsed:.1f} s (<= 30 s)")


def test_three_d(report):
    N = 16
    t0 = time.perf_counter()
    X = sample_surface_3d(PRESETS["sphere"], N, 25)
    K = attach_random_charges(sample_surface_3d(PRESETS["torus"], N, 25), 1)
    u = transform(plan(K, X, 5), K.charges)
    err = rel(u, direct_transform(K, K.charges, X, N))
    elapsed = time.perf_counter() - t0
    ok = err <= 5e-3 and elapsed <= 60
    detail = f"|X|={len(X)} |K|={len(K)} rel L2={err:.2e} (<= 5e-3); {elapsed:.1f} s (<= 60 s)"
    assert report("C3 3D sphere x torus N=16 p=5", ok, detail)


def test_scaling(report, scaling_runs):
    Ns = sorted(scaling_runs)
    ratios = [scaling_runs[b][0] / scaling_runs[a][0] for a, b in zip(Ns, Ns[1:])]
    ok = all(1.5 <= r <= 3.0 for r in ratios)
    times = ", ".join(f"N={n}: {scaling_runs[n][0]:.2f} s" for n in Ns)
    detail = f"{times}; ratios {', '.join(f'{r:.2f}' for r in ratios)} (in [1.5, 3.0])"
    assert report("C4 near-linear scaling p=5", ok, detail)


def test_speedup(report, scaling_runs):
    T_a, T_d = scaling_runs[8192]
    speedup = T_d / T_a
    assert report("C5 speedup N=8192 p=5", speedup >= 10, f"T_a={T_a:.2f} s, T_d~{T_d:.1f} s, speedup={speedup:.1f} (>= 10)")


def test_structural_identities(report):
    rng = np.random.default_rng(2024)
    N = 1024
    fact_err = 0.0
    for relation, diag, center in (("fit", fit_diagonals, "G"), ("transfer", transfer_diagonals, "H")):
        for _ in range(100):
            p = int(rng.choice([5, 7, 9]))
            ops = assemble_operators(p)
            A, B = random_pair(rng, N, 2, relation)
            d11, d12 = diag(A, B, p, N)
            for a in range(2):
                dense = axis_matrix(A.corner(N)[a], A.width(N), B.corner(N)[a], B.width(N), p, N)
                fact = np.diag(d11[a]) @ getattr(ops, center) @ np.diag(d12[a])
                fact_err = max(fact_err, float(np.abs(fact - dense).max() / np.abs(dense).max()))

    kron_err = 0.0
    for d in (2, 3):
        for p in (5, 7, 9):
            ops = assemble_operators(p)
            for _ in range(3):
                f = rng.normal(size=(p,) * d) + 1j * rng.normal(size=(p,) * d)
                A, B = random_pair(rng, 64, d, "fit")
                kron_err = max(kron_err, rel(apply_fit_operator(A, B, f, ops, 64).ravel(), dense_box_operator(A, B, p, 64) @ f.ravel()))
                A, Bc = random_pair(rng, 64, d, "transfer")
                kron_err = max(kron_err, rel(apply_child_to_parent(A, Bc, f, ops, 64).ravel(), dense_box_operator(A, Bc, p, 64) @ f.ravel()))

    resid = {}
    for d in (2, 3):
        for p in (5, 7, 9):
            ops = assemble_operators(p)
            worst = 0.0
            for _ in range(5):
                A, B = random_pair(rng, 64, d, "fit")
                u = rng.normal(size=p**d) + 1j * rng.normal(size=p**d)
                f = solve_equivalent_charges(A, B, u, ops, 64)
                worst = max(worst, rel(dense_box_operator(A, B, p, 64) @ f.ravel(), u))
            resid[p, d] = worst
    ok = fact_err <= 1e-12 and kron_err <= 1e-12 and all(r <= 1e-9 for r in resid.values())
    rtxt = ", ".join(f"p={p},d={d}:{r:.1e}" for (p, d), r in sorted(resid.items()))
    detail = f"factorization {fact_err:.1e} (<= 1e-12), Kronecker {kron_err:.1e} (<= 1e-12), random-u residual {rtxt} (<= 1e-9)"
    assert report("C6 structural identities", ok, detail)


def test_low_rank(report):
    rng = np.random.default_rng(7)
    N = 256
    worst = {}
    for d in (2, 3):
        for p in (5, 7, 9):
            ops = assemble_operators(p)
            w = 0.0
            for _ in range(50):
                A, B = random_pair(rng, N, d, "fit")
                k = np.array(B.corner(N)) + rng.uniform(0, B.width(N), size=d)
                grid = cartesian_grid(A.corner(N), A.width(N), p, d).nodes
                f = solve_equivalent_charges(A, B, kernel_eval(grid, k, N), ops, N)
                xs = np.array(A.corner(N)) + rng.uniform(0, A.width(N), size=(200, d))
                w = max(w, float(np.abs(kernel_eval(xs, k, N) - evaluate_from_charges(xs, B, f, N)).max()))
            worst[p, d] = w
    ok = all(w <= EPS[p] for (p, d), w in worst.items())
    detail = ", ".join(f"p={p},d={d}:{w:.1e}" for (p, d), w in sorted(worst.items()))
    assert report("C7 low-rank reproduction, 50 pairs per (p,d)", ok, detail + " (<= 5e-3/5e-5/5e-7)")


def _peak_bytes(N):
    K, X = ellipse_pair(N)
    tracemalloc.start()
    transform(plan(K, X, 5), K.charges)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    return peak


def test_storage(report):
    K, X = ellipse_pair(4096)
    mon = StorageMonitor()
    transform(plan(K, X, 5), K.charges, monitor=mon)
    breaches = [(t, live, bound) for t, live, bound in mon.transitions if live > bound]
    peak = {N: _peak_bytes(N) for N in (2048, 4096)}
    ratio = peak[4096] / peak[2048]
    ok = not breaches and ratio <= 2.5
    detail = (
        f"{len(mon.transitions)} level transitions, {len(breaches)} over the two-level bound, "
        f"peak live pairs {mon.peak}; traced peak {peak[2048] / 2**20:.1f} MiB -> {peak[4096] / 2**20:.1f} MiB, ratio {ratio:.2f} (<= 2.5)"
    )
    assert report("C8 storage contract N=4096", ok, detail)


def test_taylor_truncation(report):
    rng = np.random.default_rng(9)
    xs = rng.uniform(-2, 2, size=1000)
    results = {}
    for eps in (1e-3, 1e-6):
        S = taylor_rank_bound(2, eps).S
        err = max(abs(np.exp(2j * np.pi * x) - taylor_partial(x, S)) for x in xs)
        results[eps] = (S, err)
    ok = all(err <= eps for eps, (S, err) in results.items()) and results[1e-3][0] == math.ceil(8 * math.e * math.pi)
    detail = ", ".join(f"eps={eps:.0e}: S={S}, max err {err:.1e}" for eps, (S, err) in results.items())
    assert report("C9 Taylor truncation bound Z=2", ok, detail)
