"""Acceptance gate: one PASS/FAIL line per criterion (run with ``pytest -s``)."""
import time
from contextlib import contextmanager

import numpy as np
import pytest
import scipy.linalg as sla

from l2pos.core import q_smallest_sum, random_hermitian, subset_sums_oracle
from l2pos.forms import commutator_operator
from l2pos.geometry import Domain, Weight, complex_hessian
from l2pos.probes import fiber_integrate_prekopa, monotone_limit_check, probe_counterexample
from l2pos.solver import (GridField, GridSpec, _Problem, discretize_dbar, domain_mask, estimate_ratio,
                          minimal_solution, probe_source, weighted_inner)

DISC = Domain("polydisc", (0j,), (1.0,))
POLYDISC2 = Domain("polydisc", (0j, 0j), (1.0, 1.0))


@contextmanager
def criterion(label, budget, spent=0.0):
    """Time a block and print one status line; the caller fills ``info``.

    ``spent`` adds work done earlier in a shared fixture.
    """
    info = {"ok": False, "value": ""}
    t0 = time.perf_counter() - spent
    try:
        yield info
    finally:
        dt = time.perf_counter() - t0
        ok = info["ok"] and dt < budget
        print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {info['value']} ({dt:.2f} s, limit {budget:g} s)")
    assert info["ok"], info["value"]
    assert dt < budget, f"runtime {dt:.2f} s over {budget} s"


def _random_q(rng, n):
    return int(rng.integers(1, n + 1))


def test_c01_diagonal_reduction():
    rng = np.random.default_rng(101)
    with criterion("1 diagonal reduction, 200 cases", 5.0) as info:
        worst = 0.0
        for _ in range(200):
            n = int(rng.integers(1, 7))
            q = _random_q(rng, n)
            lam = rng.normal(size=n) * 3
            mat = commutator_operator(np.diag(lam), q).matrix
            off = np.abs(mat - np.diag(np.diag(mat))).max()
            sums = np.sort(np.diag(mat).real)
            worst = max(worst, off, np.abs(sums - subset_sums_oracle(lam, q)).max())
        info["ok"] = worst <= 1e-12
        info["value"] = f"max abs error {worst:.2e} (tol 1e-12)"


def test_c02_spectral_bridge():
    rng = np.random.default_rng(202)
    with criterion("2 spectral bridge, 200 Hermitian cases", 10.0) as info:
        worst_min = worst_spec = 0.0
        for _ in range(200):
            n = int(rng.integers(1, 7))
            q = _random_q(rng, n)
            theta = random_hermitian(n, rng, scale=2.0)
            ev = np.linalg.eigvalsh(commutator_operator(theta, q).matrix)
            lam = np.linalg.eigvalsh(theta)
            worst_min = max(worst_min, abs(ev[0] - q_smallest_sum(lam, q)))
            worst_spec = max(worst_spec, np.abs(ev - subset_sums_oracle(lam, q)).max())
        info["ok"] = worst_min <= 1e-10 and worst_spec <= 1e-10
        info["value"] = f"lambda_min error {worst_min:.2e}, spectrum error {worst_spec:.2e} (tol 1e-10)"


def test_c03_oracle_equivalence():
    rng = np.random.default_rng(303)
    with criterion("3 q_smallest_sum vs enumeration, 1000 spectra", 5.0) as info:
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(1, 11))
            q = _random_q(rng, n)
            lam = rng.normal(size=n) * 10
            worst = max(worst, abs(q_smallest_sum(lam, q) - min(subset_sums_oracle(lam, q))))
        info["ok"] = worst <= 1e-10
        info["value"] = f"max abs error {worst:.2e} (tol 1e-10)"


def test_c04_estimate_verification():
    with criterion("4 estimate ratio, disc and polydisc", 60.0) as info:
        phi1 = Weight.from_expression("|z1|^2", 1)
        ratios = {}
        for pts in (64, 128):
            g = GridSpec.square(1, 1.0, pts)
            ratios[f"n1@{pts}"] = estimate_ratio(probe_source(g, 1, 0.75), phi1, phi1, 1.0, domain=DISC).ratio
        phi2 = Weight.from_expression("|z1|^2 + |z2|^2", 2)
        g2 = GridSpec.square(2, 1.0, 32)
        for q in (1, 2):
            ratios[f"n2q{q}@32"] = estimate_ratio(probe_source(g2, q, 0.7), phi2, phi2, 1.0,
                                                  domain=POLYDISC2).ratio
        limits = {"n1@64": 1.10, "n1@128": 1.05, "n2q1@32": 1.15, "n2q2@32": 1.15}
        info["ok"] = all(0 < ratios[k] <= limits[k] for k in limits)
        info["value"] = ", ".join(f"{k} {ratios[k]:.4f} (<= {limits[k]})" for k in limits)


@pytest.fixture(scope="module")
def probe_runs():
    t0 = time.perf_counter()
    bad = probe_counterexample(Weight.from_expression("-|z1|^2 + |z2|^2", 2), 1, 0.0, [0, 0], 0.5)
    ctrl = probe_counterexample(Weight.from_expression("|z1|^2 + |z2|^2", 2), 1, 0.0, [0, 0], 0.5)
    return bad, ctrl, time.perf_counter() - t0


def test_c05_counterexample_probe(probe_runs):
    bad, ctrl, elapsed = probe_runs
    with criterion("5 counterexample probe and control", 30.0, elapsed) as info:
        neg = bad.m_star is not None and bad.m_star <= 2 ** 14 and bad.values[-1].value < 0
        floor = min(v.scaled / v.scale for v in ctrl.values)
        full = len(ctrl.values) == len(ctrl.config.m_schedule)
        info["ok"] = neg and ctrl.m_star is None and full and floor >= -1e-6
        info["value"] = (f"m_star {bad.m_star:g} with R {bad.values[-1].value:.3e}; "
                         f"control min R/scale {floor:.2e} over {len(ctrl.values)} m (>= -1e-6)")


def test_c06_dstar_weight_independence(probe_runs):
    bad, ctrl, elapsed = probe_runs
    with criterion("6 D'* weight independence (criterion 5 run)", 30.0, elapsed) as info:
        dev = max(bad.dstar_max_deviation, ctrl.dstar_max_deviation)
        info["ok"] = dev <= 1e-10
        info["value"] = f"max deviation {dev:.2e} across the schedule (tol 1e-10)"


def test_c07_monotone_limit():
    ball = Domain("ball", (0j, 0j), (1.0,))
    with criterion("7 monotone limits", 5.0) as info:
        seq = [Weight.from_expression(f"(1 + 1/{j})*(|z1|^2 + |z2|^2)", 2) for j in range(1, 9)]
        a = monotone_limit_check(seq, Weight.from_expression("|z1|^2 + |z2|^2", 2), 1, 1.0, ball)
        seq = [Weight.from_expression(f"-|z1|^2 + 2*|z2|^2 + (1/{j})*|z1|^2", 2) for j in range(1, 9)]
        b = monotone_limit_check(seq, Weight.from_expression("-|z1|^2 + 2*|z2|^2", 2), 2, 1.0, ball)
        err_a = abs(a.limit_minimum - 1.0)
        err_b = abs(b.limit_minimum - 1.0)
        seq_err = np.abs(np.array(b.sequence_minima) - [1 + 1 / j for j in range(1, 9)]).max()
        info["ok"] = a.passed and b.passed and max(err_a, err_b, seq_err) <= 1e-8
        info["value"] = f"limit errors {err_a:.1e}, {err_b:.1e}; sequence error {seq_err:.1e} (tol 1e-8)"


def test_c08_prekopa():
    weights = ["|z1|^2 + |w1|^2", "|z1|^2*(1 + |w1|^2)", "log(1 + |z1|^2) + |z1|^2*|w1|^2 + |w1|^2"]
    base = GridSpec.square(1, 0.8, 32)
    with criterion("8 fiber integration q=1, three weights", 120.0) as info:
        minima, ok = [], True
        for expr in weights:
            phi = Weight.from_expression(expr, 1, 1)
            fld, rep = fiber_integrate_prekopa(phi, 1, DISC, base, radial=1250, angular=8)
            ok &= fld.quadrature["nodes"] == 10 ** 4 and len(fld.points) == 32 * 32
            minima.append(rep.min_value)
        info["ok"] = ok and min(minima) >= -1e-3
        info["value"] = "minima " + ", ".join(f"{m:.6f}" for m in minima) + " (>= -1e-3)"


def _kernel_orthogonality(g, mask, expr, r):
    """Functions (q=1 solutions): the kernel is computed by dense SVD of the restricted operator."""
    w = Weight.from_expression(expr, g.n)
    wv = np.zeros(g.size)
    wv[mask] = w(g.coords()[mask])
    u, _ = minimal_solution(probe_source(g, 1, r), wv, mask=mask)
    prob = _Problem(g, 1, mask)
    ker = sla.null_space(prob.op.toarray())
    worst = 0.0
    for k in ker.T:
        kf = np.zeros(g.size, complex)
        kf[prob.cols] = k
        worst = max(worst, abs(weighted_inner(u, GridField(g, 0, kf), wv, mask)))
    return worst, ker.shape[1]


def test_c09_discrete_calculus():
    with criterion("9 discrete dbar and minimal-solution orthogonality", 20.0) as info:
        grids = [GridSpec.square(2, 1.0, 16), GridSpec.square(2, 0.5, 24), GridSpec(2, (-1, 0, -2, 1), (1, 2, 0, 3), 18)]
        sq = max(abs(discretize_dbar(g, 2) @ discretize_dbar(g, 1)).max() for g in grids)
        g1 = GridSpec.square(1, 1.0, 16)
        o1, k1 = _kernel_orthogonality(g1, domain_mask(g1, DISC), "|z1|^2 + x1", 0.75)
        g2 = GridSpec.square(2, 1.0, 16)
        o2, k2 = _kernel_orthogonality(g2, domain_mask(g2, Domain("ball", (0j, 0j), (0.45,))),
                                       "|z1|^2 + 2*|z2|^2", 0.2)
        # q=2: the kernel of the discrete operator on (2,1)-forms contains all discrete images of functions
        mask = domain_mask(g2, POLYDISC2)
        wv = np.zeros(g2.size)
        wv[mask] = Weight.from_expression("|z1|^2 + |z2|^2 + x1*y2", 2)(g2.coords()[mask])
        u, _ = minimal_solution(probe_source(g2, 2, 0.75), wv, mask=mask)
        rng = np.random.default_rng(9)
        o3 = 0.0
        for _ in range(3):
            s = rng.normal(size=g2.size) + 1j * rng.normal(size=g2.size)
            k = GridField.from_flat(g2, 1, discretize_dbar(g2, 1) @ s)
            k.values[~mask] = 0.0
            o3 = max(o3, abs(weighted_inner(u, k, wv, mask)) / np.sqrt(np.sum(np.abs(k.values) ** 2)))
        worst = max(o1, o2, o3)
        info["ok"] = sq <= 1e-13 and worst <= 1e-8 and k1 > 0 and k2 > 0
        info["value"] = f"dbar^2 {sq:.1e} (tol 1e-13); orthogonality {worst:.1e} (tol 1e-8)"


def test_c10_hessian_convergence():
    rng = np.random.default_rng(10)
    exprs = ["x1^4 + 3*x1^2*y2^2 - y1^3*x2", "|z1|^4 + |z2|^2*x1*y1 - 2*y2^4 + x1*x2*y1",
             "x1*y1*x2*y2 + y1^2*x2 - 0.5*|z2|^4", "x1^3*y2 + |z1|^2*|z2|^2"]
    hs = [1e-2, 5e-3, 2.5e-3, 1.25e-3]
    with criterion("10 finite-difference Hessian order", 5.0) as info:
        worst = np.inf
        for expr in exprs:
            w = Weight.from_expression(expr, 2)
            for _ in range(3):
                z = 0.5 * (rng.normal(size=2) + 1j * rng.normal(size=2))
                exact = w.hess(z)
                errs = np.array([np.abs(complex_hessian(w, z, h).entries - exact).max() for h in hs])
                worst = min(worst, np.log2(errs[:-1] / errs[1:]).min())
        info["ok"] = worst >= 1.9
        info["value"] = f"min empirical order {worst:.3f} over three halvings (>= 1.9)"
