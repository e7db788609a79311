"""Executable probes: the probe-form functional, monotone limits, fiber integration.

The probe functional follows the contradiction argument for the twisted estimate:
a violating q-subset of eigenvalues at a witness point gives a ∂̄-closed probe form g,
and with ψ = |z|² − r²/4

    R(m) = ∫ |D'* g|² e^{−mψ} dV + ∫ ⟨([iΘ, Λ] − c) g, g⟩ e^{−mψ} dV

turns negative for large m. Because e^{m r²/4} overflows quickly, values are kept as
R(m) e^{−m r²/4} (same sign) together with the log of the factor.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.special import logsumexp

from . import exterior
from .core import eig_hermitian, multi_indices, q_smallest_sum
from .cutoff import Cutoff
from .errors import InputError, PreconditionError, ResolutionError
from .forms import (FormField, _dbar_on_forms, commutator_matrices, dprime_star_closed,
                    dprime_star_weighted)
from .geometry import (DEFAULT_FD_STEP, Domain, PositivityReport, Weight, _jsonable, check_uniform_q_positive,
                       fd_hessian, halton)
from .quadrature import Rule, ball_rule, reinhardt_rule
from .solver import GridSpec

CERTIFY_SAMPLES = 4096
MAX_SHRINKS = 6
DEFAULT_SCHEDULE = tuple(2.0 ** k for k in range(15))
RESOLUTION_RTOL = 0.02
DSTAR_TOL = 1e-10


@dataclass
class ProbeConfig:
    n: int
    q: int
    c: float
    r: float
    witness: np.ndarray
    rotation: np.ndarray
    index_set: tuple
    cutoff: Cutoff
    delta: float | None
    m_schedule: tuple = DEFAULT_SCHEDULE
    violation: float | None = None

    @property
    def certified(self) -> bool:
        return self.delta is not None

    def to_dict(self) -> dict:
        return _jsonable({"n": self.n, "q": self.q, "c": self.c, "r": self.r,
                          "witness": self.witness, "rotation": self.rotation,
                          "index_set": list(self.index_set), "delta": self.delta,
                          "violation": self.violation, "m_schedule": list(self.m_schedule),
                          "cutoff": "smooth step, 1 on |z| <= r/2, 0 on |z| >= r"})


# ---------------------------------------------------------------------------
# probe form


def probe_form(n: int, q: int, r: float) -> FormField:
    """g = ∂̄v with v = (−1)^{n+q−1} χ z̄_q dZ∧dz̄_1∧…∧dz̄_{q−1}, centred at 0.

    On |z| ≤ r/2 this is the monomial dZ∧dz̄_1∧…∧dz̄_q; support is |z| ≤ r.
    """
    if not 1 <= q <= n:
        raise InputError(f"q={q} outside [1, {n}]")
    chi = Cutoff(r)
    sign = (-1) ** (n + q - 1)
    slot = multi_indices(n, q - 1).index(tuple(range(1, q)))
    wedge = _dbar_on_forms(n, n, q - 1)[:, :, slot]   # (l, C(n,q)): e(dz̄_l) on the v slot
    qi = q - 1
    eye = np.eye(n)

    def first(z):
        # ∂_l̄ (χ z̄_q) = G' z_l z̄_q + χ δ_lq
        s = np.sum(np.abs(z) ** 2, axis=-1)
        g0, g1, _ = chi.of_square(s)
        zq = np.conj(z[:, qi])
        return sign * (g1[:, None] * z * zq[:, None] + g0[:, None] * eye[qi])

    def coefficients(z):
        return np.einsum("la,Nl->Na", wedge, first(z))

    def dbar(z):
        # ∂_k̄∂_l̄ (χ z̄_q) = G'' z_k z_l z̄_q + G'(z_l δ_kq + z_k δ_lq)
        s = np.sum(np.abs(z) ** 2, axis=-1)
        _, g1, g2 = chi.of_square(s)
        zq = np.conj(z[:, qi])
        second = (g2[:, None, None] * z[:, :, None] * z[:, None, :] * zq[:, None, None]
                  + g1[:, None, None] * (eye[qi][:, None] * z[:, None, :] + z[:, :, None] * eye[qi][None, :]))
        return sign * np.einsum("la,Nkl->Nka", wedge, second)

    return FormField(n, q, coefficients, dbar)


def _rotated(w: Weight, witness, rotation) -> Weight:
    return w.affine_pullback(witness, rotation)


def _pairing(w_rot: Weight, z, q: int, c: float, g_vals) -> np.ndarray:
    """⟨([iΘ, Λ] − c) g, g⟩ at points z (rotated coordinates)."""
    a = commutator_matrices(w_rot.hess(z), q)
    return np.einsum("Na,Nab,Nb->N", g_vals.conj(), a, g_vals).real - c * np.sum(np.abs(g_vals) ** 2, axis=-1)


def build_probe_form(w: Weight, q: int, c: float, witness, r: float, domain: Domain | None = None,
                     m_schedule=DEFAULT_SCHEDULE, samples: int = CERTIFY_SAMPLES):
    """Probe form for a violation of uniform q-positivity at ``witness``.

    Rotates coordinates so ∂∂̄φ(witness) is diagonal with ascending eigenvalues and
    certifies, by Halton sampling of the ball, that ⟨([iΘ,Λ] − c)F, F⟩ stays below
    −δ for the monomial F = dZ∧dz̄_1∧…∧dz̄_q. The radius is halved until at least half
    of the pointwise violation survives on the whole ball.
    Returns (g, cfg) with g in rotated coordinates centred at the witness.
    """
    n = w.n
    if not 1 <= q <= n:
        raise InputError(f"q={q} outside [1, {n}]")
    a = np.asarray(witness, dtype=complex).reshape(n)
    spec = eig_hermitian(w.hess(a))
    violation = c - q_smallest_sum(spec, q)
    if violation <= 0:
        raise PreconditionError(f"no violation at the witness: q-sum {c - violation:.6g} >= c = {c:g}")
    # z = a + U ζ with U = conj(V) makes the pulled-back Hessian Vᴴ H V diagonal
    rotation = np.conj(spec.unitary)
    w_rot = _rotated(w, a, rotation)
    f_mono = np.zeros(comb(n, q))
    f_mono[0] = 1.0                  # (1, …, q) is first in lexicographic order
    rad = float(r)
    for _ in range(MAX_SHRINKS + 1):
        fits = domain is None or float(domain.distance_to_boundary(a)) >= rad
        if fits:
            pts = Domain("ball", (0j,) * n, (rad,)).sample(samples, margin=0.0)
            vals = _pairing(w_rot, pts, q, c, np.broadcast_to(f_mono, (len(pts), len(f_mono))))
            worst = float(np.max(vals))
            if -worst >= 0.5 * violation:
                cfg = ProbeConfig(n, q, float(c), rad, a, rotation, tuple(range(1, q + 1)),
                                  Cutoff(rad), 0.999 * (-worst), tuple(m_schedule), float(violation))
                return probe_form(n, q, rad), cfg
        rad *= 0.5
    raise PreconditionError(f"could not certify the violation on any ball down to radius {rad * 2:g}")


def control_config(w: Weight, q: int, c: float, witness, r: float,
                   m_schedule=DEFAULT_SCHEDULE) -> tuple[FormField, ProbeConfig]:
    """Uncertified probe (no violation needed) in unrotated coordinates, for control runs."""
    n = w.n
    a = np.asarray(witness, dtype=complex).reshape(n)
    cfg = ProbeConfig(n, q, float(c), float(r), a, np.eye(n, dtype=complex), tuple(range(1, q + 1)),
                      Cutoff(r), None, tuple(m_schedule))
    return probe_form(n, q, r), cfg


# ---------------------------------------------------------------------------
# the functional


@dataclass
class _Integrands:
    rule: Rule
    dstar: np.ndarray        # |D'* g|², independent of m
    pairing: np.ndarray      # ⟨([iΘ,Λ] − c) g, g⟩
    r2: np.ndarray           # |z|²


def _integrands(g: FormField, cfg: ProbeConfig, w: Weight, c: float, rule: Rule) -> _Integrands:
    w_rot = _rotated(w, cfg.witness, cfg.rotation)
    z = rule.nodes
    ds = dprime_star_closed(g, z)[..., 0]
    vals = g.coefficients(z)[..., 0]
    return _Integrands(rule, np.sum(np.abs(ds) ** 2, axis=-1), _pairing(w_rot, z, g.q, c, vals),
                       np.sum(np.abs(z) ** 2, axis=-1))


@dataclass
class SekibunValue:
    """R(m) stored as ``scaled`` = R(m) e^{−m r²/4} and ``log_factor`` = m r²/4."""

    m: float
    scaled: float
    dstar_term: float
    curvature_term: float
    scale: float
    log_factor: float

    @property
    def value(self) -> float:
        """R(m) itself; ±inf once e^{m r²/4} overflows."""
        if self.scaled == 0.0:
            return 0.0
        lg = math.log(abs(self.scaled)) + self.log_factor
        return math.copysign(math.exp(lg) if lg < 709.0 else math.inf, self.scaled)

    def __float__(self):
        return self.value


def _evaluate(it: _Integrands, m: float, r: float) -> SekibunValue:
    e = it.rule.weights * np.exp(-m * it.r2)
    d = float(np.dot(e, it.dstar))
    p = float(np.dot(e, it.pairing))
    scale = float(np.dot(e, it.dstar + np.abs(it.pairing)))
    return SekibunValue(float(m), d + p, d, p, scale, m * r * r / 4.0)


def _rules(n: int, r: float):
    fine = ball_rule(n, r, radial=10, polar=16, angular=16)
    coarse = ball_rule(n, r, radial=7, polar=11, angular=11)
    return fine, coarse


def sekibun_functional(g: FormField, cfg: ProbeConfig, w: Weight, c: float, m: float) -> SekibunValue:
    """R(m) by polar product quadrature on the ball of radius r, with a resolution check."""
    fine, coarse = _rules(g.n, cfg.r)
    hi = _evaluate(_integrands(g, cfg, w, c, fine), m, cfg.r)
    lo = _evaluate(_integrands(g, cfg, w, c, coarse), m, cfg.r)
    _check_resolution(hi, lo)
    return hi


def _check_resolution(hi: SekibunValue, lo: SekibunValue):
    if abs(hi.scaled - lo.scaled) > RESOLUTION_RTOL * max(hi.scale, 1e-300):
        raise ResolutionError(f"R({hi.m:g}) changes by {abs(hi.scaled - lo.scaled):.3e} under refinement "
                              f"(scale {hi.scale:.3e})")


@dataclass
class ProbeReport:
    config: ProbeConfig
    values: list
    m_star: float | None
    c1: float
    c2: float
    dstar_max_deviation: float
    uniform_check: dict | None = None
    details: dict = field(default_factory=dict)

    @property
    def found_negative(self) -> bool:
        return self.m_star is not None

    def to_dict(self) -> dict:
        rows = [{"m": v.m, "R_scaled": v.scaled, "dstar_term_scaled": v.dstar_term,
                 "curvature_term_scaled": v.curvature_term, "scale": v.scale,
                 "log_factor": v.log_factor} for v in self.values]
        return _jsonable({"config": self.config.to_dict(), "values": rows, "m_star": self.m_star,
                          "C1": self.c1, "C2": self.c2,
                          "dstar_weight_independence_max_deviation": self.dstar_max_deviation,
                          "uniform_check": self.uniform_check, "details": self.details})

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["m", "R_scaled", "log_factor", "dstar_term_scaled", "curvature_term_scaled", "scale"])
        for v in self.values:
            wr.writerow([f"{x:.17g}" for x in (v.m, v.scaled, v.log_factor, v.dstar_term,
                                               v.curvature_term, v.scale)])
        return buf.getvalue()


def dstar_weight_deviation(g: FormField, z, m: float, r: float) -> float:
    """max |D'*_{mψ} g − D'* g| at z, with ψ = |z|² − r²/4 (∂ψ/∂z̄_k = z_k)."""
    closed = dprime_star_closed(g, z)
    weighted = dprime_star_weighted(g, z, m * np.asarray(z))
    return float(np.max(np.abs(weighted - closed)))


def run_probe(g: FormField, cfg: ProbeConfig, w: Weight, early_exit: bool = True,
              check_points: int = 256) -> ProbeReport:
    """Evaluate R(m) over the schedule; m_star is the first m with R(m) < 0."""
    c = cfg.c
    fine, coarse = _rules(g.n, cfg.r)
    it_hi = _integrands(g, cfg, w, c, fine)
    it_lo = _integrands(g, cfg, w, c, coarse)
    annulus = it_hi.r2 >= (cfg.r / 2) ** 2
    c1 = float(np.max(it_hi.dstar[annulus], initial=0.0))
    c2 = float(np.max(np.abs(it_hi.pairing[annulus]), initial=0.0))
    probe_pts = Domain("ball", (0j,) * g.n, (cfg.r,)).sample(check_points, margin=0.0)
    values, m_star, dev = [], None, 0.0
    for m in cfg.m_schedule:
        hi = _evaluate(it_hi, m, cfg.r)
        _check_resolution(hi, _evaluate(it_lo, m, cfg.r))
        dev = max(dev, dstar_weight_deviation(g, probe_pts, m, cfg.r))
        values.append(hi)
        if hi.scaled < 0 and m_star is None:
            m_star = float(m)
            if early_exit:
                break
    if dev > DSTAR_TOL:
        raise ResolutionError(f"D'* depends on the weight (deviation {dev:.3e})")
    return ProbeReport(cfg, values, m_star, c1, c2, dev,
                       details={"quadrature_nodes": fine.size, "check_points": check_points})


def probe_counterexample(w: Weight, q: int, c: float, witness, r: float, domain: Domain | None = None,
                         m_schedule=DEFAULT_SCHEDULE, early_exit: bool = True) -> ProbeReport:
    """Certified probe at a violating witness, or a control run when no violation exists.

    In the control case the uniform check on the probe ball is attached; if it passes,
    R(m) ≥ −tol is expected for every scheduled m.
    """
    a = np.asarray(witness, dtype=complex).reshape(w.n)
    violation = c - q_smallest_sum(eig_hermitian(w.hess(a)), q)
    if violation > 0:
        g, cfg = build_probe_form(w, q, c, a, r, domain, m_schedule)
        return run_probe(g, cfg, w, early_exit)
    g, cfg = control_config(w, q, c, a, r, m_schedule)
    rep = run_probe(g, cfg, w, early_exit)
    ball = Domain("ball", tuple(a), (r,))
    rep.uniform_check = check_uniform_q_positive(w, q, c, ball).to_dict()
    return rep


# ---------------------------------------------------------------------------
# monotone limits


@dataclass
class MonotoneReport:
    q: int
    c: float
    sequence_minima: list
    sequence_passed: list
    limit_minimum: float
    limit_passed: bool
    samples: int

    @property
    def passed(self) -> bool:
        return all(self.sequence_passed) and self.limit_passed

    def to_dict(self) -> dict:
        return _jsonable({"q": self.q, "c": self.c, "sequence_minima": self.sequence_minima,
                          "sequence_passed": self.sequence_passed, "limit_minimum": self.limit_minimum,
                          "limit_passed": self.limit_passed, "pass": self.passed, "samples": self.samples})


def monotone_limit_check(sequence, limit: Weight, q: int, c: float, domain: Domain,
                         samples: int = 256, tol: float = 1e-12) -> MonotoneReport:
    """Uniform q-positivity along a pointwise decreasing sequence and at its limit."""
    if not sequence:
        raise InputError("empty weight sequence")
    pts = domain.sample(samples)
    vals = [np.asarray(wj(pts)) for wj in sequence] + [np.asarray(limit(pts))]
    for j in range(len(vals) - 1):
        if np.any(vals[j + 1] > vals[j] + tol):
            k = int(np.argmax(vals[j + 1] - vals[j]))
            label = "limit" if j + 1 == len(sequence) else f"phi_{j + 2}"
            raise InputError(f"sequence is not decreasing: {label} exceeds its predecessor at {pts[k]}")
    reports = [check_uniform_q_positive(wj, q, c, domain, samples) for wj in sequence]
    lim = check_uniform_q_positive(limit, q, c, domain, samples)
    return MonotoneReport(q, float(c), [r.min_value for r in reports], [r.passed for r in reports],
                          lim.min_value, lim.passed, len(pts))


# ---------------------------------------------------------------------------
# fiber integration


PREKOPA_TOL = 1e-3
INVARIANCE_TOL = 1e-8


def validate_reinhardt_invariance(phi: Weight, n: int, base_points, fiber: Domain,
                                  samples: int = 64, tol: float = INVARIANCE_TOL) -> float:
    """max |φ(z, w) − φ(z, e^{iθ}w)| over sampled points and angles."""
    m = fiber.n
    zs = np.asarray(base_points)[np.linspace(0, len(base_points) - 1, samples).astype(int)]
    ws = fiber.sample(samples)
    ang = np.exp(2j * np.pi * halton(m, samples, skip=1))
    p0 = phi(np.concatenate([zs, ws], axis=1))
    p1 = phi(np.concatenate([zs, ws * ang], axis=1))
    dev = float(np.max(np.abs(p1 - p0) / (1.0 + np.abs(p0))))
    if dev > tol:
        raise PreconditionError(f"weight depends on arg(w) (deviation {dev:.3e}); fiber must be Reinhardt-invariant")
    return dev


@dataclass
class FiberIntegralField:
    """φ̃(z) = −log ∫_D e^{−φ(z, w)} dV(w) at base points."""

    points: np.ndarray
    values: np.ndarray
    q_sums: np.ndarray
    quadrature: dict
    grid: GridSpec | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise PreconditionError("fiber integral is not finite at some base point")

    def to_dict(self) -> dict:
        return _jsonable({"points": self.points, "phi_tilde": self.values, "q_sums": self.q_sums,
                          "quadrature": self.quadrature,
                          "grid": None if self.grid is None else self.grid.to_dict()})

    def to_csv(self) -> str:
        n = self.points.shape[1]
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow([f"{c}{j}" for j in range(1, n + 1) for c in ("x", "y")] + ["phi_tilde", "q_sum"])
        for z, v, s in zip(self.points, self.values, self.q_sums):
            wr.writerow([f"{x:.17g}" for j in range(n) for x in (z[j].real, z[j].imag)]
                        + [f"{v:.17g}", f"{s:.17g}"])
        return buf.getvalue()


def fiber_weight(phi: Weight, n: int, rule: Rule, chunk: int = 2 ** 22) -> Weight:
    """φ̃ as a Weight on the base (finite-difference Hessians)."""
    logw = np.log(rule.weights)

    def evaluator(z):
        z = np.asarray(z, dtype=complex)
        flat = z.reshape(-1, n)
        out = np.empty(len(flat))
        step = max(1, chunk // rule.size)
        for s in range(0, len(flat), step):
            zz = flat[s:s + step]
            pts = np.concatenate([np.broadcast_to(zz[:, None, :], (len(zz), rule.size, n)),
                                  np.broadcast_to(rule.nodes[None], (len(zz),) + rule.nodes.shape)], axis=-1)
            vals = np.asarray(phi._eval(pts), dtype=float)
            out[s:s + step] = -logsumexp(logw - vals, axis=-1)
        return out.reshape(z.shape[:-1])

    return Weight(evaluator, n, expression=f"fiber integral of {phi.expression}")


def fiber_integrate_prekopa(phi: Weight, n: int, fiber: Domain, base, q: int = 1, c: float = 0.0,
                            radial: int = 1250, angular: int = 8, h_step: float = DEFAULT_FD_STEP,
                            base_domain: Domain | None = None, tol: float = PREKOPA_TOL):
    """Fiber-integrate e^{−φ} over a Reinhardt fiber and test ∂∂̄φ̃ on base points.

    ``base`` is a GridSpec (cell-centred base grid) or an array of base points.
    Returns (FiberIntegralField, PositivityReport); q ≥ 2 reports are exploratory.
    """
    if phi.n != n + fiber.n:
        raise InputError(f"weight has {phi.n} variables, expected {n} base + {fiber.n} fiber")
    if not 1 <= q <= n:
        raise InputError(f"q={q} outside [1, {n}]")
    grid = base if isinstance(base, GridSpec) else None
    pts = grid.coords() if grid is not None else np.asarray(base, dtype=complex).reshape(-1, n)
    if grid is not None and grid.n != n:
        raise InputError("base grid dimension differs from n")
    if base_domain is not None:
        pts = pts[base_domain.contains(pts, margin=2 * h_step)]
    validate_reinhardt_invariance(phi, n, pts, fiber)
    rule = reinhardt_rule(fiber, radial, angular)
    tilde = fiber_weight(phi, n, rule)
    values = tilde(pts)
    hs = fd_hessian(tilde, pts, h_step)
    sums = np.array([q_smallest_sum(np.linalg.eigvalsh(h), q) for h in hs])
    k = int(np.argmin(sums))
    passed = bool(sums[k] >= c - tol)
    status = "theorem (Reinhardt fiber)" if q == 1 else "exploration"
    details = {"fiber": fiber.to_dict(), "quadrature_nodes": rule.size, "h_step": h_step}
    if q >= 2 and not passed:
        details["label"] = "potential counterexample; verify analytically"
    report = PositivityReport("prekopa_fiber_integral", q, float(c), float(sums[k]), pts[k],
                              tuple(range(1, q + 1)), passed, len(pts), tol, status, details)
    field_ = FiberIntegralField(pts, values, sums,
                                {"radial_nodes": radial, "angular_nodes": angular, "nodes": rule.size,
                                 "scheme": "Gauss-Legendre in |w_j| x trapezoid in arg w_j"}, grid)
    return field_, report
