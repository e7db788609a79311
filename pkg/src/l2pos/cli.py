"""Command-line front end: one JSON config in, a report directory out.

Exit status: 0 pass, 1 fail with a witness, 2 input error, 3 numerical error.
"""

from __future__ import annotations

import os

# thread count must be fixed before numpy loads its BLAS
if "L2POS_NUM_THREADS" in os.environ:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["L2POS_NUM_THREADS"])

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402
from pathlib import Path  # noqa: E402

import jsonschema  # noqa: E402
import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .core import eig_hermitian, subset_sums_oracle  # noqa: E402
from .errors import InputError, L2PosError, NumericalError  # noqa: E402
from .forms import commutator_operator  # noqa: E402
from .geometry import Domain, Weight, _jsonable, check_q_positive, check_uniform_q_positive  # noqa: E402

log = logging.getLogger("l2pos")

COMMANDS = ["check-positivity", "commutator", "solve-dbar", "verify-estimate",
            "probe-counterexample", "monotone-limit", "prekopa"]

_complex = {"oneOf": [{"type": "number"},
                      {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}]}
_domain = {
    "type": "object",
    "required": ["kind", "radii"],
    "properties": {
        "kind": {"enum": ["polydisc", "ball", "box"]},
        "n": {"type": "integer", "minimum": 1},
        "center": {"type": "array", "items": _complex},
        "radii": {"oneOf": [{"type": "number", "exclusiveMinimum": 0},
                            {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}}]},
        "inner_radii": {"type": "array", "items": {"type": "number", "minimum": 0}},
    },
    "additionalProperties": False,
}
_grid = {
    "type": "object",
    "required": ["points_per_axis"],
    "properties": {
        "points_per_axis": {"type": "integer", "minimum": 16},
        "half_width": {"type": "number", "exclusiveMinimum": 0},
        "lower": {"type": "array", "items": {"type": "number"}},
        "upper": {"type": "array", "items": {"type": "number"}},
    },
    "additionalProperties": False,
}
CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["command"],
    "properties": {
        "command": {"enum": COMMANDS},
        "n": {"type": "integer", "minimum": 1, "maximum": 12},
        "weight": {"type": "string"},
        "psi": {"type": "string"},
        "sequence": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "limit": {"type": "string"},
        "exact_derivatives": {"type": "boolean"},
        "criterion": {"enum": ["uniform", "q_positive"]},
        "q": {"type": "integer", "minimum": 0},
        "c": {"type": "number", "minimum": 0},
        "domain": _domain,
        "grid": _grid,
        "samples": {"type": "integer", "minimum": 1, "maximum": 1_000_000},
        "tolerance": {"type": "number", "minimum": 0},
        "theta": {"type": "array", "items": {"type": "array", "items": _complex}},
        "source": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": ["probe", "constant"]},
                           "radius": {"type": "number", "exclusiveMinimum": 0},
                           "value": _complex},
            "additionalProperties": False,
        },
        "witness": {"type": "array", "items": _complex},
        "r": {"type": "number", "exclusiveMinimum": 0},
        "m_schedule": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "fiber": _domain,
        "fiber_dim": {"type": "integer", "minimum": 1},
        "base_samples": {"type": "integer", "minimum": 1},
        "radial_nodes": {"type": "integer", "minimum": 2},
        "angular_nodes": {"type": "integer", "minimum": 1},
        "plot": {"type": "boolean"},
    },
    "additionalProperties": False,
}


class Outcome:
    """Result of one command: report payload, pass flag and files to write."""

    def __init__(self, results: dict, passed: bool, files: dict | None = None, plots=None):
        self.results = results
        self.passed = passed
        self.files = files or {}
        self.plots = plots or []


def _c(v) -> complex:
    return complex(*v) if isinstance(v, list) else complex(v)


def _need(cfg: dict, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise InputError(f"config: command {cfg['command']!r} requires field(s) {', '.join(missing)}")


def _weight(cfg, text, n=None, m=0) -> Weight:
    return Weight.from_expression(text, cfg["n"] if n is None else n, m,
                                  exact=cfg.get("exact_derivatives", True))


def _domain_of(cfg, key="domain", n=None) -> Domain:
    spec = dict(cfg[key])
    spec.setdefault("n", cfg.get("n") if n is None else n)
    d = Domain.from_dict(spec)
    if n is not None and d.n != n:
        raise InputError(f"config: {key} lives in C^{d.n}, expected C^{n}")
    return d


def _grid_of(cfg):
    from .solver import GridSpec
    g, n = cfg["grid"], cfg["n"]
    if "lower" in g or "upper" in g:
        return GridSpec(n, tuple(g["lower"]), tuple(g["upper"]), g["points_per_axis"])
    return GridSpec.square(n, g.get("half_width", 1.0), g["points_per_axis"])


# ---------------------------------------------------------------------------
# commands


def cmd_check_positivity(cfg, out: Path, plot: bool = False) -> Outcome:
    _need(cfg, "n", "weight", "q", "domain")
    w = _weight(cfg, cfg["weight"])
    d = _domain_of(cfg, n=w.n)
    samples = cfg.get("samples", 256)
    kw = {"tol": cfg["tolerance"]} if "tolerance" in cfg else {}
    if cfg.get("criterion", "uniform") == "uniform":
        rep = check_uniform_q_positive(w, cfg["q"], cfg.get("c", 0.0), d, samples, **kw)
    else:
        rep = check_q_positive(w, cfg["q"], d, samples, **kw)
    pts = d.sample(samples)
    lam = np.linalg.eigvalsh(w.hess(pts))
    rows = ["point," + ",".join(f"x{j},y{j}" for j in range(1, w.n + 1)) + ","
            + ",".join(f"lambda{k}" for k in range(1, w.n + 1))]
    for i, (z, l) in enumerate(zip(pts, lam)):
        rows.append(",".join([str(i)] + [f"{x:.17g}" for v in z for x in (v.real, v.imag)]
                             + [f"{x:.17g}" for x in l]))
    return Outcome(rep.to_dict(), rep.passed, {"eigenvalues.csv": "\n".join(rows) + "\n"})


def cmd_commutator(cfg, out: Path, plot: bool = False) -> Outcome:
    _need(cfg, "theta", "q")
    theta = np.array([[_c(v) for v in row] for row in cfg["theta"]])
    op = commutator_operator(theta, cfg["q"])
    spec = eig_hermitian(op.matrix)
    res = {"operator": op.to_json(), "eigenvalues": spec.eigenvalues,
           "theta_eigenvalues": eig_hermitian(theta).eigenvalues,
           "lambda_min": float(spec.eigenvalues[0])}
    if theta.shape[0] <= 12:
        res["subset_sums"] = subset_sums_oracle(theta, cfg["q"])
    return Outcome(res, True)


def _source(cfg, grid, q, mask):
    from .solver import GridField, probe_source
    src = cfg.get("source", {"kind": "probe"})
    if src["kind"] == "probe":
        return probe_source(grid, q, src.get("radius", 0.75)), False
    vals = np.zeros((grid.size, len(GridField.zeros(grid, q).values[0])), dtype=complex)
    vals[mask, 0] = _c(src.get("value", 1.0))
    return GridField(grid, q, vals), True


def cmd_solve_dbar(cfg, out: Path, plot: bool = False) -> Outcome:
    from .solver import domain_mask, minimal_solution
    _need(cfg, "n", "weight", "grid")
    grid = _grid_of(cfg)
    q = cfg.get("q", 1)
    mask = domain_mask(grid, _domain_of(cfg, n=grid.n) if "domain" in cfg else None)
    w = _weight(cfg, cfg["weight"])
    f, boundary = _source(cfg, grid, q, mask)
    wv = np.zeros(grid.size)
    wv[mask] = w(grid.coords()[mask])
    u, rep = minimal_solution(f, wv, mask=mask, allow_boundary_source=boundary)
    res = rep.to_dict()
    res["grid"] = grid.to_dict()
    plots = []
    if plot or cfg.get("plot"):
        from . import plotting
        plots.append(plotting.field_modulus(grid, u.values, out / "solution.png"))
    return Outcome(res, True, {"solution.csv": u.to_csv()}, plots)


def cmd_verify_estimate(cfg, out: Path, plot: bool = False) -> Outcome:
    from .solver import domain_mask, estimate_ratio
    _need(cfg, "n", "weight", "psi", "grid")
    grid = _grid_of(cfg)
    q = cfg.get("q", 1)
    mask = domain_mask(grid, _domain_of(cfg, n=grid.n) if "domain" in cfg else None)
    f, _ = _source(cfg, grid, q, mask)
    if cfg.get("source", {}).get("kind") == "constant":
        raise InputError("config: verify-estimate needs a compactly supported source (kind 'probe')")
    rep = estimate_ratio(f, _weight(cfg, cfg["weight"]), _weight(cfg, cfg["psi"]), cfg.get("c", 0.0),
                         q, mask=mask)
    tol = cfg.get("tolerance", 0.15)
    res = rep.to_dict()
    res["tolerance"] = tol
    res["pass"] = bool(rep.ratio <= 1.0 + tol)
    return Outcome(res, res["pass"])


def cmd_probe(cfg, out: Path, plot: bool = False) -> Outcome:
    from .probes import DEFAULT_SCHEDULE, probe_counterexample
    _need(cfg, "n", "weight", "q")
    w = _weight(cfg, cfg["weight"])
    witness = [_c(v) for v in cfg.get("witness", [0.0] * w.n)]
    if len(witness) != w.n:
        raise InputError(f"config: witness needs {w.n} coordinates")
    d = _domain_of(cfg, n=w.n) if "domain" in cfg else None
    rep = probe_counterexample(w, cfg["q"], cfg.get("c", 0.0), witness, cfg.get("r", 0.5), d,
                               tuple(cfg.get("m_schedule", DEFAULT_SCHEDULE)))
    plots = []
    if plot or cfg.get("plot"):
        from . import plotting
        plots.append(plotting.probe_trace(rep.values, out / "probe_trace.png"))
    res = rep.to_dict()
    res["pass"] = not rep.found_negative
    return Outcome(res, not rep.found_negative, {"probe_trace.csv": rep.to_csv()}, plots)


def cmd_monotone(cfg, out: Path, plot: bool = False) -> Outcome:
    from .probes import monotone_limit_check
    _need(cfg, "n", "sequence", "limit", "q", "domain")
    seq = [_weight(cfg, t) for t in cfg["sequence"]]
    lim = _weight(cfg, cfg["limit"])
    c = cfg.get("c", 0.0)
    rep = monotone_limit_check(seq, lim, cfg["q"], c, _domain_of(cfg, n=lim.n), cfg.get("samples", 256))
    csv_text = "j,min_q_sum,pass\n" + "".join(
        f"{j},{v:.17g},{int(p)}\n" for j, (v, p) in enumerate(zip(rep.sequence_minima, rep.sequence_passed), 1))
    csv_text += f"limit,{rep.limit_minimum:.17g},{int(rep.limit_passed)}\n"
    plots = []
    if plot or cfg.get("plot"):
        from . import plotting
        plots.append(plotting.monotone_minima(rep.sequence_minima, rep.limit_minimum, c, out / "monotone.png"))
    return Outcome(rep.to_dict(), rep.passed, {"monotone.csv": csv_text}, plots)


def cmd_prekopa(cfg, out: Path, plot: bool = False) -> Outcome:
    from .probes import fiber_integrate_prekopa
    _need(cfg, "n", "weight", "fiber")
    n = cfg["n"]
    fiber = _domain_of(cfg, "fiber", n=cfg.get("fiber_dim", len(cfg["fiber"].get("center", [0]))))
    phi = _weight(cfg, cfg["weight"], n, fiber.n)
    base_domain = _domain_of(cfg, n=n) if "domain" in cfg else None
    if "grid" in cfg:
        base = _grid_of(cfg)
    elif base_domain is not None:
        base = base_domain.sample(cfg.get("base_samples", 64))
    else:
        raise InputError("config: prekopa needs a base 'grid' or a base 'domain'")
    field_, rep = fiber_integrate_prekopa(phi, n, fiber, base, cfg.get("q", 1), cfg.get("c", 0.0),
                                          cfg.get("radial_nodes", 1250), cfg.get("angular_nodes", 8),
                                          base_domain=base_domain if "grid" in cfg else None,
                                          **({"tol": cfg["tolerance"]} if "tolerance" in cfg else {}))
    plots = []
    if plot or cfg.get("plot"):
        from . import plotting
        plots.append(plotting.base_scatter(field_.points, field_.q_sums, out / "prekopa.png", "q-sum"))
    return Outcome({"report": rep.to_dict(), "field": field_.to_dict()}, rep.passed,
                   {"prekopa.csv": field_.to_csv()}, plots)


HANDLERS = {"check-positivity": cmd_check_positivity, "commutator": cmd_commutator,
            "solve-dbar": cmd_solve_dbar, "verify-estimate": cmd_verify_estimate,
            "probe-counterexample": cmd_probe, "monotone-limit": cmd_monotone, "prekopa": cmd_prekopa}


# ---------------------------------------------------------------------------
# driver


def load_config(path: Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"config is not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg) -> None:
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(CONFIG_SCHEMA).iter_errors(cfg))
    if err is not None:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise InputError(f"config field {where}: {err.message}")


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def run(cfg: dict, out: Path, plot: bool = False) -> int:
    """Execute one validated config, writing report.json and companions into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    outcome = HANDLERS[cfg["command"]](cfg, out, plot)
    elapsed = time.perf_counter() - t0
    report = {"tool": "l2pos", "version": __version__, "config": cfg,
              "results": outcome.results, "pass": outcome.passed}
    (out / "report.json").write_text(_dump(report))
    for name, text in outcome.files.items():
        (out / name).write_text(text)
    # wall-clock numbers live apart so report.json stays byte-identical across runs
    (out / "timings.json").write_text(_dump({"command": cfg["command"], "seconds": elapsed}))
    for p in outcome.plots:
        log.info("wrote %s", p)
    return 0 if outcome.passed else 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="l2pos", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", default="l2pos-out", help="output directory")
    ap.add_argument("--plot", action="store_true", help="also render PNG figures")
    ap.add_argument("--verbose", action="store_true")
    ap.add_argument("--version", action="version", version=f"l2pos {__version__}")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(Path(args.config))
        status = run(cfg, Path(args.out), plot=args.plot)
    except InputError as exc:
        print(f"l2pos: input error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"l2pos: numerical error: {exc}", file=sys.stderr)
        return 3
    except L2PosError as exc:
        print(f"l2pos: error: {exc}", file=sys.stderr)
        return 3
    log.info("exit status %d", status)
    return status


if __name__ == "__main__":
    sys.exit(main())
