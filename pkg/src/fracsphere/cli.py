"""Command-line front end: ``fracsphere <command> [options]``."""
from __future__ import annotations

import argparse
import json
import sys
from importlib.resources import files
from pathlib import Path

import numpy as np

from . import __version__
from .covariance import DivergentVarianceError, covariance_matrix, mode_weights
from .model import (AdmissibilityError, ConfigError, check_admissibility, load_config,
                    pathwise_coefficients, sample_cauchy, sample_combined, sample_solution_pathwise)
from .specfun import MittagLefflerError, mittag_leffler
from .sphere_basis import SpherePoint, make_grid, synthesize
from .stochastic import FbmError
from .studies import chebyshev_tail_check, gap_sweep, increment_bound_study, truncation_rate_study
from .validation import check_addition_theorem, check_kernel_trace, check_transforms, run_validation

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_ADMISSIBILITY, EXIT_NUMERICAL = 0, 1, 2, 3, 4

COMMANDS = ("ml", "vsh-check", "sample", "cauchy", "combined", "covariance",
            "truncation-study", "increment-study", "chebyshev", "validate")


class ValidationFailure(Exception):
    pass


def default_config_path():
    return files("fracsphere") / "data" / "default_config.json"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _dumps(obj):
    return json.dumps(_jsonable(obj), indent=1, sort_keys=True, allow_nan=True) + "\n"


class Run:
    """Resolved configuration plus output helpers for one invocation."""

    def __init__(self, args):
        path = args.config or str(default_config_path())
        self.params, self.spectra, raw = load_config(path)
        raw = dict(raw)
        for key in ("t", "t0", "L", "nu", "eps", "replicates", "seed", "workers", "format"):
            val = getattr(args, key, None)
            if val is not None:
                raw[key] = val
        if args.t0 is not None or args.L is not None or args.nu is not None:
            if args.nu is not None:
                if raw["spectra"].get("family") != "power":
                    raise ConfigError("--nu needs parametric spectra")
                raw["spectra"] = dict(raw["spectra"], nu=args.nu)
            self.params, self.spectra, raw = load_config(raw)
        self.raw = raw
        self.command = args.command
        self.t = float(raw.get("t", 1.0))
        if self.t < 0:
            raise ConfigError("t must be >= 0")
        self.seed = int(raw.get("seed", 0))
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        self.replicates = int(raw.get("replicates", 1000))
        self.workers = int(raw.get("workers", 1))
        self.fmt = raw.get("format", "csv")
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"unknown output format {self.fmt!r}")
        self.out = Path(args.out)
        self.written = []

    @property
    def metadata(self):
        # the worker count is an execution detail: outputs must not depend on it
        config = {k: v for k, v in self.raw.items() if k != "workers"}
        return {"program": "fracsphere", "version": __version__, "command": self.command,
                "seed": self.seed, "config": config}

    def _path(self, name):
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        self.written.append(str(p))
        return p

    def write_json(self, name, payload):
        body = {"metadata": self.metadata}
        body.update(payload)
        with open(self._path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_dumps(body))

    def csv_header(self):
        return "# " + json.dumps(_jsonable(self.metadata), sort_keys=True)

    def write_csv(self, name, columns, rows):
        lines = [self.csv_header(), ",".join(columns)]
        for r in rows:
            lines.append(",".join(_fmt(r[c]) for c in columns))
        with open(self._path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    def require_admissible(self):
        rep = check_admissibility(self.params, self.spectra)
        if not rep.ok:
            raise AdmissibilityError("; ".join(rep.messages))
        return rep


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# commands ---------------------------------------------------------------

def cmd_ml(run, args):
    cfg = run.raw.get("ml", {})
    a = args.a if args.a is not None else float(cfg.get("a", run.params.beta))
    b = args.b if args.b is not None else float(cfg.get("b", a))
    z = [float(v) for v in args.z.split(",")] if args.z else [float(v) for v in cfg.get("z", [0.0])]
    vals = mittag_leffler(a, b, np.asarray(z))
    rows = [{"a": a, "b": b, "z": zi, "value": float(v)} for zi, v in zip(z, np.atleast_1d(vals))]
    if run.fmt == "json":
        run.write_json("ml.json", {"values": rows})
    else:
        run.write_csv("ml.csv", ["a", "b", "z", "value"], rows)


def cmd_vsh_check(run, args):
    checks = [check_addition_theorem(run.seed), check_kernel_trace(run.seed),
              check_transforms(run.seed, L=min(run.spectra.L, 32))]
    ok = all(c["passed"] for c in checks)
    run.write_json("vsh_check.json", {"checks": checks, "passed": ok})
    if not ok:
        raise ValidationFailure("vector harmonic checks failed")


def _grid(run):
    return make_grid(int(run.raw.get("grid_L", run.spectra.L + 1)))


def _emit_coefficients(run, name, coeffs, time):
    if run.fmt == "json":
        run.write_json(f"{name}.json", {"t": time, "L": coeffs.L,
                                        "coefficients": coeffs.to_records()})
    else:
        g = _grid(run)
        field = synthesize(coeffs, g.theta, g.phi, time)
        _write_field(run, f"{name}.csv", field)


def _write_field(run, name, field):
    vals = field.values
    cols = ["theta", "phi", "re_x", "im_x", "re_y", "im_y", "re_z", "im_z"]
    rows = []
    for th, ph, v in zip(field.theta, field.phi, vals):
        rows.append(dict(zip(cols, [th, ph, v[0].real, v[0].imag, v[1].real, v[1].imag,
                                    v[2].real, v[2].imag])))
    run.write_csv(name, cols, rows)


def cmd_sample(run, args):
    run.require_admissible()
    g = _grid(run)
    if run.fmt == "json":
        c = pathwise_coefficients(run.params, run.spectra, run.t, run.seed, workers=run.workers)
        _emit_coefficients(run, "sample", c, run.t)
    else:
        field = sample_solution_pathwise(run.params, run.spectra, run.t, g, run.seed, workers=run.workers)
        _write_field(run, "sample.csv", field)


def cmd_cauchy(run, args):
    c = sample_cauchy(run.params, run.spectra, run.t, run.seed, workers=run.workers)
    _emit_coefficients(run, "cauchy", c, run.t)


def cmd_combined(run, args):
    run.require_admissible()
    c = sample_combined(run.params, run.spectra, run.t, run.seed, workers=run.workers)
    _emit_coefficients(run, "combined", c, run.t)


def cmd_covariance(run, args):
    run.require_admissible()
    pairs = run.raw.get("covariance", {}).get("pairs", [[1.0, 0.5, 1.0, 0.5]])
    w = mode_weights(run.params, run.spectra, run.t)
    out = []
    for th1, ph1, th2, ph2 in pairs:
        x, y = SpherePoint(th1, ph1), SpherePoint(th2, ph2)
        C = covariance_matrix(run.params, run.spectra, run.t, x, y, weights=w)
        out.append(((th1, ph1, th2, ph2), C))
    if run.fmt == "json":
        run.write_json("covariance.json", {"t": run.t, "matrices": [
            {"x": [a, b], "y": [c, d], "re": C.real, "im": C.imag} for (a, b, c, d), C in out]})
    else:
        cols = ["theta_x", "phi_x", "theta_y", "phi_y"]
        cols += [f"{p}_{i}{j}" for i in range(3) for j in range(3) for p in ("re", "im")]
        rows = []
        for (a, b, c, d), C in out:
            r = {"theta_x": a, "phi_x": b, "theta_y": c, "phi_y": d}
            for i in range(3):
                for j in range(3):
                    r[f"re_{i}{j}"], r[f"im_{i}{j}"] = C[i, j].real, C[i, j].imag
            rows.append(r)
        run.write_csv("covariance.csv", cols, rows)


def cmd_truncation(run, args):
    run.require_admissible()
    L_list = run.raw.get("truncation", {}).get("L_list", [8, 16, 32, 64, 128])
    fit, rows, summary = truncation_rate_study(run.params, run.spectra, run.t, L_list)
    if run.fmt == "csv":
        run.write_csv("truncation.csv", ["L", "tail_norm"], rows)
    else:
        summary["table"] = rows
    run.write_json("truncation_summary.json", {"summary": summary})


def cmd_increments(run, args):
    run.require_admissible()
    cfg = run.raw.get("increments", {})
    pairs = gap_sweep(float(cfg.get("sum", 2.0)), cfg.get("gaps", (0.1, 0.01, 0.001)))
    rows, summary = increment_bound_study(run.params, run.spectra, pairs, float(cfg.get("factor", 4.0)))
    if run.fmt == "csv":
        run.write_csv("increments.csv", ["t", "tau", "gap", "sum", "norm2", "ratio_power", "ratio_quartic"], rows)
    else:
        summary["table"] = rows
    run.write_json("increment_summary.json", {"summary": summary})


def cmd_chebyshev(run, args):
    run.require_admissible()
    cfg = run.raw.get("chebyshev", {})
    L = int(args.L if args.L is not None else cfg.get("L", run.spectra.L))
    spectra = run.spectra.with_L(L) if L != run.spectra.L else run.spectra
    eps = float(args.eps if args.eps is not None else cfg.get("eps", 0.1))
    n = int(args.replicates if args.replicates is not None else cfg.get("replicates", run.replicates))
    rep = chebyshev_tail_check(run.params, spectra, run.t, int(cfg.get("L_prime", max(1, L // 2))),
                               eps, n, run.seed, workers=run.workers)
    run.write_json("chebyshev.json", {"report": rep})


def cmd_validate(run, args):
    checks = run_validation(run.params, run.spectra, run.t, run.seed)
    ok = all(c["passed"] for c in checks)
    run.write_json("validate.json", {"checks": checks, "passed": ok})
    if not ok:
        failed = ", ".join(c["name"] for c in checks if not c["passed"])
        raise ValidationFailure(f"failed checks: {failed}")


HANDLERS = {
    "ml": cmd_ml, "vsh-check": cmd_vsh_check, "sample": cmd_sample, "cauchy": cmd_cauchy,
    "combined": cmd_combined, "covariance": cmd_covariance, "truncation-study": cmd_truncation,
    "increment-study": cmd_increments, "chebyshev": cmd_chebyshev, "validate": cmd_validate,
}


def build_parser():
    p = argparse.ArgumentParser(prog="fracsphere", description="Simulate and verify fractional "
                                "stochastic PDEs for tangent fields on the sphere.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration (default: shipped config)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="fracsphere_out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--t", type=float, help="observation time")
    p.add_argument("--t0", type=float, help="stage-switch time")
    p.add_argument("--L", type=int, help="truncation degree")
    p.add_argument("--nu", type=float, help="power-law decay exponent of the spectra")
    p.add_argument("--eps", type=float, help="Chebyshev threshold")
    p.add_argument("--replicates", type=int, help="Monte Carlo replicates")
    p.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("--a", type=float, help="ml: first index")
    p.add_argument("--b", type=float, help="ml: second index")
    p.add_argument("--z", help="ml: comma-separated arguments")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        run = Run(args)
        HANDLERS[args.command](run, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AdmissibilityError, DivergentVarianceError) as exc:
        print(f"admissibility violation: {exc}", file=sys.stderr)
        return EXIT_ADMISSIBILITY
    except ValidationFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (MittagLefflerError, FbmError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in run.written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
