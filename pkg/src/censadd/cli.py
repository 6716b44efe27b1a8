"""Command-line front end.

Subcommands::

    censadd simulate          simulate the two-covariate design, fit, band and plot
    censadd fit --data F      fit a z,delta,x1..xd file
    censadd coverage          band coverage over replications
    censadd km --data F       Kaplan-Meier censoring survival curve
    censadd check-bandwidths  power-law bandwidth conditions

Settings come from built-in defaults, then an optional flat ``key = value``
file (``--config``), then ``--set key=value`` overrides. The default seed
can be set with the ``CENSADD_SEED`` environment variable. Every run writes
``manifest.json`` with the resolved settings next to its outputs.

Exit codes: 0 success, 1 a bandwidth condition fails, 2 invalid input,
3 numerical failure.
"""

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .asymptotics import PowerLawSpec, check_power_law
from .bands import TAU_FORMS, component_band, grid_coverage, write_band_csv
from .data_model import (
    PsiFunction,
    empirical_censoring_rate,
    format_float,
    generate_simulation,
    load_csv,
    two_covariate_model,
    write_csv,
)
from .errors import (
    ConsistencyError,
    DegenerateDensityError,
    DivergenceError,
    QuadratureError,
    SchemaError,
    ValidationError,
)
from .ipcw import BandwidthPlan, EstimatorConfig, GModel
from .marginal import IntegrationDensity, fit_additive, true_eta, write_fit_csv
from .survival import km_censoring_survival

log = logging.getLogger("censadd")

SEED_ENV = "CENSADD_SEED"
EXIT_OK, EXIT_CONDITION, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
MODES = ("fit", "simulate", "coverage", "km", "check-bandwidths")


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings of one run. Lists are comma-separated in files."""

    mode: str = "simulate"
    data: str = ""
    out: str = "censadd-out"
    d: int = 2
    n: int = 1000
    seed: int = 0
    reps: int = 1
    workers: int = 1
    h: tuple = (0.1,)
    h_density: float = 0.0  # 0 means: same as the first axis bandwidth
    kernel: str = "epanechnikov"
    density_kernel: str = "epanechnikov"
    q_low: float = -1.0
    q_high: float = 1.0
    psi: str = "indicator:0.9"
    grid: int = 201
    epsilon: tuple = (0.25,)
    tau_form: str = "consistent"
    interior: tuple = (-0.9, 0.9)
    g: str = "estimated"
    f: str = "estimated"
    censor_max: float = 1.0
    svg: bool = True
    a0: float = 0.05
    a: tuple = (0.21, 0.21)
    s: int = 2
    p: float = 0.5

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")
        if any(v <= 0 for v in self.h) or self.h_density < 0:
            raise ValidationError("bandwidths must be positive")
        if self.grid < 2:
            raise ValidationError("grid size must be >= 2")
        if self.n < 1 or self.reps < 1 or self.workers < 1:
            raise ValidationError("n, reps and workers must be >= 1")
        if self.tau_form not in TAU_FORMS:
            raise ValidationError(f"tau_form must be one of {TAU_FORMS}")
        if self.g not in ("estimated", "known") or self.f not in ("estimated", "known"):
            raise ValidationError("g and f must be 'estimated' or 'known'")
        if len(self.interior) != 2 or self.interior[0] >= self.interior[1]:
            raise ValidationError("interior must be two increasing numbers")
        if self.mode == "fit" and not Path(self.data).is_file():
            raise ValidationError(f"data file not found: {self.data or '<unset>'}")
        if self.mode == "fit" and (self.g == "known" or self.f == "known"):
            raise ValidationError("known G or f is only available for simulated data")

    @classmethod
    def from_mapping(cls, values):
        kinds = {f.name: f.type if isinstance(f.type, str) else f.type.__name__
                 for f in fields(cls)}
        kw = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key not in kinds:
                raise ValidationError(f"unknown setting {key!r}")
            kind = kinds[key]
            try:
                if kind == "tuple":
                    kw[key] = _floats(raw) if isinstance(raw, str) else tuple(map(float, raw))
                elif kind == "int":
                    kw[key] = int(raw)
                elif kind == "float":
                    kw[key] = float(raw)
                elif kind == "bool":
                    kw[key] = str(raw).strip().lower() in ("1", "true", "yes", "on")
                else:
                    kw[key] = str(raw).strip()
            except ValueError:
                raise ValidationError(f"bad value for {key}: {raw!r}") from None
        return cls(**kw)

    def to_text(self):
        lines = []
        for k, v in asdict(self).items():
            if isinstance(v, tuple):
                v = ",".join(format(x, "g") for x in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    # derived objects ---------------------------------------------------
    def axis_bandwidths(self):
        h = self.h if len(self.h) > 1 else self.h * self.d
        if len(h) != self.d:
            raise ValidationError(f"need 1 or {self.d} bandwidths, got {len(self.h)}")
        return h

    def plan(self):
        h = self.axis_bandwidths()
        return BandwidthPlan(self.h_density or h[0], h)

    def q(self):
        return [IntegrationDensity.uniform(self.q_low, self.q_high)] * self.d

    def psi_function(self):
        kind, _, arg = self.psi.partition(":")
        try:
            value = float(arg) if arg else None
        except ValueError:
            raise ValidationError(f"bad psi argument {arg!r}") from None
        if kind == "indicator" and value is not None:
            return PsiFunction.indicator(value)
        if kind in ("identity", "identity-truncated") and value is not None:
            return PsiFunction.identity_truncated(value)
        if kind == "constant":
            return PsiFunction.constant(1.0 if value is None else value)
        raise ValidationError(f"unknown psi {self.psi!r} (indicator:t, identity:w, constant:c)")

    def model(self):
        if self.d != 2:
            raise ValidationError("the simulation design has d = 2")
        return two_covariate_model(self.seed, self.psi_function(), censor_max=self.censor_max)

    def estimator_config(self, truth=None):
        g, f = "estimated", "estimated"
        if self.g == "known":
            g = GModel.known(truth.G)
        if self.f == "known":
            f = truth.f
        return EstimatorConfig(self.plan(), self.psi_function(), self.kernel,
                               self.density_kernel, g, f)


def read_config_file(path):
    """Parse a flat ``key = value`` file (``#`` starts a comment)."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValidationError(f"{path}:{lineno}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def resolve_config(mode, config_path=None, overrides=(), env=None):
    env = os.environ if env is None else env
    values = {"mode": mode}
    if SEED_ENV in env:
        values["seed"] = env[SEED_ENV]
    if config_path:
        values.update(read_config_file(config_path))
        values["mode"] = mode
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"override {item!r} is not key=value")
        values[key.strip()] = value.strip()
    return RunConfig.from_mapping(values)


# pipeline ---------------------------------------------------------------
def analyze(sample, config, truth=None, epsilon=None):
    """Fit every component and its band; returns ``(estimator, fit, bands)``."""
    if sample.d != config.d:
        raise ValidationError(f"data has d = {sample.d} covariates, config says d = {config.d}")
    est = config.estimator_config(truth).build(sample)
    q = config.q()
    fit = fit_additive(est, config.grid, q)
    eps = config.epsilon[0] if epsilon is None else epsilon
    bands = [component_band(fit, ell, est, q, eps, config.tau_form) for ell in range(config.d)]
    return est, fit, bands


def truth_curves(truth, config, grids):
    q = config.q()
    return [true_eta(truth, ell, g, q) for ell, g in enumerate(grids)]


def _coverage_replication(args):
    config, rep = args
    model = config.model()
    sample, truth = generate_simulation(model, config.n, rep)
    est, fit, bands = analyze(sample, config, truth, epsilon=0.0)
    eta = truth_curves(truth, config, fit.grids)
    rows = []
    for eps in config.epsilon:
        inflated = [b.inflated(eps) for b in bands]
        per_axis = [grid_coverage(b, eta[b.ell], config.interior) for b in inflated]
        pooled = _pooled_coverage(inflated, eta, config.interior)
        rows.append((rep, eps, pooled, per_axis, empirical_censoring_rate(sample)))
    return rows


def _pooled_coverage(bands, eta, interior):
    hits, total = 0, 0
    for b in bands:
        mask = (b.grid >= interior[0] - 1e-12) & (b.grid <= interior[1] + 1e-12)
        hits += int(np.sum(b.contains(eta[b.ell])[mask]))
        total += int(mask.sum())
    return hits / total


def run_coverage(config):
    """Coverage table: one row per replication and epsilon.

    Each row is ``(replication, epsilon, pooled, per_axis, censoring_rate)``
    where ``pooled`` is the fraction of interior grid points of all
    components with the true component inside the band.
    """
    jobs = [(config, rep) for rep in range(config.reps)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_coverage_replication, jobs))
    else:
        results = [_coverage_replication(j) for j in jobs]
    return [row for rows in results for row in rows]


def summarize_coverage(rows, threshold=0.95):
    out = {}
    for eps in sorted({r[1] for r in rows}):
        vals = np.array([r[2] for r in rows if r[1] == eps])
        out[eps] = {
            "reps": int(vals.size),
            "at_least_threshold": int(np.sum(vals >= threshold)),
            "full": int(np.sum(vals >= 1.0)),
            "quantiles": {str(p): float(np.quantile(vals, p)) for p in (0.0, 0.1, 0.25, 0.5, 0.75, 1.0)},
        }
    return out


# outputs ----------------------------------------------------------------
def write_manifest(config, out_dir, extra=None):
    out_dir = Path(out_dir)
    payload = {"config": {k: list(v) if isinstance(v, tuple) else v
                          for k, v in asdict(config).items()}}
    if extra:
        payload.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def write_svg(path, fit, bands, truth=None, interior=(-0.9, 0.9)):
    """One panel per component: band polygon, estimate, optional truth, boundary zone."""
    width, height, pad = 360, 260, 30
    d = fit.d
    lows = [np.min(b.lower) for b in bands] + ([np.min(t) for t in truth] if truth else [])
    highs = [np.max(b.upper) for b in bands] + ([np.max(t) for t in truth] if truth else [])
    ylo, yhi = float(min(lows)), float(max(highs))
    if yhi <= ylo:
        yhi = ylo + 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width * d}" height="{height}" '
        f'viewBox="0 0 {width * d} {height}">'
    ]
    for ell, band in enumerate(bands):
        g = band.grid
        x0, x1 = float(g.min()), float(g.max())
        left = ell * width

        def sx(v, left=left, x0=x0, x1=x1):
            return left + pad + (np.asarray(v) - x0) / (x1 - x0) * (width - 2 * pad)

        def sy(v):
            return height - pad - (np.asarray(v) - ylo) / (yhi - ylo) * (height - 2 * pad)

        def pts(xs, ys):
            return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx(xs), sy(ys)))

        top, bottom = sy(yhi), sy(ylo)
        for lo_edge, hi_edge in ((x0, max(x0, interior[0])), (min(x1, interior[1]), x1)):
            if hi_edge > lo_edge:
                parts.append(
                    f'<rect class="boundary" x="{sx(lo_edge):.2f}" y="{top:.2f}" '
                    f'width="{sx(hi_edge) - sx(lo_edge):.2f}" height="{bottom - top:.2f}" '
                    'fill="#dddddd"/>'
                )
        poly = pts(np.concatenate([g, g[::-1]]), np.concatenate([band.upper, band.lower[::-1]]))
        parts.append(f'<polygon class="band" points="{poly}" fill="#9ecae1" fill-opacity="0.6"/>')
        parts.append(f'<polyline class="estimate" points="{pts(g, band.center)}" '
                     'fill="none" stroke="#08519c" stroke-dasharray="4 2"/>')
        if truth is not None:
            parts.append(f'<polyline class="truth" points="{pts(g, truth[ell])}" '
                         'fill="none" stroke="#000000"/>')
        parts.append(f'<text x="{left + pad}" y="{pad - 10}" font-size="12">component {ell + 1}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
    return path


def _write_outputs(out_dir, config, fit, bands, truth_eta=None):
    write_fit_csv(fit, out_dir / "fit.csv")
    write_band_csv(bands, out_dir / "bands.csv")
    if config.svg:
        write_svg(out_dir / "fit.svg", fit, bands, truth_eta, config.interior)


# subcommands ------------------------------------------------------------
def run_simulation_study(config, stream=sys.stdout):
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = config.model()
    sample, truth = generate_simulation(model, config.n, 0)
    write_csv(sample, out_dir / "sample.csv")
    est, fit, bands = analyze(sample, config, truth)
    eta = truth_curves(truth, config, fit.grids)
    _write_outputs(out_dir, config, fit, bands, eta)
    rate = empirical_censoring_rate(sample)
    print(f"P(delta=1) = {rate:.4f}  (n = {sample.n})", file=stream)
    print(f"mu_hat = {fit.mu:.6f}", file=stream)
    summary = {"censoring_rate": rate, "mu_hat": fit.mu}
    if config.reps > 1:
        rows = run_coverage(config)
        _print_coverage(rows, stream)
        _write_coverage_csv(rows, out_dir / "coverage.csv")
        summary["coverage"] = summarize_coverage(rows)
    write_manifest(config, out_dir, {"results": summary})
    return summary


def run_fit(config, stream=sys.stdout):
    out_dir = Path(config.out)
    sample = load_csv(config.data)
    if sample.d != config.d:
        raise ValidationError(f"data has d = {sample.d} covariates, config says d = {config.d}")
    out_dir.mkdir(parents=True, exist_ok=True)
    est, fit, bands = analyze(sample, config)
    _write_outputs(out_dir, config, fit, bands)
    print(f"n = {sample.n}, P(delta=1) = {empirical_censoring_rate(sample):.4f}",
          file=stream)
    print(f"mu_hat = {fit.mu:.6f}", file=stream)
    write_manifest(config, out_dir, {"results": {"mu_hat": fit.mu}})
    return fit, bands


def _print_coverage(rows, stream):
    print("rep  epsilon  pooled  " + "  ".join(f"axis{j + 1}" for j in range(len(rows[0][3]))),
          file=stream)
    for rep, eps, pooled, per_axis, _ in rows:
        cols = "  ".join(f"{v:.3f}" for v in per_axis)
        print(f"{rep:3d}  {eps:7g}  {pooled:.3f}   {cols}", file=stream)
    for eps, s in summarize_coverage(rows).items():
        qs = " ".join(f"q{k}={v:.3f}" for k, v in s["quantiles"].items())
        print(f"epsilon={eps:g}: >=0.95 in {s['at_least_threshold']}/{s['reps']}, "
              f"full in {s['full']}/{s['reps']}; {qs}", file=stream)


def _write_coverage_csv(rows, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        d = len(rows[0][3])
        w.writerow(["rep", "epsilon", "pooled"] + [f"axis{j + 1}" for j in range(d)] + ["p_delta"])
        for rep, eps, pooled, per_axis, rate in rows:
            w.writerow([rep, format_float(eps), format_float(pooled)]
                       + [format_float(v) for v in per_axis] + [format_float(rate)])


def run_coverage_cmd(config, stream=sys.stdout):
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = run_coverage(config)
    _print_coverage(rows, stream)
    _write_coverage_csv(rows, out_dir / "coverage.csv")
    summary = summarize_coverage(rows)
    write_manifest(config, out_dir, {"results": {str(k): v for k, v in summary.items()}})
    return rows


def run_km(config, stream=sys.stdout):
    out_dir = Path(config.out)
    sample = load_csv(config.data)
    out_dir.mkdir(parents=True, exist_ok=True)
    curve = km_censoring_survival(sample)
    with (out_dir / "km.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "survival"])
        for t, v in zip(curve.jump_times, curve.values):
            w.writerow([format_float(t), format_float(v)])
    print(f"{len(curve.jump_times)} censoring jump(s); G at last jump = "
          f"{format_float(curve.values[-1]) if len(curve.values) else '1'}", file=stream)
    write_manifest(config, out_dir)
    return curve


def run_check_bandwidths(config, stream=sys.stdout):
    spec = PowerLawSpec(config.a0, config.a, config.d, config.s, config.p)
    report = check_power_law(spec)
    print(report.table(), file=stream)
    return report


def build_parser():
    parser = argparse.ArgumentParser(prog="censadd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", help="flat key = value settings file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one setting (repeatable)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        if mode in ("fit", "km"):
            p.add_argument("--data", help="z,delta,x1..xd CSV file")
        if mode in ("simulate", "coverage"):
            p.add_argument("--n", type=int)
            p.add_argument("--reps", type=int)
        if mode == "check-bandwidths":
            p.add_argument("--a0", type=float)
            p.add_argument("--a", help="comma-separated axis exponents")
            p.add_argument("--d", type=int)
            p.add_argument("--s", type=int)
            p.add_argument("--p", type=float)
    return parser


def main(argv=None, stream=None):
    stream = stream or sys.stdout
    args = build_parser().parse_args(argv)
    overrides = list(args.set)
    for key in ("out", "seed", "data", "n", "reps", "a0", "a", "d", "s", "p"):
        value = getattr(args, key, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        config = resolve_config(args.mode, args.config, overrides)
        if args.mode == "simulate":
            run_simulation_study(config, stream)
        elif args.mode == "fit":
            run_fit(config, stream)
        elif args.mode == "coverage":
            run_coverage_cmd(config, stream)
        elif args.mode == "km":
            run_km(config, stream)
        else:
            report = run_check_bandwidths(config, stream)
            return EXIT_OK if report.ok else EXIT_CONDITION
    except (ValidationError, SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DivergenceError, DegenerateDensityError, QuadratureError, ConsistencyError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
