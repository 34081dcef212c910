"""Command-line front end.

    kerrchannel moments | correlators | capacity | pdf-check | validate

A run is described by one JSON document (see :class:`RunConfig`); flags
override individual fields.  Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from kerrchannel import analytic, pdfcheck
from kerrchannel.channel import ChannelParams, TimeGrid, reference_channel, validate_power_range
from kerrchannel.errors import ConfigError, DomainError, LayoutError, SolverError
from kerrchannel.montecarlo import (
    CSV_COLUMNS,
    EnsembleConfig,
    format_float,
    timed_run,
    write_csv,
)
from kerrchannel.propagation import RungeKutta, SplitStep
from kerrchannel.pulses import PulseEnvelope, check_overlap, envelope_moments

log = logging.getLogger("kerrchannel")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

ENVELOPE_CHOICES = ("gaussian", "cos2", "cos4", "rect")
NATS_PER_BIT = math.log(2.0)


@dataclass(frozen=True)
class SolverTolerances:
    residual: float = 1e-8
    pdf_sigmas: float = 12.0
    core_sigmas: float = 6.0


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs; serialises to a single JSON document."""

    channel: ChannelParams = field(default_factory=reference_channel)
    envelope: dict = field(default_factory=lambda: {"kind": "gaussian", "t0_over_t1": 10.0})
    ensemble: EnsembleConfig = field(
        default_factory=lambda: EnsembleConfig(
            realizations=200, pulses_per_frame=16, powers=(0.5e-3, 1e-3, 2e-3, 3e-3), integrator=SplitStep(25)
        )
    )
    solver: SolverTolerances = field(default_factory=SolverTolerances)
    capacity_powers: tuple = tuple(float(p) for p in np.logspace(-4, -1, 31))
    pdf_mu: tuple = (0.0, 0.5, 1.0, 3.0)
    histogram_samples: int = 0
    out_dir: Optional[str] = None
    bits: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "capacity_powers", tuple(float(p) for p in self.capacity_powers))
        object.__setattr__(self, "pdf_mu", tuple(float(m) for m in self.pdf_mu))
        if not self.capacity_powers or not all(math.isfinite(p) and p > 0 for p in self.capacity_powers):
            raise ConfigError("capacity_powers must be positive")
        if any(m < 0 for m in self.pdf_mu):
            raise ConfigError("pdf_mu values must be non-negative")
        if self.workers < 1 or self.histogram_samples < 0:
            raise ConfigError("workers must be >= 1 and histogram_samples >= 0")

    @property
    def grid(self) -> TimeGrid:
        return self.ensemble.grid(self.channel.slot_T0)

    def build_envelope(self) -> PulseEnvelope:
        return PulseEnvelope.from_dict(self.envelope, self.channel.slot_T0)

    def replace(self, **changes) -> "RunConfig":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return RunConfig(**values)

    def to_dict(self) -> dict:
        g = self.grid
        return {
            "channel": self.channel.to_dict(),
            "envelope": dict(self.envelope),
            "grid": {"total_T": g.total_T, "half_count_M": g.half_count_M},
            "ensemble": self.ensemble.to_dict(),
            "solver": {
                "residual": self.solver.residual,
                "pdf_sigmas": self.solver.pdf_sigmas,
                "core_sigmas": self.solver.core_sigmas,
            },
            "capacity_powers": list(self.capacity_powers),
            "pdf_mu": list(self.pdf_mu),
            "histogram_samples": self.histogram_samples,
            "out_dir": self.out_dir,
            "bits": self.bits,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        base = cls()
        try:
            ens = base.ensemble.to_dict()
            ens.update(data.get("ensemble", {}))
            cfg = cls(
                channel=ChannelParams.from_dict({**base.channel.to_dict(), **data.get("channel", {})}),
                envelope=dict(data.get("envelope", base.envelope)),
                ensemble=EnsembleConfig.from_dict(ens),
                solver=SolverTolerances(**data.get("solver", {})),
                capacity_powers=tuple(data.get("capacity_powers", base.capacity_powers)),
                pdf_mu=tuple(data.get("pdf_mu", base.pdf_mu)),
                histogram_samples=int(data.get("histogram_samples", 0)),
                out_dir=data.get("out_dir"),
                bits=bool(data.get("bits", False)),
                workers=int(data.get("workers", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad run config: {exc}") from exc
        grid = data.get("grid")
        if grid is not None:
            g = cfg.grid
            if int(grid["half_count_M"]) != g.half_count_M or not math.isclose(grid["total_T"], g.total_T, rel_tol=1e-12):
                raise ConfigError("grid does not match pulses_per_frame * samples_per_slot")
        return cfg

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc


def envelope_descriptor(spec: str) -> dict:
    if spec == "gaussian":
        return {"kind": "gaussian", "t0_over_t1": 10.0}
    if spec == "cos2":
        return {"kind": "cos", "n": 2}
    if spec == "cos4":
        return {"kind": "cos", "n": 4}
    if spec == "rect":
        return {"kind": "rect"}
    if spec.startswith("file:") and len(spec) > 5:
        return {"kind": "tabulated", "path": spec[5:]}
    raise ConfigError(f"--envelope must be one of {ENVELOPE_CHOICES} or file:<path>, got {spec!r}")


def _integrator(name: str, cfg: RunConfig):
    current = cfg.ensemble.integrator
    if name == "split-step":
        return current if isinstance(current, SplitStep) else SplitStep(25)
    if name == "rk4":
        return current if isinstance(current, RungeKutta) else RungeKutta.for_line(cfg.channel.length_L, 400, 1)
    raise ConfigError(f"unknown integrator {name!r}")


def load_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        try:
            cfg = RunConfig.from_json(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    else:
        cfg = RunConfig()
    ens = cfg.ensemble
    if args.seed is not None:
        ens = ens.replace(base_seed=args.seed)
    if args.realizations is not None:
        ens = ens.replace(realizations=args.realizations)
    if args.integrator is not None:
        new = _integrator(args.integrator, cfg)
        ens = ens.replace(integrator=new, noise=None if type(new) is not type(ens.integrator) else ens.noise)
    changes = {"ensemble": ens}
    if args.envelope is not None:
        changes["envelope"] = envelope_descriptor(args.envelope)
    if args.out is not None:
        changes["out_dir"] = args.out
    if args.bits:
        changes["bits"] = True
    return cfg.replace(**changes)


# output helpers


def _emit(cfg: RunConfig, name: str, rows: list, columns: Sequence[str]) -> str:
    # the output location does not affect results, keep it out of the echo
    echo = {k: v for k, v in cfg.to_dict().items() if k != "out_dir"}
    text = write_csv(rows, columns, echo)
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
    return text


def _fmt(x) -> str:
    return format_float(x) if isinstance(x, float) else str(x)


# subcommands


def cmd_moments(cfg: RunConfig) -> int:
    env = cfg.build_envelope()
    m = envelope_moments(env)
    row = {"n4": m.n4, "n6": m.n6, "n8": m.n8, "xi": m.xi, "overlap": check_overlap(env)}
    print("  ".join(f"{k} = {v:.6g}" for k, v in row.items()))
    _emit(cfg, "moments.csv", [row], list(row))
    return EXIT_OK


_Z_PAIRS = (
    ("re_mean_shift", "nlo_re_mean_shift"),
    ("im_mean_shift", "nlo_im_mean_shift"),
    ("re_pv", "nlo_re_pv"),
    ("im_pv", "nlo_im_pv"),
    ("var", "nlo_var"),
)


def cmd_correlators(cfg: RunConfig) -> int:
    env = cfg.build_envelope()
    moments = envelope_moments(env)
    delta = cfg.grid.spacing_delta
    results, record = timed_run(cfg.ensemble, cfg.channel, env, cfg.workers)
    rows = []
    worst = 0.0
    for P, est in results.items():
        row = est.to_dict()
        row.update(analytic.correlator_table(P, cfg.channel, None, delta, moments))
        for mc, th in _Z_PAIRS:
            se = row[mc + "_stderr"]
            z = (row[mc] - row[th]) / se if se > 0 else (0.0 if row[mc] == row[th] else math.inf)
            row["z_" + mc] = z
            worst = max(worst, abs(z))
        rows.append(row)
    columns = list(CSV_COLUMNS) + [k for k in rows[0] if k not in CSV_COLUMNS]
    _emit(cfg, "correlators.csv", rows, columns)
    if cfg.out_dir:
        # wall time lives only in the JSON record so the CSV stays reproducible
        (Path(cfg.out_dir) / "run.json").write_text(json.dumps({**record, "run_config": cfg.to_dict()}, indent=2))
    for row in rows:
        print(
            f"P = {row['power_W']:.4g} W: "
            + "  ".join(f"z[{mc}] = {row['z_' + mc]:+.2f}" for mc, _ in _Z_PAIRS)
        )
    print(f"max |MC - analytic (LO+NLO)| / stderr = {worst:.3f}")
    return EXIT_OK


def cmd_capacity(cfg: RunConfig) -> int:
    env = cfg.build_envelope()
    xi = envelope_moments(env).xi
    ch = cfg.channel
    scale = 1.0 / NATS_PER_BIT if cfg.bits else 1.0
    rows = []
    failures = 0
    for P in cfg.capacity_powers:
        row = {"power_W": P, "shannon": analytic.shannon_capacity(P, ch) * scale}
        try:
            dist = analytic.solve_optimal_distribution(P, xi * ch.gamma_L)
            res = dist.residuals()
            if max(res) > cfg.solver.residual:
                raise SolverError(f"constraint residuals {res} above {cfg.solver.residual}")
            row.update(
                capacity=analytic.capacity(P, ch, None, xi, dist) * scale,
                lambda0=dist.lambda0,
                N0=dist.N0,
                status="ok",
            )
        except SolverError as exc:
            failures += 1
            warnings.warn(f"P = {P:.4g} W: {exc}", stacklevel=1)
            row.update(capacity=math.nan, lambda0=math.nan, N0=math.nan, status="solver-failed")
        row["small_asymptote"] = analytic.capacity_asymptotic(P, ch, None, xi, analytic.SMALL) * scale
        try:
            row["large_asymptote"] = analytic.capacity_asymptotic(P, ch, None, xi, analytic.LARGE) * scale
        except DomainError:
            row["large_asymptote"] = math.nan
        rows.append(row)
    columns = ["power_W", "shannon", "capacity", "small_asymptote", "large_asymptote", "lambda0", "N0", "status"]
    text = _emit(cfg, "capacity.csv", rows, columns)
    print(text, end="")
    if failures:
        print(f"warning: solver failed at {failures} power(s)", file=sys.stderr)
    return EXIT_OK


def cmd_pdf_check(cfg: RunConfig) -> int:
    env = cfg.build_envelope()
    moments = envelope_moments(env)
    ch = cfg.channel
    delta = cfg.grid.spacing_delta
    mus = cfg.pdf_mu if ch.gamma > 0 else tuple(m for m in cfg.pdf_mu if m == 0) or (0.0,)
    rows = []
    for mu in mus:
        row = {
            "mu": mu,
            "coefficient_residual": pdfcheck.coefficient_pdf_residual(mu, ch, moments, sigmas=cfg.solver.pdf_sigmas),
            "per_sample_residual": pdfcheck.per_sample_pdf_residual(mu, ch, delta, sigmas=cfg.solver.core_sigmas),
        }
        rows.append(row)
        print(f"mu = {mu:g}: coefficient density {row['coefficient_residual']:.3e}, per-sample density {row['per_sample_residual']:.3e}")
    _emit(cfg, "pdf_check.csv", rows, ["mu", "coefficient_residual", "per_sample_residual"])
    if cfg.histogram_samples and ch.gamma > 0:
        h = pdfcheck.histogram_chi2(0.5, ch, delta, cfg.histogram_samples, seed=cfg.ensemble.base_seed)
        print(f"histogram mu = 0.5: chi2/dof = {h.reduced:.4f} (dof {h.dof}, p = {h.p_value:.3g})")
        _emit(cfg, "pdf_histogram.csv", [{"mu": 0.5, "chi2": h.chi2, "dof": h.dof, "samples": h.samples}], ["mu", "chi2", "dof", "samples"])
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    delta = cfg.grid.spacing_delta
    rows = []
    for P in cfg.ensemble.powers:
        d = validate_power_range(P, cfg.channel, delta)
        print(f"P = {P:.4g} W: {d.describe()}")
        if not d.in_range:
            print(f"warning: P = {P:.4g} W is outside the intermediate power range", file=sys.stderr)
        rows.append({"power_W": P, "snr_low_ratio": d.snr_low_ratio, "snr_high_ratio": d.snr_high_ratio, "in_range": str(d.in_range)})
    _emit(cfg, "validate.csv", rows, ["power_W", "snr_low_ratio", "snr_high_ratio", "in_range"])
    return EXIT_OK


COMMANDS = {
    "moments": cmd_moments,
    "correlators": cmd_correlators,
    "capacity": cmd_capacity,
    "pdf-check": cmd_pdf_check,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kerrchannel", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=list(COMMANDS))
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    p.add_argument("--realizations", type=int, help="noise realizations per power")
    p.add_argument("--out", help="output directory for CSV/JSON")
    p.add_argument("--bits", action="store_true", help="report entropies in bits instead of nats")
    p.add_argument("--integrator", choices=("split-step", "rk4"))
    p.add_argument("--envelope", help="gaussian|cos2|cos4|rect|file:<path>")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        cfg.build_envelope()
        return COMMANDS[args.command](cfg)
    except (ConfigError, LayoutError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
