"""Deterministic command-line front end.

Subcommands run closed-form sweeps (analytic, backaction), the figure
grids (fig2, fig3), the master-equation integrator (lindblad) and the
repeated-measurement experiment (repeat), emitting CSV whose float fields
are shortest round-trip reprs: identical inputs give byte-identical files
regardless of thread count.

Config files are line-oriented ``key = value`` with ``#`` comments; unknown
keys are rejected.  The run mode is always given on the command line.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import analytic, backaction, lindblad
from .core import DensityMatrix, FockSpace, NumericsError, SystemParams, tensor

__all__ = [
    "ConfigError",
    "RunConfig",
    "SweepSpec",
    "SweepResult",
    "parse_config",
    "emit_csv",
    "parse_csv",
    "run_fig2",
    "run_fig3",
    "run_sweep",
    "run_lindblad",
    "run_repeat",
    "main",
]

MODES = ("analytic", "lindblad", "backaction", "fig2", "fig3", "repeatability")

# fixed measurement time for the detuning-sweep probability maps
MEASURE_TIME = 0.1
FIG3_KAPPAS = (0.1, 0.2, 0.3, 0.4)

_PARAM_KEYS = ("epsilon", "delta", "g", "kappa", "gamma1", "gamma2", "f",
               "delta_omega", "s_ii")
_FLOAT_KEYS = _PARAM_KEYS + ("t_max", "t_step", "sweep_start", "sweep_stop")
_INT_KEYS = ("fock_dim", "threads", "sweep_count")
_STR_KEYS = ("output", "sweep_param")
_ALL_KEYS = _FLOAT_KEYS + _INT_KEYS + _STR_KEYS


class ConfigError(Exception):
    """Malformed or inconsistent run configuration."""


@dataclass(frozen=True)
class SweepSpec:
    param: str
    start: float
    stop: float
    count: int


@dataclass(frozen=True)
class RunConfig:
    """One validated run: physical parameters plus artifact plumbing.

    s_ii = None means "use the default 2/kappa" and is resolved lazily so
    figure modes that re-derive it per kappa can tell it apart from an
    explicit setting.
    """

    epsilon: float = 10.0
    delta: float = 0.0
    g: float = 0.3
    kappa: float = 0.1
    gamma1: float = 0.0
    gamma2: float = 0.0
    f: float = 1.0
    delta_omega: float = 0.0
    s_ii: Optional[float] = None
    fock_dim: int = 12
    t_max: float = 2.0
    t_step: float = 0.01
    threads: Optional[int] = None
    sweep: Optional[SweepSpec] = None
    mode: str = ""
    output: Optional[str] = None

    @property
    def resolved_s_ii(self) -> float:
        return 2.0 / self.kappa if self.s_ii is None else self.s_ii

    def system_params(self, **replacements) -> SystemParams:
        kw = {k: getattr(self, k) for k in _PARAM_KEYS}
        kw["s_ii"] = self.resolved_s_ii
        kw.update(replacements)
        return SystemParams(**kw)


@dataclass(frozen=True)
class SweepResult:
    columns: tuple
    rows: list


def _parse_kv_lines(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        values[key] = (lineno, value)
    return values


def _convert(key: str, value: str, where: str):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        return value
    except ValueError:
        kind = "integer" if key in _INT_KEYS else "number"
        raise ConfigError(f"{where}: malformed {kind} for {key!r}: {value!r}") from None


def parse_config(text: str, mode: Optional[str] = None,
                 overrides: Optional[dict] = None) -> RunConfig:
    """Parse and validate a config; mode comes from the command line.

    overrides maps key -> string value and is applied after the file text
    (command-line --set).  Raises ConfigError naming the offending line/key.
    """
    raw = _parse_kv_lines(text)
    converted = {k: _convert(k, v, f"line {ln}") for k, (ln, v) in raw.items()}
    for key, value in (overrides or {}).items():
        if key not in _ALL_KEYS:
            raise ConfigError(f"override: unknown key {key!r}")
        converted[key] = _convert(key, str(value), "override")

    if mode is None:
        raise ConfigError("mode required")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")

    sweep_keys = {k: converted.pop(k) for k in
                  ("sweep_param", "sweep_start", "sweep_stop", "sweep_count")
                  if k in converted}
    sweep = None
    if sweep_keys:
        missing = [k for k in ("sweep_param", "sweep_start", "sweep_stop",
                               "sweep_count") if k not in sweep_keys]
        if missing:
            raise ConfigError(f"incomplete sweep: missing {', '.join(missing)}")
        if sweep_keys["sweep_param"] not in _PARAM_KEYS:
            raise ConfigError(f"sweep_param must be one of {_PARAM_KEYS}, "
                              f"got {sweep_keys['sweep_param']!r}")
        if sweep_keys["sweep_count"] < 2:
            raise ConfigError(f"sweep_count must be >= 2, got {sweep_keys['sweep_count']}")
        sweep = SweepSpec(param=sweep_keys["sweep_param"],
                          start=sweep_keys["sweep_start"],
                          stop=sweep_keys["sweep_stop"],
                          count=sweep_keys["sweep_count"])

    cfg = RunConfig(**converted, sweep=sweep, mode=mode)
    if cfg.t_step <= 0.0:
        raise ConfigError(f"t_step must be > 0, got {cfg.t_step}")
    if cfg.t_max < cfg.t_step:
        raise ConfigError(f"t_max must be >= t_step, got {cfg.t_max}")
    if cfg.fock_dim < 2:
        raise ConfigError(f"fock_dim must be >= 2, got {cfg.fock_dim}")
    if cfg.threads is not None and cfg.threads < 1:
        raise ConfigError(f"threads must be >= 1, got {cfg.threads}")
    try:
        cfg.system_params()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_csv(result: SweepResult, path: Optional[str] = None) -> str:
    """Serialize with LF endings and shortest round-trip floats.

    Returns the text; writes it to path when given.
    """
    lines = [",".join(result.columns)]
    lines.extend(",".join(_fmt(v) for v in row) for row in result.rows)
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def parse_csv(text: str) -> SweepResult:
    lines = [ln for ln in text.split("\n") if ln]
    if not lines:
        raise ConfigError("empty CSV")
    columns = tuple(lines[0].split(","))
    rows = [tuple(float(v) for v in ln.split(",")) for ln in lines[1:]]
    return SweepResult(columns=columns, rows=rows)


def _map_ordered(fn: Callable, items: Sequence, threads: int) -> list:
    # index-ordered results keep output independent of scheduling
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_fig2(cfg: RunConfig, n_detuning: int = 201, n_time: int = 200) -> SweepResult:
    """Outcome-probability map over (detuning, time) for both noise models.

    p_zero_point uses the vacuum quadrature variance 1/2; p_backaction the
    integrated detector noise S_II * t.  Initial polarization +1, outcome +1.
    """
    detunings = np.linspace(-1.0, 1.0, n_detuning)
    times = [(k * cfg.t_max) / n_time for k in range(1, n_time + 1)]

    def per_detuning(dw: float) -> list:
        p = cfg.system_params(delta_omega=float(dw))
        rows = []
        for t in times:
            pz = analytic.outcome_probability(p, 1.0, t, +1, variance=0.5)
            pb = analytic.outcome_probability(p, 1.0, t, +1)
            rows.append((float(dw), t, pz, pb))
        return rows

    chunks = _map_ordered(per_detuning, detunings, cfg.threads or 1)
    return SweepResult(columns=("delta_omega", "t", "p_zero_point", "p_backaction"),
                       rows=[row for chunk in chunks for row in chunk])


def run_fig3(cfg: RunConfig, n_detuning: int = 201) -> SweepResult:
    """Detuning sweeps of P(measure 0) and gamma_m for the four linewidths.

    Each kappa uses its matched noise floor S_II = 2/kappa and the fixed
    measurement time MEASURE_TIME.
    """
    detunings = np.linspace(-1.0, 1.0, n_detuning)

    def per_kappa(kappa: float) -> list:
        rows = []
        for dw in detunings:
            p = cfg.system_params(kappa=kappa, s_ii=2.0 / kappa,
                                  delta_omega=float(dw))
            p0 = analytic.outcome_probability(p, 1.0, MEASURE_TIME, +1)
            rows.append((kappa, float(dw), p0, analytic.gamma_m(p)))
        return rows

    chunks = _map_ordered(per_kappa, FIG3_KAPPAS, cfg.threads or 1)
    return SweepResult(columns=("kappa", "delta_omega", "p_measure_0", "gamma_m"),
                       rows=[row for chunk in chunks for row in chunk])


def run_sweep(cfg: RunConfig) -> SweepResult:
    """One-parameter closed-form sweep (modes analytic and backaction)."""
    if cfg.sweep is None:
        raise ConfigError(f"mode {cfg.mode!r} requires sweep_* keys")
    grid = np.linspace(cfg.sweep.start, cfg.sweep.stop, cfg.sweep.count)

    if cfg.mode == "analytic":
        def per_value(v: float) -> tuple:
            p = cfg.system_params(**{cfg.sweep.param: float(v)})
            sa = analytic.steady_amplitudes(p)
            return (float(v),
                    analytic.outcome_probability(p, 1.0, MEASURE_TIME, +1),
                    analytic.gamma_m(p), sa.n_plus, sa.n_minus)

        columns = (cfg.sweep.param, "p_measure_0", "gamma_m", "n_plus", "n_minus")
    elif cfg.mode == "backaction":
        def per_value(v: float) -> tuple:
            p = cfg.system_params(**{cfg.sweep.param: float(v)})
            basis = backaction.eigenbasis(p.epsilon, p.delta)
            rs = backaction.rates(p, basis)
            return (float(v), rs.gamma_up, rs.gamma_down, rs.gamma_phi,
                    rs.gamma_phi_pure, rs.t_eff,
                    backaction.spectral_density(p, 0.0))

        columns = (cfg.sweep.param, "gamma_up", "gamma_down", "gamma_phi",
                   "gamma_phi_pure", "t_eff", "s_nn_zero")
    else:
        raise ConfigError(f"mode {cfg.mode!r} does not take a sweep")

    try:
        rows = _map_ordered(per_value, grid, cfg.threads or 1)
    except ValueError as exc:
        raise ConfigError(f"sweep left the valid parameter domain: {exc}") from exc
    return SweepResult(columns=columns, rows=rows)


def _time_grid(cfg: RunConfig) -> np.ndarray:
    n = int(round(cfg.t_max / cfg.t_step))
    n = max(n, 1)
    return np.linspace(0.0, n * cfg.t_step, n + 1)


def _build_liouvillian(cfg: RunConfig) -> lindblad.Liouvillian:
    mode = "sigma_n" if cfg.delta > 0.0 else "sigma_z"
    return lindblad.build_liouvillian(cfg.system_params(), FockSpace(cfg.fock_dim),
                                      coupling_mode=mode)


def _vacuum_with_qubit(space: FockSpace, qubit: np.ndarray) -> DensityMatrix:
    fock = np.zeros((space.dim, space.dim), dtype=complex)
    fock[0, 0] = 1.0
    return DensityMatrix(space, tensor(qubit, fock))


def run_lindblad(cfg: RunConfig):
    """Master-equation run from (|0> + |1>)/sqrt(2) times vacuum.

    Returns (SweepResult, truncation_ok).
    """
    liou = _build_liouvillian(cfg)
    plus = 0.5 * np.ones((2, 2), dtype=complex)
    rho0 = _vacuum_with_qubit(liou.space, plus)
    rec = lindblad.evolve(liou, rho0, _time_grid(cfg))
    rows = [(float(t), rec.sigma_z[k], rec.sigma_x[k], rec.a_mean[k].real,
             rec.a_mean[k].imag, rec.n_mean[k], rec.coherence01[k],
             rec.top_fock[k]) for k, t in enumerate(rec.t_grid)]
    result = SweepResult(columns=("t", "sigma_z", "sigma_x", "re_a", "im_a",
                                  "n_photon", "coherence01", "top_fock"),
                         rows=rows)
    return result, rec.valid


def run_repeat(cfg: RunConfig):
    """Three consecutive qubit measurements separated by t_max windows."""
    liou = _build_liouvillian(cfg)
    ground = np.zeros((2, 2), dtype=complex)
    ground[0, 0] = 1.0
    rho0 = _vacuum_with_qubit(liou.space, ground)
    stats = lindblad.repeatability_experiment(liou, rho0, t_meas=cfg.t_max,
                                              n_meas=3)
    rows = [(float(i + 1), float(p)) for i, p in enumerate(stats.pair_agreement)]
    return SweepResult(columns=("pair", "agreement"), rows=rows), stats.valid


def _resolve_threads(cli_value: Optional[int], cfg: RunConfig) -> int:
    if cli_value is not None:
        return cli_value
    if cfg.threads is not None:
        return cfg.threads
    env = os.environ.get("QND_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"QND_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"QND_THREADS must be >= 1, got {n}")
        return n
    return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qnd",
        description="Dispersive qubit readout: closed-form sweeps, "
                    "master-equation runs and figure grids as CSV.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, mode in (("analytic", "analytic"), ("lindblad", "lindblad"),
                       ("backaction", "backaction"), ("fig2", "fig2"),
                       ("fig3", "fig3"), ("repeat", "repeatability")):
        p = sub.add_parser(name)
        p.set_defaults(mode=mode)
        p.add_argument("-c", "--config", help="path to key = value config file")
        p.add_argument("-o", "--output", help="CSV output path (default stdout)")
        p.add_argument("--threads", type=int,
                       help="worker threads (default config, then QND_THREADS, then 1)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        text = ""
        if args.config:
            with open(args.config, "r", encoding="utf-8") as fh:
                text = fh.read()
        overrides = {}
        for item in args.set:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            overrides[key.strip()] = value.strip()

        cfg = parse_config(text, args.mode, overrides)
        if args.threads is not None and args.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {args.threads}")
        cfg = replace(cfg, threads=_resolve_threads(args.threads, cfg),
                      output=args.output if args.output else cfg.output)

        truncation_ok = True
        if cfg.mode in ("analytic", "backaction"):
            result = run_sweep(cfg)
        elif cfg.mode == "fig2":
            result = run_fig2(cfg)
        elif cfg.mode == "fig3":
            result = run_fig3(cfg)
        elif cfg.mode == "lindblad":
            result, truncation_ok = run_lindblad(cfg)
        else:
            result, truncation_ok = run_repeat(cfg)

        out = emit_csv(result, cfg.output)
        if cfg.output is None:
            sys.stdout.write(out)
        if not truncation_ok:
            print("error: top Fock levels exceeded the truncation threshold; "
                  "increase fock_dim", file=sys.stderr)
            return 3
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
