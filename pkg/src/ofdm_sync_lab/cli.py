"""Command-line interface producing the figure datasets as CSV.

Commands
--------
fig1   residual-variance sweep (mean |N|^2 and |E|^2 in dB per SNR)
fig2   estimator MSE sweep with mean CRB columns
crb    ensemble-averaged CRBs per SNR
trial  one seeded trial end to end, printed for debugging

Option precedence is built-in defaults, then an optional ``--config``
file of ``key = value`` lines (``#`` starts a comment), then flags.
Every resolved experiment field is echoed in the CSV ``#`` metadata
header with flag spelling, so a dataset is reproducible from its own
header. Output is deterministic for a given configuration; the
SYNC_LAB_THREADS environment variable only changes the worker count.
"""

import argparse
import sys

import numpy as np

from . import __version__
from .crb import average_crb, crb_from_fisher, default_scenario_sampler, \
    fisher_closed_form, SingularInformationError
from .estimators import (
    DegenerateObservationError,
    GridEvaluator,
    make_grid,
    nguyenle_cost,
    nguyenle_observable,
    pair_residual,
    proposed_cost,
    ratio_residual,
)
from .harness import (
    ExperimentConfig,
    _draw_observation,
    _select_crb_backend,
    run_mse_sweep,
    run_noise_variance_sweep,
    worker_count,
)
from .ofdm_model import carrier_gain, make_config, noise_variance_from_snr

__all__ = ["main", "parse", "write_csv", "CliError", "CliInvocation"]


class CliError(Exception):
    """Usage-level error; reported on stderr with exit status 2."""


_COMMANDS = ("fig1", "fig2", "crb", "trial")

# (flag, type) in canonical metadata order.
_FIELDS = (
    ("n", int), ("k", int), ("cp", int),
    ("cfo", float), ("sfo", float), ("taps", int),
    ("snr-min", float), ("snr-max", float), ("snr-step", float),
    ("trials", int), ("seed", int),
    ("grid-cfo-step", float), ("grid-cfo-max", float),
    ("grid-sfo-step", float), ("grid-sfo-max", float),
)
_FIELD_TYPES = dict(_FIELDS)

_COMMON_DEFAULTS = {
    "n": 64, "k": 52, "cp": 16,
    "cfo": 0.212, "sfo": 0.000112, "taps": 5,
    "seed": 12345,
    "grid-cfo-step": 0.01, "grid-cfo-max": 0.5,
    "grid-sfo-step": 1e-5, "grid-sfo-max": 5e-4,
}

_COMMAND_DEFAULTS = {
    "fig1": {"snr-min": 0.0, "snr-max": 30.0, "snr-step": 5.0,
             "trials": 2000, "out": "fig1.csv"},
    "fig2": {"snr-min": 5.0, "snr-max": 30.0, "snr-step": 5.0,
             "trials": 500, "out": "fig2.csv"},
    "crb": {"snr-min": 0.0, "snr-max": 30.0, "snr-step": 5.0,
            "trials": 500, "out": "crb.csv"},
    "trial": {"snr-min": 15.0, "snr-max": 15.0, "snr-step": 5.0,
              "trials": 1, "out": None},
}

_FIG2_COLUMNS = (
    "snr_db",
    "mse_cfo_proposed", "mse_cfo_nguyenle", "crb_cfo",
    "mse_sfo_proposed", "mse_sfo_nguyenle", "crb_sfo",
    "fail_proposed", "fail_nguyenle",
)
_FIG1_COLUMNS = ("snr_db", "var_n_db", "var_e_db")
_CRB_COLUMNS = ("snr_db", "crb_cfo", "crb_sfo", "excluded")


def format_value(value) -> str:
    """Render a cell: 17 significant digits for floats, blank for None."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


class CliInvocation:
    """Resolved command plus the experiment it describes."""

    def __init__(self, command: str, experiment: ExperimentConfig,
                 values: dict, out: str | None):
        self.command = command
        self.experiment = experiment
        self.values = values
        self.out = out


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sync-lab",
        description="OFDM CFO/SFO estimator comparison datasets")
    subs = parser.add_subparsers(dest="command", required=True)
    helps = {
        "n": "DFT size N",
        "k": "active subcarrier count K",
        "cp": "cyclic prefix length in samples",
        "cfo": "true carrier frequency offset (subcarrier spacings)",
        "sfo": "true sampling frequency offset (fractional)",
        "taps": "channel tap count",
        "snr-min": "first SNR point in dB (also the SNR used by 'trial')",
        "snr-max": "last SNR point in dB",
        "snr-step": "SNR step in dB",
        "trials": "Monte-Carlo trials per SNR point",
        "seed": "master seed for all substreams",
        "grid-cfo-step": "CFO lattice step",
        "grid-cfo-max": "CFO lattice half-range (0 pins the axis to 0)",
        "grid-sfo-step": "SFO lattice step",
        "grid-sfo-max": "SFO lattice half-range (0 pins the axis to 0)",
    }
    for command in _COMMANDS:
        sub = subs.add_parser(command)
        for flag, ftype in _FIELDS:
            sub.add_argument(f"--{flag}", type=ftype, default=None,
                             help=helps[flag])
        sub.add_argument("--out", type=str, default=None,
                         help="output CSV path")
        sub.add_argument("--config", type=str, default=None,
                         help="key = value file applied between defaults "
                              "and flags")
    return parser


def _load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from exc
    entries = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(
                f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("_", "-")
        value = value.strip()
        if key not in _FIELD_TYPES:
            raise CliError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            entries[key] = _FIELD_TYPES[key](value)
        except ValueError as exc:
            raise CliError(
                f"{path}:{lineno}: bad value for {key!r}: {value!r}") from exc
    return entries


def _snr_axis(lo: float, hi: float, step: float) -> tuple:
    if step <= 0:
        raise CliError(f"snr-step must be positive, got {step}")
    if hi < lo:
        raise CliError(f"snr-max ({hi}) is below snr-min ({lo})")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return tuple(lo + i * step for i in range(count))


def parse(argv) -> CliInvocation:
    """Resolve argv (defaults < config file < flags) into an invocation."""
    namespace = _build_parser().parse_args(argv)
    command = namespace.command

    values = dict(_COMMON_DEFAULTS)
    values.update({k: v for k, v in _COMMAND_DEFAULTS[command].items()
                   if k != "out"})
    out = _COMMAND_DEFAULTS[command]["out"]

    if namespace.config is not None:
        values.update(_load_config_file(namespace.config))

    for flag, _ in _FIELDS:
        given = getattr(namespace, flag.replace("-", "_"))
        if given is not None:
            values[flag] = given
    if namespace.out is not None:
        out = namespace.out

    try:
        worker_count()
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    if values["trials"] < 1:
        raise CliError(f"trials must be >= 1, got {values['trials']}")
    if values["taps"] < 1:
        raise CliError(f"taps must be >= 1, got {values['taps']}")
    for key in ("cfo", "sfo"):
        if not np.isfinite(values[key]):
            raise CliError(f"{key} must be finite, got {values[key]}")

    try:
        experiment = ExperimentConfig(
            ofdm=make_config(values["n"], values["k"], values["cp"]),
            cfo=values["cfo"], sfo=values["sfo"], n_taps=values["taps"],
            snr_points_db=_snr_axis(values["snr-min"], values["snr-max"],
                                    values["snr-step"]),
            n_trials=values["trials"], master_seed=values["seed"],
            grid=make_grid(values["grid-cfo-step"], values["grid-cfo-max"],
                           values["grid-sfo-step"], values["grid-sfo-max"]),
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    return CliInvocation(command, experiment, values, out)


def _metadata_lines(invocation: CliInvocation, extra=()) -> list:
    lines = [f"# tool-version = {__version__}",
             f"# command = {invocation.command}"]
    for flag, _ in _FIELDS:
        lines.append(f"# {flag} = {format_value(invocation.values[flag])}")
    lines.extend(f"# {line}" for line in extra)
    return lines


def write_csv(path: str, columns, rows, metadata_lines) -> None:
    """Write a dataset with a ``#`` metadata header, deterministically.

    Floats render with 17 significant digits (exact round trip); None
    renders as an empty cell.
    """
    out = []
    out.extend(metadata_lines)
    out.append(",".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(
                f"row width {len(row)} does not match {len(columns)} columns")
        out.append(",".join(format_value(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def _run_fig1(invocation: CliInvocation) -> int:
    result = run_noise_variance_sweep(invocation.experiment)
    rows = [(row.snr_db, row.var_n_db, row.var_e_db)
            for row in result.rows]
    write_csv(invocation.out, _FIG1_COLUMNS, rows,
              _metadata_lines(invocation))
    return 0

def _run_fig2(invocation: CliInvocation) -> int:
    result = run_mse_sweep(invocation.experiment)
    extra = [f"crb-backend = {result.crb_backend}"]
    if result.crb_discrepancy:
        extra.extend(result.crb_discrepancy.splitlines())
    rows = [(row.snr_db,
             row.mse_cfo_proposed, row.mse_cfo_nguyenle, row.crb_cfo,
             row.mse_sfo_proposed, row.mse_sfo_nguyenle, row.crb_sfo,
             row.fail_proposed, row.fail_nguyenle)
            for row in result.rows]
    write_csv(invocation.out, _FIG2_COLUMNS, rows,
              _metadata_lines(invocation, extra))
    return 0


def _run_crb(invocation: CliInvocation) -> int:
    cfg = invocation.experiment
    fisher_fn, backend, report = _select_crb_backend(cfg)
    sampler = default_scenario_sampler(cfg.n_taps)
    extra = [f"crb-backend = {backend}"]
    if report:
        extra.extend(report.splitlines())
    rows = []
    for snr_db in cfg.snr_points_db:
        pair, excluded = average_crb(cfg.ofdm, sampler, cfg.cfo, cfg.sfo,
                                     snr_db, cfg.n_trials, cfg.master_seed,
                                     fisher_fn=fisher_fn)
        rows.append((snr_db, pair.crb_cfo, pair.crb_sfo, excluded))
    write_csv(invocation.out, _CRB_COLUMNS, rows,
              _metadata_lines(invocation, extra))
    return 0


def _run_trial(invocation: CliInvocation) -> int:
    cfg = invocation.experiment
    snr_db = cfg.snr_points_db[0]
    obs, training, channel, impairments = _draw_observation(cfg, snr_db, 0)
    config = cfg.ofdm

    def emit(key, value):
        print(f"{key} = {value}")

    emit("snr_db", format_value(snr_db))
    emit("noise_var", format_value(impairments.noise_var))
    taps = ", ".join(
        f"{format_value(t.real)}{'+' if t.imag >= 0 else '-'}"
        f"{format_value(abs(t.imag))}j" for t in channel.taps)
    emit("channel_taps", f"[{taps}]")

    gains = np.abs(carrier_gain(config.subcarrier_indices, 0, cfg.cfo,
                                cfg.sfo, config))
    emit("carrier_gain_abs_min", format_value(float(gains.min())))
    emit("carrier_gain_abs_max", format_value(float(gains.max())))

    evaluator = GridEvaluator(cfg.grid, config)
    truth_cost = proposed_cost(obs, cfg.cfo, cfg.sfo, config)
    best = evaluator.search_proposed(obs)
    emit("proposed_cost_at_truth", format_value(truth_cost))
    emit("proposed_cost_at_argmin", format_value(best.cost))
    emit("proposed_cfo", format_value(best.cfo))
    emit("proposed_sfo", format_value(best.sfo))

    n_vec = pair_residual(obs, cfg.cfo, cfg.sfo, config)
    emit("residual_n_sq",
         format_value(float(np.sum(np.abs(n_vec) ** 2))))
    try:
        y = nguyenle_observable(obs, config)
        truth_cost_nl = nguyenle_cost(y, cfg.cfo, cfg.sfo, config)
        best_nl = evaluator.search_nguyenle(obs)
        e_vec = ratio_residual(obs, cfg.cfo, cfg.sfo, config)
        emit("nguyenle_cost_at_truth", format_value(truth_cost_nl))
        emit("nguyenle_cost_at_argmin", format_value(best_nl.cost))
        emit("nguyenle_cfo", format_value(best_nl.cfo))
        emit("nguyenle_sfo", format_value(best_nl.sfo))
        emit("residual_e_sq",
             format_value(float(np.sum(np.abs(e_vec) ** 2))))
    except DegenerateObservationError as exc:
        emit("nguyenle_failed", f"degenerate observation "
                                f"(subcarriers {list(exc.subcarriers)})")

    fisher = fisher_closed_form(config, training, channel, cfg.cfo,
                                cfg.sfo, impairments.noise_var)
    try:
        pair = crb_from_fisher(fisher)
        emit("crb_cfo", format_value(pair.crb_cfo))
        emit("crb_sfo", format_value(pair.crb_sfo))
    except SingularInformationError:
        emit("crb_failed", "singular information matrix")
    return 0


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    try:
        invocation = parse(list(argv))
        runner = {"fig1": _run_fig1, "fig2": _run_fig2,
                  "crb": _run_crb, "trial": _run_trial}[invocation.command]
        return runner(invocation)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
