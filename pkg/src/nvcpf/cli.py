"""Command-line frontend: config files, CSV emission, panel sweeps.

Config files are line-based ``key = value`` documents; ``#`` starts a comment.
Unknown keys are rejected with their line number rather than ignored, and the
effective configuration of every run is echoed into the output metadata so a
CSV can be reproduced exactly from its own header.

CSV layout: ``# key = value`` metadata lines sorted by key, one header row,
then comma-separated data rows with floats rendered at 12 significant digits.
Line endings are LF; output is byte-identical across runs for equal inputs.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import engine, model
from .analytic import gate_phases, realized_gate
from .engine import NoiseParams, ResultTable, SweepSpec

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class ConfigError(ValueError):
    """Malformed, duplicate or unknown configuration entries."""


@dataclass(frozen=True)
class RunConfig:
    """Typed run settings (dimensionless ratios unless noted)."""

    m: float = 0.1
    k_index: int = 0
    kappa_ratio: float = 0.01
    gamma_eg_ratio: float = 0.01
    gamma_fg_ratio: float = 1e-6
    n_max: int = 1
    dt: float | None = None          # None -> per-run step rule
    t_max: float = 1.5 * math.pi
    grid_points: int = 120
    panel: str | None = None
    out_path: str | None = None
    target: str = "ideal"
    compensate_shifts: bool = True

    def noise(self) -> NoiseParams:
        return NoiseParams(self.kappa_ratio, self.gamma_eg_ratio, self.gamma_fg_ratio)

    def echo(self) -> dict[str, str]:
        """Effective configuration as metadata entries."""
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if val is None:
                continue
            if isinstance(val, bool):
                out[f"config_{f.name}"] = "true" if val else "false"
            elif isinstance(val, float):
                out[f"config_{f.name}"] = repr(val)  # exact round-trip
            else:
                out[f"config_{f.name}"] = str(val)
        return out


_CONFIG_PARSERS = {
    "m": float,
    "k_index": int,
    "kappa_ratio": float,
    "gamma_eg_ratio": float,
    "gamma_fg_ratio": float,
    "n_max": int,
    "dt": float,
    "t_max": float,
    "grid_points": int,
    "panel": str,
    "out_path": str,
    "target": str,
    "compensate_shifts": lambda s: {"true": True, "false": False}[s],
}


def parse_config(text: str) -> RunConfig:
    """Parse a ``key = value`` document into a RunConfig.

    Raises ConfigError with line numbers for malformed lines, unknown keys
    and duplicate keys (citing both offending lines).
    """
    seen: dict[str, int] = {}
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in _CONFIG_PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(
                f"duplicate key {key!r} on lines {seen[key]} and {lineno}"
            )
        seen[key] = lineno
        try:
            values[key] = _CONFIG_PARSERS[key](val)
        except (ValueError, KeyError):
            raise ConfigError(f"line {lineno}: bad value {val!r} for {key!r}") from None
    return replace(RunConfig(), **values)


def emit_csv(table: ResultTable) -> bytes:
    """Render a ResultTable as deterministic CSV bytes."""
    lines = [f"# {k} = {table.metadata[k]}" for k in sorted(table.metadata)]
    lines.append(",".join(table.columns))
    for row in table.rows:
        lines.append(",".join(f"{v:.12g}" for v in row))
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_csv(data: bytes) -> ResultTable:
    """Inverse of emit_csv (used for round-trip checks)."""
    meta: dict[str, str] = {}
    header: tuple[str, ...] | None = None
    rows: list[list[float]] = []
    for line in data.decode("utf-8").splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            meta[key.strip()] = val.strip()
        elif header is None:
            header = tuple(line.split(","))
        elif line:
            rows.append([float(v) for v in line.split(",")])
    if header is None:
        raise ValueError("CSV stream has no header row")
    shaped = np.asarray(rows, dtype=float).reshape(len(rows), len(header))
    return ResultTable(header, shaped, meta)


def _write_output(path: str, table: ResultTable) -> None:
    Path(path).write_bytes(emit_csv(table))


def _write_plot_script(out_path: str, table: ResultTable, title: str) -> None:
    """Companion gnuplot script referencing the CSV by relative name."""
    csv_name = Path(out_path).name
    plots = []
    x_names = set()
    for i, col in enumerate(table.columns):
        if col.startswith("fidelity"):
            xi = 1
            if col.startswith("fidelity_m_"):
                xi = table.columns.index("gi_t" + col[len("fidelity"):]) + 1
            x_names.add(table.columns[xi - 1])
            plots.append(f'"{csv_name}" using {xi}:{i + 1} with lines title "{col}"')
    xlabel = x_names.pop() if len(x_names) == 1 else "gi_t (per curve)"
    lines = [
        "# gnuplot script; run from the directory containing the CSV",
        'set datafile separator ","',
        f'set title "{title}"',
        f'set xlabel "{xlabel}"',
        'set ylabel "fidelity"',
        "set key left bottom",
    ]
    lines.append("plot " + ", \\\n     ".join(plots))
    Path(out_path + ".plot").write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# Panel definitions
# --------------------------------------------------------------------------

PANEL_KAPPAS = (0.01, 0.02, 0.05)       # panel a curve family
PANEL_MS = (1.0 / 25.0, 1.0 / 50.0, 1.0 / 75.0)  # panel c curve family
PANEL_B_RANGE = (0.005, 0.1)            # kappa ratio endpoints, 50 points
PANEL_D_RANGE = (0.02, 0.2)             # m endpoints, 50 points
PANEL_BD_POINTS = 50


def panel_spec(panel: str, config: RunConfig) -> SweepSpec:
    """SweepSpec for one of the four standard fidelity panels."""
    common = dict(
        m=config.m,
        noise=config.noise(),
        n_max=config.n_max,
        dt=config.dt,
        target=config.target,
        k_index=config.k_index,
    )
    if panel in ("a", "c"):
        grid = tuple(np.linspace(0.0, config.t_max, config.grid_points))
        if panel == "a":
            return SweepSpec(
                panel="a", swept="time", grid=grid,
                family_param="kappa_ratio", family_values=PANEL_KAPPAS, **common,
            )
        return SweepSpec(
            panel="c", swept="time", grid=grid,
            family_param="m", family_values=PANEL_MS, **common,
        )
    if panel == "b":
        grid = tuple(np.linspace(*PANEL_B_RANGE, PANEL_BD_POINTS))
        return SweepSpec(panel="b", swept="kappa_ratio", grid=grid, **common)
    if panel == "d":
        grid = tuple(np.linspace(*PANEL_D_RANGE, PANEL_BD_POINTS))
        return SweepSpec(panel="d", swept="m", grid=grid, **common)
    raise ConfigError(f"unknown panel {panel!r}")


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors exit with code 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _cmd_gate(args) -> int:
    ph = gate_phases(args.m, args.k)
    diag = np.real(np.diag(realized_gate(args.m, args.k)))
    print(f"alpha = {ph.alpha:.6f}")
    print(f"beta = {ph.beta:.6f}")
    print(f"t0 = {ph.t0:.12g} (units 1/g_tilde3, k = {ph.k})")
    print("gate diagonal = " + ", ".join(f"{v:.6f}" for v in diag))
    return EXIT_OK


def _cmd_evolve(args) -> int:
    config = _load_config(args.config)
    grid = tuple(np.linspace(0.0, config.t_max, config.grid_points))
    table = engine.gate_fidelity_run(
        config.m,
        config.noise(),
        grid,
        dt=config.dt,
        n_max=config.n_max,
        target=config.target,
        k_index=config.k_index,
    )
    table.metadata.update(config.echo())
    _write_output(args.out, table)
    print(f"wrote {args.out} ({len(table.rows)} rows)")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = _load_config(args.config)
    spec = panel_spec(args.panel, config)
    table = engine.sweep(spec)
    table.metadata.update(config.echo())
    _write_output(args.out, table)
    _write_plot_script(args.out, table, f"CPF gate fidelity, panel {args.panel}")
    print(f"wrote {args.out} and {args.out}.plot ({len(table.rows)} rows)")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        ratios = [float(r) for r in args.delta_ratios.split(",") if r]
    except ValueError:
        print(f"bad --delta-ratios value {args.delta_ratios!r}", file=sys.stderr)
        return EXIT_USAGE
    if not ratios:
        print("--delta-ratios needs at least one ratio", file=sys.stderr)
        return EXIT_USAGE
    table = engine.compare_full_effective(args.m, ratios, args.t)
    _write_output(args.out, table)
    print(f"wrote {args.out} ({len(table.rows)} rows)")
    return EXIT_OK


def _cmd_params(args) -> int:
    inputs = model.PhysicalInputs(
        wavelength=args.lambda_, gamma0=args.gamma0, v_m=args.vm, q=args.q
    )
    derived = model.derive_physical_params(
        inputs, omega_max=args.omega_max, delta=args.delta, g_tilde3=args.gtilde3
    )
    print(f"v_a = {derived.v_a:.6g} m^3")
    print(f"g_max = {derived.g_max:.6g} rad/s (2pi x {derived.g_max / (2 * math.pi) / 1e9:.6g} GHz)")
    print(f"kappa = {derived.kappa:.6g} rad/s (2pi x {derived.kappa / (2 * math.pi) / 1e6:.6g} MHz)")
    print(f"gamma_eg_est = {derived.gamma_eg_est:.6g} rad/s "
          f"(2pi x {derived.gamma_eg_est / (2 * math.pi) / 1e6:.6g} MHz)")
    print(f"p_e = {derived.p_e:.6g}")
    print(f"t0 = {derived.t0:.6g} s ({derived.t0 * 1e6:.6g} us)")
    print("reference comparisons:")
    for line in derived.comparisons:
        print(f"  {line}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="nvcpf",
        description="Three-qubit conditional-phase-flip gate simulator for "
        "cavity-coupled NV centers.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gate", help="print gate phases and the realized gate diagonal")
    p.add_argument("--m", type=float, required=True, help="coupling asymmetry ratio, 0 < m <= 1")
    p.add_argument("--k", type=int, default=0, help="odd-multiple index of the gate time")
    p.set_defaults(func=_cmd_gate)

    p = sub.add_parser("evolve", help="fidelity-versus-time CSV")
    p.add_argument("--config", default=None, help="path to a key = value config file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_evolve)

    p = sub.add_parser("sweep", help="reproduce one fidelity panel (a, b, c or d)")
    p.add_argument("--panel", required=True, choices=("a", "b", "c", "d"), help="panel id")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--config", default=None, help="path to a key = value config file")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("validate", help="full-model versus effective-model comparison CSV")
    p.add_argument("--delta-ratios", required=True, help="comma-separated detuning/coupling ratios")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--m", type=float, default=0.1, help="coupling asymmetry ratio")
    p.add_argument("--t", type=float, default=math.pi, help="comparison time (units 1/g_tilde3)")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("params", help="derive physical operating-point parameters (SI)")
    p.add_argument("--lambda", dest="lambda_", type=float, required=True, help="transition wavelength (m)")
    p.add_argument("--gamma0", type=float, required=True, help="excited-state decay rate (rad/s)")
    p.add_argument("--vm", type=float, required=True, help="cavity mode volume (m^3)")
    p.add_argument("--q", type=float, required=True, help="cavity quality factor")
    p.add_argument("--omega-max", type=float, required=True, help="maximal laser Rabi rate (rad/s)")
    p.add_argument("--delta", type=float, required=True, help="detuning (rad/s)")
    p.add_argument("--gtilde3", type=float, default=2 * math.pi * 55e6,
                   help="weak effective coupling (rad/s) used for the gate time")
    p.set_defaults(func=_cmd_params)
    return parser


def dispatch(argv: list[str]) -> int:
    """Run one CLI invocation; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse help exits 0, usage errors exit 1
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"nvcpf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, ConfigError) else EXIT_RUNTIME
    except RuntimeError as exc:  # integration / divergence errors
        print(f"nvcpf: integration error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    raise SystemExit(dispatch(sys.argv[1:]))
