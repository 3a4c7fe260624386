"""Batch front-end: ``ionsim fringe|allan|compile``.

Each run takes a JSON config (keys not given fall back to the defaults shown
by ``--print-defaults``), writes its outputs atomically into ``--out`` and
stamps every file with the SHA-256 of the effective config and the seed.

Exit codes: 0 success, 2 config or parse error, 3 physics error (truncation),
4 unreachable compile target, 1 anything else.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
import tempfile
from typing import Dict, List, Optional, Sequence, Tuple

from .compiler.expr import ExprParseError, parse_expr
from .compiler.synthesis import UnreachableTarget, synthesize
from .hilbert import HilbertSpace, TruncationError
from .interferometer import InterferometerConfig, fit_fringe, shot_record, sweep
from .noise import allan_scan
from .pulses import TrapConfig

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_PHYSICS, EXIT_UNREACHABLE = 0, 1, 2, 3, 4

_PHYSICS = {
    "order": 1,
    "eta": 0.35,
    "omega_z": 2 * math.pi * 3.63e6,
    "omega_pulse": 2 * math.pi * 100e3,
    "pulse_phases": [0.0, 0.0],
    "delta_omega_z": 2 * math.pi * 20e3,
    "contrast": 1.0,
    "n_max": None,
}

DEFAULTS: Dict[str, dict] = {
    "fringe": {
        **_PHYSICS,
        "t_start": 0.0,
        "t_stop": None,  # two fringes of the n=1 interferometer: 4 pi / dwz
        "points": 101,
        "shots": 0,
        "analytic": False,
        "seed": 0,
    },
    "allan": {
        **_PHYSICS,
        "shots": 10000,
        "phi": None,  # maximum-slope point n phi = pi/2
        "N_b": [4, 8, 16, 32, 64, 128, 256],
        "seed": 0,
    },
    "compile": {
        "expr_file": None,
        "expr": None,
        "time": 1.0,
        "delta_t": 0.01,
        "depth": 2,
        "eta": 0.35,
        "omega_z": 2 * math.pi * 3.63e6,
        "n_max": None,
        "strength": None,
        "padding": None,
        "verify": True,
        "seed": 0,
    },
}

# keys whose default is None still need a type
_NULLABLE_TYPES = {
    "n_max": int,
    "t_stop": float,
    "phi": float,
    "expr_file": str,
    "expr": str,
    "strength": float,
    "padding": int,
}


class ConfigError(ValueError):
    pass


def _check_type(key: str, value, default):
    if value is None:
        if default is None:
            return None
        raise ConfigError(f"config key '{key}': must not be null")
    expected = _NULLABLE_TYPES.get(key) if default is None else type(default)
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"config key '{key}': expected true/false, got {value!r}")
        return value
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key '{key}': expected an integer, got {value!r}")
        return value
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"config key '{key}': expected a finite number, got {value!r}")
        return float(value)
    if expected is str:
        if not isinstance(value, str):
            raise ConfigError(f"config key '{key}': expected a string, got {value!r}")
        return value
    if expected is list:
        fixed_len = key == "pulse_phases"
        if not isinstance(value, list) or not value or (fixed_len and len(value) != len(default)):
            raise ConfigError(f"config key '{key}': expected a list like {default!r}, got {value!r}")
        return [_check_type(f"{key}[{i}]", v, default[0]) for i, v in enumerate(value)]
    raise ConfigError(f"config key '{key}': unsupported type")


def load_config(command: str, raw: Optional[dict]) -> dict:
    """Merge ``raw`` over the defaults, rejecting unknown keys and bad types."""
    cfg = copy.deepcopy(DEFAULTS[command])
    if raw is None:
        return cfg
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key, value in raw.items():
        if key not in cfg:
            raise ConfigError(f"unknown config key '{key}' for command '{command}'")
        cfg[key] = _check_type(key, value, DEFAULTS[command][key])
    return cfg


def config_hash(command: str, cfg: dict) -> str:
    blob = json.dumps({"command": command, "config": cfg}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _header(command: str, cfg: dict) -> str:
    return f"ionsim {command} config_sha256={config_hash(command, cfg)} seed={cfg['seed']}"


def _wrap(key: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _trap(cfg: dict) -> TrapConfig:
    return _wrap("eta/omega_z", TrapConfig, omega_z=cfg["omega_z"], eta_override=cfg["eta"])


def interferometer_config(cfg: dict) -> InterferometerConfig:
    if not 0.0 <= cfg["contrast"] <= 1.0:
        raise ConfigError(f"config key 'contrast': must lie in [0, 1], got {cfg['contrast']}")
    space = None
    if cfg["n_max"] is not None:
        space = _wrap("n_max", HilbertSpace, cfg["n_max"])
    return _wrap(
        "interferometer",
        InterferometerConfig,
        order=cfg["order"],
        trap=_trap(cfg),
        omega_pulse=cfg["omega_pulse"],
        pulse_phases=tuple(cfg["pulse_phases"]),
        delta_omega_z=cfg["delta_omega_z"],
        contrast=cfg["contrast"],
        space=space,
    )


def _seed_ok(seed: int) -> int:
    if not 0 <= seed < 2**64:
        raise ConfigError(f"config key 'seed': must be an unsigned 64-bit integer, got {seed}")
    return seed


# -- commands ------------------------------------------------------------------


def run_fringe(cfg: dict) -> List[Tuple[str, str]]:
    ic = interferometer_config(cfg)
    _seed_ok(cfg["seed"])
    if cfg["points"] < 8:
        raise ConfigError("config key 'points': need at least 8 points for a fringe fit")
    if cfg["shots"] < 0:
        raise ConfigError("config key 'shots': must be >= 0")
    t_stop = cfg["t_stop"]
    if t_stop is None:
        t_stop = ic.time_for_phase(4 * math.pi)
    t0 = cfg["t_start"]
    if t0 < 0 or t_stop <= t0:
        raise ConfigError("config keys 't_start'/'t_stop': need 0 <= t_start < t_stop")
    n = cfg["points"]
    grid = [t0 + (t_stop - t0) * i / (n - 1) for i in range(n)]
    data = sweep(ic, grid, cfg["shots"], cfg["seed"] if cfg["shots"] else None, analytic=cfg["analytic"])
    fit = fit_fringe(data)
    head = _header("fringe", cfg)
    report = [
        f"# {head}",
        f"mode={data.mode}",
        f"order={ic.order}",
        f"delta_omega_z={ic.delta_omega_z!r}",
        f"fit_frequency={fit.frequency!r}",
        f"fit_frequency_over_delta_omega_z={fit.frequency / ic.delta_omega_z!r}",
        f"fit_contrast={fit.contrast!r}",
        f"fit_phase_offset={fit.phase_offset!r}",
        f"fit_residual_norm={fit.residual_norm!r}",
        f"fit_indeterminate={fit.indeterminate}",
    ]
    return [("fringe.csv", data.to_csv([head])), ("fringe_fit.txt", "\n".join(report) + "\n")]


def run_allan(cfg: dict) -> List[Tuple[str, str]]:
    ic = interferometer_config(cfg)
    seed = _seed_ok(cfg["seed"])
    M = cfg["shots"]
    if M < 1:
        raise ConfigError("config key 'shots': must be >= 1")
    for nb in cfg["N_b"]:
        if not 2 < nb < M / 2:
            raise ConfigError(f"config key 'N_b': {nb} outside 2 < N_b < M/2 with M={M}")
    record = shot_record(ic, M, seed, cfg["phi"])
    result = allan_scan(record, ic, cfg["N_b"])
    head = _header("allan", cfg)
    extra = f"order={ic.order} contrast={ic.contrast!r} operating_point={record.operating_point!r} slope={result.slope_used!r}"
    return [("allan.csv", result.to_csv(with_sql=True, comments=[head, extra]))]


def _read_expr(cfg: dict):
    if (cfg["expr"] is None) == (cfg["expr_file"] is None):
        raise ConfigError("exactly one of 'expr' and 'expr_file' must be given")
    text = cfg["expr"]
    if text is None:
        try:
            with open(cfg["expr_file"], encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"config key 'expr_file': {exc}") from exc
    return parse_expr(text)


def run_compile(cfg: dict) -> List[Tuple[str, str]]:
    _seed_ok(cfg["seed"])
    target = _read_expr(cfg)
    if cfg["delta_t"] <= 0:
        raise ConfigError("config key 'delta_t': must be positive")
    if cfg["depth"] < 1:
        raise ConfigError("config key 'depth': must be >= 1")
    space = None if cfg["n_max"] is None else _wrap("n_max", HilbertSpace, cfg["n_max"])
    program, report = synthesize(
        target,
        cfg["time"],
        cfg["delta_t"],
        cfg["depth"],
        trap=_trap(cfg),
        space=space,
        strength=cfg["strength"],
        padding=cfg["padding"],
        verify_result=cfg["verify"],
    )
    head = _header("compile", cfg)
    outputs = [("program.txt", f"# {head}\n" + program.to_text())]
    lines = [f"# {head}", f"target={target.describe()}", f"time={cfg['time']!r}"]
    if report is not None:
        lines.append(report.to_text().rstrip("\n"))
    else:
        lines.append(f"step_count={len(program)}")
    outputs.append(("compile_report.txt", "\n".join(lines) + "\n"))
    return outputs


COMMANDS = {"fringe": run_fringe, "allan": run_allan, "compile": run_compile}


def write_atomic(out_dir: str, outputs: Sequence[Tuple[str, str]]) -> List[str]:
    """Write every file to a temp name first, then rename all.

    On any failure the temp files and any outputs already renamed into place
    are removed, so a run leaves either all of its files or none.
    """
    os.makedirs(out_dir, exist_ok=True)
    temps: List[str] = []
    placed: List[str] = []
    try:
        for name, text in outputs:
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            temps.append(tmp)
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        for (name, _), tmp in zip(outputs, temps):
            dest = os.path.join(out_dir, name)
            os.replace(tmp, dest)
            placed.append(dest)
        return placed
    except BaseException:
        for path in placed:
            if os.path.exists(path):
                os.remove(path)
        raise
    finally:
        for tmp in temps:
            if os.path.exists(tmp):
                os.remove(tmp)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ionsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; missing keys take default values")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
        if name == "compile":
            p.add_argument("--expr", dest="expr_file_arg", help="expression file (overrides expr_file)")
            p.add_argument("--time", type=float)
            p.add_argument("--delta-t", type=float, dest="delta_t")
            p.add_argument("--depth", type=int)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    command = args.command
    if args.print_defaults:
        print(json.dumps(DEFAULTS[command], indent=2, sort_keys=True))
        return EXIT_OK
    try:
        raw = None
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    raw = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        cfg = load_config(command, raw)
        if args.seed is not None:
            cfg["seed"] = _seed_ok(args.seed)
        if command == "compile":
            if args.expr_file_arg is not None:
                cfg["expr_file"], cfg["expr"] = args.expr_file_arg, None
            for key in ("time", "delta_t", "depth"):
                if getattr(args, key) is not None:
                    cfg[key] = getattr(args, key)
        outputs = COMMANDS[command](cfg)
        for path in write_atomic(args.out, outputs):
            print(path)
        return EXIT_OK
    except (ConfigError, ExprParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnreachableTarget as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except TruncationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
