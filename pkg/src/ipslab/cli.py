"""Command-line front end.

Usage::

    ipslab check    --config run.json [--out DIR]
    ipslab simulate --config run.json [--seed N] [--out DIR]
    ipslab couple   --config run.json [--seed N] [--out DIR]
    ipslab dual     --config run.json [--seed N] [--out DIR]
    ipslab moments  --config run.json [--input trajectory.csv] [--out DIR]

Every command writes ``config.json`` (the validated config echo) and
``summary.json`` into the output directory, plus a CSV where applicable.
Wall-clock time goes to ``timing.json`` so the other files stay
byte-identical across runs with the same seed.  Exit codes: 0 success,
2 config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Sequence

import numba
import numpy as np

from . import __version__
from .analytics import residual_table
from .checker import ergodicity_report
from .core import ORDERS, LETTERS, RingConfig
from .dual import (
    BranchingSpec,
    DecomposedBranchingSpec,
    DualSetSpec,
    extinction_fixed_point,
    mean_offspring,
    simulate_branching,
    simulate_dual_set,
)
from .rates import (
    CutPasteKernel,
    GenericRateModel,
    RnYprParams,
    derived_constants,
    specialize_jc,
    specialize_rnc,
    specialize_t92,
)
from .sim import (
    TRAJECTORY_COLUMNS,
    SimSpec,
    estimate_stationary,
    simulate_coupled,
)

log = logging.getLogger("ipslab")

MODELS = ("rnypr", "rnc", "t92", "jc", "independent", "generic")
MODEL_KEYS: dict[str, tuple[str, ...]] = {
    "rnypr": tuple(f"{k}_{x}" for k in "vw" for x in LETTERS),
    "rnc": ("v_W", "v_S", "w_W", "w_S", "r_U", "r_W", "r_S", "r_V"),
    "t92": ("theta", "v", "w", "r"),
    "jc": ("v", "r"),
    "independent": ("Q",),
    "generic": ("table",),
}
OPTIONAL_KEYS = {"rnypr": tuple(f.name for f in fields(RnYprParams) if f.name.startswith("r_"))}


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


@dataclass(frozen=True)
class RunConfig:
    model: str
    params: dict[str, Any]
    kernel: dict[str, Any] = field(default_factory=lambda: {"type": "stirring", "rho": 1.0})
    ring_n: int = 64
    seed: int = 0
    horizon: float | None = 100.0
    max_events: int | None = None
    burn_in: float = 0.0
    sample_interval: float = 1.0
    samples: int = 1000
    order: str = "O1"
    output: str = "out"
    init: str = "uniform-random"
    lower_init: str = "all-min"
    upper_init: str = "all-max"
    debug_every: int = 0
    dual: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("model", "params"):
            if key not in data:
                raise ConfigError(f"missing config key {key!r}")
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if not isinstance(self.params, dict):
            raise ConfigError("params must be an object")
        required = MODEL_KEYS[self.model]
        missing = [k for k in required if k not in self.params]
        if missing:
            raise ConfigError(f"model {self.model} is missing parameters {missing}")
        allowed = set(required) | set(OPTIONAL_KEYS.get(self.model, ()))
        extra = set(self.params) - allowed
        if extra:
            raise ConfigError(f"unexpected parameters for {self.model}: {sorted(extra)}")
        if self.order not in ORDERS:
            raise ConfigError(f"order must be one of O1..O8, got {self.order!r}")
        if not isinstance(self.ring_n, int) or self.ring_n < 3:
            raise ConfigError("ring_n must be an integer >= 3")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a non-negative 64-bit integer")
        if self.horizon is None and self.max_events is None:
            raise ConfigError("set horizon or max_events")
        if self.sample_interval <= 0 or self.samples < 1 or self.burn_in < 0:
            raise ConfigError("need sample_interval > 0, samples >= 1, burn_in >= 0")
        if self.init in ("all-min", "all-max"):
            raise ConfigError("init presets all-min and all-max apply only to coupled runs")
        try:
            self.build_model()
            self.build_kernel().validate(self.ring_n)
            self.initial(self.init)
            self.initial(self.lower_init)
            self.initial(self.upper_init)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    def build_model(self) -> RnYprParams | GenericRateModel:
        p = {k: v for k, v in self.params.items()}
        if self.model == "rnypr":
            return RnYprParams(**{k: float(v) for k, v in p.items()})
        if self.model == "rnc":
            return specialize_rnc(**{k: float(v) for k, v in p.items()})
        if self.model == "t92":
            return specialize_t92(float(p["theta"]), float(p["v"]), float(p["w"]), float(p["r"]))
        if self.model == "jc":
            return specialize_jc(float(p["v"]), float(p["r"]))
        if self.model == "independent":
            Q = np.array(p["Q"], dtype=np.float64)
            if Q.shape != (4, 4):
                raise ValueError("Q must be a 4x4 matrix in a, t, c, g order")
            np.fill_diagonal(Q, 0.0)
            np.fill_diagonal(Q, -Q.sum(axis=1))
            return GenericRateModel.independent(Q)
        return GenericRateModel.from_table(np.array(p["table"], dtype=np.float64))

    def build_kernel(self) -> CutPasteKernel:
        k = self.kernel
        if not isinstance(k, dict) or "type" not in k:
            raise ValueError("kernel needs a type")
        rho = float(k.get("rho", 0.0))
        if k["type"] == "stirring":
            return CutPasteKernel.stirring(rho)
        if k["type"] == "custom":
            return CutPasteKernel(rho, {int(d): float(w) for d, w in k.get("weights", {}).items()})
        raise ValueError(f"kernel type must be stirring or custom, got {k['type']!r}")

    def initial(self, init: str) -> RingConfig | str:
        if init in ("all-a", "all-t", "all-c", "all-g", "uniform-random", "all-min", "all-max"):
            return init
        cfg = RingConfig(init)
        if cfg.n != self.ring_n:
            raise ValueError("initial configuration length differs from ring_n")
        return cfg

    def sim_spec(self) -> SimSpec:
        return SimSpec(
            model=self.build_model(),
            kernel=self.build_kernel(),
            n=self.ring_n,
            init=self.initial(self.init),
            horizon=self.horizon,
            max_events=self.max_events,
            seed=self.seed,
            sample_interval=self.sample_interval,
            debug_every=self.debug_every,
        )


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return RunConfig.from_dict(data)


# -- output helpers --------------------------------------------------------------


def _dump(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _versions() -> dict[str, str]:
    return {
        "ipslab": __version__,
        "numpy": np.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
    }


def _finish(out: Path, cfg: RunConfig, command: str, result: dict, started: float) -> dict:
    summary = {"command": command, "seed": cfg.seed, "versions": _versions(), "result": result}
    _dump(out / "config.json", cfg.to_dict())
    _dump(out / "summary.json", summary)
    _dump(out / "timing.json", {"command": command, "wall_clock_seconds": time.perf_counter() - started})
    return summary


# -- commands ------------------------------------------------------------------


def _rnypr(cfg: RunConfig) -> RnYprParams:
    model = cfg.build_model()
    if not isinstance(model, RnYprParams):
        raise ConfigError(f"command needs an RN+YpR family model, not {cfg.model}")
    return model


def cmd_check(cfg: RunConfig, out: Path) -> dict:
    started = time.perf_counter()
    report = ergodicity_report(_rnypr(cfg)).to_dict()
    _dump(out / "report.json", report)
    return _finish(out, cfg, "check", report, started)


def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    started = time.perf_counter()
    stats = estimate_stationary(cfg.sim_spec(), cfg.burn_in, cfg.sample_interval, cfg.samples)
    _write_csv(out / "trajectory.csv", TRAJECTORY_COLUMNS, stats.rows().tolist())
    return _finish(out, cfg, "simulate", stats.summary(), started)


def coupled_columns(order_pairs: Sequence[str]) -> tuple[str, ...]:
    return TRAJECTORY_COLUMNS + ("viol_count", "discrepancy") + tuple(
        "cpair_" + p for p in order_pairs
    )


def cmd_couple(cfg: RunConfig, out: Path) -> dict:
    started = time.perf_counter()
    spec = cfg.sim_spec()
    res = simulate_coupled(
        spec, cfg.order, cfg.initial(cfg.lower_init), cfg.initial(cfg.upper_init),
        average_from=cfg.burn_in,
    )
    names = res.ordered_pair_names()
    idx = [4 * LETTERS.index(p[0]) + LETTERS.index(p[1]) for p in names]
    rows = np.column_stack(
        [res.times, res.lower_series, res.misc_series, res.cross_series[:, idx]]
    )
    table = rows.tolist()
    viol = len(TRAJECTORY_COLUMNS)
    for row in table:
        row[viol] = int(row[viol])
    _write_csv(out / "coupled.csv", coupled_columns(names), table)
    return _finish(out, cfg, "couple", res.summary(), started)


def cmd_dual(cfg: RunConfig, out: Path) -> dict:
    started = time.perf_counter()
    d = dict(cfg.dual)
    mode = d.pop("mode", "branching")
    runs = int(d.pop("runs", 10_000))
    horizon = float(d.pop("horizon", cfg.horizon or 100.0))
    times = [float(t) for t in d.pop("query_times", np.linspace(horizon / 10, horizon, 10))]
    initial = d.pop("initial", 1)
    cap = int(d.pop("cap", 1_000_000))
    try:
        if mode in ("branching", "decomposed"):
            if mode == "branching":
                if {"s", "lambda_bar", "lambda_bar_0"} <= d.keys():
                    s, lb, l0 = int(d.pop("s")), float(d.pop("lambda_bar")), float(d.pop("lambda_bar_0"))
                else:
                    dc = derived_constants(_rnypr(cfg))
                    s, lb, l0 = dc.s, dc.lambda_bar, dc.lambda_bar_0
                spec: BranchingSpec | DecomposedBranchingSpec = BranchingSpec(
                    s, lb, l0, int(initial), runs, horizon, cap, cfg.seed
                )
            else:
                if "parts" in d:
                    parts = tuple((int(s), float(lam)) for s, lam in d.pop("parts"))
                    l0d = float(d.pop("lambda_bar_0d"))
                else:
                    dc = derived_constants(_rnypr(cfg))
                    parts = tuple((p.s, p.lambda_bar) for p in dc.decomposition)
                    l0d = dc.lambda_bar_0d
                spec = DecomposedBranchingSpec(parts, l0d, int(initial), runs, horizon, cap, cfg.seed)
            if d:
                raise ConfigError(f"unknown dual options: {sorted(d)}")
            res = simulate_branching(spec, times)
            result = res.summary() | {
                "mode": mode,
                "mean_offspring": mean_offspring(spec),
                "extinction_fixed_point": extinction_fixed_point(spec),
            }
            curve = res.survival_curve(times)
        elif mode == "dual_set":
            sites = d.pop("initial_set", [0])
            if d:
                raise ConfigError(f"unknown dual options: {sorted(d)}")
            dspec = DualSetSpec(
                cfg.build_model(), cfg.build_kernel(), cfg.ring_n, tuple(sites), horizon,
                runs, cfg.seed, tuple(times),
            )
            dres = simulate_dual_set(dspec)
            result = dres.summary() | {"mode": mode}
            curve = dres.rows()
        else:
            raise ConfigError(f"dual mode must be branching, decomposed or dual_set, got {mode!r}")
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"bad dual options: {exc}") from None
    _write_csv(out / "survival.csv", ("t", "fraction_alive", "se"), curve)
    return _finish(out, cfg, "dual", result, started)


def read_trajectory(path: str | Path) -> np.ndarray:
    """Load a trajectory CSV into rows of the 20 frequency columns."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        want = list(TRAJECTORY_COLUMNS[1:])
        if header is None or any(c not in header for c in want):
            raise ConfigError(f"{path} is not a trajectory CSV")
        cols = [header.index(c) for c in want]
        rows = [[float(r[i]) for i in cols] for r in reader if r]
    if not rows:
        raise ConfigError(f"{path} has no samples")
    return np.array(rows)


def cmd_moments(cfg: RunConfig, out: Path, input_csv: str | None = None) -> dict:
    started = time.perf_counter()
    params = _rnypr(cfg)
    if input_csv:
        series = read_trajectory(input_csv)
    else:
        stats = estimate_stationary(cfg.sim_spec(), cfg.burn_in, cfg.sample_interval, cfg.samples)
        series = stats.series
    rows = residual_table(params, series)
    header = ("equation", "lhs", "rhs", "residual", "tolerance", "pass")
    _write_csv(out / "residuals.csv", header, [[r[h] for h in header] for r in rows])
    result = {"samples": int(series.shape[0]), "all_pass": all(r["pass"] for r in rows), "rows": rows}
    return _finish(out, cfg, "moments", result, started)


COMMANDS = ("check", "simulate", "couple", "dual", "moments")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="override the output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="ipslab", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"ipslab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "moments":
            p.add_argument("--input", default=None, help="trajectory CSV to evaluate")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = load_config(args.config)
        overrides: dict[str, Any] = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["output"] = args.out
        if overrides:
            cfg = replace(cfg, **overrides)
            cfg.validate()
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "check":
            summary = cmd_check(cfg, out)
        elif args.command == "simulate":
            summary = cmd_simulate(cfg, out)
        elif args.command == "couple":
            summary = cmd_couple(cfg, out)
        elif args.command == "dual":
            summary = cmd_dual(cfg, out)
        else:
            summary = cmd_moments(cfg, out, args.input)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError, ArithmeticError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(summary["result"], indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
