"""Command line experiment runner.

Two subcommands::

    epbolt run   [--config FILE] [flags]          one trajectory, CSV output
    epbolt sweep [--config FILE] [flags] --epsilons 0.1,0.01 --table OUT.csv

The config file is flat ``key = value`` text (``#`` starts a comment); any
flag given on the command line overrides the file.  Unknown keys are errors.

Outputs of ``run`` in ``output_dir``:

* ``diagnostics.csv`` with columns ``step, time, mass, momentum,
  total_energy, modulated_energy, tau, picard_iters, min_rho, max_rho``;
  a row is written after step ``k`` when ``k % diagnostics_stride == 0`` and
  after the last step, so there are ``ceil(n_steps / diagnostics_stride)`` rows.
* ``fields_<step>.csv`` with columns ``i, x_i, rho_i, x_{i+1/2}, u_{i+1/2},
  phi_i`` at step 0, every ``snapshot_stride`` steps and the last step.

``custom_file`` initial data is a CSV with header ``rho,u``: one row per cell
holding ``rho_i`` and ``u_{i+1/2}``.

Exit status: 0 on success, 1 on a bad configuration, 2 on solver failure,
3 on I/O failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import logging
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .diagnostics import ConstantState, DiagnosticsRecord, make_record, modulated_energy, tau
from .errors import ConvergenceError, EPBError, InternalError
from .flux import QuadraticUpwind
from .initial_data import KINDS, ExperimentSpec, build_initial_state
from .mesh import PrimalField
from .poisson import PoissonConfig
from .state import PlasmaState
from .stepper import StepConfig, StepFailure, run

log = logging.getLogger("epbolt")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3
MODES = ("full", "asymptotic_eps0")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    kind: str
    epsilon: float
    n_cells: int
    dt: float
    n_steps: int
    s: float = 1.0
    u_bar: float = 0.0
    domain_length: Optional[float] = None
    mode: str = "full"
    output_dir: str = "epbolt_out"
    snapshot_stride: Optional[int] = None
    diagnostics_stride: int = 1
    picard_tol: float = 1e-7
    newton_tol: float = 1e-15
    picard_relaxation: float = 1.0
    input_file: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind: expected one of {', '.join(KINDS)}, got {self.kind!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode: expected one of {', '.join(MODES)}, got {self.mode!r}")
        if not self.epsilon >= 0:
            raise ConfigError("epsilon: must be >= 0")
        if self.n_cells < 2:
            raise ConfigError("n_cells: must be >= 2")
        if not self.dt > 0:
            raise ConfigError("dt: must be positive")
        if self.n_steps < 0:
            raise ConfigError("n_steps: must be >= 0")
        if self.diagnostics_stride < 1:
            raise ConfigError("diagnostics_stride: must be >= 1")
        if self.snapshot_stride is not None and self.snapshot_stride < 1:
            raise ConfigError("snapshot_stride: must be >= 1")
        if not 0 < self.picard_relaxation <= 1:
            raise ConfigError("picard_relaxation: must lie in (0, 1]")
        if not (self.picard_tol > 0 and self.newton_tol > 0):
            raise ConfigError("picard_tol, newton_tol: must be positive")
        if self.kind in ("well_prepared", "ill_prepared") and self.epsilon == 0:
            raise ConfigError(
                f"epsilon: {self.kind} data needs epsilon > 0 (its density mode is floor(1/epsilon)); "
                "use mode=asymptotic_eps0 with a positive epsilon to run the epsilon = 0 limit"
            )
        if self.kind == "custom_file" and not self.input_file:
            raise ConfigError("input_file: required for kind=custom_file")

    @property
    def length(self) -> float:
        if self.domain_length is not None:
            return self.domain_length
        return 2 * math.pi if self.kind == "five_branch" else 1.0

    def experiment(self) -> ExperimentSpec:
        return ExperimentSpec(
            kind=self.kind,
            epsilon=self.epsilon,
            n_cells=self.n_cells,
            dt=self.dt,
            n_steps=self.n_steps,
            s_exponent=self.s,
            u_bar=self.u_bar,
            domain_length=self.length,
            input_file=self.input_file,
        )


# canonical key -> (type, aliases)
_KEYS = {
    "kind": (str, ()),
    "epsilon": (float, ()),
    "n_cells": (int, ("ncells",)),
    "dt": (float, ()),
    "n_steps": (int, ("nsteps",)),
    "s": (float, ("s_exponent",)),
    "u_bar": (float, ("ubar",)),
    "domain_length": (float, ("length",)),
    "mode": (str, ()),
    "output_dir": (str, ("out",)),
    "snapshot_stride": (int, ()),
    "diagnostics_stride": (int, ("diag_stride",)),
    "picard_tol": (float, ()),
    "newton_tol": (float, ()),
    "picard_relaxation": (float, ()),
    "input_file": (str, ("input",)),
}
_ALIASES = {alias: key for key, (_, aliases) in _KEYS.items() for alias in (key, *aliases)}
_REQUIRED = ("kind", "epsilon", "n_cells", "dt", "n_steps")


def _convert(key, raw, where):
    typ = _KEYS[key][0]
    try:
        if typ is int:
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{where}{key}: expected {typ.__name__}, got {raw!r}") from None


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file into canonical keys (values converted)."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            where = f"{path}:{lineno}: "
            if "=" not in line:
                raise ConfigError(f"{where}expected key = value, got {line!r}")
            name, raw = (part.strip() for part in line.split("=", 1))
            key = _ALIASES.get(name)
            if key is None:
                raise ConfigError(f"{where}unknown key {name!r}")
            values[key] = _convert(key, raw, where)
    return values


def parse_config(config_file=None, overrides: Optional[dict] = None) -> RunConfig:
    """Merge a config file with overrides (overrides win) and validate."""
    values = read_config_file(config_file) if config_file else {}
    for name, raw in (overrides or {}).items():
        if raw is None:
            continue
        key = _ALIASES.get(name)
        if key is None:
            raise ConfigError(f"unknown key {name!r}")
        values[key] = _convert(key, raw, "") if isinstance(raw, str) else raw
    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    return RunConfig(**values)


@dataclass
class SimulationResult:
    initial: PlasmaState
    final: PlasmaState
    E_initial: float
    E_final: float
    records: list


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_fields(path: Path, state: PlasmaState) -> None:
    grid = state.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "x_i", "rho_i", "x_{i+1/2}", "u_{i+1/2}", "phi_i"])
        for i in range(grid.n_cells):
            w.writerow([
                i,
                _fmt(grid.primal_centers[i]),
                _fmt(state.rho.values[i]),
                _fmt(grid.dual_centers[i]),
                _fmt(state.u.values[i]),
                _fmt(state.phi.values[i]),
            ])


def limit_state(state: PlasmaState) -> PlasmaState:
    """Same density and velocity with the quasi-neutral potential ``-log(rho)``."""
    phi = PrimalField(state.grid, -np.log(state.rho.values))
    return PlasmaState(rho=state.rho, u=state.u, phi=phi, epsilon=0.0, time=state.time)


def initial_state(cfg: RunConfig) -> PlasmaState:
    state = build_initial_state(cfg.experiment())
    if cfg.mode == "asymptotic_eps0":
        state = limit_state(state)
    return state


def simulate(cfg: RunConfig, output_dir: Optional[Path] = None) -> SimulationResult:
    """Run one experiment; writes CSV output when ``output_dir`` is given."""
    state0 = initial_state(cfg)
    eps = state0.epsilon
    grid = state0.grid
    scheme = QuadraticUpwind.for_grid(grid)
    step_cfg = StepConfig(
        dt=cfg.dt,
        picard_rel_tol=cfg.picard_tol,
        poisson_cfg=PoissonConfig(epsilon=eps, newton_tol=cfg.newton_tol),
        newton_tol_momentum=cfg.newton_tol,
        picard_relaxation=cfg.picard_relaxation,
    )
    ref = ConstantState(u_bar=cfg.u_bar, phi_bar=0.0)
    n = cfg.n_steps
    records = []
    diag_file = None
    writer = None
    if output_dir is not None:
        output_dir.mkdir(parents=True, exist_ok=True)
        diag_file = open(output_dir / "diagnostics.csv", "w", newline="")
        writer = csv.writer(diag_file)
        writer.writerow(DiagnosticsRecord.columns())
        write_fields(output_dir / "fields_0.csv", state0)

    def observer(k, old, new, iters):
        if k % cfg.diagnostics_stride == 0 or k == n:
            rec = make_record(k, new, ref, tau(scheme, old, new, cfg.dt), iters)
            records.append(rec)
            if writer is not None:
                writer.writerow([_fmt(v) for v in rec.as_dict().values()])
                diag_file.flush()
        if output_dir is not None and (k == n or (cfg.snapshot_stride and k % cfg.snapshot_stride == 0)):
            write_fields(output_dir / f"fields_{k}.csv", new)

    try:
        result = run(scheme, state0, step_cfg, n, [observer])
    finally:
        if diag_file is not None:
            diag_file.close()
    return SimulationResult(
        initial=state0,
        final=result.state,
        E_initial=modulated_energy(state0, ref),
        E_final=modulated_energy(result.state, ref),
        records=records,
    )


def run_experiment(cfg: RunConfig) -> int:
    """Run ``cfg`` writing into ``cfg.output_dir``; returns the exit status."""
    try:
        res = simulate(cfg, Path(cfg.output_dir))
    except StepFailure as exc:
        print(f"epbolt: solver failure at step {exc.step}: {exc.cause}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConvergenceError, InternalError) as exc:
        print(f"epbolt: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"epbolt: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except EPBError as exc:
        print(f"epbolt: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("E_initial=%.9g E_final=%.9g", res.E_initial, res.E_final)
    return EXIT_OK


def _sweep_child(job):
    template, eps = job
    try:
        cfg = replace(template, epsilon=eps, output_dir=str(Path(template.output_dir) / f"eps_{eps:g}"))
        res = simulate(cfg, Path(cfg.output_dir))
        return eps, res.E_final, res.E_initial, "ok"
    except Exception as exc:  # a failed child marks its row, the others proceed
        return eps, math.nan, math.nan, f"failed: {exc}"


def worker_count() -> int:
    raw = os.environ.get("EPBOLT_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"EPBOLT_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ConfigError("EPBOLT_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def sweep(template: RunConfig, epsilons, table_path=None) -> list:
    """Run ``template`` once per epsilon; rows are ``(epsilon, E_final, E_initial, status)``."""
    jobs = [(template, float(e)) for e in epsilons]
    rows = []
    if jobs:
        workers = min(worker_count(), len(jobs))
        if workers == 1:
            rows = [_sweep_child(job) for job in jobs]
        else:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_sweep_child, jobs))
    if table_path is not None:
        with open(table_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", "E_final", "E_initial", "status"])
            for eps, ef, ei, status in rows:
                w.writerow([_fmt(eps), _fmt(ef), _fmt(ei), status])
    return rows


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_run_flags(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--s", type=float, help="exponent of the well-prepared density amplitude")
    p.add_argument("--ubar", type=float, help="mean velocity of the reference state")
    p.add_argument("--ncells", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--nsteps", type=int)
    p.add_argument("--length", type=float, help="torus length (default 1, or 2*pi for five_branch)")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--out", help="output directory")
    p.add_argument("--snapshot-stride", type=int)
    p.add_argument("--diag-stride", type=int)
    p.add_argument("--picard-tol", type=float)
    p.add_argument("--newton-tol", type=float)
    p.add_argument("--picard-relaxation", type=float, help="under-relaxation factor in (0, 1]; 1 is plain Picard")
    p.add_argument("--input", help="CSV (rho,u) for kind=custom_file")
    p.add_argument("-v", "--verbose", action="store_true")


_FLAG_KEYS = {
    "kind": "kind", "epsilon": "epsilon", "s": "s", "ubar": "u_bar", "ncells": "n_cells",
    "dt": "dt", "nsteps": "n_steps", "length": "domain_length", "mode": "mode",
    "out": "output_dir", "snapshot_stride": "snapshot_stride", "diag_stride": "diagnostics_stride",
    "picard_tol": "picard_tol", "newton_tol": "newton_tol", "picard_relaxation": "picard_relaxation", "input": "input_file",
}


def build_parser():
    parser = _Parser(prog="epbolt", description="Implicit Euler-Poisson-Boltzmann solver on the 1-D torus")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(sub.add_parser("run", help="run one experiment"))
    sp = sub.add_parser("sweep", help="run one experiment per epsilon")
    _add_run_flags(sp)
    sp.add_argument("--epsilons", default="", help="comma separated list (may be empty)")
    sp.add_argument("--table", help="summary CSV (default <out>/sweep.csv)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = {key: getattr(args, flag) for flag, key in _FLAG_KEYS.items()}
    try:
        if args.command == "sweep":
            epsilons = [float(e) for e in args.epsilons.split(",") if e.strip()]
            # epsilon comes from the list; a placeholder keeps the template valid
            if overrides.get("epsilon") is None:
                overrides["epsilon"] = epsilons[0] if epsilons else 1.0
            cfg = parse_config(args.config, overrides)
            table = Path(args.table) if args.table else Path(cfg.output_dir) / "sweep.csv"
            table.parent.mkdir(parents=True, exist_ok=True)
            rows = sweep(cfg, epsilons, table)
            for eps, ef, ei, status in rows:
                print(f"{eps:g}\t{ef:.6g}\t{ei:.6g}\t{status}")
            return EXIT_OK
        cfg = parse_config(args.config, overrides)
    except ConfigError as exc:
        print(f"epbolt: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"epbolt: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"epbolt: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())
