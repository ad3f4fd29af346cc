"""
main.py — Command-line entry point for the error-equality experiments.

Subcommands:
    verify-abstract   random-matrix check of the abstract identity
    run               convergence table for a manufactured case or a case card
    amr               adaptive refinement scenarios
    render            SVG wireframe of a mesh file
"""

import argparse
import logging
import os
import re
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from abstract_identity import MixedSolution, equality_residual, isometry_deficit, random_system, sharpness_check
from adaptivity import amr_run, compare_indicators, convergence_table, quadrature_degree_study, refinement_comparison
from fem_spaces import AssemblyError
from majorant import HypothesisError
from mesh2d import MeshError, MeshFormatError, read_mesh, write_mesh
from problems import SCENARIOS, ManufacturedCase, ProblemError, load_case_card, manufactured_registry, solve_pair
from quadrature import MAX_DEGREE
from reporting import (
    AMR_HEADER,
    COMPARE_HEADER,
    QUADRATURE_HEADER,
    TABLE_HEADER,
    write_convergence_svg,
    write_csv,
    write_mesh_svg,
)
from sparse_linalg import SolverError

# ─── Logging ────────────────────────────────────────────────────────────

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
DEFAULT_OUT_DIR = os.environ.get("EQUALITY_FEM_OUT", "out")
DEFAULT_LOG_LEVEL = os.environ.get("EQUALITY_FEM_LOG_LEVEL", "INFO")

logger = logging.getLogger("equality-fem")

_handlers: list[logging.Handler] = []


def setup_logging(out_dir: Optional[str] = None, level: str = DEFAULT_LOG_LEVEL):
    """Log to stderr and, when an output directory is given, to <out>/run.log."""
    root = logging.getLogger()
    for handler in _handlers:
        root.removeHandler(handler)
        handler.close()
    _handlers.clear()

    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        handlers.append(logging.FileHandler(os.path.join(out_dir, "run.log"), mode="a"))
    formatter = logging.Formatter(LOG_FORMAT)
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)
        _handlers.append(handler)
    root.setLevel(getattr(logging, str(level).upper(), logging.INFO))


# ─── Config ─────────────────────────────────────────────────────────────

class ConfigError(Exception):
    """Invalid run configuration."""


RUN_CASES = {
    "rd-poly": ("rd_poly_2d", "galerkin"),
    "ex2": ("rd_poly_2d", "undersolve"),
    "ex3": ("rd_poly_2d", "averaged"),
    "ex4": ("ec_ex4", "galerkin"),
    "robin": ("rd_robin", "analytic"),
    "inhomo": ("rd_linear_inhomo", "galerkin"),
}
AMR_CASES = tuple(SCENARIOS)


@dataclass
class RunConfig:
    """Settings of one CLI invocation; file values override these defaults, flags override both."""
    case: str = "rd-poly"
    case_file: Optional[str] = None
    refine: int = 4
    quad_degree: int = 10
    solver: str = "direct"
    tol: float = 1e-12
    fraction: float = 0.3
    iterations: int = 9
    max_elements: int = 0
    indicator: str = "majorant"
    out: str = DEFAULT_OUT_DIR
    seed: int = 0
    n: int = 50
    m: int = 40
    trials: int = 100
    quad_study: bool = False
    compare_uniform: bool = False
    separate_dual: bool = False

    def validate(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigError(f"fraction must lie in (0, 1], got {self.fraction}")
        if not 1 <= self.quad_degree <= MAX_DEGREE:
            raise ConfigError(f"quad_degree must lie in 1..{MAX_DEGREE}, got {self.quad_degree}")
        if self.refine < 1:
            raise ConfigError(f"refine must be at least 1, got {self.refine}")
        if self.max_elements < 0:
            raise ConfigError(f"max_elements must be nonnegative (0 for no limit), got {self.max_elements}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be nonnegative, got {self.iterations}")
        if self.solver not in ("direct", "cg"):
            raise ConfigError(f"solver must be direct or cg, got '{self.solver}'")
        if self.indicator not in ("exact", "majorant"):
            raise ConfigError(f"indicator must be exact or majorant, got '{self.indicator}'")
        if not 0.0 < self.tol < 1.0:
            raise ConfigError(f"tol must lie in (0, 1), got {self.tol}")
        if not (1 <= self.n <= 500 and 1 <= self.m <= 500):
            raise ConfigError(f"n and m must lie in 1..500, got n={self.n}, m={self.m}")
        if self.trials < 1:
            raise ConfigError(f"trials must be at least 1, got {self.trials}")


CONFIG_ENV = "EQUALITY_FEM_CONFIG"
CONFIG_SEARCH = ("equality-fem.yaml", "config.yaml")

_ENV_REF = re.compile(r"\$\{(\w+)(?::-([^}]*))?\}")


def find_config(explicit: Optional[str] = None) -> Optional[str]:
    """
    Config file to use: --config when given, else $EQUALITY_FEM_CONFIG, else
    the first of CONFIG_SEARCH in the working directory. None runs on defaults.
    """
    if explicit:
        return explicit
    for candidate in (os.environ.get(CONFIG_ENV), *CONFIG_SEARCH):
        if candidate and os.path.isfile(candidate):
            return candidate
    logger.debug("No config file found, running on defaults")
    return None


def load_config(path: str) -> dict:
    """Load a YAML run configuration."""
    try:
        with open(path, "r") as f:
            config = yaml.safe_load(f) or {}
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Config {path} is not valid YAML: {e}") from e
    if not isinstance(config, dict):
        raise ConfigError(f"Config {path} must be a mapping")
    logger.info(f"Loaded config from {path}")
    return resolve_env_vars(config)


def _expand_env(match: re.Match) -> str:
    name, fallback = match.group(1), match.group(2)
    value = os.environ.get(name)
    if value:
        return value
    if fallback is not None:
        return fallback
    logger.warning(f"Environment variable {name} not set, keeping {match.group(0)}")
    return match.group(0)


def resolve_env_vars(value):
    """Expand ${VAR} and ${VAR:-fallback} inside config strings, recursing into mappings and lists."""
    if isinstance(value, dict):
        return {key: resolve_env_vars(item) for key, item in value.items()}
    if isinstance(value, list):
        return [resolve_env_vars(item) for item in value]
    if isinstance(value, str):
        return _ENV_REF.sub(_expand_env, value)
    return value


def build_run_config(file_values: dict, overrides: dict) -> RunConfig:
    """
    Merge defaults, config file and explicit flags (in increasing precedence).

    Raises:
        ConfigError: on unknown keys, wrong types or out-of-range values
    """
    known = {f.name: f for f in fields(RunConfig)}
    unknown = set(file_values) - set(known)
    if unknown:
        raise ConfigError(f"Unknown config key(s): {', '.join(sorted(unknown))}")
    merged = {**file_values, **{k: v for k, v in overrides.items() if v is not None and k in known}}
    defaults = RunConfig()
    values = {}
    for name, value in merged.items():
        kind = type(getattr(defaults, name))
        try:
            if name == "case_file":
                values[name] = None if value is None else str(value)
            elif kind is bool:
                values[name] = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
            else:
                values[name] = kind(value)
        except (TypeError, ValueError):
            raise ConfigError(f"Config key '{name}' has an invalid value: {value!r}") from None
    config = RunConfig(**values)
    config.validate()
    return config


# ─── Commands ───────────────────────────────────────────────────────────

ABSTRACT_TOL = 1e-10
SHARPNESS_PROBES = 10


def cmd_verify_abstract(config: RunConfig) -> int:
    """Random systems with random approximation pairs; exit 0 iff every check passes."""
    rng = np.random.default_rng(config.seed)
    seeds = rng.integers(0, 2**31 - 1, size=config.trials)
    max_delta, max_deficit, violations = 0.0, 0.0, 0
    for i, s in enumerate(seeds):
        system = random_system(config.n, config.m, int(s))
        f = rng.standard_normal(config.n)
        approx = MixedSolution(x=rng.standard_normal(config.n), y=rng.standard_normal(config.m))
        residual = equality_residual(system, f, approx)
        max_delta = max(max_delta, residual.delta_rel)
        f_norm = residual.f_norm if residual.f_norm > 0.0 else 1.0
        max_deficit = max(max_deficit, isometry_deficit(system, f) / f_norm)
        report = sharpness_check(system, f, approx.x, trials=SHARPNESS_PROBES, seed=int(s), y_approx=approx.y)
        violations += report.violations
        logger.debug(f"Trial {i}: δ_rel {residual.delta_rel:.3e}")
    ok = max_delta <= ABSTRACT_TOL and max_deficit <= ABSTRACT_TOL and violations == 0
    relation = "<" if max_delta < ABSTRACT_TOL else ">="
    print(
        f"verify-abstract n={config.n} m={config.m} trials={config.trials} seed={config.seed}: "
        f"max_delta_rel {relation} 1e-10 ({max_delta:.3e}), "
        f"max_isometry_deficit={max_deficit:.3e}, sharpness_violations={violations}, "
        f"{'ok' if ok else 'FAILED'}"
    )
    return 0 if ok else 1


def _run_target(config: RunConfig):
    if config.case_file:
        card = load_case_card(config.case_file)
        logger.info(f"Case card '{card.name}': {card.description or card.kind}")
        return card.problem, "galerkin"
    if config.case not in RUN_CASES:
        raise ConfigError(f"Unknown case '{config.case}'; choose from {', '.join(RUN_CASES)}")
    case_id, approximation = RUN_CASES[config.case]
    return manufactured_registry(case_id), approximation


def cmd_run(config: RunConfig) -> int:
    target, approximation = _run_target(config)
    out = Path(config.out)
    rows = convergence_table(target, config.refine, config.quad_degree, approximation, method=config.solver)
    write_csv(out / "table.csv", TABLE_HEADER, [(r.n_elem, r.error, r.majorant, r.delta, r.normalized) for r in rows])
    series = {"majorant": [(r.n_elem, r.majorant) for r in rows]}
    if any(r.error is not None for r in rows):
        series["error"] = [(r.n_elem, r.error) for r in rows]
    write_convergence_svg(series, out / "convergence.svg", title=config.case_file or config.case)

    if config.quad_study:
        if not isinstance(target, ManufacturedCase):
            raise ConfigError("The quadrature study needs a manufactured case")
        mesh = target.initial_mesh()
        if approximation == "analytic":
            primal, dual = target.approximation
        else:
            primal, dual = solve_pair(target.problem, mesh, method=config.solver)
        study = quadrature_degree_study(target, mesh, primal, dual)
        write_csv(out / "quadrature.csv", QUADRATURE_HEADER, [(r.degree, r.error, r.majorant, r.delta) for r in study])
    return 0


def _amr_rows(records) -> list:
    return [(r.iteration, r.n_elem, r.global_value, r.normalized) for r in records]


def cmd_amr(config: RunConfig) -> int:
    if config.case not in AMR_CASES:
        raise ConfigError(f"Unknown AMR case '{config.case}'; choose from {', '.join(AMR_CASES)}")
    target = SCENARIOS[config.case]()
    out = Path(config.out)

    if isinstance(target, ManufacturedCase):
        rows, _, result = compare_indicators(target, config.fraction, config.iterations, config.quad_degree)
        write_csv(out / "compare.csv", COMPARE_HEADER, [(r.iteration, r.n_opt, r.n_maj, r.diff_pct) for r in rows])
    else:
        result = amr_run(
            target,
            indicator=config.indicator,
            fraction=config.fraction,
            iterations=config.iterations,
            degree=config.quad_degree,
            tol=config.tol,
            method=config.solver,
            separate_dual=config.separate_dual,
            max_elements=config.max_elements or None,
        )
    write_csv(out / "amr.csv", AMR_HEADER, _amr_rows(result.records))
    for k, mesh in enumerate(result.meshes):
        write_mesh_svg(mesh, out / f"mesh_iter{k}.svg")
        write_mesh(mesh, out / f"mesh_iter{k}.txt")

    if config.compare_uniform:
        comparison = refinement_comparison(target, config.fraction, config.iterations, degree=config.quad_degree)
        write_csv(out / "uniform.csv", AMR_HEADER, _amr_rows(comparison.uniform))
    return 0


def cmd_render(mesh_path: str, out_path: str) -> int:
    mesh = read_mesh(mesh_path)
    write_mesh_svg(mesh, out_path)
    return 0


# ─── Argument parsing ───────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="equality-fem", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (env EQUALITY_FEM_LOG_LEVEL)")
    parser.add_argument("--config", default=None, help="YAML file with RunConfig keys")
    sub = parser.add_subparsers(dest="command", required=True)

    verify = sub.add_parser("verify-abstract", help="check the identity on random systems")
    verify.add_argument("--n", type=int, default=None)
    verify.add_argument("--m", type=int, default=None)
    verify.add_argument("--trials", type=int, default=None)
    verify.add_argument("--seed", type=int, default=None)

    run = sub.add_parser("run", help="convergence table for a case")
    run.add_argument("--case", default=None, help=", ".join(RUN_CASES))
    run.add_argument("--case-file", dest="case_file", default=None, help="markdown case card")
    run.add_argument("--refine", type=int, default=None)
    run.add_argument("--quad-degree", dest="quad_degree", type=int, default=None)
    run.add_argument("--solver", default=None, help="direct or cg")
    run.add_argument("--out", default=None)
    run.add_argument("--quad-study", dest="quad_study", action="store_true", default=None)

    amr = sub.add_parser("amr", help="adaptive refinement scenario")
    amr.add_argument("--case", default=None, help=", ".join(AMR_CASES))
    amr.add_argument("--fraction", type=float, default=None)
    amr.add_argument("--iters", dest="iterations", type=int, default=None)
    amr.add_argument("--max-elements", dest="max_elements", type=int, default=None, help="stop refining once the mesh has this many elements")
    amr.add_argument("--indicator", default=None, help="exact or majorant")
    amr.add_argument("--quad-degree", dest="quad_degree", type=int, default=None)
    amr.add_argument("--solver", default=None, help="direct or cg")
    amr.add_argument("--out", default=None)
    amr.add_argument("--compare-uniform", dest="compare_uniform", action="store_true", default=None)
    amr.add_argument("--separate-dual", dest="separate_dual", action="store_true", default=None)

    render = sub.add_parser("render", help="SVG wireframe of a mesh file")
    render.add_argument("--mesh", required=True)
    render.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    level = args.log_level or DEFAULT_LOG_LEVEL
    try:
        if args.command == "render":
            setup_logging(None, level)
            return cmd_render(args.mesh, args.out)

        config_path = find_config(args.config)
        file_values = load_config(config_path) if config_path else {}
        overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "log_level")}
        if args.command == "amr" and "case" not in file_values and overrides.get("case") is None:
            overrides["case"] = "ex7"
        config = build_run_config(file_values, overrides)
        setup_logging(config.out if args.command != "verify-abstract" else None, level)
        logger.info(f"equality-fem {args.command}: {config}")

        if args.command == "verify-abstract":
            return cmd_verify_abstract(config)
        if args.command == "run":
            return cmd_run(config)
        return cmd_amr(config)

    except (ConfigError, ProblemError, MeshFormatError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (SolverError, MeshError, AssemblyError, HypothesisError, OSError) as e:
        logger.exception(f"Run failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
