#!/usr/bin/env python3
"""
CLI entrypoint for the tv_wasserstein package.

Generate phantoms, add noise, run the TV-Wasserstein flow, denoise with the
flow or with second-order TV, and compare images.

Examples:
    # 64x64 square phantom, then 100 flow steps with frames every 10 steps
    tv-wasserstein generate square --n 64 --out square.tvwf
    tv-wasserstein evolve square.tvwf --steps 100 --dt 1 --eps 1e-3 \\
        --frame-stride 10 --out-dir runs/square

    # Pyramid on [0, 1]^2 (h = 1/64) with a small time step
    tv-wasserstein generate pyramid --n 65 --out pyramid.tvwf
    tv-wasserstein evolve pyramid.tvwf --h 0.015625 --steps 50 --dt 1e-7 \\
        --out-dir runs/pyramid

    # Denoising comparison
    tv-wasserstein generate cartoon --out clean.tvwf
    tv-wasserstein noise clean.tvwf --variance 0.01 --seed 3 --out noisy.tvwf
    tv-wasserstein denoise noisy.tvwf --method tv --alpha 0.05 \\
        --reference clean.tvwf --out-dir runs/tv

    # Metrics record (psnr,l2,mass_a,mass_b,tv_a,tv_b)
    tv-wasserstein metrics runs/tv/result.tvwf clean.tvwf --header

Notes:
- Parameters resolve as: flag > --config file > TVW_* environment > built-in.
- The manifest.txt written next to each output is itself a valid --config file.
- The flow's time step has no silent default: pass --dt, put dt in the
  --config file or set TVW_DT.

Exit codes:
    0 success
    1 usage error or invalid parameters
    2 solver failure (strict non-convergence, linear solver failure,
      loss of positivity)
    3 I/O or image format error

License: MIT
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, NoReturn, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import __version__, load_dotenv_if_present, setup_logging
from .config import (
    DEFAULT_ALPHA,
    DEFAULT_EPS,
    DEFAULT_EPS_TOL,
    DEFAULT_H,
    DEFAULT_LINEAR_METHOD,
    DEFAULT_MAX_INNER,
    DEFAULT_POSITIVITY_TOL,
    DEFAULT_SEED,
    DEFAULT_TAU0,
    DEFAULT_TAU_DECAY,
    DEFAULT_TAU_MIN,
    DEFAULT_TOL_LIN,
    get_env,
)
from .flow import (
    FlowAbortedError,
    FlowResult,
    FlowRun,
    StepDiagnostics,
    evolve,
    normalize_mass,
    write_diagnostics_csv,
)
from .grid_ops import PositivityError, ScalarField
from .imaging import (
    ImageFormatError,
    add_gaussian_noise,
    discrete_tv,
    gen_cartoon,
    gen_pyramid,
    gen_square,
    l2_distance,
    mass,
    preview_buffer,
    psnr,
    read_field,
    write_field,
    write_image,
)
from .linalg import LinearSolveError
from .manifest import RunManifest, read_config_file
from .newton import NewtonSolveError, SolverConfig
from .tv_baseline import TvDenoiseConfig, denoise_tv, staircase_metric

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_IO = 3

METRICS_HEADER = "psnr,l2,mass_a,mass_b,tv_a,tv_b"
DENOISE_METRICS_COLUMNS = [
    "method",
    "psnr_input",
    "psnr",
    "discrete_tv",
    "staircase_metric",
    "iterations",
]

_DEFAULT_SIZES = {"square": 100, "pyramid": 65, "cartoon": 200}

logger = logging.getLogger("tv_wasserstein.cli")


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with EXIT_USAGE."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -----------------------
# Parameter resolution
# -----------------------


def _parse_bool(raw: Any) -> bool:
    if isinstance(raw, bool):
        return raw
    text = str(raw).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean; got {raw!r}")


_REQUIRED = object()

# name -> (cast, environment variable or None, built-in default)
_PARAMS: Dict[str, Tuple[Callable[[Any], Any], Optional[str], Any]] = {
    "n": (int, None, None),
    "inside": (float, None, 1.0),
    "outside": (float, None, 0.0),
    "variance": (float, None, _REQUIRED),
    "seed": (int, "TVW_SEED", DEFAULT_SEED),
    "steps": (int, None, _REQUIRED),
    "dt": (float, "TVW_DT", _REQUIRED),
    "eps": (float, "TVW_EPS", DEFAULT_EPS),
    "tau0": (float, "TVW_TAU0", DEFAULT_TAU0),
    "tau_decay": (float, "TVW_TAU_DECAY", DEFAULT_TAU_DECAY),
    "tau_min": (float, "TVW_TAU_MIN", DEFAULT_TAU_MIN),
    "eps_tol": (float, "TVW_EPS_TOL", DEFAULT_EPS_TOL),
    "max_inner": (int, "TVW_MAX_INNER", DEFAULT_MAX_INNER),
    "tol_lin": (float, "TVW_TOL_LIN", DEFAULT_TOL_LIN),
    "linear_method": (str, "TVW_LINEAR_METHOD", DEFAULT_LINEAR_METHOD),
    "positivity_tol": (float, "TVW_POSITIVITY_TOL", DEFAULT_POSITIVITY_TOL),
    "h": (float, "TVW_H", DEFAULT_H),
    "frame_stride": (int, None, 0),
    "normalize": (_parse_bool, None, True),
    "strict": (_parse_bool, None, False),
    "clamp": (_parse_bool, None, False),
    "alpha": (float, "TVW_ALPHA", DEFAULT_ALPHA),
    "method": (str, None, "tvw"),
}

_SOLVER_PARAMS = [
    "eps",
    "tau0",
    "tau_decay",
    "tau_min",
    "eps_tol",
    "max_inner",
    "tol_lin",
    "linear_method",
    "h",
]
_FLOW_PARAMS = ["steps", "dt", "positivity_tol", "normalize", "strict", "clamp"]


def _resolve(
    args: argparse.Namespace, file_values: Dict[str, str], names: Sequence[str]
) -> Dict[str, Any]:
    """
    Resolve parameters with precedence flag > config file > environment >
    built-in default.

    Raises:
        ValueError: on a missing required parameter or an unparsable value.
    """
    resolved: Dict[str, Any] = {}
    for name in names:
        cast, env_name, default = _PARAMS[name]
        value = getattr(args, name, None)
        source = "flag"
        if value is None and file_values.get(name, "") != "":
            value, source = file_values[name], "config"
        if value is None and env_name and get_env(env_name) is not None:
            value, source = get_env(env_name), env_name
        if value is None:
            if default is _REQUIRED:
                flag = "--" + name.replace("_", "-")
                raise ValueError(
                    f"{flag} is required (or set {name} in the --config file)"
                )
            resolved[name] = default
            continue
        try:
            resolved[name] = cast(value)
        except (TypeError, ValueError) as exc:
            msg = f"invalid value for {name} from {source}: {value!r}"
            raise ValueError(msg) from exc
    return resolved


def _solver_config(params: Dict[str, Any]) -> SolverConfig:
    return SolverConfig(
        dt=params["dt"],
        eps=params["eps"],
        tau0=params["tau0"],
        tau_decay=params["tau_decay"],
        tau_min=params["tau_min"],
        eps_tol=params["eps_tol"],
        max_inner=params["max_inner"],
        tol_lin=params["tol_lin"],
        h=params["h"],
        linear_method=params["linear_method"],
        positivity_tol=params["positivity_tol"],
    )


# -----------------------
# Output helpers
# -----------------------


def _write_preview(u: ScalarField, path: Path) -> Path:
    return write_image(preview_buffer(u), path, fmt="P5")


def _write_manifest(
    path: Path,
    command: str,
    started: float,
    params: Dict[str, Any],
    inputs: Dict[str, Path],
    outputs: Dict[str, Path],
    seed: Optional[int] = None,
) -> None:
    RunManifest(
        command=command,
        version=__version__,
        parameters=params,
        inputs={k: str(v) for k, v in inputs.items()},
        outputs={k: str(v) for k, v in outputs.items()},
        seed=seed,
        duration_seconds=time.perf_counter() - started,
    ).write(path)
    logger.debug("wrote manifest %s", path)


def _format_number(value: float) -> str:
    return repr(float(value))


class _DirectorySink:
    """FlowSink writing frame_%06d.tvwf (+ .pgm preview) into a directory."""

    def __init__(self, out_dir: Path) -> None:
        self.out_dir = out_dir
        self.diagnostics: List[StepDiagnostics] = []
        self.frames: List[Path] = []

    def record(self, diag: StepDiagnostics) -> None:
        self.diagnostics.append(diag)

    def frame(self, step: int, U: ScalarField) -> None:
        stem = f"frame_{step:06d}"
        self.frames.append(write_field(U, self.out_dir / f"{stem}.tvwf"))
        _write_preview(U, self.out_dir / f"{stem}.pgm")


def _run_flow(run: FlowRun, out_dir: Path) -> Tuple[FlowResult, _DirectorySink]:
    sink = _DirectorySink(out_dir)
    try:
        result = evolve(run, sink)
    except FlowAbortedError as exc:
        if isinstance(exc.__cause__, PositivityError) and not run.clamp_renormalize:
            logger.error(
                "positivity lost at step %d; rerun with --clamp or a smaller --dt",
                exc.step,
            )
        elif isinstance(exc.__cause__, NewtonSolveError):
            logger.error(
                "linear solve failed at step %d; try a larger --tol-lin or "
                "--linear-method iterative",
                exc.step,
            )
        raise
    finally:
        write_diagnostics_csv(sink.diagnostics, out_dir / "diagnostics.csv")
    return result, sink


# -----------------------
# Subcommands
# -----------------------


def cmd_generate(args: argparse.Namespace, file_values: Dict[str, str]) -> None:
    started = time.perf_counter()
    names = ["n", "inside", "outside"] if args.kind == "square" else ["n"]
    params = _resolve(args, file_values, names)
    n = params["n"] if params["n"] is not None else _DEFAULT_SIZES[args.kind]
    params["n"] = n
    params["kind"] = args.kind

    if args.kind == "square":
        u = gen_square(n, inside=params["inside"], outside=params["outside"])
    elif args.kind == "pyramid":
        u = gen_pyramid(n)
    else:
        u = gen_cartoon(n)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    outputs = {"field": write_field(u, out)}
    if out.suffix.lower() == ".tvwf":
        outputs["preview"] = _write_preview(u, out.with_suffix(".pgm"))
    _write_manifest(
        out.with_suffix(".manifest.txt"), "generate", started, params, {}, outputs
    )
    logger.info("generated %s phantom %dx%d -> %s", args.kind, n, n, out)


def cmd_noise(args: argparse.Namespace, file_values: Dict[str, str]) -> None:
    started = time.perf_counter()
    params = _resolve(args, file_values, ["variance", "seed"])
    source = Path(args.input)
    u = read_field(source)
    noisy = add_gaussian_noise(u, params["variance"], params["seed"])

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    outputs = {"field": write_field(noisy, out)}
    if out.suffix.lower() == ".tvwf":
        outputs["preview"] = _write_preview(noisy, out.with_suffix(".pgm"))
    _write_manifest(
        out.with_suffix(".manifest.txt"),
        "noise",
        started,
        params,
        {"field": source},
        outputs,
        seed=params["seed"],
    )
    logger.info(
        "added noise (variance=%g, seed=%d) -> %s",
        params["variance"],
        params["seed"],
        out,
    )


def cmd_evolve(args: argparse.Namespace, file_values: Dict[str, str]) -> None:
    started = time.perf_counter()
    names = _SOLVER_PARAMS + _FLOW_PARAMS + ["frame_stride"]
    params = _resolve(args, file_values, names)
    cfg = _solver_config(params)
    source = Path(args.input)
    u0 = read_field(source, h=params["h"])
    if params["normalize"]:
        u0 = normalize_mass(u0)

    run = FlowRun(
        config=cfg,
        n_steps=params["steps"],
        initial=u0,
        clamp_renormalize=params["clamp"],
        frame_stride=params["frame_stride"],
        strict=params["strict"],
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result, sink = _run_flow(run, out_dir)

    outputs = {
        "final": write_field(result.final, out_dir / "final.tvwf"),
        "preview": _write_preview(result.final, out_dir / "final.pgm"),
        "diagnostics": out_dir / "diagnostics.csv",
    }
    _write_manifest(
        out_dir / "manifest.txt", "evolve", started, params, {"field": source}, outputs
    )
    n_unconverged = sum(not d.converged for d in result.diagnostics)
    logger.info(
        "evolved %d time steps (%d Newton iterations, %d frames, %d unconverged) -> %s",
        len(result.diagnostics),
        result.newton_iterations,
        len(sink.frames),
        n_unconverged,
        out_dir,
    )


def _denoise_with_flow(
    f: ScalarField, params: Dict[str, Any], out_dir: Path
) -> Tuple[ScalarField, int]:
    values = f.values
    n_neg = int(np.count_nonzero(values < 0.0))
    if n_neg:
        logger.warning("clamping %d negative input pixels to 0 for the flow", n_neg)
        values = np.maximum(values, 0.0)
    u0 = f.with_values(values)
    scale = 1.0
    if params["normalize"]:
        scale = mass(u0)
        u0 = normalize_mass(u0)

    run = FlowRun(
        config=_solver_config(params),
        n_steps=params["steps"],
        initial=u0,
        clamp_renormalize=params["clamp"],
        strict=params["strict"],
    )
    result, _ = _run_flow(run, out_dir)
    final = result.final.with_values(result.final.values * scale)
    return final, result.newton_iterations


def cmd_denoise(args: argparse.Namespace, file_values: Dict[str, str]) -> None:
    started = time.perf_counter()
    method = _resolve(args, file_values, ["method"])["method"]
    if method not in ("tvw", "tv"):
        raise ValueError(f"method must be 'tvw' or 'tv'; got {method!r}")
    extra = _FLOW_PARAMS if method == "tvw" else ["alpha"]
    params = _resolve(args, file_values, _SOLVER_PARAMS + extra)
    params["method"] = method

    source = Path(args.input)
    f = read_field(source, h=params["h"])
    inputs: Dict[str, Path] = {"field": source}
    reference: Optional[ScalarField] = None
    if args.reference:
        inputs["reference"] = Path(args.reference)
        reference = read_field(args.reference, h=params["h"])
        if reference.values.shape != f.values.shape:
            raise ValueError(
                f"reference shape {reference.values.shape} does not match "
                f"input {f.values.shape}"
            )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs: Dict[str, Path] = {}
    if method == "tvw":
        u, iterations = _denoise_with_flow(f, params, out_dir)
        outputs["diagnostics"] = out_dir / "diagnostics.csv"
    else:
        tv_cfg = TvDenoiseConfig(
            alpha=params["alpha"],
            eps=params["eps"],
            tau0=params["tau0"],
            tau_decay=params["tau_decay"],
            tau_min=params["tau_min"],
            eps_tol=params["eps_tol"],
            max_inner=params["max_inner"],
            tol_lin=params["tol_lin"],
            linear_method=params["linear_method"],
        )
        solution = denoise_tv(f, tv_cfg)
        u, iterations = solution.u, solution.report.iterations_used

    outputs["result"] = write_field(u, out_dir / "result.tvwf")
    outputs["preview"] = _write_preview(u, out_dir / "result.pgm")

    row = {
        "method": method,
        "psnr_input": psnr(f, reference) if reference is not None else None,
        "psnr": psnr(u, reference) if reference is not None else None,
        "discrete_tv": discrete_tv(u),
        "staircase_metric": staircase_metric(u, reference),
        "iterations": iterations,
    }
    metrics_path = out_dir / "metrics.csv"
    pd.DataFrame([row], columns=DENOISE_METRICS_COLUMNS).to_csv(
        metrics_path, index=False, float_format="%.17g"
    )
    outputs["metrics"] = metrics_path
    _write_manifest(
        out_dir / "manifest.txt", "denoise", started, params, inputs, outputs
    )
    if reference is not None:
        logger.info(
            "denoise %s: psnr %.3f -> %.3f dB",
            method,
            row["psnr_input"],
            row["psnr"],
        )
    else:
        logger.info("denoise %s: %d iterations -> %s", method, iterations, out_dir)


def cmd_metrics(args: argparse.Namespace, file_values: Dict[str, str]) -> None:
    started = time.perf_counter()
    params = _resolve(args, file_values, ["h"])
    a = read_field(args.a, h=params["h"])
    b = read_field(args.b, h=params["h"])
    values = [
        psnr(a, b),
        l2_distance(a, b),
        mass(a),
        mass(b),
        discrete_tv(a),
        discrete_tv(b),
    ]
    if args.header:
        print(METRICS_HEADER)
    print(",".join(_format_number(v) for v in values))
    if args.manifest:
        _write_manifest(
            Path(args.manifest),
            "metrics",
            started,
            params,
            {"a": Path(args.a), "b": Path(args.b)},
            {},
        )


# -----------------------
# Parser
# -----------------------


def _add_common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--config",
        default=None,
        help="KEY=value parameter file (a previous run's manifest.txt works).",
    )
    p.add_argument(
        "--log-level",
        default=None,
        help="Logging level (default: LOG_LEVEL or INFO).",
    )
    p.add_argument(
        "--dotenv",
        action="store_true",
        help="Load a local .env before resolving TVW_* defaults.",
    )


def _add_solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--eps",
        type=float,
        default=None,
        help=f"Penalty weight (default: {DEFAULT_EPS}).",
    )
    p.add_argument(
        "--tau0",
        type=float,
        default=None,
        help=f"Initial damping (default: {DEFAULT_TAU0}).",
    )
    p.add_argument(
        "--tau-decay",
        type=float,
        default=None,
        help=f"Geometric damping factor in (0, 1) (default: {DEFAULT_TAU_DECAY}).",
    )
    p.add_argument(
        "--tau-min",
        type=float,
        default=None,
        help=f"Damping floor (default: {DEFAULT_TAU_MIN}).",
    )
    p.add_argument(
        "--eps-tol",
        type=float,
        default=None,
        help=f"Newton stopping tolerance (default: {DEFAULT_EPS_TOL}).",
    )
    p.add_argument(
        "--max-inner",
        type=int,
        default=None,
        help=f"Newton iteration cap (default: {DEFAULT_MAX_INNER}).",
    )
    p.add_argument(
        "--tol-lin",
        type=float,
        default=None,
        help=f"Linear solver tolerance (default: {DEFAULT_TOL_LIN}).",
    )
    p.add_argument(
        "--linear-method",
        choices=["direct", "iterative"],
        default=None,
        help=f"Sparse solver (default: {DEFAULT_LINEAR_METHOD}).",
    )
    p.add_argument(
        "--h",
        type=float,
        default=None,
        help=f"Grid step (default: {DEFAULT_H}).",
    )


def _add_flow_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, default=None, help="Number of time steps.")
    p.add_argument(
        "--dt",
        type=float,
        default=None,
        help="Time step (required unless set in --config or TVW_DT).",
    )
    p.add_argument(
        "--positivity-tol",
        type=float,
        default=None,
        help=(
            "Largest tolerated negative density, relative to the peak "
            f"(default: {DEFAULT_POSITIVITY_TOL})."
        ),
    )
    p.add_argument(
        "--no-normalize",
        dest="normalize",
        action="store_false",
        default=None,
        help="Do not rescale the input to unit mass.",
    )
    p.add_argument(
        "--strict",
        action="store_true",
        default=None,
        help="Abort (exit 2) when a time step's Newton loop does not converge.",
    )
    p.add_argument(
        "--clamp",
        action="store_true",
        default=None,
        help="Clamp negative densities after each step and restore the mass.",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="tv-wasserstein",
        description="TV-Wasserstein gradient flow and TV denoising on 2D images.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Write a synthetic phantom.")
    p.add_argument("kind", choices=["square", "pyramid", "cartoon"])
    p.add_argument("--n", type=int, default=None, help="Side length (>= 8).")
    p.add_argument("--inside", type=float, default=None, help="Square value.")
    p.add_argument("--outside", type=float, default=None, help="Background value.")
    p.add_argument("--out", required=True, help="Output path (.tvwf or .pgm).")
    _add_common_args(p)
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("noise", help="Add seeded Gaussian noise.")
    p.add_argument("input")
    p.add_argument("--variance", type=float, default=None, help="Noise variance.")
    p.add_argument(
        "--seed",
        type=int,
        default=None,
        help=f"Random seed (default: {DEFAULT_SEED}).",
    )
    p.add_argument("--out", required=True, help="Output path (.tvwf or .pgm).")
    _add_common_args(p)
    p.set_defaults(handler=cmd_noise)

    p = sub.add_parser("evolve", help="Run the TV-Wasserstein flow.")
    p.add_argument("input")
    _add_flow_args(p)
    _add_solver_args(p)
    p.add_argument(
        "--frame-stride",
        type=int,
        default=None,
        help="Write a frame every this many steps (default: 0, none).",
    )
    p.add_argument("--out-dir", required=True)
    _add_common_args(p)
    p.set_defaults(handler=cmd_evolve)

    p = sub.add_parser("denoise", help="Denoise with the flow (tvw) or with TV (tv).")
    p.add_argument("input")
    p.add_argument("--method", choices=["tvw", "tv"], default=None, help="tvw or tv.")
    p.add_argument(
        "--alpha",
        type=float,
        default=None,
        help=f"TV weight (default: {DEFAULT_ALPHA}).",
    )
    p.add_argument("--reference", default=None, help="Clean image for PSNR.")
    _add_flow_args(p)
    _add_solver_args(p)
    p.add_argument("--out-dir", required=True)
    _add_common_args(p)
    p.set_defaults(handler=cmd_denoise)

    p = sub.add_parser("metrics", help="Compare image a against reference b.")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument(
        "--h",
        type=float,
        default=None,
        help=f"Grid step (default: {DEFAULT_H}).",
    )
    p.add_argument("--header", action="store_true", help="Print the column header.")
    p.add_argument("--manifest", default=None, help="Also write a run manifest here.")
    _add_common_args(p)
    p.set_defaults(handler=cmd_metrics)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    if args.dotenv:
        # Best-effort .env load; ignore if python-dotenv not installed.
        load_dotenv_if_present()

    setup_logging(args.log_level)

    try:
        file_values = read_config_file(args.config) if args.config else {}
        args.handler(args, file_values)
    except (
        FlowAbortedError,
        NewtonSolveError,
        LinearSolveError,
        PositivityError,
    ) as exc:
        logger.error("%s", exc)
        return EXIT_SOLVER
    except (ImageFormatError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_IO
    except ValueError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
