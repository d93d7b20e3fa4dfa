"""Command-line front end.

Commands: mask, simulate, reconstruct, reconstruct-pi, reconstruct-rician,
metrics. Every command that writes output also writes a JSON run manifest
next to it recording the resolved parameters, inputs, outputs and seeds;
re-running the recorded command reproduces the outputs byte for byte.

Exit codes: 0 success (and convergence, where applicable), 3 when an
iterative command stops on the iteration cap without meeting the tolerance,
1 on any error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, io
from .denoisers import DENOISER_NAMES, get_denoiser
from .errors import ParameterError
from .metrics import metric_report
from .parallel import PIProblem, SensitivityMaps, pi_reconstruct
from .rician import RicianParams, rician_forward, rician_reconstruct
from .solver import Problem, SolverConfig, reconstruct
from .transforms import MASK_KINDS, apply_mask, fft2_centered, make_mask

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 3

_CONFIG_KEYS = {
    "lambda": ("lam", float),
    "p": ("p", float),
    "rho": ("rho", float),
    "eta1": ("eta1", float),
    "eta2": ("eta2", float),
    "eps_mode": ("eps_mode", str),
    "eps_value": ("eps_value", float),
    "max_iters": ("max_iters", int),
    "stop_tol": ("stop_tol", float),
    "noise_hi": ("noise_hi", float),
    "noise_lo": ("noise_lo", float),
    "check_form": ("check_form", str),
    "allow_unsafe_steps": ("allow_unsafe_steps", lambda s: s.lower() in ("1", "true", "yes")),
    "fidelity_mode": ("fidelity_mode", str),
    "denoiser": (None, str),  # handled by the command, not SolverConfig
}


def parse_config_file(path) -> dict:
    """Plain key=value file; '#' starts a comment, blank lines ignored."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ParameterError(f"{path}:{lineno}: unknown key {key!r}")
        field, conv = _CONFIG_KEYS[key]
        out[key if field is None else field] = conv(value)
    return out


def build_config(args) -> tuple[SolverConfig, str]:
    """Merge defaults < config file < explicit flags; returns (config, denoiser)."""
    settings: dict = {}
    if args.config:
        settings.update(parse_config_file(args.config))
    denoiser = settings.pop("denoiser", "identity")
    for flag, key in (("lam", "lam"), ("p", "p"), ("rho", "rho"),
                      ("eta1", "eta1"), ("eta2", "eta2"),
                      ("max_iters", "max_iters"), ("stop_tol", "stop_tol"),
                      ("noise_hi", "noise_hi"), ("noise_lo", "noise_lo")):
        value = getattr(args, flag, None)
        if value is not None:
            settings[key] = value
    if getattr(args, "denoiser", None) is not None:
        denoiser = args.denoiser
    return SolverConfig(**settings), denoiser


def _out_path(args, name: str) -> Path:
    base = Path(args.out_dir) if args.out_dir else Path(".")
    base.mkdir(parents=True, exist_ok=True)
    return base / name


def write_manifest(out_path: Path, command: str, params: dict, inputs: list,
                   outputs: list, started: float) -> None:
    manifest = {
        "command": command,
        "parameters": params,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "duration_s": time.perf_counter() - started,
    }
    path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_mask(args) -> int:
    started = time.perf_counter()
    mask = make_mask(args.kind, args.rows, args.cols, args.ratio, seed=args.seed)
    out = _out_path(args, args.out)
    io.write_mask(out, mask)
    preview = out.with_suffix(".pgm")
    io.write_pgm(preview, mask.keep.astype(float))
    write_manifest(out, "mask",
                   {"kind": args.kind, "rows": args.rows, "cols": args.cols,
                    "ratio": args.ratio, "achieved_ratio": mask.ratio,
                    "seed": args.seed},
                   [], [out, preview], started)
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    x = io.read_image(args.image)
    mask = io.read_mask(args.mask)
    out = _out_path(args, args.out)
    outputs = [out]
    if args.sigma > 0:
        z, n1, n2 = rician_forward(x, args.sigma, seed=args.seed)
        y = apply_mask(fft2_centered(z.astype(np.complex128)), mask)
        for suffix, arr in (("_z", z), ("_n1", n1), ("_n2", n2)):
            path = out.with_name(out.stem + suffix + out.suffix)
            io.write_image(path, arr)
            outputs.append(path)
    else:
        y = apply_mask(fft2_centered(x.astype(np.complex128)), mask)
    io.write_image(out, y)
    preview = out.with_suffix(".pgm")
    io.write_pgm(preview, y)
    outputs.append(preview)
    write_manifest(out, "simulate",
                   {"sigma": args.sigma, "seed": args.seed},
                   [args.image, args.mask], outputs, started)
    return EXIT_OK


def _finish_reconstruction(args, command: str, x, trace_meta: dict,
                           params: dict, inputs: list, started: float,
                           trace_csv: str | None) -> int:
    out = _out_path(args, args.out)
    io.write_image(out, x)
    preview = out.with_suffix(".pgm")
    io.write_pgm(preview, x)
    outputs = [out, preview]
    if trace_csv is not None:
        trace_path = out.with_suffix(".trace.csv")
        trace_path.write_text(trace_csv)
        outputs.append(trace_path)
    write_manifest(out, command, params, inputs, outputs, started)
    return EXIT_OK if trace_meta.get("converged") else EXIT_NOT_CONVERGED


def cmd_reconstruct(args) -> int:
    started = time.perf_counter()
    config, denoiser_name = build_config(args)
    y = io.read_image(args.y)
    mask = io.read_mask(args.mask)
    problem = Problem(y=y, mask=mask, levels=args.levels)
    denoiser = get_denoiser(denoiser_name, seed=args.seed)
    ref = io.read_image(args.ref) if args.ref else None
    x, trace = reconstruct(problem, config, denoiser, ref=ref)
    return _finish_reconstruction(
        args, "reconstruct", x, trace.meta,
        {"config": vars(config) | {"denoiser": denoiser_name},
         "seed": args.seed, "levels": args.levels,
         "iterations": trace.iterations,
         "converged": trace.meta["converged"]},
        [args.y, args.mask], started,
        trace.csv_text() if args.trace else None)


def cmd_reconstruct_pi(args) -> int:
    started = time.perf_counter()
    config, denoiser_name = build_config(args)
    y = io.read_stack(args.y)
    mask = io.read_mask(args.mask)
    maps = SensitivityMaps(io.read_stack(args.maps))
    problem = PIProblem(y=y, mask=mask, maps=maps, levels=args.levels)
    denoiser = get_denoiser(denoiser_name, seed=args.seed)
    ref = io.read_image(args.ref) if args.ref else None
    x, trace = pi_reconstruct(problem, config, denoiser, ref=ref)
    return _finish_reconstruction(
        args, "reconstruct-pi", x, trace.meta,
        {"config": vars(config) | {"denoiser": denoiser_name},
         "seed": args.seed, "levels": args.levels, "coils": problem.coils,
         "iterations": trace.iterations,
         "converged": trace.meta["converged"]},
        [args.y, args.mask, args.maps], started,
        trace.csv_text() if args.trace else None)


def cmd_reconstruct_rician(args) -> int:
    started = time.perf_counter()
    config, denoiser_name = build_config(args)
    y = io.read_image(args.y)
    mask = io.read_mask(args.mask)
    params = RicianParams(rho1=args.rho1, rho2=args.rho2,
                          outer_iters=args.outer_iters,
                          noise_mode=args.noise_mode)
    n1 = io.read_image(args.n1) if args.n1 else None
    n2 = io.read_image(args.n2) if args.n2 else None
    denoiser = get_denoiser(denoiser_name, seed=args.seed)
    ref = io.read_image(args.ref) if args.ref else None
    x, trace = rician_reconstruct(y, mask, args.sigma, config, params,
                                  denoiser=denoiser, n1=n1, n2=n2,
                                  levels=args.levels, ref=ref)
    out = _out_path(args, args.out)
    io.write_image(out, x)
    preview = out.with_suffix(".pgm")
    io.write_pgm(preview, x)
    outputs = [out, preview]
    if args.trace:
        for tag, inner in (("z", trace.z_traces), ("x", trace.x_traces)):
            path = out.with_suffix(f".trace_{tag}.csv")
            path.write_text("".join(
                t.csv_text() if i == 0 else
                "".join(t.csv_text().splitlines(keepends=True)[1:])
                for i, t in enumerate(inner)))
            outputs.append(path)
    write_manifest(out, "reconstruct-rician",
                   {"config": vars(config) | {"denoiser": denoiser_name},
                    "sigma": args.sigma, "rho1": args.rho1, "rho2": args.rho2,
                    "outer_iters": args.outer_iters,
                    "noise_mode": args.noise_mode, "seed": args.seed,
                    "levels": args.levels,
                    "consistency": trace.consistency,
                    "converged": trace.meta["converged"]},
                   [p for p in (args.y, args.mask, args.n1, args.n2) if p],
                   outputs, started)
    return EXIT_OK if trace.meta["converged"] else EXIT_NOT_CONVERGED


def cmd_metrics(args) -> int:
    ref = io.read_image(args.ref)
    test = io.read_image(args.test)
    report = metric_report(ref, test)
    print(f"{report.psnr!r},{report.rlne!r},{report.ssim!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csrecon",
        description="Compressed-sensing MRI reconstruction with a "
                    "convergence-safeguarded plug-and-play solver.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default=None)

    recon_common = argparse.ArgumentParser(add_help=False)
    recon_common.add_argument("--config", default=None,
                              help="key=value solver configuration file")
    recon_common.add_argument("--trace", action="store_true",
                              help="also write the per-iteration CSV trace")
    recon_common.add_argument("--levels", type=int, default=3)
    recon_common.add_argument("--denoiser", choices=DENOISER_NAMES, default=None)
    recon_common.add_argument("--ref", default=None,
                              help="ground-truth image for per-iteration metrics")
    recon_common.add_argument("--lam", type=float, default=None)
    recon_common.add_argument("--p", type=float, default=None)
    recon_common.add_argument("--rho", type=float, default=None)
    recon_common.add_argument("--eta1", type=float, default=None)
    recon_common.add_argument("--eta2", type=float, default=None)
    recon_common.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    recon_common.add_argument("--stop-tol", dest="stop_tol", type=float, default=None)
    recon_common.add_argument("--noise-hi", dest="noise_hi", type=float, default=None)
    recon_common.add_argument("--noise-lo", dest="noise_lo", type=float, default=None)

    p_mask = sub.add_parser("mask", parents=[common],
                            help="generate a sampling mask")
    p_mask.add_argument("--kind", choices=MASK_KINDS, required=True)
    p_mask.add_argument("--rows", type=int, required=True)
    p_mask.add_argument("--cols", type=int, required=True)
    p_mask.add_argument("--ratio", type=float, required=True)
    p_mask.add_argument("--out", default="mask.cmsk")
    p_mask.set_defaults(fn=cmd_mask)

    p_sim = sub.add_parser("simulate", parents=[common],
                           help="forward-simulate k-space data")
    p_sim.add_argument("--image", required=True)
    p_sim.add_argument("--mask", required=True)
    p_sim.add_argument("--sigma", type=float, default=0.0,
                       help="Rician noise level (0 disables)")
    p_sim.add_argument("--out", default="y.cimg")
    p_sim.set_defaults(fn=cmd_simulate)

    p_rec = sub.add_parser("reconstruct", parents=[common, recon_common],
                           help="single-coil reconstruction")
    p_rec.add_argument("--y", required=True)
    p_rec.add_argument("--mask", required=True)
    p_rec.add_argument("--out", default="recon.cimg")
    p_rec.set_defaults(fn=cmd_reconstruct)

    p_pi = sub.add_parser("reconstruct-pi", parents=[common, recon_common],
                          help="multi-coil reconstruction")
    p_pi.add_argument("--y", required=True, help="CPIM per-coil k-space")
    p_pi.add_argument("--mask", required=True)
    p_pi.add_argument("--maps", required=True, help="CPIM sensitivity maps")
    p_pi.add_argument("--out", default="recon_pi.cimg")
    p_pi.set_defaults(fn=cmd_reconstruct_pi)

    p_ric = sub.add_parser("reconstruct-rician", parents=[common, recon_common],
                           help="reconstruction under Rician noise")
    p_ric.add_argument("--y", required=True)
    p_ric.add_argument("--mask", required=True)
    p_ric.add_argument("--sigma", type=float, required=True)
    p_ric.add_argument("--rho1", type=float, default=0.01)
    p_ric.add_argument("--rho2", type=float, default=0.01)
    p_ric.add_argument("--outer-iters", dest="outer_iters", type=int, default=10)
    p_ric.add_argument("--noise-mode", choices=("oracle", "blind"),
                       default="blind")
    p_ric.add_argument("--n1", default=None, help="oracle noise field (CIMG)")
    p_ric.add_argument("--n2", default=None, help="oracle noise field (CIMG)")
    p_ric.add_argument("--out", default="recon_rician.cimg")
    p_ric.set_defaults(fn=cmd_reconstruct_rician)

    p_met = sub.add_parser("metrics", parents=[common],
                           help="print psnr,rlne,ssim for a pair of images")
    p_met.add_argument("--ref", required=True)
    p_met.add_argument("--test", required=True)
    p_met.set_defaults(fn=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"csrecon: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
