"""Command-line front end.

Exit codes: 0 success, 1 self-test failure, 2 bad configuration or
arguments, 3 I/O failure, 4 internal contract violation. Human-readable
causes go to stderr; machine-readable results go to stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .bench import measure_attention_ops, write_csv
from .demo import procedural_video, smooth_field
from .errors import InvalidConfigError, PatchVSRError, SnapshotError
from .frames import FrameIOError, read_frames, write_frames
from .model import ModelWeights
from .pipeline import PipelineConfig, run_detailed, upscaled_dims
from .schedule import SamplerConfig, make_time_grid
from .tiling import bicubic_resize

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INTERNAL = 4


class UsageError(Exception):
    """Bad arguments or configuration (exit 2)."""


def _err(msg: str) -> None:
    print(f"patchvsr: {msg}", file=sys.stderr)


def load_pipeline_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        return PipelineConfig.from_json(text)
    except InvalidConfigError as exc:
        raise UsageError(f"invalid config {path}: {exc}") from exc


def cmd_upscale(args) -> int:
    config = load_pipeline_config(args.config)
    if args.workers is not None:
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        config = replace(config, workers=args.workers)
    weights = None
    if args.weights:
        try:
            weights = ModelWeights.load(args.weights)
        except SnapshotError as exc:
            raise UsageError(f"weights snapshot {args.weights}: {exc}") from exc
    video = read_frames(args.input)
    reference = None
    if args.reference:
        reference = read_frames(args.reference)
        expected = (video.shape[0], *upscaled_dims(video.shape[1], video.shape[2], config.upscale_factor), 3)
        if reference.shape != expected:
            raise UsageError(f"reference frames {reference.shape} do not match expected output {expected}")

    output, report, _, _ = run_detailed(video, reference, config, weights, naive=not config.joint_modulation)
    out_dir = Path(args.output)
    write_frames(out_dir, output)
    report_dict = report.to_dict()
    report_dict["config"] = config.to_dict()
    (out_dir / "report.json").write_text(json.dumps(report_dict, indent=2) + "\n")

    ts = make_time_grid(config.sampler.num_steps, config.sampler.shift)
    with open(out_dir / "steps.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "t_from", "t_to", "seconds"])
        for i, secs in enumerate(report.step_times):
            writer.writerow([i, repr(ts[i]), repr(ts[i + 1]), f"{secs:.6f}"])
    if not args.no_figures:
        from .plotting import plot_step_times

        plot_step_times(report.step_times, ts, out_dir / "steps.png")
    print(json.dumps({k: report_dict[k] for k in ("mode", "seam_index", "psnr_vs_reference", "output_shape")}))
    return EXIT_OK


def cmd_seams_demo(args) -> int:
    if args.amplitude < 0:
        raise UsageError("--amplitude must be >= 0")
    out = Path(args.output)
    size = args.size
    if size % 8:
        raise UsageError("--size must be a multiple of 8")
    if args.content == "smooth":
        reference = smooth_field(args.frames, size, size, seed=args.seed)
    else:
        reference = procedural_video(args.frames, size, size, seed=args.seed)
    video = bicubic_resize(reference, (size // 2, size // 2))
    config = PipelineConfig(
        SamplerConfig(num_steps=args.steps, seed=args.seed),
        upscale_factor=2.0,
        amplitude=args.amplitude,
        model_kind="stochastic_oracle",
        patch_size=(size // 2, size // 2),
    )
    naive, naive_report, _, _ = run_detailed(video, reference, config, naive=True)
    joint, joint_report, _, _ = run_detailed(video, reference, config, naive=False)
    write_frames(out / "target", reference)
    write_frames(out / "naive", naive)
    write_frames(out / "joint", joint)
    with open(out / "seams.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "seam_index", "psnr", "wall_time"])
        for rep in (naive_report, joint_report):
            psnr_value = rep.to_dict()["psnr_vs_reference"]
            writer.writerow([rep.mode, repr(rep.seam_index), psnr_value, f"{rep.wall_time:.4f}"])
    if not args.no_figures:
        from .plotting import plot_seam_comparison

        plot_seam_comparison(reference, naive, joint, naive_report.seam_index, joint_report.seam_index,
                             config.patch_size, out / "seams.png")
    print(json.dumps({"naive": naive_report.seam_index, "joint": joint_report.seam_index}))
    return EXIT_OK


def cmd_bench(args) -> int:
    path = Path(args.config)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise UsageError(f"cannot read bench config {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"bench config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("bench config must be a JSON object")
    unknown = set(data) - {"pairs", "trials", "dim", "seed"}
    if unknown:
        raise UsageError(f"unknown bench config keys: {sorted(unknown)}")
    pairs = data.get("pairs")
    if not isinstance(pairs, list) or not pairs:
        raise UsageError("bench config needs a non-empty 'pairs' list of [n, m]")
    for p in pairs:
        if not (isinstance(p, list) and len(p) == 2 and all(isinstance(v, int) and v > 0 for v in p)):
            raise UsageError(f"bad pair {p!r}; expected [n, m] positive integers")
    try:
        reports = measure_attention_ops(pairs, trials=int(data.get("trials", 1)),
                                        dim=int(data.get("dim", 32)), seed=int(data.get("seed", 0)))
    except InvalidConfigError as exc:
        raise UsageError(str(exc)) from exc
    csv_path = Path(args.csv)
    if csv_path.parent != Path(""):
        csv_path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(reports, csv_path)
    if not args.no_figures:
        from .plotting import plot_cost_ratios

        plot_cost_ratios(reports, csv_path.with_suffix(".png"))
    with open(csv_path) as fh:
        sys.stdout.write(fh.read())
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_all

    ok = run_all(weights_path=args.weights)
    return EXIT_OK if ok else EXIT_SELFTEST


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patchvsr", description="Patch-wise latent-diffusion video super-resolution")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("upscale", help="super-resolve a PPM frame sequence")
    p.add_argument("--input", required=True, help="directory of frame_NNNN.ppm")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--config", required=True, help="pipeline config JSON")
    p.add_argument("--reference", help="high-resolution reference frames (enables PSNR and oracle targets)")
    p.add_argument("--workers", type=int, help="override the config's worker thread count")
    p.add_argument("--weights", help="toy-denoiser weight snapshot")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_upscale)

    p = sub.add_parser("seams-demo", help="naive stitching vs joint modulation on procedural content")
    p.add_argument("--output", required=True)
    p.add_argument("--amplitude", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=4)
    p.add_argument("--size", type=int, default=128, help="target frame size in pixels (2x2 patches)")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--content", choices=("shapes", "smooth"), default="shapes")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_seams_demo)

    p = sub.add_parser("bench", help="attention token-cost benchmark")
    p.add_argument("--config", required=True, help='JSON like {"pairs": [[1024, 256]], "trials": 1}')
    p.add_argument("--csv", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("selftest", help="run the invariant checks")
    p.add_argument("--weights", help="also verify this weight snapshot file")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except InvalidConfigError as exc:
        _err(f"invalid configuration: {exc}")
        return EXIT_CONFIG
    except (FrameIOError, OSError) as exc:
        _err(f"I/O failure: {exc}")
        return EXIT_IO
    except (PatchVSRError, ValueError) as exc:
        _err(f"internal error: {type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
