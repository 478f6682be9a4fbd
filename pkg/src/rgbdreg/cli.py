"""Command-line interface.

Commands: ``register``, ``evaluate``, ``render``, ``benchmark``,
``synth``. Exit codes: 0 success, 1 input error, 2 numerical failure
(degenerate fit / no correspondences).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import figures, frameio, pipeline, synthdata
from .correspondence import dump_correspondences
from .descriptor import build_feature_cloud, extract_features
from .errors import ConfigError, InputError, NumericalError
from .evaluation import RegistrationReport
from .pipeline import DEFAULT_SUBSET_SWEEP, PipelineConfig
from .renderer import cross_render

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NUMERICAL_ERROR = 2

_CONFIG_BOOL_KEYS = {"randomized", "ratio_test"}
_CONFIG_INT_KEYS = {"feature_dim", "k", "subsets", "subset_size", "seed", "splat_radius"}
_CONFIG_FLOAT_KEYS = {"photometric_weight", "depth_weight", "correspondence_weight"}
_CONFIG_STR_KEYS = {"descriptor", "render_mode"}


def read_config_file(path: Path) -> dict:
    """Parse the plain ``key = value`` config format; '#' starts a comment."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if key in _CONFIG_BOOL_KEYS:
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"{path}:{lineno}: bad boolean {value!r}")
            values[key] = value.lower() in ("true", "1", "yes")
        elif key in _CONFIG_INT_KEYS:
            values[key] = int(value)
        elif key in _CONFIG_FLOAT_KEYS:
            values[key] = float(value)
        elif key in _CONFIG_STR_KEYS:
            values[key] = value
        else:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
    return values


def build_pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    """Merge defaults, the optional config file, and explicit flags (flags win)."""
    values: dict = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    flag_map = {
        "descriptor": "descriptor",
        "feature_dim": "feature_dim",
        "k": "k",
        "subsets": "subsets",
        "subset_size": "subset_size",
        "seed": "seed",
        "render_mode": "render_mode",
        "splat_radius": "splat_radius",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            values[key] = value
    if getattr(args, "no_randomized", False):
        values["randomized"] = False
    if getattr(args, "no_ratio_test", False):
        values["ratio_test"] = False
    return PipelineConfig(**values)


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    parser.add_argument("--config", type=Path, default=None, help="key = value config file")
    parser.add_argument("--json-out", type=Path, default=None, help="write the JSON report here")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--descriptor",
        default=None,
        metavar="{patch|file:<dir>}",
        help="descriptor source; file:<dir> expects <dir>/0.feat and <dir>/1.feat",
    )
    parser.add_argument("--feature-dim", type=int, default=None, help="descriptor dimension")
    parser.add_argument("--k", type=int, default=None, help="correspondences to keep (even)")
    parser.add_argument("--subsets", type=int, default=None, help="random subset count")
    parser.add_argument("--subset-size", type=int, default=None, help="correspondences per subset")
    parser.add_argument(
        "--no-randomized", action="store_true", help="single fit on all correspondences"
    )
    parser.add_argument(
        "--no-ratio-test", action="store_true", help="rank matches by feature distance alone"
    )
    parser.add_argument("--render-mode", choices=("cross", "joint"), default=None)
    parser.add_argument("--splat-radius", type=int, default=None, help="square splat radius, px")


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _cmd_register(args: argparse.Namespace) -> int:
    config = build_pipeline_config(args)
    out_dir = args.out_dir if args.out_dir else Path(args.pair_dir) / "registration"
    output = pipeline.register(args.pair_dir, config, out_dir)
    if args.dump_correspondences:
        dump_correspondences(output.matches, args.dump_correspondences)
    if not args.no_figures:
        frame0, frame1, _ = frameio.load_pair(args.pair_dir)
        figures.save_registration_figure(
            out_dir / "registration.png", (frame0, frame1), output.renders
        )
    if args.json_out:
        _write_json(args.json_out, output.to_json_dict())
    print(json.dumps(output.to_json_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _reports_csv(path: Path, named_reports: list[tuple[str, RegistrationReport]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair", "rot_err_deg", "trans_err_cm", "chamfer_cm"])
        for name, report in named_reports:
            writer.writerow(
                [name, report.rotation_error_deg, report.translation_error_cm,
                 report.chamfer_error_cm]
            )


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = build_pipeline_config(args)
    out_dir = args.out_dir if args.out_dir else Path(args.dataset_dir) / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)
    results, summary = pipeline.evaluate_dataset(args.dataset_dir, config)

    named_reports = [(name, out.report) for name, out in results if out.report is not None]
    payload = {
        "aggregate": summary,
        "pairs": {name: out.to_json_dict() for name, out in results},
    }
    _write_json(out_dir / "summary.json", payload)
    if named_reports:
        _reports_csv(out_dir / "pairs.csv", named_reports)
        figures.save_error_cdf_figure(out_dir / "error_cdf.png", [r for _, r in named_reports])
    if args.json_out:
        _write_json(args.json_out, payload)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_render(args: argparse.Namespace) -> int:
    config = build_pipeline_config(args)
    frame0, frame1, _ = frameio.load_pair(args.pair_dir)
    if args.pose:
        transform = frameio.read_pose(args.pose)
        dconf = config.descriptor_config()
        clouds = tuple(
            build_feature_cloud(f, extract_features(f.color, dconf)) for f in (frame0, frame1)
        )
        renders = cross_render(
            clouds[0], clouds[1], transform, frame0.intrinsics,
            mode=config.render_mode, splat_radius=config.splat_radius,
        )
    else:
        output = pipeline.run_pipeline(frame0, frame1, None, config)
        renders = output.renders

    out_dir = args.out_dir if args.out_dir else Path(args.pair_dir) / "renders"
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, render in enumerate(renders, start=1):
        color8 = np.clip(np.rint(render.color * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(color8, mode="RGB").save(out_dir / f"view{i}_color.png")
        depth_mm = np.rint(render.depth / frameio.DEPTH_UNIT_M).astype(np.uint16)
        Image.fromarray(depth_mm).save(out_dir / f"view{i}_depth.png")
        mask = (render.valid.astype(np.uint8)) * 255
        Image.fromarray(mask, mode="L").save(out_dir / f"view{i}_valid.png")
    print(f"wrote renders to {out_dir}")
    return EXIT_OK


def _cmd_benchmark(args: argparse.Namespace) -> int:
    config = build_pipeline_config(args)
    counts = tuple(int(x) for x in args.subset_counts.split(","))
    out_dir = args.out_dir if args.out_dir else Path(args.dataset_dir) / "benchmark"
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = pipeline.benchmark(args.dataset_dir, counts, config, repeats=args.repeats)

    csv_path = out_dir / "sweep.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    _write_json(out_dir / "sweep.json", {"rows": rows})
    figures.save_benchmark_figure(out_dir / "sweep.png", rows)
    if args.json_out:
        _write_json(args.json_out, {"rows": rows})
    print(json.dumps(rows, indent=2, sort_keys=True))
    return EXIT_OK


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(part) for part in text.lower().split("x"))
    except ValueError as e:
        raise InputError(f"--size expects HxW (e.g. 60x80), got {text!r}") from e
    if h < 8 or w < 8:
        raise InputError(f"image size {h}x{w} is too small")
    return h, w


def _cmd_synth(args: argparse.Namespace) -> int:
    height, width = _parse_size(args.size)
    seed = args.seed if args.seed is not None else 0
    out = Path(args.out)
    count = args.count
    for i in range(count):
        spec = synthdata.default_scene(
            seed=seed + i,
            height=height,
            width=width,
            rotation_deg=args.rot_deg,
            translation_m=args.trans_m,
            depth_noise_std=args.noise_std,
            depth_dropout=args.dropout,
        )
        frame0, frame1, relative = synthdata.generate_pair(spec)
        pair_dir = out / f"pair_{i:03d}" if count > 1 else out
        synthdata.save_pair_with_meta(pair_dir, spec, frame0, frame1, relative)
        logger.info("wrote %s", pair_dir)
    print(f"wrote {count} pair(s) under {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rgbdreg",
        description="Register RGB-D frame pairs via feature clouds, ratio-test matching, "
        "and randomized weighted Procrustes fitting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_register = sub.add_parser("register", help="register one pair directory")
    p_register.add_argument("pair_dir", type=Path)
    p_register.add_argument("--out-dir", type=Path, default=None)
    p_register.add_argument("--dump-correspondences", type=Path, default=None,
                            help="write 'px py pz qx qy qz w dir' lines here")
    p_register.add_argument("--no-figures", action="store_true")
    _add_pipeline_flags(p_register)
    _add_common_flags(p_register)
    p_register.set_defaults(func=_cmd_register)

    p_eval = sub.add_parser("evaluate", help="register every pair of a dataset")
    p_eval.add_argument("dataset_dir", type=Path)
    p_eval.add_argument("--out-dir", type=Path, default=None)
    _add_pipeline_flags(p_eval)
    _add_common_flags(p_eval)
    p_eval.set_defaults(func=_cmd_evaluate)

    p_render = sub.add_parser("render", help="write cross/joint renders of a pair")
    p_render.add_argument("pair_dir", type=Path)
    p_render.add_argument("--pose", type=Path, default=None,
                          help="3x4 pose file to render with (default: run the pipeline)")
    p_render.add_argument("--out-dir", type=Path, default=None)
    _add_pipeline_flags(p_render)
    _add_common_flags(p_render)
    p_render.set_defaults(func=_cmd_render)

    p_bench = sub.add_parser("benchmark", help="subset-count sweep over a dataset")
    p_bench.add_argument("dataset_dir", type=Path)
    p_bench.add_argument("--subset-counts", default=",".join(str(c) for c in DEFAULT_SUBSET_SWEEP))
    p_bench.add_argument("--repeats", type=int, default=3, help="fit repetitions per timing")
    p_bench.add_argument("--out-dir", type=Path, default=None)
    _add_pipeline_flags(p_bench)
    _add_common_flags(p_bench)
    p_bench.set_defaults(func=_cmd_benchmark)

    p_synth = sub.add_parser("synth", help="generate synthetic RGB-D pairs")
    p_synth.add_argument("--out", type=Path, required=True)
    p_synth.add_argument("--rot-deg", type=float, default=10.0)
    p_synth.add_argument("--trans-m", type=float, default=0.2)
    p_synth.add_argument("--size", default="60x80", help="image size as HxW")
    p_synth.add_argument("--count", type=int, default=1, help="number of pairs to generate")
    p_synth.add_argument("--noise-std", type=float, default=0.0, help="Gaussian depth noise, m")
    p_synth.add_argument("--dropout", type=float, default=0.0, help="missing-depth fraction")
    _add_common_flags(p_synth)
    p_synth.set_defaults(func=_cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
