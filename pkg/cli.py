# cli.py: command line entry point: generate / reconstruct / validate / fixture / inspect
import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from beam_model import sensor_from_preset
from config import load_config
from constants import PRESETS, RECORD_EXTENSION, SENSOR_PRESETS
from errors import CompositionError, ConfigError, PcdParseError, SceneRecordError
from fixtures import make_fixture
from models import FixtureKind
from pcd_io import read_pcd, write_pcd
from pipeline import generate_dataset
from scene_store import BackgroundStore, read_scene, reconstruct, validate_scene

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _parse_param(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got '{text}'")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"value for '{key}' must be a number") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Compose labeled synthetic lidar scenes from object and background scans")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="Generate a dataset of compact scene records")
    gen.add_argument("--config", help="JSON config file")
    gen.add_argument("--preset", choices=sorted(PRESETS), help="Task preset applied under the config file")
    gen.add_argument("--seed", type=int, help="Master seed")
    gen.add_argument("--workers", type=int, help="Worker processes")
    gen.add_argument("--strict", action="store_true", default=None, help="Abort on the first failed scene")
    gen.add_argument("--scenes", type=int, dest="scene_count", help="Number of scenes")
    gen.add_argument("--output-dir", help="Output directory (overrides SCENE_OUTPUT_DIR)")
    gen.add_argument("--background-manifest", help="Background manifest (id<TAB>path)")
    gen.add_argument("--object-manifest", help="Object manifest (id<TAB>path<TAB>box)")
    gen.add_argument("--no-verify", dest="verify", action="store_false", default=None,
                     help="Skip the post-run verification pass")

    rec = sub.add_parser("reconstruct", help="Expand a record into a full PCD and its center grid")
    rec.add_argument("record")
    rec.add_argument("--backgrounds", required=True, help="Background manifest")
    rec.add_argument("--out", required=True, help="Output PCD path")
    rec.add_argument("--grid-out", help="Optional .npy path for the center grid")
    rec.add_argument("--rows", type=int, default=100)
    rec.add_argument("--cols", type=int, default=100)

    val = sub.add_parser("validate", help="Check record invariants")
    val.add_argument("records", nargs="+", help="Record files or directories of records")
    val.add_argument("--backgrounds", help="Background manifest; enables reconstruction checks")

    fix = sub.add_parser("fixture", help="Ray-cast a procedural shape into a PCD")
    fix.add_argument("kind", choices=[k.value for k in FixtureKind])
    fix.add_argument("--out", required=True)
    fix.add_argument("--sensor", default="os1-128", choices=sorted(SENSOR_PRESETS))
    fix.add_argument("--param", action="append", type=_parse_param, default=[], metavar="KEY=VALUE")
    fix.add_argument("--ascii", action="store_true", help="Write ascii PCD")

    ins = sub.add_parser("inspect", help="Summarize a PCD file or a scene record")
    ins.add_argument("path")
    return parser


# ──────────────────────────────────────────────
# SUBCOMMANDS
# ──────────────────────────────────────────────

def cmd_generate(args) -> int:
    overrides = {
        "seed": args.seed,
        "workers": args.workers,
        "strict": args.strict,
        "scene_count": args.scene_count,
        "output_dir": args.output_dir,
        "background_manifest": args.background_manifest,
        "object_manifest": args.object_manifest,
        "verify": args.verify,
    }
    try:
        config = load_config(args.config, preset=args.preset, overrides=overrides)
    except ConfigError as e:
        print(f"❌ Config error ({e.key}): {e}")
        return EXIT_USAGE

    try:
        report = generate_dataset(config)
    except CompositionError as e:
        print(f"❌ Run aborted at {e.stage}: {e.reason}")
        return EXIT_FAILED
    except (ValueError, OSError) as e:
        print(f"❌ Run failed: {e}")
        return EXIT_FAILED

    print(f"✅ Wrote {report.written}/{report.requested} scenes to {config.output_dir} "
          f"in {report.wall_time:.2f}s ({report.throughput:.1f} scenes/s)")
    for failure in report.failures:
        print(f"⚠️ Scene {failure.index} failed at {failure.stage}: {failure.reason}")
    if report.failures and config.strict:
        return EXIT_FAILED
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    try:
        record = read_scene(args.record)
        cloud, grid = reconstruct(record, BackgroundStore(args.backgrounds), args.rows, args.cols)
        write_pcd(cloud, args.out)
        if args.grid_out:
            np.save(args.grid_out, grid.cells)
    except (ValueError, KeyError, OSError) as e:
        print(f"❌ Reconstruction failed: {e}")
        return EXIT_FAILED
    print(f"✅ {len(cloud)} points -> {args.out}; {int(grid.cells.sum())} labeled cell(s)")
    return EXIT_OK


def _record_paths(items: list[str]) -> list[Path]:
    paths = []
    for item in items:
        p = Path(item)
        paths.extend(sorted(p.rglob(f"*{RECORD_EXTENSION}")) if p.is_dir() else [p])
    return paths


def cmd_validate(args) -> int:
    store = BackgroundStore(args.backgrounds) if args.backgrounds else None
    bad = 0
    paths = _record_paths(args.records)
    for path in paths:
        try:
            scene = read_scene(path)
            count = len(store.get(scene.background_ref)) if store else None
            problems = validate_scene(scene, count)
            if store and not problems:
                reconstruct(scene, store, 1, 1)
        except (ValueError, KeyError, OSError) as e:
            problems = [str(e)]
        if problems:
            bad += 1
            print(f"❌ {path}: {'; '.join(problems)}")
    if bad:
        print(f"⚠️ {bad}/{len(paths)} record(s) invalid")
        return EXIT_FAILED
    print(f"✅ {len(paths)} record(s) valid")
    return EXIT_OK


def cmd_fixture(args) -> int:
    params = dict(args.param)
    try:
        cloud, box = make_fixture(args.kind, params, sensor_from_preset(args.sensor))
        write_pcd(cloud, args.out, encoding="ascii" if args.ascii else "binary")
    except (ValueError, OSError) as e:
        print(f"❌ Fixture failed: {e}")
        return EXIT_FAILED
    print(f"✅ {args.kind}: {len(cloud)} points -> {args.out}")
    if box is not None:
        values = [*box.center, *box.extent, box.yaw]
        print("   box: " + " ".join(f"{v:.6g}" for v in values))
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = Path(args.path)
    try:
        if path.suffix == RECORD_EXTENSION:
            scene = read_scene(path)
            size = path.stat().st_size
            full = scene.expanded_size() * 12
            print(f"record {path.name}: background '{scene.background_ref}' ({scene.background_count} points), "
                  f"sensor {scene.sensor_name}, seed {scene.seed}")
            print(f"  object points: {len(scene.object_points)}, dropped background: {len(scene.background_dropped)}")
            print(f"  size: {size} bytes vs ~{full} bytes as full PCD body ({full / max(size, 1):.1f}x)")
            if scene.boxes:
                boxes = pd.DataFrame(
                    [[oid, *b.center, *b.extent, b.yaw] for oid, b in zip(scene.object_ids or [""] * len(scene.boxes), scene.boxes)],
                    columns=["object", "cx", "cy", "cz", "dx", "dy", "dz", "yaw"])
                print(boxes.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
            for warning in scene.warnings:
                print(f"⚠️ {warning}")
        else:
            cloud = read_pcd(path)
            print(f"pcd {path.name}: {len(cloud)} points")
            if len(cloud):
                lo, hi = cloud.points.min(axis=0), cloud.points.max(axis=0)
                print("  bounds: " + ", ".join(f"{a} [{l:.3f}, {h:.3f}]" for a, l, h in zip("xyz", lo, hi)))
    except (PcdParseError, SceneRecordError, OSError) as e:
        print(f"❌ Cannot inspect {path}: {e}")
        return EXIT_FAILED
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "reconstruct": cmd_reconstruct,
    "validate": cmd_validate,
    "fixture": cmd_fixture,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.getenv("LOG_LEVEL", "INFO").upper(),
                        format='%(asctime)s - %(levelname)s - %(message)s')
    args = build_parser().parse_args(argv)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
