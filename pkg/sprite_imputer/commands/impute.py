import argparse
import logging
from pathlib import Path

from sprite_imputer.commands.common import execute, fail
from sprite_imputer.config import DEFAULT_DEVICE
from sprite_imputer.exceptions import ContractViolationError
from sprite_imputer.schemas.domain import ALL_DOMAINS, normalize_domain
from sprite_imputer.schemas.manifest import RunManifest
from sprite_imputer.services.checkpoint_service import load_generator
from sprite_imputer.services.dataset_service import POSE_FILENAMES, pad_and_alpha
from sprite_imputer.services.file_service import FileService
from sprite_imputer.services.imputation_service import impute_missing

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("impute", help="Generate missing poses of one character")
    parser.add_argument("--checkpoint", type=Path, required=True, help="Checkpoint or generator weight file")
    parser.add_argument("--in", dest="input_dir", type=Path, required=True,
                        help="Directory with the available <pose>.png files")
    parser.add_argument("--target", action="append",
                        help="Pose to generate; repeatable (default: every missing pose)")
    parser.add_argument("--out", type=Path, help="Output directory (default: the input directory)")
    parser.add_argument("--quantize", action="store_true", help="Snap colors to the sources' palette")
    parser.add_argument("--device", default=DEFAULT_DEVICE)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    if not args.input_dir.is_dir():
        return fail(f"Input directory not found: {args.input_dir}")
    out_dir = args.out or args.input_dir
    file_service = FileService()

    available_paths = {d: args.input_dir / POSE_FILENAMES[d] for d in ALL_DOMAINS
                       if (args.input_dir / POSE_FILENAMES[d]).is_file()}
    if not available_paths:
        return fail(f"No pose images ({', '.join(POSE_FILENAMES.values())}) found in {args.input_dir}")
    try:
        targets = [normalize_domain(t) for t in args.target] if args.target else \
            [d for d in ALL_DOMAINS if d not in available_paths]
    except ValueError as e:
        return fail(str(e))
    if not targets:
        return fail(f"All four poses are already present in {args.input_dir}")
    for target in targets:
        if target in available_paths:
            return fail(f"Target pose '{target.pose_name}' already exists at {available_paths[target]}; "
                        f"refusing to overwrite")
        existing = out_dir / POSE_FILENAMES[target]
        if existing.exists():
            return fail(f"Output file {existing} already exists; refusing to overwrite")

    def work(manifest: RunManifest) -> None:
        manifest.inputs = {d.pose_name: str(p) for d, p in available_paths.items()}
        manifest.inputs["checkpoint"] = str(args.checkpoint)
        available = {d: pad_and_alpha(file_service.read_png(p)) for d, p in available_paths.items()}
        generator = load_generator(args.checkpoint).to(args.device)
        results = impute_missing(generator, available, targets, quantize=args.quantize)

        sources = [available[d].pixels for d in ALL_DOMAINS if d in available]
        for target, sprite in results.items():
            if args.quantize:
                palette = {tuple(c) for s in sources for c in s.reshape(-1, 4)}
                if any(tuple(c) not in palette for c in sprite.pixels.reshape(-1, 4)):
                    raise ContractViolationError(f"Quantized '{target.pose_name}' contains colors outside the palette")
            image_path = file_service.write_png(sprite.pixels, out_dir / POSE_FILENAMES[target])
            grid_path = file_service.write_grid([sources, [sprite.pixels]], out_dir / f"grid_{target.pose_name}.png")
            manifest.outputs[target.pose_name] = str(image_path)
            manifest.outputs[f"grid_{target.pose_name}"] = str(grid_path)
            print(f"Wrote {image_path} and {grid_path}")

    return execute("impute", args, out_dir, work, manifest_name="impute_manifest.json")
