import argparse
import logging
from pathlib import Path

from sprite_imputer.commands.common import execute
from sprite_imputer.config import DEFAULT_DEVICE
from sprite_imputer.schemas.manifest import RunManifest
from sprite_imputer.services.checkpoint_service import load_generator
from sprite_imputer.services.dataset_service import MANIFEST_NAME, DatasetService, read_manifest, split_by_manifest
from sprite_imputer.services.evaluation_service import EXTRACTORS, evaluate_scenarios, get_extractor, self_fid
from sprite_imputer.services.report_service import EVAL_REPORT_PATTERN, render_scenario_table

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("eval", help="Score a generator on the 3/2/1-source scenarios")
    parser.add_argument("--checkpoint", type=Path, required=True, help="Checkpoint or generator weight file")
    parser.add_argument("--data", type=Path, required=True, help="Dataset directory")
    parser.add_argument("--sources", choices=["3", "2", "1", "all"], default="3")
    parser.add_argument("--extractor", choices=sorted(EXTRACTORS), default="inception-v3")
    parser.add_argument("--out", type=Path, help="Report directory (default: <checkpoint dir>/eval)")
    parser.add_argument("--split", choices=["test", "all"], default="test",
                        help="Evaluate the manifest's test split or every character")
    parser.add_argument("--no-fid", action="store_true", help="Report L1 only")
    parser.add_argument("--self-fid", action="store_true",
                        help="Also print the FID of the dataset against itself (should be ~0)")
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--device", default=DEFAULT_DEVICE)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    out_dir = args.out or args.checkpoint.parent / "eval"

    def work(manifest: RunManifest) -> None:
        manifest.inputs = {"checkpoint": str(args.checkpoint), "data": str(args.data)}
        generator = load_generator(args.checkpoint).to(args.device)
        dataset = DatasetService().load_dataset(args.data)
        manifest_path = args.data / MANIFEST_NAME
        if args.split == "test" and manifest_path.is_file():
            _, dataset = split_by_manifest(dataset, read_manifest(manifest_path))
        extractor = None if args.no_fid else get_extractor(args.extractor)

        if args.self_fid and extractor is not None:
            print(f"Self-FID of {args.data} ({extractor.name}): {self_fid(dataset, extractor):.6f}")

        scenarios = [3, 2, 1] if args.sources == "all" else [int(args.sources)]
        for sources in scenarios:
            report = evaluate_scenarios(generator, dataset, sources, extractor=extractor,
                                        compute_fid=not args.no_fid, batch_size=args.batch_size,
                                        checkpoint=str(args.checkpoint))
            path = out_dir / EVAL_REPORT_PATTERN.format(sources=sources)
            path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
            (out_dir / f"metrics_{sources}src.txt").write_text(render_scenario_table(report) + "\n",
                                                               encoding="utf-8")
            manifest.outputs[f"{sources}src"] = str(path)
            print(render_scenario_table(report))
            print()

    return execute("eval", args, out_dir, work)
