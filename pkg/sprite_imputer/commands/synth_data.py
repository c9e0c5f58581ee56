import argparse
import logging
from pathlib import Path

from sprite_imputer.commands.common import execute, fail
from sprite_imputer.schemas.manifest import RunManifest
from sprite_imputer.services.dataset_service import MANIFEST_NAME, DatasetService, split, write_manifest
from sprite_imputer.services.synth_service import synth_dataset

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("synth-data", help="Write a procedurally generated four-pose dataset")
    parser.add_argument("--out", type=Path, required=True, help="Dataset directory to create")
    parser.add_argument("--count", type=int, required=True, help="Number of characters")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--split-ratio", type=float, default=0.85,
                        help="Train fraction recorded in the dataset manifest")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    if args.count < 0:
        return fail(f"--count must be >= 0, got {args.count}")

    def work(manifest: RunManifest) -> None:
        dataset = synth_dataset(args.count, args.seed)
        DatasetService().save_dataset(dataset, args.out)
        entries = []
        if len(dataset):
            train, test = split(dataset, args.split_ratio, args.seed)
            membership = {sheet_id: "train" for sheet_id in train.ids()}
            membership.update({sheet_id: "test" for sheet_id in test.ids()})
            entries = [(sheet_id, membership[sheet_id]) for sheet_id in dataset.ids()]
        write_manifest(entries, args.out / MANIFEST_NAME)
        manifest.outputs = {"dataset": str(args.out), "manifest": str(args.out / MANIFEST_NAME)}
        print(f"Wrote {len(dataset)} characters ({4 * len(dataset)} sprites) to {args.out}")

    return execute("synth-data", args, args.out, work, seed=args.seed)
