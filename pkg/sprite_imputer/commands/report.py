import argparse
import logging
from pathlib import Path

from sprite_imputer.commands.common import execute, fail
from sprite_imputer.exceptions import ContractViolationError
from sprite_imputer.schemas.manifest import RunManifest
from sprite_imputer.services.report_service import load_run, write_report

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("report", help="Compare runs: scenario, dropout and ablation tables")
    parser.add_argument("--runs", type=Path, nargs="+", required=True, help="Run or eval directories")
    parser.add_argument("--out", type=Path, default=Path("reports"), help="Where report files are written")
    parser.add_argument("--baseline", help="Label or directory name of the ablation baseline (default: first run)")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    missing = [str(path) for path in args.runs if not path.is_dir()]
    if missing:
        return fail(f"Run directories not found: {', '.join(missing)}")

    def work(manifest: RunManifest) -> None:
        runs = [load_run(path) for path in args.runs]
        baseline_index = 0
        if args.baseline:
            names = [(run.label, run.run_dir.name) for run in runs]
            matches = [i for i, pair in enumerate(names) if args.baseline in pair]
            if not matches:
                raise ContractViolationError(f"Baseline '{args.baseline}' matches none of {[n[0] for n in names]}")
            baseline_index = matches[0]
        manifest.inputs = {run.label: str(run.run_dir) for run in runs}
        print(write_report(runs, args.out, baseline_index), end="")
        manifest.outputs = {"report": str(args.out / "report.txt"), "json": str(args.out / "report.json")}

    return execute("report", args, args.out, work)
