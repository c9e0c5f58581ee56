"""
Comparison tables across runs and the early-stopping curve plot.

A run is a directory produced by ``train`` (``final_metrics.json``,
``metrics.jsonl``, ``config.yaml``) or by ``eval`` (``metrics_<k>src.json``).
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from sprite_imputer.config import read_config_file
from sprite_imputer.exceptions import ContractViolationError, DatasetError
from sprite_imputer.schemas.domain import ALL_DOMAINS
from sprite_imputer.schemas.metrics import MetricsReport
from sprite_imputer.schemas.training import EvalRecord
from sprite_imputer.services.training_service import read_final_reports, read_metrics_log

logger = logging.getLogger(__name__)

SCENARIOS = (3, 2, 1)
EVAL_REPORT_PATTERN = "metrics_{sources}src.json"


def percent_improvement(baseline: float, value: float) -> float:
    """(baseline - value) / baseline * 100; positive means the metric went down."""
    if baseline == 0:
        if value == 0:
            return 0.0
        message = "Percent improvement is undefined for a zero baseline"
        logger.error(message)
        raise ContractViolationError(message)
    return (baseline - value) / baseline * 100.0


@dataclass
class RunResult:
    label: str
    run_dir: Path
    reports: Dict[int, MetricsReport] = field(default_factory=dict)
    evaluations: List[EvalRecord] = field(default_factory=list)
    dropout: Optional[str] = None

    def _mean(self, values: List[Optional[float]]) -> Optional[float]:
        if not values or any(v is None for v in values):
            return None
        return math.fsum(values) / len(values)

    @property
    def average_l1(self) -> Optional[float]:
        return self._mean([r.average_l1 for r in self.reports.values()])

    @property
    def average_fid(self) -> Optional[float]:
        return self._mean([r.average_fid for r in self.reports.values()])


def load_eval_reports(directory: Union[str, Path]) -> List[MetricsReport]:
    reports = []
    for sources in SCENARIOS:
        path = Path(directory) / EVAL_REPORT_PATTERN.format(sources=sources)
        if path.exists():
            reports.append(MetricsReport.model_validate_json(path.read_text(encoding="utf-8")))
    return reports


def load_run(run_dir: Union[str, Path]) -> RunResult:
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        message = f"Run directory not found: {run_dir}"
        logger.error(message)
        raise DatasetError(message)

    label, dropout = run_dir.name, None
    config_path = run_dir / "config.yaml"
    if config_path.exists():
        raw = read_config_file(config_path)
        label = raw.get("run_name") or label
        train = raw.get("train") or {}
        dropout = (train.get("dropout_strategy") or {}).get("kind")
        if train.get("preset") and not raw.get("run_name"):
            label = train["preset"]

    reports = read_final_reports(run_dir) or load_eval_reports(run_dir)
    result = RunResult(label=label, run_dir=run_dir, dropout=dropout,
                       reports={report.sources_available: report for report in reports},
                       evaluations=read_metrics_log(run_dir))
    if not result.reports and not result.evaluations:
        logger.warning(f"Run {run_dir} has no metrics yet")
    return result


def _fmt(value: Optional[float], digits: int) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def _render(header: List[str], rows: List[List[str]]) -> str:
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(header))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines)


def render_scenario_table(report: MetricsReport) -> str:
    """Targets as rows plus an Average row; FID and L1 columns."""
    rows = []
    for target in ALL_DOMAINS:
        try:
            summary = report.target_summary(target)
        except KeyError:
            continue
        rows.append([target.pose_name, _fmt(summary.fid, 3), _fmt(summary.l1, 5)])
    rows.append(["Average", _fmt(report.average_fid, 3), _fmt(report.average_l1, 5)])
    title = f"{report.sources_available} source(s) available"
    if report.extractor:
        title += f" (FID extractor: {report.extractor})"
    return title + "\n" + _render(["Target", "FID", "L1"], rows)


def render_dropout_table(runs: Sequence[RunResult]) -> str:
    """Scenarios as rows, one FID/L1 column pair per run."""
    header = ["Sources"]
    for run in runs:
        name = run.dropout or run.label
        header += [f"{name} FID", f"{name} L1"]
    rows = []
    for sources in SCENARIOS:
        row = [str(sources)]
        for run in runs:
            report = run.reports.get(sources)
            row += [_fmt(report.average_fid if report else None, 3),
                    _fmt(report.average_l1 if report else None, 5)]
        rows.append(row)
    average = ["Average"]
    for run in runs:
        average += [_fmt(run.average_fid, 3), _fmt(run.average_l1, 5)]
    rows.append(average)
    return _render(header, rows)


def ablation_rows(runs: Sequence[RunResult], baseline_index: int = 0) -> List[Dict[str, Optional[float]]]:
    """Per-run averages and their improvement over the baseline run."""
    if not runs:
        raise ContractViolationError("ablation_rows needs at least one run")
    if not 0 <= baseline_index < len(runs):
        raise ContractViolationError(f"Baseline index {baseline_index} out of range for {len(runs)} runs")
    baseline = runs[baseline_index]
    rows = []
    for run in runs:
        fid, l1 = run.average_fid, run.average_l1
        rows.append({
            "label": run.label,
            "fid": fid,
            "fid_improvement": percent_improvement(baseline.average_fid, fid)
            if fid is not None and baseline.average_fid is not None else None,
            "l1": l1,
            "l1_improvement": percent_improvement(baseline.average_l1, l1)
            if l1 is not None and baseline.average_l1 is not None else None,
        })
    return rows


def render_ablation_table(runs: Sequence[RunResult], baseline_index: int = 0) -> str:
    rows = [[row["label"], _fmt(row["fid"], 3), _fmt(row["fid_improvement"], 2) + "%",
             _fmt(row["l1"], 5), _fmt(row["l1_improvement"], 2) + "%"]
            for row in ablation_rows(runs, baseline_index)]
    return _render(["Run", "FID", "FID improvement", "L1", "L1 improvement"], rows)


def plot_training_curves(runs: Sequence[RunResult], out_path: Union[str, Path]) -> Path:
    """Evaluation L1 against step for every run, best step marked."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(8, 5))
    for run in runs:
        if not run.evaluations:
            continue
        steps = [record.step for record in run.evaluations]
        values = [record.l1 for record in run.evaluations]
        line, = ax.plot(steps, values, label=run.label)
        best = min(range(len(values)), key=values.__getitem__)
        ax.scatter([steps[best]], [values[best]], color=line.get_color(), marker="*", s=120, zorder=3)
    ax.set_xlabel("step")
    ax.set_ylabel("evaluation L1")
    ax.grid(alpha=0.3)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    logger.info(f"Training curves written to {out_path}")
    return out_path


def build_report(runs: Sequence[RunResult], baseline_index: int = 0) -> Dict[str, object]:
    """Structured counterpart of the printed tables."""
    return {
        "runs": [
            {
                "label": run.label,
                "run_dir": str(run.run_dir),
                "dropout": run.dropout,
                "average_fid": run.average_fid,
                "average_l1": run.average_l1,
                "scenarios": {str(k): report.model_dump(mode="json") for k, report in sorted(run.reports.items())},
            }
            for run in runs
        ],
        "ablation": ablation_rows(runs, baseline_index),
    }


def write_report(runs: Sequence[RunResult], out_dir: Union[str, Path], baseline_index: int = 0) -> str:
    """Write report.json, report.txt and training_curves.png; return the text."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sections = []
    for run in runs:
        for sources in SCENARIOS:
            if sources in run.reports:
                sections.append(f"[{run.label}] " + render_scenario_table(run.reports[sources]))
    sections.append("Dropout strategies\n" + render_dropout_table(runs))
    sections.append("Ablation (vs " + runs[baseline_index].label + ")\n" + render_ablation_table(runs, baseline_index))
    text = "\n\n".join(sections) + "\n"
    (out_dir / "report.txt").write_text(text, encoding="utf-8")
    (out_dir / "report.json").write_text(json.dumps(build_report(runs, baseline_index), indent=2), encoding="utf-8")
    if any(run.evaluations for run in runs):
        plot_training_curves(runs, out_dir / "training_curves.png")
    return text
