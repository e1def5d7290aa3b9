from pathlib import Path
from typing import Dict

from src.commands.base import BaseCommand
from src.models.request import JobConfig
from src.models.residual import ResidualModel
from src.models.response import RunReport
from src.services import pipeline
from src.services.mc_oracle import histogram_rows
from src.utils.errors import ConfigError
from src.utils.io import dump_csv, dump_json


def report_files(report: RunReport, model: ResidualModel, cdf_points: int) -> Dict[str, str]:
    """tuning_report.json, cdf_curve.csv, residual_model.json and the Monte-Carlo files when present"""
    files = {
        "tuning_report.json": report.model_dump_json(indent=2) + "\n",
        "cdf_curve.csv": dump_csv(["alpha", "false_alarm"], pipeline.cdf_rows(model, cdf_points)),
        "residual_model.json": dump_json(model.to_document()),
    }
    if report.empirical is not None:
        files["mc_summary.json"] = report.empirical.model_dump_json(indent=2) + "\n"
        files["histogram.csv"] = dump_csv(["bin_left", "bin_right", "count"], histogram_rows(report.empirical))
    return files


class EvaluateCommand(BaseCommand):
    """False-alarm rate of a given threshold"""

    def __init__(self):
        super().__init__(name="evaluate")

    def execute(
        self,
        config: Path,
        seed: int | None = None,
        tail_tol: float | None = None,
        mc: bool = False,
    ) -> Dict[str, str]:
        job_config = JobConfig.load(config).with_overrides(seed=seed, tail_tol=tail_tol, mc=mc)
        if job_config.alpha is None:
            raise ConfigError("alpha: required by evaluate")

        job = pipeline.load_job(job_config)
        report, model = pipeline.evaluate(job, job_config.alpha, with_mc=mc)
        return report_files(report, model, job_config.cdf_points)
