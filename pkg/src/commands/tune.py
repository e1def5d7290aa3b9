from pathlib import Path
from typing import Dict

from src.commands.base import BaseCommand
from src.commands.evaluate import report_files
from src.models.request import JobConfig
from src.services import pipeline
from src.utils.errors import ConfigError


class TuneCommand(BaseCommand):
    """Threshold that meets a target false-alarm rate"""

    def __init__(self):
        super().__init__(name="tune")

    def execute(
        self,
        config: Path,
        seed: int | None = None,
        tail_tol: float | None = None,
        mc: bool = False,
    ) -> Dict[str, str]:
        job_config = JobConfig.load(config).with_overrides(seed=seed, tail_tol=tail_tol, mc=mc)
        if job_config.target_rate is None:
            raise ConfigError("target_rate: required by tune")

        job = pipeline.load_job(job_config)
        report, model = pipeline.tune(job, job_config.target_rate, with_mc=mc)
        return report_files(report, model, job_config.cdf_points)
