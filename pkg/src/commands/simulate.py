from pathlib import Path
from typing import Dict

from src.commands.base import BaseCommand
from src.models.request import JobConfig
from src.services import pipeline
from src.utils.io import dump_csv


class SimulateCommand(BaseCommand):
    """Plant and estimator trajectory as trace.csv"""

    def __init__(self):
        super().__init__(name="simulate")

    def execute(self, config: Path, seed: int | None = None, **_) -> Dict[str, str]:
        job_config = JobConfig.load(config).with_overrides(seed=seed)
        job = pipeline.load_job(job_config)
        header, rows = pipeline.trace_rows(job)
        rows = [[int(row[0]), *map(float, row[1:])] for row in rows]
        return {"trace.csv": dump_csv(header, rows)}
