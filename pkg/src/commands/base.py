from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict
import time

from src.models.response import CommandOutcome
from src.utils.errors import DetectorTuningError
from src.utils.io import write_outputs
from src.utils.logger import attach_run_log, detach_run_log, get_logger


logger = get_logger(__name__)


class BaseCommand(ABC):

    def __init__(self, name: str):
        self.name = name

    @abstractmethod
    def execute(self, **kwargs) -> Dict[str, str]:
        """Compute every output in memory as {file name: text}"""

    def run(self, out_dir: Path, **kwargs) -> CommandOutcome:
        """
        Run the command with timing and logging

        - run.log sidecar in out_dir for every run
        - outputs written only once execute() has fully succeeded
        - DetectorTuningError mapped to its exit code, anything else to 3
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        handler = attach_run_log(out_dir / "run.log")
        start_time = time.time()
        logger.info("Command started", command=self.name)

        try:
            files = self.execute(**kwargs)
            outputs = write_outputs(out_dir, files)
            execution_time = int((time.time() - start_time) * 1000)
            logger.info("Command completed", command=self.name, execution_time_ms=execution_time, outputs=len(outputs))
            return CommandOutcome(
                command=self.name,
                success=True,
                outputs=outputs,
                execution_time_ms=execution_time,
            )

        except DetectorTuningError as e:
            execution_time = int((time.time() - start_time) * 1000)
            logger.error("Command failed", command=self.name, error=e.message, exit_code=e.exit_code)
            return CommandOutcome(
                command=self.name,
                success=False,
                exit_code=e.exit_code,
                error=e.message,
                execution_time_ms=execution_time,
            )

        except Exception as e:
            execution_time = int((time.time() - start_time) * 1000)
            logger.exception("Command failed unexpectedly", command=self.name)
            return CommandOutcome(
                command=self.name,
                success=False,
                exit_code=3,
                error=f"{type(e).__name__}: {e}",
                execution_time_ms=execution_time,
            )
        finally:
            detach_run_log(handler)
