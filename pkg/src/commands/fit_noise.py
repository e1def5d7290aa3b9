from pathlib import Path
from typing import Dict

from src.commands.base import BaseCommand
from src.models.request import JobConfig
from src.services import gmm as gmm_ops
from src.utils.errors import ConfigError
from src.utils.io import dump_csv, dump_json, read_csv_matrix


class FitNoiseCommand(BaseCommand):
    """
    EM fit of a noise mixture from samples

    Samples and mode count come from --samples/--mode-count or from the
    config's noise_eta section.
    """

    def __init__(self):
        super().__init__(name="fit-noise")

    def execute(
        self,
        config: Path | None = None,
        samples: Path | None = None,
        mode_count: int | None = None,
        seed: int | None = None,
        **_,
    ) -> Dict[str, str]:
        if samples is None:
            if config is None:
                raise ConfigError("samples: give --samples or a --config with noise_eta.samples")
            source = JobConfig.load(config).noise_eta
            if source.samples is None:
                raise ConfigError("noise_eta.samples: required by fit-noise")
            samples, mode_count = source.samples, mode_count or source.mode_count
            seed = source.seed if seed is None else seed
        if mode_count is None or mode_count < 1:
            raise ConfigError("mode_count: a positive mode count is required")

        fitted, trace = gmm_ops.em_fit(read_csv_matrix(samples), mode_count, 0 if seed is None else seed)
        return {
            "noise_gmm.json": dump_json(fitted.to_document()),
            "loglik_trace.csv": dump_csv(["iteration", "avg_log_likelihood"], enumerate(trace, start=1)),
        }
