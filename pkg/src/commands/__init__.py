"""CLI subcommands for detector threshold tuning"""

from src.commands.base import BaseCommand
from src.commands.evaluate import EvaluateCommand
from src.commands.fit_noise import FitNoiseCommand
from src.commands.simulate import SimulateCommand
from src.commands.tune import TuneCommand

__all__ = ["BaseCommand", "EvaluateCommand", "FitNoiseCommand", "SimulateCommand", "TuneCommand"]
