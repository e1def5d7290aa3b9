import logging
import sys
from pathlib import Path

import structlog
from pythonjsonlogger import jsonlogger

from src.config import settings


def _console_formatter(fmt: str) -> logging.Formatter:
    renderer = (
        structlog.processors.JSONRenderer(sort_keys=True)
        if fmt == "json"
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    return structlog.stdlib.ProcessorFormatter(
        processors=[structlog.stdlib.ProcessorFormatter.remove_processors_meta, renderer],
        foreign_pre_chain=[
            structlog.stdlib.ExtraAdder(),
            structlog.stdlib.add_log_level,
            structlog.stdlib.add_logger_name,
            structlog.processors.TimeStamper(fmt="iso"),
        ],
    )


def setup_logging(level: str | None = None, fmt: str | None = None):
    level = (level or settings.log_level).upper()
    fmt = fmt or settings.log_format

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.stdlib.filter_by_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.format_exc_info,
            structlog.stdlib.render_to_log_kwargs,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_console_formatter(fmt))
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(level)


def attach_run_log(path: Path) -> logging.Handler:
    """Sidecar JSON log carrying timestamps and timings for one CLI run."""
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setFormatter(jsonlogger.JsonFormatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    logging.getLogger().addHandler(handler)
    return handler


def detach_run_log(handler: logging.Handler):
    logging.getLogger().removeHandler(handler)
    handler.close()


def get_logger(name: str):
    return structlog.get_logger(name)
