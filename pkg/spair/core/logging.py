"""structlog setup: readable console lines in development, JSON lines otherwise, on stderr."""
import logging
import sys
from typing import Any, MutableMapping, Optional

import numpy as np
import structlog
from structlog.typing import FilteringBoundLogger

from spair.core.config import settings

ARRAY_PREVIEW = 4


def numpy_values(_, __, event: MutableMapping[str, Any]) -> MutableMapping[str, Any]:
    """Numpy scalars become Python numbers; arrays collapse to shape, dtype and a short preview."""
    for key, value in event.items():
        if isinstance(value, np.generic):
            event[key] = value.item()
        elif isinstance(value, np.ndarray):
            flat = value.reshape(-1)[:ARRAY_PREVIEW].tolist()
            event[key] = {"shape": list(value.shape), "dtype": str(value.dtype), "head": flat}
    return event


def configure_logging(level: Optional[str] = None, json: Optional[bool] = None) -> None:
    """Defaults come from ``SPAIR_LOG_LEVEL`` and ``SPAIR_APP_ENV``."""
    level = (level or settings.log_level).upper()
    if json is None:
        json = settings.app_env != "development"
    processors = [
        structlog.contextvars.merge_contextvars,
        structlog.processors.add_log_level,
        structlog.processors.TimeStamper(fmt="iso"),
        numpy_values,
    ]
    if json:
        processors += [structlog.processors.dict_tracebacks, structlog.processors.JSONRenderer()]
    else:
        # stdout carries CSV and tables, so no colour codes in redirected output
        processors.append(structlog.dev.ConsoleRenderer(colors=False))

    structlog.configure(
        processors=processors,
        wrapper_class=structlog.make_filtering_bound_logger(getattr(logging, level, logging.INFO)),
        context_class=dict,
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


def get_logger(name: str) -> FilteringBoundLogger:
    return structlog.get_logger(name).bind(service="spair", module=name.removeprefix("spair."))


configure_logging()
