import logging
import sys
from datetime import datetime, timezone
from typing import Dict

import numpy as np
import structlog

from .errors import ShapeError, ValueDomainError

logger = structlog.get_logger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(level: str = "INFO", json: bool = False):
    """Route structlog through stdlib logging with the runner format"""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )
    renderer = (
        structlog.processors.JSONRenderer()
        if json
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


class DataValidator:
    """Validates numeric payloads before they reach the solvers"""

    @staticmethod
    def require_finite(values: np.ndarray, what: str = "tensor"):
        """Reject NaN and infinite entries"""
        if not np.all(np.isfinite(values)):
            bad = int(np.count_nonzero(~np.isfinite(values)))
            raise ValueDomainError(f"{what} has {bad} non-finite entries")

    @staticmethod
    def require_binary(values: np.ndarray, what: str = "mask"):
        """Reject masks holding anything other than 0 and 1"""
        if not np.all((values == 0) | (values == 1)):
            raise ValueDomainError(f"{what} must be binary (0/1)")

    @staticmethod
    def require_congruent(a_dims, b_dims, what: str = "operands"):
        """Reject dimension vectors that differ"""
        if tuple(a_dims) != tuple(b_dims):
            raise ShapeError(f"{what} are not congruent: {tuple(a_dims)} vs {tuple(b_dims)}")


class ExperimentMonitor:
    """Counts solves and outcomes across a run or sweep"""

    def __init__(self):
        self.metrics = {
            "solves": 0,
            "successes": 0,
            "divergences": 0,
            "iterations": 0,
            "solve_seconds": 0.0,
            "start_time": datetime.now(timezone.utc),
        }

    def increment_metric(self, metric_name: str, value=1):
        """Increment a counter"""
        if metric_name in self.metrics:
            self.metrics[metric_name] += value

    def get_performance_summary(self) -> Dict:
        """Get current performance summary"""
        uptime = datetime.now(timezone.utc) - self.metrics["start_time"]
        solves = self.metrics["solves"]

        return {
            "uptime_seconds": uptime.total_seconds(),
            "solves": solves,
            "successes": self.metrics["successes"],
            "divergences": self.metrics["divergences"],
            "mean_iterations": self.metrics["iterations"] / max(solves, 1),
            "mean_solve_seconds": self.metrics["solve_seconds"] / max(solves, 1),
            "success_rate": self.metrics["successes"] / max(solves, 1),
        }

    def log_performance(self):
        """Log current performance metrics"""
        summary = self.get_performance_summary()
        logger.info("experiment_summary", **summary)
