"""Run settings — single source of truth for process-level configuration.

Centralizes thread count, log level and output location, the shared log
format, and structured JSON-lines run records for gibbsfluct.

Usage:
    from run_config import settings, record_event, setup_logging

    logger = setup_logging("Orchestrator", out_dir)
    threads = settings.resolve_threads(args.threads)

    record_event(
        action_type="simulate",
        target="chain_000",
        result="success",
        log_path=out_dir / "run_log.jsonl",
    )
"""

import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

logger = logging.getLogger("RunConfig")

LOG_FORMAT = "%(asctime)s | %(name)s | %(levelname)s | %(message)s"
LOG_DATEFMT = "%Y-%m-%d %H:%M:%S"


# ── Settings ───────────────────────────────────────────────────────

class RunSettings:
    """Process settings loaded from environment variables (.env aware)."""

    DEFAULT_THREADS = 1
    DEFAULT_LOG_LEVEL = "INFO"
    DEFAULT_OUTPUT_ROOT = "runs"

    def __init__(self, threads=None, log_level=None, output_root=None):
        self.threads = self._parse_threads(
            threads if threads is not None
            else os.getenv("GIBBSFLUCT_THREADS", str(self.DEFAULT_THREADS))
        )
        self.log_level = (
            log_level or os.getenv("GIBBSFLUCT_LOG_LEVEL", self.DEFAULT_LOG_LEVEL)
        ).upper()
        if self.log_level not in logging.getLevelNamesMapping():
            raise ValueError(f"Unknown log level: {self.log_level}")
        self.output_root = Path(
            output_root or os.getenv("GIBBSFLUCT_OUT", self.DEFAULT_OUTPUT_ROOT)
        )

    @classmethod
    def from_env(cls):
        """Re-read settings after (re)loading the .env file."""
        load_dotenv(override=False)
        return cls()

    @staticmethod
    def _parse_threads(value):
        try:
            threads = int(value)
        except (TypeError, ValueError):
            raise ValueError(f"GIBBSFLUCT_THREADS must be an integer, got {value!r}")
        if threads < 1:
            raise ValueError(f"GIBBSFLUCT_THREADS must be >= 1, got {threads}")
        return threads

    def resolve_threads(self, cli_value=None):
        """CLI flag wins over the environment, which wins over the default."""
        if cli_value is None:
            return self.threads
        return self._parse_threads(cli_value)

    def to_dict(self):
        return {
            "threads": self.threads,
            "log_level": self.log_level,
            "output_root": str(self.output_root),
        }


# ── Logging ────────────────────────────────────────────────────────

def setup_logging(name, log_dir=None, level=None):
    """Configure a named logger with console and (optional) file output."""
    named = logging.getLogger(name)
    named.setLevel(logging.DEBUG)

    if named.handlers:
        return named

    formatter = logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT)

    console = logging.StreamHandler(sys.stderr)
    console.setLevel(level or settings.log_level)
    console.setFormatter(formatter)
    named.addHandler(console)

    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_dir / "gibbsfluct.log", encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        named.addHandler(file_handler)

    return named


def close_logging(name):
    """Detach and close every handler of a named logger."""
    named = logging.getLogger(name)
    for handler in list(named.handlers):
        named.removeHandler(handler)
        handler.close()


# ── JSON Run Log ───────────────────────────────────────────────────

def record_event(action_type, target, result, log_path=None, metadata=None):
    """Append a structured JSON record of a run action.

    Args:
        action_type: simulate, analyze, bounds, gnz_check, verify_assumptions,
                     oracle_test, chain, report, etc.
        target: What was acted upon (chain id, report name, config path)
        result: success, failed, passed, rejected
        log_path: JSON-lines file to append to (skipped when None)
        metadata: Optional dict of extra fields
    """
    entry = {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "action_type": action_type,
        "target": target,
        "result": result,
    }
    if metadata:
        entry["metadata"] = metadata

    if log_path is not None:
        log_path = Path(log_path)
        try:
            log_path.parent.mkdir(parents=True, exist_ok=True)
            with open(log_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(entry, sort_keys=True, default=str) + "\n")
        except OSError as e:
            logger.error(f"Failed to write run log: {e}")

    log_line = f"[RUN] {action_type} | target={target} | result={result}"
    if result in ("failed", "rejected"):
        logger.warning(log_line)
    else:
        logger.info(log_line)

    return entry


# ── Module-level singleton ─────────────────────────────────────────

settings = RunSettings()
