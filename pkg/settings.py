import hashlib
import json
import logging
import os
from typing import Any, Mapping

from dotenv import load_dotenv

load_dotenv()
base_path = os.getcwd()

ENV_SEED = "DIVDIAG_SEED"
ENV_THREADS = "DIVDIAG_THREADS"
ENV_LEXICON = "DIVDIAG_LEXICON"
ENV_LOG_LEVEL = "DIVDIAG_LOG_LEVEL"

DEFAULT_SEED = 0
DEFAULT_THREADS = 1
DEFAULT_LOG_LEVEL = "WARNING"

# keys that never change primary outputs
DIGEST_EXCLUDED = frozenset({"threads", "out", "format", "log_level"})


def resolve_path(path: str) -> str:
    """Resolve a relative input path against the working directory."""
    if os.path.isabs(path):
        return path
    return os.path.join(base_path, path)


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_digest(config: Mapping[str, Any]) -> str:
    """
    Digest of a run configuration.

    Args:
        config (Mapping[str, Any]): JSON-encodable run parameters.

    Returns:
        str: Hex SHA-256 of the canonical JSON encoding, ignoring keys in
        DIGEST_EXCLUDED.
    """
    kept = {k: v for k, v in config.items() if k not in DIGEST_EXCLUDED}
    return hashlib.sha256(canonical_json(kept).encode("utf-8")).hexdigest()


def configure_logging(level: str = DEFAULT_LOG_LEVEL) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )
