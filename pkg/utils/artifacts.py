"""Deterministic artifact files and the run manifest."""
import hashlib
import json
import os
from typing import Dict, List, Optional

import pandas as pd

from utils.logger import get_logger

logger = get_logger(__name__)

SCHEMA_VERSION = "1.0"
FLOAT_FORMAT = "%.12g"


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, default=_default) + "\n"


def _default(value):
    # numpy scalars and arrays
    if hasattr(value, "tolist"):
        return value.tolist()
    if hasattr(value, "item"):
        return value.item()
    return str(value)


def content_hash(config: dict) -> str:
    """git-style blob SHA-1 of the canonical config JSON."""
    body = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_default).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


class ArtifactWriter:
    """Writes CSV, JSON, figure and report files under <root>/<experiment>/<subcommand>/."""

    def __init__(self, root: str, experiment: str, subcommand: str, config: dict):
        self.directory = os.path.join(root, experiment, subcommand)
        os.makedirs(self.directory, exist_ok=True)
        self.config = config
        self.subcommand = subcommand
        self.artifacts: Dict[str, str] = {}

    def _record(self, name: str, data: bytes) -> str:
        path = os.path.join(self.directory, name)
        with open(path, "wb") as handle:
            handle.write(data)
        self.artifacts[name] = hashlib.sha256(data).hexdigest()
        logger.debug("wrote %s", path)
        return path

    def write_csv(self, name: str, frame: pd.DataFrame) -> str:
        text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return self._record(name, text.encode())

    def write_json(self, name: str, payload) -> str:
        return self._record(name, canonical_json(payload).encode())

    def write_figure(self, name: str, figure) -> str:
        """plotly figure as its JSON document."""
        payload = json.loads(figure.to_json())
        return self.write_json(name, payload)

    def write_text(self, name: str, text: str) -> str:
        return self._record(name, text.encode())

    def write_manifest(self, status: str, checks: Optional[List[dict]] = None) -> str:
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "subcommand": self.subcommand,
            "config": self.config,
            "config_hash": content_hash(self.config),
            "status": status,
            "checks": checks or [],
            "artifacts": [{"name": k, "sha256": v} for k, v in sorted(self.artifacts.items())],
        }
        path = os.path.join(self.directory, "manifest.json")
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(canonical_json(manifest))
        return path
