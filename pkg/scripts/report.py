"""
Report module
Writes run artifacts as deterministic JSON plus a manifest naming the
files, the config hash and the seed
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import numpy as np
from pydantic import BaseModel

from models.pydantic_schemas import RunConfig, round_sig

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'


def to_plain(value: Any) -> Any:
    """JSON-ready copy: floats at 12 significant digits, models dumped, tuples as lists"""
    if isinstance(value, BaseModel):
        return to_plain(value.model_dump(mode='json'))
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, np.generic):
        return to_plain(value.item())
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        return round_sig(value)
    if isinstance(value, Path):
        return value.as_posix()
    if isinstance(value, Mapping):
        return {str(key): to_plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(item) for item in value]
    raise TypeError(f'cannot serialize {type(value).__name__} into a report')


def dumps(payload: Any) -> str:
    """UTF-8 JSON text with sorted keys and a trailing newline"""
    return json.dumps(to_plain(payload), sort_keys=True, indent=2, ensure_ascii=False) + '\n'


class ReportWriter:
    """Single writer for every file of one run"""

    def __init__(self, out_dir: Path, run_config: RunConfig):
        self.out_dir = Path(out_dir)
        self.run_config = run_config
        self.files: Dict[str, str] = {}

    def write_json(self, name: str, payload: Any) -> Path:
        return self.write_text(name, dumps(payload))

    def write_text(self, name: str, text: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        path.write_text(text, encoding='utf-8')
        self.files[name] = name
        logger.info(f"Wrote {path}")
        return path

    def register(self, name: str):
        """Record a file written by another stage into the output directory"""
        self.files[name] = name

    def manifest(self) -> Dict[str, Any]:
        return {
            'files': sorted(self.files),
            'config_hash': self.run_config.config_hash(),
            'seed': self.run_config.seed,
            'config': self.run_config.model_dump(mode='json'),
        }

    def write_manifest(self) -> Dict[str, Any]:
        manifest = self.manifest()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / MANIFEST_NAME).write_text(dumps(manifest), encoding='utf-8')
        logger.info(f"Manifest lists {len(manifest['files'])} file(s), config hash {manifest['config_hash'][:12]}")
        return manifest


def write_report(results: Mapping[str, Any], out_dir: Path, run_config: RunConfig,
                 writer: Optional[ReportWriter] = None) -> Dict[str, Any]:
    """
    One JSON file per artifact plus the manifest

    Args:
        results: file name -> payload (pydantic models, dicts, arrays);
            str payloads are written verbatim
        out_dir: output directory, created when missing
        run_config: run record whose hash and seed go into the manifest
        writer: writer of the run, when other files were already registered with it

    Raises:
        OSError: the directory or a file cannot be written
    """
    writer = writer or ReportWriter(out_dir, run_config)
    for name in sorted(results):
        payload = results[name]
        if isinstance(payload, str):
            writer.write_text(name, payload)
        else:
            writer.write_json(name, payload)
    return writer.write_manifest()
