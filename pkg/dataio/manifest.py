# dataio/manifest.py
from pathlib import Path
from typing import List, Union
import logging

from pydantic import ValidationError

from models.manifest import SequenceManifest
from utils.errors import DataError, ManifestError
from utils.files import read_json, write_json

logger = logging.getLogger(__name__)

FRAME_FIELDS = ("cloud", "semantic", "depth", "label", "prediction")


def describe_errors(e: ValidationError) -> List[str]:
    """One 'path.to.field: message' line per validation problem."""
    return [f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()]


def load_manifest(path: Union[str, Path]) -> SequenceManifest:
    path = Path(path)
    try:
        data = read_json(path)
    except DataError as e:
        raise ManifestError(f"cannot load manifest: {e}")
    try:
        manifest = SequenceManifest.model_validate(data)
    except ValidationError as e:
        problems = describe_errors(e)
        raise ManifestError(f"{path}: invalid manifest: " + "; ".join(problems))
    return manifest.with_root(path.parent)


def save_manifest(path: Union[str, Path], manifest: SequenceManifest) -> Path:
    return write_json(path, manifest.model_dump(mode="json"))


def missing_paths(manifest: SequenceManifest, field: str) -> List[str]:
    """Frames whose `field` path is absent from the manifest or from disk."""
    if field not in FRAME_FIELDS:
        raise ValueError(f"unknown frame field '{field}'")
    problems = []
    for frame in manifest.frames:
        rel = getattr(frame, field)
        if rel is None:
            problems.append(f"frame {frame.index}: no {field} path")
        elif not manifest.resolve(rel).exists():
            problems.append(f"frame {frame.index}: {field} file {rel} not found")
    return problems
