# utils/__init__.py

from .errors import BevBenchError
from .files import write_atomic, write_json, dumps_stable

__all__ = [
    "BevBenchError",
    "write_atomic",
    "write_json",
    "dumps_stable",
]
