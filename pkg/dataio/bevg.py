# dataio/bevg.py
"""BEVG container: typed, checksummed, little-endian raster layers.

    magic "BEVG" | version u16 | rows u32 | cols u32 | resolution f32 | channels u16
    | flags u16 | y_min f64 | y_max f64
    | (tag u8, type u8) per channel | row-major payloads | CRC-32 of all preceding bytes

Version 1 files lack the flags and vertical range; they are still read.
"""
from pathlib import Path
from typing import List, Tuple, Union
import logging
import struct
import zlib
import numpy as np

from models.grid import CLASS_ORDER, OCCUPIED, ConfidenceGrid, GridSpec, LabelGrid, SemanticClass
from models.voxel import VoxelSpec, VoxelVolume
from utils.errors import (
    BadMagic, ChecksumMismatch, IoError, InvalidSpec, ParseError, TruncatedFile, VersionUnsupported,
)
from utils.files import write_atomic

logger = logging.getLogger(__name__)

MAGIC = b"BEVG"
VERSION = 2
PREAMBLE_FORMAT = "<4sH"
PREAMBLE_SIZE = struct.calcsize(PREAMBLE_FORMAT)
HEADER_FORMATS = {1: "<4sHIIfH", 2: "<4sHIIfHHdd"}
HEADER_FORMAT = HEADER_FORMATS[VERSION]
DESCRIPTOR_FORMAT = "<BB"
CRC_FORMAT = "<I"
DEFAULT_VERTICAL_RANGE = (-0.4, 2.0)

# Header flags
NORMALIZED = 0x1

# Channel tags
CLASS = 1
LANE_ID = 2
OCCLUSION = 3
OCCUPANCY = 4
VOXEL_COUNT = 5
VOXEL_REMISSION = 6
PROB_BASE = 16

# Element types
U8, U16, F32 = 0, 1, 2
DTYPES = {U8: np.dtype("<u1"), U16: np.dtype("<u2"), F32: np.dtype("<f4")}

Raster = Union[LabelGrid, ConfidenceGrid, VoxelVolume]


def _layers_of(grid: Raster) -> Tuple[GridSpec, List[Tuple[int, int, np.ndarray]]]:
    if isinstance(grid, LabelGrid):
        return grid.spec, [
            (CLASS, U8, grid.class_layer),
            (LANE_ID, U16, grid.lane_id_layer),
            (OCCLUSION, U8, grid.occlusion_layer.astype(np.uint8)),
        ]
    if isinstance(grid, ConfidenceGrid):
        layers = []
        for name, probs in zip(grid.channels, grid.probs):
            tag = OCCUPANCY if name == OCCUPIED else PROB_BASE + SemanticClass(name).code
            layers.append((tag, F32, probs))
        if grid.lane_id_layer is not None:
            layers.append((LANE_ID, U16, grid.lane_id_layer))
        return grid.spec, layers
    if isinstance(grid, VoxelVolume):
        if grid.counts.max(initial=0) > np.iinfo(np.uint16).max:
            raise InvalidSpec("voxel counts exceed the u16 range of the container")
        layers = [(VOXEL_COUNT, U16, c) for c in grid.counts]
        layers += [(VOXEL_REMISSION, F32, r) for r in grid.mean_remission]
        return grid.spec.bev, layers
    raise TypeError(f"cannot serialize {type(grid).__name__}")


def _header_of(grid: Raster) -> Tuple[int, float, float]:
    """(flags, y_min, y_max) of the version 2 header."""
    if isinstance(grid, VoxelVolume):
        return 0, grid.spec.y_min, grid.spec.y_max
    if isinstance(grid, ConfidenceGrid) and grid.normalized:
        return NORMALIZED, 0.0, 0.0
    return 0, 0.0, 0.0


def encode_grid(grid: Raster) -> bytes:
    spec, layers = _layers_of(grid)
    flags, y_min, y_max = _header_of(grid)
    parts = [struct.pack(HEADER_FORMAT, MAGIC, VERSION, spec.rows, spec.cols, spec.resolution, len(layers), flags, y_min, y_max)]
    parts += [struct.pack(DESCRIPTOR_FORMAT, tag, kind) for tag, kind, _ in layers]
    parts += [np.ascontiguousarray(data, dtype=DTYPES[kind]).tobytes() for _, kind, data in layers]
    body = b"".join(parts)
    return body + struct.pack(CRC_FORMAT, zlib.crc32(body) & 0xFFFFFFFF)


def write_grid(path: Union[str, Path], grid: Raster) -> Path:
    return write_atomic(path, encode_grid(grid))


def decode_grid(
    data: bytes,
    vertical_range: Tuple[float, float] = DEFAULT_VERTICAL_RANGE,
    source: str = "<bytes>",
) -> Raster:
    """Grid from BEVG bytes; vertical_range only applies to version 1 voxel volumes."""
    if len(data) < PREAMBLE_SIZE + 4:
        raise TruncatedFile(f"{source}: {len(data)} bytes is shorter than a BEVG header")
    magic, version = struct.unpack_from(PREAMBLE_FORMAT, data)
    if magic != MAGIC:
        raise BadMagic(f"{source}: expected magic {MAGIC!r}, got {magic!r}")
    if version not in HEADER_FORMATS:
        raise VersionUnsupported(f"{source}: BEVG version {version} (supported: {sorted(HEADER_FORMATS)})")
    header_format = HEADER_FORMATS[version]
    header_size = struct.calcsize(header_format)
    if len(data) < header_size + 4:
        raise TruncatedFile(f"{source}: {len(data)} bytes is shorter than a version {version} header")

    body, (crc,) = data[:-4], struct.unpack(CRC_FORMAT, data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise ChecksumMismatch(f"{source}: CRC-32 does not match")

    header = struct.unpack_from(header_format, data)
    rows, cols, resolution, n_channels = header[2:6]
    flags = 0
    if version >= 2:
        flags, y_min, y_max = header[6:]
        vertical_range = (y_min, y_max)

    offset = header_size
    descriptors = []
    for _ in range(n_channels):
        if offset + 2 > len(body):
            raise TruncatedFile(f"{source}: channel descriptors cut short")
        tag, kind = struct.unpack_from(DESCRIPTOR_FORMAT, body, offset)
        if kind not in DTYPES:
            raise ParseError(f"{source}: unknown element type {kind}")
        descriptors.append((tag, kind))
        offset += 2

    layers = []
    for tag, kind in descriptors:
        size = rows * cols * DTYPES[kind].itemsize
        if offset + size > len(body):
            raise TruncatedFile(f"{source}: payload of tag {tag} cut short")
        layers.append((tag, np.frombuffer(body, dtype=DTYPES[kind], count=rows * cols, offset=offset).reshape(rows, cols)))
        offset += size
    if offset != len(body):
        raise ParseError(f"{source}: {len(body) - offset} trailing bytes before checksum")

    spec = GridSpec(rows=rows, cols=cols, resolution=float(resolution))
    return _build(spec, layers, vertical_range, bool(flags & NORMALIZED), source)


def _build(spec: GridSpec, layers, vertical_range, normalized: bool, source: str) -> Raster:
    tags = [tag for tag, _ in layers]
    by_tag = dict(layers)
    if CLASS in tags:
        if sorted(tags) != [CLASS, LANE_ID, OCCLUSION]:
            raise ParseError(f"{source}: label grid needs class, lane-id and occlusion channels, got tags {tags}")
        return LabelGrid(
            spec=spec,
            class_layer=by_tag[CLASS],
            lane_id_layer=by_tag[LANE_ID],
            occlusion_layer=by_tag[OCCLUSION] != 0,
        )
    if VOXEL_COUNT in tags:
        counts = [data for tag, data in layers if tag == VOXEL_COUNT]
        remission = [data for tag, data in layers if tag == VOXEL_REMISSION]
        if len(counts) != len(remission) or len(counts) + len(remission) != len(layers):
            raise ParseError(f"{source}: voxel volume needs paired count/remission channels")
        y_min, y_max = vertical_range
        vspec = VoxelSpec(bev=spec, channels=len(counts), y_min=y_min, y_max=y_max)
        return VoxelVolume(spec=vspec, counts=np.stack(counts), mean_remission=np.stack(remission))

    channels, probs, lane_ids = [], [], None
    for tag, data in layers:
        if tag == LANE_ID:
            lane_ids = data
        elif tag == OCCUPANCY:
            channels.append(OCCUPIED)
            probs.append(data)
        elif PROB_BASE <= tag < PROB_BASE + len(CLASS_ORDER):
            channels.append(SemanticClass.from_code(tag - PROB_BASE).value)
            probs.append(data)
        else:
            raise ParseError(f"{source}: unknown channel tag {tag}")
    if not probs:
        raise ParseError(f"{source}: no probability channels")
    return ConfidenceGrid(
        spec=spec, probs=np.stack(probs), channels=tuple(channels), lane_id_layer=lane_ids, normalized=normalized,
    )


def read_grid(path: Union[str, Path], vertical_range: Tuple[float, float] = DEFAULT_VERTICAL_RANGE) -> Raster:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}")
    return decode_grid(data, vertical_range, source=str(path))
