# bev/pseudolidar.py
"""Pseudo-lidar voxelization: camera-frame clouds to the 10-channel BEV volume."""
from typing import Iterable
import logging
import numpy as np

from bev.raster import cells_of
from models.geometry import PointCloud
from models.grid import ConfidenceGrid, OCCUPIED
from models.voxel import VoxelSpec, VoxelVolume
from utils.errors import EmptyInput, ShapeMismatch

logger = logging.getLogger(__name__)

DEFAULT_SATURATION = 4.0


def voxel_indices(cloud: PointCloud, spec: VoxelSpec):
    """Flat voxel index per point and the in-range mask."""
    spec.validate_slicing()
    x, y, z = cloud.points[:, 0], cloud.points[:, 1], cloud.points[:, 2]
    in_height = (y >= spec.y_min) & (y < spec.y_max)
    channel = np.floor((y - spec.y_min) / spec.channel_height)
    # y just below y_max can round up to the next bin
    channel = np.clip(channel, 0, spec.channels - 1).astype(np.int64)
    rows, cols, in_grid = cells_of(x, z, spec.bev)
    keep = in_height & in_grid
    flat = (channel * spec.bev.rows + rows) * spec.bev.cols + cols
    return flat[keep], keep


def voxelize(cloud: PointCloud, spec: VoxelSpec = VoxelSpec()) -> VoxelVolume:
    flat, keep = voxel_indices(cloud, spec)
    size = spec.channels * spec.bev.rows * spec.bev.cols
    counts = np.bincount(flat, minlength=size)
    sums = np.bincount(flat, weights=cloud.remission[keep], minlength=size)
    mean = np.divide(sums, counts, out=np.zeros(size), where=counts > 0)

    shape = (spec.channels,) + spec.bev.shape
    logger.debug(f"Voxelized {int(keep.sum())} of {len(cloud)} points")
    return VoxelVolume(spec=spec, counts=counts.reshape(shape), mean_remission=mean.reshape(shape))


def merge_volumes(volumes: Iterable[VoxelVolume]) -> VoxelVolume:
    """Merge per-partition volumes: counts add, means combine weighted by count."""
    volumes = list(volumes)
    if not volumes:
        raise EmptyInput("no volumes to merge")
    spec = volumes[0].spec
    counts = np.zeros_like(volumes[0].counts)
    sums = np.zeros_like(volumes[0].mean_remission)
    for vol in volumes:
        if vol.spec != spec:
            raise ShapeMismatch("cannot merge volumes with different specs")
        counts = counts + vol.counts
        sums = sums + vol.mean_remission * vol.counts
    mean = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return VoxelVolume(spec=spec, counts=counts, mean_remission=mean)


def flatten_occupancy(vol: VoxelVolume, saturation: float = DEFAULT_SATURATION) -> ConfidenceGrid:
    if saturation <= 0:
        raise ValueError("saturation must be positive")
    total = vol.counts.sum(axis=0).astype(np.float64)
    occupancy = np.minimum(1.0, total / saturation)
    return ConfidenceGrid(spec=vol.spec.bev, probs=occupancy[None], channels=(OCCUPIED,))
