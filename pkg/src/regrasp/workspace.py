"""Voxel-based estimate of a fingertip's reachable workspace.

The fingertip is swept over a regular grid of joint values, occupied voxels
are collected, and the convex hull of the voxel corner points is returned.
Every sampled fingertip position is therefore inside the hull with slack at
most the voxel size. The workspace is fixed in the palm frame, so one
estimate per finger is valid for an entire planning run.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, InputError
from .geometry import ConvexPart, convex_hull, signed_distances_part
from .kinematics import HandModel, fk_fingertips_batch


@dataclass(frozen=True)
class ReachableWorkspace:
    finger: int
    hull: ConvexPart
    voxel_size: float
    sample_count: int


def _grid_configs(finger, samples_per_joint):
    axes = [np.linspace(j.limit_min, j.limit_max, samples_per_joint) for j in finger.joints]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def estimate_workspace(hand: HandModel, finger: int, voxel_size=0.005, samples_per_joint=9) -> ReachableWorkspace:
    """Estimate one finger's reachable workspace as a convex hull.

    ``samples_per_joint`` grid values per joint, inclusive of both limits.
    Raises DegenerateGeometryError when the sampled reachable set collapses
    to a single voxel (e.g. all joint limits pinned to one value).
    """
    if voxel_size <= 0:
        raise InputError("estimate_workspace: voxel_size must be > 0")
    if samples_per_joint < 2:
        raise InputError("estimate_workspace: samples_per_joint must be >= 2")
    if not (0 <= finger < hand.num_fingers):
        raise InputError(f"estimate_workspace: finger index {finger} out of range")

    configs = _grid_configs(hand.fingers[finger], samples_per_joint)
    pos = fk_fingertips_batch(hand, finger, configs)

    idx = np.unique(np.floor(pos / voxel_size).astype(np.int64), axis=0)
    if len(idx) < 2:
        raise DegenerateGeometryError(
            "estimate_workspace: reachable set collapses to a single voxel (degenerate joint limits)"
        )
    centers = (idx.astype(float) + 0.5) * voxel_size

    half = voxel_size / 2.0
    corner_offsets = np.array(list(itertools.product((-half, half), repeat=3)))
    corners = (centers[:, None, :] + corner_offsets[None, :, :]).reshape(-1, 3)

    hull = convex_hull(corners)
    return ReachableWorkspace(finger=finger, hull=hull, voxel_size=voxel_size, sample_count=len(configs))


def workspace_signed_distance(p, ws: ReachableWorkspace) -> float:
    """Signed distance from a palm-frame point to the workspace hull."""
    return float(signed_distances_part(np.asarray(p, dtype=float), ws.hull))


def workspace_signed_distances(points, ws: ReachableWorkspace):
    return signed_distances_part(np.asarray(points, dtype=float), ws.hull)
