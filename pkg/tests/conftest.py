import os

import numpy as np
import pytest

from regrasp.geometry import RigidTransform, convex_hull
from regrasp.kinematics import FingerModel, HandModel, JointSpec, LinkProxy
from regrasp.scene_io import load_scene

SCENES = os.path.join(os.path.dirname(__file__), "..", "scenes")


def scene_path(name):
    return os.path.join(SCENES, f"scene_{name}.json")


@pytest.fixture(scope="session")
def box_scene():
    return load_scene(scene_path("box_slide"))


@pytest.fixture(scope="session")
def default_hand(box_scene):
    return box_scene.hand


def make_box_part(center, half):
    c = np.asarray(center, dtype=float)
    h = np.asarray(half, dtype=float)
    pts = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
    return convex_hull(pts * h + c)


def identity():
    return RigidTransform.identity()


def translate(t):
    return RigidTransform(np.eye(3), np.asarray(t, dtype=float))


def make_planar_finger(lengths=(0.05, 0.04), axis=(0, 0, 1), base=None, limits=(-np.pi, np.pi)):
    """Revolute chain in the xy plane: links along +x, joints about +z."""
    joints = []
    proxies = []
    offset = identity()
    for length in lengths[:-1]:
        joints.append(JointSpec(offset, np.asarray(axis, float), limits[0], limits[1]))
        proxies.append((LinkProxy([length / 2, 0, 0], 0.008),))
        offset = translate([length, 0, 0])
    joints.append(JointSpec(offset, np.asarray(axis, float), limits[0], limits[1]))
    proxies.append(())
    return FingerModel(
        base_transform=base or identity(),
        joints=tuple(joints),
        link_proxies=tuple(proxies),
        tip_offset=translate([lengths[-1], 0, 0]),
    )


def make_two_finger_hand(finger, other=None):
    other = other or make_planar_finger(base=translate([0, 1.0, 0]))
    return HandModel((finger, other), {"index": 0, "middle": 1})
