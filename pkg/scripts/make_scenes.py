#!/usr/bin/env python3
"""Generate the bundled hand, objects, and scene files under scenes/.

The hand is a 4-finger, 4-DOF-per-finger model (three fingers plus an
opposing thumb) sized for desk-scale objects held above the palm. Initial
grasps are synthesized by solving fingertip IK onto chosen surface points
with the package's own solver, then every emitted scene is re-loaded and
re-validated through the normal loading path.
"""

import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from regrasp.geometry import RigidTransform, closest_surface_point, convex_hull, signed_distances_object
from regrasp.kinematics import HandModel, JointConfig, fk_fingertip, fk_link_proxies
from regrasp.nlp import NLPProblem, minimize
from regrasp.scene_io import hand_from_dict, load_scene, object_from_dict

OUT = os.path.join(os.path.dirname(__file__), "..", "scenes")

IDENT = {"position": [0.0, 0.0, 0.0], "quaternion": [1.0, 0.0, 0.0, 0.0]}


def tdict(pos, quat=(1.0, 0.0, 0.0, 0.0)):
    return {"position": [float(v) for v in pos], "quaternion": [float(v) for v in quat]}


# ------------------------------------------------------------------- hand


def finger_dict(base_pos, base_quat, yaw_lim=0.45):
    """One finger: yaw at the base, then three flexion joints.

    Links run along local +z and flexion about +x curls the chain toward
    local -y. Proximal/medial links carry the collision spheres; the
    fingertip link carries none (it is allowed to touch the object).
    """
    return {
        "name": "",
        "base_transform": tdict(base_pos, base_quat),
        "joints": [
            {"parent_transform": IDENT, "axis": [0.0, 0.0, 1.0], "limit_min": -yaw_lim, "limit_max": yaw_lim},
            {"parent_transform": IDENT, "axis": [1.0, 0.0, 0.0], "limit_min": -0.35, "limit_max": 1.9},
            {
                "parent_transform": tdict([0.0, 0.0, 0.05]),
                "axis": [1.0, 0.0, 0.0],
                "limit_min": -0.35,
                "limit_max": 1.9,
            },
            {
                "parent_transform": tdict([0.0, 0.0, 0.035]),
                "axis": [1.0, 0.0, 0.0],
                "limit_min": -0.25,
                "limit_max": 1.9,
            },
        ],
        "link_proxies": [
            [],
            [
                {"center": [0.0, 0.0, 0.015], "radius": 0.007},
                {"center": [0.0, 0.0, 0.035], "radius": 0.007},
            ],
            [
                {"center": [0.0, 0.0, 0.012], "radius": 0.006},
                {"center": [0.0, 0.0, 0.024], "radius": 0.006},
            ],
            [],
        ],
        "tip_offset": tdict([0.0, 0.0, 0.03]),
    }


def build_hand_dict():
    # thumb base is rotated pi about z so its flexion curls toward +y
    qz_pi = [0.0, 0.0, 0.0, 1.0]
    fingers = []
    for i, x in enumerate((-0.045, 0.0, 0.045)):
        f = finger_dict([x, 0.055, 0.01], (1.0, 0.0, 0.0, 0.0))
        f["name"] = ["index", "middle", "ring"][i]
        fingers.append(f)
    thumb = finger_dict([0.0, -0.055, 0.01], qz_pi)
    thumb["name"] = "thumb"
    fingers.append(thumb)
    return {
        "format_version": 1,
        "name": "default_hand",
        "finger_roles": {"index": 0, "middle": 1, "ring": 2, "thumb": 3},
        "fingers": fingers,
    }


# ----------------------------------------------------------------- objects


def box_part(xr, yr, zr):
    verts = np.array([[x, y, z] for x in xr for y in yr for z in zr], dtype=float)
    hull = convex_hull(verts)
    return {"vertices": hull.vertices.tolist(), "faces": hull.faces.tolist()}


def hex_prism_part(circumradius, x0, x1):
    angles = np.deg2rad(30 + 60 * np.arange(6))
    ring = np.stack([circumradius * np.cos(angles), circumradius * np.sin(angles)], axis=1)  # (y, z)
    verts = [[x, y, z] for x in (x0, x1) for y, z in ring]
    hull = convex_hull(np.array(verts))
    return {"vertices": hull.vertices.tolist(), "faces": hull.faces.tolist()}


def object_dict(name, parts):
    return {"format_version": 1, "name": name, "parts": parts}


BOX = object_dict("box", [box_part((-0.085, 0.085), (-0.03, 0.03), (-0.03, 0.03))])
HEX = object_dict("hex_prism", [hex_prism_part(0.033, -0.09, 0.09)])
LSHAPE = object_dict(
    "l_shape",
    [
        box_part((-0.09, 0.02), (-0.03, 0.03), (-0.02, 0.015)),
        box_part((0.0, 0.085), (-0.03, 0.03), (-0.02, 0.04)),
    ],
)

HEX_APOTHEM = 0.033 * np.cos(np.deg2rad(30))


# --------------------------------------------------------------------- IK


def solve_finger_ik(hand, obj, pose, finger, target_palm, clear=0.0035, seeds=None):
    """Joint angles placing one fingertip on a palm-frame surface point.

    Keeps every non-fingertip link proxy at least ``clear`` from the object.
    Returns (theta, residual_m, worst_clearance_m).
    """
    f = hand.fingers[finger]
    lo, hi = f.limits()
    target = np.asarray(target_palm, dtype=float)

    def objective(th):
        d = fk_fingertip(hand, finger, th).translation - target
        return float(d @ d)

    def clearance_eq(th):
        proxies = fk_link_proxies(hand, finger, th)
        if not proxies:
            return 0.0
        centers = np.array([c for c, _ in proxies])
        radii = np.array([r for _, r in proxies])
        sd = signed_distances_object(centers, obj, pose) - radii
        return float(np.sum(np.maximum(0.0, clear - sd)))

    problem = NLPProblem(dim=f.dof, objective=objective, eq_constraints=[clearance_eq], lower=lo, upper=hi)

    if seeds is None:
        seeds = [
            np.array([0.0, 0.2, 0.5, 0.5]),
            np.array([0.0, 0.0, 0.7, 0.7]),
            np.array([0.0, 0.4, 0.3, 0.8]),
            np.array([0.0, 0.1, 0.9, 0.3]),
            np.array([0.2, 0.3, 0.4, 0.6]),
            np.array([-0.2, 0.3, 0.4, 0.6]),
        ]
    best = None
    for seed in seeds:
        sol = minimize(problem, np.clip(seed, lo, hi), max_outer=10, feas_tol=1e-8, inner_maxiter=120)
        score = sol.objective_value + 10.0 * sol.max_violation
        if best is None or score < best[1]:
            best = (sol, score)
    sol = best[0]
    theta = sol.x
    res = np.sqrt(objective(theta))
    proxies = fk_link_proxies(hand, finger, theta)
    centers = np.array([c for c, _ in proxies])
    radii = np.array([r for _, r in proxies])
    worst = float(np.min(signed_distances_object(centers, obj, pose) - radii))
    return theta, float(res), worst


def synth_grasp(hand, obj, pose, contacts_obj):
    """IK all fingers onto object-frame contact points; hard-fails loudly."""
    thetas = []
    for r in range(hand.num_fingers):
        target = pose.apply(np.asarray(contacts_obj[r], dtype=float))
        theta, res, worst = solve_finger_ik(hand, obj, pose, r, target)
        label = hand.fingers[r].name
        if res > 2e-6:
            raise SystemExit(f"IK failed for {label}: residual {res * 1e3:.4f} mm")
        if worst < 0.0025:
            raise SystemExit(f"IK clearance too small for {label}: {worst * 1e3:.2f} mm")
        print(f"  {label}: residual {res * 1e6:.2f} um, clearance {worst * 1e3:.2f} mm")
        thetas.append(theta)
    return thetas


# ------------------------------------------------------------------ scenes


def scene_dict(name, object_file, contacts_obj, thetas, pose_t, goals_obj, goal_pose, params=None):
    d = {
        "format_version": 1,
        "name": name,
        "hand_file": "hand_default.json",
        "object_file": object_file,
        "initial_joint_config": [[float(v) for v in th] for th in thetas],
        "initial_pose": tdict(pose_t),
        "goal_contacts": [[float(v) for v in g] for g in goals_obj],
        "goal_pose": goal_pose,
    }
    if params:
        d["params"] = params
    return d


def main():
    os.makedirs(OUT, exist_ok=True)

    hand_d = build_hand_dict()
    with open(os.path.join(OUT, "hand_default.json"), "w") as fh:
        json.dump(hand_d, fh, indent=1)
    hand = hand_from_dict(hand_d)

    for fname, od in (("obj_box.json", BOX), ("obj_hex_prism.json", HEX), ("obj_l_shape.json", LSHAPE)):
        with open(os.path.join(OUT, fname), "w") as fh:
            json.dump(od, fh, indent=1)

    pose_t = [0.0, 0.0, 0.105]
    pose = RigidTransform(np.eye(3), np.array(pose_t))

    scenes = []

    # box: three fingers on the +y face, thumb opposing on -y
    box_obj = object_from_dict(BOX)
    box_contacts = [
        [-0.045, 0.03, -0.003],
        [0.0, 0.03, -0.001],
        [0.045, 0.03, -0.003],
        [0.0, -0.03, -0.005],
    ]
    print("box grasp:")
    box_thetas = synth_grasp(hand, box_obj, pose, box_contacts)

    # slide all contacts down and across the side faces; the x component
    # exceeds what yawing alone can reach, so the object must translate
    box_goals_a = [[x - 0.024, y, z - 0.022] for x, y, z in box_contacts]
    scenes.append(
        scene_dict(
            "box_slide",
            "obj_box.json",
            box_contacts,
            box_thetas,
            pose_t,
            box_goals_a,
            tdict([0.016, 0.0, 0.102]),
        )
    )

    # shift the whole contact pattern along the box length
    box_goals_b = [[x + 0.03, y, z + 0.012] for x, y, z in box_contacts]
    scenes.append(
        scene_dict(
            "box_shift",
            "obj_box.json",
            box_contacts,
            box_thetas,
            pose_t,
            box_goals_b,
            tdict([-0.02, 0.0, 0.105]),
        )
    )

    # hex prism: contacts on the +/-y facets
    hex_obj = object_from_dict(HEX)
    a = HEX_APOTHEM
    hex_contacts = [
        [-0.045, a, -0.002],
        [0.0, a, 0.002],
        [0.045, a, -0.002],
        [0.0, -a, -0.004],
    ]
    print("hex grasp:")
    hex_thetas = synth_grasp(hand, hex_obj, pose, hex_contacts)

    # slide along the prism axis (object translates back under the hand)
    hex_goals_a = [[x + 0.032, y, z - 0.008] for x, y, z in hex_contacts]
    scenes.append(
        scene_dict(
            "hex_slide",
            "obj_hex_prism.json",
            hex_contacts,
            hex_thetas,
            pose_t,
            hex_goals_a,
            tdict([-0.025, 0.0, 0.105]),
        )
    )

    # rotate the contact pattern about the prism axis (projected back onto
    # the facets) and shift it lengthwise, so the object must both
    # counter-rotate and translate
    ang = np.deg2rad(-20.0)
    rot_x = np.array(
        [[1.0, 0.0, 0.0], [0.0, np.cos(ang), -np.sin(ang)], [0.0, np.sin(ang), np.cos(ang)]]
    )
    ident = RigidTransform.identity()
    hex_goals_b = [
        list(closest_surface_point(rot_x @ np.array(c) + np.array([0.03, 0.0, 0.0]), hex_obj, ident))
        for c in hex_contacts
    ]
    qx = [np.cos(-ang / 2), np.sin(-ang / 2), 0.0, 0.0]
    scenes.append(
        scene_dict(
            "hex_roll",
            "obj_hex_prism.json",
            hex_contacts,
            hex_thetas,
            pose_t,
            hex_goals_b,
            tdict([-0.022, 0.0, 0.105], qx),
        )
    )

    # L-shape: start over the low limb, goals climb onto the high limb
    l_obj = object_from_dict(LSHAPE)
    l_contacts = [
        [-0.045, 0.03, -0.004],
        [0.0, 0.03, -0.002],
        [0.045, 0.03, 0.0],
        [0.0, -0.03, -0.006],
    ]
    print("l-shape grasp:")
    l_thetas = synth_grasp(hand, l_obj, pose, l_contacts)

    l_goals_a = [
        [-0.012, 0.03, 0.004],
        [0.032, 0.03, 0.024],
        [0.077, 0.03, 0.026],
        [0.033, -0.03, 0.02],
    ]
    scenes.append(
        scene_dict(
            "l_climb",
            "obj_l_shape.json",
            l_contacts,
            l_thetas,
            pose_t,
            l_goals_a,
            tdict([-0.028, 0.0, 0.1]),
        )
    )

    l_goals_b = [[x - 0.03, y, z - 0.012] for x, y, z in l_contacts]
    scenes.append(
        scene_dict(
            "l_slide",
            "obj_l_shape.json",
            l_contacts,
            l_thetas,
            pose_t,
            l_goals_b,
            tdict([0.024, 0.0, 0.105]),
        )
    )

    # adversarial: goals on the underside of the box, which no finger can
    # reach without driving its links through the object
    box_goals_x = [
        [-0.045, 0.0, -0.03],
        [-0.015, 0.0, -0.03],
        [0.015, 0.0, -0.03],
        [0.045, 0.0, -0.03],
    ]
    scenes.append(
        scene_dict(
            "box_unreachable",
            "obj_box.json",
            box_contacts,
            box_thetas,
            pose_t,
            box_goals_x,
            tdict(pose_t),
        )
    )

    for sd in scenes:
        path = os.path.join(OUT, f"scene_{sd['name']}.json")
        with open(path, "w") as fh:
            json.dump(sd, fh, indent=1)
        scene = load_scene(path)  # re-validate through the normal path
        tips = np.array(
            [
                fk_fingertip(scene.hand, r, scene.initial_joint_config.angles[r]).translation
                for r in range(scene.hand.num_fingers)
            ]
        )
        goals_palm = scene.initial_pose.apply(scene.goal_contacts_object_frame)
        err = np.linalg.norm(tips - goals_palm, axis=1)
        print(f"{sd['name']}: initial errors {np.round(err * 1e3, 1)} mm -> {path}")


if __name__ == "__main__":
    main()
