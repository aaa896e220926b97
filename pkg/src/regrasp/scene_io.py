"""Scene, hand, object, and plan documents.

All files are JSON with an explicit ``format_version`` and a strict schema:
unknown fields are rejected so parameter typos fail loudly. Lengths are
meters and angles radians everywhere. Single convex parts may also be read
from triangulated Wavefront OBJ files.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import SceneLoadError
from .gait import GaitParams
from .geometry import ConvexPart, ObjectModel, RigidTransform, signed_distances_object
from .kinematics import FingerModel, HandModel, JointConfig, JointSpec, LinkProxy, fk_fingertip, fk_link_proxies
from .planner import Grasp, Plan, PlannerParams, PlanStep
from .repose import ReposeParams

FORMAT_VERSION = 1

PARAM_DEFAULTS = {
    "eta": 0.01,
    "beta": 0.001,
    "k1": 1000.0,
    "k2": 10.0,
    "zeta": 0.006,
    "max_iterations": 50,
    "surface_tol": 1e-4,
    "stall_epsilon": 0.0,
    "variant": "svd",
    "s_max": 0.003,
    "lambda_rot": 1e-4,
}


@dataclass
class Scene:
    hand: HandModel
    object: ObjectModel
    initial_joint_config: JointConfig
    initial_pose: RigidTransform
    goal_contacts_object_frame: np.ndarray
    goal_pose: RigidTransform
    params: PlannerParams
    name: str = "scene"


def _expect(d, ctx, required, optional=()):
    if not isinstance(d, dict):
        raise SceneLoadError(f"{ctx}: expected an object")
    missing = [k for k in required if k not in d]
    if missing:
        raise SceneLoadError(f"{ctx}: missing field(s) {missing}")
    unknown = [k for k in d if k not in required and k not in optional]
    if unknown:
        raise SceneLoadError(f"{ctx}: unknown field(s) {unknown}")


def _floats(v, n, ctx):
    try:
        a = np.asarray(v, dtype=float)
    except (TypeError, ValueError) as e:
        raise SceneLoadError(f"{ctx}: not a numeric array") from e
    if a.shape != (n,):
        raise SceneLoadError(f"{ctx}: expected {n} numbers, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise SceneLoadError(f"{ctx}: non-finite value")
    return a


def _transform(d, ctx) -> RigidTransform:
    _expect(d, ctx, required=("position", "quaternion"))
    try:
        return RigidTransform.from_quat(
            _floats(d["position"], 3, f"{ctx}.position"), _floats(d["quaternion"], 4, f"{ctx}.quaternion")
        )
    except Exception as e:
        raise SceneLoadError(f"{ctx}: {e}") from e


def transform_to_dict(t: RigidTransform):
    return t.to_dict()


def _check_version(d, ctx):
    if d.get("format_version") != FORMAT_VERSION:
        raise SceneLoadError(f"{ctx}.format_version: expected {FORMAT_VERSION}, got {d.get('format_version')!r}")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as e:
        raise SceneLoadError(f"{path}: {e}") from e
    except json.JSONDecodeError as e:
        raise SceneLoadError(f"{path}: parse error at line {e.lineno}: {e.msg}") from e


# ---------------------------------------------------------------- objects


def object_from_dict(d, ctx="$") -> ObjectModel:
    _expect(d, ctx, required=("format_version", "name", "parts"))
    _check_version(d, ctx)
    if not isinstance(d["parts"], list) or not d["parts"]:
        raise SceneLoadError(f"{ctx}.parts: need at least one part")
    parts = []
    for i, pd in enumerate(d["parts"]):
        pc = f"{ctx}.parts[{i}]"
        _expect(pd, pc, required=("vertices", "faces"))
        try:
            verts = np.asarray(pd["vertices"], dtype=float)
            faces = np.asarray(pd["faces"], dtype=int)
            parts.append(ConvexPart(verts, faces))
        except SceneLoadError:
            raise
        except Exception as e:
            raise SceneLoadError(f"{pc}: {e}") from e
    return ObjectModel(tuple(parts), name=str(d["name"]))


def object_to_dict(obj: ObjectModel):
    return {
        "format_version": FORMAT_VERSION,
        "name": obj.name,
        "parts": [
            {"vertices": p.vertices.tolist(), "faces": p.faces.tolist()} for p in obj.parts
        ],
    }


def load_obj_mesh(path) -> ObjectModel:
    """Single-convex-part object from a triangulated Wavefront OBJ file."""
    verts, faces = [], []
    try:
        with open(path) as fh:
            for ln, line in enumerate(fh, 1):
                tok = line.split()
                if not tok or tok[0].startswith("#"):
                    continue
                if tok[0] == "v":
                    if len(tok) < 4:
                        raise SceneLoadError(f"{path}:{ln}: malformed vertex line")
                    verts.append([float(x) for x in tok[1:4]])
                elif tok[0] == "f":
                    if len(tok) != 4:
                        raise SceneLoadError(f"{path}:{ln}: only triangulated faces are supported")
                    faces.append([int(t.split("/")[0]) - 1 for t in tok[1:4]])
    except OSError as e:
        raise SceneLoadError(f"{path}: {e}") from e
    except ValueError as e:
        raise SceneLoadError(f"{path}: {e}") from e
    try:
        part = ConvexPart(np.asarray(verts, dtype=float), np.asarray(faces, dtype=int))
    except Exception as e:
        raise SceneLoadError(f"{path}: {e}") from e
    name = os.path.splitext(os.path.basename(path))[0]
    return ObjectModel((part,), name=name)


def save_obj_mesh(part: ConvexPart, path, comment=""):
    with open(path, "w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        for v in part.vertices:
            fh.write(f"v {v[0]!r} {v[1]!r} {v[2]!r}\n")
        for f in part.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def load_object(path) -> ObjectModel:
    if str(path).lower().endswith(".obj"):
        return load_obj_mesh(path)
    return object_from_dict(_read_json(path), ctx=str(path))


# ------------------------------------------------------------------ hands


def hand_from_dict(d, ctx="$") -> HandModel:
    _expect(d, ctx, required=("format_version", "name", "finger_roles", "fingers"))
    _check_version(d, ctx)
    if not isinstance(d["fingers"], list) or len(d["fingers"]) < 2:
        raise SceneLoadError(f"{ctx}.fingers: need at least two fingers")
    fingers = []
    for i, fd in enumerate(d["fingers"]):
        fc = f"{ctx}.fingers[{i}]"
        _expect(fd, fc, required=("base_transform", "joints", "link_proxies", "tip_offset"), optional=("name",))
        joints = []
        for j, jd in enumerate(fd["joints"]):
            jc = f"{fc}.joints[{j}]"
            _expect(jd, jc, required=("parent_transform", "axis", "limit_min", "limit_max"))
            try:
                joints.append(
                    JointSpec(
                        parent_transform=_transform(jd["parent_transform"], f"{jc}.parent_transform"),
                        axis=_floats(jd["axis"], 3, f"{jc}.axis"),
                        limit_min=float(jd["limit_min"]),
                        limit_max=float(jd["limit_max"]),
                    )
                )
            except SceneLoadError:
                raise
            except Exception as e:
                raise SceneLoadError(f"{jc}: {e}") from e
        if not isinstance(fd["link_proxies"], list) or len(fd["link_proxies"]) != len(joints):
            raise SceneLoadError(f"{fc}.link_proxies: need one proxy list per joint")
        proxies = []
        for li, plist in enumerate(fd["link_proxies"]):
            row = []
            for pi, pd in enumerate(plist):
                pc = f"{fc}.link_proxies[{li}][{pi}]"
                _expect(pd, pc, required=("center", "radius"))
                try:
                    row.append(LinkProxy(_floats(pd["center"], 3, f"{pc}.center"), float(pd["radius"])))
                except SceneLoadError:
                    raise
                except Exception as e:
                    raise SceneLoadError(f"{pc}: {e}") from e
            proxies.append(tuple(row))
        try:
            fingers.append(
                FingerModel(
                    base_transform=_transform(fd["base_transform"], f"{fc}.base_transform"),
                    joints=tuple(joints),
                    link_proxies=tuple(proxies),
                    tip_offset=_transform(fd["tip_offset"], f"{fc}.tip_offset"),
                    name=str(fd.get("name", f"finger{i}")),
                )
            )
        except SceneLoadError:
            raise
        except Exception as e:
            raise SceneLoadError(f"{fc}: {e}") from e
    roles = d["finger_roles"]
    if not isinstance(roles, dict):
        raise SceneLoadError(f"{ctx}.finger_roles: expected an object")
    try:
        return HandModel(tuple(fingers), {str(k): int(v) for k, v in roles.items()}, name=str(d["name"]))
    except Exception as e:
        raise SceneLoadError(f"{ctx}: {e}") from e


def hand_to_dict(hand: HandModel):
    return {
        "format_version": FORMAT_VERSION,
        "name": hand.name,
        "finger_roles": dict(hand.finger_roles),
        "fingers": [
            {
                "name": f.name,
                "base_transform": transform_to_dict(f.base_transform),
                "joints": [
                    {
                        "parent_transform": transform_to_dict(j.parent_transform),
                        "axis": j.axis.tolist(),
                        "limit_min": j.limit_min,
                        "limit_max": j.limit_max,
                    }
                    for j in f.joints
                ],
                "link_proxies": [
                    [{"center": p.local_center.tolist(), "radius": p.radius} for p in row]
                    for row in f.link_proxies
                ],
                "tip_offset": transform_to_dict(f.tip_offset),
            }
            for f in hand.fingers
        ],
    }


def load_hand(path) -> HandModel:
    return hand_from_dict(_read_json(path), ctx=str(path))


# ----------------------------------------------------------------- params


def params_from_dict(d, ctx="$.params") -> PlannerParams:
    d = dict(d or {})
    _expect(d, ctx, required=(), optional=tuple(PARAM_DEFAULTS))
    vals = dict(PARAM_DEFAULTS)
    vals.update(d)
    try:
        gait = GaitParams(eta=float(vals["eta"]), beta=float(vals["beta"]), surface_tol=float(vals["surface_tol"]))
        repose = ReposeParams(
            k1=float(vals["k1"]),
            k2=float(vals["k2"]),
            variant=str(vals["variant"]),
            beta=float(vals["beta"]),
            lambda_rot=float(vals["lambda_rot"]),
            s_max=float(vals["s_max"]),
            surface_tol=float(vals["surface_tol"]),
        )
        return PlannerParams(
            zeta=float(vals["zeta"]),
            max_iterations=int(vals["max_iterations"]),
            gait=gait,
            repose=repose,
            stall_epsilon=float(vals["stall_epsilon"]),
        )
    except SceneLoadError:
        raise
    except Exception as e:
        raise SceneLoadError(f"{ctx}: {e}") from e


def params_to_dict(p: PlannerParams):
    return {
        "eta": p.gait.eta,
        "beta": p.gait.beta,
        "k1": p.repose.k1,
        "k2": p.repose.k2,
        "zeta": p.zeta,
        "max_iterations": p.max_iterations,
        "surface_tol": p.gait.surface_tol,
        "stall_epsilon": p.stall_epsilon,
        "variant": p.repose.variant,
        "s_max": p.repose.s_max,
        "lambda_rot": p.repose.lambda_rot,
    }


# ----------------------------------------------------------------- scenes


def load_scene(path) -> Scene:
    """Load and fully validate a scene document.

    Parameter defaults: eta 0.01 m, beta 0.001 m, k1 1000, k2 10,
    zeta 0.006 m, 50 iterations max.
    """
    d = _read_json(path)
    ctx = str(path)
    _expect(
        d,
        ctx,
        required=("format_version", "name", "initial_joint_config", "initial_pose", "goal_contacts", "goal_pose"),
        optional=("hand", "hand_file", "object", "object_file", "params"),
    )
    _check_version(d, ctx)
    base = os.path.dirname(os.path.abspath(path))

    if ("hand" in d) == ("hand_file" in d):
        raise SceneLoadError(f"{ctx}: provide exactly one of 'hand' or 'hand_file'")
    if ("object" in d) == ("object_file" in d):
        raise SceneLoadError(f"{ctx}: provide exactly one of 'object' or 'object_file'")

    hand = hand_from_dict(d["hand"], f"{ctx}.hand") if "hand" in d else load_hand(os.path.join(base, d["hand_file"]))
    obj = (
        object_from_dict(d["object"], f"{ctx}.object")
        if "object" in d
        else load_object(os.path.join(base, d["object_file"]))
    )

    params = params_from_dict(d.get("params"), f"{ctx}.params")

    cfg_raw = d["initial_joint_config"]
    if not isinstance(cfg_raw, list) or len(cfg_raw) != hand.num_fingers:
        raise SceneLoadError(f"{ctx}.initial_joint_config: need one angle list per finger")
    angles = []
    for r, row in enumerate(cfg_raw):
        angles.append(_floats(row, hand.fingers[r].dof, f"{ctx}.initial_joint_config[{r}]"))
    config = JointConfig(tuple(angles))
    if not config.within_limits(hand, slack=1e-12):
        raise SceneLoadError(f"{ctx}.initial_joint_config: an angle violates its joint limits")

    pose = _transform(d["initial_pose"], f"{ctx}.initial_pose")
    goal_pose = _transform(d["goal_pose"], f"{ctx}.goal_pose")

    goals_raw = d["goal_contacts"]
    if not isinstance(goals_raw, list) or len(goals_raw) != hand.num_fingers:
        raise SceneLoadError(f"{ctx}.goal_contacts: need one contact per finger")
    goals = np.array([_floats(g, 3, f"{ctx}.goal_contacts[{r}]") for r, g in enumerate(goals_raw)])

    tol = params.gait.surface_tol
    sd = signed_distances_object(goals, obj, RigidTransform.identity())
    for r, s in enumerate(sd):
        if abs(s) > tol:
            raise SceneLoadError(f"{ctx}.goal_contacts[{r}]: point is {abs(s):.4f} m off the object surface")

    tips = np.array([fk_fingertip(hand, r, config.angles[r]).translation for r in range(hand.num_fingers)])
    grasp = Grasp(tips, pose.inverse().apply(tips), pose)
    for msg in grasp.check(obj, tol):
        raise SceneLoadError(f"{ctx}.initial_joint_config: initial grasp invalid: {msg}")

    proxies = []
    for r in range(hand.num_fingers):
        proxies.extend(fk_link_proxies(hand, r, config.angles[r]))
    if proxies:
        centers = np.array([c for c, _ in proxies])
        radii = np.array([rr for _, rr in proxies])
        clear = signed_distances_object(centers, obj, pose) - radii
        if float(np.min(clear)) < params.gait.beta - tol:
            raise SceneLoadError(
                f"{ctx}: initial link clearance {float(np.min(clear)) * 1e3:.2f} mm is below beta"
            )

    return Scene(
        hand=hand,
        object=obj,
        initial_joint_config=config,
        initial_pose=pose,
        goal_contacts_object_frame=goals,
        goal_pose=goal_pose,
        params=params,
        name=str(d["name"]),
    )


# ------------------------------------------------------------------ plans


def plan_to_dict(plan: Plan, params: PlannerParams = None):
    return {
        "format_version": FORMAT_VERSION,
        "scene": plan.scene_name,
        "variant": plan.variant,
        "status": plan.status,
        "iterations": plan.iterations,
        "wall_time": plan.wall_time,
        "params": params_to_dict(params) if params is not None else None,
        "steps": [
            {
                "kind": s.kind,
                "finger": s.finger,
                "joint_config": [a.tolist() for a in s.joint_config.angles],
                "object_pose": transform_to_dict(s.grasp.object_pose),
                "contacts_palm": s.grasp.contacts_palm.tolist(),
                "contacts_object": s.grasp.contacts_object.tolist(),
                "max_error": s.max_error,
                "avg_error": s.avg_error,
                "solver_status": s.solver_status,
                "goal_term_evals": s.goal_term_evals,
            }
            for s in plan.steps
        ],
    }


def save_plan(plan: Plan, path, params: PlannerParams = None):
    with open(path, "w") as fh:
        json.dump(plan_to_dict(plan, params), fh, indent=1)
        fh.write("\n")


def plan_from_dict(d, ctx="$") -> Plan:
    _expect(
        d,
        ctx,
        required=("format_version", "scene", "variant", "status", "iterations", "wall_time", "params", "steps"),
    )
    _check_version(d, ctx)
    steps = []
    if not isinstance(d["steps"], list) or not d["steps"]:
        raise SceneLoadError(f"{ctx}.steps: empty plan")
    for i, sd in enumerate(d["steps"]):
        sc = f"{ctx}.steps[{i}]"
        _expect(
            sd,
            sc,
            required=(
                "kind",
                "finger",
                "joint_config",
                "object_pose",
                "contacts_palm",
                "contacts_object",
                "max_error",
                "avg_error",
                "solver_status",
                "goal_term_evals",
            ),
        )
        if sd["kind"] not in ("initial", "gait", "repose", "ingrasp"):
            raise SceneLoadError(f"{sc}.kind: unknown step kind {sd['kind']!r}")
        if sd["kind"] == "gait" and sd["finger"] is None:
            raise SceneLoadError(f"{sc}: gait steps must name a finger")
        if sd["kind"] in ("repose", "ingrasp") and sd["finger"] is not None:
            raise SceneLoadError(f"{sc}: {sd['kind']} steps must not name a finger")
        try:
            cfg = JointConfig(tuple(np.asarray(a, dtype=float) for a in sd["joint_config"]))
            pose = _transform(sd["object_pose"], f"{sc}.object_pose")
            grasp = Grasp(
                np.asarray(sd["contacts_palm"], dtype=float),
                np.asarray(sd["contacts_object"], dtype=float),
                pose,
            )
        except SceneLoadError:
            raise
        except Exception as e:
            raise SceneLoadError(f"{sc}: {e}") from e
        steps.append(
            PlanStep(
                kind=str(sd["kind"]),
                finger=None if sd["finger"] is None else int(sd["finger"]),
                joint_config=cfg,
                grasp=grasp,
                max_error=float(sd["max_error"]),
                avg_error=float(sd["avg_error"]),
                solver_status=str(sd["solver_status"]),
                goal_term_evals=int(sd["goal_term_evals"]),
            )
        )
    return Plan(
        steps=steps,
        status=str(d["status"]),
        iterations=int(d["iterations"]),
        wall_time=float(d["wall_time"]),
        variant=str(d["variant"]),
        scene_name=str(d["scene"]),
    )


def load_plan(path) -> Plan:
    return plan_from_dict(_read_json(path), ctx=str(path))


def plans_equal(a: Plan, b: Plan) -> bool:
    """Field-for-field equality of two plans.

    Rotations pass through a quaternion when serialized; those four floats
    are compared within one round of that canonicalization (2e-15), all
    other floats exactly.
    """

    def eq(x, y, path=""):
        if isinstance(x, dict) and isinstance(y, dict):
            return x.keys() == y.keys() and all(eq(x[k], y[k], f"{path}.{k}") for k in x)
        if isinstance(x, list) and isinstance(y, list):
            if path.endswith("quaternion"):
                return len(x) == len(y) and all(abs(p - q) <= 2e-15 for p, q in zip(x, y))
            return len(x) == len(y) and all(eq(p, q, path) for p, q in zip(x, y))
        return x == y

    return eq(plan_to_dict(a), plan_to_dict(b))


# ----------------------------------------------------------------- metrics


def write_metrics_csv(plan: Plan, num_fingers: int, path):
    """Per-phase error trace: iteration, max_error_m, avg_error_m, phase."""
    rows = [(0, plan.steps[0].max_error, plan.steps[0].avg_error, "initial")]
    iteration = 0
    gaits = 0
    for step in plan.steps[1:]:
        if step.kind == "gait":
            gaits += 1
            if gaits == num_fingers:
                iteration += 1
                gaits = 0
                rows.append((iteration, step.max_error, step.avg_error, "gaits"))
        elif step.kind == "repose":
            rows.append((iteration, step.max_error, step.avg_error, "repose"))
        elif step.kind == "ingrasp":
            rows.append((iteration, step.max_error, step.avg_error, "ingrasp"))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "max_error_m", "avg_error_m", "phase"])
        for r in rows:
            w.writerow([r[0], repr(r[1]), repr(r[2]), r[3]])
    return len(rows)


def scene_params_with(scene: Scene, *, variant=None, max_iterations=None) -> PlannerParams:
    """Copy of the scene's parameters with CLI-style overrides applied."""
    p = scene.params
    if variant is not None:
        p = replace(p, repose=replace(p.repose, variant=variant))
    if max_iterations is not None:
        p = replace(p, max_iterations=max_iterations)
    return p
