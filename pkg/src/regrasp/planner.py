"""Regrasp planner: alternate per-finger gaits with object reposing.

Starting from a valid grasp, each iteration relocates every finger once (in
a fixed gait order) toward its desired contact on the object, then reposes
the object if the contact error is still above the termination threshold.
After the loop a final in-grasp move drives the object toward the desired
pose. An independent validator re-checks every emitted step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError
from .gait import GaitParams, plan_finger_gait
from .geometry import ObjectModel, RigidTransform, signed_distances_object
from .kinematics import HandModel, JointConfig, fk_fingertip, fk_link_proxies
from .repose import ReposeParams, in_grasp_to_pose, repose_object
from .workspace import estimate_workspace

STATUS_REACHED = "reached"
STATUS_ITERATION_LIMIT = "iteration-limit"
STATUS_STALLED = "stalled"

KIND_INITIAL = "initial"
KIND_GAIT = "gait"
KIND_REPOSE = "repose"
KIND_INGRASP = "ingrasp"

# slack on the per-iteration error monotonicity check (meters)
MONOTONE_SLACK = 1e-3


@dataclass(frozen=True)
class Grasp:
    """Planner state: per-finger contacts (palm and object frame) + pose."""

    contacts_palm: np.ndarray
    contacts_object: np.ndarray
    object_pose: RigidTransform

    def __post_init__(self):
        cp = np.asarray(self.contacts_palm, dtype=float)
        co = np.asarray(self.contacts_object, dtype=float)
        if cp.ndim != 2 or cp.shape[1] != 3 or cp.shape != co.shape:
            raise InputError("Grasp: contact arrays must both be (m, 3)")
        cp.setflags(write=False)
        co.setflags(write=False)
        object.__setattr__(self, "contacts_palm", cp)
        object.__setattr__(self, "contacts_object", co)

    def check(self, obj: ObjectModel, surface_tol: float):
        """Verify frame agreement and on-surface contacts; returns messages."""
        problems = []
        mapped = self.object_pose.apply(self.contacts_object)
        err = np.linalg.norm(mapped - self.contacts_palm, axis=1)
        for r, e in enumerate(err):
            if e > surface_tol:
                problems.append(f"contact {r}: palm/object frame disagreement {e:.2e} m")
        sd = signed_distances_object(self.contacts_palm, obj, self.object_pose)
        for r, s in enumerate(sd):
            if abs(s) > surface_tol:
                problems.append(f"contact {r}: {abs(s):.2e} m off the object surface")
        return problems


@dataclass(frozen=True)
class PlannerParams:
    zeta: float = 0.006  # max contact error at which the loop stops, meters
    max_iterations: int = 50
    gait: GaitParams = field(default_factory=GaitParams)
    repose: ReposeParams = field(default_factory=ReposeParams)
    stall_epsilon: float = 0.0  # 0 disables the stall early-exit

    def __post_init__(self):
        if self.zeta <= 0:
            raise InputError("PlannerParams: zeta must be > 0")
        if not (1 <= self.max_iterations <= 50):
            raise InputError("PlannerParams: max_iterations must be in [1, 50]")


@dataclass
class PlanStep:
    kind: str
    finger: int | None
    joint_config: JointConfig
    grasp: Grasp
    max_error: float
    avg_error: float
    solver_status: str
    goal_term_evals: int = 0


@dataclass
class Plan:
    steps: list
    status: str
    iterations: int
    wall_time: float
    variant: str = "svd"
    scene_name: str = ""


@dataclass
class Violation:
    step: int
    kind: str
    message: str


@dataclass
class ValidationReport:
    passed: bool
    violations: list
    warnings: list

    def summary(self):
        return f"violations={len(self.violations)} warnings={len(self.warnings)}"


def max_point_error(contacts, goals) -> float:
    """Largest per-finger Euclidean distance between contacts and goals."""
    contacts = np.asarray(contacts, dtype=float)
    goals = np.asarray(goals, dtype=float)
    if contacts.shape != goals.shape:
        raise InputError("max_point_error: length mismatch")
    return float(np.max(np.linalg.norm(contacts - goals, axis=1)))


def average_point_error(contacts, goals) -> float:
    """Mean per-finger Euclidean distance between contacts and goals."""
    contacts = np.asarray(contacts, dtype=float)
    goals = np.asarray(goals, dtype=float)
    if contacts.shape != goals.shape:
        raise InputError("average_point_error: length mismatch")
    return float(np.mean(np.linalg.norm(contacts - goals, axis=1)))


def select_gait_pattern(grasp: Grasp, goals_object, hand: HandModel):
    """Fixed finger order for the whole plan.

    When the index finger's desired contact is farther from the middle
    fingertip than from the index fingertip, gait index first:
    [index, middle, ring, thumb]; otherwise [thumb, ring, middle, index].
    Ties take the second pattern.
    """
    for role in ("index", "middle", "ring", "thumb"):
        if role not in hand.finger_roles:
            raise ConfigurationError(f"select_gait_pattern: hand lacks the '{role}' role")
    idx = hand.role_index("index")
    mid = hand.role_index("middle")
    goal_index = grasp.object_pose.apply(np.asarray(goals_object, dtype=float)[idx])
    d_mid = float(np.linalg.norm(goal_index - grasp.contacts_palm[mid]))
    d_idx = float(np.linalg.norm(goal_index - grasp.contacts_palm[idx]))
    if d_mid > d_idx:
        roles = ("index", "middle", "ring", "thumb")
    else:
        roles = ("thumb", "ring", "middle", "index")
    return [hand.role_index(r) for r in roles]


def _errors(grasp: Grasp, goals_object):
    goals_palm = grasp.object_pose.apply(goals_object)
    return (
        max_point_error(grasp.contacts_palm, goals_palm),
        average_point_error(grasp.contacts_palm, goals_palm),
    )


def plan_regrasp(scene, params: PlannerParams = None, variant: str = None) -> Plan:
    """Run the alternating gait/repose loop on a loaded scene.

    ``scene`` provides hand, object, the initial configuration and pose,
    desired contacts (object frame) and a desired final object pose. The
    loop stops when the max contact error drops below zeta, the iteration
    cap hits, or (when enabled) progress stalls; the terminal in-grasp move
    runs unconditionally.
    """
    t0 = time.perf_counter()
    params = params or scene.params
    repose_params = params.repose
    if variant is not None:
        from dataclasses import replace

        repose_params = replace(repose_params, variant=variant)

    hand: HandModel = scene.hand
    obj: ObjectModel = scene.object
    goals_object = np.asarray(scene.goal_contacts_object_frame, dtype=float)

    config = scene.initial_joint_config
    pose = scene.initial_pose
    tips = np.array([fk_fingertip(hand, r, config.angles[r]).translation for r in range(hand.num_fingers)])
    grasp = Grasp(tips, pose.inverse().apply(tips), pose)

    bad = grasp.check(obj, params.gait.surface_tol)
    if bad:
        raise InputError("plan_regrasp: initial grasp invalid: " + "; ".join(bad))

    workspaces = None
    if repose_params.variant == "sd":
        workspaces = [estimate_workspace(hand, r) for r in range(hand.num_fingers)]

    pattern = select_gait_pattern(grasp, goals_object, hand)

    max_err, avg_err = _errors(grasp, goals_object)
    steps = [PlanStep(KIND_INITIAL, None, config, grasp, max_err, avg_err, "initial")]

    err_history = [max_err]
    stalled = False
    n = 0
    while max_err > params.zeta and n < params.max_iterations:
        for r in pattern:
            goal_palm = grasp.object_pose.apply(goals_object[r])
            res = plan_finger_gait(hand, obj, grasp.object_pose, config.angles[r], r, goal_palm, params.gait)
            if res.ok:
                config = config.replace_finger(r, res.theta_r)
                cp = grasp.contacts_palm.copy()
                cp[r] = res.new_contact
                co = grasp.contacts_object.copy()
                co[r] = grasp.object_pose.inverse().apply(res.new_contact)
                grasp = Grasp(cp, co, grasp.object_pose)
            max_err, avg_err = _errors(grasp, goals_object)
            steps.append(PlanStep(KIND_GAIT, r, config, grasp, max_err, avg_err, res.solution.status))

        max_err, avg_err = _errors(grasp, goals_object)
        if max_err > params.zeta:
            res = repose_object(
                hand,
                obj,
                config,
                grasp.contacts_object,
                grasp.object_pose,
                goals_object,
                workspaces,
                repose_params,
            )
            if res.ok:
                config = res.theta
                grasp = Grasp(res.contacts_palm, res.contacts_object, res.object_pose)
            max_err, avg_err = _errors(grasp, goals_object)
            steps.append(
                PlanStep(
                    KIND_REPOSE,
                    None,
                    config,
                    grasp,
                    max_err,
                    avg_err,
                    res.solution.status,
                    goal_term_evals=res.goal_term_evals,
                )
            )

        n += 1
        err_history.append(max_err)
        if params.stall_epsilon > 0 and len(err_history) >= 4:
            recent = err_history[-4:]
            if all(recent[i] - recent[i + 1] < params.stall_epsilon for i in range(3)):
                stalled = True
                break

    res = in_grasp_to_pose(
        hand, obj, config, grasp.contacts_object, grasp.object_pose, scene.goal_pose, repose_params
    )
    if res.ok:
        config = res.theta
        grasp = Grasp(res.contacts_palm, res.contacts_object, res.object_pose)
    max_err, avg_err = _errors(grasp, goals_object)
    steps.append(
        PlanStep(
            KIND_INGRASP,
            None,
            config,
            grasp,
            max_err,
            avg_err,
            res.solution.status,
            goal_term_evals=res.goal_term_evals,
        )
    )

    if max_err <= params.zeta:
        status = STATUS_REACHED
    elif stalled:
        status = STATUS_STALLED
    else:
        status = STATUS_ITERATION_LIMIT

    return Plan(
        steps=steps,
        status=status,
        iterations=n,
        wall_time=time.perf_counter() - t0,
        variant=repose_params.variant,
        scene_name=scene.name,
    )


def iteration_boundaries(plan: Plan, num_fingers: int):
    """Indices of the step that closes each planner iteration.

    An iteration ends at its repose step, or at its last gait step when no
    repose followed (error already below the threshold).
    """
    ends = []
    gaits_seen = 0
    for i, step in enumerate(plan.steps):
        if step.kind == KIND_GAIT:
            gaits_seen += 1
            if gaits_seen == num_fingers:
                nxt = plan.steps[i + 1].kind if i + 1 < len(plan.steps) else None
                if nxt != KIND_REPOSE:
                    ends.append(i)
                gaits_seen = 0
        elif step.kind == KIND_REPOSE:
            ends.append(i)
            gaits_seen = 0
    return ends


def validate_plan(plan: Plan, scene, *, feas_tol=1e-4) -> ValidationReport:
    """Independently re-check every step of a plan against the scene.

    Hard violations: joint limits, fingertips off the object surface,
    link clearance below beta, gait steps longer than eta, error-metric
    bookkeeping, and per-iteration error growth beyond 1 mm. Warnings:
    clearance dips along interpolated gait motion and finger-finger proxy
    overlaps.
    """
    if plan.scene_name and scene.name and plan.scene_name != scene.name:
        raise InputError(f"validate_plan: plan built for scene '{plan.scene_name}', got '{scene.name}'")
    hand: HandModel = scene.hand
    obj: ObjectModel = scene.object
    params: PlannerParams = scene.params
    goals_object = np.asarray(scene.goal_contacts_object_frame, dtype=float)
    eta = params.gait.eta
    beta = params.gait.beta
    surface_tol = params.gait.surface_tol

    violations = []
    warnings = []

    if len(plan.steps) > 2 + params.max_iterations * (hand.num_fingers + 1):
        violations.append(Violation(-1, "structure", "more steps than the iteration cap allows"))

    for i, step in enumerate(plan.steps):
        cfg = step.joint_config
        grasp = step.grasp

        if not cfg.within_limits(hand, slack=1e-9):
            violations.append(Violation(i, "joint-limit", "a joint angle exceeds its limits"))

        tips = np.array([fk_fingertip(hand, r, cfg.angles[r]).translation for r in range(hand.num_fingers)])
        sd = signed_distances_object(tips, obj, grasp.object_pose)
        for r, s in enumerate(sd):
            if abs(s) > surface_tol + 1e-9:
                violations.append(
                    Violation(i, "surface", f"finger {r} fingertip {abs(s):.2e} m off the surface")
                )

        for msg in grasp.check(obj, surface_tol + 1e-9):
            violations.append(Violation(i, "grasp-state", msg))

        proxies = []
        for r in range(hand.num_fingers):
            proxies.extend((r,) + p for p in fk_link_proxies(hand, r, cfg.angles[r]))
        if proxies:
            centers = np.array([c for _, c, _ in proxies])
            radii = np.array([rad for _, _, rad in proxies])
            clear = signed_distances_object(centers, obj, grasp.object_pose) - radii
            worst = float(np.min(clear))
            if worst < beta - feas_tol - 1e-9:
                violations.append(Violation(i, "clearance", f"link clearance {worst * 1e3:.2f} mm < beta"))
            # finger-finger proxy overlap is reported, never failed
            for a in range(len(proxies)):
                for b in range(a + 1, len(proxies)):
                    if proxies[a][0] == proxies[b][0]:
                        continue
                    gap = np.linalg.norm(centers[a] - centers[b]) - radii[a] - radii[b]
                    if gap < 0:
                        warnings.append(
                            Violation(i, "self-collision", f"fingers {proxies[a][0]}/{proxies[b][0]} proxies overlap")
                        )

        goals_palm = grasp.object_pose.apply(goals_object)
        if abs(step.max_error - max_point_error(grasp.contacts_palm, goals_palm)) > 1e-12:
            violations.append(Violation(i, "bookkeeping", "recorded max_error does not match the grasp"))
        if abs(step.avg_error - average_point_error(grasp.contacts_palm, goals_palm)) > 1e-12:
            violations.append(Violation(i, "bookkeeping", "recorded avg_error does not match the grasp"))

        if step.kind == KIND_GAIT:
            if step.finger is None:
                violations.append(Violation(i, "structure", "gait step without a finger index"))
                continue
            prev = plan.steps[i - 1]
            r = step.finger
            for q in range(hand.num_fingers):
                if q != r and not np.array_equal(prev.joint_config.angles[q], cfg.angles[q]):
                    violations.append(Violation(i, "static-finger", f"finger {q} moved during finger {r}'s gait"))
            tip_prev = fk_fingertip(hand, r, prev.joint_config.angles[r]).translation
            tip_new = fk_fingertip(hand, r, cfg.angles[r]).translation
            disp = float(np.linalg.norm(tip_new - tip_prev))
            if disp > eta + feas_tol + 1e-9:
                violations.append(Violation(i, "stability", f"gait displacement {disp * 1e3:.2f} mm > eta"))
            # clearance along the interpolated motion, diagnostic only
            for t in np.linspace(0.1, 0.9, 10):
                th = (1 - t) * prev.joint_config.angles[r] + t * cfg.angles[r]
                mid = fk_link_proxies(hand, r, th)
                if mid:
                    c = np.array([p for p, _ in mid])
                    rr = np.array([rad for _, rad in mid])
                    clear = signed_distances_object(c, obj, grasp.object_pose) - rr
                    if float(np.min(clear)) < beta - feas_tol - 1e-9:
                        warnings.append(
                            Violation(i, "interpolated-clearance", f"finger {r} dips below beta mid-gait")
                        )
                        break
        elif step.kind in (KIND_REPOSE, KIND_INGRASP):
            if step.finger is not None:
                violations.append(Violation(i, "structure", f"{step.kind} step should not name a finger"))

    ends = iteration_boundaries(plan, hand.num_fingers)
    errs = [plan.steps[0].max_error] + [plan.steps[i].max_error for i in ends]
    for k in range(1, len(errs)):
        if errs[k] > errs[k - 1] + MONOTONE_SLACK:
            violations.append(
                Violation(ends[k - 1], "monotonicity", f"iteration error rose {errs[k - 1]:.4f} -> {errs[k]:.4f} m")
            )

    return ValidationReport(passed=not violations, violations=violations, warnings=warnings)
