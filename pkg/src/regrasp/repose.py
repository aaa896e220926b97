"""Object reposing: move the object with all fingers while holding contacts.

The full hand configuration is optimized. The object pose is tied to the
fingers through the held contacts: at any candidate configuration the pose
is the least-squares rigid fit of the stored object-frame contact points to
the current fingertip positions. Soft costs keep the fingertip set rigid
(grasp shape and per-fingertip orientation drift), a goal term pulls either
the desired contacts into the fingers' reachable workspaces ("sd" variant)
or the fitted pose toward an auxiliary goal pose ("svd" variant), and hard
constraints keep fingertips on the surface and links clear of the object.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, InputError
from .geometry import (
    ObjectModel,
    RigidTransform,
    closest_surface_point,
    rotation_angle,
    signed_distances_part,
)
from .kinematics import HandModel, JointConfig, fk_link_frames, fk_tip_raw
from .nlp import NLPProblem, NLPSolution, minimize

VARIANT_SD = "sd"
VARIANT_SVD = "svd"


@dataclass(frozen=True)
class ReposeParams:
    k1: float = 1000.0  # weight on grasp-shape preservation
    k2: float = 10.0  # weight on fingertip orientation drift
    variant: str = VARIANT_SVD
    beta: float = 0.001  # hand-object clearance, meters
    lambda_rot: float = 1e-4  # m^2/rad^2 inside the pose error metric
    s_max: float = 0.003  # accepted per-repose contact slip, meters
    surface_tol: float = 1e-4

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0:
            raise InputError("ReposeParams: k1, k2 must be >= 0")
        if self.variant not in (VARIANT_SD, VARIANT_SVD):
            raise InputError(f"ReposeParams: unknown variant '{self.variant}'")
        if self.beta <= 0:
            raise InputError("ReposeParams: beta must be > 0")


@dataclass
class ReposeResult:
    ok: bool
    theta: JointConfig
    object_pose: RigidTransform
    contacts_palm: np.ndarray
    contacts_object: np.ndarray
    slips: np.ndarray
    slip_violations: list
    solution: NLPSolution
    goal_term_evals: int = 0


def kabsch_transform(src, dst) -> RigidTransform:
    """Least-squares rigid transform mapping point set ``src`` onto ``dst``.

    Singular-value decomposition of the cross-covariance; a reflection in
    the fit is corrected by flipping the smallest singular direction so the
    result is always a proper rotation.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise InputError("kabsch_transform: point lists must both be (n, 3)")
    if len(src) < 3:
        raise InputError("kabsch_transform: need at least 3 correspondences")
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    a = src - cs
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1e-12):
        raise DegenerateGeometryError("kabsch_transform: source points are collinear")
    h = a.T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rot, cd - rot @ cs)


def kabsch_rotation(src, dst):
    """Rotation part of the Kabsch fit, skipping the transform wrapper."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    h = (src - src.mean(axis=0)).T @ (dst - dst.mean(axis=0))
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    return vt.T @ np.diag([1.0, 1.0, d]) @ u.T


def kabsch_residual(src, dst, transform: RigidTransform) -> float:
    """Sum of squared correspondence errors under a rigid transform."""
    diff = transform.apply(np.asarray(src, dtype=float)) - np.asarray(dst, dtype=float)
    return float(np.sum(diff * diff))


def workspace_gap_cost(workspaces, goals_palm) -> float:
    """How far desired contacts stick out of the fingers' reachable
    workspaces: sum over fingers of max(0, signed distance to the hull)."""
    goals_palm = np.asarray(goals_palm, dtype=float)
    if len(workspaces) != len(goals_palm):
        raise InputError("workspace_gap_cost: length mismatch")
    total = 0.0
    for ws, g in zip(workspaces, goals_palm):
        total += max(0.0, float(signed_distances_part(g, ws.hull)))
    return total


def pose_error_cost(pose: RigidTransform, goal: RigidTransform, lambda_rot: float) -> float:
    """Squared translation error plus weighted squared geodesic rotation angle."""
    dt = pose.translation - goal.translation
    ang = rotation_angle(pose.rotation.T @ goal.rotation)
    return float(dt @ dt) + lambda_rot * ang * ang


def auxiliary_goal_pose(current_contacts, goal_contacts_object_frame, current_pose: RigidTransform) -> RigidTransform:
    """Object pose that best aligns the desired contacts with the fingers.

    Fits the goal contacts (object frame) onto the current contacts
    (object frame) and composes with the current pose; moving the object
    there places the desired contacts as close as possible, in the
    least-squares sense, to where the fingertips already are.
    """
    current_contacts = np.asarray(current_contacts, dtype=float)
    contacts_obj = current_pose.inverse().apply(current_contacts)
    fit = kabsch_transform(np.asarray(goal_contacts_object_frame, dtype=float), contacts_obj)
    return current_pose @ fit


def relaxed_rigidity_costs(hand: HandModel, theta: JointConfig, theta0: JointConfig):
    """Grasp-shape and fingertip-orientation drift between two configurations.

    Returns (pos_cost m^2, or_cost rad^2). pos_cost sums squared changes of
    pairwise fingertip distances; or_cost sums squared angles by which each
    fingertip frame rotated relative to the best rigid rotation of the whole
    fingertip set. Both are exactly zero under any rigid motion of the full
    fingertip set.
    """
    tips, rots = _tips_and_rotations(hand, theta)
    tips0, rots0 = _tips_and_rotations(hand, theta0)
    return _rigidity_from_tips(tips, rots, tips0, rots0)


def _tips_and_rotations(hand, config: JointConfig):
    tips = np.empty((hand.num_fingers, 3))
    rots = np.empty((hand.num_fingers, 3, 3))
    for r in range(hand.num_fingers):
        frames = fk_link_frames(hand, r, config.angles[r])
        tipf = frames[-1] @ hand.fingers[r].tip_offset
        tips[r] = tipf.translation
        rots[r] = tipf.rotation
    return tips, rots


def _pairwise_distances(tips):
    m = len(tips)
    iu = np.triu_indices(m, k=1)
    diff = tips[iu[0]] - tips[iu[1]]
    return np.linalg.norm(diff, axis=1)


def _rigidity_from_tips(tips, rots, tips0, rots0):
    d = _pairwise_distances(tips)
    d0 = _pairwise_distances(tips0)
    pos_cost = float(np.sum((d - d0) ** 2))

    rg = kabsch_rotation(tips0, tips)
    or_cost = 0.0
    for r in range(len(tips)):
        ang = rotation_angle(rots0[r] @ rots[r].T @ rg)
        or_cost += ang * ang
    return pos_cost, or_cost


class _HandGeom:
    """Caches full-hand FK plus the contact-fit object pose at one point.

    Works on raw rotation/translation arrays; the pose is wrapped into a
    RigidTransform only once, after the solve.
    """

    def __init__(self, hand, obj, contacts_object):
        self.hand = hand
        self.obj = obj
        self.contacts_object = np.asarray(contacts_object, dtype=float)
        self._src_mean = self.contacts_object.mean(axis=0)
        self._src_centered = self.contacts_object - self._src_mean
        self.slices = []
        k = 0
        for f in hand.fingers:
            self.slices.append(slice(k, k + f.dof))
            k += f.dof
        self.proxy_map = []  # (finger, link, local center)
        radii = []
        for r, f in enumerate(hand.fingers):
            for link in range(f.dof - 1):
                for proxy in f.link_proxies[link]:
                    self.proxy_map.append((r, link, proxy.local_center))
                    radii.append(proxy.radius)
        self.proxy_radii = np.asarray(radii, dtype=float)
        # beyond the largest radius plus a wide clearance margin the exact
        # distance can never matter to the collision constraint
        self._far_band = float(self.proxy_radii.max() if len(radii) else 0.0) + 0.02
        self._key = None

    def _fit_pose(self, tips):
        cd = tips.mean(axis=0)
        h = self._src_centered.T @ (tips - cd)
        u, _, vt = np.linalg.svd(h)
        d = np.sign(np.linalg.det(vt.T @ u.T))
        rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
        return rot, cd - rot @ self._src_mean

    def _update(self, x):
        key = x.tobytes()
        if key == self._key:
            return
        m = self.hand.num_fingers
        tips = np.empty((m, 3))
        rots = np.empty((m, 3, 3))
        all_frames = []
        for r in range(m):
            f = self.hand.fingers[r]
            rot, pos, frames = fk_tip_raw(f, x[self.slices[r]])
            tips[r] = pos
            rots[r] = rot
            all_frames.append(frames)
        self.tips = tips
        self.rots = rots
        self.pose_r, self.pose_t = self._fit_pose(tips)

        k = len(self.proxy_radii)
        pts = np.empty((k + m, 3))
        for i, (r, link, center) in enumerate(self.proxy_map):
            rot, pos = all_frames[r][link]
            pts[i] = rot @ center + pos
        pts[k:] = tips
        local = (pts - self.pose_t) @ self.pose_r
        proxy_sd = np.full(k, np.inf)
        tip_sd = np.full(m, np.inf)
        for part in self.obj.parts:
            # proxies only need accuracy near the clearance band
            proxy_sd = np.minimum(proxy_sd, signed_distances_part(local[:k], part, far_band=self._far_band))
            tip_sd = np.minimum(tip_sd, signed_distances_part(local[k:], part))
        self.proxy_sd = proxy_sd - self.proxy_radii
        self.tip_sd = tip_sd
        self._key = key

    def bundle(self, x):
        self._update(x)
        return self

    def pose_transform(self, x) -> RigidTransform:
        self._update(x)
        return RigidTransform(self.pose_r.copy(), self.pose_t.copy())


def _solve_repose(
    hand,
    obj,
    config0: JointConfig,
    contacts_object,
    pose0: RigidTransform,
    params: ReposeParams,
    goal_term,
    *,
    feas_tol,
    opt_tol,
    max_outer,
    inner_maxiter,
) -> ReposeResult:
    """Shared machinery for both reposing variants and the in-grasp move.

    ``goal_term(geom)`` returns the goal cost for the current FK bundle and
    is also responsible for counting its elementary evaluations.
    """
    m = hand.num_fingers
    if len(contacts_object) != m:
        raise InputError("repose: one stored contact per finger required")
    geom = _HandGeom(hand, obj, contacts_object)
    x0 = config0.stacked()

    tips0, rots0 = _tips_and_rotations(hand, config0)
    kabsch_transform(contacts_object, tips0)  # raises on degenerate contact sets
    d0 = _pairwise_distances(tips0)
    beta = params.beta
    iu = np.triu_indices(m, k=1)

    def objective(x):
        g = geom.bundle(x)
        diff = g.tips[iu[0]] - g.tips[iu[1]]
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        pos_cost = float(np.sum((d - d0) ** 2))
        rg = kabsch_rotation(tips0, g.tips)
        or_cost = 0.0
        for r in range(m):
            ang = rotation_angle(rots0[r] @ g.rots[r].T @ rg)
            or_cost += ang * ang
        return goal_term(g) + params.k1 * pos_cost + params.k2 * or_cost

    def collision_eq(x):
        g = geom.bundle(x)
        if g.proxy_sd.size == 0:
            return 0.0
        return float(np.sum(np.maximum(0.0, beta - g.proxy_sd)))

    def surface_eq(r):
        def fn(x):
            return float(geom.bundle(x).tip_sd[r])

        return fn

    lo = np.concatenate([f.limits()[0] for f in hand.fingers])
    hi = np.concatenate([f.limits()[1] for f in hand.fingers])
    problem = NLPProblem(
        dim=len(x0),
        objective=objective,
        eq_constraints=[collision_eq] + [surface_eq(r) for r in range(m)],
        ineq_constraints=[],
        lower=lo,
        upper=hi,
    )
    sol = minimize(problem, x0, max_outer=max_outer, feas_tol=feas_tol, opt_tol=opt_tol, inner_maxiter=inner_maxiter)

    ok = bool(sol.ok and sol.max_violation <= feas_tol)
    if not ok:
        return ReposeResult(
            ok=False,
            theta=config0,
            object_pose=pose0,
            contacts_palm=pose0.apply(np.asarray(contacts_object, dtype=float)),
            contacts_object=np.asarray(contacts_object, dtype=float).copy(),
            slips=np.zeros(m),
            slip_violations=[],
            solution=sol,
        )

    config = JointConfig.from_stacked(hand, sol.x)
    g = geom.bundle(sol.x)
    new_pose = geom.pose_transform(sol.x)
    inv = new_pose.inverse()

    contacts_object = np.asarray(contacts_object, dtype=float)
    new_obj = np.empty_like(contacts_object)
    slips = np.empty(m)
    violations = []
    for r in range(m):
        cand = inv.apply(g.tips[r])
        if abs(g.tip_sd[r]) > params.surface_tol:
            cand = inv.apply(closest_surface_point(g.tips[r], geom.obj, new_pose))
        slip = float(np.linalg.norm(cand - contacts_object[r]))
        slips[r] = slip
        if slip <= params.s_max:
            new_obj[r] = cand
        else:
            # keep the stored contact; report instead of silently sliding
            new_obj[r] = contacts_object[r]
            violations.append((r, slip))

    return ReposeResult(
        ok=True,
        theta=config,
        object_pose=new_pose,
        contacts_palm=new_pose.apply(new_obj),
        contacts_object=new_obj,
        slips=slips,
        slip_violations=violations,
        solution=sol,
    )


def repose_object(
    hand: HandModel,
    obj: ObjectModel,
    config0: JointConfig,
    contacts_object,
    pose0: RigidTransform,
    goals_object,
    workspaces,
    params: ReposeParams,
    *,
    feas_tol=1e-4,
    opt_tol=1e-6,
    max_outer=5,
    inner_maxiter=30,
) -> ReposeResult:
    """Move the object so the desired contacts become reachable.

    ``goals_object`` are the desired contact points in the object frame.
    The "sd" variant penalizes goals outside the per-finger reachable
    workspace hulls; the "svd" variant pulls the fitted object pose toward
    the auxiliary pose that best aligns goals with the current fingertips.
    """
    goals_object = np.asarray(goals_object, dtype=float)
    counter = [0]

    if params.variant == VARIANT_SD:
        if workspaces is None or len(workspaces) != hand.num_fingers:
            raise InputError("repose_object: sd variant needs one workspace per finger")

        def goal_term(g):
            counter[0] += hand.num_fingers
            return workspace_gap_cost(workspaces, goals_object @ g.pose_r.T + g.pose_t)

    else:
        contacts_palm0 = pose0.apply(np.asarray(contacts_object, dtype=float))
        aux = auxiliary_goal_pose(contacts_palm0, goals_object, pose0)
        aux_r, aux_t = aux.rotation, aux.translation

        def goal_term(g):
            counter[0] += 1
            dt = g.pose_t - aux_t
            ang = rotation_angle(g.pose_r.T @ aux_r)
            return float(dt @ dt) + params.lambda_rot * ang * ang

    res = _solve_repose(
        hand,
        obj,
        config0,
        contacts_object,
        pose0,
        params,
        goal_term,
        feas_tol=feas_tol,
        opt_tol=opt_tol,
        max_outer=max_outer,
        inner_maxiter=inner_maxiter,
    )
    res.goal_term_evals = counter[0]
    return res


def in_grasp_to_pose(
    hand: HandModel,
    obj: ObjectModel,
    config0: JointConfig,
    contacts_object,
    pose0: RigidTransform,
    goal_pose: RigidTransform,
    params: ReposeParams,
    *,
    feas_tol=1e-4,
    opt_tol=1e-6,
    max_outer=5,
    inner_maxiter=30,
) -> ReposeResult:
    """Move the object toward a desired pose while holding all contacts."""
    counter = [0]
    goal_r, goal_t = goal_pose.rotation, goal_pose.translation

    def goal_term(g):
        counter[0] += 1
        dt = g.pose_t - goal_t
        ang = rotation_angle(g.pose_r.T @ goal_r)
        return float(dt @ dt) + params.lambda_rot * ang * ang

    res = _solve_repose(
        hand,
        obj,
        config0,
        contacts_object,
        pose0,
        params,
        goal_term,
        feas_tol=feas_tol,
        opt_tol=opt_tol,
        max_outer=max_outer,
        inner_maxiter=inner_maxiter,
    )
    res.goal_term_evals = counter[0]
    return res
