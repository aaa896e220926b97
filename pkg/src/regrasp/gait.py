"""Single-finger gait: relocate one fingertip toward a goal contact point.

The object and all other fingers stay fixed. The moving finger's joint
angles are optimized to pull the fingertip toward the goal while staying on
the object surface, keeping its non-fingertip links clear of the object,
and bounding the fingertip step length so the grasp stays close to the
previous (stable) one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .geometry import ObjectModel, RigidTransform, clearance_penalty, signed_distances_object, signed_distances_part
from .kinematics import HandModel, fk_fingertip, fk_link_proxies, fk_tip_raw
from .nlp import NLPProblem, NLPSolution, minimize

# shrink on the fingertip step bound so solver slack never pushes the
# realized displacement past the nominal limit
STEP_MARGIN = 2e-4


@dataclass(frozen=True)
class GaitParams:
    eta: float = 0.01  # max fingertip step per gait, meters
    beta: float = 0.001  # link clearance from the object, meters
    surface_tol: float = 1e-4  # |signed distance| accepted as "on surface"

    def __post_init__(self):
        if self.eta <= 0 or self.beta <= 0 or self.surface_tol <= 0:
            raise InputError("GaitParams: eta, beta, surface_tol must be > 0")


@dataclass
class GaitResult:
    ok: bool
    theta_r: np.ndarray
    new_contact: np.ndarray
    cost: float
    solution: NLPSolution


def gait_distance_cost(hand: HandModel, finger: int, theta_r, goal) -> float:
    """Squared Euclidean distance from the fingertip to the goal point."""
    tip = fk_fingertip(hand, finger, theta_r).translation
    d = tip - np.asarray(goal, dtype=float)
    return float(d @ d)


def collision_cost(hand: HandModel, finger: int, theta_r, obj: ObjectModel, pose: RigidTransform, beta: float) -> float:
    """Sum of clamped clearance shortfalls over the finger's non-fingertip
    link proxies; zero iff every proxy clears the object by at least beta."""
    proxies = fk_link_proxies(hand, finger, theta_r)
    if not proxies:
        return 0.0
    centers = np.array([c for c, _ in proxies])
    radii = np.array([r for _, r in proxies])
    sd = signed_distances_object(centers, obj, pose) - radii
    return float(sum(clearance_penalty(s, beta) for s in sd))


def stability_constraint(hand: HandModel, finger: int, theta_r, theta_r0) -> float:
    """Squared fingertip displacement from the pre-gait configuration."""
    tip = fk_fingertip(hand, finger, theta_r).translation
    tip0 = fk_fingertip(hand, finger, theta_r0).translation
    d = tip - tip0
    return float(d @ d)


class _FingerGeom:
    """Caches FK products for the moving finger at the last query point.

    The object pose is fixed during a gait, so points are mapped into the
    object frame with a precomputed inverse and queried per part directly.
    """

    def __init__(self, hand, finger, obj, pose):
        self.fmodel = hand.fingers[finger]
        self.obj = obj
        self._rinv = pose.rotation.T
        self._tinv = -self._rinv @ pose.translation
        self.proxy_links = []
        radii = []
        for link in range(self.fmodel.dof - 1):
            for proxy in self.fmodel.link_proxies[link]:
                self.proxy_links.append((link, proxy.local_center))
            radii.extend(p.radius for p in self.fmodel.link_proxies[link])
        self.proxy_radii = np.asarray(radii, dtype=float)
        self._far_band = float(self.proxy_radii.max() if radii else 0.0) + 0.02
        self._key = None
        self._tip = None
        self._tip_sd = None
        self._proxy_sd = None

    def _update(self, theta):
        key = theta.tobytes()
        if key == self._key:
            return
        _, tip, frames = fk_tip_raw(self.fmodel, theta)
        self._tip = tip
        k = len(self.proxy_links)
        pts = np.empty((k + 1, 3))
        for i, (link, center) in enumerate(self.proxy_links):
            rot, pos = frames[link]
            pts[i] = rot @ center + pos
        pts[-1] = tip
        local = pts @ self._rinv.T + self._tinv
        proxy_sd = np.full(k, np.inf)
        tip_sd = np.inf
        for part in self.obj.parts:
            proxy_sd = np.minimum(proxy_sd, signed_distances_part(local[:k], part, far_band=self._far_band))
            tip_sd = min(tip_sd, float(signed_distances_part(local[-1], part)))
        self._proxy_sd = proxy_sd - self.proxy_radii
        self._tip_sd = tip_sd
        self._key = key

    def tip(self, theta):
        self._update(theta)
        return self._tip

    def tip_sd(self, theta):
        self._update(theta)
        return self._tip_sd

    def proxy_sd(self, theta):
        self._update(theta)
        return self._proxy_sd


def plan_finger_gait(
    hand: HandModel,
    obj: ObjectModel,
    pose: RigidTransform,
    theta_r0,
    finger: int,
    goal,
    params: GaitParams,
    *,
    feas_tol=1e-4,
    opt_tol=1e-6,
    max_outer=8,
    inner_maxiter=50,
) -> GaitResult:
    """Relocate one fingertip toward ``goal`` (palm frame, on the surface).

    On success the returned contact lies on the object surface, the finger's
    links clear the object, the fingertip moved at most ``eta``, and the new
    contact is no farther from the goal than the old one. On failure the
    caller keeps the previous configuration.
    """
    f = hand.fingers[finger]
    theta0 = np.asarray(theta_r0, dtype=float)
    if theta0.shape != (f.dof,):
        raise InputError("plan_finger_gait: theta_r0 length mismatch")
    goal = np.asarray(goal, dtype=float)

    geom = _FingerGeom(hand, finger, obj, pose)
    tip0 = fk_fingertip(hand, finger, theta0).translation
    old_dist = float(np.linalg.norm(tip0 - goal))

    eta_eff = max(params.eta - STEP_MARGIN, 0.5 * params.eta)
    beta = params.beta

    def objective(th):
        d = geom.tip(th) - goal
        return float(d @ d)

    def surface_eq(th):
        return float(geom.tip_sd(th))

    def collision_eq(th):
        sd = geom.proxy_sd(th)
        return float(np.sum(np.maximum(0.0, beta - sd)))

    def step_ineq(th):
        d = geom.tip(th) - tip0
        # normalized to meters so feas_tol acts on the displacement itself
        return (float(d @ d) - eta_eff**2) / (2.0 * eta_eff)

    lo, hi = f.limits()
    problem = NLPProblem(
        dim=f.dof,
        objective=objective,
        eq_constraints=[surface_eq, collision_eq],
        ineq_constraints=[step_ineq],
        lower=lo,
        upper=hi,
    )
    sol = minimize(
        problem, theta0, max_outer=max_outer, feas_tol=feas_tol, opt_tol=opt_tol, inner_maxiter=inner_maxiter
    )

    new_tip = fk_fingertip(hand, finger, sol.x).translation
    new_dist = float(np.linalg.norm(new_tip - goal))
    ok = bool(sol.ok and sol.max_violation <= feas_tol and new_dist <= old_dist + 1e-9)
    return GaitResult(ok=ok, theta_r=sol.x, new_contact=new_tip, cost=sol.objective_value, solution=sol)
