"""Serial-chain hand model and forward kinematics.

A hand is an ordered list of fingers; each finger is a revolute serial
chain hanging off the palm frame. Link collision geometry is a set of
sphere proxies attached to each link frame. Models and configurations are
immutable values and FK is pure, so shared reads are thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError, NumericEvalError
from .geometry import RigidTransform, rotation_about_axis, GEOM_TOL


@dataclass(frozen=True)
class JointSpec:
    """Revolute joint: fixed offset from the previous frame, then a rotation
    about ``axis`` by the joint angle, bounded by [limit_min, limit_max]."""

    parent_transform: RigidTransform
    axis: np.ndarray
    limit_min: float
    limit_max: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > GEOM_TOL:
            raise InputError("JointSpec: axis must be a unit 3-vector")
        if self.limit_min > self.limit_max:
            raise InputError("JointSpec: limit_min > limit_max")
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        ax, ay, az = axis
        skew = np.array([[0.0, -az, ay], [az, 0.0, -ax], [-ay, ax, 0.0]])
        object.__setattr__(self, "_skew", skew)
        object.__setattr__(self, "_eye_minus_outer", np.eye(3) - np.outer(axis, axis))
        object.__setattr__(self, "_outer", np.outer(axis, axis))

    def rotation(self, q):
        """Rodrigues formula with the axis terms precomputed."""
        return np.cos(q) * self._eye_minus_outer + np.sin(q) * self._skew + self._outer


@dataclass(frozen=True)
class LinkProxy:
    """Collision sphere fixed in a link frame."""

    local_center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.local_center, dtype=float)
        if c.shape != (3,):
            raise InputError("LinkProxy: center must be a 3-vector")
        if self.radius <= 0:
            raise InputError("LinkProxy: radius must be > 0")
        c.setflags(write=False)
        object.__setattr__(self, "local_center", c)


@dataclass(frozen=True)
class FingerModel:
    """One finger: base offset from the palm, joints, per-link sphere
    proxies (one list per joint/link), and a fingertip contact frame."""

    base_transform: RigidTransform
    joints: tuple
    link_proxies: tuple
    tip_offset: RigidTransform
    name: str = "finger"

    def __post_init__(self):
        joints = tuple(self.joints)
        proxies = tuple(tuple(p) for p in self.link_proxies)
        if not joints:
            raise InputError("FingerModel: needs at least one joint")
        if len(proxies) != len(joints):
            raise InputError("FingerModel: link_proxies must have one entry per joint")
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "link_proxies", proxies)

    @property
    def dof(self):
        return len(self.joints)

    def limits(self):
        lo = np.array([j.limit_min for j in self.joints])
        hi = np.array([j.limit_max for j in self.joints])
        return lo, hi


ROLE_NAMES = ("index", "middle", "ring", "thumb")


@dataclass(frozen=True)
class HandModel:
    """Ordered fingers plus an optional role map {index,middle,ring,thumb}."""

    fingers: tuple
    finger_roles: dict
    name: str = "hand"

    def __post_init__(self):
        fingers = tuple(self.fingers)
        if len(fingers) < 2:
            raise InputError("HandModel: need at least 2 fingers")
        roles = dict(self.finger_roles or {})
        seen = set()
        for role, idx in roles.items():
            if role not in ROLE_NAMES:
                raise ConfigurationError(f"HandModel: unknown finger role '{role}'")
            if not (0 <= idx < len(fingers)):
                raise ConfigurationError(f"HandModel: role '{role}' maps to missing finger {idx}")
            if idx in seen:
                raise ConfigurationError("HandModel: finger role mapping must be injective")
            seen.add(idx)
        object.__setattr__(self, "fingers", fingers)
        object.__setattr__(self, "finger_roles", roles)

    @property
    def num_fingers(self):
        return len(self.fingers)

    def role_index(self, role):
        if role not in self.finger_roles:
            raise ConfigurationError(f"HandModel: finger role '{role}' is not mapped")
        return self.finger_roles[role]


@dataclass(frozen=True)
class JointConfig:
    """Per-finger joint angle vectors, radians."""

    angles: tuple

    def __post_init__(self):
        angles = tuple(np.asarray(a, dtype=float).copy() for a in self.angles)
        for a in angles:
            if a.ndim != 1:
                raise InputError("JointConfig: each finger entry must be a 1-D angle vector")
            a.setflags(write=False)
        object.__setattr__(self, "angles", angles)

    def replace_finger(self, finger, theta_r):
        new = list(self.angles)
        new[finger] = np.asarray(theta_r, dtype=float)
        return JointConfig(tuple(new))

    def stacked(self):
        return np.concatenate(self.angles)

    @staticmethod
    def from_stacked(hand: HandModel, x):
        x = np.asarray(x, dtype=float)
        out, k = [], 0
        for f in hand.fingers:
            out.append(x[k : k + f.dof])
            k += f.dof
        if k != len(x):
            raise InputError("JointConfig: stacked vector length mismatch")
        return JointConfig(tuple(out))

    def within_limits(self, hand: HandModel, slack=0.0):
        for f, a in zip(hand.fingers, self.angles):
            lo, hi = f.limits()
            if np.any(a < lo - slack) or np.any(a > hi + slack):
                return False
        return True


def _check_theta(finger: FingerModel, theta_r):
    theta = np.asarray(theta_r, dtype=float)
    if theta.shape != (finger.dof,):
        raise InputError(f"theta length {theta.shape} does not match finger dof {finger.dof}")
    return theta


def fk_frames_raw(finger: FingerModel, theta):
    """Link frames of one finger as raw (rotation, translation) pairs.

    Hot path for the optimizers: skips RigidTransform validation. ``theta``
    must already be a well-shaped float array.
    """
    rot = finger.base_transform.rotation
    pos = finger.base_transform.translation
    frames = []
    for joint, q in zip(finger.joints, theta):
        pt = joint.parent_transform
        pos = rot @ pt.translation + pos
        rot = rot @ pt.rotation @ joint.rotation(q)
        frames.append((rot, pos))
    return frames


def fk_tip_raw(finger: FingerModel, theta):
    """(tip rotation, tip position, link frames) without wrapper objects."""
    frames = fk_frames_raw(finger, theta)
    rot, pos = frames[-1]
    tip = finger.tip_offset
    return rot @ tip.rotation, rot @ tip.translation + pos, frames


def fk_link_frames(hand: HandModel, finger: int, theta_r):
    """World (palm-frame) transforms of every link frame of one finger."""
    f = hand.fingers[finger]
    theta = _check_theta(f, theta_r)
    return [RigidTransform(r.copy(), t.copy()) for r, t in fk_frames_raw(f, theta)]


def fk_fingertip(hand: HandModel, finger: int, theta_r) -> RigidTransform:
    """Pose of the fingertip contact frame in the palm frame."""
    f = hand.fingers[finger]
    theta = _check_theta(f, theta_r)
    rot, pos, _ = fk_tip_raw(f, theta)
    return RigidTransform(rot.copy(), pos.copy())


def fk_link_proxies(hand: HandModel, finger: int, theta_r):
    """World (center, radius) of each collision proxy of one finger.

    Proxies on the fingertip link (the last one) are excluded: the fingertip
    is supposed to touch the object.
    """
    f = hand.fingers[finger]
    theta = _check_theta(f, theta_r)
    frames = fk_frames_raw(f, theta)
    out = []
    for link in range(f.dof - 1):
        rot, pos = frames[link]
        for proxy in f.link_proxies[link]:
            out.append((rot @ proxy.local_center + pos, proxy.radius))
    return out


def fk_fingertips_batch(hand: HandModel, finger: int, thetas):
    """Fingertip positions for a batch of configurations (n, dof) -> (n, 3)."""
    f = hand.fingers[finger]
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim != 2 or thetas.shape[1] != f.dof:
        raise InputError("fk_fingertips_batch: thetas must have shape (n, dof)")
    n = thetas.shape[0]
    rot = np.broadcast_to(f.base_transform.rotation, (n, 3, 3)).copy()
    pos = np.broadcast_to(f.base_transform.translation, (n, 3)).copy()
    eye = np.eye(3)
    for j, joint in enumerate(f.joints):
        pos += np.einsum("nij,j->ni", rot, joint.parent_transform.translation)
        rot = rot @ joint.parent_transform.rotation
        q = thetas[:, j]
        c, s = np.cos(q), np.sin(q)
        ax, ay, az = joint.axis
        skew = np.array([[0, -az, ay], [az, 0, -ax], [-ay, ax, 0]])
        outer = np.outer(joint.axis, joint.axis)
        rj = c[:, None, None] * eye + s[:, None, None] * skew + (1 - c)[:, None, None] * outer
        rot = rot @ rj
    pos += np.einsum("nij,j->ni", rot, f.tip_offset.translation)
    return pos


def numeric_gradient(f, x, h=1e-6):
    """Central-difference gradient of a scalar function at ``x``.

    Raises NumericEvalError when any probe evaluates non-finite.
    """
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        fp = f(x + step)
        fm = f(x - step)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericEvalError(f"numeric_gradient: non-finite evaluation at coordinate {i}")
        g[i] = (fp - fm) / (2.0 * h)
    return g
