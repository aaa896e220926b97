"""Convex geometry: rigid transforms, convex parts, signed distances, hulls.

All coordinates are meters. Signed distance is negative inside a volume,
zero on its boundary, positive outside. Every value type here is immutable
after construction and every operation is a pure function, so shared
read access from multiple threads is safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, InputError

# slack for convexity / orthonormality / containment checks
GEOM_TOL = 1e-9


def _as_array(x, shape, name):
    a = np.asarray(x, dtype=float)
    if a.shape != shape:
        raise InputError(f"{name}: expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name}: non-finite values")
    return a


def quat_to_matrix(q):
    """Unit quaternion [w, x, y, z] -> 3x3 rotation matrix."""
    q = _as_array(q, (4,), "quaternion")
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise InputError("quaternion: zero norm")
    w, x, y, z = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(rot):
    """3x3 rotation matrix -> unit quaternion [w, x, y, z], w >= 0."""
    rot = np.asarray(rot, dtype=float)
    t = np.trace(rot)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (rot[2, 1] - rot[1, 2]) / s, (rot[0, 2] - rot[2, 0]) / s, (rot[1, 0] - rot[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(rot)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(1.0 + rot[i, i] - rot[j, j] - rot[k, k], 0.0)) * 2
        q = np.empty(4)
        q[0] = (rot[k, j] - rot[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (rot[j, i] + rot[i, j]) / s
        q[1 + k] = (rot[k, i] + rot[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def rotation_about_axis(axis, angle):
    """Rodrigues rotation matrix for a unit axis and angle in radians."""
    axis = np.asarray(axis, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    ax, ay, az = axis
    skew = np.array([[0, -az, ay], [az, 0, -ax], [-ay, ax, 0]])
    return c * np.eye(3) + s * skew + (1 - c) * np.outer(axis, axis)


def rotation_angle(rot):
    """Geodesic angle of a rotation matrix, in [0, pi]."""
    c = (np.trace(rot) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid transform: p -> rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = _as_array(self.rotation, (3, 3), "rotation")
        t = _as_array(self.translation, (3,), "translation")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > GEOM_TOL:
            raise InputError("rotation: not orthonormal within 1e-9")
        if abs(np.linalg.det(rot) - 1.0) > GEOM_TOL:
            raise InputError("rotation: determinant != +1 (reflection?)")
        rot.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity():
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_quat(position, quat_wxyz):
        return RigidTransform(quat_to_matrix(quat_wxyz), np.asarray(position, dtype=float))

    def apply(self, points):
        """Transform one point (3,) or a stack of points (n, 3)."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self o other: apply ``other`` first, then ``self``."""
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def __matmul__(self, other):
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt.copy(), -rt @ self.translation)

    def to_dict(self):
        return {
            "position": [float(v) for v in self.translation],
            "quaternion": [float(v) for v in matrix_to_quat(self.rotation)],
        }


@dataclass(frozen=True)
class ConvexPart:
    """Watertight convex triangle mesh with outward face normals.

    ``vertices``: (n, 3) float array. ``faces``: (m, 3) int array, each row a
    vertex-index triple wound counter-clockwise when viewed from outside.
    Normals and plane offsets are derived from the winding at construction
    time and validated against convexity.
    """

    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray = field(init=False, repr=False)
    offsets: np.ndarray = field(init=False, repr=False)
    triangles: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        faces = np.asarray(self.faces, dtype=int)
        if verts.ndim != 2 or verts.shape[1] != 3 or verts.shape[0] < 4:
            raise InputError("ConvexPart: need at least 4 vertices of dimension 3")
        if not np.all(np.isfinite(verts)):
            raise InputError("ConvexPart: non-finite vertices")
        if faces.ndim != 2 or faces.shape[1] != 3 or faces.shape[0] < 4:
            raise InputError("ConvexPart: need at least 4 triangular faces")
        if faces.min() < 0 or faces.max() >= len(verts):
            raise InputError("ConvexPart: face index out of range")

        centered = verts - verts.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[2] <= 1e-9 * max(sv[0], 1e-12):
            raise DegenerateGeometryError("ConvexPart: vertices are coplanar")

        tri = verts[faces]  # (m, 3, 3)
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        norms = np.linalg.norm(n, axis=1)
        if np.any(norms < 1e-14):
            raise DegenerateGeometryError("ConvexPart: degenerate (zero-area) face")
        n = n / norms[:, None]
        d = np.einsum("ij,ij->i", n, tri[:, 0])

        # convexity + outward winding: every vertex behind every face plane
        worst = np.max(verts @ n.T - d)
        if worst > GEOM_TOL:
            raise InputError(
                f"ConvexPart: not convex or face wound inward (vertex {worst:.2e} m in front of a face plane)"
            )

        # watertight: each undirected edge shared by exactly two faces,
        # traversed once in each direction
        edges = {}
        for (i, j, k) in faces:
            for a, b in ((i, j), (j, k), (k, i)):
                if a == b:
                    raise InputError("ConvexPart: face repeats a vertex")
                key = (min(a, b), max(a, b))
                edges.setdefault(key, []).append(a < b)
        for key, dirs in edges.items():
            if len(dirs) != 2 or dirs[0] == dirs[1]:
                raise InputError(f"ConvexPart: edge {key} not shared by exactly two consistently wound faces")

        verts.setflags(write=False)
        faces.setflags(write=False)
        n.setflags(write=False)
        d.setflags(write=False)
        tri = np.ascontiguousarray(tri)
        tri.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "normals", n)
        object.__setattr__(self, "offsets", d)
        object.__setattr__(self, "triangles", tri)

    def volume(self):
        """Enclosed volume via the divergence theorem (positive for outward winding)."""
        tri = self.triangles
        return float(np.sum(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2]))) / 6.0)


@dataclass(frozen=True)
class ObjectModel:
    """Rigid object expressed as a union of convex parts in a body frame."""

    parts: tuple
    name: str = "object"

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise InputError("ObjectModel: needs at least one part")
        for p in parts:
            if not isinstance(p, ConvexPart):
                raise InputError("ObjectModel: parts must be ConvexPart instances")
        object.__setattr__(self, "parts", parts)


def closest_points_on_triangles(points, triangles):
    """Closest point on each triangle for each query point.

    ``points``: (p, 3). ``triangles``: (t, 3, 3). Returns (p, t, 3).
    Vectorized form of the standard barycentric-region walk (Ericson).
    """
    a = triangles[:, 0][None, :, :]
    ab = (triangles[:, 1] - triangles[:, 0])[None, :, :]
    ac = (triangles[:, 2] - triangles[:, 0])[None, :, :]
    b = triangles[:, 1][None, :, :]
    c = triangles[:, 2][None, :, :]
    p = points[:, None, :]

    ap = p - a
    d1 = np.einsum("ptk,ptk->pt", ab, ap)
    d2 = np.einsum("ptk,ptk->pt", ac, ap)
    bp = p - b
    d3 = np.einsum("ptk,ptk->pt", ab, bp)
    d4 = np.einsum("ptk,ptk->pt", ac, bp)
    cp = p - c
    d5 = np.einsum("ptk,ptk->pt", ab, cp)
    d6 = np.einsum("ptk,ptk->pt", ac, cp)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        # interior of the face
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 0.0)[..., None]
        w = np.where(denom != 0, vc / denom, 0.0)[..., None]
        out = a + v * ab + w * ac

        # edge BC
        t_bc = np.where((d4 - d3) + (d5 - d6) != 0, (d4 - d3) / ((d4 - d3) + (d5 - d6)), 0.0)
        m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        out = np.where(m[..., None], b + t_bc[..., None] * (c - b), out)

        # edge AC
        t_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out = np.where(m[..., None], a + t_ac[..., None] * ac, out)

        # edge AB
        t_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out = np.where(m[..., None], a + t_ab[..., None] * ab, out)

        # vertices C, B, A (A last so it wins ties)
        out = np.where(((d6 >= 0) & (d5 <= d6))[..., None], np.broadcast_to(c, out.shape), out)
        out = np.where(((d3 >= 0) & (d4 <= d3))[..., None], np.broadcast_to(b, out.shape), out)
        out = np.where(((d1 <= 0) & (d2 <= 0))[..., None], np.broadcast_to(a, out.shape), out)
    return out


def signed_distances_part(points, part: ConvexPart, far_band=None):
    """Signed distances from a stack of points (n, 3) to a convex part.

    With ``far_band`` set, points whose best separating-plane distance
    already exceeds the band keep that plane distance (a lower bound on the
    true value) instead of paying for the exact face/edge/vertex query.
    Clearance penalties that clamp to zero beyond the band are unaffected.
    """
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    pts = points[None, :] if single else points

    plane_vals = pts @ part.normals.T - part.offsets  # (n, m)
    max_plane = plane_vals.max(axis=1)

    sd = max_plane.copy()  # exact for interior points of a convex polytope
    need = max_plane > 0.0
    if far_band is not None:
        need &= max_plane < far_band
    if np.any(need):
        closest = closest_points_on_triangles(pts[need], part.triangles)
        diff = pts[need][:, None, :] - closest
        dist = np.sqrt(np.einsum("ptk,ptk->pt", diff, diff).min(axis=1))
        sd[need] = dist
    return sd[0] if single else sd


def signed_distance_part(p, part: ConvexPart) -> float:
    """Signed distance from one point to a convex part (negative inside)."""
    p = _as_array(p, (3,), "point")
    return float(signed_distances_part(p, part))


def signed_distances_object(points, obj: ObjectModel, pose: RigidTransform):
    """Min over parts of the per-part signed distance, points in the world frame.

    For overlapping parts this is a conservative lower bound on the union
    signed distance, which only tightens collision constraints.
    """
    local = pose.inverse().apply(points)
    single = np.asarray(points).ndim == 1
    pts = local[None, :] if single else local
    sd = np.full(pts.shape[0], np.inf)
    for part in obj.parts:
        sd = np.minimum(sd, signed_distances_part(pts, part))
    return float(sd[0]) if single else sd


def signed_distance_object(p, obj: ObjectModel, pose: RigidTransform) -> float:
    return signed_distances_object(_as_array(p, (3,), "point"), obj, pose)


def closest_surface_point(p, obj: ObjectModel, pose: RigidTransform):
    """Closest point on the object's surface to ``p``, in the world frame.

    Uses the part that realizes the min signed distance; for interior points
    this walks out through the nearest face plane of that part.
    """
    local = pose.inverse().apply(_as_array(p, (3,), "point"))
    best, best_abs = None, np.inf
    for part in obj.parts:
        sd = signed_distance_part(local, part)
        if abs(sd) < best_abs:
            best_abs, best = abs(sd), (part, sd)
    part, sd = best
    if sd <= 0.0:
        plane_vals = part.normals @ local - part.offsets
        f = int(np.argmax(plane_vals))
        q = local - plane_vals[f] * part.normals[f]
    else:
        closest = closest_points_on_triangles(local[None, :], part.triangles)[0]
        q = closest[np.argmin(np.linalg.norm(closest - local, axis=1))]
    return pose.apply(q)


def convex_hull(points) -> ConvexPart:
    """Convex hull of >= 4 points as a watertight ConvexPart.

    Raises DegenerateGeometryError when the points are coplanar or collinear.
    """
    from scipy.spatial import ConvexHull as _Qhull
    from scipy.spatial import QhullError

    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InputError("convex_hull: points must have shape (n, 3)")
    if len(pts) < 4:
        raise InputError("convex_hull: need at least 4 points")
    try:
        hull = _Qhull(pts)
    except QhullError as e:
        raise DegenerateGeometryError(f"convex_hull: degenerate input ({str(e).splitlines()[0]})") from e

    used = hull.vertices  # indices of points on the hull
    remap = np.full(len(pts), -1, dtype=int)
    remap[used] = np.arange(len(used))
    verts = pts[used]
    faces = remap[hull.simplices]

    # qhull winding is arbitrary; flip triangles whose winding normal
    # disagrees with the outward plane normal qhull reports
    tri = verts[faces]
    wind = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    outward = hull.equations[:, :3]
    flip = np.einsum("ij,ij->i", wind, outward) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]

    return ConvexPart(verts, faces)


def clearance_penalty(sd: float, beta: float) -> float:
    """Clamped clearance shortfall: 0 once sd >= beta, beta - sd below it.

    Continuous and piecewise linear; equals beta at contact and grows
    linearly with penetration depth.
    """
    if beta <= 0:
        raise InputError("clearance_penalty: beta must be > 0")
    return max(0.0, beta - sd)
