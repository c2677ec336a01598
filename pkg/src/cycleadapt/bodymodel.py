"""Simplified parametric 3D body.

Pose comes in as one continuous 6D rotation code per joint, shape as 10
linear blend-shape coefficients. Posing runs the classic pipeline: shape
the rest mesh, regress rest joints, compose rigid transforms down the
joint tree, skin the vertices by linear blending, then regress the posed
joints from the skinned mesh (so joints and mesh always share a frame).
The root translation is pinned to the origin; every downstream error
measure is root-aligned, which makes global translation unobservable.

All positions are meters. Two parallel implementations are provided: plain
numpy (`body_forward`, `body_forward_batch`) for data generation and
evaluation, and a graph builder (`body_graph`) that appends the same
computation to a `diffcore.Graph` so gradients can flow to pose, shape,
and anything upstream of them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .diffcore import Graph

IDENTITY_ROT6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])

THETA_SIZE = 144
BETA_SIZE = 10

# permutation matrices rolling the last axis of a stack of 3-vectors,
# used to express a cross product with products and one subtraction
_ROLL1 = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
_ROLL2 = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])


class DegenerateRotationError(ValueError):
    """6D code whose two columns are too short or too parallel to orthonormalize."""


def _frozen_array(value, shape, what: str) -> np.ndarray:
    out = np.array(value, dtype=np.float64)
    if out.shape != tuple(shape):
        raise ValueError(f"{what}: expected shape {tuple(shape)}, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{what}: entries must be finite")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class SmplParams:
    """One body configuration: 144 pose reals (24 x 6D codes) and 10 shape reals."""

    theta: np.ndarray
    beta: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", _frozen_array(self.theta, (THETA_SIZE,), "theta"))
        object.__setattr__(self, "beta", _frozen_array(self.beta, (BETA_SIZE,), "beta"))


@dataclass(frozen=True)
class CameraParams:
    """Weak-perspective camera: scale plus normalized-image translation."""

    s: float
    tx: float
    ty: float

    def __post_init__(self) -> None:
        for name in ("s", "tx", "ty"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"CameraParams.{name} must be finite")


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3 or not np.all(np.isfinite(v)):
            raise ValueError(f"Mesh: vertices must be finite (V, 3), got {v.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)


@dataclass(frozen=True)
class BodyModel:
    """Immutable template body.

    ``parents`` uses -1 for the root's missing parent and satisfies
    parents[j] < j, so the joints are already in topological order.
    """

    template_vertices: np.ndarray
    template_joints: np.ndarray
    parents: tuple
    skin_weights: np.ndarray
    shape_dirs: np.ndarray
    joint_regressor: np.ndarray

    def __post_init__(self) -> None:
        parents = tuple(int(p) for p in self.parents)
        joints = len(parents)
        if joints < 2:
            raise ValueError("BodyModel: need at least 2 joints")
        if parents[0] != -1:
            raise ValueError("BodyModel: parents[0] must be -1 (the root)")
        for j, p in enumerate(parents[1:], start=1):
            if not 0 <= p < j:
                raise ValueError(f"BodyModel: parents[{j}] = {p} must satisfy 0 <= parent < {j}")
        object.__setattr__(self, "parents", parents)
        verts = np.asarray(self.template_vertices)
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise ValueError(f"BodyModel: template_vertices must be (V, 3), got {verts.shape}")
        nverts = verts.shape[0]
        for name, shape in (
            ("template_vertices", (nverts, 3)),
            ("template_joints", (joints, 3)),
            ("skin_weights", (nverts, joints)),
            ("shape_dirs", (nverts, 3, BETA_SIZE)),
            ("joint_regressor", (joints, nverts)),
        ):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), shape, f"BodyModel.{name}"))
        for name in ("skin_weights", "joint_regressor"):
            mat = getattr(self, name)
            if np.any(mat < 0):
                raise ValueError(f"BodyModel.{name}: entries must be nonnegative")
            sums = mat.sum(axis=1)
            if np.abs(sums - 1.0).max() > 1e-9:
                raise ValueError(f"BodyModel.{name}: rows must sum to 1 within 1e-9")

    @property
    def joint_count(self) -> int:
        return len(self.parents)

    @property
    def vertex_count(self) -> int:
        return self.template_vertices.shape[0]

    def to_json(self) -> str:
        return json.dumps(
            {
                "template_vertices": self.template_vertices.tolist(),
                "template_joints": self.template_joints.tolist(),
                "parents": list(self.parents),
                "skin_weights": self.skin_weights.tolist(),
                "shape_dirs": self.shape_dirs.tolist(),
                "joint_regressor": self.joint_regressor.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "BodyModel":
        raw = json.loads(text)
        return cls(
            template_vertices=raw["template_vertices"],
            template_joints=raw["template_joints"],
            parents=tuple(raw["parents"]),
            skin_weights=raw["skin_weights"],
            shape_dirs=raw["shape_dirs"],
            joint_regressor=raw["joint_regressor"],
        )


def identity_pose(joints: int) -> np.ndarray:
    """Pose vector holding every joint at its rest rotation."""
    return np.tile(IDENTITY_ROT6D, joints)


def rot6d_batch(codes) -> np.ndarray:
    """Map (..., 6) continuous rotation codes to (..., 3, 3) rotation matrices.

    Column one is the normalized first triple, column two the Gram-Schmidt
    remainder of the second, column three their cross product, so the result
    is orthonormal with determinant +1 and invariant to rescaling the input.
    """
    c = np.asarray(codes, dtype=np.float64)
    if c.shape[-1] != 6:
        raise ValueError(f"rot6d: last axis must have size 6, got {c.shape}")
    a1 = c[..., :3]
    a2 = c[..., 3:]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    n2 = np.linalg.norm(a2, axis=-1, keepdims=True)
    if np.any(n1 <= 1e-8) or np.any(n2 <= 1e-8):
        raise DegenerateRotationError("rot6d: column norm at or below 1e-8")
    b1 = a1 / n1
    resid = a2 - (b1 * a2).sum(axis=-1, keepdims=True) * b1
    nr = np.linalg.norm(resid, axis=-1, keepdims=True)
    if np.any(nr <= 1e-8):
        raise DegenerateRotationError("rot6d: columns are nearly parallel")
    b2 = resid / nr
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def rot6d_to_rotmat(code) -> np.ndarray:
    r = np.asarray(code, dtype=np.float64)
    if r.shape != (6,):
        raise ValueError(f"rot6d_to_rotmat: expected a 6-vector, got shape {r.shape}")
    return rot6d_batch(r)


def rotmat_to_rot6d(rots) -> np.ndarray:
    """Inverse embedding: keep the first two columns, flattened to (..., 6)."""
    r = np.asarray(rots, dtype=np.float64)
    if r.shape[-2:] != (3, 3):
        raise ValueError(f"rotmat_to_rot6d: expected (..., 3, 3), got {r.shape}")
    return np.concatenate([r[..., :, 0], r[..., :, 1]], axis=-1)


def shaped_rest_mesh(model: BodyModel, beta) -> np.ndarray:
    """Rest mesh after linear shape blending: template + shape_dirs . beta."""
    b = np.asarray(beta, dtype=np.float64)
    return model.template_vertices + np.einsum("vck,...k->...vc", model.shape_dirs, b)


def body_forward_batch(model: BodyModel, thetas, betas) -> tuple[np.ndarray, np.ndarray]:
    """Pose a batch: (B, 6J) pose codes and (B, 10) shapes to vertices and joints.

    Returns (vertices (B, V, 3), joints (B, J, 3)); joints are regressed from
    the skinned mesh, not taken from the kinematic transforms.
    """
    th = np.asarray(thetas, dtype=np.float64)
    be = np.asarray(betas, dtype=np.float64)
    joints = model.joint_count
    if th.ndim != 2 or th.shape[1] != 6 * joints:
        raise ValueError(f"body_forward_batch: pose must be (B, {6 * joints}), got {th.shape}")
    if be.shape != (th.shape[0], BETA_SIZE):
        raise ValueError(f"body_forward_batch: shape must be ({th.shape[0]}, {BETA_SIZE}), got {be.shape}")
    nb = th.shape[0]
    rots = rot6d_batch(th.reshape(nb, joints, 6))
    shaped = shaped_rest_mesh(model, be)
    rest = np.einsum("jv,bvc->bjc", model.joint_regressor, shaped)

    glob_rot = np.empty((nb, joints, 3, 3))
    glob_t = np.empty((nb, joints, 3))
    glob_rot[:, 0] = rots[:, 0]
    glob_t[:, 0] = rest[:, 0]
    for j in range(1, joints):
        p = model.parents[j]
        glob_rot[:, j] = glob_rot[:, p] @ rots[:, j]
        bone = rest[:, j] - rest[:, p]
        glob_t[:, j] = glob_t[:, p] + np.einsum("bxy,by->bx", glob_rot[:, p], bone)

    blended = np.einsum("vj,bjxy->bvxy", model.skin_weights, glob_rot)
    shift = glob_t - np.einsum("bjxy,bjy->bjx", glob_rot, rest)
    verts = np.einsum("bvxy,bvy->bvx", blended, shaped)
    verts += np.einsum("vj,bjx->bvx", model.skin_weights, shift)
    out_joints = np.einsum("jv,bvc->bjc", model.joint_regressor, verts)
    return verts, out_joints


def body_forward(model: BodyModel, params: SmplParams) -> tuple[Mesh, np.ndarray]:
    """Pose a single standard body; see body_forward_batch for the generic path."""
    if 6 * model.joint_count != THETA_SIZE:
        raise ValueError(
            f"body_forward: model has {model.joint_count} joints, "
            f"params carry {THETA_SIZE // 6}"
        )
    verts, joints = body_forward_batch(model, params.theta[None], params.beta[None])
    return Mesh(vertices=verts[0]), joints[0]


def project_weak_perspective(camera: CameraParams, points) -> np.ndarray:
    """(s*x + tx, s*y + ty) per point; depth is discarded."""
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"project_weak_perspective: expected (N, 3), got {p.shape}")
    return camera.s * p[:, :2] + np.array([camera.tx, camera.ty])


def project_batch(cameras, points) -> np.ndarray:
    """Batched weak perspective: (B, 3) cameras against (B, N, 3) points."""
    k = np.asarray(cameras, dtype=np.float64)
    p = np.asarray(points, dtype=np.float64)
    if k.shape != (p.shape[0], 3) or p.ndim != 3 or p.shape[2] != 3:
        raise ValueError(f"project_batch: got cameras {k.shape} and points {p.shape}")
    return k[:, :1, None] * p[:, :, :2] + k[:, None, 1:]


def _segment_distances(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-12:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    return np.linalg.norm(points - (a + t[:, None] * ab), axis=1)


def _soft_rows(sq_dists: np.ndarray, sigma: float) -> np.ndarray:
    # subtract the row minimum before exponentiating so sharp sigmas
    # saturate to one-hot rows instead of underflowing to all zeros
    z = (sq_dists - sq_dists.min(axis=1, keepdims=True)) / (sigma * sigma)
    w = np.exp(-z)
    return w / w.sum(axis=1, keepdims=True)


def build_toy_body(seed: int, joints: int = 24, vertices: int = 120) -> BodyModel:
    """Deterministic stand-in body generated from a seed.

    The skeleton is a spine chain with limb chains hanging off it. The first
    ``joints`` vertices sit exactly on the joints; the rest scatter around
    the bones. Skin weights fall off with distance to each bone, and the
    joint regressor is a distance softmax over vertices, sharpened until it
    reproduces the skeleton to better than 5 cm (the on-joint vertices
    guarantee this converges). The stored template_joints are exactly
    joint_regressor @ template_vertices, so the identity pose round-trips.
    """
    if joints < 2:
        raise ValueError(f"build_toy_body: need at least 2 joints, got {joints}")
    if vertices < joints:
        raise ValueError(f"build_toy_body: need vertices >= joints, got {vertices} < {joints}")
    rng = np.random.default_rng(seed)

    spine = max(1, min(joints - 1, joints // 4))
    limbs = min(4, joints - 1 - spine)
    parents = [-1]
    for j in range(1, spine + 1):
        parents.append(j - 1)
    tips = [int(rng.integers(0, spine + 1)) for _ in range(max(limbs, 1))]
    for j in range(spine + 1, joints):
        limb = (j - spine - 1) % max(limbs, 1)
        parents.append(tips[limb])
        tips[limb] = j

    joint_pos = np.zeros((joints, 3))
    for j in range(1, joints):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        joint_pos[j] = joint_pos[parents[j]] + direction * rng.uniform(0.1, 0.35)

    verts = np.empty((vertices, 3))
    verts[:joints] = joint_pos
    for v in range(joints, vertices):
        j = 1 + (v - joints) % (joints - 1)
        u = rng.uniform(0.0, 1.0)
        base = (1.0 - u) * joint_pos[parents[j]] + u * joint_pos[j]
        verts[v] = base + rng.normal(scale=0.02, size=3)

    bone_d = np.empty((vertices, joints))
    bone_d[:, 0] = np.linalg.norm(verts - joint_pos[0], axis=1)
    for j in range(1, joints):
        bone_d[:, j] = _segment_distances(verts, joint_pos[parents[j]], joint_pos[j])
    skin_weights = _soft_rows(bone_d**2, 0.06)

    joint_d2 = ((verts[None, :, :] - joint_pos[:, None, :]) ** 2).sum(axis=2)
    sigma = 0.08
    for _ in range(40):
        regressor = _soft_rows(joint_d2, sigma)
        err = np.linalg.norm(regressor @ verts - joint_pos, axis=1).max()
        if err < 0.05:
            break
        sigma *= 0.5
    else:
        raise RuntimeError("build_toy_body: joint regressor failed to sharpen")

    return BodyModel(
        template_vertices=verts,
        template_joints=regressor @ verts,
        parents=tuple(parents),
        skin_weights=skin_weights,
        shape_dirs=np.clip(rng.normal(scale=0.01, size=(vertices, 3, BETA_SIZE)), -0.03, 0.03),
        joint_regressor=regressor,
    )


def scale_body(model: BodyModel, factor: float) -> BodyModel:
    """Uniformly resize a body; all posed geometry scales by exactly ``factor``.

    Skinning is linear in the rest geometry, so scaling template vertices,
    template joints, and shape displacements is equivalent to scaling every
    output; weights, parents, and the regressor are unchanged.
    """
    if factor <= 0.0:
        raise ValueError(f"scale_body: factor must be positive, got {factor}")
    return BodyModel(
        template_vertices=model.template_vertices * factor,
        template_joints=model.template_joints * factor,
        parents=model.parents,
        skin_weights=model.skin_weights,
        shape_dirs=model.shape_dirs * factor,
        joint_regressor=model.joint_regressor,
    )


def body_graph(g: Graph, model: BodyModel, theta_node: int, beta_node: int, batch: int) -> tuple[int, int]:
    """Append the posing pipeline to ``g``.

    ``theta_node`` must evaluate to (batch, 6J) and ``beta_node`` to
    (batch, 10). Returns node ids for the skinned vertices (batch, V, 3)
    and the regressed joints (batch, J, 3). Matches body_forward_batch to
    rounding error.
    """
    joints = model.joint_count
    nverts = model.vertex_count
    theta3 = g.reshape(theta_node, (batch, joints, 6))
    rot = _rot6d_graph(g, theta3, batch, joints)

    sd = g.const(model.shape_dirs.reshape(nverts * 3, BETA_SIZE).T)
    shaped = g.add(
        g.const(model.template_vertices),
        g.reshape(g.matmul(beta_node, sd), (batch, nverts, 3)),
    )
    rest = g.matmul(g.const(model.joint_regressor), shaped)

    rot9 = g.reshape(rot, (batch, joints, 9))
    picks = [g.const(np.eye(joints)[j : j + 1]) for j in range(joints)]
    loc_rot = [g.reshape(g.matmul(picks[j], rot9), (batch, 3, 3)) for j in range(joints)]
    rest_row = [g.matmul(picks[j], rest) for j in range(joints)]

    glob_rot: list = [None] * joints
    glob_t: list = [None] * joints
    glob_rot[0] = loc_rot[0]
    glob_t[0] = rest_row[0]
    rot_t: dict = {}

    def transposed(j: int) -> int:
        if j not in rot_t:
            rot_t[j] = g.transpose(glob_rot[j])
        return rot_t[j]

    for j in range(1, joints):
        p = model.parents[j]
        bone = g.sub(rest_row[j], rest_row[p])
        glob_t[j] = g.add(glob_t[p], g.matmul(bone, transposed(p)))
        glob_rot[j] = g.matmul(glob_rot[p], loc_rot[j])

    rows_t = [g.reshape(transposed(j), (batch, 1, 9)) for j in range(joints)]
    blended = g.reshape(
        g.matmul(g.const(model.skin_weights), g.concat(rows_t, axis=1)),
        (batch, nverts, 3, 3),
    )
    shift = [g.sub(glob_t[j], g.matmul(rest_row[j], transposed(j))) for j in range(joints)]
    offs = g.matmul(g.const(model.skin_weights), g.concat(shift, axis=1))
    moved = g.reshape(
        g.matmul(g.reshape(shaped, (batch, nverts, 1, 3)), blended),
        (batch, nverts, 3),
    )
    verts = g.add(moved, offs)
    out_joints = g.matmul(g.const(model.joint_regressor), verts)
    return verts, out_joints


def _rot6d_graph(g: Graph, theta3: int, batch: int, joints: int) -> int:
    """(batch, J, 6) codes to (batch, J, 3, 3) rotations, same math as rot6d_batch."""
    pick1 = g.const(np.vstack([np.eye(3), np.zeros((3, 3))]))
    pick2 = g.const(np.vstack([np.zeros((3, 3)), np.eye(3)]))
    a1 = g.matmul(theta3, pick1)
    a2 = g.matmul(theta3, pick2)

    def normalize(v: int) -> int:
        return g.div(v, g.sqrt(g.sum(g.mul(v, v), axis=-1, keepdims=True)))

    b1 = normalize(a1)
    along = g.sum(g.mul(b1, a2), axis=-1, keepdims=True)
    b2 = normalize(g.sub(a2, g.mul(along, b1)))
    b3 = g.sub(
        g.mul(g.matmul(b1, g.const(_ROLL1)), g.matmul(b2, g.const(_ROLL2))),
        g.mul(g.matmul(b1, g.const(_ROLL2)), g.matmul(b2, g.const(_ROLL1))),
    )
    stacked = g.concat([b1, b2, b3], axis=-1)
    return g.transpose(g.reshape(stacked, (batch, joints, 3, 3)))


def project_graph(g: Graph, camera_node: int, points_node: int, batch: int) -> int:
    """Weak-perspective projection in graph form.

    ``camera_node`` is (batch, 3) as (s, tx, ty); ``points_node`` is
    (batch, N, 3). Returns (batch, N, 2).
    """
    xy = g.matmul(points_node, g.const(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])))
    s = g.reshape(g.matmul(camera_node, g.const(np.array([[1.0], [0.0], [0.0]]))), (batch, 1, 1))
    t = g.reshape(g.matmul(camera_node, g.const(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))), (batch, 1, 2))
    return g.add(g.mul(xy, s), t)
