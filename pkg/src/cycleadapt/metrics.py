"""Pose and mesh error metrics for sequences of 3D bodies.

All positions come in as meters; every metric reports millimeters.
Joint arrays are (frames, joints, 3) and vertex arrays (frames, vertices, 3).
Everything here is a pure function, safe to call from any thread.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

MM_PER_M = 1000.0


class DegenerateGeometryError(ValueError):
    """Raised when a point cloud has no spatial extent to align against."""


@dataclass(frozen=True)
class MetricReport:
    """Summary errors for one predicted sequence, all in millimeters.

    ``accel`` is mm per frame squared.  The optimal similarity alignment can
    only improve on plain root alignment, so ``pa_mpjpe <= mpjpe`` is enforced
    (with a hair of tolerance) together with non-negativity.
    """

    mpjpe: float
    pa_mpjpe: float
    mpvpe: float
    accel: float

    def __post_init__(self) -> None:
        for name in ("mpjpe", "pa_mpjpe", "mpvpe", "accel"):
            if not getattr(self, name) >= 0.0:
                raise ValueError(f"MetricReport.{name} must be >= 0")
        if self.pa_mpjpe > self.mpjpe + 1e-9:
            raise ValueError("pa_mpjpe exceeds mpjpe; alignment is broken")


def _as_pair(pred, gt, what: str) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"{what}: prediction shape {p.shape} != ground truth shape {g.shape}")
    if p.ndim != 3 or p.shape[-1] != 3:
        raise ValueError(f"{what}: expected (frames, points, 3) arrays, got {p.shape}")
    return p, g


def mpjpe(pred_joints, gt_joints, root_index: int = 0) -> float:
    """Mean per joint position error in mm after per-frame root alignment."""
    p, g = _as_pair(pred_joints, gt_joints, "mpjpe")
    if not 0 <= root_index < p.shape[1]:
        raise ValueError(f"mpjpe: root_index {root_index} out of range for {p.shape[1]} joints")
    p = p - p[:, root_index : root_index + 1]
    g = g - g[:, root_index : root_index + 1]
    return float(np.linalg.norm(p - g, axis=-1).mean() * MM_PER_M)


def procrustes_align(pred, gt) -> tuple[float, np.ndarray, np.ndarray]:
    """Best similarity transform taking ``pred`` onto ``gt``.

    Returns (scale, rotation, translation) minimizing
    ``sum_j ||s R p_j + t - g_j||^2`` in closed form: SVD of the cross
    covariance, with the weakest direction flipped when needed so that
    det(rotation) = +1 (a proper rotation, never a reflection).
    """
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape or p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 3:
        raise ValueError(
            f"procrustes_align: need two matching (J >= 3, 3) arrays, got {p.shape} and {g.shape}"
        )
    n = p.shape[0]
    mu_p = p.mean(axis=0)
    mu_g = g.mean(axis=0)
    pc = p - mu_p
    gc = g - mu_g
    var_p = float((pc**2).sum()) / n
    if var_p < 1e-18:
        raise DegenerateGeometryError("procrustes_align: prediction points are coincident")
    cov = gc.T @ pc / n
    u, d, vt = np.linalg.svd(cov)
    flip = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        flip[2] = -1.0
    rot = (u * flip) @ vt
    scale = float((d * flip).sum() / var_p)
    trans = mu_g - scale * rot @ mu_p
    return scale, rot, trans


def pa_mpjpe(pred_joints, gt_joints, threads: int = 1) -> float:
    """Mean joint error in mm after an optimal per-frame similarity fit.

    ``threads`` > 1 spreads the per-frame alignments over a thread pool;
    the result is bit-identical to the serial computation.
    """
    p, g = _as_pair(pred_joints, gt_joints, "pa_mpjpe")

    def frame_error(i: int) -> float:
        s, rot, t = procrustes_align(p[i], g[i])
        aligned = s * p[i] @ rot.T + t
        return float(np.linalg.norm(aligned - g[i], axis=-1).mean())

    if threads > 1 and p.shape[0] > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            errors = list(pool.map(frame_error, range(p.shape[0])))
    else:
        errors = [frame_error(i) for i in range(p.shape[0])]
    return float(np.mean(errors) * MM_PER_M)


def mpvpe(pred_mesh, gt_mesh, pred_root, gt_root) -> float:
    """Mean per vertex position error in mm, root-aligned like mpjpe.

    Meshes carry no root vertex, so the per-frame root positions are taken
    from the joint sets and passed in as (frames, 3) arrays.
    """
    p, g = _as_pair(pred_mesh, gt_mesh, "mpvpe")
    pr = np.asarray(pred_root, dtype=np.float64)
    gr = np.asarray(gt_root, dtype=np.float64)
    if pr.shape != (p.shape[0], 3) or gr.shape != (g.shape[0], 3):
        raise ValueError(f"mpvpe: roots must be (frames, 3), got {pr.shape} and {gr.shape}")
    p = p - pr[:, None, :]
    g = g - gr[:, None, :]
    return float(np.linalg.norm(p - g, axis=-1).mean() * MM_PER_M)


def accel_error(pred_joints, gt_joints) -> float:
    """Mean difference of second finite differences, in mm per frame squared.

    Acceleration at frame t is x[t+1] - 2 x[t] + x[t-1], so any trajectory
    component affine in t drops out.
    """
    p, g = _as_pair(pred_joints, gt_joints, "accel_error")
    if p.shape[0] < 3:
        raise ValueError(f"accel_error: need at least 3 frames, got {p.shape[0]}")
    ap = p[2:] - 2.0 * p[1:-1] + p[:-2]
    ag = g[2:] - 2.0 * g[1:-1] + g[:-2]
    return float(np.linalg.norm(ap - ag, axis=-1).mean() * MM_PER_M)


def evaluate_sequence(
    pred_joints,
    gt_joints,
    pred_mesh,
    gt_mesh,
    root_index: int = 0,
    threads: int = 1,
) -> MetricReport:
    """All four metrics for one sequence, packed into a MetricReport."""
    pj = np.asarray(pred_joints, dtype=np.float64)
    gj = np.asarray(gt_joints, dtype=np.float64)
    return MetricReport(
        mpjpe=mpjpe(pj, gj, root_index),
        pa_mpjpe=pa_mpjpe(pj, gj, threads=threads),
        mpvpe=mpvpe(pred_mesh, gt_mesh, pj[:, root_index], gj[:, root_index]),
        accel=accel_error(pj, gj),
    )
