"""Source-domain supervised pre-training for the mesh regressor.

The regressor is fit on rendered source features with an L1 pull on both
parameter vectors (ground truth is available on the source side) plus the
reprojection loss on clean, confidence-one keypoints. The final source
pose-code error is recorded as tau; the same functional measured on another
domain's features gauges how wide the domain gap is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bodymodel import BodyModel, project_weak_perspective
from .diffcore import Graph, backward_from_values, evaluate
from .hmrnet import HmrConfig, hmr_forward, hmr_forward_graph, hmr_loss_graph
from .optim import adam_init, adam_step


@dataclass(frozen=True)
class PretrainSet:
    """Flattened supervision rows pooled across source videos."""

    features: np.ndarray  # (M, F)
    thetas: np.ndarray  # (M, 144)
    betas: np.ndarray  # (M, 10)
    keypoints: np.ndarray  # (M, J, 3), exact projections, confidence one

    @property
    def size(self) -> int:
        return self.features.shape[0]


def pretrain_set(videos) -> PretrainSet:
    """Pool features, parameters, and clean keypoints from source videos."""
    if not videos:
        raise ValueError("pretrain_set: need at least one video")
    feats, thetas, betas, kps = [], [], [], []
    for video in videos:
        n = video.frame_count
        feats.append(np.array(video.features))
        thetas.append(np.stack([p.theta for p in video.gt_params]))
        betas.append(np.stack([p.beta for p in video.gt_params]))
        clean = np.empty((n, video.gt_joints.shape[1], 3))
        for i in range(n):
            clean[i, :, :2] = project_weak_perspective(video.gt_camera, video.gt_joints[i])
            clean[i, :, 2] = 1.0
        kps.append(clean)
    return PretrainSet(
        features=np.concatenate(feats),
        thetas=np.concatenate(thetas),
        betas=np.concatenate(betas),
        keypoints=np.concatenate(kps),
    )


def pose_code_error(params: dict, features, thetas) -> float:
    """Mean absolute 6D-code error of the regressor on given frames."""
    theta_hat, _, _ = hmr_forward(params, np.asarray(features, dtype=np.float64))
    return float(np.abs(theta_hat - np.asarray(thetas, dtype=np.float64)).mean())


@dataclass(frozen=True)
class HmrPretrainResult:
    params: dict
    curve: list  # (step, source pose-code error) pairs
    tau: float  # final source pose-code error


def hmr_pretrain(
    model: BodyModel,
    config: HmrConfig,
    params: dict,
    videos,
    steps: int = 800,
    batch: int = 32,
    lr: float = 1e-3,
    beta_weight: float = 1.0,
    seed: int = 0,
) -> HmrPretrainResult:
    """Adam on L1(theta) + beta_weight * L1(beta) + reprojection, seeded batches.

    Unlike adaptation, the beta pull gets full weight here: the targets are
    ground truth, not a previous estimate.
    """
    if steps < 1 or batch < 1:
        raise ValueError(f"hmr_pretrain: steps and batch must be >= 1, got {steps}, {batch}")
    if beta_weight < 0:
        raise ValueError(f"hmr_pretrain: beta_weight must be >= 0, got {beta_weight}")
    data = pretrain_set(videos)
    rng = np.random.default_rng(seed)
    eval_idx = rng.choice(data.size, size=min(256, data.size), replace=False)
    state = adam_init(params)
    every = max(1, -(-steps // 5))

    def source_error(p: dict) -> float:
        return pose_code_error(p, data.features[eval_idx], data.thetas[eval_idx])

    curve = [(0, source_error(params))]
    for step in range(1, steps + 1):
        idx = rng.choice(data.size, size=min(batch, data.size), replace=False)
        g = Graph()
        theta, beta, cam = hmr_forward_graph(g, config, g.const(data.features[idx]))
        loss = hmr_loss_graph(
            g,
            model,
            theta,
            beta,
            cam,
            idx.size,
            data.keypoints[idx],
            pseudo_theta=data.thetas[idx],
            pseudo_beta=data.betas[idx],
            gamma=beta_weight,
        )
        values = evaluate(g, params)
        grads = backward_from_values(g, values, loss)
        params = adam_step(params, grads, state, lr)
        if step % every == 0 or step == steps:
            curve.append((step, source_error(params)))
    return HmrPretrainResult(params=params, curve=curve, tau=curve[-1][1])
