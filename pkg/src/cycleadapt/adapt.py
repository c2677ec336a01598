"""Cyclic test-time adaptation: two networks fine-tuning each other.

Each cycle runs one epoch of regressor updates over the video (batches in a
seeded-shuffled order, loss = 2D reprojection plus an L1 pull toward stored
pseudo-ground-truth, the latter disabled in the first cycle), then a handful
of denoiser updates on random windows of the stored poses (masked
self-supervision), whose unmasked outputs overwrite the stored thetas. A
single cosine learning-rate schedule spans every optimizer step of the whole
run, with separate Adam moments per network.

Nothing in this module reads 3D ground truth. Adaptation consumes features
and 2D keypoints only (`AdaptInputs`); quality measurement happens through
an optional evaluator callback that the caller builds from whatever
references it holds.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bodymodel import BETA_SIZE, THETA_SIZE, BodyModel
from .checkpoint import save_hmr, save_md
from .diffcore import Graph, backward, backward_from_values, evaluate
from .hmrnet import HmrConfig, hmr_forward, hmr_forward_graph, hmr_loss_graph
from .mdnet import (
    MdConfig,
    gaussian_filter_baseline,
    md_forward,
    md_forward_graph,
    md_loss_graph,
    sample_mask,
)
from .optim import adam_init, adam_step, cosine_lr  # noqa: F401  (cosine_lr is part of this module's API)

DENOISERS = ("mdnet", "gaussian")


class InvariantError(RuntimeError):
    """An adaptation-loop precondition or store contract was violated."""


@dataclass(frozen=True)
class AdaptInputs:
    """What adaptation is allowed to see: per-frame features and 2D keypoints."""

    features: np.ndarray  # (N, F)
    keypoints: np.ndarray  # (N, J, 3) as (x, y, confidence)

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=np.float64)
        kps = np.asarray(self.keypoints, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise ValueError(f"AdaptInputs.features must be (N, F), got {feats.shape}")
        if kps.ndim != 3 or kps.shape[0] != feats.shape[0] or kps.shape[2] != 3:
            raise ValueError(f"AdaptInputs.keypoints must be (N, J, 3), got {kps.shape}")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "keypoints", kps)

    @property
    def frame_count(self) -> int:
        return self.features.shape[0]


def adapt_inputs(video) -> AdaptInputs:
    """Strip a synthetic video down to what adaptation may consume."""
    return AdaptInputs(
        features=np.array(video.features),
        keypoints=np.stack([kp.points for kp in video.keypoints]),
    )


class ResultStore:
    """Frame-indexed pseudo-ground-truth dictionary, zero-initialized.

    `write_hmr` replaces both parameter vectors and marks the rows as raw
    regressor output; `write_md` replaces thetas only and marks the rows as
    denoised. `md_written` is what the online loop keys on to decide whether
    a stored row may serve as a 3D target.
    """

    def __init__(self, n_frames: int) -> None:
        if n_frames < 1:
            raise InvariantError(f"ResultStore needs at least one frame, got {n_frames}")
        self.theta = np.zeros((n_frames, THETA_SIZE))
        self.beta = np.zeros((n_frames, BETA_SIZE))
        self.md_written = np.zeros(n_frames, dtype=bool)

    @property
    def size(self) -> int:
        return self.theta.shape[0]

    def fetch(self, indices) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(indices, dtype=int)
        return self.theta[idx].copy(), self.beta[idx].copy()

    def write_hmr(self, indices, theta, beta) -> None:
        idx = np.asarray(indices, dtype=int)
        theta = np.asarray(theta, dtype=np.float64)
        beta = np.asarray(beta, dtype=np.float64)
        if theta.shape != (idx.size, THETA_SIZE) or beta.shape != (idx.size, BETA_SIZE):
            raise InvariantError(f"write_hmr: got theta {theta.shape}, beta {beta.shape} for {idx.size} rows")
        self.theta[idx] = theta
        self.beta[idx] = beta
        self.md_written[idx] = False

    def write_md(self, indices, theta) -> None:
        idx = np.asarray(indices, dtype=int)
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (idx.size, THETA_SIZE):
            raise InvariantError(f"write_md: got theta {theta.shape} for {idx.size} rows")
        self.theta[idx] = theta
        self.md_written[idx] = True


@dataclass(frozen=True)
class AdaptConfig:
    cycles: int = 12
    batch: int = 32
    lr_start: float = 5e-5
    lr_end: float = 1e-6
    gamma: float = 0.001
    window: int = 49
    seed: int = 0
    frozen_mdnet: bool = False
    frozen_hmrnet: bool = False
    no_3d_loss: bool = False
    unweighted_2d: bool = False
    md_denoiser: str = "mdnet"
    gaussian_std: float = 2.0

    def __post_init__(self) -> None:
        if self.cycles < 0:
            raise ValueError(f"AdaptConfig.cycles must be >= 0, got {self.cycles}")
        for name in ("batch", "window"):
            if getattr(self, name) < 1:
                raise ValueError(f"AdaptConfig.{name} must be >= 1")
        if self.lr_start < self.lr_end or self.lr_end < 0:
            raise ValueError("AdaptConfig: need lr_start >= lr_end >= 0")
        if self.gamma < 0:
            raise ValueError(f"AdaptConfig.gamma must be >= 0, got {self.gamma}")
        if self.seed < 0:
            raise ValueError(f"AdaptConfig.seed must be >= 0, got {self.seed}")
        if self.md_denoiser not in DENOISERS:
            raise ValueError(f"AdaptConfig.md_denoiser must be one of {DENOISERS}, got {self.md_denoiser!r}")
        if self.gaussian_std <= 0:
            raise ValueError(f"AdaptConfig.gaussian_std must be > 0, got {self.gaussian_std}")


@dataclass
class AdaptOptimizers:
    """Shared step clock plus one Adam state per network."""

    hmr: object
    md: object
    clock: int
    total_steps: int


def windows_per_cycle(n_frames: int, window: int) -> int:
    return -(-n_frames // window)


def _lr(opt: AdaptOptimizers, config: AdaptConfig) -> float:
    return cosine_lr(min(opt.clock, opt.total_steps), opt.total_steps, config.lr_start, config.lr_end)


def hmr_stage(
    inputs: AdaptInputs,
    store: ResultStore,
    model: BodyModel,
    hmr_config: HmrConfig,
    hmr_params: dict,
    opt: AdaptOptimizers,
    config: AdaptConfig,
    cycle_index: int,
    rng: np.random.Generator,
    trace=None,
) -> dict:
    """One seeded-shuffled epoch of regressor updates; returns new parameters.

    Pseudo targets come from the store as written by the previous cycle;
    they are ignored entirely in cycle 1. Every batch's forward outputs are
    written back to the store after that batch's update.
    """
    n = inputs.frame_count
    if store.size != n:
        raise InvariantError(f"hmr_stage: store has {store.size} rows for {n} frames")
    use_pseudo = cycle_index > 1 and not config.no_3d_loss
    order = rng.permutation(n)
    params = hmr_params
    for lo in range(0, n, config.batch):
        idx = order[lo : lo + config.batch]
        pseudo_theta, pseudo_beta = store.fetch(idx)
        g = Graph()
        theta, beta, cam = hmr_forward_graph(g, hmr_config, g.const(inputs.features[idx]))
        loss = hmr_loss_graph(
            g,
            model,
            theta,
            beta,
            cam,
            idx.size,
            inputs.keypoints[idx],
            pseudo_theta=pseudo_theta if use_pseudo else None,
            pseudo_beta=pseudo_beta if use_pseudo else None,
            gamma=config.gamma,
            unweighted=config.unweighted_2d,
        )
        values = evaluate(g, params)
        if trace is not None:
            if use_pseudo:
                l_smpl = float(
                    np.abs(values[theta] - pseudo_theta).mean()
                    + config.gamma * np.abs(values[beta] - pseudo_beta).mean()
                )
            else:
                l_smpl = 0.0
            trace.setdefault("l_smpl", []).append((cycle_index, l_smpl))
        out_theta = values[theta]
        out_beta = values[beta]
        if not config.frozen_hmrnet:
            grads = backward_from_values(g, values, loss)
            params = adam_step(params, grads, opt.hmr, _lr(opt, config))
            opt.clock += 1
        store.write_hmr(idx, out_theta, out_beta)
    return params


def md_stage(
    store: ResultStore,
    md_config: MdConfig,
    md_params: dict,
    opt: AdaptOptimizers,
    config: AdaptConfig,
    rng: np.random.Generator,
    trace=None,
) -> dict:
    """Denoiser updates on random store windows, then unmasked write-backs.

    Touches thetas only. With the gaussian denoiser the whole sequence is
    filtered once instead; with a frozen denoiser the write-backs still
    happen but no parameter moves.
    """
    n = store.size
    t = config.window
    beta_before = store.beta.copy() if trace is not None else None
    params = md_params

    if config.md_denoiser == "gaussian":
        store.write_md(np.arange(n), gaussian_filter_baseline(store.theta, config.gaussian_std))
    else:
        for _ in range(windows_per_cycle(n, t)):
            if n >= t:
                start = int(rng.integers(0, n - t + 1))
                idx = np.arange(start, start + t)
                window_theta = store.theta[idx].copy()
                mask = sample_mask(t, rng)
                real = t
            else:
                # edge-replicate to a full window; padded rows never enter
                # the mask, the loss, or the write-back
                idx = np.arange(n)
                window_theta = np.concatenate([store.theta, np.repeat(store.theta[-1:], t - n, axis=0)])
                mask = np.concatenate([sample_mask(n, rng), np.zeros(t - n)])
                real = n
            if trace is not None:
                trace.setdefault("mask_counts", []).append(int(mask.sum()))
            if not config.frozen_mdnet:
                masked_input = np.where(mask[:, None] > 0, 0.0, window_theta)
                g = Graph()
                out = md_forward_graph(g, md_config, g.const(masked_input))
                loss = md_loss_graph(g, out, window_theta, mask)
                grads = backward(g, params, loss)
                params = adam_step(params, grads, opt.md, _lr(opt, config))
                opt.clock += 1
            denoised = md_forward(params, window_theta, ramp=md_config.ramp)
            store.write_md(idx, denoised[:real])

    if trace is not None and not np.array_equal(beta_before, store.beta):
        trace["md_beta_changed"] = True
    return params


@dataclass
class AdaptRun:
    hmr_params: dict
    md_params: dict
    store: ResultStore
    rows: list  # (cycle, source, report) tuples
    steps_taken: int


def _log_rows(rows, cycle, evaluator, hmr_params, inputs, store) -> None:
    theta, beta, _ = hmr_forward(hmr_params, inputs.features)
    rows.append((cycle, "hmrnet", evaluator(theta, beta)))
    if store is not None:
        rows.append((cycle, "store", evaluator(store.theta.copy(), store.beta.copy())))


def cycle_adapt(
    inputs: AdaptInputs,
    model: BodyModel,
    hmr_config: HmrConfig,
    hmr_params: dict,
    md_config: MdConfig,
    md_params: dict,
    config: AdaptConfig,
    evaluator=None,
    trace=None,
    checkpoint_dir=None,
) -> AdaptRun:
    """The full offline loop: `cycles` alternations of the two stages.

    The cycle-0 row evaluates the unadapted regressor (the zeroed store is
    not evaluable: zero pose codes are degenerate). Each later cycle logs
    one row for the regressor's outputs and one for the store contents.
    """
    if config.window != md_config.window:
        raise InvariantError(
            f"cycle_adapt: config.window {config.window} != denoiser window {md_config.window}"
        )
    n = inputs.frame_count
    store = ResultStore(n)
    if trace is not None:
        trace["store_init_max_abs"] = float(max(np.abs(store.theta).max(), np.abs(store.beta).max()))

    hmr_steps = 0 if config.frozen_hmrnet else -(-n // config.batch)
    md_trainable = not (config.no_3d_loss or config.frozen_mdnet or config.md_denoiser != "mdnet")
    md_steps = windows_per_cycle(n, config.window) if md_trainable else 0
    opt = AdaptOptimizers(
        hmr=adam_init(hmr_params),
        md=adam_init(md_params),
        clock=0,
        total_steps=max(1, config.cycles * (hmr_steps + md_steps)),
    )

    rows: list = []
    if evaluator is not None:
        _log_rows(rows, 0, evaluator, hmr_params, inputs, None)
    for cycle in range(1, config.cycles + 1):
        hmr_rng = np.random.default_rng(np.random.SeedSequence([config.seed, cycle, 0]))
        hmr_params = hmr_stage(
            inputs, store, model, hmr_config, hmr_params, opt, config, cycle, hmr_rng, trace
        )
        if not config.no_3d_loss:
            md_rng = np.random.default_rng(np.random.SeedSequence([config.seed, cycle, 1]))
            md_params = md_stage(store, md_config, md_params, opt, config, md_rng, trace)
        if evaluator is not None:
            _log_rows(rows, cycle, evaluator, hmr_params, inputs, store)
        if checkpoint_dir is not None:
            save_hmr(Path(checkpoint_dir) / f"hmr_cycle{cycle:02d}.ckpt", hmr_config, hmr_params)
            save_md(Path(checkpoint_dir) / f"md_cycle{cycle:02d}.ckpt", md_config, md_params)
    return AdaptRun(hmr_params, md_params, store, rows, steps_taken=opt.clock)


@dataclass
class OnlineRun:
    hmr_params: dict
    md_params: dict
    theta: np.ndarray  # (N, 144) causal per-frame outputs
    beta: np.ndarray  # (N, 10)
    report: object
    steps_taken: int


def online_adapt(
    inputs: AdaptInputs,
    model: BodyModel,
    hmr_config: HmrConfig,
    hmr_params: dict,
    md_config: MdConfig,
    md_params: dict,
    config: AdaptConfig,
    evaluator=None,
) -> OnlineRun:
    """Single causal pass: per-frame regressor updates, denoiser every T frames.

    Each arriving frame is adapted on a replay batch of itself plus up to
    batch-1 seeded past frames; the 3D pull applies per sample and only to
    rows the denoiser has written. The recorded output for frame i is the
    forward pass at arrival time, and the learning rate stays at lr_start
    (a schedule over the total frame count would leak the video's length
    into early steps), so truncating the video never changes earlier
    outputs.
    """
    if config.window != md_config.window:
        raise InvariantError(
            f"online_adapt: config.window {config.window} != denoiser window {md_config.window}"
        )
    n = inputs.frame_count
    t = config.window
    store = ResultStore(n)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0, 2]))
    md_active = not config.no_3d_loss
    md_trainable = md_active and config.md_denoiser == "mdnet" and not config.frozen_mdnet
    hmr_steps = 0 if config.frozen_hmrnet else n
    md_steps = (n // t) if md_trainable else 0
    opt = AdaptOptimizers(
        hmr=adam_init(hmr_params), md=adam_init(md_params), clock=0, total_steps=max(1, hmr_steps + md_steps)
    )
    out_theta = np.zeros((n, THETA_SIZE))
    out_beta = np.zeros((n, BETA_SIZE))

    for i in range(n):
        if i > 0:
            past = rng.choice(i, size=min(i, config.batch - 1), replace=False)
            idx = np.concatenate([[i], past]).astype(int)
        else:
            idx = np.array([i])
        g = Graph()
        theta, beta, cam = hmr_forward_graph(g, hmr_config, g.const(inputs.features[idx]))
        loss = hmr_loss_graph(
            g, model, theta, beta, cam, idx.size, inputs.keypoints[idx], unweighted=config.unweighted_2d
        )
        selected = store.md_written[idx]
        if md_active and np.any(selected):
            pseudo_theta, pseudo_beta = store.fetch(idx)
            l_theta = g.mean_abs(g.sub(g.mask_select(theta, selected), g.const(pseudo_theta[selected])))
            l_beta = g.scalar_mul(
                g.mean_abs(g.sub(g.mask_select(beta, selected), g.const(pseudo_beta[selected]))),
                config.gamma,
            )
            loss = g.add(loss, g.add(l_theta, l_beta))
        values = evaluate(g, hmr_params)
        out_theta[i] = values[theta][0]
        out_beta[i] = values[beta][0]
        if not config.frozen_hmrnet:
            grads = backward_from_values(g, values, loss)
            hmr_params = adam_step(hmr_params, grads, opt.hmr, config.lr_start)
            opt.clock += 1
        store.write_hmr(np.array([i]), out_theta[i : i + 1], out_beta[i : i + 1])

        if md_active and (i + 1) % t == 0:
            idx_w = np.arange(i - t + 1, i + 1)
            window_theta = store.theta[idx_w].copy()
            if config.md_denoiser == "gaussian":
                store.write_md(idx_w, gaussian_filter_baseline(window_theta, config.gaussian_std))
            else:
                if md_trainable:
                    mask = sample_mask(t, rng)
                    masked_input = np.where(mask[:, None] > 0, 0.0, window_theta)
                    g2 = Graph()
                    out = md_forward_graph(g2, md_config, g2.const(masked_input))
                    md_loss = md_loss_graph(g2, out, window_theta, mask)
                    grads = backward(g2, md_params, md_loss)
                    md_params = adam_step(md_params, grads, opt.md, config.lr_start)
                    opt.clock += 1
                store.write_md(idx_w, md_forward(md_params, window_theta, ramp=md_config.ramp))

    report = evaluator(out_theta, out_beta) if evaluator is not None else None
    return OnlineRun(hmr_params, md_params, out_theta, out_beta, report, steps_taken=opt.clock)
