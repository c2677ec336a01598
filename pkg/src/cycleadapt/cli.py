"""Command line front end: one JSON config file drives every stage.

Subcommands cover the whole pipeline on synthetic data:

  synth     write one source-domain and one target-domain video to disk
  pretrain  train both networks on generated source videos, save checkpoints
  adapt     run offline cyclic (or online causal) adaptation on the target
  eval      recompute the error report for any checkpoint + video pair
  ablate    run a named suite of configurations into one combined CSV

Every command echoes its effective config as ``config.json`` into the
output directory, so any run is reproducible from that file and nothing
else.  The only environment variable consulted is CYCLEADAPT_THREADS
(evaluation parallelism; it never changes results).

Exit codes: 0 success, 1 unusable config or file (the message names the
offending path), 2 a violated internal invariant.  The ``online`` flag
makes ``frozen_mdnet`` pointless (the causal pass owns its own denoiser
updates); that combination is documented here rather than rejected.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .adapt import (
    AdaptConfig,
    InvariantError,
    adapt_inputs,
    cycle_adapt,
    online_adapt,
)
from .benchmark import (
    BODY_SCALE,
    BODY_SEED,
    GAP_ALPHA,
    HMR_CONFIG,
    HMR_PRETRAIN_LR,
    HMR_PRETRAIN_STEPS,
    JOINTS,
    MD_CONFIG,
    MD_PRETRAIN_PLAN,
    MD_PRETRAIN_SIGMA,
    N_FRAMES,
    SOURCE_FRAMES,
    SOURCE_SEEDS,
    VERTICES,
    make_evaluator,
    source_domain,
    target_domain,
    variant_config,
)
from .bodymodel import BodyModel, build_toy_body, scale_body
from .checkpoint import CheckpointError, load_hmr, load_md, save_hmr, save_md
from .hmrnet import HmrConfig, hmr_forward, hmr_init
from .mdnet import MdConfig, md_init, md_pretrain
from .metrics import MetricReport
from .pretrain import hmr_pretrain
from .synth import (
    DomainSpec,
    VideoFormatError,
    make_video,
    mixing_matrices,
    read_video,
    write_video,
)

CSV_HEADER = "cycle,source,mpjpe,pa_mpjpe,mpvpe,accel"

FLAGS = ("frozen_mdnet", "no_3d_loss", "random_init", "online", "unweighted_2d")

SUITES = {
    "table1": ("frozen_hmrnet", "store_before", "store_after"),
    "table2": ("no_adapt", "2d_only", "3d_noncyclic", "full_cyclic"),
    "table4": ("full_cyclic", "gaussian"),
    "suppE": ("pretrained", "random_init"),
}

_DEFAULT_PATHS = {
    "out_dir": "run_out",
    "hmr_ckpt": "hmr.ckpt",
    "md_ckpt": "md.ckpt",
    "video": None,
}
_DEFAULT_ADAPT = {
    "cycles": 12,
    "batch": 32,
    "lr_start": 5e-5,
    "lr_end": 1e-6,
    "gamma": 1e-3,
    "md_denoiser": "mdnet",
    "gaussian_std": 2.0,
}


class ConfigError(ValueError):
    """The config file (or a file it references) cannot be used as given."""


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs; the JSON file mirrors this, in sections.

    The five mode flags live at the top level and are folded into the
    adaptation stage config together with the seed and the denoiser window,
    so a flag is never specified in two places.
    """

    seed: int
    out_dir: str
    hmr_ckpt: str
    md_ckpt: str
    video: str | None
    frozen_mdnet: bool
    no_3d_loss: bool
    random_init: bool
    online: bool
    unweighted_2d: bool
    hmr: HmrConfig
    md: MdConfig
    cycles: int
    batch: int
    lr_start: float
    lr_end: float
    gamma: float
    md_denoiser: str
    gaussian_std: float
    source: DomainSpec
    target: DomainSpec
    body_seed: int
    body_joints: int
    body_vertices: int
    body_scale: float
    video_frames: int
    gap_alpha: float
    source_count: int
    source_frames: int
    hmr_steps: int
    hmr_lr: float
    md_sigma: float
    md_plan: tuple

    def __post_init__(self) -> None:
        named = {"out_dir": self.out_dir, "hmr_ckpt": self.hmr_ckpt, "md_ckpt": self.md_ckpt}
        if self.video is not None:
            named["video"] = self.video
        seen: dict = {}
        for label, p in named.items():
            key = os.path.normpath(str(p))
            if key in seen:
                raise ConfigError(f"paths must be distinct: {seen[key]} and {label} both name {key!r}")
            seen[key] = label
        for name in ("video_frames", "source_count", "source_frames", "hmr_steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"RunConfig.{name} must be >= 1")
        if not 0.0 <= self.gap_alpha <= 1.0:
            raise ConfigError(f"RunConfig.gap_alpha must be in [0, 1], got {self.gap_alpha}")
        if self.hmr_lr <= 0 or self.md_sigma < 0:
            raise ConfigError("RunConfig: need hmr_lr > 0 and md_sigma >= 0")
        if not self.md_plan or any(s < 1 or lr <= 0 for s, lr in self.md_plan):
            raise ConfigError("RunConfig.md_plan needs at least one (steps >= 1, lr > 0) stage")
        self.adapt_config()  # surface bad stage knobs at load time, not mid-run

    def adapt_config(self) -> AdaptConfig:
        return AdaptConfig(
            cycles=self.cycles,
            batch=self.batch,
            lr_start=self.lr_start,
            lr_end=self.lr_end,
            gamma=self.gamma,
            window=self.md.window,
            seed=self.seed,
            frozen_mdnet=self.frozen_mdnet,
            no_3d_loss=self.no_3d_loss,
            unweighted_2d=self.unweighted_2d,
            md_denoiser=self.md_denoiser,
            gaussian_std=self.gaussian_std,
        )


def _take(section: dict, allowed: dict, where: str) -> dict:
    out = {key: section.pop(key, default) for key, default in allowed.items()}
    if section:
        raise ConfigError(f"{where}: unknown key(s) {sorted(section)}; allowed: {sorted(allowed)}")
    return out


def _build(cls, section: dict, default, where: str):
    return cls(**_take(section, dataclasses.asdict(default), where))


def _parse_plan(raw, where: str) -> tuple:
    try:
        return tuple((int(steps), float(lr)) for steps, lr in raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: pretrain.md_plan must be a list of [steps, lr] pairs") from exc


def config_from_dict(data: dict, where: str = "<config>") -> RunConfig:
    data = dict(data)

    def section(name: str) -> dict:
        raw = data.pop(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"{where}: section {name!r} must be a JSON object")
        return dict(raw)

    paths = _take(section("paths"), dict(_DEFAULT_PATHS), f"{where} paths")
    flags = _take(section("flags"), {k: False for k in FLAGS}, f"{where} flags")
    hmr = _build(HmrConfig, section("hmr"), HMR_CONFIG, f"{where} hmr")
    md = _build(MdConfig, section("md"), MD_CONFIG, f"{where} md")
    knobs = _take(section("adapt"), dict(_DEFAULT_ADAPT), f"{where} adapt")
    source = _build(DomainSpec, section("source"), source_domain(), f"{where} source")
    target = _build(DomainSpec, section("target"), target_domain(), f"{where} target")
    body = _take(
        section("body"),
        {"seed": BODY_SEED, "joints": JOINTS, "vertices": VERTICES, "scale": BODY_SCALE},
        f"{where} body",
    )
    synth = _take(
        section("synth"),
        {
            "video_frames": N_FRAMES,
            "gap_alpha": GAP_ALPHA,
            "source_count": len(SOURCE_SEEDS),
            "source_frames": SOURCE_FRAMES,
        },
        f"{where} synth",
    )
    pre = _take(
        section("pretrain"),
        {
            "hmr_steps": HMR_PRETRAIN_STEPS,
            "hmr_lr": HMR_PRETRAIN_LR,
            "md_sigma": MD_PRETRAIN_SIGMA,
            "md_plan": [list(stage) for stage in MD_PRETRAIN_PLAN],
        },
        f"{where} pretrain",
    )
    seed = data.pop("seed", 0)
    if data:
        raise ConfigError(f"{where}: unknown top-level key(s) {sorted(data)}")
    return RunConfig(
        seed=int(seed),
        out_dir=str(paths["out_dir"]),
        hmr_ckpt=str(paths["hmr_ckpt"]),
        md_ckpt=str(paths["md_ckpt"]),
        video=None if paths["video"] is None else str(paths["video"]),
        **{k: bool(flags[k]) for k in FLAGS},
        hmr=hmr,
        md=md,
        **knobs,
        source=source,
        target=target,
        body_seed=int(body["seed"]),
        body_joints=int(body["joints"]),
        body_vertices=int(body["vertices"]),
        body_scale=float(body["scale"]),
        video_frames=int(synth["video_frames"]),
        gap_alpha=float(synth["gap_alpha"]),
        source_count=int(synth["source_count"]),
        source_frames=int(synth["source_frames"]),
        hmr_steps=int(pre["hmr_steps"]),
        hmr_lr=float(pre["hmr_lr"]),
        md_sigma=float(pre["md_sigma"]),
        md_plan=_parse_plan(pre["md_plan"], where),
    )


def config_to_dict(cfg: RunConfig) -> dict:
    """Inverse of config_from_dict; round trips exactly."""
    return {
        "seed": cfg.seed,
        "paths": {
            "out_dir": cfg.out_dir,
            "hmr_ckpt": cfg.hmr_ckpt,
            "md_ckpt": cfg.md_ckpt,
            "video": cfg.video,
        },
        "flags": {name: getattr(cfg, name) for name in FLAGS},
        "hmr": dataclasses.asdict(cfg.hmr),
        "md": dataclasses.asdict(cfg.md),
        "adapt": {name: getattr(cfg, name) for name in _DEFAULT_ADAPT},
        "source": dataclasses.asdict(cfg.source),
        "target": dataclasses.asdict(cfg.target),
        "body": {
            "seed": cfg.body_seed,
            "joints": cfg.body_joints,
            "vertices": cfg.body_vertices,
            "scale": cfg.body_scale,
        },
        "synth": {
            "video_frames": cfg.video_frames,
            "gap_alpha": cfg.gap_alpha,
            "source_count": cfg.source_count,
            "source_frames": cfg.source_frames,
        },
        "pretrain": {
            "hmr_steps": cfg.hmr_steps,
            "hmr_lr": cfg.hmr_lr,
            "md_sigma": cfg.md_sigma,
            "md_plan": [list(stage) for stage in cfg.md_plan],
        },
    }


def default_config() -> RunConfig:
    return config_from_dict({})


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a JSON object")
    try:
        return config_from_dict(data, where=str(p))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{p}: {exc}") from exc


def write_config_echo(cfg: RunConfig, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w", newline="\n") as fh:
        fh.write(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")


def format_metrics_rows(rows) -> str:
    """Pinned CSV dialect: exact header, six significant digits, LF only."""
    lines = [CSV_HEADER]
    for cycle, source, rep in rows:
        vals = ",".join(f"{v:.6g}" for v in (rep.mpjpe, rep.pa_mpjpe, rep.mpvpe, rep.accel))
        lines.append(f"{cycle},{source},{vals}")
    return "\n".join(lines) + "\n"


def emit_metrics_csv(path, rows) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="\n") as fh:
        fh.write(format_metrics_rows(rows))


def parse_metrics_csv(path) -> list:
    """Back to (cycle, source, MetricReport) rows, at the file's precision."""
    with open(path, newline="\n") as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0] != CSV_HEADER:
        raise ConfigError(f"{path}: expected header {CSV_HEADER!r}")
    rows = []
    for line in lines[1:]:
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 6:
            raise ConfigError(f"{path}: malformed row {line!r}")
        cycle, source = int(fields[0]), fields[1]
        rows.append((cycle, source, MetricReport(*(float(v) for v in fields[2:]))))
    return rows


def run_body(cfg: RunConfig) -> BodyModel:
    base = build_toy_body(cfg.body_seed, joints=cfg.body_joints, vertices=cfg.body_vertices)
    return scale_body(base, cfg.body_scale)


def blended_mixing(cfg: RunConfig):
    """Target features come from a blend of the two domains' linear maps."""
    a_src, b_src = mixing_matrices(cfg.source, cfg.hmr.feature_dim)
    a_tgt, b_tgt = mixing_matrices(cfg.target, cfg.hmr.feature_dim)
    a = cfg.gap_alpha
    return (1.0 - a) * a_src + a * a_tgt, (1.0 - a) * b_src + a * b_tgt


def source_videos(cfg: RunConfig, model: BodyModel) -> list:
    base = SOURCE_SEEDS[0]
    return [
        make_video(cfg.source, model, cfg.source_frames, cfg.hmr.feature_dim, base + i)
        for i in range(cfg.source_count)
    ]


def target_video(cfg: RunConfig, model: BodyModel):
    """The config's video file if given, else synthesized from (config, seed)."""
    if cfg.video is not None:
        video, _spec = read_video(cfg.video)
        if video.features.shape[1] != cfg.hmr.feature_dim:
            raise ConfigError(
                f"{cfg.video}: feature dim {video.features.shape[1]} does not match "
                f"the regressor's {cfg.hmr.feature_dim}"
            )
        if video.gt_joints.shape[1] != cfg.body_joints:
            raise ConfigError(
                f"{cfg.video}: {video.gt_joints.shape[1]} joints but the body has {cfg.body_joints}"
            )
        return video
    return make_video(
        cfg.target, model, cfg.video_frames, cfg.hmr.feature_dim, cfg.seed, mixing=blended_mixing(cfg)
    )


def load_nets(cfg: RunConfig) -> tuple[dict, dict]:
    if cfg.random_init:
        return hmr_init(cfg.hmr, seed=cfg.seed), md_init(cfg.md, seed=cfg.seed)
    hmr_config, hmr_params = load_hmr(cfg.hmr_ckpt)
    md_config, md_params = load_md(cfg.md_ckpt)
    if hmr_config != cfg.hmr:
        raise ConfigError(f"{cfg.hmr_ckpt}: checkpoint regressor config {hmr_config} != run's {cfg.hmr}")
    if md_config != cfg.md:
        raise ConfigError(f"{cfg.md_ckpt}: checkpoint denoiser config {md_config} != run's {cfg.md}")
    return hmr_params, md_params


def _last_row(run, source: str):
    rows = [(cycle, rep) for cycle, s, rep in run.rows if s == source]
    if not rows:
        raise InvariantError(f"adaptation produced no {source!r} rows")
    return rows[-1]


def cmd_synth(cfg: RunConfig) -> int:
    model = run_body(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # the source sample reuses the pretraining seed family so it looks like
    # one more training video; the target is the evaluation video itself
    src = make_video(cfg.source, model, cfg.source_frames, cfg.hmr.feature_dim, SOURCE_SEEDS[0] + cfg.seed)
    tgt = target_video(replace(cfg, video=None), model)
    write_video(out / "source.video", src, cfg.source)
    write_video(out / "target.video", tgt, cfg.target)
    write_config_echo(cfg, out)
    print(f"wrote {out / 'source.video'} ({src.frame_count} frames) and {out / 'target.video'} ({tgt.frame_count} frames)")
    return 0


def cmd_pretrain(cfg: RunConfig) -> int:
    model = run_body(cfg)
    videos = source_videos(cfg, model)
    result = hmr_pretrain(
        model, cfg.hmr, hmr_init(cfg.hmr, seed=0), videos, steps=cfg.hmr_steps, lr=cfg.hmr_lr, seed=0
    )
    motions = [np.stack([p.theta for p in v.gt_params]) for v in videos]
    md_params = md_init(cfg.md, seed=0)
    for stage, (steps, lr) in enumerate(cfg.md_plan):
        md_params, _ = md_pretrain(
            cfg.md, md_params, motions, sigma=cfg.md_sigma, steps=steps, lr=lr, seed=stage
        )
    for p in (cfg.hmr_ckpt, cfg.md_ckpt):
        Path(p).parent.mkdir(parents=True, exist_ok=True)
    save_hmr(cfg.hmr_ckpt, cfg.hmr, result.params)
    save_md(cfg.md_ckpt, cfg.md, md_params)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "pretrain.json", "w", newline="\n") as fh:
        fh.write(json.dumps({"tau": result.tau}) + "\n")
    write_config_echo(cfg, out)
    print(f"wrote {cfg.hmr_ckpt} and {cfg.md_ckpt}; source error tau={result.tau:.6g}")
    return 0


def cmd_adapt(cfg: RunConfig) -> int:
    model = run_body(cfg)
    video = target_video(cfg, model)
    hmr_params, md_params = load_nets(cfg)
    evaluator = make_evaluator(model, video)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.online:
        run = online_adapt(
            adapt_inputs(video), model, cfg.hmr, hmr_params, cfg.md, md_params,
            cfg.adapt_config(), evaluator=evaluator,
        )
        rows = [(0, "hmrnet", run.report)]
        save_hmr(out / "hmr_final.ckpt", cfg.hmr, run.hmr_params)
        save_md(out / "md_final.ckpt", cfg.md, run.md_params)
    else:
        run = cycle_adapt(
            adapt_inputs(video), model, cfg.hmr, hmr_params, cfg.md, md_params,
            cfg.adapt_config(), evaluator=evaluator, checkpoint_dir=out,
        )
        rows = run.rows
    emit_metrics_csv(out / "metrics.csv", rows)
    write_config_echo(cfg, out)
    cycle, rep = _last_row(run, "hmrnet") if not cfg.online else (0, run.report)
    print(f"wrote {out / 'metrics.csv'} ({len(rows)} rows); final mpjpe {rep.mpjpe:.6g} at cycle {cycle}")
    return 0


def cmd_eval(cfg: RunConfig, checkpoint, video_path) -> int:
    if video_path is None:
        raise ConfigError("eval needs a video file: pass --video or set paths.video")
    model = run_body(cfg)
    video, _spec = read_video(video_path)
    if video.gt_joints.shape[1] != cfg.body_joints:
        raise ConfigError(
            f"{video_path}: {video.gt_joints.shape[1]} joints but the body has {cfg.body_joints}"
        )
    hmr_config, params = load_hmr(checkpoint)
    if hmr_config != cfg.hmr:
        raise ConfigError(f"{checkpoint}: checkpoint regressor config {hmr_config} != run's {cfg.hmr}")
    if video.features.shape[1] != cfg.hmr.feature_dim:
        raise ConfigError(
            f"{video_path}: feature dim {video.features.shape[1]} does not match "
            f"the regressor's {cfg.hmr.feature_dim}"
        )
    theta, beta, _cam = hmr_forward(params, video.features)
    report = make_evaluator(model, video)(theta, beta)
    rows = [(0, "hmrnet", report)]
    out = Path(cfg.out_dir)
    emit_metrics_csv(out / "metrics.csv", rows)
    write_config_echo(cfg, out)
    print(format_metrics_rows(rows), end="")
    return 0


def cmd_ablate(cfg: RunConfig, suite: str) -> int:
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}, expected one of {sorted(SUITES)}")
    model = run_body(cfg)
    video = target_video(cfg, model)
    inputs = adapt_inputs(video)
    evaluator = make_evaluator(model, video)
    base = cfg.adapt_config()

    def run_with(config: AdaptConfig, hmr_params: dict, md_params: dict):
        return cycle_adapt(
            inputs, model, cfg.hmr, hmr_params, cfg.md, md_params, config, evaluator=evaluator
        )

    rows = []
    if suite in ("table2", "table4"):
        hmr_params, md_params = load_nets(cfg)
        for variant in SUITES[suite]:
            run = run_with(variant_config(variant, cfg.seed, base), hmr_params, md_params)
            cycle, rep = _last_row(run, "hmrnet")
            rows.append((cycle, variant, rep))
    elif suite == "table1":
        hmr_params, md_params = load_nets(cfg)
        before = run_with(replace(base, frozen_hmrnet=True, frozen_mdnet=True), hmr_params, md_params)
        after = run_with(replace(base, frozen_hmrnet=True, frozen_mdnet=False), hmr_params, md_params)
        for label, run, source in (
            ("frozen_hmrnet", before, "hmrnet"),
            ("store_before", before, "store"),
            ("store_after", after, "store"),
        ):
            cycle, rep = _last_row(run, source)
            rows.append((cycle, label, rep))
    else:  # suppE: same schedule from a pretrained vs a freshly seeded start
        pre = load_nets(replace(cfg, random_init=False))
        rnd = hmr_init(cfg.hmr, seed=cfg.seed), md_init(cfg.md, seed=cfg.seed)
        for label, (hmr_params, md_params) in (("pretrained", pre), ("random_init", rnd)):
            run = run_with(base, hmr_params, md_params)
            cycle, rep = _last_row(run, "hmrnet")
            rows.append((cycle, label, rep))
    out = Path(cfg.out_dir)
    emit_metrics_csv(out / "ablate.csv", rows)
    write_config_echo(cfg, out)
    print(f"wrote {out / 'ablate.csv'} ({len(rows)} configurations)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cycleadapt",
        description="Cyclic test-time adaptation of a mesh regressor and a motion denoiser.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_: str):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON run config file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="seed override")
        return p

    add("synth", "write a source video and a target video")
    add("pretrain", "train both networks on the source domain and save checkpoints")
    adapt_p = add("adapt", "adapt on the target video and write metrics.csv")
    adapt_p.add_argument("--online", action="store_true", help="single causal pass instead of offline cycles")
    eval_p = add("eval", "recompute metrics for a checkpoint on a video file")
    eval_p.add_argument("--checkpoint", help="regressor checkpoint (default: the config's)")
    eval_p.add_argument("--video", help="video file (default: the config's)")
    ablate_p = add("ablate", "run a suite of configurations into one combined CSV")
    ablate_p.add_argument("--suite", required=True, choices=sorted(SUITES))
    return parser


def run(argv) -> int:
    """Parse argv, dispatch, and map failures onto the documented exit codes."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse handles --help and usage errors itself
        return 0 if not exc.code else 1
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, out_dir=args.out)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "pretrain":
            return cmd_pretrain(cfg)
        if args.command == "adapt":
            if args.online:
                cfg = replace(cfg, online=True)
            return cmd_adapt(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint or cfg.hmr_ckpt, args.video or cfg.video)
        return cmd_ablate(cfg, args.suite)
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, CheckpointError, VideoFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
