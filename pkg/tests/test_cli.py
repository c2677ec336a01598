"""Command line behavior on a shrunken pipeline: every subcommand, the CSV
dialect, config round trips, and the documented exit codes.
"""

import json
from pathlib import Path

import pytest

from cycleadapt import cli
from cycleadapt.adapt import InvariantError
from cycleadapt.metrics import MetricReport
from cycleadapt.synth import read_video

TINY = {
    "seed": 0,
    "paths": {"out_dir": "out", "hmr_ckpt": "nets/hmr.ckpt", "md_ckpt": "nets/md.ckpt"},
    "hmr": {"feature_dim": 16, "hidden_dim": 24, "num_hidden_layers": 1},
    "md": {"window": 9, "blocks": 1},
    "adapt": {"cycles": 2, "batch": 8},
    "body": {"vertices": 24},
    "synth": {"video_frames": 24, "source_count": 2, "source_frames": 40},
    "pretrain": {"hmr_steps": 60, "md_plan": [[60, 0.001]]},
}


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """One pretrained workspace shared by the command tests."""
    root = tmp_path_factory.mktemp("cli")
    config = json.loads(json.dumps(TINY))
    config["paths"] = {
        "out_dir": str(root / "out"),
        "hmr_ckpt": str(root / "nets" / "hmr.ckpt"),
        "md_ckpt": str(root / "nets" / "md.ckpt"),
    }
    cfg_path = root / "c.json"
    cfg_path.write_text(json.dumps(config))
    assert cli.run(["pretrain", "--config", str(cfg_path), "--out", str(root / "pre")]) == 0
    return {"root": root, "config": config, "cfg_path": cfg_path}


def _row(mpjpe=1.0, pa=0.5, mpvpe=2.0, accel=0.25):
    return MetricReport(mpjpe=mpjpe, pa_mpjpe=pa, mpvpe=mpvpe, accel=accel)


def test_metrics_csv_empty_rows_is_header_only(tmp_path):
    path = tmp_path / "m.csv"
    cli.emit_metrics_csv(path, [])
    assert path.read_bytes() == b"cycle,source,mpjpe,pa_mpjpe,mpvpe,accel\n"


def test_metrics_csv_uses_six_significant_digits_and_lf(tmp_path):
    path = tmp_path / "m.csv"
    cli.emit_metrics_csv(path, [(3, "hmrnet", _row(mpjpe=1234.56789, pa=0.000123456789))])
    raw = path.read_bytes()
    assert b"\r" not in raw
    assert raw.split(b"\n")[1] == b"3,hmrnet,1234.57,0.000123457,2,0.25"


def test_metrics_csv_parse_back_round_trips(tmp_path):
    rows = [(0, "hmrnet", _row(9.87654321, 3.14159265, 12.3456789, 0.111111111)),
            (1, "store", _row(8.0, 4.0, 10.0, 0.5))]
    path = tmp_path / "m.csv"
    cli.emit_metrics_csv(path, rows)
    parsed = cli.parse_metrics_csv(path)
    assert [(c, s) for c, s, _ in parsed] == [(0, "hmrnet"), (1, "store")]
    # a second emit of the parsed rows reproduces the file exactly
    again = tmp_path / "m2.csv"
    cli.emit_metrics_csv(again, parsed)
    assert again.read_bytes() == path.read_bytes()


def test_parse_metrics_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("cycle,src,mpjpe\n")
    with pytest.raises(cli.ConfigError, match="header"):
        cli.parse_metrics_csv(path)


def test_config_round_trips_through_dict():
    cfg = cli.default_config()
    assert cli.config_from_dict(cli.config_to_dict(cfg)) == cfg
    cfg2 = cli.config_from_dict(json.loads(json.dumps(TINY)))
    assert cli.config_from_dict(cli.config_to_dict(cfg2)) == cfg2


def test_config_rejects_unknown_keys():
    with pytest.raises(cli.ConfigError, match="typo"):
        cli.config_from_dict({"typo": 1})
    with pytest.raises(cli.ConfigError, match="momentum"):
        cli.config_from_dict({"adapt": {"momentum": 0.9}})


def test_config_rejects_duplicate_paths():
    with pytest.raises(cli.ConfigError, match="distinct"):
        cli.config_from_dict({"paths": {"hmr_ckpt": "a/x.ckpt", "md_ckpt": "a/x.ckpt"}})


def test_config_rejects_bad_plan():
    with pytest.raises(cli.ConfigError, match="md_plan"):
        cli.config_from_dict({"pretrain": {"md_plan": [[0, 1e-3]]}})
    with pytest.raises(cli.ConfigError, match="md_plan"):
        cli.config_from_dict({"pretrain": {"md_plan": "soon"}})


def test_run_missing_config_exits_1(tmp_path, capsys):
    missing = tmp_path / "absent.json"
    assert cli.run(["adapt", "--config", str(missing)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_run_invalid_json_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.run(["adapt", "--config", str(bad)]) == 1
    assert str(bad) in capsys.readouterr().err


def test_run_usage_error_exits_1(capsys):
    assert cli.run(["ablate", "--config", "c.json"]) == 1  # --suite is required
    assert cli.run(["no-such-command"]) == 1
    capsys.readouterr()


def test_synth_writes_both_videos_and_echo(ws, tmp_path):
    out = tmp_path / "vids"
    assert cli.run(["synth", "--config", str(ws["cfg_path"]), "--out", str(out)]) == 0
    src, src_spec = read_video(out / "source.video")
    tgt, tgt_spec = read_video(out / "target.video")
    assert src.frame_count == TINY["synth"]["source_frames"]
    assert tgt.frame_count == TINY["synth"]["video_frames"]
    assert src_spec.name == "source" and tgt_spec.name == "target"
    echoed = cli.load_config(out / "config.json")
    assert echoed.out_dir == str(out)
    assert echoed.hmr == cli.load_config(ws["cfg_path"]).hmr


def test_pretrain_wrote_checkpoints_and_tau(ws):
    assert Path(ws["config"]["paths"]["hmr_ckpt"]).exists()
    assert Path(ws["config"]["paths"]["md_ckpt"]).exists()
    tau = json.loads((ws["root"] / "pre" / "pretrain.json").read_text())["tau"]
    assert tau > 0.0


def test_adapt_writes_rows_and_cycle_checkpoints(ws, tmp_path):
    out = tmp_path / "run"
    assert cli.run(["adapt", "--config", str(ws["cfg_path"]), "--out", str(out)]) == 0
    rows = cli.parse_metrics_csv(out / "metrics.csv")
    cycles = TINY["adapt"]["cycles"]
    assert len(rows) == 1 + 2 * cycles  # cycle-0 row, then hmrnet+store per cycle
    assert rows[0][:2] == (0, "hmrnet")
    for c in range(1, cycles + 1):
        assert (out / f"hmr_cycle{c:02d}.ckpt").exists()
        assert (out / f"md_cycle{c:02d}.ckpt").exists()
    assert (out / "config.json").exists()


def test_adapt_repeat_is_byte_identical(ws, tmp_path):
    args = ["adapt", "--config", str(ws["cfg_path"]), "--seed", "3"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(args + ["--out", str(a)]) == 0
    assert cli.run(args + ["--out", str(b)]) == 0
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    last = f"hmr_cycle{TINY['adapt']['cycles']:02d}.ckpt"
    assert (a / last).read_bytes() == (b / last).read_bytes()


def test_adapt_seed_changes_the_video_and_the_metrics(ws, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(["adapt", "--config", str(ws["cfg_path"]), "--seed", "1", "--out", str(a)]) == 0
    assert cli.run(["adapt", "--config", str(ws["cfg_path"]), "--seed", "2", "--out", str(b)]) == 0
    assert (a / "metrics.csv").read_bytes() != (b / "metrics.csv").read_bytes()


def test_adapt_online_writes_single_row_and_final_nets(ws, tmp_path):
    out = tmp_path / "onl"
    assert cli.run(["adapt", "--config", str(ws["cfg_path"]), "--online", "--out", str(out)]) == 0
    rows = cli.parse_metrics_csv(out / "metrics.csv")
    assert [(c, s) for c, s, _ in rows] == [(0, "hmrnet")]
    assert (out / "hmr_final.ckpt").exists() and (out / "md_final.ckpt").exists()


def test_eval_matches_the_unadapted_adapt_row(ws, tmp_path):
    vids, run, ev = tmp_path / "vids", tmp_path / "run", tmp_path / "ev"
    base = ["--config", str(ws["cfg_path"]), "--seed", "5"]
    assert cli.run(["synth"] + base + ["--out", str(vids)]) == 0
    assert cli.run(["adapt"] + base + ["--out", str(run)]) == 0
    assert cli.run(["eval"] + base + ["--video", str(vids / "target.video"), "--out", str(ev)]) == 0
    eval_rows = cli.parse_metrics_csv(ev / "metrics.csv")
    adapt_rows = cli.parse_metrics_csv(run / "metrics.csv")
    assert eval_rows[0] == adapt_rows[0]


def test_eval_without_video_exits_1(ws, capsys):
    assert cli.run(["eval", "--config", str(ws["cfg_path"])]) == 1
    assert "video" in capsys.readouterr().err


def test_checkpoint_config_mismatch_exits_1(ws, tmp_path, capsys):
    config = json.loads(json.dumps(ws["config"]))
    config["hmr"]["hidden_dim"] = 32  # checkpoints on disk were trained at 24
    cfg_path = tmp_path / "mismatch.json"
    cfg_path.write_text(json.dumps(config))
    assert cli.run(["adapt", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 1
    assert config["paths"]["hmr_ckpt"] in capsys.readouterr().err


@pytest.mark.parametrize(
    "suite,labels",
    [
        ("table2", ["no_adapt", "2d_only", "3d_noncyclic", "full_cyclic"]),
        ("table1", ["frozen_hmrnet", "store_before", "store_after"]),
        ("table4", ["full_cyclic", "gaussian"]),
        ("suppE", ["pretrained", "random_init"]),
    ],
)
def test_ablate_suites_emit_one_row_per_configuration(ws, tmp_path, suite, labels):
    out = tmp_path / suite
    assert cli.run(["ablate", "--config", str(ws["cfg_path"]), "--suite", suite, "--out", str(out)]) == 0
    rows = cli.parse_metrics_csv(out / "ablate.csv")
    assert [s for _, s, _ in rows] == labels
    assert all(rep.mpjpe > 0 for _, _, rep in rows)


def test_invariant_failure_exits_2(ws, tmp_path, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise InvariantError("store written out of order")

    monkeypatch.setattr(cli, "cycle_adapt", boom)
    code = cli.run(["adapt", "--config", str(ws["cfg_path"]), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "store written out of order" in capsys.readouterr().err
