"""Config round-trips, the paired evaluation protocol, the audit, plots, CLI."""

import dataclasses

import numpy as np
import pytest

from eqzero import env as envm
from eqzero.cli import EXIT_AUDIT, EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from eqzero.groups import C4
from eqzero.harness import (
    ExperimentConfig,
    EpisodeRecord,
    apply_sets,
    audit_model,
    compare_searches,
    config_from_text,
    config_to_text,
    episodes_csv,
    evaluate,
    report_csv,
    run_episode,
)
from eqzero.mcts import MCTSConfig, run_search
from eqzero.plotting import render_grouped_bars, render_line_chart
from eqzero.rngs import RngStream, rng_transport
from eqzero.training import TrainConfig
from eqzero.worldmodel import ModelConfig, WorldModel

SMALL_MODEL = ModelConfig(obs_channels=4, obs_size=6, n_actions=4, channels=2, hidden=4)
SMALL_ENV = envm.EnvConfig(side=6, n_ghosts=0, step_cap=10)
SMALL_MCTS = MCTSConfig(budget=4, discount=0.9)


def test_config_text_roundtrip():
    config = ExperimentConfig(
        env=envm.EnvConfig(side=9, n_ghosts=2, step_cap=50),
        model=ModelConfig(obs_size=9, channels=8, transition_mode="interacting"),
        mcts=MCTSConfig(budget=17, discount=0.9, q_normalize=True),
        train=TrainConfig(learning_rate=0.003, total_steps=11),
    )
    text = config_to_text(config)
    again = config_from_text(text)
    assert again == config
    assert config_to_text(again) == text


def test_config_overrides_and_errors():
    config = apply_sets(ExperimentConfig(), ["env.side=9", "mcts.budget=7", "run.variant=StdMuZero"])
    assert config.env.side == 9 and config.mcts.budget == 7
    assert config.run.variant == "StdMuZero"
    with pytest.raises(ValueError):
        apply_sets(ExperimentConfig(), ["nonsense"])
    with pytest.raises(KeyError):
        apply_sets(ExperimentConfig(), ["env.walls=3"])
    with pytest.raises(KeyError):
        config_from_text("[mystery]\nx = 1\n")


def test_run_config_validates_variant():
    with pytest.raises(ValueError):
        apply_sets(ExperimentConfig(), ["run.variant=NotAVariant"])


def _records_sorted(records):
    return sorted((r.setting, r.map_index, r.rotation, r.seed_index, r.episode_return)
                  for r in records)


def test_evaluate_produces_paired_identical_returns_for_equivariant_agent():
    splits = envm.make_splits(seed=1, n_train=2, n_eval=2, side=6)
    model = WorldModel.initialize(SMALL_MODEL, "EqMuZero", seed=0)
    records = evaluate(model, splits, SMALL_ENV, SMALL_MCTS, n_seeds=2, seed=5)
    same = {(r.map_index, r.seed_index): r.episode_return
            for r in records if r.setting == "same"}
    rotated = [r for r in records if r.setting == "rotated"]
    assert len(rotated) == 3 * len(same)
    for r in rotated:
        assert r.episode_return == same[(r.map_index, r.seed_index)]
    assert {r.setting for r in records} == {"same", "rotated", "different"}
    counts = {s: sum(r.setting == s for r in records) for s in ("same", "rotated", "different")}
    assert counts == {"same": 4, "rotated": 12, "different": 4}


def test_evaluate_baseline_generically_differs_on_rotations():
    splits = envm.make_splits(seed=2, n_train=2, n_eval=1, side=6)
    model = WorldModel.initialize(SMALL_MODEL, "StdMuZero", seed=0)
    records = evaluate(model, splits, SMALL_ENV, SMALL_MCTS, n_seeds=2, seed=5)
    same = {(r.map_index, r.seed_index): r.episode_return
            for r in records if r.setting == "same"}
    rotated = [r for r in records if r.setting == "rotated"]
    assert any(r.episode_return != same[(r.map_index, r.seed_index)] for r in rotated)


def test_evaluate_deterministic():
    splits = envm.make_splits(seed=3, n_train=1, n_eval=1, side=6)
    model = WorldModel.initialize(SMALL_MODEL, "EqMuZero", seed=1)
    a = evaluate(model, splits, SMALL_ENV, SMALL_MCTS, n_seeds=2, seed=9)
    b = evaluate(model, splits, SMALL_ENV, SMALL_MCTS, n_seeds=2, seed=9)
    assert _records_sorted(a) == _records_sorted(b)


def test_report_csv_has_three_settings_per_variant():
    records = [
        EpisodeRecord("EqMuZero", s, 0, 0, i, float(i), 3)
        for s in ("same", "rotated", "different") for i in range(2)
    ]
    text = report_csv(records)
    lines = text.strip().splitlines()
    assert lines[0] == "variant,setting,mean_return,std_return,episodes"
    assert len(lines) == 4
    assert [line.split(",")[1] for line in lines[1:]] == ["same", "rotated", "different"]
    ep_text = episodes_csv(records)
    assert len(ep_text.strip().splitlines()) == 7


def test_audit_passes_eq_and_fails_std():
    eq = WorldModel.initialize(SMALL_MODEL, "EqMuZero", seed=2)
    report = audit_model(eq, SMALL_ENV, SMALL_MCTS, n_cases=4, seed=11)
    assert report.n_fail == 0 and report.n_pass == 16
    std = WorldModel.initialize(SMALL_MODEL, "StdMuZero", seed=2)
    report_std = audit_model(std, SMALL_ENV, SMALL_MCTS, n_cases=4, seed=11)
    assert report_std.n_fail >= 1
    # failures carry a located first divergence
    failing = [c for c in report_std.cases if not c.passed]
    assert all(c.detail for c in failing)
    text = report_std.to_text(budget=SMALL_MCTS.budget, seed=11)
    assert "summary pass=" in text


def test_audit_budget_one_trivially_passes():
    eq = WorldModel.initialize(SMALL_MODEL, "EqMuZero", seed=3)
    cfg = dataclasses.replace(SMALL_MCTS, budget=1)
    report = audit_model(eq, SMALL_ENV, cfg, n_cases=3, seed=0)
    assert report.n_fail == 0


def test_compare_searches_detects_divergence():
    model = WorldModel.initialize(SMALL_MODEL, "EqMuZero", seed=4)
    adapter = model.adapter()
    rng = np.random.default_rng(0)
    obs_a = rng.standard_normal((4, 6, 6))
    obs_b = rng.standard_normal((4, 6, 6))
    res_a = run_search(adapter, obs_a, SMALL_MCTS, RngStream(0))
    res_b = run_search(adapter, obs_b, SMALL_MCTS, RngStream(0))
    detail = compare_searches(res_a, res_b, C4[0], 4)
    assert detail != ""


def test_ablation_variants_audit_as_expected():
    # only the fully equivariant agent carries the guarantee; a std encoder
    # or std policy breaks it on generic weights
    for variant, expect_fail in (("EqWithStdEncoder", True), ("EqWithStdPolicy", True),
                                 ("StdWithEqEncoder", True)):
        model = WorldModel.initialize(SMALL_MODEL, variant, seed=5)
        report = audit_model(model, SMALL_ENV, SMALL_MCTS, n_cases=3, seed=3)
        assert (report.n_fail >= 1) == expect_fail, variant


def test_run_episode_transport_pairing_holds_stepwise():
    maze = envm.generate_maze(9, 6)
    model = WorldModel.initialize(SMALL_MODEL, "EqMuZero", seed=6)
    adapter = model.adapter()
    for g in C4:
        r0, s0 = run_episode(adapter, SMALL_ENV, maze, SMALL_MCTS,
                             RngStream(7), RngStream(8))
        r1, s1 = run_episode(adapter, SMALL_ENV, envm.rotate_maze(g, maze), SMALL_MCTS,
                             rng_transport(g, RngStream(7)), rng_transport(g, RngStream(8)))
        assert r0 == r1 and s0 == s1


# ---------------------------------------------------------------------------
# plotting


def test_line_chart_deterministic_and_empty_safe():
    svg1 = render_line_chart([("a", [0, 1, 2], [1.0, 0.5, 0.25])], "t", "x", "y")
    svg2 = render_line_chart([("a", [0, 1, 2], [1.0, 0.5, 0.25])], "t", "x", "y")
    assert svg1 == svg2 and svg1.startswith("<svg")
    empty = render_line_chart([], "empty", "x", "y")
    assert "<svg" in empty and "polyline" not in empty


def test_grouped_bars_renders_all_series():
    svg = render_grouped_bars(
        ["same", "rotated", "different"],
        [("EqMuZero", [3.0, 3.0, 2.0], [0.5, 0.5, 0.4]),
         ("StdMuZero", [3.0, 1.0, 0.8], [0.5, 0.3, 0.2])],
        "returns", "mean",
    )
    assert svg.count("<rect") >= 8  # 6 bars + 2 legend swatches + background
    assert "EqMuZero" in svg and "StdMuZero" in svg


# ---------------------------------------------------------------------------
# command line


def _gen_maps(tmp_path, monkeypatch):
    monkeypatch.delenv("EQZERO_OUTPUT_ROOT", raising=False)
    out = tmp_path / "maps"
    rc = main([
        "gen-maps", "--out", str(out),
        "--set", "env.side=6", "--set", "run.split_seed=3",
        "--set", "run.n_train_maps=2", "--set", "run.n_eval_maps=1",
    ])
    assert rc == EXIT_OK
    return out


def test_cli_gen_maps_rerun_is_byte_identical(tmp_path, monkeypatch, capsys):
    out = _gen_maps(tmp_path, monkeypatch)
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    capsys.readouterr()
    out2 = tmp_path / "maps2"
    rc = main([
        "gen-maps", "--out", str(out2),
        "--set", "env.side=6", "--set", "run.split_seed=3",
        "--set", "run.n_train_maps=2", "--set", "run.n_eval_maps=1",
    ])
    assert rc == EXIT_OK
    second = {p.name: p.read_bytes() for p in out2.iterdir()}
    assert first == second
    assert "manifest.txt" in first


def test_cli_train_eval_audit_plot_pipeline(tmp_path, monkeypatch, capsys):
    maps = _gen_maps(tmp_path, monkeypatch)
    run_dir = tmp_path / "run"
    common = [
        "--set", "env.side=6", "--set", "env.n_ghosts=0", "--set", "env.step_cap=8",
        "--set", "model.obs_size=6", "--set", "model.channels=2", "--set", "model.hidden=4",
        "--set", "mcts.budget=3",
        "--set", "train.total_steps=3", "--set", "train.batch_size=2",
        "--set", "train.unroll_steps=1", "--set", "train.n_step=1",
        "--set", "train.replay_capacity=4", "--set", "train.steps_per_episode=2",
    ]
    rc = main(["train", "--maps", str(maps), "--out", str(run_dir),
               "--variant", "EqMuZero", *common])
    assert rc == EXIT_OK
    assert (run_dir / "checkpoint.ckpt").exists()
    assert (run_dir / "config.cfg").exists()
    capsys.readouterr()

    eval_dir = tmp_path / "eval"
    rc = main(["eval", "--checkpoint", str(run_dir / "checkpoint.ckpt"),
               "--maps", str(maps), "--out", str(eval_dir),
               "--set", "run.eval_seeds=1", *common])
    assert rc == EXIT_OK
    report = (eval_dir / "report.csv").read_text()
    assert report.splitlines()[0] == "variant,setting,mean_return,std_return,episodes"
    assert len([l for l in report.splitlines()[1:] if l]) == 3
    capsys.readouterr()

    audit_file = tmp_path / "audit.txt"
    rc = main(["audit", "--variant", "EqMuZero", "--cases", "2", "--budget", "3",
               "--seed", "1", "--out", str(audit_file), *common])
    assert rc == EXIT_OK
    assert "summary pass=8 fail=0" in audit_file.read_text()
    capsys.readouterr()

    plot_dir = tmp_path / "plots"
    rc = main(["plot", "--metrics", str(run_dir / "metrics.csv"),
               "--report", str(eval_dir / "report.csv"), "--out", str(plot_dir)])
    assert rc == EXIT_OK
    svgs = sorted(p.name for p in plot_dir.iterdir())
    assert svgs == ["metrics_losses.svg", "metrics_return.svg", "report_bars.svg"]
    capsys.readouterr()

    # byte-identical on re-run
    plot_dir2 = tmp_path / "plots2"
    main(["plot", "--metrics", str(run_dir / "metrics.csv"),
          "--report", str(eval_dir / "report.csv"), "--out", str(plot_dir2)])
    capsys.readouterr()
    for name in svgs:
        assert (plot_dir / name).read_bytes() == (plot_dir2 / name).read_bytes()


def test_cli_audit_failure_exit_code(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("EQZERO_OUTPUT_ROOT", raising=False)
    rc = main(["audit", "--variant", "EqMuZero", "--cases", "1", "--budget", "2",
               "--set", "model.obs_size=6", "--set", "model.channels=2",
               "--set", "model.hidden=4", "--set", "env.side=6"])
    assert rc == EXIT_OK
    capsys.readouterr()
    # StdMuZero reports failures but does not claim the theorem: exit 0
    rc = main(["audit", "--variant", "StdMuZero", "--cases", "1", "--budget", "4",
               "--set", "model.obs_size=6", "--set", "model.channels=2",
               "--set", "model.hidden=4", "--set", "env.side=6"])
    out = capsys.readouterr().out
    assert rc == EXIT_OK and "fail" in out


def test_cli_exit_codes_for_bad_inputs(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("EQZERO_OUTPUT_ROOT", raising=False)
    rc = main(["gen-maps", "--out", str(tmp_path / "m"), "--set", "env.bogus=1"])
    assert rc == EXIT_CONFIG
    rc = main(["eval", "--checkpoint", str(tmp_path / "missing.ckpt"),
               "--maps", str(tmp_path / "m"), "--out", str(tmp_path / "e")])
    assert rc == EXIT_IO
    bad_csv = tmp_path / "bad.csv"
    bad_csv.write_text("step,loss_total\n1,2\n")
    rc = main(["plot", "--metrics", str(bad_csv), "--out", str(tmp_path / "p")])
    assert rc == EXIT_CONFIG
    err = capsys.readouterr().err
    assert ":1:" in err  # line number of the malformed header


def test_cli_output_root_env_var(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("EQZERO_OUTPUT_ROOT", str(tmp_path))
    rc = main(["gen-maps", "--out", "maps-under-root",
               "--set", "env.side=6", "--set", "run.n_train_maps=1",
               "--set", "run.n_eval_maps=1"])
    assert rc == EXIT_OK
    assert (tmp_path / "maps-under-root" / "manifest.txt").exists()
    capsys.readouterr()
