import json
from pathlib import Path

import numpy as np
import pytest

from conftest import SMALL

from actdet import artifacts as art
from actdet.cli import EXIT_OK, main
from actdet.config import from_dict
from actdet.pipeline import STAGES, Run, ablation_table, all_classes, eval_scripts, run_all, run_stage, variant_name


def snapshot(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    run = Run(from_dict(SMALL), out)
    report = run_all(run)
    return run, report, snapshot(out)


class TestRunAll:
    def test_report_has_every_class(self, small_run):
        run, report, files = small_run
        classes = all_classes(run.cfg)
        assert [r["class"] for r in report["classes"]] == list(classes)
        for r in report["classes"]:
            assert r["naudc"] is None or 0.0 <= r["naudc"] <= 1.0
        assert set(report["groups"]) == {"person", "vehicle", "overall"}
        assert "score/report.txt" in files and "config.json" in files

    def test_every_stage_idempotent(self, small_run):
        run, _, before = small_run
        for name in STAGES:
            run_stage(name, run)
        assert snapshot(run.out) == before

    def test_same_seed_same_bytes(self, small_run, tmp_path):
        _, _, before = small_run
        run_all(Run(from_dict(SMALL), tmp_path))
        assert snapshot(tmp_path) == before

    def test_parallel_jobs_same_bytes(self, small_run, tmp_path):
        _, _, before = small_run
        run_all(Run(from_dict(SMALL), tmp_path, jobs=2))
        assert snapshot(tmp_path) == before

    def test_parked_vehicle_filtered(self, small_run):
        run, _, _ = small_run
        props = art.read_jsonl(run.path("filter", "proposals.jsonl"))
        trajs = art.read_jsonl(run.path("track", "trajectories.jsonl"))
        # the parked vehicle is present from frame 0; its track starts there
        parked = {(r["video"], r["track"]) for r in trajs if r["frame"] == 0 and r["class"] == "vehicle"}
        assert parked
        for p in props:
            if (p["video"], p["track"]) in parked and p["t0"] >= run.cfg.synth.burn_in:
                assert not p["kept"] and p["fg_rate"] < 0.15

    def test_eval_scripts_cover_classes_once(self, small_run):
        run, _, _ = small_run
        acts = [a.activity for s in eval_scripts(run) for a in s.actors if a.activity]
        assert sorted(acts) == sorted(all_classes(run.cfg))


def test_skip_filter_keeps_every_proposal(small_run, tmp_path):
    run, _, before = small_run
    skip = Run(from_dict(SMALL), tmp_path, skip_filter=True)
    for name in ("generate", "track", "filter"):
        run_stage(name, skip)
    props = art.read_jsonl(skip.path("filter", "proposals.jsonl"))
    filtered = art.read_jsonl(run.path("filter", "proposals.jsonl"))
    assert [(p["video"], p["proposal"]) for p in props] == [(p["video"], p["proposal"]) for p in filtered]
    assert all(p["kept"] and p["fg_rate"] is None for p in props)
    assert any(not p["kept"] for p in filtered)
    assert not skip.path("filter", "masks").exists()


def test_seed_changes_output(small_run, tmp_path):
    _, _, before = small_run
    run_all(Run(from_dict({**SMALL, "seed": 1}), tmp_path))
    assert snapshot(tmp_path)["eval/detections.jsonl"] != before["eval/detections.jsonl"]


def test_cli_all_and_ablation(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    assert main(["all", "--config", str(cfg), "--out-dir", str(tmp_path / "a"), "--ablation"]) == EXIT_OK
    out = capsys.readouterr().out
    table = art.read_json(tmp_path / "a" / "ablation" / "table.json")
    assert table["columns"] == [variant_name(h, m) for h in ("gap_only", "part_attention") for m in (False, True)]
    assert len(table["columns"]) == 4
    assert out.splitlines()[0].split()[1:] == table["columns"]
    assert [r["row"] for r in table["rows"]][-3:] == ["[person]", "[vehicle]", "[overall]"]


def test_ablation_table_layout():
    cols = [variant_name(h, m) for h in ("gap_only", "part_attention") for m in (False, True)]
    reports = {
        c: {"classes": [{"class": "a", "naudc": i / 10}, {"class": "b", "naudc": None}], "groups": {"overall": i / 10}}
        for i, c in enumerate(cols)
    }
    table, text = ablation_table(reports, ["a", "b"])
    assert table["rows"][0] == {"row": "a", **{c: i / 10 for i, c in enumerate(cols)}}
    assert text.splitlines()[2].split()[1:] == ["n/a"] * 4


def test_stage_needs_its_inputs(tmp_path):
    with pytest.raises(art.MissingInput):
        run_stage("classify", Run(from_dict(SMALL), tmp_path))
    with pytest.raises(ValueError):
        run_stage("dance", Run(from_dict(SMALL), tmp_path))
