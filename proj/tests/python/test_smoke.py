import json
import os
import subprocess

import pytest

import mteforge


def record(rid, da, evaluator="e1", doc="d1", mt="ile omi ewe", ref="ile omi ewe"):
    return {
        "record_id": rid,
        "lp": "eng-yor",
        "doc_id": doc,
        "source": "the house",
        "mt_output": mt,
        "reference": ref,
        "mt_system": "sys",
        "evaluator_id": evaluator,
        "da_score": da,
        "spans": [],
    }


def test_correlations_and_gate():
    x = [1.0, 2.0, 3.0, 4.0, 5.0]
    assert mteforge.pearson(x, x) == pytest.approx(1.0)
    assert mteforge.spearman(x, [-v for v in x]) == pytest.approx(-1.0)
    assert mteforge.kendall_tau_b([1, 2, 2, 3], [10, 20, 20, 40]) == pytest.approx(1.0)
    assert mteforge.icc3k(x, [v + 3 for v in x]) == pytest.approx(1.0)
    assert mteforge.agreement_gate(0.5, 0.5, 0.6)
    assert not mteforge.agreement_gate(0.4, 0.5, 0.6)
    with pytest.raises(mteforge.MteforgeError):
        mteforge.spearman([1.0, 2.0], [1.0, 2.0])


def test_lexical_metrics():
    assert mteforge.chrf("ile omi", "ile omi") == 100.0
    assert mteforge.chrf("ile omi", "ile omi", plus_plus=True) == 100.0
    assert mteforge.bleu(["a b c d"], ["a b c d"]) == 100.0
    assert 0.0 < mteforge.chrf("ile", "omi ile") < 100.0


def test_records_round_trip_and_zscores():
    lines = mteforge.records_to_lines([record("a", 50), record("b", 60), record("c", 70)])
    canon = mteforge.canonicalize(lines)
    assert [json.loads(l)["record_id"] for l in canon] == ["a", "b", "c"]
    z = [r["z_score"] for r in mteforge.lines_to_records(mteforge.zscore_per_evaluator(canon))]
    assert z == pytest.approx([-1.0, 0.0, 1.0])
    out, zmin, zmax = mteforge.normalize_scores(canon, extremes=1)
    assert (zmin, zmax) == pytest.approx((-1.0, 1.0))
    assert [r["scaled_score"] for r in mteforge.lines_to_records(out)] == pytest.approx([0, 0.5, 1])


def test_split_and_judge_parsing():
    recs = [record(f"r{i}", 50, doc=f"doc{i}") for i in range(60)]
    lines = mteforge.records_to_lines(recs)
    labels = mteforge.document_split(lines, seed=3)
    counts = {}
    for v in labels.values():
        counts[v] = counts.get(v, 0) + 1
    assert counts == {"Test": 40, "Dev": 10, "Train": 10}
    assert mteforge.document_split(lines, overlap={"r0"}, seed=3)["r0"] == "Excluded"
    assert mteforge.parse_judge_score("... score of translation is: 85") == (pytest.approx(0.85), False)
    assert mteforge.parse_judge_score("no idea") == (0.5, True)
    v = mteforge.pseudo_embed("ile", 16)
    assert len(v) == 16
    assert sum(x * x for x in v) == pytest.approx(1.0, rel=1e-5)
    rho, r = mteforge.evaluate_run({"a": 1, "b": 2, "c": 3}, {"a": 0.1, "b": 0.2, "c": 0.3})
    assert rho == pytest.approx(1.0) and r == pytest.approx(1.0)


def test_pipeline_and_cli(tmp_path):
    data = tmp_path / "toy.jsonl"
    data.write_text("\n".join(mteforge.records_to_lines([record("a", 50), record("b", 60)])) + "\n")
    cfg = tmp_path / "p.toml"
    cfg.write_text('stages = ["ingest"]\n[ingest]\ninput = "toy.jsonl"\n')
    mteforge.run_pipeline(str(cfg), out_dir=str(tmp_path / "out"))
    assert (tmp_path / "out" / "ingest" / "manifest.json").exists()
    binary = os.environ.get("MTEFORGE_BIN")
    if binary:
        rc = subprocess.run([binary, "--help"], capture_output=True).returncode
        assert rc == 0
