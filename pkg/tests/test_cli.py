import json

import pytest

from nkcs import oracle, rng
from nkcs.cli import main


def trace_args(out, *extra):
    return ["trace", "--n", "20", "--k", "2", "--c", "1", "--s", "1", "--policy", "coev",
            "--generations", "20000", "--seed", "7", "--out-dir", str(out), *extra]


def small_sweep(out, *extra):
    return ["sweep", "--n", "10", "--k", "0,3", "--c", "1", "--policy", "coev,com,glob",
            "--generations", "300", "--landscapes", "2", "--restarts", "3", "--workers", "1",
            "--out-dir", str(out), *extra]


def test_trace_row_count_and_determinism(tmp_path):
    assert main(trace_args(tmp_path / "a")) == 0
    assert main(trace_args(tmp_path / "b")) == 0
    text = (tmp_path / "a" / "trace.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == "generation,fitness_species_0,fitness_species_1,system_fitness"
    assert len(lines) == 1 + 20000 // 100 + 1
    assert text == (tmp_path / "b" / "trace.csv").read_text()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config"]["master_seed"] == 7
    assert manifest["runs"][0]["cell"]["n_per_species"] == [20, 20]


def test_trace_linkage_dump(tmp_path):
    assert main(trace_args(tmp_path, "--generations", "10", "--dump-linkage")) == 0
    doc = json.loads((tmp_path / "trace_linkage.json").read_text())
    assert len(doc["species"]) == 2 and len(doc["species"][0]["genes"]) == 20


def test_fig2_preset_writes_one_trace_per_coupling(tmp_path):
    assert main(["trace", "--preset", "paper-fig2", "--generations", "50", "--out-dir", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("trace_*.csv"))) == 2


def test_sweep_outputs(tmp_path):
    assert main(small_sweep(tmp_path)) == 0
    agg = (tmp_path / "aggregate.csv").read_text().splitlines()
    assert len(agg) == 1 + 6
    rows = (tmp_path / "results.csv").read_text().splitlines()
    assert len(rows) == 1 + 6 * 6


def test_one_cell_sweep(tmp_path):
    assert main(["sweep", "--n", "8", "--k", "1", "--c", "1", "--generations", "50",
                 "--landscapes", "1", "--restarts", "2", "--out-dir", str(tmp_path)]) == 0
    assert len((tmp_path / "aggregate.csv").read_text().splitlines()) == 2


def test_manifest_reproduces_outputs(tmp_path):
    assert main(small_sweep(tmp_path / "a")) == 0
    manifest = tmp_path / "a" / "manifest.json"
    assert main(["sweep", "--config", str(manifest), "--out-dir", str(tmp_path / "b"), "--workers", "2"]) == 0
    for name in ("results.csv", "aggregate.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("master_seed: 3\ngenerations: 40\nlandscapes: 1\nrestarts_per_landscape: 2\n"
                   "grid:\n  n: [6]\n  k: [1, 2]\n  c: [1]\n  policy: [com]\n")
    assert main(["sweep", "--config", str(cfg), "--k", "4", "--out-dir", str(tmp_path / "o")]) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config"]["grid"]["k"] == [4]
    assert manifest["config"]["master_seed"] == 3
    assert manifest["config"]["generations"] == 40


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("NKCS_OUT_DIR", str(tmp_path / "env"))
    argv = ["trace", "--n", "5", "--k", "1", "--c", "1", "--generations", "5"]
    assert main(argv) == 0
    assert (tmp_path / "env" / "trace.csv").exists()


@pytest.mark.parametrize(
    "text, field",
    [
        ("generations: -3\n", "generations"),
        ("grid:\n  error_mode: sometimes\n", "grid.error_mode"),
        ("grid:\n  policy: [anarchy]\n", "grid.policy"),
        ("bogus: 1\n", "bogus"),
        ("grid:\n  n: ['x']\n", "grid.n"),
    ],
)
def test_malformed_config_names_field(tmp_path, capsys, text, field):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(text)
    assert main(["sweep", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 1
    assert field in capsys.readouterr().err


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--k", "x"])
    assert exc.value.code == 1


def test_invalid_cell_fails_sweep(tmp_path):
    assert main(small_sweep(tmp_path, "--k", "0,12")) == 2
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["failed_cells"] and "exceeds" in manifest["failed_cells"][0]["error"]
    assert len((tmp_path / "aggregate.csv").read_text().splitlines()) == 1 + 3


def test_compare_file_with_itself(tmp_path):
    assert main(small_sweep(tmp_path)) == 0
    out = tmp_path / "cmp.json"
    r = tmp_path / "results.csv"
    assert main(["compare", str(r), str(r), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["comparisons"]) == 6
    assert {c["verdict"] for c in doc["comparisons"]} == {"indistinguishable"}
    assert all(c["p"] == 1.0 for c in doc["comparisons"])


def test_compare_with_selectors(tmp_path):
    assert main(small_sweep(tmp_path)) == 0
    out = tmp_path / "cmp.json"
    r = str(tmp_path / "results.csv")
    assert main(["compare", r, r, "--a", "policy=coev", "--b", "policy=glob", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert [c["K"] for c in doc["comparisons"]] == [0, 3]
    assert all(c["a"]["policy"] == "coevolution" and c["b"]["policy"] == "global" for c in doc["comparisons"])
    for c in doc["comparisons"]:
        assert set(c) >= {"t", "df", "p", "verdict", "n_vector", "K", "C", "S"}


def test_compare_key_mismatch(tmp_path, capsys):
    assert main(small_sweep(tmp_path / "a")) == 0
    assert main(small_sweep(tmp_path / "b", "--k", "5")) == 0
    rc = main(["compare", str(tmp_path / "a" / "results.csv"), str(tmp_path / "b" / "results.csv")])
    assert rc == 1
    err = capsys.readouterr().err
    assert "only in A" in err and "only in B" in err


def test_compare_ambiguous_selector(tmp_path, capsys):
    assert main(small_sweep(tmp_path)) == 0
    r = str(tmp_path / "results.csv")
    assert main(["compare", r, r, "--a", "K=0", "--b", "K=0"]) == 1
    assert "narrow the selector" in capsys.readouterr().err


def test_selfcheck_passes(capsys):
    assert main(["selfcheck"]) == 0
    assert "8/8 checks passed" in capsys.readouterr().out


def test_corrupted_mixer_constant_is_caught(monkeypatch, capsys):
    monkeypatch.setattr(rng, "MIX_M1", rng.MIX_M1 ^ 1)
    result = oracle.check_oracle_equality(seeds=[0], shapes=[((2, 2), 1, 1)])
    assert not result.passed
    assert main(["selfcheck"]) == 2
    assert "FAIL  oracle_equality" in capsys.readouterr().out
