import json

import pytest

from chanprobe.cli import main
from chanprobe.errors import ConfigParse
from chanprobe.experiments import (
    SCHEMA_LINE,
    format_csv,
    load_config,
    run,
)


def write_config(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


SMALL_SCAN = """
[experiment]
kind = lemma1-scan

[channel]
bsc = 0.3

[grid]
n = 2,3
mu = 0.25,0.6
a = 0
b = 1

[run]
seed = 7
out = {out}
"""

MC_SMALL = """
[experiment]
kind = mc-deviation

[channel]
bsc = 0.5

[grid]
n = 32
mu = n^-1/4
a = 0
b = 1

[mc]
trials = 4000

[run]
seed = 7
out = {out}
"""

CONVERSE = """
[experiment]
kind = converse-demo

[channel]
pkgdata = sdmc_2x2x2.txt

[isac]
state_pmf = 0.5,0.5
distortion = pkgdata:dist_hamming_2.txt
code = pkgdata:code_n4_demo.txt
distortion_cap = 0.5
eps = 0.3
delta = 0.3
eta = 0.1,0.3

[run]
seed = 7
out = {out}
"""


class TestConfigParsing:
    def test_minimal_scan_config(self, tmp_path):
        path = write_config(tmp_path, SMALL_SCAN.format(out="results"))
        config = load_config(path)
        assert config.kind == "lemma1-scan"
        assert config.n_values == [2, 3]
        assert config.mu_values == [0.25, 0.6]
        assert config.out_dir == tmp_path / "results"

    def test_kind_mismatch(self, tmp_path):
        path = write_config(tmp_path, SMALL_SCAN.format(out="results"))
        with pytest.raises(ConfigParse):
            load_config(path, kind="mc-deviation")

    def test_unknown_kind(self, tmp_path):
        path = write_config(tmp_path, "[experiment]\nkind = nothing\n")
        with pytest.raises(ConfigParse):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigParse):
            load_config(tmp_path / "nope.cfg")

    def test_overrides_win(self, tmp_path):
        path = write_config(tmp_path, SMALL_SCAN.format(out="results"))
        config = load_config(path, seed=99, workers=3, out=str(tmp_path / "elsewhere"))
        assert config.seed == 99 and config.workers == 3
        assert config.out_dir == tmp_path / "elsewhere"

    def test_channel_needs_exactly_one_source(self, tmp_path):
        text = SMALL_SCAN.format(out="o").replace(
            "bsc = 0.3", "bsc = 0.3\npath = extra.txt"
        )
        with pytest.raises(ConfigParse):
            load_config(write_config(tmp_path, text))

    def test_mu_schedule_parsing(self, tmp_path):
        path = write_config(tmp_path, MC_SMALL.format(out="o"))
        config = load_config(path)
        assert config.mu_schedule == "n^-1/4"
        assert config.mus_for(16) == [pytest.approx(0.5)]

    def test_grid_required(self, tmp_path):
        text = "[experiment]\nkind = lemma1-scan\n\n[channel]\nbsc = 0.3\n"
        config = load_config(write_config(tmp_path, text))
        with pytest.raises(ConfigParse):
            run(config)


class TestCsvFormat:
    def test_schema_line_and_booleans(self):
        text = format_csv(["a", "b"], [[1, True], [0.5, False]])
        lines = text.splitlines()
        assert lines[0] == SCHEMA_LINE
        assert lines[1] == "a,b"
        assert lines[2] == "1,true"
        assert lines[3] == "0.5,false"

    def test_floats_round_trip(self):
        value = 0.1 + 0.2
        text = format_csv(["v"], [[value]])
        assert float(text.splitlines()[2]) == value


class TestRun:
    def test_scan_writes_outputs_and_manifest(self, tmp_path):
        config = load_config(write_config(tmp_path, SMALL_SCAN.format(out="o")))
        manifest = run(config)
        assert manifest.all_pass
        out = tmp_path / "o"
        csv_text = (out / "deviation.csv").read_text()
        assert csv_text.startswith(SCHEMA_LINE)
        assert csv_text.count("exact_enumeration") == 4
        assert "false" not in csv_text
        recorded = json.loads((out / "manifest.json").read_text())
        assert recorded["outputs"]["deviation.csv"] == manifest.outputs["deviation.csv"]
        assert (out / "deviation.png").exists()

    def test_no_plots_flag(self, tmp_path):
        config = load_config(
            write_config(tmp_path, SMALL_SCAN.format(out="o")), plots=False
        )
        run(config)
        assert not (tmp_path / "o" / "deviation.png").exists()

    def test_rerun_is_byte_identical(self, tmp_path):
        config = load_config(write_config(tmp_path, MC_SMALL.format(out="o")))
        run(config)
        first = (tmp_path / "o" / "deviation.csv").read_bytes()
        run(config)
        assert (tmp_path / "o" / "deviation.csv").read_bytes() == first

    def test_worker_count_never_changes_bytes(self, tmp_path):
        base = write_config(tmp_path, MC_SMALL.format(out="o1"))
        run(load_config(base, workers=1))
        run(load_config(base, workers=2, out=str(tmp_path / "o2")))
        assert (
            (tmp_path / "o1" / "deviation.csv").read_bytes()
            == (tmp_path / "o2" / "deviation.csv").read_bytes()
        )

    def test_optimal_audit_emits_argmax_trees(self, tmp_path):
        text = """
[experiment]
kind = optimal-audit

[channel]
bsc = 0.3

[grid]
n = 2
mu = 0.25
a = 0
b = 1

[run]
seed = 7
out = o
emit_trees = true
"""
        config = load_config(write_config(tmp_path, text))
        manifest = run(config)
        tree_file = tmp_path / "o" / "argmax_tree_0.txt"
        assert tree_file.exists()
        assert "argmax_tree_0.txt" in manifest.outputs
        from chanprobe.trees import load_tree

        emitted = load_tree(tree_file)
        assert emitted.n == 2

    def test_surgery_audit_consumes_tree_file(self, tmp_path):
        from chanprobe.trees import StrategyTree, save_tree
        import numpy as np

        save_tree(StrategyTree(3, 2, 2, np.array([1, 1, 1, 0, 1, 1, 1])),
                  tmp_path / "probe.txt")
        text = """
[experiment]
kind = surgery-audit

[channel]
bsc = 0.3

[grid]
n = 3
mu = 0.25
a = 0
b = 1
tree = probe.txt

[run]
seed = 7
out = o
"""
        config = load_config(write_config(tmp_path, text))
        manifest = run(config)
        assert manifest.all_pass
        well_order = (tmp_path / "o" / "well_order.csv").read_text()
        assert well_order.count("\n") == 3  # schema + header + the one tree

    def test_converse_demo_tables(self, tmp_path):
        config = load_config(write_config(tmp_path, CONVERSE.format(out="o")))
        manifest = run(config)
        assert manifest.all_pass
        messages = (tmp_path / "o" / "converse_messages.csv").read_text()
        assert messages.count("\n") == 2 + 8  # schema + header + 4 msgs x 2 etas
        summary = (tmp_path / "o" / "converse_summary.csv").read_text()
        assert "gamma_n" in summary


class TestCli:
    def test_happy_path_exit_zero(self, tmp_path, capsys):
        path = write_config(tmp_path, SMALL_SCAN.format(out="o"))
        code = main(["lemma1-scan", "--config", str(path), "--no-plots"])
        assert code == 0
        assert "all-pass: yes" in capsys.readouterr().out

    def test_bad_config_exit_two(self, tmp_path, capsys):
        code = main(["lemma1-scan", "--config", str(tmp_path / "missing.cfg")])
        assert code == 2

    def test_kind_mismatch_exit_two(self, tmp_path):
        path = write_config(tmp_path, SMALL_SCAN.format(out="o"))
        assert main(["mc-deviation", "--config", str(path)]) == 2

    def test_usage_error_exit_two(self):
        with pytest.raises(SystemExit) as err:
            main(["no-such-command"])
        assert err.value.code == 2

    def test_failed_invariant_exit_one(self, tmp_path, monkeypatch):
        import chanprobe.experiments as experiments

        def failing_runner(config):
            return {"deviation.csv": (["n"], [[1]])}, {}, False

        monkeypatch.setitem(experiments._RUNNERS, "lemma1-scan", failing_runner)
        path = write_config(tmp_path, SMALL_SCAN.format(out="o"))
        assert main(["lemma1-scan", "--config", str(path), "--no-plots"]) == 1

    def test_seed_override_changes_manifest(self, tmp_path):
        path = write_config(tmp_path, MC_SMALL.format(out="o"))
        main(["mc-deviation", "--config", str(path), "--seed", "123",
              "--no-plots"])
        recorded = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert recorded["seed"] == 123
