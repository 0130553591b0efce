import math
from pathlib import Path

import numpy as np
import pytest

from nvcpf import cli
from nvcpf.cli import ConfigError, RunConfig, dispatch, emit_csv, parse_config, parse_csv
from nvcpf.engine import ResultTable

FAST_CONFIG = "t_max = 1.0\ngrid_points = 12\nm = 0.3\n"


class TestParseConfig:
    def test_overrides(self):
        cfg = parse_config("m = 0.1\nkappa_ratio = 0.01")
        assert cfg.m == 0.1
        assert cfg.kappa_ratio == 0.01
        assert cfg.gamma_fg_ratio == 1e-6  # default untouched

    def test_comments_and_blanks(self):
        cfg = parse_config("# comment\n\n")
        assert cfg == RunConfig()

    def test_duplicate_key_cites_both_lines(self):
        with pytest.raises(ConfigError, match="lines 1 and 2"):
            parse_config("m = 0.1\nm = 0.2")

    def test_unknown_key_rejected_with_line(self):
        with pytest.raises(ConfigError, match="line 3"):
            parse_config("m = 0.1\n\nnonsense = 2")

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("just words")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("m = fast")

    def test_exponent_notation_and_booleans(self):
        cfg = parse_config("gamma_fg_ratio = 2.5e-7\ncompensate_shifts = false")
        assert cfg.gamma_fg_ratio == 2.5e-7
        assert cfg.compensate_shifts is False

    def test_inline_comment(self):
        cfg = parse_config("m = 0.2  # asymmetry")
        assert cfg.m == 0.2

    def test_roundtrip_through_echo(self):
        cfg = parse_config("m = 0.25\nn_max = 2\ntarget = realized")
        echoed = "\n".join(
            f"{k.removeprefix('config_')} = {v}" for k, v in cfg.echo().items()
        )
        assert parse_config(echoed) == cfg


class TestEmitCsv:
    def test_empty_rows(self):
        tab = ResultTable(("x", "y"), np.zeros((0, 2)), {"m": "0.1"})
        got = emit_csv(tab).decode()
        assert got == "# m = 0.1\nx,y\n"

    def test_formatting_contract(self):
        tab = ResultTable(("x", "y"), np.array([[math.pi, 0.5]]))
        assert emit_csv(tab).decode() == "x,y\n3.14159265359,0.5\n"

    def test_metadata_sorted(self):
        tab = ResultTable(("x",), np.zeros((0, 1)), {"b": "2", "a": "1"})
        lines = emit_csv(tab).decode().splitlines()
        assert lines[:2] == ["# a = 1", "# b = 2"]

    def test_lf_only(self):
        tab = ResultTable(("x",), np.array([[1.0]]), {"k": "v"})
        assert b"\r" not in emit_csv(tab)

    def test_roundtrip(self):
        rng = np.random.default_rng(5)
        rows = rng.normal(size=(7, 3)) * 10.0 ** rng.integers(-6, 6, (7, 3))
        tab = ResultTable(("a", "b", "c"), rows, {"m": "0.1"})
        back = parse_csv(emit_csv(tab))
        assert back.columns == tab.columns
        assert back.metadata == tab.metadata
        assert np.allclose(back.rows, tab.rows, rtol=1e-11, atol=0.0)


class TestGateCommand:
    def test_reference_output(self, capsys):
        assert dispatch(["gate", "--m", "0.1"]) == 0
        out = capsys.readouterr().out
        assert "alpha = 0.999247" in out
        assert "beta = 0.999879" in out

    def test_small_m(self, capsys):
        assert dispatch(["gate", "--m", "0.0001"]) == 0
        out = capsys.readouterr().out
        assert "alpha = 1.000000" in out
        assert "beta = 1.000000" in out

    def test_bad_m_is_runtime_error(self, capsys):
        assert dispatch(["gate", "--m", "1.7"]) == 2


class TestEvolveCommand:
    def test_writes_csv_with_config_echo(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(FAST_CONFIG)
        out = tmp_path / "f.csv"
        assert dispatch(["evolve", "--config", str(cfg), "--out", str(out)]) == 0
        tab = parse_csv(out.read_bytes())
        assert tab.columns == ("g3_t", "fidelity")
        assert len(tab.rows) == 12
        assert tab.metadata["config_m"] == "0.3"
        assert tab.rows[0][1] == pytest.approx(0.5625, abs=1e-12)

    def test_default_config(self, tmp_path, capsys):
        out = tmp_path / "f.csv"
        cfg = tmp_path / "quick.cfg"
        cfg.write_text("t_max = 0.2\ngrid_points = 3\nm = 0.5\n")
        assert dispatch(["evolve", "--config", str(cfg), "--out", str(out)]) == 0


class TestSweepCommand:
    def test_byte_identical_reruns(self, tmp_path, capsys):
        cfg = tmp_path / "quick.cfg"
        cfg.write_text(FAST_CONFIG)
        out1, out2 = tmp_path / "p1.csv", tmp_path / "p2.csv"
        for out in (out1, out2):
            code = dispatch(
                ["sweep", "--panel", "a", "--out", str(out), "--config", str(cfg)]
            )
            assert code == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_plot_script_companion(self, tmp_path, capsys):
        cfg = tmp_path / "quick.cfg"
        cfg.write_text(FAST_CONFIG)
        out = tmp_path / "panel.csv"
        assert dispatch(["sweep", "--panel", "a", "--out", str(out), "--config", str(cfg)]) == 0
        script = Path(str(out) + ".plot").read_text()
        assert "panel.csv" in script
        assert "plot" in script

    def test_unknown_panel_rejected(self, tmp_path, capsys):
        assert dispatch(["sweep", "--panel", "x", "--out", str(tmp_path / "o.csv")]) == 1


class TestValidateCommand:
    def test_comparison_table(self, tmp_path, capsys):
        out = tmp_path / "v.csv"
        code = dispatch(
            ["validate", "--delta-ratios", "10,20", "--out", str(out), "--t", "0.5"]
        )
        assert code == 0
        tab = parse_csv(out.read_bytes())
        assert tab.columns[0] == "delta_over_g"
        assert len(tab.rows) == 2
        assert tab.rows[0][1] > tab.rows[1][1]  # eps decreases

    def test_bad_ratio_list(self, tmp_path, capsys):
        code = dispatch(
            ["validate", "--delta-ratios", "10,zebra", "--out", str(tmp_path / "v.csv")]
        )
        assert code == 1


class TestParamsCommand:
    ARGS = [
        "params",
        "--lambda", "637e-9",
        "--gamma0", str(2 * math.pi * 83e6),
        "--vm", "20e-18",
        "--q", "1e9",
        "--omega-max", str(2 * math.pi * 2.5e9),
        "--delta", str(2 * math.pi * 25e9),
        "--gtilde3", str(2 * math.pi * 55e6),
    ]

    def test_report_contents(self, capsys):
        assert dispatch(self.ARGS) == 0
        out = capsys.readouterr().out
        assert "kappa" in out
        assert "FLAGGED" in out
        assert "t0" in out


class TestDispatchContract:
    def test_help_exits_zero_listing_flags(self, capsys):
        assert dispatch(["--help"]) == 0
        for sub, flags in (
            ("gate", ["--m", "--k"]),
            ("evolve", ["--config", "--out"]),
            ("sweep", ["--panel", "--out", "--config"]),
            ("validate", ["--delta-ratios", "--out", "--m", "--t"]),
            ("params", ["--lambda", "--gamma0", "--vm", "--q", "--omega-max", "--delta", "--gtilde3"]),
        ):
            assert dispatch([sub, "--help"]) == 0
            out = capsys.readouterr().out
            for flag in flags:
                assert flag in out

    def test_unknown_subcommand_exits_one(self, capsys):
        assert dispatch(["frobnicate"]) == 1

    def test_unknown_flag_exits_one(self, capsys):
        assert dispatch(["gate", "--m", "0.1", "--zap"]) == 1

    def test_missing_required_flag_exits_one(self, capsys):
        assert dispatch(["gate"]) == 1

    def test_missing_config_file_exits_two(self, tmp_path, capsys):
        code = dispatch(
            ["evolve", "--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path / "o.csv")]
        )
        assert code == 2

    def test_config_error_exits_one(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("m = 0.1\nm = 0.2\n")
        code = dispatch(["evolve", "--config", str(cfg), "--out", str(tmp_path / "o.csv")])
        assert code == 1
