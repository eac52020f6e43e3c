import csv
import json

import pytest

from pscdss import cli
from pscdss.config import ConfigError, parse_config, parse_config_text


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_empty_config_gives_evaluation_defaults(tmp_path):
    p = tmp_path / "empty.cfg"
    p.write_text("")
    c = parse_config(p).resolved()
    assert (c["b0"], c["m"], c["omega"], c["fc_hz"]) == (0.851, 2.91, 0.278, 2e9)
    assert (c["re_km"], c["rs_km"]) == (6371.0, 6871.0)
    assert c["scenario"] == "Custom"


def test_comments_lists_and_scenario_defaults():
    cfg = parse_config_text("# sweep\nscenario = Fig3  # inline\npf_g_values = 0.1, 0.3\nns = 7\n")
    c = cfg.resolved()
    assert c["pf_g_values"] == (0.1, 0.3)
    assert (c["regions"], c["ng"], c["ns"]) == (60, 40, 7)


@pytest.mark.parametrize("text,key,line", [
    ("lambda_s = -1", "lambda_s", 1),
    ("\nbogus = 3", "bogus", 2),
    ("seed = x", "seed", 1),
    ("gbar = 1.5", "gbar", 1),
    ("no equals sign", "no", 1),
])
def test_config_errors_name_key_and_line(text, key, line):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert info.value.key == key and info.value.line == line
    assert f"line {line}" in str(info.value)


def test_inconsistent_radii_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("rs_km = 6000").resolved()


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("lambda_s = -1\n")
    assert cli.main(["--config", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["--config", str(tmp_path / "missing.cfg")]) == cli.EXIT_CONFIG
    assert cli.main(["--scenario", "Fig99"]) == cli.EXIT_CONFIG
    over = tmp_path / "over.cfg"
    over.write_text("scenario = LatencyVsM\nm_net_values = 2, 30\n")
    assert cli.main(["--config", str(over), "--out", str(tmp_path / "o")]) == cli.EXIT_RUNTIME
    assert "stations" in capsys.readouterr().err


def test_runtime_error_removes_partial_files(tmp_path, monkeypatch):
    def half_done(c, w):
        w.table("first.csv", ("a",), [(1,)])
        raise RuntimeError("boom")

    monkeypatch.setitem(cli.SCENARIO_RUNNERS, "Custom", half_done)
    out = tmp_path / "run"
    assert cli.main(["--out", str(out)]) == cli.EXIT_RUNTIME
    assert list(out.iterdir()) == []


def test_tps_vs_m_shape(tmp_path):
    cfg = tmp_path / "t.cfg"
    cfg.write_text("m_net_values = 2, 4, 8\n")
    assert cli.main(["--config", str(cfg), "--scenario", "TpsVsM", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "tps_vs_m.csv")
    assert rows[0] == ["m", "protocol", "tps"]
    for proto in ("PSCDSS", "CBRS", "SingleChain", "MultiChain", "CrossChain"):
        assert [r[0] for r in rows[1:] if r[1] == proto] == ["2", "4", "8"]
    manifests = [p.name for p in tmp_path.iterdir() if p.name == cli.MANIFEST]
    assert manifests == [cli.MANIFEST]


def test_same_seed_gives_same_manifest(tmp_path):
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["--scenario", "Fig3", "--trials", "500", "--seed", "7", "--out", str(out)]) == 0
        m = json.loads((out / cli.MANIFEST).read_text())
        assert m["seed"] == 7 and m["files"] == ["fig3.csv"]
        m.pop("wall_time_s")
        m["config"].pop("out")
        runs.append(m)
    assert runs[0] == runs[1]


def test_fig4_rows(tmp_path):
    cfg = tmp_path / "f.cfg"
    cfg.write_text("gamma_db_values = -5, 5\n")
    assert cli.main(["--config", str(cfg), "--scenario", "Fig4", "--trials", "2000", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "fig4.csv")
    assert [r[:2] for r in rows[1:]] == [["downlink", "-5.0"], ["downlink", "5.0"],
                                         ["uplink", "-5.0"], ["uplink", "5.0"]]


def test_custom_scenario(tmp_path):
    assert cli.main(["--trials", "2000", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "custom.csv")
    assert [r[0] for r in rows[1:]] == ["pout_dl", "pout_ul", "pf_g", "pf_s", "ps_fixed", "ps_dynamic"]


def test_derived_seeds_differ():
    assert len({cli.derive_seed(1, i) for i in range(100)}) == 100
    assert cli.derive_seed(1, 0) == cli.derive_seed(1, 0)
