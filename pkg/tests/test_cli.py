import json

import pytest

from popmaj import cli, graph as G


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_graph_gen(tmp_path, capsys):
    path = tmp_path / "l.txt"
    code, out, _ = run(capsys, "graph", "gen", "lollipop", "--n1", "3", "--n2", "2",
                       "--bridge", "directed-u-to-v", "--out", str(path))
    assert code == 0 and "arcs=9" in out
    assert G.from_edge_list(path.read_text()).arc_set == G.lollipop(3, 2, "directed-u-to-v").arc_set
    code, out, _ = run(capsys, "graph", "gen", "clique", "--n", "3")
    assert code == 0 and out.startswith("n 3")


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["nonsense"])
    assert exc.value.code == 1
    code, _, err = run(capsys, "graph", "gen", "clique", "--n", "1")
    assert code == 1 and "error" in err
    code, _, _ = run(capsys, "simulate", "no-such-preset")
    assert code == 1


def test_verify_exit_codes(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "--protocol", "three-state", "--graph", "line:m=3",
                       "--coloring", "grr", "--expect", "pass")
    assert code == 3 and json.loads(out)["verdict"] == "fail"
    code, out, _ = run(capsys, "verify", "--protocol", "three-state", "--graph", "line:m=3",
                       "--coloring", "grr", "--expect", "fail")
    assert code == 0
    path = tmp_path / "g.txt"
    path.write_text(G.to_edge_list(G.cycle_with_chords(5)))
    code, out, _ = run(capsys, "verify", "--graph", str(path), "--expect", "pass")
    assert code == 0 and json.loads(out)["instances"] == 32
    code, out, _ = run(capsys, "verify", "--nmax", "4", "--expect", "pass")
    assert code == 0 and json.loads(out)["instances"] == 2 + 4 * 8 + 38 * 10


def test_verify_tie_is_usage_error(capsys):
    code, _, err = run(capsys, "verify", "--graph", "clique:n=4", "--coloring", "rrgg")
    assert code == 1 and "majority" in err


def test_bd(capsys):
    code, out, _ = run(capsys, "bd", "prob", "--m", "2", "--p", "0.6", "--q", "0.4", "--i", "1",
                       "--mc", "20000", "--seed", "3")
    doc = json.loads(out)
    assert code == 0 and doc["value"] == pytest.approx(0.6)
    assert abs(doc["monte_carlo"]["mean"] - 0.6) < 0.02
    code, out, _ = run(capsys, "bd", "time", "--m", "3", "--p", "0.6", "--q", "0.3", "--i", "3")
    assert json.loads(out)["value"] == 0
    code, _, _ = run(capsys, "bd", "time", "--m", "3", "--p", "0.3", "--q", "0.3", "--i", "1")
    assert code == 1
    code, out, _ = run(capsys, "bd", "time", "--m", "3", "--p", "0.3", "--q", "0.3", "--i", "1",
                       "--allow-symmetric")
    assert code == 0


def test_simulate_and_sweep(tmp_path, capsys, monkeypatch):
    code, out, err = run(capsys, "simulate", "line-lemma", "--trials", "200", "--out-dir", str(tmp_path))
    assert code == 0 and "runs:" in out and "sweep" in err
    assert (tmp_path / "line-lemma.runs.jsonl").read_text().count("\n") == 200
    monkeypatch.setenv("POPMAJ_OUTPUT_DIR", str(tmp_path / "env"))
    code, out, _ = run(capsys, "sweep", "two-clique-time", "--trials", "5", "--plot-data")
    assert code == 0
    assert (tmp_path / "env" / "two-clique-time.plot.csv").exists()
    assert (tmp_path / "env" / "two-clique-time.csv").read_text().count("\n") == 5


def test_presets_listing(capsys):
    code, out, _ = run(capsys, "presets")
    assert code == 0 and "lollipop-failure" in out
