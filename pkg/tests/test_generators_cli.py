import json

import pytest

from dynround import cli
from dynround.generators import (
    blossom_rich,
    cycle,
    disjoint_odd_cycles,
    generate,
    random_fractional,
    random_gnp,
)
from dynround.graph import read_graph
from dynround.polytope import check_membership


def test_generator_contracts():
    assert cycle(5).edges() == [(0, 1), (0, 4), (1, 2), (2, 3), (3, 4)]
    assert disjoint_odd_cycles(cycle(5)) == 1
    assert disjoint_odd_cycles(cycle(6)) == 0
    for s in range(5):
        assert disjoint_odd_cycles(blossom_rich(15, s)) >= 3
    assert random_gnp(30, 0.2, 7).weights == random_gnp(30, 0.2, 7).weights
    with pytest.raises(ValueError):
        generate("grid", 5)
    with pytest.raises(ValueError):
        blossom_rich(10, 0)


@pytest.mark.parametrize("seed", range(4))
def test_random_fractional_in_degree_polytope(seed):
    G = generate("weighted-random", 25, 0.3, seed, W=10)
    x = random_fractional(G, 0.25, seed)
    assert check_membership(x, "P").member
    assert set(x.values) == set(G.edges())


def _run(tmp_path, *argv):
    return cli.main([*argv])


def test_gen_cycle_and_determinism(tmp_path, capsys):
    assert cli.main(["gen", "--kind", "cycle", "--n", "5", "--out", str(tmp_path / "c5.txt")]) == 0
    assert read_graph(tmp_path / "c5.txt").edges() == cycle(5).edges()
    for name in ("a", "b"):
        cli.main(["gen", "--kind", "random-gnp", "--n", "50", "--param", "0.2", "--seed", "7",
                  "--out", str(tmp_path / f"{name}.txt")])
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    capsys.readouterr()


def test_randomized_commands_need_seed(tmp_path, capsys):
    cli.main(["gen", "--kind", "cycle", "--n", "7", "--out", str(tmp_path / "g.txt")])
    assert cli.main(["sparsify", "--input", str(tmp_path / "g.txt")]) == 2
    assert cli.main(["gen", "--kind", "random-gnp", "--n", "7",
                     "--out", str(tmp_path / "h.txt")]) == 2
    assert "needs --seed" in capsys.readouterr().err


def test_decremental_oracle_column(tmp_path, capsys):
    g = tmp_path / "g.txt"
    cli.main(["gen", "--kind", "weighted-random", "--n", "20", "--param", "0.2", "--seed", "3",
              "--out", str(g)])
    rep = tmp_path / "dec.json"
    trace = tmp_path / "dec.jsonl"
    code = cli.main(["decremental", "--input", str(g), "--epsilon", "0.2", "--seed", "1",
                     "--oracle-check", "--out", str(rep), "--trace", str(trace)])
    data = json.loads(rep.read_text())
    assert code == (0 if data["ok"] else 1)
    rows = [json.loads(r) for r in trace.read_text().splitlines()]
    assert rows and all("ratio" in r and "mwm_oracle" in r for r in rows)
    assert {"t", "op", "wM", "counterX", "counterM", "rebuild", "round"} <= set(rows[0])
    assert cli.main(["verify", "--input", str(rep), "--out", str(tmp_path / "v.json")]) == 0
    capsys.readouterr()


def test_montecarlo_table_and_verify(tmp_path, capsys):
    g = tmp_path / "g.txt"
    cli.main(["gen", "--kind", "random-gnp", "--n", "20", "--param", "0.3", "--seed", "2",
              "--out", str(g)])
    rep = tmp_path / "mc.json"
    code = cli.main(["montecarlo", "--input", str(g), "--epsilon", "0.25", "--d", "16",
                     "--trials", "10000", "--seed", "5", "--out", str(rep)])
    data = json.loads(rep.read_text())
    assert data["schema"] == 1 and code == 0
    assert data["result"]["columns"] == ["u", "v", "x", "freq", "sigma", "lo", "hi"]
    assert len(data["result"]["frequencies"]) > 0
    assert cli.main(["verify", "--input", str(rep), "--out", str(tmp_path / "v.json")]) == 0

    # tampering with a frequency is caught by the recheck
    data["result"]["frequencies"][0][3] = -1.0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    assert cli.main(["verify", "--input", str(bad), "--out", str(tmp_path / "v2.json")]) == 1
    capsys.readouterr()


def test_entropy_and_sparsify_commands(tmp_path, capsys):
    g = tmp_path / "g.txt"
    x = tmp_path / "x.txt"
    cli.main(["gen", "--kind", "weighted-random", "--n", "10", "--param", "0.4", "--seed", "1",
              "--out", str(g), "--x-out", str(x)])
    assert cli.main(["entropy", "--input", str(g), "--epsilon", "0.2", "--polytope", "full",
                     "--oracle-check", "--out", str(tmp_path / "e.json")]) == 0
    upd = tmp_path / "u.jsonl"
    edges = read_graph(g).edges()[:4]
    upd.write_text("".join(json.dumps({"op": "del", "u": u, "v": v}) + "\n" for u, v in edges))
    assert cli.main(["sparsify", "--input", str(g), "--x", str(x), "--seed", "2", "--d", "8",
                     "--updates", str(upd), "--out", str(tmp_path / "s.json")]) == 0
    data = json.loads((tmp_path / "s.json").read_text())
    assert len(data["result"]["rounding"]["trace"]) == 4
    for name in ("e", "s"):
        assert cli.main(["verify", "--input", str(tmp_path / f"{name}.json"),
                         "--out", str(tmp_path / f"v{name}.json")]) == 0
    capsys.readouterr()


def test_bad_epsilon_is_usage_error(tmp_path, capsys):
    cli.main(["gen", "--kind", "cycle", "--n", "5", "--out", str(tmp_path / "g.txt")])
    assert cli.main(["entropy", "--input", str(tmp_path / "g.txt"), "--epsilon", "1.5"]) == 2
    capsys.readouterr()
