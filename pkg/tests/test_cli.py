import csv
import json
import math
import shutil
from pathlib import Path

import pytest

from gaussmdl.cli import main
from gaussmdl.core import load_dag
from gaussmdl.regress import read_data_csv
from gaussmdl.scoring import total_score

DATA = Path(__file__).parent / "data"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def parse_score(text):
    nodes = [float(line.rsplit(" ", 1)[1]) for line in text.splitlines() if line.startswith("node")]
    total = float(next(line for line in text.splitlines() if line.startswith("total")).split()[1])
    return nodes, total


@pytest.fixture
def sim(tmp_path, capsys):
    prefix = tmp_path / "sim"
    code, _, _ = run(capsys, "simulate", "--m", 4, "--nn", 2, "--n", 80, "--seed", 3,
                     "--out-prefix", prefix)
    assert code == 0
    return prefix


class TestSimulate:
    def test_golden(self, tmp_path, capsys):
        prefix = tmp_path / "golden"
        assert run(capsys, "simulate", "--m", 4, "--nn", 2, "--n", 60, "--seed", 7,
                   "--out-prefix", prefix)[0] == 0
        for suffix in (".csv", ".dag.json", ".params.json"):
            assert (tmp_path / f"golden{suffix}").read_bytes() == (DATA / f"golden{suffix}").read_bytes()

    def test_uniform(self, tmp_path, capsys):
        assert run(capsys, "simulate", "--m", 3, "--uniform", "--n", 10,
                   "--out-prefix", tmp_path / "u")[0] == 0
        assert load_dag(tmp_path / "u.dag.json").m == 3
        params = json.loads((tmp_path / "u.params.json").read_text())
        assert set(params) == {"mu", "tau", "b"}

    def test_requires_graph_kind(self, tmp_path, capsys):
        assert run(capsys, "simulate", "--m", 3, "--n", 10, "--out-prefix", tmp_path / "u")[0] == 2


class TestScore:
    def test_golden(self, capsys):
        code, out, _ = run(capsys, "score", DATA / "golden.csv", DATA / "golden.dag.json",
                           "--metric", "rnml")
        assert code == 0
        assert out == (DATA / "golden.score.txt").read_text()

    def test_matches_library(self, sim, capsys):
        data = read_data_csv(f"{sim}.csv")
        dag = load_dag(f"{sim}.dag.json")
        for metric in ("rnml", "rnml-stirling", "mdl3", "bic", "aic"):
            _, out, _ = run(capsys, "score", f"{sim}.csv", f"{sim}.dag.json", "--metric", metric)
            assert parse_score(out)[1] == total_score(metric, data, dag)

    def test_empty_dag_total_is_sum(self, sim, tmp_path, capsys):
        (tmp_path / "empty.json").write_text('{"m": 4, "edges": []}')
        _, out, _ = run(capsys, "score", f"{sim}.csv", tmp_path / "empty.json", "--metric", "aic")
        nodes, total = parse_score(out)
        assert total == pytest.approx(sum(nodes), rel=1e-15)

    def test_mdl3_minus_bic(self, sim, capsys):
        dag = load_dag(f"{sim}.dag.json")
        totals = {}
        for metric in ("mdl3", "bic"):
            totals[metric] = parse_score(run(capsys, "score", f"{sim}.csv", f"{sim}.dag.json",
                                             "--metric", metric)[1])[1]
        ks = sum(bin(p).count("1") + 1 for p in dag.parents)
        assert totals["mdl3"] - totals["bic"] == pytest.approx(math.log(4) * ks, rel=1e-12)

    def test_json_report(self, sim, tmp_path, capsys):
        run(capsys, "score", f"{sim}.csv", f"{sim}.dag.json", "--json", tmp_path / "r.json")
        report = json.loads((tmp_path / "r.json").read_text())
        assert report["metric"] == "rnml" and len(report["nodes"]) == 4

    def test_bad_inputs(self, sim, tmp_path, capsys):
        (tmp_path / "bad.csv").write_text("x1,x2\n1,zz\n")
        assert run(capsys, "score", tmp_path / "bad.csv", f"{sim}.dag.json")[0] == 3
        (tmp_path / "cyc.json").write_text('{"m": 4, "edges": [[0,1],[1,0]]}')
        assert run(capsys, "score", f"{sim}.csv", tmp_path / "cyc.json")[0] == 3
        (tmp_path / "m3.json").write_text('{"m": 3, "edges": []}')
        assert run(capsys, "score", f"{sim}.csv", tmp_path / "m3.json")[0] == 3
        assert run(capsys, "score", tmp_path / "missing.csv", f"{sim}.dag.json")[0] == 3

    def test_numerical_error(self, tmp_path, capsys):
        with open(tmp_path / "deg.csv", "w") as fh:
            fh.write("x1,x2\n")
            for i in range(10):
                fh.write(f"{i},{2 * i + 1}\n")
        (tmp_path / "g.json").write_text('{"m": 2, "edges": [[0, 1]]}')
        assert run(capsys, "score", tmp_path / "deg.csv", tmp_path / "g.json", "--strict")[0] == 4
        (tmp_path / "dup.csv").write_text("x1,x2,x3\n" + "".join(
            f"{i},{2 * i},{i % 3}\n" for i in range(10)))
        (tmp_path / "h.json").write_text('{"m": 3, "edges": [[0, 2], [1, 2]]}')
        assert run(capsys, "score", tmp_path / "dup.csv", tmp_path / "h.json")[0] == 4


class TestLearn:
    def test_dp_equals_exhaustive(self, sim, capsys):
        outs = [run(capsys, "learn", f"{sim}.csv", "--metric", "rnml", "--algorithm", alg)[1]
                for alg in ("dp", "exhaustive")]
        assert outs[0] == outs[1]
        assert json.loads(outs[0])["dag"]["m"] == 4

    def test_max_parents_zero(self, sim, capsys):
        out = run(capsys, "learn", f"{sim}.csv", "--max-parents", 0)[1]
        assert json.loads(out)["dag"]["edges"] == []

    def test_repeatable(self, sim, tmp_path, capsys):
        run(capsys, "learn", f"{sim}.csv", "--out", tmp_path / "a.json")
        run(capsys, "learn", f"{sim}.csv", "--out", tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_table_export(self, sim, tmp_path, capsys):
        run(capsys, "learn", f"{sim}.csv", "--max-parents", 1, "--table", tmp_path / "t.csv")
        with open(tmp_path / "t.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4 * 4

    def test_exhaustive_rejected_for_large_m(self, tmp_path, capsys):
        prefix = tmp_path / "big"
        run(capsys, "simulate", "--m", 7, "--nn", 2, "--n", 30, "--out-prefix", prefix)
        assert run(capsys, "learn", f"{prefix}.csv", "--algorithm", "exhaustive")[0] == 2
        assert run(capsys, "learn", f"{prefix}.csv", "--max-parents", 2)[0] == 0

    def test_usage_errors(self, sim, capsys):
        assert run(capsys, "learn", f"{sim}.csv", "--metric", "bde")[0] == 2
        assert run(capsys, "bogus")[0] == 2


class TestExperiment:
    def test_rank_outputs(self, tmp_path, capsys):
        out = tmp_path / "rank.csv"
        code, _, _ = run(capsys, "experiment", "rank", "--m", 3, "--sample-sizes", "30,60",
                         "--iterations", 2, "--metrics", "rnml,bic", "--seed", 4, "--out", out)
        assert code == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2 * 2 * 2
        assert rows[0].keys() == {"metric", "m", "nn", "n", "iteration", "statistic", "value"}
        with open(tmp_path / "rank.summary.csv") as fh:
            summary = list(csv.DictReader(fh))
        assert len(summary) == 4
        assert summary[0].keys() == {"metric", "m", "nn", "n", "mean", "stderr", "failures"}

    def test_shd_config_file_and_override(self, tmp_path, capsys):
        cfg = tmp_path / "shd.cfg"
        cfg.write_text("node_counts = 5\nneighbor_counts = 2\nsample_sizes = 40,80\n"
                       "iterations = 2\nmetrics = rnml,aic\nseed = 3\n")
        run(capsys, "experiment", "shd", "--config-file", cfg, "--out", tmp_path / "a.csv")
        run(capsys, "experiment", "shd", "--config-file", cfg, "--iterations", 3,
            "--out", tmp_path / "b.csv")
        a = (tmp_path / "a.csv").read_text().splitlines()
        b = (tmp_path / "b.csv").read_text().splitlines()
        assert len(a) == 1 + 2 * 2 * 2 and len(b) == 1 + 3 * 2 * 2
        assert set(a) <= set(b)
        assert (tmp_path / "a.table1.csv").exists()

    def test_json_config(self, tmp_path, capsys):
        cfg = tmp_path / "shd.json"
        cfg.write_text(json.dumps({"node_counts": [5], "neighbor_counts": [2],
                                   "sample_sizes": [40], "iterations": 1,
                                   "metrics": ["bic"], "seed": 1}))
        assert run(capsys, "experiment", "shd", "--config-file", cfg,
                   "--out", tmp_path / "x.csv")[0] == 0

    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("colour = blue\n")
        assert run(capsys, "experiment", "shd", "--config-file", cfg,
                   "--out", tmp_path / "x.csv")[0] == 2
        assert run(capsys, "experiment", "rank", "--m", 7, "--out", tmp_path / "x.csv")[0] == 2

    def test_roundtrip_from_simulate(self, sim, capsys):
        assert run(capsys, "score", f"{sim}.csv", f"{sim}.dag.json")[0] == 0
        assert run(capsys, "learn", f"{sim}.csv")[0] == 0
