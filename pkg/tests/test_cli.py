import json
import os

import numpy as np
import pytest

from ickalman import codec
from ickalman.cli import main


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh)


GEN_CFG = {"count": 12, "scheme": "scalar",
           "sampler": {"n": 2, "m": 1, "strategy": 2, "sigma_q2": 0.025,
                       "sigma_r2": 0.025, "context_length": 6, "seed": 21}}

EVAL_CFG = {"dataset": {"count": 15, "scheme": "scalar",
                        "sampler": {"n": 2, "m": 1, "strategy": 2,
                                    "sigma_q2": 0.025, "sigma_r2": 0.025,
                                    "context_length": 5, "seed": 8}},
            "algorithms": ["kf", "ols", "ridge(0.01)"],
            "state_mse": True}


class TestPipeline:
    def test_generate_filter_compare(self, workdir, capsys):
        write_json("gen.json", GEN_CFG)
        assert main(["generate", "--config", "gen.json", "--out", "d.json"]) == 0
        assert main(["filter", "--dataset", "d.json", "--algorithm", "kf",
                     "--out", "kf.json"]) == 0
        assert main(["filter", "--dataset", "d.json", "--algorithm", "vm-kf",
                     "--out", "vm.json"]) == 0
        assert main(["compare", "--a", "kf.json", "--b", "vm.json",
                     "--out", "curve.csv"]) == 0
        rows = open("curve.csv").read().splitlines()
        assert rows[0] == "context_length,algorithm_a,algorithm_b,mspd,stderr,batch"
        assert len(rows) == 1 + 6
        for line in rows[1:]:
            assert float(line.split(",")[3]) <= 1e-18

    def test_seed_override(self, workdir):
        write_json("gen.json", GEN_CFG)
        main(["generate", "--config", "gen.json", "--out", "a.json"])
        main(["generate", "--config", "gen.json", "--seed", "99",
              "--out", "b.json"])
        a = codec.read_dataset("a.json")
        b = codec.read_dataset("b.json")
        assert a["seed"] == 21 and b["seed"] == 99
        assert a["examples"][0]["targets"] != b["examples"][0]["targets"]

    def test_vm_run_outputs(self, workdir):
        write_json("gen.json", GEN_CFG)
        main(["generate", "--config", "gen.json", "--out", "d.json"])
        assert main(["vm-run", "--dataset", "d.json", "--mode", "kf",
                     "--out", "p.json", "--asm", "prog.kfasm",
                     "--trace", "trace.txt"]) == 0
        assert "MUL" in open("prog.kfasm").read()
        assert len(open("trace.txt").read().splitlines()) == 1 + 17 * 6
        doc = codec.read_predictions("p.json")
        assert doc["algorithm"] == "vm-kf"

    def test_export_context_and_dual(self, workdir):
        write_json("gen.json", GEN_CFG)
        main(["generate", "--config", "gen.json", "--out", "d.json"])
        assert main(["export-context", "--dataset", "d.json", "--scheme",
                     "scalar-no-params", "--out", "np.json"]) == 0
        doc = codec.read_dataset("np.json")
        assert doc["scheme"] == "scalar-no-params"
        ctx = np.asarray(doc["examples"][0]["context"])
        assert ctx.shape == (3, 2 + 2 * 6 + 1)
        assert main(["filter", "--dataset", "np.json", "--algorithm",
                     "dual-kf", "--out", "dual.json"]) == 0

    def test_evaluate_outputs_and_determinism(self, workdir):
        write_json("eval.json", EVAL_CFG)
        assert main(["evaluate", "--config", "eval.json", "--out-dir", "r1"]) == 0
        assert main(["evaluate", "--config", "eval.json", "--out-dir", "r2"]) == 0
        csv1 = open("r1/eval_mspd.csv", "rb").read()
        csv2 = open("r2/eval_mspd.csv", "rb").read()
        assert csv1 == csv2
        assert os.path.exists("r1/eval_state_mse.csv")
        results = json.load(open("r1/eval_results.json"))
        assert results["algorithms"] == ["kf", "ols", "ridge(0.01)"]

    def test_error_reporting(self, workdir, capsys):
        write_json("gen.json", GEN_CFG)
        main(["generate", "--config", "gen.json", "--out", "d.json"])
        rc = main(["filter", "--dataset", "d.json", "--algorithm", "bogus",
                   "--out", "x.json"])
        assert rc == 2
        assert "error:" in capsys.readouterr().err
