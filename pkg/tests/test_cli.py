import json

import numpy as np
import pytest

from rbmsolve.cli import EXIT_CODES, main
from rbmsolve.experiments import read_csv
from rbmsolve.fixtures import fixture_dir, load_circuit
from rbmsolve.modelio import load_model, read_stream, save_model


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestTrain:
    def test_adder_dimensions_and_log(self, tmp_path, capsys):
        out, log = tmp_path / "add1.json", tmp_path / "log.csv"
        code, stdout, _ = run(capsys, "train", "--circuit", "add1", "--hidden", 6, "--epochs", 50,
                              "--seed", 3, "--out", out, "--log", log)
        assert code == 0
        m = load_model(out)
        assert (m.n_visible, m.n_hidden) == (5, 6)
        rows, cfg = read_csv(log)
        assert len(rows) == 51 and rows[0]["epoch"] == "0" and cfg["seed"] == "3" and "argv" in cfg

    def test_same_seed_byte_identical(self, tmp_path, capsys):
        args = ["train", "--circuit", "and", "--hidden", 4, "--epochs", 30, "--seed", 7]
        assert run(capsys, *args, "--out", tmp_path / "a.rbm")[0] == 0
        assert run(capsys, *args, "--out", tmp_path / "b.rbm")[0] == 0
        assert (tmp_path / "a.rbm").read_bytes() == (tmp_path / "b.rbm").read_bytes()

    def test_dataset_csv(self, tmp_path, capsys):
        ds = tmp_path / "d.csv"
        ds.write_text("x,y,out\n0,0,0\n0,1,1\n1,0,1\n1,1,1\n")
        code, _, _ = run(capsys, "train", "--dataset", ds, "--hidden", 3, "--epochs", 5,
                         "--out", tmp_path / "m.json")
        assert code == 0
        assert load_model(tmp_path / "m.json").visible_labels == ("x", "y", "out")

    def test_missing_dataset_no_output(self, tmp_path, capsys):
        out = tmp_path / "m.json"
        code, _, err = run(capsys, "train", "--dataset", tmp_path / "nope.csv", "--hidden", 3,
                           "--out", out)
        assert code == EXIT_CODES["io"] and err.startswith("error[io]:")
        assert not out.exists()

    def test_bad_dataset(self, tmp_path, capsys):
        ds = tmp_path / "d.csv"
        ds.write_text("x,y\n0,2\n")
        code, _, err = run(capsys, "train", "--dataset", ds, "--hidden", 3, "--out", tmp_path / "m.json")
        assert code == EXIT_CODES["format"] and "error[format]" in err

    def test_qat_lands_on_grid(self, tmp_path, capsys):
        # no circuit means no validation, so the final (snapped) model is kept
        ds = tmp_path / "d.csv"
        ds.write_text("x,y,out\n0,0,0\n0,1,0\n1,0,0\n1,1,1\n")
        out = tmp_path / "q.json"
        code, _, _ = run(capsys, "train", "--dataset", ds, "--init", "and", "--epochs", 300,
                         "--lr", 0, "--qat-bits", 6, "--qat-rate", 0.05, "--max-weight", 4,
                         "--out", out)
        assert code == 0
        w = load_model(out).weights
        assert np.abs(w * 8 - np.rint(w * 8)).max() < 1e-9


class TestMerge:
    def test_multiplier_dimension_law(self, tmp_path, capsys):
        out = tmp_path / "m4.json"
        code, stdout, _ = run(capsys, "merge", "--circuit", "mult4_circuit", "--out", out)
        assert code == 0
        m, meta = load_model(out, with_metadata=True)
        assert (m.n_visible, m.n_hidden) == (40, 220)
        assert "40 visible (sum 68 - 28 merged)" in stdout
        assert meta["consts"] == dict(load_circuit("mult4_circuit").consts)

    def test_dangling_net(self, tmp_path, capsys):
        spec = tmp_path / "c.txt"
        spec.write_text("block g and\nnet x g.x\nnet y g.y\nnet out g.out\nnet loose\n")
        code, _, err = run(capsys, "merge", "--circuit", spec, "--out", tmp_path / "o.json")
        assert code == EXIT_CODES["circuit"] and "'loose'" in err
        assert not (tmp_path / "o.json").exists()

    def test_retrain_small(self, tmp_path, capsys):
        spec = tmp_path / "c.txt"
        spec.write_text("block lo add1\nblock hi add1\nnet c lo.s1 hi.cin\n")
        code, _, _ = run(capsys, "merge", "--circuit", spec, "--retrain-epochs", 5,
                         "--out", tmp_path / "o.json")
        assert code == 0
        assert load_model(tmp_path / "o.json", with_metadata=True)[1]["stage"] == "retrained"


class TestQuantizeSample:
    def test_quantize_and_sample(self, tmp_path, capsys):
        fx = tmp_path / "m.rbm"
        assert run(capsys, "quantize", "--model", "mult2", "--bits", 6, "--seed", 4, "--out", fx)[0] == 0
        m = load_model(fx)
        assert m.grid.total_bits == 6 and m.grid.frac_bits == 3 and m.master_seed == 4
        stream = tmp_path / "s.bin"
        code, _, _ = run(capsys, "sample", "--model", fx, "--engine", "fixed", "--samples", 100,
                         "--clamp", "p0=1,p3=1", "--out", stream)
        assert code == 0
        bits, _ = read_stream(stream)
        assert bits.shape == (100, 8) and np.all(bits[:, 4] == 1) and np.all(bits[:, 7] == 1)

    def test_sample_csv_replay(self, tmp_path, capsys):
        for name in ("a.csv", "b.csv"):
            run(capsys, "sample", "--model", "xor", "--samples", 50, "--seed", 2, "--discard", 5,
                "--out", tmp_path / name)
        rows, cfg = read_csv(tmp_path / "a.csv")
        assert len(rows) == 50 and set(rows[0]) == {"x", "y", "out"}
        assert cfg["seed"] == "2" and cfg["discard"] == "5"
        body = lambda p: [l for l in p.read_text().splitlines() if not l.startswith(("# argv", "# out"))]
        assert body(tmp_path / "a.csv") == body(tmp_path / "b.csv")

    def test_no_in_place_overwrite(self, tmp_path, capsys):
        src = tmp_path / "m.json"
        save_model(src, load_model(fixture_dir() / "and.json"))
        before = src.read_bytes()
        code, _, err = run(capsys, "quantize", "--model", src, "--out", src)
        assert code == EXIT_CODES["io"] and "overwrite" in err
        code, _, _ = run(capsys, "train", "--circuit", "and", "--init", src, "--epochs", 3, "--out", src)
        assert code == EXIT_CODES["io"]
        assert src.read_bytes() == before

    def test_fixed_engine_needs_fixed_model(self, capsys):
        code, _, err = run(capsys, "sample", "--model", "mult2", "--engine", "fixed")
        assert code == EXIT_CODES["model"] and err.startswith("error[model]")

    def test_missing_model(self, capsys, tmp_path):
        code, _, err = run(capsys, "sample", "--model", tmp_path / "ghost.json")
        assert code == EXIT_CODES["io"]

    def test_bad_clamp(self, capsys):
        assert run(capsys, "sample", "--model", "xor", "--clamp", "q=1")[0] == EXIT_CODES["task"]
        assert run(capsys, "sample", "--model", "xor", "--clamp", "x=2")[0] == EXIT_CODES["usage"]

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == EXIT_CODES["usage"]

    def test_corrupt_model(self, tmp_path, capsys):
        bad = tmp_path / "x.rbm"
        bad.write_bytes(b"RBMFgarbage")
        assert run(capsys, "sample", "--model", bad)[0] == EXIT_CODES["format"]


class TestTaskCommands:
    def test_factor(self, tmp_path, capsys):
        out = tmp_path / "f.csv"
        code, _, err = run(capsys, "factor", "--model", "mult2", "--product", 6, 9, "--samples", 2000,
                           "--early-stop", "--seed", 1, "--out", out)
        assert code == 0
        rows, cfg = read_csv(out)
        assert [r["p"] for r in rows] == ["6", "9"]
        assert all(r["correct"] == "True" and r["early_stop_verified"] == "True" for r in rows)
        assert rows[1]["answer"] == "3 3"
        assert json.loads(err.strip().splitlines()[-1])["p_correct@2000"] == 1.0
        assert cfg["engine"] == "float" and cfg["seed"] == "1"

    def test_factor_instance_file_fixed(self, tmp_path, capsys):
        inst = tmp_path / "i.txt"
        inst.write_text("factor 2 p=4\nfactor 2 p=9\n")
        code, _, _ = run(capsys, "factor", "--model", "mult2_fx8", "--engine", "fixed",
                         "--instances", inst, "--samples", 1000, "--out", tmp_path / "f.csv")
        assert code == 0
        rows, _ = read_csv(tmp_path / "f.csv")
        assert [r["answer"] for r in rows] == ["2 2", "3 3"]

    def test_factor_bad_product(self, capsys):
        code, _, err = run(capsys, "factor", "--model", "mult2", "--product", 7)
        assert code == EXIT_CODES["task"]

    def test_factor_wrong_model(self, capsys):
        assert run(capsys, "factor", "--model", "add1", "--product", 4)[0] == EXIT_CODES["task"]

    def test_sat(self, tmp_path, capsys):
        cnf = tmp_path / "f.cnf"
        cnf.write_text("c example\np cnf 4 4\n1 2 -3 0\n-1 3 4 0\n2 -3 -4 0\n-2 3 4 0\n")
        code, _, _ = run(capsys, "sat", "--cnf", cnf, "--samples", 3000, "--early-stop",
                         "--out", tmp_path / "s.csv")
        assert code == 0
        rows, _ = read_csv(tmp_path / "s.csv")
        assert rows[0]["satisfiable"] == "True" and rows[0]["early_stop_verified"] == "True"

    def test_sat_bad_clause(self, capsys):
        assert run(capsys, "sat", "--clauses", "1,2")[0] == EXIT_CODES["circuit"]


class TestBench:
    def test_throughput_schema(self, tmp_path, capsys):
        out = tmp_path / "t.csv"
        code, _, _ = run(capsys, "bench", "throughput", "--visible", 8, "--hidden", 16,
                         "--samples", 200, "--chains", "1,4", "--seed", 3, "--out", out)
        assert code == 0
        rows, cfg = read_csv(out)
        assert {"engine", "n_visible", "n_hidden", "samples_per_sec", "seed"} <= set(rows[0])
        assert {r["engine"] for r in rows} == {"float", "fixed-numba", "fixed-numpy"}
        assert cfg["kind"] == "throughput"

    def test_curves(self, tmp_path, capsys):
        out = tmp_path / "c.csv"
        code, _, _ = run(capsys, "bench", "curves", "--samples", 300, "--repeats", 2,
                         "--checkpoints", "10,100", "--out", out)
        assert code == 0
        rows, _ = read_csv(out)
        assert {(r["model"], r["samples"]) for r in rows} == {(e, s) for e in ("float", "fixed")
                                                              for s in ("10", "100", "300")}

    def test_hitting(self, tmp_path, capsys):
        out = tmp_path / "h.csv"
        code, _, _ = run(capsys, "bench", "hitting", "--engine", "float", "--samples", 500,
                         "--repeats", 3, "--out", out)
        assert code == 0
        rows, _ = read_csv(out)
        assert sum(int(r["count"]) for r in rows) == 15 and "median_hitting" in rows[0]
