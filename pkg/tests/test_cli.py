import json

import pytest

from completion_moment.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from completion_moment.network import ModelParams, load_params

SMALL = ["--hidden", "6", "--epochs", "2"]


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def dataset(tmp_path):
    out = tmp_path / "data"
    assert main(["synth", "--n", "30", "--p-inc", "0.5", "--seed", "7", "--t-min", "10",
                 "--t-max", "20", "--out", str(out)]) == EXIT_OK
    return out


@pytest.fixture
def trained(tmp_path, dataset):
    run = tmp_path / "run"
    assert main(["train", "--data", str(dataset), "--out", str(run), *SMALL]) == EXIT_OK
    return run


class TestSynth:
    def test_writes_files(self, tmp_path):
        out = tmp_path / "d"
        assert main(["synth", "--n", "50", "--p-inc", "0.5", "--seed", "7", "--out", str(out)]) == 0
        assert len(list((out / "features").glob("*.cmv"))) == 50
        lines = (out / "annotations.jsonl").read_text().splitlines()
        assert len(lines) == 50
        assert (out / "config.json").is_file() and (out / "split.jsonl").is_file()

    def test_rerun_identical(self, tmp_path):
        args = ["synth", "--n", "12", "--seed", "4", "--out", str(tmp_path / "a")]
        main(args)
        first = tree(tmp_path / "a")
        main(args)
        assert tree(tmp_path / "a") == first

    def test_bad_p_inc(self, tmp_path):
        assert main(["synth", "--p-inc", "1.5", "--out", str(tmp_path / "x")]) == EXIT_USAGE

    def test_missing_out(self):
        assert main(["synth"]) == EXIT_USAGE

    def test_bad_flag(self):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--bogus"])
        assert exc.value.code == EXIT_USAGE

    def test_config_file_then_flags(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"n": 9, "seed": 5, "d": 3}))
        out = tmp_path / "o"
        assert main(["synth", "--config", str(cfg), "--d", "4", "--out", str(out)]) == 0
        echoed = json.loads((out / "config.json").read_text())
        assert echoed["n"] == 9 and echoed["seed"] == 5 and echoed["d"] == 4
        assert len(list((out / "features").glob("*.cmv"))) == 9
        # the echoed config reproduces the run
        again = tmp_path / "again"
        assert main(["synth", "--config", str(out / "config.json"), "--out", str(again)]) == 0
        assert tree(out / "features") == tree(again / "features")


class TestTrain:
    def test_checkpoint_and_trace(self, trained):
        params = load_params(trained / "model.cmp")
        assert params.hidden == 6 and params.d == 8
        assert (trained / "loss.csv").read_text().splitlines()[0] == "epoch,mean_loss"
        assert len((trained / "loss.csv").read_text().splitlines()) == 3
        assert json.loads((trained / "config.json").read_text())["hidden"] == 6

    def test_zero_lr_keeps_init(self, tmp_path, dataset):
        run = tmp_path / "lr0"
        assert main(["train", "--data", str(dataset), "--out", str(run), "--lr", "0",
                     "--seed", "3", *SMALL]) == 0
        assert load_params(run / "model.cmp").equals(ModelParams.init(8, 6, seed=3))

    def test_missing_split(self, tmp_path, dataset, capsys):
        missing = tmp_path / "nope.jsonl"
        code = main(["train", "--data", str(dataset), "--split", str(missing),
                     "--out", str(tmp_path / "r"), *SMALL])
        assert code == EXIT_DATA
        assert str(missing) in capsys.readouterr().err

    def test_leave_one_person_out(self, tmp_path, dataset):
        run = tmp_path / "lopo"
        assert main(["train", "--data", str(dataset), "--split", "leave-one-person-out",
                     "--subject", "s1", "--out", str(run), *SMALL]) == 0
        assert main(["train", "--data", str(dataset), "--split", "leave-one-person-out",
                     "--out", str(run), *SMALL]) == EXIT_USAGE


class TestEval:
    def test_all_outputs(self, tmp_path, dataset, trained):
        ev = tmp_path / "ev"
        test_ids = [json.loads(l)["id"] for l in (dataset / "split.jsonl").read_text().splitlines()
                    if json.loads(l)["role"] == "test"]
        code = main(["eval", "--data", str(dataset), "--checkpoint", str(trained / "model.cmp"),
                     "--out", str(ev), "--action", "pick", "--vote-dump", test_ids[0],
                     "--schemes", "C-C,R-R,R-C,C-R,Pre-V,LastR"])
        assert code == 0
        header = (ev / "report.txt").read_text().splitlines()[0]
        assert len([c for c in header.split() if c == "Acc"]) == 6
        preds = [json.loads(l) for l in (ev / "predictions.jsonl").read_text().splitlines()]
        assert len(preds) == 6 * len(test_ids)
        assert set(preds[0]) == {"id", "scheme", "tau_p", "is_complete", "tau_g"}
        for s in ("C-C", "R-R", "R-C", "C-R", "Pre-V", "LastR"):
            assert (ev / "curves" / f"pick_{s}.csv").read_text().startswith("threshold,fraction\n")
        dump = (ev / f"votes_{test_ids[0]}_C-R.csv").read_text().splitlines()
        assert dump[0] == "j,value"
        assert (ev / "config.json").is_file()

    def test_dimension_mismatch(self, tmp_path, dataset):
        bad = tmp_path / "bad"
        bad.mkdir()
        from completion_moment.network import save_params
        save_params(bad / "m.cmp", ModelParams.init(3, 4, seed=0))
        code = main(["eval", "--data", str(dataset), "--checkpoint", str(bad / "m.cmp"),
                     "--out", str(tmp_path / "ev")])
        assert code == EXIT_DATA

    def test_unknown_scheme(self, tmp_path, dataset, trained):
        code = main(["eval", "--data", str(dataset), "--checkpoint", str(trained / "model.cmp"),
                     "--out", str(tmp_path / "ev"), "--schemes", "C-X"])
        assert code == EXIT_USAGE

    def test_vote_dump_unknown_id(self, tmp_path, dataset, trained):
        ev = tmp_path / "ev"
        code = main(["eval", "--data", str(dataset), "--checkpoint", str(trained / "model.cmp"),
                     "--out", str(ev), "--vote-dump", "nope"])
        assert code == EXIT_DATA
        assert not ev.exists()


class TestReport:
    @pytest.fixture
    def reports(self, tmp_path, dataset, trained):
        paths = []
        for action in ("a1", "a2", "a3"):
            ev = tmp_path / f"ev_{action}"
            main(["eval", "--data", str(dataset), "--checkpoint", str(trained / "model.cmp"),
                  "--out", str(ev), "--action", action])
            paths.append(ev)
        return paths

    def test_three_actions(self, tmp_path, reports, capsys):
        out = tmp_path / "merged"
        assert main(["report", *map(str, reports), "--out", str(out)]) == 0
        lines = (out / "report.txt").read_text().splitlines()
        firsts = [l.split()[0] for l in lines[2:] if not l.startswith("-")]
        assert firsts == ["a1", "a2", "a3", "complete", "incomplete", "total"]

    def test_passthrough(self, reports, capsys):
        assert main(["report", str(reports[0])]) == 0
        merged = capsys.readouterr().out
        assert merged.splitlines()[2].startswith("a1")
        summary = (reports[0] / "report.txt").read_text()
        assert summary.startswith(merged)

    def test_mismatched_schemes(self, tmp_path, dataset, trained, reports):
        other = tmp_path / "other"
        main(["eval", "--data", str(dataset), "--checkpoint", str(trained / "model.cmp"),
              "--out", str(other), "--schemes", "C-R"])
        assert main(["report", str(reports[0]), str(other)]) == EXIT_DATA

    def test_missing_input(self, tmp_path):
        assert main(["report", str(tmp_path / "none")]) == EXIT_DATA
        assert main(["report"]) == EXIT_USAGE
