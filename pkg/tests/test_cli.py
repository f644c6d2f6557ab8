import json

from conftest import tiny_config
from pifnet.cli import main


def write_cfg(tmp_path, cfg):
    path = tmp_path / "run.cfg"
    cfg.write(path)
    return str(path)


class TestCli:
    def test_full_command_chain(self, tmp_path, capsys):
        cfg_path = write_cfg(tmp_path, tiny_config(n=240))
        out = str(tmp_path / "run")
        assert main(["preprocess", "--config", cfg_path, "--out-dir", out]) == 0
        assert main(["select-features", "--config", cfg_path, "--out-dir", out]) == 0
        assert main(["train", "--config", cfg_path, "--out-dir", out]) == 0
        assert main(["evaluate", "--config", cfg_path, "--out-dir", out]) == 0
        captured = capsys.readouterr()
        assert "persistence" in captured.out
        assert (tmp_path / "run" / "metrics.txt").exists()

    def test_separate_data_and_train_dirs(self, tmp_path):
        cfg_path = write_cfg(tmp_path, tiny_config(n=240))
        data = str(tmp_path / "data")
        train = str(tmp_path / "train")
        assert main(["preprocess", "--config", cfg_path, "--out-dir", data]) == 0
        assert main(["select-features", "--config", cfg_path, "--out-dir", data,
                     "--data-dir", data]) == 0
        assert main(["train", "--config", cfg_path, "--out-dir", train,
                     "--data-dir", data]) == 0
        assert main(["evaluate", "--config", cfg_path, "--out-dir", train,
                     "--data-dir", data, "--train-dir", train]) == 0

    def test_seed_override(self, tmp_path):
        cfg_path = write_cfg(tmp_path, tiny_config(n=240))
        data = str(tmp_path / "data")
        main(["preprocess", "--config", cfg_path, "--out-dir", data])
        main(["select-features", "--config", cfg_path, "--out-dir", data])
        main(["train", "--config", cfg_path, "--out-dir", str(tmp_path / "a"),
              "--data-dir", data, "--seed", "3"])
        main(["train", "--config", cfg_path, "--out-dir", str(tmp_path / "b"),
              "--data-dir", data, "--seed", "3"])
        main(["train", "--config", cfg_path, "--out-dir", str(tmp_path / "c"),
              "--data-dir", data, "--seed", "4"])
        a = (tmp_path / "a" / "checkpoint.bin").read_bytes()
        b = (tmp_path / "b" / "checkpoint.bin").read_bytes()
        c = (tmp_path / "c" / "checkpoint.bin").read_bytes()
        assert a == b
        assert a != c

    def test_missing_prerequisite_fails_with_json_error(self, tmp_path, capsys):
        cfg_path = write_cfg(tmp_path, tiny_config(n=240))
        code = main(["train", "--config", cfg_path,
                     "--out-dir", str(tmp_path / "empty")])
        assert code != 0
        err = capsys.readouterr().err.strip().splitlines()[-1]
        payload = json.loads(err)
        assert payload["error"] == "ContractError"
        assert "preprocess" in payload["message"]

    def test_bad_config_fails_with_json_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[lof]\ncontamination = 2.0\n")
        code = main(["preprocess", "--config", str(bad),
                     "--out-dir", str(tmp_path / "run")])
        assert code != 0
        payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert payload["error"] == "ParameterError"

    def test_resolved_config_reproduces_run(self, tmp_path):
        # a run directory's resolved config is a complete recipe
        cfg_path = write_cfg(tmp_path, tiny_config(n=240))
        first = str(tmp_path / "first")
        assert main(["preprocess", "--config", cfg_path, "--out-dir", first]) == 0
        resolved = str(tmp_path / "first" / "resolved.cfg")
        second = str(tmp_path / "second")
        assert main(["preprocess", "--config", resolved, "--out-dir", second]) == 0
        assert (tmp_path / "first" / "corrected.csv").read_bytes() == \
            (tmp_path / "second" / "corrected.csv").read_bytes()
