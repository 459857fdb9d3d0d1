"""Command-line contract: subcommands, exit codes, precedence, server mode."""

import json
import subprocess
import sys
import threading
import time

import pytest
from conftest import _StubHandler

from tcnformer.cli import ENDPOINT_ENV, dispatch
from tcnformer.config import RunConfig
from tcnformer.data import synthetic_sine_series, write_canonical_csv
from tcnformer.runs import run_train

TINY_FLAGS = [
    "--lookback", "8", "--horizon", "2", "--channels", "4",
    "--kernel-size", "3", "--dilations", "1", "--heads", "2",
    "--windows", "4", "--memory-slots", "3", "--dropout", "0.0",
    "--epochs", "2", "--batch-size", "32", "--seed", "0",
]

TINY_CFG_TEXT = (
    "lookback=8\nhorizon=2\nchannels=4\nkernel_size=3\ndilations=1\n"
    "heads=2\nwindows=4\nmemory_slots=3\ndropout=0.0\n"
    "batch_size=32\nseed=0\n"
)

POWER_CSV = (
    "YEAR,MO,DY,HR,WS10M\n"
    "2021,6,1,0,4.5\n"
    "2021,6,1,1,4.75\n"
    "2021,6,1,2,5.0\n"
)


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli_data") / "wind.csv"
    write_canonical_csv(path, synthetic_sine_series(200, seed=9))
    return str(path)


@pytest.fixture(scope="module")
def checkpoint(data_csv, tmp_path_factory):
    import dataclasses

    out = tmp_path_factory.mktemp("cli_ckpt")
    cfg = dataclasses.replace(
        RunConfig(),
        data_path=data_csv, out_dir=str(out), lookback=8, horizon=2,
        channels=4, dilations="1", heads=2, windows="4", memory_slots=3,
        dropout=0.0, epochs=2, seed=0,
    )
    return run_train(cfg)["checkpoint"]


@pytest.fixture(scope="module")
def live_server():
    import uvicorn

    from tcnformer.service import create_app

    config = uvicorn.Config(
        create_app(), host="127.0.0.1", port=0, log_level="error"
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10.0
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("service did not start")
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


class TestUsageErrors:
    def test_unknown_flag_exits_2(self, capsys):
        assert dispatch(["train", "--nonsense", "1"]) == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_subcommand_exits_2(self, capsys):
        assert dispatch(["frobnicate"]) == 2

    def test_no_command_prints_help(self, capsys):
        assert dispatch([]) == 2
        assert "usage" in capsys.readouterr().out.lower()

    def test_help_exits_0(self, capsys):
        assert dispatch(["--help"]) == 0
        out = capsys.readouterr().out
        for op in ("fetch", "train", "evaluate", "forecast", "ablate", "serve"):
            assert op in out

    def test_subcommand_help_lists_config_keys(self, capsys):
        assert dispatch(["train", "--help"]) == 0
        out = capsys.readouterr().out
        assert "--data-path" in out
        assert "--epochs" in out
        assert "--server" in out


class TestTrainCommand:
    def test_end_to_end_smoke(self, data_csv, tmp_path, capsys):
        out = tmp_path / "run"
        rc = dispatch(
            ["train", "--data-path", data_csv, "--out-dir", str(out)]
            + TINY_FLAGS
        )
        captured = capsys.readouterr()
        assert rc == 0, captured.err
        body = json.loads(captured.out)
        assert body["epochs_run"] == 2
        assert (out / "checkpoint.bin").exists()
        assert (out / "training_log.csv").exists()
        assert (out / "config.txt").exists()
        assert (out / "metrics.csv").exists()

    def test_domain_error_exits_1(self, tmp_path, capsys):
        rc = dispatch(["train", "--out-dir", str(tmp_path)] + TINY_FLAGS)
        captured = capsys.readouterr()
        assert rc == 1
        assert captured.err.startswith("error:")
        assert "data_path" in captured.err
        assert captured.err.strip().count("\n") == 0  # one-line diagnostic

    def test_flag_overrides_config_file(self, data_csv, tmp_path, capsys):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text(TINY_CFG_TEXT + "epochs=5\n")
        rc = dispatch(
            ["train", "--config", str(cfg_file), "--epochs", "3",
             "--data-path", data_csv, "--out-dir", str(tmp_path / "run")]
        )
        captured = capsys.readouterr()
        assert rc == 0, captured.err
        assert json.loads(captured.out)["epochs_run"] == 3

    def test_bad_config_file_names_key_and_line(self, data_csv, tmp_path, capsys):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("epochs=2\nbogus=1\n")
        rc = dispatch(
            ["train", "--config", str(cfg_file), "--data-path", data_csv,
             "--out-dir", str(tmp_path / "run")]
        )
        captured = capsys.readouterr()
        assert rc == 1
        assert "bogus" in captured.err
        assert ":2" in captured.err


class TestForecastCommand:
    def test_csv_has_exactly_horizon_rows(self, data_csv, checkpoint, tmp_path, capsys):
        out = tmp_path / "fc"
        rc = dispatch(
            ["forecast", "--data-path", data_csv, "--checkpoint", checkpoint,
             "--out-dir", str(out)]
        )
        captured = capsys.readouterr()
        assert rc == 0, captured.err
        body = json.loads(captured.out)
        lines = open(body["forecast_csv"], encoding="utf-8").read().strip().split("\n")
        assert lines[0] == "timestamp,ws10m_pred"
        assert len(lines) == 1 + 2
        for line in lines[1:]:
            ts, value = line.split(",")
            assert ts.endswith("Z")
            float(value)


class TestEvaluateCommand:
    def test_evaluate_smoke(self, data_csv, checkpoint, tmp_path, capsys):
        rc = dispatch(
            ["evaluate", "--data-path", data_csv, "--checkpoint", checkpoint,
             "--out-dir", str(tmp_path / "ev")]
        )
        captured = capsys.readouterr()
        assert rc == 0, captured.err
        body = json.loads(captured.out)
        assert body["variant"] == "full"
        assert body["mae"] >= 0.0


class TestAblateCommand:
    def test_ablate_smoke(self, data_csv, tmp_path, capsys):
        out = tmp_path / "abl"
        rc = dispatch(
            ["ablate", "--data-path", data_csv, "--out-dir", str(out)]
            + TINY_FLAGS
        )
        captured = capsys.readouterr()
        assert rc == 0, captured.err
        body = json.loads(captured.out)
        assert [a["variant"] for a in body["arms"]] == [
            "full", "no-ctmsa", "no-tea"
        ]
        assert (out / "comparison.csv").exists()
        assert (out / "per_step_mae.csv").exists()


class TestFetchCommand:
    def test_env_var_overrides_endpoint(self, stub_server, tmp_path, capsys,
                                        monkeypatch):
        _StubHandler.payload = POWER_CSV.encode()
        monkeypatch.setenv(ENDPOINT_ENV, stub_server)
        out = tmp_path / "dl"
        rc = dispatch(
            ["fetch", "--start-date", "20210601", "--end-date", "20210601",
             "--out-dir", str(out)]
        )
        captured = capsys.readouterr()
        assert rc == 0, captured.err
        body = json.loads(captured.out)
        assert body["rows"] == 3
        assert (out / "power_20210601_20210601.csv").exists()

    def test_flag_beats_env_var(self, stub_server, tmp_path, capsys, monkeypatch):
        _StubHandler.payload = POWER_CSV.encode()
        monkeypatch.setenv(ENDPOINT_ENV, "http://127.0.0.1:9/nowhere")
        rc = dispatch(
            ["fetch", "--start-date", "20210601", "--end-date", "20210601",
             "--endpoint-url", stub_server, "--out-dir", str(tmp_path / "dl")]
        )
        captured = capsys.readouterr()
        assert rc == 0, captured.err


class TestServerMode:
    def test_evaluate_against_live_server(self, data_csv, checkpoint,
                                          live_server, tmp_path, capsys):
        rc = dispatch(
            ["evaluate", "--server", live_server, "--data-path", data_csv,
             "--checkpoint", checkpoint, "--out-dir", str(tmp_path / "ev")]
        )
        captured = capsys.readouterr()
        assert rc == 0, captured.err
        assert json.loads(captured.out)["variant"] == "full"

    def test_server_domain_error_exits_1(self, live_server, tmp_path, capsys):
        rc = dispatch(
            ["train", "--server", live_server, "--out-dir", str(tmp_path)]
        )
        captured = capsys.readouterr()
        assert rc == 1
        assert "error: ConfigError" in captured.err

    def test_unreachable_server_exits_1(self, data_csv, tmp_path, capsys):
        rc = dispatch(
            ["train", "--server", "http://127.0.0.1:9", "--data-path",
             data_csv, "--out-dir", str(tmp_path)]
        )
        captured = capsys.readouterr()
        assert rc == 1
        assert "cannot reach" in captured.err


class TestEntryPoint:
    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "tcnformer.cli", "--help"],
            capture_output=True, text=True, timeout=60,
        )
        assert proc.returncode == 0
        assert "usage" in proc.stdout.lower()
