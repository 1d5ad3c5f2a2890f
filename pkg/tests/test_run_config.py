import json
import logging

import pytest

from run_config import LOG_FORMAT, RunSettings, close_logging, record_event, setup_logging


def test_settings_read_the_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("GIBBSFLUCT_THREADS", "3")
    monkeypatch.setenv("GIBBSFLUCT_LOG_LEVEL", "debug")
    monkeypatch.setenv("GIBBSFLUCT_OUT", str(tmp_path / "runs"))
    settings = RunSettings()
    assert settings.threads == 3
    assert settings.log_level == "DEBUG"
    assert settings.output_root == tmp_path / "runs"
    assert settings.to_dict()["threads"] == 3


def test_explicit_values_win(monkeypatch):
    monkeypatch.setenv("GIBBSFLUCT_THREADS", "3")
    assert RunSettings(threads=2).threads == 2
    assert RunSettings().resolve_threads(None) == 3
    assert RunSettings().resolve_threads(5) == 5


@pytest.mark.parametrize("value", ["zero", "0", "-2"])
def test_bad_thread_counts(monkeypatch, value):
    monkeypatch.setenv("GIBBSFLUCT_THREADS", value)
    with pytest.raises(ValueError, match="GIBBSFLUCT_THREADS"):
        RunSettings()


def test_bad_log_level(monkeypatch):
    monkeypatch.setenv("GIBBSFLUCT_LOG_LEVEL", "chatty")
    with pytest.raises(ValueError, match="log level"):
        RunSettings()


def test_record_event_appends_json_lines(tmp_path):
    log_path = tmp_path / "run" / "run_log.jsonl"
    record_event("simulate", "chain_000", "success", log_path=log_path, metadata={"steps": 10})
    record_event("oracle_test", "counts", "failed", log_path=log_path)
    lines = [json.loads(line) for line in log_path.read_text().splitlines()]
    assert [entry["action_type"] for entry in lines] == ["simulate", "oracle_test"]
    assert lines[0]["metadata"] == {"steps": 10}
    assert "metadata" not in lines[1]
    assert lines[1]["result"] == "failed"


def test_record_event_without_a_file():
    entry = record_event("bounds", "c_d", "success")
    assert entry["target"] == "c_d"


def test_setup_logging_is_idempotent(tmp_path):
    name = "RunConfigTest"
    try:
        logger = setup_logging(name, tmp_path, level="WARNING")
        assert setup_logging(name, tmp_path) is logger
        assert len(logger.handlers) == 2
        assert logger.handlers[0].formatter._fmt == LOG_FORMAT
        logger.info("written to the file only")
        for handler in logger.handlers:
            handler.flush()
        assert "written to the file only" in (tmp_path / "gibbsfluct.log").read_text()
    finally:
        close_logging(name)
    assert logging.getLogger(name).handlers == []
