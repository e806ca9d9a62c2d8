from config import Config


def test_defaults_are_consistent():
    assert Config.validate()


def test_log_level_from_environment(monkeypatch):
    monkeypatch.setenv(Config.LOG_LEVEL_ENV, "debug")
    assert Config.log_level() == "DEBUG"


def test_unknown_log_level_falls_back(monkeypatch):
    monkeypatch.setenv(Config.LOG_LEVEL_ENV, "chatty")
    assert Config.log_level() == Config.DEFAULT_LOG_LEVEL


def test_log_level_default(monkeypatch):
    monkeypatch.delenv(Config.LOG_LEVEL_ENV, raising=False)
    assert Config.log_level() == "INFO"
