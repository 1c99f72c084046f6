import logging

import pytest

from gnnanatomy.config import THREADS_ENV, load_train_config, read_config_file, setup_logging, worker_count
from gnnanatomy.errors import ConfigError


def _cfg(tmp_path, text):
    path = tmp_path / "train.env"
    path.write_text(text)
    return str(path)


class TestConfigFile:
    def test_values_are_coerced(self, tmp_path):
        values = read_config_file(_cfg(tmp_path, "n_runs = 7\nlearning_rate=0.05\nedge_input = matrix\nhidden_width = auto\n"))
        assert values == {"n_runs": 7, "learning_rate": 0.05, "edge_input": "matrix", "hidden_width": None}

    def test_comments_and_blank_lines(self, tmp_path):
        assert read_config_file(_cfg(tmp_path, "# harness\n\npatience = 9\n")) == {"patience": 9}

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError, match="weight_decay"):
            read_config_file(_cfg(tmp_path, "weight_decay = 0.1\n"))

    def test_bad_integer(self, tmp_path):
        with pytest.raises(ConfigError, match="n_runs"):
            read_config_file(_cfg(tmp_path, "n_runs = many\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            read_config_file(str(tmp_path / "absent.env"))


class TestLoadTrainConfig:
    def test_defaults(self):
        cfg = load_train_config()
        assert cfg.n_runs == 100 and cfg.learning_rate == 0.001

    def test_flags_beat_file_and_none_is_ignored(self, tmp_path):
        cfg = load_train_config(_cfg(tmp_path, "n_runs = 7\npatience = 3\n"), {"n_runs": 11, "patience": None})
        assert (cfg.n_runs, cfg.patience) == (11, 3)

    def test_invalid_value_surfaces_as_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            load_train_config(_cfg(tmp_path, "patience = 0\n"))


class TestEnvironment:
    def test_worker_flag_wins(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "3")
        assert worker_count(5) == 5
        assert worker_count() == 3

    @pytest.mark.parametrize("raw", ["0", "two"])
    def test_bad_thread_env(self, monkeypatch, raw):
        monkeypatch.setenv(THREADS_ENV, raw)
        with pytest.raises(ConfigError):
            worker_count()

    def test_nonpositive_flag(self):
        with pytest.raises(ConfigError):
            worker_count(0)

    def test_log_level(self):
        setup_logging("warning")
        assert logging.getLogger().level == logging.WARNING
        with pytest.raises(ConfigError):
            setup_logging("chatty")
