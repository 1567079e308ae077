import pytest

from config.config import resolve_seed
from config.presets import (
    get_available_presets,
    get_preset_summary,
    load_config_file,
    load_preset,
    merge_settings,
    normalize_key,
)
from helpers.errors import BadConfigError, InvalidParameterError


@pytest.mark.parametrize("key", ["grid-min", "GRID_MIN", "--grid-min", " grid_min "])
def test_normalize_key(key):
    assert normalize_key(key) == "grid_min"


def test_shipped_presets():
    presets = get_available_presets()
    assert {"eo-baseline", "eo-bid", "eo-lambda", "patient", "uc-capacity", "uc-lambda"} <= set(presets)


def test_load_preset():
    values = load_preset("eo-baseline")
    assert values["lambda"] == "1.2"
    assert values["cost"] == "0.3"


def test_unknown_preset():
    with pytest.raises(InvalidParameterError):
        load_preset("no-such-figure")


def test_preset_summary():
    summary = get_preset_summary()
    assert "patient" in summary
    assert "Patient users" in summary


def test_config_file(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("# sweep\nLAMBDA=2.0\ngrid-step=0.01\n", encoding="utf-8")
    assert load_config_file(str(path)) == {"lambda": "2.0", "grid_step": "0.01"}


def test_missing_config_file(tmp_path):
    with pytest.raises(BadConfigError):
        load_config_file(str(tmp_path / "missing.env"))


def test_key_without_value(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("lambda\n", encoding="utf-8")
    with pytest.raises(BadConfigError):
        load_config_file(str(path))


def test_merge_precedence(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("lambda=2.0\ncost=0.1\n", encoding="utf-8")
    merged = merge_settings("eo-baseline", str(path), {"cost": 0.2, "eta": None})
    assert merged["lambda"] == "2.0"
    assert merged["cost"] == 0.2
    assert merged["eta"] == "0"
    assert merged["capacity"] == "1.0"


def test_merge_nothing():
    assert merge_settings() == {}


class TestResolveSeed:
    def test_flag_wins(self, monkeypatch):
        monkeypatch.setenv("SEED", "5")
        assert resolve_seed(11) == 11

    def test_environment(self, monkeypatch):
        monkeypatch.setenv("SEED", "5")
        assert resolve_seed() == 5

    def test_default(self, monkeypatch):
        monkeypatch.delenv("SEED", raising=False)
        assert resolve_seed() == 0

    @pytest.mark.parametrize("raw", ["abc", "-3", "1.5"])
    def test_bad_environment(self, monkeypatch, raw):
        monkeypatch.setenv("SEED", raw)
        with pytest.raises(InvalidParameterError):
            resolve_seed()
