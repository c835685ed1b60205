import pytest

from rydnept.config import PRESETS, RunConfig, load_preset, parse_config, serialize_config
from rydnept.exceptions import SchemaError
from rydnept.params import LadderParams
from rydnept.optics import empty_finesse, loaded_finesse


def test_empty_document_gives_defaults():
    cfg = parse_config("")
    assert cfg.digest() == RunConfig().digest()
    assert cfg.physics == LadderParams()
    assert cfg.physics.omega_p == 19.0 and cfg.physics.delta_mw == -200.0


def test_unknown_key_names_path_and_line():
    with pytest.raises(SchemaError) as info:
        parse_config("seed: 3\nphysics:\n  omega_q: 4.0\n")
    assert info.value.path == "physics.omega_q"
    assert info.value.line == 3
    assert "omega_q" in str(info.value)


def test_unknown_top_level_key():
    with pytest.raises(SchemaError) as info:
        parse_config("omega_q: 1\n")
    assert info.value.path == "omega_q"


def test_type_errors_are_schema_errors():
    with pytest.raises(SchemaError):
        parse_config("physics:\n  omega_p: fast\n")
    with pytest.raises(SchemaError):
        parse_config("mode: sideways\n")
    with pytest.raises(SchemaError):
        parse_config("physics:\n  gamma_e: -1\n")


def test_invalid_yaml_reports_line():
    with pytest.raises(SchemaError) as info:
        parse_config("physics:\n  omega_p: [1,\n")
    assert info.value.line is not None


@pytest.mark.parametrize("name", PRESETS)
def test_serialize_round_trip_is_idempotent(name):
    cfg = load_preset(name)
    text = serialize_config(cfg)
    again = parse_config(text)
    assert again.digest() == cfg.digest()
    assert serialize_config(again) == text


def test_finesse_calibration_in_config():
    cfg = parse_config("cavity:\n  finesse_empty: 85\n  finesse_loaded: 20\n")
    assert empty_finesse(cfg.cavity) == pytest.approx(85, rel=1e-3)
    assert loaded_finesse(cfg.cavity) == pytest.approx(20, rel=1e-3)
    with pytest.raises(SchemaError):
        parse_config("cavity:\n  finesse_empty: 85\n")


def test_sweep_total_time_form():
    cfg = parse_config("sweep:\n  start: -10\n  stop: 10\n  total_time: 100\n  n_points: 50\n")
    assert cfg.sweep.n_points == 50
    assert cfg.sweep.t_int * cfg.sweep.n_points == pytest.approx(100)


def test_preset_key_layers_overrides():
    cfg = parse_config("preset: bistable-demo\nseed: 9\n")
    assert cfg.seed == 9 and cfg.physics.V == -600.0


def test_unknown_preset():
    with pytest.raises(SchemaError):
        load_preset("nope")
