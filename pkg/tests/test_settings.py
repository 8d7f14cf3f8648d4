import pytest

from sde_perturbation.config.defaults import ENV_OUTPUT_DIR
from sde_perturbation.config.settings import (load_config, parse_field_spec, resolve_output_dir,
                                              save_config)
from sde_perturbation.core.exceptions import ConfigError
from sde_perturbation.utils.versioning import is_supported_format

RATE_CONFIG = """
    [run]
    experiment = vdp-rate
    master_seed = 4242
    samples = 2000
    workers = 2
    batch_size = 200
    output_dir = out/rate

    [model]
    alpha = 1.5
    xi = 0.5, -0.5

    [grid]
    levels = 32, 64, 128
    reference_steps = 1024

    [checks]
    slope_low = -1.25
    slope_high = -0.35
"""


def test_load_typed_values(write_config):
    config = load_config(write_config(RATE_CONFIG))
    assert config.experiment == "vdp-rate"
    assert config.master_seed == 4242
    assert config.samples == 2000 and config.workers == 2 and config.batch_size == 200
    assert config.permanent_delete is False
    assert config.get_int_list('grid', 'levels') == [32, 64, 128]
    assert config.get_float('checks', 'slope_low') == -1.25
    values = config.vdp_values()
    assert values['alpha'] == 1.5 and values['beta'] == 1.0
    assert values['xi'] == (0.5, -0.5)
    assert values['horizon'] == 1.0


def test_getters_report_missing_and_malformed_keys(write_config):
    config = load_config(write_config(RATE_CONFIG))
    with pytest.raises(ConfigError):
        config.get_str('model', 'drift')
    assert config.get_str('model', 'drift', 'vdp') == 'vdp'
    config.model['gamma'] = 'fast'
    with pytest.raises(ConfigError):
        config.get_float('model', 'gamma')
    config.model['tamed'] = 'maybe'
    with pytest.raises(ConfigError):
        config.get_bool('model', 'tamed')


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.ini"))


@pytest.mark.parametrize("old, new", [
    ("master_seed = 4242\n", ""),
    ("experiment = vdp-rate", "experiment = vdp-speed"),
    ("reference_steps = 1024", "reference_steps = 1000"),
    ("reference_steps = 1024", "reference_steps = 512"),
    ("master_seed = 4242", "master_seed = -1"),
    ("master_seed = 4242", "master_seed = many"),
    ("workers = 2", "workers = 0"),
    ("[checks]", "[extras]"),
])
def test_invalid_documents(write_config, old, new):
    text = "\n".join(line.strip() for line in RATE_CONFIG.splitlines())
    assert old.strip() in text
    with pytest.raises(ConfigError):
        load_config(write_config(text.replace(old.strip(), new.strip())))


def test_format_version(write_config):
    text = RATE_CONFIG.replace("output_dir = out/rate", "output_dir = out/rate\n    format_version = {}")
    assert load_config(write_config(text.format("1.3"))).format_version == "1.3"
    with pytest.raises(ConfigError):
        load_config(write_config(text.format("2.0")))
    assert is_supported_format("1.0")
    assert not is_supported_format("not-a-version")


def test_weak_check_needs_samples(write_config):
    text = """
        [run]
        experiment = iag-weak
        master_seed = 1
        samples = 50

        [grid]
        fine_steps = 64
        outer_steps = 16
    """
    with pytest.raises(ConfigError):
        load_config(write_config(text))
    config = load_config(write_config(text.replace("samples = 50", "samples = 100")))
    assert config.samples == 100
    with pytest.raises(ConfigError):
        load_config(write_config(text.replace("samples = 50", "samples = 100")
                                 .replace("outer_steps = 16", "outer_steps = 24")))


def test_pathwise_scheme_must_divide_levels(write_config):
    text = """
        [run]
        experiment = iag-pathwise
        master_seed = 1
        samples = 10

        [grid]
        fine_steps = 512
        outer_levels = 8, 16
        scheme_steps = {}
    """
    assert load_config(write_config(text.format(4))).get_int('grid', 'scheme_steps') == 4
    with pytest.raises(ConfigError):
        load_config(write_config(text.format(3)))


def test_save_round_trip(write_config, tmp_path):
    config = load_config(write_config(RATE_CONFIG))
    echo = tmp_path / "echo.ini"
    save_config(config, str(echo))
    again = load_config(str(echo))
    assert again.as_dict() == config.as_dict()


def test_output_directory_precedence(write_config, monkeypatch, tmp_path):
    config = load_config(write_config(RATE_CONFIG))
    monkeypatch.delenv(ENV_OUTPUT_DIR, raising=False)
    assert resolve_output_dir(config) == "out/rate"
    monkeypatch.setenv(ENV_OUTPUT_DIR, str(tmp_path / "env"))
    assert resolve_output_dir(config) == str(tmp_path / "env")
    assert resolve_output_dir(config, "cli") == "cli"


@pytest.mark.parametrize("text, expected", [
    ("vdp", ("vdp", [])),
    ("linear: -1", ("linear", [-1.0])),
    ("Polynomial: 0, 0, 0, -1", ("polynomial", [0.0, 0.0, 0.0, -1.0])),
])
def test_field_specs(text, expected):
    assert parse_field_spec(text) == expected


@pytest.mark.parametrize("text", ["quadratic: 1", "linear", "linear: 1, 2", "polynomial", "linear: x"])
def test_bad_field_specs(text):
    with pytest.raises(ConfigError):
        parse_field_spec(text)
