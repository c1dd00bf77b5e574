import pytest

from fluorostab.config import ConfigError, PipelineConfig, format_kv, parse_kv


def test_defaults():
    cfg = PipelineConfig().validate()
    assert (cfg.rank, cfg.window, cfg.rho, cfg.bernoulli_p, cfg.temporal_radius) == (1, 30, 0.02, 0.3, 2)
    assert cfg.variances == (0.001, 0.003, 0.005)
    assert cfg.lam is None


def test_parse_comments_and_override():
    values = parse_kv("# header\nrank = 2  # inline\n\nrank = 3\nkernel-radius = 1\n")
    assert values == {"rank": "3", "kernel_radius": "1"}


def test_parse_rejects_garbage():
    with pytest.raises(ConfigError, match="line 1"):
        parse_kv("no equals sign here")


def test_from_mapping_coerces_types():
    cfg = PipelineConfig.from_mapping({"lambda": "0.05", "student": "false", "seeds": "0, 1, 4",
                                       "variances": "0.002 0.004", "rank": "2", "noise_var": "none"})
    assert cfg.lam == 0.05 and cfg.student is False and cfg.seeds == (0, 1, 4)
    assert cfg.variances == (0.002, 0.004) and cfg.rank == 2 and cfg.noise_var is None


def test_lambda_auto():
    assert PipelineConfig.from_mapping({"lambda": "auto"}).lam is None


@pytest.mark.parametrize("values", [{"mode": "bogus"}, {"window": "1"}, {"rho": "0"}, {"bernoulli_p": "1"},
                                    {"rank": "40"}, {"bit_depth": "12"}, {"canvas_scale": "0.5"}])
def test_validation_errors(values):
    with pytest.raises(ConfigError):
        PipelineConfig.from_mapping(values).validate()


def test_unknown_key_and_bad_value():
    with pytest.raises(ConfigError, match="unknown"):
        PipelineConfig.from_mapping({"colour": "red"})
    with pytest.raises(ConfigError, match="bad value"):
        PipelineConfig.from_mapping({"rank": "two"})


def test_updated_ignores_none():
    cfg = PipelineConfig().updated(rank=None, rho=0.05)
    assert cfg.rank == 1 and cfg.rho == 0.05


def test_format_round_trip():
    values = {"rank": "2", "mode": "no-stabilize"}
    assert parse_kv(format_kv(values)) == values
