import re

import numpy as np
import pytest

from quasitau.config import SUITE_NAMES, default_config, load_config, parse_config
from quasitau.errors import ConfigError

FULL = """\
dimension: 2
measure:
  weight: jacobi
  alpha: [0.5, 1.0]
  beta: 0.5
quadrature_order: 48
levels: 4
flow:
  offsets: [-3, -2.5]
  times: [[0.1, 0.0]]
suites: [lax, cd]
seed: 7
"""


def test_full_config_round_trip():
    cfg = parse_config(FULL)
    assert cfg.dimension == 2
    assert cfg.spec.kind == "jacobi" and cfg.spec.alpha == (0.5, 1.0) and cfg.spec.beta == (0.5, 0.5)
    assert cfg.quadrature_order == 48 and cfg.levels == 4 and cfg.seed == 7
    assert cfg.suites == ("lax", "cd")
    assert np.array_equal(cfg.state.offsets, [-3.0, -2.5])
    assert np.array_equal(cfg.state.times[0], [0.1, 0.0])


def test_defaults():
    cfg = default_config(3)
    assert cfg.dimension == 3 and cfg.levels == 5 and cfg.buffer == 3
    assert cfg.suites == SUITE_NAMES
    assert cfg.spec.lower == (-1.0,) * 3


def test_zero_offset_names_file_line_and_field():
    text = "dimension: 2\nflow:\n  offsets:\n    - 0\n    - -3\n"
    with pytest.raises(ConfigError, match=r"^run\.yaml:4: field 'flow\.offsets\[0\]'"):
        parse_config(text, "run.yaml")


@pytest.mark.parametrize("text, field", [
    ("dimension: 2\ncolour: red\n", "colour"),
    ("dimension: 2\nlevels: 1\n", "levels"),
    ("dimension: 4\n", "dimension"),
    ("levels: 3\n", "dimension"),
    ("dimension: 2\nsuites: [lax, nope]\n", "suites"),
    ("dimension: 2\nseed: -1\n", "seed"),
    ("dimension: 2\nseed: 18446744073709551616\n", "seed"),
    ("dimension: 2\nmeasure:\n  weight: gauss\n", "measure.weight"),
    ("dimension: 2\nmeasure:\n  lower: [0, 1]\n  upper: [1, 1]\n", "measure.upper"),
    ("dimension: 2\nflow:\n  directions: [[1, 0], [2, 0]]\n", "flow.directions"),
    ("dimension: 2\nflow:\n  times: [[0.1]]\n", "flow.times[0]"),
    ("dimension: 2\ntolerance_scale: 0\n", "tolerance_scale"),
])
def test_invalid_fields_are_named(text, field):
    with pytest.raises(ConfigError, match=re.escape(f"field '{field}'")):
        parse_config(text, "c.yaml")


def test_largest_seed_is_accepted():
    assert parse_config(f"dimension: 1\nseed: {2 ** 64 - 1}\n").seed == 2 ** 64 - 1


def test_invalid_yaml_reports_position():
    with pytest.raises(ConfigError, match=r"c\.yaml:2: invalid YAML"):
        parse_config("dimension: 2\nlevels: 3: 4\n", "c.yaml")


def test_overrides():
    cfg = default_config(2).with_overrides(levels=3, quadrature_order=20, seed=5, suites="cd,lax")
    assert (cfg.levels, cfg.quadrature_order, cfg.seed, cfg.suites) == (3, 20, 5, ("cd", "lax"))
    with pytest.raises(ConfigError):
        default_config(2).with_overrides(levels=1)
    with pytest.raises(ConfigError):
        default_config(2).with_overrides(suites="bogus")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.yaml")
