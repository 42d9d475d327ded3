import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sllnlab.config import (
    BOOL, INT, INTS, REAL, REALS, STR, STRS, ConfigError, Key, Schema, manifest_bytes, parse_override, parse_value,
    resolve,
)

SCHEMA = Schema({
    "generator": {"kind": Key(STR, "gauss", ("gauss", "sas")), "alpha": Key(REAL, 1.5), "hurst": Key(REALS, [0.8])},
    "run": {"seed": Key(INT, 0), "fast": Key(BOOL, False)},
    "check.*": {"phi": Key(STRS, ["power(1)"]), "n_max": Key(INT, 4), "a": Key(INTS, None)},
})


def test_parse_values():
    assert parse_value(INT, " 0x10 ") == 16
    assert parse_value(REAL, "1e-3") == 1e-3
    assert parse_value(BOOL, "Yes") is True
    assert parse_value(REALS, "0.8, 0.7") == [0.8, 0.7]
    assert parse_value(STRS, "power_log(0.8, 1.2), power(1)") == ["power_log(0.8, 1.2)", "power(1)"]
    with pytest.raises(ValueError):
        parse_value(REAL, "nan")
    with pytest.raises(ValueError):
        parse_value(INTS, " , ")


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=5))
def test_reals_roundtrip(xs):
    assert parse_value(REALS, ", ".join(repr(x) for x in xs)) == xs


def test_defaults_filled():
    cfg = resolve("x", SCHEMA, "[generator]\nkind = sas\n")
    assert cfg.section("generator") == {"alpha": 1.5, "hurst": [0.8], "kind": "sas"}
    assert cfg.section("run") == {"fast": False, "seed": 0}
    assert cfg.sections_like("check") == []


def test_repeatable_sections():
    cfg = resolve("x", SCHEMA, "[check.a]\nn_max = 6\n[check.b]\nphi = power(2)\n")
    assert cfg.sections_like("check") == ["check.a", "check.b"]
    assert cfg.section("check.a")["n_max"] == 6 and cfg.section("check.b")["n_max"] == 4


def test_keys_case_insensitive():
    assert resolve("x", SCHEMA, "[generator]\nHurst = 0.7\n").section("generator")["hurst"] == [0.7]


@pytest.mark.parametrize(
    "text,match",
    [
        ("[generator]\nkind = gauss\nalpha = abc\n", r"cfg.ini:3: \[generator\] alpha: expected a real number"),
        ("[generator]\nkind = cauchy\n", r"cfg.ini:2: \[generator\] kind: 'cauchy' not one of"),
        ("[generator]\nbeta = 1\n", r"cfg.ini:2: \[generator\] beta: unknown key"),
        ("[solver]\nx = 1\n", r"cfg.ini:1: \[solver\]: unknown section"),
        ("alpha = 1\n", r"cfg.ini:1: key outside any \[section\]"),
        ("[run]\nseed = 1\nseed = 2\n", r"cfg.ini:3: \[run\] seed given twice"),
        ("[run]\n[run]\n", r"duplicate section \[run\]"),
    ],
)
def test_diagnostics_name_line_and_key(text, match):
    with pytest.raises(ConfigError, match=match):
        resolve("x", SCHEMA, text, source="cfg.ini")


def test_overrides():
    cfg = resolve("x", SCHEMA, "[generator]\nalpha = 1.2\n", ["generator.alpha=1.8", "check.z.n_max=9"])
    assert cfg.section("generator")["alpha"] == 1.8
    assert cfg.section("check.z")["n_max"] == 9
    with pytest.raises(ConfigError, match=r"--set run.seed: expected an integer"):
        resolve("x", SCHEMA, "", ["run.seed=x"])
    with pytest.raises(ConfigError):
        parse_override("seed=1")
    with pytest.raises(ConfigError):
        parse_override("run.seed")
    assert parse_override(" run.Seed = 4 ") == ("run", "seed", "4")


def test_manifest_is_pure_function_of_inputs():
    text = "[generator]\nkind = sas\n# comment\n[run]\nseed = 3\n"
    a = manifest_bytes(resolve("x", SCHEMA, text, ["run.fast=true"], "f.ini").manifest())
    b = manifest_bytes(resolve("x", SCHEMA, text, ["run.fast=true"], "f.ini").manifest())
    assert a == b and a.endswith(b"\n")
    m = json.loads(a)
    assert m["config"]["run"] == {"fast": True, "seed": 3}
    assert m["overrides"] == ["run.fast=true"] and m["config_file"] == "f.ini"
    # key order in the file does not matter
    c = manifest_bytes(resolve("x", SCHEMA, "[run]\nseed = 3\n[generator]\nkind = sas\n", ["run.fast=true"], "f.ini").manifest())
    assert c == a
