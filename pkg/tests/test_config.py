import json

import pytest

from fockhankel.config import DEFAULT_TOLERANCES, ConfigError, load_config, parse_config, with_seed

BASE = {"seed": 7, "scenarios": [{"id": "a", "weight": "gaussian", "d": 1, "symbol": "z"}]}


def cfg(**over):
    doc = json.loads(json.dumps(BASE))
    doc["scenarios"][0].update(over)
    return json.dumps(doc)


def test_defaults_and_overrides():
    doc = dict(BASE, defaults={"N": 6, "p": [4]})
    doc["scenarios"] = [dict(BASE["scenarios"][0], N=9), {"id": "b", "weight": {"family": "power", "s": 2},
                                                          "d": 2, "m": 2, "symbol": "z1*z2"}]
    c = parse_config(json.dumps(doc))
    a, b = c.scenarios
    assert (a.N, b.N, a.p_list, c.seed) == (9, 6, (4.0,), 7)
    assert b.weight.name == "power-2" and b.symbol.m == 2
    assert a.tolerances == DEFAULT_TOLERANCES


def test_json_syntax_error_has_line_and_column():
    with pytest.raises(ConfigError, match=r"<string>:3:\d+"):
        parse_config('{\n "seed": 1,\n "scenarios": [,]\n}')


@pytest.mark.parametrize("over,path", [
    ({"d": 0}, r"scenarios\[0\]\.d"),
    ({"weight": "cosh"}, r"scenarios\[0\]\.weight"),
    ({"weight": {"family": "power", "s": 0.5}}, r"scenarios\[0\]\.weight"),
    ({"symbol": "z7"}, r"scenarios\[0\]\.symbol"),
    ({"grid": {"radii": [1, 2]}}, r"scenarios\[0\]\.grid\.radii"),
    ({"tolerances": {"nope": 1}}, r"scenarios\[0\]\.tolerances\.nope"),
    ({"p": [0.5]}, r"scenarios\[0\]\.p\[0\]"),
    ({"N": 2.5}, r"scenarios\[0\]\.N"),
    ({"colour": 1}, r"unknown field"),
])
def test_field_errors_name_the_path(over, path):
    with pytest.raises(ConfigError, match=path):
        parse_config(cfg(**over))


def test_duplicate_ids_and_top_level_keys():
    doc = dict(BASE, scenarios=BASE["scenarios"] * 2)
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(json.dumps(doc))
    with pytest.raises(ConfigError, match="top-level"):
        parse_config(json.dumps(dict(BASE, extra=1)))


def test_load_and_seed_override(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(cfg())
    c = load_config(p)
    assert with_seed(c, 99).seed == 99 and with_seed(c, None).seed == 7
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
