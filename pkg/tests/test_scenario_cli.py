import json
import re

import pytest

from qkdf.cli import EXIT_ALARM, EXIT_CONFIG, EXIT_OK, main
from qkdf.errors import ConfigError
from qkdf.scenario import BUNDLED, bundled, parse_scenario, run_scenario, with_overrides

SMALL = """
name = "small"
seed = 5
blocks = 4
nodes = ["a", "b"]

[channel]
loss_db = 1.0
intrinsic_qber = 0.005
dark_count_prob = 1e-6

[pipeline]
min_block_bits = 1024

[[links]]
a = "a"
b = "b"
{auth}
"""


def small(auth='auth_bits = 1048576'):
    return SMALL.format(auth=auth)


def test_bundled_scenarios_parse():
    for name in BUNDLED:
        assert bundled(name).name == name


@pytest.mark.parametrize(
    "bad, where",
    [
        ('name = "x"\nblocks = 1\nnodes = ["a", "b"]\nlinks = [{a = "a", b = "b", auth_bits = 10}]', "links[0].auth_bits"),
        ('name = "x"\nblocks = 1\nnodes = ["a", "b"]\nlinks = [{a = "a", b = "b"}]\n[channel]\nmu = -1', "channel.mu"),
        ('name = "x"\nnodes = ["a", "b"]\nlinks = [{a = "a", b = "b"}]', "<top level>"),
        ('name = "x"\nblocks = 1\nnodes = ["a", "b"]\nlinks = [{a = "a", b = "c"}]', "links[0].b"),
        ('name = "x"\nblocks = 1\nnodes = ["a", "b"]\nlinks = [{a = "a", b = "b", colour = 1}]', "links[0]"),
        ('name = "x"\nblocks = 1\nnodes = ["a", "b"]\nlinks = [{a = "a", b = "b"}]\n[pipeline]\nqber_threshold = 0.7', "pipeline.qber_threshold"),
    ],
)
def test_schema_errors_name_the_field(bad, where):
    with pytest.raises(ConfigError, match=re.escape(where)):
        parse_scenario(bad)


def test_toml_syntax_error():
    with pytest.raises(ConfigError):
        parse_scenario("name = ")


def test_auth_key_hex():
    sc = parse_scenario(small('auth_key = "' + "ab" * 64 + '"'))
    assert sc.links[0].auth_bits == 512 and sc.links[0].auth_key == bytes([0xAB]) * 64
    with pytest.raises(ConfigError, match="not both"):
        parse_scenario(small('auth_key = "' + "ab" * 64 + '"\nauth_bits = 4096'))
    with pytest.raises(ConfigError, match="auth_key"):
        parse_scenario(small('auth_key = "xyz"'))


def test_auth_key_drives_the_link():
    sc = parse_scenario(small('auth_key = "' + "5a" * 4096 + '"'))
    res = run_scenario(sc)
    assert res.rounds == 4 and res.stats


def test_overrides():
    sc = with_overrides(parse_scenario(small()), seed=9, defense="slutsky")
    assert sc.seed == 9 and sc.policy.defense.value == "slutsky"
    with pytest.raises(ConfigError):
        with_overrides(sc, seed=-1)


def test_same_seed_same_bytes(tmp_path):
    path = tmp_path / "s.toml"
    path.write_text(small())
    outs = []
    for d in ("one", "two"):
        assert main(["simulate", "--scenario", str(path), "--out", str(tmp_path / d)]) == EXIT_OK
        outs.append((tmp_path / d / "stats.jsonl").read_bytes())
    assert outs[0] == outs[1] and outs[0]
    main(["simulate", "--scenario", str(path), "--seed", "6", "--out", str(tmp_path / "three")])
    assert (tmp_path / "three" / "stats.jsonl").read_bytes() != outs[0]


def test_jobs_do_not_change_results(tmp_path):
    text = small().replace('nodes = ["a", "b"]', 'nodes = ["a", "b", "c"]') + '\n[[links]]\na = "b"\nb = "c"\nauth_bits = 1048576\n'
    path = tmp_path / "s.toml"
    path.write_text(text)
    main(["simulate", "--scenario", str(path), "--out", str(tmp_path / "j1")])
    main(["simulate", "--scenario", str(path), "--out", str(tmp_path / "j2"), "--jobs", "2"])
    assert (tmp_path / "j1" / "stats.jsonl").read_bytes() == (tmp_path / "j2" / "stats.jsonl").read_bytes()


def test_cli_config_error(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text('name = "x"\nblocks = 1\nnodes = ["a", "b"]\nlinks = [{a = "a", b = "b", auth_bits = 10}]')
    assert main(["simulate", "--scenario", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "links[0].auth_bits" in capsys.readouterr().err
    assert main(["simulate", "--scenario", str(tmp_path / "missing.toml")]) == EXIT_CONFIG
    assert main(["simulate", "--scenario", str(path), "--jobs", "0"]) == EXIT_CONFIG


def test_cli_alarm_exit(tmp_path):
    text = small() + '\n[links.eve]\nkind = "intercept_resend"\n'
    text = text.replace("intrinsic_qber = 0.005", "intrinsic_qber = 0.0").replace("auth_bits = 1048576", "auth_bits = 8388608")
    path = tmp_path / "eve.toml"
    path.write_text(text.replace("blocks = 4", "blocks = 2"))
    assert main(["simulate", "--scenario", str(path), "--out", str(tmp_path / "o")]) == EXIT_ALARM
    rows = [json.loads(x) for x in (tmp_path / "o" / "stats.jsonl").read_text().splitlines()]
    assert any(r["reason"] == "eavesdropping suspected" for r in rows)


def test_summary_and_outputs(tmp_path, capsys):
    path = tmp_path / "s.toml"
    path.write_text(small())
    main(["simulate", "--scenario", str(path), "--out", str(tmp_path / "o")])
    out = capsys.readouterr().out
    assert "scenario: small" in out and "final key rate" in out
    rows = [json.loads(x) for x in (tmp_path / "o" / "stats.jsonl").read_text().splitlines()]
    assert len(rows) == 4 and {"b", "e", "d", "resultant", "status"} <= rows[0].keys()


def test_report_partial_and_empty(tmp_path, capsys):
    path = tmp_path / "s.toml"
    path.write_text(small())
    main(["simulate", "--scenario", str(path), "--out", str(tmp_path / "o")])
    capsys.readouterr()
    stats = tmp_path / "o" / "stats.jsonl"
    good = stats.read_text()
    broken = tmp_path / "broken.jsonl"
    broken.write_text(good + '{"truncated": \n[1, 2]\n{"x": 1}\n')
    csv = tmp_path / "r.csv"
    assert main(["report", str(broken), str(tmp_path / "nope.jsonl"), "--csv", str(csv)]) == EXIT_OK
    cap = capsys.readouterr()
    assert "block records: 4" in cap.out and "partial" in cap.out
    assert cap.err.count("warning:") == 4
    assert len(csv.read_text().splitlines()) == 5
    assert main(["report"]) == EXIT_OK
    assert "block records: 0" in capsys.readouterr().out


def test_selftest_quick(capsys):
    assert main(["selftest", "--quick"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and "SKIP cascade_reconciles" in out


def test_bad_seed_argument():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--scenario", "baseline", "--seed", "-3"])
    assert exc.value.code == 2
