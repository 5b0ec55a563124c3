import csv
import math

import pytest

from narrowescape import cli, validation
from narrowescape.errors import UsageError


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[:2], list(csv.reader(lines[2:]))


def test_parse_net_ball():
    cfg = cli.parse_args(["asymptotics", "--formula", "net-ball", "--R", "1", "--a", "0.1", "--D", "1"])
    assert cfg.subcommand == "asymptotics"
    assert cfg.params["formula"] == "net-ball"
    assert (cfg.params["R"], cfg.params["a"], cfg.params["D"]) == (1.0, 0.1, 1.0)
    assert cfg.format_version == cli.FORMAT_VERSION


@pytest.mark.parametrize("argv,flag", [
    (["asymptotics", "--formula", "net-ball", "--a", "0.1", "--D", "1"], "--R"),
    (["asymptotics", "--R", "1"], "--formula"),
    (["helmholtz", "--a", "0.1"], "--kappa-sum"),
    (["escape-mc", "--domain", "ball:R=1"], "--window"),
    (["asymptotics", "--formula", "net-ball", "--R", "1", "--a", "-1", "--D", "1"], "--a"),
    (["patch-v0", "--kappa1", "1", "--kappa2", "x"], "--kappa2"),
    (["validate", "--seed", "-3"], "--seed"),
])
def test_usage_errors_name_the_flag(argv, flag):
    with pytest.raises(UsageError, match=flag):
        cli.parse_args(argv)


def test_positivity_message():
    with pytest.raises(UsageError, match="positive"):
        cli.parse_args(["asymptotics", "--formula", "net-ball", "--R", "1", "--a", "-1", "--D", "1"])


def test_config_file_and_override(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# ball run\nformula = net-ball\nR = 2\na = 0.1\nD = 3\n")
    cfg = cli.parse_args(["asymptotics", "--config", str(f), "--D", "1"])
    assert (cfg.params["R"], cfg.params["D"]) == (2.0, 1.0)
    f.write_text("formula = net-ball\nradius = 2\n")
    with pytest.raises(UsageError, match="--radius"):
        cli.parse_args(["asymptotics", "--config", str(f)])
    f.write_text("no equals sign\n")
    with pytest.raises(UsageError, match="key=value"):
        cli.parse_args(["asymptotics", "--config", str(f)])


def test_repeatable_flags_replace_file_values(tmp_path):
    f = tmp_path / "mc.cfg"
    f.write_text("domain = ball:R=1\nwindow = cap:center=0,0,1,a=0.1\nwindow = cap:center=0,0,-1,a=0.1\n")
    assert len(cli.parse_args(["escape-mc", "--config", str(f)]).params["window"]) == 2
    cfg = cli.parse_args(["escape-mc", "--config", str(f), "--window", "cap:center=1,0,0,a=0.1"])
    assert cfg.params["window"] == ["cap:center=1,0,0,a=0.1"]


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("NE_SEED", "42")
    assert cli.parse_args(["validate"]).seed == 42
    assert cli.parse_args(["validate", "--seed", "7"]).seed == 7
    monkeypatch.setenv("NE_SEED", "oops")
    with pytest.raises(UsageError, match="NE_SEED"):
        cli.parse_args(["validate"])


def test_window_and_start_grammar():
    from narrowescape import geometry
    from narrowescape.mcsim import engine
    B = geometry.ball(1.0)
    w = cli.parse_window(B, "cap:role=leak,center=0,0,1,a=0.05")
    assert w.radius == 0.05 and w.role == geometry.Role.LEAK
    assert w.center == pytest.approx((0, 0, 1))
    C = geometry.box(1, 1, 1)
    assert cli.parse_window(C, "face:role=target,face=-z").face == "-z"
    with pytest.raises(UsageError):
        cli.parse_window(B, "cap:center=0,0,1")
    with pytest.raises(UsageError):
        cli.parse_window(B, "cap:center=0,0,1,a=0.1,colour=red")
    with pytest.raises(UsageError):
        cli.parse_window(B, "disk:center=0,0,1,a=0.1")
    assert isinstance(cli.parse_start(B, "uniform"), engine.UniformVolume)
    assert cli.parse_start(B, "point:0,0.1,0").point == (0, 0.1, 0)
    assert cli.parse_start(C, "face:+z").region.face == "+z"
    with pytest.raises(UsageError):
        cli.parse_start(B, "corner")


def test_asymptotics_csv(tmp_path):
    out = tmp_path / "a.csv"
    code = cli.main(["asymptotics", "--formula", "net-ball", "--R", "1", "--a", "0.1", "--D", "1", "--output", str(out)])
    assert code == 0
    comments, rows = read_csv(out)
    assert comments[0].startswith(f"# {cli.FORMAT_VERSION} config_hash=")
    assert comments[1].startswith("# config {")
    header, row = rows
    rec = dict(zip(header, row))
    assert float(rec["value"]) == pytest.approx(11.2395, abs=5e-5)
    assert "e+01" in rec["value"] and len(rec["value"].split("e")[0]) == 19


def test_config_hash_tracks_parameters(tmp_path):
    a = cli.parse_args(["asymptotics", "--formula", "singular", "--distance", "0.01", "--kappa-sum", "2"])
    b = cli.parse_args(["asymptotics", "--formula", "singular", "--distance", "0.01", "--kappa-sum", "2"])
    c = cli.parse_args(["asymptotics", "--formula", "singular", "--distance", "0.02", "--kappa-sum", "2"])
    assert a.config_hash() == b.config_hash() != c.config_hash()


@pytest.mark.parametrize("argv", [
    ["asymptotics", "--formula", "net", "--volume", "1", "--a", "0.05", "--D", "1", "--kappa-sum", "2"],
    ["asymptotics", "--formula", "eigenvalue", "--volume", "1", "--a", "0.05", "--D", "1", "--kappa-sum", "2"],
    ["asymptotics", "--formula", "leak", "--a", "0.02", "--density", "0.5", "--D", "1"],
    ["asymptotics", "--formula", "leak-multi", "--leak", "a=0.01,p=0.25", "--leak", "a=0.01,p=0.75", "--D", "1"],
    ["patch-v0", "--kappa1", "1", "--kappa2", "0", "--offsets", "1e-4,1e-3,3e-3,1e-2"],
    ["ball-log-slope", "--R", "2"],
    ["helmholtz", "--a", "0.01", "--kappa-sum", "2"],
    ["escape-mc", "--domain", "ball:R=1", "--window", "cap:center=0,0,1,a=0.2", "--trajectories", "200", "--richardson"],
    ["survival-mc", "--domain", "ball:R=1", "--window", "cap:center=0,0,1,a=0.2", "--trajectories", "2000"],
    ["leakage-mc", "--domain", "box:1,1,1", "--window", "face:face=-z", "--window", "cap:role=leak,center=0,0.5,0.5,a=0.05",
     "--start", "face:+z", "--trajectories", "300", "--max-time", "50", "--richardson"],
], ids=lambda a: a[0] + ":" + a[2] if a[0] == "asymptotics" else a[0])
def test_subcommands_run(argv, tmp_path, capsys, quiet):
    out = tmp_path / "o.csv"
    assert cli.main(argv + ["--output", str(out)]) == 0
    _, rows = read_csv(out)
    assert len(rows) >= 2
    assert capsys.readouterr().out.strip()


def test_trajectory_csv_matches_library(tmp_path, quiet):
    from narrowescape import geometry
    from narrowescape.mcsim import engine
    out = tmp_path / "t.csv"
    cli.main(["escape-mc", "--domain", "ball:R=1", "--window", "cap:center=0,0,1,a=0.2", "--trajectories", "150",
              "--seed", "9", "--output", str(out)])
    _, rows = read_csv(out)
    B = geometry.ball(1.0)
    cfg = engine.SimConfig(B, [geometry.make_window(B, (0, 0, 1), 0.2)], trajectories=150, seed=9)
    s = engine.simulate(cfg)
    assert [float(r[2]) for r in rows[1:]] == list(s.times)


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["asymptotics", "--formula", "net-ball", "--R", "1", "--D", "1"]) == cli.EXIT_USAGE
    assert "--a" in capsys.readouterr().err
    assert cli.main(["escape-mc", "--domain", "sphere", "--window", "cap:center=0,0,1,a=0.1",
                     "--output", str(tmp_path / "x.csv")]) == cli.EXIT_USAGE
    code = cli.main(["helmholtz", "--a", "0.5", "--kappa-sum", "200", "--output", str(tmp_path / "h.csv")])
    assert code == cli.EXIT_NUMERICAL
    assert "RegimeError" in capsys.readouterr().err


@pytest.fixture(scope="module")
def quick_report():
    return validation.run_validation("quick", seed=5)


def test_validate_quick_is_deterministic(quick_report, tmp_path, capsys):
    out = tmp_path / "v.csv"
    code = cli.main(["validate", "--suite", "quick", "--seed", "5", "--tolerance", "0", "--output", str(out)])
    # zero tolerance must fail the statistical rows
    assert code == cli.EXIT_VALIDATION
    _, rows = read_csv(out)
    header = rows[0]
    recs = [dict(zip(header, r)) for r in rows[1:]]
    assert [r["experiment"] for r in recs] == [r.experiment for r in quick_report.rows]
    for rec, row in zip(recs, quick_report.rows):
        if math.isnan(row.computed):
            assert rec["computed"] == "nan"
        else:
            assert float(rec["computed"]) == row.computed
    failed_mc = [r for r in recs if r["experiment"].startswith(("mc-", "leak-")) and r["passed"] == "0"]
    assert failed_mc
    assert "rows passed" in capsys.readouterr().out


def test_report_rows_are_consistent(quick_report):
    for r in quick_report.rows:
        if r.kind == "relative":
            assert r.passed == (abs(r.relative_error) <= r.tolerance)
    zero = quick_report.with_tolerance(0.0)
    assert not zero.passed
    # checks that do not depend on sampling noise pass even in the quick suite
    names = {r.experiment: r for r in quick_report.rows}
    for key in ("disk-capacitance a=1 C=1", "ball-pde-residual", "net-scaling-covariance", "mc-determinism workers 1/4/16"):
        assert names[key].passed


def test_unknown_suite():
    with pytest.raises(ValueError):
        validation.run_validation("huge")
