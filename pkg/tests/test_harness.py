import json

import numpy as np
import pytest
import yaml

from dgfflab import acceptance, cli
from dgfflab.domain import LatticeDomain
from dgfflab.errors import ConfigInvalid, IoError
from dgfflab.extremes import StatReport
from dgfflab.harness import export, import_record, load_config, run, validate
from dgfflab.harness.export import POINT_HEADER, read_csv
from dgfflab.potential import green_matrix

# N=4 on the unit square discretizes to the single vertex (2, 2)
MINIMAL = {
    "experiment": "sample",
    "domain": {"shapes": [{"kind": "rectangle", "params": [0, 1, 0, 1]}]},
    "N": [4],
    "replicas": 10,
}


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv("DGFFLAB_OUTPUT_DIR", str(tmp_path / "out"))
    return tmp_path / "out"


def write_cfg(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


# -- config ------------------------------------------------------------------


def test_unknown_experiment_names_field():
    with pytest.raises(ConfigInvalid) as exc:
        validate({**MINIMAL, "experiment": "bogus"})
    assert exc.value.path == "experiment"


@pytest.mark.parametrize(
    "patch, path",
    [
        ({"replicas": 0}, "replicas"),
        ({"N": [4, 1]}, "N[1]"),
        ({"params": {"radius": 2}}, "params.radius"),
        ({"params": {"lambdas": [0.5, 1.5]}}, "params.lambdas[1]"),
        ({"colour": "red"}, "colour"),
        ({"domain": {"shapes": [{"kind": "blob", "params": []}]}}, "domain"),
    ],
)
def test_invalid_fields(patch, path):
    with pytest.raises(ConfigInvalid) as exc:
        validate({**MINIMAL, **patch})
    assert exc.value.path == path


def test_domain_file(tmp_path):
    (tmp_path / "dom.yaml").write_text(yaml.safe_dump(MINIMAL["domain"]))
    cfg = {k: v for k, v in MINIMAL.items() if k != "domain"}
    assert validate({**cfg, "domain_file": "dom.yaml"}, tmp_path).domain == MINIMAL["domain"]
    with pytest.raises(ConfigInvalid) as exc:
        validate({**cfg, "domain_file": "missing.yaml"}, tmp_path)
    assert exc.value.path == "domain_file"


def test_hash_ignores_threads_and_output(tmp_path):
    a = validate(MINIMAL)
    b = validate({**MINIMAL, "threads": 4, "output_dir": str(tmp_path)})
    c = validate({**MINIMAL, "seed": 1})
    assert a.config_hash() == b.config_hash() != c.config_hash()


def test_seed_override(tmp_path):
    cfg = load_config(write_cfg(tmp_path, MINIMAL), seed=2**64 - 1, threads=3)
    assert cfg.seed == 2**64 - 1 and cfg.threads == 3


# -- run ---------------------------------------------------------------------


def test_minimal_run(outdir):
    rec = run(validate(MINIMAL))
    csvs = [f for f in rec.files if f.endswith(".csv")]
    meta, header, rows = read_csv(csvs[0])
    assert len(rows) == 10
    assert meta["config_hash"] == rec.config_hash and meta["seed"] == "0"
    assert all(f.startswith(str(outdir)) for f in rec.files)


def test_rerun_is_identical(outdir):
    cfg = validate({**MINIMAL, "N": [8], "seed": 5})
    a, b = run(cfg), run(cfg)
    assert a.config_hash == b.config_hash and a.statistics() == b.statistics()
    meta, _, rows = read_csv([f for f in a.files if f.endswith(".csv")][0])
    assert rows == read_csv([f for f in b.files if f.endswith(".csv")][0])[2]


@pytest.mark.parametrize("experiment", ["extrema", "kernels"])
def test_thread_count_independence(outdir, experiment):
    base = {**MINIMAL, "experiment": experiment, "N": [16], "replicas": 6}
    one = run(validate({**base, "threads": 1}))
    out1 = {f: open(f).read() for f in one.files if f.endswith(".csv")}
    four = run(validate({**base, "threads": 4}))
    assert one.statistics() == four.statistics()
    for f in four.files:
        if f.endswith(".csv"):
            assert open(f).read() == out1[f]


def test_extrema_csv_header(outdir):
    rec = run(validate({**MINIMAL, "experiment": "extrema", "N": [16], "replicas": 3}))
    path = [f for f in rec.files if "extrema" in f][0]
    _, header, rows = read_csv(path)
    assert tuple(header) == POINT_HEADER and len(rows) > 0
    with open(path, "rb") as fh:
        assert b"\r\n" not in fh.read()


def test_lqg_run(outdir):
    rec = run(
        validate({**MINIMAL, "experiment": "lqg", "t": [1.0], "replicas": 50, "params": {"grid_cells_per_side": 6}})
    )
    _, header, rows = read_csv([f for f in rec.files if f.endswith("_mean.csv")][0])
    assert header == ["cell_x", "cell_y", "mass"] and len(rows) > 0
    assert all(float(r.split(",")[2]) >= 0 for r in rows)


# -- export ------------------------------------------------------------------


def test_report_json_keys():
    d = json.loads(json.dumps(StatReport("a", {}, 1.0, 0.1, 1.0, True).to_dict()))
    assert set(d) == {"estimator", "params", "estimate", "stderr", "tolerance", "pass"}


@pytest.mark.parametrize("fmt, name", [("json", "record.json"), ("csv", "reports.csv")])
def test_round_trip(outdir, tmp_path, fmt, name):
    rec = run(validate({**MINIMAL, "N": [8]}))
    files = export(rec, fmt, tmp_path / "exp")
    assert files[0].name == name
    back = import_record(files[0])
    assert back.to_dict() == rec.to_dict()


def test_missing_record():
    with pytest.raises(IoError):
        import_record("/nonexistent/record.json")


# -- CLI ---------------------------------------------------------------------


def test_cli_run_and_export(outdir, tmp_path, capsys):
    cfg = write_cfg(tmp_path, MINIMAL)
    assert cli.main(["run", "--config", str(cfg), "--seed", "3"]) == 0
    out = capsys.readouterr().out
    record = [ln for ln in out.splitlines() if ln.endswith("record.json")][0]
    assert "seed=3" in out
    assert cli.main(["export", "--record", record, "--format", "csv", "--out", str(tmp_path / "e")]) == 0
    assert (tmp_path / "e" / "reports.csv").exists()


def test_cli_exit_codes(tmp_path, capsys):
    bad = write_cfg(tmp_path, {**MINIMAL, "experiment": "bogus"})
    assert cli.main(["run", "--config", str(bad), "--seed", "1"]) == 2
    assert "experiment" in capsys.readouterr().err
    assert cli.main(["export", "--record", str(tmp_path / "nope.json"), "--format", "json"]) == 3
    with pytest.raises(SystemExit):
        cli.main(["run", "--config", str(bad), "--seed", "-1"])


# -- negative control --------------------------------------------------------


def _off_by_one_green(L, mode="direct_solve"):
    """direct_solve on L grown by one layer, i.e. the walk is killed one step too late."""
    if mode != "direct_solve":
        return green_matrix(L, mode)
    V = {tuple(v) for v in L.vertices}
    grown = set(V)
    for x, y in V:
        grown.update({(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)})
    big = LatticeDomain.from_vertices(sorted(grown))
    idx = big.index_of(L.vertices)
    M = green_matrix(big, mode).matrix[np.ix_(idx, idx)]
    return type(green_matrix(L, mode))(L.vertices, M)


def test_corrupted_green_fails_crosscheck():
    reports = acceptance.check_green_crosscheck(green=_off_by_one_green)
    assert not all(r.passed for r in reports)
    assert all(r.passed for r in acceptance.check_green_crosscheck())


def test_verify_fast_flags_corruption(monkeypatch):
    import dgfflab.potential

    monkeypatch.setattr(dgfflab.potential, "green_matrix", _off_by_one_green)
    crit = acceptance.CRITERIA[0]
    ok, _ = acceptance.run_criterion(crit)
    assert not ok
