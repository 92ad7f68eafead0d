import csv
import filecmp
import json
import random

import pytest

from coevo_fjsp import cli
from coevo_fjsp.bench import (
    ExperimentReport,
    InstanceNotFound,
    SpecError,
    builtin_lb_registry,
    emit_outputs,
    load_spec,
    parse_spec,
    run_experiment,
    summarize,
)
from coevo_fjsp.instance import make_instance, serialize_fjs
from oracles import random_jobs


@pytest.fixture
def corpus(tmp_path):
    d = tmp_path / "instances"
    d.mkdir()
    rng = random.Random(0)
    for name in ("toyA", "toyB"):
        inst = make_instance(random_jobs(rng, 5, 3, 3), machine_count=3)
        (d / f"{name}.fjs").write_text(serialize_fjs(inst))
    (tmp_path / "lb.tsv").write_text("toyA\t5\n")
    return tmp_path


def write_spec(base, runs=10, extra=""):
    p = base / "exp.spec"
    p.write_text(
        "# test experiment\n"
        "instances = toyA\n"
        "instance_dir = instances\n"
        "lb_registry = lb.tsv\n"
        f"runs = {runs}\n"
        "seed = 3\n"
        "generator = random\n"
        "pop_size = 10\n"
        "max_iters = 6\n" + extra
    )
    return p


def test_summary_arithmetic():
    s = summarize("MK01", 36, [40, 41, 40])
    assert s.bm == 40
    assert round(s.am, 2) == 40.33
    assert round(s.rpd_bm, 2) == 11.11
    assert s.rpd_am == pytest.approx((121 / 3 - 36) / 36 * 100)
    single = summarize("x", None, [7])
    assert single.bm == single.am == 7 and single.rpd_bm is None


def test_rpd_aver_is_mean():
    rep = ExperimentReport([summarize("a", 10, [11, 12]), summarize("b", 20, [20, 20]), summarize("c", None, [3])], [])
    assert rep.rpd_aver == pytest.approx((15.0 + 0.0) / 2, abs=1e-9)
    assert rep.rpd_bm_aver == pytest.approx(5.0, abs=1e-9)


def test_builtin_registry():
    reg = builtin_lb_registry()
    assert reg["MK01"] == 36 and reg["MK03"] == 204 and reg["MK08"] == 523
    assert reg["MFJS01"] == 396 and len(reg) == 20


def test_file_counts_and_columns(corpus):
    spec = load_spec(write_spec(corpus))
    report = run_experiment(spec)
    out = corpus / "out"
    emit_outputs(report, out, spec.emit)
    assert len(list((out / "curves").iterdir())) == 10
    assert len(list((out / "operators").iterdir())) == 10
    assert sorted(p.name for p in out.glob("*.csv")) == ["results.csv", "summary.csv"]
    rows = list(csv.reader((out / "summary.csv").open()))
    assert rows[0] == ["instance", "LB", "BM", "AM", "RPD_BM", "RPD_AM"]
    assert all(len(r) == len(rows[0]) for r in rows)
    results = list(csv.DictReader((out / "results.csv").open()))
    assert [int(r["seed"]) for r in results] == list(range(3, 13))
    makespans = [int(r["makespan"]) for r in results]
    s = report.summaries[0]
    assert s.lb == 5 and s.bm == min(makespans) and s.bm <= s.am <= max(makespans)
    curve = list(csv.reader((out / "curves" / "toyA_0.csv").open()))
    assert curve[0] == ["iteration", "best_makespan"] and curve[1][0] == "0"
    doc = json.loads((out / "operators" / "toyA_0.json").read_text())
    assert "operator_log" in doc


def test_byte_identical_reruns(corpus):
    spec_path = write_spec(corpus, runs=3, extra="emit = table, curves, operators, schedules\n")
    a, b = corpus / "a", corpus / "b"
    assert cli.main(["bench", "--spec", str(spec_path), "--out", str(a)]) == 0
    assert cli.main(["bench", "--spec", str(spec_path), "--out", str(b), "--workers", "2"]) == 0
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert len(files) == 2 + 3 * 3
    for rel in files:
        assert filecmp.cmp(a / rel, b / rel, shallow=False), rel


def test_timing_column(corpus):
    spec = load_spec(write_spec(corpus, runs=1, extra="timing = true\n"))
    emit_outputs(run_experiment(spec), corpus / "t", spec.emit)
    row = list(csv.DictReader((corpus / "t" / "results.csv").open()))[0]
    assert float(row["wall_time"]) >= 0


def test_missing_instance(corpus):
    spec = parse_spec("instances = nothere\nruns = 1\n", base_dir=corpus)
    with pytest.raises(InstanceNotFound):
        run_experiment(spec)


@pytest.mark.parametrize(
    "text",
    [
        "runs = 2\n",
        "instances = a\nruns = 0\n",
        "instances = a\nbogus = 1\n",
        "instances = a\npop_size = many\n",
        "instances = a\nemit = pictures\n",
        "instances = a\np_crossover = 2\n",
        "instances = a\njust text\n",
    ],
)
def test_bad_specs(text):
    with pytest.raises(SpecError if "p_crossover" not in text else ValueError):
        parse_spec(text)


def test_spec_overrides_typed():
    spec = parse_spec("instances = a, b\nepsilon = 0.1\nlocal_search = false\nmax_iters = 9\n")
    cfg = spec.engine_config(4)
    assert spec.instances == ["a", "b"]
    assert cfg.epsilon == 0.1 and cfg.local_search is False and cfg.max_iters == 9 and cfg.seed == 4


def test_cli_solve_validate(corpus, capsys):
    inst = corpus / "instances" / "toyA.fjs"
    assert cli.main(["validate", "--instance", str(inst)]) == 0
    dump = corpus / "s.json"
    code = cli.main(["solve", "--instance", str(inst), "--pop", "10", "--iters", "3", "--generator", "spt", "--dump-schedule", str(dump)])
    assert code == 0
    doc = json.loads(dump.read_text())
    assert doc["makespan"] == max(o["finish"] for o in doc["ops"])
    assert "makespan" in capsys.readouterr().out


def test_cli_exit_codes(corpus, monkeypatch):
    bad = corpus / "bad.fjs"
    bad.write_text("1 1\n1 1 1 0\n")
    assert cli.main(["validate", "--instance", str(bad)]) == 2
    assert cli.main(["validate", "--instance", str(corpus / "missing.fjs")]) == 2
    assert cli.main(["solve", "--instance", str(corpus / "instances" / "toyA.fjs"), "--pop", "0"]) == 2
    monkeypatch.setenv("GENERATOR_URL", "http://127.0.0.1:9/")
    code = cli.main(["solve", "--instance", str(corpus / "instances" / "toyA.fjs"), "--generator", "remote", "--iters", "1"])
    assert code == 3
    with pytest.raises(SystemExit) as info:
        cli.main(["solve"])
    assert info.value.code == 2
