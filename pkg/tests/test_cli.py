import pytest

from artifact.cli import main

BUILDING = "[building]\nfloors = 8\ncars = 3\n"
TRAFFIC = "[traffic]\nrate_per_hour = 1200\nduration_s = 120\nseed = 5\n"


@pytest.fixture
def files(tmp_path):
    (tmp_path / "b.ini").write_text(BUILDING)
    (tmp_path / "t.ini").write_text(TRAFFIC)
    (tmp_path / "s.ini").write_text("[sweep]\nbuildings = 8x3\nrates = 1200\nseeds = 1000-1001\n"
                                    "duration_s = 120\n")
    return tmp_path


def test_simulate_writes_one_row(files, capsys):
    out = files / "row.csv"
    code = main(["simulate", "--building", str(files / "b.ini"), "--traffic", str(files / "t.ini"),
                 "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 2 and lines[0].startswith("building,")
    echo = capsys.readouterr().out
    assert '"alpha": 0.2' in echo and '"beta": 0.02' in echo and '"scheduler": "esa-dp-la"' in echo


def test_missing_building_file(files, capsys):
    code = main(["simulate", "--building", str(files / "nope.ini"), "--traffic", str(files / "t.ini")])
    assert code == 2
    assert "nope.ini" in capsys.readouterr().err


def test_bad_key_names_file_and_key(files, capsys):
    (files / "b.ini").write_text("[building]\nfloors = x\ncars = 3\n")
    assert main(["simulate", "--building", str(files / "b.ini"), "--traffic", str(files / "t.ini")]) == 2
    err = capsys.readouterr().err
    assert "b.ini" in err and "floors" in err


def test_unknown_flag_rejected(files):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--building", str(files / "b.ini"), "--traffic", str(files / "t.ini"), "--fast"])
    assert exc.value.code == 2


def test_sweep_then_plot(files):
    assert main(["sweep", "--config", str(files / "s.ini"), "--out", str(files / "run")]) == 0
    assert main(["plot", "--in", str(files / "run" / "sweep.csv"), "--kind", "vs-conventional",
                 "--out", str(files / "fig2.csv")]) == 0
    lines = (files / "fig2.csv").read_text().splitlines()
    assert lines[0].startswith("building,rate") and len(lines) == 2


def test_plot_empty_csv(files):
    from artifact.bench import CSV_COLUMNS
    (files / "empty.csv").write_text(",".join(CSV_COLUMNS) + "\n")
    assert main(["plot", "--in", str(files / "empty.csv"), "--kind", "beta-curve", "--out",
                 str(files / "b.csv")]) == 0
    assert len((files / "b.csv").read_text().splitlines()) == 1


def test_validate_exit_codes(files):
    assert main(["validate", "--gate", "analytic_j0", "--json", str(files / "r.json")]) == 0
    assert (files / "r.json").exists()
    assert main(["validate", "--gate", "closed_form", "--tol", "closed_form=0"]) == 1
