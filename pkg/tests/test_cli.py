import csv
import json

import pytest

from shopmission.cli import load_config, main

WINDOW_ARGS = [
    "--window-start", "2025-01-01",
    "--window-end", "2025-03-31",
]


def dataset_args(data_dir):
    return [
        "--receipts", str(data_dir / "receipts.csv"),
        "--categories", str(data_dir / "categories.csv"),
        *WINDOW_ARGS,
    ]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_data")
    assert main([
        "syngen", "--out", str(out), "--seed", "5", "--customers", "200",
        "--baskets-min", "12", "--baskets-max", "20",
    ]) == 0
    return out


def write_truth_assignments(data_dir, path):
    with open(data_dir / "ground_truth_customers.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["entity_id", "cluster"])
        for row in rows:
            writer.writerow([row["customer_id"], row["mission"]])


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sm", "--definitely-not-a-flag"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_missing_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_ingest_summary_on_stdout(data_dir, capsys):
    assert main(["ingest", *dataset_args(data_dir)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["n_customers"] == 200
    assert summary["dropped_outside_window"] == 0


def test_missing_file_exits_1(tmp_path, capsys):
    rc = main([
        "ingest",
        "--receipts", str(tmp_path / "nope.csv"),
        "--categories", str(tmp_path / "nope2.csv"),
        *WINDOW_ARGS,
    ])
    assert rc == 1
    assert "error" in capsys.readouterr().err


def test_sm_command_writes_reports_and_manifest(data_dir, tmp_path):
    out = tmp_path / "sm"
    rc = main([
        "sm", *dataset_args(data_dir),
        "--k-b", "6", "--k-sm", "9", "--seed", "42", "--out", str(out),
    ])
    assert rc == 0
    for name in (
        "sm_baskets_assignments.csv",
        "sm_customers_assignments.csv",
        "sm_customers_shares.csv",
        "sm_model.json",
        "manifest.json",
    ):
        assert (out / name).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "sm"
    assert manifest["seed"] == 42
    assert len(manifest["inputs"]) == 2


def test_compare_identical_clusterings_unit_diagonal(data_dir, tmp_path, capsys):
    truth_csv = tmp_path / "truth.csv"
    write_truth_assignments(data_dir, truth_csv)
    out = tmp_path / "cmp"
    rc = main([
        "compare",
        "--assignments", str(truth_csv),
        "--assignments", str(truth_csv),
        "--out", str(out),
    ])
    assert rc == 0
    with open(out / "purity_matrix.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert float(rows[1][1]) == 1.0
    assert float(rows[2][2]) == 1.0


def test_select_k_command(data_dir, tmp_path):
    out = tmp_path / "sweep"
    rc = main([
        "select-k", *dataset_args(data_dir),
        "--target", "basket", "--k-min", "4", "--k-max", "8",
        "--seed", "0", "--out", str(out),
    ])
    assert rc == 0
    rec = json.loads((out / "k_recommendation.json").read_text())
    assert rec["recommended_k"] == 6
    assert (out / "k_sweep.csv").exists()


def test_rfm_expert_mode_via_cli(data_dir, tmp_path):
    bounds = tmp_path / "bounds.json"
    bounds.write_text(json.dumps({"recency_days": [30], "frequency": [0.1]}))
    out = tmp_path / "rfm"
    rc = main([
        "rfm", *dataset_args(data_dir),
        "--mode", "expert", "--bounds-file", str(bounds), "--out", str(out),
    ])
    assert rc == 0
    shares = (out / "rfm_shares.csv").read_text().splitlines()[1:]
    total = sum(float(line.split(",")[-1]) for line in shares)
    assert total == pytest.approx(1.0, abs=1e-9)


def test_score_command_round_trip(data_dir, tmp_path):
    sm_out = tmp_path / "sm"
    assert main([
        "sm", *dataset_args(data_dir),
        "--k-b", "6", "--k-sm", "9", "--seed", "42", "--out", str(sm_out),
    ]) == 0
    score_out = tmp_path / "scored"
    rc = main([
        "score", *dataset_args(data_dir),
        "--model", str(sm_out / "sm_model.json"), "--out", str(score_out),
    ])
    assert rc == 0
    scored = (score_out / "scored_assignments.csv").read_text()
    trained = (sm_out / "sm_customers_assignments.csv").read_text()
    assert scored.splitlines()[1:] == trained.splitlines()[1:]


def test_report_command_emits_crosstab(data_dir, tmp_path):
    truth_csv = tmp_path / "truth.csv"
    write_truth_assignments(data_dir, truth_csv)
    out = tmp_path / "report"
    rc = main([
        "report",
        "--assignments", str(truth_csv),
        "--assignments", str(truth_csv),
        "--out", str(out),
    ])
    assert rc == 0
    payload = json.loads((out / "crosstab.json").read_text())
    values = payload["values"]
    for i, row in enumerate(values):
        assert sum(row) == pytest.approx(1.0, abs=1e-9)
        assert row[i] == 1.0


def test_report_requires_exactly_two_assignment_files(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["report", "--assignments", "one.csv", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_config_file_parsing_and_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# defaults\n"
        "tol = 1e-8\n"
        "n_init = 4\n"
        "dominance_threshold = 0.4\n"
        "standardize_rfm = off\n"
    )
    parsed = load_config(cfg)
    assert parsed == {
        "tol": 1e-8,
        "n_init": 4,
        "dominance_threshold": 0.4,
        "standardize_rfm": False,
    }
    bad = tmp_path / "bad.cfg"
    bad.write_text("mystery_knob = 3\n")
    with pytest.raises(ValueError, match="unknown key"):
        load_config(bad)
