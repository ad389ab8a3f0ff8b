from pathlib import Path

import pytest

from duobft.harness.cli import int_range, main

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def test_int_range():
    assert int_range("1..4") == [1, 2, 3, 4]
    assert int_range("1..2,6") == [1, 2, 6]


def test_matrix_duobft(capsys):
    assert main(["matrix", "--f", "1..3"]) == 0
    rows = [line.split() for line in capsys.readouterr().out.splitlines()[1:]]
    assert rows == [["4", "1", "2", "3", "3", "2"], ["7", "2", "3", "5", "5", "3"],
                    ["10", "3", "4", "7", "7", "4"]]


def test_matrix_flags_unattainable(capsys):
    assert main(["matrix", "--protocol", "flex_minbft", "--f", "2", "--n", "4..5"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert "unattainable" in out[1] and out[2].split() == ["5", "2", "3", "-", "3", "3"]


def test_run_then_check(tmp_path, capsys):
    trace = tmp_path / "ff.jsonl"
    assert main(["run", str(SCENARIOS / "fault_free.yaml"), "--seed", "1",
                 "--trace", str(trace)]) == 0
    out = capsys.readouterr().out
    assert "PASS safety[HYBRID]" in out and "throughput=" in out
    assert main(["check", str(trace)]) == 0
    assert capsys.readouterr().out.count("PASS") == 3


def test_run_writes_to_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("DUOBFT_OUT", str(tmp_path))
    assert main(["run", str(SCENARIOS / "fault_free.yaml"), "--seed", "2"]) == 0
    assert (tmp_path / "fault_free-seed2.jsonl").exists()


def test_check_exit_codes(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    main(["run", str(SCENARIOS / "fault_free.yaml"), "--seed", "1", "--trace", str(trace)])
    lines = trace.read_text().splitlines()
    truncated = tmp_path / "cut.jsonl"
    truncated.write_text("\n".join(lines[:-1]) + "\n")
    assert main(["check", str(truncated)]) == 2
    stalled = tmp_path / "stalled.jsonl"
    stalled.write_text("\n".join(lines[:-1] + [lines[-1].replace('"stalled":false',
                                                                 '"stalled":true')]) + "\n")
    assert main(["check", str(stalled)]) == 1
    assert "FAIL liveness" in capsys.readouterr().out


def test_compromised_scenario_exits_one(tmp_path, capsys):
    code = main(["run", str(SCENARIOS / "compromised_usig.yaml"), "--seed", "1",
                 "--trace", str(tmp_path / "c.jsonl")])
    out = capsys.readouterr().out
    assert code == 1
    assert "FAIL safety[HYBRID]" in out and "PASS safety[BFT]" in out


def test_sweep_rows(capsys):
    assert main(["sweep", str(SCENARIOS / "fault_free.yaml"), "--param", "batch_size=1,5",
                 "--seed", "1", "--workers", "1"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert [r.split()[0] for r in rows] == ["batch_size=1", "batch_size=5"]
    assert all("checks=PASS" in r for r in rows)


def test_sweep_unknown_field(capsys):
    assert main(["sweep", str(SCENARIOS / "fault_free.yaml"), "--param", "warp=1"]) == 2


def test_missing_scenario_file(capsys):
    assert main(["run", "/nonexistent.yaml"]) == 2


def test_explore_honest(capsys):
    assert main(["explore", "--behavior", "honest"]) == 0
    assert "hybrid_violations=0 bft_violations=0" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [[], ["bogus"]])
def test_bad_usage(argv):
    with pytest.raises(SystemExit):
        main(argv)
