"""The command-line interface: CSV schema, determinism, exit codes."""

import csv
import io

import pytest

from vnvheap.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def parse_csv(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    assert rows, "no CSV rows produced"
    return rows


def test_csv_schema(capsys):
    code, out = run_cli(capsys, "access", "--object-size", "128")
    assert code == 0
    reader = csv.reader(io.StringIO(out))
    assert next(reader) == ["benchmark", "params", "words_read",
                            "words_written", "time_us", "energy_uj", "reps"]
    for row in reader:
        assert len(row) == 7
        int(row[2]); int(row[3]); float(row[4]); float(row[5]); int(row[6])
        assert all(("=" in kv) for kv in row[1].split())


def test_same_arguments_reproduce_identical_output(capsys):
    args = ("kvs", "--backend", "vnv", "--pattern", "random",
            "--seed", "7", "--n-ops", "256")
    _, first = run_cli(capsys, *args)
    _, second = run_cli(capsys, *args)
    assert first == second


def test_access_sweep_covers_all_cases(capsys):
    code, out = run_cli(capsys, "access")
    assert code == 0
    rows = parse_csv(out)
    assert len(rows) == 4 * 3 * 2  # sizes x cases x systems
    best = [r for r in rows if "case=best" in r["params"]
            and "system=vnv" in r["params"]]
    assert all(int(r["words_read"]) + int(r["words_written"]) == 0 for r in best)


def test_queue_sweep_and_backends(capsys):
    code, out = run_cli(capsys, "queue", "--length", "12", "--reps", "16")
    assert code == 0
    rows = {}
    for r in parse_csv(out):
        backend = dict(kv.split("=") for kv in r["params"].split())["backend"]
        rows[backend] = int(r["words_read"]) + int(r["words_written"])
    assert rows["ram"] == 0
    assert rows["vnv"] == 0
    assert rows["nvm"] > 0


def test_queue_ram_backend_over_capacity_exits_nonzero(capsys):
    code = main(["queue", "--backend", "ram", "--length", "16"])
    captured = capsys.readouterr()
    assert code == 1
    assert "RAM queue" in captured.err


def test_queue_default_sweep_skips_unreachable_ram_lengths(capsys):
    code, out = run_cli(capsys, "queue", "--reps", "8")
    assert code == 0
    rows = parse_csv(out)
    by_backend = {}
    for r in rows:
        params = dict(kv.split("=") for kv in r["params"].split())
        by_backend.setdefault(params["backend"], []).append(int(params["length"]))
    assert by_backend["ram"] == [4, 12]          # capacity is 15
    assert by_backend["vnv"] == [4, 12, 20, 60]
    assert by_backend["nvm"] == [4, 12, 20, 60]


def test_persist_modes(capsys):
    code, out = run_cli(capsys, "persist")
    assert code == 0
    rows = parse_csv(out)
    vary_ram = [r for r in rows if "mode=vary_ram" in r["params"]]
    vary_limit = [r for r in rows if "mode=vary_limit" in r["params"]]
    assert len(vary_ram) == 8   # 4 sweep points x (vnv + unmanaged)
    assert len(vary_limit) == 5  # 4 vnv points + one baseline
    vnv_words = [int(r["words_written"]) for r in vary_ram
                 if "system=vnv" in r["params"]]
    assert len(set(vnv_words)) == 1  # flat in RAM size


def test_kvs_page_size_flag(capsys):
    code, out = run_cli(capsys, "kvs", "--backend", "ms", "--page-size", "64",
                        "--pattern", "sequential", "--n-ops", "64")
    assert code == 0
    rows = parse_csv(out)
    assert len(rows) == 1
    assert "page_size=64" in rows[0]["params"]


def test_energy_model_flags_scale_derived_columns(capsys):
    base_args = ("access", "--object-size", "1024", "--case", "worst",
                 "--system", "vnv")
    _, out1 = run_cli(capsys, *base_args)
    _, out2 = run_cli(capsys, *base_args, "--power-mw", "264")
    _, out3 = run_cli(capsys, *base_args, "--word-latency-us", "2.0")
    r1, r2, r3 = (parse_csv(o)[0] for o in (out1, out2, out3))
    assert r1["words_read"] == r2["words_read"] == r3["words_read"]
    assert float(r2["energy_uj"]) == pytest.approx(2 * float(r1["energy_uj"]))
    assert float(r3["time_us"]) == pytest.approx(2 * float(r1["time_us"]))
    assert float(r3["energy_uj"]) == pytest.approx(2 * float(r1["energy_uj"]))


def test_out_flag_writes_file(tmp_path, capsys):
    path = tmp_path / "bench.csv"
    code, out = run_cli(capsys, "persist", "--mode", "vary_limit",
                        "--out", str(path))
    assert code == 0
    assert out == ""
    assert parse_csv(path.read_text())


def test_crash_subcommand(capsys):
    code, out = run_cli(capsys, "crash", "--iterations", "5", "--seed", "21")
    assert code == 0
    assert out.startswith("PASS crash")


def test_check_quick(capsys):
    code, out = run_cli(capsys, "check", "--quick")
    assert code == 0
    lines = [l for l in out.splitlines() if l]
    assert len(lines) == 4
    assert all(l.startswith("PASS") for l in lines)
