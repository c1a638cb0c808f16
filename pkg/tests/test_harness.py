import io

import pytest

from parfinger.cost import FingerOracle
from parfinger.harness import (
    CSV_COLUMNS,
    ConfigError,
    WorkloadSpec,
    differential,
    format_ops,
    generate,
    main,
    parse_ops,
    preload_items,
    run,
    write_csv,
)
from parfinger.multifinger import FingerMove
from parfinger.ops import Kind, Operation


def same_trace(a, b):
    return [(o.kind, o.key, o.value) for o in a] == [(o.kind, o.key, o.value) for o in b]


@pytest.mark.parametrize("dist", ["uniform", "zipf", "finger-local", "adversarial-cascade"])
def test_generation_is_deterministic(dist):
    spec = WorkloadSpec(distribution=dist, n_ops=500, key_space=4096, preload=100, seed=7)
    assert same_trace(generate(spec), generate(spec))
    other = WorkloadSpec(distribution=dist, n_ops=500, key_space=4096, preload=100, seed=8)
    assert not same_trace(generate(spec), generate(other))


def test_keys_stay_in_key_space():
    for dist in ("uniform", "zipf", "finger-local"):
        ops = generate(WorkloadSpec(distribution=dist, n_ops=2000, key_space=300, preload=50))
        assert all(0 <= o.key < 300 for o in ops)


def test_finger_local_ops_sit_near_an_end():
    spec = WorkloadSpec(distribution="finger-local", n_ops=4000, key_space=1 << 16, preload=2000, lam=0.9)
    o = FingerOracle(preload_items(spec))
    near = 0
    for op in generate(spec):
        _, r = o.apply(op)
        near += r <= 10
    assert near >= 0.9 * spec.n_ops


def test_cascade_drives_levels_up_and_down():
    spec = WorkloadSpec(structure="fs0", distribution="adversarial-cascade", n_ops=3000, key_space=1 << 16)
    rep = run(spec)
    assert rep.passed and rep.max_segment_level >= 2


def test_empty_trace():
    for name in ("fs0", "fs1", "fs2", "mf"):
        rep = run(WorkloadSpec(structure=name, n_ops=0, p=2))
        assert rep.passed and rep.total_work == 0 and rep.ratio == 0.0


def test_parse_format_round_trip():
    text = "I 5 x\nS 5\nU 5 2.5\nD 5\nM 0 -inf\nM 1 7 after\nM 0 3 before\n"
    ops = parse_ops(text)
    assert isinstance(ops[4], FingerMove) and ops[4].cut == "-inf"
    assert ops[5].cut == (7, True) and ops[6].cut == (3, False)
    assert ops[2].value == 2.5 and ops[0].kind == Kind.INSERT
    assert format_ops(ops) == text
    assert parse_ops("# only a comment\n\n") == []


def test_bad_trace_line():
    with pytest.raises(ConfigError):
        parse_ops("X 1\n")
    with pytest.raises(ConfigError):
        parse_ops("M zero 1\n")


@pytest.mark.parametrize(
    "kw",
    [
        {"structure": "nope"},
        {"distribution": "nope"},
        {"n_ops": -1},
        {"p": 0},
        {"lam": 0.0},
        {"zipf_s": 1.0},
        {"preload": 10, "key_space": 5},
        {"batch_profile": ()},
    ],
)
def test_invalid_specs(kw):
    with pytest.raises(ConfigError):
        WorkloadSpec(**kw).validate()


def test_moves_only_for_mf():
    with pytest.raises(ConfigError):
        run(WorkloadSpec(structure="fs1"), [FingerMove(0, "-inf")])


@pytest.mark.parametrize("name", ["fs0", "fs1", "fs2", "mf"])
def test_runs_pass_oracle(name):
    spec = WorkloadSpec(structure=name, n_ops=3000, key_space=2000, p=2, preload=300, fingers=2, check_every=500)
    rep = run(spec)
    assert rep.passed, rep.failures
    assert rep.total_work > 0 and rep.F_L > 0


def test_mf_with_moves_passes_oracle():
    ops = [Operation(Kind.INSERT, k, k) for k in range(200)]
    ops += [FingerMove(0, (150, True)), Operation(Kind.SEARCH, 140), FingerMove(1, "+inf"), FingerMove(0, (10, False))]
    rep = run(WorkloadSpec(structure="mf", fingers=2, key_space=300), ops)
    assert rep.passed, rep.failures


def test_differential_agrees():
    spec = WorkloadSpec(n_ops=800, key_space=500, p=2, seed=3)
    same, reports = differential(spec)
    assert same and all(r.passed for r in reports)
    assert [r.structure for r in reports] == ["fs0", "fs1", "fs2", "mf"]


def test_csv_columns_and_stability(tmp_path):
    spec = WorkloadSpec(structure="fs1", n_ops=500, key_space=1000)
    out = []
    for _ in range(2):
        buf = io.StringIO()
        write_csv([run(spec)], buf, timing=False)
        out.append(buf.getvalue())
    assert out[0] == out[1]
    header, row = out[0].splitlines()
    assert header.split(",") == list(CSV_COLUMNS)
    assert row.endswith(",")


def test_cli_csv_is_byte_stable(tmp_path):
    paths = [tmp_path / f"r{i}.csv" for i in range(2)]
    for p in paths:
        assert main(["--structure", "fs1", "--n", "400", "--keyspace", "999", "--csv", str(p), "--no-timing"]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_cli_exit_codes(tmp_path):
    assert main(["--structure", "fs0", "--n", "100", "--keyspace", "50"]) == 0
    assert main(["--structure", "fs0", "--n", "100", "--zipf-s", "0.5", "--gen", "zipf"]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("Q 1\n")
    assert main(["--ops-file", str(bad)]) == 2
    assert main(["--differential", "--n", "300", "--keyspace", "100", "--p", "2"]) == 0


def test_cli_trace_emit_and_replay(tmp_path):
    trace = tmp_path / "t.txt"
    assert main(["--gen", "finger-local", "--n", "300", "--preload", "50", "--emit-trace", str(trace)]) == 0
    assert len(trace.read_text().splitlines()) == 300
    out = tmp_path / "o.csv"
    assert main(["--ops-file", str(trace), "--preload", "50", "--structure", "fs2", "--p", "2", "--csv", str(out)]) == 0
    assert out.read_text().splitlines()[1].startswith("fs2,300,2,")
