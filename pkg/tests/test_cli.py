import csv

import numpy as np
import pytest

from eigengreedy.affine import load_grid, load_model
from eigengreedy.cli import main
from eigengreedy.eigensolve import lowest_clusters
from eigengreedy.subspace import load_rom, new_state, save_rom


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    p = {k: str(d / v) for k, v in dict(model="m.txt", grid="g.csv", gap="gap.npz", eig="eig.npz",
                                        trace="trace.csv").items()}
    assert main(["gen", "xxz", "--L", "5", "--out", p["model"]]) == 0
    assert main(["grid", "--model", p["model"], "--counts", "5", "5", "--out", p["grid"]]) == 0
    assert main(["build-gap", "--model", p["model"], "--grid", p["grid"], "--tol", "1e-2", "--out", p["gap"]]) == 0
    assert main(["build-eig", "--model", p["model"], "--grid", p["grid"], "--gap-rom", p["gap"], "--tol", "1e-6",
                 "--out", p["eig"], "--store-basis", "--trace", p["trace"]]) == 0
    p["dir"] = d
    return p


def test_gen_all_families(tmp_path):
    for args in (["xxz", "--L", "3"], ["blbq", "--L", "2"], ["random", "--n", "12", "--seed", "7"],
                 ["example1"], ["lagrange", "--nodes", "-1", "0", "1"]):
        out = str(tmp_path / f"{args[0]}.txt")
        assert main(["gen", *args, "--out", out]) == 0
        assert load_model(out).n > 0


def test_gen_lagrange_without_nodes(tmp_path, capsys):
    assert main(["gen", "lagrange", "--out", str(tmp_path / "x.txt")]) == 1
    assert "nodes" in capsys.readouterr().err


def test_grid_box_and_extra(tmp_path):
    out = str(tmp_path / "g.csv")
    assert main(["grid", "--box", "-2", "2", "--counts", "19", "--extra", "1", "--extra=-1", "--out", out]) == 0
    g = load_grid(out)
    assert len(g) == 21 and g.provenance == "explicit_list"


def test_build_outputs(built):
    gap, eig = load_rom(built["gap"]), load_rom(built["eig"])
    assert gap.meta["kind"] == "gap" and eig.meta["kind"] == "eig"
    assert gap.V is None and eig.V is not None
    with open(built["trace"]) as fh:
        header = next(csv.reader(fh))
    assert header == ["iteration", "phase", "index", "mu", "estimator", "H", "residual_term", "r", "ell"]


def test_eval(built, tmp_path):
    out, lift = str(tmp_path / "e.csv"), str(tmp_path / "l.npz")
    rc = main(["eval", "--rom-eig", built["eig"], "--rom-gap", built["gap"], "--mu=0.3,1.7", "--mu", "2 3",
               "--out", out, "--lift", lift])
    assert rc == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 and {r["status"] for r in rows} <= {"Certified", "DimConditionFailed", "GapWidthTooLarge"}
    vecs = np.load(lift)
    assert vecs["arr_0"].shape[0] == 32


def test_eval_grid_and_missing_mu(built, capsys):
    assert main(["eval", "--rom-eig", built["eig"], "--rom-gap", built["gap"], "--grid", built["grid"]]) == 0
    assert main(["eval", "--rom-eig", built["eig"], "--rom-gap", built["gap"]]) == 1


def test_verify_passes(built, tmp_path):
    out = str(tmp_path / "report.csv")
    rc = main(["verify", "--model", built["model"], "--grid", built["grid"], "--gap-rom", built["gap"],
               "--eig-rom", built["eig"], "--out", out])
    assert rc == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 25 and all(r["violations"] == "" for r in rows)


def test_verify_detects_truncated_rom(built, tmp_path, capsys):
    # keep only the first snapshot of the eigenspace ROM but claim the original tolerance
    fam = load_model(built["model"])
    full = load_rom(built["eig"])
    st = new_state(fam)
    first = full.snapshots[0]
    st.add_snapshot(first.mu, lowest_clusters(fam, first.mu, 1))
    st.meta.update(full.meta)
    bad = str(tmp_path / "trunc.npz")
    save_rom(st, bad, store_basis=True)
    rc = main(["verify", "--model", built["model"], "--grid", built["grid"], "--gap-rom", built["gap"],
               "--eig-rom", bad])
    assert rc == 2
    assert "VIOLATION" in capsys.readouterr().out


def test_verify_needs_basis(built):
    assert main(["verify", "--model", built["model"], "--grid", built["grid"], "--gap-rom", built["gap"],
                 "--eig-rom", built["gap"]]) == 1


def test_corrupt_rom_is_operational_error(built, tmp_path):
    raw = open(built["gap"], "rb").read()
    bad = tmp_path / "bad.npz"
    bad.write_bytes(raw[: len(raw) // 3])
    assert main(["eval", "--rom-eig", built["eig"], "--rom-gap", str(bad), "--mu=0,0"]) == 1


def test_bench(built, tmp_path):
    out = str(tmp_path / "b.csv")
    assert main(["bench", "--model", built["model"], "--rom", built["eig"], "--grid", built["grid"],
                 "--out", out]) == 0
    with open(out) as fh:
        row = next(csv.DictReader(fh))
    assert int(row["solves"]) == 25 and float(row["speedup"]) > 0
    assert main(["bench", "--rom", built["eig"], "--grid", built["grid"], "--rom-only"]) == 0
    assert main(["bench", "--rom", built["eig"], "--grid", built["grid"]]) == 1
    assert main(["bench", "--rom", built["eig"], "--grid", built["grid"], "--rom-only", "--repetitions", "0"]) == 1


def test_missing_model_file(tmp_path):
    assert main(["grid", "--model", str(tmp_path / "nope.txt"), "--counts", "3", "--out",
                 str(tmp_path / "g.csv")]) == 1
