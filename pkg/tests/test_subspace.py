import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eigengreedy.eigensolve import lowest_clusters
from eigengreedy.generators import (blbq_family, example1_family, lagrange_rank_one_family,
                                    random_quadratic_family, xxz_family)
from eigengreedy.subspace import (RomFormatError, load_rom, new_state, projector_distance, save_rom,
                                  term_extrema)

import oracles
from conftest import snapshot_state


def test_orth_extend_examples():
    st_ = new_state(example1_family())
    e = np.eye(3)
    assert st_.orth_extend(e[:, 0]) == 1
    assert st_.orth_extend(e[:, 0]) == 0
    assert st_.orth_extend(np.column_stack([e[:, 0] + e[:, 1], e[:, 1]])) == 1
    assert st_.r == 2
    assert np.linalg.norm(st_.V.T @ st_.V - np.eye(2)) < 1e-15


def test_orth_extend_rejects_wrong_rows():
    st_ = new_state(example1_family())
    with pytest.raises(ValueError):
        st_.orth_extend(np.ones(4))


def test_rational_family_rejected():
    with pytest.raises(ValueError):
        new_state(lagrange_rank_one_family([-1, 0, 1]))


@pytest.mark.parametrize("family", [xxz_family(5), blbq_family(3), random_quadratic_family(50, 4)],
                         ids=["xxz", "blbq", "random"])
def test_incremental_quantities_match_recompute(family):
    rng = np.random.default_rng(0)
    st_ = new_state(family)
    for _ in range(4):
        st_.orth_extend(rng.standard_normal((family.n, 3)))
    st_.check_consistency(1e-11)
    V = st_.V
    for q, A in enumerate(family.matrices):
        AV = np.asarray(A @ V)
        ref = V.conj().T @ AV
        assert np.linalg.norm(st_.reduced_terms[q] - ref) <= 1e-12 * max(1, np.linalg.norm(ref))
        for q2, A2 in enumerate(family.matrices):
            G = AV.conj().T @ np.asarray(A2 @ V)
            assert np.linalg.norm(st_.G[q, q2] - G) <= 1e-11 * max(1, np.linalg.norm(G))


def test_basis_orthonormal_after_many_extensions():
    fam = random_quadratic_family(80, 1)
    rng = np.random.default_rng(5)
    st_ = new_state(fam)
    base = rng.standard_normal((80, 5))
    for k in range(12):
        # nearly dependent columns stress the reorthogonalisation
        st_.orth_extend(base @ rng.standard_normal(5) + 1e-6 * rng.standard_normal(80))
    r = st_.r
    assert np.linalg.norm(st_.V.T @ st_.V - np.eye(r), 2) <= 1e-12


@pytest.mark.parametrize("method", ["stable", "gramian"])
def test_residual_matches_direct(method):
    fam = xxz_family(6)
    st_ = snapshot_state(fam, [[0.0, 0.5], [2.0, 3.0]], extra_columns=3)
    rng = np.random.default_rng(1)
    for _ in range(5):
        mu = [rng.uniform(-1, 2.5), rng.uniform(0, 3.5)]
        red = st_.reduced_eig(mu)
        W = st_.V @ red.vectors[:, :red.m1]
        R = oracles.dense(fam, mu) @ W - red.values[0] * W
        ref = np.linalg.norm(R, 2)
        got = st_.residual_norm(mu, red, method=method)
        tol = 1e-12 if method == "stable" else 1e-7
        assert abs(got - ref) <= tol * max(1.0, np.abs(red.values).max())


def test_residual_zero_on_exact_subspace():
    fam = example1_family()
    st_ = snapshot_state(fam, [0.5])
    assert st_.residual_norm(0.5) <= 1e-14


def test_reduced_eig_bounds_truth():
    fam = blbq_family(4)
    st_ = snapshot_state(fam, [[0.0, 0.0], [1.0, 1.0]], extra_columns=2)
    rng = np.random.default_rng(2)
    for _ in range(5):
        mu = [rng.uniform(0, 1.1), rng.uniform(0, 1.1)]
        assert st_.reduced_eig(mu).values[0] >= oracles.spectrum(fam, mu)[0] - 1e-12


def test_lift():
    fam = example1_family()
    st_ = snapshot_state(fam, [0.5])
    red = st_.reduced_eig(0.5)
    x = st_.lift(red.vectors[:, 0])
    assert np.allclose(np.abs(x), [0, 1, 0])
    with pytest.raises(ValueError):
        st_.lift(np.ones(st_.r + 1))


def test_projector_distance_examples():
    e = np.eye(3)
    assert projector_distance(e[:, :1], e[:, :1]) == 0.0
    assert projector_distance(e[:, :1], e[:, :2]) == 1.0
    assert projector_distance(e[:, :1], e[:, 1:2]) == 1.0
    v = np.array([np.cos(0.1), np.sin(0.1), 0])
    assert projector_distance(e[:, :1], v) == pytest.approx(np.sin(0.1), abs=1e-15)
    with pytest.raises(ValueError):
        projector_distance(e[:, :1], 2 * e[:, :1])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 10_000))
def test_projector_distance_properties(m, seed):
    rng = np.random.default_rng(seed)
    W, _ = np.linalg.qr(rng.standard_normal((7, m)))
    W2, _ = np.linalg.qr(rng.standard_normal((7, m)))
    d = projector_distance(W, W2)
    assert 0 <= d <= 1
    assert d == pytest.approx(projector_distance(W2, W), abs=1e-12)
    assert d == pytest.approx(np.linalg.norm(W @ W.T - W2 @ W2.T, 2), abs=1e-12)
    U, _ = np.linalg.qr(rng.standard_normal((m, m)))
    assert projector_distance(W, W @ U) < 1e-12


def test_term_extrema_contain_spectrum():
    fam = xxz_family(5)
    ext = term_extrema(fam)
    for q, A in enumerate(fam.matrices):
        w = np.linalg.eigvalsh(A.toarray())
        assert ext[q, 0] <= w[0] and ext[q, 1] >= w[-1]
        assert ext[q, 1] - w[-1] < 1e-10


def test_snapshot_cross_products():
    fam = xxz_family(5)
    st_ = snapshot_state(fam, [[0.0, 0.0], [1.0, 2.0]], extra_columns=2)
    for s in st_.snapshots:
        assert np.linalg.norm(s.cross - s.vectors.T @ st_.V) < 1e-13
    assert st_.has_snapshot([1.0, 2.0]) and not st_.has_snapshot([1.0, 2.5])


@pytest.mark.parametrize("store_basis", [False, True])
def test_rom_roundtrip(tmp_path, store_basis):
    fam = xxz_family(5)
    st_ = snapshot_state(fam, [[0.0, 0.5], [-1.0, 0.0]])
    st_.meta["kind"] = "gap"
    path = tmp_path / "rom.npz"
    save_rom(st_, path, store_basis=store_basis)
    back = load_rom(path)
    assert back.r == st_.r and back.J == st_.J and back.meta == {"kind": "gap"}
    for name in ("reduced_terms", "G", "T0", "T", "extrema"):
        assert np.array_equal(getattr(back, name), getattr(st_, name))
    assert (back.V is not None) == store_basis
    for mu in ([0.3, 1.1], [2.0, 3.0]):
        assert np.array_equal(back.reduced_eig(mu).values, st_.reduced_eig(mu).values)
        assert back.residual_norm(mu) == st_.residual_norm(mu)
    assert [s.ell for s in back.snapshots] == [s.ell for s in st_.snapshots]


def test_rom_corrupt_files(tmp_path):
    fam = example1_family()
    st_ = snapshot_state(fam, [0.5])
    path = tmp_path / "rom.npz"
    save_rom(st_, path)
    raw = path.read_bytes()
    (tmp_path / "trunc.npz").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(RomFormatError):
        load_rom(tmp_path / "trunc.npz")
    (tmp_path / "junk.npz").write_bytes(b"not a rom")
    with pytest.raises(RomFormatError):
        load_rom(tmp_path / "junk.npz")
    np.savez(tmp_path / "other.npz", x=np.zeros(2))
    with pytest.raises(RomFormatError):
        load_rom(tmp_path / "other.npz")


def test_release_offline_keeps_online_evaluation():
    fam = xxz_family(5)
    st_ = snapshot_state(fam, [[0.0, 0.5]])
    before = st_.residual_norm([1.0, 1.0])
    st_.release_offline()
    assert st_.V is None and st_.residual_norm([1.0, 1.0]) == before
    with pytest.raises(RuntimeError):
        st_.orth_extend(np.ones(fam.n))
