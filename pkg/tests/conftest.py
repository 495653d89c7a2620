import numpy as np
import pytest

from eigengreedy.affine import ParameterGrid, chebyshev_nodes_with_endpoints
from eigengreedy.eigensolve import lowest_clusters
from eigengreedy.generators import example1_family
from eigengreedy.greedy import GreedyConfig, greedy_eigenspace, greedy_gap
from eigengreedy.subspace import new_state

ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str = "") -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"AC{k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


def example1_grid() -> ParameterGrid:
    """19 Chebyshev-with-endpoints nodes on [-2, 2] plus the crossing points +-1: 21 points."""
    pts = np.sort(np.concatenate([chebyshev_nodes_with_endpoints(-2.0, 2.0, 19), [-1.0, 1.0]]))
    return ParameterGrid(pts)


def snapshot_state(family, mus, nclusters=1, extra_columns=0, rng=None):
    """RomState with snapshots at ``mus`` and optionally some random basis directions."""
    st = new_state(family)
    for mu in mus:
        st.add_snapshot(mu, lowest_clusters(family, mu, nclusters))
    if extra_columns:
        rng = rng or np.random.default_rng(0)
        st.orth_extend(rng.standard_normal((family.n, extra_columns)))
    return st


@pytest.fixture(scope="session")
def example1_pipeline():
    fam = example1_family()
    grid = example1_grid()
    gap, gtrace = greedy_gap(fam, GreedyConfig(grid, 1e-8))
    eig, etrace = greedy_eigenspace(fam, gap, GreedyConfig(grid, 1e-8))
    return fam, grid, gap, eig, gtrace, etrace


@pytest.fixture(scope="session")
def xxz6_pipeline():
    from eigengreedy.affine import chebyshev_grid
    from eigengreedy.generators import xxz_family

    fam = xxz_family(6)
    grid = chebyshev_grid(fam.domain, [9, 9])
    gap, gtrace = greedy_gap(fam, GreedyConfig(grid, 1e-2))
    eig, etrace = greedy_eigenspace(fam, gap, GreedyConfig(grid, 1e-6))
    return fam, grid, gap, eig, gtrace, etrace
