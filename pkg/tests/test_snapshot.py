import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gmtrust.simnet import CollaborationRecord, Dataset, generate_network, simulate
from gmtrust.snapshot import (TrustEdge, TrustSnapshot, WindowSpec, aggregate_edge, build_snapshots, read_snapshots,
                              write_snapshots)

from conftest import make_device

record_lists = st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=1, max_size=30)


@pytest.mark.parametrize("records,expected", [
    ([(0.1, 1), (0.3, 0)], 0.68),
    ([(0.0, 1)], 1.0),
    ([(1.0, 0)], 0.0),
])
def test_aggregate_edge_examples(records, expected):
    assert aggregate_edge(records, 0.6, 0.4) == pytest.approx(expected, abs=1e-12)


def test_aggregate_edge_endpoints_exact():
    assert aggregate_edge([(0.0, 1)] * 7, 0.6, 0.4) == 1.0
    assert aggregate_edge([(1.0, 0)] * 7, 0.6, 0.4) == 0.0


@pytest.mark.parametrize("records,a1,a2", [([], 0.6, 0.4), ([(0.1, 1)], 0.6, 0.5), ([(0.1, 1)], 1.2, -0.2)])
def test_aggregate_edge_errors(records, a1, a2):
    with pytest.raises(ValueError):
        aggregate_edge(records, a1, a2)


@given(record_lists, st.floats(0, 1))
def test_aggregate_edge_matches_vectorised_oracle(records, a1):
    a2 = 1.0 - a1
    loss = np.array([r[0] for r in records])
    out = np.array([r[1] for r in records], dtype=float)
    oracle = float(np.mean(a1 * (1.0 - loss) + a2 * out))
    value = aggregate_edge(records, a1, a2)
    assert abs(value - oracle) <= 1e-12
    assert 0.0 <= value <= 1.0 + 1e-15


@given(record_lists, st.randoms(use_true_random=False))
def test_aggregate_edge_permutation_invariant(records, rnd):
    shuffled = list(records)
    rnd.shuffle(shuffled)
    assert aggregate_edge(shuffled, 0.6, 0.4) == pytest.approx(aggregate_edge(records, 0.6, 0.4), abs=1e-12)


def test_slot_assignment_example():
    w = WindowSpec(4, 100.0)
    assert [w.slot_of(t) for t in (0, 10, 25, 99)] == [0, 0, 1, 3]
    assert w.slot_of(100.0) == 3


def test_window_rejects_zero_slots():
    with pytest.raises(ValueError):
        WindowSpec(0, 100.0)


def _dataset(records, n=3, horizon=100.0):
    return Dataset(tuple(make_device(i) for i in range(n)), tuple(records), horizon, 0)


def test_single_record_snapshot():
    snaps = build_snapshots(_dataset([CollaborationRecord(0, 1, 60.0, 0.2, 1)]), WindowSpec(4, 100.0))
    assert [len(s.edges) for s in snaps] == [0, 0, 1, 0]
    edge = snaps[2].edges[0]
    assert (edge.trustor_id, edge.trustee_id, edge.n_interactions) == (0, 1, 1)
    assert edge.weight == pytest.approx(0.88, abs=1e-12)


def test_empty_dataset_gives_empty_snapshots():
    snaps = build_snapshots(_dataset([]), WindowSpec(3, 100.0))
    assert len(snaps) == 3 and all(not s.edges for s in snaps)


def test_snapshot_invariants():
    ds = simulate(generate_network(40, 2), 800)
    snaps = build_snapshots(ds, WindowSpec(10, ds.horizon_s))
    assert sum(e.n_interactions for s in snaps for e in s.edges) == len(ds.records)
    for s in snaps:
        assert s.nodes == {x for e in s.edges for x in (e.trustor_id, e.trustee_id)}
        for e in s.edges:
            assert 0.0 <= e.weight <= 1.0
            assert e.trustor_id in s.in_adj[e.trustee_id]
            assert e.trustee_id in s.out_adj[e.trustor_id]


def test_duplicate_edge_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        TrustSnapshot(0, [TrustEdge(0, 1, 0.5, 1), TrustEdge(0, 1, 0.6, 2)])


def test_snapshot_jsonl_roundtrip(tmp_path):
    ds = simulate(generate_network(30, 4), 400)
    snaps = build_snapshots(ds, WindowSpec(5, ds.horizon_s))
    path = tmp_path / "s.jsonl"
    write_snapshots(path, snaps)
    back = read_snapshots(path, 5)
    assert [s.edges for s in back] == [s.edges for s in snaps]
    assert set(__import__("json").loads(path.read_text().splitlines()[0])) == {"slot", "src", "dst", "w", "n"}
