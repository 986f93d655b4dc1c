import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentcpd import graphseq
from latentcpd.graphseq import GraphDataError, GraphSequence, GraphSnapshot, LabelSet


def write(tmp_path, text, name="seq.edges"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_snapshot_is_read_only_copy():
    w = np.eye(2)
    s = GraphSnapshot(0, w)
    w[0, 0] = 5
    assert s.weights[0, 0] == 1
    with pytest.raises(ValueError):
        s.weights[0, 0] = 2


def test_snapshot_rejects_non_square():
    with pytest.raises(GraphDataError):
        GraphSnapshot(0, np.ones((2, 3)))


def test_validate():
    assert graphseq.validate(GraphSnapshot(0, [[0, 1], [1, 0]], directed=False)) == []
    assert "asymmetric" in graphseq.validate(GraphSnapshot(0, [[0, 1], [0, 0]], directed=False))
    assert "negative weight" in graphseq.validate(GraphSnapshot(0, [[0, -0.5], [0, 0]]))


def test_sequence_invariants():
    with pytest.raises(GraphDataError, match="node count mismatch"):
        GraphSequence((GraphSnapshot(0, np.eye(2)), GraphSnapshot(1, np.eye(3))))
    with pytest.raises(GraphDataError, match="contiguous"):
        GraphSequence((GraphSnapshot(0, np.eye(2)), GraphSnapshot(2, np.eye(2))))
    with pytest.raises(GraphDataError):
        GraphSequence(())


def test_labelset_disjoint():
    with pytest.raises(GraphDataError):
        LabelSet(frozenset({3}), frozenset({3}))
    seq = GraphSequence.from_matrices([np.eye(2)] * 5)
    with pytest.raises(GraphDataError):
        LabelSet(frozenset({9})).check_against(seq)


def test_load_two_snapshots_three_nodes(tmp_path):
    p = write(tmp_path, "0 0 1 1.0\n0 1 2 2.0\n1 2 0 0.5\n")
    seq = graphseq.load_sequence(p)
    assert (len(seq), seq.n) == (2, 3)
    assert seq.directed
    assert seq.at(1).weights[2, 0] == 0.5


def test_load_negative_weight_line_number(tmp_path):
    p = write(tmp_path, "# comment\n0 0 1 1.0\n0 1 2 -1.0\n")
    with pytest.raises(GraphDataError, match="negative weight at line 3"):
        graphseq.load_sequence(p)


def test_load_node_count_mismatch(tmp_path):
    p = write(tmp_path, "# n: 5\n0 0 1 1\n1 7 1 1\n")
    with pytest.raises(GraphDataError, match="node count mismatch"):
        graphseq.load_sequence(p)


def test_load_parse_error(tmp_path):
    p = write(tmp_path, "0 0 1\n")
    with pytest.raises(GraphDataError, match="line 1"):
        graphseq.load_sequence(p)


def test_load_string_ids_sorted_and_undirected_mirrored(tmp_path):
    p = write(tmp_path, "# directed: false\n0 bob alice 2\n1 carol bob 1\n")
    seq = graphseq.load_sequence(p)
    assert seq.node_ids == ("alice", "bob", "carol")
    assert not seq.directed
    assert seq.at(0).weights[0, 1] == seq.at(0).weights[1, 0] == 2
    assert seq.at(0).weights[2].sum() == 0


def test_unknown_header_ignored(tmp_path):
    p = write(tmp_path, '# config: {"seed": 1}\n0 0 1 1\n')
    assert graphseq.load_sequence(p).n == 2


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        graphseq.load_sequence(tmp_path / "nope.edges")


def seq_strategy():
    @st.composite
    def build(draw):
        seed = draw(st.integers(0, 2**32 - 1))
        n = draw(st.integers(1, 6))
        T = draw(st.integers(1, 4))
        directed = draw(st.booleans())
        rng = np.random.default_rng(seed)
        mats = []
        for _ in range(T):
            m = np.round(rng.random((n, n)) * 10, 6) * (rng.random((n, n)) < 0.5)
            if not directed:
                m = np.triu(m) + np.triu(m, 1).T
            mats.append(m)
        return GraphSequence(tuple(GraphSnapshot(3 + i, m, directed) for i, m in enumerate(mats)))
    return build()


@given(seq=seq_strategy(), fmt=st.sampled_from(graphseq.FORMATS))
@settings(max_examples=40)
def test_round_trip(tmp_path_factory, seq, fmt):
    path = tmp_path_factory.mktemp("rt") / "data"
    graphseq.save_sequence(seq, path, format=fmt, comments=["config: {}"])
    back = graphseq.load_sequence(path, format=fmt)
    assert back.timestamps == seq.timestamps
    assert back.directed == seq.directed
    for a, b in zip(seq, back):
        assert np.array_equal(a.weights, b.weights)


def test_round_trip_keeps_string_ids(tmp_path):
    seq = GraphSequence((GraphSnapshot(0, [[0, 1], [0, 0]]),), ("x", "y"))
    graphseq.save_sequence(seq, tmp_path / "s.edges")
    back = graphseq.load_sequence(tmp_path / "s.edges")
    assert back.node_ids == ("x", "y") and back[0] == seq[0]


def test_window():
    seq = GraphSequence.from_matrices([np.eye(2) * t for t in range(151)])
    w = graphseq.window(seq, 12, 3)
    assert w.timestamps == [10, 11, 12]
    assert graphseq.window(seq, 5, 1).timestamps == [5]
    with pytest.raises(GraphDataError, match="insufficient history"):
        graphseq.window(seq.__class__(seq.snapshots[1:]), 1, 3)


@given(end=st.integers(0, 30), size=st.integers(1, 31))
def test_window_ends_at_end(end, size):
    seq = GraphSequence.from_matrices([np.eye(2)] * 31)
    if end - size + 1 < 0:
        with pytest.raises(GraphDataError):
            graphseq.window(seq, end, size)
    else:
        assert graphseq.window(seq, end, size)[-1].timestamp == end


def test_frobenius_examples():
    a = np.array([[1.0, 0.0], [0.0, 0.0]])
    b = np.array([[0.0, 0.0], [0.0, 1.0]])
    assert graphseq.frobenius_distance(a, a) == 0
    assert graphseq.frobenius_distance(a, b) == pytest.approx(np.sqrt(2))
    assert graphseq.frobenius_distance(2 * a, a) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        graphseq.frobenius_distance(a, np.eye(3))


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 5))
def test_frobenius_is_metric(seed, n):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.random((n, n)) for _ in range(3))
    d = graphseq.frobenius_distance
    assert d(a, b) == pytest.approx(d(b, a))
    assert d(a, a) == 0 and d(a, b) > 0
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-12


def test_labels_round_trip(tmp_path):
    lab = LabelSet(frozenset({48, 82}), frozenset({30}))
    graphseq.save_labels(lab, tmp_path / "l.txt", comments=["seed: 1"])
    assert graphseq.load_labels(tmp_path / "l.txt") == lab


def test_labels_parse_error(tmp_path):
    p = write(tmp_path, "5 spike\n", "l.txt")
    with pytest.raises(GraphDataError, match="line 1"):
        graphseq.load_labels(p)
