import io
import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import edge, random_graph, two_way
from roadrisk import container
from roadrisk.errors import BadRatios, ContainerError, CorruptFile, CsvFormatError, EmptyGraph, InvalidRecord, \
    IoError, VersionMismatch
from roadrisk.ingest import (MISSING, AccidentRecord, accidents_to_csv, assign_accidents,
                             assign_accidents_bruteforce, build_dataset, dataset_from_bytes, encode_features,
                             load_dataset, parse_numeric, read_accidents_csv, save_dataset, severity_class,
                             stratified_split)
from roadrisk.roadgraph import NodeRecord, build_graph


def line_graph(highways, lengths=None, **kw):
    n = len(highways) + 1
    nodes = [NodeRecord(i, 40.0, -75.0 + 0.001 * i, None, 2) for i in range(n)]
    lengths = lengths or [10.0] * len(highways)
    edges = [edge(i, i + 1, highway=h, length=l, **kw) for i, (h, l) in enumerate(zip(highways, lengths))]
    return build_graph(nodes, edges)


def block(names, X, prefix):
    cols = [j for j, n in enumerate(names) if n.startswith(prefix + "=")]
    return [names[j] for j in cols], X[:, cols]


# --- encoding -------------------------------------------------------------

def test_highway_block_has_missing_column():
    g = line_graph(["residential", "motorway", None])
    _, ex, names, _ = encode_features(g)
    cols, B = block(names["edge"], ex, "highway")
    assert cols == ["highway=__missing__", "highway=motorway", "highway=residential"]
    np.testing.assert_array_equal(B, [[0, 0, 1], [0, 1, 0], [1, 0, 0]])


def test_oneway_block_partitions():
    nodes = [NodeRecord(i, 0, i * 0.001) for i in range(3)]
    g = build_graph(nodes, [edge(0, 1, oneway=True), edge(1, 2, oneway=False)])
    _, ex, names, _ = encode_features(g)
    cols, B = block(names["edge"], ex, "oneway")
    assert cols == ["oneway=false", "oneway=true"]
    np.testing.assert_array_equal(B, [[0, 1], [1, 0]])


def test_length_zscore_closed_form():
    g = line_graph(["a", "b", "c"], [100.0, 200.0, 300.0])
    _, ex, names, stats = encode_features(g)
    col = ex[:, names["edge"].index("length")]
    np.testing.assert_allclose(col, [-1.2247, 0.0, 1.2247], atol=1e-4)
    np.testing.assert_allclose(col, [-math.sqrt(1.5), 0.0, math.sqrt(1.5)], atol=1e-12)
    assert stats["edge.length"] == {"mean": 200.0, "std": pytest.approx(math.sqrt(20000 / 3))}


def test_zscore_uses_training_rows_only():
    # edge k ends at node k + 1; training nodes 1 and 2 select the first two edges
    g = line_graph(["a", "a", "a"], [100.0, 200.0, 900.0])
    train = np.array([False, True, True, False])
    _, ex, names, stats = encode_features(g, train)
    assert stats["edge.length"]["mean"] == 150.0
    assert stats["edge.length"]["std"] == 50.0
    np.testing.assert_allclose(ex[:, names["edge"].index("length")], [-1.0, 1.0, 15.0])


def test_numeric_parsing_and_missing_imputation():
    assert parse_numeric("30 mph") == 30.0
    assert parse_numeric("2;3") == 2.0
    assert parse_numeric("['40', '50']") == 40.0
    assert math.isnan(parse_numeric("none"))
    assert math.isnan(parse_numeric(None))
    g = line_graph(["a", "a", "a"], maxspeed=None)
    g = build_graph(g.nodes, [edge(0, 1, maxspeed="30 mph"), edge(1, 2, maxspeed="50"),
                              edge(2, 3, maxspeed="signals")])
    _, ex, names, stats = encode_features(g)
    np.testing.assert_allclose(ex[:, names["edge"].index("maxspeed_numeric")], [-1.0, 1.0, 0.0])
    cols, B = block(names["edge"], ex, "maxspeed")
    assert "maxspeed=signals" in cols and "maxspeed=__missing__" in cols


def test_constant_column_gets_unit_std():
    g = line_graph(["a", "a"], [5.0, 5.0])
    _, ex, names, stats = encode_features(g)
    assert stats["edge.length"]["std"] == 1.0
    np.testing.assert_array_equal(ex[:, names["edge"].index("length")], [0.0, 0.0])


def test_column_order_is_alphabetical():
    g = random_graph(np.random.default_rng(1), 6)
    _, _, names, _ = encode_features(g)
    blocks = [n.split("=")[0] for n in names["edge"]]
    assert blocks == sorted(blocks)
    assert names["node"][0].startswith("highway=") and names["node"][-1] == "street_count"


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_one_hot_rows_sum_to_one(seed):
    g = random_graph(np.random.default_rng(seed), 7)
    nx, ex, names, _ = encode_features(g)
    for X, cols in ((nx, names["node"]), (ex, names["edge"])):
        for prefix in {c.split("=")[0] for c in cols if "=" in c}:
            _, B = block(cols, X, prefix)
            np.testing.assert_array_equal(B.sum(axis=1), np.ones(X.shape[0]))


# --- labels ---------------------------------------------------------------

@pytest.mark.parametrize("mean,cls", [(1.0, 1), (1.49, 1), (1.5, 2), (2.0, 3), (2.5, 4), (3.0, 5),
                                      (3.5, 6), (4.0, 7), (5.5, 7), (7.0, 7)])
def test_severity_class_table(mean, cls):
    assert severity_class(mean) == cls


def test_assign_accidents_examples():
    g = line_graph(["a", "a"])
    occ, sev = assign_accidents(g, [])
    np.testing.assert_array_equal(occ, [0, 0, 0])
    np.testing.assert_array_equal(sev, [0, 0, 0])
    n1 = g.nodes[1]
    occ, sev = assign_accidents(g, [AccidentRecord(n1.lat, n1.lon, 2), AccidentRecord(n1.lat, n1.lon + 1e-5, 3),
                                    AccidentRecord(g.nodes[0].lat, g.nodes[0].lon, 1),
                                    AccidentRecord(g.nodes[2].lat, g.nodes[2].lon, 7)])
    np.testing.assert_array_equal(occ, [1, 1, 1])
    np.testing.assert_array_equal(sev, [1, 4, 7])


def test_assign_accidents_empty_graph():
    with pytest.raises(EmptyGraph):
        assign_accidents(build_graph([], []), [AccidentRecord(0, 0, 1)])


def test_accident_record_validation():
    with pytest.raises(InvalidRecord):
        AccidentRecord(0, 0, 0)
    with pytest.raises(InvalidRecord):
        AccidentRecord(0, 0, 8)
    with pytest.raises(InvalidRecord):
        AccidentRecord(95, 0, 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_assign_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, int(rng.integers(1, 30)), p_edge=0.1)
    acc = [AccidentRecord(40.0 + 0.012 * rng.random() - 0.001, -75.0 + 0.012 * rng.random() - 0.001,
                          int(rng.integers(1, 8))) for _ in range(40)]
    fast, slow = assign_accidents(g, acc), assign_accidents_bruteforce(g, acc)
    np.testing.assert_array_equal(fast[0], slow[0])
    np.testing.assert_array_equal(fast[1], slow[1])
    np.testing.assert_array_equal(fast[1] > 0, fast[0] == 1)


def test_accident_csv_round_trip():
    acc = [AccidentRecord(41.1234567891234, -87.1, 3, "2022-03-01T08:15:00"), AccidentRecord(0.0, 0.0, 1)]
    assert read_accidents_csv(io.StringIO(accidents_to_csv(acc))) == acc
    with pytest.raises(CsvFormatError, match="severity"):
        read_accidents_csv(io.StringIO("lat,lon,timestamp\n1,2,x\n"))
    with pytest.raises(CsvFormatError, match="accidents.csv:2"):
        read_accidents_csv(io.StringIO("lat,lon,severity,timestamp\n1,2,high,x\n"))


# --- split ----------------------------------------------------------------

def test_split_ten_nodes_five_positive():
    labels = np.array([1, 0] * 5)
    for seed in range(5):
        tr, va, te = stratified_split(labels, seed=seed)
        for mask, want in ((tr, 3), (va, 1), (te, 1)):
            assert int(labels[mask].sum()) == want
            assert int((labels[mask] == 0).sum()) == want


def test_split_single_class_and_determinism():
    labels = np.zeros(10, dtype=int)
    tr, va, te = stratified_split(labels, seed=4)
    assert (tr.sum(), va.sum(), te.sum()) == (6, 2, 2)
    again = stratified_split(labels, seed=4)
    for a, b in zip((tr, va, te), again):
        np.testing.assert_array_equal(a, b)


def test_split_tiny_class_goes_to_train():
    labels = np.array([0] * 10 + [1, 1])
    tr, va, te = stratified_split(labels, seed=0)
    assert tr[10] and tr[11]


@pytest.mark.parametrize("ratios", [(0.5, 0.5), (0.7, 0.2, 0.2), (1.2, -0.1, -0.1)])
def test_split_bad_ratios(ratios):
    with pytest.raises(BadRatios):
        stratified_split([0, 1, 0], ratios)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=80), st.integers(0, 1000),
       st.sampled_from([(0.6, 0.2, 0.2), (0.8, 0.1, 0.1), (0.5, 0.25, 0.25)]))
def test_split_proportions(labels, seed, ratios):
    labels = np.array(labels)
    masks = stratified_split(labels, ratios, seed)
    cover = sum(m.astype(int) for m in masks)
    np.testing.assert_array_equal(cover, np.ones(labels.size))
    for c in np.unique(labels):
        n = int((labels == c).sum())
        if n < 3:
            continue
        for m, r in zip(masks, ratios):
            assert abs(int((labels[m] == c).sum()) - n * r) < 1


# --- dataset --------------------------------------------------------------

def test_two_node_dataset():
    g = build_graph([NodeRecord(0, 0, 0), NodeRecord(1, 0, 0.001)], [edge(0, 1)])
    ds = build_dataset(g, [])
    np.testing.assert_array_equal(ds.labels_occurrence, [0, 0])
    np.testing.assert_array_equal(ds.labels_severity, [0, 0])
    np.testing.assert_array_equal(ds.edge_ang, [[math.pi] * 3])
    np.testing.assert_allclose(ds.edge_dir, [[0.0, 0.001]])


def test_dataset_shapes(small_synth, small_dataset):
    ds, g = small_dataset, small_synth.graph
    n, e = g.num_nodes, g.num_edges
    assert ds.node_features.shape == (n, len(ds.feature_names["node"]))
    assert ds.edge_features.shape == (e, len(ds.feature_names["edge"]))
    assert ds.edge_ang.shape == (e, 3) and ds.edge_dir.shape == (e, 2) and ds.edge_index.shape == (e, 2)
    for arr in (ds.labels_occurrence, ds.labels_severity, ds.train_mask, ds.val_mask, ds.test_mask):
        assert arr.shape == (n,)
    np.testing.assert_array_equal(ds.labels_severity > 0, ds.labels_occurrence == 1)


def test_dataset_deterministic_bytes(small_synth, small_dataset):
    again = build_dataset(small_synth.graph, small_synth.accidents, seed=0)
    assert again.to_bytes() == small_dataset.to_bytes()
    other = build_dataset(small_synth.graph, small_synth.accidents, seed=1)
    assert other.to_bytes() != small_dataset.to_bytes()


def test_dataset_neighborhood_variant(small_synth):
    ds_in = build_dataset(small_synth.graph, small_synth.accidents, neighborhood="in")
    assert ds_in.neighborhood == "in"
    # every synthetic road is two-way, so both variants see the same neighbours
    ds_all = build_dataset(small_synth.graph, small_synth.accidents)
    np.testing.assert_array_equal(ds_in.edge_ang, ds_all.edge_ang)


def test_dataset_round_trip(tmp_path, small_dataset):
    path = tmp_path / "d.tapd"
    data = save_dataset(small_dataset, path)
    assert path.read_bytes() == data
    back = load_dataset(path)
    assert back == small_dataset
    np.testing.assert_array_equal(back.node_features, small_dataset.node_features)
    assert back.feature_names == small_dataset.feature_names
    assert back.train_mask.dtype == bool


def test_dataset_truncated_and_versioned(tmp_path, small_dataset):
    data = small_dataset.to_bytes()
    with pytest.raises(CorruptFile):
        dataset_from_bytes(data[:-7])
    with pytest.raises(CorruptFile):
        dataset_from_bytes(data[:10])
    flipped = bytearray(data)
    flipped[len(data) // 2] ^= 0xFF
    with pytest.raises(CorruptFile, match="checksum"):
        dataset_from_bytes(bytes(flipped))
    bumped = bytearray(data)
    bumped[4:8] = (2).to_bytes(4, "little")
    with pytest.raises(VersionMismatch):
        dataset_from_bytes(bytes(bumped))
    with pytest.raises(CorruptFile, match="magic"):
        dataset_from_bytes(b"XXXX" + data[4:])
    with pytest.raises(IoError):
        load_dataset(tmp_path / "absent.tapd")


def test_container_generic_round_trip():
    arrays = {"a": np.arange(6, dtype=np.float64).reshape(2, 3), "b": np.array([1, -2], dtype=np.int64),
              "c": np.array([True, False])}
    header, back = container.unpack(container.pack(b"TEST", 3, {"x": [1, 2]}, arrays), b"TEST", 3)
    assert header["x"] == [1, 2]
    for k, v in arrays.items():
        np.testing.assert_array_equal(back[k], v)
    with pytest.raises(TypeError):
        container.pack(b"TEST", 3, {}, {"bad": np.array(["s"])})
    with pytest.raises(ContainerError):
        container.unpack(b"", b"TEST", 3)


def test_synth_two_way_graph_edges_come_in_pairs():
    g = build_graph([NodeRecord(i, 0, 0.001 * i) for i in range(3)], two_way([(0, 1), (1, 2)]))
    ds = build_dataset(g, [])
    np.testing.assert_array_equal(ds.edge_index, [[0, 1], [1, 0], [1, 2], [2, 1]])
    assert MISSING == "__missing__"


def test_checksum_distinguishes_datasets(small_synth):
    a = build_dataset(small_synth.graph, small_synth.accidents, seed=0)
    b = build_dataset(small_synth.graph, small_synth.accidents, seed=9)
    assert a.checksum() != b.checksum()
    assert a.checksum() == build_dataset(small_synth.graph, small_synth.accidents, seed=0).checksum()
    data = a.to_bytes()
    assert a.checksum() == zlib.crc32(data[:-4])
