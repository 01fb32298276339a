import json
from fractions import Fraction

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.network import OrientedEdge, build_network
from app.core.spanning import OrientedForest
from app.core.walks import Walk
from app.utils.serialization import (
    digest,
    dump_json_line,
    edge_rows,
    forest_to_dot,
    format_records,
    load_config,
    load_network,
    network_from_record,
    network_to_dot,
    network_to_record,
    read_edge_list,
    write_edge_list,
    write_output,
)


def test_read_edge_list():
    text = """
    # a weighted path
    0 1 2.5
    1 2      # unit conductance
    a 2 0.5
    """
    network = read_edge_list(text)
    assert network.num_vertices == 4
    assert network.num_edges == 3
    assert network.conductance.tolist() == [2.5, 1.0, 0.5]
    assert network.vertex_of("a") == 3
    assert write_edge_list(network).splitlines() == ["0 1 2.5", "1 2 1.0", "3 2 0.5"]


def test_read_edge_list_rejects_bad_lines():
    with pytest.raises(ValueError):
        read_edge_list("0 1 2 3\n")
    with pytest.raises(ValueError):
        read_edge_list("0 1 heavy\n")


def test_network_record():
    network = build_network([((0, 0), (0, 1), 1.0), ((0, 1), (1, 1), 2.0)])
    record = network_to_record(network)
    assert record.vertices == 3
    assert record.labels == [[0, 0], [0, 1], [1, 1]]

    restored = network_from_record(record)
    assert restored.labels == network.labels
    assert restored.conductance.tolist() == [1.0, 2.0]
    assert restored.endpoints(1) == network.endpoints(1)


def test_load_network_by_suffix(tmp_path):
    network = build_network([(0, 1, 2.5), (1, 2, 1.0)])
    text_file = tmp_path / "path.edges"
    text_file.write_text(write_edge_list(network))
    json_file = tmp_path / "path.json"
    json_file.write_text(network_to_record(network).model_dump_json())

    for path in (text_file, json_file):
        loaded = load_network(path)
        assert loaded.num_vertices == 3
        assert loaded.conductance.tolist() == [2.5, 1.0]
    bad = tmp_path / "bad.json"
    bad.write_text('{"vertices": 2}')
    with pytest.raises(ValidationError):
        load_network(bad)


def test_edge_rows():
    network = build_network([("x", "y", 0.5), ("y", "z", 1.0)])
    assert edge_rows(network) == [{"a": 0, "b": 1, "c": 0.5, "id": 0}, {"a": 1, "b": 2, "c": 1.0, "id": 1}]


def test_network_record_needs_contiguous_ids():
    record = network_to_record(build_network([(0, 1, 1.0), (1, 2, 1.0)]))
    record.edges[1].id = 5
    with pytest.raises(ValueError):
        network_from_record(record)


def test_walk_record():
    walk = Walk([2, 0, 1, 2], [2, 0, 1])
    record = walk.to_record()
    assert record.start == 2
    assert [s.to for s in record.steps] == [0, 1, 2]
    assert Walk.from_record(record) == walk


def test_forest_record():
    forest = OrientedForest({0: OrientedEdge(0, 0, 1), 1: OrientedEdge(1, 1, 2)}, [2])
    record = forest.to_record()
    assert record.roots == [2]
    assert OrientedForest.from_record(record) == forest


def test_dot_output():
    network = build_network([("a", "b", 1.0), ("b", "c", 0.5)])
    dot = network_to_dot(network)
    assert dot.startswith("graph network {")
    assert '0 -- 1 [id="0", label="1"];' in dot
    assert '1 -- 2 [id="1", label="0.5"];' in dot

    forest = OrientedForest({0: OrientedEdge(0, 0, 1), 1: OrientedEdge(1, 1, 2)}, [2])
    dot = forest_to_dot(forest, network)
    assert '2 [label="c", shape=doublecircle];' in dot
    assert '0 -> 1 [id="0"];' in dot


def test_json_lines_are_canonical():
    line = dump_json_line({"b": np.float64(0.5), "a": Fraction(1, 3), "c": frozenset([2, 1])})
    assert line == '{"a":"1/3","b":0.5,"c":[1,2]}'
    assert format_records([{"x": 1}, {"x": 2}], "json") == '{"x":1}\n{"x":2}\n'
    assert digest("abc") == digest("abc")
    assert digest("abc") != digest("abd")


def test_csv_flattens_records():
    text = format_records([{"test": "law", "details": {"tv": 0.1, "K": [1, 2]}}, {"test": "hit"}], "csv")
    header, first, second = text.splitlines()
    assert header == "details.K,details.tv,test"
    assert first == '"[1, 2]",0.1,law'
    assert second == ",,hit"
    with pytest.raises(ValueError):
        format_records([{"x": 1}], "dot")


def test_load_config_toml(tmp_path):
    path = tmp_path / "hitting.toml"
    path.write_text(
        'kind = "hitting"\n'
        'K = [[0, 0, 0]]\n'
        'window = [0.0, 0.1]\n'
        'samples = 500\n'
        '\n'
        '[family]\n'
        'family = "grid_box"\n'
        'd = 3\n'
        'radius = 2\n'
    )
    config = load_config(path)
    assert config.kind == "hitting"
    assert config.family.d == 3
    assert config.K == [[0, 0, 0]]
    assert config.samples == 500


def test_load_config_json(tmp_path):
    path = tmp_path / "counterexample.json"
    path.write_text(json.dumps({"kind": "counterexample", "k": 4, "m": 6, "depth": 3}))
    config = load_config(path)
    assert config.m == 6

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "counterexample", "depth": 1}))
    with pytest.raises(ValidationError):
        load_config(bad)

    with pytest.raises(ValueError):
        load_config(tmp_path / "config.yaml")


def test_write_output(tmp_path, capsys):
    target = tmp_path / "nested" / "out.jsonl"
    write_output("line\n", str(target))
    assert target.read_text() == "line\n"

    write_output("line\n", None)
    assert capsys.readouterr().out == "line\n"
