import csv
import hashlib
import io
import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, TextIO, Union

import numpy as np

from app.core.network import Network, build_network
from app.core.spanning import OrientedForest
from app.models.experiment import ExperimentConfig
from app.models.records import EdgeRecord, NetworkRecord

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def _parse_label(token: str) -> Union[int, str]:
    try:
        return int(token)
    except ValueError:
        return token


def read_edge_list(text: str) -> Network:
    """
    Parse `u v c` lines into a network. Blank lines and `#` comments are
    skipped; a missing conductance means 1.
    """
    triples = []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (2, 3):
            raise ValueError(f"Line {number}: expected 'u v [c]', got {line!r}")
        c = float(fields[2]) if len(fields) == 3 else 1.0
        triples.append((_parse_label(fields[0]), _parse_label(fields[1]), c))
    return build_network(triples)


def write_edge_list(network: Network) -> str:
    return "".join(f"{a} {b} {c!r}\n" for a, b, c, _ in network.edges())


def _jsonable(label: Any) -> Any:
    if isinstance(label, tuple):
        return [_jsonable(x) for x in label]
    return label


def network_to_record(network: Network) -> NetworkRecord:
    return NetworkRecord(
        vertices=network.num_vertices,
        edges=[EdgeRecord(a=a, b=b, c=c, id=e) for a, b, c, e in network.edges()],
        labels=[_jsonable(label) for label in network.labels],
    )


def network_from_record(record: NetworkRecord) -> Network:
    edges = sorted(record.edges, key=lambda e: e.id)
    if [e.id for e in edges] != list(range(len(edges))):
        raise ValueError("Edge ids must be 0..E-1")
    labels = None
    if record.labels is not None:
        labels = [tuple(x) if isinstance(x, list) else x for x in record.labels]
    return Network(record.vertices, [e.a for e in edges], [e.b for e in edges],
                   [e.c for e in edges], labels=labels)


def _dot_label(label: Any) -> str:
    return json.dumps(str(_jsonable(label)))


def network_to_dot(network: Network) -> str:
    lines = ["graph network {"]
    for v, label in enumerate(network.labels):
        lines.append(f"  {v} [label={_dot_label(label)}];")
    for a, b, c, e in network.edges():
        lines.append(f'  {a} -- {b} [id="{e}", label="{c:g}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def forest_to_dot(forest: OrientedForest, network: Optional[Network] = None) -> str:
    """Arrows point from each vertex to its parent."""
    lines = ["digraph forest {"]
    for v in sorted(forest.vertices):
        label = network.labels[v] if network is not None else v
        shape = ", shape=doublecircle" if v in forest.roots else ""
        lines.append(f"  {v} [label={_dot_label(label)}{shape}];")
    for v, edge in sorted(forest.parents.items()):
        lines.append(f'  {v} -> {edge.head} [id="{edge.edge_id}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read an experiment config from TOML or its JSON mirror, chosen by suffix."""
    path = Path(path)
    if path.suffix == ".toml":
        with open(path, "rb") as f:
            data = tomllib.load(f)
    elif path.suffix == ".json":
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    else:
        raise ValueError(f"Unsupported config format: {path.suffix}")
    return ExperimentConfig.model_validate(data)


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (Fraction, frozenset, set)):
        return str(value) if isinstance(value, Fraction) else sorted(value)
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def dump_json_line(record: Dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), default=_to_builtin)


def _flatten(record: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat = {}
    for key, value in record.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        elif isinstance(value, (list, tuple)):
            flat[name] = json.dumps(_jsonable(value), default=_to_builtin)
        else:
            flat[name] = value
    return flat


def format_records(records: Iterable[Dict[str, Any]], fmt: str) -> str:
    """JSON lines, or CSV over the union of flattened keys."""
    records = list(records)
    if fmt == "json":
        return "".join(dump_json_line(r) + "\n" for r in records)
    if fmt == "csv":
        rows = [_flatten(r) for r in records]
        columns: List[str] = sorted({key for row in rows for key in row})
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buffer.getvalue()
    raise ValueError(f"Records cannot be written as {fmt}")


def write_output(text: str, output: Optional[str], stream: Optional[TextIO] = None):
    if output is None:
        (stream or sys.stdout).write(text)
        return
    path = Path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_network(path: Union[str, Path]) -> Network:
    """Read a network from a JSON network record (`.json`) or an edge-list text file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return network_from_record(NetworkRecord.model_validate_json(text))
    return read_edge_list(text)


def edge_rows(network: Network) -> List[Dict[str, Any]]:
    """One record per edge, for CSV output."""
    return [{"a": a, "b": b, "c": c, "id": e} for a, b, c, e in network.edges()]
