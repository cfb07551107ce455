"""File formats: network JSON, dataset CSV, results JSON and PGM-style
binary heatmaps (PPM ``P5``)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidArgument, ParseError
from .graph import BayesNet, Dag, Dataset
from .priors import ClassOrdering, Partition, PriorKind
from .state import SamplerState


@dataclass
class NetworkFile:
    names: list[str]
    arities: np.ndarray
    dag: Dag
    net: BayesNet | None = None
    classes: list[int] | None = None
    ordering: list[int] | None = None


def network_to_json(
    dag: Dag, arities, names: Sequence[str] | None = None, cpts=None, classes=None, ordering=None
) -> dict:
    names = list(names) if names is not None else [f"X{i}" for i in range(dag.n)]
    doc = {
        "variables": [{"name": name, "arity": int(a)} for name, a in zip(names, arities)],
        "edges": [[i, j] for i, j in dag.edges()],
    }
    if cpts is not None:
        doc["cpts"] = [np.asarray(t).tolist() for t in cpts]
    if classes is not None:
        doc["classes"] = [int(c) for c in classes]
    if ordering is not None:
        doc["ordering"] = [int(o) for o in ordering]
    return doc


def write_network(path, net: BayesNet, classes=None, ordering=None) -> Path:
    path = Path(path)
    doc = network_to_json(net.dag, net.arities, net.names, net.cpts, classes, ordering)
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


def read_network(path) -> NetworkFile:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(str(exc), path) from exc
    try:
        names = [str(v["name"]) for v in doc["variables"]]
        arities = np.array([int(v["arity"]) for v in doc["variables"]], dtype=np.int64)
        dag = Dag.from_edges(len(names), doc.get("edges", []))
        net = None
        if doc.get("cpts") is not None:
            net = BayesNet(dag, arities, doc["cpts"], names)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"invalid network spec: {exc}", path) from exc
    classes = doc.get("classes")
    ordering = doc.get("ordering")
    if classes is not None and len(classes) != len(names):
        raise ParseError("classes must have one entry per variable", path)
    return NetworkFile(names, arities, dag, net, classes, ordering)


def write_dataset(path, data: Dataset) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(data.names)
        writer.writerows(data.rows.tolist())
    return path


def read_dataset(path, arities=None) -> Dataset:
    """Read a header + integer-rows CSV. Without ``arities`` each variable's
    arity is inferred as ``max(value) + 1`` (at least 2)."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise ParseError(str(exc), path) from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file, expected a header row", path, 1)
        n = len(header)
        rows = []
        for line_no, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != n:
                raise ParseError(f"expected {n} values, got {len(record)}", path, line_no)
            try:
                values = [int(v) for v in record]
            except ValueError:
                raise ParseError(f"non-integer value in {record}", path, line_no)
            if arities is not None:
                for i, v in enumerate(values):
                    if not 0 <= v < arities[i]:
                        raise ParseError(f"value {v} of {header[i]} outside arity {arities[i]}", path, line_no)
            elif any(v < 0 for v in values):
                raise ParseError("negative value", path, line_no)
            rows.append(values)
    arr = np.array(rows, dtype=np.int64).reshape(len(rows), n)
    if arities is None:
        arities = np.maximum(arr.max(axis=0) + 1, 2) if len(rows) else np.full(n, 2)
    elif len(arities) != n:
        raise ParseError(f"header has {n} columns but {len(arities)} arities were given", path, 1)
    return Dataset(arities, arr, header)


def _matrix(m) -> list[list[float]]:
    return [[float(x) for x in row] for row in np.asarray(m)]


def results_to_json(states: list[SamplerState], prior_kind, summary, meta: dict | None = None) -> dict:
    kind = PriorKind.parse(prior_kind)
    doc = {
        "prior": kind.value,
        "edge_marginals": _matrix(summary.edge_marginals),
        "coclass_marginals": _matrix(summary.coclass_marginals),
        "kl": summary.kl.to_json() if summary.kl is not None else None,
        "top_models": [
            {
                "score": float(s.log_score),
                "edges": [[i, j] for i, j in s.g.edges()],
                "classes": [int(c) for c in s.p.z] if kind.has_classes else None,
                "ordering": [int(o) for o in s.ord.o] if s.ord is not None else None,
            }
            for s in states
        ],
    }
    if meta:
        doc.update(meta)
    return doc


def dump_json(path, doc: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1, allow_nan=False) + "\n")
    return path


def read_results(path) -> tuple[dict, list[SamplerState]]:
    """Results document and its pool states (score order preserved)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        kind = PriorKind.parse(doc.get("prior", "block"))
        n = len(doc["edge_marginals"])
        states = []
        for entry in doc["top_models"]:
            g = Dag.from_edges(n, entry["edges"])
            classes = entry.get("classes")
            p = Partition(classes) if classes is not None else Partition.single(n)
            ordering = entry.get("ordering")
            ord = ClassOrdering(ordering) if ordering is not None else None
            states.append(SamplerState(g, p, ord, float(entry["score"]), kind))
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"invalid results file: {exc}", path) from exc
    return doc, states


def heatmap_bytes(matrix) -> bytes:
    """Binary PPM (P5): one byte per cell, ``round(255 * (1 - p))``, row-major."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2:
        raise InvalidArgument("heatmap needs a 2-D matrix")
    if np.any(m < 0) or np.any(m > 1):
        raise InvalidArgument("heatmap values must lie in [0, 1]")
    pixels = np.floor(255.0 * (1.0 - m) + 0.5).astype(np.uint8)
    header = f"P5\n{m.shape[1]} {m.shape[0]}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def write_heatmap(path, matrix) -> Path:
    path = Path(path)
    path.write_bytes(heatmap_bytes(matrix))
    return path


def read_heatmap(path) -> np.ndarray:
    """Pixel bytes of a P5 file as a ``(height, width)`` uint8 array."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5":
        raise ParseError("not a binary P5 image", path)
    width, height = (int(x) for x in parts[1].split())
    if int(parts[2]) != 255:
        raise ParseError("unsupported maxval", path)
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    if pixels.size != width * height:
        raise ParseError("pixel count does not match header", path)
    return pixels.reshape(height, width)


def finite_or_none(x: float):
    return x if x is not None and math.isfinite(x) else None
