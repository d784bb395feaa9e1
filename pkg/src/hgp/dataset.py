"""Dataset container, temporal splits, and the TSV / JSON directory format.

Directory layout::

    edges.tsv         src_type src_id dst_type dst_id edge_type timestamp
    nodes_group.tsv   node_id + attribute columns (also nodes_user / nodes_item)
    truth.tsv         node_type node_id community   (synthetic data only)
    manifest.json     generator config, schema, counts, oracle_auc

Ids in files are per-type; loading compacts them to dense global indices
ordered Group, User, Item and by id within a type.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ctr import Pairs, observed_keys, sample_negatives
from .features import schema_from_json, schema_to_json, validate_attributes
from .hetgraph import EdgeType, HetGraph, NodeType, build_graph
from .metrics import DEFAULT_SPLIT, roc_auc, temporal_split
from .numerics import make_rng

EVAL_STREAM = 1


class DatasetError(ValueError):
    pass


@dataclass
class Splits:
    train_graph: HetGraph
    train: Pairs  # positives only; negatives are drawn per epoch
    validation: Pairs  # positives + fixed negatives
    test: Pairs
    positive_keys: np.ndarray  # every observed user-item key, all splits

    def check_disjoint(self) -> None:
        """Leakage guard: no labeled pair may appear in two splits."""
        n = self.train_graph.num_nodes
        sets = [set(p.keys(n).tolist()) for p in (self.train, self.validation, self.test)]
        names = ("train", "validation", "test")
        for a in range(3):
            for b in range(a + 1, 3):
                if sets[a] & sets[b]:
                    raise DatasetError(f"{names[a]} and {names[b]} splits share pairs")


@dataclass
class Dataset:
    graph: HetGraph  # all observed edges
    schema: dict
    attributes: dict
    positives: Pairs
    truth: object | None
    manifest: dict
    seed: int

    def splits(self, fractions=DEFAULT_SPLIT, neg_ratio: float = 1.0) -> Splits:
        """Temporal split of the ItemUser positives.

        The training graph keeps every GroupUser edge but only ItemUser edges
        from the training period. Validation and test receive negatives drawn
        once from a fixed stream of the dataset seed, never colliding with any
        observed pair or with each other.
        """
        train, val, test = temporal_split(self.positives, fractions)
        gu = self.graph.edges[EdgeType.GroupUser]
        gu_ts = self.graph.timestamps.get(EdgeType.GroupUser)
        nodes = [(i, NodeType(t)) for i, t in enumerate(self.graph.node_types)]
        edges = [(int(a), int(b), EdgeType.GroupUser, 0 if gu_ts is None else int(gu_ts[j]))
                 for j, (a, b) in enumerate(gu)]
        edges += [(int(i), int(u), EdgeType.ItemUser, int(d))
                  for u, i, d in zip(train.users, train.items, train.days)]
        train_graph = build_graph(nodes, edges)
        all_keys = np.unique(np.concatenate([observed_keys(self.graph), self.positives.keys(self.graph.num_nodes)]))
        rng = make_rng([self.seed, EVAL_STREAM])
        out = []
        taken = all_keys
        for part in (val, test):
            # excluding earlier draws keeps the labeled splits disjoint
            neg = sample_negatives(self.graph, part, neg_ratio, rng, exclude=taken)
            taken = np.concatenate([taken, neg.keys(self.graph.num_nodes)])
            out.append(part.concat(neg))
        return Splits(train_graph, train, out[0], out[1], all_keys)

    def oracle_auc(self, fractions=DEFAULT_SPLIT) -> float:
        """ROC-AUC of the exact generating probabilities on the test split."""
        from .datagen import oracle_score

        if self.truth is None:
            raise DatasetError("dataset carries no planted truth")
        test = self.splits(fractions).test
        return roc_auc(oracle_score(self.truth, test.users, test.items), test.labels)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _local_ids(graph: HetGraph):
    """Global index -> (type, per-type id)."""
    local = np.zeros(graph.num_nodes, dtype=np.int64)
    for t in NodeType:
        idx = graph.nodes_of(t)
        local[idx] = np.arange(idx.size)
    return local


def save_dataset(ds: Dataset, out: Path) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    g = ds.graph
    local = _local_ids(g)
    types = g.node_types
    with open(out / "edges.tsv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["src_type", "src_id", "dst_type", "dst_id", "edge_type", "timestamp"])
        for r in EdgeType:
            ts = g.timestamps.get(r)
            for j, (a, b) in enumerate(g.edges[r]):
                # User endpoint written second
                if types[a] == NodeType.User:
                    a, b = b, a
                w.writerow([NodeType(types[a]).name, local[a], NodeType(types[b]).name, local[b],
                            r.name, 0 if ts is None else int(ts[j])])
    for t in NodeType:
        attrs = ds.schema.get(t, [])
        with open(out / f"nodes_{t.name.lower()}.tsv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["node_id"] + [a.name for a in attrs])
            table = ds.attributes.get(t, {})
            for k in range(g.nodes_of(t).size):
                row = [k]
                for a in attrs:
                    v = table[a.name][k]
                    row.append(int(v) if a.kind == "categorical" else ",".join(_fmt(x) for x in v))
                w.writerow(row)
    if ds.truth is not None:
        with open(out / "truth.tsv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["node_type", "node_id", "community"])
            for v in range(g.num_nodes):
                w.writerow([NodeType(types[v]).name, local[v], int(ds.truth.community[v])])
    manifest = dict(ds.manifest)
    manifest["schema"] = schema_to_json(ds.schema)
    manifest["seed"] = ds.seed
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_tsv(path: Path):
    if not path.exists():
        raise DatasetError(f"missing file {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows:
        raise DatasetError(f"{path} is empty")
    return rows[0], rows[1:]


def load_dataset(path: Path) -> Dataset:
    from .datagen import PlantedTruth

    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.exists():
        raise DatasetError(f"missing file {mpath}")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    schema = schema_from_json(manifest["schema"])

    ids = {}
    raw_cols = {}
    for t in NodeType:
        header, rows = _read_tsv(path / f"nodes_{t.name.lower()}.tsv")
        attrs = schema.get(t, [])
        if header != ["node_id"] + [a.name for a in attrs]:
            raise DatasetError(f"nodes_{t.name.lower()}.tsv header {header} does not match schema")
        local = [int(r[0]) for r in rows]
        if len(set(local)) != len(local):
            raise DatasetError(f"duplicate node id in nodes_{t.name.lower()}.tsv")
        ids[t] = local
        raw_cols[t] = (attrs, rows)

    # id compaction: Group, User, Item blocks, ascending id inside each
    index = {}
    nodes = []
    for t in NodeType:
        for k in sorted(ids[t]):
            index[(t, k)] = len(nodes)
            nodes.append((len(nodes), t))

    attributes = {}
    for t in NodeType:
        attrs, rows = raw_cols[t]
        rows = sorted(rows, key=lambda r: int(r[0]))
        table = {}
        for j, a in enumerate(attrs, start=1):
            if a.kind == "categorical":
                table[a.name] = np.array([int(r[j]) for r in rows], dtype=np.int64)
            else:
                table[a.name] = np.array([[float(x) for x in r[j].split(",")] for r in rows],
                                         dtype=np.float64).reshape(len(rows), a.size)
        attributes[t] = table

    header, rows = _read_tsv(path / "edges.tsv")
    if header != ["src_type", "src_id", "dst_type", "dst_id", "edge_type", "timestamp"]:
        raise DatasetError(f"edges.tsv header {header} is not the expected edge schema")
    edges = []
    for line, r in enumerate(rows, start=2):
        try:
            a = index[(NodeType[r[0]], int(r[1]))]
            b = index[(NodeType[r[2]], int(r[3]))]
            et = EdgeType[r[4]]
            day = int(r[5])
        except (KeyError, ValueError, IndexError) as exc:
            raise DatasetError(f"edges.tsv line {line}: cannot parse {r!r} ({exc})") from None
        edges.append((a, b, et, day))
    graph = build_graph(nodes, edges)
    validate_attributes(graph, schema, attributes)
    # positives mirror the deduplicated ItemUser edges
    e = graph.edges[EdgeType.ItemUser]
    ts = graph.timestamps[EdgeType.ItemUser]
    t = graph.node_types
    users = np.where(t[e[:, 0]] == NodeType.User, e[:, 0], e[:, 1])
    items = np.where(t[e[:, 0]] == NodeType.User, e[:, 1], e[:, 0])
    positives = Pairs(users, items, np.ones(users.size, dtype=np.int64), ts.copy())

    truth = None
    tpath = path / "truth.tsv"
    if tpath.exists():
        _, trows = _read_tsv(tpath)
        community = np.zeros(graph.num_nodes, dtype=np.int64)
        for r in trows:
            community[index[(NodeType[r[0]], int(r[1]))]] = int(r[2])
        gen = manifest.get("generator", {})
        truth = PlantedTruth(community, float(gen["p_in"]), float(gen["p_out"]), graph.node_types)
    return Dataset(graph, schema, attributes, positives, truth, manifest, int(manifest.get("seed", 0)))
