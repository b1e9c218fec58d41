"""CSV and key=value report writers, plus the loop-candidate table used by replay"""
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import pandas as pd

from app.exceptions import DataIntegrityError
from app.models.posegraph import PoseGraph
from app.models.registration import Sim3Edge
from app.models.submap import LoopHit
from app.schemas.partition import PartitionRow

PARTITION_COLUMNS = ["submap_id", "kind", "first_kf", "last_kf", "n_keyframes", "n_overlap", "loop_frame"]
EDGE_COLUMNS = ["from", "to", "kind", "s", "qx", "qy", "qz", "qw", "tx", "ty", "tz", "inlier_ratio", "accepted"]
NODE_COLUMNS = ["submap_id", "s", "qx", "qy", "qz", "qw", "tx", "ty", "tz"]
LOOP_COLUMNS = ["submap_id", "historical_keyframe", "query_keyframe"]

PathLike = Union[str, Path]


def write_partition(path: PathLike, rows: Sequence[PartitionRow]) -> Path:
    table = pd.DataFrame([row.model_dump() for row in rows], columns=PARTITION_COLUMNS + ["query_frame"])
    table[PARTITION_COLUMNS].to_csv(path, index=False)
    return Path(path)


def edge_table(edges: Sequence[Sim3Edge]) -> pd.DataFrame:
    rows = []
    for edge in edges:
        S = edge.transform
        rows.append(
            [edge.from_submap, edge.to_submap, edge.kind.value, S.scale, *S.as_quaternion(), *S.translation]
            + [edge.inlier_ratio, int(edge.accepted)]
        )
    return pd.DataFrame(rows, columns=EDGE_COLUMNS)


def write_edges(path: PathLike, edges: Sequence[Sim3Edge]) -> Path:
    edge_table(edges).to_csv(path, index=False, float_format="%.17g")
    return Path(path)


def write_graph_nodes(path: PathLike, graph: PoseGraph) -> Path:
    rows = [
        [k, graph.nodes[k].scale, *graph.nodes[k].as_quaternion(), *graph.nodes[k].translation]
        for k in graph.node_ids
    ]
    pd.DataFrame(rows, columns=NODE_COLUMNS).to_csv(path, index=False, float_format="%.17g")
    return Path(path)


def format_key_values(values: Mapping[str, object]) -> str:
    lines = []
    for key, value in values.items():
        if isinstance(value, (list, tuple)):
            value = ",".join(f"{v:.9g}" if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            value = f"{value:.9g}"
        elif value is None:
            value = "n/a"
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def write_key_values(path: PathLike, values: Mapping[str, object]) -> Path:
    Path(path).write_text(format_key_values(values), encoding="utf-8")
    return Path(path)


def write_loop_candidates(path: PathLike, hits: Sequence[LoopHit]) -> Path:
    rows = [[hit.segment, hit.historical, hit.query] for hit in hits]
    pd.DataFrame(rows, columns=LOOP_COLUMNS).to_csv(path, index=False)
    return Path(path)


def read_loop_candidates(path: PathLike) -> List[Tuple[int, int, int]]:
    """(submap_id, historical_keyframe, query_keyframe) rows"""
    try:
        table = pd.read_csv(path, comment="#")
    except (OSError, pd.errors.ParserError) as exc:
        raise DataIntegrityError(f"cannot read loop candidates {path}: {exc}") from exc
    except pd.errors.EmptyDataError:
        return []
    if list(table.columns) != LOOP_COLUMNS:
        raise DataIntegrityError(f"{path}: expected columns {LOOP_COLUMNS}")
    if table.isna().any().any():
        raise DataIntegrityError(f"{path}: missing values")
    return [tuple(int(v) for v in row) for row in table.itertuples(index=False)]


def loop_hits_by_segment(rows: Sequence[Tuple[int, int, int]], owner: Mapping[int, int]) -> Dict[int, LoopHit]:
    """
    Loop candidates as LoopHit per querying segment; `owner` maps base
    keyframes to segments. Replay files carry no positions, so distances are 0.
    """
    hits: Dict[int, LoopHit] = {}
    for segment, historical, query in rows:
        if historical not in owner or query not in owner:
            raise DataIntegrityError(f"loop candidate {historical}->{query} does not use base keyframes")
        if owner[query] != segment:
            raise DataIntegrityError(f"query keyframe {query} does not belong to submap {segment}")
        if owner[historical] >= segment - 1:
            raise DataIntegrityError(f"historical keyframe {historical} is too recent for submap {segment}")
        if segment in hits:
            raise DataIntegrityError(f"submap {segment} has more than one loop candidate")
        hits[segment] = LoopHit(segment, historical, query, owner[historical])
    return hits
