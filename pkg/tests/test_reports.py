"""
Tests for the loop candidate table used by replay runs
Run with: pytest tests/
"""
import pytest

from app.exceptions import DataIntegrityError
from app.models.submap import LoopHit
from app.utils import reports

# keyframes 0..39 in four segments of ten
OWNER = {kf: kf // 10 for kf in range(40)}


def test_loop_candidates_file_to_hits(tmp_path):
    """Rows written by a run come back as one hit per querying submap"""
    path = reports.write_loop_candidates(tmp_path / "loops.csv", [LoopHit(3, 4, 35, 0, 2.5)])
    rows = reports.read_loop_candidates(path)
    assert rows == [(3, 4, 35)]
    hits = reports.loop_hits_by_segment(rows, OWNER)
    assert set(hits) == {3}
    assert (hits[3].historical, hits[3].query, hits[3].historical_segment) == (4, 35, 0)
    assert hits[3].distance == 0.0


def test_empty_loop_candidates(tmp_path):
    """A header-only file means no loops"""
    path = reports.write_loop_candidates(tmp_path / "loops.csv", [])
    assert reports.loop_hits_by_segment(reports.read_loop_candidates(path), OWNER) == {}


@pytest.mark.parametrize(
    "rows",
    [
        [(3, 4, 55)],
        [(2, 4, 35)],
        [(3, 24, 35)],
        [(3, 4, 35), (3, 5, 36)],
    ],
)
def test_inconsistent_loop_candidates(rows):
    """Unknown keyframes, wrong owners, recent history and duplicates are rejected"""
    with pytest.raises(DataIntegrityError):
        reports.loop_hits_by_segment(rows, OWNER)
