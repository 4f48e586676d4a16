"""Shared fixtures: workspaces, a small CSV log, and its column mapping."""

from __future__ import annotations

import json

import pytest

from forager.ingest import ColumnMapping, SegmentationPolicy
from forager.model import ActionType
from forager.store import Workspace

SAMPLE_CSV = b"""uid,ts,act,text,doc,ans
u1,1000,Q,best espresso machine under $500,,false
u1,5000,C,espresso reviews,doc-1,false
u1,9000,Q,laptops,,false
u1,12000,Q,lightweight laptops for travel,,false
u1,15000,C,travel laptops roundup,doc-2,false
u2,2000,Q,capital of france,,true
u2,2100000,Q,weather paris,,false
u2,2106000,Q,weather paris hourly,,false
u2,2112000,Q,paris forecast,,false
"""


@pytest.fixture
def mapping() -> ColumnMapping:
    return ColumnMapping(
        user_id_col="uid",
        timestamp_col="ts",
        content_col="text",
        timestamp_format="epoch_ms",
        action_col="act",
        action_value_map={"Q": ActionType.QUERY, "C": ActionType.CLICK},
        content_id_col="doc",
        answer_present_col="ans",
    )


@pytest.fixture
def mapping_json(mapping) -> str:
    return json.dumps({
        "user_id_col": "uid",
        "timestamp_col": "ts",
        "content_col": "text",
        "timestamp_format": "epoch_ms",
        "action_col": "act",
        "action_value_map": {"Q": "QUERY", "C": "CLICK"},
        "content_id_col": "doc",
        "answer_present_col": "ans",
    })


@pytest.fixture
def ws(tmp_path) -> Workspace:
    return Workspace(tmp_path / "ws")


@pytest.fixture
def sample_dataset(ws, mapping) -> tuple[Workspace, str]:
    """A workspace holding the sample log, gap-segmented."""
    dataset_id, _ = ws.ingest_dataset(
        SAMPLE_CSV, "csv", mapping, SegmentationPolicy(), name="sample")
    return ws, dataset_id
