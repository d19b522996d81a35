from __future__ import annotations

from pathlib import Path

import pytest

from route_lmt.core import Direction, RequestRecord
from route_lmt.ingest import Dataset, PlantedLinear, SyntheticConfig, generate_synthetic

FIXTURE40 = Path(__file__).parent / "data" / "fixture40.jsonl"


def rec(
    record_id: str,
    direction: str = "en-zh",
    q_small: float | None = None,
    q_large: float | None = None,
    features=None,
    tokens=None,
    entropy: float | None = None,
) -> RequestRecord:
    return RequestRecord(
        id=record_id,
        direction=Direction(direction),
        q_small=q_small,
        q_large=q_large,
        features=features,
        tokens=tokens,
        first_step_entropy=entropy,
    )


@pytest.fixture(scope="session")
def planted_dataset() -> Dataset:
    """Labeled synthetic set with features and continuous planted gains."""
    dataset, report = generate_synthetic(
        SyntheticConfig(
            n=600,
            feature_dim=4,
            seed=20240501,
            gain_model=PlantedLinear(weights=(3.0, -2.0, 1.5, 0.5), bias=2.0, noise_sigma=1.0),
        )
    )
    assert report.clamped_gains == 0
    return dataset


@pytest.fixture(scope="session")
def fixture40_path() -> Path:
    return FIXTURE40
