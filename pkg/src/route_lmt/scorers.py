"""Routing-score producers under one contract: higher score, higher
priority for the large model.

Bottom-p style signals (predicted or observed small-model quality) are
negated inside their scorers, so callers can always sort descending and
take the top fraction without branching on scorer kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ._hashing import keyed_unit_interval
from .core import RequestRecord
from .errors import ConfigError, IncompleteLabelsError, MissingSignalError
from .heads import LinearHead, Target
from .ingest import FreqTable

_RANDOM_DOMAIN = b"route.random"

SCORER_KINDS = (
    "length",
    "rarity",
    "entropy",
    "random",
    "learned",
    "oracle-gain",
    "oracle-quality",
)


def score_length(record: RequestRecord) -> float:
    """Token count; longer sources route first."""
    if record.tokens is None:
        raise MissingSignalError(f"record {record.id!r} has no tokens")
    return float(len(record.tokens))


def score_rarity(
    record: RequestRecord, freq_table: FreqTable, bottom_fraction: float = 0.3
) -> float:
    """Mean surprisal -ln f(w) over the least-frequent tokens.

    k = ceil(bottom_fraction * |tokens|) tokens are counted, so any
    non-empty source contributes at least one. Out-of-vocabulary tokens
    take the table's floor frequency. Natural log.
    """
    if not 0.0 < bottom_fraction <= 1.0:
        raise ConfigError(f"bottom_fraction={bottom_fraction!r} outside (0, 1]")
    if record.tokens is None or len(record.tokens) == 0:
        raise MissingSignalError(f"record {record.id!r} has no tokens to score")
    freqs = sorted(freq_table.lookup(token) for token in record.tokens)
    k = max(1, math.ceil(bottom_fraction * len(freqs) - 1e-9))
    return -sum(math.log(f) for f in freqs[:k]) / k


def score_entropy(record: RequestRecord) -> float:
    """First-decoding-step entropy of the small model, ingested upstream."""
    if record.first_step_entropy is None:
        raise MissingSignalError(f"record {record.id!r} has no first_step_entropy")
    return record.first_step_entropy


def score_random(record: RequestRecord, seed: int) -> float:
    """Uniform [0, 1) keyed-hash of (seed, record id).

    Hashing instead of consuming a shared generator makes the score a
    pure function of the record, so streaming and batch runs agree.
    """
    return keyed_unit_interval(seed, record.id, _RANDOM_DOMAIN)


def score_learned(record: RequestRecord, head: LinearHead) -> float:
    """Head prediction as a routing score.

    Quality-target heads are negated: a weak predicted small-model output
    means high upgrade priority under the uniform top-p contract.
    """
    if record.features is None:
        raise MissingSignalError(f"record {record.id!r} has no features")
    prediction = head.predict(record.features)
    return -prediction if head.target is Target.QUALITY else prediction


def score_oracle_gain(record: RequestRecord) -> float:
    """True marginal gain; optimal ranking signal under a budget."""
    return record.true_gain()


def score_oracle_quality(record: RequestRecord) -> float:
    """Negated true small-model quality (weakest outputs route first)."""
    if record.q_small is None:
        raise IncompleteLabelsError(f"record {record.id!r} lacks q_small")
    return -record.q_small


@dataclass(frozen=True)
class Scorer:
    """A configured score producer with a stable label for reports.

    Build one with `make_scorer`, which checks that the kind has the
    payload it needs (head, frequency table, seed).
    """

    kind: str
    seed: int = 0
    bottom_fraction: float = 0.3
    head: LinearHead | None = None
    freq_table: FreqTable | None = None

    @property
    def label(self) -> str:
        return self.kind

    def score(self, record: RequestRecord) -> float:
        if self.kind == "length":
            return score_length(record)
        if self.kind == "rarity":
            return score_rarity(record, self.freq_table, self.bottom_fraction)
        if self.kind == "entropy":
            return score_entropy(record)
        if self.kind == "random":
            return score_random(record, self.seed)
        if self.kind == "learned":
            return score_learned(record, self.head)
        if self.kind == "oracle-gain":
            return score_oracle_gain(record)
        if self.kind == "oracle-quality":
            return score_oracle_quality(record)
        raise ConfigError(f"unknown scorer kind {self.kind!r}")

    def score_all(self, records) -> list[tuple[str, float]]:
        return [(record.id, self.score(record)) for record in records]

    def fingerprint(self) -> str:
        """Deterministic provenance string for calibration profiles."""
        if self.kind == "random":
            return f"random(seed={self.seed})"
        if self.kind == "rarity":
            return f"rarity(bottom_fraction={self.bottom_fraction})"
        if self.kind == "learned" and self.head is not None:
            return (
                f"learned(target={self.head.target.value},"
                f"dim={self.head.dim},fit={self.head.train_fingerprint[:12]})"
            )
        return self.kind


def make_scorer(
    kind: str,
    *,
    seed: int = 0,
    bottom_fraction: float = 0.3,
    head: LinearHead | None = None,
    freq_table: FreqTable | None = None,
) -> Scorer:
    if kind not in SCORER_KINDS:
        raise ConfigError(f"unknown scorer kind {kind!r}; expected one of {SCORER_KINDS}")
    if kind == "learned" and head is None:
        raise ConfigError("learned scorer needs a head")
    if kind == "rarity" and freq_table is None:
        raise ConfigError("rarity scorer needs a frequency table")
    if not 0.0 < bottom_fraction <= 1.0:
        raise ConfigError(f"bottom_fraction={bottom_fraction!r} outside (0, 1]")
    return Scorer(
        kind=kind,
        seed=seed,
        bottom_fraction=bottom_fraction,
        head=head,
        freq_table=freq_table,
    )
