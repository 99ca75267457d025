"""Train/test/val assignment for sub-patches.

The one content rule: a sub-patch with no building pixels is forced into the
validation set. Everything else is shuffled deterministically and cut into
contiguous blocks sized by largest-remainder apportionment.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple, Union

from .errors import BadRatios, DuplicateId, InvalidArgument

SPLIT_NAMES = ("train", "test", "val")

REASON_FORCED = "forced_empty_to_val"
REASON_RATIO = "ratio_assignment"

Entry = Union[Tuple[str, bool], "object"]


@dataclass(frozen=True)
class SplitManifest:
    assignments: Dict[str, str]
    ratios: Tuple[float, float, float]
    seed: int
    rule_trace: Dict[str, str]

    def to_json(self) -> str:
        """Canonical serialization: sorted keys, fixed separators, so equal
        manifests are byte-identical."""
        doc = {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "assignments": dict(self.assignments),
            "rule_trace": dict(self.rule_trace),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SplitManifest":
        doc = json.loads(text)
        return cls(
            assignments=dict(doc["assignments"]),
            ratios=tuple(float(r) for r in doc["ratios"]),
            seed=int(doc["seed"]),
            rule_trace=dict(doc["rule_trace"]),
        )

    def ids_for(self, split: str) -> List[str]:
        return sorted(i for i, s in self.assignments.items() if s == split)


def apportion(total: int, ratios: Sequence[float]) -> List[int]:
    """Largest-remainder block sizes; ties go to the earlier split name."""
    quotas = [r * total for r in ratios]
    sizes = [math.floor(q) for q in quotas]
    leftover = total - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:leftover]:
        sizes[i] += 1
    return sizes


def _entries(subpatches: Iterable[Entry]) -> List[Tuple[str, bool]]:
    out = []
    for s in subpatches:
        if isinstance(s, tuple):
            sid, occupied = s
        else:
            sid, occupied = s.sub_id, s.contains_building
        out.append((str(sid), bool(occupied)))
    return out


def make_split(subpatches: Iterable[Entry],
               ratios: Tuple[float, float, float] = (0.6, 0.2, 0.2),
               seed: int = 0) -> SplitManifest:
    """Assign each sub-patch to train/test/val.

    Accepts SubPatch objects or plain (id, contains_building) pairs. The
    shuffle is a Fisher-Yates pass driven by random.Random(seed), i.e.
    CPython's Mersenne Twister, over the lexicographically sorted id list, so
    the manifest depends only on the id set, the flags, the ratios and the
    seed; input order is irrelevant.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise BadRatios(f"ratios must be 3 non-negative numbers, got {ratios!r}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios sum to {sum(ratios)!r}, expected 1")

    entries = _entries(subpatches)
    seen = set()
    for sid, _ in entries:
        if sid in seen:
            raise DuplicateId(sid)
        seen.add(sid)

    assignments: Dict[str, str] = {}
    trace: Dict[str, str] = {}
    for sid, occupied in entries:
        if not occupied:
            assignments[sid] = "val"
            trace[sid] = REASON_FORCED

    pool = sorted(sid for sid, occupied in entries if occupied)
    rng = random.Random(seed)
    for i in range(len(pool) - 1, 0, -1):
        j = rng.randrange(i + 1)
        pool[i], pool[j] = pool[j], pool[i]

    n_train, n_test, _ = apportion(len(pool), ratios)
    for pos, sid in enumerate(pool):
        if pos < n_train:
            assignments[sid] = "train"
        elif pos < n_train + n_test:
            assignments[sid] = "test"
        else:
            assignments[sid] = "val"
        trace[sid] = REASON_RATIO

    return SplitManifest(assignments=assignments, ratios=tuple(ratios),
                         seed=int(seed), rule_trace=trace)


def verify_split(manifest: SplitManifest, subpatches: Iterable[Entry]) -> List[Tuple[str, str]]:
    """Check a manifest against the sub-patch list.

    Returns (kind, id) violation pairs; an empty list means the manifest is
    valid. Kinds: duplicate-id, missing-id, unknown-id, empty-patch-not-in-val.
    """
    entries = _entries(subpatches)
    report: List[Tuple[str, str]] = []
    seen = set()
    for sid, _ in entries:
        if sid in seen:
            report.append(("duplicate-id", sid))
        seen.add(sid)
    for sid, occupied in entries:
        if sid not in manifest.assignments:
            report.append(("missing-id", sid))
        elif not occupied and manifest.assignments[sid] != "val":
            report.append(("empty-patch-not-in-val", sid))
    for sid in manifest.assignments:
        if sid not in seen:
            report.append(("unknown-id", sid))
    for sid, split in manifest.assignments.items():
        if split not in SPLIT_NAMES:
            report.append(("bad-split-name", sid))
    return report
