"""Dataset loading, class-disjoint splitting, low-data profiles, and
C-way K-shot episode sampling with unlabeled batches.

Datasets are JSON-lines files with fields "text" (string), "label" (string)
and an optional "domain" (string). All sampling takes explicit RNGs or seeds;
class names are sorted before any random draw so results do not depend on
hash ordering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import tokenize

TRAIN, VALID, TEST = "train", "valid", "test"
PARTS = (TRAIN, VALID, TEST)


@dataclass
class Dataset:
    """Labeled utterances with an optional domain tag per class."""

    records: list[tuple[str, str]]
    domains: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self._by_class: dict[str, list[int]] = {}
        for i, (_, label) in enumerate(self.records):
            self._by_class.setdefault(label, []).append(i)

    @property
    def classes(self) -> list[str]:
        return sorted(self._by_class)

    def class_records(self, label: str) -> list[tuple[str, str]]:
        return [self.records[i] for i in self._by_class[label]]

    def class_size(self, label: str) -> int:
        return len(self._by_class[label])

    def texts(self) -> list[str]:
        return [text for text, _ in self.records]

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class ClassSplit:
    """Pairwise-disjoint train/valid/test class-name partitions."""

    train_classes: frozenset[str]
    valid_classes: frozenset[str]
    test_classes: frozenset[str]

    def __post_init__(self):
        if (
            self.train_classes & self.valid_classes
            or self.train_classes & self.test_classes
            or self.valid_classes & self.test_classes
        ):
            raise ValueError("split parts must be pairwise disjoint")

    def part(self, name: str) -> frozenset[str]:
        if name == TRAIN:
            return self.train_classes
        if name == VALID:
            return self.valid_classes
        if name == TEST:
            return self.test_classes
        raise ValueError(f"unknown split part: {name!r}")


@dataclass
class Episode:
    """One C-way K-shot task: labeled support/query sets plus unlabeled texts."""

    support: list[tuple[str, str]]
    query: list[tuple[str, str]]
    unlabeled: list[str]
    episode_classes: list[str]


def load_dataset(path: str | Path) -> Dataset:
    """Parse a JSONL dataset; malformed lines fail with their line number."""
    path = Path(path)
    records: list[tuple[str, str]] = []
    domains: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or "text" not in obj or "label" not in obj:
                raise ValueError(f'{path}:{lineno}: record must have "text" and "label"')
            text, label = obj["text"], obj["label"]
            if not isinstance(text, str) or not isinstance(label, str) or not label:
                raise ValueError(f"{path}:{lineno}: text and label must be non-empty strings")
            if not tokenize(text):
                raise ValueError(f"{path}:{lineno}: text is empty after tokenization")
            domain = obj.get("domain")
            if domain is not None:
                if label in domains and domains[label] != domain:
                    raise ValueError(f"{path}:{lineno}: class {label!r} has conflicting domains")
                domains[label] = str(domain)
            records.append((text, label))
    if not records:
        raise ValueError(f"{path}: dataset file is empty")
    return Dataset(records=records, domains=domains)


def _part_sizes(n_classes: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    n_train = round(ratios[0] * n_classes)
    n_valid = round(ratios[1] * n_classes)
    n_test = n_classes - n_train - n_valid
    if min(n_train, n_valid, n_test) < 1:
        raise ValueError(f"{n_classes} classes cannot fill all three parts with ratios {ratios}")
    return n_train, n_valid, n_test


def split_classes(
    dataset: Dataset,
    ratios: tuple[float, float, float] = (0.5, 0.2, 0.3),
    seed: int = 0,
    group_by_domain: bool = False,
) -> ClassSplit:
    """Disjoint class split; with group_by_domain no domain straddles parts."""
    classes = dataset.classes
    n_train, n_valid, _ = _part_sizes(len(classes), ratios)
    rng = np.random.default_rng(seed)

    if group_by_domain:
        domains = sorted({dataset.domains.get(c, c) for c in classes})
        if len(domains) < 3:
            raise ValueError("group_by_domain needs at least 3 domains")
        order = [domains[i] for i in rng.permutation(len(domains))]
        by_domain = {
            d: [c for c in classes if dataset.domains.get(c, c) == d] for d in domains
        }
        parts: list[list[str]] = [[], [], []]
        quota = (n_train, n_valid)
        current = 0
        for i, domain in enumerate(order):
            remaining = len(order) - i
            # advance once the quota is met, or to keep later parts non-empty
            while current < 2 and parts[current] and (
                len(parts[current]) >= quota[current] or remaining <= 2 - current
            ):
                current += 1
            parts[current].extend(by_domain[domain])
        train, valid, test = parts
    else:
        order = [classes[i] for i in rng.permutation(len(classes))]
        train = order[:n_train]
        valid = order[n_train : n_train + n_valid]
        test = order[n_train + n_valid :]

    return ClassSplit(
        train_classes=frozenset(train),
        valid_classes=frozenset(valid),
        test_classes=frozenset(test),
    )


def restrict_low_profile(
    dataset: Dataset, split: ClassSplit, n_per_class: int = 10, seed: int = 0
) -> Dataset:
    """Cap training-class records at n_per_class; valid/test classes untouched."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    keep: set[int] = set()
    for label in dataset.classes:
        indices = dataset._by_class[label]
        if label in split.train_classes and len(indices) > n_per_class:
            chosen = rng.choice(len(indices), size=n_per_class, replace=False)
            keep.update(indices[i] for i in chosen)
        else:
            keep.update(indices)
    records = [rec for i, rec in enumerate(dataset.records) if i in keep]
    return Dataset(records=records, domains=dict(dataset.domains))


def sample_episode(
    dataset: Dataset,
    split: ClassSplit,
    part: str,
    n_way: int,
    k_shot: int,
    query_per_class: int,
    n_unlabeled: int,
    rng: np.random.Generator,
) -> Episode:
    """Sample a C-way K-shot episode from one split part.

    Unlabeled texts are drawn uniformly from the whole dataset, regardless of
    the split part (they may come from any class, including test classes).
    """
    pool = sorted(split.part(part))
    if len(pool) < n_way:
        raise ValueError(f"part {part!r} has {len(pool)} classes, needs {n_way}")
    chosen = [pool[i] for i in rng.choice(len(pool), size=n_way, replace=False)]

    support: list[tuple[str, str]] = []
    query: list[tuple[str, str]] = []
    per_class = k_shot + query_per_class
    for label in chosen:
        records = dataset.class_records(label)
        if len(records) < per_class:
            raise ValueError(
                f"class {label!r} has {len(records)} records, needs {per_class}"
            )
        picks = rng.choice(len(records), size=per_class, replace=False)
        support.extend(records[i] for i in picks[:k_shot])
        query.extend(records[i] for i in picks[k_shot:])

    if n_unlabeled > len(dataset):
        raise ValueError(f"cannot draw {n_unlabeled} unlabeled texts from {len(dataset)} records")
    unlabeled_ids = rng.choice(len(dataset), size=n_unlabeled, replace=False)
    unlabeled = [dataset.records[i][0] for i in unlabeled_ids]

    return Episode(support=support, query=query, unlabeled=unlabeled, episode_classes=chosen)
