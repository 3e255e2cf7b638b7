"""Implicit-feedback interaction data: loading, k-core filtering and splitting."""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import IO, Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class ParseError(ValueError):
    """Malformed interaction input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Binary user x item purchase matrix stored as a canonical record list.

    Records are kept sorted by ``(user, item)`` without duplicates, so two
    matrices holding the same record set compare equal.
    """

    users: np.ndarray
    items: np.ndarray
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.int64).ravel()
        items = np.asarray(self.items, dtype=np.int64).ravel()
        if users.shape != items.shape:
            raise ValueError("users and items must have the same length")
        n_users, n_items = len(self.user_ids), len(self.item_ids)
        if users.size and (users.min() < 0 or users.max() >= n_users):
            raise ValueError("user index out of range")
        if items.size and (items.min() < 0 or items.max() >= n_items):
            raise ValueError("item index out of range")
        if len(set(self.user_ids)) != n_users or len(set(self.item_ids)) != n_items:
            raise ValueError("external ids must be unique")
        keys = np.unique(users * max(n_items, 1) + items)
        users, items = np.divmod(keys, max(n_items, 1))
        users.setflags(write=False)
        items.setflags(write=False)
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "user_ids", tuple(self.user_ids))
        object.__setattr__(self, "item_ids", tuple(self.item_ids))

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def __len__(self) -> int:
        return int(self.users.size)

    def __eq__(self, other):
        if not isinstance(other, InteractionMatrix):
            return NotImplemented
        return (
            self.user_ids == other.user_ids
            and self.item_ids == other.item_ids
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.items, other.items)
        )

    @property
    def records(self) -> set[tuple[int, int]]:
        return set(zip(self.users.tolist(), self.items.tolist()))

    def with_records(self, users, items) -> "InteractionMatrix":
        """Same index spaces, different record set."""
        return InteractionMatrix(users, items, self.user_ids, self.item_ids)

    def to_csr(self) -> sp.csr_matrix:
        data = np.ones(len(self), dtype=np.float64)
        return sp.csr_matrix(
            (data, (self.users, self.items)), shape=(self.n_users, self.n_items)
        )

    def user_degrees(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.n_users)

    def item_degrees(self) -> np.ndarray:
        return np.bincount(self.items, minlength=self.n_items)

    def items_of(self, u: int) -> np.ndarray:
        lo, hi = np.searchsorted(self.users, [u, u + 1])
        return self.items[lo:hi]


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    train: InteractionMatrix
    validation: InteractionMatrix
    test: InteractionMatrix
    # (user, item) rows dropped from validation/test because they were cold
    cold_removed: np.ndarray = field(
        default_factory=lambda: np.zeros((0, 2), dtype=np.int64)
    )


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


_HEADER_TOKENS = {"user", "user_id", "userid", "item", "item_id", "itemid", "uid", "iid"}


def _looks_like_header(first: list[str], second: list[str] | None) -> bool:
    if _is_number(first[1]):
        return False
    if {f.strip().lower() for f in first} & _HEADER_TOKENS:
        return True
    return second is not None and len(second) >= 2 and _is_number(second[1])


def _record_year(value: str) -> int | None:
    try:
        x = float(value)
    except ValueError:
        return None
    if not math.isfinite(x):
        return None
    if 1000 <= x <= 9999:
        return int(x)
    if x >= 1e8:
        # unix seconds (or milliseconds)
        if x >= 1e11:
            x /= 1000.0
        return datetime.fromtimestamp(x, tz=timezone.utc).year
    return None


def load_interactions(
    source: IO[bytes] | str | os.PathLike,
    format: str = "csv",
    min_year: int | None = None,
) -> InteractionMatrix:
    """Parse ``user_id<sep>item_id[<sep>extra...]`` lines.

    Indices are assigned by first appearance of each external id and
    duplicate (user, item) lines collapse into one record. A single header
    line is skipped when its second field is non-numeric and either a field
    names a user/item column or the next line's second field is numeric.

    When ``min_year`` is given, records whose third column parses as a year
    (a four-digit year or a unix timestamp) earlier than ``min_year`` are
    dropped; records without a parseable year are kept.
    """
    if format not in ("csv", "tsv"):
        raise ValueError(f"unknown format {format!r}")
    sep = "," if format == "csv" else "\t"
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            raw = fh.read()
    else:
        raw = source.read()
    text = raw.decode("utf-8-sig") if isinstance(raw, bytes) else raw

    lines = [(n, line) for n, line in enumerate(io.StringIO(text), start=1)]
    lines = [(n, line.rstrip("\r\n")) for n, line in lines if line.strip()]
    if not lines:
        raise ParseError("empty input")

    rows: list[tuple[int, list[str]]] = []
    for n, line in lines:
        fields = [f.strip() for f in line.split(sep)]
        if len(fields) < 2 or not fields[0] or not fields[1]:
            raise ParseError(
                f"expected at least 2 {format} fields, got {line!r}", line=n
            )
        rows.append((n, fields))

    second = rows[1][1] if len(rows) > 1 else None
    if _looks_like_header(rows[0][1], second):
        rows = rows[1:]
    if not rows:
        raise ParseError("no records after header")

    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    users, items = [], []
    for _, fields in rows:
        if min_year is not None and len(fields) >= 3:
            year = _record_year(fields[2])
            if year is not None and year < min_year:
                continue
        u = user_index.setdefault(fields[0], len(user_index))
        i = item_index.setdefault(fields[1], len(item_index))
        users.append(u)
        items.append(i)
    if not users:
        raise ParseError("no records left after year filter")
    return InteractionMatrix(
        np.array(users), np.array(items), tuple(user_index), tuple(item_index)
    )


def _compact(R: InteractionMatrix, users: np.ndarray, items: np.ndarray) -> InteractionMatrix:
    """Drop vertices without records, re-indexing in original order."""
    keep_u = np.unique(users)
    keep_i = np.unique(items)
    return InteractionMatrix(
        np.searchsorted(keep_u, users),
        np.searchsorted(keep_i, items),
        tuple(R.user_ids[k] for k in keep_u),
        tuple(R.item_ids[k] for k in keep_i),
    )


def k_core_filter(R: InteractionMatrix, k: int) -> InteractionMatrix:
    """Remove users and items with fewer than ``k`` records until a fixpoint."""
    if k < 1:
        raise ValueError("k must be >= 1")
    users, items = R.users, R.items
    while True:
        du = np.bincount(users, minlength=R.n_users)
        di = np.bincount(items, minlength=R.n_items)
        keep = (du[users] >= k) & (di[items] >= k)
        if keep.all():
            break
        users, items = users[keep], items[keep]
    if users.size == len(R) and (R.user_degrees() > 0).all() and (R.item_degrees() > 0).all():
        return R
    return _compact(R, users, items)


def split_dataset(
    R: InteractionMatrix,
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> DatasetSplit:
    """Random train/validation/test split with cold-record removal.

    Validation and test receive ``floor(|R| * ratio)`` records each and the
    remainder goes to train. Held-out records whose user or item has no
    train record are deleted.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive fractions")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    n = len(R)
    if n < 3:
        raise ValueError(f"need at least 3 records to split, got {n}")
    n_valid = int(math.floor(n * ratios[1] + 1e-9))
    n_test = int(math.floor(n * ratios[2] + 1e-9))
    n_train = n - n_valid - n_test

    perm = np.random.default_rng(seed).permutation(n)
    parts = np.split(perm, [n_train, n_train + n_valid])
    tu, ti = R.users[parts[0]], R.items[parts[0]]
    seen_u = np.zeros(R.n_users, dtype=bool)
    seen_i = np.zeros(R.n_items, dtype=bool)
    seen_u[tu] = True
    seen_i[ti] = True

    held = []
    removed = []
    for idx in parts[1:]:
        u, i = R.users[idx], R.items[idx]
        warm = seen_u[u] & seen_i[i]
        held.append(R.with_records(u[warm], i[warm]))
        removed.append(np.column_stack([u[~warm], i[~warm]]))
    cold = np.concatenate(removed).astype(np.int64)
    cold = cold[np.lexsort((cold[:, 1], cold[:, 0]))]
    return DatasetSplit(R.with_records(tu, ti), held[0], held[1], cold)


# -- split files ------------------------------------------------------------

SPLIT_NAMES = ("train", "validation", "test")


def _write_records(path, R: InteractionMatrix) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, i in zip(R.users.tolist(), R.items.tolist()):
            fh.write(f"{u}\t{i}\n")


def _write_ids(path, ids: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, ext in enumerate(ids):
            fh.write(f"{k}\t{ext}\n")


def _read_ids(path) -> tuple[str, ...]:
    ids = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            idx, _, ext = line.partition("\t")
            if int(idx) != len(ids):
                raise ParseError(f"id map out of order in {path}", line=n)
            ids.append(ext)
    return tuple(ids)


def _read_records(path, user_ids, item_ids) -> InteractionMatrix:
    with open(path, encoding="utf-8") as fh:
        text = fh.read().split()
    data = np.array(text, dtype=np.int64).reshape(-1, 2)
    return InteractionMatrix(data[:, 0], data[:, 1], user_ids, item_ids)


def write_split(split: DatasetSplit, directory) -> None:
    """Write ``train/validation/test.tsv`` plus ``users.tsv``/``items.tsv`` id maps."""
    os.makedirs(directory, exist_ok=True)
    for name in SPLIT_NAMES:
        _write_records(os.path.join(directory, f"{name}.tsv"), getattr(split, name))
    _write_ids(os.path.join(directory, "users.tsv"), split.train.user_ids)
    _write_ids(os.path.join(directory, "items.tsv"), split.train.item_ids)


def read_split(directory) -> DatasetSplit:
    user_ids = _read_ids(os.path.join(directory, "users.tsv"))
    item_ids = _read_ids(os.path.join(directory, "items.tsv"))
    parts = [
        _read_records(os.path.join(directory, f"{name}.tsv"), user_ids, item_ids)
        for name in SPLIT_NAMES
    ]
    return DatasetSplit(*parts)
