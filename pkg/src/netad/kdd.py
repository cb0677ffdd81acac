"""KDD Cup 99 ingestion: record parsing, attack-category mapping, splits.

The input format is the public KDD text file: one connection record per
line, 42 comma-separated fields, the 42nd being the label with a trailing
period. Records keep their original file index, so identity (not value
equality) defines set membership -- the file contains duplicate rows.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass
from enum import IntEnum
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import NonNumericField, UnknownLabel, WrongFieldCount

# Canonical 41-feature column order of the KDD record format.
FEATURE_NAMES = (
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes",
    "land", "wrong_fragment", "urgent", "hot", "num_failed_logins",
    "logged_in", "num_compromised", "root_shell", "su_attempted", "num_root",
    "num_file_creations", "num_shells", "num_access_files",
    "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
    "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate",
    "srv_rerror_rate", "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate",
    "dst_host_count", "dst_host_srv_count", "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate", "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate", "dst_host_serror_rate",
    "dst_host_srv_serror_rate", "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
)

CATEGORICAL_NAMES = ("protocol_type", "service", "flag")
CATEGORICAL_POSITIONS = (1, 2, 3)

# Numeric feature names in record order (everything except the 3 categoricals).
NUMERIC_NAMES = tuple(n for n in FEATURE_NAMES if n not in CATEGORICAL_NAMES)
NUMERIC_POSITIONS = tuple(i for i, n in enumerate(FEATURE_NAMES) if n not in CATEGORICAL_NAMES)

# Rate-typed fields are constrained to [0, 1] by the format.
RATE_NAMES = tuple(n for n in NUMERIC_NAMES if n.endswith("_rate"))
RATE_INDICES = tuple(i for i, n in enumerate(NUMERIC_NAMES) if n.endswith("_rate"))

N_FEATURES = len(FEATURE_NAMES)
N_NUMERIC = len(NUMERIC_NAMES)


class Category(IntEnum):
    """Five-way attack taxonomy; the integer values are the class codes."""

    NORMAL = 0
    DOS = 1
    PROBE = 2
    R2L = 3
    U2R = 4


_CATEGORY_BY_TOKEN = {c.name.lower(): c for c in Category}


def _load_attack_map() -> dict[str, Category]:
    text = resources.files("netad.data").joinpath("attack_categories.txt").read_text()
    mapping: dict[str, Category] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        label, token = line.split()
        mapping[label] = _CATEGORY_BY_TOKEN[token]
    return mapping


ATTACK_CATEGORIES: dict[str, Category] = _load_attack_map()


def map_attack_category(raw_label: str) -> Category:
    """Map a raw label (trailing period already stripped) to its category."""
    try:
        return ATTACK_CATEGORIES[raw_label]
    except KeyError:
        raise UnknownLabel(f"unknown attack label {raw_label!r}", column="label") from None


@dataclass(frozen=True, slots=True)
class Record:
    """One parsed 41-feature KDD connection record."""

    index: int  # original file position (0-based); identity for set membership
    duration: int
    protocol_type: str
    service: str
    flag: str
    numerics: np.ndarray  # all 38 numeric features (duration included) in record order
    raw_label: str
    category: Category
    line: str  # original text, label and trailing period included, no newline

    def serialize(self) -> str:
        """Return the original file line byte-for-byte."""
        return self.line

    def categorical(self, name: str) -> str:
        by_name = {"protocol_type": self.protocol_type,
                   "service": self.service, "flag": self.flag}
        return by_name[name]


def _check_numerics(numerics: np.ndarray, fields: Sequence[str], line_no: int | None) -> None:
    for k in range(N_NUMERIC):
        if not np.isfinite(numerics[k]):
            raise NonNumericField(
                f"non-finite value {fields[k]!r}", line_no=line_no, column=NUMERIC_NAMES[k],
            )
    if numerics[0] < 0 or numerics[0] != int(numerics[0]):
        raise NonNumericField(
            f"duration must be a non-negative integer, got {fields[0]!r}",
            line_no=line_no, column="duration",
        )
    for k in RATE_INDICES:
        v = numerics[k]
        if not (0.0 <= v <= 1.0):
            raise NonNumericField(
                f"rate field out of [0,1]: {v!r}", line_no=line_no, column=NUMERIC_NAMES[k],
            )


def parse_record(line: str, index: int = 0, line_no: int | None = None) -> Record:
    """Parse one KDD text line into a Record.

    Raises WrongFieldCount / NonNumericField / UnknownLabel naming the
    offending column (and the 1-based line number when given).
    """
    stripped = line.rstrip("\r\n")
    fields = stripped.split(",")
    if len(fields) != N_FEATURES + 1:
        raise WrongFieldCount(
            f"expected {N_FEATURES + 1} comma-separated fields, got {len(fields)}",
            line_no=line_no,
        )
    label_field = fields[-1]
    if not label_field.endswith("."):
        raise UnknownLabel(
            f"label field {label_field!r} lacks the trailing period",
            line_no=line_no, column="label",
        )
    raw_label = label_field[:-1]
    try:
        category = ATTACK_CATEGORIES[raw_label]
    except KeyError:
        raise UnknownLabel(
            f"unknown attack label {raw_label!r}", line_no=line_no, column="label"
        ) from None

    numerics = np.empty(N_NUMERIC, dtype=np.float64)
    for k, pos in enumerate(NUMERIC_POSITIONS):
        try:
            numerics[k] = float(fields[pos])
        except ValueError:
            raise NonNumericField(
                f"non-numeric value {fields[pos]!r}",
                line_no=line_no, column=FEATURE_NAMES[pos],
            ) from None
    _check_numerics(numerics, [fields[p] for p in NUMERIC_POSITIONS], line_no)
    numerics.setflags(write=False)
    return Record(
        index=index,
        duration=int(numerics[0]),
        protocol_type=fields[1],
        service=fields[2],
        flag=fields[3],
        numerics=numerics,
        raw_label=raw_label,
        category=category,
        line=stripped,
    )


class Dataset:
    """An ordered, immutable collection of Records backed by columnar arrays.

    Column storage keeps the 494k-record 10% file affordable; Record views
    are materialized on demand and carry their original file index.
    """

    def __init__(
        self,
        numerics: np.ndarray,          # (n, 38) float64
        categoricals: list[list[str]],  # 3 lists of n tokens, record order
        raw_labels: list[str],
        categories: np.ndarray,        # (n,) int8 class codes
        lines: list[str],
        indices: np.ndarray,           # (n,) original file positions
        source_path: str = "",
        checksum: str = "",
    ):
        n = len(lines)
        assert numerics.shape == (n, N_NUMERIC)
        assert all(len(col) == n for col in categoricals)
        assert len(raw_labels) == n and len(categories) == n and len(indices) == n
        self.numerics = numerics
        self.categoricals = categoricals
        self.raw_labels = raw_labels
        self.categories = categories
        self.lines = lines
        self.indices = indices
        self.source_path = source_path
        self.checksum = checksum
        self.numerics.setflags(write=False)
        self.categories.setflags(write=False)
        self.indices.setflags(write=False)

    def __len__(self) -> int:
        return len(self.lines)

    def __getitem__(self, i: int) -> Record:
        return Record(
            index=int(self.indices[i]),
            duration=int(self.numerics[i, 0]),
            protocol_type=self.categoricals[0][i],
            service=self.categoricals[1][i],
            flag=self.categoricals[2][i],
            numerics=self.numerics[i],
            raw_label=self.raw_labels[i],
            category=Category(int(self.categories[i])),
            line=self.lines[i],
        )

    def __iter__(self) -> Iterator[Record]:
        for i in range(len(self)):
            yield self[i]

    @property
    def records(self) -> "Dataset":
        return self

    def category_counts(self) -> dict[Category, int]:
        counts = np.bincount(self.categories, minlength=len(Category))
        return {c: int(counts[c.value]) for c in Category}

    def take(self, positions: np.ndarray) -> "Dataset":
        """Sub-dataset at the given positions (kept in ascending file order)."""
        positions = np.sort(np.asarray(positions, dtype=np.int64))
        return Dataset(
            numerics=self.numerics[positions],
            categoricals=[[col[p] for p in positions] for col in self.categoricals],
            raw_labels=[self.raw_labels[p] for p in positions],
            categories=self.categories[positions],
            lines=[self.lines[p] for p in positions],
            indices=self.indices[positions],
            source_path=self.source_path,
            checksum=self.checksum,
        )


_CHUNK = 65536


def _build_dataset(
    lines: list[str], source_path: str, checksum: str, first_line_no: int = 1
) -> Dataset:
    n = len(lines)
    intern = sys.intern
    protocols: list[str] = []
    services: list[str] = []
    flags: list[str] = []
    raw_labels: list[str] = []
    categories = np.empty(n, dtype=np.int8)
    chunks: list[np.ndarray] = []
    num_strs: list[str] = []
    attack_map = ATTACK_CATEGORIES

    def flush(upto: int) -> None:
        if not num_strs:
            return
        try:
            chunks.append(np.asarray(num_strs, dtype=np.float64).reshape(-1, N_NUMERIC))
        except ValueError:
            start = upto - len(num_strs) // N_NUMERIC
            for j in range(start, upto):
                parse_record(lines[j], index=j, line_no=first_line_no + j)
            raise  # unreachable: the loop above re-raises with position info
        num_strs.clear()

    for i, line in enumerate(lines):
        fields = line.split(",")
        if len(fields) != N_FEATURES + 1:
            raise WrongFieldCount(
                f"expected {N_FEATURES + 1} comma-separated fields, got {len(fields)}",
                line_no=first_line_no + i,
            )
        label_field = fields[-1]
        if not label_field.endswith("."):
            raise UnknownLabel(
                f"label field {label_field!r} lacks the trailing period",
                line_no=first_line_no + i, column="label",
            )
        raw_label = label_field[:-1]
        cat = attack_map.get(raw_label)
        if cat is None:
            raise UnknownLabel(
                f"unknown attack label {raw_label!r}",
                line_no=first_line_no + i, column="label",
            )
        protocols.append(intern(fields[1]))
        services.append(intern(fields[2]))
        flags.append(intern(fields[3]))
        raw_labels.append(intern(raw_label))
        categories[i] = cat.value
        num_strs.append(fields[0])
        num_strs += fields[4:-1]
        if len(num_strs) >= _CHUNK * N_NUMERIC:
            flush(i + 1)
    flush(n)
    numerics = np.vstack(chunks) if chunks else np.empty((0, N_NUMERIC), dtype=np.float64)

    # Vectorized validation; the slow path pinpoints the first offender.
    durations = numerics[:, 0]
    bad = ~np.isfinite(numerics).all(axis=1)
    bad |= (durations < 0) | (durations != np.floor(durations))
    rates = numerics[:, RATE_INDICES]
    bad |= ((rates < 0.0) | (rates > 1.0)).any(axis=1)
    if bad.any():
        cand = int(np.flatnonzero(bad)[0])
        parse_record(lines[cand], index=cand, line_no=first_line_no + cand)
        raise AssertionError("validation mismatch between fast and slow parse paths")

    return Dataset(
        numerics=numerics,
        categoricals=[protocols, services, flags],
        raw_labels=raw_labels,
        categories=categories,
        lines=lines,
        indices=np.arange(n, dtype=np.int64),
        source_path=source_path,
        checksum=checksum,
    )


def load_dataset(path: str | Path) -> Dataset:
    """Load a KDD-format text file (optionally gzipped); aborts on the first
    malformed line. The checksum is the SHA-256 of the on-disk bytes."""
    data = Path(path).read_bytes()
    checksum = hashlib.sha256(data).hexdigest()
    if str(path).endswith(".gz"):
        import gzip
        data = gzip.decompress(data)
    text = data.decode("ascii")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    lines = [ln.rstrip("\r") for ln in lines]
    return _build_dataset(lines, source_path=str(path), checksum=checksum)


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic stratified train/test split parameters."""

    train_fraction: float = 0.8
    seed: int = 0
    mode: str = "StratifiedExact"

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError(f"train_fraction must be in (0,1), got {self.train_fraction}")
        if self.mode != "StratifiedExact":
            raise ValueError(f"unsupported split mode {self.mode!r}")


def split_train_test(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Per category, exactly floor(train_fraction * n) records go to train.

    The shuffle is a seeded permutation per category (categories processed
    in class-code order), so equal seeds yield identical member sets.
    """
    if len(dataset) == 0:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)
    train_pos: list[np.ndarray] = []
    test_pos: list[np.ndarray] = []
    for cat in Category:
        pos = np.flatnonzero(dataset.categories == cat.value)
        if pos.size == 0:
            continue
        perm = rng.permutation(pos.size)
        n_train = int(np.floor(spec.train_fraction * pos.size))
        train_pos.append(pos[perm[:n_train]])
        test_pos.append(pos[perm[n_train:]])
    train = dataset.take(np.concatenate(train_pos) if train_pos else np.empty(0, np.int64))
    test = dataset.take(np.concatenate(test_pos) if test_pos else np.empty(0, np.int64))
    return train, test


def stratified_subsample(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    """Seeded per-category subsample keeping floor(fraction * n) records."""
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"subsample fraction must be in (0,1], got {fraction}")
    if fraction == 1.0:
        return dataset
    rng = np.random.default_rng(seed)
    keep: list[np.ndarray] = []
    for cat in Category:
        pos = np.flatnonzero(dataset.categories == cat.value)
        if pos.size == 0:
            continue
        n_keep = int(np.floor(fraction * pos.size))
        perm = rng.permutation(pos.size)
        keep.append(pos[perm[:n_keep]])
    return dataset.take(np.concatenate(keep) if keep else np.empty(0, np.int64))
