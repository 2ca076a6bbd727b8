"""
Class-name embeddings: loading, similarity, top-k neighbours and adaptive margins.

Embedding text format: a "C D" header line, then C lines "name v1 ... vD".
"""

import logging
import re
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from semalign.exceptions import (
    ConfigError,
    ContractError,
    EmbeddingParseError,
    InputFileError,
    ShapeError,
)
from semalign.numerics import Matrix, matmul

logger = logging.getLogger("semalign.embeddings")

NORM_TOLERANCE = 1e-9


def _frozen(matrix: Matrix) -> Matrix:
    array = np.array(matrix, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ClassEmbeddingTable:
    """Ordered class names with one embedding row each."""

    names: tuple[str, ...]
    vectors: Matrix

    def __post_init__(self) -> None:
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "vectors", _frozen(self.vectors))
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.names):
            raise ShapeError("ClassEmbeddingTable", (len(self.names),), self.vectors.shape)
        if len(self.names) < 2:
            raise ContractError("an embedding table needs at least two classes")
        if any(not name or any(ch.isspace() for ch in name) for name in self.names):
            raise ContractError("class names must be non-empty and whitespace-free")
        if len(set(self.names)) != len(self.names):
            raise ContractError("class names must be unique")

    @property
    def num_classes(self) -> int:
        return len(self.names)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def is_normalized(self) -> bool:
        norms = np.linalg.norm(self.vectors, axis=1)
        return bool(np.all(np.abs(norms - 1.0) <= NORM_TOLERANCE))

    def index(self, name: str) -> int:
        """Return the class id of a name."""
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigError(f"unknown class '{name}'") from None

    def normalized(self) -> "ClassEmbeddingTable":
        """Return a copy with every row scaled to unit L2 norm."""
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.any(norms == 0.0):
            row = int(np.argmax(norms == 0.0))
            raise ContractError(f"class '{self.names[row]}' has a zero-norm embedding")
        return ClassEmbeddingTable(self.names, self.vectors / norms[:, None])


@dataclass(frozen=True)
class MarginMatrix:
    """C x C adaptive margins: cosine above gamma for top-k neighbours, else 0."""

    values: Matrix
    gamma: float
    k: int | None

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen(self.values))

    @property
    def num_classes(self) -> int:
        return self.values.shape[0]

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)


@dataclass(frozen=True)
class ClassPartition:
    """Disjoint base and novel class ids covering every class."""

    base_ids: tuple[int, ...]
    novel_ids: tuple[int, ...] = field(default=())

    @property
    def num_classes(self) -> int:
        return len(self.base_ids) + len(self.novel_ids)


def load_embeddings(path: str | Path, normalize: bool = True) -> ClassEmbeddingTable:
    """Parse an embedding text file; rows are L2-normalized when normalize is set."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InputFileError(path, "no such file") from None
    except OSError as exc:
        raise InputFileError(path, exc.strerror or "cannot be read") from exc

    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise EmbeddingParseError(path, 1, "missing 'C D' header")
    header = lines[0].split()
    if len(header) != 2 or not all(re.fullmatch(r"[0-9]+", part) for part in header):
        raise EmbeddingParseError(path, 1, f"malformed header '{lines[0]}'")
    count, dim = int(header[0]), int(header[1])
    if count < 2 or dim < 1:
        raise EmbeddingParseError(path, 1, "header needs C >= 2 classes and D >= 1")
    if len(lines) - 1 < count:
        raise EmbeddingParseError(
            path, len(lines) + 1, f"expected {count} embedding lines, found {len(lines) - 1}"
        )
    if len(lines) - 1 > count:
        raise EmbeddingParseError(path, count + 2, f"unexpected line after {count} embeddings")

    names: list[str] = []
    seen: dict[str, int] = {}
    vectors = np.empty((count, dim), dtype=np.float64)
    for offset, line in enumerate(lines[1:]):
        lineno = offset + 2
        parts = line.split()
        if len(parts) != dim + 1:
            raise EmbeddingParseError(
                path, lineno, f"expected name and {dim} values, found {len(parts) - 1} values"
            )
        name = parts[0]
        if name in seen:
            raise EmbeddingParseError(
                path, lineno, f"duplicate class name '{name}' (first on line {seen[name]})"
            )
        seen[name] = lineno
        try:
            row = [float(value) for value in parts[1:]]
        except ValueError:
            raise EmbeddingParseError(path, lineno, "non-numeric embedding value") from None
        if not all(np.isfinite(row)):
            raise EmbeddingParseError(path, lineno, "non-finite embedding value")
        if normalize and not any(row):
            raise EmbeddingParseError(path, lineno, f"zero-norm vector for '{name}'")
        names.append(name)
        vectors[offset] = row

    table = ClassEmbeddingTable(tuple(names), vectors)
    logger.debug("Loaded %d embeddings of dim %d from %s", count, dim, path)
    return table.normalized() if normalize else table


def format_embeddings(table: ClassEmbeddingTable) -> str:
    """Render a table in the embedding text format (shortest round-trip floats)."""
    rows = [f"{table.num_classes} {table.dim}"]
    for name, vector in zip(table.names, table.vectors):
        rows.append(" ".join([name, *(repr(float(value)) for value in vector)]))
    return "\n".join(rows) + "\n"


def write_embeddings(table: ClassEmbeddingTable, path: str | Path) -> None:
    """Write a table in the embedding text format with LF endings."""
    Path(path).write_text(format_embeddings(table), encoding="utf-8", newline="\n")


def similarity_matrix(table: ClassEmbeddingTable) -> Matrix:
    """Pairwise cosine similarity T.T^T of a normalized table, clipped to [-1, 1]."""
    if not table.is_normalized:
        raise ContractError("similarity_matrix requires a unit-normalized table")
    return np.clip(matmul(table.vectors, table.vectors.T), -1.0, 1.0)


def topk_similar(similarity: Matrix, class_id: int, k: int | None) -> list[int]:
    """
    The k classes most similar to class_id, excluding itself.
    Ties break by ascending class index; k=None means every other class.
    """
    count = similarity.shape[0]
    if not 0 <= class_id < count:
        raise ContractError(f"class id {class_id} out of range [0, {count})")
    if k is not None and k < 0:
        raise ContractError("k must be non-negative")
    others = np.array([j for j in range(count) if j != class_id], dtype=np.int64)
    # lexsort sorts by the last key first
    order = np.lexsort((others, -similarity[class_id, others]))
    ranked = [int(j) for j in others[order]]
    return ranked if k is None else ranked[:k]


def margin_matrix(
    table: ClassEmbeddingTable,
    gamma: float,
    k: int | None,
    mask: np.ndarray | None = None,
) -> MarginMatrix:
    """
    Adaptive margins: m_ij = cos(t_i, t_j) when j is among the top-k neighbours
    of i and cos(t_i, t_j) > gamma, else 0. Ranking happens before thresholding.
    An optional boolean mask zeroes pairs outside it.
    """
    if not 0.0 <= gamma < 1.0:
        raise ConfigError(f"gamma must lie in [0, 1), got {gamma}")
    if k is not None and k < 0:
        raise ConfigError(f"k must be non-negative, got {k}")
    similarity = similarity_matrix(table)
    count = table.num_classes
    values = np.zeros((count, count), dtype=np.float64)
    for i in range(count):
        for j in topk_similar(similarity, i, k):
            if similarity[i, j] - gamma > 0.0:
                values[i, j] = similarity[i, j]
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != values.shape:
            raise ShapeError("margin_matrix mask", mask.shape, values.shape)
        values = np.where(mask, values, 0.0)
    return MarginMatrix(values=values, gamma=gamma, k=k)


def scope_mask(
    partition: ClassPartition, scope: Literal["all", "novel"]
) -> np.ndarray | None:
    """Pair mask for a margin scope: None for all pairs, else pairs touching a novel class."""
    if scope == "all":
        return None
    novel = np.zeros(partition.num_classes, dtype=bool)
    novel[list(partition.novel_ids)] = True
    return novel[:, None] | novel[None, :]


def partition_classes(names: Sequence[str], novel_names: Sequence[str]) -> ClassPartition:
    """Split class ids into base and novel; novel names must all be known."""
    index = {name: i for i, name in enumerate(names)}
    novel_ids: list[int] = []
    for name in novel_names:
        if name not in index:
            raise ConfigError(f"novel class '{name}' is not in the class list")
        if index[name] in novel_ids:
            raise ConfigError(f"novel class '{name}' listed twice")
        novel_ids.append(index[name])
    novel_set = set(novel_ids)
    base_ids = [i for i in range(len(names)) if i not in novel_set]
    if not base_ids:
        raise ConfigError("at least one base class is required for the base stage")
    return ClassPartition(base_ids=tuple(base_ids), novel_ids=tuple(novel_ids))
