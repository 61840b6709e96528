"""Interaction-guided selection of visual tokens as object queries.

Step I ranks visual tokens by a geometric blend of their best object-class
and best relation-class similarity. Step II puts the ``L`` tokens most similar
to interaction-pair embeddings first and fills the remaining ``K - L`` slots
by object similarity among the tokens not yet chosen.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import DimMismatch, EmptyInteractionSet, KOutOfRange, MalformedRecord

ROLES = ("visual", "object_class", "relation_class", "interaction")
BINARY_MAGIC = b"TOKMAT01"


@dataclass
class TokenMatrix:
    data: np.ndarray
    role: str = "visual"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim == 1 and self.data.size == 0:
            self.data = self.data.reshape(0, 0)
        if self.data.ndim != 2:
            raise ValueError(f"token matrix must be 2-D, got shape {self.data.shape}")
        if self.role not in ROLES:
            raise ValueError(f"unknown token role {self.role!r}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("token matrix has non-finite entries")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass
class QueryIndexSet:
    indices: List[int]
    interaction_count: int = 0


def _as_matrix(m) -> np.ndarray:
    return m.data if isinstance(m, TokenMatrix) else np.asarray(m, dtype=float)


def _check_dims(v: np.ndarray, *others: np.ndarray) -> None:
    for o in others:
        if o.ndim != 2 or (o.shape[0] and o.shape[1] != v.shape[1]):
            raise DimMismatch(f"embedding dims differ: {v.shape} vs {o.shape}")


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def max_similarity(V, T) -> np.ndarray:
    """Per visual row, the largest dot product against the rows of ``T``."""
    v, t = _as_matrix(V), _as_matrix(T)
    _check_dims(v, t)
    if t.shape[0] == 0:
        raise EmptyInteractionSet("text token matrix is empty")
    return (v @ t.T).max(axis=1)


def step1_scores(V, T_o, T_r, gamma_balance: float = 0.5) -> np.ndarray:
    """Relevance ``sigmoid(s_obj)**gamma * sigmoid(s_rel)**(1 - gamma)`` per visual token.

    The logistic map keeps the base positive under fractional exponents
    without changing any ranking.
    """
    if not 0.0 <= gamma_balance <= 1.0:
        raise ValueError(f"gamma_balance {gamma_balance} outside [0, 1]")
    v, t_o, t_r = _as_matrix(V), _as_matrix(T_o), _as_matrix(T_r)
    _check_dims(v, t_o, t_r)
    sim_o = sigmoid(max_similarity(v, t_o))
    sim_r = sigmoid(max_similarity(v, t_r))
    return sim_o**gamma_balance * sim_r ** (1.0 - gamma_balance)


def top_k(scores, k: int) -> List[int]:
    """Indices of the ``k`` largest scores, best first; ties go to the lower index."""
    s = np.asarray(scores, dtype=float).reshape(-1)
    if not 1 <= k <= s.size:
        raise KOutOfRange(f"K={k} outside [1, {s.size}]")
    order = np.argsort(-s, kind="stable")
    return [int(i) for i in order[:k]]


def interaction_scores(V, T_in) -> np.ndarray:
    t_in = _as_matrix(T_in)
    if t_in.size == 0:
        raise EmptyInteractionSet("no interaction tokens")
    return max_similarity(V, t_in)


def step1_select(V, T_o, T_r, k: int, gamma_balance: float = 0.5) -> QueryIndexSet:
    return QueryIndexSet(top_k(step1_scores(V, T_o, T_r, gamma_balance), k), 0)


def step2_select(
    V,
    T_in,
    T_o,
    k: int,
    l: int,
    gamma_balance: float = 0.5,
    T_r=None,
) -> QueryIndexSet:
    """Interaction-prioritised selection of ``k`` query indices.

    With no interaction tokens this falls back to Step I over ``(T_o, T_r)``.
    """
    v = _as_matrix(V)
    n_v = v.shape[0]
    if not 0 <= l <= k <= n_v or k < 1:
        raise KOutOfRange(f"need 0 <= L <= K <= N_v with K >= 1, got L={l}, K={k}, N_v={n_v}")
    t_in = None if T_in is None else _as_matrix(T_in)
    if t_in is None or t_in.size == 0:
        if T_r is None:
            raise EmptyInteractionSet("no interaction tokens and no relation tokens for the fallback")
        return step1_select(v, T_o, T_r, k, gamma_balance)

    t_o = _as_matrix(T_o)
    _check_dims(v, t_in, t_o)
    prefix = top_k(interaction_scores(v, t_in), l) if l > 0 else []
    if k == l:
        return QueryIndexSet(prefix, l)
    chosen = set(prefix)
    pool = np.array([i for i in range(n_v) if i not in chosen], dtype=np.int64)
    obj = max_similarity(v[pool], t_o)
    rest = [int(pool[i]) for i in top_k(obj, k - l)]
    return QueryIndexSet(prefix + rest, l)


# --------------------------------------------------------------------------- file formats


def write_token_matrix(m: TokenMatrix, path, binary: bool = False) -> None:
    if binary:
        with open(path, "wb") as f:
            f.write(BINARY_MAGIC)
            f.write(struct.pack("<QQ", m.rows, m.dim))
            f.write(m.data.astype("<f4").tobytes())
        return
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{m.rows} {m.dim} {m.role}\n")
        for row in m.data:
            f.write(" ".join(repr(float(x)) for x in row) + "\n")


def read_token_matrix(path, role: Optional[str] = None) -> TokenMatrix:
    """Read either format; ``role`` is required for the binary variant, which carries none."""
    with open(path, "rb") as f:
        head = f.read(len(BINARY_MAGIC))
        if head == BINARY_MAGIC:
            counts = f.read(16)
            if len(counts) != 16:
                raise MalformedRecord(1, "truncated binary header")
            rows, dim = struct.unpack("<QQ", counts)
            payload = f.read()
            if len(payload) != rows * dim * 4:
                raise MalformedRecord(1, f"expected {rows * dim} float32 values")
            data = np.frombuffer(payload, dtype="<f4").astype(float).reshape(rows, dim)
            return TokenMatrix(data, role or "visual")

    with open(path, encoding="utf-8") as f:
        lines = [ln for ln in f.read().splitlines()]
    if not lines:
        raise MalformedRecord(1, "empty token matrix file")
    header = lines[0].split()
    if len(header) != 3:
        raise MalformedRecord(1, "header must be 'rows dim role'")
    try:
        rows, dim = int(header[0]), int(header[1])
    except ValueError as exc:
        raise MalformedRecord(1, str(exc)) from exc
    data = np.zeros((rows, dim))
    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip()]
    if len(body) != rows:
        raise MalformedRecord(len(lines), f"expected {rows} rows, found {len(body)}")
    for r, (line_no, ln) in enumerate(body):
        parts = ln.split()
        if len(parts) != dim:
            raise MalformedRecord(line_no, f"expected {dim} values, found {len(parts)}")
        try:
            data[r] = [float(x) for x in parts]
        except ValueError as exc:
            raise MalformedRecord(line_no, str(exc)) from exc
    return TokenMatrix(data, role or header[2])
