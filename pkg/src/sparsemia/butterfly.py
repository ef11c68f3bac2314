"""Butterfly sparse supports, monotone factor chains, and fast factorized products.

A square butterfly factor at level ``l`` of depth ``L`` (matrix size
``N = 2**L``) has support ``I_{2**(l-1)} (x) ones(2,2) (x) I_{N // 2**l}``,
i.e. at most two nonzeros per row and per column.  The rectangular
generalization used here describes every factor by a quadruple
``(p, r, s, q)`` meaning support ``I_p (x) ones(r, s) (x) I_q`` of shape
``(p*r*q, p*s*q)``.

A chain of such factors multiplies out to an ``m x n`` matrix.  Chains are
generated from ordered block-size factorizations ``m = r_1*...*r_L`` and
``n = s_1*...*s_L`` with every block size at least 2, wired so that factor
``l`` carries ``p_l = s_1*...*s_(l-1)`` and ``q_l = r_(l+1)*...*r_L``.  Under
this wiring the support of the full product is exactly the all-ones matrix
(each row/column pair is connected by exactly one path), so the chain can
realize a generic dense matrix.  Monotonicity means the intermediate
dimensions move from ``m`` to ``n`` without overshooting, which reduces to
``s_l <= r_l`` for all ``l`` when ``m >= n`` and ``s_l >= r_l`` otherwise.

Factor values are stored flat in canonical order: row-major over the support
(rows ascending, columns ascending within a row).  For a quadruple
``(p, r, s, q)`` this coincides with C-order of a ``(p, r, q, s)`` array.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SupportPattern",
    "ButterflyChain",
    "FactorizedMatrix",
    "ChainEnumeration",
    "NoChainError",
    "OpCounter",
    "butterfly_support",
    "generalized_support",
    "enumerate_monotone_chains",
    "select_min_param_chain",
    "factorized_matvec",
    "expand_dense",
    "save_factorized",
    "load_factorized",
]

DEFAULT_CHAIN_BUDGET = 200_000


class NoChainError(ValueError):
    """No valid monotone chain exists for the requested shape and depth."""


@dataclass(frozen=True)
class SupportPattern:
    """Sparsity pattern of one factor: a set of (row, col) index pairs."""

    rows: int
    cols: int
    entries: frozenset

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"support shape must be positive, got {self.rows}x{self.cols}")
        for (i, j) in self.entries:
            if not (0 <= i < self.rows and 0 <= j < self.cols):
                raise ValueError(f"entry ({i}, {j}) outside {self.rows}x{self.cols} support")

    @property
    def nnz(self):
        return len(self.entries)

    def index_arrays(self):
        """(row_idx, col_idx) in canonical order: row-major over the support."""
        order = sorted(self.entries)
        rows = np.fromiter((i for i, _ in order), dtype=np.int64, count=len(order))
        cols = np.fromiter((j for _, j in order), dtype=np.int64, count=len(order))
        return rows, cols

    def to_dense(self):
        """0/1 indicator matrix of the support."""
        out = np.zeros((self.rows, self.cols), dtype=np.int64)
        rows, cols = self.index_arrays()
        out[rows, cols] = 1
        return out


def generalized_support(p, r, s, q):
    """Support of ``I_p (x) ones(r, s) (x) I_q``, shape (p*r*q, p*s*q), nnz p*r*s*q."""
    for name, v in (("p", p), ("r", r), ("s", s), ("q", q)):
        if v < 1:
            raise ValueError(f"quadruple component {name} must be >= 1, got {v}")
    entries = frozenset(
        ((a * r + b) * q + c, (a * s + d) * q + c)
        for a in range(p)
        for b in range(r)
        for d in range(s)
        for c in range(q)
    )
    return SupportPattern(rows=p * r * q, cols=p * s * q, entries=entries)


def butterfly_support(level, depth):
    """Square butterfly support at ``level`` of ``depth`` (size N = 2**depth).

    Exactly two nonzeros per row and per column; nnz = 2N.
    """
    if not 1 <= level <= depth:
        raise ValueError(f"level must be in [1, {depth}], got {level}")
    n = 2 ** depth
    return generalized_support(2 ** (level - 1), 2, 2, n // 2 ** level)


@dataclass(frozen=True)
class ButterflyChain:
    """Ordered factor quadruples whose supports multiply to an m x n matrix.

    Invariants checked at construction: positive quadruples, adjacent factor
    shapes, and a monotone sequence of dimensions from m down (or up) to n.
    """

    factor_specs: tuple

    def __post_init__(self):
        specs = tuple(tuple(int(v) for v in spec) for spec in self.factor_specs)
        object.__setattr__(self, "factor_specs", specs)
        if not specs:
            raise ValueError("chain must contain at least one factor")
        for spec in specs:
            if len(spec) != 4 or any(v < 1 for v in spec):
                raise ValueError(f"invalid factor quadruple {spec}")
        dims = self.dims
        for l in range(len(specs) - 1):
            p, r, s, q = specs[l]
            p2, r2, s2, q2 = specs[l + 1]
            if p * s * q != p2 * r2 * q2:
                raise ValueError(
                    f"factors {l} and {l + 1} not adjacent: {p * s * q} cols vs {p2 * r2 * q2} rows"
                )
        m, n = dims[0], dims[-1]
        steps = zip(dims, dims[1:])
        if m >= n:
            ok = all(a >= b for a, b in steps)
        else:
            ok = all(a <= b for a, b in steps)
        if not ok:
            raise ValueError(f"dimension sequence {dims} is not monotone between {m} and {n}")

    @property
    def depth(self):
        return len(self.factor_specs)

    @property
    def dims(self):
        """Dimension sequence (rows of factor 1, ..., cols of the last factor)."""
        p, r, _, q = self.factor_specs[0]
        out = [p * r * q]
        for (p, _, s, q) in self.factor_specs:
            out.append(p * s * q)
        return tuple(out)

    @property
    def shape(self):
        dims = self.dims
        return dims[0], dims[-1]

    @property
    def factor_nnz(self):
        return tuple(p * r * s * q for (p, r, s, q) in self.factor_specs)

    @property
    def param_count(self):
        return sum(self.factor_nnz)

    def supports(self):
        return [generalized_support(*spec) for spec in self.factor_specs]


def square_butterfly_chain(depth):
    """The canonical square chain of ``depth`` factors for N = 2**depth."""
    n = 2 ** depth
    return ButterflyChain(
        tuple((2 ** (l - 1), 2, 2, n // 2 ** l) for l in range(1, depth + 1))
    )


def _ordered_factorizations(n, length):
    """Ordered tuples (f_1..f_length), product n, every part >= 2 (n itself if length 1)."""
    if length == 1:
        yield (n,)
        return
    f = 2
    while f * 2 ** (length - 1) <= n:
        if n % f == 0:
            for rest in _ordered_factorizations(n // f, length - 1):
                yield (f,) + rest
        f += 1


def chain_from_block_sizes(row_blocks, col_blocks):
    """Build the chain whose factor l is (s_1..s_(l-1), r_l, s_l, r_(l+1)..r_L)."""
    L = len(row_blocks)
    specs = []
    p = 1
    for l in range(L):
        q = int(np.prod(row_blocks[l + 1:], dtype=np.int64)) if l < L - 1 else 1
        specs.append((p, row_blocks[l], col_blocks[l], q))
        p *= col_blocks[l]
    return ButterflyChain(tuple(specs))


@dataclass(frozen=True)
class ChainEnumeration:
    """Enumeration result; ``truncated`` flags an exhausted search budget."""

    chains: tuple
    truncated: bool = False


def enumerate_monotone_chains(m, n, L, budget=DEFAULT_CHAIN_BUDGET):
    """All valid monotone chains of length L for an m x n matrix.

    Chains are generated from ordered block-size factorizations of m and n
    (each block >= 2, except the trivial length-1 chain) filtered by the
    monotonicity constraint.  Deterministic order: lexicographic by row
    blocks, then column blocks.  Returns an empty enumeration when no
    factorization exists; sets ``truncated`` when ``budget`` candidate pairs
    were examined before the search finished.
    """
    if m < 1 or n < 1 or L < 1:
        raise ValueError(f"m, n, L must be >= 1, got ({m}, {n}, {L})")
    decreasing = m >= n
    chains = []
    examined = 0
    truncated = False
    row_choices = list(_ordered_factorizations(m, L))
    col_choices = list(_ordered_factorizations(n, L))
    for rs in row_choices:
        for ss in col_choices:
            examined += 1
            if examined > budget:
                truncated = True
                break
            if decreasing and any(s > r for r, s in zip(rs, ss)):
                continue
            if not decreasing and any(s < r for r, s in zip(rs, ss)):
                continue
            chains.append(chain_from_block_sizes(rs, ss))
        if truncated:
            break
    return ChainEnumeration(chains=tuple(chains), truncated=truncated)


def select_min_param_chain(m, n, L, budget=DEFAULT_CHAIN_BUDGET):
    """Chain of length L for shape m x n minimizing total parameter count.

    Ties are broken by lexicographic order of the factor quadruples, so the
    selection is deterministic.  Raises NoChainError when no valid chain
    exists within the budget.
    """
    result = enumerate_monotone_chains(m, n, L, budget=budget)
    if not result.chains:
        raise NoChainError(f"no monotone chain of length {L} for shape {m}x{n}")
    return min(result.chains, key=lambda c: (c.param_count, c.factor_specs))


@dataclass
class OpCounter:
    """Accumulates multiply-add counts; one multiply plus one add per stored entry."""

    madds: int = 0

    def charge_factor(self, spec):
        p, r, s, q = spec
        self.madds += 2 * p * r * s * q


@dataclass
class FactorizedMatrix:
    """A matrix held as the product of sparse factors along a chain.

    ``factor_values[l]`` is the flat value vector of factor ``l`` in canonical
    order (row-major over the support), length equal to that factor's nnz.
    """

    chain: ButterflyChain
    factor_values: list = field(default_factory=list)

    def __post_init__(self):
        vals = []
        for spec, v in zip(self.chain.factor_specs, self.factor_values, strict=True):
            v = np.asarray(v, dtype=np.float64).ravel()
            p, r, s, q = spec
            if v.size != p * r * s * q:
                raise ValueError(
                    f"factor {spec} expects {p * r * s * q} values, got {v.size}"
                )
            vals.append(v)
        self.factor_values = vals

    @property
    def shape(self):
        return self.chain.shape

    @classmethod
    def zeros(cls, chain):
        return cls(chain, [np.zeros(nnz) for nnz in chain.factor_nnz])

    @classmethod
    def random_uniform(cls, chain, bound, rng):
        """I.i.d. uniform(-bound, bound) values on every support entry."""
        return cls(chain, [rng.uniform(-bound, bound, size=nnz) for nnz in chain.factor_nnz])

    def value_blocks(self):
        """Factor values reshaped to (p, r, q, s); C-order matches canonical order."""
        return [
            v.reshape(p, r, q, s)
            for (p, r, s, q), v in zip(self.chain.factor_specs, self.factor_values)
        ]


def apply_factor(value_block, x):
    """Multiply one factor (values shaped (p, r, q, s)) by x of shape (..., p*s*q)."""
    p, r, q, s = value_block.shape
    lead = x.shape[:-1]
    x4 = x.reshape(lead + (p, s, q))
    # out[..., a, b, c] = sum_d V[a, b, c, d] * x[..., a, d, c]
    out = np.einsum("abcd,...adc->...abc", value_block, x4)
    return out.reshape(lead + (p * r * q,))


def apply_factor_transpose(value_block, g):
    """Multiply the transpose of one factor by g of shape (..., p*r*q)."""
    p, r, q, s = value_block.shape
    lead = g.shape[:-1]
    g4 = g.reshape(lead + (p, r, q))
    out = np.einsum("abcd,...abc->...adc", value_block, g4)
    return out.reshape(lead + (p * s * q,))


def factorized_matvec(fm, x, counter=None):
    """y = X1 (X2 (... (XL x))) using only the stored nonzero values.

    When ``counter`` is given it is charged exactly two operations (one
    multiply, one add) per stored entry per application, i.e. 2 * sum(nnz)
    for a full product.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != fm.shape[1]:
        raise ValueError(f"vector length {x.shape[-1]} does not match matrix cols {fm.shape[1]}")
    y = x
    blocks = fm.value_blocks()
    for spec, block in zip(reversed(fm.chain.factor_specs), reversed(blocks)):
        y = apply_factor(block, y)
        if counter is not None:
            counter.charge_factor(spec)
    return y


def factor_to_dense(spec, values):
    """Scatter one factor's values into a dense array."""
    support = generalized_support(*spec)
    rows, cols = support.index_arrays()
    out = np.zeros((support.rows, support.cols))
    out[rows, cols] = np.asarray(values, dtype=np.float64).ravel()
    return out


def expand_dense(fm):
    """Dense m x n product of all factors."""
    dense = None
    for spec, values in zip(fm.chain.factor_specs, fm.factor_values):
        f = factor_to_dense(spec, values)
        dense = f if dense is None else dense @ f
    return dense


_MAGIC = b"BFLY"
_VERSION = 1


def save_factorized(fm, path_or_file):
    """Write a FactorizedMatrix to the binary container.

    Layout (all little-endian): magic ``BFLY``, u32 version, u32 factor
    count, then 4 x u32 per factor quadruple, then each factor's values as
    f64 in canonical order.
    """
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<II", _VERSION, fm.chain.depth))
    for spec in fm.chain.factor_specs:
        buf.write(struct.pack("<4I", *spec))
    for v in fm.factor_values:
        buf.write(v.astype("<f8").tobytes())
    data = buf.getvalue()
    if hasattr(path_or_file, "write"):
        path_or_file.write(data)
    else:
        with open(path_or_file, "wb") as f:
            f.write(data)


def load_factorized(path_or_file):
    """Read a FactorizedMatrix written by :func:`save_factorized`."""
    if hasattr(path_or_file, "read"):
        data = path_or_file.read()
    else:
        with open(path_or_file, "rb") as f:
            data = f.read()
    if data[:4] != _MAGIC:
        raise ValueError("not a factorized-matrix container (bad magic)")
    version, depth = struct.unpack_from("<II", data, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported container version {version}")
    offset = 12
    specs = []
    for _ in range(depth):
        specs.append(struct.unpack_from("<4I", data, offset))
        offset += 16
    chain = ButterflyChain(tuple(specs))
    values = []
    for nnz in chain.factor_nnz:
        end = offset + 8 * nnz
        if end > len(data):
            raise ValueError("truncated factorized-matrix container")
        values.append(np.frombuffer(data[offset:end], dtype="<f8").copy())
        offset = end
    if offset != len(data):
        raise ValueError("trailing bytes in factorized-matrix container")
    return FactorizedMatrix(chain, values)
