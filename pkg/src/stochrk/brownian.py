"""
Wiener increments and the binary Brownian tree.

Every normal deviate is addressed: it is a pure function of the master seed,
the stream (trajectory) number and the address of the tree node that needs
it. A chunk [t0 + jH, t0 + (j+1)H] of the base grid is node (level 0,
index j); splitting node (level, i) yields (level+1, 2i) and (level+1, 2i+1).
Because splits are addressed, the tree is virtual: a node that is split,
merged and split again always produces the same children, so rejected steps
never alter the realized path.

A split draws the left increment from the conditional law N(dW/2, dt/4) and
obtains the right increment by subtraction. A chunk fixes one power-of-two
grid per Wiener process, 2^10 times coarser than needed for its own scale,
and its increment and every split below it are rounded onto that grid. All
increments of a chunk are then integer multiples of one quantum, so they add
up exactly in any order, time order included. Nodes built outside a stack
round each split to the unit in the last place of their own dW.

Classes:
    RngStream: Counter-based normal deviates keyed by (seed, stream, address)
    IncrementNode: An interval and its Wiener increments
    BrownianStack: Pending intervals of one trajectory
    BrownianError: Raised for non-dyadic steps and non-contiguous merges

Functions:
    sample_increment: m draws from N(0, dt)
    sample_path: Increments of a whole base grid
    chunk_grid: Rounding quantum of a chunk's subtree
    split_node: Conditional split of a node into two halves
    merge_nodes: Union of two contiguous nodes
    dyadic_level: Level k with dt = H / 2^k
    next_node: Next interval to integrate over
    push_back: Return a rejected node to the stack
    refine_increments: Vectorized split of an increment array
    split_statistics: Statistical self-test of the conditional split

Dependencies:
    - numpy: Philox bit generator, SeedSequence, array arithmetic
    - pandas: Self-test summary
    - scipy: Kolmogorov-Smirnov test
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

# Counter tags separating the address spaces of a stream
SEQUENTIAL = 0
FRESH = 1
SPLIT = 2
REFINE = 3

# Headroom of a chunk grid over max(|dW|, sqrt(H))
GRID_HEADROOM = 2.0 ** 10

class BrownianError(ValueError):
    """Raised for non-dyadic step requests and non-contiguous merges."""

class RngStream:
    """
    Counter-based source of standard normal deviates.

    The Philox key is derived from (seed, stream) with numpy's SeedSequence;
    the counter encodes either a sequential draw number or a tree address, so
    deviates do not depend on the order in which nodes are visited.

    Args:
        seed: Master seed
        stream: Stream number, one per trajectory
    """

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ValueError(f"seed and stream must be non-negative, got {seed}, {stream}")
        self.seed = int(seed)
        self.stream = int(stream)
        self._key = np.random.SeedSequence(entropy=self.seed,
                                           spawn_key=(self.stream,)).generate_state(2, np.uint64)
        self.draws = 0

    def standard_normal(self, size, address: Optional[Tuple[int, int, int]] = None) -> np.ndarray:
        """
        Draw standard normal deviates.

        Args:
            size: Output shape
            address: Optional (tag, level, index). Without an address the
                     next sequential block is used and the draw counter
                     advances.

        Returns:
            Array of the requested shape
        """
        if address is None:
            counter = [0, self.draws, 0, SEQUENTIAL]
            self.draws += 1
        else:
            tag, level, index = address
            counter = [0, int(index), int(level), int(tag)]
        bit_generator = np.random.Philox(key=self._key, counter=counter)
        return np.random.Generator(bit_generator).standard_normal(size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"

@dataclass(frozen=True, eq=False)
class IncrementNode:
    """
    Wiener increments dW over [t0, t0 + dt].

    Attributes:
        t0: Interval start
        dt: Interval length
        dW: Increments, shape (m,)
        level: Tree level (None for nodes outside the tree)
        index: Position within the level (None for nodes outside the tree)
        grid: Rounding quantum per Wiener process shared by a chunk's subtree
    """
    t0: float
    dt: float
    dW: np.ndarray
    level: Optional[int] = None
    index: Optional[int] = None
    grid: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise BrownianError(f"Interval length must be positive, got {self.dt}")

    @property
    def t1(self) -> float:
        return self.t0 + self.dt

    @property
    def m(self) -> int:
        return len(self.dW)

    @property
    def addressed(self) -> bool:
        return self.level is not None and self.index is not None

@dataclass
class BrownianStack:
    """
    Pending intervals of one trajectory.

    Attributes:
        m: Number of Wiener processes
        base_step: Base step H; chunk j covers [t0 + jH, t0 + (j+1)H]
        t0: Start time
        k_max: Deepest allowed level
        pending: Last-in-first-out intervals; the top is the next in time
        horizon: End of the last sampled chunk
        chunks_sampled: Number of chunks drawn so far
    """
    m: int
    base_step: float
    t0: float = 0.0
    k_max: int = 40
    pending: List[IncrementNode] = field(default_factory=list)
    horizon: float = None
    chunks_sampled: int = 0

    def __post_init__(self):
        if not self.base_step > 0:
            raise ValueError(f"Base step must be positive, got {self.base_step}")
        if self.m < 0:
            raise ValueError(f"Wiener process count must be non-negative, got {self.m}")
        if self.horizon is None:
            self.horizon = self.t0

def sample_increment(rng: RngStream, dt: float, m: int) -> np.ndarray:
    """
    Draw m independent increments from N(0, dt).

    Raises:
        ValueError: If dt is negative
    """
    if dt < 0:
        raise ValueError(f"Time increment must be non-negative, got {dt}")
    if dt == 0 or m == 0:
        return np.zeros(m)
    return np.sqrt(dt) * rng.standard_normal(m)

def chunk_grid(dW: np.ndarray, base_step: float) -> np.ndarray:
    """Rounding quantum per Wiener process for a chunk with increments dW."""
    scale = np.maximum(np.abs(dW), np.sqrt(base_step))
    return np.spacing(GRID_HEADROOM * scale)

def _chunk(rng: RngStream, m: int, base_step: float, t0: float, j: int) -> IncrementNode:
    if m == 0:
        dW = grid = np.zeros(0)
    else:
        dW = np.sqrt(base_step) * rng.standard_normal(m, address=(FRESH, 0, j))
        grid = chunk_grid(dW, base_step)
        dW = np.round(dW / grid) * grid
    return IncrementNode(t0=t0 + j * base_step, dt=base_step, dW=dW, level=0, index=j,
                         grid=grid)

def sample_path(rng: RngStream, base_step: float, chunks: int, m: int,
                t0: float = 0.0) -> List[IncrementNode]:
    """Chunk nodes 0..chunks-1 as a stack would draw them."""
    return [_chunk(rng, m, base_step, t0, j) for j in range(chunks)]

def _exact_split(dW: np.ndarray, dt, z: np.ndarray,
                 grid: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Left/right increments with the left one rounded to grid, or to the ulp
    grid of dW when no grid is given.
    """
    a = 0.5 * dW + np.sqrt(0.25 * dt) * z
    if grid is None:
        usable = dW != 0
        quantum = np.where(usable, np.spacing(np.abs(dW)), 1.0)
    else:
        usable = np.ones(dW.shape, dtype=bool)
        quantum = np.broadcast_to(grid, dW.shape)
    scaled = a / quantum
    on_grid = usable & (np.abs(scaled) < 2.0 ** 53)
    a = np.where(on_grid, np.round(scaled) * quantum, a)
    return a, dW - a

def split_node(rng: RngStream, node: IncrementNode) -> Tuple[IncrementNode, IncrementNode]:
    """
    Split a node at its midpoint.

    The left increment is drawn from N(dW/2, dt/4) and the right increment
    is dW minus the left one.

    Args:
        rng: Stream of the trajectory owning the node
        node: Node to split

    Returns:
        (left, right) halves; tree addresses are (level+1, 2i) and (level+1, 2i+1)
    """
    half = 0.5 * node.dt
    m = node.m
    if m == 0:
        left_dW, right_dW = np.zeros(0), np.zeros(0)
    else:
        address = (SPLIT, node.level, node.index) if node.addressed else None
        z = rng.standard_normal(m, address=address)
        left_dW, right_dW = _exact_split(np.asarray(node.dW, dtype=float), node.dt, z,
                                         node.grid)
    if node.addressed:
        left_address = (node.level + 1, 2 * node.index)
        right_address = (node.level + 1, 2 * node.index + 1)
    else:
        left_address = right_address = (None, None)
    left = IncrementNode(node.t0, half, left_dW, *left_address, grid=node.grid)
    right = IncrementNode(node.t0 + half, half, right_dW, *right_address, grid=node.grid)
    return left, right

def _are_siblings(left: IncrementNode, right: IncrementNode) -> bool:
    return (left.addressed and right.addressed and left.level == right.level
            and left.level > 0 and left.index % 2 == 0 and right.index == left.index + 1)

def merge_nodes(left: IncrementNode, right: IncrementNode) -> IncrementNode:
    """
    Merge two contiguous nodes into one over the union interval.

    Siblings merge into their parent's tree address; other contiguous pairs
    give an unaddressed node.

    Raises:
        BrownianError: If right does not start where left ends or m differs
    """
    if left.m != right.m:
        raise BrownianError(f"Cannot merge nodes with {left.m} and {right.m} Wiener processes")
    gap = right.t0 - left.t1
    if abs(gap) > 1e-12 * max(1.0, abs(left.t1)):
        raise BrownianError(f"Nodes are not contiguous: [{left.t0}, {left.t1}] and "
                            f"[{right.t0}, {right.t1}]")
    if _are_siblings(left, right):
        address = (left.level - 1, left.index // 2)
    else:
        address = (None, None)
    same_grid = (left.grid is not None and right.grid is not None
                 and np.array_equal(left.grid, right.grid))
    return IncrementNode(left.t0, left.dt + right.dt, left.dW + right.dW, *address,
                         grid=left.grid if same_grid else None)

def dyadic_level(base_step: float, dt: float, k_max: int = 40) -> int:
    """
    Level k in [0, k_max] with dt = base_step / 2^k.

    Raises:
        BrownianError: If dt is not such a dyadic fraction
    """
    if not dt > 0:
        raise BrownianError(f"Step must be positive, got {dt}")
    k = int(round(np.log2(base_step / dt)))
    if k < 0 or k > k_max or not np.isclose(np.ldexp(base_step, -k), dt, rtol=1e-12, atol=0):
        raise BrownianError(f"Step {dt} is not base_step/2^k for k in [0, {k_max}] "
                            f"(base_step={base_step})")
    return k

def next_node(stack: BrownianStack, rng: RngStream, proposed_dt: float) -> IncrementNode:
    """
    Next interval to integrate over.

    Draws a fresh chunk at the horizon when nothing is pending. Otherwise pops
    the top node, merges it with its pending sibling while it is shorter than
    proposed_dt, and splits it (pushing right halves) until its length is at
    most proposed_dt.

    Args:
        stack: Pending intervals of the trajectory
        rng: Stream of the trajectory
        proposed_dt: Requested length, base_step / 2^k

    Returns:
        Node starting where the previous one ended, of length <= proposed_dt

    Raises:
        BrownianError: If proposed_dt is not dyadic in the base step
    """
    level = dyadic_level(stack.base_step, proposed_dt, stack.k_max)
    if not stack.pending:
        stack.pending.append(_chunk(rng, stack.m, stack.base_step, stack.t0, stack.chunks_sampled))
        stack.chunks_sampled += 1
        stack.horizon = stack.t0 + stack.chunks_sampled * stack.base_step

    node = stack.pending.pop()
    while (node.addressed and node.level > level and stack.pending
           and _are_siblings(node, stack.pending[-1])):
        node = merge_nodes(node, stack.pending.pop())

    while node.dt > proposed_dt * (1 + 1e-12):
        node, right = split_node(rng, node)
        stack.pending.append(right)
    return node

def push_back(stack: BrownianStack, node: IncrementNode) -> None:
    """Return a node to the top of the stack, e.g. after a rejected step."""
    if stack.pending and abs(stack.pending[-1].t0 - node.t1) > 1e-12 * max(1.0, abs(node.t1)):
        raise BrownianError(f"Node [{node.t0}, {node.t1}] does not precede the pending top "
                            f"starting at {stack.pending[-1].t0}")
    stack.pending.append(node)

def is_chunk_end(node: IncrementNode) -> bool:
    """True when the node ends on a base grid point."""
    if not node.addressed:
        return False
    return (node.index + 1) % (1 << node.level) == 0

def refine_increments(rng: RngStream, dW: np.ndarray, dt: float, level: int) -> np.ndarray:
    """
    Split every increment of an array in two.

    Args:
        rng: Stream used for all splits at this level
        dW: Increments of shape (..., nodes, m) over intervals of length dt
        dt: Interval length
        level: Level of the input nodes; addresses the deviates

    Returns:
        Array of shape (..., 2 * nodes, m) ordered in time, whose
        consecutive pairs sum to the input increments
    """
    dW = np.asarray(dW, dtype=float)
    z = rng.standard_normal(dW.shape, address=(REFINE, level, 0))
    left, right = _exact_split(dW, dt, z)
    out = np.empty(dW.shape[:-2] + (2 * dW.shape[-2], dW.shape[-1]))
    out[..., 0::2, :] = left
    out[..., 1::2, :] = right
    return out

def split_statistics(rng: RngStream, dW: float, dt: float, samples: int = 100000) -> pd.Series:
    """
    Split one increment many times and compare the left halves with
    N(dW/2, dt/4).

    Args:
        rng: Stream for the splits
        dW: Parent increment
        dt: Parent interval length
        samples: Number of independent splits

    Returns:
        Series with the sample mean and variance of the left halves, their
        expected values, the Kolmogorov-Smirnov p-value and the number of
        splits whose halves do not add up to dW exactly
    """
    parents = np.full((samples, 1, 1), float(dW))
    children = refine_increments(rng, parents, dt, level=0)
    left = children[:, 0, 0]
    right = children[:, 1, 0]
    ks = stats.kstest(left, 'norm', args=(0.5 * dW, np.sqrt(0.25 * dt)))
    return pd.Series({
        'mean': float(np.mean(left)),
        'expected_mean': 0.5 * dW,
        'variance': float(np.var(left, ddof=1)),
        'expected_variance': 0.25 * dt,
        'ks_pvalue': float(ks.pvalue),
        'inexact_sums': int(np.count_nonzero(left + right != dW)),
    })
