"""Letter graph and word assembly.

Every classified letter becomes a node; any two nodes are joined by an edge
whose weight sums five normalised differences (x, y, colour, height, width).
Words are chains grown by a sweep line: at each step the newly reached nodes
are matched against the heads of the open chains by a minimum-weight
bipartite matching, and an edge heavier than ``tau`` cannot extend a chain.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from cloudecode import _kernels
from cloudecode.glyph import Classification
from cloudecode.raster import Color, ComponentRegion

HORIZONTAL = "horizontal"
VERTICAL = "vertical"
UNKNOWN = "?"


@dataclass(frozen=True)
class GlyphNode:
    id: int
    letter: str | None
    confidence: float
    x: float
    y: float
    width: float
    height: float
    color: Color
    parts: tuple[int, ...] = ()

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("node width and height must be >= 1")

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return (self.x - self.width / 2, self.y - self.height / 2, self.width, self.height)

    @property
    def keys(self) -> tuple[int, ...]:
        """Identity used for overlap checks: source component parts, else the id."""
        return self.parts or (self.id,)

    def translated(self, dx: float, dy: float) -> "GlyphNode":
        return replace(self, x=self.x + dx, y=self.y + dy)


@dataclass(frozen=True)
class WeightParams:
    """Normalisers for the five edge-weight terms.

    With ``relative=False`` the scales are absolute (pixels / colour units).
    With ``relative=True`` x_scale multiplies the wider node's width, and
    y_scale and size_scale multiply the taller node's height, so a pair is
    judged against its own glyph size; color_scale stays absolute.
    """

    x_scale: float
    y_scale: float
    color_scale: float
    size_scale: float
    relative: bool = False

    def __post_init__(self):
        for name in ("x_scale", "y_scale", "color_scale", "size_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    @classmethod
    def from_nodes(cls, nodes: Sequence[GlyphNode], color_scale: float = 60.0) -> "WeightParams":
        """Image-wide defaults: 2x median width, 0.5x median height, median height."""
        if not nodes:
            return cls(1.0, 1.0, color_scale, 1.0)
        mw = float(np.median([n.width for n in nodes]))
        mh = float(np.median([n.height for n in nodes]))
        return cls(2.0 * mw, 0.5 * mh, color_scale, mh)

    @classmethod
    def pairwise(cls, color_scale: float = 60.0) -> "WeightParams":
        return cls(2.0, 0.5, color_scale, 1.0, relative=True)


@dataclass(frozen=True)
class SweepConfig:
    k: float
    tau: float
    orientation: str = HORIZONTAL
    window_along: float = 3.0
    window_across: float = 1.5

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("k must be > 0")
        if not self.tau >= 0:
            raise ValueError("tau must be >= 0")
        if self.orientation not in (HORIZONTAL, VERTICAL):
            raise ValueError(f"unknown orientation {self.orientation!r}")


@dataclass(frozen=True)
class WordCluster:
    nodes: tuple[GlyphNode, ...]
    orientation: str = HORIZONTAL

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("a word cluster needs at least one node")

    def __len__(self):
        return len(self.nodes)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        boxes = [n.bbox for n in self.nodes]
        x0 = min(b[0] for b in boxes)
        y0 = min(b[1] for b in boxes)
        x1 = max(b[0] + b[2] for b in boxes)
        y1 = max(b[1] + b[3] for b in boxes)
        return (x0, y0, x1 - x0, y1 - y0)

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(n.id for n in self.nodes)


def build_nodes(components: Sequence[ComponentRegion], classifications: Sequence[Classification],
                confidence_floor: float = 0.0) -> list[GlyphNode]:
    """One node per component; ids follow (min_y, min_x) order.

    Letters whose confidence falls below `confidence_floor` become unknown (None).
    """
    if len(components) != len(classifications):
        raise ValueError(f"{len(components)} components but {len(classifications)} classifications")
    order = sorted(range(len(components)), key=lambda i: (components[i].y0, components[i].x0, i))
    nodes = []
    for new_id, i in enumerate(order):
        comp, cls = components[i], classifications[i]
        x0, y0, w, h = comp.bbox
        letter = cls.letter if cls.confidence >= confidence_floor else None
        nodes.append(GlyphNode(new_id, letter, float(cls.confidence), x0 + w / 2, y0 + h / 2,
                               float(w), float(h), comp.mean_color, comp.parts))
    return nodes


def edge_weight(a: GlyphNode, b: GlyphNode, p: WeightParams) -> float:
    xs, ys, ss = p.x_scale, p.y_scale, p.size_scale
    if p.relative:
        wmax, hmax = max(a.width, b.width), max(a.height, b.height)
        xs, ys, ss = xs * wmax, ys * hmax, ss * hmax
    dcol = math.sqrt(sum((int(u) - int(v)) ** 2 for u, v in zip(a.color, b.color)))
    return (abs(a.x - b.x) / xs + abs(a.y - b.y) / ys + dcol / p.color_scale
            + abs(a.height - b.height) / ss + abs(a.width - b.width) / ss)


def weight_matrix(left: Sequence[GlyphNode], right: Sequence[GlyphNode], p: WeightParams) -> np.ndarray:
    """edge_weight for every (left, right) pair at once."""
    def arr(nodes):
        return (np.array([[n.x, n.y, n.width, n.height] for n in nodes], dtype=np.float64).reshape(-1, 4),
                np.array([n.color for n in nodes], dtype=np.float64).reshape(-1, 3))
    (a, ca), (b, cb) = arr(left), arr(right)
    xs = np.full((len(left), len(right)), p.x_scale)
    ys = np.full_like(xs, p.y_scale)
    ss = np.full_like(xs, p.size_scale)
    if p.relative:
        wmax = np.maximum(a[:, None, 2], b[None, :, 2])
        hmax = np.maximum(a[:, None, 3], b[None, :, 3])
        xs, ys, ss = xs * wmax, ys * hmax, ss * hmax
    dcol = np.sqrt(((ca[:, None, :] - cb[None, :, :]) ** 2).sum(axis=-1))
    return (np.abs(a[:, None, 0] - b[None, :, 0]) / xs + np.abs(a[:, None, 1] - b[None, :, 1]) / ys
            + dcol / p.color_scale + np.abs(a[:, None, 3] - b[None, :, 3]) / ss
            + np.abs(a[:, None, 2] - b[None, :, 2]) / ss)


# --------------------------------------------------------------------------
# bipartite matching

_LEX_LIMIT = 400  # above this many candidate pairs, skip lexicographic tie refinement


def _optimum(cost: np.ndarray) -> float:
    if cost.shape[0] == 0 or cost.shape[1] == 0:
        return 0.0
    if cost.shape[0] > cost.shape[1]:
        cost = cost.T
    cols = _kernels.assign_rows(cost)
    return float(cost[np.arange(cost.shape[0]), cols].sum())


def match_bipartite(left: Sequence[int], right: Sequence[int],
                    weight: Callable[[int, int], float] | np.ndarray) -> set[tuple[int, int]]:
    """Minimum-total-weight matching of size min(|left|, |right|).

    `weight` is either a function of (left id, right id) or a matrix indexed
    by position in `left` x `right`. Among optimal matchings the
    lexicographically smallest sorted pair list is returned.
    """
    left, right = list(left), list(right)
    if not left or not right:
        return set()
    if callable(weight):
        cost = np.array([[float(weight(l, r)) for r in right] for l in left], dtype=np.float64)
    else:
        cost = np.asarray(weight, dtype=np.float64)
        if cost.shape != (len(left), len(right)):
            raise ValueError(f"weight matrix shape {cost.shape} != ({len(left)}, {len(right)})")
    if not np.isfinite(cost).all():
        raise ValueError("weights must be finite")

    lorder = sorted(range(len(left)), key=lambda i: left[i])
    rorder = sorted(range(len(right)), key=lambda j: right[j])
    cost = cost[np.ix_(lorder, rorder)]
    ls = [left[i] for i in lorder]
    rs = [right[j] for j in rorder]
    n, m = cost.shape

    if n * m > _LEX_LIMIT:
        if n <= m:
            cols = _kernels.assign_rows(cost)
            return {(ls[i], rs[int(c)]) for i, c in enumerate(cols)}
        rows = _kernels.assign_rows(cost.T)
        return {(ls[int(r)], rs[j]) for j, r in enumerate(rows)}

    best = _optimum(cost)
    tol = 1e-9 * max(1.0, abs(best))
    need = min(n, m)
    free_r = list(range(m))
    fixed = 0.0
    pairs = set()
    for i in range(n):
        rest_l = list(range(i + 1, n))
        chosen = None
        for j in free_r:
            rest_r = [c for c in free_r if c != j]
            if min(len(rest_l), len(rest_r)) != need - len(pairs) - 1:
                continue
            total = fixed + cost[i, j] + _optimum(cost[np.ix_(rest_l, rest_r)])
            if total <= best + tol:
                chosen = j
                break
        if chosen is None:
            continue  # left i stays unmatched
        pairs.add((ls[i], rs[chosen]))
        fixed += cost[i, chosen]
        free_r.remove(chosen)
    return pairs


# --------------------------------------------------------------------------
# sweep line


def _frame(nodes: Sequence[GlyphNode], orientation: str):
    """Per node: (u, v, du, dv) with u the sweep coordinate and du its extent."""
    a = np.array([[n.x, n.y, n.width, n.height] for n in nodes], dtype=np.float64).reshape(-1, 4)
    if orientation == HORIZONTAL:
        return a[:, 0], a[:, 1], a[:, 2], a[:, 3]
    # bottom to top: u grows upward
    return -a[:, 1], a[:, 0], a[:, 3], a[:, 2]


def swap_axes(node: GlyphNode) -> GlyphNode:
    return replace(node, x=node.y, y=node.x, width=node.height, height=node.width)


def default_k(nodes: Sequence[GlyphNode], orientation: str = HORIZONTAL) -> float:
    if not nodes:
        return 1.0
    ext = [n.width if orientation == HORIZONTAL else n.height for n in nodes]
    return max(1.0, 0.25 * float(np.median(ext)))


def sweep_extract(nodes: Sequence[GlyphNode], config: SweepConfig, params: WeightParams,
                  trace: Callable[[dict], None] | None = None) -> list[WordCluster]:
    """Grow word chains with a sweep line advanced `config.k` pixels per step.

    Horizontal sweeps run left to right; vertical sweeps run bottom to top with
    x/y and width/height swapped. `trace`, when given, receives one dict per
    step with the open-chain state.
    """
    nodes = list(nodes)
    if not nodes:
        return []
    if len({n.id for n in nodes}) != len(nodes):
        raise ValueError("node ids must be unique")
    u, v, du, dv = _frame(nodes, config.orientation)
    framed = nodes if config.orientation == HORIZONTAL else [swap_axes(n) for n in nodes]
    along_fix = across_fix = 0.0
    if not params.relative:
        along_fix = config.window_along * float(np.median(du))
        across_fix = config.window_across * float(np.median(dv))

    def window(h: int, n: int) -> bool:
        d_along = u[n] - u[h]
        if d_along <= 0:
            return False
        if params.relative:
            lim_a = config.window_along * max(du[h], du[n])
            lim_c = config.window_across * max(dv[h], dv[n])
        else:
            lim_a, lim_c = along_fix, across_fix
        return d_along <= lim_a and abs(v[n] - v[h]) <= lim_c

    order = sorted(range(len(nodes)), key=lambda i: (u[i], nodes[i].id))
    start = u[order[0]]
    chains: list[list[int]] = []
    chain_of_head: dict[int, int] = {}  # head node index -> chain index
    pos = 0
    step = 0
    while pos < len(order):
        # jump straight to the next step that reaches an unvisited node
        step = max(step, int(math.ceil((u[order[pos]] - start) / config.k - 1e-12)))
        line = start + step * config.k
        batch = []
        while pos < len(order) and u[order[pos]] <= line + 1e-9:
            batch.append(order[pos])
            pos += 1
        extended, opened = [], []
        pending = batch
        while pending:
            # nodes with a plausible predecessor still pending wait for it
            ready = [n for n in pending if not any(window(p, n) for p in pending if p != n)]
            if not ready:
                ready = pending[:1]
            pending = [n for n in pending if n not in ready]
            heads = sorted(h for h in chain_of_head if any(window(h, n) for n in ready))
            assigned: dict[int, tuple[int, float]] = {}
            if heads:
                w = weight_matrix([framed[n] for n in ready], [framed[h] for h in heads], params)
                valid = np.array([[window(h, n) for h in heads] for n in ready]) & (w <= config.tau)
                # any invalid pair must cost more than all valid ones together
                cost = np.where(valid, w, float(w[valid].sum()) + 1.0)
                pos_of = {nodes[n].id: i for i, n in enumerate(ready)}
                hpos_of = {nodes[h].id: j for j, h in enumerate(heads)}
                pairs = match_bipartite([nodes[n].id for n in ready], [nodes[h].id for h in heads], cost)
                for lid, rid in sorted(pairs):
                    i, j = pos_of[lid], hpos_of[rid]
                    if valid[i, j]:
                        assigned[ready[i]] = (heads[j], float(w[i, j]))
            for n in ready:
                if n in assigned:
                    h, wt = assigned[n]
                    c = chain_of_head.pop(h)
                    chains[c].append(n)
                    chain_of_head[n] = c
                    extended.append([nodes[h].id, nodes[n].id, wt])
                else:
                    chain_of_head[n] = len(chains)
                    chains.append([n])
                    opened.append(nodes[n].id)
        if trace is not None:
            trace({
                "orientation": config.orientation,
                "step": step,
                "line": float(line if config.orientation == HORIZONTAL else -line),
                "visited": [nodes[n].id for n in batch],
                "extended": extended,
                "opened": opened,
                "open_chains": [[nodes[i].id for i in chains[c]] for c in sorted(chain_of_head.values())],
            })
        step += 1

    return [WordCluster(tuple(nodes[i] for i in chain), config.orientation) for chain in chains]


def resolve_orientations(horizontal: Sequence[WordCluster], vertical: Sequence[WordCluster],
                         fallback: Iterable[GlyphNode] = (),
                         required: Iterable[int] | None = None) -> list[WordCluster]:
    """Join the two sweeps into one cover of the letters.

    Longest clusters go first (ties: horizontal first, then smaller min node
    id). A cluster that shares letters with kept clusters only at its ends is
    trimmed and requeued unless it reads those letters more confidently and
    they end the kept clusters, in which case it takes them over. One that
    shares an inner letter takes it over on the same condition (ties
    allowed); otherwise it is dropped. Letters left uncovered become
    single-letter clusters, taken from the horizontal nodes, then the
    vertical ones, then `fallback`. Letters are compared by their source
    component parts when nodes carry them. Raises ValueError if a key in
    `required` (default: every key seen) ends up uncovered.
    """
    heap = [(-len(c), 0 if c.orientation == HORIZONTAL else 1, min(c.ids), i, reading_order(c), c.orientation)
            for i, c in enumerate(list(horizontal) + list(vertical))]
    heapq.heapify(heap)
    seq = len(heap)
    owner: dict[int, int] = {}
    slots: dict[int, WordCluster] = {}
    next_slot = 0
    while heap:
        _, rank, mid, _, nodes, orientation = heapq.heappop(heap)
        clash = [i for i, n in enumerate(nodes) if any(k in owner for k in n.keys)]
        if not clash:
            slots[next_slot] = WordCluster(tuple(nodes), orientation)
            owner.update({k: next_slot for n in nodes for k in n.keys})
            next_slot += 1
            continue
        inner = [i for i in clash if 0 < i < len(nodes) - 1]
        steals = _steals([nodes[i] for i in clash], owner, slots, strict=not inner) if len(nodes) > 1 else None
        if steals is None and inner:
            continue
        if steals is None:
            rest = [n for i, n in enumerate(nodes) if i not in clash]
            if rest:
                heapq.heappush(heap, (-len(rest), rank, min(n.id for n in rest), seq, rest, orientation))
                seq += 1
            continue
        for slot, victim in steals:
            left = tuple(n for n in slots[slot].nodes if n is not victim)
            for k in victim.keys:
                owner.pop(k, None)
            if left:
                slots[slot] = WordCluster(left, slots[slot].orientation)
            else:
                del slots[slot]
        heapq.heappush(heap, (-len(nodes), rank, mid, seq, nodes, orientation))
        seq += 1
    kept = list(slots.values())
    covered = set(owner)

    seen_keys: set[int] = set()
    for source in ([n for c in horizontal for n in c.nodes], [n for c in vertical for n in c.nodes],
                   list(fallback)):
        for n in sorted(source, key=lambda n: n.id):
            seen_keys.update(n.keys)
            if not covered.intersection(n.keys):
                covered.update(n.keys)
                kept.append(WordCluster((n,), HORIZONTAL))
    missing = (seen_keys if required is None else set(required)) - covered
    if missing:
        raise ValueError(f"letters {sorted(missing)} could not be covered")
    kept.sort(key=lambda c: (c.bbox[1], c.bbox[0], c.orientation, min(c.ids)))
    return kept


def split_at_gaps(cluster: WordCluster, implied_size: Callable[[GlyphNode, str], float | None],
                  expected_gap: Callable[[GlyphNode, GlyphNode, float], float],
                  tolerance: float) -> list[WordCluster]:
    """Cut a cluster wherever the blank run between neighbours is off by more than `tolerance` px.

    `implied_size(node, orientation)` is the font size a node's glyph implies
    (None when unknown); `expected_gap(a, b, size)` is the run the font leaves
    between a and b at that size. Pairs with an unknown size are never cut.
    """
    nodes = reading_order(cluster)
    pieces, current = [], [nodes[0]]
    for a, b in zip(nodes, nodes[1:]):
        if cluster.orientation == HORIZONTAL:
            gap = (b.x - b.width / 2) - (a.x + a.width / 2)
        else:
            gap = (a.y - a.height / 2) - (b.y + b.height / 2)
        sa, sb = implied_size(a, cluster.orientation), implied_size(b, cluster.orientation)
        if sa is not None and sb is not None and abs(gap - expected_gap(a, b, (sa + sb) / 2)) > tolerance:
            pieces.append(current)
            current = []
        current.append(b)
    pieces.append(current)
    return [WordCluster(tuple(p), cluster.orientation) for p in pieces]


def split_at_size_change(cluster: WordCluster, implied_size: Callable[[GlyphNode, str], float | None],
                         tolerance: float, min_letters: int = 2) -> list[WordCluster]:
    """Cut a cluster where the font size implied by its glyphs steps by more than `tolerance`.

    The cut goes at the junction that best fits two constant-size runs (least
    squares on log size), each holding at least `min_letters` sized glyphs.
    Pieces are split again until no step exceeds the tolerance.
    """
    nodes = reading_order(cluster)
    sizes = [implied_size(n, cluster.orientation) for n in nodes]
    best = None
    for j in range(1, len(nodes)):
        left = np.array([s for s in sizes[:j] if s])
        right = np.array([s for s in sizes[j:] if s])
        if left.size < min_letters or right.size < min_letters:
            continue
        ll, lr = np.log(left), np.log(right)
        sse = float(((ll - ll.mean()) ** 2).sum() + ((lr - lr.mean()) ** 2).sum())
        if best is None or sse < best[0]:
            best = (sse, j, left, right)
    if best is None:
        return [cluster]
    _, j, left, right = best
    ml, mr = left.mean(), right.mean()
    # one misread glyph skews its run: every glyph must side with its own run
    sides = (np.abs(left - ml) < np.abs(left - mr)).all() and (np.abs(right - mr) < np.abs(right - ml)).all()
    if abs(ml - mr) <= tolerance or not sides:
        return [cluster]
    out = []
    for part in (nodes[:j], nodes[j:]):
        out.extend(split_at_size_change(WordCluster(tuple(part), cluster.orientation), implied_size,
                                        tolerance, min_letters))
    return out


def _steals(wanted, owner, slots, strict=False):
    """(slot, node) pairs to release so `wanted` nodes become free, or None.

    Only end nodes of kept clusters can be released, and only to a reading
    at least as confident (strictly more with `strict`).
    """
    out = []
    for node in wanted:
        for k in node.keys:
            if k not in owner:
                continue
            slot = owner[k]
            ordered = reading_order(slots[slot])
            victim = next(n for n in ordered if k in n.keys)
            if victim is not ordered[0] and victim is not ordered[-1]:
                return None
            if victim.confidence > node.confidence or (strict and victim.confidence == node.confidence):
                return None
            if all(v is not victim for _, v in out):
                out.append((slot, victim))
    return out


def check_partition(clusters: Sequence[WordCluster], keys: Iterable[int]) -> None:
    """Raise if `clusters` do not cover every key exactly once."""
    seen: list[int] = [k for c in clusters for n in c.nodes for k in n.keys]
    expected = sorted(keys)
    if sorted(seen) != expected:
        dup = sorted({k for k in seen if seen.count(k) > 1})
        lost = sorted(set(expected) - set(seen))
        raise AssertionError(f"word clusters are not a partition (duplicated {dup}, missing {lost})")


def reading_order(cluster: WordCluster) -> list[GlyphNode]:
    """Nodes left to right, or bottom to top for vertical clusters."""
    if cluster.orientation == HORIZONTAL:
        return sorted(cluster.nodes, key=lambda n: (n.x, n.id))
    return sorted(cluster.nodes, key=lambda n: (-n.y, n.id))


def chain_to_word(cluster: WordCluster) -> str:
    return "".join(n.letter if n.letter is not None else UNKNOWN for n in reading_order(cluster))


def dump_trace_line(event: dict) -> str:
    return json.dumps(event, sort_keys=True)
