#!/usr/bin/env python3
"""
Causal Discovery

Constraint-based skeleton recovery under a root (control variable)
constraint, orientation by the root rule, Meek closure and normalized-HSIC
direction scores, consensus aggregation over per-experiment graphs, and the
lagged extension for instantaneous plus lagged relations.
"""

import itertools
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np

from config import DiscoveryConfig, derive_seed
from dataset import Experiment, NodeSchema, root_name
from errors import DataError
from kernels import IndependenceResult, direction_score, kci_test

logger = logging.getLogger(__name__)

Edge = Tuple[str, str]
Pair = FrozenSet[str]
# (node_a, node_b, conditioning names) -> test result
CITester = Callable[[str, str, Tuple[str, ...]], IndependenceResult]
# (cause names, effect name) -> normalized HSIC delta
DirectionScorer = Callable[[Sequence[str], str], float]

TIE_TOLERANCE = 1e-12


@dataclass
class CausalGraph:
    """
    Partially or fully directed graph over variable nodes.

    directed holds (from, to) pairs, undirected holds unordered pairs; a pair
    appears in at most one of them. inclusion is filled on consensus graphs.
    """

    nodes: List[str]
    root: Optional[str] = None
    directed: Set[Edge] = field(default_factory=set)
    undirected: Set[Pair] = field(default_factory=set)
    inclusion: Dict[Edge, Fraction] = field(default_factory=dict)
    sepsets: Dict[Pair, Tuple[str, ...]] = field(default_factory=dict)
    diagnostics: List[str] = field(default_factory=list)

    def _check_pair(self, a: str, b: str) -> None:
        if a == b:
            raise DataError(f"Self-loop on '{a}' is not allowed")
        for node in (a, b):
            if node not in self.nodes:
                raise DataError(f"Unknown node '{node}'")

    def adjacent(self, a: str, b: str) -> bool:
        return (a, b) in self.directed or (b, a) in self.directed or frozenset((a, b)) in self.undirected

    def add_undirected(self, a: str, b: str) -> None:
        self._check_pair(a, b)
        if self.adjacent(a, b):
            raise DataError(f"Edge {a}-{b} already present")
        self.undirected.add(frozenset((a, b)))

    def add_directed(self, a: str, b: str) -> None:
        self._check_pair(a, b)
        if self.adjacent(a, b):
            raise DataError(f"Edge {a}-{b} already present")
        self.directed.add((a, b))

    def remove_edge(self, a: str, b: str) -> None:
        self.undirected.discard(frozenset((a, b)))
        self.directed.discard((a, b))
        self.directed.discard((b, a))

    def orient(self, a: str, b: str) -> None:
        """Replace the undirected edge a-b by a -> b."""
        self.undirected.remove(frozenset((a, b)))
        self.directed.add((a, b))

    def neighbors(self, node: str) -> Set[str]:
        return self.parents(node) | self.children(node) | self.undirected_neighbors(node)

    def parents(self, node: str) -> Set[str]:
        return {a for a, b in self.directed if b == node}

    def children(self, node: str) -> Set[str]:
        return {b for a, b in self.directed if a == node}

    def undirected_neighbors(self, node: str) -> Set[str]:
        return {next(iter(pair - {node})) for pair in self.undirected if node in pair}

    def skeleton(self) -> Set[Pair]:
        return set(self.undirected) | {frozenset(e) for e in self.directed}

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(self.nodes)
        graph.add_edges_from(sorted(self.directed))
        return graph

    def has_directed_path(self, a: str, b: str) -> bool:
        return nx.has_path(self.to_networkx(), a, b)

    def is_fully_oriented(self) -> bool:
        return not self.undirected

    def v_structures(self) -> Set[Tuple[str, str, str]]:
        """Unshielded colliders (a, c, b) with a -> c <- b, a < b, a and b nonadjacent."""
        found = set()
        for c in self.nodes:
            for a, b in itertools.combinations(sorted(self.parents(c)), 2):
                if not self.adjacent(a, b):
                    found.add((a, c, b))
        return found

    def copy(self) -> 'CausalGraph':
        return CausalGraph(
            list(self.nodes), self.root, set(self.directed), set(self.undirected),
            dict(self.inclusion), dict(self.sepsets), list(self.diagnostics),
        )


def complete_graph(nodes: Sequence[str], root: Optional[str]) -> CausalGraph:
    graph = CausalGraph(list(nodes), root)
    for a, b in itertools.combinations(nodes, 2):
        graph.add_undirected(a, b)
    return graph


# ============================================================================
# Conditional-independence testers
# ============================================================================

class KernelCITester:
    """KCI tests over the node series of one experiment, cached per query."""

    def __init__(self, experiment: Experiment, cfg: DiscoveryConfig):
        self.experiment = experiment
        self.cfg = cfg
        self.cache: Dict[Tuple[Pair, Tuple[str, ...]], IndependenceResult] = {}
        self.degenerate: Set[str] = set()

    def __call__(self, a: str, b: str, cond: Tuple[str, ...]) -> IndependenceResult:
        key = (frozenset((a, b)), tuple(sorted(cond)))
        if key not in self.cache:
            first, second = sorted((a, b))
            z = self.experiment.block(key[1]) if key[1] else None
            result = kci_test(
                self.experiment.series[first], self.experiment.series[second], z,
                alpha=self.cfg.alpha, method=self.cfg.ci_method,
                n_permutations=self.cfg.n_permutations,
                seed=derive_seed(self.cfg.seed, first, second, *key[1]),
                ridge=self.cfg.ridge,
            )
            if result.degenerate:
                for node in (first, second):
                    if np.all(self.experiment.series[node] == self.experiment.series[node][0]):
                        self.degenerate.add(node)
            self.cache[key] = result
        return self.cache[key]


class KernelDirectionScorer:
    """Normalized-HSIC direction scores with the root series as surrogate."""

    def __init__(self, experiment: Experiment, root: str, cfg: DiscoveryConfig):
        self.experiment = experiment
        self.root = root
        self.cfg = cfg
        self.cache: Dict[Tuple[Tuple[str, ...], str], float] = {}

    def __call__(self, causes: Sequence[str], effect: str) -> float:
        key = (tuple(sorted(causes)), effect)
        if key not in self.cache:
            self.cache[key] = direction_score(
                self.experiment.block(key[0]), self.experiment.series[effect],
                self.experiment.series[self.root], ridge=self.cfg.ridge,
            ).delta
        return self.cache[key]


# ============================================================================
# Skeleton recovery
# ============================================================================

def _find_separating_set(
    a: str, b: str, candidates: Iterable[str], tester: CITester, cap: Optional[int],
) -> Optional[Tuple[str, ...]]:
    """First conditioning set (increasing size, lexicographic) that renders a, b independent."""
    candidates = sorted(candidates)
    largest = len(candidates) if cap is None else min(cap, len(candidates))
    for size in range(largest + 1):
        for cond in itertools.combinations(candidates, size):
            if tester(a, b, cond).independent:
                return cond
    return None


def recover_skeleton(
    experiment: Optional[Experiment],
    schema: Sequence[NodeSchema],
    cfg: DiscoveryConfig,
    tester: Optional[CITester] = None,
) -> CausalGraph:
    """
    Undirected skeleton under the root constraint.

    Starting from the complete graph, a root-V_i edge is removed when V_i is
    independent of the root given some subset of the other non-root nodes;
    a V_i-V_j edge is removed when they are independent given some subset of
    the other non-root nodes plus the root. Separating sets are recorded.

    Args:
        experiment: Node series (may be None when a tester is supplied)
        schema: Node schema; exactly one node has role=root
        cfg: Discovery settings (alpha, conditioning-size cap, CI method)
        tester: Optional CI test plug-in (e.g. a d-separation oracle)

    Returns:
        CausalGraph: Undirected skeleton with sepsets
    """
    root = root_name(schema)
    nodes = [n.name for n in schema]
    if tester is None:
        if experiment is None:
            raise DataError("recover_skeleton needs an experiment or a tester")
        tester = KernelCITester(experiment, cfg)

    graph = complete_graph(nodes, root)
    others = [n for n in nodes if n != root]

    for v in others:
        sep = _find_separating_set(v, root, [k for k in others if k != v], tester,
                                   cfg.max_conditioning_size)
        if sep is not None:
            graph.remove_edge(v, root)
            graph.sepsets[frozenset((v, root))] = sep
            logger.debug(f"Removed {root}-{v} given {sep}")

    for vi, vj in itertools.combinations(others, 2):
        candidates = [k for k in others if k not in (vi, vj)] + [root]
        sep = _find_separating_set(vi, vj, candidates, tester, cfg.max_conditioning_size)
        if sep is not None:
            graph.remove_edge(vi, vj)
            graph.sepsets[frozenset((vi, vj))] = sep
            logger.debug(f"Removed {vi}-{vj} given {sep}")

    for node in sorted(getattr(tester, 'degenerate', ())):
        graph.diagnostics.append(f"degenerate node series: {node}")
    logger.info(f"Skeleton over {len(nodes)} nodes keeps {len(graph.undirected)} edges")
    return graph


# ============================================================================
# Orientation
# ============================================================================

def _try_orient(graph: CausalGraph, a: str, b: str, reason: str) -> bool:
    """Orient the undirected edge a-b as a -> b unless that breaks the root or acyclicity."""
    if frozenset((a, b)) not in graph.undirected:
        return False
    if b == graph.root:
        graph.diagnostics.append(f"{reason}: refused {a}->{b} into the root")
        return False
    if graph.has_directed_path(b, a):
        graph.diagnostics.append(f"{reason}: {a}->{b} would create a cycle; left undirected")
        return False
    graph.orient(a, b)
    logger.debug(f"Oriented {a}->{b} ({reason})")
    return True


def _orient_colliders(graph: CausalGraph) -> None:
    """Unshielded triples a - c - b whose separating set excludes c become a -> c <- b."""
    for c in sorted(graph.nodes):
        for a, b in itertools.combinations(sorted(graph.neighbors(c)), 2):
            if graph.adjacent(a, b):
                continue
            sepset = graph.sepsets.get(frozenset((a, b)))
            if sepset is None or c in sepset:
                continue
            for tail in (a, b):
                if (c, tail) in graph.directed:
                    graph.diagnostics.append(f"collider {a}->{c}<-{b} conflicts with {c}->{tail}")
                else:
                    _try_orient(graph, tail, c, 'collider')


def _meek_step(graph: CausalGraph) -> bool:
    """Apply the four Meek rules once to every undirected edge; True if anything changed."""
    changed = False
    for pair in sorted(graph.undirected, key=sorted):
        if pair not in graph.undirected:
            continue
        for a, b in (tuple(sorted(pair)), tuple(sorted(pair))[::-1]):
            if frozenset((a, b)) not in graph.undirected:
                break
            # Rule 1: c -> a - b, c and b nonadjacent
            if any(not graph.adjacent(c, b) for c in graph.parents(a) if c != b):
                changed |= _try_orient(graph, a, b, 'meek-1')
                continue
            # Rule 2: a -> c -> b
            if graph.children(a) & graph.parents(b):
                changed |= _try_orient(graph, a, b, 'meek-2')
                continue
            # Rule 3: a - c -> b, a - d -> b, c and d nonadjacent
            spouses = sorted(graph.undirected_neighbors(a) & graph.parents(b))
            if any(not graph.adjacent(c, d) for c, d in itertools.combinations(spouses, 2)):
                changed |= _try_orient(graph, a, b, 'meek-3')
                continue
            # Rule 4: c -> d -> b with a adjacent to c and d, c and b nonadjacent
            rule4 = False
            for d in graph.parents(b):
                if not graph.adjacent(a, d):
                    continue
                for c in graph.parents(d):
                    if c not in (a, b) and graph.adjacent(a, c) and not graph.adjacent(c, b):
                        rule4 = True
                        break
                if rule4:
                    break
            if rule4:
                changed |= _try_orient(graph, a, b, 'meek-4')
    return changed


def apply_meek_rules(graph: CausalGraph) -> CausalGraph:
    while _meek_step(graph):
        pass
    return graph


def _pick_smallest(scores: Dict[str, float], graph: CausalGraph, reason: str) -> str:
    best_value = min(scores.values())
    tied = sorted(v for v, s in scores.items() if abs(s - best_value) <= TIE_TOLERANCE)
    if len(tied) > 1:
        graph.diagnostics.append(f"{reason}: direction-score tie among {', '.join(tied)}; picked {tied[0]}")
    return tied[0]


def orient_edges(
    skeleton: CausalGraph,
    experiment: Optional[Experiment],
    cfg: DiscoveryConfig,
    scorer: Optional[DirectionScorer] = None,
) -> CausalGraph:
    """
    Maximally orient a skeleton.

    Root edges point out of the root, unshielded colliders and Meek rules are
    closed, then nodes adjacent to the root that keep undirected edges are
    resolved one at a time by the smallest normalized HSIC (all undirected
    edges pointed into the chosen node). Any leftover undirected edge is
    resolved pairwise by comparing both direction scores.

    Args:
        skeleton: Output of recover_skeleton (with sepsets)
        experiment: Node series for direction scores (unused with a scorer)
        cfg: Discovery settings
        scorer: Optional direction-score plug-in

    Returns:
        CausalGraph: New graph; never contains a directed cycle
    """
    graph = skeleton.copy()
    root = graph.root
    if root is None or root not in graph.nodes:
        raise DataError("orient_edges needs a skeleton with a root node")
    if scorer is None:
        if experiment is None:
            raise DataError("orient_edges needs an experiment or a scorer")
        scorer = KernelDirectionScorer(experiment, root, cfg)

    for v in sorted(graph.undirected_neighbors(root)):
        graph.orient(root, v)

    _orient_colliders(graph)
    apply_meek_rules(graph)

    pending = sorted(v for v in graph.children(root) if graph.undirected_neighbors(v))
    while pending:
        scores = {}
        for v in pending:
            causes = sorted(graph.parents(v) | graph.undirected_neighbors(v))
            scores[v] = scorer(causes, v)
        best = _pick_smallest(scores, graph, 'root-adjacent orientation')
        for z in sorted(graph.undirected_neighbors(best)):
            _try_orient(graph, z, best, 'direction-score')
        pending = [v for v in pending if v != best and graph.undirected_neighbors(v)]

    for pair in sorted(graph.undirected, key=sorted):
        if pair not in graph.undirected:
            continue
        a, b = sorted(pair)
        forward, backward = scorer([a], b), scorer([b], a)
        if abs(forward - backward) <= TIE_TOLERANCE:
            graph.diagnostics.append(f"pairwise orientation: direction-score tie on {a}-{b}; picked {a}->{b}")
            _try_orient(graph, a, b, 'pairwise')
        elif forward < backward:
            _try_orient(graph, a, b, 'pairwise')
        else:
            _try_orient(graph, b, a, 'pairwise')
        apply_meek_rules(graph)

    return graph


def discover(
    experiment: Experiment,
    schema: Sequence[NodeSchema],
    cfg: DiscoveryConfig,
    tester: Optional[CITester] = None,
    scorer: Optional[DirectionScorer] = None,
) -> CausalGraph:
    skeleton = recover_skeleton(experiment, schema, cfg, tester)
    graph = orient_edges(skeleton, experiment, cfg, scorer)
    logger.info(f"Discovered graph for '{experiment.id if experiment else 'oracle'}': "
                f"{len(graph.directed)} directed, {len(graph.undirected)} undirected edges")
    return graph


# ============================================================================
# Consensus
# ============================================================================

def aggregate(graphs: Sequence[CausalGraph], threshold: float) -> CausalGraph:
    """
    Consensus graph from per-experiment graphs.

    The inclusion probability of a directed edge is the exact fraction of
    graphs containing it; edges above the threshold are kept, opposing pairs
    keep the more frequent direction (ties keep neither), and any cycle loses
    its lowest-inclusion edge.
    """
    if not graphs:
        raise DataError("aggregate needs at least one graph")
    nodes = sorted(graphs[0].nodes)
    for graph in graphs[1:]:
        if sorted(graph.nodes) != nodes:
            raise DataError("aggregate: graphs do not share the node set")

    total = len(graphs)
    counts: Dict[Edge, int] = {}
    for graph in graphs:
        for edge in graph.directed:
            counts[edge] = counts.get(edge, 0) + 1

    consensus = CausalGraph(list(graphs[0].nodes), graphs[0].root)
    consensus.inclusion = {edge: Fraction(k, total) for edge, k in sorted(counts.items())}
    kept = {edge: p for edge, p in consensus.inclusion.items() if p > threshold}

    for (a, b), p in sorted(kept.items()):
        if (b, a) in kept:
            q = kept[(b, a)]
            if p == q:
                if a < b:
                    consensus.diagnostics.append(f"consensus tie {a}<->{b} at {float(p):.4f}; both dropped")
                continue
            if p < q:
                continue
        consensus.directed.add((a, b))

    while True:
        try:
            cycle = nx.find_cycle(consensus.to_networkx())
        except nx.NetworkXNoCycle:
            break
        edges = [(a, b) for a, b in cycle]
        weakest = min(edges, key=lambda e: (consensus.inclusion[e], e))
        consensus.directed.discard(weakest)
        consensus.diagnostics.append(
            f"consensus cycle {' -> '.join(a for a, _ in edges)}: dropped {weakest[0]}->{weakest[1]} "
            f"(inclusion {float(consensus.inclusion[weakest]):.4f})"
        )

    logger.info(f"Consensus over {total} graphs keeps {len(consensus.directed)} edges (threshold {threshold})")
    return consensus


def structural_hamming_distance(estimated: CausalGraph, truth: CausalGraph) -> int:
    """Missing, extra and differently oriented edges (undirected counts as a mismatch)."""
    distance = 0
    for a, b in itertools.combinations(sorted(set(estimated.nodes) | set(truth.nodes)), 2):
        est = _pair_state(estimated, a, b)
        tru = _pair_state(truth, a, b)
        if est != tru:
            distance += 1
    return distance


def _pair_state(graph: CausalGraph, a: str, b: str) -> str:
    if (a, b) in graph.directed:
        return 'forward'
    if (b, a) in graph.directed:
        return 'backward'
    if frozenset((a, b)) in graph.undirected:
        return 'undirected'
    return 'none'


# ============================================================================
# Lagged extension
# ============================================================================

def lag_name(node: str, lag: int) -> str:
    return f"{node}@lag{lag}"


def lagged_expand(experiment: Experiment, lags: int) -> Experiment:
    """
    Lagged copies V@lag(L+1-l) = (V(l), ..., V(T-L+l-1)) for l = 1..L+1.

    All augmented series share length T - L; lags = 0 returns a copy.
    """
    if lags < 0:
        raise DataError("lag count must be non-negative")
    if lags == 0:
        return Experiment(experiment.id, {k: v.copy() for k, v in experiment.series.items()})
    T = experiment.length
    if T <= lags + 1:
        raise DataError(f"Lag count {lags} too large for series of length {T}")
    series = {}
    for name, values in experiment.series.items():
        for l in range(1, lags + 2):
            series[lag_name(name, lags + 1 - l)] = values[l - 1:T - lags + l - 1].copy()
    return Experiment(experiment.id, series)


def _shift(names: Tuple[str, ...], k: int, lags: int) -> Tuple[str, ...]:
    shifted = []
    for name in names:
        base, _, lag = name.rpartition('@lag')
        if base and int(lag) + k <= lags:
            shifted.append(lag_name(base, int(lag) + k))
    return tuple(shifted)


def _lag_of(name: str) -> Tuple[str, int]:
    base, _, lag = name.rpartition('@lag')
    return base, int(lag)


def lag_order_violations(graph: CausalGraph, root: str) -> List[Edge]:
    """Directed edges that run from a lower lag index into a higher one, or into a root copy."""
    bad = []
    for a, b in sorted(graph.directed):
        (_, lag_a), (base_b, lag_b) = _lag_of(a), _lag_of(b)
        if lag_a < lag_b or base_b == root:
            bad.append((a, b))
    return bad


def discover_lagged(
    experiment: Experiment,
    schema: Sequence[NodeSchema],
    lags: int,
    cfg: DiscoveryConfig,
    tester: Optional[CITester] = None,
    scorer: Optional[DirectionScorer] = None,
) -> CausalGraph:
    """
    Discovery over instantaneous and lagged relations.

    Every series, the root included, is copied at lags 0..L. Tests run
    against the current (lag-0) copies and every removal is replicated
    across time shifts. Edges never run from a lower lag index into a
    higher one, and a root copy only connects to nodes at its own lag or a
    more recent one. Lagged edges point from past to future; instantaneous
    edges are oriented on the lag-0 slice and replicated.
    """
    if lags == 0:
        return discover(experiment, schema, cfg, tester, scorer)
    root = root_name(schema)
    variables = [n.name for n in schema if n.name != root]
    every = [root] + variables
    augmented = lagged_expand(experiment, lags)
    root0 = lag_name(root, 0)
    if tester is None:
        tester = KernelCITester(augmented, cfg)

    nodes = [lag_name(v, k) for k in range(lags + 1) for v in every]
    graph = complete_graph(nodes, root0)
    cap = cfg.max_conditioning_size

    def remove(a: str, b: str, sep: Tuple[str, ...]) -> None:
        if graph.adjacent(a, b):
            graph.remove_edge(a, b)
        graph.sepsets[frozenset((a, b))] = sep

    # temporal constraints: root copies are exogenous, the future never causes the past
    forbidden = 0
    for a, b in itertools.combinations(nodes, 2):
        (base_a, lag_a), (base_b, lag_b) = _lag_of(a), _lag_of(b)
        both_roots = base_a == root and base_b == root
        older_than_root = (base_a == root and lag_b > lag_a) or (base_b == root and lag_a > lag_b)
        if both_roots or older_than_root:
            graph.remove_edge(a, b)
            forbidden += 1
    logger.debug(f"Removed {forbidden} edges forbidden by time order")

    for l in range(1, lags + 1):
        for vi in variables:
            for vj in every:
                a, b = lag_name(vi, 0), lag_name(vj, l)
                if not graph.adjacent(a, b):
                    continue
                sep = _find_separating_set(a, b, [n for n in nodes if n not in (a, b)], tester, cap)
                if sep is not None:
                    for k in range(lags - l + 1):
                        remove(lag_name(vi, k), lag_name(vj, l + k), _shift(sep, k, lags))

    for vi, vj in itertools.combinations(every, 2):
        a, b = lag_name(vi, 0), lag_name(vj, 0)
        sep = _find_separating_set(a, b, [n for n in nodes if n not in (a, b)], tester, cap)
        if sep is not None:
            for k in range(lags + 1):
                remove(lag_name(vi, k), lag_name(vj, k), _shift(sep, k, lags))

    # lagged edges: past causes future
    for pair in sorted(graph.undirected, key=sorted):
        a, b = sorted(pair)
        lag_a, lag_b = _lag_of(a)[1], _lag_of(b)[1]
        if lag_a > lag_b:
            graph.orient(a, b)
        elif lag_b > lag_a:
            graph.orient(b, a)

    # instantaneous slice: orient lag-0 nodes with the root, replicate to older slices
    current = [lag_name(v, 0) for v in every]
    slice_graph = CausalGraph(current, root0)
    slice_graph.undirected = {p for p in graph.undirected if p <= set(current)}
    slice_graph.sepsets = {p: tuple(s for s in sep if s in current)
                           for p, sep in graph.sepsets.items() if p <= set(current)}
    if scorer is None:
        scorer = KernelDirectionScorer(augmented, root0, cfg)
    oriented = orient_edges(slice_graph, augmented, cfg, scorer)
    graph.diagnostics.extend(oriented.diagnostics)

    for a, b in sorted(oriented.directed):
        base_a, base_b = _lag_of(a)[0], _lag_of(b)[0]
        for k in range(lags + 1):
            if frozenset((lag_name(base_a, k), lag_name(base_b, k))) in graph.undirected:
                graph.orient(lag_name(base_a, k), lag_name(base_b, k))
    for pair in sorted(graph.undirected, key=sorted):
        roots = [n for n in pair if _lag_of(n)[0] == root]
        if roots:
            graph.orient(roots[0], next(iter(pair - {roots[0]})))

    violations = lag_order_violations(graph, root)
    if violations:
        raise DataError(f"Lagged discovery produced edges against time order: {violations}")
    logger.info(f"Lagged discovery (L={lags}) keeps {len(graph.directed)} directed, "
                f"{len(graph.undirected)} undirected edges")
    return graph


# ============================================================================
# Serialization
# ============================================================================

def graph_to_json(graph: CausalGraph) -> dict:
    edges = []
    for a, b in sorted(graph.directed):
        entry = {'from': a, 'to': b}
        if (a, b) in graph.inclusion:
            entry['inclusion'] = float(graph.inclusion[(a, b)])
        edges.append(entry)
    report = {
        'nodes': list(graph.nodes),
        'root': graph.root,
        'edges': edges,
        'undirected': [sorted(p) for p in sorted(graph.undirected, key=sorted)],
        'diagnostics': list(graph.diagnostics),
    }
    if graph.inclusion:
        report['inclusion'] = [
            {'from': a, 'to': b, 'inclusion': float(p), 'fraction': f"{p.numerator}/{p.denominator}"}
            for (a, b), p in sorted(graph.inclusion.items())
        ]
    return report


def graph_from_json(data: dict) -> CausalGraph:
    try:
        graph = CausalGraph(list(data['nodes']), data.get('root'))
        for edge in data.get('edges', []):
            graph.add_directed(edge['from'], edge['to'])
        for a, b in data.get('undirected', []):
            graph.add_undirected(a, b)
        for entry in data.get('inclusion', []):
            num, den = entry['fraction'].split('/')
            graph.inclusion[(entry['from'], entry['to'])] = Fraction(int(num), int(den))
        graph.diagnostics = list(data.get('diagnostics', []))
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"Malformed graph JSON: {e}")
    return graph


def load_graph(path: str) -> CausalGraph:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return graph_from_json(json.load(f))
    except FileNotFoundError:
        raise DataError(f"Graph file not found: {path}")
    except json.JSONDecodeError as e:
        raise DataError(f"Graph file {path} is not valid JSON: {e}")


def graph_to_dot(graph: CausalGraph, name: str = 'causal_graph') -> str:
    lines = [f'digraph "{name}" {{']
    for node in graph.nodes:
        shape = ' [shape=box]' if node == graph.root else ''
        lines.append(f'  "{node}"{shape};')
    for a, b in sorted(graph.directed):
        label = f' [label="{float(graph.inclusion[(a, b)]):.2f}"]' if (a, b) in graph.inclusion else ''
        lines.append(f'  "{a}" -> "{b}"{label};')
    for pair in sorted(graph.undirected, key=sorted):
        a, b = sorted(pair)
        lines.append(f'  "{a}" -> "{b}" [dir=none];')
    lines.append('}')
    return '\n'.join(lines) + '\n'
