#!/usr/bin/env python3
"""
Graph Operations

DAG validation and the decomposition of a consensus DAG into supervised
learning tasks: leaves of the shrinking graph are peeled off together with
their predecessors, tasks with identical input sets are merged, and the
merged tasks are scheduled so every input is known before it is needed.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import networkx as nx

from discovery import CausalGraph
from errors import DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LearningTask:
    inputs: Tuple[str, ...]
    outputs: Tuple[str, ...]
    order_index: int = 0

    def __post_init__(self):
        if not self.inputs or not self.outputs:
            raise DataError("A learning task needs non-empty inputs and outputs")
        if set(self.inputs) & set(self.outputs):
            raise DataError(f"Task inputs and outputs overlap: {sorted(set(self.inputs) & set(self.outputs))}")

    @property
    def key(self) -> str:
        """Stable identifier used for model file names and config overrides."""
        return '+'.join(self.outputs)


@dataclass
class TaskPlan:
    tasks: List[LearningTask]
    roots: Tuple[str, ...]
    leaves: Tuple[str, ...]
    # original DAG parents of every task output
    parents: Dict[str, Tuple[str, ...]] = field(default_factory=dict)

    def task_for(self, node: str) -> LearningTask:
        for task in self.tasks:
            if node in task.outputs:
                return task
        raise DataError(f"No task predicts node '{node}'")


def find_cycle(graph: CausalGraph) -> List[str]:
    """Nodes of one directed cycle in order, or [] when the directed part is acyclic."""
    try:
        cycle = nx.find_cycle(graph.to_networkx())
    except nx.NetworkXNoCycle:
        return []
    return [a for a, _ in cycle]


def validate_dag(graph: CausalGraph) -> Tuple[bool, List[str]]:
    """
    Check for self-loops and directed cycles.

    Returns:
        (valid, diagnostics): valid is True iff the directed edges form a DAG
    """
    diagnostics = []
    for a, b in sorted(graph.directed):
        if a == b:
            diagnostics.append(f"self-loop: {a}")
    cycle = find_cycle(graph)
    if cycle:
        diagnostics.append(f"cycle: {' -> '.join(cycle + [cycle[0]])}")
    return not diagnostics, diagnostics


def decompose(graph: CausalGraph) -> TaskPlan:
    """
    Split a fully oriented DAG into merged (inputs -> outputs) learning tasks.

    The lexicographically smallest leaf of the shrinking graph is taken each
    round; the merged plan does not depend on that choice.
    """
    if graph.undirected:
        raise DataError(f"decompose needs a fully oriented graph; {len(graph.undirected)} undirected edge(s) left")
    if not graph.directed:
        raise DataError("decompose needs a graph with at least one edge")
    valid, diagnostics = validate_dag(graph)
    if not valid:
        raise DataError(f"decompose needs an acyclic graph: {'; '.join(diagnostics)}")

    remaining: Set[Tuple[str, str]] = set(graph.directed)
    pairs: List[Tuple[Tuple[str, ...], str]] = []
    while remaining:
        targets = {b for _, b in remaining}
        sources = {a for a, _ in remaining}
        leaf = min(targets - sources)
        predecessors = tuple(sorted(a for a, b in remaining if b == leaf))
        pairs.append((predecessors, leaf))
        remaining = {(a, b) for a, b in remaining if b != leaf}

    merged: Dict[Tuple[str, ...], List[str]] = {}
    for inputs, output in pairs:
        merged.setdefault(inputs, []).append(output)
    unordered = [LearningTask(inputs, tuple(sorted(outputs))) for inputs, outputs in merged.items()]

    task_graph = nx.DiGraph()
    by_key = {task.key: task for task in unordered}
    task_graph.add_nodes_from(by_key)
    for upstream in unordered:
        for downstream in unordered:
            if set(upstream.outputs) & set(downstream.inputs):
                task_graph.add_edge(upstream.key, downstream.key)
    schedule = list(nx.lexicographical_topological_sort(task_graph))
    tasks = [LearningTask(by_key[k].inputs, by_key[k].outputs, i) for i, k in enumerate(schedule)]

    nx_graph = graph.to_networkx()
    roots = tuple(sorted(n for n in graph.nodes if nx_graph.in_degree(n) == 0))
    leaves = tuple(sorted(n for n in graph.nodes if nx_graph.in_degree(n) > 0 and nx_graph.out_degree(n) == 0))
    parents = {n: tuple(sorted(graph.parents(n))) for n in sorted(graph.nodes) if graph.parents(n)}

    logger.info(f"Decomposed {len(graph.directed)} edges into {len(tasks)} learning tasks")
    for task in tasks:
        logger.info(f"  - task {task.order_index}: {', '.join(task.inputs)} -> {', '.join(task.outputs)}")
    return TaskPlan(tasks, roots, leaves, parents)


def prediction_order(plan: TaskPlan) -> List[str]:
    """Roots first, then task outputs in schedule order."""
    order = list(plan.roots)
    for task in sorted(plan.tasks, key=lambda t: t.order_index):
        missing = [n for n in task.inputs if n not in order]
        if missing:
            raise DataError(f"Task {task.key} scheduled before its inputs {missing}")
        order.extend(n for n in task.outputs if n not in order)
    return order


def plan_edges(plan: TaskPlan) -> Set[Tuple[str, str]]:
    """Edge set rebuilt from the per-output parent sets."""
    return {(p, child) for child, parents in plan.parents.items() for p in parents}


def task_plan_to_json(plan: TaskPlan) -> dict:
    return {
        'tasks': [
            {'inputs': list(t.inputs), 'outputs': list(t.outputs), 'order_index': t.order_index}
            for t in plan.tasks
        ],
        'roots': list(plan.roots),
        'leaves': list(plan.leaves),
        'parents': {k: list(v) for k, v in sorted(plan.parents.items())},
    }


def task_plan_from_json(data: dict) -> TaskPlan:
    try:
        tasks = [
            LearningTask(tuple(t['inputs']), tuple(t['outputs']), int(t['order_index']))
            for t in data['tasks']
        ]
        return TaskPlan(
            sorted(tasks, key=lambda t: t.order_index),
            tuple(data.get('roots', [])),
            tuple(data.get('leaves', [])),
            {k: tuple(v) for k, v in data.get('parents', {}).items()},
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"Malformed task plan JSON: {e}")


def load_task_plan(path: str) -> TaskPlan:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return task_plan_from_json(json.load(f))
    except FileNotFoundError:
        raise DataError(f"Task plan not found: {path}")
    except json.JSONDecodeError as e:
        raise DataError(f"Task plan {path} is not valid JSON: {e}")


def task_graph_to_dot(plan: TaskPlan, name: str = 'task_plan') -> str:
    lines = [f'digraph "{name}" {{', '  rankdir=LR;']
    for task in plan.tasks:
        label = f"{task.order_index}: {', '.join(task.inputs)} -> {', '.join(task.outputs)}"
        lines.append(f'  "{task.key}" [shape=box, label="{label}"];')
    for upstream in plan.tasks:
        for downstream in plan.tasks:
            if set(upstream.outputs) & set(downstream.inputs):
                lines.append(f'  "{upstream.key}" -> "{downstream.key}";')
    lines.append('}')
    return '\n'.join(lines) + '\n'
