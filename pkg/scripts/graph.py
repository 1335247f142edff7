"""
Benchmark graph module
Minimum weight spanning trees over task distance matrices, tree-path
distance bounds, task proximity queries and DOT/JSON export
"""
import logging
from collections import deque
from itertools import combinations
from typing import Dict, List, Tuple

import pydot

from models.pydantic_schemas import DistanceMatrix, PathBounds, SpanningTree, TOLERANCE, round_sig
from scripts.errors import BenchmarkDataError

logger = logging.getLogger(__name__)


class UnionFind:
    """
    Union-Find with path compression and union by rank
    """

    def __init__(self, n: int):
        """
        Creates n disjoint sets, one per element
        :param n: Total number of elements
        """
        self.size = n
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        """
        Finds the root of the set that element x belongs to.
        """
        while x != self.parent[x]:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, x: int, y: int) -> bool:
        """
        Joins the sets containing x and y
        :return: False if they were already the same set
        """
        i, j = self.find(x), self.find(y)
        if i == j:
            return False
        if self.rank[i] < self.rank[j]:
            i, j = j, i
        self.parent[j] = i
        if self.rank[i] == self.rank[j]:
            self.rank[i] += 1
        self.size -= 1
        return True


def _sorted_edges(dm: DistanceMatrix) -> List[Tuple[str, str, float]]:
    """Every edge (u, v, w) with u < v, by weight then task names"""
    edges = []
    for i, j in combinations(range(len(dm.task_names)), 2):
        u, v = sorted((dm.task_names[i], dm.task_names[j]))
        edges.append((u, v, float(dm.values[i, j])))
    return sorted(edges, key=lambda e: (e[2], e[0], e[1]))


def mst(dm: DistanceMatrix) -> SpanningTree:
    """Kruskal's minimum weight spanning tree, deterministic on equal weights"""
    n = len(dm.task_names)
    if n < 2:
        raise BenchmarkDataError('a benchmark graph needs at least 2 tasks')
    index = {name: i for i, name in enumerate(dm.task_names)}
    components = UnionFind(n)
    tree_edges = []
    for u, v, weight in _sorted_edges(dm):
        if components.union(index[u], index[v]):
            tree_edges.append((u, v, weight))
            if len(tree_edges) == n - 1:
                break

    tree = SpanningTree(task_names=dm.task_names, edges=tuple(tree_edges))
    logger.info(f"Spanning tree over {n} tasks, total weight {tree.total_weight:.4f}")
    return tree


def _adjacency(tree: SpanningTree) -> Dict[str, List[Tuple[str, float]]]:
    adjacency = {name: [] for name in tree.task_names}
    for u, v, weight in tree.edges:
        adjacency[u].append((v, weight))
        adjacency[v].append((u, weight))
    return adjacency


def tree_path(tree: SpanningTree, u: str, v: str) -> List[Tuple[str, str, float]]:
    """Edges on the unique tree path from u to v"""
    for name in (u, v):
        if name not in tree.task_names:
            raise BenchmarkDataError(f'unknown task {name!r}')
    adjacency = _adjacency(tree)
    previous = {u: None}
    queue = deque([u])
    while queue:
        node = queue.popleft()
        if node == v:
            break
        for neighbour, weight in adjacency[node]:
            if neighbour not in previous:
                previous[neighbour] = (node, weight)
                queue.append(neighbour)

    path = []
    node = v
    while previous[node] is not None:
        parent, weight = previous[node]
        path.append((parent, node, weight))
        node = parent
    return path[::-1]


def path_bounds(tree: SpanningTree, u: str, v: str, dm: DistanceMatrix) -> PathBounds:
    """
    Bounds on w(u, v) read off the spanning tree

    The largest edge on the tree path is a lower bound (a smaller w(u, v)
    could replace it and lighten the tree); the sum of the path edges is an
    upper bound by the triangle inequality.
    """
    if u == v:
        raise BenchmarkDataError('path bounds need two different tasks')
    path = tree_path(tree, u, v)
    weights = [weight for _, _, weight in path]
    bounds = PathBounds(lower=max(weights), upper=sum(weights))

    true_weight = dm.weight(u, v)
    if not bounds.lower - TOLERANCE <= true_weight <= bounds.upper + TOLERANCE:
        logger.error(f"w({u}, {v}) = {true_weight} outside tree bounds [{bounds.lower}, {bounds.upper}]")
        raise RuntimeError(f'tree bounds do not bracket w({u}, {v}); tree and matrix disagree')
    return bounds


def nearest_tasks(dm: DistanceMatrix, task: str, k: int) -> List[Tuple[str, float]]:
    """The k tasks closest to `task`, ascending by distance then name"""
    if task not in dm.task_names:
        raise BenchmarkDataError(f'unknown task {task!r}')
    n = len(dm.task_names)
    if not 1 <= k <= n - 1:
        raise BenchmarkDataError(f'k must lie in [1, {n - 1}], got {k}')
    row = dm.values[dm.index(task)]
    others = [(name, float(row[i])) for i, name in enumerate(dm.task_names) if name != task]
    return sorted(others, key=lambda item: (item[1], item[0]))[:k]


def task_novelty(dm: DistanceMatrix) -> List[Tuple[str, str, float]]:
    """
    Each task with its nearest neighbour and the distance to it

    Sorted most isolated first: a task far from every other one adds the
    most ranking information to the benchmark.
    """
    rows = []
    for task in dm.task_names:
        neighbour, distance = nearest_tasks(dm, task, 1)[0]
        rows.append((task, neighbour, distance))
    return sorted(rows, key=lambda row: (-row[2], row[0]))


def _quoted(text: str) -> str:
    return '"' + text.replace('\\', '\\\\').replace('"', '\\"') + '"'


def export_dot(tree: SpanningTree) -> str:
    """DOT text of the tree: task-name vertices, weights as 2-decimal labels"""
    graph = pydot.Dot(graph_name='benchmark_mst', graph_type='graph')
    for name in tree.task_names:
        graph.add_node(pydot.Node(_quoted(name)))
    for u, v, weight in tree.edges:
        graph.add_edge(pydot.Edge(_quoted(u), _quoted(v), label=_quoted(f'{weight:.2f}')))
    return graph.to_string()


def tree_to_json(tree: SpanningTree) -> Dict:
    return {
        'tasks': list(tree.task_names),
        'edges': [{'u': u, 'v': v, 'weight': round_sig(weight)} for u, v, weight in tree.edges],
        'total_weight': round_sig(tree.total_weight),
    }
