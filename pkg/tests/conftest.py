import numpy as np
import pytest

from hgp.hetgraph import EdgeType, NodeType, build_graph


def random_tripartite(rng, n_groups, n_users, n_items, p_gu=0.1, p_iu=0.1, days=17):
    """Random tripartite graph; node ids ordered groups, users, items."""
    nodes = ([(i, NodeType.Group) for i in range(n_groups)]
             + [(n_groups + i, NodeType.User) for i in range(n_users)]
             + [(n_groups + n_users + i, NodeType.Item) for i in range(n_items)])
    edges = []
    for u in range(n_users):
        uid = n_groups + u
        for g in range(n_groups):
            if rng.random() < p_gu:
                edges.append((g, uid, EdgeType.GroupUser, int(rng.integers(days))))
        for i in range(n_items):
            if rng.random() < p_iu:
                edges.append((n_groups + n_users + i, uid, EdgeType.ItemUser, int(rng.integers(days))))
    return build_graph(nodes, edges)


def dense_norm_adj(graph, r):
    """D̃^-1/2 (A + I) D̃^-1/2 computed with dense matrices."""
    n = graph.num_nodes
    A = np.zeros((n, n))
    for u, v in graph.edges[r]:
        A[u, v] = A[v, u] = 1.0
    At = A + np.eye(n)
    d = At.sum(axis=1)
    Dm = np.diag(1.0 / np.sqrt(d))
    return Dm @ At @ Dm


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
