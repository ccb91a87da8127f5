from typing import Callable, Optional

import networkx as nx
import numpy as np
import pandas as pd

from generators.models import GeneratorSpec, enumerate_states
from generators.rates import TransitionList, transitions
from lattice.configs import Config


def transition_graph(
    spec: GeneratorSpec,
    states: Optional[np.ndarray] = None,
    enumerate_fn: Callable[[GeneratorSpec, int], TransitionList] = transitions,
) -> nx.DiGraph:
    """Directed graph of positive-rate moves between enumerated states."""
    if states is None:
        states = enumerate_states(spec)
    graph = nx.DiGraph()
    graph.add_nodes_from(int(s) for s in states)
    for s in states:
        for m in enumerate_fn(spec, int(s)).moves:
            if m.rate > 0 and not m.killing:
                graph.add_edge(int(s), m.target, rate=m.rate)
    return graph


def is_irreducible(spec: GeneratorSpec, states: Optional[np.ndarray] = None) -> bool:
    graph = transition_graph(spec, states)
    return graph.number_of_nodes() > 0 and nx.is_strongly_connected(graph)


def rate_matrix_frame(spec: GeneratorSpec, states: Optional[np.ndarray] = None) -> pd.DataFrame:
    """Long-format rate dump: one row per move, killing moves included."""
    if states is None:
        states = enumerate_states(spec)
    rows = []
    width = spec.width
    for s in states:
        source = Config(int(s), width).text()
        for m in transitions(spec, int(s)).moves:
            rows.append(
                {
                    "row_state": source,
                    "col_state": Config(m.target, width).text(),
                    "rate": m.rate,
                    "killing": m.killing,
                    "clock": ":".join(str(x) for x in m.clock),
                }
            )
    return pd.DataFrame(rows, columns=["row_state", "col_state", "rate", "killing", "clock"])
