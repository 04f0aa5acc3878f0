import random

from hypothesis import settings, strategies as st

from oocsched.graph import FunctionNode, NetworkGraph, VariableDecl, graph_from_uses, sequence_for

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_graph(rng: random.Random, max_functions: int = 50, max_variables: int = 100,
                 max_bytes: int = 64) -> NetworkGraph:
    """Random valid DAG: each function reads a few earlier variables and produces new ones."""
    n_f = rng.randint(1, max_functions)
    sizes: dict[str, int] = {}
    fns = []
    for i in range(n_f):
        pool = list(sizes)
        ins = rng.sample(pool, min(len(pool), rng.randint(0, 3)))
        outs = []
        for _ in range(rng.randint(0 if ins else 1, 2)):
            if len(sizes) >= max_variables:
                break
            v = f"v{len(sizes)}"
            sizes[v] = rng.randint(1, max_bytes)
            outs.append(v)
        if not ins and not outs:
            ins = [rng.choice(pool)]
        fns.append(FunctionNode(f"f{i}", tuple(ins + outs), tuple(outs)))
    used = dict.fromkeys(v for f in fns for v in f.uses)
    return NetworkGraph(tuple(VariableDecl(v, sizes[v]) for v in used), tuple(fns))


@st.composite
def graphs(draw, max_functions: int = 12, max_bytes: int = 32):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_graph(random.Random(seed), max_functions, 3 * max_functions, max_bytes)


@st.composite
def small_sequences(draw, max_functions: int = 12, max_bytes: int = 32):
    return sequence_for(draw(graphs(max_functions, max_bytes)))


def seq_of(uses, sizes, outputs=None):
    return sequence_for(graph_from_uses(uses, sizes, outputs))
