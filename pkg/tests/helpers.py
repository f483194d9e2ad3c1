"""Shared generators and brute-force reference implementations for tests.

Everything here is deliberately independent of the library's own logic
wherever it serves as an oracle: projectivity is re-checked by pairwise
arc crossing, and oracle sequences are re-derived by searching the raw
operation space.
"""

import numpy as np

from treesum import transition as tr


def random_projective_tree(rng, n, alphabet=None):
    """Sample a random projective single-root-child tree with n words.

    Walks the transition system with uniformly random valid choices, which
    reaches exactly the derivable class of trees.
    """
    if alphabet is None:
        alphabet = ["w%d" % i for i in range(8)]
    state = tr.StackState()
    while not state.is_terminal:
        kinds = sorted(tr.valid_ops(state, max_words=n))
        kind = kinds[rng.integers(len(kinds))]
        if kind == tr.GEN:
            op = tr.gen(alphabet[rng.integers(len(alphabet))])
        else:
            op = tr.RL if kind == tr.REDUCE_L else tr.RR
        state = tr.apply_op(state, op)
    return tr.execute(state.ops)


def crossing_arcs_projectivity(tree):
    """O(n^2) pairwise-crossing check over all arcs including the root arc."""
    arcs = [(min(h, d), max(h, d)) for h, d in tree.arcs()]
    for i in range(len(arcs)):
        for j in range(i + 1, len(arcs)):
            (a1, b1), (a2, b2) = arcs[i], arcs[j]
            if a1 < a2 < b1 < b2 or a2 < a1 < b2 < b1:
                return False
    return True


def bruteforce_oracle(tree):
    """First gold-reaching op sequence under reduce-first DFS.

    Searches raw operation space: at every state tries REDUCE_L, then
    REDUCE_R, then GEN of the next gold word, backtracking on failure.
    A reduce is only followed if the arc it creates belongs to the gold
    tree.  The reduce-first order realizes the earliest-reduction rule,
    so the first complete sequence found is the eager linearization.
    """
    n = len(tree)
    gold_arcs = tree.arcs()
    target = {"words": tree.words, "heads": tree.heads}

    def dfs(state):
        if state.is_terminal:
            result = tr.execute(state.ops)
            if result.words == target["words"] and result.heads == target["heads"]:
                return list(state.ops)
            return None
        kinds = tr.valid_ops(state, max_words=n)
        for op in (tr.RL, tr.RR):
            if op.kind in kinds:
                nxt = tr.apply_op(state, op)
                if nxt.arcs <= gold_arcs:
                    found = dfs(nxt)
                    if found is not None:
                        return found
        if tr.GEN in kinds:
            word = tree.words[len(state.generated)]
            found = dfs(tr.apply_op(state, tr.gen(word)))
            if found is not None:
                return found
        return None

    return dfs(tr.StackState())


def all_gold_sequences(tree):
    """Every valid op sequence that executes to the gold tree (small n only)."""
    n = len(tree)
    gold_arcs = tree.arcs()
    out = []

    def dfs(state):
        if state.is_terminal:
            result = tr.execute(state.ops)
            if result.words == tree.words and result.heads == tree.heads:
                out.append(list(state.ops))
            return
        kinds = tr.valid_ops(state, max_words=n)
        for op in (tr.RL, tr.RR):
            if op.kind in kinds:
                nxt = tr.apply_op(state, op)
                if nxt.arcs <= gold_arcs:
                    dfs(nxt)
        if tr.GEN in kinds:
            dfs(tr.apply_op(state, tr.gen(tree.words[len(state.generated)])))

    dfs(tr.StackState())
    return out


def enumerate_head_maps(n):
    """All single-root-child acyclic head maps over n words."""
    words = tuple("w%d" % i for i in range(n))

    def rec(i, heads):
        if i == n:
            try:
                yield tr.DependencyTree(words=words, heads=tuple(heads))
            except tr.TransitionError:
                pass
            return
        for h in range(n + 1):
            yield from rec(i + 1, heads + [h])

    yield from rec(0, [])


def walkthrough_tree():
    """The five-word walkthrough tree used across the suite."""
    return tr.DependencyTree(
        words=("a", "man", "escaped", "from", "prison"),
        heads=(2, 3, 0, 5, 3),
    )


WALKTHROUGH_OPS = tr.ops_from_text(
    "GEN(a) GEN(man) RL GEN(escaped) RL GEN(from) GEN(prison) RL RR RR")


def seeded_rng(seed=13):
    return np.random.default_rng(seed)


def toy_corpus(n=50, seed=13):
    """Deterministic desk-scale corpus: each source maps to a unique
    three-word summary with a fixed verb-rooted parse."""
    from treesum.corpus import Example

    names = ["alice", "bob", "carol", "dave", "erin",
             "frank", "grace", "heidi", "ivan", "judy"]
    verbs = ["saw", "met", "called", "helped", "praised"]
    objects_ = ["dog", "cat", "bird", "horse", "fish"]
    places = ["park", "lab", "store", "yard"]
    combos = [(a, v, o) for a in names for v in verbs for o in objects_]
    rng = np.random.default_rng(seed)
    rng.shuffle(combos)
    examples = []
    for i, (name, verb, obj) in enumerate(combos[:n]):
        place = places[i % len(places)]
        source = f"{name} quietly {verb} the {obj} near the {place} yesterday"
        summary = f"{name} {verb} {obj}"
        examples.append(Example(source=source.split(),
                                summary=summary.split(),
                                heads=[2, 0, 2]))
    return examples
