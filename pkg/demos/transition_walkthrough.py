"""Walk the transition system through one sentence, step by step.

Builds the dependency tree of "a man escaped from prison", linearizes it
with the oracle, and replays the operation sequence while printing the
stack after every step -- the summary and its parse emerge together.
"""

from treesum import transition as tr


def render_entry(state, root_pos):
    """Show a stack entry as 'head(dependents...)' over word surfaces."""
    words = dict(enumerate(state.generated, start=1))
    children = {}
    for head, dep in state.arcs:
        children.setdefault(head, []).append(dep)

    def render(pos):
        label = "R" if pos == 0 else words[pos]
        deps = sorted(children.get(pos, []))
        if not deps:
            return label
        return f"{label}({', '.join(render(d) for d in deps)})"

    return render(root_pos)


def main():
    tree = tr.DependencyTree(
        words=("a", "man", "escaped", "from", "prison"),
        heads=(2, 3, 0, 5, 3),  # a->man, man->escaped, from->prison,
    )                           # prison->escaped, escaped->R
    print("gold heads:", dict(enumerate(tree.heads, start=1)))
    print("projective:", tr.is_projective(tree))
    print()

    ops = tr.oracle(tree)
    print("oracle sequence:", tr.ops_to_text(ops))
    print()

    state = tr.StackState()
    print(f"{'t':>2}  {'operation':<14} stack")
    print(f"{1:>2}  {'-':<14} [R]")
    for t, op in enumerate(ops, start=2):
        state = tr.apply_op(state, op)
        entries = ", ".join(render_entry(state, p) for p in state.stack)
        print(f"{t:>2}  {str(op):<14} [{entries}]")
    print()

    rebuilt = tr.execute(ops)
    print("summary:", " ".join(tr.extract_summary(ops)))
    print("rebuilt heads match:", rebuilt.heads == tree.heads)
    print("terminal:", state.is_terminal)


if __name__ == "__main__":
    main()
