"""Teacher-forced optimization of the joint op/word log-likelihood.

The loss of one instance is the negative sum of per-step operation
log-probabilities plus word log-probabilities at GEN steps only.  A batch
loss is the mean over instances.  Optimization is Adam with decoupled
weight decay, element-wise gradient value clipping, shuffled epochs and
early stopping on the dev loss.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import batching
from . import corpus as cp
from . import transition as tr
from .model import OP_INDEX, Model

logger = logging.getLogger(__name__)

# floor keeps log() finite if a target's mixture mass underflows; the cap
# keeps the word term non-negative
_PROB_FLOOR = 1e-30


class TrainingError(Exception):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 5.0
    weight_decay: float = 1e-6
    epochs: int = 10
    seed: int = 13
    patience: int = 3
    use_batched_compose: bool = True

    def __post_init__(self):
        for name in ("batch_size", "lr", "eps", "grad_clip", "epochs",
                     "patience"):
            if getattr(self, name) < 0:
                raise TrainingError(f"{name} must not be negative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise TrainingError("betas must lie in [0, 1)")


class AdamState:
    """First/second moment accumulators, one pair per parameter."""

    def __init__(self, params):
        self.m = {p.name: np.zeros_like(p.data) for p in params}
        self.v = {p.name: np.zeros_like(p.data) for p in params}
        self.step = 0


def clip_gradients(params, bound=5.0):
    """Element-wise value clipping into [-bound, bound]; idempotent."""
    for p in params:
        np.clip(p.grad, -bound, bound, out=p.grad)


def adam_step(params, state: AdamState, config: TrainConfig):
    """One Adam update with bias correction; weight decay is applied as a
    decoupled multiplicative shrink before the Adam delta."""
    state.step += 1
    t = state.step
    shrink = 1.0 - config.lr * config.weight_decay
    for p in params:
        g = p.grad
        p.data *= shrink
        m = state.m[p.name]
        v = state.v[p.name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * g * g
        m_hat = m / (1.0 - config.beta1 ** t)
        v_hat = v / (1.0 - config.beta2 ** t)
        p.data -= config.lr * m_hat / (np.sqrt(v_hat) + config.eps)


@dataclass
class StepStats:
    op_loss: float = 0.0
    word_loss: float = 0.0
    ops: int = 0
    op_correct: int = 0
    words: int = 0
    word_correct: int = 0
    unk_targets: int = 0

    def merge(self, other):
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))

    @property
    def op_accuracy(self):
        return self.op_correct / self.ops if self.ops else 0.0

    @property
    def word_accuracy(self):
        return self.word_correct / self.words if self.words else 0.0


def sequence_loss(model: Model, src, gold_ops, composed_reps=None):
    """Negative log-likelihood of one gold operation sequence.

    ``composed_reps`` optionally maps (head position, attachment count)
    to precomputed composition vectors from the batch plan.  Returns
    (scalar loss tensor, StepStats).
    """
    state = model.initial_state()
    stats = StepStats()
    n_words = sum(1 for op in gold_ops if op.kind == tr.GEN)
    attach_count = {}
    op_terms = []
    word_terms = []
    for op in gold_ops:
        # teacher forcing must follow the gold sequence exactly
        assert op.kind in tr.valid_ops(state.symbolic, n_words), \
            f"gold op {op} invalid at {state.symbolic}"
        ctx = model.attend(state.tree_h, state.seq_h, src.enc)
        scores = model.op_scores(state.tree_h, state.hist_h, ctx.context)
        log_ops = ad.log_softmax(scores)
        op_terms.append(ad.pick(log_ops, OP_INDEX[op.kind]))
        stats.ops += 1
        stats.op_correct += int(np.argmax(scores.data) == OP_INDEX[op.kind])
        composed = None
        if op.kind == tr.GEN:
            dist, _ = model.predict_word(state.seq_h, state.tree_h, ctx, src)
            uid = src.union_id(op.word)
            if uid == src.vocab.unk_id and op.word != cp.UNK:
                stats.unk_targets += 1
                logger.debug("gold word %r outside vocabulary and source; "
                             "scoring UNK", op.word)
            word_terms.append(ad.log(ad.clip(ad.pick(dist, uid),
                                             _PROB_FLOOR, 1.0)))
            stats.words += 1
            stats.word_correct += int(np.argmax(dist.data) == uid)
        elif composed_reps is not None:
            head = (state.symbolic.stack[-1] if op.kind == tr.REDUCE_L
                    else state.symbolic.stack[-2])
            if head != 0:
                attach_count[head] = attach_count.get(head, 0) + 1
                composed = composed_reps[(head, attach_count[head])]
        state = model.step(state, op, composed=composed)
    assert state.is_terminal, "gold sequence did not terminate"

    def nll(terms):
        acc = None
        for term in terms:
            acc = term if acc is None else ad.add(acc, term)
        return ad.neg(acc) if acc is not None else ad.constant(
            0.0, dtype=model.dtype)

    op_loss = nll(op_terms)
    word_loss = nll(word_terms)
    stats.op_loss = op_loss.item()
    stats.word_loss = word_loss.item()
    return ad.add(op_loss, word_loss), stats


def batch_loss(model: Model, instances, use_batched_compose=True):
    """Mean per-instance loss over a batch of (source tokens, gold ops).

    With ``use_batched_compose`` the composition work of the whole batch
    runs through the topological plan; results are identical to the
    per-instance fold.
    """
    if not instances:
        raise TrainingError("empty batch")
    contexts = [model.prepare_source(tokens) for tokens, _ in instances]
    composed = [None] * len(instances)
    if use_batched_compose:
        trees = [tr.execute(ops) for _, ops in instances]
        batch_plan = batching.plan(trees)
        leaf_reps = {}
        for i, tree in enumerate(trees):
            for p, word in enumerate(tree.words, start=1):
                leaf_reps[(i, p)] = model.word_embedding(word)
        reps = batching.batched_compose(batch_plan, leaf_reps, model.compose)
        composed = []
        for i, tree in enumerate(trees):
            composed.append({
                (p, k): reps[(i, p, k)]
                for p in range(1, len(tree) + 1)
                for k in range(1, batch_plan.arity[(i, p)] + 1)})
    total = None
    stats = StepStats()
    for (tokens, ops), src, comp in zip(instances, contexts, composed):
        loss, inst_stats = sequence_loss(model, src, ops, composed_reps=comp)
        stats.merge(inst_stats)
        total = loss if total is None else ad.add(total, loss)
    mean = ad.mul(total, 1.0 / len(instances))
    return mean, stats


def evaluate(model: Model, instances):
    """Forward-only loss and teacher-forced accuracies."""
    stats = StepStats()
    total = 0.0
    for tokens, ops in instances:
        src = model.prepare_source(tokens)
        loss, inst_stats = sequence_loss(model, src, ops)
        total += loss.item()
        stats.merge(inst_stats)
    return total / max(1, len(instances)), stats


def _as_instances(examples):
    return [(ex.source, tuple(cp.linearize(ex))) for ex in examples]


def train(model: Model, train_examples, dev_examples=None,
          config: TrainConfig | None = None, checkpoint_path=None,
          log=None, stop=None):
    """Shuffled-epoch training loop with early stopping.

    Writes one tab-separated log line per epoch
    (``epoch  train_loss  dev_loss  dev_op_acc  dev_word_acc``), keeps the
    parameters of the best dev epoch, and returns the history.  ``stop``
    optionally ends training early when it returns True for an epoch row.
    """
    config = config or TrainConfig()
    if not train_examples:
        raise TrainingError("empty training corpus")
    train_instances = _as_instances(train_examples)
    dev_instances = (_as_instances(dev_examples)
                     if dev_examples else train_instances)

    params = model.parameters()
    adam = AdamState(params)
    rng = np.random.default_rng(config.seed)
    history = []
    best = {"dev_loss": float("inf"),
            "params": {p.name: p.data.copy() for p in params}}
    if checkpoint_path is not None:
        model.save(checkpoint_path)
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_instances))
        epoch_loss = 0.0
        seen = 0
        unk_targets = 0
        for start in range(0, len(order), config.batch_size):
            batch = [train_instances[i]
                     for i in order[start:start + config.batch_size]]
            ad.zero_grads(params)
            with ad.Tape() as tape:
                loss, stats = batch_loss(
                    model, batch,
                    use_batched_compose=config.use_batched_compose)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingError(
                        f"non-finite loss {value} in epoch {epoch} at "
                        f"batch offset {start}")
                tape.backward(loss)
            clip_gradients(params, config.grad_clip)
            adam_step(params, adam, config)
            epoch_loss += value * len(batch)
            seen += len(batch)
            unk_targets += stats.unk_targets
        train_loss = epoch_loss / seen
        dev_loss, dev_stats = evaluate(model, dev_instances)
        row = {"epoch": epoch, "train_loss": train_loss,
               "dev_loss": dev_loss, "dev_op_acc": dev_stats.op_accuracy,
               "dev_word_acc": dev_stats.word_accuracy}
        history.append(row)
        if log is not None:
            log("%d\t%.6f\t%.6f\t%.4f\t%.4f" % (
                epoch, train_loss, dev_loss, dev_stats.op_accuracy,
                dev_stats.word_accuracy))
        if unk_targets:
            logger.info("epoch %d: %d gold words fell back to UNK",
                        epoch, unk_targets)
        if dev_loss < best["dev_loss"]:
            best = {"dev_loss": dev_loss,
                    "params": {p.name: p.data.copy() for p in params}}
            if checkpoint_path is not None:
                model.save(checkpoint_path)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("early stop after epoch %d", epoch)
                break
        if stop is not None and stop(row):
            logger.info("stop condition met after epoch %d", epoch)
            break
    for p in params:
        p.data = best["params"][p.name]
    return history
