"""Joint summary/parse decoder architecture.

A bidirectional encoder reads the source; three recurrent components track
the decoder's progress: a stack-LSTM over the partial trees on the stack,
a sequential LSTM over the summary words emitted so far, and an LSTM over
the operation history.  Attention over source states feeds both the
operation head (3-way) and the word head, which mixes vocabulary
generation with copying from the source through a learned switch.

The stack-LSTM is maintained incrementally: GEN pushes an LSTM step over
the new word embedding, a reduce pops two steps and pushes one over the
composed pair.  By construction the incremental states coincide with
re-running the LSTM over the current stack bottom-to-top (`tree_state`
recomputes from scratch for verification).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import transition as tr

# Fixed ordering of operation kinds; also the deterministic tie-break
# order during decoding.
OP_ORDER = (tr.REDUCE_L, tr.REDUCE_R, tr.GEN)
OP_INDEX = {kind: i for i, kind in enumerate(OP_ORDER)}


class ModelError(Exception):
    pass


@dataclass
class ModelConfig:
    input_vocab_size: int
    output_vocab_size: int
    hidden_size: int = 256
    embed_size: int = 256
    encoder_layers: int = 2
    max_source_len: int = 100

    def __post_init__(self):
        for name in ("input_vocab_size", "output_vocab_size", "hidden_size",
                     "embed_size", "encoder_layers", "max_source_len"):
            if getattr(self, name) <= 0:
                raise ModelError(f"{name} must be positive")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class EncoderStates:
    """Per-token source representations, one row per token (forward and
    backward top-layer states concatenated)."""

    matrix: ad.Tensor  # (source_len, 2 * hidden)

    def __len__(self):
        return self.matrix.shape[0]


@dataclass
class ContextVector:
    context: ad.Tensor  # (2 * hidden,)
    alpha: ad.Tensor    # (source_len,), sums to 1


@dataclass
class SourceContext:
    """Everything decoding needs to know about one encoded source text."""

    tokens: list
    enc: EncoderStates
    extensions: list            # source tokens outside the output vocabulary
    copy_matrix: ad.Tensor      # (union_size, source_len) 0/1 constant
    vocab: object               # the output vocabulary

    @property
    def vocab_size(self):
        return len(self.vocab)

    @property
    def union_size(self):
        return self.vocab_size + len(self.extensions)

    def union_id(self, word):
        """Union-vocabulary id of a word; UNK when unreachable."""
        uid = self.vocab.id_or_none(word)
        if uid is not None:
            return uid
        if word in self.extensions:
            return self.vocab_size + self.extensions.index(word)
        return self.vocab.unk_id

    def union_token(self, uid):
        if uid < self.vocab_size:
            return self.vocab.token(uid)
        return self.extensions[uid - self.vocab_size]


@dataclass(frozen=True)
class DecoderState:
    """Immutable joint state: symbolic stack plus all recurrent states.

    ``tree_states`` has one (h, c) pair per stack element plus the zero
    base below R; ``stack_reps`` aligns with the symbolic stack.
    """

    symbolic: tr.StackState
    stack_reps: tuple          # composed vectors, one per stack element
    tree_states: tuple         # (h, c) pairs, len(stack) + 1 entries
    seq_state: tuple           # (h, c) of the summary LSTM
    hist_state: tuple          # (h, c) of the operation-history LSTM

    @property
    def tree_h(self) -> ad.Tensor:
        return self.tree_states[-1][0]

    @property
    def seq_h(self) -> ad.Tensor:
        return self.seq_state[0]

    @property
    def hist_h(self) -> ad.Tensor:
        return self.hist_state[0]

    @property
    def is_terminal(self):
        return self.symbolic.is_terminal


class Model:
    """Parameter container plus all forward computations."""

    def __init__(self, config: ModelConfig, input_vocab, output_vocab,
                 seed=13, dtype=np.float32):
        if len(input_vocab) != config.input_vocab_size:
            raise ModelError("input vocab size disagrees with config")
        if len(output_vocab) != config.output_vocab_size:
            raise ModelError("output vocab size disagrees with config")
        self.config = config
        self.input_vocab = input_vocab
        self.output_vocab = output_vocab
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        h, e = config.hidden_size, config.embed_size

        def weight(shape, name, scale=0.1):
            return ad.Parameter(ad.uniform_init(rng, shape, scale, dtype), name)

        def bias(size, name):
            return ad.Parameter(np.zeros(size, dtype=dtype), name)

        self.src_embed = weight((config.input_vocab_size, e), "src_embed")
        self.out_embed = weight((config.output_vocab_size, e), "out_embed")
        self.root_embed = weight((e,), "root_embed")
        self.op_embed = weight((len(OP_ORDER), e), "op_embed")

        self.encoder_cells = []
        for layer in range(config.encoder_layers):
            in_size = e if layer == 0 else 2 * h
            fwd = ad.LstmParams(in_size, h, f"encoder.{layer}.fwd", rng, dtype)
            bwd = ad.LstmParams(in_size, h, f"encoder.{layer}.bwd", rng, dtype)
            self.encoder_cells.append((fwd, bwd))

        self.tree_cell = ad.LstmParams(e, h, "tree_cell", rng, dtype)
        self.seq_cell = ad.LstmParams(e, h, "seq_cell", rng, dtype)
        self.hist_cell = ad.LstmParams(e, h, "hist_cell", rng, dtype)
        self.seq_init_h = bias(h, "seq_init_h")
        self.seq_init_c = bias(h, "seq_init_c")
        self.hist_init_h = bias(h, "hist_init_h")
        self.hist_init_c = bias(h, "hist_init_c")

        self.compose_w = weight((2 * e, e), "compose_w")
        self.compose_b = bias(e, "compose_b")

        self.attn_dec_w = weight((2 * h, h), "attn_dec_w")
        self.attn_enc_w = weight((2 * h, h), "attn_enc_w")
        self.attn_v = weight((h,), "attn_v")

        feat = 2 * h + 2 * h  # decoder states plus context vector
        self.op_hidden_w = weight((feat, h), "op_hidden_w")
        self.op_hidden_b = bias(h, "op_hidden_b")
        self.op_out_w = weight((h, len(OP_ORDER)), "op_out_w")

        self.word_hidden_w = weight((feat, h), "word_hidden_w")
        self.word_hidden_b = bias(h, "word_hidden_b")
        self.word_out_w = weight((h, config.output_vocab_size), "word_out_w")

        self.switch_w = weight((feat, 1), "switch_w")
        self.switch_b = bias(1, "switch_b")

    def parameters(self):
        params = [self.src_embed, self.out_embed, self.root_embed,
                  self.op_embed]
        for fwd, bwd in self.encoder_cells:
            params += fwd.parameters() + bwd.parameters()
        params += self.tree_cell.parameters()
        params += self.seq_cell.parameters()
        params += self.hist_cell.parameters()
        params += [self.seq_init_h, self.seq_init_c,
                   self.hist_init_h, self.hist_init_c,
                   self.compose_w, self.compose_b,
                   self.attn_dec_w, self.attn_enc_w, self.attn_v,
                   self.op_hidden_w, self.op_hidden_b, self.op_out_w,
                   self.word_hidden_w, self.word_hidden_b, self.word_out_w,
                   self.switch_w, self.switch_b]
        return params

    def _zeros(self, size):
        return ad.Tensor(np.zeros(size, dtype=self.dtype))

    # ------------------------------------------------------------------
    # Encoder
    # ------------------------------------------------------------------

    def encode(self, tokens) -> EncoderStates:
        """Run the bidirectional encoder; unknown tokens map to UNK."""
        if not tokens:
            raise ModelError("cannot encode an empty source")
        if len(tokens) > self.config.max_source_len:
            raise ModelError(
                f"source length {len(tokens)} exceeds configured maximum "
                f"{self.config.max_source_len}")
        ids = [self.input_vocab.id(token) for token in tokens]
        inputs = [ad.row(self.src_embed, i) for i in ids]
        h = self.config.hidden_size
        for fwd, bwd in self.encoder_cells:
            fh, fc = self._zeros(h), self._zeros(h)
            forward = []
            for x in inputs:
                fh, fc = ad.lstm_cell(x, fh, fc, fwd)
                forward.append(fh)
            bh, bc = self._zeros(h), self._zeros(h)
            backward = [None] * len(inputs)
            for i in range(len(inputs) - 1, -1, -1):
                bh, bc = ad.lstm_cell(inputs[i], bh, bc, bwd)
                backward[i] = bh
            inputs = [ad.concat([f, b]) for f, b in zip(forward, backward)]
        return EncoderStates(matrix=ad.stack_rows(inputs))

    def prepare_source(self, tokens) -> SourceContext:
        """Encode a source and set up its copy bookkeeping."""
        enc = self.encode(tokens)
        vocab_size = self.config.output_vocab_size
        extensions = []
        union_of = []
        for token in tokens:
            uid = self.output_vocab.id_or_none(token)
            if uid is None:
                if token not in extensions:
                    extensions.append(token)
                uid = vocab_size + extensions.index(token)
            union_of.append(uid)
        copy = np.zeros((vocab_size + len(extensions), len(tokens)),
                        dtype=self.dtype)
        for i, uid in enumerate(union_of):
            copy[uid, i] = 1.0
        return SourceContext(tokens=list(tokens), enc=enc,
                             extensions=extensions,
                             copy_matrix=ad.Tensor(copy),
                             vocab=self.output_vocab)

    # ------------------------------------------------------------------
    # Representations
    # ------------------------------------------------------------------

    def compose(self, g_head: ad.Tensor, g_dependent: ad.Tensor) -> ad.Tensor:
        """Merge a head and a dependent representation into one vector."""
        joined = ad.concat([g_head, g_dependent],
                           axis=g_head.data.ndim - 1)
        return ad.tanh(ad.add(ad.matmul(joined, self.compose_w),
                              self.compose_b))

    def word_embedding(self, word) -> ad.Tensor:
        """Embedding pushed for a generated word; UNK covers copied
        out-of-vocabulary source words."""
        return ad.row(self.out_embed, self.output_vocab.id(word))

    def tree_state(self, stack_reps) -> ad.Tensor:
        """From-scratch unroll of the stack LSTM, bottom (R) to top."""
        if not stack_reps:
            raise ModelError("stack is never empty (R at the bottom)")
        h = self._zeros(self.config.hidden_size)
        c = self._zeros(self.config.hidden_size)
        for rep in stack_reps:
            h, c = ad.lstm_cell(rep, h, c, self.tree_cell)
        return h

    def seq_state(self, words) -> ad.Tensor:
        """From-scratch summary-prefix state; learned initial when empty."""
        h, c = self.seq_init_h, self.seq_init_c
        for word in words:
            h, c = ad.lstm_cell(self.word_embedding(word), h, c, self.seq_cell)
        return h

    def history_state(self, ops) -> ad.Tensor:
        """From-scratch operation-history state over op-kind embeddings."""
        h, c = self.hist_init_h, self.hist_init_c
        for op in ops:
            x = ad.row(self.op_embed, OP_INDEX[op.kind])
            h, c = ad.lstm_cell(x, h, c, self.hist_cell)
        return h

    # ------------------------------------------------------------------
    # Incremental decoder state
    # ------------------------------------------------------------------

    def initial_state(self) -> DecoderState:
        h = self.config.hidden_size
        base = (self._zeros(h), self._zeros(h))
        after_root = ad.lstm_cell(self.root_embed, base[0], base[1],
                                  self.tree_cell)
        return DecoderState(
            symbolic=tr.StackState(),
            stack_reps=(self.root_embed,),
            tree_states=(base, after_root),
            seq_state=(self.seq_init_h, self.seq_init_c),
            hist_state=(self.hist_init_h, self.hist_init_c),
        )

    def step(self, state: DecoderState, op: tr.ParserOp,
             composed: ad.Tensor | None = None) -> DecoderState:
        """Advance every component by one operation.

        ``composed`` optionally injects a precomputed composition result
        (the batched trainer supplies these); it must equal what
        `compose` would produce for the reduce being applied.
        """
        symbolic = tr.apply_op(state.symbolic, op)
        x = ad.row(self.op_embed, OP_INDEX[op.kind])
        hist = ad.lstm_cell(x, state.hist_state[0], state.hist_state[1],
                            self.hist_cell)
        if op.kind == tr.GEN:
            rep = self.word_embedding(op.word)
            tree_top = ad.lstm_cell(rep, *state.tree_states[-1],
                                    self.tree_cell)
            seq = ad.lstm_cell(rep, state.seq_state[0], state.seq_state[1],
                               self.seq_cell)
            return DecoderState(
                symbolic=symbolic,
                stack_reps=state.stack_reps + (rep,),
                tree_states=state.tree_states + (tree_top,),
                seq_state=seq,
                hist_state=hist,
            )
        top, second = state.stack_reps[-1], state.stack_reps[-2]
        if composed is not None:
            rep = composed
        elif op.kind == tr.REDUCE_L:
            rep = self.compose(top, second)
        else:
            rep = self.compose(second, top)
        tree_top = ad.lstm_cell(rep, *state.tree_states[-3], self.tree_cell)
        return DecoderState(
            symbolic=symbolic,
            stack_reps=state.stack_reps[:-2] + (rep,),
            tree_states=state.tree_states[:-2] + (tree_top,),
            seq_state=state.seq_state,   # carried: no word at reduce steps
            hist_state=hist,
        )

    # ------------------------------------------------------------------
    # Prediction heads
    # ------------------------------------------------------------------

    def attend(self, tree_h, seq_h, enc: EncoderStates) -> ContextVector:
        """Score every source position against the decoder state."""
        dec = ad.matmul(ad.concat([tree_h, seq_h]), self.attn_dec_w)
        mixed = ad.tanh(ad.add(ad.matmul(enc.matrix, self.attn_enc_w), dec))
        scores = ad.matmul(mixed, self.attn_v)
        alpha = ad.softmax(scores)
        context = ad.matmul(alpha, enc.matrix)
        return ContextVector(context=context, alpha=alpha)

    def op_scores(self, tree_h, hist_h, context) -> ad.Tensor:
        """Unnormalized 3-way operation scores, OP_ORDER layout."""
        feat = ad.concat([tree_h, hist_h, context])
        hidden = ad.tanh(ad.add(ad.matmul(feat, self.op_hidden_w),
                                self.op_hidden_b))
        return ad.matmul(hidden, self.op_out_w)

    def predict_op(self, tree_h, hist_h, context) -> ad.Tensor:
        """Distribution over {REDUCE_L, REDUCE_R, GEN}."""
        return ad.softmax(self.op_scores(tree_h, hist_h, context))

    def predict_word(self, seq_h, tree_h, ctx: ContextVector,
                     src: SourceContext) -> tuple[ad.Tensor, ad.Tensor]:
        """Word distribution over output vocabulary plus source extensions.

        Mixes vocabulary generation with copying: the switch gives the
        generation share, attention mass summed per source word gives the
        copy share.  Returns (distribution, switch).
        """
        feat = ad.concat([seq_h, tree_h, ctx.context])
        switch = ad.sigmoid(ad.add(ad.matmul(feat, self.switch_w),
                                   self.switch_b))
        hidden = ad.tanh(ad.add(ad.matmul(feat, self.word_hidden_w),
                                self.word_hidden_b))
        vocab_dist = ad.softmax(ad.matmul(hidden, self.word_out_w))
        if src.extensions:
            pad = self._zeros(len(src.extensions))
            vocab_dist = ad.concat([vocab_dist, pad])
        copy_dist = ad.matmul(src.copy_matrix, ctx.alpha)
        one = ad.constant(1.0, dtype=self.dtype)
        dist = ad.add(ad.mul(vocab_dist, switch),
                      ad.mul(copy_dist, ad.sub(one, switch)))
        return dist, switch

    def joint_step_distribution(self, state: DecoderState,
                                src: SourceContext, max_words: int):
        """Masked, renormalized joint distribution for the next step.

        Returns plain arrays: ``op_probs`` over OP_ORDER where the GEN
        entry is the total generation mass, and ``word_probs`` over the
        union vocabulary summing to that mass (empty when GEN is masked).
        """
        kinds = tr.valid_ops(state.symbolic, max_words)
        if not kinds:
            raise ModelError("terminal state has no next-step distribution")
        ctx = self.attend(state.tree_h, state.seq_h, src.enc)
        op_probs = self.predict_op(state.tree_h, state.hist_h,
                                   ctx.context).data.astype(np.float64)
        mask = np.array([kind in kinds for kind in OP_ORDER])
        op_probs = np.where(mask, op_probs, 0.0)
        norm = op_probs.sum()
        assert norm > 0.0, "non-terminal state with no valid probability mass"
        op_probs = op_probs / norm
        gen_mass = op_probs[OP_INDEX[tr.GEN]]
        if tr.GEN in kinds:
            word_dist, _ = self.predict_word(state.seq_h, state.tree_h,
                                             ctx, src)
            word_probs = word_dist.data.astype(np.float64) * gen_mass
        else:
            word_probs = np.zeros(0)
        return op_probs, word_probs

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def metadata(self):
        return {
            "config": self.config.to_dict(),
            "input_vocab": self.input_vocab.tokens,
            "output_vocab": self.output_vocab.tokens,
            "input_vocab_hash": self.input_vocab.digest(),
            "output_vocab_hash": self.output_vocab.digest(),
        }

    def save(self, path):
        ad.save_checkpoint(path, self.parameters(), metadata=self.metadata())

    @classmethod
    def load(cls, path):
        from .corpus import Vocabulary

        arrays, meta = ad.load_checkpoint(path)
        for side in ("input", "output"):
            vocab = Vocabulary(meta[f"{side}_vocab"])
            if vocab.digest() != meta[f"{side}_vocab_hash"]:
                raise ModelError(f"{side} vocabulary hash mismatch in {path}")
            meta[f"{side}_vocab_obj"] = vocab
        config = ModelConfig(**meta["config"])
        dtype = arrays[next(iter(arrays))].dtype
        model = cls(config, meta["input_vocab_obj"], meta["output_vocab_obj"],
                    dtype=dtype)
        for p in model.parameters():
            if p.name not in arrays:
                raise ModelError(f"checkpoint missing parameter {p.name}")
            if arrays[p.name].shape != p.data.shape:
                raise ModelError(
                    f"checkpoint shape mismatch for {p.name}: "
                    f"{arrays[p.name].shape} vs {p.data.shape}")
            p.data = arrays[p.name].astype(dtype)
        return model
