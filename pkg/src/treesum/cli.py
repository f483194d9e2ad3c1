"""Command-line entry points: oracle, train, decode, eval.

Configuration is a flat key/value registry resolvable from three layers
with rising precedence: built-in defaults, a ``key = value`` config file
(``--config``), and per-key command-line flags.  Unknown keys are
rejected.  Every command that writes an artifact also writes the resolved
configuration next to it (``<output>.config``), and output files are
written atomically so failed runs leave nothing partial behind.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager

import numpy as np

from . import autodiff as ad
from . import corpus as cp
from . import decoding
from . import metrics
from . import training
from . import transition as tr
from .model import Model, ModelConfig, ModelError

logger = logging.getLogger(__name__)

DEFAULT_SEED = 13

# key -> (type, default); booleans accept true/false in the config file
CONFIG_SPEC = {
    "hidden_size": (int, 256),
    "embed_size": (int, 256),
    "encoder_layers": (int, 2),
    "min_freq": (int, cp.INPUT_MIN_FREQ),
    "output_vocab_size": (int, cp.OUTPUT_MAX_SIZE),
    "max_source_len": (int, cp.DEFAULT_MAX_SOURCE_LEN),
    "max_summary_len": (int, cp.DEFAULT_MAX_SUMMARY_LEN),
    "batch_size": (int, 64),
    "lr": (float, 1e-3),
    "beta1": (float, 0.9),
    "beta2": (float, 0.999),
    "eps": (float, 1e-8),
    "grad_clip": (float, 5.0),
    "weight_decay": (float, 1e-6),
    "epochs": (int, 10),
    "patience": (int, 3),
    "seed": (int, DEFAULT_SEED),
    "beam_size": (int, 10),
    "max_words": (int, 60),
    "max_steps": (int, 0),        # 0 means the 2 * max_words default
    "length_norm": (float, 0.0),
    "workers": (int, 1),
}


class CliError(Exception):
    pass


def _parse_value(key, raw):
    kind, _ = CONFIG_SPEC[key]
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise CliError(f"config key {key!r}: cannot parse {raw!r} as "
                       f"{kind.__name__}")


def load_config_file(path):
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in CONFIG_SPEC:
                raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _parse_value(key, raw)
    return values


def resolve_config(args):
    """defaults < config file < explicit flags."""
    resolved = {key: default for key, (_, default) in CONFIG_SPEC.items()}
    if getattr(args, "config", None):
        resolved.update(load_config_file(args.config))
    for key in CONFIG_SPEC:
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
    return resolved


def echo_config(config, command, inputs, out_path):
    record = {"command": command, "inputs": inputs, "config": config}
    with atomic_output(f"{out_path}.config") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")
    logger.info("resolved config written to %s.config", out_path)


@contextmanager
def atomic_output(path):
    """Write to a temp file and rename on success; unlink on failure."""
    tmp = f"{path}.tmp"
    fh = open(tmp, "w", encoding="utf-8")
    try:
        yield fh
    except BaseException:
        fh.close()
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    fh.close()
    os.replace(tmp, path)


def _add_config_flags(parser, keys):
    for key in keys:
        kind, default = CONFIG_SPEC[key]
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key,
                            type=kind, default=None,
                            help=f"{key} (default {default})")


def _load_and_filter(path, config):
    examples = cp.load_corpus(path)
    retained, stats = cp.filter_examples(
        examples, max_source_len=config["max_source_len"],
        max_summary_len=config["max_summary_len"])
    if stats:
        logger.info("%s: dropped %d of %d examples (%s)", path,
                    len(examples) - len(retained), len(examples),
                    ", ".join(f"{k}={v}" for k, v in sorted(stats.items())))
    if not retained:
        raise CliError(f"{path}: no usable examples after filtering")
    return retained


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

def cmd_oracle(args):
    config = resolve_config(args)
    examples = _load_and_filter(args.corpus, config)
    lines = []
    for i, ex in enumerate(examples):
        ops = cp.linearize(ex)
        back = tr.execute(ops)
        if list(back.words) != ex.summary or list(back.heads) != ex.heads:
            raise CliError(f"round trip failed for example {i}")
        lines.append(tr.ops_to_text(ops))
    if args.out:
        with atomic_output(args.out) as fh:
            fh.write("\n".join(lines) + "\n")
        echo_config(config, "oracle", {"corpus": args.corpus}, args.out)
        logger.info("%d sequences written to %s (all round trips verified)",
                    len(lines), args.out)
    else:
        for line in lines:
            print(line)
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args):
    config = resolve_config(args)
    train_examples = _load_and_filter(args.corpus, config)
    dev_examples = _load_and_filter(args.dev, config) if args.dev else None

    in_vocab = cp.build_vocab(train_examples, "input",
                              min_freq=config["min_freq"])
    out_vocab = cp.build_vocab(train_examples, "output",
                               max_size=config["output_vocab_size"])
    model = Model(
        ModelConfig(
            input_vocab_size=len(in_vocab),
            output_vocab_size=len(out_vocab),
            hidden_size=config["hidden_size"],
            embed_size=config["embed_size"],
            encoder_layers=config["encoder_layers"],
            max_source_len=config["max_source_len"],
        ),
        in_vocab, out_vocab, seed=config["seed"])
    train_config = training.TrainConfig(
        batch_size=config["batch_size"], lr=config["lr"],
        beta1=config["beta1"], beta2=config["beta2"], eps=config["eps"],
        grad_clip=config["grad_clip"], weight_decay=config["weight_decay"],
        epochs=config["epochs"], seed=config["seed"],
        patience=config["patience"])

    log_path = f"{args.out}.log"
    with open(log_path, "w", encoding="utf-8") as log_fh:
        def log_line(line):
            print(line)
            log_fh.write(line + "\n")
            log_fh.flush()

        training.train(model, train_examples, dev_examples,
                       config=train_config, checkpoint_path=args.out,
                       log=log_line)
    echo_config(config, "train",
                {"corpus": args.corpus, "dev": args.dev}, args.out)
    logger.info("best checkpoint at %s, log at %s", args.out, log_path)
    return 0


# ---------------------------------------------------------------------------
# decode
# ---------------------------------------------------------------------------

_WORKER_STATE = {}


def _decode_worker_init(checkpoint, beam_kwargs):
    _WORKER_STATE["model"] = Model.load(checkpoint)
    _WORKER_STATE["beam"] = decoding.BeamConfig(**beam_kwargs)


def _decode_one(tokens):
    model = _WORKER_STATE["model"]
    beam = _WORKER_STATE["beam"]
    src = model.prepare_source(tokens)
    hyp = decoding.beam_search(model, src, beam)
    summary, tree = decoding.decode_output(hyp)
    return {
        "summary": " ".join(summary),
        "ops": tr.ops_to_text(hyp.ops),
        "heads": " ".join(str(h) for h in tree.heads),
        "score": hyp.score,
    }


def cmd_decode(args):
    config = resolve_config(args)
    examples = cp.load_corpus(args.input, require_heads=False)
    if not examples:
        raise CliError(f"{args.input}: no records")
    beam_kwargs = dict(
        beam_size=config["beam_size"], max_words=config["max_words"],
        max_steps=config["max_steps"] or None,
        length_norm=config["length_norm"])
    sources = [ex.source for ex in examples]
    if config["workers"] > 1:
        with ProcessPoolExecutor(
                max_workers=config["workers"],
                initializer=_decode_worker_init,
                initargs=(args.checkpoint, beam_kwargs)) as pool:
            records = list(pool.map(_decode_one, sources, chunksize=4))
    else:
        _decode_worker_init(args.checkpoint, beam_kwargs)
        records = [_decode_one(tokens) for tokens in sources]
    with atomic_output(args.out) as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
    echo_config(config, "decode",
                {"checkpoint": args.checkpoint, "input": args.input},
                args.out)
    logger.info("%d decodes written to %s", len(records), args.out)
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _load_decodes(path):
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            for field in ("summary", "heads"):
                if field not in record:
                    raise CliError(f"{path}:{lineno}: missing {field!r}")
            summary = record["summary"].split()
            heads = [int(h) for h in str(record["heads"]).split()]
            if len(heads) != len(summary):
                raise CliError(f"{path}:{lineno}: heads/summary mismatch")
            records.append((summary, heads))
    return records


def _load_parses(path):
    parses = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            if "words" not in record or "heads" not in record:
                raise CliError(f"{path}:{lineno}: need 'words' and 'heads'")
            words = [w.lower() for w in record["words"]]
            parses.append((words, [int(h) for h in record["heads"]]))
    return parses


def _score_instance(system, reference, ref_relations, src_relations, sigmas,
                    table):
    summary, heads = system
    rows = {}
    for name, value in (("r1", metrics.rouge_n(summary, reference, 1)),
                        ("r2", metrics.rouge_n(summary, reference, 2)),
                        ("rl", metrics.rouge_l(summary, reference))):
        rows[name] = value
    system_relations = metrics.relations_from_heads(summary, heads)
    # raw match counts so both macro and pooled aggregation are possible
    rows["rel_ref"] = {
        sigma: metrics.relation_matches(system_relations, ref_relations,
                                        table, sigma)
        for sigma in sigmas}
    if src_relations is not None:
        rows["rel_src"] = {
            sigma: metrics.relation_matches(system_relations, src_relations,
                                            table, sigma)
            for sigma in sigmas}
    return rows


def _score_task(task):
    return _score_instance(*task)


def _sweep_sections(instances, key, sigmas, title):
    """Macro and pooled sigma/P/R/F rows for one relation target.

    Macro averages per-instance scores (the headline); pooled sums match
    counts corpus-wide before scoring.
    """
    lines = [f"# relation preservation vs {title}, macro: sigma\tP\tR\tF"]
    counts = {sigma: [inst[key][sigma] for inst in instances if key in inst]
              for sigma in sigmas}
    for sigma in sigmas:
        triples = [metrics.prf(*c) for c in counts[sigma]]
        if not triples:
            continue
        p, r, f = (float(np.mean([t[x] for t in triples])) for x in range(3))
        lines.append(f"{sigma}\t{p:.4f}\t{r:.4f}\t{f:.4f}")
    lines.append(f"# relation preservation vs {title}, pooled: sigma\tP\tR\tF")
    for sigma in sigmas:
        if not counts[sigma]:
            continue
        matched = sum(c[0] for c in counts[sigma])
        n_pred = sum(c[1] for c in counts[sigma])
        n_target = sum(c[2] for c in counts[sigma])
        p, r, f = metrics.prf(matched, n_pred, n_target)
        lines.append(f"{sigma}\t{p:.4f}\t{r:.4f}\t{f:.4f}")
    return lines


def cmd_eval(args):
    config = resolve_config(args)
    decodes = _load_decodes(args.decoded)
    references = cp.load_corpus(args.reference)
    if len(decodes) != len(references):
        raise CliError(
            f"{args.decoded}: {len(decodes)} decodes for "
            f"{len(references)} references")
    source_parses = _load_parses(args.source_parses) \
        if args.source_parses else None
    if source_parses is not None and len(source_parses) != len(decodes):
        raise CliError(
            f"{args.source_parses}: {len(source_parses)} parses for "
            f"{len(decodes)} decodes")
    table = metrics.load_embeddings(args.embeddings) \
        if args.embeddings else None
    sigmas = tuple(float(s) for s in args.sigmas.split(",")) \
        if args.sigmas else (1.0, 0.9, 0.8, 0.7)

    tasks = []
    for i, (system, ref_ex) in enumerate(zip(decodes, references)):
        ref_relations = metrics.relations_from_heads(ref_ex.summary,
                                                     ref_ex.heads)
        src_relations = None
        if source_parses is not None:
            src_relations = metrics.relations_from_heads(*source_parses[i])
        tasks.append((system, ref_ex.summary, ref_relations, src_relations,
                      sigmas, table))
    if config["workers"] > 1:
        with ProcessPoolExecutor(max_workers=config["workers"]) as pool:
            instances = list(pool.map(_score_task, tasks, chunksize=16))
    else:
        instances = [_score_task(task) for task in tasks]

    columns = ["index", "r1_p", "r1_r", "r1_f", "r2_p", "r2_r", "r2_f",
               "rl_p", "rl_r", "rl_f", "relref_f"]
    if source_parses is not None:
        columns.append("relsrc_f")
    lines = ["#" + "\t".join(columns)]
    sums = np.zeros(len(columns) - 1)
    for i, inst in enumerate(instances):
        values = list(inst["r1"]) + list(inst["r2"]) + list(inst["rl"])
        values.append(metrics.prf(*inst["rel_ref"][sigmas[0]])[2])
        if source_parses is not None:
            values.append(metrics.prf(*inst["rel_src"][sigmas[0]])[2])
        sums += np.array(values)
        lines.append("\t".join([str(i)] + [f"{v:.4f}" for v in values]))
    macro = sums / len(instances)
    lines.append("\t".join(["macro"] + [f"{v:.4f}" for v in macro]))

    lines.append("")
    lines.extend(_sweep_sections(instances, "rel_ref", sigmas, "reference"))
    if source_parses is not None:
        lines.append("")
        lines.extend(_sweep_sections(instances, "rel_src", sigmas, "source"))

    if args.out:
        with atomic_output(args.out) as fh:
            fh.write("\n".join(lines) + "\n")
        echo_config(config, "eval",
                    {"decoded": args.decoded, "reference": args.reference},
                    args.out)
    else:
        print("\n".join(lines))
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="treesum",
        description="joint abstractive summarization and dependency parsing")
    parser.add_argument("--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    oracle = sub.add_parser(
        "oracle", help="linearize a corpus into operation sequences")
    oracle.add_argument("--corpus", required=True)
    oracle.add_argument("--out", help="write sequences here; default stdout")
    oracle.add_argument("--config")
    _add_config_flags(oracle, ["max_source_len", "max_summary_len", "seed"])
    oracle.set_defaults(func=cmd_oracle)

    train = sub.add_parser("train", help="fit a model on a corpus")
    train.add_argument("--corpus", required=True)
    train.add_argument("--dev")
    train.add_argument("--out", required=True, help="checkpoint path")
    train.add_argument("--config")
    _add_config_flags(train, [
        "hidden_size", "embed_size", "encoder_layers", "min_freq",
        "output_vocab_size", "max_source_len", "max_summary_len",
        "batch_size", "lr", "beta1", "beta2", "eps", "grad_clip",
        "weight_decay", "epochs", "patience", "seed"])
    train.set_defaults(func=cmd_train)

    decode = sub.add_parser("decode", help="beam-search a test file")
    decode.add_argument("--checkpoint", required=True)
    decode.add_argument("--input", required=True)
    decode.add_argument("--out", required=True)
    decode.add_argument("--config")
    _add_config_flags(decode, ["beam_size", "max_words", "max_steps",
                               "length_norm", "workers", "seed"])
    decode.set_defaults(func=cmd_decode)

    evaluate = sub.add_parser(
        "eval", help="score decodes against references")
    evaluate.add_argument("--decoded", required=True)
    evaluate.add_argument("--reference", required=True)
    evaluate.add_argument("--source-parses", dest="source_parses")
    evaluate.add_argument("--embeddings")
    evaluate.add_argument("--sigmas",
                          help="comma-separated thresholds, default "
                               "1.0,0.9,0.8,0.7")
    evaluate.add_argument("--out", help="report path; default stdout")
    evaluate.add_argument("--config")
    _add_config_flags(evaluate, ["workers", "seed"])
    evaluate.set_defaults(func=cmd_eval)
    return parser


def run(argv) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, cp.CorpusError, tr.TransitionError,
            training.TrainingError, decoding.DecodingError,
            metrics.MetricsError, ModelError, ad.AutodiffError,
            OSError) as e:
        print(f"treesum {args.command}: {e}", file=sys.stderr)
        return 1


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
