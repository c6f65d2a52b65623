"""Command-line surface: induce grammars, parse matrices, evaluate
predictions, generate synthetic episodes, run benchmarks, export DOT.

Exit codes: 0 success, 1 input or I/O error, 2 no grammatical parse with
fallback disabled.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import corpus as cp
from . import decoder as dec
from . import grammar as gr
from . import induction as ind
from . import synth as sy
from .metrics import MetricsError


def _eprint(*args) -> None:
    print(*args, file=sys.stderr)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _load_matrix(path: Path, class_names=None) -> dec.ProbMatrix:
    if path.suffix == ".pmat":
        return dec.load_matrix_binary(path, class_names)
    return dec.load_matrix_csv(path, class_names)


def _read_params_file(path: Path) -> dict:
    out = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ind.InductionError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


_PARAM_TYPES = {
    "eta": float,
    "alpha": float,
    "context_window": int,
    "window": int,
    "bootstrap_threshold": float,
    "bootstrap": float,
    "max_iterations": int,
}
_PARAM_ALIASES = {"window": "context_window", "bootstrap": "bootstrap_threshold"}


def _build_params(args) -> ind.AdiosParams:
    vals: dict = {}
    if args.params_file:
        for k, v in _read_params_file(Path(args.params_file)).items():
            if k not in _PARAM_TYPES:
                raise ind.InductionError(f"unknown induction parameter {k!r}")
            vals[_PARAM_ALIASES.get(k, k)] = _PARAM_TYPES[k](v)
    # flags override the config file
    if args.eta is not None:
        vals["eta"] = args.eta
    if args.alpha is not None:
        vals["alpha"] = args.alpha
    if args.window is not None:
        vals["context_window"] = args.window
    if args.bootstrap is not None:
        vals["bootstrap_threshold"] = args.bootstrap
    if args.max_iterations is not None:
        vals["max_iterations"] = args.max_iterations
    return ind.AdiosParams(**vals)


# ---------------------------------------------------------------------------
# subcommands


def cmd_induce(args) -> int:
    corpus = cp.load_corpus(Path(args.corpus))
    params = _build_params(args)
    g = ind.induce(corpus, params, name=args.name)
    g = ind.estimate_probs(g, corpus)
    bad = gr.validate(g)
    if bad:
        _eprint("induced grammar failed validation:", "; ".join(bad))
        return 1
    gr.save_grammar(g, args.out)
    ll = gr.log_likelihood(g, [g.names_to_tokens(s) for s in corpus])
    print(f"grammar written to {args.out}")
    print(f"corpus log-likelihood: {ll:.6f}")
    return 0


def _parse_one(matrix_path: Path, g, cfg, class_names) -> dict:
    m = _load_matrix(matrix_path, class_names)
    res = dec.refine(m, g, cfg)
    return res.to_dict(class_names=m.class_names)


def cmd_parse(args) -> int:
    g = gr.load_grammar(args.grammar)
    class_names = None
    if args.classes:
        class_names = cp.load_class_map(Path(args.classes)).tokens()
    cfg = dec.GepConfig(
        use_grammar_prior=not args.no_prior,
        prior_weight=args.prior_weight,
        max_queue=args.max_queue,
        fallback_on_failure=not args.no_fallback,
    )
    matrix_path = Path(args.matrix)
    if args.batch:
        files = sorted(
            p for p in matrix_path.iterdir() if p.suffix in (".csv", ".pmat")
        )
        if not files:
            _eprint(f"no .csv or .pmat files in {matrix_path}")
            return 1
        outdir = Path(args.out) if args.out else matrix_path
        outdir.mkdir(parents=True, exist_ok=True)
        jobs = args.jobs or os.cpu_count() or 1
        if jobs > 1 and len(files) > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futs = [pool.submit(_parse_one, f, g, cfg, class_names) for f in files]
                results = [f.result() for f in futs]
        else:
            results = [_parse_one(f, g, cfg, class_names) for f in files]
        for f, res in zip(files, results):
            _atomic_write(outdir / (f.stem + ".parse.json"), json.dumps(res, indent=2) + "\n")
        print(f"parsed {len(files)} matrices into {outdir}")
        return 0
    res = _parse_one(matrix_path, g, cfg, class_names)
    text = json.dumps(res, indent=2) + "\n"
    if args.out:
        _atomic_write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def _read_labels(path: Path) -> list[int]:
    toks = path.read_text(encoding="utf-8").split()
    try:
        return [int(t) for t in toks]
    except ValueError as e:
        raise cp.CorpusError(f"{path}: labels must be integers ({e})") from None


def cmd_eval(args) -> int:
    pred = _read_labels(Path(args.pred))
    gt = _read_labels(Path(args.gt))
    from .metrics import confusion, evaluate

    k = args.k or (max(pred + gt) + 1 if pred or gt else 0)
    cm = confusion(pred, gt, k)
    report = evaluate(cm)
    if args.json:
        print(report.to_json())
    else:
        print(report.to_table(), end="")
    return 0


def cmd_synth(args) -> int:
    g = gr.load_grammar(args.grammar)
    names = sy.grammar_class_names(g)
    if args.dur_means:
        means = tuple(float(x) for x in args.dur_means.split(","))
    else:
        means = tuple(args.dur_scale * 10.0 for _ in names)
    dur = sy.DurationModel(means)
    noise = sy.NoiseModel(epsilon=args.epsilon, concentration=args.concentration)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i in range(args.episodes):
        ep = sy.make_episode(g, dur, noise, seed=sy._episode_seed(args.seed, 0, i))
        stem = f"ep{i:04d}"
        if args.format == "pmat":
            dec.save_matrix_binary(ep.matrix, outdir / f"{stem}.pmat")
        else:
            dec.save_matrix_csv(ep.matrix, outdir / f"{stem}.csv")
        _atomic_write(outdir / f"{stem}.gt.txt", " ".join(str(x) for x in ep.gt_frames) + "\n")
        manifest.append(
            {
                "episode": stem,
                "frames": int(ep.gt_frames.shape[0]),
                "sentence": [names[c] for c in ep.source_sentence],
            }
        )
    _atomic_write(outdir / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {args.episodes} episodes to {outdir}")
    return 0


def cmd_bench(args) -> int:
    g = gr.load_grammar(args.grammar)
    names = sy.grammar_class_names(g)
    if args.dur_means:
        means = tuple(float(x) for x in args.dur_means.split(","))
    else:
        means = tuple(args.dur_scale * 10.0 for _ in names)
    dur = sy.DurationModel(means)
    grid = [sy.NoiseModel(epsilon=e, concentration=args.concentration) for e in args.noise]
    cfg = dec.GepConfig(
        use_grammar_prior=not args.no_prior,
        prior_weight=args.prior_weight,
        max_queue=args.max_queue,
        fallback_on_failure=not args.no_fallback,
    )
    report = sy.run_benchmark(
        g, args.episodes, dur, grid, cfg, seed=args.seed, jobs=args.jobs
    )
    print(report.to_table(), end="")
    if args.out:
        _atomic_write(Path(args.out), report.to_json() + "\n")
    return 0


def cmd_dot(args) -> int:
    g = gr.load_grammar(args.grammar)
    text = gr.to_dot(g)
    if args.out:
        _atomic_write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_validate(args) -> int:
    g = gr.load_grammar(args.grammar)
    bad = gr.validate(g)
    if bad:
        for v in bad:
            print(v)
        return 1
    print("ok")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="actgram",
        description="Activity-grammar toolkit: induction, grammar-guided decoding, evaluation.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    pi = sub.add_parser("induce", help="learn a grammar from a corpus file")
    pi.add_argument("corpus")
    pi.add_argument("-o", "--out", required=True)
    pi.add_argument("--name", default="induced")
    pi.add_argument("--eta", type=float, default=None)
    pi.add_argument("--alpha", type=float, default=None)
    pi.add_argument("--window", type=int, default=None)
    pi.add_argument("--bootstrap", type=float, default=None)
    pi.add_argument("--max-iterations", type=int, default=None)
    pi.add_argument("--params-file", default=None, help="key=value induction parameters")
    pi.set_defaults(func=cmd_induce)

    pp = sub.add_parser("parse", help="grammar-refine a probability matrix")
    pp.add_argument("matrix", help="matrix file (.csv or .pmat), or a directory with --batch")
    pp.add_argument("grammar")
    pp.add_argument("-o", "--out", default=None)
    pp.add_argument("--classes", default=None, help="class map CSV giving matrix column names")
    pp.add_argument("--batch", action="store_true")
    pp.add_argument("--jobs", type=int, default=None)
    pp.add_argument("--prior-weight", type=float, default=1.0)
    pp.add_argument("--no-prior", action="store_true")
    pp.add_argument("--no-fallback", action="store_true")
    pp.add_argument("--max-queue", type=int, default=100_000)
    pp.set_defaults(func=cmd_parse)

    pe = sub.add_parser("eval", help="frame-wise metrics for prediction vs ground truth")
    pe.add_argument("pred")
    pe.add_argument("gt")
    pe.add_argument("-k", type=int, default=None)
    pe.add_argument("--json", action="store_true")
    pe.set_defaults(func=cmd_eval)

    ps = sub.add_parser("synth", help="generate synthetic episodes from a grammar")
    ps.add_argument("grammar")
    ps.add_argument("-o", "--out", required=True)
    ps.add_argument("-n", "--episodes", type=int, default=10)
    ps.add_argument("--epsilon", type=float, default=0.5)
    ps.add_argument("--concentration", type=float, default=1.0)
    ps.add_argument("--dur-scale", type=float, default=1.0)
    ps.add_argument("--dur-means", default=None, help="comma-separated per-class mean frames")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--format", choices=("csv", "pmat"), default="csv")
    ps.set_defaults(func=cmd_synth)

    pb = sub.add_parser("bench", help="argmax baseline vs grammar-refined accuracy")
    pb.add_argument("grammar")
    pb.add_argument("-n", "--episodes", type=int, default=50)
    pb.add_argument("--noise", type=float, action="append", required=True,
                    help="noise level (repeatable)")
    pb.add_argument("--concentration", type=float, default=1.0)
    pb.add_argument("--dur-scale", type=float, default=1.0)
    pb.add_argument("--dur-means", default=None)
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--jobs", type=int, default=None)
    pb.add_argument("-o", "--out", default=None)
    pb.add_argument("--prior-weight", type=float, default=1.0)
    pb.add_argument("--no-prior", action="store_true")
    pb.add_argument("--no-fallback", action="store_true")
    pb.add_argument("--max-queue", type=int, default=100_000)
    pb.set_defaults(func=cmd_bench)

    pd = sub.add_parser("dot", help="export a grammar as Graphviz DOT text")
    pd.add_argument("grammar")
    pd.add_argument("-o", "--out", default=None)
    pd.set_defaults(func=cmd_dot)

    pv = sub.add_parser("validate", help="check grammar invariants")
    pv.add_argument("grammar")
    pv.set_defaults(func=cmd_validate)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except dec.NoGrammaticalParseError as e:
        _eprint(f"error: {e}")
        return 2
    except (gr.GrammarError, dec.DecoderError, ind.InductionError, cp.CorpusError) as e:
        _eprint(f"error: {e}")
        return 1
    except MetricsError as e:
        _eprint(f"error: {e}")
        return 1
    except FileNotFoundError as e:
        _eprint(f"error: {e}")
        return 1
    except (OSError, json.JSONDecodeError, ValueError) as e:
        _eprint(f"error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
