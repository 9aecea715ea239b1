"""Command-line pipeline: gen | steps | prove | run | audit | report.

All interchange is line-delimited JSON records.  Every subcommand streams
its inputs, writes through a temp file that is renamed only on success
(errors never leave partial outputs), and drops a .manifest.json next to
each output with everything needed to reproduce it byte-for-byte.

Exit codes: 0 ok, 1 user error (flags, files, formats), 2 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .audit import audit_trace, record_verdict, verdict_record
from .core import HornError, label_and_depth
from .engine import EngineConfig, run_proof
from .generate import (
    Dataset,
    GenConfig,
    KINDS,
    iter_problem_steps,
    split as split_dataset,
)
from .metrics import (
    AccuracyTable,
    DatasetAccumulator,
    MetricsTables,
    RateRow,
    RatesTable,
    render_report,
)
from .proposers import ProposerFailure, make_proposer
from .records import (
    problem_record,
    read_records,
    record_problem,
    record_trace,
    trace_record,
    write_record,
)
from .seeds import child_seed
from .textwire import ORDER_CANONICAL, ORDER_SHUFFLE, ParseError, parse_problem

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

DATA_DIR_ENV = "HORNBENCH_DATA_DIR"


class UserError(HornError):
    pass


# --- plumbing ---------------------------------------------------------------


def _resolve(path: str) -> str:
    base = os.environ.get(DATA_DIR_ENV)
    if base and not os.path.isabs(path) and not path.startswith("."):
        return os.path.join(base, path)
    return path


class _Output:
    """Write to <path>.tmp, rename on success, unlink on failure."""

    def __init__(self, path: str):
        self.path = _resolve(path)
        self.tmp = self.path + ".tmp"

    def __enter__(self):
        parent = os.path.dirname(self.path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        self.f = open(self.tmp, "w", encoding="utf-8")
        return self.f

    def __exit__(self, exc_type, exc, tb):
        self.f.close()
        if exc_type is None:
            os.replace(self.tmp, self.path)
        else:
            try:
                os.unlink(self.tmp)
            except FileNotFoundError:
                pass


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(subcommand: str, args: dict, inputs: list[str], outputs: list[str]) -> None:
    manifest = {
        "tool": "hornbench",
        "version": __version__,
        "subcommand": subcommand,
        "args": args,
        "inputs": [{"path": p, "sha256": _sha256(p)} for p in inputs],
        "outputs": outputs,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    for out in outputs:
        with open(out + ".manifest.json", "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")


def _parse_range(text: str, flag: str) -> tuple[int, int]:
    try:
        lo, hi = (int(x) for x in text.split(":"))
    except ValueError as exc:
        raise UserError(f"{flag} expects lo:hi, got {text!r}") from exc
    if lo > hi:
        raise UserError(f"{flag}: lo must be <= hi, got {text!r}")
    return lo, hi


def _load_config(args: argparse.Namespace) -> GenConfig:
    values: dict = {}
    if args.config:
        path = _resolve(args.config)
        if not os.path.exists(path):
            raise UserError(f"config file not found: {path}")
        with open(path, "rb") as f:
            values.update(tomllib.load(f))
    for key in ("num_problems", "seed"):
        flag = {"num_problems": "n"}.get(key, key)
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    for key, flag in (
        ("depth_range", "depth"),
        ("rules_range", "rules"),
        ("facts_range", "facts"),
        ("pool_range", "pool"),
    ):
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = _parse_range(v, f"--{flag}")
    if "vocabulary" in values and isinstance(values["vocabulary"], str):
        with open(_resolve(values["vocabulary"]), encoding="utf-8") as f:
            values["vocabulary"] = tuple(w for w in f.read().split() if w)
    for key in ("depth_range", "rules_range", "facts_range", "pool_range", "split", "premise_weights"):
        if key in values:
            values[key] = tuple(values[key])
    if "vocabulary" in values:
        values["vocabulary"] = tuple(values["vocabulary"])
    try:
        return GenConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UserError(f"bad generation config: {exc}") from exc


# --- subcommands -------------------------------------------------------------


def _cmd_gen(args) -> None:
    if args.kind not in KINDS:
        raise UserError(f"--kind must be one of {', '.join(KINDS)}")
    config = _load_config(args)
    from .generate import generate

    dataset = generate(args.kind, config, jobs=args.jobs)
    outputs = []
    if args.split:
        parts = split_dataset(dataset)
        names = ("train", "val", "test")
        for name, part in zip(names, parts):
            path = f"{args.out}.{name}"
            _write_dataset(part, path)
            outputs.append(_resolve(path))
    else:
        _write_dataset(dataset, args.out)
        outputs.append(_resolve(args.out))
    _write_manifest("gen", _args_dict(args), [], outputs)


def _write_dataset(dataset: Dataset, path: str) -> None:
    with _Output(path) as f:
        for problem_id, problem in zip(dataset.ids(), dataset.problems):
            write_record(f, problem_record(problem_id, dataset.subset_kind, problem))


def _cmd_steps(args) -> None:
    in_path = _resolve(args.dataset)
    if not os.path.exists(in_path):
        raise UserError(f"dataset not found: {in_path}")
    order = ORDER_SHUFFLE if args.shuffle else ORDER_CANONICAL
    wrote = 0
    with _Output(args.out) as f:
        for rec in read_records(in_path):
            problem_id, problem = record_problem(rec)
            if args.whole_proofs:
                from .textwire import render_whole_proof, serialize_problem

                proof = render_whole_proof(problem, order=args.order)
                if args.shuffle:
                    text = serialize_problem(problem, ORDER_SHUFFLE, child_seed(args.seed, problem_id))
                else:
                    text = serialize_problem(problem)
                write_record(
                    f,
                    {
                        "problem_id": problem_id,
                        "input": text,
                        "target": proof.text,
                    },
                )
                wrote += 1
                continue
            seed = child_seed(args.seed, problem_id) if args.shuffle else None
            for index, inst in enumerate(iter_problem_steps(problem, order, seed)):
                write_record(
                    f,
                    {
                        "problem_id": problem_id,
                        "step_index": index,
                        "input": inst.input,
                        "target": inst.target,
                    },
                )
                wrote += 1
    if not wrote:
        raise UserError(f"no records in {in_path}")
    _write_manifest("steps", _args_dict(args), [in_path], [_resolve(args.out)])


def _cmd_prove(args) -> None:
    in_path = _resolve(args.infile)
    if not os.path.exists(in_path):
        raise UserError(f"input not found: {in_path}")
    wrote = 0
    with _Output(args.out) as f:
        for i, rec in enumerate(read_records(in_path)):
            try:
                problem = parse_problem(rec["text"])
            except ParseError as exc:
                raise UserError(f"record {i}: {exc}") from exc
            label, depth = label_and_depth(problem, max_depth=args.max_depth)
            problem = dataclasses.replace(problem, label=label, depth=depth)
            problem_id = rec.get("id", f"problem-{i:07d}")
            write_record(f, problem_record(problem_id, rec.get("subset", "custom"), problem))
            wrote += 1
    if not wrote:
        raise UserError(f"no records in {in_path}")
    _write_manifest("prove", _args_dict(args), [in_path], [_resolve(args.out)])


def _run_chunk(records: list[dict], spec: str, seed: int, engine_kwargs: dict, timeout: float):
    proposer = make_proposer(spec, seed=seed, timeout=timeout)
    out = []
    try:
        for rec in records:
            problem_id, problem = record_problem(rec)
            if spec.startswith("corrupt:"):
                proposer = make_proposer(spec, seed=child_seed(seed, problem_id), timeout=timeout)
            config = EngineConfig(**engine_kwargs)
            trace = run_proof(problem, proposer, config, problem_id=problem_id)
            out.append(trace_record(trace))
    finally:
        close = getattr(proposer, "close", None)
        if close:
            close()
    return out


def _cmd_run(args) -> None:
    in_path = _resolve(args.dataset)
    if not os.path.exists(in_path):
        raise UserError(f"dataset not found: {in_path}")
    jobs = args.jobs
    if args.proposer.startswith("external:tcp:") and jobs > 1:
        print("hornbench: note: tcp proposers run single-connection; forcing --jobs 1", file=sys.stderr)
        jobs = 1
    engine_kwargs = dict(
        max_iterations=args.cap,
        candidates_per_step=args.k,
        retry_on_invalid=not args.no_retry,
        order=ORDER_SHUFFLE if args.shuffle else ORDER_CANONICAL,
        shuffle_seed=args.seed,
    )

    def chunks():
        chunk: list[dict] = []
        for rec in read_records(in_path):
            chunk.append(rec)
            if len(chunk) == 256:
                yield chunk
                chunk = []
        if chunk:
            yield chunk

    wrote = 0
    with _Output(args.out) as f:
        if jobs <= 1:
            for chunk in chunks():
                for rec in _run_chunk(chunk, args.proposer, args.seed, engine_kwargs, args.timeout):
                    write_record(f, rec)
                    wrote += 1
        else:
            # Bounded submission window keeps memory independent of file size
            # while results are written strictly in input order.
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                pending = []
                source = chunks()
                exhausted = False
                while pending or not exhausted:
                    while not exhausted and len(pending) < jobs * 2:
                        chunk = next(source, None)
                        if chunk is None:
                            exhausted = True
                            break
                        pending.append(
                            pool.submit(
                                _run_chunk, chunk, args.proposer, args.seed, engine_kwargs, args.timeout
                            )
                        )
                    if not pending:
                        break
                    for rec in pending.pop(0).result():
                        write_record(f, rec)
                        wrote += 1
        if not wrote:
            raise UserError(f"no records in {in_path}")
    _write_manifest("run", _args_dict(args), [in_path], [_resolve(args.out)])


def _iter_joined(dataset_path: str, trace_path: str):
    """Lockstep join: traces must appear in dataset order (datasets may hold
    extra problems; traces for unknown ids are an error)."""
    problems = read_records(dataset_path)
    for trace_rec in read_records(trace_path):
        want = trace_rec["problem_id"]
        for rec in problems:
            if rec["id"] == want:
                yield rec, trace_rec
                break
        else:
            raise UserError(
                f"trace {want!r} not found in dataset (traces must follow dataset order)"
            )


def _cmd_audit(args) -> None:
    dataset_path = _resolve(args.dataset)
    trace_path = _resolve(args.traces)
    for p in (dataset_path, trace_path):
        if not os.path.exists(p):
            raise UserError(f"input not found: {p}")
    wrote = 0
    with _Output(args.out) as f:
        for ds_rec, tr_rec in _iter_joined(dataset_path, trace_path):
            _, problem = record_problem(ds_rec)
            truth = ds_rec.get("label")
            trace = record_trace(
                tr_rec,
                predicted_label=(
                    not truth
                    if tr_rec["terminal"] == "Unresolved" and truth is not None
                    else None
                ),
            )
            verdict = audit_trace(problem, trace)
            write_record(f, verdict_record(verdict))
            wrote += 1
    if not wrote:
        raise UserError(f"no traces in {trace_path}")
    _write_manifest("audit", _args_dict(args), [dataset_path, trace_path], [_resolve(args.out)])


def _cmd_report(args) -> None:
    inputs = []
    tables = MetricsTables()
    label = args.label

    if args.traces:
        if not args.dataset:
            raise UserError("--traces needs --dataset for ground truth")
        dataset_path, trace_path = _resolve(args.dataset), _resolve(args.traces)
        for p in (dataset_path, trace_path):
            if not os.path.exists(p):
                raise UserError(f"input not found: {p}")
        inputs += [dataset_path, trace_path]
        acc_counts: dict[int, list[int]] = {}
        cell_counts: dict[int, list[int]] = {}
        n_outcomes = 0
        for ds_rec, tr_rec in _iter_joined(dataset_path, trace_path):
            truth = ds_rec.get("label")
            if truth is None:
                raise UserError(f"dataset record {ds_rec['id']} has no label")
            if tr_rec["terminal"] == "Unresolved":
                predicted = not truth
            else:
                predicted = tr_rec["terminal"] == "True"
            depth = ds_rec.get("depth", -1)
            n_outcomes += 1
            cell = acc_counts.setdefault(depth, [0, 0])
            cell[0] += truth == predicted
            cell[1] += 1
            conf = cell_counts.setdefault(depth, [0, 0, 0, 0])
            conf[0 if truth else 1] += predicted
            conf[2 if not truth else 3] += not predicted
        if not n_outcomes:
            raise UserError(f"no traces in {trace_path}")
        tables.accuracy = [
            (label, AccuracyTable(counts={d: (c, n) for d, (c, n) in acc_counts.items()}))
        ]
        per_depth = {d: RateRow(*c) for d, c in sorted(cell_counts.items())}
        total = RateRow(
            tp=sum(r.tp for r in per_depth.values()),
            fp=sum(r.fp for r in per_depth.values()),
            tn=sum(r.tn for r in per_depth.values()),
            fn=sum(r.fn for r in per_depth.values()),
        )
        tables.rates = [(label, RatesTable(per_depth=per_depth, total=total))]

    if args.verdicts:
        verdict_path = _resolve(args.verdicts)
        if not os.path.exists(verdict_path):
            raise UserError(f"input not found: {verdict_path}")
        inputs.append(verdict_path)
        from .audit import aggregate

        verdicts = [record_verdict(rec) for rec in read_records(verdict_path)]
        if not verdicts:
            raise UserError(f"no verdicts in {verdict_path}")
        tables.consistency = [(label, aggregate(verdicts))]

    if args.dataset and args.stats:
        dataset_path = _resolve(args.dataset)
        if dataset_path not in inputs:
            if not os.path.exists(dataset_path):
                raise UserError(f"input not found: {dataset_path}")
            inputs.append(dataset_path)
        acc = DatasetAccumulator()
        for rec in read_records(dataset_path):
            _, problem = record_problem(rec)
            acc.add(problem)
        tables.stats = [(label, acc.stats())]

    if not (tables.accuracy or tables.consistency or tables.stats):
        raise UserError("nothing to report: pass --traces, --verdicts, or --stats")
    payload = render_report(tables, format=args.format)
    with _Output(args.out) as f:
        f.write(payload.decode("utf-8"))
    _write_manifest("report", _args_dict(args), inputs, [_resolve(args.out)])


# --- argument parsing --------------------------------------------------------


def _args_dict(args: argparse.Namespace) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func",)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hornbench",
        description="Horn-clause reasoning workbench: generate, prove, run, audit, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a problem set (rp | lp | rp_b)")
    gen.add_argument("--kind", required=True, help="rp | lp | rp_b")
    gen.add_argument("--n", type=int, default=None, help="number of problems")
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--out", required=True)
    gen.add_argument("--config", help="TOML file with GenConfig keys")
    gen.add_argument("--depth", help="depth range lo:hi")
    gen.add_argument("--rules", help="rule-count range lo:hi")
    gen.add_argument("--facts", help="fact-count range lo:hi")
    gen.add_argument("--pool", help="per-problem literal pool range lo:hi")
    gen.add_argument("--split", action="store_true", help="write train/val/test files")
    gen.add_argument("--jobs", type=int, default=1)
    gen.set_defaults(func=_cmd_gen)

    steps = sub.add_parser("steps", help="expand a dataset into step instances")
    steps.add_argument("--dataset", required=True)
    steps.add_argument("--out", required=True)
    steps.add_argument("--whole-proofs", action="store_true", help="one whole-proof target per problem")
    steps.add_argument("--order", default="forward", choices=("forward", "backward"))
    steps.add_argument("--shuffle", action="store_true", help="shuffle item order in inputs")
    steps.add_argument("--seed", type=int, default=0)
    steps.set_defaults(func=_cmd_steps)

    prove = sub.add_parser("prove", help="label an unlabeled problem file")
    prove.add_argument("--in", dest="infile", required=True)
    prove.add_argument("--out", required=True)
    prove.add_argument("--max-depth", type=int, default=None)
    prove.set_defaults(func=_cmd_prove)

    run = sub.add_parser("run", help="run the proof loop over a dataset")
    run.add_argument("--dataset", required=True)
    run.add_argument("--out", required=True)
    run.add_argument(
        "--proposer",
        default="oracle",
        help="oracle | corrupt:<kind>@<rate>[@seed] | external:<endpoint>",
    )
    run.add_argument("--cap", type=int, default=100, help="iteration cap")
    run.add_argument("--k", type=int, default=1, help="candidates per step")
    run.add_argument("--no-retry", action="store_true")
    run.add_argument("--shuffle", action="store_true", help="shuffle state serialization")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--timeout", type=float, default=30.0, help="external proposer timeout (s)")
    run.add_argument("--jobs", type=int, default=1)
    run.set_defaults(func=_cmd_run)

    audit = sub.add_parser("audit", help="audit traces against the error taxonomy")
    audit.add_argument("--dataset", required=True)
    audit.add_argument("--traces", required=True)
    audit.add_argument("--out", required=True)
    audit.set_defaults(func=_cmd_audit)

    report = sub.add_parser("report", help="render evaluation tables")
    report.add_argument("--dataset")
    report.add_argument("--traces")
    report.add_argument("--verdicts")
    report.add_argument("--stats", action="store_true", help="include dataset statistics")
    report.add_argument("--out", required=True)
    report.add_argument("--format", default="markdown", choices=("markdown", "csv", "json"))
    report.add_argument("--label", default="run", help="row label for the tables")
    report.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
        return 0
    except UserError as exc:
        print(f"error: user: {exc}", file=sys.stderr)
        return 1
    except (HornError, ProposerFailure) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - the CLI boundary
        print(f"error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
