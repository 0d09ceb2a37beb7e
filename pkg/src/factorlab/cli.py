"""Command-line interface.

Commands: ``query``, ``filter``, ``smooth``, ``simulate``, ``compare``,
``replay`` and ``export``.  Models are JSON model files or ``builtin:<name>``.
Every command writing to ``--out`` also writes ``<out>.manifest.json``,
which ``replay`` uses to re-run the command and check the output hashes.

Exit codes: 0 success, 2 input error, 3 inference or runtime error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .core import summarize
from .errors import (
    ConfigInvalid,
    DomainMismatch,
    EmptyQuery,
    FactorError,
    IndexOutOfRange,
    MissingVariable,
    ParseError,
    SchemaError,
    StepError,
)
from .inference import FactorGraphModel, StateSpaceModel, filter, smooth, variable_elimination
from .models import load_model, read_observations, serialize_model, simulate, simulation_csv
from .models.simulate import fmt
from .sample import as_seed, child_seed, sample_prior

REPS = ("table", "gaussian", "sample", "hybrid-parametric", "hybrid-sample")
PROJECTIONS = {
    "table": "exact",
    "gaussian": "exact (moment form)",
    "sample": "systematic resampling below ESS n/2",
    "hybrid-parametric": "per-discrete-branch moment matching",
    "hybrid-sample": "systematic resampling below ESS n/2",
}
SCHEMA_VERSION = 1
INPUT_ERRORS = (ParseError, SchemaError, ConfigInvalid, MissingVariable, IndexOutOfRange, EmptyQuery, DomainMismatch)


class InputError(Exception):
    """Bad command-line input (exit code 2)."""


class ReplayMismatch(Exception):
    """A replayed run produced different output bytes (exit code 3)."""


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str) -> str:
    with open(path, "rb") as fh:
        return sha256_bytes(fh.read())


def _model_sha(source: str) -> str:
    if source.startswith("builtin:"):
        return sha256_bytes(source.encode())
    return sha256_file(source)


def _abs(source: str) -> str:
    return source if source.startswith("builtin:") else os.path.abspath(source)


def _load(source: str, kind):
    try:
        model = load_model(source)
    except OSError as err:
        raise InputError(f"cannot read model {source!r}: {err.strerror}") from None
    if not isinstance(model, kind):
        want = "a state-space model" if kind is StateSpaceModel else "a factor-graph model"
        raise InputError(f"{source}: this command needs {want}")
    return model


def _read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as err:
        raise InputError(f"cannot read {path!r}: {err.strerror}") from None


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _emit(args, text: str, outputs: dict, extra: dict | None = None, manifest: dict | None = None):
    """Write the main output to ``--out`` (plus manifest) or to stdout."""
    if not args.out:
        sys.stdout.write(text)
        return
    _write(args.out, text)
    files = {"output": args.out, **(extra or {})}
    for key, path in files.items():
        outputs[key] = {"path": os.path.abspath(path), "sha256": sha256_file(path)}
    doc = dict(manifest or {})
    doc["outputs"] = outputs
    doc["finished"] = datetime.now(timezone.utc).isoformat()
    _write(args.out + ".manifest.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _manifest(args, argv, model_source=None, data=None) -> dict:
    doc = {
        "format": "factorlab-manifest",
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": args.command,
        "argv": argv,
        "cwd": os.getcwd(),
        "started": datetime.now(timezone.utc).isoformat(),
    }
    if model_source is not None:
        doc["model"] = {"source": _abs(model_source), "sha256": _model_sha(model_source)}
    if data is not None:
        doc["data"] = {"path": os.path.abspath(data), "sha256": sha256_file(data)}
    for key in ("rep", "seed", "particles", "T", "reps"):
        if hasattr(args, key):
            doc[key] = getattr(args, key)
    if hasattr(args, "rep"):
        doc["projection"] = PROJECTIONS[args.rep]
    return doc


# ---------------------------------------------------------------------------
# query
# ---------------------------------------------------------------------------


def _parse_evidence(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise InputError(f"evidence must be name=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _coerce_evidence(model: FactorGraphModel, evidence: dict) -> dict:
    return {k: model.variable(k).coerce(v) for k, v in evidence.items()}


def cmd_query(args, argv) -> int:
    model = _load(args.model, FactorGraphModel)
    evidence = _coerce_evidence(model, _parse_evidence(args.evidence))
    query = [q for item in args.query for q in item.split(",") if q]
    for name in query:
        model.variable(name)
    post = variable_elimination(model, query, evidence)
    vars_ = [model.variable(n) for n in post.names]
    table = post.table
    rows = []
    for idx in np.ndindex(*table.shape):
        labels = [v.states[i] if v.states else str(i) for v, i in zip(vars_, idx)]
        rows.append((labels, float(table[idx])))
    if args.format == "json":
        doc = {
            "query": list(post.names),
            "evidence": {k: _parse_evidence(args.evidence)[k] for k in evidence},
            "posterior": [dict(zip(post.names, labels), p=p) for labels, p in rows],
        }
        text = json.dumps(doc, indent=1) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(post.names) + ["p"])
        for labels, p in rows:
            w.writerow(labels + [fmt(p)])
        text = buf.getvalue()
    _emit(args, text, {}, manifest=_manifest(args, argv, args.model))
    return 0


# ---------------------------------------------------------------------------
# filter / smooth / compare
# ---------------------------------------------------------------------------


def _check_rep(model: StateSpaceModel, rep: str) -> None:
    disc = any(v.discrete for v in model.state)
    cont = any(not v.discrete for v in model.state)
    ok = {
        "table": disc and not cont,
        "gaussian": cont and not disc,
        "hybrid-parametric": disc and cont,
        "hybrid-sample": disc and cont,
        "sample": True,
    }[rep]
    if not ok:
        raise InputError(f"representation {rep!r} does not fit a model with state {list(model.state_names)}")


def _initial(model: StateSpaceModel, rep: str, particles: int, seed: int):
    """Belief before the first observation; only this differs between representations."""
    if rep in ("sample", "hybrid-sample"):
        return sample_prior(model.prior, particles, child_seed(as_seed(seed), f"particles/{rep}"))
    return None


def _run(model, observations, rep, particles, seed, smoothing=False):
    _check_rep(model, rep)
    init = _initial(model, rep, particles, seed)
    res = filter(model, observations, initial=init)
    beliefs = smooth(model, observations, filtered=res) if smoothing else res.posteriors
    return beliefs, res.loglik


def _columns(model: StateSpaceModel) -> list[str]:
    cont = [v.name.lower() for v in model.state if not v.discrete]
    cols = [f"mean_{n}" for n in cont] + [f"var_{n}" for n in cont]
    for v in model.state:
        if v.discrete:
            cols += [f"p_{v.name.lower()}{i}" for i in range(v.cardinality)]
    return cols


def _rows(model: StateSpaceModel, beliefs, loglik) -> list[list[float]]:
    rows = []
    for f, ll in zip(beliefs, loglik):
        s = summarize(f)
        cont = [v.name for v in model.state if not v.discrete]
        row = [s.mean[n] for n in cont] + [s.var[n] for n in cont]
        for v in model.state:
            if v.discrete:
                row += list(np.asarray(s.probs[v.name], dtype=float))
        rows.append(row + [ll])
    return rows


def _trajectory_text(header, rows, fmt_name) -> str:
    if fmt_name == "json":
        steps = [dict(zip(header, [t + 1] + [float(x) for x in row])) for t, row in enumerate(rows)]
        doc = {"format": "factorlab-trajectory", "schema_version": SCHEMA_VERSION, "steps": steps}
        return json.dumps(doc, indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for t, row in enumerate(rows, start=1):
        w.writerow([str(t)] + [fmt(x) for x in row])
    return buf.getvalue()


def _observations(model, path):
    return read_observations(model, _read_text(path))


def cmd_filter(args, argv, smoothing=False) -> int:
    model = _load(args.model, StateSpaceModel)
    obs = _observations(model, args.data)
    beliefs, loglik = _run(model, obs, args.rep, args.particles, args.seed, smoothing)
    header = ["t"] + _columns(model) + ["loglik_increment"]
    text = _trajectory_text(header, _rows(model, beliefs, loglik), args.format)
    _emit(args, text, {}, manifest=_manifest(args, argv, args.model, args.data))
    return 0


def cmd_compare(args, argv) -> int:
    model = _load(args.model, StateSpaceModel)
    obs = _observations(model, args.data)
    reps = [r.strip() for r in args.reps.split(",") if r.strip()]
    if len(reps) != 2 or any(r not in REPS for r in reps):
        raise InputError(f"--reps needs two of {', '.join(REPS)}")
    cols = _columns(model)
    runs = {}
    for rep in reps:
        beliefs, loglik = _run(model, obs, rep, args.particles, args.seed)
        runs[rep] = np.array(_rows(model, beliefs, loglik))
    a, b = (runs[r] for r in reps)
    mean_idx = [i for i, c in enumerate(cols) if c.startswith("mean_")]
    prob_idx = [i for i, c in enumerate(cols) if c.startswith("p_")]
    header = ["t"] + [f"{r}:{c}" for r in reps for c in cols + ["loglik_increment"]]
    text = _trajectory_text(header, np.hstack([a, b]).tolist(), args.format)

    def rmse(idx):
        if not idx:
            return None
        d = a[:, idx] - b[:, idx]
        return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))

    summary = {
        "reps": reps,
        "T": len(obs),
        "rmse_mean": rmse(mean_idx),
        "rmse_probs": rmse(prob_idx),
        "nll": {r: float(-np.sum(runs[r][:, -1])) for r in reps},
    }
    summary_text = json.dumps(summary, indent=1) + "\n"
    if args.out:
        _write(args.out + ".summary.json", summary_text)
        _emit(args, text, {}, {"summary": args.out + ".summary.json"}, _manifest(args, argv, args.model, args.data))
    else:
        sys.stdout.write(summary_text)
    return 0


# ---------------------------------------------------------------------------
# simulate / export / replay
# ---------------------------------------------------------------------------


def cmd_simulate(args, argv) -> int:
    model = _load(args.model, StateSpaceModel)
    if args.T < 1:
        raise InputError("--T must be positive")
    sim = simulate(model, args.T, child_seed(as_seed(args.seed), "simulate"))
    _emit(args, simulation_csv(model, sim), {}, manifest=_manifest(args, argv, args.model))
    return 0


def cmd_export(args, argv) -> int:
    try:
        model = load_model(args.model)
    except OSError as err:
        raise InputError(f"cannot read model {args.model!r}: {err.strerror}") from None
    _emit(args, serialize_model(model), {}, manifest=_manifest(args, argv, args.model))
    return 0


def _retarget(argv: list[str], out: str) -> list[str]:
    argv = list(argv)
    for i, a in enumerate(argv):
        if a == "--out":
            argv[i + 1] = out
            return argv
        if a.startswith("--out="):
            argv[i] = "--out=" + out
            return argv
    raise InputError("manifest argv has no --out")


def cmd_replay(args, argv) -> int:
    try:
        manifest = json.loads(_read_text(args.manifest))
    except json.JSONDecodeError as err:
        raise ParseError(err.msg, err.lineno, err.colno) from None
    if manifest.get("format") != "factorlab-manifest":
        raise SchemaError("not a run manifest", field="format")
    for key in ("model", "data"):
        if key in manifest and not manifest[key].get("source", "").startswith("builtin:"):
            path = manifest[key].get("source") or manifest[key].get("path")
            if sha256_file(path) != manifest[key]["sha256"]:
                raise ReplayMismatch(f"{key} file {path} changed since the recorded run")
    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, os.path.basename(manifest["outputs"]["output"]["path"]))
        code = main(_retarget(manifest["argv"], out))
        if code != 0:
            raise ReplayMismatch(f"replayed command exited with {code}")
        replayed = json.loads(_read_text(out + ".manifest.json"))["outputs"]
    report = {}
    for key, rec in manifest["outputs"].items():
        report[key] = {"recorded": rec["sha256"], "replayed": replayed.get(key, {}).get("sha256")}
    same = all(r["recorded"] == r["replayed"] for r in report.values())
    sys.stdout.write(json.dumps({"identical": same, "outputs": report}, indent=1) + "\n")
    if not same:
        raise ReplayMismatch("replayed outputs differ from the manifest")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="factorlab", description="Representation-agnostic factor inference.")
    p.add_argument("--version", action="version", version=f"factorlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        if model:
            sp.add_argument("model", help="model file or builtin:<name>")
        sp.add_argument("--out", help="output path (default: stdout, no manifest)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    q = sub.add_parser("query", help="posterior marginal by variable elimination")
    common(q)
    q.add_argument("--query", nargs="+", required=True, help="query variables")
    q.add_argument("--evidence", nargs="*", default=[], help="name=value pairs")

    for name, help_ in (("filter", "filtered posteriors"), ("smooth", "smoothed posteriors")):
        f = sub.add_parser(name, help=help_)
        common(f)
        f.add_argument("--data", required=True, help="observation CSV")
        f.add_argument("--rep", choices=REPS, required=True)
        f.add_argument("--particles", type=int, default=1000)
        f.add_argument("--seed", type=int, default=0)

    c = sub.add_parser("compare", help="run two representations on the same data")
    common(c)
    c.add_argument("--data", required=True)
    c.add_argument("--reps", required=True, help="two representations, comma separated")
    c.add_argument("--particles", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("simulate", help="simulate states and observations")
    common(s)
    s.add_argument("--T", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)

    e = sub.add_parser("export", help="write a model as a JSON model file")
    common(e)

    r = sub.add_parser("replay", help="re-run a manifest and compare output hashes")
    r.add_argument("manifest")
    return p


def _canonical_argv(args, argv: list[str]) -> list[str]:
    """argv with model, data and output paths made absolute, for manifests."""
    out = list(argv)
    for i, a in enumerate(out):
        if a in ("--data", "--out") and i + 1 < len(out):
            out[i + 1] = os.path.abspath(out[i + 1])
    if getattr(args, "model", None) and args.model in out:
        out[out.index(args.model)] = _abs(args.model)
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    if getattr(args, "particles", 1) < 1:
        parser.print_usage(sys.stderr)
        print("factorlab: error: --particles must be positive", file=sys.stderr)
        return 2
    commands = {
        "query": cmd_query,
        "filter": cmd_filter,
        "smooth": lambda a, v: cmd_filter(a, v, smoothing=True),
        "compare": cmd_compare,
        "simulate": cmd_simulate,
        "export": cmd_export,
        "replay": cmd_replay,
    }
    try:
        return commands[args.command](args, _canonical_argv(args, argv))
    except InputError as err:
        print(f"factorlab: error: {err}", file=sys.stderr)
        return 2
    except StepError as err:
        print(f"factorlab: inference failed at step {err.step}: {err.cause.code}: {err.cause}", file=sys.stderr)
        return 3
    except INPUT_ERRORS as err:
        print(f"factorlab: error: {err.code}: {err}", file=sys.stderr)
        return 2
    except (FactorError, ReplayMismatch) as err:
        code = getattr(err, "code", type(err).__name__)
        print(f"factorlab: error: {code}: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
