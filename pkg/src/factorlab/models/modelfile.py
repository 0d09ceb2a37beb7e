"""JSON model documents.

A document is a JSON object::

    {
      "format": "factorlab-model",
      "version": 1,
      "metadata": {"name": "...", "description": "..."},
      "variables": [{"name": "B", "kind": "discrete", "cardinality": 2,
                     "states": ["false", "true"]},
                    {"name": "F1", "kind": "continuous"}],
      "factors": [{"id": "f0", "type": "table", "scope": ["B"], "values": [0.999, 0.001]}, ...],
      "dbn": {"state": [...], "next_state": [...], "observed": [...],
              "prior": ["f0"], "transition": [...], "observation": [...]}
    }

Without ``dbn`` the document is a factor-graph model.  Instead of
``variables``/``factors`` a document may name a ``template``
(``burglary``, ``quadrant``, ``linear_gaussian``) with a ``config`` object.

Factor types and their fields:

``table``            ``scope``, ``values`` (nested lists, axes in scope order)
``sparse_table``     ``scope``, ``entries`` (list of ``[[indices...], value]``)
``canonical``        ``scope``, ``K``, ``h``, ``g`` (``null`` means minus infinity)
``gaussian``         ``scope``, ``mean``, ``cov``, optional ``log_weight``
``linear_gaussian``  ``inputs``, ``outputs``, ``matrix``, ``offset``, ``covariance``
``conditional``      ``discrete``, ``continuous``, ``branches`` (factor objects, row-major)
``indicator``        ``selectors``, ``variables``, ``regions`` (list of ``{"key": [...],
                     "box": {name: [lower, upper]}}``; ``null`` bounds are infinite)
"""

from __future__ import annotations

import json

import numpy as np

from ..core import Factor, Variable
from ..errors import ConfigInvalid, FactorError, ParseError, SchemaError
from ..gaussian import CanonicalGaussian, MomentGaussian, linear_gaussian
from ..hybrid import ConditionalFactor, IndicatorFactor
from ..inference import FactorGraphModel, StateSpaceModel
from ..table import SparseTableFactor, TableFactor, all_assignments
from .burglary import burglary_model
from .linear import linear_gaussian_ssm
from .quadrant import QuadrantConfig, quadrant_model

FORMAT = "factorlab-model"
VERSION = 1


def _req(obj, key, path):
    if not isinstance(obj, dict):
        raise SchemaError("expected an object", field=path)
    if key not in obj:
        raise SchemaError("missing required field", field=f"{path}.{key}" if path else key)
    return obj[key]


def _array(x, path, ndim=None):
    try:
        a = np.array(x, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError("expected numbers", field=path) from None
    if ndim is not None and a.ndim != ndim:
        raise SchemaError(f"expected a {ndim}-d array", field=path)
    return a


def _bound(x, default, path):
    if x is None:
        return default
    if not isinstance(x, (int, float)) or isinstance(x, bool):
        raise SchemaError("bounds are numbers or null", field=path)
    return float(x)


class _Reader:
    def __init__(self, variables: dict[str, Variable]):
        self.variables = variables

    def vars(self, names, path) -> list[Variable]:
        if not isinstance(names, list):
            raise SchemaError("expected a list of variable names", field=path)
        out = []
        for i, n in enumerate(names):
            if n not in self.variables:
                raise SchemaError(f"undeclared variable {n!r}", field=f"{path}[{i}]")
            out.append(self.variables[n])
        return out

    def factor(self, spec, path) -> Factor:
        kind = _req(spec, "type", path)
        try:
            reader = getattr(self, f"_{kind}") if isinstance(kind, str) else None
        except AttributeError:
            reader = None
        if reader is None:
            raise SchemaError(f"unknown representation {kind!r}", field=f"{path}.type")
        try:
            return reader(spec, path)
        except (SchemaError, ParseError):
            raise
        except (ValueError, TypeError, IndexError, FactorError) as err:
            raise SchemaError(str(err), field=path) from None

    def _table(self, spec, path):
        scope = self.vars(_req(spec, "scope", path), f"{path}.scope")
        values = _array(_req(spec, "values", path), f"{path}.values")
        if values.size != int(np.prod([v.cardinality for v in scope])):
            raise SchemaError("size does not match the scope cardinalities", field=f"{path}.values")
        return TableFactor(scope, values)

    def _sparse_table(self, spec, path):
        scope = self.vars(_req(spec, "scope", path), f"{path}.scope")
        entries = {}
        for i, item in enumerate(_req(spec, "entries", path)):
            if not (isinstance(item, list) and len(item) == 2 and isinstance(item[0], list)):
                raise SchemaError("entries are [[indices...], value] pairs", field=f"{path}.entries[{i}]")
            entries[tuple(int(k) for k in item[0])] = float(item[1])
        return SparseTableFactor(scope, entries)

    def _canonical(self, spec, path):
        scope = self.vars(_req(spec, "scope", path), f"{path}.scope")
        g = spec.get("g", 0.0)
        return CanonicalGaussian(
            scope,
            _array(_req(spec, "K", path), f"{path}.K", 2),
            _array(_req(spec, "h", path), f"{path}.h", 1),
            -np.inf if g is None else float(g),
        )

    def _gaussian(self, spec, path):
        scope = self.vars(_req(spec, "scope", path), f"{path}.scope")
        return MomentGaussian(
            scope,
            _array(_req(spec, "mean", path), f"{path}.mean", 1),
            _array(_req(spec, "cov", path), f"{path}.cov", 2),
            float(spec.get("log_weight", 0.0)),
        )

    def _linear_gaussian(self, spec, path):
        inputs = self.vars(_req(spec, "inputs", path), f"{path}.inputs")
        outputs = self.vars(_req(spec, "outputs", path), f"{path}.outputs")
        return linear_gaussian(
            inputs,
            outputs,
            _array(_req(spec, "matrix", path), f"{path}.matrix"),
            _array(spec.get("offset", [0.0] * len(outputs)), f"{path}.offset"),
            _array(_req(spec, "covariance", path), f"{path}.covariance"),
        )

    def _conditional(self, spec, path):
        disc = self.vars(_req(spec, "discrete", path), f"{path}.discrete")
        cont = self.vars(_req(spec, "continuous", path), f"{path}.continuous")
        branches = _req(spec, "branches", path)
        keys = all_assignments(disc)
        if not isinstance(branches, list) or len(branches) != len(keys):
            raise SchemaError(f"expected {len(keys)} branches", field=f"{path}.branches")
        return ConditionalFactor(disc, cont, [self.factor(b, f"{path}.branches[{i}]") for i, b in enumerate(branches)])

    def _indicator(self, spec, path):
        sel = self.vars(spec.get("selectors", []), f"{path}.selectors")
        cont = self.vars(_req(spec, "variables", path), f"{path}.variables")
        regions = {}
        for i, r in enumerate(_req(spec, "regions", path)):
            rp = f"{path}.regions[{i}]"
            key = tuple(_req(r, "key", rp)) if sel else ()
            box = {}
            for name, b in _req(r, "box", rp).items():
                if not (isinstance(b, list) and len(b) == 2):
                    raise SchemaError("box bounds are [lower, upper]", field=f"{rp}.box.{name}")
                box[name] = (_bound(b[0], -np.inf, f"{rp}.box.{name}"), _bound(b[1], np.inf, f"{rp}.box.{name}"))
            regions[key] = box
        return IndicatorFactor(sel, cont, regions)


def _variables(doc) -> dict[str, Variable]:
    out = {}
    specs = _req(doc, "variables", "")
    if not isinstance(specs, list):
        raise SchemaError("expected a list", field="variables")
    for i, v in enumerate(specs):
        path = f"variables[{i}]"
        name = _req(v, "name", path)
        kind = _req(v, "kind", path)
        if not isinstance(name, str) or not name:
            raise SchemaError("variable names are non-empty strings", field=f"{path}.name")
        if name in out:
            raise SchemaError(f"duplicate variable {name!r}", field=f"{path}.name")
        if kind == "discrete":
            card = _req(v, "cardinality", path)
            if not isinstance(card, int) or isinstance(card, bool) or card < 1:
                raise SchemaError("cardinality must be a positive integer", field=f"{path}.cardinality")
            states = v.get("states")
            if states is not None and (not isinstance(states, list) or len(states) != card):
                raise SchemaError("one state label per value", field=f"{path}.states")
            out[name] = Variable(name, card, tuple(states) if states is not None else None)
        elif kind == "continuous":
            out[name] = Variable(name)
        else:
            raise SchemaError(f"unknown variable kind {kind!r}", field=f"{path}.kind")
    return out


def _template(doc):
    name = doc["template"]
    cfg = doc.get("config", {}) or {}
    if not isinstance(cfg, dict):
        raise SchemaError("expected an object", field="config")
    try:
        if name == "burglary":
            return burglary_model()
        if name == "quadrant":
            return quadrant_model(QuadrantConfig.from_dict(cfg))
        if name == "linear_gaussian":
            keys = ["A", "Q", "C", "R", "m0", "P0"]
            missing = [k for k in keys if k not in cfg]
            if missing:
                raise SchemaError("missing required field", field=f"config.{missing[0]}")
            return linear_gaussian_ssm(*(cfg[k] for k in keys))
    except ConfigInvalid as err:
        raise SchemaError(str(err), field="config") from None
    except (ValueError, TypeError) as err:
        raise SchemaError(str(err), field="config") from None
    raise SchemaError(f"unknown template {name!r}", field="template")


def parse_model(text: str) -> FactorGraphModel | StateSpaceModel:
    """Parse a model document.

    Raises
    ------
    ParseError
        Malformed JSON, with line and column.
    SchemaError
        Valid JSON that is not a valid model; ``field`` is the offending path.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(err.msg, err.lineno, err.colno) from None
    if not isinstance(doc, dict):
        raise SchemaError("a model document is a JSON object", field="")
    if doc.get("format") != FORMAT:
        raise SchemaError(f"expected {FORMAT!r}", field="format")
    if doc.get("version") != VERSION:
        raise SchemaError(f"unsupported version {doc.get('version')!r}", field="version")
    if "template" in doc:
        return _template(doc)
    meta = doc.get("metadata", {}) or {}
    variables = _variables(doc)
    reader = _Reader(variables)
    specs = _req(doc, "factors", "")
    if not isinstance(specs, list):
        raise SchemaError("expected a list", field="factors")
    factors, ids = [], {}
    for i, spec in enumerate(specs):
        f = reader.factor(spec, f"factors[{i}]")
        fid = spec.get("id", f"f{i}")
        if fid in ids:
            raise SchemaError(f"duplicate factor id {fid!r}", field=f"factors[{i}].id")
        ids[fid] = f
        factors.append(f)
    name, desc = str(meta.get("name", "")), str(meta.get("description", ""))
    if "dbn" not in doc:
        try:
            return FactorGraphModel(tuple(variables.values()), factors, name, desc)
        except (ValueError, FactorError) as err:
            raise SchemaError(str(err), field="factors") from None
    dbn = doc["dbn"]

    def refs(key):
        out = []
        for j, fid in enumerate(_req(dbn, key, "dbn")):
            if fid not in ids:
                raise SchemaError(f"unknown factor id {fid!r}", field=f"dbn.{key}[{j}]")
            out.append(ids[fid])
        return out

    try:
        return StateSpaceModel(
            reader.vars(_req(dbn, "state", "dbn"), "dbn.state"),
            reader.vars(_req(dbn, "next_state", "dbn"), "dbn.next_state"),
            reader.vars(_req(dbn, "observed", "dbn"), "dbn.observed"),
            refs("prior"),
            refs("transition"),
            refs("observation"),
            name,
            desc,
        )
    except SchemaError:
        raise
    except (ValueError, FactorError) as err:
        raise SchemaError(str(err), field="dbn") from None


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------


def _num(x: float):
    return None if x == -np.inf else float(x)


def _box(box):
    return {n: [None if lo == -np.inf else lo, None if hi == np.inf else hi] for n, (lo, hi) in box.items()}


def factor_to_dict(f: Factor) -> dict:
    if isinstance(f, TableFactor):
        return {"type": "table", "scope": list(f.names), "values": f.table.tolist()}
    if isinstance(f, SparseTableFactor):
        entries = [[list(k), v] for k, v in sorted(f.entries.items())]
        return {"type": "sparse_table", "scope": list(f.names), "entries": entries}
    if isinstance(f, CanonicalGaussian):
        return {"type": "canonical", "scope": list(f.names), "K": f.K.tolist(), "h": f.h.tolist(), "g": _num(f.g)}
    if isinstance(f, MomentGaussian):
        return {
            "type": "gaussian",
            "scope": list(f.names),
            "mean": f.mean.tolist(),
            "cov": f.cov.tolist(),
            "log_weight": f.log_weight,
        }
    if isinstance(f, ConditionalFactor):
        return {
            "type": "conditional",
            "discrete": [v.name for v in f.discrete],
            "continuous": [v.name for v in f.continuous],
            "branches": [factor_to_dict(f.table[k]) for k in all_assignments(f.discrete)],
        }
    if isinstance(f, IndicatorFactor):
        return {
            "type": "indicator",
            "selectors": [v.name for v in f.selectors],
            "variables": [v.name for v in f.continuous],
            "regions": [{"key": list(k), "box": _box(b)} for k, b in sorted(f.regions.items())],
        }
    raise SchemaError(f"{f.rep} factors cannot be serialised", field="factors")


def _variable_dict(v: Variable) -> dict:
    if not v.discrete:
        return {"name": v.name, "kind": "continuous"}
    out = {"name": v.name, "kind": "discrete", "cardinality": v.cardinality}
    if v.states is not None:
        out["states"] = list(v.states)
    return out


def model_to_dict(model) -> dict:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "metadata": {"name": model.name, "description": model.description},
    }
    if isinstance(model, FactorGraphModel):
        doc["variables"] = [_variable_dict(v) for v in model.variables]
        doc["factors"] = [dict(id=f"f{i}", **factor_to_dict(f)) for i, f in enumerate(model.factors)]
        return doc
    groups = {"prior": model.prior, "transition": model.transition, "observation": model.observation}
    variables = list(model.state) + list(model.next_state) + list(model.observed)
    doc["variables"] = [_variable_dict(v) for v in variables]
    doc["factors"] = []
    dbn = {
        "state": list(model.state_names),
        "next_state": list(model.next_names),
        "observed": [v.name for v in model.observed],
    }
    for key, factors in groups.items():
        dbn[key] = []
        for i, f in enumerate(factors):
            fid = f"{key}{i}"
            doc["factors"].append(dict(id=fid, **factor_to_dict(f)))
            dbn[key].append(fid)
    doc["dbn"] = dbn
    return doc


def serialize_model(model) -> str:
    return json.dumps(model_to_dict(model), indent=1, allow_nan=False) + "\n"


BUILTINS = {
    "burglary": burglary_model,
    "quadrant": quadrant_model,
}


def load_model(source: str):
    """Load ``builtin:<name>`` or a model document from a file path."""
    if source.startswith("builtin:"):
        name = source.split(":", 1)[1]
        if name not in BUILTINS:
            raise SchemaError(f"unknown builtin model {name!r}; choose from {sorted(BUILTINS)}", field="model")
        return BUILTINS[name]()
    with open(source, encoding="utf-8") as fh:
        return parse_model(fh.read())
