"""JSON (de)serialization for instances and states.

Instance file layout::

    {"nodes": [{"id": "C00", "role": "core"}, ...],
     "links": [{"id": "L000", "src": "C00", "dst": "C03", "capacity": 10, "base_power": 10}, ...],
     "pairs": [{"id": "I0-E0", "ingress": "I0", "egress": "E0", "demand": 2.5,
                "paths": [["L016", "L002", "L031"], ...]}, ...],
     "power_model": {"idle_fraction": 0.9}}

Path ids are not stored; the k-th path of a pair is ``"p<k>"``.
"""

from __future__ import annotations

import json
from typing import Any

from greente.errors import GreenTeError, StructuralError
from greente.model import IePair, Link, NetworkInstance, Node, Path, PowerModel, TeState


class InstanceFormatError(GreenTeError):
    """Malformed instance document; the message names the offending location."""


def path_id(k: int) -> str:
    return f"p{k}"


def _get(obj: Any, key: str, where: str, kind=None):
    if not isinstance(obj, dict):
        raise InstanceFormatError(f"{where}: expected an object")
    if key not in obj:
        raise InstanceFormatError(f"{where}: missing key {key!r}")
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise InstanceFormatError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}")
    return value


def _num(obj, key, where) -> float:
    value = _get(obj, key, where)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceFormatError(f"{where}.{key}: expected a number")
    return float(value)


def instance_from_dict(doc: dict) -> NetworkInstance:
    if not isinstance(doc, dict):
        raise InstanceFormatError("<root>: expected an object")
    nodes = [
        Node(_get(n, "id", f"nodes[{k}]", str), _get(n, "role", f"nodes[{k}]", str))
        for k, n in enumerate(_get(doc, "nodes", "<root>", list))
    ]
    links = []
    for k, l in enumerate(_get(doc, "links", "<root>", list)):
        where = f"links[{k}]"
        links.append(
            Link(
                id=_get(l, "id", where, str),
                src=_get(l, "src", where, str),
                dst=_get(l, "dst", where, str),
                capacity=_num(l, "capacity", where),
                base_power=_num(l, "base_power", where),
            )
        )
    pairs = []
    for k, p in enumerate(_get(doc, "pairs", "<root>", list)):
        where = f"pairs[{k}]"
        paths = []
        for j, seq in enumerate(_get(p, "paths", where, list)):
            if not isinstance(seq, list) or not all(isinstance(s, str) for s in seq):
                raise InstanceFormatError(f"{where}.paths[{j}]: expected a list of link ids")
            paths.append(Path(path_id(j), tuple(seq)))
        pairs.append(
            IePair(
                id=_get(p, "id", where, str),
                ingress=_get(p, "ingress", where, str),
                egress=_get(p, "egress", where, str),
                demand=_num(p, "demand", where),
                paths=tuple(paths),
            )
        )
    pm = doc.get("power_model", {})
    power = PowerModel(_num(pm, "idle_fraction", "power_model")) if pm else PowerModel()
    try:
        return NetworkInstance(tuple(nodes), tuple(links), tuple(pairs), power)
    except StructuralError as exc:
        raise InstanceFormatError(str(exc)) from exc


def instance_to_dict(inst: NetworkInstance) -> dict:
    return {
        "nodes": [{"id": n.id, "role": n.role} for n in inst.nodes],
        "links": [
            {"id": l.id, "src": l.src, "dst": l.dst, "capacity": l.capacity, "base_power": l.base_power}
            for l in inst.links
        ],
        "pairs": [
            {
                "id": p.id,
                "ingress": p.ingress,
                "egress": p.egress,
                "demand": p.demand,
                "paths": [list(path.links) for path in p.paths],
            }
            for p in inst.pairs
        ],
        "power_model": {"idle_fraction": inst.power_model.idle_fraction},
    }


def loads_instance(text: str, source: str = "<instance>") -> NetworkInstance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return instance_from_dict(doc)
    except InstanceFormatError as exc:
        raise InstanceFormatError(f"{source}: {exc}") from exc


def dumps_instance(inst: NetworkInstance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2) + "\n"


def state_to_dict(state: TeState) -> dict:
    return {
        "splits": state.splits,
        "mask": state.mask,
        "active_paths": {k: list(v) for k, v in state.active_paths.items()},
    }


def state_from_dict(doc: dict) -> TeState:
    return TeState(
        splits={k: {p: float(x) for p, x in v.items()} for k, v in doc["splits"].items()},
        mask={k: bool(v) for k, v in doc["mask"].items()},
        active_paths={k: tuple(v) for k, v in doc["active_paths"].items()},
    )
