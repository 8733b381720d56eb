import json
import os
from typing import Any, Dict

import numpy as np

from causal_engine.graph import Dag
from causal_engine.scm import Cpt, DiscreteScm

SCM_FORMAT_NOTE = (
    "cpts[node].table is row-major: one axis per entry of cpts[node].parents, in that order, "
    "then a last axis over domains[node]; every innermost row sums to 1."
)


def _load_json(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise ValueError(f"File '{path}' does not exist.")
    with open(path, 'r', encoding='utf-8') as rf:
        try:
            return json.load(rf)
        except json.JSONDecodeError as e:
            raise ValueError(f"File '{path}' is not valid JSON: {e}") from e


def save_json(payload: Any, path: str) -> None:
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as wf:
        json.dump(payload, wf, ensure_ascii=False, indent=4)


def load_graph(path: str) -> Dag:
    return Dag.from_dict(_load_json(path))


def scm_from_dict(payload: Dict[str, Any]) -> DiscreteScm:
    dag = Dag.from_dict(payload)
    try:
        domains = payload["domains"]
        raw_cpts = payload["cpts"]
    except KeyError as e:
        raise ValueError(f"SCM description is missing the key {e}.") from e
    cpts = {
        node: Cpt(tuple(entry.get("parents", [])), np.asarray(entry["table"], dtype=np.float64))
        for node, entry in raw_cpts.items()
    }
    return DiscreteScm(dag, domains, cpts)


def scm_to_dict(scm: DiscreteScm) -> Dict[str, Any]:
    payload: Dict[str, Any] = {"__format__": SCM_FORMAT_NOTE}
    payload.update(scm.dag.to_dict())
    payload["domains"] = {node: list(scm.domain(node)) for node in scm.dag.nodes}
    payload["cpts"] = {
        node: {"parents": list(scm.cpt(node).parents), "table": scm.cpt(node).table.tolist()}
        for node in scm.dag.nodes
    }
    return payload


def load_scm(path: str) -> DiscreteScm:
    return scm_from_dict(_load_json(path))


def save_scm(scm: DiscreteScm, path: str) -> None:
    save_json(scm_to_dict(scm), path)
