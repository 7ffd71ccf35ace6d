"""File formats: dataset CSV plus column manifest, truth, model and chain JSON.

Category codes and component labels are 1-based in every file and 0-based
in memory. Matrices are written as nested row-major lists.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cavi import ElboTrace
from .errors import DatasetValidationError
from .gibbs import ChainSummary
from .model import (
    GroundTruth,
    MixedDataset,
    PriorHyperparameters,
    StandardizationTransform,
    VariationalParameters,
    dataset_violations,
)


# ---------------------------------------------------------------- datasets


def read_column_manifest(path) -> list[dict]:
    with open(path) as fh:
        doc = json.load(fh)
    cols = doc.get("columns")
    if not isinstance(cols, list):
        raise DatasetValidationError([f"manifest {path} has no 'columns' list"])
    return cols


def read_dataset_csv(path, manifest_path=None) -> MixedDataset:
    """Parse a CSV whose header names columns ``f:<name>`` or ``c:<name>``.

    Cardinalities come from the manifest when given, otherwise from the
    largest observed code. Raises DatasetValidationError listing every
    problem found.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetValidationError([f"{path} is empty"])
    header = [h.strip() for h in rows[0]]
    problems = []
    cont_idx, cat_idx = [], []
    for i, h in enumerate(header):
        if h.startswith("f:"):
            cont_idx.append(i)
        elif h.startswith("c:"):
            cat_idx.append(i)
        else:
            problems.append(f"column {i} header {h!r} must start with 'f:' or 'c:'")
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    n = len(body)
    x = np.full((n, len(cont_idx)), np.nan)
    c = np.zeros((n, len(cat_idx)), dtype=int)
    for r, row in enumerate(body):
        if len(row) != len(header):
            problems.append(f"row {r} has {len(row)} fields, expected {len(header)}")
            continue
        for j, i in enumerate(cont_idx):
            try:
                x[r, j] = float(row[i])
            except ValueError:
                problems.append(f"non-numeric continuous value at ({r},{j})")
        for j, i in enumerate(cat_idx):
            try:
                c[r, j] = int(row[i]) - 1
            except ValueError:
                problems.append(f"non-integer category code at ({r},{j})")
                c[r, j] = -1
    cont_names = tuple(header[i][2:] for i in cont_idx)
    cat_names = tuple(header[i][2:] for i in cat_idx)
    if manifest_path is not None:
        by_name = {col["name"]: col for col in read_column_manifest(manifest_path)}
        cards = []
        for name in cat_names:
            col = by_name.get(name)
            if col is None or col.get("kind") != "cat" or "card" not in col:
                problems.append(f"manifest lacks a categorical entry with 'card' for {name!r}")
                cards.append(int(c[:, len(cards)].max() + 1) if n else 2)
            else:
                cards.append(int(col["card"]))
    else:
        cards = [int(c[:, j].max() + 1) if n else 0 for j in range(len(cat_idx))]
    if problems:
        raise DatasetValidationError(problems)
    data = MixedDataset(x=x, c=c, cards=tuple(cards), cont_names=cont_names, cat_names=cat_names)
    problems = dataset_violations(data)
    if problems:
        raise DatasetValidationError(problems)
    return data


def write_dataset_csv(path, data: MixedDataset) -> None:
    header = [f"f:{n}" for n in data.cont_names] + [f"c:{n}" for n in data.cat_names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n):
            w.writerow([repr(float(v)) for v in data.x[i]] + [str(int(v) + 1) for v in data.c[i]])


def column_manifest(data: MixedDataset) -> dict:
    cols = [{"name": n, "kind": "cont"} for n in data.cont_names]
    cols += [{"name": n, "kind": "cat", "card": int(d)} for n, d in zip(data.cat_names, data.cards)]
    return {"columns": cols}


# ---------------------------------------------------------------- JSON helpers


def _tolist(a):
    return np.asarray(a).tolist()


def dump_json(path, doc: dict) -> None:
    text = json.dumps(doc, indent=1, sort_keys=False)
    Path(path).write_text(text + "\n")


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    wall_clock: str = ""
    version: str = __version__

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.config, sort_keys=True, default=str)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "config": self.config,
            "seed": self.seed,
            "inputs": [os.fspath(p) for p in self.inputs],
            "outputs": [os.fspath(p) for p in self.outputs],
            "wall_clock": self.wall_clock or time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "version": self.version,
        }


# ---------------------------------------------------------------- truth


def truth_to_dict(truth: GroundTruth) -> dict:
    doc = {
        "K": truth.K,
        "q": truth.q,
        "cards": list(truth.cards),
        "pi": _tolist(truth.pi),
        "mu": _tolist(truth.mu),
        "sigma": _tolist(truth.sigma),
        "psi": [_tolist(p) for p in truth.psi],
    }
    if truth.z is not None:
        doc["z"] = (np.asarray(truth.z) + 1).tolist()
    return doc


def truth_from_dict(doc: dict) -> GroundTruth:
    z = doc.get("z")
    return GroundTruth(
        pi=np.asarray(doc["pi"], dtype=float),
        mu=np.asarray(doc["mu"], dtype=float),
        sigma=np.asarray(doc["sigma"], dtype=float),
        psi=[np.asarray(p, dtype=float) for p in doc["psi"]],
        z=None if z is None else np.asarray(z, dtype=int) - 1,
    )


# ---------------------------------------------------------------- priors / transform


def priors_to_dict(p: PriorHyperparameters) -> dict:
    return {"m": _tolist(p.m), "beta": float(p.beta), "nu": float(p.nu), "phi": _tolist(p.phi),
            "alpha": float(p.alpha), "eta": _tolist(p.eta)}


def priors_from_dict(d: dict) -> PriorHyperparameters:
    return PriorHyperparameters(m=np.asarray(d["m"]), beta=d["beta"], nu=d["nu"],
                                phi=np.asarray(d["phi"]), alpha=d["alpha"], eta=np.asarray(d["eta"]))


def transform_to_dict(t: StandardizationTransform | None):
    return None if t is None else {"means": _tolist(t.means), "sds": _tolist(t.sds)}


def transform_from_dict(d) -> StandardizationTransform | None:
    return None if d is None else StandardizationTransform(np.asarray(d["means"]), np.asarray(d["sds"]))


# ---------------------------------------------------------------- fitted models


def vp_to_dict(vp: VariationalParameters) -> dict:
    return {
        "K": vp.K,
        "q": vp.q,
        "alpha_hat": _tolist(vp.alpha_hat),
        "m_hat": _tolist(vp.m_hat),
        "beta_hat": _tolist(vp.beta_hat),
        "nu_hat": _tolist(vp.nu_hat),
        "phi_hat": _tolist(vp.phi_hat),
        "eta_hat": [_tolist(e) for e in vp.eta_hat],
    }


def vp_from_dict(d: dict) -> VariationalParameters:
    return VariationalParameters(
        alpha_hat=np.asarray(d["alpha_hat"], dtype=float),
        m_hat=np.asarray(d["m_hat"], dtype=float).reshape(d["K"], d["q"]),
        beta_hat=np.asarray(d["beta_hat"], dtype=float),
        nu_hat=np.asarray(d["nu_hat"], dtype=float),
        phi_hat=np.asarray(d["phi_hat"], dtype=float).reshape(d["K"], d["q"], d["q"]),
        eta_hat=[np.asarray(e, dtype=float).reshape(d["K"], -1) for e in d["eta_hat"]],
    )


def model_to_dict(vp: VariationalParameters, trace: ElboTrace, priors: PriorHyperparameters,
                  transform: StandardizationTransform | None, labels=None,
                  cont_names=(), cat_names=()) -> dict:
    doc = {"method": "cavi"}
    doc.update(vp_to_dict(vp))
    doc["elbo_trace"] = {"values": list(map(float, trace.values)), "converged_at": trace.converged_at}
    doc["priors"] = priors_to_dict(priors)
    doc["transform"] = transform_to_dict(transform)
    doc["cont_names"] = list(cont_names)
    doc["cat_names"] = list(cat_names)
    if labels is not None:
        doc["labels"] = (np.asarray(labels) + 1).tolist()
    return doc


def chain_to_dict(chain: ChainSummary, priors: PriorHyperparameters,
                  transform: StandardizationTransform | None, include_samples: bool = False,
                  cont_names=(), cat_names=()) -> dict:
    doc = {
        "method": "gibbs",
        "K": int(chain.pi.shape[0]),
        "q": int(chain.mu.shape[1]),
        "pi": _tolist(chain.pi),
        "mu": _tolist(chain.mu),
        "sigma": _tolist(chain.sigma),
        "psi": [_tolist(p) for p in chain.psi],
        "labels": (np.asarray(chain.z_last) + 1).tolist(),
        "n_samples": chain.n_samples,
        "burn_in": chain.burn_in,
        "priors": priors_to_dict(priors),
        "transform": transform_to_dict(transform),
        "cont_names": list(cont_names),
        "cat_names": list(cat_names),
    }
    if include_samples and chain.samples:
        doc["samples"] = {
            "pi": _tolist(chain.samples["pi"]),
            "mu": _tolist(chain.samples["mu"]),
            "sigma": _tolist(chain.samples["sigma"]),
            "psi": [_tolist(p) for p in chain.samples["psi"]],
        }
    return doc


def chain_from_dict(d: dict) -> ChainSummary:
    samples = {}
    if "samples" in d:
        s = d["samples"]
        samples = {"pi": np.asarray(s["pi"]), "mu": np.asarray(s["mu"]),
                   "sigma": np.asarray(s["sigma"]), "psi": [np.asarray(p) for p in s["psi"]]}
    return ChainSummary(
        pi=np.asarray(d["pi"], dtype=float), mu=np.asarray(d["mu"], dtype=float),
        sigma=np.asarray(d["sigma"], dtype=float), psi=[np.asarray(p, dtype=float) for p in d["psi"]],
        z_last=np.asarray(d["labels"], dtype=int) - 1, n_samples=d["n_samples"],
        burn_in=d["burn_in"], samples=samples,
    )
