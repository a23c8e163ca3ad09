"""Policy checkpoints and the run-directory manifest that chains them."""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Optional

from . import __version__
from . import checkpoint
from .checkpoint import CheckpointError
from .policy import PolicyNet, PolicyStack
from .autodiff import ParamStore
from .stg import StgTable
from .trainer import stg_arrays, stg_from_arrays

MANIFEST = "manifest.json"


def policy_filename(stage: int) -> str:
    return f"policy_k{stage}.ckpt"


def save_policy(path, net: PolicyNet, stg: Optional[StgTable] = None, extra: Optional[dict] = None) -> None:
    arrays = {f"param/{name}": t.data for name, t in net.params.items()}
    meta = {"kind": "policy", "version": __version__, "stage": net.stage, "flat": net.flat,
            "hidden": list(net.hidden), "stg": None}
    if stg is not None:
        arrays.update(stg_arrays(stg))
        meta["stg"] = {"alpha": stg.alpha, "collapse_e1": stg.collapse_e1}
    meta.update(extra or {})
    checkpoint.save(path, arrays, meta)


def load_policy(path) -> tuple[PolicyNet, Optional[StgTable], dict]:
    arrays, meta = checkpoint.load(path)
    if meta.get("kind") != "policy":
        raise CheckpointError(f"{path} is not a policy checkpoint")
    params = ParamStore({k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")})
    net = PolicyNet(meta["stage"], meta["flat"], tuple(meta["hidden"]), params=params)
    stg = None
    if meta["stg"] is not None:
        stg = stg_from_arrays(arrays, meta["stage"], meta["stg"]["alpha"], meta["stg"]["collapse_e1"])
    return net, stg, meta


def read_manifest(run_dir) -> dict:
    path = Path(run_dir) / MANIFEST
    if not path.exists():
        return {"version": __version__, "policies": {}}
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"unreadable manifest {path}: {exc}") from exc


def write_manifest(run_dir, manifest: dict) -> None:
    path = Path(run_dir) / MANIFEST
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def register_policy(run_dir, stage: int, net: PolicyNet, stg: Optional[StgTable]) -> Path:
    path = Path(run_dir) / policy_filename(stage)
    save_policy(path, net, stg)
    manifest = read_manifest(run_dir)
    manifest["version"] = __version__
    manifest["policies"][str(stage)] = path.name
    write_manifest(run_dir, manifest)
    return path


def load_stack(run_dir, top: Optional[int] = None) -> PolicyStack:
    """Stack ``[pi_0 .. pi_top]`` from a run directory (``top`` defaults to the highest saved stage)."""
    policies = read_manifest(run_dir)["policies"]
    if not policies:
        raise CheckpointError(f"no policy checkpoints registered in {run_dir}")
    top = max(int(k) for k in policies) if top is None else top
    nets, stgs = [], []
    for k in range(top + 1):
        if str(k) not in policies:
            raise CheckpointError(f"missing checkpoint for stage {k} in {run_dir}")
        net, stg, _ = load_policy(Path(run_dir) / policies[str(k)])
        nets.append(net)
        stgs.append(stg)
    return PolicyStack(nets, stgs)
