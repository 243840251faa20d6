"""Golden vectors: stored input/weight/output triples and their verification.

``generate`` writes one container file per case plus ``manifest.json``.
Block, scan and attention outputs come from the per-element loops in
:mod:`vmsuite.reference`; ``verify`` recomputes every output with the
vectorised library code from the *stored* inputs and weights.

The manifest keeps a sha256 digest of each tensor's raw bytes so that a
corrupted file is attributed to the exact tensor.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import reference
from .bench import attention_naive
from .blocks import block_forward, block_from_arrays, init_block, named_arrays, with_arrays
from .errors import GoldenMismatch, ValidationError
from .layout import KINDS, TokenLayout, VideoTokens, arrange_multimodal, extract_video, \
    flatten_spacetime, pool_cls
from .numeric import load, make_rng, rel_err, save
from .ssm import SsmParams, selective_scan

FORMAT_VERSION = 1
TOLERANCE = 1e-10
SEED = 20240318


def _digest(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def _perturbed_block(kind: str, rng):
    # Perturb every tensor so no part of the block sits at a special init value.
    p = init_block(kind, 4, 2, 4, seed=int(rng.integers(1 << 31)))
    return with_arrays(p, {k: v + 0.2 * rng.normal(size=v.shape) for k, v in named_arrays(p).items()})


def build_cases() -> list[tuple[str, str, dict, dict[str, np.ndarray]]]:
    """(name, op, meta, tensors) for every golden case."""
    rng = make_rng(SEED)
    cases = []

    ssm = SsmParams.init(4, 4, 1, rng)
    ssm = SsmParams(**{k: v + 0.2 * rng.normal(size=v.shape) for k, v in ssm.arrays().items()})
    x = rng.normal(size=(8, 4))
    tensors = {"input.x": x, **{f"param.{k}": v for k, v in ssm.arrays().items()}}
    tensors["output.y"] = np.array(reference.ssm_scan(ssm.arrays(), "", x.tolist()))
    cases.append(("selective_scan", "selective_scan", {"M": 8, "D_inner": 4, "N": 4}, tensors))

    for kind in ("mamba", "vim", "dbm"):
        p = _perturbed_block(kind, rng)
        x = rng.normal(size=(8, 4))
        arrays = named_arrays(p)
        tensors = {"input.x": x, **{f"param.{k}": v for k, v in arrays.items()}}
        tensors["output.y"] = reference.block(kind, arrays, x)
        cases.append((f"{kind}_block", kind, {"M": 8, "D": 4, "E": 2, "N": 4}, tensors))

    x = rng.normal(size=(5, 4))
    ws = {f"param.{n}": rng.normal(0, 0.5, (4, 4)) for n in ("wq", "wk", "wv", "wo")}
    out = reference.attention(x, *ws.values())
    cases.append(("attention_naive", "attention", {"M": 5, "D": 4}, {"input.x": x, **ws, "output.y": out}))

    frames = rng.normal(size=(2, 4, 3))
    cls = rng.normal(size=3)
    tpos = rng.normal(size=(2, 3))
    rows = []
    for t in range(2):
        rows.extend([frames[t, 0], frames[t, 1], cls, frames[t, 2], frames[t, 3]])
        rows[-5:] = [r + tpos[t] for r in rows[-5:]]
    seq = np.array(rows)
    pooled = ((cls + tpos[0]) + (cls + tpos[1])) / 2
    cases.append(("flatten_spacetime", "flatten_spacetime", {"T": 2, "P": 4, "cls_offset": 2},
                  {"input.frames": frames, "input.cls": cls, "input.temporal_pos": tpos,
                   "output.seq": seq, "output.pooled": pooled}))

    v = rng.normal(size=(4, 3))
    q = rng.normal(size=(2, 3))
    emb = {"param.pos_v": rng.normal(size=(4, 3)), "param.pos_q": rng.normal(size=(2, 3)),
           "param.type_v": rng.normal(size=3), "param.type_q": rng.normal(size=3)}
    vt = v + emb["param.pos_v"] + emb["param.type_v"]
    qt = q + emb["param.pos_q"] + emb["param.type_q"]
    mid = 2
    expected = {"L": [qt, vt], "R": [vt, qt], "L+R": [qt, vt, qt], "M": [vt[:mid], qt, vt[mid:]]}
    for kind in KINDS:
        tensors = {"input.v": v, "input.q": q, **emb,
                   "output.seq": np.concatenate(expected[kind]), "output.video": vt}
        cases.append((f"arrange_{kind.replace('+', 'p')}", "arrange", {"kind": kind, "L_v": 4, "L_q": 2},
                      tensors))
    return cases


def generate(directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"format": FORMAT_VERSION, "dtype": "f64", "tolerance": TOLERANCE, "cases": []}
    for name, op, meta, tensors in build_cases():
        fname = f"{name}.bin"
        save(directory / fname, tensors)
        manifest["cases"].append({"name": name, "op": op, "file": fname, "meta": meta,
                                  "digests": {k: _digest(v) for k, v in tensors.items()}})
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _strip(tensors: dict, prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}


def recompute(op: str, meta: dict, tensors: dict[str, np.ndarray], dtype=np.float64) -> dict:
    """Library outputs for a case, keyed like the stored ``output.*`` tensors."""
    inp = {k: v.astype(dtype) for k, v in _strip(tensors, "input.").items()}
    par = {k: v.astype(dtype) for k, v in _strip(tensors, "param.").items()}
    if op == "selective_scan":
        return {"output.y": selective_scan(SsmParams(**par), inp["x"])}
    if op in ("mamba", "vim", "dbm"):
        return {"output.y": block_forward(block_from_arrays(op, par), inp["x"])}
    if op == "attention":
        return {"output.y": attention_naive(inp["x"], par["wq"], par["wk"], par["wv"], par["wo"])}
    if op == "flatten_spacetime":
        seq, layout = flatten_spacetime(VideoTokens(inp["frames"], inp["cls"], inp["temporal_pos"]))
        if layout.to_dict() != meta:
            raise GoldenMismatch(f"layout descriptor changed: {layout.to_dict()} vs {meta}")
        return {"output.seq": seq, "output.pooled": pool_cls(seq, TokenLayout(meta["T"], meta["P"]))}
    if op == "arrange":
        seq, arr = arrange_multimodal(inp["v"], inp["q"], meta["kind"], par["pos_v"], par["pos_q"],
                                      par["type_v"], par["type_q"])
        return {"output.seq": seq, "output.video": extract_video(seq, arr)}
    raise ValidationError(f"unknown golden op {op!r}")


def _load_manifest(directory: Path) -> dict:
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read manifest in {directory}: {exc}") from None
    if manifest.get("format") != FORMAT_VERSION:
        raise ValidationError(f"unsupported golden format {manifest.get('format')}")
    return manifest


def verify(directory: str | Path, tol: float = TOLERANCE) -> dict[str, float]:
    """Check digests and recompute every case; returns ``{case/tensor: rel err}``.

    Raises :class:`GoldenMismatch` naming every corrupted or out-of-tolerance tensor.
    """
    directory = Path(directory)
    manifest = _load_manifest(directory)
    report: dict[str, float] = {}
    failures: list[str] = []
    for case in manifest["cases"]:
        name = case["name"]
        try:
            tensors = load(directory / case["file"])
        except (OSError, ValidationError) as exc:
            failures.append(f"{name}: unreadable file {case['file']} ({exc})")
            continue
        corrupted = [k for k, d in case["digests"].items() if k not in tensors or _digest(tensors[k]) != d]
        if corrupted:
            failures.extend(f"{name}/{k}: stored bytes do not match manifest digest" for k in corrupted)
            continue
        for k, got in recompute(case["op"], case["meta"], tensors).items():
            err = rel_err(got, tensors[k])
            report[f"{name}/{k}"] = err
            if not err <= tol:
                failures.append(f"{name}/{k}: rel err {err:.3e} > {tol:.0e}")
    if failures:
        raise GoldenMismatch("golden verification failed:\n  " + "\n  ".join(failures), report)
    return report


def dtype_drift(directory: str | Path) -> dict[str, float]:
    """Relative error of a float32 recompute against the float64 goldens (informational)."""
    directory = Path(directory)
    manifest = _load_manifest(directory)
    drift = {}
    for case in manifest["cases"]:
        tensors = load(directory / case["file"])
        for k, got in recompute(case["op"], case["meta"], tensors, dtype=np.float32).items():
            drift[f"{case['name']}/{k}"] = rel_err(got, tensors[k])
    return drift
