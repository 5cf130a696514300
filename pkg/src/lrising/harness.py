"""Experiment specs (TOML), run scheduling, persistence and resumable manifests.

Layout under the output root::

    <experiment>/manifest.json
    <experiment>/<geometry>/<beta>/<seed>/samples.jsonl
    <experiment>/<geometry>/<beta>/<seed>/summary.json
    <experiment>/<geometry>/<beta>/<seed>/profile.csv

Every file is written to a temporary name and renamed into place.  Outputs
carry no timestamps, so identical specs give byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .kernel import AnisoLRNN, BiAxialLR, BoxGeometry, Dobrushin, IsotropicLR, Minus, Plus
from .mc import GENERATOR, SAMPLERS, ChainState, sample_configurations
from .observables import ProfileAccumulator, interface_heights

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "LRISING_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "out"
SAMPLE_BATCH = 1000


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def default_output_root() -> str:
    return os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)


# --------------------------------------------------------------------------
# spec parsing
# --------------------------------------------------------------------------

_MODEL_PARAMS = {
    "isotropic": (IsotropicLR, ("alpha",)),
    "aniso": (AnisoLRNN, ("alpha1",)),
    "biaxial": (BiAxialLR, ("alpha1", "alpha2")),
}


def _get(table: dict, key: str, path: str, kind, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return default
    v = table[key]
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if kind is not None and (not isinstance(v, kind) or isinstance(v, bool) and kind is not bool):
        raise ConfigError(f"{path}.{key}", f"expected {kind.__name__}, got {type(v).__name__}")
    return v


def _check_keys(table: dict, allowed, path: str):
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}", "unknown field")


def _int_list(table, key, path, required=True, minimum=None):
    v = table.get(key)
    if v is None:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return None
    if isinstance(v, int) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or not v or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
        raise ConfigError(f"{path}.{key}", "expected a non-empty list of integers")
    if minimum is not None and min(v) < minimum:
        raise ConfigError(f"{path}.{key}", f"values must be >= {minimum}")
    return list(v)


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: a sweep over geometries x betas x seeds with a shared MC plan."""

    name: str
    model: dict
    geometries: tuple[dict, ...]
    bc: dict
    betas: tuple[float, ...]
    seeds: tuple[int, ...]
    sampler: str = "metropolis"
    burn_in_sweeps: int = 100
    n_samples: int = 1000
    thinning_sweeps: int = 1
    field_epsilon: float = 1e-9
    output_root: str | None = None
    workers: int = 1
    column: int = 0
    tolerances: dict = field(default_factory=dict)

    # ---- construction --------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        for sec in ("model", "geometry", "bc", "mc", "output"):
            if sec not in d:
                raise ConfigError(sec, "missing section")
            if not isinstance(d[sec], dict):
                raise ConfigError(sec, "expected a table")
        _check_keys(d, ("model", "geometry", "bc", "mc", "output", "tolerances"), "config")

        m = d["model"]
        kind = _get(m, "kind", "model", str, required=True)
        if kind not in _MODEL_PARAMS:
            raise ConfigError("model.kind", f"unknown model {kind!r}; choose from {sorted(_MODEL_PARAMS)}")
        ctor, params = _MODEL_PARAMS[kind]
        _check_keys(m, ("kind",) + params, "model")
        model = {"kind": kind}
        for p in params:
            model[p] = _get(m, p, "model", float, required=True)
        try:
            ctor(*(model[p] for p in params))
        except ValueError as e:
            raise ConfigError(f"model.{params[0]}", str(e)) from None

        g = d["geometry"]
        _check_keys(g, ("L", "M", "interface_height"), "geometry")
        Ls = _int_list(g, "L", "geometry", minimum=0)
        Ms = _int_list(g, "M", "geometry", minimum=0)
        if len(Ms) == 1:
            Ms = Ms * len(Ls)
        if len(Ms) != len(Ls):
            raise ConfigError("geometry.M", "must be a single value or match geometry.L in length")
        ih = _get(g, "interface_height", "geometry", int)
        geometries = []
        for L, M in zip(Ls, Ms):
            geo = {"L": L, "M": M}
            if ih is not None:
                if M < 1:
                    raise ConfigError("geometry.M", "interface-centred boxes need M >= 1")
                geo["interface_height"] = ih
            geometries.append(geo)

        b = d["bc"]
        bkind = _get(b, "kind", "bc", str, required=True)
        if bkind not in ("plus", "minus", "dobrushin"):
            raise ConfigError("bc.kind", f"unknown boundary condition {bkind!r}")
        _check_keys(b, ("kind", "h") if bkind == "dobrushin" else ("kind",), "bc")
        bc = {"kind": bkind}
        if bkind == "dobrushin":
            bc["h"] = _get(b, "h", "bc", int, required=True)

        mc = d["mc"]
        _check_keys(mc, ("betas", "seeds", "sampler", "burn_in_sweeps", "n_samples",
                         "thinning_sweeps", "field_epsilon", "column"), "mc")
        betas = mc.get("betas")
        if isinstance(betas, (int, float)) and not isinstance(betas, bool):
            betas = [betas]
        if not isinstance(betas, list) or not betas:
            raise ConfigError("mc.betas", "expected a non-empty list of numbers")
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) and x >= 0 and np.isfinite(x) for x in betas):
            raise ConfigError("mc.betas", "betas must be finite and >= 0")
        seeds = _int_list(mc, "seeds", "mc", minimum=0)
        if max(seeds) >= 2**63:
            raise ConfigError("mc.seeds", "seeds must be < 2**63")
        sampler = _get(mc, "sampler", "mc", str, "metropolis")
        if sampler not in SAMPLERS:
            raise ConfigError("mc.sampler", f"unknown sampler {sampler!r}; choose from {sorted(SAMPLERS)}")
        if sampler == "cluster" and bkind == "dobrushin":
            raise ConfigError("mc.sampler", "the cluster sampler needs plus or minus boundary conditions")
        burn = _get(mc, "burn_in_sweeps", "mc", int, 100)
        n = _get(mc, "n_samples", "mc", int, 1000)
        thin = _get(mc, "thinning_sweeps", "mc", int, 1)
        eps = _get(mc, "field_epsilon", "mc", float, 1e-9)
        column = _get(mc, "column", "mc", int, 0)
        if burn < 0:
            raise ConfigError("mc.burn_in_sweeps", "must be >= 0")
        if n < 2:
            raise ConfigError("mc.n_samples", "must be >= 2")
        if thin < 1:
            raise ConfigError("mc.thinning_sweeps", "must be >= 1")
        if not eps > 0:
            raise ConfigError("mc.field_epsilon", "must be positive")
        if any(abs(column) > geo["L"] for geo in geometries):
            raise ConfigError("mc.column", "column lies outside some box")

        o = d["output"]
        _check_keys(o, ("experiment", "root", "workers"), "output")
        name = _get(o, "experiment", "output", str, required=True)
        if not name or "/" in name or name.startswith("."):
            raise ConfigError("output.experiment", "must be a plain directory name")
        root = _get(o, "root", "output", str)
        workers = _get(o, "workers", "output", int, 1)
        if workers < 1:
            raise ConfigError("output.workers", "must be >= 1")

        tol = d.get("tolerances", {})
        if not isinstance(tol, dict) or not all(isinstance(v, (int, float)) for v in tol.values()):
            raise ConfigError("tolerances", "expected a table of numbers")

        return cls(name, model, tuple(geometries), bc, tuple(float(x) for x in betas), tuple(seeds),
                   sampler, burn, n, thin, eps, root, workers, column, dict(tol))

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentSpec":
        try:
            d = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError("config", f"TOML syntax error: {e}") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        return cls.from_toml(Path(path).read_text())

    def to_dict(self) -> dict:
        geometry = {"L": [g["L"] for g in self.geometries], "M": [g["M"] for g in self.geometries]}
        if "interface_height" in self.geometries[0]:
            geometry["interface_height"] = self.geometries[0]["interface_height"]
        output = {"experiment": self.name, "workers": self.workers}
        if self.output_root is not None:
            output["root"] = self.output_root
        d = {
            "model": dict(self.model),
            "geometry": geometry,
            "bc": dict(self.bc),
            "mc": {
                "betas": list(self.betas), "seeds": list(self.seeds), "sampler": self.sampler,
                "burn_in_sweeps": self.burn_in_sweeps, "n_samples": self.n_samples,
                "thinning_sweeps": self.thinning_sweeps, "field_epsilon": self.field_epsilon,
                "column": self.column,
            },
            "output": output,
        }
        if self.tolerances:
            d["tolerances"] = dict(self.tolerances)
        return d

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    # ---- derived objects -------------------------------------------------
    def coupling_model(self):
        ctor, params = _MODEL_PARAMS[self.model["kind"]]
        return ctor(*(self.model[p] for p in params))

    def boundary(self):
        k = self.bc["kind"]
        return Plus() if k == "plus" else Minus() if k == "minus" else Dobrushin(self.bc["h"])

    def portable_dict(self) -> dict:
        """Everything that affects results; drops the output location and worker count."""
        d = self.to_dict()
        d["output"] = {"experiment": self.name}
        return d

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.portable_dict(), sort_keys=True).encode()).hexdigest()

    def runs(self) -> list["RunKey"]:
        return [RunKey(g, b, s) for g in self.geometries for b in self.betas for s in self.seeds]

    def root(self) -> Path:
        return Path(self.output_root or default_output_root())


def geometry_of(geo: dict) -> BoxGeometry:
    if "interface_height" in geo:
        return BoxGeometry.about_interface(geo["L"], geo["M"], geo["interface_height"])
    return BoxGeometry(geo["L"], geo["M"])


@dataclass(frozen=True)
class RunKey:
    geometry: dict
    beta: float
    seed: int

    def relpath(self) -> str:
        return f"{geometry_of(self.geometry).label()}/beta{self.beta!r}/seed{self.seed}"


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write(path, data: bytes | str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def split_half(x) -> dict:
    """First-half vs second-half means; a large z flags insufficient burn-in."""
    x = np.asarray(x, dtype=float)
    a, b = x[: x.size // 2], x[x.size // 2 :]
    se = np.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    z = float((a.mean() - b.mean()) / se) if se > 0 else 0.0
    return {"first_mean": float(a.mean()), "second_mean": float(b.mean()), "z": z}


# --------------------------------------------------------------------------
# a single run
# --------------------------------------------------------------------------

def _execute(args) -> tuple[str, dict]:
    spec, key, exp_dir = args
    model = spec.coupling_model()
    bc = spec.boundary()
    box = geometry_of(key.geometry)
    st = ChainState.start(model, box, bc, key.beta, key.seed, spec.field_epsilon)
    if spec.burn_in_sweeps:
        sample_configurations(st, 1, spec.burn_in_sweeps, spec.sampler)
    reference = bc.h if isinstance(bc, Dobrushin) else 0
    col = spec.column + box.L
    acc = ProfileAccumulator(box)
    lines, hs, ms = [], [], []
    done = 0
    while done < spec.n_samples:
        k = min(SAMPLE_BATCH, spec.n_samples - done)
        e0 = st.energy
        conf = sample_configurations(st, k, spec.thinning_sweeps, spec.sampler)
        mags = conf.mean(axis=1, dtype=float)
        heights = interface_heights(conf, box, reference)[:, col]
        hs.append(heights)
        ms.append(mags)
        for r in range(k):
            acc(conf[r])
            lines.append(json.dumps({
                "schema_version": SCHEMA_VERSION,
                "sample": done + r,
                "sweep": spec.burn_in_sweeps + (done + r + 1) * spec.thinning_sweeps,
                "magnetization": float(mags[r]),
                "height": float(heights[r]),
            }, sort_keys=True))
        done += k
    prof = acc.profile()
    h = np.concatenate(hs)
    m = np.concatenate(ms)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "model": spec.model, "bc": spec.bc, "geometry": key.geometry,
        "beta": key.beta, "seed": key.seed, "sampler": spec.sampler,
        "n_samples": spec.n_samples, "burn_in_sweeps": spec.burn_in_sweeps,
        "thinning_sweeps": spec.thinning_sweeps, "column": spec.column,
        "interface_reference": reference,
        "magnetization_mean": float(m.mean()),
        "magnetization_stderr": float(m.std(ddof=1) / np.sqrt(m.size)),
        "height_mean": float(h.mean()),
        "height_variance": float(h.var(ddof=1)),
        "final_energy": float(st.energy),
        "energy_drift": float(abs(st.energy - st.recomputed_energy())),
        "split_half": split_half(m),
    }
    run_dir = Path(exp_dir) / key.relpath()
    files = {
        "samples.jsonl": "\n".join(lines) + "\n",
        "summary.json": _dumps(summary),
        "profile.csv": f"# schema_version={SCHEMA_VERSION}\n" + prof.to_csv(),
    }
    hashes = {}
    for name, text in files.items():
        atomic_write(run_dir / name, text)
        hashes[f"{key.relpath()}/{name}"] = hashlib.sha256(text.encode()).hexdigest()
    return key.relpath(), hashes


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    directory: Path
    manifest: dict
    executed: list[str]
    skipped: list[str]


def _load_manifest(path: Path, spec: ExperimentSpec) -> dict:
    fresh = {
        "schema_version": SCHEMA_VERSION, "experiment": spec.name, "config_hash": spec.config_hash(),
        "generator": GENERATOR, "code_version": code_version(), "config": spec.portable_dict(), "runs": {},
    }
    if not path.exists():
        return fresh
    old = json.loads(path.read_text())
    if old.get("config_hash") != fresh["config_hash"]:
        raise ConfigError("output.experiment",
                          f"{path} belongs to a different configuration; choose another experiment name")
    fresh["runs"] = old.get("runs", {})
    return fresh


def verify_run(exp_dir: Path, files: dict) -> bool:
    for rel, digest in files.items():
        p = exp_dir / rel
        if not p.is_file() or sha256_file(p) != digest:
            return False
    return bool(files)


def run_experiment(spec: ExperimentSpec, max_runs: int | None = None,
                   workers: int | None = None) -> ExperimentResult:
    """Execute every (geometry, beta, seed) run not already recorded in the manifest.

    A run counts as done only when all its files exist with the recorded
    hashes.  ``max_runs`` stops after that many new runs (the rest stay
    pending for the next call).
    """
    exp_dir = spec.root() / spec.name
    try:
        exp_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {exp_dir}: {e}") from e
    if not os.access(exp_dir, os.W_OK):
        raise OSError(f"output directory {exp_dir} is not writable")
    mpath = exp_dir / "manifest.json"
    manifest = _load_manifest(mpath, spec)

    pending, skipped = [], []
    for key in spec.runs():
        rel = key.relpath()
        if rel in manifest["runs"] and verify_run(exp_dir, manifest["runs"][rel]["files"]):
            skipped.append(rel)
        else:
            manifest["runs"].pop(rel, None)
            pending.append(key)
    if max_runs is not None:
        pending = pending[:max_runs]

    executed = []

    def record(rel, hashes):
        manifest["runs"][rel] = {"files": hashes}
        manifest["runs"] = dict(sorted(manifest["runs"].items()))
        atomic_write(mpath, _dumps(manifest))
        executed.append(rel)

    n_workers = workers or spec.workers
    jobs = [(spec, key, str(exp_dir)) for key in pending]
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for rel, hashes in pool.map(_execute, jobs):
                record(rel, hashes)
    else:
        for job in jobs:
            record(*_execute(job))
    atomic_write(mpath, _dumps(manifest))
    return ExperimentResult(exp_dir, manifest, executed, skipped)


def load_summaries(exp_dir) -> list[dict]:
    exp_dir = Path(exp_dir)
    manifest = json.loads((exp_dir / "manifest.json").read_text())
    return [json.loads((exp_dir / rel / "summary.json").read_text()) for rel in manifest["runs"]]


def size_table(exp_dir, beta: float | None = None) -> dict[int, np.ndarray]:
    """Mid-column heights pooled over seeds, keyed by box half-width L.

    The result feeds :func:`lrising.observables.interface_fluctuations`.
    """
    exp_dir = Path(exp_dir)
    manifest = json.loads((exp_dir / "manifest.json").read_text())
    out: dict[int, list] = {}
    for rel in manifest["runs"]:
        s = json.loads((exp_dir / rel / "summary.json").read_text())
        if beta is not None and s["beta"] != beta:
            continue
        with open(exp_dir / rel / "samples.jsonl") as f:
            h = [json.loads(line)["height"] for line in f if line.strip()]
        out.setdefault(s["geometry"]["L"], []).extend(h)
    return {L: np.array(v) for L, v in sorted(out.items())}
