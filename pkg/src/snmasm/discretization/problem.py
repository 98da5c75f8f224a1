"""Problem definition: cross sections, boundary conditions, stabilization.

A :class:`ProblemSpec` carries everything needed to assemble the transport
operators.  It round-trips through a versioned JSON document::

    {"schema": 1,
     "mesh": {"nx": 4, "ny": 4, "nz": 4, "hx": 1.0, "hy": 1.0, "hz": 1.0},
     "quadrature": {"kind": "level-symmetric", "order": 2},
     "materials": [{"id": 0, "sigma_t": [...], "sigma_s": [[...]],
                    "nu_sigma_f": [...], "chi": [...]}],
     "material_map": {"generator": "uniform", "params": {"id": 0}},
     "bcs": {"x-": "reflecting", ...},
     "stabilization": {"c": 1.0, "varsigma": 0.5}}

``sigma_s[g][gp]`` is the transfer cross section from group ``gp`` into
group ``g``, so a lower-triangular matrix has no upscattering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh import SIDES, SIDE_NORMALS, StructuredMesh
from .quadrature import AngularQuadrature, build_quadrature

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed problem or run configuration; ``key`` names the culprit."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True, eq=False)
class Material:
    id: int
    sigma_t: np.ndarray
    sigma_s: np.ndarray
    nu_sigma_f: np.ndarray
    chi: np.ndarray

    def __post_init__(self):
        G = len(self.sigma_t)
        if self.sigma_s.shape != (G, G):
            raise ValueError(f"material {self.id}: sigma_s must be {G}x{G}")
        if len(self.nu_sigma_f) != G or len(self.chi) != G:
            raise ValueError(f"material {self.id}: group counts disagree")
        for name in ("sigma_t", "sigma_s", "nu_sigma_f", "chi"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"material {self.id}: negative {name}")
        if np.any(self.sigma_t <= 0):
            raise ValueError(f"material {self.id}: sigma_t must be > 0")
        if np.any(self.nu_sigma_f > 0) and not np.isclose(self.chi.sum(), 1.0):
            raise ValueError(f"material {self.id}: fission spectrum must sum to 1")

    @classmethod
    def create(cls, id, sigma_t, sigma_s, nu_sigma_f=None, chi=None):
        sigma_t = np.atleast_1d(np.asarray(sigma_t, dtype=float))
        G = len(sigma_t)
        sigma_s = np.asarray(sigma_s, dtype=float).reshape(G, G)
        nu_sigma_f = (np.zeros(G) if nu_sigma_f is None
                      else np.atleast_1d(np.asarray(nu_sigma_f, dtype=float)))
        if chi is None:
            chi = np.zeros(G)
            chi[0] = 1.0
        chi = np.atleast_1d(np.asarray(chi, dtype=float))
        return cls(int(id), sigma_t, sigma_s, nu_sigma_f, chi)

    @property
    def n_groups(self):
        return len(self.sigma_t)

    @property
    def fissile(self):
        return bool(np.any(self.nu_sigma_f > 0))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    mesh: StructuredMesh
    quadrature: AngularQuadrature
    materials: dict
    material_map: np.ndarray
    bcs: dict
    c: float = 1.0
    varsigma: float = 0.5

    def __post_init__(self):
        if self.material_map.shape != (self.mesh.n_elements,):
            raise ValueError("material_map needs one entry per element")
        missing = set(np.unique(self.material_map).tolist()) - set(self.materials)
        if missing:
            raise ValueError(f"elements reference undefined materials {sorted(missing)}")
        groups = {m.n_groups for m in self.materials.values()}
        if len(groups) != 1:
            raise ValueError("all materials must have the same group count")
        if self.c <= 0 or self.varsigma <= 0:
            raise ValueError("stabilization constants must be > 0")
        for side in SIDES:
            kind = self.bcs.get(side)
            if kind not in ("vacuum", "reflecting"):
                raise ValueError(f"boundary {side}: expected vacuum|reflecting, got {kind!r}")
            if kind == "reflecting":
                self.quadrature.mirror_map(SIDE_NORMALS[side])

    @property
    def n_groups(self):
        return next(iter(self.materials.values())).n_groups

    @property
    def material_ids(self):
        return sorted(self.materials)

    def element_xs(self, name):
        """Per-element cross-section array ``(n_elements, ...)``."""
        table = {m: getattr(mat, name) for m, mat in self.materials.items()}
        return np.stack([table[m] for m in self.material_map.tolist()])

    @property
    def fissile(self):
        return any(self.materials[m].fissile for m in np.unique(self.material_map).tolist())


def stabilization_tau(sigma_t, h, c=1.0, varsigma=0.5):
    """Elementwise SAAF stabilization parameter.

    ``1 / (c * sigma_t)`` where the element is optically thick
    (``c * h * sigma_t >= varsigma``), ``h / varsigma`` otherwise.
    """
    sigma_t = np.asarray(sigma_t, dtype=float)
    if np.any(sigma_t <= 0):
        raise ZeroDivisionError("stabilization needs sigma_t > 0")
    thick = c * h * sigma_t >= varsigma
    return np.where(thick, 1.0 / (c * sigma_t), h / varsigma)


def compute_tau(spec):
    """``(n_elements, G)`` array of stabilization parameters for ``spec``."""
    return stabilization_tau(spec.element_xs("sigma_t"), spec.mesh.element_size,
                             spec.c, spec.varsigma)


# JSON ---------------------------------------------------------------------

def _require(doc, key, where=""):
    if key not in doc:
        raise ConfigError(f"{where}{key}", "missing required key")
    return doc[key]


def _material_map_from_doc(doc, mesh):
    if isinstance(doc, list):
        arr = np.asarray(doc, dtype=np.int64)
        if arr.shape != (mesh.n_elements,):
            raise ConfigError("material_map", f"expected {mesh.n_elements} entries")
        return arr
    if not isinstance(doc, dict):
        raise ConfigError("material_map", "expected a list or {generator, params}")
    gen = _require(doc, "generator", "material_map.")
    params = doc.get("params", {})
    if gen == "uniform":
        return np.full(mesh.n_elements, int(params.get("id", 0)), dtype=np.int64)
    if gen == "pin_lattice":
        from .generators import pin_lattice_map
        return pin_lattice_map(mesh, **params)
    raise ConfigError("material_map.generator", f"unknown generator {gen!r}")


def spec_from_dict(doc):
    """Build a :class:`ProblemSpec` from a parsed configuration document."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected a JSON object")
    schema = doc.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError("schema", f"unsupported schema version {schema!r}")
    m = _require(doc, "mesh")
    try:
        mesh = StructuredMesh(int(_require(m, "nx", "mesh.")), int(_require(m, "ny", "mesh.")),
                              int(_require(m, "nz", "mesh.")), float(m.get("hx", 1.0)),
                              float(m.get("hy", 1.0)), float(m.get("hz", 1.0)))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("mesh", str(exc)) from exc
    q = _require(doc, "quadrature")
    try:
        quad = build_quadrature(str(_require(q, "kind", "quadrature.")),
                                int(_require(q, "order", "quadrature.")))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("quadrature", str(exc)) from exc
    materials = {}
    for i, md in enumerate(_require(doc, "materials")):
        where = f"materials[{i}]."
        try:
            mat = Material.create(_require(md, "id", where), _require(md, "sigma_t", where),
                                  _require(md, "sigma_s", where), md.get("nu_sigma_f"),
                                  md.get("chi"))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"materials[{i}]", str(exc)) from exc
        materials[mat.id] = mat
    mat_map = _material_map_from_doc(_require(doc, "material_map"), mesh)
    bcs = _require(doc, "bcs")
    for side in SIDES:
        if side not in bcs:
            raise ConfigError(f"bcs.{side}", "missing boundary condition")
    stab = doc.get("stabilization", {})
    try:
        return ProblemSpec(mesh, quad, materials, mat_map, dict(bcs),
                           float(stab.get("c", 1.0)), float(stab.get("varsigma", 0.5)))
    except ValueError as exc:
        key = "bcs" if "boundary" in str(exc) else "materials"
        raise ConfigError(key, str(exc)) from exc


def spec_to_dict(spec):
    mesh = spec.mesh
    return {
        "schema": SCHEMA_VERSION,
        "mesh": {"nx": mesh.nx, "ny": mesh.ny, "nz": mesh.nz,
                 "hx": mesh.hx, "hy": mesh.hy, "hz": mesh.hz},
        "quadrature": {"kind": spec.quadrature.kind, "order": spec.quadrature.order},
        "materials": [
            {"id": m.id, "sigma_t": m.sigma_t.tolist(), "sigma_s": m.sigma_s.tolist(),
             "nu_sigma_f": m.nu_sigma_f.tolist(), "chi": m.chi.tolist()}
            for m in (spec.materials[k] for k in spec.material_ids)
        ],
        "material_map": spec.material_map.tolist(),
        "bcs": {s: spec.bcs[s] for s in SIDES},
        "stabilization": {"c": spec.c, "varsigma": spec.varsigma},
    }


def load_spec(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"{path}: {exc}") from exc
    return spec_from_dict(doc)


def save_spec(spec, path):
    path = Path(path)
    path.write_text(json.dumps(spec_to_dict(spec), indent=1) + "\n")
    return path
