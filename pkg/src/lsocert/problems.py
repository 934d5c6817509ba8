"""Problem files: a JSON schema for complete control problems.

The schema mirrors the model layer one-to-one; every polynomial is a string
in the canonical grammar of :mod:`lsocert.poly`.  Parsing failures raise
:class:`ProblemFileError` carrying the offending field path.  Serialization
round-trips exactly: parse -> serialize -> parse yields an identical
problem.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ModelValidationError, ProblemFileError
from .model import (
    BoundaryPiece,
    CostModel,
    Dynamics,
    HorizonSpec,
    SemialgebraicSet,
    SOCProblem,
)
from .poly import Polynomial, PolynomialParseError, VariableSpace, parse, render

SCHEMA_VERSION = 1


def _expect(obj, key, path, kind=None):
    if key not in obj:
        raise ProblemFileError(f"missing field", path=f"{path}.{key}")
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        names = kind.__name__ if not isinstance(kind, tuple) else "/".join(k.__name__ for k in kind)
        raise ProblemFileError(f"expected {names}, got {type(val).__name__}", path=f"{path}.{key}")
    return val


def _parse_poly(text, space, path):
    if not isinstance(text, str):
        raise ProblemFileError(f"expected a polynomial string", path=path)
    try:
        return parse(text, space)
    except PolynomialParseError as exc:
        raise ProblemFileError(str(exc), path=path) from exc


def _parse_matrix(rows, space, path, nrows=None):
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ProblemFileError("expected a list of lists of polynomial strings", path=path)
    if nrows is not None and len(rows) != nrows:
        raise ProblemFileError(f"expected {nrows} rows, got {len(rows)}", path=path)
    width = len(rows[0])
    out = []
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ProblemFileError("ragged matrix", path=f"{path}[{i}]")
        out.append(tuple(_parse_poly(s, space, f"{path}[{i}][{j}]") for j, s in enumerate(row)))
    return tuple(out)


def _parse_numeric_matrix(rows, path):
    try:
        arr = np.array(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProblemFileError(f"expected a numeric matrix: {exc}", path=path)
    if arr.ndim != 2:
        raise ProblemFileError("expected a 2-d numeric matrix", path=path)
    return arr


def problem_from_dict(doc: dict, source: str = "<memory>") -> SOCProblem:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ProblemFileError(
            f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})",
            path="schema_version",
        )
    names = _expect(doc, "variables", "", list)
    if not all(isinstance(n, str) for n in names):
        raise ProblemFileError("variable names must be strings", path="variables")
    try:
        space = VariableSpace(tuple(names))
    except ValueError as exc:
        raise ProblemFileError(str(exc), path="variables") from exc

    time_name = doc.get("time_variable")
    time_index = None
    if time_name is not None:
        if time_name not in names:
            raise ProblemFileError(f"time variable {time_name!r} not in variables", path="time_variable")
        time_index = names.index(time_name)

    dyn_doc = _expect(doc, "dynamics", "", dict)
    f_list = _expect(dyn_doc, "f", "dynamics", list)
    f = tuple(_parse_poly(s, space, f"dynamics.f[{i}]") for i, s in enumerate(f_list))
    G = _parse_matrix(_expect(dyn_doc, "G", "dynamics"), space, "dynamics.G", nrows=len(f))
    B = _parse_matrix(_expect(dyn_doc, "B", "dynamics"), space, "dynamics.B", nrows=len(f))
    L = _parse_numeric_matrix(_expect(dyn_doc, "L", "dynamics"), "dynamics.L")
    try:
        dynamics = Dynamics(f=f, G=G, B=B, noise_scale=L)
    except ModelValidationError as exc:
        raise ProblemFileError(str(exc), path="dynamics") from exc

    cost_doc = _expect(doc, "cost", "", dict)
    q = _parse_poly(_expect(cost_doc, "q", "cost"), space, "cost.q")
    R = _parse_numeric_matrix(_expect(cost_doc, "R", "cost"), "cost.R")
    try:
        cost = CostModel(q=q, R=R)
    except ModelValidationError as exc:
        raise ProblemFileError(str(exc), path="cost.R") from exc

    dom_doc = _expect(doc, "domain", "", dict)
    ineqs = [
        _parse_poly(s, space, f"domain.inequalities[{i}]")
        for i, s in enumerate(_expect(dom_doc, "inequalities", "domain", list))
    ]
    eqs = [
        _parse_poly(s, space, f"domain.equalities[{i}]")
        for i, s in enumerate(dom_doc.get("equalities", []))
    ]
    box = _parse_numeric_matrix(_expect(dom_doc, "bounding_box", "domain"), "domain.bounding_box")
    if box.shape != (space.dim, 2):
        raise ProblemFileError(
            f"bounding box must be {space.dim} rows of [lo, hi]", path="domain.bounding_box"
        )
    try:
        domain = SemialgebraicSet(
            inequalities=tuple(ineqs), equalities=tuple(eqs), bounding_box=box
        )
    except ModelValidationError as exc:
        raise ProblemFileError(str(exc), path="domain") from exc

    pieces = []
    for i, piece_doc in enumerate(_expect(doc, "boundary", "", list)):
        ppath = f"boundary[{i}]"
        if not isinstance(piece_doc, dict):
            raise ProblemFileError("expected an object", path=ppath)
        face_doc = _expect(piece_doc, "face", ppath, dict)
        eq = _parse_poly(_expect(face_doc, "equality", f"{ppath}.face"), space, f"{ppath}.face.equality")
        face_ineqs = tuple(
            _parse_poly(s, space, f"{ppath}.face.inequalities[{j}]")
            for j, s in enumerate(face_doc.get("inequalities", []))
        )
        face_box = face_doc.get("bounding_box")
        if face_box is not None:
            face_box = _parse_numeric_matrix(face_box, f"{ppath}.face.bounding_box")
        phi = _parse_poly(_expect(piece_doc, "terminal_cost", ppath), space, f"{ppath}.terminal_cost")
        try:
            face = SemialgebraicSet(
                inequalities=face_ineqs, equalities=(eq,), bounding_box=face_box
            )
            pieces.append(BoundaryPiece(face=face, terminal_cost=phi))
        except ModelValidationError as exc:
            raise ProblemFileError(str(exc), path=ppath) from exc

    hor_doc = _expect(doc, "horizon", "", dict)
    kind = _expect(hor_doc, "kind", "horizon", str)
    try:
        horizon = HorizonSpec(kind=kind, T=hor_doc.get("T"), c=hor_doc.get("c"))
    except ModelValidationError as exc:
        raise ProblemFileError(str(exc), path="horizon") from exc

    # derive face bounding boxes from the domain box when absent
    from ._kernels.tables import axis_aligned_face

    derived = []
    for piece in pieces:
        if piece.face.bounding_box is None:
            aa = axis_aligned_face(piece.face.equalities[0])
            fb = box.copy()
            if aa is not None:
                fb[aa[0]] = (aa[1], aa[1])
            piece = BoundaryPiece(
                face=SemialgebraicSet(
                    inequalities=piece.face.inequalities,
                    equalities=piece.face.equalities,
                    bounding_box=fb,
                ),
                terminal_cost=piece.terminal_cost,
            )
        derived.append(piece)

    try:
        return SOCProblem(
            dynamics=dynamics,
            cost=cost,
            domain=domain,
            boundary=tuple(derived),
            horizon=horizon,
            time_index=time_index,
            name=doc.get("name", Path(source).stem),
        )
    except ModelValidationError as exc:
        raise ProblemFileError(str(exc)) from exc


def load_problem(path) -> SOCProblem:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ProblemFileError(f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(doc, dict):
        raise ProblemFileError("top level must be an object")
    return problem_from_dict(doc, source=str(path))


def problem_to_dict(problem: SOCProblem) -> dict:
    space = problem.space
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": problem.name,
        "variables": list(space.names),
        "time_variable": None if problem.time_index is None else space.names[problem.time_index],
        "dynamics": {
            "f": [render(p) for p in problem.dynamics.f],
            "G": [[render(p) for p in row] for row in problem.dynamics.G],
            "B": [[render(p) for p in row] for row in problem.dynamics.B],
            "L": problem.dynamics.noise_scale.tolist(),
        },
        "cost": {"q": render(problem.cost.q), "R": problem.cost.R.tolist()},
        "domain": {
            "inequalities": [render(p) for p in problem.domain.inequalities],
            "equalities": [render(p) for p in problem.domain.equalities],
            "bounding_box": problem.domain.bounding_box.tolist(),
        },
        "boundary": [
            {
                "face": {
                    "equality": render(piece.face.equalities[0]),
                    "inequalities": [render(p) for p in piece.face.inequalities],
                    "bounding_box": piece.face.bounding_box.tolist()
                    if piece.face.bounding_box is not None
                    else None,
                },
                "terminal_cost": render(piece.terminal_cost),
            }
            for piece in problem.boundary
        ],
        "horizon": {
            "kind": problem.horizon.kind,
            "T": problem.horizon.T,
            "c": problem.horizon.c,
        },
    }
    return doc


def save_problem(problem: SOCProblem, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(problem), fh, indent=2)
        fh.write("\n")


def bundled_problem_path(name: str) -> Path:
    """Path of a problem file shipped with the package (scalar1d, twodim)."""
    ref = resources.files("lsocert") / "data" / f"{name}.json"
    return Path(str(ref))


def load_bundled(name: str) -> SOCProblem:
    return load_problem(bundled_problem_path(name))
