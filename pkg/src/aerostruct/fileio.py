"""Shared helpers for the whitespace-delimited section file formats."""

from __future__ import annotations

import numpy as np


class FormatError(ValueError):
    """A model file does not follow its format."""


def fmt(x) -> str:
    """Format a number with 17 significant digits (exact float round trip)."""
    return f"{float(x):.17g}"


def read_sections(text: str, names, source="<string>"):
    """Split a file into named sections.

    Blank lines and text after ``#`` are ignored. A line consisting of a
    single known section name starts that section; every other line is
    returned as ``(line_number, tokens)`` under the current section.
    """
    names = tuple(names)
    out: dict[str, list] = {}
    cur = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if len(tok) == 1 and tok[0].upper() in names:
            cur = tok[0].upper()
            if cur in out:
                raise FormatError(f"{source}:{ln}: section {cur} appears twice")
            out[cur] = []
            continue
        if cur is None:
            raise FormatError(f"{source}:{ln}: data before the first section header")
        out[cur].append((ln, tok))
    return out


def format_matrix_coo(H) -> str:
    """Coordinate (row col value) text of a sparse or dense matrix."""
    import scipy.sparse as sp
    C = sp.coo_matrix(H)
    order = np.lexsort((C.col, C.row))
    lines = [f"# shape {C.shape[0]} {C.shape[1]}"]
    lines += [f"{r} {c} {fmt(v)}" for r, c, v in zip(C.row[order], C.col[order], C.data[order])]
    return "\n".join(lines) + "\n"


def parse_matrix_coo(text: str, source="<string>"):
    import scipy.sparse as sp
    shape = None
    rows, cols, vals = [], [], []
    for ln, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s.startswith("# shape"):
            shape = tuple(int(t) for t in s.split()[2:4])
            continue
        s = s.split("#", 1)[0].strip()
        if not s:
            continue
        tok = s.split()
        if len(tok) != 3:
            raise FormatError(f"{source}:{ln}: expected 'row col value'")
        rows.append(int(tok[0]))
        cols.append(int(tok[1]))
        vals.append(float(tok[2]))
    return sp.csr_matrix((vals, (rows, cols)), shape=shape)


def format_vector(v, name="vector") -> str:
    """One value per line after a ``# name n`` header."""
    v = np.asarray(v, float).reshape(-1)
    return f"# {name} {len(v)}\n" + "".join(fmt(x) + "\n" for x in v)


def parse_vector(text: str, source="<string>") -> np.ndarray:
    vals = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        s = raw.split("#", 1)[0].strip()
        if not s:
            continue
        try:
            vals.append(float(s))
        except ValueError:
            raise FormatError(f"{source}:{ln}: expected one number per line") from None
    return np.array(vals)


def format_key_values(items) -> str:
    """``key = value`` lines; floats with 17 significant digits."""
    out = []
    for k, v in items:
        if isinstance(v, (bool, np.bool_)):
            v = "true" if v else "false"
        elif isinstance(v, (float, np.floating)):
            v = fmt(v)
        out.append(f"{k} = {v}")
    return "\n".join(out) + "\n"


def parse_key_values(text: str) -> dict:
    out = {}
    for raw in text.splitlines():
        if "=" in raw and not raw.lstrip().startswith("#"):
            k, v = raw.split("=", 1)
            out[k.strip()] = v.strip()
    return out
