"""MPS and LP-text serialization of :class:`~sawtooth_qp.model.Model`.

MPS output uses the fixed-format column layout (fields start at columns
2, 5, 15, 25, 40 and 50).  Names longer than eight characters simply push the
following fields to the right, and the reader splits on whitespace, so names
must not contain blanks (the model enforces that).

Quadratic conventions
---------------------
* ``QUADOBJ`` lists the lower triangle of ``H = 2 Q`` so a reader that
  interprets the section as ``0.5 x' H x`` recovers the model's ``x' Q x``.
* ``QCMATRIX <row>`` lists the full symmetric ``Q`` of a quadratic constraint,
  whose quadratic contribution is ``x' Q x`` with no factor one half.
* The objective constant ``k`` is written as ``-k`` on the objective row of
  the RHS section.
"""

from __future__ import annotations

import re

import numpy as np

from .model import BINARY, CONTINUOUS, Model, QuadraticForm

OBJ_ROW = "OBJ"
MAX_SIG_DIGITS = 12


def format_number(v: float) -> str:
    """Shortest decimal (at most 12 significant digits) that reads back to ``v``."""
    v = float(v)
    if v == 0.0:
        return "0"
    for digits in range(1, MAX_SIG_DIGITS + 1):
        s = f"{v:.{digits}g}"
        if float(s) == v:
            return s
    return f"{v:.{MAX_SIG_DIGITS}g}"


def _objective_parts(model: Model):
    """Linear coefficients, constant and (ids, Q) of the objective with form parts folded in."""
    lin = dict(model.objective_linear)
    const = model.objective_constant
    quad = None
    form = model.objective_quadratic
    if form is not None:
        for k, vid in enumerate(model.objective_quad_vars):
            if form.linear[k] != 0.0:
                lin[vid] = lin.get(vid, 0.0) + form.linear[k]
        const += form.constant
        quad = (list(model.objective_quad_vars), form.matrix)
    return lin, const, quad


def _sorted_quad_entries(ids, Q):
    """Upper-triangle (by id) entries ``(i_id, j_id, q_ij)`` with ``i_id <= j_id``, nonzeros only."""
    out = {}
    for a, ia in enumerate(ids):
        for b, ib in enumerate(ids):
            lo, hi = min(ia, ib), max(ia, ib)
            if Q[a, b] != 0.0 and (lo, hi) not in out:
                out[(lo, hi)] = Q[a, b]
    return sorted((i, j, q) for (i, j), q in out.items())


# ---------------------------------------------------------------------------
# MPS
# ---------------------------------------------------------------------------


def _field_line(*fields) -> str:
    # standard fixed-format starting columns 5, 15, 25, 40, 50 (1-based)
    starts = [4, 14, 24, 39, 49]
    line = ""
    for start, text in zip(starts, fields):
        if len(line) < start:
            line += " " * (start - len(line))
        else:
            line += " "
        line += text
    return line.rstrip()


def export_mps(model: Model) -> str:
    names = [v.name for v in model.variables]
    rows = ["* sawtooth_qp model export (fixed-format MPS, minimization)",
            "* QUADOBJ holds the lower triangle of 2Q: readers using 0.5 x'Hx recover x'Qx",
            "* QCMATRIX holds the full symmetric Q of a constraint term x'Qx",
            f"NAME          {model.name}",
            "ROWS",
            f" N  {OBJ_ROW}"]
    sense_code = {"<=": "L", ">=": "G", "=": "E"}
    for con in model.constraints:
        rows.append(f" {sense_code[con.sense]}  {con.name}")
    for qc in model.quadratic_constraints:
        rows.append(f" L  {qc.name}")

    lin, const, quad = _objective_parts(model)
    column_entries: list[list[tuple[str, float]]] = [[] for _ in model.variables]
    for vid, a in sorted(lin.items()):
        if a != 0.0:
            column_entries[vid].append((OBJ_ROW, a))
    for con in model.constraints:
        for vid, a in con.coeffs.items():
            column_entries[vid].append((con.name, a))
    for qc in model.quadratic_constraints:
        for vid, a in qc.linear.items():
            column_entries[vid].append((qc.name, a))
        for k, vid in enumerate(qc.var_ids):
            if qc.form.linear[k] != 0.0:
                column_entries[vid].append((qc.name, qc.form.linear[k]))

    rows.append("COLUMNS")
    in_marker = False
    marker_count = 0
    for var in model.variables:
        if var.is_binary and not in_marker:
            rows.append(f"    MARKER{marker_count:<4d}'MARKER'                 'INTORG'")
            in_marker = True
        elif not var.is_binary and in_marker:
            rows.append(f"    MARKER{marker_count:<4d}'MARKER'                 'INTEND'")
            marker_count += 1
            in_marker = False
        entries = column_entries[var.id]
        # merge duplicate rows (a quadratic row may receive a linear term twice)
        merged: dict[str, float] = {}
        for rname, a in entries:
            merged[rname] = merged.get(rname, 0.0) + a
        if not merged:
            merged = {OBJ_ROW: 0.0}
        for rname, a in merged.items():
            rows.append(_field_line(var.name, rname, format_number(a)))
    if in_marker:
        rows.append(f"    MARKER{marker_count:<4d}'MARKER'                 'INTEND'")

    rows.append("RHS")
    if const != 0.0:
        rows.append(_field_line("RHS", OBJ_ROW, format_number(-const)))
    for con in model.constraints:
        if con.rhs != 0.0:
            rows.append(_field_line("RHS", con.name, format_number(con.rhs)))
    for qc in model.quadratic_constraints:
        rhs = qc.rhs - qc.form.constant
        if rhs != 0.0:
            rows.append(_field_line("RHS", qc.name, format_number(rhs)))

    rows.append("BOUNDS")
    for var in model.variables:
        if var.lb == var.ub:
            rows.append(" FX " + _field_line("BND", var.name, format_number(var.lb))[4:])
        else:
            rows.append(" LO " + _field_line("BND", var.name, format_number(var.lb))[4:])
            rows.append(" UP " + _field_line("BND", var.name, format_number(var.ub))[4:])

    if quad is not None:
        entries = _sorted_quad_entries(*quad)
        if entries:
            rows.append("QUADOBJ")
            for i, j, q in entries:
                # each unordered pair appears once, as in the usual triangular listing
                rows.append(_field_line(names[i], names[j], format_number(2.0 * q)))
    for qc in model.quadratic_constraints:
        rows.append(f"QCMATRIX   {qc.name}")
        ids = qc.var_ids
        full = {}
        for a, ia in enumerate(ids):
            for b, ib in enumerate(ids):
                if qc.form.matrix[a, b] != 0.0:
                    full[(ia, ib)] = qc.form.matrix[a, b]
        for (ia, ib), q in sorted(full.items()):
            rows.append(_field_line(names[ia], names[ib], format_number(q)))
    rows.append("ENDATA")
    return "\n".join(rows) + "\n"


class MpsError(ValueError):
    pass


def parse_mps(text: str) -> Model:
    """Read the MPS dialect written by :func:`export_mps`."""
    model_name = "model"
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    obj_row = None
    columns: dict[str, dict[str, float]] = {}
    col_order: list[str] = []
    integer_cols: set[str] = set()
    rhs: dict[str, float] = {}
    bounds: dict[str, list[float | None]] = {}
    quadobj: list[tuple[str, str, float]] = []
    qcmatrix: dict[str, list[tuple[str, str, float]]] = {}
    section = None
    current_qc = None
    in_int = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.startswith("*"):
            continue
        tokens = raw.split()
        if not raw[0].isspace():
            head = tokens[0].upper()
            section = head
            if head == "NAME":
                model_name = tokens[1] if len(tokens) > 1 else "model"
            elif head == "QCMATRIX":
                if len(tokens) < 2:
                    raise MpsError(f"line {lineno}: QCMATRIX needs a row name")
                current_qc = tokens[1]
                qcmatrix[current_qc] = []
            elif head == "ENDATA":
                break
            elif head not in ("ROWS", "COLUMNS", "RHS", "BOUNDS", "QUADOBJ", "RANGES"):
                raise MpsError(f"line {lineno}: unknown section {head!r}")
            if head == "RANGES":
                raise MpsError(f"line {lineno}: RANGES section is not supported")
            continue
        try:
            if section == "ROWS":
                kind, name = tokens[0].upper(), tokens[1]
                if kind == "N":
                    if obj_row is None:
                        obj_row = name
                    continue
                if kind not in ("L", "G", "E"):
                    raise MpsError(f"line {lineno}: bad row type {kind!r}")
                row_sense[name] = {"L": "<=", "G": ">=", "E": "="}[kind]
                row_order.append(name)
            elif section == "COLUMNS":
                if len(tokens) >= 3 and tokens[1] == "'MARKER'":
                    in_int = tokens[2] == "'INTORG'"
                    continue
                col = tokens[0]
                if col not in columns:
                    columns[col] = {}
                    col_order.append(col)
                if in_int:
                    integer_cols.add(col)
                pairs = tokens[1:]
                if len(pairs) % 2:
                    raise MpsError(f"line {lineno}: odd number of fields")
                for r, v in zip(pairs[::2], pairs[1::2]):
                    if r != obj_row and r not in row_sense:
                        raise MpsError(f"line {lineno}: unknown row {r!r}")
                    columns[col][r] = columns[col].get(r, 0.0) + float(v)
            elif section == "RHS":
                pairs = tokens[1:]
                if len(pairs) % 2:
                    pairs = tokens  # rhs set name omitted
                for r, v in zip(pairs[::2], pairs[1::2]):
                    rhs[r] = float(v)
            elif section == "BOUNDS":
                kind, col, = tokens[0].upper(), tokens[2]
                val = float(tokens[3]) if len(tokens) > 3 else None
                if col not in columns:
                    raise MpsError(f"line {lineno}: bound on unknown column {col!r}")
                b = bounds.setdefault(col, [None, None])
                if kind == "LO":
                    b[0] = val
                elif kind == "UP":
                    b[1] = val
                elif kind == "FX":
                    b[0] = b[1] = val
                elif kind == "BV":
                    b[0], b[1] = 0.0, 1.0
                else:
                    raise MpsError(f"line {lineno}: unsupported bound type {kind!r}")
            elif section == "QUADOBJ":
                quadobj.append((tokens[0], tokens[1], float(tokens[2])))
            elif section == "QCMATRIX":
                qcmatrix[current_qc].append((tokens[0], tokens[1], float(tokens[2])))
            else:
                raise MpsError(f"line {lineno}: data outside a section")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, MpsError):
                raise
            raise MpsError(f"line {lineno}: malformed entry: {raw.strip()!r}") from None

    model = Model(name=model_name)
    for col in col_order:
        lo, hi = bounds.get(col, [None, None])
        if lo is None or hi is None:
            raise MpsError(f"column {col!r} lacks finite bounds")
        kind = BINARY if col in integer_cols else CONTINUOUS
        model.add_variable(col, lo, hi, kind)
    vid = {c: model.var_id(c) for c in col_order}

    quad_rows = set(qcmatrix)
    for r in row_order:
        if r in quad_rows:
            continue
        coeffs = {vid[c]: entries[r] for c, entries in columns.items() if r in entries}
        model.add_linear_constraint(coeffs, row_sense[r], rhs.get(r, 0.0), name=r)

    obj_lin = {vid[c]: e[obj_row] for c, e in columns.items() if obj_row in e and e[obj_row] != 0.0}
    const = -rhs.get(obj_row, 0.0) if obj_row else 0.0
    quad = None
    qids = []
    if quadobj:
        qids = sorted({vid[a] for a, _, _ in quadobj} | {vid[b] for _, b, _ in quadobj})
        pos = {v: k for k, v in enumerate(qids)}
        Q = np.zeros((len(qids), len(qids)))
        for a, b, h in quadobj:
            i, j = pos[vid[a]], pos[vid[b]]
            Q[i, j] = Q[j, i] = h / 2.0
        quad = QuadraticForm(Q)
    model.set_objective(quad, qids, obj_lin, const)

    for r in row_order:
        if r not in quad_rows:
            continue
        entries = qcmatrix[r]
        ids = sorted({vid[a] for a, _, _ in entries} | {vid[b] for _, b, _ in entries})
        pos = {v: k for k, v in enumerate(ids)}
        Q = np.zeros((len(ids), len(ids)))
        for a, b, q in entries:
            Q[pos[vid[a]], pos[vid[b]]] = q
        lin = {vid[c]: e[r] for c, e in columns.items() if r in e}
        model.add_quadratic_constraint(ids, QuadraticForm(Q), rhs.get(r, 0.0), lin, name=r)
    return model


# ---------------------------------------------------------------------------
# LP text
# ---------------------------------------------------------------------------


def _linear_text(terms) -> str:
    parts = []
    for name, a in terms:
        sign = "-" if a < 0 else "+"
        mag = abs(a)
        coef = "" if mag == 1.0 else format_number(mag) + " "
        parts.append(f"{sign} {coef}{name}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def _quad_text(names, entries, factor) -> str:
    parts = []
    for i, j, q in entries:
        coef = factor * q * (1.0 if i == j else 2.0)
        sign = "-" if coef < 0 else "+"
        term = f"{names[i]} ^ 2" if i == j else f"{names[i]} * {names[j]}"
        parts.append(f"{sign} {format_number(abs(coef))} {term}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def export_lp_text(model: Model) -> str:
    """CPLEX-style LP listing; one statement per line, everything ordered by id.

    The objective quadratic part is written as ``[ ... ] / 2`` holding ``2Q``;
    quadratic constraints hold ``Q`` directly inside ``[ ... ]``.
    """
    names = [v.name for v in model.variables]
    lin, const, quad = _objective_parts(model)
    obj = _linear_text([(names[v], a) for v, a in sorted(lin.items()) if a != 0.0])
    if quad is not None:
        entries = _sorted_quad_entries(*quad)
        if entries:
            obj = (obj + " + " if obj else "") + "[ " + _quad_text(names, entries, 2.0) + " ] / 2"
    if const != 0.0:
        obj = (obj + " " if obj else "") + ("- " if const < 0 else "+ ") + format_number(abs(const))
    lines = [f"\\ sawtooth_qp LP text export: {model.name}", "Minimize", f" obj: {obj if obj else '0'}", "Subject To"]
    for con in model.constraints:
        body = _linear_text([(names[v], a) for v, a in con.coeffs.items()])
        lines.append(f" {con.name}: {body} {con.sense} {format_number(con.rhs)}")
    for qc in model.quadratic_constraints:
        lin_terms = dict(qc.linear)
        for k, v in enumerate(qc.var_ids):
            if qc.form.linear[k] != 0.0:
                lin_terms[v] = lin_terms.get(v, 0.0) + qc.form.linear[k]
        body = _linear_text([(names[v], a) for v, a in sorted(lin_terms.items()) if a != 0.0])
        qtext = _quad_text(names, _sorted_quad_entries(qc.var_ids, qc.form.matrix), 1.0)
        body = (body + " + " if body else "") + f"[ {qtext} ]"
        lines.append(f" {qc.name}: {body} <= {format_number(qc.rhs - qc.form.constant)}")
    lines.append("Bounds")
    for v in model.variables:
        lines.append(f" {format_number(v.lb)} <= {v.name} <= {format_number(v.ub)}")
    bins = [v.name for v in model.variables if v.is_binary]
    if bins:
        lines.append("Binaries")
        lines.extend(f" {b}" for b in bins)
    lines.append("End")
    return "\n".join(lines) + "\n"


_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)|(?P<op><=|>=|=|[-+*^\[\]/])|(?P<name>[A-Za-z_][\w.]*))")


def _tokenize(text: str, lineno: int):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"line {lineno}: cannot parse near {text[pos:]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    return out


def _parse_expression(tokens, lineno):
    """Return (linear dict name->coef, quad dict (a,b)->coef, constant, bracket divisor)."""
    lin: dict[str, float] = {}
    quad: dict[tuple[str, str], float] = {}
    const = 0.0
    k = 0
    in_bracket = False
    divisor = 1.0
    sign = 1.0
    while k < len(tokens):
        kind, val = tokens[k]
        if val in "+-" and kind == "op":
            sign = -1.0 if val == "-" else 1.0
            k += 1
            continue
        if val == "[":
            in_bracket, k = True, k + 1
            continue
        if val == "]":
            in_bracket, k = False, k + 1
            if k < len(tokens) and tokens[k][1] == "/":
                divisor = float(tokens[k + 1][1])
                k += 2
            continue
        coef = 1.0
        if kind == "num":
            coef = float(val)
            k += 1
            if k >= len(tokens) or tokens[k][0] != "name":
                const += sign * coef
                sign = 1.0
                continue
        kind, name = tokens[k]
        if kind != "name":
            raise ValueError(f"line {lineno}: expected a variable name, got {name!r}")
        k += 1
        if k < len(tokens) and tokens[k][1] == "^":
            quad[(name, name)] = quad.get((name, name), 0.0) + sign * coef
            k += 2
        elif k < len(tokens) and tokens[k][1] == "*":
            other = tokens[k + 1][1]
            quad[(name, other)] = quad.get((name, other), 0.0) + sign * coef
            k += 2
        else:
            if in_bracket:
                raise ValueError(f"line {lineno}: linear term inside quadratic bracket")
            lin[name] = lin.get(name, 0.0) + sign * coef
        sign = 1.0
    return lin, quad, const, divisor


def parse_lp_text(text: str) -> Model:
    """Read the LP text dialect produced by :func:`export_lp_text`."""
    lines = text.splitlines()
    model_name = "model"
    section = None
    objective = None
    cons = []
    bounds = []
    binaries = set()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            if ":" in line:
                model_name = line.rsplit(":", 1)[1].strip() or model_name
            continue
        low = line.lower()
        if low in ("minimize", "subject to", "bounds", "binaries", "end"):
            section = low
            continue
        if section == "minimize":
            label, body = line.split(":", 1)
            objective = (_parse_expression(_tokenize(body, lineno), lineno), lineno)
        elif section == "subject to":
            label, body = line.split(":", 1)
            toks = _tokenize(body, lineno)
            idx = next(i for i, t in enumerate(toks) if t[1] in ("<=", ">=", "="))
            sense = toks[idx][1]
            rhs_toks = toks[idx + 1:]
            rhs = float("".join(t[1] for t in rhs_toks))
            cons.append((label.strip(), _parse_expression(toks[:idx], lineno), sense, rhs, lineno))
        elif section == "bounds":
            toks = _tokenize(line, lineno)
            if len(toks) != 5 or toks[1][1] != "<=" or toks[3][1] != "<=":
                # allow signed numbers: rebuild as lo <= name <= hi
                m = re.fullmatch(r"(\S+)\s*<=\s*(\S+)\s*<=\s*(\S+)", line)
                if not m:
                    raise ValueError(f"line {lineno}: bounds must read 'lo <= name <= hi'")
                bounds.append((m.group(2), float(m.group(1)), float(m.group(3))))
            else:
                bounds.append((toks[2][1], float(toks[0][1]), float(toks[4][1])))
        elif section == "binaries":
            binaries.update(line.split())
        elif section == "end":
            break
        else:
            raise ValueError(f"line {lineno}: content outside a section")

    model = Model(name=model_name)
    for name, lo, hi in bounds:
        model.add_variable(name, lo, hi, BINARY if name in binaries else CONTINUOUS)

    def ids_of(d):
        try:
            return {model.var_id(n): a for n, a in d.items()}
        except KeyError as exc:
            raise ValueError(f"unknown variable {exc.args[0]!r}") from None

    def quad_form(quad, scale):
        ids = sorted({model.var_id(a) for a, _ in quad} | {model.var_id(b) for _, b in quad})
        pos = {v: k for k, v in enumerate(ids)}
        Q = np.zeros((len(ids), len(ids)))
        for (a, b), q in quad.items():
            i, j = pos[model.var_id(a)], pos[model.var_id(b)]
            if i == j:
                Q[i, i] += q * scale
            else:
                Q[i, j] += 0.5 * q * scale
                Q[j, i] += 0.5 * q * scale
        return ids, QuadraticForm(Q)

    for label, (lin, quad, const, _), sense, rhs, lineno in cons:
        if quad:
            if sense != "<=":
                raise ValueError(f"line {lineno}: quadratic constraints must use <=")
            ids, form = quad_form(quad, 1.0)
            model.add_quadratic_constraint(ids, form, rhs - const, ids_of(lin), name=label)
        else:
            model.add_linear_constraint(ids_of(lin), sense, rhs - const, name=label)
    # restore declaration order: linear rows are listed before quadratic ones in the writer
    if objective is not None:
        (lin, quad, const, divisor), _ = objective
        ids, form = quad_form(quad, 1.0 / divisor) if quad else ([], None)
        model.set_objective(form, ids, ids_of(lin), const)
    return model
