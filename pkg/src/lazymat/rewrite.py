"""Lowering of expression trees to kernel plans.

rewrite() walks a validated tree top-down and produces a Plan: an
ordered list of kernel calls over leaf arrays and numbered temporary
slots, together with a log of the rewrite rules that fired.  execute()
runs a plan.  evaluate() is the user-facing entry point combining
validation, rewriting and execution.

The rules, in the order they are probed:

  R1   fuse connected Add/Sub/ScalarMul regions into one pass
  R2   read columns, rows and transposes through views, no extraction
  R3   diagmat(x) * B and B * diagmat(x) as row/column scaling
  R4   diagmat(A * B) without forming the product
  R5   trace(A * B) without forming the product
  R6   greedy smallest-result ordering of multiplication chains
  R7   a^T * diagmat(B) * c as one multiply-and-sum loop
  R8   A * A^T via a symmetric rank-k update when both sides share
       one storage id
  R9   inv(A) * B as a linear solve
  R10  structure-dispatched solves: banded, triangular, symmetric
       (detected, solved via LU), generic LU

Composite patterns are probed before the generic lowerings so they are
not consumed piecewise; anything unmatched falls back to GEMM, explicit
transposes and explicit inverses, which keeps every valid tree
executable.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .expr import ExprNode, Shape, infer_shape, validate
from .matrix import DenseMatrix, _alloc, _free, analyze_structure
from .trace import current_collector

__all__ = [
    "KernelCall",
    "Plan",
    "rewrite",
    "execute",
    "evaluate",
    "rule_log_text",
]


class KernelCall:
    """One step of a plan: kernel name, operand bindings, a small
    kernel-specific params tuple, and the destination slot."""

    __slots__ = ("kernel", "operands", "params", "dest")

    def __init__(self, kernel, operands, params, dest):
        self.kernel = kernel
        self.operands = operands
        self.params = params
        self.dest = dest


class Plan:
    __slots__ = ("steps", "output_shape", "rule_log", "slot_shapes",
                 "result_slot", "scalar_result", "last_use")

    def __init__(self, steps, output_shape, rule_log, slot_shapes,
                 result_slot, scalar_result):
        self.steps = steps
        self.output_shape = output_shape
        self.rule_log = rule_log
        self.slot_shapes = slot_shapes
        self.result_slot = result_slot
        self.scalar_result = scalar_result
        last = [len(steps)] * len(slot_shapes)
        for i, st in enumerate(steps):
            for b in st.operands:
                if b[0] == "slot":
                    last[b[1]] = i
        self.last_use = last

    def describe(self) -> str:
        """Deterministic text form of the plan, for tests."""
        lines = [f"rules: {rule_log_text(self.rule_log)}",
                 f"output: {self.output_shape}"]
        for i, st in enumerate(self.steps):
            ops = ", ".join(_bind_label(b) for b in st.operands)
            par = f" params={st.params}" if st.params else ""
            lines.append(f"{i:02d}: {st.kernel}({ops}){par} -> slot{st.dest}")
        return "\n".join(lines)


def rule_log_text(rules) -> str:
    """Comma-separated serialisation of a rule log, NONE when empty."""
    return ",".join(rules) if rules else "NONE"


_TFORM_LABEL = {"T": ".T", "diag": ".diag", "vec": ".vec"}


def _bind_label(b) -> str:
    if b[0] == "arr":
        return b[2]
    t = b[2]
    if not t:
        return f"slot{b[1]}"
    if t[0] == "col2":
        return f"slot{b[1]}[:,{t[1]}]"
    if t[0] == "row2":
        return f"slot{b[1]}[{t[1]},:]"
    return f"slot{b[1]}{_TFORM_LABEL[t[0]]}"


def _resolve_direct(node: ExprNode, transposed: bool = False):
    """(array, label, folded) when the node is a leaf optionally under
    transposes and column/row selections, all expressible as a strided
    view of leaf storage; None when any computation is needed.  folded
    reports whether a view or implicit transpose was involved."""
    kind = node.kind
    if kind == "Leaf":
        v = node.value
        if isinstance(v, DenseMatrix):
            arr, label, folded = v.data, f"m{v.id}", False
        else:
            arr, label, folded = v.array, f"view(m{v.base.id})", True
        if transposed:
            return arr.T, label + ".T", True
        return arr, label, folded
    if kind == "Transpose":
        return _resolve_direct(node.children[0], not transposed)
    if kind in ("ColView", "RowView"):
        r = _resolve_direct(node.children[0], False)
        if r is None:
            return None
        arr, label, _ = r
        j = node.index
        if kind == "ColView":
            arr, label = arr[:, j:j + 1], f"{label}[:,{j}]"
        else:
            arr, label = arr[j:j + 1, :], f"{label}[{j},:]"
        if transposed:
            return arr.T, label + ".T", True
        return arr, label, True
    return None


def _classify_square(arr):
    """Structure ladder for a square coefficient matrix.  Emits one
    detect event per positive finding, in the order square, banded,
    upper triangular, lower triangular, symmetric; stops at the first
    solver-relevant hit."""
    n = arr.shape[0]
    col = current_collector()
    if col.active:
        col.detect("SQUARE", f"{n}x{n}")
    info = analyze_structure(arr)
    kl, ku = info.lower_bandwidth, info.upper_bandwidth
    if kl + ku <= max(4, n // 4):
        if col.active:
            col.detect("BAND", f"kl={kl}, ku={ku}")
        return ("band", kl, ku)
    if info.is_upper_triangular:
        if col.active:
            col.detect("TRIU", f"{n}x{n}")
        return ("tri", True)
    if info.is_lower_triangular:
        if col.active:
            col.detect("TRIL", f"{n}x{n}")
        return ("tri", False)
    if info.is_symmetric:
        if col.active:
            col.detect("SYM", f"{n}x{n}")
        return ("sym",)
    return ("gen",)


class _Factor:
    """One factor of a multiplication chain: either still symbolic
    (node set) so structural rules can inspect it, or an already
    computed binding."""

    __slots__ = ("node", "binding", "r", "c")

    def __init__(self, node, binding, r, c):
        self.node = node
        self.binding = binding
        self.r = r
        self.c = c


def _flatten_product(node: ExprNode, out: list) -> None:
    if node.kind == "MatMul":
        _flatten_product(node.children[0], out)
        _flatten_product(node.children[1], out)
    else:
        out.append(node)


class _Builder:
    def __init__(self):
        self.steps = []
        self.rule_log = []
        self.slot_shapes = []

    def _new_slot(self, r: int, c: int) -> int:
        self.slot_shapes.append((r, c))
        return len(self.slot_shapes) - 1

    def _step(self, kernel, operands, params, dest) -> None:
        self.steps.append(KernelCall(kernel, operands, params, dest))

    def _log(self, rule: str, detail: str = "") -> None:
        self.rule_log.append(rule)
        col = current_collector()
        if col.active:
            col.rule(rule, detail)

    # ---- operand helpers ------------------------------------------------

    def _operand(self, node: ExprNode):
        """Any node as a binding: a direct view of leaf storage when
        possible, otherwise a lowered slot."""
        r = _resolve_direct(node)
        if r is not None:
            return ("arr",) + r
        return self.lower(node)

    def _factor_binding(self, f: _Factor):
        if f.binding is not None:
            return f.binding
        return self._operand(f.node)

    def _clean_slot(self, node: ExprNode):
        """Node as an untransformed slot binding, copying if the
        natural binding is a raw array or a transformed slot."""
        b = self._operand(node)
        if b[0] == "slot" and not b[2]:
            return b
        s = infer_shape(node)
        dest = self._new_slot(s.n_rows, s.n_cols)
        self._step("fused_axpby_n", (b,), (1.0,), dest)
        return ("slot", dest, ())

    def _diag_source(self, diag_node: ExprNode):
        """The diagonal of a DiagMat node as a 1-D binding: extracted
        as a view for leaf-rooted children, or as a transform over a
        materialised slot for computed children."""
        ch = diag_node.children[0]
        r = _resolve_direct(ch)
        if r is not None:
            arr, label, folded = r
            rr, cc = arr.shape
            if rr == cc and rr != 1:
                return ("arr", np.diagonal(arr), f"diag({label})", folded)
            if cc == 1:
                return ("arr", arr[:, 0], f"{label}[:,0]", folded)
            return ("arr", arr[0, :], f"{label}[0,:]", folded)
        b = self._clean_slot(ch)
        s = infer_shape(ch)
        if s.n_rows == s.n_cols and s.n_rows != 1:
            return ("slot", b[1], ("diag",))
        return ("slot", b[1], ("vec",))

    # ---- element-wise regions (R1, R2) ----------------------------------

    def _lower_elementwise(self, node: ExprNode):
        terms: list = []

        def collect(n: ExprNode, coeff: float) -> None:
            k = n.kind
            if k == "Add":
                collect(n.children[0], coeff)
                collect(n.children[1], coeff)
            elif k == "Sub":
                collect(n.children[0], coeff)
                collect(n.children[1], -coeff)
            elif k == "ScalarMul":
                collect(n.children[0], coeff * n.scalar)
            else:
                terms.append((coeff, n))

        collect(node, 1.0)
        coeffs = []
        sources = []
        any_fold = False
        for c, t in terms:
            b = self._operand(t)
            if b[0] == "arr" and b[3]:
                any_fold = True
            coeffs.append(c)
            sources.append(b)
        if len(terms) >= 2 or any(c != 1.0 for c in coeffs):
            self._log("R1", f"terms={len(terms)}")
        if any_fold:
            self._log("R2", "reading through views")
        s = infer_shape(node)
        dest = self._new_slot(s.n_rows, s.n_cols)
        self._step("fused_axpby_n", tuple(sources), tuple(coeffs), dest)
        return ("slot", dest, ())

    # ---- multiplication chains (R3, R6, R8, R9) --------------------------

    def _lower_chain(self, node: ExprNode):
        nodes: list = []
        _flatten_product(node, nodes)
        factors = []
        for n in nodes:
            s = infer_shape(n)
            factors.append(_Factor(n, None, s.n_rows, s.n_cols))
        if len(factors) >= 3:
            self._log("R6", f"chain of {len(factors)}")
        self._reduce_chain(factors, 1)
        f = factors[0]
        if f.binding is None:
            return self._operand(f.node)
        return f.binding

    def _reduce_chain(self, factors: list, stop_at: int) -> None:
        """Greedy ordering: repeatedly multiply the adjacent pair whose
        product has the fewest elements, leftmost on ties."""
        while len(factors) > stop_at:
            best = 0
            best_size = factors[0].r * factors[1].c
            for i in range(1, len(factors) - 1):
                size = factors[i].r * factors[i + 1].c
                if size < best_size:
                    best, best_size = i, size
            factors[best:best + 2] = [self._multiply_pair(factors[best],
                                                          factors[best + 1])]

    def _syrk_operand(self, left: _Factor, right: _Factor):
        """Effective a with result a @ a.T when the pair is a dense
        leaf times its own transpose (same storage id); None otherwise."""

        def base(n):
            if n is None:
                return None, False
            if n.kind == "Leaf" and isinstance(n.value, DenseMatrix):
                return n.value, False
            if n.kind == "Transpose":
                c = n.children[0]
                if c.kind == "Leaf" and isinstance(c.value, DenseMatrix):
                    return c.value, True
            return None, False

        ml, tl = base(left.node)
        mr, tr = base(right.node)
        if ml is None or mr is None or ml.id != mr.id or tl == tr:
            return None
        if tl:
            return ("arr", ml.data.T, f"m{ml.id}.T", True)
        return ("arr", ml.data, f"m{ml.id}", False)

    def _multiply_pair(self, left: _Factor, right: _Factor) -> _Factor:
        rr, cc = left.r, right.c
        if left.node is not None and left.node.kind == "Inverse":
            self._log("R9", "inverse-times lowered to solve")
            rhs = self._factor_binding(right)
            dest = self._solve_dispatch(left.node.children[0], rhs, rr, cc,
                                        via_r9=True)
            return _Factor(None, ("slot", dest, ()), rr, cc)
        a = self._syrk_operand(left, right)
        if a is not None:
            self._log("R8", f"{rr}x{a[1].shape[1]}")
            dest = self._new_slot(rr, cc)
            self._step("syrk", (a,), (), dest)
            return _Factor(None, ("slot", dest, ()), rr, cc)
        if left.node is not None and left.node.kind == "DiagMat":
            self._log("R3", "side=left")
            d = self._diag_source(left.node)
            b = self._factor_binding(right)
            dest = self._new_slot(rr, cc)
            self._step("diag_scale", (d, b), ("left",), dest)
            return _Factor(None, ("slot", dest, ()), rr, cc)
        if right.node is not None and right.node.kind == "DiagMat":
            self._log("R3", "side=right")
            d = self._diag_source(right.node)
            b = self._factor_binding(left)
            dest = self._new_slot(rr, cc)
            self._step("diag_scale", (d, b), ("right",), dest)
            return _Factor(None, ("slot", dest, ()), rr, cc)
        a = self._factor_binding(left)
        b = self._factor_binding(right)
        dest = self._new_slot(rr, cc)
        self._step("gemm", (a, b), (), dest)
        return _Factor(None, ("slot", dest, ()), rr, cc)

    # ---- solves (R9 target, R10) -----------------------------------------

    def _solve_dispatch(self, a_node: ExprNode, rhs, n: int, k: int,
                        via_r9: bool) -> int:
        dest = self._new_slot(n, k)
        r = _resolve_direct(a_node)
        if r is None:
            a_bind = self.lower(a_node)
            self._log("R10", "runtime dispatch")
            self._step("lu_solve", (a_bind, rhs), ("runtime",), dest)
            return dest
        a_bind = ("arr",) + r
        cls = _classify_square(r[0])
        if cls[0] == "band":
            self._log("R10:BAND", f"kl={cls[1]}, ku={cls[2]}")
            self._step("band_solve", (a_bind, rhs), (cls[1], cls[2]), dest)
        elif cls[0] == "tri":
            tag = "R10:TRIU" if cls[1] else "R10:TRIL"
            self._log(tag, f"{n}x{n}")
            self._step("triangular_solve", (a_bind, rhs), (cls[1],), dest)
        elif cls[0] == "sym":
            self._log("R10:SYM-DETECTED", f"{n}x{n}")
            self._step("lu_solve", (a_bind, rhs), (), dest)
        else:
            if not via_r9:
                self._log("R10:GEN", f"{n}x{n}")
            self._step("lu_solve", (a_bind, rhs), (), dest)
        return dest

    # ---- scalar reductions (R5, R7) ---------------------------------------

    def _lower_trace(self, node: ExprNode):
        ch = node.children[0]
        dest = self._new_slot(1, 1)
        if ch.kind == "MatMul":
            nodes: list = []
            _flatten_product(ch, nodes)
            factors = []
            for n in nodes:
                s = infer_shape(n)
                factors.append(_Factor(n, None, s.n_rows, s.n_cols))
            if len(factors) >= 3:
                self._log("R6", f"chain of {len(factors)}")
                self._reduce_chain(factors, 2)
            self._log("R5", f"{factors[0].r}x{factors[0].c}")
            a = self._factor_binding(factors[0])
            b = self._factor_binding(factors[1])
            self._step("trace_of_product", (a, b), (), dest)
            return ("slot", dest, ())
        a = self._operand(ch)
        n = infer_shape(ch).n_rows
        eye = np.eye(n)
        self._step("trace_of_product", (a, ("arr", eye, f"identity{n}", False)),
                   (), dest)
        return ("slot", dest, ())

    def _triple_probe(self, ch: ExprNode):
        """Bindings (a, d, c) for a row-vector times diagmat times
        column-vector chain whose pieces are all leaf-rooted."""
        if ch.kind != "MatMul":
            return None
        nodes: list = []
        _flatten_product(ch, nodes)
        if len(nodes) != 3 or nodes[1].kind != "DiagMat":
            return None
        s0, s1, s2 = (infer_shape(n) for n in nodes)
        n = s1.n_rows
        if s0.dims != (1, n) or s2.dims != (n, 1):
            return None
        r0 = _resolve_direct(nodes[0])
        r2 = _resolve_direct(nodes[2])
        rd = _resolve_direct(nodes[1].children[0])
        if r0 is None or r2 is None or rd is None:
            return None
        a = ("arr", r0[0][0, :], f"{r0[1]}[0,:]", True)
        c = ("arr", r2[0][:, 0], f"{r2[1]}[:,0]", True)
        d = self._diag_source(nodes[1])
        return a, d, c, n

    def _lower_as_scalar(self, node: ExprNode):
        probe = self._triple_probe(node.children[0])
        if probe is not None:
            a, d, c, n = probe
            self._log("R7", f"n={n}")
            dest = self._new_slot(1, 1)
            self._step("triple_diag_dot", (a, d, c), (), dest)
            return ("slot", dest, ())
        return self.lower(node.children[0])

    # ---- dispatch ---------------------------------------------------------

    def lower(self, node: ExprNode):
        kind = node.kind
        if kind in ("Add", "Sub", "ScalarMul"):
            return self._lower_elementwise(node)
        if kind in ("Leaf", "Transpose", "ColView", "RowView"):
            r = _resolve_direct(node)
            if r is not None:
                return ("arr",) + r
            inner = self.lower(node.children[0])
            if kind == "Transpose":
                if inner[0] == "slot" and not inner[2]:
                    return ("slot", inner[1], ("T",))
                s = infer_shape(node)
                dest = self._new_slot(s.n_rows, s.n_cols)
                self._step("fused_axpby_n", (_transposed(inner),), (1.0,), dest)
                return ("slot", dest, ())
            if inner[0] != "slot" or inner[2]:
                inner = self._rebind_clean(inner, node.children[0])
            if kind == "ColView":
                return ("slot", inner[1], ("col2", node.index))
            return ("slot", inner[1], ("row2", node.index))
        if kind == "MatMul":
            return self._lower_chain(node)
        if kind == "Solve":
            a_node, b_node = node.children
            rhs = self._operand(b_node)
            s = infer_shape(node)
            dest = self._solve_dispatch(a_node, rhs, s.n_rows, s.n_cols,
                                        via_r9=False)
            return ("slot", dest, ())
        if kind == "Inverse":
            a = self._operand(node.children[0])
            s = infer_shape(node)
            dest = self._new_slot(s.n_rows, s.n_cols)
            self._step("explicit_inverse", (a,), (), dest)
            return ("slot", dest, ())
        if kind == "DiagMat":
            return self._lower_diagmat(node)
        if kind == "Trace":
            return self._lower_trace(node)
        if kind == "AsScalar":
            return self._lower_as_scalar(node)
        raise AssertionError(kind)

    def _rebind_clean(self, binding, node: ExprNode):
        s = infer_shape(node)
        dest = self._new_slot(s.n_rows, s.n_cols)
        self._step("fused_axpby_n", (binding,), (1.0,), dest)
        return ("slot", dest, ())

    def _lower_diagmat(self, node: ExprNode):
        ch = node.children[0]
        n = infer_shape(node).n_rows
        if ch.kind == "MatMul":
            cs = infer_shape(ch)
            if cs.n_rows == cs.n_cols:
                a = self._operand(ch.children[0])
                b = self._operand(ch.children[1])
                self._log("R4", f"{cs.n_rows}x{cs.n_cols}")
                dslot = self._new_slot(n, 1)
                self._step("diag_of_product", (a, b), (), dslot)
                dest = self._new_slot(n, n)
                self._step("diag_materialise", (("slot", dslot, ("vec",)),),
                           (), dest)
                return ("slot", dest, ())
        d = self._diag_source(node)
        dest = self._new_slot(n, n)
        self._step("diag_materialise", (d,), (), dest)
        return ("slot", dest, ())


def _transposed(binding):
    if binding[0] == "arr":
        return ("arr", binding[1].T, binding[2] + ".T", True)
    t = binding[2]
    if t == ("T",):
        return ("slot", binding[1], ())
    return ("slot", binding[1], ("T",))


def rewrite(node: ExprNode) -> Plan:
    """Validate and lower a tree to a plan of kernel calls."""
    shape = validate(node)
    b = _Builder()
    bind = b.lower(node)
    if bind[0] == "arr" or bind[2]:
        dest = b._new_slot(shape.n_rows, shape.n_cols)
        b._step("fused_axpby_n", (bind,), (1.0,), dest)
        if bind[0] == "arr" and bind[3]:
            b._log("R2", "reading through views")
        bind = ("slot", dest, ())
    return Plan(b.steps, shape, b.rule_log, b.slot_shapes, bind[1],
                shape.is_scalar)


def _resolve(b, slots):
    if b[0] == "arr":
        return b[1]
    s = slots[b[1]].data
    t = b[2]
    if not t:
        return s
    op = t[0]
    if op == "T":
        return s.T
    if op == "diag":
        return np.diagonal(s)
    if op == "vec":
        return s[:, 0] if s.shape[1] == 1 else s[0, :]
    if op == "col2":
        return s[:, t[1]:t[1] + 1]
    return s[t[1]:t[1] + 1, :]


def _runtime_solve(a, x) -> None:
    """Structure dispatch for a coefficient matrix only known at
    execution time (a computed subexpression)."""
    cls = _classify_square(a)
    col = current_collector()
    if cls[0] == "band":
        if col.active:
            col.rule("R10:BAND", f"kl={cls[1]}, ku={cls[2]}")
        kernels.band_solve_into(a, x, cls[1], cls[2])
    elif cls[0] == "tri":
        if col.active:
            col.rule("R10:TRIU" if cls[1] else "R10:TRIL", "")
        kernels.triangular_solve_into(a, x, cls[1])
    else:
        if cls[0] == "sym" and col.active:
            col.rule("R10:SYM-DETECTED", "")
        kernels.lu_solve_into(a, x)


def execute(plan: Plan):
    """Run a plan: allocate slots on first write, free each temporary
    after its last use, return the result matrix (or float for
    scalar-shaped plans)."""
    slots: list = [None] * len(plan.slot_shapes)
    last_use = plan.last_use
    result_slot = plan.result_slot
    for i, st in enumerate(plan.steps):
        r, c = plan.slot_shapes[st.dest]
        dest_m = _alloc(r, c, role="result" if st.dest == result_slot else "temp")
        slots[st.dest] = dest_m
        out = dest_m.data
        k = st.kernel
        ops = st.operands
        if k == "fused_axpby_n":
            kernels.fused_axpby_n(st.params,
                                  [_resolve(b, slots) for b in ops], out)
        elif k == "gemm":
            kernels.gemm(_resolve(ops[0], slots), _resolve(ops[1], slots), out)
        elif k == "syrk":
            kernels.syrk(_resolve(ops[0], slots), out)
        elif k == "diag_scale":
            kernels.diag_scale(_resolve(ops[0], slots), _resolve(ops[1], slots),
                               st.params[0], out)
        elif k == "diag_of_product":
            kernels.diag_of_product(_resolve(ops[0], slots),
                                    _resolve(ops[1], slots), out[:, 0])
        elif k == "diag_materialise":
            kernels.diag_materialise(_resolve(ops[0], slots), out)
        elif k == "trace_of_product":
            out[0, 0] = kernels.trace_of_product(_resolve(ops[0], slots),
                                                 _resolve(ops[1], slots))
        elif k == "triple_diag_dot":
            out[0, 0] = kernels.triple_diag_dot(_resolve(ops[0], slots),
                                                _resolve(ops[1], slots),
                                                _resolve(ops[2], slots))
        elif k == "transpose_copy":
            kernels.transpose_copy(_resolve(ops[0], slots), out)
        elif k == "explicit_inverse":
            kernels.explicit_inverse_into(_resolve(ops[0], slots), out)
        elif k == "lu_solve":
            a = _resolve(ops[0], slots)
            np.copyto(out, _resolve(ops[1], slots))
            if st.params and st.params[0] == "runtime":
                _runtime_solve(a, out)
            else:
                kernels.lu_solve_into(a, out)
        elif k == "band_solve":
            a = _resolve(ops[0], slots)
            np.copyto(out, _resolve(ops[1], slots))
            kernels.band_solve_into(a, out, st.params[0], st.params[1])
        elif k == "triangular_solve":
            a = _resolve(ops[0], slots)
            np.copyto(out, _resolve(ops[1], slots))
            kernels.triangular_solve_into(a, out, st.params[0])
        else:
            raise AssertionError(k)
        for b in ops:
            if b[0] == "slot" and last_use[b[1]] == i and b[1] != result_slot:
                m = slots[b[1]]
                if m is not None:
                    _free(m)
                    slots[b[1]] = None
    res = slots[result_slot]
    if plan.scalar_result:
        return float(res.data[0, 0])
    return res


def evaluate(node: ExprNode):
    """Validate, rewrite and execute a tree in one call."""
    return execute(rewrite(node))
