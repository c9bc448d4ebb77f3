"""A register machine over the concatenated prompt matrix.

The machine state is a single dense matrix ``A_cat = [A_append | A_input]``:
the encoded context occupies the right-hand columns and a bank of scratch
registers (B1..B14, plus the running transition estimate in dual mode) is
prepended on the left. Registers are named rectangular regions; programs
are flat sequences of five opcodes:

    MUL dst src1 src2          dst <- M(src1) @ M(src2)
    DIV dst src divisor        dst <- M(src) / scalar   (divisor is 1x1)
    AFF dst src1 src2 w1 w2    dst <- w1*M(src1) + w2*M(src2)
    TRANSPOSE dst src          dst <- M(src)^T
    MAP dst src                length-n vector  -> block regressor (n x n^2)
                               length-n^2 vector -> unvec into n x n

MUL additionally accepts a 1x1 operand on either side as a scalar scale,
which the filter programs use to scale gain vectors by the innovation.
An operand may carry a transpose flag (``h'``) or a leading sub-shape
(``B8[2x1]``), because the same physical register is legitimately used
with different shapes at different points of a program.

``compile_kf_program`` emits the scalar-measurement Kalman recursion and
``compile_dual_kf_program`` the joint state/transition recursion; both are
checked instruction-for-instruction against the direct implementations in
:mod:`ickalman.filters`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .codec import ContextMatrix
from .errors import ConfigurationError, ProgramError, TapeRuntimeError

__all__ = [
    "Instruction",
    "Operand",
    "Program",
    "Region",
    "StepSnapshot",
    "Tape",
    "build_tape",
    "compile_dual_kf_program",
    "compile_kf_program",
    "exec_aff",
    "exec_div",
    "exec_map",
    "exec_mul",
    "exec_transpose",
    "parse_assembly",
    "run_program",
    "run_steps",
    "to_assembly",
    "validate_program",
]

DIV_FLOOR = 1e-14


@dataclass(frozen=True)
class Region:
    """A rectangular register: half-open row and column ranges in A_cat."""

    rows: tuple[int, int]
    cols: tuple[int, int]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows[1] - self.rows[0], self.cols[1] - self.cols[0])


@dataclass(frozen=True)
class Operand:
    """A register use: optional leading sub-shape and transpose flag."""

    name: str
    shape: tuple[int, int] | None = None
    transpose: bool = False

    def effective_shape(self, region: Region) -> tuple[int, int]:
        shape = self.shape if self.shape is not None else region.shape
        if self.shape is not None:
            rr, cc = region.shape
            if self.shape[0] > rr or self.shape[1] > cc:
                raise ProgramError(
                    f"sub-shape {self.shape} exceeds register {self.name} "
                    f"of shape {region.shape}")
        return (shape[1], shape[0]) if self.transpose else shape

    def __str__(self) -> str:
        s = self.name
        if self.shape is not None:
            s += f"[{self.shape[0]}x{self.shape[1]}]"
        if self.transpose:
            s += "'"
        return s


_OPERAND_RE = re.compile(r"^(?P<name>[\w.]+)(?:\[(?P<r>\d+)x(?P<c>\d+)\])?(?P<t>')?$")


def _parse_operand(token: str) -> Operand:
    m = _OPERAND_RE.match(token)
    if not m:
        raise ProgramError(f"malformed operand {token!r}")
    shape = None
    if m.group("r"):
        shape = (int(m.group("r")), int(m.group("c")))
    return Operand(name=m.group("name"), shape=shape, transpose=bool(m.group("t")))


@dataclass(frozen=True)
class Instruction:
    opcode: str
    dst: Operand
    srcs: tuple[Operand, ...]
    w1: float | np.ndarray | None = None
    w2: float | np.ndarray | None = None


@dataclass(frozen=True)
class Program:
    instructions: tuple[Instruction, ...]
    n: int
    N: int
    mode: str
    step_boundaries: tuple[int, ...] = ()   # index one past each step's last instruction


@dataclass
class Tape:
    a_cat: np.ndarray
    layout: dict[str, Region]
    append_cols: int
    n: int
    N: int
    mode: str

    def region(self, name: str) -> Region:
        try:
            return self.layout[name]
        except KeyError:
            raise ProgramError(f"unknown register {name!r}") from None

    def read(self, operand: Operand | str) -> np.ndarray:
        if isinstance(operand, str):
            operand = Operand(operand)
        reg = self.region(operand.name)
        block = self.a_cat[reg.rows[0]:reg.rows[1], reg.cols[0]:reg.cols[1]]
        if operand.shape is not None:
            block = block[:operand.shape[0], :operand.shape[1]]
        return block.T.copy() if operand.transpose else block.copy()

    def write(self, operand: Operand | str, value: np.ndarray) -> None:
        if isinstance(operand, str):
            operand = Operand(operand)
        reg = self.region(operand.name)
        value = np.asarray(value, dtype=np.float64)
        shape = operand.shape if operand.shape is not None else reg.shape
        if value.shape != shape:
            raise ProgramError(
                f"cannot write shape {value.shape} into {operand} "
                f"(expected {shape})")
        r0, c0 = reg.rows[0], reg.cols[0]
        self.a_cat[r0:r0 + shape[0], c0:c0 + shape[1]] = value

    @property
    def a_input(self) -> np.ndarray:
        return self.a_cat[:, self.append_cols:]


# ---------------------------------------------------------------------------
# Layout construction
# ---------------------------------------------------------------------------

def _append_registers(n: int, mode: str) -> list[tuple[str, int, int]]:
    """(name, rows, cols) for each scratch register, in allocation order."""
    regs = [("B1", n, n), ("B2", n, n), ("B3", 1, n), ("B4", n, 1),
            ("B5", 1, 1), ("B6", 1, 1), ("B7", 1, 1),
            ("B8", n * n if mode == "dual" else n, 1), ("B9", n, n)]
    if mode == "dual":
        nn = n * n
        regs += [("B10", n, nn), ("B11", 1, nn), ("B12", nn, nn),
                 ("B13", nn, 1), ("B14", nn, nn), ("B15", n, 1),
                 ("B16", 1, 1), ("fhat", nn, 1), ("F", n, n)]
    return regs


def build_layout(n: int, N: int, mode: str) -> tuple[dict[str, Region], int, int]:
    """The register table for (n, N, mode): returns (layout, rows, append_cols)."""
    if mode not in ("kf", "dual"):
        raise ConfigurationError(f"mode must be 'kf' or 'dual', got {mode!r}")
    rows = n + 1 if mode == "kf" else max(n + 1, n * n)
    layout: dict[str, Region] = {}
    col = 0
    for name, r, c in _append_registers(n, mode):
        layout[name] = Region(rows=(0, r), cols=(col, col + c))
        col += c
    append_cols = col

    # Input-side registers, shifted by the append width.
    def incol(c):
        return append_cols + c

    if mode == "kf":
        layout["F"] = Region(rows=(1, n + 1), cols=(incol(0), incol(n)))
        layout["Q"] = Region(rows=(1, n + 1), cols=(incol(n), incol(2 * n)))
        sig = 2 * n
    else:
        layout["Q"] = Region(rows=(1, n + 1), cols=(incol(0), incol(n)))
        sig = n
    layout["sigma"] = Region(rows=(0, 1), cols=(incol(sig), incol(sig + 1)))
    # The initial state estimate is read from the zero block under sigma^2.
    layout["x0"] = Region(rows=(1, n + 1), cols=(incol(sig), incol(sig + 1)))
    for t in range(1, N + 1):
        ch = sig + 2 * t - 1
        layout[f"h.{t}"] = Region(rows=(1, n + 1), cols=(incol(ch), incol(ch + 1)))
        layout[f"y.{t}"] = Region(rows=(0, 1), cols=(incol(ch + 1), incol(ch + 2)))
        layout[f"xhat.{t}"] = Region(rows=(1, n + 1), cols=(incol(ch + 1), incol(ch + 2)))
    return layout, rows, append_cols


def build_tape(ctx: ContextMatrix, mode: str) -> Tape:
    """Assemble a tape around an encoded context.

    ``kf`` mode consumes a ``scalar`` context; ``dual`` mode consumes a
    ``scalar-no-params`` context. B1 (the state covariance buffer) starts
    as identity; in dual mode the transition register starts as identity,
    its vectorization seeds the ``fhat`` register, and B12 (the transition
    covariance) starts as the n^2 identity.
    """
    expected_scheme = "scalar" if mode == "kf" else "scalar-no-params"
    if ctx.scheme != expected_scheme:
        raise ConfigurationError(
            f"{mode} mode requires a {expected_scheme!r} context, "
            f"got {ctx.scheme!r}")
    n, N = ctx.n, ctx.N
    layout, rows, append_cols = build_layout(n, N, mode)
    a_cat = np.zeros((rows, append_cols + ctx.data.shape[1]))
    a_cat[:ctx.data.shape[0], append_cols:] = ctx.data
    tape = Tape(a_cat=a_cat, layout=layout, append_cols=append_cols,
                n=n, N=N, mode=mode)
    tape.write("B1", np.eye(n))
    if mode == "dual":
        tape.write("B12", np.eye(n * n))
        tape.write("fhat", np.eye(n).reshape(-1, 1))
        tape.write("F", np.eye(n))
    return tape


def layout_table(tape: Tape) -> str:
    """Human-readable register table (rows x cols ranges per register)."""
    lines = [f"# tape layout: n={tape.n} N={tape.N} mode={tape.mode} "
             f"append_cols={tape.append_cols}"]
    for name, reg in tape.layout.items():
        lines.append(f"{name:10s} rows {reg.rows[0]}:{reg.rows[1]:<4d} "
                     f"cols {reg.cols[0]}:{reg.cols[1]:<4d} shape {reg.shape}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

def _effective(tape: Tape, op: Operand) -> tuple[int, int]:
    return op.effective_shape(tape.region(op.name))


def _check_instruction(tape_like, instr: Instruction, index: int) -> None:
    """Static shape conformance for one instruction against a layout."""
    def fail(msg):
        raise ProgramError(f"instruction {index} ({instr.opcode} {instr.dst}): {msg}")

    if instr.dst.transpose:
        fail("destination operands cannot be transposed")
    try:
        dshape = instr.dst.effective_shape(tape_like.region(instr.dst.name))
        sshapes = [s.effective_shape(tape_like.region(s.name)) for s in instr.srcs]
    except ProgramError as exc:
        fail(str(exc))

    op = instr.opcode
    if op == "MUL":
        a, b = sshapes
        if a == (1, 1):
            out = b
        elif b == (1, 1):
            out = a
        elif a[1] == b[0]:
            out = (a[0], b[1])
        else:
            fail(f"cannot multiply {a} by {b}")
        if out != dshape:
            fail(f"product shape {out} does not match destination {dshape}")
    elif op == "DIV":
        src, div = sshapes
        if div != (1, 1):
            fail(f"divisor must be 1x1, got {div}")
        if src != dshape:
            fail(f"source shape {src} does not match destination {dshape}")
    elif op == "AFF":
        for w, s in ((instr.w1, sshapes[0]), (instr.w2, sshapes[1])):
            if isinstance(w, np.ndarray):
                if w.shape[1] != s[0] or (w.shape[0], s[1]) != dshape:
                    fail(f"weight {w.shape} applied to {s} does not give {dshape}")
            elif s != dshape:
                fail(f"source shape {s} does not match destination {dshape}")
    elif op == "TRANSPOSE":
        (src,) = sshapes
        if (src[1], src[0]) != dshape:
            fail(f"transpose of {src} does not match destination {dshape}")
    elif op == "MAP":
        (src,) = sshapes
        k = src[0] * src[1]
        if min(src) != 1:
            fail(f"MAP source must be a vector, got {src}")
        n = tape_like.n if hasattr(tape_like, "n") else None
        if n is not None:
            if k == n and dshape != (n, n * n):
                fail(f"MAP of a length-{n} vector must write an {n}x{n * n} "
                     f"region, got {dshape}")
            elif k == n * n and k != n and dshape != (n, n):
                fail(f"MAP of a length-{k} vector must write an {n}x{n} "
                     f"region, got {dshape}")
            elif k not in (n, n * n):
                fail(f"MAP source length {k} is neither n nor n^2")
    else:
        fail(f"unknown opcode {op!r}")


def validate_program(tape: Tape, program: Program) -> None:
    """Shape-check every instruction; raises :class:`ProgramError` with the
    index of the first offending instruction."""
    for i, instr in enumerate(program.instructions):
        _check_instruction(tape, instr, i)


def _apply_weight(w, block: np.ndarray) -> np.ndarray:
    if w is None:
        return block
    if isinstance(w, np.ndarray):
        return w @ block
    return float(w) * block


def _execute(tape: Tape, instr: Instruction, index: int) -> np.ndarray:
    """Run one instruction; returns the value written to the destination."""
    op = instr.opcode
    if op == "MUL":
        a = tape.read(instr.srcs[0])
        b = tape.read(instr.srcs[1])
        if a.shape == (1, 1):
            out = a[0, 0] * b
        elif b.shape == (1, 1):
            out = a * b[0, 0]
        else:
            out = a @ b
    elif op == "DIV":
        a = tape.read(instr.srcs[0])
        d = tape.read(instr.srcs[1])[0, 0]
        if abs(d) <= DIV_FLOOR:
            raise TapeRuntimeError(
                f"instruction {index}: division by near-zero scalar {d:.3e}")
        out = a / d
    elif op == "AFF":
        out = (_apply_weight(instr.w1, tape.read(instr.srcs[0]))
               + _apply_weight(instr.w2, tape.read(instr.srcs[1])))
    elif op == "TRANSPOSE":
        out = tape.read(instr.srcs[0]).T
    elif op == "MAP":
        v = tape.read(instr.srcs[0]).reshape(-1)
        n = tape.n
        if v.shape[0] == n:    # for n = 1 the two readings coincide
            out = np.kron(np.eye(n), v[None, :])
        else:
            out = v.reshape(n, n)
    else:
        raise ProgramError(f"instruction {index}: unknown opcode {op!r}")
    tape.write(instr.dst, out)
    return out


def run_program(tape: Tape, program: Program, trace: bool = False):
    """Execute a validated program in place.

    Returns the tape, or ``(tape, trace)`` where trace holds one
    ``(index, opcode, dst_name, value)`` entry per instruction.
    """
    validate_program(tape, program)
    entries = [] if trace else None
    for i, instr in enumerate(program.instructions):
        value = _execute(tape, instr, i)
        if trace:
            entries.append((i, instr.opcode, instr.dst.name, value.copy()))
    return (tape, entries) if trace else tape


# Convenience single-instruction entry points (argument order: sources, then
# destination, matching MUL(I, J, K) etc.).

def exec_mul(tape, I, J, K):
    return _exec_one(tape, Instruction("MUL", _op(K), (_op(I), _op(J))))


def exec_div(tape, I, j, K):
    return _exec_one(tape, Instruction("DIV", _op(K), (_op(I), _op(j))))


def exec_aff(tape, I, J, K, W1, W2):
    w1 = W1 if np.isscalar(W1) else np.asarray(W1, dtype=np.float64)
    w2 = W2 if np.isscalar(W2) else np.asarray(W2, dtype=np.float64)
    return _exec_one(tape, Instruction("AFF", _op(K), (_op(I), _op(J)), w1, w2))


def exec_transpose(tape, I, J):
    return _exec_one(tape, Instruction("TRANSPOSE", _op(J), (_op(I),)))


def exec_map(tape, I, J):
    return _exec_one(tape, Instruction("MAP", _op(J), (_op(I),)))


def _op(x) -> Operand:
    return x if isinstance(x, Operand) else Operand(x)


def _exec_one(tape: Tape, instr: Instruction):
    _check_instruction(tape, instr, 0)
    _execute(tape, instr, 0)
    return tape


# ---------------------------------------------------------------------------
# Program compilation
# ---------------------------------------------------------------------------

def _state_step(n: int, i: int, mode: str) -> list[Instruction]:
    """One predict/update step of the scalar-measurement filter recursion."""
    xprev = "x0" if i == 1 else f"xhat.{i - 1}"
    xnext = f"xhat.{i}"
    h, y = f"h.{i}", f"y.{i}"
    o = _op
    # In dual mode B8 is n^2 x 1 (it also holds the transition-filter gain
    # step); the state recursion uses its leading n x 1 block.
    b8 = Operand("B8") if mode == "kf" else Operand("B8", shape=(n, 1))
    return [
        Instruction("TRANSPOSE", o("B2"), (o("F"),)),
        Instruction("MUL", o(xnext), (o("F"), o(xprev))),
        Instruction("MUL", o("B1"), (o("F"), o("B1"))),
        Instruction("MUL", o("B1"), (o("B1"), o("B2"))),
        Instruction("AFF", o("B1"), (o("B1"), o("Q")), 1.0, 1.0),
        Instruction("TRANSPOSE", o("B3"), (o(h),)),
        Instruction("MUL", o("B4"), (o("B1"), o(h))),
        Instruction("MUL", o("B5"), (o("B3"), o("B4"))),
        Instruction("AFF", o("B6"), (o("B5"), o("sigma")), 1.0, 1.0),
        Instruction("DIV", o("B4"), (o("B4"), o("B6"))),
        Instruction("MUL", o("B7"), (Operand(h, transpose=True), o(xnext))),
        Instruction("AFF", o("B7"), (o(y), o("B7")), 1.0, -1.0),
        Instruction("MUL", b8, (o("B7"), o("B4"))),
        Instruction("AFF", o(xnext), (o(xnext), b8), 1.0, 1.0),
        Instruction("MUL", o("B9"), (o("B4"), o("B3"))),
        Instruction("MUL", o("B9"), (o("B9"), o("B1"))),
        Instruction("AFF", o("B1"), (o("B1"), o("B9")), 1.0, -1.0),
    ]


def _f_step(n: int, i: int) -> list[Instruction]:
    """The transition-estimate update appended to each dual-mode step."""
    xprev = "x0" if i == 1 else f"xhat.{i - 1}"
    h = f"h.{i}"
    o = _op
    return [
        Instruction("MAP", o("B10"), (o(xprev),)),
        Instruction("MUL", o("B11"), (o("B3"), o("B10"))),
        Instruction("TRANSPOSE", o("B13"), (o("B11"),)),
        Instruction("MUL", o("B11"), (o("B11"), o("B12"))),
        Instruction("MUL", o("B5"), (o("B11"), o("B13"))),
        Instruction("MUL", o("B13"), (o("B12"), o("B13"))),
        Instruction("AFF", o("B6"), (o("B5"), o("sigma")), 1.0, 1.0),
        # Measurement noise seen by the transition filter is h Q h^T + sigma^2.
        Instruction("MUL", o("B15"), (o("Q"), o(h))),
        Instruction("MUL", o("B16"), (Operand(h, transpose=True), o("B15"))),
        Instruction("AFF", o("B6"), (o("B6"), o("B16")), 1.0, 1.0),
        Instruction("DIV", o("B13"), (o("B13"), o("B6"))),
        Instruction("MUL", o("B8"), (o("B7"), o("B13"))),
        Instruction("AFF", o("fhat"), (o("fhat"), o("B8")), 1.0, 1.0),
        Instruction("MUL", o("B11"), (o("B3"), o("B10"))),
        Instruction("MUL", o("B14"), (o("B13"), o("B11"))),
        Instruction("MUL", o("B14"), (o("B14"), o("B12"))),
        Instruction("AFF", o("B12"), (o("B12"), o("B14")), 1.0, -1.0),
        Instruction("MAP", o("F"), (o("fhat"),)),
    ]


def compile_kf_program(n: int, N: int) -> Program:
    """The filter recursion as a flat tape program over a ``kf`` layout."""
    if n < 1 or N < 1:
        raise ConfigurationError(f"need n >= 1 and N >= 1, got n={n}, N={N}")
    instructions: list[Instruction] = []
    boundaries = []
    for i in range(1, N + 1):
        instructions.extend(_state_step(n, i, "kf"))
        boundaries.append(len(instructions))
    return Program(instructions=tuple(instructions), n=n, N=N, mode="kf",
                   step_boundaries=tuple(boundaries))


def compile_dual_kf_program(n: int, N: int, with_f_update: bool = True) -> Program:
    """The joint state/transition recursion over a ``dual`` layout.

    With ``with_f_update=False`` only the state steps are emitted and the
    transition register keeps its injected contents, which reduces the
    program to the plain filter recursion.
    """
    if n < 1 or N < 1:
        raise ConfigurationError(f"need n >= 1 and N >= 1, got n={n}, N={N}")
    instructions: list[Instruction] = []
    boundaries = []
    for i in range(1, N + 1):
        instructions.extend(_state_step(n, i, "dual"))
        if with_f_update:
            instructions.extend(_f_step(n, i))
        boundaries.append(len(instructions))
    return Program(instructions=tuple(instructions), n=n, N=N, mode="dual",
                   step_boundaries=tuple(boundaries))


@dataclass
class StepSnapshot:
    """Register contents captured at the end of one program step."""

    step: int
    x_hat: np.ndarray
    P: np.ndarray
    y_pred: float | None = None
    F_hat: np.ndarray | None = None
    f_hat: np.ndarray | None = None
    P_f: np.ndarray | None = None


def run_steps(tape: Tape, program: Program) -> list[StepSnapshot]:
    """Execute a program, capturing per-step filter state.

    ``y_pred`` is the one-step observation prediction: the first value each
    step writes into B7, before the innovation overwrites it.
    """
    validate_program(tape, program)
    snapshots: list[StepSnapshot] = []
    boundaries = set(program.step_boundaries)
    step = 0
    y_pred = None
    for i, instr in enumerate(program.instructions):
        value = _execute(tape, instr, i)
        if instr.opcode == "MUL" and instr.dst.name == "B7":
            y_pred = float(value[0, 0])
        if i + 1 in boundaries:
            step += 1
            snap = StepSnapshot(
                step=step,
                x_hat=tape.read(f"xhat.{step}").reshape(-1),
                P=tape.read("B1"),
                y_pred=y_pred,
            )
            if program.mode == "dual":
                snap.F_hat = tape.read("F")
                snap.f_hat = tape.read("fhat").reshape(-1)
                snap.P_f = tape.read("B12")
            snapshots.append(snap)
            y_pred = None
    return snapshots


# ---------------------------------------------------------------------------
# Assembly serialization
# ---------------------------------------------------------------------------

def _w_str(w) -> str:
    if isinstance(w, np.ndarray):
        raise ConfigurationError("matrix weights are not representable in "
                                 "assembly; compiled programs use scalars")
    return repr(float(w))


def to_assembly(program: Program) -> str:
    """One instruction per line: ``OPCODE dst src1 [src2] [w1 w2]``."""
    lines = [f"# mode={program.mode} n={program.n} N={program.N}"]
    boundaries = set(program.step_boundaries)
    step = 1
    lines.append(f"# step {step}")
    for i, ins in enumerate(program.instructions):
        parts = [ins.opcode, str(ins.dst)] + [str(s) for s in ins.srcs]
        if ins.opcode == "AFF":
            parts += [_w_str(ins.w1), _w_str(ins.w2)]
        lines.append(" ".join(parts))
        if i + 1 in boundaries and i + 1 < len(program.instructions):
            step += 1
            lines.append(f"# step {step}")
    return "\n".join(lines) + "\n"


def parse_assembly(text: str) -> tuple[Instruction, ...]:
    """Parse the output of :func:`to_assembly` back into instructions."""
    instructions = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        opcode = tokens[0].upper()
        try:
            if opcode == "AFF":
                dst, s1, s2, w1, w2 = tokens[1:]
                instructions.append(Instruction(
                    "AFF", _parse_operand(dst),
                    (_parse_operand(s1), _parse_operand(s2)),
                    float(w1), float(w2)))
            elif opcode in ("MUL", "DIV"):
                dst, s1, s2 = tokens[1:]
                instructions.append(Instruction(
                    opcode, _parse_operand(dst),
                    (_parse_operand(s1), _parse_operand(s2))))
            elif opcode in ("TRANSPOSE", "MAP"):
                dst, s1 = tokens[1:]
                instructions.append(Instruction(
                    opcode, _parse_operand(dst), (_parse_operand(s1),)))
            else:
                raise ValueError(f"unknown opcode {opcode!r}")
        except ValueError as exc:
            raise ProgramError(f"line {lineno}: {exc}") from None
    return tuple(instructions)
