"""Talk SMT-LIB2 to an external solver over stdin/stdout.

Two strategies find the minimum of the encoding's ``total_cost``:

* native: ``(minimize ...)`` followed by one ``(check-sat)``, for solvers that
  implement the optimisation extension (Z3);
* bound tightening: plain ``(check-sat)`` calls under ``(push)``/``(pop)`` with an
  asserted upper bound, bisecting on the objective until the gap is one unit.

Replies are read on a helper thread so that every query honours the overall
deadline; when the deadline passes the process is killed and the best model
seen so far is returned.
"""

from __future__ import annotations

import enum
import logging
import os
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from ..cost_model import DerivedConfig
from ..errors import SolverError, SolverUnavailable
from .encode import Encoding

log = logging.getLogger(__name__)

DEFAULT_SOLVER = ("z3", "-in")
SOLVER_ENV = "PROVESIZER_SOLVER"
NATIVE_MINIMIZE_SOLVERS = ("z3",)


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    TIMEOUT = "timeout"
    SOLVER_ERROR = "solver_error"


@dataclass
class SolverOutcome:
    status: Status
    config: Optional[DerivedConfig] = None
    objective_usd: Optional[float] = None
    solve_time_s: float = 0.0
    solver_identity: str = ""
    detail: str = ""


# --- s-expressions -----------------------------------------------------------


def tokenize(text: str) -> list[str]:
    tokens, i, n = [], 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            tokens.append(c)
            i += 1
        elif c == '"':
            j = i + 1
            while j < n:
                if text[j] == '"':
                    if j + 1 < n and text[j + 1] == '"':
                        j += 2
                        continue
                    break
                j += 1
            tokens.append(text[i:j + 1])
            i = j + 1
        elif c == "|":
            j = text.index("|", i + 1)
            tokens.append(text[i + 1:j])
            i = j + 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in '()";':
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


def parse_sexpr(text: str):
    tokens = tokenize(text)
    if not tokens:
        raise SolverError("empty reply")
    pos = 0

    def walk():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            items = []
            while tokens[pos] != ")":
                items.append(walk())
            pos += 1
            return items
        if tok == ")":
            raise SolverError("unbalanced ')' in reply")
        return tok

    try:
        value = walk()
    except IndexError:
        raise SolverError(f"truncated reply: {text!r}") from None
    if pos != len(tokens):
        raise SolverError(f"trailing tokens in reply: {text!r}")
    return value


def term_to_int(term) -> int:
    """Read an integer value term: ``5`` or ``(- 5)``."""
    if isinstance(term, str):
        return int(term)
    if isinstance(term, list) and len(term) == 2 and term[0] == "-":
        return -term_to_int(term[1])
    raise SolverError(f"expected an integer value, got {term!r}")


def parse_values(reply) -> dict[str, int]:
    if not isinstance(reply, list):
        raise SolverError(f"malformed get-value reply: {reply!r}")
    out = {}
    for binding in reply:
        if not (isinstance(binding, list) and len(binding) == 2 and isinstance(binding[0], str)):
            raise SolverError(f"malformed value binding {binding!r}")
        out[binding[0]] = term_to_int(binding[1])
    return out


# --- process -----------------------------------------------------------------


class _Timeout(Exception):
    pass


def resolve_command(command: Union[str, Sequence[str], None]) -> list[str]:
    """Solver argv from an explicit command, ``$PROVESIZER_SOLVER``, or the default."""
    if command is None:
        command = os.environ.get(SOLVER_ENV) or list(DEFAULT_SOLVER)
    if isinstance(command, str):
        command = shlex.split(command)
    return list(command)


class SolverProcess:
    def __init__(self, argv: Sequence[str], deadline: float):
        self.argv = list(argv)
        self.deadline = deadline
        try:
            self.proc = subprocess.Popen(self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                         stderr=subprocess.DEVNULL, text=True, bufsize=1)
        except OSError as exc:
            raise SolverUnavailable(f"cannot start solver {self.argv!r}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def send(self, text: str):
        try:
            self.proc.stdin.write(text if text.endswith("\n") else text + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise SolverError(f"solver closed its input: {exc}") from exc

    def read(self):
        """Read one complete reply (atom or balanced s-expression)."""
        buf, depth = [], 0
        while True:
            remaining = self.deadline - time.monotonic()
            if remaining <= 0:
                raise _Timeout()
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                raise _Timeout() from None
            if line is None:
                raise SolverError("solver exited: " + "".join(buf).strip())
            if not buf and not line.strip():
                continue
            buf.append(line)
            for tok in tokenize(line):
                depth += tok == "("
                depth -= tok == ")"
            if depth <= 0:
                break
        text = "".join(buf).strip()
        reply = parse_sexpr(text)
        if isinstance(reply, list) and reply and reply[0] == "error":
            raise SolverError(f"solver error: {' '.join(map(str, reply[1:]))}")
        return reply

    def query(self, text: str):
        self.send(text)
        return self.read()

    def check_sat(self) -> str:
        reply = self.query("(check-sat)")
        if reply not in ("sat", "unsat", "unknown"):
            raise SolverError(f"unexpected check-sat reply {reply!r}")
        return reply

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.write("(exit)\n")
                self.proc.stdin.flush()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=1)
            except subprocess.TimeoutExpired:
                self.kill()
        self._reader.join(timeout=1)

    def kill(self):
        if self.proc.poll() is None:
            self.proc.kill()
            self.proc.wait()


def _info(proc: SolverProcess, key: str) -> str:
    reply = proc.query(f"(get-info :{key})")
    if isinstance(reply, list) and len(reply) >= 2:
        return str(reply[1]).strip('"')
    return ""


def _option_command(opt: str) -> str:
    opt = opt.strip()
    return opt if opt.startswith("(") else f"(set-option {opt})"


def solve(encoding: Encoding, solver_cmd: Union[str, Sequence[str], None] = None, timeout_s: float = 6000.0,
          native_minimize: Optional[bool] = None, options: Sequence[str] = ()) -> SolverOutcome:
    """Minimise the encoding's objective with an external solver.

    ``native_minimize=None`` uses ``(minimize ...)`` only for solvers known to
    support it. Raises ``SolverUnavailable`` if the executable cannot be started;
    other failures come back as ``Status.SOLVER_ERROR``.
    """
    start = time.monotonic()
    deadline = start + max(timeout_s, 0.0)
    argv = resolve_command(solver_cmd)
    proc = SolverProcess(argv, deadline)
    identity = ""
    best: Optional[dict[str, int]] = None
    symbols = [encoding.variable_names[f] for f in ("n_super", "n_batch", "n_bundle", "batch_epoch",
                                                    "bundle_epoch", "total_cost")]
    get_value = f"(get-value ({' '.join(symbols)}))"
    objective = encoding.variable_names["total_cost"]

    def outcome(status: Status, detail: str = "") -> SolverOutcome:
        return SolverOutcome(
            status=status,
            config=encoding.decode(best) if best is not None else None,
            objective_usd=encoding.objective_usd(best) if best is not None else None,
            solve_time_s=time.monotonic() - start,
            solver_identity=identity,
            detail=detail,
        )

    try:
        proc.send("(set-option :print-success false)")
        proc.send("(set-option :produce-models true)")
        for opt in options:
            proc.send(_option_command(opt))
        name = _info(proc, "name")
        identity = " ".join(filter(None, [name, _info(proc, "version")]))
        use_native = native_minimize
        if use_native is None:
            use_native = name.lower() in NATIVE_MINIMIZE_SOLVERS
        proc.send(encoding.text)

        if use_native:
            proc.send(f"(minimize {objective})")
            answer = proc.check_sat()
            if answer == "unsat":
                return outcome(Status.INFEASIBLE)
            if answer == "unknown":
                return outcome(Status.SOLVER_ERROR, "solver answered unknown")
            best = parse_values(proc.query(get_value))
            return outcome(Status.OPTIMAL)

        answer = proc.check_sat()
        if answer == "unsat":
            return outcome(Status.INFEASIBLE)
        if answer == "unknown":
            return outcome(Status.SOLVER_ERROR, "solver answered unknown")
        best = parse_values(proc.query(get_value))
        lo, hi = -1, best[objective]  # lo: largest bound proven infeasible
        while hi - lo > 1:
            mid = (lo + hi) // 2
            proc.send("(push 1)")
            proc.send(f"(assert (<= {objective} {mid}))")
            answer = proc.check_sat()
            if answer == "sat":
                best = parse_values(proc.query(get_value))
                hi = best[objective]
            elif answer == "unsat":
                lo = mid
            else:
                proc.send("(pop 1)")
                return outcome(Status.FEASIBLE, f"unknown at bound {mid}; gap [{lo + 1}, {hi}]")
            proc.send("(pop 1)")
            log.debug("bound tightening: [%d, %d]", lo + 1, hi)
        return outcome(Status.OPTIMAL)
    except _Timeout:
        proc.kill()
        return outcome(Status.TIMEOUT, f"no answer within {timeout_s}s")
    except SolverError as exc:
        proc.kill()
        return outcome(Status.SOLVER_ERROR, str(exc))
    finally:
        proc.close()
