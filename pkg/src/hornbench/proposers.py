"""Next-step policies for the proof loop.

Three families:
  * the exact oracle (forward chaining in problem order),
  * corruptors that wrap a base proposer and inject one taxonomy error
    class each, logging every injection for auditor validation,
  * a client for external proposers speaking the line protocol over a
    child process (stdio:) or a TCP connection (tcp:).

A proposer is anything with `concurrent_safe` and
`propose(state, state_text, k) -> list[Proposal]`; candidates are returned
in rank order.
"""

from __future__ import annotations

import json
import os
import random
import select
import shlex
import socket
import subprocess
import threading
import time
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Protocol

from .core import HornError, ProofState, Rule, applicable_rules, oracle_next
from .seeds import child_seed
from .textwire import Proposal, parse_proposal, rule_text

NON_EXISTING_RULE = "NonExR"
INAPPLICABLE_RULE = "InappR"
SPURIOUS_MATCH = "SpMatch"
UNEXHAUSTED_SEARCH = "UnexhS"
ERROR_TYPES = (NON_EXISTING_RULE, INAPPLICABLE_RULE, SPURIOUS_MATCH, UNEXHAUSTED_SEARCH)

CORRUPTOR_KINDS = (
    "synonym_swap",
    "premise_drop",
    "fact_mirage",
    "premature_false",
    "premature_true",
)


class ProposerFailure(HornError):
    """Transport-level failure (crash, timeout, EOF) of an external proposer.

    Distinct from a malformed proposal, which is an auditable value."""


class Proposer(Protocol):
    concurrent_safe: bool

    def propose(self, state: ProofState, state_text: str, k: int) -> list[Proposal]: ...


def load_vocabulary() -> tuple[str, ...]:
    text = resources.files("hornbench.data").joinpath("vocabulary.txt").read_text()
    return tuple(w for w in text.split() if w)


def load_synonym_table() -> dict[str, str]:
    """The shipped bidirectional synonym lookup (word -> partner word)."""
    text = resources.files("hornbench.data").joinpath("synonyms.txt").read_text()
    table: dict[str, str] = {}
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        a, b = parts
        table[a] = b
        table[b] = a
    return table


def oracle_propose(state: ProofState) -> Proposal:
    """Terminal(True) once the query is derived, else the first unapplied
    applicable rule in problem order, else Terminal(False)."""
    nxt = oracle_next(state)
    if nxt is True:
        return Proposal(kind="terminal", text="True", verdict=True)
    if nxt is False:
        return Proposal(kind="terminal", text="False", verdict=False)
    return Proposal(kind="rule", text=rule_text(nxt), rule=nxt)


class OracleProposer:
    concurrent_safe = True

    def propose(self, state: ProofState, state_text: str, k: int) -> list[Proposal]:
        return [oracle_propose(state)]


@dataclass(frozen=True)
class CorruptorSpec:
    """One error-injection policy: which error, how often, and under what seed."""

    kind: str
    rate: float
    seed: int = 0
    synonym_table: Mapping[str, str] | None = None

    def __post_init__(self):
        if self.kind not in CORRUPTOR_KINDS:
            raise ValueError(f"unknown corruptor kind {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"rate must be in [0,1], got {self.rate}")


@dataclass(frozen=True)
class InjectionEvent:
    """Log record for one corruptor decision, for auditor validation."""

    call_index: int
    outcome: str  # "injected" | "skipped"
    error_type: str | None
    materialized: bool
    proposal_text: str
    note: str = ""


class CorruptingProposer:
    """Wraps a base proposer and, with probability rate per call, replaces its
    rank-0 proposal with one synthesized error of the configured kind.

    Deterministic under (spec.seed, call index).  Injections that cannot be
    synthesized at the current state pass the base proposal through and are
    logged as skipped.
    """

    concurrent_safe = False  # owns a per-trace injection log

    def __init__(self, base: Proposer, spec: CorruptorSpec):
        self.base = base
        self.spec = spec
        self.table = (
            dict(spec.synonym_table) if spec.synonym_table is not None else load_synonym_table()
        )
        self.calls = 0
        self.injections: list[InjectionEvent] = []

    def propose(self, state: ProofState, state_text: str, k: int) -> list[Proposal]:
        index = self.calls
        self.calls += 1
        base_props = self.base.propose(state, state_text, k)
        rng = random.Random(child_seed(self.spec.seed, "corrupt", index))
        if rng.random() >= self.spec.rate:
            return base_props
        event, proposal = self._inject(state, base_props[0], rng, index)
        self.injections.append(event)
        if event.outcome == "skipped":
            return base_props
        return [proposal]

    def _inject(
        self, state: ProofState, base: Proposal, rng: random.Random, index: int
    ) -> tuple[InjectionEvent, Proposal | None]:
        kind = self.spec.kind
        if kind == "premature_false":
            if applicable_rules(state.problem.rules, state.derived, state.applied_set):
                prop = Proposal(kind="terminal", text="False", verdict=False)
                return self._event(index, UNEXHAUSTED_SEARCH, prop.text), prop
            return self._skip(index, "no applicable rules remain"), None
        if kind == "premature_true":
            if not state.query_derived:
                prop = Proposal(kind="terminal", text="True", verdict=True)
                return self._event(index, SPURIOUS_MATCH, prop.text), prop
            return self._skip(index, "query already derived"), None
        if kind == "fact_mirage":
            return self._fact_mirage(state, index)
        if kind == "synonym_swap":
            return self._synonym_swap(state, base, rng, index)
        return self._premise_drop(state, base, rng, index)

    def _fact_mirage(self, state: ProofState, index: int):
        rules = state.problem.rules
        if not rules:
            return self._skip(index, "no rules in problem"), None
        mirage = rules[-1].conclusion
        if mirage in state.derived:
            return self._skip(index, "last conclusion already derived"), None
        for r in rules:
            if mirage in r.premises:
                prop = Proposal(kind="rule", text=rule_text(r), rule=r)
                return self._event(index, INAPPLICABLE_RULE, prop.text), prop
        return self._skip(index, "no rule uses the last conclusion as premise"), None

    def _synonym_swap(self, state: ProofState, base: Proposal, rng: random.Random, index: int):
        problem = state.problem
        if not state.query_derived:
            partner = self.table.get(problem.query)
            if partner is not None and partner in state.derived:
                prop = Proposal(kind="terminal", text="True", verdict=True)
                return (
                    self._event(index, SPURIOUS_MATCH, prop.text, note=f"{partner}~{problem.query}"),
                    prop,
                )
        if base.kind != "rule" or base.rule is None:
            return self._skip(index, "base proposal is not a rule"), None
        rule = base.rule
        literals = list(rule.premises) + [rule.conclusion]
        swappable = [
            (i, self.table[lit])
            for i, lit in enumerate(literals)
            if lit in self.table and self.table[lit] not in problem.literals
        ]
        if not swappable:
            return self._skip(index, "no literal has an out-of-problem synonym"), None
        pos, replacement = swappable[rng.randrange(len(swappable))]
        literals[pos] = replacement
        swapped = Rule(tuple(literals[:-1]), literals[-1])
        prop = Proposal(kind="rule", text=rule_text(swapped), rule=swapped)
        materialized = swapped not in problem.rule_set
        return (
            self._event(index, NON_EXISTING_RULE, prop.text, materialized=materialized),
            prop,
        )

    def _premise_drop(self, state: ProofState, base: Proposal, rng: random.Random, index: int):
        if base.kind != "rule" or base.rule is None:
            return self._skip(index, "base proposal is not a rule"), None
        rule = base.rule
        if len(rule.premises) < 2:
            return self._skip(index, "single-premise rule"), None
        drop = rng.randrange(len(rule.premises))
        kept = tuple(p for i, p in enumerate(rule.premises) if i != drop)
        dropped = Rule(kept, rule.conclusion)
        prop = Proposal(kind="rule", text=rule_text(dropped), rule=dropped)
        materialized = dropped not in state.problem.rule_set
        note = "" if materialized else "dropped form exists in problem"
        return (
            self._event(index, NON_EXISTING_RULE, prop.text, materialized=materialized, note=note),
            prop,
        )

    def _event(self, index, error_type, text, materialized=True, note=""):
        return InjectionEvent(
            call_index=index,
            outcome="injected",
            error_type=error_type,
            materialized=materialized,
            proposal_text=text,
            note=note,
        )

    def _skip(self, index, note):
        return InjectionEvent(
            call_index=index,
            outcome="skipped",
            error_type=None,
            materialized=False,
            proposal_text="",
            note=note,
        )


def corrupt(base: Proposer, spec: CorruptorSpec) -> CorruptingProposer:
    return CorruptingProposer(base, spec)


class _StdioTransport:
    """Child process with newline-framed request/response over its pipes."""

    def __init__(self, command: str):
        try:
            self.proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        except OSError as exc:
            raise ProposerFailure(f"cannot start {command!r}: {exc}") from exc
        self._buf = b""

    def send_line(self, line: bytes) -> None:
        try:
            self.proc.stdin.write(line + b"\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, ValueError, OSError) as exc:
            raise ProposerFailure(f"peer pipe closed: {exc}") from exc

    def recv_line(self, timeout: float) -> bytes:
        fd = self.proc.stdout.fileno()
        deadline = time.monotonic() + timeout
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line, self._buf = self._buf[:nl], self._buf[nl + 1 :]
                return line
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ProposerFailure(f"peer response timed out after {timeout}s")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise ProposerFailure(f"peer response timed out after {timeout}s")
            chunk = os.read(fd, 65536)
            if not chunk:
                raise ProposerFailure("peer closed its output")
            self._buf += chunk

    def close(self) -> None:
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        try:
            self.proc.terminate()
            self.proc.wait(timeout=5)
        except Exception:
            self.proc.kill()


class _TcpTransport:
    def __init__(self, address: str):
        host, _, port = address.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"tcp endpoint must be host:port, got {address!r}")
        try:
            self.sock = socket.create_connection((host, int(port)), timeout=30)
        except OSError as exc:
            raise ProposerFailure(f"cannot connect to {address}: {exc}") from exc
        self._buf = b""

    def send_line(self, line: bytes) -> None:
        try:
            self.sock.sendall(line + b"\n")
        except OSError as exc:
            raise ProposerFailure(f"peer connection lost: {exc}") from exc

    def recv_line(self, timeout: float) -> bytes:
        deadline = time.monotonic() + timeout
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line, self._buf = self._buf[:nl], self._buf[nl + 1 :]
                return line
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ProposerFailure(f"peer response timed out after {timeout}s")
            self.sock.settimeout(remaining)
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout as exc:
                raise ProposerFailure(f"peer response timed out after {timeout}s") from exc
            except OSError as exc:
                raise ProposerFailure(f"peer connection lost: {exc}") from exc
            if not chunk:
                raise ProposerFailure("peer closed the connection")
            self._buf += chunk

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class ExternalProposer:
    """Client side of the line protocol.

    Request  {"v":1,"state":"<state text>","k":<n>}
    Response {"v":1,"candidates":["<text>", ...]}   with 1 <= len <= k

    Anything unparseable or schema-violating in a response becomes a single
    Malformed proposal; transport trouble raises ProposerFailure.
    """

    concurrent_safe = False

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self._lock = threading.Lock()  # one in-flight request per connection
        if endpoint.startswith("stdio:"):
            self.transport = _StdioTransport(endpoint[len("stdio:") :])
        elif endpoint.startswith("tcp:"):
            self.transport = _TcpTransport(endpoint[len("tcp:") :])
        else:
            raise ValueError(f"endpoint must be stdio:<cmd> or tcp:<host:port>, got {endpoint!r}")

    def propose(self, state: ProofState, state_text: str, k: int) -> list[Proposal]:
        request = json.dumps(
            {"v": 1, "state": state_text, "k": k}, separators=(",", ":")
        ).encode("utf-8")
        with self._lock:
            self.transport.send_line(request)
            raw = self.transport.recv_line(self.timeout)
        try:
            line = raw.decode("utf-8")
        except UnicodeDecodeError:
            return [Proposal(kind="malformed", text=repr(raw))]
        try:
            payload = json.loads(line)
        except json.JSONDecodeError:
            return [Proposal(kind="malformed", text=line)]
        candidates = payload.get("candidates") if isinstance(payload, dict) else None
        if (
            not isinstance(payload, dict)
            or payload.get("v") != 1
            or not isinstance(candidates, list)
            or not all(isinstance(c, str) for c in candidates)
        ):
            return [Proposal(kind="malformed", text=line)]
        if not candidates:
            return [Proposal(kind="malformed", text="")]
        return [parse_proposal(c, rank=i) for i, c in enumerate(candidates[:k])]

    def close(self) -> None:
        self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def external_proposer(endpoint: str, timeout: float = 30.0) -> ExternalProposer:
    return ExternalProposer(endpoint, timeout)


def make_proposer(spec: str, seed: int = 0, timeout: float = 30.0) -> Proposer:
    """Build a proposer from its CLI spec string.

    oracle | corrupt:<kind>@<rate>[@seed] | external:<endpoint>
    """
    if spec == "oracle":
        return OracleProposer()
    if spec.startswith("corrupt:"):
        body = spec[len("corrupt:") :]
        parts = body.split("@")
        if len(parts) not in (2, 3):
            raise ValueError(f"corrupt spec must be corrupt:<kind>@<rate>[@seed], got {spec!r}")
        kind, rate = parts[0], float(parts[1])
        cseed = int(parts[2]) if len(parts) == 3 else seed
        return corrupt(OracleProposer(), CorruptorSpec(kind=kind, rate=rate, seed=cseed))
    if spec.startswith("external:"):
        return external_proposer(spec[len("external:") :], timeout=timeout)
    raise ValueError(f"unknown proposer spec {spec!r}")
