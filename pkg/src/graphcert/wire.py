"""Framed two-process transport: a prover streams registers site by site and
a verifier drives measurements, reproducing the in-process run bit for bit.

Framing: each message is a 4-byte big-endian length prefix followed by a
UTF-8 JSON object with a ``kind`` field.  Real-valued payload numbers travel
as decimal strings (shortest round-trip repr), so outcomes are bit-exact
across processes; ids and counts are plain JSON integers.

Session flow (one protocol trial per connection):

    verifier -> HELLO {params echo, trial}
    prover   -> HELLO {params echo}
    per register r = 1..N_total:
        prover   -> REGISTER_ANNOUNCE {register}
        per site s = 1..n, in order:
            verifier -> MEASURE_REQUEST {register, site, basis}
                        basis in X|Z (qudit), x|p (CV), or DISCARD
            prover   -> OUTCOME {register, site, value}   (absent for DISCARD)
    verifier -> VERDICT {verdict: <canonical verdict JSON line>}

Discarded and target registers receive explicit DISCARD markers for every
site, so the prover cannot tell targets from discards by traffic shape
alone.  Order violations abort the session with an ERROR frame.  The
verifier holds at most one register's outcomes at a time; its outcome-memory
high-water mark is n values.
"""

from __future__ import annotations

import json
import socket
import struct
import threading
from dataclasses import dataclass

import numpy as np

from .adversary import make_context, state_for_entry
from .config import ExperimentConfig, build_params, build_strategy
from .cv import GaussianState, NullifierModel
from .hypergraph import build_nullifiers, build_stabilizers
from .io import json_line, verdict_record
from .qudit import GraphBasisState, residual_from_values
from .rng import TrialStreams
from .verifier import ProtocolParams, Transcript, Verdict, make_verdict, sample_groups

PROTOCOL_ID = "graphcert-wire-1"
MAX_FRAME = 1 << 22
DEFAULT_TIMEOUT = 30.0

KINDS = ("HELLO", "REGISTER_ANNOUNCE", "MEASURE_REQUEST", "OUTCOME", "VERDICT", "ERROR")


class WireProtocolError(RuntimeError):
    """Framing, ordering, or handshake violation."""


def encode_value(value) -> str:
    """Real-valued payloads as decimal strings (bit-exact across peers)."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def decode_qudit_value(text: str) -> int:
    return int(text)


def decode_cv_value(text: str) -> float:
    return float(text)


class Framer:
    """Length-prefixed JSON frames over a stream socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._rfile = sock.makefile("rb")

    def send(self, message: dict):
        if message.get("kind") not in KINDS:
            raise WireProtocolError(f"refusing to send unknown kind {message.get('kind')!r}")
        body = json.dumps(message, sort_keys=True, separators=(",", ":")).encode("utf-8")
        if len(body) > MAX_FRAME:
            raise WireProtocolError(f"frame of {len(body)} bytes exceeds cap")
        self.sock.sendall(struct.pack("!I", len(body)) + body)

    def recv(self) -> dict:
        header = self._rfile.read(4)
        if len(header) != 4:
            raise WireProtocolError("connection closed mid-frame")
        (length,) = struct.unpack("!I", header)
        if length > MAX_FRAME:
            raise WireProtocolError(f"incoming frame of {length} bytes exceeds cap")
        body = self._rfile.read(length)
        if len(body) != length:
            raise WireProtocolError("connection closed mid-frame")
        try:
            message = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise WireProtocolError(f"undecodable frame: {exc}")
        if message.get("kind") == "ERROR":
            raise WireProtocolError(f"peer error: {message.get('message')}")
        if message.get("kind") not in KINDS:
            raise WireProtocolError(f"unknown frame kind {message.get('kind')!r}")
        return message

    def error_out(self, text: str):
        try:
            self.send({"kind": "ERROR", "message": text})
        except OSError:
            pass

    def close(self):
        try:
            self._rfile.close()
        finally:
            self.sock.close()


def _params_echo(params: ProtocolParams, trial_index: int) -> dict:
    return {
        "protocol": PROTOCOL_ID,
        "mode": params.mode,
        "n": params.n,
        "d": params.d if params.mode == "qudit" else None,
        "n_test": params.n_test,
        "n_total": params.n_total,
        "ntilde": params.ntilde,
        "seed": params.seed,
        "trial": trial_index,
    }


# -- prover side --------------------------------------------------------------------


def _serve_session(framer: Framer, params: ProtocolParams, strategy):
    hello = framer.recv()
    if hello.get("kind") != "HELLO":
        framer.error_out("expected HELLO")
        raise WireProtocolError("expected HELLO first")
    trial = int(hello.get("trial", 0))
    mine = _params_echo(params, trial)
    theirs = {k: hello.get(k) for k in mine}
    if theirs != mine:
        framer.error_out(f"parameter mismatch: {theirs} != {mine}")
        raise WireProtocolError(f"parameter mismatch: {theirs} != {mine}")
    framer.send({"kind": "HELLO", **mine, "role": "prover"})

    assignment = strategy.materialize(params, trial)
    ctx = make_context(params)
    rng = TrialStreams.for_trial(params.seed, trial).outcome
    qudit = params.mode == "qudit"
    n = params.n

    for reg in range(1, params.n_total + 1):
        framer.send({"kind": "REGISTER_ANNOUNCE", "register": reg})
        session = None
        for site in range(1, n + 1):
            msg = framer.recv()
            if msg.get("kind") == "VERDICT":
                framer.error_out("VERDICT before all registers were served")
                raise WireProtocolError("early VERDICT")
            if msg.get("kind") != "MEASURE_REQUEST":
                framer.error_out(f"expected MEASURE_REQUEST, got {msg.get('kind')}")
                raise WireProtocolError(f"expected MEASURE_REQUEST, got {msg.get('kind')}")
            if msg.get("register") != reg or msg.get("site") != site:
                framer.error_out(
                    f"out-of-order request {msg.get('register')}/{msg.get('site')}, "
                    f"expected {reg}/{site}"
                )
                raise WireProtocolError("out-of-order MEASURE_REQUEST")
            basis = msg.get("basis")
            if basis == "DISCARD":
                continue
            if session is None:
                state = state_for_entry(assignment.entry(reg), ctx)
                if isinstance(state, GraphBasisState):
                    session = state.session()
                    measure = lambda s, b: session.measure(s, b, rng)
                elif isinstance(state, NullifierModel):
                    session = state.session(rng)
                    measure = session.measure
                elif isinstance(state, GaussianState):
                    session = state.session(params.noise, rng)
                    measure = session.measure
                else:  # mutable tableau or dense state
                    session = state
                    measure = lambda s, b: session.measure_site(s, b, rng)
            try:
                value = measure(site, basis)
            except Exception as exc:
                framer.error_out(f"measurement failed: {exc}")
                raise
            framer.send(
                {
                    "kind": "OUTCOME",
                    "register": reg,
                    "site": site,
                    "value": encode_value(value),
                }
            )
    final = framer.recv()
    if final.get("kind") != "VERDICT":
        framer.error_out(f"expected VERDICT, got {final.get('kind')}")
        raise WireProtocolError(f"expected VERDICT, got {final.get('kind')}")
    return final["verdict"]


class ProverServer:
    """Serves one protocol session per incoming connection."""

    def __init__(self, cfg: ExperimentConfig, host: str = "127.0.0.1", port: int = 0):
        self.params = build_params(cfg)
        self.strategy = build_strategy(cfg, self.params)
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(DEFAULT_TIMEOUT)
        self.host, self.port = self._listener.getsockname()[:2]
        self.received_verdicts: list[str] = []

    def serve(self, sessions: int = 1):
        for _ in range(sessions):
            conn, _ = self._listener.accept()
            conn.settimeout(DEFAULT_TIMEOUT)
            framer = Framer(conn)
            try:
                self.received_verdicts.append(
                    _serve_session(framer, self.params, self.strategy)
                )
            finally:
                framer.close()

    def serve_in_thread(self, sessions: int = 1) -> threading.Thread:
        thread = threading.Thread(target=self.serve, args=(sessions,), daemon=True)
        thread.start()
        return thread

    def close(self):
        self._listener.close()


def serve_prover(cfg: ExperimentConfig, endpoint: str, sessions: int = 1):
    """Blocking prover: serve ``sessions`` connections on host:port."""
    host, _, port = endpoint.rpartition(":")
    server = ProverServer(cfg, host or "127.0.0.1", int(port))
    try:
        server.serve(sessions)
    finally:
        server.close()
    return server.received_verdicts


# -- verifier side --------------------------------------------------------------------


@dataclass
class WireRunStats:
    """Streaming-memory accounting of one verifier session."""

    outcome_highwater: int = 0  # max outcome values held at once
    frames_sent: int = 0
    frames_received: int = 0


def run_verifier_client(
    cfg: ExperimentConfig,
    endpoint: str,
    trial_index: int = 0,
    record_raw: bool = False,
) -> tuple[Transcript, Verdict, WireRunStats]:
    """Drive one protocol session against a remote prover.

    Selection randomness comes from the same seeded stream as the in-process
    runner, so the verdict (and transcript, when recorded) is byte-identical
    to `run_protocol` under the same configuration.
    """
    params = build_params(cfg)
    host, _, port = endpoint.rpartition(":")
    sock = socket.create_connection((host or "127.0.0.1", int(port)), timeout=DEFAULT_TIMEOUT)
    framer = Framer(sock)
    stats = WireRunStats()
    try:
        return _drive_session(framer, params, trial_index, record_raw, stats)
    finally:
        framer.close()


def _drive_session(framer, params, trial_index, record_raw, stats):
    from .verifier import TestRecord

    def send(msg):
        framer.send(msg)
        stats.frames_sent += 1

    def recv():
        msg = framer.recv()
        stats.frames_received += 1
        return msg

    send({"kind": "HELLO", **_params_echo(params, trial_index), "role": "verifier"})
    hello = recv()
    if hello.get("kind") != "HELLO":
        raise WireProtocolError(f"expected HELLO, got {hello.get('kind')}")
    mine = _params_echo(params, trial_index)
    theirs = {k: hello.get(k) for k in mine}
    if theirs != mine:
        raise WireProtocolError(f"parameter mismatch: {theirs} != {mine}")

    streams = TrialStreams.for_trial(params.seed, trial_index)
    selection = sample_groups(params, streams.select)
    n = params.n
    group_of = np.full(params.n_total + 1, -1, dtype=np.int64)
    for i, grp in enumerate(selection.groups):
        group_of[list(grp)] = i
    if params.mode == "qudit":
        specs = build_stabilizers(params.graph, params.d)
        basis_for = lambda spec, site: "X" if site == spec.vertex else "Z"
        decode = decode_qudit_value
    else:
        specs = build_nullifiers(params.graph)
        basis_for = lambda spec, site: "p" if site == spec.vertex else "x"
        decode = decode_cv_value

    n_pass_groups = [0] * n
    records = [] if record_raw else None
    for reg in range(1, params.n_total + 1):
        announce = recv()
        if announce.get("kind") != "REGISTER_ANNOUNCE" or announce.get("register") != reg:
            framer.error_out(f"expected announce of register {reg}")
            raise WireProtocolError(f"expected announce of register {reg}")
        gi = int(group_of[reg])
        spec = specs[gi] if gi >= 0 else None
        measured = {} if spec is not None else None
        for site in range(1, n + 1):
            if spec is not None and site in spec.sites:
                basis = basis_for(spec, site)
            else:
                basis = "DISCARD"
            send(
                {"kind": "MEASURE_REQUEST", "register": reg, "site": site, "basis": basis}
            )
            if basis == "DISCARD":
                continue
            reply = recv()
            if reply.get("kind") != "OUTCOME":
                raise WireProtocolError(f"expected OUTCOME, got {reply.get('kind')}")
            if reply.get("register") != reg or reply.get("site") != site:
                raise WireProtocolError("OUTCOME does not match the pending request")
            measured[site] = (basis, decode(reply["value"]))
            stats.outcome_highwater = max(stats.outcome_highwater, len(measured))
        if spec is None:
            continue
        values = {s: v for s, (_, v) in measured.items()}
        if params.mode == "qudit":
            residual = residual_from_values(spec, values)
            passed = residual == 0
        else:
            from .cv import nullifier_combination

            xvals = {s: v for s, (b, v) in measured.items() if b == "x"}
            residual = values[spec.vertex] - nullifier_combination(spec, xvals)
            passed = abs(residual) <= params.tau
        if passed:
            n_pass_groups[gi] += 1
        if record_raw:
            records.append(
                TestRecord(
                    register=reg,
                    group=gi + 1,
                    residual=residual,
                    passed=passed,
                    raw=measured,
                )
            )
        # streaming discipline: nothing of this register is retained beyond
        # counters and (optionally) the transcript log
        measured = None

    verdict = make_verdict(params, n_pass_groups, trial_index)
    send({"kind": "VERDICT", "verdict": json_line(verdict_record(verdict))})
    transcript = Transcript(
        seed=params.seed,
        trial_index=trial_index,
        groups=selection.groups,
        targets=selection.targets,
        n_pass_groups=tuple(n_pass_groups),
        outcomes=tuple(records) if record_raw else None,
    )
    return transcript, verdict, stats
