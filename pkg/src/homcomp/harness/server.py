"""Parameter server: barrier on M pushes, aggregate, broadcast."""

from __future__ import annotations

import logging
import socket
import time
from concurrent.futures import ThreadPoolExecutor, wait, FIRST_EXCEPTION
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..codec import Codec, CodecError, EncodedBlob, ParamBlob, QuantCodec, h_average
from ..cost_model import ClusterConfig
from .frames import HEADER, Frame, FrameError, MsgType, parse_header, read_frame, recv_exact
from .throttle import TokenBucket, send_throttled

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_S = 30.0
# W*M/chi charges one push+broadcast pair per parameter byte, so the wire
# itself must move two bytes per modeled byte
WIRE_FACTOR = 2.0


class HarnessError(RuntimeError):
    pass


class RoundAborted(HarnessError):
    pass


@dataclass
class RoundReport:
    round: int
    push_s: float
    aggregate_s: float
    broadcast_s: float
    end_to_end_s: float
    wire_bytes: int

    @property
    def transfer_s(self) -> float:
        return self.push_s + self.broadcast_s


@dataclass
class HarnessReport:
    workers: int
    codec: str
    chi: Optional[float]
    weight_bytes: int
    rounds: list[RoundReport] = field(default_factory=list)

    @property
    def modeled_t_tnf(self) -> float:
        """rho * W * M / chi, with rho taken from the bytes actually exchanged."""
        if not self.chi or not self.rounds:
            return 0.0
        wire = sum(r.wire_bytes for r in self.rounds) / len(self.rounds)
        return wire / (WIRE_FACTOR * self.chi)

    @property
    def measured_t_tnf(self) -> float:
        return float(np.mean([r.transfer_s for r in self.rounds])) if self.rounds else 0.0

    @property
    def relative_error(self) -> float:
        modeled = self.modeled_t_tnf
        if modeled == 0:
            return float("nan")
        return abs(self.measured_t_tnf - modeled) / modeled

    def round_errors(self) -> list[float]:
        modeled = self.modeled_t_tnf
        return [abs(r.transfer_s - modeled) / modeled for r in self.rounds] if modeled else []

    def to_dict(self) -> dict:
        return {
            "workers": self.workers,
            "codec": self.codec,
            "chi": self.chi,
            "weight_bytes": self.weight_bytes,
            "rounds": [dict(asdict(r), transfer_s=r.transfer_s) for r in self.rounds],
            "modeled_t_tnf": self.modeled_t_tnf,
            "measured_t_tnf": self.measured_t_tnf,
            "relative_error": self.relative_error,
        }


def aggregate(codec: Codec, pushed: list[EncodedBlob]) -> EncodedBlob:
    """Mean of the pushed blobs; quantized blobs are averaged without decoding."""
    if isinstance(codec, QuantCodec):
        return codec.wrap(h_average([codec.unwrap(e) for e in pushed]))
    decoded = [codec.decode(e).values for e in pushed]
    mean = np.mean(np.stack(decoded).astype(np.float64), axis=0)
    return codec.encode(ParamBlob(mean.astype(np.float32)))


class _Peer:
    def __init__(self, conn: socket.socket, worker_id: int, bucket: Optional[TokenBucket]):
        self.conn = conn
        self.worker_id = worker_id
        self.bucket = bucket

    def close(self):
        try:
            self.conn.close()
        except OSError:
            pass


class ParameterServer:
    """Star-topology server for M synchronous workers.

    ``chi`` throttles the emulated cluster link.  By default one bucket is
    shared by every push and broadcast at the server, so transfer time grows
    linearly with M; ``per_link`` gives each connection its own bucket for
    the broadcast and leaves push throttling to the workers.
    """

    def __init__(self, bind_addr: tuple[str, int], cfg: ClusterConfig, codec: Codec,
                 rounds: int, *, chi: Optional[float] = None, per_link: bool = False,
                 timeout_s: float = DEFAULT_TIMEOUT_S):
        if rounds < 1:
            raise ValueError("rounds must be >= 1")
        if chi is not None and not chi > 0:
            raise ValueError("chi must be > 0 (None disables throttling)")
        self.cfg = cfg
        self.codec = codec
        self.rounds = rounds
        self.chi = chi
        self.per_link = per_link
        self.timeout_s = timeout_s
        self.sock = socket.create_server(bind_addr)
        self.sock.settimeout(timeout_s)
        self.address = self.sock.getsockname()[:2]
        self._peers: list[_Peer] = []
        self._shared = (TokenBucket(chi * WIRE_FACTOR)
                        if chi is not None and not per_link else None)

    def _link_bucket(self) -> Optional[TokenBucket]:
        if self.chi is None:
            return None
        return self._shared if self._shared is not None else TokenBucket(self.chi * WIRE_FACTOR)

    def _ingress(self) -> Optional[TokenBucket]:
        return self._shared

    # -- phases --

    def _accept_all(self) -> None:
        seen = set()
        while len(self._peers) < self.cfg.workers:
            try:
                conn, addr = self.sock.accept()
            except socket.timeout:
                raise HarnessError(
                    f"only {len(self._peers)} of {self.cfg.workers} workers connected "
                    f"within {self.timeout_s}s"
                ) from None
            conn.settimeout(self.timeout_s)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            try:
                frame = read_frame(conn, max_payload=64)
                wid = frame.worker_id()
                if wid in seen:
                    raise FrameError(f"duplicate worker id {wid}")
            except (FrameError, ConnectionError, OSError) as exc:
                log.warning("rejecting connection from %s: %s", addr, exc)
                conn.close()
                continue
            seen.add(wid)
            self._peers.append(_Peer(conn, wid, self._link_bucket()))
            log.info("worker %d connected from %s", wid, addr)

    def _recv_push(self, peer: _Peer, rnd: int) -> tuple[float, float, EncodedBlob, int]:
        ingress = self._ingress()
        on_bytes = ingress.consume if ingress is not None else None
        msg_type, got, length = parse_header(recv_exact(peer.conn, HEADER.size, on_bytes))
        # header arrival marks the worker's push start (it computes before this)
        t_first = time.monotonic()
        if msg_type is not MsgType.PUSH:
            raise FrameError(f"expected PUSH, got {msg_type.name}")
        if got != rnd:
            raise FrameError(f"expected round {rnd}, got {got}")
        payload = recv_exact(peer.conn, length, on_bytes)
        t_done = time.monotonic()
        return t_first, t_done, EncodedBlob.from_bytes(payload), length

    def _send(self, peer: _Peer, frame: Frame) -> None:
        send_throttled(peer.conn, frame.to_bytes(), peer.bucket)

    def _gather(self, pool, fn, what: str, rnd: int):
        futures = {pool.submit(fn, p): p for p in self._peers}
        done, pending = wait(futures, timeout=self.timeout_s, return_when=FIRST_EXCEPTION)
        for fut in done:
            exc = fut.exception()
            if exc is not None:
                peer = futures[fut]
                raise RoundAborted(
                    f"round {rnd}: {what} failed for worker {peer.worker_id}: {exc}"
                ) from exc
        if pending:
            late = sorted(futures[f].worker_id for f in pending)
            raise RoundAborted(f"round {rnd}: {what} timed out after {self.timeout_s}s "
                               f"waiting for workers {late}")
        return [(futures[f], f.result()) for f in futures]

    def serve(self) -> HarnessReport:
        report = HarnessReport(self.cfg.workers, self.codec.name, self.chi,
                               int(self.cfg.weight_bytes))
        try:
            self._accept_all()
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                try:
                    for rnd in range(1, self.rounds + 1):
                        report.rounds.append(self._round(pool, rnd))
                    self._finish(pool)
                except BaseException:
                    # unblock handler threads before the pool joins them
                    self.close()
                    raise
        except HarnessError:
            raise
        except (FrameError, CodecError, ConnectionError, OSError) as exc:
            raise HarnessError(str(exc)) from exc
        finally:
            self.close()
        return report

    def _round(self, pool, rnd: int) -> RoundReport:
        t_start = time.monotonic()
        results = self._gather(pool, lambda p: self._recv_push(p, rnd), "push", rnd)
        t_first = min(r[0] for _, r in results)
        t_pushed = max(r[1] for _, r in results)
        pushed = [r[2] for _, r in sorted(results, key=lambda x: x[0].worker_id)]
        counts = {e.original_count for e in pushed}
        if len(counts) != 1:
            raise RoundAborted(f"round {rnd}: workers pushed blobs of different sizes {counts}")
        try:
            global_blob = aggregate(self.codec, pushed)
        except CodecError as exc:
            raise RoundAborted(f"round {rnd}: aggregation failed: {exc}") from exc
        t_agg = time.monotonic()
        frame = Frame(MsgType.GLOBAL, rnd, global_blob.to_bytes())
        self._gather(pool, lambda p: self._send(p, frame), "broadcast", rnd)
        t_end = time.monotonic()
        wire = sum(r[3] for _, r in results) + len(frame.payload) * len(self._peers)
        log.info("round %d: push %.3fs, aggregate %.3fs, broadcast %.3fs",
                 rnd, t_pushed - t_first, t_agg - t_pushed, t_end - t_agg)
        return RoundReport(rnd, t_pushed - t_first, t_agg - t_pushed, t_end - t_agg,
                           t_end - t_start, wire)

    def _finish(self, pool) -> None:
        done_round = self.rounds + 1

        def bye(peer: _Peer):
            frame = read_frame(peer.conn, max_payload=0)
            if frame.msg_type is not MsgType.DONE or frame.round != done_round:
                raise FrameError(f"expected DONE for round {done_round}")
            peer.conn.sendall(Frame(MsgType.DONE, done_round).to_bytes())

        self._gather(pool, bye, "DONE handshake", done_round)

    def close(self) -> None:
        for p in self._peers:
            p.close()
        try:
            self.sock.close()
        except OSError:
            pass


def run_server(bind_addr: tuple[str, int], cfg: ClusterConfig, codec: Codec, rounds: int,
               **kwargs) -> HarnessReport:
    return ParameterServer(bind_addr, cfg, codec, rounds, **kwargs).serve()
