"""Token-bucket rate limiting for emulated links."""

from __future__ import annotations

import socket
import threading
import time
from typing import Iterable, Iterator, Optional

BURST_BYTES = 64 * 1024


class TokenBucket:
    """Thread-safe bucket refilled at ``rate`` bytes/s, capped at ``burst``.

    Callers reserve tokens up front and sleep off any debt outside the lock,
    so concurrent users share the rate fairly.  The bucket starts empty:
    n bytes never clear in less than n / rate seconds.
    """

    def __init__(self, rate: float, burst: int = BURST_BYTES, clock=time.monotonic):
        if not rate > 0:
            raise ValueError("rate must be > 0; use rate=None for an unlimited link")
        self.rate = float(rate)
        self.burst = burst
        self._clock = clock
        self._tokens = 0.0
        self._last = clock()
        self._lock = threading.Lock()

    def consume(self, n: int) -> float:
        """Take n tokens, sleeping until the debt is repaid; returns the sleep."""
        with self._lock:
            now = self._clock()
            self._tokens = min(self.burst, self._tokens + (now - self._last) * self.rate)
            self._last = now
            self._tokens -= n
            wait = -self._tokens / self.rate if self._tokens < 0 else 0.0
        if wait > 0:
            time.sleep(wait)
        return wait


def throttle(chunks: Iterable[bytes], chi: Optional[float],
             burst: int = BURST_BYTES) -> Iterator[bytes]:
    """Re-yield a byte stream at no more than chi bytes/s (None: unlimited)."""
    if chi is None:
        yield from chunks
        return
    bucket = TokenBucket(chi, burst)
    for data in chunks:
        view = memoryview(data)
        for i in range(0, len(view), burst):
            piece = view[i:i + burst]
            bucket.consume(len(piece))
            yield bytes(piece)


def send_throttled(sock: socket.socket, data: bytes, bucket: Optional[TokenBucket]) -> None:
    if bucket is None:
        sock.sendall(data)
        return
    view = memoryview(data)
    for i in range(0, len(view), bucket.burst):
        piece = view[i:i + bucket.burst]
        bucket.consume(len(piece))
        sock.sendall(piece)
