"""Instrumentation: kernel/rule/allocation events and cost counters.

Every evaluation can run under a collector that records a sequence of
events (kernel calls, rewrite-rule applications, buffer allocations and
frees, structure detections) together with aggregate counters for
flops, allocations and kernel calls.  The collector is carried in a
context variable so concurrent evaluations on different threads or
tasks never interleave their traces.  The default collector is a no-op
whose only cost is one attribute check per instrumentation point, so
untraced evaluation speed is unaffected.
"""

from __future__ import annotations

import contextvars
from dataclasses import dataclass, field


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    kind: str  # kernel | rule | alloc | free | detect
    name: str
    detail: str = ""


@dataclass
class Counters:
    """Aggregate costs of one evaluation.

    ``flops`` counts multiply-add-equivalent floating point operations
    using each kernel's documented formula; ``allocations`` counts
    matrix buffer acquisitions.
    """

    flops: int = 0
    allocations: int = 0
    kernel_calls: int = 0

    def reset(self) -> None:
        self.flops = 0
        self.allocations = 0
        self.kernel_calls = 0


class _NullCollector:
    """Default collector: records nothing."""

    active = False

    def kernel(self, name, detail="", flops=0):
        pass

    def rule(self, name, detail=""):
        pass

    def detect(self, name, detail=""):
        pass

    def alloc(self, role, shape, ident):
        pass

    def free(self, role, shape, ident):
        pass

    def add_flops(self, n):
        pass


class TraceCollector:
    """Accumulates events and counters for a single evaluation."""

    active = True

    def __init__(self) -> None:
        self.events: list[TraceEvent] = []
        self.counters = Counters()
        self._seq = 0

    def _emit(self, kind: str, name: str, detail: str) -> None:
        self._seq += 1
        self.events.append(TraceEvent(self._seq, kind, name, detail))

    def kernel(self, name: str, detail: str = "", flops: int = 0) -> None:
        self.counters.kernel_calls += 1
        self.counters.flops += flops
        self._emit("kernel", name, detail)

    def rule(self, name: str, detail: str = "") -> None:
        self._emit("rule", name, detail)

    def detect(self, name: str, detail: str = "") -> None:
        self._emit("detect", name, detail)

    def alloc(self, role: str, shape, ident: int) -> None:
        self.counters.allocations += 1
        self._emit("alloc", role, f"{shape[0]}x{shape[1]}, id={ident}")

    def free(self, role: str, shape, ident: int) -> None:
        self._emit("free", role, f"{shape[0]}x{shape[1]}, id={ident}")

    def add_flops(self, n: int) -> None:
        """Count work done inline by an evaluator, outside any kernel."""
        self.counters.flops += n


_NULL = _NullCollector()

_collector: contextvars.ContextVar = contextvars.ContextVar(
    "lazymat_collector", default=_NULL
)


def current_collector():
    return _collector.get()


@dataclass
class TraceResult:
    result: object
    events: list = field(default_factory=list)
    counters: Counters = field(default_factory=Counters)


def with_trace(thunk) -> TraceResult:
    """Run ``thunk`` under a fresh collector and return its record.

    If the thunk raises, the exception propagates with the events
    captured so far attached as ``partial_trace``.
    """
    collector = TraceCollector()
    token = _collector.set(collector)
    try:
        result = thunk()
    except Exception as exc:
        exc.partial_trace = collector.events
        raise
    finally:
        _collector.reset(token)
    return TraceResult(result, collector.events, collector.counters)


def render_trace(events) -> str:
    """Render events one per line: ``{seq:04}: {kind}: {name} [{detail}]``."""
    return "\n".join(
        f"{e.seq:04d}: {e.kind}: {e.name} [{e.detail}]" for e in events
    )
