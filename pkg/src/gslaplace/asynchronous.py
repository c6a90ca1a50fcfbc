"""Asynchronous iteration over the Laplace nodes.

Worker ``i`` owns node ``z_i``. On each activation it reads the freshest
node solutions it has received, assembles ``u`` with the inversion sum,
freezes the diffusion ratio at that ``u``, solves its own node problem and
publishes the result without waiting for anybody.

Two execution modes share this worker logic:

``simulated``
    A single-threaded event loop over global steps ``k = 0, 1, ...``. At
    each step an activation policy picks the workers that update, and every
    message gets a delivery delay from a delay model. Both are driven by
    seeded generators and recorded in the trace, so a run can be replayed
    bit for bit.
``concurrent``
    One thread per worker, exchanging values through single-slot mailboxes,
    with a coordinator thread watching the residual board.

Version stamps in simulated mode are global: a value published at step
``k`` carries version ``k + 1`` and the initial state is version ``0``.
The read stamp ``rho[i][j]`` logged for an activation at step ``k`` is the
last global index at which the value read was still ``j``'s current one,
so ``rho <= k`` always and ``k - rho`` is the staleness of the read.
"""

from __future__ import annotations

import bisect
import hashlib
import heapq
import logging
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .bsm import MarketParams, payoff, transform_params
from .direct import check_tau
from .exceptions import InvalidArgument, NumericalBreakdown
from .freq_solver import GridFunction, SpatialGrid, solve_frequency
from .stehfest import compute_weights, frequency_nodes, invert
from .sync import ConvergenceReport, IterationConfig, Status, blown_up, coefficient

logger = logging.getLogger(__name__)

__all__ = [
    "DelayModel",
    "ActivationPolicy",
    "Mailbox",
    "AsyncEvent",
    "AsyncTrace",
    "async_solve",
    "run_async",
    "replay",
    "check_trace",
    "format_trace",
    "parse_trace",
]

TRACE_HEADER = "# step\tworker\tk\tresidual\tversions\trho"


@dataclass(frozen=True)
class DelayModel:
    """Message delivery delay, in global steps.

    ``zero``: every message is readable at the step after it was sent.
    ``bounded``: each message is late with probability ``late`` and then
    waits a uniform ``1..D`` extra steps, so no read is more than ``D``
    steps stale. The default ``late = D / (D + 1)`` makes the extra wait
    uniform on ``0..D``.
    """

    mode: str = "zero"
    D: int = 0
    seed: int | None = None
    late: float | None = None

    def __post_init__(self):
        if self.mode not in ("zero", "bounded"):
            raise InvalidArgument(f"unknown delay mode {self.mode!r}")
        if int(self.D) != self.D or self.D < 0:
            raise InvalidArgument(f"D must be a non-negative integer, got {self.D}")
        if self.mode == "zero" and self.D:
            raise InvalidArgument("zero delay model takes D=0")
        if self.late is None:
            object.__setattr__(self, "late", self.D / (self.D + 1))
        if not 0.0 <= self.late <= 1.0:
            raise InvalidArgument(f"late must be a probability, got {self.late}")

    @classmethod
    def zero(cls):
        return cls("zero", 0, None)

    @classmethod
    def bounded(cls, seed, D, late=None):
        return cls("bounded", int(D), seed, late)

    @property
    def bound(self) -> int:
        return self.D


@dataclass(frozen=True)
class ActivationPolicy:
    """Which workers update at each global step.

    ``all``: every worker at every step.
    ``window``: one worker per step, drawn at random subject to every
    worker appearing in every ``W`` consecutive steps.
    """

    mode: str = "all"
    W: int = 0
    seed: int | None = None

    def __post_init__(self):
        if self.mode not in ("all", "window"):
            raise InvalidArgument(f"unknown activation mode {self.mode!r}")
        if self.mode == "window" and (int(self.W) != self.W or self.W < 1):
            raise InvalidArgument(f"W must be a positive integer, got {self.W}")

    @classmethod
    def all_active(cls):
        return cls("all", 0, None)

    @classmethod
    def window_fair(cls, seed, W):
        return cls("window", int(W), seed)


class Mailbox:
    """Single-slot latest-value registers, one per ordered worker pair.

    A delivery only overwrites a slot if it carries a newer stamp, so the
    stamps read from any one slot never decrease.
    """

    def __init__(self, p):
        self.p = p
        self._slots = {}
        self._lock = threading.Lock()

    def deliver(self, receiver, sender, stamp, values) -> bool:
        key = (receiver, sender)
        with self._lock:
            current = self._slots.get(key)
            if current is not None and current[0] >= stamp:
                return False
            self._slots[key] = (stamp, values)
            return True

    def read(self, receiver, sender):
        """``(stamp, values)`` or ``None`` if nothing has arrived yet."""
        with self._lock:
            return self._slots.get((receiver, sender))


@dataclass
class AsyncEvent:
    step: int
    worker: int
    k: int
    residual: float
    versions: tuple
    rho: tuple


@dataclass
class AsyncTrace:
    p: int
    mode: str
    counters: list
    events: list = field(default_factory=list)
    residual_snapshots: list = field(default_factory=list)
    activations: list = field(default_factory=list)
    delays: dict = field(default_factory=dict)
    delay_bound: int | None = None
    window: int | None = None
    stop_step: int | None = None
    fingerprint: str = ""
    iterates: list | None = None

    def to_lines(self):
        return format_trace(self)


class _SeededSchedule:
    def __init__(self, p, delay: DelayModel, activation: ActivationPolicy):
        if activation.mode == "window" and activation.W < p:
            raise InvalidArgument(f"window W={activation.W} cannot cover {p} workers")
        self.p = p
        self.delay = delay
        self.activation = activation
        self._drng = np.random.default_rng(delay.seed)
        self._arng = np.random.default_rng(activation.seed)
        self._last = [-1] * p

    def active(self, step):
        if self.activation.mode == "all":
            return tuple(range(self.p))
        W = self.activation.W
        deadlines = [last + W for last in self._last]
        pick = int(self._arng.integers(self.p))
        if not self._feasible(step, deadlines, pick):
            pick = min(range(self.p), key=lambda i: (deadlines[i], i))
        self._last[pick] = step
        return (pick,)

    def _feasible(self, step, deadlines, pick):
        rest = sorted(d for i, d in enumerate(deadlines) if i != pick)
        return all(d >= step + m for m, d in enumerate(rest, 1))

    def delay_for(self, step, sender, receiver):
        if self.delay.mode == "zero" or self.delay.D == 0:
            return 0
        if self._drng.random() >= self.delay.late:
            return 0
        return int(self._drng.integers(1, self.delay.D + 1))


class _RecordedSchedule:
    def __init__(self, trace: AsyncTrace):
        self.trace = trace

    def active(self, step):
        try:
            return tuple(self.trace.activations[step])
        except IndexError:
            raise InvalidArgument(f"trace has no activation record for step {step}") from None

    def delay_for(self, step, sender, receiver):
        try:
            return self.trace.delays[(step, sender, receiver)]
        except KeyError:
            raise InvalidArgument(
                f"trace has no delay for message {sender}->{receiver} at step {step}"
            ) from None


def _fingerprint(grid, p, tau, kappa, u0, cfg, linear, tau0):
    h = hashlib.sha256()
    h.update(repr((grid.x_min, grid.x_max, grid.N, p, tau, kappa, tau0, linear)).encode())
    h.update(repr((cfg.threshold, cfg.max_iters, cfg.divergence_bound)).encode())
    h.update(np.ascontiguousarray(u0, dtype=float).tobytes())
    return h.hexdigest()


class _Workers:
    """Per-worker state and the shared assemble/solve logic."""

    def __init__(self, grid, p, tau, kappa, u0, linear, tau0):
        self.grid = grid
        self.p = p
        self.tau = tau
        self.kappa = kappa
        self.u0 = u0
        self.linear = linear
        self.tau0 = tau0
        self.x = grid.x
        self.weights = compute_weights(p)
        self.z = frequency_nodes(tau, p).nodes
        self.prev_u = [None] * p
        self.board = [float("inf")] * p

    def assemble(self, stack):
        """Inverse transform of a full set of node solutions, or ``None``."""
        if any(v is None for v in stack):
            return None
        return invert(np.stack(stack), self.weights, self.tau)

    def report(self, i, u):
        """Residual of worker ``i`` for its freshly assembled ``u``."""
        if u is None:
            res = float("inf")
            u = self.u0
        elif self.prev_u[i] is None:
            res = float("inf")
        else:
            res = float(np.max(np.abs(u[1:-1] - self.prev_u[i][1:-1])))
        self.prev_u[i] = u
        return u, res

    def solve(self, i, u):
        a = coefficient(u, self.x, self.linear)
        try:
            sol = solve_frequency(self.grid, self.z[i], a, self.kappa, self.u0, tau0=self.tau0)
        except NumericalBreakdown as exc:
            exc.worker = i
            raise
        return sol.values.values


def run_async(
    grid: SpatialGrid,
    p: int,
    tau: float,
    kappa: float,
    u0,
    cfg: IterationConfig,
    *,
    linear: bool = False,
    tau0: float = 0.0,
    mode: str = "simulated",
    delay: DelayModel | None = None,
    activation: ActivationPolicy | None = None,
    record_iterates: bool = False,
    schedule=None,
    poll_interval: float = 1e-3,
):
    """Low-level driver in transformed units; see :func:`async_solve`."""
    u0 = np.array(u0, dtype=float)
    if mode == "simulated":
        return _run_simulated(
            grid, p, tau, kappa, u0, cfg, linear, tau0,
            delay or DelayModel.zero(), activation or ActivationPolicy.all_active(),
            record_iterates, schedule,
        )
    if mode == "concurrent":
        return _run_concurrent(grid, p, tau, kappa, u0, cfg, linear, tau0, poll_interval)
    raise InvalidArgument(f"mode must be 'simulated' or 'concurrent', got {mode!r}")


def _run_simulated(grid, p, tau, kappa, u0, cfg, linear, tau0, delay, activation,
                   record_iterates, schedule):
    w = _Workers(grid, p, tau, kappa, u0, linear, tau0)
    if schedule is None:
        schedule = _SeededSchedule(p, delay, activation)
    trace = AsyncTrace(
        p=p,
        mode="simulated",
        counters=[0] * p,
        delay_bound=delay.bound,
        window=activation.W if activation.mode == "window" else None,
        fingerprint=_fingerprint(grid, p, tau, kappa, u0, cfg, linear, tau0),
        iterates=[] if record_iterates else None,
    )
    mailbox = Mailbox(p)
    latest = [None] * p  # (version, values) of each worker's own newest solution
    published = [[] for _ in range(p)]  # versions each worker has produced
    inflight = []  # heap of (arrival, receiver, sender, version)
    payloads = {}
    history = []
    status = Status.MAX_ITERS
    final = None
    step = 0

    def rho_of(j, version, k):
        pv = published[j]
        pos = bisect.bisect_right(pv, version)
        if pos < len(pv) and pv[pos] <= k:
            return pv[pos] - 1
        return k

    while True:
        while inflight and inflight[0][0] <= step:
            _, recv, send, ver = heapq.heappop(inflight)
            mailbox.deliver(recv, send, ver, payloads[(send, ver)])

        active = schedule.active(step)
        if len(trace.activations) <= step:
            trace.activations.append(active)
        assembled = {}
        for i in active:
            reads = []
            for j in range(p):
                slot = latest[j] if j == i else mailbox.read(i, j)
                reads.append(slot)
            versions = tuple(0 if s is None else s[0] for s in reads)
            rho = tuple(rho_of(j, versions[j], step) for j in range(p))
            u = w.assemble([None if s is None else s[1] for s in reads])
            u, res = w.report(i, u)
            w.board[i] = res
            assembled[i] = u
            trace.events.append(AsyncEvent(step, i, trace.counters[i], res, versions, rho))

        if any(blown_up(u, cfg.divergence_bound) for u in assembled.values()):
            status = Status.DIVERGED
            final = next(u for u in assembled.values() if blown_up(u, cfg.divergence_bound))
            history.append(float("inf"))
            break
        snapshot = max(w.board)
        trace.residual_snapshots.append(snapshot)
        if np.isfinite(snapshot):
            history.append(snapshot)
        if record_iterates and len(active) == p:
            trace.iterates.append(assembled[0].copy())

        if snapshot <= cfg.threshold:
            # drain pending messages, then confirm every worker's last view
            # still matches the quiescent state
            while inflight:
                _, recv, send, ver = heapq.heappop(inflight)
                mailbox.deliver(recv, send, ver, payloads[(send, ver)])
            u_final = w.assemble([s[1] for s in latest])
            if u_final is not None and all(
                float(np.max(np.abs(u_final[1:-1] - w.prev_u[i][1:-1]))) <= cfg.threshold
                for i in range(p)
            ):
                status = Status.CONVERGED
                final = u_final
                break

        if max(trace.counters) >= cfg.max_iters:
            break

        for i in active:
            try:
                U = w.solve(i, assembled[i])
            except NumericalBreakdown as exc:
                exc.iteration = step
                raise
            version = step + 1
            latest[i] = (version, U)
            published[i].append(version)
            payloads[(i, version)] = U
            trace.counters[i] += 1
            for j in range(p):
                if j == i:
                    continue
                d = schedule.delay_for(step, i, j)
                trace.delays[(step, i, j)] = d
                heapq.heappush(inflight, (version + d, j, i, version))
        step += 1

    trace.stop_step = step
    if final is None:
        stack = [s[1] if s is not None else None for s in latest]
        final = w.assemble(stack)
        if final is None:
            final = u0.copy()
    report = ConvergenceReport(status, step, history)
    logger.debug("async p=%d tau=%g: %s at step %d", p, tau, status.value, step)
    return final, report, trace


def _run_concurrent(grid, p, tau, kappa, u0, cfg, linear, tau0, poll_interval):
    w = _Workers(grid, p, tau, kappa, u0, linear, tau0)
    mailbox = Mailbox(p)
    latest = [None] * p
    stop = threading.Event()
    lock = threading.Lock()
    trace = AsyncTrace(
        p=p,
        mode="concurrent",
        counters=[0] * p,
        fingerprint=_fingerprint(grid, p, tau, kappa, u0, cfg, linear, tau0),
    )
    fresh = [False] * p
    errors = []
    blowups = []
    done = [False] * p

    def worker(i):
        seen = None
        try:
            while not stop.is_set() and trace.counters[i] < cfg.max_iters:
                reads = [latest[j] if j == i else mailbox.read(i, j) for j in range(p)]
                versions = tuple(0 if s is None else s[0] for s in reads)
                if versions == seen:
                    # nothing new from the others; re-solving would repeat work
                    time.sleep(poll_interval / 10)
                    continue
                seen = versions
                u = w.assemble([None if s is None else s[1] for s in reads])
                u, res = w.report(i, u)
                with lock:
                    w.board[i] = res
                    fresh[i] = True
                    trace.events.append(AsyncEvent(-1, i, trace.counters[i], res, versions, versions))
                if blown_up(u, cfg.divergence_bound):
                    blowups.append(u)
                    stop.set()
                    return
                U = w.solve(i, u)
                trace.counters[i] += 1
                version = trace.counters[i]
                latest[i] = (version, U)
                for j in range(p):
                    if j != i:
                        mailbox.deliver(j, i, version, U)
        except Exception as exc:  # surfaced by the coordinator
            errors.append(exc)
            stop.set()
        finally:
            done[i] = True

    threads = [threading.Thread(target=worker, args=(i,), daemon=True) for i in range(p)]
    for t in threads:
        t.start()

    status = Status.MAX_ITERS
    history = []
    confirmations = 0
    while not stop.is_set():
        time.sleep(poll_interval)
        if all(done):
            break
        with lock:
            if not all(fresh):
                continue
            snapshot = max(w.board)
            for i in range(p):
                fresh[i] = False
        if np.isfinite(snapshot):
            history.append(snapshot)
        trace.residual_snapshots.append(snapshot)
        confirmations = confirmations + 1 if snapshot <= cfg.threshold else 0
        if confirmations >= 2:
            status = Status.CONVERGED
            break
    stop.set()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    if blowups:
        return blowups[0], ConvergenceReport(Status.DIVERGED, max(trace.counters), history + [float("inf")]), trace
    final = w.assemble([s[1] if s is not None else None for s in latest])
    if final is None:
        final = u0.copy()
    return final, ConvergenceReport(status, max(trace.counters), history), trace


def async_solve(
    m: MarketParams,
    grid: SpatialGrid | None = None,
    p: int = 6,
    tau: float | None = None,
    cfg: IterationConfig | None = None,
    *,
    mode: str = "simulated",
    delay: DelayModel | None = None,
    activation: ActivationPolicy | None = None,
    linear: bool = False,
    u0=None,
    record_iterates: bool = False,
):
    """Asynchronous iteration to transformed time ``tau`` (default: today).

    Returns ``(GridFunction, ConvergenceReport, AsyncTrace)``. The result
    is assembled from every worker's newest published node solution once
    the run terminates.

    Termination (simulated mode): when every worker's last residual is
    under the threshold, pending messages are delivered and each worker's
    last assembled iterate is compared against the quiescent one; the run
    stops only if all of them are within the threshold too. Concurrent
    mode stops after two consecutive board sweeps, each with a fresh report
    from every worker, fall under the threshold.
    """
    grid = grid or SpatialGrid()
    cfg = cfg or IterationConfig()
    tp = transform_params(m)
    tau = check_tau(tau, tp.tau_max)
    if u0 is None:
        u0 = payoff(grid.x)
    u0 = u0.values if isinstance(u0, GridFunction) else np.asarray(u0, dtype=float)
    u, report, trace = run_async(
        grid, p, tau, tp.kappa, u0, cfg,
        linear=linear, mode=mode, delay=delay, activation=activation,
        record_iterates=record_iterates,
    )
    return GridFunction(grid, u), report, trace


def replay(
    trace: AsyncTrace,
    m: MarketParams,
    grid: SpatialGrid | None = None,
    p: int | None = None,
    tau: float | None = None,
    cfg: IterationConfig | None = None,
    *,
    linear: bool = False,
    u0=None,
    tau0: float = 0.0,
) -> GridFunction:
    """Re-execute a simulated run from its recorded schedule."""
    if trace.mode != "simulated":
        raise InvalidArgument("only simulated traces can be replayed")
    grid = grid or SpatialGrid()
    cfg = cfg or IterationConfig()
    p = trace.p if p is None else p
    tp = transform_params(m)
    tau = check_tau(tau, tp.tau_max)
    if u0 is None:
        u0 = payoff(grid.x)
    u0 = u0.values if isinstance(u0, GridFunction) else np.asarray(u0, dtype=float)
    fp = _fingerprint(grid, p, tau, tp.kappa, u0, cfg, linear, tau0)
    if fp != trace.fingerprint:
        raise InvalidArgument("trace was recorded for different inputs")
    u, _, _ = _run_simulated(
        grid, p, tau, tp.kappa, np.array(u0, dtype=float), cfg, linear, tau0,
        DelayModel.zero(), ActivationPolicy.all_active(), False, _RecordedSchedule(trace),
    )
    return GridFunction(grid, u)


def check_trace(trace: AsyncTrace) -> list[str]:
    """Violations of the read-stamp, staleness and fairness invariants (empty if none)."""
    problems = []
    last_version = {}
    for ev in trace.events:
        for j, (r, v) in enumerate(zip(ev.rho, ev.versions)):
            if r > ev.step:
                problems.append(f"step {ev.step} worker {ev.worker}: rho[{j}]={r} > k")
            if r < v:
                problems.append(f"step {ev.step} worker {ev.worker}: rho[{j}]={r} < version {v}")
            if trace.delay_bound is not None and ev.step - r > trace.delay_bound:
                problems.append(
                    f"step {ev.step} worker {ev.worker}: staleness {ev.step - r} > D={trace.delay_bound}"
                )
            if j != ev.worker:
                key = (ev.worker, j)
                if v < last_version.get(key, 0):
                    problems.append(f"slot {key} went back from {last_version[key]} to {v}")
                last_version[key] = v
    if trace.window:
        W, acts = trace.window, trace.activations
        for s in range(0, max(len(acts) - W + 1, 0)):
            seen = set().union(*acts[s : s + W])
            if len(seen) < trace.p:
                problems.append(f"window starting at step {s} misses workers {set(range(trace.p)) - seen}")
    return problems


def format_trace(trace: AsyncTrace) -> list[str]:
    """One tab-separated line per activation event, after a ``#`` header."""
    lines = [TRACE_HEADER]
    for ev in trace.events:
        lines.append(
            f"{ev.step}\t{ev.worker}\t{ev.k}\t{ev.residual!r}\t"
            f"{','.join(map(str, ev.versions))}\t{','.join(map(str, ev.rho))}"
        )
    return lines


def parse_trace(lines) -> list[AsyncEvent]:
    events = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        step, worker, k, res, versions, rho = line.split("\t")
        events.append(
            AsyncEvent(
                int(step), int(worker), int(k), float(res),
                tuple(int(v) for v in versions.split(",")),
                tuple(int(v) for v in rho.split(",")),
            )
        )
    return events
