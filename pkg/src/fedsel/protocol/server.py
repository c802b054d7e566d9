"""Asyncio round server built on :class:`RoundCoordinator`.

All coordinator mutation happens on the event loop thread, so the round
state has exactly one mutator. Each connected client gets a handler
coroutine; handlers block on per-round events rather than busy-polling.

Wall-clock timeouts only bound how long the server waits for bytes. Which
uploads make the round is decided on logical (simulated) durations by the
coordinator, so socket and in-process runs agree bit for bit.
"""

from __future__ import annotations

import asyncio
import enum
import logging
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..aggregation import ClientUpdate
from ..devices import ContextVector
from ..model import flatten_weights
from ..orchestrator.config import ExperimentConfig
from ..orchestrator.coordinator import ClientReport, ClientResult, RoundCoordinator, RoundReport
from ..selection import SelectionPlan
from . import codec
from .codec import (
    AGGREGATED,
    PENDING,
    ROUND_SKIPPED,
    SELECTED,
    SHUTDOWN,
    VOIDED,
    WAIT,
    CommunicatedTextReq,
    CommunicatedTextResp,
    ErrorMsg,
    GetFLWeightsReq,
    GetFLWeightsResp,
    GetGlobalWeightsReq,
    GetGlobalWeightsResp,
    ProtocolError,
)

logger = logging.getLogger(__name__)


class SessionState(enum.Enum):
    IDLE = "IDLE"
    CONTEXT_RECEIVED = "CONTEXT_RECEIVED"
    SELECTED = "SELECTED"
    TRAINING = "TRAINING"
    UPDATE_RECEIVED = "UPDATE_RECEIVED"
    DONE = "DONE"


@dataclass
class ServerOptions:
    host: str = "127.0.0.1"
    port: int = 0
    context_timeout: float = 30.0  # wall seconds to wait for all contexts
    min_upload_wait: float = 5.0  # wall seconds, floor for the upload barrier
    poll_interval: float = 0.5  # long-poll hold for GetFLWeights polls
    drain_timeout: float = 5.0  # wall seconds to let clients collect SHUTDOWN


@dataclass
class _Round:
    t: int
    reports: Dict[str, ClientReport] = field(default_factory=dict)
    contexts_in: asyncio.Event = field(default_factory=asyncio.Event)
    plan: Optional[SelectionPlan] = None
    planned: asyncio.Event = field(default_factory=asyncio.Event)
    results: Dict[str, ClientResult] = field(default_factory=dict)
    uploads_in: asyncio.Event = field(default_factory=asyncio.Event)
    report: Optional[RoundReport] = None
    done: asyncio.Event = field(default_factory=asyncio.Event)
    closed: bool = False


async def read_message(reader: asyncio.StreamReader) -> codec.Message:
    head = await reader.readexactly(codec.LENGTH_PREFIX)
    (length,) = struct.unpack(">I", head)
    if length < 1 or length > codec.MAX_FRAME:
        raise codec.FramingError(f"bad frame length {length}")
    body = await reader.readexactly(length)
    return codec.decode_payload(body[0], body[1:])


class FLServer:
    """Runs ``cfg.rounds`` rounds for one seed against remote clients."""

    def __init__(self, cfg: ExperimentConfig, seed: int, options: Optional[ServerOptions] = None):
        self.cfg = cfg
        self.seed = int(seed)
        self.opts = options or ServerOptions()
        self.coordinator = RoundCoordinator(cfg, seed)
        self.expected = set(self.coordinator.client_ids)
        self.states: Dict[str, SessionState] = {cid: SessionState.IDLE for cid in self.expected}
        self.reports: List[RoundReport] = []
        self.weights_history: List[np.ndarray] = []
        self.hung = False
        self._round: Optional[_Round] = None
        self._rounds: Dict[int, _Round] = {}
        self._round_changed: Optional[asyncio.Condition] = None
        self._finished = False
        self._server: Optional[asyncio.base_events.Server] = None

    @property
    def address(self):
        return self._server.sockets[0].getsockname()[:2]

    async def start(self) -> None:
        self._round_changed = asyncio.Condition()
        self._server = await asyncio.start_server(self._handle, self.opts.host, self.opts.port)
        logger.info("listening on %s:%d", *self.address)

    async def run(self) -> List[RoundReport]:
        if self._server is None:
            await self.start()
        try:
            for t in range(1, self.cfg.rounds + 1):
                report = await self._run_round(t)
                self.reports.append(report)
                if report.watchdog_fired:
                    self.hung = True
                    logger.warning("round %d never completed; stopping", t)
                    break
        finally:
            async with self._round_changed:
                self._finished = True
                self._round_changed.notify_all()
            await asyncio.sleep(0)
            await self._drain()
            self._server.close()
            await self._server.wait_closed()
        return self.reports

    async def _drain(self) -> None:
        loop = asyncio.get_running_loop()
        end = loop.time() + self.opts.drain_timeout
        while any(s is not SessionState.DONE for s in self.states.values()) and loop.time() < end:
            await asyncio.sleep(0.05)

    # -- round driver ----------------------------------------------------

    async def _run_round(self, t: int) -> RoundReport:
        rnd = _Round(t)
        self._rounds[t] = rnd
        self._rounds.pop(t - 2, None)
        async with self._round_changed:
            self._round = rnd
            self._round_changed.notify_all()
        try:
            await asyncio.wait_for(rnd.contexts_in.wait(), self.opts.context_timeout)
        except asyncio.TimeoutError:
            logger.warning("round %d: contexts missing from %s", t, sorted(self.expected - set(rnd.reports)))
        reports = [rnd.reports[cid] for cid in sorted(rnd.reports)]
        rnd.plan = self.coordinator.plan(t, reports)
        rnd.planned.set()
        logger.info("round %d: chosen %s epochs %s", t, rnd.plan.chosen, rnd.plan.epochs)

        if rnd.plan.chosen:
            wall = self._upload_wait(rnd.plan)
            try:
                await asyncio.wait_for(rnd.uploads_in.wait(), wall)
            except asyncio.TimeoutError:
                logger.warning("round %d: upload barrier timed out, missing %s", t, sorted(set(rnd.plan.chosen) - set(rnd.results)))
        rnd.closed = True
        rnd.report = self.coordinator.complete(t, rnd.plan, reports, dict(rnd.results))
        self.weights_history.append(flatten_weights(self.coordinator.global_weights))
        rnd.done.set()
        return rnd.report

    def _upload_wait(self, plan: SelectionPlan) -> float:
        deadline = self.coordinator.deadline(plan)
        horizon = deadline if deadline is not None else self.cfg.watchdog
        return max(self.opts.min_upload_wait, horizon * self.cfg.wall_time_scale)

    async def _await_round(self, t: int) -> Optional[_Round]:
        """Block until round ``t`` (or a later one) is current; None once the run is over."""
        async with self._round_changed:
            await self._round_changed.wait_for(
                lambda: self._finished or (self._round is not None and self._round.t >= t)
            )
            return None if self._finished else self._round

    # -- connection handling ----------------------------------------------

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        cid = None
        try:
            while True:
                try:
                    msg = await read_message(reader)
                except asyncio.IncompleteReadError:
                    break
                except ProtocolError as exc:
                    logger.warning("%s: %s", peer, exc)
                    await self._send(writer, ErrorMsg("", 0, code="PROTOCOL", message=str(exc)))
                    break
                cid = msg.client_id
                reply = await self._dispatch(msg)
                await self._send(writer, reply)
                if isinstance(reply, CommunicatedTextResp) and reply.directive == SHUTDOWN:
                    break
        except (ConnectionError, OSError) as exc:
            logger.info("%s (%s) disconnected: %s", peer, cid, exc)
        finally:
            if cid in self.states:
                self.states[cid] = SessionState.DONE
            writer.close()

    @staticmethod
    async def _send(writer: asyncio.StreamWriter, msg: codec.Message) -> None:
        writer.write(codec.encode_frame(msg))
        await writer.drain()

    async def _dispatch(self, msg: codec.Message) -> codec.Message:
        if msg.client_id not in self.expected:
            return ErrorMsg(msg.client_id, msg.round, code="UNKNOWN_CLIENT", message="client not in fleet")
        if isinstance(msg, CommunicatedTextReq):
            return await self._on_context(msg)
        if isinstance(msg, GetGlobalWeightsReq):
            return self._on_global_weights(msg)
        if isinstance(msg, GetFLWeightsReq):
            return await self._on_fl_weights(msg)
        return ErrorMsg(msg.client_id, msg.round, code="UNEXPECTED", message=type(msg).__name__)

    async def _on_context(self, msg: CommunicatedTextReq) -> codec.Message:
        cid, t = msg.client_id, msg.round
        rnd = await self._await_round(t)
        if rnd is None:
            return CommunicatedTextResp(cid, t, directive=SHUTDOWN)
        if rnd.t != t or rnd.planned.is_set():
            return CommunicatedTextResp(cid, t, directive=WAIT)  # too late for this round
        try:
            ctx = ContextVector.from_dict(msg.context) if msg.context is not None else None
        except (KeyError, TypeError, ValueError) as exc:
            return ErrorMsg(cid, t, code="BAD_CONTEXT", message=str(exc))
        rnd.reports[cid] = ClientReport(cid, ctx, msg.n_samples, msg.oracle_batch_time)
        self.states[cid] = SessionState.CONTEXT_RECEIVED
        if set(rnd.reports) >= self.expected:
            rnd.contexts_in.set()
        await rnd.planned.wait()
        plan = rnd.plan
        if plan.empty:
            self.states[cid] = SessionState.IDLE
            return CommunicatedTextResp(cid, t, directive=ROUND_SKIPPED)
        if cid not in plan.chosen:
            self.states[cid] = SessionState.IDLE
            return CommunicatedTextResp(cid, t, directive=WAIT)
        self.states[cid] = SessionState.SELECTED
        return CommunicatedTextResp(
            cid, t, directive=SELECTED, epochs=int(plan.epochs[cid]), batch_size=int(plan.bs), lr=float(self.cfg.local_lr)
        )

    def _on_global_weights(self, msg: GetGlobalWeightsReq) -> codec.Message:
        cid, t = msg.client_id, msg.round
        rnd = self._rounds.get(t)
        if rnd is None or rnd.plan is None or cid not in rnd.plan.chosen or rnd.closed:
            return ErrorMsg(cid, t, code="NOT_SELECTED", message="no weights for this client and round")
        self.states[cid] = SessionState.TRAINING
        coord = self.coordinator
        manifest = [(s.node_name, list(s.shape)) for s in coord.manifest]
        return GetGlobalWeightsResp(cid, t, manifest=manifest, weights=flatten_weights(coord.global_weights))

    async def _on_fl_weights(self, msg: GetFLWeightsReq) -> codec.Message:
        cid, t = msg.client_id, msg.round
        rnd = self._rounds.get(t)
        if rnd is None or rnd.plan is None or cid not in rnd.plan.chosen:
            return ErrorMsg(cid, t, code="NOT_SELECTED", message="not part of this round")
        if msg.weights is not None:
            if rnd.closed:
                return GetFLWeightsResp(cid, t, status=VOIDED)
            if msg.wer is None or msg.duration is None or msg.batch_time is None or msg.battery_drop is None:
                return ErrorMsg(cid, t, code="INCOMPLETE_UPLOAD", message="upload needs wer, duration and costs")
            update = ClientUpdate(
                client_id=cid,
                weights=np.asarray(msg.weights, dtype=np.float32),
                wer=float(msg.wer),
                n_samples=int(msg.n_samples),
                batch_time_observed=float(msg.batch_time),
                battery_drop_observed=float(msg.battery_drop),
            )
            per_epoch = max(1, msg.n_samples // rnd.plan.bs)
            rnd.results[cid] = ClientResult(
                cid, float(msg.duration), update, msg.epochs_completed * per_epoch, msg.epochs_completed,
                False, msg.battery_after,
            )
            self.states[cid] = SessionState.UPDATE_RECEIVED
            if set(rnd.results) >= set(rnd.plan.chosen):
                rnd.uploads_in.set()
            return GetFLWeightsResp(cid, t, status=PENDING)

        try:
            await asyncio.wait_for(rnd.done.wait(), self.opts.poll_interval)
        except asyncio.TimeoutError:
            return GetFLWeightsResp(cid, t, status=PENDING)
        rec = rnd.report.clients.get(cid)
        if rnd.report.voided or rec is None or not rec.aggregated:
            self.states[cid] = SessionState.IDLE
            return GetFLWeightsResp(cid, t, status=VOIDED)
        self.states[cid] = SessionState.IDLE
        return GetFLWeightsResp(
            cid, t, status=AGGREGATED, waiting=rec.waiting, weights=flatten_weights(self.coordinator.global_weights)
        )


async def serve(cfg: ExperimentConfig, seed: int, options: Optional[ServerOptions] = None, ready=None) -> FLServer:
    """Start, signal ``ready(address)`` if given, run all rounds, return the server."""
    server = FLServer(cfg, seed, options)
    await server.start()
    if ready is not None:
        ready(server.address)
    await server.run()
    return server


def run_server(cfg: ExperimentConfig, seed: int, options: Optional[ServerOptions] = None, ready=None) -> FLServer:
    return asyncio.run(serve(cfg, seed, options, ready))
