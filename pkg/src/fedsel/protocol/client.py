"""Blocking socket client: one simulated device talking to an FLServer."""

from __future__ import annotations

import logging
import socket
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from ..devices import DeviceProfile
from ..model import TensorSpec, load_flat_weights, save_checkpoint
from ..orchestrator.coordinator import ClientWorker
from . import codec
from .codec import (
    AGGREGATED,
    PENDING,
    ROUND_SKIPPED,
    SELECTED,
    SHUTDOWN,
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


@dataclass
class RoundOutcome:
    t: int
    directive: str
    epochs: int = 0
    status: Optional[str] = None  # AGGREGATED / VOIDED / ABORTED / None when not selected
    duration: Optional[float] = None  # logical seconds of local training
    waiting: Optional[float] = None  # logical waiting time reported by the server
    wall_waiting: Optional[float] = None  # aggregate receipt minus own upload, wall seconds


class FLClient:
    def __init__(
        self,
        profile: DeviceProfile,
        seed: int,
        host: str,
        port: int,
        local_lr: float = 0.1,
        wall_time_scale: float = 0.0,
        checkpoint_dir: Optional[str] = None,
        timeout: float = 600.0,
    ):
        self.worker = ClientWorker(profile, seed, local_lr)
        self.addr = (host, int(port))
        self.wall_time_scale = wall_time_scale
        self.checkpoint = Path(checkpoint_dir) / f"{profile.device_id}.ckpt" if checkpoint_dir else None
        self.timeout = timeout
        self.outcomes: List[RoundOutcome] = []
        self._sock: Optional[socket.socket] = None
        self._file = None

    @property
    def client_id(self) -> str:
        return self.worker.client_id

    def _call(self, msg: codec.Message) -> codec.Message:
        self._sock.sendall(codec.encode_frame(msg))
        reply = codec.read_frame(self._file)
        if isinstance(reply, ErrorMsg):
            raise ProtocolError(f"server error {reply.code}: {reply.message}")
        if reply.client_id != msg.client_id or reply.round != msg.round:
            raise ProtocolError(f"reply for ({reply.client_id}, {reply.round}) to request ({msg.client_id}, {msg.round})")
        return reply

    def run(self) -> List[RoundOutcome]:
        self._sock = socket.create_connection(self.addr, timeout=self.timeout)
        self._file = self._sock.makefile("rb")
        try:
            t = 1
            while True:
                outcome = self._round(t)
                if outcome is None:
                    break
                self.outcomes.append(outcome)
                t += 1
        except (ConnectionError, OSError, ProtocolError) as exc:
            logger.warning("%s: session ended: %s", self.client_id, exc)
        finally:
            self._file.close()
            self._sock.close()
        return self.outcomes

    def _round(self, t: int) -> Optional[RoundOutcome]:
        cid = self.client_id
        rep = self.worker.report(t)
        ctx = rep.context.to_dict() if rep.context is not None else None
        resp = self._call(
            CommunicatedTextReq(
                cid, t, context=ctx, n_samples=rep.n_samples,
                status="READY" if ctx is not None else "UNAVAILABLE", oracle_batch_time=rep.oracle_batch_time,
            )
        )
        if not isinstance(resp, CommunicatedTextResp):
            raise ProtocolError(f"expected CommunicatedTextResp, got {type(resp).__name__}")
        if resp.directive == SHUTDOWN:
            return None
        if resp.directive in (WAIT, ROUND_SKIPPED):
            return RoundOutcome(t, resp.directive)
        if resp.directive != SELECTED or resp.epochs is None or resp.epochs < 1 or not resp.batch_size:
            logger.error("%s: invalid SELECTED directive %r at round %d; not training", cid, resp, t)
            return RoundOutcome(t, resp.directive, status="ABORTED")

        gw = self._call(GetGlobalWeightsReq(cid, t))
        if not isinstance(gw, GetGlobalWeightsResp) or gw.weights is None:
            raise ProtocolError("expected global weights")
        manifest = [TensorSpec(name, tuple(shape)) for name, shape in gw.manifest]
        weights = load_flat_weights(gw.weights, manifest)

        result = self.worker.train(t, weights, resp.epochs, resp.batch_size, resp.lr)
        if self.wall_time_scale > 0:
            time.sleep(result.duration * self.wall_time_scale)
        if result.update is None:
            logger.warning("%s: device switched off during round %d", cid, t)
            return RoundOutcome(t, SELECTED, resp.epochs, "ABORTED", result.duration)

        u = result.update
        up = self._call(
            GetFLWeightsReq(
                cid, t, wer=u.wer, n_samples=u.n_samples, batch_time=u.batch_time_observed,
                battery_drop=u.battery_drop_observed, duration=result.duration,
                epochs_completed=result.epochs_completed, battery_after=result.battery_after, weights=u.weights,
            )
        )
        uploaded_at = time.monotonic()
        while isinstance(up, GetFLWeightsResp) and up.status == PENDING:
            up = self._call(GetFLWeightsReq(cid, t))
        if not isinstance(up, GetFLWeightsResp):
            raise ProtocolError(f"expected GetFLWeightsResp, got {type(up).__name__}")
        wall = time.monotonic() - uploaded_at
        if up.status == AGGREGATED and self.checkpoint is not None:
            save_checkpoint(self.checkpoint, load_flat_weights(up.weights, manifest), t)
        return RoundOutcome(t, SELECTED, resp.epochs, up.status, result.duration, up.waiting, wall)


def run_client(profile: DeviceProfile, seed: int, host: str, port: int, **kwargs) -> List[RoundOutcome]:
    return FLClient(profile, seed, host, port, **kwargs).run()
