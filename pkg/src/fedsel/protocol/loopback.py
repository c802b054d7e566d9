"""Run a whole socket-mode experiment on localhost in one process.

The server runs on its own event loop in a background thread and every
fleet device gets a blocking client thread. Handy for tests and for
checking that socket mode reproduces the in-process simulator.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from ..orchestrator.config import ExperimentConfig
from .client import FLClient, RoundOutcome
from .server import FLServer, ServerOptions, run_server


@dataclass
class LoopbackResult:
    server: FLServer
    outcomes: Dict[str, List[RoundOutcome]] = field(default_factory=dict)


def run_loopback(
    cfg: ExperimentConfig, seed: int, options: Optional[ServerOptions] = None, timeout: float = 120.0
) -> LoopbackResult:
    options = options or ServerOptions(host="127.0.0.1", port=0)
    ready = threading.Event()
    box: dict = {}

    def on_ready(addr):
        box["addr"] = addr
        ready.set()

    def serve_thread():
        try:
            box["server"] = run_server(cfg, seed, options, on_ready)
        except BaseException as exc:  # surface in the caller's thread
            box["error"] = exc
            ready.set()

    st = threading.Thread(target=serve_thread, name="fl-server", daemon=True)
    st.start()
    if not ready.wait(timeout) or "error" in box:
        raise RuntimeError(f"server failed to start: {box.get('error')}")
    host, port = box["addr"]

    clients = [
        FLClient(p, seed, host, port, local_lr=cfg.local_lr, wall_time_scale=cfg.wall_time_scale, timeout=timeout)
        for p in cfg.resolve_fleet().profiles
    ]
    threads = [threading.Thread(target=c.run, name=f"fl-client-{c.client_id}", daemon=True) for c in clients]
    for th in threads:
        th.start()
    for th in threads:
        th.join(timeout)
    st.join(timeout)
    if "error" in box:
        raise box["error"]
    if st.is_alive() or "server" not in box:
        raise TimeoutError("socket experiment did not finish in time")
    return LoopbackResult(box["server"], {c.client_id: c.outcomes for c in clients})
