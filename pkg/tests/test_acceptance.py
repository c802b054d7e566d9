"""Acceptance criteria, one PASS/FAIL line each.

Run with pytest (lines are repeated in the terminal summary) or directly:
``python tests/test_acceptance.py``. The bandit benchmark takes a few
minutes and carries the ``slow`` marker.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from msggen import fuzz_input, random_message  # noqa: E402

from fedsel.aggregation import ClientUpdate, softmax_coefficients, wer_weighted_aggregate
from fedsel.bandits.confidence import ConfidenceState
from fedsel.bandits.mlp import init_mlp, mlp_forward, mlp_gradient
from fedsel.model import ModelWeights, describe_weights, flatten_weights, load_flat_weights
from fedsel.model.weights import TensorSpec
from fedsel.orchestrator.bench import run_bandit_bench
from fedsel.orchestrator.config import ExperimentConfig
from fedsel.orchestrator.engine import SimulationState, run_round, run_seed
from fedsel.orchestrator.scenarios import scenario_table2
from fedsel.protocol import ServerOptions, run_loopback
from fedsel.protocol.codec import ProtocolError, decode_frame, encode_frame

RESULTS = []


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _client(rec, cid):
    return next(c for c in rec["clients"] if c["client_id"] == cid)


# --- straggler scenarios ----------------------------------------------------


def check_scenario1_resource_aware():
    rec, dt = _timed(lambda: scenario_table2(1, "resource_aware"))
    epochs = (_client(rec, "client1")["e_t"], _client(rec, "client2")["e_t"])
    ok = (
        epochs == (4, 7)
        and abs(rec["m_t_min"] - 146.56) <= 0.05
        and abs(rec["waiting_min"] - 7.42) <= 0.02
        and dt < 1.0
    )
    return ok, f"epochs={epochs} m_t={rec['m_t_min']:.4f} min waiting={rec['waiting_min']:.4f} min ({dt:.3f}s)"


def check_scenario1_random():
    rec, dt = _timed(lambda: scenario_table2(1, "random"))
    epochs = (_client(rec, "client1")["e_t"], _client(rec, "client2")["e_t"])
    ok = epochs == (7, 7) and abs(rec["waiting_min"] - 114.92) <= 0.02 and dt < 1.0
    return ok, f"epochs={epochs} waiting={rec['waiting_min']:.4f} min ({dt:.3f}s)"


def check_scenario2_resource_aware():
    rec, dt = _timed(lambda: scenario_table2(2, "resource_aware"))
    c1, c2 = _client(rec, "client1"), _client(rec, "client2")
    m_t_s = rec["m_t_min"] * 60
    # formula value for client 2: floor((m_t / b_hat) * (bs / n)) clamped to [e_min, e_max_t]
    e2_formula = min(max(math.floor(m_t_s / c2["b_t_hat_s"] * 5 / 25 + 1e-9), 1), c2["e_max_t"])
    ok = (
        c1["e_t"] == 3
        and not c1["died"]
        and c1["battery_after"] >= 20.0
        and c2["e_t"] == e2_formula
        and rec["completed"]
        and math.isfinite(rec["waiting_min"])
        and rec["waiting_min"] <= 15.0
        and dt < 1.0
    )
    return ok, (
        f"e1={c1['e_t']} battery1={c1['battery_after']:.1f} e2={c2['e_t']} (formula {e2_formula}) "
        f"m_t={rec['m_t_min']:.4f} min waiting={rec['waiting_min']:.4f} min ({dt:.3f}s)"
    )


def check_scenario2_random_fidelity():
    rec, dt = _timed(lambda: scenario_table2(2, "random", paper_fidelity=True))
    c1 = _client(rec, "client1")
    ok = c1["died"] and c1["battery_after"] == 0.0 and rec["watchdog_fired"] and not rec["completed"] and dt < 5.0
    return ok, (
        f"client1 died={c1['died']} battery={c1['battery_after']} watchdog_fired={rec['watchdog_fired']} "
        f"completed={rec['completed']} ({dt:.3f}s)"
    )


# --- numerical oracles ------------------------------------------------------


def check_aggregation_oracle():
    oracle = math.exp(0.8) / (math.exp(0.8) + math.exp(0.2))
    out = wer_weighted_aggregate(
        [ClientUpdate("a", np.array([1.0], np.float32), 0.2, 25), ClientUpdate("b", np.array([0.0], np.float32), 0.8, 25)]
    )
    rng = np.random.default_rng(0)
    worst = max(abs(softmax_coefficients(rng.uniform(0, 1, rng.integers(1, 30))).sum() - 1.0) for _ in range(1000))
    ok = abs(out[0] - 0.64566) <= 1e-4 and abs(out[0] - oracle) <= 1e-4 and worst <= 1e-9
    return ok, f"aggregate={out[0]:.6f} oracle={oracle:.6f} max|sum-1|={worst:.2e} over 1000 sets"


def _fd(params, x, channel, h=1e-4):
    theta = params.theta
    g = np.zeros_like(theta)
    for i in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (mlp_forward(params.with_theta(up), x)[channel] - mlp_forward(params.with_theta(dn), x)[channel]) / (2 * h)
    return g


def check_gradient():
    def run():
        rng = np.random.default_rng(2024)
        errs = []
        for _ in range(20):
            depth = int(rng.integers(1, 4))
            hidden = tuple(int(h) for h in rng.integers(2, 17, size=depth))
            d = int(rng.integers(2, 8))
            p = init_mlp(d, hidden, 2, rng=rng)
            x = rng.uniform(-1, 1, size=d)
            ch = int(rng.integers(0, 2))
            g, fd = mlp_gradient(p, x, ch), _fd(p, x, ch)
            errs.append(np.linalg.norm(g - fd) / max(np.linalg.norm(g) + np.linalg.norm(fd), 1e-12))
        return max(errs)

    worst, dt = _timed(run)
    return worst <= 1e-3 and dt < 5.0, f"max relative error {worst:.2e} over 20 instances ({dt:.2f}s)"


def check_confidence():
    def run():
        rng = np.random.default_rng(7)
        worst = 0.0
        for p, m in ((800, 32.0), (200, 1.0)):
            state = ConfidenceState(p, lam=1.0)
            z = np.eye(p)
            for _ in range(200):
                g = rng.normal(size=p)
                state.update(g, m)
                z += np.outer(g, g) / m
            worst = max(worst, float(np.max(np.abs(state.z_inv @ z - np.eye(p)))))
        return worst

    worst, dt = _timed(run)
    return worst <= 1e-6 and dt < 10.0, f"max|Z_inv Z - I| = {worst:.2e} after 200 updates, p up to 800 ({dt:.2f}s)"


# --- experiments --------------------------------------------------------------


def check_bandit_ordering():
    res, dt = _timed(lambda: run_bandit_bench(rounds=475, seeds=range(5)))
    mse = {k: float(np.mean(v.final_mse)) for k, v in res.items()}
    reg = {k: float(np.mean(v.cumulative_regret)) for k, v in res.items()}
    ok = (
        mse["linucb"] > mse["neuralucb_s"] >= mse["neuralucb_m"]
        and reg["neuralucb_m"] < min(reg["neuralucb_s"], reg["linucb"])
        and dt < 600
    )
    fmt = lambda d: " ".join(f"{k}={v:.4g}" for k, v in d.items())
    return ok, f"MSE {fmt(mse)}; regret {fmt(reg)} ({dt:.0f}s)"


def check_waiting_dominance():
    def mean_wait(strategy):
        cfg = ExperimentConfig(fleet="scenario1_like", rounds=150, k=2, strategy=strategy, warmup_rounds=100, seeds=list(range(5)))
        waits = []
        for seed in cfg.seeds:
            for r in run_seed(cfg, seed).reports:
                if r.t > 100 and r.max_waiting is not None:
                    waits.append(r.max_waiting)
        return float(np.mean(waits))

    (ra, rnd), dt = _timed(lambda: (mean_wait("resource_aware"), mean_wait("random")))
    ratio = ra / rnd
    return ratio <= 0.25 and dt < 120, f"resource_aware {ra / 60:.2f} min vs random {rnd / 60:.2f} min, ratio {ratio:.3f} ({dt:.0f}s)"


def check_convergence():
    def run():
        out = {}
        for k in (3, 4, 5):
            cfg = ExperimentConfig(fleet="pool10", rounds=5, k=k, strategy="random", aggregation="wer_softmax", seeds=list(range(5)))
            runs = [run_seed(cfg, s) for s in cfg.seeds]
            out[k] = (float(np.mean([r.initial_error for r in runs])), float(np.mean([r.reports[-1].global_error for r in runs])))
        return out

    errs, dt = _timed(run)
    ok = all(final < init for init, final in errs.values()) and errs[5][1] <= errs[3][1] and dt < 60
    detail = " ".join(f"k={k}: {i:.3f}->{f:.3f}" for k, (i, f) in errs.items())
    return ok, f"{detail} ({dt:.1f}s)"


def check_dual_mode():
    def run():
        cfg = ExperimentConfig(fleet="scenario1", rounds=3, k=2, seeds=[7], warmup_rounds=1)
        opts = ServerOptions(host="127.0.0.1", port=0, min_upload_wait=1.0, poll_interval=0.05, drain_timeout=2.0)
        lb = run_loopback(cfg, 7, opts)
        state = SimulationState.create(cfg, 7)
        same = len(lb.server.reports) == 3
        for t, sock_rep, sock_w in zip(range(1, 4), lb.server.reports, lb.server.weights_history):
            rep = run_round(state, t)
            w = flatten_weights(state.coordinator.global_weights)
            same &= sock_rep.chosen == rep.chosen and sock_rep.epochs == rep.epochs
            same &= sock_rep.time_budget == rep.time_budget and sock_w.tobytes() == w.tobytes()
        return same

    same, dt = _timed(run)
    return same and dt < 30, f"plans, epochs and aggregated weights bit-identical over 3 rounds: {same} ({dt:.2f}s)"


def check_roundtrips():
    def run():
        rng = np.random.default_rng(11)
        for i in range(1000):
            specs = [TensorSpec(f"n{j}", tuple(int(d) for d in rng.integers(1, 6, size=rng.integers(1, 4)))) for j in range(rng.integers(0, 5))]
            w = ModelWeights({s.node_name: rng.standard_normal(s.shape).astype(np.float32) for s in specs})
            back = load_flat_weights(flatten_weights(w), describe_weights(w))
            if not (back == w and flatten_weights(back).tobytes() == flatten_weights(w).tobytes()):
                return f"weights roundtrip failed on model {i}"
        frames = []
        for i in range(100_000):
            m = random_message(rng)
            f = encode_frame(m)
            if decode_frame(f) != m:
                return f"codec roundtrip failed on message {i}"
            if i < 500:
                frames.append(f)
        for i in range(100_000):
            try:
                decode_frame(fuzz_input(rng, frames))
            except ProtocolError:
                pass
            except Exception as exc:  # anything untyped is a failure
                return f"fuzz input {i} raised {type(exc).__name__}: {exc}"
        return None

    err, dt = _timed(run)
    return err is None, (err or "1000 models, 1e5 messages, 1e5 fuzz inputs: all clean") + f" ({dt:.1f}s)"


CRITERIA = [
    ("scenario1_resource_aware", check_scenario1_resource_aware, False),
    ("scenario1_random", check_scenario1_random, False),
    ("scenario2_resource_aware", check_scenario2_resource_aware, False),
    ("scenario2_random_fidelity", check_scenario2_random_fidelity, False),
    ("aggregation_oracle", check_aggregation_oracle, False),
    ("gradient_check", check_gradient, False),
    ("confidence_matrix", check_confidence, False),
    ("bandit_ordering", check_bandit_ordering, True),
    ("waiting_time_dominance", check_waiting_dominance, True),
    ("fl_convergence", check_convergence, False),
    ("dual_mode_equivalence", check_dual_mode, False),
    ("roundtrip_suites", check_roundtrips, True),
]


@pytest.mark.parametrize(
    "name,check",
    [pytest.param(n, c, marks=[pytest.mark.slow] if slow else [], id=n) for n, c, slow in CRITERIA],
)
def test_criterion(name, check):
    ok, detail = check()
    assert report(name, ok, detail), detail


if __name__ == "__main__":
    failures = 0
    for name, check, _ in CRITERIA:
        ok, detail = check()
        failures += not report(name, ok, detail)
    sys.exit(1 if failures else 0)
