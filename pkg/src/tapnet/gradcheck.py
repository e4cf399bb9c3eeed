"""Central finite-difference verification of every layer and loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import layers
from .autodiff import Parameter, Tape
from .data import Graph
from .model import TapNetConfig, build_tapnet
from .train import aux_link_loss, classification_loss


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def check_gradients(loss_fn, params: list[Parameter], step: float = 1e-6) -> float:
    """Max relative error between tape gradients and central differences.

    loss_fn() builds a fresh tape from the current parameter values and
    returns a scalar loss Tensor along with its Tape.
    """
    for p in params:
        p.zero_grad()
    tape, loss = loss_fn()
    tape.backward(loss)
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.value.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            _, up = loss_fn()
            flat[j] = orig - step
            _, down = loss_fn()
            flat[j] = orig
            fd = (float(up.value[0, 0]) - float(down.value[0, 0])) / (2.0 * step)
            worst = max(worst, _rel_err(grad.reshape(-1)[j], fd))
    return worst


def _random_graph(rng: np.random.Generator, n: int) -> np.ndarray:
    adj = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.5:
                adj[i, j] = adj[j, i] = 1.0
    return adj


def _sum_output(builder):
    """Wrap a tensor-producing builder into a scalar loss function."""

    def loss_fn():
        tape = Tape()
        out = builder(tape)
        return tape, ad.sum_all(out)

    return loss_fn


def run_gradcheck(seed: int = 0, tol: float = 1e-4, instances: int = 20):
    """Finite-difference checks for each layer and loss at random small
    shapes; returns one CheckResult per component."""
    rng = np.random.default_rng(seed)
    results = []

    def run(name, make_case):
        worst = 0.0
        for _ in range(instances):
            loss_fn, params = make_case()
            worst = max(worst, check_gradients(loss_fn, params))
        results.append(CheckResult(name, worst, tol))

    def gcn_case():
        n, d_in, d_out = rng.integers(2, 6), rng.integers(1, 4), rng.integers(1, 4)
        adj = _random_graph(rng, n)
        h0 = rng.standard_normal((n, d_in))
        params = layers.GcnParams(Parameter(rng.standard_normal((d_in, d_out)), "w"))
        h_in = Parameter(h0, "h")

        def builder(tape):
            return layers.gcn_forward(tape, params, adj, tape.watch(h_in))

        return _sum_output(builder), [params.weight, h_in]

    run("gcn", gcn_case)

    def local_voting_case(with_wr):
        def make():
            n, d = rng.integers(2, 6), rng.integers(1, 4)
            adj = _random_graph(rng, n)
            h_in = Parameter(rng.standard_normal((n, d)), "h")
            w_r = Parameter(rng.standard_normal((d, d)), "w_r") if with_wr else None
            # weight the probability vector so the gradient is generic
            weights = rng.standard_normal((n, 1))

            def builder(tape):
                y, _ = layers.local_voting(
                    tape, adj, tape.watch(h_in),
                    tape.watch(w_r) if w_r is not None else None,
                )
                return ad.mul(y, tape.constant(weights))

            params = [h_in] + ([w_r] if w_r else [])
            return _sum_output(builder), params

        return make

    run("local_voting", local_voting_case(with_wr=False))
    run("local_voting_wr", local_voting_case(with_wr=True))

    def global_voting_case():
        n, d = rng.integers(2, 6), rng.integers(1, 4)
        adj = _random_graph(rng, n)
        h_in = Parameter(rng.standard_normal((n, d)), "h")
        p = Parameter(rng.standard_normal((d, 1)), "p")
        weights = rng.standard_normal((n, 1))

        def builder(tape):
            y = layers.global_voting(tape, adj, tape.watch(h_in), tape.watch(p))
            return ad.mul(y, tape.constant(weights))

        return _sum_output(builder), [h_in, p]

    run("global_voting", global_voting_case)

    def tap_case():
        n, d = int(rng.integers(3, 7)), int(rng.integers(2, 4))
        adj = _random_graph(rng, n)
        h_in = Parameter(rng.standard_normal((n, d)), "h")
        pool = layers.TapLayerParams(
            w_r=Parameter(np.eye(d) + 0.1 * rng.standard_normal((d, d)), "w_r"),
            p=Parameter(rng.standard_normal((d, 1)), "p"),
            lam=0.1,
            rate=0.6,
        )
        # idx is a constant of the forward pass: freeze it from a first run
        tape0 = Tape()
        frozen = layers.tap_forward(tape0, pool, adj, tape0.watch(h_in)).idx
        weights = rng.standard_normal((len(frozen), d))

        def builder(tape):
            h = tape.watch(h_in)
            w_r = tape.watch(pool.w_r)
            p = tape.watch(pool.p)
            y_local, _ = layers.local_voting(tape, adj, h, w_r)
            y_global = layers.global_voting(tape, adj, h, p)
            y, s, _ = layers.combine_and_rank(
                tape, y_local, y_global, adj, pool.lam, pool.rate
            )
            _, sub_h = layers.induced_subgraph(adj, h, frozen)
            gated = ad.row_scale(sub_h, ad.row_gather(s, frozen))
            return ad.mul(gated, tape.constant(weights))

        return _sum_output(builder), [h_in, pool.w_r, pool.p]

    run("tap_forward_fixed_idx", tap_case)

    def readout_case():
        params = []
        total_width = 0
        for i in range(int(rng.integers(1, 4))):
            n, d = int(rng.integers(1, 5)), int(rng.integers(1, 4))
            params.append(Parameter(rng.standard_normal((n, d)), f"s{i}"))
            total_width += 3 * d
        weights = rng.standard_normal((1, total_width))

        def builder(tape):
            out = layers.readout([tape.watch(p) for p in params])
            return ad.mul(out, tape.constant(weights))

        return _sum_output(builder), params

    run("readout", readout_case)

    def mlp_case():
        d_in, d_hid, c = int(rng.integers(2, 5)), int(rng.integers(2, 5)), int(rng.integers(2, 4))
        x = Parameter(rng.standard_normal((1, d_in)), "x")
        mlp = layers.MlpParams(
            w1=Parameter(rng.standard_normal((d_in, d_hid)), "w1"),
            b1=Parameter(rng.standard_normal((1, d_hid)), "b1"),
            w2=Parameter(rng.standard_normal((d_hid, c)), "w2"),
            b2=Parameter(rng.standard_normal((1, c)), "b2"),
            activation="elu" if rng.random() < 0.5 else "relu",
        )

        def builder(tape):
            return layers.mlp_forward(tape, mlp, tape.watch(x), training=False)

        return _sum_output(builder), [x, mlp.w1, mlp.b1, mlp.w2, mlp.b2]

    run("mlp", mlp_case)

    def class_loss_case():
        c = int(rng.integers(2, 5))
        logits = Parameter(rng.standard_normal((1, c)), "logits")
        label = int(rng.integers(0, c))

        def loss_fn():
            tape = Tape()
            return tape, classification_loss(tape.watch(logits), label)

        return loss_fn, [logits]

    run("classification_loss", class_loss_case)

    def aux_loss_case():
        n = int(rng.integers(2, 6))
        adj = _random_graph(rng, n)
        r = Parameter(rng.standard_normal((n, n)), "r")

        def loss_fn():
            tape = Tape()
            return tape, aux_link_loss(tape, [(tape.watch(r), adj)])

        return loss_fn, [r]

    run("aux_link_loss", aux_loss_case)

    return results
