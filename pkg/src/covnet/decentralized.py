"""GNN inference run as an explicit synchronous message-passing protocol.

Each robot holds its own copy of the weights and only ever sees its own
observation plus payloads from its 1-hop neighbours.  One graph shift is one
exchange round, so a model with L layers and K taps needs L*K rounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import encode
from .neural import ACTIVATIONS, ModelParams
from .world import CommGraph, Scenario, build_comm_graph, observe


class ProtocolViolation(RuntimeError):
    pass


@dataclass
class MessageStats:
    rounds: int = 0
    messages: int = 0
    payload_values: int = 0


@dataclass
class RobotNode:
    id: int
    neighbors: dict[int, float]
    params: ModelParams
    taps: list[np.ndarray] = field(default_factory=list)
    inbox: list[tuple[int, np.ndarray]] = field(default_factory=list)
    features: np.ndarray | None = None
    logits: np.ndarray | None = None

    def receive(self, sender: int, payload: np.ndarray):
        if sender not in self.neighbors:
            raise ProtocolViolation(f"robot {self.id} received a payload from non-neighbour {sender}")
        self.inbox.append((sender, payload))

    def encode(self, raw: np.ndarray):
        cfg = self.params.config
        act, _ = ACTIVATIONS[cfg.activation]
        h = np.asarray(raw, dtype=self.params.dtype)
        if cfg.input_scale != 1.0:
            h = h * np.asarray(cfg.input_scale, dtype=h.dtype)
        for l in range(len(cfg.encoder_dims)):
            z = h @ self.params[f"enc{l}.W"]
            if cfg.bias:
                z = z + self.params[f"enc{l}.b"]
            h = act(z)
        self.features = h

    def begin_layer(self):
        self.taps = [self.features]

    def outgoing(self) -> np.ndarray:
        return self.taps[-1]

    def absorb(self):
        """Finish a round: the next tap is the weighted sum of neighbour payloads."""
        shifted = np.zeros_like(self.taps[-1])
        for sender, payload in sorted(self.inbox, key=lambda m: m[0]):
            shifted = shifted + self.neighbors[sender] * payload
        self.taps.append(shifted)
        self.inbox = []

    def finish_layer(self, layer: int):
        cfg = self.params.config
        act, _ = ACTIVATIONS[cfg.activation]
        z = sum(t @ self.params[f"gnn{layer}.H{k}"] for k, t in enumerate(self.taps))
        if cfg.bias:
            z = z + self.params[f"gnn{layer}.b"]
        self.features = act(z)
        self.taps = []

    def decide(self) -> int:
        logits = self.features @ self.params["head.W"]
        if self.params.config.bias:
            logits = logits + self.params["head.b"]
        self.logits = logits
        return int(np.argmax(logits))


@dataclass
class ProtocolResult:
    assignment: tuple[int, ...]
    stats: MessageStats
    logits: np.ndarray
    trace: list[tuple[int, int, int, int]] | None = None


def run_decentralized_inference(s: Scenario, g: CommGraph | None, params: ModelParams,
                                record_trace: bool = False, features: np.ndarray | None = None) -> ProtocolResult:
    """Run the protocol; ``features`` optionally replaces each robot's own encoded observation."""
    g = g if g is not None else build_comm_graph(s)
    cfg = params.config
    gso = g.gso
    nodes = [
        RobotNode(i, {j: float(gso[i, j]) for j in g.neighbors[i]}, params)
        for i in range(s.n_robots)
    ]
    for node in nodes:
        raw = encode(observe(s, node.id)) if features is None else features[node.id]
        if raw.shape[-1] != cfg.in_dim:
            raise ValueError(f"feature width {raw.shape[-1]} does not match model input {cfg.in_dim}")
        node.encode(raw)

    stats = MessageStats()
    trace = [] if record_trace else None
    for layer in range(cfg.n_layers):
        for node in nodes:
            node.begin_layer()
        for _ in range(cfg.taps):
            stats.rounds += 1
            outbox = [(node.id, node.outgoing()) for node in nodes]
            for sender, payload in outbox:
                for receiver in g.neighbors[sender]:
                    nodes[receiver].receive(sender, payload)
                    stats.messages += 1
                    stats.payload_values += payload.size
                    if trace is not None:
                        trace.append((stats.rounds, sender, receiver, payload.size))
            for node in nodes:
                node.absorb()
        for node in nodes:
            node.finish_layer(layer)

    assignment = tuple(node.decide() for node in nodes)
    logits = np.stack([node.logits for node in nodes]) if nodes else np.zeros((0, cfg.n_actions))
    return ProtocolResult(assignment, stats, logits, trace)


def expected_message_count(g: CommGraph, n_layers: int, taps: int) -> int:
    return n_layers * taps * g.n_directed_edges


def dump_trace(trace, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("round,sender,receiver,payload_len\n")
        for row in trace:
            fh.write(",".join(str(v) for v in row) + "\n")
    return path
