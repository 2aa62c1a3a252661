"""Gated Kolmogorov-Arnold networks with optional forward connections.

Layer ``l`` maps its input vector to ``widths[l + 1]`` nodes. Without forward
connections the input is ``x^(l)``; with them it is the concatenation
``[x^(0), ..., x^(l)]`` (oldest first), so the trunk sources of every layer
are its last ``widths[l]`` inputs.

Arrays are stored source-major: coefficients have shape ``(n_in, M, n_out)``
and per-edge tables ``(n_in, n_out)``. Every edge leaving the same source in a
layer shares one knot vector, as grid updates see identical samples for them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .gate import (
    GateBank,
    GateParams,
    draw_noise,
    expected_open,
    inference_gates_threshold,
    sample_gates,
)
from .spline import (
    InvalidInputError,
    SplineActivation,
    SplineGrid,
    bspline_basis,
    refit_coefficients,
    sample_domain,
    uniform_bspline_basis,
    uniform_knots,
)

SUM = "sum"
PRODUCT = "product"
OVERFLOW_LIMIT = 1e12
FORMAT_VERSION = 1
INIT_SCHEMES = ("kan", "unit")


class NumericalError(FloatingPointError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class KanShape:
    widths: tuple[int, ...]
    forward_connections: bool = False
    aggregation: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 2 or min(widths) < 1:
            raise InvalidInputError(f"invalid widths {widths}")
        if self.aggregation is None:
            agg = tuple((SUM,) * w for w in widths[1:])
        else:
            agg = tuple(tuple(layer) for layer in self.aggregation)
        if len(agg) != len(widths) - 1 or any(len(a) != w for a, w in zip(agg, widths[1:])):
            raise InvalidInputError("aggregation kinds must cover every node in layers 1..L")
        if any(kind not in (SUM, PRODUCT) for layer in agg for kind in layer):
            raise InvalidInputError("aggregation kinds must be 'sum' or 'product'")
        object.__setattr__(self, "aggregation", agg)

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    def layer_inputs(self, layer: int) -> int:
        if self.forward_connections:
            return sum(self.widths[: layer + 1])
        return self.widths[layer]

    def trunk_mask(self, layer: int) -> np.ndarray:
        n_in, n_out = self.layer_inputs(layer), self.widths[layer + 1]
        mask = np.zeros((n_in, n_out), dtype=bool)
        mask[n_in - self.widths[layer] :] = True
        return mask

    def source_of(self, layer: int, index: int) -> tuple[int, int]:
        """(producing layer k, node) for concatenated input ``index`` of ``layer``."""
        if not self.forward_connections:
            return layer, index
        for k in range(layer + 1):
            if index < self.widths[k]:
                return k, index
            index -= self.widths[k]
        raise IndexError(index)


def edge_counts(shape: KanShape) -> tuple[int, int]:
    trunk = sum(shape.widths[l] * shape.widths[l + 1] for l in range(shape.n_layers))
    total = sum(shape.layer_inputs(l) * shape.widths[l + 1] for l in range(shape.n_layers))
    return trunk, total - trunk


@dataclass
class KanLayer:
    knots: np.ndarray  # (n_in, T)
    coef: np.ndarray  # (n_in, M, n_out)
    w_b: np.ndarray  # (n_in, n_out)
    w_s: np.ndarray  # (n_in, n_out)
    egate: GateBank  # logits (n_in, n_out)
    ngate: GateBank | None  # logits (n_out,), hidden layers only
    product: np.ndarray  # (n_out,) bool
    trunk: np.ndarray  # (n_in, n_out) bool

    @property
    def n_in(self) -> int:
        return self.coef.shape[0]

    @property
    def n_out(self) -> int:
        return self.coef.shape[2]


@dataclass
class LayerGates:
    edge: np.ndarray
    edge_grad: np.ndarray
    node: np.ndarray | None = None
    node_grad: np.ndarray | None = None


class GatedKan:
    def __init__(self, shape: KanShape, layers: list[KanLayer], num_intervals: int, degree: int,
                 gate_params: GateParams = GateParams()):
        self.shape = shape
        self.layers = layers
        self.num_intervals = num_intervals
        self.degree = degree
        self.gate_params = gate_params
        self.version = 0

    @classmethod
    def create(
        cls,
        shape: KanShape,
        rng: np.random.Generator | None = None,
        *,
        num_intervals: int = 10,
        degree: int = 3,
        domain: tuple[float, float] = (-1.0, 1.0),
        gate_init: float = -1.0,
        gates_trainable: bool = True,
        use_ngates: bool = False,
        gate_params: GateParams = GateParams(),
        coef_noise: float = 0.1,
        init: str = "kan",
        w_b: float = 1.0,
        w_s: float = 1.0,
    ) -> GatedKan:
        """Fresh network with uniform grids on ``domain``.

        ``init="kan"`` draws w_b ~ U(-1, 1)/sqrt(n_in) and sets w_s = 1/sqrt(n_in),
        where n_in counts every input of the layer (FC sources included).
        ``init="unit"`` uses the constant scales ``w_b`` and ``w_s`` instead.
        """
        if init not in INIT_SCHEMES:
            raise InvalidInputError(f"unknown init {init!r}; choose from {INIT_SCHEMES}")
        rng = rng if rng is not None else np.random.default_rng(0)
        M = num_intervals + degree
        knots = uniform_knots(num_intervals, degree, *domain)
        layers = []
        for l in range(shape.n_layers):
            n_in, n_out = shape.layer_inputs(l), shape.widths[l + 1]
            if gates_trainable:
                egate = GateBank.full((n_in, n_out), gate_init, gate_params)
            else:
                egate = GateBank.frozen_open((n_in, n_out), gate_params)
            ngate = None
            if use_ngates and l < shape.n_layers - 1:
                ngate = GateBank.full((n_out,), gate_init, gate_params, trainable=gates_trainable)
                if not gates_trainable:
                    ngate = GateBank.frozen_open((n_out,), gate_params)
            coef = rng.normal(0.0, coef_noise, (n_in, M, n_out))
            if init == "kan":
                wb = rng.uniform(-1.0, 1.0, (n_in, n_out)) / np.sqrt(n_in)
                ws = np.full((n_in, n_out), 1.0 / np.sqrt(n_in))
            else:
                wb = np.full((n_in, n_out), float(w_b))
                ws = np.full((n_in, n_out), float(w_s))
            layers.append(KanLayer(
                knots=np.tile(knots, (n_in, 1)),
                coef=coef,
                w_b=wb,
                w_s=ws,
                egate=egate,
                ngate=ngate,
                product=np.array([k == PRODUCT for k in shape.aggregation[l]]),
                trunk=shape.trunk_mask(l),
            ))
        return cls(shape, layers, num_intervals, degree, gate_params)

    # -- parameter access -------------------------------------------------

    @property
    def has_ngates(self) -> bool:
        return any(layer.ngate is not None for layer in self.layers)

    def parameters(self) -> dict[str, np.ndarray]:
        """Live references to every learnable array, keyed like the gradients from ``backward``."""
        params = {}
        for l, layer in enumerate(self.layers):
            params[f"{l}.coef"] = layer.coef
            params[f"{l}.w_b"] = layer.w_b
            params[f"{l}.w_s"] = layer.w_s
            params[f"{l}.egate"] = layer.egate.logits
            if layer.ngate is not None:
                params[f"{l}.ngate"] = layer.ngate.logits
        return params

    def gate_banks(self) -> list[GateBank]:
        banks = []
        for layer in self.layers:
            banks.append(layer.egate)
            if layer.ngate is not None:
                banks.append(layer.ngate)
        return banks

    def all_gate_logits(self, trainable_only: bool = False) -> GateBank:
        banks = [b for b in self.gate_banks() if b.trainable or not trainable_only]
        logits = np.concatenate([b.logits.ravel() for b in banks]) if banks else np.empty(0)
        return GateBank(logits, self.gate_params, trainable=bool(banks))

    def edge_activation(self, layer: int, i: int, j: int) -> SplineActivation:
        L = self.layers[layer]
        grid = SplineGrid(L.knots[i].copy(), self.num_intervals, self.degree)
        return SplineActivation(grid, L.coef[i, :, j].copy(), float(L.w_b[i, j]), float(L.w_s[i, j]))

    def set_edge_activation(self, layer: int, i: int, j: int, act: SplineActivation) -> None:
        """Overwrite one edge. The knot vector is shared by every edge out of source ``i``."""
        knots = act.grid.knots
        if (act.grid.num_intervals, act.grid.degree) != (self.num_intervals, self.degree) or not np.allclose(
                np.diff(knots), (knots[-1] - knots[0]) / (len(knots) - 1), rtol=1e-9, atol=0):
            raise InvalidInputError("network edges need uniform grids of the network's size and degree")
        L = self.layers[layer]
        L.knots[i] = act.grid.knots
        L.coef[i, :, j] = act.coeffs
        L.w_b[i, j] = act.w_b
        L.w_s[i, j] = act.w_s
        self.version += 1

    def copy(self) -> GatedKan:
        return GatedKan.from_dict(self.to_dict())

    # -- gate values --------------------------------------------------------

    def sample_gates(self, rng: np.random.Generator) -> list[LayerGates]:
        out = []
        for layer in self.layers:
            e = sample_gates(layer.egate, draw_noise(rng, layer.egate.logits.shape))
            g = LayerGates(e.values, e.dvalues_dlogits)
            if layer.ngate is not None:
                n = sample_gates(layer.ngate, draw_noise(rng, layer.ngate.logits.shape))
                g.node, g.node_grad = n.values, n.dvalues_dlogits
            out.append(g)
        return out

    def threshold_gates(self) -> list[LayerGates]:
        out = []
        for layer in self.layers:
            e = inference_gates_threshold(layer.egate)
            g = LayerGates(e, np.zeros_like(e))
            if layer.ngate is not None:
                n = inference_gates_threshold(layer.ngate)
                g.node, g.node_grad = n, np.zeros_like(n)
            out.append(g)
        return out

    def open_gates(self) -> list[LayerGates]:
        out = []
        for layer in self.layers:
            g = LayerGates(np.ones(layer.egate.logits.shape), np.zeros(layer.egate.logits.shape))
            if layer.ngate is not None:
                g.node, g.node_grad = np.ones(layer.n_out), np.zeros(layer.n_out)
            out.append(g)
        return out

    # -- evaluation ---------------------------------------------------------

    def __call__(self, x: np.ndarray, gates: list[LayerGates] | None = None) -> np.ndarray:
        return forward(self, x, gates if gates is not None else self.threshold_gates())[0]

    def update_grids(self, x: np.ndarray, gates: list[LayerGates] | None = None) -> None:
        """Refit every layer's knots to the range of its inputs on ``x``.

        Layers are processed in order with a fresh forward pass before each,
        so later layers see the inputs produced by already-updated layers.
        """
        gates = gates if gates is not None else self.open_gates()
        for l, layer in enumerate(self.layers):
            _, cache = forward(self, x, gates, keep=False, upto=l)
            X = cache.inputs[l]  # (n_in, B)
            basis = cache.basis[l]
            for i in range(layer.n_in):
                lo, hi = sample_domain(X[i])
                new_knots = uniform_knots(self.num_intervals, self.degree, lo, hi)
                new_basis = bspline_basis(X[i], new_knots, self.degree)
                layer.coef[i] = refit_coefficients(basis[i], layer.coef[i], new_basis)
                layer.knots[i] = new_knots
        self.version += 1

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        p = self.gate_params
        return {
            "format_version": FORMAT_VERSION,
            "widths": list(self.shape.widths),
            "aggregation": [list(a) for a in self.shape.aggregation],
            "forward_connections": self.shape.forward_connections,
            "num_intervals": self.num_intervals,
            "degree": self.degree,
            "gate_params": {"tau": p.tau, "gamma": p.gamma, "zeta": p.zeta},
            "layers": [
                {
                    "knots": layer.knots.tolist(),
                    "coef": layer.coef.tolist(),
                    "w_b": layer.w_b.tolist(),
                    "w_s": layer.w_s.tolist(),
                    "egate": {"logits": layer.egate.logits.tolist(), "trainable": layer.egate.trainable},
                    "ngate": None if layer.ngate is None else
                    {"logits": layer.ngate.logits.tolist(), "trainable": layer.ngate.trainable},
                }
                for layer in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> GatedKan:
        version = d.get("format_version") if isinstance(d, dict) else None
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint format_version {version!r} (expected {FORMAT_VERSION})")
        try:
            shape = KanShape(tuple(d["widths"]), bool(d["forward_connections"]),
                             tuple(tuple(a) for a in d["aggregation"]))
            params = GateParams(**d["gate_params"])
            layers = []
            for l, ld in enumerate(d["layers"]):
                ng = ld["ngate"]
                layers.append(KanLayer(
                    knots=np.array(ld["knots"], dtype=float),
                    coef=np.array(ld["coef"], dtype=float),
                    w_b=np.array(ld["w_b"], dtype=float),
                    w_s=np.array(ld["w_s"], dtype=float),
                    egate=GateBank(np.array(ld["egate"]["logits"], dtype=float), params, ld["egate"]["trainable"]),
                    ngate=None if ng is None else GateBank(np.array(ng["logits"], dtype=float), params, ng["trainable"]),
                    product=np.array([k == PRODUCT for k in shape.aggregation[l]]),
                    trunk=shape.trunk_mask(l),
                ))
            net = cls(shape, layers, int(d["num_intervals"]), int(d["degree"]), params)
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"malformed checkpoint: {exc}") from exc
        M = net.num_intervals + net.degree
        for l, layer in enumerate(layers):
            n_in, n_out = shape.layer_inputs(l), shape.widths[l + 1]
            if (layer.coef.shape != (n_in, M, n_out) or layer.knots.shape != (n_in, M + net.degree + 1)
                    or layer.egate.logits.shape != (n_in, n_out)):
                raise CheckpointError(f"layer {l} arrays do not match widths {shape.widths}")
        return net

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        """Write the JSON checkpoint; ``meta`` (e.g. provenance) is stored alongside and ignored on load."""
        d = self.to_dict()
        if meta:
            d["meta"] = meta
        Path(path).write_text(json.dumps(d))

    @classmethod
    def load(cls, path: str | Path) -> GatedKan:
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from exc
        return cls.from_dict(d)


@dataclass
class ForwardCache:
    net_id: int
    version: int
    gates: list[LayerGates]
    inputs: list[np.ndarray] = field(default_factory=list)  # (n_in, B) per layer
    basis: list[np.ndarray] = field(default_factory=list)
    dbasis: list[np.ndarray] = field(default_factory=list)
    spline: list[np.ndarray] = field(default_factory=list)
    phi: list[np.ndarray] = field(default_factory=list)
    agg: list[np.ndarray] = field(default_factory=list)


def _layer_basis(net: GatedKan, layer: KanLayer, X: np.ndarray, derivative: bool = False):
    t0 = layer.knots[:, :1]
    h = (layer.knots[:, -1:] - t0) / (layer.knots.shape[1] - 1)
    return uniform_bspline_basis(X, t0, h, net.num_intervals + net.degree, net.degree, derivative)


def _check_magnitude(values: np.ndarray, layer: int) -> None:
    bad = ~(np.abs(values) <= OVERFLOW_LIMIT)
    if bad.any():
        node = int(np.argwhere(bad)[0][-1])
        raise NumericalError(f"non-finite or overflowing value at layer {layer + 1}, node {node}")


def _product_aggregate(factors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Product over axis 0 plus, for each factor, the product of all the others."""
    n = factors.shape[0]
    prefix = np.ones_like(factors)
    suffix = np.ones_like(factors)
    for i in range(1, n):
        prefix[i] = prefix[i - 1] * factors[i - 1]
        suffix[n - 1 - i] = suffix[n - i] * factors[n - i]
    return prefix[-1] * factors[-1], prefix * suffix


def forward(net: GatedKan, x: np.ndarray, gates: list[LayerGates] | None = None,
            keep: bool = True, upto: int | None = None) -> tuple[np.ndarray, ForwardCache]:
    """Evaluate the network on a batch ``x`` of shape (B, q).

    ``gates`` defaults to all-open. With ``keep`` the cache also holds what
    ``backward`` needs. ``upto`` stops after caching the inputs of that layer.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.shape.input_dim:
        raise InvalidInputError(f"expected input of shape (B, {net.shape.input_dim}), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("non-finite network input")
    gates = gates if gates is not None else net.open_gates()
    cache = ForwardCache(id(net), net.version, gates)
    outputs = [x.T]  # x^(k) as (n_k, B)
    for l, layer in enumerate(net.layers):
        X = np.concatenate(outputs, axis=0) if net.shape.forward_connections else outputs[-1]
        if keep:
            basis, dbasis = _layer_basis(net, layer, X, derivative=True)
            cache.dbasis.append(dbasis)
        else:
            basis = _layer_basis(net, layer, X)
        cache.inputs.append(X)
        cache.basis.append(basis)
        if upto is not None and l == upto:
            return None, cache
        spl = basis @ layer.coef  # (n_in, B, n_out)
        phi = layer.w_b[:, None, :] * (X * expit(X))[:, :, None] + layer.w_s[:, None, :] * spl
        g = gates[l]
        ze = g.edge[:, None, :]
        agg = (ze * phi).sum(axis=0)  # (B, n_out)
        if layer.product.any():
            cols = layer.product
            prod, _ = _product_aggregate(ze[:, :, cols] * phi[:, :, cols] + (1.0 - ze[:, :, cols]))
            agg[:, cols] = prod
        out = agg if g.node is None else agg * g.node
        _check_magnitude(out, l)
        if keep:
            cache.spline.append(spl)
            cache.phi.append(phi)
            cache.agg.append(agg)
        outputs.append(out.T)
    return outputs[-1].T, cache


def backward(net: GatedKan, cache: ForwardCache, dy: np.ndarray) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of a scalar loss given dLoss/dy of shape (B, p).

    Gate-logit gradients flow through the pathwise derivatives stored with the
    gate values; frozen or thresholded gates carry zero derivative.
    """
    if cache.net_id != id(net) or cache.version != net.version or len(cache.phi) != len(net.layers):
        raise RuntimeError("forward cache does not belong to this network state")
    widths = net.shape.widths
    dout = [np.zeros((w, dy.shape[0])) for w in widths]
    dout[-1] = np.asarray(dy, dtype=float).T.copy()
    grads = {}
    for l in reversed(range(len(net.layers))):
        layer, g = net.layers[l], cache.gates[l]
        X, basis, dbasis = cache.inputs[l], cache.basis[l], cache.dbasis[l]
        spl, phi, agg = cache.spline[l], cache.phi[l], cache.agg[l]
        G = dout[l + 1].T  # (B, n_out)
        if g.node is not None:
            grads[f"{l}.ngate"] = (G * agg).sum(axis=0) * g.node_grad
            G = G * g.node
        ze = g.edge[:, None, :]
        dphi = G[None, :, :] * ze  # (n_in, B, n_out)
        dze = (G[None, :, :] * phi).sum(axis=1)
        if layer.product.any():
            cols = layer.product
            factors = ze[:, :, cols] * phi[:, :, cols] + (1.0 - ze[:, :, cols])
            _, others = _product_aggregate(factors)
            dfac = G[None, :, cols] * others
            dphi[:, :, cols] = dfac * ze[:, :, cols]
            dze[:, cols] = (dfac * (phi[:, :, cols] - 1.0)).sum(axis=1)
        grads[f"{l}.egate"] = dze * g.edge_grad
        sig = expit(X)
        dspl = dphi * layer.w_s[:, None, :]
        grads[f"{l}.coef"] = basis.transpose(0, 2, 1) @ dspl
        grads[f"{l}.w_s"] = (dphi * spl).sum(axis=1)
        grads[f"{l}.w_b"] = (dphi * (X * sig)[:, :, None]).sum(axis=1)
        dX = (sig + X * sig * (1.0 - sig)) * (dphi * layer.w_b[:, None, :]).sum(axis=2)
        dX += (dbasis * (dspl @ layer.coef.transpose(0, 2, 1))).sum(axis=2)
        if net.shape.forward_connections:
            start = 0
            for k in range(l + 1):
                dout[k] += dX[start : start + widths[k]]
                start += widths[k]
        else:
            dout[l] += dX
    grads["input"] = dout[0].T
    return grads


@dataclass
class ActiveCounts:
    trunk: int
    fc: int
    sparsity_pct: float


def active_counts(net: GatedKan) -> ActiveCounts:
    """Edges whose thresholded egate (and target ngate, if any) is open."""
    trunk = fc = 0
    for layer in net.layers:
        open_edges = inference_gates_threshold(layer.egate).astype(bool)
        if layer.ngate is not None:
            open_edges &= inference_gates_threshold(layer.ngate).astype(bool)[None, :]
        trunk += int((open_edges & layer.trunk).sum())
        fc += int((open_edges & ~layer.trunk).sum())
    n_trunk, n_fc = edge_counts(net.shape)
    total = n_trunk + n_fc if net.shape.forward_connections else n_trunk
    return ActiveCounts(trunk, fc, 100.0 * (trunk + fc) / total)


def expected_gate_values(net: GatedKan) -> list[tuple[np.ndarray, np.ndarray | None]]:
    return [
        (expected_open(layer.egate), None if layer.ngate is None else expected_open(layer.ngate))
        for layer in net.layers
    ]
