"""Five-layer zero-order Sugeno neuro-fuzzy network.

Layer 1 fuzzifies each normalized input against its linguistic terms, layer 2
takes the product T-norm per rule, layer 3 normalizes firing strengths, layer
4 weights the constant consequents and layer 5 sums them. Premise parameters
train by batch gradient descent; consequents train either by the same descent
or by an exact least-squares pass (hybrid regime).

All math is batched over samples: x is (N, n_inputs), outputs are (N,).
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFiringError, TrainingError, ValidationError
from .kinematics import EntityState, Order, extrapolate

SEVEN_LABELS = ("NB", "NM", "NS", "ZE", "PS", "PM", "PB")

_EXP_CLIP = 60.0


class SigmoidMF:
    """mu(x) = 1 / (1 + exp(-a (x - c)))."""

    shape = "sigmoid"
    param_names = ("a", "c")

    def __init__(self, a: float, c: float):
        if not (math.isfinite(a) and a != 0.0 and math.isfinite(c)):
            raise ValidationError(f"sigmoid needs finite nonzero slope, got a={a}, c={c}")
        self.a = float(a)
        self.c = float(c)

    def eval(self, x):
        arg = np.clip(self.a * (np.asarray(x, dtype=float) - self.c), -_EXP_CLIP, _EXP_CLIP)
        return 1.0 / (1.0 + np.exp(-arg))

    def param_grads(self, x):
        x = np.asarray(x, dtype=float)
        mu = self.eval(x)
        g = mu * (1.0 - mu)
        return {"a": g * (x - self.c), "c": -self.a * g}

    def constrain(self):
        if self.a == 0.0:
            self.a = 1e-9

    def to_dict(self):
        return {"shape": self.shape, "a": self.a, "c": self.c}


class BellMF:
    """Generalized bell mu(x) = 1 / (1 + |(x - c) / a|^(2b))."""

    shape = "bell"
    param_names = ("a", "b", "c")

    def __init__(self, a: float, b: float, c: float):
        if not (math.isfinite(a) and a > 0.0):
            raise ValidationError(f"bell width must be positive, got a={a}")
        if not (math.isfinite(b) and b > 0.0):
            raise ValidationError(f"bell exponent must be positive, got b={b}")
        if not math.isfinite(c):
            raise ValidationError(f"bell center must be finite, got c={c}")
        self.a = float(a)
        self.b = float(b)
        self.c = float(c)

    def eval(self, x):
        with np.errstate(over="ignore", divide="ignore"):
            u = ((np.asarray(x, dtype=float) - self.c) / self.a) ** 2
            return 1.0 / (1.0 + u**self.b)

    def param_grads(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            d = x - self.c
            u = (d / self.a) ** 2
            ub = u**self.b
            mu = 1.0 / (1.0 + ub)
            mu2ub = mu * mu * ub
            da = 2.0 * self.b * mu2ub / self.a
            db = np.where(u > 0.0, -mu2ub * np.log(np.where(u > 0.0, u, 1.0)), 0.0)
            # u^(b-1) (x-c) / a^2 simplifies to u^b / (x-c); odd limit 0 at the center
            dc = np.where(d != 0.0, 2.0 * self.b * mu2ub / np.where(d != 0.0, d, 1.0), 0.0)
        return {"a": da, "b": db, "c": dc}

    def constrain(self):
        # the function is even in a, and b must stay positive to keep the peak
        self.a = max(abs(self.a), 1e-9)
        self.b = max(self.b, 1e-9)

    def to_dict(self):
        return {"shape": self.shape, "a": self.a, "b": self.b, "c": self.c}


def mf_from_dict(d) -> SigmoidMF | BellMF:
    shape = d["shape"]
    if shape == "sigmoid":
        return SigmoidMF(d["a"], d["c"])
    if shape == "bell":
        return BellMF(d["a"], d["b"], d["c"])
    raise ValidationError(f"unknown membership shape {shape!r}")


def mf_eval(mf, x):
    """Membership degree of x; scalar in (0, 1] for scalar x."""
    out = mf.eval(x)
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


@dataclass
class InputSpec:
    name: str
    lo: float
    hi: float
    terms: list
    labels: list[str]

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.hi > self.lo):
            raise ValidationError(f"bad range [{self.lo}, {self.hi}] for input {self.name!r}")
        if len(self.terms) < 1:
            raise ValidationError(f"input {self.name!r} needs at least one term")
        if len(self.labels) != len(self.terms) or len(set(self.labels)) != len(self.labels):
            raise ValidationError(f"labels for input {self.name!r} must be unique per term")

    def normalize(self, x):
        return 2.0 * (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo) - 1.0


class AnfisNetwork:
    """Mutable network: inputs with terms, a rule list and constant consequents."""

    def __init__(self, inputs: list[InputSpec], rules, consequents, eta: float = 0.05):
        self.inputs = list(inputs)
        self.rules = np.asarray(rules, dtype=int)
        if self.rules.ndim != 2 or self.rules.shape[1] != len(self.inputs):
            raise ValidationError(
                f"rules must be (n_rules, {len(self.inputs)}), got {self.rules.shape}"
            )
        for i, spec in enumerate(self.inputs):
            col = self.rules[:, i]
            if col.min(initial=0) < 0 or col.max(initial=0) >= len(spec.terms):
                raise ValidationError(f"rule antecedent index out of range for input {spec.name!r}")
        self.z = np.array(consequents, dtype=float)
        if self.z.shape != (self.rules.shape[0],):
            raise ValidationError(f"need one consequent per rule, got {self.z.shape}")
        if not np.all(np.isfinite(self.z)):
            raise ValidationError("consequents must be finite")
        if not (math.isfinite(eta) and eta >= 0.0):
            raise ValidationError(f"learning rate must be >= 0, got {eta}")
        self.eta = float(eta)

    @property
    def n_inputs(self) -> int:
        return len(self.inputs)

    @property
    def n_rules(self) -> int:
        return self.rules.shape[0]

    def _as_batch(self, x) -> np.ndarray:
        arr = np.atleast_2d(np.asarray(x, dtype=float))
        if arr.shape[1] != self.n_inputs:
            raise ValidationError(f"expected {self.n_inputs} inputs, got {arr.shape[1]}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("inputs must be finite")
        return arr

    def to_dict(self) -> dict:
        return {
            "inputs": [
                {
                    "name": s.name,
                    "lo": s.lo,
                    "hi": s.hi,
                    "labels": list(s.labels),
                    "terms": [t.to_dict() for t in s.terms],
                }
                for s in self.inputs
            ],
            "rules": self.rules.tolist(),
            "consequents": self.z.tolist(),
            "eta": self.eta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnfisNetwork":
        inputs = [
            InputSpec(
                name=s["name"],
                lo=s["lo"],
                hi=s["hi"],
                terms=[mf_from_dict(t) for t in s["terms"]],
                labels=list(s["labels"]),
            )
            for s in d["inputs"]
        ]
        return cls(inputs, d["rules"], d["consequents"], d["eta"])


def default_labels(n_terms: int) -> list[str]:
    if n_terms == 7:
        return list(SEVEN_LABELS)
    return [f"T{i}" for i in range(n_terms)]


def build_network(
    inputs: list[tuple[str, float, float]],
    n_terms: int = 7,
    shape: str = "bell",
    rule_base: str = "compact",
    eta: float = 0.05,
    seed: int | None = None,
    center_jitter: float = 0.0,
) -> AnfisNetwork:
    """Standard initialization: term centers equally spaced over each range.

    Bell widths are half the center spacing with exponent 2; consequents start
    at zero. With a seed, centers get uniform jitter of +-center_jitter times
    the spacing. The compact rule base pairs term j of every input into rule j;
    the grid rule base takes the full cross product.
    """
    if n_terms < 1:
        raise ValidationError("n_terms must be >= 1")
    rng = np.random.default_rng(seed) if seed is not None else None
    spacing = 2.0 / (n_terms - 1) if n_terms > 1 else 2.0
    specs = []
    for name, lo, hi in inputs:
        centers = np.linspace(-1.0, 1.0, n_terms) if n_terms > 1 else np.zeros(1)
        if rng is not None and center_jitter > 0.0:
            centers = centers + rng.uniform(-center_jitter, center_jitter, n_terms) * spacing
        if shape == "bell":
            terms = [BellMF(a=spacing / 2.0, b=2.0, c=float(c)) for c in centers]
        elif shape == "sigmoid":
            terms = [SigmoidMF(a=4.0 / spacing, c=float(c)) for c in centers]
        else:
            raise ValidationError(f"unknown membership shape {shape!r}")
        specs.append(InputSpec(name, float(lo), float(hi), terms, default_labels(n_terms)))

    if rule_base == "compact":
        rules = [(j,) * len(specs) for j in range(n_terms)]
    elif rule_base == "grid":
        rules = list(itertools.product(range(n_terms), repeat=len(specs)))
    else:
        raise ValidationError(f"unknown rule base {rule_base!r}")
    return AnfisNetwork(specs, rules, np.zeros(len(rules)), eta=eta)


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------


@dataclass
class ForwardTrace:
    degrees: list[np.ndarray]  # per input: (N, n_terms_i)
    alpha: np.ndarray  # (N, R)
    beta: np.ndarray  # (N, R)
    output: np.ndarray  # (N,)


def layer1(net: AnfisNetwork, x) -> list[np.ndarray]:
    """Membership degree of each input against each of its terms."""
    batch = net._as_batch(x)
    out = []
    for i, spec in enumerate(net.inputs):
        xn = spec.normalize(batch[:, i])
        out.append(np.column_stack([term.eval(xn) for term in spec.terms]))
    return out


def layer2_firing(net: AnfisNetwork, degrees: list[np.ndarray]) -> np.ndarray:
    """Product T-norm of each rule's antecedent degrees."""
    alpha = degrees[0][:, net.rules[:, 0]].copy()
    for i in range(1, net.n_inputs):
        alpha *= degrees[i][:, net.rules[:, i]]
    return alpha


def layer3_normalize(alpha: np.ndarray) -> np.ndarray:
    """Normalized firing strengths; rows summing to zero are an error."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    total = alpha.sum(axis=1)
    bad = ~(total > 0.0) | ~np.isfinite(total)
    if np.any(bad):
        raise DegenerateFiringError(
            f"{int(bad.sum())} sample(s) fired no rule (sum alpha = 0); "
            "inputs are too far outside every term"
        )
    return alpha / total[:, None]


def forward_batch(net: AnfisNetwork, x) -> tuple[np.ndarray, ForwardTrace]:
    degrees = layer1(net, x)
    alpha = layer2_firing(net, degrees)
    beta = layer3_normalize(alpha)
    output = beta @ net.z
    return output, ForwardTrace(degrees, alpha, beta, output)


def forward(net: AnfisNetwork, x) -> tuple[float, ForwardTrace]:
    """Single-sample inference: weighted average of rule consequents."""
    out, trace = forward_batch(net, x)
    return float(out[0]), trace


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingSet:
    inputs: np.ndarray  # (N, n_inputs)
    targets: np.ndarray  # (N,)

    def __post_init__(self):
        object.__setattr__(self, "inputs", np.asarray(self.inputs, dtype=float))
        object.__setattr__(self, "targets", np.asarray(self.targets, dtype=float))
        if self.inputs.ndim != 2 or self.targets.shape != (self.inputs.shape[0],):
            raise ValidationError(
                f"samples must be (N, n_inputs) with (N,) targets, got "
                f"{self.inputs.shape} / {self.targets.shape}"
            )
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ValidationError("training samples must be finite")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def loss(net: AnfisNetwork, data: TrainingSet) -> float:
    """Sum over samples of half squared error."""
    out, _ = forward_batch(net, data.inputs)
    return float(0.5 * np.sum((data.targets - out) ** 2))


def _gradients(net: AnfisNetwork, data: TrainingSet):
    """Batch gradients of the set loss w.r.t. consequents and premise params."""
    x = net._as_batch(data.inputs)
    out, trace = forward_batch(net, x)
    err = out - data.targets  # dE/d(output) per sample
    dz = trace.beta.T @ err

    total = trace.alpha.sum(axis=1)
    dE_dalpha = err[:, None] * (net.z[None, :] - out[:, None]) / total[:, None]

    # Per-input gathered degrees and product-of-others, for the chain to layer 1.
    gathered = [trace.degrees[i][:, net.rules[:, i]] for i in range(net.n_inputs)]
    dmf: list[list[dict]] = []
    for i, spec in enumerate(net.inputs):
        prod_others = np.ones_like(trace.alpha)
        for j in range(net.n_inputs):
            if j != i:
                prod_others *= gathered[j]
        dE_dDi = dE_dalpha * prod_others  # (N, R)
        xn = spec.normalize(x[:, i])
        term_grads = []
        for t, term in enumerate(spec.terms):
            mask = net.rules[:, i] == t
            dE_ddeg = dE_dDi[:, mask].sum(axis=1)  # (N,)
            pg = term.param_grads(xn)
            term_grads.append({k: float(np.dot(dE_ddeg, v)) for k, v in pg.items()})
        dmf.append(term_grads)
    return dz, dmf, out


def _check_finite_grads(dz, dmf) -> None:
    if not np.all(np.isfinite(dz)):
        raise TrainingError("non-finite consequent gradient; lower eta or rescale inputs")
    for term_grads in dmf:
        for g in term_grads:
            for name, val in g.items():
                if not math.isfinite(val):
                    raise TrainingError(f"non-finite gradient for premise parameter {name!r}")


def _apply_premise_step(net: AnfisNetwork, dmf, eta: float) -> None:
    for spec, term_grads in zip(net.inputs, dmf):
        for term, g in zip(spec.terms, term_grads):
            for name, val in g.items():
                setattr(term, name, getattr(term, name) - eta * val)
            term.constrain()


def train_gd(net: AnfisNetwork, data: TrainingSet, epochs: int) -> list[float]:
    """Batch gradient descent on every parameter; returns loss after each epoch."""
    if epochs < 1:
        raise ValidationError("epochs must be >= 1")
    losses = []
    for _ in range(epochs):
        dz, dmf, _ = _gradients(net, data)
        _check_finite_grads(dz, dmf)
        net.z = net.z - net.eta * dz
        _apply_premise_step(net, dmf, net.eta)
        losses.append(loss(net, data))
    return losses


def _solve_consequents(net: AnfisNetwork, data: TrainingSet) -> None:
    _, trace = forward_batch(net, data.inputs)
    sol, _, rank, _ = np.linalg.lstsq(trace.beta, data.targets, rcond=None)
    if rank < net.n_rules:
        warnings.warn(
            f"consequent system is rank deficient ({rank}/{net.n_rules}); "
            "using the minimum-norm solution",
            RuntimeWarning,
            stacklevel=3,
        )
    net.z = sol


def train_hybrid(net: AnfisNetwork, data: TrainingSet, epochs: int) -> list[float]:
    """Per epoch: exact least-squares consequents, then one premise descent step.

    The recorded epoch loss is the post-least-squares loss, i.e. the loss at
    that epoch's premise parameters with the consequents solved optimally. The
    final epoch skips the premise step, so the returned network realizes the
    last recorded loss exactly.
    """
    if epochs < 1:
        raise ValidationError("epochs must be >= 1")
    if len(data) < net.n_rules:
        raise ValidationError(
            f"hybrid training needs at least {net.n_rules} samples, got {len(data)}"
        )
    losses = []
    for epoch in range(epochs):
        _solve_consequents(net, data)
        losses.append(loss(net, data))
        if net.eta > 0.0 and epoch < epochs - 1:
            dz, dmf, _ = _gradients(net, data)
            _check_finite_grads(dz, dmf)
            _apply_premise_step(net, dmf, net.eta)
    return losses


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def save_network(net: AnfisNetwork, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(net.to_dict(), f, indent=2)
        f.write("\n")


def load_network(path) -> AnfisNetwork:
    with open(path, encoding="utf-8") as f:
        return AnfisNetwork.from_dict(json.load(f))


# ---------------------------------------------------------------------------
# Prediction bundle: one network per position axis
# ---------------------------------------------------------------------------


AXIS_NAMES = ("x", "y", "z")


class AnfisBundle:
    """Three trained networks that correct second-order extrapolation.

    Each axis network maps the normalized (one-step position deviation,
    axis velocity, orientation) triple to the extrapolation residual at the
    reference horizon ``h_ref``. Queries at other horizons scale the learned
    correction by (horizon / h_ref)^3, the leading-order growth of the
    second-order remainder. All-zero consequents therefore reproduce plain
    second-order extrapolation exactly.
    """

    def __init__(self, networks: list[AnfisNetwork], h_ref: float, feature_tick: float):
        if len(networks) != 3:
            raise ValidationError(f"bundle needs one network per axis, got {len(networks)}")
        for net in networks:
            if net.n_inputs != 3:
                raise ValidationError("axis networks must take the 3-feature input triple")
        if not (math.isfinite(h_ref) and h_ref > 0.0):
            raise ValidationError(f"reference horizon must be positive, got {h_ref}")
        if not (math.isfinite(feature_tick) and feature_tick > 0.0):
            raise ValidationError(f"feature tick must be positive, got {feature_tick}")
        self.networks = list(networks)
        self.h_ref = float(h_ref)
        self.feature_tick = float(feature_tick)

    def corrections(self, dev, vel, orient, horizon: float) -> np.ndarray:
        """Residual corrections (N, 3) for batched features at one horizon."""
        dev = np.atleast_2d(np.asarray(dev, dtype=float))
        vel = np.atleast_2d(np.asarray(vel, dtype=float))
        orient = np.atleast_1d(np.asarray(orient, dtype=float))
        scale = (horizon / self.h_ref) ** 3
        cols = []
        for k, net in enumerate(self.networks):
            feats = np.column_stack([dev[:, k], vel[:, k], orient])
            out, _ = forward_batch(net, feats)
            cols.append(out * scale)
        return np.column_stack(cols)

    def predict(self, history: list[EntityState], horizon: float) -> np.ndarray:
        """Predicted position horizon seconds past the newest history sample."""
        if not history:
            raise ValidationError("history must contain at least one state")
        if horizon < 0.0:
            raise ValidationError(f"horizon must be >= 0, got {horizon}")
        last = history[-1]
        if len(history) >= 2:
            prev = history[-2]
            dev = last.position - extrapolate(prev, last.time, Order.SECOND).position
        else:
            dev = np.zeros(3)
        base = extrapolate(last, last.time + horizon, Order.SECOND)
        corr = self.corrections(dev[None, :], last.velocity[None, :], [last.orientation], horizon)
        return base.position + corr[0]

    def to_dict(self) -> dict:
        return {
            "kind": "anfis-bundle",
            "axes": list(AXIS_NAMES),
            "h_ref": self.h_ref,
            "feature_tick": self.feature_tick,
            "networks": [net.to_dict() for net in self.networks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnfisBundle":
        if d.get("kind") != "anfis-bundle":
            raise ValidationError("not an anfis bundle document")
        nets = [AnfisNetwork.from_dict(nd) for nd in d["networks"]]
        return cls(nets, d["h_ref"], d["feature_tick"])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "AnfisBundle":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def predict_state(bundle: AnfisBundle, history: list[EntityState], horizon: float) -> np.ndarray:
    return bundle.predict(history, horizon)
