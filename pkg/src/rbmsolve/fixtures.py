"""Committed fixture models and the bootstrap that rebuilds them.

Every block goes through the same pipeline: CD training in floating point,
retraining under a max-weight constraint, and (for the 2x2 multiplier)
quantization-aware retraining for a 6-bit grid. The 4x4 multiplier is
composed from constrained blocks and retrained on propagated circuit data.

The fixture directory defaults to the package's ``data/`` folder and can be
overridden with the ``RBMSOLVE_FIXTURES`` environment variable.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .circuits import CircuitFunction, generate_truth_table, lookup
from .merge import circuit_inputs, compose, intermediate_dataset, multiplier_circuit, parse_circuit
from .model import Rbm, all_bit_vectors, exact_distribution, free_energy
from .modelio import load_model, save_model
from .quantize import LutConfig, QuantGrid, quantize_model
from .trainer import TrainConfig, geometric_lambda_schedule, init_rbm, quant_aware_retrain, train

log = logging.getLogger(__name__)

MAX_WEIGHT = 4.0
FIXED_SEED = 2021


def fixture_dir() -> Path:
    env = os.environ.get("RBMSOLVE_FIXTURES")
    return Path(env) if env else Path(__file__).with_name("data")


@dataclass(frozen=True)
class BlockRecipe:
    n_hidden: int
    epochs: int
    learning_rate: float = 0.2
    batch_size: int = 16
    retrain_epochs: int | None = None
    init_std: float = 0.01


# add1, add2, add4 and mult2 sizes follow the reference model table; add3 and
# mult3 interpolate
RECIPES: dict[str, BlockRecipe] = {
    "not": BlockRecipe(2, 5000, batch_size=2),
    "and": BlockRecipe(4, 10000, batch_size=4),
    "or": BlockRecipe(4, 10000, batch_size=4),
    "xor": BlockRecipe(4, 10000, batch_size=4, init_std=1.0),  # small init stays symmetric
    "or3": BlockRecipe(6, 10000, batch_size=8),
    "half_adder": BlockRecipe(6, 10000, batch_size=4),
    "add1": BlockRecipe(6, 20000, batch_size=8),
    "add2": BlockRecipe(28, 20000),
    "add3": BlockRecipe(48, 4000, learning_rate=0.1, batch_size=32, retrain_epochs=2000),
    "add4": BlockRecipe(64, 3000, learning_rate=0.1, batch_size=32, retrain_epochs=1500),
    "mult2": BlockRecipe(16, 20000),
    "mult3": BlockRecipe(48, 8000, learning_rate=0.1),
}


def valid_mass(model: Rbm, circuit: CircuitFunction) -> float:
    """Probability the model assigns to rows satisfying the circuit."""
    dist = exact_distribution(model)
    return float(dist.probs[circuit.is_valid(dist.support)].sum())


def query_scores(model: Rbm, circuit: CircuitFunction) -> tuple[float, float]:
    """Exact (hard, soft) accuracy over every forward and reverse query.

    A forward query clamps the inputs and asks for the outputs; a reverse
    query clamps an attainable output value and asks for any preimage. Hard
    accuracy counts queries whose conditional argmax is correct, soft
    accuracy averages the conditional mass on correct answers.
    """
    n_in = circuit.n_inputs
    rows = all_bit_vectors(model.n_visible)
    logp = -free_energy(model, rows)
    valid = circuit.is_valid(rows)
    in_code = rows[:, :n_in].astype(np.int64) @ (1 << np.arange(n_in))
    out_bits = rows.shape[1] - n_in
    out_code = rows[:, n_in:].astype(np.int64) @ (1 << np.arange(out_bits))
    hard, soft, n = 0.0, 0.0, 0
    for key in (in_code, out_code):
        for k in np.unique(key[valid]):
            sel = key == k
            lp = logp[sel]
            p = np.exp(lp - lp.max())
            p /= p.sum()
            hard += bool(valid[sel][np.argmax(lp)])
            soft += float(p[valid[sel]].sum())
            n += 1
    return hard / n, soft / n


def task_score(model: Rbm, circuit: CircuitFunction) -> float:
    """Validation score: hard query accuracy, soft accuracy as tie-break."""
    hard, soft = query_scores(model, circuit)
    return hard + 1e-3 * soft


def train_block(name: str, seed: int = 0, max_weight: float | None = MAX_WEIGHT) -> tuple[Rbm, Rbm]:
    """Train ``name`` then retrain it under the weight constraint.

    Returns (unconstrained model, constrained model).
    """
    recipe = RECIPES[name]
    circuit = lookup(name)
    data = generate_truth_table(circuit)
    score = lambda m: task_score(m, circuit)
    cfg = TrainConfig(cd_k=5, learning_rate=recipe.learning_rate, batch_size=recipe.batch_size,
                      epochs=recipe.epochs, momentum=0.5, seed=seed, validation=score,
                      validate_every=max(1, recipe.epochs // 20))
    init = init_rbm(len(circuit.labels), recipe.n_hidden, circuit.labels, seed, recipe.init_std)
    first = train(init, data, cfg).model
    if max_weight is None:
        return first, first
    epochs = recipe.retrain_epochs or recipe.epochs
    cfg2 = replace(cfg, max_weight=max_weight, epochs=epochs, seed=seed + 1,
                   validate_every=max(1, epochs // 20))
    clipped = first.replace(weights=np.clip(first.weights, -max_weight, max_weight),
                            visible_bias=np.clip(first.visible_bias, -max_weight, max_weight),
                            hidden_bias=np.clip(first.hidden_bias, -max_weight, max_weight))
    second = train(clipped, data, cfg2).model
    log.info("%s: query scores %s unconstrained, %s constrained", name,
             query_scores(first, circuit), query_scores(second, circuit))
    return first, second


def qat_block(model: Rbm, name: str, total_bits: int, seed: int = 0, epochs: int = 3000) -> Rbm:
    """Quantization-aware retraining towards a ``total_bits`` grid."""
    circuit = lookup(name)
    grid = QuantGrid.for_max_weight(total_bits, MAX_WEIGHT)
    from .quantize import quantize_rbm

    cfg = TrainConfig(cd_k=5, learning_rate=0.05, batch_size=16, epochs=epochs, momentum=0.5,
                      seed=seed, max_weight=MAX_WEIGHT, quant_rate=0.01,
                      quant_lambda_schedule=geometric_lambda_schedule(epochs, 1.0),
                      validation=lambda m: task_score(quantize_rbm(m, grid), circuit),
                      validate_every=max(1, epochs // 30))
    return quant_aware_retrain(model, generate_truth_table(circuit), cfg, grid).model


def retrain_merged(merged: Rbm, spec, library, seed: int = 0, epochs: int = 2000) -> Rbm:
    n_in = len(circuit_inputs(spec))
    data = intermediate_dataset(spec, library, all_bit_vectors(n_in))
    cfg = TrainConfig(cd_k=5, learning_rate=0.05, batch_size=32, epochs=epochs, momentum=0.5,
                      seed=seed, max_weight=MAX_WEIGHT)
    return train(merged, data, cfg).model


def build_all(out_dir: str | os.PathLike | None = None) -> Path:
    """Rebuild every fixture; deterministic for a given numpy version."""
    out = Path(out_dir) if out_dir else fixture_dir()
    out.mkdir(parents=True, exist_ok=True)
    library: dict[str, Rbm] = {}
    for name in RECIPES:
        first, second = train_block(name)
        circuit = lookup(name)
        meta = {"circuit": name, "stage": "constrained", "max_weight": MAX_WEIGHT,
                "valid_mass": valid_mass(second, circuit)}
        save_model(out / f"{name}.json", second, meta)
        save_model(out / f"{name}_float.json", first,
                   {"circuit": name, "stage": "unconstrained", "valid_mass": valid_mass(first, circuit)})
        library[name] = second
    q6 = qat_block(library["mult2"], "mult2", 6)
    save_model(out / "mult2_qat6.json", q6, {"circuit": "mult2", "stage": "qat", "total_bits": 6})
    for bits, src in ((8, library["mult2"]), (6, q6)):
        grid = QuantGrid.for_max_weight(bits, MAX_WEIGHT)
        fx = quantize_model(src, grid, LutConfig(grid.frac_bits, 16), seed=FIXED_SEED,
                            source=f"mult2 {'constrained' if bits == 8 else 'qat6'}")
        save_model(out / f"mult2_fx{bits}.rbm", fx, {"circuit": "mult2", "total_bits": bits})
    spec = multiplier_circuit(2)
    (out / "mult4_circuit.txt").write_text(
        "# 4x4 multiplier from four 2x2 multipliers and an adder tree\n" + spec.to_text())
    merged = compose(spec, library)
    meta = {"circuit": "mult4", "consts": dict(spec.consts)}
    save_model(out / "mult4_merged.json", merged, {**meta, "stage": "merged"})
    retrained = retrain_merged(merged, spec, library)
    save_model(out / "mult4_retrained.json", retrained, {**meta, "stage": "retrained"})
    write_sat_example(out)
    write_golden_trace(out)
    return out


GOLDEN_SAMPLES = 10_000

# small satisfiable 3SAT example (literals are 1-based, negative = negated)
SAT_EXAMPLE = ((1, 2, -3), (-1, 3, 4), (2, -3, -4), (-2, 3, 4))
SAT_VARS = 4


def write_sat_example(out: Path) -> Path:
    from .merge import sat_circuit

    path = out / "sat_example.txt"
    clauses = " ".join("(" + " ".join(map(str, c)) + ")" for c in SAT_EXAMPLE)
    path.write_text(f"# 3SAT circuit for {clauses}\n" + sat_circuit(SAT_EXAMPLE, SAT_VARS).to_text())
    return path



def write_golden_trace(out: Path) -> Path:
    from .fixsim import run
    from .modelio import write_stream

    fx = load_model(out / "mult2_fx8.rbm")
    samples = run(fx, None, GOLDEN_SAMPLES)
    return write_stream(out / "mult2_fx8_golden.bin", samples, seed=fx.master_seed)


def load_fixture(name: str, with_metadata: bool = False):
    """Load ``name`` (with or without suffix) from the fixture directory."""
    base = fixture_dir()
    for cand in (base / name, base / f"{name}.json", base / f"{name}.rbm"):
        if cand.is_file():
            return load_model(cand, with_metadata)
    raise FileNotFoundError(f"no fixture named {name!r} in {base}")


def load_library(names=None) -> dict[str, Rbm]:
    names = names or list(RECIPES)
    return {n: load_fixture(n) for n in names}


def load_circuit(name: str):
    return parse_circuit((fixture_dir() / f"{name}.txt").read_text())


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    print(build_all())
