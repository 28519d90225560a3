"""Solve 4-variable 3SAT formulas with composed gate blocks.

The bundled example is loose (most assignments satisfy it); the second
formula has a single satisfying assignment.
"""

from rbmsolve.circuits import sat_clause_value, to_bits
from rbmsolve.fixtures import SAT_EXAMPLE, SAT_VARS, load_library
from rbmsolve.merge import compose, sat_circuit
from rbmsolve.tasks import AnswerCodec, encode, instance_predicate, sat_instance, verify_early_stop


TIGHT = ((-1, -4, 2), (-2, 4, -3), (1, -3, -4), (-1, -4, -2), (3, 1, -2),
         (3, -1, 2), (3, -2, 4), (2, 4, 1), (-3, 2, -1))


def solve(clauses, n_vars):
    spec = sat_circuit(clauses, n_vars)
    model = compose(spec, load_library(["not", "or3", "and"]))
    inst = sat_instance(clauses, n_vars)
    print(f"\nformula {clauses}: {len(inst.expected)} of {2 ** n_vars} assignments satisfy it")
    print(f"network: {model.n_visible} visible x {model.n_hidden} hidden")
    labels = model.visible_labels
    pred = instance_predicate(inst, labels)
    codec = AnswerCodec(inst, labels)
    for seed in range(5):
        res = verify_early_stop(model, encode(inst, labels, dict(spec.consts)),
                                lambda v: bool(pred(v)), 10_000, seed=seed)
        (x,) = codec.answer(int(codec.code(res.answer)))
        bits = to_bits(x, n_vars)
        print(f"seed {seed}: x1..x{n_vars} = {bits.tolist()} after {res.samples_used} samples, "
              f"satisfies: {sat_clause_value(clauses, bits)}")


def main():
    solve(SAT_EXAMPLE, SAT_VARS)
    solve(TIGHT, 4)


if __name__ == "__main__":
    main()
