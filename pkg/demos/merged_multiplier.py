"""Compose a 4x4 multiplier from trained blocks and factor 143.

Shows the dimension bookkeeping of the composition, then compares the
merged-only and retrained models on one product with verified early stopping.
"""

from rbmsolve.fixtures import load_fixture
from rbmsolve.fixtures import load_circuit, load_library
from rbmsolve.merge import compose
from rbmsolve.tasks import AnswerCodec, encode, factor_instance, instance_predicate, verify_early_stop

PRODUCT = 143  # 11 x 13


def main():
    spec = load_circuit("mult4_circuit")
    library = load_library(["mult2", "add4", "add2"])
    merged = compose(spec, library)
    parts = [library[b.kind] for b in spec.blocks]
    n_sum = sum(m.n_visible for m in parts)
    print(f"{len(parts)} blocks, {n_sum} block visible units, {n_sum - merged.n_visible} merged away")
    print(f"composed model: {merged.n_visible} visible x {merged.n_hidden} hidden")

    inst = factor_instance(PRODUCT, 4)
    consts = dict(spec.consts)
    for stage in ("merged", "retrained"):
        model = load_fixture(f"mult4_{stage}")
        labels = model.visible_labels
        pred = instance_predicate(inst, labels)
        codec = AnswerCodec(inst, labels)
        for seed in range(3):
            res = verify_early_stop(model, encode(inst, labels, consts), lambda v: bool(pred(v)),
                                    50_000, seed=seed)
            answer = codec.answer(int(codec.code(res.answer)))
            status = "verified" if res.verified else "fallback (unverified)"
            print(f"{stage:9s} seed {seed}: {answer} after {res.samples_used} samples, {status}")


if __name__ == "__main__":
    main()
