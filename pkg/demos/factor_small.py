"""Factor every 4-bit product with the 2x2 multiplier block.

Runs the float sampler and the bit-exact fixed-point engine on the same
clamps and prints the decoded answer histogram for each product.
"""

import numpy as np

from rbmsolve.fixtures import load_fixture
from rbmsolve.fixsim import run
from rbmsolve.sampler import sample_chain
from rbmsolve.tasks import AnswerCodec, RunStats, decode_mode, encode, factor_instance, valid_products

N_SAMPLES = 5000


def top_answers(stats: RunStats, codec: AnswerCodec, k: int = 3):
    order = np.argsort(-stats.counts, kind="stable")[:k]
    return ", ".join(f"{codec.answer(c)}:{stats.counts[c] / stats.total:.2f}" for c in order)


def main():
    model = load_fixture("mult2")
    fixed = load_fixture("mult2_fx8")
    for p in valid_products(2):
        inst = factor_instance(p, 2)
        clamps = encode(inst, model.visible_labels)
        codec = AnswerCodec(inst, model.visible_labels)
        for name, samples in (("float", sample_chain(model, clamps, N_SAMPLES, seed=p)),
                              ("fixed", run(fixed, clamps, N_SAMPLES))):
            stats = RunStats.from_samples(samples, codec)
            answer = codec.answer(decode_mode(stats, model))
            mark = "ok" if inst.is_correct(answer) else "WRONG"
            print(f"p={p} {name:5s} mode={answer} {mark}  top: {top_answers(stats, codec)}")


if __name__ == "__main__":
    main()
