"""p_correct curves of the 2x2 multiplier at float, 8-bit and 6-bit precision.

The 6-bit model went through quantization-aware retraining; plain rounding
of the float model to 6 bits is shown alongside for contrast.
"""

from rbmsolve.fixtures import load_fixture
from rbmsolve.quantize import LutConfig, QuantGrid, quantize_model
from rbmsolve.tasks import factor_instance, run_instances, valid_products

CHECKPOINTS = [10, 30, 100, 300, 1000]


def main():
    insts = [factor_instance(p, 2) for p in valid_products(2) for _ in range(40)]
    float_model = load_fixture("mult2")
    g6 = QuantGrid.for_max_weight(6, 4.0)
    models = {
        "float": (float_model, "float"),
        "8-bit": (load_fixture("mult2_fx8"), "fixed"),
        "6-bit qat": (load_fixture("mult2_fx6"), "fixed"),
        "6-bit rounded": (quantize_model(float_model, g6, LutConfig(g6.frac_bits), seed=2021), "fixed"),
    }
    print("model         " + "".join(f"{k:>8d}" for k in CHECKPOINTS))
    for name, (model, engine) in models.items():
        curve = run_instances(model, insts, max(CHECKPOINTS), CHECKPOINTS, engine, seed=1).p_correct()
        print(f"{name:14s}" + "".join(f"{curve[k]:8.3f}" for k in CHECKPOINTS))


if __name__ == "__main__":
    main()
